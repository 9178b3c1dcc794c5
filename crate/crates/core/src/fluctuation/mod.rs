//! Restricted energy differences between periodic and antiperiodic ground
//! states, and the disorder experiments built on them.
//!
//! Sample `i` of every experiment draws its couplings from
//! `SeedSpec::new(master, i, Couplings)` (with the torus size as substream
//! where several sizes are involved), so outputs depend only on the seed and
//! the geometry. Loops run on the current rayon pool and are collected in
//! index order.

use std::collections::BTreeMap;
use std::sync::Arc;

use rayon::prelude::*;

use crate::disorder::{CouplingField, CouplingSource, Purpose, SeedSpec};
use crate::energy::{hamiltonian, SpinConfiguration, ENERGY_TOLERANCE};
use crate::error::{Error, Result};
use crate::lattice::{
    build_torus, default_seam_offset, make_seam, make_window, partition_blocks, BlockPartition,
    EdgeId, Seam, Shift, TorusLattice, Translate, Window,
};
use crate::solver::{GroundStateSolver, TiePolicy};
use crate::stats;

/// `H_W(sigma) - H_W(sigma')` over the interior edges of `w`.
pub fn g_lambda(
    j: &CouplingField,
    sigma: &SpinConfiguration,
    sigma_prime: &SpinConfiguration,
    w: &Window,
) -> f64 {
    let edges = w.interior_edges().iter().copied();
    hamiltonian(j, sigma, edges.clone()) - hamiltonian(j, sigma_prime, edges)
}

/// Periodic and antiperiodic ground states on an `M`-torus, observed
/// through a window the seam stays clear of.
#[derive(Clone, Debug)]
pub struct MetastateProxyPair {
    lattice: Arc<TorusLattice>,
    window: Window,
    seam: Seam,
}

impl MetastateProxyPair {
    pub fn new(lattice: Arc<TorusLattice>, window: Window, seam: Seam) -> Result<Self> {
        if !seam.clear_of(&window) {
            return Err(Error::Geometry(format!(
                "seam (axis {}, offset {}) touches the window or its boundary",
                seam.axis, seam.offset
            )));
        }
        Ok(MetastateProxyPair {
            lattice,
            window,
            seam,
        })
    }

    /// Square window at the origin with an axis-0 seam in the middle of the
    /// remaining gap.
    pub fn standard(dim: usize, m: usize, window_side: usize) -> Result<Self> {
        let lat = Arc::new(build_torus(m, dim)?);
        let window = make_window(&lat, window_side, 0)?;
        let seam = make_seam(&lat, 0, default_seam_offset(m, window_side)?)?;
        Self::new(lat, window, seam)
    }

    pub fn lattice(&self) -> &Arc<TorusLattice> {
        &self.lattice
    }

    pub fn size(&self) -> usize {
        self.lattice.side()
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn seam(&self) -> &Seam {
        &self.seam
    }

    /// `sum |J_e|` over the window boundary.
    pub fn boundary_sum(&self, j: &CouplingField) -> f64 {
        j.abs_sum(self.window.boundary_edges())
    }

    pub fn sample(
        &self,
        source: &dyn CouplingSource,
        solver: &dyn GroundStateSolver,
        seed: SeedSpec,
        tie: TiePolicy,
    ) -> Result<FluctuationSample> {
        let j = source.draw(&self.lattice, seed);
        self.evaluate(solver, j, seed, tie)
    }

    /// Both proxies for a given field.
    pub fn evaluate(
        &self,
        solver: &dyn GroundStateSolver,
        j: CouplingField,
        seed: SeedSpec,
        tie: TiePolicy,
    ) -> Result<FluctuationSample> {
        let (p, ap) = solver.solve_boundary_pair(&j, &self.seam, tie)?;
        let g = g_lambda(&j, &p.spins, &ap.spins, &self.window);
        let boundary_sum = self.boundary_sum(&j);
        Ok(FluctuationSample {
            seed,
            couplings: j,
            sigma: p.spins,
            sigma_prime: ap.spins,
            g,
            boundary_sum,
        })
    }
}

impl Translate for MetastateProxyPair {
    fn translated(&self, lat: &TorusLattice, t: Shift) -> Self {
        MetastateProxyPair {
            lattice: self.lattice.clone(),
            window: self.window.translated(lat, t),
            seam: self.seam.translated(lat, t),
        }
    }
}

#[derive(Clone, Debug)]
pub struct FluctuationSample {
    pub seed: SeedSpec,
    pub couplings: CouplingField,
    pub sigma: SpinConfiguration,
    pub sigma_prime: SpinConfiguration,
    pub g: f64,
    pub boundary_sum: f64,
}

impl FluctuationSample {
    /// `4 sum_{dW} |J_e|`.
    pub fn bound(&self) -> f64 {
        4.0 * self.boundary_sum
    }

    /// `2 sum_{dW} |J_e|`, which seam clearance already guarantees.
    pub fn tight_bound(&self) -> f64 {
        2.0 * self.boundary_sum
    }

    pub fn within_bound(&self) -> bool {
        self.g.abs() <= self.bound() + ENERGY_TOLERANCE
    }

    /// The same sample with the two proxies exchanged.
    pub fn swapped(&self, w: &Window) -> Self {
        FluctuationSample {
            sigma: self.sigma_prime.clone(),
            sigma_prime: self.sigma.clone(),
            g: g_lambda(&self.couplings, &self.sigma_prime, &self.sigma, w),
            ..self.clone()
        }
    }
}

pub fn couplings_seed(master: u64, index: usize) -> SeedSpec {
    SeedSpec::new(master, index as u64, Purpose::Couplings)
}

/// `samples` independent fluctuation samples in index order.
pub fn sample_many(
    source: &dyn CouplingSource,
    solver: &dyn GroundStateSolver,
    pair: &MetastateProxyPair,
    samples: usize,
    master: u64,
    tie: TiePolicy,
) -> Result<Vec<FluctuationSample>> {
    (0..samples)
        .into_par_iter()
        .map(|i| pair.sample(source, solver, couplings_seed(master, i), tie))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Incongruence {
    pub samples: usize,
    pub hits: usize,
    pub frequency: f64,
    /// Binomial standard error `sqrt(f (1 - f) / n)`.
    pub se: f64,
}

/// Disorder frequency of `sigma_x sigma_y != sigma'_x sigma'_y` on an
/// interior window edge.
pub fn incongruence_probe(
    source: &dyn CouplingSource,
    solver: &dyn GroundStateSolver,
    pair: &MetastateProxyPair,
    edge: EdgeId,
    samples: usize,
    master: u64,
    tie: TiePolicy,
) -> Result<(Incongruence, Vec<bool>)> {
    if samples == 0 {
        return Err(Error::Config(
            "incongruence probe needs at least one sample".into(),
        ));
    }
    if !pair.window().interior_edges().contains(&edge) {
        return Err(Error::Geometry(format!(
            "probe edge {edge} is not inside the window"
        )));
    }
    let lat = pair.lattice().clone();
    let flags: Vec<bool> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let s = pair.sample(source, solver, couplings_seed(master, i), tie)?;
            Ok(s.sigma.correlation(&lat, edge) != s.sigma_prime.correlation(&lat, edge))
        })
        .collect::<Result<_>>()?;
    let hits = flags.iter().filter(|&&f| f).count();
    let frequency = hits as f64 / samples as f64;
    Ok((
        Incongruence {
            samples,
            hits,
            frequency,
            se: (frequency * (1.0 - frequency) / samples as f64).sqrt(),
        },
        flags,
    ))
}

/// One level `k` of the block filtration.
#[derive(Clone, Debug, PartialEq)]
pub struct MartingaleLevel {
    pub k: usize,
    /// Number of couplings held fixed (those on `E(B_1) .. E(B_k)`).
    pub fixed_edges: usize,
    /// Split-half estimate of `Var(m_k - m_{k-1})`.
    pub increment_var: f64,
    pub increment_se: f64,
    /// Plug-in variance of the full-inner-mean increments; biased upward by
    /// the inner noise.
    pub naive_var: f64,
}

#[derive(Clone, Debug)]
pub struct MartingaleRecord {
    pub partition: BlockPartition,
    pub n_outer: usize,
    pub n_inner: usize,
    pub levels: Vec<MartingaleLevel>,
    pub total_var: f64,
    pub total_se: f64,
    /// Per outer draw: `G` and the inner-mean estimates of `m_1 .. m_N`.
    pub outer: Vec<(f64, Vec<f64>)>,
    /// Mean and standard error of `Var(G) - sum_k Var(increment_k)`,
    /// estimated from per-draw terms so correlations are accounted for.
    pub slack: f64,
    pub combined_se: f64,
}

impl MartingaleRecord {
    pub fn increment_sum(&self) -> f64 {
        self.levels.iter().map(|l| l.increment_var).sum()
    }

    /// `sum_k Var(increment_k) <= Var(G)` within three combined standard
    /// errors.
    pub fn holds(&self) -> bool {
        self.slack >= -3.0 * self.combined_se
    }
}

struct OuterDraw {
    g: f64,
    // per level: inner means over the two halves and over all resamples
    half_a: Vec<f64>,
    half_b: Vec<f64>,
    full: Vec<f64>,
}

/// Nested Monte Carlo estimate of the block-filtration martingale of `G`.
///
/// For outer draw `i` and level `k`, `m_k` is estimated from `n_inner`
/// redraws of every coupling outside `E(B_1) .. E(B_k)`. The inner
/// resamples are split in two halves; the covariance across outer draws of
/// the two halves' increments is unbiased for the increment variance.
#[allow(clippy::too_many_arguments)]
pub fn martingale_decomposition(
    source: &dyn CouplingSource,
    solver: &dyn GroundStateSolver,
    pair: &MetastateProxyPair,
    block_side: usize,
    n_outer: usize,
    n_inner: usize,
    master: u64,
    tie: TiePolicy,
) -> Result<MartingaleRecord> {
    if n_outer < 2 || n_inner < 2 {
        return Err(Error::Config(format!(
            "n_outer = {n_outer} and n_inner = {n_inner} must both be at least 2"
        )));
    }
    let lat = pair.lattice().clone();
    let partition = partition_blocks(&lat, pair.window(), block_side)?;
    let levels = partition.blocks.len();
    let fixed: Vec<Vec<EdgeId>> = (1..=levels)
        .map(|k| {
            partition.blocks[..k]
                .iter()
                .flat_map(|b| b.interior_edges().iter().copied())
                .collect()
        })
        .collect();
    let half = n_inner / 2;

    let draws: Vec<OuterDraw> = (0..n_outer)
        .into_par_iter()
        .map(|i| {
            let seed = couplings_seed(master, i);
            let j = source.draw(&lat, seed);
            let g = pair.evaluate(solver, j.clone(), seed, tie)?.g;
            let mut draw = OuterDraw {
                g,
                half_a: Vec::with_capacity(levels),
                half_b: Vec::with_capacity(levels),
                full: Vec::with_capacity(levels),
            };
            for (k, fixed_k) in fixed.iter().enumerate() {
                let inner: Vec<f64> = (0..n_inner)
                    .into_par_iter()
                    .map(|r| {
                        let s = SeedSpec::new(master, i as u64, Purpose::Resample)
                            .with_substream((k * n_inner + r) as u64);
                        let jr = source.redraw_outside(&j, fixed_k, s);
                        Ok(pair.evaluate(solver, jr, s, tie)?.g)
                    })
                    .collect::<Result<_>>()?;
                draw.half_a.push(stats::mean(&inner[..half]));
                draw.half_b.push(stats::mean(&inner[half..]));
                draw.full.push(stats::mean(&inner));
            }
            Ok(draw)
        })
        .collect::<Result<_>>()?;

    let gs: Vec<f64> = draws.iter().map(|d| d.g).collect();
    let total_terms = stats::covariance_terms(&gs, &gs);
    let mut slack_terms = total_terms.clone();
    let increments = |pick: fn(&OuterDraw) -> &Vec<f64>, k: usize| -> Vec<f64> {
        draws
            .iter()
            .map(|d| {
                let m = pick(d);
                // m_0 is a constant and drops out of every covariance
                if k == 0 {
                    m[0]
                } else {
                    m[k] - m[k - 1]
                }
            })
            .collect()
    };
    let mut out_levels = Vec::with_capacity(levels);
    for k in 0..levels {
        let a = increments(|d| &d.half_a, k);
        let b = increments(|d| &d.half_b, k);
        let full = increments(|d| &d.full, k);
        let terms = stats::covariance_terms(&a, &b);
        for (s, t) in slack_terms.iter_mut().zip(&terms) {
            *s -= t;
        }
        out_levels.push(MartingaleLevel {
            k: k + 1,
            fixed_edges: fixed[k].len(),
            increment_var: stats::mean(&terms),
            increment_se: stats::std_err(&terms),
            naive_var: stats::variance(&full),
        });
    }
    Ok(MartingaleRecord {
        partition,
        n_outer,
        n_inner,
        levels: out_levels,
        total_var: stats::mean(&total_terms),
        total_se: stats::std_err(&total_terms),
        outer: draws.into_iter().map(|d| (d.g, d.full)).collect(),
        slack: stats::mean(&slack_terms),
        combined_se: stats::std_err(&slack_terms),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct VarianceRow {
    pub window_side: usize,
    pub torus_size: usize,
    pub area: usize,
    pub samples: usize,
    pub mean: f64,
    pub var: f64,
    pub se: f64,
}

#[derive(Clone, Debug)]
pub struct VarianceScan {
    pub rows: Vec<VarianceRow>,
    /// Fit of `ln Var = a + exponent * ln |W|`.
    pub fit: Option<stats::LinearFit>,
    /// Window sides whose variance drops below the previous row's by more
    /// than two combined standard errors.
    pub non_monotone: Vec<usize>,
    pub values: Vec<Vec<f64>>,
}

/// `Var(G)` for each window side on a torus of side `torus_factor * side`.
pub fn variance_scan(
    source: &dyn CouplingSource,
    solver: &dyn GroundStateSolver,
    dim: usize,
    window_sides: &[usize],
    torus_factor: usize,
    samples: usize,
    master: u64,
    tie: TiePolicy,
) -> Result<VarianceScan> {
    if samples < 2 {
        return Err(Error::Config(
            "variance scan needs at least two samples per window".into(),
        ));
    }
    let mut rows = Vec::new();
    let mut values = Vec::new();
    for &side in window_sides {
        let m = torus_factor * side;
        let pair = MetastateProxyPair::standard(dim, m, side)?;
        let g: Vec<f64> = (0..samples)
            .into_par_iter()
            .map(|i| {
                let seed = couplings_seed(master, i).with_substream(m as u64);
                Ok(pair.sample(source, solver, seed, tie)?.g)
            })
            .collect::<Result<_>>()?;
        let (var, se) = stats::variance_with_se(&g);
        rows.push(VarianceRow {
            window_side: side,
            torus_size: m,
            area: pair.window().len(),
            samples,
            mean: stats::mean(&g),
            var,
            se,
        });
        values.push(g);
    }

    let usable: Vec<&VarianceRow> = rows.iter().filter(|r| r.var > 0.0 && r.se > 0.0).collect();
    let x: Vec<f64> = usable.iter().map(|r| (r.area as f64).ln()).collect();
    let y: Vec<f64> = usable.iter().map(|r| r.var.ln()).collect();
    // delta method: sd(ln Var) ~ se / Var
    let w: Vec<f64> = usable.iter().map(|r| (r.var / r.se).powi(2)).collect();
    let fit = stats::weighted_fit(&x, &y, &w);
    let non_monotone = rows
        .windows(2)
        .filter(|p| p[1].var + 2.0 * p[0].se.hypot(p[1].se) < p[0].var)
        .map(|p| p[1].window_side)
        .collect();
    Ok(VarianceScan {
        rows,
        fit,
        non_monotone,
        values,
    })
}

pub const MAX_MGF_T: f64 = 2.0;

#[derive(Clone, Debug, PartialEq)]
pub struct MgfRow {
    pub t: f64,
    pub log_mgf: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// `log_mgf - t * mean`, non-negative by Jensen.
    pub jensen_gap: f64,
}

#[derive(Clone, Debug)]
pub struct MgfTable {
    pub rows: Vec<MgfRow>,
    pub mean: f64,
    /// Normalized values `X_i` the curve is computed from.
    pub values: Vec<f64>,
}

/// `ln (1/n) sum_i exp(t x_i)`.
pub fn empirical_log_mgf(x: &[f64], t: f64) -> f64 {
    let v: Vec<f64> = x.iter().map(|&xi| t * xi).collect();
    stats::log_sum_exp(&v) - (x.len() as f64).ln()
}

impl MgfTable {
    /// Slopes between consecutive grid points never decrease.
    pub fn is_convex(&self) -> bool {
        let mut pts: Vec<(f64, f64)> = self.rows.iter().map(|r| (r.t, r.log_mgf)).collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        pts.dedup_by(|a, b| a.0 == b.0);
        let slopes: Vec<f64> = pts
            .windows(2)
            .map(|p| (p[1].1 - p[0].1) / (p[1].0 - p[0].0))
            .collect();
        slopes
            .windows(2)
            .all(|s| s[1] >= s[0] - 1e-9 * (1.0 + s[0].abs()))
    }

    pub fn satisfies_jensen(&self) -> bool {
        self.rows
            .iter()
            .all(|r| r.jensen_gap >= -1e-12 * (1.0 + (r.t * self.mean).abs()))
    }
}

/// Empirical log-MGF of `X = G / |dW|` on a grid of `t`. With `n_inner > 0`
/// each `X_i` is replaced by its conditional mean given the couplings on
/// `E(W)`, estimated from `n_inner` redraws outside the window.
#[allow(clippy::too_many_arguments)]
pub fn mgf_estimate(
    source: &dyn CouplingSource,
    solver: &dyn GroundStateSolver,
    pair: &MetastateProxyPair,
    t_grid: &[f64],
    samples: usize,
    n_inner: usize,
    bootstrap: usize,
    master: u64,
    tie: TiePolicy,
) -> Result<MgfTable> {
    if let Some(t) = t_grid
        .iter()
        .find(|t| !t.is_finite() || t.abs() > MAX_MGF_T)
    {
        return Err(Error::Config(format!(
            "t = {t} outside [-{MAX_MGF_T}, {MAX_MGF_T}]"
        )));
    }
    if samples == 0 {
        return Err(Error::Config(
            "mgf estimate needs at least one sample".into(),
        ));
    }
    let norm = pair.window().boundary_edges().len() as f64;
    let fixed = pair.window().interior_edges().to_vec();
    let lat = pair.lattice().clone();
    let values: Vec<f64> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let seed = couplings_seed(master, i);
            let j = source.draw(&lat, seed);
            if n_inner == 0 {
                return Ok(pair.evaluate(solver, j, seed, tie)?.g / norm);
            }
            let inner: Vec<f64> = (0..n_inner)
                .into_par_iter()
                .map(|r| {
                    let s =
                        SeedSpec::new(master, i as u64, Purpose::Resample).with_substream(r as u64);
                    Ok(pair
                        .evaluate(solver, source.redraw_outside(&j, &fixed, s), s, tie)?
                        .g)
                })
                .collect::<Result<_>>()?;
            Ok(stats::mean(&inner) / norm)
        })
        .collect::<Result<_>>()?;

    let mean = stats::mean(&values);
    let mut rows = Vec::with_capacity(t_grid.len());
    for (idx, &t) in t_grid.iter().enumerate() {
        let log_mgf = empirical_log_mgf(&values, t);
        if !log_mgf.is_finite() {
            return Err(Error::Invariant(format!("log-MGF overflow at t = {t}")));
        }
        let (ci_low, ci_high) = if bootstrap > 0 {
            let seed = SeedSpec::new(master, idx as u64, Purpose::Bootstrap);
            stats::bootstrap_ci(&values, bootstrap, seed, |x| empirical_log_mgf(x, t))
        } else {
            (f64::NAN, f64::NAN)
        };
        rows.push(MgfRow {
            t,
            log_mgf,
            ci_low,
            ci_high,
            jensen_gap: log_mgf - t * mean,
        });
    }
    Ok(MgfTable { rows, mean, values })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SizeHistogram {
    pub torus_size: usize,
    pub samples: usize,
    /// Pattern (`+`/`-` in window order, first site `+`) to count.
    pub counts: BTreeMap<String, usize>,
}

impl SizeHistogram {
    pub fn frequency(&self, pattern: &str) -> f64 {
        self.counts.get(pattern).copied().unwrap_or(0) as f64 / self.samples as f64
    }

    pub fn total_variation(&self, other: &SizeHistogram) -> f64 {
        let keys: std::collections::BTreeSet<&String> =
            self.counts.keys().chain(other.counts.keys()).collect();
        0.5 * keys
            .into_iter()
            .map(|k| (self.frequency(k) - other.frequency(k)).abs())
            .sum::<f64>()
    }
}

#[derive(Clone, Debug)]
pub struct WeightHistogram {
    pub sizes: Vec<SizeHistogram>,
    /// Total-variation distance between consecutive sizes.
    pub tv: Vec<f64>,
}

pub fn window_pattern(sigma: &SpinConfiguration, w: &Window) -> String {
    let eta = sigma.restrict(w.sites());
    let sign = eta[0];
    eta.iter()
        .map(|&v| if v * sign == 1 { '+' } else { '-' })
        .collect()
}

/// Frequencies of gauge-anchored window patterns of the periodic ground
/// state across disorder, one histogram per torus size.
#[allow(clippy::too_many_arguments)]
pub fn weight_histogram(
    source: &dyn CouplingSource,
    solver: &dyn GroundStateSolver,
    dim: usize,
    window_side: usize,
    sizes: &[usize],
    samples: usize,
    master: u64,
    tie: TiePolicy,
) -> Result<WeightHistogram> {
    if samples == 0 {
        return Err(Error::Config(
            "weight histogram needs at least one sample".into(),
        ));
    }
    let mut out = Vec::new();
    for &m in sizes {
        let lat = Arc::new(build_torus(m, dim)?);
        let w = make_window(&lat, window_side, 0)?;
        let patterns: Vec<String> = (0..samples)
            .into_par_iter()
            .map(|i| {
                let seed = couplings_seed(master, i).with_substream(m as u64);
                let gs = solver.solve(&source.draw(&lat, seed), tie)?;
                Ok(window_pattern(&gs.spins, &w))
            })
            .collect::<Result<_>>()?;
        let mut counts = BTreeMap::new();
        for p in patterns {
            *counts.entry(p).or_insert(0) += 1;
        }
        out.push(SizeHistogram {
            torus_size: m,
            samples,
            counts,
        });
    }
    let tv = out
        .windows(2)
        .map(|p| p[0].total_variation(&p[1]))
        .collect();
    Ok(WeightHistogram { sizes: out, tv })
}

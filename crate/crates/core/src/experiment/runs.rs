use std::fs::File;
use std::io::BufReader;
use std::sync::Arc;

use rayon::prelude::*;
use serde_json::json;

use super::{cell, Context, Experiment, Report, RunConfig, Table};
use crate::disorder::{read_couplings, CouplingField, Purpose, SeedSpec};
use crate::energy::{SpinConfiguration, ENERGY_TOLERANCE};
use crate::error::{Error, Result};
use crate::excitation::{build_excitation_table, critical_scan, sandwich_check, BlockPerturbation};
use crate::fluctuation::{
    couplings_seed, martingale_decomposition, mgf_estimate, sample_many, variance_scan,
    weight_histogram, MetastateProxyPair,
};
use crate::lattice::{
    build_torus, default_seam_offset, make_seam, EdgeId, SiteId, TorusLattice, Window,
};
use crate::solver::{Exhaustive, GroundStateSolver, TransferMatrix};

fn spin_string(s: &SpinConfiguration) -> String {
    s.spins()
        .iter()
        .map(|&v| if v == 1 { '+' } else { '-' })
        .collect()
}

fn jsonl(lines: Vec<serde_json::Value>) -> Vec<u8> {
    let mut out = Vec::new();
    for l in lines {
        out.extend(l.to_string().into_bytes());
        out.push(b'\n');
    }
    out
}

fn lattice(cfg: &RunConfig, side: usize) -> Result<Arc<TorusLattice>> {
    Ok(Arc::new(build_torus(side, cfg.dimension)?))
}

/// Couplings of instance `i`: from the couplings file when one is given,
/// otherwise drawn from the configured source.
fn instance(
    cfg: &RunConfig,
    ctx: &Context,
    lat: &Arc<TorusLattice>,
    i: usize,
) -> Result<CouplingField> {
    match &cfg.couplings_file {
        Some(p) if cfg.instances == 1 => read_couplings(BufReader::new(File::open(p)?), lat),
        Some(_) => Err(Error::Config(
            "couplings_file requires instances = 1".into(),
        )),
        None => Ok(ctx.source.draw(lat, couplings_seed(cfg.seed, i))),
    }
}

fn edge_at(lat: &TorusLattice, e: [usize; 3]) -> Result<EdgeId> {
    let [r, c, axis] = e;
    if axis >= lat.dim() {
        return Err(Error::Config(format!(
            "edge axis {axis} invalid for dimension {}",
            lat.dim()
        )));
    }
    Ok(lat.edge_id(lat.site_from_row_col(r, c)?, axis))
}

fn block_sites(cfg: &RunConfig, lat: &TorusLattice) -> Result<Vec<SiteId>> {
    Ok(Window::rect(lat, cfg.block_corner, cfg.block_extent)?
        .sites()
        .to_vec())
}

/// Window of side `cfg.window` at `cfg.window_corner`, seam by default on
/// axis 0 in the middle of the gap after the window.
fn proxy_pair(cfg: &RunConfig) -> Result<MetastateProxyPair> {
    let lat = lattice(cfg, cfg.size)?;
    let extent = if cfg.dimension == 2 {
        [cfg.window, cfg.window]
    } else {
        [cfg.window, 1]
    };
    let window = Window::rect(&lat, cfg.window_corner, extent)?;
    let axis = cfg.seam_axis.unwrap_or(0);
    if axis >= cfg.dimension {
        return Err(Error::Config(format!(
            "seam axis {axis} invalid for dimension {}",
            cfg.dimension
        )));
    }
    let offset = match cfg.seam_offset {
        Some(o) => o,
        None => (cfg.window_corner[axis] + default_seam_offset(cfg.size, cfg.window)?) % cfg.size,
    };
    let seam = make_seam(&lat, axis, offset)?;
    MetastateProxyPair::new(lat, window, seam)
}

pub struct GroundStates;

impl Experiment for GroundStates {
    fn name(&self) -> &'static str {
        "gs"
    }

    fn run(&self, cfg: &RunConfig, ctx: &Context) -> Result<Report> {
        let lat = lattice(cfg, cfg.size)?;
        let results: Vec<_> = (0..cfg.instances)
            .into_par_iter()
            .map(|i| {
                let j = instance(cfg, ctx, &lat, i)?;
                let gs = ctx.solver.solve(&j, cfg.tie)?;
                Ok((j, gs))
            })
            .collect::<Result<_>>()?;
        let mut t = Table::new("gs", &["instance", "energy", "magnetization", "spins"]);
        let mut dump = Vec::new();
        for (i, (j, gs)) in results.iter().enumerate() {
            let m: i64 = gs.spins.spins().iter().map(|&v| i64::from(v)).sum();
            t.push(vec![
                cell(i),
                cell(gs.energy),
                cell(m),
                spin_string(&gs.spins),
            ]);
            dump.push(json!({"instance": i, "energy": gs.energy, "couplings": j.values()}));
        }
        let mut report = Report {
            summary: vec![format!(
                "{} ground states on L = {}",
                results.len(),
                cfg.size
            )],
            tables: vec![t],
            ..Report::default()
        };
        if cfg.dump_samples {
            report.attachments.push(("gs.jsonl".into(), jsonl(dump)));
        }
        Ok(report)
    }
}

pub struct Excite;

impl Experiment for Excite {
    fn name(&self) -> &'static str {
        "excite"
    }

    fn run(&self, cfg: &RunConfig, ctx: &Context) -> Result<Report> {
        let lat = lattice(cfg, cfg.size)?;
        let block = block_sites(cfg, &lat)?;
        let mut report = Report::default();
        let mut rows = Table::new(
            "excite",
            &[
                "instance",
                "code",
                "eta",
                "energy",
                "delta_to_selected",
                "selected",
            ],
        );
        let mut bounds = Table::new(
            "excite_bounds",
            &[
                "instance",
                "magnitude_bound",
                "max_abs_delta",
                "literal_bound_violations",
            ],
        );
        for i in 0..cfg.instances {
            let j = instance(cfg, ctx, &lat, i)?;
            let table = build_excitation_table(&*ctx.solver, &j, &block, cfg.tie)?;
            if let Err(e) = table.check_invariants(&j) {
                report.violations.push(format!("instance {i}: {e}"));
            }
            let sel = table.select_ground()?;
            let gs = ctx.solver.solve(&j, cfg.tie)?;
            if table.state(sel) != &gs.spins {
                report.violations.push(format!(
                    "instance {i}: selected state differs from the ground state"
                ));
            }
            for code in 0..table.rows() {
                let eta: String = table
                    .eta(code)
                    .iter()
                    .map(|&v| if v == 1 { '+' } else { '-' })
                    .collect();
                rows.push(vec![
                    cell(i),
                    cell(code),
                    eta,
                    cell(table.energy(code)),
                    cell(table.delta(code, sel)),
                    cell(code == sel),
                ]);
            }
            let max_delta = (0..table.rows())
                .map(|c| table.delta(c, sel).abs())
                .fold(0.0, f64::max);
            bounds.push(vec![
                cell(i),
                cell(table.magnitude_bound(&j)),
                cell(max_delta),
                cell(table.interior_bound_violations(&j).len()),
            ]);
            let header = vec![
                ("instance".to_string(), i.to_string()),
                (
                    "couplings".to_string(),
                    format!("{} seed {} stream {i}", ctx.source.describe(), cfg.seed),
                ),
            ];
            let mut text = Vec::new();
            table.export(&mut text, &lat, &header)?;
            report.attachments.push((format!("excite_{i}.txt"), text));
        }
        report.summary.push(format!(
            "{} tables of {} patterns",
            cfg.instances,
            1usize << block.len()
        ));
        report.tables = vec![rows, bounds];
        Ok(report)
    }
}

pub struct ScanEdge;

impl Experiment for ScanEdge {
    fn name(&self) -> &'static str {
        "scan-edge"
    }

    fn run(&self, cfg: &RunConfig, ctx: &Context) -> Result<Report> {
        let lat = lattice(cfg, cfg.size)?;
        let edge = edge_at(
            &lat,
            cfg.edge
                .ok_or_else(|| Error::Config("scan-edge needs `edge`".into()))?,
        )?;
        let interval = (cfg.interval[0], cfg.interval[1]);
        let mut report = Report::default();
        let mut grid = Table::new("scan", &["instance", "coupling", "energy", "correlation"]);
        let mut points = Table::new(
            "breakpoints",
            &[
                "instance",
                "breakpoint",
                "breakpoint_exact",
                "left_slope",
                "right_slope",
            ],
        );
        let mut sandwich = Table::new(
            "sandwich",
            &[
                "instance",
                "epsilon",
                "difference",
                "lower",
                "upper",
                "corr_before",
                "corr_after",
                "holds",
            ],
        );
        let block = block_sites(cfg, &lat)?;
        let scans: Vec<_> = (0..cfg.instances)
            .into_par_iter()
            .map(|i| {
                let j = instance(cfg, ctx, &lat, i)?;
                let scan =
                    critical_scan(&*ctx.solver, &j, edge, interval, cfg.resolution, cfg.tie)?;
                let checks = cfg
                    .epsilons
                    .iter()
                    .map(|&eps| sandwich_check(&*ctx.solver, &j, &block, edge, eps, cfg.tie))
                    .collect::<Result<Vec<_>>>()?;
                Ok((scan, checks))
            })
            .collect::<Result<_>>()?;
        let opt = |v: Option<f64>| v.map_or_else(String::new, cell);
        for (i, (scan, checks)) in scans.iter().enumerate() {
            for &(v, e, c) in &scan.grid {
                grid.push(vec![cell(i), cell(v), cell(e), cell(c)]);
            }
            points.push(vec![
                cell(i),
                opt(scan.breakpoint),
                opt(scan.breakpoint_exact),
                cell(scan.left_slope),
                cell(scan.right_slope),
            ]);
            for s in checks {
                if !s.holds() {
                    report.violations.push(format!(
                        "instance {i}: sandwich fails at epsilon {}",
                        s.epsilon
                    ));
                }
                sandwich.push(vec![
                    cell(i),
                    cell(s.epsilon),
                    cell(s.difference),
                    cell(s.lower()),
                    cell(s.upper()),
                    cell(s.corr_before),
                    cell(s.corr_after),
                    cell(s.holds()),
                ]);
            }
        }
        let found = scans.iter().filter(|(s, _)| s.breakpoint.is_some()).count();
        report.summary.push(format!(
            "{found}/{} scans cross a breakpoint",
            cfg.instances
        ));
        report.tables = vec![grid, points];
        if !cfg.epsilons.is_empty() {
            report.tables.push(sandwich);
        }
        Ok(report)
    }
}

pub struct Fluct;

impl Experiment for Fluct {
    fn name(&self) -> &'static str {
        "fluct"
    }

    fn run(&self, cfg: &RunConfig, ctx: &Context) -> Result<Report> {
        let pair = proxy_pair(cfg)?;
        let samples = sample_many(
            &*ctx.source,
            &*ctx.solver,
            &pair,
            cfg.samples,
            cfg.seed,
            cfg.tie,
        )?;
        let mut report = Report::default();
        let mut t = Table::new(
            "fluct",
            &[
                "sample",
                "g",
                "boundary_sum",
                "bound",
                "tight_bound",
                "within_bound",
            ],
        );
        let mut dump = Vec::new();
        for (i, s) in samples.iter().enumerate() {
            if !s.within_bound() {
                report.violations.push(format!(
                    "sample {i}: |G| = {} exceeds {}",
                    s.g.abs(),
                    s.bound()
                ));
            }
            t.push(vec![
                cell(i),
                cell(s.g),
                cell(s.boundary_sum),
                cell(s.bound()),
                cell(s.tight_bound()),
                cell(s.within_bound()),
            ]);
            dump.push(json!({
                "sample": i,
                "g": s.g,
                "boundary_sum": s.boundary_sum,
                "sigma": spin_string(&s.sigma),
                "sigma_prime": spin_string(&s.sigma_prime),
                "couplings": s.couplings.values(),
            }));
        }
        report.tables.push(t);
        if let Some(e) = cfg.probe_edge {
            let lat = pair.lattice();
            let edge = edge_at(lat, e)?;
            if !pair.window().interior_edges().contains(&edge) {
                return Err(Error::Geometry(format!(
                    "probe edge {e:?} is not inside the window"
                )));
            }
            let hits = samples
                .iter()
                .filter(|s| s.sigma.correlation(lat, edge) != s.sigma_prime.correlation(lat, edge))
                .count();
            let n = samples.len() as f64;
            let f = hits as f64 / n;
            let mut inc = Table::new(
                "incongruence",
                &["row", "col", "axis", "samples", "hits", "frequency", "se"],
            );
            inc.push(vec![
                cell(e[0]),
                cell(e[1]),
                cell(e[2]),
                cell(samples.len()),
                cell(hits),
                cell(f),
                cell((f * (1.0 - f) / n).sqrt()),
            ]);
            report.tables.push(inc);
        }
        let within = samples.iter().filter(|s| s.within_bound()).count();
        report.summary.push(format!(
            "boundary bound holds in {within}/{}",
            samples.len()
        ));
        if cfg.dump_samples {
            report.attachments.push(("fluct.jsonl".into(), jsonl(dump)));
        }
        Ok(report)
    }
}

pub struct Martingale;

impl Experiment for Martingale {
    fn name(&self) -> &'static str {
        "martingale"
    }

    fn run(&self, cfg: &RunConfig, ctx: &Context) -> Result<Report> {
        let pair = proxy_pair(cfg)?;
        let rec = martingale_decomposition(
            &*ctx.source,
            &*ctx.solver,
            &pair,
            cfg.block,
            cfg.n_outer,
            cfg.n_inner,
            cfg.seed,
            cfg.tie,
        )?;
        let mut levels = Table::new(
            "martingale",
            &[
                "k",
                "fixed_edges",
                "increment_var",
                "increment_se",
                "naive_var",
            ],
        );
        for l in &rec.levels {
            levels.push(vec![
                cell(l.k),
                cell(l.fixed_edges),
                cell(l.increment_var),
                cell(l.increment_se),
                cell(l.naive_var),
            ]);
        }
        let mut summary = Table::new(
            "martingale_summary",
            &[
                "n_outer",
                "n_inner",
                "blocks",
                "total_var",
                "total_se",
                "increment_sum",
                "slack",
                "combined_se",
                "bias_correction",
                "holds",
            ],
        );
        summary.push(vec![
            cell(rec.n_outer),
            cell(rec.n_inner),
            cell(rec.levels.len()),
            cell(rec.total_var),
            cell(rec.total_se),
            cell(rec.increment_sum()),
            cell(rec.slack),
            cell(rec.combined_se),
            cell("split-half"),
            cell(rec.holds()),
        ]);
        let mut report = Report {
            tables: vec![levels, summary],
            ..Report::default()
        };
        report.summary.push(format!(
            "sum of increment variances {:.6} vs total {:.6} (slack {:.6}, se {:.6})",
            rec.increment_sum(),
            rec.total_var,
            rec.slack,
            rec.combined_se
        ));
        if !rec.holds() {
            report.violations.push(format!(
                "martingale inequality fails: slack {} below -3 x {}",
                rec.slack, rec.combined_se
            ));
        }
        if cfg.dump_samples {
            let lines = rec
                .outer
                .iter()
                .enumerate()
                .map(|(i, (g, m))| json!({"outer": i, "g": g, "conditional_means": m}))
                .collect();
            report
                .attachments
                .push(("martingale.jsonl".into(), jsonl(lines)));
        }
        Ok(report)
    }
}

pub struct Variance;

impl Experiment for Variance {
    fn name(&self) -> &'static str {
        "variance"
    }

    fn run(&self, cfg: &RunConfig, ctx: &Context) -> Result<Report> {
        let scan = variance_scan(
            &*ctx.source,
            &*ctx.solver,
            cfg.dimension,
            &cfg.window_sizes,
            cfg.torus_factor,
            cfg.samples,
            cfg.seed,
            cfg.tie,
        )?;
        let mut rows = Table::new(
            "variance",
            &[
                "window_side",
                "torus_size",
                "area",
                "samples",
                "mean",
                "var",
                "se",
                "non_monotone",
            ],
        );
        for r in &scan.rows {
            rows.push(vec![
                cell(r.window_side),
                cell(r.torus_size),
                cell(r.area),
                cell(r.samples),
                cell(r.mean),
                cell(r.var),
                cell(r.se),
                cell(scan.non_monotone.contains(&r.window_side)),
            ]);
        }
        let mut fit = Table::new(
            "variance_fit",
            &["exponent", "exponent_se", "ci_low", "ci_high", "intercept"],
        );
        let mut report = Report::default();
        match scan.fit {
            Some(f) => {
                fit.push(vec![
                    cell(f.slope),
                    cell(f.slope_se),
                    cell(f.ci_low),
                    cell(f.ci_high),
                    cell(f.intercept),
                ]);
                report.summary.push(format!(
                    "Var ~ |W|^{:.3} (95% CI {:.3} .. {:.3})",
                    f.slope, f.ci_low, f.ci_high
                ));
            }
            None => report.summary.push("too few usable rows for a fit".into()),
        }
        if !scan.non_monotone.is_empty() {
            report.summary.push(format!(
                "variance decreases at window sides {:?}",
                scan.non_monotone
            ));
        }
        if cfg.dump_samples {
            let lines = scan
                .rows
                .iter()
                .zip(&scan.values)
                .flat_map(|(r, v)| {
                    v.iter().enumerate().map(
                        move |(i, g)| json!({"window_side": r.window_side, "sample": i, "g": g}),
                    )
                })
                .collect();
            report
                .attachments
                .push(("variance.jsonl".into(), jsonl(lines)));
        }
        report.tables = vec![rows, fit];
        Ok(report)
    }
}

pub struct Mgf;

impl Experiment for Mgf {
    fn name(&self) -> &'static str {
        "mgf"
    }

    fn run(&self, cfg: &RunConfig, ctx: &Context) -> Result<Report> {
        let pair = proxy_pair(cfg)?;
        let table = mgf_estimate(
            &*ctx.source,
            &*ctx.solver,
            &pair,
            &cfg.t_grid,
            cfg.samples,
            cfg.mgf_inner,
            cfg.bootstrap,
            cfg.seed,
            cfg.tie,
        )?;
        let mut rows = Table::new("mgf", &["t", "log_mgf", "ci_low", "ci_high", "jensen_gap"]);
        for r in &table.rows {
            rows.push(vec![
                cell(r.t),
                cell(r.log_mgf),
                cell(r.ci_low),
                cell(r.ci_high),
                cell(r.jensen_gap),
            ]);
        }
        let mut summary = Table::new(
            "mgf_summary",
            &["samples", "inner", "mean", "convex", "jensen"],
        );
        summary.push(vec![
            cell(cfg.samples),
            cell(cfg.mgf_inner),
            cell(table.mean),
            cell(table.is_convex()),
            cell(table.satisfies_jensen()),
        ]);
        let mut report = Report {
            tables: vec![rows, summary],
            ..Report::default()
        };
        if !table.is_convex() {
            report
                .violations
                .push("empirical log-MGF is not convex".into());
        }
        if !table.satisfies_jensen() {
            report
                .violations
                .push("empirical log-MGF below t * mean".into());
        }
        report.summary.push(format!(
            "{} grid points, mean G/|dW| = {}",
            table.rows.len(),
            table.mean
        ));
        if cfg.dump_samples {
            let lines = table
                .values
                .iter()
                .enumerate()
                .map(|(i, x)| json!({"sample": i, "x": x}))
                .collect();
            report.attachments.push(("mgf.jsonl".into(), jsonl(lines)));
        }
        Ok(report)
    }
}

pub struct Weights;

impl Experiment for Weights {
    fn name(&self) -> &'static str {
        "weights"
    }

    fn run(&self, cfg: &RunConfig, ctx: &Context) -> Result<Report> {
        let h = weight_histogram(
            &*ctx.source,
            &*ctx.solver,
            cfg.dimension,
            cfg.window,
            &cfg.sizes,
            cfg.samples,
            cfg.seed,
            cfg.tie,
        )?;
        let mut rows = Table::new("weights", &["torus_size", "pattern", "count", "frequency"]);
        for s in &h.sizes {
            for (p, &c) in &s.counts {
                rows.push(vec![
                    cell(s.torus_size),
                    p.clone(),
                    cell(c),
                    cell(s.frequency(p)),
                ]);
            }
        }
        let mut tv = Table::new("weights_tv", &["from_size", "to_size", "tv"]);
        for (p, d) in h.sizes.windows(2).zip(&h.tv) {
            tv.push(vec![cell(p[0].torus_size), cell(p[1].torus_size), cell(d)]);
        }
        Ok(Report {
            summary: vec![format!(
                "total variation between consecutive sizes: {:?}",
                h.tv
            )],
            tables: vec![rows, tv],
            ..Report::default()
        })
    }
}

/// Oracle equivalence, selection and covariance on fresh random
/// instances; independent of the configured solver.
pub struct Check;

impl Check {
    fn oracle(cfg: &RunConfig, ctx: &Context, side: usize) -> Result<usize> {
        let lat = Arc::new(build_torus(side, 2)?);
        let failures = (0..cfg.check_instances)
            .into_par_iter()
            .map(|i| {
                let j = ctx.source.draw(
                    &lat,
                    couplings_seed(cfg.seed, i).with_substream(side as u64),
                );
                let a = Exhaustive.solve(&j, cfg.tie)?;
                let b = TransferMatrix.solve(&j, cfg.tie)?;
                Ok(usize::from(
                    a.spins != b.spins || (a.energy - b.energy).abs() > ENERGY_TOLERANCE,
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(failures.iter().sum())
    }

    fn selection(
        cfg: &RunConfig,
        ctx: &Context,
        extent: [usize; 2],
        perturbations: usize,
    ) -> Result<usize> {
        use rand::Rng;
        let lat = Arc::new(build_torus(5, 2)?);
        let failures = (0..cfg.check_instances)
            .into_par_iter()
            .map(|i| {
                let j = ctx.source.draw(
                    &lat,
                    couplings_seed(cfg.seed, i).with_substream(100 + extent[0] as u64),
                );
                let corner = lat.coords(i % lat.num_sites());
                let block = Window::rect(&lat, corner, extent)?;
                let table = build_excitation_table(&TransferMatrix, &j, block.sites(), cfg.tie)?;
                let gs = TransferMatrix.solve(&j, cfg.tie)?;
                let mut bad = usize::from(table.check_invariants(&j).is_err());
                bad += usize::from(table.state(table.select_ground()?) != &gs.spins);
                let mut rng = SeedSpec::new(cfg.seed, i as u64, Purpose::Perturbation).rng();
                for _ in 0..perturbations {
                    let values: Vec<_> = table
                        .block_edges()
                        .iter()
                        .map(|&e| (e, rng.gen_range(-2.0..2.0)))
                        .collect();
                    let p = BlockPerturbation::new(&lat, &table, &values)?;
                    let direct =
                        TransferMatrix.solve(&j.plus(&p.to_field(lat.clone())), cfg.tie)?;
                    bad += usize::from(table.perturbed_ground(&p)? != direct.spins);
                }
                Ok(bad)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(failures.iter().sum())
    }
}

impl Experiment for Check {
    fn name(&self) -> &'static str {
        "check"
    }

    fn run(&self, cfg: &RunConfig, ctx: &Context) -> Result<Report> {
        let checks = [
            ("oracle_l3", Self::oracle(cfg, ctx, 3)?),
            ("oracle_l4", Self::oracle(cfg, ctx, 4)?),
            ("selection_1x2", Self::selection(cfg, ctx, [1, 2], 0)?),
            ("selection_2x2", Self::selection(cfg, ctx, [2, 2], 0)?),
            ("covariance_2x2", Self::selection(cfg, ctx, [2, 2], 3)?),
        ];
        let mut t = Table::new("check", &["check", "instances", "failures"]);
        let mut report = Report::default();
        for (name, failures) in checks {
            t.push(vec![cell(name), cell(cfg.check_instances), cell(failures)]);
            if failures > 0 {
                report
                    .violations
                    .push(format!("{name}: {failures} failures"));
            }
            report.summary.push(format!(
                "{name}: {failures} failures in {} instances",
                cfg.check_instances
            ));
        }
        report.tables.push(t);
        Ok(report)
    }
}

//! Constrained ground states on a block, their energy-difference table, and
//! the block-perturbation map built from it.
//!
//! Block patterns `eta` are indexed by binary counting over the block sites
//! in the order given (row-major from the block corner for windows): bit `i`
//! set means spin `-1` at site `i`.
//!
//! On a finite torus `H` is even under the global flip, so `sigma^{-eta}`
//! is the flip of `sigma^eta` and `dE(eta, -eta) = 0` always. Ground-state
//! selection therefore identifies a flip pair; the representative returned
//! is the one with `+1` at the anchor site.

use std::io::Write;

use rayon::prelude::*;

use crate::disorder::{zero_inside, CouplingField};
use crate::energy::{
    block_energy, total_energy, SpinConfiguration, ENERGY_TOLERANCE, TIE_TOLERANCE,
};
use crate::error::{Error, Result};
use crate::lattice::{EdgeId, Shift, SiteId, TorusLattice, Translate};
use crate::solver::{constrained_gs, GroundStateSolver, TiePolicy};

pub const MAX_BLOCK_SITES: usize = 6;

#[derive(Clone, Debug, PartialEq)]
pub struct ExcitationTable {
    block: Vec<SiteId>,
    block_edges: Vec<EdgeId>,
    states: Vec<SpinConfiguration>,
    energies: Vec<f64>,
}

pub fn eta_from_code(code: usize, len: usize) -> Vec<i8> {
    (0..len)
        .map(|i| if (code >> i) & 1 == 1 { -1 } else { 1 })
        .collect()
}

pub fn code_from_eta(eta: &[i8]) -> usize {
    eta.iter()
        .enumerate()
        .filter(|(_, &v)| v == -1)
        .map(|(i, _)| 1 << i)
        .sum()
}

// ordered by block site then axis, which commutes with translations
fn interior_edges(lat: &TorusLattice, block: &[SiteId]) -> Vec<EdgeId> {
    let mut out = Vec::new();
    for &s in block {
        for axis in 0..lat.dim() {
            if block.contains(&lat.step(s, axis, 1)) {
                out.push(lat.edge_id(s, axis));
            }
        }
    }
    out
}

/// Solves the `2^|B| / 2` constrained problems with `+1` on the last block
/// site and fills in the other half by the global flip.
pub fn build_excitation_table(
    solver: &dyn GroundStateSolver,
    j: &CouplingField,
    block: &[SiteId],
    tie: TiePolicy,
) -> Result<ExcitationTable> {
    let len = block.len();
    if len == 0 || len > MAX_BLOCK_SITES {
        return Err(Error::Geometry(format!(
            "block of {len} sites; tables support 1..={MAX_BLOCK_SITES}"
        )));
    }
    let mut sorted = block.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != len {
        return Err(Error::Geometry("block sites must be distinct".into()));
    }
    let rows = 1usize << len;
    let full = rows - 1;
    let half: Vec<_> = (0..rows / 2)
        .into_par_iter()
        .map(|code| constrained_gs(solver, j, block, &eta_from_code(code, len), tie))
        .collect::<Result<_>>()?;

    let mut states = vec![SpinConfiguration::uniform(0, 1); rows];
    let mut energies = vec![0.0; rows];
    for (code, gs) in half.into_iter().enumerate() {
        states[full ^ code] = gs.spins.global_flip();
        energies[full ^ code] = gs.energy;
        states[code] = gs.spins;
        energies[code] = gs.energy;
    }
    Ok(ExcitationTable {
        block: block.to_vec(),
        block_edges: interior_edges(j.lattice(), block),
        states,
        energies,
    })
}

impl ExcitationTable {
    pub fn block(&self) -> &[SiteId] {
        &self.block
    }

    pub fn block_edges(&self) -> &[EdgeId] {
        &self.block_edges
    }

    pub fn rows(&self) -> usize {
        self.states.len()
    }

    pub fn eta(&self, code: usize) -> Vec<i8> {
        eta_from_code(code, self.block.len())
    }

    pub fn state(&self, code: usize) -> &SpinConfiguration {
        &self.states[code]
    }

    pub fn energy(&self, code: usize) -> f64 {
        self.energies[code]
    }

    /// `dE(eta, eta') = H(sigma^eta) - H(sigma^eta')`.
    pub fn delta(&self, a: usize, b: usize) -> f64 {
        self.energies[a] - self.energies[b]
    }

    pub fn delta_matrix(&self) -> Vec<Vec<f64>> {
        (0..self.rows())
            .map(|a| (0..self.rows()).map(|b| self.delta(a, b)).collect())
            .collect()
    }

    fn flip_partner(&self, code: usize) -> usize {
        (self.rows() - 1) ^ code
    }

    /// `2 * sum |J_e|` over edges with at least one endpoint in the block.
    pub fn magnitude_bound(&self, j: &CouplingField) -> f64 {
        let lat = j.lattice();
        let touching: Vec<_> = lat
            .edges()
            .iter()
            .enumerate()
            .filter(|(_, e)| self.block.contains(&e.a) || self.block.contains(&e.b))
            .map(|(id, _)| id)
            .collect();
        2.0 * j.abs_sum(&touching)
    }

    /// Antisymmetry, cocycle and magnitude bound.
    pub fn check_invariants(&self, j: &CouplingField) -> Result<()> {
        let n = self.rows();
        let bound = self.magnitude_bound(j);
        for a in 0..n {
            if self.delta(a, a) != 0.0 {
                return Err(Error::Invariant(format!("dE({a},{a}) != 0")));
            }
            if self.states[a].restrict(&self.block) != self.eta(a) {
                return Err(Error::Invariant(format!(
                    "sigma^eta for code {a} violates its pins"
                )));
            }
            for b in 0..n {
                let d = self.delta(a, b);
                if d != -self.delta(b, a) {
                    return Err(Error::Invariant(format!(
                        "dE not antisymmetric at ({a},{b})"
                    )));
                }
                if d.abs() > bound + ENERGY_TOLERANCE {
                    return Err(Error::Invariant(format!(
                        "|dE({a},{b})| = {} exceeds {bound}",
                        d.abs()
                    )));
                }
                for c in 0..n {
                    let r = self.delta(a, c) - self.delta(a, b) - self.delta(b, c);
                    if r.abs() > ENERGY_TOLERANCE {
                        return Err(Error::Invariant(format!(
                            "cocycle residual {r:e} at ({a},{b},{c})"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Pairs `(eta, eta')` violating `|dE| <= |H_B(eta) - H_B(eta')|` with
    /// `H_B` summed over the block's interior edges only.
    pub fn interior_bound_violations(&self, j: &CouplingField) -> Vec<(usize, usize)> {
        let hb: Vec<f64> = (0..self.rows())
            .map(|c| block_energy(j, &self.block, &self.eta(c)))
            .collect();
        let mut out = Vec::new();
        for a in 0..self.rows() {
            for b in 0..self.rows() {
                if self.delta(a, b).abs() > (hb[a] - hb[b]).abs() + ENERGY_TOLERANCE {
                    out.push((a, b));
                }
            }
        }
        out
    }

    fn select_by(&self, score: &[f64]) -> Result<usize> {
        let n = self.rows();
        let mut winners = Vec::new();
        let mut gap = f64::INFINITY;
        for a in 0..n {
            let partner = self.flip_partner(a);
            let mut worst = f64::NEG_INFINITY;
            for b in (0..n).filter(|&b| b != a && b != partner) {
                worst = worst.max(score[a] - score[b]);
            }
            if worst < 0.0 {
                winners.push(a);
                gap = gap.min(-worst);
            }
        }
        if winners.is_empty() {
            // the lowest flip pair is degenerate with another pattern
            return Err(Error::TieDetected { gap: 0.0 });
        }
        if winners.len() != 2 {
            return Err(Error::Invariant(format!(
                "{} rows with all off-pair differences negative",
                winners.len()
            )));
        }
        if gap < TIE_TOLERANCE {
            return Err(Error::TieDetected { gap });
        }
        let rep = winners
            .into_iter()
            .find(|&c| {
                let s = &self.states[c];
                s.get(s.anchor()) == 1
            })
            .expect("flip pair has one anchored member");
        Ok(rep)
    }

    /// Code of the pattern whose constrained minimizer is the ground state.
    pub fn select_ground(&self) -> Result<usize> {
        self.select_by(&self.energies)
    }

    /// The ground state for `J + J_B` read off the table: the pattern
    /// minimizing `dE + H_{B,J_B}` selects the stored constrained minimizer.
    pub fn perturbed_ground(&self, p: &BlockPerturbation) -> Result<SpinConfiguration> {
        let score: Vec<f64> = (0..self.rows())
            .map(|c| self.energies[c] + p.energy(&self.eta(c)))
            .collect();
        let code = self.select_by(&score)?;
        Ok(self.states[code].clone())
    }

    /// Structured text export: header, one record per pattern, then the
    /// `dE` matrix row-major.
    pub fn export<W: Write>(
        &self,
        mut w: W,
        lat: &TorusLattice,
        header: &[(String, String)],
    ) -> Result<()> {
        for (k, v) in header {
            writeln!(w, "# {k}: {v}")?;
        }
        let sites: Vec<String> = self
            .block
            .iter()
            .map(|&s| {
                let (r, c) = lat.row_col(s);
                format!("({r},{c})")
            })
            .collect();
        writeln!(w, "# block: {}", sites.join(" "))?;
        writeln!(w, "# patterns: {}", self.rows())?;
        for code in 0..self.rows() {
            let eta: String = self
                .eta(code)
                .iter()
                .map(|&v| if v == 1 { '+' } else { '-' })
                .collect();
            let spins: String = self.states[code]
                .spins()
                .iter()
                .map(|&v| if v == 1 { '+' } else { '-' })
                .collect();
            writeln!(
                w,
                "eta {code} {eta} energy {:.16e} spins {spins}",
                self.energies[code]
            )?;
        }
        writeln!(w, "# delta_e row-major")?;
        for a in 0..self.rows() {
            let row: Vec<String> = (0..self.rows())
                .map(|b| format!("{:.16e}", self.delta(a, b)))
                .collect();
            writeln!(w, "{}", row.join(" "))?;
        }
        Ok(())
    }
}

impl Translate for ExcitationTable {
    fn translated(&self, lat: &TorusLattice, t: Shift) -> Self {
        ExcitationTable {
            block: self.block.iter().map(|&s| lat.shift_site(s, t)).collect(),
            block_edges: self
                .block_edges
                .iter()
                .map(|&e| lat.shift_edge(e, t))
                .collect(),
            states: self.states.iter().map(|s| s.translated(lat, t)).collect(),
            energies: self.energies.clone(),
        }
    }
}

/// Couplings supported on the interior edges of a block.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockPerturbation {
    terms: Vec<Term>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Term {
    edge: EdgeId,
    // endpoint positions within the block ordering
    a: usize,
    b: usize,
    value: f64,
}

impl BlockPerturbation {
    pub fn new(
        lat: &TorusLattice,
        table: &ExcitationTable,
        values: &[(EdgeId, f64)],
    ) -> Result<Self> {
        let mut out = BlockPerturbation { terms: Vec::new() };
        for &(edge, v) in values {
            out = out.shifted(lat, table, edge, v)?;
        }
        Ok(out)
    }

    pub fn zero() -> Self {
        BlockPerturbation { terms: Vec::new() }
    }

    /// The block part of `j`.
    pub fn restrict(table: &ExcitationTable, j: &CouplingField) -> Self {
        let values: Vec<_> = table.block_edges.iter().map(|&e| (e, j.get(e))).collect();
        Self::new(j.lattice(), table, &values).expect("block edges are inside the block")
    }

    pub fn values(&self) -> Vec<(EdgeId, f64)> {
        self.terms.iter().map(|t| (t.edge, t.value)).collect()
    }

    /// Adds `by` to the coupling on `edge`.
    pub fn shifted(
        &self,
        lat: &TorusLattice,
        table: &ExcitationTable,
        edge: EdgeId,
        by: f64,
    ) -> Result<Self> {
        let mut terms = self.terms.clone();
        match terms.iter_mut().find(|t| t.edge == edge) {
            Some(t) => t.value += by,
            None => {
                if !table.block_edges.contains(&edge) {
                    return Err(Error::Geometry(format!(
                        "perturbed edge {edge} is not inside the block"
                    )));
                }
                let e = lat.edge(edge);
                let pos = |s| {
                    table
                        .block
                        .iter()
                        .position(|&x| x == s)
                        .expect("endpoint in block")
                };
                terms.push(Term {
                    edge,
                    a: pos(e.a),
                    b: pos(e.b),
                    value: by,
                });
            }
        }
        Ok(BlockPerturbation { terms })
    }

    /// `H_{B,J_B}(eta)`.
    pub fn energy(&self, eta: &[i8]) -> f64 {
        -self
            .terms
            .iter()
            .map(|t| t.value * f64::from(eta[t.a] * eta[t.b]))
            .sum::<f64>()
    }

    pub fn to_field(&self, lat: std::sync::Arc<TorusLattice>) -> CouplingField {
        let mut f = CouplingField::constant(lat, 0.0);
        for t in &self.terms {
            f.set(t.edge, f.get(t.edge) + t.value);
        }
        f
    }
}

/// Ground-state energy as a function of one coupling, all others fixed.
#[derive(Clone, Debug)]
pub struct CriticalScan {
    /// Located by bisection on the sign of the edge correlation.
    pub breakpoint: Option<f64>,
    /// Intersection of the two bracketing energy lines.
    pub breakpoint_exact: Option<f64>,
    pub left_slope: f64,
    pub right_slope: f64,
    /// `(coupling value, ground energy, edge correlation)` on the scan grid.
    pub grid: Vec<(f64, f64, i8)>,
}

pub const BISECTION_TOLERANCE: f64 = 1e-10;

/// Correlation at a coupling value, `None` when the solver reports a tie
/// (the value sits on the breakpoint within tolerance).
fn probe(
    solver: &dyn GroundStateSolver,
    j: &CouplingField,
    edge: EdgeId,
    value: f64,
    tie: TiePolicy,
) -> Result<Option<(f64, i8)>> {
    match solver.solve(&j.with_edge(edge, value), tie) {
        Ok(gs) => Ok(Some((gs.energy, gs.spins.correlation(j.lattice(), edge)))),
        Err(Error::TieDetected { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Scans `E*(J_e)` on `[lo, hi]` with `resolution` segments, checks that it
/// is concave piecewise linear with slopes in `{+1, -1}` and at most one
/// slope change, and locates the change by bisection.
pub fn critical_scan(
    solver: &dyn GroundStateSolver,
    j: &CouplingField,
    edge: EdgeId,
    interval: (f64, f64),
    resolution: usize,
    tie: TiePolicy,
) -> Result<CriticalScan> {
    let (lo, hi) = interval;
    if !(lo.is_finite() && hi.is_finite() && lo < hi) || resolution == 0 {
        return Err(Error::Config(format!(
            "bad scan interval [{lo}, {hi}] / resolution {resolution}"
        )));
    }
    let mut grid = Vec::with_capacity(resolution + 1);
    for i in 0..=resolution {
        let v = lo + (hi - lo) * i as f64 / resolution as f64;
        // nudge off an exact tie so the grid always carries a correlation
        let (v, (e, c)) = match probe(solver, j, edge, v, tie)? {
            Some(x) => (v, x),
            None => {
                let w = v + 1e-7;
                let x = probe(solver, j, edge, w, tie)?
                    .ok_or_else(|| Error::Invariant(format!("persistent tie at J = {v}")))?;
                (w, x)
            }
        };
        grid.push((v, e, c));
    }

    let changes = grid.windows(2).filter(|w| w[0].2 != w[1].2).count();
    if changes > 1 || grid.windows(2).any(|w| w[1].2 < w[0].2) {
        return Err(Error::Invariant(format!(
            "edge correlation changes {changes} times along the scan"
        )));
    }
    for &(v, e, c) in &grid {
        // on each segment E* = const - v * corr; check against both ends
        let (v0, e0, c0) = grid[0];
        let (v1, e1, c1) = grid[grid.len() - 1];
        let line = if c == c0 {
            e0 - (v - v0) * f64::from(c0)
        } else {
            e1 - (v - v1) * f64::from(c1)
        };
        if (line - e).abs() > ENERGY_TOLERANCE * (1.0 + e.abs()) {
            return Err(Error::Invariant(format!(
                "E* not piecewise linear at J = {v}"
            )));
        }
    }
    for w in grid.windows(3) {
        if w[0].1 + w[2].1 - 2.0 * w[1].1 > ENERGY_TOLERANCE * (1.0 + w[1].1.abs()) {
            return Err(Error::Invariant(format!(
                "E* not concave near J = {}",
                w[1].0
            )));
        }
    }

    let (v_lo, e_lo, c_lo) = grid[0];
    let (v_hi, e_hi, c_hi) = grid[grid.len() - 1];
    let (mut breakpoint, mut breakpoint_exact) = (None, None);
    if c_lo != c_hi {
        // E*(v) = min(A - v, B + v) with A from the aligned end, B from the other
        let a = e_hi + v_hi;
        let b = e_lo - v_lo;
        breakpoint_exact = Some((a - b) / 2.0);

        let (mut left, mut right) = grid
            .windows(2)
            .find(|w| w[0].2 != w[1].2)
            .map(|w| (w[0].0, w[1].0))
            .expect("one change");
        while right - left > BISECTION_TOLERANCE {
            let mid = 0.5 * (left + right);
            match probe(solver, j, edge, mid, tie)? {
                Some((_, c)) if c == c_lo => left = mid,
                Some(_) => right = mid,
                None => {
                    left = mid;
                    right = mid;
                }
            }
        }
        breakpoint = Some(0.5 * (left + right));
    }
    Ok(CriticalScan {
        breakpoint,
        breakpoint_exact,
        left_slope: -f64::from(c_lo),
        right_slope: -f64::from(c_hi),
        grid,
    })
}

/// Outcome of one finite-difference check of the energy derivative in a
/// block coupling.
#[derive(Clone, Debug)]
pub struct Sandwich {
    pub epsilon: f64,
    /// `E*(J + eps) - E*(J)`.
    pub difference: f64,
    /// Edge correlation in `sigma(J_B)` and in `sigma(J_B + eps)`.
    pub corr_before: i8,
    pub corr_after: i8,
}

pub const SANDWICH_SLACK: f64 = 1e-9;

impl Sandwich {
    /// `-eps * c_after`.
    pub fn lower(&self) -> f64 {
        -self.epsilon * f64::from(self.corr_after)
    }

    /// `-eps * c_before`.
    pub fn upper(&self) -> f64 {
        -self.epsilon * f64::from(self.corr_before)
    }

    /// `(difference - lower, upper - difference)`; both non-negative when
    /// the bounds hold.
    pub fn residuals(&self) -> (f64, f64) {
        (
            self.difference - self.lower(),
            self.upper() - self.difference,
        )
    }

    pub fn holds(&self) -> bool {
        let (a, b) = self.residuals();
        a >= -SANDWICH_SLACK && b >= -SANDWICH_SLACK
    }
}

/// Builds the table for `J` with the block couplings zeroed, obtains
/// `sigma(J_B)` and `sigma(J_B + eps)` through the perturbation map, and
/// brackets the ground-energy difference between `-eps * c_after` and
/// `-eps * c_before`.
pub fn sandwich_check(
    solver: &dyn GroundStateSolver,
    j: &CouplingField,
    block: &[SiteId],
    edge: EdgeId,
    epsilon: f64,
    tie: TiePolicy,
) -> Result<Sandwich> {
    if epsilon == 0.0 {
        return Err(Error::Config("epsilon must be non-zero".into()));
    }
    let lat = j.lattice();
    let table = build_excitation_table(solver, &zero_inside(j, block), block, tie)?;
    let p0 = BlockPerturbation::restrict(&table, j);
    let p1 = p0.shifted(lat, &table, edge, epsilon)?;
    let before = table.perturbed_ground(&p0)?;
    let after = table.perturbed_ground(&p1)?;
    let shifted = j.with_edge(edge, j.get(edge) + epsilon);
    Ok(Sandwich {
        epsilon,
        difference: total_energy(&shifted, &after) - total_energy(j, &before),
        corr_before: before.correlation(lat, edge),
        corr_after: after.correlation(lat, edge),
    })
}

#[cfg(test)]
mod tests;

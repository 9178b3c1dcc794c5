//! Exact ground-state solvers.
//!
//! Each solver implements [`GroundStateSolver`] and is registered by name in
//! [`SOLVER_REGISTRY`]; experiments and the CLI pick one at runtime.
//! Unconstrained results are gauge-fixed (`+1` at the anchor site 0) and
//! uniqueness is checked up to the global flip.

mod exhaustive;
mod transfer;

use std::fmt;
use std::sync::Arc;

pub use exhaustive::Exhaustive;
pub use transfer::TransferMatrix;

use crate::disorder::CouplingField;
use crate::energy::{total_energy, SpinConfiguration};
use crate::error::{Error, Result};
use crate::lattice::{Seam, SiteId, TorusLattice};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TiePolicy {
    /// Report [`Error::TieDetected`] when two distinct configurations are
    /// optimal within [`crate::energy::TIE_TOLERANCE`].
    #[default]
    Strict,
    /// Return the first optimum found. Deterministic, meant for degenerate
    /// diagnostic fields such as the pure ferromagnet.
    First,
}

/// Per-site spin constraints.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Pinning(Vec<Option<i8>>);

impl Pinning {
    pub fn free(n: usize) -> Self {
        Pinning(vec![None; n])
    }

    pub fn block(n: usize, sites: &[SiteId], eta: &[i8]) -> Result<Self> {
        if sites.len() != eta.len() {
            return Err(Error::Geometry(format!(
                "{} block sites but {} pinned spins",
                sites.len(),
                eta.len()
            )));
        }
        let mut p = vec![None; n];
        for (&s, &v) in sites.iter().zip(eta) {
            if s >= n || !(v == 1 || v == -1) {
                return Err(Error::Geometry(format!("bad pin {v} at site {s}")));
            }
            p[s] = Some(v);
        }
        Ok(Pinning(p))
    }

    pub fn get(&self, site: SiteId) -> Option<i8> {
        self.0[site]
    }

    pub fn is_free(&self) -> bool {
        self.0.iter().all(Option::is_none)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GroundState {
    pub spins: SpinConfiguration,
    pub energy: f64,
}

impl GroundState {
    /// Energy recomputed from scratch so that equal spins always carry
    /// bit-identical energies, whichever solver produced them.
    pub(crate) fn evaluate(j: &CouplingField, spins: SpinConfiguration) -> Self {
        let energy = total_energy(j, &spins);
        GroundState { spins, energy }
    }
}

pub(crate) fn check_tie(gap: f64, tie: TiePolicy) -> Result<()> {
    if tie == TiePolicy::Strict && gap < crate::energy::TIE_TOLERANCE {
        return Err(Error::TieDetected { gap });
    }
    Ok(())
}

pub trait GroundStateSolver: Send + Sync + fmt::Debug {
    fn name(&self) -> &'static str;

    fn supports(&self, lat: &TorusLattice) -> Result<()>;

    /// Minimizer among configurations agreeing with `pins`. With no pins
    /// the result is gauge-fixed.
    fn solve_pinned(
        &self,
        j: &CouplingField,
        pins: &Pinning,
        tie: TiePolicy,
    ) -> Result<GroundState>;

    fn solve(&self, j: &CouplingField, tie: TiePolicy) -> Result<GroundState> {
        self.solve_pinned(j, &Pinning::free(j.lattice().num_sites()), tie)
    }

    /// Ground states with periodic and with antiperiodic boundary
    /// conditions across `seam`.
    fn solve_boundary_pair(
        &self,
        j: &CouplingField,
        seam: &Seam,
        tie: TiePolicy,
    ) -> Result<(GroundState, GroundState)> {
        let p = self.solve(j, tie)?;
        let ap = self.solve(&j.negate_edges(&seam.edges), tie)?;
        Ok((p, ap))
    }
}

/// Transfer matrix when it applies, enumeration otherwise.
#[derive(Debug, Default, Clone, Copy)]
pub struct Auto;

impl Auto {
    fn pick(&self, lat: &TorusLattice) -> Result<&'static dyn GroundStateSolver> {
        static DP: TransferMatrix = TransferMatrix;
        static ORACLE: Exhaustive = Exhaustive;
        if DP.supports(lat).is_ok() {
            Ok(&DP)
        } else {
            ORACLE.supports(lat)?;
            Ok(&ORACLE)
        }
    }
}

impl GroundStateSolver for Auto {
    fn name(&self) -> &'static str {
        "auto"
    }

    fn supports(&self, lat: &TorusLattice) -> Result<()> {
        self.pick(lat).map(|_| ())
    }

    fn solve_pinned(
        &self,
        j: &CouplingField,
        pins: &Pinning,
        tie: TiePolicy,
    ) -> Result<GroundState> {
        self.pick(j.lattice())?.solve_pinned(j, pins, tie)
    }

    fn solve_boundary_pair(
        &self,
        j: &CouplingField,
        seam: &Seam,
        tie: TiePolicy,
    ) -> Result<(GroundState, GroundState)> {
        self.pick(j.lattice())?.solve_boundary_pair(j, seam, tie)
    }
}

type SolverCtor = fn() -> Arc<dyn GroundStateSolver>;

pub const SOLVER_REGISTRY: &[(&str, SolverCtor)] = &[
    ("oracle", || Arc::new(Exhaustive)),
    ("dp", || Arc::new(TransferMatrix)),
    ("auto", || Arc::new(Auto)),
];

pub fn solver_by_name(name: &str) -> Result<Arc<dyn GroundStateSolver>> {
    SOLVER_REGISTRY
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, ctor)| ctor())
        .ok_or_else(|| {
            let known: Vec<_> = SOLVER_REGISTRY.iter().map(|(n, _)| *n).collect();
            Error::Config(format!(
                "unknown solver `{name}` (known: {})",
                known.join(", ")
            ))
        })
}

/// Exhaustive enumeration, strict tie policy.
pub fn exhaustive_gs(j: &CouplingField) -> Result<GroundState> {
    Exhaustive.solve(j, TiePolicy::Strict)
}

/// Transfer-matrix dynamic program, strict tie policy.
pub fn dp_gs_2d(j: &CouplingField) -> Result<GroundState> {
    if j.lattice().dim() != 2 {
        return Err(Error::Unsupported {
            solver: "dp",
            reason: "dp_gs_2d expects a two-dimensional torus".into(),
        });
    }
    TransferMatrix.solve(j, TiePolicy::Strict)
}

/// Minimizer among configurations equal to `eta` on `sites`. Not
/// gauge-fixed.
pub fn constrained_gs(
    solver: &dyn GroundStateSolver,
    j: &CouplingField,
    sites: &[SiteId],
    eta: &[i8],
    tie: TiePolicy,
) -> Result<GroundState> {
    let pins = Pinning::block(j.lattice().num_sites(), sites, eta)?;
    solver.solve_pinned(j, &pins, tie)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum BoundaryCondition {
    Periodic,
    /// Couplings across the seam are negated.
    Antiperiodic(Seam),
}

pub fn gs_with_bc(
    solver: &dyn GroundStateSolver,
    j: &CouplingField,
    bc: &BoundaryCondition,
    tie: TiePolicy,
) -> Result<GroundState> {
    match bc {
        BoundaryCondition::Periodic => solver.solve(j, tie),
        BoundaryCondition::Antiperiodic(seam) => solver.solve(&j.negate_edges(&seam.edges), tie),
    }
}

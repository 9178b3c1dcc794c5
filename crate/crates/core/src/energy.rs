//! The nearest-neighbour Ising energy `H = -sum J_xy s_x s_y` and spin
//! configurations.

use crate::disorder::CouplingField;
use crate::lattice::{EdgeId, Shift, SiteId, TorusLattice, Translate};

/// Energies closer than this are treated as a tie between distinct
/// configurations.
pub const TIE_TOLERANCE: f64 = 1e-12;

/// Tolerance for energy equality checks between independent routes.
pub const ENERGY_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SpinConfiguration {
    spins: Vec<i8>,
    anchor: SiteId,
}

impl SpinConfiguration {
    pub fn from_spins(spins: Vec<i8>) -> Self {
        assert!(
            spins.iter().all(|&s| s == 1 || s == -1),
            "spins must be +-1"
        );
        SpinConfiguration { spins, anchor: 0 }
    }

    pub fn uniform(n: usize, value: i8) -> Self {
        Self::from_spins(vec![value; n])
    }

    pub fn with_anchor(mut self, anchor: SiteId) -> Self {
        self.anchor = anchor;
        self
    }

    pub fn spins(&self) -> &[i8] {
        &self.spins
    }

    pub fn len(&self) -> usize {
        self.spins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spins.is_empty()
    }

    pub fn get(&self, site: SiteId) -> i8 {
        self.spins[site]
    }

    pub fn anchor(&self) -> SiteId {
        self.anchor
    }

    pub fn flipped_at(&self, site: SiteId) -> Self {
        let mut out = self.clone();
        out.spins[site] = -out.spins[site];
        out
    }

    pub fn global_flip(&self) -> Self {
        SpinConfiguration {
            spins: self.spins.iter().map(|s| -s).collect(),
            anchor: self.anchor,
        }
    }

    /// The representative of `{s, -s}` with `+1` at the anchor.
    pub fn gauge_fixed(&self) -> Self {
        if self.spins[self.anchor] == 1 {
            self.clone()
        } else {
            self.global_flip()
        }
    }

    pub fn same_up_to_flip(&self, other: &Self) -> bool {
        self.spins == other.spins || self.spins.iter().zip(&other.spins).all(|(a, b)| a == &-b)
    }

    pub fn restrict(&self, sites: &[SiteId]) -> Vec<i8> {
        sites.iter().map(|&s| self.spins[s]).collect()
    }

    pub fn correlation(&self, lat: &TorusLattice, e: EdgeId) -> i8 {
        let edge = lat.edge(e);
        self.spins[edge.a] * self.spins[edge.b]
    }
}

impl Translate for SpinConfiguration {
    fn translated(&self, lat: &TorusLattice, t: Shift) -> Self {
        let mut spins = vec![0; self.spins.len()];
        for (s, &v) in self.spins.iter().enumerate() {
            spins[lat.shift_site(s, t)] = v;
        }
        SpinConfiguration {
            spins,
            anchor: self.anchor,
        }
    }
}

/// Energy restricted to `edges`. Terms are added in sorted order, so the
/// result does not depend on the order of `edges` and relabelling the
/// lattice (a translation) gives bit-identical energies.
pub fn hamiltonian<I>(j: &CouplingField, sigma: &SpinConfiguration, edges: I) -> f64
where
    I: IntoIterator<Item = EdgeId>,
{
    let lat = j.lattice();
    let mut terms: Vec<f64> = edges
        .into_iter()
        .map(|e| {
            let edge = lat.edge(e);
            j.get(e) * f64::from(sigma.spins[edge.a] * sigma.spins[edge.b])
        })
        .collect();
    terms.sort_unstable_by(f64::total_cmp);
    -terms.iter().sum::<f64>()
}

/// Energy over every edge of the torus.
pub fn total_energy(j: &CouplingField, sigma: &SpinConfiguration) -> f64 {
    hamiltonian(j, sigma, 0..j.lattice().num_edges())
}

/// Energy of a spin pattern on a set of sites, counting only edges with
/// both endpoints in the set.
pub fn block_energy(j: &CouplingField, sites: &[SiteId], eta: &[i8]) -> f64 {
    let lat = j.lattice();
    let mut acc = 0.0;
    for (i, &x) in sites.iter().enumerate() {
        for &(e, y) in lat.incident(x) {
            if let Some(k) = sites.iter().position(|&s| s == y) {
                // each interior edge is seen from both endpoints
                if lat.edge(e).a == x {
                    acc -= j.get(e) * f64::from(eta[i] * eta[k]);
                }
            }
        }
    }
    acc
}

/// `H(s with v flipped) - H(s)`.
pub fn flip_delta(j: &CouplingField, sigma: &SpinConfiguration, v: SiteId) -> f64 {
    let lat = j.lattice();
    let local: f64 = lat
        .incident(v)
        .iter()
        .map(|&(e, u)| j.get(e) * f64::from(sigma.spins[u]))
        .sum();
    2.0 * f64::from(sigma.spins[v]) * local
}

/// Every single-spin flip raises the energy.
pub fn is_local_min(j: &CouplingField, sigma: &SpinConfiguration) -> bool {
    (0..sigma.len()).all(|v| flip_delta(j, sigma, v) > 0.0)
}

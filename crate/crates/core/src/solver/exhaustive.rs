use super::{check_tie, GroundState, GroundStateSolver, Pinning, TiePolicy};
use crate::disorder::CouplingField;
use crate::energy::SpinConfiguration;
use crate::error::{Error, Result};
use crate::lattice::TorusLattice;

pub const MAX_SITES: usize = 25;

// Gray-code running energies are recomputed from scratch this often.
const RESYNC_EVERY: u64 = 1 << 10;

/// Gray-code enumeration of every admissible configuration.
#[derive(Debug, Default, Clone, Copy)]
pub struct Exhaustive;

impl GroundStateSolver for Exhaustive {
    fn name(&self) -> &'static str {
        "oracle"
    }

    fn supports(&self, lat: &TorusLattice) -> Result<()> {
        if lat.num_sites() > MAX_SITES {
            return Err(Error::Unsupported {
                solver: "oracle",
                reason: format!("{} sites exceed the limit of {MAX_SITES}", lat.num_sites()),
            });
        }
        Ok(())
    }

    fn solve_pinned(
        &self,
        j: &CouplingField,
        pins: &Pinning,
        tie: TiePolicy,
    ) -> Result<GroundState> {
        let lat = j.lattice();
        self.supports(lat)?;
        let n = lat.num_sites();
        let anchored = pins.is_free();

        let mut spins: Vec<i8> = (0..n).map(|s| pins.get(s).unwrap_or(1)).collect();
        let free: Vec<usize> = (0..n)
            .filter(|&s| pins.get(s).is_none() && !(anchored && s == 0))
            .collect();

        let local = |spins: &[i8], v: usize| -> f64 {
            lat.incident(v)
                .iter()
                .map(|&(e, u)| j.get(e) * f64::from(spins[u]))
                .sum::<f64>()
        };
        let energy = |spins: &[i8]| -> f64 {
            -lat.edges()
                .iter()
                .enumerate()
                .map(|(id, e)| j.get(id) * f64::from(spins[e.a] * spins[e.b]))
                .sum::<f64>()
        };

        let mut e = energy(&spins);
        let (mut best, mut best_code) = (e, 0u64);
        let (mut second, mut second_code) = (f64::INFINITY, None);
        let total = 1u64 << free.len();
        for i in 1..total {
            let v = free[i.trailing_zeros() as usize];
            e += 2.0 * f64::from(spins[v]) * local(&spins, v);
            spins[v] = -spins[v];
            if i % RESYNC_EVERY == 0 {
                e = energy(&spins);
            }
            let code = i ^ (i >> 1);
            if e < best {
                second = best;
                second_code = Some(best_code);
                best = e;
                best_code = code;
            } else if e < second {
                second = e;
                second_code = Some(code);
            }
        }

        let decode = |code: u64| -> Vec<i8> {
            let mut s: Vec<i8> = (0..n).map(|v| pins.get(v).unwrap_or(1)).collect();
            for (k, &v) in free.iter().enumerate() {
                if (code >> k) & 1 == 1 {
                    s[v] = -1;
                }
            }
            s
        };
        let best_spins = decode(best_code);
        if let Some(code) = second_code {
            let gap = energy(&decode(code)) - energy(&best_spins);
            check_tie(gap, tie)?;
        }
        let sigma = SpinConfiguration::from_spins(best_spins);
        Ok(GroundState::evaluate(j, sigma))
    }
}

//! Transfer-matrix dynamic program for tori of side up to 12.
//!
//! The first row is enumerated explicitly (it closes the vertical wrap).
//! For each first row the remaining rows are added one site at a time: the
//! frontier is a full row encoded as an `L`-bit integer (bit set = spin -1)
//! whose bits below the current column already belong to the new row.
//! Adding a site minimizes over the spin it replaces, so each step costs
//! `O(2^L)` and a solve costs `O(L^2 4^L / 2)`.
//!
//! Ties are detected exactly: the optimum is unique iff no other first row
//! comes within tolerance, the closing minimum is unique, and no
//! minimization along the backtracked path was a near tie.

use super::{check_tie, GroundState, GroundStateSolver, Pinning, TiePolicy};
use crate::disorder::CouplingField;
use crate::energy::{SpinConfiguration, TIE_TOLERANCE};
use crate::error::{Error, Result};
use crate::lattice::{Seam, TorusLattice};

pub const MAX_SIDE: usize = 12;

#[derive(Debug, Default, Clone, Copy)]
pub struct TransferMatrix;

impl GroundStateSolver for TransferMatrix {
    fn name(&self) -> &'static str {
        "dp"
    }

    fn supports(&self, lat: &TorusLattice) -> Result<()> {
        if lat.dim() == 2 && lat.side() > MAX_SIDE {
            return Err(Error::Unsupported {
                solver: "dp",
                reason: format!("side {} exceeds {MAX_SIDE}", lat.side()),
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
        self.supports(j.lattice())?;
        let spins = if j.lattice().dim() == 1 {
            ring(j, pins, tie)?
        } else {
            let grid = Grid::new(j, pins, 0);
            let [best] = grid.solve([Closing::Periodic], tie)?;
            best
        };
        let mut sigma = SpinConfiguration::from_spins(spins);
        if pins.is_free() {
            sigma = sigma.gauge_fixed();
        }
        Ok(GroundState::evaluate(j, sigma))
    }

    fn solve_boundary_pair(
        &self,
        j: &CouplingField,
        seam: &Seam,
        tie: TiePolicy,
    ) -> Result<(GroundState, GroundState)> {
        let lat = j.lattice();
        self.supports(lat)?;
        if lat.dim() != 2 || seam.axis != 0 {
            let p = self.solve(j, tie)?;
            let ap = self.solve(&j.negate_edges(&seam.edges), tie)?;
            return Ok((p, ap));
        }
        // Start the sweep just past the seam so that the seam edges are the
        // closing bonds; both boundary conditions then share one sweep.
        let pins = Pinning::free(lat.num_sites());
        let grid = Grid::new(j, &pins, (seam.offset + 1) % lat.side());
        let [p, ap] = grid.solve([Closing::Periodic, Closing::Antiperiodic], tie)?;
        let p = GroundState::evaluate(j, SpinConfiguration::from_spins(p).gauge_fixed());
        let ap_field = j.negate_edges(&seam.edges);
        let ap = GroundState::evaluate(&ap_field, SpinConfiguration::from_spins(ap).gauge_fixed());
        Ok((p, ap))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Closing {
    Periodic,
    Antiperiodic,
}

/// Bond energy `-J s t` for bits `a`, `b` (bit set = spin -1).
#[inline(always)]
fn bond(a: usize, b: usize, jv: f64) -> f64 {
    if a == b {
        -jv
    } else {
        jv
    }
}

struct Grid {
    l: usize,
    start: usize,
    // h[k*l + c]: logical row k, bond (c, c+1)
    h: Vec<f64>,
    // v[k*l + c]: bond (k, c)-(k+1, c); k = l-1 closes onto row 0
    v: Vec<f64>,
    // per logical row: (mask of pinned columns, their bits)
    pins: Vec<(usize, usize)>,
    anchored: bool,
}

struct Best {
    value: f64,
    second: f64,
    row0: usize,
}

impl Grid {
    fn new(j: &CouplingField, pins: &Pinning, start: usize) -> Self {
        let lat = j.lattice();
        let l = lat.side();
        let mut h = vec![0.0; l * l];
        let mut v = vec![0.0; l * l];
        let mut rows = vec![(0usize, 0usize); l];
        for k in 0..l {
            let p = (start + k) % l;
            for c in 0..l {
                let site = p * l + c;
                h[k * l + c] = j.get(lat.edge_id(site, 1));
                v[k * l + c] = j.get(lat.edge_id(site, 0));
                if let Some(s) = pins.get(site) {
                    rows[k].0 |= 1 << c;
                    if s == -1 {
                        rows[k].1 |= 1 << c;
                    }
                }
            }
        }
        Grid {
            l,
            start,
            h,
            v,
            pins: rows,
            anchored: pins.is_free(),
        }
    }

    fn admissible(&self, k: usize, s: usize) -> bool {
        let (mask, bits) = self.pins[k];
        s & mask == bits
    }

    fn row_energy(&self, k: usize, s: usize) -> f64 {
        let l = self.l;
        (0..l)
            .map(|c| bond((s >> c) & 1, (s >> ((c + 1) % l)) & 1, self.h[k * l + c]))
            .sum()
    }

    /// `V[x] = sum_c bond` between two rows whose XOR is `x`.
    fn vertical_table(&self, k: usize) -> Vec<f64> {
        let l = self.l;
        let row = &self.v[k * l..(k + 1) * l];
        let total: f64 = row.iter().sum();
        let n = 1usize << l;
        let mut w = vec![0.0; n];
        for x in 1..n {
            let low = x.trailing_zeros() as usize;
            w[x] = w[x & (x - 1)] + row[low];
        }
        w.iter().map(|&wx| -total + 2.0 * wx).collect()
    }

    fn first_rows(&self) -> impl Iterator<Item = usize> + '_ {
        let n = 1usize << self.l;
        (0..n).filter(move |&r| self.admissible(0, r) && !(self.anchored && r & 1 == 1))
    }

    /// Runs the sweep for one first row, leaving frontier values for the
    /// last row in `t`. With `record`, per-step choice and near-tie flags
    /// are stored (bit 0: replaced spin, bit 1: near tie).
    fn sweep(
        &self,
        r0: usize,
        row1: &[f64],
        v0: &[f64],
        t: &mut [f64],
        mut record: Option<&mut Vec<u8>>,
    ) {
        let l = self.l;
        let n = 1usize << l;
        let e0 = self.row_energy(0, r0);
        for s in 0..n {
            t[s] = if self.admissible(1, s) {
                e0 + v0[r0 ^ s] + row1[s]
            } else {
                f64::INFINITY
            };
        }
        let mut step = 0;
        for k in 2..l {
            let (pmask, pbits) = self.pins[k];
            for c in 0..l {
                let m = 1usize << c;
                let jv = self.v[(k - 1) * l + c];
                let hl = if c >= 1 { self.h[k * l + c - 1] } else { 0.0 };
                let hw = if c == l - 1 {
                    self.h[k * l + l - 1]
                } else {
                    0.0
                };
                let lsh = c.saturating_sub(1);
                // hc[nb][lb][wb]
                let mut hc = [0.0f64; 8];
                for nb in 0..2 {
                    for lb in 0..2 {
                        for wb in 0..2 {
                            hc[nb << 2 | lb << 1 | wb] = bond(nb, lb, hl) + bond(nb, wb, hw);
                        }
                    }
                }
                let (allow0, allow1) = if pmask & m != 0 {
                    (pbits & m == 0, pbits & m != 0)
                } else {
                    (true, true)
                };
                let rec = record
                    .as_deref_mut()
                    .map(|r| &mut r[step * n..(step + 1) * n]);
                match rec {
                    None if c < l - 1 => {
                        // g = horizontal cost of a +1 spin at (k, c); constant on
                        // each half of a block since only bit c-1 matters
                        for chunk in t.chunks_exact_mut(2 * m) {
                            let (lo, hi) = chunk.split_at_mut(m);
                            if c == 0 {
                                relax(lo, hi, jv, 0.0);
                            } else {
                                let half = m / 2;
                                let (lo0, lo1) = lo.split_at_mut(half);
                                let (hi0, hi1) = hi.split_at_mut(half);
                                relax(lo0, hi0, jv, -hl);
                                relax(lo1, hi1, jv, hl);
                            }
                            if !allow0 {
                                lo.fill(f64::INFINITY);
                            }
                            if !allow1 {
                                hi.fill(f64::INFINITY);
                            }
                        }
                    }
                    None => {
                        for base in (0..n).step_by(2 * m) {
                            for s in base..base + m {
                                let o0 = t[s];
                                let o1 = t[s | m];
                                let idx = ((s >> lsh) & 1) << 1 | (s & 1);
                                let n0 = (o0 - jv).min(o1 + jv) + hc[idx];
                                let n1 = (o0 + jv).min(o1 - jv) + hc[4 | idx];
                                t[s] = if allow0 { n0 } else { f64::INFINITY };
                                t[s | m] = if allow1 { n1 } else { f64::INFINITY };
                            }
                        }
                    }
                    Some(rec) => {
                        for base in (0..n).step_by(2 * m) {
                            for s in base..base + m {
                                let o0 = t[s];
                                let o1 = t[s | m];
                                let idx = ((s >> lsh) & 1) << 1 | (s & 1);
                                let (a0, a1) = (o0 - jv, o1 + jv);
                                let (b0, b1) = (o0 + jv, o1 - jv);
                                rec[s] = u8::from(a1 < a0) | near_tie(a0, a1) << 1;
                                rec[s | m] = u8::from(b1 < b0) | near_tie(b0, b1) << 1;
                                t[s] = if allow0 {
                                    a0.min(a1) + hc[idx]
                                } else {
                                    f64::INFINITY
                                };
                                t[s | m] = if allow1 {
                                    b0.min(b1) + hc[4 | idx]
                                } else {
                                    f64::INFINITY
                                };
                            }
                        }
                    }
                }
                step += 1;
            }
        }
    }

    fn solve<const K: usize>(
        &self,
        closings: [Closing; K],
        tie: TiePolicy,
    ) -> Result<[Vec<i8>; K]> {
        let l = self.l;
        let n = 1usize << l;
        let row1: Vec<f64> = (0..n).map(|s| self.row_energy(1, s)).collect();
        let v0 = self.vertical_table(0);
        let vc = self.vertical_table(l - 1);
        let mut t = vec![0.0; n];

        let mut best: [Best; K] = std::array::from_fn(|_| Best {
            value: f64::INFINITY,
            second: f64::INFINITY,
            row0: usize::MAX,
        });
        for r0 in self.first_rows() {
            self.sweep(r0, &row1, &v0, &mut t, None);
            for (b, closing) in best.iter_mut().zip(closings) {
                let (value, _, _) = close(&t, &vc, r0, closing);
                if value < b.value {
                    b.second = b.value;
                    b.value = value;
                    b.row0 = r0;
                } else if value < b.second {
                    b.second = value;
                }
            }
        }

        let steps = (l - 2) * l;
        let mut record = vec![0u8; steps * n];
        let mut out: [Vec<i8>; K] = std::array::from_fn(|_| Vec::new());
        for (slot, (b, closing)) in out.iter_mut().zip(best.iter().zip(closings)) {
            if b.row0 == usize::MAX || !b.value.is_finite() {
                return Err(Error::Invariant("no admissible configuration".into()));
            }
            check_tie(b.second - b.value, tie)?;
            self.sweep(b.row0, &row1, &v0, &mut t, Some(&mut record));
            let (_, last, gap) = close(&t, &vc, b.row0, closing);
            check_tie(gap, tie)?;

            let mut rows = vec![0usize; l];
            rows[0] = b.row0;
            let mut s = last;
            for k in (2..l).rev() {
                rows[k] = s;
                for c in (0..l).rev() {
                    let step = (k - 2) * l + c;
                    let flags = record[step * n + s];
                    if flags & 2 != 0 {
                        check_tie(0.0, tie)?;
                    }
                    s = (s & !(1 << c)) | (usize::from(flags & 1) << c);
                }
            }
            rows[1] = s;

            let mut spins = vec![1i8; l * l];
            for (k, &row) in rows.iter().enumerate() {
                let p = (self.start + k) % l;
                for c in 0..l {
                    if (row >> c) & 1 == 1 {
                        spins[p * l + c] = -1;
                    }
                }
            }
            *slot = spins;
        }
        Ok(out)
    }
}

/// One site step on a pair of half-blocks: `lo` holds states whose
/// replaced spin is +1, `hi` those where it is -1.
#[inline(always)]
fn relax(lo: &mut [f64], hi: &mut [f64], jv: f64, g: f64) {
    for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
        let (o0, o1) = (*a, *b);
        let (p0, p1) = (o0 - jv, o1 + jv);
        let (q0, q1) = (o0 + jv, o1 - jv);
        *a = if p1 < p0 { p1 } else { p0 } + g;
        *b = if q1 < q0 { q1 } else { q0 } - g;
    }
}

#[inline(always)]
fn near_tie(a: f64, b: f64) -> u8 {
    u8::from(a.is_finite() && b.is_finite() && (a - b).abs() < TIE_TOLERANCE)
}

/// Minimum over last-row states of frontier value plus closing bonds.
/// Returns `(min, argmin, gap to the runner-up)`.
fn close(t: &[f64], vc: &[f64], r0: usize, closing: Closing) -> (f64, usize, f64) {
    let sign = match closing {
        Closing::Periodic => 1.0,
        Closing::Antiperiodic => -1.0,
    };
    let (mut best, mut arg, mut second) = (f64::INFINITY, 0, f64::INFINITY);
    for (s, &ts) in t.iter().enumerate() {
        let v = ts + sign * vc[s ^ r0];
        if v < best {
            second = best;
            best = v;
            arg = s;
        } else if v < second {
            second = v;
        }
    }
    (best, arg, second - best)
}

/// Two-state chain DP around a ring, conditioned on the first spin.
fn ring(j: &CouplingField, pins: &Pinning, tie: TiePolicy) -> Result<Vec<i8>> {
    let n = j.lattice().num_sites();
    let allowed = |site: usize, b: usize| match pins.get(site) {
        None => true,
        Some(1) => b == 0,
        Some(_) => b == 1,
    };
    let firsts: Vec<usize> = (0..2)
        .filter(|&b| allowed(0, b) && !(pins.is_free() && b == 1))
        .collect();

    let run = |b0: usize, rec: &mut Vec<[u8; 2]>| -> (f64, usize, f64) {
        let mut t = [f64::INFINITY; 2];
        t[b0] = 0.0;
        rec.clear();
        for site in 1..n {
            let jv = j.get(site - 1);
            let mut next = [f64::INFINITY; 2];
            let mut flags = [0u8; 2];
            for (nb, slot) in next.iter_mut().enumerate() {
                if !allowed(site, nb) {
                    continue;
                }
                let a0 = t[0] + bond(0, nb, jv);
                let a1 = t[1] + bond(1, nb, jv);
                *slot = a0.min(a1);
                flags[nb] = u8::from(a1 < a0) | near_tie(a0, a1) << 1;
            }
            rec.push(flags);
            t = next;
        }
        let jc = j.get(n - 1);
        let c0 = t[0] + bond(0, b0, jc);
        let c1 = t[1] + bond(1, b0, jc);
        if c1 < c0 {
            (c1, 1, c0 - c1)
        } else {
            (c0, 0, c1 - c0)
        }
    };

    let mut rec = Vec::new();
    let mut results = Vec::new();
    for &b0 in &firsts {
        let (v, _, _) = run(b0, &mut rec);
        results.push((v, b0));
    }
    let (mut best, mut second) = ((f64::INFINITY, 0), f64::INFINITY);
    for &(v, b0) in &results {
        if v < best.0 {
            second = best.0;
            best = (v, b0);
        } else if v < second {
            second = v;
        }
    }
    if !best.0.is_finite() {
        return Err(Error::Invariant("no admissible configuration".into()));
    }
    check_tie(second - best.0, tie)?;
    let (_, last, gap) = run(best.1, &mut rec);
    check_tie(gap, tie)?;
    let mut bits = vec![0usize; n];
    bits[0] = best.1;
    bits[n - 1] = last;
    let mut cur = last;
    for site in (1..n).rev() {
        let flags = rec[site - 1][cur];
        if flags & 2 != 0 {
            check_tie(0.0, tie)?;
        }
        bits[site] = cur;
        cur = usize::from(flags & 1);
    }
    Ok(bits
        .into_iter()
        .map(|b| if b == 1 { -1 } else { 1 })
        .collect())
}

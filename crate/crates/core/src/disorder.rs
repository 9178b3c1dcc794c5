//! Coupling laws, reproducible seeding and coupling fields.
//!
//! Every random draw is a pure function of a [`SeedSpec`]: the master seed
//! keys a ChaCha8 generator and the (stream, substream, purpose) triple is
//! hashed into its 64-bit stream id, so workers never share RNG state and
//! results do not depend on execution order.

use std::fmt;
use std::io::{BufRead, Write};
use std::sync::Arc;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

use crate::error::{Error, Result};
use crate::lattice::{EdgeId, Shift, SiteId, TorusLattice, Translate};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Purpose {
    Couplings,
    Resample,
    Perturbation,
    Bootstrap,
}

impl Purpose {
    fn tag(self) -> u64 {
        match self {
            Purpose::Couplings => 0x636f_7570,
            Purpose::Resample => 0x7265_7361,
            Purpose::Perturbation => 0x7065_7274,
            Purpose::Bootstrap => 0x626f_6f74,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SeedSpec {
    pub master: u64,
    pub stream: u64,
    pub substream: u64,
    pub purpose: Purpose,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl SeedSpec {
    pub fn new(master: u64, stream: u64, purpose: Purpose) -> Self {
        SeedSpec {
            master,
            stream,
            substream: 0,
            purpose,
        }
    }

    pub fn with_substream(self, substream: u64) -> Self {
        SeedSpec { substream, ..self }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        let mut z = self.master;
        for chunk in key.chunks_exact_mut(8) {
            z = splitmix64(z);
            chunk.copy_from_slice(&z.to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(key);
        let id = splitmix64(
            splitmix64(splitmix64(self.purpose.tag()) ^ self.stream)
                ^ self.substream.rotate_left(32),
        );
        rng.set_stream(id);
        rng
    }
}

/// A single-edge coupling distribution.
pub trait CouplingLaw: Send + Sync + fmt::Debug {
    /// Canonical spec string, parseable by [`DisorderModel::parse`].
    fn spec(&self) -> String;
    fn sample(&self, rng: &mut dyn RngCore) -> f64;
    /// False for laws with atoms.
    fn is_continuous(&self) -> bool;
    fn variance(&self) -> f64;
    fn fourth_moment(&self) -> f64;
}

#[derive(Debug, Clone)]
pub struct Normal {
    pub sigma: f64,
}

impl CouplingLaw for Normal {
    fn spec(&self) -> String {
        if self.sigma == 1.0 {
            "normal".into()
        } else {
            format!("normal:{}", self.sigma)
        }
    }
    fn sample(&self, rng: &mut dyn RngCore) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        self.sigma * z
    }
    fn is_continuous(&self) -> bool {
        true
    }
    fn variance(&self) -> f64 {
        self.sigma * self.sigma
    }
    fn fourth_moment(&self) -> f64 {
        3.0 * self.sigma.powi(4)
    }
}

/// Uniform on `[-a, a]`.
#[derive(Debug, Clone)]
pub struct Uniform {
    pub half_width: f64,
}

impl CouplingLaw for Uniform {
    fn spec(&self) -> String {
        format!("uniform:{}", self.half_width)
    }
    fn sample(&self, rng: &mut dyn RngCore) -> f64 {
        // 53 random mantissa bits, mapped to [-a, a)
        let u = (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
        self.half_width * (2.0 * u - 1.0)
    }
    fn is_continuous(&self) -> bool {
        true
    }
    fn variance(&self) -> f64 {
        self.half_width.powi(2) / 3.0
    }
    fn fourth_moment(&self) -> f64 {
        self.half_width.powi(4) / 5.0
    }
}

/// Symmetrized exponential with scale `b`.
#[derive(Debug, Clone)]
pub struct Laplace {
    pub scale: f64,
}

impl CouplingLaw for Laplace {
    fn spec(&self) -> String {
        format!("laplace:{}", self.scale)
    }
    fn sample(&self, rng: &mut dyn RngCore) -> f64 {
        let e: f64 = Exp1.sample(rng);
        let sign = if rng.next_u32() & 1 == 0 { 1.0 } else { -1.0 };
        sign * self.scale * e
    }
    fn is_continuous(&self) -> bool {
        true
    }
    fn variance(&self) -> f64 {
        2.0 * self.scale.powi(2)
    }
    fn fourth_moment(&self) -> f64 {
        24.0 * self.scale.powi(4)
    }
}

/// `+J` or `-J` with equal probability. Registered so that it can be named
/// and rejected with a precise message.
#[derive(Debug, Clone)]
pub struct Bimodal {
    pub magnitude: f64,
}

impl CouplingLaw for Bimodal {
    fn spec(&self) -> String {
        format!("pm:{}", self.magnitude)
    }
    fn sample(&self, rng: &mut dyn RngCore) -> f64 {
        if rng.next_u32() & 1 == 0 {
            self.magnitude
        } else {
            -self.magnitude
        }
    }
    fn is_continuous(&self) -> bool {
        false
    }
    fn variance(&self) -> f64 {
        self.magnitude.powi(2)
    }
    fn fourth_moment(&self) -> f64 {
        self.magnitude.powi(4)
    }
}

type LawCtor = fn(&[f64]) -> Result<Box<dyn CouplingLaw>>;

fn one_param(name: &str, params: &[f64], default: f64) -> Result<f64> {
    let v = match params {
        [] => default,
        [v] => *v,
        _ => {
            return Err(Error::Model(format!(
                "`{name}` takes at most one parameter"
            )))
        }
    };
    if !(v.is_finite() && v > 0.0) {
        return Err(Error::Model(format!(
            "`{name}` parameter must be positive, got {v}"
        )));
    }
    Ok(v)
}

/// Coupling laws by name. Parameters follow a colon, comma separated.
pub const LAW_REGISTRY: &[(&str, LawCtor)] = &[
    ("normal", |p| {
        Ok(Box::new(Normal {
            sigma: one_param("normal", p, 1.0)?,
        }))
    }),
    ("gaussian", |p| {
        Ok(Box::new(Normal {
            sigma: one_param("gaussian", p, 1.0)?,
        }))
    }),
    ("uniform", |p| {
        Ok(Box::new(Uniform {
            half_width: one_param("uniform", p, 1.0)?,
        }))
    }),
    ("laplace", |p| {
        Ok(Box::new(Laplace {
            scale: one_param("laplace", p, 1.0)?,
        }))
    }),
    ("pm", |p| {
        Ok(Box::new(Bimodal {
            magnitude: one_param("pm", p, 1.0)?,
        }))
    }),
];

/// A validated coupling law: continuous, symmetric, finite fourth moment.
#[derive(Clone, Debug)]
pub struct DisorderModel {
    law: Arc<dyn CouplingLaw>,
}

impl DisorderModel {
    pub fn standard_normal() -> Self {
        DisorderModel {
            law: Arc::new(Normal { sigma: 1.0 }),
        }
    }

    pub fn from_law(law: Arc<dyn CouplingLaw>) -> Result<Self> {
        if !law.is_continuous() {
            return Err(Error::Model(format!(
                "`{}` has atoms; ground states are only a.s. unique for continuous laws",
                law.spec()
            )));
        }
        let m4 = law.fourth_moment();
        if !m4.is_finite() {
            return Err(Error::Model(format!(
                "`{}` has infinite fourth moment",
                law.spec()
            )));
        }
        Ok(DisorderModel { law })
    }

    pub fn parse(spec: &str) -> Result<Self> {
        let (name, rest) = spec.split_once(':').unwrap_or((spec, ""));
        let params = rest
            .split(',')
            .filter(|s| !s.trim().is_empty())
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Model(format!("bad parameter `{s}` in `{spec}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        let ctor = LAW_REGISTRY
            .iter()
            .find(|(n, _)| *n == name.trim())
            .map(|(_, c)| c)
            .ok_or_else(|| {
                let known: Vec<_> = LAW_REGISTRY.iter().map(|(n, _)| *n).collect();
                Error::Model(format!(
                    "unknown law `{name}` (known: {})",
                    known.join(", ")
                ))
            })?;
        Self::from_law(Arc::from(ctor(&params)?))
    }

    pub fn law(&self) -> &dyn CouplingLaw {
        &*self.law
    }

    pub fn spec(&self) -> String {
        self.law.spec()
    }
}

/// One real coupling per lattice edge.
#[derive(Clone, Debug, PartialEq)]
pub struct CouplingField {
    lattice: Arc<TorusLattice>,
    values: Vec<f64>,
}

impl CouplingField {
    pub fn new(lattice: Arc<TorusLattice>, values: Vec<f64>) -> Result<Self> {
        if values.len() != lattice.num_edges() {
            return Err(Error::Geometry(format!(
                "{} coupling values for {} edges",
                values.len(),
                lattice.num_edges()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Model(format!("non-finite coupling {v}")));
        }
        Ok(CouplingField { lattice, values })
    }

    pub fn constant(lattice: Arc<TorusLattice>, value: f64) -> Self {
        let n = lattice.num_edges();
        CouplingField {
            lattice,
            values: vec![value; n],
        }
    }

    pub fn lattice(&self) -> &Arc<TorusLattice> {
        &self.lattice
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, e: EdgeId) -> f64 {
        self.values[e]
    }

    pub fn set(&mut self, e: EdgeId, v: f64) {
        self.values[e] = v;
    }

    pub fn with_edge(&self, e: EdgeId, v: f64) -> Self {
        let mut out = self.clone();
        out.values[e] = v;
        out
    }

    /// Edgewise sum.
    pub fn plus(&self, other: &CouplingField) -> Self {
        debug_assert_eq!(self.values.len(), other.values.len());
        CouplingField {
            lattice: self.lattice.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }

    pub fn negate_edges(&self, edges: &[EdgeId]) -> Self {
        let mut out = self.clone();
        for &e in edges {
            out.values[e] = -out.values[e];
        }
        out
    }

    /// Flips the sign of every coupling at `site`.
    pub fn gauge(&self, site: SiteId) -> Self {
        let edges: Vec<_> = self
            .lattice
            .incident(site)
            .iter()
            .map(|&(e, _)| e)
            .collect();
        self.negate_edges(&edges)
    }

    pub fn abs_sum(&self, edges: &[EdgeId]) -> f64 {
        edges.iter().map(|&e| self.values[e].abs()).sum()
    }
}

impl Translate for CouplingField {
    fn translated(&self, lat: &TorusLattice, t: Shift) -> Self {
        let mut values = vec![0.0; self.values.len()];
        for (e, &v) in self.values.iter().enumerate() {
            values[lat.shift_edge(e, t)] = v;
        }
        CouplingField {
            lattice: self.lattice.clone(),
            values,
        }
    }
}

/// Draws one coupling per edge, in edge-id order.
pub fn sample_couplings(
    model: &DisorderModel,
    lat: &Arc<TorusLattice>,
    seed: SeedSpec,
) -> CouplingField {
    let mut rng = seed.rng();
    let values = (0..lat.num_edges())
        .map(|_| model.law.sample(&mut rng))
        .collect();
    CouplingField {
        lattice: lat.clone(),
        values,
    }
}

/// Keeps the couplings on `fixed` bit-for-bit and redraws the rest.
pub fn resample_outside(
    model: &DisorderModel,
    j: &CouplingField,
    fixed: &[EdgeId],
    seed: SeedSpec,
) -> CouplingField {
    let mut out = sample_couplings(model, &j.lattice, seed);
    for &e in fixed {
        out.values[e] = j.values[e];
    }
    out
}

/// Sets the couplings on edges with both endpoints in `block` to zero.
pub fn zero_inside(j: &CouplingField, block: &[SiteId]) -> CouplingField {
    let lat = &j.lattice;
    let mut inside = vec![false; lat.num_sites()];
    for &s in block {
        inside[s] = true;
    }
    let mut out = j.clone();
    for (id, e) in lat.edges().iter().enumerate() {
        if inside[e.a] && inside[e.b] {
            out.values[id] = 0.0;
        }
    }
    out
}

/// Where experiment couplings come from. Random models and deterministic
/// diagnostic fields share this interface.
pub trait CouplingSource: Send + Sync {
    fn describe(&self) -> String;

    fn draw(&self, lat: &Arc<TorusLattice>, seed: SeedSpec) -> CouplingField;

    /// Redraws every coupling outside `fixed`, keeping `fixed` exactly.
    fn redraw_outside(&self, j: &CouplingField, fixed: &[EdgeId], seed: SeedSpec) -> CouplingField {
        let mut out = self.draw(j.lattice(), seed);
        for &e in fixed {
            out.values[e] = j.values[e];
        }
        out
    }
}

impl CouplingSource for DisorderModel {
    fn describe(&self) -> String {
        self.spec()
    }

    fn draw(&self, lat: &Arc<TorusLattice>, seed: SeedSpec) -> CouplingField {
        sample_couplings(self, lat, seed)
    }
}

/// Every coupling equal to one value. Deterministic; only meant for
/// diagnostics (the ground state may be degenerate).
#[derive(Clone, Copy, Debug)]
pub struct ConstantField(pub f64);

impl CouplingSource for ConstantField {
    fn describe(&self) -> String {
        format!("const:{}", self.0)
    }

    fn draw(&self, lat: &Arc<TorusLattice>, _seed: SeedSpec) -> CouplingField {
        CouplingField::constant(lat.clone(), self.0)
    }
}

/// Writes `row col row col value` lines, lexicographically smaller endpoint
/// first, values with 17 significant digits. `header` lines are emitted as
/// `# ` comments.
pub fn write_couplings<W: Write>(
    mut w: W,
    j: &CouplingField,
    header: &[(String, String)],
) -> Result<()> {
    for (k, v) in header {
        writeln!(w, "# {k}: {v}")?;
    }
    let lat = &j.lattice;
    for (id, e) in lat.edges().iter().enumerate() {
        let (r1, c1) = lat.row_col(e.a);
        let (r2, c2) = lat.row_col(e.b);
        writeln!(w, "{r1} {c1} {r2} {c2} {:.16e}", j.values[id])?;
    }
    Ok(())
}

pub fn read_couplings<R: BufRead>(r: R, lat: &Arc<TorusLattice>) -> Result<CouplingField> {
    let mut values = vec![f64::NAN; lat.num_edges()];
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = || Error::Parse(format!("coupling line {}: `{line}`", lineno + 1));
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 5 {
            return Err(bad());
        }
        let idx: Vec<usize> = f[..4]
            .iter()
            .map(|s| s.parse().map_err(|_| bad()))
            .collect::<Result<_>>()?;
        let v: f64 = f[4].parse().map_err(|_| bad())?;
        let x = lat.site_from_row_col(idx[0], idx[1])?;
        let y = lat.site_from_row_col(idx[2], idx[3])?;
        let e = lat.find_edge(x, y).ok_or_else(bad)?;
        values[e] = v;
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::Parse(
            "coupling file does not cover every edge".into(),
        ));
    }
    CouplingField::new(lat.clone(), values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::build_torus;

    fn lat(side: usize) -> Arc<TorusLattice> {
        Arc::new(build_torus(side, 2).unwrap())
    }

    #[test]
    fn sampling_is_deterministic() {
        let m = DisorderModel::standard_normal();
        let l = lat(5);
        let s = SeedSpec::new(7, 3, Purpose::Couplings);
        assert_eq!(sample_couplings(&m, &l, s), sample_couplings(&m, &l, s));
        let other = sample_couplings(&m, &l, SeedSpec::new(7, 4, Purpose::Couplings));
        assert_ne!(sample_couplings(&m, &l, s), other);
        let sub = sample_couplings(&m, &l, s.with_substream(1));
        assert_ne!(sample_couplings(&m, &l, s), sub);
    }

    #[test]
    fn atomic_laws_rejected() {
        assert!(matches!(DisorderModel::parse("pm"), Err(Error::Model(_))));
        assert!(matches!(DisorderModel::parse("pm:2"), Err(Error::Model(_))));
        assert!(DisorderModel::parse("cauchy").is_err());
        assert!(DisorderModel::parse("uniform:-1").is_err());
        assert!(DisorderModel::parse("normal:1,2").is_err());
        assert_eq!(DisorderModel::parse("normal").unwrap().spec(), "normal");
        assert_eq!(
            DisorderModel::parse("uniform:0.5").unwrap().spec(),
            "uniform:0.5"
        );
        assert!(DisorderModel::parse("laplace:2").is_ok());
    }

    #[test]
    fn uniform_support() {
        let m = DisorderModel::parse("uniform:1").unwrap();
        let l = lat(20);
        let j = sample_couplings(&m, &l, SeedSpec::new(1, 0, Purpose::Couplings));
        assert!(j.values().iter().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn resample_keeps_fixed_edges() {
        let m = DisorderModel::standard_normal();
        let l = lat(6);
        let j = sample_couplings(&m, &l, SeedSpec::new(1, 0, Purpose::Couplings));
        let all: Vec<_> = (0..l.num_edges()).collect();
        let rs = SeedSpec::new(1, 0, Purpose::Resample);
        assert_eq!(resample_outside(&m, &j, &all, rs), j);
        let fresh = resample_outside(&m, &j, &[], rs);
        assert_eq!(fresh, sample_couplings(&m, &l, rs));
        let block = crate::lattice::make_window(&l, 2, 0).unwrap();
        let r = resample_outside(&m, &j, block.interior_edges(), rs);
        for &e in block.interior_edges() {
            assert_eq!(r.get(e).to_bits(), j.get(e).to_bits());
        }
        assert!((0..l.num_edges()).any(|e| r.get(e) != j.get(e)));
    }

    #[test]
    fn zero_inside_edges() {
        let l = lat(4);
        let j = CouplingField::constant(l.clone(), 1.5);
        assert_eq!(zero_inside(&j, &[]), j);
        let all: Vec<_> = (0..l.num_sites()).collect();
        assert!(zero_inside(&j, &all).values().iter().all(|&v| v == 0.0));
        let z = zero_inside(&j, &[0, 1]);
        assert_eq!(z.values().iter().filter(|&&v| v == 0.0).count(), 1);
    }

    #[test]
    fn coupling_file_roundtrip() {
        let m = DisorderModel::standard_normal();
        let l = lat(4);
        let j = sample_couplings(&m, &l, SeedSpec::new(9, 0, Purpose::Couplings));
        let mut buf = Vec::new();
        write_couplings(&mut buf, &j, &[("model".into(), "normal".into())]).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# model: normal\n"));
        assert!(
            text.contains("0 0 3 0 "),
            "wrap edge written smaller endpoint first"
        );
        let back = read_couplings(&buf[..], &l).unwrap();
        assert_eq!(back, j);
        assert!(read_couplings(&b"0 0 0 1 1.0\n"[..], &l).is_err());
    }
}

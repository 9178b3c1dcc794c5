//! One line per acceptance criterion; exits non-zero if any fails.

use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::Rng;

use eaglass::disorder::{sample_couplings, CouplingField, DisorderModel, Purpose, SeedSpec};
use eaglass::excitation::{
    build_excitation_table, critical_scan, sandwich_check, BlockPerturbation,
};
use eaglass::experiment::{self, split_header, RunConfig};
use eaglass::fluctuation::{
    couplings_seed, martingale_decomposition, sample_many, variance_scan, MetastateProxyPair,
};
use eaglass::lattice::{build_torus, translate, TorusLattice, Window};
use eaglass::solver::{dp_gs_2d, exhaustive_gs, TiePolicy, TransferMatrix};

const TOL: f64 = 1e-9;
const STRICT: TiePolicy = TiePolicy::Strict;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn normal() -> DisorderModel {
    DisorderModel::standard_normal()
}

fn torus(side: usize, dim: usize) -> Arc<TorusLattice> {
    Arc::new(build_torus(side, dim).unwrap())
}

fn draw(lat: &Arc<TorusLattice>, criterion: u64, i: usize) -> CouplingField {
    sample_couplings(
        &normal(),
        lat,
        SeedSpec::new(criterion, i as u64, Purpose::Couplings),
    )
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut failures = 0;
    for side in [3, 4] {
        let lat = torus(side, 2);
        for i in 0..200 {
            let j = draw(&lat, 1 + side as u64, i);
            let (a, b) = (exhaustive_gs(&j).unwrap(), dp_gs_2d(&j).unwrap());
            if a.spins != b.spins || (a.energy - b.energy).abs() > TOL {
                failures += 1;
            }
        }
    }
    let t = start.elapsed();
    outcome(
        failures == 0 && t < Duration::from_secs(60),
        format!("{failures} mismatches in 400 instances, {t:.2?}"),
    )
}

fn criterion_2() -> Outcome {
    let lat = torus(5, 2);
    let mut failures = 0;
    for extent in [[1, 2], [2, 2]] {
        for i in 0..100 {
            let j = draw(&lat, 2, i);
            let b = Window::rect(&lat, lat.coords(i % 25), extent).unwrap();
            let table = build_excitation_table(&TransferMatrix, &j, b.sites(), STRICT).unwrap();
            let gs = dp_gs_2d(&j).unwrap();
            let ok = table.check_invariants(&j).is_ok()
                && table.state(table.select_ground().unwrap()) == &gs.spins;
            failures += usize::from(!ok);
        }
    }
    outcome(failures == 0, format!("{failures} failures in 200 tables"))
}

fn criterion_3() -> Outcome {
    let lat = torus(5, 2);
    let shapes = [[1, 2], [2, 1], [2, 2], [1, 3], [1, 4]];
    let mut rng = SeedSpec::new(3, 0, Purpose::Perturbation).rng();
    let mut failures = 0;
    for i in 0..100 {
        let j = draw(&lat, 3, i);
        let b = Window::rect(&lat, lat.coords((7 * i) % 25), shapes[i % shapes.len()]).unwrap();
        let table = build_excitation_table(&TransferMatrix, &j, b.sites(), STRICT).unwrap();
        for _ in 0..10 {
            let values: Vec<_> = table
                .block_edges()
                .iter()
                .map(|&e| (e, rng.gen_range(-2.0..2.0)))
                .collect();
            let p = BlockPerturbation::new(&lat, &table, &values).unwrap();
            let direct = dp_gs_2d(&j.plus(&p.to_field(lat.clone()))).unwrap();
            failures += usize::from(table.perturbed_ground(&p).unwrap() != direct.spins);
        }
    }
    outcome(
        failures == 0,
        format!("{failures} failures in 1000 perturbations"),
    )
}

fn criterion_4() -> Outcome {
    let lat = torus(4, 2);
    let mut bad_scans = 0;
    let mut crossings = 0;
    for i in 0..100 {
        let j = draw(&lat, 4, i);
        let edge = (3 * i) % lat.num_edges();
        match critical_scan(&TransferMatrix, &j, edge, (-4.0, 4.0), 80, STRICT) {
            Ok(s) => {
                let slopes_ok = [s.left_slope, s.right_slope].iter().all(|v| v.abs() == 1.0);
                let shape_ok = match s.breakpoint {
                    Some(x) => {
                        crossings += 1;
                        s.left_slope == 1.0
                            && s.right_slope == -1.0
                            && (x - s.breakpoint_exact.unwrap()).abs() < 1e-6
                    }
                    None => s.left_slope == s.right_slope,
                };
                bad_scans += usize::from(!(slopes_ok && shape_ok));
            }
            Err(_) => bad_scans += 1,
        }
    }

    let ring = torus(3, 1);
    let j = CouplingField::new(ring, vec![0.0, 2.0, -1.0]).unwrap();
    let x = critical_scan(&TransferMatrix, &j, 0, (-2.0, 4.0), 60, STRICT)
        .unwrap()
        .breakpoint;
    let ring_ok = x.is_some_and(|x| (x - 1.0).abs() <= 1e-6);

    let mut violations = 0;
    for i in 0..100 {
        let j = draw(&lat, 40, i);
        let b = Window::rect(&lat, lat.coords(i % 16), [2, 2]).unwrap();
        let edge = b.interior_edges()[i % 4];
        for eps in [0.1, -0.1, 0.01, -0.01] {
            let s = sandwich_check(&TransferMatrix, &j, b.sites(), edge, eps, STRICT).unwrap();
            let (lo, hi) = s.residuals();
            violations += usize::from(lo < -TOL || hi < -TOL);
        }
    }
    outcome(
        bad_scans == 0 && ring_ok && violations == 0,
        format!(
            "{bad_scans} bad scans ({crossings} with a breakpoint), ring breakpoint {x:?}, {violations} sandwich violations in 400"
        ),
    )
}

fn criterion_5() -> Outcome {
    let lat = torus(5, 2);
    let pair = MetastateProxyPair::standard(2, 5, 2).unwrap();
    let mut failures = 0;
    for i in 0..50 {
        let t = [(i % 5) as i64, ((3 * i) % 5) as i64 - 2];
        let j = draw(&lat, 5, i);
        let jt = translate(&lat, t, &j);

        let (gs, gt) = (dp_gs_2d(&j).unwrap(), dp_gs_2d(&jt).unwrap());
        let gs_ok =
            gt.spins.same_up_to_flip(&translate(&lat, t, &gs.spins)) && gt.energy == gs.energy;

        let b = Window::rect(&lat, lat.coords(i % 25), [2, 2]).unwrap();
        let bt: Vec<_> = b.sites().iter().map(|&s| lat.shift_site(s, t)).collect();
        let table = build_excitation_table(&TransferMatrix, &j, b.sites(), STRICT).unwrap();
        let moved = build_excitation_table(&TransferMatrix, &jt, &bt, STRICT).unwrap();
        let table_ok = moved == translate(&lat, t, &table);

        let s = pair
            .evaluate(&TransferMatrix, j.clone(), couplings_seed(5, i), STRICT)
            .unwrap();
        let st = translate(&lat, t, &pair)
            .evaluate(&TransferMatrix, jt, couplings_seed(5, i), STRICT)
            .unwrap();
        let g_ok = st.g == s.g && st.boundary_sum == s.boundary_sum;
        failures += usize::from(!(gs_ok && table_ok && g_ok));
    }
    outcome(
        failures == 0,
        format!("{failures} failures in 50 instances"),
    )
}

fn criterion_6() -> Outcome {
    let pair = MetastateProxyPair::standard(2, 8, 4).unwrap();
    let samples = sample_many(&normal(), &TransferMatrix, &pair, 1000, 6, STRICT).unwrap();
    let within = samples.iter().filter(|s| s.g.abs() <= s.bound()).count();
    let tight = samples
        .iter()
        .filter(|s| s.g.abs() <= s.tight_bound() + TOL)
        .count();
    outcome(
        within == 1000,
        format!("{within}/1000 within 4 sum|J|, {tight}/1000 within 2 sum|J|"),
    )
}

fn criterion_7() -> Outcome {
    let start = Instant::now();
    let pair = MetastateProxyPair::standard(2, 8, 4).unwrap();
    let rec =
        martingale_decomposition(&normal(), &TransferMatrix, &pair, 2, 200, 50, 7, STRICT).unwrap();
    let t = start.elapsed();
    outcome(
        rec.holds() && t < Duration::from_secs(600),
        format!(
            "sum of increments {:.4} vs Var {:.4}, slack {:.4} (combined se {:.4}), {t:.1?}",
            rec.increment_sum(),
            rec.total_var,
            rec.slack,
            rec.combined_se
        ),
    )
}

fn criterion_8() -> Outcome {
    let start = Instant::now();
    let scan = variance_scan(
        &normal(),
        &TransferMatrix,
        2,
        &[2, 3, 4, 5, 6],
        2,
        500,
        8,
        STRICT,
    )
    .unwrap();
    let t = start.elapsed();
    for r in &scan.rows {
        println!(
            "    |W| = {:2}  M = {:2}  Var = {:.4}  SE = {:.4}",
            r.area, r.torus_size, r.var, r.se
        );
    }
    let fit = scan.fit;
    let complete = scan.rows.len() == 5
        && scan.rows.iter().all(|r| r.var >= 0.0 && r.se.is_finite())
        && fit.is_some();
    let detail = match fit {
        Some(f) => format!(
            "exponent {:.3} (95% CI {:.3} .. {:.3}), non-monotone at {:?}, {t:.1?}",
            f.slope, f.ci_low, f.ci_high, scan.non_monotone
        ),
        None => "no fit".into(),
    };
    outcome(complete && t < Duration::from_secs(1800), detail)
}

fn criterion_9() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let base = RunConfig {
        seed: 9,
        samples: 30,
        instances: 3,
        size: 6,
        window: 2,
        block: 1,
        n_outer: 6,
        n_inner: 4,
        window_sizes: vec![2, 3],
        sizes: vec![4, 5],
        bootstrap: 50,
        check_instances: 5,
        edge: Some([0, 0, 1]),
        epsilons: vec![0.1, -0.1],
        probe_edge: Some([0, 0, 1]),
        dump_samples: true,
        ..RunConfig::default()
    };
    let names = [
        "gs",
        "excite",
        "scan-edge",
        "fluct",
        "martingale",
        "variance",
        "mgf",
        "weights",
        "check",
    ];
    let mut differing = Vec::new();
    for name in names {
        let mut bodies = Vec::new();
        for (run, workers) in [(0, 1), (1, 1), (2, 4)] {
            let cfg = RunConfig {
                experiment: name.into(),
                workers,
                out: dir.path().join(format!("{name}-{run}")),
                ..base.clone()
            };
            let out = experiment::run(&cfg).unwrap();
            let mut files: Vec<_> = out
                .files
                .iter()
                .map(|f| {
                    let text = std::fs::read_to_string(f).unwrap();
                    (f.file_name().unwrap().to_owned(), split_header(&text).1)
                })
                .collect();
            files.sort();
            bodies.push(files);
        }
        if bodies[0] != bodies[1] || bodies[0] != bodies[2] {
            differing.push(name);
        }
    }
    outcome(
        differing.is_empty(),
        format!("9 experiments x 3 runs (workers 1, 1, 4); differing: {differing:?}"),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("oracle equivalence", criterion_1),
        ("excitation selection", criterion_2),
        ("coupling covariance", criterion_3),
        ("critical scans and sandwich", criterion_4),
        ("translation covariance", criterion_5),
        ("boundary bound", criterion_6),
        ("martingale inequality", criterion_7),
        ("variance scan", criterion_8),
        ("determinism", criterion_9),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let o = f();
        println!(
            "criterion {} {name}: {}  {}",
            i + 1,
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        failed += usize::from(!o.pass);
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}

use std::sync::Arc;

use proptest::prelude::*;

use super::*;
use crate::disorder::{sample_couplings, DisorderModel, Purpose, SeedSpec};
use crate::lattice::{build_torus, translate, Window};
use crate::solver::{dp_gs_2d, Exhaustive, Pinning, TransferMatrix};

fn gaussian(side: usize, dim: usize, seed: u64) -> CouplingField {
    let lat = Arc::new(build_torus(side, dim).unwrap());
    sample_couplings(
        &DisorderModel::standard_normal(),
        &lat,
        SeedSpec::new(seed, 3, Purpose::Couplings),
    )
}

/// Brute-force constrained minimum energy.
fn naive_constrained(j: &CouplingField, pins: &Pinning) -> f64 {
    let lat = j.lattice();
    let n = lat.num_sites();
    let mut best = f64::INFINITY;
    for code in 0u64..(1 << n) {
        let s: Vec<f64> = (0..n)
            .map(|v| if (code >> v) & 1 == 1 { -1.0 } else { 1.0 })
            .collect();
        if (0..n).any(|v| pins.get(v).is_some_and(|p| f64::from(p) != s[v])) {
            continue;
        }
        let e: f64 = lat
            .edges()
            .iter()
            .enumerate()
            .map(|(id, e)| -j.get(id) * s[e.a] * s[e.b])
            .sum();
        best = best.min(e);
    }
    best
}

fn block(j: &CouplingField, corner: [usize; 2], extent: [usize; 2]) -> Vec<SiteId> {
    Window::rect(j.lattice(), corner, extent)
        .unwrap()
        .sites()
        .to_vec()
}

#[test]
fn codes_round_trip() {
    for code in 0..64 {
        assert_eq!(code_from_eta(&eta_from_code(code, 6)), code);
    }
    assert_eq!(eta_from_code(0b101, 3), vec![-1, 1, -1]);
}

#[test]
fn single_site_block() {
    let j = gaussian(4, 2, 1);
    let table = build_excitation_table(&TransferMatrix, &j, &[5], TiePolicy::Strict).unwrap();
    assert_eq!(table.rows(), 2);
    assert_eq!(table.delta(0, 1), 0.0);
    let gs = dp_gs_2d(&j).unwrap();
    let code = table.select_ground().unwrap();
    assert_eq!(table.state(code), &gs.spins);
    table.check_invariants(&j).unwrap();
}

#[test]
fn ferromagnet_pair_excitation() {
    let lat = Arc::new(build_torus(4, 2).unwrap());
    let j = CouplingField::constant(lat, 1.0);
    let b = block(&j, [1, 1], [1, 2]);
    let table = build_excitation_table(&TransferMatrix, &j, &b, TiePolicy::First).unwrap();
    let aligned = code_from_eta(&[1, 1]);
    let split = code_from_eta(&[1, -1]);
    assert_eq!(table.delta(split, aligned), 8.0);
    let pins = Pinning::block(16, &b, &[1, -1]).unwrap();
    assert_eq!(table.energy(split), naive_constrained(&j, &pins));
    assert_eq!(table.select_ground().unwrap(), aligned);
}

#[test]
fn table_matches_brute_force() {
    for seed in 0..6 {
        let j = gaussian(4, 2, 10 + seed);
        let b = block(&j, [seed as usize % 4, 1], [2, 2]);
        let table = build_excitation_table(&TransferMatrix, &j, &b, TiePolicy::Strict).unwrap();
        let oracle = build_excitation_table(&Exhaustive, &j, &b, TiePolicy::Strict).unwrap();
        assert_eq!(table, oracle);
        for code in 0..table.rows() {
            let pins = Pinning::block(16, &b, &table.eta(code)).unwrap();
            assert!((table.energy(code) - naive_constrained(&j, &pins)).abs() < ENERGY_TOLERANCE);
        }
        table.check_invariants(&j).unwrap();
        let gs = dp_gs_2d(&j).unwrap();
        assert_eq!(table.state(table.select_ground().unwrap()), &gs.spins);
    }
}

#[test]
fn rejects_bad_blocks() {
    let j = gaussian(4, 2, 0);
    assert!(build_excitation_table(&TransferMatrix, &j, &[], TiePolicy::Strict).is_err());
    assert!(build_excitation_table(&TransferMatrix, &j, &[1, 1], TiePolicy::Strict).is_err());
    let big: Vec<_> = (0..7).collect();
    assert!(build_excitation_table(&TransferMatrix, &j, &big, TiePolicy::Strict).is_err());
}

#[test]
fn perturbation_covariance() {
    let mut rng = SeedSpec::new(5, 0, Purpose::Perturbation).rng();
    for seed in 0..8 {
        let j = gaussian(5, 2, 40 + seed);
        let lat = j.lattice().clone();
        let b = block(&j, [2, 3], [2, 2]);
        let table = build_excitation_table(&TransferMatrix, &j, &b, TiePolicy::Strict).unwrap();
        for _ in 0..5 {
            let values: Vec<_> = table
                .block_edges()
                .iter()
                .map(|&e| (e, 3.0 * rand::Rng::gen::<f64>(&mut rng) - 1.5))
                .collect();
            let p = BlockPerturbation::new(&lat, &table, &values).unwrap();
            let got = table.perturbed_ground(&p).unwrap();
            let direct = dp_gs_2d(&j.plus(&p.to_field(lat.clone()))).unwrap();
            assert_eq!(got, direct.spins);
        }
    }
}

#[test]
fn forcing_limit() {
    let j = gaussian(4, 2, 8);
    let lat = j.lattice().clone();
    let b = block(&j, [0, 0], [2, 2]);
    let table = build_excitation_table(&TransferMatrix, &j, &b, TiePolicy::Strict).unwrap();
    for &e in table.block_edges() {
        for k in [1e6, -1e6] {
            let p = BlockPerturbation::new(&lat, &table, &[(e, k)]).unwrap();
            let s = table.perturbed_ground(&p).unwrap();
            assert_eq!(f64::from(s.correlation(&lat, e)), k.signum());
        }
    }
    let outside = lat.edge_id(lat.site_from_row_col(3, 3).unwrap(), 0);
    assert!(BlockPerturbation::new(&lat, &table, &[(outside, 1.0)]).is_err());
}

#[test]
fn perturbation_terms_accumulate() {
    let j = gaussian(4, 2, 2);
    let lat = j.lattice().clone();
    let b = block(&j, [0, 0], [1, 2]);
    let table = build_excitation_table(&TransferMatrix, &j, &b, TiePolicy::Strict).unwrap();
    let e = table.block_edges()[0];
    let p = BlockPerturbation::zero()
        .shifted(&lat, &table, e, 0.5)
        .unwrap();
    let p = p.shifted(&lat, &table, e, 0.25).unwrap();
    assert_eq!(p.values(), vec![(e, 0.75)]);
    assert_eq!(p.energy(&[1, -1]), 0.75);
    assert_eq!(
        BlockPerturbation::restrict(&table, &j).values(),
        vec![(e, j.get(e))]
    );
}

#[test]
fn translation_moves_the_table() {
    for seed in 0..4 {
        let j = gaussian(5, 2, 60 + seed);
        let lat = j.lattice().clone();
        let t = [1 + seed as i64, -2];
        let b = block(&j, [1, 1], [1, 2]);
        let table = build_excitation_table(&TransferMatrix, &j, &b, TiePolicy::Strict).unwrap();
        let moved_b: Vec<_> = b.iter().map(|&s| lat.shift_site(s, t)).collect();
        let moved = build_excitation_table(
            &TransferMatrix,
            &translate(&lat, t, &j),
            &moved_b,
            TiePolicy::Strict,
        )
        .unwrap();
        let expect = translate(&lat, t, &table);
        for code in 0..table.rows() {
            assert_eq!(moved.state(code), expect.state(code));
            assert_eq!(moved.energy(code), expect.energy(code));
        }
    }
}

#[test]
fn export_lists_every_pattern() {
    let j = gaussian(4, 2, 3);
    let b = block(&j, [0, 0], [1, 2]);
    let table = build_excitation_table(&TransferMatrix, &j, &b, TiePolicy::Strict).unwrap();
    let mut buf = Vec::new();
    table
        .export(&mut buf, j.lattice(), &[("seed".into(), "3".into())])
        .unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("# seed: 3\n# block: (0,0) (0,1)\n"));
    assert_eq!(text.lines().filter(|l| l.starts_with("eta ")).count(), 4);
    assert_eq!(text.lines().count(), 3 + 4 + 1 + 4);
}

#[test]
fn ring_breakpoint() {
    let lat = Arc::new(build_torus(3, 1).unwrap());
    // edges: 0 = (0,1), 1 = (1,2), 2 = (0,2)
    let j = CouplingField::new(lat, vec![0.0, 2.0, -1.0]).unwrap();
    let closed = |x: f64| -f64::max(x + 1.0, -x + 3.0);
    for solver in [&Exhaustive as &dyn GroundStateSolver, &TransferMatrix] {
        let scan = critical_scan(solver, &j, 0, (-2.0, 4.0), 60, TiePolicy::Strict).unwrap();
        assert!((scan.breakpoint.unwrap() - 1.0).abs() < 1e-6);
        assert!((scan.breakpoint_exact.unwrap() - 1.0).abs() < 1e-12);
        assert_eq!((scan.left_slope, scan.right_slope), (1.0, -1.0));
        for &(v, e, _) in &scan.grid {
            assert!((e - closed(v)).abs() < 1e-12);
        }
    }
}

#[test]
fn ferromagnet_breakpoint() {
    let lat = Arc::new(build_torus(4, 2).unwrap());
    let j = CouplingField::constant(lat, 1.0);
    let scan = critical_scan(&TransferMatrix, &j, 0, (-5.0, -1.0), 16, TiePolicy::First).unwrap();
    assert!((scan.breakpoint.unwrap() + 3.0).abs() < 1e-6);
    assert!((scan.breakpoint_exact.unwrap() + 3.0).abs() < 1e-12);
    let flat = critical_scan(&TransferMatrix, &j, 0, (0.0, 1.0), 4, TiePolicy::First).unwrap();
    assert!(flat.breakpoint.is_none());
    assert_eq!(flat.left_slope, -1.0);
    assert!(critical_scan(&TransferMatrix, &j, 0, (1.0, 0.0), 4, TiePolicy::First).is_err());
}

#[test]
fn sandwich_bounds() {
    for seed in 0..10 {
        let j = gaussian(4, 2, 90 + seed);
        let b = block(&j, [1, 0], [2, 2]);
        let edge = interior_edges(j.lattice(), &b)[seed as usize % 4];
        for eps in [0.5, -0.5, 0.01, -2.0] {
            let s = sandwich_check(&TransferMatrix, &j, &b, edge, eps, TiePolicy::Strict).unwrap();
            assert!(s.holds(), "seed {seed} eps {eps}: {s:?}");
            // direct ground energies agree with the table route
            let e0 = dp_gs_2d(&j).unwrap().energy;
            let e1 = dp_gs_2d(&j.with_edge(edge, j.get(edge) + eps))
                .unwrap()
                .energy;
            assert!((s.difference - (e1 - e0)).abs() < ENERGY_TOLERANCE);
        }
    }
}

#[test]
fn sandwich_across_a_breakpoint() {
    let lat = Arc::new(build_torus(4, 2).unwrap());
    let mut j = gaussian(4, 2, 7);
    let b = block(&j, [0, 0], [1, 2]);
    let edge = interior_edges(&lat, &b)[0];
    let scan = critical_scan(
        &TransferMatrix,
        &j,
        edge,
        (-6.0, 6.0),
        120,
        TiePolicy::Strict,
    )
    .unwrap();
    let x = scan.breakpoint.expect("correlation flips within the range");
    j.set(edge, x - 0.3);
    let s = sandwich_check(&TransferMatrix, &j, &b, edge, 0.6, TiePolicy::Strict).unwrap();
    assert_eq!((s.corr_before, s.corr_after), (-1, 1));
    assert!(s.holds());
    let (lo, hi) = s.residuals();
    assert!(lo > 0.0 && hi > 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn cocycle_and_selection(seed in 0u64..10_000, r in 0usize..4, c in 0usize..4, tall in any::<bool>()) {
        let j = gaussian(4, 2, seed);
        let extent = if tall { [2, 1] } else { [1, 3] };
        let b = block(&j, [r, c], extent);
        let table = build_excitation_table(&TransferMatrix, &j, &b, TiePolicy::Strict).unwrap();
        prop_assert!(table.check_invariants(&j).is_ok());
        let code = table.select_ground().unwrap();
        prop_assert_eq!(table.state(code), &dp_gs_2d(&j).unwrap().spins);
    }
}

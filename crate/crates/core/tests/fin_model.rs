//! Properties of the thermal-fin discretization, the random Biot field and
//! the reduced-basis surrogate built on top of them.

use proptest::prelude::*;
use rbcv::fem::{assemble, generate_fin_mesh, FinParams, Mesh};
use rbcv::kl::{build_kl, truncate, KLBasis};
use rbcv::linalg::dot;
use rbcv::rb::{rb_greedy, ErrorMeasure, FieldSampler, TrainingDesign, XInnerProduct};
use rbcv::rng::RandomStream;
use rbcv::{Operator, ReducedSpace};
use std::sync::OnceLock;

struct Fixture {
    mesh: Mesh,
    kl: KLBasis,
    op: Operator,
    k: usize,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let mesh = generate_fin_mesh(3).unwrap();
        let kl = build_kl(&mesh, 0.5, 1).unwrap();
        let k = truncate(&kl.eigenvalues, 1e-2).unwrap();
        let op = assemble(&mesh, &kl.truncated_modes(k), 1.0).unwrap();
        Fixture { mesh, kl, op, k }
    })
}

fn reduced() -> &'static (ReducedSpace, XInnerProduct<f64>) {
    static R: OnceLock<(ReducedSpace, XInnerProduct<f64>)> = OnceLock::new();
    R.get_or_init(|| {
        let f = fixture();
        let x = XInnerProduct::new(&f.op).unwrap();
        let design = TrainingDesign {
            k2: vec![0.1, 0.5, 2.0, 10.0],
            biot_mean: vec![0.1, 0.4, 1.0],
            varied_directions: f.k,
            random_corners: 8,
            rows_per_point: 4,
        };
        let trial = design.build(&f.kl, f.k, 0.1, 2).unwrap();
        let rb = rb_greedy(&f.op, &x, &trial, 1e-2, 30, ErrorMeasure::Relative).unwrap();
        (rb.space, x)
    })
}

fn params(k2: f64, e: f64, m: u64) -> FinParams {
    let f = fixture();
    FieldSampler { kl: &f.kl, num_modes: f.k, upsilon: 0.1, seed: 17 }.params(k2, e, m).unwrap()
}

fn rel_max_diff(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().map(|v| v.abs()).fold(0.0, f64::max);
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max) / scale
}

#[test]
fn affine_sum_matches_direct_assembly() {
    let f = fixture();
    for m in 0..10u64 {
        let s = RandomStream::new(3, m);
        let p = params(0.1 + 9.9 * s.at(0).open01(), 0.1 + 0.9 * s.at(1).open01(), m);
        // Assemble the whole Biot field as a single "mode".
        let mut field = vec![0.0; f.mesh.num_nodes()];
        for (n, v) in field.iter_mut().enumerate() {
            *v = 1.0 + p.y.iter().zip(&f.op.modes).map(|(y, mode)| y * mode[n]).sum::<f64>();
        }
        let direct_op: Operator = assemble(&f.mesh, &[field], 1.0).unwrap();
        let mut direct = direct_op.a1.to_dense();
        direct.scale_add(p.k2 - 1.0, &direct_op.a2.to_dense());
        direct.scale_add(1.0, &direct_op.a2.to_dense());
        direct.scale_add(p.biot_mean, &direct_op.bk[0].to_dense());
        let affine = f.op.matrix(&p).unwrap().to_dense();
        let mut diff = affine.clone();
        diff.scale_add(-1.0, &direct);
        assert!(diff.max_abs() <= 1e-12 * direct.max_abs(), "{}", diff.max_abs());
    }
}

#[test]
fn full_solves_meet_residual_contract() {
    let f = fixture();
    for m in 0..100u64 {
        let s = RandomStream::new(4, m);
        let p = params(0.1 + 9.9 * s.at(0).open01(), 0.1 + 0.9 * s.at(1).open01(), m);
        let u = f.op.solve_full(&p).unwrap();
        let r: Vec<f64> = f.op.matrix(&p).unwrap().matvec(&u).iter().zip(&f.op.load).map(|(a, b)| a - b).collect();
        assert!(dot(&r, &r).sqrt() <= 1e-10 * dot(&f.op.load, &f.op.load).sqrt());
    }
}

#[test]
fn spectrum_is_stable_under_quadrature_refinement() {
    let mesh = generate_fin_mesh(13).unwrap();
    let coarse = build_kl(&mesh, 0.5, 1).unwrap();
    let fine = build_kl(&mesh, 0.5, 2).unwrap();
    for k in 0..10 {
        let (a, b) = (coarse.eigenvalues[k], fine.eigenvalues[k]);
        assert!((a - b).abs() < 0.01 * b, "mode {k}: {a} vs {b}");
    }
}

#[test]
fn sampled_field_covariance_matches_expansion() {
    let f = fixture();
    let (e, upsilon, n) = (0.7, 0.1, 100_000u64);
    let nodes = &f.kl.biot_nodes;
    let probes: Vec<(usize, usize)> = (0..10).map(|i| (nodes[(3 * i) % nodes.len()], nodes[(7 * i + 2) % nodes.len()])).collect();
    let index = |node: usize| nodes.iter().position(|&b| b == node).unwrap();
    let mut samples = Vec::with_capacity(n as usize);
    for m in 0..n {
        let r = f.kl.sample_biot(f.k, e, upsilon, &RandomStream::new(21, m)).unwrap();
        samples.push(probes.iter().map(|&(a, b)| (r.field[index(a)], r.field[index(b)])).collect::<Vec<_>>());
    }
    for (j, &(a, b)) in probes.iter().enumerate() {
        let exact: f64 = (0..f.k).map(|k| f.kl.eigenvalues[k] * f.kl.modes[k][a] * f.kl.modes[k][b]).sum::<f64>() * e * e * upsilon * upsilon;
        let prod: Vec<f64> = samples.iter().map(|s| (s[j].0 - e) * (s[j].1 - e)).collect();
        let mean = prod.iter().sum::<f64>() / n as f64;
        let sd = (prod.iter().map(|p| (p - mean) * (p - mean)).sum::<f64>() / (n - 1) as f64).sqrt();
        assert!((mean - exact).abs() <= 3.0 * 1.96 * sd / (n as f64).sqrt(), "pair {j}: {mean} vs {exact}");
    }
}

#[test]
fn output_error_is_controlled_by_bound() {
    let f = fixture();
    let (space, x) = reduced();
    let dual = x.dual_norm(&f.op.load);
    for m in 0..20u64 {
        let s = RandomStream::new(5, m);
        let p = params(0.1 + 9.9 * s.at(0).open01(), 0.1 + 0.9 * s.at(1).open01(), m);
        let sol = space.online_solve(&p).unwrap();
        let (s_fe, _) = f.op.outputs(&f.op.solve_full(&p).unwrap());
        assert!((s_fe - sol.s).abs() <= sol.delta * dual, "{} > {}", (s_fe - sol.s).abs(), sol.delta * dual);
    }
}

#[test]
fn reduced_solution_is_certified() {
    let f = fixture();
    let (space, x) = reduced();
    for m in 0..100u64 {
        let s = RandomStream::new(6, m);
        let p = params(0.1 + 9.9 * s.at(0).open01(), 0.1 + 0.9 * s.at(1).open01(), m);
        let sol = space.online_solve(&p).unwrap();
        let u = f.op.solve_full(&p).unwrap();
        let diff: Vec<f64> = u.iter().zip(space.reconstruct(&sol.gamma)).map(|(a, b)| a - b).collect();
        assert!(x.norm(&diff) <= sol.delta);
        assert!(rel_max_diff(&[sol.s], &[f.op.outputs(&u).0]) < 1e-2);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn compliance_is_energy(k2 in 0.1..10.0f64, e in 0.1..1.0f64, m in 0u64..1000) {
        let f = fixture();
        let p = params(k2, e, m);
        let u = f.op.solve_full(&p).unwrap();
        let s = f.op.outputs(&u).0;
        let energy = f.op.matrix(&p).unwrap().bilinear(&u, &u);
        prop_assert!((s - energy).abs() <= 1e-10 * s.abs());
    }

    #[test]
    fn stronger_cooling_lowers_compliance(k2 in 0.1..10.0f64, e in 0.1..0.9f64, step in 0.01..0.1f64) {
        let f = fixture();
        let lo = f.op.outputs(&f.op.solve_full(&FinParams::nominal(k2, e)).unwrap()).0;
        let hi = f.op.outputs(&f.op.solve_full(&FinParams::nominal(k2, e + step)).unwrap()).0;
        prop_assert!(hi < lo);
    }

    #[test]
    fn accepted_fields_stay_above_half_mean(e in 0.1..1.0f64, upsilon in 0.0..2.0f64, m in 0u64..10_000) {
        let f = fixture();
        if let Ok(r) = f.kl.sample_biot(f.k, e, upsilon, &RandomStream::new(8, m)) {
            prop_assert!(r.field.iter().all(|&b| b >= 0.5 * e));
        }
    }
}

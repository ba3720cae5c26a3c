mod common;

use phamp_core::dynsys::DynamicalSystem;
use phamp_core::family::{assemble_lattice, build_lattice_slice, AxisSpec, LatticeOptions, OrbitFamily};
use phamp_core::reduce::{
    effective_input, lift_state, reconstruct_state, reduced_rhs, reduced_rhs_two_mode, solve_coupling,
    ReducedModel, ReducedState,
};
use phamp_core::{Error, C64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Worst relative error of `(theta', q')` against `(Im lambda, q Re lambda)` over the phase.
fn action_angle_error(model: &ReducedModel<'_>, q: f64) -> (f64, f64) {
    let lam = model.lambda1();
    let mut worst = (0.0f64, 0.0f64);
    for k in 0..32 {
        let theta = k as f64 * std::f64::consts::TAU / 32.0;
        let d = reduced_rhs(model, &ReducedState { theta, q: vec![q], psi: vec![] }, &[0.0]).unwrap();
        worst.0 = worst.0.max((d.theta - lam.im).abs() / lam.im);
        worst.1 = worst.1.max((d.q[0] - q * lam.re).abs() / (q * lam.re).abs());
    }
    worst
}

#[test]
fn small_amplitude_limit_is_the_linear_action_angle_flow() {
    let (f, fam) = common::pendulum_to_boundary();
    let model = ReducedModel::new(f.sys(), &fam, &[]).unwrap();
    let (t3, q3) = action_angle_error(&model, 1e-3);
    let (t4, q4) = action_angle_error(&model, 1e-4);
    assert!(t3 < 0.01 && q3 < 0.01, "q = 1e-3: {t3:e} {q3:e}");
    // at least linear convergence (factor 10 per decade, small slack for roundoff floors)
    assert!(t4 <= t3 / 8.0 || t4 < 1e-9, "theta': {t3:e} -> {t4:e}");
    assert!(q4 <= q3 / 8.0 || q4 < 1e-9, "q': {q3:e} -> {q4:e}");
}

fn random_ue(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// Residual `I_{j,1}^T U_e + I_{j,2} f + E_j q'` of the solved slots.
fn decoupling_residual(model: &ReducedModel<'_>, solved: usize, theta: f64, q: &[f64], ue: &[f64]) -> f64 {
    let frame = model.frame(theta, q).unwrap();
    let (qdot, f) = solve_coupling(&frame, solved, ue, q, theta).unwrap();
    let n = ue.len();
    let mut worst = 0.0f64;
    for j in 0..solved {
        let i = &frame.i[j];
        let mut r: C64 = i[..n].iter().zip(ue).map(|(a, b)| a * b).sum();
        r += i[n] * f;
        r += frame.e[j].iter().zip(&qdot).map(|(e, v)| e * v).sum::<C64>();
        let scale = 1.0 + i.iter().map(|z| z.norm()).fold(0.0, f64::max);
        worst = worst.max(r.norm() / scale);
    }
    worst
}

#[test]
fn single_mode_coupling_solve_decouples_the_primary_mode() {
    let (f, fam) = common::pendulum_to_boundary();
    let model = ReducedModel::new(f.sys(), &fam, &[]).unwrap();
    let (lo, hi) = model.q_range()[0];
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let theta = rng.gen_range(0.0..std::f64::consts::TAU);
        let q = rng.gen_range(lo..hi);
        let ue = random_ue(&mut rng, 2);
        worst = worst.max(decoupling_residual(&model, 1, theta, &[q], &ue));
    }
    assert!(worst <= 1e-10, "{worst:e}");
}

/// Power family with a small (q1, q2, q3) lattice.
fn small_lattice() -> (common::Fixture, OrbitFamily) {
    let (f, fam) = common::power_family(1.5);
    let mut q1_nodes: Vec<usize> = (0..fam.line.len()).filter(|&k| fam.line[k].q[0] >= 0.3 && k % 4 == 0).collect();
    if q1_nodes.last() != Some(&(fam.line.len() - 1)) {
        q1_nodes.push(fam.line.len() - 1);
    }
    let opts = LatticeOptions {
        second_label: f.label(2),
        q1_nodes: q1_nodes.clone(),
        q2: AxisSpec { step: 0.5, neg: 2, pos: 2 },
        q3: AxisSpec { step: 0.5, neg: 2, pos: 2 },
        max_substeps: 4,
    };
    let sheets = q1_nodes
        .iter()
        .map(|&k| build_lattice_slice(f.sys(), &fam, k, &opts).unwrap())
        .collect();
    let two = assemble_lattice(&fam, sheets, &opts).unwrap();
    (f, two)
}

#[test]
fn lattice_and_two_mode_decoupling() {
    let (f, fam) = small_lattice();
    let l = fam.lattice.as_ref().unwrap();
    assert_eq!(l.shape()[1..], [5, 5]);
    assert!(fam.normalization_defect() <= 1e-6);
    let model = ReducedModel::two_mode(f.sys(), &fam).unwrap();
    assert_eq!(model.amplitude_count(), 3);
    let range = model.q_range().to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let theta = rng.gen_range(0.0..std::f64::consts::TAU);
        let q: Vec<f64> = range.iter().map(|&(lo, hi)| rng.gen_range(lo..hi)).collect();
        let ue = random_ue(&mut rng, f.sys().dim_state());
        worst = worst.max(decoupling_residual(&model, 2, theta, &q, &ue));
    }
    assert!(worst <= 1e-10, "{worst:e}");

    // on the q2 = q3 = 0 line the two-mode field reduces to the one-mode field
    let one = ReducedModel::new(f.sys(), &fam, &[]).unwrap();
    let q1 = l.q1[1];
    let a = reduced_rhs(&one, &ReducedState { theta: 0.4, q: vec![q1], psi: vec![] }, &[0.0; 3]).unwrap();
    let b = reduced_rhs_two_mode(&model, &ReducedState { theta: 0.4, q: vec![q1, 0.0, 0.0], psi: vec![] }, &[0.0; 3])
        .unwrap();
    assert!((a.theta - b.theta).abs() < 1e-3 * a.theta.abs(), "{} {}", a.theta, b.theta);
    assert!((a.q[0] - b.q[0]).abs() < 1e-3 * (1.0 + a.q[0].abs()), "{} {}", a.q[0], b.q[0]);
    assert!(b.q[1].abs() < 1e-3 && b.q[2].abs() < 1e-3, "{:?}", b.q);
}

#[test]
fn retained_mode_coordinate_follows_its_exponent_without_input() {
    let (f, fam) = common::power_family(2.0);
    let model = ReducedModel::new(f.sys(), &fam, &[f.label(2)]).unwrap();
    let psi = C64::new(0.3, -0.2);
    let s = ReducedState { theta: 1.0, q: vec![1.0], psi: vec![psi] };
    let d = reduced_rhs(&model, &s, &[0.0; 3]).unwrap();
    let frame = model.frame(1.0, &[1.0]).unwrap();
    // with u = 0 and x on the orbit plus psi g, U_e is second order in psi
    let x = reconstruct_state(&model, &s).unwrap();
    let ue = effective_input(f.sys(), &x, &[0.0; 3], &frame.alpha).unwrap();
    let small: f64 = ue.iter().map(|v| v * v).sum::<f64>().sqrt();
    assert!((d.psi[0] - frame.kappa[1] * psi).norm() < 10.0 * small + 1e-9);
}

#[test]
fn lift_inverts_reconstruction() {
    let (f, fam) = common::power_family(2.0);
    let model = ReducedModel::new(f.sys(), &fam, &[f.label(2)]).unwrap();
    let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    // on the family the lift is exact
    for (theta, q) in [(0.3, 0.7), (2.0, 1.4), (5.5, 0.2)] {
        let s = ReducedState { theta, q: vec![q], psi: vec![C64::new(0.0, 0.0)] };
        let x = reconstruct_state(&model, &s).unwrap();
        let back = lift_state(&model, &fam, &x, 1e-6).unwrap();
        assert!(dist(&x, &reconstruct_state(&model, &back).unwrap()) < 1e-6);
        assert!((back.q[0] - q).abs() < 1e-5, "{} vs {q}", back.q[0]);
        assert!(back.psi[0].norm() < 1e-6);
    }
    // states on the reduced manifold are recovered with their Floquet coordinates
    for psi in [C64::new(0.02, -0.01), C64::new(-0.04, 0.03)] {
        let s = ReducedState { theta: 1.0, q: vec![1.0], psi: vec![psi] };
        let x = reconstruct_state(&model, &s).unwrap();
        let back = lift_state(&model, &fam, &x, 1e-6).unwrap();
        assert!(dist(&x, &reconstruct_state(&model, &back).unwrap()) < 1e-6);
        assert!((back.psi[0] - psi).norm() < 1e-4, "{} vs {psi}", back.psi[0]);
    }
    let far = vec![3.0, -3.0, 5.0, 5.0, 5.0];
    assert!(matches!(lift_state(&model, &fam, &far, 0.5), Err(Error::OutOfNeighborhood { .. })));
}

#[test]
fn reduced_model_rejects_states_outside_the_family() {
    let (f, fam) = common::pendulum_to_boundary();
    let model = ReducedModel::new(f.sys(), &fam, &[]).unwrap();
    let (_, hi) = model.q_range()[0];
    let s = ReducedState { theta: 0.0, q: vec![hi + 0.1], psi: vec![] };
    assert!(matches!(reduced_rhs(&model, &s, &[0.0]), Err(Error::OutOfRange { .. })));
    assert!(model.near_edge(&[hi - 1e-6]));
    let sys: &dyn DynamicalSystem = f.sys();
    assert!(matches!(ReducedModel::new(sys, &fam, &[5]), Err(Error::InvalidMode(_))));
}

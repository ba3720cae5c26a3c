use nalgebra::DMatrix;
use phamp_core::spectral::{oscillatory_mode, perturb_eigenpair, Eigenpair, Spectrum};
use phamp_core::C64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_matrix(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0))
}

/// Eigenvalue of `m` closest to `target`.
fn closest(m: &DMatrix<f64>, target: C64) -> C64 {
    let sp = Spectrum::of(m).unwrap();
    *sp.values
        .iter()
        .min_by(|a, b| (*a - target).norm().total_cmp(&(*b - target).norm()))
        .unwrap()
}

/// A random matrix with a complex eigenvalue, its normalized pair and a random direction.
fn case(rng: &mut ChaCha8Rng) -> Option<(DMatrix<f64>, DMatrix<f64>, Eigenpair)> {
    let n = rng.gen_range(4..=8);
    let a = random_matrix(rng, n);
    let da = random_matrix(rng, n);
    let sp = Spectrum::of(&a).ok()?;
    let k = sp.oscillatory_indices().into_iter().next()?;
    let mode = oscillatory_mode(&sp, k, None).ok()?;
    Some((a, da, Eigenpair::from(&mode)))
}

#[test]
fn first_order_eigenvalue_error_is_quadratic() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut tested = 0;
    let mut ratios = Vec::new();
    while tested < 100 {
        let Some((a, da, pair)) = case(&mut rng) else { continue };
        let (dl, _) = perturb_eigenpair(&a, &da, &pair).unwrap();
        let err = |eps: f64| {
            let exact = closest(&(&a + &da * eps), pair.lambda);
            (exact - (pair.lambda + dl * eps)).norm()
        };
        let (e1, e2) = (err(1e-3), err(5e-4));
        // skip cases at the roundoff floor, where the ratio carries no information
        if e1 < 1e-11 {
            continue;
        }
        ratios.push(e1 / e2);
        tested += 1;
    }
    let bad: Vec<f64> = ratios.iter().copied().filter(|r| !(3.0..=5.0).contains(r)).collect();
    assert!(bad.is_empty(), "ratios outside [3, 5]: {bad:?}");
}

#[test]
fn first_order_eigenvector_keeps_the_normalization() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut tested = 0;
    while tested < 20 {
        let Some((a, da, pair)) = case(&mut rng) else { continue };
        let (_, dv) = perturb_eigenpair(&a, &da, &pair).unwrap();
        let eps = 1e-4;
        let v = &pair.v + &dv * C64::new(eps, 0.0);
        assert!((v.norm() - 1.0).abs() < 1e-6, "norm drift {}", v.norm() - 1.0);
        assert!(v[pair.anchor_index].im.abs() < 1e-6);
        let perturbed = &a + &da * eps;
        let sp = Spectrum::of(&perturbed).unwrap();
        let k = (0..sp.values.len())
            .min_by(|&i, &j| (sp.values[i] - pair.lambda).norm().total_cmp(&(sp.values[j] - pair.lambda).norm()))
            .unwrap();
        let exact = oscillatory_mode(&sp, k, Some(pair.anchor_index)).unwrap();
        assert!((exact.v - v).norm() < 1e-6);
        tested += 1;
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn eigenvalue_derivative_matches_finite_difference(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        if let Some((a, da, pair)) = case(&mut rng) {
            let (dl, _) = perturb_eigenpair(&a, &da, &pair).unwrap();
            let h = 1e-6;
            let fd = (closest(&(&a + &da * h), pair.lambda) - closest(&(&a - &da * h), pair.lambda)) / (2.0 * h);
            prop_assert!((fd - dl).norm() < 1e-4 * (1.0 + dl.norm()), "{} vs {}", fd, dl);
        }
    }
}

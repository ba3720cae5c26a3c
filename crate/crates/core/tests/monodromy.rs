mod common;

use common::{options, Fixture};
use phamp_core::family::{reanalyze, retune_period};
use phamp_core::linalg;
use phamp_core::periodic::{monodromy, ForcedOrbit, OrbitOptions};
use phamp_core::C64;

/// The `q = 1e-4` orbit of the mode-1 family of `name`.
fn small_orbit(name: &str, tracked: Vec<usize>) -> (Fixture, ForcedOrbit) {
    let f = Fixture::new(name);
    let mut opts = options(1e-4, 1e-4, 1e-4);
    opts.tracked = tracked;
    let fam = f.family(&opts);
    let orbit = fam.line.iter().find(|o| (o.q[0] - 1e-4).abs() < 1e-12).unwrap().clone();
    (f, orbit)
}

fn check_block_form(name: &str) {
    let f = Fixture::new(name);
    let (_, orbit) = small_orbit(name, vec![]);
    let m = monodromy(f.sys(), &orbit, Some(&f.spectrum.values), &OrbitOptions::default()).unwrap();
    let mut expected: Vec<C64> = f.spectrum.values.iter().map(|l| linalg::exp(*l * orbit.period)).collect();
    expected.push(C64::new(1.0, 0.0));
    assert_eq!(m.multipliers.len(), expected.len());
    let mut used = vec![false; expected.len()];
    for mu in &m.multipliers {
        let (k, d) = expected
            .iter()
            .enumerate()
            .filter(|(k, _)| !used[*k])
            .map(|(k, e)| (k, (e - mu).norm()))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        assert!(d <= 1e-3, "{name}: multiplier {mu} is {d:e} from exp(lambda T)");
        used[k] = true;
    }
}

#[test]
fn small_orbit_multipliers_pendulum() {
    check_block_form("pendulum");
}

#[test]
fn small_orbit_multipliers_power_system() {
    check_block_form("ieee9bus");
}

#[test]
fn retuning_shifts_only_the_imaginary_exponent() {
    for name in ["pendulum", "ieee9bus"] {
        let f = Fixture::new(name);
        let tracked = if name == "ieee9bus" { vec![f.label(2)] } else { vec![] };
        let (_, orbit) = small_orbit(name, tracked);
        let t = orbit.period;
        let dw = -1e-3 * orbit.omega;
        let mut tuned = retune_period(&orbit, dw).unwrap();
        assert!(tuned.floquet.is_empty());
        reanalyze(f.sys(), &mut tuned, &orbit, &OrbitOptions::default()).unwrap();
        let dt = tuned.period - t;
        for (a, b) in orbit.floquet.iter().zip(&tuned.floquet) {
            assert_eq!(a.label, b.label);
            assert!((a.kappa.re - b.kappa.re).abs() <= 1e-4, "{name}: Re kappa {} -> {}", a.kappa.re, b.kappa.re);
        }
        // Im(kappa_1) moves by 2 pi dT / T^2 on the principal branch
        let predicted = 2.0 * std::f64::consts::PI * dt / (t * t);
        let shift = tuned.floquet[0].kappa.im - orbit.floquet[0].kappa.im;
        assert!(
            (shift.abs() - predicted.abs()).abs() <= 0.1 * predicted.abs(),
            "{name}: shift {shift:e}, predicted {predicted:e}"
        );
    }
}

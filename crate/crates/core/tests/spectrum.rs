mod common;

use common::Fixture;
use phamp_core::dynsys::{linearized_model, DynamicalSystem, ModelSpec, PowerSystemParams};
use phamp_core::spectral::{find_fixed_point, oscillatory_mode_number, Spectrum};
use phamp_core::{Error, C64};

fn close(a: C64, b: C64, tol: f64) -> bool {
    (a - b).norm() <= tol
}

#[test]
fn pendulum_eigenvalues() {
    let f = Fixture::new("pendulum");
    assert_eq!(f.x_ss, vec![0.0, 0.0]);
    let v = &f.spectrum.values;
    assert_eq!(v.len(), 2);
    assert!(close(v[1], C64::new(-0.050, 0.999), 1e-3), "{v:?}");
    assert!(close(v[0], C64::new(-0.050, -0.999), 1e-3), "{v:?}");
}

#[test]
fn power_fixed_point_and_eigenvalues() {
    let f = Fixture::new("ieee9bus");
    for (x, want) in f.x_ss.iter().zip([-0.30, -0.19, 0.0, 0.0, 0.0]) {
        assert!((x - want).abs() <= 0.005, "{:?}", f.x_ss);
    }
    let want = [
        C64::new(-0.25, -13.36),
        C64::new(-0.25, -8.69),
        C64::new(-0.25, 8.69),
        C64::new(-0.25, 13.36),
        C64::new(-0.5, 0.0),
    ];
    for (got, w) in f.spectrum.values.iter().zip(want) {
        assert!(close(*got, w, 0.02), "{got} vs {w}");
    }
}

#[test]
fn planar_slowest_pair() {
    let f = Fixture::new("planar10");
    let l1 = f.spectrum.values[f.label(1)];
    assert!(close(l1, C64::new(-0.0105, 1.4905), 1e-3), "{l1}");
    assert!(f.spectrum.values.iter().all(|l| l.re < 0.0));
}

#[test]
fn spectrum_is_ordered_by_real_part_then_imaginary_part() {
    for name in ["pendulum", "planar10", "ieee9bus"] {
        let f = Fixture::new(name);
        for w in f.spectrum.values.windows(2) {
            let tie = (w[0].re - w[1].re).abs() < 1e-8 * 50.0;
            assert!(w[0].re >= w[1].re || tie, "{name}: {w:?}");
            if tie {
                assert!(w[0].im < w[1].im, "{name}: {w:?}");
            }
        }
    }
}

#[test]
fn mode_normalization_convention() {
    let f = Fixture::new("ieee9bus");
    for k in 1..=2 {
        let m = oscillatory_mode_number(&f.spectrum, k, None).unwrap();
        assert!((m.v.norm() - 1.0).abs() < 1e-12);
        let a = m.v[m.anchor_index];
        assert!(a.re < 0.0 && a.im.abs() < 1e-14, "{a}");
        assert!((m.w.dotc(&m.v) - C64::new(1.0, 0.0)).norm() < 1e-12);
        let av = f.spectrum.matrix.map(|x| C64::new(x, 0.0)) * &m.v;
        assert!((av - &m.v * m.lambda).norm() < 1e-10);
    }
    assert!(matches!(
        oscillatory_mode_number(&f.spectrum, 3, None),
        Err(Error::InvalidMode(_))
    ));
}

#[test]
fn linearization_requires_a_fixed_point() {
    let f = Fixture::new("pendulum");
    assert!(matches!(
        linearized_model(f.sys(), &[0.3, 0.0]),
        Err(Error::NotFixedPoint { .. })
    ));
    let lin = linearized_model(f.sys(), &f.x_ss).unwrap();
    let sp = Spectrum::at_fixed_point(&lin, &f.x_ss).unwrap();
    for (a, b) in sp.values.iter().zip(&f.spectrum.values) {
        assert!((a - b).norm() < 1e-12);
    }
}

#[test]
fn power_system_needs_three_machines() {
    let mut p = PowerSystemParams::ieee9bus();
    p.inertia.push(1.0);
    assert!(matches!(ModelSpec::PowerSystem(p).build(), Err(Error::Unsupported(_)) | Err(Error::Dimension { .. })));
}

#[test]
fn newton_reports_failure_from_a_far_guess() {
    let f = Fixture::new("ieee9bus");
    let sys: &dyn DynamicalSystem = f.sys();
    match find_fixed_point(sys, &[40.0, -30.0, 5.0, 5.0, 5.0], 1e-12) {
        Err(Error::NoConvergence { history, .. }) => assert!(!history.is_empty()),
        Ok(x) => {
            // a distant equilibrium may exist; it must then be a genuine root
            let mut dx = vec![0.0; 5];
            sys.rhs(&x, &[0.0; 3], &mut dx);
            assert!(dx.iter().all(|v| v.abs() < 1e-10));
        }
        Err(e) => assert!(matches!(e, Error::Unstable { .. }), "{e:?}"),
    }
}

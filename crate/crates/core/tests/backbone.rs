mod common;

use common::{options, Fixture};
use phamp_core::family::{backbone, FamilyOptions};

fn check_trend(name: &str, curve: &phamp_core::family::BackboneCurve, lambda_im: f64, increasing: bool) {
    assert!(curve.q.len() > 20, "{name}: {} nodes", curve.q.len());
    for w in curve.omega_bar.windows(2) {
        let ok = if increasing { w[1] > w[0] } else { w[1] < w[0] };
        assert!(ok, "{name}: omega_bar not monotone: {w:?}");
    }
    let low = curve.omega_bar[0];
    assert!(curve.q[0] <= 1e-3);
    assert!((low - lambda_im).abs() <= 1e-3, "{name}: {low} vs {lambda_im}");
    for w in curve.q.windows(2) {
        assert!(w[1] > w[0]);
    }
}

#[test]
fn pendulum_backbone_softens() {
    let (f, fam) = common::pendulum_to_boundary();
    let curve = backbone(&fam, &[1.0, 0.0]).unwrap();
    check_trend("pendulum", &curve, f.spectrum.values[f.label(1)].im, false);
    assert!(curve.amplitude.windows(2).all(|w| w[1] > w[0]));
}

#[test]
fn planar_backbone_stiffens() {
    let f = Fixture::new("planar10");
    let opts = FamilyOptions {
        delta_omega: Some(1.0),
        ..options(1e-3, 0.02, 2.2)
    };
    let fam = f.family(&opts);
    let obs: Vec<f64> = (0..20).map(|k| if k % 2 == 0 { 0.1 } else { 0.0 }).collect();
    let curve = backbone(&fam, &obs).unwrap();
    check_trend("planar10", &curve, f.spectrum.values[f.label(1)].im, true);
}

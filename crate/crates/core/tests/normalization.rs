mod common;

use phamp_core::family::{orbit_normalization_defect, Termination};
use phamp_core::C64;

#[test]
fn pendulum_family_reaches_its_boundary() {
    let (_, fam) = common::pendulum_to_boundary();
    assert!(matches!(fam.provenance.termination, Termination::Boundary { .. }));
    assert!(fam.q_terminal() > 1.0, "{}", fam.q_terminal());
    assert!(fam.line.windows(2).all(|w| w[1].q[0] >= w[0].q[0]));
}

#[test]
fn floquet_functions_are_biorthonormal_on_every_orbit() {
    let (_, fam) = common::pendulum_to_boundary();
    let worst = fam.normalization_defect();
    assert!(worst <= 1e-6, "max |g^T I - 1| = {worst:e}");
    for o in &fam.line {
        assert!(orbit_normalization_defect(o) <= 1e-6);
    }
}

#[test]
fn gradients_annihilate_the_orbit_tangent() {
    let (_, fam) = common::pendulum_to_boundary();
    let mut worst = 0.0f64;
    for o in fam.line.iter().filter(|o| o.q[0] > 0.0) {
        let n1 = o.dim + 1;
        let dy = o.dy_dtheta();
        for m in &o.floquet {
            for k in 0..o.n_theta {
                let row = k * n1..(k + 1) * n1;
                let dot: C64 = m.i[row.clone()].iter().zip(&dy[row.clone()]).map(|(a, b)| a * b).sum();
                let scale = dy[row].iter().map(|v| v * v).sum::<f64>().sqrt();
                worst = worst.max(dot.norm() / scale);
            }
        }
    }
    assert!(worst <= 1e-6, "max |I^T dy/dtheta| / |dy/dtheta| = {worst:e}");
}

#[test]
fn two_mode_power_family_is_biorthonormal() {
    let (_, fam) = common::power_family(2.0);
    assert_eq!(fam.line[1].floquet.len(), 2);
    let worst = fam.normalization_defect();
    assert!(worst <= 1e-6, "{worst:e}");
}

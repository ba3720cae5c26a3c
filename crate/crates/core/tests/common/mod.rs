#![allow(dead_code)]

use phamp_core::dynsys::{DynamicalSystem, ModelSpec};
use phamp_core::family::{build_family, FamilyOptions, OrbitFamily};
use phamp_core::spectral::{find_fixed_point, Spectrum};

pub struct Fixture {
    pub system: Box<dyn DynamicalSystem>,
    pub x_ss: Vec<f64>,
    pub spectrum: Spectrum,
}

impl Fixture {
    pub fn new(name: &str) -> Self {
        let system = ModelSpec::by_name(name).unwrap().build().unwrap();
        let guess = match name {
            "ieee9bus" => vec![-0.3, -0.19, 0.0, 0.0, 0.0],
            _ => vec![0.0; system.dim_state()],
        };
        let x_ss = find_fixed_point(system.as_ref(), &guess, 1e-12).unwrap();
        let spectrum = Spectrum::at_fixed_point(system.as_ref(), &x_ss).unwrap();
        Self { system, x_ss, spectrum }
    }

    pub fn sys(&self) -> &dyn DynamicalSystem {
        self.system.as_ref()
    }

    /// Spectrum label of oscillatory mode number `k`.
    pub fn label(&self, k: usize) -> usize {
        self.spectrum.oscillatory_indices()[k - 1]
    }

    pub fn family(&self, opts: &FamilyOptions) -> OrbitFamily {
        build_family(self.sys(), &self.x_ss, &self.spectrum, self.label(1), opts).unwrap()
    }
}

pub fn options(q0: f64, delta_q: f64, q_max: f64) -> FamilyOptions {
    FamilyOptions {
        q0,
        delta_q,
        q_max,
        min_delta_q: delta_q / 32.0,
        max_delta_q: delta_q,
        ..FamilyOptions::default()
    }
}

/// Pendulum family continued until its boundary.
pub fn pendulum_to_boundary() -> (Fixture, OrbitFamily) {
    let f = Fixture::new("pendulum");
    let fam = f.family(&options(1e-4, 0.02, 3.0));
    (f, fam)
}

/// Power-system mode-1 family carrying mode-2 Floquet data.
pub fn power_family(q_max: f64) -> (Fixture, OrbitFamily) {
    let f = Fixture::new("ieee9bus");
    let opts = FamilyOptions {
        tracked: vec![f.label(2)],
        delta_omega: Some(0.5),
        ..options(1e-3, 0.1, q_max)
    };
    let fam = f.family(&opts);
    (f, fam)
}

use phamp::artifact::FamilyArtifact;
use phamp_core::dynsys::ModelSpec;
use phamp_core::family::{build_family, FamilyOptions, OrbitFamily};
use phamp_core::spectral::{find_fixed_point, Spectrum};

fn pendulum_family() -> (ModelSpec, OrbitFamily) {
    let spec = ModelSpec::by_name("pendulum").unwrap();
    let sys = spec.build().unwrap();
    let x = find_fixed_point(sys.as_ref(), &[0.3, 0.0], 1e-12).unwrap();
    let sp = Spectrum::at_fixed_point(sys.as_ref(), &x).unwrap();
    let label = sp.oscillatory_indices()[0];
    let opts = FamilyOptions { q0: 1e-3, delta_q: 0.05, q_max: 0.2, ..Default::default() };
    let fam = build_family(sys.as_ref(), &x, &sp, label, &opts).unwrap();
    (spec, fam)
}

fn bits(v: impl IntoIterator<Item = f64>) -> Vec<u64> {
    v.into_iter().map(f64::to_bits).collect()
}

#[test]
fn artifact_round_trip_is_bit_exact() {
    let (spec, mut fam) = pendulum_family();
    // values that decimal text would disturb
    fam.line[1].alpha[0] = -0.0;
    fam.line[1].x_gamma[1] = f64::MIN_POSITIVE / 4.0;
    fam.line[1].x_gamma[2] = 0.1 + 0.2;
    let art = FamilyArtifact::new(&spec, &fam, "abc", false, None);
    let bytes = art.to_bytes().unwrap();
    let back = FamilyArtifact::from_bytes(&bytes).unwrap();
    assert_eq!(back.to_bytes().unwrap(), bytes);
    let g = back.family().unwrap();
    assert_eq!(g.line.len(), fam.line.len());
    for (a, b) in fam.line.iter().zip(&g.line) {
        assert_eq!(bits(a.x_gamma.iter().copied()), bits(b.x_gamma.iter().copied()));
        assert_eq!(bits(a.alpha.iter().copied()), bits(b.alpha.iter().copied()));
        assert_eq!(a.omega.to_bits(), b.omega.to_bits());
        assert_eq!(a.q, b.q);
        for (m, n) in a.floquet.iter().zip(&b.floquet) {
            assert_eq!(bits(m.i.iter().flat_map(|z| [z.re, z.im])), bits(n.i.iter().flat_map(|z| [z.re, z.im])));
            assert_eq!(m.kappa.re.to_bits(), n.kappa.re.to_bits());
            assert_eq!(m.kappa.im.to_bits(), n.kappa.im.to_bits());
        }
    }
    assert_eq!(bits(fam.eigenvalues.iter().map(|z| z.im)), bits(g.eigenvalues.iter().map(|z| z.im)));
    assert_eq!(back.model_spec().name(), "pendulum");
}

#[test]
fn unknown_artifact_fields_are_rejected() {
    let (spec, fam) = pendulum_family();
    let text = String::from_utf8(FamilyArtifact::new(&spec, &fam, "abc", false, None).to_bytes().unwrap()).unwrap();
    let tampered = text.replacen("\"format\"", "\"extra\": 1,\n  \"format\"", 1);
    assert!(FamilyArtifact::from_bytes(tampered.as_bytes()).is_err());
    let foreign = text.replacen("phamp-family", "other-family", 1);
    assert!(FamilyArtifact::from_bytes(foreign.as_bytes()).is_err());
}

use kinetic_manifold::chapman::{classify, CaseTag, CLASSIFY_TOL};
use kinetic_manifold::model::{
    apply_dq, apply_q, generate_synthetic, load_model, verify_hypotheses, HypothesisTag, SyntheticKind, HYPOTHESIS_TOL,
};
use kinetic_manifold::oracles::fd_jacobian;
use kinetic_manifold::registry::{entry, resolve_model, REGISTRY};
use kinetic_manifold::{build_decomposition, KmError};
use nalgebra::DVector;

fn shipped(name: &str) -> Vec<u8> {
    let path = format!("{}/models/{name}.json", env!("CARGO_MANIFEST_DIR"));
    std::fs::read(path).expect("model file is shipped")
}

#[test]
fn shipped_files_match_generated_models() {
    for e in REGISTRY.iter() {
        let from_file = load_model(&shipped(e.name)).unwrap();
        let generated = load_model(e.build(None).unwrap().to_json().as_bytes()).unwrap();
        assert_eq!(from_file, generated, "{}", e.name);
    }
}

#[test]
fn golden_deltas() {
    for e in REGISTRY.iter() {
        let rep = verify_hypotheses(&e.build(None).unwrap(), HYPOTHESIS_TOL);
        assert!(rep.pass, "{}: {:?}", e.name, rep.violations);
        assert!((rep.delta - e.golden_delta).abs() <= 1e-9 * e.golden_delta, "{}: {}", e.name, rep.delta);
    }
}

#[test]
fn registry_case_structure() {
    let expect = [
        ("gnl-min", CaseTag::SimpleGnl, 1, 3),
        ("gnl-rich", CaseTag::SimpleGnl, 1, 4),
        ("ldg-min", CaseTag::LinearlyDegenerate(1), 1, 2),
        ("nonchar", CaseTag::Noncharacteristic, 0, 1),
    ];
    for (name, case, ker_a11, center) in expect {
        let m = entry(name).unwrap().build(None).unwrap();
        let dec = build_decomposition(&m).unwrap();
        let cls = classify(&m, &dec, CLASSIFY_TOL).unwrap();
        assert_eq!(cls.case, case, "{name}");
        assert_eq!(dec.dims.ker_a11, ker_a11, "{name}");
        assert_eq!(dec.dims.center, center, "{name}");
    }
}

#[test]
fn synthetic_models_are_deterministic() {
    let a = generate_synthetic(SyntheticKind::GnlRich, 11, 9).unwrap();
    let b = generate_synthetic(SyntheticKind::GnlRich, 11, 9).unwrap();
    assert_eq!(a, b);
    let c = generate_synthetic(SyntheticKind::GnlRich, 12, 9).unwrap();
    assert_ne!(a.a, c.a);
}

#[test]
fn synthetic_dimension_too_small() {
    let e = generate_synthetic(SyntheticKind::GnlRich, 1, 4).unwrap_err();
    assert!(matches!(e, KmError::Config(_)));
}

#[test]
fn loader_rejects_bad_input() {
    assert!(matches!(load_model(b"{not json").unwrap_err(), KmError::Schema(_)));
    let mut v: serde_json::Value = serde_json::from_slice(&shipped("gnl-min")).unwrap();
    v["u_bar"] = serde_json::json!([0.0, 1.0]);
    let e = load_model(v.to_string().as_bytes()).unwrap_err();
    assert!(matches!(e, KmError::Dimension(_)), "{e}");
    v["dim"] = serde_json::json!(0);
    assert!(matches!(load_model(v.to_string().as_bytes()).unwrap_err(), KmError::EmptyStateSpace));
}

#[test]
fn loader_symmetrizes_b() {
    let m = entry("gnl-min").unwrap().build(None).unwrap();
    let n = m.dim;
    let mut raw = m.clone();
    raw.b[n * n + 1] += 0.2;
    raw.b[n * n + n] -= 0.2;
    let back = load_model(raw.to_json().as_bytes()).unwrap();
    assert!((back.b[n * n + 1] - m.b[n * n + 1]).abs() < 1e-14);
    assert!(verify_hypotheses(&back, HYPOTHESIS_TOL).pass);
    // the same perturbation applied in memory is caught
    assert!(verify_hypotheses(&raw, HYPOTHESIS_TOL).has(HypothesisTag::BSymmetric));
}

#[test]
fn derivative_of_collision_matches_finite_differences() {
    let m = entry("gnl-rich").unwrap().build(None).unwrap();
    let point = &m.u_bar + DVector::from_fn(m.dim, |i, _| 0.01 * (i as f64 - 3.0));
    let fd = fd_jacobian(|w| apply_q(&m, w).unwrap(), &point, 1e-5);
    let exact = m.dq_matrix(&point);
    assert!((fd - &exact).amax() < 1e-8 * exact.amax().max(1.0));
    let h = DVector::from_fn(m.dim, |i, _| (i as f64).sin());
    assert!((apply_dq(&m, &point, &h).unwrap() - &exact * &h).amax() < 1e-12);
}

#[test]
fn base_state_is_an_equilibrium() {
    for e in REGISTRY.iter() {
        let m = e.build(None).unwrap();
        assert!(apply_q(&m, &m.u_bar).unwrap().amax() < 1e-12, "{}", e.name);
    }
}

#[test]
fn resolve_by_name_path_and_failure() {
    let by_name = resolve_model("ldg-min", None).unwrap();
    let path = format!("{}/models/ldg-min.json", env!("CARGO_MANIFEST_DIR"));
    let by_path = resolve_model(&path, None).unwrap();
    assert_eq!(load_model(by_name.to_json().as_bytes()).unwrap(), by_path);
    assert!(matches!(resolve_model("no-such-model", None).unwrap_err(), KmError::ModelNotFound(_)));
    let reseeded = resolve_model("gnl-min", Some(99)).unwrap();
    assert_eq!(reseeded.name, "gnl-min");
    assert_ne!(reseeded.a, by_name.a);
}

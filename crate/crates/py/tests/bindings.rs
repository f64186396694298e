use kinetic_manifold_py::{classify_json, normal_form_tuple, registry_names, run_cli, verify_json};
use serde_json::Value;

#[test]
fn registry_is_exposed() {
    let mut names = registry_names();
    names.sort();
    assert_eq!(names, ["gnl-min", "gnl-rich", "ldg-min", "nonchar"]);
}

#[test]
fn verify_and_classify_round_trip_as_json() {
    for name in registry_names() {
        let v: Value = serde_json::from_str(&verify_json(&name).unwrap()).unwrap();
        assert_eq!(v["pass"], true, "{name}");
        assert!(v["delta"].as_f64().unwrap() > 0.0);
    }
    let c: Value = serde_json::from_str(&classify_json("nonchar").unwrap()).unwrap();
    assert_eq!(c["case"], "noncharacteristic");
    assert!(verify_json("no-such-model").unwrap_err().is_usage());
}

#[test]
fn normal_form_values() {
    let (kappa, chi, lam, dev) = normal_form_tuple("gnl-min", 3).unwrap();
    assert!(kappa > 0.0 && lam != 0.0);
    assert!((kappa * chi - lam / 2.0).abs() <= 1e-6 * lam.abs());
    assert!(dev.unwrap() < 1e-6);
    let (_, chi, _, dev) = normal_form_tuple("ldg-min", 3).unwrap();
    assert!(chi.abs() < 1e-10 && dev.is_none());
    assert!(normal_form_tuple("nonchar", 3).is_err());
}

#[test]
fn in_process_cli_matches_exit_codes() {
    let args = |s: &[&str]| s.iter().map(|a| a.to_string()).collect::<Vec<_>>();
    let (code, out) = run_cli(&args(&["verify", "--model", "gnl-rich"]));
    assert_eq!(code, 0);
    let v: Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["result"]["pass"], true);
    let (code, out) = run_cli(&args(&["decompose", "--model", "missing"]));
    assert_eq!(code, 2);
    let v: Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["error"]["kind"], "model_not_found");
}

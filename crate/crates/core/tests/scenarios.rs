use std::fs;
use std::path::Path;

use sepkern::scenario::{run, Overrides};
use sepkern::Scenario;

fn bundled() -> Vec<(String, String)> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios");
    let mut out: Vec<(String, String)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read_to_string(&p).unwrap())
        })
        .collect();
    out.sort();
    out
}

#[test]
fn bundled_scenarios_round_trip() {
    for (name, text) in bundled() {
        let sc = Scenario::from_json(&text).unwrap_or_else(|e| panic!("{name}: {e}"));
        let again = Scenario::from_json(&sc.to_json()).unwrap();
        assert_eq!(sc.to_json(), again.to_json(), "{name}");
    }
}

#[test]
fn bundled_scenarios_validate_and_run() {
    for (name, text) in bundled() {
        let sc = Scenario::from_json(&text).unwrap();
        sc.validate().unwrap_or_else(|e| panic!("{name}: {e}"));
        let rep = run(&sc, None, &Overrides::default()).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(rep.command, sc.command.unwrap(), "{name}");
    }
}

#[test]
fn error_message_carries_json_path() {
    let text = r#"{"version": 1, "command": "check", "operators": {"A": {"left": [{"kind": "monomial", "exponent": "two"}]}}}"#;
    let err = Scenario::from_json(text).unwrap_err().to_string();
    assert!(err.contains("operators.A.left[0]"), "{err}");
    assert!(err.contains("line 1"), "{err}");
}

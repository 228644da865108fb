use std::path::PathBuf;

use harvest_core::cases;
use harvest_core::MissionConfig;

fn load(name: &str) -> MissionConfig {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name);
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    MissionConfig::from_json(&text).unwrap()
}

#[test]
fn shipped_scenarios_match_reference_cases() {
    assert_eq!(load("case1.json"), cases::case_one());
    assert_eq!(load("case2.json"), cases::case_two());
    assert_eq!(load("case3.json"), cases::case_three(false));
    assert_eq!(load("case3_stochastic.json"), cases::case_three(true));
    assert_eq!(load("tiny.json"), cases::tiny());
}

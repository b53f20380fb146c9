//! Determinism and shape of acceptance reports.

use stablegen::acceptance::{run_criterion, Suite, CRITERIA, DEFAULT_SEED};

#[test]
fn reports_are_deterministic() {
    for id in ["A1", "A7", "A10"] {
        let a = run_criterion(id, Suite::Fast, 5).unwrap();
        let b = run_criterion(id, Suite::Fast, 5).unwrap();
        assert_eq!(a.details, b.details, "{id}");
        assert_eq!(a.passed, b.passed);
    }
}

#[test]
fn deterministic_criteria_pass_and_serialize() {
    for id in ["A5", "A8", "A9", "A11", "A12"] {
        let r = run_criterion(id, Suite::Fast, DEFAULT_SEED).unwrap();
        assert!(r.passed, "{id}: {}", r.summary);
        let v = serde_json::to_value(&r).unwrap();
        assert_eq!(v["id"], id);
    }
}

#[test]
fn unknown_criterion_is_rejected() {
    assert!(run_criterion("A0", Suite::Fast, 1).is_err());
    assert_eq!(CRITERIA.len(), 12);
    assert!("fast".parse::<Suite>().is_ok() && "slow".parse::<Suite>().is_err());
}

//! Acceptance suite: one test per criterion, full-scale budgets.
//!
//! Each test prints a pass/fail line plus the measured values and asserts
//! the criterion verdict.

use qsa::acceptance::{self, Scale};

fn run(criterion: fn(Scale) -> acceptance::CriterionReport) {
    let report = criterion(Scale::Full);
    println!("{}", report.summary_line());
    for line in &report.lines {
        println!("    {line}");
    }
    assert!(report.pass, "{}", report.summary_line());
}

#[test]
fn criterion_1_estimate_vs_oracle() {
    run(acceptance::criterion_1_estimate_vs_oracle);
}

#[test]
fn criterion_2_variance_collapse() {
    run(acceptance::criterion_2_variance_collapse);
}

#[test]
fn criterion_3_coupling() {
    run(acceptance::criterion_3_coupling);
}

#[test]
fn criterion_4_rate() {
    run(acceptance::criterion_4_rate);
}

#[test]
fn criterion_5_gradient_free() {
    run(acceptance::criterion_5_gradient_free);
}

#[test]
fn criterion_6_policy_evaluation() {
    run(acceptance::criterion_6_policy_evaluation);
}

#[test]
fn criterion_7_policy_iteration() {
    run(acceptance::criterion_7_policy_iteration);
}

#[test]
fn criterion_8_structural() {
    run(acceptance::criterion_8_structural);
}

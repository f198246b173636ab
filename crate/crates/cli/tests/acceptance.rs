//! The acceptance battery as a test target: one pass/fail line per
//! criterion, at the pinned tolerances.
//!
//! Criteria listed in `KNOWN_FAILURES` are still run and still reported as
//! FAIL; they only do not fail the target. Set `RESIST_ACCEPTANCE_STRICT=1`
//! to make every failure fatal.

use std::process::ExitCode;

use resist_sim::acceptance::run_all;

/// The diminishing-step rate check: the measured decay is faster than the
/// worst-case exponent window allows. See the README.
const KNOWN_FAILURES: &[usize] = &[9];

fn main() -> ExitCode {
    let strict = std::env::var("RESIST_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    println!("acceptance battery");
    let results = run_all(|r| println!("{}", r.line()));
    let failed: Vec<usize> = results.iter().filter(|r| !r.passed).map(|r| r.id).collect();
    let unexpected: Vec<usize> = failed
        .iter()
        .copied()
        .filter(|id| strict || !KNOWN_FAILURES.contains(id))
        .collect();
    println!(
        "{} passed, {} failed {:?}; known failures {:?}",
        results.len() - failed.len(),
        failed.len(),
        failed,
        KNOWN_FAILURES
    );
    if unexpected.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("unexpected failures: {unexpected:?}");
        ExitCode::FAILURE
    }
}

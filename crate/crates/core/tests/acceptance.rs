//! One PASS/FAIL line per acceptance criterion, full replica counts.

use stablegen::acceptance::{run_suite, Suite, DEFAULT_SEED};

fn main() {
    let reports = run_suite(Suite::All, DEFAULT_SEED);
    let mut failed = 0;
    for r in &reports {
        let tag = if r.passed { "PASS" } else { "FAIL" };
        println!("{tag} {:<4} {:>7.1}s  {}", r.id, r.seconds, r.summary);
        failed += usize::from(!r.passed);
    }
    println!("{} of {} criteria passed", reports.len() - failed, reports.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

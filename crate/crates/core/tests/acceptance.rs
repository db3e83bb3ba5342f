//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Runs at full scale; set `CHEMOFLUID_ACCEPTANCE_QUICK=1` for
//! reduced problem sizes.

use std::process::ExitCode;
use std::time::Instant;

use chemofluid::verify::{run_suite, Scale};

fn main() -> ExitCode {
    let scale = if std::env::var_os("CHEMOFLUID_ACCEPTANCE_QUICK").is_some() { Scale::Quick } else { Scale::Full };
    let start = Instant::now();
    let mut outcomes = run_suite(scale);
    outcomes.sort_by_key(|o| if o.id == 0 { u32::MAX } else { o.id });

    for id in 1..=11 {
        if !outcomes.iter().any(|o| o.id == id) {
            println!("criterion {id:>2}: FAIL (not executed)");
        }
    }
    for o in &outcomes {
        let label = if o.id == 0 { "auxiliary   ".to_string() } else { format!("criterion {:>2}", o.id) };
        let verdict = if o.passed { "PASS" } else { "FAIL" };
        println!("{label}: {verdict} {} ({:.1}s): {}", o.name, o.seconds, o.detail);
    }
    let all_present = (1..=11).all(|id| outcomes.iter().any(|o| o.id == id));
    let failed = outcomes.iter().filter(|o| !o.passed).count();
    println!("acceptance: {} passed, {failed} failed, {:.1}s total ({scale:?} scale)", outcomes.len() - failed, start.elapsed().as_secs_f64());
    if failed == 0 && all_present {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

//! Re-aggregate a run directory and print every report format.
//!
//! `cargo run --example report -- <run_dir>`

use gradual_tuning::exper::{self, ReportFormat};
use gradual_tuning::TuningMode;

fn main() -> gradual_tuning::Result<()> {
    let Some(dir) = std::env::args().nth(1) else {
        eprintln!("usage: report <run_dir>   (e.g. the directory printed by the experiment example)");
        std::process::exit(2);
    };
    let report = exper::load_report(&dir)?;
    for mode in [TuningMode::Fine, TuningMode::Gradual] {
        if let Some(s) = report.summary(mode) {
            let a: Vec<String> = report
                .task_a
                .iter()
                .zip(&s.task_a_after)
                .map(|(t, after)| format!("{}: {}", t.name, exper::task_a_cell(t.test_error, *after)))
                .collect();
            println!("{mode}: Task-B {}; {}", exper::mean_std_cell(s.task_b), a.join(", "));
        }
    }
    println!("\n{}", exper::render_csv(&report));
    for p in exper::emit_report(&report, &dir, &ReportFormat::ALL)? {
        println!("wrote {}", p.display());
    }
    Ok(())
}

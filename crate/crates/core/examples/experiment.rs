//! A complete Task-A → Task-B experiment from a spec file: train Task-A,
//! run both tuning modes and write the reports.
//!
//! `cargo run --release --example experiment -- [spec]`
//!
//! Without an argument a small cnc → sbl spec is written to a temporary
//! directory and run.

use gradual_tuning::exper::{self, ExperimentSpec};

const DEMO: &str = "\
name = cnc-sbl-demo
task_a = cnc
task_b = sbl
arch = 100,100
sizes = 6000,1000,1000
repetitions = 3
patience = 5
max_epochs = 60
seed = 1
out = run
";

fn main() -> gradual_tuning::Result<()> {
    let path = match std::env::args().nth(1) {
        Some(p) => p.into(),
        None => {
            let dir = std::env::temp_dir().join("gradual-tuning-demo");
            std::fs::create_dir_all(&dir)?;
            let p = dir.join("demo.spec");
            std::fs::write(&p, DEMO)?;
            p
        }
    };
    let spec = ExperimentSpec::load(&path)?;
    let a = exper::run_phase_a(&spec, &mut ())?;
    for t in &a.meta.task_a {
        println!("Task-A {}: {:.2}% test error after {} epochs", t.name, t.test_error, a.meta.epochs);
    }
    for &mode in &spec.modes {
        for row in exper::run_phase_b(&spec, mode, &mut ())? {
            println!(
                "{mode} rep {}: Task-B {:.2}%, Task-A {:?}, {} epochs",
                row.repetition, row.task_b_error, row.task_a_errors, row.epochs
            );
        }
    }
    let report = exper::load_report(&spec.out)?;
    print!("\n{}", exper::render_text(&report));
    println!("run directory: {}", spec.out.display());
    Ok(())
}

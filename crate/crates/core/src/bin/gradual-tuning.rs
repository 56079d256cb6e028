use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use gradual_tuning::datasynth::{self, TaskId};
use gradual_tuning::exper::{self, ExperimentSpec, ReportFormat};
use gradual_tuning::mnist;
use gradual_tuning::net::{FreezeMask, Network};
use gradual_tuning::train::{fmt_sig6, EpochRecord, RunStatus, TrainObserver, TuningMode};
use gradual_tuning::Error;

#[derive(Parser)]
#[command(version, about = "Fine vs gradual tuning experiments")]
struct Cli {
    /// Print one line per training epoch to stderr.
    #[arg(long, short, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic (or MNIST) dataset as a GTDS file.
    GenData {
        #[arg(long)]
        task: String,
        /// train,valid,test
        #[arg(long, value_delimiter = ',', required = true)]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// IDX directory, for mnist04 / mnist59.
        #[arg(long)]
        mnist_dir: Option<PathBuf>,
    },
    /// Train the Task-A network of an experiment spec.
    TrainA {
        #[arg(long)]
        spec: PathBuf,
    },
    /// Run the Task-B repetitions of a spec in one mode.
    Transfer {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        mode: TuningMode,
    },
    /// Aggregate a run directory into report files.
    Report {
        #[arg(long)]
        dir: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "csv,json,text")]
        format: Vec<ReportFormat>,
    },
}

struct Progress(bool);

impl TrainObserver for Progress {
    fn on_epoch(&mut self, r: &EpochRecord, _net: &Network, _mask: &FreezeMask) {
        if self.0 {
            let val: Vec<String> = r.val_errors.iter().map(|&v| fmt_sig6(v)).collect();
            eprintln!(
                "epoch {:>4} phase {} loss {} val {}{}",
                r.epoch,
                r.phase,
                fmt_sig6(r.train_loss),
                val.join("/"),
                if r.stored { " *" } else { "" }
            );
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::InvalidArgument(_) => 2,
        _ => 3,
    }
}

fn budget(status: impl IntoIterator<Item = RunStatus>) -> ExitCode {
    if status.into_iter().any(|s| s == RunStatus::EpochBudgetExhausted) {
        eprintln!("warning: max_epochs reached before early stopping");
        ExitCode::from(4)
    } else {
        ExitCode::SUCCESS
    }
}

fn run(cli: Cli) -> Result<ExitCode, Error> {
    let mut progress = Progress(cli.verbose);
    match cli.command {
        Command::GenData {
            task,
            sizes,
            seed,
            out,
            mnist_dir,
        } => {
            let [a, b, c] = sizes[..] else {
                return Err(Error::Config("--sizes needs train,valid,test".into()));
            };
            let sizes = (a, b, c);
            let data = match task.as_str() {
                "mnist04" | "mnist59" => {
                    let dir = mnist_dir.ok_or_else(|| Error::Config("--mnist-dir is required".into()))?;
                    let range = if task == "mnist04" { mnist::MNIST_04 } else { mnist::MNIST_59 };
                    mnist::load_split(dir, range, sizes, seed)?
                }
                _ => datasynth::generate_dataset(task.parse::<TaskId>()?, sizes, seed)?,
            };
            data.save(&out)?;
            println!("{}", out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::TrainA { spec } => {
            let spec = ExperimentSpec::load(spec)?;
            let result = exper::run_phase_a(&spec, &mut progress)?;
            for t in &result.meta.task_a {
                println!("{}: {:.2}% test error", t.name, t.test_error);
            }
            Ok(budget([result.meta.status]))
        }
        Command::Transfer { spec, mode } => {
            let spec = ExperimentSpec::load(spec)?;
            let rows = exper::run_phase_b(&spec, mode, &mut progress)?;
            let report = exper::load_report(&spec.out)?;
            print!("{}", exper::render_text(&report));
            Ok(budget(rows.iter().map(|r| r.status)))
        }
        Command::Report { dir, format } => {
            let report = exper::load_report(&dir)?;
            for p in exper::emit_report(&report, &dir, &format)? {
                println!("{}", p.display());
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

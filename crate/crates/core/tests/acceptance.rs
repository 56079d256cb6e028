//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails. The MNIST and 20k-stimulus runs make this
//! take a few hours on one core; run directories are kept under the cargo
//! target tmpdir for inspection.

mod common;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use gradual_tuning::datasynth::{self, sample_scene, validate_scene, TaskId};
use gradual_tuning::exper::{self, ExperimentReport, ExperimentSpec};
use gradual_tuning::net::{Network, RegConfig};
use gradual_tuning::train::{train_multitask, TaskRef, TrainConfig, TuningMode};
use gradual_tuning::{Architecture, LabeledDataset, SeededRng};

const GRAD_MAX_TIME: Duration = Duration::from_secs(10);
const FREEZE_SEEDS: u64 = 20;
const FREEZE_THRESHOLD: f64 = 0.1;
const MNIST_TASK_B_MAX: f64 = 2.5;
const MNIST_NOREG_GAP: f64 = 1.0;
const MNIST_DROPOUT_GAP: f64 = 2.0;
const MNIST_REPETITIONS: usize = 5;
const SWEEP_PER_LABEL: usize = 10_000;
const SWEEP_MAX_TIME: Duration = Duration::from_secs(300);
const CNC_MAX_ERROR: f64 = 10.0;
const CNC_MAX_EPOCHS: usize = 100;
const SYNTH_SIZES: &str = "20000,5000,5000";
const SYNTH_REPETITIONS: usize = 3;
const MULTITASK_POINTS: usize = 1000;
const MULTITASK_BATCH: usize = 20;
const MULTITASK_BATCHES: usize = 250;

type Check = Result<(bool, String), String>;
type Criterion = (&'static str, fn() -> Check);

fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance")
}

fn fresh_dir(name: &str) -> PathBuf {
    let dir = root().join(name);
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

/// Writes `<dir>/run.spec` and returns the parsed spec.
fn spec_in(dir: &Path, body: &str) -> Result<(PathBuf, ExperimentSpec), String> {
    let path = dir.join("run.spec");
    fs::write(&path, format!("{body}\nout = run\n")).map_err(err)?;
    let spec = ExperimentSpec::load(&path).map_err(err)?;
    Ok((path, spec))
}

fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentReport, String> {
    exper::run_phase_a(spec, &mut ()).map_err(err)?;
    for &mode in &spec.modes {
        exper::run_phase_b(spec, mode, &mut ()).map_err(err)?;
    }
    let report = exper::load_report(&spec.out).map_err(err)?;
    print!("{}", exper::render_text(&report));
    Ok(report)
}

fn task_a_means(report: &ExperimentReport) -> Result<(f64, f64), String> {
    let get = |m| {
        report
            .summary(m)
            .map(|s| s.task_a_after[0].mean)
            .ok_or_else(|| format!("no {m} rows"))
    };
    Ok((get(TuningMode::Fine)?, get(TuningMode::Gradual)?))
}

fn gradients() -> Check {
    let start = Instant::now();
    let g = common::gradient_check(0xACCE);
    let took = start.elapsed();
    Ok((
        g.worst < common::GRAD_TOL && took < GRAD_MAX_TIME,
        format!(
            "{} nets, {} entries, worst relative error {:.2e} (tol {:.0e}) at {}; {:.1}s",
            g.nets,
            g.entries,
            g.worst,
            common::GRAD_TOL,
            g.worst_at,
            took.as_secs_f64()
        ),
    ))
}

fn freeze_contract() -> Check {
    let mut advances = 0;
    let mut epochs = 0;
    for seed in 0..FREEZE_SEEDS {
        let reg = match seed % 3 {
            0 => RegConfig::none(),
            1 => RegConfig::l1(),
            _ => RegConfig::dropout(3),
        };
        let (initial, audit) = common::gradual_run(seed, reg, FREEZE_THRESHOLD);
        epochs += audit.records.len();
        match common::check_freeze_log(&initial, &audit, FREEZE_THRESHOLD) {
            Ok(n) => advances += n,
            Err(e) => return Ok((false, format!("seed {seed}: {e}"))),
        }
    }
    Ok((
        advances > 0,
        format!("{FREEZE_SEEDS} gradual runs, {epochs} audited epochs, {advances} frontier advances"),
    ))
}

fn mnist(reg: &str, gap: f64, check_task_b: bool) -> Check {
    let mnist_dir = common::require_mnist();
    let dir = fresh_dir(&format!("mnist-{reg}"));
    let (_, spec) = spec_in(
        &dir,
        &format!(
            "name = mnist-{reg}\ntask_a = mnist04\ntask_b = mnist59\narch = 500,500\nreg = {reg}\n\
             repetitions = {MNIST_REPETITIONS}\nseed = 1\nmnist_dir = {}",
            mnist_dir.display()
        ),
    )?;
    let report = run_experiment(&spec)?;
    let (fine, gradual) = task_a_means(&report)?;
    let b = |m| report.summary(m).map(|s| s.task_b.mean).unwrap_or(f64::INFINITY);
    let (bf, bg) = (b(TuningMode::Fine), b(TuningMode::Gradual));
    let task_b_ok = !check_task_b || (bf <= MNIST_TASK_B_MAX && bg <= MNIST_TASK_B_MAX);
    Ok((
        task_b_ok && fine - gradual >= gap,
        format!(
            "Task-A {:.2} → fine {fine:.2} / gradual {gradual:.2} (gap {:.2}, need ≥ {gap}); \
             Task-B fine {bf:.2} / gradual {bg:.2}{}",
            report.task_a[0].test_error,
            fine - gradual,
            if check_task_b { format!(" (need ≤ {MNIST_TASK_B_MAX})") } else { String::new() }
        ),
    ))
}

fn generator_sweep() -> Check {
    let start = Instant::now();
    let mut scenes = 0;
    for task in TaskId::ALL {
        for label in 0..2u8 {
            let mut rng = SeededRng::derive(7, &[task as u64, label as u64]);
            for _ in 0..SWEEP_PER_LABEL {
                let scene = sample_scene(task, label, &mut rng).map_err(err)?;
                if let Err(v) = validate_scene(&scene) {
                    return Ok((false, format!("{task} label {label}: {v}")));
                }
                scenes += 1;
            }
        }
    }
    let took = start.elapsed();
    Ok((
        took < SWEEP_MAX_TIME,
        format!("{scenes} scenes valid, {:.1}s (limit {}s)", took.as_secs_f64(), SWEEP_MAX_TIME.as_secs()),
    ))
}

fn cnc_learnability() -> Check {
    let dir = fresh_dir("cnc");
    let (_, spec) = spec_in(
        &dir,
        &format!("name = cnc\ntask_a = cnc\ntask_b = ac\narch = 500,500\nsizes = {SYNTH_SIZES}\nmax_epochs = {CNC_MAX_EPOCHS}\nseed = 1"),
    )?;
    let a = exper::run_phase_a(&spec, &mut ()).map_err(err)?;
    let e = a.meta.task_a[0].test_error;
    Ok((
        e < CNC_MAX_ERROR && a.meta.epochs <= CNC_MAX_EPOCHS,
        format!("test error {e:.2}% after {} epochs (need < {CNC_MAX_ERROR}% within {CNC_MAX_EPOCHS})", a.meta.epochs),
    ))
}

fn synthetic_ordering() -> Check {
    let dir = fresh_dir("acl-ac");
    let (_, spec) = spec_in(
        &dir,
        &format!("name = acl-ac\ntask_a = acl\ntask_b = ac\narch = 500,500\nsizes = {SYNTH_SIZES}\nrepetitions = {SYNTH_REPETITIONS}\nseed = 1"),
    )?;
    let report = run_experiment(&spec)?;
    let (fine, gradual) = task_a_means(&report)?;
    Ok((
        gradual <= fine,
        format!("Task-A {:.2} → fine {fine:.2} / gradual {gradual:.2}", report.task_a[0].test_error),
    ))
}

fn multitask_scheduler() -> Check {
    let data: Vec<LabeledDataset> = (0..5)
        .map(|t| common::toy_dataset(&format!("t{t}"), (MULTITASK_POINTS, 200, 200), 12, 2 + t % 2, 50 + t as u64 * 3))
        .collect();
    let mut rng = SeededRng::new(11);
    let mut net = Network::init(Architecture::new(12, vec![10, 8]).unwrap(), &mut rng).map_err(err)?;
    let mut tasks = Vec::new();
    for d in &data {
        let head = net.attach_head(d.classes(), &mut rng).map_err(err)?;
        tasks.push(TaskRef {
            head,
            name: &d.task,
            data: d,
        });
    }
    let cfg = TrainConfig {
        batch_size: MULTITASK_BATCH,
        patience: 5,
        max_epochs: 40,
        seed: 11,
        ..TrainConfig::default()
    };
    let mut audit = common::Audit::default();
    train_multitask(net, &tasks, &cfg, &mut audit).map_err(err)?;

    let epochs = audit.records.len();
    if audit.batches.len() != epochs * MULTITASK_BATCHES {
        return Ok((false, format!("{} batches over {epochs} epochs", audit.batches.len())));
    }
    for (e, chunk) in audit.batches.chunks(MULTITASK_BATCHES).enumerate() {
        if let Some(i) = chunk.iter().enumerate().position(|(i, &b)| b != (i % 5, MULTITASK_BATCH)) {
            return Ok((false, format!("epoch {}: batch {i} is {:?}", e + 1, chunk[i])));
        }
    }
    if let Some(r) = audit.records.iter().find(|r| r.batches != MULTITASK_BATCHES) {
        return Ok((false, format!("epoch {} logged {} batches", r.epoch, r.batches)));
    }
    let mut best = [f64::INFINITY; 5];
    let mut stores = 0;
    for r in &audit.records {
        let all_min = r.val_errors.iter().zip(&best).all(|(v, b)| v <= b);
        if r.stored != all_min {
            return Ok((false, format!("epoch {}: stored = {} but all-minimum = {all_min}", r.epoch, r.stored)));
        }
        stores += r.stored as usize;
        for (b, &v) in best.iter_mut().zip(&r.val_errors) {
            *b = b.min(v);
        }
    }
    Ok((
        stores > 0,
        format!("{epochs} epochs × {MULTITASK_BATCHES} batches in cyclic order; {stores} stores, all on all-minimum epochs"),
    ))
}

fn transfer_determinism() -> Check {
    let dir = fresh_dir("determinism");
    let (spec_path, spec) = spec_in(
        &dir,
        "name = det\ntask_a = sbl\ntask_b = sbt\narch = 32,16\nsizes = 300,100,100\nrepetitions = 2\npatience = 4\nseed = 9",
    )?;
    let bin = env!("CARGO_BIN_EXE_gradual-tuning");
    let run = |args: &[&str]| -> Result<(), String> {
        let out = Command::new(bin).args(args).output().map_err(err)?;
        match out.status.code() {
            Some(0) => Ok(()),
            c => Err(format!("{args:?} exited {c:?}: {}", String::from_utf8_lossy(&out.stderr))),
        }
    };
    let s = spec_path.to_str().unwrap();
    run(&["train-a", "--spec", s])?;
    let files = ["report.csv", "report.json", "report.txt"];
    let mut outputs = Vec::new();
    for _ in 0..2 {
        run(&["transfer", "--spec", s, "--mode", "fine"])?;
        run(&["transfer", "--spec", s, "--mode", "gradual"])?;
        let bytes: Vec<Vec<u8>> = files.iter().map(|f| fs::read(spec.out.join(f))).collect::<Result<_, _>>().map_err(err)?;
        outputs.push(bytes);
        for f in files {
            fs::remove_file(spec.out.join(f)).map_err(err)?;
        }
    }
    let same = outputs[0] == outputs[1];
    Ok((same, format!("report.csv/json/txt {} across two transfer runs", if same { "identical" } else { "differ" })))
}

fn round_trips() -> Check {
    let dir = fresh_dir("roundtrip");
    let mut rng = SeededRng::new(5);
    let mut net = Network::init(Architecture::new(1024, vec![40, 30]).unwrap(), &mut rng).map_err(err)?;
    net.attach_head(2, &mut rng).map_err(err)?;
    net.attach_head(2, &mut rng).map_err(err)?;
    // Awkward values that a lossy encoding would not survive.
    let w = net.layers_mut()[0].weights.as_mut_slice();
    w[0] = -0.0;
    w[1] = f64::MIN_POSITIVE / 3.0;
    w[2] = 1.0 + f64::EPSILON;
    let ck = dir.join("net.gtck");
    net.save(&ck).map_err(err)?;
    let back = Network::load(&ck).map_err(err)?;
    let bits = |n: &Network| -> Vec<u64> {
        n.blocks()
            .flat_map(|d| d.weights.as_slice().iter().chain(&d.bias).map(|v| v.to_bits()).collect::<Vec<_>>())
            .collect()
    };
    let params = bits(&net).len();
    let net_ok = bits(&net) == bits(&back) && back.arch() == net.arch() && back.head_count() == 2;

    let data = datasynth::generate_dataset(TaskId::Cnc, (200, 50, 50), 3).map_err(err)?;
    let ds = dir.join("cnc.gtds");
    data.save(&ds).map_err(err)?;
    let loaded = LabeledDataset::load(&ds).map_err(err)?;
    let data_ok = loaded == data && loaded.train.images() == data.train.images() && loaded.test.labels() == data.test.labels();
    Ok((
        net_ok && data_ok,
        format!(
            "checkpoint {params} parameters {}; GTDS 300 images {}",
            if net_ok { "bitwise equal" } else { "differ" },
            if data_ok { "bitwise equal" } else { "differ" }
        ),
    ))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("gradient correctness", gradients),
        ("freeze contract", freeze_contract),
        ("multi-task scheduler", multitask_scheduler),
        ("transfer determinism", transfer_determinism),
        ("round-trips", round_trips),
        ("synthetic generator sweep", generator_sweep),
        ("synthetic cnc learnability", cnc_learnability),
        ("synthetic acl→ac ordering", synthetic_ordering),
        ("MNIST no-reg reproduction", || mnist("none", MNIST_NOREG_GAP, true)),
        ("MNIST dropout forgetting gap", || mnist("dropout", MNIST_DROPOUT_GAP, false)),
    ];
    let only = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let mut failed = 0;
    for (name, check) in criteria {
        if only.as_deref().is_some_and(|o| !name.contains(o)) {
            continue;
        }
        let start = Instant::now();
        let (pass, detail) = check().unwrap_or_else(|e| (false, format!("error: {e}")));
        failed += !pass as usize;
        println!(
            "{} {name}: {detail} [{:.0}s]",
            if pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}

//! Task-A → Task-B experiments: spec files, the two training phases,
//! aggregation over repetitions and report files.
//!
//! A run directory holds
//!
//! ```text
//! phase_a.gtck  phase_a.json  phase_a_history.csv
//! fine/rows.csv     fine/rep<r>_history.csv
//! gradual/rows.csv  gradual/rep<r>_history.csv
//! report.csv  report.json  report.txt
//! ```
//!
//! Spec files are `key = value` lines; `#` starts a comment.
//!
//! | key | meaning | default |
//! |-----|---------|---------|
//! | `name` | label used in reports | `experiment` |
//! | `task_a` | one task id, or five separated by commas | required |
//! | `task_b` | task id | required |
//! | `arch` | hidden widths, e.g. `500,500` | required |
//! | `reg` | `none`, `l1` or `dropout` | `none` |
//! | `l1_lambda` | L1 strength | `1e-4` |
//! | `repetitions` | Task-B repetitions per mode | `5` |
//! | `modes` | subset of `fine,gradual` | both |
//! | `seed` | base seed | `0` |
//! | `sizes` | train,valid,test per dataset | 20000,5000,5000 for MNIST, 330000,10000,10000 otherwise |
//! | `learning_rate`, `batch_size`, `patience`, `plateau_threshold`, `max_epochs` | training | 0.01, 20, 20, 0.1, 1000 |
//! | `mnist_dir` | directory with the IDX files | required for MNIST tasks |
//! | `data_dir` | directory searched for `<task>.gtds` | none |
//! | `generate` | build missing datasets instead of failing | `true` |
//! | `out` | run directory | required |
//!
//! Task ids are the synthetic ids (`ac`, `acl`, …) plus `mnist04` and
//! `mnist59`. Relative paths are taken from the spec file's directory.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::LabeledDataset;
use crate::datasynth::{self, TaskId};
use crate::mnist::{self, DigitRangeSpec};
use crate::net::{Architecture, HeadId, Network, RegConfig, RegKind};
use crate::numerics::{derive_seed, hash_label, SeededRng};
use crate::train::{
    evaluate, train_multitask, train_single, RunStatus, TaskRef, TrainConfig, TrainObserver, TuningMode,
    TuningState,
};
use crate::{Error, Result};

pub const CHECKPOINT_FILE: &str = "phase_a.gtck";
pub const PHASE_A_META_FILE: &str = "phase_a.json";
pub const PHASE_A_HISTORY_FILE: &str = "phase_a_history.csv";
pub const ROWS_FILE: &str = "rows.csv";
pub const REPORT_STEM: &str = "report";

/// Where a task's data comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskSource {
    Synthetic(TaskId),
    Mnist(DigitRangeSpec),
}

impl TaskSource {
    pub fn name(&self) -> String {
        match self {
            TaskSource::Synthetic(t) => t.to_string(),
            TaskSource::Mnist(d) => d.name(),
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            TaskSource::Synthetic(_) => datasynth::IMAGE_SIDE * datasynth::IMAGE_SIDE,
            TaskSource::Mnist(_) => 28 * 28,
        }
    }

    pub fn classes(&self) -> usize {
        match self {
            TaskSource::Synthetic(_) => 2,
            TaskSource::Mnist(d) => d.classes(),
        }
    }

    fn default_sizes(&self) -> (usize, usize, usize) {
        match self {
            TaskSource::Synthetic(_) => datasynth::FULL_SIZES,
            TaskSource::Mnist(_) => mnist::DEFAULT_SIZES,
        }
    }
}

impl FromStr for TaskSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "mnist04" => Ok(TaskSource::Mnist(mnist::MNIST_04)),
            "mnist59" => Ok(TaskSource::Mnist(mnist::MNIST_59)),
            other => other.parse().map(TaskSource::Synthetic),
        }
    }
}

impl fmt::Display for TaskSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub name: String,
    pub task_a: Vec<TaskSource>,
    pub task_b: TaskSource,
    pub arch: Architecture,
    pub reg: RegConfig,
    pub repetitions: usize,
    pub modes: Vec<TuningMode>,
    pub seed: u64,
    pub sizes: (usize, usize, usize),
    pub train: TrainConfig,
    pub mnist_dir: Option<PathBuf>,
    pub data_dir: Option<PathBuf>,
    pub generate: bool,
    pub out: PathBuf,
}

fn config<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Config(msg.into()))
}

fn parse_value<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("bad value '{v}' for '{key}'")))
}

fn parse_list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',').map(|p| parse_value(key, p.trim())).collect()
}

impl ExperimentSpec {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read spec {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    /// Parses spec text; relative paths are joined onto `base_dir`.
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let mut kv = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return config(format!("line {}: expected 'key = value'", n + 1));
            };
            if kv.insert(k.trim().to_string(), v.trim().to_string()).is_some() {
                return config(format!("line {}: duplicate key '{}'", n + 1, k.trim()));
            }
        }
        const KNOWN: &[&str] = &[
            "name",
            "task_a",
            "task_b",
            "arch",
            "reg",
            "l1_lambda",
            "repetitions",
            "modes",
            "seed",
            "sizes",
            "learning_rate",
            "batch_size",
            "patience",
            "plateau_threshold",
            "max_epochs",
            "mnist_dir",
            "data_dir",
            "generate",
            "out",
        ];
        if let Some(k) = kv.keys().find(|k| !KNOWN.contains(&k.as_str())) {
            return config(format!("unknown key '{k}'"));
        }
        let required = |k: &str| kv.get(k).ok_or_else(|| Error::Config(format!("missing key '{k}'")));
        let path = |k: &str| kv.get(k).map(|v| base_dir.join(v));

        let task_a: Vec<TaskSource> = parse_list("task_a", required("task_a")?)?;
        let task_b: TaskSource = parse_value("task_b", required("task_b")?)?;
        let hidden: Vec<usize> = parse_list("arch", required("arch")?)?;
        let arch = Architecture::new(task_b.input_dim(), hidden).map_err(|e| Error::Config(e.to_string()))?;
        let reg_kind = match kv.get("reg").map(String::as_str).unwrap_or("none") {
            "none" => RegKind::None,
            "l1" => RegKind::L1,
            "dropout" => RegKind::Dropout,
            other => return config(format!("unknown reg '{other}'")),
        };
        let mut reg = RegConfig::standard(reg_kind, arch.depth());
        if let Some(v) = kv.get("l1_lambda") {
            if reg_kind != RegKind::L1 {
                return config("l1_lambda given without reg = l1");
            }
            reg.l1_lambda = parse_value("l1_lambda", v)?;
        }

        let mut train = TrainConfig {
            reg: reg.clone(),
            ..TrainConfig::default()
        };
        if let Some(v) = kv.get("learning_rate") {
            train.learning_rate = parse_value("learning_rate", v)?;
        }
        if let Some(v) = kv.get("batch_size") {
            train.batch_size = parse_value("batch_size", v)?;
        }
        if let Some(v) = kv.get("patience") {
            train.patience = parse_value("patience", v)?;
        }
        if let Some(v) = kv.get("plateau_threshold") {
            train.plateau_threshold = parse_value("plateau_threshold", v)?;
        }
        if let Some(v) = kv.get("max_epochs") {
            train.max_epochs = parse_value("max_epochs", v)?;
        }
        let sizes = match kv.get("sizes") {
            Some(v) => match parse_list::<usize>("sizes", v)?[..] {
                [a, b, c] => (a, b, c),
                _ => return config("sizes needs three comma-separated counts"),
            },
            None => task_b.default_sizes(),
        };
        let modes = match kv.get("modes") {
            Some(v) => parse_list("modes", v)?,
            None => vec![TuningMode::Fine, TuningMode::Gradual],
        };
        let spec = Self {
            name: kv.get("name").cloned().unwrap_or_else(|| "experiment".into()),
            task_a,
            task_b,
            arch,
            reg,
            repetitions: kv.get("repetitions").map(|v| parse_value("repetitions", v)).transpose()?.unwrap_or(5),
            modes,
            seed: kv.get("seed").map(|v| parse_value("seed", v)).transpose()?.unwrap_or(0),
            sizes,
            train,
            mnist_dir: path("mnist_dir"),
            data_dir: path("data_dir"),
            generate: kv.get("generate").map(|v| parse_value("generate", v)).transpose()?.unwrap_or(true),
            out: path("out").ok_or_else(|| Error::Config("missing key 'out'".into()))?,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.repetitions == 0 {
            return config("repetitions must be at least 1");
        }
        if !(self.task_a.len() == 1 || self.task_a.len() == 5) {
            return config(format!("task_a needs one or five tasks, got {}", self.task_a.len()));
        }
        let mut names: Vec<String> = self.task_a.iter().map(TaskSource::name).collect();
        names.sort();
        names.dedup();
        if names.len() != self.task_a.len() {
            return config("task_a lists a task twice");
        }
        if self.task_a.contains(&self.task_b) {
            return config("task_b must differ from every task_a");
        }
        if self.task_a.iter().any(|t| t.input_dim() != self.task_b.input_dim()) {
            return config("task_a and task_b have different input sizes");
        }
        if self.modes.is_empty() {
            return config("no modes selected");
        }
        if self.sizes.0 < 2 || self.sizes.1 < 2 || self.sizes.2 < 2 {
            return config("every split needs at least 2 items");
        }
        self.train.validate()?;
        self.reg
            .validate(self.arch.depth())
            .map_err(|e| Error::Config(e.to_string()))
    }

    /// Loads `<data_dir>/<task>.gtds` if present, otherwise builds the dataset.
    pub fn dataset(&self, task: TaskSource) -> Result<LabeledDataset> {
        if let Some(dir) = &self.data_dir {
            let file = dir.join(format!("{}.gtds", task.name()));
            if file.exists() {
                return LabeledDataset::load(file);
            }
        }
        if !self.generate {
            return Err(Error::Io(std::io::Error::new(
                std::io::ErrorKind::NotFound,
                format!("dataset {task} missing and generation disabled"),
            )));
        }
        let seed = derive_seed(self.seed, &[hash_label("data"), hash_label(&task.name())]);
        match task {
            TaskSource::Synthetic(t) => datasynth::generate_dataset(t, self.sizes, seed),
            TaskSource::Mnist(range) => {
                let Some(dir) = &self.mnist_dir else {
                    return config("mnist_dir is required for MNIST tasks");
                };
                mnist::load_split(dir, range, self.sizes, seed)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskAEntry {
    pub name: String,
    pub head: usize,
    /// Test error (%) right after Phase A.
    pub test_error: f64,
}

/// What Phase A leaves behind next to the checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseAMeta {
    pub name: String,
    pub reg: RegKind,
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub task_a: Vec<TaskAEntry>,
    pub task_b: String,
    pub epochs: usize,
    pub status: RunStatus,
}

#[derive(Debug, Clone)]
pub struct PhaseAResult {
    pub network: Network,
    pub meta: PhaseAMeta,
    pub state: TuningState,
}

fn create_file(path: &Path) -> Result<BufWriter<fs::File>> {
    Ok(BufWriter::new(fs::File::create(path)?))
}

/// Trains the body and the Task-A head(s) from scratch and writes the
/// checkpoint, its metadata and the training history into `spec.out`.
pub fn run_phase_a(spec: &ExperimentSpec, observer: &mut dyn TrainObserver) -> Result<PhaseAResult> {
    spec.validate()?;
    let datasets = spec
        .task_a
        .iter()
        .map(|&t| spec.dataset(t))
        .collect::<Result<Vec<_>>>()?;
    let mut init = SeededRng::derive(spec.seed, &[hash_label("phase-a-init")]);
    let mut net = Network::init(spec.arch.clone(), &mut init)?;
    let heads = spec
        .task_a
        .iter()
        .map(|t| net.attach_head(t.classes(), &mut init))
        .collect::<Result<Vec<HeadId>>>()?;
    let names: Vec<String> = spec.task_a.iter().map(TaskSource::name).collect();
    let refs: Vec<TaskRef<'_>> = (0..heads.len())
        .map(|i| TaskRef {
            head: heads[i],
            name: &names[i],
            data: &datasets[i],
        })
        .collect();
    let cfg = TrainConfig {
        seed: derive_seed(spec.seed, &[hash_label("phase-a-train")]),
        ..spec.train.clone()
    };
    let outcome = if refs.len() == 1 {
        train_single(net, refs[0], &cfg, TuningMode::Fine, &refs, observer)?
    } else {
        train_multitask(net, &refs, &cfg, observer)?
    };
    let task_a = refs
        .iter()
        .map(|t| {
            Ok(TaskAEntry {
                name: t.name.to_string(),
                head: t.head.0,
                test_error: evaluate(&outcome.network, t.head, &t.data.test)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let meta = PhaseAMeta {
        name: spec.name.clone(),
        reg: spec.reg.kind,
        input_dim: spec.arch.input_dim,
        hidden: spec.arch.hidden.clone(),
        task_a,
        task_b: spec.task_b.name(),
        epochs: outcome.state.epochs(),
        status: outcome.status,
    };

    fs::create_dir_all(&spec.out)?;
    outcome.network.save(spec.out.join(CHECKPOINT_FILE))?;
    let mut f = create_file(&spec.out.join(PHASE_A_META_FILE))?;
    serde_json::to_writer_pretty(&mut f, &meta).map_err(io_error)?;
    writeln!(f)?;
    f.flush()?;
    let mut f = create_file(&spec.out.join(PHASE_A_HISTORY_FILE))?;
    outcome.state.write_history_csv(&mut f)?;
    f.flush()?;
    Ok(PhaseAResult {
        network: outcome.network,
        meta,
        state: outcome.state,
    })
}

fn io_error(e: serde_json::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

pub fn load_phase_a_meta(dir: impl AsRef<Path>) -> Result<PhaseAMeta> {
    let path = dir.as_ref().join(PHASE_A_META_FILE);
    let text = fs::read_to_string(&path)?;
    serde_json::from_str(&text).map_err(|e| Error::format("phase A metadata", e.column() as u64, e.to_string()))
}

/// One Task-B repetition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepetitionRow {
    pub mode: TuningMode,
    pub repetition: usize,
    /// Final Task-B test error (%).
    pub task_b_error: f64,
    /// Final test error (%) of each Task-A head, in Task-A order.
    pub task_a_errors: Vec<f64>,
    pub epochs: usize,
    pub status: RunStatus,
}

/// Seed of repetition `r`'s training streams: fine and gradual runs of the
/// same repetition share the Task-B head but not the batch order.
pub fn repetition_seed(base: u64, mode: TuningMode, r: usize) -> u64 {
    base ^ derive_seed(hash_label(mode.as_str()), &[r as u64])
}

/// Fresh Task-B head generator for repetition `r`, identical across modes.
pub fn head_rng(base: u64, r: usize) -> SeededRng {
    SeededRng::derive(base, &[hash_label("task-b-head"), r as u64])
}

/// Runs every Task-B repetition for `mode` from the Phase-A checkpoint in
/// `spec.out`, writes `<mode>/rows.csv` plus per-repetition histories, and
/// refreshes the report files.
pub fn run_phase_b(
    spec: &ExperimentSpec,
    mode: TuningMode,
    observer: &mut dyn TrainObserver,
) -> Result<Vec<RepetitionRow>> {
    spec.validate()?;
    let meta = load_phase_a_meta(&spec.out)?;
    let expected: Vec<String> = spec.task_a.iter().map(TaskSource::name).collect();
    let found: Vec<String> = meta.task_a.iter().map(|t| t.name.clone()).collect();
    if expected != found || meta.hidden != spec.arch.hidden {
        return config(format!(
            "checkpoint in {} was trained for {found:?} with {:?}, spec asks for {expected:?} with {:?}",
            spec.out.display(),
            meta.hidden,
            spec.arch.hidden
        ));
    }
    let checkpoint = fs::read(spec.out.join(CHECKPOINT_FILE))?;
    let data_a = spec
        .task_a
        .iter()
        .map(|&t| spec.dataset(t))
        .collect::<Result<Vec<_>>>()?;
    let data_b = spec.dataset(spec.task_b)?;
    let name_b = spec.task_b.name();
    let mode_dir = spec.out.join(mode.as_str());
    fs::create_dir_all(&mode_dir)?;

    let mut rows = Vec::with_capacity(spec.repetitions);
    for r in 0..spec.repetitions {
        let mut net = Network::from_bytes(&checkpoint)?;
        let head_b = net.attach_head(spec.task_b.classes(), &mut head_rng(spec.seed, r))?;
        let mut track: Vec<TaskRef<'_>> = meta
            .task_a
            .iter()
            .zip(&data_a)
            .map(|(t, d)| TaskRef {
                head: HeadId(t.head),
                name: &t.name,
                data: d,
            })
            .collect();
        let task_b = TaskRef {
            head: head_b,
            name: &name_b,
            data: &data_b,
        };
        track.push(task_b);
        let cfg = TrainConfig {
            seed: repetition_seed(spec.seed, mode, r),
            ..spec.train.clone()
        };
        let outcome = train_single(net, task_b, &cfg, mode, &track, observer)?;
        let task_a_errors = track[..track.len() - 1]
            .iter()
            .map(|t| evaluate(&outcome.network, t.head, &t.data.test))
            .collect::<Result<Vec<_>>>()?;
        rows.push(RepetitionRow {
            mode,
            repetition: r,
            task_b_error: evaluate(&outcome.network, head_b, &data_b.test)?,
            task_a_errors,
            epochs: outcome.state.epochs(),
            status: outcome.status,
        });
        let mut f = create_file(&mode_dir.join(format!("rep{r}_history.csv")))?;
        outcome.state.write_history_csv(&mut f)?;
        f.flush()?;
    }
    let mut f = create_file(&mode_dir.join(ROWS_FILE))?;
    write_rows_csv(&mut f, &meta, &rows)?;
    f.flush()?;

    let report = load_report(&spec.out)?;
    emit_report(&report, &spec.out, &ReportFormat::ALL)?;
    Ok(rows)
}

fn status_str(s: RunStatus) -> &'static str {
    match s {
        RunStatus::Stopped => "stopped",
        RunStatus::EpochBudgetExhausted => "epoch_budget_exhausted",
    }
}

/// Raw repetition rows; reals are written in shortest round-trip form.
pub fn write_rows_csv(mut w: impl Write, meta: &PhaseAMeta, rows: &[RepetitionRow]) -> Result<()> {
    let mut header = vec!["mode", "repetition", "task_b_error", "epochs", "status"]
        .into_iter()
        .map(String::from)
        .collect::<Vec<_>>();
    header.extend(meta.task_a.iter().map(|t| format!("task_a_error_{}", t.name)));
    writeln!(w, "{}", header.join(","))?;
    for r in rows {
        let mut cells = vec![
            r.mode.to_string(),
            r.repetition.to_string(),
            r.task_b_error.to_string(),
            r.epochs.to_string(),
            status_str(r.status).to_string(),
        ];
        cells.extend(r.task_a_errors.iter().map(f64::to_string));
        writeln!(w, "{}", cells.join(","))?;
    }
    Ok(())
}

pub fn read_rows_csv(text: &str) -> Result<Vec<RepetitionRow>> {
    const WHAT: &str = "rows CSV";
    let mut lines = text.lines();
    let header = lines.next().ok_or(Error::Empty(WHAT))?;
    let n_a = header.split(',').count().saturating_sub(5);
    let mut rows = Vec::new();
    let mut offset = header.len() as u64 + 1;
    for line in lines {
        let bad = |msg: &str| Error::format(WHAT, offset, msg.to_string());
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != 5 + n_a {
            return Err(bad("wrong number of cells"));
        }
        let real = |s: &str| s.parse::<f64>().map_err(|_| bad("bad number"));
        let int = |s: &str| s.parse::<usize>().map_err(|_| bad("bad integer"));
        rows.push(RepetitionRow {
            mode: cells[0].parse().map_err(|_| bad("bad mode"))?,
            repetition: int(cells[1])?,
            task_b_error: real(cells[2])?,
            epochs: int(cells[3])?,
            status: match cells[4] {
                "stopped" => RunStatus::Stopped,
                "epoch_budget_exhausted" => RunStatus::EpochBudgetExhausted,
                _ => return Err(bad("bad status")),
            },
            task_a_errors: cells[5..].iter().map(|c| real(c)).collect::<Result<_>>()?,
        });
        offset += line.len() as u64 + 1;
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Sample standard deviation (n − 1); zero for a single value.
    pub std: f64,
}

pub fn mean_std(values: &[f64]) -> Result<MeanStd> {
    if values.is_empty() {
        return Err(Error::Empty("mean_std"));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Ok(MeanStd { mean, std })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSummary {
    pub mode: TuningMode,
    pub repetitions: usize,
    pub task_b: MeanStd,
    /// One entry per Task-A task.
    pub task_a_after: Vec<MeanStd>,
    pub epochs: MeanStd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub name: String,
    pub reg: RegKind,
    pub task_a: Vec<TaskAEntry>,
    pub task_b: String,
    pub summaries: Vec<ModeSummary>,
    pub rows: Vec<RepetitionRow>,
}

impl ExperimentReport {
    pub fn summary(&self, mode: TuningMode) -> Option<&ModeSummary> {
        self.summaries.iter().find(|s| s.mode == mode)
    }
}

/// Mean and sample deviation of every column, per mode (fine first).
pub fn aggregate(meta: &PhaseAMeta, rows: Vec<RepetitionRow>) -> Result<ExperimentReport> {
    if rows.is_empty() {
        return Err(Error::Empty("aggregate"));
    }
    let n_a = meta.task_a.len();
    if let Some(r) = rows.iter().find(|r| r.task_a_errors.len() != n_a) {
        return Err(Error::InvalidArgument(format!(
            "row {} of {} has {} Task-A errors, expected {n_a}",
            r.repetition,
            r.mode,
            r.task_a_errors.len()
        )));
    }
    let mut summaries = Vec::new();
    for mode in [TuningMode::Fine, TuningMode::Gradual] {
        let sel: Vec<&RepetitionRow> = rows.iter().filter(|r| r.mode == mode).collect();
        if sel.is_empty() {
            continue;
        }
        let col = |f: &dyn Fn(&RepetitionRow) -> f64| mean_std(&sel.iter().map(|r| f(r)).collect::<Vec<_>>());
        summaries.push(ModeSummary {
            mode,
            repetitions: sel.len(),
            task_b: col(&|r| r.task_b_error)?,
            task_a_after: (0..n_a).map(|i| col(&|r| r.task_a_errors[i])).collect::<Result<_>>()?,
            epochs: col(&|r| r.epochs as f64)?,
        });
    }
    Ok(ExperimentReport {
        name: meta.name.clone(),
        reg: meta.reg,
        task_a: meta.task_a.clone(),
        task_b: meta.task_b.clone(),
        summaries,
        rows,
    })
}

/// Aggregates whatever rows exist in a run directory.
pub fn load_report(dir: impl AsRef<Path>) -> Result<ExperimentReport> {
    let dir = dir.as_ref();
    let meta = load_phase_a_meta(dir)?;
    let mut rows = Vec::new();
    for mode in [TuningMode::Fine, TuningMode::Gradual] {
        let file = dir.join(mode.as_str()).join(ROWS_FILE);
        if file.exists() {
            rows.extend(read_rows_csv(&fs::read_to_string(file)?)?);
        }
    }
    aggregate(&meta, rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
    Text,
}

impl ReportFormat {
    pub const ALL: [ReportFormat; 3] = [ReportFormat::Csv, ReportFormat::Json, ReportFormat::Text];

    pub fn extension(self) -> &'static str {
        match self {
            ReportFormat::Csv => "csv",
            ReportFormat::Json => "json",
            ReportFormat::Text => "txt",
        }
    }
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            "text" | "txt" => Ok(ReportFormat::Text),
            other => config(format!("unknown report format '{other}'")),
        }
    }
}

fn mode_title(mode: TuningMode) -> &'static str {
    match mode {
        TuningMode::Fine => "Fine Tuning",
        TuningMode::Gradual => "Gradual Tuning",
    }
}

fn reg_label(reg: RegKind) -> &'static str {
    match reg {
        RegKind::None => "No-reg",
        RegKind::L1 => "L1",
        RegKind::Dropout => "Drop",
    }
}

/// `1.2 → 1.83 ± 0.05`
pub fn task_a_cell(before: f64, after: MeanStd) -> String {
    format!("{before:.1} → {:.2} ± {:.2}", after.mean, after.std)
}

pub fn mean_std_cell(v: MeanStd) -> String {
    format!("{:.2} ± {:.2}", v.mean, v.std)
}

pub fn epochs_cell(v: MeanStd) -> String {
    format!("{:.0} ± {:.0}", v.mean, v.std)
}

/// Paper-style table: one block per mode, columns Reg, Task-B, one per
/// Task-A task, Epochs.
pub fn render_text(report: &ExperimentReport) -> String {
    let mut header = vec!["Reg".to_string(), format!("Task-B ({})", report.task_b)];
    header.extend(report.task_a.iter().map(|t| format!("Task-A ({})", t.name)));
    header.push("Epochs".into());
    let mut out = format!("{}\n", report.name);
    for s in &report.summaries {
        let mut row = vec![reg_label(report.reg).to_string(), mean_std_cell(s.task_b)];
        row.extend(
            report
                .task_a
                .iter()
                .zip(&s.task_a_after)
                .map(|(t, &after)| task_a_cell(t.test_error, after)),
        );
        row.push(epochs_cell(s.epochs));
        let widths: Vec<usize> = header
            .iter()
            .zip(&row)
            .map(|(h, c)| h.chars().count().max(c.chars().count()))
            .collect();
        let line = |cells: &[String]| {
            cells
                .iter()
                .zip(&widths)
                .map(|(c, &w)| format!("{c:<w$}"))
                .collect::<Vec<_>>()
                .join(" | ")
                .trim_end()
                .to_string()
        };
        out.push_str(&format!("\n{} ({} repetitions)\n", mode_title(s.mode), s.repetitions));
        out.push_str(&line(&header));
        out.push('\n');
        out.push_str(&widths.iter().map(|&w| "-".repeat(w)).collect::<Vec<_>>().join("-+-"));
        out.push('\n');
        out.push_str(&line(&row));
        out.push('\n');
    }
    out
}

/// Raw rows followed by `mean` and `std` lines per mode.
pub fn render_csv(report: &ExperimentReport) -> String {
    let mut out = String::from("kind,mode,repetition,task_b_error,epochs");
    for t in &report.task_a {
        out.push_str(&format!(",task_a_before_{0},task_a_error_{0}", t.name));
    }
    out.push('\n');
    for r in &report.rows {
        out.push_str(&format!("raw,{},{},{},{}", r.mode, r.repetition, r.task_b_error, r.epochs));
        for (t, e) in report.task_a.iter().zip(&r.task_a_errors) {
            out.push_str(&format!(",{},{e}", t.test_error));
        }
        out.push('\n');
    }
    for s in &report.summaries {
        for (kind, pick) in [("mean", 0), ("std", 1)] {
            let v = |m: MeanStd| if pick == 0 { m.mean } else { m.std };
            out.push_str(&format!("{kind},{},,{},{}", s.mode, v(s.task_b), v(s.epochs)));
            for (t, &a) in report.task_a.iter().zip(&s.task_a_after) {
                let before = if pick == 0 { t.test_error } else { 0.0 };
                out.push_str(&format!(",{before},{}", v(a)));
            }
            out.push('\n');
        }
    }
    out
}

/// Writes `report.<ext>` into `dir` for each format and returns the paths.
pub fn emit_report(report: &ExperimentReport, dir: impl AsRef<Path>, formats: &[ReportFormat]) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for &f in formats {
        let body = match f {
            ReportFormat::Csv => render_csv(report),
            ReportFormat::Json => serde_json::to_string_pretty(report).map_err(io_error)? + "\n",
            ReportFormat::Text => render_text(report),
        };
        let path = dir.join(format!("{REPORT_STEM}.{}", f.extension()));
        fs::write(&path, body)?;
        written.push(path);
    }
    Ok(written)
}

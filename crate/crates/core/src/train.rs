//! Minibatch SGD, patience-based early stopping, the gradual unfreezing
//! schedule, and the interleaved multi-task trainer.
//!
//! Gradual tuning starts with only the task head trainable (phase 0). After
//! each epoch the validation error is compared with the previous epoch's; when
//! the absolute change is below `plateau_threshold` percentage points, the
//! next hidden layer down becomes trainable. Phase `p` therefore trains the
//! head plus the `p` topmost hidden layers, and the last phase trains the
//! whole network. Early stopping runs independently of the phase: the
//! patience counter tracks the global validation minimum and is not reset when
//! a layer is unfrozen.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::{LabeledDataset, Split};
use crate::net::{FreezeMask, Gradients, HeadId, Mode, Network, RegConfig};
use crate::numerics::{argmax, SeededRng};
use crate::{Error, Result};

const SHUFFLE_STREAM: u64 = 0x5348_5546;
const DROPOUT_STREAM: u64 = 0x4452_4f50;
const EVAL_CHUNK: usize = 500;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub patience: usize,
    /// Plateau threshold for unfreezing, in percentage points of validation error.
    pub plateau_threshold: f64,
    pub reg: RegConfig,
    pub max_epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            batch_size: 20,
            patience: 20,
            plateau_threshold: 0.1,
            reg: RegConfig::none(),
            max_epochs: 1000,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if self.batch_size == 0 || self.patience == 0 || self.max_epochs == 0 {
            return Err(Error::Config(
                "batch size, patience and max epochs must be at least 1".into(),
            ));
        }
        if self.plateau_threshold.is_nan() || self.plateau_threshold <= 0.0 {
            return Err(Error::Config("plateau threshold must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TuningMode {
    /// Every parameter trainable from the first epoch.
    Fine,
    /// Head first, then one more hidden layer per validation plateau.
    Gradual,
}

impl TuningMode {
    pub fn as_str(self) -> &'static str {
        match self {
            TuningMode::Fine => "fine",
            TuningMode::Gradual => "gradual",
        }
    }
}

impl fmt::Display for TuningMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TuningMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "fine" => Ok(TuningMode::Fine),
            "gradual" => Ok(TuningMode::Gradual),
            other => Err(Error::Config(format!("unknown tuning mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    /// Number of unfrozen hidden layers while this epoch trained.
    pub phase: usize,
    pub train_loss: f64,
    pub val_errors: Vec<f64>,
    pub test_errors: Vec<f64>,
    /// Whether the network was checkpointed after this epoch.
    pub stored: bool,
    pub batches: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Continue,
    Stop,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuningState {
    pub phase: usize,
    pub best_val_err: f64,
    pub best_epoch: usize,
    pub epochs_since_best: usize,
    pub prev_val_err: Option<f64>,
    /// Serialized network (checkpoint bytes) at the best epoch.
    pub best_checkpoint: Option<Vec<u8>>,
    /// Per-task minima and counters for multi-task training.
    pub task_best: Vec<f64>,
    pub task_since_best: Vec<usize>,
    pub val_columns: Vec<String>,
    pub test_columns: Vec<String>,
    pub history: Vec<EpochRecord>,
}

impl Default for TuningState {
    fn default() -> Self {
        Self::new()
    }
}

impl TuningState {
    pub fn new() -> Self {
        Self {
            phase: 0,
            best_val_err: f64::INFINITY,
            best_epoch: 0,
            epochs_since_best: 0,
            prev_val_err: None,
            best_checkpoint: None,
            task_best: Vec::new(),
            task_since_best: Vec::new(),
            val_columns: Vec::new(),
            test_columns: Vec::new(),
            history: Vec::new(),
        }
    }

    pub fn epochs(&self) -> usize {
        self.history.len()
    }

    /// History as CSV: `epoch,phase,train_loss,val_err_<name>...,test_err_<name>...`,
    /// reals with 6 significant digits.
    pub fn write_history_csv(&self, mut w: impl Write) -> Result<()> {
        let mut header = vec!["epoch".to_string(), "phase".into(), "train_loss".into()];
        header.extend(self.val_columns.iter().map(|c| format!("val_err_{c}")));
        header.extend(self.test_columns.iter().map(|c| format!("test_err_{c}")));
        writeln!(w, "{}", header.join(","))?;
        for r in &self.history {
            let mut cells = vec![r.epoch.to_string(), r.phase.to_string(), fmt_sig6(r.train_loss)];
            cells.extend(r.val_errors.iter().map(|&v| fmt_sig6(v)));
            cells.extend(r.test_errors.iter().map(|&v| fmt_sig6(v)));
            writeln!(w, "{}", cells.join(","))?;
        }
        Ok(())
    }
}

/// `%.6g`-style formatting.
pub fn fmt_sig6(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let exp = x.abs().log10().floor() as i32;
    // Rounding can carry into the next decade (e.g. 999999.5).
    let rounded_exp = {
        let s = format!("{:.5e}", x);
        s.split('e').nth(1).and_then(|e| e.parse::<i32>().ok()).unwrap_or(exp)
    };
    if (-5..6).contains(&rounded_exp) {
        let decimals = (5 - rounded_exp).max(0) as usize;
        let s = format!("{:.*}", decimals, x);
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        let s = format!("{:.5e}", x);
        let (mant, e) = s.split_once('e').unwrap();
        let mant = if mant.contains('.') {
            mant.trim_end_matches('0').trim_end_matches('.')
        } else {
            mant
        };
        let e: i32 = e.parse().unwrap();
        format!("{mant}e{}{:02}", if e < 0 { '-' } else { '+' }, e.abs())
    }
}

/// Hooks into a training run, for logging and audits.
pub trait TrainObserver {
    fn on_batch(&mut self, _task: usize, _size: usize) {}
    /// Called after each epoch's validation with the mask that was in force
    /// during that epoch.
    fn on_epoch(&mut self, _record: &EpochRecord, _net: &Network, _mask: &FreezeMask) {}
}

impl TrainObserver for () {}

/// A head together with the dataset it is trained or monitored on.
#[derive(Debug, Clone, Copy)]
pub struct TaskRef<'a> {
    pub head: HeadId,
    pub name: &'a str,
    pub data: &'a LabeledDataset,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    /// Early stopping fired.
    Stopped,
    /// `max_epochs` ran out first; the best checkpoint was still restored.
    EpochBudgetExhausted,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub network: Network,
    pub state: TuningState,
    pub status: RunStatus,
}

/// One plain SGD update; frozen blocks stay bit-identical.
pub fn sgd_step(net: &mut Network, grads: &Gradients, lr: f64, mask: &FreezeMask) -> Result<()> {
    net.apply_gradients(grads, lr, mask)
}

/// Percentage of misclassified examples (evaluation mode).
pub fn evaluate(net: &Network, head: HeadId, split: &Split) -> Result<f64> {
    if split.is_empty() {
        return Err(Error::Empty("evaluate"));
    }
    let mut wrong = 0usize;
    let indices: Vec<usize> = (0..split.len()).collect();
    for chunk in indices.chunks(EVAL_CHUNK) {
        let (x, y) = split.batch(chunk)?;
        let probs = net.predict(head, &x)?;
        for (r, &label) in y.iter().enumerate() {
            if argmax(probs.row(r))? != label {
                wrong += 1;
            }
        }
    }
    Ok(100.0 * wrong as f64 / split.len() as f64)
}

/// Patience rule: a strictly lower validation error resets the counter and
/// stores `net`; otherwise the counter grows and training stops when it
/// reaches `patience`.
pub fn update_early_stop(
    state: &mut TuningState,
    val_err: f64,
    patience: usize,
    net: &Network,
) -> StopDecision {
    if val_err < state.best_val_err {
        state.best_val_err = val_err;
        state.best_epoch = state.history.len().max(1);
        state.epochs_since_best = 0;
        state.best_checkpoint = Some(net.to_bytes());
        StopDecision::Continue
    } else {
        state.epochs_since_best += 1;
        if state.epochs_since_best >= patience {
            StopDecision::Stop
        } else {
            StopDecision::Continue
        }
    }
}

/// Unfreezes the next hidden layer down when the validation error moved by
/// less than `threshold` points since the previous epoch. Returns whether
/// the frontier advanced.
pub fn update_gradual_phase(
    state: &mut TuningState,
    val_err: f64,
    mask: &mut FreezeMask,
    threshold: f64,
) -> bool {
    let depth = mask.layers.len();
    let plateau = state
        .prev_val_err
        .is_some_and(|prev| (prev - val_err).abs() < threshold);
    state.prev_val_err = Some(val_err);
    if plateau && state.phase < depth {
        state.phase += 1;
        mask.layers[depth - state.phase] = true;
        true
    } else {
        false
    }
}

fn epoch_order(len: usize, seed: u64, epoch: usize, task: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..len).collect();
    SeededRng::derive(seed, &[SHUFFLE_STREAM, epoch as u64, task as u64]).shuffle(&mut order);
    order
}

fn check_task(net: &Network, task: &TaskRef<'_>) -> Result<()> {
    let head = net.head(task.head)?;
    if task.data.input_dim() != net.arch().input_dim {
        return Err(Error::InvalidArgument(format!(
            "dataset {} has {} inputs, network expects {}",
            task.name,
            task.data.input_dim(),
            net.arch().input_dim
        )));
    }
    if task.data.classes() > head.classes {
        return Err(Error::InvalidArgument(format!(
            "dataset {} has {} classes but head {} has {}",
            task.name,
            task.data.classes(),
            task.head,
            head.classes
        )));
    }
    Ok(())
}

/// Restores the stored best network, falling back to the current one.
fn restore_best(state: &TuningState, current: Network) -> Result<Network> {
    match &state.best_checkpoint {
        Some(bytes) => Network::from_bytes(bytes),
        None => Ok(current),
    }
}

/// Trains one head on one dataset with Fine or Gradual tuning.
///
/// Each epoch reshuffles the training split, runs minibatch SGD through
/// `task.head`, measures validation error, applies early stopping and (in
/// gradual mode) the unfreezing rule, and evaluates every `track` head on its
/// test split. The returned network is the best checkpoint.
pub fn train_single(
    mut net: Network,
    task: TaskRef<'_>,
    cfg: &TrainConfig,
    mode: TuningMode,
    track: &[TaskRef<'_>],
    observer: &mut dyn TrainObserver,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    cfg.reg.validate(net.depth())?;
    check_task(&net, &task)?;
    for t in track {
        check_task(&net, t)?;
    }
    let train = &task.data.train;
    if train.is_empty() || task.data.valid.is_empty() {
        return Err(Error::Empty("training or validation split"));
    }

    let mut state = TuningState::new();
    state.val_columns = vec![task.name.to_string()];
    state.test_columns = track.iter().map(|t| t.name.to_string()).collect();
    let mut mask = match mode {
        TuningMode::Fine => {
            state.phase = net.depth();
            FreezeMask::body_and_head(&net, task.head)
        }
        TuningMode::Gradual => FreezeMask::head_and_top(&net, task.head, 0),
    };
    let mut grads = Gradients::zeros_like(&net);
    let mut status = RunStatus::EpochBudgetExhausted;

    for epoch in 1..=cfg.max_epochs {
        let order = epoch_order(train.len(), cfg.seed, epoch, 0);
        let mut drop_rng = SeededRng::derive(cfg.seed, &[DROPOUT_STREAM, epoch as u64]);
        let mut loss_sum = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(cfg.batch_size) {
            let (x, y) = train.batch(chunk)?;
            let cache = net.forward(task.head, &x, Mode::Train, &cfg.reg, &mut drop_rng)?;
            loss_sum += net.data_loss(&cache, &y)?;
            net.backward_into(&cache, &y, &cfg.reg, &mask, &mut grads)?;
            sgd_step(&mut net, &grads, cfg.learning_rate, &mask)?;
            observer.on_batch(0, chunk.len());
            batches += 1;
        }
        let train_loss = loss_sum / batches as f64 + crate::net::l1_penalty(&net, cfg.reg.lambda());

        let val_err = evaluate(&net, task.head, &task.data.valid)?;
        let test_errors = track
            .iter()
            .map(|t| evaluate(&net, t.head, &t.data.test))
            .collect::<Result<Vec<_>>>()?;
        state.history.push(EpochRecord {
            epoch,
            phase: state.phase,
            train_loss,
            val_errors: vec![val_err],
            test_errors,
            stored: false,
            batches,
        });
        let decision = update_early_stop(&mut state, val_err, cfg.patience, &net);
        let stored = state.epochs_since_best == 0;
        let record = state.history.last_mut().expect("just pushed");
        record.stored = stored;
        observer.on_epoch(record, &net, &mask);
        if decision == StopDecision::Stop {
            status = RunStatus::Stopped;
            break;
        }
        if mode == TuningMode::Gradual {
            update_gradual_phase(&mut state, val_err, &mut mask, cfg.plateau_threshold);
        }
    }

    let network = restore_best(&state, net)?;
    Ok(TrainOutcome {
        network,
        state,
        status,
    })
}

/// One minibatch in a multi-task epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScheduledBatch {
    pub task: usize,
    pub start: usize,
    pub len: usize,
}

/// Fixed-order round robin over tasks, one batch each, until every training
/// split has been consumed once. Tasks that run out drop out of the rotation.
pub fn round_robin_schedule(sizes: &[usize], batch_size: usize) -> Vec<ScheduledBatch> {
    let mut cursors = vec![0usize; sizes.len()];
    let mut out = Vec::new();
    loop {
        let mut any = false;
        for (task, &size) in sizes.iter().enumerate() {
            let start = cursors[task];
            if start < size {
                let len = batch_size.min(size - start);
                out.push(ScheduledBatch { task, start, len });
                cursors[task] += len;
                any = true;
            }
        }
        if !any {
            return out;
        }
    }
}

/// Multi-task rule: every task whose validation error sets a strict new
/// minimum resets its counter; the network is stored only when every task is
/// at or below its previous minimum; training stops as soon as any task has
/// gone `patience` epochs without a new minimum.
pub fn update_multitask_stop(
    state: &mut TuningState,
    val_errs: &[f64],
    patience: usize,
    net: &Network,
) -> (StopDecision, bool) {
    if state.task_best.len() != val_errs.len() {
        state.task_best = vec![f64::INFINITY; val_errs.len()];
        state.task_since_best = vec![0; val_errs.len()];
    }
    let all_at_min = val_errs
        .iter()
        .zip(&state.task_best)
        .all(|(&e, &best)| e <= best);
    for (t, &e) in val_errs.iter().enumerate() {
        if e < state.task_best[t] {
            state.task_best[t] = e;
            state.task_since_best[t] = 0;
        } else {
            state.task_since_best[t] += 1;
        }
    }
    if all_at_min {
        state.best_checkpoint = Some(net.to_bytes());
        state.best_epoch = state.history.len().max(1);
        state.best_val_err = val_errs.iter().sum::<f64>() / val_errs.len() as f64;
    }
    state.epochs_since_best = state.task_since_best.iter().copied().max().unwrap_or(0);
    let decision = if state.epochs_since_best >= patience {
        StopDecision::Stop
    } else {
        StopDecision::Continue
    };
    (decision, all_at_min)
}

/// Trains several heads at once, alternating batches in the given task order.
/// Each batch updates the shared body and its own task's head only.
pub fn train_multitask(
    mut net: Network,
    tasks: &[TaskRef<'_>],
    cfg: &TrainConfig,
    observer: &mut dyn TrainObserver,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    cfg.reg.validate(net.depth())?;
    if tasks.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "multi-task training needs at least 2 tasks, got {}",
            tasks.len()
        )));
    }
    for t in tasks {
        check_task(&net, t)?;
        if t.data.train.is_empty() || t.data.valid.is_empty() {
            return Err(Error::Empty("training or validation split"));
        }
    }
    let mut heads: Vec<HeadId> = tasks.iter().map(|t| t.head).collect();
    heads.sort();
    heads.dedup();
    if heads.len() != tasks.len() {
        return Err(Error::InvalidArgument("each task needs its own head".into()));
    }

    let mut state = TuningState::new();
    state.phase = net.depth();
    state.val_columns = tasks.iter().map(|t| t.name.to_string()).collect();
    let masks: Vec<FreezeMask> = tasks
        .iter()
        .map(|t| FreezeMask::body_and_head(&net, t.head))
        .collect();
    let all = FreezeMask::all(&net);
    let sizes: Vec<usize> = tasks.iter().map(|t| t.data.train.len()).collect();
    let schedule = round_robin_schedule(&sizes, cfg.batch_size);
    let mut grads = Gradients::zeros_like(&net);
    let mut status = RunStatus::EpochBudgetExhausted;

    for epoch in 1..=cfg.max_epochs {
        let orders: Vec<Vec<usize>> = sizes
            .iter()
            .enumerate()
            .map(|(t, &n)| epoch_order(n, cfg.seed, epoch, t))
            .collect();
        let mut drop_rng = SeededRng::derive(cfg.seed, &[DROPOUT_STREAM, epoch as u64]);
        let mut loss_sum = 0.0;
        for b in &schedule {
            let task = &tasks[b.task];
            let rows = &orders[b.task][b.start..b.start + b.len];
            let (x, y) = task.data.train.batch(rows)?;
            let cache = net.forward(task.head, &x, Mode::Train, &cfg.reg, &mut drop_rng)?;
            loss_sum += net.data_loss(&cache, &y)?;
            net.backward_into(&cache, &y, &cfg.reg, &masks[b.task], &mut grads)?;
            sgd_step(&mut net, &grads, cfg.learning_rate, &masks[b.task])?;
            observer.on_batch(b.task, b.len);
        }
        let train_loss = loss_sum / schedule.len() as f64 + crate::net::l1_penalty(&net, cfg.reg.lambda());
        let val_errors = tasks
            .iter()
            .map(|t| evaluate(&net, t.head, &t.data.valid))
            .collect::<Result<Vec<_>>>()?;
        state.history.push(EpochRecord {
            epoch,
            phase: state.phase,
            train_loss,
            val_errors: val_errors.clone(),
            test_errors: Vec::new(),
            stored: false,
            batches: schedule.len(),
        });
        let (decision, stored) = update_multitask_stop(&mut state, &val_errors, cfg.patience, &net);
        let record = state.history.last_mut().expect("just pushed");
        record.stored = stored;
        observer.on_epoch(record, &net, &all);
        if decision == StopDecision::Stop {
            status = RunStatus::Stopped;
            break;
        }
    }

    let network = restore_best(&state, net)?;
    Ok(TrainOutcome {
        network,
        state,
        status,
    })
}

#![allow(dead_code)]

use std::path::PathBuf;

use gradual_tuning::net::{Dense, FreezeMask, HeadId, Mode, Network, RegConfig, RegKind};
use gradual_tuning::train::{train_single, EpochRecord, TaskRef, TrainConfig, TrainObserver, TuningMode};
use gradual_tuning::{Architecture, LabeledDataset, Matrix, SeededRng, Split};

pub fn mnist_dir() -> PathBuf {
    std::env::var_os("GT_MNIST_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("/root/data/mnist"))
}

/// Panics with a clear message when the IDX files are not installed.
pub fn require_mnist() -> PathBuf {
    let dir = mnist_dir();
    for f in [
        "train-images-idx3-ubyte",
        "train-labels-idx1-ubyte",
        "t10k-images-idx3-ubyte",
        "t10k-labels-idx1-ubyte",
    ] {
        let raw = dir.join(f);
        let gz = dir.join(format!("{f}.gz"));
        assert!(
            raw.exists() || gz.exists(),
            "MNIST file {} missing; set GT_MNIST_DIR to the directory holding the official IDX files",
            raw.display()
        );
    }
    dir
}

/// `dim`-pixel rows with label 1 when the first half is brighter than the
/// second, or a three-class variant keyed on the brightest third.
pub fn toy_split(n: usize, dim: usize, classes: usize, seed: u64) -> Split {
    let mut rng = SeededRng::new(seed);
    let mut images = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let row: Vec<u8> = (0..dim).map(|_| rng.below(256) as u8).collect();
        let part = dim / classes;
        let sums: Vec<u32> = (0..classes)
            .map(|c| row[c * part..(c + 1) * part].iter().map(|&v| v as u32).sum())
            .collect();
        let label = (0..classes).max_by_key(|&c| (sums[c], std::cmp::Reverse(c))).unwrap();
        images.extend_from_slice(&row);
        labels.push(label as u8);
    }
    Split::new(dim, images, labels).unwrap()
}

pub fn toy_dataset(name: &str, sizes: (usize, usize, usize), dim: usize, classes: usize, seed: u64) -> LabeledDataset {
    LabeledDataset {
        task: name.into(),
        height: 1,
        width: dim,
        train: toy_split(sizes.0, dim, classes, seed),
        valid: toy_split(sizes.1, dim, classes, seed + 1),
        test: toy_split(sizes.2, dim, classes, seed + 2),
    }
}

/// Largest `|a − n| / max(|a|, |n|, 1e-5)` over every parameter of a network.
pub struct GradCheck {
    pub nets: usize,
    pub entries: usize,
    pub worst: f64,
    pub worst_at: String,
}

pub const GRAD_EPS: f64 = 1e-5;
pub const GRAD_TOL: f64 = 1e-4;

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-5)
}

fn param_mut(net: &mut Network, block: usize, i: usize) -> &mut f64 {
    let depth = net.depth();
    let dense: &mut Dense = if block < depth {
        &mut net.layers_mut()[block]
    } else {
        &mut net.heads_mut()[block - depth].dense
    };
    let nw = dense.weights.as_slice().len();
    if i < nw {
        &mut dense.weights.as_mut_slice()[i]
    } else {
        &mut dense.bias[i - nw]
    }
}

fn grad_of(grads: &gradual_tuning::net::Gradients, depth: usize, block: usize, i: usize) -> f64 {
    let d = if block < depth {
        &grads.layers[block]
    } else {
        &grads.heads[block - depth]
    };
    let nw = d.weights.as_slice().len();
    if i < nw {
        d.weights.as_slice()[i]
    } else {
        d.bias[i - nw]
    }
}

/// A random net no larger than 4-3-2 with a batch of at most 5, whose ReLU
/// pre-activations all sit at least 1e-3 from the kink.
fn random_case(seed: u64, kind: RegKind) -> (Network, HeadId, Matrix, Vec<usize>, RegConfig) {
    let mut attempt = 0u64;
    loop {
        let mut rng = SeededRng::derive(seed, &[attempt]);
        attempt += 1;
        let input = 2 + rng.below(3);
        let depth = 1 + rng.below(2);
        let hidden: Vec<usize> = (0..depth).map(|_| 2 + rng.below(2)).collect();
        let mut net = Network::init(Architecture::new(input, hidden).unwrap(), &mut rng).unwrap();
        let head = net.attach_head(2, &mut rng).unwrap();
        // Nonzero biases so the check covers them too.
        for d in net.layers_mut() {
            for b in &mut d.bias {
                *b = rng.uniform(-0.3, 0.3).unwrap();
            }
        }
        let batch = 1 + rng.below(5);
        let x = Matrix::from_vec(batch, input, (0..batch * input).map(|_| rng.uniform(-1.0, 1.0).unwrap()).collect())
            .unwrap();
        let labels: Vec<usize> = (0..batch).map(|_| rng.below(2)).collect();
        let reg = match kind {
            RegKind::None => RegConfig::none(),
            RegKind::L1 => RegConfig::l1_with(1e-2),
            RegKind::Dropout => RegConfig::dropout(depth),
        };
        let cache = net
            .forward(head, &x, Mode::Eval, &RegConfig::none(), &mut SeededRng::new(0))
            .unwrap();
        let near_kink = cache
            .pre_activations
            .iter()
            .any(|z| z.as_slice().iter().any(|v| v.abs() < 1e-3));
        let near_zero_weight = net
            .blocks()
            .any(|d| d.weights.as_slice().iter().any(|w| w.abs() < 1e-3));
        if !near_kink && !near_zero_weight {
            return (net, head, x, labels, reg);
        }
    }
}

/// Analytic gradients against central differences on 20 random nets for
/// each regularization kind. Dropout uses one fixed mask per net.
pub fn gradient_check(seed: u64) -> GradCheck {
    let mut out = GradCheck {
        nets: 0,
        entries: 0,
        worst: 0.0,
        worst_at: String::new(),
    };
    for kind in [RegKind::None, RegKind::L1, RegKind::Dropout] {
        for n in 0..20u64 {
            let (net, head, x, labels, reg) = random_case(seed ^ (n * 0x9E37 + kind as u64), kind);
            let mode = if kind == RegKind::Dropout { Mode::Train } else { Mode::Eval };
            let mask_seed = 1000 + n;
            let cache = net.forward(head, &x, mode, &reg, &mut SeededRng::new(mask_seed)).unwrap();
            let grads = net.backward(&cache, &labels, &reg, &FreezeMask::all(&net)).unwrap();
            let loss = |net: &Network| {
                net.loss(head, &x, &labels, mode, &reg, &mut SeededRng::new(mask_seed))
                    .unwrap()
            };
            let depth = net.depth();
            let sizes: Vec<usize> = net.blocks().map(|d| d.weights.as_slice().len() + d.bias.len()).collect();
            for (block, &size) in sizes.iter().enumerate() {
                for i in 0..size {
                    let mut plus = net.clone();
                    *param_mut(&mut plus, block, i) += GRAD_EPS;
                    let mut minus = net.clone();
                    *param_mut(&mut minus, block, i) -= GRAD_EPS;
                    let numeric = (loss(&plus) - loss(&minus)) / (2.0 * GRAD_EPS);
                    let analytic = grad_of(&grads, depth, block, i);
                    let e = rel_err(analytic, numeric);
                    out.entries += 1;
                    if e > out.worst {
                        out.worst = e;
                        out.worst_at = format!(
                            "{kind:?} net {n} block {block} param {i}: analytic {analytic:e} numeric {numeric:e}"
                        );
                    }
                }
            }
            out.nets += 1;
        }
    }
    out
}

/// Records parameters, mask and history line after every epoch.
#[derive(Default)]
pub struct Audit {
    pub snapshots: Vec<Vec<Dense>>,
    pub masks: Vec<FreezeMask>,
    pub records: Vec<EpochRecord>,
    pub batches: Vec<(usize, usize)>,
}

impl TrainObserver for Audit {
    fn on_batch(&mut self, task: usize, size: usize) {
        self.batches.push((task, size));
    }

    fn on_epoch(&mut self, record: &EpochRecord, net: &Network, mask: &FreezeMask) {
        self.snapshots.push(net.blocks().cloned().collect());
        self.masks.push(mask.clone());
        self.records.push(record.clone());
    }
}

/// Checks a gradual run's audit log: blocks frozen during an epoch are
/// bit-identical before and after it, the frontier starts at 0, moves by at
/// most one layer, and moves exactly when `|Δval| < threshold`.
pub fn check_freeze_log(initial: &Network, audit: &Audit, threshold: f64) -> Result<usize, String> {
    let depth = initial.depth();
    let mut before: Vec<Dense> = initial.blocks().cloned().collect();
    let mut advances = 0;
    for (e, ((after, mask), rec)) in audit.snapshots.iter().zip(&audit.masks).zip(&audit.records).enumerate() {
        for (b, (p, q)) in before.iter().zip(after).enumerate() {
            let frozen = if b < depth { !mask.layers[b] } else { !mask.heads[b - depth] };
            let same = p.weights.as_slice().iter().zip(q.weights.as_slice()).all(|(x, y)| x.to_bits() == y.to_bits())
                && p.bias.iter().zip(&q.bias).all(|(x, y)| x.to_bits() == y.to_bits());
            if frozen && !same {
                return Err(format!("epoch {}: frozen block {b} changed", rec.epoch));
            }
        }
        let unfrozen = mask.layers.iter().filter(|&&t| t).count();
        if unfrozen != rec.phase {
            return Err(format!("epoch {}: phase {} but {unfrozen} layers trainable", rec.epoch, rec.phase));
        }
        if mask.layers.iter().enumerate().any(|(k, &t)| t != (k >= depth - rec.phase)) {
            return Err(format!("epoch {}: trainable layers are not the top {}", rec.epoch, rec.phase));
        }
        if e == 0 && rec.phase != 0 {
            return Err("gradual run did not start with the head alone".into());
        }
        if let Some(next) = audit.records.get(e + 1) {
            let plateau = e > 0 && (audit.records[e - 1].val_errors[0] - rec.val_errors[0]).abs() < threshold;
            let expected = if plateau && rec.phase < depth { rec.phase + 1 } else { rec.phase };
            if next.phase != expected {
                return Err(format!(
                    "epoch {}: phase {} -> {}, expected {expected}",
                    rec.epoch, rec.phase, next.phase
                ));
            }
            if next.phase > rec.phase {
                advances += 1;
            }
        }
        before = after.clone();
    }
    Ok(advances)
}

/// Gradual tuning of a fresh 12-6-5-4 net on a 3-class toy task, next to
/// an earlier 2-class head that must stay put.
pub fn gradual_run(seed: u64, reg: RegConfig, threshold: f64) -> (Network, Audit) {
    let data = toy_dataset("toy", (200, 100, 100), 12, 3, seed);
    let mut rng = SeededRng::new(seed);
    let mut net = Network::init(Architecture::new(12, vec![6, 5, 4]).unwrap(), &mut rng).unwrap();
    // An earlier task's head, which must never move.
    net.attach_head(2, &mut rng).unwrap();
    let head = net.attach_head(3, &mut rng).unwrap();
    let initial = net.clone();
    let cfg = TrainConfig {
        patience: 8,
        max_epochs: 60,
        plateau_threshold: threshold,
        reg,
        seed,
        ..TrainConfig::default()
    };
    let task = TaskRef {
        head,
        name: "toy",
        data: &data,
    };
    let mut audit = Audit::default();
    train_single(net, task, &cfg, TuningMode::Gradual, &[task], &mut audit).unwrap();
    (initial, audit)
}

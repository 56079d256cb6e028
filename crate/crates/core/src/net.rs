//! Fully connected ReLU networks with several softmax heads on the last
//! hidden layer.
//!
//! Every head reads the same top hidden representation, so a network trained
//! on one task can grow a fresh head for the next task while keeping the old
//! one around for measuring forgetting.
//!
//! Losses are averaged over the batch. The L1 penalty covers weight matrices
//! (body and heads) but not biases. Dropout is inverted dropout on hidden
//! activations only: in training mode surviving units are scaled by
//! `1 / (1 - rate)`, evaluation mode is the plain network.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::numerics::{gemm, Matrix, SeededRng};
use crate::{Error, Result};

/// Input width and hidden layer widths, e.g. `784 → [500, 500]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
}

impl Architecture {
    pub fn new(input_dim: usize, hidden: Vec<usize>) -> Result<Self> {
        let arch = Self { input_dim, hidden };
        arch.validate()?;
        Ok(arch)
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden.is_empty() {
            return Err(Error::InvalidArgument("architecture needs a hidden layer".into()));
        }
        if self.input_dim == 0 || self.hidden.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "all widths must be positive: {} -> {:?}",
                self.input_dim, self.hidden
            )));
        }
        Ok(())
    }

    pub fn depth(&self) -> usize {
        self.hidden.len()
    }

    pub fn top_width(&self) -> usize {
        *self.hidden.last().expect("validated architecture")
    }

    fn fan_in(&self, layer: usize) -> usize {
        if layer == 0 {
            self.input_dim
        } else {
            self.hidden[layer - 1]
        }
    }
}

/// Affine map `x · W + b`. Also used as the container for its gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            weights: Matrix::zeros(fan_in, fan_out),
            bias: vec![0.0; fan_out],
        }
    }

    /// Glorot-uniform weights in `±sqrt(6 / (fan_in + fan_out))`, zero bias.
    pub fn glorot(fan_in: usize, fan_out: usize, rng: &mut SeededRng) -> Self {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let mut layer = Self::zeros(fan_in, fan_out);
        for w in layer.weights.as_mut_slice() {
            *w = rng.uniform(-limit, limit).expect("limit > 0");
        }
        layer
    }

    pub fn fan_in(&self) -> usize {
        self.weights.rows()
    }

    pub fn fan_out(&self) -> usize {
        self.weights.cols()
    }

    fn apply(&self, input: &Matrix) -> Matrix {
        let mut z = Matrix::zeros(input.rows(), self.fan_out());
        gemm(1.0, input, false, &self.weights, false, 0.0, &mut z);
        z.add_row_vector(&self.bias).expect("bias length matches fan_out");
        z
    }

    fn fill_zero(&mut self) {
        self.weights.as_mut_slice().fill(0.0);
        self.bias.fill(0.0);
    }

    fn param_count(&self) -> usize {
        self.weights.as_slice().len() + self.bias.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct HeadId(pub usize);

impl std::fmt::Display for HeadId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Head {
    pub dense: Dense,
    pub classes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    arch: Architecture,
    layers: Vec<Dense>,
    heads: Vec<Head>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegKind {
    None,
    L1,
    Dropout,
}

/// Regularization settings. The constructors carry the standard values:
/// `λ₁ = 1e-4` for L1 and a 20% drop rate on the first hidden layer, 50% on
/// the others, for dropout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegConfig {
    pub kind: RegKind,
    pub l1_lambda: f64,
    /// Drop probability for each hidden layer's output.
    pub drop_rates: Vec<f64>,
}

pub const DEFAULT_L1_LAMBDA: f64 = 1e-4;
pub const FIRST_LAYER_DROP_RATE: f64 = 0.2;
pub const DEEPER_LAYER_DROP_RATE: f64 = 0.5;

impl RegConfig {
    pub fn none() -> Self {
        Self {
            kind: RegKind::None,
            l1_lambda: 0.0,
            drop_rates: Vec::new(),
        }
    }

    pub fn l1() -> Self {
        Self::l1_with(DEFAULT_L1_LAMBDA)
    }

    pub fn l1_with(lambda: f64) -> Self {
        Self {
            kind: RegKind::L1,
            l1_lambda: lambda,
            drop_rates: Vec::new(),
        }
    }

    pub fn dropout(depth: usize) -> Self {
        let rates = (0..depth)
            .map(|k| {
                if k == 0 {
                    FIRST_LAYER_DROP_RATE
                } else {
                    DEEPER_LAYER_DROP_RATE
                }
            })
            .collect();
        Self::dropout_with(rates)
    }

    pub fn dropout_with(drop_rates: Vec<f64>) -> Self {
        Self {
            kind: RegKind::Dropout,
            l1_lambda: 0.0,
            drop_rates,
        }
    }

    /// Builds the standard configuration of `kind` for a network of `depth`
    /// hidden layers.
    pub fn standard(kind: RegKind, depth: usize) -> Self {
        match kind {
            RegKind::None => Self::none(),
            RegKind::L1 => Self::l1(),
            RegKind::Dropout => Self::dropout(depth),
        }
    }

    pub fn lambda(&self) -> f64 {
        match self.kind {
            RegKind::L1 => self.l1_lambda,
            _ => 0.0,
        }
    }

    pub fn drop_rate(&self, layer: usize) -> f64 {
        match self.kind {
            RegKind::Dropout => self.drop_rates.get(layer).copied().unwrap_or(0.0),
            _ => 0.0,
        }
    }

    pub fn validate(&self, depth: usize) -> Result<()> {
        if self.l1_lambda.is_nan() || self.l1_lambda < 0.0 {
            return Err(Error::InvalidArgument("l1 lambda must be >= 0".into()));
        }
        if self.kind == RegKind::Dropout && self.drop_rates.len() != depth {
            return Err(Error::InvalidArgument(format!(
                "dropout needs {depth} rates, got {}",
                self.drop_rates.len()
            )));
        }
        if self.drop_rates.iter().any(|r| !(0.0..1.0).contains(r)) {
            return Err(Error::InvalidArgument("drop rates must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Which parameter blocks may change. One flag per hidden layer
/// (bottom to top) and one per head.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FreezeMask {
    pub layers: Vec<bool>,
    pub heads: Vec<bool>,
}

impl FreezeMask {
    pub fn all(net: &Network) -> Self {
        Self {
            layers: vec![true; net.depth()],
            heads: vec![true; net.head_count()],
        }
    }

    pub fn none(net: &Network) -> Self {
        Self {
            layers: vec![false; net.depth()],
            heads: vec![false; net.head_count()],
        }
    }

    /// Whole body plus a single head.
    pub fn body_and_head(net: &Network, head: HeadId) -> Self {
        let mut m = Self::none(net);
        m.layers.fill(true);
        m.heads[head.0] = true;
        m
    }

    /// One head plus the `unfrozen` topmost hidden layers.
    pub fn head_and_top(net: &Network, head: HeadId, unfrozen: usize) -> Self {
        let mut m = Self::none(net);
        let depth = net.depth();
        for k in depth.saturating_sub(unfrozen)..depth {
            m.layers[k] = true;
        }
        m.heads[head.0] = true;
        m
    }

    pub fn trainable_layers(&self) -> usize {
        self.layers.iter().filter(|&&t| t).count()
    }

    /// Lowest trainable hidden layer, if any.
    pub fn lowest_trainable(&self) -> Option<usize> {
        self.layers.iter().position(|&t| t)
    }
}

/// Intermediate values of one forward pass, kept for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub head: HeadId,
    pub input: Matrix,
    pub pre_activations: Vec<Matrix>,
    /// Hidden outputs after ReLU and (in training mode) the dropout mask.
    pub activations: Vec<Matrix>,
    /// Scaled keep masks (`0` or `1/(1-rate)`), `None` where no dropout ran.
    pub masks: Vec<Option<Matrix>>,
    pub logits: Matrix,
    pub probs: Matrix,
}

/// Gradient blocks shaped like the network's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Dense>,
    pub heads: Vec<Dense>,
}

impl Gradients {
    pub fn zeros_like(net: &Network) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| Dense::zeros(l.fan_in(), l.fan_out()))
                .collect(),
            heads: net
                .heads
                .iter()
                .map(|h| Dense::zeros(h.dense.fan_in(), h.dense.fan_out()))
                .collect(),
        }
    }

    fn matches(&self, net: &Network) -> bool {
        self.layers.len() == net.layers.len()
            && self.heads.len() == net.heads.len()
            && self
                .layers
                .iter()
                .zip(&net.layers)
                .chain(self.heads.iter().zip(net.heads.iter().map(|h| &h.dense)))
                .all(|(g, p)| g.weights.shape() == p.weights.shape() && g.bias.len() == p.bias.len())
    }
}

pub fn relu(x: f64) -> f64 {
    x.max(0.0)
}

/// Numerically stable softmax (max-subtracted).
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let mut out = logits.to_vec();
    softmax_in_place(&mut out);
    out
}

fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in v.iter_mut() {
        *x /= sum;
    }
}

/// Mean of `-ln p[label]` over the rows of `probs`.
pub fn cross_entropy(probs: &Matrix, labels: &[usize]) -> Result<f64> {
    if probs.rows() != labels.len() {
        return Err(Error::Shape {
            op: "cross_entropy",
            left: probs.shape(),
            right: (labels.len(), 1),
        });
    }
    if labels.is_empty() {
        return Err(Error::Empty("cross_entropy"));
    }
    let mut total = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        if y >= probs.cols() {
            return Err(Error::LabelOutOfRange {
                label: y,
                classes: probs.cols(),
            });
        }
        total -= probs.get(i, y).ln();
    }
    Ok(total / labels.len() as f64)
}

/// Same loss computed from logits through log-sum-exp; finite even when a
/// probability underflows to zero.
fn cross_entropy_from_logits(logits: &Matrix, labels: &[usize]) -> f64 {
    let mut total = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        let row = logits.row(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
        total += lse - row[y];
    }
    total / labels.len() as f64
}

/// `λ₁ · Σ|w|` over every weight matrix, body and heads; biases excluded.
pub fn l1_penalty(net: &Network, lambda1: f64) -> f64 {
    if lambda1 == 0.0 {
        return 0.0;
    }
    let sum: f64 = net
        .layers
        .iter()
        .chain(net.heads.iter().map(|h| &h.dense))
        .map(|d| d.weights.as_slice().iter().map(|w| w.abs()).sum::<f64>())
        .sum();
    lambda1 * sum
}

impl Network {
    /// Builds a headless network with Glorot-uniform weights and zero biases.
    pub fn init(arch: Architecture, rng: &mut SeededRng) -> Result<Self> {
        arch.validate()?;
        let layers = (0..arch.depth())
            .map(|k| Dense::glorot(arch.fan_in(k), arch.hidden[k], rng))
            .collect();
        Ok(Self {
            arch,
            layers,
            heads: Vec::new(),
        })
    }

    /// Adds a freshly initialized softmax head on the top hidden layer.
    pub fn attach_head(&mut self, classes: usize, rng: &mut SeededRng) -> Result<HeadId> {
        if classes < 2 {
            return Err(Error::InvalidArgument(format!(
                "a head needs at least 2 classes, got {classes}"
            )));
        }
        let dense = Dense::glorot(self.arch.top_width(), classes, rng);
        self.heads.push(Head { dense, classes });
        Ok(HeadId(self.heads.len() - 1))
    }

    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn heads(&self) -> &[Head] {
        &self.heads
    }

    pub fn heads_mut(&mut self) -> &mut [Head] {
        &mut self.heads
    }

    pub fn head_count(&self) -> usize {
        self.heads.len()
    }

    pub fn head(&self, id: HeadId) -> Result<&Head> {
        self.heads.get(id.0).ok_or(Error::UnknownHead(id.0))
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .chain(self.heads.iter().map(|h| &h.dense))
            .map(Dense::param_count)
            .sum()
    }

    pub fn forward(
        &self,
        head: HeadId,
        batch: &Matrix,
        mode: Mode,
        reg: &RegConfig,
        rng: &mut SeededRng,
    ) -> Result<ForwardCache> {
        let out = self.head(head)?;
        if batch.cols() != self.arch.input_dim {
            return Err(Error::Shape {
                op: "forward",
                left: batch.shape(),
                right: (self.arch.input_dim, self.arch.top_width()),
            });
        }
        let depth = self.depth();
        let mut pre_activations = Vec::with_capacity(depth);
        let mut activations: Vec<Matrix> = Vec::with_capacity(depth);
        let mut masks = Vec::with_capacity(depth);
        for (k, layer) in self.layers.iter().enumerate() {
            let input = if k == 0 { batch } else { &activations[k - 1] };
            let z = layer.apply(input);
            let mut a = z.clone();
            for x in a.as_mut_slice() {
                *x = relu(*x);
            }
            let rate = reg.drop_rate(k);
            let mask = if mode == Mode::Train && rate > 0.0 {
                let scale = 1.0 / (1.0 - rate);
                let mut m = Matrix::zeros(a.rows(), a.cols());
                for (mv, av) in m.as_mut_slice().iter_mut().zip(a.as_mut_slice()) {
                    if rng.bernoulli(1.0 - rate) {
                        *mv = scale;
                        *av *= scale;
                    } else {
                        *av = 0.0;
                    }
                }
                Some(m)
            } else {
                None
            };
            pre_activations.push(z);
            activations.push(a);
            masks.push(mask);
        }
        let logits = out.dense.apply(&activations[depth - 1]);
        let mut probs = logits.clone();
        for r in 0..probs.rows() {
            softmax_in_place(probs.row_mut(r));
        }
        Ok(ForwardCache {
            head,
            input: batch.clone(),
            pre_activations,
            activations,
            masks,
            logits,
            probs,
        })
    }

    /// Evaluation-mode class probabilities.
    pub fn predict(&self, head: HeadId, batch: &Matrix) -> Result<Matrix> {
        let out = self.head(head)?;
        if batch.cols() != self.arch.input_dim {
            return Err(Error::Shape {
                op: "predict",
                left: batch.shape(),
                right: (self.arch.input_dim, self.arch.top_width()),
            });
        }
        let mut h = self.layers[0].apply(batch);
        h.as_mut_slice().iter_mut().for_each(|x| *x = relu(*x));
        for layer in &self.layers[1..] {
            h = layer.apply(&h);
            h.as_mut_slice().iter_mut().for_each(|x| *x = relu(*x));
        }
        let mut probs = out.dense.apply(&h);
        for r in 0..probs.rows() {
            softmax_in_place(probs.row_mut(r));
        }
        Ok(probs)
    }

    /// Training objective for the batch: mean cross-entropy plus the L1 term.
    pub fn loss(
        &self,
        head: HeadId,
        batch: &Matrix,
        labels: &[usize],
        mode: Mode,
        reg: &RegConfig,
        rng: &mut SeededRng,
    ) -> Result<f64> {
        let cache = self.forward(head, batch, mode, reg, rng)?;
        self.check_labels(head, &cache, labels)?;
        Ok(cross_entropy_from_logits(&cache.logits, labels) + l1_penalty(self, reg.lambda()))
    }

    /// Mean cross-entropy of a cached forward pass, from its logits.
    pub fn data_loss(&self, cache: &ForwardCache, labels: &[usize]) -> Result<f64> {
        self.check_labels(cache.head, cache, labels)?;
        Ok(cross_entropy_from_logits(&cache.logits, labels))
    }

    fn check_labels(&self, head: HeadId, cache: &ForwardCache, labels: &[usize]) -> Result<()> {
        if labels.len() != cache.probs.rows() {
            return Err(Error::Shape {
                op: "labels",
                left: cache.probs.shape(),
                right: (labels.len(), 1),
            });
        }
        if labels.is_empty() {
            return Err(Error::Empty("labels"));
        }
        let classes = self.head(head)?.classes;
        if let Some(&bad) = labels.iter().find(|&&y| y >= classes) {
            return Err(Error::LabelOutOfRange { label: bad, classes });
        }
        Ok(())
    }

    /// Gradients of the training objective; blocks outside `trainable` are zero.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        labels: &[usize],
        reg: &RegConfig,
        trainable: &FreezeMask,
    ) -> Result<Gradients> {
        let mut grads = Gradients::zeros_like(self);
        self.backward_into(cache, labels, reg, trainable, &mut grads)?;
        Ok(grads)
    }

    /// [`Network::backward`] writing into a reusable buffer.
    pub fn backward_into(
        &self,
        cache: &ForwardCache,
        labels: &[usize],
        reg: &RegConfig,
        trainable: &FreezeMask,
        grads: &mut Gradients,
    ) -> Result<()> {
        let head = cache.head;
        self.check_labels(head, cache, labels)?;
        if !grads.matches(self)
            || trainable.layers.len() != self.depth()
            || trainable.heads.len() != self.head_count()
            || cache.activations.len() != self.depth()
            || cache.input.cols() != self.arch.input_dim
        {
            return Err(Error::InvalidArgument(
                "gradient buffer, mask or cache does not match the network".into(),
            ));
        }
        let depth = self.depth();
        let batch = labels.len() as f64;

        let mut delta = cache.probs.clone();
        for (i, &y) in labels.iter().enumerate() {
            let row = delta.row_mut(i);
            row[y] -= 1.0;
            for v in row.iter_mut() {
                *v /= batch;
            }
        }

        for (h, g) in grads.heads.iter_mut().enumerate() {
            if h == head.0 && trainable.heads[h] {
                gemm(1.0, &cache.activations[depth - 1], true, &delta, false, 0.0, &mut g.weights);
                g.bias.copy_from_slice(&delta.column_sums());
            } else {
                g.fill_zero();
            }
        }

        let lowest = trainable.lowest_trainable();
        for k in 0..depth {
            if lowest.is_none_or(|lo| k < lo) || !trainable.layers[k] {
                grads.layers[k].fill_zero();
            }
        }
        if let Some(lowest) = lowest {
            let head_w = &self.heads[head.0].dense.weights;
            let mut upstream = Matrix::zeros(delta.rows(), head_w.rows());
            gemm(1.0, &delta, false, head_w, true, 0.0, &mut upstream);
            for k in (lowest..depth).rev() {
                let z = &cache.pre_activations[k];
                let mut dz = upstream;
                match &cache.masks[k] {
                    Some(m) => {
                        for ((d, &zv), &mv) in dz.as_mut_slice().iter_mut().zip(z.as_slice()).zip(m.as_slice()) {
                            if zv <= 0.0 {
                                *d = 0.0;
                            } else {
                                *d *= mv;
                            }
                        }
                    }
                    None => {
                        for (d, &zv) in dz.as_mut_slice().iter_mut().zip(z.as_slice()) {
                            if zv <= 0.0 {
                                *d = 0.0;
                            }
                        }
                    }
                }
                if trainable.layers[k] {
                    let below = if k == 0 { &cache.input } else { &cache.activations[k - 1] };
                    let g = &mut grads.layers[k];
                    gemm(1.0, below, true, &dz, false, 0.0, &mut g.weights);
                    g.bias.copy_from_slice(&dz.column_sums());
                }
                if k > lowest {
                    let w = &self.layers[k].weights;
                    let mut next = Matrix::zeros(dz.rows(), w.rows());
                    gemm(1.0, &dz, false, w, true, 0.0, &mut next);
                    upstream = next;
                } else {
                    break;
                }
            }
        }

        let lambda = reg.lambda();
        if lambda > 0.0 {
            let add_sign = |g: &mut Dense, p: &Dense| {
                for (gv, &w) in g.weights.as_mut_slice().iter_mut().zip(p.weights.as_slice()) {
                    if w > 0.0 {
                        *gv += lambda;
                    } else if w < 0.0 {
                        *gv -= lambda;
                    }
                }
            };
            for k in 0..depth {
                if trainable.layers[k] {
                    add_sign(&mut grads.layers[k], &self.layers[k]);
                }
            }
            for h in 0..self.head_count() {
                if trainable.heads[h] {
                    add_sign(&mut grads.heads[h], &self.heads[h].dense);
                }
            }
        }
        Ok(())
    }

    /// `w ← w − lr·g` on trainable blocks; frozen blocks are not touched.
    pub fn apply_gradients(&mut self, grads: &Gradients, lr: f64, mask: &FreezeMask) -> Result<()> {
        if !grads.matches(self) || mask.layers.len() != self.depth() || mask.heads.len() != self.head_count() {
            return Err(Error::InvalidArgument(
                "gradients or mask do not match the network".into(),
            ));
        }
        let step = |p: &mut Dense, g: &Dense| {
            for (w, d) in p.weights.as_mut_slice().iter_mut().zip(g.weights.as_slice()) {
                *w -= lr * d;
            }
            for (b, d) in p.bias.iter_mut().zip(&g.bias) {
                *b -= lr * d;
            }
        };
        for (k, layer) in self.layers.iter_mut().enumerate() {
            if mask.layers[k] {
                step(layer, &grads.layers[k]);
            }
        }
        for (h, head) in self.heads.iter_mut().enumerate() {
            if mask.heads[h] {
                step(&mut head.dense, &grads.heads[h]);
            }
        }
        Ok(())
    }

    /// Parameter blocks in checkpoint order: layers bottom-up, then heads.
    pub fn blocks(&self) -> impl Iterator<Item = &Dense> {
        self.layers.iter().chain(self.heads.iter().map(|h| &h.dense))
    }

    fn blocks_mut(&mut self) -> impl Iterator<Item = &mut Dense> {
        self.layers
            .iter_mut()
            .chain(self.heads.iter_mut().map(|h| &mut h.dense))
    }
}

const CHECKPOINT_MAGIC: &[u8; 4] = b"GTCK";
const CHECKPOINT_VERSION: u16 = 1;

/// Checkpoint layout, all integers and reals little-endian:
///
/// ```text
/// "GTCK" | u16 version | u32 n | u32 dims[n] (input, hidden...)
///        | u32 heads   | u32 classes[heads]
///        | f64 params  (layers bottom-up, then heads by id; each W row-major then b)
/// ```
impl Network {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(64 + 8 * self.param_count());
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        let dims: Vec<usize> = std::iter::once(self.arch.input_dim)
            .chain(self.arch.hidden.iter().copied())
            .collect();
        out.extend_from_slice(&(dims.len() as u32).to_le_bytes());
        for d in dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        out.extend_from_slice(&(self.heads.len() as u32).to_le_bytes());
        for h in &self.heads {
            out.extend_from_slice(&(h.classes as u32).to_le_bytes());
        }
        for block in self.blocks() {
            for v in block.weights.as_slice().iter().chain(&block.bias) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = ByteCursor::new(bytes, "checkpoint");
        if cur.take(4)? != CHECKPOINT_MAGIC {
            return Err(Error::format("checkpoint", 0, "bad magic"));
        }
        let version = cur.u16()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::format("checkpoint", 4, format!("unsupported version {version}")));
        }
        let n = cur.u32()? as usize;
        if !(2..=64).contains(&n) {
            return Err(Error::format("checkpoint", 6, format!("implausible layer count {n}")));
        }
        let dims = (0..n).map(|_| cur.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let arch = Architecture::new(dims[0], dims[1..].to_vec())
            .map_err(|e| Error::format("checkpoint", 10, e.to_string()))?;
        let heads = cur.u32()? as usize;
        let classes = (0..heads).map(|_| cur.u32().map(|c| c as usize)).collect::<Result<Vec<_>>>()?;
        if let Some(&c) = classes.iter().find(|&&c| c < 2) {
            return Err(Error::format("checkpoint", cur.pos(), format!("head with {c} classes")));
        }
        let mut net = Network {
            layers: (0..arch.depth()).map(|k| Dense::zeros(arch.fan_in(k), arch.hidden[k])).collect(),
            heads: classes
                .iter()
                .map(|&c| Head {
                    dense: Dense::zeros(arch.top_width(), c),
                    classes: c,
                })
                .collect(),
            arch,
        };
        let expected = net.param_count() * 8;
        if cur.remaining() != expected {
            return Err(Error::format(
                "checkpoint",
                cur.pos(),
                format!("expected {expected} parameter bytes, found {}", cur.remaining()),
            ));
        }
        for block in net.blocks_mut() {
            for v in block.weights.as_mut_slice().iter_mut().chain(block.bias.iter_mut()) {
                *v = cur.f64()?;
            }
        }
        Ok(net)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        f.write_all(&self.to_bytes())?;
        f.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }
}

/// Little-endian reader over a byte slice that reports offsets on failure.
pub(crate) struct ByteCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    what: &'static str,
}

impl<'a> ByteCursor<'a> {
    pub(crate) fn new(bytes: &'a [u8], what: &'static str) -> Self {
        Self { bytes, pos: 0, what }
    }

    pub(crate) fn pos(&self) -> u64 {
        self.pos as u64
    }

    pub(crate) fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(Error::format(
                self.what,
                self.pos as u64,
                format!("truncated: wanted {n} bytes, {} left", self.remaining()),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub(crate) fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn u32_be(&mut self) -> Result<u32> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

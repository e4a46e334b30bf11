//! Per-node summed cross-entropy objective, Adam optimizer, the epoch
//! loop, and the model-level gradient-check harness.

use crate::diffmath::{finite_diff_grad, rel_err, Matrix, Var};
use crate::error::{Error, Result};
use crate::graph::{pad_sequence, Label, STGraphSequence};
use crate::model::{build_forward, init_params, ModelConfig, ModelParams, Prediction, TapeForward};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Floor applied inside the loss log so a confident wrong prediction
/// stays finite; loss values are reproducible bit-for-bit given this.
pub const PROB_FLOOR: f64 = 1e-12;

fn default_lr() -> f64 {
    1e-3
}
fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_adam_eps() -> f64 {
    1e-8
}
fn default_batch() -> usize {
    1
}
fn default_true() -> bool {
    true
}
fn default_weight() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_beta1")]
    pub adam_beta1: f64,
    #[serde(default = "default_beta2")]
    pub adam_beta2: f64,
    #[serde(default = "default_adam_eps")]
    pub adam_eps: f64,
    #[serde(default = "default_batch")]
    pub batch: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_true")]
    pub include_padded_in_loss: bool,
    #[serde(default = "default_weight")]
    pub death_class_weight: f64,
    #[serde(default = "default_true")]
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            learning_rate: default_lr(),
            adam_beta1: default_beta1(),
            adam_beta2: default_beta2(),
            adam_eps: default_adam_eps(),
            batch: default_batch(),
            seed: 0,
            include_padded_in_loss: true,
            death_class_weight: 1.0,
            shuffle: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate <= 0.0 {
            return Err(Error::validation("learning_rate must be positive".to_string()));
        }
        if self.batch == 0 {
            return Err(Error::validation("batch must be >= 1".to_string()));
        }
        if self.death_class_weight < 0.0 {
            return Err(Error::validation("death_class_weight must be >= 0".to_string()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct TrainHistory {
    /// Mean training loss per epoch.
    pub epoch_losses: Vec<f64>,
    /// Defined-node average validation accuracy per epoch, when a
    /// validation set was supplied.
    pub val_accuracy: Vec<Option<f64>>,
}

/// Cross-entropy of one node: -w * ln(max(p_true, floor)).
pub fn node_cross_entropy(probs: &[f64], label: Label, weight_dead: f64) -> Result<f64> {
    if probs.len() != 2 {
        return Err(Error::domain(format!(
            "expected 2 class probabilities, got {}",
            probs.len()
        )));
    }
    let w = match label {
        Label::Dead => weight_dead,
        Label::Alive => 1.0,
    };
    Ok(-w * probs[label.index()].max(PROB_FLOOR).ln())
}

/// Summed per-node loss for one sequence. Padded slots are skipped when
/// `include_padded_in_loss` is off.
pub fn sequence_loss(pred: &Prediction, seq: &STGraphSequence, cfg: &TrainConfig) -> Result<f64> {
    if pred.probs.len() != seq.n {
        return Err(Error::validation(format!(
            "prediction covers {} nodes, sequence has {}",
            pred.probs.len(),
            seq.n
        )));
    }
    let mut total = 0.0;
    for v in 0..seq.n {
        if !cfg.include_padded_in_loss && seq.mask[v] == 0 {
            continue;
        }
        total += node_cross_entropy(&pred.probs[v], seq.labels[v], cfg.death_class_weight)?;
    }
    Ok(total)
}

/// Loss recorded on the forward tape, as a scalar var.
pub fn sequence_loss_var(fwd: &mut TapeForward, seq: &STGraphSequence, cfg: &TrainConfig) -> Result<Var> {
    let mut acc: Option<Var> = None;
    for v in 0..seq.n {
        if !cfg.include_padded_in_loss && seq.mask[v] == 0 {
            continue;
        }
        let label = seq.labels[v];
        let w = match label {
            Label::Dead => cfg.death_class_weight,
            Label::Alive => 1.0,
        };
        let p = fwd.tape.select_entry(fwd.probs[v], 0, label.index())?;
        let lp = fwd.tape.log_clamped(p, PROB_FLOOR);
        let term = fwd.tape.scale(lp, -w);
        acc = Some(match acc {
            None => term,
            Some(a) => fwd.tape.add(a, term)?,
        });
    }
    acc.ok_or_else(|| Error::domain("no scored nodes in sequence".to_string()))
}

/// Gradients in `ModelParams::tensors` order.
pub struct GradSet {
    pub tensors: Vec<Matrix>,
}

impl GradSet {
    pub fn zeros_like(params: &ModelParams) -> GradSet {
        GradSet {
            tensors: params
                .tensors()
                .iter()
                .map(|(_, m)| Matrix::zeros(m.rows(), m.cols()))
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &GradSet) {
        for (a, b) in self.tensors.iter_mut().zip(other.tensors.iter()) {
            a.add_assign(b);
        }
    }

    pub fn scale(&mut self, c: f64) {
        for m in self.tensors.iter_mut() {
            for v in m.data_mut() {
                *v *= c;
            }
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.tensors.iter().flat_map(|m| m.data().iter().copied()).collect()
    }
}

/// Loss gradients for one sequence via the tape.
pub fn sequence_gradients(
    seq: &STGraphSequence,
    params: &ModelParams,
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
) -> Result<(f64, GradSet)> {
    let mut fwd = build_forward(seq, params, model_cfg)?;
    let loss = sequence_loss_var(&mut fwd, seq, train_cfg)?;
    let loss_value = fwd.tape.value(loss).get(0, 0);
    let grads = fwd.tape.backward(loss)?;
    let tensors = fwd
        .pvars
        .ordered()
        .into_iter()
        .map(|v| grads.get(v).clone())
        .collect();
    Ok((loss_value, GradSet { tensors }))
}

/// Adam first/second moments, one pair per parameter tensor.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<Matrix>,
    pub v: Vec<Matrix>,
}

impl AdamState {
    pub fn new(params: &ModelParams) -> AdamState {
        let zeros: Vec<Matrix> = params
            .tensors()
            .iter()
            .map(|(_, m)| Matrix::zeros(m.rows(), m.cols()))
            .collect();
        AdamState {
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }
}

/// One Adam update with bias correction.
pub fn adam_step(
    params: &mut ModelParams,
    grads: &GradSet,
    state: &mut AdamState,
    cfg: &TrainConfig,
) -> Result<()> {
    let names: Vec<&'static str> = params.tensors().iter().map(|(n, _)| *n).collect();
    for (i, g) in grads.tensors.iter().enumerate() {
        if !g.is_finite() {
            return Err(Error::numeric(format!(
                "non-finite gradient for parameter {}",
                names[i]
            )));
        }
    }
    state.step += 1;
    let t = state.step as f64;
    let (b1, b2, eps, lr) = (cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps, cfg.learning_rate);
    let bc1 = 1.0 - b1.powf(t);
    let bc2 = 1.0 - b2.powf(t);
    for (i, (_, p)) in params.tensors_mut().into_iter().enumerate() {
        let g = &grads.tensors[i];
        let m = &mut state.m[i];
        let v = &mut state.v[i];
        for j in 0..p.data().len() {
            let gj = g.data()[j];
            m.data_mut()[j] = b1 * m.data()[j] + (1.0 - b1) * gj;
            v.data_mut()[j] = b2 * v.data()[j] + (1.0 - b2) * gj * gj;
            let m_hat = m.data()[j] / bc1;
            let v_hat = v.data()[j] / bc2;
            p.data_mut()[j] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

fn validate_dataset(dataset: &[STGraphSequence], model_cfg: &ModelConfig) -> Result<()> {
    if dataset.is_empty() {
        return Err(Error::domain("dataset is empty".to_string()));
    }
    for s in dataset {
        if s.t != model_cfg.t || s.n != model_cfg.n || s.f != model_cfg.f {
            return Err(Error::validation(format!(
                "sequence {} has t={} n={} f={}, model expects t={} n={} f={}",
                s.id, s.t, s.n, s.f, model_cfg.t, model_cfg.n, model_cfg.f
            )));
        }
    }
    Ok(())
}

/// Per-epoch progress callback: (epoch index, mean loss, validation
/// accuracy when available).
pub type EpochHook<'a> = &'a mut dyn FnMut(usize, f64, Option<f64>);

/// Deterministic training loop: per epoch, iterate sequences in seeded
/// shuffled order (keyed by id, so file order never matters), take one
/// Adam step per batch.
pub fn train(
    dataset: &[STGraphSequence],
    validation: Option<&[STGraphSequence]>,
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    mut hook: Option<EpochHook<'_>>,
) -> Result<(ModelParams, TrainHistory)> {
    train_cfg.validate()?;
    validate_dataset(dataset, model_cfg)?;
    if let Some(val) = validation {
        validate_dataset(val, model_cfg)?;
    }

    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.sort_by(|&a, &b| dataset[a].id.cmp(&dataset[b].id));

    let mut params = init_params(model_cfg, train_cfg.seed)?;
    let mut state = AdamState::new(&params);
    let mut history = TrainHistory::default();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(train_cfg.seed.wrapping_add(0x5eed));

    for epoch in 0..train_cfg.epochs {
        let mut epoch_order = order.clone();
        if train_cfg.shuffle {
            epoch_order.shuffle(&mut shuffle_rng);
        }
        let mut epoch_loss = 0.0;
        let mut batch_grads = GradSet::zeros_like(&params);
        let mut in_batch = 0usize;
        for &idx in &epoch_order {
            let (loss, grads) =
                sequence_gradients(&dataset[idx], &params, model_cfg, train_cfg)?;
            epoch_loss += loss;
            batch_grads.add_assign(&grads);
            in_batch += 1;
            if in_batch == train_cfg.batch {
                batch_grads.scale(1.0 / in_batch as f64);
                adam_step(&mut params, &batch_grads, &mut state, train_cfg)?;
                batch_grads = GradSet::zeros_like(&params);
                in_batch = 0;
            }
        }
        if in_batch > 0 {
            batch_grads.scale(1.0 / in_batch as f64);
            adam_step(&mut params, &batch_grads, &mut state, train_cfg)?;
        }
        let mean_loss = epoch_loss / dataset.len() as f64;
        history.epoch_losses.push(mean_loss);
        let val_acc = match validation {
            Some(val) => {
                let report = evaluate_dataset(val, &params, model_cfg, train_cfg)?;
                report.average_accuracy.as_option()
            }
            None => None,
        };
        history.val_accuracy.push(val_acc);
        if let Some(h) = hook.as_deref_mut() {
            h(epoch, mean_loss, val_acc);
        }
    }
    Ok((params, history))
}

/// Forward + metrics over a dataset. Loss uses the training loss config.
pub fn evaluate_dataset(
    dataset: &[STGraphSequence],
    params: &ModelParams,
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
) -> Result<crate::metrics::MetricsReport> {
    use crate::metrics::{accumulate, finalize, hard_decision, NodeConfusion};
    validate_dataset(dataset, model_cfg)?;
    let mut confusions = vec![NodeConfusion::default(); model_cfg.n];
    let mut losses = Vec::with_capacity(dataset.len());
    for seq in dataset {
        let pred = crate::model::forward(seq, params, model_cfg)?;
        losses.push(sequence_loss(&pred, seq, train_cfg)?);
        for v in 0..seq.n {
            let decided = hard_decision(&pred.probs[v])?;
            accumulate(&mut confusions, v, decided, seq.labels[v])?;
        }
    }
    finalize(&confusions, &losses)
}

#[derive(Clone, Debug, Serialize)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub worst_param: String,
    pub pass: bool,
    pub coords: usize,
}

/// End-to-end gradient check: reverse-mode gradients of the sequence
/// loss versus central differences over every parameter coordinate, on a
/// random sequence and random parameters.
pub fn grad_check_model(
    model_cfg: &ModelConfig,
    seed: u64,
    eps: f64,
    tol: f64,
) -> Result<GradCheckReport> {
    if eps <= 0.0 {
        return Err(Error::domain(format!("eps must be positive, got {eps}")));
    }
    model_cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9e3779b97f4a7c15).wrapping_add(1));
    let raw: Vec<Vec<Vec<f64>>> = (0..model_cfg.t)
        .map(|_| {
            (0..model_cfg.n)
                .map(|_| (0..model_cfg.f).map(|_| rng.gen_range(-2.0..2.0)).collect())
                .collect()
        })
        .collect();
    let labels: Vec<Label> = (0..model_cfg.n)
        .map(|_| if rng.gen_bool(0.5) { Label::Dead } else { Label::Alive })
        .collect();
    let seq = pad_sequence("gradcheck", &raw, &labels, None, model_cfg.n)?;
    let params = init_params(model_cfg, seed)?;
    let train_cfg = TrainConfig {
        epochs: 0,
        ..TrainConfig::default()
    };

    let (_, grads) = sequence_gradients(&seq, &params, model_cfg, &train_cfg)?;
    let reverse = grads.flatten();

    let template = params.clone();
    let flat = params.flatten();
    let fd = finite_diff_grad(
        |p| {
            let mut trial = template.clone();
            trial.unflatten_into(p)?;
            let mut fwd = build_forward(&seq, &trial, model_cfg)?;
            let loss = sequence_loss_var(&mut fwd, &seq, &train_cfg)?;
            Ok(fwd.tape.value(loss).get(0, 0))
        },
        &flat,
        eps,
    )?;

    let mut max_rel = 0.0;
    let mut worst = 0usize;
    for (i, (&a, &b)) in reverse.iter().zip(fd.iter()).enumerate() {
        let e = rel_err(a, b);
        if e > max_rel {
            max_rel = e;
            worst = i;
        }
    }
    Ok(GradCheckReport {
        max_rel_err: max_rel,
        worst_param: params.coord_name(worst),
        pass: max_rel <= tol,
        coords: flat.len(),
    })
}

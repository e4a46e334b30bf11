//! Forward network: graph convolution, GRU-gated recurrence over the
//! frame sequence, per-node soft attention over hidden states, and a
//! two-class linear head.

use crate::diffmath::{Matrix, Tape, Var};
use crate::error::{Error, Result};
use crate::graph::{normalize_adjacency, NormalizedAdjacency, STGraphSequence};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

fn default_gc_layers() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Input feature dimension per node.
    pub f: usize,
    /// Graph convolution output dimension.
    #[serde(default = "crate::model::default_g")]
    pub g: usize,
    /// Hidden state dimension.
    #[serde(default = "crate::model::default_h")]
    pub h: usize,
    /// Attention scorer hidden dimension.
    #[serde(default = "crate::model::default_d_a")]
    pub d_a: usize,
    /// Node slots per graph.
    #[serde(default = "crate::model::default_n")]
    pub n: usize,
    /// Sequence length in frames.
    #[serde(default = "crate::model::default_t")]
    pub t: usize,
    #[serde(default = "default_gc_layers")]
    pub gc_layers: usize,
    /// Disconnect padded nodes from the graph before normalization.
    #[serde(default)]
    pub isolate_padded: bool,
    /// Insert tanh between the two attention scorer layers.
    #[serde(default)]
    pub attn_tanh: bool,
}

pub(crate) fn default_g() -> usize {
    64
}
pub(crate) fn default_h() -> usize {
    64
}
pub(crate) fn default_d_a() -> usize {
    32
}
pub(crate) fn default_n() -> usize {
    3
}
pub(crate) fn default_t() -> usize {
    15
}

impl ModelConfig {
    pub fn with_feature_dim(f: usize) -> Self {
        ModelConfig {
            f,
            g: default_g(),
            h: default_h(),
            d_a: default_d_a(),
            n: default_n(),
            t: default_t(),
            gc_layers: 1,
            isolate_padded: false,
            attn_tanh: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.f == 0 || self.g == 0 || self.h == 0 || self.d_a == 0 || self.n == 0 || self.t == 0
        {
            return Err(Error::validation("all model dimensions must be >= 1".to_string()));
        }
        if self.gc_layers != 1 && self.gc_layers != 2 {
            return Err(Error::validation(format!(
                "gc_layers must be 1 or 2, got {}",
                self.gc_layers
            )));
        }
        Ok(())
    }
}

/// All learnable weights. Biases are stored as single-row matrices.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub w_g: Matrix,
    pub w_g2: Option<Matrix>,
    pub w_u: Matrix,
    pub b_u: Matrix,
    pub w_r: Matrix,
    pub b_r: Matrix,
    pub w_c: Matrix,
    pub b_c: Matrix,
    pub w_1: Matrix,
    pub b_1: Matrix,
    pub w_2: Matrix,
    pub b_2: Matrix,
    pub w_o: Matrix,
    pub b_o: Matrix,
}

impl ModelParams {
    /// Fixed iteration order for flattening, gradients, Adam state and
    /// the archive format.
    pub fn tensors(&self) -> Vec<(&'static str, &Matrix)> {
        let mut out = vec![("w_g", &self.w_g)];
        if let Some(w) = &self.w_g2 {
            out.push(("w_g2", w));
        }
        out.extend([
            ("w_u", &self.w_u),
            ("b_u", &self.b_u),
            ("w_r", &self.w_r),
            ("b_r", &self.b_r),
            ("w_c", &self.w_c),
            ("b_c", &self.b_c),
            ("w_1", &self.w_1),
            ("b_1", &self.b_1),
            ("w_2", &self.w_2),
            ("b_2", &self.b_2),
            ("w_o", &self.w_o),
            ("b_o", &self.b_o),
        ]);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(&'static str, &mut Matrix)> {
        let mut out: Vec<(&'static str, &mut Matrix)> = vec![("w_g", &mut self.w_g)];
        if let Some(w) = &mut self.w_g2 {
            out.push(("w_g2", w));
        }
        out.extend([
            ("w_u", &mut self.w_u),
            ("b_u", &mut self.b_u),
            ("w_r", &mut self.w_r),
            ("b_r", &mut self.b_r),
            ("w_c", &mut self.w_c),
            ("b_c", &mut self.b_c),
            ("w_1", &mut self.w_1),
            ("b_1", &mut self.b_1),
            ("w_2", &mut self.w_2),
            ("b_2", &mut self.b_2),
            ("w_o", &mut self.w_o),
            ("b_o", &mut self.b_o),
        ]);
        out
    }

    pub fn num_coords(&self) -> usize {
        self.tensors().iter().map(|(_, m)| m.data().len()).sum()
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_coords());
        for (_, m) in self.tensors() {
            out.extend_from_slice(m.data());
        }
        out
    }

    pub fn unflatten_into(&mut self, flat: &[f64]) -> Result<()> {
        let expected = self.num_coords();
        if flat.len() != expected {
            return Err(Error::shape(format!(
                "flat parameter vector has {} coords, expected {expected}",
                flat.len()
            )));
        }
        let mut off = 0;
        for (_, m) in self.tensors_mut() {
            let len = m.data().len();
            m.data_mut().copy_from_slice(&flat[off..off + len]);
            off += len;
        }
        Ok(())
    }

    /// Name of the tensor and local offset owning flat coordinate `i`.
    pub fn coord_name(&self, i: usize) -> String {
        let mut off = 0;
        for (name, m) in self.tensors() {
            let len = m.data().len();
            if i < off + len {
                return format!("{name}[{}]", i - off);
            }
            off += len;
        }
        format!("coord {i} out of range")
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|(_, m)| m.is_finite())
    }

    /// All-zero parameters of the same shapes.
    pub fn zeros_like(&self) -> ModelParams {
        let z = |m: &Matrix| Matrix::zeros(m.rows(), m.cols());
        ModelParams {
            w_g: z(&self.w_g),
            w_g2: self.w_g2.as_ref().map(z),
            w_u: z(&self.w_u),
            b_u: z(&self.b_u),
            w_r: z(&self.w_r),
            b_r: z(&self.b_r),
            w_c: z(&self.w_c),
            b_c: z(&self.b_c),
            w_1: z(&self.w_1),
            b_1: z(&self.b_1),
            w_2: z(&self.w_2),
            b_2: z(&self.b_2),
            w_o: z(&self.w_o),
            b_o: z(&self.b_o),
        }
    }
}

/// Glorot-uniform weights, zero biases, deterministic per seed.
pub fn init_params(config: &ModelConfig, seed: u64) -> Result<ModelParams> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut glorot = |rows: usize, cols: usize, fan_in: usize, fan_out: usize| {
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        Matrix::from_vec(
            rows,
            cols,
            (0..rows * cols).map(|_| rng.gen_range(-bound..bound)).collect(),
        )
        .expect("shape consistent by construction")
    };
    let (f, g, h, d_a) = (config.f, config.g, config.h, config.d_a);
    let w_g = glorot(f, g, f, g);
    let w_g2 = if config.gc_layers == 2 {
        Some(glorot(g, g, g, g))
    } else {
        None
    };
    let gate = |rng_m: &mut dyn FnMut(usize, usize, usize, usize) -> Matrix| {
        rng_m(g + h, h, g + h, h)
    };
    let w_u = gate(&mut glorot);
    let w_r = gate(&mut glorot);
    let w_c = gate(&mut glorot);
    let w_1 = glorot(d_a, h, h, d_a);
    let w_2 = glorot(1, d_a, d_a, 1);
    let w_o = glorot(2, h, h, 2);
    Ok(ModelParams {
        w_g,
        w_g2,
        w_u,
        b_u: Matrix::zeros(1, h),
        w_r,
        b_r: Matrix::zeros(1, h),
        w_c,
        b_c: Matrix::zeros(1, h),
        w_1,
        b_1: Matrix::zeros(1, d_a),
        w_2,
        b_2: Matrix::zeros(1, 1),
        w_o,
        b_o: Matrix::zeros(1, 2),
    })
}

/// Per-sequence encodings indexed [time][node][hidden].
#[derive(Clone, Debug)]
pub struct HiddenStates {
    pub values: Vec<Matrix>,
}

/// Forward output for one sequence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    /// Per node: [p(alive), p(dead)].
    pub probs: Vec<[f64; 2]>,
    /// Per node: weight per frame.
    pub attention_weights: Vec<Vec<f64>>,
    /// Per node: context vector.
    pub contexts: Vec<Vec<f64>>,
}

/// Parameter leaves registered on a tape, in `tensors()` order.
pub struct ParamVars {
    pub w_g: Var,
    pub w_g2: Option<Var>,
    pub w_u: Var,
    pub b_u: Var,
    pub w_r: Var,
    pub b_r: Var,
    pub w_c: Var,
    pub b_c: Var,
    pub w_1: Var,
    pub b_1: Var,
    pub w_2: Var,
    pub b_2: Var,
    pub w_o: Var,
    pub b_o: Var,
}

impl ParamVars {
    pub fn register(tape: &mut Tape, params: &ModelParams) -> ParamVars {
        ParamVars {
            w_g: tape.leaf(params.w_g.clone()),
            w_g2: params.w_g2.as_ref().map(|m| tape.leaf(m.clone())),
            w_u: tape.leaf(params.w_u.clone()),
            b_u: tape.leaf(params.b_u.clone()),
            w_r: tape.leaf(params.w_r.clone()),
            b_r: tape.leaf(params.b_r.clone()),
            w_c: tape.leaf(params.w_c.clone()),
            b_c: tape.leaf(params.b_c.clone()),
            w_1: tape.leaf(params.w_1.clone()),
            b_1: tape.leaf(params.b_1.clone()),
            w_2: tape.leaf(params.w_2.clone()),
            b_2: tape.leaf(params.b_2.clone()),
            w_o: tape.leaf(params.w_o.clone()),
            b_o: tape.leaf(params.b_o.clone()),
        }
    }

    /// Vars in the same order as `ModelParams::tensors`.
    pub fn ordered(&self) -> Vec<Var> {
        let mut out = vec![self.w_g];
        if let Some(w) = self.w_g2 {
            out.push(w);
        }
        out.extend([
            self.w_u, self.b_u, self.w_r, self.b_r, self.w_c, self.b_c, self.w_1, self.b_1,
            self.w_2, self.b_2, self.w_o, self.b_o,
        ]);
        out
    }
}

pub(crate) fn tape_graph_conv(
    tape: &mut Tape,
    a_hat: Var,
    x: Var,
    pv: &ParamVars,
    cfg: &ModelConfig,
) -> Result<Var> {
    let xw = tape.matmul(x, pv.w_g)?;
    let z = tape.matmul(a_hat, xw)?;
    match (cfg.gc_layers, pv.w_g2) {
        (1, _) => Ok(z),
        (2, Some(w2)) => {
            let act = tape.relu(z);
            let zw = tape.matmul(act, w2)?;
            tape.matmul(a_hat, zw)
        }
        _ => Err(Error::validation(
            "gc_layers=2 requires the second graph-conv weight".to_string(),
        )),
    }
}

pub(crate) fn tape_tgcn_step(
    tape: &mut Tape,
    a_hat: Var,
    x_t: Var,
    h_prev: Var,
    pv: &ParamVars,
    cfg: &ModelConfig,
) -> Result<Var> {
    let z = tape_graph_conv(tape, a_hat, x_t, pv, cfg)?;
    let zh = tape.concat_cols(z, h_prev)?;
    let u_lin = tape.matmul(zh, pv.w_u)?;
    let u_lin = tape.add_row_vec(u_lin, pv.b_u)?;
    let u = tape.sigmoid(u_lin);
    let r_lin = tape.matmul(zh, pv.w_r)?;
    let r_lin = tape.add_row_vec(r_lin, pv.b_r)?;
    let r = tape.sigmoid(r_lin);
    let rh = tape.mul(r, h_prev)?;
    let zrh = tape.concat_cols(z, rh)?;
    let c_lin = tape.matmul(zrh, pv.w_c)?;
    let c_lin = tape.add_row_vec(c_lin, pv.b_c)?;
    let c = tape.tanh(c_lin);
    // h_t = u*h_prev + (1-u)*c
    let uh = tape.mul(u, h_prev)?;
    let uc = tape.mul(u, c)?;
    let h = tape.add(uh, c)?;
    tape.sub(h, uc)
}

pub(crate) fn tape_attend_node(
    tape: &mut Tape,
    node_hidden: Var, // t x h
    pv: &ParamVars,
    cfg: &ModelConfig,
) -> Result<(Var, Var)> {
    let w1t = tape.transpose(pv.w_1);
    let a1 = tape.matmul(node_hidden, w1t)?;
    let a1 = tape.add_row_vec(a1, pv.b_1)?;
    let a1 = if cfg.attn_tanh { tape.tanh(a1) } else { a1 };
    let w2t = tape.transpose(pv.w_2);
    let scores = tape.matmul(a1, w2t)?; // t x 1
    let scores = tape.add_row_vec(scores, pv.b_2)?;
    let scores_row = tape.transpose(scores); // 1 x t
    let alpha = tape.softmax_rows(scores_row)?;
    let ctx = tape.matmul(alpha, node_hidden)?; // 1 x h
    Ok((ctx, alpha))
}

pub(crate) fn tape_classify(tape: &mut Tape, ctx: Var, pv: &ParamVars) -> Result<Var> {
    let wot = tape.transpose(pv.w_o);
    let logits = tape.matmul(ctx, wot)?;
    let logits = tape.add_row_vec(logits, pv.b_o)?;
    tape.softmax_rows(logits)
}

/// A fully recorded forward pass, ready for loss construction and
/// backward.
pub struct TapeForward {
    pub tape: Tape,
    pub pvars: ParamVars,
    /// One n x h state per frame.
    pub hidden: Vec<Var>,
    /// One 1 x 2 probability row per node.
    pub probs: Vec<Var>,
    /// One 1 x t attention row per node.
    pub attn: Vec<Var>,
    /// One 1 x h context row per node.
    pub contexts: Vec<Var>,
}

fn check_dims(seq: &STGraphSequence, cfg: &ModelConfig) -> Result<()> {
    cfg.validate()?;
    if seq.n != cfg.n || seq.t != cfg.t || seq.f != cfg.f {
        return Err(Error::validation(format!(
            "sequence {} has t={} n={} f={}, model expects t={} n={} f={}",
            seq.id, seq.t, seq.n, seq.f, cfg.t, cfg.n, cfg.f
        )));
    }
    Ok(())
}

/// Normalized adjacency for a sequence, honoring `isolate_padded`.
pub fn sequence_adjacency(seq: &STGraphSequence, cfg: &ModelConfig) -> Result<NormalizedAdjacency> {
    let mut a = seq.adjacency_matrix()?;
    if cfg.isolate_padded {
        for (v, &m) in seq.mask.iter().enumerate() {
            if m == 0 {
                for j in 0..a.cols() {
                    a.set(v, j, 0.0);
                    a.set(j, v, 0.0);
                }
            }
        }
    }
    normalize_adjacency(&a)
}

/// Records the whole forward pass for one sequence on a fresh tape.
pub fn build_forward(
    seq: &STGraphSequence,
    params: &ModelParams,
    cfg: &ModelConfig,
) -> Result<TapeForward> {
    check_dims(seq, cfg)?;
    let a_hat = sequence_adjacency(seq, cfg)?;
    let mut tape = Tape::new();
    let pvars = ParamVars::register(&mut tape, params);
    let a_var = tape.leaf(a_hat.matrix);
    let mut h = tape.leaf(Matrix::zeros(cfg.n, cfg.h));
    let mut hidden = Vec::with_capacity(cfg.t);
    for ti in 0..cfg.t {
        let x = tape.leaf(seq.frame(ti)?);
        h = tape_tgcn_step(&mut tape, a_var, x, h, &pvars, cfg)?;
        hidden.push(h);
    }
    let mut probs = Vec::with_capacity(cfg.n);
    let mut attn = Vec::with_capacity(cfg.n);
    let mut contexts = Vec::with_capacity(cfg.n);
    for v in 0..cfg.n {
        let rows: Vec<Var> = hidden
            .iter()
            .map(|&hv| tape.select_row(hv, v))
            .collect::<Result<_>>()?;
        let node_hidden = tape.stack_rows(&rows)?;
        let (ctx, alpha) = tape_attend_node(&mut tape, node_hidden, &pvars, cfg)?;
        let p = tape_classify(&mut tape, ctx, &pvars)?;
        probs.push(p);
        attn.push(alpha);
        contexts.push(ctx);
    }
    Ok(TapeForward {
        tape,
        pvars,
        hidden,
        probs,
        attn,
        contexts,
    })
}

impl TapeForward {
    pub fn prediction(&self) -> Prediction {
        let probs = self
            .probs
            .iter()
            .map(|&p| {
                let m = self.tape.value(p);
                [m.get(0, 0), m.get(0, 1)]
            })
            .collect();
        let attention_weights = self
            .attn
            .iter()
            .map(|&a| self.tape.value(a).row(0).to_vec())
            .collect();
        let contexts = self
            .contexts
            .iter()
            .map(|&c| self.tape.value(c).row(0).to_vec())
            .collect();
        Prediction {
            probs,
            attention_weights,
            contexts,
        }
    }

    pub fn hidden_states(&self) -> HiddenStates {
        HiddenStates {
            values: self.hidden.iter().map(|&h| self.tape.value(h).clone()).collect(),
        }
    }
}

/// One graph convolution on plain values.
pub fn graph_conv(
    a_hat: &NormalizedAdjacency,
    x: &Matrix,
    params: &ModelParams,
    cfg: &ModelConfig,
) -> Result<Matrix> {
    let mut tape = Tape::new();
    let pv = ParamVars::register(&mut tape, params);
    let a = tape.leaf(a_hat.matrix.clone());
    let xv = tape.leaf(x.clone());
    let z = tape_graph_conv(&mut tape, a, xv, &pv, cfg)?;
    Ok(tape.value(z).clone())
}

/// One recurrence step on plain values.
pub fn tgcn_step(
    a_hat: &NormalizedAdjacency,
    x_t: &Matrix,
    h_prev: &Matrix,
    params: &ModelParams,
    cfg: &ModelConfig,
) -> Result<Matrix> {
    let mut tape = Tape::new();
    let pv = ParamVars::register(&mut tape, params);
    let a = tape.leaf(a_hat.matrix.clone());
    let xv = tape.leaf(x_t.clone());
    let hv = tape.leaf(h_prev.clone());
    let h = tape_tgcn_step(&mut tape, a, xv, hv, &pv, cfg)?;
    Ok(tape.value(h).clone())
}

/// All hidden states for a sequence, starting from the zero state.
pub fn encode_sequence(
    seq: &STGraphSequence,
    params: &ModelParams,
    cfg: &ModelConfig,
) -> Result<HiddenStates> {
    Ok(build_forward(seq, params, cfg)?.hidden_states())
}

/// Per-node attention over a hidden-state sequence. Returns contexts
/// (n x h) and attention weights (n x t).
pub fn attend(
    hidden: &HiddenStates,
    params: &ModelParams,
    cfg: &ModelConfig,
) -> Result<(Matrix, Matrix)> {
    let t = hidden.values.len();
    if t == 0 {
        return Err(Error::domain("no hidden states to attend over".to_string()));
    }
    let n = hidden.values[0].rows();
    let mut tape = Tape::new();
    let pv = ParamVars::register(&mut tape, params);
    let hvars: Vec<Var> = hidden.values.iter().map(|m| tape.leaf(m.clone())).collect();
    let mut contexts = Matrix::zeros(n, cfg.h);
    let mut weights = Matrix::zeros(n, t);
    for v in 0..n {
        let rows: Vec<Var> = hvars
            .iter()
            .map(|&hv| tape.select_row(hv, v))
            .collect::<Result<_>>()?;
        let node_hidden = tape.stack_rows(&rows)?;
        let (ctx, alpha) = tape_attend_node(&mut tape, node_hidden, &pv, cfg)?;
        for c in 0..cfg.h {
            contexts.set(v, c, tape.value(ctx).get(0, c));
        }
        for c in 0..t {
            weights.set(v, c, tape.value(alpha).get(0, c));
        }
    }
    Ok((contexts, weights))
}

/// Class probabilities for a stack of context vectors (n x h -> n x 2).
pub fn classify(contexts: &Matrix, params: &ModelParams) -> Result<Matrix> {
    let mut tape = Tape::new();
    let pv = ParamVars::register(&mut tape, params);
    let mut out = Matrix::zeros(contexts.rows(), 2);
    for v in 0..contexts.rows() {
        let ctx = tape.leaf(Matrix::row_vec(contexts.row(v)));
        let p = tape_classify(&mut tape, ctx, &pv)?;
        out.set(v, 0, tape.value(p).get(0, 0));
        out.set(v, 1, tape.value(p).get(0, 1));
    }
    Ok(out)
}

/// Full forward pass: normalize, encode, attend, classify.
pub fn forward(
    seq: &STGraphSequence,
    params: &ModelParams,
    cfg: &ModelConfig,
) -> Result<Prediction> {
    Ok(build_forward(seq, params, cfg)?.prediction())
}

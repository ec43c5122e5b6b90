//! Unsupervised domain adaptation by transport alignment of latent features.
//!
//! Two small maps `g_s`, `g_t` embed source and target inputs into a shared
//! latent space and a linear classifier `f` reads class logits from it.
//! Training alternates between computing an optimal plan between the two
//! embedded batches with the potentials held fixed, and a gradient step on
//!
//! `C_loss + λ₁ T_loss + λ₂ H`,
//!
//! where `C_loss` is source cross-entropy, `T_loss` the plan-weighted squared
//! distance between (optionally label-augmented) features and `H` the mean
//! entropy of target predictions. The plan is a constant during the step.

use std::fmt;
use std::str::FromStr;

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dual_solver::{solve, SolverConfig};
use crate::error::{invalid, OtError, Result};
use crate::measures::{uniform_measure, CostOracle, PointCloud, TransportPlan};

pub const DEFAULT_HIDDEN: usize = 32;
pub const DEFAULT_LATENT: usize = 8;

/// Affine layer `y = x Wᵀ + b` with `W` of shape `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    pub fn zeros(input: usize, output: usize) -> Self {
        Self {
            weight: Array2::zeros((output, input)),
            bias: Array1::zeros(output),
        }
    }

    /// Glorot-uniform weights, zero bias.
    fn glorot(input: usize, output: usize, rng: &mut ChaCha8Rng) -> Self {
        let limit = (6.0 / (input + output) as f64).sqrt();
        let weight = Array2::from_shape_fn((output, input), |_| rng.gen_range(-limit..limit));
        Self {
            weight,
            bias: Array1::zeros(output),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.nrows()
    }

    fn apply(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        x.dot(&self.weight.t()) + &self.bias
    }

    /// Accumulates parameter gradients for upstream `dy`, returns `dx`.
    fn backward(&self, x: ArrayView2<'_, f64>, dy: &Array2<f64>, grad: &mut Dense) -> Array2<f64> {
        grad.weight += &dy.t().dot(&x);
        grad.bias += &dy.sum_axis(Axis(0));
        dy.dot(&self.weight)
    }

    fn len(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    fn write_params(&self, out: &mut Vec<f64>) {
        out.extend(self.weight.iter());
        out.extend(self.bias.iter());
    }

    fn read_params(&mut self, src: &[f64]) -> usize {
        let nw = self.weight.len();
        self.weight
            .iter_mut()
            .zip(&src[..nw])
            .for_each(|(w, v)| *w = *v);
        let nb = self.bias.len();
        self.bias
            .iter_mut()
            .zip(&src[nw..nw + nb])
            .for_each(|(b, v)| *b = *v);
        nw + nb
    }

    fn scaled_add(&mut self, alpha: f64, other: &Dense) {
        self.weight.scaled_add(alpha, &other.weight);
        self.bias.scaled_add(alpha, &other.bias);
    }
}

/// Latent map `x ↦ W₂ tanh(W₁ x + b₁) + b₂`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentMap {
    pub hidden: Dense,
    pub output: Dense,
}

struct LatentTrace {
    activations: Array2<f64>,
    latents: Array2<f64>,
}

impl LatentMap {
    pub fn zeros(input: usize, hidden: usize, latent: usize) -> Self {
        Self {
            hidden: Dense::zeros(input, hidden),
            output: Dense::zeros(hidden, latent),
        }
    }

    fn glorot(input: usize, hidden: usize, latent: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            hidden: Dense::glorot(input, hidden, rng),
            output: Dense::glorot(hidden, latent, rng),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.hidden.input_dim()
    }

    pub fn latent_dim(&self) -> usize {
        self.output.output_dim()
    }

    fn trace(&self, x: ArrayView2<'_, f64>) -> LatentTrace {
        let activations = self.hidden.apply(x).mapv_into(f64::tanh);
        let latents = self.output.apply(activations.view());
        LatentTrace {
            activations,
            latents,
        }
    }

    fn backward(
        &self,
        x: ArrayView2<'_, f64>,
        trace: &LatentTrace,
        d_latent: &Array2<f64>,
        grad: &mut LatentMap,
    ) {
        let d_act = self
            .output
            .backward(trace.activations.view(), d_latent, &mut grad.output);
        let d_pre = d_act * trace.activations.mapv(|h| 1.0 - h * h);
        self.hidden.backward(x, &d_pre, &mut grad.hidden);
    }

    fn zeros_like(&self) -> Self {
        Self::zeros(
            self.input_dim(),
            self.hidden.output_dim(),
            self.latent_dim(),
        )
    }
}

/// Maps `inputs` (one row per sample) to latent rows.
pub fn forward_latent(map: &LatentMap, inputs: &Array2<f64>) -> Result<Array2<f64>> {
    if inputs.ncols() != map.input_dim() {
        return invalid(format!(
            "inputs have {} columns, the map expects {}",
            inputs.ncols(),
            map.input_dim()
        ));
    }
    Ok(map.trace(inputs.view()).latents)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_dim: usize,
    pub hidden: usize,
    pub latent: usize,
    pub classes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptModel {
    pub g_s: LatentMap,
    pub g_t: LatentMap,
    pub f: Dense,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    architecture: Architecture,
    params: Vec<f64>,
}

impl AdaptModel {
    /// Random model in which `g_t` starts as a copy of `g_s`.
    pub fn new(arch: Architecture, seed: u64) -> Result<Self> {
        if arch.input_dim == 0 || arch.hidden == 0 || arch.latent == 0 || arch.classes < 2 {
            return invalid(format!("degenerate architecture {arch:?}"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g_s = LatentMap::glorot(arch.input_dim, arch.hidden, arch.latent, &mut rng);
        let f = Dense::glorot(arch.latent, arch.classes, &mut rng);
        Ok(Self {
            g_t: g_s.clone(),
            g_s,
            f,
        })
    }

    pub fn with_defaults(input_dim: usize, classes: usize, seed: u64) -> Result<Self> {
        Self::new(
            Architecture {
                input_dim,
                hidden: DEFAULT_HIDDEN,
                latent: DEFAULT_LATENT,
                classes,
            },
            seed,
        )
    }

    pub fn zeros(arch: Architecture) -> Self {
        let g = LatentMap::zeros(arch.input_dim, arch.hidden, arch.latent);
        Self {
            g_t: g.clone(),
            g_s: g,
            f: Dense::zeros(arch.latent, arch.classes),
        }
    }

    pub fn architecture(&self) -> Architecture {
        Architecture {
            input_dim: self.g_s.input_dim(),
            hidden: self.g_s.hidden.output_dim(),
            latent: self.g_s.latent_dim(),
            classes: self.f.output_dim(),
        }
    }

    pub fn classes(&self) -> usize {
        self.f.output_dim()
    }

    pub fn num_params(&self) -> usize {
        2 * (self.g_s.hidden.len() + self.g_s.output.len()) + self.f.len()
    }

    /// Flat parameters: `g_s`, then `g_t`, then `f`; weights row-major before biases.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for layer in [
            &self.g_s.hidden,
            &self.g_s.output,
            &self.g_t.hidden,
            &self.g_t.output,
            &self.f,
        ] {
            layer.write_params(&mut out);
        }
        out
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.num_params() {
            return invalid(format!(
                "expected {} parameters, got {}",
                self.num_params(),
                params.len()
            ));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return invalid("parameters must be finite");
        }
        let mut at = 0;
        for layer in [
            &mut self.g_s.hidden,
            &mut self.g_s.output,
            &mut self.g_t.hidden,
            &mut self.g_t.output,
            &mut self.f,
        ] {
            at += layer.read_params(&params[at..]);
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&ModelFile {
            architecture: self.architecture(),
            params: self.params(),
        })
        .expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text)?;
        let mut model = Self::zeros(file.architecture);
        model.set_params(&file.params)?;
        Ok(model)
    }

    fn zeros_like(&self) -> Self {
        Self {
            g_s: self.g_s.zeros_like(),
            g_t: self.g_t.zeros_like(),
            f: Dense::zeros(self.f.input_dim(), self.f.output_dim()),
        }
    }

    fn scaled_add(&mut self, alpha: f64, other: &AdaptModel) {
        self.g_s.hidden.scaled_add(alpha, &other.g_s.hidden);
        self.g_s.output.scaled_add(alpha, &other.g_s.output);
        self.g_t.hidden.scaled_add(alpha, &other.g_t.hidden);
        self.g_t.output.scaled_add(alpha, &other.g_t.output);
        self.f.scaled_add(alpha, &other.f);
    }
}

/// Inputs with one integer class label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledBatch {
    inputs: Array2<f64>,
    labels: Vec<usize>,
}

impl LabeledBatch {
    pub fn new(inputs: Array2<f64>, labels: Vec<usize>, classes: usize) -> Result<Self> {
        if inputs.nrows() != labels.len() {
            return invalid(format!(
                "{} rows but {} labels",
                inputs.nrows(),
                labels.len()
            ));
        }
        if let Some(k) = labels.iter().position(|&l| l >= classes) {
            return invalid(format!(
                "label {} at row {k} is not below {classes}",
                labels[k]
            ));
        }
        Ok(Self { inputs, labels })
    }

    pub fn inputs(&self) -> &Array2<f64> {
        &self.inputs
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    fn select(&self, rows: &[usize]) -> Self {
        Self {
            inputs: self.inputs.select(Axis(0), rows),
            labels: rows.iter().map(|&r| self.labels[r]).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AdaptMode {
    /// Transport on latents only.
    PlainOT,
    /// Transport on latents concatenated with class probabilities.
    LabelAugmentedOT,
    /// Label-augmented transport plus the target entropy penalty.
    Full,
}

impl AdaptMode {
    pub const ALL: [AdaptMode; 3] = [
        AdaptMode::PlainOT,
        AdaptMode::LabelAugmentedOT,
        AdaptMode::Full,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AdaptMode::PlainOT => "plain",
            AdaptMode::LabelAugmentedOT => "labels",
            AdaptMode::Full => "full",
        }
    }

    fn augments(self) -> bool {
        !matches!(self, AdaptMode::PlainOT)
    }
}

impl fmt::Display for AdaptMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AdaptMode {
    type Err = OtError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "plain" | "plainot" => Ok(AdaptMode::PlainOT),
            "labels" | "label" | "labelaugmentedot" => Ok(AdaptMode::LabelAugmentedOT),
            "full" => Ok(AdaptMode::Full),
            other => invalid(format!(
                "unknown mode '{other}', expected plain, labels or full"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptConfig {
    pub lambda1: f64,
    pub lambda2: f64,
    pub learn_rate: f64,
    /// Passes over the larger domain; each pass is split into minibatch rounds.
    pub epochs: usize,
    pub mode: AdaptMode,
    pub seed: u64,
    pub batch_size: usize,
    /// Gradient steps taken on each frozen plan.
    pub steps_per_round: usize,
}

impl Default for AdaptConfig {
    fn default() -> Self {
        Self {
            lambda1: 1.0,
            lambda2: 0.1,
            learn_rate: 1e-2,
            epochs: 20,
            mode: AdaptMode::Full,
            seed: 0,
            batch_size: 100,
            steps_per_round: 5,
        }
    }
}

impl AdaptConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda1.is_finite() && self.lambda1 >= 0.0) {
            return invalid(format!("lambda1 must be nonnegative, got {}", self.lambda1));
        }
        if !(self.lambda2.is_finite() && self.lambda2 >= 0.0) {
            return invalid(format!("lambda2 must be nonnegative, got {}", self.lambda2));
        }
        if !(self.learn_rate.is_finite() && self.learn_rate > 0.0) {
            return invalid(format!(
                "learn_rate must be positive, got {}",
                self.learn_rate
            ));
        }
        if self.batch_size == 0 {
            return invalid("batch_size must be positive");
        }
        if self.steps_per_round == 0 {
            return invalid("steps_per_round must be positive");
        }
        Ok(())
    }

    /// Entropy weight actually applied: zero outside [`AdaptMode::Full`].
    fn entropy_weight(&self) -> f64 {
        if self.mode == AdaptMode::Full {
            self.lambda2
        } else {
            0.0
        }
    }
}

fn log_softmax(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &z| m.max(z));
        let lse = max + row.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
        row.mapv_inplace(|z| z - lse);
    }
    out
}

/// Row-wise softmax probabilities.
pub fn softmax(logits: &Array2<f64>) -> Array2<f64> {
    log_softmax(logits).mapv_into(f64::exp)
}

/// Mean over rows of `−log softmax(logits)[label]`.
pub fn cross_entropy_loss(labels: &[usize], logits: &Array2<f64>) -> Result<f64> {
    check_labels(labels, logits)?;
    if labels.is_empty() {
        return Ok(0.0);
    }
    let logp = log_softmax(logits);
    let total: f64 = labels.iter().enumerate().map(|(r, &l)| -logp[[r, l]]).sum();
    Ok(total / labels.len() as f64)
}

fn check_labels(labels: &[usize], logits: &Array2<f64>) -> Result<()> {
    if labels.len() != logits.nrows() {
        return invalid(format!(
            "{} labels for {} logit rows",
            labels.len(),
            logits.nrows()
        ));
    }
    if let Some(&l) = labels.iter().find(|&&l| l >= logits.ncols()) {
        return invalid(format!("label {l} is not below {} classes", logits.ncols()));
    }
    Ok(())
}

/// Latents, followed by the classifier's class probabilities in augmenting modes.
pub fn augmented_features(latents: &Array2<f64>, f: &Dense, mode: AdaptMode) -> Array2<f64> {
    if !mode.augments() {
        return latents.clone();
    }
    let probs = softmax(&f.apply(latents.view()));
    ndarray::concatenate(Axis(1), &[latents.view(), probs.view()]).expect("row counts agree")
}

/// `Σ γ_ij ‖a_i − b_j‖²` over the plan entries.
pub fn transport_loss(
    aug_source: &Array2<f64>,
    aug_target: &Array2<f64>,
    plan: &TransportPlan,
) -> Result<f64> {
    check_plan(aug_source, aug_target, plan)?;
    Ok(plan
        .entries()
        .iter()
        .map(|&(i, j, m)| {
            let d = &aug_source.row(i) - &aug_target.row(j);
            m * d.dot(&d)
        })
        .sum())
}

fn check_plan(
    aug_source: &Array2<f64>,
    aug_target: &Array2<f64>,
    plan: &TransportPlan,
) -> Result<()> {
    if plan.n_source() != aug_source.nrows() || plan.n_target() != aug_target.nrows() {
        return invalid(format!(
            "plan is {}x{} but batches have {} and {} rows",
            plan.n_source(),
            plan.n_target(),
            aug_source.nrows(),
            aug_target.nrows()
        ));
    }
    if aug_source.ncols() != aug_target.ncols() {
        return invalid(format!(
            "feature widths differ: {} and {}",
            aug_source.ncols(),
            aug_target.ncols()
        ));
    }
    Ok(())
}

/// Mean Shannon entropy of the softmax rows, in nats.
pub fn entropy_regularizer(target_logits: &Array2<f64>) -> f64 {
    if target_logits.nrows() == 0 {
        return 0.0;
    }
    let logp = log_softmax(target_logits);
    // p log p -> 0 as p -> 0, and exp underflows to exactly 0 there
    let total: f64 = logp
        .iter()
        .map(|&lp| -lp.exp() * lp)
        .filter(|v| v.is_finite())
        .sum();
    total / target_logits.nrows() as f64
}

/// Loss terms as they enter the objective, before weighting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossTerms {
    pub total: f64,
    pub c_loss: f64,
    pub t_loss: f64,
    pub h_loss: f64,
}

/// Backprop of an upstream gradient `dp` on softmax outputs `p` to logits.
fn softmax_backward(p: &Array2<f64>, dp: &Array2<f64>) -> Array2<f64> {
    let inner = (p * dp).sum_axis(Axis(1)).insert_axis(Axis(1));
    p * &(dp - &inner)
}

/// Objective value and its exact gradient with `plan` frozen.
pub fn total_loss(
    model: &AdaptModel,
    source: &LabeledBatch,
    target_inputs: &Array2<f64>,
    plan: &TransportPlan,
    cfg: &AdaptConfig,
) -> Result<(LossTerms, AdaptModel)> {
    loss_and_grad(model, source, target_inputs, Some(plan), cfg)
}

fn loss_and_grad(
    model: &AdaptModel,
    source: &LabeledBatch,
    target_inputs: &Array2<f64>,
    plan: Option<&TransportPlan>,
    cfg: &AdaptConfig,
) -> Result<(LossTerms, AdaptModel)> {
    let xs = source.inputs();
    forward_latent(&model.g_s, xs)?;
    forward_latent(&model.g_t, target_inputs)?;
    let (ns, nt) = (xs.nrows(), target_inputs.nrows());
    let latent = model.g_s.latent_dim();
    let mut grad = model.zeros_like();

    let src = model.g_s.trace(xs.view());
    let tgt = model.g_t.trace(target_inputs.view());
    let zs = model.f.apply(src.latents.view());
    let zt = model.f.apply(tgt.latents.view());
    let ps = softmax(&zs);
    let pt = softmax(&zt);

    let c_loss = cross_entropy_loss(source.labels(), &zs)?;
    let mut d_zs = ps.clone();
    for (r, &l) in source.labels().iter().enumerate() {
        d_zs[[r, l]] -= 1.0;
    }
    d_zs /= ns.max(1) as f64;
    let mut d_zt = Array2::<f64>::zeros(zt.raw_dim());
    let mut d_ls = Array2::<f64>::zeros(src.latents.raw_dim());
    let mut d_lt = Array2::<f64>::zeros(tgt.latents.raw_dim());

    let mut t_loss = 0.0;
    if let Some(plan) = plan {
        let aug = |l: &Array2<f64>, p: &Array2<f64>| {
            if cfg.mode.augments() {
                ndarray::concatenate(Axis(1), &[l.view(), p.view()]).expect("row counts agree")
            } else {
                l.clone()
            }
        };
        let a_s = aug(&src.latents, &ps);
        let a_t = aug(&tgt.latents, &pt);
        t_loss = transport_loss(&a_s, &a_t, plan)?;
        let mut d_as = Array2::<f64>::zeros(a_s.raw_dim());
        let mut d_at = Array2::<f64>::zeros(a_t.raw_dim());
        let scale = 2.0 * cfg.lambda1;
        for &(i, j, m) in plan.entries() {
            let d = (&a_s.row(i) - &a_t.row(j)) * (scale * m);
            d_as.row_mut(i).scaled_add(1.0, &d);
            d_at.row_mut(j).scaled_add(-1.0, &d);
        }
        d_ls += &d_as.slice(s![.., ..latent]);
        d_lt += &d_at.slice(s![.., ..latent]);
        if cfg.mode.augments() {
            d_zs += &softmax_backward(&ps, &d_as.slice(s![.., latent..]).to_owned());
            d_zt += &softmax_backward(&pt, &d_at.slice(s![.., latent..]).to_owned());
        }
    }

    let h_loss = entropy_regularizer(&zt);
    let h_weight = cfg.entropy_weight();
    if h_weight != 0.0 && nt > 0 {
        // dH/dz_k = −p_k (log p_k + H_row)
        let logp = log_softmax(&zt);
        let scale = h_weight / nt as f64;
        for ((mut dz, lp), p) in d_zt.rows_mut().into_iter().zip(logp.rows()).zip(pt.rows()) {
            let h_row: f64 = -p.iter().zip(lp.iter()).map(|(p, lp)| p * lp).sum::<f64>();
            for ((d, &lpk), &pk) in dz.iter_mut().zip(lp.iter()).zip(p.iter()) {
                *d -= scale * pk * (lpk + h_row);
            }
        }
    }

    d_ls += &model.f.backward(src.latents.view(), &d_zs, &mut grad.f);
    d_lt += &model.f.backward(tgt.latents.view(), &d_zt, &mut grad.f);
    model.g_s.backward(xs.view(), &src, &d_ls, &mut grad.g_s);
    model
        .g_t
        .backward(target_inputs.view(), &tgt, &d_lt, &mut grad.g_t);

    let total = c_loss + cfg.lambda1 * t_loss + h_weight * h_loss;
    Ok((
        LossTerms {
            total,
            c_loss,
            t_loss,
            h_loss,
        },
        grad,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Path {
    /// `f(g_s(x))`
    SourcePath,
    /// `f(g_t(x))`
    TargetPath,
}

/// Predicted classes (lowest index on ties) for each row.
pub fn predict(model: &AdaptModel, inputs: &Array2<f64>, which: Path) -> Result<Vec<usize>> {
    let g = match which {
        Path::SourcePath => &model.g_s,
        Path::TargetPath => &model.g_t,
    };
    let logits = model.f.apply(forward_latent(g, inputs)?.view());
    Ok(argmax_rows(&logits))
}

pub fn argmax_rows(logits: &Array2<f64>) -> Vec<usize> {
    logits
        .rows()
        .into_iter()
        .map(|row| {
            let mut best = 0;
            for (k, &z) in row.iter().enumerate() {
                if z > row[best] {
                    best = k;
                }
            }
            best
        })
        .collect()
}

/// Fraction of rows whose predicted class equals the label.
pub fn accuracy(predicted: &[usize], labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let hits = predicted.iter().zip(labels).filter(|(p, l)| p == l).count();
    hits as f64 / labels.len() as f64
}

pub fn evaluate(model: &AdaptModel, batch: &LabeledBatch, which: Path) -> Result<f64> {
    Ok(accuracy(
        &predict(model, batch.inputs(), which)?,
        batch.labels(),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistoryRow {
    pub round: usize,
    pub c_loss: f64,
    pub t_loss: f64,
    pub h_loss: f64,
    pub source_acc: f64,
    pub target_acc: f64,
}

pub fn history_csv(rows: &[HistoryRow]) -> String {
    let mut out = String::from("round,c_loss,t_loss,h_loss,source_acc,target_acc\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.round, r.c_loss, r.t_loss, r.h_loss, r.source_acc, r.target_acc
        ));
    }
    out
}

/// Solver settings for the per-round plans. The plan is recovered exactly
/// from the support, so a short ascent is enough.
fn round_solver(seed: u64) -> SolverConfig {
    SolverConfig {
        max_epochs: 20,
        support_tolerance_rel: 1e-3,
        seed,
        ..SolverConfig::default()
    }
}

fn batch_plan(a_s: &Array2<f64>, a_t: &Array2<f64>, seed: u64) -> Result<TransportPlan> {
    let cloud = |a: &Array2<f64>| PointCloud::from_flat(a.iter().copied().collect(), a.ncols());
    let (cs, ct) = (cloud(a_s)?, cloud(a_t)?);
    let oracle = CostOracle::new(&cs, &ct)?;
    let mu_s = uniform_measure(cs.clone())?;
    let mu_t = uniform_measure(ct.clone())?;
    Ok(solve(&mu_s, &mu_t, &oracle, &round_solver(seed))?.plan)
}

fn rounds_per_epoch(ns: usize, nt: usize, batch: usize) -> usize {
    ns.max(nt).div_ceil(batch)
}

fn draw(rng: &mut ChaCha8Rng, n: usize, batch: usize) -> Vec<usize> {
    let mut rows = sample(rng, n, batch.min(n)).into_vec();
    rows.sort_unstable();
    rows
}

fn check_domains(model: &AdaptModel, source: &LabeledBatch, target: &LabeledBatch) -> Result<()> {
    if source.is_empty() || target.is_empty() {
        return invalid("both domains need at least one sample");
    }
    let d = model.g_s.input_dim();
    if source.inputs().ncols() != d || target.inputs().ncols() != d {
        return invalid(format!("inputs must have {d} columns"));
    }
    Ok(())
}

/// Alternating training. Target labels are read only to fill the
/// `target_acc` history column.
pub fn train(
    model: &AdaptModel,
    source: &LabeledBatch,
    target: &LabeledBatch,
    cfg: &AdaptConfig,
) -> Result<(AdaptModel, Vec<HistoryRow>)> {
    cfg.validate()?;
    check_domains(model, source, target)?;
    let mut model = model.clone();
    let mut history = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let rounds = cfg.epochs * rounds_per_epoch(source.len(), target.len(), cfg.batch_size);

    for round in 1..=rounds {
        let sb = source.select(&draw(&mut rng, source.len(), cfg.batch_size));
        let tb = target.select(&draw(&mut rng, target.len(), cfg.batch_size));
        let a_s = augmented_features(
            &forward_latent(&model.g_s, sb.inputs())?,
            &model.f,
            cfg.mode,
        );
        let a_t = augmented_features(
            &forward_latent(&model.g_t, tb.inputs())?,
            &model.f,
            cfg.mode,
        );
        let plan = batch_plan(&a_s, &a_t, cfg.seed.wrapping_add(round as u64)).map_err(|e| {
            OtError::Round {
                round,
                source: Box::new(e),
            }
        })?;
        let mut terms = None;
        for _ in 0..cfg.steps_per_round {
            let (t, grad) = loss_and_grad(&model, &sb, tb.inputs(), Some(&plan), cfg)?;
            model.scaled_add(-cfg.learn_rate, &grad);
            terms.get_or_insert(t);
        }
        let terms = terms.expect("at least one step per round");
        history.push(HistoryRow {
            round,
            c_loss: terms.c_loss,
            t_loss: terms.t_loss,
            h_loss: terms.h_loss,
            source_acc: evaluate(&model, source, Path::SourcePath)?,
            target_acc: evaluate(&model, target, Path::TargetPath)?,
        });
    }
    Ok((model, history))
}

/// Source-only baseline: the same rounds and steps with the cross-entropy
/// term alone. Its target accuracy is read through [`Path::SourcePath`].
pub fn train_source_only(
    model: &AdaptModel,
    source: &LabeledBatch,
    target: &LabeledBatch,
    cfg: &AdaptConfig,
) -> Result<(AdaptModel, Vec<HistoryRow>)> {
    cfg.validate()?;
    check_domains(model, source, target)?;
    let mut model = model.clone();
    let mut history = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let rounds = cfg.epochs * rounds_per_epoch(source.len(), target.len(), cfg.batch_size);
    let plain = AdaptConfig {
        lambda1: 0.0,
        lambda2: 0.0,
        ..cfg.clone()
    };

    for round in 1..=rounds {
        let sb = source.select(&draw(&mut rng, source.len(), cfg.batch_size));
        let tb = target.select(&draw(&mut rng, target.len(), cfg.batch_size));
        let mut terms = None;
        for _ in 0..cfg.steps_per_round {
            let (t, grad) = loss_and_grad(&model, &sb, tb.inputs(), None, &plain)?;
            model.scaled_add(-cfg.learn_rate, &grad);
            terms.get_or_insert(t);
        }
        let terms = terms.expect("at least one step per round");
        history.push(HistoryRow {
            round,
            c_loss: terms.c_loss,
            t_loss: 0.0,
            h_loss: terms.h_loss,
            source_acc: evaluate(&model, source, Path::SourcePath)?,
            target_acc: evaluate(&model, target, Path::SourcePath)?,
        });
    }
    Ok((model, history))
}

/// Two-class planar Gaussian task with a rigid shift between domains.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianTask {
    pub samples_per_domain: usize,
    /// Class means of the source domain.
    pub means: [[f64; 2]; 2],
    pub std_dev: f64,
    /// Rotation applied to target samples, in degrees, about the origin.
    pub rotation_deg: f64,
    /// Translation applied after the rotation.
    pub shift: [f64; 2],
}

impl Default for GaussianTask {
    fn default() -> Self {
        Self {
            samples_per_domain: 500,
            means: [[-1.0, 0.0], [1.0, 0.0]],
            std_dev: 0.5,
            rotation_deg: 30.0,
            shift: [1.0, 0.5],
        }
    }
}

impl GaussianTask {
    /// The same two classes with no shift between domains.
    pub fn unshifted() -> Self {
        Self {
            rotation_deg: 0.0,
            shift: [0.0, 0.0],
            ..Self::default()
        }
    }

    fn draw_domain(&self, rng: &mut ChaCha8Rng) -> Result<LabeledBatch> {
        let n = self.samples_per_domain;
        let noise = Normal::new(0.0, self.std_dev)
            .map_err(|e| OtError::InvalidInput(format!("std_dev: {e}")))?;
        let mut inputs = Array2::zeros((n, 2));
        let mut labels = Vec::with_capacity(n);
        for k in 0..n {
            let class = k % 2;
            let m = self.means[class];
            inputs[[k, 0]] = m[0] + noise.sample(rng);
            inputs[[k, 1]] = m[1] + noise.sample(rng);
            labels.push(class);
        }
        LabeledBatch::new(inputs, labels, 2)
    }

    /// Source and target domains. Both draw from their own stream of `seed`,
    /// so an unshifted task yields two identical domains.
    pub fn sample(&self, seed: u64) -> Result<(LabeledBatch, LabeledBatch)> {
        let source = self.draw_domain(&mut ChaCha8Rng::seed_from_u64(seed))?;
        let mut target = self.draw_domain(&mut ChaCha8Rng::seed_from_u64(seed))?;
        let (sin, cos) = self.rotation_deg.to_radians().sin_cos();
        for mut row in target.inputs.rows_mut() {
            let (x, y) = (row[0], row[1]);
            row[0] = cos * x - sin * y + self.shift[0];
            row[1] = sin * x + cos * y + self.shift[1];
        }
        Ok((source, target))
    }
}

/// Accuracies of one adapted run next to its source-only baseline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunSummary {
    pub mode: AdaptMode,
    pub seed: u64,
    pub source_acc: f64,
    pub target_acc: f64,
    pub source_only_target_acc: f64,
}

pub fn summary_csv(rows: &[RunSummary]) -> String {
    let mut out = String::from("mode,seed,source_acc,target_acc,source_only_target_acc\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.mode, r.seed, r.source_acc, r.target_acc, r.source_only_target_acc
        ));
    }
    out
}

/// Trains the baseline and one adapted model per mode on the task drawn with `seed`.
pub fn run_benchmark(
    task: &GaussianTask,
    modes: &[AdaptMode],
    seed: u64,
    base: &AdaptConfig,
) -> Result<Vec<RunSummary>> {
    let (source, target) = task.sample(seed)?;
    let init = AdaptModel::with_defaults(2, 2, seed)?;
    let cfg = AdaptConfig {
        seed,
        ..base.clone()
    };
    let (baseline, _) = train_source_only(&init, &source, &target, &cfg)?;
    let source_only_target_acc = evaluate(&baseline, &target, Path::SourcePath)?;
    modes
        .iter()
        .map(|&mode| {
            let cfg = AdaptConfig {
                mode,
                ..cfg.clone()
            };
            let (model, _) = train(&init, &source, &target, &cfg)?;
            Ok(RunSummary {
                mode,
                seed,
                source_acc: evaluate(&model, &source, Path::SourcePath)?,
                target_acc: evaluate(&model, &target, Path::TargetPath)?,
                source_only_target_acc,
            })
        })
        .collect()
}

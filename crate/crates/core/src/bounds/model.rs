//! Tabular softmax policies, the two training losses and gradient descent.

use rand::seq::index::sample;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::world::ToyWorld;
use super::{BoundsConfig, BoundsError};
use crate::numeric::{log_sum_exp, neg_log_sigmoid, sigmoid, softmax};

/// Floor applied to probabilities inside logarithms.
pub const LOG_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditioningMode {
    XOnly,
    XAndC,
}

/// One row of logits per context key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyModel {
    pub mode: ConditioningMode,
    pub nx: usize,
    pub nc: usize,
    pub ny: usize,
    pub logits: Vec<Vec<f64>>,
}

impl ToyModel {
    /// All-zero logits, i.e. uniform rows.
    pub fn uniform(mode: ConditioningMode, nx: usize, nc: usize, ny: usize) -> Self {
        let rows = match mode {
            ConditioningMode::XOnly => nx,
            ConditioningMode::XAndC => nx * nc,
        };
        Self { mode, nx, nc, ny, logits: vec![vec![0.0; ny]; rows] }
    }

    pub fn for_world(mode: ConditioningMode, w: &ToyWorld) -> Self {
        Self::uniform(mode, w.nx, w.nc, w.ny)
    }

    pub fn key(&self, x: usize, c: usize) -> usize {
        match self.mode {
            ConditioningMode::XOnly => x,
            ConditioningMode::XAndC => x * self.nc + c,
        }
    }

    pub fn probs(&self, x: usize, c: usize) -> Vec<f64> {
        softmax(&self.logits[self.key(x, c)])
    }

    pub fn log_prob(&self, x: usize, c: usize, y: usize) -> f64 {
        let row = &self.logits[self.key(x, c)];
        row[y] - log_sum_exp(row)
    }

    pub fn prob(&self, x: usize, c: usize, y: usize) -> f64 {
        self.log_prob(x, c, y).exp()
    }

    pub fn param_count(&self) -> usize {
        self.logits.len() * self.ny
    }

    fn get(&self, i: usize) -> f64 {
        self.logits[i / self.ny][i % self.ny]
    }

    fn set(&mut self, i: usize, v: f64) {
        self.logits[i / self.ny][i % self.ny] = v;
    }

    /// Every row is a distribution to within `tol`.
    pub fn rows_valid(&self, tol: f64) -> bool {
        self.logits.iter().all(|r| {
            let p = softmax(r);
            p.iter().all(|v| v.is_finite() && *v >= 0.0) && (p.iter().sum::<f64>() - 1.0).abs() <= tol
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossValue {
    pub value: f64,
    /// Some target had probability below [`LOG_FLOOR`].
    pub clamped: bool,
}

/// −Σ P(x,c,y) ln P_θ(y | key(x,c)).
pub fn sft_loss(model: &ToyModel, world: &ToyWorld) -> LossValue {
    let mut value = 0.0;
    let mut clamped = false;
    for x in 0..world.nx {
        for c in 0..world.nc {
            let row = &model.logits[model.key(x, c)];
            let lse = log_sum_exp(row);
            for y in 0..world.ny {
                let p = world.p(x, c, y);
                if p == 0.0 {
                    continue;
                }
                let mut lp = row[y] - lse;
                if lp < LOG_FLOOR.ln() {
                    lp = LOG_FLOOR.ln();
                    clamped = true;
                }
                value -= p * lp;
            }
        }
    }
    LossValue { value, clamped }
}

pub fn sft_grad(model: &ToyModel, world: &ToyWorld) -> Vec<Vec<f64>> {
    let mut g = vec![vec![0.0; model.ny]; model.logits.len()];
    for x in 0..world.nx {
        for c in 0..world.nc {
            let k = model.key(x, c);
            let q = softmax(&model.logits[k]);
            for y in 0..world.ny {
                let p = world.p(x, c, y);
                if p == 0.0 {
                    continue;
                }
                for (j, gj) in g[k].iter_mut().enumerate() {
                    *gj += p * (q[j] - if j == y { 1.0 } else { 0.0 });
                }
            }
        }
    }
    g
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrefPair {
    pub x: usize,
    pub c: usize,
    pub y_w: usize,
    pub y_l: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferenceSet {
    pub pairs: Vec<PrefPair>,
    /// Sampling weight of each pair; uniform unless set otherwise.
    pub weights: Vec<f64>,
    pub reference: ToyModel,
}

impl PreferenceSet {
    pub fn new(pairs: Vec<PrefPair>, reference: ToyModel) -> Result<Self, BoundsError> {
        if pairs.is_empty() {
            return Err(BoundsError::Config("no preference pairs".into()));
        }
        for p in &pairs {
            if p.y_w == p.y_l {
                return Err(BoundsError::Config("y_w equals y_l".into()));
            }
            if p.x >= reference.nx || p.c >= reference.nc || p.y_w >= reference.ny || p.y_l >= reference.ny {
                return Err(BoundsError::Config("pair index out of range".into()));
            }
        }
        let n = pairs.len();
        Ok(Self { pairs, weights: vec![1.0 / n as f64; n], reference })
    }

    /// Δ = ln P_ref(y_w|x,c) − ln P_ref(y_l|x,c).
    pub fn delta(&self, i: usize) -> f64 {
        let p = self.pairs[i];
        self.reference.log_prob(p.x, p.c, p.y_w) - self.reference.log_prob(p.x, p.c, p.y_l)
    }

    pub fn mean_delta(&self) -> f64 {
        (0..self.pairs.len()).map(|i| self.weights[i] * self.delta(i)).sum()
    }

    pub fn is_uniform(&self) -> bool {
        let n = self.pairs.len() as f64;
        self.weights.iter().all(|w| (w - 1.0 / n).abs() <= 1e-12)
    }
}

/// β · ln(P_θ / P_ref).
pub fn implicit_reward(model: &ToyModel, reference: &ToyModel, x: usize, c: usize, y: usize, beta: f64) -> f64 {
    beta * (model.log_prob(x, c, y) - reference.log_prob(x, c, y))
}

fn margin(model: &ToyModel, prefs: &PreferenceSet, i: usize, beta: f64, asymmetric: bool) -> f64 {
    let p = prefs.pairs[i];
    let lw = model.log_prob(p.x, p.c, p.y_w) - prefs.reference.log_prob(p.x, p.c, p.y_w);
    let ll = model.log_prob(p.x, p.c, p.y_l) - prefs.reference.log_prob(p.x, p.c, p.y_l);
    if asymmetric {
        beta * lw - ll
    } else {
        beta * (lw - ll)
    }
}

/// Weighted mean of −ln σ(β[ln(P_θ/P_ref)(y_w) − ln(P_θ/P_ref)(y_l)]).
/// With `asymmetric` the second log-ratio is not scaled by β.
pub fn dpo_loss(model: &ToyModel, prefs: &PreferenceSet, beta: f64, asymmetric: bool) -> f64 {
    (0..prefs.pairs.len()).map(|i| prefs.weights[i] * neg_log_sigmoid(margin(model, prefs, i, beta, asymmetric))).sum()
}

pub fn dpo_grad(model: &ToyModel, prefs: &PreferenceSet, beta: f64, asymmetric: bool) -> Vec<Vec<f64>> {
    let mut g = vec![vec![0.0; model.ny]; model.logits.len()];
    for (i, p) in prefs.pairs.iter().enumerate() {
        let k = model.key(p.x, p.c);
        let q = softmax(&model.logits[k]);
        // d(−ln σ(m))/dm = σ(m) − 1.
        let dm = prefs.weights[i] * (sigmoid(margin(model, prefs, i, beta, asymmetric)) - 1.0);
        let (bw, bl) = if asymmetric { (beta, 1.0) } else { (beta, beta) };
        for (j, gj) in g[k].iter_mut().enumerate() {
            let dlw = if j == p.y_w { 1.0 } else { 0.0 } - q[j];
            let dll = if j == p.y_l { 1.0 } else { 0.0 } - q[j];
            *gj += dm * (bw * dlw - bl * dll);
        }
    }
    g
}

/// What gradient descent minimises.
#[derive(Debug, Clone, Copy)]
pub enum Objective<'a> {
    Sft(&'a ToyWorld),
    Dpo { prefs: &'a PreferenceSet, beta: f64, asymmetric: bool },
}

impl Objective<'_> {
    pub fn loss(&self, m: &ToyModel) -> f64 {
        match *self {
            Objective::Sft(w) => sft_loss(m, w).value,
            Objective::Dpo { prefs, beta, asymmetric } => dpo_loss(m, prefs, beta, asymmetric),
        }
    }

    pub fn grad(&self, m: &ToyModel) -> Vec<Vec<f64>> {
        match *self {
            Objective::Sft(w) => sft_grad(m, w),
            Objective::Dpo { prefs, beta, asymmetric } => dpo_grad(m, prefs, beta, asymmetric),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: ToyModel,
    /// Loss before each step and after the last one.
    pub losses: Vec<f64>,
}

/// Full-batch gradient descent θ ← θ − η∇L for `cfg.steps` steps. Three
/// consecutive loss increases abort with the model from before the first of them.
pub fn train(model: &ToyModel, objective: Objective<'_>, cfg: &BoundsConfig) -> Result<TrainOutcome, BoundsError> {
    train_until(model, objective, cfg, None)
}

/// As [`train`], stopping early once the gradient's Euclidean norm is at most `grad_tol`.
pub fn train_until(
    model: &ToyModel,
    objective: Objective<'_>,
    cfg: &BoundsConfig,
    grad_tol: Option<f64>,
) -> Result<TrainOutcome, BoundsError> {
    cfg.validate()?;
    let mut m = model.clone();
    let mut losses = Vec::with_capacity(cfg.steps + 1);
    let mut last_stable = m.clone();
    let mut rises = 0;
    let mut prev = objective.loss(&m);
    losses.push(prev);
    for step in 0..cfg.steps {
        let g = objective.grad(&m);
        if let Some(tol) = grad_tol {
            if g.iter().flatten().map(|v| v * v).sum::<f64>().sqrt() <= tol {
                break;
            }
        }
        let before = m.clone();
        for (row, grow) in m.logits.iter_mut().zip(&g) {
            for (v, d) in row.iter_mut().zip(grow) {
                *v -= cfg.learning_rate * d;
            }
        }
        let l = objective.loss(&m);
        if !l.is_finite() {
            return Err(BoundsError::Divergence { step, last_stable: Box::new(before) });
        }
        if l > prev {
            if rises == 0 {
                last_stable = before;
            }
            rises += 1;
            if rises >= 3 {
                return Err(BoundsError::Divergence { step, last_stable: Box::new(last_stable) });
            }
        } else {
            rises = 0;
        }
        prev = l;
        losses.push(l);
    }
    Ok(TrainOutcome { model: m, losses })
}

/// Smoothness estimate: the largest Hessian eigenvalue at `model`, by power
/// iteration on finite-difference Hessian-vector products with step `h`.
pub fn smoothness_probe(model: &ToyModel, objective: Objective<'_>, h: f64) -> f64 {
    let n = model.param_count();
    let g0 = objective.grad(model);
    // Start off the null space of per-row constant shifts.
    let raw: Vec<f64> = (0..n).map(|i| ((i % model.ny) as f64 + 1.0) * if i % 2 == 0 { 1.0 } else { -0.5 }).collect();
    let rn = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut v: Vec<f64> = raw.iter().map(|x| x / rn).collect();
    let mut lambda = 0.0;
    for _ in 0..50 {
        let mut m = model.clone();
        for (i, vi) in v.iter().enumerate() {
            m.set(i, model.get(i) + h * vi);
        }
        let g1 = objective.grad(&m);
        let hv: Vec<f64> = (0..n).map(|i| (g1[i / model.ny][i % model.ny] - g0[i / model.ny][i % model.ny]) / h).collect();
        let norm = hv.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        lambda = norm;
        v = hv.iter().map(|x| x / norm).collect();
    }
    lambda
}

/// Largest relative error between analytic and central-difference partials
/// over a random `fraction` of the parameters (at least one). The relative
/// error uses max(|a|, |n|, 1e-8) as denominator.
pub fn gradient_check(model: &ToyModel, objective: Objective<'_>, fraction: f64, rng: &mut ChaCha8Rng) -> f64 {
    let n = model.param_count();
    let k = ((n as f64 * fraction).ceil() as usize).clamp(1, n);
    let g = objective.grad(model);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for i in sample(rng, n, k).into_iter() {
        let mut plus = model.clone();
        let mut minus = model.clone();
        plus.set(i, model.get(i) + h);
        minus.set(i, model.get(i) - h);
        let numeric = (objective.loss(&plus) - objective.loss(&minus)) / (2.0 * h);
        let analytic = g[i / model.ny][i % model.ny];
        let denom = analytic.abs().max(numeric.abs()).max(1e-8);
        worst = worst.max((analytic - numeric).abs() / denom);
    }
    worst
}

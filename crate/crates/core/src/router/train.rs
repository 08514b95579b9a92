//! One-vs-rest logistic training.
//!
//! Each kind is an independent weighted binary cross-entropy problem optimized
//! with Adam-style moments and decoupled weight decay. Updates are lazy: only
//! coordinates active in a mini-batch move, and decay is folded into a per-kind
//! scale factor so a step costs time proportional to the batch's nonzeros.
//! The learning rate warms up linearly over the first tenth of all steps and
//! then decays linearly.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::note::Note;
use crate::router::features::{featurize_text, FeatureSpec, IdfTable, SpecError};
use crate::router::model::{sigmoid, RouterModel};
use crate::taxonomy::{Kind, KindScores, LabelSet, KIND_COUNT};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HyperParams {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub weight_decay: f64,
    pub seed: u64,
    /// Upper bound on the positive-class weight `n_neg / n_pos`.
    pub max_pos_weight: f64,
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams {
            batch_size: 8,
            learning_rate: 0.1,
            epochs: 10,
            weight_decay: 1e-4,
            seed: 0,
            max_pos_weight: 20.0,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.batch_size == 0 {
            return Err(TrainError::Config("batch_size must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(TrainError::Config("learning_rate must be > 0".into()));
        }
        if self.epochs == 0 {
            return Err(TrainError::Config("epochs must be >= 1".into()));
        }
        if !(self.weight_decay >= 0.0) || !(self.max_pos_weight >= 1.0) {
            return Err(TrainError::Config(
                "weight_decay must be >= 0 and max_pos_weight >= 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrainError {
    #[error("invalid hyperparameters: {0}")]
    Config(String),
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("training example {0} has an empty label set")]
    EmptyLabels(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Per epoch, the sum over kinds of the mean per-example weighted loss.
    pub epoch_loss: Vec<f64>,
    pub steps: usize,
    /// Kinds with no positive example; trained as bias-only models.
    pub degenerate_kinds: Vec<Kind>,
    pub pos_weights: KindScores,
    pub active_features: usize,
}

/// Weighted binary cross-entropy of one example and its gradient.
///
/// `loss = -(pw*y*ln σ(z) + (1-y)*ln(1-σ(z)))` with `z = w·x + b`, so
/// `dloss/dz = σ(z)*(pw*y + 1 - y) - pw*y`.
pub fn loss_and_grad(w: &[f64], b: f64, x: &[f64], y: bool, pos_weight: f64) -> (f64, Vec<f64>, f64) {
    let z: f64 = w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + b;
    let (loss, gz) = loss_dz(z, y, pos_weight);
    (loss, x.iter().map(|xi| gz * xi).collect(), gz)
}

fn loss_dz(z: f64, y: bool, pw: f64) -> (f64, f64) {
    // ln σ(z) = -softplus(-z), ln(1-σ(z)) = -softplus(z)
    let softplus = |t: f64| {
        if t > 0.0 {
            t + (-t).exp().ln_1p()
        } else {
            t.exp().ln_1p()
        }
    };
    let p = sigmoid(z);
    if y {
        (pw * softplus(-z), pw * (p - 1.0))
    } else {
        (softplus(z), p)
    }
}

/// Learning-rate multiplier for 1-based step `t`.
pub fn lr_schedule(t: usize, total: usize, warmup: usize) -> f64 {
    if t <= warmup {
        t as f64 / warmup as f64
    } else {
        (total - t + 1) as f64 / (total - warmup + 1) as f64
    }
}

struct KindFit {
    w: Vec<f64>,
    b: f64,
    epoch_loss: Vec<f64>,
}

struct Problem<'a> {
    xs: &'a [Vec<(usize, f64)>],
    dim: usize,
    orders: &'a [Vec<usize>],
    hp: &'a HyperParams,
    total_steps: usize,
    warmup: usize,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

fn fit_kind(p: &Problem<'_>, ys: &[bool], pw: f64, freeze_weights: bool) -> KindFit {
    let hp = p.hp;
    let mut w = vec![0.0; p.dim];
    let mut m = vec![0.0; p.dim];
    let mut v = vec![0.0; p.dim];
    let mut grad = vec![0.0; p.dim];
    let mut touched: Vec<usize> = Vec::new();
    let (mut b, mut mb, mut vb) = (0.0, 0.0, 0.0);
    // Actual weights are `scale * w`.
    let mut scale = 1.0;
    let mut t = 0;
    let mut epoch_loss = Vec::with_capacity(hp.epochs);
    for order in p.orders {
        let mut loss_sum = 0.0;
        for batch in order.chunks(hp.batch_size) {
            t += 1;
            let lr = hp.learning_rate * lr_schedule(t, p.total_steps, p.warmup);
            let inv = 1.0 / batch.len() as f64;
            let mut gb = 0.0;
            for &i in batch {
                let x = &p.xs[i];
                let z = b + scale * x.iter().map(|(j, xv)| w[*j] * xv).sum::<f64>();
                let (loss, gz) = loss_dz(z, ys[i], pw);
                loss_sum += loss;
                gb += gz * inv;
                if freeze_weights {
                    continue;
                }
                for (j, xv) in x {
                    if grad[*j] == 0.0 {
                        touched.push(*j);
                    }
                    grad[*j] += gz * xv * inv;
                }
            }
            let c1 = 1.0 - BETA1.powi(t as i32);
            let c2 = 1.0 - BETA2.powi(t as i32);
            mb = BETA1 * mb + (1.0 - BETA1) * gb;
            vb = BETA2 * vb + (1.0 - BETA2) * gb * gb;
            b -= lr * (mb / c1) / ((vb / c2).sqrt() + EPS);

            scale *= 1.0 - lr * hp.weight_decay;
            touched.sort_unstable();
            touched.dedup();
            for &j in &touched {
                let g = grad[j];
                grad[j] = 0.0;
                m[j] = BETA1 * m[j] + (1.0 - BETA1) * g;
                v[j] = BETA2 * v[j] + (1.0 - BETA2) * g * g;
                w[j] -= lr * (m[j] / c1) / ((v[j] / c2).sqrt() + EPS) / scale;
            }
            touched.clear();
            if scale < 1e-3 {
                w.iter_mut().for_each(|x| *x *= scale);
                scale = 1.0;
            }
        }
        epoch_loss.push(loss_sum / p.xs.len() as f64);
    }
    w.iter_mut().for_each(|x| *x *= scale);
    KindFit { w, b, epoch_loss }
}

/// Train the twenty one-vs-rest models. Deterministic given `hp.seed`.
pub fn train(
    corpus: &[(Note, LabelSet)],
    hp: &HyperParams,
    spec: &FeatureSpec,
) -> Result<(RouterModel, TrainReport), TrainError> {
    hp.validate()?;
    spec.validate()?;
    if corpus.is_empty() {
        return Err(TrainError::EmptyCorpus);
    }
    if let Some(i) = corpus.iter().position(|(_, l)| l.is_empty()) {
        return Err(TrainError::EmptyLabels(i));
    }
    let idf = spec
        .use_tfidf
        .then(|| IdfTable::fit(corpus.iter().map(|(n, _)| n.content()), spec));
    let sparse: Vec<_> = corpus
        .iter()
        .map(|(n, _)| featurize_text(n.content(), n.persona, spec, idf.as_ref()))
        .collect();

    // Train in the compact space of indices that occur in the corpus; all
    // other weights would stay exactly zero.
    let mut features: Vec<u32> = sparse.iter().flat_map(|x| x.entries.iter().map(|e| e.0)).collect();
    features.sort_unstable();
    features.dedup();
    let compact: HashMap<u32, usize> = features.iter().enumerate().map(|(i, f)| (*f, i)).collect();
    let xs: Vec<Vec<(usize, f64)>> = sparse
        .iter()
        .map(|x| x.entries.iter().map(|(i, v)| (compact[i], *v)).collect())
        .collect();

    let n = corpus.len();
    let steps_per_epoch = n.div_ceil(hp.batch_size);
    let total_steps = steps_per_epoch * hp.epochs;
    let warmup = total_steps.div_ceil(10).max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(hp.seed);
    let orders: Vec<Vec<usize>> = (0..hp.epochs)
        .map(|_| {
            let mut o: Vec<usize> = (0..n).collect();
            o.shuffle(&mut rng);
            o
        })
        .collect();
    let problem = Problem {
        xs: &xs,
        dim: features.len(),
        orders: &orders,
        hp,
        total_steps,
        warmup,
    };

    let mut pos_weights = KindScores::splat(1.0);
    let mut degenerate = Vec::new();
    let labels: Vec<Vec<bool>> = Kind::ALL
        .iter()
        .map(|k| corpus.iter().map(|(_, l)| l.contains(*k)).collect())
        .collect();
    for (k, ys) in Kind::ALL.iter().zip(&labels) {
        let n_pos = ys.iter().filter(|y| **y).count();
        if n_pos == 0 {
            degenerate.push(*k);
        } else {
            let ratio = (n - n_pos) as f64 / n_pos as f64;
            pos_weights.set(*k, ratio.clamp(1.0, hp.max_pos_weight));
        }
    }
    let fits: Vec<KindFit> = Kind::ALL
        .par_iter()
        .map(|k| {
            fit_kind(
                &problem,
                &labels[k.index()],
                pos_weights.get(*k),
                degenerate.contains(k),
            )
        })
        .collect();

    let rows: Vec<(u32, [f64; KIND_COUNT])> = features
        .iter()
        .enumerate()
        .map(|(j, f)| {
            let mut row = [0.0; KIND_COUNT];
            for (r, fit) in row.iter_mut().zip(&fits) {
                *r = fit.w[j];
            }
            (*f, row)
        })
        .collect();
    let mut model = RouterModel::from_rows(spec.clone(), rows);
    model.idf = idf;
    model.version = 1;
    for (k, fit) in Kind::ALL.iter().zip(&fits) {
        model.bias.set(*k, fit.b);
    }
    let epoch_loss = (0..hp.epochs)
        .map(|e| fits.iter().map(|f| f.epoch_loss[e]).sum())
        .collect();
    let report = TrainReport {
        epoch_loss,
        steps: total_steps,
        degenerate_kinds: degenerate,
        pos_weights,
        active_features: model.active_features(),
    };
    Ok((model, report))
}

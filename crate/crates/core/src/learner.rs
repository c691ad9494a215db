//! Linear softmax classifier, trained from a frozen initialization by
//! momentum SGD on a loss that down-weights classifier-produced labels
//! early in the episode.

use std::borrow::Borrow;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pool::TrainingSet;
use crate::rng;
use crate::types::{ClassLabel, Instance, LabelSource, LabeledExample};

/// Classifier parameters: a `C × d` row-major weight matrix and `C` biases.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    classes: usize,
    dim: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl ModelParams {
    pub fn zeros(classes: usize, dim: usize) -> Self {
        Self {
            classes,
            dim,
            weights: vec![0.0; classes * dim],
            biases: vec![0.0; classes],
        }
    }

    pub fn from_parts(classes: usize, dim: usize, weights: Vec<f64>, biases: Vec<f64>) -> Result<Self> {
        if weights.len() != classes * dim {
            return Err(Error::Shape {
                expected: classes * dim,
                actual: weights.len(),
            });
        }
        if biases.len() != classes {
            return Err(Error::Shape {
                expected: classes,
                actual: biases.len(),
            });
        }
        Ok(Self {
            classes,
            dim,
            weights,
            biases,
        })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, class: usize) -> &[f64] {
        &self.weights[class * self.dim..(class + 1) * self.dim]
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().chain(&self.biases).all(|v| v.is_finite())
    }

    /// Number of scalar parameters (weights then biases).
    pub fn len(&self) -> usize {
        self.weights.len() + self.biases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flat view index `i` over weights then biases.
    pub fn get(&self, i: usize) -> f64 {
        if i < self.weights.len() {
            self.weights[i]
        } else {
            self.biases[i - self.weights.len()]
        }
    }

    pub fn get_mut(&mut self, i: usize) -> &mut f64 {
        let nw = self.weights.len();
        if i < nw {
            &mut self.weights[i]
        } else {
            &mut self.biases[i - nw]
        }
    }

    /// Affine class scores for a feature vector.
    pub fn scores(&self, features: &[f64]) -> Result<Vec<f64>> {
        if features.len() != self.dim {
            return Err(Error::Shape {
                expected: self.dim,
                actual: features.len(),
            });
        }
        Ok((0..self.classes)
            .map(|c| self.biases[c] + self.row(c).iter().zip(features).map(|(w, x)| w * x).sum::<f64>())
            .collect())
    }
}

/// Frozen starting point that every training round resets to.
#[derive(Clone, Debug, PartialEq)]
pub struct PretrainedParams(ModelParams);

impl PretrainedParams {
    pub fn new(params: ModelParams) -> Self {
        Self(params)
    }

    pub fn params(&self) -> &ModelParams {
        &self.0
    }
}

/// Deterministic small-magnitude initialization, uniform in `[-0.01, 0.01]`.
/// It never sees world or stream data.
pub fn pretrain(seed: u64, classes: usize, dim: usize) -> PretrainedParams {
    const SCALE: f64 = 0.01;
    let mut rng = rng::derived(seed, rng::tag::PRETRAIN);
    let mut p = ModelParams::zeros(classes, dim);
    for w in p.weights.iter_mut().chain(p.biases.iter_mut()) {
        *w = rng.random_range(-SCALE..=SCALE);
    }
    PretrainedParams(p)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub iterations: usize,
    pub t1: usize,
    pub t2: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            momentum: 0.9,
            batch_size: 64,
            iterations: 100,
            t1: 1000,
            t2: 2000,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidConfig(format!(
                "momentum must lie in [0, 1), got {}",
                self.momentum
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch size must be positive".into()));
        }
        if self.t1 > self.t2 {
            return Err(Error::InvalidConfig(format!(
                "T1 ({}) must not exceed T2 ({})",
                self.t1, self.t2
            )));
        }
        Ok(())
    }
}

fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in z.iter_mut() {
        *v /= sum;
    }
}

pub fn predict_proba_features(theta: &ModelParams, features: &[f64]) -> Result<Vec<f64>> {
    let mut z = theta.scores(features)?;
    softmax_in_place(&mut z);
    Ok(z)
}

/// Class posterior `f_θ(x)`.
pub fn predict_proba(theta: &ModelParams, x: &Instance) -> Result<Vec<f64>> {
    predict_proba_features(theta, &x.features)
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate().skip(1) {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

pub fn predict(theta: &ModelParams, x: &Instance) -> Result<ClassLabel> {
    let scores = theta.scores(&x.features)?;
    Ok(ClassLabel::from_index(argmax(&scores)))
}

/// Shannon entropy in nats, with `0 · log 0 = 0`.
pub fn entropy(p: &[f64]) -> Result<f64> {
    const TOL: f64 = 1e-6;
    if p.is_empty() {
        return Err(Error::InvalidDistribution("empty vector".into()));
    }
    if let Some(v) = p.iter().find(|v| !v.is_finite() || **v < -TOL || **v > 1.0 + TOL) {
        return Err(Error::InvalidDistribution(format!("entry {v} outside [0, 1]")));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > TOL {
        return Err(Error::InvalidDistribution(format!("entries sum to {sum}")));
    }
    Ok(p.iter()
        .filter(|v| **v > 0.0)
        .map(|v| -v * v.ln())
        .sum::<f64>()
        .max(0.0))
}

/// Entropy of the classifier posterior for one instance.
pub fn instance_entropy(theta: &ModelParams, x: &Instance) -> Result<f64> {
    entropy(&predict_proba(theta, x)?)
}

/// Weight of the classifier-pseudo-label loss term as a function of n(D):
/// 0 below `t1`, a linear ramp up to `t2`, 1 from `t2` on. With `t1 == t2`
/// it is a step at `t1`.
pub fn alpha(n_d: usize, t1: usize, t2: usize) -> f64 {
    if n_d < t1 {
        0.0
    } else if n_d < t2 {
        (n_d - t1) as f64 / (t2 - t1) as f64
    } else {
        1.0
    }
}

fn cross_entropy(theta: &ModelParams, ex: &LabeledExample) -> Result<f64> {
    let z = theta.scores(&ex.instance.features)?;
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    Ok(lse - z[ex.label().index()])
}

fn is_anchor(ex: &LabeledExample) -> bool {
    ex.source() != LabelSource::Classifier
}

/// Composite batch loss: mean cross-entropy over identifier- and
/// human-labeled examples plus `alpha(n_d)` times the mean cross-entropy
/// over classifier-labeled examples. An empty group contributes zero.
pub fn loss<B: Borrow<LabeledExample>>(theta: &ModelParams, batch: &[B], n_d: usize, cfg: &TrainConfig) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Precondition("loss needs a non-empty batch"));
    }
    let (mut anchor, mut n_anchor, mut pseudo, mut n_pseudo) = (0.0, 0usize, 0.0, 0usize);
    for ex in batch {
        let ex = ex.borrow();
        let ce = cross_entropy(theta, ex)?;
        if is_anchor(ex) {
            anchor += ce;
            n_anchor += 1;
        } else {
            pseudo += ce;
            n_pseudo += 1;
        }
    }
    let mut total = 0.0;
    if n_anchor > 0 {
        total += anchor / n_anchor as f64;
    }
    if n_pseudo > 0 {
        total += alpha(n_d, cfg.t1, cfg.t2) * pseudo / n_pseudo as f64;
    }
    Ok(total)
}

/// Analytic gradient of [`loss`] with respect to every parameter, laid out
/// like `ModelParams`.
pub fn loss_gradient<B: Borrow<LabeledExample>>(
    theta: &ModelParams,
    batch: &[B],
    n_d: usize,
    cfg: &TrainConfig,
) -> Result<ModelParams> {
    if batch.is_empty() {
        return Err(Error::Precondition("loss needs a non-empty batch"));
    }
    let n_anchor = batch.iter().filter(|ex| is_anchor((*ex).borrow())).count();
    let n_pseudo = batch.len() - n_anchor;
    let a = alpha(n_d, cfg.t1, cfg.t2);
    let anchor_w = if n_anchor > 0 { 1.0 / n_anchor as f64 } else { 0.0 };
    let pseudo_w = if n_pseudo > 0 { a / n_pseudo as f64 } else { 0.0 };

    let mut grad = ModelParams::zeros(theta.classes, theta.dim);
    let dim = theta.dim;
    for ex in batch {
        let ex = ex.borrow();
        let w = if is_anchor(ex) { anchor_w } else { pseudo_w };
        if w == 0.0 {
            continue;
        }
        let x = &ex.instance.features;
        let mut p = theta.scores(x)?;
        softmax_in_place(&mut p);
        p[ex.label().index()] -= 1.0;
        for (c, g) in p.iter().enumerate() {
            let g = w * g;
            grad.biases[c] += g;
            for (gw, xi) in grad.weights[c * dim..(c + 1) * dim].iter_mut().zip(x) {
                *gw += g * xi;
            }
        }
    }
    Ok(grad)
}

/// Resets to `init` and runs `cfg.iterations` momentum-SGD steps on
/// mini-batches drawn uniformly with replacement from `d`.
///
/// Update rule: `v ← μ·v + ∇L`, `θ ← θ − η·v`.
pub fn train<R: Rng + ?Sized>(
    init: &PretrainedParams,
    d: &TrainingSet,
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<ModelParams> {
    if d.is_empty() {
        return Err(Error::Precondition("training needs at least one example"));
    }
    let examples = d.examples();
    let n_d = examples.len();
    let batch_size = cfg.batch_size.min(n_d);

    let mut theta = init.params().clone();
    let mut velocity = ModelParams::zeros(theta.classes, theta.dim);
    let mut batch: Vec<&LabeledExample> = Vec::with_capacity(batch_size);

    for _ in 0..cfg.iterations {
        batch.clear();
        batch.extend((0..batch_size).map(|_| &examples[rng.random_range(0..n_d)]));
        let grad = loss_gradient(&theta, &batch, n_d, cfg)?;
        for i in 0..theta.len() {
            let v = velocity.get_mut(i);
            *v = cfg.momentum * *v + grad.get(i);
            *theta.get_mut(i) -= cfg.learning_rate * *v;
        }
    }

    if !theta.is_finite() {
        return Err(Error::InvalidConfig(
            "training diverged to non-finite parameters; lower the learning rate".into(),
        ));
    }
    Ok(theta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pool::TrainingSet;
    use crate::types::InstanceId;

    fn inst(features: Vec<f64>, class: usize) -> Instance {
        Instance::new(
            InstanceId { object: 0, view: 0 },
            features,
            ClassLabel::from_index(class),
            0.0,
            false,
        )
    }

    fn ex(features: Vec<f64>, class: usize, source: LabelSource) -> LabeledExample {
        LabeledExample::new(inst(features, class), ClassLabel::from_index(class), source)
    }

    #[test]
    fn zero_params_give_uniform_posterior() {
        let theta = ModelParams::zeros(4, 3);
        let p = predict_proba(&theta, &inst(vec![1.0, -2.0, 0.5], 0)).unwrap();
        assert!(p.iter().all(|v| (v - 0.25).abs() < 1e-15));
    }

    #[test]
    fn softmax_is_shift_invariant() {
        let mut theta = pretrain(3, 5, 4).params().clone();
        let x = inst(vec![0.3, -1.0, 2.0, 0.1], 0);
        let p = predict_proba(&theta, &x).unwrap();
        theta.biases.iter_mut().for_each(|b| *b += 123.0);
        let q = predict_proba(&theta, &x).unwrap();
        for (a, b) in p.iter().zip(&q) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn dimension_mismatch_is_a_shape_error() {
        let theta = ModelParams::zeros(3, 4);
        assert!(matches!(
            predict_proba(&theta, &inst(vec![1.0; 3], 0)),
            Err(Error::Shape { expected: 4, actual: 3 })
        ));
    }

    #[test]
    fn entropy_reference_values() {
        let uniform = vec![0.01; 100];
        assert!((entropy(&uniform).unwrap() - 100f64.ln()).abs() < 1e-9);
        assert!((100f64.ln() - 4.6052).abs() < 1e-4);
        assert_eq!(entropy(&[0.0, 1.0, 0.0]).unwrap(), 0.0);
        // -(0.7 ln 0.7 + 0.2 ln 0.2 + 0.1 ln 0.1)
        let e = entropy(&[0.7, 0.2, 0.1]).unwrap();
        assert!((e - 0.801_818_9).abs() < 1e-6, "{e}");
    }

    #[test]
    fn entropy_rejects_off_simplex() {
        assert!(matches!(entropy(&[0.5, 0.6]), Err(Error::InvalidDistribution(_))));
        assert!(entropy(&[1.2, -0.2]).is_err());
        assert!(entropy(&[]).is_err());
    }

    #[test]
    fn alpha_branches() {
        assert_eq!(alpha(999, 1000, 2000), 0.0);
        assert_eq!(alpha(1000, 1000, 2000), 0.0);
        assert_eq!(alpha(1500, 1000, 2000), 0.5);
        assert_eq!(alpha(2000, 1000, 2000), 1.0);
        assert_eq!(alpha(5000, 1000, 2000), 1.0);
        assert_eq!(alpha(99, 100, 100), 0.0);
        assert_eq!(alpha(100, 100, 100), 1.0);
    }

    #[test]
    fn human_only_batch_is_plain_cross_entropy() {
        let theta = pretrain(1, 3, 2).params().clone();
        let batch = vec![
            ex(vec![1.0, 0.0], 0, LabelSource::Human),
            ex(vec![0.0, 1.0], 2, LabelSource::Human),
        ];
        let mean_ce = batch.iter().map(|e| cross_entropy(&theta, e).unwrap()).sum::<f64>() / 2.0;
        let cfg = TrainConfig::default();
        for n_d in [0, 1500, 5000] {
            assert!((loss(&theta, &batch, n_d, &cfg).unwrap() - mean_ce).abs() < 1e-15);
        }
    }

    #[test]
    fn classifier_only_batch_before_ramp_has_zero_loss() {
        let theta = pretrain(1, 3, 2).params().clone();
        let batch = vec![ex(vec![1.0, 0.0], 0, LabelSource::Classifier)];
        assert_eq!(loss(&theta, &batch, 10, &TrainConfig::default()).unwrap(), 0.0);
    }

    #[test]
    fn mixed_batch_combines_terms() {
        let theta = pretrain(2, 3, 2).params().clone();
        let anchors = vec![
            ex(vec![1.0, 0.5], 0, LabelSource::Human),
            ex(vec![-1.0, 0.5], 1, LabelSource::Identifier),
        ];
        let pseudo = vec![ex(vec![0.2, -1.0], 2, LabelSource::Classifier)];
        let cfg = TrainConfig::default();
        let l_h = loss(&theta, &anchors, 1500, &cfg).unwrap();
        let l_c = cross_entropy(&theta, &pseudo[0]).unwrap();
        let mixed: Vec<_> = anchors.iter().chain(&pseudo).collect();
        let l = loss(&theta, &mixed, 1500, &cfg).unwrap();
        assert!((l - (l_h + 0.5 * l_c)).abs() < 1e-14);
    }

    #[test]
    fn empty_batch_is_rejected() {
        let theta = ModelParams::zeros(2, 2);
        let empty: Vec<LabeledExample> = Vec::new();
        assert!(loss(&theta, &empty, 0, &TrainConfig::default()).is_err());
    }

    fn separable_set() -> TrainingSet {
        let mut d = TrainingSet::new(2);
        for i in 0..20 {
            let t = i as f64 / 20.0;
            d.add_labeled(ex(vec![1.0 + t, 0.5 - t], 0, LabelSource::Human))
                .unwrap();
            d.add_labeled(ex(vec![-1.0 - t, t - 0.5], 1, LabelSource::Human))
                .unwrap();
        }
        d
    }

    #[test]
    fn zero_iterations_returns_init() {
        let init = pretrain(5, 2, 2);
        let cfg = TrainConfig {
            iterations: 0,
            ..TrainConfig::default()
        };
        let theta = train(&init, &separable_set(), &cfg, &mut rng::seeded(0)).unwrap();
        assert_eq!(&theta, init.params());
    }

    #[test]
    fn separable_data_is_fit_exactly() {
        let d = separable_set();
        let cfg = TrainConfig {
            iterations: 500,
            ..TrainConfig::default()
        };
        let theta = train(&pretrain(5, 2, 2), &d, &cfg, &mut rng::seeded(0)).unwrap();
        let correct = d
            .examples()
            .iter()
            .filter(|e| predict(&theta, &e.instance).unwrap() == e.label())
            .count();
        assert_eq!(correct, d.len());
    }

    #[test]
    fn training_is_deterministic() {
        let d = separable_set();
        let cfg = TrainConfig::default();
        let a = train(&pretrain(5, 2, 2), &d, &cfg, &mut rng::seeded(9)).unwrap();
        let b = train(&pretrain(5, 2, 2), &d, &cfg, &mut rng::seeded(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_training_set_is_rejected() {
        let d = TrainingSet::new(2);
        assert!(matches!(
            train(&pretrain(5, 2, 2), &d, &TrainConfig::default(), &mut rng::seeded(0)),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn pretrained_entries_are_small_and_reproducible() {
        let a = pretrain(11, 10, 16);
        assert_eq!(a, pretrain(11, 10, 16));
        assert!((0..a.params().len()).all(|i| a.params().get(i).abs() <= 0.1));
        assert_ne!(a, pretrain(12, 10, 16));
    }

    #[test]
    fn argmax_prefers_lowest_index() {
        assert_eq!(argmax(&[0.2, 0.5, 0.5]), 1);
        assert_eq!(argmax(&[0.1, 0.1, 0.1]), 0);
    }
}

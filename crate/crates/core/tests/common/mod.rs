//! Exhaustive-scan oracles and random case generators shared by the
//! integration tests. The oracles recompute everything from the raw
//! parameters without going through the library's softmax or argmax.

#![allow(dead_code)]

use raal_core::types::{ClassLabel, Instance, InstanceId, LabelSource, LabeledExample, WeakBundle};
use raal_core::ModelParams;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Posterior via `p_c = 1 / Σ_k exp(s_k − s_c)`.
pub fn oracle_proba(theta: &ModelParams, x: &[f64]) -> Vec<f64> {
    let c = theta.classes();
    let s: Vec<f64> = (0..c)
        .map(|k| theta.biases[k] + theta.row(k).iter().zip(x).map(|(w, v)| w * v).sum::<f64>())
        .collect();
    (0..c)
        .map(|j| 1.0 / s.iter().map(|sk| (sk - s[j]).exp()).sum::<f64>())
        .collect()
}

pub fn oracle_entropy(p: &[f64]) -> f64 {
    p.iter().filter(|v| **v > 0.0).map(|v| -v * v.ln()).sum()
}

/// Smallest view index whose entropy is at least every other view's.
pub fn oracle_select_target(theta: &ModelParams, bundle: &WeakBundle) -> usize {
    let e: Vec<f64> = bundle
        .views
        .iter()
        .map(|x| oracle_entropy(&oracle_proba(theta, &x.features)))
        .collect();
    (0..e.len())
        .find(|&i| e.iter().all(|ej| e[i] >= *ej))
        .expect("non-empty bundle")
}

/// Counts every possible label id and keeps the first one with the top
/// count.
pub fn oracle_vote(detections: &[Option<ClassLabel>], classes: usize) -> Option<ClassLabel> {
    let counts: Vec<usize> = (0..classes)
        .map(|c| detections.iter().filter(|d| d.map(|l| l.index()) == Some(c)).count())
        .collect();
    let top = *counts.iter().max()?;
    if top == 0 {
        return None;
    }
    counts.iter().position(|n| *n == top).map(ClassLabel::from_index)
}

/// Scans all (view, class) pairs in order and keeps the first pair holding
/// the maximum posterior.
pub fn oracle_classifier(theta: &ModelParams, bundle: &WeakBundle, threshold: f64) -> Option<(ClassLabel, f64)> {
    let pairs: Vec<(usize, f64)> = bundle
        .views
        .iter()
        .flat_map(|x| oracle_proba(theta, &x.features).into_iter().enumerate())
        .collect();
    let v = pairs.iter().map(|(_, p)| *p).fold(f64::NEG_INFINITY, f64::max);
    let (c, _) = pairs.iter().find(|(_, p)| *p == v)?;
    (v > threshold).then(|| (ClassLabel::from_index(*c), v))
}

pub fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(rand_distr::StandardNormal)
}

pub fn random_params<R: Rng + ?Sized>(rng: &mut R, classes: usize, dim: usize, scale: f64) -> ModelParams {
    let w = (0..classes * dim).map(|_| scale * normal(rng)).collect();
    let b = (0..classes).map(|_| scale * normal(rng)).collect();
    ModelParams::from_parts(classes, dim, w, b).unwrap()
}

pub fn instance(object: u64, view: u32, features: Vec<f64>, class: usize) -> Instance {
    Instance::new(
        InstanceId { object, view },
        features,
        ClassLabel::from_index(class),
        0.0,
        false,
    )
}

/// A random model, bundle and detection list. Some views are duplicated
/// to exercise tie rules.
pub struct BundleCase {
    pub classes: usize,
    pub theta: ModelParams,
    pub bundle: WeakBundle,
    pub detections: Vec<Option<ClassLabel>>,
    pub threshold: f64,
}

pub fn random_bundle_case(rng: &mut ChaCha8Rng) -> BundleCase {
    let classes = rng.random_range(2..=5);
    let dim = rng.random_range(1..=4);
    let n_sub = rng.random_range(1..=8);
    let scale = rng.random_range(0.1..5.0);
    let theta = random_params(rng, classes, dim, scale);
    let class = rng.random_range(0..classes);
    let mut views: Vec<Instance> = Vec::with_capacity(n_sub);
    for v in 0..n_sub {
        let features = if v > 0 && rng.random_bool(0.2) {
            views[rng.random_range(0..v)].features.clone()
        } else {
            (0..dim).map(|_| normal(rng)).collect()
        };
        views.push(instance(0, v as u32, features, class));
    }
    let detections = (0..n_sub)
        .map(|_| {
            rng.random_bool(0.4)
                .then(|| ClassLabel::from_index(rng.random_range(0..classes)))
        })
        .collect();
    BundleCase {
        classes,
        theta,
        bundle: WeakBundle {
            overhead: instance(0, InstanceId::OVERHEAD, (0..dim).map(|_| normal(rng)).collect(), class),
            views,
        },
        detections,
        threshold: rng.random_range(0.3..1.0),
    }
}

/// A random labeled batch mixing all three label sources.
pub fn random_batch<R: Rng + ?Sized>(rng: &mut R, classes: usize, dim: usize, len: usize) -> Vec<LabeledExample> {
    (0..len)
        .map(|i| {
            let class = rng.random_range(0..classes);
            let x = instance(i as u64, 0, (0..dim).map(|_| normal(rng)).collect(), class);
            let source = match rng.random_range(0..3) {
                0 => LabelSource::Identifier,
                1 => LabelSource::Classifier,
                _ => LabelSource::Human,
            };
            let label = ClassLabel::from_index(rng.random_range(0..classes));
            LabeledExample::new(x, label, source)
        })
        .collect()
}

/// Norm-wise relative error of the analytic gradient against central
/// finite differences of the loss.
pub fn gradient_relative_error(
    theta: &ModelParams,
    batch: &[LabeledExample],
    n_d: usize,
    cfg: &raal_core::TrainConfig,
) -> f64 {
    use raal_core::learner::{loss, loss_gradient};
    let h = 1e-6;
    let analytic = loss_gradient(theta, batch, n_d, cfg).unwrap();
    let (mut diff, mut na, mut nn) = (0.0f64, 0.0f64, 0.0f64);
    for i in 0..theta.len() {
        let mut plus = theta.clone();
        *plus.get_mut(i) += h;
        let mut minus = theta.clone();
        *minus.get_mut(i) -= h;
        let numeric = (loss(&plus, batch, n_d, cfg).unwrap() - loss(&minus, batch, n_d, cfg).unwrap()) / (2.0 * h);
        let a = analytic.get(i);
        diff += (a - numeric).powi(2);
        na += a * a;
        nn += numeric * numeric;
    }
    let scale = na.sqrt().max(nn.sqrt());
    if scale < 1e-12 {
        0.0
    } else {
        diff.sqrt() / scale
    }
}

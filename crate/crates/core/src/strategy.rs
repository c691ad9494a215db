//! Decision layer: the entropy query gate, target-view selection, the
//! two-path pseudo-labeler (identifier vote, then classifier confidence),
//! the human oracle and threshold annealing.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::learner::{argmax, instance_entropy, predict_proba, ModelParams};
use crate::types::{ClassLabel, Instance, LabelSource, LabeledExample, WeakBundle};

/// Gate thresholds for one episode.
///
/// The entropy threshold is stored as a base value plus a count of annealing
/// steps so that after `k` rounds it equals `base + k·step` without
/// accumulated rounding.
#[derive(Clone, Debug, PartialEq)]
pub struct StrategyState {
    base_entropy_threshold: f64,
    threshold_step: f64,
    rounds: u32,
    pub confidence_threshold: f64,
}

impl StrategyState {
    pub fn new(entropy_threshold: f64, threshold_step: f64, confidence_threshold: f64) -> Self {
        Self {
            base_entropy_threshold: entropy_threshold,
            threshold_step,
            rounds: 0,
            confidence_threshold,
        }
    }

    /// Current δ_E.
    pub fn entropy_threshold(&self) -> f64 {
        self.base_entropy_threshold + self.rounds as f64 * self.threshold_step
    }

    pub fn threshold_step(&self) -> f64 {
        self.threshold_step
    }

    /// Raises δ_E by one step. Called once after each training round.
    pub fn anneal_threshold(&mut self) {
        self.rounds += 1;
    }
}

/// Result of the two-path pseudo-labeler.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PseudoLabelOutcome {
    ByIdentifier(ClassLabel),
    ByClassifier { label: ClassLabel, confidence: f64 },
    Unresolved,
}

impl PseudoLabelOutcome {
    pub fn label(&self) -> Option<(ClassLabel, LabelSource)> {
        match *self {
            Self::ByIdentifier(l) => Some((l, LabelSource::Identifier)),
            Self::ByClassifier { label, .. } => Some((label, LabelSource::Classifier)),
            Self::Unresolved => None,
        }
    }
}

/// Query gate: ask for a label iff the overhead view's entropy strictly
/// exceeds δ_E.
pub fn should_query(theta: &ModelParams, overhead: &Instance, state: &StrategyState) -> Result<bool> {
    Ok(instance_entropy(theta, overhead)? > state.entropy_threshold())
}

/// The sweep view with maximum entropy (0-based index; ties go to the
/// earliest view). The overhead view is not a candidate.
pub fn select_target<'b>(theta: &ModelParams, bundle: &'b WeakBundle) -> Result<(usize, &'b Instance)> {
    if bundle.is_empty() {
        return Err(Error::Precondition("bundle has no views"));
    }
    let mut best = 0;
    let mut best_e = f64::NEG_INFINITY;
    for (i, x) in bundle.views.iter().enumerate() {
        let e = instance_entropy(theta, x)?;
        if e > best_e {
            best = i;
            best_e = e;
        }
    }
    Ok((best, &bundle.views[best]))
}

/// Modal label among the detections that fired. Ties go to the smallest
/// class id; no detections means no label.
pub fn identifier_vote(detections: &[Option<ClassLabel>]) -> Option<ClassLabel> {
    let mut counts: BTreeMap<ClassLabel, usize> = BTreeMap::new();
    for l in detections.iter().flatten() {
        *counts.entry(*l).or_default() += 1;
    }
    let mut best: Option<(ClassLabel, usize)> = None;
    for (l, n) in counts {
        if best.is_none_or(|(_, m)| n > m) {
            best = Some((l, n));
        }
    }
    best.map(|(l, _)| l)
}

/// Highest posterior over all (view, class) pairs of the bundle. Fires only
/// when it strictly exceeds `confidence_threshold`; ties go to the earliest
/// view, then the smallest class id.
pub fn classifier_pseudo(
    theta: &ModelParams,
    bundle: &WeakBundle,
    confidence_threshold: f64,
) -> Result<PseudoLabelOutcome> {
    if bundle.is_empty() {
        return Err(Error::Precondition("bundle has no views"));
    }
    let mut best: Option<(f64, usize)> = None;
    for x in &bundle.views {
        let p = predict_proba(theta, x)?;
        let c = argmax(&p);
        if best.is_none_or(|(v, _)| p[c] > v) {
            best = Some((p[c], c));
        }
    }
    let (v, c) = best.expect("bundle is non-empty");
    if v > confidence_threshold {
        Ok(PseudoLabelOutcome::ByClassifier {
            label: ClassLabel::from_index(c),
            confidence: v,
        })
    } else {
        Ok(PseudoLabelOutcome::Unresolved)
    }
}

/// Target view and the label (if any) the pseudo-labeler attaches to it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnsembleDecision {
    pub target: usize,
    pub outcome: PseudoLabelOutcome,
}

/// Identifier vote first; the classifier path is consulted only when no
/// identifier was read. Whatever label results is paired with the
/// max-entropy target view, even if the confidence came from another view.
pub fn ensemble_label(
    theta: &ModelParams,
    bundle: &WeakBundle,
    detections: &[Option<ClassLabel>],
    confidence_threshold: f64,
) -> Result<EnsembleDecision> {
    let (target, _) = select_target(theta, bundle)?;
    let outcome = match identifier_vote(detections) {
        Some(l) => PseudoLabelOutcome::ByIdentifier(l),
        None => classifier_pseudo(theta, bundle, confidence_threshold)?,
    };
    Ok(EnsembleDecision { target, outcome })
}

/// Perfect human annotator that counts every label it hands out.
#[derive(Clone, Debug, Default)]
pub struct HumanOracle {
    cost: usize,
}

impl HumanOracle {
    pub fn new() -> Self {
        Self::default()
    }

    /// Annotation cost so far.
    pub fn cost(&self) -> usize {
        self.cost
    }

    pub fn label_one(&mut self, x: Instance) -> LabeledExample {
        self.cost += 1;
        let label = x.true_class();
        LabeledExample::new(x, label, LabelSource::Human)
    }

    pub fn human_label(&mut self, drawn: Vec<Instance>) -> Vec<LabeledExample> {
        drawn.into_iter().map(|x| self.label_one(x)).collect()
    }
}

//! The two evolving data pools of an episode: the labeled training set `D`
//! and the pool `U` of queried views that could not be pseudo-labeled.

use std::collections::HashSet;

use rand::Rng;

use crate::error::{Error, Result};
use crate::types::{Instance, InstanceId, LabelSource, LabeledExample};

/// Append-only training set with per-class bookkeeping.
#[derive(Clone, Debug)]
pub struct TrainingSet {
    classes: usize,
    examples: Vec<LabeledExample>,
    counts: Vec<usize>,
    initial: usize,
}

/// Number of examples in `D` by label provenance. Pre-loaded examples are
/// reported separately from oracle-labeled ones so that the human count is
/// exactly the annotation cost.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SourceCounts {
    pub identifier: usize,
    pub classifier: usize,
    pub classifier_correct: usize,
    pub human: usize,
    pub initial: usize,
}

impl SourceCounts {
    pub fn total(&self) -> usize {
        self.identifier + self.classifier + self.human + self.initial
    }
}

impl TrainingSet {
    pub fn new(classes: usize) -> Self {
        Self {
            classes,
            examples: Vec::new(),
            counts: vec![0; classes],
            initial: 0,
        }
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    /// n(D).
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn examples(&self) -> &[LabeledExample] {
        &self.examples
    }

    pub fn add_labeled(&mut self, ex: LabeledExample) -> Result<()> {
        let label = ex.label();
        if label.id() == 0 || label.index() >= self.classes {
            return Err(Error::InvalidLabel {
                label: label.id(),
                classes: self.classes,
            });
        }
        self.counts[label.index()] += 1;
        self.examples.push(ex);
        Ok(())
    }

    /// Adds an example that existed before the episode started. It must be
    /// human-sourced and is never charged as annotation cost.
    pub fn add_initial(&mut self, ex: LabeledExample) -> Result<()> {
        if self.initial != self.examples.len() {
            return Err(Error::Precondition("initial examples must precede streamed ones"));
        }
        if ex.source() != LabelSource::Human {
            return Err(Error::Precondition("initial examples are human-labeled"));
        }
        self.add_labeled(ex)?;
        self.initial += 1;
        Ok(())
    }

    pub fn initial_len(&self) -> usize {
        self.initial
    }

    pub fn counts_per_class(&self) -> Vec<usize> {
        self.counts.clone()
    }

    pub fn source_counts(&self) -> SourceCounts {
        let mut out = SourceCounts {
            initial: self.initial,
            ..SourceCounts::default()
        };
        for ex in &self.examples[self.initial..] {
            match ex.source() {
                LabelSource::Identifier => out.identifier += 1,
                LabelSource::Classifier => {
                    out.classifier += 1;
                    if ex.is_correct() {
                        out.classifier_correct += 1;
                    }
                }
                LabelSource::Human => out.human += 1,
            }
        }
        out
    }
}

/// Pool of unlabeled target views awaiting human annotation.
#[derive(Clone, Debug, Default)]
pub struct UnlabeledPool {
    items: Vec<Instance>,
    ids: HashSet<InstanceId>,
}

impl UnlabeledPool {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn items(&self) -> &[Instance] {
        &self.items
    }

    pub fn add_unlabeled(&mut self, x: Instance) -> Result<()> {
        if !self.ids.insert(x.id) {
            return Err(Error::DuplicateInstance(x.id));
        }
        self.items.push(x);
        Ok(())
    }

    /// Removes and returns `floor(n/2)` items drawn uniformly without
    /// replacement. Remaining items keep their relative order.
    pub fn draw_half<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Vec<Instance> {
        let n = self.items.len();
        let k = n / 2;
        if k == 0 {
            return Vec::new();
        }
        let picked = rand::seq::index::sample(rng, n, k).into_vec();
        let mut slots: Vec<Option<Instance>> = self.items.drain(..).map(Some).collect();
        let drawn: Vec<Instance> = picked
            .iter()
            .map(|&i| slots[i].take().expect("sample indices are distinct"))
            .collect();
        self.items = slots.into_iter().flatten().collect();
        for x in &drawn {
            self.ids.remove(&x.id);
        }
        drawn
    }
}

//! Domain types shared by every stage of an episode.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A 1-based object class id in `1..=C`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ClassLabel(u32);

impl ClassLabel {
    /// Checked constructor against the configured class count.
    pub fn new(id: u32, classes: usize) -> Result<Self> {
        if id == 0 || id as usize > classes {
            return Err(Error::InvalidLabel { label: id, classes });
        }
        Ok(Self(id))
    }

    /// Label for a 0-based row index of a probability vector.
    pub fn from_index(index: usize) -> Self {
        Self(index as u32 + 1)
    }

    pub fn id(self) -> u32 {
        self.0
    }

    /// 0-based position in probability vectors and count arrays.
    pub fn index(self) -> usize {
        self.0 as usize - 1
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Identity of a captured view: the object serial and the view slot within
/// its bundle. The overhead view uses slot `u32::MAX`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct InstanceId {
    pub object: u64,
    pub view: u32,
}

impl InstanceId {
    pub const OVERHEAD: u32 = u32::MAX;
}

impl fmt::Display for InstanceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.view == Self::OVERHEAD {
            write!(f, "{}/top", self.object)
        } else {
            write!(f, "{}/{}", self.object, self.view)
        }
    }
}

/// One captured view of a streamed object.
///
/// `true_class` is latent. Only the identifier detector, the human oracle
/// and evaluation code look at it.
#[derive(Clone, Debug, PartialEq)]
pub struct Instance {
    pub id: InstanceId,
    pub features: Vec<f64>,
    pub(crate) true_class: ClassLabel,
    pub view_angle: f64,
    pub identifier_visible: bool,
}

impl Instance {
    pub fn new(
        id: InstanceId,
        features: Vec<f64>,
        true_class: ClassLabel,
        view_angle: f64,
        identifier_visible: bool,
    ) -> Self {
        Self {
            id,
            features,
            true_class,
            view_angle,
            identifier_visible,
        }
    }

    /// Latent class. Oracle and evaluation use only.
    pub fn true_class(&self) -> ClassLabel {
        self.true_class
    }

    pub fn dim(&self) -> usize {
        self.features.len()
    }
}

/// The series of views captured around one queried object, plus the
/// overhead view that fed the query gate. All share one latent class.
#[derive(Clone, Debug)]
pub struct WeakBundle {
    pub views: Vec<Instance>,
    pub overhead: Instance,
}

impl WeakBundle {
    pub fn len(&self) -> usize {
        self.views.len()
    }

    pub fn is_empty(&self) -> bool {
        self.views.is_empty()
    }

    /// The shared latent class of the bundle.
    pub fn true_class(&self) -> ClassLabel {
        self.overhead.true_class
    }
}

/// Who produced a training label. Drives the split of the composite loss.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LabelSource {
    Identifier,
    Classifier,
    Human,
}

/// An instance with its assigned label and provenance.
#[derive(Clone, Debug)]
pub struct LabeledExample {
    pub instance: Instance,
    label: ClassLabel,
    source: LabelSource,
}

impl LabeledExample {
    pub fn new(instance: Instance, label: ClassLabel, source: LabelSource) -> Self {
        Self {
            instance,
            label,
            source,
        }
    }

    pub fn label(&self) -> ClassLabel {
        self.label
    }

    pub fn source(&self) -> LabelSource {
        self.source
    }

    /// Whether the assigned label matches the latent class.
    pub fn is_correct(&self) -> bool {
        self.label == self.instance.true_class
    }
}

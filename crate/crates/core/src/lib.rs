//! Simulation of robot-assisted stream-based active learning on a synthetic
//! conveyor belt.
//!
//! Objects stream past a robot one at a time. An entropy gate on an
//! overhead view decides whether an object is worth labeling; if so the
//! robot sweeps a series of views that all share one (unknown) class. The
//! highest-entropy view becomes the training target, and its label comes
//! from an identifier read on any view, from a confident classifier
//! prediction on any view, or, failing both, from a human who labels half
//! of the leftover pool before each retraining.
//!
//! Modules, bottom-up:
//!
//! - [`types`], [`pool`]: instances, weak bundles, the labeled set `D` and
//!   unlabeled pool `U`.
//! - [`worldsim`]: class prototypes, view generation and the identifier
//!   detector.
//! - [`learner`]: softmax classifier, entropy, the ramped composite loss and
//!   momentum SGD.
//! - [`strategy`]: query gate, target selection, pseudo-labeling, the human
//!   oracle.
//! - [`runner`]: full episodes for the three labeling methods.
//! - [`metrics`]: accuracy, cost curves, CSV output and aggregation.
//! - [`config`]: presets and the config file schema.

pub mod config;
pub mod error;
pub mod learner;
pub mod metrics;
pub mod pool;
pub mod rng;
pub mod runner;
pub mod strategy;
pub mod types;
pub mod worldsim;

pub use config::{parse_config, validate_config, Preset, ResolvedConfig, RunConfig};
pub use error::{Error, Result};
pub use learner::{alpha, entropy, predict_proba, pretrain, train, ModelParams, PretrainedParams, TrainConfig};
pub use metrics::{read_csv, read_log_dir, summarize, write_csv, CurvePoint, LogRow, PseudoLabelStats, Summary};
pub use pool::{SourceCounts, TrainingSet, UnlabeledPool};
pub use runner::{build_testset, run_episode, Experiment, Method, RoundRecord, RunLog, ScenarioKind, ScenarioSpec};
pub use strategy::{PseudoLabelOutcome, StrategyState};
pub use types::{ClassLabel, Instance, InstanceId, LabelSource, LabeledExample, WeakBundle};
pub use worldsim::{make_world, ObjectEvent, StreamConfig, World};

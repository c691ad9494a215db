//! Synthetic conveyor world.
//!
//! Each class has a unit-norm prototype in feature space. A streamed object
//! gets a random pose, which fixes a smooth angle-dependent displacement
//! `u(θ)` shared by all of its views, and a random identifier direction.
//! The robot sweeps an arc of view angles; a view sees the identifier only
//! when its angle is within `ω` of the identifier direction, so a bundle
//! either sees the marker on a contiguous run of views or not at all.

use std::f64::consts::{PI, TAU};

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng;
use crate::types::{ClassLabel, Instance, InstanceId, WeakBundle};

/// Angular span of the robot's capture sweep (160 degrees).
pub const SWEEP_ARC: f64 = 160.0 * PI / 180.0;

/// Fixed angle of the overhead capture.
pub const TOP_ANGLE: f64 = 1.5 * PI;

/// Harmonics in the pose displacement series.
const POSE_HARMONICS: usize = 2;

/// Share of the displacement variance carried by the angle-independent term,
/// which every view of an object (overhead included) has in common.
const POSE_SHARED_VARIANCE: f64 = 0.85;

/// Object serials at or above this value belong to the held-out test set.
pub const TEST_SERIAL_BASE: u64 = 1 << 63;
/// Object serials at or above this value (and below the test base) belong
/// to pre-loaded training data.
pub const INITIAL_SERIAL_BASE: u64 = 1 << 62;

#[derive(Clone, Debug, PartialEq)]
pub struct World {
    classes: usize,
    dim: usize,
    prototypes: Vec<Vec<f64>>,
    pub view_amplitude: f64,
    pub noise_scale: f64,
    pub seed: u64,
}

pub fn make_world(classes: usize, dim: usize, view_amplitude: f64, noise_scale: f64, seed: u64) -> Result<World> {
    if classes < 2 {
        return Err(Error::InvalidConfig(format!(
            "class count must be at least 2, got {classes}"
        )));
    }
    if dim < 2 {
        return Err(Error::InvalidConfig(format!(
            "feature dimension must be at least 2, got {dim}"
        )));
    }
    for (name, v) in [("view amplitude", view_amplitude), ("noise scale", noise_scale)] {
        if !v.is_finite() || v < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "{name} must be finite and non-negative, got {v}"
            )));
        }
    }

    let mut rng = rng::derived(seed, rng::tag::PROTOTYPES);
    let mut prototypes: Vec<Vec<f64>> = Vec::with_capacity(classes);
    while prototypes.len() < classes {
        let mut v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-12 {
            continue;
        }
        v.iter_mut().for_each(|x| *x /= norm);
        if prototypes.iter().any(|p| p == &v) {
            continue;
        }
        prototypes.push(v);
    }

    Ok(World {
        classes,
        dim,
        prototypes,
        view_amplitude,
        noise_scale,
        seed,
    })
}

impl World {
    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn prototypes(&self) -> &[Vec<f64>] {
        &self.prototypes
    }

    pub fn prototype(&self, class: ClassLabel) -> &[f64] {
        &self.prototypes[class.index()]
    }

    fn pose_rng(&self, pose_seed: u64) -> rand_chacha::ChaCha8Rng {
        rng::seeded(rng::derive(rng::derive(self.seed, rng::tag::POSE), pose_seed))
    }

    /// Renders one view of an object in a given pose. Consumes the noise
    /// draws for this view from `pose_rng`.
    fn render<R: Rng>(&self, class: ClassLabel, pose: &PoseDisplacement, angle: f64, pose_rng: &mut R) -> Vec<f64> {
        let noise_coord = self.noise_scale / (self.dim as f64).sqrt();
        let u = pose.at(angle);
        self.prototype(class)
            .iter()
            .zip(&u)
            .map(|(mu, ui)| {
                let eps: f64 = pose_rng.sample(StandardNormal);
                mu + self.view_amplitude * ui + noise_coord * eps
            })
            .collect()
    }

    /// A single view at an arbitrary angle, used for held-out test data and
    /// pre-loaded training data. The identifier flag is irrelevant there and
    /// set to false.
    pub fn single_view(&self, class: ClassLabel, pose_seed: u64, angle: f64, id: InstanceId) -> Instance {
        let mut prng = self.pose_rng(pose_seed);
        let pose = PoseDisplacement::draw(self.dim, &mut prng);
        let features = self.render(class, &pose, angle, &mut prng);
        Instance::new(id, features, class, angle.rem_euclid(TAU), false)
    }
}

/// Smooth per-object displacement field: a low-order trigonometric series
/// in the view angle with random vector coefficients, including a constant
/// term. `E|u(θ)|² = 1`.
struct PoseDisplacement {
    shared: Vec<f64>,
    cos: Vec<Vec<f64>>,
    sin: Vec<Vec<f64>>,
}

impl PoseDisplacement {
    fn draw<R: Rng>(dim: usize, rng: &mut R) -> Self {
        let scale = 1.0 / (dim as f64).sqrt();
        let mut coeffs = || -> Vec<Vec<f64>> {
            (0..POSE_HARMONICS)
                .map(|_| (0..dim).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect())
                .collect()
        };
        let cos = coeffs();
        let sin = coeffs();
        let shared = (0..dim).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect();
        Self { shared, cos, sin }
    }

    fn at(&self, angle: f64) -> Vec<f64> {
        let norm = ((1.0 - POSE_SHARED_VARIANCE) / POSE_HARMONICS as f64).sqrt();
        let shared = POSE_SHARED_VARIANCE.sqrt();
        let mut u: Vec<f64> = self.shared.iter().map(|a| shared * a).collect();
        for k in 0..POSE_HARMONICS {
            let (s, c) = ((k + 1) as f64 * angle).sin_cos();
            for (i, ui) in u.iter_mut().enumerate() {
                *ui += norm * (c * self.cos[k][i] + s * self.sin[k][i]);
            }
        }
        u
    }
}

/// One object arriving on the belt.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ObjectEvent {
    pub serial: u64,
    pub true_class: ClassLabel,
    pub identifier_direction: f64,
    pub pose_seed: u64,
}

/// Belt arrival process and capture geometry.
#[derive(Clone, Debug, PartialEq)]
pub struct StreamConfig {
    flow_probabilities: Vec<f64>,
    total: f64,
    pub visibility_halfwidth: f64,
    pub overhead_visible_prob: f64,
}

impl StreamConfig {
    pub fn new(flow_probabilities: Vec<f64>, visibility_halfwidth: f64, overhead_visible_prob: f64) -> Result<Self> {
        if flow_probabilities.len() < 2 {
            return Err(Error::InvalidConfig(
                "flow probabilities need one entry per class (at least 2)".into(),
            ));
        }
        if let Some(p) = flow_probabilities
            .iter()
            .find(|p| !p.is_finite() || **p < 0.0 || **p > 1.0)
        {
            return Err(Error::InvalidConfig(format!("flow probability {p} outside [0, 1]")));
        }
        let total: f64 = flow_probabilities.iter().sum();
        if total > 1.0 + 1e-9 {
            return Err(Error::InvalidConfig(format!("flow probabilities sum to {total} > 1")));
        }
        if !(visibility_halfwidth > 0.0 && visibility_halfwidth <= PI) {
            return Err(Error::InvalidConfig(format!(
                "visibility half-width {visibility_halfwidth} outside (0, π]"
            )));
        }
        if !(0.0..=1.0).contains(&overhead_visible_prob) {
            return Err(Error::InvalidConfig(format!(
                "overhead visibility probability {overhead_visible_prob} outside [0, 1]"
            )));
        }
        Ok(Self {
            flow_probabilities,
            total,
            visibility_halfwidth,
            overhead_visible_prob,
        })
    }

    /// Uniform arrivals, one object per tick.
    pub fn uniform(classes: usize, visibility_halfwidth: f64, overhead_visible_prob: f64) -> Result<Self> {
        Self::new(
            vec![1.0 / classes as f64; classes],
            visibility_halfwidth,
            overhead_visible_prob,
        )
    }

    pub fn flow_probabilities(&self) -> &[f64] {
        &self.flow_probabilities
    }

    /// Probability that an object arrives on a given tick.
    pub fn arrival_probability(&self) -> f64 {
        self.total.min(1.0)
    }
}

/// Advances the belt by one tick.
pub fn next_object<R: Rng + ?Sized>(cfg: &StreamConfig, rng: &mut R, serial: u64) -> Option<ObjectEvent> {
    if cfg.total <= 0.0 {
        return None;
    }
    let r: f64 = rng.random();
    let mut acc = 0.0;
    let mut class = None;
    for (i, p) in cfg.flow_probabilities.iter().enumerate() {
        acc += p;
        if r < acc {
            class = Some(ClassLabel::from_index(i));
            break;
        }
    }
    let true_class = class?;
    Some(ObjectEvent {
        serial,
        true_class,
        identifier_direction: rng.random_range(0.0..TAU),
        pose_seed: rng.random(),
    })
}

/// Angle of view `v` (0-based) in a sweep of `n_sub` views.
pub fn sweep_angle(v: usize, n_sub: usize) -> f64 {
    if n_sub <= 1 {
        SWEEP_ARC / 2.0
    } else {
        SWEEP_ARC * v as f64 / (n_sub - 1) as f64
    }
}

pub fn angular_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    d.min(TAU - d)
}

/// Captures the sweep of `n_sub` views plus the overhead view of one object.
/// Fully determined by the world seed and the event.
pub fn capture_bundle(world: &World, ev: &ObjectEvent, cfg: &StreamConfig, n_sub: usize) -> Result<WeakBundle> {
    if n_sub < 1 {
        return Err(Error::InvalidConfig("N_sub must be at least 1".into()));
    }
    let mut prng = world.pose_rng(ev.pose_seed);
    let pose = PoseDisplacement::draw(world.dim, &mut prng);

    let views = (0..n_sub)
        .map(|v| {
            let angle = sweep_angle(v, n_sub);
            let features = world.render(ev.true_class, &pose, angle, &mut prng);
            let visible = angular_distance(angle, ev.identifier_direction) < cfg.visibility_halfwidth;
            Instance::new(
                InstanceId {
                    object: ev.serial,
                    view: v as u32,
                },
                features,
                ev.true_class,
                angle,
                visible,
            )
        })
        .collect();

    let features = world.render(ev.true_class, &pose, TOP_ANGLE, &mut prng);
    let visible = prng.random::<f64>() < cfg.overhead_visible_prob;
    let overhead = Instance::new(
        InstanceId {
            object: ev.serial,
            view: InstanceId::OVERHEAD,
        },
        features,
        ev.true_class,
        TOP_ANGLE,
        visible,
    );

    Ok(WeakBundle { views, overhead })
}

/// Precise-or-silent identifier reader: returns the true class when the
/// marker is visible and the read does not miss, nothing otherwise.
pub fn detect_identifier<R: Rng + ?Sized>(x: &Instance, miss_rate: f64, rng: &mut R) -> Option<ClassLabel> {
    if !x.identifier_visible {
        return None;
    }
    if miss_rate > 0.0 && rng.random::<f64>() < miss_rate {
        return None;
    }
    Some(x.true_class)
}

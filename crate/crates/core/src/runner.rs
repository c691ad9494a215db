//! Episode orchestration: the stream loop for each labeling method, the
//! periodic retraining rounds, and multi-seed comparisons.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::learner::{pretrain, train, ModelParams, PretrainedParams};
use crate::metrics::{accuracy, class_split_counts};
use crate::pool::{SourceCounts, TrainingSet, UnlabeledPool};
use crate::rng;
use crate::strategy::{ensemble_label, should_query, HumanOracle, StrategyState};
use crate::types::{ClassLabel, Instance, InstanceId, LabelSource, LabeledExample};
use crate::worldsim::{
    capture_bundle, detect_identifier, make_world, next_object, sweep_angle, ObjectEvent, StreamConfig, World,
    INITIAL_SERIAL_BASE, SWEEP_ARC, TEST_SERIAL_BASE,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Method {
    /// Every arriving object is human-labeled on a random view.
    NonALRandom,
    /// Entropy gate, random view, human label.
    StandardAL,
    /// Entropy gate, max-entropy view, identifier/classifier pseudo-labels,
    /// human labels for half of the leftovers before each training.
    RobotAssistedAL,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::NonALRandom, Method::StandardAL, Method::RobotAssistedAL];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::NonALRandom => "non-al-random",
            Method::StandardAL => "standard-al",
            Method::RobotAssistedAL => "robot-assisted-al",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        match key.as_str() {
            "nonalrandom" | "random" => Ok(Method::NonALRandom),
            "standardal" | "standard" => Ok(Method::StandardAL),
            "robotassistedal" | "robotassisted" | "robot" => Ok(Method::RobotAssistedAL),
            _ => Err(Error::InvalidConfig(format!(
                "unknown method `{s}` (expected non-al-random, standard-al or robot-assisted-al)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ScenarioKind {
    /// Empty initial D, uniform stream.
    Base,
    /// Initial D pre-loaded for a subset of classes, uniform stream.
    Scenario1,
    /// Empty initial D, lower-half classes five times rarer on the belt.
    Scenario2,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 3] = [ScenarioKind::Base, ScenarioKind::Scenario1, ScenarioKind::Scenario2];

    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioKind::Base => "base",
            ScenarioKind::Scenario1 => "scenario1",
            ScenarioKind::Scenario2 => "scenario2",
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScenarioKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        match key.as_str() {
            "base" => Ok(ScenarioKind::Base),
            "scenario1" | "s1" => Ok(ScenarioKind::Scenario1),
            "scenario2" | "s2" => Ok(ScenarioKind::Scenario2),
            _ => Err(Error::InvalidConfig(format!(
                "unknown scenario `{s}` (expected base, scenario1 or scenario2)"
            ))),
        }
    }
}

macro_rules! string_serde {
    ($t:ty) => {
        impl From<$t> for String {
            fn from(v: $t) -> String {
                v.as_str().to_string()
            }
        }

        impl TryFrom<String> for $t {
            type Error = Error;

            fn try_from(s: String) -> Result<Self> {
                s.parse()
            }
        }
    };
}

string_serde!(Method);
string_serde!(ScenarioKind);

/// Resolved scenario: initial D composition and per-class belt probabilities.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioSpec {
    pub kind: ScenarioKind,
    pub initial_per_class: usize,
    /// Inclusive label range pre-loaded in Scenario 1.
    pub initial_classes: (ClassLabel, ClassLabel),
    pub stream_probabilities: Vec<f64>,
}

impl ScenarioSpec {
    /// Builds the scenario from a validated config. An explicit probability
    /// vector in the config overrides the scenario's default stream.
    pub fn from_config(kind: ScenarioKind, cfg: &RunConfig) -> Result<Self> {
        let classes = cfg.world.classes;
        let stream_probabilities = match &cfg.stream.probabilities {
            Some(p) => p.clone(),
            None => default_probabilities(kind, classes),
        };
        let (lo, hi) = cfg.stream.initial_classes.unwrap_or((classes / 2 + 1, classes));
        Ok(Self {
            kind,
            initial_per_class: cfg.stream.initial_per_class,
            initial_classes: (
                ClassLabel::new(lo as u32, classes)?,
                ClassLabel::new(hi as u32, classes)?,
            ),
            stream_probabilities,
        })
    }

    pub fn initial_count(&self) -> usize {
        match self.kind {
            ScenarioKind::Scenario1 => {
                self.initial_per_class * (self.initial_classes.1.index() + 1 - self.initial_classes.0.index())
            }
            _ => 0,
        }
    }
}

/// Base and Scenario 1 stream one object per tick uniformly. Scenario 2
/// gives lower-half classes weight 1 and upper-half classes weight 5,
/// normalized so exactly one object arrives per tick (1/300 vs 5/300 at
/// C = 100).
pub fn default_probabilities(kind: ScenarioKind, classes: usize) -> Vec<f64> {
    match kind {
        ScenarioKind::Base | ScenarioKind::Scenario1 => vec![1.0 / classes as f64; classes],
        ScenarioKind::Scenario2 => {
            let low = classes / 2;
            let total = (low + 5 * (classes - low)) as f64;
            (0..classes)
                .map(|c| if c < low { 1.0 / total } else { 5.0 / total })
                .collect()
        }
    }
}

/// State of the episode right after a training round (or at the end).
#[derive(Clone, Debug, PartialEq)]
pub struct RoundRecord {
    /// 1-based training round; the final record repeats the last count.
    pub round: usize,
    pub human_cost: usize,
    pub n_d: usize,
    pub class_counts: Vec<usize>,
    pub test_accuracy: f64,
    /// Entropy threshold in force for the next stretch of the stream.
    pub delta_e: f64,
    pub sources: SourceCounts,
    pub unlabeled: usize,
}

impl RoundRecord {
    pub fn split_counts(&self) -> (usize, usize) {
        class_split_counts(&self.class_counts)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunLog {
    pub method: Method,
    pub scenario: ScenarioKind,
    pub seed: u64,
    pub records: Vec<RoundRecord>,
    pub final_record: RoundRecord,
    /// Serials of objects that passed the query gate before the first
    /// training round.
    pub queried_before_first_round: Vec<u64>,
    pub ticks: u64,
    pub objects: u64,
    pub queried: u64,
    /// Whether δ_E was annealed after each round for this method.
    pub annealed: bool,
}

impl RunLog {
    /// Training-round records followed by the final record.
    pub fn all_records(&self) -> impl Iterator<Item = &RoundRecord> {
        self.records.iter().chain(std::iter::once(&self.final_record))
    }
}

/// Everything shared by the episodes of one comparison: the world, the
/// frozen initialization and the held-out test set.
#[derive(Clone, Debug)]
pub struct Experiment {
    pub config: RunConfig,
    pub world: World,
    pub pretrained: PretrainedParams,
    pub testset: Vec<Instance>,
}

impl Experiment {
    pub fn new(config: RunConfig) -> Result<Self> {
        config.validate()?;
        let w = &config.world;
        let world = make_world(w.classes, w.dim, w.sigma_view, w.sigma_noise, w.seed)?;
        let pretrained = pretrain(rng::derive(w.seed, rng::tag::PRETRAIN), w.classes, w.dim);
        let testset = build_testset(&world, config.eval.test_per_class, rng::derive(w.seed, rng::tag::TEST))?;
        Ok(Self {
            config,
            world,
            pretrained,
            testset,
        })
    }

    pub fn run_episode(&self, scenario: ScenarioKind, method: Method, seed: u64) -> Result<RunLog> {
        let spec = ScenarioSpec::from_config(scenario, &self.config)?;
        run_episode(
            &self.world,
            &spec,
            method,
            &self.config,
            &self.pretrained,
            &self.testset,
            seed,
        )
    }

    /// All `methods × seeds` episodes, in that nesting order, run in
    /// parallel on the current rayon pool.
    pub fn run_comparison(&self, scenario: ScenarioKind, methods: &[Method], seeds: &[u64]) -> Result<Vec<RunLog>> {
        if seeds.is_empty() {
            return Err(Error::Precondition("comparison needs at least one seed"));
        }
        let jobs: Vec<(Method, u64)> = methods
            .iter()
            .flat_map(|m| seeds.iter().map(move |s| (*m, *s)))
            .collect();
        jobs.par_iter()
            .map(|(m, s)| self.run_episode(scenario, *m, *s))
            .collect()
    }
}

/// `per_class` views of every class at random poses and sweep angles,
/// generated from `seed` with object serials disjoint from the stream.
pub fn build_testset(world: &World, per_class: usize, seed: u64) -> Result<Vec<Instance>> {
    if per_class < 1 {
        return Err(Error::InvalidConfig("test_per_class must be at least 1".into()));
    }
    let mut r = rng::seeded(seed);
    let mut out = Vec::with_capacity(per_class * world.classes());
    for c in 0..world.classes() {
        for _ in 0..per_class {
            let serial = TEST_SERIAL_BASE + out.len() as u64;
            let angle = r.random_range(0.0..=SWEEP_ARC);
            let pose: u64 = r.random();
            out.push(world.single_view(
                ClassLabel::from_index(c),
                pose,
                angle,
                InstanceId {
                    object: serial,
                    view: 0,
                },
            ));
        }
    }
    Ok(out)
}

fn preload(world: &World, spec: &ScenarioSpec, seed: u64, n_sub: usize, d: &mut TrainingSet) -> Result<()> {
    if spec.kind != ScenarioKind::Scenario1 {
        return Ok(());
    }
    let mut r = rng::derived(seed, rng::tag::INITIAL);
    let (lo, hi) = spec.initial_classes;
    let mut serial = INITIAL_SERIAL_BASE;
    for c in lo.index()..=hi.index() {
        for _ in 0..spec.initial_per_class {
            let view = r.random_range(0..n_sub);
            let pose: u64 = r.random();
            let label = ClassLabel::from_index(c);
            let x = world.single_view(
                label,
                pose,
                sweep_angle(view, n_sub),
                InstanceId {
                    object: serial,
                    view: view as u32,
                },
            );
            serial += 1;
            d.add_initial(LabeledExample::new(x, label, LabelSource::Human))?;
        }
    }
    Ok(())
}

struct Episode<'a> {
    method: Method,
    cfg: &'a RunConfig,
    pretrained: &'a PretrainedParams,
    testset: &'a [Instance],
    theta: ModelParams,
    state: StrategyState,
    d: TrainingSet,
    u: UnlabeledPool,
    oracle: HumanOracle,
    decide_rng: rand_chacha::ChaCha8Rng,
    train_rng: rand_chacha::ChaCha8Rng,
    records: Vec<RoundRecord>,
    anneal: bool,
}

impl Episode<'_> {
    fn record(&self, round: usize, test_accuracy: f64) -> RoundRecord {
        RoundRecord {
            round,
            human_cost: self.oracle.cost(),
            n_d: self.d.len(),
            class_counts: self.d.counts_per_class(),
            test_accuracy,
            delta_e: self.state.entropy_threshold(),
            sources: self.d.source_counts(),
            unlabeled: self.u.len(),
        }
    }

    fn training_round(&mut self) -> Result<()> {
        if self.method == Method::RobotAssistedAL {
            let drawn = self.u.draw_half(&mut self.decide_rng);
            for ex in self.oracle.human_label(drawn) {
                self.d.add_labeled(ex)?;
            }
        }
        self.theta = train(self.pretrained, &self.d, &self.cfg.train_config(), &mut self.train_rng)?;
        let acc = accuracy(&self.theta, self.testset)?;
        if self.anneal {
            self.state.anneal_threshold();
        }
        let rec = self.record(self.records.len() + 1, acc);
        debug_assert_eq!(rec.sources.total(), rec.n_d);
        self.records.push(rec);
        Ok(())
    }

    fn handle_object(&mut self, world: &World, stream: &StreamConfig, ev: &ObjectEvent) -> Result<bool> {
        let a = &self.cfg.algorithm;
        let bundle = capture_bundle(world, ev, stream, a.n_sub)?;
        match self.method {
            Method::NonALRandom => {
                let i = self.decide_rng.random_range(0..bundle.len());
                let ex = self.oracle.label_one(bundle.views[i].clone());
                self.d.add_labeled(ex)?;
                Ok(true)
            }
            Method::StandardAL => {
                if !should_query(&self.theta, &bundle.overhead, &self.state)? {
                    return Ok(false);
                }
                let i = self.decide_rng.random_range(0..bundle.len());
                let ex = self.oracle.label_one(bundle.views[i].clone());
                self.d.add_labeled(ex)?;
                Ok(true)
            }
            Method::RobotAssistedAL => {
                if !should_query(&self.theta, &bundle.overhead, &self.state)? {
                    return Ok(false);
                }
                let miss = self.cfg.stream.miss_rate;
                let detections: Vec<Option<ClassLabel>> = bundle
                    .views
                    .iter()
                    .map(|x| detect_identifier(x, miss, &mut self.decide_rng))
                    .collect();
                let decision = ensemble_label(&self.theta, &bundle, &detections, self.state.confidence_threshold)?;
                let target = bundle.views[decision.target].clone();
                match decision.outcome.label() {
                    Some((label, source)) => self.d.add_labeled(LabeledExample::new(target, label, source))?,
                    None => self.u.add_unlabeled(target)?,
                }
                Ok(true)
            }
        }
    }
}

/// Runs one episode until n(D) reaches N_max.
///
/// A training round fires whenever n(D) reaches the next multiple of
/// N_train, and once before the stream starts if D is pre-loaded.
pub fn run_episode(
    world: &World,
    scenario: &ScenarioSpec,
    method: Method,
    cfg: &RunConfig,
    pretrained: &PretrainedParams,
    testset: &[Instance],
    seed: u64,
) -> Result<RunLog> {
    let a = &cfg.algorithm;
    let stream = StreamConfig::new(
        scenario.stream_probabilities.clone(),
        cfg.stream.omega,
        cfg.stream.overhead_visible_prob,
    )?;
    let mut stream_rng = rng::derived(seed, rng::tag::STREAM);

    let mut ep = Episode {
        method,
        cfg,
        pretrained,
        testset,
        theta: pretrained.params().clone(),
        state: StrategyState::new(a.delta_e, a.delta_e_step, a.delta_v),
        d: TrainingSet::new(world.classes()),
        u: UnlabeledPool::new(),
        oracle: HumanOracle::new(),
        decide_rng: rng::derived(seed, rng::tag::DECISIONS),
        train_rng: rng::derived(seed, rng::tag::TRAIN),
        records: Vec::new(),
        anneal: method == Method::RobotAssistedAL || a.anneal_baselines,
    };
    preload(world, scenario, seed, a.n_sub, &mut ep.d)?;

    let initial = ep.d.len();
    let n_max = if a.initial_counts_toward_nmax {
        a.n_max
    } else {
        a.n_max + initial
    };
    let next_multiple = |n: usize| (n / a.n_train + 1) * a.n_train;

    let mut next_train = next_multiple(ep.d.len());
    if initial > 0 {
        ep.training_round()?;
        next_train = next_multiple(ep.d.len());
    }

    let arrival = stream.arrival_probability();
    let max_ticks = if arrival > 0.0 {
        (10.0 * a.n_max as f64 / arrival).ceil() as u64
    } else {
        0
    };

    let mut ticks = 0u64;
    let mut objects = 0u64;
    let mut queried = 0u64;
    let mut queried_before_first_round = Vec::new();

    while ep.d.len() < n_max {
        if ticks >= max_ticks {
            return Err(Error::Stall {
                ticks,
                n_d: ep.d.len(),
                n_max,
            });
        }
        ticks += 1;
        let Some(ev) = next_object(&stream, &mut stream_rng, objects) else {
            continue;
        };
        objects += 1;
        if ep.handle_object(world, &stream, &ev)? {
            queried += 1;
            if ep.records.is_empty() {
                queried_before_first_round.push(ev.serial);
            }
        }
        if ep.d.len() >= next_train {
            ep.training_round()?;
            next_train = next_multiple(ep.d.len());
        }
    }

    let last_acc = match ep.records.last() {
        Some(r) => r.test_accuracy,
        None => accuracy(&ep.theta, testset)?,
    };
    let final_record = ep.record(ep.records.len(), last_acc);

    Ok(RunLog {
        method,
        scenario: scenario.kind,
        seed,
        records: ep.records,
        final_record,
        queried_before_first_round,
        ticks,
        objects,
        queried,
        annealed: ep.anneal,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{Preset, RunConfig};

    fn desk() -> RunConfig {
        RunConfig::preset(Preset::Desk)
    }

    #[test]
    fn method_and_scenario_names_parse() {
        for m in Method::ALL {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
        }
        for s in ScenarioKind::ALL {
            assert_eq!(s.as_str().parse::<ScenarioKind>().unwrap(), s);
        }
        assert_eq!("RobotAssistedAL".parse::<Method>().unwrap(), Method::RobotAssistedAL);
        assert!("greedy".parse::<Method>().is_err());
    }

    #[test]
    fn scenario2_probabilities_have_one_to_five_split() {
        let p = default_probabilities(ScenarioKind::Scenario2, 100);
        assert!((p[0] - 1.0 / 300.0).abs() < 1e-15);
        assert!((p[99] - 5.0 / 300.0).abs() < 1e-15);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn testset_sizes() {
        let w = make_world(100, 8, 0.3, 0.1, 1).unwrap();
        assert_eq!(build_testset(&w, 10, 3).unwrap().len(), 1000);
        let w = make_world(5, 4, 0.3, 0.1, 1).unwrap();
        let t = build_testset(&w, 2, 3).unwrap();
        assert_eq!(t.len(), 10);
        for c in 0..5 {
            assert_eq!(t.iter().filter(|x| x.true_class().index() == c).count(), 2);
        }
        assert!(build_testset(&w, 0, 3).is_err());
    }

    #[test]
    fn scenario1_preloads_upper_half() {
        let cfg = desk();
        let spec = ScenarioSpec::from_config(ScenarioKind::Scenario1, &cfg).unwrap();
        assert_eq!(spec.initial_count(), 30 * cfg.world.classes / 2);
        let exp = Experiment::new(cfg).unwrap();
        let mut d = TrainingSet::new(exp.world.classes());
        preload(&exp.world, &spec, 1, 8, &mut d).unwrap();
        let counts = d.counts_per_class();
        assert!(counts[..5].iter().all(|&n| n == 0));
        assert!(counts[5..].iter().all(|&n| n == 30));
        assert_eq!(d.source_counts().initial, 150);
    }

    #[test]
    fn non_al_random_pays_for_everything() {
        let exp = Experiment::new(desk()).unwrap();
        let log = exp.run_episode(ScenarioKind::Base, Method::NonALRandom, 3).unwrap();
        for r in log.all_records() {
            assert_eq!(r.human_cost, r.n_d - r.sources.initial);
            assert_eq!(r.unlabeled, 0);
        }
        assert_eq!(log.final_record.n_d, exp.config.algorithm.n_max);
        assert_eq!(
            log.records.len(),
            exp.config.algorithm.n_max / exp.config.algorithm.n_train
        );
    }

    #[test]
    fn perfect_identifier_labels_everything_before_first_round() {
        let mut cfg = desk();
        cfg.stream.omega = std::f64::consts::PI;
        cfg.stream.miss_rate = 0.0;
        let exp = Experiment::new(cfg).unwrap();
        let log = exp.run_episode(ScenarioKind::Base, Method::RobotAssistedAL, 4).unwrap();
        assert_eq!(log.records[0].human_cost, 0);
        assert_eq!(log.records[0].unlabeled, 0);
        assert_eq!(log.records[0].sources.identifier, log.records[0].n_d);
    }

    #[test]
    fn episodes_are_deterministic() {
        let exp = Experiment::new(desk()).unwrap();
        let a = exp
            .run_episode(ScenarioKind::Scenario2, Method::RobotAssistedAL, 9)
            .unwrap();
        let b = exp
            .run_episode(ScenarioKind::Scenario2, Method::RobotAssistedAL, 9)
            .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn comparison_is_method_major_and_keyed_by_seed() {
        let exp = Experiment::new(desk()).unwrap();
        let logs = exp
            .run_comparison(ScenarioKind::Base, &[Method::StandardAL, Method::NonALRandom], &[2, 1])
            .unwrap();
        let keys: Vec<_> = logs.iter().map(|l| (l.method, l.seed)).collect();
        assert_eq!(
            keys,
            vec![
                (Method::StandardAL, 2),
                (Method::StandardAL, 1),
                (Method::NonALRandom, 2),
                (Method::NonALRandom, 1)
            ]
        );
        let single = exp
            .run_comparison(ScenarioKind::Base, &[Method::StandardAL], &[1])
            .unwrap();
        assert_eq!(single.len(), 1);
        assert_eq!(single[0], logs[1]);
        assert!(exp
            .run_comparison(ScenarioKind::Base, &[Method::StandardAL], &[])
            .is_err());
    }

    #[test]
    fn silent_stream_stalls() {
        let mut cfg = desk();
        cfg.stream.probabilities = Some(vec![0.0; cfg.world.classes]);
        let exp = Experiment::new(cfg).unwrap();
        assert!(matches!(
            exp.run_episode(ScenarioKind::Base, Method::NonALRandom, 1),
            Err(Error::Stall { .. })
        ));
    }
}

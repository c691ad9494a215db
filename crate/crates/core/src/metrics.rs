//! Reported quantities, the per-round CSV schema and multi-seed aggregation.
//!
//! Across seeds, accuracy is averaged on a human-cost axis: each seed's
//! curve is a step function that holds the accuracy of its latest record at
//! or below a given cost. Standard deviations are population (divide by n).

use std::collections::BTreeMap;
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::learner::{argmax, ModelParams};
use crate::pool::{SourceCounts, TrainingSet};
use crate::runner::{Method, RoundRecord, RunLog, ScenarioKind};
use crate::types::Instance;

/// Fraction of instances whose argmax class (ties to the smallest id)
/// equals the latent class.
pub fn accuracy(theta: &ModelParams, testset: &[Instance]) -> Result<f64> {
    if testset.is_empty() {
        return Err(Error::Precondition("accuracy needs a non-empty test set"));
    }
    let mut correct = 0usize;
    for x in testset {
        if argmax(&theta.scores(&x.features)?) == x.true_class().index() {
            correct += 1;
        }
    }
    Ok(correct as f64 / testset.len() as f64)
}

/// Sizes of the lower (`1..=floor(C/2)`) and upper class halves.
pub fn class_split_counts(counts: &[usize]) -> (usize, usize) {
    let mid = counts.len() / 2;
    (counts[..mid].iter().sum(), counts[mid..].iter().sum())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PseudoLabelStats {
    /// Accuracy of classifier pseudo-labels; 1.0 when there are none, in
    /// which case `accuracy_defined` is false.
    pub classifier_pseudo_accuracy: f64,
    pub accuracy_defined: bool,
    pub classifier_pseudo_ratio: f64,
    pub classifier_count: usize,
    pub identifier_count: usize,
    pub human_count: usize,
}

impl PseudoLabelStats {
    pub fn from_counts(s: &SourceCounts) -> Self {
        let n_d = s.total();
        let defined = s.classifier > 0;
        Self {
            classifier_pseudo_accuracy: if defined {
                s.classifier_correct as f64 / s.classifier as f64
            } else {
                1.0
            },
            accuracy_defined: defined,
            classifier_pseudo_ratio: if n_d > 0 { s.classifier as f64 / n_d as f64 } else { 0.0 },
            classifier_count: s.classifier,
            identifier_count: s.identifier,
            human_count: s.human,
        }
    }

    pub fn accuracy(&self) -> Option<f64> {
        self.accuracy_defined.then_some(self.classifier_pseudo_accuracy)
    }
}

pub fn pseudo_stats(d: &TrainingSet) -> PseudoLabelStats {
    PseudoLabelStats::from_counts(&d.source_counts())
}

/// A point on an accuracy-versus-annotation-cost curve.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurvePoint {
    pub human_cost: usize,
    pub n_d: usize,
    pub test_accuracy: f64,
    pub delta_e: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum RoundTag {
    Round(usize),
    Final,
}

/// One CSV row.
#[derive(Clone, Debug, PartialEq)]
pub struct LogRow {
    pub method: Method,
    pub scenario: ScenarioKind,
    pub seed: u64,
    pub round: RoundTag,
    pub point: CurvePoint,
    pub n_low: usize,
    pub n_high: usize,
    pub pseudo_ratio: f64,
    pub pseudo_accuracy: Option<f64>,
    pub identifier_count: usize,
    pub human_count: usize,
    pub classifier_count: usize,
    pub initial_count: usize,
    pub unlabeled: usize,
}

impl LogRow {
    fn from_record(log: &RunLog, rec: &RoundRecord, round: RoundTag) -> Self {
        let stats = PseudoLabelStats::from_counts(&rec.sources);
        let (n_low, n_high) = rec.split_counts();
        Self {
            method: log.method,
            scenario: log.scenario,
            seed: log.seed,
            round,
            point: CurvePoint {
                human_cost: rec.human_cost,
                n_d: rec.n_d,
                test_accuracy: rec.test_accuracy,
                delta_e: rec.delta_e,
            },
            n_low,
            n_high,
            pseudo_ratio: stats.classifier_pseudo_ratio,
            pseudo_accuracy: stats.accuracy(),
            identifier_count: rec.sources.identifier,
            human_count: rec.sources.human,
            classifier_count: rec.sources.classifier,
            initial_count: rec.sources.initial,
            unlabeled: rec.unlabeled,
        }
    }
}

/// Rows for one run: one per training round, then the final record.
pub fn log_rows(log: &RunLog) -> Vec<LogRow> {
    log.records
        .iter()
        .map(|r| LogRow::from_record(log, r, RoundTag::Round(r.round)))
        .chain(std::iter::once(LogRow::from_record(
            log,
            &log.final_record,
            RoundTag::Final,
        )))
        .collect()
}

pub const CSV_HEADER: [&str; 17] = [
    "method",
    "scenario",
    "seed",
    "round",
    "human_cost",
    "n_D",
    "test_accuracy",
    "delta_E",
    "n_low",
    "n_high",
    "pseudo_ratio",
    "pseudo_accuracy",
    "identifier_count",
    "human_count",
    "classifier_count",
    "initial_count",
    "unlabeled",
];

/// Decimal notation with 6 significant digits.
pub fn fmt_sig6(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x.is_finite() { "0".into() } else { x.to_string() };
    }
    let magnitude = x.abs().log10().floor() as i32;
    let decimals = (5 - magnitude).max(0) as usize;
    format!("{x:.decimals$}")
}

fn row_fields(r: &LogRow) -> [String; 17] {
    [
        r.method.to_string(),
        r.scenario.to_string(),
        r.seed.to_string(),
        match r.round {
            RoundTag::Round(i) => i.to_string(),
            RoundTag::Final => "final".into(),
        },
        r.point.human_cost.to_string(),
        r.point.n_d.to_string(),
        fmt_sig6(r.point.test_accuracy),
        fmt_sig6(r.point.delta_e),
        r.n_low.to_string(),
        r.n_high.to_string(),
        fmt_sig6(r.pseudo_ratio),
        r.pseudo_accuracy.map(fmt_sig6).unwrap_or_default(),
        r.identifier_count.to_string(),
        r.human_count.to_string(),
        r.classifier_count.to_string(),
        r.initial_count.to_string(),
        r.unlabeled.to_string(),
    ]
}

/// Writes the rows of every log to `path`, header first.
pub fn write_csv(logs: &[RunLog], path: &Path) -> Result<()> {
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let file = File::create(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(CSV_HEADER).map_err(csv_err)?;
    for log in logs {
        for row in log_rows(log) {
            w.write_record(row_fields(&row)).map_err(csv_err)?;
        }
    }
    let mut inner = w.into_inner().map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e.into_error(),
    })?;
    inner.flush().map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Whether a CSV header line matches the run-log schema.
pub fn is_log_header(header: &csv::StringRecord) -> bool {
    header.iter().eq(CSV_HEADER.iter().copied())
}

pub fn read_csv(path: &Path) -> Result<Vec<LogRow>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|source| Error::Csv {
        path: path.to_path_buf(),
        source,
    })?;
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        message: format!("line {line}: {message}"),
    };
    let header = rdr
        .headers()
        .map_err(|source| Error::Csv {
            path: path.to_path_buf(),
            source,
        })?
        .clone();
    if !is_log_header(&header) {
        return Err(parse_err(1, "header does not match the run-log schema".into()));
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|source| Error::Csv {
            path: path.to_path_buf(),
            source,
        })?;
        let f = |k: usize| rec.get(k).unwrap_or("");
        fn num<T: std::str::FromStr>(s: &str, line: usize, col: &str) -> std::result::Result<T, (usize, String)> {
            s.parse().map_err(|_| (line, format!("bad {col} `{s}`")))
        }
        let parsed = (|| -> std::result::Result<LogRow, (usize, String)> {
            Ok(LogRow {
                method: f(0).parse().map_err(|e: Error| (line, e.to_string()))?,
                scenario: f(1).parse().map_err(|e: Error| (line, e.to_string()))?,
                seed: num(f(2), line, "seed")?,
                round: match f(3) {
                    "final" => RoundTag::Final,
                    s => RoundTag::Round(num(s, line, "round")?),
                },
                point: CurvePoint {
                    human_cost: num(f(4), line, "human_cost")?,
                    n_d: num(f(5), line, "n_D")?,
                    test_accuracy: num(f(6), line, "test_accuracy")?,
                    delta_e: num(f(7), line, "delta_E")?,
                },
                n_low: num(f(8), line, "n_low")?,
                n_high: num(f(9), line, "n_high")?,
                pseudo_ratio: num(f(10), line, "pseudo_ratio")?,
                pseudo_accuracy: match f(11) {
                    "" => None,
                    s => Some(num(s, line, "pseudo_accuracy")?),
                },
                identifier_count: num(f(12), line, "identifier_count")?,
                human_count: num(f(13), line, "human_count")?,
                classifier_count: num(f(14), line, "classifier_count")?,
                initial_count: num(f(15), line, "initial_count")?,
                unlabeled: num(f(16), line, "unlabeled")?,
            })
        })();
        rows.push(parsed.map_err(|(l, m)| parse_err(l, m))?);
    }
    Ok(rows)
}

/// Reads every run-log CSV directly inside `dir`, in file-name order.
/// CSVs with another header (such as a summary table) are skipped.
/// Returns the rows and the files they came from.
pub fn read_log_dir(dir: &Path) -> Result<(Vec<LogRow>, Vec<PathBuf>)> {
    let io = |source| Error::Io {
        path: dir.to_path_buf(),
        source,
    };
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(io)?
        .map(|e| e.map(|e| e.path()).map_err(io))
        .collect::<Result<_>>()?;
    paths.retain(|p| p.is_file() && p.extension().is_some_and(|e| e == "csv"));
    paths.sort();

    let mut rows = Vec::new();
    let mut used = Vec::new();
    for p in paths {
        let mut rdr = csv::Reader::from_path(&p).map_err(|source| Error::Csv {
            path: p.clone(),
            source,
        })?;
        let is_log = rdr.headers().map(is_log_header).unwrap_or(false);
        if !is_log {
            continue;
        }
        rows.extend(read_csv(&p)?);
        used.push(p);
    }
    if used.is_empty() {
        return Err(Error::NoData(dir.to_path_buf()));
    }
    Ok((rows, used))
}

/// Population mean and standard deviation. Empty input gives `(NaN, NaN)`.
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// The rows of one (method, scenario, seed) run, in file order.
#[derive(Clone, Debug)]
pub struct SeedCurve {
    pub seed: u64,
    pub rows: Vec<LogRow>,
}

impl SeedCurve {
    pub fn final_row(&self) -> &LogRow {
        self.rows
            .iter()
            .rev()
            .find(|r| r.round == RoundTag::Final)
            .unwrap_or_else(|| self.rows.last().expect("curves are non-empty"))
    }

    /// Accuracy of the latest row whose human cost is at most `cost`.
    pub fn accuracy_at(&self, cost: usize) -> Option<f64> {
        self.rows
            .iter()
            .rfind(|r| r.point.human_cost <= cost)
            .map(|r| r.point.test_accuracy)
    }
}

/// Groups rows into per-(method, scenario) lists of seed curves.
pub fn group_curves(rows: impl IntoIterator<Item = LogRow>) -> BTreeMap<(ScenarioKind, Method), Vec<SeedCurve>> {
    let mut by_run: BTreeMap<(ScenarioKind, Method, u64), Vec<LogRow>> = BTreeMap::new();
    for r in rows {
        by_run.entry((r.scenario, r.method, r.seed)).or_default().push(r);
    }
    let mut out: BTreeMap<(ScenarioKind, Method), Vec<SeedCurve>> = BTreeMap::new();
    for ((s, m, seed), rows) in by_run {
        out.entry((s, m)).or_default().push(SeedCurve { seed, rows });
    }
    out
}

/// Mean over seeds of the step-function accuracy at `cost`; `None` if some
/// seed has no record at or below that cost.
pub fn mean_accuracy_at(curves: &[SeedCurve], cost: usize) -> Option<f64> {
    let accs: Option<Vec<f64>> = curves.iter().map(|c| c.accuracy_at(cost)).collect();
    accs.filter(|a| !a.is_empty()).map(|a| mean_sd(&a).0)
}

/// Smallest human cost at which the mean accuracy curve reaches `target`.
pub fn cost_to_target(curves: &[SeedCurve], target: f64) -> Option<usize> {
    let mut costs: Vec<usize> = curves
        .iter()
        .flat_map(|c| c.rows.iter().map(|r| r.point.human_cost))
        .collect();
    costs.sort_unstable();
    costs.dedup();
    costs
        .into_iter()
        .find(|&c| mean_accuracy_at(curves, c).is_some_and(|a| a >= target))
}

#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub scenario: ScenarioKind,
    pub method: Method,
    pub seeds: usize,
    pub final_accuracy_mean: f64,
    pub final_accuracy_sd: f64,
    pub final_human_cost_mean: f64,
    pub final_n_d_mean: f64,
    pub pseudo_ratio_mean: f64,
    /// Mean over seeds that produced any classifier pseudo-labels.
    pub pseudo_accuracy_mean: Option<f64>,
    pub gap_mean: f64,
    pub target: Option<f64>,
    pub cost_to_target: Option<usize>,
}

/// Per-scenario ratio of Robot-Assisted AL's cost-to-target over Standard
/// AL's.
#[derive(Clone, Debug, PartialEq)]
pub struct CostRatio {
    pub scenario: ScenarioKind,
    pub target: f64,
    pub robot_cost: Option<usize>,
    pub standard_cost: Option<usize>,
    pub ratio: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Summary {
    pub rows: Vec<SummaryRow>,
    pub cost_ratios: Vec<CostRatio>,
}

/// Aggregates run-log rows. The accuracy target for cost-to-target is
/// `target_fraction` times Standard AL's final mean accuracy in the same
/// scenario; without Standard AL runs it is undefined.
pub fn summarize(rows: impl IntoIterator<Item = LogRow>, target_fraction: f64) -> Summary {
    let groups = group_curves(rows);
    let mut out = Vec::new();
    let mut ratios = Vec::new();

    let scenarios: Vec<ScenarioKind> = {
        let mut s: Vec<_> = groups.keys().map(|(s, _)| *s).collect();
        s.dedup();
        s
    };
    for scenario in scenarios {
        let target = groups
            .get(&(scenario, Method::StandardAL))
            .map(|c| target_fraction * final_accuracy(c).0);
        for ((s, method), curves) in groups.range((scenario, Method::NonALRandom)..=(scenario, Method::RobotAssistedAL))
        {
            debug_assert_eq!(*s, scenario);
            let finals: Vec<&LogRow> = curves.iter().map(|c| c.final_row()).collect();
            let (acc_mean, acc_sd) = final_accuracy(curves);
            let mean_of = |f: &dyn Fn(&LogRow) -> f64| mean_sd(&finals.iter().map(|r| f(r)).collect::<Vec<_>>()).0;
            let pseudo_accs: Vec<f64> = finals.iter().filter_map(|r| r.pseudo_accuracy).collect();
            out.push(SummaryRow {
                scenario,
                method: *method,
                seeds: curves.len(),
                final_accuracy_mean: acc_mean,
                final_accuracy_sd: acc_sd,
                final_human_cost_mean: mean_of(&|r| r.point.human_cost as f64),
                final_n_d_mean: mean_of(&|r| r.point.n_d as f64),
                pseudo_ratio_mean: mean_of(&|r| r.pseudo_ratio),
                pseudo_accuracy_mean: (!pseudo_accs.is_empty()).then(|| mean_sd(&pseudo_accs).0),
                gap_mean: mean_of(&|r| r.n_low.abs_diff(r.n_high) as f64),
                target,
                cost_to_target: target.and_then(|t| cost_to_target(curves, t)),
            });
        }
        if let Some(t) = target {
            let find = |m: Method| out.iter().find(|r| r.scenario == scenario && r.method == m);
            if let Some(robot) = find(Method::RobotAssistedAL) {
                let standard = find(Method::StandardAL).and_then(|r| r.cost_to_target);
                let robot_cost = robot.cost_to_target;
                ratios.push(CostRatio {
                    scenario,
                    target: t,
                    robot_cost,
                    standard_cost: standard,
                    ratio: match (robot_cost, standard) {
                        (Some(r), Some(s)) if s > 0 => Some(r as f64 / s as f64),
                        (Some(0), Some(0)) => Some(1.0),
                        _ => None,
                    },
                });
            }
        }
    }
    Summary {
        rows: out,
        cost_ratios: ratios,
    }
}

fn final_accuracy(curves: &[SeedCurve]) -> (f64, f64) {
    mean_sd(
        &curves
            .iter()
            .map(|c| c.final_row().point.test_accuracy)
            .collect::<Vec<_>>(),
    )
}

impl Summary {
    /// Plain-text table for terminals.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!(
            "{:<10} {:<18} {:>5} {:>18} {:>10} {:>8} {:>8} {:>9} {:>8} {:>10}\n",
            "scenario", "method", "seeds", "final_acc", "human_cost", "n_D", "pl_ratio", "pl_acc", "gap", "cost@tgt"
        ));
        for r in &self.rows {
            s.push_str(&format!(
                "{:<10} {:<18} {:>5} {:>8.4} ± {:<7.4} {:>10.1} {:>8.1} {:>8.4} {:>9} {:>8.1} {:>10}\n",
                r.scenario.as_str(),
                r.method.as_str(),
                r.seeds,
                r.final_accuracy_mean,
                r.final_accuracy_sd,
                r.final_human_cost_mean,
                r.final_n_d_mean,
                r.pseudo_ratio_mean,
                r.pseudo_accuracy_mean
                    .map(|a| format!("{a:.4}"))
                    .unwrap_or_else(|| "n/a".into()),
                r.gap_mean,
                r.cost_to_target.map(|c| c.to_string()).unwrap_or_else(|| "n/a".into()),
            ));
        }
        for c in &self.cost_ratios {
            s.push_str(&format!(
                "{}: cost ratio (robot-assisted / standard, target accuracy {:.4}) = {}\n",
                c.scenario,
                c.target,
                c.ratio.map(|r| format!("{r:.3}")).unwrap_or_else(|| "n/a".into())
            ));
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let csv_err = |source| Error::Csv {
            path: path.to_path_buf(),
            source,
        };
        let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
        w.write_record([
            "scenario",
            "method",
            "seeds",
            "final_accuracy_mean",
            "final_accuracy_sd",
            "final_human_cost_mean",
            "final_n_D_mean",
            "pseudo_ratio_mean",
            "pseudo_accuracy_mean",
            "gap_mean",
            "target_accuracy",
            "cost_to_target",
            "cost_ratio",
        ])
        .map_err(csv_err)?;
        for r in &self.rows {
            let ratio = self
                .cost_ratios
                .iter()
                .find(|c| c.scenario == r.scenario && r.method == Method::RobotAssistedAL)
                .and_then(|c| c.ratio);
            w.write_record([
                r.scenario.to_string(),
                r.method.to_string(),
                r.seeds.to_string(),
                fmt_sig6(r.final_accuracy_mean),
                fmt_sig6(r.final_accuracy_sd),
                fmt_sig6(r.final_human_cost_mean),
                fmt_sig6(r.final_n_d_mean),
                fmt_sig6(r.pseudo_ratio_mean),
                r.pseudo_accuracy_mean.map(fmt_sig6).unwrap_or_default(),
                fmt_sig6(r.gap_mean),
                r.target.map(fmt_sig6).unwrap_or_default(),
                r.cost_to_target.map(|c| c.to_string()).unwrap_or_default(),
                ratio.map(fmt_sig6).unwrap_or_default(),
            ])
            .map_err(csv_err)?;
        }
        w.flush().map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(())
    }
}

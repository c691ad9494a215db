use std::collections::HashSet;

use raal_core::metrics::{fmt_sig6, log_rows, read_csv, CSV_HEADER};
use raal_core::{parse_config, write_csv, Experiment, Method, Preset, ScenarioKind};

fn small_experiment() -> Experiment {
    let text = "algorithm.n_max = 120\nrun.seeds = [1, 2]";
    Experiment::new(parse_config(text, Preset::Desk).unwrap().config).unwrap()
}

fn close6(a: f64, b: f64) -> bool {
    a == b || (a - b).abs() <= 5e-6 * a.abs().max(b.abs())
}

#[test]
fn csv_is_byte_identical_and_round_trips() {
    let exp = small_experiment();
    let dir = tempfile::tempdir().unwrap();
    let logs = exp
        .run_comparison(ScenarioKind::Scenario1, &Method::ALL, &[1, 2])
        .unwrap();
    let again = exp
        .run_comparison(ScenarioKind::Scenario1, &Method::ALL, &[1, 2])
        .unwrap();
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    write_csv(&logs, &a).unwrap();
    write_csv(&again, &b).unwrap();
    let bytes = std::fs::read(&a).unwrap();
    assert_eq!(bytes, std::fs::read(&b).unwrap());

    let text = String::from_utf8(bytes).unwrap();
    assert_eq!(text.lines().next().unwrap(), CSV_HEADER.join(","));
    let expected: Vec<_> = logs.iter().flat_map(log_rows).collect();
    let parsed = read_csv(&a).unwrap();
    assert_eq!(text.lines().count(), expected.len() + 1);
    assert_eq!(parsed.len(), expected.len());
    for (p, e) in parsed.iter().zip(&expected) {
        assert_eq!(
            (p.method, p.scenario, p.seed, p.round),
            (e.method, e.scenario, e.seed, e.round)
        );
        assert_eq!(p.point.human_cost, e.point.human_cost);
        assert_eq!(p.point.n_d, e.point.n_d);
        assert!(close6(p.point.test_accuracy, e.point.test_accuracy));
        assert!(close6(p.point.delta_e, e.point.delta_e));
        assert!(close6(p.pseudo_ratio, e.pseudo_ratio));
        match (p.pseudo_accuracy, e.pseudo_accuracy) {
            (Some(x), Some(y)) => assert!(close6(x, y)),
            (None, None) => {}
            other => panic!("pseudo accuracy mismatch {other:?}"),
        }
        assert_eq!(
            (
                p.n_low,
                p.n_high,
                p.identifier_count,
                p.human_count,
                p.classifier_count,
                p.initial_count,
                p.unlabeled
            ),
            (
                e.n_low,
                e.n_high,
                e.identifier_count,
                e.human_count,
                e.classifier_count,
                e.initial_count,
                e.unlabeled
            )
        );
        // re-formatting a parsed value reproduces the written text
        assert_eq!(fmt_sig6(p.point.test_accuracy), fmt_sig6(e.point.test_accuracy));
    }
}

#[test]
fn two_logs_of_three_rounds_give_six_rows_plus_finals() {
    let exp = Experiment::new(
        parse_config("algorithm.n_max = 60\nalgorithm.n_train = 20", Preset::Desk)
            .unwrap()
            .config,
    )
    .unwrap();
    let logs = exp
        .run_comparison(ScenarioKind::Base, &[Method::NonALRandom], &[1, 2])
        .unwrap();
    assert!(logs.iter().all(|l| l.records.len() == 3));
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("runs.csv");
    write_csv(&logs, &p).unwrap();
    let text = std::fs::read_to_string(&p).unwrap();
    assert_eq!(text.lines().count(), 1 + 6 + 2);
    assert_eq!(text.lines().filter(|l| l.contains(",final,")).count(), 2);
}

#[test]
fn rows_conserve_labels_and_costs_never_drop() {
    let exp = small_experiment();
    for scenario in ScenarioKind::ALL {
        for log in exp.run_comparison(scenario, &Method::ALL, &[1, 2]).unwrap() {
            let rows = log_rows(&log);
            let mut last = 0;
            for r in &rows {
                let total = r.identifier_count + r.classifier_count + r.human_count + r.initial_count;
                assert_eq!(total, r.point.n_d);
                assert_eq!(r.n_low + r.n_high, r.point.n_d);
                assert!(r.point.human_cost >= last);
                last = r.point.human_cost;
                if log.method != Method::RobotAssistedAL {
                    assert_eq!(r.unlabeled, 0);
                    assert_eq!(r.identifier_count + r.classifier_count, 0);
                }
            }
            assert!(log.final_record.n_d >= 120);
        }
    }
}

#[test]
fn gated_methods_query_the_same_objects_before_training() {
    let exp = small_experiment();
    for scenario in [ScenarioKind::Base, ScenarioKind::Scenario2] {
        let std = exp.run_episode(scenario, Method::StandardAL, 3).unwrap();
        let ra = exp.run_episode(scenario, Method::RobotAssistedAL, 3).unwrap();
        let (a, b) = (&std.queried_before_first_round, &ra.queried_before_first_round);
        let n = a.len().min(b.len());
        assert!(n > 0);
        assert_eq!(a[..n], b[..n]);
        let unique: HashSet<_> = a.iter().collect();
        assert_eq!(unique.len(), a.len());
    }
}

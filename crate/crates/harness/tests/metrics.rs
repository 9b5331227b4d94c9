use proptest::prelude::*;
use spai_core::introspect::AnomalyClass;
use spai_harness::metrics::*;
use spai_sim::LabelModality;

const HC: AnomalyClass = AnomalyClass::HumanCollision;
const TC: AnomalyClass = AnomalyClass::ToolCollision;
const OS: AnomalyClass = AnomalyClass::ObjectSlip;
const NO: AnomalyClass = AnomalyClass::NoObject;
const WC: AnomalyClass = AnomalyClass::WallCollision;

fn trial(node: &str, events: &[f64], flags: &[f64]) -> TrialDetections {
    TrialDetections { node: node.into(), events: events.to_vec(), flags: flags.to_vec() }
}

#[test]
fn all_matched_flags_score_one() {
    let trials: Vec<_> = (0..10).map(|i| trial("3", &[i as f64], &[i as f64 + 0.4])).collect();
    let m = evaluate_identification(&trials, 1.0);
    assert_eq!(m.overall, DetectionCounts { tp: 10, fp: 0, fn_: 0, tn: 0 });
    assert_eq!((m.accuracy, m.precision, m.recall), (1.0, 1.0, 1.0));
}

#[test]
fn missed_and_spurious_flags_lower_precision_and_recall() {
    let mut trials: Vec<_> = (0..8).map(|i| trial("2a", &[2.0], &[2.0 + 0.1 * i as f64])).collect();
    trials.push(trial("2a", &[3.0], &[]));
    trials.push(trial("2a", &[3.0], &[]));
    trials.push(trial("2a", &[], &[1.0]));
    let m = evaluate_identification(&trials, 1.0);
    assert_eq!(m.overall, DetectionCounts { tp: 8, fp: 1, fn_: 2, tn: 0 });
    assert!((m.precision - 8.0 / 9.0).abs() < 1e-12);
    assert!((m.recall - 0.8).abs() < 1e-12);
    assert!((m.accuracy - 8.0 / 11.0).abs() < 1e-12);
}

#[test]
fn flag_outside_tolerance_is_both_false_positive_and_miss() {
    assert_eq!(match_flags(&[5.0], &[6.5], 1.0), (0, 1, 1));
    assert_eq!(match_flags(&[5.0], &[6.0], 1.0), (1, 0, 0));
    // Closest pairing wins even when a worse pairing is listed first.
    assert_eq!(match_flags(&[1.0, 2.0], &[1.9, 1.1], 1.0), (2, 0, 0));
}

#[test]
fn quiet_nominal_trials_are_true_negatives() {
    let trials = vec![trial("1", &[], &[]), trial("1", &[], &[]), trial("4", &[], &[0.5])];
    let m = evaluate_identification(&trials, 1.0);
    assert_eq!(m.per_node["1"], DetectionCounts { tp: 0, fp: 0, fn_: 0, tn: 2 });
    assert_eq!(m.per_node["4"].fp, 1);
    assert!((m.accuracy - 2.0 / 3.0).abs() < 1e-12);
}

#[test]
fn perfect_classifier_has_identity_confusion() {
    let truth: Vec<_> = AnomalyClass::ALL.iter().flat_map(|&c| [c; 4]).collect();
    let r = evaluate_classification(&truth, &truth, &AnomalyClass::ALL).unwrap();
    for i in 0..5 {
        for j in 0..5 {
            assert_eq!(r.matrix.counts[i][j], if i == j { 4 } else { 0 });
        }
    }
    assert_eq!((r.accuracy, r.overall_accuracy, r.macro_precision), (1.0, 1.0, 1.0));
}

#[test]
fn one_os_read_as_hc_among_ten_gives_ninety_percent() {
    let truth = vec![OS; 10];
    let mut predicted = vec![OS; 10];
    predicted[3] = HC;
    let r = evaluate_classification(&truth, &predicted, &[OS, HC]).unwrap();
    assert!((r.overall_accuracy - 0.9).abs() < 1e-12);
    assert_eq!(r.matrix.counts, vec![vec![9, 1], vec![0, 0]]);
}

#[test]
fn three_class_macro_scores_match_hand_computation() {
    // truth a a a b b c ; predicted a a b b c c
    let labels = [HC, TC, WC];
    let truth = [HC, HC, HC, TC, TC, WC];
    let predicted = [HC, HC, TC, TC, WC, WC];
    let r = evaluate_classification(&truth, &predicted, &labels).unwrap();
    let recall = (2.0 / 3.0 + 1.0 / 2.0 + 1.0) / 3.0;
    let precision = (1.0 + 1.0 / 2.0 + 1.0 / 2.0) / 3.0;
    assert!((r.matrix.macro_recall() - recall).abs() < 1e-12);
    assert!((r.macro_precision - precision).abs() < 1e-12);
    assert!((r.overall_accuracy - 4.0 / 6.0).abs() < 1e-12);
}

#[test]
fn mismatched_lengths_and_unknown_labels_are_rejected() {
    assert!(evaluate_classification(&[HC], &[], &AnomalyClass::ALL).is_err());
    assert!(evaluate_classification(&[NO], &[NO], &[HC, TC]).is_err());
}

fn record(node: &str, class: AnomalyClass, modality: LabelModality, success: bool) -> EpisodeRecord {
    EpisodeRecord { scenario: format!("{class}@{node}"), node: Some(node.into()), class: Some(class), modality, success }
}

#[test]
fn success_rates_group_by_node_class_and_modality() {
    let mut recs: Vec<_> = (0..60).map(|i| record(["1", "2a", "3"][i % 3], HC, LabelModality::Perfect, true)).collect();
    recs.extend((0..10).map(|i| record("3", OS, LabelModality::Imperfect, i != 0)));
    let rows = evaluate_success(&recs, None);
    let by = success_by_modality(&rows);
    assert_eq!(by[&LabelModality::Perfect], 1.0);
    assert!((by[&LabelModality::Imperfect] - 0.9).abs() < 1e-12);
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().filter(|r| r.modality == LabelModality::Perfect).all(|r| r.total == 20));
    assert_eq!(evaluate_success(&recs, Some(LabelModality::Imperfect)).len(), 1);

    let csv = success_table_csv(&rows);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "modality,node,HC,TC,OS,NO,WC,none");
    assert!(lines.contains(&"perfect,2a,20/20,,,,,"));
    assert!(lines.contains(&"imperfect,3,,,9/10,,,"));
}

fn class_strategy() -> impl Strategy<Value = AnomalyClass> {
    (0..5usize).prop_map(|i| AnomalyClass::ALL[i])
}

proptest! {
    #[test]
    fn confusion_rows_sum_to_truth_counts(pairs in prop::collection::vec((class_strategy(), class_strategy()), 0..80)) {
        let (truth, predicted): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
        let r = evaluate_classification(&truth, &predicted, &AnomalyClass::ALL).unwrap();
        for (i, c) in AnomalyClass::ALL.iter().enumerate() {
            prop_assert_eq!(r.matrix.row_total(i), truth.iter().filter(|t| *t == c).count());
            prop_assert_eq!(r.matrix.column_total(i), predicted.iter().filter(|p| *p == c).count());
        }
        prop_assert_eq!(r.matrix.total(), truth.len());
    }

    #[test]
    fn matching_conserves_events_and_flags(
        events in prop::collection::vec(0.0..20.0f64, 0..6),
        flags in prop::collection::vec(0.0..20.0f64, 0..6),
    ) {
        let (tp, fp, fn_) = match_flags(&events, &flags, 1.0);
        prop_assert_eq!(tp + fp, flags.len());
        prop_assert_eq!(tp + fn_, events.len());
    }
}

use chrono::{Local, TimeZone};
use spai_core::introspect::AnomalyClass;
use spai_core::taskgraph::RecoveryAction;
use spai_harness::metrics::{evaluate_success, success_by_modality, EpisodeRecord, MetricsReport, TrialCounts};
use spai_harness::report::render_markdown;
use spai_harness::run_dir::*;
use spai_sim::episode::TraceCounters;
use spai_sim::{EpisodeOutcome, LabelEvent, LabelModality};

#[test]
fn directory_name_carries_the_timestamp() {
    let t = Local.with_ymd_and_hms(2024, 3, 7, 9, 5, 2).unwrap();
    assert_eq!(run_dir_name(&t), "experiment_at_2024-03-07_09-05-02");
}

#[test]
fn run_directories_never_collide() {
    let root = tempfile::tempdir().unwrap();
    let a = create_run_dir(root.path()).unwrap();
    let b = create_run_dir(root.path()).unwrap();
    assert_ne!(a, b);
    assert!(a.is_dir() && b.is_dir());
    assert!(a.file_name().unwrap().to_string_lossy().starts_with("experiment_at_"));
}

#[test]
fn label_lines_list_time_node_label_truth_and_action() {
    let ev = LabelEvent {
        t: 3.456,
        node: "2a".into(),
        label: Some(AnomalyClass::ToolCollision),
        truth: Some(AnomalyClass::ToolCollision),
        action: Some(RecoveryAction::ExecuteAdaptive("2a.1".into())),
        inserted: Some("2a.1".into()),
    };
    assert_eq!(label_line(&ev), "3.46 2a TC TC adaptive:2a.1 inserted:2a.1");
    let dismissed = LabelEvent { t: 1.0, node: "1".into(), label: None, truth: None, action: None, inserted: None };
    assert_eq!(label_line(&dismissed), "1.00 1 - - -");
}

fn summary(name: &str, success: bool) -> RunSummary {
    RunSummary {
        scenario: name.into(),
        seed: 7,
        modality: LabelModality::Perfect,
        outcome: if success { EpisodeOutcome::Success } else { EpisodeOutcome::Failure("step budget exhausted".into()) },
        counters: TraceCounters::default(),
        visited: vec!["1".into(), "2a".into()],
        registry: vec![],
        record: EpisodeRecord {
            scenario: name.into(),
            node: Some("2a".into()),
            class: Some(AnomalyClass::HumanCollision),
            modality: LabelModality::Perfect,
            success,
        },
    }
}

#[test]
fn summaries_are_collected_recursively_and_in_order() {
    let root = tempfile::tempdir().unwrap();
    for (dir, ok) in [("b/x", true), ("a", false), ("b/y", true)] {
        let p = root.path().join(dir);
        std::fs::create_dir_all(&p).unwrap();
        std::fs::write(p.join(SUMMARY_FILE), serde_json::to_string(&summary(dir, ok)).unwrap()).unwrap();
    }
    // Command summaries share the file name and are skipped.
    std::fs::write(root.path().join(SUMMARY_FILE), "{\"command\": \"simulate\"}").unwrap();
    let found = collect_summaries(root.path()).unwrap();
    let names: Vec<&str> = found.iter().map(|(_, s)| s.scenario.as_str()).collect();
    assert_eq!(names, ["a", "b/x", "b/y"]);
    assert_eq!(read_summary(&found[0].0).unwrap(), summary("a", false));
}

#[test]
fn report_rendering_is_pure() {
    let records: Vec<_> = (0..3).map(|i| summary(&i.to_string(), i != 1).record).collect();
    let success = evaluate_success(&records, None);
    let report = MetricsReport {
        success_by_modality: success_by_modality(&success),
        success,
        counts: TrialCounts { episodes: 3, ..Default::default() },
        ..Default::default()
    };
    let a = render_markdown(&report);
    assert_eq!(a, render_markdown(&report.clone()));
    assert!(a.contains("perfect,2a,2/3,,,,,"));
    assert!(a.contains("Episodes: 3"));
}

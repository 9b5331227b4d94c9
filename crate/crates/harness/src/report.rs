//! Plain-text rendering of a metrics report.

use std::fmt::Write;

use spai_core::introspect::AnomalyClass;

use crate::metrics::{success_table_csv, MetricsReport};

fn pct(x: f64) -> String {
    format!("{:.2}%", 100.0 * x)
}

/// Markdown body of `report`; a pure function of its input.
pub fn render_markdown(report: &MetricsReport) -> String {
    let mut s = String::from("# Metrics report\n");
    let r = &report.reference;
    if let Some(id) = &report.identification {
        let _ = writeln!(s, "\n## Anomaly identification\n");
        let _ = writeln!(s, "Matching tolerance: {} s\n", id.tolerance);
        let _ = writeln!(s, "| node | trials | TP | FP | FN | TN | accuracy | precision | recall |");
        let _ = writeln!(s, "|---|---|---|---|---|---|---|---|---|");
        for (node, c) in &id.per_node {
            let n = report.counts.identification_trials.get(node).copied().unwrap_or(0);
            let _ = writeln!(
                s,
                "| {node} | {n} | {} | {} | {} | {} | {} | {} | {} |",
                c.tp,
                c.fp,
                c.fn_,
                c.tn,
                pct(c.accuracy()),
                pct(c.precision()),
                pct(c.recall())
            );
        }
        let o = &id.overall;
        let _ = writeln!(
            s,
            "| overall | {} | {} | {} | {} | {} | {} | {} | {} |",
            report.counts.identification_trials.values().sum::<usize>(),
            o.tp,
            o.fp,
            o.fn_,
            o.tn,
            pct(id.accuracy),
            pct(id.precision),
            pct(id.recall)
        );
        let _ = writeln!(s, "\nMacro precision {}, macro recall {}.", pct(id.macro_precision), pct(id.macro_recall));
        let _ = writeln!(
            s,
            "Reference (physical system): accuracy {}, precision {}, recall {}.",
            pct(r.identification_accuracy),
            pct(r.identification_precision),
            pct(r.identification_recall)
        );
    }
    if let Some(c) = &report.classification {
        let _ = writeln!(s, "\n## Anomaly classification\n");
        let _ = write!(s, "| truth \\ predicted |");
        for l in &c.matrix.labels {
            let _ = write!(s, " {l} |");
        }
        let _ = write!(s, " windows |\n|---|");
        for _ in &c.matrix.labels {
            s.push_str("---|");
        }
        s.push_str("---|\n");
        for (i, row) in c.matrix.counts.iter().enumerate() {
            let _ = write!(s, "| {} |", c.matrix.labels[i]);
            for v in row {
                let _ = write!(s, " {v} |");
            }
            let _ = writeln!(s, " {} |", c.matrix.row_total(i));
        }
        let _ = writeln!(
            s,
            "\nMean per-class accuracy {}, overall {}, macro precision {}.",
            pct(c.accuracy),
            pct(c.overall_accuracy),
            pct(c.macro_precision)
        );
        let _ = writeln!(s, "Reference (physical system): {}.", pct(r.classification_accuracy));
    }
    if let Some(g) = &report.reactivity {
        let _ = writeln!(s, "\n## Window extent sweep\n");
        let _ = write!(s, "| pre \\ post |");
        for p in &g.post {
            let _ = write!(s, " {p} s |");
        }
        s.push_str("\n|---|");
        for _ in &g.post {
            s.push_str("---|");
        }
        s.push('\n');
        for (i, p) in g.pre.iter().enumerate() {
            let _ = write!(s, "| {p} s |");
            for a in &g.accuracy[i] {
                let _ = write!(s, " {} |", pct(*a));
            }
            s.push('\n');
        }
    }
    if !report.success.is_empty() {
        let _ = writeln!(s, "\n## Recovery success\n");
        for (m, rate) in &report.success_by_modality {
            let _ = writeln!(s, "- {m} classification: {}", pct(*rate));
        }
        let _ = writeln!(s, "\n```\n{}```", success_table_csv(&report.success));
        let _ = writeln!(s, "\nEpisodes: {}", report.counts.episodes);
    }
    let classes: Vec<&str> = AnomalyClass::ALL.iter().map(|c| c.code()).collect();
    let _ = writeln!(s, "\nClasses: {}", classes.join(", "));
    s
}

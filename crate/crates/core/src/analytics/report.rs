use std::fmt::Write as _;
use std::path::Path;

use super::{AnalysisReport, AnalyticsError};

fn cell(text: &str) -> String {
    text.replace('|', "\\|").replace('\n', " ")
}

/// Human-readable report: goal sections with plot links, then the verdict
/// table.
pub fn render_markdown(report: &AnalysisReport) -> String {
    let mut md = String::new();
    let mode = match report.request.mode {
        super::AnalysisMode::Automated => "automated",
        super::AnalysisMode::Interactive => "interactive",
    };
    let _ = writeln!(md, "# Flight log analysis\n");
    let _ = writeln!(md, "- Log: `{}`", report.request.log_ref);
    let _ = writeln!(md, "- Mode: {mode}");
    let _ = writeln!(md, "- Created: {}\n", report.created_at);

    for g in &report.goals {
        let _ = writeln!(md, "## {}\n", g.goal);
        if !g.selected.is_empty() {
            let names: Vec<String> = g
                .selected
                .iter()
                .map(|p| {
                    let mark = if p.series.is_some() { "" } else { " (not in log)" };
                    format!("`{}` {:.3}{mark}", p.doc.key(), p.score)
                })
                .collect();
            let _ = writeln!(md, "Selected parameters: {}\n", names.join(", "));
        }
        for plot in &g.plots {
            let stem = plot.trim_start_matches("plots/").trim_end_matches(".svg");
            let _ = writeln!(md, "![{stem}]({plot})");
        }
        if !g.plots.is_empty() {
            md.push('\n');
        }
        match &g.notice {
            Some(n) => {
                let _ = writeln!(md, "_{n}_\n");
            }
            None => {
                let _ = writeln!(md, "{}\n", g.narrative);
            }
        }
    }

    let _ = writeln!(md, "## Sensor issue analysis\n");
    let _ = writeln!(md, "| Sensor | Issue detected | Evidence |");
    let _ = writeln!(md, "|---|---|---|");
    for v in &report.detector_verdicts {
        let evidence = if let Some(note) = &v.note {
            note.clone()
        } else if v.evidence.is_empty() {
            "-".to_string()
        } else {
            v.evidence
                .iter()
                .map(|e| format!("{} at {:.1} s: {}", e.parameter, e.timestamp as f64 / 1e6, e.description))
                .collect::<Vec<_>>()
                .join("; ")
        };
        let flag = if v.failed { "✓" } else { "✗" };
        let _ = writeln!(md, "| {} | {flag} | {} |", v.sensor.label(), cell(&evidence));
    }
    md
}

/// Writes `report.json` and `report.md` into `dir`.
pub fn write_report(report: &AnalysisReport, dir: &Path) -> Result<(), AnalyticsError> {
    let io = |p: &Path| {
        let path = p.display().to_string();
        move |source| AnalyticsError::Io { path, source }
    };
    std::fs::create_dir_all(dir).map_err(io(dir))?;
    let json = serde_json::to_string_pretty(report).expect("report serializes");
    let jp = dir.join("report.json");
    std::fs::write(&jp, json).map_err(io(&jp))?;
    let mp = dir.join("report.md");
    std::fs::write(&mp, render_markdown(report)).map_err(io(&mp))?;
    Ok(())
}

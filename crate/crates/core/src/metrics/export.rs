//! Text tables, key-value files and SVG confusion heatmaps.

use std::fmt::Write as _;

use super::{ConfusionMatrix, MeanMetrics, MetricReport, SubgroupReport};
use crate::model::BranchSet;

/// Renders an aligned plain-text table. The first `left` columns are
/// left-aligned, the rest right-aligned.
pub fn render_table(headers: &[&str], rows: &[Vec<String>], left: usize) -> String {
    let cols = headers.len();
    let mut width: Vec<usize> = headers.iter().map(|h| h.chars().count()).collect();
    for row in rows {
        for (c, cell) in row.iter().enumerate().take(cols) {
            width[c] = width[c].max(cell.chars().count());
        }
    }
    let line = |cells: &[String]| {
        let mut s = String::new();
        for (c, cell) in cells.iter().enumerate() {
            if c > 0 {
                s.push_str("  ");
            }
            let pad = width[c] - cell.chars().count();
            if c < left {
                s.push_str(cell);
                if c + 1 < cols {
                    s.push_str(&" ".repeat(pad));
                }
            } else {
                s.push_str(&" ".repeat(pad));
                s.push_str(cell);
            }
        }
        s.push('\n');
        s
    };
    let total: usize = width.iter().sum::<usize>() + 2 * (cols - 1);
    let rule = format!("{}\n", "-".repeat(total));
    let mut out = String::new();
    out.push_str(&rule);
    out.push_str(&line(&headers.iter().map(|h| h.to_string()).collect::<Vec<_>>()));
    out.push_str(&rule);
    for row in rows {
        out.push_str(&line(row));
    }
    out.push_str(&rule);
    out
}

fn pct(v: f64) -> String {
    format!("{:.1}", 100.0 * v)
}

fn metric_cells(m: &MeanMetrics) -> [String; 4] {
    [pct(m.accuracy), pct(m.precision), pct(m.recall), pct(m.f1)]
}

/// One line of the main results table.
#[derive(Clone, Debug, PartialEq)]
pub struct ResultRow {
    pub architecture: String,
    pub best_model: String,
    pub reference: String,
    pub metrics: MeanMetrics,
}

impl ResultRow {
    pub fn goalkeeper(metrics: MeanMetrics) -> Self {
        ResultRow { architecture: "GK Baseline".into(), best_model: "-".into(), reference: "-".into(), metrics }
    }
}

/// Architecture / Best Model / Reference / Acc. / P / R / F1.
pub fn results_table(rows: &[ResultRow]) -> String {
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let mut v = vec![r.architecture.clone(), r.best_model.clone(), r.reference.clone()];
            v.extend(metric_cells(&r.metrics));
            v
        })
        .collect();
    render_table(&["Architecture", "Best Model", "Reference", "Acc. (%)", "P (%)", "R (%)", "F1 (%)"], &body, 3)
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationRow {
    pub classes: usize,
    pub branches: BranchSet,
    pub metrics: MeanMetrics,
}

/// # of class / Branches / Acc. / P / R / F1.
pub fn ablation_table(rows: &[AblationRow]) -> String {
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let mut v = vec![r.classes.to_string(), r.branches.label()];
            v.extend(metric_cells(&r.metrics));
            v
        })
        .collect();
    render_table(&["# of class", "Branches", "Acc. (%)", "P (%)", "R (%)", "F1 (%)"], &body, 2)
}

/// Correct vs incorrect share per metadata subgroup.
pub fn subgroup_table(report: &SubgroupReport) -> String {
    let body: Vec<Vec<String>> = report
        .rows
        .iter()
        .map(|r| match (r.accuracy(), r.error_rate()) {
            (Some(a), Some(e)) => vec![r.group.label().into(), r.samples.to_string(), pct(a), pct(e)],
            _ => vec![r.group.label().into(), "0".into(), "absent".into(), "absent".into()],
        })
        .collect();
    render_table(&["Subgroup", "n", "Correct (%)", "Incorrect (%)"], &body, 1)
}

/// Counts with the row percentage in parentheses.
pub fn confusion_text(cm: &ConfusionMatrix, names: &[&str]) -> String {
    let norm = cm.row_normalized();
    let has_outside = cm.outside.iter().any(|&v| v > 0);
    let mut headers = vec!["true \\ pred"];
    headers.extend_from_slice(names);
    if has_outside {
        headers.push("other");
    }
    let body: Vec<Vec<String>> = (0..cm.classes())
        .map(|r| {
            let mut v = vec![names[r].to_string()];
            for c in 0..cm.classes() {
                v.push(format!("{} ({:.1}%)", cm.counts[r][c], 100.0 * norm[r][c]));
            }
            if has_outside {
                v.push(cm.outside[r].to_string());
            }
            v
        })
        .collect();
    render_table(&headers, &body, 1)
}

/// Flat `key = value` lines for one report.
pub fn report_kv(prefix: &str, r: &MetricReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{prefix}.samples = {}", r.samples);
    let _ = writeln!(out, "{prefix}.accuracy = {}", r.accuracy);
    let _ = writeln!(out, "{prefix}.macro_precision = {}", r.macro_precision);
    let _ = writeln!(out, "{prefix}.macro_recall = {}", r.macro_recall);
    let _ = writeln!(out, "{prefix}.macro_f1 = {}", r.macro_f1);
    for c in &r.per_class {
        let _ = writeln!(out, "{prefix}.{}.support = {}", c.name, c.support);
        let _ = writeln!(out, "{prefix}.{}.precision = {}", c.name, c.precision);
        let _ = writeln!(out, "{prefix}.{}.recall = {}", c.name, c.recall);
        let _ = writeln!(out, "{prefix}.{}.f1 = {}", c.name, c.f1);
    }
    out
}

pub fn mean_kv(prefix: &str, m: &MeanMetrics) -> String {
    format!(
        "{prefix}.accuracy = {}\n{prefix}.precision = {}\n{prefix}.recall = {}\n{prefix}.f1 = {}\n",
        m.accuracy, m.precision, m.recall, m.f1
    )
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Heatmap shaded by row percentage, each cell annotated with its count
/// and row percentage.
pub fn confusion_svg(cm: &ConfusionMatrix, names: &[&str], title: &str) -> String {
    let n = cm.classes();
    let cell = 110;
    let (left, top) = (110, 70);
    let (w, h) = (left + n * cell + 30, top + n * cell + 60);
    let norm = cm.row_normalized();
    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif">"#
    );
    let _ = writeln!(s, r#"  <rect x="0" y="0" width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(s, r#"  <text x="{}" y="28" font-size="16" text-anchor="middle">{}</text>"#, w / 2, xml_escape(title));
    for r in 0..n {
        for c in 0..n {
            let p = norm[r][c];
            // white → dark blue
            let shade = |lo: f64, hi: f64| (lo + (hi - lo) * p).round() as u8;
            let (red, green, blue) = (shade(247.0, 8.0), shade(251.0, 48.0), shade(255.0, 107.0));
            let (x, y) = (left + c * cell, top + r * cell);
            let ink = if p > 0.5 { "white" } else { "black" };
            let _ = writeln!(
                s,
                r##"  <rect x="{x}" y="{y}" width="{cell}" height="{cell}" fill="rgb({red},{green},{blue})" stroke="#888"/>"##
            );
            let _ = writeln!(
                s,
                r#"  <text x="{}" y="{}" font-size="18" text-anchor="middle" fill="{ink}">{}</text>"#,
                x + cell / 2,
                y + cell / 2 - 4,
                cm.counts[r][c]
            );
            let _ = writeln!(
                s,
                r#"  <text x="{}" y="{}" font-size="13" text-anchor="middle" fill="{ink}">{:.1}%</text>"#,
                x + cell / 2,
                y + cell / 2 + 16,
                100.0 * p
            );
        }
        let _ = writeln!(
            s,
            r#"  <text x="{}" y="{}" font-size="14" text-anchor="end">{}</text>"#,
            left - 8,
            top + r * cell + cell / 2 + 5,
            xml_escape(names[r])
        );
    }
    for (c, name) in names.iter().enumerate().take(n) {
        let _ = writeln!(
            s,
            r#"  <text x="{}" y="{}" font-size="14" text-anchor="middle">{}</text>"#,
            left + c * cell + cell / 2,
            top - 10,
            xml_escape(name)
        );
    }
    let _ = writeln!(s, r#"  <text x="{}" y="{}" font-size="13" text-anchor="middle">Predicted</text>"#, left + n * cell / 2, top + n * cell + 30);
    let _ = writeln!(
        s,
        r#"  <text x="20" y="{}" font-size="13" text-anchor="middle" transform="rotate(-90 20 {})">True</text>"#,
        top + n * cell / 2,
        top + n * cell / 2
    );
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{subgroup_report, Subgroup};
    use crate::data::{Metadata, Side};

    #[test]
    fn table_alignment() {
        let t = render_table(&["a", "num"], &[vec!["long name".into(), "1.0".into()], vec!["x".into(), "100.0".into()]], 1);
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines[1], "a            num");
        assert_eq!(lines[3], "long name    1.0");
        assert_eq!(lines[4], "x          100.0");
    }

    #[test]
    fn ablation_rows_follow_branch_order() {
        let rows: Vec<AblationRow> = BranchSet::ABLATION_ROWS
            .iter()
            .map(|&b| AblationRow { classes: 3, branches: b, metrics: MeanMetrics::default() })
            .collect();
        let t = ablation_table(&rows);
        let names: Vec<&str> = t.lines().filter(|l| l.starts_with('3')).collect();
        assert_eq!(names.len(), 3);
        assert!(names[0].contains("Running ") && !names[0].contains("Kicking"));
        assert!(names[1].contains("Running + Kicking") && !names[1].contains("Metadata"));
        assert!(names[2].contains("Running + Kicking + Metadata"));
    }

    #[test]
    fn subgroup_table_marks_absent_groups() {
        let meta = vec![Metadata { pitch_side: Side::Right, foot: Side::Right }; 2];
        let r = subgroup_report(&meta, &[0, 1], &[0, 0]).unwrap();
        let t = subgroup_table(&r);
        assert!(t.contains("absent"));
        assert_eq!(r.get(Subgroup::PitchSideRight).accuracy(), Some(0.5));
        assert_eq!(t.lines().filter(|l| l.contains("pitch side") || l.contains("footed")).count(), 4);
    }

    #[test]
    fn svg_is_well_formed() {
        let mut cm = ConfusionMatrix::new(3);
        cm.counts = vec![vec![5, 1, 0], vec![0, 2, 2], vec![1, 0, 7]];
        let svg = confusion_svg(&cm, &["left", "center", "right"], "3 classes <pooled>");
        let doc = roxmltree::Document::parse(&svg).unwrap();
        let rects = doc.descendants().filter(|n| n.has_tag_name("rect")).count();
        assert_eq!(rects, 1 + 9);
        assert!(svg.contains("83.3%"));
    }
}

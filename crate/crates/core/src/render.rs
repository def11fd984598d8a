//! Plain-text table rendering. Pure formatting over the JSON report types:
//! rates get one decimal, scores two.

use std::fmt::Write;

use crate::agreement::AgreementReport;
use crate::analysis::buckets::BucketReport;
use crate::analysis::distribution::{DashboardRow, DistributionTable};
use crate::analysis::stats::CorrelationReport;
use crate::bleu::BleuReport;
use crate::measure::Measure;
use crate::scoring::ScoreReport;

struct Table {
    headers: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn new<I: IntoIterator<Item = S>, S: Into<String>>(headers: I) -> Self {
        Table {
            headers: headers.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    fn row(&mut self, cells: Vec<String>) {
        self.rows.push(cells);
    }

    fn render(&self) -> String {
        let widths: Vec<usize> = (0..self.headers.len())
            .map(|c| {
                self.rows
                    .iter()
                    .map(|r| r.get(c).map_or(0, |s| s.chars().count()))
                    .chain(std::iter::once(self.headers[c].chars().count()))
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let mut out = String::new();
        let line = |out: &mut String, cells: &[String]| {
            let padded: Vec<String> = cells
                .iter()
                .zip(&widths)
                .map(|(c, &w)| format!("{c}{}", " ".repeat(w - c.chars().count())))
                .collect();
            let _ = writeln!(out, "{}", padded.join("  ").trim_end());
        };
        line(&mut out, &self.headers);
        let rule: Vec<String> = widths.iter().map(|&w| "-".repeat(w)).collect();
        line(&mut out, &rule);
        for r in &self.rows {
            line(&mut out, r);
        }
        out
    }
}

fn m2(m: &Measure) -> String {
    format!("{m:.2}")
}

fn m3(m: &Measure) -> String {
    format!("{m:.3}")
}

pub fn score_table(report: &ScoreReport) -> String {
    let mut t = Table::new(["direction", "model", "n", "macro", "micro"]);
    for g in &report.per_group {
        t.row(vec![
            g.direction.to_string(),
            g.model_id.clone(),
            g.n_segments.to_string(),
            format!("{:.2}", g.macro_mean),
            format!("{:.2}", g.micro_score),
        ]);
    }
    t.render()
}

pub fn distribution_table(table: &DistributionTable) -> String {
    let mut t = Table::new([table.grouping.as_str(), "count", "rate (%)", "weighted (%)"]);
    for r in &table.rows {
        t.row(vec![
            r.labels.join(" > "),
            r.count.to_string(),
            format!("{:.1}", r.rate),
            format!("{:.1}", r.weighted_rate),
        ]);
    }
    t.row(vec!["total".into(), table.total.to_string(), "100.0".into(), "100.0".into()]);
    t.render()
}

pub fn dashboard_table(rows: &[DashboardRow]) -> String {
    let mut out = String::new();
    for row in rows {
        let _ = writeln!(out, "== {} ==", row.direction);
        let mut models = Table::new(["model", "spans", "share (%)"]);
        for r in &row.models.rows {
            models.row(vec![r.key.clone(), r.count.to_string(), format!("{:.1}", r.rate)]);
        }
        out.push_str(&models.render());
        let mut cats = Table::new(["category", "spans", "share (%)"]);
        for r in &row.categories.rows {
            cats.row(vec![r.labels.join(" > "), r.count.to_string(), format!("{:.1}", r.rate)]);
        }
        out.push_str(&cats.render());
        out.push('\n');
    }
    out
}

pub fn correlation_table(report: &CorrelationReport) -> String {
    let mut t = Table::new(["statistic", "value", "p"]);
    t.row(vec!["pearson r".into(), m3(&report.pearson_r), format!("{:.4}", report.pearson_p)]);
    t.row(vec!["spearman rho".into(), m3(&report.spearman_rho), format!("{:.4}", report.spearman_p)]);
    t.row(vec!["n".into(), report.n.to_string(), String::new()]);
    t.render()
}

pub fn bucket_table(report: &BucketReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "cutoffs: short <= {} < medium <= {} < long",
        report.cutoffs.0, report.cutoffs.1
    );
    let mut t = Table::new(["bucket", "direction", "model", "n", "micro"]);
    for b in &report.buckets {
        for g in &b.groups {
            t.row(vec![
                format!("{:?} (n={})", b.bucket, b.n).to_lowercase(),
                g.direction.to_string(),
                g.model_id.clone(),
                g.n_segments.to_string(),
                format!("{:.2}", g.micro_score),
            ]);
        }
    }
    out.push_str(&t.render());
    let mut r = Table::new(["direction", "short-medium", "medium-long", "short-long"]);
    for (d, rho) in &report.rank_stability.per_direction {
        r.row(vec![d.to_string(), m2(&rho.short_medium), m2(&rho.medium_long), m2(&rho.short_long)]);
    }
    let m = &report.rank_stability.means;
    r.row(vec!["mean".into(), m2(&m.short_medium), m2(&m.medium_long), m2(&m.short_long)]);
    out.push('\n');
    out.push_str(&r.render());
    out
}

pub fn agreement_table(report: &AgreementReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{} vs {}: {} items, {} / {} spans, {} matched",
        report.annotator_a,
        report.annotator_b,
        report.n_items,
        report.n_spans_a,
        report.n_spans_b,
        report.n_matched
    );
    let mut d = Table::new(["detection", "F1"]);
    d.row(vec!["character".into(), m3(&report.char_f1)]);
    d.row(vec!["overlap span".into(), m3(&report.overlap_span_f1)]);
    d.row(vec!["exact span".into(), m3(&report.exact_span_f1)]);
    out.push_str(&d.render());
    out.push('\n');
    let mut l = Table::new(["criterion", "agree/matched", "F1 w/ detection", "kappa"]);
    for (c, a) in &report.labels {
        l.row(vec![c.to_string(), m3(&a.matched_only), m3(&a.with_detection), m3(&a.kappa)]);
    }
    out.push_str(&l.render());
    out
}

pub fn bleu_table(report: &BleuReport) -> String {
    let mut t = Table::new(["direction", "model", "n", "BLEU"]);
    for g in &report.per_group {
        t.row(vec![
            g.direction.to_string(),
            g.model_id.clone(),
            g.n_segments.to_string(),
            format!("{:.2}", g.mean_bleu),
        ]);
    }
    t.render()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn columns_align_with_wide_cells() {
        let mut t = Table::new(["a", "bb"]);
        t.row(vec!["xxxx".into(), "y".into()]);
        let s = t.render();
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines[0], "a     bb");
        assert_eq!(lines[1], "----  --");
        assert_eq!(lines[2], "xxxx  y");
    }

    #[test]
    fn absent_measures_render_as_dashes() {
        assert_eq!(m3(&Measure::absent("x")), "--");
        assert_eq!(m2(&Measure::Value(0.12345)), "0.12");
    }
}

//! Error count/rate tables and the per-direction diagnostic dashboard.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Dialect, Direction, ErrorSpan, Segment};
use crate::scoring::WeightScheme;
use crate::taxonomy::TaxonomySchema;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    Category,
    ErrorType,
    Subcategory,
}

impl Level {
    pub fn depth(self) -> u8 {
        match self {
            Level::Category => 1,
            Level::ErrorType => 2,
            Level::Subcategory => 3,
        }
    }
}

impl std::str::FromStr for Level {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "category" => Ok(Level::Category),
            "error_type" | "error-type" => Ok(Level::ErrorType),
            "subcategory" => Ok(Level::Subcategory),
            other => Err(format!("unknown level `{other}`")),
        }
    }
}

/// Restricts which segments' spans are counted. Empty filter keeps everything.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScopeFilter {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direction: Option<Direction>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dialect: Option<Dialect>,
    /// `Some(true)` keeps dialect→English only, `Some(false)` English→dialect only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub into_english: Option<bool>,
}

impl ScopeFilter {
    pub fn direction(direction: Direction) -> Self {
        ScopeFilter {
            direction: Some(direction),
            ..Default::default()
        }
    }

    pub fn accepts(&self, seg: &Segment) -> bool {
        self.direction.as_ref().is_none_or(|d| &seg.direction == d)
            && self.model_id.as_ref().is_none_or(|m| &seg.model_id == m)
            && self.dialect.is_none_or(|d| seg.dialect == Some(d))
            && self
                .into_english
                .is_none_or(|e| seg.direction.into_english() == e)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionRow {
    /// Path ids joined by `/`, or a model id.
    pub key: String,
    pub labels: Vec<String>,
    pub count: usize,
    /// Share of spans, in percent.
    pub rate: f64,
    pub weighted_mass: f64,
    /// Share of severity-weighted error mass, in percent.
    pub weighted_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionTable {
    pub grouping: String,
    pub total: usize,
    pub total_mass: f64,
    /// Descending by count, ties by key.
    pub rows: Vec<DistributionRow>,
}

impl DistributionTable {
    pub fn row(&self, key: &str) -> Option<&DistributionRow> {
        self.rows.iter().find(|r| r.key == key)
    }
}

fn build_table<'a, I>(grouping: &str, items: I, scheme: &WeightScheme) -> DistributionTable
where
    I: IntoIterator<Item = (String, Vec<String>, &'a ErrorSpan)>,
{
    let mut acc: BTreeMap<String, (Vec<String>, usize, f64)> = BTreeMap::new();
    let mut total = 0usize;
    let mut total_mass = 0.0;
    for (key, labels, span) in items {
        let w = scheme.span_weight(span.severity);
        let e = acc.entry(key).or_insert((labels, 0, 0.0));
        e.1 += 1;
        e.2 += w;
        total += 1;
        total_mass += w;
    }
    let pct = |part: f64, whole: f64| if whole > 0.0 { 100.0 * part / whole } else { 0.0 };
    let mut rows: Vec<DistributionRow> = acc
        .into_iter()
        .map(|(key, (labels, count, mass))| DistributionRow {
            rate: pct(count as f64, total as f64),
            weighted_rate: pct(mass, total_mass),
            key,
            labels,
            count,
            weighted_mass: mass,
        })
        .collect();
    rows.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.key.cmp(&b.key)));
    DistributionTable {
        grouping: grouping.to_string(),
        total,
        total_mass,
        rows,
    }
}

fn in_scope<'a>(
    corpus: &'a Corpus,
    spans: &'a [&'a ErrorSpan],
    filter: &'a ScopeFilter,
) -> impl Iterator<Item = (&'a Segment, &'a ErrorSpan)> + 'a {
    spans.iter().filter_map(move |s| {
        let seg = corpus.get(&s.segment_id)?;
        filter.accepts(seg).then_some((seg, *s))
    })
}

/// Span counts and rates by taxonomy node at `level`. Spans whose path
/// stops above `level` are counted at their deepest node.
pub fn error_distribution(
    corpus: &Corpus,
    spans: &[&ErrorSpan],
    schema: &TaxonomySchema,
    level: Level,
    filter: &ScopeFilter,
    scheme: &WeightScheme,
) -> DistributionTable {
    let items = in_scope(corpus, spans, filter).map(|(_, span)| {
        let path = span.path.truncate(level.depth());
        let labels = schema
            .path_labels(&path)
            .into_iter()
            .map(str::to_string)
            .collect();
        (path.to_string(), labels, span)
    });
    let grouping = match level {
        Level::Category => "category",
        Level::ErrorType => "error_type",
        Level::Subcategory => "subcategory",
    };
    build_table(grouping, items, scheme)
}

/// Share of error spans attributed to each model, per direction.
pub fn model_attribution(
    corpus: &Corpus,
    spans: &[&ErrorSpan],
    filter: &ScopeFilter,
    scheme: &WeightScheme,
) -> BTreeMap<Direction, DistributionTable> {
    let mut by_direction: BTreeMap<Direction, Vec<(&Segment, &ErrorSpan)>> = BTreeMap::new();
    for (seg, span) in in_scope(corpus, spans, filter) {
        by_direction.entry(seg.direction.clone()).or_default().push((seg, span));
    }
    by_direction
        .into_iter()
        .map(|(dir, items)| {
            let table = build_table(
                "model_id",
                items
                    .into_iter()
                    .map(|(seg, span)| (seg.model_id.clone(), vec![seg.model_id.clone()], span)),
                scheme,
            );
            (dir, table)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DashboardRow {
    pub direction: Direction,
    /// Which model produced the errors.
    pub models: DistributionTable,
    /// Which top-level categories the errors fall into.
    pub categories: DistributionTable,
}

/// Model contribution and category mix for every direction.
pub fn dashboard(
    corpus: &Corpus,
    spans: &[&ErrorSpan],
    schema: &TaxonomySchema,
    scheme: &WeightScheme,
) -> Vec<DashboardRow> {
    model_attribution(corpus, spans, &ScopeFilter::default(), scheme)
        .into_iter()
        .map(|(direction, models)| {
            let categories = error_distribution(
                corpus,
                spans,
                schema,
                Level::Category,
                &ScopeFilter::direction(direction.clone()),
                scheme,
            );
            DashboardRow {
                direction,
                models,
                categories,
            }
        })
        .collect()
}

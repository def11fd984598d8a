//! Persisted project shapes and the in-memory state readers see.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use lqm_core::{Corpus, ErrorSpan, Layer, TaxonomySchema};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RosterEntry {
    pub annotator_id: String,
    pub token: String,
}

/// How segments are dealt to the roster.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    /// Share of segments, taken from the front of the segment list, that every
    /// annotator receives. The remainder is dealt round-robin.
    #[serde(default = "full_overlap")]
    pub overlap: f64,
}

fn full_overlap() -> f64 {
    1.0
}

impl Default for Assignment {
    fn default() -> Self {
        Assignment { overlap: 1.0 }
    }
}

impl Assignment {
    /// Segment indices per roster position.
    pub fn deal(&self, n_segments: usize, n_annotators: usize) -> Vec<Vec<usize>> {
        let shared = ((self.overlap * n_segments as f64).round() as usize).min(n_segments);
        let mut out: Vec<Vec<usize>> = vec![(0..shared).collect(); n_annotators];
        for (k, i) in (shared..n_segments).enumerate() {
            out[k % n_annotators].push(i);
        }
        out
    }
}

/// Written once at creation as `project.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectMeta {
    pub project_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub client_token: Option<String>,
    pub payload_digest: String,
    pub taxonomy_name: String,
    pub layer: Layer,
    pub roster: Vec<RosterEntry>,
    pub assignment: Assignment,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub admin_token: Option<String>,
}

impl ProjectMeta {
    pub fn annotator(&self, id: &str) -> Option<&RosterEntry> {
        self.roster.iter().find(|r| r.annotator_id == id)
    }
}

/// The current annotation of one segment by one annotator. One log line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entry {
    pub segment_id: String,
    pub annotator_id: String,
    pub version: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    pub spans: Vec<ErrorSpan>,
}

pub type Key = (String, String);

impl Entry {
    pub fn key(&self) -> Key {
        (self.segment_id.clone(), self.annotator_id.clone())
    }
}

/// Immutable snapshot of a project; replaced wholesale on every write.
#[derive(Debug, Clone)]
pub struct ProjectState {
    pub meta: Arc<ProjectMeta>,
    pub schema: Arc<TaxonomySchema>,
    pub corpus: Arc<Corpus>,
    /// Corpus indices per annotator, in assignment order.
    pub assignments: Arc<BTreeMap<String, Vec<usize>>>,
    pub entries: BTreeMap<Key, Arc<Entry>>,
}

impl ProjectState {
    pub fn new(meta: ProjectMeta, schema: TaxonomySchema, corpus: Corpus) -> ProjectState {
        let dealt = meta.assignment.deal(corpus.len(), meta.roster.len());
        let assignments = meta
            .roster
            .iter()
            .zip(dealt)
            .map(|(r, idx)| (r.annotator_id.clone(), idx))
            .collect();
        ProjectState {
            meta: Arc::new(meta),
            schema: Arc::new(schema),
            corpus: Arc::new(corpus),
            assignments: Arc::new(assignments),
            entries: BTreeMap::new(),
        }
    }

    pub fn version(&self, segment_id: &str, annotator_id: &str) -> u64 {
        self.entry(segment_id, annotator_id).map_or(0, |e| e.version)
    }

    pub fn entry(&self, segment_id: &str, annotator_id: &str) -> Option<&Arc<Entry>> {
        self.entries
            .get(&(segment_id.to_string(), annotator_id.to_string()))
    }

    pub fn is_assigned(&self, segment_id: &str, annotator_id: &str) -> bool {
        self.assignments.get(annotator_id).is_some_and(|idx| {
            idx.iter()
                .any(|&i| self.corpus.segments()[i].segment_id == segment_id)
        })
    }

    /// Apply a logged entry if it is newer than what is held. Replaying the
    /// same entry twice is a no-op.
    pub fn apply(&mut self, entry: Entry) -> bool {
        if entry.version <= self.version(&entry.segment_id, &entry.annotator_id) {
            return false;
        }
        self.entries.insert(entry.key(), Arc::new(entry));
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_overlap_gives_everyone_everything() {
        let d = Assignment::default().deal(5, 3);
        assert!(d.iter().all(|v| *v == vec![0, 1, 2, 3, 4]));
    }

    #[test]
    fn partial_overlap_shares_a_prefix() {
        let d = Assignment { overlap: 0.4 }.deal(10, 2);
        assert_eq!(d[0], vec![0, 1, 2, 3, 4, 6, 8]);
        assert_eq!(d[1], vec![0, 1, 2, 3, 5, 7, 9]);
    }

    #[test]
    fn zero_overlap_partitions() {
        let d = Assignment { overlap: 0.0 }.deal(7, 3);
        let mut all: Vec<usize> = d.concat();
        all.sort();
        assert_eq!(all, (0..7).collect::<Vec<_>>());
    }
}

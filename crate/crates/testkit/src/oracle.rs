//! Slow, obvious re-implementations used as test oracles.

use std::collections::HashSet;

use lqm_core::{ErrorSpan, Severity};

/// Weights as plain numbers, in the order minor, major, critical.
#[derive(Debug, Clone, Copy)]
pub struct Weights {
    pub minor: f64,
    pub major: f64,
    pub critical: f64,
    pub per_type: f64,
}

impl Default for Weights {
    fn default() -> Self {
        Weights {
            minor: 1.0,
            major: 5.0,
            critical: 25.0,
            per_type: 1.0,
        }
    }
}

pub fn count_words(text: &str) -> usize {
    let mut words = 0;
    let mut inside = false;
    for c in text.chars() {
        if c.is_whitespace() {
            inside = false;
        } else if !inside {
            inside = true;
            words += 1;
        }
    }
    words
}

pub fn mass(severities: &[Severity], w: Weights) -> f64 {
    let mut total = 0.0;
    for s in severities {
        let base = match s {
            Severity::Minor => w.minor,
            Severity::Major => w.major,
            Severity::Critical => w.critical,
        };
        total += base * w.per_type;
    }
    total
}

/// Normalised segment score in [0, 100].
pub fn segment_score(severities: &[Severity], target: &str, w: Weights) -> f64 {
    let words = count_words(target) as f64;
    let raw = 100.0 * (1.0 - mass(severities, w) / words);
    if raw < 0.0 {
        0.0
    } else {
        raw
    }
}

/// Micro score from per-segment `(severities, target)`.
pub fn micro(items: &[(Vec<Severity>, String)], w: Weights) -> f64 {
    let mut m = 0.0;
    let mut l = 0usize;
    for (sev, text) in items {
        m += mass(sev, w);
        l += count_words(text);
    }
    let raw = 100.0 - 100.0 * m / l as f64;
    if raw < 0.0 {
        0.0
    } else {
        raw
    }
}

pub fn macro_mean(items: &[(Vec<Severity>, String)], w: Weights) -> f64 {
    let total: f64 = items.iter().map(|(s, t)| segment_score(s, t, w)).sum();
    total / items.len() as f64
}

/// Reference BLEU-4 over token lists. Clipped counts come from direct
/// scanning rather than a count table.
pub fn bleu(hyp: &[&str], reference: &[&str]) -> f64 {
    let occurrences = |tokens: &[&str], gram: &[&str]| -> usize {
        if tokens.len() < gram.len() {
            return 0;
        }
        (0..=tokens.len() - gram.len())
            .filter(|&j| &tokens[j..j + gram.len()] == gram)
            .count()
    };
    let mut precisions = Vec::new();
    let mut unigram_hits = 0;
    let mut denominator_scale = 1.0;
    for n in 1..=4usize {
        if hyp.len() < n {
            break;
        }
        let total = hyp.len() - n + 1;
        let mut hits = 0;
        for i in 0..total {
            let gram = &hyp[i..i + n];
            // This is the k-th occurrence of `gram` in the hypothesis.
            let k = occurrences(&hyp[..i + n], gram);
            if k <= occurrences(reference, gram) {
                hits += 1;
            }
        }
        if n == 1 {
            unigram_hits = hits;
        }
        let p = if hits > 0 {
            hits as f64 / total as f64
        } else if n == 1 {
            0.0
        } else {
            denominator_scale *= 2.0;
            1.0 / (denominator_scale * total as f64)
        };
        precisions.push(p);
    }
    if unigram_hits == 0 {
        return 0.0;
    }
    let bp = if hyp.len() >= reference.len() {
        1.0
    } else {
        (1.0 - reference.len() as f64 / hyp.len() as f64).exp()
    };
    let product: f64 = precisions.iter().product();
    let geo = product.powf(1.0 / precisions.len() as f64);
    (100.0 * bp * geo).min(100.0)
}

fn overlap(a: &ErrorSpan, b: &ErrorSpan) -> usize {
    let lo = a.start.max(b.start);
    let hi = a.end.min(b.end);
    hi.saturating_sub(lo)
}

type Key = (i64, u8, usize, usize, usize, usize, usize, usize);

fn key(a: &[&ErrorSpan], b: &[&ErrorSpan], i: usize, j: usize) -> Key {
    let (x, y) = (a[i], b[j]);
    let exact = x.start == y.start && x.end == y.end;
    (
        -(overlap(x, y) as i64),
        if exact { 0 } else { 1 },
        x.start,
        y.start,
        x.end,
        y.end,
        i,
        j,
    )
}

fn enumerate(
    i: usize,
    a: &[&ErrorSpan],
    b: &[&ErrorSpan],
    min_overlap: usize,
    used: &mut Vec<bool>,
    current: &mut Vec<(usize, usize)>,
    out: &mut Vec<Vec<(usize, usize)>>,
) {
    if i == a.len() {
        out.push(current.clone());
        return;
    }
    enumerate(i + 1, a, b, min_overlap, used, current, out);
    for j in 0..b.len() {
        if !used[j] && overlap(a[i], b[j]) >= min_overlap {
            used[j] = true;
            current.push((i, j));
            enumerate(i + 1, a, b, min_overlap, used, current, out);
            current.pop();
            used[j] = false;
        }
    }
}

/// Index pairs of the one-to-one matching the greedy procedure must return:
/// among all maximal matchings, the one whose pairs, sorted by priority,
/// form the smallest sequence.
pub fn matching(a: &[&ErrorSpan], b: &[&ErrorSpan], min_overlap: usize) -> Vec<(usize, usize)> {
    let min_overlap = min_overlap.max(1);
    let mut all = Vec::new();
    enumerate(0, a, b, min_overlap, &mut vec![false; b.len()], &mut Vec::new(), &mut all);
    let maximal = |m: &Vec<(usize, usize)>| {
        let ua: HashSet<usize> = m.iter().map(|p| p.0).collect();
        let ub: HashSet<usize> = m.iter().map(|p| p.1).collect();
        !(0..a.len()).any(|i| {
            !ua.contains(&i) && (0..b.len()).any(|j| !ub.contains(&j) && overlap(a[i], b[j]) >= min_overlap)
        })
    };
    all.into_iter()
        .filter(maximal)
        .min_by_key(|m| {
            let mut keys: Vec<Key> = m.iter().map(|&(i, j)| key(a, b, i, j)).collect();
            keys.sort();
            keys
        })
        .unwrap_or_default()
}

/// Largest possible summed overlap over all one-to-one matchings.
pub fn max_total_overlap(a: &[&ErrorSpan], b: &[&ErrorSpan]) -> usize {
    let mut all = Vec::new();
    enumerate(0, a, b, 1, &mut vec![false; b.len()], &mut Vec::new(), &mut all);
    all.iter()
        .map(|m| m.iter().map(|&(i, j)| overlap(a[i], b[j])).sum())
        .max()
        .unwrap_or(0)
}

pub fn f1(tp: usize, fp: usize, fn_: usize) -> Option<f64> {
    let d = 2 * tp + fp + fn_;
    (d > 0).then(|| 2.0 * tp as f64 / d as f64)
}

/// Detection counts `(tp, fp, fn)` over covered character positions.
pub fn char_counts(a: &[&ErrorSpan], b: &[&ErrorSpan]) -> (usize, usize, usize) {
    let cover = |spans: &[&ErrorSpan]| -> HashSet<(String, usize)> {
        spans
            .iter()
            .flat_map(|s| (s.start..s.end).map(move |k| (s.segment_id.clone(), k)))
            .collect()
    };
    let ca = cover(a);
    let cb = cover(b);
    (
        ca.intersection(&cb).count(),
        ca.difference(&cb).count(),
        cb.difference(&ca).count(),
    )
}

/// Overlap and exact detection counts from the reference matching, summed
/// over segments. Each element of `segments` holds one segment's spans.
pub fn span_counts(segments: &[(Vec<&ErrorSpan>, Vec<&ErrorSpan>)], min_overlap: usize) -> [(usize, usize, usize); 2] {
    let mut out = [(0, 0, 0); 2];
    for (a, b) in segments {
        let m = matching(a, b, min_overlap);
        let exact = m
            .iter()
            .filter(|&&(i, j)| a[i].start == b[j].start && a[i].end == b[j].end)
            .count();
        for (slot, tp) in out.iter_mut().zip([m.len(), exact]) {
            slot.0 += tp;
            slot.1 += a.len() - tp;
            slot.2 += b.len() - tp;
        }
    }
    out
}

/// κ for a 2×2 table `[[a, b], [c, d]]` (rows annotator A, columns B).
pub fn kappa_2x2(a: f64, b: f64, c: f64, d: f64) -> f64 {
    2.0 * (a * d - b * c) / ((a + b) * (b + d) + (a + c) * (c + d))
}

/// κ for a general square contingency table.
pub fn kappa_table(t: &[Vec<usize>]) -> f64 {
    let n: usize = t.iter().flatten().sum();
    let n = n as f64;
    let k = t.len();
    let diag: usize = (0..k).map(|i| t[i][i]).sum();
    let p_o = diag as f64 / n;
    let p_e: f64 = (0..k)
        .map(|i| {
            let row: usize = t[i].iter().sum();
            let col: usize = t.iter().map(|r| r[i]).sum();
            row as f64 * col as f64 / (n * n)
        })
        .sum();
    (p_o - p_e) / (1.0 - p_e)
}

/// Expand a contingency table into label pairs.
pub fn table_pairs(t: &[Vec<usize>]) -> Vec<(String, String)> {
    let mut pairs = Vec::new();
    for (i, row) in t.iter().enumerate() {
        for (j, &count) in row.iter().enumerate() {
            for _ in 0..count {
                pairs.push((format!("l{i}"), format!("l{j}")));
            }
        }
    }
    pairs
}

//! Sentence-level BLEU over pluggable tokenization.
//!
//! Clipped n-gram precisions for n = 1..4, uniform weights, the standard
//! brevity penalty, and exponential smoothing for zero higher-order
//! precisions: the k-th zero precision becomes `1 / (2^k · total_n)`. A
//! hypothesis with no unigram match scores 0. Orders for which the hypothesis
//! has no n-grams at all are dropped and the weights renormalized over the
//! remaining orders.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{nfc, Direction};
use crate::exec::Execution;

pub const MAX_ORDER: usize = 4;
pub const SMOOTHING: &str = "exp";
const WORD_BOUNDARY: char = '\u{2581}';

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BleuError {
    #[error("{side} of `{segment_id}` tokenizes to nothing")]
    EmptyTokenization { segment_id: String, side: &'static str },
    #[error("no hypothesis for segment `{segment_id}`")]
    MissingHypothesis { segment_id: String },
    #[error("no reference for segment `{segment_id}`")]
    MissingReference { segment_id: String },
    #[error("pretokenized mode needs token arrays in the input records")]
    NeedsTokens,
    #[error("unknown tokenizer `{0}`; expected whitespace, pretok or subword:<vocab>")]
    UnknownTokenizer(String),
    #[error("record {line}: {message}")]
    Record { line: usize, message: String },
}

/// Greedy longest-match subword vocabulary, one piece per line. A tab and
/// anything after it (e.g. a score column) is ignored.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SubwordVocab {
    pieces: HashSet<String>,
    longest: usize,
}

impl SubwordVocab {
    pub fn parse(source: &str) -> SubwordVocab {
        let pieces: HashSet<String> = source
            .lines()
            .map(|l| l.split('\t').next().unwrap_or_default().trim_end_matches('\r'))
            .filter(|p| !p.is_empty() && !p.starts_with('#'))
            .map(str::to_string)
            .collect();
        let longest = pieces.iter().map(|p| p.chars().count()).max().unwrap_or(1);
        SubwordVocab { pieces, longest }
    }

    pub fn len(&self) -> usize {
        self.pieces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    /// Each whitespace word gets a leading `▁`, then is split left to right
    /// into the longest known pieces; unknown characters become single-char
    /// pieces.
    pub fn tokenize(&self, text: &str) -> Vec<String> {
        let mut out = Vec::new();
        for word in text.split_whitespace() {
            let chars: Vec<char> = std::iter::once(WORD_BOUNDARY).chain(word.chars()).collect();
            let mut i = 0;
            while i < chars.len() {
                let max = self.longest.min(chars.len() - i);
                let mut taken = 1;
                for len in (1..=max).rev() {
                    let candidate: String = chars[i..i + len].iter().collect();
                    if self.pieces.contains(&candidate) {
                        taken = len;
                        break;
                    }
                }
                let piece: String = chars[i..i + taken].iter().collect();
                if piece != WORD_BOUNDARY.to_string() {
                    out.push(piece);
                }
                i += taken;
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TokenizerMode {
    Whitespace,
    Pretokenized,
    Subword(SubwordVocab),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenizerSpec {
    pub mode: TokenizerMode,
    pub lowercase: bool,
}

impl TokenizerSpec {
    pub fn whitespace() -> Self {
        TokenizerSpec {
            mode: TokenizerMode::Whitespace,
            lowercase: false,
        }
    }

    pub fn name(&self) -> String {
        let base = match &self.mode {
            TokenizerMode::Whitespace => "whitespace",
            TokenizerMode::Pretokenized => "pretok",
            TokenizerMode::Subword(_) => "subword",
        };
        if self.lowercase {
            format!("{base}+lc")
        } else {
            base.to_string()
        }
    }

    pub fn tokenize(&self, text: &str) -> Result<Vec<String>, BleuError> {
        let text = if self.lowercase {
            text.to_lowercase()
        } else {
            text.to_string()
        };
        match &self.mode {
            TokenizerMode::Whitespace => Ok(text.split_whitespace().map(str::to_string).collect()),
            TokenizerMode::Subword(vocab) => Ok(vocab.tokenize(&text)),
            TokenizerMode::Pretokenized => Err(BleuError::NeedsTokens),
        }
    }

    /// Apply case folding to tokens supplied by the caller.
    pub fn normalize_tokens(&self, tokens: Vec<String>) -> Vec<String> {
        if self.lowercase {
            tokens.into_iter().map(|t| t.to_lowercase()).collect()
        } else {
            tokens
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BleuScore {
    pub score: f64,
    /// Smoothed precisions as fractions; orders beyond `effective_order` are 0.
    pub precisions: [f64; MAX_ORDER],
    pub matches: [usize; MAX_ORDER],
    pub totals: [usize; MAX_ORDER],
    pub brevity_penalty: f64,
    pub hyp_len: usize,
    pub ref_len: usize,
    pub effective_order: usize,
}

fn ngram_counts<S: AsRef<str>>(tokens: &[S], n: usize) -> HashMap<Vec<&str>, usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            let key: Vec<&str> = w.iter().map(AsRef::as_ref).collect();
            *counts.entry(key).or_insert(0) += 1;
        }
    }
    counts
}

/// BLEU of pre-tokenized sentences.
pub fn bleu_from_tokens<S: AsRef<str>>(hypothesis: &[S], reference: &[S]) -> Result<BleuScore, BleuError> {
    if hypothesis.is_empty() {
        return Err(BleuError::EmptyTokenization {
            segment_id: String::new(),
            side: "hypothesis",
        });
    }
    if reference.is_empty() {
        return Err(BleuError::EmptyTokenization {
            segment_id: String::new(),
            side: "reference",
        });
    }
    let hyp_len = hypothesis.len();
    let ref_len = reference.len();
    let mut matches = [0usize; MAX_ORDER];
    let mut totals = [0usize; MAX_ORDER];
    for n in 1..=MAX_ORDER {
        totals[n - 1] = hyp_len.saturating_sub(n - 1);
        let hyp = ngram_counts(hypothesis, n);
        let refs = ngram_counts(reference, n);
        matches[n - 1] = hyp
            .iter()
            .map(|(g, &c)| c.min(refs.get(g).copied().unwrap_or(0)))
            .sum();
    }

    let brevity_penalty = if hyp_len < ref_len {
        (1.0 - ref_len as f64 / hyp_len as f64).exp()
    } else {
        1.0
    };

    let mut precisions = [0.0; MAX_ORDER];
    let mut effective_order = 0;
    let mut smooth = 1.0;
    for n in 0..MAX_ORDER {
        if totals[n] == 0 {
            break;
        }
        effective_order = n + 1;
        precisions[n] = if matches[n] > 0 {
            matches[n] as f64 / totals[n] as f64
        } else if n == 0 {
            0.0
        } else {
            smooth *= 2.0;
            1.0 / (smooth * totals[n] as f64)
        };
    }

    let score = if matches[0] == 0 {
        0.0
    } else {
        let log_mean = precisions[..effective_order]
            .iter()
            .map(|p| p.ln())
            .sum::<f64>()
            / effective_order as f64;
        (100.0 * brevity_penalty * log_mean.exp()).min(100.0)
    };

    Ok(BleuScore {
        score,
        precisions,
        matches,
        totals,
        brevity_penalty,
        hyp_len,
        ref_len,
        effective_order,
    })
}

pub fn sentence_bleu(hypothesis: &str, reference: &str, tok: &TokenizerSpec) -> Result<BleuScore, BleuError> {
    let h = tok.tokenize(hypothesis)?;
    let r = tok.tokenize(reference)?;
    bleu_from_tokens(&h, &r)
}

/// One tokenized hypothesis/reference pair.
#[derive(Debug, Clone, PartialEq)]
pub struct BleuItem {
    pub segment_id: String,
    pub direction: Direction,
    pub model_id: String,
    pub hypothesis: Vec<String>,
    pub reference: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BleuGroup {
    pub direction: Direction,
    pub model_id: String,
    pub n_segments: usize,
    pub mean_bleu: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BleuReport {
    pub tokenizer: String,
    pub smoothing: String,
    pub max_order: usize,
    pub per_segment: BTreeMap<String, BleuScore>,
    /// Sorted by `(direction, model_id)`.
    pub per_group: Vec<BleuGroup>,
}

impl BleuReport {
    /// Per-segment scores, the shape correlation analysis consumes.
    pub fn segment_scores(&self) -> BTreeMap<String, f64> {
        self.per_segment
            .iter()
            .map(|(k, v)| (k.clone(), v.score))
            .collect()
    }
}

/// Mean sentence BLEU per `(direction, model)` group.
pub fn corpus_bleu_table(items: &[BleuItem], tokenizer: &str, execution: Execution) -> Result<BleuReport, BleuError> {
    let scores = execution.try_map(items, |item| {
        bleu_from_tokens(&item.hypothesis, &item.reference).map_err(|e| match e {
            BleuError::EmptyTokenization { side, .. } => BleuError::EmptyTokenization {
                segment_id: item.segment_id.clone(),
                side,
            },
            other => other,
        })
    })?;
    let mut groups: BTreeMap<(Direction, String), Vec<f64>> = BTreeMap::new();
    for (item, s) in items.iter().zip(&scores) {
        groups
            .entry((item.direction.clone(), item.model_id.clone()))
            .or_default()
            .push(s.score);
    }
    let per_group = groups
        .into_iter()
        .map(|((direction, model_id), v)| BleuGroup {
            direction,
            model_id,
            n_segments: v.len(),
            mean_bleu: v.iter().sum::<f64>() / v.len() as f64,
        })
        .collect();
    Ok(BleuReport {
        tokenizer: tokenizer.to_string(),
        smoothing: SMOOTHING.to_string(),
        max_order: MAX_ORDER,
        per_segment: items
            .iter()
            .map(|i| i.segment_id.clone())
            .zip(scores)
            .collect(),
        per_group,
    })
}

fn record_tokens(rec: &serde_json::Value, field: &str, line: usize) -> Result<Option<Vec<String>>, BleuError> {
    match rec.get(field) {
        None | Some(serde_json::Value::Null) => Ok(None),
        Some(serde_json::Value::Array(items)) => items
            .iter()
            .map(|t| t.as_str().map(nfc))
            .collect::<Option<Vec<_>>>()
            .map(Some)
            .ok_or_else(|| BleuError::Record {
                line,
                message: format!("`{field}` must be an array of strings"),
            }),
        Some(_) => Err(BleuError::Record {
            line,
            message: format!("`{field}` must be an array of strings"),
        }),
    }
}

/// Build BLEU items from segment records. The hypothesis is read from
/// `hyp_field` and the reference from `reference_text`; in pretokenized
/// mode the token arrays `<hyp_field>_tokens` and `reference_tokens` are
/// used instead.
pub fn read_bleu_items(source: &str, hyp_field: &str, tok: &TokenizerSpec) -> Result<Vec<BleuItem>, BleuError> {
    let mut items = Vec::new();
    for (i, text) in source.lines().enumerate() {
        let line = i + 1;
        if text.trim().is_empty() {
            continue;
        }
        let rec: serde_json::Value = serde_json::from_str(text).map_err(|e| BleuError::Record {
            line,
            message: e.to_string(),
        })?;
        let field = |name: &str| -> Result<&str, BleuError> {
            rec.get(name).and_then(|v| v.as_str()).ok_or_else(|| BleuError::Record {
                line,
                message: format!("missing string field `{name}`"),
            })
        };
        let segment_id = field("segment_id")?.to_string();
        let direction = Direction::new(field("source_lang")?, field("target_lang")?);
        let model_id = field("model_id")?.to_string();
        let side = |text_field: &str, tokens_field: &str, missing: BleuError| -> Result<Vec<String>, BleuError> {
            if tok.mode == TokenizerMode::Pretokenized {
                let tokens = record_tokens(&rec, tokens_field, line)?.ok_or(BleuError::NeedsTokens)?;
                return Ok(tok.normalize_tokens(tokens));
            }
            match rec.get(text_field).and_then(|v| v.as_str()) {
                Some(t) => tok.tokenize(&nfc(t)),
                None => Err(missing),
            }
        };
        let hypothesis = side(
            hyp_field,
            &format!("{hyp_field}_tokens"),
            BleuError::MissingHypothesis {
                segment_id: segment_id.clone(),
            },
        )?;
        let reference = side(
            "reference_text",
            "reference_tokens",
            BleuError::MissingReference {
                segment_id: segment_id.clone(),
            },
        )?;
        items.push(BleuItem {
            segment_id,
            direction,
            model_id,
            hypothesis,
            reference,
        });
    }
    Ok(items)
}

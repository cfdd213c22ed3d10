//! CTC prefix beam search with n-gram LM fusion and a word-count bonus,
//! producing ranked n-best hypotheses.

use std::collections::HashMap;

use crate::asr::LogProbMatrix;
use crate::decode::CharNGramLM;
use crate::error::Result;
use crate::eval::tokenize_for_ler;
use crate::vocab::{Vocabulary, BLANK};

#[derive(Debug, Clone, Copy)]
pub struct DecodeParams {
    /// LM weight.
    pub alpha: f64,
    /// Word-count bonus.
    pub beta: f64,
    pub beam: usize,
    pub nbest: usize,
}

impl Default for DecodeParams {
    fn default() -> Self {
        Self {
            alpha: 1.25,
            beta: 1.5,
            beam: 64,
            nbest: 1,
        }
    }
}

/// A ranked decoding hypothesis. The combined score decomposes exactly as
/// `acoustic_logp + alpha * lm_logp + beta * word_count`.
#[derive(Debug, Clone)]
pub struct Hypothesis {
    pub text: String,
    pub acoustic_logp: f64,
    pub lm_logp: f64,
    pub word_count: usize,
    pub score: f64,
}

#[derive(Clone)]
struct Cell {
    /// Log-prob mass of paths for this prefix ending in blank.
    blank: f64,
    /// Log-prob mass of paths ending in the prefix's final symbol.
    non_blank: f64,
    text: String,
    lm_logp: f64,
    word_count: usize,
}

impl Cell {
    fn total_acoustic(&self) -> f64 {
        logsumexp2(self.blank, self.non_blank)
    }

    fn score(&self, alpha: f64, beta: f64) -> f64 {
        self.total_acoustic() + alpha * self.lm_logp + beta * self.word_count as f64
    }
}

fn logsumexp2(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

fn logadd(slot: &mut f64, value: f64) {
    *slot = logsumexp2(*slot, value);
}

/// Prefix beam search. Each prefix keeps separate blank-ending and
/// non-blank-ending acoustic masses; extending a prefix adds the LM
/// conditional (weighted by alpha) and the word bonus when a new token
/// starts. With `alpha = beta = 0` and a beam at least as wide as the number
/// of reachable prefixes, the top hypothesis is the exact max-probability
/// labeling.
pub fn beam_decode(
    logprobs: &LogProbMatrix,
    vocab: &Vocabulary,
    lm: Option<&CharNGramLM>,
    params: &DecodeParams,
) -> Result<Vec<Hypothesis>> {
    assert!(params.beam >= 1, "beam must be at least 1");
    assert!(params.nbest >= 1 && params.nbest <= params.beam, "need 1 <= nbest <= beam");

    let empty = Cell {
        blank: 0.0,
        non_blank: f64::NEG_INFINITY,
        text: String::new(),
        lm_logp: 0.0,
        word_count: 0,
    };
    if logprobs.frames() == 0 {
        return Ok(vec![Hypothesis {
            text: String::new(),
            acoustic_logp: 0.0,
            lm_logp: 0.0,
            word_count: 0,
            score: 0.0,
        }]);
    }

    let mut beam: HashMap<Vec<usize>, Cell> = HashMap::from([(Vec::new(), empty)]);
    for t in 0..logprobs.frames() {
        let row = logprobs.rows().row(t);
        let mut next: HashMap<Vec<usize>, Cell> = HashMap::new();
        for (prefix, cell) in &beam {
            let total = cell.total_acoustic();
            for (k, &lp_k) in row.iter().enumerate() {
                if lp_k == f64::NEG_INFINITY {
                    continue;
                }
                if k == BLANK {
                    let slot = next
                        .entry(prefix.clone())
                        .or_insert_with(|| Cell { blank: f64::NEG_INFINITY, non_blank: f64::NEG_INFINITY, ..cell.clone() });
                    logadd(&mut slot.blank, total + lp_k);
                    continue;
                }
                let is_repeat = prefix.last() == Some(&k);
                if is_repeat {
                    // Same symbol again without a blank in between: stays
                    // the same prefix.
                    let slot = next
                        .entry(prefix.clone())
                        .or_insert_with(|| Cell { blank: f64::NEG_INFINITY, non_blank: f64::NEG_INFINITY, ..cell.clone() });
                    logadd(&mut slot.non_blank, cell.non_blank + lp_k);
                }
                // Extension mass: everything for a fresh symbol, only the
                // blank-ending mass when re-emitting the final symbol.
                let extend_mass = if is_repeat { cell.blank } else { total };
                if extend_mass == f64::NEG_INFINITY {
                    continue;
                }
                let mut new_prefix = prefix.clone();
                new_prefix.push(k);
                let slot = next.entry(new_prefix).or_insert_with(|| {
                    let ch = symbol_char(vocab, k);
                    let mut text = cell.text.clone();
                    text.push(ch);
                    let lm_logp = cell.lm_logp
                        + lm.map_or(0.0, |lm| {
                            let ctx: Vec<char> = cell.text.chars().collect();
                            lm.cond_logp(&ctx, ch)
                        });
                    let word_count = cell.word_count + new_token_started(&cell.text, ch);
                    Cell {
                        blank: f64::NEG_INFINITY,
                        non_blank: f64::NEG_INFINITY,
                        text,
                        lm_logp,
                        word_count,
                    }
                });
                logadd(&mut slot.non_blank, extend_mass + lp_k);
            }
        }
        // Prune to the beam width by combined score.
        let mut entries: Vec<(Vec<usize>, Cell)> = next.into_iter().collect();
        entries.sort_by(|a, b| {
            b.1.score(params.alpha, params.beta)
                .partial_cmp(&a.1.score(params.alpha, params.beta))
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| a.0.cmp(&b.0))
        });
        entries.truncate(params.beam);
        beam = entries.into_iter().collect();
    }

    let mut hyps: Vec<Hypothesis> = beam
        .into_values()
        .map(|cell| Hypothesis {
            acoustic_logp: cell.total_acoustic(),
            lm_logp: cell.lm_logp,
            word_count: cell.word_count,
            score: cell.score(params.alpha, params.beta),
            text: cell.text,
        })
        .collect();
    hyps.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.text.cmp(&b.text))
    });
    hyps.truncate(params.nbest);
    Ok(hyps)
}

fn symbol_char(vocab: &Vocabulary, k: usize) -> char {
    vocab
        .decode(&[k])
        .ok()
        .and_then(|s| s.chars().next())
        .unwrap_or('\u{FFFD}')
}

/// 1 when appending `ch` starts a new scoring token (a CJK character, or a
/// Latin/digit/apostrophe run begun after a boundary), matching the LER
/// tokenization.
fn new_token_started(text: &str, ch: char) -> usize {
    let before = tokenize_for_ler(text).len();
    let mut extended = text.to_string();
    extended.push(ch);
    tokenize_for_ler(&extended).len().saturating_sub(before)
}

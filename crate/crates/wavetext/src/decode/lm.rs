//! Character-level backoff n-gram language model with absolute
//! discounting, serialized in the ARPA text format.

use std::collections::{BTreeSet, HashMap};
use std::io::{BufRead, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Discount mass moved to lower orders.
const DISCOUNT: f64 = 0.75;
/// Sentence-boundary marker used to pad contexts at sentence starts; never
/// predicted as an event.
const BOS: char = '\u{2}';

/// Backoff n-gram model over characters (spaces included). Conditional
/// probabilities interpolate the discounted observed mass with the
/// lower-order distribution, bottoming out at a uniform floor over the
/// character set, so no character in the set ever scores -inf.
#[derive(Debug, Clone)]
pub struct CharNGramLM {
    order: usize,
    charset: Vec<char>,
    /// `probs[k]` holds full interpolated log-probs of observed
    /// (k+1)-grams, keyed by (context string of k chars, predicted char).
    probs: Vec<HashMap<(String, char), f64>>,
    /// `backoffs[k]` holds log backoff weights of observed contexts of
    /// length k (k >= 1); an absent context backs off with weight 1.
    backoffs: Vec<HashMap<String, f64>>,
    /// Log-probability an out-of-set character receives at the unigram
    /// level (the unigram backoff times the uniform floor).
    unk_logp: f64,
}

/// Count tables accumulated with sentence-boundary padding, then finalized
/// into the interpolated tables bottom-up.
pub fn train_char_lm<S: AsRef<str>>(transcripts: &[S], order: usize) -> Result<CharNGramLM> {
    if order == 0 {
        return Err(Error::Config("LM order must be at least 1".into()));
    }
    if transcripts.is_empty() {
        return Err(Error::EmptyInput("no transcripts to train the LM on".into()));
    }
    let sentences: Vec<Vec<char>> = transcripts
        .iter()
        .map(|t| t.as_ref().chars().collect())
        .filter(|s: &Vec<char>| !s.is_empty())
        .collect();
    if sentences.is_empty() {
        return Err(Error::EmptyInput("every transcript is empty".into()));
    }

    let charset: Vec<char> = sentences
        .iter()
        .flatten()
        .copied()
        .collect::<BTreeSet<char>>()
        .into_iter()
        .collect();

    // counts[k]: (context of k chars, next char) -> count.
    let mut counts: Vec<HashMap<(String, char), u64>> = vec![HashMap::new(); order];
    for sent in &sentences {
        for (i, &c) in sent.iter().enumerate() {
            for k in 0..order {
                let mut ctx = String::new();
                for j in 0..k {
                    let pos = i as isize - k as isize + j as isize;
                    ctx.push(if pos < 0 { BOS } else { sent[pos as usize] });
                }
                *counts[k].entry((ctx, c)).or_insert(0) += 1;
            }
        }
    }

    let floor = 1.0 / charset.len() as f64;
    let mut probs: Vec<HashMap<(String, char), f64>> = vec![HashMap::new(); order];
    let mut backoffs: Vec<HashMap<String, f64>> = vec![HashMap::new(); order];

    // Unigrams: discount toward the uniform floor.
    let uni_total: u64 = counts[0].values().sum();
    let uni_distinct = counts[0].len() as f64;
    let uni_bw = DISCOUNT * uni_distinct / uni_total as f64;
    for ((_, c), &n) in &counts[0] {
        let p = (n as f64 - DISCOUNT).max(0.0) / uni_total as f64 + uni_bw * floor;
        probs[0].insert((String::new(), *c), p.ln());
    }
    let unk_logp = (uni_bw * floor).ln();

    // Higher orders interpolate with the already-finalized lower order.
    for k in 1..order {
        let mut ctx_totals: HashMap<String, (u64, u64)> = HashMap::new(); // (total, distinct)
        for ((ctx, _), &n) in &counts[k] {
            let slot = ctx_totals.entry(ctx.clone()).or_insert((0, 0));
            slot.0 += n;
            slot.1 += 1;
        }
        for (ctx, &(total, distinct)) in &ctx_totals {
            let bw = DISCOUNT * distinct as f64 / total as f64;
            backoffs[k].insert(ctx.clone(), bw.ln());
        }
        let lower: Vec<(String, char)> = counts[k].keys().cloned().collect();
        for (ctx, c) in lower {
            let n = counts[k][&(ctx.clone(), c)];
            let (total, _) = ctx_totals[&ctx];
            let bw = backoffs[k][&ctx].exp();
            let shorter: String = ctx.chars().skip(1).collect();
            let p_lower = cond_prob_tables(&probs, &backoffs, unk_logp, &shorter, c).exp();
            let p = (n as f64 - DISCOUNT).max(0.0) / total as f64 + bw * p_lower;
            probs[k].insert((ctx, c), p.ln());
        }
    }

    Ok(CharNGramLM {
        order,
        charset,
        probs,
        backoffs,
        unk_logp,
    })
}

fn cond_prob_tables(
    probs: &[HashMap<(String, char), f64>],
    backoffs: &[HashMap<String, f64>],
    unk_logp: f64,
    context: &str,
    c: char,
) -> f64 {
    let k = context.chars().count();
    if let Some(&p) = probs[k].get(&(context.to_string(), c)) {
        return p;
    }
    if k == 0 {
        return unk_logp;
    }
    let bo = backoffs[k].get(context).copied().unwrap_or(0.0);
    let shorter: String = context.chars().skip(1).collect();
    bo + cond_prob_tables(probs, backoffs, unk_logp, &shorter, c)
}

impl CharNGramLM {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn charset(&self) -> &[char] {
        &self.charset
    }

    /// log p(c | context), backing off from the longest stored context.
    /// `context` is the full preceding text; only the trailing `order - 1`
    /// characters matter, padded with the sentence-start marker.
    pub fn cond_logp(&self, context: &[char], c: char) -> f64 {
        let need = self.order - 1;
        let mut ctx: Vec<char> = Vec::with_capacity(need);
        for i in 0..need {
            let pos = context.len() as isize - need as isize + i as isize;
            ctx.push(if pos < 0 { BOS } else { context[pos as usize] });
        }
        let ctx_str: String = ctx.iter().collect();
        cond_prob_tables(&self.probs, &self.backoffs, self.unk_logp, &ctx_str, c)
    }

    /// Sum of per-character conditional log-probs; the empty text scores 0.
    pub fn logprob(&self, text: &str) -> f64 {
        let chars: Vec<char> = text.chars().collect();
        let mut total = 0.0;
        for (i, &c) in chars.iter().enumerate() {
            total += self.cond_logp(&chars[..i], c);
        }
        total
    }

    /// Write in the ARPA interchange format (log10 probabilities). The
    /// space character is spelled `<space>`, the sentence-start marker
    /// `<s>`, and the out-of-set floor `<unk>`. Contexts that carry a
    /// backoff weight but no probability (sentence-start grams) get the
    /// conventional -99 placeholder.
    pub fn write_arpa(&self, path: impl AsRef<Path>) -> Result<()> {
        const LN10: f64 = std::f64::consts::LN_10;
        let mut sections: Vec<Vec<String>> = Vec::with_capacity(self.order);
        for k in 0..self.order {
            let mut lines = Vec::new();
            if k == 0 {
                lines.push(format!("{:.10}\t<unk>", self.unk_logp / LN10));
            }
            let mut emitted: std::collections::HashSet<String> = std::collections::HashSet::new();
            let mut keys: Vec<&(String, char)> = self.probs[k].keys().collect();
            keys.sort();
            for key in keys {
                let (ctx, c) = key;
                let gram: String = ctx.chars().chain(std::iter::once(*c)).collect();
                let logp = self.probs[k][key] / LN10;
                let bo = if k + 1 < self.order {
                    self.backoffs[k + 1].get(&gram).copied()
                } else {
                    None
                };
                emitted.insert(gram.clone());
                lines.push(match bo {
                    Some(b) => format!("{:.10}\t{}\t{:.10}", logp, spell_gram(&gram), b / LN10),
                    None => format!("{:.10}\t{}", logp, spell_gram(&gram)),
                });
            }
            if k + 1 < self.order {
                let mut ctxs: Vec<&String> = self.backoffs[k + 1]
                    .keys()
                    .filter(|c| c.chars().count() == k + 1 && !emitted.contains(c.as_str()))
                    .collect();
                ctxs.sort();
                for ctx in ctxs {
                    lines.push(format!(
                        "-99\t{}\t{:.10}",
                        spell_gram(ctx),
                        self.backoffs[k + 1][ctx] / LN10
                    ));
                }
            }
            sections.push(lines);
        }

        let file = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(file);
        writeln!(w, "\\data\\")?;
        for (k, lines) in sections.iter().enumerate() {
            writeln!(w, "ngram {}={}", k + 1, lines.len())?;
        }
        for (k, lines) in sections.iter().enumerate() {
            writeln!(w, "\n\\{}-grams:", k + 1)?;
            for line in lines {
                writeln!(w, "{line}")?;
            }
        }
        writeln!(w, "\n\\end\\")?;
        w.flush()?;
        Ok(())
    }

    /// Read a model written by [`CharNGramLM::write_arpa`].
    pub fn read_arpa(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(&path)?;
        let reader = std::io::BufReader::new(file);
        let mut order = 0usize;
        let mut probs: Vec<HashMap<(String, char), f64>> = Vec::new();
        let mut backoffs: Vec<HashMap<String, f64>> = Vec::new();
        let mut unk_logp = f64::NEG_INFINITY;
        let mut charset: BTreeSet<char> = BTreeSet::new();
        let mut current: Option<usize> = None;

        for line in reader.lines() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line == "\\data\\" || line == "\\end\\" {
                continue;
            }
            if let Some(rest) = line.strip_prefix("ngram ") {
                if let Some((k, _)) = rest.split_once('=') {
                    order = order.max(k.trim().parse::<usize>().map_err(|e| {
                        Error::Config(format!("bad ngram count line {line:?}: {e}"))
                    })?);
                }
                continue;
            }
            if line.starts_with('\\') && line.ends_with("-grams:") {
                let k: usize = line[1..line.len() - 7]
                    .parse()
                    .map_err(|e| Error::Config(format!("bad section header {line:?}: {e}")))?;
                while probs.len() < k {
                    probs.push(HashMap::new());
                    backoffs.push(HashMap::new());
                }
                current = Some(k - 1);
                continue;
            }
            let k = current
                .ok_or_else(|| Error::Config(format!("ARPA entry outside a section: {line:?}")))?;
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() < 2 {
                return Err(Error::Config(format!("bad ARPA line {line:?}")));
            }
            let logp: f64 = fields[0]
                .parse()
                .map_err(|e| Error::Config(format!("bad log-prob in {line:?}: {e}")))?;
            if fields[1] == "<unk>" {
                unk_logp = logp * std::f64::consts::LN_10;
                continue;
            }
            let gram = unspell_gram(fields[1])?;
            let chars: Vec<char> = gram.chars().collect();
            let (ctx, c): (String, char) = (
                chars[..chars.len() - 1].iter().collect(),
                *chars.last().unwrap(),
            );
            if logp > -98.0 {
                probs[k].insert((ctx, c), logp * std::f64::consts::LN_10);
                if k == 0 && c != BOS {
                    charset.insert(c);
                }
            }
            if let Some(bo) = fields.get(2) {
                let bo: f64 = bo
                    .parse()
                    .map_err(|e| Error::Config(format!("bad backoff in {line:?}: {e}")))?;
                if k + 1 < order {
                    while backoffs.len() <= k + 1 {
                        backoffs.push(HashMap::new());
                    }
                    backoffs[k + 1].insert(gram.clone(), bo * std::f64::consts::LN_10);
                }
            }
        }
        if order == 0 || probs.is_empty() {
            return Err(Error::Config("ARPA file declares no n-grams".into()));
        }
        while probs.len() < order {
            probs.push(HashMap::new());
        }
        while backoffs.len() < order {
            backoffs.push(HashMap::new());
        }
        Ok(Self {
            order,
            charset: charset.into_iter().collect(),
            probs,
            backoffs,
            unk_logp,
        })
    }
}

fn spell_char(c: char) -> String {
    match c {
        ' ' => "<space>".to_string(),
        BOS => "<s>".to_string(),
        other => other.to_string(),
    }
}

/// A gram is written as its characters joined by spaces.
fn spell_gram(gram: &str) -> String {
    gram.chars().map(spell_char).collect::<Vec<_>>().join(" ")
}

fn unspell_gram(field: &str) -> Result<String> {
    field
        .split(' ')
        .map(|tok| match tok {
            "<space>" => Ok(' '),
            "<s>" => Ok(BOS),
            t if t.chars().count() == 1 => Ok(t.chars().next().unwrap()),
            other => Err(Error::Config(format!("bad ARPA token {other:?}"))),
        })
        .collect()
}

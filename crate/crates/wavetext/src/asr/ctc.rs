//! CTC: per-frame log-probabilities, path collapse, the forward-algorithm
//! loss with its gradient, and greedy decoding.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::vocab::{TokenSequence, Vocabulary, BLANK};

/// `T' x |V|` per-frame log-probabilities; every row must exponentiate to a
/// distribution (checked to 1e-6 at construction).
#[derive(Debug, Clone, PartialEq)]
pub struct LogProbMatrix {
    rows: Array2<f64>,
}

impl LogProbMatrix {
    pub fn new(rows: Array2<f64>) -> Result<Self> {
        for (t, row) in rows.outer_iter().enumerate() {
            let total: f64 = row.iter().map(|&v| v.exp()).sum();
            if !(total.is_finite() && (total - 1.0).abs() <= 1e-6) {
                return Err(Error::Config(format!(
                    "log-prob row {t} exponentiates to {total}, not 1"
                )));
            }
        }
        Ok(Self { rows })
    }

    pub fn rows(&self) -> &Array2<f64> {
        &self.rows
    }

    pub fn frames(&self) -> usize {
        self.rows.nrows()
    }

    pub fn vocab_size(&self) -> usize {
        self.rows.ncols()
    }

    /// Uniform distribution over `vocab_size` symbols at every frame.
    pub fn uniform(frames: usize, vocab_size: usize) -> Self {
        let lp = -(vocab_size as f64).ln();
        Self {
            rows: Array2::from_elem((frames, vocab_size), lp),
        }
    }
}

/// Merge adjacent repeats, then delete blanks.
pub fn collapse_tokens(path: &[usize]) -> TokenSequence {
    let mut out = Vec::new();
    let mut prev: Option<usize> = None;
    for &s in path {
        if prev != Some(s) && s != BLANK {
            out.push(s);
        }
        prev = Some(s);
    }
    out
}

/// Collapse a path of vocabulary indices (blanks allowed) to text.
pub fn collapse(path: &[usize], vocab: &Vocabulary) -> Result<String> {
    vocab.decode(&collapse_tokens(path))
}

fn validate_label(label: &[usize], vocab_size: usize) -> Result<()> {
    if label.is_empty() {
        return Err(Error::Config("CTC label must be non-empty".into()));
    }
    for &t in label {
        if t == BLANK {
            return Err(Error::InvalidToken {
                index: t,
                detail: "labels never contain the blank".into(),
            });
        }
        if t >= vocab_size {
            return Err(Error::InvalidToken {
                index: t,
                detail: format!("vocabulary size is {vocab_size}"),
            });
        }
    }
    Ok(())
}

/// Fewest frames that can emit `label`: one per token plus one separating
/// blank per adjacent repeat.
fn min_frames(label: &[usize]) -> usize {
    let repeats = label.windows(2).filter(|w| w[0] == w[1]).count();
    label.len() + repeats
}

fn logsumexp2(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

fn logsumexp3(a: f64, b: f64, c: f64) -> f64 {
    logsumexp2(logsumexp2(a, b), c)
}

struct Lattice {
    aug: Vec<usize>,
}

impl Lattice {
    fn new(label: &[usize]) -> Self {
        let mut aug = Vec::with_capacity(2 * label.len() + 1);
        aug.push(BLANK);
        for &t in label {
            aug.push(t);
            aug.push(BLANK);
        }
        Self { aug }
    }

    fn len(&self) -> usize {
        self.aug.len()
    }

    fn skip_allowed(&self, s: usize) -> bool {
        s >= 2 && self.aug[s] != BLANK && self.aug[s] != self.aug[s - 2]
    }

    fn forward(&self, lp: &Array2<f64>) -> Array2<f64> {
        let (t_len, s_len) = (lp.nrows(), self.len());
        let mut alpha = Array2::from_elem((t_len, s_len), f64::NEG_INFINITY);
        alpha[[0, 0]] = lp[[0, self.aug[0]]];
        if s_len > 1 {
            alpha[[0, 1]] = lp[[0, self.aug[1]]];
        }
        for t in 1..t_len {
            for s in 0..s_len {
                let stay = alpha[[t - 1, s]];
                let step = if s >= 1 { alpha[[t - 1, s - 1]] } else { f64::NEG_INFINITY };
                let skip = if self.skip_allowed(s) {
                    alpha[[t - 1, s - 2]]
                } else {
                    f64::NEG_INFINITY
                };
                alpha[[t, s]] = logsumexp3(stay, step, skip) + lp[[t, self.aug[s]]];
            }
        }
        alpha
    }

    fn backward(&self, lp: &Array2<f64>) -> Array2<f64> {
        let (t_len, s_len) = (lp.nrows(), self.len());
        let mut beta = Array2::from_elem((t_len, s_len), f64::NEG_INFINITY);
        beta[[t_len - 1, s_len - 1]] = lp[[t_len - 1, self.aug[s_len - 1]]];
        if s_len > 1 {
            beta[[t_len - 1, s_len - 2]] = lp[[t_len - 1, self.aug[s_len - 2]]];
        }
        for t in (0..t_len - 1).rev() {
            for s in 0..s_len {
                let stay = beta[[t + 1, s]];
                let step = if s + 1 < s_len { beta[[t + 1, s + 1]] } else { f64::NEG_INFINITY };
                let skip = if s + 2 < s_len && self.skip_allowed(s + 2) {
                    beta[[t + 1, s + 2]]
                } else {
                    f64::NEG_INFINITY
                };
                beta[[t, s]] = logsumexp3(stay, step, skip) + lp[[t, self.aug[s]]];
            }
        }
        beta
    }
}

/// `-log p(label | logprobs)` by the forward algorithm over the
/// blank-interleaved label, summing every path that collapses to the label.
pub fn ctc_loss(logprobs: &LogProbMatrix, label: &TokenSequence) -> Result<f64> {
    let lp = logprobs.rows();
    validate_label(label, logprobs.vocab_size())?;
    if logprobs.frames() < min_frames(label) {
        return Err(Error::ImpossibleAlignment {
            frames: logprobs.frames(),
            label_len: label.len(),
        });
    }
    let lattice = Lattice::new(label);
    let alpha = lattice.forward(lp);
    let (t_len, s_len) = (logprobs.frames(), lattice.len());
    let tail = if s_len > 1 { alpha[[t_len - 1, s_len - 2]] } else { f64::NEG_INFINITY };
    let log_p = logsumexp2(alpha[[t_len - 1, s_len - 1]], tail);
    if log_p == f64::NEG_INFINITY {
        return Err(Error::ImpossibleAlignment {
            frames: t_len,
            label_len: label.len(),
        });
    }
    if !log_p.is_finite() {
        return Err(Error::NonFinite {
            context: "CTC forward".into(),
        });
    }
    Ok(-log_p)
}

/// Loss plus the gradient with respect to the log-probability matrix.
pub fn ctc_loss_grads(logprobs: &LogProbMatrix, label: &TokenSequence) -> Result<(f64, Array2<f64>)> {
    let lp = logprobs.rows();
    validate_label(label, logprobs.vocab_size())?;
    if logprobs.frames() < min_frames(label) {
        return Err(Error::ImpossibleAlignment {
            frames: logprobs.frames(),
            label_len: label.len(),
        });
    }
    let lattice = Lattice::new(label);
    let alpha = lattice.forward(lp);
    let beta = lattice.backward(lp);
    let (t_len, s_len) = (logprobs.frames(), lattice.len());
    let tail = if s_len > 1 { alpha[[t_len - 1, s_len - 2]] } else { f64::NEG_INFINITY };
    let log_p = logsumexp2(alpha[[t_len - 1, s_len - 1]], tail);
    if log_p == f64::NEG_INFINITY {
        return Err(Error::ImpossibleAlignment {
            frames: t_len,
            label_len: label.len(),
        });
    }

    // d(-log p)/d lp[t][k] = -exp(lse_{s: aug[s]=k}(alpha + beta) - lp - log p),
    // where alpha+beta double-counts lp[t][aug[s]] once.
    let mut dlp = Array2::<f64>::zeros(lp.raw_dim());
    for t in 0..t_len {
        for (s, &sym) in lattice.aug.iter().enumerate() {
            let ab = alpha[[t, s]] + beta[[t, s]];
            if ab == f64::NEG_INFINITY {
                continue;
            }
            dlp[[t, sym]] += (ab - lp[[t, sym]] - log_p).exp();
        }
    }
    dlp.mapv_inplace(|v: f64| -v);
    Ok((-log_p, dlp))
}

/// Per-frame argmax (ties toward the lowest index), then collapse.
pub fn greedy_decode(logprobs: &LogProbMatrix, vocab: &Vocabulary) -> Result<String> {
    let path = greedy_path(logprobs);
    collapse(&path, vocab)
}

pub(crate) fn greedy_path(logprobs: &LogProbMatrix) -> Vec<usize> {
    logprobs
        .rows()
        .outer_iter()
        .map(|row| {
            let mut best = 0usize;
            for (k, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = k;
                }
            }
            best
        })
        .collect()
}

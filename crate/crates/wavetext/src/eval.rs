//! Label-error-rate scoring over mixed Chinese-character / English-word
//! tokens, edit-operation counting, and script-based language
//! classification of decoded text.

use serde::Serialize;

fn is_cjk(c: char) -> bool {
    matches!(c as u32,
        0x4E00..=0x9FFF | 0x3400..=0x4DBF | 0xF900..=0xFAFF)
}

fn is_word_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '\''
}

/// Each CJK character is one token; maximal runs of Latin letters, digits
/// and apostrophes are one token each; whitespace separates runs; any other
/// symbol stands alone as its own token.
pub fn tokenize_for_ler(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut run = String::new();
    for c in text.chars() {
        if is_word_char(c) {
            run.push(c.to_ascii_uppercase());
        } else {
            if !run.is_empty() {
                tokens.push(std::mem::take(&mut run));
            }
            if is_cjk(c) || !c.is_whitespace() {
                tokens.push(c.to_string());
            }
        }
    }
    if !run.is_empty() {
        tokens.push(run);
    }
    tokens
}

/// Insertion/deletion/substitution counts of a minimal edit script.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct EditOps {
    pub insertions: usize,
    pub deletions: usize,
    pub substitutions: usize,
}

impl EditOps {
    pub fn total(&self) -> usize {
        self.insertions + self.deletions + self.substitutions
    }
}

/// Unit-cost Levenshtein dynamic program returning the minimizing operation
/// counts; ties prefer substitutions over insert-plus-delete pairs, so the
/// canonical decomposition maximizes the substitution count among minimal
/// scripts. Since `I - D = |hyp| - |ref|` and `I + D + S` is the minimal
/// cost, maximizing S pins I and D uniquely (and mirror-symmetrically).
pub fn edit_distance_ops<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> EditOps {
    let (n, m) = (reference.len(), hypothesis.len());
    // Per cell: (cost, max substitutions among minimal-cost scripts).
    let mut prev: Vec<(usize, usize)> = (0..=m).map(|j| (j, 0)).collect();
    let mut curr = prev.clone();
    for i in 1..=n {
        curr[0] = (i, 0);
        for j in 1..=m {
            let sub_cost = usize::from(reference[i - 1] != hypothesis[j - 1]);
            let mut best = (prev[j - 1].0 + sub_cost, prev[j - 1].1 + sub_cost);
            for cand in [(prev[j].0 + 1, prev[j].1), (curr[j - 1].0 + 1, curr[j - 1].1)] {
                if cand.0 < best.0 || (cand.0 == best.0 && cand.1 > best.1) {
                    best = cand;
                }
            }
            curr[j] = best;
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    let (cost, subs) = prev[m];
    let id_total = cost - subs;
    let diff = m as isize - n as isize;
    EditOps {
        insertions: ((id_total as isize + diff) / 2) as usize,
        deletions: ((id_total as isize - diff) / 2) as usize,
        substitutions: subs,
    }
}

/// Corpus-aggregate label error rate: total edits over total reference
/// tokens (not a mean of per-utterance ratios). Pairs whose reference
/// tokenizes to nothing are excluded and counted.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct LerSummary {
    pub ler: f64,
    pub edits: usize,
    pub reference_tokens: usize,
    pub scored_pairs: usize,
    pub excluded_pairs: usize,
}

pub fn ler<R: AsRef<str>, H: AsRef<str>>(pairs: &[(R, H)]) -> LerSummary {
    let mut edits = 0;
    let mut tokens = 0;
    let mut scored = 0;
    let mut excluded = 0;
    for (r, h) in pairs {
        let r_tok = tokenize_for_ler(r.as_ref());
        if r_tok.is_empty() {
            excluded += 1;
            log::warn!("excluding pair with empty reference from LER");
            continue;
        }
        let h_tok = tokenize_for_ler(h.as_ref());
        edits += edit_distance_ops(&r_tok, &h_tok).total();
        tokens += r_tok.len();
        scored += 1;
    }
    LerSummary {
        ler: if tokens == 0 { 0.0 } else { edits as f64 / tokens as f64 },
        edits,
        reference_tokens: tokens,
        scored_pairs: scored,
        excluded_pairs: excluded,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TextLanguage {
    Zh,
    En,
    Mixed,
}

/// Classify by script composition: zh when at least 90% of the letters are
/// CJK, en when at least 90% are Latin, mixed otherwise (including text
/// with no letters at all).
pub fn classify_language(text: &str) -> TextLanguage {
    let mut cjk = 0usize;
    let mut latin = 0usize;
    for c in text.chars() {
        if is_cjk(c) {
            cjk += 1;
        } else if c.is_ascii_alphabetic() {
            latin += 1;
        }
    }
    let total = cjk + latin;
    if total == 0 {
        return TextLanguage::Mixed;
    }
    let frac_cjk = cjk as f64 / total as f64;
    if frac_cjk >= 0.9 {
        TextLanguage::Zh
    } else if frac_cjk <= 0.1 {
        TextLanguage::En
    } else {
        TextLanguage::Mixed
    }
}

/// The full evaluation report serialized by the `evaluate` command.
#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub ler: f64,
    pub per_language_ler: std::collections::BTreeMap<String, f64>,
    pub language_accuracy: f64,
    pub utterance_count: usize,
    pub excluded_count: usize,
}

pub fn evaluation_report<R: AsRef<str>, H: AsRef<str>>(pairs: &[(R, H)]) -> EvalReport {
    let overall = ler(pairs);
    let mut by_lang: std::collections::BTreeMap<String, Vec<(&str, &str)>> =
        std::collections::BTreeMap::new();
    let mut lang_hits = 0usize;
    let mut lang_total = 0usize;
    for (r, h) in pairs {
        let (r, h) = (r.as_ref(), h.as_ref());
        if tokenize_for_ler(r).is_empty() {
            continue;
        }
        let lang = classify_language(r);
        by_lang
            .entry(format!("{lang:?}").to_lowercase())
            .or_default()
            .push((r, h));
        lang_total += 1;
        if classify_language(h) == lang {
            lang_hits += 1;
        }
    }
    let per_language_ler = by_lang
        .into_iter()
        .map(|(lang, pairs)| (lang, ler(&pairs).ler))
        .collect();
    EvalReport {
        ler: overall.ler,
        per_language_ler,
        language_accuracy: if lang_total == 0 {
            1.0
        } else {
            lang_hits as f64 / lang_total as f64
        },
        utterance_count: overall.scored_pairs,
        excluded_count: overall.excluded_pairs,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn cjk_splits_per_character() {
        assert_eq!(tokenize_for_ler("上升 八千"), vec!["上", "升", "八", "千"]);
    }

    #[test]
    fn latin_splits_on_spaces() {
        assert_eq!(tokenize_for_ler("CLIMB TO"), vec!["CLIMB", "TO"]);
    }

    #[test]
    fn mixed_script_splits_by_rule() {
        assert_eq!(tokenize_for_ler("国航 CCA123"), vec!["国", "航", "CCA123"]);
        assert_eq!(tokenize_for_ler("国航CCA123"), vec!["国", "航", "CCA123"]);
    }

    #[test]
    fn whitespace_collapses() {
        assert_eq!(tokenize_for_ler("  A \t B\n"), vec!["A", "B"]);
        assert!(tokenize_for_ler("   ").is_empty());
    }

    #[test]
    fn identity_has_no_edits() {
        let toks = tokenize_for_ler("上升 CLIMB");
        assert_eq!(
            edit_distance_ops(&toks, &toks),
            EditOps { insertions: 0, deletions: 0, substitutions: 0 }
        );
    }

    #[test]
    fn empty_hypothesis_is_all_deletions() {
        let ops = edit_distance_ops(&["a", "b", "c"], &[]);
        assert_eq!(ops, EditOps { insertions: 0, deletions: 3, substitutions: 0 });
    }

    #[test]
    fn substitution_plus_insertion_case() {
        let ops = edit_distance_ops(&["a", "b", "c"], &["a", "x", "c", "d"]);
        assert_eq!(ops, EditOps { insertions: 1, deletions: 0, substitutions: 1 });
    }

    #[test]
    fn perfect_hypotheses_score_zero() {
        let pairs = vec![("上升 八千", "上升 八千"), ("CLIMB", "CLIMB")];
        assert_eq!(ler(&pairs).ler, 0.0);
    }

    #[test]
    fn one_miss_out_of_three_tokens_is_a_third() {
        let pairs = vec![("上 升 千", "上 千")];
        let summary = ler(&pairs);
        assert!((summary.ler - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn insertions_can_push_ler_above_one() {
        let pairs = vec![("A", "B C D")];
        assert!(ler(&pairs).ler > 1.0);
    }

    #[test]
    fn empty_references_are_excluded_with_a_count() {
        let pairs = vec![("", "something"), ("A", "A")];
        let summary = ler(&pairs);
        assert_eq!(summary.excluded_pairs, 1);
        assert_eq!(summary.scored_pairs, 1);
        assert_eq!(summary.ler, 0.0);
    }

    #[test]
    fn language_classification_follows_script() {
        assert_eq!(classify_language("上升八千"), TextLanguage::Zh);
        assert_eq!(classify_language("CLIMB AND MAINTAIN"), TextLanguage::En);
        assert_eq!(classify_language("国航 CLIMB"), TextLanguage::Mixed);
        assert_eq!(classify_language("123 ..."), TextLanguage::Mixed);
    }

    #[test]
    fn report_aggregates_per_language() {
        let pairs = vec![
            ("上升", "上升"),
            ("CLIMB TO", "CLIMB"),
            ("国航 CLIMB", "国航 CLIMB"),
        ];
        let report = evaluation_report(&pairs);
        assert_eq!(report.utterance_count, 3);
        assert_eq!(report.per_language_ler["zh"], 0.0);
        assert!((report.per_language_ler["en"] - 0.5).abs() < 1e-12);
        assert_eq!(report.per_language_ler["mixed"], 0.0);
        assert_eq!(report.language_accuracy, 1.0);
    }

    fn token_strategy() -> impl Strategy<Value = Vec<&'static str>> {
        proptest::collection::vec(
            proptest::sample::select(vec!["上", "升", "八", "千", "CLIMB", "TO", "CCA", "A1"]),
            0..10,
        )
    }

    proptest! {
        #[test]
        fn distance_identity_and_swap(a in token_strategy(), b in token_strategy()) {
            let same = edit_distance_ops(&a, &a);
            prop_assert_eq!(same.total(), 0);

            let fwd = edit_distance_ops(&a, &b);
            let rev = edit_distance_ops(&b, &a);
            prop_assert_eq!(fwd.total(), rev.total());
            prop_assert_eq!(fwd.insertions, rev.deletions);
            prop_assert_eq!(fwd.deletions, rev.insertions);
            prop_assert_eq!(fwd.substitutions, rev.substitutions);
        }

        #[test]
        fn triangle_inequality_on_totals(
            a in token_strategy(),
            b in token_strategy(),
            c in token_strategy(),
        ) {
            let ab = edit_distance_ops(&a, &b).total();
            let bc = edit_distance_ops(&b, &c).total();
            let ac = edit_distance_ops(&a, &c).total();
            prop_assert!(ac <= ab + bc);
        }

        #[test]
        fn corpus_ler_matches_per_pair_recomputation(
            pairs in proptest::collection::vec(("[A-C 上升]{0,8}", "[A-C 上升]{0,8}"), 0..8)
        ) {
            let summary = ler(&pairs);
            let mut edits = 0usize;
            let mut tokens = 0usize;
            for (r, h) in &pairs {
                let rt = tokenize_for_ler(r);
                if rt.is_empty() { continue; }
                edits += edit_distance_ops(&rt, &tokenize_for_ler(h)).total();
                tokens += rt.len();
            }
            prop_assert_eq!(summary.edits, edits);
            prop_assert_eq!(summary.reference_tokens, tokens);
        }

        #[test]
        fn tokenization_is_idempotent_on_joined_tokens(text in "[a-zA-Z0-9' 上升八千国航]{0,20}") {
            let toks = tokenize_for_ler(&text);
            let joined = toks.join(" ");
            prop_assert_eq!(tokenize_for_ler(&joined), toks);
        }
    }
}

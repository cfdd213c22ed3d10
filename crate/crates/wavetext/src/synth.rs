//! Synthetic tone corpus: utterances over a six-symbol bilingual toy
//! alphabet (two Chinese characters, four Latin letters), each grapheme a
//! pure tone, spaces rendered as silence, with additive noise and a random
//! per-utterance speaking-rate jitter. Deterministic per seed.

use std::path::{Path, PathBuf};

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::corpus::{write_manifest, write_waveform, Language, Utterance, Waveform};
use crate::derive_seed;
use crate::error::{Error, Result};

/// Grapheme-to-frequency map of the toy alphabet.
pub const TOY_TONES: [(char, f64); 6] = [
    ('上', 420.0),
    ('升', 680.0),
    ('A', 1000.0),
    ('B', 1380.0),
    ('C', 1820.0),
    ('D', 2320.0),
];

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub n_utts: usize,
    pub seed: u64,
    pub sample_rate: u32,
    /// Nominal seconds per grapheme tone before rate jitter.
    pub tone_seconds: f64,
    /// Silence seconds rendered for a space.
    pub gap_seconds: f64,
    /// Standard deviation of the additive Gaussian noise.
    pub noise_level: f64,
    /// Per-utterance speaking-rate multiplier drawn from
    /// `[1 - rate_jitter, 1 + rate_jitter]`.
    pub rate_jitter: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_utts: 30,
            seed: 0,
            sample_rate: 16_000,
            tone_seconds: 0.14,
            gap_seconds: 0.12,
            noise_level: 0.02,
            rate_jitter: 0.1,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SynthSummary {
    pub train: usize,
    pub dev: usize,
    pub test: usize,
    pub wav_dir: PathBuf,
    pub train_manifest: PathBuf,
    pub dev_manifest: PathBuf,
    pub test_manifest: PathBuf,
    pub unlabeled_manifest: PathBuf,
}

/// Markov transcript generator. Transitions are deliberately skewed so a
/// character LM trained on the corpus carries real signal.
fn generate_transcript(rng: &mut ChaCha8Rng) -> (String, Language) {
    let kind = rng.random_range(0..10);
    if kind < 4 {
        (zh_phrase(rng), Language::Zh)
    } else if kind < 8 {
        (en_phrase(rng), Language::En)
    } else {
        let text = format!("{} {}", zh_phrase(rng), en_word(rng));
        (text, Language::Mixed)
    }
}

fn zh_phrase(rng: &mut ChaCha8Rng) -> String {
    let len = rng.random_range(2..=5);
    let mut out = String::new();
    let mut current = if rng.random_range(0.0..1.0) < 0.7 { '上' } else { '升' };
    for _ in 0..len {
        out.push(current);
        let p: f64 = rng.random_range(0.0..1.0);
        current = match current {
            '上' if p < 0.8 => '升',
            '上' => '上',
            _ if p < 0.7 => '上',
            _ => '升',
        };
    }
    out
}

fn en_word(rng: &mut ChaCha8Rng) -> String {
    let len = rng.random_range(2..=4);
    let mut out = String::new();
    let mut current = ['A', 'B', 'C', 'D'][rng.random_range(0..4)];
    for _ in 0..len {
        out.push(current);
        let p: f64 = rng.random_range(0.0..1.0);
        current = match current {
            'A' if p < 0.7 => 'B',
            'A' => 'C',
            'B' if p < 0.6 => 'C',
            'B' => 'A',
            'C' if p < 0.7 => 'D',
            'C' => 'A',
            _ if p < 0.6 => 'A',
            _ => 'B',
        };
    }
    out
}

fn en_phrase(rng: &mut ChaCha8Rng) -> String {
    let words = rng.random_range(1..=2);
    (0..words).map(|_| en_word(rng)).collect::<Vec<_>>().join(" ")
}

/// Render a transcript as concatenated tones with noise.
pub fn render_wave(text: &str, config: &SynthConfig, rng: &mut ChaCha8Rng) -> Waveform {
    let rate = config.sample_rate as f64;
    let jitter = 1.0 + config.rate_jitter * rng.random_range(-1.0..1.0);
    let noise = Normal::new(0.0, config.noise_level).unwrap();
    let mut samples: Vec<f64> = Vec::new();
    for ch in text.chars() {
        let (seconds, freq) = if ch == ' ' {
            (config.gap_seconds, None)
        } else {
            let freq = TOY_TONES
                .iter()
                .find(|(g, _)| *g == ch)
                .map(|&(_, f)| f)
                .expect("transcript uses only toy graphemes");
            (config.tone_seconds, Some(freq))
        };
        let n = (seconds * jitter * rate).round() as usize;
        for i in 0..n {
            let t = i as f64 / rate;
            let tone = match freq {
                // Short fade at segment edges avoids clicks.
                Some(f) => {
                    let env = (i.min(n - 1 - i) as f64 / (0.01 * rate)).min(1.0);
                    0.55 * env * (2.0 * std::f64::consts::PI * f * t).sin()
                }
                None => 0.0,
            };
            samples.push((tone + noise.sample(rng)).clamp(-1.0, 1.0));
        }
    }
    Waveform {
        samples,
        sample_rate: config.sample_rate,
    }
}

/// Generate the corpus: WAV files plus train/dev/test manifests (with
/// transcripts) and an unlabeled manifest covering every utterance.
/// Fails below three utterances since each split needs one.
pub fn synth_corpus(out_dir: impl AsRef<Path>, config: &SynthConfig) -> Result<SynthSummary> {
    if config.n_utts < 3 {
        return Err(Error::Usage(format!(
            "need at least 3 utterances to fill train/dev/test, got {}",
            config.n_utts
        )));
    }
    let out_dir = out_dir.as_ref();
    let wav_dir = out_dir.join("wav");
    std::fs::create_dir_all(&wav_dir)?;

    let mut utts = Vec::with_capacity(config.n_utts);
    for i in 0..config.n_utts {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, &format!("utt-{i}")));
        let (text, lang) = generate_transcript(&mut rng);
        let wave = render_wave(&text, config, &mut rng);
        let file = format!("utt_{i:04}.wav");
        write_waveform(wav_dir.join(&file), &wave)?;
        utts.push(Utterance {
            id: format!("utt_{i:04}"),
            audio_path: format!("wav/{file}"),
            duration: wave.duration_seconds(),
            text: Some(text),
            lang,
        });
    }

    // Fixed split proportions, at least one utterance each: the last 15%
    // become the test split, the 15% before them dev, the rest train.
    let n = utts.len();
    let test_n = (n * 15 / 100).max(1);
    let dev_n = (n * 15 / 100).max(1);
    let train_n = n - dev_n - test_n;
    let train = &utts[..train_n];
    let dev = &utts[train_n..train_n + dev_n];
    let test = &utts[train_n + dev_n..];

    let unlabeled: Vec<Utterance> = utts
        .iter()
        .map(|u| Utterance {
            text: None,
            ..u.clone()
        })
        .collect();

    let summary = SynthSummary {
        train: train.len(),
        dev: dev.len(),
        test: test.len(),
        wav_dir,
        train_manifest: out_dir.join("train.jsonl"),
        dev_manifest: out_dir.join("dev.jsonl"),
        test_manifest: out_dir.join("test.jsonl"),
        unlabeled_manifest: out_dir.join("unlabeled.jsonl"),
    };
    write_manifest(&summary.train_manifest, train)?;
    write_manifest(&summary.dev_manifest, dev)?;
    write_manifest(&summary.test_manifest, test)?;
    write_manifest(&summary.unlabeled_manifest, &unlabeled)?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::read_manifest;

    #[test]
    fn corpus_is_byte_identical_per_seed() {
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        let config = SynthConfig {
            n_utts: 6,
            seed: 11,
            ..Default::default()
        };
        synth_corpus(dir_a.path(), &config).unwrap();
        synth_corpus(dir_b.path(), &config).unwrap();
        for name in ["train.jsonl", "dev.jsonl", "test.jsonl", "unlabeled.jsonl"] {
            let a = std::fs::read(dir_a.path().join(name)).unwrap();
            let b = std::fs::read(dir_b.path().join(name)).unwrap();
            assert_eq!(a, b, "{name} differs");
        }
        for i in 0..6 {
            let file = format!("wav/utt_{i:04}.wav");
            let a = std::fs::read(dir_a.path().join(&file)).unwrap();
            let b = std::fs::read(dir_b.path().join(&file)).unwrap();
            assert_eq!(a, b, "{file} differs");
        }
    }

    #[test]
    fn thirty_utterances_partition_across_splits() {
        let dir = tempfile::tempdir().unwrap();
        let config = SynthConfig {
            n_utts: 30,
            seed: 3,
            ..Default::default()
        };
        let summary = synth_corpus(dir.path(), &config).unwrap();
        assert_eq!(summary.train + summary.dev + summary.test, 30);
        assert!(summary.train >= summary.dev && summary.dev >= 1 && summary.test >= 1);

        let all: Vec<Utterance> = ["train.jsonl", "dev.jsonl", "test.jsonl"]
            .iter()
            .flat_map(|m| read_manifest(dir.path().join(m)).unwrap())
            .collect();
        assert_eq!(all.len(), 30);
        let toy: std::collections::HashSet<char> =
            TOY_TONES.iter().map(|&(g, _)| g).chain([' ']).collect();
        for utt in &all {
            let text = utt.text.as_ref().expect("labeled splits carry text");
            assert!(text.chars().all(|c| toy.contains(&c)), "{text:?}");
            assert!(utt.duration > 0.0);
            assert!(dir.path().join(&utt.audio_path).exists());
        }
        let unlabeled = read_manifest(dir.path().join("unlabeled.jsonl")).unwrap();
        assert_eq!(unlabeled.len(), 30);
        assert!(unlabeled.iter().all(|u| u.text.is_none()));
    }

    #[test]
    fn too_few_utterances_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let config = SynthConfig {
            n_utts: 2,
            ..Default::default()
        };
        assert!(matches!(
            synth_corpus(dir.path(), &config),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn rendered_waves_have_language_consistent_labels() {
        let dir = tempfile::tempdir().unwrap();
        let config = SynthConfig {
            n_utts: 20,
            seed: 9,
            ..Default::default()
        };
        synth_corpus(dir.path(), &config).unwrap();
        for utt in read_manifest(dir.path().join("train.jsonl")).unwrap() {
            let text = utt.text.unwrap();
            let expected = match crate::eval::classify_language(&text) {
                crate::eval::TextLanguage::Zh => Language::Zh,
                crate::eval::TextLanguage::En => Language::En,
                crate::eval::TextLanguage::Mixed => Language::Mixed,
            };
            assert_eq!(utt.lang, expected, "{text:?}");
        }
    }
}

//! Data ingestion: waveforms, manifests, the filterbank baseline front-end,
//! chunking for representation learning, and the duration-sorted-then-
//! shuffled batching policy.

mod fbank;

pub use fbank::compute_fbank;

use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::derive_seed;
use crate::error::{Error, Result};

pub const DEFAULT_SAMPLE_RATE: u32 = 16_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Language {
    Zh,
    En,
    Mixed,
    Unknown,
}

/// One manifest row: a pre-segmented utterance on disk.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Utterance {
    pub id: String,
    #[serde(rename = "audio")]
    pub audio_path: String,
    /// Seconds; must be positive.
    pub duration: f64,
    /// Transcript; present in supervised manifests, absent in unlabeled ones.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    pub lang: Language,
}

/// Read a JSON Lines manifest, one utterance object per line.
pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<Utterance>> {
    let file = std::fs::File::open(&path)?;
    let mut utts = Vec::new();
    for (lineno, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let utt: Utterance = serde_json::from_str(&line).map_err(|e| {
            Error::Config(format!(
                "{}:{}: bad manifest row: {e}",
                path.as_ref().display(),
                lineno + 1
            ))
        })?;
        if utt.duration <= 0.0 {
            return Err(Error::Config(format!(
                "utterance {} has non-positive duration {}",
                utt.id, utt.duration
            )));
        }
        utts.push(utt);
    }
    Ok(utts)
}

pub fn write_manifest(path: impl AsRef<Path>, utts: &[Utterance]) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    for utt in utts {
        serde_json::to_writer(&mut w, utt)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Mono audio in [-1, 1] at 8 or 16 kHz.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if !matches!(sample_rate, 8_000 | 16_000) {
            return Err(Error::Config(format!(
                "sample rate must be 8000 or 16000 Hz, got {sample_rate}"
            )));
        }
        if samples.is_empty() {
            return Err(Error::TooShort { needed: 1, got: 0 });
        }
        Ok(Self { samples, sample_rate })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_seconds(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// Per-frame features: a `T x D` matrix plus its frame rate.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    pub frames: Array2<f64>,
    pub frame_rate: f64,
}

/// Load a PCM WAV file as mono samples in [-1, 1], averaging channels and
/// resampling to `target_rate` when the file rate differs. Only 16-bit
/// integer and 32-bit float encodings are accepted.
pub fn load_waveform(path: impl AsRef<Path>, target_rate: u32) -> Result<Waveform> {
    let path = path.as_ref();
    let mut reader = hound::WavReader::open(path).map_err(|e| Error::UnsupportedFormat {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })?;
    let spec = reader.spec();
    let mono: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => {
            let samples: std::result::Result<Vec<i16>, _> = reader.samples::<i16>().collect();
            average_channels(
                &samples?.iter().map(|&s| f64::from(s) / 32768.0).collect::<Vec<_>>(),
                spec.channels,
            )
        }
        (hound::SampleFormat::Float, 32) => {
            let samples: std::result::Result<Vec<f32>, _> = reader.samples::<f32>().collect();
            average_channels(
                &samples?.iter().map(|&s| f64::from(s)).collect::<Vec<_>>(),
                spec.channels,
            )
        }
        (format, bits) => {
            return Err(Error::UnsupportedFormat {
                path: path.to_path_buf(),
                detail: format!("{bits}-bit {format:?} PCM is not supported (use 16-bit int or 32-bit float)"),
            })
        }
    };
    let samples = if spec.sample_rate == target_rate {
        mono
    } else {
        resample_linear(&mono, spec.sample_rate, target_rate)
    };
    Waveform::new(samples, target_rate)
}

/// Write mono samples as 16-bit PCM, clamping to [-1, 1].
pub fn write_waveform(path: impl AsRef<Path>, wave: &Waveform) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: wave.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec)?;
    for &s in &wave.samples {
        let v = (s.clamp(-1.0, 1.0) * 32767.0).round() as i16;
        writer.write_sample(v)?;
    }
    writer.finalize()?;
    Ok(())
}

fn average_channels(interleaved: &[f64], channels: u16) -> Vec<f64> {
    let ch = channels.max(1) as usize;
    interleaved
        .chunks_exact(ch)
        .map(|frame| frame.iter().sum::<f64>() / ch as f64)
        .collect()
}

fn resample_linear(samples: &[f64], src_rate: u32, dst_rate: u32) -> Vec<f64> {
    let n_out = ((samples.len() as u64 * dst_rate as u64) / src_rate as u64) as usize;
    let ratio = src_rate as f64 / dst_rate as f64;
    (0..n_out.max(1))
        .map(|i| {
            let pos = i as f64 * ratio;
            let lo = pos.floor() as usize;
            let frac = pos - lo as f64;
            let a = samples[lo.min(samples.len() - 1)];
            let b = samples[(lo + 1).min(samples.len() - 1)];
            a + (b - a) * frac
        })
        .collect()
}

/// Concatenate waveforms (all at one rate) and cut the stream into
/// consecutive `chunk_seconds` pieces. A trailing remainder shorter than one
/// second is dropped; a longer remainder becomes a final short chunk.
pub fn chunk_for_srl(waves: &[Waveform], chunk_seconds: f64) -> Result<Vec<Waveform>> {
    let Some(first) = waves.first() else {
        return Ok(Vec::new());
    };
    let rate = first.sample_rate;
    if waves.iter().any(|w| w.sample_rate != rate) {
        return Err(Error::Config("all waves must share one sample rate".into()));
    }
    let stream: Vec<f64> = waves.iter().flat_map(|w| w.samples.iter().copied()).collect();
    let chunk_len = ((chunk_seconds * rate as f64).round() as usize).max(1);
    let min_len = rate as usize; // one second

    let mut chunks = Vec::new();
    let mut start = 0;
    while start < stream.len() {
        let end = (start + chunk_len).min(stream.len());
        let piece = &stream[start..end];
        if piece.len() >= min_len || end < stream.len() {
            chunks.push(Waveform {
                samples: piece.to_vec(),
                sample_rate: rate,
            });
        }
        start = end;
    }
    Ok(chunks)
}

/// Batch composition policy on bare durations: epoch 1 (1-based) sorts
/// ascending by duration before grouping; later epochs shuffle uniformly
/// with an RNG keyed on `(seed, epoch)`, so a given epoch's order is
/// reproducible regardless of loader parallelism.
pub fn make_batch_indices(
    durations: &[f64],
    epoch: u64,
    batch_size: usize,
    seed: u64,
) -> Vec<Vec<usize>> {
    assert!(batch_size >= 1, "batch_size must be at least 1");
    let mut order: Vec<usize> = (0..durations.len()).collect();
    if epoch <= 1 {
        order.sort_by(|&a, &b| {
            durations[a]
                .partial_cmp(&durations[b])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        });
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &format!("batch-epoch-{epoch}")));
        order.shuffle(&mut rng);
    }
    order.chunks(batch_size).map(<[usize]>::to_vec).collect()
}

/// [`make_batch_indices`] over manifest rows.
pub fn make_batches(
    manifest: &[Utterance],
    epoch: u64,
    batch_size: usize,
    seed: u64,
) -> Vec<Vec<Utterance>> {
    let durations: Vec<f64> = manifest.iter().map(|u| u.duration).collect();
    make_batch_indices(&durations, epoch, batch_size, seed)
        .into_iter()
        .map(|chunk| chunk.into_iter().map(|i| manifest[i].clone()).collect())
        .collect()
}

//! Command-line orchestration: one stage per invocation, JSON config files
//! with flag overrides, a resolved-config echo next to every artifact, and
//! the exit-code contract (0 ok, 1 usage, 2 runtime, 3 divergence).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde_json::{json, Map, Value};

use crate::asr::{
    greedy_decode, load_asr_checkpoint, train_asr, AsrTrainOptions, BackboneConfig, Preset,
};
use crate::corpus::{load_waveform, read_manifest, Utterance, Waveform, DEFAULT_SAMPLE_RATE};
use crate::decode::{beam_decode, train_char_lm, CharNGramLM, DecodeParams};
use crate::error::{Error, Result};
use crate::eval::evaluation_report;
use crate::pretrain::{pretrain_backbone, PretrainOptions};
use crate::srl::{load_srl_checkpoint, train_srl, SrlConfig, SrlTrainOptions};
use crate::synth::{synth_corpus, SynthConfig};
use crate::vocab::Vocabulary;

/// Environment variable naming the default data root against which
/// relative audio paths are resolved when they are not found next to the
/// manifest.
pub const DATA_ROOT_ENV: &str = "WAVETEXT_DATA_ROOT";

const STAGES: &[&str] = &[
    "vocab-build",
    "srl-train",
    "pretrain",
    "asr-train",
    "lm-train",
    "decode",
    "evaluate",
    "synth-corpus",
];

/// Run a command line (without the program name) and map the outcome onto
/// the exit-code contract.
pub fn run<I>(args: I) -> i32
where
    I: IntoIterator,
    I::Item: Into<String>,
{
    let args: Vec<String> = args.into_iter().map(Into::into).collect();
    match run_command(&args) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Usage(_) => 1,
                Error::Divergence(_) => 3,
                _ => 2,
            }
        }
    }
}

/// Dispatch one stage. Errors bubble up typed so [`run`] can pick the exit
/// code.
pub fn run_command(args: &[String]) -> Result<()> {
    let Some(stage) = args.first() else {
        return Err(Error::Usage(format!(
            "no stage given; expected one of: {}",
            STAGES.join(", ")
        )));
    };
    let flags = Flags::parse(&args[1..])?;
    match stage.as_str() {
        "vocab-build" => vocab_build(flags),
        "srl-train" => srl_train(flags),
        "pretrain" => pretrain(flags),
        "asr-train" => asr_train(flags),
        "lm-train" => lm_train(flags),
        "decode" => decode(flags),
        "evaluate" => evaluate(flags),
        "synth-corpus" => synth(flags),
        other => Err(Error::Usage(format!(
            "unknown stage {other:?}; expected one of: {}",
            STAGES.join(", ")
        ))),
    }
}

// ── Flag handling ────────────────────────────────────────────────────────

/// Key-value flags merged over an optional JSON config file
/// (`--config file.json`); flags win.
struct Flags {
    values: Map<String, Value>,
    /// Every key actually consulted, echoed with its resolved value.
    resolved: std::cell::RefCell<Map<String, Value>>,
}

impl Flags {
    fn parse(args: &[String]) -> Result<Self> {
        let mut cli = Map::new();
        let mut i = 0;
        while i < args.len() {
            let key = args[i]
                .strip_prefix("--")
                .ok_or_else(|| Error::Usage(format!("expected --flag, got {:?}", args[i])))?;
            let value = args
                .get(i + 1)
                .ok_or_else(|| Error::Usage(format!("flag --{key} needs a value")))?;
            cli.insert(key.replace('-', "_"), Value::String(value.clone()));
            i += 2;
        }
        let mut values = Map::new();
        if let Some(Value::String(path)) = cli.get("config") {
            let text = std::fs::read_to_string(path)?;
            let base: Value = serde_json::from_str(&text)?;
            let base = base
                .as_object()
                .ok_or_else(|| Error::Usage(format!("{path}: config must be a JSON object")))?;
            for (k, v) in base {
                values.insert(k.replace('-', "_"), v.clone());
            }
        }
        for (k, v) in cli {
            values.insert(k, v);
        }
        Ok(Self {
            values,
            resolved: std::cell::RefCell::new(Map::new()),
        })
    }

    fn note(&self, key: &str, value: Value) {
        self.resolved.borrow_mut().insert(key.to_string(), value);
    }

    fn str_opt(&self, key: &str) -> Option<String> {
        let v = self.values.get(key)?;
        let s = match v {
            Value::String(s) => s.clone(),
            other => other.to_string(),
        };
        self.note(key, Value::String(s.clone()));
        Some(s)
    }

    fn require(&self, key: &str) -> Result<String> {
        self.str_opt(key)
            .ok_or_else(|| Error::Usage(format!("missing required flag --{}", key.replace('_', "-"))))
    }

    fn path_opt(&self, key: &str) -> Option<PathBuf> {
        self.str_opt(key).map(PathBuf::from)
    }

    fn require_path(&self, key: &str) -> Result<PathBuf> {
        self.require(key).map(PathBuf::from)
    }

    fn u64_or(&self, key: &str, default: u64) -> Result<u64> {
        let out = match self.values.get(key) {
            None => default,
            Some(Value::Number(n)) => n
                .as_u64()
                .ok_or_else(|| Error::Usage(format!("--{key} must be a non-negative integer")))?,
            Some(Value::String(s)) => s
                .parse()
                .map_err(|_| Error::Usage(format!("--{key}: {s:?} is not an integer")))?,
            Some(other) => {
                return Err(Error::Usage(format!("--{key}: unexpected value {other}")))
            }
        };
        self.note(key, json!(out));
        Ok(out)
    }

    fn usize_or(&self, key: &str, default: usize) -> Result<usize> {
        Ok(self.u64_or(key, default as u64)? as usize)
    }

    fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        let out = match self.values.get(key) {
            None => default,
            Some(Value::Number(n)) => n
                .as_f64()
                .ok_or_else(|| Error::Usage(format!("--{key} must be a number")))?,
            Some(Value::String(s)) => s
                .parse()
                .map_err(|_| Error::Usage(format!("--{key}: {s:?} is not a number")))?,
            Some(other) => {
                return Err(Error::Usage(format!("--{key}: unexpected value {other}")))
            }
        };
        self.note(key, json!(out));
        Ok(out)
    }

    fn bool_or(&self, key: &str, default: bool) -> Result<bool> {
        let out = match self.values.get(key) {
            None => default,
            Some(Value::Bool(b)) => *b,
            Some(Value::String(s)) => match s.as_str() {
                "true" | "1" | "yes" => true,
                "false" | "0" | "no" => false,
                other => {
                    return Err(Error::Usage(format!("--{key}: {other:?} is not a boolean")))
                }
            },
            Some(other) => {
                return Err(Error::Usage(format!("--{key}: unexpected value {other}")))
            }
        };
        self.note(key, json!(out));
        Ok(out)
    }

    /// Echo of every option this run actually used.
    fn write_resolved(&self, stage: &str, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut echo = self.resolved.borrow().clone();
        echo.insert("stage".to_string(), Value::String(stage.to_string()));
        let text = serde_json::to_string_pretty(&Value::Object(echo))?;
        std::fs::write(dir.join("resolved_config.json"), text + "\n")?;
        Ok(())
    }
}

// ── Shared helpers ───────────────────────────────────────────────────────

fn resolve_audio(manifest_path: &Path, utt: &Utterance) -> Result<PathBuf> {
    let raw = PathBuf::from(&utt.audio_path);
    if raw.is_absolute() {
        return Ok(raw);
    }
    let beside = manifest_path
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .join(&raw);
    if beside.exists() {
        return Ok(beside);
    }
    if let Ok(root) = std::env::var(DATA_ROOT_ENV) {
        let rooted = Path::new(&root).join(&raw);
        if rooted.exists() {
            return Ok(rooted);
        }
    }
    Ok(beside)
}

fn load_manifest_waves(manifest: &Path) -> Result<Vec<(Utterance, Waveform)>> {
    let utts = read_manifest(manifest)?;
    utts.into_iter()
        .map(|u| {
            let path = resolve_audio(manifest, &u)?;
            let wave = load_waveform(path, DEFAULT_SAMPLE_RATE)?;
            Ok((u, wave))
        })
        .collect()
}

fn srl_config_from_flags(flags: &Flags) -> Result<SrlConfig> {
    let mut config = match flags.str_opt("scale").as_deref() {
        Some("small") => SrlConfig::small(),
        Some("full") | None => SrlConfig::default(),
        Some(other) => {
            return Err(Error::Usage(format!(
                "--scale must be small or full, got {other:?}"
            )))
        }
    };
    config.channels = flags.usize_or("channels", config.channels)?;
    config.context_layers = flags.usize_or("context_layers", config.context_layers)?;
    config.prediction_steps = flags.usize_or("prediction_steps", config.prediction_steps)?;
    config.negatives = flags.usize_or("negatives", config.negatives)?;
    config.chunk_seconds = flags.f64_or("chunk_seconds", config.chunk_seconds)?;
    Ok(config)
}

fn backbone_config_from_flags(flags: &Flags, input_dim: usize) -> Result<BackboneConfig> {
    let mut config = match flags.str_opt("scale").as_deref() {
        Some("small") => BackboneConfig::small(input_dim),
        Some("full") | None => BackboneConfig::default_for(input_dim),
        Some(other) => {
            return Err(Error::Usage(format!(
                "--scale must be small or full, got {other:?}"
            )))
        }
    };
    config.branch_channels = flags.usize_or("branch_channels", config.branch_channels)?;
    config.stride_channels = flags.usize_or("stride_channels", config.stride_channels)?;
    config.lstm_hidden = flags.usize_or("lstm_hidden", config.lstm_hidden)?;
    config.lstm_layers = flags.usize_or("lstm_layers", config.lstm_layers)?;
    Ok(config)
}

fn transcripts_of(utts: &[Utterance]) -> Result<Vec<String>> {
    let texts: Vec<String> = utts.iter().filter_map(|u| u.text.clone()).collect();
    if texts.is_empty() {
        return Err(Error::Config("manifest has no transcripts".into()));
    }
    Ok(texts)
}

// ── Stages ───────────────────────────────────────────────────────────────

fn vocab_build(flags: Flags) -> Result<()> {
    let manifest = flags.require_path("manifest")?;
    let out = flags.require_path("out")?;
    let utts = read_manifest(&manifest)?;
    let vocab = Vocabulary::build(transcripts_of(&utts)?);
    vocab.save(&out)?;
    if let Some(dir) = out.parent() {
        flags.write_resolved("vocab-build", dir)?;
    }
    println!("wrote vocabulary with {} symbols to {}", vocab.len(), out.display());
    Ok(())
}

fn srl_train(flags: Flags) -> Result<()> {
    let manifest = flags.require_path("manifest")?;
    let out_dir = flags.require_path("out_dir")?;
    let config = srl_config_from_flags(&flags)?;
    let opts = SrlTrainOptions {
        epochs: flags.usize_or("epochs", 10)?,
        seed: flags.u64_or("seed", 0)?,
        schedule: None,
        checkpoint_dir: Some(out_dir.clone()),
    };
    flags.write_resolved("srl-train", &out_dir)?;
    let waves: Vec<Waveform> = load_manifest_waves(&manifest)?
        .into_iter()
        .map(|(_, w)| w)
        .collect();
    let (_, _, report) = train_srl(&waves, &config, &opts)?;
    let log = serde_json::to_string_pretty(&json!({
        "iteration_losses": report.iteration_losses,
        "epoch_losses": report.epoch_losses,
    }))?;
    std::fs::write(out_dir.join("train_log.json"), log + "\n")?;
    println!(
        "trained representation model for {} epochs; checkpoint at {}",
        opts.epochs,
        out_dir.join("srl.ckpt").display()
    );
    Ok(())
}

fn pretrain(flags: Flags) -> Result<()> {
    let manifest = flags.require_path("manifest")?;
    let srl_path = flags.require_path("srl")?;
    let out_dir = flags.require_path("out_dir")?;
    let (srl_model, srl_params) = load_srl_checkpoint(&srl_path)?;
    let backbone_config = backbone_config_from_flags(&flags, srl_model.config.channels)?;
    let opts = PretrainOptions {
        epochs: flags.usize_or("epochs", 10)?,
        seed: flags.u64_or("seed", 0)?,
        batch_size: flags.usize_or("batch_size", 64)?,
        schedule: None,
        checkpoint_dir: Some(out_dir.clone()),
    };
    flags.write_resolved("pretrain", &out_dir)?;

    let mut features = Vec::new();
    for (utt, wave) in load_manifest_waves(&manifest)? {
        match srl_model.features(&wave, &srl_params) {
            Ok(f) => features.push(f),
            Err(Error::TooShort { needed, got }) => {
                log::warn!("skipping {}: {got} samples, receptive field needs {needed}", utt.id);
            }
            Err(e) => return Err(e),
        }
    }
    let (_, _, _, report) = pretrain_backbone(&features, &backbone_config, &opts)?;
    let log = serde_json::to_string_pretty(&json!({ "epoch_losses": report.epoch_losses }))?;
    std::fs::write(out_dir.join("train_log.json"), log + "\n")?;
    println!(
        "pretrained backbone for {} epochs; checkpoint at {}",
        opts.epochs,
        out_dir.join("backbone.ckpt").display()
    );
    Ok(())
}

fn asr_train(flags: Flags) -> Result<()> {
    let train_manifest = flags.require_path("train")?;
    let dev_manifest = flags.path_opt("dev");
    let vocab_path = flags.require_path("vocab")?;
    let out_dir = flags.require_path("out_dir")?;
    let preset_name = flags.require("preset")?;
    let preset = Preset::from_name(&preset_name)?;

    let vocab = Vocabulary::load(&vocab_path)?;
    let srl = if preset.use_srl_features {
        let path = flags
            .path_opt("srl")
            .ok_or_else(|| Error::Usage(format!("preset {preset_name} requires --srl <checkpoint>")))?;
        Some(load_srl_checkpoint(path)?)
    } else {
        None
    };
    let backbone_init = if preset.pretrained_backbone {
        let path = flags.path_opt("backbone").ok_or_else(|| {
            Error::Usage(format!("preset {preset_name} requires --backbone <checkpoint>"))
        })?;
        Some(crate::nn::load_checkpoint(path)?.0)
    } else {
        None
    };

    let input_dim = match &srl {
        Some((model, _)) => model.config.channels,
        None => flags.usize_or("mels", 40)?,
    };
    let backbone_config = backbone_config_from_flags(&flags, input_dim)?;
    let opts = AsrTrainOptions {
        preset,
        epochs: flags.usize_or("epochs", 50)?,
        batch_size: flags.usize_or("batch_size", 128)?,
        seed: flags.u64_or("seed", 0)?,
        schedule: None,
        patience: flags.usize_or("patience", 20)?,
        fbank_mels: flags.usize_or("mels", 40)?,
        fbank_win_ms: flags.f64_or("win_ms", 25.0)?,
        fbank_hop_ms: flags.f64_or("hop_ms", 10.0)?,
        checkpoint_dir: Some(out_dir.clone()),
        eval_train_ler_every: flags.usize_or("eval_train_ler_every", 0)?,
        stop_at_zero_train_ler: flags.bool_or("stop_at_zero_train_ler", false)?,
    };
    flags.write_resolved("asr-train", &out_dir)?;

    let train_set = load_manifest_waves(&train_manifest)?;
    let dev_set = match &dev_manifest {
        Some(path) => load_manifest_waves(path)?,
        None => Vec::new(),
    };
    let (_, _, report) = train_asr(
        &train_set,
        &dev_set,
        &vocab,
        srl,
        backbone_init.as_ref(),
        backbone_config,
        &opts,
    )?;
    let log = serde_json::to_string_pretty(&json!({
        "train_losses": report.train_losses,
        "val_losses": report.val_losses,
        "best_epoch": report.best_epoch,
        "train_ler": report.train_ler,
        "stopped_early": report.stopped_early,
    }))?;
    std::fs::write(out_dir.join("train_log.json"), log + "\n")?;
    println!(
        "trained recognizer (preset {preset_name}); best epoch {}; checkpoint at {}",
        report.best_epoch,
        out_dir.join("asr.ckpt").display()
    );
    Ok(())
}

fn lm_train(flags: Flags) -> Result<()> {
    let manifest = flags.require_path("manifest")?;
    let out = flags.require_path("out")?;
    let order = flags.usize_or("order", 4)?;
    let utts = read_manifest(&manifest)?;
    let lm = train_char_lm(&transcripts_of(&utts)?, order)?;
    lm.write_arpa(&out)?;
    if let Some(dir) = out.parent() {
        flags.write_resolved("lm-train", dir)?;
    }
    println!("trained order-{order} character LM; ARPA at {}", out.display());
    Ok(())
}

fn decode(flags: Flags) -> Result<()> {
    let manifest = flags.require_path("manifest")?;
    let ckpt = flags.require_path("ckpt")?;
    let vocab_path = flags.require_path("vocab")?;
    let out = flags.require_path("out")?;
    let greedy = flags.bool_or("greedy", false)?;
    let lm = match flags.path_opt("lm") {
        Some(path) => Some(CharNGramLM::read_arpa(path)?),
        None => None,
    };
    let params = DecodeParams {
        alpha: flags.f64_or("alpha", 1.25)?,
        beta: flags.f64_or("beta", 1.5)?,
        beam: flags.usize_or("beam", 64)?,
        nbest: flags.usize_or("nbest", 1)?,
    };
    let vocab = Vocabulary::load(&vocab_path)?;
    let (model, model_params) = load_asr_checkpoint(&ckpt, &vocab)?;

    let mut lines = Vec::new();
    let mut nbest_rows = Vec::new();
    for (utt, wave) in load_manifest_waves(&manifest)? {
        let lp = model.logprobs(&wave, &vocab, &model_params)?;
        let text = if greedy {
            greedy_decode(&lp, &vocab)?
        } else {
            let hyps = beam_decode(&lp, &vocab, lm.as_ref(), &params)?;
            if params.nbest > 1 {
                nbest_rows.push(json!({
                    "id": utt.id,
                    "hypotheses": hyps
                        .iter()
                        .map(|h| json!({ "text": h.text, "score": h.score }))
                        .collect::<Vec<_>>(),
                }));
            }
            hyps.first().map(|h| h.text.clone()).unwrap_or_default()
        };
        lines.push(text);
    }
    std::fs::write(&out, lines.join("\n") + "\n")?;
    if !nbest_rows.is_empty() {
        let nbest_path = out.with_extension("nbest.jsonl");
        let body: Vec<String> = nbest_rows.iter().map(|r| r.to_string()).collect();
        std::fs::write(nbest_path, body.join("\n") + "\n")?;
    }
    if let Some(dir) = out.parent() {
        flags.write_resolved("decode", dir)?;
    }
    println!("decoded {} utterances to {}", lines.len(), out.display());
    Ok(())
}

fn evaluate(flags: Flags) -> Result<()> {
    let hyps_path = flags.require_path("hyps")?;
    let refs: Vec<String> = match (flags.path_opt("refs"), flags.path_opt("manifest")) {
        (Some(path), _) => std::fs::read_to_string(path)?
            .lines()
            .map(str::to_string)
            .collect(),
        (None, Some(manifest)) => read_manifest(&manifest)?
            .into_iter()
            .map(|u| u.text.unwrap_or_default())
            .collect(),
        (None, None) => {
            return Err(Error::Usage(
                "evaluate needs --refs <file> or --manifest <file>".into(),
            ))
        }
    };
    let hyps: Vec<String> = std::fs::read_to_string(&hyps_path)?
        .lines()
        .map(str::to_string)
        .collect();
    if refs.len() != hyps.len() {
        return Err(Error::Usage(format!(
            "reference and hypothesis files disagree: {} vs {} lines",
            refs.len(),
            hyps.len()
        )));
    }
    let pairs: Vec<(String, String)> = refs.into_iter().zip(hyps).collect();
    let report = evaluation_report(&pairs);
    let text = serde_json::to_string_pretty(&report)?;
    println!("{text}");
    if let Some(out) = flags.path_opt("out") {
        std::fs::write(&out, text + "\n")?;
        if let Some(dir) = out.parent() {
            flags.write_resolved("evaluate", dir)?;
        }
    }
    Ok(())
}

fn synth(flags: Flags) -> Result<()> {
    let out_dir = flags.require_path("out_dir")?;
    let config = SynthConfig {
        n_utts: flags.usize_or("n_utts", 30)?,
        seed: flags.u64_or("seed", 0)?,
        sample_rate: DEFAULT_SAMPLE_RATE,
        tone_seconds: flags.f64_or("tone_seconds", 0.14)?,
        gap_seconds: flags.f64_or("gap_seconds", 0.12)?,
        noise_level: flags.f64_or("noise_level", 0.02)?,
        rate_jitter: flags.f64_or("rate_jitter", 0.1)?,
    };
    let summary = synth_corpus(&out_dir, &config)?;
    flags.write_resolved("synth-corpus", &out_dir)?;
    println!(
        "generated {} utterances ({} train / {} dev / {} test) under {}",
        config.n_utts,
        summary.train,
        summary.dev,
        summary.test,
        out_dir.display()
    );
    Ok(())
}

/// Metadata snapshot usable by callers that need the checkpoint meta block
/// (kept here so the bin stays thin).
pub fn checkpoint_meta(path: &Path) -> Result<BTreeMap<String, String>> {
    crate::nn::load_checkpoint(path).map(|(_, meta)| meta)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_ok(args: &[&str]) {
        let code = run(args.iter().map(|s| s.to_string()));
        assert_eq!(code, 0, "command failed: {args:?}");
    }

    #[test]
    fn unknown_stage_is_a_usage_error() {
        let code = run(["frobnicate"].iter().map(|s| s.to_string()));
        assert_eq!(code, 1);
    }

    #[test]
    fn missing_manifest_flag_is_a_usage_error_and_writes_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("vocab.txt");
        let code = run(["vocab-build", "--out", out.to_str().unwrap()]
            .iter()
            .map(|s| s.to_string()));
        assert_eq!(code, 1);
        assert!(!out.exists());
    }

    #[test]
    fn nonexistent_manifest_file_is_a_runtime_error() {
        let code = run([
            "vocab-build",
            "--manifest",
            "/nonexistent/m.jsonl",
            "--out",
            "/tmp/should_not_exist_vocab.txt",
        ]
        .iter()
        .map(|s| s.to_string()));
        assert_eq!(code, 2);
    }

    #[test]
    fn evaluate_identical_files_reports_zero_ler() {
        let dir = tempfile::tempdir().unwrap();
        let refs = dir.path().join("refs.txt");
        let hyps = dir.path().join("hyps.txt");
        std::fs::write(&refs, "上升 八千\nCLIMB TO\n").unwrap();
        std::fs::write(&hyps, "上升 八千\nCLIMB TO\n").unwrap();
        let report = dir.path().join("report.json");
        run_ok(&[
            "evaluate",
            "--refs",
            refs.to_str().unwrap(),
            "--hyps",
            hyps.to_str().unwrap(),
            "--out",
            report.to_str().unwrap(),
        ]);
        let body: Value = serde_json::from_str(&std::fs::read_to_string(report).unwrap()).unwrap();
        assert_eq!(body["ler"], 0.0);
        assert_eq!(body["utterance_count"], 2);
    }

    #[test]
    fn synth_corpus_then_vocab_and_lm_build() {
        let dir = tempfile::tempdir().unwrap();
        let corpus = dir.path().join("corpus");
        run_ok(&[
            "synth-corpus",
            "--out-dir",
            corpus.to_str().unwrap(),
            "--n-utts",
            "6",
            "--seed",
            "5",
        ]);
        assert!(corpus.join("resolved_config.json").exists());

        let vocab_path = dir.path().join("vocab.txt");
        run_ok(&[
            "vocab-build",
            "--manifest",
            corpus.join("train.jsonl").to_str().unwrap(),
            "--out",
            vocab_path.to_str().unwrap(),
        ]);
        assert!(Vocabulary::load(&vocab_path).unwrap().len() >= 5);

        let lm_path = dir.path().join("lm.arpa");
        run_ok(&[
            "lm-train",
            "--manifest",
            corpus.join("train.jsonl").to_str().unwrap(),
            "--out",
            lm_path.to_str().unwrap(),
            "--order",
            "3",
        ]);
        assert!(CharNGramLM::read_arpa(&lm_path).is_ok());
    }

    #[test]
    fn config_file_values_are_overridden_by_flags() {
        let dir = tempfile::tempdir().unwrap();
        let config_path = dir.path().join("c.json");
        std::fs::write(&config_path, r#"{"n_utts": 3, "seed": 1}"#).unwrap();
        let corpus = dir.path().join("corpus");
        run_ok(&[
            "synth-corpus",
            "--config",
            config_path.to_str().unwrap(),
            "--out-dir",
            corpus.to_str().unwrap(),
            "--n-utts",
            "4",
        ]);
        let resolved: Value = serde_json::from_str(
            &std::fs::read_to_string(corpus.join("resolved_config.json")).unwrap(),
        )
        .unwrap();
        assert_eq!(resolved["n_utts"], 4);
        assert_eq!(resolved["seed"], 1);
        // Four utterances were actually generated.
        let manifest = read_manifest(corpus.join("unlabeled.jsonl")).unwrap();
        assert_eq!(manifest.len(), 4);
    }
}

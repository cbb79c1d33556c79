//! Run configuration: a TOML file with `[features]`, `[model]`, `[train]`,
//! `[data]`, `[eval]` and `[output]` tables. Unknown keys are rejected.
//! Any key can be overridden with `SEGFEAT_<SECTION>_<KEY>`, e.g.
//! `SEGFEAT_TRAIN_EPOCHS=30`.
//!
//! Optional numeric settings use 0 for "unset": `n_fft = 0` picks the next
//! power of two, `head_hidden = 0` uses the LSTM width, `patience = 0`
//! disables early stopping, `max_seg_frames = 0` removes the cap and
//! `clip_norm = 0` disables clipping.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use segfeat_core::data::{AnnotationUnit, NonSpeechConfig};
use segfeat_core::training::{LossSet, LossWeights};
use segfeat_core::{FeatureConfig, ModelConfig, TrainConfig};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeaturesSection {
    pub frame_shift: f64,
    pub window_length: f64,
    pub n_mfcc: usize,
    pub n_mel_filters: usize,
    pub n_fft: usize,
    pub pre_emphasis: f64,
    pub delta_window: usize,
    pub spectral_offsets: Vec<usize>,
    pub normalize: bool,
}

impl Default for FeaturesSection {
    fn default() -> Self {
        let f = FeatureConfig::default();
        FeaturesSection {
            frame_shift: f.frame_shift,
            window_length: f.window_length,
            n_mfcc: f.n_mfcc,
            n_mel_filters: f.n_mel_filters,
            n_fft: f.n_fft.unwrap_or(0),
            pre_emphasis: f.pre_emphasis,
            delta_window: f.delta_window,
            spectral_offsets: f.spectral_offsets,
            normalize: f.normalize,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub hidden: usize,
    pub layers: usize,
    pub head_hidden: usize,
    pub forget_bias: f64,
    pub shared_heads: bool,
    pub mean_span: bool,
    pub end_spans: bool,
    pub bin_head: bool,
    pub seed: u64,
}

impl Default for ModelSection {
    fn default() -> Self {
        let m = ModelConfig::default();
        ModelSection {
            hidden: m.hidden,
            layers: m.layers,
            head_hidden: m.head_hidden.unwrap_or(0),
            forget_bias: m.forget_bias,
            shared_heads: m.shared_heads,
            mean_span: m.mean_span,
            end_spans: m.end_spans,
            bin_head: m.bin_head,
            seed: m.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Any of `segfeat`, `phn`, `bin`.
    pub losses: Vec<String>,
    pub weight_hinge: f64,
    pub weight_phn: f64,
    pub weight_bin: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub patience: usize,
    pub max_seg_frames: usize,
    pub eval_max_seg_frames: usize,
    pub clip_norm: f64,
    /// Share of the training split held out when the manifest has no `val` entries.
    pub val_fraction: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainSection {
            epochs: t.epochs,
            learning_rate: t.learning_rate,
            beta1: t.beta1,
            beta2: t.beta2,
            eps: t.eps,
            losses: vec!["segfeat".into()],
            weight_hinge: t.weights.hinge,
            weight_phn: t.weights.phn,
            weight_bin: t.weights.bin,
            batch_size: t.batch_size,
            seed: t.seed,
            patience: t.patience.unwrap_or(0),
            max_seg_frames: t.max_seg_frames.unwrap_or(0),
            eval_max_seg_frames: t.eval_max_seg_frames.unwrap_or(0),
            clip_norm: t.clip_norm.unwrap_or(0.0),
            val_fraction: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub manifest: String,
    pub sample_rate: u32,
    /// `samples` (`.phn`) or `seconds` (CSV).
    pub annotation_unit: String,
    pub split_nonspeech: bool,
    pub nonspeech_symbols: Vec<String>,
    pub min_nonspeech: f64,
    pub max_lead: f64,
}

impl Default for DataSection {
    fn default() -> Self {
        let n = NonSpeechConfig::default();
        DataSection {
            manifest: String::new(),
            sample_rate: 16000,
            annotation_unit: "samples".into(),
            split_nonspeech: false,
            nonspeech_symbols: n.symbols,
            min_nonspeech: n.min_run,
            max_lead: n.max_lead,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub tolerance: f64,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection { tolerance: segfeat_core::metrics::DEFAULT_TOLERANCE }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub features: FeaturesSection,
    pub model: ModelSection,
    pub train: TrainSection,
    pub data: DataSection,
    pub eval: EvalSection,
    pub output: OutputSection,
}

fn nonzero(v: usize) -> Option<usize> {
    (v > 0).then_some(v)
}

impl RunConfig {
    /// Reads `path` (defaults when `None`), applies `SEGFEAT_*` overrides
    /// from `env`, and validates the result.
    pub fn load(path: Option<&Path>, env: impl IntoIterator<Item = (String, String)>) -> Result<Self, CliError> {
        let text = match path {
            Some(p) if !p.exists() => return Err(CliError::Config(format!("config file {} not found", p.display()))),
            Some(p) => std::fs::read_to_string(p)?,
            None => String::new(),
        };
        Self::from_str_with_env(&text, env)
    }

    pub fn from_str_with_env(text: &str, env: impl IntoIterator<Item = (String, String)>) -> Result<Self, CliError> {
        let mut table: toml::Table = text.parse().map_err(|e| CliError::Config(format!("{e}")))?;
        let defaults = toml::Table::try_from(RunConfig::default()).expect("defaults serialize");
        let mut overrides: Vec<(String, String)> =
            env.into_iter().filter(|(k, _)| k.starts_with("SEGFEAT_")).collect();
        overrides.sort();
        for (var, raw) in overrides {
            let rest = &var["SEGFEAT_".len()..];
            let (section, key, default) = defaults
                .iter()
                .filter_map(|(s, t)| t.as_table().map(|t| (s, t)))
                .flat_map(|(s, t)| t.iter().map(move |(k, v)| (s, k, v)))
                .find(|(s, k, _)| format!("{s}_{k}").to_uppercase() == rest)
                .ok_or_else(|| CliError::Config(format!("unknown override {var}")))?;
            let value = parse_override(&raw, default);
            table
                .entry(section.clone())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()))
                .as_table_mut()
                .ok_or_else(|| CliError::Config(format!("`{section}` must be a table")))?
                .insert(key.clone(), value);
        }
        let cfg: RunConfig = toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.feature_config().validate()?;
        self.model_config().validate()?;
        self.train_config()?.validate()?;
        self.annotation_unit()?;
        if self.data.sample_rate == 0 {
            return Err(CliError::Config("data.sample_rate must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.train.val_fraction) {
            return Err(CliError::Config("train.val_fraction must be in [0, 1]".into()));
        }
        if !(self.data.min_nonspeech > 0.0) || !(self.data.max_lead >= 0.0) {
            return Err(CliError::Config("data.min_nonspeech must be positive and data.max_lead non-negative".into()));
        }
        Ok(())
    }

    pub fn feature_config(&self) -> FeatureConfig {
        let f = &self.features;
        FeatureConfig {
            frame_shift: f.frame_shift,
            window_length: f.window_length,
            n_mfcc: f.n_mfcc,
            n_mel_filters: f.n_mel_filters,
            n_fft: nonzero(f.n_fft),
            pre_emphasis: f.pre_emphasis,
            delta_window: f.delta_window,
            spectral_offsets: f.spectral_offsets.clone(),
            normalize: f.normalize,
        }
    }

    pub fn model_config(&self) -> ModelConfig {
        let m = &self.model;
        ModelConfig {
            input_dim: self.feature_config().feature_dim(),
            hidden: m.hidden,
            layers: m.layers,
            head_hidden: nonzero(m.head_hidden),
            forget_bias: m.forget_bias,
            shared_heads: m.shared_heads,
            mean_span: m.mean_span,
            end_spans: m.end_spans,
            bin_head: m.bin_head,
            seed: m.seed,
        }
    }

    pub fn train_config(&self) -> Result<TrainConfig, CliError> {
        let t = &self.train;
        Ok(TrainConfig {
            epochs: t.epochs,
            learning_rate: t.learning_rate,
            beta1: t.beta1,
            beta2: t.beta2,
            eps: t.eps,
            losses: LossSet::from_names(&t.losses)?,
            weights: LossWeights { hinge: t.weight_hinge, phn: t.weight_phn, bin: t.weight_bin },
            batch_size: t.batch_size,
            seed: t.seed,
            patience: nonzero(t.patience),
            max_seg_frames: nonzero(t.max_seg_frames),
            eval_max_seg_frames: nonzero(t.eval_max_seg_frames),
            clip_norm: (t.clip_norm > 0.0).then_some(t.clip_norm),
            tolerance: self.eval.tolerance,
        })
    }

    pub fn nonspeech_config(&self) -> NonSpeechConfig {
        NonSpeechConfig {
            symbols: self.data.nonspeech_symbols.clone(),
            min_run: self.data.min_nonspeech,
            max_lead: self.data.max_lead,
        }
    }

    pub fn annotation_unit(&self) -> Result<AnnotationUnit, CliError> {
        match self.data.annotation_unit.as_str() {
            "samples" => Ok(AnnotationUnit::Samples),
            "seconds" => Ok(AnnotationUnit::Seconds),
            other => Err(CliError::Config(format!("data.annotation_unit must be `samples` or `seconds`, got `{other}`"))),
        }
    }

    pub fn manifest_path(&self) -> Result<PathBuf, CliError> {
        match self.data.manifest.as_str() {
            "" => Err(CliError::Config("data.manifest is not set".into())),
            p => Ok(PathBuf::from(p)),
        }
    }

    pub fn output_dir(&self) -> Result<PathBuf, CliError> {
        match self.output.dir.as_str() {
            "" => Err(CliError::Config("output.dir is not set".into())),
            p => Ok(PathBuf::from(p)),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

/// A TOML literal when it parses as one; comma lists for array keys; else a string.
fn parse_override(raw: &str, default: &toml::Value) -> toml::Value {
    if let Ok(mut t) = format!("v = {raw}").parse::<toml::Table>() {
        if let Some(v) = t.remove("v") {
            if std::mem::discriminant(&v) == std::mem::discriminant(default)
                || matches!((&v, default), (toml::Value::Integer(_), toml::Value::Float(_)))
            {
                return v;
            }
        }
    }
    if default.is_array() {
        return toml::Value::Array(
            raw.split(',').map(str::trim).filter(|s| !s.is_empty()).map(|s| toml::Value::String(s.into())).collect(),
        );
    }
    toml::Value::String(raw.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn no_env() -> Vec<(String, String)> {
        vec![]
    }

    #[test]
    fn defaults_validate() {
        let c = RunConfig::from_str_with_env("", no_env()).unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!(c.train_config().unwrap(), TrainConfig::default());
        assert_eq!(c.model_config(), ModelConfig::default());
        assert_eq!(c.feature_config(), FeatureConfig::default());
    }

    #[test]
    fn sections_parse() {
        let text = "[train]\nepochs = 3\nlosses = [\"segfeat\", \"phn\"]\n[model]\nhidden = 8\n[features]\nn_fft = 512\n";
        let c = RunConfig::from_str_with_env(text, no_env()).unwrap();
        assert_eq!(c.train.epochs, 3);
        assert!(c.train_config().unwrap().losses.phn);
        assert_eq!(c.model_config().hidden, 8);
        assert_eq!(c.feature_config().n_fft, Some(512));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        for text in ["[train]\nepoch = 3\n", "[nope]\nx = 1\n", "top = 1\n"] {
            assert!(matches!(RunConfig::from_str_with_env(text, no_env()), Err(CliError::Config(_))), "{text}");
        }
        let env = vec![("SEGFEAT_TRAIN_EPOCH".to_string(), "3".to_string())];
        assert!(matches!(RunConfig::from_str_with_env("", env), Err(CliError::Config(_))));
    }

    #[test]
    fn env_overrides() {
        let env = vec![
            ("SEGFEAT_TRAIN_EPOCHS".to_string(), "7".to_string()),
            ("SEGFEAT_TRAIN_LEARNING_RATE".to_string(), "1e-3".to_string()),
            ("SEGFEAT_TRAIN_LOSSES".to_string(), "segfeat,phn".to_string()),
            ("SEGFEAT_DATA_MANIFEST".to_string(), "/tmp/m.csv".to_string()),
            ("SEGFEAT_FEATURES_NORMALIZE".to_string(), "false".to_string()),
            ("SEGFEAT_EVAL_TOLERANCE".to_string(), "0".to_string()),
            ("HOME".to_string(), "/root".to_string()),
        ];
        let c = RunConfig::from_str_with_env("[train]\nepochs = 2\n", env).unwrap();
        assert_eq!(c.train.epochs, 7);
        assert_eq!(c.train.learning_rate, 1e-3);
        assert_eq!(c.train.losses, ["segfeat", "phn"]);
        assert_eq!(c.data.manifest, "/tmp/m.csv");
        assert!(!c.features.normalize);
        assert_eq!(c.eval.tolerance, 0.0);
    }

    #[test]
    fn invalid_values_are_config_errors() {
        for text in ["[train]\nepochs = 0\n", "[train]\nlosses = []\n", "[train]\nlosses = [\"x\"]\n", "[data]\nannotation_unit = \"ms\"\n", "[features]\nn_mfcc = 40\n", "[train]\nepochs = \"many\"\n"] {
            let e = RunConfig::from_str_with_env(text, no_env()).unwrap_err();
            assert_eq!(e.exit_code(), 3, "{text}: {e}");
        }
    }

    #[test]
    fn toml_round_trip() {
        let mut c = RunConfig::default();
        c.train.epochs = 12;
        c.data.manifest = "m.csv".into();
        assert_eq!(RunConfig::from_str_with_env(&c.to_toml(), no_env()).unwrap(), c);
    }
}

//! Corpus handling: TIMIT-style annotations, CSV manifests, long-utterance
//! splitting at non-speech, and a seeded synthetic corpus.

mod annotation;
mod nonspeech;
mod synth;

pub use annotation::{AnnotatedSegment, Annotation, AnnotationUnit};
pub use nonspeech::{split_nonspeech, NonSpeechConfig};
pub use synth::{synth_corpus, write_synth_corpus, SynthConfig, SynthUtterance};

use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::features::{assemble_features, read_wav, FeatureConfig, FeatureStats};
use crate::training::LabeledUtterance;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub wav: PathBuf,
    pub annotation: PathBuf,
    pub split: Split,
}

impl ManifestEntry {
    /// Utterance key: the WAV file stem.
    pub fn key(&self) -> String {
        self.wav.file_stem().map_or_else(|| self.wav.display().to_string(), |s| s.to_string_lossy().into_owned())
    }
}

/// CSV `wav_path,ann_path,split`. Relative paths are resolved against the
/// manifest's directory; a leading `wav_path,...` header is skipped.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusManifest {
    pub entries: Vec<ManifestEntry>,
    pub sample_rate: u32,
    pub unit: AnnotationUnit,
}

impl CorpusManifest {
    pub fn parse(text: &str, base: &Path, sample_rate: u32, unit: AnnotationUnit, path: &Path) -> Result<Self> {
        let err = |reason: String| Error::Manifest { path: path.to_path_buf(), reason };
        let mut entries = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || (n == 0 && line.starts_with("wav_path")) {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 3 {
                return Err(err(format!("line {}: expected `wav_path,ann_path,split`", n + 1)));
            }
            let split = fields[2].parse().map_err(|e| err(format!("line {}: {e}", n + 1)))?;
            entries.push(ManifestEntry { wav: base.join(fields[0]), annotation: base.join(fields[1]), split });
        }
        Ok(CorpusManifest { entries, sample_rate, unit })
    }

    pub fn read(path: impl AsRef<Path>, sample_rate: u32, unit: AnnotationUnit) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&std::fs::read_to_string(path)?, base, sample_rate, unit, path)
    }

    /// Writes paths relative to `path`'s directory when possible.
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let base = path.parent().unwrap_or(Path::new(""));
        let rel = |p: &Path| p.strip_prefix(base).unwrap_or(p).display().to_string();
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(w, "wav_path,ann_path,split")?;
        for e in &self.entries {
            writeln!(w, "{},{},{}", rel(&e.wav), rel(&e.annotation), e.split.as_str())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn entries_in(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }
}

/// Loads one manifest entry with raw (unnormalized) features.
pub fn load_utterance(entry: &ManifestEntry, manifest: &CorpusManifest, cfg: &FeatureConfig) -> Result<LabeledUtterance> {
    let wave = read_wav(&entry.wav)?;
    if wave.sample_rate != manifest.sample_rate {
        return Err(Error::SampleRateMismatch {
            path: entry.wav.clone(),
            found: wave.sample_rate,
            expected: manifest.sample_rate,
        });
    }
    let ann = Annotation::read(&entry.annotation, manifest.unit, manifest.sample_rate)?;
    let features = assemble_features(&wave, cfg, None)?;
    let (gold, symbols) = ann.to_frames(cfg.shift_samples(wave.sample_rate), features.rows())?;
    LabeledUtterance::new(entry.key(), features, gold, Some(symbols))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub train: Vec<LabeledUtterance>,
    pub val: Vec<LabeledUtterance>,
    pub test: Vec<LabeledUtterance>,
    /// Statistics applied to every split; `None` when normalization is off.
    pub stats: Option<FeatureStats>,
    /// Symbols in order of first appearance over the manifest.
    pub inventory: Vec<String>,
}

impl Corpus {
    pub fn split(&self, split: Split) -> &[LabeledUtterance] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }
}

/// Loads every entry. With normalization on, features are z-scored with
/// `stats`, or with statistics of the training split when `stats` is `None`.
pub fn load_corpus(manifest: &CorpusManifest, cfg: &FeatureConfig, stats: Option<FeatureStats>) -> Result<Corpus> {
    cfg.validate()?;
    let mut loaded = Vec::with_capacity(manifest.entries.len());
    for e in &manifest.entries {
        loaded.push((e.split, load_utterance(e, manifest, cfg)?));
    }
    let stats = if cfg.normalize {
        match stats {
            Some(s) => Some(s),
            None => {
                let train: Vec<_> = loaded.iter().filter(|(s, _)| *s == Split::Train).map(|(_, u)| &u.features).collect();
                if train.is_empty() {
                    None
                } else {
                    Some(FeatureStats::from_matrices(train)?)
                }
            }
        }
    } else {
        None
    };
    let mut inventory: Vec<String> = Vec::new();
    let mut corpus = Corpus { train: vec![], val: vec![], test: vec![], stats: stats.clone(), inventory: vec![] };
    for (split, mut u) in loaded {
        for p in u.phonemes.iter().flatten() {
            if !inventory.contains(p) {
                inventory.push(p.clone());
            }
        }
        if let Some(s) = &stats {
            u.features = u.features.normalized(s)?;
        }
        match split {
            Split::Train => corpus.train.push(u),
            Split::Val => corpus.val.push(u),
            Split::Test => corpus.test.push(u),
        }
    }
    corpus.inventory = inventory;
    Ok(corpus)
}

/// Seeded shuffle, then the first `floor(n * val_fraction)` items form the
/// validation part.
pub fn split_train_val<T>(items: Vec<T>, val_fraction: f64, seed: u64) -> Result<(Vec<T>, Vec<T>)> {
    if items.is_empty() {
        return Err(Error::EmptyData("nothing to split".into()));
    }
    if !(0.0..=1.0).contains(&val_fraction) {
        return Err(Error::InvalidTraining(format!("validation fraction {val_fraction} outside [0, 1]")));
    }
    let n_val = (items.len() as f64 * val_fraction + 1e-9).floor() as usize;
    if n_val == 0 {
        log::warn!("{} items with fraction {val_fraction} leave no validation data", items.len());
    }
    let mut slots: Vec<Option<T>> = items.into_iter().map(Some).collect();
    let mut order: Vec<usize> = (0..slots.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut val = Vec::with_capacity(n_val);
    let mut train = Vec::with_capacity(slots.len() - n_val);
    for (rank, i) in order.into_iter().enumerate() {
        let item = slots[i].take().expect("each index once");
        if rank < n_val {
            val.push(item);
        } else {
            train.push(item);
        }
    }
    Ok((train, val))
}

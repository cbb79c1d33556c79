use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::{Path, PathBuf};

use log::{info, warn};

use segfeat_core::data::{
    load_corpus, split_nonspeech, split_train_val, synth_corpus, write_synth_corpus, Annotation, CorpusManifest,
    ManifestEntry, SynthConfig,
};
use segfeat_core::features::{assemble_features, read_wav, write_feature_bin, write_feature_csv};
use segfeat_core::metrics::evaluate_times;
use segfeat_core::training::{fit_with, write_epoch_logs, EpochLog};
use segfeat_core::{
    dp_segment, dp_segment_k, Error, EvalReport, FeatureStats, FrameMatrix, SegmentalModel, Split, TolerancePolicy,
    Waveform,
};

use crate::{CliResult, RunConfig};

fn read_manifest(path: &Path, cfg: &RunConfig, sample_rate: u32) -> CliResult<CorpusManifest> {
    Ok(CorpusManifest::read(path, sample_rate, cfg.annotation_unit()?)?)
}

fn check_unique_keys<'a>(entries: impl IntoIterator<Item = &'a ManifestEntry>) -> CliResult<()> {
    let mut seen = BTreeSet::new();
    for e in entries {
        if !seen.insert(e.key()) {
            return Err(Error::KeyMismatch(format!("utterance key `{}` appears twice", e.key())).into());
        }
    }
    Ok(())
}

fn read_checked_wav(path: &Path, expected: Option<u32>) -> CliResult<Waveform> {
    let wave = read_wav(path)?;
    if let Some(rate) = expected {
        if wave.sample_rate != rate {
            return Err(Error::SampleRateMismatch { path: path.to_path_buf(), found: wave.sample_rate, expected: rate }.into());
        }
    }
    Ok(wave)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeaturesSummary {
    pub utterances: usize,
    pub stats: Option<FeatureStats>,
}

/// Writes `<key>.feat` (and `<key>.csv` when `csv` is set) for every manifest
/// entry plus `stats.csv`. Statistics come from the training split, or from
/// everything when the manifest has no training entries.
pub fn features(cfg: &RunConfig, manifest: &Path, out: &Path, csv: bool) -> CliResult<FeaturesSummary> {
    let fc = cfg.feature_config();
    let m = read_manifest(manifest, cfg, cfg.data.sample_rate)?;
    if m.entries.is_empty() {
        return Err(Error::EmptyData(format!("{} lists no utterances", manifest.display())).into());
    }
    check_unique_keys(&m.entries)?;
    let mut feats: Vec<(&ManifestEntry, FrameMatrix)> = Vec::with_capacity(m.entries.len());
    for e in &m.entries {
        let wave = read_checked_wav(&e.wav, Some(m.sample_rate))?;
        feats.push((e, assemble_features(&wave, &fc, None)?));
    }
    let stats = if fc.normalize {
        let train: Vec<&FrameMatrix> = feats.iter().filter(|(e, _)| e.split == Split::Train).map(|(_, f)| f).collect();
        Some(if train.is_empty() {
            warn!("no training entries; statistics are computed over the whole manifest");
            FeatureStats::from_matrices(feats.iter().map(|(_, f)| f))?
        } else {
            FeatureStats::from_matrices(train)?
        })
    } else {
        None
    };
    std::fs::create_dir_all(out)?;
    for (e, f) in &feats {
        let f = match &stats {
            Some(s) => f.normalized(s)?,
            None => f.clone(),
        };
        write_feature_bin(out.join(format!("{}.feat", e.key())), &f)?;
        if csv {
            write_feature_csv(out.join(format!("{}.csv", e.key())), &f)?;
        }
    }
    let mut w = std::io::BufWriter::new(std::fs::File::create(out.join("stats.csv"))?);
    writeln!(w, "dim,mean,std")?;
    let dim = feats[0].1.cols();
    for d in 0..dim {
        let (mean, std) = stats.as_ref().map_or((0.0, 1.0), |s| (s.mean[d], s.std[d]));
        writeln!(w, "{d},{mean},{std}")?;
    }
    w.flush()?;
    info!("wrote features for {} utterances to {}", feats.len(), out.display());
    Ok(FeaturesSummary { utterances: feats.len(), stats })
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub best_epoch: usize,
    /// Validation report of the best epoch.
    pub best_val: EvalReport,
    pub logs: Vec<EpochLog>,
    pub best_model: PathBuf,
    pub last_model: PathBuf,
}

/// Trains on `data.manifest` and writes `best.model`, `last.model`,
/// `epochs.csv`, `val_report.csv` and the resolved `config.toml` to
/// `output.dir`.
pub fn train(cfg: &RunConfig) -> CliResult<TrainSummary> {
    let fc = cfg.feature_config();
    let tc = cfg.train_config()?;
    let out = cfg.output_dir()?;
    let m = read_manifest(&cfg.manifest_path()?, cfg, cfg.data.sample_rate)?;
    // Load raw features; statistics are taken after any held-out split.
    let raw_cfg = segfeat_core::FeatureConfig { normalize: false, ..fc.clone() };
    let corpus = load_corpus(&m, &raw_cfg, None)?;
    let inventory = corpus.inventory.clone();
    let prep = |utts: Vec<segfeat_core::LabeledUtterance>| -> Vec<segfeat_core::LabeledUtterance> {
        if cfg.data.split_nonspeech {
            let ns = cfg.nonspeech_config();
            utts.iter().flat_map(|u| split_nonspeech(u, &ns)).collect()
        } else {
            utts
        }
    };
    let mut train = prep(corpus.train);
    let mut val = prep(corpus.val);
    if train.is_empty() {
        return Err(Error::EmptyData("no training utterances".into()).into());
    }
    if val.is_empty() && cfg.train.val_fraction > 0.0 {
        let (t, v) = split_train_val(train, cfg.train.val_fraction, tc.seed)?;
        info!("held out {} of {} training utterances for validation", v.len(), t.len() + v.len());
        train = t;
        val = v;
    }
    let stats = if fc.normalize { Some(FeatureStats::from_matrices(train.iter().map(|u| &u.features))?) } else { None };
    if let Some(s) = &stats {
        for u in train.iter_mut().chain(val.iter_mut()) {
            u.features = u.features.normalized(s)?;
        }
    }
    let inventory = if tc.losses.phn { inventory } else { Vec::new() };
    let mut model = SegmentalModel::new(cfg.model_config(), fc, inventory)?;
    model.set_stats(stats);
    model.set_sample_rate(Some(m.sample_rate));
    info!("training on {} utterances, validating on {}", train.len(), val.len());

    let outcome = fit_with(&train, &val, model, &tc, |log| {
        info!(
            "epoch {:>3}  hinge {:.4}  phn {:.4}  bin {:.4}  val F1 {:.2}  R {:.2}  ({:.1}s)",
            log.epoch,
            log.hinge,
            log.phn,
            log.bin,
            100.0 * log.val.f1,
            100.0 * log.val.r_value,
            log.seconds
        )
    })?;

    std::fs::create_dir_all(&out)?;
    let best_model = out.join("best.model");
    let last_model = out.join("last.model");
    outcome.best.save(&best_model)?;
    outcome.last.save(&last_model)?;
    write_epoch_logs(out.join("epochs.csv"), &outcome.logs)?;
    let best_val = outcome.logs[outcome.best_epoch - 1].val;
    std::fs::write(out.join("val_report.csv"), format!("{}\n{}\n", EvalReport::CSV_HEADER, best_val.csv_row()))?;
    std::fs::write(out.join("config.toml"), cfg.to_toml())?;
    Ok(TrainSummary { best_epoch: outcome.best_epoch, best_val, logs: outcome.logs, best_model, last_model })
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SegmentOptions {
    /// Decode exactly this many segments.
    pub k: Option<usize>,
    /// Longest segment in frames; `None` is unbounded.
    pub max_seg_frames: Option<usize>,
    pub textgrid: bool,
    /// Restrict a manifest input to one split.
    pub split: Option<Split>,
}

/// Segments a WAV file, or every entry of a manifest (`.csv`), writing
/// `<key>.csv` with one boundary time per line under `out`. Returns the
/// number of utterances written.
pub fn segment(model_path: &Path, input: &Path, out: &Path, opts: &SegmentOptions) -> CliResult<usize> {
    let model = SegmentalModel::load(model_path)?;
    let inputs: Vec<(String, PathBuf)> = if input.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        let sr = model.sample_rate().unwrap_or(16000);
        let m = CorpusManifest::read(input, sr, Default::default())?;
        let entries: Vec<&ManifestEntry> = m.entries.iter().filter(|e| opts.split.is_none_or(|s| e.split == s)).collect();
        check_unique_keys(entries.iter().copied())?;
        entries.into_iter().map(|e| (e.key(), e.wav.clone())).collect()
    } else {
        if !input.exists() {
            return Err(Error::MissingFile(input.to_path_buf()).into());
        }
        let key = input.file_stem().map_or_else(|| "utterance".into(), |s| s.to_string_lossy().into_owned());
        vec![(key, input.to_path_buf())]
    };
    if inputs.is_empty() {
        return Err(Error::EmptyData(format!("nothing to segment in {}", input.display())).into());
    }
    std::fs::create_dir_all(out)?;
    let shift = model.feature_config().frame_shift;
    for (key, wav) in &inputs {
        let wave = read_checked_wav(wav, model.sample_rate())?;
        let feats = model.featurize(&wave)?;
        let ctx = model.build_context(&feats)?;
        let (seg, score) = match opts.k {
            Some(k) => dp_segment_k(&ctx, k)?,
            None => dp_segment(&ctx, opts.max_seg_frames)?,
        };
        let times = seg.times(shift);
        let mut w = std::io::BufWriter::new(std::fs::File::create(out.join(format!("{key}.csv")))?);
        writeln!(w, "time_s")?;
        for t in &times {
            writeln!(w, "{t:.6}")?;
        }
        w.flush()?;
        if opts.textgrid {
            write_textgrid(&out.join(format!("{key}.TextGrid")), &times, wave.duration())?;
        }
        info!("{key}: {} boundaries, score {score:.4}", times.len());
    }
    Ok(inputs.len())
}

/// Praat long-format TextGrid with one unlabeled interval tier.
pub fn write_textgrid(path: &Path, boundaries: &[f64], duration: f64) -> CliResult<()> {
    let mut edges = vec![0.0];
    edges.extend(boundaries.iter().copied().filter(|&t| t > 0.0 && t < duration));
    edges.push(duration);
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "File type = \"ooTextFile\"\nObject class = \"TextGrid\"\n")?;
    writeln!(w, "xmin = 0\nxmax = {duration}\ntiers? <exists>\nsize = 1\nitem []:")?;
    writeln!(w, "    item [1]:\n        class = \"IntervalTier\"\n        name = \"segments\"")?;
    writeln!(w, "        xmin = 0\n        xmax = {duration}\n        intervals: size = {}", edges.len() - 1)?;
    for (i, p) in edges.windows(2).enumerate() {
        writeln!(w, "        intervals [{}]:\n            xmin = {}\n            xmax = {}\n            text = \"\"", i + 1, p[0], p[1])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a boundary file written by [`segment`].
pub fn read_boundary_csv(path: &Path) -> CliResult<Vec<f64>> {
    let text = std::fs::read_to_string(path)?;
    let mut times = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (n == 0 && line.parse::<f64>().is_err()) {
            continue;
        }
        let t: f64 = line.parse().map_err(|_| Error::Annotation {
            path: path.to_path_buf(),
            reason: format!("line {}: `{line}` is not a time", n + 1),
        })?;
        times.push(t);
    }
    Ok(times)
}

/// Scores `<pred_dir>/<key>.csv` against the interior segment starts of
/// each manifest annotation.
pub fn eval(cfg: &RunConfig, pred_dir: &Path, manifest: &Path, split: Option<Split>) -> CliResult<EvalReport> {
    let m = read_manifest(manifest, cfg, cfg.data.sample_rate)?;
    let entries: Vec<&ManifestEntry> = m.entries.iter().filter(|e| split.is_none_or(|s| e.split == s)).collect();
    if entries.is_empty() {
        return Err(Error::EmptyData(format!("no reference utterances in {}", manifest.display())).into());
    }
    check_unique_keys(entries.iter().copied())?;
    let sr = m.sample_rate as f64;
    let mut references = BTreeMap::new();
    for e in entries {
        let ann = Annotation::read(&e.annotation, m.unit, m.sample_rate)?;
        let times: Vec<f64> = ann.segments().iter().skip(1).map(|s| s.start as f64 / sr).collect();
        references.insert(e.key(), times);
    }
    if !pred_dir.is_dir() {
        return Err(Error::MissingFile(pred_dir.to_path_buf()).into());
    }
    let mut predictions = BTreeMap::new();
    for entry in std::fs::read_dir(pred_dir)? {
        let path = entry?.path();
        if path.extension().is_some_and(|e| e == "csv") {
            let key = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            predictions.insert(key, read_boundary_csv(&path)?);
        }
    }
    Ok(evaluate_times(&predictions, &references, TolerancePolicy { tolerance: cfg.eval.tolerance })?)
}

pub fn write_report(path: &Path, report: &EvalReport) -> CliResult<()> {
    std::fs::write(path, format!("{}\n{}\n", EvalReport::CSV_HEADER, report.csv_row()))?;
    Ok(())
}

/// Writes a synthetic corpus and returns the manifest path.
pub fn synth(out: &Path, cfg: &SynthConfig, n_val: usize, n_test: usize) -> CliResult<PathBuf> {
    let utts = synth_corpus(cfg)?;
    Ok(write_synth_corpus(&utts, out, n_val, n_test)?)
}

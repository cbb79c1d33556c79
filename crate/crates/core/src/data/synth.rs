use std::path::{Path, PathBuf};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{AnnotatedSegment, Annotation, AnnotationUnit, CorpusManifest, ManifestEntry, Split};
use crate::error::{Error, Result};
use crate::features::{hz_to_mel, mel_to_hz, write_wav, Waveform};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_utterances: usize,
    /// Inclusive range of segments per utterance.
    pub segments: (usize, usize),
    /// Segment duration range in seconds.
    pub duration: (f64, f64),
    pub n_classes: usize,
    /// Peak amplitude of the additive white noise.
    pub noise_level: f64,
    pub seed: u64,
    pub sample_rate: u32,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_utterances: 240,
            segments: (2, 6),
            duration: (0.05, 0.2),
            n_classes: 4,
            noise_level: 0.01,
            seed: 0,
            sample_rate: 16000,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidTraining(format!("synthetic corpus: {m}")));
        if self.n_classes < 2 {
            return bad("need at least 2 classes");
        }
        if self.segments.0 == 0 || self.segments.0 > self.segments.1 {
            return bad("segment count range must satisfy 1 <= min <= max");
        }
        if !(self.duration.0 > 0.0) || self.duration.0 > self.duration.1 || !self.duration.1.is_finite() {
            return bad("duration range must satisfy 0 < min <= max");
        }
        if !(0.0..1.0).contains(&self.noise_level) {
            return bad("noise level must be in [0, 1)");
        }
        if self.sample_rate < 8000 {
            return bad("sample rate must be at least 8 kHz");
        }
        Ok(())
    }

    pub fn symbol(class: usize) -> String {
        format!("c{class}")
    }

    /// Tone frequencies of `class`: one mel-spaced carrier plus a partial.
    pub fn class_tones(&self, class: usize) -> [(f64, f64); 2] {
        let nyq = self.sample_rate as f64 / 2.0;
        let (lo, hi) = (hz_to_mel(250.0), hz_to_mel(0.6 * nyq));
        let f = mel_to_hz(lo + (class as f64 + 0.5) / self.n_classes as f64 * (hi - lo));
        let partial = if 1.8 * f < 0.9 * nyq { 1.8 * f } else { 0.55 * f };
        [(f, 1.0), (partial, 0.5)]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthUtterance {
    pub id: String,
    pub wave: Waveform,
    pub annotation: Annotation,
}

/// Concatenated class segments; consecutive segments always differ in class.
pub fn synth_corpus(cfg: &SynthConfig) -> Result<Vec<SynthUtterance>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let sr = cfg.sample_rate as f64;
    let mut out = Vec::with_capacity(cfg.n_utterances);
    for i in 0..cfg.n_utterances {
        let n_seg = rng.random_range(cfg.segments.0..=cfg.segments.1);
        let mut samples = Vec::new();
        let mut segments = Vec::with_capacity(n_seg);
        let mut prev: Option<usize> = None;
        for _ in 0..n_seg {
            let class = loop {
                let c = rng.random_range(0..cfg.n_classes);
                if Some(c) != prev {
                    break c;
                }
            };
            prev = Some(class);
            let secs = rng.random_range(cfg.duration.0..=cfg.duration.1);
            let len = ((secs * sr).round() as usize).max(1);
            let gain = rng.random_range(0.2..0.35);
            let tones: Vec<(f64, f64, f64)> = cfg
                .class_tones(class)
                .iter()
                .map(|&(f, a)| (f * rng.random_range(0.98..1.02), a, rng.random_range(0.0..std::f64::consts::TAU)))
                .collect();
            let start = samples.len();
            for n in 0..len {
                let t = n as f64 / sr;
                let tone: f64 = tones.iter().map(|&(f, a, ph)| a * (std::f64::consts::TAU * f * t + ph).sin()).sum();
                samples.push(gain * tone / 1.5);
            }
            segments.push(AnnotatedSegment { start, end: start + len, symbol: SynthConfig::symbol(class) });
        }
        for s in samples.iter_mut() {
            *s += cfg.noise_level * rng.random_range(-1.0..1.0);
        }
        let annotation = Annotation::new(segments).expect("contiguous by construction");
        out.push(SynthUtterance { id: format!("synth{i:04}"), wave: Waveform::new(samples, cfg.sample_rate)?, annotation });
    }
    Ok(out)
}

/// Writes `<id>.wav` and `<id>.phn` under `dir` plus `dir/manifest.csv`.
/// The last `n_test` utterances are tagged test, the `n_val` before them val.
pub fn write_synth_corpus(utts: &[SynthUtterance], dir: impl AsRef<Path>, n_val: usize, n_test: usize) -> Result<PathBuf> {
    let dir = dir.as_ref();
    if n_val + n_test > utts.len() {
        return Err(Error::EmptyData(format!("{} utterances cannot fill {n_val} val + {n_test} test", utts.len())));
    }
    std::fs::create_dir_all(dir)?;
    let n_train = utts.len() - n_val - n_test;
    let mut entries = Vec::with_capacity(utts.len());
    for (i, u) in utts.iter().enumerate() {
        let wav = dir.join(format!("{}.wav", u.id));
        let phn = dir.join(format!("{}.phn", u.id));
        write_wav(&wav, &u.wave)?;
        u.annotation.write_phn(&phn)?;
        let split = if i < n_train {
            Split::Train
        } else if i < n_train + n_val {
            Split::Val
        } else {
            Split::Test
        };
        entries.push(ManifestEntry { wav, annotation: phn, split });
    }
    let sample_rate = utts.first().map_or(16000, |u| u.wave.sample_rate);
    let manifest = dir.join("manifest.csv");
    CorpusManifest { entries, sample_rate, unit: AnnotationUnit::Samples }.write(&manifest)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::load_corpus;
    use crate::features::FeatureConfig;

    fn small(seed: u64) -> SynthConfig {
        SynthConfig { n_utterances: 6, seed, ..Default::default() }
    }

    #[test]
    fn deterministic() {
        assert_eq!(synth_corpus(&small(3)).unwrap(), synth_corpus(&small(3)).unwrap());
        assert_ne!(synth_corpus(&small(3)).unwrap(), synth_corpus(&small(4)).unwrap());
    }

    #[test]
    fn neighbours_differ_and_ranges_hold() {
        let cfg = SynthConfig { n_classes: 2, ..small(5) };
        for u in synth_corpus(&cfg).unwrap() {
            let segs = u.annotation.segments();
            assert!((2..=6).contains(&segs.len()));
            assert!(segs.windows(2).all(|w| w[0].symbol != w[1].symbol));
            for s in segs {
                let d = (s.end - s.start) as f64 / 16000.0;
                assert!((0.05 - 1e-4..=0.2 + 1e-4).contains(&d));
            }
            assert!(u.wave.samples.iter().all(|x| x.abs() < 1.0));
        }
    }

    #[test]
    fn class_tones_are_distinct_and_below_nyquist() {
        let cfg = SynthConfig { n_classes: 6, ..Default::default() };
        let f: Vec<f64> = (0..6).map(|c| cfg.class_tones(c)[0].0).collect();
        assert!(f.windows(2).all(|w| w[0] < w[1]));
        assert!((0..6).all(|c| cfg.class_tones(c).iter().all(|t| t.0 < 8000.0)));
        assert!(SynthConfig { n_classes: 1, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn round_trip_through_disk() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = SynthConfig { n_classes: 2, ..small(6) };
        let utts = synth_corpus(&cfg).unwrap();
        let manifest = write_synth_corpus(&utts, dir.path(), 1, 1).unwrap();
        let m = CorpusManifest::read(&manifest, 16000, AnnotationUnit::Samples).unwrap();
        let fc = FeatureConfig::default();
        let corpus = load_corpus(&m, &fc, None).unwrap();
        assert_eq!((corpus.train.len(), corpus.val.len(), corpus.test.len()), (4, 1, 1));
        let loaded: Vec<_> = corpus.train.iter().chain(&corpus.val).chain(&corpus.test).collect();
        for (u, l) in utts.iter().zip(loaded) {
            let frames = l.features.rows();
            let (seg, sym) = u.annotation.to_frames(160, frames).unwrap();
            assert_eq!(l.gold, seg);
            assert_eq!(l.phonemes.as_ref().unwrap(), &sym);
            assert_eq!(seg.boundaries().len(), u.annotation.segments().len() - 1);
        }
        assert_eq!(corpus.inventory.len(), 2);
        assert_eq!(corpus.stats.as_ref().unwrap().mean.len(), 43);
    }
}

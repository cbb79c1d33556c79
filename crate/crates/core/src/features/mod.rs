//! Acoustic front end: 13 MFCCs with Δ and ΔΔ, plus spectral-change
//! distances between frames placed symmetrically around each frame.
//!
//! With the default configuration every frame is a 43-dimensional row:
//! `[mfcc(13) | Δ(13) | ΔΔ(13) | D_1..D_4]`.

mod dump;
mod mfcc;
mod wav;

pub use dump::{read_feature_bin, write_feature_bin, write_feature_csv};
pub use mfcc::{
    append_deltas, compute_mfcc, filterbank_energies, frame_count, hz_to_mel, mel_to_hz,
    spectral_change_features, MelFilterbank, LOG_FLOOR,
};
pub use wav::{read_wav, write_wav};

use crate::error::{Error, Result};

/// Mono audio with amplitudes in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidWaveform("no samples".into()));
        }
        if sample_rate == 0 {
            return Err(Error::InvalidWaveform("sample rate must be positive".into()));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::InvalidWaveform("non-finite sample".into()));
        }
        Ok(Waveform { samples, sample_rate })
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureConfig {
    /// Seconds between frame starts.
    pub frame_shift: f64,
    /// Analysis window in seconds.
    pub window_length: f64,
    pub n_mfcc: usize,
    pub n_mel_filters: usize,
    /// FFT length; `None` picks the smallest power of two covering the window.
    pub n_fft: Option<usize>,
    pub pre_emphasis: f64,
    pub delta_window: usize,
    pub spectral_offsets: Vec<usize>,
    pub normalize: bool,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            frame_shift: 0.010,
            window_length: 0.010,
            n_mfcc: 13,
            n_mel_filters: 26,
            n_fft: None,
            pre_emphasis: 0.97,
            delta_window: 2,
            spectral_offsets: vec![1, 2, 3, 4],
            normalize: true,
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidFeatureConfig(m));
        if !(self.frame_shift > 0.0) || !self.frame_shift.is_finite() {
            return bad(format!("frame_shift must be positive, got {}", self.frame_shift));
        }
        if !(self.window_length > 0.0) || !self.window_length.is_finite() {
            return bad(format!("window_length must be positive, got {}", self.window_length));
        }
        if self.n_mfcc == 0 || self.n_mfcc > self.n_mel_filters {
            return bad(format!("need 0 < n_mfcc ({}) <= n_mel_filters ({})", self.n_mfcc, self.n_mel_filters));
        }
        if self.spectral_offsets.first() == Some(&0)
            || self.spectral_offsets.windows(2).any(|w| w[0] >= w[1])
        {
            return bad(format!("spectral offsets must be strictly increasing and positive: {:?}", self.spectral_offsets));
        }
        Ok(())
    }

    pub fn window_samples(&self, sample_rate: u32) -> usize {
        (self.window_length * sample_rate as f64).round() as usize
    }

    pub fn shift_samples(&self, sample_rate: u32) -> usize {
        (self.frame_shift * sample_rate as f64).round() as usize
    }

    /// Width of an assembled feature row.
    pub fn feature_dim(&self) -> usize {
        3 * self.n_mfcc + self.spectral_offsets.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColumnRole {
    Mfcc,
    Delta,
    Delta2,
    SpectralChange,
}

/// `T x D` per-frame features, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
    frame_shift: f64,
    roles: Vec<ColumnRole>,
}

impl FrameMatrix {
    pub fn new(rows: usize, data: Vec<f64>, frame_shift: f64, roles: Vec<ColumnRole>) -> Result<Self> {
        let cols = roles.len();
        if rows == 0 {
            return Err(Error::shape("frame_matrix", "at least one frame required"));
        }
        if rows * cols != data.len() {
            return Err(Error::shape("frame_matrix", format!("{rows}x{cols} vs {} values", data.len())));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::shape("frame_matrix", "non-finite entry"));
        }
        Ok(FrameMatrix { rows, cols, data, frame_shift, roles })
    }

    /// Unchecked constructor with placeholder roles for internal assembly.
    pub(crate) fn raw(rows: usize, cols: usize, data: Vec<f64>, frame_shift: f64) -> Self {
        debug_assert_eq!(rows * cols, data.len());
        FrameMatrix { rows, cols, data, frame_shift, roles: vec![ColumnRole::Mfcc; cols] }
    }

    pub(crate) fn with_roles(mut self, roles: Vec<ColumnRole>) -> Self {
        debug_assert_eq!(roles.len(), self.cols);
        self.roles = roles;
        self
    }

    pub(crate) fn hconcat(parts: &[&FrameMatrix], roles: Vec<ColumnRole>) -> FrameMatrix {
        let rows = parts[0].rows;
        let cols: usize = parts.iter().map(|p| p.cols).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for t in 0..rows {
            for p in parts {
                data.extend_from_slice(p.row(t));
            }
        }
        FrameMatrix { rows, cols, data, frame_shift: parts[0].frame_shift, roles }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn frame_shift(&self) -> f64 {
        self.frame_shift
    }

    pub fn column_roles(&self) -> &[ColumnRole] {
        &self.roles
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.data[t * self.cols..(t + 1) * self.cols]
    }

    pub fn get(&self, t: usize, c: usize) -> f64 {
        self.data[t * self.cols + c]
    }

    /// Rows `[start, end)` as a new matrix.
    pub fn slice_rows(&self, start: usize, end: usize) -> Result<FrameMatrix> {
        if start >= end || end > self.rows {
            return Err(Error::InvalidSpan { start, end, frames: self.rows });
        }
        Ok(FrameMatrix {
            rows: end - start,
            cols: self.cols,
            data: self.data[start * self.cols..end * self.cols].to_vec(),
            frame_shift: self.frame_shift,
            roles: self.roles.clone(),
        })
    }

    /// Applies `(x - mean) / std` column-wise.
    pub fn normalized(&self, stats: &FeatureStats) -> Result<FrameMatrix> {
        if stats.mean.len() != self.cols {
            return Err(Error::shape("normalize", format!("{} stats for {} columns", stats.mean.len(), self.cols)));
        }
        let mut out = self.clone();
        for t in 0..self.rows {
            for (c, v) in out.data[t * self.cols..(t + 1) * self.cols].iter_mut().enumerate() {
                *v = (*v - stats.mean[c]) / stats.std[c];
            }
        }
        Ok(out)
    }
}

/// Per-column corpus statistics for z-scoring.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl FeatureStats {
    pub const STD_FLOOR: f64 = 1e-8;

    /// Population mean and standard deviation over all frames of `mats`.
    pub fn from_matrices<'a>(mats: impl IntoIterator<Item = &'a FrameMatrix>) -> Result<Self> {
        let mut count = 0usize;
        let mut sum: Vec<f64> = Vec::new();
        let mut mats_seen = Vec::new();
        for m in mats {
            if sum.is_empty() {
                sum = vec![0.0; m.cols()];
            } else if sum.len() != m.cols() {
                return Err(Error::shape("feature_stats", "matrices differ in width"));
            }
            for t in 0..m.rows() {
                for (s, v) in sum.iter_mut().zip(m.row(t)) {
                    *s += v;
                }
            }
            count += m.rows();
            mats_seen.push(m);
        }
        if count == 0 {
            return Err(Error::EmptyData("no frames for feature statistics".into()));
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / count as f64).collect();
        let mut var = vec![0.0; mean.len()];
        for m in mats_seen {
            for t in 0..m.rows() {
                for ((acc, v), mu) in var.iter_mut().zip(m.row(t)).zip(&mean) {
                    *acc += (v - mu) * (v - mu);
                }
            }
        }
        let std = var.iter().map(|v| (v / count as f64).sqrt().max(Self::STD_FLOOR)).collect();
        Ok(FeatureStats { mean, std })
    }
}

/// Full feature row per frame: `[MFCC | Δ | ΔΔ | D]`, z-scored with `stats`
/// when `cfg.normalize` is set and statistics are supplied.
pub fn assemble_features(
    wave: &Waveform,
    cfg: &FeatureConfig,
    stats: Option<&FeatureStats>,
) -> Result<FrameMatrix> {
    let mfcc = compute_mfcc(wave, cfg)?;
    let with_deltas = append_deltas(&mfcc, cfg.delta_window);
    let change = spectral_change_features(&with_deltas, &cfg.spectral_offsets);
    let mut roles = with_deltas.column_roles().to_vec();
    roles.extend_from_slice(change.column_roles());
    let raw = FrameMatrix::hconcat(&[&with_deltas, &change], roles);
    match stats {
        Some(s) if cfg.normalize => raw.normalized(s),
        _ => Ok(raw),
    }
}

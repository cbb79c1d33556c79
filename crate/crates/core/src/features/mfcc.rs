use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::{ColumnRole, FeatureConfig, FrameMatrix, Waveform};
use crate::error::{Error, Result};

/// Energies below this are clamped before the log.
pub const LOG_FLOOR: f64 = 1e-10;

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Number of frames produced for `n` samples: `floor((n - window) / shift) + 1`.
pub fn frame_count(n: usize, window: usize, shift: usize) -> Option<usize> {
    (n >= window && shift > 0).then(|| (n - window) / shift + 1)
}

/// Triangular filters equally spaced on the HTK mel scale from 0 Hz to Nyquist.
#[derive(Debug, Clone)]
pub struct MelFilterbank {
    /// `n_filters` rows of `n_fft / 2 + 1` weights.
    pub weights: Vec<Vec<f64>>,
    /// Frequency (Hz) of each filter's peak.
    pub centers: Vec<f64>,
}

impl MelFilterbank {
    pub fn new(n_filters: usize, n_fft: usize, sample_rate: u32) -> Self {
        let nyquist = sample_rate as f64 / 2.0;
        let top = hz_to_mel(nyquist);
        let edges: Vec<f64> = (0..n_filters + 2)
            .map(|i| mel_to_hz(top * i as f64 / (n_filters + 1) as f64))
            .collect();
        let n_bins = n_fft / 2 + 1;
        let bin_hz = sample_rate as f64 / n_fft as f64;
        let weights = (0..n_filters)
            .map(|m| {
                let (lo, mid, hi) = (edges[m], edges[m + 1], edges[m + 2]);
                (0..n_bins)
                    .map(|k| {
                        let f = k as f64 * bin_hz;
                        if f <= lo || f >= hi {
                            0.0
                        } else if f <= mid {
                            (f - lo) / (mid - lo)
                        } else {
                            (hi - f) / (hi - mid)
                        }
                    })
                    .collect()
            })
            .collect();
        MelFilterbank { weights, centers: edges[1..=n_filters].to_vec() }
    }

    pub fn apply(&self, spectrum: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .map(|w| w.iter().zip(spectrum).map(|(a, b)| a * b).sum())
            .collect()
    }
}

/// Per-frame analysis state shared by the MFCC path and the filterbank probes.
struct Analyzer {
    window: Vec<f64>,
    shift: usize,
    n_fft: usize,
    fft: std::sync::Arc<dyn rustfft::Fft<f64>>,
    bank: MelFilterbank,
}

impl Analyzer {
    fn new(sample_rate: u32, cfg: &FeatureConfig) -> Result<Self> {
        cfg.validate()?;
        let win = cfg.window_samples(sample_rate);
        let shift = cfg.shift_samples(sample_rate);
        if win == 0 || shift == 0 {
            return Err(Error::InvalidFeatureConfig(format!(
                "window ({win}) and shift ({shift}) must be at least one sample at {sample_rate} Hz"
            )));
        }
        let n_fft = cfg.n_fft.unwrap_or_else(|| win.next_power_of_two());
        if n_fft < win {
            return Err(Error::InvalidFeatureConfig(format!("n_fft {n_fft} shorter than window {win}")));
        }
        let window = if win == 1 {
            vec![1.0]
        } else {
            (0..win).map(|n| 0.54 - 0.46 * (2.0 * PI * n as f64 / (win - 1) as f64).cos()).collect()
        };
        let fft = FftPlanner::new().plan_fft_forward(n_fft);
        Ok(Analyzer { window, shift, n_fft, fft, bank: MelFilterbank::new(cfg.n_mel_filters, n_fft, sample_rate) })
    }

    /// Mel filterbank energies (pre-log), one row per frame.
    fn energies(&self, wave: &Waveform, pre_emphasis: f64) -> Result<Vec<Vec<f64>>> {
        let win = self.window.len();
        let frames = frame_count(wave.samples.len(), win, self.shift)
            .ok_or(Error::WaveformTooShort { samples: wave.samples.len(), window: win })?;
        let emphasized: Vec<f64> = wave
            .samples
            .iter()
            .enumerate()
            .map(|(i, &s)| if i == 0 { s } else { s - pre_emphasis * wave.samples[i - 1] })
            .collect();
        let mut buf = vec![Complex::new(0.0, 0.0); self.n_fft];
        let mut out = Vec::with_capacity(frames);
        for t in 0..frames {
            let start = t * self.shift;
            buf.iter_mut().for_each(|c| *c = Complex::new(0.0, 0.0));
            for (n, (b, w)) in buf.iter_mut().zip(&self.window).enumerate() {
                b.re = emphasized[start + n] * w;
            }
            self.fft.process(&mut buf);
            let mag: Vec<f64> = buf[..self.n_fft / 2 + 1].iter().map(|c| c.norm()).collect();
            out.push(self.bank.apply(&mag));
        }
        Ok(out)
    }
}

/// Mel filterbank energies per frame, before the log. Exposed for analysis.
pub fn filterbank_energies(wave: &Waveform, cfg: &FeatureConfig) -> Result<(MelFilterbank, Vec<Vec<f64>>)> {
    let a = Analyzer::new(wave.sample_rate, cfg)?;
    let e = a.energies(wave, cfg.pre_emphasis)?;
    Ok((a.bank, e))
}

/// Hamming window, magnitude FFT, mel filterbank, log, DCT-II. Keeps
/// coefficients `0..n_mfcc`, coefficient 0 included.
pub fn compute_mfcc(wave: &Waveform, cfg: &FeatureConfig) -> Result<FrameMatrix> {
    let a = Analyzer::new(wave.sample_rate, cfg)?;
    let energies = a.energies(wave, cfg.pre_emphasis)?;
    let m = cfg.n_mel_filters;
    let dct: Vec<Vec<f64>> = (0..cfg.n_mfcc)
        .map(|k| {
            let scale = if k == 0 { (1.0 / m as f64).sqrt() } else { (2.0 / m as f64).sqrt() };
            (0..m).map(|j| scale * (PI * k as f64 * (j as f64 + 0.5) / m as f64).cos()).collect()
        })
        .collect();
    let mut data = Vec::with_capacity(energies.len() * cfg.n_mfcc);
    for e in &energies {
        let logs: Vec<f64> = e.iter().map(|&v| v.max(LOG_FLOOR).ln()).collect();
        data.extend(dct.iter().map(|row| row.iter().zip(&logs).map(|(c, l)| c * l).sum::<f64>()));
    }
    FrameMatrix::new(energies.len(), data, cfg.frame_shift, vec![ColumnRole::Mfcc; cfg.n_mfcc])
}

/// Regression deltas with replicate padding:
/// `d_t = sum_n n (c_{t+n} - c_{t-n}) / (2 sum_n n^2)`.
fn regression_delta(rows: usize, cols: usize, src: &[f64], window: usize) -> Vec<f64> {
    let denom = 2.0 * (1..=window).map(|n| (n * n) as f64).sum::<f64>();
    let at = |t: isize, c: usize| src[(t.clamp(0, rows as isize - 1) as usize) * cols + c];
    let mut out = vec![0.0; rows * cols];
    if window == 0 {
        return out;
    }
    for t in 0..rows as isize {
        for c in 0..cols {
            let num: f64 = (1..=window as isize).map(|n| n as f64 * (at(t + n, c) - at(t - n, c))).sum();
            out[t as usize * cols + c] = num / denom;
        }
    }
    out
}

/// `[c | delta | delta-delta]`, ΔΔ computed from Δ with the same regression.
pub fn append_deltas(m: &FrameMatrix, delta_window: usize) -> FrameMatrix {
    let (rows, cols) = (m.rows(), m.cols());
    let d1 = regression_delta(rows, cols, m.data(), delta_window);
    let d2 = regression_delta(rows, cols, &d1, delta_window);
    let mut roles = m.column_roles().to_vec();
    roles.extend(std::iter::repeat_n(ColumnRole::Delta, cols));
    roles.extend(std::iter::repeat_n(ColumnRole::Delta2, cols));
    FrameMatrix::hconcat(&[m, &FrameMatrix::raw(rows, cols, d1, m.frame_shift()), &FrameMatrix::raw(rows, cols, d2, m.frame_shift())], roles)
}

/// `D[t][j] = ||a_{t-j} - a_{t+j}||_2` over full rows, replicate-padded, one column per offset.
pub fn spectral_change_features(m: &FrameMatrix, offsets: &[usize]) -> FrameMatrix {
    let rows = m.rows();
    let last = rows as isize - 1;
    let mut data = Vec::with_capacity(rows * offsets.len());
    for t in 0..rows as isize {
        for &j in offsets {
            let a = m.row((t - j as isize).clamp(0, last) as usize);
            let b = m.row((t + j as isize).clamp(0, last) as usize);
            data.push(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt());
        }
    }
    FrameMatrix::raw(rows, offsets.len(), data, m.frame_shift())
        .with_roles(vec![ColumnRole::SpectralChange; offsets.len()])
}

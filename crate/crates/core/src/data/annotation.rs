use std::path::Path;

use crate::error::{Error, Result};
use crate::model::Segmentation;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotatedSegment {
    /// Sample index, inclusive.
    pub start: usize,
    /// Sample index, exclusive.
    pub end: usize,
    pub symbol: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AnnotationUnit {
    /// `.phn` lines `start_sample end_sample symbol`.
    #[default]
    Samples,
    /// CSV lines `start_s,end_s,symbol`, optionally under a header.
    Seconds,
}

/// Contiguous phone segments of one utterance, in samples.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Annotation {
    segments: Vec<AnnotatedSegment>,
}

impl Annotation {
    pub fn new(segments: Vec<AnnotatedSegment>) -> std::result::Result<Self, String> {
        if segments.is_empty() {
            return Err("no segments".into());
        }
        for (i, s) in segments.iter().enumerate() {
            if s.end <= s.start {
                return Err(format!("segment {} `{}` has end {} <= start {}", i + 1, s.symbol, s.end, s.start));
            }
            if s.symbol.is_empty() || s.symbol.chars().any(char::is_whitespace) {
                return Err(format!("segment {} has an empty or blank-containing symbol", i + 1));
            }
            if i > 0 && s.start != segments[i - 1].end {
                return Err(format!(
                    "segment {} starts at {} but the previous one ends at {}",
                    i + 1,
                    s.start,
                    segments[i - 1].end
                ));
            }
        }
        Ok(Annotation { segments })
    }

    pub fn segments(&self) -> &[AnnotatedSegment] {
        &self.segments
    }

    pub fn symbols(&self) -> impl Iterator<Item = &str> {
        self.segments.iter().map(|s| s.symbol.as_str())
    }

    pub fn parse(text: &str, unit: AnnotationUnit, sample_rate: u32, path: &Path) -> Result<Self> {
        let err = |reason: String| Error::Annotation { path: path.to_path_buf(), reason };
        let mut segments = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = match unit {
                AnnotationUnit::Samples => line.split_whitespace().collect(),
                AnnotationUnit::Seconds => line.split(',').map(str::trim).collect(),
            };
            if fields.len() != 3 {
                return Err(err(format!("line {}: expected 3 fields, got {}", n + 1, fields.len())));
            }
            let (start, end) = match unit {
                AnnotationUnit::Samples => {
                    let p = |s: &str| s.parse::<usize>().map_err(|_| err(format!("line {}: bad sample index `{s}`", n + 1)));
                    (p(fields[0])?, p(fields[1])?)
                }
                AnnotationUnit::Seconds => {
                    let p = |s: &str| s.parse::<f64>().ok().filter(|v| v.is_finite() && *v >= 0.0);
                    match (p(fields[0]), p(fields[1])) {
                        (Some(a), Some(b)) => {
                            let sr = sample_rate as f64;
                            ((a * sr).round() as usize, (b * sr).round() as usize)
                        }
                        // Header row.
                        _ if segments.is_empty() && n == 0 => continue,
                        _ => return Err(err(format!("line {}: bad time", n + 1))),
                    }
                }
            };
            segments.push(AnnotatedSegment { start, end, symbol: fields[2].to_string() });
        }
        Annotation::new(segments).map_err(err)
    }

    pub fn read(path: impl AsRef<Path>, unit: AnnotationUnit, sample_rate: u32) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        Self::parse(&std::fs::read_to_string(path)?, unit, sample_rate, path)
    }

    /// `.phn` text.
    pub fn to_phn(&self) -> String {
        self.segments.iter().map(|s| format!("{} {} {}\n", s.start, s.end, s.symbol)).collect()
    }

    pub fn write_phn(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_phn())?;
        Ok(())
    }

    /// Boundary frames and per-segment symbols for an utterance of `frames`
    /// frames. The start of every segment but the first maps to frame
    /// `round_half_up(start / shift)`. Starts landing outside `[1, frames-1]`
    /// or on an earlier boundary are dropped and their segment merged into the
    /// previous one, which keeps the symbol of the longer part.
    pub fn to_frames(&self, shift_samples: usize, frames: usize) -> Result<(Segmentation, Vec<String>)> {
        assert!(shift_samples > 0);
        let mut bounds: Vec<usize> = Vec::new();
        let mut symbols = vec![self.segments[0].symbol.clone()];
        let mut longest = vec![self.segments[0].end - self.segments[0].start];
        for seg in &self.segments[1..] {
            let b = (2 * seg.start + shift_samples) / (2 * shift_samples);
            let len = seg.end - seg.start;
            let fits = b >= 1 && b < frames && bounds.last().is_none_or(|&p| b > p);
            if fits {
                bounds.push(b);
                symbols.push(seg.symbol.clone());
                longest.push(len);
            } else {
                log::warn!("boundary of `{}` at sample {} collapses onto frame {b}; merging", seg.symbol, seg.start);
                let last = longest.len() - 1;
                if len > longest[last] {
                    longest[last] = len;
                    symbols[last] = seg.symbol.clone();
                }
            }
        }
        Ok((Segmentation::new(bounds, frames)?, symbols))
    }

    /// Segments ending at the given sample boundaries, for writing predictions.
    pub fn from_boundaries(cuts: &[usize], total: usize, symbols: &[String]) -> std::result::Result<Self, String> {
        if symbols.len() != cuts.len() + 1 {
            return Err("one symbol per segment required".into());
        }
        let mut starts = vec![0];
        starts.extend_from_slice(cuts);
        let mut ends = cuts.to_vec();
        ends.push(total);
        Annotation::new(
            starts
                .into_iter()
                .zip(ends)
                .zip(symbols)
                .map(|((start, end), s)| AnnotatedSegment { start, end, symbol: s.clone() })
                .collect(),
        )
    }
}

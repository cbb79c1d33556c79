use crate::error::{Error, Result};

/// Interior boundary frames of one utterance of `frames` frames.
///
/// Boundaries are strictly increasing and lie in `[1, frames - 1]`; a
/// boundary `b` starts a new segment at frame `b`. The implicit start 0 and
/// end `frames` are never stored. The empty list is a single segment.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Segmentation {
    boundaries: Vec<usize>,
    frames: usize,
}

impl Segmentation {
    pub fn new(boundaries: Vec<usize>, frames: usize) -> Result<Self> {
        if frames == 0 {
            return Err(Error::InvalidSegmentation("zero frames".into()));
        }
        if let Some(&b) = boundaries.iter().find(|&&b| b == 0 || b >= frames) {
            return Err(Error::InvalidSegmentation(format!("boundary {b} outside [1, {}]", frames - 1)));
        }
        if boundaries.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidSegmentation(format!("boundaries not strictly increasing: {boundaries:?}")));
        }
        Ok(Segmentation { boundaries, frames })
    }

    pub fn single(frames: usize) -> Result<Self> {
        Self::new(Vec::new(), frames)
    }

    pub fn boundaries(&self) -> &[usize] {
        &self.boundaries
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn num_segments(&self) -> usize {
        self.boundaries.len() + 1
    }

    /// Segment spans `[s, e)` including the implicit start and end.
    pub fn spans(&self) -> Vec<(usize, usize)> {
        let mut cuts = Vec::with_capacity(self.boundaries.len() + 2);
        cuts.push(0);
        cuts.extend_from_slice(&self.boundaries);
        cuts.push(self.frames);
        cuts.windows(2).map(|w| (w[0], w[1])).collect()
    }

    /// Boundary times in seconds, `b * frame_shift`.
    pub fn times(&self, frame_shift: f64) -> Vec<f64> {
        self.boundaries.iter().map(|&b| b as f64 * frame_shift).collect()
    }

    pub fn into_boundaries(self) -> Vec<usize> {
        self.boundaries
    }
}

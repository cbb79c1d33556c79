use super::Segmentation;
use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// Unary and segment scores of one utterance, as seen by the decoders.
///
/// `unary(t)` is the score of a boundary at frame `t` and `bigram(s, e)` the
/// score of a segment covering frames `[s, e)`. Callers guarantee
/// `0 <= s < e <= frames()` and `t < frames()`.
pub trait SegmentScorer {
    fn frames(&self) -> usize;
    fn unary(&self, t: usize) -> f64;
    fn bigram(&self, s: usize, e: usize) -> f64;
}

/// Detached per-utterance scores. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreContext {
    hidden: Tensor,
    unary: Vec<f64>,
    prefix: Tensor,
    // prefix · W1 of the bigram head, so a segment costs O(head width).
    proj: Tensor,
    b1: Vec<f64>,
    w2: Vec<f64>,
    b2: f64,
    mean_span: bool,
    end_spans: bool,
}

impl ScoreContext {
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn new(
        hidden: Tensor,
        unary: Vec<f64>,
        w1: &Tensor,
        b1: Vec<f64>,
        w2: Vec<f64>,
        b2: f64,
        mean_span: bool,
        end_spans: bool,
    ) -> Self {
        let (t, d) = hidden.shape();
        let mut prefix = Tensor::zeros(t + 1, d);
        for r in 0..t {
            for c in 0..d {
                let v = prefix.get(r, c) + hidden.get(r, c);
                prefix.set(r + 1, c, v);
            }
        }
        let proj = prefix.matmul(w1).expect("bigram head input width is 2H");
        ScoreContext { hidden, unary, prefix, proj, b1, w2, b2, mean_span, end_spans }
    }

    pub fn hidden(&self) -> &Tensor {
        &self.hidden
    }

    pub fn unary_scores(&self) -> &[f64] {
        &self.unary
    }

    /// `(T + 1) x 2H`, `prefix[0] = 0`.
    pub fn prefix(&self) -> &Tensor {
        &self.prefix
    }

    /// Input of the bigram head for segment `[s, e)` before the mean flag.
    pub fn span_argument(&self, s: usize, e: usize) -> Vec<f64> {
        self.prefix.row(e).iter().zip(self.prefix.row(s)).map(|(a, b)| a - b).collect()
    }

    /// Checked segment score.
    pub fn bigram_score(&self, s: usize, e: usize) -> Result<f64> {
        if s >= e || e > self.frames() {
            return Err(Error::InvalidSpan { start: s, end: e, frames: self.frames() });
        }
        Ok(self.bigram(s, e))
    }
}

impl SegmentScorer for ScoreContext {
    fn frames(&self) -> usize {
        self.hidden.rows()
    }

    fn unary(&self, t: usize) -> f64 {
        self.unary[t]
    }

    fn bigram(&self, s: usize, e: usize) -> f64 {
        if !self.end_spans && (s == 0 || e == self.frames()) {
            return 0.0;
        }
        let scale = if self.mean_span { 1.0 / (e - s) as f64 } else { 1.0 };
        let pe = self.proj.row(e);
        let ps = self.proj.row(s);
        let mut acc = self.b2;
        for j in 0..self.b1.len() {
            acc += self.w2[j] * ((pe[j] - ps[j]) * scale + self.b1[j]).tanh();
        }
        acc
    }
}

/// Total score of `seg`: unary terms at interior boundaries plus one bigram
/// term per segment, accumulated left to right in the decoders' order.
pub fn score_segmentation<S: SegmentScorer + ?Sized>(scorer: &S, seg: &Segmentation) -> Result<f64> {
    let t = scorer.frames();
    if seg.frames() != t {
        return Err(Error::InvalidSegmentation(format!(
            "segmentation covers {} frames, scores cover {t}",
            seg.frames()
        )));
    }
    let mut acc = 0.0;
    for (s, e) in seg.spans() {
        acc = acc + scorer.bigram(s, e) + if e < t { scorer.unary(e) } else { 0.0 };
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Toy;

    impl SegmentScorer for Toy {
        fn frames(&self) -> usize {
            2
        }
        fn unary(&self, t: usize) -> f64 {
            [0.0, 1.0][t]
        }
        fn bigram(&self, s: usize, e: usize) -> f64 {
            if (s, e) == (0, 2) { 0.5 } else { 0.0 }
        }
    }

    #[test]
    fn two_frame_toy() {
        assert_eq!(score_segmentation(&Toy, &Segmentation::single(2).unwrap()).unwrap(), 0.5);
        assert_eq!(score_segmentation(&Toy, &Segmentation::new(vec![1], 2).unwrap()).unwrap(), 1.0);
        assert!(score_segmentation(&Toy, &Segmentation::single(3).unwrap()).is_err());
    }

    #[test]
    fn unary_shift_is_linear_in_boundary_count() {
        let m = crate::model::tests::small_model(0);
        let ctx = m.build_context(&crate::model::tests::features(8, 5, 11)).unwrap();
        let mut shifted = ctx.clone();
        shifted.unary.iter_mut().for_each(|u| *u += 0.75);
        for b in [vec![], vec![4], vec![1, 3, 5, 7]] {
            let k = b.len() as f64;
            let seg = Segmentation::new(b, 8).unwrap();
            let base = score_segmentation(&ctx, &seg).unwrap();
            let moved = score_segmentation(&shifted, &seg).unwrap();
            assert!((moved - base - 0.75 * k).abs() < 1e-12);
            assert_eq!(base.to_bits(), score_segmentation(&ctx, &seg).unwrap().to_bits());
        }
    }

    #[test]
    fn excluded_end_spans_score_zero() {
        let cfg = crate::model::ModelConfig { input_dim: 5, hidden: 3, end_spans: false, ..Default::default() };
        let m = crate::model::SegmentalModel::with_input_dim(cfg, Default::default(), vec![]).unwrap();
        let ctx = m.build_context(&crate::model::tests::features(6, 5, 12)).unwrap();
        assert_eq!(ctx.bigram(0, 3), 0.0);
        assert_eq!(ctx.bigram(2, 6), 0.0);
        assert_ne!(ctx.bigram(2, 4), 0.0);
    }
}

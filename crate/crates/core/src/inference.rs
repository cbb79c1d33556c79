//! Exact decoding over segmentations.
//!
//! `best[t]` is the best score of segmenting frames `[0, t)`:
//!
//! ```text
//! best[0] = 0
//! best[t] = max_{s in [max(0, t - cap), t)} best[s] + bigram(s, t) + (u(t) if t < T)
//! ```
//!
//! Ties go to the smallest `s`. Every decoder adds terms in the same order as
//! [`score_segmentation`], so reported scores match it bit for bit.

use rand::Rng;

use crate::error::{Error, Result};
use crate::model::{score_segmentation, SegmentScorer, Segmentation};

/// Largest utterance [`brute_force_segment`] accepts.
pub const MAX_BRUTE_FORCE_FRAMES: usize = 16;

/// Scores held in plain tables, for oracles and benchmarks.
#[derive(Debug, Clone, PartialEq)]
pub struct TableScores {
    frames: usize,
    unary: Vec<f64>,
    // (T + 1) x (T + 1), indexed [s][e].
    bigram: Vec<f64>,
}

impl TableScores {
    pub fn new(unary: Vec<f64>, bigram: impl Fn(usize, usize) -> f64) -> Self {
        let frames = unary.len();
        let n = frames + 1;
        let mut table = vec![0.0; n * n];
        for s in 0..frames {
            for e in s + 1..=frames {
                table[s * n + e] = bigram(s, e);
            }
        }
        TableScores { frames, unary, bigram: table }
    }

    /// Every score drawn from uniform(-1, 1).
    pub fn random<R: Rng>(frames: usize, rng: &mut R) -> Self {
        let unary: Vec<f64> = (0..frames).map(|_| rng.random_range(-1.0..1.0)).collect();
        let n = frames + 1;
        let draws: Vec<f64> = (0..n * n).map(|_| rng.random_range(-1.0..1.0)).collect();
        Self::new(unary, |s, e| draws[s * n + e])
    }
}

impl SegmentScorer for TableScores {
    fn frames(&self) -> usize {
        self.frames
    }

    fn unary(&self, t: usize) -> f64 {
        self.unary[t]
    }

    fn bigram(&self, s: usize, e: usize) -> f64 {
        self.bigram[s * (self.frames + 1) + e]
    }
}

fn check_frames<S: SegmentScorer + ?Sized>(scorer: &S) -> Result<usize> {
    match scorer.frames() {
        0 => Err(Error::InvalidSegmentation("cannot decode zero frames".into())),
        t => Ok(t),
    }
}

fn window(t: usize, cap: Option<usize>) -> usize {
    cap.map_or(0, |c| t.saturating_sub(c))
}

fn check_cap(cap: Option<usize>) -> Result<()> {
    if cap == Some(0) {
        return Err(Error::InvalidSegmentation("segment length cap must be at least 1".into()));
    }
    Ok(())
}

#[inline]
fn arc<S: SegmentScorer + ?Sized>(scorer: &S, s: usize, t: usize, frames: usize) -> (f64, f64) {
    (scorer.bigram(s, t), if t < frames { scorer.unary(t) } else { 0.0 })
}

fn backtrack(back: &[usize], frames: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut t = frames;
    while t > 0 {
        t = back[t];
        if t > 0 {
            out.push(t);
        }
    }
    out.reverse();
    out
}

/// Best segmentation with any number of segments, each at most `cap` frames
/// long when a cap is given.
pub fn dp_segment<S: SegmentScorer + ?Sized>(scorer: &S, cap: Option<usize>) -> Result<(Segmentation, f64)> {
    check_cap(cap)?;
    let frames = check_frames(scorer)?;
    let mut best = vec![f64::NEG_INFINITY; frames + 1];
    let mut back = vec![0usize; frames + 1];
    best[0] = 0.0;
    for t in 1..=frames {
        for s in window(t, cap)..t {
            let (b, u) = arc(scorer, s, t, frames);
            let v = best[s] + b + u;
            if v > best[t] {
                best[t] = v;
                back[t] = s;
            }
        }
    }
    Ok((Segmentation::new(backtrack(&back, frames), frames)?, best[frames]))
}

/// Best segmentation with exactly `k` segments.
pub fn dp_segment_k<S: SegmentScorer + ?Sized>(scorer: &S, k: usize) -> Result<(Segmentation, f64)> {
    let frames = check_frames(scorer)?;
    if k == 0 || k > frames {
        return Err(Error::SegmentCountOutOfRange { k, frames });
    }
    // best[j][t]: frames [0, t) in j segments, feasible for j <= t.
    let n = frames + 1;
    let mut best = vec![f64::NEG_INFINITY; (k + 1) * n];
    let mut back = vec![0usize; (k + 1) * n];
    best[0] = 0.0;
    for j in 1..=k {
        // Leave room for the remaining k - j segments.
        let last = frames - (k - j);
        for t in j..=last {
            if j == k && t != frames {
                continue;
            }
            let mut bv = f64::NEG_INFINITY;
            let mut bs = 0;
            for s in j - 1..t {
                let prev = best[(j - 1) * n + s];
                if prev == f64::NEG_INFINITY {
                    continue;
                }
                let (b, u) = arc(scorer, s, t, frames);
                let v = prev + b + u;
                if v > bv {
                    bv = v;
                    bs = s;
                }
            }
            best[j * n + t] = bv;
            back[j * n + t] = bs;
        }
    }
    let mut bounds = Vec::with_capacity(k - 1);
    let mut t = frames;
    for j in (1..=k).rev() {
        t = back[j * n + t];
        if j > 1 {
            bounds.push(t);
        }
    }
    bounds.reverse();
    Ok((Segmentation::new(bounds, frames)?, best[k * n + frames]))
}

#[derive(Debug, Clone, Copy)]
struct Entry {
    score: f64,
    prev: usize,
    rank: usize,
}

/// The two best segmentations under the same recurrence and cap, best
/// first. Fewer than two come back only when `T = 1`.
pub fn dp_top2<S: SegmentScorer + ?Sized>(scorer: &S, cap: Option<usize>) -> Result<Vec<(Segmentation, f64)>> {
    check_cap(cap)?;
    let frames = check_frames(scorer)?;
    let mut lists: Vec<Vec<Entry>> = Vec::with_capacity(frames + 1);
    lists.push(vec![Entry { score: 0.0, prev: 0, rank: 0 }]);
    for t in 1..=frames {
        let mut top: Vec<Entry> = Vec::with_capacity(2);
        for s in window(t, cap)..t {
            let (b, u) = arc(scorer, s, t, frames);
            for (rank, e) in lists[s].iter().enumerate() {
                let cand = Entry { score: e.score + b + u, prev: s, rank };
                // Strict comparisons keep the earliest (s, rank) on ties.
                if top.len() < 2 {
                    let pos = top.iter().position(|x| cand.score > x.score).unwrap_or(top.len());
                    top.insert(pos, cand);
                } else if cand.score > top[1].score {
                    if cand.score > top[0].score {
                        top[1] = top[0];
                        top[0] = cand;
                    } else {
                        top[1] = cand;
                    }
                }
            }
        }
        lists.push(top);
    }
    let mut out = Vec::with_capacity(2);
    for r in 0..lists[frames].len() {
        let score = lists[frames][r].score;
        let mut bounds = Vec::new();
        let (mut t, mut rank) = (frames, r);
        while t > 0 {
            let e = lists[t][rank];
            t = e.prev;
            rank = e.rank;
            if t > 0 {
                bounds.push(t);
            }
        }
        bounds.reverse();
        out.push((Segmentation::new(bounds, frames)?, score));
    }
    Ok(out)
}

/// Highest-scoring segmentation different from `gold`, if one exists.
pub fn best_competitor<S: SegmentScorer + ?Sized>(
    scorer: &S,
    gold: &Segmentation,
    cap: Option<usize>,
) -> Result<Option<(Segmentation, f64)>> {
    Ok(dp_top2(scorer, cap)?.into_iter().find(|(seg, _)| seg != gold))
}

/// Exhaustive search over all `2^(T-1)` boundary subsets, optionally only
/// those with exactly `k` segments. Ties go to the lexicographically smallest
/// boundary list.
pub fn brute_force_segment<S: SegmentScorer + ?Sized>(scorer: &S, k: Option<usize>) -> Result<(Segmentation, f64)> {
    let frames = check_frames(scorer)?;
    if frames > MAX_BRUTE_FORCE_FRAMES {
        return Err(Error::TooManyFrames { frames, max: MAX_BRUTE_FORCE_FRAMES });
    }
    if let Some(k) = k {
        if k == 0 || k > frames {
            return Err(Error::SegmentCountOutOfRange { k, frames });
        }
    }
    let mut best: Option<(Vec<usize>, f64)> = None;
    for mask in 0u32..(1u32 << (frames - 1)) {
        if k.is_some_and(|k| mask.count_ones() as usize != k - 1) {
            continue;
        }
        let bounds: Vec<usize> = (1..frames).filter(|b| mask & (1 << (b - 1)) != 0).collect();
        let v = score_segmentation(scorer, &Segmentation::new(bounds.clone(), frames)?)?;
        let better = match &best {
            None => true,
            Some((bb, bv)) => v > *bv || (v == *bv && bounds < *bb),
        };
        if better {
            best = Some((bounds, v));
        }
    }
    let (bounds, v) = best.expect("at least one candidate");
    Ok((Segmentation::new(bounds, frames)?, v))
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn toy() -> TableScores {
        TableScores::new(vec![0.0, 1.0], |s, e| if (s, e) == (0, 2) { 0.5 } else { 0.0 })
    }

    fn seg(b: &[usize], t: usize) -> Segmentation {
        Segmentation::new(b.to_vec(), t).unwrap()
    }

    #[test]
    fn two_frame_toy() {
        assert_eq!(dp_segment(&toy(), None).unwrap(), (seg(&[1], 2), 1.0));
        assert_eq!(dp_segment_k(&toy(), 1).unwrap(), (seg(&[], 2), 0.5));
        assert_eq!(dp_segment_k(&toy(), 2).unwrap(), (seg(&[1], 2), 1.0));
        assert_eq!(brute_force_segment(&toy(), None).unwrap(), (seg(&[1], 2), 1.0));
        let top = dp_top2(&toy(), None).unwrap();
        assert_eq!(top, vec![(seg(&[1], 2), 1.0), (seg(&[], 2), 0.5)]);
    }

    #[test]
    fn single_frame() {
        let s = TableScores::new(vec![0.3], |_, _| -2.0);
        assert_eq!(dp_segment(&s, None).unwrap(), (seg(&[], 1), -2.0));
        assert_eq!(brute_force_segment(&s, None).unwrap(), (seg(&[], 1), -2.0));
        assert_eq!(dp_top2(&s, None).unwrap().len(), 1);
        assert!(best_competitor(&s, &seg(&[], 1), None).unwrap().is_none());
    }

    #[test]
    fn negative_unary_means_no_boundaries() {
        let s = TableScores::new(vec![-1e3; 9], |_, _| 0.0);
        assert_eq!(dp_segment(&s, None).unwrap().0, seg(&[], 9));
    }

    #[test]
    fn forced_segmentation_when_k_equals_t() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = TableScores::random(6, &mut rng);
        assert_eq!(dp_segment_k(&s, 6).unwrap().0, seg(&[1, 2, 3, 4, 5], 6));
        assert!(dp_segment_k(&s, 0).is_err());
        assert!(dp_segment_k(&s, 7).is_err());
    }

    #[test]
    fn ties_prefer_smaller_predecessor() {
        // All-zero scores: every segmentation ties at 0.
        let s = TableScores::new(vec![0.0; 5], |_, _| 0.0);
        assert_eq!(dp_segment(&s, None).unwrap(), (seg(&[], 5), 0.0));
        assert_eq!(brute_force_segment(&s, None).unwrap(), (seg(&[], 5), 0.0));
        let top = dp_top2(&s, None).unwrap();
        assert_eq!(top[0].0, seg(&[], 5));
        assert_eq!(top[1].0, seg(&[1], 5));
    }

    #[test]
    fn oracle_agreement() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for i in 0..1000 {
            let t = 1 + i % 8;
            let s = TableScores::random(t, &mut rng);
            let (dseg, dv) = dp_segment(&s, None).unwrap();
            let (bseg, bv) = brute_force_segment(&s, None).unwrap();
            assert_eq!(dv.to_bits(), bv.to_bits());
            assert_eq!(dseg, bseg);
            assert!((score_segmentation(&s, &dseg).unwrap() - dv).abs() < 1e-9);
            for k in 1..=t {
                let (ks, kv) = dp_segment_k(&s, k).unwrap();
                let (bs, bv) = brute_force_segment(&s, Some(k)).unwrap();
                assert_eq!(kv.to_bits(), bv.to_bits());
                assert_eq!(ks, bs);
                assert_eq!(ks.num_segments(), k);
            }
        }
    }

    #[test]
    fn top2_matches_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for t in 1..=8 {
            for _ in 0..40 {
                let s = TableScores::random(t, &mut rng);
                let mut all: Vec<(f64, Vec<usize>)> = (0u32..1 << (t - 1))
                    .map(|mask| {
                        let b: Vec<usize> = (1..t).filter(|b| mask & (1 << (b - 1)) != 0).collect();
                        (score_segmentation(&s, &seg(&b, t)).unwrap(), b)
                    })
                    .collect();
                all.sort_by(|a, b| b.0.total_cmp(&a.0));
                let top = dp_top2(&s, None).unwrap();
                assert_eq!(top.len(), all.len().min(2));
                for (got, want) in top.iter().zip(&all) {
                    assert_eq!(got.1, want.0);
                    assert_eq!(got.0.boundaries(), &want.1[..]);
                }
                let (dseg, _) = dp_segment(&s, None).unwrap();
                assert_eq!(top[0].0, dseg);
                if t > 1 {
                    let (c, v) = best_competitor(&s, &dseg, None).unwrap().unwrap();
                    assert_ne!(c, dseg);
                    assert_eq!(v, all[1].0);
                }
            }
        }
    }

    #[test]
    fn cap_behaviour() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..50 {
            let s = TableScores::random(10, &mut rng);
            let free = dp_segment(&s, None).unwrap();
            assert_eq!(dp_segment(&s, Some(10)).unwrap(), free);
            assert_eq!(dp_segment(&s, Some(25)).unwrap(), free);
            let mut last = f64::NEG_INFINITY;
            for c in 1..=10 {
                let (sg, v) = dp_segment(&s, Some(c)).unwrap();
                assert!(v >= last);
                last = v;
                assert!(sg.spans().iter().all(|(a, b)| b - a <= c));
                assert_eq!(dp_top2(&s, Some(c)).unwrap()[0].1, v);
            }
        }
        assert_eq!(dp_segment(&toy(), Some(1)).unwrap().0, seg(&[1], 2));
        assert!(dp_segment(&toy(), Some(0)).is_err());
    }

    #[test]
    fn brute_force_limits() {
        let s = TableScores::new(vec![0.0; 17], |_, _| 0.0);
        assert!(matches!(brute_force_segment(&s, None), Err(Error::TooManyFrames { .. })));
        assert!(brute_force_segment(&toy(), Some(3)).is_err());
    }
}

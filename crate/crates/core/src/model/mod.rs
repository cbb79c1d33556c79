//! Learned segmental scores: a BiLSTM over the frames, a unary head scoring a
//! boundary at each frame, and a bigram head scoring a whole segment from the
//! sum of its hidden states. Optional per-frame phoneme and boundary heads
//! feed the auxiliary losses.

mod context;
mod io;
mod segmentation;

pub use context::{score_segmentation, ScoreContext, SegmentScorer};
pub use segmentation::Segmentation;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::nn::{Affine, BiLstm, Mlp};
use crate::autodiff::{ParameterSet, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::features::{assemble_features, FeatureConfig, FeatureStats, FrameMatrix, Waveform};

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    /// Feature row width.
    pub input_dim: usize,
    /// LSTM hidden size per direction.
    pub hidden: usize,
    pub layers: usize,
    /// Hidden width of the unary and bigram heads; `None` means `hidden`.
    pub head_hidden: Option<usize>,
    pub forget_bias: f64,
    /// Score segments with the unary head instead of a separate bigram head.
    pub shared_heads: bool,
    /// Feed the bigram head the mean of the hidden states instead of the sum.
    pub mean_span: bool,
    /// Score the first and last segment of an utterance.
    pub end_spans: bool,
    pub bin_head: bool,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            input_dim: 43,
            hidden: 64,
            layers: 2,
            head_hidden: None,
            forget_bias: 1.0,
            shared_heads: false,
            mean_span: false,
            end_spans: true,
            bin_head: true,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidModelConfig(m.to_string()));
        if self.input_dim == 0 {
            return bad("input_dim must be positive");
        }
        if self.hidden == 0 || self.layers == 0 {
            return bad("hidden size and layer count must be positive");
        }
        if self.head_hidden == Some(0) {
            return bad("head_hidden must be positive");
        }
        if !self.forget_bias.is_finite() {
            return bad("forget_bias must be finite");
        }
        Ok(())
    }

    pub fn head_width(&self) -> usize {
        self.head_hidden.unwrap_or(self.hidden)
    }
}

/// Tape handles produced by one forward pass.
#[derive(Debug, Clone, Copy)]
pub struct Forward {
    /// `T x 2H` encoder output.
    pub hidden: Var,
    /// `T x 1` unary scores.
    pub unary: Var,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentalModel {
    config: ModelConfig,
    features: FeatureConfig,
    inventory: Vec<String>,
    stats: Option<FeatureStats>,
    sample_rate: Option<u32>,
    params: ParameterSet,
    encoder: BiLstm,
    unary: Mlp,
    bigram: Mlp,
    phn: Option<Affine>,
    bin: Option<Affine>,
}

impl SegmentalModel {
    /// Builds a freshly initialized model. A phoneme head is created iff
    /// `inventory` is non-empty.
    pub fn new(config: ModelConfig, features: FeatureConfig, inventory: Vec<String>) -> Result<Self> {
        config.validate()?;
        features.validate()?;
        if config.input_dim != features.feature_dim() {
            return Err(Error::InvalidModelConfig(format!(
                "input_dim {} does not match the feature width {}",
                config.input_dim,
                features.feature_dim()
            )));
        }
        Self::with_input_dim(config, features, inventory)
    }

    /// Like [`SegmentalModel::new`] but without tying `input_dim` to the
    /// feature configuration, for models fed precomputed matrices.
    pub fn with_input_dim(config: ModelConfig, features: FeatureConfig, inventory: Vec<String>) -> Result<Self> {
        config.validate()?;
        let mut seen = std::collections::HashSet::new();
        if let Some(dup) = inventory.iter().find(|s| !seen.insert(s.as_str())) {
            return Err(Error::InvalidModelConfig(format!("duplicate inventory symbol `{dup}`")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut params = ParameterSet::new();
        let h2 = 2 * config.hidden;
        let hh = config.head_width();
        let encoder = BiLstm::register(
            &mut params,
            "encoder",
            config.input_dim,
            config.hidden,
            config.layers,
            config.forget_bias,
            &mut rng,
        );
        let unary = Mlp::register(&mut params, "unary", h2, hh, 1, &mut rng);
        let bigram = if config.shared_heads {
            unary
        } else {
            Mlp::register(&mut params, "bigram", h2, hh, 1, &mut rng)
        };
        let phn = (!inventory.is_empty())
            .then(|| Affine::register(&mut params, "phn", h2, inventory.len(), &mut rng));
        let bin = config.bin_head.then(|| Affine::register(&mut params, "bin", h2, 1, &mut rng));
        Ok(SegmentalModel { config, features, inventory, stats: None, sample_rate: None, params, encoder, unary, bigram, phn, bin })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn feature_config(&self) -> &FeatureConfig {
        &self.features
    }

    pub fn inventory(&self) -> &[String] {
        &self.inventory
    }

    pub fn class_index(&self, symbol: &str) -> Option<usize> {
        self.inventory.iter().position(|s| s == symbol)
    }

    pub fn stats(&self) -> Option<&FeatureStats> {
        self.stats.as_ref()
    }

    pub fn set_stats(&mut self, stats: Option<FeatureStats>) {
        self.stats = stats;
    }

    /// Sample rate of the training audio, when known.
    pub fn sample_rate(&self) -> Option<u32> {
        self.sample_rate
    }

    pub fn set_sample_rate(&mut self, rate: Option<u32>) {
        self.sample_rate = rate;
    }

    pub fn params(&self) -> &ParameterSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParameterSet {
        &mut self.params
    }

    pub fn has_phn_head(&self) -> bool {
        self.phn.is_some()
    }

    pub fn has_bin_head(&self) -> bool {
        self.bin.is_some()
    }

    /// Features for `wave` under this model's front end and statistics.
    pub fn featurize(&self, wave: &Waveform) -> Result<FrameMatrix> {
        assemble_features(wave, &self.features, self.stats.as_ref())
    }

    /// Encoder and unary scores on `tape`. `bound` comes from `tape.bind(self.params())`.
    pub fn forward(&self, tape: &mut Tape, bound: &[Var], features: &FrameMatrix) -> Result<Forward> {
        if features.cols() != self.config.input_dim {
            return Err(Error::shape(
                "build_context",
                format!("features have {} columns, model expects {}", features.cols(), self.config.input_dim),
            ));
        }
        let x = tape.constant(Tensor::from_vec(features.rows(), features.cols(), features.data().to_vec())?);
        let hidden = self.encoder.encode(tape, bound, x)?;
        let unary = self.unary.forward(tape, bound, hidden)?;
        Ok(Forward { hidden, unary })
    }

    /// Detached scores for decoding.
    pub fn build_context(&self, features: &FrameMatrix) -> Result<ScoreContext> {
        let mut tape = Tape::new();
        let bound = tape.bind(&self.params);
        let fwd = self.forward(&mut tape, &bound, features)?;
        Ok(self.context_from(&tape, fwd))
    }

    pub fn context_from(&self, tape: &Tape, fwd: Forward) -> ScoreContext {
        let p = |i: usize| &self.params.get(i).value;
        ScoreContext::new(
            tape.value(fwd.hidden).clone(),
            tape.value(fwd.unary).data().to_vec(),
            p(self.bigram.hidden.weight),
            p(self.bigram.hidden.bias).data().to_vec(),
            p(self.bigram.output.weight).data().to_vec(),
            p(self.bigram.output.bias).item(),
            self.config.mean_span,
            self.config.end_spans,
        )
    }

    /// Segments scored by the bigram head, honouring the end-span flag.
    pub fn scored_spans(&self, seg: &Segmentation) -> Vec<(usize, usize)> {
        let t = seg.frames();
        seg.spans()
            .into_iter()
            .filter(|&(s, e)| self.config.end_spans || (s != 0 && e != t))
            .collect()
    }

    /// Score of `seg` on the tape, differentiable in every parameter.
    pub fn score_on_tape(&self, tape: &mut Tape, bound: &[Var], fwd: Forward, seg: &Segmentation) -> Result<Var> {
        let frames = tape.value(fwd.hidden).rows();
        if seg.frames() != frames {
            return Err(Error::InvalidSegmentation(format!(
                "segmentation covers {} frames, utterance has {frames}",
                seg.frames()
            )));
        }
        let mut terms = Vec::new();
        if !seg.boundaries().is_empty() {
            let u = tape.gather_rows(fwd.unary, seg.boundaries())?;
            terms.push(tape.sum(u));
        }
        let spans = self.scored_spans(seg);
        if !spans.is_empty() {
            let sums = tape.span_sums(fwd.hidden, &spans, self.config.mean_span)?;
            let b = self.bigram.forward(tape, bound, sums)?;
            terms.push(tape.sum(b));
        }
        match terms.as_slice() {
            [] => Ok(tape.constant(Tensor::scalar(0.0))),
            [a] => Ok(*a),
            [a, b] => tape.add(*a, *b),
            _ => unreachable!(),
        }
    }

    pub fn phoneme_logits_on_tape(&self, tape: &mut Tape, bound: &[Var], fwd: Forward) -> Result<Var> {
        let head = self.phn.ok_or(Error::MissingHead("phoneme"))?;
        head.forward(tape, bound, fwd.hidden)
    }

    pub fn boundary_logits_on_tape(&self, tape: &mut Tape, bound: &[Var], fwd: Forward) -> Result<Var> {
        let head = self.bin.ok_or(Error::MissingHead("boundary"))?;
        head.forward(tape, bound, fwd.hidden)
    }

    /// `T x |inventory|` unnormalized class scores.
    pub fn phoneme_logits(&self, ctx: &ScoreContext) -> Result<Tensor> {
        let head = self.phn.ok_or(Error::MissingHead("phoneme"))?;
        self.detached_affine(head, ctx.hidden())
    }

    pub fn boundary_logits(&self, ctx: &ScoreContext) -> Result<Vec<f64>> {
        let head = self.bin.ok_or(Error::MissingHead("boundary"))?;
        Ok(self.detached_affine(head, ctx.hidden())?.into_vec())
    }

    fn detached_affine(&self, head: Affine, x: &Tensor) -> Result<Tensor> {
        let mut out = x.matmul(&self.params.get(head.weight).value)?;
        let b = self.params.get(head.bias).value.data();
        for t in 0..out.rows() {
            for (o, bv) in out.row_mut(t).iter_mut().zip(b) {
                *o += bv;
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn small_model(inventory: usize) -> SegmentalModel {
        let cfg = ModelConfig { input_dim: 5, hidden: 3, seed: 7, ..Default::default() };
        let inv = (0..inventory).map(|i| format!("p{i}")).collect();
        SegmentalModel::with_input_dim(cfg, FeatureConfig::default(), inv).unwrap()
    }

    pub(crate) fn features(t: usize, d: usize, seed: u64) -> FrameMatrix {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..t * d).map(|_| rng.random_range(-1.0..1.0)).collect();
        FrameMatrix::new(t, data, 0.01, vec![crate::features::ColumnRole::Mfcc; d]).unwrap()
    }

    fn zero_head(model: &mut SegmentalModel, prefix: &str) {
        for (name, p) in model.params_mut().iter_mut() {
            if name.starts_with(prefix) && !name.ends_with(".l2.b") && !name.ends_with("phn.b") && !name.ends_with("bin.b") {
                p.value.fill(0.0);
            }
        }
    }

    #[test]
    fn context_shapes() {
        let m = small_model(0);
        let ctx = m.build_context(&features(1, 5, 1)).unwrap();
        assert_eq!(ctx.frames(), 1);
        assert_eq!(ctx.unary_scores().len(), 1);
        assert_eq!(ctx.prefix().shape(), (2, 6));
        assert!(m.build_context(&features(4, 6, 1)).is_err());
    }

    #[test]
    fn prefix_ends_at_column_sums() {
        let m = small_model(0);
        let ctx = m.build_context(&features(9, 5, 2)).unwrap();
        let h = ctx.hidden();
        for c in 0..h.cols() {
            let direct: f64 = (0..h.rows()).map(|t| h.get(t, c)).sum();
            assert_eq!(ctx.prefix().get(9, c), direct);
        }
        for t in 0..9 {
            for c in 0..h.cols() {
                let diff = ctx.prefix().get(t + 1, c) - ctx.prefix().get(t, c);
                assert!((diff - h.get(t, c)).abs() <= 1e-12 * (1.0 + h.get(t, c).abs()));
            }
        }
    }

    #[test]
    fn zero_unary_head_gives_bias() {
        let mut m = small_model(0);
        zero_head(&mut m, "unary.");
        m.params_mut().by_name_mut("unary.l2.b").unwrap().value.fill(0.37);
        let ctx = m.build_context(&features(6, 5, 3)).unwrap();
        assert!(ctx.unary_scores().iter().all(|&u| u == 0.37));
    }

    #[test]
    fn bigram_matches_head_on_span_sum() {
        let m = small_model(0);
        let f = features(7, 5, 4);
        let ctx = m.build_context(&f).unwrap();
        for (s, e) in [(0, 7), (3, 4), (1, 5)] {
            let mut tape = Tape::new();
            let bound = tape.bind(m.params());
            let fwd = m.forward(&mut tape, &bound, &f).unwrap();
            let sums = tape.span_sums(fwd.hidden, &[(s, e)], false).unwrap();
            let b = m.bigram.forward(&mut tape, &bound, sums).unwrap();
            let expected = tape.value(b).item();
            assert!((ctx.bigram_score(s, e).unwrap() - expected).abs() < 1e-10);
        }
        assert!(ctx.bigram_score(3, 3).is_err());
        assert!(ctx.bigram_score(2, 8).is_err());
    }

    #[test]
    fn span_argument_is_additive() {
        let m = small_model(0);
        let ctx = m.build_context(&features(8, 5, 5)).unwrap();
        let a = ctx.span_argument(1, 4);
        let b = ctx.span_argument(4, 7);
        let c = ctx.span_argument(1, 7);
        for i in 0..c.len() {
            assert!((a[i] + b[i] - c[i]).abs() < 1e-12);
        }
        for (a, h) in ctx.span_argument(3, 4).iter().zip(ctx.hidden().row(3)) {
            assert!((a - h).abs() < 1e-12);
        }
    }

    #[test]
    fn tape_score_matches_detached() {
        for cfg in [
            ModelConfig { input_dim: 5, hidden: 3, seed: 1, ..Default::default() },
            ModelConfig { input_dim: 5, hidden: 3, seed: 2, mean_span: true, ..Default::default() },
            ModelConfig { input_dim: 5, hidden: 3, seed: 3, end_spans: false, ..Default::default() },
            ModelConfig { input_dim: 5, hidden: 3, seed: 4, shared_heads: true, head_hidden: Some(2), ..Default::default() },
        ] {
            let m = SegmentalModel::with_input_dim(cfg, FeatureConfig::default(), vec![]).unwrap();
            let f = features(7, 5, 6);
            let ctx = m.build_context(&f).unwrap();
            for b in [vec![], vec![3], vec![1, 2, 6]] {
                let seg = Segmentation::new(b, 7).unwrap();
                let mut tape = Tape::new();
                let bound = tape.bind(m.params());
                let fwd = m.forward(&mut tape, &bound, &f).unwrap();
                let s = m.score_on_tape(&mut tape, &bound, fwd, &seg).unwrap();
                let detached = score_segmentation(&ctx, &seg).unwrap();
                assert!((tape.value(s).item() - detached).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn shared_heads_register_fewer_params() {
        let base = ModelConfig { input_dim: 5, hidden: 3, ..Default::default() };
        let sep = SegmentalModel::with_input_dim(base.clone(), FeatureConfig::default(), vec![]).unwrap();
        let shared = SegmentalModel::with_input_dim(
            ModelConfig { shared_heads: true, ..base },
            FeatureConfig::default(),
            vec![],
        )
        .unwrap();
        assert_eq!(sep.params().len(), shared.params().len() + 4);
        assert!(shared.params().index_of("bigram.l1.w").is_err());
    }

    #[test]
    fn auxiliary_heads() {
        let mut m = small_model(40);
        let ctx = m.build_context(&features(7, 5, 8)).unwrap();
        let logits = m.phoneme_logits(&ctx).unwrap();
        assert_eq!(logits.shape(), (7, 40));
        for t in 0..7 {
            let row = logits.row(t);
            let mx = row.iter().cloned().fold(f64::MIN, f64::max);
            let z: f64 = row.iter().map(|v| (v - mx).exp()).sum();
            let total: f64 = row.iter().map(|v| (v - mx).exp() / z).sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
        let bl = m.boundary_logits(&ctx).unwrap();
        assert_eq!(bl.len(), 7);
        assert!(bl.iter().all(|&v| {
            let s = 1.0 / (1.0 + (-v).exp());
            s > 0.0 && s < 1.0
        }));

        zero_head(&mut m, "phn.");
        zero_head(&mut m, "bin.");
        let logits = m.phoneme_logits(&ctx).unwrap();
        let bias = m.params().by_name("phn.b").unwrap().value.data().to_vec();
        for t in 0..7 {
            assert_eq!(logits.row(t), &bias[..]);
        }
        let bb = m.params().by_name("bin.b").unwrap().value.item();
        assert!(m.boundary_logits(&ctx).unwrap().iter().all(|&v| v == bb));
    }

    #[test]
    fn missing_heads_are_errors() {
        let cfg = ModelConfig { input_dim: 5, hidden: 3, bin_head: false, ..Default::default() };
        let m = SegmentalModel::with_input_dim(cfg, FeatureConfig::default(), vec![]).unwrap();
        let ctx = m.build_context(&features(3, 5, 9)).unwrap();
        assert!(matches!(m.phoneme_logits(&ctx), Err(Error::MissingHead(_))));
        assert!(matches!(m.boundary_logits(&ctx), Err(Error::MissingHead(_))));
    }

    #[test]
    fn config_checks() {
        let cfg = ModelConfig { input_dim: 5, ..Default::default() };
        assert!(SegmentalModel::new(cfg, FeatureConfig::default(), vec![]).is_err());
        let cfg = ModelConfig { hidden: 0, ..Default::default() };
        assert!(cfg.validate().is_err());
        let dup = vec!["a".to_string(), "a".to_string()];
        assert!(SegmentalModel::new(ModelConfig::default(), FeatureConfig::default(), dup).is_err());
        let m = SegmentalModel::new(ModelConfig { hidden: 4, ..Default::default() }, FeatureConfig::default(), vec![]).unwrap();
        assert_eq!(m.params().by_name("unary.l1.w").unwrap().value.shape(), (8, 4));
    }
}

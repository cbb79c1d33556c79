use crate::model::Segmentation;
use crate::training::LabeledUtterance;

#[derive(Debug, Clone, PartialEq)]
pub struct NonSpeechConfig {
    pub symbols: Vec<String>,
    /// Interior non-speech runs at least this long (seconds) split the utterance.
    pub min_run: f64,
    /// Non-speech kept at each end of a piece (seconds).
    pub max_lead: f64,
}

impl Default for NonSpeechConfig {
    fn default() -> Self {
        NonSpeechConfig {
            symbols: ["sil", "noise", "iva"].iter().map(|s| s.to_string()).collect(),
            min_run: 0.100,
            max_lead: 0.020,
        }
    }
}

/// Cuts `utt` at long interior non-speech runs and trims every piece to at
/// most `max_lead` of non-speech at either end. Utterances without phoneme
/// labels pass through; an all-non-speech utterance yields nothing.
pub fn split_nonspeech(utt: &LabeledUtterance, cfg: &NonSpeechConfig) -> Vec<LabeledUtterance> {
    let Some(phonemes) = &utt.phonemes else {
        return vec![utt.clone()];
    };
    let shift = utt.features.frame_shift();
    let frames = utt.gold.frames();
    let lead = (cfg.max_lead / shift + 1e-9).floor() as usize;
    let min_run = (cfg.min_run / shift - 1e-9).ceil().max(1.0) as usize;
    let spans = utt.gold.spans();
    let silent: Vec<bool> = phonemes.iter().map(|p| cfg.symbols.iter().any(|s| s == p)).collect();

    // Maximal runs of non-speech segments as frame ranges.
    let mut runs: Vec<(usize, usize)> = Vec::new();
    for (i, &(s, e)) in spans.iter().enumerate() {
        if silent[i] {
            match runs.last_mut() {
                Some(r) if r.1 == s => r.1 = e,
                _ => runs.push((s, e)),
            }
        }
    }
    // Runs touching the ends always trim; interior runs cut when long enough.
    let cuts: Vec<(usize, usize)> =
        runs.into_iter().filter(|&(s, e)| s == 0 || e == frames || e - s >= min_run).collect();

    let mut pieces = Vec::new();
    let mut prev_cut: Option<(usize, usize)> = None;
    for cut in cuts.iter().copied().map(Some).chain(std::iter::once(None)) {
        let speech_start = prev_cut.map_or(0, |c| c.1);
        let speech_end = cut.map_or(frames, |c| c.0);
        if speech_end > speech_start {
            let a = prev_cut.map_or(speech_start, |c| speech_start - lead.min(c.1 - c.0));
            let b = cut.map_or(speech_end, |c| speech_end + lead.min(c.1 - c.0));
            pieces.push((a, b));
        }
        prev_cut = cut;
    }

    if pieces == [(0, frames)] {
        return vec![utt.clone()];
    }
    let mut out = Vec::with_capacity(pieces.len());
    for (k, &(a, b)) in pieces.iter().enumerate() {
        let bounds: Vec<usize> = utt.gold.boundaries().iter().filter(|&&x| x > a && x < b).map(|x| x - a).collect();
        let symbols: Vec<String> =
            spans.iter().zip(phonemes).filter(|((s, e), _)| *s < b && *e > a).map(|(_, p)| p.clone()).collect();
        let features = utt.features.slice_rows(a, b).expect("piece within utterance");
        let gold = Segmentation::new(bounds, b - a).expect("shifted boundaries stay interior");
        out.push(
            LabeledUtterance::new(format!("{}_{k}", utt.id), features, gold, Some(symbols))
                .expect("one symbol per overlapping segment"),
        );
    }
    out
}

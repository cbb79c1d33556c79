use segfeat_core::data::{load_corpus, synth_corpus, write_synth_corpus, AnnotationUnit, SynthConfig};
use segfeat_core::training::evaluate_model;
use segfeat_core::{
    dp_segment, fit, CorpusManifest, FeatureConfig, LossSet, ModelConfig, SegmentalModel, TolerancePolicy, TrainConfig,
};

#[test]
fn synthetic_corpus_trains_saves_and_reloads() {
    let dir = tempfile::tempdir().unwrap();
    let synth = SynthConfig { n_utterances: 24, seed: 9, ..Default::default() };
    let path = write_synth_corpus(&synth_corpus(&synth).unwrap(), dir.path(), 4, 4).unwrap();
    let manifest = CorpusManifest::read(&path, 16000, AnnotationUnit::Samples).unwrap();
    let fc = FeatureConfig::default();
    let corpus = load_corpus(&manifest, &fc, None).unwrap();
    assert_eq!(corpus.train.len(), 16);

    let mc = ModelConfig { hidden: 16, ..Default::default() };
    let mut model = SegmentalModel::new(mc, fc, corpus.inventory.clone()).unwrap();
    model.set_stats(corpus.stats.clone());
    model.set_sample_rate(Some(16000));
    let cfg = TrainConfig {
        epochs: 4,
        learning_rate: 3e-3,
        losses: LossSet { hinge: true, phn: true, bin: false },
        ..Default::default()
    };
    let out = fit(&corpus.train, &corpus.val, model, &cfg).unwrap();
    assert_eq!(out.logs.len(), 4);
    assert!(out.logs.last().unwrap().hinge < out.logs[0].hinge);

    let test = evaluate_model(&out.best, &corpus.test, None, TolerancePolicy::default()).unwrap();
    assert!(test.f1 > 0.5, "{test}");

    let file = dir.path().join("best.model");
    out.best.save(&file).unwrap();
    let back = SegmentalModel::load(&file).unwrap();
    for u in &corpus.test {
        let a = dp_segment(&out.best.build_context(&u.features).unwrap(), None).unwrap();
        let b = dp_segment(&back.build_context(&u.features).unwrap(), None).unwrap();
        assert_eq!(a, b);
    }
    // Featurizing raw audio with the stored statistics reproduces the corpus features.
    let wave = segfeat_core::features::read_wav(&manifest.entries[0].wav).unwrap();
    let f = back.featurize(&wave).unwrap();
    assert_eq!(f.data(), corpus.train[0].features.data());
}

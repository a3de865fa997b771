//! Public-API round trip over files: synthetic images on disk, manifest,
//! extraction, UBM file, evaluation.

use sigproof_core::corpus::{scan_manifest, CorpusManifest, Layout, PreprocessConfig};
use sigproof_core::distances::MetricId;
use sigproof_core::evaluation::{run_protocol, EvalCorpus, Protocol, Scenario, RF_IMPOSTOR_WRITERS};
use sigproof_core::evidence::{ProbMode, UbmIndex, WeightSpec};
use sigproof_core::features::{featurize_entries, read_feature_file, write_feature_file, Channel, FeatureConfig, FeatureStore};
use sigproof_core::synth::{generate, SynthConfig};
use sigproof_core::ubm::{build_ubm, Origin, SelectionRule, UniverseModel};
use sigproof_core::Execution;

#[test]
fn files_in_files_out() {
    let dir = tempfile::tempdir().unwrap();
    let layout = generate(&SynthConfig {
        writers: 4,
        genuine: 3,
        forgeries: 2,
        ubm_members: 6,
        seed: 21,
    })
    .write(dir.path())
    .unwrap();
    let channels = [Channel::G, Channel::Qt, Channel::T4];
    let (pre, cfg) = (PreprocessConfig::default(), FeatureConfig::checked_in());

    let corpus_manifest = scan_manifest(&layout.corpus_manifest, &Layout::FlatJson).unwrap();
    assert_eq!(corpus_manifest, CorpusManifest::read_flat_json(&layout.corpus_manifest).unwrap());
    let seq = featurize_entries(&corpus_manifest.entries, &channels, &pre, &cfg, Execution::Sequential).unwrap();
    let par = featurize_entries(&corpus_manifest.entries, &channels, &pre, &cfg, Execution::Parallel).unwrap();
    assert_eq!(seq, par);

    let feats = dir.path().join("corpus.jsonl");
    write_feature_file(&feats, &seq).unwrap();
    let store = FeatureStore::new(read_feature_file(&feats).unwrap()).unwrap();
    assert_eq!(store.sets(), seq.as_slice());

    let ubm_manifest = CorpusManifest::read_flat_json(&layout.ubm_manifest).unwrap();
    let ubm_sets = featurize_entries(&ubm_manifest.entries, &channels, &pre, &cfg, Execution::Parallel).unwrap();
    let ubm = build_ubm(
        &ubm_manifest,
        &FeatureStore::new(ubm_sets).unwrap(),
        6,
        SelectionRule::FirstPerWriter,
        &channels,
        Origin::Synthetic,
    )
    .unwrap();
    let ubm_path = dir.path().join("toy.jsonl");
    ubm.save(&ubm_path).unwrap();
    let index = UbmIndex::new(UniverseModel::load(&ubm_path).unwrap());

    let corpus = EvalCorpus::from_manifest(&corpus_manifest, &store).unwrap();
    assert_eq!(corpus.len(), 4);
    for scenario in [Scenario::RandomForgery, Scenario::SkilledForgery] {
        let p = Protocol {
            scenario,
            n_refs: 2,
            metric: MetricId::Cosine,
            channels: channels.to_vec(),
            weights: WeightSpec::Equal,
            ubm_id: "toy".into(),
            ubm_size: None,
            rng_seed: 1,
            rf_impostor_writers: RF_IMPOSTOR_WRITERS,
            prob_mode: ProbMode::Oriented,
        };
        let r = run_protocol(&p, &corpus, &index, Execution::Parallel).unwrap();
        assert_eq!(r.eer, 0.0, "{scenario}");
        assert_eq!(r.n_genuine_trials, 4);
        assert_eq!(r.clamped.len(), if scenario == Scenario::RandomForgery { 4 } else { 0 });
    }
}

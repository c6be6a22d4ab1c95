mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use common::{fixture, relative_error, ReferenceGpt2};
use gardenpath::analyze::{run_pipeline, PipelineSettings, TraceSource};
use gardenpath::corpus::{enumerate_forms, render, SentenceFamily};
use gardenpath::model::synthetic::{synthetic_archive, synthetic_model};
use gardenpath::model::{write_trace_dump, HiddenLayer, LogBase, TensorArchive};
use gardenpath::{Model, ModelConfig};

fn tiny_config() -> ModelConfig {
    ModelConfig {
        n_layer: 2,
        n_head: 2,
        d_model: 8,
        vocab_size: 64,
        n_ctx: 16,
        layernorm_epsilon: 1e-5,
    }
}

fn tiny_bytes() -> Vec<u8> {
    std::fs::read(fixture("tiny_gpt2.safetensors")).unwrap()
}

fn tiny_model() -> Model {
    Model::load(TensorArchive::from_bytes(&tiny_bytes()).unwrap(), tiny_config()).unwrap()
}

fn widen(v: &[f32]) -> Vec<f64> {
    v.iter().map(|&x| x as f64).collect()
}

#[test]
fn fixture_archive_is_reproducible() {
    assert_eq!(synthetic_archive(&tiny_config(), 7, 0.5).unwrap(), tiny_bytes());
    let inferred = TensorArchive::from_bytes(&tiny_bytes())
        .unwrap()
        .infer_config()
        .unwrap();
    assert_eq!(inferred, tiny_config());
}

#[test]
fn matches_straight_line_reference() {
    let model = tiny_model();
    let reference = ReferenceGpt2::from_bytes(&tiny_bytes());
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..20 {
        let n = rng.random_range(1..=16);
        let ids: Vec<u32> = (0..n).map(|_| rng.random_range(0..64)).collect();
        let got = model.forward(&ids).unwrap();
        let want = reference.forward(&ids);
        let logits: Vec<f64> = want.logits.concat();
        let err = relative_error(&widen(got.logits.as_ref().unwrap()), &logits);
        assert!(err <= 1e-5, "logits relative error {err} for {ids:?}");
        for (layer, block) in want.hidden.iter().enumerate() {
            let err = relative_error(&widen(&got.hidden[layer]), &block.concat());
            assert!(err <= 1e-5, "layer {} relative error {err}", got.layer_names[layer]);
        }
    }
}

#[derive(Deserialize)]
struct TorchCase {
    ids: Vec<u32>,
    logits: Vec<Vec<f64>>,
    hidden: std::collections::BTreeMap<String, Vec<Vec<f64>>>,
}

#[derive(Deserialize)]
struct TorchFixture {
    cases: Vec<TorchCase>,
}

/// Cross-implementation check against activations from the Hugging Face
/// PyTorch model (see tools/reference_forward.py).
#[test]
fn matches_pytorch_reference_dump() {
    let text = std::fs::read_to_string(fixture("tiny_gpt2_reference.json")).unwrap();
    let fx: TorchFixture = serde_json::from_str(&text).unwrap();
    assert_eq!(fx.cases.len(), 20);
    let model = tiny_model();
    for case in &fx.cases {
        let got = model.forward(&case.ids).unwrap();
        let err = relative_error(&widen(got.logits.as_ref().unwrap()), &case.logits.concat());
        assert!(err <= 1e-4, "logits relative error {err}");
        for (name, block) in &case.hidden {
            let idx = got.layer_names.iter().position(|n| n == name).unwrap();
            let err = relative_error(&widen(&got.hidden[idx]), &block.concat());
            assert!(err <= 1e-4, "{name}: relative error {err}");
        }
    }
}

#[test]
fn loads_from_files_with_and_without_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("config.json");
    std::fs::write(
        &cfg,
        r#"{"n_layer": 2, "n_head": 2, "n_embd": 8, "vocab_size": 64, "n_positions": 16}"#,
    )
    .unwrap();
    let a = Model::from_files(fixture("tiny_gpt2.safetensors"), Some(&cfg)).unwrap();
    let b = Model::from_files(fixture("tiny_gpt2.safetensors"), None).unwrap();
    assert_eq!(a.forward(&[1, 2, 3]).unwrap(), b.forward(&[1, 2, 3]).unwrap());

    std::fs::write(
        &cfg,
        r#"{"n_layer": 2, "n_head": 2, "n_embd": 16, "vocab_size": 64, "n_positions": 16}"#,
    )
    .unwrap();
    let err = Model::from_files(fixture("tiny_gpt2.safetensors"), Some(&cfg))
        .unwrap_err()
        .to_string();
    assert!(err.contains("wte.weight"), "{err}");
    assert!(Model::from_files(dir.path().join("absent.safetensors"), None).is_err());
}

#[test]
fn dumps_drive_the_same_pipeline() {
    let config = ModelConfig {
        n_layer: 2,
        n_head: 2,
        d_model: 16,
        vocab_size: 50257,
        n_ctx: 64,
        layernorm_epsilon: 1e-5,
    };
    let model = synthetic_model(config, 5, 0.05).unwrap();
    let corpus: Vec<SentenceFamily> = common::seed().into_iter().filter(|f| f.id.ends_with("01")).collect();
    let vocab = common::vocab();
    let dir = tempfile::tempdir().unwrap();
    for f in &corpus {
        for form in enumerate_forms(f) {
            let ids = vocab.encode(&render(f, form).unwrap().text).unwrap().ids;
            write_trace_dump(
                &model.forward(&ids).unwrap(),
                dir.path(),
                &format!("{}.{}", f.id, form.tag()),
            )
            .unwrap();
        }
    }
    let settings = PipelineSettings {
        layer: HiddenLayer::LastBlock,
        log_base: LogBase::Nats,
    };
    let live = run_pipeline(&corpus, vocab, &TraceSource::Model(&model), &settings).unwrap();
    let dumped = run_pipeline(&corpus, vocab, &TraceSource::Dumps(dir.path()), &settings).unwrap();
    assert_eq!(live.records, dumped.records);

    std::fs::remove_file(dir.path().join("npz01.garden.json")).unwrap();
    let partial = run_pipeline(&corpus, vocab, &TraceSource::Dumps(dir.path()), &settings).unwrap();
    assert!(partial
        .failures
        .iter()
        .any(|f| f.family_id == "npz01" && f.item == "garden"));
    assert!(partial.records.len() < live.records.len());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn prefix_truncation_is_bit_exact(ids in prop::collection::vec(0u32..64, 1..=16), cut in 1usize..=16) {
        let model = tiny_model();
        let cut = cut.min(ids.len());
        let full = model.forward(&ids).unwrap();
        let short = model.forward(&ids[..cut]).unwrap();
        let d = 8;
        for (a, b) in full.hidden.iter().zip(&short.hidden) {
            prop_assert_eq!(&a[..cut * d], &b[..]);
        }
        prop_assert_eq!(&full.logits.as_ref().unwrap()[..cut * 64], &short.logits.as_ref().unwrap()[..]);
    }
}

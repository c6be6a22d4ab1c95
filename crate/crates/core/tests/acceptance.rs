//! Acceptance criteria, one test each. Every test prints a single
//! `ACCEPTANCE <n> PASS|FAIL <name>: <detail>` line before asserting.
//!
//! Criteria 5 and 6 need the published GPT-2 small weights: point
//! `GARDENPATH_GPT2` at a directory holding `model.safetensors` (and optionally
//! `config.json`) and run with `--include-ignored`.

mod common;

use std::path::PathBuf;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use common::{
    alignment_optimum, comparison_pairs, fixture, relative_error, score_alignment, seed, vocab, ReferenceGpt2,
};
use gardenpath::align::{align_rendered, PairMap};
use gardenpath::analyze::{
    garden_variability, negation_ordering, run_pipeline, Comparison, Metric, PipelineSettings, RunConfig, RunOutput,
    ScalarMode, TraceSource,
};
use gardenpath::corpus::{Kind, VerbChoice};
use gardenpath::metrics::{cosine_centered, manhattan, surprisal_difference, CenteringStats};
use gardenpath::model::synthetic::synthetic_archive;
use gardenpath::model::{layer_names, surprisal_series, HiddenLayer, LogBase, TensorArchive};
use gardenpath::{ForwardTrace, Model, ModelConfig};

fn verdict(n: u32, name: &str, ok: bool, detail: &str) {
    println!("ACCEPTANCE {n} {} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
    assert!(ok, "criterion {n} ({name}) failed: {detail}");
}

#[derive(Deserialize)]
struct Reference {
    text: String,
    ids: Vec<u32>,
}

fn random_text(rng: &mut ChaCha8Rng) -> String {
    let len = rng.random_range(0..40);
    (0..len)
        .map(|_| match rng.random_range(0..6) {
            0 => rng.random_range(' '..='~'),
            1 => [' ', '\n', '\t', ' '][rng.random_range(0..4)],
            2 => rng.random_range('\u{a0}'..='\u{17f}'),
            3 => rng.random_range('\u{4e00}'..='\u{4fff}'),
            4 => rng.random_range('\u{1f600}'..='\u{1f64f}'),
            _ => rng.random::<char>(),
        })
        .collect()
}

#[test]
fn criterion_1_tokenizer_parity() {
    let text = std::fs::read_to_string(fixture("tokenizer_reference.jsonl")).unwrap();
    let refs: Vec<Reference> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    let mismatched: Vec<&str> = refs
        .iter()
        .filter(|r| vocab().encode(&r.text).map(|s| s.ids).ok().as_ref() != Some(&r.ids))
        .map(|r| r.text.as_str())
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut round_trip_failures = 0;
    for _ in 0..1000 {
        let s = random_text(&mut rng);
        let ok = vocab()
            .encode(&s)
            .and_then(|seq| vocab().decode(&seq.ids))
            .is_ok_and(|back| back == s);
        round_trip_failures += usize::from(!ok);
    }
    let ok = refs.len() >= 50 && mismatched.is_empty() && round_trip_failures == 0;
    verdict(
        1,
        "tokenizer parity",
        ok,
        &format!(
            "{}/{} reference sentences match; {round_trip_failures}/1000 round-trip failures; first mismatch {:?}",
            refs.len() - mismatched.len(),
            refs.len(),
            mismatched.first()
        ),
    );
}

#[test]
fn criterion_2_forward_oracle() {
    let config = ModelConfig {
        n_layer: 2,
        n_head: 2,
        d_model: 8,
        vocab_size: 64,
        n_ctx: 16,
        layernorm_epsilon: 1e-5,
    };
    let bytes = synthetic_archive(&config, 7, 0.5).unwrap();
    let model = Model::load(TensorArchive::from_bytes(&bytes).unwrap(), config).unwrap();
    let reference = ReferenceGpt2::from_bytes(&bytes);
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut worst = 0f64;
    let mut truncation_ok = true;
    for _ in 0..20 {
        let n = rng.random_range(1..=16);
        let ids: Vec<u32> = (0..n).map(|_| rng.random_range(0..64)).collect();
        let got = model.forward(&ids).unwrap();
        let want = reference.forward(&ids);
        let logits: Vec<f64> = got.logits.as_ref().unwrap().iter().map(|&x| x as f64).collect();
        worst = worst.max(relative_error(&logits, &want.logits.concat()));
        for cut in 1..n {
            let short = model.forward(&ids[..cut]).unwrap();
            truncation_ok &= got.hidden.iter().zip(&short.hidden).all(|(a, b)| a[..cut * 8] == b[..]);
            truncation_ok &= got.logits.as_ref().unwrap()[..cut * 64] == short.logits.as_ref().unwrap()[..];
        }
    }
    verdict(
        2,
        "forward-pass oracle parity",
        worst <= 1e-5 && truncation_ok,
        &format!("worst logits relative error {worst:.3e} (limit 1e-5); prefix truncation bit-exact: {truncation_ok}"),
    );
}

#[test]
fn criterion_3_metric_properties() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut failures = Vec::new();
    let d = 16;
    let draw = |rng: &mut ChaCha8Rng| -> Vec<f32> { (0..d).map(|_| rng.random_range(-10.0f32..10.0)).collect() };
    for i in 0..1000 {
        let (a, b, c) = (draw(&mut rng), draw(&mut rng), draw(&mut rng));
        let shift: Vec<f32> = (0..d)
            .map(|_| rng.random_range(-4.0f32..4.0))
            .map(|x| x.round())
            .collect();
        let ab = manhattan(&a, &b).unwrap();
        if ab != manhattan(&b, &a).unwrap() {
            failures.push(format!("symmetry #{i}"));
        }
        if ab > manhattan(&a, &c).unwrap() + manhattan(&c, &b).unwrap() + 1e-9 {
            failures.push(format!("triangle #{i}"));
        }
        // integer shifts of values on a 1/1024 grid are exact in f32
        let q = |v: &[f32]| -> Vec<f32> { v.iter().map(|x| (x * 1024.0).round() / 1024.0).collect() };
        let (qa, qb) = (q(&a), q(&b));
        let sa: Vec<f32> = qa.iter().zip(&shift).map(|(x, s)| x + s).collect();
        let sb: Vec<f32> = qb.iter().zip(&shift).map(|(x, s)| x + s).collect();
        if manhattan(&qa, &qb).unwrap() != manhattan(&sa, &sb).unwrap() {
            failures.push(format!("translation #{i}"));
        }
        let stats = CenteringStats {
            mean: c.iter().map(|&x| x as f64).collect(),
            count: 3,
            layer: "t".into(),
        };
        if let Ok(cos) = cosine_centered(&a, &b, &stats) {
            if !(-1.0..=1.0).contains(&cos) {
                failures.push(format!("cosine bound #{i}"));
            }
        }
        if let Ok(cos) = cosine_centered(&a, &a, &stats) {
            if (cos - 1.0).abs() > 1e-9 {
                failures.push(format!("self similarity #{i}"));
            }
        }
        let base: Vec<Option<f64>> = (0..6).map(|k| (k > 0).then(|| rng.random_range(0.0..15.0))).collect();
        let variant: Vec<Option<f64>> = (0..8).map(|k| (k > 0).then(|| rng.random_range(0.0..15.0))).collect();
        let map = PairMap {
            pairs: vec![(0, 0), (1, 1), (2, 4), (3, 5), (5, 7)],
            ..Default::default()
        };
        let fwd = surprisal_difference(&base, &variant, &map);
        let bwd = surprisal_difference(&variant, &base, &map.transposed());
        if fwd.iter().zip(&bwd).any(|(f, b)| f.map(|x| -x) != *b) {
            failures.push(format!("anti-symmetry #{i}"));
        }
    }
    let v = 50257;
    let trace = ForwardTrace {
        config: ModelConfig {
            n_layer: 1,
            n_head: 1,
            d_model: 1,
            vocab_size: v,
            n_ctx: 8,
            layernorm_epsilon: 1e-5,
        },
        ids: vec![464, 8223, 11068],
        layer_names: layer_names(1),
        hidden: vec![vec![0.0; 3]; 3],
        logits: Some(vec![0.0; 3 * v]),
    };
    let s = surprisal_series(&trace, LogBase::Nats).unwrap();
    let uniform_err = s[1..]
        .iter()
        .map(|x| (x.unwrap() - (v as f64).ln()).abs())
        .fold(0.0, f64::max);
    if uniform_err > 1e-6 {
        failures.push(format!("uniform surprisal off by {uniform_err:e}"));
    }
    verdict(
        3,
        "metric property suite",
        failures.is_empty(),
        &format!("1000 random triples; uniform-logits error {uniform_err:.1e}; failures: {failures:?}"),
    );
}

#[test]
fn criterion_4_alignment_oracle() {
    let corpus = seed();
    let pairs = comparison_pairs(&corpus);
    let mut disagreements = Vec::new();
    let mut nps_checked = 0;
    let mut nps_bad = Vec::new();
    for (base, variant) in &pairs {
        let bt = vocab().encode(&base.text).unwrap();
        let vt = vocab().encode(&variant.text).unwrap();
        let map = align_rendered((base, &bt), (variant, &vt)).unwrap();
        if score_alignment((base, &bt), (variant, &vt), &map) != alignment_optimum((base, &bt), (variant, &vt)) {
            disagreements.push(variant.text.clone());
        }
        let kind = corpus.iter().find(|f| f.id == base.family_id).unwrap().kind;
        if kind == Kind::Nps && map.excluded_boundary.is_empty() {
            nps_checked += 1;
            let dropped: Vec<&str> = map.excluded_variant.iter().map(|&j| vt.pieces[j].as_str()).collect();
            if dropped != [" that"] || map.pairs.len() != bt.len() {
                nps_bad.push(variant.text.clone());
            }
        }
    }
    verdict(
        4,
        "alignment oracle equivalence",
        pairs.len() >= 100 && disagreements.is_empty() && nps_bad.is_empty() && nps_checked > 0,
        &format!(
            "{} corpus pairs, {} oracle disagreements; {nps_checked} NP/S pairs drop exactly \" that\" ({} do not)",
            pairs.len(),
            disagreements.len(),
            nps_bad.len()
        ),
    );
}

struct Gpt2Run {
    output: RunOutput,
    elapsed: Duration,
}

fn gpt2_dir() -> Option<PathBuf> {
    std::env::var_os("GARDENPATH_GPT2").map(PathBuf::from)
}

const WEIGHTS_MISSING: &str =
    "published GPT-2 small weights unavailable: set GARDENPATH_GPT2 to a directory with model.safetensors";

fn gpt2_run() -> Option<&'static Gpt2Run> {
    static RUN: OnceLock<Option<Gpt2Run>> = OnceLock::new();
    RUN.get_or_init(|| {
        let dir = gpt2_dir()?;
        let config = dir.join("config.json");
        let model = Model::from_files(
            dir.join("model.safetensors"),
            config.exists().then_some(config.as_path()),
        )
        .expect("GPT-2 weights load");
        let start = Instant::now();
        let settings = PipelineSettings {
            layer: HiddenLayer::LastBlock,
            log_base: LogBase::Nats,
        };
        let output = run_pipeline(&seed(), vocab(), &TraceSource::Model(&model), &settings).unwrap();
        Some(Gpt2Run {
            output,
            elapsed: start.elapsed(),
        })
    })
    .as_ref()
}

fn local_peak(values: &[Option<f64>], at: usize, higher: bool) -> bool {
    let (Some(prev), Some(Some(here)), Some(Some(next))) = (
        at.checked_sub(1).and_then(|p| values[p]),
        values.get(at),
        values.get(at + 1),
    ) else {
        return false;
    };
    if higher {
        *here > prev && here > next
    } else {
        *here < prev && here < next
    }
}

/// Local-extremum check at the ambiguity word of the quoted MV/RR items.
fn ambiguity_point(run: &RunOutput, family: &str, words: &[&str]) -> (bool, String) {
    let label = Comparison {
        verb_choice: VerbChoice::Ambiguous,
        extended: false,
    }
    .label();
    let Some(r) = run
        .records
        .iter()
        .find(|r| r.family_id == family && r.comparison == label)
    else {
        return (false, format!("{family}: no garden-vs-negated record"));
    };
    let s = &r.series;
    let manhattan: Vec<Option<f64>> = s.manhattan.iter().map(|&v| Some(v)).collect();
    let candidates: Vec<usize> = s
        .labels
        .iter()
        .enumerate()
        .filter(|(_, l)| words.contains(&l.trim()))
        .flat_map(|(i, _)| [i.saturating_sub(1), i])
        .collect();
    for &p in &candidates {
        let hidden = local_peak(&manhattan, p, true) && local_peak(&s.cosine, p, false);
        let surprisal_extremum = local_peak(&s.surprisal_diff, p, true) || local_peak(&s.surprisal_diff, p, false);
        if hidden && !surprisal_extremum {
            return (
                true,
                format!("{family}: hidden-state extremum at `{}`", s.labels[p].trim()),
            );
        }
    }
    (false, format!("{family}: no qualifying position among {candidates:?}"))
}

#[test]
#[ignore = "needs published GPT-2 weights via GARDENPATH_GPT2"]
fn criterion_5_figure_trends() {
    let Some(run) = gpt2_run() else {
        verdict(5, "figure-trend reproduction", false, WEIGHTS_MISSING);
        return;
    };
    let out = &run.output;
    let mut ok = run.elapsed < Duration::from_secs(600);
    let mut detail = vec![format!("runtime {:.0}s", run.elapsed.as_secs_f64())];
    for (part, mode, metric) in [
        ("a", ScalarMode::AtTrigger, Metric::SurprisalDiff),
        ("b", ScalarMode::PreTrigger, Metric::Manhattan),
    ] {
        for cell in negation_ordering(&out.records, mode, metric) {
            let frac = cell.fraction.unwrap_or(0.0);
            ok &= frac >= 0.75;
            detail.push(format!(
                "({part}) {} {}/{} = {frac:.2}",
                cell.kind, cell.garden_stronger, cell.families
            ));
        }
    }
    for (family, words) in [
        ("mvrr02", &["cave", "lit"][..]),
        ("mvrr03", &["filled"][..]),
        ("mvrr04", &["littered"][..]),
    ] {
        let (good, msg) = ambiguity_point(out, family, words);
        ok &= good;
        detail.push(format!("(c) {msg}"));
    }
    verdict(5, "figure-trend reproduction", ok, &detail.join("; "));
}

#[test]
#[ignore = "needs published GPT-2 weights via GARDENPATH_GPT2"]
fn criterion_6_variability() {
    let Some(run) = gpt2_run() else {
        verdict(6, "variability comparison", false, WEIGHTS_MISSING);
        return;
    };
    let cv = garden_variability(&run.output.records, ScalarMode::AtTrigger);
    let get = |m: Metric| cv[&m].coefficient_of_variation.unwrap_or(f64::INFINITY);
    let (man, cos, sur) = (get(Metric::Manhattan), get(Metric::Cosine), get(Metric::SurprisalDiff));
    verdict(
        6,
        "variability comparison",
        man < cos && man < sur,
        &format!("garden-vs-negated CV at trigger: manhattan {man:.3}, cosine {cos:.3}, surprisal {sur:.3}"),
    );
}

fn read_tree(root: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let mut files = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                files.push((rel, std::fs::read(&path).unwrap()));
            }
        }
    }
    files.sort();
    files
}

#[test]
fn criterion_7_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let config = ModelConfig {
        n_layer: 2,
        n_head: 4,
        d_model: 32,
        vocab_size: 50257,
        n_ctx: 64,
        layernorm_epsilon: 1e-5,
    };
    std::fs::write(
        dir.path().join("model.safetensors"),
        synthetic_archive(&config, 17, 0.05).unwrap(),
    )
    .unwrap();
    let mut trees = Vec::new();
    for threads in [1, 4] {
        let cfg = dir.path().join(format!("run{threads}.cfg"));
        std::fs::write(
            &cfg,
            format!(
                "weights = model.safetensors\nout_dir = out{threads}\nthreads = {threads}\ndebug_alignment = true\n"
            ),
        )
        .unwrap();
        gardenpath::report::execute(&RunConfig::from_file(&cfg).unwrap(), true).unwrap();
        trees.push(read_tree(&dir.path().join(format!("out{threads}"))));
    }
    let names = |t: &[(String, Vec<u8>)]| t.iter().map(|(n, _)| n.clone()).collect::<Vec<_>>();
    let differing: Vec<&str> = trees[0]
        .iter()
        .zip(&trees[1])
        .filter(|(a, b)| a != b)
        .map(|(a, _)| a.0.as_str())
        .collect();
    let same_names = names(&trees[0]) == names(&trees[1]);
    verdict(
        7,
        "determinism across thread counts",
        same_names && differing.is_empty() && !trees[0].is_empty(),
        &format!(
            "{} files compared between 1 and 4 threads; differing: {differing:?}",
            trees[0].len()
        ),
    );
}

//! Pipeline orchestration: render → tokenize → forward → align → metrics, and
//! aggregation of negation effects per sentence kind and comparison.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::align::{align_rendered, PairMap};
use crate::corpus::{enumerate_forms, render, FormSpec, Kind, RenderedSentence, SentenceFamily, VerbChoice};
use crate::error::{Error, Result};
use crate::metrics::{compute_centering, surprisal_difference, CenteringStats, MetricSeries};
use crate::model::{load_trace_dump, surprisal_series, ForwardTrace, HiddenLayer, LogBase, Model};
use crate::tokenizer::{TokenSequence, Vocabulary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalarMode {
    MeanAll,
    PreTrigger,
    AtTrigger,
}

impl ScalarMode {
    pub const ALL: [ScalarMode; 3] = [ScalarMode::MeanAll, ScalarMode::PreTrigger, ScalarMode::AtTrigger];

    pub fn as_str(self) -> &'static str {
        match self {
            ScalarMode::MeanAll => "mean_all",
            ScalarMode::PreTrigger => "pre_trigger",
            ScalarMode::AtTrigger => "at_trigger",
        }
    }
}

impl fmt::Display for ScalarMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScalarMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "mean_all" => Ok(ScalarMode::MeanAll),
            "pre_trigger" => Ok(ScalarMode::PreTrigger),
            "at_trigger" => Ok(ScalarMode::AtTrigger),
            other => Err(Error::Pipeline(format!(
                "unknown scalar mode `{other}` (expected mean_all, pre_trigger or at_trigger)"
            ))),
        }
    }
}

/// A non-negated form compared against its negated counterpart.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Comparison {
    pub verb_choice: VerbChoice,
    pub extended: bool,
}

impl Comparison {
    pub fn base_form(&self) -> FormSpec {
        FormSpec::new(self.verb_choice, false, self.extended)
    }

    pub fn label(&self) -> String {
        let ext = if self.extended { "-ext" } else { "" };
        format!("{}{ext}-vs-negated", self.verb_choice.as_str())
    }

    pub fn parse_label(label: &str) -> Option<Self> {
        let stem = label.strip_suffix("-vs-negated")?;
        let (verb, extended) = match stem.strip_suffix("-ext") {
            Some(v) => (v, true),
            None => (stem, false),
        };
        let verb_choice = match verb {
            "garden" => VerbChoice::Ambiguous,
            "unambiguous" => VerbChoice::Unambiguous,
            "blocked" => VerbChoice::Blocked,
            _ => return None,
        };
        Some(Comparison { verb_choice, extended })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub family_id: String,
    pub kind: Kind,
    pub comparison: String,
    pub base_text: String,
    pub variant_text: String,
    pub series: MetricSeries,
    /// Index into the series of the pair whose base token starts the trigger;
    /// `None` when that token was excluded by the alignment.
    pub trigger_pair: Option<usize>,
    pub layer: String,
    #[serde(skip)]
    pub pair_map: PairMap,
}

impl TrajectoryRecord {
    pub fn is_flagged(&self) -> bool {
        self.trigger_pair.is_none()
    }
}

/// Per-metric scalar of one record; `None` where the metric is undefined.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scalars {
    pub manhattan: Option<f64>,
    pub cosine: Option<f64>,
    pub surprisal_diff: Option<f64>,
}

impl Scalars {
    pub fn get(&self, metric: Metric) -> Option<f64> {
        match metric {
            Metric::Manhattan => self.manhattan,
            Metric::Cosine => self.cosine,
            Metric::SurprisalDiff => self.surprisal_diff,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Manhattan,
    Cosine,
    SurprisalDiff,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Manhattan, Metric::Cosine, Metric::SurprisalDiff];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Manhattan => "manhattan",
            Metric::Cosine => "cosine",
            Metric::SurprisalDiff => "surprisal_diff",
        }
    }

    /// Whether a stronger negation effect shows as a larger value.
    pub fn larger_is_stronger(self) -> bool {
        !matches!(self, Metric::Cosine)
    }
}

fn mean_defined(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let (sum, n) = values.flatten().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

pub fn scalarize(record: &TrajectoryRecord, mode: ScalarMode) -> Result<Scalars> {
    let s = &record.series;
    let at = |i: usize| Scalars {
        manhattan: s.manhattan.get(i).copied(),
        cosine: s.cosine.get(i).copied().flatten(),
        surprisal_diff: s.surprisal_diff.get(i).copied().flatten(),
    };
    match mode {
        ScalarMode::MeanAll => Ok(Scalars {
            manhattan: mean_defined(s.manhattan.iter().map(|&v| Some(v))),
            cosine: mean_defined(s.cosine.iter().copied()),
            surprisal_diff: mean_defined(s.surprisal_diff.iter().copied()),
        }),
        ScalarMode::PreTrigger | ScalarMode::AtTrigger => {
            let t = record.trigger_pair.ok_or_else(|| {
                Error::Pipeline(format!(
                    "{} {}: trigger token was not paired; {mode} is undefined",
                    record.family_id, record.comparison
                ))
            })?;
            if mode == ScalarMode::AtTrigger {
                Ok(at(t))
            } else if t == 0 {
                Ok(Scalars {
                    manhattan: None,
                    cosine: None,
                    surprisal_diff: None,
                })
            } else {
                Ok(at(t - 1))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub n: usize,
    pub mean: Option<f64>,
    /// Unbiased sample variance; absent with fewer than two samples.
    pub variance: Option<f64>,
    /// Standard deviation over |mean|.
    pub coefficient_of_variation: Option<f64>,
}

impl MetricSummary {
    pub fn from_values(values: &[f64]) -> Self {
        let n = values.len();
        let mean = (n > 0).then(|| values.iter().sum::<f64>() / n as f64);
        let variance = match (mean, n) {
            (Some(m), n) if n >= 2 => Some(values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1) as f64),
            _ => None,
        };
        let coefficient_of_variation = match (mean, variance) {
            (Some(m), Some(v)) if m != 0.0 => Some(v.sqrt() / m.abs()),
            _ => None,
        };
        MetricSummary {
            n,
            mean,
            variance,
            coefficient_of_variation,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRecord {
    pub kind: Kind,
    pub comparison: String,
    pub mode: ScalarMode,
    /// Unflagged records in this cell.
    pub count: usize,
    pub manhattan: MetricSummary,
    pub cosine: MetricSummary,
    pub surprisal_diff: MetricSummary,
    pub expectation: String,
}

impl AggregateRecord {
    pub fn metric(&self, metric: Metric) -> &MetricSummary {
        match metric {
            Metric::Manhattan => &self.manhattan,
            Metric::Cosine => &self.cosine,
            Metric::SurprisalDiff => &self.surprisal_diff,
        }
    }
}

fn expectation(kind: Kind, comparison: &str) -> String {
    match Comparison::parse_label(comparison).map(|c| c.verb_choice) {
        Some(VerbChoice::Ambiguous) => "largest effect: negation resolves a live ambiguity".into(),
        Some(VerbChoice::Unambiguous) if kind == Kind::Nps => {
            "smaller than garden-vs-negated; near-zero expected, the inserted \"that\" resolves nothing".into()
        }
        Some(VerbChoice::Unambiguous) => "smaller than garden-vs-negated".into(),
        Some(VerbChoice::Blocked) => "smaller than garden-vs-negated; comma expected to matter little".into(),
        None => String::new(),
    }
}

/// Groups unflagged records by (kind, comparison) in sorted order.
pub fn aggregate(records: &[TrajectoryRecord], mode: ScalarMode) -> Vec<AggregateRecord> {
    let mut cells: BTreeMap<(Kind, String), Vec<Scalars>> = BTreeMap::new();
    for r in records.iter().filter(|r| !r.is_flagged()) {
        let scalars = scalarize(r, mode).expect("unflagged records scalarize under every mode");
        cells.entry((r.kind, r.comparison.clone())).or_default().push(scalars);
    }
    cells
        .into_iter()
        .map(|((kind, comparison), scalars)| {
            let summary = |m: Metric| {
                let vals: Vec<f64> = scalars.iter().filter_map(|s| s.get(m)).collect();
                MetricSummary::from_values(&vals)
            };
            AggregateRecord {
                kind,
                count: scalars.len(),
                manhattan: summary(Metric::Manhattan),
                cosine: summary(Metric::Cosine),
                surprisal_diff: summary(Metric::SurprisalDiff),
                expectation: expectation(kind, &comparison),
                comparison,
                mode,
            }
        })
        .collect()
}

/// Per kind: in how many families does negation move `metric` more for the
/// garden-path form than for the unambiguous form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderingCell {
    pub kind: Kind,
    pub metric: Metric,
    pub mode: ScalarMode,
    pub families: usize,
    pub garden_stronger: usize,
    pub fraction: Option<f64>,
}

pub fn negation_ordering(records: &[TrajectoryRecord], mode: ScalarMode, metric: Metric) -> Vec<OrderingCell> {
    let lookup = |family: &str, label: &str| {
        records
            .iter()
            .find(|r| r.family_id == family && r.comparison == label && !r.is_flagged())
            .and_then(|r| scalarize(r, mode).ok())
            .and_then(|s| s.get(metric))
    };
    let garden = Comparison {
        verb_choice: VerbChoice::Ambiguous,
        extended: false,
    }
    .label();
    let unamb = Comparison {
        verb_choice: VerbChoice::Unambiguous,
        extended: false,
    }
    .label();
    let mut cells: BTreeMap<Kind, (usize, usize)> = BTreeMap::new();
    let mut seen = std::collections::BTreeSet::new();
    for r in records {
        if !seen.insert(r.family_id.clone()) {
            continue;
        }
        if let (Some(g), Some(u)) = (lookup(&r.family_id, &garden), lookup(&r.family_id, &unamb)) {
            let cell = cells.entry(r.kind).or_default();
            cell.0 += 1;
            let stronger = if metric.larger_is_stronger() { g > u } else { g < u };
            if stronger {
                cell.1 += 1;
            }
        }
    }
    cells
        .into_iter()
        .map(|(kind, (families, garden_stronger))| OrderingCell {
            kind,
            metric,
            mode,
            families,
            garden_stronger,
            fraction: (families > 0).then(|| garden_stronger as f64 / families as f64),
        })
        .collect()
}

/// Coefficient of variation of garden-vs-negated scalars over the whole run, per metric.
pub fn garden_variability(records: &[TrajectoryRecord], mode: ScalarMode) -> BTreeMap<Metric, MetricSummary> {
    let garden: Vec<Scalars> = records
        .iter()
        .filter(|r| !r.is_flagged())
        .filter(|r| Comparison::parse_label(&r.comparison).is_some_and(|c| c.verb_choice == VerbChoice::Ambiguous))
        .filter_map(|r| scalarize(r, mode).ok())
        .collect();
    Metric::ALL
        .iter()
        .map(|&m| {
            let vals: Vec<f64> = garden.iter().filter_map(|s| s.get(m)).collect();
            (m, MetricSummary::from_values(&vals))
        })
        .collect()
}

/// Where forward traces come from.
pub enum TraceSource<'a> {
    Model(&'a Model),
    /// Directory of dumps named `<family_id>.<form tag>.json`.
    Dumps(&'a Path),
}

impl TraceSource<'_> {
    pub fn describe(&self) -> String {
        match self {
            TraceSource::Model(m) => {
                let c = m.config();
                format!(
                    "built-in forward pass (n_layer={}, n_head={}, d_model={}, vocab_size={})",
                    c.n_layer, c.n_head, c.d_model, c.vocab_size
                )
            }
            TraceSource::Dumps(_) => "external activation dumps".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineSettings {
    pub layer: HiddenLayer,
    pub log_base: LogBase,
}

/// One rendered sentence after tokenization and a forward pass, reduced to what
/// the metrics need.
#[derive(Debug, Clone)]
pub struct SentenceState {
    pub sentence: RenderedSentence,
    pub tokens: TokenSequence,
    pub layer_name: String,
    pub d_model: usize,
    /// `[positions, d_model]` at the configured layer.
    pub hidden: Vec<f32>,
    pub surprisal: Option<Vec<Option<f64>>>,
}

impl SentenceState {
    pub fn state(&self, position: usize) -> &[f32] {
        &self.hidden[position * self.d_model..(position + 1) * self.d_model]
    }

    pub fn vectors(&self) -> std::slice::Chunks<'_, f32> {
        self.hidden.chunks(self.d_model)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub family_id: String,
    pub item: String,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub records: Vec<TrajectoryRecord>,
    pub failures: Vec<Failure>,
    pub centering: CenteringStats,
    pub sentences: Vec<SentenceState>,
    pub layer_name: String,
}

fn reduce_trace(
    sentence: RenderedSentence,
    tokens: TokenSequence,
    trace: ForwardTrace,
    settings: &PipelineSettings,
) -> Result<SentenceState> {
    if trace.ids != tokens.ids {
        return Err(Error::Pipeline(format!(
            "trace token ids do not match the tokenization of `{}`",
            sentence.text
        )));
    }
    let layer = trace.layer_index(settings.layer)?;
    let surprisal = match surprisal_series(&trace, settings.log_base) {
        Ok(s) => Some(s),
        Err(e) => {
            log::warn!("{}: {e}", sentence.text);
            None
        }
    };
    Ok(SentenceState {
        layer_name: trace.layer_names[layer].clone(),
        d_model: trace.config.d_model,
        hidden: trace.hidden.into_iter().nth(layer).expect("index checked"),
        surprisal,
        sentence,
        tokens,
    })
}

/// Path of the dump expected for a rendered sentence.
pub fn dump_path(dir: &Path, sentence: &RenderedSentence) -> PathBuf {
    dir.join(format!("{}.{}.json", sentence.family_id, sentence.form.tag()))
}

/// Runs the full comparison over a corpus. Per-sentence errors are collected in
/// `failures`; the run itself fails only when nothing succeeds.
pub fn run_pipeline(
    corpus: &[SentenceFamily],
    vocab: &Vocabulary,
    source: &TraceSource<'_>,
    settings: &PipelineSettings,
) -> Result<RunOutput> {
    if corpus.is_empty() {
        return Err(Error::Pipeline("empty corpus".into()));
    }
    let rendered: Vec<RenderedSentence> = corpus
        .iter()
        .flat_map(|f| enumerate_forms(f).into_iter().map(move |form| render(f, form)))
        .collect::<Result<_>>()?;

    let states: Vec<Result<SentenceState>> = rendered
        .into_par_iter()
        .map(|sentence| {
            let tokens = vocab.encode(&sentence.text)?;
            let trace = match source {
                TraceSource::Model(model) => model.forward(&tokens.ids)?,
                TraceSource::Dumps(dir) => load_trace_dump(dump_path(dir, &sentence))?,
            };
            reduce_trace(sentence, tokens, trace, settings)
        })
        .collect();

    let mut failures = Vec::new();
    let mut by_form: BTreeMap<(String, FormSpec), usize> = BTreeMap::new();
    let mut sentences = Vec::new();
    let mut form_index = 0usize;
    for family in corpus {
        for form in enumerate_forms(family) {
            match &states[form_index] {
                Ok(state) => {
                    by_form.insert((family.id.clone(), form), sentences.len());
                    sentences.push(state.clone());
                }
                Err(e) => failures.push(Failure {
                    family_id: family.id.clone(),
                    item: form.tag(),
                    message: e.to_string(),
                }),
            }
            form_index += 1;
        }
    }
    if sentences.is_empty() {
        let first = failures.first().map(|f| f.message.clone()).unwrap_or_default();
        return Err(Error::Pipeline(format!("every sentence failed (first error: {first})")));
    }

    let layer_name = sentences[0].layer_name.clone();
    let centering = compute_centering(sentences.iter().flat_map(SentenceState::vectors), &layer_name)?;

    let mut records = Vec::new();
    for family in corpus {
        for base_form in enumerate_forms(family).into_iter().filter(|f| !f.negated) {
            let comparison = Comparison {
                verb_choice: base_form.verb_choice,
                extended: base_form.extended,
            };
            let key = |form: FormSpec| by_form.get(&(family.id.clone(), form)).map(|&i| &sentences[i]);
            let (Some(base), Some(variant)) = (key(base_form), key(base_form.with_negated(true))) else {
                failures.push(Failure {
                    family_id: family.id.clone(),
                    item: comparison.label(),
                    message: "a sentence of this comparison failed earlier".into(),
                });
                continue;
            };
            match compare(family, comparison, base, variant, &centering) {
                Ok(record) => records.push(record),
                Err(e) => failures.push(Failure {
                    family_id: family.id.clone(),
                    item: comparison.label(),
                    message: e.to_string(),
                }),
            }
        }
    }
    if records.is_empty() {
        let first = failures.first().map(|f| f.message.clone()).unwrap_or_default();
        return Err(Error::Pipeline(format!(
            "no comparison succeeded (first error: {first})"
        )));
    }
    records.sort_by(|a, b| (&a.family_id, &a.comparison).cmp(&(&b.family_id, &b.comparison)));
    Ok(RunOutput {
        records,
        failures,
        centering,
        sentences,
        layer_name,
    })
}

fn compare(
    family: &SentenceFamily,
    comparison: Comparison,
    base: &SentenceState,
    variant: &SentenceState,
    centering: &CenteringStats,
) -> Result<TrajectoryRecord> {
    let pair_map = align_rendered((&base.sentence, &base.tokens), (&variant.sentence, &variant.tokens))?;
    let surprisal = match (&base.surprisal, &variant.surprisal) {
        (Some(b), Some(v)) => surprisal_difference(b, v, &pair_map),
        _ => vec![None; pair_map.pairs.len()],
    };
    let labels = pair_map
        .pairs
        .iter()
        .map(|&(i, _)| base.tokens.pieces[i].clone())
        .collect();
    let series = MetricSeries::compute(
        pair_map.pairs.iter().map(|&(i, j)| (base.state(i), variant.state(j))),
        surprisal,
        labels,
        centering,
    )?;
    let trigger_token = base.tokens.token_at_byte(base.sentence.trigger_span.start);
    let trigger_pair = trigger_token.and_then(|t| pair_map.pair_for_base(t));
    if trigger_pair.is_none() {
        log::warn!(
            "{} {}: trigger token not paired; excluded from aggregates",
            family.id,
            comparison.label()
        );
    }
    Ok(TrajectoryRecord {
        family_id: family.id.clone(),
        kind: family.kind,
        comparison: comparison.label(),
        base_text: base.sentence.text.clone(),
        variant_text: variant.sentence.text.clone(),
        series,
        trigger_pair,
        layer: base.layer_name.clone(),
        pair_map,
    })
}

/// Settings read from a `key = value` run file. Relative paths resolve
/// against the file's directory.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Bundled seed corpus when absent.
    pub corpus: Option<PathBuf>,
    pub weights: Option<PathBuf>,
    pub model_config: Option<PathBuf>,
    pub traces: Option<PathBuf>,
    /// Bundled GPT-2 vocabulary when both are absent.
    pub vocab: Option<PathBuf>,
    pub merges: Option<PathBuf>,
    pub layer: HiddenLayer,
    pub log_base: LogBase,
    pub mode: ScalarMode,
    pub out_dir: PathBuf,
    /// Worker threads; 0 lets the runtime choose.
    pub threads: usize,
    pub rogue_k: usize,
    pub debug_alignment: bool,
}

impl RunConfig {
    pub const KEYS: [&'static str; 13] = [
        "corpus",
        "weights",
        "model_config",
        "traces",
        "vocab",
        "merges",
        "layer",
        "log_base",
        "mode",
        "out_dir",
        "threads",
        "rogue_k",
        "debug_alignment",
    ];

    pub fn parse(text: &str, base_dir: &Path, origin: &Path) -> Result<Self> {
        let err = |message: String| Error::Config {
            path: origin.to_path_buf(),
            message,
        };
        let mut map: BTreeMap<String, String> = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("line {}: expected `key = value`", n + 1)))?;
            let key = key.trim();
            if !Self::KEYS.contains(&key) {
                return Err(err(format!("line {}: unknown key `{key}`", n + 1)));
            }
            map.insert(key.to_string(), value.trim().to_string());
        }
        let path = |key: &str| map.get(key).map(|v| base_dir.join(v));
        let parse_num = |key: &str, default: usize| -> Result<usize> {
            map.get(key)
                .map(|v| {
                    v.parse()
                        .map_err(|_| err(format!("`{key}` must be a non-negative integer")))
                })
                .unwrap_or(Ok(default))
        };
        let config = RunConfig {
            corpus: path("corpus"),
            weights: path("weights"),
            model_config: path("model_config"),
            traces: path("traces"),
            vocab: path("vocab"),
            merges: path("merges"),
            layer: map.get("layer").map(|v| v.parse()).transpose()?.unwrap_or_default(),
            log_base: map.get("log_base").map(|v| v.parse()).transpose()?.unwrap_or_default(),
            mode: map
                .get("mode")
                .map(|v| v.parse())
                .transpose()?
                .unwrap_or(ScalarMode::AtTrigger),
            out_dir: path("out_dir").unwrap_or_else(|| base_dir.join("out")),
            threads: parse_num("threads", 0)?,
            rogue_k: parse_num("rogue_k", 5)?,
            debug_alignment: map
                .get("debug_alignment")
                .map(|v| matches!(v.as_str(), "true" | "1" | "yes"))
                .unwrap_or(false),
        };
        if config.vocab.is_some() != config.merges.is_some() {
            return Err(err("`vocab` and `merges` must be given together".into()));
        }
        match (&config.weights, &config.traces) {
            (None, None) => Err(err("one of `weights` or `traces` is required".into())),
            (Some(_), Some(_)) => Err(err("`weights` and `traces` are mutually exclusive".into())),
            _ => Ok(config),
        }
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config {
            path: path.to_path_buf(),
            message: format!("cannot read run config: {e}"),
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base, path)
    }
}

/// Inputs named by a [`RunConfig`], loaded and ready to run.
pub struct LoadedRun {
    pub corpus: Vec<SentenceFamily>,
    pub corpus_name: String,
    pub vocab: Vocabulary,
    pub model: Option<Model>,
    pub traces: Option<PathBuf>,
}

impl LoadedRun {
    pub fn load(config: &RunConfig) -> Result<Self> {
        let (corpus, corpus_name) = match &config.corpus {
            Some(p) => (
                crate::corpus::load_corpus(p)?,
                p.file_name()
                    .map(|n| n.to_string_lossy().into_owned())
                    .unwrap_or_default(),
            ),
            None => (crate::corpus::seed_corpus()?, "bundled seed corpus".into()),
        };
        let vocab = match (&config.vocab, &config.merges) {
            (Some(v), Some(m)) => Vocabulary::from_files(v, m)?,
            _ => Vocabulary::gpt2()?,
        };
        let model = match &config.weights {
            Some(w) => Some(Model::from_files(w, config.model_config.as_deref())?),
            None => None,
        };
        Ok(LoadedRun {
            corpus,
            corpus_name,
            vocab,
            model,
            traces: config.traces.clone(),
        })
    }

    pub fn source(&self) -> TraceSource<'_> {
        match (&self.model, &self.traces) {
            (Some(m), _) => TraceSource::Model(m),
            (None, Some(dir)) => TraceSource::Dumps(dir),
            (None, None) => unreachable!("RunConfig requires weights or traces"),
        }
    }

    /// Runs the pipeline on a pool of `threads` workers (0: runtime default).
    pub fn run(&self, settings: &PipelineSettings, threads: usize) -> Result<RunOutput> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::Pipeline(format!("thread pool: {e}")))?;
        pool.install(|| run_pipeline(&self.corpus, &self.vocab, &self.source(), settings))
    }
}

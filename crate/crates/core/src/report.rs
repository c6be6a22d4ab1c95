//! CSV/JSON tables and SVG trajectory plots.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analyze::{
    aggregate, garden_variability, negation_ordering, AggregateRecord, Comparison, Failure, LoadedRun, Metric,
    MetricSummary, OrderingCell, PipelineSettings, RunConfig, RunOutput, ScalarMode, TrajectoryRecord,
};
use crate::corpus::{Kind, VerbChoice};
use crate::error::{Error, Result};
use crate::metrics::{dimension_diagnostics, rogue_influence, DimensionReport, MetricSeries, RogueInfluence};

pub const TRAJECTORY_COLUMNS: [&str; 9] = [
    "family_id",
    "kind",
    "comparison",
    "position",
    "base_piece",
    "manhattan",
    "cosine",
    "surprisal_diff",
    "is_trigger",
];

pub const AGGREGATE_COLUMNS: [&str; 10] = [
    "kind",
    "comparison",
    "mode",
    "count",
    "metric",
    "n",
    "mean",
    "variance",
    "cv",
    "expectation",
];

fn report_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Report(format!("{}: {e}", path.display()))
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn csv_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w)
}

pub fn trajectories_csv<W: Write>(records: &[TrajectoryRecord], w: W) -> Result<()> {
    let mut out = csv_writer(w);
    out.write_record(TRAJECTORY_COLUMNS)?;
    for r in records {
        let s = &r.series;
        for i in 0..s.len() {
            out.write_record([
                r.family_id.clone(),
                r.kind.to_string(),
                r.comparison.clone(),
                i.to_string(),
                s.labels[i].clone(),
                s.manhattan[i].to_string(),
                cell(s.cosine[i]),
                cell(s.surprisal_diff[i]),
                (r.trigger_pair == Some(i)).to_string(),
            ])?;
        }
    }
    out.flush().map_err(|e| Error::Report(e.to_string()))?;
    Ok(())
}

pub fn emit_trajectories_csv(records: &[TrajectoryRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    trajectories_csv(records, std::io::BufWriter::new(file)).map_err(|e| report_err(path, e))
}

/// Rebuilds records from a trajectories CSV. Texts, layer and pair maps are
/// not part of the table and come back empty.
pub fn read_trajectories_csv(path: impl AsRef<Path>) -> Result<Vec<TrajectoryRecord>> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .from_path(path)
        .map_err(|e| report_err(path, e))?;
    let headers = reader.headers().map_err(|e| report_err(path, e))?.clone();
    if headers.iter().ne(TRAJECTORY_COLUMNS) {
        return Err(report_err(path, "unexpected header"));
    }
    let parse_opt = |s: &str, line: u64| -> Result<Option<f64>> {
        if s.is_empty() {
            Ok(None)
        } else {
            s.parse()
                .map(Some)
                .map_err(|_| report_err(path, format!("line {line}: bad number `{s}`")))
        }
    };
    let mut records: Vec<TrajectoryRecord> = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| report_err(path, e))?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let kind: Kind = row[1]
            .parse()
            .map_err(|e| report_err(path, format!("line {line}: {e}")))?;
        let position: usize = row[3]
            .parse()
            .map_err(|_| report_err(path, format!("line {line}: bad position")))?;
        let same = records
            .last()
            .is_some_and(|r| r.family_id == row[0] && r.comparison == row[2]);
        if !same {
            records.push(TrajectoryRecord {
                family_id: row[0].to_string(),
                kind,
                comparison: row[2].to_string(),
                base_text: String::new(),
                variant_text: String::new(),
                series: MetricSeries {
                    manhattan: vec![],
                    cosine: vec![],
                    surprisal_diff: vec![],
                    labels: vec![],
                },
                trigger_pair: None,
                layer: String::new(),
                pair_map: Default::default(),
            });
        }
        let r = records.last_mut().expect("pushed above");
        if position != r.series.len() {
            return Err(report_err(path, format!("line {line}: positions out of order")));
        }
        r.series.labels.push(row[4].to_string());
        r.series.manhattan.push(
            parse_opt(&row[5], line)?.ok_or_else(|| report_err(path, format!("line {line}: missing manhattan")))?,
        );
        r.series.cosine.push(parse_opt(&row[6], line)?);
        r.series.surprisal_diff.push(parse_opt(&row[7], line)?);
        if &row[8] == "true" {
            r.trigger_pair = Some(position);
        }
    }
    Ok(records)
}

pub fn aggregates_csv<W: Write>(aggregates: &[AggregateRecord], w: W) -> Result<()> {
    let mut out = csv_writer(w);
    out.write_record(AGGREGATE_COLUMNS)?;
    for a in aggregates {
        for metric in Metric::ALL {
            let m = a.metric(metric);
            out.write_record([
                a.kind.to_string(),
                a.comparison.clone(),
                a.mode.to_string(),
                a.count.to_string(),
                metric.as_str().to_string(),
                m.n.to_string(),
                cell(m.mean),
                cell(m.variance),
                cell(m.coefficient_of_variation),
                a.expectation.clone(),
            ])?;
        }
    }
    out.flush().map_err(|e| Error::Report(e.to_string()))?;
    Ok(())
}

/// Everything `aggregates.json` holds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub aggregates: Vec<AggregateRecord>,
    pub ordering: Vec<OrderingCell>,
    pub garden_variability: BTreeMap<ScalarMode, BTreeMap<Metric, MetricSummary>>,
}

impl AggregateReport {
    pub fn build(records: &[TrajectoryRecord]) -> Self {
        let mut aggregates = Vec::new();
        let mut ordering = Vec::new();
        let mut garden = BTreeMap::new();
        for mode in ScalarMode::ALL {
            aggregates.extend(aggregate(records, mode));
            for metric in Metric::ALL {
                ordering.extend(negation_ordering(records, mode, metric));
            }
            garden.insert(mode, garden_variability(records, mode));
        }
        AggregateReport {
            aggregates,
            ordering,
            garden_variability: garden,
        }
    }
}

/// Fixed-width text table of one mode's aggregates.
pub fn aggregate_table(aggregates: &[AggregateRecord], mode: ScalarMode) -> String {
    let fmt = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into());
    let mut s = format!(
        "{:<5} {:<28} {:>5} {:>12} {:>10} {:>12} {:>10} {:>12} {:>10}\n",
        "kind", "comparison", "n", "manhattan", "cv", "cosine", "cv", "surprisal", "cv"
    );
    for a in aggregates.iter().filter(|a| a.mode == mode) {
        let _ = writeln!(
            s,
            "{:<5} {:<28} {:>5} {:>12} {:>10} {:>12} {:>10} {:>12} {:>10}",
            a.kind.to_string(),
            a.comparison,
            a.count,
            fmt(a.manhattan.mean),
            fmt(a.manhattan.coefficient_of_variation),
            fmt(a.cosine.mean),
            fmt(a.cosine.coefficient_of_variation),
            fmt(a.surprisal_diff.mean),
            fmt(a.surprisal_diff.coefficient_of_variation),
        );
    }
    s
}

/// Writes `aggregates.csv` and `aggregates.json` for every scalar mode.
pub fn write_aggregates(records: &[TrajectoryRecord], out_dir: &Path) -> Result<AggregateReport> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let report = AggregateReport::build(records);
    let csv_path = out_dir.join("aggregates.csv");
    let file = std::fs::File::create(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
    aggregates_csv(&report.aggregates, std::io::BufWriter::new(file)).map_err(|e| report_err(&csv_path, e))?;
    write_json(&out_dir.join("aggregates.json"), &report)?;
    Ok(report)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Run description written to `run.json` and mirrored in the JSON outputs.
/// Holds nothing that varies between otherwise identical runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunHeader {
    pub corpus: String,
    pub families: usize,
    pub trace_source: String,
    pub layer: String,
    pub layer_boundary: String,
    pub log_base: String,
    pub surprisal_difference: String,
    pub centering: String,
    pub headline_mode: ScalarMode,
    pub records: usize,
    pub flagged_records: usize,
    pub failures: usize,
}

impl RunHeader {
    pub fn describe_layer(layer: &str) -> String {
        match layer {
            "embed" => "token plus position embeddings, before the first block".into(),
            "ln_f" => "output of the final layernorm (the LM-head input)".into(),
            other => format!("residual stream after {other}, before any final layernorm"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub layer: String,
    pub dimensions: DimensionReport,
    pub rogue_influence: RogueInfluence,
}

/// Rogue-dimension report over every vector of the run and every aligned pair.
pub fn diagnostics(output: &RunOutput, k: usize) -> Result<Diagnostics> {
    let vectors = output.sentences.iter().flat_map(|s| s.vectors());
    let mut dimensions = dimension_diagnostics(vectors, k)?;
    dimensions.ranked.truncate(k.max(20));
    let find = |text: &str| output.sentences.iter().find(|s| s.sentence.text == text);
    let mut pairs = Vec::new();
    for r in &output.records {
        if let (Some(b), Some(v)) = (find(&r.base_text), find(&r.variant_text)) {
            pairs.extend(r.pair_map.pairs.iter().map(|&(i, j)| (b.state(i), v.state(j))));
        }
    }
    let rogue_influence = rogue_influence(pairs, &output.centering, &dimensions.rogue)?;
    Ok(Diagnostics {
        layer: output.layer_name.clone(),
        dimensions,
        rogue_influence,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct AlignmentDump<'a> {
    family_id: &'a str,
    comparison: &'a str,
    base: &'a str,
    variant: &'a str,
    pair_map: &'a crate::align::PairMap,
}

#[derive(Debug, Clone, Copy)]
pub struct ReportOptions {
    pub rogue_k: usize,
    pub debug_alignment: bool,
    pub plots: bool,
}

/// Writes every output of an analysis run under `out_dir`; returns the paths written.
pub fn write_run(
    output: &RunOutput,
    header: &RunHeader,
    out_dir: &Path,
    options: ReportOptions,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut written = Vec::new();
    let run_path = out_dir.join("run.json");
    write_json(&run_path, header)?;
    written.push(run_path);

    let csv_path = out_dir.join("trajectories.csv");
    emit_trajectories_csv(&output.records, &csv_path)?;
    written.push(csv_path);
    #[derive(Serialize)]
    struct Mirror<'a, T> {
        run: &'a RunHeader,
        #[serde(flatten)]
        body: T,
    }
    #[derive(Serialize)]
    struct Records<'a> {
        records: &'a [TrajectoryRecord],
    }
    let traj_json = out_dir.join("trajectories.json");
    write_json(
        &traj_json,
        &Mirror {
            run: header,
            body: Records {
                records: &output.records,
            },
        },
    )?;
    written.push(traj_json);

    write_aggregates(&output.records, out_dir)?;
    written.push(out_dir.join("aggregates.csv"));
    written.push(out_dir.join("aggregates.json"));

    let diag_path = out_dir.join("diagnostics.json");
    write_json(
        &diag_path,
        &Mirror {
            run: header,
            body: diagnostics(output, options.rogue_k)?,
        },
    )?;
    written.push(diag_path);

    #[derive(Serialize)]
    struct Failures<'a> {
        failures: &'a [Failure],
    }
    let fail_path = out_dir.join("failures.json");
    write_json(
        &fail_path,
        &Failures {
            failures: &output.failures,
        },
    )?;
    written.push(fail_path);

    if options.debug_alignment {
        let dumps: Vec<AlignmentDump<'_>> = output
            .records
            .iter()
            .map(|r| AlignmentDump {
                family_id: &r.family_id,
                comparison: &r.comparison,
                base: &r.base_text,
                variant: &r.variant_text,
                pair_map: &r.pair_map,
            })
            .collect();
        let path = out_dir.join("alignment.json");
        write_json(&path, &dumps)?;
        written.push(path);
    }

    if options.plots {
        let plot_dir = out_dir.join("plots");
        std::fs::create_dir_all(&plot_dir).map_err(|e| Error::io(&plot_dir, e))?;
        written.extend(write_family_plots(&output.records, &plot_dir)?);
    }
    Ok(written)
}

impl RunHeader {
    pub fn new(loaded: &LoadedRun, config: &RunConfig, output: &RunOutput) -> Self {
        RunHeader {
            corpus: loaded.corpus_name.clone(),
            families: loaded.corpus.len(),
            trace_source: loaded.source().describe(),
            layer: output.layer_name.clone(),
            layer_boundary: Self::describe_layer(&output.layer_name),
            log_base: config.log_base.to_string(),
            surprisal_difference: "surprisal(base token) - surprisal(paired negated-form token)".into(),
            centering: format!(
                "per-run mean over {} token vectors of every rendered form at {}",
                output.centering.count, output.layer_name
            ),
            headline_mode: config.mode,
            records: output.records.len(),
            flagged_records: output.records.iter().filter(|r| r.is_flagged()).count(),
            failures: output.failures.len(),
        }
    }
}

pub struct RunSummary {
    pub output: RunOutput,
    pub header: RunHeader,
    pub written: Vec<PathBuf>,
}

/// Loads, runs and writes a full analysis as described by `config`.
pub fn execute(config: &RunConfig, plots: bool) -> Result<RunSummary> {
    let loaded = LoadedRun::load(config)?;
    let settings = PipelineSettings {
        layer: config.layer,
        log_base: config.log_base,
    };
    let output = loaded.run(&settings, config.threads)?;
    let header = RunHeader::new(&loaded, config, &output);
    let written = write_run(
        &output,
        &header,
        &config.out_dir,
        ReportOptions {
            rogue_k: config.rogue_k,
            debug_alignment: config.debug_alignment,
            plots,
        },
    )?;
    Ok(RunSummary {
        output,
        header,
        written,
    })
}

/// One line of a plot; `None` leaves a gap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotSeries {
    pub label: String,
    pub values: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotSpec {
    pub title: String,
    pub y_label: String,
    /// Base token pieces of the garden-path form, one per x position.
    pub x_labels: Vec<String>,
    pub trigger: Option<usize>,
    pub series: Vec<PlotSeries>,
}

impl PlotSpec {
    pub fn validate(&self) -> Result<()> {
        if self.x_labels.is_empty() {
            return Err(Error::Report(format!("plot `{}` has no x positions", self.title)));
        }
        for s in &self.series {
            if s.values.len() != self.x_labels.len() {
                return Err(Error::Report(format!(
                    "plot `{}`: series `{}` has {} values for {} positions",
                    self.title,
                    s.label,
                    s.values.len(),
                    self.x_labels.len()
                )));
            }
        }
        if let Some(t) = self.trigger {
            if t >= self.x_labels.len() {
                return Err(Error::Report(format!(
                    "plot `{}`: trigger outside the x-axis",
                    self.title
                )));
            }
        }
        Ok(())
    }
}

fn metric_values(series: &MetricSeries, metric: Metric) -> Vec<Option<f64>> {
    match metric {
        Metric::Manhattan => series.manhattan.iter().map(|&v| Some(v)).collect(),
        Metric::Cosine => series.cosine.clone(),
        Metric::SurprisalDiff => series.surprisal_diff.clone(),
    }
}

fn metric_title(metric: Metric) -> &'static str {
    match metric {
        Metric::Manhattan => "Manhattan distance",
        Metric::Cosine => "cosine similarity (centered)",
        Metric::SurprisalDiff => "surprisal difference",
    }
}

/// Plot of one family's comparisons on the garden-path base x-axis. Other
/// comparisons are shifted so their trigger pair lands on the garden trigger;
/// points falling outside the axis are dropped.
pub fn family_plot_spec(records: &[&TrajectoryRecord], extended: bool, metric: Metric) -> Option<PlotSpec> {
    let with_verb = |v: VerbChoice| {
        records.iter().find(|r| {
            Comparison::parse_label(&r.comparison)
                == Some(Comparison {
                    verb_choice: v,
                    extended,
                })
        })
    };
    let garden = with_verb(VerbChoice::Ambiguous)?;
    let n = garden.series.len();
    let anchor = garden.trigger_pair.unwrap_or(0) as isize;
    let series = [VerbChoice::Ambiguous, VerbChoice::Unambiguous, VerbChoice::Blocked]
        .into_iter()
        .filter_map(with_verb)
        .map(|r| {
            let values = metric_values(&r.series, metric);
            let shift = anchor - r.trigger_pair.unwrap_or(0) as isize;
            let mut placed = vec![None; n];
            for (k, v) in values.into_iter().enumerate() {
                let x = k as isize + shift;
                if (0..n as isize).contains(&x) {
                    placed[x as usize] = v;
                }
            }
            PlotSeries {
                label: r.comparison.clone(),
                values: placed,
            }
        })
        .collect();
    Some(PlotSpec {
        title: format!("{}: {}", garden.family_id, metric_title(metric)),
        y_label: metric_title(metric).into(),
        x_labels: garden.series.labels.clone(),
        trigger: garden.trigger_pair,
        series,
    })
}

/// Per family and extension group: one SVG per metric plus a stacked
/// three-panel view.
pub fn write_family_plots(records: &[TrajectoryRecord], dir: &Path) -> Result<Vec<PathBuf>> {
    let mut families: BTreeMap<&str, Vec<&TrajectoryRecord>> = BTreeMap::new();
    for r in records {
        families.entry(&r.family_id).or_default().push(r);
    }
    let mut written = Vec::new();
    for (family, recs) in families {
        for extended in [false, true] {
            let group = if extended { "negation-extended" } else { "negation" };
            let mut panels = Vec::new();
            for metric in [Metric::Cosine, Metric::Manhattan, Metric::SurprisalDiff] {
                let Some(spec) = family_plot_spec(&recs, extended, metric) else {
                    continue;
                };
                let path = dir.join(format!("{family}.{group}.{}.svg", metric.as_str()));
                std::fs::write(&path, render_svg(std::slice::from_ref(&spec))?).map_err(|e| Error::io(&path, e))?;
                written.push(path);
                panels.push(spec);
            }
            if !panels.is_empty() {
                let path = dir.join(format!("{family}.{group}.panels.svg"));
                std::fs::write(&path, render_svg(&panels)?).map_err(|e| Error::io(&path, e))?;
                written.push(path);
            }
        }
    }
    Ok(written)
}

pub fn emit_plot(spec: &PlotSpec, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, render_svg(std::slice::from_ref(spec))?).map_err(|e| Error::io(path, e))
}

pub fn xml_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c if (c as u32) < 0x20 && !matches!(c, '\t' | '\n' | '\r') => {
                let _ = write!(out, "\\x{:02x}", c as u32);
            }
            c => out.push(c),
        }
    }
    out
}

const PALETTE: [&str; 6] = ["#d62728", "#1f77b4", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];
const PANEL_HEIGHT: f64 = 300.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 240.0;
const MARGIN_TOP: f64 = 36.0;
const MARGIN_BOTTOM: f64 = 84.0;
const STEP: f64 = 46.0;

fn tick_label(v: f64) -> String {
    let a = v.abs();
    if a >= 100.0 {
        format!("{v:.0}")
    } else if a >= 1.0 {
        format!("{v:.2}")
    } else {
        format!("{v:.3}")
    }
}

/// SVG with one stacked panel per spec.
pub fn render_svg(specs: &[PlotSpec]) -> Result<String> {
    if specs.is_empty() {
        return Err(Error::Report("no panels to plot".into()));
    }
    for s in specs {
        s.validate()?;
    }
    let max_n = specs.iter().map(|s| s.x_labels.len()).max().unwrap_or(1);
    let plot_w = STEP * max_n.max(2) as f64;
    let width = MARGIN_LEFT + plot_w + MARGIN_RIGHT;
    let panel_total = MARGIN_TOP + PANEL_HEIGHT + MARGIN_BOTTOM;
    let height = panel_total * specs.len() as f64;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (p, spec) in specs.iter().enumerate() {
        panel(&mut svg, spec, p as f64 * panel_total, plot_w);
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

fn panel(svg: &mut String, spec: &PlotSpec, top: f64, plot_w: f64) {
    let n = spec.x_labels.len();
    let y0 = top + MARGIN_TOP;
    let values = spec.series.iter().flat_map(|s| s.values.iter().flatten().copied());
    let (mut lo, mut hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
    if !lo.is_finite() {
        (lo, hi) = (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        let pad = if lo.abs() > 1e-12 { lo.abs() * 0.1 } else { 1.0 };
        (lo, hi) = (lo - pad, hi + pad);
    } else {
        let pad = (hi - lo) * 0.05;
        (lo, hi) = (lo - pad, hi + pad);
    }
    let x = |i: usize| {
        if n == 1 {
            MARGIN_LEFT + plot_w / 2.0
        } else {
            MARGIN_LEFT + STEP / 2.0 + i as f64 * (plot_w - STEP) / (n - 1) as f64
        }
    };
    let y = |v: f64| y0 + PANEL_HEIGHT * (hi - v) / (hi - lo);

    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" font-size="14" font-weight="bold">{}</text>"#,
        MARGIN_LEFT,
        top + 22.0,
        xml_escape(&spec.title)
    );
    let _ = writeln!(
        svg,
        r##"<rect x="{MARGIN_LEFT:.2}" y="{y0:.2}" width="{plot_w:.2}" height="{PANEL_HEIGHT:.2}" fill="none" stroke="#444"/>"##
    );
    for t in 0..=4 {
        let v = lo + (hi - lo) * t as f64 / 4.0;
        let ty = y(v);
        let _ = writeln!(
            svg,
            r##"<line x1="{:.2}" y1="{ty:.2}" x2="{:.2}" y2="{ty:.2}" stroke="#ddd"/>"##,
            MARGIN_LEFT,
            MARGIN_LEFT + plot_w
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            MARGIN_LEFT - 6.0,
            ty + 4.0,
            tick_label(v)
        );
    }
    let _ = writeln!(
        svg,
        r#"<text transform="translate({:.2},{:.2}) rotate(-90)" text-anchor="middle">{}</text>"#,
        16.0,
        y0 + PANEL_HEIGHT / 2.0,
        xml_escape(&spec.y_label)
    );
    for (i, label) in spec.x_labels.iter().enumerate() {
        let lx = x(i);
        let ly = y0 + PANEL_HEIGHT + 14.0;
        let _ = writeln!(
            svg,
            r#"<text transform="translate({lx:.2},{ly:.2}) rotate(-45)" text-anchor="end">{}</text>"#,
            xml_escape(label.trim_start())
        );
    }
    if let Some(t) = spec.trigger {
        let tx = x(t);
        let _ = writeln!(
            svg,
            r##"<line x1="{tx:.2}" y1="{y0:.2}" x2="{tx:.2}" y2="{:.2}" stroke="#555" stroke-dasharray="4 3"/>"##,
            y0 + PANEL_HEIGHT
        );
        let _ = writeln!(
            svg,
            r##"<text x="{:.2}" y="{:.2}" fill="#555">trigger</text>"##,
            tx + 3.0,
            y0 + 12.0
        );
    }
    for (k, s) in spec.series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let mut run: Vec<String> = Vec::new();
        let flush = |run: &mut Vec<String>, svg: &mut String| {
            if run.len() > 1 {
                let _ = writeln!(
                    svg,
                    r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
                    run.join(" ")
                );
            }
            run.clear();
        };
        for (i, v) in s.values.iter().enumerate() {
            match v {
                Some(v) => {
                    let (px, py) = (x(i), y(*v));
                    run.push(format!("{px:.2},{py:.2}"));
                    let _ = writeln!(svg, r#"<circle cx="{px:.2}" cy="{py:.2}" r="2.5" fill="{color}"/>"#);
                }
                None => flush(&mut run, svg),
            }
        }
        flush(&mut run, svg);
        let ly = y0 + 10.0 + 18.0 * k as f64;
        let lx = MARGIN_LEFT + plot_w + 14.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/>"#,
            lx + 20.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}">{}</text>"#,
            lx + 26.0,
            ly + 4.0,
            xml_escape(&s.label)
        );
    }
}

//! Subcommand implementations. Each stage renders its output to bytes so
//! the pipeline can write and digest exactly what the standalone command
//! would.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use d2d_core::cascade::{evaluate_coverage, select_group_seeds, CoverageConfig, CoverageStudy};
use d2d_core::graphing::{compute_groups, group_size_histogram, EncounterGraph, GroupPartition};
use d2d_core::influence::SeedChoice;
use d2d_core::netmetrics::{expand_histogram, fit_powerlaw_mle, group_metrics, GroupMetrics};
use d2d_core::predictor::{
    build_dataset, feature_subset_sweep, DatasetConfig, PairDataset, SweepRow, TrainConfig, Window,
    FEATURE_NAMES,
};
use d2d_core::synthgen::{generate_trace, GeneratorConfig};
use d2d_core::trace::{summarize, write_event_log, write_relationships, TierIndex, Trace};
use d2d_core::traffic::{redundancy_timeseries, RedundancyReport};

use crate::io::{
    csv_bytes, json_bytes, load_log, load_tiers, load_trace, read_bytes, read_json, write_atomic,
    write_json, CliResult, Failure,
};
use crate::{
    DatasetArgs, FitArgs, GenerateArgs, GroupsArgs, IngestArgs, MetricsArgs, PredictArgs,
    PropagateArgs, RedundancyArgs, ReportArgs, SeedArgs,
};

fn fmt_f64(x: f64) -> String {
    format!("{x}")
}

pub struct GeneratedFiles {
    pub trace: Vec<u8>,
    pub ledger: Vec<u8>,
    pub relationships: Vec<u8>,
}

pub fn render_generated(config: &GeneratorConfig) -> CliResult<(Trace, TierIndex, GeneratedFiles)> {
    let synthetic = generate_trace(config)?;
    let mut trace_bytes = Vec::new();
    write_event_log(
        &mut trace_bytes,
        &synthetic.trace.header,
        &synthetic.trace.events,
    )?;
    let mut rel_bytes = Vec::new();
    write_relationships(&mut rel_bytes, &synthetic.ledger.tiers)?;
    let tiers = TierIndex::new(&synthetic.ledger.tiers)?;
    let files = GeneratedFiles {
        trace: trace_bytes,
        ledger: json_bytes(&synthetic.ledger)?,
        relationships: rel_bytes,
    };
    Ok((synthetic.trace, tiers, files))
}

pub fn load_generator_config(path: Option<&Path>) -> CliResult<GeneratorConfig> {
    let config: GeneratorConfig = match path {
        Some(p) => read_json(p)?,
        None => GeneratorConfig::default(),
    };
    config
        .validate()
        .map_err(|e| Failure::at(path.unwrap_or(Path::new("<default config>")), e))?;
    Ok(config)
}

pub fn generate(args: &GenerateArgs) -> CliResult<()> {
    let mut config = load_generator_config(args.config.as_deref())?;
    if let Some(seed) = args.seed {
        config.rng_seed = seed;
    }
    let (trace, _, files) = render_generated(&config)?;
    write_atomic(&args.out, &files.trace)?;
    if let Some(p) = &args.ledger {
        write_atomic(p, &files.ledger)?;
    }
    if let Some(p) = &args.relationships {
        write_atomic(p, &files.relationships)?;
    }
    eprintln!(
        "generated {} events between {} users",
        trace.events.len(),
        summarize(&trace.events).num_users
    );
    Ok(())
}

pub fn ingest(args: &IngestArgs) -> CliResult<()> {
    let parsed = load_log(&args.trace, !args.lenient)?;
    for err in &parsed.errors {
        eprintln!(
            "{}: line {}: {}",
            args.trace.display(),
            err.line_no,
            err.reason
        );
    }
    if !parsed.errors.is_empty() {
        eprintln!("skipped {} malformed lines", parsed.errors.len());
    }
    let summary = summarize(&parsed.trace.events);
    match &args.out {
        Some(p) => write_json(p, &summary),
        None => {
            print!("{}", String::from_utf8_lossy(&json_bytes(&summary)?));
            Ok(())
        }
    }
}

pub fn render_groups(partition: &GroupPartition) -> CliResult<(Vec<u8>, Vec<u8>)> {
    let groups: BTreeMap<u64, &Vec<u64>> = partition
        .groups
        .iter()
        .map(|g| (g.id, &g.members))
        .collect();
    let histogram = group_size_histogram(partition);
    let csv = csv_bytes(
        &["size", "count"],
        histogram
            .iter()
            .map(|(s, c)| [s.to_string(), c.to_string()]),
    )?;
    Ok((json_bytes(&groups)?, csv))
}

fn sibling(path: &Path, name: &str) -> PathBuf {
    path.with_file_name(name)
}

pub fn groups(args: &GroupsArgs) -> CliResult<()> {
    let trace = load_trace(&args.trace)?;
    let partition = compute_groups(&EncounterGraph::build(&trace.events));
    let (json, csv) = render_groups(&partition)?;
    write_atomic(&args.out, &json)?;
    let hist = args
        .histogram
        .clone()
        .unwrap_or_else(|| sibling(&args.out, "group_sizes.csv"));
    write_atomic(&hist, &csv)
}

pub fn render_metrics(rows: &[GroupMetrics]) -> CliResult<Vec<u8>> {
    csv_bytes(
        &[
            "group_id",
            "size",
            "global_clustering",
            "mean_local_clustering",
            "avg_path_length",
            "diameter",
            "exact",
        ],
        rows.iter().map(|m| {
            [
                m.group_id.to_string(),
                m.size.to_string(),
                fmt_f64(m.global_clustering),
                fmt_f64(m.mean_local_clustering),
                m.avg_path_length.map(fmt_f64).unwrap_or_default(),
                m.diameter.to_string(),
                m.exact.to_string(),
            ]
        }),
    )
}

pub fn metrics(args: &MetricsArgs) -> CliResult<()> {
    let trace = load_trace(&args.trace)?;
    let graph = EncounterGraph::build(&trace.events);
    let partition = compute_groups(&graph);
    let rows = group_metrics(&graph, &partition)?;
    write_atomic(&args.out, &render_metrics(&rows)?)
}

/// Reads a `size,count` histogram CSV.
pub fn parse_histogram(bytes: &[u8], origin: &Path) -> CliResult<BTreeMap<usize, usize>> {
    let bad = |msg: String| Failure::input(format!("{}: {msg}", origin.display()));
    let mut reader = csv::Reader::from_reader(bytes);
    let headers = reader.headers().map_err(|e| bad(e.to_string()))?.clone();
    if headers.len() != 2 || &headers[0] != "size" || &headers[1] != "count" {
        return Err(bad("expected header `size,count`".into()));
    }
    let mut hist = BTreeMap::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| bad(e.to_string()))?;
        let field = |k: usize| -> CliResult<usize> {
            record[k]
                .trim()
                .parse()
                .map_err(|_| bad(format!("row {}: `{}` is not a count", i + 2, &record[k])))
        };
        *hist.entry(field(0)?).or_insert(0) += field(1)?;
    }
    Ok(hist)
}

pub fn render_fit(histogram: &BTreeMap<usize, usize>, xmin: u64) -> CliResult<Vec<u8>> {
    let sizes = expand_histogram(histogram);
    json_bytes(&fit_powerlaw_mle(&sizes, xmin)?)
}

pub fn fit(args: &FitArgs) -> CliResult<()> {
    let bytes = read_bytes(&args.histogram)?;
    let hist = parse_histogram(&bytes, &args.histogram)?;
    let json = render_fit(&hist, args.xmin).map_err(|mut f| {
        f.message = format!("{}: {}", args.histogram.display(), f.message);
        f
    })?;
    match &args.out {
        Some(p) => write_atomic(p, &json),
        None => {
            print!("{}", String::from_utf8_lossy(&json));
            Ok(())
        }
    }
}

pub const REDUNDANCY_HEADER: [&str; 8] = [
    "window_start_ts",
    "category",
    "total_bytes",
    "redundant_bytes",
    "redundant_ratio",
    "deliveries",
    "redundant_deliveries",
    "distinct_files",
];

pub fn render_redundancy(report: &RedundancyReport) -> CliResult<Vec<u8>> {
    csv_bytes(
        &REDUNDANCY_HEADER,
        report.rows.iter().map(|r| {
            [
                r.window_start_ts.to_string(),
                r.category.as_str().to_string(),
                r.total_bytes.to_string(),
                r.redundant_bytes.to_string(),
                fmt_f64(r.redundant_ratio),
                r.deliveries.to_string(),
                r.redundant_deliveries.to_string(),
                r.distinct_files.to_string(),
            ]
        }),
    )
}

pub fn redundancy(args: &RedundancyArgs) -> CliResult<()> {
    let trace = load_trace(&args.trace)?;
    let report = redundancy_timeseries(&trace.events, args.window)?;
    write_atomic(&args.out, &render_redundancy(&report)?)
}

pub fn compute_seeds(
    trace: &Trace,
    tiers: &TierIndex,
    config: &CoverageConfig,
    split: f64,
) -> CliResult<Vec<SeedChoice>> {
    let partition = compute_groups(&EncounterGraph::build(&trace.events));
    Ok(select_group_seeds(
        &trace.events,
        &partition,
        tiers,
        config.strategy,
        &config.params,
        config.sample_seed,
        split,
    )?)
}

pub fn seed(args: &SeedArgs) -> CliResult<()> {
    let trace = load_trace(&args.trace)?;
    let tiers = load_tiers(args.relationships.as_deref())?;
    let config = CoverageConfig {
        strategy: args.strategy,
        sample_seed: args.seed,
        ..CoverageConfig::default()
    };
    let seeds = compute_seeds(&trace, &tiers, &config, args.split)?;
    write_json(&args.out, &seeds)
}

pub fn render_coverage(study: &CoverageStudy) -> CliResult<(Vec<u8>, Vec<u8>)> {
    let csv = csv_bytes(
        &[
            "group_id",
            "size",
            "seed",
            "coverage",
            "encountered_coverage",
        ],
        study.outcomes.iter().map(|o| {
            [
                o.group_id.to_string(),
                o.size.to_string(),
                o.seed.to_string(),
                fmt_f64(o.coverage),
                fmt_f64(o.encountered_coverage),
            ]
        }),
    )?;
    #[derive(Serialize)]
    struct Summary<'a> {
        mean: f64,
        median: f64,
        cdf: &'a [(f64, f64)],
        encountered: &'a d2d_core::cascade::CoverageSummary,
    }
    let json = json_bytes(&Summary {
        mean: study.summary.mean,
        median: study.summary.median,
        cdf: &study.summary.cdf,
        encountered: &study.encountered_summary,
    })?;
    Ok((csv, json))
}

pub fn propagate(args: &PropagateArgs) -> CliResult<()> {
    let trace = load_trace(&args.trace)?;
    let tiers = load_tiers(args.relationships.as_deref())?;
    let partition = compute_groups(&EncounterGraph::build(&trace.events));
    let mut config = CoverageConfig {
        strategy: args.strategy,
        sample_size: args.sample,
        min_group_size: args.min_size,
        sample_seed: args.seed,
        ..CoverageConfig::default()
    };
    config.params.transmission_prob = args.p;
    config.params.permission_threshold = args.threshold;
    config.params.rng_seed = args.seed;
    let study = evaluate_coverage(&trace.events, &partition, &tiers, &config)?;
    let (csv, json) = render_coverage(&study)?;
    write_atomic(&args.out, &csv)?;
    let summary = args
        .summary
        .clone()
        .unwrap_or_else(|| sibling(&args.out, "coverage_summary.json"));
    write_atomic(&summary, &json)
}

pub fn render_pairs(dataset: &PairDataset) -> CliResult<Vec<u8>> {
    let mut header = vec!["user_a", "user_b"];
    header.extend(FEATURE_NAMES);
    header.push("label");
    csv_bytes(
        &header,
        dataset.rows.iter().map(|r| {
            let mut rec = vec![r.user_a.to_string(), r.user_b.to_string()];
            rec.extend(r.features.0.iter().map(|&x| fmt_f64(x)));
            rec.push(r.label.to_string());
            rec
        }),
    )
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitInfo {
    pub feature_window: Window,
    pub label_window: Window,
    pub rows: usize,
    pub positive_rate: f64,
}

impl SplitInfo {
    fn of(d: &PairDataset) -> Self {
        SplitInfo {
            feature_window: d.feature_window,
            label_window: d.label_window,
            rows: d.rows.len(),
            positive_rate: d.positive_rate(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PredictionReport {
    pub train: SplitInfo,
    pub test: SplitInfo,
    pub model: TrainConfig,
    pub sweep: Vec<SweepRow>,
}

pub fn compute_prediction(
    train_set: &PairDataset,
    test_set: &PairDataset,
    model: &TrainConfig,
    sizes: &[usize],
) -> CliResult<PredictionReport> {
    Ok(PredictionReport {
        train: SplitInfo::of(train_set),
        test: SplitInfo::of(test_set),
        model: *model,
        sweep: feature_subset_sweep(train_set, test_set, sizes, model)?,
    })
}

pub fn predict(args: &PredictArgs) -> CliResult<()> {
    let trace = load_trace(&args.trace)?;
    let tiers = load_tiers(args.relationships.as_deref())?;
    let (train_set, test_set) = build_dataset(&trace, &tiers, &DatasetConfig::default())?;
    let model = TrainConfig {
        loss: args.loss,
        l2_lambda: args.lambda,
        epochs: args.epochs,
        learning_rate: args.learning_rate,
    };
    let report = compute_prediction(&train_set, &test_set, &model, &[2, 3])?;
    write_json(&args.out, &report)
}

pub fn dataset(args: &DatasetArgs) -> CliResult<()> {
    let trace = load_trace(&args.trace)?;
    let tiers = load_tiers(args.relationships.as_deref())?;
    let (train_set, test_set) = build_dataset(&trace, &tiers, &DatasetConfig::default())?;
    write_atomic(&args.out, &render_pairs(&train_set)?)?;
    if let Some(p) = &args.test_out {
        write_atomic(p, &render_pairs(&test_set)?)?;
    }
    Ok(())
}

pub const REDUNDANCY_TABLE: &str = "redundancy_series.csv";
pub const SIZE_TABLE: &str = "group_size_loglog.csv";
pub const COVERAGE_TABLE: &str = "coverage_cdf.csv";

fn read_table(
    bytes: &[u8],
    origin: &Path,
    required: &[&str],
) -> CliResult<Vec<BTreeMap<String, String>>> {
    let bad = |msg: String| Failure::input(format!("{}: {msg}", origin.display()));
    let mut reader = csv::Reader::from_reader(bytes);
    let headers = reader.headers().map_err(|e| bad(e.to_string()))?.clone();
    for col in required {
        if !headers.iter().any(|h| h == *col) {
            return Err(bad(format!("missing column `{col}`")));
        }
    }
    reader
        .records()
        .map(|r| {
            let r = r.map_err(|e| bad(e.to_string()))?;
            Ok(headers
                .iter()
                .zip(r.iter())
                .map(|(h, v)| (h.to_string(), v.to_string()))
                .collect())
        })
        .collect()
}

fn parse_field<T: std::str::FromStr>(
    row: &BTreeMap<String, String>,
    col: &str,
    origin: &Path,
) -> CliResult<T> {
    row[col].parse().map_err(|_| {
        Failure::input(format!(
            "{}: `{}` is not a valid {col}",
            origin.display(),
            row[col]
        ))
    })
}

/// Plot-ready tables: redundancy time series, group-size histogram on
/// log-log axes, and the coverage CDF.
pub fn render_report(
    redundancy: (&[u8], &Path),
    sizes: (&[u8], &Path),
    coverage: (&[u8], &Path),
) -> CliResult<Vec<(&'static str, Vec<u8>)>> {
    let rows = read_table(
        redundancy.0,
        redundancy.1,
        &[
            "window_start_ts",
            "category",
            "total_bytes",
            "redundant_bytes",
            "redundant_ratio",
        ],
    )?;
    let series = csv_bytes(
        &[
            "window_start_ts",
            "category",
            "total_bytes",
            "redundant_bytes",
            "redundant_ratio",
        ],
        rows.iter().map(|r| {
            [
                r["window_start_ts"].clone(),
                r["category"].clone(),
                r["total_bytes"].clone(),
                r["redundant_bytes"].clone(),
                r["redundant_ratio"].clone(),
            ]
        }),
    )?;

    let hist = parse_histogram(sizes.0, sizes.1)?;
    let total: usize = hist.values().sum();
    let mut above = total;
    let mut size_rows = Vec::new();
    for (&size, &count) in &hist {
        if count == 0 {
            continue;
        }
        let ccdf = above as f64 / total as f64;
        above -= count;
        size_rows.push([
            size.to_string(),
            count.to_string(),
            fmt_f64((size as f64).log10()),
            fmt_f64((count as f64).log10()),
            fmt_f64(ccdf),
        ]);
    }
    let sizes = csv_bytes(
        &["size", "count", "log10_size", "log10_count", "ccdf"],
        size_rows,
    )?;

    let rows = read_table(coverage.0, coverage.1, &["coverage"])?;
    let values: Vec<f64> = rows
        .iter()
        .map(|r| parse_field(r, "coverage", coverage.1))
        .collect::<CliResult<_>>()?;
    let summary = d2d_core::cascade::CoverageSummary::from_values(&values);
    let cdf = csv_bytes(
        &["coverage", "cdf"],
        summary.cdf.iter().map(|&(x, f)| [fmt_f64(x), fmt_f64(f)]),
    )?;
    Ok(vec![
        (REDUNDANCY_TABLE, series),
        (SIZE_TABLE, sizes),
        (COVERAGE_TABLE, cdf),
    ])
}

pub fn report(args: &ReportArgs) -> CliResult<()> {
    let red = read_bytes(&args.redundancy)?;
    let sizes = read_bytes(&args.histogram)?;
    let cov = read_bytes(&args.coverage)?;
    let files = render_report(
        (&red, &args.redundancy),
        (&sizes, &args.histogram),
        (&cov, &args.coverage),
    )?;
    for (name, bytes) in files {
        write_atomic(&args.out_dir.join(name), &bytes)?;
    }
    Ok(())
}

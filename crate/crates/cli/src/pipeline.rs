//! End-to-end run: generate, analyse, predict, bundle report tables, and
//! write a manifest of digests.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use d2d_core::cascade::{evaluate_coverage, CascadeParams, CoverageConfig, SPLIT_FRACTION};
use d2d_core::graphing::{compute_groups, group_size_histogram, EncounterGraph};
use d2d_core::influence::SeedStrategy;
use d2d_core::netmetrics::group_metrics;
use d2d_core::predictor::{build_dataset, DatasetConfig, TrainConfig};
use d2d_core::synthgen::GeneratorConfig;
use d2d_core::trace::{parse_event_log, summarize, Tier};
use d2d_core::traffic::{redundancy_timeseries, DEFAULT_WINDOW_SECONDS};

use crate::commands::{
    compute_prediction, compute_seeds, render_coverage, render_fit, render_generated,
    render_groups, render_metrics, render_pairs, render_redundancy, render_report,
};
use crate::io::{json_bytes, read_bytes, sha256_hex, write_atomic, CliResult, Failure};
use crate::PipelineArgs;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoverageSection {
    pub strategy: SeedStrategy,
    pub sample_size: usize,
    pub min_group_size: usize,
    pub transmission_prob: f64,
    pub permission_threshold: Tier,
    pub sample_seed: u64,
}

impl Default for CoverageSection {
    fn default() -> Self {
        CoverageSection {
            strategy: SeedStrategy::TreeRoot,
            sample_size: 100,
            min_group_size: 5,
            transmission_prob: 1.0,
            permission_threshold: Tier::Stranger,
            sample_seed: 0,
        }
    }
}

impl CoverageSection {
    fn to_config(&self) -> CoverageConfig {
        CoverageConfig {
            strategy: self.strategy,
            params: CascadeParams {
                transmission_prob: self.transmission_prob,
                permission_threshold: self.permission_threshold,
                rng_seed: self.sample_seed,
            },
            sample_size: self.sample_size,
            min_group_size: self.min_group_size,
            sample_seed: self.sample_seed,
        }
    }
}

/// Pipeline configuration; every section is optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub generator: GeneratorConfig,
    pub redundancy_window: i64,
    pub fit_xmin: u64,
    pub coverage: CoverageSection,
    pub dataset: DatasetConfig,
    pub model: TrainConfig,
    pub sweep_sizes: Vec<usize>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            generator: GeneratorConfig::default(),
            redundancy_window: DEFAULT_WINDOW_SECONDS,
            fit_xmin: 2,
            coverage: CoverageSection::default(),
            dataset: DatasetConfig::default(),
            model: TrainConfig::default(),
            sweep_sizes: vec![2, 3],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub config_hash: String,
    pub rng_seed: u64,
    pub inputs: BTreeMap<String, String>,
    pub stages: Vec<StageTiming>,
    /// sha256 of every output, keyed by path relative to the output directory.
    pub outputs: BTreeMap<String, String>,
}

pub const MANIFEST: &str = "manifest.json";

struct Run {
    dir: PathBuf,
    outputs: BTreeMap<String, String>,
    stages: Vec<StageTiming>,
    clock: Instant,
}

impl Run {
    fn emit(&mut self, name: &str, bytes: &[u8]) -> CliResult<()> {
        write_atomic(&self.dir.join(name), bytes)?;
        self.outputs.insert(name.to_string(), sha256_hex(bytes));
        Ok(())
    }

    fn lap(&mut self, stage: &str) {
        let now = Instant::now();
        self.stages.push(StageTiming {
            stage: stage.to_string(),
            seconds: (now - self.clock).as_secs_f64(),
        });
        self.clock = now;
    }
}

pub fn run(args: &PipelineArgs) -> CliResult<()> {
    let mut inputs = BTreeMap::new();
    let config: PipelineConfig = match &args.config {
        Some(path) => {
            let bytes = read_bytes(path)?;
            inputs.insert(path.display().to_string(), sha256_hex(&bytes));
            serde_json::from_slice(&bytes)
                .map_err(|e| Failure::input(format!("{}: invalid config: {e}", path.display())))?
        }
        None => PipelineConfig::default(),
    };
    let origin = args
        .config
        .clone()
        .unwrap_or_else(|| PathBuf::from("<default config>"));
    config
        .generator
        .validate()
        .map_err(|e| Failure::at(&origin, e))?;
    let resolved = json_bytes(&config)?;
    let config_hash = sha256_hex(&resolved);

    let mut run = Run {
        dir: args.out_dir.clone(),
        outputs: BTreeMap::new(),
        stages: Vec::new(),
        clock: Instant::now(),
    };
    run.emit("config.json", &resolved)?;

    let (_, tiers, files) = render_generated(&config.generator)?;
    run.emit("trace.log", &files.trace)?;
    run.emit("ledger.json", &files.ledger)?;
    run.emit("relationships.csv", &files.relationships)?;
    run.lap("generate");

    // Downstream stages read the trace back from its serialized form.
    let trace = parse_event_log(files.trace.as_slice(), true)?.trace;
    run.emit("summary.json", &json_bytes(&summarize(&trace.events))?)?;
    run.lap("ingest");

    let graph = EncounterGraph::build(&trace.events);
    let partition = compute_groups(&graph);
    let (groups_json, sizes_csv) = render_groups(&partition)?;
    run.emit("groups.json", &groups_json)?;
    run.emit("group_sizes.csv", &sizes_csv)?;
    run.lap("groups");

    run.emit(
        "metrics.csv",
        &render_metrics(&group_metrics(&graph, &partition)?)?,
    )?;
    run.lap("metrics");

    run.emit(
        "fit.json",
        &render_fit(&group_size_histogram(&partition), config.fit_xmin)?,
    )?;
    run.lap("fit");

    let redundancy = render_redundancy(&redundancy_timeseries(
        &trace.events,
        config.redundancy_window,
    )?)?;
    run.emit("redundancy.csv", &redundancy)?;
    run.lap("redundancy");

    let coverage_config = config.coverage.to_config();
    let seeds = compute_seeds(&trace, &tiers, &coverage_config, SPLIT_FRACTION)?;
    run.emit("seeds.json", &json_bytes(&seeds)?)?;
    run.lap("seed");

    let study = evaluate_coverage(&trace.events, &partition, &tiers, &coverage_config)?;
    let (coverage_csv, coverage_json) = render_coverage(&study)?;
    run.emit("coverage.csv", &coverage_csv)?;
    run.emit("coverage_summary.json", &coverage_json)?;
    run.lap("propagate");

    let (train_set, test_set) = build_dataset(&trace, &tiers, &config.dataset)?;
    run.emit("pairs_train.csv", &render_pairs(&train_set)?)?;
    run.emit("pairs_test.csv", &render_pairs(&test_set)?)?;
    run.lap("dataset");

    let prediction = compute_prediction(&train_set, &test_set, &config.model, &config.sweep_sizes)?;
    run.emit("predict.json", &json_bytes(&prediction)?)?;
    run.lap("predict");

    let tables = render_report(
        (&redundancy, Path::new("redundancy.csv")),
        (&sizes_csv, Path::new("group_sizes.csv")),
        (&coverage_csv, Path::new("coverage.csv")),
    )?;
    for (name, bytes) in tables {
        run.emit(&format!("report/{name}"), &bytes)?;
    }
    run.lap("report");

    let manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash,
        rng_seed: config.generator.rng_seed,
        inputs,
        stages: run.stages.clone(),
        outputs: run.outputs.clone(),
    };
    write_atomic(&run.dir.join(MANIFEST), &json_bytes(&manifest)?)?;
    eprintln!(
        "pipeline wrote {} outputs to {}",
        run.outputs.len() + 1,
        run.dir.display()
    );
    Ok(())
}

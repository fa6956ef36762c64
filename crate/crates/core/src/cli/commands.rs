//! Verb implementations for the `l2p` binary.
//!
//! Each verb reads an experiment config, applies `--seed`, and writes its
//! outputs plus `manifest.json` into a run directory. Failures leave an
//! `error.json` record behind.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::ExperimentConfig;
use super::io::{self, Artifact, Dataset, InstanceSet, IoError, Report};
use super::pipeline::{self, derive_seed, generate_instances, Mode, PipelineError};
use super::report::{report_emit, ReportError, ReportFormat};
use crate::bnb::{export_trace, run_bnb, BnbConfig, PruningPolicy};
use crate::imitate::{label_trace, SelfImitationOutcome};
use crate::mlp::{MlpParams, TrainReport};
use crate::relax::SolveCache;

#[derive(Debug, Parser)]
#[command(
    name = "l2p",
    version,
    about = "Learned pruning for branch-and-bound with self-imitation transfer"
)]
pub struct Cli {
    #[command(subcommand)]
    pub verb: Verb,
}

#[derive(Debug, Args, Clone)]
pub struct Common {
    /// Experiment config (TOML).
    pub config: PathBuf,
    #[arg(long)]
    pub seed: u64,
    /// Output directory; defaults to `<output_dir>/<name>-<verb>-s<seed>`.
    #[arg(long)]
    pub run_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Scratch,
    Dynamic,
    Different,
    Sweep,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Scratch => Mode::Scratch,
            ModeArg::Dynamic => Mode::TransferDynamicMUs,
            ModeArg::Different => Mode::TransferDifferentNetworks,
            ModeArg::Sweep => Mode::SampleSweep,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Verb {
    /// Generate every instance set of the experiment.
    Gen {
        #[command(flatten)]
        common: Common,
    },
    /// Label instances with the exact search.
    Label {
        #[command(flatten)]
        common: Common,
        /// Instance set; defaults to the original task of the first SINR column.
        #[arg(long)]
        instances: Option<PathBuf>,
    },
    /// Train a classifier from scratch on a labeled dataset.
    Train {
        #[command(flatten)]
        common: Common,
        /// Dataset; defaults to labeling the original task.
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Adapt a pretrained classifier to unlabeled target instances.
    Transfer {
        #[command(flatten)]
        common: Common,
        /// Pretrained model; defaults to training one on the original task.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Unlabeled target instances; defaults to the additional set.
        #[arg(long)]
        instances: Option<PathBuf>,
    },
    /// Compare a model against the exact search on test instances.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
        /// Test instances; defaults to the target test set.
        #[arg(long)]
        instances: Option<PathBuf>,
    },
    /// Run a full experiment and emit its report.
    Report {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "dynamic")]
        mode: ModeArg,
    },
    /// Run the additional-sample sweep and emit its report.
    Sweep {
        #[command(flatten)]
        common: Common,
    },
}

impl Verb {
    pub fn name(&self) -> &'static str {
        match self {
            Verb::Gen { .. } => "gen",
            Verb::Label { .. } => "label",
            Verb::Train { .. } => "train",
            Verb::Transfer { .. } => "transfer",
            Verb::Eval { .. } => "eval",
            Verb::Report { .. } => "report",
            Verb::Sweep { .. } => "sweep",
        }
    }

    pub fn common(&self) -> &Common {
        match self {
            Verb::Gen { common }
            | Verb::Label { common, .. }
            | Verb::Train { common, .. }
            | Verb::Transfer { common, .. }
            | Verb::Eval { common, .. }
            | Verb::Report { common, .. }
            | Verb::Sweep { common } => common,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Report(#[from] ReportError),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Pipeline(PipelineError::Config(_)) => "ConfigError",
            CliError::Pipeline(_) => "PipelineError",
            CliError::Io(IoError::ParseError { .. }) => "ParseError",
            CliError::Io(IoError::VersionError { .. }) => "VersionError",
            CliError::Io(_) => "IoError",
            CliError::Report(ReportError::EmptyReport) => "EmptyReportError",
            CliError::Report(_) => "ReportError",
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Pipeline(PipelineError::Config(_)) => 2,
            CliError::Io(_) => 3,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputFile {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub verb: String,
    pub seed: u64,
    pub config_path: String,
    pub config: ExperimentConfig,
    pub package_version: String,
    pub elapsed_seconds: f64,
    pub outputs: Vec<OutputFile>,
}

impl Artifact for Manifest {
    const SCHEMA: &'static str = "l2p.manifest";
    const VERSION: u32 = 1;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub verb: String,
    pub kind: String,
    pub message: String,
    pub exit_code: u8,
}

impl Artifact for ErrorRecord {
    const SCHEMA: &'static str = "l2p.error";
    const VERSION: u32 = 1;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutput {
    pub report: TrainReport,
    pub samples: usize,
    pub seconds: f64,
}

impl Artifact for TrainOutput {
    const SCHEMA: &'static str = "l2p.train";
    const VERSION: u32 = 1;
}

impl Artifact for SelfImitationOutcome {
    const SCHEMA: &'static str = "l2p.self-imitation";
    const VERSION: u32 = 1;
}

impl Artifact for pipeline::EvalSummary {
    const SCHEMA: &'static str = "l2p.eval";
    const VERSION: u32 = 1;
}

/// Collects the files a verb writes so the manifest can list them.
struct RunDir {
    root: PathBuf,
    outputs: Vec<PathBuf>,
}

impl RunDir {
    fn create(root: PathBuf) -> Result<Self, IoError> {
        std::fs::create_dir_all(&root)?;
        Ok(RunDir {
            root,
            outputs: Vec::new(),
        })
    }

    fn save<A: Artifact>(&mut self, name: &str, value: &A) -> Result<(), IoError> {
        let path = self.root.join(name);
        io::save(&path, value)?;
        self.outputs.push(path);
        Ok(())
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), IoError> {
        let path = self.root.join(name);
        io::write_atomic(&path, bytes)?;
        self.outputs.push(path);
        Ok(())
    }

    fn manifest(&self, verb: &str, common: &Common, cfg: &ExperimentConfig, elapsed: f64) -> Result<(), IoError> {
        let mut outputs = Vec::new();
        for p in &self.outputs {
            let bytes = std::fs::read(p)?;
            outputs.push(OutputFile {
                path: p.strip_prefix(&self.root).unwrap_or(p).display().to_string(),
                bytes: bytes.len() as u64,
                sha256: Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect(),
            });
        }
        let m = Manifest {
            verb: verb.to_string(),
            seed: common.seed,
            config_path: common.config.display().to_string(),
            config: cfg.clone(),
            package_version: env!("CARGO_PKG_VERSION").to_string(),
            elapsed_seconds: elapsed,
            outputs,
        };
        io::save(&self.root.join("manifest.json"), &m)
    }
}

/// Run directory a verb will use, without creating it. Unknown when the
/// config could not be read and no `--run-dir` was given.
pub fn run_dir_for(verb: &Verb, cfg: Option<&ExperimentConfig>) -> Option<PathBuf> {
    let c = verb.common();
    c.run_dir
        .clone()
        .or_else(|| cfg.map(|cfg| cfg.output_dir.join(format!("{}-{}-s{}", cfg.name, verb.name(), c.seed))))
}

fn load_config(common: &Common) -> Result<ExperimentConfig, CliError> {
    let mut cfg = ExperimentConfig::load(&common.config).map_err(PipelineError::from)?;
    cfg.seed = common.seed;
    Ok(cfg)
}

fn original_task(cfg: &ExperimentConfig) -> Result<Vec<crate::model::MinlpInstance>, CliError> {
    Ok(generate_instances(
        cfg.seed,
        &cfg.source_dynamic,
        cfg.sinr_db[0],
        cfg.sizes.original,
        "source-dynamic/0",
    )?)
}

fn instances_or(
    path: &Option<PathBuf>,
    default: impl FnOnce() -> Result<Vec<crate::model::MinlpInstance>, CliError>,
) -> Result<Vec<crate::model::MinlpInstance>, CliError> {
    match path {
        Some(p) => Ok(io::load::<InstanceSet>(p)?.instances),
        None => default(),
    }
}

fn execute(verb: &Verb, cfg: &ExperimentConfig, run: &mut RunDir) -> Result<(), CliError> {
    let seed = cfg.seed;
    let search = cfg.self_imitation(seed).search();
    match verb {
        Verb::Gen { .. } => {
            for (col, &sinr) in cfg.sinr_db.iter().enumerate() {
                let sets = [
                    ("source-dynamic", &cfg.source_dynamic, cfg.sizes.original),
                    ("source-different", &cfg.source_different, cfg.sizes.original),
                    ("target-original", &cfg.target, cfg.sizes.original),
                    ("target-additional", &cfg.target, cfg.sizes.additional),
                    ("target-test", &cfg.target, cfg.sizes.test),
                ];
                for (role, spec, n) in sets {
                    let stream = format!("{role}/{col}");
                    let instances = generate_instances(seed, spec, sinr, n, &stream)?;
                    let set = InstanceSet {
                        role: stream,
                        instances,
                    };
                    run.save(&format!("instances-{role}-{col}.json"), &set)?;
                }
            }
        }
        Verb::Label { instances, .. } => {
            let insts = instances_or(instances, || original_task(cfg))?;
            let cache = SolveCache::new();
            let exact = BnbConfig {
                record_features: true,
                ..search.clone()
            };
            let mut samples = Vec::new();
            let mut traces = Vec::new();
            for inst in &insts {
                let trace = run_bnb(inst, &PruningPolicy::ExactOracle, &cache, &exact).map_err(PipelineError::from)?;
                if trace.no_incumbent() {
                    log::warn!("{} has no feasible solution; skipped", inst.id());
                } else {
                    samples.extend(label_trace(&trace, 0).map_err(PipelineError::from)?);
                }
                export_trace(&trace, &mut traces).map_err(IoError::from)?;
            }
            let data = Dataset::new(samples);
            let (keep, prune) = data.label_counts();
            log::info!("labeled {} nodes: {keep} preserve, {prune} prune", data.samples.len());
            run.save("dataset.json", &data)?;
            run.write("traces.jsonl", &traces)?;
        }
        Verb::Train { dataset, .. } => {
            let data = match dataset {
                Some(p) => io::load::<Dataset>(p)?.samples,
                None => {
                    let insts = original_task(cfg)?;
                    crate::imitate::generate_labeled_dataset(&insts, &SolveCache::new(), cfg.node_budget)
                        .map_err(PipelineError::from)?
                }
            };
            let (params, report, seconds) = pipeline::fit(cfg, &data, derive_seed(seed, "train-init", 0))?;
            run.save("model.json", &params)?;
            run.save(
                "train.json",
                &TrainOutput {
                    report,
                    samples: data.len(),
                    seconds,
                },
            )?;
        }
        Verb::Transfer { model, instances, .. } => {
            let pretrained = match model {
                Some(p) => io::load::<MlpParams>(p)?,
                None => {
                    pipeline::train_from_scratch(cfg, &original_task(cfg)?, derive_seed(seed, "pretrain-init", 0))?
                        .params
                }
            };
            let unlabeled = instances_or(instances, || {
                Ok(generate_instances(
                    seed,
                    &cfg.target,
                    cfg.sinr_db[0],
                    cfg.sizes.additional,
                    "target-additional/0",
                )?)
            })?;
            let (outcome, secs) =
                pipeline::transfer(cfg, &pretrained, &unlabeled, derive_seed(seed, "self-imitation", 0))?;
            log::info!("self-imitation took {secs:.1} s");
            run.save("model.json", &outcome.params)?;
            run.save("self_imitation.json", &outcome)?;
        }
        Verb::Eval { model, instances, .. } => {
            let params = io::load::<MlpParams>(model)?;
            let test = instances_or(instances, || {
                Ok(generate_instances(
                    seed,
                    &cfg.target,
                    cfg.sinr_db[0],
                    cfg.sizes.test,
                    "target-test/0",
                )?)
            })?;
            let baseline = pipeline::exact_baseline(&test, cfg.node_budget)?;
            let summary = pipeline::evaluate(&params, cfg.policy_threshold, &test, &baseline, &search)?;
            println!(
                "gap {:.3}%  node speedup {:.2}x  wall-clock speedup {:.2}x  fallbacks {}",
                summary.gap_percent, summary.speedup_nodes, summary.speedup_wallclock, summary.fallbacks
            );
            run.save("eval.json", &summary)?;
        }
        Verb::Report { mode, .. } => emit_report(cfg, (*mode).into(), run)?,
        Verb::Sweep { .. } => emit_report(cfg, Mode::SampleSweep, run)?,
    }
    Ok(())
}

fn emit_report(cfg: &ExperimentConfig, mode: Mode, run: &mut RunDir) -> Result<(), CliError> {
    let rows = pipeline::run_pipeline(cfg, mode)?;
    let table = report_emit(&rows, ReportFormat::Table)?;
    let csv = report_emit(&rows, ReportFormat::Delimited)?;
    print!("{table}");
    run.save("report.json", &Report { rows })?;
    run.write("report.csv", csv.as_bytes())?;
    run.write("report.txt", table.as_bytes())?;
    Ok(())
}

/// Runs one verb end to end and returns the process exit code.
pub fn run(cli: &Cli) -> u8 {
    let started = Instant::now();
    let verb = &cli.verb;
    let common = verb.common();
    let cfg = load_config(common);
    let dir = run_dir_for(verb, cfg.as_ref().ok());
    let result = cfg.and_then(|cfg| {
        let dir = dir.clone().expect("a loaded config names a run directory");
        let mut run = RunDir::create(dir)?;
        execute(verb, &cfg, &mut run)?;
        run.manifest(verb.name(), common, &cfg, started.elapsed().as_secs_f64())?;
        Ok(())
    });
    match result {
        Ok(()) => {
            if let Some(d) = &dir {
                log::info!("{} finished; outputs in {}", verb.name(), d.display());
            }
            0
        }
        Err(e) => {
            let record = ErrorRecord {
                verb: verb.name().to_string(),
                kind: e.kind().to_string(),
                message: e.to_string(),
                exit_code: e.exit_code(),
            };
            if let Some(d) = &dir {
                write_error(d, &record);
            }
            eprintln!("{}", serde_json::to_string(&record).expect("error record serializes"));
            record.exit_code
        }
    }
}

fn write_error(dir: &Path, record: &ErrorRecord) {
    if let Err(e) = std::fs::create_dir_all(dir)
        .map_err(IoError::from)
        .and_then(|_| io::save(&dir.join("error.json"), record))
    {
        log::warn!("could not write error record to {}: {e}", dir.display());
    }
}

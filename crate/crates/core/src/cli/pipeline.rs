//! End-to-end experiments: instance generation, exact labeling, training
//! from scratch, self-imitation transfer and evaluation against the exact
//! search.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::config::{ConfigError, ExperimentConfig, NetworkSpec};
use super::report::ReportRow;
use crate::bnb::{run_bnb, BnbConfig, BnbError, PruningPolicy};
use crate::imitate::{
    generate_labeled_dataset, relative_gap, self_imitation, ImitateError, LabeledSample, SelfImitationOutcome,
};
use crate::mlp::{compute_class_weights, train, MlpError, MlpParams, TrainReport};
use crate::model::{MinlpInstance, ModelError};
use crate::relax::{build_relaxation, solve_relaxation, Fixings, RelaxError, RelaxStatus, SolveCache};

/// Generation attempts allowed per requested instance before giving up.
const ATTEMPTS_PER_INSTANCE: usize = 5;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Relax(#[from] RelaxError),
    #[error(transparent)]
    Bnb(#[from] BnbError),
    #[error(transparent)]
    Imitate(#[from] ImitateError),
    #[error(transparent)]
    Mlp(#[from] MlpError),
    #[error("exact search found no solution for {0}")]
    NoOptimum(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Scratch,
    TransferDynamicMUs,
    TransferDifferentNetworks,
    SampleSweep,
}

impl Mode {
    pub const ALL: [Mode; 4] = [
        Mode::Scratch,
        Mode::TransferDynamicMUs,
        Mode::TransferDifferentNetworks,
        Mode::SampleSweep,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Mode::Scratch => "scratch",
            Mode::TransferDynamicMUs => "transfer-dynamic-mus",
            Mode::TransferDifferentNetworks => "transfer-different-networks",
            Mode::SampleSweep => "transfer-sweep",
        }
    }
}

/// Seed of the `index`-th item of a named stream under `master`.
pub fn derive_seed(master: u64, stream: &str, index: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update(stream.as_bytes());
    h.update(index.to_le_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}

/// Draws `count` instances of `spec` at `sinr_db`. Draws whose relaxation
/// with every RRH active is infeasible cannot meet the SINR targets and are
/// replaced; if too many draws fail the configuration is rejected.
pub fn generate_instances(
    master_seed: u64,
    spec: &NetworkSpec,
    sinr_db: f64,
    count: usize,
    stream: &str,
) -> Result<Vec<MinlpInstance>, PipelineError> {
    let mut out = Vec::with_capacity(count);
    let max_attempts = count * ATTEMPTS_PER_INSTANCE;
    let mut rejected = 0;
    for j in 0..max_attempts as u64 {
        if out.len() == count {
            break;
        }
        let seed = derive_seed(master_seed, stream, j);
        let (_, inst) = spec.generator(sinr_db, seed).generate(seed)?;
        let root = solve_relaxation(&build_relaxation(&inst, &Fixings::new())?)?;
        if root.status == RelaxStatus::Infeasible {
            log::warn!("{stream}: draw {j} cannot reach {sinr_db} dB; redrawing");
            rejected += 1;
            continue;
        }
        out.push(inst);
    }
    if out.len() < count {
        return Err(ConfigError::Infeasible(format!(
            "{stream}: {rejected} of {} draws of L={} K={} N={} cannot reach the {sinr_db} dB SINR target \
             within the per-RRH power cap; lower the target or add RRHs or antennas",
            rejected + out.len(),
            spec.rrhs,
            spec.users,
            spec.antennas
        ))
        .into());
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct Trained {
    pub params: MlpParams,
    pub dataset: Vec<LabeledSample>,
    pub report: TrainReport,
    pub label_seconds: f64,
    pub train_seconds: f64,
}

impl Trained {
    pub fn total_seconds(&self) -> f64 {
        self.label_seconds + self.train_seconds
    }
}

/// Labels `instances` with the exact search and trains a fresh network.
pub fn train_from_scratch(
    cfg: &ExperimentConfig,
    instances: &[MinlpInstance],
    seed: u64,
) -> Result<Trained, PipelineError> {
    let t0 = Instant::now();
    let dataset = generate_labeled_dataset(instances, &SolveCache::new(), cfg.node_budget)?;
    let label_seconds = t0.elapsed().as_secs_f64();
    let (params, report, train_seconds) = fit(cfg, &dataset, seed)?;
    Ok(Trained {
        params,
        dataset,
        report,
        label_seconds,
        train_seconds,
    })
}

/// Trains a freshly initialized network on an existing dataset.
pub fn fit(
    cfg: &ExperimentConfig,
    dataset: &[LabeledSample],
    seed: u64,
) -> Result<(MlpParams, TrainReport, f64), PipelineError> {
    let t0 = Instant::now();
    let weights = compute_class_weights(dataset, cfg.train.class_weight_w2)?;
    let init = MlpParams::glorot(&cfg.layer_dims(), seed)?;
    let (params, report) = train(&init, dataset, &weights, &cfg.scratch_train(seed))?;
    log::info!(
        "trained on {} samples: loss {:.4} → {:.4}",
        dataset.len(),
        report.initial_loss,
        report.final_loss
    );
    Ok((params, report, t0.elapsed().as_secs_f64()))
}

/// Self-imitation from `pretrained` on unlabeled `additional` instances.
pub fn transfer(
    cfg: &ExperimentConfig,
    pretrained: &MlpParams,
    additional: &[MinlpInstance],
    seed: u64,
) -> Result<(SelfImitationOutcome, f64), PipelineError> {
    let t0 = Instant::now();
    let outcome = self_imitation(pretrained, additional, &cfg.self_imitation(seed), &SolveCache::new())?;
    Ok((outcome, t0.elapsed().as_secs_f64()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactRun {
    pub instance_id: String,
    pub optimum: f64,
    pub nodes: usize,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceEval {
    pub instance_id: String,
    pub optimum: f64,
    pub found: f64,
    pub gap_percent: f64,
    pub exact_nodes: usize,
    pub policy_nodes: usize,
    pub exact_seconds: f64,
    pub policy_seconds: f64,
    pub fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub per_instance: Vec<InstanceEval>,
    pub gap_percent: f64,
    pub speedup_nodes: f64,
    pub speedup_wallclock: f64,
    pub exact_nodes_mean: f64,
    pub policy_nodes_mean: f64,
    pub fallbacks: usize,
}

/// Maps `f` over `items` on all available cores, keeping input order.
fn par_map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let workers = std::thread::available_parallelism()
        .map_or(1, |n| n.get())
        .min(items.len().max(1));
    if workers <= 1 {
        return items.iter().map(f).collect();
    }
    let chunk = items.len().div_ceil(workers);
    std::thread::scope(|s| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .map(|part| {
                let f = &f;
                s.spawn(move || part.iter().map(f).collect::<Vec<R>>())
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("evaluation worker panicked"))
            .collect()
    })
}

fn exact_run(inst: &MinlpInstance, budget: usize) -> Result<ExactRun, PipelineError> {
    let cfg = BnbConfig {
        node_budget: budget,
        ..Default::default()
    };
    let t0 = Instant::now();
    let trace = run_bnb(inst, &PruningPolicy::ExactOracle, &SolveCache::new(), &cfg)?;
    let seconds = t0.elapsed().as_secs_f64();
    let optimum = trace
        .best_objective
        .ok_or_else(|| PipelineError::NoOptimum(inst.id().to_string()))?;
    Ok(ExactRun {
        instance_id: inst.id().to_string(),
        optimum,
        nodes: trace.node_count,
        seconds,
    })
}

/// Exact search on every test instance.
pub fn exact_baseline(test: &[MinlpInstance], budget: usize) -> Result<Vec<ExactRun>, PipelineError> {
    par_map(test, |inst| exact_run(inst, budget)).into_iter().collect()
}

/// Runs the learned policy on each test instance and compares it with the
/// exact baseline. When the policy prunes every feasible leaf the exact
/// search is rerun: its nodes and time are added to the policy's and the
/// instance scores the exact optimum.
pub fn evaluate(
    params: &MlpParams,
    threshold: f64,
    test: &[MinlpInstance],
    baseline: &[ExactRun],
    search: &BnbConfig,
) -> Result<EvalSummary, PipelineError> {
    assert_eq!(test.len(), baseline.len(), "one baseline run per test instance");
    let policy = PruningPolicy::learned(std::sync::Arc::new(params.clone()), threshold)?;
    let cfg = search;
    let pairs: Vec<(&MinlpInstance, &ExactRun)> = test.iter().zip(baseline).collect();
    let per_instance = par_map(&pairs, |(inst, exact)| -> Result<InstanceEval, PipelineError> {
        let t0 = Instant::now();
        let trace = run_bnb(inst, &policy, &SolveCache::new(), cfg)?;
        let mut policy_seconds = t0.elapsed().as_secs_f64();
        let mut policy_nodes = trace.node_count;
        let (found, fallback) = match trace.best_objective {
            Some(v) => (v, false),
            None => {
                log::warn!("{}: policy found no solution; rerunning the exact search", inst.id());
                policy_nodes += exact.nodes;
                policy_seconds += exact.seconds;
                (exact.optimum, true)
            }
        };
        Ok(InstanceEval {
            instance_id: inst.id().to_string(),
            optimum: exact.optimum,
            found,
            gap_percent: 100.0 * relative_gap(inst.sense, found, exact.optimum),
            exact_nodes: exact.nodes,
            policy_nodes,
            exact_seconds: exact.seconds,
            policy_seconds,
            fallback,
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;

    let n = per_instance.len().max(1) as f64;
    let mean = |f: &dyn Fn(&InstanceEval) -> f64| per_instance.iter().map(f).sum::<f64>() / n;
    Ok(EvalSummary {
        gap_percent: mean(&|e| e.gap_percent),
        speedup_nodes: mean(&|e| e.exact_nodes as f64 / e.policy_nodes as f64),
        speedup_wallclock: mean(&|e| e.exact_seconds / e.policy_seconds.max(1e-9)),
        exact_nodes_mean: mean(&|e| e.exact_nodes as f64),
        policy_nodes_mean: mean(&|e| e.policy_nodes as f64),
        fallbacks: per_instance.iter().filter(|e| e.fallback).count(),
        per_instance,
    })
}

fn row(
    setting: &str,
    sinr: f64,
    samples: Option<usize>,
    eval: &EvalSummary,
    train_seconds: f64,
    train_speedup: Option<f64>,
    seed: u64,
) -> ReportRow {
    ReportRow {
        setting: setting.to_string(),
        target_sinr_db: sinr,
        additional_samples: samples,
        instances: eval.per_instance.len(),
        gap_percent: eval.gap_percent,
        speedup_nodes: eval.speedup_nodes,
        speedup_wallclock: eval.speedup_wallclock,
        train_speedup,
        exact_nodes_mean: eval.exact_nodes_mean,
        policy_nodes_mean: eval.policy_nodes_mean,
        fallbacks: eval.fallbacks,
        train_seconds,
        seed,
    }
}

/// Stream names for one SINR column.
struct Streams {
    test: String,
    target_original: String,
    additional: String,
    source: String,
}

impl Streams {
    fn new(column: usize, source: &str) -> Self {
        Streams {
            test: format!("target-test/{column}"),
            target_original: format!("target-original/{column}"),
            additional: format!("target-additional/{column}"),
            source: format!("{source}/{column}"),
        }
    }
}

pub fn run_pipeline(cfg: &ExperimentConfig, mode: Mode) -> Result<Vec<ReportRow>, PipelineError> {
    cfg.validate()?;
    let seed = cfg.seed;
    let search = cfg.self_imitation(seed).search();
    let (source_spec, source_stream) = match mode {
        Mode::TransferDifferentNetworks => (&cfg.source_different, "source-different"),
        _ => (&cfg.source_dynamic, "source-dynamic"),
    };
    let mut rows = Vec::new();
    for (column, &sinr) in cfg.sinr_db.iter().enumerate() {
        let streams = Streams::new(column, source_stream);
        log::info!("{}: SINR {sinr} dB", mode.label());
        let test = generate_instances(seed, &cfg.target, sinr, cfg.sizes.test, &streams.test)?;
        let baseline = exact_baseline(&test, cfg.node_budget)?;

        let target_original =
            generate_instances(seed, &cfg.target, sinr, cfg.sizes.original, &streams.target_original)?;
        let scratch = train_from_scratch(cfg, &target_original, derive_seed(seed, "scratch-init", column as u64))?;
        let scratch_eval = evaluate(&scratch.params, cfg.policy_threshold, &test, &baseline, &search)?;
        let scratch_time = scratch.total_seconds();
        rows.push(row("scratch", sinr, None, &scratch_eval, scratch_time, Some(1.0), seed));
        if mode == Mode::Scratch {
            continue;
        }

        let source = generate_instances(seed, source_spec, sinr, cfg.sizes.original, &streams.source)?;
        let pretrained = train_from_scratch(cfg, &source, derive_seed(seed, "pretrain-init", column as u64))?;
        let counts = match mode {
            Mode::SampleSweep => cfg.sweep_counts.clone(),
            _ => vec![cfg.sizes.additional],
        };
        let pool_size = *counts.iter().max().expect("counts are nonempty");
        let pool = generate_instances(seed, &cfg.target, sinr, pool_size, &streams.additional)?;
        for &n in &counts {
            let si_seed = derive_seed(seed, "self-imitation", column as u64);
            let (outcome, secs) = transfer(cfg, &pretrained.params, &pool[..n], si_seed)?;
            let eval = evaluate(&outcome.params, cfg.policy_threshold, &test, &baseline, &search)?;
            let samples = (mode == Mode::SampleSweep).then_some(n);
            rows.push(row(
                mode.label(),
                sinr,
                samples,
                &eval,
                secs,
                Some(scratch_time / secs.max(1e-9)),
                seed,
            ));
        }
    }
    Ok(rows)
}

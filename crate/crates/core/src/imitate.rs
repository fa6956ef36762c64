//! Supervision for the pruning classifier: exact labels from full searches,
//! and self-imitation, where the best solution a blended policy finds on an
//! unlabeled instance becomes that instance's label source.

use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bnb::{
    blend_policy, mark_optimal_path, run_bnb, BnbConfig, BnbError, BnbTrace, PruningPolicy, DEFAULT_NODE_BUDGET,
};
use crate::mlp::{check_feature_version, compute_class_weights, train, MlpError, MlpParams, TrainConfig, DEFAULT_W2};
use crate::model::{MinlpInstance, Sense};
use crate::relax::SolveCache;

pub use crate::bnb::Label;

#[derive(Debug, Error)]
pub enum ImitateError {
    #[error(transparent)]
    Bnb(#[from] BnbError),
    #[error(transparent)]
    Mlp(#[from] MlpError),
    #[error("no instances given")]
    NoInstances,
    #[error("episode on {0} found no incumbent")]
    NoIncumbent(String),
    #[error("invalid configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub feature: Vec<f64>,
    pub label: Label,
    pub instance_id: String,
    pub node_id: usize,
    /// Self-imitation iteration that produced the sample; 0 for exact labels.
    pub iteration: usize,
}

/// Labels every featurized node of a finished search: the chain from the
/// best node to the root is preserved, the rest pruned.
pub fn label_trace(trace: &BnbTrace, iteration: usize) -> Result<Vec<LabeledSample>, BnbError> {
    let labels = mark_optimal_path(trace)?;
    Ok(trace
        .visited
        .iter()
        .filter_map(|n| {
            n.feature.as_ref().map(|f| LabeledSample {
                feature: f.clone(),
                label: labels[&n.id],
                instance_id: trace.instance_id.clone(),
                node_id: n.id,
                iteration,
            })
        })
        .collect())
}

/// Exact search on each instance followed by optimal-path labeling.
/// Instances without an incumbent are skipped with a warning.
pub fn generate_labeled_dataset(
    instances: &[MinlpInstance],
    cache: &SolveCache,
    node_budget: usize,
) -> Result<Vec<LabeledSample>, ImitateError> {
    if instances.is_empty() {
        return Err(ImitateError::NoInstances);
    }
    let cfg = BnbConfig {
        node_budget,
        record_features: true,
        ..Default::default()
    };
    let mut out = Vec::new();
    for inst in instances {
        let trace = run_bnb(inst, &PruningPolicy::ExactOracle, cache, &cfg)?;
        if trace.no_incumbent() {
            log::warn!("instance {} has no feasible solution; skipped", inst.id());
            continue;
        }
        out.extend(label_trace(&trace, 0)?);
    }
    Ok(out)
}

/// One self-labeled episode under `policy`.
pub fn collect(
    policy: &PruningPolicy,
    instance: &MinlpInstance,
    cache: &SolveCache,
    search: &BnbConfig,
    iteration: usize,
) -> Result<Vec<LabeledSample>, ImitateError> {
    let cfg = BnbConfig {
        record_features: true,
        ..search.clone()
    };
    let trace = run_bnb(instance, policy, cache, &cfg)?;
    if trace.no_incumbent() {
        return Err(ImitateError::NoIncumbent(instance.id().to_string()));
    }
    Ok(label_trace(&trace, iteration)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelfImitationConfig {
    pub iterations: usize,
    /// `α^(k) = min(1, alpha_step · k)`.
    pub alpha_step: f64,
    pub explore_threshold: f64,
    /// Threshold at which the current classifier is deployed and validated.
    pub policy_threshold: f64,
    pub node_budget: usize,
    pub validation_fraction: f64,
    pub seed: u64,
    pub class_weight_w2: [f64; 2],
    pub fine_tune: TrainConfig,
    /// Keep the policy silent until a search has an incumbent.
    #[serde(default)]
    pub policy_after_incumbent: bool,
}

impl SelfImitationConfig {
    pub fn new(num_layers: usize, seed: u64) -> Self {
        SelfImitationConfig {
            iterations: 10,
            alpha_step: 0.2,
            explore_threshold: 0.9,
            policy_threshold: 0.5,
            node_budget: DEFAULT_NODE_BUDGET,
            validation_fraction: 0.2,
            seed,
            class_weight_w2: DEFAULT_W2,
            fine_tune: TrainConfig::fine_tune(num_layers, seed),
            policy_after_incumbent: false,
        }
    }

    pub fn search(&self) -> BnbConfig {
        BnbConfig {
            node_budget: self.node_budget,
            policy_after_incumbent: self.policy_after_incumbent,
            ..Default::default()
        }
    }

    pub fn alpha(&self, k: usize) -> f64 {
        (self.alpha_step * k as f64).min(1.0)
    }

    pub fn validate(&self) -> Result<(), ImitateError> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if self.iterations == 0 {
            return Err(ImitateError::Config("iterations must be ≥ 1".into()));
        }
        if !(self.alpha_step >= 0.0) || !(1..=self.iterations).all(|k| unit(self.alpha(k))) {
            return Err(ImitateError::Config("blend ratios must lie in [0, 1]".into()));
        }
        if !unit(self.explore_threshold) || !unit(self.policy_threshold) || !unit(self.validation_fraction) {
            return Err(ImitateError::Config(
                "thresholds and validation fraction must lie in [0, 1]".into(),
            ));
        }
        if self.node_budget == 0 {
            return Err(ImitateError::Config("node_budget must be ≥ 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub alpha: f64,
    pub episodes: usize,
    pub discarded: usize,
    pub dataset_size: usize,
    /// Validation score of the policy that drove this iteration.
    pub validation_gap: f64,
    pub validation_speedup: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelfImitationOutcome {
    pub params: MlpParams,
    /// Index k of the returned policy π^(k); 1 is the pretrained model.
    pub best_iteration: usize,
    pub best_validation_gap: f64,
    pub history: Vec<IterationRecord>,
    pub dataset: Vec<LabeledSample>,
    /// Set when an iteration lost every episode and the loop stopped early.
    pub starved_at: Option<usize>,
    pub validation_ids: Vec<String>,
}

/// Exact optimum and node count of every validation instance.
struct Validation<'a> {
    instances: Vec<&'a MinlpInstance>,
    optima: Vec<Option<f64>>,
    exact_nodes: Vec<usize>,
}

impl<'a> Validation<'a> {
    fn new(instances: Vec<&'a MinlpInstance>, cache: &SolveCache, node_budget: usize) -> Result<Self, ImitateError> {
        let cfg = BnbConfig {
            node_budget,
            ..Default::default()
        };
        let mut optima = Vec::new();
        let mut exact_nodes = Vec::new();
        for inst in &instances {
            let t = run_bnb(inst, &PruningPolicy::ExactOracle, cache, &cfg)?;
            optima.push(t.best_objective);
            exact_nodes.push(t.node_count);
        }
        Ok(Validation {
            instances,
            optima,
            exact_nodes,
        })
    }

    /// Mean relative gap and mean node speedup of `policy`. A run that finds
    /// nothing scores the maximal gap of 1.
    fn score(&self, policy: &PruningPolicy, cache: &SolveCache, cfg: &BnbConfig) -> Result<(f64, f64), ImitateError> {
        let mut gap_sum = 0.0;
        let mut speed_sum = 0.0;
        let mut n = 0usize;
        for ((inst, opt), exact) in self.instances.iter().zip(&self.optima).zip(&self.exact_nodes) {
            let Some(opt) = opt else { continue };
            let t = run_bnb(inst, policy, cache, cfg)?;
            gap_sum += match t.best_objective {
                Some(v) => relative_gap(inst.sense, v, *opt),
                None => 1.0,
            };
            speed_sum += *exact as f64 / t.node_count as f64;
            n += 1;
        }
        if n == 0 {
            return Ok((1.0, 1.0));
        }
        Ok((gap_sum / n as f64, speed_sum / n as f64))
    }
}

/// `(found − optimum) / |optimum|` oriented so that worse is positive.
pub fn relative_gap(sense: Sense, found: f64, optimum: f64) -> f64 {
    let diff = match sense {
        Sense::Minimize => found - optimum,
        Sense::Maximize => optimum - found,
    };
    diff / optimum.abs().max(1e-12)
}

/// Splits the transfer set into (training, validation) parts.
pub fn validation_split(n: usize, fraction: f64) -> (Vec<usize>, Vec<usize>) {
    if n <= 1 {
        return ((0..n).collect(), (0..n).collect());
    }
    let n_val = ((fraction * n as f64).round() as usize).clamp(1, n - 1);
    ((0..n - n_val).collect(), (n - n_val..n).collect())
}

pub fn self_imitation(
    pretrained: &MlpParams,
    transfer_instances: &[MinlpInstance],
    config: &SelfImitationConfig,
    cache: &SolveCache,
) -> Result<SelfImitationOutcome, ImitateError> {
    config.validate()?;
    if transfer_instances.is_empty() {
        return Err(ImitateError::NoInstances);
    }
    pretrained.validate()?;
    check_feature_version(pretrained, crate::features::FEATURE_VERSION)?;

    let search = config.search();
    let (train_idx, val_idx) = validation_split(transfer_instances.len(), config.validation_fraction);
    let train_set: Vec<&MinlpInstance> = train_idx.iter().map(|&i| &transfer_instances[i]).collect();
    let validation = Validation::new(
        val_idx.iter().map(|&i| &transfer_instances[i]).collect(),
        cache,
        config.node_budget,
    )?;

    let base = Arc::new(pretrained.clone());
    let explore = PruningPolicy::learned(base.clone(), config.explore_threshold)?;
    let mut current = base.clone();
    let mut dataset: Vec<LabeledSample> = Vec::new();
    let mut history = Vec::new();
    let mut starved_at = None;
    let started = Instant::now();

    let mut best: (f64, f64, usize, Arc<MlpParams>) = (f64::INFINITY, 0.0, 0, base.clone());
    for k in 1..=config.iterations {
        let policy_k = PruningPolicy::learned(current.clone(), config.policy_threshold)?;
        let (gap, speedup) = validation.score(&policy_k, cache, &search)?;
        let better = gap < best.0 - 1e-12 || ((gap - best.0).abs() <= 1e-12 && speedup > best.1);
        if better {
            best = (gap, speedup, k, current.clone());
        }

        let alpha = config.alpha(k);
        let blend_seed = config
            .seed
            .wrapping_add(0x9e37_79b9_7f4a_7c15u64.wrapping_mul(k as u64));
        let blended = blend_policy(policy_k, explore.clone(), alpha, blend_seed)?;
        let mut discarded = 0;
        for inst in &train_set {
            match collect(&blended, inst, cache, &search, k) {
                Ok(samples) => dataset.extend(samples),
                Err(ImitateError::NoIncumbent(id)) => {
                    log::warn!("iteration {k}: episode on {id} found no incumbent; discarded");
                    discarded += 1;
                }
                Err(e) => return Err(e),
            }
        }
        history.push(IterationRecord {
            iteration: k,
            alpha,
            episodes: train_set.len(),
            discarded,
            dataset_size: dataset.len(),
            validation_gap: gap,
            validation_speedup: speedup,
        });
        if discarded == train_set.len() {
            log::warn!("iteration {k}: every episode was discarded; stopping");
            starved_at = Some(k);
            break;
        }

        let weights = compute_class_weights(&dataset, config.class_weight_w2)?;
        let mut tc = config.fine_tune.clone();
        tc.seed = config.fine_tune.seed.wrapping_add(k as u64);
        let (tuned, report) = train(pretrained, &dataset, &weights, &tc)?;
        log::info!(
            "iteration {k}: α = {alpha:.2}, |D| = {}, loss {:.4} → {:.4}, validation gap {:.4}",
            dataset.len(),
            report.initial_loss,
            report.final_loss,
            gap
        );
        current = Arc::new(tuned);
    }
    if starved_at.is_none() {
        let k = config.iterations + 1;
        let policy_k = PruningPolicy::learned(current.clone(), config.policy_threshold)?;
        let (gap, speedup) = validation.score(&policy_k, cache, &search)?;
        let better = gap < best.0 - 1e-12 || ((gap - best.0).abs() <= 1e-12 && speedup > best.1);
        if better {
            best = (gap, speedup, k, current.clone());
        }
    }
    log::info!(
        "self-imitation picked π^({}) (validation gap {:.4}) after {:.1?}",
        best.2,
        best.0,
        started.elapsed()
    );
    Ok(SelfImitationOutcome {
        params: (*best.3).clone(),
        best_iteration: best.2,
        best_validation_gap: best.0,
        history,
        dataset,
        starved_at,
        validation_ids: validation.instances.iter().map(|i| i.id().to_string()).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::gen_toy_milp;

    #[test]
    fn split_sizes() {
        assert_eq!(validation_split(1, 0.2), (vec![0], vec![0]));
        assert_eq!(validation_split(10, 0.2), ((0..8).collect(), vec![8, 9]));
        assert_eq!(validation_split(2, 0.0), (vec![0], vec![1]));
        assert_eq!(validation_split(3, 1.0), (vec![0], vec![1, 2]));
    }

    #[test]
    fn gap_orientation() {
        assert!((relative_gap(Sense::Minimize, 100.57, 100.0) - 0.0057).abs() < 1e-12);
        assert!((relative_gap(Sense::Maximize, 9.0, 10.0) - 0.1).abs() < 1e-12);
    }

    #[test]
    fn alpha_schedule() {
        let c = SelfImitationConfig::new(3, 0);
        let a: Vec<f64> = (1..=10).map(|k| c.alpha(k)).collect();
        assert!((a[0] - 0.2).abs() < 1e-15);
        assert_eq!(a[4], 1.0);
        assert_eq!(a[9], 1.0);
        let mut bad = c.clone();
        bad.iterations = 0;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn exact_labels_keep_root() {
        let insts: Vec<_> = (0..4).map(|s| gen_toy_milp(s, 3, 3).unwrap()).collect();
        let data = generate_labeled_dataset(&insts, &SolveCache::new(), DEFAULT_NODE_BUDGET).unwrap();
        for inst in &insts {
            assert!(data
                .iter()
                .any(|s| s.instance_id == inst.id() && s.node_id == 0 && s.label == Label::Preserve));
        }
        assert!(matches!(
            generate_labeled_dataset(&[], &SolveCache::new(), 10),
            Err(ImitateError::NoInstances)
        ));
    }
}

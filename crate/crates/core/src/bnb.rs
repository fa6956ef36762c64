//! Depth-first branch-and-bound over binary variables with a pluggable
//! pruning policy.
//!
//! Each visited node is solved through the relaxation cache, checked against
//! the three exact fathoming rules, and only then shown to the policy. A
//! preserved node branches on its most fractional binary, nearest child first.

use std::collections::BTreeMap;
use std::io::Write;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{featurize, FeatureError};
use crate::mlp::{MlpError, MlpParams};
use crate::model::{Assignment, MinlpInstance, Sense};
use crate::relax::{cached_solve, Fixings, RelaxError, RelaxResult, RelaxStatus, SolveCache, TOL_OPT};

pub const DEFAULT_NODE_BUDGET: usize = 100_000;

#[derive(Debug, Error)]
pub enum BnbError {
    #[error(transparent)]
    Relax(#[from] RelaxError),
    #[error(transparent)]
    Model(#[from] MlpError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("trace has no incumbent")]
    NoIncumbent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FathomReason {
    Integrality,
    Bound,
    Infeasibility,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Decision {
    Prune,
    Preserve,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    Preserve,
    Prune,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeSelection {
    #[default]
    DepthFirst,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Branching {
    #[default]
    MostFractional,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BnbConfig {
    pub node_budget: usize,
    pub node_selection: NodeSelection,
    pub branching: Branching,
    /// Store the feature vector of every visited node in the trace.
    pub record_features: bool,
    /// Consult the pruning policy only once an incumbent exists.
    #[serde(default)]
    pub policy_after_incumbent: bool,
}

impl Default for BnbConfig {
    fn default() -> Self {
        BnbConfig {
            node_budget: DEFAULT_NODE_BUDGET,
            node_selection: NodeSelection::DepthFirst,
            branching: Branching::MostFractional,
            record_features: false,
            policy_after_incumbent: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BnbNode {
    pub id: usize,
    pub parent_id: Option<usize>,
    pub depth: usize,
    pub fixings: Fixings,
    /// Binary fixed when this node was created from its parent.
    pub branch_var: Option<usize>,
    pub relax: RelaxResult,
    pub fathom_reason: Option<FathomReason>,
    pub policy_pruned: bool,
    /// Ids of the children that were visited, in visit order.
    pub children: Vec<usize>,
    pub feature: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BnbTrace {
    pub instance_id: String,
    pub sense: Sense,
    pub visited: Vec<BnbNode>,
    pub incumbent_timeline: Vec<(usize, f64)>,
    pub best_objective: Option<f64>,
    pub best_node_id: Option<usize>,
    pub best_solution: Option<Assignment>,
    pub node_count: usize,
    pub relax_solve_count: usize,
    pub budget_exhausted: bool,
}

impl BnbTrace {
    pub fn new(instance: &MinlpInstance) -> Self {
        BnbTrace {
            instance_id: instance.id().to_string(),
            sense: instance.sense,
            visited: Vec::new(),
            incumbent_timeline: Vec::new(),
            best_objective: None,
            best_node_id: None,
            best_solution: None,
            node_count: 0,
            relax_solve_count: 0,
            budget_exhausted: false,
        }
    }

    pub fn no_incumbent(&self) -> bool {
        self.best_objective.is_none()
    }

    pub fn root_objective(&self) -> Option<f64> {
        self.visited.first().and_then(|n| n.relax.objective)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PruningPolicy {
    ExactOracle,
    PreserveAll,
    Learned {
        model: Arc<MlpParams>,
        threshold: f64,
    },
    Blended {
        base: Box<PruningPolicy>,
        explore: Box<PruningPolicy>,
        alpha: f64,
        seed: u64,
    },
}

impl PruningPolicy {
    pub fn learned(model: Arc<MlpParams>, threshold: f64) -> Result<Self, BnbError> {
        if !(0.0..=1.0).contains(&threshold) {
            return Err(BnbError::Config(format!("threshold {threshold} outside [0, 1]")));
        }
        Ok(PruningPolicy::Learned { model, threshold })
    }

    /// Whether any branch of this policy reads node features.
    pub fn needs_features(&self) -> bool {
        match self {
            PruningPolicy::ExactOracle | PruningPolicy::PreserveAll => false,
            PruningPolicy::Learned { .. } => true,
            PruningPolicy::Blended { base, explore, .. } => base.needs_features() || explore.needs_features(),
        }
    }

    /// Seed of the outermost blend, if any.
    fn blend_seed(&self) -> Option<u64> {
        match self {
            PruningPolicy::Blended { seed, .. } => Some(*seed),
            _ => None,
        }
    }
}

/// Per-node mixture of `base` (with probability `alpha`) and `explore`.
pub fn blend_policy(
    base: PruningPolicy,
    explore: PruningPolicy,
    alpha: f64,
    seed: u64,
) -> Result<PruningPolicy, BnbError> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(BnbError::Config(format!("alpha {alpha} outside [0, 1]")));
    }
    Ok(PruningPolicy::Blended {
        base: Box::new(base),
        explore: Box::new(explore),
        alpha,
        seed,
    })
}

/// Exact fathoming rules, checked in the order infeasibility, integrality,
/// bound. The bound rule allows `TOL_OPT` relative slack.
pub fn fathom_check(node_relax: &RelaxResult, incumbent: Option<f64>, sense: Sense) -> Option<FathomReason> {
    match node_relax.status {
        RelaxStatus::Infeasible => return Some(FathomReason::Infeasibility),
        RelaxStatus::NumericalFailure => return None,
        RelaxStatus::Optimal => {}
    }
    if node_relax.is_integral {
        return Some(FathomReason::Integrality);
    }
    let (Some(obj), Some(inc)) = (node_relax.objective, incumbent) else {
        return None;
    };
    let tol = TOL_OPT * inc.abs().max(1.0);
    let cannot_improve = match sense {
        Sense::Minimize => obj >= inc - tol,
        Sense::Maximize => obj <= inc + tol,
    };
    cannot_improve.then_some(FathomReason::Bound)
}

/// Asks `policy` about a node that survived fathoming. Blends draw one
/// uniform number per call from `rng`.
pub fn policy_prune_decision(
    policy: &PruningPolicy,
    feature: &[f64],
    rng: &mut ChaCha8Rng,
) -> Result<Decision, BnbError> {
    match policy {
        PruningPolicy::ExactOracle | PruningPolicy::PreserveAll => Ok(Decision::Preserve),
        PruningPolicy::Learned { model, threshold } => Ok(model.classify(feature, *threshold)?),
        PruningPolicy::Blended {
            base, explore, alpha, ..
        } => {
            let u: f64 = rng.random();
            if u < *alpha {
                policy_prune_decision(base, feature, rng)
            } else {
                policy_prune_decision(explore, feature, rng)
            }
        }
    }
}

struct Pending {
    fixings: Fixings,
    parent: Option<usize>,
    depth: usize,
    branch_var: Option<usize>,
}

fn instance_stream(seed: u64, instance_id: &str) -> ChaCha8Rng {
    // FNV-1a over the id keeps streams distinct per instance.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in instance_id.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    ChaCha8Rng::seed_from_u64(seed ^ h)
}

pub fn run_bnb(
    instance: &MinlpInstance,
    policy: &PruningPolicy,
    cache: &SolveCache,
    config: &BnbConfig,
) -> Result<BnbTrace, BnbError> {
    if config.node_budget == 0 {
        return Err(BnbError::Config("node_budget must be at least 1".into()));
    }
    let mut rng = instance_stream(policy.blend_seed().unwrap_or(0), instance.id());
    let want_features = config.record_features || policy.needs_features();
    let sense = instance.sense;
    let mut trace = BnbTrace::new(instance);
    let mut stack = vec![Pending {
        fixings: Fixings::new(),
        parent: None,
        depth: 0,
        branch_var: None,
    }];

    while let Some(p) = stack.pop() {
        if trace.visited.len() >= config.node_budget {
            trace.budget_exhausted = true;
            break;
        }
        let id = trace.visited.len();
        let relax = cached_solve(cache, instance, &p.fixings)?;
        trace.relax_solve_count += 1;
        if let Some(parent) = p.parent {
            trace.visited[parent].children.push(id);
        }
        trace.visited.push(BnbNode {
            id,
            parent_id: p.parent,
            depth: p.depth,
            fixings: p.fixings,
            branch_var: p.branch_var,
            relax,
            fathom_reason: None,
            policy_pruned: false,
            children: Vec::new(),
            feature: None,
        });
        trace.node_count = trace.visited.len();

        let status = trace.visited[id].relax.status;
        let feature = if want_features && status != RelaxStatus::NumericalFailure {
            Some(featurize(&trace.visited[id], &trace, instance)?)
        } else {
            None
        };
        if config.record_features {
            trace.visited[id].feature = feature.clone();
        }

        if status == RelaxStatus::NumericalFailure {
            log::warn!(
                "relaxation failed at node {id} of {} (fixings {}); preserving",
                instance.id(),
                trace.visited[id].fixings
            );
            push_children(&mut stack, &trace.visited[id], instance.num_binary);
            continue;
        }

        let mut reason = fathom_check(&trace.visited[id].relax, trace.best_objective, sense);
        if reason == Some(FathomReason::Integrality) {
            match integral_candidate(instance, cache, &trace.visited[id], &mut trace.relax_solve_count)? {
                Some((value, solution)) => {
                    let improves = trace.best_objective.is_none_or(|best| sense.better(value, best));
                    if improves {
                        trace.best_objective = Some(value);
                        trace.best_node_id = Some(id);
                        trace.best_solution = Some(solution);
                        trace.incumbent_timeline.push((id, value));
                    }
                }
                None => {
                    log::debug!("completion failed at node {id}; branching instead");
                    reason = None;
                }
            }
        }
        if let Some(r) = reason {
            trace.visited[id].fathom_reason = Some(r);
            continue;
        }

        let guarded = config.policy_after_incumbent && trace.best_objective.is_none();
        let decision = match &feature {
            Some(f) if !guarded => policy_prune_decision(policy, f, &mut rng)?,
            _ => Decision::Preserve,
        };
        if decision == Decision::Prune {
            trace.visited[id].policy_pruned = true;
            continue;
        }
        push_children(&mut stack, &trace.visited[id], instance.num_binary);
    }
    if !stack.is_empty() {
        trace.budget_exhausted = true;
    }
    Ok(trace)
}

/// Objective and solution certified by an integral relaxation. With free
/// binaries left, the rounded binaries are fixed and the continuous part
/// re-solved so the value belongs to a genuinely integer assignment.
fn integral_candidate(
    instance: &MinlpInstance,
    cache: &SolveCache,
    node: &BnbNode,
    solves: &mut usize,
) -> Result<Option<(f64, Assignment)>, BnbError> {
    let nb = instance.num_binary;
    let rounded: Vec<u8> = node.relax.values.binaries.iter().map(|v| u8::from(*v >= 0.5)).collect();
    let result = if node.fixings.len() == nb {
        node.relax.clone()
    } else {
        let mut full = node.fixings.clone();
        for (j, &v) in rounded.iter().enumerate() {
            if full.get(j).is_none() {
                full = full.with(j, v)?;
            }
        }
        *solves += 1;
        cached_solve(cache, instance, &full)?
    };
    if !result.is_optimal() {
        return Ok(None);
    }
    let value = result.objective.expect("optimal result carries an objective");
    Ok(Some((
        value,
        Assignment {
            binaries: rounded,
            continuous: result.values.continuous,
        },
    )))
}

/// Pushes the two children of `node` so that the one nearest the relaxed
/// value is popped first. Failed relaxations branch the lowest free index.
fn push_children(stack: &mut Vec<Pending>, node: &BnbNode, num_binary: usize) {
    let Some(var) = branching_variable(node, num_binary) else {
        return;
    };
    let near = match node.relax.values.binaries.get(var) {
        Some(&v) if node.relax.is_optimal() => u8::from(v >= 0.5),
        _ => 0,
    };
    for value in [1 - near, near] {
        let fixings = node.fixings.with(var, value).expect("branching variable is free");
        stack.push(Pending {
            fixings,
            parent: Some(node.id),
            depth: node.depth + 1,
            branch_var: Some(var),
        });
    }
}

/// Most fractional free binary, lowest index on ties.
pub fn branching_variable(node: &BnbNode, num_binary: usize) -> Option<usize> {
    let free = (0..num_binary).filter(|&j| node.fixings.get(j).is_none());
    if !node.relax.is_optimal() {
        return free.min();
    }
    let vals = &node.relax.values.binaries;
    let mut best: Option<(usize, f64)> = None;
    for j in free {
        let v = vals[j];
        let dist = v.min(1.0 - v).max(0.0);
        if best.is_none_or(|(_, d)| dist > d) {
            best = Some((j, dist));
        }
    }
    best.map(|(j, _)| j)
}

/// Labels the parent chain of the best node (root included) `Preserve` and
/// every other visited node `Prune`.
pub fn mark_optimal_path(trace: &BnbTrace) -> Result<BTreeMap<usize, Label>, BnbError> {
    let best = trace.best_node_id.ok_or(BnbError::NoIncumbent)?;
    let mut labels: BTreeMap<usize, Label> = trace.visited.iter().map(|n| (n.id, Label::Prune)).collect();
    let mut cur = Some(best);
    while let Some(id) = cur {
        labels.insert(id, Label::Preserve);
        cur = trace.visited[id].parent_id;
    }
    Ok(labels)
}

#[derive(Serialize)]
struct NodeRecord {
    id: usize,
    parent: Option<usize>,
    depth: usize,
    fixings: String,
    status: RelaxStatus,
    objective: Option<f64>,
    fathom: Option<FathomReason>,
    policy_pruned: bool,
}

/// Writes one JSON line per visited node.
pub fn export_trace<W: Write>(trace: &BnbTrace, mut out: W) -> std::io::Result<()> {
    for n in &trace.visited {
        let rec = NodeRecord {
            id: n.id,
            parent: n.parent_id,
            depth: n.depth,
            fixings: n.fixings.canonical_key(),
            status: n.relax.status,
            objective: n.relax.objective,
            fathom: n.fathom_reason,
            policy_pruned: n.policy_pruned,
        };
        serde_json::to_writer(&mut out, &rec)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

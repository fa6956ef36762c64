//! Fixed-length node descriptors for the pruning classifier.
//!
//! Order (one entry each): depth; depth / #binaries; fraction of binaries
//! fixed; fraction of fixings equal to one; log of the relaxed objective over
//! the root relaxed objective; integral flag; largest distance of a relaxed
//! binary to {0, 1}; fraction of fractional binaries; incumbent flag;
//! relative gap to the incumbent; sibling rank; index of the binary fixed
//! last over #binaries; #binaries / 64; users / RRHs; SINR target in dB / 10;
//! mean fronthaul power / 20 W; family tag.

use thiserror::Error;

use crate::bnb::{BnbNode, BnbTrace};
use crate::model::{Family, MinlpInstance, Sense};
use crate::relax::{RelaxStatus, TOL_INT};

pub const NUM_FEATURES: usize = 17;
/// Recorded in dataset and model files; files with another tag are rejected.
pub const FEATURE_VERSION: &str = "node17-v1";

pub const GAP_EPS: f64 = 1e-9;
/// Gap entry when no incumbent exists yet.
pub const NO_INCUMBENT_GAP: f64 = 1.0;
const RATIO_CAP: f64 = 10.0;

pub type FeatureVector = Vec<f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeatureError {
    #[error("node {0} has no usable relaxation")]
    NotSolved(usize),
}

fn clamp_unit(v: f64) -> f64 {
    v.clamp(-1.0, 1.0)
}

/// Relaxed objective as seen by ranking: infeasible nodes rank worst.
fn rank_key(node: &BnbNode, sense: Sense) -> f64 {
    match node.relax.objective {
        Some(v) => sense.sign() * v,
        None => f64::INFINITY,
    }
}

pub fn featurize(node: &BnbNode, trace: &BnbTrace, instance: &MinlpInstance) -> Result<FeatureVector, FeatureError> {
    let status = node.relax.status;
    if status == RelaxStatus::NumericalFailure {
        return Err(FeatureError::NotSolved(node.id));
    }
    let nb = instance.num_binary as f64;
    let sense = instance.sense;
    let feasible = status == RelaxStatus::Optimal;
    let depth = node.depth as f64;
    let fixed = node.fixings.len() as f64;
    let ones_frac = if node.fixings.is_empty() {
        0.0
    } else {
        node.fixings.ones() as f64 / fixed
    };

    let infeasible_ratio = match sense {
        Sense::Minimize => RATIO_CAP,
        Sense::Maximize => -RATIO_CAP,
    };
    let root = trace.root_objective().or(node.relax.objective);
    let obj_ratio = match (node.relax.objective, root) {
        (Some(c), Some(r)) if c > 0.0 && r > 1e-12 => (c / r).ln().clamp(-RATIO_CAP, RATIO_CAP),
        (Some(c), Some(r)) if r.abs() > 1e-12 => (c / r - 1.0).clamp(-RATIO_CAP, RATIO_CAP),
        (Some(c), Some(r)) => (c - r).clamp(-RATIO_CAP, RATIO_CAP),
        _ => infeasible_ratio,
    };

    let (max_frac, n_frac) = if feasible {
        node.relax
            .values
            .binaries
            .iter()
            .map(|&v| v.min(1.0 - v).max(0.0))
            .fold((0.0f64, 0usize), |(m, c), d| (m.max(d), c + usize::from(d > TOL_INT)))
    } else {
        (0.0, 0)
    };

    let gap = match (node.relax.objective, trace.best_objective) {
        (_, None) => NO_INCUMBENT_GAP,
        (Some(c), Some(best)) => clamp_unit((c - best) / (best.abs() + GAP_EPS)),
        (None, Some(_)) => 1.0,
    };

    let sibling_rank = node
        .parent_id
        .map(|p| {
            let mine = rank_key(node, sense);
            let beaten = trace.visited[p]
                .children
                .iter()
                .filter(|&&c| c != node.id)
                .any(|&c| rank_key(&trace.visited[c], sense) < mine);
            f64::from(u8::from(beaten))
        })
        .unwrap_or(0.0);

    let last_fixed = node.branch_var.map_or(0.0, |j| j as f64 / nb);

    let ctx = &instance.meta.context;
    let cloud = instance.meta.family == Family::CloudRan;
    let (users_per_rrh, sinr, fronthaul, tag) = if cloud && ctx.rrhs > 0 {
        (
            clamp_unit(ctx.users as f64 / ctx.rrhs as f64),
            clamp_unit(ctx.sinr_db / 10.0),
            clamp_unit(ctx.mean_fronthaul_power / 20.0),
            1.0,
        )
    } else {
        (0.0, 0.0, 0.0, 0.0)
    };

    let f = vec![
        depth,
        depth / nb,
        fixed / nb,
        ones_frac,
        obj_ratio,
        f64::from(u8::from(feasible && node.relax.is_integral)),
        max_frac,
        n_frac as f64 / nb,
        f64::from(u8::from(trace.best_objective.is_some())),
        gap,
        sibling_rank,
        clamp_unit(last_fixed),
        clamp_unit(nb / 64.0),
        users_per_rrh,
        sinr,
        fronthaul,
        tag,
    ];
    debug_assert_eq!(f.len(), NUM_FEATURES);
    debug_assert!(f.iter().all(|v| v.is_finite()));
    Ok(f)
}

//! Node relaxations: building the continuous program for a set of fixings,
//! solving it, and memoizing the result.

mod barrier;
mod cache;
pub mod simplex;

pub use barrier::{solve_conic, BarrierSettings, ConicOutcome};
pub use cache::{cached_solve, CacheKey, SolveCache};

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{CmpOp, ConstraintSpec, MinlpInstance, Sense, Terms, TOL_FEAS};
use simplex::{solve_lp, LpOutcome, LpProblem, LpRow};

/// Relative optimality tolerance shared by the solvers and the bound test.
pub const TOL_OPT: f64 = 1e-6;
/// Distance to {0, 1} below which a relaxed binary counts as integral.
pub const TOL_INT: f64 = 1e-5;

const LP_MAX_PIVOTS: usize = 50_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RelaxError {
    #[error("invalid fixings: {0}")]
    InvalidFixings(String),
    #[error("malformed program: {0}")]
    Malformed(String),
}

/// Branching history of a node: binary index → fixed value, in ascending index order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Fixings(BTreeMap<usize, u8>);

impl Fixings {
    pub fn new() -> Self {
        Fixings(BTreeMap::new())
    }

    pub fn from_pairs(pairs: &[(usize, u8)]) -> Result<Self, RelaxError> {
        let mut f = Fixings::new();
        for &(i, v) in pairs {
            f = f.with(i, v)?;
        }
        Ok(f)
    }

    /// Returns a copy with `index` fixed to `value`.
    pub fn with(&self, index: usize, value: u8) -> Result<Self, RelaxError> {
        if value > 1 {
            return Err(RelaxError::InvalidFixings(format!("value {value} for binary {index}")));
        }
        if self.0.contains_key(&index) {
            return Err(RelaxError::InvalidFixings(format!("binary {index} fixed twice")));
        }
        let mut m = self.0.clone();
        m.insert(index, value);
        Ok(Fixings(m))
    }

    pub fn get(&self, index: usize) -> Option<u8> {
        self.0.get(&index).copied()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, u8)> + '_ {
        self.0.iter().map(|(&i, &v)| (i, v))
    }

    pub fn ones(&self) -> usize {
        self.0.values().filter(|&&v| v == 1).count()
    }

    /// Canonical text form, e.g. `0=1,3=0`; equal fixings give equal keys.
    pub fn canonical_key(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for Fixings {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (n, (i, v)) in self.iter().enumerate() {
            if n > 0 {
                f.write_str(",")?;
            }
            write!(f, "{i}={v}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearRow {
    pub terms: Terms,
    pub op: CmpOp,
    pub rhs: f64,
}

/// `‖(rows · x + offsets)‖₂ ≤ head · x + head_offset`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SocConstraint {
    pub rows: Vec<(Terms, f64)>,
    pub head: Terms,
    pub head_offset: f64,
}

/// `Σ_{i ∈ group} x_i² ≤ constant + scale · x_binary`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraticCap {
    pub group: Vec<usize>,
    pub binary: Option<usize>,
    pub scale: f64,
    pub constant: f64,
}

/// Continuous relaxation over `x = (binaries, continuous)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConicProgram {
    pub sense: Sense,
    pub num_binary: usize,
    pub num_continuous: usize,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub linear_objective: Vec<f64>,
    pub quadratic_objective: Vec<f64>,
    pub rows: Vec<LinearRow>,
    pub cones: Vec<SocConstraint>,
    pub caps: Vec<QuadraticCap>,
}

impl ConicProgram {
    pub fn dim(&self) -> usize {
        self.num_binary + self.num_continuous
    }

    pub fn is_linear(&self) -> bool {
        self.cones.is_empty() && self.caps.is_empty() && self.quadratic_objective.iter().all(|&q| q == 0.0)
    }

    pub fn objective_at(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(self.linear_objective.iter().zip(&self.quadratic_objective))
            .map(|(v, (c, q))| c * v + q * v * v)
            .sum()
    }

    /// Largest constraint residual at `x` (bounds included); ≤ 0 means feasible.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let dot = |t: &Terms| t.iter().map(|&(i, a)| a * x[i]).sum::<f64>();
        let mut worst = f64::NEG_INFINITY;
        for (j, &v) in x.iter().enumerate() {
            worst = worst.max(self.lower[j] - v).max(v - self.upper[j]);
        }
        for r in &self.rows {
            let lhs = dot(&r.terms);
            let res = match r.op {
                CmpOp::Le => lhs - r.rhs,
                CmpOp::Ge => r.rhs - lhs,
                CmpOp::Eq => (lhs - r.rhs).abs(),
            };
            worst = worst.max(res);
        }
        for c in &self.cones {
            let norm = c
                .rows
                .iter()
                .map(|(t, o)| {
                    let v = dot(t) + o;
                    v * v
                })
                .sum::<f64>()
                .sqrt();
            worst = worst.max(norm - dot(&c.head) - c.head_offset);
        }
        for cap in &self.caps {
            let p: f64 = cap.group.iter().map(|&i| x[i] * x[i]).sum();
            let rhs = cap.constant + cap.binary.map_or(0.0, |b| cap.scale * x[b]);
            worst = worst.max(p - rhs);
        }
        worst
    }

    fn validate(&self) -> Result<(), RelaxError> {
        let n = self.dim();
        let bad = |m: &str| Err(RelaxError::Malformed(m.to_string()));
        if self.lower.len() != n
            || self.upper.len() != n
            || self.linear_objective.len() != n
            || self.quadratic_objective.len() != n
        {
            return bad("vector lengths do not match the variable count");
        }
        let in_range = |t: &Terms| t.iter().all(|&(i, _)| i < n);
        if !self.rows.iter().all(|r| in_range(&r.terms))
            || !self
                .cones
                .iter()
                .all(|c| in_range(&c.head) && c.rows.iter().all(|(t, _)| in_range(t)))
            || !self
                .caps
                .iter()
                .all(|c| c.group.iter().all(|&i| i < n) && c.binary.is_none_or(|b| b < n))
        {
            return bad("a constraint references an out-of-range variable");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RelaxStatus {
    Optimal,
    Infeasible,
    NumericalFailure,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RelaxedPoint {
    pub binaries: Vec<f64>,
    pub continuous: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelaxResult {
    pub status: RelaxStatus,
    /// Present iff `status` is `Optimal`.
    pub objective: Option<f64>,
    pub values: RelaxedPoint,
    pub is_integral: bool,
}

impl RelaxResult {
    fn without_solution(status: RelaxStatus) -> Self {
        RelaxResult {
            status,
            objective: None,
            values: RelaxedPoint::default(),
            is_integral: false,
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == RelaxStatus::Optimal
    }
}

/// Pins fixed binaries, relaxes the rest to `[0, 1]`, and rewrites each SINR
/// requirement as `√(1+1/γ)·Re(h̃ᴴw_k) ≥ ‖(h̃ᴴW, 1)‖` with `Im(h̃ᴴw_k) = 0`,
/// where `h̃ = h/σ`.
pub fn build_relaxation(instance: &MinlpInstance, fixings: &Fixings) -> Result<ConicProgram, RelaxError> {
    let nb = instance.num_binary;
    let nc = instance.num_continuous;
    if let Some((i, _)) = fixings.iter().find(|&(i, _)| i >= nb) {
        return Err(RelaxError::InvalidFixings(format!(
            "binary {i} out of range (num_binary = {nb})"
        )));
    }
    let n = nb + nc;
    let mut lower = vec![0.0; n];
    let mut upper = vec![1.0; n];
    for j in nb..n {
        lower[j] = f64::NEG_INFINITY;
        upper[j] = f64::INFINITY;
    }
    for (i, v) in fixings.iter() {
        lower[i] = f64::from(v);
        upper[i] = f64::from(v);
    }
    let mut linear_objective = instance.objective.binary_linear.clone();
    linear_objective.extend_from_slice(&instance.objective.continuous_linear);
    let mut quadratic_objective = vec![0.0; nb];
    quadratic_objective.extend_from_slice(&instance.objective.continuous_quadratic);

    let mut rows = Vec::new();
    let mut cones = Vec::new();
    let mut caps = Vec::new();
    for c in &instance.constraints {
        match c {
            ConstraintSpec::Linear {
                binary,
                continuous,
                op,
                rhs,
            } => {
                let mut terms = binary.clone();
                terms.extend(continuous.iter().map(|&(i, a)| (nb + i, a)));
                rows.push(LinearRow {
                    terms,
                    op: *op,
                    rhs: *rhs,
                });
            }
            ConstraintSpec::SinrCone {
                channel_re,
                channel_im,
                beam_offsets,
                target,
                noise_std,
                gamma,
            } => {
                let re_terms = |off: usize| -> (Terms, Terms) {
                    let mut re = Vec::with_capacity(2 * channel_re.len());
                    let mut im = Vec::with_capacity(2 * channel_re.len());
                    for (i, (&hr, &hi)) in channel_re.iter().zip(channel_im).enumerate() {
                        let (hr, hi) = (hr / noise_std, hi / noise_std);
                        let wr = nb + off + 2 * i;
                        // Re(conj(h) w) = hr·wr + hi·wi ; Im = hr·wi − hi·wr
                        re.push((wr, hr));
                        re.push((wr + 1, hi));
                        im.push((wr, -hi));
                        im.push((wr + 1, hr));
                    }
                    (re, im)
                };
                let mut cone_rows = Vec::with_capacity(2 * beam_offsets.len() + 1);
                let mut head = Vec::new();
                for (j, &off) in beam_offsets.iter().enumerate() {
                    let (re, im) = re_terms(off);
                    if j == *target {
                        let scale = (1.0 + 1.0 / gamma).sqrt();
                        head = re.iter().map(|&(i, a)| (i, a * scale)).collect();
                        rows.push(LinearRow {
                            terms: im.clone(),
                            op: CmpOp::Eq,
                            rhs: 0.0,
                        });
                    }
                    cone_rows.push((re, 0.0));
                    cone_rows.push((im, 0.0));
                }
                cone_rows.push((Vec::new(), 1.0));
                cones.push(SocConstraint {
                    rows: cone_rows,
                    head,
                    head_offset: 0.0,
                });
            }
            ConstraintSpec::PowerCap { group, binary, cap } => {
                let group: Vec<usize> = group.iter().map(|&i| nb + i).collect();
                let qc = match fixings.get(*binary) {
                    Some(v) => QuadraticCap {
                        group,
                        binary: None,
                        scale: 0.0,
                        constant: cap * f64::from(v),
                    },
                    None => QuadraticCap {
                        group,
                        binary: Some(*binary),
                        scale: *cap,
                        constant: 0.0,
                    },
                };
                caps.push(qc);
            }
        }
    }
    Ok(ConicProgram {
        sense: instance.sense,
        num_binary: nb,
        num_continuous: nc,
        lower,
        upper,
        linear_objective,
        quadratic_objective,
        rows,
        cones,
        caps,
    })
}

pub fn solve_relaxation(program: &ConicProgram) -> Result<RelaxResult, RelaxError> {
    program.validate()?;
    let x = if program.is_linear() {
        match solve_linear(program) {
            LpOutcome::Optimal { x, .. } => x,
            LpOutcome::Infeasible => return Ok(RelaxResult::without_solution(RelaxStatus::Infeasible)),
            LpOutcome::Unbounded | LpOutcome::IterationLimit => {
                return Ok(RelaxResult::without_solution(RelaxStatus::NumericalFailure))
            }
        }
    } else {
        match solve_conic(program, &BarrierSettings::default()) {
            ConicOutcome::Optimal { x, .. } => x,
            ConicOutcome::Infeasible => return Ok(RelaxResult::without_solution(RelaxStatus::Infeasible)),
            ConicOutcome::Failure(reason) => {
                log::warn!("conic relaxation failed: {reason}");
                return Ok(RelaxResult::without_solution(RelaxStatus::NumericalFailure));
            }
        }
    };
    let objective = program.objective_at(&x);
    let nb = program.num_binary;
    let is_integral = integral(program, &x);
    let continuous = x[nb..].to_vec();
    let binaries = x[..nb].to_vec();
    Ok(RelaxResult {
        status: RelaxStatus::Optimal,
        objective: Some(objective),
        values: RelaxedPoint { binaries, continuous },
        is_integral,
    })
}

/// Every relaxed binary lies within `TOL_INT` of {0, 1}, and, when some were
/// free, the point with those binaries rounded still satisfies the program.
fn integral(program: &ConicProgram, x: &[f64]) -> bool {
    let nb = program.num_binary;
    let near = x[..nb].iter().all(|&v| (v - v.round()).abs() <= TOL_INT);
    if !near {
        return false;
    }
    if (0..nb).all(|j| program.lower[j] == program.upper[j]) {
        return true;
    }
    let mut rounded = x.to_vec();
    for v in rounded[..nb].iter_mut() {
        *v = v.round();
    }
    program.max_violation(&rounded) <= TOL_FEAS
}

fn solve_linear(program: &ConicProgram) -> LpOutcome {
    let n = program.dim();
    let sign = program.sense.sign();
    let rows = program
        .rows
        .iter()
        .map(|r| {
            let mut coeffs = vec![0.0; n];
            for &(i, a) in &r.terms {
                coeffs[i] += a;
            }
            LpRow {
                coeffs,
                op: r.op,
                rhs: r.rhs,
            }
        })
        .collect();
    let lp = LpProblem {
        cost: program.linear_objective.iter().map(|c| sign * c).collect(),
        rows,
        lower: program.lower.clone(),
        upper: program.upper.clone(),
    };
    solve_lp(&lp, LP_MAX_PIVOTS)
}

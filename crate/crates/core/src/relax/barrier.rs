//! Log-barrier interior-point method for the conic relaxations emitted by
//! `build_relaxation`: linear rows, second-order cones and quadratic caps.
//!
//! Phase I finds a strictly feasible point by minimizing a shared slack `r`;
//! phase II follows the central path with damped Newton steps on the
//! equality-constrained barrier problem.

use nalgebra::{Cholesky, DMatrix, DVector};

use super::ConicProgram;
use crate::model::{CmpOp, Terms};

#[derive(Debug, Clone)]
pub struct BarrierSettings {
    /// Barrier parameter growth per outer iteration.
    pub mu: f64,
    /// Stop when the duality-gap bound falls below `gap_rel · max(1, |f|)`.
    pub gap_rel: f64,
    /// Newton-decrement threshold for centering.
    pub newton_tol: f64,
    /// Accepted gap bound when centering breaks down at large `t`.
    pub fallback_gap_rel: f64,
    /// Cap on Newton steps over both phases.
    pub max_newton: usize,
}

impl Default for BarrierSettings {
    fn default() -> Self {
        BarrierSettings {
            mu: 40.0,
            gap_rel: 1e-9,
            fallback_gap_rel: 1e-7,
            newton_tol: 1e-7,
            max_newton: 600,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConicOutcome {
    Optimal { x: Vec<f64>, objective: f64, gap: f64 },
    Infeasible,
    Failure(String),
}

/// `a · z ≤ rhs`
#[derive(Debug, Clone)]
struct LinAtom {
    terms: Vec<(usize, f64)>,
    rhs: f64,
}

/// `‖rows · z + offsets‖ ≤ head · z + head_off`
#[derive(Debug, Clone)]
struct ConeAtom {
    rows: Vec<(Vec<(usize, f64)>, f64)>,
    head: Vec<(usize, f64)>,
    head_off: f64,
    support: Vec<usize>,
}

/// `Σ_{sq} z_i² + lin · z + c0 ≤ 0`
#[derive(Debug, Clone)]
struct CapAtom {
    sq: Vec<usize>,
    lin: Vec<(usize, f64)>,
    c0: f64,
    support: Vec<usize>,
}

struct Reduced {
    n: usize,
    free: Vec<usize>,
    pinned: Vec<Option<f64>>,
    obj_lin: Vec<f64>,
    obj_quad: Vec<f64>,
    lin: Vec<LinAtom>,
    eq: Vec<LinAtom>,
    cones: Vec<ConeAtom>,
    caps: Vec<CapAtom>,
}

enum Reduction {
    Ok(Reduced),
    Infeasible,
}

const PIN_EPS: f64 = 1e-12;
/// Newton decrement below which a stalled line search counts as centered.
const STALL_CENTERED: f64 = 1e-5;

impl Reduced {
    fn from_program(p: &ConicProgram) -> Reduction {
        let n = p.dim();
        let mut pinned: Vec<Option<f64>> = (0..n)
            .map(|j| (p.lower[j] == p.upper[j]).then_some(p.lower[j]))
            .collect();
        if (0..n).any(|j| p.lower[j] > p.upper[j]) {
            return Reduction::Infeasible;
        }
        // A cap with a zero right-hand side pins its whole group to zero.
        for cap in &p.caps {
            let rhs = match cap.binary {
                None => Some(cap.constant),
                Some(b) => pinned[b].map(|v| cap.constant + cap.scale * v),
            };
            if let Some(rhs) = rhs {
                if rhs < -PIN_EPS {
                    return Reduction::Infeasible;
                }
                if rhs <= PIN_EPS {
                    for &i in &cap.group {
                        match pinned[i] {
                            Some(v) if v != 0.0 => return Reduction::Infeasible,
                            _ => pinned[i] = Some(0.0),
                        }
                    }
                }
            }
        }
        let free: Vec<usize> = (0..n).filter(|&j| pinned[j].is_none()).collect();
        let mut pos = vec![usize::MAX; n];
        for (k, &j) in free.iter().enumerate() {
            pos[j] = k;
        }
        // Splits terms into free-coordinate terms and a pinned constant.
        let split = |t: &Terms| -> (Vec<(usize, f64)>, f64) {
            let mut out = Vec::with_capacity(t.len());
            let mut c = 0.0;
            for &(i, a) in t {
                match pinned[i] {
                    Some(v) => c += a * v,
                    None => out.push((pos[i], a)),
                }
            }
            (out, c)
        };
        let mut lin = Vec::new();
        let mut eq = Vec::new();
        for row in &p.rows {
            let (terms, c) = split(&row.terms);
            let rhs = row.rhs - c;
            if terms.iter().all(|&(_, a)| a == 0.0) {
                let ok = match row.op {
                    CmpOp::Le => rhs >= -1e-9,
                    CmpOp::Ge => rhs <= 1e-9,
                    CmpOp::Eq => rhs.abs() <= 1e-9,
                };
                if !ok {
                    return Reduction::Infeasible;
                }
                continue;
            }
            match row.op {
                CmpOp::Le => lin.push(LinAtom { terms, rhs }),
                CmpOp::Ge => lin.push(LinAtom {
                    terms: terms.iter().map(|&(i, a)| (i, -a)).collect(),
                    rhs: -rhs,
                }),
                CmpOp::Eq => eq.push(LinAtom { terms, rhs }),
            }
        }
        for (k, &j) in free.iter().enumerate() {
            if p.lower[j].is_finite() {
                lin.push(LinAtom {
                    terms: vec![(k, -1.0)],
                    rhs: -p.lower[j],
                });
            }
            if p.upper[j].is_finite() {
                lin.push(LinAtom {
                    terms: vec![(k, 1.0)],
                    rhs: p.upper[j],
                });
            }
        }
        let mut cones = Vec::new();
        for c in &p.cones {
            let (head, hc) = split(&c.head);
            let rows: Vec<(Vec<(usize, f64)>, f64)> = c
                .rows
                .iter()
                .map(|(t, o)| {
                    let (terms, rc) = split(t);
                    (terms, o + rc)
                })
                .collect();
            let mut support: Vec<usize> = head
                .iter()
                .map(|&(i, _)| i)
                .chain(rows.iter().flat_map(|(t, _)| t.iter().map(|&(i, _)| i)))
                .collect();
            support.sort_unstable();
            support.dedup();
            cones.push(ConeAtom {
                rows,
                head,
                head_off: c.head_offset + hc,
                support,
            });
        }
        let mut caps = Vec::new();
        for cap in &p.caps {
            let mut sq = Vec::new();
            let mut c0 = -cap.constant;
            for &i in &cap.group {
                match pinned[i] {
                    Some(v) => c0 += v * v,
                    None => sq.push(pos[i]),
                }
            }
            let mut lin_terms = Vec::new();
            if let Some(b) = cap.binary {
                match pinned[b] {
                    Some(v) => c0 -= cap.scale * v,
                    None => lin_terms.push((pos[b], -cap.scale)),
                }
            }
            if sq.is_empty() && lin_terms.is_empty() {
                if c0 > 1e-9 {
                    return Reduction::Infeasible;
                }
                continue;
            }
            let mut support: Vec<usize> = sq.iter().copied().chain(lin_terms.iter().map(|&(i, _)| i)).collect();
            support.sort_unstable();
            support.dedup();
            caps.push(CapAtom {
                sq,
                lin: lin_terms,
                c0,
                support,
            });
        }
        let sign = p.sense.sign();
        let obj_lin = free.iter().map(|&j| sign * p.linear_objective[j]).collect();
        let obj_quad = free.iter().map(|&j| sign * p.quadratic_objective[j]).collect();
        Reduction::Ok(Reduced {
            n,
            free,
            pinned,
            obj_lin,
            obj_quad,
            lin,
            eq,
            cones,
            caps,
        })
    }

    fn dim(&self) -> usize {
        self.free.len()
    }

    fn theta(&self) -> f64 {
        (self.lin.len() + self.caps.len() + 2 * self.cones.len()) as f64
    }

    fn expand(&self, z: &[f64]) -> Vec<f64> {
        let mut x: Vec<f64> = self.pinned.iter().map(|p| p.unwrap_or(0.0)).collect();
        for (k, &j) in self.free.iter().enumerate() {
            x[j] = z[k];
        }
        debug_assert_eq!(x.len(), self.n);
        x
    }

    fn objective(&self, z: &[f64]) -> f64 {
        z.iter()
            .zip(self.obj_lin.iter().zip(&self.obj_quad))
            .map(|(v, (c, q))| c * v + q * v * v)
            .sum()
    }

    /// Largest residual over the inequality atoms (positive = violated).
    fn max_residual(&self, z: &[f64]) -> f64 {
        let dot = |t: &[(usize, f64)]| t.iter().map(|&(i, a)| a * z[i]).sum::<f64>();
        let mut worst = f64::NEG_INFINITY;
        for a in &self.lin {
            worst = worst.max(dot(&a.terms) - a.rhs);
        }
        for c in &self.caps {
            worst = worst.max(c.sq.iter().map(|&i| z[i] * z[i]).sum::<f64>() + dot(&c.lin) + c.c0);
        }
        for c in &self.cones {
            let norm = c.rows.iter().map(|(t, o)| (dot(t) + o).powi(2)).sum::<f64>().sqrt();
            worst = worst.max(norm - dot(&c.head) - c.head_off);
        }
        worst
    }

    /// Barrier value; with `slack = Some(r)` every atom is loosened by `r`
    /// and the extra atom `r ≥ -1` is included. Gradient and Hessian are
    /// accumulated when `deriv` is given (dimension `dim + 1` in phase I).
    fn barrier(&self, z: &[f64], slack: Option<f64>, mut deriv: Option<(&mut [f64], &mut [f64])>) -> Option<f64> {
        let d = self.dim();
        let dd = d + usize::from(slack.is_some());
        let r = slack.unwrap_or(0.0);
        let ri = d;
        let dot = |t: &[(usize, f64)]| t.iter().map(|&(i, a)| a * z[i]).sum::<f64>();
        let mut val = 0.0;
        for a in &self.lin {
            let s = a.rhs - dot(&a.terms) + r;
            if !(s > 0.0) {
                return None;
            }
            val -= s.ln();
            if let Some((g, h)) = deriv.as_mut() {
                let inv = 1.0 / s;
                let inv2 = inv * inv;
                for &(i, ai) in &a.terms {
                    g[i] += ai * inv;
                    for &(j, aj) in &a.terms {
                        h[i * dd + j] += ai * aj * inv2;
                    }
                    if slack.is_some() {
                        h[i * dd + ri] -= ai * inv2;
                        h[ri * dd + i] -= ai * inv2;
                    }
                }
                if slack.is_some() {
                    g[ri] -= inv;
                    h[ri * dd + ri] += inv2;
                }
            }
        }
        let mut grad_buf = vec![0.0; dd];
        for c in &self.caps {
            let q = c.sq.iter().map(|&i| z[i] * z[i]).sum::<f64>() + dot(&c.lin) + c.c0;
            let s = r - q;
            if !(s > 0.0) {
                return None;
            }
            val -= s.ln();
            if let Some((g, h)) = deriv.as_mut() {
                let inv = 1.0 / s;
                for &i in &c.support {
                    grad_buf[i] = 0.0;
                }
                for &i in &c.sq {
                    grad_buf[i] += 2.0 * z[i];
                }
                for &(i, a) in &c.lin {
                    grad_buf[i] += a;
                }
                for &i in &c.sq {
                    h[i * dd + i] += 2.0 * inv;
                }
                let inv2 = inv * inv;
                for &i in &c.support {
                    let gi = grad_buf[i];
                    g[i] += gi * inv;
                    if gi == 0.0 {
                        continue;
                    }
                    for &j in &c.support {
                        h[i * dd + j] += gi * grad_buf[j] * inv2;
                    }
                    if slack.is_some() {
                        h[i * dd + ri] -= gi * inv2;
                        h[ri * dd + i] -= gi * inv2;
                    }
                }
                if slack.is_some() {
                    g[ri] -= inv;
                    h[ri * dd + ri] += inv2;
                }
            }
        }
        for c in &self.cones {
            let u = dot(&c.head) + c.head_off + r;
            if !(u > 0.0) {
                return None;
            }
            let vs: Vec<f64> = c.rows.iter().map(|(t, o)| dot(t) + o).collect();
            let dd_val = u * u - vs.iter().map(|v| v * v).sum::<f64>();
            if !(dd_val > 0.0) {
                return None;
            }
            val -= dd_val.ln();
            if let Some((g, h)) = deriv.as_mut() {
                let inv = 1.0 / dd_val;
                // ∇D = 2u·head − 2 Σ v_i row_i (plus 2u on r in phase I)
                for &i in &c.support {
                    grad_buf[i] = 0.0;
                }
                for &(i, a) in &c.head {
                    grad_buf[i] += 2.0 * u * a;
                }
                for ((t, _), v) in c.rows.iter().zip(&vs) {
                    for &(i, a) in t {
                        grad_buf[i] -= 2.0 * v * a;
                    }
                }
                // −∇²D / D
                for &(i, ai) in &c.head {
                    for &(j, aj) in &c.head {
                        h[i * dd + j] -= 2.0 * ai * aj * inv;
                    }
                    if slack.is_some() {
                        h[i * dd + ri] -= 2.0 * ai * inv;
                        h[ri * dd + i] -= 2.0 * ai * inv;
                    }
                }
                if slack.is_some() {
                    h[ri * dd + ri] -= 2.0 * inv;
                }
                for (t, _) in &c.rows {
                    for &(i, ai) in t {
                        for &(j, aj) in t {
                            h[i * dd + j] += 2.0 * ai * aj * inv;
                        }
                    }
                }
                // ∇D ∇Dᵀ / D² and −∇D / D
                let inv2 = inv * inv;
                let gr = 2.0 * u;
                for &i in &c.support {
                    let gi = grad_buf[i];
                    g[i] -= gi * inv;
                    if gi == 0.0 {
                        continue;
                    }
                    for &j in &c.support {
                        h[i * dd + j] += gi * grad_buf[j] * inv2;
                    }
                    if slack.is_some() {
                        h[i * dd + ri] += gi * gr * inv2;
                        h[ri * dd + i] += gi * gr * inv2;
                    }
                }
                if slack.is_some() {
                    g[ri] -= gr * inv;
                    h[ri * dd + ri] += gr * gr * inv2;
                }
            }
        }
        if slack.is_some() {
            let s = r + 1.0;
            if !(s > 0.0) {
                return None;
            }
            val -= s.ln();
            if let Some((g, h)) = deriv.as_mut() {
                g[ri] -= 1.0 / s;
                h[ri * dd + ri] += 1.0 / (s * s);
            }
        }
        Some(val)
    }
}

enum CenterResult {
    Centered,
    EarlyStop,
    Failed(String),
}

struct Solver<'a> {
    red: &'a Reduced,
    eq_matrix: Option<DMatrix<f64>>,
    settings: &'a BarrierSettings,
    newton_steps: usize,
}

impl Solver<'_> {
    /// `f(z + α·dz) − f(z)` without cancellation.
    fn objective_delta(&self, z: &[f64], dz: &[f64], alpha: f64, phase1: bool) -> f64 {
        let d = self.red.dim();
        if phase1 {
            return alpha * dz[d];
        }
        (0..d)
            .map(|k| {
                let step = alpha * dz[k];
                self.red.obj_lin[k] * step + self.red.obj_quad[k] * step * (2.0 * z[k] + step)
            })
            .sum()
    }

    /// Newton centering on `t · f + φ` subject to the equality rows.
    fn center(&mut self, z: &mut Vec<f64>, t: f64, phase1: bool) -> CenterResult {
        let d = self.red.dim();
        let dd = z.len();
        loop {
            if self.newton_steps >= self.settings.max_newton {
                return CenterResult::Failed("Newton iteration cap reached".into());
            }
            self.newton_steps += 1;
            let mut g = vec![0.0; dd];
            let mut h = vec![0.0; dd * dd];
            let slack = phase1.then(|| z[d]);
            let Some(b0) = self.red.barrier(&z[..d], slack, Some((&mut g, &mut h))) else {
                return CenterResult::Failed("iterate left the barrier domain".into());
            };
            if phase1 {
                g[d] += t;
            } else {
                for k in 0..d {
                    g[k] += t * (self.red.obj_lin[k] + 2.0 * self.red.obj_quad[k] * z[k]);
                    h[k * dd + k] += 2.0 * t * self.red.obj_quad[k];
                }
            }
            let dz = match self.newton_direction(&h, &g, dd) {
                Some(dz) => dz,
                None => return CenterResult::Failed("singular Newton system".into()),
            };
            let slope: f64 = g.iter().zip(&dz).map(|(a, b)| a * b).sum();
            let lambda2 = -slope;
            if lambda2 / 2.0 <= self.settings.newton_tol {
                return CenterResult::Centered;
            }
            // Barrier values are compared directly; the objective change is
            // formed analytically so large t does not drown it in rounding.
            let mut alpha = 1.0;
            let mut accepted = false;
            for _ in 0..60 {
                let cand: Vec<f64> = z.iter().zip(&dz).map(|(a, b)| a + alpha * b).collect();
                if cand == *z {
                    break;
                }
                let slack = phase1.then(|| cand[d]);
                if let Some(bc) = self.red.barrier(&cand[..d], slack, None) {
                    let df = t * self.objective_delta(z, &dz, alpha, phase1);
                    if df + (bc - b0) <= 0.25 * alpha * slope {
                        *z = cand;
                        accepted = true;
                        break;
                    }
                }
                alpha *= 0.5;
            }
            // Tiny accepted steps mean the direction is rounding noise: near
            // the center that is as good as converged, elsewhere a failure.
            if accepted && alpha < 1e-4 {
                if lambda2 < STALL_CENTERED {
                    return CenterResult::Centered;
                }
                return CenterResult::Failed("Newton progress stalled".into());
            }
            if !accepted {
                // Rounding noise near the center; the decrement is already tiny.
                if lambda2 < STALL_CENTERED {
                    return CenterResult::Centered;
                }
                return CenterResult::Failed("line search stalled".into());
            }
            if phase1 && z[d] < 0.0 {
                return CenterResult::EarlyStop;
            }
        }
    }

    fn newton_direction(&self, h: &[f64], g: &[f64], dd: usize) -> Option<Vec<f64>> {
        // Symmetric diagonal scaling D H D keeps the factorization accurate
        // when barrier curvatures differ by many orders of magnitude.
        let scale: Vec<f64> = (0..dd)
            .map(|i| {
                let d = h[i * dd + i];
                if d > 0.0 {
                    1.0 / d.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        let mut hm = DMatrix::from_fn(dd, dd, |r, c| h[r * dd + c] * scale[r] * scale[c]);
        let chol = match Cholesky::new(hm.clone()) {
            Some(c) => c,
            None => {
                for i in 0..dd {
                    hm[(i, i)] += 1e-12;
                }
                Cholesky::new(hm)?
            }
        };
        let mut dy = chol.solve(&DVector::from_fn(dd, |i, _| -g[i] * scale[i]));
        if let Some(e) = &self.eq_matrix {
            let p = e.nrows();
            let es = DMatrix::from_fn(p, dd, |r, i| if i < e.ncols() { e[(r, i)] * scale[i] } else { 0.0 });
            let ys = chol.solve(&es.transpose());
            let schur = &es * &ys;
            // E dy must vanish: correct along H⁻¹Eᵀ.
            let rhs = &es * &dy;
            let w = match Cholesky::new(schur.clone()) {
                Some(c) => c.solve(&rhs),
                None => schur.lu().solve(&rhs)?,
            };
            dy -= ys * w;
        }
        Some((0..dd).map(|i| dy[i] * scale[i]).collect())
    }
}

fn equality_matrix(red: &Reduced) -> Option<DMatrix<f64>> {
    if red.eq.is_empty() {
        return None;
    }
    let mut e = DMatrix::zeros(red.eq.len(), red.dim());
    for (r, row) in red.eq.iter().enumerate() {
        for &(i, a) in &row.terms {
            e[(r, i)] += a;
        }
    }
    Some(e)
}

/// Least-norm correction of `z` onto the equality rows.
fn project_equalities(red: &Reduced, z: &mut [f64]) {
    let p = red.eq.len();
    if p == 0 {
        return;
    }
    let d = red.dim();
    let mut e: DMatrix<f64> = DMatrix::zeros(p, d);
    let mut resid = DVector::zeros(p);
    for (r, row) in red.eq.iter().enumerate() {
        let mut lhs = 0.0;
        for &(i, a) in &row.terms {
            e[(r, i)] += a;
            lhs += a * z[i];
        }
        resid[r] = lhs - row.rhs;
    }
    if resid.amax() == 0.0 {
        return;
    }
    let eet = &e * e.transpose();
    let Ok(pinv) = eet.pseudo_inverse(1e-14) else {
        return;
    };
    let corr = e.transpose() * (pinv * resid);
    for i in 0..d {
        z[i] -= corr[i];
    }
}

pub fn solve_conic(program: &ConicProgram, settings: &BarrierSettings) -> ConicOutcome {
    let red = match Reduced::from_program(program) {
        Reduction::Ok(r) => r,
        Reduction::Infeasible => return ConicOutcome::Infeasible,
    };
    let d = red.dim();
    // Starting point: box midpoints for bounded coordinates, zero elsewhere.
    let mut z = vec![0.0; d];
    for (k, &j) in red.free.iter().enumerate() {
        let (lo, hi) = (program.lower[j], program.upper[j]);
        z[k] = match (lo.is_finite(), hi.is_finite()) {
            (true, true) => 0.5 * (lo + hi),
            (true, false) => lo + 1.0,
            (false, true) => hi - 1.0,
            (false, false) => 0.0,
        };
    }
    project_equalities(&red, &mut z);
    let mut solver = Solver {
        red: &red,
        eq_matrix: equality_matrix(&red),
        settings,
        newton_steps: 0,
    };

    if d == 0 {
        return if red.max_residual(&z) <= 1e-9 && red.eq.is_empty() {
            let x = red.expand(&z);
            ConicOutcome::Optimal {
                objective: program.objective_at(&x),
                x,
                gap: 0.0,
            }
        } else {
            ConicOutcome::Infeasible
        };
    }

    // Phase I.
    if !(red.max_residual(&z) < 0.0) {
        let theta1 = red.theta() + 1.0;
        let mut zr = z.clone();
        zr.push(red.max_residual(&z).max(0.0) + 1.0);
        let mut t = 1.0;
        loop {
            match solver.center(&mut zr, t, true) {
                CenterResult::EarlyStop => break,
                CenterResult::Failed(m) => return ConicOutcome::Failure(format!("phase I: {m}")),
                CenterResult::Centered => {}
            }
            let r = zr[d];
            if r < 0.0 {
                break;
            }
            let bound = theta1 / t;
            if r - bound > 0.0 || bound < 1e-12 {
                return ConicOutcome::Infeasible;
            }
            t *= settings.mu;
        }
        zr.truncate(d);
        z = zr;
    }

    // Phase II.
    let theta = red.theta();
    let mut t = 1.0;
    let mut centered_gap = f64::INFINITY;
    loop {
        let f = red.objective(&z);
        match solver.center(&mut z, t, false) {
            CenterResult::Centered | CenterResult::EarlyStop => {}
            // Past a certain t the Newton systems lose accuracy; a point that
            // was already well centered at the previous t is good enough.
            CenterResult::Failed(m) => {
                if centered_gap <= settings.fallback_gap_rel * f.abs().max(1.0) {
                    return optimal(program, &red, &z, centered_gap);
                }
                return ConicOutcome::Failure(format!("phase II: {m}"));
            }
        }
        let f = red.objective(&z);
        centered_gap = theta / t;
        if centered_gap <= settings.gap_rel * f.abs().max(1.0) {
            return optimal(program, &red, &z, centered_gap);
        }
        t *= settings.mu;
    }
}

fn optimal(program: &ConicProgram, red: &Reduced, z: &[f64], gap: f64) -> ConicOutcome {
    let x = red.expand(z);
    ConicOutcome::Optimal {
        objective: program.objective_at(&x),
        x,
        gap,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Sense;
    use crate::relax::{ConicProgram, LinearRow, QuadraticCap, SocConstraint};

    fn base(n: usize) -> ConicProgram {
        ConicProgram {
            sense: Sense::Minimize,
            num_binary: 0,
            num_continuous: n,
            lower: vec![f64::NEG_INFINITY; n],
            upper: vec![f64::INFINITY; n],
            linear_objective: vec![0.0; n],
            quadratic_objective: vec![0.0; n],
            rows: vec![],
            cones: vec![],
            caps: vec![],
        }
    }

    fn optimal(o: ConicOutcome) -> (Vec<f64>, f64) {
        match o {
            ConicOutcome::Optimal { x, objective, .. } => (x, objective),
            other => panic!("expected optimal, got {other:?}"),
        }
    }

    #[test]
    fn projection_onto_cone() {
        // minimize (x - 3)² + (y - 4)² ... expressed as min x² + y² - 6x - 8y
        // subject to ‖(x, y)‖ ≤ 1 → (0.6, 0.8).
        let mut p = base(2);
        p.quadratic_objective = vec![1.0, 1.0];
        p.linear_objective = vec![-6.0, -8.0];
        p.cones.push(SocConstraint {
            rows: vec![(vec![(0, 1.0)], 0.0), (vec![(1, 1.0)], 0.0)],
            head: vec![],
            head_offset: 1.0,
        });
        let (x, obj) = optimal(solve_conic(&p, &BarrierSettings::default()));
        assert!((x[0] - 0.6).abs() < 1e-7 && (x[1] - 0.8).abs() < 1e-7, "{x:?}");
        assert!((obj - (1.0 - 3.6 - 6.4)).abs() < 1e-7);
    }

    #[test]
    fn equality_and_cap() {
        // minimize -x - y s.t. x² + y² ≤ 2, x = y → (1, 1).
        let mut p = base(2);
        p.linear_objective = vec![-1.0, -1.0];
        p.rows.push(LinearRow {
            terms: vec![(0, 1.0), (1, -1.0)],
            op: CmpOp::Eq,
            rhs: 0.0,
        });
        p.caps.push(QuadraticCap {
            group: vec![0, 1],
            binary: None,
            scale: 0.0,
            constant: 2.0,
        });
        let (x, obj) = optimal(solve_conic(&p, &BarrierSettings::default()));
        assert!((x[0] - 1.0).abs() < 1e-7 && (x[1] - 1.0).abs() < 1e-7);
        assert!((obj + 2.0).abs() < 1e-7);
    }

    #[test]
    fn zero_cap_pins_group() {
        let mut p = base(2);
        p.quadratic_objective = vec![1.0, 1.0];
        p.caps.push(QuadraticCap {
            group: vec![0],
            binary: None,
            scale: 0.0,
            constant: 0.0,
        });
        p.rows.push(LinearRow {
            terms: vec![(0, 1.0), (1, 1.0)],
            op: CmpOp::Ge,
            rhs: 1.0,
        });
        let (x, _) = optimal(solve_conic(&p, &BarrierSettings::default()));
        assert_eq!(x[0], 0.0);
        assert!((x[1] - 1.0).abs() < 1e-7);
        p.rows.push(LinearRow {
            terms: vec![(0, 1.0)],
            op: CmpOp::Ge,
            rhs: 0.5,
        });
        assert_eq!(solve_conic(&p, &BarrierSettings::default()), ConicOutcome::Infeasible);
    }

    #[test]
    fn infeasible_cone() {
        // ‖x‖ ≤ 1 and x ≥ 2
        let mut p = base(1);
        p.linear_objective = vec![1.0];
        p.cones.push(SocConstraint {
            rows: vec![(vec![(0, 1.0)], 0.0)],
            head: vec![],
            head_offset: 1.0,
        });
        p.rows.push(LinearRow {
            terms: vec![(0, 1.0)],
            op: CmpOp::Ge,
            rhs: 2.0,
        });
        assert_eq!(solve_conic(&p, &BarrierSettings::default()), ConicOutcome::Infeasible);
    }
}

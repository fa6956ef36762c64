//! Brute-force reference solvers shared by the integration tests.
#![allow(dead_code)]

use learn2prune::bnb::Label;
use learn2prune::mlp::{loss_gradient, one_hot, weighted_cross_entropy, MlpParams};
use learn2prune::model::{evaluate_assignment, Assignment, CmpOp, ConstraintSpec, MinlpInstance};
use learn2prune::relax::simplex::{LpProblem, LpRow};
use learn2prune::relax::{build_relaxation, solve_relaxation, Fixings, RelaxStatus};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Optimal value and assignment found by enumeration.
#[derive(Debug, Clone)]
pub struct Enumerated {
    pub objective: f64,
    pub assignment: Assignment,
}

fn bits(mask: u64, n: usize) -> Vec<u8> {
    (0..n).map(|i| ((mask >> i) & 1) as u8).collect()
}

/// Exhaustive search over every binary pattern of a toy MILP with at most one
/// continuous variable. With the binaries fixed, each linear row bounds the
/// continuous variable to a half-line, so the remaining problem is a 1-D
/// interval optimization solved in closed form.
pub fn enumerate_toy(inst: &MinlpInstance) -> Option<Enumerated> {
    assert!(
        inst.num_continuous <= 1,
        "oracle handles at most one continuous variable"
    );
    assert!(inst.num_binary <= 20);
    let mut best: Option<Enumerated> = None;
    for mask in 0..(1u64 << inst.num_binary) {
        let a = bits(mask, inst.num_binary);
        let Some((value, cont)) = solve_fixed_toy(inst, &a) else {
            continue;
        };
        let better = match &best {
            None => true,
            Some(b) => inst.sense.better(value, b.objective),
        };
        if better {
            best = Some(Enumerated {
                objective: value,
                assignment: Assignment {
                    binaries: a,
                    continuous: cont,
                },
            });
        }
    }
    best
}

fn solve_fixed_toy(inst: &MinlpInstance, a: &[u8]) -> Option<(f64, Vec<f64>)> {
    let mut lo = f64::NEG_INFINITY;
    let mut hi = f64::INFINITY;
    let slack = 1e-9;
    for c in &inst.constraints {
        let ConstraintSpec::Linear {
            binary,
            continuous,
            op,
            rhs,
        } = c
        else {
            panic!("toy instances are linear");
        };
        let fixed: f64 = binary.iter().map(|&(i, v)| v * f64::from(a[i])).sum();
        let coef: f64 = continuous.iter().map(|&(_, v)| v).sum();
        let r = rhs - fixed;
        if coef == 0.0 {
            let ok = match op {
                CmpOp::Le => 0.0 <= r + slack,
                CmpOp::Ge => 0.0 >= r - slack,
                CmpOp::Eq => r.abs() <= slack,
            };
            if !ok {
                return None;
            }
            continue;
        }
        let t = r / coef;
        match (op, coef > 0.0) {
            (CmpOp::Le, true) | (CmpOp::Ge, false) => hi = hi.min(t),
            (CmpOp::Ge, true) | (CmpOp::Le, false) => lo = lo.max(t),
            (CmpOp::Eq, _) => {
                lo = lo.max(t);
                hi = hi.min(t);
            }
        }
    }
    if inst.num_continuous == 0 {
        let bins: Vec<f64> = a.iter().map(|&b| f64::from(b)).collect();
        return Some((inst.objective_value(&bins, &[]), vec![]));
    }
    if lo > hi + slack {
        return None;
    }
    assert!(lo.is_finite() && hi.is_finite(), "continuous variable must be boxed");
    let hi = hi.max(lo);
    let bins: Vec<f64> = a.iter().map(|&b| f64::from(b)).collect();
    // The objective is convex (minimize) or concave (maximize) in w with the
    // quadratic term, so the optimum is an endpoint or the stationary point.
    let mut candidates = vec![lo, hi];
    let q = inst.objective.continuous_quadratic[0];
    if q != 0.0 {
        let w = -inst.objective.continuous_linear[0] / (2.0 * q);
        if w > lo && w < hi {
            candidates.push(w);
        }
    }
    candidates
        .into_iter()
        .map(|w| (inst.objective_value(&bins, &[w]), vec![w]))
        .reduce(|x, y| if inst.sense.better(y.0, x.0) { y } else { x })
}

/// Exhaustive search over the RRH activation patterns of a Cloud-RAN
/// instance. Each pattern fixes every binary, so the remaining problem is the
/// convex beamforming program, solved on its own.
pub fn enumerate_fixed_patterns(inst: &MinlpInstance) -> Option<Enumerated> {
    assert!(inst.num_binary <= 16);
    let mut best: Option<Enumerated> = None;
    for mask in 0..(1u64 << inst.num_binary) {
        let a = bits(mask, inst.num_binary);
        let pairs: Vec<(usize, u8)> = a.iter().copied().enumerate().collect();
        let fixings = Fixings::from_pairs(&pairs).unwrap();
        let r = solve_relaxation(&build_relaxation(inst, &fixings).unwrap()).unwrap();
        if r.status != RelaxStatus::Optimal {
            continue;
        }
        let value = r.objective.unwrap();
        let better = match &best {
            None => true,
            Some(b) => inst.sense.better(value, b.objective),
        };
        if better {
            best = Some(Enumerated {
                objective: value,
                assignment: Assignment {
                    binaries: a,
                    continuous: r.values.continuous,
                },
            });
        }
    }
    best
}

/// Relative difference scaled by `max(1, |b|)`.
pub fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

/// Checks an enumerated optimum against the model's own feasibility test.
pub fn certify(inst: &MinlpInstance, e: &Enumerated, tol: f64) {
    let ev = evaluate_assignment(inst, &e.assignment).unwrap();
    let worst = ev.violations.iter().map(|v| v.amount).fold(0.0, f64::max);
    assert!(worst <= tol, "enumerated optimum violates a constraint by {worst}");
    assert!(rel_diff(ev.objective, e.objective) < 1e-9);
}

/// Minimum of a bounded LP by enumerating every basis: each choice of `n`
/// tight constraints (rows or bounds) whose system is nonsingular gives a
/// candidate vertex, kept when it satisfies everything else.
pub fn lp_vertex_minimum(lp: &LpProblem) -> Option<f64> {
    let n = lp.cost.len();
    let mut planes: Vec<(Vec<f64>, f64)> = lp.rows.iter().map(|r: &LpRow| (r.coeffs.clone(), r.rhs)).collect();
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        planes.push((e.clone(), lp.lower[j]));
        planes.push((e, lp.upper[j]));
    }
    let feasible = |x: &[f64]| {
        let tol = 1e-7;
        lp.rows.iter().all(|r| {
            let lhs: f64 = r.coeffs.iter().zip(x).map(|(a, b)| a * b).sum();
            match r.op {
                CmpOp::Le => lhs <= r.rhs + tol,
                CmpOp::Ge => lhs >= r.rhs - tol,
                CmpOp::Eq => (lhs - r.rhs).abs() <= tol,
            }
        }) && x
            .iter()
            .enumerate()
            .all(|(j, &v)| v >= lp.lower[j] - tol && v <= lp.upper[j] + tol)
    };
    let mut best: Option<f64> = None;
    let mut choose = vec![0usize; n];
    combos(planes.len(), n, 0, 0, &mut choose, &mut |idx| {
        let a = nalgebra::DMatrix::from_fn(n, n, |r, c| planes[idx[r]].0[c]);
        let b = nalgebra::DVector::from_fn(n, |r, _| planes[idx[r]].1);
        if a.determinant().abs() < 1e-9 {
            return;
        }
        let Some(x) = a.lu().solve(&b) else { return };
        let x: Vec<f64> = x.iter().copied().collect();
        if x.iter().any(|v| !v.is_finite()) || !feasible(&x) {
            return;
        }
        let obj: f64 = lp.cost.iter().zip(&x).map(|(c, v)| c * v).sum();
        best = Some(best.map_or(obj, |b: f64| b.min(obj)));
    });
    best
}

fn combos(m: usize, k: usize, start: usize, depth: usize, pick: &mut Vec<usize>, f: &mut dyn FnMut(&[usize])) {
    if depth == k {
        f(pick);
        return;
    }
    for i in start..m {
        pick[depth] = i;
        combos(m, k, i + 1, depth + 1, pick, f);
    }
}

fn param_mut(p: &mut MlpParams, layer: usize, bias: bool, i: usize) -> &mut f64 {
    if bias {
        &mut p.biases[layer][i]
    } else {
        &mut p.weights[layer][i]
    }
}

/// Central-difference check of every parameter of a random network.
pub fn gradient_check(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dims = [
        rng.random_range(2..6),
        rng.random_range(2..6),
        rng.random_range(2..5),
        2,
    ];
    let mut p = MlpParams::glorot(&dims, seed).unwrap();
    for b in p.biases.iter_mut().flatten() {
        *b = rng.random_range(-0.5..0.5);
    }
    let x: Vec<f64> = (0..dims[0]).map(|_| rng.random_range(-2.0..2.0)).collect();
    let y = one_hot(if seed.is_multiple_of(2) { Label::Prune } else { Label::Preserve });
    let w = [rng.random_range(0.2..2.0), rng.random_range(0.2..2.0)];
    let loss = |p: &MlpParams| weighted_cross_entropy(&p.forward(&x).unwrap(), &y, &w);
    let (_, g) = loss_gradient(&p, &x, &y, &w).unwrap();
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for k in 0..p.weights.len() {
        for (is_bias, n) in [(false, p.weights[k].len()), (true, p.biases[k].len())] {
            for i in 0..n {
                let mut plus = p.clone();
                let mut minus = p.clone();
                *param_mut(&mut plus, k, is_bias, i) += h;
                *param_mut(&mut minus, k, is_bias, i) -= h;
                let numeric = (loss(&plus) - loss(&minus)) / (2.0 * h);
                let analytic = if is_bias { g.biases[k][i] } else { g.weights[k][i] };
                let err = (numeric - analytic).abs() / analytic.abs().max(numeric.abs()).max(1e-3);
                worst = worst.max(err);
            }
        }
    }
    worst
}

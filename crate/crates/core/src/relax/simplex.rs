//! Dense two-phase tableau simplex with Bland's anti-cycling rule.

use crate::model::CmpOp;

const EPS: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct LpRow {
    pub coeffs: Vec<f64>,
    pub op: CmpOp,
    pub rhs: f64,
}

/// `minimize c·x` subject to `rows` and `lower ≤ x ≤ upper`; bounds may be infinite.
#[derive(Debug, Clone)]
pub struct LpProblem {
    pub cost: Vec<f64>,
    pub rows: Vec<LpRow>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal { x: Vec<f64>, objective: f64 },
    Infeasible,
    Unbounded,
    IterationLimit,
}

/// How an original variable maps onto nonnegative tableau columns.
#[derive(Debug, Clone, Copy)]
enum VarMap {
    Fixed(f64),
    /// `x = lo + y`
    Shifted {
        col: usize,
        lo: f64,
    },
    /// `x = hi - y`
    Mirrored {
        col: usize,
        hi: f64,
    },
    /// `x = y⁺ - y⁻`
    Split {
        pos: usize,
        neg: usize,
    },
}

struct Tableau {
    /// `m` constraint rows followed by the objective row, each `width` long;
    /// the last column is the right-hand side.
    data: Vec<f64>,
    width: usize,
    m: usize,
    basis: Vec<usize>,
}

impl Tableau {
    fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.width + c]
    }

    fn rhs(&self, r: usize) -> f64 {
        self.at(r, self.width - 1)
    }

    fn pivot(&mut self, pr: usize, pc: usize) {
        let w = self.width;
        let p = self.data[pr * w + pc];
        for c in 0..w {
            self.data[pr * w + c] /= p;
        }
        self.data[pr * w + pc] = 1.0;
        for r in 0..=self.m {
            if r == pr {
                continue;
            }
            let f = self.data[r * w + pc];
            if f == 0.0 {
                continue;
            }
            for c in 0..w {
                let v = self.data[pr * w + c];
                if v != 0.0 {
                    self.data[r * w + c] -= f * v;
                }
            }
            self.data[r * w + pc] = 0.0;
        }
        self.basis[pr] = pc;
    }

    /// Bland's rule on columns `< limit`. Returns false on unboundedness.
    fn optimize(&mut self, limit: usize, max_iter: usize) -> Result<bool, ()> {
        let obj = self.m;
        for _ in 0..max_iter {
            let entering = (0..limit).find(|&c| self.at(obj, c) < -EPS);
            let Some(pc) = entering else {
                return Ok(true);
            };
            let mut best: Option<(usize, f64)> = None;
            for r in 0..self.m {
                let a = self.at(r, pc);
                if a > EPS {
                    let ratio = self.rhs(r) / a;
                    best = match best {
                        None => Some((r, ratio)),
                        Some((br, bv)) => {
                            if ratio < bv - EPS || ((ratio - bv).abs() <= EPS && self.basis[r] < self.basis[br]) {
                                Some((r, ratio))
                            } else {
                                Some((br, bv))
                            }
                        }
                    };
                }
            }
            match best {
                None => return Ok(false),
                Some((pr, _)) => self.pivot(pr, pc),
            }
        }
        Err(())
    }
}

pub fn solve_lp(lp: &LpProblem, max_iter: usize) -> LpOutcome {
    let n = lp.cost.len();
    let mut maps = Vec::with_capacity(n);
    let mut ncols = 0usize;
    let mut bound_rows: Vec<(usize, f64)> = Vec::new();
    for j in 0..n {
        let (lo, hi) = (lp.lower[j], lp.upper[j]);
        if lo > hi + EPS {
            return LpOutcome::Infeasible;
        }
        let map = if lo.is_finite() && hi.is_finite() && (hi - lo).abs() <= EPS {
            VarMap::Fixed(lo)
        } else if lo.is_finite() {
            let col = ncols;
            ncols += 1;
            if hi.is_finite() {
                bound_rows.push((col, hi - lo));
            }
            VarMap::Shifted { col, lo }
        } else if hi.is_finite() {
            let col = ncols;
            ncols += 1;
            VarMap::Mirrored { col, hi }
        } else {
            let pos = ncols;
            ncols += 2;
            VarMap::Split { pos, neg: pos + 1 }
        };
        maps.push(map);
    }

    // Rows in terms of tableau columns.
    let mut rows: Vec<(Vec<f64>, CmpOp, f64)> = Vec::with_capacity(lp.rows.len() + bound_rows.len());
    for row in &lp.rows {
        let mut coeffs = vec![0.0; ncols];
        let mut rhs = row.rhs;
        for (j, &a) in row.coeffs.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            match maps[j] {
                VarMap::Fixed(v) => rhs -= a * v,
                VarMap::Shifted { col, lo } => {
                    coeffs[col] += a;
                    rhs -= a * lo;
                }
                VarMap::Mirrored { col, hi } => {
                    coeffs[col] -= a;
                    rhs -= a * hi;
                }
                VarMap::Split { pos, neg } => {
                    coeffs[pos] += a;
                    coeffs[neg] -= a;
                }
            }
        }
        if coeffs.iter().all(|&c| c.abs() <= EPS) {
            let ok = match row.op {
                CmpOp::Le => rhs >= -1e-7,
                CmpOp::Ge => rhs <= 1e-7,
                CmpOp::Eq => rhs.abs() <= 1e-7,
            };
            if !ok {
                return LpOutcome::Infeasible;
            }
            continue;
        }
        rows.push((coeffs, row.op, rhs));
    }
    for (col, ub) in bound_rows {
        let mut coeffs = vec![0.0; ncols];
        coeffs[col] = 1.0;
        rows.push((coeffs, CmpOp::Le, ub));
    }
    let mut cost = vec![0.0; ncols];
    for (j, &c) in lp.cost.iter().enumerate() {
        match maps[j] {
            VarMap::Fixed(_) => {}
            VarMap::Shifted { col, .. } => cost[col] += c,
            VarMap::Mirrored { col, .. } => cost[col] -= c,
            VarMap::Split { pos, neg } => {
                cost[pos] += c;
                cost[neg] -= c;
            }
        }
    }

    // Normalize to nonnegative right-hand sides.
    for (coeffs, op, rhs) in rows.iter_mut() {
        if *rhs < 0.0 {
            coeffs.iter_mut().for_each(|c| *c = -*c);
            *rhs = -*rhs;
            *op = match *op {
                CmpOp::Le => CmpOp::Ge,
                CmpOp::Ge => CmpOp::Le,
                CmpOp::Eq => CmpOp::Eq,
            };
        }
    }
    let m = rows.len();
    let n_slack = rows.iter().filter(|r| r.1 != CmpOp::Eq).count();
    let n_art = rows.iter().filter(|r| r.1 != CmpOp::Le).count();
    let art_start = ncols + n_slack;
    let width = art_start + n_art + 1;
    let mut t = Tableau {
        data: vec![0.0; (m + 1) * width],
        width,
        m,
        basis: vec![0; m],
    };
    let mut slack = ncols;
    let mut art = art_start;
    for (r, (coeffs, op, rhs)) in rows.iter().enumerate() {
        t.data[r * width..r * width + ncols].copy_from_slice(coeffs);
        t.data[r * width + width - 1] = *rhs;
        match op {
            CmpOp::Le => {
                t.data[r * width + slack] = 1.0;
                t.basis[r] = slack;
                slack += 1;
            }
            CmpOp::Ge => {
                t.data[r * width + slack] = -1.0;
                slack += 1;
                t.data[r * width + art] = 1.0;
                t.basis[r] = art;
                art += 1;
            }
            CmpOp::Eq => {
                t.data[r * width + art] = 1.0;
                t.basis[r] = art;
                art += 1;
            }
        }
    }

    // Phase I: minimize the artificial sum.
    if n_art > 0 {
        let obj = m * width;
        for c in art_start..art_start + n_art {
            t.data[obj + c] = 1.0;
        }
        for r in 0..m {
            if t.basis[r] >= art_start {
                for c in 0..width {
                    t.data[obj + c] -= t.data[r * width + c];
                }
            }
        }
        if t.optimize(art_start + n_art, max_iter).is_err() {
            return LpOutcome::IterationLimit;
        }
        if -t.rhs(m) > 1e-7 {
            return LpOutcome::Infeasible;
        }
        // Drive remaining artificials out of the basis.
        let mut r = 0;
        while r < t.m {
            if t.basis[r] >= art_start {
                if let Some(pc) = (0..art_start).find(|&c| t.at(r, c).abs() > EPS) {
                    t.pivot(r, pc);
                } else {
                    // Redundant row.
                    let w = t.width;
                    t.data.drain(r * w..(r + 1) * w);
                    t.basis.remove(r);
                    t.m -= 1;
                    continue;
                }
            }
            r += 1;
        }
    }

    // Phase II over structural and slack columns.
    let obj = t.m * width;
    for c in 0..width {
        t.data[obj + c] = 0.0;
    }
    t.data[obj..obj + ncols].copy_from_slice(&cost);
    for r in 0..t.m {
        let b = t.basis[r];
        let cb = t.data[obj + b];
        if cb != 0.0 {
            for c in 0..width {
                t.data[obj + c] -= cb * t.data[r * width + c];
            }
        }
    }
    match t.optimize(art_start, max_iter) {
        Err(()) => return LpOutcome::IterationLimit,
        Ok(false) => return LpOutcome::Unbounded,
        Ok(true) => {}
    }
    let mut y = vec![0.0; ncols];
    for r in 0..t.m {
        if t.basis[r] < ncols {
            y[t.basis[r]] = t.rhs(r);
        }
    }
    let x: Vec<f64> = maps
        .iter()
        .map(|m| match *m {
            VarMap::Fixed(v) => v,
            VarMap::Shifted { col, lo } => lo + y[col],
            VarMap::Mirrored { col, hi } => hi - y[col],
            VarMap::Split { pos, neg } => y[pos] - y[neg],
        })
        .collect();
    let objective = lp.cost.iter().zip(&x).map(|(c, v)| c * v).sum::<f64>();
    LpOutcome::Optimal { x, objective }
}

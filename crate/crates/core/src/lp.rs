//! Dense revised simplex.
//!
//! Two-phase method on `min cᵀx, Ax = b, x ≥ 0` with an explicit basis
//! inverse, refactored periodically. Pricing is Dantzig's rule until a run of
//! degenerate pivots is seen, after which Bland's rule takes over; that keeps
//! the solver cycle-free on the highly degenerate transport instances.
//!
//! Every solution carries the optimal duals and the residuals of the
//! optimality conditions so callers can re-verify it.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const PIVOT_TOL: f64 = 1e-9;
const REFACTOR_EVERY: usize = 40;
const DEGENERATE_RUN: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

/// Residuals of the optimality conditions at a returned solution.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LpResiduals {
    /// max |Ax − b| and max(0, −x).
    pub primal: f64,
    /// max(0, −(c − Aᵀy)).
    pub dual: f64,
    /// max |x_j (c − Aᵀy)_j|.
    pub complementarity: f64,
    /// |cᵀx − bᵀy|.
    pub gap: f64,
}

impl LpResiduals {
    pub fn max(&self) -> f64 {
        self.primal
            .max(self.dual)
            .max(self.complementarity)
            .max(self.gap)
    }
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    /// Duals with c − Aᵀy ≥ 0 at optimality.
    pub y: Vec<f64>,
    pub objective: f64,
    pub residuals: LpResiduals,
    pub iterations: usize,
}

/// `min cᵀx` subject to `Ax = b`, `x ≥ 0`.
#[derive(Debug, Clone)]
pub struct StandardLp {
    pub a: DMatrix<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
}

impl StandardLp {
    pub fn solve(&self) -> Result<LpSolution> {
        let m = self.a.nrows();
        let n = self.a.ncols();
        if self.b.len() != m || self.c.len() != n {
            return Err(Error::Structural("LP shape mismatch".into()));
        }
        // Orient rows so b ≥ 0.
        let mut a = self.a.clone();
        let mut b = self.b.clone();
        let mut flip = vec![1.0; m];
        for i in 0..m {
            if b[i] < 0.0 {
                flip[i] = -1.0;
                b[i] = -b[i];
                for j in 0..n {
                    a[(i, j)] = -a[(i, j)];
                }
            }
        }
        // Columns n..n+m are artificials.
        let total = n + m;
        let full = {
            let mut f = DMatrix::zeros(m, total);
            f.view_mut((0, 0), (m, n)).copy_from(&a);
            for i in 0..m {
                f[(i, n + i)] = 1.0;
            }
            f
        };
        let mut state = Tableau {
            a: full,
            b: DVector::from_vec(b.clone()),
            basis: (n..total).collect(),
            binv: DMatrix::identity(m, m),
            xb: DVector::from_vec(b.clone()),
            structural: n,
            iterations: 0,
        };
        let phase1: Vec<f64> = (0..total).map(|j| if j >= n { 1.0 } else { 0.0 }).collect();
        match state.run(&phase1, true)? {
            LpStatus::Optimal => {}
            s => return Err(Error::Internal(format!("phase I ended with {s:?}"))),
        }
        let infeas: f64 = state
            .basis
            .iter()
            .zip(state.xb.iter())
            .filter(|(j, _)| **j >= n)
            .map(|(_, v)| *v)
            .sum();
        let bscale = 1.0 + b.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if infeas > 1e-8 * bscale {
            return Ok(LpSolution {
                status: LpStatus::Infeasible,
                x: vec![],
                y: vec![],
                objective: f64::NAN,
                residuals: LpResiduals::default(),
                iterations: state.iterations,
            });
        }
        state.drive_out_artificials();

        let mut phase2 = self.c.clone();
        phase2.extend(std::iter::repeat_n(0.0, m));
        let status = state.run(&phase2, false)?;
        if status == LpStatus::Unbounded {
            return Ok(LpSolution {
                status,
                x: vec![],
                y: vec![],
                objective: f64::NEG_INFINITY,
                residuals: LpResiduals::default(),
                iterations: state.iterations,
            });
        }

        let mut x = vec![0.0; n];
        for (r, &j) in state.basis.iter().enumerate() {
            if j < n {
                x[j] = state.xb[r].max(0.0);
            }
        }
        let cb = DVector::from_iterator(m, state.basis.iter().map(|&j| phase2[j]));
        let y_oriented = state.binv.transpose() * cb;
        let y: Vec<f64> = (0..m).map(|i| y_oriented[i] * flip[i]).collect();
        let objective = self.c.iter().zip(&x).map(|(c, x)| c * x).sum();
        let residuals = self.residuals(&x, &y);
        Ok(LpSolution {
            status: LpStatus::Optimal,
            x,
            y,
            objective,
            residuals,
            iterations: state.iterations,
        })
    }

    /// Residuals of the optimality conditions for a primal/dual pair.
    pub fn residuals(&self, x: &[f64], y: &[f64]) -> LpResiduals {
        let m = self.a.nrows();
        let n = self.a.ncols();
        let mut r = LpResiduals::default();
        for i in 0..m {
            let ax: f64 = (0..n).map(|j| self.a[(i, j)] * x[j]).sum();
            r.primal = r.primal.max((ax - self.b[i]).abs());
        }
        for j in 0..n {
            r.primal = r.primal.max(-x[j]);
            let red = self.c[j] - (0..m).map(|i| self.a[(i, j)] * y[i]).sum::<f64>();
            r.dual = r.dual.max(-red);
            r.complementarity = r.complementarity.max((x[j] * red).abs());
        }
        let cx: f64 = self.c.iter().zip(x).map(|(c, x)| c * x).sum();
        let by: f64 = self.b.iter().zip(y).map(|(b, y)| b * y).sum();
        r.gap = (cx - by).abs();
        r
    }
}

struct Tableau {
    a: DMatrix<f64>,
    b: DVector<f64>,
    basis: Vec<usize>,
    binv: DMatrix<f64>,
    xb: DVector<f64>,
    structural: usize,
    iterations: usize,
}

impl Tableau {
    fn refactor(&mut self) -> Result<()> {
        let m = self.basis.len();
        let bmat = DMatrix::from_fn(m, m, |i, k| self.a[(i, self.basis[k])]);
        self.binv = bmat
            .try_inverse()
            .ok_or_else(|| Error::Internal("singular simplex basis".into()))?;
        self.xb = &self.binv * &self.b;
        Ok(())
    }

    fn run(&mut self, cost: &[f64], phase1: bool) -> Result<LpStatus> {
        let m = self.basis.len();
        let total = self.a.ncols();
        let mut in_basis = vec![false; total];
        for &j in &self.basis {
            in_basis[j] = true;
        }
        let mut degenerate_run = 0usize;
        // columns whose ray test failed on a fresh factorization; in phase I
        // that can only be rounding, so they sit out until the next pivot
        let mut blocked = vec![false; total];
        let max_iter = 50_000 + 50 * (m + total);
        let mut since_refactor = 1usize;
        for _ in 0..max_iter {
            if since_refactor >= REFACTOR_EVERY {
                self.refactor()?;
                since_refactor = 0;
            }
            let cb = DVector::from_iterator(m, self.basis.iter().map(|&j| cost[j]));
            let y = self.binv.transpose() * cb;
            let cscale = 1.0 + cost.iter().fold(0.0f64, |s, c| s.max(c.abs()));
            let bland = degenerate_run >= DEGENERATE_RUN;
            let mut entering: Option<(usize, f64)> = None;
            for j in 0..total {
                if in_basis[j] || blocked[j] || (!phase1 && j >= self.structural) {
                    continue;
                }
                let red = cost[j] - self.a.column(j).dot(&y);
                if red < -PIVOT_TOL * cscale {
                    match entering {
                        None => entering = Some((j, red)),
                        Some((_, best)) if !bland && red < best => entering = Some((j, red)),
                        _ => {}
                    }
                    if bland {
                        break;
                    }
                }
            }
            let Some((enter, _)) = entering else {
                return Ok(LpStatus::Optimal);
            };
            let d = &self.binv * self.a.column(enter);
            let dscale = d.amax().max(1.0);
            let mut leave: Option<(usize, f64)> = None;
            for r in 0..m {
                if d[r] > PIVOT_TOL * dscale {
                    let ratio = self.xb[r].max(0.0) / d[r];
                    match leave {
                        None => leave = Some((r, ratio)),
                        Some((lr, best)) => {
                            let tie = (ratio - best).abs() <= 1e-12 * (1.0 + best.abs());
                            if ratio < best && !tie
                                || tie && self.basis[r] < self.basis[lr]
                            {
                                leave = Some((r, ratio));
                            }
                        }
                    }
                }
            }
            let Some((row, step)) = leave else {
                if since_refactor > 0 {
                    self.refactor()?;
                    since_refactor = 0;
                    continue;
                }
                if phase1 {
                    blocked[enter] = true;
                    continue;
                }
                return Ok(LpStatus::Unbounded);
            };
            blocked.iter_mut().for_each(|b| *b = false);
            if step <= 1e-14 {
                degenerate_run += 1;
            } else {
                degenerate_run = 0;
            }
            self.pivot(row, enter, &d);
            in_basis[self.basis[row]] = false;
            in_basis[enter] = true;
            self.basis[row] = enter;
            self.iterations += 1;
            since_refactor += 1;
        }
        Err(Error::Internal("simplex iteration limit reached".into()))
    }

    fn pivot(&mut self, row: usize, _enter: usize, d: &DVector<f64>) {
        let m = self.basis.len();
        let piv = d[row];
        let step = self.xb[row] / piv;
        for r in 0..m {
            if r != row {
                self.xb[r] -= d[r] * step;
            }
        }
        self.xb[row] = step;
        let prow = self.binv.row(row) / piv;
        for r in 0..m {
            if r != row && d[r] != 0.0 {
                let f = d[r];
                for k in 0..m {
                    self.binv[(r, k)] -= f * prow[k];
                }
            }
        }
        self.binv.set_row(row, &prow);
    }

    /// Pivots zero-valued artificials out of the basis where possible; rows
    /// where this fails are redundant and keep their artificial at zero.
    fn drive_out_artificials(&mut self) {
        let m = self.basis.len();
        for r in 0..m {
            if self.basis[r] < self.structural {
                continue;
            }
            let row = self.binv.row(r) * &self.a;
            let mut best: Option<(usize, f64)> = None;
            for j in 0..self.structural {
                if self.basis.contains(&j) {
                    continue;
                }
                let v = row[j].abs();
                if v > 1e-7 && best.is_none_or(|(_, b)| v > b) {
                    best = Some((j, v));
                }
            }
            if let Some((j, _)) = best {
                let d = &self.binv * self.a.column(j);
                self.pivot(r, j, &d);
                self.basis[r] = j;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Minimize,
    Maximize,
}

/// LP over variables that are either nonnegative or free, with ≤/≥/= rows.
#[derive(Debug, Clone)]
pub struct LpBuilder {
    sense: Sense,
    objective: Vec<f64>,
    free: Vec<bool>,
    rows: Vec<(Vec<(usize, f64)>, Relation, f64)>,
}

/// Solution in terms of the builder's variables and rows.
#[derive(Debug, Clone)]
pub struct GeneralSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    /// One multiplier per row, sign convention of the original sense: for a
    /// maximization, objective = Σ rhs_i · dual_i with dual_i ≥ 0 on ≤ rows.
    pub duals: Vec<f64>,
    pub objective: f64,
    pub residuals: LpResiduals,
}

impl LpBuilder {
    pub fn new(sense: Sense) -> Self {
        LpBuilder {
            sense,
            objective: vec![],
            free: vec![],
            rows: vec![],
        }
    }

    pub fn add_var(&mut self, cost: f64, free: bool) -> usize {
        self.objective.push(cost);
        self.free.push(free);
        self.objective.len() - 1
    }

    pub fn add_row(&mut self, coeffs: Vec<(usize, f64)>, rel: Relation, rhs: f64) -> usize {
        self.rows.push((coeffs, rel, rhs));
        self.rows.len() - 1
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn solve(&self) -> Result<GeneralSolution> {
        let nv = self.objective.len();
        // column layout: x⁺ for each var, x⁻ for free vars, then slacks
        let mut col_of_neg = vec![None; nv];
        let mut ncols = nv;
        for v in 0..nv {
            if self.free[v] {
                col_of_neg[v] = Some(ncols);
                ncols += 1;
            }
        }
        let mut slack_of = vec![None; self.rows.len()];
        for (i, (_, rel, _)) in self.rows.iter().enumerate() {
            if *rel != Relation::Eq {
                slack_of[i] = Some(ncols);
                ncols += 1;
            }
        }
        let m = self.rows.len();
        let mut a = DMatrix::zeros(m, ncols);
        let mut b = vec![0.0; m];
        for (i, (coeffs, rel, rhs)) in self.rows.iter().enumerate() {
            for &(v, c) in coeffs {
                a[(i, v)] += c;
                if let Some(nc) = col_of_neg[v] {
                    a[(i, nc)] -= c;
                }
            }
            match rel {
                Relation::Le => a[(i, slack_of[i].unwrap())] = 1.0,
                Relation::Ge => a[(i, slack_of[i].unwrap())] = -1.0,
                Relation::Eq => {}
            }
            b[i] = *rhs;
        }
        let sgn = match self.sense {
            Sense::Minimize => 1.0,
            Sense::Maximize => -1.0,
        };
        let mut c = vec![0.0; ncols];
        for v in 0..nv {
            c[v] = sgn * self.objective[v];
            if let Some(nc) = col_of_neg[v] {
                c[nc] = -sgn * self.objective[v];
            }
        }
        let lp = StandardLp { a, b, c };
        let sol = lp.solve()?;
        if sol.status != LpStatus::Optimal {
            return Ok(GeneralSolution {
                status: sol.status,
                x: vec![],
                duals: vec![],
                objective: f64::NAN,
                residuals: sol.residuals,
            });
        }
        let x: Vec<f64> = (0..nv)
            .map(|v| sol.x[v] - col_of_neg[v].map_or(0.0, |nc| sol.x[nc]))
            .collect();
        let duals: Vec<f64> = sol.y.iter().map(|y| sgn * y).collect();
        let objective = self.objective.iter().zip(&x).map(|(c, x)| c * x).sum();
        Ok(GeneralSolution {
            status: LpStatus::Optimal,
            x,
            duals,
            objective,
            residuals: sol.residuals,
        })
    }
}

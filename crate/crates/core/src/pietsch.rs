//! Two convex engines behind the exact tier at p = 2.
//!
//! [`domination`] solves min Σ_v w_v subject to Σ_v w_v v vᵀ ⪰ A_b for every
//! block b, over w ≥ 0 on a finite set of dual vectors v. It is a
//! semi-infinite LP: constraints x ↦ Σ w_v ⟨v,x⟩² ≥ xᵀA_b x are generated as
//! cuts from generalized eigenvectors. LP duals of the cuts form the
//! witness sequence for the lower side.
//!
//! [`design`] maximizes tr((Σ_g λ_g h_g h_gᵀ)^{1/2}) over the probability
//! simplex. Its optimum and the dual quantity sqrt(φ · max_g h_gᵀ H^{-1/2} h_g)
//! bracket the same number.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{max_generalized_eigen, sym_eigen};
use crate::lp::{LpBuilder, LpStatus, Relation, Sense};

/// Stop when the relative bracket width falls below this.
pub const DOMINATION_GAP: f64 = 1e-10;
/// Hard cap on cutting-plane rounds.
pub const DOMINATION_ROUNDS: usize = 200;
const STALL_ROUNDS: usize = 5;
const STALL_IMPROVEMENT: f64 = 1e-7;
/// Uniform mass mixed into the weights so the dominating matrix is
/// positive definite.
const MIX: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct Domination {
    /// Probability weights over the dual vectors.
    pub weights: Vec<f64>,
    /// Certified C with A_b ⪯ C² Σ w_v v vᵀ for all b.
    pub upper: f64,
    /// sqrt of the LP dual value; a lower bound for C.
    pub lower: f64,
    /// Witness x_j with Σ_j ⟨v, x_j⟩² ≤ 1 for all v, and
    /// Σ_j x_jᵀ A_{b_j} x_j = lower².
    pub witness: Vec<Vec<f64>>,
    pub witness_blocks: Vec<usize>,
    pub rounds: usize,
    pub converged: bool,
}

/// Solves the domination problem; `duals` must span the space.
pub fn domination(duals: &[Vec<f64>], blocks: &[DMatrix<f64>]) -> Result<Domination> {
    let n = blocks.first().map_or(0, |b| b.nrows());
    if n == 0 || blocks.iter().all(|b| b.amax() == 0.0) {
        return Ok(Domination {
            weights: vec![1.0 / duals.len().max(1) as f64; duals.len()],
            upper: 0.0,
            lower: 0.0,
            witness: vec![],
            witness_blocks: vec![],
            rounds: 0,
            converged: true,
        });
    }
    let vmat = DMatrix::from_fn(duals.len(), n, |i, j| duals[i][j]);
    let scale = blocks.iter().map(|b| b.amax()).fold(0.0, f64::max);
    let blocks: Vec<DMatrix<f64>> = blocks.iter().map(|b| b / scale).collect();

    let mut cuts: Vec<(DVector<f64>, usize)> = Vec::new();
    for (bi, a) in blocks.iter().enumerate() {
        let (vals, vecs) = sym_eigen(a);
        for (l, v) in vals.iter().zip(vecs) {
            if *l > 1e-12 * vals[0].max(1e-300) {
                cuts.push((v, bi));
            }
        }
    }
    for j in 0..n {
        let mut e = DVector::zeros(n);
        e[j] = 1.0;
        let best = best_block(&blocks, &e);
        if best.1 > 1e-14 {
            cuts.push((e, best.0));
        }
    }

    let mut best_upper = f64::INFINITY;
    let mut best_weights = vec![0.0; duals.len()];
    let mut best_lower = 0.0;
    let mut best_witness = (vec![], vec![]);
    let mut history: Vec<f64> = Vec::new();
    let mut rounds = 0;
    let mut converged = false;
    while rounds < DOMINATION_ROUNDS {
        rounds += 1;
        let (w, y) = solve_cut_lp(&vmat, &blocks, &cuts)?;
        // lower side from the LP duals
        let (lower_sq, wit, wit_b) = dual_witness(&vmat, &blocks, &cuts, &y);
        if lower_sq > best_lower {
            best_lower = lower_sq;
            best_witness = (wit, wit_b);
        }
        // upper side: certified constant for the mixed weights
        let total: f64 = w.iter().sum();
        let mixed: Vec<f64> = w
            .iter()
            .map(|x| (1.0 - MIX) * x / total + MIX / w.len() as f64)
            .collect();
        let b = gram(&vmat, &mixed);
        let mut worst = 0.0;
        let mut new_cuts = Vec::new();
        for (bi, a) in blocks.iter().enumerate() {
            let (l, x) = max_generalized_eigen(a, &b)
                .ok_or_else(|| Error::Internal("dominating matrix lost definiteness".into()))?;
            worst = f64::max(worst, l);
            if l > total * (1.0 + 1e-12) {
                new_cuts.push((x.normalize(), bi));
            }
        }
        let upper_sq = worst;
        if upper_sq < best_upper {
            best_upper = upper_sq;
            best_weights = mixed;
        }
        history.push(best_upper);
        if best_upper - best_lower <= DOMINATION_GAP * best_upper {
            converged = true;
            break;
        }
        if history.len() > STALL_ROUNDS {
            let old = history[history.len() - 1 - STALL_ROUNDS];
            if old - best_upper <= STALL_IMPROVEMENT * best_upper && rounds > 20 {
                break;
            }
        }
        let before = cuts.len();
        for c in new_cuts {
            if !cuts.iter().any(|(x, b)| *b == c.1 && (x.dot(&c.0).abs() - 1.0).abs() < 1e-13) {
                cuts.push(c);
            }
        }
        if cuts.len() == before {
            break;
        }
    }
    // upper_sq is max_b λ_max(A_b, B_mixed) = C² for the probability
    // weights, in scaled units
    Ok(Domination {
        weights: best_weights,
        upper: (best_upper * scale).sqrt() * (1.0 + 1e-12),
        lower: (best_lower * scale).sqrt(),
        witness: best_witness.0,
        witness_blocks: best_witness.1,
        rounds,
        converged,
    })
}

fn gram(vmat: &DMatrix<f64>, w: &[f64]) -> DMatrix<f64> {
    let n = vmat.ncols();
    let mut b = DMatrix::zeros(n, n);
    for (i, wi) in w.iter().enumerate() {
        if *wi != 0.0 {
            let v = vmat.row(i).transpose();
            b += &v * v.transpose() * *wi;
        }
    }
    b
}

fn best_block(blocks: &[DMatrix<f64>], x: &DVector<f64>) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, a) in blocks.iter().enumerate() {
        let q = (x.transpose() * a * x)[0];
        if q > best.1 {
            best = (i, q);
        }
    }
    best
}

/// min Σ w s.t. Σ_v w_v ⟨v,x_j⟩² ≥ x_jᵀ A x_j. Rows are normalized so the
/// right-hand side is 1. Returns primal weights and row duals.
fn solve_cut_lp(
    vmat: &DMatrix<f64>,
    blocks: &[DMatrix<f64>],
    cuts: &[(DVector<f64>, usize)],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut lp = LpBuilder::new(Sense::Minimize);
    let vars: Vec<usize> = (0..vmat.nrows()).map(|_| lp.add_var(1.0, false)).collect();
    for (x, bi) in cuts {
        let q = (x.transpose() * &blocks[*bi] * x)[0];
        let proj = vmat * x;
        let row: Vec<(usize, f64)> = vars
            .iter()
            .zip(proj.iter())
            .filter(|(_, p)| p.abs() > 0.0)
            .map(|(&v, p)| (v, p * p / q))
            .collect();
        lp.add_row(row, Relation::Ge, 1.0);
    }
    let sol = lp.solve()?;
    if sol.status != LpStatus::Optimal {
        return Err(Error::Internal(format!("domination LP reported {:?}", sol.status)));
    }
    let w = sol.x.iter().map(|x| x.max(0.0)).collect();
    let y = sol.duals.iter().map(|y| y.max(0.0)).collect();
    Ok((w, y))
}

/// Witness z_j = sqrt(y_j / q_j) x_j rescaled so max_v Σ ⟨v,z_j⟩² = 1.
fn dual_witness(
    vmat: &DMatrix<f64>,
    blocks: &[DMatrix<f64>],
    cuts: &[(DVector<f64>, usize)],
    y: &[f64],
) -> (f64, Vec<Vec<f64>>, Vec<usize>) {
    let mut zs = Vec::new();
    let mut bs = Vec::new();
    for ((x, bi), yj) in cuts.iter().zip(y) {
        if *yj <= 0.0 {
            continue;
        }
        let q = (x.transpose() * &blocks[*bi] * x)[0];
        zs.push(x * (yj / q).sqrt());
        bs.push(*bi);
    }
    if zs.is_empty() {
        return (0.0, vec![], vec![]);
    }
    let weak_sq = (0..vmat.nrows())
        .map(|i| {
            let v = vmat.row(i).transpose();
            zs.iter().map(|z| v.dot(z).powi(2)).sum::<f64>()
        })
        .fold(0.0, f64::max);
    let s = 1.0 / weak_sq.sqrt();
    let value: f64 = zs
        .iter()
        .zip(&bs)
        .map(|(z, b)| (z.transpose() * &blocks[*b] * z)[0] * s * s)
        .sum();
    (
        value,
        zs.iter().map(|z| z.iter().map(|v| v * s).collect()).collect(),
        bs,
    )
}

#[derive(Debug, Clone)]
pub struct Design {
    /// Probability weights over the generators.
    pub weights: Vec<f64>,
    /// φ(λ) = tr(H^{1/2}).
    pub lower: f64,
    /// sqrt(φ · max_g h_gᵀ H^{+1/2} h_g).
    pub upper: f64,
    pub iterations: usize,
}

pub const DESIGN_GAP: f64 = 1e-10;
pub const DESIGN_ITERATIONS: usize = 20_000;

/// φ(λ) = tr((Σ λ_g h_g h_gᵀ)^{1/2}).
pub fn design_value(h: &[DVector<f64>], weights: &[f64]) -> f64 {
    if h.is_empty() {
        return 0.0;
    }
    let k = h[0].len();
    let mut m = DMatrix::zeros(k, k);
    for (g, w) in h.iter().zip(weights) {
        m += g * g.transpose() * *w;
    }
    sym_eigen(&m).0.iter().map(|l| l.max(0.0).sqrt()).sum()
}

/// H^{+1/2}: pseudo-inverse square root.
pub fn inv_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let (vals, vecs) = sym_eigen(m);
    let top = vals.first().copied().unwrap_or(0.0).max(0.0);
    let mut out = DMatrix::zeros(m.nrows(), m.ncols());
    for (l, v) in vals.iter().zip(&vecs) {
        if *l > 1e-13 * top && *l > 0.0 {
            out += v * v.transpose() / l.sqrt();
        }
    }
    out
}

fn design_state(h: &[DVector<f64>], w: &[f64]) -> (f64, Vec<f64>) {
    let k = h[0].len();
    let mut m = DMatrix::zeros(k, k);
    for (g, wi) in h.iter().zip(w) {
        m += g * g.transpose() * *wi;
    }
    let (vals, _) = sym_eigen(&m);
    let phi: f64 = vals.iter().map(|l| l.max(0.0).sqrt()).sum();
    let is = inv_sqrt(&m);
    let q = h.iter().map(|g| (g.transpose() * &is * g)[0]).collect();
    (phi, q)
}

pub fn design(h: &[DVector<f64>]) -> Design {
    let live: Vec<usize> = (0..h.len()).filter(|&i| h[i].amax() > 0.0).collect();
    if live.is_empty() {
        return Design {
            weights: vec![0.0; h.len()],
            lower: 0.0,
            upper: 0.0,
            iterations: 0,
        };
    }
    let hl: Vec<DVector<f64>> = live.iter().map(|&i| h[i].clone()).collect();
    let mut w = vec![1.0 / hl.len() as f64; hl.len()];
    let (mut phi, mut q) = design_state(&hl, &w);
    let mut iterations = 0;
    while iterations < DESIGN_ITERATIONS {
        iterations += 1;
        let qmax = q.iter().cloned().fold(0.0, f64::max);
        if qmax <= phi * (1.0 + DESIGN_GAP) {
            break;
        }
        // multiplicative step, damped until it improves
        let target: Vec<f64> = w.iter().zip(&q).map(|(wi, qi)| wi * qi / phi).collect();
        let mut alpha = 1.0;
        let mut moved = false;
        while alpha > 1e-6 {
            let cand: Vec<f64> = w.iter().zip(&target).map(|(a, b)| (1.0 - alpha) * a + alpha * b).collect();
            let (p2, q2) = design_state(&hl, &cand);
            if p2 > phi {
                w = cand;
                phi = p2;
                q = q2;
                moved = true;
                break;
            }
            alpha *= 0.5;
        }
        if !moved {
            // Frank–Wolfe step towards the best generator
            let g = (0..q.len()).fold(0, |b, i| if q[i] > q[b] { i } else { b });
            let (mut lo, mut hi) = (0.0, 1.0);
            let eval = |t: f64| {
                let c: Vec<f64> = w
                    .iter()
                    .enumerate()
                    .map(|(i, a)| (1.0 - t) * a + if i == g { t } else { 0.0 })
                    .collect();
                (design_value(&hl, &c), c)
            };
            for _ in 0..60 {
                let m1 = lo + (hi - lo) / 3.0;
                let m2 = hi - (hi - lo) / 3.0;
                if eval(m1).0 < eval(m2).0 {
                    lo = m1;
                } else {
                    hi = m2;
                }
            }
            let (p2, c) = eval(0.5 * (lo + hi));
            if p2 <= phi {
                break;
            }
            w = c;
            let s = design_state(&hl, &w);
            phi = s.0;
            q = s.1;
        }
    }
    let qmax = q.iter().cloned().fold(0.0, f64::max);
    let mut weights = vec![0.0; h.len()];
    for (i, &li) in live.iter().enumerate() {
        weights[li] = w[i];
    }
    Design {
        weights,
        lower: phi,
        upper: (phi * qmax).sqrt().max(phi),
        iterations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn basis(n: usize) -> Vec<Vec<f64>> {
        (0..n)
            .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect()
    }

    #[test]
    fn identity_on_linf_domain() {
        // ℓ_∞^2 domain (dual vertices ±e_j), Euclidean codomain, u = I:
        // Π_2 equals √2 (the Hilbert–Schmidt value is attained)
        let d = domination(&basis(2), &[DMatrix::identity(2, 2)]).unwrap();
        assert!((d.upper - 2f64.sqrt()).abs() < 1e-6, "{}", d.upper);
        assert!((d.lower - 2f64.sqrt()).abs() < 1e-6, "{}", d.lower);
        assert!(d.lower <= d.upper);
    }

    #[test]
    fn rank_one_block() {
        let h = DVector::from_vec(vec![3.0, 4.0]);
        let a = &h * h.transpose();
        let duals = vec![vec![1.0, 1.0], vec![1.0, -1.0]];
        let d = domination(&duals, &[a]).unwrap();
        // ℓ_1 domain (sign-vector duals): a functional's Π_2 norm is ‖h‖_∞
        assert!((d.upper - 4.0).abs() < 1e-6, "{}", d.upper);
        assert!((d.lower - 4.0).abs() < 1e-6);
        let d = domination(&basis(2), &[&h * h.transpose()]).unwrap();
        // ℓ_∞ domain: ‖h‖_1
        assert!((d.upper - 7.0).abs() < 1e-6, "{}", d.upper);
    }

    #[test]
    fn design_on_orthonormal_generators() {
        // h = e_1, e_2: φ maximized at uniform weights, value √2
        let h = vec![DVector::from_vec(vec![1.0, 0.0]), DVector::from_vec(vec![0.0, 1.0])];
        let d = design(&h);
        assert!((d.lower - 2f64.sqrt()).abs() < 1e-9);
        assert!((d.upper - d.lower).abs() < 1e-8);
    }

    #[test]
    fn design_brackets_meet() {
        let h = vec![
            DVector::from_vec(vec![1.0, 0.2, 0.0]),
            DVector::from_vec(vec![0.3, 1.0, -0.5]),
            DVector::from_vec(vec![-0.4, 0.1, 2.0]),
            DVector::from_vec(vec![0.5, 0.5, 0.5]),
        ];
        let d = design(&h);
        assert!(d.upper - d.lower <= 1e-6 * d.upper, "{} {}", d.lower, d.upper);
    }
}

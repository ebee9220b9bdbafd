//! Operator norms and summing norms.
//!
//! Linear operators: ‖u‖, Π_p(u) and D_p(u) = Π_p(u*). Lipschitz maps: the
//! strictly Lipschitz and Cohen-type norms go through the linearization;
//! the Lipschitz p-summing norm is an exact LP over the vertices of the
//! Lipschitz unit ball.
//!
//! At p = 2 the bounds come from [`crate::pietsch`]: domination for
//! polyhedral domains, the design problem for Euclidean domains with a
//! polyhedral codomain, Hilbert–Schmidt between Euclidean spaces. Other
//! ℓ_q factors are compared with ℓ_2 and the result flagged loose. For
//! p ≠ 2 the upper side is a nuclear decomposition (or Π_2 when p > 2) and
//! the lower side a sequence search.

use nalgebra::{DMatrix, DVector};

use crate::certify::{self, codomain_generators, seal, Problem};
use crate::config::Config;
use crate::error::{Error, Result};
use crate::estimate::{Certificate, NormEstimate};
use crate::free_space::molecule_coeffs;
use crate::linalg::{self, matrix_to_cols, sym_eigen};
use crate::lipmap::LipschitzMap;
use crate::lp::{LpBuilder, LpStatus, Relation, Sense};
use crate::operator::{dedupe_sign, LinearOperator, Space};
use crate::pietsch::{design, domination, inv_sqrt};
use crate::search;
use crate::spaces::{dot, Exponent, FinNormedSpace};

/// Uniform mass mixed into Pietsch weights so the dominating form is
/// positive definite.
const PIETSCH_MIX: f64 = 1e-9;

/// Operator norm. Exact whenever the domain or codomain is polyhedral, or
/// both are Euclidean.
pub fn op_norm(u: &LinearOperator, cfg: &Config) -> Result<NormEstimate> {
    let problem = Problem::Op(u.clone());
    if u.is_zero() {
        return seal(&problem, Certificate::Trivial, Certificate::ZeroOperand, false);
    }
    if let Some((_, witness)) = op_norm_exact(u)? {
        return seal(&problem, witness, recompute("op-norm"), false);
    }
    let (_, factor) = euclideanized(u);
    let x = op_search(u, cfg);
    seal(
        &problem,
        Certificate::Vector { coords: x },
        Certificate::Scaled {
            factor,
            inner: Box::new(recompute("op-norm")),
        },
        true,
    )
}

fn recompute(method: &str) -> Certificate {
    Certificate::Recompute { method: method.into() }
}

/// Exact operator norm and a witness, when one of the enumerations applies.
pub fn op_norm_exact(u: &LinearOperator) -> Result<Option<(f64, Certificate)>> {
    if let Space::Free(g) = &u.domain {
        let mut best = (0.0, 0usize);
        for (k, m) in g.unit_molecules.iter().enumerate() {
            let v = u.codomain.norm(&u.apply(m));
            if v > best.0 {
                best = (v, k);
            }
        }
        let (x, y) = g.pairs.get(best.1).copied().unwrap_or((0, 0));
        return Ok(Some((best.0, Certificate::Molecule { x, y })));
    }
    let ball = match &u.domain {
        Space::Lip(g) => Some(g.vertices()?.to_vec()),
        Space::Ell(e) => e.ball_vertices()?,
        Space::Free(_) => None,
    };
    if let Some(verts) = ball {
        let best = best_of(&verts, |v| u.codomain.norm(&u.apply(v)));
        return Ok(Some((best.0, Certificate::Vector { coords: verts[best.1].clone() })));
    }
    if let Some(gs) = u.codomain.dual_vertices_up_to_sign()? {
        let hs: Vec<Vec<f64>> = gs.iter().map(|g| transpose_apply(u, g)).collect();
        let best = best_of(&hs, |h| u.domain.dual_norm(h));
        let x = u.domain.dual().norming_functional(&hs[best.1]);
        return Ok(Some((best.0, Certificate::Vector { coords: x })));
    }
    if u.domain.is_euclidean() && u.codomain.is_euclidean() {
        let svd = u.matrix.clone().svd(false, true);
        let vt = svd.v_t.ok_or_else(|| Error::Internal("SVD failed".into()))?;
        let k = (0..svd.singular_values.len()).fold(0, |b, i| {
            if svd.singular_values[i] > svd.singular_values[b] { i } else { b }
        });
        let x: Vec<f64> = vt.row(k).iter().copied().collect();
        return Ok(Some((svd.singular_values[k], Certificate::Vector { coords: x })));
    }
    Ok(None)
}

fn best_of(items: &[Vec<f64>], f: impl Fn(&[f64]) -> f64) -> (f64, usize) {
    let mut best = (f64::NEG_INFINITY, 0);
    for (i, v) in items.iter().enumerate() {
        let val = f(v);
        if val > best.0 {
            best = (val, i);
        }
    }
    (best.0.max(0.0), best.1)
}

fn transpose_apply(u: &LinearOperator, g: &[f64]) -> Vec<f64> {
    (u.matrix.transpose() * DVector::from_column_slice(g)).iter().copied().collect()
}

/// Ratio search for operator norms between non-polyhedral ℓ_q spaces.
fn op_search(u: &LinearOperator, cfg: &Config) -> Vec<f64> {
    let n = u.domain.dim();
    let ratio = |x: &[f64]| {
        let d = u.domain.norm(x);
        if d == 0.0 {
            0.0
        } else {
            u.codomain.norm(&u.apply(x)) / d
        }
    };
    let mut starts: Vec<Vec<f64>> = right_singular_vectors(&u.matrix);
    let mut rng = search::stream(cfg.seed, u64::MAX);
    while starts.len() < cfg.restarts.clamp(4, 16) {
        starts.push(search::gaussian_vec(&mut rng, n));
    }
    let (_, x) = search::maximize(&ratio, starts, cfg.seed, cfg.iterations);
    x
}

fn right_singular_vectors(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    match m.clone().svd(false, true).v_t {
        Some(vt) => (0..vt.nrows()).map(|i| vt.row(i).iter().copied().collect()).collect(),
        None => vec![],
    }
}

/// Replaces every ℓ_q factor with q ∉ {1, 2, ∞} by ℓ_2 and returns the
/// product of the two comparison constants ‖ℓ_q → ℓ_2‖ and ‖ℓ_2 → ℓ_r‖.
pub fn euclideanized(u: &LinearOperator) -> (LinearOperator, f64) {
    fn swap(s: &Space, domain: bool) -> (Space, f64) {
        match s {
            Space::Ell(e) if !(e.p.is_one() || e.p.is_two() || e.p.is_infinite()) => {
                let q = e.p.value().unwrap_or(2.0);
                let n = e.dim as f64;
                let exp = if domain { 0.5 - 1.0 / q } else { 1.0 / q - 0.5 };
                (Space::Ell(FinNormedSpace::euclidean(e.dim)), n.powf(exp.max(0.0)))
            }
            other => (other.clone(), 1.0),
        }
    }
    let (d, fd) = swap(&u.domain, true);
    let (c, fc) = swap(&u.codomain, false);
    (
        LinearOperator {
            domain: d,
            codomain: c,
            matrix: u.matrix.clone(),
        },
        fd * fc,
    )
}

fn is_euclideanized(u: &LinearOperator) -> bool {
    let (e, _) = euclideanized(u);
    e.domain != u.domain || e.codomain != u.codomain
}

/// Π_p(u), p ∈ [1, ∞).
pub fn pi_norm(u: &LinearOperator, p: Exponent, cfg: &Config) -> Result<NormEstimate> {
    let (l, up, loose) = pi_certs(u, p, cfg)?;
    seal(&Problem::Pi(u.clone(), p), l, up, loose)
}

/// Lower and upper certificates for Π_p(u), and whether the upper side is
/// only a comparison bound.
pub(crate) fn pi_certs(u: &LinearOperator, p: Exponent, cfg: &Config) -> Result<(Certificate, Certificate, bool)> {
    p.require_finite()?;
    if u.is_zero() {
        return Ok((Certificate::Trivial, Certificate::ZeroOperand, false));
    }
    if p.is_two() {
        return pi2_certs(u);
    }
    let problem = Problem::Pi(u.clone(), p);
    let mut uppers = nuclear_candidates(u);
    let mut lowers: Vec<Certificate> = Vec::new();
    // Π_2 bounds Π_p from above for p > 2; its witness is a good start
    // either way
    if let Ok((l2, u2, _)) = pi2_certs(u) {
        if p.value().is_some_and(|v| v > 2.0) {
            uppers.push(Certificate::Monotone {
                from_p: 2.0,
                inner: Box::new(u2),
            });
        }
        lowers.push(l2);
    }
    let upper = pick(&problem, uppers, false)?;
    lowers.extend(sequence_candidates(u)?.into_iter().map(|v| Certificate::Sequence { vectors: v }));
    if let Some(found) = sequence_search(u, p, &lowers, cfg)? {
        lowers.push(Certificate::Sequence { vectors: found });
    }
    let lower = pick(&problem, lowers, true)?;
    Ok((lower, upper, true))
}

/// The candidate with the best certified value (largest lower or smallest
/// upper); earlier candidates win ties.
fn pick(problem: &Problem, cands: Vec<Certificate>, lower: bool) -> Result<Certificate> {
    let mut best: Option<(f64, Certificate)> = None;
    for c in cands {
        let c = c.rounded();
        let v = if lower {
            certify::lower_value(problem, &c)
        } else {
            certify::upper_value(problem, &c)
        };
        let Ok(v) = v else { continue };
        let better = match &best {
            None => true,
            Some((b, _)) => {
                if lower {
                    v > *b
                } else {
                    v < *b
                }
            }
        };
        if better && v.is_finite() {
            best = Some((v, c));
        }
    }
    best.map(|b| b.1)
        .ok_or_else(|| Error::Internal("no certificate candidate evaluated".into()))
}

fn pi2_certs(u: &LinearOperator) -> Result<(Certificate, Certificate, bool)> {
    if is_euclideanized(u) {
        let (ue, factor) = euclideanized(u);
        let (l, up, _) = pi2_core(&ue)?;
        return Ok((
            l,
            Certificate::Scaled {
                factor,
                inner: Box::new(up),
            },
            true,
        ));
    }
    pi2_core(u)
}

/// Π_2 with both spaces Euclidean or polyhedral.
fn pi2_core(u: &LinearOperator) -> Result<(Certificate, Certificate, bool)> {
    let n = u.domain.dim();
    if u.domain.is_euclidean() {
        let Some(gs) = codomain_generators(&u.codomain)? else {
            let basis = (0..n).map(|j| unit(n, j)).collect();
            return Ok((Certificate::Sequence { vectors: basis }, recompute("hilbert-schmidt"), false));
        };
        return Ok(design_certs(u, &gs));
    }
    let duals = u
        .domain
        .dual_vertices_up_to_sign()?
        .ok_or_else(|| Error::Structural("domain has no polyhedral dual ball".into()))?;
    let blocks: Vec<DMatrix<f64>> = match codomain_generators(&u.codomain)? {
        None => vec![u.matrix.transpose() * &u.matrix],
        Some(gs) => gs
            .iter()
            .map(|g| DVector::from_vec(transpose_apply(u, g)))
            .filter(|h| h.amax() > 0.0)
            .map(|h| &h * h.transpose())
            .collect(),
    };
    let dom = domination(&duals, &blocks)?;
    Ok((
        Certificate::Sequence { vectors: dom.witness },
        Certificate::Pietsch {
            duals,
            weights: dom.weights,
            constant: dom.upper,
        },
        !dom.converged,
    ))
}

/// Euclidean domain, polyhedral codomain with generators g: maximize
/// tr((Σ λ_g h_g h_gᵀ)^{1/2}) with h_g = uᵀg. The optimal λ yields the
/// witness z_g = √λ_g H^{-1/2} h_g and the Pietsch measure H^{1/2}/tr.
fn design_certs(u: &LinearOperator, gs: &[Vec<f64>]) -> (Certificate, Certificate, bool) {
    let n = u.domain.dim();
    let h: Vec<DVector<f64>> = gs.iter().map(|g| DVector::from_vec(transpose_apply(u, g))).collect();
    let d = design(&h);
    let mut hm = DMatrix::zeros(n, n);
    for (hg, w) in h.iter().zip(&d.weights) {
        hm += hg * hg.transpose() * *w;
    }
    let is = inv_sqrt(&hm);
    let witness: Vec<Vec<f64>> = h
        .iter()
        .zip(&d.weights)
        .filter(|(_, w)| **w > 0.0)
        .map(|(hg, w)| (&is * hg * w.sqrt()).iter().copied().collect())
        .collect();
    let (vals, vecs) = sym_eigen(&hm);
    let roots: Vec<f64> = vals.iter().map(|l| l.max(0.0).sqrt()).collect();
    let total: f64 = roots.iter().sum();
    let weights = roots
        .iter()
        .map(|r| (1.0 - PIETSCH_MIX) * r / total + PIETSCH_MIX / n as f64)
        .collect();
    let duals = vecs.iter().map(|v| v.iter().copied().collect()).collect();
    (
        Certificate::Sequence { vectors: witness },
        Certificate::Pietsch {
            duals,
            weights,
            constant: d.upper,
        },
        false,
    )
}

fn unit(n: usize, j: usize) -> Vec<f64> {
    let mut e = vec![0.0; n];
    e[j] = 1.0;
    e
}

/// Column, row and singular-value decompositions of u.
fn nuclear_candidates(u: &LinearOperator) -> Vec<Certificate> {
    let (rows, cols) = u.matrix.shape();
    let mut out = Vec::new();
    out.push(Certificate::Nuclear {
        functionals: (0..cols).map(|j| unit(cols, j)).collect(),
        vectors: matrix_to_cols(&u.matrix),
    });
    out.push(Certificate::Nuclear {
        functionals: linalg::matrix_to_rows(&u.matrix),
        vectors: (0..rows).map(|i| unit(rows, i)).collect(),
    });
    let svd = u.matrix.clone().svd(true, true);
    if let (Some(uu), Some(vt)) = (svd.u, svd.v_t) {
        let top = svd.singular_values.max();
        let keep: Vec<usize> = (0..svd.singular_values.len())
            .filter(|&k| svd.singular_values[k] > 1e-14 * top)
            .collect();
        out.push(Certificate::Nuclear {
            functionals: keep
                .iter()
                .map(|&k| vt.row(k).iter().map(|x| x * svd.singular_values[k]).collect())
                .collect(),
            vectors: keep.iter().map(|&k| uu.column(k).iter().copied().collect()).collect(),
        });
    }
    out
}

/// Generators of the domain ball: singletons and the full list.
fn sequence_candidates(u: &LinearOperator) -> Result<Vec<Vec<Vec<f64>>>> {
    let gens: Vec<Vec<f64>> = match &u.domain {
        Space::Free(g) => g.unit_molecules.clone(),
        Space::Lip(g) => g.vertices()?.to_vec(),
        Space::Ell(e) => match e.ball_vertices()? {
            Some(v) => dedupe_sign(v),
            None => {
                let mut v = right_singular_vectors(&u.matrix);
                v.extend((0..e.dim).map(|j| unit(e.dim, j)));
                v
            }
        },
    };
    let mut out: Vec<Vec<Vec<f64>>> = gens.iter().map(|g| vec![g.clone()]).collect();
    out.push(gens);
    Ok(out)
}

/// Hill climb on strong_p(u z)/weak_p(z) over sequences of length at most
/// 4·dim. Only run where the weak norm is exact (polyhedral domains).
fn sequence_search(
    u: &LinearOperator,
    p: Exponent,
    seeds: &[Certificate],
    cfg: &Config,
) -> Result<Option<Vec<Vec<f64>>>> {
    let Some(duals) = u.domain.dual_vertices_up_to_sign()? else {
        return Ok(None);
    };
    let n = u.domain.dim();
    let len = (4 * n).min(16).max(1);
    let ratio = |flat: &[f64]| {
        let zs: Vec<&[f64]> = flat.chunks(n).collect();
        let weak = duals
            .iter()
            .map(|g| p.combine(zs.iter().map(|z| dot(g, z))))
            .fold(0.0, f64::max);
        if weak <= 0.0 {
            return 0.0;
        }
        let strong = p.combine(zs.iter().map(|z| u.codomain.norm(&u.apply(z))));
        strong / weak
    };
    let mut rng = search::stream(cfg.seed, 0x5E0);
    let mut starts = Vec::new();
    for c in seeds {
        if let Certificate::Sequence { vectors } = c {
            if !vectors.is_empty() && vectors.len() <= len {
                let mut flat: Vec<f64> = vectors.iter().flatten().copied().collect();
                // pad with small noise so the extra slots can move
                flat.extend(search::gaussian_vec(&mut rng, (len - vectors.len()) * n).iter().map(|x| x * 1e-3));
                starts.push(flat);
            }
        }
    }
    let restarts = (cfg.restarts / 8).max(2);
    for _ in 0..restarts {
        starts.push(search::gaussian_vec(&mut rng, len * n));
    }
    let (val, flat) = search::maximize(&ratio, starts, cfg.seed, cfg.iterations);
    if val <= 0.0 || flat.is_empty() {
        return Ok(None);
    }
    Ok(Some(flat.chunks(n).map(|c| c.to_vec()).collect()))
}

/// D_p(u) = Π_p(u*).
pub fn strongly_p_summing_norm(u: &LinearOperator, p: Exponent, cfg: &Config) -> Result<NormEstimate> {
    p.require_open_range()?;
    let (l, up, loose) = pi_certs(&u.adjoint(), p, cfg)?;
    seal(
        &Problem::Dp(u.clone(), p),
        Certificate::Adjoint { inner: Box::new(l) },
        Certificate::Adjoint { inner: Box::new(up) },
        loose,
    )
}

/// Π_p^SL(T) = Π_p(T̂).
pub fn strictly_lip_p_summing_norm(t: &LipschitzMap, p: Exponent, cfg: &Config) -> Result<NormEstimate> {
    p.require_open_range()?;
    let problem = Problem::pi_sl(t, p);
    let Problem::PiSL { op, .. } = &problem else { unreachable!() };
    let (l, up, loose) = pi_certs(op, p, cfg)?;
    let mut lowers = vec![l.clone()];
    if let Certificate::Sequence { vectors } = &l {
        if let Some(c) = crate::tensor::pairing_certificate(t, p, vectors, cfg)? {
            lowers.push(c);
        }
    }
    seal(&problem, pick(&problem, lowers, true)?, up, loose)
}

/// ⟨T, u⟩ / d_p^L(u) for the tensor u built from the best Π_p witness of
/// T̂, with its certificate. `None` when T̂ vanishes.
pub fn pairing_ratio(t: &LipschitzMap, p: Exponent, cfg: &Config) -> Result<Option<(f64, Certificate)>> {
    p.require_open_range()?;
    let problem = Problem::pi_sl(t, p);
    let Problem::PiSL { op, .. } = &problem else { unreachable!() };
    if op.is_zero() {
        return Ok(None);
    }
    let (l, _, _) = pi_certs(op, p, cfg)?;
    let Certificate::Sequence { vectors } = l else {
        return Ok(None);
    };
    let Some(c) = crate::tensor::pairing_certificate(t, p, &vectors, cfg)? else {
        return Ok(None);
    };
    let c = c.rounded();
    Ok(Some((certify::lower_value(&problem, &c)?, c)))
}

/// D_p^L(T) = D_p(T̂).
pub fn lip_cohen_strongly_p_summing_norm(t: &LipschitzMap, p: Exponent, cfg: &Config) -> Result<NormEstimate> {
    p.require_open_range()?;
    let problem = Problem::dp_l(t, p);
    let Problem::DpL { op, .. } = &problem else { unreachable!() };
    let (l, up, loose) = pi_certs(&op.adjoint(), p, cfg)?;
    seal(
        &problem,
        Certificate::Adjoint { inner: Box::new(l) },
        Certificate::Adjoint { inner: Box::new(up) },
        loose,
    )
}

/// Π_p^L(T): min over probability measures μ on the Lipschitz unit ball of
/// the C with ‖Tx − Ty‖^p ≤ C^p ∫ |f(x) − f(y)|^p dμ(f) for all pairs. The
/// integrand is convex in f, so μ may sit on the vertices, which makes
/// this a finite LP. Its dual is a weighted molecule family.
pub fn lip_p_summing_norm(t: &LipschitzMap, p: Exponent, _cfg: &Config) -> Result<NormEstimate> {
    let pv = p.require_open_range()?;
    let problem = Problem::pi_l(t, p);
    let Problem::PiL { op, .. } = &problem else { unreachable!() };
    if t.is_zero() {
        return seal(&problem, Certificate::Trivial, Certificate::ZeroOperand, false);
    }
    let geometry = op.domain.geometry().expect("linearization has a free domain");
    let verts = dedupe_sign(geometry.vertices()?.to_vec());
    let space = &t.domain;
    let pairs: Vec<(usize, usize, Vec<f64>, f64)> = space
        .pairs()
        .into_iter()
        .filter_map(|(x, y)| {
            let dt = t.codomain.norm(&t.diff(x, y)).powf(pv);
            (dt > 0.0).then(|| (x, y, molecule_coeffs(space, x, y), dt))
        })
        .collect();
    let mut lp = LpBuilder::new(Sense::Minimize);
    let vars: Vec<usize> = verts.iter().map(|_| lp.add_var(1.0, false)).collect();
    // rows are scaled to unit max coefficient; nearly collapsed pairs
    // otherwise put 1e10-size entries next to O(1) ones
    let mut row_scale = Vec::with_capacity(pairs.len());
    for (_, _, m, dt) in &pairs {
        let row: Vec<(usize, f64)> = vars
            .iter()
            .zip(&verts)
            .filter_map(|(&j, v)| {
                let a = dot(v, m).abs().powf(pv) / dt;
                (a > 0.0).then_some((j, a))
            })
            .collect();
        let s = row.iter().fold(0.0f64, |acc, (_, a)| acc.max(*a)).max(f64::MIN_POSITIVE);
        row_scale.push(s);
        lp.add_row(row.into_iter().map(|(j, a)| (j, a / s)).collect(), Relation::Ge, 1.0 / s);
    }
    let sol = lp.solve()?;
    if sol.status != LpStatus::Optimal {
        return Err(Error::Internal(format!("Lipschitz Pietsch LP reported {:?}", sol.status)));
    }
    let (mut functionals, mut weights) = (Vec::new(), Vec::new());
    for (v, w) in verts.iter().zip(&sol.x) {
        if *w > 0.0 {
            functionals.push(v.clone());
            weights.push(*w);
        }
    }
    let family_pairs = pairs.iter().map(|(x, y, _, _)| (*x, *y)).collect();
    let family_weights = pairs
        .iter()
        .zip(sol.duals.iter().zip(&row_scale))
        .map(|((_, _, _, dt), (y, s))| y.max(0.0) / (s * dt))
        .collect();
    let constant = sol.objective.max(0.0).powf(1.0 / pv);
    seal(
        &problem,
        Certificate::MoleculeFamily {
            pairs: family_pairs,
            weights: family_weights,
        },
        Certificate::LipschitzPietsch {
            functionals,
            weights,
            constant,
        },
        false,
    )
}

/// (Σ w_i ‖T x_i − T y_i‖^p)^{1/p} / sup_f (Σ w_i |f(x_i) − f(y_i)|^p)^{1/p}.
pub(crate) fn molecule_family_value(
    t: &LipschitzMap,
    op: &LinearOperator,
    p: Exponent,
    pairs: &[(usize, usize)],
    weights: &[f64],
) -> Result<f64> {
    let pv = p.require_finite()?;
    if pairs.len() != weights.len() {
        return Err(Error::DimensionMismatch {
            expected: pairs.len(),
            got: weights.len(),
        });
    }
    let space = &t.domain;
    let mut num = 0.0;
    let mut mols = Vec::new();
    for (&(x, y), &w) in pairs.iter().zip(weights) {
        if x >= space.len() || y >= space.len() || x == y {
            return Err(Error::DegenerateMolecule(format!("pair ({x}, {y})")));
        }
        if w < 0.0 {
            return Err(Error::Structural("negative molecule weight".into()));
        }
        num += w * t.codomain.norm(&t.diff(x, y)).powf(pv);
        mols.push((molecule_coeffs(space, x, y), w));
    }
    if num == 0.0 {
        return Ok(0.0);
    }
    let geometry = op.domain.geometry().expect("linearization has a free domain");
    let den = geometry
        .vertices()?
        .iter()
        .map(|f| mols.iter().map(|(m, w)| w * dot(f, m).abs().powf(pv)).sum::<f64>())
        .fold(0.0, f64::max);
    if den <= 0.0 {
        return Err(Error::Internal("molecule family with zero weak norm".into()));
    }
    Ok((num / den).powf(1.0 / pv))
}

/// C from Lipschitz Pietsch weights, after normalizing each functional
/// into the unit ball and the weights into a probability.
pub(crate) fn lipschitz_pietsch_value(
    t: &LipschitzMap,
    op: &LinearOperator,
    p: Exponent,
    functionals: &[Vec<f64>],
    weights: &[f64],
) -> Result<f64> {
    let pv = p.require_finite()?;
    if functionals.len() != weights.len() {
        return Err(Error::DimensionMismatch {
            expected: functionals.len(),
            got: weights.len(),
        });
    }
    let geometry = op.domain.geometry().expect("linearization has a free domain");
    let mut mass = 0.0;
    for (f, &w) in functionals.iter().zip(weights) {
        op.domain.dual().check(f)?;
        if w < 0.0 {
            return Err(Error::Structural("negative Pietsch weight".into()));
        }
        mass += w * geometry.lip_norm(f).max(1.0).powf(pv);
    }
    let space = &t.domain;
    let mut worst: f64 = 0.0;
    for (x, y) in space.pairs() {
        let num = t.codomain.norm(&t.diff(x, y)).powf(pv);
        if num == 0.0 {
            continue;
        }
        let m = molecule_coeffs(space, x, y);
        let den: f64 = functionals
            .iter()
            .zip(weights)
            .map(|(f, w)| w * dot(f, &m).abs().powf(pv))
            .sum();
        if den <= 0.0 {
            return Err(Error::Structural(format!(
                "Pietsch weights do not see the pair ({}, {})",
                space.points()[x],
                space.points()[y]
            )));
        }
        worst = worst.max(num / den);
    }
    Ok((mass * worst).powf(1.0 / pv))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    use crate::free_space::LipschitzFunctional;
    use crate::spaces::PointedMetricSpace;

    fn ell(n: usize, p: f64) -> Space {
        Space::Ell(FinNormedSpace::new(n, Exponent::new(p).unwrap()).unwrap())
    }

    fn cfg() -> Config {
        Config::default()
    }

    #[test]
    fn identity_on_l2_is_sqrt_n() {
        for n in 1..=4 {
            let u = LinearOperator::new(ell(n, 2.0), ell(n, 2.0), DMatrix::identity(n, n)).unwrap();
            let e = pi_norm(&u, Exponent::two(), &cfg()).unwrap();
            assert!(e.exact, "{e:?}");
            assert!((e.upper - (n as f64).sqrt()).abs() < 1e-9);
            let o = op_norm(&u, &cfg()).unwrap();
            assert!((o.upper - 1.0).abs() < 1e-12 && o.exact);
        }
    }

    #[test]
    fn rank_one_operator() {
        // x* = (1, 2) on ℓ_1^2 (dual ℓ_∞ norm 2), y = (3, 4) in ℓ_2^2 (norm 5)
        let m = DMatrix::from_row_slice(2, 2, &[3.0, 6.0, 4.0, 8.0]);
        let u = LinearOperator::new(ell(2, 1.0), ell(2, 2.0), m).unwrap();
        for p in [1.5, 2.0, 3.0] {
            let e = pi_norm(&u, Exponent::new(p).unwrap(), &cfg()).unwrap();
            assert!((e.lower - 10.0).abs() < 1e-6 && (e.upper - 10.0).abs() < 1e-6, "p={p}: {e:?}");
        }
        let d = strongly_p_summing_norm(&u, Exponent::two(), &cfg()).unwrap();
        assert!((d.lower - 10.0).abs() < 1e-6 && (d.upper - 10.0).abs() < 1e-6, "{d:?}");
    }

    #[test]
    fn zero_operator() {
        let u = LinearOperator::new(ell(2, 1.0), ell(3, 2.0), DMatrix::zeros(3, 2)).unwrap();
        let e = pi_norm(&u, Exponent::two(), &cfg()).unwrap();
        assert_eq!((e.lower, e.upper), (0.0, 0.0));
    }

    #[test]
    fn linearization_is_isometric() {
        let s = Arc::new(PointedMetricSpace::integer_line(3));
        let t = LipschitzMap::new(
            s,
            FinNormedSpace::euclidean(2),
            vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![0.5, 3.0], vec![2.0, 2.0]],
        )
        .unwrap();
        let e = op_norm(&t.linearize(), &cfg()).unwrap();
        assert!(e.exact);
        assert!((e.upper - t.lip_constant()).abs() < 1e-12);
    }

    /// δ_{X_n} as a map into ℓ_1^n: k ↦ (1, …, 1, 0, …, 0) with k ones.
    fn line_embedding(n: usize) -> LipschitzMap {
        let s = Arc::new(PointedMetricSpace::integer_line(n));
        let values = (0..=n).map(|k| (0..n).map(|i| if i < k { 1.0 } else { 0.0 }).collect()).collect();
        LipschitzMap::new(s, FinNormedSpace::new(n, Exponent::one()).unwrap(), values).unwrap()
    }

    #[test]
    fn line_embedding_separates_the_two_classes() {
        for n in 1..=4 {
            let t = line_embedding(n);
            let sl = strictly_lip_p_summing_norm(&t, Exponent::two(), &cfg()).unwrap();
            assert!((sl.lower - (n as f64).sqrt()).abs() < 1e-6, "n={n}: {sl:?}");
            assert!((sl.upper - (n as f64).sqrt()).abs() < 1e-6, "n={n}: {sl:?}");
            let l = lip_p_summing_norm(&t, Exponent::two(), &cfg()).unwrap();
            assert!((l.lower - 1.0).abs() < 1e-9 && (l.upper - 1.0).abs() < 1e-9, "n={n}: {l:?}");
        }
    }

    #[test]
    fn rank_one_lipschitz_map() {
        let s = Arc::new(PointedMetricSpace::from_matrix(vec![
            vec![0.0, 1.0, 2.0],
            vec![1.0, 0.0, 1.5],
            vec![2.0, 1.5, 0.0],
        ]).unwrap());
        let f = LipschitzFunctional::new(s, vec![0.0, 1.0, -0.5]).unwrap();
        let lip = f.lip_constant();
        let t = LipschitzMap::rank_one(&f, &[3.0, 4.0], FinNormedSpace::euclidean(2)).unwrap();
        let p = Exponent::two();
        for e in [
            strictly_lip_p_summing_norm(&t, p, &cfg()).unwrap(),
            lip_p_summing_norm(&t, p, &cfg()).unwrap(),
            lip_cohen_strongly_p_summing_norm(&t, p, &cfg()).unwrap(),
        ] {
            assert!((e.lower - 5.0 * lip).abs() < 1e-6 && (e.upper - 5.0 * lip).abs() < 1e-6, "{e:?}");
        }
    }

    #[test]
    fn nonpolyhedral_spaces_are_bracketed() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, -0.2, 2.0]);
        let u = LinearOperator::new(ell(2, 3.0), ell(2, 1.5), m).unwrap();
        let o = op_norm(&u, &cfg()).unwrap();
        assert!(o.lower <= o.upper && o.lower > 0.0);
        let e = pi_norm(&u, Exponent::two(), &cfg()).unwrap();
        assert!(e.lower <= e.upper && e.lower > 0.0);
    }

    #[test]
    fn certificates_reverify() {
        let m = DMatrix::from_row_slice(2, 3, &[1.0, 0.5, -0.2, 2.0, 0.0, 1.0]);
        let u = LinearOperator::new(ell(3, f64::INFINITY), ell(2, 1.0), m).unwrap();
        let e = pi_norm(&u, Exponent::two(), &cfg()).unwrap();
        let v = certify::verify(&Problem::Pi(u.clone(), Exponent::two()), &e).unwrap();
        assert!(v.passed, "{v:?}");
        assert!(e.relative_width() < 1e-6, "{e:?}");
    }
}

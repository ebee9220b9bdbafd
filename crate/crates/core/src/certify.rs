//! Re-evaluation of certificates.
//!
//! Every bound an estimator reports is the value its certificate proves when
//! re-evaluated here, after rounding to the precision of the JSON output.
//! [`verify`] repeats the evaluation for a stored estimate and reports the
//! residuals.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::config::Config;
use crate::error::{Error, Result};
use crate::estimate::{Certificate, NormEstimate, CERT_TOLERANCE};
use crate::free_space::{extended_coeffs, molecule_coeffs, FreeVector};
use crate::lipmap::LipschitzMap;
use crate::operator::{LinearOperator, Space};
use crate::spaces::Exponent;
use crate::summing;
use crate::tensor::{self, CrossKind, TensorElement};

/// A norm computation together with its operand.
#[derive(Debug, Clone)]
pub enum Problem {
    AeNorm(FreeVector),
    Lip(LipschitzMap),
    Op(LinearOperator),
    Pi(LinearOperator, Exponent),
    Dp(LinearOperator, Exponent),
    /// Strictly Lipschitz p-summing norm; `op` is the linearization.
    PiSL { map: LipschitzMap, op: LinearOperator, p: Exponent },
    PiL { map: LipschitzMap, op: LinearOperator, p: Exponent },
    DpL { map: LipschitzMap, op: LinearOperator, p: Exponent },
    Cross { kind: CrossKind, tensor: TensorElement, p: Exponent },
}

impl Problem {
    pub fn pi_sl(map: &LipschitzMap, p: Exponent) -> Problem {
        Problem::PiSL {
            op: map.linearize(),
            map: map.clone(),
            p,
        }
    }

    pub fn pi_l(map: &LipschitzMap, p: Exponent) -> Problem {
        Problem::PiL {
            op: map.linearize(),
            map: map.clone(),
            p,
        }
    }

    pub fn dp_l(map: &LipschitzMap, p: Exponent) -> Problem {
        Problem::DpL {
            op: map.linearize(),
            map: map.clone(),
            p,
        }
    }

    /// Short identifier used in JSON output.
    pub fn kind_name(&self) -> String {
        match self {
            Problem::AeNorm(_) => "aenorm".into(),
            Problem::Lip(_) => "lip".into(),
            Problem::Op(_) => "op".into(),
            Problem::Pi(..) => "pi".into(),
            Problem::Dp(..) => "dp".into(),
            Problem::PiSL { .. } => "pisl".into(),
            Problem::PiL { .. } => "pil".into(),
            Problem::DpL { .. } => "dpl".into(),
            Problem::Cross { kind, .. } => format!("cross-{}", kind.name()),
        }
    }

    /// The exponent, for the families that take one.
    pub fn exponent(&self) -> Option<Exponent> {
        match self {
            Problem::AeNorm(_) | Problem::Lip(_) | Problem::Op(_) => None,
            Problem::Cross { kind, p, .. } => kind.uses_exponent().then_some(*p),
            Problem::Pi(_, p) | Problem::Dp(_, p) => Some(*p),
            Problem::PiSL { p, .. } | Problem::PiL { p, .. } | Problem::DpL { p, .. } => Some(*p),
        }
    }

    /// Runs the matching estimator.
    pub fn estimate(&self, cfg: &Config) -> Result<NormEstimate> {
        match self {
            Problem::AeNorm(m) => {
                if m.is_zero() {
                    return seal(self, Certificate::Trivial, Certificate::ZeroOperand, false);
                }
                let est = crate::free_space::ae_norm(&m.space, &m.coeffs)?;
                seal(self, est.lower_cert, est.upper_cert, false)
            }
            Problem::Lip(t) => {
                let (_, pair) = t.lip_constant_with_pair();
                let Some((x, y)) = pair.filter(|_| !t.is_zero()) else {
                    return seal(self, Certificate::Trivial, Certificate::ZeroOperand, false);
                };
                seal(
                    self,
                    Certificate::Molecule { x, y },
                    Certificate::Recompute {
                        method: "pair-enumeration".into(),
                    },
                    false,
                )
            }
            Problem::Op(u) => summing::op_norm(u, cfg),
            Problem::Pi(u, p) => summing::pi_norm(u, *p, cfg),
            Problem::Dp(u, p) => summing::strongly_p_summing_norm(u, *p, cfg),
            Problem::PiSL { map, p, .. } => summing::strictly_lip_p_summing_norm(map, *p, cfg),
            Problem::PiL { map, p, .. } => summing::lip_p_summing_norm(map, *p, cfg),
            Problem::DpL { map, p, .. } => summing::lip_cohen_strongly_p_summing_norm(map, *p, cfg),
            Problem::Cross { kind, tensor, p } => tensor::cross_norm(*kind, tensor, *p, cfg),
        }
    }

    /// The linear problem a Lipschitz one reduces to, if any.
    fn linear(&self) -> Option<Problem> {
        match self {
            Problem::PiSL { op, p, .. } => Some(Problem::Pi(op.clone(), *p)),
            Problem::DpL { op, p, .. } => Some(Problem::Dp(op.clone(), *p)),
            _ => None,
        }
    }
}

/// Rounds both certificates to output precision and sets each side of the
/// bracket to the value its certificate proves.
pub fn seal(problem: &Problem, lower: Certificate, upper: Certificate, loose: bool) -> Result<NormEstimate> {
    let lower_cert = lower.rounded();
    let upper_cert = upper.rounded();
    let lo = lower_value(problem, &lower_cert)?;
    let up = upper_value(problem, &upper_cert)?;
    if !lo.is_finite() || !up.is_finite() {
        return Err(Error::Internal("certificate evaluated to a non-finite bound".into()));
    }
    if lo > up + CERT_TOLERANCE * (1.0 + up.abs()) {
        return Err(Error::Internal(format!(
            "certified lower bound {lo} exceeds certified upper bound {up}"
        )));
    }
    let mut est = NormEstimate::bracket(lo.min(up), up, lower_cert, upper_cert);
    est.loose = loose && !est.exact;
    Ok(est)
}

/// Result of re-checking a stored estimate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verification {
    pub lower_claimed: f64,
    pub lower_certified: f64,
    pub upper_claimed: f64,
    pub upper_certified: f64,
    /// Relative amount by which a claim exceeds what its certificate proves.
    pub lower_residual: f64,
    pub upper_residual: f64,
    pub passed: bool,
}

pub fn verify(problem: &Problem, est: &NormEstimate) -> Result<Verification> {
    let lc = lower_value(problem, &est.lower_cert)?;
    let uc = upper_value(problem, &est.upper_cert)?;
    let lower_residual = (est.lower - lc).max(0.0) / (1.0 + est.lower.abs());
    let upper_residual = (uc - est.upper).max(0.0) / (1.0 + est.upper.abs());
    let ordered = est.lower <= est.upper + CERT_TOLERANCE * (1.0 + est.upper.abs());
    Ok(Verification {
        lower_claimed: est.lower,
        lower_certified: lc,
        upper_claimed: est.upper,
        upper_certified: uc,
        lower_residual,
        upper_residual,
        passed: ordered && lower_residual < CERT_TOLERANCE && upper_residual < CERT_TOLERANCE,
    })
}

fn unsupported(side: &str, cert: &Certificate, problem: &Problem) -> Error {
    let kind = serde_json::to_value(cert)
        .ok()
        .and_then(|v| v.get("type").and_then(|t| t.as_str()).map(String::from))
        .unwrap_or_default();
    Error::Structural(format!(
        "a '{kind}' certificate cannot bound the {side} side of {}",
        problem_name(problem)
    ))
}

fn problem_name(problem: &Problem) -> &'static str {
    match problem {
        Problem::AeNorm(_) => "a free-space norm",
        Problem::Lip(_) => "a Lipschitz constant",
        Problem::Op(_) => "an operator norm",
        Problem::Pi(..) => "a p-summing norm",
        Problem::Dp(..) => "a strongly p-summing norm",
        Problem::PiSL { .. } => "a strictly Lipschitz p-summing norm",
        Problem::PiL { .. } => "a Lipschitz p-summing norm",
        Problem::DpL { .. } => "a Lipschitz strongly p-summing norm",
        Problem::Cross { .. } => "a tensor cross-norm",
    }
}

/// The lower bound a certificate proves.
pub fn lower_value(problem: &Problem, cert: &Certificate) -> Result<f64> {
    if let Certificate::Trivial = cert {
        return Ok(0.0);
    }
    if let Some(lin) = problem.linear() {
        if let (Problem::PiSL { map, p, .. }, Certificate::TensorPairing { terms, norm }) = (problem, cert) {
            return tensor::pairing_ratio_value(map, *p, terms, norm);
        }
        return lower_value(&lin, cert);
    }
    match (problem, cert) {
        (Problem::AeNorm(m), Certificate::Functional { values }) => {
            let space = &m.space;
            if values.len() != space.len() || values[space.base()] != 0.0 {
                return Err(Error::Structural("functional must have one value per point and vanish at the base".into()));
            }
            Ok(crate::free_space::functional_bound(space, values, &m.extended()))
        }
        (Problem::Lip(t), Certificate::Molecule { x, y }) => {
            check_pair(&t.domain, *x, *y)?;
            Ok(t.codomain.norm(&t.diff(*x, *y)) / t.domain.dist(*x, *y))
        }
        (Problem::Op(u), Certificate::Molecule { x, y }) => {
            let Space::Free(g) = &u.domain else {
                return Err(unsupported("lower", cert, problem));
            };
            check_pair(&g.space, *x, *y)?;
            let m = molecule_coeffs(&g.space, *x, *y);
            Ok(u.codomain.norm(&u.apply(&m)) / g.space.dist(*x, *y))
        }
        (Problem::Op(u), Certificate::Vector { coords }) => {
            u.domain.check(coords)?;
            let n = u.domain.norm(coords);
            Ok(if n > 0.0 { u.codomain.norm(&u.apply(coords)) / n } else { 0.0 })
        }
        (Problem::Pi(u, p), Certificate::Sequence { vectors }) => sequence_ratio(u, *p, vectors),
        (Problem::Dp(u, p), Certificate::Adjoint { inner }) => lower_value(&Problem::Pi(u.adjoint(), *p), inner),
        (Problem::PiL { map, op, p }, Certificate::MoleculeFamily { pairs, weights }) => {
            summing::molecule_family_value(map, op, *p, pairs, weights)
        }
        (Problem::Cross { kind, tensor, p }, c) => tensor::lower_value(*kind, tensor, *p, c),
        _ => Err(unsupported("lower", cert, problem)),
    }
}

/// The upper bound a certificate proves.
pub fn upper_value(problem: &Problem, cert: &Certificate) -> Result<f64> {
    if let Certificate::ZeroOperand = cert {
        return if operand_is_zero(problem) {
            Ok(0.0)
        } else {
            Err(Error::Structural("zero-operand certificate on a nonzero operand".into()))
        };
    }
    if let Some(lin) = problem.linear() {
        return upper_value(&lin, cert);
    }
    match (problem, cert) {
        (Problem::AeNorm(m), Certificate::Flow { flow }) => flow_bound(m, flow),
        (Problem::Lip(t), Certificate::Recompute { method }) if method == "pair-enumeration" => Ok(t.lip_constant()),
        (Problem::Op(u), Certificate::Recompute { method }) if method == "op-norm" => summing::op_norm_exact(u)?
            .map(|(v, _)| v)
            .ok_or_else(|| Error::Structural("operator norm is not exactly computable for these spaces".into())),
        (Problem::Op(u), Certificate::Scaled { inner, .. }) => {
            let (ue, factor) = summing::euclideanized(u);
            Ok(factor * upper_value(&Problem::Op(ue), inner)?)
        }
        (Problem::Pi(u, p), c) => pi_upper(u, *p, c, problem),
        (Problem::Dp(u, p), Certificate::Adjoint { inner }) => upper_value(&Problem::Pi(u.adjoint(), *p), inner),
        (Problem::PiL { map, op, p }, Certificate::LipschitzPietsch { functionals, weights, .. }) => {
            summing::lipschitz_pietsch_value(map, op, *p, functionals, weights)
        }
        (Problem::Cross { kind, tensor, p }, c) => tensor::upper_value(*kind, tensor, *p, c),
        _ => Err(unsupported("upper", cert, problem)),
    }
}

fn pi_upper(u: &LinearOperator, p: Exponent, cert: &Certificate, problem: &Problem) -> Result<f64> {
    match cert {
        Certificate::Recompute { method } if method == "hilbert-schmidt" => {
            if !(p.is_two() && u.domain.is_euclidean() && u.codomain.is_euclidean()) {
                return Err(Error::Structural("Hilbert–Schmidt bound needs p = 2 between Euclidean spaces".into()));
            }
            Ok(u.matrix.norm())
        }
        Certificate::Pietsch { duals, weights, .. } => {
            if !p.is_two() {
                return Err(Error::Structural("Pietsch certificates are stated at p = 2".into()));
            }
            pietsch_value(u, duals, weights)
        }
        Certificate::Nuclear { functionals, vectors } => nuclear_value(u, functionals, vectors),
        Certificate::Scaled { inner, .. } => {
            let (ue, factor) = summing::euclideanized(u);
            Ok(factor * upper_value(&Problem::Pi(ue, p), inner)?)
        }
        Certificate::Monotone { from_p, inner } => {
            let q = Exponent::new(*from_p)?;
            match (q.value(), p.value()) {
                (Some(a), Some(b)) if a <= b => upper_value(&Problem::Pi(u.clone(), q), inner),
                (Some(_), None) => upper_value(&Problem::Pi(u.clone(), q), inner),
                _ => Err(Error::Structural("monotonicity only passes to larger exponents".into())),
            }
        }
        _ => Err(unsupported("upper", cert, problem)),
    }
}

fn operand_is_zero(problem: &Problem) -> bool {
    match problem {
        Problem::AeNorm(m) => m.is_zero(),
        Problem::Lip(t) => t.is_zero(),
        Problem::Op(u) | Problem::Pi(u, _) | Problem::Dp(u, _) => u.is_zero(),
        Problem::PiSL { map, .. } | Problem::PiL { map, .. } | Problem::DpL { map, .. } => map.is_zero(),
        Problem::Cross { tensor, .. } => tensor.is_zero(),
    }
}

fn check_pair(space: &crate::spaces::PointedMetricSpace, x: usize, y: usize) -> Result<()> {
    if x >= space.len() || y >= space.len() {
        return Err(Error::UnknownPoint(format!("index {}", x.max(y))));
    }
    if x == y {
        return Err(Error::DegenerateMolecule(space.points()[x].clone()));
    }
    Ok(())
}

/// Σ |flow| d plus the cost of repairing any divergence mismatch through
/// the base point.
fn flow_bound(m: &FreeVector, flow: &[Vec<f64>]) -> Result<f64> {
    let space = &m.space;
    let n = space.len();
    if flow.len() != n || flow.iter().any(|r| r.len() != n) {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: flow.len(),
        });
    }
    let ext = extended_coeffs(space, &m.coeffs);
    let mut cost = 0.0;
    let mut repair = 0.0;
    for k in 0..n {
        for j in 0..n {
            if j != k {
                cost += flow[k][j].abs() * space.dist(k, j);
            }
        }
        let out: f64 = (0..n).filter(|&j| j != k).map(|j| flow[k][j]).sum();
        let inc: f64 = (0..n).filter(|&j| j != k).map(|j| flow[j][k]).sum();
        repair += (out - inc - ext[k]).abs() * space.dist(k, space.base());
    }
    Ok(cost + repair)
}

/// strong_p(u z) / weak_p(z), the weak norm taken from its certified upper
/// side.
pub(crate) fn sequence_ratio(u: &LinearOperator, p: Exponent, vectors: &[Vec<f64>]) -> Result<f64> {
    for z in vectors {
        u.domain.check(z)?;
    }
    let images: Vec<Vec<f64>> = vectors.iter().map(|z| u.apply(z)).collect();
    let strong = u.codomain.strong_norm(&images, p);
    if strong == 0.0 {
        return Ok(0.0);
    }
    let weak = u.domain.weak_norm(vectors, p, 0, 0).upper;
    if weak <= 0.0 {
        return Err(Error::Internal("sequence with zero weak norm but nonzero image".into()));
    }
    Ok(strong / weak)
}

/// Functionals bounding the codomain norm: ‖y‖ = max_g |⟨g, y⟩|.
pub(crate) fn codomain_generators(space: &Space) -> Result<Option<Vec<Vec<f64>>>> {
    if space.is_euclidean() {
        return Ok(None);
    }
    match space.dual_vertices_up_to_sign()? {
        Some(g) => Ok(Some(g)),
        None => Err(Error::Structural(
            "Pietsch certificates need a Euclidean or polyhedral codomain".into(),
        )),
    }
}

/// C with ‖u x‖² ≤ C² Σ_v w_v ⟨v, x⟩² for all x, after normalizing the
/// duals into the dual unit ball and the weights into a probability.
pub(crate) fn pietsch_value(u: &LinearOperator, duals: &[Vec<f64>], weights: &[f64]) -> Result<f64> {
    if duals.len() != weights.len() {
        return Err(Error::DimensionMismatch {
            expected: duals.len(),
            got: weights.len(),
        });
    }
    let n = u.domain.dim();
    let mut b = DMatrix::zeros(n, n);
    let mut mass = 0.0;
    for (v, &w) in duals.iter().zip(weights) {
        u.domain.check(v)?;
        if w < 0.0 {
            return Err(Error::Structural("negative Pietsch weight".into()));
        }
        if w == 0.0 {
            continue;
        }
        let nv = u.domain.dual_norm(v);
        mass += w * nv.max(1.0).powi(2);
        let dv = DVector::from_column_slice(v);
        b += &dv * dv.transpose() * w;
    }
    if u.is_zero() {
        return Ok(0.0);
    }
    let chol = ((&b + b.transpose()) * 0.5)
        .cholesky()
        .ok_or_else(|| Error::Structural("Pietsch weights do not give a positive definite form".into()))?;
    let l_inv = chol
        .l()
        .try_inverse()
        .ok_or_else(|| Error::Structural("singular Pietsch form".into()))?;
    let worst = match codomain_generators(&u.codomain)? {
        None => {
            let c = &l_inv * u.matrix.transpose() * &u.matrix * l_inv.transpose();
            crate::linalg::sym_eigen(&c).0[0].max(0.0)
        }
        Some(gs) => gs
            .iter()
            .map(|g| {
                let h = u.matrix.transpose() * DVector::from_column_slice(g);
                (&l_inv * h).norm_squared()
            })
            .fold(0.0, f64::max),
    };
    Ok((mass * worst).sqrt())
}

/// Σ ‖f_k‖_* ‖y_k‖ for u ≈ Σ y_k f_kᵀ, plus the same bound for the residual
/// expanded in coordinates.
pub(crate) fn nuclear_value(u: &LinearOperator, functionals: &[Vec<f64>], vectors: &[Vec<f64>]) -> Result<f64> {
    if functionals.len() != vectors.len() {
        return Err(Error::DimensionMismatch {
            expected: functionals.len(),
            got: vectors.len(),
        });
    }
    let mut rest = u.matrix.clone();
    let mut total = 0.0;
    for (f, y) in functionals.iter().zip(vectors) {
        u.domain.check(f)?;
        u.codomain.check(y)?;
        total += u.domain.dual_norm(f) * u.codomain.norm(y);
        rest -= DVector::from_column_slice(y) * DVector::from_column_slice(f).transpose();
    }
    let (rows, cols) = rest.shape();
    for j in 0..cols {
        let mut ej = vec![0.0; cols];
        ej[j] = 1.0;
        let fj = u.domain.dual_norm(&ej);
        for i in 0..rows {
            if rest[(i, j)] != 0.0 {
                let mut ei = vec![0.0; rows];
                ei[i] = 1.0;
                total += rest[(i, j)].abs() * fj * u.codomain.norm(&ei);
            }
        }
    }
    Ok(total)
}

//! The Lipschitz tensor product X ⊠ E and six cross-norms on it.
//!
//! An element Σ δ(x_i, y_i) ⊠ e_i is stored as its terms; every norm
//! depends only on the canonical matrix M = Σ coeffs(δ(x_i, y_i)) e_iᵀ
//! (free-space coordinates × E coordinates), the image in F(X) ⊗ E.
//!
//! Conventions, with p* the conjugate exponent:
//! - π^L: inf Σ ‖m_i‖ ‖e_i‖; ε^L: sup over Lip-1 f and unit e* of ⟨f ⊗ e*, M⟩.
//! - d_p^L: inf weak_p(m_i) · strong_{p*}(e_i).
//! - g_p^L: inf strong_{p*}(m_i) · weak_p(e_i).
//! - μ_p: as g_p^L with molecule left factors λ_i δ(x_i, y_i).
//! - cs_p: inf weak_{p*}(λ_i δ(x_i, y_i)) · strong_p(e_i).

use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::certify::{self, seal, Problem};
use crate::config::Config;
use crate::error::{Error, Result};
use crate::estimate::{Certificate, NormEstimate};
use crate::free_space::{ae_dual_norm, lip_constant_of_values, molecule_coeffs, FreeGeometry, FreeVector};
use crate::linalg::{rank, sym_eigen};
use crate::lipmap::LipschitzMap;
use crate::lp::{LpBuilder, LpStatus, Relation, Sense};
use crate::operator::{dedupe_sign, LinearOperator, Space};
use crate::pietsch::{design, domination};
use crate::search;
use crate::spaces::{dot, Exponent, FinNormedSpace, PointedMetricSpace};
use crate::summing;

/// The six cross-norms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CrossKind {
    #[serde(rename = "piL")]
    ProjL,
    #[serde(rename = "epsL")]
    InjL,
    #[serde(rename = "dpL")]
    DpL,
    #[serde(rename = "gpL")]
    GpL,
    #[serde(rename = "mu")]
    Mu,
    #[serde(rename = "cs")]
    Cs,
}

impl CrossKind {
    pub const ALL: [CrossKind; 6] = [
        CrossKind::ProjL,
        CrossKind::InjL,
        CrossKind::DpL,
        CrossKind::GpL,
        CrossKind::Mu,
        CrossKind::Cs,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CrossKind::ProjL => "piL",
            CrossKind::InjL => "epsL",
            CrossKind::DpL => "dpL",
            CrossKind::GpL => "gpL",
            CrossKind::Mu => "mu",
            CrossKind::Cs => "cs",
        }
    }

    /// Whether the norm depends on an exponent.
    pub fn uses_exponent(self) -> bool {
        !matches!(self, CrossKind::ProjL | CrossKind::InjL)
    }
}

impl FromStr for CrossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CrossKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Structural(format!("unknown cross-norm '{s}'")))
    }
}

/// One term δ(x, y) ⊠ e.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorTerm {
    pub x: usize,
    pub y: usize,
    pub e: Vec<f64>,
}

/// Σ δ(x_i, y_i) ⊠ e_i in X ⊠ E.
#[derive(Debug, Clone)]
pub struct TensorElement {
    pub geometry: Arc<FreeGeometry>,
    pub factor: FinNormedSpace,
    pub terms: Vec<TensorTerm>,
}

/// Φ(u) in F(X) ⊗ E: the molecule/vector pairs and the canonical matrix.
#[derive(Debug, Clone)]
pub struct TensorImage {
    pub pairs: Vec<(FreeVector, Vec<f64>)>,
    pub matrix: DMatrix<f64>,
}

impl TensorElement {
    /// Terms with x = y or e = 0 are dropped.
    pub fn new(space: Arc<PointedMetricSpace>, factor: FinNormedSpace, terms: Vec<TensorTerm>) -> Result<Self> {
        Self::on(Arc::new(FreeGeometry::new(space)), factor, terms)
    }

    /// Same, reusing precomputed geometry.
    pub fn on(geometry: Arc<FreeGeometry>, factor: FinNormedSpace, terms: Vec<TensorTerm>) -> Result<Self> {
        let n = geometry.space.len();
        let mut kept = Vec::with_capacity(terms.len());
        for t in terms {
            if t.x >= n || t.y >= n {
                return Err(Error::UnknownPoint(format!("index {}", t.x.max(t.y))));
            }
            factor.check(&t.e)?;
            if t.e.iter().any(|v| !v.is_finite()) {
                return Err(Error::Structural("tensor vectors must be finite".into()));
            }
            if t.x != t.y && t.e.iter().any(|v| *v != 0.0) {
                kept.push(t);
            }
        }
        Ok(TensorElement {
            geometry,
            factor,
            terms: kept,
        })
    }

    pub fn space(&self) -> &Arc<PointedMetricSpace> {
        &self.geometry.space
    }

    /// The element Σ_c δ(c, 0) ⊠ M_c with M_c the rows of `m`.
    pub fn from_matrix(geometry: Arc<FreeGeometry>, factor: FinNormedSpace, m: &DMatrix<f64>) -> Result<Self> {
        let space = geometry.space.clone();
        if m.nrows() != space.free_dim() || m.ncols() != factor.dim {
            return Err(Error::DimensionMismatch {
                expected: space.free_dim(),
                got: m.nrows(),
            });
        }
        let terms = (0..m.nrows())
            .map(|c| TensorTerm {
                x: space.point_of_coord(c),
                y: space.base(),
                e: m.row(c).iter().copied().collect(),
            })
            .collect();
        Self::on(geometry, factor, terms)
    }

    /// Canonical matrix M, free coordinates × E coordinates.
    pub fn matrix(&self) -> DMatrix<f64> {
        let space = self.space();
        let mut m = DMatrix::zeros(space.free_dim(), self.factor.dim);
        for t in &self.terms {
            for (sign, p) in [(1.0, t.x), (-1.0, t.y)] {
                if let Some(c) = space.coord(p) {
                    for (k, v) in t.e.iter().enumerate() {
                        m[(c, k)] += sign * v;
                    }
                }
            }
        }
        m
    }

    pub fn phi(&self) -> Result<TensorImage> {
        let space = self.space();
        let pairs = self
            .terms
            .iter()
            .map(|t| Ok((FreeVector::new(space.clone(), molecule_coeffs(space, t.x, t.y))?, t.e.clone())))
            .collect::<Result<_>>()?;
        Ok(TensorImage {
            pairs,
            matrix: self.matrix(),
        })
    }

    pub fn is_zero(&self) -> bool {
        self.matrix().iter().all(|v| *v == 0.0)
    }

    /// Concatenation of terms; u + v.
    pub fn add(&self, other: &TensorElement) -> Result<TensorElement> {
        crate::free_space::same_space(self.space(), other.space())?;
        if self.factor != other.factor {
            return Err(Error::Structural("tensor factors differ".into()));
        }
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().cloned());
        Self::on(self.geometry.clone(), self.factor, terms)
    }

    pub fn scale(&self, s: f64) -> TensorElement {
        let terms = self
            .terms
            .iter()
            .map(|t| TensorTerm {
                x: t.x,
                y: t.y,
                e: t.e.iter().map(|v| v * s).collect(),
            })
            .collect();
        Self::on(self.geometry.clone(), self.factor, terms).expect("scaling keeps terms valid")
    }

    /// Σ_i ⟨T x_i − T y_i, e_i⟩ for T into the dual of the factor.
    pub fn pair_with_map(&self, t: &LipschitzMap) -> Result<f64> {
        crate::free_space::same_space(self.space(), &t.domain)?;
        if t.codomain.dim != self.factor.dim {
            return Err(Error::DimensionMismatch {
                expected: self.factor.dim,
                got: t.codomain.dim,
            });
        }
        if t.codomain.p != self.factor.p.conjugate() {
            return Err(Error::Structural(format!(
                "map codomain ℓ_{} is not the dual of ℓ_{}",
                t.codomain.p, self.factor.p
            )));
        }
        Ok(self.terms.iter().map(|term| dot(&t.diff(term.x, term.y), &term.e)).sum())
    }

    fn e_space(&self) -> Space {
        Space::Ell(self.factor)
    }

    fn e_dual(&self) -> Space {
        Space::Ell(self.factor.dual())
    }
}

/// Σ_{c,k} |R_ck| d(c, 0) ‖e_k‖: a π-bound, hence a bound for every
/// cross-norm, on what a representation fails to reproduce.
fn residual_bound(u: &TensorElement, m: &DMatrix<f64>, approx: &DMatrix<f64>) -> f64 {
    let space = u.space();
    let mut total = 0.0;
    for c in 0..m.nrows() {
        let d = space.dist(space.point_of_coord(c), space.base());
        for k in 0..m.ncols() {
            let r = (m[(c, k)] - approx[(c, k)]).abs();
            if r != 0.0 {
                let mut e = vec![0.0; m.ncols()];
                e[k] = 1.0;
                total += r * d * u.factor.norm(&e);
            }
        }
    }
    total
}

fn outer_sum(left: &[Vec<f64>], right: &[Vec<f64>], n: usize, k: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, k);
    for (a, b) in left.iter().zip(right) {
        m += DVector::from_column_slice(a) * DVector::from_column_slice(b).transpose();
    }
    m
}

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::DimensionMismatch { expected: a, got: b });
    }
    Ok(())
}

fn free(u: &TensorElement) -> Space {
    Space::Free(u.geometry.clone())
}

/// Value of a representation Σ l_i ⊗ r_i for the given norm.
fn representation_value(kind: CrossKind, u: &TensorElement, p: Exponent, left: &[Vec<f64>], right: &[Vec<f64>]) -> Result<f64> {
    check_lengths(left.len(), right.len())?;
    let f = free(u);
    let e = u.e_space();
    for (l, r) in left.iter().zip(right) {
        f.check(l)?;
        e.check(r)?;
    }
    let m = u.matrix();
    let core = match kind {
        CrossKind::ProjL | CrossKind::InjL => left.iter().zip(right).map(|(l, r)| f.norm(l) * e.norm(r)).sum(),
        CrossKind::DpL => f.weak_norm(left, p, 0, 0).upper * e.strong_norm(right, p.conjugate()),
        CrossKind::GpL => f.strong_norm(left, p.conjugate()) * e.weak_norm(right, p, 0, 0).upper,
        CrossKind::Mu | CrossKind::Cs => {
            return Err(Error::Structural("this norm needs a molecule representation".into()))
        }
    };
    Ok(core + residual_bound(u, &m, &outer_sum(left, right, m.nrows(), m.ncols())))
}

fn molecule_value(
    kind: CrossKind,
    u: &TensorElement,
    p: Exponent,
    molecules: &[(usize, usize, f64)],
    right: &[Vec<f64>],
) -> Result<f64> {
    check_lengths(molecules.len(), right.len())?;
    let space = u.space();
    let mut left = Vec::with_capacity(molecules.len());
    let mut sizes = Vec::with_capacity(molecules.len());
    for &(x, y, lambda) in molecules {
        if x >= space.len() || y >= space.len() || x == y {
            return Err(Error::DegenerateMolecule(format!("pair ({x}, {y})")));
        }
        left.push(molecule_coeffs(space, x, y).into_iter().map(|c| c * lambda).collect::<Vec<f64>>());
        sizes.push(lambda.abs() * space.dist(x, y));
    }
    let f = free(u);
    let e = u.e_space();
    for r in right {
        e.check(r)?;
    }
    let m = u.matrix();
    let core = match kind {
        CrossKind::ProjL | CrossKind::InjL => sizes.iter().zip(right).map(|(s, r)| s * e.norm(r)).sum(),
        CrossKind::DpL => f.weak_norm(&left, p, 0, 0).upper * e.strong_norm(right, p.conjugate()),
        CrossKind::GpL | CrossKind::Mu => p.conjugate().combine(sizes.iter().copied()) * e.weak_norm(right, p, 0, 0).upper,
        CrossKind::Cs => f.weak_norm(&left, p.conjugate(), 0, 0).upper * e.strong_norm(right, p),
    };
    Ok(core + residual_bound(u, &m, &outer_sum(&left, right, m.nrows(), m.ncols())))
}

/// Λ as an operator F(X) → E*.
fn dual_operator(u: &TensorElement, lambda: &[Vec<f64>]) -> Result<LinearOperator> {
    let n = u.space().free_dim();
    check_lengths(n, lambda.len())?;
    for row in lambda {
        check_lengths(u.factor.dim, row.len())?;
    }
    LinearOperator::new(
        free(u),
        u.e_dual(),
        DMatrix::from_fn(u.factor.dim, n, |k, c| lambda[c][k]),
    )
}

fn frob_pairing(lambda: &[Vec<f64>], m: &DMatrix<f64>) -> f64 {
    let mut s = 0.0;
    for (c, row) in lambda.iter().enumerate() {
        for (k, v) in row.iter().enumerate() {
            s += v * m[(c, k)];
        }
    }
    s
}

pub(crate) fn lower_value(kind: CrossKind, u: &TensorElement, p: Exponent, cert: &Certificate) -> Result<f64> {
    let m = u.matrix();
    match cert {
        Certificate::RankOneFunctional { values, dual } => {
            let space = u.space();
            check_lengths(space.len(), values.len())?;
            u.factor.dual().check(dual)?;
            let lip = lip_constant_of_values(space, values);
            let en = u.factor.dual_norm(dual);
            if lip == 0.0 || en == 0.0 {
                return Ok(0.0);
            }
            let base = values[space.base()];
            let me = &m * DVector::from_column_slice(dual);
            let pairing: f64 = (0..m.nrows())
                .map(|c| (values[space.point_of_coord(c)] - base) * me[c])
                .sum();
            Ok(pairing.abs() / (lip * en))
        }
        Certificate::DualOperator { matrix, summing } => {
            let op = dual_operator(u, matrix)?;
            let pairing = frob_pairing(matrix, &m).abs();
            if pairing == 0.0 {
                return Ok(0.0);
            }
            let bound = match (kind, summing) {
                (CrossKind::ProjL, None) => summing::op_norm_exact(&op)?.map(|v| v.0).unwrap_or(f64::INFINITY),
                (CrossKind::DpL, Some(c)) => certify::upper_value(&Problem::Pi(op, p), c)?,
                (CrossKind::GpL | CrossKind::Mu, Some(c)) => certify::upper_value(&Problem::Dp(op, p), c)?,
                _ => return Err(Error::Structural("dual operator certificate does not fit this norm".into())),
            };
            Ok(pairing / bound)
        }
        Certificate::Design { generators, weights } if kind == CrossKind::DpL && p.is_two() => {
            if !u.factor.is_euclidean() {
                return Err(Error::Structural("design certificates need a Euclidean factor".into()));
            }
            check_lengths(generators.len(), weights.len())?;
            let k = u.factor.dim;
            // tr(H^{1/2}) for H = BᵀB is the nuclear norm of B; taking it from
            // the SVD of B avoids the √ε error of rooting H's eigenvalues
            let mut b = DMatrix::zeros(generators.len(), k);
            let mut mass = 0.0;
            for (i, (g, &w)) in generators.iter().zip(weights).enumerate() {
                free(u).dual().check(g)?;
                if w < 0.0 {
                    return Err(Error::Structural("negative design weight".into()));
                }
                mass += w * u.geometry.lip_norm(g).max(1.0).powi(2);
                let hg = m.transpose() * DVector::from_column_slice(g);
                b.row_mut(i).copy_from(&(hg.transpose() * w.sqrt()));
            }
            if mass == 0.0 {
                return Ok(0.0);
            }
            let phi: f64 = b.singular_values().iter().sum();
            Ok(phi / mass.sqrt())
        }
        Certificate::DualSequence { functionals } if matches!(kind, CrossKind::GpL | CrossKind::Mu) && p.is_two() => {
            let lip = Space::Lip(u.geometry.clone());
            for z in functionals {
                lip.check(z)?;
            }
            let images: Vec<Vec<f64>> = functionals
                .iter()
                .map(|z| (m.transpose() * DVector::from_column_slice(z)).iter().copied().collect())
                .collect();
            let strong = u.e_space().strong_norm(&images, Exponent::two());
            if strong == 0.0 {
                return Ok(0.0);
            }
            Ok(strong / lip.weak_norm(functionals, Exponent::two(), 0, 0).upper)
        }
        Certificate::PairingMap { values, summing } if kind == CrossKind::Cs => {
            let Certificate::LipschitzPietsch { functionals, weights, .. } = summing.as_ref() else {
                return Err(Error::Structural("pairing map needs a Lipschitz Pietsch certificate".into()));
            };
            let t = LipschitzMap::new(u.space().clone(), u.factor.dual(), values.clone())?;
            let pairing = u.pair_with_map(&t)?.abs();
            if pairing == 0.0 {
                return Ok(0.0);
            }
            let op = t.linearize_on(&u.geometry);
            Ok(pairing / summing::lipschitz_pietsch_value(&t, &op, p.conjugate(), functionals, weights)?)
        }
        _ => Err(Error::Structural(format!(
            "certificate cannot bound the {} norm from below",
            kind.name()
        ))),
    }
}

pub(crate) fn upper_value(kind: CrossKind, u: &TensorElement, p: Exponent, cert: &Certificate) -> Result<f64> {
    match cert {
        Certificate::Representation { left, right } => representation_value(kind, u, p, left, right),
        Certificate::MoleculeRepresentation { molecules, right } => molecule_value(kind, u, p, molecules, right),
        Certificate::Recompute { method } if method == "lip-vertex-enumeration" && kind == CrossKind::InjL => {
            let m = u.matrix();
            Ok(u
                .geometry
                .vertices()?
                .iter()
                .map(|v| u.factor.norm((m.transpose() * DVector::from_column_slice(v)).as_slice()))
                .fold(0.0, f64::max))
        }
        _ => Err(Error::Structural(format!(
            "certificate cannot bound the {} norm from above",
            kind.name()
        ))),
    }
}

/// |⟨T, u⟩| / (certified d_p^L upper bound of u), u in X ⊠ E*.
pub(crate) fn pairing_ratio_value(
    t: &LipschitzMap,
    p: Exponent,
    terms: &[(usize, usize, Vec<f64>)],
    norm: &Certificate,
) -> Result<f64> {
    let u = TensorElement::new(
        t.domain.clone(),
        t.codomain.dual(),
        terms
            .iter()
            .map(|(x, y, e)| TensorTerm { x: *x, y: *y, e: e.clone() })
            .collect(),
    )?;
    let pairing = u.pair_with_map(t)?.abs();
    if pairing == 0.0 {
        return Ok(0.0);
    }
    let d = upper_value(CrossKind::DpL, &u, p, norm)?;
    Ok(pairing / d)
}

/// Estimator dispatch. `p` is ignored by π^L and ε^L.
pub fn cross_norm(kind: CrossKind, u: &TensorElement, p: Exponent, cfg: &Config) -> Result<NormEstimate> {
    if kind.uses_exponent() {
        p.require_open_range()?;
    }
    let problem = Problem::Cross {
        kind,
        tensor: u.clone(),
        p,
    };
    if u.is_zero() {
        return seal(&problem, Certificate::Trivial, Certificate::ZeroOperand, false);
    }
    let (lowers, uppers, loose) = match kind {
        CrossKind::ProjL => proj_candidates(u)?,
        CrossKind::InjL => inj_candidates(u)?,
        CrossKind::DpL => dp_candidates(u, p, cfg, vec![])?,
        CrossKind::GpL | CrossKind::Mu => gp_candidates(kind, u, p, cfg)?,
        CrossKind::Cs => cs_candidates(u, p, cfg)?,
    };
    let lower = pick(&problem, lowers, true)?;
    let upper = pick(&problem, uppers, false)?;
    seal(&problem, lower, upper, loose)
}

pub fn proj_norm_l(u: &TensorElement, cfg: &Config) -> Result<NormEstimate> {
    cross_norm(CrossKind::ProjL, u, Exponent::two(), cfg)
}

pub fn inj_norm_l(u: &TensorElement, cfg: &Config) -> Result<NormEstimate> {
    cross_norm(CrossKind::InjL, u, Exponent::two(), cfg)
}

pub fn dp_norm_l(u: &TensorElement, p: Exponent, cfg: &Config) -> Result<NormEstimate> {
    cross_norm(CrossKind::DpL, u, p, cfg)
}

pub fn gp_norm_l(u: &TensorElement, p: Exponent, cfg: &Config) -> Result<NormEstimate> {
    cross_norm(CrossKind::GpL, u, p, cfg)
}

pub fn mu_norm(u: &TensorElement, p: Exponent, cfg: &Config) -> Result<NormEstimate> {
    cross_norm(CrossKind::Mu, u, p, cfg)
}

pub fn cs_norm(u: &TensorElement, p: Exponent, cfg: &Config) -> Result<NormEstimate> {
    cross_norm(CrossKind::Cs, u, p, cfg)
}

/// Best certificate by certified value; earlier candidates win ties.
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
        if !v.is_finite() {
            continue;
        }
        let better = match &best {
            None => true,
            Some((b, _)) => (lower && v > *b) || (!lower && v < *b),
        };
        if better {
            best = Some((v, c));
        }
    }
    best.map(|b| b.1)
        .ok_or_else(|| Error::Internal("no certificate candidate evaluated".into()))
}

type Candidates = (Vec<Certificate>, Vec<Certificate>, bool);

/// The input terms as a molecule representation.
fn input_representation(u: &TensorElement) -> Certificate {
    Certificate::MoleculeRepresentation {
        molecules: u.terms.iter().map(|t| (t.x, t.y, 1.0)).collect(),
        right: u.terms.iter().map(|t| t.e.clone()).collect(),
    }
}

/// Σ_c δ(c, 0) ⊗ M_c.
fn point_representation(u: &TensorElement, m: &DMatrix<f64>) -> Certificate {
    let space = u.space();
    Certificate::MoleculeRepresentation {
        molecules: (0..m.nrows()).map(|c| (space.point_of_coord(c), space.base(), 1.0)).collect(),
        right: (0..m.nrows()).map(|c| m.row(c).iter().copied().collect()).collect(),
    }
}

fn svd_representation(m: &DMatrix<f64>) -> Certificate {
    let svd = m.clone().svd(true, true);
    let (Some(uu), Some(vt)) = (svd.u, svd.v_t) else {
        return Certificate::Representation { left: vec![], right: vec![] };
    };
    let top = svd.singular_values.max();
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&k| svd.singular_values[k] > 1e-14 * top)
        .collect();
    Certificate::Representation {
        left: keep
            .iter()
            .map(|&k| uu.column(k).iter().map(|x| x * svd.singular_values[k]).collect())
            .collect(),
        right: keep.iter().map(|&k| vt.row(k).iter().copied().collect()).collect(),
    }
}

/// f ⊗ e* functionals: each Lipschitz-ball vertex with its norming e*, or
/// LP-optimal f for a few e* when the vertices are out of reach.
fn rank_one_candidates(u: &TensorElement, m: &DMatrix<f64>) -> Result<Vec<Certificate>> {
    let space = u.space();
    let full = |coords: &[f64]| {
        let mut values = vec![0.0; space.len()];
        for (c, v) in coords.iter().enumerate() {
            values[space.point_of_coord(c)] = *v;
        }
        values
    };
    let mut scored: Vec<(f64, Certificate)> = Vec::new();
    match u.geometry.vertices() {
        Ok(verts) => {
            for v in verts {
                let h: Vec<f64> = (m.transpose() * DVector::from_column_slice(v)).iter().copied().collect();
                let val = u.factor.norm(&h);
                if val > 0.0 {
                    scored.push((
                        val,
                        Certificate::RankOneFunctional {
                            values: full(v),
                            dual: u.factor.norming_functional(&h),
                        },
                    ));
                }
            }
        }
        Err(Error::Capacity { .. }) => {
            let k = u.factor.dim;
            let mut duals: Vec<Vec<f64>> = Vec::new();
            if let Some(vt) = m.clone().svd(false, true).v_t {
                for i in 0..vt.nrows() {
                    let r: Vec<f64> = vt.row(i).iter().copied().collect();
                    duals.push(u.factor.norming_functional(&r));
                }
            }
            for j in 0..k {
                let mut e = vec![0.0; k];
                e[j] = 1.0;
                duals.push(e);
            }
            for d in duals {
                let me: Vec<f64> = (m * DVector::from_column_slice(&d)).iter().copied().collect();
                let (val, f) = ae_dual_norm(space, &me)?;
                if val > 0.0 {
                    scored.push((val / u.factor.dual_norm(&d).max(1e-300), Certificate::RankOneFunctional { values: f.values, dual: d }));
                }
            }
        }
        Err(e) => return Err(e),
    }
    // stable: ties keep enumeration order
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));
    Ok(scored.into_iter().take(4).map(|s| s.1).collect())
}

fn base_candidates(u: &TensorElement, m: &DMatrix<f64>, molecules_only: bool) -> Result<Candidates> {
    let lowers = rank_one_candidates(u, m)?;
    let mut uppers = vec![input_representation(u), point_representation(u, m)];
    if !molecules_only {
        uppers.push(svd_representation(m));
    }
    Ok((lowers, uppers, true))
}

fn proj_candidates(u: &TensorElement) -> Result<Candidates> {
    let m = u.matrix();
    let (mut lowers, mut uppers, _) = base_candidates(u, &m, false)?;
    let (lambda, beta) = if u.factor.p.is_one() || u.factor.p.is_infinite() {
        proj_lp(u, &m)?
    } else {
        proj_irls(u, &m)
    };
    let g = &u.geometry;
    uppers.push(Certificate::MoleculeRepresentation {
        molecules: g
            .pairs
            .iter()
            .map(|&(x, y)| (x, y, 1.0 / g.space.dist(x, y)))
            .collect(),
        right: beta,
    });
    lowers.push(Certificate::DualOperator {
        matrix: lambda,
        summing: None,
    });
    let loose = !(u.factor.p.is_one() || u.factor.p.is_two() || u.factor.p.is_infinite());
    Ok((lowers, uppers, loose))
}

/// min Σ_g ‖β_g‖ s.t. Σ_g m̂_g β_gᵀ = M as an LP (E = ℓ_1 or ℓ_∞).
/// Returns the equality duals Λ (rows = free coordinates) and the β_g.
fn proj_lp(u: &TensorElement, m: &DMatrix<f64>) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let g = &u.geometry;
    let (n, k) = m.shape();
    let mut lp = LpBuilder::new(Sense::Minimize);
    let beta: Vec<Vec<usize>> = g
        .unit_molecules
        .iter()
        .map(|_| (0..k).map(|_| lp.add_var(0.0, true)).collect())
        .collect();
    if u.factor.p.is_one() {
        for bg in &beta {
            for &b in bg {
                let t = lp.add_var(1.0, false);
                lp.add_row(vec![(t, 1.0), (b, -1.0)], Relation::Ge, 0.0);
                lp.add_row(vec![(t, 1.0), (b, 1.0)], Relation::Ge, 0.0);
            }
        }
    } else {
        for bg in &beta {
            let t = lp.add_var(1.0, false);
            for &b in bg {
                lp.add_row(vec![(t, 1.0), (b, -1.0)], Relation::Ge, 0.0);
                lp.add_row(vec![(t, 1.0), (b, 1.0)], Relation::Ge, 0.0);
            }
        }
    }
    let mut eq_rows = vec![vec![0usize; k]; n];
    for (c, row) in eq_rows.iter_mut().enumerate() {
        for (kk, slot) in row.iter_mut().enumerate() {
            let coeffs = g
                .unit_molecules
                .iter()
                .zip(&beta)
                .filter(|(mol, _)| mol[c] != 0.0)
                .map(|(mol, bg)| (bg[kk], mol[c]))
                .collect();
            *slot = lp.add_row(coeffs, Relation::Eq, m[(c, kk)]);
        }
    }
    let sol = lp.solve()?;
    if sol.status != LpStatus::Optimal {
        return Err(Error::Internal(format!("projective LP reported {:?}", sol.status)));
    }
    let lambda = eq_rows
        .iter()
        .map(|row| row.iter().map(|&r| sol.duals[r]).collect())
        .collect();
    let b = beta
        .iter()
        .map(|bg| bg.iter().map(|&v| sol.x[v]).collect())
        .collect();
    Ok((lambda, b))
}

/// Reweighted least squares for min Σ_g ‖β_g‖_2 s.t. Σ_g m̂_g β_gᵀ = M.
/// Each step solves the weighted problem exactly; Λ = K⁻¹M with
/// K = Σ w_g m̂_g m̂_gᵀ is the matching dual point.
fn proj_irls(u: &TensorElement, m: &DMatrix<f64>) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let g = &u.geometry;
    let n = m.nrows();
    let a = DMatrix::from_fn(n, g.unit_molecules.len(), |c, j| g.unit_molecules[j][c]);
    let mut w = vec![1.0; g.unit_molecules.len()];
    let scale = m.amax().max(1e-300);
    let mut eps = scale;
    let mut best_upper = (f64::INFINITY, vec![]);
    let mut best_lower = (f64::NEG_INFINITY, vec![]);
    for _ in 0..2000 {
        let mut kmat = DMatrix::zeros(n, n);
        for (j, wj) in w.iter().enumerate() {
            let col = a.column(j);
            kmat += col * col.transpose() * *wj;
        }
        let Some(chol) = kmat.cholesky() else { break };
        let lambda = chol.solve(m);
        let at_l = a.transpose() * &lambda;
        let beta: Vec<Vec<f64>> = (0..at_l.nrows())
            .map(|j| at_l.row(j).iter().map(|v| v * w[j]).collect())
            .collect();
        let upper: f64 = beta.iter().map(|b| b.iter().map(|v| v * v).sum::<f64>().sqrt()).sum();
        let dn = (0..at_l.nrows())
            .map(|j| at_l.row(j).norm())
            .fold(0.0, f64::max);
        let lower = if dn > 0.0 { lambda.dot(m) / dn } else { 0.0 };
        if upper < best_upper.0 {
            best_upper = (upper, beta.clone());
        }
        if lower > best_lower.0 {
            best_lower = (lower, crate::linalg::matrix_to_rows(&lambda));
        }
        if best_upper.0 - best_lower.0 <= 1e-11 * best_upper.0 {
            break;
        }
        for (j, b) in beta.iter().enumerate() {
            let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
            w[j] = (nb * nb + eps * eps).sqrt();
        }
        eps = (eps * 0.7).max(1e-13 * scale);
    }
    (best_lower.1, best_upper.1)
}

fn inj_candidates(u: &TensorElement) -> Result<Candidates> {
    let m = u.matrix();
    let lowers = rank_one_candidates(u, &m)?;
    match u.geometry.vertices() {
        Ok(_) => Ok((lowers, vec![Certificate::Recompute { method: "lip-vertex-enumeration".into() }], false)),
        Err(Error::Capacity { .. }) => {
            let (_, uppers, _) = proj_candidates(u)?;
            Ok((lowers, uppers, true))
        }
        Err(e) => Err(e),
    }
}

fn dp_candidates(u: &TensorElement, p: Exponent, cfg: &Config, extra: Vec<Certificate>) -> Result<Candidates> {
    let m = u.matrix();
    let (mut lowers, mut uppers, mut loose) = base_candidates(u, &m, false)?;
    uppers.extend(extra);
    if p.is_two() && u.factor.is_euclidean() {
        if let Ok(verts) = u.geometry.vertices() {
            let (l, up) = dp2_design(u, &m, verts);
            lowers.push(l);
            uppers.push(up);
            return Ok((lowers, uppers, false));
        }
    }
    if let Some(found) = representation_search(CrossKind::DpL, u, p, &m, &uppers, cfg)? {
        uppers.push(found);
    }
    loose = loose && true;
    Ok((lowers, uppers, loose))
}

/// d_2 with a Euclidean factor: maximize tr((Σ λ_v h_v h_vᵀ)^{1/2}),
/// h_v = Mᵀv over Lipschitz-ball vertices. The optimal H = W Σ Wᵀ gives the
/// representation A = M W Σ^{-1/4}, B = W Σ^{1/4}.
fn dp2_design(u: &TensorElement, m: &DMatrix<f64>, verts: &[Vec<f64>]) -> (Certificate, Certificate) {
    let gens = dedupe_sign(verts.to_vec());
    let h: Vec<DVector<f64>> = gens.iter().map(|v| m.transpose() * DVector::from_column_slice(v)).collect();
    let d = design(&h);
    let k = u.factor.dim;
    let mut hm = DMatrix::zeros(k, k);
    for (hg, w) in h.iter().zip(&d.weights) {
        hm += hg * hg.transpose() * *w;
    }
    let (vals, vecs) = sym_eigen(&hm);
    let top = vals.first().copied().unwrap_or(0.0);
    let (mut left, mut right) = (Vec::new(), Vec::new());
    for (l, w) in vals.iter().zip(&vecs) {
        if *l > 1e-13 * top && *l > 0.0 {
            let q = l.powf(0.25);
            left.push((m * w / q).iter().copied().collect());
            right.push((w * q).iter().copied().collect());
        }
    }
    (
        Certificate::Design {
            generators: gens,
            weights: d.weights,
        },
        Certificate::Representation { left, right },
    )
}

fn gp_candidates(kind: CrossKind, u: &TensorElement, p: Exponent, cfg: &Config) -> Result<Candidates> {
    let m = u.matrix();
    let molecules_only = kind == CrossKind::Mu;
    let (mut lowers, mut uppers, _) = base_candidates(u, &m, molecules_only)?;
    let mut loose = true;
    if p.is_two() {
        let (l, up, converged) = mu2_domination(u, &m)?;
        lowers.push(l);
        uppers.push(up);
        loose = !(u.factor.is_euclidean() && converged);
    }
    if loose {
        if let Some(found) = representation_search(kind, u, p, &m, &uppers, cfg)? {
            uppers.push(found);
        }
    }
    Ok((lowers, uppers, loose))
}

/// μ_2² = min Σ t_g over t ≥ 0 with Σ t_g m̂_g m̂_gᵀ ⪰ MMᵀ (unit molecules
/// m̂_g). The domination witness is a dual sequence of Lipschitz
/// functionals; the weights give the molecule representation
/// M = Σ_g (√t_g / d_g) δ_g ⊗ K_g with K = T^{1/2} Âᵀ (Â T Âᵀ)⁻¹ M.
fn mu2_domination(u: &TensorElement, m: &DMatrix<f64>) -> Result<(Certificate, Certificate, bool)> {
    let g = &u.geometry;
    let dom = domination(&g.unit_molecules, &[m * m.transpose()])?;
    let c2 = dom.upper * dom.upper;
    let t: Vec<f64> = dom.weights.iter().map(|w| w * c2).collect();
    let n = m.nrows();
    let mut gram = DMatrix::zeros(n, n);
    for (mol, tg) in g.unit_molecules.iter().zip(&t) {
        let v = DVector::from_column_slice(mol);
        gram += &v * v.transpose() * *tg;
    }
    let chol = gram
        .cholesky()
        .ok_or_else(|| Error::Internal("molecule Gram matrix is singular".into()))?;
    let y = chol.solve(m);
    let (mut molecules, mut right) = (Vec::new(), Vec::new());
    for ((mol, tg), &(x, yy)) in g.unit_molecules.iter().zip(&t).zip(&g.pairs) {
        let s = tg.sqrt();
        let kg: Vec<f64> = (y.transpose() * DVector::from_column_slice(mol) * s).iter().copied().collect();
        molecules.push((x, yy, s / g.space.dist(x, yy)));
        right.push(kg);
    }
    Ok((
        Certificate::DualSequence { functionals: dom.witness },
        Certificate::MoleculeRepresentation { molecules, right },
        dom.converged,
    ))
}

fn cs_candidates(u: &TensorElement, p: Exponent, cfg: &Config) -> Result<Candidates> {
    let m = u.matrix();
    let (mut lowers, mut uppers, _) = base_candidates(u, &m, true)?;
    // a Lipschitz map from the projective dual point, priced by its
    // Lipschitz p*-summing norm
    let (lambda, _) = if u.factor.p.is_one() || u.factor.p.is_infinite() {
        proj_lp(u, &m)?
    } else {
        proj_irls(u, &m)
    };
    let space = u.space();
    let mut values = vec![vec![0.0; u.factor.dim]; space.len()];
    for (c, row) in lambda.iter().enumerate() {
        values[space.point_of_coord(c)] = row.clone();
    }
    if let Ok(t) = LipschitzMap::new(space.clone(), u.factor.dual(), values.clone()) {
        if let Ok(est) = summing::lip_p_summing_norm(&t, p.conjugate(), cfg) {
            lowers.push(Certificate::PairingMap {
                values,
                summing: Box::new(est.upper_cert),
            });
        }
    }
    if let Some(found) = representation_search(CrossKind::Cs, u, p, &m, &uppers, cfg)? {
        uppers.push(found);
    }
    Ok((lowers, uppers, true))
}

/// Seeded local search over representations. General norms search
/// M ≈ A Bᵀ with inner dimension rank + 2; molecule norms search
/// weights λ_g and vectors b_g over all molecules. The objective is the
/// certified value itself, residual included, so any point is valid.
fn representation_search(
    kind: CrossKind,
    u: &TensorElement,
    p: Exponent,
    m: &DMatrix<f64>,
    seeds: &[Certificate],
    cfg: &Config,
) -> Result<Option<Certificate>> {
    let (n, k) = m.shape();
    let g = &u.geometry;
    let molecular = matches!(kind, CrossKind::Mu | CrossKind::Cs);
    let width = if molecular { g.pairs.len() } else { rank(m, 1e-12) + 2 };
    let row = if molecular { 1 + k } else { n + k };
    let decode = |flat: &[f64]| -> Certificate {
        if molecular {
            let mut molecules = Vec::with_capacity(width);
            let mut right = Vec::with_capacity(width);
            for (j, chunk) in flat.chunks(row).enumerate() {
                let (x, y) = g.pairs[j];
                molecules.push((x, y, chunk[0]));
                right.push(chunk[1..].to_vec());
            }
            Certificate::MoleculeRepresentation { molecules, right }
        } else {
            let mut left = Vec::with_capacity(width);
            let mut right = Vec::with_capacity(width);
            for chunk in flat.chunks(row) {
                left.push(chunk[..n].to_vec());
                right.push(chunk[n..].to_vec());
            }
            Certificate::Representation { left, right }
        }
    };
    let value = |flat: &[f64]| -> f64 {
        match upper_value(kind, u, p, &decode(flat)) {
            Ok(v) if v.is_finite() => -v,
            _ => f64::NEG_INFINITY,
        }
    };
    let mut starts = Vec::new();
    for s in seeds {
        if let Some(flat) = encode(s, molecular, g, n, k, width) {
            starts.push(flat);
        }
    }
    if starts.is_empty() {
        return Ok(None);
    }
    let mut rng = search::stream(cfg.seed, 0x7E45);
    let restarts = (cfg.restarts / 8).max(2);
    for i in 0..restarts {
        let mut s = starts[i % starts.len()].clone();
        for v in s.iter_mut() {
            *v += 0.1 * search::gaussian_vec(&mut rng, 1)[0] * m.amax();
        }
        starts.push(s);
    }
    let (val, flat) = search::maximize(&value, starts, cfg.seed, cfg.iterations);
    if !val.is_finite() {
        return Ok(None);
    }
    Ok(Some(decode(&flat)))
}

/// Flattens a seed representation into the search layout, if it fits.
fn encode(c: &Certificate, molecular: bool, g: &FreeGeometry, n: usize, k: usize, width: usize) -> Option<Vec<f64>> {
    match (c, molecular) {
        (Certificate::MoleculeRepresentation { molecules, right }, true) => {
            let mut flat = vec![0.0; width * (1 + k)];
            for (&(x, y, lambda), r) in molecules.iter().zip(right) {
                let (a, b, s) = if x < y { (x, y, 1.0) } else { (y, x, -1.0) };
                let j = g.pairs.iter().position(|&pq| pq == (a, b))?;
                // merge repeated molecules: λ b summed into one slot
                let slot = &mut flat[j * (1 + k)..(j + 1) * (1 + k)];
                if slot[0] == 0.0 {
                    slot[0] = 1.0;
                }
                for (t, v) in slot[1..].iter_mut().zip(r) {
                    *t += s * lambda * v / 1.0;
                }
            }
            Some(flat)
        }
        (Certificate::Representation { left, right }, false) if left.len() <= width => {
            let mut flat = vec![0.0; width * (n + k)];
            for (j, (l, r)) in left.iter().zip(right).enumerate() {
                flat[j * (n + k)..j * (n + k) + n].copy_from_slice(l);
                flat[j * (n + k) + n..(j + 1) * (n + k)].copy_from_slice(r);
            }
            Some(flat)
        }
        _ => None,
    }
}

/// Lower certificate for Π_p^SL(T) from a witness sequence (z_j) in F(X):
/// u = Σ_j z_j ⊗ e*_j with e*_j = ‖T̂ z_j‖^{p−1} times the norming
/// functional of T̂ z_j, paired against T and divided by a certified upper
/// bound for d_p^L(u).
pub fn pairing_certificate(t: &LipschitzMap, p: Exponent, witness: &[Vec<f64>], cfg: &Config) -> Result<Option<Certificate>> {
    let pv = p.require_open_range()?;
    let op = t.linearize();
    let geometry = op.domain.geometry().expect("linearization has a free domain").clone();
    let mut duals = Vec::new();
    for z in witness {
        let img = op.apply(z);
        let nrm = t.codomain.norm(&img);
        let g = t.codomain.norming_functional(&img);
        duals.push(g.iter().map(|v| v * nrm.powf(pv - 1.0)).collect::<Vec<f64>>());
    }
    let n = geometry.dim();
    let factor = t.codomain.dual();
    let m = outer_sum(witness, &duals, n, factor.dim);
    let u = TensorElement::from_matrix(geometry, factor, &m)?;
    if u.is_zero() {
        return Ok(None);
    }
    let extra = vec![Certificate::Representation {
        left: witness.to_vec(),
        right: duals,
    }];
    let problem = Problem::Cross {
        kind: CrossKind::DpL,
        tensor: u.clone(),
        p,
    };
    let (_, uppers, _) = dp_candidates(&u, p, cfg, extra)?;
    let norm = pick(&problem, uppers, false)?;
    Ok(Some(Certificate::TensorPairing {
        terms: u.terms.iter().map(|t| (t.x, t.y, t.e.clone())).collect(),
        norm: Box::new(norm),
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(n: usize) -> Arc<PointedMetricSpace> {
        Arc::new(PointedMetricSpace::integer_line(n))
    }

    fn term(x: usize, y: usize, e: &[f64]) -> TensorTerm {
        TensorTerm { x, y, e: e.to_vec() }
    }

    #[test]
    fn canonical_matrix_is_representation_free() {
        let s = line(2);
        let e = FinNormedSpace::euclidean(2);
        let a = TensorElement::new(s.clone(), e, vec![term(2, 0, &[1.0, 2.0])]).unwrap();
        let b = TensorElement::new(s, e, vec![term(2, 1, &[1.0, 2.0]), term(1, 0, &[1.0, 2.0])]).unwrap();
        assert_eq!(a.matrix(), b.matrix());
        let z = a.add(&a.scale(-1.0)).unwrap();
        assert!(z.is_zero());
    }

    #[test]
    fn degenerate_terms_are_dropped() {
        let s = line(2);
        let u = TensorElement::new(
            s,
            FinNormedSpace::euclidean(1),
            vec![term(1, 1, &[3.0]), term(1, 0, &[0.0]), term(2, 0, &[1.0])],
        )
        .unwrap();
        assert_eq!(u.terms.len(), 1);
    }

    #[test]
    fn single_terms_give_the_cross_value() {
        let s = line(3);
        let e = FinNormedSpace::euclidean(2);
        let u = TensorElement::new(s, e, vec![term(3, 1, &[3.0, 4.0])]).unwrap();
        let cfg = Config::default();
        for kind in CrossKind::ALL {
            let est = cross_norm(kind, &u, Exponent::two(), &cfg).unwrap();
            assert!((est.lower - 10.0).abs() < 1e-6 && (est.upper - 10.0).abs() < 1e-6, "{kind:?}: {est:?}");
        }
    }

    #[test]
    fn pairing_with_rank_one_map() {
        let s = line(2);
        let f = crate::free_space::LipschitzFunctional::new(s.clone(), vec![0.0, 1.0, 0.5]).unwrap();
        let t = LipschitzMap::rank_one(&f, &[2.0, -1.0], FinNormedSpace::euclidean(2)).unwrap();
        let u = TensorElement::new(s, FinNormedSpace::euclidean(2), vec![term(2, 1, &[1.0, 1.0])]).unwrap();
        let expected = (0.5 - 1.0) * (2.0 - 1.0);
        assert!((u.pair_with_map(&t).unwrap() - expected).abs() < 1e-12);
        // trace pairing with the linearization
        let m = u.matrix();
        let tr = (t.linearize().matrix * m).trace();
        assert!((tr - expected).abs() < 1e-12);
    }

    #[test]
    fn two_term_brackets_are_tight() {
        let s = line(2);
        let u = TensorElement::new(
            s,
            FinNormedSpace::euclidean(2),
            vec![term(1, 0, &[1.0, 0.0]), term(2, 1, &[0.3, 1.0])],
        )
        .unwrap();
        let cfg = Config::default();
        for kind in [CrossKind::ProjL, CrossKind::InjL, CrossKind::DpL, CrossKind::GpL, CrossKind::Mu] {
            let est = cross_norm(kind, &u, Exponent::two(), &cfg).unwrap();
            assert!(est.relative_width() < 0.05, "{kind:?}: {est:?}");
        }
        let eps = inj_norm_l(&u, &cfg).unwrap();
        let pi = proj_norm_l(&u, &cfg).unwrap();
        assert!(eps.upper <= pi.upper + 1e-9);
    }

    #[test]
    fn mu_and_g_agree_at_two() {
        let s = Arc::new(PointedMetricSpace::from_matrix(vec![
            vec![0.0, 1.0, 1.5],
            vec![1.0, 0.0, 2.0],
            vec![1.5, 2.0, 0.0],
        ]).unwrap());
        let u = TensorElement::new(
            s,
            FinNormedSpace::euclidean(2),
            vec![term(1, 0, &[1.0, -0.5]), term(2, 1, &[0.2, 0.7])],
        )
        .unwrap();
        let cfg = Config::default();
        let mu = mu_norm(&u, Exponent::two(), &cfg).unwrap();
        let g = gp_norm_l(&u, Exponent::two(), &cfg).unwrap();
        assert!(mu.overlaps(&g, 1e-9), "{mu:?} {g:?}");
        assert!(mu.relative_width() < 1e-6 && g.relative_width() < 1e-6);
    }
}

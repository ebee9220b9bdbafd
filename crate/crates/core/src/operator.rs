//! Finite-dimensional normed spaces that appear as domains and codomains of
//! operators, and linear operators between them.
//!
//! Besides ℓ_q^n, the free space F(X) and its dual Lip_0(X) occur. Both are
//! polyhedral: the dual ball of F(X) is the Lipschitz unit ball (finitely many
//! vertices), and the dual ball of Lip_0(X) is the convex hull of ± the
//! normalized molecules.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::estimate::NormEstimate;
use crate::free_space::{ae_norm, FreeGeometry};
use crate::spaces::{dot, weak_norm, Exponent, FinNormedSpace, PointedMetricSpace};

/// A finite-dimensional normed space in coordinates.
#[derive(Debug, Clone)]
pub enum Space {
    /// F(X), coordinates over the non-base points.
    Free(Arc<FreeGeometry>),
    /// Lip_0(X) = F(X)*, values at the non-base points.
    Lip(Arc<FreeGeometry>),
    Ell(FinNormedSpace),
}

impl PartialEq for Space {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Space::Free(a), Space::Free(b)) | (Space::Lip(a), Space::Lip(b)) => a.space == b.space,
            (Space::Ell(a), Space::Ell(b)) => a == b,
            _ => false,
        }
    }
}

impl Space {
    pub fn free(space: Arc<PointedMetricSpace>) -> Self {
        Space::Free(Arc::new(FreeGeometry::new(space)))
    }

    pub fn dim(&self) -> usize {
        match self {
            Space::Free(g) | Space::Lip(g) => g.dim(),
            Space::Ell(e) => e.dim,
        }
    }

    pub fn dual(&self) -> Space {
        match self {
            Space::Free(g) => Space::Lip(g.clone()),
            Space::Lip(g) => Space::Free(g.clone()),
            Space::Ell(e) => Space::Ell(e.dual()),
        }
    }

    pub fn is_euclidean(&self) -> bool {
        matches!(self, Space::Ell(e) if e.is_euclidean())
    }

    pub fn geometry(&self) -> Option<&Arc<FreeGeometry>> {
        match self {
            Space::Free(g) | Space::Lip(g) => Some(g),
            Space::Ell(_) => None,
        }
    }

    pub fn norm(&self, x: &[f64]) -> f64 {
        match self {
            Space::Free(g) => g.norm(x),
            Space::Lip(g) => g.lip_norm(x),
            Space::Ell(e) => e.norm(x),
        }
    }

    pub fn dual_norm(&self, x: &[f64]) -> f64 {
        self.dual().norm(x)
    }

    /// Vertices of the dual unit ball when it is a polytope.
    pub fn dual_ball_vertices(&self) -> Result<Option<Vec<Vec<f64>>>> {
        match self {
            Space::Free(g) => Ok(Some(g.vertices()?.to_vec())),
            Space::Lip(g) => Ok(Some(
                g.unit_molecules
                    .iter()
                    .flat_map(|m| [m.clone(), m.iter().map(|x| -x).collect()])
                    .collect(),
            )),
            Space::Ell(e) => e.dual_ball_vertices(),
        }
    }

    /// Dual-ball vertices with one representative per ± pair. Enough for
    /// anything that only sees |⟨v, x⟩|.
    pub fn dual_vertices_up_to_sign(&self) -> Result<Option<Vec<Vec<f64>>>> {
        Ok(self.dual_ball_vertices()?.map(dedupe_sign))
    }

    /// A dual-ball element g with ⟨g, x⟩ = ‖x‖.
    pub fn norming_functional(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Space::Ell(e) => e.norming_functional(x),
            Space::Free(g) => match g.vertices() {
                Ok(v) => best_signed(v, x),
                Err(_) => match ae_norm(&g.space, x) {
                    Ok(est) => match est.lower_cert {
                        crate::estimate::Certificate::Functional { values } => {
                            g.space.non_base().iter().map(|&i| values[i]).collect()
                        }
                        _ => vec![0.0; x.len()],
                    },
                    Err(_) => vec![0.0; x.len()],
                },
            },
            Space::Lip(g) => best_signed(&g.unit_molecules, x),
        }
    }

    /// Weak ℓ_p norm of a sequence; exact for the polyhedral spaces.
    pub fn weak_norm(&self, vectors: &[Vec<f64>], p: Exponent, seed: u64, restarts: usize) -> NormEstimate {
        match self {
            Space::Ell(e) => weak_norm(e, vectors, p, seed, restarts),
            _ => match self.dual_ball_vertices() {
                Ok(Some(v)) => {
                    let value = v
                        .iter()
                        .map(|g| p.combine(vectors.iter().map(|x| dot(g, x))))
                        .fold(0.0, f64::max);
                    NormEstimate::exact(value, crate::estimate::Certificate::Recompute {
                        method: "dual-vertex-enumeration".into(),
                    })
                }
                _ => {
                    // no enumeration: Hölder against the strong norm
                    let strong = p.combine(vectors.iter().map(|x| self.norm(x)));
                    let mut e = NormEstimate::bracket(
                        0.0,
                        strong,
                        crate::estimate::Certificate::Trivial,
                        crate::estimate::Certificate::Recompute {
                            method: "holder-strong-norm".into(),
                        },
                    );
                    e.loose = true;
                    e
                }
            },
        }
    }

    pub fn strong_norm(&self, vectors: &[Vec<f64>], p: Exponent) -> f64 {
        p.combine(vectors.iter().map(|x| self.norm(x)))
    }

    pub fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(())
    }
}

fn best_signed(cands: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    let mut best = (f64::NEG_INFINITY, 0usize);
    for (i, v) in cands.iter().enumerate() {
        let t = dot(v, x).abs();
        if t > best.0 {
            best = (t, i);
        }
    }
    if cands.is_empty() {
        return vec![0.0; x.len()];
    }
    let v = &cands[best.1];
    let s = if dot(v, x) < 0.0 { -1.0 } else { 1.0 };
    v.iter().map(|a| a * s).collect()
}

/// Keeps the first of each ± pair.
pub(crate) fn dedupe_sign(vs: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let key = |v: &[f64]| -> Vec<i64> { v.iter().map(|x| (x * 1e9).round() as i64).collect() };
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::new();
    for v in vs {
        let k = key(&v);
        let neg: Vec<i64> = k.iter().map(|x| -x).collect();
        if seen.contains(&neg) || !seen.insert(k) {
            continue;
        }
        out.push(v);
    }
    out
}

/// A linear map between two coordinate spaces, stored as a
/// codomain-dim × domain-dim matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearOperator {
    pub domain: Space,
    pub codomain: Space,
    pub matrix: DMatrix<f64>,
}

impl LinearOperator {
    pub fn new(domain: Space, codomain: Space, matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.ncols() != domain.dim() {
            return Err(Error::DimensionMismatch {
                expected: domain.dim(),
                got: matrix.ncols(),
            });
        }
        if matrix.nrows() != codomain.dim() {
            return Err(Error::DimensionMismatch {
                expected: codomain.dim(),
                got: matrix.nrows(),
            });
        }
        if matrix.iter().any(|x| !x.is_finite()) {
            return Err(Error::Structural("operator entries must be finite".into()));
        }
        Ok(LinearOperator {
            domain,
            codomain,
            matrix,
        })
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        (&self.matrix * DVector::from_column_slice(x)).iter().copied().collect()
    }

    /// The adjoint between dual spaces.
    pub fn adjoint(&self) -> LinearOperator {
        LinearOperator {
            domain: self.codomain.dual(),
            codomain: self.domain.dual(),
            matrix: self.matrix.transpose(),
        }
    }

    /// self ∘ inner.
    pub fn compose(&self, inner: &LinearOperator) -> Result<LinearOperator> {
        if inner.codomain.dim() != self.domain.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.domain.dim(),
                got: inner.codomain.dim(),
            });
        }
        Ok(LinearOperator {
            domain: inner.domain.clone(),
            codomain: self.codomain.clone(),
            matrix: &self.matrix * &inner.matrix,
        })
    }

    pub fn is_zero(&self) -> bool {
        self.matrix.iter().all(|x| *x == 0.0)
    }

    /// Rows of the matrix: the functionals x ↦ (u x)_i.
    pub fn rows(&self) -> Vec<Vec<f64>> {
        crate::linalg::matrix_to_rows(&self.matrix)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn free_and_lip_are_dual() {
        let s = Arc::new(PointedMetricSpace::integer_line(2));
        let f = Space::free(s);
        let m = vec![1.0, 1.0];
        assert!((f.norm(&m) - 3.0).abs() < 1e-12);
        let g = f.norming_functional(&m);
        assert!((dot(&g, &m) - 3.0).abs() < 1e-12);
        assert!(f.dual().norm(&g) <= 1.0 + 1e-12);
        let verts = f.dual().dual_ball_vertices().unwrap().unwrap();
        assert_eq!(verts.len(), 6);
        assert_eq!(f.dual().dual_vertices_up_to_sign().unwrap().unwrap().len(), 3);
    }

    #[test]
    fn weak_norm_in_free_space() {
        // molecules δ_1, δ_2 − δ_1 on the line: weak ℓ_1 norm is 2
        let s = Arc::new(PointedMetricSpace::integer_line(2));
        let f = Space::free(s);
        let w = f.weak_norm(&[vec![1.0, 0.0], vec![-1.0, 1.0]], Exponent::one(), 0, 0);
        assert!(w.exact && (w.upper - 2.0).abs() < 1e-12);
    }

    #[test]
    fn adjoint_swaps_dual_spaces() {
        let u = LinearOperator::new(
            Space::Ell(FinNormedSpace::new(2, Exponent::one()).unwrap()),
            Space::Ell(FinNormedSpace::euclidean(3)),
            DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]),
        )
        .unwrap();
        let a = u.adjoint();
        assert_eq!(a.matrix.nrows(), 2);
        assert!(matches!(a.codomain, Space::Ell(e) if e.p.is_infinite()));
    }
}

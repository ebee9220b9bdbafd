//! Lipschitz maps from a finite pointed metric space into ℓ_q^n, their
//! linearizations, transposes and compositions.

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::free_space::{FreeGeometry, LipschitzFunctional};
use crate::operator::{LinearOperator, Space};
use crate::spaces::{dot, FinNormedSpace, PointedMetricSpace};

/// Relative tolerance when checking that a metric is induced by a norm.
pub const EMBEDDING_TOLERANCE: f64 = 1e-9;

/// A map X → E tabulated point by point, vanishing at the base point.
#[derive(Debug, Clone, PartialEq)]
pub struct LipschitzMap {
    pub domain: Arc<PointedMetricSpace>,
    pub codomain: FinNormedSpace,
    /// One codomain vector per point of the domain.
    pub values: Vec<Vec<f64>>,
}

impl LipschitzMap {
    pub fn new(domain: Arc<PointedMetricSpace>, codomain: FinNormedSpace, values: Vec<Vec<f64>>) -> Result<Self> {
        if values.len() != domain.len() {
            return Err(Error::DimensionMismatch {
                expected: domain.len(),
                got: values.len(),
            });
        }
        for v in &values {
            codomain.check(v)?;
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::Structural("map values must be finite".into()));
            }
        }
        if values[domain.base()].iter().any(|x| *x != 0.0) {
            return Err(Error::NotPointed);
        }
        Ok(LipschitzMap {
            domain,
            codomain,
            values,
        })
    }

    pub fn zero(domain: Arc<PointedMetricSpace>, codomain: FinNormedSpace) -> Self {
        let values = vec![vec![0.0; codomain.dim]; domain.len()];
        LipschitzMap {
            domain,
            codomain,
            values,
        }
    }

    /// f ⊠ e: x ↦ f(x) e.
    pub fn rank_one(f: &LipschitzFunctional, e: &[f64], codomain: FinNormedSpace) -> Result<Self> {
        codomain.check(e)?;
        let values = f
            .values
            .iter()
            .map(|fx| e.iter().map(|ej| fx * ej).collect())
            .collect();
        LipschitzMap::new(f.space.clone(), codomain, values)
    }

    /// The inclusion of a finite subset of a normed space; the first point
    /// must be the origin and becomes the base.
    pub fn inclusion(points: &[Vec<f64>], ambient: FinNormedSpace) -> Result<Self> {
        let space = Arc::new(PointedMetricSpace::from_vectors(points, &ambient)?);
        LipschitzMap::new(space, ambient, points.to_vec())
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().flatten().all(|x| *x == 0.0)
    }

    /// max over pairs of ‖T x − T y‖ / d(x, y), with the attaining pair.
    pub fn lip_constant_with_pair(&self) -> (f64, Option<(usize, usize)>) {
        let mut best = (0.0, None);
        for (i, j) in self.domain.pairs() {
            let r = self.codomain.norm(&self.diff(i, j)) / self.domain.dist(i, j);
            if r > best.0 {
                best = (r, Some((i, j)));
            }
        }
        best
    }

    pub fn lip_constant(&self) -> f64 {
        self.lip_constant_with_pair().0
    }

    /// T x − T y.
    pub fn diff(&self, x: usize, y: usize) -> Vec<f64> {
        self.values[x].iter().zip(&self.values[y]).map(|(a, b)| a - b).collect()
    }

    /// Linearization F(X) → E: column for x is T(x).
    pub fn linearize(&self) -> LinearOperator {
        self.linearize_on(&Arc::new(FreeGeometry::new(self.domain.clone())))
    }

    /// Linearization reusing precomputed free-space geometry.
    pub fn linearize_on(&self, geometry: &Arc<FreeGeometry>) -> LinearOperator {
        let n = self.domain.free_dim();
        let matrix = DMatrix::from_fn(self.codomain.dim, n, |r, c| self.values[self.domain.point_of_coord(c)][r]);
        LinearOperator {
            domain: Space::Free(geometry.clone()),
            codomain: Space::Ell(self.codomain),
            matrix,
        }
    }

    /// The Lipschitz transpose at e*: x ↦ ⟨e*, T x⟩.
    pub fn transpose(&self, dual: &[f64]) -> Result<LipschitzFunctional> {
        self.codomain.check(dual)?;
        let values = self.values.iter().map(|v| dot(dual, v)).collect();
        LipschitzFunctional::new(self.domain.clone(), values)
    }

    /// u ∘ T for a linear u: E → G.
    pub fn compose_linear(&self, u: &LinearOperator) -> Result<LipschitzMap> {
        match (&u.domain, &u.codomain) {
            (Space::Ell(d), Space::Ell(c)) if d.dim == self.codomain.dim => {
                let values = self
                    .values
                    .iter()
                    .map(|v| u.apply(v))
                    .collect();
                LipschitzMap::new(self.domain.clone(), *c, values)
            }
            (Space::Ell(d), Space::Ell(_)) => Err(Error::DimensionMismatch {
                expected: self.codomain.dim,
                got: d.dim,
            }),
            _ => Err(Error::Structural("composition needs an operator between ℓ_q spaces".into())),
        }
    }

    /// T ∘ g for a base-preserving map g: Z → X.
    pub fn compose_lip(&self, g: &PointMap) -> Result<LipschitzMap> {
        if *g.target != *self.domain {
            return Err(Error::Structural("inner map does not land in the domain of the outer map".into()));
        }
        let values = g.images.iter().map(|&i| self.values[i].clone()).collect();
        LipschitzMap::new(g.domain.clone(), self.codomain, values)
    }
}

/// A map between two finite pointed metric spaces, given by the image index
/// of each point. Images must be points of the target, exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct PointMap {
    pub domain: Arc<PointedMetricSpace>,
    pub target: Arc<PointedMetricSpace>,
    pub images: Vec<usize>,
}

impl PointMap {
    pub fn new(domain: Arc<PointedMetricSpace>, target: Arc<PointedMetricSpace>, images: Vec<usize>) -> Result<Self> {
        if images.len() != domain.len() {
            return Err(Error::DimensionMismatch {
                expected: domain.len(),
                got: images.len(),
            });
        }
        if let Some(&bad) = images.iter().find(|&&i| i >= target.len()) {
            return Err(Error::UnknownPoint(bad.to_string()));
        }
        if images[domain.base()] != target.base() {
            return Err(Error::NotPointed);
        }
        Ok(PointMap { domain, target, images })
    }

    /// Builds the map from point identifiers of the target.
    pub fn from_ids(domain: Arc<PointedMetricSpace>, target: Arc<PointedMetricSpace>, ids: &[&str]) -> Result<Self> {
        let images = ids.iter().map(|id| target.index_of(id)).collect::<Result<Vec<_>>>()?;
        PointMap::new(domain, target, images)
    }

    pub fn lip_constant(&self) -> f64 {
        self.domain
            .pairs()
            .into_iter()
            .map(|(i, j)| self.target.dist(self.images[i], self.images[j]) / self.domain.dist(i, j))
            .fold(0.0, f64::max)
    }
}

/// β_X: F(X) → E for X a finite subset of E containing 0 (listed first).
/// Column x is the coordinate vector of x. Fails if the metric of `space`
/// is not the one induced by `ambient`.
pub fn beta_map(space: &Arc<PointedMetricSpace>, points: &[Vec<f64>], ambient: FinNormedSpace) -> Result<LinearOperator> {
    beta_map_on(&Arc::new(FreeGeometry::new(space.clone())), points, ambient)
}

pub fn beta_map_on(geometry: &Arc<FreeGeometry>, points: &[Vec<f64>], ambient: FinNormedSpace) -> Result<LinearOperator> {
    let space = &geometry.space;
    if points.len() != space.len() {
        return Err(Error::DimensionMismatch {
            expected: space.len(),
            got: points.len(),
        });
    }
    for p in points {
        ambient.check(p)?;
    }
    if points[space.base()].iter().any(|x| *x != 0.0) {
        return Err(Error::NotPointed);
    }
    for (i, j) in space.pairs() {
        let diff: Vec<f64> = points[i].iter().zip(&points[j]).map(|(a, b)| a - b).collect();
        let d = ambient.norm(&diff);
        if (d - space.dist(i, j)).abs() > EMBEDDING_TOLERANCE * (1.0 + d) {
            return Err(Error::InvalidMetric(format!(
                "distance between '{}' and '{}' is {} but the ambient norm gives {}",
                space.points()[i],
                space.points()[j],
                space.dist(i, j),
                d
            )));
        }
    }
    let matrix = DMatrix::from_fn(ambient.dim, space.free_dim(), |r, c| points[space.point_of_coord(c)][r]);
    Ok(LinearOperator {
        domain: Space::Free(geometry.clone()),
        codomain: Space::Ell(ambient),
        matrix,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::free_space::molecule;
    use crate::spaces::Exponent;

    fn tri() -> Arc<PointedMetricSpace> {
        Arc::new(
            PointedMetricSpace::from_matrix(vec![
                vec![0.0, 1.0, 2.0],
                vec![1.0, 0.0, 1.0],
                vec![2.0, 1.0, 0.0],
            ])
            .unwrap(),
        )
    }

    #[test]
    fn rejects_unpointed() {
        let e = FinNormedSpace::euclidean(1);
        let r = LipschitzMap::new(tri(), e, vec![vec![1.0], vec![0.0], vec![0.0]]);
        assert_eq!(r, Err(Error::NotPointed));
    }

    #[test]
    fn rank_one_constant() {
        let s = tri();
        let f = LipschitzFunctional::new(s, vec![0.0, 0.5, -0.5]).unwrap();
        for p in [Exponent::one(), Exponent::two(), Exponent::Infinity] {
            let e = FinNormedSpace::new(2, p).unwrap();
            let t = LipschitzMap::rank_one(&f, &[3.0, -4.0], e).unwrap();
            let expected = f.lip_constant() * e.norm(&[3.0, -4.0]);
            assert!((t.lip_constant() - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn inclusion_is_isometric() {
        let pts = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.3, 2.0]];
        let t = LipschitzMap::inclusion(&pts, FinNormedSpace::euclidean(2)).unwrap();
        assert!((t.lip_constant() - 1.0).abs() < 1e-12);
        assert_eq!(LipschitzMap::zero(t.domain.clone(), t.codomain).lip_constant(), 0.0);
    }

    #[test]
    fn linearization_commutes_with_molecules() {
        let s = tri();
        let e = FinNormedSpace::euclidean(2);
        let t = LipschitzMap::new(s.clone(), e, vec![vec![0.0, 0.0], vec![1.0, 2.0], vec![-1.0, 0.5]]).unwrap();
        let lin = t.linearize();
        for (x, y) in [(1, 0), (2, 1), (0, 2)] {
            let m = molecule(&s, x, y).unwrap();
            assert_eq!(lin.apply(&m.coeffs), t.diff(x, y));
        }
    }

    #[test]
    fn transpose_pairs_like_adjoint() {
        let s = tri();
        let e = FinNormedSpace::new(2, Exponent::new(3.0).unwrap()).unwrap();
        let t = LipschitzMap::new(s.clone(), e, vec![vec![0.0, 0.0], vec![1.0, 2.0], vec![-1.0, 0.5]]).unwrap();
        let es = [0.7, -0.2];
        let f = t.transpose(&es).unwrap();
        assert!(f.lip_constant() <= e.dual_norm(&es) * t.lip_constant() + 1e-12);
        let zero = t.transpose(&[0.0, 0.0]).unwrap();
        assert!(zero.values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn beta_checks_metric() {
        let pts = vec![vec![0.0, 0.0], vec![1.0, 0.0]];
        let e = FinNormedSpace::euclidean(2);
        let s = Arc::new(PointedMetricSpace::from_vectors(&pts, &e).unwrap());
        let b = beta_map(&s, &pts, e).unwrap();
        assert_eq!(b.matrix, DMatrix::from_row_slice(2, 1, &[1.0, 0.0]));
        let wrong = Arc::new(PointedMetricSpace::from_matrix(vec![vec![0.0, 2.0], vec![2.0, 0.0]]).unwrap());
        assert!(matches!(beta_map(&wrong, &pts, e), Err(Error::InvalidMetric(_))));
    }

    #[test]
    fn composition_with_point_map() {
        let x = tri();
        let z = Arc::new(PointedMetricSpace::from_matrix(vec![vec![0.0, 2.0], vec![2.0, 0.0]]).unwrap());
        let g = PointMap::from_ids(z, x.clone(), &["0", "2"]).unwrap();
        let e = FinNormedSpace::euclidean(1);
        let t = LipschitzMap::new(x, e, vec![vec![0.0], vec![1.0], vec![3.0]]).unwrap();
        let tg = t.compose_lip(&g).unwrap();
        assert_eq!(tg.values, vec![vec![0.0], vec![3.0]]);
        assert!(tg.lip_constant() <= t.lip_constant() * g.lip_constant() + 1e-12);
    }
}

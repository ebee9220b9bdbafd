//! Finite pointed metric spaces and the ℓ_q^n family of normed spaces.
//!
//! A [`PointedMetricSpace`] is a validated distance matrix with a distinguished
//! base point. A [`FinNormedSpace`] is ℓ_q^n for some q ∈ [1, ∞]; its dual is
//! ℓ_{q*}^n under the coordinate pairing. [`VectorSequence`] evaluates the
//! strong and weak ℓ_p norms of finite sequences in such a space.

use std::fmt;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::estimate::{Certificate, NormEstimate};
use crate::linalg;

/// Violations smaller than this are floating-point slack.
pub const METRIC_TOLERANCE: f64 = 1e-12;
/// Distances below this fraction of the diameter are treated as degenerate.
pub const DEGENERATE_RATIO: f64 = 1e-9;
/// Largest dimension for which dual-ball vertices are enumerated.
pub const VERTEX_DIM_CAP: usize = 16;

/// An exponent in [1, ∞]. Infinity is its own variant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Exponent {
    Finite(f64),
    Infinity,
}

impl Exponent {
    pub fn new(p: f64) -> Result<Self> {
        if p.is_infinite() && p > 0.0 {
            Ok(Exponent::Infinity)
        } else if p.is_finite() && p >= 1.0 {
            Ok(Exponent::Finite(p))
        } else {
            Err(Error::UnsupportedExponent(format!("{p}")))
        }
    }

    pub fn one() -> Self {
        Exponent::Finite(1.0)
    }

    pub fn two() -> Self {
        Exponent::Finite(2.0)
    }

    /// The exponent p* with 1/p + 1/p* = 1.
    pub fn conjugate(self) -> Self {
        match self {
            Exponent::Infinity => Exponent::Finite(1.0),
            Exponent::Finite(p) if p == 1.0 => Exponent::Infinity,
            Exponent::Finite(p) => Exponent::Finite(p / (p - 1.0)),
        }
    }

    pub fn is_one(self) -> bool {
        matches!(self, Exponent::Finite(p) if p == 1.0)
    }

    pub fn is_two(self) -> bool {
        matches!(self, Exponent::Finite(p) if p == 2.0)
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, Exponent::Infinity)
    }

    /// Finite value, if any.
    pub fn value(self) -> Option<f64> {
        match self {
            Exponent::Finite(p) => Some(p),
            Exponent::Infinity => None,
        }
    }

    /// Rejects 1 and ∞; the Chevet–Saphar machinery needs p ∈ (1, ∞).
    pub fn require_open_range(self) -> Result<f64> {
        match self {
            Exponent::Finite(p) if p > 1.0 => Ok(p),
            other => Err(Error::UnsupportedExponent(other.to_string())),
        }
    }

    /// Rejects ∞.
    pub fn require_finite(self) -> Result<f64> {
        self.value()
            .ok_or_else(|| Error::UnsupportedExponent(self.to_string()))
    }

    /// ℓ_p norm of a slice of nonnegative magnitudes.
    pub fn combine(self, magnitudes: impl IntoIterator<Item = f64>) -> f64 {
        match self {
            Exponent::Infinity => magnitudes.into_iter().fold(0.0, |m, x| m.max(x.abs())),
            Exponent::Finite(p) if p == 1.0 => magnitudes.into_iter().map(f64::abs).sum(),
            Exponent::Finite(p) if p == 2.0 => magnitudes
                .into_iter()
                .map(|x| x * x)
                .sum::<f64>()
                .sqrt(),
            Exponent::Finite(p) => {
                // scale by the max to avoid overflow for large p
                let v: Vec<f64> = magnitudes.into_iter().map(f64::abs).collect();
                let m = v.iter().cloned().fold(0.0, f64::max);
                if m == 0.0 {
                    return 0.0;
                }
                m * v.iter().map(|x| (x / m).powf(p)).sum::<f64>().powf(1.0 / p)
            }
        }
    }
}

impl fmt::Display for Exponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Exponent::Finite(p) => write!(f, "{p}"),
            Exponent::Infinity => write!(f, "inf"),
        }
    }
}

impl std::str::FromStr for Exponent {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "inf" | "infinity" | "∞" => Ok(Exponent::Infinity),
            t => {
                let p: f64 = t
                    .parse()
                    .map_err(|_| Error::UnsupportedExponent(s.to_string()))?;
                Exponent::new(p)
            }
        }
    }
}

impl Serialize for Exponent {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Exponent::Finite(p) => s.serialize_f64(*p),
            Exponent::Infinity => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Exponent {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        let parsed = match Raw::deserialize(d)? {
            Raw::Num(p) => Exponent::new(p),
            Raw::Text(t) => t.parse(),
        };
        parsed.map_err(serde::de::Error::custom)
    }
}

/// ℓ_q^n: `dim` coordinates with the ℓ_q norm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FinNormedSpace {
    pub dim: usize,
    pub p: Exponent,
}

impl FinNormedSpace {
    pub fn new(dim: usize, p: Exponent) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Structural("normed space must have dim ≥ 1".into()));
        }
        Ok(FinNormedSpace { dim, p })
    }

    pub fn euclidean(dim: usize) -> Self {
        FinNormedSpace {
            dim,
            p: Exponent::two(),
        }
    }

    pub fn is_euclidean(&self) -> bool {
        self.p.is_two()
    }

    /// The dual space ℓ_{q*}^n.
    pub fn dual(&self) -> Self {
        FinNormedSpace {
            dim: self.dim,
            p: self.p.conjugate(),
        }
    }

    pub fn norm(&self, v: &[f64]) -> f64 {
        self.p.combine(v.iter().copied())
    }

    pub fn dual_norm(&self, v: &[f64]) -> f64 {
        self.dual().norm(v)
    }

    pub fn check(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: v.len(),
            });
        }
        Ok(())
    }

    /// A functional g in the dual unit ball with ⟨g, v⟩ = ‖v‖.
    pub fn norming_functional(&self, v: &[f64]) -> Vec<f64> {
        let n = self.norm(v);
        if n == 0.0 {
            return vec![0.0; v.len()];
        }
        match self.p {
            Exponent::Finite(p) if p == 1.0 => v.iter().map(|x| sign(*x)).collect(),
            Exponent::Infinity => {
                let j = argmax_abs(v);
                let mut g = vec![0.0; v.len()];
                g[j] = sign(v[j]);
                g
            }
            Exponent::Finite(p) => v
                .iter()
                .map(|x| sign(*x) * (x.abs() / n).powf(p - 1.0))
                .collect(),
        }
    }

    /// Vertices of the unit ball when it is a polytope (q = 1 or q = ∞).
    pub fn ball_vertices(&self) -> Result<Option<Vec<Vec<f64>>>> {
        polytope_vertices(self.dim, self.p)
    }

    /// Vertices of the dual unit ball when it is a polytope.
    pub fn dual_ball_vertices(&self) -> Result<Option<Vec<Vec<f64>>>> {
        polytope_vertices(self.dim, self.p.conjugate())
    }
}

fn polytope_vertices(dim: usize, p: Exponent) -> Result<Option<Vec<Vec<f64>>>> {
    if p.is_one() {
        let mut out = Vec::with_capacity(2 * dim);
        for j in 0..dim {
            for s in [1.0, -1.0] {
                let mut v = vec![0.0; dim];
                v[j] = s;
                out.push(v);
            }
        }
        Ok(Some(out))
    } else if p.is_infinite() {
        if dim > VERTEX_DIM_CAP {
            return Err(Error::Capacity {
                what: "sign-vector enumeration dimension",
                size: dim,
                cap: VERTEX_DIM_CAP,
            });
        }
        Ok(Some(sign_vectors(dim)))
    } else {
        Ok(None)
    }
}

/// All 2^dim vectors in {−1, +1}^dim, lexicographic with −1 < +1 reversed
/// (the all-plus vector first).
pub fn sign_vectors(dim: usize) -> Vec<Vec<f64>> {
    (0..1usize << dim)
        .map(|mask| {
            (0..dim)
                .map(|j| if mask >> j & 1 == 0 { 1.0 } else { -1.0 })
                .collect()
        })
        .collect()
}

pub(crate) fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn argmax_abs(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    best
}

/// Raw metric-space data as read from JSON, before validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricData {
    pub points: Vec<String>,
    pub base: usize,
    pub dist: Vec<Vec<f64>>,
}

/// One failed metric axiom.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    Diagonal { i: usize, value: f64 },
    Symmetry { i: usize, j: usize, slack: f64 },
    NonPositive { i: usize, j: usize, value: f64 },
    /// dist[i][k] exceeds dist[i][j] + dist[j][k] by `slack`.
    Triangle { i: usize, j: usize, k: usize, slack: f64 },
}

impl MetricData {
    /// Lists every violated metric axiom. An empty list means the data is a
    /// metric up to [`METRIC_TOLERANCE`].
    pub fn validate(&self) -> Result<Vec<Violation>> {
        let n = self.points.len();
        if n == 0 {
            return Err(Error::Structural("metric space has no points".into()));
        }
        if self.base >= n {
            return Err(Error::Structural(format!(
                "base index {} out of range for {} points",
                self.base, n
            )));
        }
        if self.dist.len() != n || self.dist.iter().any(|r| r.len() != n) {
            return Err(Error::Structural(format!(
                "distance matrix must be {n}×{n}"
            )));
        }
        if self.dist.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::Structural("distances must be finite".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for p in &self.points {
            if !seen.insert(p) {
                return Err(Error::Structural(format!("duplicate point id '{p}'")));
            }
        }
        let d = &self.dist;
        let mut out = Vec::new();
        for i in 0..n {
            if d[i][i].abs() > METRIC_TOLERANCE {
                out.push(Violation::Diagonal { i, value: d[i][i] });
            }
        }
        for i in 0..n {
            for j in i + 1..n {
                let slack = (d[i][j] - d[j][i]).abs();
                if slack > METRIC_TOLERANCE {
                    out.push(Violation::Symmetry { i, j, slack });
                }
                for (a, b) in [(i, j), (j, i)] {
                    if d[a][b] <= 0.0 {
                        out.push(Violation::NonPositive {
                            i: a,
                            j: b,
                            value: d[a][b],
                        });
                    }
                }
            }
        }
        for i in 0..n {
            for k in i + 1..n {
                for j in 0..n {
                    if j == i || j == k {
                        continue;
                    }
                    let slack = d[i][k] - (d[i][j] + d[j][k]);
                    if slack > METRIC_TOLERANCE {
                        out.push(Violation::Triangle { i, j, k, slack });
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Validates a metric; free-function form of [`MetricData::validate`].
pub fn validate_metric(data: &MetricData) -> Result<Vec<Violation>> {
    data.validate()
}

/// A finite metric space with a distinguished base point.
///
/// Free-space coordinates are indexed by the non-base points in their listed
/// order; `coord` and `point_of_coord` translate between the two.
#[derive(Debug, Clone, PartialEq)]
pub struct PointedMetricSpace {
    points: Vec<String>,
    base: usize,
    dist: Vec<Vec<f64>>,
    coord_of: Vec<Option<usize>>,
    non_base: Vec<usize>,
}

impl PointedMetricSpace {
    pub fn new(data: MetricData) -> Result<Self> {
        let violations = data.validate()?;
        if let Some(v) = violations.first() {
            return Err(Error::InvalidMetric(format!(
                "{} violation(s), first: {:?}",
                violations.len(),
                v
            )));
        }
        let n = data.points.len();
        let diam = data.dist.iter().flatten().cloned().fold(0.0, f64::max);
        for i in 0..n {
            for j in i + 1..n {
                if data.dist[i][j] < DEGENERATE_RATIO * diam {
                    return Err(Error::InvalidMetric(format!(
                        "degenerate distance {:e} between '{}' and '{}'",
                        data.dist[i][j], data.points[i], data.points[j]
                    )));
                }
            }
        }
        // symmetrize away sub-tolerance asymmetry
        let mut dist = data.dist.clone();
        for i in 0..n {
            dist[i][i] = 0.0;
            for j in i + 1..n {
                let m = 0.5 * (dist[i][j] + dist[j][i]);
                dist[i][j] = m;
                dist[j][i] = m;
            }
        }
        let mut coord_of = vec![None; n];
        let mut non_base = Vec::with_capacity(n.saturating_sub(1));
        for i in 0..n {
            if i != data.base {
                coord_of[i] = Some(non_base.len());
                non_base.push(i);
            }
        }
        Ok(PointedMetricSpace {
            points: data.points,
            base: data.base,
            dist,
            coord_of,
            non_base,
        })
    }

    /// Builds a space from a distance matrix with points named "0", "1", ...
    /// and base point 0.
    pub fn from_matrix(dist: Vec<Vec<f64>>) -> Result<Self> {
        let points = (0..dist.len()).map(|i| i.to_string()).collect();
        Self::new(MetricData {
            points,
            base: 0,
            dist,
        })
    }

    /// Metric induced on `points` (first point is the base) by the ambient ℓ_q norm.
    pub fn from_vectors(points: &[Vec<f64>], ambient: &FinNormedSpace) -> Result<Self> {
        let n = points.len();
        let mut dist = vec![vec![0.0; n]; n];
        for i in 0..n {
            ambient.check(&points[i])?;
            for j in 0..n {
                let diff: Vec<f64> = points[i].iter().zip(&points[j]).map(|(a, b)| a - b).collect();
                dist[i][j] = ambient.norm(&diff);
            }
        }
        Self::from_matrix(dist)
    }

    /// The line space {0, 1, ..., n} ⊂ ℝ.
    pub fn integer_line(n: usize) -> Self {
        let dist = (0..=n)
            .map(|i| (0..=n).map(|j| (i as f64 - j as f64).abs()).collect())
            .collect();
        Self::from_matrix(dist).expect("integer line is a metric")
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Dimension of the free space: number of non-base points.
    pub fn free_dim(&self) -> usize {
        self.non_base.len()
    }

    pub fn base(&self) -> usize {
        self.base
    }

    pub fn points(&self) -> &[String] {
        &self.points
    }

    pub fn dist(&self, i: usize, j: usize) -> f64 {
        self.dist[i][j]
    }

    pub fn dist_matrix(&self) -> &[Vec<f64>] {
        &self.dist
    }

    pub fn coord(&self, point: usize) -> Option<usize> {
        self.coord_of[point]
    }

    pub fn point_of_coord(&self, c: usize) -> usize {
        self.non_base[c]
    }

    pub fn non_base(&self) -> &[usize] {
        &self.non_base
    }

    pub fn index_of(&self, id: &str) -> Result<usize> {
        self.points
            .iter()
            .position(|p| p == id)
            .ok_or_else(|| Error::UnknownPoint(id.to_string()))
    }

    /// Unordered pairs {i, j}, i < j.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        let n = self.len();
        let mut out = Vec::with_capacity(n * (n - 1) / 2);
        for i in 0..n {
            for j in i + 1..n {
                out.push((i, j));
            }
        }
        out
    }

    pub fn to_data(&self) -> MetricData {
        MetricData {
            points: self.points.clone(),
            base: self.base,
            dist: self.dist.clone(),
        }
    }

    pub fn min_distance(&self) -> f64 {
        self.pairs()
            .into_iter()
            .map(|(i, j)| self.dist[i][j])
            .fold(f64::INFINITY, f64::min)
    }
}

/// Points drawn from a standard Gaussian in ℓ_2^k, with induced distances.
/// The first point is moved to the origin and becomes the base.
pub fn random_euclidean_points<R: Rng>(n: usize, k: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let mut pts: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..k).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
        .collect();
    if let Some(first) = pts.first().cloned() {
        for p in pts.iter_mut() {
            for (a, b) in p.iter_mut().zip(&first) {
                *a -= b;
            }
        }
    }
    pts
}

pub fn random_euclidean_metric<R: Rng>(n: usize, k: usize, rng: &mut R) -> Result<PointedMetricSpace> {
    let pts = random_euclidean_points(n, k, rng);
    PointedMetricSpace::from_vectors(&pts, &FinNormedSpace::euclidean(k))
}

/// Random symmetric weights in [0.5, 2.5) repaired by shortest-path closure.
pub fn random_repaired_metric<R: Rng>(n: usize, rng: &mut R) -> Result<PointedMetricSpace> {
    let mut d = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let w = 0.5 + 2.0 * rng.random::<f64>();
            d[i][j] = w;
            d[j][i] = w;
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                let via = d[i][k] + d[k][j];
                if via < d[i][j] {
                    d[i][j] = via;
                }
            }
        }
    }
    PointedMetricSpace::from_matrix(d)
}

/// A finite sequence of vectors in a normed space.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorSequence {
    pub space: FinNormedSpace,
    pub vectors: Vec<Vec<f64>>,
}

impl VectorSequence {
    pub fn new(space: FinNormedSpace, vectors: Vec<Vec<f64>>) -> Result<Self> {
        for v in &vectors {
            space.check(v)?;
        }
        Ok(VectorSequence { space, vectors })
    }

    /// (Σ ‖x_i‖^p)^{1/p}, or the max for p = ∞.
    pub fn strong_norm(&self, p: Exponent) -> f64 {
        p.combine(self.vectors.iter().map(|v| self.space.norm(v)))
    }

    /// sup over the dual unit ball of (Σ |⟨x*, x_i⟩|^p)^{1/p}.
    pub fn weak_norm(&self, p: Exponent) -> NormEstimate {
        weak_norm(&self.space, &self.vectors, p, crate::DEFAULT_SEED, 16)
    }
}

/// Weak ℓ_p norm of `vectors` in `space`.
///
/// Exact when the dual ball is a polytope, when p = 2 on a Euclidean space,
/// and for a single vector. Otherwise the lower side comes from seeded power
/// iteration and the upper side is the strong norm, flagged loose.
pub fn weak_norm(
    space: &FinNormedSpace,
    vectors: &[Vec<f64>],
    p: Exponent,
    seed: u64,
    restarts: usize,
) -> NormEstimate {
    if vectors.is_empty() || vectors.iter().all(|v| v.iter().all(|x| *x == 0.0)) {
        return NormEstimate::zero();
    }
    if vectors.len() == 1 {
        let v = space.norm(&vectors[0]);
        return NormEstimate::exact(v, Certificate::Recompute {
            method: "single-vector".into(),
        });
    }
    if let Ok(Some(verts)) = space.dual_ball_vertices() {
        let value = verts
            .iter()
            .map(|g| p.combine(vectors.iter().map(|x| dot(g, x))))
            .fold(0.0, f64::max);
        return NormEstimate::exact(value, Certificate::Recompute {
            method: "dual-vertex-enumeration".into(),
        });
    }
    if p.is_two() && space.is_euclidean() {
        let m = DMatrix::from_fn(vectors.len(), space.dim, |i, j| vectors[i][j]);
        let value = linalg::spectral_norm(&m);
        return NormEstimate::exact(value, Certificate::Recompute {
            method: "spectral".into(),
        });
    }
    let (lower, witness) = weak_norm_ascent(space, vectors, p, seed, restarts);
    let strong = p.combine(vectors.iter().map(|v| space.norm(v)));
    let mut est = NormEstimate::bracket(
        lower.min(strong),
        strong,
        Certificate::DualVector { coords: witness },
        Certificate::Recompute {
            method: "holder-strong-norm".into(),
        },
    );
    est.loose = true;
    est
}

/// Power-type ascent for sup_{‖g‖_dual ≤ 1} ‖(⟨g, x_i⟩)_i‖_p. Every step is
/// monotone for this convex objective.
fn weak_norm_ascent(
    space: &FinNormedSpace,
    vectors: &[Vec<f64>],
    p: Exponent,
    seed: u64,
    restarts: usize,
) -> (f64, Vec<f64>) {
    use rand::SeedableRng;
    let dual = space.dual();
    let eval = |g: &[f64]| p.combine(vectors.iter().map(|x| dot(g, x)));
    let mut best = (0.0, vec![0.0; space.dim]);
    let mut starts: Vec<Vec<f64>> = vectors.iter().map(|x| space.norming_functional(x)).collect();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..restarts {
        starts.push((0..space.dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect());
    }
    for start in starts {
        let n = dual.norm(&start);
        if n == 0.0 {
            continue;
        }
        let mut g: Vec<f64> = start.iter().map(|x| x / n).collect();
        let mut val = eval(&g);
        for _ in 0..200 {
            // gradient of Σ|⟨g,x_i⟩|^p up to a positive factor
            let pv = p.value().unwrap_or(64.0);
            let mut grad = vec![0.0; space.dim];
            for x in vectors {
                let t = dot(&g, x);
                let w = sign(t) * t.abs().powf(pv - 1.0);
                for (gr, xi) in grad.iter_mut().zip(x) {
                    *gr += w * xi;
                }
            }
            // best point of the dual ball against grad is the ℓ_q norming vector
            let next = space.norming_functional(&grad);
            let nv = eval(&next);
            if nv <= val * (1.0 + 1e-14) {
                break;
            }
            g = next;
            val = nv;
        }
        if val > best.0 {
            best = (val, g);
        }
    }
    best
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line3() -> MetricData {
        MetricData {
            points: vec!["0".into(), "a".into(), "b".into()],
            base: 0,
            dist: vec![vec![0.0, 1.0, 2.0], vec![1.0, 0.0, 1.0], vec![2.0, 1.0, 0.0]],
        }
    }

    #[test]
    fn line_metric_is_valid() {
        assert!(line3().validate().unwrap().is_empty());
    }

    #[test]
    fn triangle_violation_reports_slack() {
        let mut d = line3();
        d.dist = vec![vec![0.0, 5.0, 1.0], vec![5.0, 0.0, 1.0], vec![1.0, 1.0, 0.0]];
        let v = d.validate().unwrap();
        assert_eq!(v.len(), 1);
        match &v[0] {
            Violation::Triangle { i, j, k, slack } => {
                assert_eq!((*i, *j, *k), (0, 2, 1));
                assert!((slack - 3.0).abs() < 1e-12);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(PointedMetricSpace::new(d).is_err());
    }

    #[test]
    fn asymmetry_is_reported() {
        let mut d = line3();
        d.dist[1][0] = 1.5;
        let v = d.validate().unwrap();
        assert!(v.iter().any(|x| matches!(x, Violation::Symmetry { i: 0, j: 1, .. })));
    }

    #[test]
    fn dimension_mismatch_is_structural() {
        let mut d = line3();
        d.dist.pop();
        assert!(matches!(d.validate(), Err(Error::Structural(_))));
    }

    #[test]
    fn degenerate_distance_rejected() {
        let d = vec![vec![0.0, 1.0, 1.0], vec![1.0, 0.0, 1e-12], vec![1.0, 1e-12, 0.0]];
        assert!(PointedMetricSpace::from_matrix(d).is_err());
    }

    #[test]
    fn conjugate_exponents() {
        assert_eq!(Exponent::two().conjugate(), Exponent::two());
        assert_eq!(Exponent::one().conjugate(), Exponent::Infinity);
        assert_eq!(Exponent::Infinity.conjugate(), Exponent::one());
        assert_eq!(Exponent::Finite(3.0).conjugate(), Exponent::Finite(1.5));
        assert!(Exponent::new(0.5).is_err());
    }

    #[test]
    fn exponent_json() {
        let e: Exponent = serde_json::from_str("\"inf\"").unwrap();
        assert_eq!(e, Exponent::Infinity);
        let e: Exponent = serde_json::from_str("1.5").unwrap();
        assert_eq!(e, Exponent::Finite(1.5));
        assert_eq!(serde_json::to_string(&Exponent::Infinity).unwrap(), "\"inf\"");
    }

    #[test]
    fn strong_norm_examples() {
        let e = FinNormedSpace::euclidean(2);
        let s = VectorSequence::new(e, vec![vec![1.0, 0.0]]).unwrap();
        assert_eq!(s.strong_norm(Exponent::two()), 1.0);
        let s = VectorSequence::new(e, vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert!((s.strong_norm(Exponent::two()) - 2f64.sqrt()).abs() < 1e-15);
        let s = VectorSequence::new(e, vec![vec![3.0, 4.0]]).unwrap();
        assert_eq!(s.strong_norm(Exponent::one()), 5.0);
        let s = VectorSequence::new(e, vec![]).unwrap();
        assert_eq!(s.strong_norm(Exponent::two()), 0.0);
    }

    #[test]
    fn weak_norm_identity_is_one() {
        let e = FinNormedSpace::euclidean(2);
        let s = VectorSequence::new(e, vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let w = s.weak_norm(Exponent::two());
        assert!(w.exact);
        assert!((w.upper - 1.0).abs() < 1e-12);
        // brute force over a dense grid of the unit circle
        let mut best: f64 = 0.0;
        for k in 0..20000 {
            let t = k as f64 * std::f64::consts::TAU / 20000.0;
            let g = [t.cos(), t.sin()];
            best = best.max((g[0] * g[0] + g[1] * g[1]).sqrt());
        }
        assert!((w.upper - best).abs() < 1e-3);
    }

    #[test]
    fn weak_norm_linf_by_vertices() {
        let e = FinNormedSpace::new(2, Exponent::Infinity).unwrap();
        let s = VectorSequence::new(e, vec![vec![1.0, 0.0], vec![1.0, 0.0]]).unwrap();
        let w = s.weak_norm(Exponent::one());
        assert!(w.exact);
        assert!((w.lower - 2.0).abs() < 1e-12);
    }

    #[test]
    fn weak_norm_single_vector_is_norm() {
        let e = FinNormedSpace::new(3, Exponent::Finite(3.0)).unwrap();
        let x = vec![1.0, -2.0, 0.5];
        let s = VectorSequence::new(e, vec![x.clone()]).unwrap();
        let w = s.weak_norm(Exponent::Finite(1.7));
        assert!((w.lower - e.norm(&x)).abs() < 1e-9);
        assert!((w.upper - e.norm(&x)).abs() < 1e-9);
    }

    #[test]
    fn loose_weak_norm_brackets() {
        let e = FinNormedSpace::new(3, Exponent::Finite(3.0)).unwrap();
        let s = VectorSequence::new(
            e,
            vec![vec![1.0, 0.2, 0.0], vec![0.0, 1.0, -0.3], vec![0.4, 0.0, 1.0]],
        )
        .unwrap();
        let w = s.weak_norm(Exponent::Finite(1.5));
        assert!(w.loose);
        assert!(w.lower <= w.upper + 1e-12);
        assert!(w.lower > 0.5);
    }

    #[test]
    fn norming_functional_attains_norm() {
        for p in [Exponent::one(), Exponent::two(), Exponent::Finite(3.0), Exponent::Infinity] {
            let e = FinNormedSpace::new(3, p).unwrap();
            let x = vec![0.3, -1.2, 0.7];
            let g = e.norming_functional(&x);
            assert!((dot(&g, &x) - e.norm(&x)).abs() < 1e-12);
            assert!(e.dual_norm(&g) <= 1.0 + 1e-12);
        }
    }
}

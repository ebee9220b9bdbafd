//! The Lipschitz-free space F(X) over a finite pointed metric space.
//!
//! Elements are coefficient vectors over the non-base points (the
//! coefficient of δ_x). The Arens–Eells norm is the optimal value of a
//! transportation LP; its LP dual is a 1-Lipschitz functional vanishing at
//! the base point, which certifies the lower side.

use std::collections::{BTreeMap, HashSet};
use std::sync::{Arc, OnceLock};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::estimate::{Certificate, NormEstimate, CERT_TOLERANCE};
use crate::lp::{LpBuilder, LpStatus, Relation, Sense, StandardLp};
use crate::spaces::PointedMetricSpace;

/// Coefficients below this magnitude are set to zero.
pub const COEFF_EPS: f64 = 1e-14;
/// Largest space whose Lipschitz unit ball is enumerated.
pub const LIP_VERTEX_CAP: usize = 10;
const LIP_STATE_CAP: usize = 4_000_000;

/// An element of F(X): Σ_x c_x δ_x over the non-base points.
#[derive(Debug, Clone, PartialEq)]
pub struct FreeVector {
    pub space: Arc<PointedMetricSpace>,
    pub coeffs: Vec<f64>,
}

impl FreeVector {
    pub fn new(space: Arc<PointedMetricSpace>, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != space.free_dim() {
            return Err(Error::DimensionMismatch {
                expected: space.free_dim(),
                got: coeffs.len(),
            });
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::Structural("coefficients must be finite".into()));
        }
        let coeffs = coeffs
            .into_iter()
            .map(|c| if c.abs() < COEFF_EPS { 0.0 } else { c })
            .collect();
        Ok(FreeVector { space, coeffs })
    }

    pub fn zero(space: Arc<PointedMetricSpace>) -> Self {
        let n = space.free_dim();
        FreeVector {
            space,
            coeffs: vec![0.0; n],
        }
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|c| *c == 0.0)
    }

    /// Coefficient vector over all points; the base coefficient makes the
    /// total zero.
    pub fn extended(&self) -> Vec<f64> {
        extended_coeffs(&self.space, &self.coeffs)
    }

    pub fn add(&self, other: &FreeVector) -> Result<FreeVector> {
        same_space(&self.space, &other.space)?;
        let c = self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a + b).collect();
        FreeVector::new(self.space.clone(), c)
    }

    pub fn scale(&self, s: f64) -> FreeVector {
        FreeVector {
            space: self.space.clone(),
            coeffs: self.coeffs.iter().map(|c| c * s).collect(),
        }
    }

    /// Arens–Eells norm with primal (flow) and dual (functional) certificates.
    pub fn ae_norm(&self) -> Result<NormEstimate> {
        ae_norm(&self.space, &self.coeffs)
    }

    pub fn ae_dual_norm(&self) -> Result<(f64, LipschitzFunctional)> {
        ae_dual_norm(&self.space, &self.coeffs)
    }
}

pub(crate) fn same_space(a: &PointedMetricSpace, b: &PointedMetricSpace) -> Result<()> {
    if a != b {
        return Err(Error::Structural("operands live on different metric spaces".into()));
    }
    Ok(())
}

pub(crate) fn extended_coeffs(space: &PointedMetricSpace, coeffs: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; space.len()];
    let mut total = 0.0;
    for (c, &v) in coeffs.iter().enumerate() {
        out[space.point_of_coord(c)] = v;
        total += v;
    }
    out[space.base()] = -total;
    out
}

/// δ(x, y) = δ_x − δ_y; if y is the base point this is δ_X(x).
pub fn molecule(space: &Arc<PointedMetricSpace>, x: usize, y: usize) -> Result<FreeVector> {
    if x == y {
        return Err(Error::DegenerateMolecule(space.points()[x].clone()));
    }
    Ok(FreeVector {
        space: space.clone(),
        coeffs: molecule_coeffs(space, x, y),
    })
}

pub(crate) fn molecule_coeffs(space: &PointedMetricSpace, x: usize, y: usize) -> Vec<f64> {
    let mut c = vec![0.0; space.free_dim()];
    if let Some(i) = space.coord(x) {
        c[i] += 1.0;
    }
    if let Some(j) = space.coord(y) {
        c[j] -= 1.0;
    }
    c
}

/// A real function on X vanishing at the base point.
#[derive(Debug, Clone, PartialEq)]
pub struct LipschitzFunctional {
    pub space: Arc<PointedMetricSpace>,
    /// One value per point, base included (and equal to 0).
    pub values: Vec<f64>,
}

impl LipschitzFunctional {
    pub fn new(space: Arc<PointedMetricSpace>, values: Vec<f64>) -> Result<Self> {
        if values.len() != space.len() {
            return Err(Error::DimensionMismatch {
                expected: space.len(),
                got: values.len(),
            });
        }
        if values[space.base()] != 0.0 {
            return Err(Error::NotPointed);
        }
        Ok(LipschitzFunctional { space, values })
    }

    /// Builds a functional from its values at the non-base coordinates.
    pub fn from_coords(space: Arc<PointedMetricSpace>, coords: &[f64]) -> Self {
        let mut values = vec![0.0; space.len()];
        for (c, v) in coords.iter().enumerate() {
            values[space.point_of_coord(c)] = *v;
        }
        LipschitzFunctional { space, values }
    }

    pub fn coords(&self) -> Vec<f64> {
        self.space.non_base().iter().map(|&i| self.values[i]).collect()
    }

    pub fn lip_constant(&self) -> f64 {
        lip_constant_of_values(&self.space, &self.values)
    }
}

pub(crate) fn lip_constant_of_values(space: &PointedMetricSpace, values: &[f64]) -> f64 {
    space
        .pairs()
        .into_iter()
        .map(|(i, j)| (values[i] - values[j]).abs() / space.dist(i, j))
        .fold(0.0, f64::max)
}

/// ⟨f, m⟩ = Σ_x c_x f(x).
pub fn pair(f: &LipschitzFunctional, m: &FreeVector) -> Result<f64> {
    same_space(&f.space, &m.space)?;
    Ok(m
        .coeffs
        .iter()
        .enumerate()
        .map(|(c, v)| v * f.values[m.space.point_of_coord(c)])
        .sum())
}

/// Arens–Eells norm of the element with the given coordinates.
///
/// Solves min Σ flow_ij d(i,j) over nonnegative flows whose net outflow at
/// each point equals the extended coefficient vector. The LP duals form a
/// 1-Lipschitz functional; both are returned as certificates.
pub fn ae_norm(space: &PointedMetricSpace, coeffs: &[f64]) -> Result<NormEstimate> {
    if coeffs.len() != space.free_dim() {
        return Err(Error::DimensionMismatch {
            expected: space.free_dim(),
            got: coeffs.len(),
        });
    }
    let coeffs: Vec<f64> = coeffs
        .iter()
        .map(|c| if c.abs() < COEFF_EPS { 0.0 } else { *c })
        .collect();
    if coeffs.iter().all(|c| *c == 0.0) {
        return Ok(NormEstimate::zero());
    }
    let n = space.len();
    let ext = extended_coeffs(space, &coeffs);
    let arcs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
        .collect();
    let rows = space.free_dim();
    let mut a = DMatrix::zeros(rows, arcs.len());
    for (k, &(i, j)) in arcs.iter().enumerate() {
        if let Some(r) = space.coord(i) {
            a[(r, k)] += 1.0;
        }
        if let Some(r) = space.coord(j) {
            a[(r, k)] -= 1.0;
        }
    }
    let lp = StandardLp {
        a,
        b: coeffs.clone(),
        c: arcs.iter().map(|&(i, j)| space.dist(i, j)).collect(),
    };
    let sol = lp.solve()?;
    if sol.status != LpStatus::Optimal {
        return Err(Error::Internal(format!(
            "transport LP reported {:?} on a balanced instance",
            sol.status
        )));
    }
    let mut flow = vec![vec![0.0; n]; n];
    for (k, &(i, j)) in arcs.iter().enumerate() {
        if sol.x[k] > 1e-15 {
            flow[i][j] = sol.x[k];
        }
    }
    let mut values = vec![0.0; n];
    for (r, y) in sol.y.iter().enumerate() {
        values[space.point_of_coord(r)] = *y;
    }
    let upper = flow_cost(space, &flow);
    let lower = functional_bound(space, &values, &ext);
    let divergence = flow_divergence_residual(space, &flow, &ext);
    if divergence > 1e-9 * (1.0 + upper) {
        return Err(Error::Internal(format!(
            "transport flow misses the target by {divergence:e}"
        )));
    }
    Ok(NormEstimate::bracket(
        lower.min(upper),
        upper,
        Certificate::Functional { values },
        Certificate::Flow { flow },
    ))
}

pub(crate) fn flow_cost(space: &PointedMetricSpace, flow: &[Vec<f64>]) -> f64 {
    let n = space.len();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += flow[i][j] * space.dist(i, j);
            }
        }
    }
    s
}

pub(crate) fn flow_divergence_residual(space: &PointedMetricSpace, flow: &[Vec<f64>], ext: &[f64]) -> f64 {
    let n = space.len();
    let mut worst: f64 = 0.0;
    for k in 0..n {
        let out: f64 = (0..n).map(|j| flow[k][j]).sum();
        let inc: f64 = (0..n).map(|j| flow[j][k]).sum();
        worst = worst.max((out - inc - ext[k]).abs());
        for j in 0..n {
            worst = worst.max(-flow[k][j]);
        }
    }
    worst
}

/// Σ c_x f(x) / max(1, Lip f): a valid lower bound for the free norm.
pub(crate) fn functional_bound(space: &PointedMetricSpace, values: &[f64], ext: &[f64]) -> f64 {
    let base = values[space.base()];
    let lip = lip_constant_of_values(space, values);
    let v: f64 = ext.iter().zip(values).map(|(c, f)| c * (f - base)).sum();
    v / lip.max(1.0)
}

/// Kantorovich–Rubinstein dual: max Σ c_x f(x) over 1-Lipschitz f with
/// f(0) = 0, solved as its own LP.
pub fn ae_dual_norm(space: &Arc<PointedMetricSpace>, coeffs: &[f64]) -> Result<(f64, LipschitzFunctional)> {
    if coeffs.len() != space.free_dim() {
        return Err(Error::DimensionMismatch {
            expected: space.free_dim(),
            got: coeffs.len(),
        });
    }
    if coeffs.iter().all(|c| c.abs() < COEFF_EPS) {
        return Ok((0.0, LipschitzFunctional::from_coords(space.clone(), &vec![0.0; space.free_dim()])));
    }
    let mut lp = LpBuilder::new(Sense::Maximize);
    let vars: Vec<usize> = coeffs.iter().map(|c| lp.add_var(*c, true)).collect();
    let var_of = |p: usize| space.coord(p).map(|c| vars[c]);
    for (i, j) in space.pairs() {
        let d = space.dist(i, j);
        for (a, b) in [(i, j), (j, i)] {
            let mut row = Vec::new();
            if let Some(v) = var_of(a) {
                row.push((v, 1.0));
            }
            if let Some(v) = var_of(b) {
                row.push((v, -1.0));
            }
            lp.add_row(row, Relation::Le, d);
        }
    }
    let sol = lp.solve()?;
    if sol.status != LpStatus::Optimal {
        return Err(Error::Internal(format!("dual LP reported {:?}", sol.status)));
    }
    let f = LipschitzFunctional::from_coords(space.clone(), &sol.x);
    Ok((sol.objective, f))
}

/// Vertices of {f : Lip f ≤ 1, f(0) = 0}.
pub fn lip_ball_vertices(space: &Arc<PointedMetricSpace>) -> Result<Vec<LipschitzFunctional>> {
    Ok(lip_ball_vertex_coords(space)?
        .into_iter()
        .map(|c| LipschitzFunctional::from_coords(space.clone(), &c))
        .collect())
}

/// Vertices of the Lipschitz unit ball in free-space coordinates.
///
/// A point of the ball is a vertex exactly when its tight constraints
/// |f(x) − f(y)| = d(x, y) connect every point to the base. The search grows
/// such tight trees from the base one point at a time, deduplicating partial
/// assignments, so every vertex is reached and nothing else is emitted.
pub fn lip_ball_vertex_coords(space: &PointedMetricSpace) -> Result<Vec<Vec<f64>>> {
    let n = space.len();
    if n > LIP_VERTEX_CAP {
        return Err(Error::Capacity {
            what: "Lipschitz-ball vertex enumeration points",
            size: n,
            cap: LIP_VERTEX_CAP,
        });
    }
    if n == 1 {
        return Ok(vec![vec![]]);
    }
    let key = |vals: &[Option<f64>]| -> Vec<i64> {
        vals.iter()
            .map(|v| v.map_or(i64::MIN, |x| (x * 1e9).round() as i64))
            .collect()
    };
    let mut start = vec![None; n];
    start[space.base()] = Some(0.0);
    let mut seen: HashSet<Vec<i64>> = HashSet::new();
    seen.insert(key(&start));
    let mut stack = vec![start];
    let mut done: BTreeMap<Vec<i64>, Vec<f64>> = BTreeMap::new();
    while let Some(state) = stack.pop() {
        let mut complete = true;
        for z in 0..n {
            if state[z].is_some() {
                continue;
            }
            complete = false;
            for s in 0..n {
                let Some(fs) = state[s] else { continue };
                for sgn in [1.0, -1.0] {
                    let val = fs + sgn * space.dist(z, s);
                    let ok = (0..n).all(|t| match state[t] {
                        Some(ft) => (val - ft).abs() <= space.dist(z, t) * (1.0 + 1e-12),
                        None => true,
                    });
                    if !ok {
                        continue;
                    }
                    let mut next = state.clone();
                    next[z] = Some(val);
                    let k = key(&next);
                    if seen.insert(k) {
                        if seen.len() > LIP_STATE_CAP {
                            return Err(Error::Capacity {
                                what: "Lipschitz-ball search states",
                                size: seen.len(),
                                cap: LIP_STATE_CAP,
                            });
                        }
                        stack.push(next);
                    }
                }
            }
        }
        if complete {
            let vals: Vec<f64> = state.iter().map(|v| v.unwrap()).collect();
            let coords = space.non_base().iter().map(|&i| vals[i]).collect();
            done.insert(key(&state), coords);
        }
    }
    Ok(done.into_values().collect())
}

/// Precomputed geometry of F(X) shared by the norm engines: the normalized
/// molecules, and the Lipschitz-ball vertices computed on first use.
#[derive(Debug)]
pub struct FreeGeometry {
    pub space: Arc<PointedMetricSpace>,
    /// Unordered pairs (x, y) with x < y.
    pub pairs: Vec<(usize, usize)>,
    /// δ(x, y) / d(x, y) for each pair, in coordinates.
    pub unit_molecules: Vec<Vec<f64>>,
    vertices: OnceLock<Result<Vec<Vec<f64>>>>,
}

impl FreeGeometry {
    pub fn new(space: Arc<PointedMetricSpace>) -> Self {
        let pairs = space.pairs();
        let unit_molecules = pairs
            .iter()
            .map(|&(x, y)| {
                let d = space.dist(x, y);
                molecule_coeffs(&space, x, y).into_iter().map(|c| c / d).collect()
            })
            .collect();
        FreeGeometry {
            space,
            pairs,
            unit_molecules,
            vertices: OnceLock::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.space.free_dim()
    }

    /// Vertices of the dual unit ball of F(X), in coordinates.
    pub fn vertices(&self) -> Result<&[Vec<f64>]> {
        self.vertices
            .get_or_init(|| lip_ball_vertex_coords(&self.space))
            .as_deref()
            .map_err(Clone::clone)
    }

    /// Free norm through the dual vertices when available, LP otherwise.
    pub fn norm(&self, coeffs: &[f64]) -> f64 {
        match self.vertices() {
            Ok(v) => v
                .iter()
                .map(|f| crate::spaces::dot(f, coeffs).abs())
                .fold(0.0, f64::max),
            Err(_) => ae_norm(&self.space, coeffs).map(|e| e.upper).unwrap_or(f64::INFINITY),
        }
    }

    /// Lipschitz norm of a functional given by its coordinates.
    pub fn lip_norm(&self, coords: &[f64]) -> f64 {
        self.unit_molecules
            .iter()
            .map(|m| crate::spaces::dot(m, coords).abs())
            .fold(0.0, f64::max)
    }
}

/// True when the estimate's two sides agree to the certification tolerance.
pub fn is_exact(e: &NormEstimate) -> bool {
    (e.upper - e.lower).abs() <= CERT_TOLERANCE * (1.0 + e.upper.abs())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn three_point() -> Arc<PointedMetricSpace> {
        // d(0,a)=1, d(0,b)=2, d(a,b)=1
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
    fn molecule_coefficients() {
        let s = three_point();
        assert_eq!(molecule(&s, 1, 0).unwrap().coeffs, vec![1.0, 0.0]);
        assert_eq!(molecule(&s, 1, 2).unwrap().coeffs, vec![1.0, -1.0]);
        assert_eq!(molecule(&s, 0, 2).unwrap().coeffs, vec![0.0, -1.0]);
        assert!(matches!(molecule(&s, 1, 1), Err(Error::DegenerateMolecule(_))));
    }

    #[test]
    fn molecule_norm_is_distance() {
        let s = three_point();
        for (x, y) in [(1, 0), (2, 0), (1, 2)] {
            let e = molecule(&s, x, y).unwrap().ae_norm().unwrap();
            assert!(e.exact);
            assert!((e.upper - s.dist(x, y)).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_vector_norm() {
        let s = three_point();
        let e = FreeVector::zero(s.clone()).ae_norm().unwrap();
        assert_eq!((e.lower, e.upper), (0.0, 0.0));
        assert_eq!(FreeVector::zero(s).ae_dual_norm().unwrap().0, 0.0);
    }

    #[test]
    fn sum_of_point_masses() {
        // δ_a + δ_b: brute-force the dual over a grid of Lip-1 functionals
        let s = three_point();
        let m = FreeVector::new(s.clone(), vec![1.0, 1.0]).unwrap();
        let mut best = f64::NEG_INFINITY;
        for i in 0..=400 {
            for j in 0..=800 {
                let fa = -1.0 + i as f64 * 0.005;
                let fb = -2.0 + j as f64 * 0.005;
                if (fa - fb).abs() <= 1.0 + 1e-12 {
                    best = best.max(fa + fb);
                }
            }
        }
        assert!((best - 3.0).abs() < 1e-9);
        let e = m.ae_norm().unwrap();
        assert!((e.upper - 3.0).abs() < 1e-9 && e.exact);
        let (v, f) = m.ae_dual_norm().unwrap();
        assert!((v - 3.0).abs() < 1e-9);
        assert!((f.values[1] - 1.0).abs() < 1e-9 && (f.values[2] - 2.0).abs() < 1e-9);
        assert!((pair(&f, &m).unwrap() - 3.0).abs() < 1e-9);
    }

    #[test]
    fn pairing_with_molecule() {
        let s = three_point();
        let f = LipschitzFunctional::new(s.clone(), vec![0.0, 0.7, -0.2]).unwrap();
        let m = molecule(&s, 1, 2).unwrap();
        assert!((pair(&f, &m).unwrap() - 0.9).abs() < 1e-15);
        let zero = LipschitzFunctional::new(s.clone(), vec![0.0; 3]).unwrap();
        assert_eq!(pair(&zero, &m).unwrap(), 0.0);
        assert!(LipschitzFunctional::new(s, vec![1.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn two_point_vertices() {
        let s = Arc::new(PointedMetricSpace::from_matrix(vec![vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap());
        let v = lip_ball_vertex_coords(&s).unwrap();
        assert_eq!(v, vec![vec![-1.0], vec![1.0]]);
    }

    #[test]
    fn line_vertices_match_halfspace_enumeration() {
        // 0 – a – b with unit steps: brute-force all pairs of active
        // constraints and keep feasible intersections
        let s = Arc::new(PointedMetricSpace::integer_line(2));
        let got = lip_ball_vertex_coords(&s).unwrap();
        let mut rows: Vec<([f64; 2], f64)> = Vec::new();
        for (i, j) in s.pairs() {
            for sg in [1.0, -1.0] {
                let mut a = [0.0; 2];
                if let Some(c) = s.coord(i) {
                    a[c] += sg;
                }
                if let Some(c) = s.coord(j) {
                    a[c] -= sg;
                }
                rows.push((a, s.dist(i, j)));
            }
        }
        let mut expected: Vec<Vec<i64>> = Vec::new();
        for p in 0..rows.len() {
            for q in p + 1..rows.len() {
                let (a, b) = (rows[p].0, rows[q].0);
                let det = a[0] * b[1] - a[1] * b[0];
                if det.abs() < 1e-12 {
                    continue;
                }
                let x = (rows[p].1 * b[1] - a[1] * rows[q].1) / det;
                let y = (a[0] * rows[q].1 - rows[p].1 * b[0]) / det;
                if rows.iter().all(|(r, h)| r[0] * x + r[1] * y <= h + 1e-12) {
                    let k = vec![(x * 1e6).round() as i64, (y * 1e6).round() as i64];
                    if !expected.contains(&k) {
                        expected.push(k);
                    }
                }
            }
        }
        let mut got_k: Vec<Vec<i64>> = got
            .iter()
            .map(|v| v.iter().map(|x| (x * 1e6).round() as i64).collect())
            .collect();
        got_k.sort();
        expected.sort();
        assert_eq!(got_k, expected);
        assert!(got.contains(&vec![1.0, 2.0]) && got.contains(&vec![-1.0, -2.0]));
    }

    #[test]
    fn vertices_are_lip_one_and_tight() {
        let s = three_point();
        for v in lip_ball_vertices(&s).unwrap() {
            assert!(v.lip_constant() <= 1.0 + 1e-9);
        }
        let big = Arc::new(PointedMetricSpace::integer_line(11));
        assert!(matches!(lip_ball_vertex_coords(&big), Err(Error::Capacity { .. })));
    }
}

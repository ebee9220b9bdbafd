//! JSON input formats and canonical JSON output.
//!
//! Output is a `serde_json::Value` with computed floats rounded to 12
//! significant digits and operands echoed exactly; object keys come out
//! sorted because serde_json's map is a BTreeMap. The same input, config
//! and seed therefore give the same bytes.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::certify::Problem;
use crate::config::Config;
use crate::error::{Error, Result};
use crate::estimate::{round_json, Certificate, NormEstimate};
use crate::free_space::{FreeGeometry, FreeVector};
use crate::lipmap::LipschitzMap;
use crate::operator::{LinearOperator, Space};
use crate::spaces::{Exponent, FinNormedSpace, MetricData, PointedMetricSpace};
use crate::tensor::{CrossKind, TensorElement, TensorTerm};

pub const TOOL_NAME: &str = "lipnorm";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Parses `text`, reporting line and column on failure.
pub fn parse<T: DeserializeOwned>(text: &str, what: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Input {
        what: what.into(),
        message: format!("line {}, column {}: {e}", e.line(), e.column()),
    })
}

pub fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Input {
        what: path.display().to_string(),
        message: e.to_string(),
    })
}

/// A metric space given inline or as a path to a space file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SpaceSpec {
    Inline(MetricData),
    Path(String),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct VectorData {
    #[serde(default)]
    space: Option<SpaceSpec>,
    coeffs: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct MapData {
    domain: SpaceSpec,
    codomain: FinNormedSpace,
    values: BTreeMap<String, Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct TermData {
    x: String,
    y: String,
    e: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorData {
    space: SpaceSpec,
    #[serde(rename = "E")]
    factor: FinNormedSpace,
    terms: Vec<TermData>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum SpaceDesc {
    Free { free: SpaceSpec },
    Lip { lip: SpaceSpec },
    Ell(FinNormedSpace),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct OperatorData {
    domain: SpaceDesc,
    codomain: SpaceDesc,
    /// Row-major, codomain dim × domain dim.
    matrix: Vec<Vec<f64>>,
}

/// Resolves space references relative to the directory of the file that
/// contains them.
#[derive(Debug, Clone, Default)]
pub struct Loader {
    pub base_dir: PathBuf,
}

impl Loader {
    pub fn for_file(path: &Path) -> Loader {
        Loader {
            base_dir: path.parent().map(Path::to_path_buf).unwrap_or_default(),
        }
    }

    pub fn space_file(&self, path: &Path) -> Result<Arc<PointedMetricSpace>> {
        let data: MetricData = parse(&read_file(path)?, &path.display().to_string())?;
        Ok(Arc::new(PointedMetricSpace::new(data)?))
    }

    fn space(&self, spec: &SpaceSpec) -> Result<Arc<PointedMetricSpace>> {
        match spec {
            SpaceSpec::Inline(d) => Ok(Arc::new(PointedMetricSpace::new(d.clone())?)),
            SpaceSpec::Path(p) => self.space_file(&self.base_dir.join(p)),
        }
    }

    /// A free-space vector; `space` overrides the one in the file.
    pub fn vector(&self, v: &Value, space: Option<Arc<PointedMetricSpace>>) -> Result<FreeVector> {
        let d: VectorData = from_value(v, "free-space vector")?;
        let space = match (space, &d.space) {
            (Some(s), _) => s,
            (None, Some(spec)) => self.space(spec)?,
            (None, None) => return Err(Error::Structural("vector has no space".into())),
        };
        let mut coeffs = vec![0.0; space.free_dim()];
        for (id, c) in &d.coeffs {
            let i = space.index_of(id)?;
            // δ(0) = 0, so a base coefficient contributes nothing
            if let Some(k) = space.coord(i) {
                coeffs[k] = *c;
            }
        }
        FreeVector::new(space, coeffs)
    }

    pub fn map(&self, v: &Value) -> Result<LipschitzMap> {
        let d: MapData = from_value(v, "Lipschitz map")?;
        let space = self.space(&d.domain)?;
        let mut values: Vec<Option<Vec<f64>>> = vec![None; space.len()];
        for (id, e) in &d.values {
            values[space.index_of(id)?] = Some(e.clone());
        }
        values[space.base()].get_or_insert_with(|| vec![0.0; d.codomain.dim]);
        let values = values
            .into_iter()
            .enumerate()
            .map(|(i, v)| v.ok_or_else(|| Error::Structural(format!("no value for point '{}'", space.points()[i]))))
            .collect::<Result<Vec<_>>>()?;
        LipschitzMap::new(space, d.codomain, values)
    }

    pub fn tensor(&self, v: &Value) -> Result<TensorElement> {
        let d: TensorData = from_value(v, "tensor")?;
        let space = self.space(&d.space)?;
        let terms = d
            .terms
            .iter()
            .map(|t| {
                Ok(TensorTerm {
                    x: space.index_of(&t.x)?,
                    y: space.index_of(&t.y)?,
                    e: t.e.clone(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        TensorElement::new(space, d.factor, terms)
    }

    pub fn operator(&self, v: &Value) -> Result<LinearOperator> {
        let d: OperatorData = from_value(v, "linear operator")?;
        let domain = self.space_desc(&d.domain)?;
        let codomain = self.space_desc(&d.codomain)?;
        let rows = d.matrix.len();
        let cols = d.matrix.first().map_or(domain.dim(), Vec::len);
        if d.matrix.iter().any(|r| r.len() != cols) {
            return Err(Error::Structural("matrix rows differ in length".into()));
        }
        let m = DMatrix::from_fn(rows, cols, |i, j| d.matrix[i][j]);
        LinearOperator::new(domain, codomain, m)
    }

    fn space_desc(&self, d: &SpaceDesc) -> Result<Space> {
        Ok(match d {
            SpaceDesc::Free { free } => Space::Free(Arc::new(FreeGeometry::new(self.space(free)?))),
            SpaceDesc::Lip { lip } => Space::Lip(Arc::new(FreeGeometry::new(self.space(lip)?))),
            SpaceDesc::Ell(e) => Space::Ell(*e),
        })
    }

    /// Builds a problem from its kind name, exponent and operand. Operator
    /// kinds accept a Lipschitz map and use its linearization.
    pub fn problem(&self, kind: &str, p: Option<Exponent>, operand: &Value) -> Result<Problem> {
        let p_or_two = p.unwrap_or(Exponent::two());
        let is_map = operand.get("values").is_some();
        let linear = |this: &Loader| -> Result<LinearOperator> {
            if is_map {
                Ok(this.map(operand)?.linearize())
            } else {
                this.operator(operand)
            }
        };
        Ok(match kind {
            "aenorm" => Problem::AeNorm(self.vector(operand, None)?),
            "lip" => Problem::Lip(self.map(operand)?),
            "op" => Problem::Op(linear(self)?),
            "pi" => Problem::Pi(linear(self)?, p_or_two),
            "dp" => Problem::Dp(linear(self)?, p_or_two),
            "pisl" => Problem::pi_sl(&self.map(operand)?, p_or_two),
            "pil" => Problem::pi_l(&self.map(operand)?, p_or_two),
            "dpl" => Problem::dp_l(&self.map(operand)?, p_or_two),
            other => match other.strip_prefix("cross-") {
                Some(k) => Problem::Cross {
                    kind: k.parse::<CrossKind>()?,
                    tensor: self.tensor(operand)?,
                    p: p_or_two,
                },
                None => return Err(Error::Structural(format!("unknown norm kind '{other}'"))),
            },
        })
    }
}

fn from_value<T: DeserializeOwned>(v: &Value, what: &str) -> Result<T> {
    T::deserialize(v).map_err(|e| Error::Input {
        what: what.into(),
        message: e.to_string(),
    })
}

pub fn space_json(space: &PointedMetricSpace) -> Value {
    serde_json::to_value(space.to_data()).expect("metric data serializes")
}

pub fn vector_json(m: &FreeVector) -> Value {
    let coeffs: BTreeMap<String, f64> = m
        .space
        .non_base()
        .iter()
        .zip(&m.coeffs)
        .filter(|(_, c)| **c != 0.0)
        .map(|(&i, c)| (m.space.points()[i].clone(), *c))
        .collect();
    json!({ "space": space_json(&m.space), "coeffs": coeffs })
}

pub fn map_json(t: &LipschitzMap) -> Value {
    let values: BTreeMap<String, Vec<f64>> = t
        .domain
        .points()
        .iter()
        .cloned()
        .zip(t.values.iter().cloned())
        .collect();
    json!({ "domain": space_json(&t.domain), "codomain": t.codomain, "values": values })
}

pub fn tensor_json(u: &TensorElement) -> Value {
    let ids = u.space().points();
    let terms: Vec<Value> = u
        .terms
        .iter()
        .map(|t| json!({ "x": ids[t.x], "y": ids[t.y], "e": t.e }))
        .collect();
    json!({ "space": space_json(u.space()), "E": u.factor, "terms": terms })
}

fn space_desc_json(s: &Space) -> Value {
    match s {
        Space::Free(g) => json!({ "free": space_json(&g.space) }),
        Space::Lip(g) => json!({ "lip": space_json(&g.space) }),
        Space::Ell(e) => serde_json::to_value(e).expect("space serializes"),
    }
}

pub fn operator_json(u: &LinearOperator) -> Value {
    let rows: Vec<Vec<f64>> = (0..u.matrix.nrows())
        .map(|i| u.matrix.row(i).iter().copied().collect())
        .collect();
    json!({
        "domain": space_desc_json(&u.domain),
        "codomain": space_desc_json(&u.codomain),
        "matrix": rows,
    })
}

/// The operand of a problem in the form [`Loader::problem`] reads back.
pub fn operand_json(problem: &Problem) -> Value {
    match problem {
        Problem::AeNorm(m) => vector_json(m),
        Problem::Lip(t) => map_json(t),
        Problem::Op(u) | Problem::Pi(u, _) | Problem::Dp(u, _) => operator_json(u),
        Problem::PiSL { map, .. } | Problem::PiL { map, .. } | Problem::DpL { map, .. } => map_json(map),
        Problem::Cross { tensor, .. } => tensor_json(tensor),
    }
}

pub fn problem_json(problem: &Problem) -> Value {
    json!({
        "kind": problem.kind_name(),
        "p": problem.exponent(),
        "operand": operand_json(problem),
    })
}

pub fn estimate_json(est: &NormEstimate) -> Value {
    json!({
        "lower": est.lower,
        "upper": est.upper,
        "exact": est.exact,
        "loose": est.loose,
        "certificates": { "lower": est.lower_cert, "upper": est.upper_cert },
    })
}

/// Wraps a result with the tool version, seed and config.
pub fn envelope(command: &str, cfg: &Config, body: Value) -> Value {
    let mut out = json!({
        "tool": { "name": TOOL_NAME, "version": VERSION },
        "command": command,
        "seed": cfg.seed,
        "config": cfg,
    });
    if let (Value::Object(o), Value::Object(b)) = (&mut out, body) {
        o.extend(b);
    }
    out
}

/// Rounds computed floats and pretty-prints with sorted keys. Operands are
/// echoed at full precision: rounding a distance matrix can break the
/// triangle inequality, and certificates must re-verify on the exact input.
pub fn to_canonical_string(v: &Value) -> String {
    let mut v = v.clone();
    round_results(&mut v);
    let mut s = serde_json::to_string_pretty(&v).expect("JSON values serialize");
    s.push('\n');
    s
}

fn round_results(v: &mut Value) {
    match v {
        Value::Object(o) => {
            for (k, child) in o.iter_mut() {
                if k != "operand" {
                    round_results(child);
                }
            }
        }
        Value::Array(a) => a.iter_mut().for_each(round_results),
        other => round_json(other),
    }
}

/// A stored estimate read back for certification.
#[derive(Debug, Clone)]
pub struct StoredEstimate {
    pub problem: Problem,
    pub estimate: NormEstimate,
}

#[derive(Deserialize)]
struct StoredProblem {
    kind: String,
    #[serde(default)]
    p: Option<Exponent>,
    operand: Value,
}

#[derive(Deserialize)]
struct StoredBody {
    lower: f64,
    upper: f64,
    exact: bool,
    #[serde(default)]
    loose: bool,
    certificates: StoredCerts,
}

#[derive(Deserialize)]
struct StoredCerts {
    lower: Certificate,
    upper: Certificate,
}

/// Reads `{"problem": .., "estimate": ..}`, as written by the norm
/// commands. Extra fields (tool, config) are ignored.
pub fn read_estimate(v: &Value, loader: &Loader) -> Result<StoredEstimate> {
    let prob: StoredProblem = from_value(
        v.get("problem").ok_or_else(|| missing("problem"))?,
        "stored problem",
    )?;
    let body: StoredBody = from_value(
        v.get("estimate").ok_or_else(|| missing("estimate"))?,
        "stored estimate",
    )?;
    let problem = loader.problem(&prob.kind, prob.p, &prob.operand)?;
    Ok(StoredEstimate {
        problem,
        estimate: NormEstimate {
            lower: body.lower,
            upper: body.upper,
            exact: body.exact,
            loose: body.loose,
            lower_cert: body.certificates.lower,
            upper_cert: body.certificates.upper,
        },
    })
}

fn missing(field: &str) -> Error {
    Error::Input {
        what: "estimate file".into(),
        message: format!("missing field '{field}'"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::certify::verify;

    fn triangle() -> Value {
        json!({ "points": ["0", "a", "b"], "base": 0, "dist": [[0, 1, 2], [1, 0, 1.5], [2, 1.5, 0]] })
    }

    #[test]
    fn malformed_json_reports_location() {
        let err = parse::<MetricData>("{\n  \"points\": [,]\n}", "space").unwrap_err();
        let Error::Input { message, .. } = err else { panic!("{err:?}") };
        assert!(message.starts_with("line 2"), "{message}");
    }

    #[test]
    fn vector_round_trip() {
        let l = Loader::default();
        let v = json!({ "space": triangle(), "coeffs": { "a": 1.0, "b": -1.0 } });
        let m = l.vector(&v, None).unwrap();
        assert_eq!(m.coeffs, vec![1.0, -1.0]);
        assert_eq!(l.vector(&vector_json(&m), None).unwrap(), m);
    }

    #[test]
    fn map_requires_every_point() {
        let l = Loader::default();
        let v = json!({ "domain": triangle(), "codomain": { "dim": 2, "p": 2 }, "values": { "a": [1, 0] } });
        assert!(matches!(l.map(&v), Err(Error::Structural(_))));
        let v = json!({ "domain": triangle(), "codomain": { "dim": 2, "p": 2 }, "values": { "0": [1, 0], "a": [1, 0], "b": [0, 0] } });
        assert_eq!(l.map(&v), Err(Error::NotPointed));
    }

    #[test]
    fn operator_with_free_domain() {
        let l = Loader::default();
        let v = json!({ "domain": { "free": triangle() }, "codomain": { "dim": 1, "p": "inf" }, "matrix": [[1, 2]] });
        let u = l.operator(&v).unwrap();
        assert_eq!(u.domain.dim(), 2);
        let back = l.operator(&operator_json(&u)).unwrap();
        assert_eq!(back, u);
    }

    #[test]
    fn stored_estimate_reverifies() {
        let l = Loader::default();
        let v = json!({
            "space": triangle(), "E": { "dim": 2, "p": 2 },
            "terms": [{ "x": "a", "y": "b", "e": [3, 4] }, { "x": "a", "y": "0", "e": [1, 0] }],
        });
        for kind in ["cross-piL", "cross-epsL", "cross-mu"] {
            let problem = l.problem(kind, Some(Exponent::two()), &v).unwrap();
            let est = problem.estimate(&Config::default()).unwrap();
            let body = json!({ "problem": problem_json(&problem), "estimate": estimate_json(&est) });
            let text = to_canonical_string(&envelope("crossnorm", &Config::default(), body));
            let stored = read_estimate(&parse(&text, "estimate").unwrap(), &l).unwrap();
            let check = verify(&stored.problem, &stored.estimate).unwrap();
            assert!(check.passed, "{kind}: {check:?}");
        }
    }

    #[test]
    fn canonical_output_is_sorted_and_rounded() {
        let s = to_canonical_string(&json!({ "b": 1.0 / 3.0, "a": 1 }));
        assert!(s.find("\"a\"").unwrap() < s.find("\"b\"").unwrap());
        assert!(s.contains("0.333333333333"));
        assert!(!s.contains("0.3333333333333"));
        let s = to_canonical_string(&json!({ "operand": { "x": 1.0 / 3.0 } }));
        assert!(s.contains("0.3333333333333333"));
    }
}

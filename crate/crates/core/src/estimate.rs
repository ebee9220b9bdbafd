//! Certified norm brackets.

use serde::{Deserialize, Serialize};

/// Slack allowed between `lower` and `upper` and in certificate residuals.
pub const CERT_TOLERANCE: f64 = 1e-9;

/// A bracket `[lower, upper]` for a norm together with the data that proves
/// each side. Lower certificates are witnesses (something that attains at
/// least `lower`); upper certificates are feasible dual points,
/// representations, or factorizations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormEstimate {
    pub lower: f64,
    pub upper: f64,
    /// `lower` and `upper` agree to [`CERT_TOLERANCE`] (relative).
    pub exact: bool,
    /// Upper side comes from a generic inequality rather than an optimized
    /// certificate.
    #[serde(default)]
    pub loose: bool,
    pub lower_cert: Certificate,
    pub upper_cert: Certificate,
}

impl NormEstimate {
    pub fn zero() -> Self {
        NormEstimate {
            lower: 0.0,
            upper: 0.0,
            exact: true,
            loose: false,
            lower_cert: Certificate::Trivial,
            upper_cert: Certificate::ZeroOperand,
        }
    }

    /// A value computed exactly by a method that is re-run on certification.
    pub fn exact(value: f64, cert: Certificate) -> Self {
        NormEstimate {
            lower: value,
            upper: value,
            exact: true,
            loose: false,
            lower_cert: cert.clone(),
            upper_cert: cert,
        }
    }

    pub fn bracket(lower: f64, upper: f64, lower_cert: Certificate, upper_cert: Certificate) -> Self {
        let mut e = NormEstimate {
            lower,
            upper,
            exact: false,
            loose: false,
            lower_cert,
            upper_cert,
        };
        e.refresh_exact();
        e
    }

    pub fn refresh_exact(&mut self) {
        self.exact = (self.upper - self.lower).abs() <= CERT_TOLERANCE * (1.0 + self.upper.abs());
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.upper + self.lower)
    }

    /// Width relative to the midpoint; zero for the zero bracket.
    pub fn relative_width(&self) -> f64 {
        let mid = self.midpoint();
        if mid <= 0.0 {
            0.0
        } else {
            self.width() / mid
        }
    }

    pub fn overlaps(&self, other: &NormEstimate, tol: f64) -> bool {
        self.lower <= other.upper + tol && other.lower <= self.upper + tol
    }

    pub fn is_consistent(&self) -> bool {
        self.lower <= self.upper + CERT_TOLERANCE * (1.0 + self.upper.abs())
    }

    /// Keeps the better side of each bracket.
    pub fn tighten(mut self, other: NormEstimate) -> Self {
        if other.lower > self.lower {
            self.lower = other.lower;
            self.lower_cert = other.lower_cert;
        }
        if other.upper < self.upper {
            self.upper = other.upper;
            self.upper_cert = other.upper_cert;
            self.loose = other.loose;
        }
        self.refresh_exact();
        self
    }
}

/// Data backing one side of a [`NormEstimate`]. Every variant can be
/// re-evaluated against the operand by [`crate::certify`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Certificate {
    /// Lower bound 0.
    Trivial,
    /// The operand is zero, so its norm is 0.
    ZeroOperand,
    /// Deterministic exact computation that certification re-runs.
    Recompute { method: String },
    /// Lipschitz functional over all points (base value 0). Certifies
    /// Σ c_x f(x) / max(1, Lip f) as a lower bound for ‖m‖_F.
    Functional { values: Vec<f64> },
    /// Flow matrix over all points with divergence equal to the extended
    /// coefficient vector; certifies Σ flow·d as an upper bound for ‖m‖_F.
    Flow { flow: Vec<Vec<f64>> },
    /// Element of a dual unit ball attaining the stated value.
    DualVector { coords: Vec<f64> },
    /// Domain witness for an operator norm: ‖u x‖ / ‖x‖.
    Vector { coords: Vec<f64> },
    /// Molecule δ(x, y) witnessing ‖u δ(x,y)‖ / d(x, y).
    Molecule { x: usize, y: usize },
    /// Finite sequence witnessing strong ℓ_p / weak ℓ_p of its image.
    Sequence { vectors: Vec<Vec<f64>> },
    /// Weighted molecule family (x_i, y_i, λ_i) witnessing the Lipschitz
    /// summing ratio.
    MoleculeFamily { pairs: Vec<(usize, usize)>, weights: Vec<f64> },
    /// Pietsch weights on dual functionals: ‖u x‖² ≤ C² Σ w_v ⟨v, x⟩².
    Pietsch {
        duals: Vec<Vec<f64>>,
        weights: Vec<f64>,
        constant: f64,
    },
    /// Pietsch weights on Lipschitz functionals:
    /// ‖T x − T y‖^p ≤ C^p Σ w_v |v(x) − v(y)|^p for every pair.
    LipschitzPietsch {
        functionals: Vec<Vec<f64>>,
        weights: Vec<f64>,
        constant: f64,
    },
    /// Decomposition u = Σ y_k ⊗ f_k; certifies Σ ‖f_k‖_* ‖y_k‖.
    Nuclear {
        functionals: Vec<Vec<f64>>,
        vectors: Vec<Vec<f64>>,
    },
    /// Inner certificate multiplied by a norm-comparison constant.
    Scaled { factor: f64, inner: Box<Certificate> },
    /// Inner certificate for the summing norm at exponent `from_p`; the
    /// summing norm at any larger exponent is no bigger.
    Monotone { from_p: f64, inner: Box<Certificate> },
    /// Inner certificate applies to the adjoint operator.
    Adjoint { inner: Box<Certificate> },
    /// Weights λ over generators g; certifies tr((Σ λ_g h_g h_gᵀ)^{1/2})
    /// with h_g the image of g under the relevant transpose.
    Design {
        generators: Vec<Vec<f64>>,
        weights: Vec<f64>,
    },
    /// Lipschitz functionals z_j; certifies
    /// (Σ_j ‖Mᵀ z_j‖²)^{1/2} / weak ℓ_2 norm of (z_j) for a tensor matrix M.
    DualSequence { functionals: Vec<Vec<f64>> },
    /// Tensor Σ δ(x_i, y_i) ⊠ e*_i paired against a Lipschitz map, with a
    /// certificate for an upper bound of its d_p norm; certifies
    /// |⟨T, u⟩| / that bound.
    TensorPairing {
        terms: Vec<(usize, usize, Vec<f64>)>,
        norm: Box<Certificate>,
    },
    /// Representation Σ a_i ⊗ b_i of the canonical tensor matrix; `left`
    /// are free-space coefficient vectors, `right` are E vectors.
    Representation {
        left: Vec<Vec<f64>>,
        right: Vec<Vec<f64>>,
    },
    /// Representation Σ λ_i δ(x_i, y_i) ⊗ b_i with molecule left factors.
    MoleculeRepresentation {
        molecules: Vec<(usize, usize, f64)>,
        right: Vec<Vec<f64>>,
    },
    /// Lipschitz functional f with Lip f ≤ 1 and dual vector e*: certifies
    /// ⟨f ⊗ e*, u⟩ as a lower bound for any cross-norm.
    RankOneFunctional { values: Vec<f64>, dual: Vec<f64> },
    /// Operator û: F(X) → E* (rows = E coordinates); certifies
    /// ⟨û, M⟩ / ‖û‖ (projective) or ⟨û, M⟩ / C (with a summing certificate).
    DualOperator {
        matrix: Vec<Vec<f64>>,
        summing: Option<Box<Certificate>>,
    },
    /// Lipschitz map X → E* with a Lipschitz summing certificate; certifies
    /// ⟨T, u⟩ / C.
    PairingMap {
        values: Vec<Vec<f64>>,
        summing: Box<Certificate>,
    },
}

/// Rounds to 12 significant digits, the precision used in every emitted
/// JSON document. Idempotent.
pub fn round_sig(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.11e}").parse().unwrap_or(x)
}

/// Rounds every float inside a serializable value to 12 significant
/// digits. Integers are left alone.
pub fn round_json(v: &mut serde_json::Value) {
    use serde_json::Value;
    match v {
        Value::Number(n) if n.is_f64() => {
            if let Some(r) = n.as_f64().map(round_sig).and_then(serde_json::Number::from_f64) {
                *n = r;
            }
        }
        Value::Array(a) => a.iter_mut().for_each(round_json),
        Value::Object(o) => o.values_mut().for_each(round_json),
        _ => {}
    }
}

impl Certificate {
    /// The certificate as it reads back after a JSON round trip.
    pub fn rounded(&self) -> Certificate {
        let mut v = match serde_json::to_value(self) {
            Ok(v) => v,
            Err(_) => return self.clone(),
        };
        round_json(&mut v);
        serde_json::from_value(v).unwrap_or_else(|_| self.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounding_is_idempotent() {
        for x in [1.0 / 3.0, 2f64.sqrt() * 1e-7, -123456.7890123456, 1e300] {
            let r = round_sig(x);
            assert_eq!(r, round_sig(r));
            assert!((r - x).abs() <= 1e-11 * x.abs());
        }
    }

    #[test]
    fn rounded_certificate_round_trips() {
        let c = Certificate::Pietsch {
            duals: vec![vec![1.0 / 3.0, 1.0]],
            weights: vec![0.7],
            constant: 2f64.sqrt(),
        };
        let r = c.rounded();
        let text = serde_json::to_string(&r).unwrap();
        let back: Certificate = serde_json::from_str(&text).unwrap();
        assert_eq!(back, r);
    }
}

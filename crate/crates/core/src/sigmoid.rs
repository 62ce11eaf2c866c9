//! The two admissible sigmoid families, the regularizer they induce, and a
//! grid checker for the sigmoid condition.
//!
//! The design works in the unconstrained coordinate `u` with `p = φ(u)` and
//! regularizer `Ψ(p) = ψ(φ⁻¹(p))`, where `ψ(u) = ½u² + |u|³`.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SigmoidKind {
    Arctan,
    Algebraic,
}

impl fmt::Display for SigmoidKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SigmoidKind::Arctan => "arctan",
            SigmoidKind::Algebraic => "algebraic",
        })
    }
}

impl std::str::FromStr for SigmoidKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "arctan" | "atan" => Ok(SigmoidKind::Arctan),
            "algebraic" => Ok(SigmoidKind::Algebraic),
            other => Err(Error::InvalidConfig(format!("unknown sigmoid `{other}`"))),
        }
    }
}

/// A sigmoid together with its condition constants `(b1, b2, b3)`.
///
/// The constants travel with the family so that nothing downstream can use a
/// sigmoid without them. [`SigmoidSpec::with_constants`] exists only for
/// falsification runs of [`verify_condition`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmoidSpec {
    kind: SigmoidKind,
    b1: f64,
    b2: f64,
    b3: f64,
}

impl SigmoidSpec {
    pub fn arctan() -> Self {
        Self { kind: SigmoidKind::Arctan, b1: PI, b2: 2f64.powf(2.5) * PI / 3.0, b3: 2.0 / PI }
    }

    pub fn algebraic() -> Self {
        Self { kind: SigmoidKind::Algebraic, b1: 2.0, b2: 8.0, b3: 1.0 }
    }

    pub fn of(kind: SigmoidKind) -> Self {
        match kind {
            SigmoidKind::Arctan => Self::arctan(),
            SigmoidKind::Algebraic => Self::algebraic(),
        }
    }

    pub fn with_constants(self, b1: f64, b2: f64, b3: f64) -> Self {
        Self { b1, b2, b3, ..self }
    }

    pub fn kind(&self) -> SigmoidKind {
        self.kind
    }

    pub fn b1(&self) -> f64 {
        self.b1
    }

    pub fn b2(&self) -> f64 {
        self.b2
    }

    pub fn b3(&self) -> f64 {
        self.b3
    }

    pub fn phi(&self, u: f64) -> f64 {
        match self.kind {
            SigmoidKind::Arctan => {
                if u < 0.0 {
                    (-1.0 / u).atan() / PI
                } else {
                    (u.atan() + FRAC_PI_2) / PI
                }
            }
            SigmoidKind::Algebraic => {
                if u <= 0.0 {
                    0.5 / (1.0 - u)
                } else {
                    1.0 - 0.5 / (1.0 + u)
                }
            }
        }
    }

    pub fn phi_inv(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::DomainError(p));
        }
        Ok(match self.kind {
            SigmoidKind::Arctan => {
                if p == 0.5 {
                    0.0
                } else if p < 0.25 {
                    -1.0 / (PI * p).tan()
                } else if p > 0.75 {
                    1.0 / (PI * (1.0 - p)).tan()
                } else {
                    (PI * (p - 0.5)).tan()
                }
            }
            SigmoidKind::Algebraic => {
                if p <= 0.5 {
                    1.0 - 0.5 / p
                } else {
                    0.5 / (1.0 - p) - 1.0
                }
            }
        })
    }

    /// First and second derivatives of `u ↦ 1/φ(u)`.
    ///
    /// For the algebraic family the point `u = 0` takes the left branch
    /// `(-2, 0)`.
    pub fn inv_phi_derivs(&self, u: f64) -> (f64, f64) {
        match self.kind {
            SigmoidKind::Arctan => {
                let q = 1.0 + u * u;
                if u < 0.0 {
                    // s = atan(u) + π/2 = atan(w) with w = -1/u; 1 + u·s = 1 - atan(w)/w.
                    let w = -1.0 / u;
                    let s = w.atan();
                    let bracket = if w < 1e-2 {
                        let w2 = w * w;
                        w2 * (1.0 / 3.0 - w2 * (1.0 / 5.0 - w2 * (1.0 / 7.0 - w2 / 9.0)))
                    } else {
                        1.0 - s / w
                    };
                    let d1 = -PI / (q * s * s);
                    let d2 = 2.0 * PI / (q * q * s * s * s) * bracket;
                    (d1, d2)
                } else {
                    let s = u.atan() + FRAC_PI_2;
                    let d1 = -PI / (q * s * s);
                    let d2 = 2.0 * PI / (q * q * s * s * s) * (1.0 + u * s);
                    (d1, d2)
                }
            }
            SigmoidKind::Algebraic => {
                if u <= 0.0 {
                    (-2.0, 0.0)
                } else {
                    let v = 2.0 * u + 1.0;
                    (-2.0 / (v * v), 8.0 / (v * v * v))
                }
            }
        }
    }

    /// First and second derivatives of `u ↦ 1/(1 − φ(u))`, by reflection.
    #[inline]
    pub fn inv_one_minus_phi_derivs(&self, u: f64) -> (f64, f64) {
        let (d1, d2) = self.inv_phi_derivs(-u);
        (-d1, d2)
    }

    /// `Ψ(p) = ψ(φ⁻¹(p))`
    pub fn regularizer(&self, p: f64) -> Result<f64> {
        Ok(psi(self.phi_inv(p)?))
    }
}

#[inline]
pub fn psi(u: f64) -> f64 {
    let a = u.abs();
    0.5 * u * u + a * a * a
}

#[inline]
pub fn dpsi(u: f64) -> f64 {
    u + 3.0 * u * u.abs()
}

/// Bregman divergence `ψ(v) − ψ(u) − ψ'(u)(v − u)`.
///
/// Evaluated in a factored form that is free of cancellation: with
/// `a = |v|`, `b = |u|` and `δ = v − u`, the cubic part equals `δ²(a + 2b)`
/// when `u` and `v` share a sign and `a³ + 3ab² + 2b³` otherwise.
pub fn bregman_psi(v: f64, u: f64) -> f64 {
    let delta = v - u;
    let (a, b) = (v.abs(), u.abs());
    let cubic = if (v >= 0.0) == (u >= 0.0) || v == 0.0 || u == 0.0 {
        delta * delta * (a + 2.0 * b)
    } else {
        a * a * a + 3.0 * a * b * b + 2.0 * b * b * b
    };
    0.5 * delta * delta + cubic
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Clause {
    Monotone,
    Symmetry,
    Convexity,
    Bound3a,
    Bound3b,
    Bound3c,
}

impl fmt::Display for Clause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub kind: SigmoidKind,
    pub grid_size: usize,
    pub max_violation: f64,
    pub violated_clause: Option<Clause>,
    /// Largest violation per clause, in declaration order of [`Clause`].
    pub per_clause: Vec<(Clause, f64)>,
}

pub const CONDITION_TOLERANCE: f64 = 1e-9;

/// `n` evenly spaced points on `[lo, hi]`.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let h = (hi - lo) / (n - 1) as f64;
            (0..n).map(|i| if i + 1 == n { hi } else { lo + h * i as f64 }).collect()
        }
    }
}

/// 10001 points on `[-50, 50]`, including the origin.
pub fn default_grid() -> Vec<f64> {
    linspace(-50.0, 50.0, 10_001)
}

/// Checks every clause of the sigmoid condition on `grid`.
///
/// Clause 3c is a statement about `u ≥ 0`; it is evaluated on `u > 0` because
/// the algebraic second derivative is one-sided at the origin and the bound
/// holds there by right-continuity.
pub fn verify_condition(spec: &SigmoidSpec, grid: &[f64]) -> ConditionReport {
    let mut worst = [0.0f64; 6];
    let clauses =
        [Clause::Monotone, Clause::Symmetry, Clause::Convexity, Clause::Bound3a, Clause::Bound3b, Clause::Bound3c];
    let mut bump = |k: usize, v: f64| {
        if v > worst[k] || v.is_nan() {
            worst[k] = if v.is_nan() { f64::INFINITY } else { v };
        }
    };
    let mut prev: Option<f64> = None;
    for &u in grid {
        let p = spec.phi(u);
        if let Some(pp) = prev {
            let diff = p - pp;
            if diff <= 0.0 {
                // Zero increments are violations too, even though their size is 0.
                bump(0, (-diff).max(f64::MIN_POSITIVE) + CONDITION_TOLERANCE);
            }
        }
        prev = Some(p);
        bump(1, (p + spec.phi(-u) - 1.0).abs());

        let (d1, d2) = spec.inv_phi_derivs(u);
        let (_, e2) = spec.inv_one_minus_phi_derivs(u);
        bump(2, -d2);
        bump(2, -e2);
        bump(3, -d1 - spec.b1());
        let au = 1.0 + u.abs();
        bump(4, d2 - spec.b2() / (au * au * au));
        if u > 0.0 {
            let bu = 1.0 + u;
            bump(5, spec.b3() / (bu * bu * bu) - d2);
        }
    }
    let (mut max_violation, mut which) = (0.0, None);
    for (k, &v) in worst.iter().enumerate() {
        if v > max_violation {
            max_violation = v;
            which = Some(clauses[k]);
        }
    }
    ConditionReport {
        kind: spec.kind(),
        grid_size: grid.len(),
        max_violation,
        violated_clause: if max_violation > CONDITION_TOLERANCE { which } else { None },
        per_clause: clauses.iter().copied().zip(worst).collect(),
    }
}

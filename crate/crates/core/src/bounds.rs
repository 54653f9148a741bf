//! Closed-form bounds and asymptotics as pure functions of their constants.
//!
//! Exponentially small bounds are also returned as logarithms, since at
//! `a = 10⁻³` the bounds themselves underflow.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::fields::ReferenceCurvature;
use crate::spectral::{Operator, SpectrumModel};

pub use crate::special::gaussian_tail;

fn positive(name: &'static str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(invalid(name, format!("must be positive, got {x}")))
    }
}

/// `e^{αu - u²/(2σ²)}`
pub fn borell_tis_upper(u: f64, sigma: f64, alpha: f64) -> Result<f64> {
    positive("sigma", sigma)?;
    Ok((alpha * u - u * u / (2.0 * sigma * sigma)).exp())
}

/// `e^{-(u - E sup)²/(2σ²)}` for `u > E sup`.
pub fn borell_tis_concentration(u: f64, e_sup: f64, sigma: f64) -> Result<f64> {
    positive("sigma", sigma)?;
    if u <= e_sup {
        return Err(invalid("u", format!("{u} does not exceed E sup = {e_sup}")));
    }
    Ok((-(u - e_sup).powi(2) / (2.0 * sigma * sigma)).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TwoSided {
    pub lower: f64,
    pub upper: f64,
    pub ln_lower: f64,
    pub ln_upper: f64,
    /// `a² ln(lower)` and `a² ln(upper)`.
    pub lower_diagnostic: f64,
    pub upper_diagnostic: f64,
    /// `-1/(2σ_v²)`
    pub limit: f64,
}

/// `C₁ a e^{-1/(2a²σ_v²)} ≤ P₂(a) ≤ e^{C₂/a - 1/(2a²σ_v²)}`
pub fn p2_two_sided(a: f64, sigma_v: f64, c1_low: f64, c2_up: f64) -> Result<TwoSided> {
    positive("sigma_v", sigma_v)?;
    positive("C1", c1_low)?;
    let limit = -1.0 / (2.0 * sigma_v * sigma_v);
    if a == 0.0 {
        return Ok(TwoSided {
            lower: 0.0,
            upper: 0.0,
            ln_lower: f64::NEG_INFINITY,
            ln_upper: f64::NEG_INFINITY,
            lower_diagnostic: limit,
            upper_diagnostic: limit,
            limit,
        });
    }
    positive("a", a)?;
    let gauss = limit / (a * a);
    let ln_lower = (c1_low * a).ln() + gauss;
    let ln_upper = c2_up / a + gauss;
    Ok(TwoSided {
        lower: ln_lower.exp(),
        upper: ln_upper.exp(),
        ln_lower,
        ln_upper,
        lower_diagnostic: a * a * ln_lower,
        upper_diagnostic: a * a * ln_upper,
        limit,
    })
}

/// Lower constant from `P₂(a) ≥ Ψ(1/(aσ_v))` and the Mills-ratio bound
/// `Ψ(t) ≥ φ(t) t/(1+t²)`, valid for every `a ≤ a_max`.
pub fn mills_lower_constant(sigma_v: f64, a_max: f64) -> Result<f64> {
    positive("sigma_v", sigma_v)?;
    positive("a_max", a_max)?;
    Ok(sigma_v / ((2.0 * PI).sqrt() * (1.0 + a_max * a_max * sigma_v * sigma_v)))
}

/// Upper constant `E sup v / σ_v²` from the concentration form, valid while
/// `1/a > E sup v`.
pub fn borell_upper_constant(e_sup: f64, sigma_v: f64) -> Result<f64> {
    positive("sigma_v", sigma_v)?;
    Ok(e_sup.max(0.0) / (sigma_v * sigma_v))
}

/// `σ_v² ~ 1/((4πT)^{n/2} inf R₀²)` as `T → 0`.
pub fn heat_sigma_small_t(t: f64, n: u32, inf_r0_sq: f64) -> Result<f64> {
    positive("T", t)?;
    positive("inf_R0_sq", inf_r0_sq)?;
    Ok(1.0 / ((4.0 * PI * t).powf(n as f64 / 2.0) * inf_r0_sq))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LargeT {
    /// `sup_x Σ_{first level} φ_j(x)²/R₀(x)²`
    pub f: f64,
    pub lambda1: f64,
    /// `F e^{-λ₁T}`
    pub asymptote: f64,
}

/// Large-`T` limit of `σ_v²` from the first nonzero level.
pub fn heat_sigma_large_t(
    spectrum: &SpectrumModel,
    r0: &ReferenceCurvature,
    t: f64,
) -> Result<LargeT> {
    positive("T", t)?;
    if spectrum.operator() != Operator::Laplacian {
        return Err(invalid("operator", "the heat kernel is defined for -Δ"));
    }
    if !r0.has_constant_sign() {
        return Err(invalid("reference_curvature", "R₀ must not vanish"));
    }
    let first = spectrum.levels().first().ok_or(Error::EmptyGrid)?;
    let f = match spectrum.table() {
        None => first.multiplicity as f64 / (spectrum.volume() * r0.inf_sq()),
        Some(table) => {
            if let ReferenceCurvature::Gridded(v) = r0 {
                if v.len() != table.points {
                    return Err(invalid(
                        "reference_curvature",
                        format!("{} values for {} points", v.len(), table.points),
                    ));
                }
            }
            (0..table.points)
                .map(|i| {
                    let s: f64 = table.positive[0].iter().map(|phi| phi[i] * phi[i]).sum();
                    s / r0.at(i).powi(2)
                })
                .fold(f64::NEG_INFINITY, f64::max)
        }
    };
    Ok(LargeT {
        f,
        lambda1: first.eigenvalue,
        asymptote: f * (-first.eigenvalue * t).exp(),
    })
}

/// Which of two metrics has the larger sign-change probability.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Comparison {
    FirstLarger,
    SecondLarger,
    Incomparable,
}

impl Comparison {
    pub fn reversed(self) -> Self {
        match self {
            Comparison::FirstLarger => Comparison::SecondLarger,
            Comparison::SecondLarger => Comparison::FirstLarger,
            Comparison::Incomparable => Comparison::Incomparable,
        }
    }
}

fn smaller_wins(x: f64, y: f64) -> Comparison {
    if x < y {
        Comparison::FirstLarger
    } else if y < x {
        Comparison::SecondLarger
    } else {
        Comparison::Incomparable
    }
}

/// Small `T`: the metric with smaller `inf R₀²` has larger `P₂`.
pub fn compare_small_t(inf_r0sq_a: f64, inf_r0sq_b: f64) -> Result<Comparison> {
    positive("inf_R0_sq", inf_r0sq_a)?;
    positive("inf_R0_sq", inf_r0sq_b)?;
    Ok(smaller_wins(inf_r0sq_a, inf_r0sq_b))
}

/// Large `T`: the metric with smaller `λ₁` has larger `P₂`.
pub fn compare_large_t(lambda1_a: f64, lambda1_b: f64) -> Result<Comparison> {
    positive("lambda1", lambda1_a)?;
    positive("lambda1", lambda1_b)?;
    Ok(smaller_wins(lambda1_a, lambda1_b))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinfAsymptote {
    /// `-u²/(2a²σ_w²)`
    pub value: f64,
    pub flags: Vec<String>,
}

/// Leading term of `log Prob{‖R₁ - R₀‖_∞ > u}`.
pub fn linf_log_asymptote(u: f64, a: f64, sigma_w: f64) -> Result<LinfAsymptote> {
    positive("u", u)?;
    positive("a", a)?;
    positive("sigma_w", sigma_w)?;
    let mut flags = Vec::new();
    if u >= 0.5 {
        flags.push("u >= 0.5: u is not small".to_string());
    }
    if u / a <= 3.0 {
        flags.push("u/a <= 3: u/a is not large".to_string());
    }
    Ok(LinfAsymptote {
        value: -u * u / (2.0 * a * a * sigma_w * sigma_w),
        flags,
    })
}

fn above_two(n: u32) -> Result<f64> {
    if n <= 2 {
        return Err(invalid("n", "needs dimension n > 2"));
    }
    Ok(n as f64)
}

/// `exp(α/(a(n-1)) - 1/(2a²(n-1)²σ_v²))` for `R₀ < 0`.
pub fn nd_negative_bound(a: f64, n: u32, sigma_v: f64, alpha: f64) -> Result<f64> {
    let n = above_two(n)?;
    positive("a", a)?;
    positive("sigma_v", sigma_v)?;
    let m = n - 1.0;
    Ok((alpha / (a * m) - 1.0 / (2.0 * a * a * m * m * sigma_v * sigma_v)).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NdConstants {
    pub kappa: f64,
    pub delta0: f64,
    pub one_minus_delta0: f64,
    pub b: f64,
}

/// `κ`, the root `δ₀ ∈ (0,1)` of `δ² + κδ - κ = 0`, and the common exponent
/// `B` for `R₀ > 0`.
pub fn nd_positive_constants(n: u32, sigma_v: f64, sigma_2: f64) -> Result<NdConstants> {
    let n = above_two(n)?;
    positive("sigma_v", sigma_v)?;
    positive("sigma_2", sigma_2)?;
    let kappa = 4.0 * sigma_v * sigma_v * (n - 1.0) / (sigma_2 * n * (n - 2.0));
    let (delta0, one_minus_delta0) = quadratic_root(kappa);
    Ok(NdConstants {
        kappa,
        delta0,
        one_minus_delta0,
        b: 2.0 * one_minus_delta0 / (sigma_2 * n * (n - 1.0) * (n - 2.0)),
    })
}

/// `δ₀ = (√(κ²+4κ) - κ)/2` and `1 - δ₀ = δ₀²/κ`, both without cancellation.
pub fn quadratic_root(kappa: f64) -> (f64, f64) {
    let delta = 2.0 / (1.0 + (1.0 + 4.0 / kappa).sqrt());
    (delta, delta * delta / kappa)
}

/// Same two-sided form as [`p2_two_sided`] with the Q-field `σ_v`.
pub fn q_sign_bounds(a: f64, sigma_v: f64, c1_low: f64, c2_up: f64) -> Result<TwoSided> {
    p2_two_sided(a, sigma_v, c1_low, c2_up)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    GaussianTail,
    BorellTisUpper,
    BorellTisConcentration,
    P2TwoSided,
    HeatSmallT,
    HeatLargeT,
    CompareSmallT,
    CompareLargeT,
    LinfLogAsymptote,
    NdNegative,
    NdPositive,
    QSign,
}

/// One evaluated bound with every input it used.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub kind: BoundKind,
    pub inputs: BTreeMap<String, f64>,
    pub values: BTreeMap<String, f64>,
    pub flags: Vec<String>,
}

impl BoundReport {
    pub fn new(kind: BoundKind) -> Self {
        BoundReport {
            kind,
            inputs: BTreeMap::new(),
            values: BTreeMap::new(),
            flags: Vec::new(),
        }
    }

    pub fn input(mut self, name: &str, x: f64) -> Self {
        self.inputs.insert(name.to_string(), x);
        self
    }

    pub fn value(mut self, name: &str, x: f64) -> Self {
        self.values.insert(name.to_string(), x);
        self
    }

    pub fn flag(mut self, note: impl Into<String>) -> Self {
        self.flags.push(note.into());
        self
    }

    pub fn two_sided(kind: BoundKind, a: f64, sigma_v: f64, c1: f64, c2: f64) -> Result<Self> {
        let b = p2_two_sided(a, sigma_v, c1, c2)?;
        Ok(BoundReport::new(kind)
            .input("a", a)
            .input("sigma_v", sigma_v)
            .input("C1", c1)
            .input("C2", c2)
            .value("lower", b.lower)
            .value("upper", b.upper)
            .value("ln_lower", b.ln_lower)
            .value("ln_upper", b.ln_upper)
            .value("a2_ln_lower", b.lower_diagnostic)
            .value("a2_ln_upper", b.upper_diagnostic)
            .value("limit", b.limit))
    }

    pub fn heat_small_t(t: f64, n: u32, inf_r0_sq: f64) -> Result<Self> {
        let mut r = BoundReport::new(BoundKind::HeatSmallT)
            .input("T", t)
            .input("n", n as f64)
            .input("inf_R0_sq", inf_r0_sq)
            .value("sigma_v2", heat_sigma_small_t(t, n, inf_r0_sq)?);
        if n != 2 {
            r = r.flag("the small-T limit is established for surfaces only");
        }
        Ok(r)
    }

    pub fn nd_positive(n: u32, sigma_v: f64, sigma_2: f64) -> Result<Self> {
        let c = nd_positive_constants(n, sigma_v, sigma_2)?;
        Ok(BoundReport::new(BoundKind::NdPositive)
            .input("n", n as f64)
            .input("sigma_v", sigma_v)
            .input("sigma_2", sigma_2)
            .value("kappa", c.kappa)
            .value("delta0", c.delta0)
            .value("B", c.b))
    }

    pub fn linf(u: f64, a: f64, sigma_w: f64) -> Result<Self> {
        let l = linf_log_asymptote(u, a, sigma_w)?;
        let mut r = BoundReport::new(BoundKind::LinfLogAsymptote)
            .input("u", u)
            .input("a", a)
            .input("sigma_w", sigma_w)
            .value("log_prob", l.value);
        r.flags = l.flags;
        Ok(r)
    }
}

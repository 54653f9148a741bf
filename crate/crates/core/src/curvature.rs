//! Conformal transformation laws: curvature of `g₁` from a sampled factor,
//! volumes, and exact versus linearized curvature deviations.

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::fields::{FieldKind, FieldSample, RandomFieldSpec, ReferenceCurvature};
use crate::grid::Grid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Convention {
    /// `g₁ = e^{af} g₀`
    ScalarExpAF,
    /// `g₁ = e^{2af} g₀`
    QExp2AF,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PerturbationParams {
    pub a: f64,
    pub n: u32,
    pub convention: Convention,
}

impl PerturbationParams {
    pub fn new(a: f64, n: u32, convention: Convention) -> Result<Self> {
        if !(a > 0.0) || !a.is_finite() {
            return Err(invalid("a", format!("amplitude must be positive, got {a}")));
        }
        if n < 2 {
            return Err(invalid("n", "dimension must be at least 2"));
        }
        if convention == Convention::QExp2AF && (n % 2 == 1 || n < 4) {
            return Err(invalid("n", "the Q-curvature convention needs even n ≥ 4"));
        }
        Ok(PerturbationParams { a, n, convention })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvatureField {
    /// `R₁` or `Q₁` at each grid point.
    pub values: Vec<f64>,
    pub reference: Vec<f64>,
    /// Sign of the bracket multiplying the positive exponential prefactor.
    pub sign: Vec<i8>,
}

fn sign(x: f64) -> i8 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

fn reference_values(r: &ReferenceCurvature, len: usize) -> Result<Vec<f64>> {
    match r {
        ReferenceCurvature::Constant(c) => Ok(vec![*c; len]),
        ReferenceCurvature::Gridded(v) if v.len() == len => Ok(v.clone()),
        ReferenceCurvature::Gridded(v) => Err(invalid(
            "reference_curvature",
            format!("{} values for {len} grid points", v.len()),
        )),
    }
}

/// `R₁ = e^{-af}(R₀ - a h)` with `h = Δ₀ f`.
pub fn scalar_curvature_2d(
    r0: &ReferenceCurvature,
    sample: &FieldSample,
    a: f64,
) -> Result<CurvatureField> {
    curvature_with_gradient(r0, sample, a, 2)
}

/// `R₁ = e^{-af}[R₀ - a(n-1)h - a²(n-1)(n-2)|∇f|²/4]`.
pub fn scalar_curvature_nd(
    r0: &ReferenceCurvature,
    sample: &FieldSample,
    a: f64,
    n: u32,
) -> Result<CurvatureField> {
    if n < 2 {
        return Err(invalid("n", "dimension must be at least 2"));
    }
    curvature_with_gradient(r0, sample, a, n)
}

fn curvature_with_gradient(
    r0: &ReferenceCurvature,
    sample: &FieldSample,
    a: f64,
    n: u32,
) -> Result<CurvatureField> {
    let len = sample.values_f.len();
    if sample.values_h.len() != len {
        return Err(Error::MissingField("values_h"));
    }
    let reference = reference_values(r0, len)?;
    let nf = n as f64;
    let grad = if n > 2 {
        Some(
            sample
                .values_gradsq
                .as_ref()
                .ok_or(Error::MissingField("values_gradsq"))?,
        )
    } else {
        None
    };
    let mut values = Vec::with_capacity(len);
    let mut signs = Vec::with_capacity(len);
    for i in 0..len {
        let mut bracket = reference[i] - a * (nf - 1.0) * sample.values_h[i];
        if let Some(g) = grad {
            bracket -= a * a * (nf - 1.0) * (nf - 2.0) * g[i] / 4.0;
        }
        values.push((-a * sample.values_f[i]).exp() * bracket);
        signs.push(sign(bracket));
    }
    Ok(CurvatureField {
        values,
        reference,
        sign: signs,
    })
}

/// `Q₁ = e^{-naf}(Q₀ - a h)` with `h = -P f`.
pub fn q_curvature(
    q0: &ReferenceCurvature,
    sample: &FieldSample,
    a: f64,
    n: u32,
) -> Result<CurvatureField> {
    if n % 2 == 1 || n < 2 {
        return Err(invalid("n", "Q-curvature needs even dimension"));
    }
    let len = sample.values_f.len();
    let reference = reference_values(q0, len)?;
    let nf = n as f64;
    let mut values = Vec::with_capacity(len);
    let mut signs = Vec::with_capacity(len);
    for i in 0..len {
        let bracket = reference[i] - a * sample.values_h[i];
        values.push((-nf * a * sample.values_f[i]).exp() * bracket);
        signs.push(sign(bracket));
    }
    Ok(CurvatureField {
        values,
        reference,
        sign: signs,
    })
}

/// `E[V₁] = ∫ e^{n² a² r_f(x,x)/8} dV₀` by grid quadrature.
///
/// Written as `|M| + ∫ (e^{…} - 1) dV₀` when the grid weights add up to the
/// volume, so `a = 0` returns `|M|` exactly.
pub fn expected_volume(spec: &RandomFieldSpec, grid: &Grid, a: f64, n: u32) -> Result<f64> {
    let f = spec.with_kind(FieldKind::F)?;
    let diag = crate::fields::variance_summary(&f, grid)?.diagonal;
    let nf = n as f64;
    let total: f64 = grid.weights.iter().sum();
    let volume = spec.spectrum.volume();
    let base = if (total - volume).abs() <= 1e-9 * volume { volume } else { total };
    let excess: f64 = diag
        .iter()
        .zip(&grid.weights)
        .map(|(r, w)| w * (nf * nf * a * a * r / 8.0).exp_m1())
        .sum();
    Ok(base + excess)
}

/// `V₁ = ∫ e^{naf/2} dV₀` for one sample.
pub fn sample_volume(sample: &FieldSample, grid: &Grid, a: f64, n: u32) -> f64 {
    let nf = n as f64;
    sample
        .values_f
        .iter()
        .zip(&grid.weights)
        .map(|(f, w)| w * (nf * a * f / 2.0).exp())
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
pub enum DeviationMode {
    Scalar2D,
    Q,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Deviation {
    pub exact: Vec<f64>,
    /// `-a w` (scalar) or `a w` (Q).
    pub linearized: Vec<f64>,
}

impl Deviation {
    pub fn max_abs(&self) -> f64 {
        self.exact.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Exact deviation `R₁ - R₀` (or `Q₁ - Q₀`) with its linearization.
pub fn deviation_field(
    sample: &FieldSample,
    reference: &ReferenceCurvature,
    a: f64,
    n: u32,
    mode: DeviationMode,
) -> Result<Deviation> {
    let len = sample.values_f.len();
    let r = reference_values(reference, len)?;
    let (f, h) = (&sample.values_f, &sample.values_h);
    match mode {
        DeviationMode::Scalar2D => {
            if n != 2 {
                return Err(invalid("mode", "the scalar deviation law is two-dimensional"));
            }
            Ok(Deviation {
                exact: (0..len)
                    .map(|i| scalar_deviation(r[i], f[i], h[i], a))
                    .collect(),
                linearized: (0..len).map(|i| -a * (h[i] + r[i] * f[i])).collect(),
            })
        }
        DeviationMode::Q => {
            if n % 2 == 1 {
                return Err(invalid("mode", "Q-curvature needs even dimension"));
            }
            let nf = n as f64;
            Ok(Deviation {
                exact: (0..len)
                    .map(|i| q_deviation(r[i], f[i], h[i], a, nf))
                    .collect(),
                linearized: (0..len).map(|i| a * (-h[i] - nf * r[i] * f[i])).collect(),
            })
        }
    }
}

/// `R₀(e^{-af} - 1) - a e^{-af} h`
#[inline]
pub fn scalar_deviation(r0: f64, f: f64, h: f64, a: f64) -> f64 {
    let e = (-a * f).exp();
    r0 * (e - 1.0) - a * e * h
}

/// `Q₀(e^{-naf} - 1) - a e^{-naf} h`
#[inline]
pub fn q_deviation(q0: f64, f: f64, h: f64, a: f64, n: f64) -> f64 {
    let e = (-n * a * f).exp();
    q0 * (e - 1.0) - a * e * h
}

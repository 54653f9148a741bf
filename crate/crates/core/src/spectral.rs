//! Reference-geometry spectra and the coefficient sequences that weight them.
//!
//! A [`SpectrumModel`] lists the nonzero eigenvalue levels of the operator
//! driving the random conformal factor (the Laplacian `-Δ₀` for scalar
//! curvature, the Paneitz operator for Q-curvature) together with their
//! multiplicities. Constants are never part of an expansion.
//!
//! A [`CoefficientScheme`] attaches a positive weight `c` to every retained
//! level. Two indexing conventions coexist:
//!
//! * [`Indexing::PerEigenfunction`]: `f = Σ a_j c_j φ_j`, so the standard
//!   deviation of each mode of `f` is `c_j`.
//! * [`Indexing::PerEigenspace`]: `f = √V Σ √c_m / (λ_m √N_m) a_{m,k} η_{m,k}`,
//!   which makes `Var h(x) = Σ c_m` on isotropic geometries.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::special;

/// Default relative tail-mass tolerance for truncated schemes.
pub const DEFAULT_TAIL_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Geometry {
    Sphere2,
    FlatTorus2,
    RoundSphere4Paneitz,
    UserSupplied,
}

impl Geometry {
    /// Constant `A` in the Weyl-type counting law `#{λ_j ≤ Λ} ≈ A Λ`.
    fn weyl_density(self) -> Option<f64> {
        match self {
            Geometry::Sphere2 => Some(1.0),
            Geometry::FlatTorus2 => Some(PI),
            Geometry::RoundSphere4Paneitz => Some(1.0 / 12.0),
            Geometry::UserSupplied => None,
        }
    }
}

/// Which operator the eigenvalues belong to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Operator {
    /// `-Δ₀`; the derived field is `h = Δ₀ f`.
    Laplacian,
    /// A GJMS operator `P`; the derived field is `h = -P f`.
    Gjms,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Level {
    pub eigenvalue: f64,
    pub multiplicity: usize,
}

/// `(E_m, N_m) = (m(m+1), 2m+1)` for spherical harmonics of degree `m` on S².
pub fn sphere_level(m: usize) -> Result<(f64, usize)> {
    if m == 0 {
        return Err(Error::ConstantLevel);
    }
    let mf = m as f64;
    Ok((mf * (mf + 1.0), 2 * m + 1))
}

/// Paneitz eigenvalue and multiplicity at harmonic degree `m` on the round S⁴.
pub fn paneitz_level_s4(m: usize) -> Result<(f64, usize)> {
    if m == 0 {
        return Err(Error::ConstantLevel);
    }
    let mf = m as f64;
    let eigenvalue = mf * (mf + 1.0) * (mf + 2.0) * (mf + 3.0);
    let multiplicity = (m + 1) * (m + 2) * (2 * m + 3) / 6;
    Ok((eigenvalue, multiplicity))
}

/// Curvature data of the unit round sphere `Sⁿ`, used to specialize the
/// Paneitz operator and Q-curvature formulas.
pub mod round_sphere {
    /// Scalar curvature `R = n(n-1)`.
    pub fn scalar_curvature(n: u32) -> f64 {
        let n = n as f64;
        n * (n - 1.0)
    }

    /// Ricci tensor is `(n-1) g`.
    pub fn ricci_factor(n: u32) -> f64 {
        n as f64 - 1.0
    }

    /// Laplace eigenvalue at degree `m`: `m(m+n-1)`.
    pub fn laplace_eigenvalue(n: u32, m: usize) -> f64 {
        let m = m as f64;
        m * (m + n as f64 - 1.0)
    }

    /// Dimension of degree-`m` harmonics on `Sⁿ`:
    /// `(2m+n-1)(m+n-2)! / (m!(n-1)!)`.
    pub fn harmonic_multiplicity(n: u32, m: usize) -> usize {
        let n = n as usize;
        if m == 0 {
            return 1;
        }
        // (m+n-2)!/(m!(n-2)!) is a binomial; divide by (n-1) at the end.
        let mut binom: u128 = 1;
        for i in 1..=(n - 2) {
            binom = binom * (m + i) as u128 / i as u128;
        }
        ((2 * m + n - 1) as u128 * binom / (n - 1) as u128) as usize
    }

    /// Eigenvalue of `P₄ = Δ² + δ((2/3)R g - 2 Ric) d` at degree `m` on S⁴.
    ///
    /// With `Ric = 3g`, `R = 12` the first-order part is `2 δd = -2Δ`, so
    /// `P₄ φ = E(E+2) φ` with `E` the Laplace eigenvalue.
    pub fn paneitz_eigenvalue(m: usize) -> f64 {
        let e = laplace_eigenvalue(4, m);
        let coupling = (2.0 / 3.0) * scalar_curvature(4) - 2.0 * ricci_factor(4);
        e * e + coupling * e
    }

    /// `Q = -(1/12)(ΔR - R² + 3|Ric|²)` for the round S⁴ (`ΔR = 0`).
    pub fn q_curvature_s4() -> f64 {
        let r = scalar_curvature(4);
        let ric_sq = 4.0 * ricci_factor(4).powi(2);
        -(0.0 - r * r + 3.0 * ric_sq) / 12.0
    }

    /// Volume of the unit `S⁴`.
    pub fn volume_s4() -> f64 {
        8.0 * std::f64::consts::PI.powi(2) / 3.0
    }
}

/// Tabulated eigenfunctions for a user-supplied spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenTable {
    pub points: usize,
    pub weights: Vec<f64>,
    /// `positive[level][function][point]`
    pub positive: Vec<Vec<Vec<f64>>>,
    /// `negative[level][function][point]`, levels ordered as `negative_levels`.
    pub negative: Vec<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone)]
pub struct SpectrumModel {
    geometry: Geometry,
    operator: Operator,
    levels: Vec<Level>,
    negative_levels: Vec<Level>,
    volume: f64,
    dimension: u32,
    table: Option<EigenTable>,
}

impl SpectrumModel {
    pub fn sphere2(levels: usize) -> Self {
        Self::builtin(Geometry::Sphere2, levels)
    }

    pub fn flat_torus2(levels: usize) -> Self {
        Self::builtin(Geometry::FlatTorus2, levels)
    }

    /// Paneitz spectrum of the round S⁴. The closed-form levels are checked
    /// against the operator specialization in [`round_sphere`].
    pub fn round_sphere4_paneitz(levels: usize) -> Result<Self> {
        for m in 1..=levels {
            let (ev, mult) = paneitz_level_s4(m)?;
            let derived = round_sphere::paneitz_eigenvalue(m);
            let derived_mult = round_sphere::harmonic_multiplicity(4, m);
            if ev != derived || mult != derived_mult {
                return Err(invalid(
                    "levels",
                    format!("Paneitz level {m} disagrees with its operator derivation"),
                ));
            }
        }
        Ok(Self::builtin(Geometry::RoundSphere4Paneitz, levels))
    }

    fn builtin(geometry: Geometry, count: usize) -> Self {
        let (operator, volume, dimension) = match geometry {
            Geometry::Sphere2 => (Operator::Laplacian, 4.0 * PI, 2),
            Geometry::FlatTorus2 => (Operator::Laplacian, 4.0 * PI * PI, 2),
            Geometry::RoundSphere4Paneitz => (Operator::Gjms, round_sphere::volume_s4(), 4),
            Geometry::UserSupplied => unreachable!("user spectra come from tables"),
        };
        SpectrumModel {
            geometry,
            operator,
            levels: builtin_levels(geometry, count),
            negative_levels: Vec::new(),
            volume,
            dimension,
            table: None,
        }
    }

    /// Builds a user-supplied spectrum from tabulated eigenfunctions.
    /// Records are `(eigenvalue, values at every point)`; equal consecutive
    /// eigenvalues form one level, negative eigenvalues form the negative
    /// part of a GJMS spectrum.
    pub fn from_table(
        dimension: u32,
        volume: f64,
        operator: Operator,
        weights: Vec<f64>,
        records: Vec<(f64, Vec<f64>)>,
    ) -> Result<Self> {
        if dimension < 2 {
            return Err(invalid("dimension", "must be at least 2"));
        }
        if !(volume > 0.0) {
            return Err(invalid("volume", "must be positive"));
        }
        let points = weights.len();
        if points == 0 {
            return Err(Error::EmptyGrid);
        }
        let mut levels: Vec<Level> = Vec::new();
        let mut negative_levels: Vec<Level> = Vec::new();
        let mut positive: Vec<Vec<Vec<f64>>> = Vec::new();
        let mut negative: Vec<Vec<Vec<f64>>> = Vec::new();
        for (i, (ev, values)) in records.into_iter().enumerate() {
            if values.len() != points {
                return Err(invalid(
                    "records",
                    format!("record {i} has {} values, expected {points}", values.len()),
                ));
            }
            if ev == 0.0 {
                return Err(Error::ConstantLevel);
            }
            let (lv, tab, key) = if ev > 0.0 {
                (&mut levels, &mut positive, ev)
            } else {
                if operator == Operator::Laplacian {
                    return Err(invalid("records", "-Δ has no negative eigenvalues"));
                }
                (&mut negative_levels, &mut negative, -ev)
            };
            match lv.last_mut() {
                Some(last) if last.eigenvalue == key => {
                    last.multiplicity += 1;
                    tab.last_mut().unwrap().push(values);
                }
                Some(last) if last.eigenvalue > key => {
                    return Err(invalid(
                        "records",
                        format!("eigenvalue magnitudes must be nondecreasing (record {i})"),
                    ));
                }
                _ => {
                    lv.push(Level {
                        eigenvalue: key,
                        multiplicity: 1,
                    });
                    tab.push(vec![values]);
                }
            }
        }
        if levels.is_empty() && negative_levels.is_empty() {
            return Err(invalid("records", "spectrum has no levels"));
        }
        Ok(SpectrumModel {
            geometry: Geometry::UserSupplied,
            operator,
            levels,
            negative_levels,
            volume,
            dimension,
            table: Some(EigenTable {
                points,
                weights,
                positive,
                negative,
            }),
        })
    }

    /// Reads a spectrum file; see [`parse_spectrum`] for the layout.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        parse_spectrum(&text)
    }

    pub fn geometry(&self) -> Geometry {
        self.geometry
    }

    pub fn operator(&self) -> Operator {
        self.operator
    }

    pub fn levels(&self) -> &[Level] {
        &self.levels
    }

    pub fn negative_levels(&self) -> &[Level] {
        &self.negative_levels
    }

    pub fn volume(&self) -> f64 {
        self.volume
    }

    pub fn dimension(&self) -> u32 {
        self.dimension
    }

    pub fn table(&self) -> Option<&EigenTable> {
        self.table.as_ref()
    }

    /// True for geometries whose eigenspaces satisfy an addition theorem,
    /// so `Σ_k φ_k(x)² = N/V` at every point.
    pub fn is_homogeneous(&self) -> bool {
        self.geometry != Geometry::UserSupplied
    }

    /// Levels of a built-in geometry beyond those stored, used for tail
    /// estimates. Returns `None` for user-supplied spectra.
    pub fn extended_levels(&self, count: usize) -> Option<Vec<Level>> {
        match self.geometry {
            Geometry::UserSupplied => None,
            g => Some(builtin_levels(g, count)),
        }
    }

    pub(crate) fn require(&self, geometry: Geometry, name: &'static str) -> Result<()> {
        if self.geometry != geometry {
            return Err(Error::GeometryMismatch {
                expected: name,
                found: self.geometry,
            });
        }
        Ok(())
    }
}

fn builtin_levels(geometry: Geometry, count: usize) -> Vec<Level> {
    match geometry {
        Geometry::Sphere2 => (1..=count)
            .map(|m| {
                let (eigenvalue, multiplicity) = sphere_level(m).unwrap();
                Level {
                    eigenvalue,
                    multiplicity,
                }
            })
            .collect(),
        Geometry::RoundSphere4Paneitz => (1..=count)
            .map(|m| {
                let (eigenvalue, multiplicity) = paneitz_level_s4(m).unwrap();
                Level {
                    eigenvalue,
                    multiplicity,
                }
            })
            .collect(),
        Geometry::FlatTorus2 => {
            let mut out = Vec::with_capacity(count);
            let mut n: i64 = 1;
            while out.len() < count {
                let mult = torus_lattice_points(n).len();
                if mult > 0 {
                    out.push(Level {
                        eigenvalue: n as f64,
                        multiplicity: mult,
                    });
                }
                n += 1;
            }
            out
        }
        Geometry::UserSupplied => Vec::new(),
    }
}

/// Integer lattice points `k` with `|k|² = n`, in lexicographic order.
pub fn torus_lattice_points(n: i64) -> Vec<[i64; 2]> {
    let r = (n as f64).sqrt().ceil() as i64;
    let mut pts = Vec::new();
    for k1 in -r..=r {
        let rem = n - k1 * k1;
        if rem < 0 {
            continue;
        }
        let k2 = (rem as f64).sqrt().round() as i64;
        if k2 * k2 == rem {
            pts.push([k1, -k2]);
            if k2 != 0 {
                pts.push([k1, k2]);
            }
        }
    }
    pts
}

/// Parses the plain-text spectrum format.
///
/// ```text
/// randcurv-spectrum 1
/// dimension 2
/// volume 12.566370614359172
/// points 3
/// operator laplacian            # or gjms; optional, default laplacian
/// weights 4.18879 4.18879 4.18879   # optional quadrature weights
/// eigen 2.0 0.1 0.2 0.3         # eigenvalue then one value per point
/// ```
///
/// Blank lines and `#` comments are ignored. Negative eigenvalues are only
/// accepted with `operator gjms`.
pub fn parse_spectrum(text: &str) -> Result<SpectrumModel> {
    let mut dimension = None;
    let mut volume = None;
    let mut points: Option<usize> = None;
    let mut operator = Operator::Laplacian;
    let mut weights: Option<Vec<f64>> = None;
    let mut records = Vec::new();
    let mut saw_magic = false;

    let bad = |line: usize, reason: String| Error::SpectrumFile { line, reason };
    let num = |line: usize, tok: &str| -> Result<f64> {
        tok.parse::<f64>()
            .map_err(|_| bad(line, format!("`{tok}` is not a number")))
    };

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap().trim();
        if content.is_empty() {
            continue;
        }
        let mut toks = content.split_whitespace();
        let key = toks.next().unwrap();
        let rest: Vec<&str> = toks.collect();
        if !saw_magic {
            if key != "randcurv-spectrum" || rest != ["1"] {
                return Err(bad(line, "expected header `randcurv-spectrum 1`".into()));
            }
            saw_magic = true;
            continue;
        }
        match key {
            "dimension" | "volume" | "points" if rest.len() != 1 => {
                return Err(bad(line, format!("`{key}` takes exactly one value")));
            }
            "dimension" => {
                dimension = Some(
                    rest[0]
                        .parse::<u32>()
                        .map_err(|_| bad(line, "dimension must be an integer".into()))?,
                )
            }
            "volume" => volume = Some(num(line, rest[0])?),
            "points" => {
                points = Some(
                    rest[0]
                        .parse::<usize>()
                        .map_err(|_| bad(line, "points must be an integer".into()))?,
                )
            }
            "operator" => {
                operator = match rest.as_slice() {
                    ["laplacian"] => Operator::Laplacian,
                    ["gjms"] => Operator::Gjms,
                    _ => return Err(bad(line, "operator must be `laplacian` or `gjms`".into())),
                }
            }
            "weights" => {
                weights = Some(
                    rest.iter()
                        .map(|t| num(line, t))
                        .collect::<Result<Vec<_>>>()?,
                )
            }
            "eigen" => {
                let p = points.ok_or_else(|| bad(line, "`points` must precede records".into()))?;
                if rest.len() != p + 1 {
                    return Err(bad(
                        line,
                        format!("record has {} values, expected {}", rest.len().saturating_sub(1), p),
                    ));
                }
                let ev = num(line, rest[0])?;
                let values = rest[1..]
                    .iter()
                    .map(|t| num(line, t))
                    .collect::<Result<Vec<_>>>()?;
                records.push((ev, values));
            }
            other => return Err(bad(line, format!("unknown key `{other}`"))),
        }
    }
    if !saw_magic {
        return Err(bad(0, "empty spectrum file".into()));
    }
    let dimension = dimension.ok_or_else(|| bad(0, "missing `dimension`".into()))?;
    let volume = volume.ok_or_else(|| bad(0, "missing `volume`".into()))?;
    let points = points.ok_or_else(|| bad(0, "missing `points`".into()))?;
    let weights = match weights {
        Some(w) if w.len() == points => w,
        Some(w) => {
            return Err(bad(
                0,
                format!("{} weights for {points} points", w.len()),
            ))
        }
        None => vec![volume / points as f64; points],
    };
    SpectrumModel::from_table(dimension, volume, operator, weights, records)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum CoefficientRule {
    /// `c_j = λ_j^{-s}`
    PowerLaw { s: f64 },
    /// `c_j = e^{-λ_j T/2} / λ_j`
    HeatKernel { t: f64 },
    /// `c_m = K m^{-s}` with `K = 1/ζ(s)`
    SphereNormalizedPowerLaw { s: f64, normalization: f64 },
    Explicit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Indexing {
    PerEigenfunction,
    PerEigenspace,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Truncation {
    pub max_level: usize,
    pub tolerance: f64,
}

impl Truncation {
    pub fn new(max_level: usize) -> Self {
        Truncation {
            max_level,
            tolerance: DEFAULT_TAIL_TOLERANCE,
        }
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self
    }
}

/// Materialized coefficient sequence. `values[i]` weights positive level `i`
/// of the spectrum; `negative_values[i]` is the standard deviation `t_i` of
/// the Gaussian attached to negative level `i`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoefficientScheme {
    pub rule: CoefficientRule,
    pub indexing: Indexing,
    pub values: Vec<f64>,
    pub negative_values: Vec<f64>,
    /// Retained mass: `Σ c_m` for per-eigenspace schemes, otherwise the trace
    /// `Σ N_j c_j² λ_j²` of the covariance of `h`.
    pub retained_mass: f64,
    /// Estimated mass of the discarded levels relative to the full series.
    pub tail_mass: f64,
}

impl CoefficientScheme {
    pub fn truncation(&self) -> usize {
        self.values.len()
    }

    /// Normalization constant of a sphere-normalized scheme.
    pub fn normalization(&self) -> Option<f64> {
        match self.rule {
            CoefficientRule::SphereNormalizedPowerLaw { normalization, .. } => Some(normalization),
            _ => None,
        }
    }

    /// Scales every coefficient by `t` (per-eigenspace weights scale the
    /// variance linearly).
    pub fn scaled(&self, t: f64) -> CoefficientScheme {
        let mut out = self.clone();
        out.rule = CoefficientRule::Explicit;
        out.values.iter_mut().for_each(|c| *c *= t);
        out.negative_values.iter_mut().for_each(|c| *c *= t);
        out.retained_mass *= match self.indexing {
            Indexing::PerEigenspace => t,
            Indexing::PerEigenfunction => t * t,
        };
        out
    }
}

fn check_truncation(spectrum: &SpectrumModel, truncation: Truncation) -> Result<()> {
    if truncation.max_level == 0 {
        return Err(invalid("truncation", "at least one level is required"));
    }
    if truncation.max_level > spectrum.levels.len() {
        return Err(invalid(
            "truncation",
            format!(
                "{} levels requested but the spectrum holds {}",
                truncation.max_level,
                spectrum.levels.len()
            ),
        ));
    }
    if !(truncation.tolerance >= 0.0) {
        return Err(invalid("tolerance", "must be nonnegative"));
    }
    Ok(())
}

fn finish(
    rule: CoefficientRule,
    indexing: Indexing,
    values: Vec<f64>,
    retained: f64,
    tail: f64,
    tolerance: f64,
) -> Result<CoefficientScheme> {
    let relative = if tail.is_finite() {
        tail / (retained + tail)
    } else {
        f64::INFINITY
    };
    if relative > tolerance {
        return Err(Error::TruncationTooShort {
            max_level: values.len(),
            tail: relative,
            tolerance,
        });
    }
    Ok(CoefficientScheme {
        rule,
        indexing,
        values,
        negative_values: Vec::new(),
        retained_mass: retained,
        tail_mass: relative,
    })
}

/// Mass `N c² λ²` of a per-eigenfunction level.
fn h_mass(level: &Level, c: f64) -> f64 {
    level.multiplicity as f64 * (c * level.eigenvalue).powi(2)
}

/// Levels summed explicitly past the truncation before falling back to an
/// integral remainder.
const TAIL_LEVELS: usize = 4000;

/// `c_j = λ_j^{-s}` per eigenfunction.
pub fn make_power_law(
    s: f64,
    spectrum: &SpectrumModel,
    truncation: Truncation,
) -> Result<CoefficientScheme> {
    if !(s > 0.0) || !s.is_finite() {
        return Err(invalid("s", format!("must be positive, got {s}")));
    }
    check_truncation(spectrum, truncation)?;
    let m = truncation.max_level;
    let coef = |l: &Level| l.eigenvalue.powf(-s);
    let values: Vec<f64> = spectrum.levels[..m].iter().map(coef).collect();
    let retained: f64 = spectrum.levels[..m]
        .iter()
        .zip(&values)
        .map(|(l, &c)| h_mass(l, c))
        .sum();
    let tail = match spectrum.extended_levels(m + TAIL_LEVELS) {
        None => tail_of_table(spectrum, m, |l| h_mass(l, coef(l))),
        Some(ext) => {
            let explicit: f64 = ext[m..].iter().rev().map(|l| h_mass(l, coef(l))).sum();
            // Integral comparison against the Weyl counting law: the mass
            // density per unit eigenvalue is A λ^{2-2s}.
            let lambda = ext.last().unwrap().eigenvalue;
            let density = spectrum.geometry.weyl_density().unwrap();
            let remainder = if s > 1.5 {
                density * lambda.powf(3.0 - 2.0 * s) / (2.0 * s - 3.0)
            } else {
                f64::INFINITY
            };
            explicit + remainder
        }
    };
    finish(
        CoefficientRule::PowerLaw { s },
        Indexing::PerEigenfunction,
        values,
        retained,
        tail,
        truncation.tolerance,
    )
}

fn tail_of_table(spectrum: &SpectrumModel, m: usize, mass: impl Fn(&Level) -> f64) -> f64 {
    spectrum.levels[m..].iter().map(mass).sum()
}

/// `c_m = m^{-s}/ζ(s)` per eigenspace, so the untruncated weights sum to 1.
pub fn make_sphere_normalized(s: f64, truncation: Truncation) -> Result<CoefficientScheme> {
    if !(s > 1.0) || !s.is_finite() {
        return Err(invalid("s", format!("series needs s > 1, got {s}")));
    }
    if truncation.max_level == 0 {
        return Err(invalid("truncation", "at least one level is required"));
    }
    let zeta = special::zeta(s)?;
    let k = 1.0 / zeta;
    let m = truncation.max_level;
    let values: Vec<f64> = (1..=m).map(|j| k * (j as f64).powf(-s)).collect();
    let retained: f64 = values.iter().rev().sum();
    let tail = k * special::power_tail(s, m)?;
    finish(
        CoefficientRule::SphereNormalizedPowerLaw {
            s,
            normalization: k,
        },
        Indexing::PerEigenspace,
        values,
        retained,
        tail,
        truncation.tolerance,
    )
}

/// `c_j = e^{-λ_j T/2}/λ_j`, making `r_h(x,x)` the heat kernel without its
/// constant term.
pub fn make_heat_kernel(
    t: f64,
    spectrum: &SpectrumModel,
    truncation: Truncation,
) -> Result<CoefficientScheme> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(invalid("T", format!("must be positive, got {t}")));
    }
    check_truncation(spectrum, truncation)?;
    let m = truncation.max_level;
    let coef = |l: &Level| (-l.eigenvalue * t / 2.0).exp() / l.eigenvalue;
    let values: Vec<f64> = spectrum.levels[..m].iter().map(coef).collect();
    let retained: f64 = spectrum.levels[..m]
        .iter()
        .map(|l| l.multiplicity as f64 * (-l.eigenvalue * t).exp())
        .sum();
    let tail = match spectrum.geometry {
        Geometry::UserSupplied => {
            tail_of_table(spectrum, m, |l| l.multiplicity as f64 * (-l.eigenvalue * t).exp())
        }
        g => heat_tail(g, m, t),
    };
    finish(
        CoefficientRule::HeatKernel { t },
        Indexing::PerEigenfunction,
        values,
        retained,
        tail,
        truncation.tolerance,
    )
}

/// `Σ_{levels > m} N e^{-λT}` for a built-in geometry, summed until the
/// terms are negligible.
fn heat_tail(geometry: Geometry, m: usize, t: f64) -> f64 {
    let mut count = (2 * m).max(64);
    loop {
        let levels = builtin_levels(geometry, count);
        let last = levels.last().unwrap();
        let last_term = last.multiplicity as f64 * (-last.eigenvalue * t).exp();
        if last_term < 1e-300 || last.eigenvalue * t > 745.0 || count > 1 << 20 {
            return levels[m..]
                .iter()
                .rev()
                .map(|l| l.multiplicity as f64 * (-l.eigenvalue * t).exp())
                .sum();
        }
        count *= 2;
    }
}

/// A user-provided coefficient list; no tail beyond the list is assumed.
pub fn make_explicit(
    values: Vec<f64>,
    negative_values: Vec<f64>,
    indexing: Indexing,
    spectrum: &SpectrumModel,
) -> Result<CoefficientScheme> {
    if values.is_empty() && negative_values.is_empty() {
        return Err(invalid("values", "at least one coefficient is required"));
    }
    if values.len() > spectrum.levels.len() {
        return Err(invalid(
            "values",
            format!("{} coefficients for {} levels", values.len(), spectrum.levels.len()),
        ));
    }
    if negative_values.len() > spectrum.negative_levels.len() {
        return Err(invalid(
            "negative_values",
            format!(
                "{} coefficients for {} negative levels",
                negative_values.len(),
                spectrum.negative_levels.len()
            ),
        ));
    }
    if values.iter().chain(&negative_values).any(|&c| !(c >= 0.0) || !c.is_finite()) {
        return Err(invalid("values", "coefficients must be finite and nonnegative"));
    }
    if indexing == Indexing::PerEigenspace && !negative_values.is_empty() {
        return Err(invalid(
            "negative_values",
            "negative levels carry per-eigenfunction scales only",
        ));
    }
    let retained = match indexing {
        Indexing::PerEigenspace => values.iter().sum(),
        Indexing::PerEigenfunction => spectrum.levels[..values.len()]
            .iter()
            .zip(&values)
            .map(|(l, &c)| h_mass(l, c))
            .sum(),
    };
    Ok(CoefficientScheme {
        rule: CoefficientRule::Explicit,
        indexing,
        values,
        negative_values,
        retained_mass: retained,
        tail_mass: 0.0,
    })
}

/// Which field a regularity question is about.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegularityTarget {
    /// The conformal factor `f`.
    Factor,
    /// The derived field `h` (`Δ₀ f`, or `P f` up to sign).
    Derived,
}

/// Whether the sufficient condition for almost-sure `C^k` regularity holds
/// for the idealized (untruncated) series.
pub fn classify_regularity(
    scheme: &CoefficientScheme,
    spectrum: &SpectrumModel,
    target: RegularityTarget,
    k: u32,
) -> Result<bool> {
    let k = k as f64;
    let n = spectrum.dimension() as f64;
    let derived = target == RegularityTarget::Derived;
    match scheme.rule {
        CoefficientRule::HeatKernel { .. } => Ok(true),
        CoefficientRule::Explicit => Err(Error::IndeterminateRegularity),
        CoefficientRule::SphereNormalizedPowerLaw { s, .. } => {
            // f ∈ H_r iff r < (s+3)/2; H_r ⊂ C^k for k < r - 1; h = Δf
            // loses two derivatives.
            Ok(if derived { s > 2.0 * k + 3.0 } else { s > 2.0 * k - 1.0 })
        }
        CoefficientRule::PowerLaw { s } => Ok(match spectrum.operator() {
            Operator::Laplacian => {
                let bound = (n + k) / 2.0 + if derived { 1.0 } else { 0.0 };
                s > bound
            }
            Operator::Gjms => {
                let bound = k / n + if derived { 2.0 } else { 1.0 };
                s > bound
            }
        }),
    }
}

/// Sobolev membership on S² for per-eigenspace weights: `f ∈ H_r` almost
/// surely iff `Σ m^{2r-4} c_m < ∞`, which for `c_m ~ m^{-s}` means
/// `r < (s+3)/2`.
pub fn sphere_sobolev_membership(s: f64, r: f64) -> bool {
    r < (s + 3.0) / 2.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sphere_levels() {
        assert_eq!(sphere_level(1).unwrap(), (2.0, 3));
        assert_eq!(sphere_level(2).unwrap(), (6.0, 5));
        assert_eq!(sphere_level(10).unwrap(), (110.0, 21));
        assert!(matches!(sphere_level(0), Err(Error::ConstantLevel)));
    }

    #[test]
    fn paneitz_levels_match_operator_derivation() {
        assert_eq!(paneitz_level_s4(1).unwrap(), (24.0, 5));
        assert_eq!(paneitz_level_s4(2).unwrap(), (120.0, 14));
        assert_eq!(paneitz_level_s4(3).unwrap(), (360.0, 30));
        for m in 1..=50 {
            let (ev, mult) = paneitz_level_s4(m).unwrap();
            let e = round_sphere::laplace_eigenvalue(4, m);
            assert_eq!(ev, e * (e + 2.0));
            assert_eq!(ev, round_sphere::paneitz_eigenvalue(m));
            assert_eq!(mult, round_sphere::harmonic_multiplicity(4, m));
        }
        assert!(SpectrumModel::round_sphere4_paneitz(50).is_ok());
    }

    #[test]
    fn harmonic_multiplicity_matches_low_dimensions() {
        for m in 1..30 {
            assert_eq!(round_sphere::harmonic_multiplicity(2, m), 2 * m + 1);
        }
        // S³: (m+1)²
        for m in 1..30 {
            assert_eq!(round_sphere::harmonic_multiplicity(3, m), (m + 1) * (m + 1));
        }
    }

    #[test]
    fn round_s4_q_curvature_is_three() {
        assert_eq!(round_sphere::q_curvature_s4(), 3.0);
    }

    #[test]
    fn torus_levels_count_lattice_points() {
        let levels = builtin_levels(Geometry::FlatTorus2, 6);
        let got: Vec<(f64, usize)> = levels.iter().map(|l| (l.eigenvalue, l.multiplicity)).collect();
        assert_eq!(
            got,
            vec![(1.0, 4), (2.0, 4), (4.0, 4), (5.0, 8), (8.0, 4), (9.0, 4)]
        );
        assert_eq!(torus_lattice_points(25).len(), 12);
    }

    #[test]
    fn power_law_values() {
        let sphere = SpectrumModel::sphere2(2);
        let scheme = make_power_law(2.0, &sphere, Truncation::new(2).with_tolerance(1.0)).unwrap();
        assert_eq!(scheme.values, vec![0.25, 1.0 / 36.0]);

        let torus = SpectrumModel::flat_torus2(2);
        let scheme =
            make_power_law(1.0, &torus, Truncation::new(2).with_tolerance(f64::INFINITY)).unwrap();
        assert_eq!(scheme.values, vec![1.0, 0.5]);
        assert!(scheme.tail_mass.is_infinite());
    }

    #[test]
    fn power_law_refuses_short_truncation() {
        let sphere = SpectrumModel::sphere2(3);
        let err = make_power_law(2.0, &sphere, Truncation::new(3)).unwrap_err();
        assert!(matches!(err, Error::TruncationTooShort { .. }));
        assert!(make_power_law(0.0, &sphere, Truncation::new(3)).is_err());
        assert!(make_power_law(-1.0, &sphere, Truncation::new(3)).is_err());
    }

    #[test]
    fn sphere_normalized_reports_partial_sum() {
        let scheme = make_sphere_normalized(2.0, Truncation::new(1).with_tolerance(1.0)).unwrap();
        let expected = 6.0 / (PI * PI);
        assert!((scheme.values[0] - expected).abs() < 1e-15);
        assert!((scheme.retained_mass - expected).abs() < 1e-15);
        assert!(make_sphere_normalized(1.0, Truncation::new(4)).is_err());
        assert!(make_sphere_normalized(0.5, Truncation::new(4)).is_err());
    }

    #[test]
    fn heat_kernel_values() {
        let sphere = SpectrumModel::sphere2(20);
        let t = 0.7;
        let scheme = make_heat_kernel(t, &sphere, Truncation::new(20)).unwrap();
        for (i, c) in scheme.values.iter().enumerate() {
            let m = (i + 1) as f64;
            let e = m * (m + 1.0);
            assert!((c - (-e * t / 2.0).exp() / e).abs() < 1e-18);
        }
        assert!(make_heat_kernel(0.0, &sphere, Truncation::new(3)).is_err());
        assert!(make_heat_kernel(-2.0, &sphere, Truncation::new(3)).is_err());
    }

    #[test]
    fn heat_kernel_level_ratio_vanishes_for_large_t() {
        let sphere = SpectrumModel::sphere2(2);
        let mut prev = f64::INFINITY;
        for t in [1.0, 5.0, 20.0, 80.0] {
            let s = make_heat_kernel(t, &sphere, Truncation::new(2).with_tolerance(1.0)).unwrap();
            let ratio = s.values[1] / s.values[0];
            assert!(ratio < prev);
            prev = ratio;
        }
        assert!(prev < 1e-60);
    }

    #[test]
    fn regularity_examples() {
        let sphere = SpectrumModel::sphere2(40);
        let torus = SpectrumModel::flat_torus2(40);
        let pl2 = make_power_law(2.0, &torus, Truncation::new(40).with_tolerance(1.0)).unwrap();
        assert!(classify_regularity(&pl2, &torus, RegularityTarget::Factor, 0).unwrap());
        let sn8 = make_sphere_normalized(8.0, Truncation::new(12)).unwrap();
        assert!(classify_regularity(&sn8, &sphere, RegularityTarget::Derived, 2).unwrap());
        let pl15 = make_power_law(1.5, &torus, Truncation::new(4).with_tolerance(f64::INFINITY)).unwrap();
        assert!(!classify_regularity(&pl15, &torus, RegularityTarget::Factor, 2).unwrap());
        let heat = make_heat_kernel(1.0, &sphere, Truncation::new(40)).unwrap();
        assert!(classify_regularity(&heat, &sphere, RegularityTarget::Derived, 50).unwrap());
        let explicit = make_explicit(vec![1.0], vec![], Indexing::PerEigenspace, &sphere).unwrap();
        assert!(matches!(
            classify_regularity(&explicit, &sphere, RegularityTarget::Factor, 0),
            Err(Error::IndeterminateRegularity)
        ));
    }

    #[test]
    fn gjms_regularity_threshold() {
        let s4 = SpectrumModel::round_sphere4_paneitz(30).unwrap();
        let scheme = make_power_law(1.6, &s4, Truncation::new(30).with_tolerance(f64::INFINITY)).unwrap();
        // t > 1 + k/n with n = 4
        assert!(classify_regularity(&scheme, &s4, RegularityTarget::Factor, 2).unwrap());
        assert!(!classify_regularity(&scheme, &s4, RegularityTarget::Factor, 3).unwrap());
        assert!(!classify_regularity(&scheme, &s4, RegularityTarget::Derived, 0).unwrap());
    }

    #[test]
    fn parses_spectrum_file() {
        let text = "\
randcurv-spectrum 1
# two points on a toy space
dimension 2
volume 2.0
points 2
eigen 1.0 0.5 0.9
eigen 1.0 0.1 0.2
eigen 3.0 0.7 -0.7
";
        let spec = parse_spectrum(text).unwrap();
        assert_eq!(spec.geometry(), Geometry::UserSupplied);
        assert_eq!(spec.levels().len(), 2);
        assert_eq!(spec.levels()[0].multiplicity, 2);
        assert_eq!(spec.table().unwrap().weights, vec![1.0, 1.0]);
    }

    #[test]
    fn spectrum_file_errors_name_the_line() {
        let missing = "randcurv-spectrum 1\ndimension 2\nvolume 1\npoints 2\neigen 1.0 0.5\n";
        match parse_spectrum(missing) {
            Err(Error::SpectrumFile { line, .. }) => assert_eq!(line, 5),
            other => panic!("unexpected {other:?}"),
        }
        let negative = "randcurv-spectrum 1\ndimension 2\nvolume 1\npoints 1\neigen -1.0 0.5\n";
        assert!(parse_spectrum(negative).is_err());
        let gjms = "randcurv-spectrum 1\ndimension 4\nvolume 1\npoints 1\noperator gjms\neigen -2.0 0.5\neigen 3.0 1.0\n";
        let spec = parse_spectrum(gjms).unwrap();
        assert_eq!(spec.negative_levels()[0].eigenvalue, 2.0);
        assert!(parse_spectrum("dimension 2\n").is_err());
    }
}

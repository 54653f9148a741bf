//! Centered Gaussian fields `f`, `h`, `v`, `w`, their covariance kernels and
//! variance suprema, and single-draw samplers.
//!
//! Conventions: `f` is synthesized with a positive sign (the law is
//! symmetric). Each mode of `h` is `-λ` times the mode of `f`, where `λ` is
//! the signed eigenvalue of `-Δ₀` or of the GJMS operator `P`; this is
//! `h = Δ₀ f` in the scalar case and `h = -P f` in the Q case.
//!
//! `v = h / R₀`. In the scalar case `w = h + R₀ f`, so `R₁ - R₀ ≈ -a w`.
//! In the Q case `w = P f - n Q₀ f = -h - n Q₀ f`, so `Q₁ - Q₀ ≈ a w`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::basis::{Basis, Mode};
use crate::error::{invalid, Error, Result};
use crate::grid::{Grid, Points};
use crate::harmonics;
use crate::rng;
use crate::spectral::{
    torus_lattice_points, CoefficientScheme, Geometry, Indexing, Operator, SpectrumModel,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
pub enum FieldKind {
    F,
    H,
    V,
    W,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum ReferenceCurvature {
    Constant(f64),
    /// One value per grid point.
    Gridded(Vec<f64>),
}

impl ReferenceCurvature {
    pub fn at(&self, i: usize) -> f64 {
        match self {
            ReferenceCurvature::Constant(c) => *c,
            ReferenceCurvature::Gridded(v) => v[i],
        }
    }

    pub fn constant(&self) -> Option<f64> {
        match self {
            ReferenceCurvature::Constant(c) => Some(*c),
            ReferenceCurvature::Gridded(_) => None,
        }
    }

    /// `inf R₀²` over the grid.
    pub fn inf_sq(&self) -> f64 {
        match self {
            ReferenceCurvature::Constant(c) => c * c,
            ReferenceCurvature::Gridded(v) => v.iter().map(|r| r * r).fold(f64::INFINITY, f64::min),
        }
    }

    /// True when the values are nonzero and of one sign.
    pub fn has_constant_sign(&self) -> bool {
        match self {
            ReferenceCurvature::Constant(c) => *c != 0.0,
            ReferenceCurvature::Gridded(v) => {
                v.iter().all(|&r| r > 0.0) || v.iter().all(|&r| r < 0.0)
            }
        }
    }

    fn first_zero(&self) -> Option<usize> {
        match self {
            ReferenceCurvature::Constant(c) => (*c == 0.0).then_some(0),
            ReferenceCurvature::Gridded(v) => v.iter().position(|&r| r == 0.0),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RandomFieldSpec {
    pub spectrum: SpectrumModel,
    pub coefficients: CoefficientScheme,
    pub which: FieldKind,
    pub reference: Option<ReferenceCurvature>,
}

impl RandomFieldSpec {
    pub fn new(
        spectrum: SpectrumModel,
        coefficients: CoefficientScheme,
        which: FieldKind,
        reference: Option<ReferenceCurvature>,
    ) -> Result<Self> {
        if coefficients.values.len() > spectrum.levels().len() {
            return Err(invalid("coefficients", "more coefficients than spectrum levels"));
        }
        if coefficients.negative_values.len() > spectrum.negative_levels().len() {
            return Err(invalid(
                "coefficients",
                "more negative-level scales than negative levels",
            ));
        }
        if coefficients.values.is_empty() && coefficients.negative_values.is_empty() {
            return Err(invalid("coefficients", "truncation M = 0"));
        }
        match which {
            FieldKind::V | FieldKind::W if reference.is_none() => {
                return Err(Error::MissingField("reference_curvature"))
            }
            FieldKind::V => {
                if let Some(i) = reference.as_ref().unwrap().first_zero() {
                    return Err(Error::VanishingCurvature(i));
                }
            }
            _ => {}
        }
        Ok(RandomFieldSpec {
            spectrum,
            coefficients,
            which,
            reference,
        })
    }

    /// The same draws viewed as a different field.
    pub fn with_kind(&self, which: FieldKind) -> Result<Self> {
        RandomFieldSpec::new(
            self.spectrum.clone(),
            self.coefficients.clone(),
            which,
            self.reference.clone(),
        )
    }

    pub fn levels(&self) -> usize {
        self.coefficients.values.len()
    }

    pub fn negative_levels(&self) -> usize {
        self.coefficients.negative_values.len()
    }

    /// Standard deviation of each mode of `f`, per level, for the positive
    /// and negative parts.
    pub fn level_f_std(&self) -> (Vec<f64>, Vec<f64>) {
        let v = self.spectrum.volume();
        let pos = self
            .coefficients
            .values
            .iter()
            .zip(self.spectrum.levels())
            .map(|(&c, l)| match self.coefficients.indexing {
                Indexing::PerEigenfunction => c,
                Indexing::PerEigenspace => (v * c / l.multiplicity as f64).sqrt() / l.eigenvalue,
            })
            .collect();
        (pos, self.coefficients.negative_values.clone())
    }

    fn mode_f_std(&self, modes: &[Mode]) -> Vec<f64> {
        let (pos, neg) = self.level_f_std();
        modes
            .iter()
            .map(|m| if m.negative { neg[m.level] } else { pos[m.level] })
            .collect()
    }

    /// `(α, β)` with `field = α h + β f` at a point with reference value `r`.
    pub fn combination(&self, r: f64) -> (f64, f64) {
        match self.which {
            FieldKind::F => (0.0, 1.0),
            FieldKind::H => (1.0, 0.0),
            FieldKind::V => (1.0 / r, 0.0),
            FieldKind::W => match self.spectrum.operator() {
                Operator::Laplacian => (1.0, r),
                Operator::Gjms => (-1.0, -(self.spectrum.dimension() as f64) * r),
            },
        }
    }

    fn reference_at(&self, i: usize) -> f64 {
        self.reference.as_ref().map_or(f64::NAN, |r| r.at(i))
    }

    fn constant_reference(&self) -> Option<f64> {
        match (&self.reference, self.which) {
            (_, FieldKind::F | FieldKind::H) => Some(f64::NAN),
            (Some(r), _) => r.constant(),
            (None, _) => None,
        }
    }

    /// Per-level variance contributions `(f·f, f·h, h·h)` at a point of a
    /// homogeneous space, i.e. `N/V` times the per-mode moments.
    fn level_moments(&self) -> Vec<(usize, f64, [f64; 3])> {
        let (pos, _) = self.level_f_std();
        let v = self.spectrum.volume();
        self.spectrum
            .levels()
            .iter()
            .zip(pos)
            .enumerate()
            .map(|(i, (l, s))| {
                let w = l.multiplicity as f64 / v * s * s;
                let ev = l.eigenvalue;
                (i, ev, [w, -ev * w, ev * ev * w])
            })
            .collect()
    }
}

/// One realization of the field on a grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FieldSample {
    pub seed: u64,
    pub draw_index: u64,
    /// Standard normals: positive-level modes first, then negative levels.
    /// For the dense sampler these are the `2N` normals fed to the factor.
    pub gaussians: Vec<f64>,
    pub values_f: Vec<f64>,
    pub values_h: Vec<f64>,
    pub values_gradsq: Option<Vec<f64>>,
    /// Diagonal jitter added by the dense sampler, one entry per attempt.
    pub jitter: Vec<f64>,
}

impl FieldSample {
    /// Values of `v` or `w` (or `f`, `h`) for `spec`, computed pointwise from
    /// the stored `f` and `h`.
    pub fn field(&self, spec: &RandomFieldSpec) -> Vec<f64> {
        (0..self.values_f.len())
            .map(|i| {
                let (a, b) = spec.combination(spec.reference_at(i));
                match spec.which {
                    FieldKind::F => self.values_f[i],
                    FieldKind::H => self.values_h[i],
                    FieldKind::V => self.values_h[i] * a,
                    FieldKind::W => a * self.values_h[i] + b * self.values_f[i],
                }
            })
            .collect()
    }
}

/// Spectral synthesizer for a fixed spec and grid.
#[derive(Debug, Clone)]
pub struct FieldSampler {
    spec: RandomFieldSpec,
    grid: Grid,
    basis: Basis,
    f_std: Vec<f64>,
    /// `(first mode, count, negative, level)` per level block.
    blocks: Vec<(usize, usize, bool, usize)>,
}

impl FieldSampler {
    pub fn new(spec: &RandomFieldSpec, grid: &Grid, gradients: bool) -> Result<Self> {
        let basis = Basis::new(
            &spec.spectrum,
            grid,
            spec.levels(),
            spec.negative_levels(),
            gradients,
        )?;
        if let Some(ReferenceCurvature::Gridded(v)) = &spec.reference {
            if v.len() != grid.len() {
                return Err(invalid(
                    "reference_curvature",
                    format!("{} values for {} grid points", v.len(), grid.len()),
                ));
            }
        }
        let f_std = spec.mode_f_std(&basis.modes);
        let mut blocks: Vec<(usize, usize, bool, usize)> = Vec::new();
        for (j, m) in basis.modes.iter().enumerate() {
            match blocks.last_mut() {
                Some(b) if b.2 == m.negative && b.3 == m.level => b.1 += 1,
                _ => blocks.push((j, 1, m.negative, m.level)),
            }
        }
        Ok(FieldSampler {
            spec: spec.clone(),
            grid: grid.clone(),
            basis,
            f_std,
            blocks,
        })
    }

    pub fn spec(&self) -> &RandomFieldSpec {
        &self.spec
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn basis(&self) -> &Basis {
        &self.basis
    }

    pub fn modes(&self) -> usize {
        self.basis.len()
    }

    /// The standard normals of one draw, keyed by `(seed, draw, level)`.
    pub fn normals(&self, seed: u64, draw: u64) -> Vec<f64> {
        let mut out = vec![0.0; self.modes()];
        self.fill_normals(seed, draw, &mut out);
        out
    }

    fn fill_normals(&self, seed: u64, draw: u64, out: &mut [f64]) {
        for &(start, len, negative, level) in &self.blocks {
            let dst = &mut out[start..start + len];
            if negative {
                rng::negative_level_normals(seed, draw, level, dst);
            } else {
                rng::level_normals(seed, draw, level, dst);
            }
        }
    }

    /// Normals for consecutive draws as a `modes × draws` matrix.
    pub fn normals_batch(&self, seed: u64, first: u64, count: usize) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.modes(), count);
        for (c, mut col) in m.column_iter_mut().enumerate() {
            self.fill_normals(seed, first + c as u64, col.as_mut_slice());
        }
        m
    }

    /// Per-mode multipliers taking normals to the modes of `α h + β f`.
    pub fn factors(&self, alpha: f64, beta: f64) -> Vec<f64> {
        self.basis
            .modes
            .iter()
            .zip(&self.f_std)
            .map(|(m, s)| (-alpha * m.eigenvalue + beta) * s)
            .collect()
    }

    /// Field values `points × draws` for the given per-mode multipliers.
    pub fn synthesize(&self, normals: &DMatrix<f64>, factors: &[f64]) -> DMatrix<f64> {
        let mut scaled = normals.clone();
        for (mut row, &f) in scaled.row_iter_mut().zip(factors) {
            row *= f;
        }
        &self.basis.values * scaled
    }

    /// `|∇f|²` at every point for every draw.
    pub fn gradsq(&self, normals: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let [g1, g2] = self
            .basis
            .gradients
            .as_ref()
            .ok_or(Error::MissingField("gradients"))?;
        let mut scaled = normals.clone();
        for (mut row, &f) in scaled.row_iter_mut().zip(&self.f_std) {
            row *= f;
        }
        let a = g1 * &scaled;
        let b = g2 * &scaled;
        Ok(a.component_mul(&a) + b.component_mul(&b))
    }

    /// `f` and `h` for a batch of draws.
    pub fn f_and_h(&self, normals: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
        (
            self.synthesize(normals, &self.factors(0.0, 1.0)),
            self.synthesize(normals, &self.factors(1.0, 0.0)),
        )
    }

    /// Values of the spec's own field for a batch of draws. With a gridded
    /// reference the combination is applied pointwise to `f` and `h`.
    pub fn target(&self, normals: &DMatrix<f64>) -> DMatrix<f64> {
        match (self.spec.which, &self.spec.reference) {
            (FieldKind::F | FieldKind::H, _) | (_, Some(ReferenceCurvature::Constant(_))) => {
                let (a, b) = self.spec.combination(self.spec.reference_at(0));
                self.synthesize(normals, &self.factors(a, b))
            }
            _ => {
                let (f, h) = self.f_and_h(normals);
                let mut out = h.clone();
                for i in 0..out.nrows() {
                    let (a, b) = self.spec.combination(self.spec.reference_at(i));
                    for j in 0..out.ncols() {
                        out[(i, j)] = a * h[(i, j)] + b * f[(i, j)];
                    }
                }
                out
            }
        }
    }

    /// Sample built from caller-provided normals (e.g. forced zeros).
    pub fn sample_from(&self, seed: u64, draw_index: u64, gaussians: Vec<f64>) -> Result<FieldSample> {
        if gaussians.len() != self.modes() {
            return Err(invalid(
                "gaussians",
                format!("{} values for {} modes", gaussians.len(), self.modes()),
            ));
        }
        let normals = DMatrix::from_column_slice(self.modes(), 1, &gaussians);
        let (f, h) = self.f_and_h(&normals);
        let values_gradsq = match self.basis.gradients {
            Some(_) => Some(self.gradsq(&normals)?.column(0).iter().copied().collect()),
            None => None,
        };
        Ok(FieldSample {
            seed,
            draw_index,
            gaussians,
            values_f: f.column(0).iter().copied().collect(),
            values_h: h.column(0).iter().copied().collect(),
            values_gradsq,
            jitter: Vec::new(),
        })
    }

    pub fn sample(&self, seed: u64, draw_index: u64) -> FieldSample {
        let g = self.normals(seed, draw_index);
        self.sample_from(seed, draw_index, g).expect("normals match the mode count")
    }
}

/// One draw on S² via real spherical harmonics.
pub fn sample_sphere(
    spec: &RandomFieldSpec,
    grid: &Grid,
    seed: u64,
    draw_index: u64,
    gradients: bool,
) -> Result<FieldSample> {
    spec.spectrum.require(Geometry::Sphere2, "Sphere2")?;
    Ok(FieldSampler::new(spec, grid, gradients)?.sample(seed, draw_index))
}

/// One draw on the flat torus via real Fourier modes.
pub fn sample_torus(
    spec: &RandomFieldSpec,
    grid: &Grid,
    seed: u64,
    draw_index: u64,
    gradients: bool,
) -> Result<FieldSample> {
    spec.spectrum.require(Geometry::FlatTorus2, "FlatTorus2")?;
    Ok(FieldSampler::new(spec, grid, gradients)?.sample(seed, draw_index))
}

/// Tag describing how a kernel is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum KernelForm {
    LegendreSeries,
    FourierSeries,
    GriddedSum,
}

pub fn kernel_form(spectrum: &SpectrumModel) -> KernelForm {
    match spectrum.geometry() {
        Geometry::Sphere2 | Geometry::RoundSphere4Paneitz => KernelForm::LegendreSeries,
        Geometry::FlatTorus2 => KernelForm::FourierSeries,
        Geometry::UserSupplied => KernelForm::GriddedSum,
    }
}

/// `r_h(d) = Σ_m (weight of h at level m) P_m(cos d)`; equals `Σ c_m P_m`
/// for per-eigenspace schemes.
pub fn covariance_h_sphere(spec: &RandomFieldSpec, d: f64) -> Result<f64> {
    if spec.which != FieldKind::H {
        return Err(invalid("which", "covariance_h_sphere needs the h field"));
    }
    sphere_kernel(spec, d)
}

/// `r_f(d) = Σ_m c_m / E_m² P_m(cos d)` for per-eigenspace schemes.
pub fn covariance_f_sphere(spec: &RandomFieldSpec, d: f64) -> Result<f64> {
    if spec.which != FieldKind::F {
        return Err(invalid("which", "covariance_f_sphere needs the f field"));
    }
    sphere_kernel(spec, d)
}

/// Isotropic kernel of any field kind with constant reference on S².
pub fn sphere_kernel(spec: &RandomFieldSpec, d: f64) -> Result<f64> {
    spec.spectrum.require(Geometry::Sphere2, "Sphere2")?;
    if !(0.0..=PI + 1e-12).contains(&d) {
        return Err(invalid("d", format!("{d} is not a spherical distance")));
    }
    let weights = joint_level_weights(spec)?;
    let p = harmonics::legendre_all(weights.len(), d.cos())?;
    Ok(combine(spec, &weights, |i| p[i + 1]))
}

/// Per-level joint moments `(f·f, f·h, h·h)` times `N/V`.
fn joint_level_weights(spec: &RandomFieldSpec) -> Result<Vec<[f64; 3]>> {
    if !spec.spectrum.is_homogeneous() {
        return Err(Error::GeometryMismatch {
            expected: "a homogeneous space",
            found: spec.spectrum.geometry(),
        });
    }
    Ok(spec
        .level_moments()
        .into_iter()
        .take(spec.levels())
        .map(|(_, _, m)| m)
        .collect())
}

fn combine(spec: &RandomFieldSpec, weights: &[[f64; 3]], basis_at: impl Fn(usize) -> f64) -> f64 {
    let r = spec.constant_reference().unwrap_or(f64::NAN);
    let (a, b) = spec.combination(r);
    weights
        .iter()
        .enumerate()
        .rev()
        .map(|(i, w)| (a * a * w[2] + 2.0 * a * b * w[1] + b * b * w[0]) * basis_at(i))
        .sum()
}

/// Stationary kernel `r(x - y)` on the flat torus.
pub fn torus_kernel(spec: &RandomFieldSpec, delta: [f64; 2]) -> Result<f64> {
    spec.spectrum.require(Geometry::FlatTorus2, "FlatTorus2")?;
    let weights = joint_level_weights(spec)?;
    let levels = spec.spectrum.levels();
    Ok(combine(spec, &weights, |i| torus_level_kernel(levels[i].eigenvalue, delta)))
}

/// `(V/N) Σ_k φ_k(x) φ_k(y)` over the level, which is the mean of
/// `cos(k·δ)` over its lattice points.
fn torus_level_kernel(eigenvalue: f64, delta: [f64; 2]) -> f64 {
    let ks = torus_lattice_points(eigenvalue as i64);
    ks.iter()
        .map(|k| (k[0] as f64 * delta[0] + k[1] as f64 * delta[1]).cos())
        .sum::<f64>()
        / ks.len() as f64
}

/// Covariance matrix of the spec's field over the grid by explicit
/// eigenfunction summation.
pub fn covariance_matrix(spec: &RandomFieldSpec, grid: &Grid) -> Result<DMatrix<f64>> {
    let sampler = FieldSampler::new(spec, grid, false)?;
    let (f_blocks, h_blocks) = (sampler.factors(0.0, 1.0), sampler.factors(1.0, 0.0));
    let bf = scale_columns(&sampler.basis.values, &f_blocks);
    let bh = scale_columns(&sampler.basis.values, &h_blocks);
    let n = grid.len();
    let rff = &bf * bf.transpose();
    let rfh = &bf * bh.transpose();
    let rhh = &bh * bh.transpose();
    Ok(DMatrix::from_fn(n, n, |i, j| {
        let (ai, bi) = spec.combination(spec.reference_at(i));
        let (aj, bj) = spec.combination(spec.reference_at(j));
        ai * aj * rhh[(i, j)] + ai * bj * rfh[(j, i)] + bi * aj * rfh[(i, j)] + bi * bj * rff[(i, j)]
    }))
}

fn scale_columns(m: &DMatrix<f64>, s: &[f64]) -> DMatrix<f64> {
    let mut out = m.clone();
    for (mut col, &f) in out.column_iter_mut().zip(s) {
        col *= f;
    }
    out
}

/// Joint `(f, h)` covariance over the grid from closed-form kernels where
/// they exist. Rows `0..N` are `f`, rows `N..2N` are `h`.
pub fn joint_covariance(spec: &RandomFieldSpec, grid: &Grid) -> Result<DMatrix<f64>> {
    let n = grid.len();
    let mut out = DMatrix::zeros(2 * n, 2 * n);
    let mut put = |i: usize, j: usize, m: [f64; 3]| {
        out[(i, j)] = m[0];
        out[(i, n + j)] = m[1];
        out[(n + i, j)] = m[1];
        out[(n + i, n + j)] = m[2];
    };
    match (&grid.points, spec.spectrum.geometry()) {
        (Points::Sphere(p), Geometry::Sphere2) => {
            let w = joint_level_weights(spec)?;
            for i in 0..n {
                for j in 0..n {
                    let t = (p[i][0] * p[j][0] + p[i][1] * p[j][1] + p[i][2] * p[j][2])
                        .clamp(-1.0, 1.0);
                    let leg = harmonics::legendre_all(w.len(), t)?;
                    put(i, j, sum_levels(&w, |l| leg[l + 1]));
                }
            }
        }
        (Points::Torus(p), Geometry::FlatTorus2) => {
            let w = joint_level_weights(spec)?;
            let levels = spec.spectrum.levels();
            for i in 0..n {
                for j in 0..n {
                    let d = [p[i][0] - p[j][0], p[i][1] - p[j][1]];
                    put(i, j, sum_levels(&w, |l| torus_level_kernel(levels[l].eigenvalue, d)));
                }
            }
        }
        _ => {
            let sampler = FieldSampler::new(spec, grid, false)?;
            let bf = scale_columns(&sampler.basis.values, &sampler.factors(0.0, 1.0));
            let bh = scale_columns(&sampler.basis.values, &sampler.factors(1.0, 0.0));
            let rfh = &bf * bh.transpose();
            let rff = &bf * bf.transpose();
            let rhh = &bh * bh.transpose();
            for i in 0..n {
                for j in 0..n {
                    out[(i, j)] = rff[(i, j)];
                    out[(i, n + j)] = rfh[(i, j)];
                    out[(n + i, j)] = rfh[(j, i)];
                    out[(n + i, n + j)] = rhh[(i, j)];
                }
            }
        }
    }
    Ok(out)
}

fn sum_levels(w: &[[f64; 3]], basis_at: impl Fn(usize) -> f64) -> [f64; 3] {
    let mut acc = [0.0; 3];
    for (l, m) in w.iter().enumerate().rev() {
        let b = basis_at(l);
        for k in 0..3 {
            acc[k] += m[k] * b;
        }
    }
    acc
}

/// Most attempts the dense sampler makes before giving up.
const JITTER_ATTEMPTS: usize = 3;

/// Exact draw of `(f, h)` on an arbitrary point set by Cholesky factorization
/// of the joint covariance, with at most three diagonal jitters of
/// `10⁻¹² · trace / (2N)` each.
pub fn sample_cholesky(
    spec: &RandomFieldSpec,
    grid: &Grid,
    seed: u64,
    draw_index: u64,
) -> Result<FieldSample> {
    let factor = CholeskyFactor::new(spec, grid)?;
    Ok(factor.sample(seed, draw_index))
}

/// Reusable lower-triangular factor of the joint covariance.
#[derive(Debug, Clone)]
pub struct CholeskyFactor {
    lower: DMatrix<f64>,
    pub jitter: Vec<f64>,
    points: usize,
}

impl CholeskyFactor {
    pub fn new(spec: &RandomFieldSpec, grid: &Grid) -> Result<Self> {
        let cov = joint_covariance(spec, grid)?;
        let dim = cov.nrows();
        let step = 1e-12 * cov.trace() / dim as f64;
        let mut jitter = Vec::new();
        let mut m = cov.clone();
        loop {
            if let Some(ch) = m.clone().cholesky() {
                return Ok(CholeskyFactor {
                    lower: ch.l(),
                    jitter,
                    points: grid.len(),
                });
            }
            if jitter.len() == JITTER_ATTEMPTS {
                let min = SymmetricEigen::new(cov)
                    .eigenvalues
                    .iter()
                    .copied()
                    .fold(f64::INFINITY, f64::min);
                return Err(Error::Indefinite { min_eigenvalue: min });
            }
            for i in 0..dim {
                m[(i, i)] += step;
            }
            jitter.push(step);
        }
    }

    pub fn sample(&self, seed: u64, draw_index: u64) -> FieldSample {
        let n = self.points;
        let mut z = vec![0.0; 2 * n];
        rng::cholesky_normals(seed, draw_index, &mut z);
        let x = &self.lower * DVector::from_column_slice(&z);
        FieldSample {
            seed,
            draw_index,
            gaussians: z,
            values_f: x.rows(0, n).iter().copied().collect(),
            values_h: x.rows(n, n).iter().copied().collect(),
            values_gradsq: None,
            jitter: self.jitter.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VarianceSummary {
    /// `σ² = sup_x r(x, x)` over the grid.
    pub sigma2_sup: f64,
    /// Grid index of the supremum.
    pub argmax: usize,
    pub is_constant: bool,
    pub diagonal: Vec<f64>,
}

/// Pointwise variances `(r_ff, r_fh, r_hh)` on the grid.
fn diagonal_moments(spec: &RandomFieldSpec, grid: &Grid) -> Result<Vec<[f64; 3]>> {
    if grid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    if spec.spectrum.is_homogeneous() {
        let w = sum_levels(&joint_level_weights(spec)?, |_| 1.0);
        let neg = spec.negative_levels();
        if neg > 0 {
            return Err(invalid("negative levels", "built-in spectra have none"));
        }
        return Ok(vec![w; grid.len()]);
    }
    let sampler = FieldSampler::new(spec, grid, false)?;
    let f = sampler.factors(0.0, 1.0);
    let h = sampler.factors(1.0, 0.0);
    Ok((0..grid.len())
        .map(|i| {
            let mut acc = [0.0; 3];
            for j in (0..sampler.modes()).rev() {
                let phi2 = sampler.basis.values[(i, j)].powi(2);
                acc[0] += f[j] * f[j] * phi2;
                acc[1] += f[j] * h[j] * phi2;
                acc[2] += h[j] * h[j] * phi2;
            }
            acc
        })
        .collect())
}

/// Supremum over the grid of the variance of the spec's field.
pub fn variance_summary(spec: &RandomFieldSpec, grid: &Grid) -> Result<VarianceSummary> {
    if let Some(ReferenceCurvature::Gridded(v)) = &spec.reference {
        if v.len() != grid.len() {
            return Err(invalid("reference_curvature", "length differs from the grid"));
        }
    }
    let moments = diagonal_moments(spec, grid)?;
    let diagonal: Vec<f64> = moments
        .iter()
        .enumerate()
        .map(|(i, m)| {
            let (a, b) = spec.combination(spec.reference_at(i));
            match spec.which {
                FieldKind::F => m[0],
                FieldKind::H => m[2],
                _ => a * a * m[2] + 2.0 * a * b * m[1] + b * b * m[0],
            }
        })
        .collect();
    Ok(summarize(diagonal))
}

fn summarize(diagonal: Vec<f64>) -> VarianceSummary {
    let (mut argmax, mut max, mut min) = (0, f64::NEG_INFINITY, f64::INFINITY);
    for (i, &d) in diagonal.iter().enumerate() {
        if d > max {
            max = d;
            argmax = i;
        }
        min = min.min(d);
    }
    VarianceSummary {
        sigma2_sup: max,
        argmax,
        is_constant: max - min <= 1e-10 * max.abs(),
        diagonal,
    }
}

/// Constant variance of the spec's field on a homogeneous space with a
/// constant reference; works for the Paneitz spectrum where no grid exists.
pub fn isotropic_variance(spec: &RandomFieldSpec) -> Result<f64> {
    if let (FieldKind::V | FieldKind::W, None) = (spec.which, spec.constant_reference()) {
        return Err(invalid(
            "reference_curvature",
            "isotropic variance needs a constant reference",
        ));
    }
    let w = sum_levels(&joint_level_weights(spec)?, |_| 1.0);
    Ok(combine(spec, &[w], |_| 1.0))
}

/// `E|∇f(x)|² = Σ (f weight) λ N / V` on a homogeneous space; with
/// per-eigenspace weights on S² this is `Σ c_m / E_m`.
pub fn gradient_variance(spec: &RandomFieldSpec) -> Result<f64> {
    if spec.spectrum.operator() != Operator::Laplacian {
        return Err(invalid("operator", "gradient variance uses Laplace eigenvalues"));
    }
    let w = joint_level_weights(spec)?;
    let levels = spec.spectrum.levels();
    Ok(w.iter()
        .zip(levels)
        .rev()
        .map(|(m, l)| m[0] * l.eigenvalue)
        .sum())
}

pub fn gradient_variance_sphere(spec: &RandomFieldSpec) -> Result<f64> {
    spec.spectrum.require(Geometry::Sphere2, "Sphere2")?;
    gradient_variance(spec)
}

/// Diagonal of the heat kernel without its constant term.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HeatVariance {
    pub t: f64,
    /// One value for homogeneous spaces, otherwise one per tabulated point.
    pub diagonal: Vec<f64>,
    pub sup: f64,
    pub levels_used: usize,
}

/// `Σ_j e^{-λ_j T} φ_j(x)²`. Built-in spectra are summed until the terms
/// drop below `10⁻¹⁷` of the running total.
pub fn heat_variance(spectrum: &SpectrumModel, t: f64) -> Result<HeatVariance> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(invalid("T", format!("must be positive, got {t}")));
    }
    if spectrum.operator() != Operator::Laplacian {
        return Err(invalid("operator", "the heat kernel is defined for -Δ"));
    }
    let v = spectrum.volume();
    match spectrum.extended_levels(64) {
        Some(_) => {
            let mut count = 64;
            loop {
                let levels = spectrum.extended_levels(count).unwrap();
                let last = levels.last().unwrap();
                let terms: Vec<f64> = levels
                    .iter()
                    .map(|l| l.multiplicity as f64 * (-l.eigenvalue * t).exp() / v)
                    .collect();
                let total: f64 = terms.iter().rev().sum();
                let tail_ok = last.multiplicity as f64 * (-last.eigenvalue * t).exp() / v
                    <= 1e-17 * total;
                if tail_ok || count >= 1 << 22 {
                    return Ok(HeatVariance {
                        t,
                        diagonal: vec![total],
                        sup: total,
                        levels_used: count,
                    });
                }
                count *= 2;
            }
        }
        None => {
            let table = spectrum.table().expect("user spectra carry a table");
            let mut diag = vec![0.0; table.points];
            for (level, fns) in spectrum.levels().iter().zip(&table.positive) {
                let e = (-level.eigenvalue * t).exp();
                for phi in fns {
                    for (d, p) in diag.iter_mut().zip(phi) {
                        *d += e * p * p;
                    }
                }
            }
            let sup = diag.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            Ok(HeatVariance {
                t,
                diagonal: diag,
                sup,
                levels_used: spectrum.levels().len(),
            })
        }
    }
}

//! Monte Carlo excursion estimates, excursion-set Euler characteristics, and
//! the closed-form sphere constants they are compared with.
//!
//! Two norms are kept apart: the sign-change probability uses the one-sided
//! supremum `‖v‖_M = sup v`, the deviation probability uses `max |R₁ - R₀|`.
//!
//! Sign-change event. With `R₁ = e^{-af}(R₀ - a h)` and `e^{-af} > 0`, `R₁`
//! has the sign of `R₀(1 - a v)`. If `R₀ > 0` everywhere, `R₁` turns negative
//! somewhere iff `sup v > 1/a`. If `R₀ < 0` everywhere, `R₁` turns positive
//! somewhere iff `1 - a v < 0` somewhere, which is the same event. Either
//! way the event is `{sup v > 1/a}`.

use std::f64::consts::PI;

use nalgebra::{Matrix5, SymmetricEigen};
use rand::Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use serde::Serialize;

use crate::curvature::{q_deviation, scalar_deviation, DeviationMode};
use crate::error::{invalid, Error, Result};
use crate::fields::{FieldKind, FieldSampler, RandomFieldSpec, ReferenceCurvature};
use crate::grid::{Grid, Mesh};
use crate::montecarlo::{map_batches, Moments, Proportion};
use crate::special::{gaussian_density, gaussian_tail};
use crate::spectral::{CoefficientRule, Geometry, Operator};

/// Sample count, base seed and worker count for a Monte Carlo run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McOptions {
    pub n_samples: u64,
    pub seed: u64,
    pub workers: usize,
}

impl McOptions {
    pub fn new(n_samples: u64, seed: u64) -> Self {
        McOptions {
            n_samples,
            seed,
            workers: 1,
        }
    }

    pub fn workers(mut self, workers: usize) -> Self {
        self.workers = workers;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExcursionReport {
    pub estimate: f64,
    pub standard_error: f64,
    pub hits: u64,
    pub n_samples: u64,
    /// `1/a` for sign-change runs, `u` for deviation runs.
    pub threshold: f64,
    pub amplitude: f64,
    pub grid_points: usize,
    pub refined_points: Option<usize>,
    pub refined_estimate: Option<f64>,
    /// Refined minus base estimate.
    pub refinement_delta: Option<f64>,
    pub seed: u64,
    /// Draws where the second computation of the event disagreed.
    pub second_route_disagreements: u64,
    pub warnings: Vec<String>,
}

impl ExcursionReport {
    fn new(p: Proportion, threshold: f64, amplitude: f64, grid_points: usize, seed: u64) -> Self {
        ExcursionReport {
            estimate: p.estimate,
            standard_error: p.standard_error,
            hits: p.hits,
            n_samples: p.n,
            threshold,
            amplitude,
            grid_points,
            refined_points: None,
            refined_estimate: None,
            refinement_delta: None,
            seed,
            second_route_disagreements: 0,
            warnings: Vec::new(),
        }
    }

    fn refine(&mut self, p: Proportion, points: usize) {
        self.refined_points = Some(points);
        self.refined_estimate = Some(p.estimate);
        self.refinement_delta = Some(p.estimate - self.estimate);
    }
}

fn check_amplitudes(amplitudes: &[f64]) -> Result<()> {
    if amplitudes.is_empty() {
        return Err(invalid("amplitudes", "at least one amplitude is required"));
    }
    if let Some(a) = amplitudes.iter().find(|a| !(**a > 0.0) || !a.is_finite()) {
        return Err(invalid("amplitudes", format!("amplitude {a} is not positive")));
    }
    Ok(())
}

/// Supremum over the grid of the spec's field, one value per draw.
pub fn sup_samples(spec: &RandomFieldSpec, grid: &Grid, opts: &McOptions) -> Result<Vec<f64>> {
    let sampler = FieldSampler::new(spec, grid, false)?;
    let blocks = map_batches(opts.n_samples, opts.workers, |first, count| {
        let z = sampler.normals_batch(opts.seed, first, count);
        let v = sampler.target(&z);
        v.column_iter()
            .map(|c| c.iter().copied().fold(f64::NEG_INFINITY, f64::max))
            .collect::<Vec<f64>>()
    })?;
    Ok(blocks.into_iter().flatten().collect())
}

/// Monte Carlo mean of `sup` over the grid with its standard error.
pub fn expected_sup(spec: &RandomFieldSpec, grid: &Grid, opts: &McOptions) -> Result<(f64, f64)> {
    let sups = sup_samples(spec, grid, opts)?;
    let mut m = Moments::default();
    sups.iter().for_each(|&s| m.push(s));
    Ok((m.mean, m.standard_error()))
}

/// `P₂(a) = Prob{sup v > 1/a}` for every amplitude on shared draws.
pub fn estimate_p2(
    spec: &RandomFieldSpec,
    amplitudes: &[f64],
    grid: &Grid,
    refinement: Option<&Grid>,
    opts: &McOptions,
) -> Result<Vec<ExcursionReport>> {
    check_amplitudes(amplitudes)?;
    if spec.which != FieldKind::V {
        return Err(invalid("which", "sign-change probabilities use the v field"));
    }
    let reference = spec.reference.as_ref().ok_or(Error::MissingField("reference_curvature"))?;
    if !reference.has_constant_sign() {
        return Err(invalid(
            "reference_curvature",
            "the reference curvature must have constant sign",
        ));
    }
    let (hits, disagree) = p2_counts(spec, amplitudes, grid, opts)?;
    let mut reports: Vec<ExcursionReport> = amplitudes
        .iter()
        .enumerate()
        .map(|(k, &a)| {
            let mut r = ExcursionReport::new(
                Proportion::new(hits[k], opts.n_samples),
                1.0 / a,
                a,
                grid.len(),
                opts.seed,
            );
            r.second_route_disagreements = disagree[k];
            r
        })
        .collect();
    if let Some(fine) = refinement {
        let (fine_hits, _) = p2_counts(spec, amplitudes, fine, opts)?;
        for (r, h) in reports.iter_mut().zip(fine_hits) {
            r.refine(Proportion::new(h, opts.n_samples), fine.len());
        }
    }
    Ok(reports)
}

fn p2_counts(
    spec: &RandomFieldSpec,
    amplitudes: &[f64],
    grid: &Grid,
    opts: &McOptions,
) -> Result<(Vec<u64>, Vec<u64>)> {
    let sampler = FieldSampler::new(spec, grid, false)?;
    let k = amplitudes.len();
    let blocks = map_batches(opts.n_samples, opts.workers, |first, count| {
        let z = sampler.normals_batch(opts.seed, first, count);
        let v = sampler.target(&z);
        let mut hits = vec![0u64; k];
        let mut disagree = vec![0u64; k];
        for col in v.column_iter() {
            let sup = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            for (j, &a) in amplitudes.iter().enumerate() {
                let by_sup = sup > 1.0 / a;
                let by_sign = col.iter().any(|&x| 1.0 - a * x < 0.0);
                hits[j] += by_sup as u64;
                disagree[j] += (by_sup != by_sign) as u64;
            }
        }
        (hits, disagree)
    })?;
    let mut hits = vec![0u64; k];
    let mut disagree = vec![0u64; k];
    for (h, d) in blocks {
        for j in 0..k {
            hits[j] += h[j];
            disagree[j] += d[j];
        }
    }
    Ok((hits, disagree))
}

/// `Prob{max |R₁ - R₀| > u}` (or the Q analogue) for each `(a, u)` pair on
/// shared draws, using the exact deviation.
pub fn estimate_linf(
    spec: &RandomFieldSpec,
    pairs: &[(f64, f64)],
    grid: &Grid,
    refinement: Option<&Grid>,
    opts: &McOptions,
    mode: DeviationMode,
) -> Result<Vec<ExcursionReport>> {
    if pairs.is_empty() {
        return Err(invalid("pairs", "at least one (a, u) pair is required"));
    }
    check_amplitudes(&pairs.iter().map(|p| p.0).collect::<Vec<_>>())?;
    if let Some(&(_, u)) = pairs.iter().find(|p| !(p.1 > 0.0)) {
        return Err(invalid("u", format!("threshold {u} is not positive")));
    }
    match (mode, spec.spectrum.operator()) {
        (DeviationMode::Scalar2D, Operator::Laplacian) if spec.spectrum.dimension() == 2 => {}
        (DeviationMode::Q, Operator::Gjms) if spec.spectrum.dimension().is_multiple_of(2) => {}
        _ => {
            return Err(Error::GeometryMismatch {
                expected: "a spectrum matching the deviation mode",
                found: spec.spectrum.geometry(),
            })
        }
    }
    spec.reference.as_ref().ok_or(Error::MissingField("reference_curvature"))?;
    let hits = linf_counts(spec, pairs, grid, opts, mode)?;
    let mut reports: Vec<ExcursionReport> = pairs
        .iter()
        .zip(&hits)
        .map(|(&(a, u), &h)| {
            let mut r =
                ExcursionReport::new(Proportion::new(h, opts.n_samples), u, a, grid.len(), opts.seed);
            if u / a < 3.0 {
                r.warnings
                    .push(format!("u/a = {:.3} < 3: the log-asymptote is not meaningful here", u / a));
            }
            r
        })
        .collect();
    if let Some(fine) = refinement {
        let fine_hits = linf_counts(spec, pairs, fine, opts, mode)?;
        for (r, h) in reports.iter_mut().zip(fine_hits) {
            r.refine(Proportion::new(h, opts.n_samples), fine.len());
        }
    }
    Ok(reports)
}

fn linf_counts(
    spec: &RandomFieldSpec,
    pairs: &[(f64, f64)],
    grid: &Grid,
    opts: &McOptions,
    mode: DeviationMode,
) -> Result<Vec<u64>> {
    let sampler = FieldSampler::new(spec, grid, false)?;
    let reference = spec.reference.as_ref().expect("checked by caller");
    let r: Vec<f64> = (0..grid.len()).map(|i| reference.at(i)).collect();
    let n = spec.spectrum.dimension() as f64;
    let blocks = map_batches(opts.n_samples, opts.workers, |first, count| {
        let z = sampler.normals_batch(opts.seed, first, count);
        let (f, h) = sampler.f_and_h(&z);
        let mut hits = vec![0u64; pairs.len()];
        for c in 0..count {
            let (fc, hc) = (f.column(c), h.column(c));
            for (j, &(a, u)) in pairs.iter().enumerate() {
                let exceeded = (0..r.len()).any(|i| {
                    let d = match mode {
                        DeviationMode::Scalar2D => scalar_deviation(r[i], fc[i], hc[i], a),
                        DeviationMode::Q => q_deviation(r[i], fc[i], hc[i], a, n),
                    };
                    d.abs() > u
                });
                hits[j] += exceeded as u64;
            }
        }
        hits
    })?;
    let mut total = vec![0u64; pairs.len()];
    for b in blocks {
        for (t, h) in total.iter_mut().zip(b) {
            *t += h;
        }
    }
    Ok(total)
}

/// Stream for the tilting choices of [`estimate_linf_tilted`].
const TILT_STREAM: u64 = 0x5449_4c54_0000_0000;

/// Standard normal conditioned on exceeding `g`.
fn normal_tail<R: Rng>(rng: &mut R, g: f64) -> f64 {
    if g < 1.0 {
        loop {
            let x: f64 = rng.sample(StandardNormal);
            if x > g {
                return x;
            }
        }
    }
    let rate = (g + (g * g + 4.0).sqrt()) / 2.0;
    let exp = Exp::new(rate).expect("positive rate");
    loop {
        let x = g + exp.sample(rng);
        let accept: f64 = rng.random();
        if accept < (-(x - rate).powi(2) / 2.0).exp() {
            return x;
        }
    }
}

/// Same probabilities as [`estimate_linf`], by importance sampling.
///
/// Each draw picks a grid point `τ` and a sign uniformly and forces
/// `±h(τ) > γ` with `γ = level_fraction · u/a`; the rest of the field is drawn
/// from its conditional law. The weight is the inverse likelihood ratio
/// `2G / Σ_{τ',±} 1{±h(τ') > γ}/Ψ(γ/σ(τ'))`, so the estimator is unbiased for
/// the part of the event where `max|h| > γ`. With `level_fraction < 1` the
/// remainder needs `e^{-af} > 1/level_fraction` and is negligible.
pub fn estimate_linf_tilted(
    spec: &RandomFieldSpec,
    pairs: &[(f64, f64)],
    grid: &Grid,
    opts: &McOptions,
    mode: DeviationMode,
    level_fraction: f64,
) -> Result<Vec<ExcursionReport>> {
    if !(level_fraction > 0.0 && level_fraction <= 1.0) {
        return Err(invalid("level_fraction", "must lie in (0, 1]"));
    }
    let mut reports = estimate_linf(
        spec,
        pairs,
        grid,
        None,
        &McOptions {
            n_samples: 0,
            ..*opts
        },
        mode,
    )?;
    let sampler = FieldSampler::new(spec, grid, false)?;
    let reference = spec.reference.as_ref().expect("checked above");
    let r: Vec<f64> = (0..grid.len()).map(|i| reference.at(i)).collect();
    let n = spec.spectrum.dimension() as f64;
    let fh = sampler.factors(1.0, 0.0);
    let mut bh = sampler.basis().values.clone();
    for (mut col, &s) in bh.column_iter_mut().zip(&fh) {
        col *= s;
    }
    let norms: Vec<f64> = bh.row_iter().map(|row| row.norm_squared()).collect();
    if norms.iter().any(|&v| !(v > 0.0)) {
        return Err(invalid("grid", "h has zero variance at some grid point"));
    }
    let g = grid.len();
    for (report, &(a, u)) in reports.iter_mut().zip(pairs) {
        let gamma = level_fraction * u / a;
        let tails: Vec<f64> = norms.iter().map(|v| gaussian_tail(gamma / v.sqrt())).collect();
        let blocks = map_batches(opts.n_samples, opts.workers, |first, count| {
            let mut z = sampler.normals_batch(opts.seed, first, count);
            for (c, mut col) in z.column_iter_mut().enumerate() {
                let mut rng = crate::rng::aux_rng(opts.seed, first + c as u64, TILT_STREAM);
                let tau = rng.random_range(0..g);
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                let sd = norms[tau].sqrt();
                let target = sign * sd * normal_tail(&mut rng, gamma / sd);
                let row = bh.row(tau);
                let shift = (target - row.dot(&col.transpose())) / norms[tau];
                col += row.transpose() * shift;
            }
            let (f, h) = sampler.f_and_h(&z);
            let mut m = Moments::default();
            let mut hits = 0u64;
            for c in 0..count {
                let (fc, hc) = (f.column(c), h.column(c));
                let mut inverse = 0.0;
                let mut exceeded = false;
                for i in 0..g {
                    if hc[i].abs() > gamma {
                        inverse += 1.0 / tails[i];
                    }
                    let d = match mode {
                        DeviationMode::Scalar2D => scalar_deviation(r[i], fc[i], hc[i], a),
                        DeviationMode::Q => q_deviation(r[i], fc[i], hc[i], a, n),
                    };
                    exceeded |= d.abs() > u;
                }
                let w = if exceeded && inverse > 0.0 {
                    2.0 * g as f64 / inverse
                } else {
                    0.0
                };
                hits += exceeded as u64;
                m.push(w);
            }
            (m, hits)
        })?;
        let mut m = Moments::default();
        let mut hits = 0;
        for (b, h) in &blocks {
            m.merge(b);
            hits += h;
        }
        report.estimate = m.mean;
        report.standard_error = m.standard_error();
        report.hits = hits;
        report.n_samples = opts.n_samples;
        report.seed = opts.seed;
        report
            .warnings
            .push(format!("importance sampling at level {gamma:.4} for h"));
    }
    Ok(reports)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct EulerCount {
    pub chi: i64,
    /// The threshold coincided with a vertex value and was raised by 10⁻¹².
    pub perturbed: bool,
}

/// Threshold shift applied when `u` hits a vertex value exactly.
pub const THRESHOLD_NUDGE: f64 = 1e-12;

/// Euler characteristic of the excursion set `{x : value(x) ≥ u}` on the
/// triangulation, counting simplices whose vertices all lie in the set.
pub fn empirical_euler(mesh: &Mesh, values: &[f64], u: f64) -> Result<EulerCount> {
    if values.len() != mesh.vertices.len() {
        return Err(invalid(
            "values",
            format!("{} values for {} vertices", values.len(), mesh.vertices.len()),
        ));
    }
    let mins = SimplexMins::new(mesh, values);
    Ok(mins.euler(values, u))
}

struct SimplexMins {
    edges: Vec<f64>,
    faces: Vec<f64>,
}

impl SimplexMins {
    fn new(mesh: &Mesh, values: &[f64]) -> Self {
        SimplexMins {
            edges: mesh
                .edges
                .iter()
                .map(|e| values[e[0] as usize].min(values[e[1] as usize]))
                .collect(),
            faces: mesh
                .faces
                .iter()
                .map(|f| {
                    values[f[0] as usize]
                        .min(values[f[1] as usize])
                        .min(values[f[2] as usize])
                })
                .collect(),
        }
    }

    fn euler(&self, values: &[f64], u: f64) -> EulerCount {
        let perturbed = values.contains(&u);
        let u = if perturbed { u + THRESHOLD_NUDGE } else { u };
        let count = |xs: &[f64]| xs.iter().filter(|&&x| x >= u).count() as i64;
        EulerCount {
            chi: count(values) - count(&self.edges) + count(&self.faces),
            perturbed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EulerCurve {
    pub thresholds: Vec<f64>,
    pub mean: Vec<f64>,
    pub standard_error: Vec<f64>,
    pub predicted: Vec<f64>,
    /// `(L₀, L₁, L₂)` in the Adler-Taylor metric.
    pub lipschitz_killing: [f64; 3],
    pub n_samples: u64,
    pub seed: u64,
    pub vertices: usize,
    /// Sample-threshold pairs that needed the collision nudge.
    pub perturbed: u64,
}

/// Mean Euler characteristic of the excursion sets of `h` over the mesh
/// vertices, next to the expected-Euler-characteristic prediction.
pub fn euler_curve(
    spec: &RandomFieldSpec,
    mesh: &Mesh,
    thresholds: &[f64],
    opts: &McOptions,
) -> Result<EulerCurve> {
    if thresholds.is_empty() {
        return Err(invalid("thresholds", "at least one threshold is required"));
    }
    let predicted = thresholds
        .iter()
        .map(|&u| predicted_euler(spec, u))
        .collect::<Result<Vec<f64>>>()?;
    let lk = lipschitz_killing(spec)?;
    let grid = mesh.grid()?;
    let sampler = FieldSampler::new(spec, &grid, false)?;
    let k = thresholds.len();
    let blocks = map_batches(opts.n_samples, opts.workers, |first, count| {
        let z = sampler.normals_batch(opts.seed, first, count);
        let h = sampler.target(&z);
        let mut moments = vec![Moments::default(); k];
        let mut perturbed = 0u64;
        for col in h.column_iter() {
            let values: Vec<f64> = col.iter().copied().collect();
            let mins = SimplexMins::new(mesh, &values);
            for (j, &u) in thresholds.iter().enumerate() {
                let e = mins.euler(&values, u);
                moments[j].push(e.chi as f64);
                perturbed += e.perturbed as u64;
            }
        }
        (moments, perturbed)
    })?;
    let mut moments = vec![Moments::default(); k];
    let mut perturbed = 0;
    for (m, p) in blocks {
        for (acc, b) in moments.iter_mut().zip(&m) {
            acc.merge(b);
        }
        perturbed += p;
    }
    Ok(EulerCurve {
        thresholds: thresholds.to_vec(),
        mean: moments.iter().map(|m| m.mean).collect(),
        standard_error: moments.iter().map(|m| m.standard_error()).collect(),
        predicted,
        lipschitz_killing: lk,
        n_samples: opts.n_samples,
        seed: opts.seed,
        vertices: mesh.vertices.len(),
        perturbed,
    })
}

/// Variance of `h` carried by each sphere level; equals `c_m` for
/// per-eigenspace schemes.
pub fn sphere_level_weights(spec: &RandomFieldSpec) -> Result<Vec<f64>> {
    spec.spectrum.require(Geometry::Sphere2, "Sphere2")?;
    let (f_std, _) = spec.level_f_std();
    let v = spec.spectrum.volume();
    Ok(spec
        .spectrum
        .levels()
        .iter()
        .zip(f_std)
        .map(|(l, s)| l.multiplicity as f64 / v * (l.eigenvalue * s).powi(2))
        .collect())
}

fn weighted_energy(spec: &RandomFieldSpec) -> Result<f64> {
    let w = sphere_level_weights(spec)?;
    Ok(w.iter()
        .zip(spec.spectrum.levels())
        .rev()
        .map(|(c, l)| c * l.eigenvalue)
        .sum())
}

/// `C = Σ c_m E_m / 2`, the scalar of the Adler-Taylor metric `C·g₀`.
pub fn at_metric_constant(spec: &RandomFieldSpec) -> Result<f64> {
    Ok(weighted_energy(spec)? / 2.0)
}

/// `(L₀, L₁, L₂) = (2, 0, 4πC)`: the Euler characteristic, half the boundary
/// length, and the area of S² in the metric `C·g₀`.
pub fn lipschitz_killing(spec: &RandomFieldSpec) -> Result<[f64; 3]> {
    Ok([2.0, 0.0, 4.0 * PI * at_metric_constant(spec)?])
}

/// Relative tolerance on `Σ c_m = 1` for formulas that assume unit variance.
const UNIT_VARIANCE_TOL: f64 = 1e-6;

fn unit_variance(spec: &RandomFieldSpec) -> Result<()> {
    let total: f64 = sphere_level_weights(spec)?.iter().sum();
    if (total - 1.0).abs() > UNIT_VARIANCE_TOL {
        return Err(invalid(
            "coefficients",
            format!("the field variance is {total}, not 1"),
        ));
    }
    Ok(())
}

/// `E χ = L₀ Ψ(u) + L₂ (2π)^{-3/2} u e^{-u²/2}` for a unit-variance h on S².
pub fn predicted_euler(spec: &RandomFieldSpec, u: f64) -> Result<f64> {
    unit_variance(spec)?;
    let [l0, _, l2] = lipschitz_killing(spec)?;
    Ok(l0 * gaussian_tail(u) + l2 * rho2(u))
}

/// `ρ₂(u) = u e^{-u²/2} / (2π)^{3/2}`
pub fn rho2(u: f64) -> f64 {
    u * gaussian_density(u) / (2.0 * PI)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct P2Prediction {
    pub value: f64,
    pub c1: f64,
    pub c2: f64,
    pub warnings: Vec<String>,
}

/// `C₁ Ψ(1/a) + (C₂/a) e^{-1/(2a²)}` with `C₁ = 2`, `C₂ = Σ c_m E_m / √(2π)`.
pub fn sphere_p2_prediction(spec: &RandomFieldSpec, a: f64) -> Result<P2Prediction> {
    if !(a > 0.0) {
        return Err(invalid("a", "amplitude must be positive"));
    }
    let mut warnings = Vec::new();
    if unit_variance(spec).is_err() {
        warnings.push("field variance differs from 1".to_string());
    }
    match spec.coefficients.rule {
        CoefficientRule::SphereNormalizedPowerLaw { s, .. } if s <= 7.0 => {
            warnings.push(format!("decay exponent s = {s} does not exceed 7"))
        }
        CoefficientRule::SphereNormalizedPowerLaw { .. } | CoefficientRule::HeatKernel { .. } => {}
        _ => warnings.push("decay exponent s > 7 cannot be confirmed for this rule".to_string()),
    }
    if !degeneracy_check(spec)? {
        warnings.push("no odd level carries weight".to_string());
    }
    let c1 = 2.0;
    let c2 = weighted_energy(spec)? / (2.0 * PI).sqrt();
    let u = 1.0 / a;
    Ok(P2Prediction {
        value: c1 * gaussian_tail(u) + c2 * u * (-u * u / 2.0).exp(),
        c1,
        c2,
        warnings,
    })
}

/// Covariance of `(∂₁h, ∂₂h, ∂₁₁h, ∂₂₂h, ∂₁₂h)` for one unit-weight level
/// with Laplace eigenvalue `e`.
pub fn level_matrix(e: f64) -> Matrix5<f64> {
    let k = e / 8.0;
    let mut m = Matrix5::zeros();
    m[(0, 0)] = e / 2.0;
    m[(1, 1)] = e / 2.0;
    m[(2, 2)] = k * (3.0 * e - 2.0);
    m[(3, 3)] = k * (3.0 * e - 2.0);
    m[(2, 3)] = k * (e + 2.0);
    m[(3, 2)] = k * (e + 2.0);
    m[(4, 4)] = k * (e - 2.0);
    m
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Attainability {
    pub matrix: Vec<[f64; 5]>,
    pub min_eigenvalue: f64,
    pub positive_definite: bool,
}

/// `C_H = Σ c_m C_m` and whether it is positive definite (smallest
/// eigenvalue above `10⁻¹²·trace`).
pub fn attainability_matrix(spec: &RandomFieldSpec) -> Result<Attainability> {
    let w = sphere_level_weights(spec)?;
    let mut total = Matrix5::zeros();
    for (c, l) in w.iter().zip(spec.spectrum.levels()) {
        total += level_matrix(l.eigenvalue) * *c;
    }
    let min = SymmetricEigen::new(total)
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    Ok(Attainability {
        matrix: (0..5)
            .map(|i| [total[(i, 0)], total[(i, 1)], total[(i, 2)], total[(i, 3)], total[(i, 4)]])
            .collect(),
        min_eigenvalue: min,
        positive_definite: min > 1e-12 * total.trace(),
    })
}

/// True iff some odd level carries positive weight, which rules out
/// `r(x, y) = 1` at antipodal pairs.
pub fn degeneracy_check(spec: &RandomFieldSpec) -> Result<bool> {
    let w = sphere_level_weights(spec)?;
    Ok(w.iter().step_by(2).any(|&c| c > 0.0))
}

/// Reference curvature a sign-change run needs: `R₀ = 1` on the sphere
/// reproduces `v = h`.
pub fn unit_reference() -> ReferenceCurvature {
    ReferenceCurvature::Constant(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::icosphere;
    use crate::harmonics;
    use crate::spectral::{make_explicit, make_sphere_normalized, Indexing, SpectrumModel, Truncation};

    fn explicit(values: Vec<f64>) -> RandomFieldSpec {
        let s = SpectrumModel::sphere2(values.len());
        let c = make_explicit(values, vec![], Indexing::PerEigenspace, &s).unwrap();
        RandomFieldSpec::new(s, c, FieldKind::H, Some(unit_reference())).unwrap()
    }

    fn default_spec() -> RandomFieldSpec {
        let c = make_sphere_normalized(8.0, Truncation::new(12)).unwrap();
        RandomFieldSpec::new(SpectrumModel::sphere2(12), c, FieldKind::H, Some(unit_reference()))
            .unwrap()
    }

    #[test]
    fn euler_endpoints() {
        let mesh = icosphere(2).unwrap();
        let values: Vec<f64> = mesh.vertices.iter().map(|p| p[2]).collect();
        assert_eq!(empirical_euler(&mesh, &values, -2.0).unwrap().chi, 2);
        assert_eq!(empirical_euler(&mesh, &values, 2.0).unwrap().chi, 0);
        assert_eq!(empirical_euler(&mesh, &values, 0.5).unwrap().chi, 1);
        assert!(empirical_euler(&mesh, &values[1..], 0.5).is_err());
    }

    #[test]
    fn euler_nudges_colliding_threshold() {
        let mesh = icosphere(1).unwrap();
        let values: Vec<f64> = mesh.vertices.iter().map(|p| p[2]).collect();
        let e = empirical_euler(&mesh, &values, values[0]).unwrap();
        assert!(e.perturbed);
    }

    #[test]
    fn single_mode_lk_and_prediction() {
        let spec = explicit(vec![1.0]);
        let [l0, l1, l2] = lipschitz_killing(&spec).unwrap();
        assert_eq!((l0, l1), (2.0, 0.0));
        assert!((l2 - 4.0 * PI).abs() < 1e-14);
        // h = ⟨ξ, x⟩ with ξ ~ N(0, I₃): the excursion set is a cap iff |ξ| > u.
        for u in [0.5, 1.0, 2.0, 3.0] {
            let chi3_tail = 2.0 * gaussian_tail(u) + 2.0 * u * gaussian_density(u);
            assert!((predicted_euler(&spec, u).unwrap() - chi3_tail).abs() < 1e-14);
        }
        assert!((predicted_euler(&spec, 0.0).unwrap() - 1.0).abs() < 1e-15);
        assert!((predicted_euler(&spec, -40.0).unwrap() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn prediction_requires_unit_variance() {
        let spec = explicit(vec![0.5]);
        assert!(predicted_euler(&spec, 1.0).is_err());
    }

    #[test]
    fn p2_prediction_matches_euler_identity() {
        let spec = default_spec();
        for a in [0.2, 1.0 / 3.0, 0.5] {
            let p = sphere_p2_prediction(&spec, a).unwrap();
            let e = predicted_euler(&spec, 1.0 / a).unwrap();
            assert!((p.value - e).abs() <= 1e-12 * e.abs());
            assert!(p.warnings.is_empty(), "{:?}", p.warnings);
        }
        let one = explicit(vec![1.0]);
        let p = sphere_p2_prediction(&one, 0.5).unwrap();
        assert!((p.c2 - 2.0 / (2.0 * PI).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn at_constant_scaling() {
        assert_eq!(at_metric_constant(&explicit(vec![1.0])).unwrap(), 1.0);
        let a = at_metric_constant(&explicit(vec![0.3, 0.2, 0.1])).unwrap();
        let b = at_metric_constant(&explicit(vec![0.6, 0.4, 0.2])).unwrap();
        assert!((b - 2.0 * a).abs() < 1e-15);
    }

    #[test]
    fn attainability_examples() {
        let omega1 = level_matrix(2.0);
        assert_eq!(omega1.fixed_view::<3, 3>(2, 2), nalgebra::Matrix3::new(1.0, 1.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0));
        assert!(!attainability_matrix(&explicit(vec![1.0])).unwrap().positive_definite);
        let omega2 = level_matrix(6.0);
        assert_eq!(omega2.fixed_view::<3, 3>(2, 2), nalgebra::Matrix3::new(12.0, 6.0, 0.0, 6.0, 12.0, 0.0, 0.0, 0.0, 3.0));
        assert!(attainability_matrix(&explicit(vec![0.0, 1.0])).unwrap().positive_definite);
        assert!(attainability_matrix(&default_spec()).unwrap().positive_definite);
    }

    #[test]
    fn degeneracy_examples() {
        assert!(degeneracy_check(&explicit(vec![1.0, 0.0, 0.0])).unwrap());
        let even = explicit(vec![0.0, 0.5, 0.0, 0.5]);
        assert!(!degeneracy_check(&even).unwrap());
        let antipodal = crate::fields::covariance_h_sphere(&even, PI).unwrap();
        assert!((antipodal - 1.0).abs() < 1e-15);
        assert!(degeneracy_check(&default_spec()).unwrap());
    }

    #[test]
    fn p2_single_point_is_gaussian_tail() {
        let spec = default_spec().with_kind(FieldKind::V).unwrap();
        let grid = Grid::sphere(vec![harmonics::unit_vector(1.0, 2.0)]).unwrap();
        let opts = McOptions::new(20_000, 3);
        let r = estimate_p2(&spec, &[1.0], &grid, None, &opts).unwrap();
        let expected = gaussian_tail(1.0);
        assert!((r[0].estimate - expected).abs() < 4.0 * r[0].standard_error);
        assert_eq!(r[0].second_route_disagreements, 0);
        assert!(estimate_p2(&spec, &[], &grid, None, &opts).is_err());
    }

    #[test]
    fn p2_vanishes_for_tiny_amplitude() {
        let spec = default_spec().with_kind(FieldKind::V).unwrap();
        let grid = crate::grid::fibonacci_sphere(200).unwrap();
        let r = estimate_p2(&spec, &[0.01], &grid, None, &McOptions::new(500, 1)).unwrap();
        assert_eq!(r[0].hits, 0);
    }
}

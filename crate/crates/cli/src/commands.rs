//! One function per subcommand. Each returns its tables and constants; the
//! caller writes them.

use anyhow::{bail, Context, Result};
use randcurv_core::bounds::{
    borell_upper_constant, compare_large_t, compare_small_t, heat_sigma_large_t,
    heat_sigma_small_t, linf_log_asymptote, mills_lower_constant, nd_negative_bound,
    nd_positive_constants, p2_two_sided, q_sign_bounds, Comparison,
};
use randcurv_core::curvature::{q_curvature, scalar_curvature_nd, DeviationMode};
use randcurv_core::excursion::{
    at_metric_constant, estimate_linf, estimate_linf_tilted, estimate_p2, euler_curve,
    lipschitz_killing, sphere_p2_prediction, sup_samples, ExcursionReport, McOptions,
};
use randcurv_core::fields::{
    heat_variance, isotropic_variance, variance_summary, FieldKind, FieldSampler, RandomFieldSpec,
    ReferenceCurvature,
};
use randcurv_core::grid::{Grid, Points};
use randcurv_core::spectral::{round_sphere, Geometry, Operator};

use crate::config::{ExperimentConfig, Sampling};
use crate::output::{Cell, Outcome, Table};

/// Effective run settings after flag and environment overrides.
#[derive(Debug, Clone)]
pub struct RunContext {
    pub config: ExperimentConfig,
    pub workers: usize,
}

impl RunContext {
    pub fn opts(&self) -> McOptions {
        McOptions::new(self.config.run.n_samples, self.config.run.seed).workers(self.workers)
    }
}

fn coords(grid: &Grid, i: usize) -> [f64; 3] {
    match &grid.points {
        Points::Sphere(p) => p[i],
        Points::Torus(p) => [p[i][0], p[i][1], 0.0],
        Points::Table(idx) => [idx[i] as f64, 0.0, 0.0],
    }
}

fn needs_grid(spec: &RandomFieldSpec) -> Result<()> {
    if spec.spectrum.geometry() == Geometry::RoundSphere4Paneitz {
        bail!("this command samples on a grid, which round_sphere4_paneitz does not provide");
    }
    Ok(())
}

fn add_variances(out: &mut Outcome, table: &mut Table, cfg: &ExperimentConfig, grid: &Grid) -> Result<()> {
    for (name, kind) in [("sigma_f2", FieldKind::F), ("sigma_h2", FieldKind::H)] {
        let v = variance_summary(&cfg.field_spec(kind)?, grid)?.sigma2_sup;
        table.meta(name, v);
        out.constant(name, v);
    }
    Ok(())
}

pub fn cmd_sample(ctx: &RunContext) -> Result<Outcome> {
    let cfg = &ctx.config;
    let section = cfg.sample.as_ref().context("missing [sample] section")?;
    let spec = cfg.field_spec(FieldKind::F)?;
    needs_grid(&spec)?;
    let grid = cfg.grid()?;
    let n = spec.spectrum.dimension();
    let reference = spec
        .reference
        .clone()
        .context("sampling curvature needs field.reference")?;
    let q = spec.spectrum.operator() == Operator::Gjms;
    let sampler = FieldSampler::new(&spec, &grid, n > 2 && !q)?;
    let a = section.amplitude;
    if !(a >= 0.0) {
        bail!("sample.amplitude must be nonnegative");
    }
    let mut out = Outcome::default();
    let mut template = Table::new(
        "sample",
        &["index", "x1", "x2", "x3", "weight", "f", "h", "reference", "curvature"],
    );
    template.meta("amplitude", a);
    template.meta("modes", sampler.modes());
    out.constant("modes", sampler.modes());
    add_variances(&mut out, &mut template, cfg, &grid)?;
    if spec.spectrum.geometry() == Geometry::Sphere2 {
        let c = at_metric_constant(&spec)?;
        let l2 = lipschitz_killing(&spec)?[2];
        template.meta("at_constant", c);
        template.meta("L2", l2);
        out.constant("at_constant", c);
        out.constant("L2", l2);
    }
    if reference.has_constant_sign() {
        let v = variance_summary(&spec.with_kind(FieldKind::V)?, &grid)?.sigma2_sup;
        template.meta("sigma_v2", v);
        out.constant("sigma_v2", v);
    }
    for draw in 0..section.draws {
        let s = sampler.sample(cfg.run.seed, draw);
        let curv = if q {
            q_curvature(&reference, &s, a, n)?
        } else {
            scalar_curvature_nd(&reference, &s, a, n)?
        };
        let mut t = template.clone();
        t.name = format!("sample_{draw:04}");
        t.meta("draw_index", draw);
        for i in 0..grid.len() {
            let [x1, x2, x3] = coords(&grid, i);
            t.push(vec![
                i.into(),
                x1.into(),
                x2.into(),
                x3.into(),
                grid.weights[i].into(),
                s.values_f[i].into(),
                s.values_h[i].into(),
                curv.reference[i].into(),
                curv.values[i].into(),
            ]);
        }
        out.tables.push(t);
    }
    Ok(out)
}

fn refinement_cells(r: &ExcursionReport) -> [Cell; 3] {
    [
        r.refined_points.map(Cell::from).unwrap_or(Cell::Int(0)),
        r.refined_estimate.into(),
        r.refinement_delta.into(),
    ]
}

pub fn cmd_p2(ctx: &RunContext) -> Result<Outcome> {
    let cfg = &ctx.config;
    let section = cfg.p2.as_ref().context("missing [p2] section")?;
    let spec = cfg.field_spec(FieldKind::V)?;
    needs_grid(&spec)?;
    let grid = cfg.grid()?;
    let refined = cfg.refined_grid()?;
    let opts = ctx.opts();
    let sigma_v = variance_summary(&spec, &grid)?.sigma2_sup.sqrt();
    let sups = sup_samples(&spec, &grid, &opts)?;
    let e_sup = sups.iter().sum::<f64>() / sups.len().max(1) as f64;
    let a_max = section.amplitudes.iter().copied().fold(0.0, f64::max);
    let c1 = mills_lower_constant(sigma_v, a_max)?;
    let c2 = borell_upper_constant(e_sup, sigma_v)?;
    let reports = estimate_p2(&spec, &section.amplitudes, &grid, refined.as_ref(), &opts)?;

    let mut out = Outcome::default();
    let mut t = Table::new(
        "p2",
        &[
            "a", "inv_a", "estimate", "se", "hits", "n", "prediction", "ratio", "lower", "upper",
            "ln_lower", "ln_upper", "upper_valid", "refined_points", "refined_estimate",
            "refinement_delta", "disagreements",
        ],
    );
    for (k, v) in [("sigma_v", sigma_v), ("e_sup", e_sup), ("C1_low", c1), ("C2_up", c2)] {
        t.meta(k, v);
        out.constant(k, v);
    }
    t.meta("grid_points", grid.len());
    t.meta("n_samples", opts.n_samples);
    let scale = match (&spec.reference, spec.spectrum.geometry()) {
        (Some(ReferenceCurvature::Constant(r)), Geometry::Sphere2) => Some(r.abs()),
        _ => None,
    };
    for r in &reports {
        let prediction = match scale {
            Some(s) => {
                let p = sphere_p2_prediction(&spec, r.amplitude / s)?;
                for w in p.warnings {
                    if !out.warnings.contains(&w) {
                        out.warnings.push(w);
                    }
                }
                p.value
            }
            None => f64::NAN,
        };
        let b = p2_two_sided(r.amplitude, sigma_v, c1, c2)?;
        out.warnings.extend(r.warnings.iter().cloned());
        let mut row: Vec<Cell> = vec![
            r.amplitude.into(),
            r.threshold.into(),
            r.estimate.into(),
            r.standard_error.into(),
            r.hits.into(),
            r.n_samples.into(),
            prediction.into(),
            (r.estimate / prediction).into(),
            b.lower.into(),
            b.upper.into(),
            b.ln_lower.into(),
            b.ln_upper.into(),
            ((r.threshold > e_sup) as i64).into(),
        ];
        row.extend(refinement_cells(r));
        row.push(r.second_route_disagreements.into());
        t.push(row);
    }
    for w in &out.warnings {
        t.meta("warning", w);
    }
    out.tables.push(t);
    Ok(out)
}

pub fn cmd_euler(ctx: &RunContext) -> Result<Outcome> {
    let cfg = &ctx.config;
    let section = cfg.euler.as_ref().context("missing [euler] section")?;
    let spec = cfg.field_spec(FieldKind::H)?;
    if spec.spectrum.geometry() != Geometry::Sphere2 {
        bail!("euler needs sphere2 geometry");
    }
    let mesh = cfg.mesh()?;
    let curve = euler_curve(&spec, &mesh, &section.thresholds()?, &ctx.opts())?;
    let mut out = Outcome::default();
    let mut t = Table::new("euler", &["u", "mean", "se", "predicted", "z"]);
    let [l0, l1, l2] = curve.lipschitz_killing;
    for (k, v) in [("L0", l0), ("L1", l1), ("L2", l2), ("at_constant", at_metric_constant(&spec)?)] {
        t.meta(k, v);
        out.constant(k, v);
    }
    t.meta("vertices", curve.vertices);
    t.meta("n_samples", curve.n_samples);
    t.meta("perturbed", curve.perturbed);
    out.constant("perturbed", curve.perturbed);
    for i in 0..curve.thresholds.len() {
        let (m, se, p) = (curve.mean[i], curve.standard_error[i], curve.predicted[i]);
        let z = if se > 0.0 { (m - p) / se } else { f64::NAN };
        t.push(vec![curve.thresholds[i].into(), m.into(), se.into(), p.into(), z.into()]);
    }
    out.tables.push(t);
    Ok(out)
}

pub fn cmd_linf(ctx: &RunContext) -> Result<Outcome> {
    let cfg = &ctx.config;
    let section = cfg.linf.as_ref().context("missing [linf] section")?;
    let spec = cfg.field_spec(FieldKind::H)?;
    needs_grid(&spec)?;
    let mode = match spec.spectrum.operator() {
        Operator::Laplacian => DeviationMode::Scalar2D,
        Operator::Gjms => DeviationMode::Q,
    };
    let grid = cfg.grid()?;
    let pairs: Vec<(f64, f64)> = section.pairs.iter().map(|p| (p[0], p[1])).collect();
    let sigma_w = variance_summary(&spec.with_kind(FieldKind::W)?, &grid)?.sigma2_sup.sqrt();
    let sigma_h = variance_summary(&spec, &grid)?.sigma2_sup.sqrt();
    let opts = ctx.opts();
    let reports = match section.sampling {
        Sampling::Plain => {
            estimate_linf(&spec, &pairs, &grid, cfg.refined_grid()?.as_ref(), &opts, mode)?
        }
        Sampling::Tilted => {
            estimate_linf_tilted(&spec, &pairs, &grid, &opts, mode, section.tilt_level)?
        }
    };
    let mut out = Outcome::default();
    let mut t = Table::new(
        "linf",
        &[
            "a", "u", "u_over_a", "estimate", "se", "hits", "n", "ln_estimate", "asymptote",
            "ratio", "refined_points", "refined_estimate", "refinement_delta", "flags",
        ],
    );
    for (k, v) in [("sigma_w", sigma_w), ("sigma_h", sigma_h)] {
        t.meta(k, v);
        out.constant(k, v);
    }
    t.meta("sampling", format!("{:?}", section.sampling).to_lowercase());
    t.meta("grid_points", grid.len());
    for r in &reports {
        let asym = linf_log_asymptote(r.threshold, r.amplitude, sigma_w)?;
        let ln = r.estimate.ln();
        let mut flags = asym.flags.clone();
        flags.extend(r.warnings.iter().filter(|w| w.starts_with("u/a")).cloned());
        flags.dedup();
        let mut row: Vec<Cell> = vec![
            r.amplitude.into(),
            r.threshold.into(),
            (r.threshold / r.amplitude).into(),
            r.estimate.into(),
            r.standard_error.into(),
            r.hits.into(),
            r.n_samples.into(),
            ln.into(),
            asym.value.into(),
            (ln / asym.value).into(),
        ];
        row.extend(refinement_cells(r));
        row.push(Cell::Text(flags.join(" | ").replace(',', ";")));
        t.push(row);
        out.warnings.extend(r.warnings.iter().cloned());
    }
    out.tables.push(t);
    Ok(out)
}

pub fn cmd_heat(ctx: &RunContext) -> Result<Outcome> {
    let cfg = &ctx.config;
    let section = cfg.heat.as_ref().context("missing [heat] section")?;
    let spectrum = cfg.spectrum()?;
    let r0 = cfg.reference().context("heat needs field.reference")?;
    if !r0.has_constant_sign() {
        bail!("heat needs a nonvanishing reference curvature");
    }
    let n = spectrum.dimension();
    let inf_sq = r0.inf_sq();
    let mut out = Outcome::default();
    let mut t = Table::new(
        "heat",
        &["T", "sigma_v2", "small_t", "ratio_small", "large_t", "ratio_large", "levels_used"],
    );
    let first = heat_sigma_large_t(&spectrum, &r0, 1.0)?;
    for (k, v) in [("inf_R0_sq", inf_sq), ("F", first.f), ("lambda1", first.lambda1)] {
        t.meta(k, v);
        out.constant(k, v);
    }
    if n != 2 {
        out.warnings
            .push("the small-T limit is established for surfaces only".to_string());
    }
    for &time in &section.times {
        let hv = heat_variance(&spectrum, time)?;
        let sigma2 = if hv.diagonal.len() == 1 {
            hv.sup / inf_sq
        } else {
            hv.diagonal
                .iter()
                .enumerate()
                .map(|(i, d)| d / r0.at(i).powi(2))
                .fold(f64::NEG_INFINITY, f64::max)
        };
        let small = heat_sigma_small_t(time, n, inf_sq)?;
        let large = heat_sigma_large_t(&spectrum, &r0, time)?;
        t.push(vec![
            time.into(),
            sigma2.into(),
            small.into(),
            (sigma2 / small).into(),
            large.asymptote.into(),
            (sigma2 / large.asymptote).into(),
            hv.levels_used.into(),
        ]);
    }
    out.tables.push(t);
    Ok(out)
}

fn ordering(c: Comparison) -> &'static str {
    match c {
        Comparison::FirstLarger => "first_larger",
        Comparison::SecondLarger => "second_larger",
        Comparison::Incomparable => "incomparable",
    }
}

fn dimension(x: f64) -> Result<u32> {
    if x.fract() != 0.0 || !(x >= 2.0) {
        bail!("dimension {x} is not an integer >= 2");
    }
    Ok(x as u32)
}

pub fn cmd_bounds(ctx: &RunContext) -> Result<Outcome> {
    let b = ctx.config.bounds.clone().unwrap_or_default();
    let mut t = Table::new("bounds", &["kind", "case", "quantity", "value"]);
    let mut row = |kind: &str, case: &str, q: &str, v: Cell| {
        t.push(vec![kind.into(), case.into(), q.into(), v]);
    };
    for &[n, sv, s2] in &b.nd_positive {
        let c = nd_positive_constants(dimension(n)?, sv, s2)?;
        let case = format!("n={n} sigma_v={sv} sigma_2={s2}");
        row("nd_positive", &case, "kappa", c.kappa.into());
        row("nd_positive", &case, "delta0", c.delta0.into());
        row("nd_positive", &case, "B", c.b.into());
    }
    for &[a, n, sv, alpha] in &b.nd_negative {
        let v = nd_negative_bound(a, dimension(n)?, sv, alpha)?;
        row("nd_negative", &format!("a={a} n={n} sigma_v={sv} alpha={alpha}"), "bound", v.into());
    }
    for &[a, sv, c1, c2] in &b.two_sided {
        let r = p2_two_sided(a, sv, c1, c2)?;
        let case = format!("a={a} sigma_v={sv} C1={c1} C2={c2}");
        for (q, v) in [
            ("lower", r.lower),
            ("upper", r.upper),
            ("a2_ln_lower", r.lower_diagnostic),
            ("a2_ln_upper", r.upper_diagnostic),
            ("limit", r.limit),
        ] {
            row("p2_two_sided", &case, q, v.into());
        }
    }
    for &[u, a, sw] in &b.linf {
        let l = linf_log_asymptote(u, a, sw)?;
        row("linf_log_asymptote", &format!("u={u} a={a} sigma_w={sw}"), "value", l.value.into());
        row("linf_log_asymptote", &format!("u={u} a={a} sigma_w={sw}"), "flags", l.flags.len().into());
    }
    for &[time, n, inf] in &b.heat_small_t {
        let v = heat_sigma_small_t(time, dimension(n)?, inf)?;
        row("heat_small_t", &format!("T={time} n={n} inf_R0_sq={inf}"), "sigma_v2", v.into());
    }
    for &[x, y] in &b.compare_small_t {
        let c = compare_small_t(x, y)?;
        row("compare_small_t", &format!("inf_R0_sq={x} vs {y}"), "larger_p2", ordering(c).into());
    }
    for &[x, y] in &b.compare_large_t {
        let c = compare_large_t(x, y)?;
        row("compare_large_t", &format!("lambda1={x} vs {y}"), "larger_p2", ordering(c).into());
    }
    let (n, s2) = (4.0, 1.0);
    for i in 0..b.kappa_scan {
        let e = if b.kappa_scan == 1 {
            0.0
        } else {
            -6.0 + 12.0 * i as f64 / (b.kappa_scan - 1) as f64
        };
        let kappa = 10f64.powf(e);
        let sv = (kappa * s2 * n * (n - 2.0) / (4.0 * (n - 1.0))).sqrt();
        let c = nd_positive_constants(4, sv, s2)?;
        let d = c.delta0;
        let quad = (d * d + c.kappa * d - c.kappa) / (d * d + c.kappa * d + c.kappa);
        let e1 = d * d / (2.0 * (n - 1.0).powi(2) * sv * sv);
        let e2 = 2.0 * c.one_minus_delta0 / (s2 * n * (n - 1.0) * (n - 2.0));
        let case = format!("kappa={kappa:e}");
        row("kappa_scan", &case, "delta0", d.into());
        row("kappa_scan", &case, "quadratic_residual", quad.into());
        row("kappa_scan", &case, "exponent_gap_1", ((e1 - c.b) / c.b).into());
        row("kappa_scan", &case, "exponent_gap_2", ((e2 - c.b) / c.b).into());
    }
    let mut out = Outcome::default();
    out.tables.push(t);
    Ok(out)
}

pub fn cmd_qsign(ctx: &RunContext) -> Result<Outcome> {
    let cfg = &ctx.config;
    let section = cfg.qsign.as_ref().context("missing [qsign] section")?;
    let spec = cfg.field_spec(FieldKind::V)?;
    if spec.spectrum.operator() != Operator::Gjms {
        bail!("qsign needs a GJMS spectrum");
    }
    let sigma2 = if spec.spectrum.table().is_some() {
        variance_summary(&spec, &cfg.grid()?)?.sigma2_sup
    } else {
        isotropic_variance(&spec)?
    };
    let sigma_v = sigma2.sqrt();
    let a_max = section.amplitudes.iter().copied().fold(0.0, f64::max);
    let c1 = match section.c1 {
        Some(c) => c,
        None => mills_lower_constant(sigma_v, a_max.max(f64::MIN_POSITIVE))?,
    };
    let mut out = Outcome::default();
    let c2 = section.c2.unwrap_or_else(|| {
        out.warnings
            .push("C2 not given: the upper bound drops the E sup term".to_string());
        0.0
    });
    let mut t = Table::new(
        "qsign",
        &[
            "a", "lower", "upper", "ln_lower", "ln_upper", "a2_ln_lower", "a2_ln_upper", "limit",
            "drift_lower", "drift_upper",
        ],
    );
    for (k, v) in [("sigma_v", sigma_v), ("C1", c1), ("C2", c2)] {
        t.meta(k, v);
        out.constant(k, v);
    }
    if spec.spectrum.geometry() == Geometry::RoundSphere4Paneitz {
        let q0 = round_sphere::q_curvature_s4();
        t.meta("Q0_derived", q0);
        out.constant("Q0_derived", q0);
    }
    let mut prev: Option<(f64, f64)> = None;
    for &a in &section.amplitudes {
        let b = q_sign_bounds(a, sigma_v, c1, c2)?;
        let (dl, du) = match prev {
            Some((l, u)) => ((b.lower_diagnostic - l) / l, (b.upper_diagnostic - u) / u),
            None => (f64::NAN, f64::NAN),
        };
        prev = Some((b.lower_diagnostic, b.upper_diagnostic));
        t.push(vec![
            a.into(),
            b.lower.into(),
            b.upper.into(),
            b.ln_lower.into(),
            b.ln_upper.into(),
            b.lower_diagnostic.into(),
            b.upper_diagnostic.into(),
            b.limit.into(),
            dl.into(),
            du.into(),
        ]);
    }
    out.tables.push(t);
    Ok(out)
}

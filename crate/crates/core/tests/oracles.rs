use std::f64::consts::PI;

use randcurv_core::bounds::{borell_tis_concentration, heat_sigma_large_t, q_sign_bounds};
use randcurv_core::curvature::{expected_volume, sample_volume, DeviationMode};
use randcurv_core::excursion::{estimate_linf, estimate_linf_tilted, sup_samples, McOptions};
use randcurv_core::fields::{
    heat_variance, isotropic_variance, variance_summary, FieldKind, FieldSampler, RandomFieldSpec,
    ReferenceCurvature,
};
use randcurv_core::grid::{fibonacci_sphere, torus_lattice, Grid};
use randcurv_core::harmonics::unit_vector;
use randcurv_core::montecarlo::Moments;
use randcurv_core::spectral::{
    make_explicit, make_power_law, make_sphere_normalized, round_sphere, Indexing, Operator,
    SpectrumModel, Truncation,
};

fn torus_h(s: f64, levels: usize) -> RandomFieldSpec {
    let sp = SpectrumModel::flat_torus2(levels);
    let c = make_power_law(s, &sp, Truncation::new(levels).with_tolerance(f64::INFINITY)).unwrap();
    RandomFieldSpec::new(sp, c, FieldKind::H, Some(ReferenceCurvature::Constant(0.0))).unwrap()
}

fn sphere(which: FieldKind) -> RandomFieldSpec {
    let c = make_sphere_normalized(8.0, Truncation::new(12)).unwrap();
    RandomFieldSpec::new(SpectrumModel::sphere2(12), c, which, Some(ReferenceCurvature::Constant(1.0)))
        .unwrap()
}

#[test]
fn concentration_bound_holds_on_torus() {
    let spec = torus_h(2.0, 6);
    let grid = torus_lattice(24).unwrap();
    let sigma = variance_summary(&spec, &grid).unwrap().sigma2_sup.sqrt();
    let sups = sup_samples(&spec, &grid, &McOptions::new(20_000, 11)).unwrap();
    let e_sup = sups.iter().sum::<f64>() / sups.len() as f64;
    for k in [1.0, 2.0, 3.0] {
        let u = e_sup + k * sigma;
        let p = sups.iter().filter(|&&s| s > u).count() as f64 / sups.len() as f64;
        let se = (p * (1.0 - p) / sups.len() as f64).sqrt();
        let bound = borell_tis_concentration(u, e_sup, sigma).unwrap();
        assert!(p <= bound + 3.0 * se, "k = {k}: {p} > {bound}");
    }
}

#[test]
fn w_variance_matches_samples() {
    let spec = sphere(FieldKind::W);
    let exact = isotropic_variance(&spec).unwrap();
    let grid = Grid::sphere(vec![unit_vector(1.1, 0.3)]).unwrap();
    let sampler = FieldSampler::new(&spec, &grid, false).unwrap();
    let mut m = Moments::default();
    for first in (0..40_000u64).step_by(64) {
        let z = sampler.normals_batch(5, first, 64);
        sampler.target(&z).iter().for_each(|&w| m.push(w * w));
    }
    assert!((m.mean - exact).abs() < 3.0 * m.standard_error(), "{} vs {exact}", m.mean);
}

#[test]
fn tilted_and_plain_estimators_agree() {
    let spec = torus_h(2.0, 4);
    let grid = torus_lattice(16).unwrap();
    let pairs = [(0.1, 0.06), (0.1, 0.1)];
    let opts = McOptions::new(20_000, 8);
    let plain = estimate_linf(&spec, &pairs, &grid, None, &opts, DeviationMode::Scalar2D).unwrap();
    let tilted =
        estimate_linf_tilted(&spec, &pairs, &grid, &opts, DeviationMode::Scalar2D, 0.9).unwrap();
    for (p, t) in plain.iter().zip(&tilted) {
        let se = (p.standard_error.powi(2) + t.standard_error.powi(2)).sqrt();
        assert!((p.estimate - t.estimate).abs() < 4.0 * se, "{} vs {}", p.estimate, t.estimate);
    }
}

#[test]
fn volume_expectation() {
    let spec = sphere(FieldKind::F);
    let grid = fibonacci_sphere(400).unwrap();
    assert_eq!(expected_volume(&spec, &grid, 0.0, 2).unwrap(), 4.0 * PI);
    let sampler = FieldSampler::new(&spec, &grid, false).unwrap();
    let a = 0.5;
    let mut m = Moments::default();
    for d in 0..4000 {
        m.push(sample_volume(&sampler.sample(2, d), &grid, a, 2));
    }
    let exact = expected_volume(&spec, &grid, a, 2).unwrap();
    assert!((m.mean - exact).abs() < 3.0 * m.standard_error());
}

#[test]
fn two_level_table_large_t() {
    // Two constant-modulus levels on a 4-point table.
    let v: f64 = 2.0;
    let phi = 1.0 / v.sqrt();
    let records = vec![
        (1.5, vec![phi, -phi, phi, -phi]),
        (4.0, vec![phi, phi, -phi, -phi]),
        (4.0, vec![phi, -phi, -phi, phi]),
    ];
    let s = SpectrumModel::from_table(2, v, Operator::Laplacian, vec![0.5; 4], records).unwrap();
    let r0 = ReferenceCurvature::Constant(1.0);
    for t in [8.0f64, 12.0, 20.0] {
        let large = heat_sigma_large_t(&s, &r0, t).unwrap();
        let direct = heat_variance(&s, t).unwrap().sup;
        let exact = phi * phi * (-1.5 * t).exp() + 2.0 * phi * phi * (-4.0 * t).exp();
        assert!((direct - exact).abs() < 1e-15 * exact.max(1e-300));
        assert!((direct / large.asymptote - 1.0).abs() < 2.0 * (-2.5 * t).exp() + 1e-12);
    }
}

#[test]
fn paneitz_single_level_sigma_v() {
    let s = SpectrumModel::round_sphere4_paneitz(1).unwrap();
    let t1 = 0.01;
    let c = make_explicit(vec![t1], vec![], Indexing::PerEigenfunction, &s).unwrap();
    let q0 = round_sphere::q_curvature_s4();
    let spec =
        RandomFieldSpec::new(s.clone(), c, FieldKind::V, Some(ReferenceCurvature::Constant(q0)))
            .unwrap();
    let l = s.levels()[0];
    let expected = t1 * t1 * l.eigenvalue.powi(2) * l.multiplicity as f64
        / (round_sphere::volume_s4() * q0 * q0);
    let sigma2 = isotropic_variance(&spec).unwrap();
    assert!((sigma2 - expected).abs() < 1e-14 * expected);
    let sv = sigma2.sqrt();
    let mut prev = None;
    for a in [1e-1, 1e-2, 1e-3] {
        let b = q_sign_bounds(a, sv, 0.1, 1.0).unwrap();
        if let Some(p) = prev {
            let drift: f64 = (b.upper_diagnostic - p) / p;
            if a == 1e-3 {
                assert!(drift.abs() < 0.05);
            }
        }
        prev = Some(b.upper_diagnostic);
        assert!((b.lower_diagnostic - b.limit).abs() <= (b.upper_diagnostic - b.limit).abs() + 1.0);
    }
    assert_eq!(q_sign_bounds(0.0, sv, 0.1, 1.0).unwrap().upper, 0.0);
}

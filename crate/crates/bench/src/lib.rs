//! Fixtures shared by the benchmarks.

use randcurv_core::fields::{FieldKind, RandomFieldSpec, ReferenceCurvature};
use randcurv_core::spectral::{make_power_law, make_sphere_normalized, SpectrumModel, Truncation};

/// Unit-variance sphere `h` field with `s = 8`.
pub fn sphere_h(levels: usize) -> RandomFieldSpec {
    let c = make_sphere_normalized(8.0, Truncation::new(levels)).expect("valid scheme");
    RandomFieldSpec::new(
        SpectrumModel::sphere2(levels),
        c,
        FieldKind::H,
        Some(ReferenceCurvature::Constant(1.0)),
    )
    .expect("valid spec")
}

/// Torus `h` field with power-law decay `s = 2`.
pub fn torus_h(levels: usize) -> RandomFieldSpec {
    let sp = SpectrumModel::flat_torus2(levels);
    let c = make_power_law(2.0, &sp, Truncation::new(levels).with_tolerance(f64::INFINITY))
        .expect("valid scheme");
    RandomFieldSpec::new(sp, c, FieldKind::H, Some(ReferenceCurvature::Constant(0.0)))
        .expect("valid spec")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_build() {
        assert_eq!(sphere_h(12).levels(), 12);
        assert_eq!(torus_h(6).levels(), 6);
    }
}

//! Experiment configuration files.
//!
//! A config is TOML with a `[run]` table, a `[field]` table describing the
//! random field, a `[grid]` table, and one optional table per command.
//! Command-line flags override `[run]`; `RANDCURV_SEED` overrides the file
//! seed but not `--seed`.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use randcurv_core::fields::{FieldKind, RandomFieldSpec, ReferenceCurvature};
use randcurv_core::grid::{fibonacci_sphere, icosphere, torus_lattice, Grid, Mesh};
use randcurv_core::spectral::{
    make_explicit, make_heat_kernel, make_power_law, make_sphere_normalized, CoefficientScheme,
    Geometry, Indexing, SpectrumModel, Truncation, DEFAULT_TAIL_TOLERANCE,
};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub run: RunSection,
    pub field: FieldSection,
    #[serde(default)]
    pub grid: GridSection,
    pub sample: Option<SampleSection>,
    pub p2: Option<P2Section>,
    pub euler: Option<EulerSection>,
    pub linf: Option<LinfSection>,
    pub heat: Option<HeatSection>,
    pub bounds: Option<BoundsSection>,
    pub qsign: Option<QSignSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_samples")]
    pub n_samples: u64,
    #[serde(default = "default_workers", skip_serializing)]
    pub workers: usize,
    #[serde(default = "default_out", skip_serializing)]
    pub out: PathBuf,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            seed: default_seed(),
            n_samples: default_samples(),
            workers: default_workers(),
            out: default_out(),
        }
    }
}

fn default_seed() -> u64 {
    1
}
fn default_samples() -> u64 {
    10_000
}
fn default_workers() -> usize {
    1
}
fn default_out() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeometryName {
    Sphere2,
    FlatTorus2,
    RoundSphere4Paneitz,
    User,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleName {
    SphereNormalized,
    PowerLaw,
    HeatKernel,
    Explicit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndexingName {
    PerEigenspace,
    PerEigenfunction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldSection {
    pub geometry: GeometryName,
    pub spectrum_file: Option<PathBuf>,
    /// Retained positive levels.
    pub levels: usize,
    pub rule: RuleName,
    pub s: Option<f64>,
    #[serde(rename = "T")]
    pub t: Option<f64>,
    pub values: Option<Vec<f64>>,
    pub negative_values: Option<Vec<f64>>,
    pub indexing: Option<IndexingName>,
    pub tail_tolerance: Option<f64>,
    /// Constant `R₀` (or `Q₀`).
    pub reference: Option<f64>,
    /// `R₀` at every grid point, overriding `reference`.
    pub reference_values: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridKind {
    Fibonacci,
    Icosphere,
    TorusLattice,
    Table,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[derive(Default)]
pub struct GridSection {
    pub kind: Option<GridKind>,
    /// Points for Fibonacci grids, points per side for torus lattices.
    pub points: Option<usize>,
    pub depth: Option<u32>,
    /// Resolution of the refinement grid for estimators that report one.
    pub refine_points: Option<usize>,
}


#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleSection {
    #[serde(default = "one")]
    pub draws: u64,
    pub amplitude: f64,
}

fn one() -> u64 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct P2Section {
    pub amplitudes: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EulerSection {
    pub thresholds: Option<Vec<f64>>,
    pub u_min: Option<f64>,
    pub u_max: Option<f64>,
    pub u_count: Option<usize>,
}

impl EulerSection {
    pub fn thresholds(&self) -> Result<Vec<f64>> {
        if let Some(t) = &self.thresholds {
            return Ok(t.clone());
        }
        match (self.u_min, self.u_max, self.u_count) {
            (Some(lo), Some(hi), Some(n)) if n >= 2 && hi > lo => Ok((0..n)
                .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
                .collect()),
            (Some(lo), _, Some(1)) => Ok(vec![lo]),
            _ => bail!("[euler] needs `thresholds` or `u_min`, `u_max` and `u_count`"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    Plain,
    Tilted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinfSection {
    /// `(a, u)` pairs.
    pub pairs: Vec<[f64; 2]>,
    #[serde(default = "plain")]
    pub sampling: Sampling,
    #[serde(default = "tilt_level")]
    pub tilt_level: f64,
}

fn plain() -> Sampling {
    Sampling::Plain
}
fn tilt_level() -> f64 {
    0.9
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeatSection {
    #[serde(rename = "T")]
    pub times: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsSection {
    /// `(n, σ_v, σ₂)` triples for the `R₀ > 0` constants.
    #[serde(default)]
    pub nd_positive: Vec<[f64; 3]>,
    /// `(a, n, σ_v, α)` for the `R₀ < 0` bound.
    #[serde(default)]
    pub nd_negative: Vec<[f64; 4]>,
    /// `(a, σ_v, C₁, C₂)` for the two-sided bound.
    #[serde(default)]
    pub two_sided: Vec<[f64; 4]>,
    /// `(u, a, σ_w)`.
    #[serde(default)]
    pub linf: Vec<[f64; 3]>,
    /// `(T, n, inf R₀²)`.
    #[serde(default)]
    pub heat_small_t: Vec<[f64; 3]>,
    /// Pairs of `inf R₀²`.
    #[serde(default)]
    pub compare_small_t: Vec<[f64; 2]>,
    /// Pairs of `λ₁`.
    #[serde(default)]
    pub compare_large_t: Vec<[f64; 2]>,
    /// Points of the log-spaced `κ` scan over `[10⁻⁶, 10⁶]`.
    #[serde(default)]
    pub kappa_scan: usize,
}

impl Default for BoundsSection {
    fn default() -> Self {
        BoundsSection {
            nd_positive: vec![[4.0, 1.0, 1.0], [3.0, 1.0, 1.0]],
            nd_negative: vec![[0.1, 3.0, 1.0, 0.0]],
            two_sided: vec![[0.1, 1.0, 0.2, 1.0], [0.01, 1.0, 0.2, 1.0], [0.001, 1.0, 0.2, 1.0]],
            linf: vec![[0.1, 0.025, 1.0]],
            heat_small_t: vec![[0.01, 2.0, 1.0]],
            compare_small_t: vec![[2.0, 1.0]],
            compare_large_t: vec![[2.0, 2.0], [2.0, 1.5]],
            kappa_scan: 25,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QSignSection {
    pub amplitudes: Vec<f64>,
    pub c1: Option<f64>,
    pub c2: Option<f64>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).context("invalid config")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("in {}", path.display()))
    }

    fn validate(&self) -> Result<()> {
        let f = &self.field;
        if f.levels == 0 {
            bail!("field.levels must be positive");
        }
        for (name, v) in [("field.s", f.s), ("field.T", f.t), ("field.tail_tolerance", f.tail_tolerance)] {
            if let Some(x) = v {
                if !(x > 0.0) {
                    bail!("{name} must be positive, got {x}");
                }
            }
        }
        if self.run.workers == 0 {
            bail!("run.workers must be at least 1");
        }
        if let Some(p) = &self.p2 {
            if p.amplitudes.is_empty() {
                bail!("p2.amplitudes must not be empty");
            }
        }
        if let Some(l) = &self.linf {
            if l.pairs.is_empty() {
                bail!("linf.pairs must not be empty");
            }
        }
        if let Some(h) = &self.heat {
            if h.times.is_empty() {
                bail!("heat.T must not be empty");
            }
        }
        if let Some(q) = &self.qsign {
            if q.amplitudes.is_empty() {
                bail!("qsign.amplitudes must not be empty");
            }
        }
        Ok(())
    }

    /// First 16 hex digits of the SHA-256 of the canonical JSON form.
    /// Worker count and output directory do not enter the hash.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(&serde_json::to_value(self).expect("serializable"))
            .expect("serializable");
        let digest = Sha256::digest(canonical.as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn spectrum(&self) -> Result<SpectrumModel> {
        let f = &self.field;
        Ok(match f.geometry {
            GeometryName::Sphere2 => SpectrumModel::sphere2(f.levels),
            GeometryName::FlatTorus2 => SpectrumModel::flat_torus2(f.levels),
            GeometryName::RoundSphere4Paneitz => SpectrumModel::round_sphere4_paneitz(f.levels)?,
            GeometryName::User => {
                let path = f
                    .spectrum_file
                    .as_ref()
                    .context("field.spectrum_file is required for user geometry")?;
                SpectrumModel::from_file(path)
                    .with_context(|| format!("cannot load spectrum {}", path.display()))?
            }
        })
    }

    pub fn scheme(&self, spectrum: &SpectrumModel) -> Result<CoefficientScheme> {
        let f = &self.field;
        let trunc = Truncation::new(f.levels.min(spectrum.levels().len()))
            .with_tolerance(f.tail_tolerance.unwrap_or(DEFAULT_TAIL_TOLERANCE));
        let need = |v: Option<f64>, name: &str| v.with_context(|| format!("field.{name} is required"));
        Ok(match f.rule {
            RuleName::SphereNormalized => {
                if spectrum.geometry() != Geometry::Sphere2 {
                    bail!("the sphere-normalized rule needs sphere2 geometry");
                }
                make_sphere_normalized(need(f.s, "s")?, trunc)?
            }
            RuleName::PowerLaw => make_power_law(need(f.s, "s")?, spectrum, trunc)?,
            RuleName::HeatKernel => make_heat_kernel(need(f.t, "T")?, spectrum, trunc)?,
            RuleName::Explicit => {
                let indexing = match f.indexing {
                    Some(IndexingName::PerEigenfunction) => Indexing::PerEigenfunction,
                    Some(IndexingName::PerEigenspace) => Indexing::PerEigenspace,
                    None if spectrum.geometry() == Geometry::Sphere2 => Indexing::PerEigenspace,
                    None => Indexing::PerEigenfunction,
                };
                make_explicit(
                    f.values.clone().context("field.values is required")?,
                    f.negative_values.clone().unwrap_or_default(),
                    indexing,
                    spectrum,
                )?
            }
        })
    }

    pub fn reference(&self) -> Option<ReferenceCurvature> {
        match (&self.field.reference_values, self.field.reference) {
            (Some(v), _) => Some(ReferenceCurvature::Gridded(v.clone())),
            (None, Some(r)) => Some(ReferenceCurvature::Constant(r)),
            (None, None) => match self.field.geometry {
                GeometryName::Sphere2 => Some(ReferenceCurvature::Constant(1.0)),
                GeometryName::FlatTorus2 => Some(ReferenceCurvature::Constant(0.0)),
                GeometryName::RoundSphere4Paneitz => Some(ReferenceCurvature::Constant(
                    randcurv_core::spectral::round_sphere::q_curvature_s4(),
                )),
                GeometryName::User => None,
            },
        }
    }

    pub fn field_spec(&self, which: FieldKind) -> Result<RandomFieldSpec> {
        let spectrum = self.spectrum()?;
        let scheme = self.scheme(&spectrum)?;
        Ok(RandomFieldSpec::new(spectrum, scheme, which, self.reference())?)
    }

    pub fn grid(&self) -> Result<Grid> {
        self.grid_with(self.grid.points)
    }

    /// Refinement grid, if one is configured.
    pub fn refined_grid(&self) -> Result<Option<Grid>> {
        match self.grid.refine_points {
            Some(n) => Ok(Some(self.grid_with(Some(n))?)),
            None => Ok(None),
        }
    }

    fn grid_with(&self, points: Option<usize>) -> Result<Grid> {
        let kind = self.grid.kind.unwrap_or(match self.field.geometry {
            GeometryName::Sphere2 => GridKind::Fibonacci,
            GeometryName::FlatTorus2 => GridKind::TorusLattice,
            _ => GridKind::Table,
        });
        Ok(match kind {
            GridKind::Fibonacci => fibonacci_sphere(points.unwrap_or(4096))?,
            GridKind::TorusLattice => torus_lattice(points.unwrap_or(64))?,
            GridKind::Icosphere => self.mesh()?.grid()?,
            GridKind::Table => {
                let spectrum = self.spectrum()?;
                let table = spectrum
                    .table()
                    .context("table grids need a user-supplied spectrum")?;
                Grid::table((0..table.points).collect(), table.weights.clone())?
            }
        })
    }

    pub fn mesh(&self) -> Result<Mesh> {
        Ok(icosphere(self.grid.depth.unwrap_or(5))?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[field]
geometry = "sphere2"
levels = 12
rule = "sphere_normalized"
s = 8.0
"#;

    #[test]
    fn defaults_and_hash() {
        let a = ExperimentConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(a.run.seed, 1);
        assert_eq!(a.reference(), Some(ReferenceCurvature::Constant(1.0)));
        let mut b = a.clone();
        b.run.workers = 8;
        b.run.out = PathBuf::from("elsewhere");
        assert_eq!(a.hash(), b.hash());
        b.run.seed = 2;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 16);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(ExperimentConfig::from_toml(&format!("{MINIMAL}\nbogus = 1")).is_err());
        assert!(ExperimentConfig::from_toml(&MINIMAL.replace("8.0", "-1.0")).is_err());
        let empty = format!("{MINIMAL}\n[p2]\namplitudes = []\n");
        assert!(ExperimentConfig::from_toml(&empty).is_err());
    }

    #[test]
    fn threshold_ranges() {
        let e = EulerSection {
            thresholds: None,
            u_min: Some(1.0),
            u_max: Some(3.5),
            u_count: Some(20),
        };
        let t = e.thresholds().unwrap();
        assert_eq!(t.len(), 20);
        assert_eq!((t[0], t[19]), (1.0, 3.5));
    }
}

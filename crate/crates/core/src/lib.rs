//! Random conformal perturbations of a compact Riemannian manifold: spectral
//! coefficient schemes, Gaussian field sampling, curvature of the perturbed
//! metric, Monte Carlo excursion probabilities and the matching closed-form
//! bounds.

pub mod basis;
pub mod bounds;
pub mod curvature;
pub mod error;
pub mod excursion;
pub mod fields;
pub mod grid;
pub mod harmonics;
pub mod montecarlo;
pub mod rng;
pub mod special;
pub mod spectral;

pub use bounds::{BoundKind, BoundReport, Comparison, NdConstants, TwoSided};
pub use curvature::{Convention, CurvatureField, Deviation, DeviationMode, PerturbationParams};
pub use error::{Error, Result};
pub use excursion::{EulerCount, EulerCurve, ExcursionReport, McOptions, P2Prediction};
pub use fields::{FieldKind, FieldSample, FieldSampler, RandomFieldSpec, ReferenceCurvature};
pub use grid::{Grid, Mesh, Points};
pub use special::gaussian_tail;
pub use spectral::{
    CoefficientRule, CoefficientScheme, Geometry, Indexing, Level, Operator, SpectrumModel,
    Truncation,
};

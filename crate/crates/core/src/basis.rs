//! Eigenfunction values (and gradients) sampled on a grid, laid out as dense
//! `points × modes` matrices for batched synthesis.

use std::f64::consts::PI;

use nalgebra::DMatrix;

use crate::error::{invalid, Error, Result};
use crate::grid::{Grid, Points};
use crate::harmonics;
use crate::spectral::{torus_lattice_points, Geometry, SpectrumModel};

/// One real eigenfunction in the expansion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mode {
    /// Index into `levels()` or `negative_levels()`.
    pub level: usize,
    pub negative: bool,
    /// Signed eigenvalue of `-Δ` (or of `P`); negative for negative levels.
    pub eigenvalue: f64,
}

#[derive(Debug, Clone)]
pub struct Basis {
    pub modes: Vec<Mode>,
    /// `values[(i, j)]` is eigenfunction `j` at point `i`.
    pub values: DMatrix<f64>,
    /// Orthonormal-frame gradient components, when requested.
    pub gradients: Option<[DMatrix<f64>; 2]>,
}

impl Basis {
    /// Evaluates the first `levels` positive levels and `negative_levels`
    /// negative levels of `spectrum` on `grid`.
    pub fn new(
        spectrum: &SpectrumModel,
        grid: &Grid,
        levels: usize,
        negative_levels: usize,
        gradients: bool,
    ) -> Result<Self> {
        if grid.is_empty() {
            return Err(Error::EmptyGrid);
        }
        if levels > spectrum.levels().len() || negative_levels > spectrum.negative_levels().len() {
            return Err(invalid("levels", "more levels requested than the spectrum holds"));
        }
        match (spectrum.geometry(), &grid.points) {
            (Geometry::Sphere2, Points::Sphere(p)) => Ok(sphere_basis(spectrum, p, levels, gradients)),
            (Geometry::FlatTorus2, Points::Torus(p)) => {
                Ok(torus_basis(spectrum, p, levels, gradients))
            }
            (Geometry::UserSupplied, Points::Table(idx)) => {
                if gradients {
                    return Err(invalid(
                        "gradients",
                        "tabulated spectra carry no eigenfunction derivatives",
                    ));
                }
                table_basis(spectrum, idx, levels, negative_levels)
            }
            (Geometry::RoundSphere4Paneitz, _) => Err(invalid(
                "geometry",
                "fields on S⁴ are handled through closed-form spectral sums only",
            )),
            (g, _) => Err(Error::GeometryMismatch {
                expected: "a grid matching the spectrum",
                found: g,
            }),
        }
    }

    pub fn points(&self) -> usize {
        self.values.nrows()
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }
}

fn positive_modes(spectrum: &SpectrumModel, levels: usize) -> Vec<Mode> {
    spectrum.levels()[..levels]
        .iter()
        .enumerate()
        .flat_map(|(i, l)| {
            std::iter::repeat_n(
                Mode {
                    level: i,
                    negative: false,
                    eigenvalue: l.eigenvalue,
                },
                l.multiplicity,
            )
        })
        .collect()
}

fn sphere_basis(spectrum: &SpectrumModel, pts: &[[f64; 3]], levels: usize, grad: bool) -> Basis {
    let modes = positive_modes(spectrum, levels);
    let n = modes.len();
    let mut values = DMatrix::zeros(pts.len(), n);
    let mut gt = DMatrix::zeros(if grad { pts.len() } else { 0 }, n);
    let mut gp = DMatrix::zeros(if grad { pts.len() } else { 0 }, n);
    for (i, &p) in pts.iter().enumerate() {
        let h = harmonics::real_harmonics(levels, p, grad);
        for j in 0..n {
            values[(i, j)] = h.values[j];
            if grad {
                gt[(i, j)] = h.grad_theta[j];
                gp[(i, j)] = h.grad_phi[j];
            }
        }
    }
    Basis {
        modes,
        values,
        gradients: grad.then_some([gt, gp]),
    }
}

/// Real Fourier modes `cos(k·x)/(π√2)`, `sin(k·x)/(π√2)` for one
/// representative `k` of each `±k` pair, ordered by `|k|²`.
pub fn torus_wavevectors(spectrum: &SpectrumModel, levels: usize) -> Vec<[i64; 2]> {
    spectrum.levels()[..levels]
        .iter()
        .flat_map(|l| {
            torus_lattice_points(l.eigenvalue as i64)
                .into_iter()
                .filter(|k| k[0] > 0 || (k[0] == 0 && k[1] > 0))
        })
        .collect()
}

fn torus_basis(spectrum: &SpectrumModel, pts: &[[f64; 2]], levels: usize, grad: bool) -> Basis {
    let modes = positive_modes(spectrum, levels);
    let ks = torus_wavevectors(spectrum, levels);
    debug_assert_eq!(2 * ks.len(), modes.len());
    let n = modes.len();
    let norm = 1.0 / (PI * 2f64.sqrt());
    let mut values = DMatrix::zeros(pts.len(), n);
    let mut g1 = DMatrix::zeros(if grad { pts.len() } else { 0 }, n);
    let mut g2 = DMatrix::zeros(if grad { pts.len() } else { 0 }, n);
    for (i, p) in pts.iter().enumerate() {
        for (r, k) in ks.iter().enumerate() {
            let phase = k[0] as f64 * p[0] + k[1] as f64 * p[1];
            let (s, c) = phase.sin_cos();
            values[(i, 2 * r)] = norm * c;
            values[(i, 2 * r + 1)] = norm * s;
            if grad {
                g1[(i, 2 * r)] = -norm * k[0] as f64 * s;
                g2[(i, 2 * r)] = -norm * k[1] as f64 * s;
                g1[(i, 2 * r + 1)] = norm * k[0] as f64 * c;
                g2[(i, 2 * r + 1)] = norm * k[1] as f64 * c;
            }
        }
    }
    Basis {
        modes,
        values,
        gradients: grad.then_some([g1, g2]),
    }
}

fn table_basis(
    spectrum: &SpectrumModel,
    idx: &[usize],
    levels: usize,
    negative_levels: usize,
) -> Result<Basis> {
    let table = spectrum.table().expect("user spectra carry a table");
    if let Some(&bad) = idx.iter().find(|&&i| i >= table.points) {
        return Err(Error::InvalidPoint {
            index: bad,
            reason: format!("table has {} points", table.points),
        });
    }
    let mut modes = positive_modes(spectrum, levels);
    for (i, l) in spectrum.negative_levels()[..negative_levels].iter().enumerate() {
        modes.extend(std::iter::repeat_n(
            Mode {
                level: i,
                negative: true,
                eigenvalue: -l.eigenvalue,
            },
            l.multiplicity,
        ));
    }
    let columns: Vec<&Vec<f64>> = table.positive[..levels]
        .iter()
        .chain(&table.negative[..negative_levels])
        .flatten()
        .collect();
    let values = DMatrix::from_fn(idx.len(), columns.len(), |i, j| columns[j][idx[i]]);
    Ok(Basis {
        modes,
        values,
        gradients: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{fibonacci_sphere, torus_lattice};

    #[test]
    fn torus_modes_are_orthonormal_on_lattice() {
        let spec = SpectrumModel::flat_torus2(5);
        let grid = torus_lattice(16).unwrap();
        let b = Basis::new(&spec, &grid, 5, 0, false).unwrap();
        let w = grid.weights[0];
        let gram = b.values.transpose() * &b.values * w;
        for i in 0..b.len() {
            for j in 0..b.len() {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((gram[(i, j)] - e).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn torus_level_diagonal_is_constant() {
        let spec = SpectrumModel::flat_torus2(4);
        let grid = torus_lattice(7).unwrap();
        let b = Basis::new(&spec, &grid, 4, 0, false).unwrap();
        for i in 0..b.points() {
            let s: f64 = (0..4).map(|j| b.values[(i, j)].powi(2)).sum();
            assert!((s - 4.0 / (4.0 * PI * PI)).abs() < 1e-14);
        }
    }

    #[test]
    fn sphere_basis_shape() {
        let spec = SpectrumModel::sphere2(6);
        let grid = fibonacci_sphere(100).unwrap();
        let b = Basis::new(&spec, &grid, 6, 0, true).unwrap();
        assert_eq!(b.values.shape(), (100, 48));
        assert_eq!(b.modes[3].eigenvalue, 6.0);
        assert!(b.gradients.is_some());
    }

    #[test]
    fn mismatched_grid_is_rejected() {
        let spec = SpectrumModel::sphere2(3);
        let grid = torus_lattice(4).unwrap();
        assert!(Basis::new(&spec, &grid, 3, 0, false).is_err());
    }
}

//! Evaluation point sets and the icosahedral triangulation of S².

use std::collections::HashMap;
use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Points {
    /// Unit vectors on S².
    Sphere(Vec<[f64; 3]>),
    /// Points of `[0, 2π)²`.
    Torus(Vec<[f64; 2]>),
    /// Indices into a tabulated eigenfunction grid.
    Table(Vec<usize>),
}

/// A finite point set with quadrature weights summing to the volume.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub points: Points,
    pub weights: Vec<f64>,
}

impl Grid {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Grid on S² with equal weights `4π/N`. Points must have unit norm.
    pub fn sphere(points: Vec<[f64; 3]>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyGrid);
        }
        for (index, p) in points.iter().enumerate() {
            let norm = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
            if !((norm - 1.0).abs() < 1e-9) {
                return Err(Error::InvalidPoint {
                    index,
                    reason: format!("norm {norm} is not 1"),
                });
            }
        }
        let w = 4.0 * PI / points.len() as f64;
        Ok(Grid {
            weights: vec![w; points.len()],
            points: Points::Sphere(points),
        })
    }

    /// Grid on the flat torus `[0, 2π)²` with equal weights `4π²/N`.
    pub fn torus(points: Vec<[f64; 2]>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyGrid);
        }
        for (index, p) in points.iter().enumerate() {
            if p.iter().any(|&c| !(0.0..2.0 * PI).contains(&c)) {
                return Err(Error::InvalidPoint {
                    index,
                    reason: format!("({}, {}) is outside [0, 2π)²", p[0], p[1]),
                });
            }
        }
        let w = 4.0 * PI * PI / points.len() as f64;
        Ok(Grid {
            weights: vec![w; points.len()],
            points: Points::Torus(points),
        })
    }

    /// Subset of a tabulated grid.
    pub fn table(indices: Vec<usize>, weights: Vec<f64>) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::EmptyGrid);
        }
        debug_assert_eq!(indices.len(), weights.len());
        Ok(Grid {
            points: Points::Table(indices),
            weights,
        })
    }

    /// Restriction to a subset of points, keeping the original weights.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::EmptyGrid);
        }
        let weights = indices.iter().map(|&i| self.weights[i]).collect();
        let points = match &self.points {
            Points::Sphere(p) => Points::Sphere(indices.iter().map(|&i| p[i]).collect()),
            Points::Torus(p) => Points::Torus(indices.iter().map(|&i| p[i]).collect()),
            Points::Table(p) => Points::Table(indices.iter().map(|&i| p[i]).collect()),
        };
        Ok(Grid { points, weights })
    }

    pub fn sphere_points(&self) -> Option<&[[f64; 3]]> {
        match &self.points {
            Points::Sphere(p) => Some(p),
            _ => None,
        }
    }

    pub fn torus_points(&self) -> Option<&[[f64; 2]]> {
        match &self.points {
            Points::Torus(p) => Some(p),
            _ => None,
        }
    }
}

/// Fibonacci lattice of `n` points on S².
pub fn fibonacci_sphere(n: usize) -> Result<Grid> {
    if n == 0 {
        return Err(Error::EmptyGrid);
    }
    let golden = PI * (3.0 - 5f64.sqrt());
    let points = (0..n)
        .map(|i| {
            let z = 1.0 - (2.0 * i as f64 + 1.0) / n as f64;
            let r = (1.0 - z * z).sqrt();
            let phi = golden * i as f64;
            [r * phi.cos(), r * phi.sin(), z]
        })
        .collect();
    Grid::sphere(points)
}

/// Regular `n × n` lattice on `[0, 2π)²`.
pub fn torus_lattice(n: usize) -> Result<Grid> {
    if n == 0 {
        return Err(Error::EmptyGrid);
    }
    let h = 2.0 * PI / n as f64;
    let points = (0..n)
        .flat_map(|i| (0..n).map(move |j| [i as f64 * h, j as f64 * h]))
        .collect();
    Grid::torus(points)
}

/// Closed triangulated surface with its edge list.
#[derive(Debug, Clone, Serialize)]
pub struct Mesh {
    pub vertices: Vec<[f64; 3]>,
    pub faces: Vec<[u32; 3]>,
    pub edges: Vec<[u32; 2]>,
}

impl Mesh {
    /// Builds the edge list and checks that every edge borders exactly two
    /// faces.
    pub fn new(vertices: Vec<[f64; 3]>, faces: Vec<[u32; 3]>) -> Result<Self> {
        let nv = vertices.len() as u32;
        let mut count: HashMap<[u32; 2], u32> = HashMap::new();
        for f in &faces {
            if f.iter().any(|&v| v >= nv) {
                return Err(Error::NonManifold(format!("face {f:?} references a missing vertex")));
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(Error::NonManifold(format!("face {f:?} is degenerate")));
            }
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                *count.entry([a.min(b), a.max(b)]).or_insert(0) += 1;
            }
        }
        if let Some((e, c)) = count.iter().find(|(_, &c)| c != 2) {
            return Err(Error::NonManifold(format!("edge {e:?} borders {c} faces")));
        }
        let mut edges: Vec<[u32; 2]> = count.into_keys().collect();
        edges.sort_unstable();
        Ok(Mesh {
            vertices,
            faces,
            edges,
        })
    }

    pub fn euler_characteristic(&self) -> i64 {
        self.vertices.len() as i64 - self.edges.len() as i64 + self.faces.len() as i64
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::sphere(self.vertices.clone())
    }
}

/// Icosahedron subdivided `depth` times, vertices projected to the unit
/// sphere. Depth `k` gives `10·4^k + 2` vertices.
pub fn icosphere(depth: u32) -> Result<Mesh> {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let raw = [
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ];
    let mut vertices: Vec<[f64; 3]> = raw.iter().map(|&v| normalize(v)).collect();
    let mut faces: Vec<[u32; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..depth {
        let mut midpoints: HashMap<(u32, u32), u32> = HashMap::new();
        let mut next = Vec::with_capacity(faces.len() * 4);
        let mut mid = |a: u32, b: u32, vertices: &mut Vec<[f64; 3]>| -> u32 {
            let key = (a.min(b), a.max(b));
            *midpoints.entry(key).or_insert_with(|| {
                let (p, q) = (vertices[a as usize], vertices[b as usize]);
                vertices.push(normalize([p[0] + q[0], p[1] + q[1], p[2] + q[2]]));
                (vertices.len() - 1) as u32
            })
        };
        for &[a, b, c] in &faces {
            let ab = mid(a, b, &mut vertices);
            let bc = mid(b, c, &mut vertices);
            let ca = mid(c, a, &mut vertices);
            next.push([a, ab, ca]);
            next.push([b, bc, ab]);
            next.push([c, ca, bc]);
            next.push([ab, bc, ca]);
        }
        faces = next;
    }
    Mesh::new(vertices, faces)
}

fn normalize(v: [f64; 3]) -> [f64; 3] {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn icosphere_counts() {
        for depth in 0..=5 {
            let mesh = icosphere(depth).unwrap();
            let expected = 10 * 4usize.pow(depth) + 2;
            assert_eq!(mesh.vertices.len(), expected);
            assert_eq!(mesh.euler_characteristic(), 2);
        }
    }

    #[test]
    fn rejects_open_surface() {
        let mesh = icosphere(0).unwrap();
        let mut faces = mesh.faces.clone();
        faces.pop();
        assert!(matches!(Mesh::new(mesh.vertices, faces), Err(Error::NonManifold(_))));
    }

    #[test]
    fn fibonacci_points_are_unit_and_spread() {
        let g = fibonacci_sphere(4096).unwrap();
        let pts = g.sphere_points().unwrap();
        let mean_z: f64 = pts.iter().map(|p| p[2]).sum::<f64>() / pts.len() as f64;
        assert!(mean_z.abs() < 1e-12);
        let total: f64 = g.weights.iter().sum();
        assert!((total - 4.0 * PI).abs() < 1e-10);
    }

    #[test]
    fn grid_validation() {
        assert!(matches!(fibonacci_sphere(0), Err(Error::EmptyGrid)));
        assert!(matches!(
            Grid::sphere(vec![[1.0, 1.0, 0.0]]),
            Err(Error::InvalidPoint { index: 0, .. })
        ));
        assert!(Grid::torus(vec![[7.0, 0.0]]).is_err());
        assert_eq!(torus_lattice(8).unwrap().len(), 64);
    }
}

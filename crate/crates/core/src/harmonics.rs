//! Legendre polynomials and real orthonormal spherical harmonics on S² with
//! analytic gradients.
//!
//! Harmonics of degree `l` are ordered `Y_l^0, Y_l^{1,c}, Y_l^{1,s}, …,
//! Y_l^{l,c}, Y_l^{l,s}` where `Y^{m,c} = √2 P̄_l^m(cos θ) cos mφ` and
//! `Y^{m,s} = √2 P̄_l^m(cos θ) sin mφ`, with `P̄` the fully normalized
//! associated Legendre functions (Condon-Shortley phase included).
//!
//! Gradients are returned in the `(θ̂, φ̂)` frame. The φ-derivative is
//! carried by `Q̄_l^m = P̄_l^m / sin θ`, which obeys the same recurrence as
//! `P̄` and stays finite at the poles, so no special pole handling is needed.

use std::f64::consts::PI;

use crate::error::{invalid, Result};

const CLAMP: f64 = 1e-12;

/// Legendre polynomial `P_m(t)` by the three-term recurrence.
pub fn legendre(m: usize, t: f64) -> Result<f64> {
    let t = clamp_unit(t)?;
    Ok(legendre_unchecked(m, t))
}

/// `P_0(t), …, P_max(t)`.
pub fn legendre_all(max: usize, t: f64) -> Result<Vec<f64>> {
    let t = clamp_unit(t)?;
    let mut out = Vec::with_capacity(max + 1);
    out.push(1.0);
    if max >= 1 {
        out.push(t);
    }
    for l in 2..=max {
        let lf = l as f64;
        let next = ((2.0 * lf - 1.0) * t * out[l - 1] - (lf - 1.0) * out[l - 2]) / lf;
        out.push(next);
    }
    Ok(out)
}

fn legendre_unchecked(m: usize, t: f64) -> f64 {
    if m == 0 {
        return 1.0;
    }
    let (mut p0, mut p1) = (1.0, t);
    for l in 2..=m {
        let lf = l as f64;
        let p2 = ((2.0 * lf - 1.0) * t * p1 - (lf - 1.0) * p0) / lf;
        p0 = p1;
        p1 = p2;
    }
    p1
}

fn clamp_unit(t: f64) -> Result<f64> {
    if !t.is_finite() || t.abs() > 1.0 + CLAMP {
        return Err(invalid("t", format!("{t} lies outside [-1, 1]")));
    }
    Ok(t.clamp(-1.0, 1.0))
}

/// Number of real harmonics with `1 ≤ l ≤ lmax`.
pub fn mode_count(lmax: usize) -> usize {
    (lmax + 1) * (lmax + 1) - 1
}

/// Offset of degree `l ≥ 1` in the flattened mode list.
pub fn level_offset(l: usize) -> usize {
    l * l - 1
}

/// Values (and optionally gradients) of all real harmonics `1 ≤ l ≤ lmax` at
/// one point.
#[derive(Debug, Clone)]
pub struct HarmonicValues {
    pub values: Vec<f64>,
    pub grad_theta: Vec<f64>,
    pub grad_phi: Vec<f64>,
}

/// Spherical coordinates `(cos θ, sin θ, φ)` of a unit vector.
pub fn spherical_coords(p: [f64; 3]) -> (f64, f64, f64) {
    let rho = p[0].hypot(p[1]);
    let r = rho.hypot(p[2]);
    let phi = if rho > 0.0 { p[1].atan2(p[0]) } else { 0.0 };
    (p[2] / r, rho / r, phi)
}

/// Evaluates the real harmonics of degree `1..=lmax` at the unit vector `p`.
pub fn real_harmonics(lmax: usize, p: [f64; 3], gradients: bool) -> HarmonicValues {
    let (x, s, phi) = spherical_coords(p);
    let n = mode_count(lmax);
    let mut out = HarmonicValues {
        values: vec![0.0; n],
        grad_theta: if gradients { vec![0.0; n] } else { Vec::new() },
        grad_phi: if gradients { vec![0.0; n] } else { Vec::new() },
    };
    if lmax == 0 {
        return out;
    }

    // Zonal part: P̄_l^0, needed up to lmax; its θ-derivative uses P̄_l^1.
    let mut zonal = vec![0.0; lmax + 1];
    zonal[0] = 1.0 / (4.0 * PI).sqrt();
    zonal[1] = 3f64.sqrt() * x * zonal[0];
    for l in 2..=lmax {
        let (a, b) = recurrence(l, 0);
        zonal[l] = a * (x * zonal[l - 1] - b * zonal[l - 2]);
    }

    // q[m][l - m] = Q̄_l^m for m ≥ 1.
    let mut q: Vec<Vec<f64>> = Vec::with_capacity(lmax + 1);
    q.push(Vec::new());
    let mut diag_p = zonal[0]; // P̄_{m-1}^{m-1}
    for m in 1..=lmax {
        let mf = m as f64;
        let q_mm = -((2.0 * mf + 1.0) / (2.0 * mf)).sqrt() * diag_p;
        let mut col = Vec::with_capacity(lmax - m + 1);
        col.push(q_mm);
        if m < lmax {
            col.push((2.0 * mf + 3.0).sqrt() * x * q_mm);
        }
        for l in (m + 2)..=lmax {
            let (a, b) = recurrence(l, m);
            let k = l - m;
            col.push(a * (x * col[k - 1] - b * col[k - 2]));
        }
        diag_p = q_mm * s;
        q.push(col);
    }

    let sqrt2 = 2f64.sqrt();
    for l in 1..=lmax {
        let lf = l as f64;
        let base = level_offset(l);
        out.values[base] = zonal[l];
        if gradients {
            out.grad_theta[base] = (lf * (lf + 1.0)).sqrt() * s * q[1][l - 1];
            out.grad_phi[base] = 0.0;
        }
        for m in 1..=l {
            let mf = m as f64;
            let ql = q[m][l - m];
            let p = ql * s;
            let (sin_m, cos_m) = (mf * phi).sin_cos();
            let ic = base + 2 * m - 1;
            out.values[ic] = sqrt2 * p * cos_m;
            out.values[ic + 1] = sqrt2 * p * sin_m;
            if gradients {
                let q_prev = if l > m { q[m][l - 1 - m] } else { 0.0 };
                let coef = ((2.0 * lf + 1.0) * (lf * lf - mf * mf) / (2.0 * lf - 1.0)).sqrt();
                let dp = lf * x * ql - coef * q_prev;
                out.grad_theta[ic] = sqrt2 * dp * cos_m;
                out.grad_theta[ic + 1] = sqrt2 * dp * sin_m;
                out.grad_phi[ic] = -sqrt2 * mf * ql * sin_m;
                out.grad_phi[ic + 1] = sqrt2 * mf * ql * cos_m;
            }
        }
    }
    out
}

/// Coefficients of `P̄_l^m = a (x P̄_{l-1}^m - b P̄_{l-2}^m)`.
fn recurrence(l: usize, m: usize) -> (f64, f64) {
    let lf = l as f64;
    let mf = m as f64;
    let a = ((4.0 * lf * lf - 1.0) / (lf * lf - mf * mf)).sqrt();
    let lp = lf - 1.0;
    let b = ((lp * lp - mf * mf) / (4.0 * lp * lp - 1.0)).sqrt();
    (a, b)
}

/// Unit vector at polar angle `theta`, azimuth `phi`.
pub fn unit_vector(theta: f64, phi: f64) -> [f64; 3] {
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    [st * cp, st * sp, ct]
}

/// Great-circle distance between unit vectors.
pub fn sphere_distance(p: [f64; 3], q: [f64; 3]) -> f64 {
    let cross = [
        p[1] * q[2] - p[2] * q[1],
        p[2] * q[0] - p[0] * q[2],
        p[0] * q[1] - p[1] * q[0],
    ];
    let sin = (cross[0].powi(2) + cross[1].powi(2) + cross[2].powi(2)).sqrt();
    let cos = p[0] * q[0] + p[1] * q[1] + p[2] * q[2];
    sin.atan2(cos)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_unit(rng: &mut ChaCha8Rng) -> [f64; 3] {
        let z: f64 = rng.random_range(-1.0..1.0);
        let phi: f64 = rng.random_range(0.0..2.0 * PI);
        let r = (1.0 - z * z).sqrt();
        [r * phi.cos(), r * phi.sin(), z]
    }

    #[test]
    fn legendre_examples() {
        assert!((legendre(2, 0.5).unwrap() + 0.125).abs() < 1e-15);
        assert_eq!(legendre(7, 1.0).unwrap(), 1.0);
        assert_eq!(legendre(5, -1.0).unwrap(), -1.0);
        assert_eq!(legendre(0, 0.3).unwrap(), 1.0);
        assert_eq!(legendre(4, 1.0 + 1e-13).unwrap(), 1.0);
        assert!(legendre(3, 1.1).is_err());
        assert!(legendre(3, f64::NAN).is_err());
    }

    #[test]
    fn legendre_all_matches_single() {
        let all = legendre_all(30, 0.37).unwrap();
        for (m, v) in all.iter().enumerate() {
            assert!((v - legendre(m, 0.37).unwrap()).abs() < 1e-14);
        }
    }

    #[test]
    fn low_degree_closed_forms() {
        let p = unit_vector(0.7, 1.3);
        let h = real_harmonics(2, p, false);
        let c1 = (3.0 / (4.0 * PI)).sqrt();
        assert!((h.values[0] - c1 * p[2]).abs() < 1e-14);
        // Condon-Shortley phase: Y_1^{1,c} = -√(3/4π) x
        assert!((h.values[1] + c1 * p[0]).abs() < 1e-14);
        assert!((h.values[2] + c1 * p[1]).abs() < 1e-14);
        let c20 = (5.0 / (16.0 * PI)).sqrt();
        assert!((h.values[3] - c20 * (3.0 * p[2] * p[2] - 1.0)).abs() < 1e-14);
    }

    #[test]
    fn addition_theorem_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let lmax = 20;
        for _ in 0..100 {
            let p = random_unit(&mut rng);
            let q = random_unit(&mut rng);
            let hp = real_harmonics(lmax, p, false);
            let hq = real_harmonics(lmax, q, false);
            let t = p[0] * q[0] + p[1] * q[1] + p[2] * q[2];
            for l in 1..=lmax {
                let base = level_offset(l);
                let sum: f64 = (0..2 * l + 1)
                    .map(|k| hp.values[base + k] * hq.values[base + k])
                    .sum();
                let expected = (2 * l + 1) as f64 / (4.0 * PI) * legendre(l, t).unwrap();
                assert!((sum - expected).abs() < 1e-10, "l={l}: {sum} vs {expected}");
            }
        }
    }

    #[test]
    fn gradient_addition_theorem() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let lmax = 20;
        let mut pts: Vec<[f64; 3]> = (0..50).map(|_| random_unit(&mut rng)).collect();
        pts.push([0.0, 0.0, 1.0]);
        pts.push([0.0, 0.0, -1.0]);
        for p in pts {
            let h = real_harmonics(lmax, p, true);
            for l in 1..=lmax {
                let base = level_offset(l);
                let sum: f64 = (0..2 * l + 1)
                    .map(|k| h.grad_theta[base + k].powi(2) + h.grad_phi[base + k].powi(2))
                    .sum();
                let lf = l as f64;
                let expected = (2.0 * lf + 1.0) * lf * (lf + 1.0) / (4.0 * PI);
                assert!((sum - expected).abs() < 1e-9 * expected, "l={l}");
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let lmax = 12;
        let eps = 1e-6;
        for &(theta, phi) in &[(0.4, 0.9), (1.7, -2.2), (2.9, 3.0)] {
            let h = real_harmonics(lmax, unit_vector(theta, phi), true);
            let tp = real_harmonics(lmax, unit_vector(theta + eps, phi), false);
            let tm = real_harmonics(lmax, unit_vector(theta - eps, phi), false);
            let pp = real_harmonics(lmax, unit_vector(theta, phi + eps), false);
            let pm = real_harmonics(lmax, unit_vector(theta, phi - eps), false);
            for i in 0..mode_count(lmax) {
                let dt = (tp.values[i] - tm.values[i]) / (2.0 * eps);
                let dp = (pp.values[i] - pm.values[i]) / (2.0 * eps * theta.sin());
                assert!((dt - h.grad_theta[i]).abs() < 1e-6, "θ mode {i}");
                assert!((dp - h.grad_phi[i]).abs() < 1e-6, "φ mode {i}");
            }
        }
    }

    #[test]
    fn orthonormal_under_quadrature() {
        // Gauss-Legendre in cos θ times a uniform φ rule integrates degree ≤ 2·lmax exactly.
        let lmax = 6;
        let nt = 16;
        let np = 32;
        let (nodes, weights) = gauss_legendre(nt);
        let n = mode_count(lmax);
        let mut gram = vec![0.0; n * n];
        for (&x, &w) in nodes.iter().zip(&weights) {
            for j in 0..np {
                let phi = 2.0 * PI * j as f64 / np as f64;
                let theta = x.acos();
                let h = real_harmonics(lmax, unit_vector(theta, phi), false);
                let wt = w * 2.0 * PI / np as f64;
                for a in 0..n {
                    for b in 0..n {
                        gram[a * n + b] += wt * h.values[a] * h.values[b];
                    }
                }
            }
        }
        for a in 0..n {
            for b in 0..n {
                let expected = if a == b { 1.0 } else { 0.0 };
                assert!((gram[a * n + b] - expected).abs() < 1e-12);
            }
        }
    }

    fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
        let mut nodes = Vec::with_capacity(n);
        let mut weights = Vec::with_capacity(n);
        for i in 0..n {
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            for _ in 0..100 {
                let p = legendre_unchecked(n, x);
                let pm = legendre_unchecked(n - 1, x);
                let dp = n as f64 * (x * p - pm) / (x * x - 1.0);
                let dx = p / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let pm = legendre_unchecked(n - 1, x);
            let p = legendre_unchecked(n, x);
            let dp = n as f64 * (x * p - pm) / (x * x - 1.0);
            nodes.push(x);
            weights.push(2.0 / ((1.0 - x * x) * dp * dp));
        }
        (nodes, weights)
    }

    #[test]
    fn distance_is_symmetric() {
        let p = unit_vector(0.3, 0.2);
        let q = unit_vector(2.0, -1.0);
        assert!((sphere_distance(p, q) - sphere_distance(q, p)).abs() < 1e-15);
        assert!((sphere_distance(p, [-p[0], -p[1], -p[2]]) - PI).abs() < 1e-12);
    }
}

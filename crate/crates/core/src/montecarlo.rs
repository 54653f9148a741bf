//! Parallel draw loop.
//!
//! Draws are processed in fixed blocks of [`BATCH`] consecutive indices, so
//! every block (and every floating-point reduction inside it) is identical
//! whatever the worker count. Results come back in draw order.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Result};

/// Draws per synthesis block.
pub const BATCH: usize = 64;

/// Runs `work(first_draw, count)` over `0..n_samples` in blocks and returns
/// the block results in order.
pub fn map_batches<T, F>(n_samples: u64, workers: usize, work: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64, usize) -> T + Sync,
{
    if workers == 0 {
        return Err(invalid("workers", "at least one worker is required"));
    }
    let blocks = n_samples.div_ceil(BATCH as u64);
    let run = || {
        (0..blocks)
            .into_par_iter()
            .map(|b| {
                let first = b * BATCH as u64;
                let count = (n_samples - first).min(BATCH as u64) as usize;
                work(first, count)
            })
            .collect()
    };
    if workers == 1 {
        return Ok((0..blocks)
            .map(|b| {
                let first = b * BATCH as u64;
                work(first, (n_samples - first).min(BATCH as u64) as usize)
            })
            .collect());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| invalid("workers", e.to_string()))?;
    Ok(pool.install(run))
}

/// Binomial proportion with its standard error `√(p̂(1-p̂)/N)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Proportion {
    pub hits: u64,
    pub n: u64,
    pub estimate: f64,
    pub standard_error: f64,
}

impl Proportion {
    pub fn new(hits: u64, n: u64) -> Self {
        let p = if n == 0 { 0.0 } else { hits as f64 / n as f64 };
        Proportion {
            hits,
            n,
            estimate: p,
            standard_error: if n == 0 { 0.0 } else { (p * (1.0 - p) / n as f64).sqrt() },
        }
    }
}

/// Running mean and variance.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Moments {
    pub n: u64,
    pub mean: f64,
    m2: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(&mut self, other: &Moments) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        self.mean += d * other.n as f64 / n as f64;
        self.m2 += other.m2 + d * d * (self.n as f64) * (other.n as f64) / n as f64;
        self.n = n;
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    pub fn standard_error(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            (self.variance() / self.n as f64).sqrt()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blocks_cover_every_draw_in_order() {
        for workers in [1, 3] {
            let out = map_batches(200, workers, |first, count| (first, count)).unwrap();
            assert_eq!(out.len(), 4);
            assert_eq!(out[3], (192, 8));
            let total: usize = out.iter().map(|b| b.1).sum();
            assert_eq!(total, 200);
        }
        assert!(map_batches(10, 0, |_, _| ()).is_err());
    }

    #[test]
    fn moments_merge_matches_sequential() {
        let xs: Vec<f64> = (0..100).map(|i| (i as f64).sin()).collect();
        let mut all = Moments::default();
        xs.iter().for_each(|&x| all.push(x));
        let mut a = Moments::default();
        let mut b = Moments::default();
        xs[..37].iter().for_each(|&x| a.push(x));
        xs[37..].iter().for_each(|&x| b.push(x));
        a.merge(&b);
        assert!((a.mean - all.mean).abs() < 1e-14);
        assert!((a.variance() - all.variance()).abs() < 1e-14);
    }

    #[test]
    fn proportion_standard_error() {
        let p = Proportion::new(25, 100);
        assert_eq!(p.estimate, 0.25);
        assert!((p.standard_error - (0.25f64 * 0.75 / 100.0).sqrt()).abs() < 1e-16);
    }
}

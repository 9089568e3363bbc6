//! Seeded quasi-random sample sets (Halton points with a Cranley–Patterson shift).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const PRIMES: [u64; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

fn radical_inverse(mut index: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while index > 0 {
        r += f * (index % base) as f64;
        index /= base;
        f *= inv;
    }
    r
}

/// A shifted Halton sequence in the unit cube `[0, 1)^dim`.
#[derive(Debug, Clone)]
pub struct QuasiRandom {
    shifts: Vec<f64>,
    index: u64,
}

impl QuasiRandom {
    /// `dim` must not exceed 16.
    pub fn new(dim: usize, seed: u64) -> Self {
        assert!(dim <= PRIMES.len(), "quasi-random dimension {dim} exceeds 16");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shifts = (0..dim)
            .map(|_| if seed == 0 { 0.0 } else { rng.random::<f64>() })
            .collect();
        Self { shifts, index: 1 }
    }

    pub fn next_point(&mut self) -> Vec<f64> {
        let i = self.index;
        self.index += 1;
        self.shifts
            .iter()
            .zip(PRIMES)
            .map(|(s, p)| (radical_inverse(i, p) + s).fract())
            .collect()
    }
}

/// `count` points in the shell `r_min <= |q| <= r_max` of ℝ^dim, uniform in volume.
pub fn annulus(dim: usize, count: usize, r_min: f64, r_max: f64, seed: u64) -> Vec<Vec<f64>> {
    assert!(dim >= 1 && r_min >= 0.0 && r_max >= r_min);
    let gauss_pairs = dim.div_ceil(2);
    let cube_dim = 1 + if dim <= 2 { 1 } else { 2 * gauss_pairs };
    let mut seq = QuasiRandom::new(cube_dim, seed);
    let n = dim as f64;
    let (lo, hi) = (r_min.powf(n), r_max.powf(n));
    (0..count)
        .map(|_| {
            let u = seq.next_point();
            let r = (lo + u[0] * (hi - lo)).powf(1.0 / n);
            let dir: Vec<f64> = match dim {
                1 => vec![if u[1] < 0.5 { -1.0 } else { 1.0 }],
                2 => {
                    let a = 2.0 * std::f64::consts::PI * u[1];
                    vec![a.cos(), a.sin()]
                }
                _ => {
                    let mut g = Vec::with_capacity(2 * gauss_pairs);
                    for k in 0..gauss_pairs {
                        let u1 = u[1 + 2 * k].max(1e-12);
                        let u2 = u[2 + 2 * k];
                        let rad = (-2.0 * u1.ln()).sqrt();
                        let a = 2.0 * std::f64::consts::PI * u2;
                        g.push(rad * a.cos());
                        g.push(rad * a.sin());
                    }
                    g.truncate(dim);
                    let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-300);
                    g.into_iter().map(|x| x / norm).collect()
                }
            };
            dir.into_iter().map(|d| r * d).collect()
        })
        .collect()
}

/// `count` points in the axis-aligned box given by per-coordinate `(lo, hi)` bounds.
pub fn in_box(bounds: &[(f64, f64)], count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut seq = QuasiRandom::new(bounds.len(), seed);
    (0..count)
        .map(|_| {
            seq.next_point()
                .into_iter()
                .zip(bounds)
                .map(|(u, (lo, hi))| lo + u * (hi - lo))
                .collect()
        })
        .collect()
}

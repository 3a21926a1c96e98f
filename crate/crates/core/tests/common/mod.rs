#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use poolcast::data::HOURS;
use poolcast::pool::ForecastPool;
use rand_core::{Rng, SeedableRng};
use rand_pcg::Pcg64;

pub struct Draws(Pcg64);

impl Draws {
    pub fn new(seed: u64) -> Self {
        Draws(Pcg64::seed_from_u64(seed))
    }

    pub fn uniform(&mut self) -> f64 {
        ((self.0.next_u64() >> 11) as f64 + 0.5) / (1u64 << 53) as f64
    }

    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn below(&mut self, n: usize) -> usize {
        (self.uniform() * n as f64) as usize
    }

    pub fn normal(&mut self) -> f64 {
        let (u, v) = (self.uniform(), self.uniform());
        (-2.0 * u.ln()).sqrt() * (2.0 * std::f64::consts::PI * v).cos()
    }

    pub fn matrix(&mut self, n: usize, p: usize) -> DMatrix<f64> {
        DMatrix::from_fn(n, p, |_, _| self.normal())
    }

    pub fn vector(&mut self, n: usize) -> DVector<f64> {
        DVector::from_fn(n, |_, _| self.normal())
    }
}

/// Pool whose columns are the actuals plus a few shared factors and noise,
/// mimicking forecasts from neighbouring calibration windows.
pub fn factor_pool(days: usize, windows: usize, seed: u64) -> ForecastPool {
    let mut r = Draws::new(seed);
    let rows = days * HOURS;
    let actual: Vec<f64> = (0..rows)
        .map(|t| 45.0 + 10.0 * (t as f64 * std::f64::consts::PI / 12.0).sin() + 3.0 * r.normal())
        .collect();
    let factors: Vec<[f64; 3]> = (0..rows).map(|_| [r.normal(), r.normal(), r.normal()]).collect();
    let loads: Vec<[f64; 3]> = (0..windows)
        .map(|j| {
            let s = j as f64 / windows as f64;
            [2.0 * (1.0 - s), 1.5 * s, 0.5 * (s * 6.0).sin()]
        })
        .collect();
    let mut values = Vec::with_capacity(rows * windows);
    for t in 0..rows {
        for l in &loads {
            let f = &factors[t];
            values.push(actual[t] + l[0] * f[0] + l[1] * f[1] + l[2] * f[2] + 0.3 * r.normal());
        }
    }
    ForecastPool::new(0, (1..=windows).map(|w| 7 * w).collect(), values, actual).unwrap()
}

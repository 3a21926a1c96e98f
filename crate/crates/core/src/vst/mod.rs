//! N-PIT variance-stabilizing transform.
//!
//! A series is mapped through its in-sample empirical CDF and then the
//! standard normal quantile function, which tames price spikes before the
//! linear model sees them. Forecasts are mapped back with the inverse pair.
//!
//! The empirical CDF uses plotting positions `rank / (n + 1)` with tied
//! values sharing their average rank. Between distinct sample values the CDF
//! is interpolated linearly; outside the sample it is clamped to `1 / (n + 1)`
//! and `n / (n + 1)`. The inverse interpolates the same knots, so
//! `inverse(forward(y)) == y` for any `y` inside the sample range.

mod normal;

pub use normal::{normal_cdf, normal_quantile};

use crate::error::{Error, Result};

/// Fitted transform for one variable.
#[derive(Clone, Debug, PartialEq)]
pub struct VstMap {
    sorted: Vec<f64>,
}

impl VstMap {
    /// Fits the transform on an in-sample vector.
    pub fn fit(sample: &[f64]) -> Result<Self> {
        if sample.len() < 2 {
            return Err(Error::Fit(format!(
                "transform needs at least 2 observations, got {}",
                sample.len()
            )));
        }
        if let Some(bad) = sample.iter().find(|v| !v.is_finite()) {
            return Err(Error::Fit(format!("non-finite in-sample value {bad}")));
        }
        let mut sorted = sample.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(VstMap { sorted })
    }

    pub fn sorted_sample(&self) -> &[f64] {
        &self.sorted
    }

    pub fn n(&self) -> usize {
        self.sorted.len()
    }

    pub fn as_view(&self) -> VstView<'_> {
        VstView(&self.sorted)
    }

    pub fn forward(&self, y: f64) -> f64 {
        self.as_view().forward(y)
    }

    pub fn inverse(&self, z: f64) -> f64 {
        self.as_view().inverse(z)
    }
}

/// Plotting position of the tie group occupying 1-based ranks
/// `first..=last` in a sample of `n`, mapped to the normal scale.
///
/// Every code path that transforms an in-sample value goes through this
/// expression so that results agree bit for bit.
#[inline]
pub(crate) fn group_quantile(first: usize, last: usize, n: usize) -> f64 {
    normal_quantile(group_position(first, last, n))
}

#[inline]
fn group_position(first: usize, last: usize, n: usize) -> f64 {
    ((first + last) as f64 * 0.5) / (n + 1) as f64
}

/// Borrowed transform over a sorted sample.
#[derive(Clone, Copy, Debug)]
pub struct VstView<'a>(pub(crate) &'a [f64]);

impl VstView<'_> {
    fn n(&self) -> usize {
        self.0.len()
    }

    /// 1-based rank range of the tie group holding the value at 0-based
    /// index `i`.
    fn group_of(&self, i: usize) -> (usize, usize) {
        let v = self.0[i];
        let lo = self.0.partition_point(|&x| x < v);
        let hi = self.0.partition_point(|&x| x <= v);
        (lo + 1, hi)
    }

    /// Empirical CDF at `y` on the plotting-position scale.
    pub fn position(&self, y: f64) -> f64 {
        let n = self.n();
        let s = self.0;
        if y < s[0] {
            return 1.0 / (n + 1) as f64;
        }
        if y > s[n - 1] {
            return n as f64 / (n + 1) as f64;
        }
        let lo = s.partition_point(|&x| x < y);
        if s[lo] == y {
            let hi = s.partition_point(|&x| x <= y);
            return group_position(lo + 1, hi, n);
        }
        // s[lo - 1] < y < s[lo]
        let (a_first, a_last) = self.group_of(lo - 1);
        let (b_first, b_last) = self.group_of(lo);
        let pa = group_position(a_first, a_last, n);
        let pb = group_position(b_first, b_last, n);
        let (a, b) = (s[lo - 1], s[lo]);
        pa + (pb - pa) * (y - a) / (b - a)
    }

    pub fn forward(&self, y: f64) -> f64 {
        let n = self.n();
        let s = self.0;
        if y >= s[0] && y <= s[n - 1] {
            let lo = s.partition_point(|&x| x < y);
            if s[lo] == y {
                let hi = s.partition_point(|&x| x <= y);
                return group_quantile(lo + 1, hi, n);
            }
        }
        normal_quantile(self.position(y))
    }

    /// Maps a normal-scale value back to the original units, clamped to the
    /// sample range.
    pub fn inverse(&self, z: f64) -> f64 {
        let n = self.n();
        let s = self.0;
        // rank on the 1-based scale
        let r = normal_cdf(z) * (n + 1) as f64;
        let (f_first, f_last) = self.group_of(0);
        let (l_first, l_last) = self.group_of(n - 1);
        let r_min = (f_first + f_last) as f64 * 0.5;
        let r_max = (l_first + l_last) as f64 * 0.5;
        if !(r > r_min) {
            return s[0];
        }
        if !(r < r_max) {
            return s[n - 1];
        }
        let k = (r.floor() as usize).clamp(1, n);
        let (first, last) = self.group_of(k - 1);
        let mid = (first + last) as f64 * 0.5;
        let (r0, v0, r1, v1) = if r >= mid {
            let (nf, nl) = self.group_of(last);
            (mid, s[k - 1], (nf + nl) as f64 * 0.5, s[last])
        } else {
            let (pf, pl) = self.group_of(first - 2);
            ((pf + pl) as f64 * 0.5, s[first - 2], mid, s[k - 1])
        };
        if r == r0 {
            return v0;
        }
        v0 + (v1 - v0) * (r - r0) / (r1 - r0)
    }
}

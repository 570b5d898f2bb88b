use rand::Rng;

use super::normal::{norm_cdf, norm_sf, quantile_unchecked};
use crate::error::{Error, Result};

// Beyond this many standard deviations the tail mass underflows the
// inverse-CDF route and an exponential rejection kernel takes over.
const REJECTION_THRESHOLD: f64 = 30.0;

/// Draws from `N(mean, sd^2)` restricted to `(lo, hi)`.
pub fn sample_truncated_normal<R: Rng + ?Sized>(
    mean: f64,
    sd: f64,
    lo: f64,
    hi: f64,
    rng: &mut R,
) -> Result<f64> {
    if !(lo < hi) {
        return Err(Error::EmptyInterval { lo, hi });
    }
    if !(sd > 0.0) || !sd.is_finite() || !mean.is_finite() {
        return Err(Error::InvalidParams(format!(
            "truncated normal needs finite mean and positive sd, got ({mean}, {sd})"
        )));
    }
    let z = sample_standard_truncated((lo - mean) / sd, (hi - mean) / sd, rng);
    Ok(clamp_open(mean + sd * z, lo, hi))
}

/// Standard normal restricted to `(a, b)`, `a < b`.
pub(crate) fn sample_standard_truncated<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> f64 {
    let z = if a >= 0.0 {
        upper_tail(a, b, rng)
    } else if b <= 0.0 {
        -upper_tail(-b, -a, rng)
    } else {
        // straddles zero: invert through whichever tail the target lies in
        let lower_mass = norm_cdf(a);
        let mass = norm_cdf(b) - lower_mass;
        let u: f64 = rng.random();
        let target = lower_mass + u * mass;
        if target < 0.5 {
            quantile_unchecked(target)
        } else {
            -quantile_unchecked(norm_sf(b) + (1.0 - u) * mass)
        }
    };
    clamp_open(z, a, b)
}

fn upper_tail<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> f64 {
    if a > REJECTION_THRESHOLD {
        return exponential_rejection(a, b, rng);
    }
    let qa = norm_sf(a);
    let qb = norm_sf(b);
    let u: f64 = rng.random();
    let q = qb + u * (qa - qb);
    if q <= 0.0 {
        return a;
    }
    -quantile_unchecked(q)
}

// Robert (1995): translated exponential proposal, truncated to (a, b).
fn exponential_rejection<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> f64 {
    let rate = 0.5 * (a + (a * a + 4.0).sqrt());
    let width_mass = if b.is_finite() { -(-rate * (b - a)).exp_m1() } else { 1.0 };
    loop {
        let u: f64 = rng.random();
        let z = a - (-u * width_mass).ln_1p() / rate;
        let accept: f64 = rng.random();
        if accept <= (-0.5 * (z - rate) * (z - rate)).exp() {
            return z;
        }
    }
}

fn clamp_open(x: f64, lo: f64, hi: f64) -> f64 {
    let lo_in = lo.next_up();
    let hi_in = hi.next_down();
    if lo_in > hi_in {
        return 0.5 * (lo + hi);
    }
    x.clamp(lo_in, hi_in)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn draws(a: f64, b: f64, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = stream(seed);
        (0..n)
            .map(|_| sample_truncated_normal(0.0, 1.0, a, b, &mut rng).unwrap())
            .collect()
    }

    fn mean(v: &[f64]) -> f64 {
        v.iter().sum::<f64>() / v.len() as f64
    }

    #[test]
    fn untruncated_mean_is_zero() {
        let v = draws(f64::NEG_INFINITY, f64::INFINITY, 100_000, 1);
        assert!(mean(&v).abs() < 0.02);
    }

    #[test]
    fn half_normal_mean() {
        let v = draws(0.0, f64::INFINITY, 100_000, 2);
        assert!((mean(&v) - (2.0 / std::f64::consts::PI).sqrt()).abs() < 0.02);
        assert!(v.iter().all(|&x| x > 0.0));
    }

    #[test]
    fn far_tail_support() {
        let v = draws(8.0, 9.0, 10_000, 3);
        assert!(v.iter().all(|&x| x > 8.0 && x < 9.0));
        let v = draws(-9.0, -8.0, 1000, 4);
        assert!(v.iter().all(|&x| x > -9.0 && x < -8.0));
        let v = draws(40.0, f64::INFINITY, 1000, 5);
        assert!(v.iter().all(|&x| x > 40.0 && x < 41.0));
        let v = draws(40.0, 40.001, 1000, 6);
        assert!(v.iter().all(|&x| x > 40.0 && x < 40.001));
    }

    #[test]
    fn scaled_and_shifted() {
        let mut rng = stream(7);
        for _ in 0..1000 {
            let x = sample_truncated_normal(3.0, 0.5, 2.9, 2.9000001, &mut rng).unwrap();
            assert!(x > 2.9 && x < 2.9000001);
        }
    }

    #[test]
    fn rejects_empty_interval() {
        let mut rng = stream(0);
        assert!(sample_truncated_normal(0.0, 1.0, 1.0, 1.0, &mut rng).is_err());
        assert!(sample_truncated_normal(0.0, 1.0, 2.0, 1.0, &mut rng).is_err());
        assert!(sample_truncated_normal(0.0, 0.0, 0.0, 1.0, &mut rng).is_err());
    }
}

use std::f64::consts::PI;

use super::normal::norm_cdf;
use crate::error::{Error, Result};

/// Largest admissible `|rho|`.
pub const MAX_ABS_RHO: f64 = 1.0 - 1e-10;

const QUAD_TOL: f64 = 1e-11;
const MAX_DEPTH: u32 = 40;

/// Bivariate standard normal CDF `P(X <= x, Y <= y)` with correlation `rho`.
///
/// Integrates `d/d rho Phi2 = phi2(x, y; rho)` from the independent baseline
/// `Phi(x) Phi(y)`. With `rho = sin(theta)` the integrand becomes
/// `exp(-(x^2 + y^2 - 2 x y sin theta) / (2 cos^2 theta)) / (2 pi)`, which is
/// bounded and smooth on `[0, asin rho]`, and is integrated by adaptive
/// Gauss-Kronrod quadrature. Negative `rho` is reflected through
/// `Phi2(x, y; rho) = Phi(x) - Phi2(x, -y; -rho)`.
pub fn bivariate_norm_cdf(x: f64, y: f64, rho: f64) -> Result<f64> {
    if !(rho.abs() <= MAX_ABS_RHO) {
        return Err(Error::CorrelationOutOfRange(rho));
    }
    Ok(bivariate_norm_cdf_unchecked(x, y, rho))
}

pub(crate) fn bivariate_norm_cdf_unchecked(x: f64, y: f64, rho: f64) -> f64 {
    // fixed argument order keeps the reflection below exactly symmetric
    let (x, y) = if y < x { (y, x) } else { (x, y) };
    if x == f64::NEG_INFINITY || y == f64::NEG_INFINITY {
        return 0.0;
    }
    if x == f64::INFINITY {
        return norm_cdf(y);
    }
    if y == f64::INFINITY {
        return norm_cdf(x);
    }
    let base = norm_cdf(x) * norm_cdf(y);
    if rho == 0.0 {
        return base;
    }
    if rho < 0.0 {
        return (norm_cdf(x) - bivariate_norm_cdf_unchecked(x, -y, -rho)).clamp(0.0, 1.0);
    }
    // x^2 + y^2 - 2xy sin = (x - y)^2 + 2xy cos^2 / (1 + sin), free of
    // cancellation as theta approaches pi/2
    let diff2 = (x - y) * (x - y);
    let xy = x * y;
    let integrand = |theta: f64| {
        let (s, c) = theta.sin_cos();
        let c2 = c * c;
        let near = if diff2 == 0.0 { 0.0 } else { diff2 / (2.0 * c2) };
        (-(near + xy / (1.0 + s))).exp()
    };
    let upper = rho.asin();
    let integral = adaptive_gauss_kronrod(&integrand, 0.0, upper, QUAD_TOL, MAX_DEPTH);
    (base + integral / (2.0 * PI)).clamp(0.0, 1.0)
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
// Gauss weights for XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gauss_kronrod_15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for i in 0..7 {
        let dx = half * XGK[i];
        let pair = f(center - dx) + f(center + dx);
        kronrod += WGK[i] * pair;
        if i % 2 == 1 {
            gauss += WG[i / 2] * pair;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

fn adaptive_gauss_kronrod<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    let (value, err) = gauss_kronrod_15(f, a, b);
    // below the rounding level of the estimate no split can help
    if err <= tol.max(64.0 * f64::EPSILON * value.abs()) || depth == 0 {
        return value;
    }
    let mid = 0.5 * (a + b);
    adaptive_gauss_kronrod(f, a, mid, 0.5 * tol, depth - 1)
        + adaptive_gauss_kronrod(f, mid, b, 0.5 * tol, depth - 1)
}

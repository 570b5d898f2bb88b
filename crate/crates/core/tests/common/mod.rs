#![allow(dead_code)]

use std::f64::consts::{PI, SQRT_2};

use nalgebra::DMatrix;

pub fn phi(x: f64) -> f64 {
    0.5 * libm::erfc(-x / SQRT_2)
}

pub fn phi_upper(x: f64) -> f64 {
    0.5 * libm::erfc(x / SQRT_2)
}

const GL6: ([f64; 3], [f64; 3]) = (
    [0.171_324_492_379_170_5, 0.360_761_573_048_138_4, 0.467_913_934_572_690_4],
    [0.932_469_514_203_152_2, 0.661_209_386_466_264_7, 0.238_619_186_083_197],
);
const GL12: ([f64; 6], [f64; 6]) = (
    [
        0.047_175_336_386_511_77,
        0.106_939_325_995_318_3,
        0.160_078_328_543_346_4,
        0.203_167_426_723_065_9,
        0.233_492_536_538_354_7,
        0.249_147_045_813_402_9,
    ],
    [
        0.981_560_634_246_719_1,
        0.904_117_256_370_475,
        0.769_902_674_194_305,
        0.587_317_954_286_617_1,
        0.367_831_498_998_180_2,
        0.125_233_408_511_469_2,
    ],
);
const GL20: ([f64; 10], [f64; 10]) = (
    [
        0.017_614_007_139_152_12,
        0.040_601_429_800_386_94,
        0.062_672_048_334_109_06,
        0.083_276_741_576_704_75,
        0.101_930_119_817_240_4,
        0.118_194_531_961_518_4,
        0.131_688_638_449_176_6,
        0.142_096_109_318_382_1,
        0.149_172_986_472_603_7,
        0.152_753_387_130_725_9,
    ],
    [
        0.993_128_599_185_094_9,
        0.963_971_927_277_913_8,
        0.912_234_428_251_325_9,
        0.839_116_971_822_218_8,
        0.746_331_906_460_150_8,
        0.636_053_680_726_515,
        0.510_867_001_950_827_1,
        0.373_706_088_715_419_6,
        0.227_785_851_141_645_1,
        0.076_526_521_133_497_33,
    ],
);

/// Genz's BVNU (Drezner-Wesolowsky with Gauss-Legendre rules), returned as
/// the lower orthant probability `P(X <= x, Y <= y)`.
pub fn genz_bvn(x: f64, y: f64, r: f64) -> f64 {
    bvnu(-x, -y, r)
}

fn bvnu(h: f64, k: f64, r: f64) -> f64 {
    if h == f64::INFINITY || k == f64::INFINITY {
        return 0.0;
    }
    if h == f64::NEG_INFINITY {
        return if k == f64::NEG_INFINITY { 1.0 } else { phi(-k) };
    }
    if k == f64::NEG_INFINITY {
        return phi(-h);
    }
    if r == 0.0 {
        return phi(-h) * phi(-k);
    }
    let (w, x): (Vec<f64>, Vec<f64>) = if r.abs() < 0.3 {
        (GL6.0.to_vec(), GL6.1.to_vec())
    } else if r.abs() < 0.75 {
        (GL12.0.to_vec(), GL12.1.to_vec())
    } else {
        (GL20.0.to_vec(), GL20.1.to_vec())
    };
    let w: Vec<f64> = w.iter().chain(w.iter()).copied().collect();
    let x: Vec<f64> = x.iter().map(|v| 1.0 - v).chain(x.iter().map(|v| 1.0 + v)).collect();
    let tp = 2.0 * PI;
    let mut k = k;
    let mut hk = h * k;
    let mut bvn;
    if r.abs() < 0.925 {
        let hs = (h * h + k * k) / 2.0;
        let asr = r.asin() / 2.0;
        bvn = 0.0;
        for (xi, wi) in x.iter().zip(&w) {
            let sn = (asr * xi).sin();
            bvn += wi * ((sn * hk - hs) / (1.0 - sn * sn)).exp();
        }
        bvn = bvn * asr / tp + phi(-h) * phi(-k);
    } else {
        if r < 0.0 {
            k = -k;
            hk = -hk;
        }
        bvn = 0.0;
        if r.abs() < 1.0 {
            let a_s = 1.0 - r * r;
            let mut a = a_s.sqrt();
            let bs = (h - k) * (h - k);
            let c = (4.0 - hk) / 8.0;
            let d = (12.0 - hk) / 80.0;
            let asr = -(bs / a_s + hk) / 2.0;
            if asr > -100.0 {
                bvn = a * asr.exp() * (1.0 - c * (bs - a_s) * (1.0 - d * bs) / 3.0 + c * d * a_s * a_s);
            }
            if hk > -100.0 {
                let b = bs.sqrt();
                let sp = tp.sqrt() * phi(-b / a);
                bvn -= (-hk / 2.0).exp() * sp * b * (1.0 - c * bs * (1.0 - d * bs) / 3.0);
            }
            a /= 2.0;
            let mut sum = 0.0;
            for (xi, wi) in x.iter().zip(&w) {
                let xs = (a * xi).powi(2);
                let asr = -(bs / xs + hk) / 2.0;
                if asr > -100.0 {
                    let sp = 1.0 + c * xs * (1.0 + 5.0 * d * xs);
                    let rs = (1.0 - xs).sqrt();
                    let ep = (-(hk / 2.0) * xs / ((1.0 + rs) * (1.0 + rs))).exp() / rs;
                    sum += wi * asr.exp() * (sp - ep);
                }
            }
            bvn = (a * sum - bvn) / tp;
        }
        if r > 0.0 {
            bvn += phi(-h.max(k));
        } else if h >= k {
            bvn = -bvn;
        } else {
            let l = if h < 0.0 { phi(k) - phi(h) } else { phi(-h) - phi(-k) };
            bvn = l - bvn;
        }
    }
    bvn.clamp(0.0, 1.0)
}

/// Block covariance built entry by entry from the model definition.
pub fn model_covariance(sigma: &[f64], tau: &[f64], times: usize) -> DMatrix<f64> {
    let j = sigma.len();
    DMatrix::from_fn(j * times, j * times, |a, b| {
        let (ta, ja) = (a / j, a % j);
        let (tb, jb) = (b / j, b % j);
        if a == b {
            1.0
        } else if ta == tb {
            sigma[ja] * sigma[jb] + tau[ja] * tau[jb]
        } else {
            sigma[ja] * sigma[jb]
        }
    })
}

/// Two-sided Kolmogorov-Smirnov statistic of `sample` against `cdf`.
pub fn ks_statistic(sample: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    sample.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sample.len() as f64;
    sample
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Asymptotic critical value of `D_n` at level 0.001.
pub fn ks_critical_001(n: usize) -> f64 {
    1.9495 / (n as f64).sqrt()
}

/// CDF of the standard normal restricted to `(a, b)`.
pub fn truncated_cdf(a: f64, b: f64) -> impl Fn(f64) -> f64 {
    move |x: f64| {
        if a >= 0.0 {
            (phi_upper(a) - phi_upper(x)) / (phi_upper(a) - phi_upper(b))
        } else {
            (phi(x) - phi(a)) / (phi(b) - phi(a))
        }
    }
}

/// Canonical sign convention applied independently of the library.
pub fn canonical(sigma: &[f64], tau: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let flip = |v: &[f64]| -> Vec<f64> {
        let s: f64 = v.iter().sum();
        let neg = if s != 0.0 {
            s < 0.0
        } else {
            v.iter().find(|x| **x != 0.0).is_some_and(|x| *x < 0.0)
        };
        v.iter().map(|x| if neg { -x } else { *x }).collect()
    };
    (flip(sigma), flip(tau))
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

mod common;

use common::{canonical, max_abs_diff, model_covariance};
use likert_latent::cutpoints::estimate_cuts;
use likert_latent::model::{reference_configuration, simulate};
use likert_latent::reconstruction::{
    estimate, fit_frobenius, frobenius_objective, frobenius_value_grad, reconstruct, ReconstructedCorrelation,
};
use likert_latent::rng::stream;
use likert_latent::{CutPointSet, ModelParams};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::Rng;

fn h2(target: &DMatrix<f64>, x: &[f64], times: usize) -> f64 {
    let j = x.len() / 2;
    (target - model_covariance(&x[..j], &x[j..], times)).norm_squared()
}

/// Cyclic coordinate search on `H^2`: a 401-point scan of each feasible
/// coordinate range followed by golden-section refinement.
fn coordinate_polish(target: &DMatrix<f64>, start: &[f64], times: usize) -> Vec<f64> {
    let j = start.len() / 2;
    let mut x = start.to_vec();
    let mut best = h2(target, &x, times);
    for _ in 0..500 {
        let before = best;
        for d in 0..2 * j {
            let partner = if d < j { x[d + j] } else { x[d - j] };
            let bound = (1.0 - partner * partner).max(0.0).sqrt();
            let eval = |v: f64, x: &mut Vec<f64>| {
                x[d] = v;
                h2(target, x, times)
            };
            let mut y = x.clone();
            let (mut lo, mut hi) = (-bound, bound);
            let step = 2.0 * bound / 400.0;
            let (mut arg, mut val) = (x[d], best);
            for k in 0..=400 {
                let v = -bound + k as f64 * step;
                let f = eval(v, &mut y);
                if f < val {
                    arg = v;
                    val = f;
                }
            }
            if step > 0.0 {
                lo = (arg - step).max(lo);
                hi = (arg + step).min(hi);
                let g = 0.5 * (5f64.sqrt() - 1.0);
                for _ in 0..80 {
                    let a = hi - g * (hi - lo);
                    let b = lo + g * (hi - lo);
                    if eval(a, &mut y) < eval(b, &mut y) {
                        hi = b;
                    } else {
                        lo = a;
                    }
                }
                let v = 0.5 * (lo + hi);
                let f = eval(v, &mut y);
                if f < val {
                    arg = v;
                    val = f;
                }
            }
            x[d] = arg;
            best = val;
        }
        if before - best < 1e-15 {
            break;
        }
    }
    x
}

fn random_params(rng: &mut impl Rng, items: usize) -> ModelParams {
    let (s, t): (Vec<f64>, Vec<f64>) = (0..items)
        .map(|_| {
            let r = rng.random_range(0.0..0.95f64).sqrt();
            let a = rng.random_range(0.0..std::f64::consts::TAU);
            (r * a.cos(), r * a.sin())
        })
        .unzip();
    ModelParams::new(s, t).unwrap()
}

#[test]
fn independent_items_reconstruct_to_identity() {
    let p = ModelParams::new(vec![0.0; 5], vec![0.0; 5]).unwrap();
    let (_, cuts) = reference_configuration();
    let (_, data) = simulate(&p, &cuts, 2_000, 2, 61).unwrap();
    let recon = reconstruct(&data, &estimate_cuts(&data).unwrap()).unwrap();
    let off = recon.matrix() - DMatrix::identity(10, 10);
    // each entry has a standard error near 0.026 at this n
    let rms = (off.norm_squared() / 90.0).sqrt();
    assert!(rms < 0.05, "{rms}");
    assert!(off.amax() < 0.11, "{}", off.amax());
}

#[test]
fn two_items_give_four_by_four() {
    let p = ModelParams::new(vec![0.8, 0.6], vec![0.3, -0.4]).unwrap();
    let cuts = CutPointSet::new(vec![vec![-0.5, 0.5]; 2], 3).unwrap();
    let (_, data) = simulate(&p, &cuts, 3_000, 2, 62).unwrap();
    let recon = reconstruct(&data, &estimate_cuts(&data).unwrap()).unwrap();
    let m = recon.matrix();
    assert_eq!(m.shape(), (4, 4));
    assert_eq!(m, &m.transpose());
    let exact = model_covariance(p.sigma(), p.tau(), 2);
    assert!((m - exact).amax() < 0.06);
}

#[test]
fn within_block_entry_at_large_n() {
    let (p, cuts) = reference_configuration();
    let (_, data) = simulate(&p, &cuts, 10_000, 2, 63).unwrap();
    let recon = reconstruct(&data, &estimate_cuts(&data).unwrap()).unwrap();
    for t in 0..2 {
        assert!((recon.within(t)[(0, 1)] - 0.6259).abs() < 0.05);
    }
}

#[test]
fn estimate_recovers_reference_at_large_n() {
    let (p, cuts) = reference_configuration();
    let (_, data) = simulate(&p, &cuts, 10_000, 2, 64).unwrap();
    let (fit, _) = estimate(&data).unwrap();
    let sq: Vec<f64> = fit.params.sigma().iter().map(|s| s * s).collect();
    assert!((sq[0] - 0.8).abs() < 0.03, "{sq:?}");
    assert!(fit.params.is_canonical());
}

#[test]
fn exact_targets_are_recovered() {
    let mut rng = stream(65);
    for (items, times) in [(3, 2), (4, 3), (6, 2)] {
        for _ in 0..10 {
            let p = random_params(&mut rng, items);
            let recon = ReconstructedCorrelation::from_matrix(p.build_covariance(times), items, times).unwrap();
            let fit = fit_frobenius(&recon, items, times).unwrap();
            assert!(fit.objective <= 1e-6);
            let (s, t) = canonical(p.sigma(), p.tau());
            assert!(max_abs_diff(fit.params.sigma(), &s) < 1e-5, "{p:?} -> {:?}", fit.params);
            assert!(max_abs_diff(fit.params.tau(), &t) < 1e-5, "{p:?} -> {:?}", fit.params);
        }
    }
}

#[test]
fn perturbed_target_agrees_with_polish_oracle() {
    let (p, _) = reference_configuration();
    let mut rng = stream(66);
    for _ in 0..5 {
        let mut target = p.build_covariance(2);
        let mut noise = DMatrix::from_fn(10, 10, |_, _| rng.random_range(-1.0..1.0));
        noise = &noise + noise.transpose();
        noise.fill_diagonal(0.0);
        let scale = 0.01 / noise.norm();
        target += noise * scale;
        let recon = ReconstructedCorrelation::from_matrix(target.clone(), 5, 2).unwrap();
        let fit = fit_frobenius(&recon, 5, 2).unwrap();
        assert!(fit.objective <= 0.01, "{}", fit.objective);
        let truth = p.canonicalize();
        assert!(max_abs_diff(fit.params.sigma(), truth.sigma()) < 0.02);
        assert!(max_abs_diff(fit.params.tau(), truth.tau()) < 0.02);

        let start: Vec<f64> = truth.sigma().iter().chain(truth.tau()).copied().collect();
        let oracle = coordinate_polish(&target, &start, 2);
        let (os, ot) = canonical(&oracle[..5], &oracle[5..]);
        let fit_h2 = fit.objective * fit.objective;
        assert!(fit_h2 <= h2(&target, &oracle, 2) + 1e-10);
        assert!(max_abs_diff(fit.params.sigma(), &os) < 1e-3);
        assert!(max_abs_diff(fit.params.tau(), &ot) < 1e-3);
    }
}

#[test]
fn gradient_matches_finite_differences() {
    let (p, cuts) = reference_configuration();
    let (_, data) = simulate(&p, &cuts, 300, 2, 67).unwrap();
    let target = reconstruct(&data, &estimate_cuts(&data).unwrap()).unwrap().matrix().clone();
    let mut rng = stream(68);
    let h = 1e-6;
    for _ in 0..50 {
        let q = random_params(&mut rng, 5);
        let (value, grad) = frobenius_value_grad(&target, &q, 2);
        assert!((value - frobenius_objective(&target, &q, 2)).abs() < 1e-12);
        let x: Vec<f64> = q.sigma().iter().chain(q.tau()).copied().collect();
        for d in 0..10 {
            let (mut up, mut down) = (x.clone(), x.clone());
            up[d] += h;
            down[d] -= h;
            let fd = (h2(&target, &up, 2) - h2(&target, &down, 2)) / (2.0 * h);
            let scale = fd.abs().max(grad[d].abs()).max(1e-3);
            assert!((fd - grad[d]).abs() / scale < 1e-4, "d = {d}: {fd} vs {}", grad[d]);
        }
    }
}

proptest! {
    #[test]
    fn objective_invariant_under_sign_flips(seed in any::<u64>(), flip_s: bool, flip_t: bool) {
        let mut rng = stream(seed);
        let p = random_params(&mut rng, 5);
        let target = random_params(&mut rng, 5).build_covariance(2);
        let s: Vec<f64> = p.sigma().iter().map(|v| if flip_s { -v } else { *v }).collect();
        let t: Vec<f64> = p.tau().iter().map(|v| if flip_t { -v } else { *v }).collect();
        let q = ModelParams::new(s, t).unwrap();
        prop_assert_eq!(frobenius_objective(&target, &p, 2), frobenius_objective(&target, &q, 2));
    }
}

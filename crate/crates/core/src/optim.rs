//! Scalar maximization and projected spectral gradient descent on a
//! product of unit disks.

/// Result of a bounded scalar maximization.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ScalarMax {
    pub x: f64,
    pub value: f64,
    pub converged: bool,
}

/// Brent's method (golden section with parabolic steps) for the maximum of
/// `f` on `[lo, hi]`, stopping when the bracket is narrower than `tol`.
pub(crate) fn brent_maximize<F: FnMut(f64) -> f64>(
    mut f: F,
    lo: f64,
    hi: f64,
    tol: f64,
    max_iter: usize,
) -> ScalarMax {
    const GOLDEN: f64 = 0.381_966_011_250_105;
    let (mut a, mut b) = (lo, hi);
    let mut x = a + GOLDEN * (b - a);
    let (mut w, mut v) = (x, x);
    let mut fx = -f(x);
    let (mut fw, mut fv) = (fx, fx);
    let mut d: f64 = 0.0;
    let mut e: f64 = 0.0;
    for _ in 0..max_iter {
        let mid = 0.5 * (a + b);
        let tol1 = tol * 0.5 + 1e-12 * x.abs();
        let tol2 = 2.0 * tol1;
        if (x - mid).abs() <= tol2 - 0.5 * (b - a) {
            return ScalarMax { x, value: -fx, converged: true };
        }
        let mut golden = true;
        if e.abs() > tol1 {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            }
            q = q.abs();
            let e_prev = e;
            e = d;
            if p.abs() < (0.5 * q * e_prev).abs() && p > q * (a - x) && p < q * (b - x) {
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = if mid >= x { tol1 } else { -tol1 };
                }
                golden = false;
            }
        }
        if golden {
            e = if x >= mid { a - x } else { b - x };
            d = GOLDEN * e;
        }
        let u = if d.abs() >= tol1 { x + d } else { x + tol1.copysign(d) };
        let fu = -f(u);
        if fu <= fx {
            if u >= x {
                a = x;
            } else {
                b = x;
            }
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = u;
            fx = fu;
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                v = w;
                fv = fw;
                w = u;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }
    ScalarMax { x, value: -fx, converged: false }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct SpgOptions {
    pub max_iter: usize,
    /// Stop when the sup-norm of the projected gradient step falls below this.
    pub tol: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct SpgOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective at every accepted iterate, starting with the initial point.
    #[cfg_attr(not(test), allow(dead_code))]
    pub history: Vec<f64>,
}

const ARMIJO: f64 = 1e-4;
const STEP_MIN: f64 = 1e-12;
const STEP_MAX: f64 = 1e12;

/// Projects each `(x[j], x[J + j])` pair onto the closed unit disk.
pub(crate) fn project_disks(x: &mut [f64]) {
    let items = x.len() / 2;
    for j in 0..items {
        let r2 = x[j] * x[j] + x[items + j] * x[items + j];
        if r2 > 1.0 {
            let r = r2.sqrt();
            x[j] /= r;
            x[items + j] /= r;
        }
    }
}

/// Minimizes `f` over the product of unit disks with the monotone spectral
/// projected gradient method: Barzilai-Borwein step lengths, Armijo
/// backtracking along the projected direction.
///
/// `eval` returns the objective and gradient, or `None` where the objective
/// is undefined (treated as `+inf` by the line search). `x0` must be a point
/// where `eval` is defined after projection.
pub(crate) fn spg_minimize<F>(mut eval: F, x0: &[f64], opts: SpgOptions) -> SpgOutcome
where
    F: FnMut(&[f64]) -> Option<(f64, Vec<f64>)>,
{
    let mut x = x0.to_vec();
    project_disks(&mut x);
    let Some((mut fx, mut g)) = eval(&x) else {
        return SpgOutcome {
            x,
            value: f64::INFINITY,
            iterations: 0,
            converged: false,
            history: vec![f64::INFINITY],
        };
    };
    let mut history = vec![fx];
    let pg_norm = |x: &[f64], g: &[f64]| -> f64 {
        let mut p: Vec<f64> = x.iter().zip(g).map(|(a, b)| a - b).collect();
        project_disks(&mut p);
        p.iter().zip(x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    };
    let mut pg = pg_norm(&x, &g);
    let mut lambda = if pg > 0.0 { (1.0 / pg).clamp(STEP_MIN, STEP_MAX) } else { 1.0 };
    let mut converged = pg <= opts.tol;
    let mut iterations = 0;
    while !converged && iterations < opts.max_iter {
        iterations += 1;
        let mut trial: Vec<f64> = x.iter().zip(&g).map(|(a, b)| a - lambda * b).collect();
        project_disks(&mut trial);
        let dir: Vec<f64> = trial.iter().zip(&x).map(|(a, b)| a - b).collect();
        let slope: f64 = dir.iter().zip(&g).map(|(a, b)| a * b).sum();
        if slope >= 0.0 {
            // no descent possible at this step length: the projected
            // gradient is at the level of rounding
            converged = pg <= opts.tol.sqrt();
            break;
        }
        let mut alpha = 1.0;
        let accepted = loop {
            let cand: Vec<f64> = x.iter().zip(&dir).map(|(a, d)| a + alpha * d).collect();
            if let Some((fc, gc)) = eval(&cand) {
                if fc.is_finite() && fc <= fx + ARMIJO * alpha * slope {
                    break Some((cand, fc, gc));
                }
            }
            alpha *= 0.5;
            if alpha < 1e-20 {
                break None;
            }
        };
        // an accepted step that leaves f unchanged means further decrease is
        // below the rounding level of f
        let Some((x_new, f_new, g_new)) = accepted.filter(|(_, fc, _)| *fc < fx) else {
            converged = pg <= opts.tol.sqrt();
            break;
        };
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
        let ss: f64 = s.iter().map(|a| a * a).sum();
        lambda = if sy > 0.0 { (ss / sy).clamp(STEP_MIN, STEP_MAX) } else { STEP_MAX };
        x = x_new;
        fx = f_new;
        g = g_new;
        history.push(fx);
        pg = pg_norm(&x, &g);
        converged = pg <= opts.tol;
    }
    SpgOutcome {
        x,
        value: fx,
        iterations,
        converged,
        history,
    }
}

//! Strong-Wolfe line search with cubic interpolation, shared by the
//! conjugate-gradient family and BFGS.
//!
//! After any directly-acceptable trial step, one cubic refinement through
//! (0, phi(0), phi'(0)) and the trial point is attempted and kept when it
//! also satisfies the Wolfe conditions with a lower value. On a quadratic
//! objective the cubic fit is exact, so the search returns the exact
//! one-dimensional minimizer — which is what gives conjugate-gradient its
//! finite-termination property on quadratics.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::objective::Objective;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct LineSearchParams {
    /// Sufficient-decrease (Armijo) constant.
    pub c1: f64,
    /// Curvature constant.
    pub c2: f64,
    pub max_iters: usize,
}

impl Default for LineSearchParams {
    fn default() -> Self {
        LineSearchParams {
            c1: 1e-4,
            c2: 0.9,
            max_iters: 25,
        }
    }
}

/// A step accepted by the search, with the evaluation at the new point so
/// callers never recompute it.
pub(crate) struct Accepted {
    pub t: f64,
    pub f: f64,
    pub g: DVector<f64>,
}

struct Probe {
    t: f64,
    f: f64,
    dphi: f64,
    g: DVector<f64>,
}

/// Find t satisfying the strong Wolfe conditions along direction `d` from
/// `w`. `dphi0` = g0 . d must be negative. Returns `None` when the search
/// exhausts its budget (caller falls back to steepest descent).
pub(crate) fn strong_wolfe(
    obj: &dyn Objective,
    w: &DVector<f64>,
    d: &DVector<f64>,
    f0: f64,
    dphi0: f64,
    t_init: f64,
    p: &LineSearchParams,
) -> Option<Accepted> {
    // Not a descent direction (or NaN slope): nothing to search.
    if dphi0 >= 0.0 || dphi0.is_nan() || !f0.is_finite() {
        return None;
    }
    let eval = |t: f64| -> Probe {
        let wt = w + t * d;
        let (f, g) = obj.value_grad(&wt);
        let dphi = g.dot(d);
        Probe { t, f, dphi, g }
    };

    let mut prev = Probe {
        t: 0.0,
        f: f0,
        dphi: dphi0,
        g: DVector::zeros(0),
    };
    let mut t = if t_init.is_finite() && t_init > 0.0 {
        t_init
    } else {
        1.0
    };
    for i in 0..p.max_iters {
        let cur = eval(t);
        if !cur.f.is_finite() || cur.f > f0 + p.c1 * t * dphi0 || (i > 0 && cur.f >= prev.f) {
            return zoom(prev, cur, f0, dphi0, p, &eval);
        }
        if cur.dphi.abs() <= -p.c2 * dphi0 {
            return Some(refine(cur, f0, dphi0, p, &eval));
        }
        if cur.dphi >= 0.0 {
            return zoom(cur, prev, f0, dphi0, p, &eval);
        }
        t = cur.t * 2.0;
        prev = cur;
    }
    None
}

/// One extra cubic interpolation through the origin and an already-accepted
/// trial; kept only when strictly at least as good and still Wolfe.
fn refine(
    accepted: Probe,
    f0: f64,
    dphi0: f64,
    p: &LineSearchParams,
    eval: &dyn Fn(f64) -> Probe,
) -> Accepted {
    if let Some(tc) = cubic_min(0.0, f0, dphi0, accepted.t, accepted.f, accepted.dphi) {
        if tc.is_finite() && tc > 0.0 && (tc - accepted.t).abs() > 1e-14 * accepted.t {
            let cand = eval(tc);
            if cand.f.is_finite()
                && cand.f <= accepted.f
                && cand.f <= f0 + p.c1 * tc * dphi0
                && cand.dphi.abs() <= -p.c2 * dphi0
            {
                return Accepted {
                    t: cand.t,
                    f: cand.f,
                    g: cand.g,
                };
            }
        }
    }
    Accepted {
        t: accepted.t,
        f: accepted.f,
        g: accepted.g,
    }
}

/// Shrink a bracket [lo, hi] (lo has the lower objective) by cubic
/// interpolation with bisection safeguards.
fn zoom(
    mut lo: Probe,
    mut hi: Probe,
    f0: f64,
    dphi0: f64,
    p: &LineSearchParams,
    eval: &dyn Fn(f64) -> Probe,
) -> Option<Accepted> {
    for _ in 0..p.max_iters {
        let (a, b) = if lo.t < hi.t {
            (lo.t, hi.t)
        } else {
            (hi.t, lo.t)
        };
        let span = b - a;
        if span <= 1e-16 * b.max(1.0) {
            return None;
        }
        let mut t = cubic_min(lo.t, lo.f, lo.dphi, hi.t, hi.f, hi.dphi)
            .unwrap_or(0.5 * (a + b));
        if !t.is_finite() || t <= a + 1e-12 * span || t >= b - 1e-12 * span {
            t = 0.5 * (a + b);
        }
        let cur = eval(t);
        if !cur.f.is_finite() || cur.f > f0 + p.c1 * t * dphi0 || cur.f >= lo.f {
            hi = cur;
        } else {
            if cur.dphi.abs() <= -p.c2 * dphi0 {
                return Some(Accepted {
                    t: cur.t,
                    f: cur.f,
                    g: cur.g,
                });
            }
            if cur.dphi * (hi.t - lo.t) >= 0.0 {
                hi = Probe {
                    t: lo.t,
                    f: lo.f,
                    dphi: lo.dphi,
                    g: DVector::zeros(0),
                };
            }
            lo = cur;
        }
    }
    None
}

/// Minimizer of the cubic interpolating (ta, fa, fa') and (tb, fb, fb').
/// `None` when the interpolant has no interior minimum.
fn cubic_min(ta: f64, fa: f64, da: f64, tb: f64, fb: f64, db: f64) -> Option<f64> {
    let d1 = da + db - 3.0 * (fa - fb) / (ta - tb);
    let disc = d1 * d1 - da * db;
    if disc < 0.0 {
        return None;
    }
    let d2 = (tb - ta).signum() * disc.sqrt();
    let denom = db - da + 2.0 * d2;
    if denom == 0.0 {
        return None;
    }
    let t = tb - (tb - ta) * (db + d2 - d1) / denom;
    t.is_finite().then_some(t)
}

/// Plain Armijo backtracking along -g: the fallback when the Wolfe search
/// fails. Returns the new point and its value, or `None` when even tiny
/// steps make no progress.
pub(crate) fn steepest_fallback(
    obj: &dyn Objective,
    w: &DVector<f64>,
    f0: f64,
    g: &DVector<f64>,
    c1: f64,
) -> Option<(DVector<f64>, f64)> {
    let gg = g.norm_squared();
    if gg == 0.0 {
        return None;
    }
    let mut t = 1.0 / (1.0 + gg.sqrt());
    for _ in 0..40 {
        let wt = w - t * g;
        let ft = obj.value(&wt);
        if ft.is_finite() && ft <= f0 - c1 * t * gg {
            return Some((wt, ft));
        }
        t *= 0.5;
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trainers::objective::QuadraticObjective;
    use nalgebra::DMatrix;

    fn quad() -> QuadraticObjective {
        QuadraticObjective {
            a: DMatrix::from_row_slice(2, 2, &[3.0, 0.5, 0.5, 2.0]),
            b: DVector::from_vec(vec![1.0, -1.0]),
        }
    }

    /// phi(t) = f(w + t d) restricted to a quadratic has minimizer
    /// t* = -(g.d)/(d.Ad); the search must land on it exactly.
    #[test]
    fn exact_minimizer_on_quadratics() {
        let obj = quad();
        let p = LineSearchParams::default();
        for (w0, d0) in [
            (vec![0.0, 0.0], vec![1.0, 0.0]),
            (vec![2.0, -3.0], vec![-1.0, 2.0]),
            (vec![0.5, 0.5], vec![-0.3, -0.7]),
        ] {
            let w = DVector::from_vec(w0);
            let mut d = DVector::from_vec(d0);
            let g = obj.gradient(&w);
            if g.dot(&d) > 0.0 {
                d = -d;
            }
            let dphi0 = g.dot(&d);
            if dphi0 >= 0.0 {
                continue;
            }
            let f0 = obj.value(&w);
            let t_star = -dphi0 / d.dot(&(&obj.a * &d));
            for t_init in [0.1, 1.0, 17.0] {
                let acc = strong_wolfe(&obj, &w, &d, f0, dphi0, t_init, &p)
                    .expect("search must succeed on a convex quadratic");
                assert!(
                    (acc.t - t_star).abs() < 1e-10 * t_star.max(1.0),
                    "t_init={t_init}: got {} want {t_star}",
                    acc.t
                );
            }
        }
    }

    #[test]
    fn accepted_point_satisfies_strong_wolfe() {
        // A non-quadratic objective: quartic bowl.
        struct Quartic;
        impl Objective for Quartic {
            fn dim(&self) -> usize {
                1
            }
            fn value(&self, w: &DVector<f64>) -> f64 {
                let x = w[0];
                0.25 * x.powi(4) - x
            }
            fn gradient(&self, w: &DVector<f64>) -> DVector<f64> {
                DVector::from_vec(vec![w[0].powi(3) - 1.0])
            }
        }
        let obj = Quartic;
        let p = LineSearchParams::default();
        let w = DVector::from_vec(vec![-2.0]);
        let g = obj.gradient(&w);
        let d = -g.clone();
        let f0 = obj.value(&w);
        let dphi0 = g.dot(&d);
        let acc = strong_wolfe(&obj, &w, &d, f0, dphi0, 1.0, &p).unwrap();
        assert!(acc.f <= f0 + p.c1 * acc.t * dphi0);
        assert!(acc.g.dot(&d).abs() <= -p.c2 * dphi0);
    }

    #[test]
    fn rejects_non_descent_directions() {
        let obj = quad();
        let p = LineSearchParams::default();
        let w = DVector::from_vec(vec![1.0, 1.0]);
        let g = obj.gradient(&w);
        let f0 = obj.value(&w);
        // Ascent direction: dphi0 > 0.
        assert!(strong_wolfe(&obj, &w, &g, f0, g.norm_squared(), 1.0, &p).is_none());
    }

    #[test]
    fn fallback_makes_progress() {
        let obj = quad();
        let w = DVector::from_vec(vec![5.0, -5.0]);
        let f0 = obj.value(&w);
        let g = obj.gradient(&w);
        let (w2, f2) = steepest_fallback(&obj, &w, f0, &g, 1e-4).unwrap();
        assert!(f2 < f0);
        assert_ne!(w2, w);
    }

    #[test]
    fn cubic_recovers_quadratic_minimum() {
        // phi(t) = (t - 3)^2: values/derivs at t=0 and t=10.
        let f = |t: f64| (t - 3.0) * (t - 3.0);
        let d = |t: f64| 2.0 * (t - 3.0);
        let t = cubic_min(0.0, f(0.0), d(0.0), 10.0, f(10.0), d(10.0)).unwrap();
        assert!((t - 3.0).abs() < 1e-12);
    }
}

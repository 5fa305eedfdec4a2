//! Limited-memory BFGS with a strong-Wolfe line search.
//!
//! The line search follows the bracketing/zoom scheme with safeguarded cubic
//! interpolation. Every accepted step satisfies the sufficient-decrease
//! condition, so the recorded objective trace never increases.

use std::collections::VecDeque;

/// Objective callback: writes the gradient into `grad` and returns the value.
pub trait Objective {
    fn evaluate(&mut self, x: &[f64], grad: &mut [f64]) -> f64;
}

impl<F: FnMut(&[f64], &mut [f64]) -> f64> Objective for F {
    fn evaluate(&mut self, x: &[f64], grad: &mut [f64]) -> f64 {
        self(x, grad)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Lbfgs {
    /// Number of correction pairs kept.
    pub memory: usize,
    /// Sufficient-decrease constant.
    pub c1: f64,
    /// Curvature constant.
    pub c2: f64,
    /// Function evaluations allowed per line search.
    pub max_line_evals: usize,
    /// Stop when the largest gradient component falls below this.
    pub grad_tol: f64,
}

impl Default for Lbfgs {
    fn default() -> Self {
        Self {
            memory: 10,
            c1: 1e-4,
            c2: 0.9,
            max_line_evals: 25,
            grad_tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// The iteration budget was used up.
    MaxIterations,
    /// Gradient below tolerance.
    Converged,
    /// No step along the search direction decreased the objective.
    LineSearchFailed,
    /// The objective or gradient became non-finite.
    NonFinite,
}

#[derive(Debug, Clone)]
pub struct MinimizeReport {
    /// Objective at the start and after every completed iteration.
    pub trace: Vec<f64>,
    pub evaluations: usize,
    pub termination: Termination,
}

impl MinimizeReport {
    pub fn iterations(&self) -> usize {
        self.trace.len().saturating_sub(1)
    }
}

#[derive(Clone)]
struct Point {
    step: f64,
    f: f64,
    slope: f64,
    x: Vec<f64>,
    g: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn all_finite(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// Minimizer of the cubic interpolating (a, fa, da) and (b, fb, db), falling
/// back to bisection when the cubic has no real minimizer.
fn cubic_min(a: f64, fa: f64, da: f64, b: f64, fb: f64, db: f64) -> f64 {
    let d1 = da + db - 3.0 * (fa - fb) / (a - b);
    let disc = d1 * d1 - da * db;
    if disc < 0.0 || !disc.is_finite() {
        return 0.5 * (a + b);
    }
    let d2 = (b - a).signum() * disc.sqrt();
    let t = b - (b - a) * (db + d2 - d1) / (db - da + 2.0 * d2);
    if t.is_finite() {
        t
    } else {
        0.5 * (a + b)
    }
}

impl Lbfgs {
    /// Minimizes `f` from `x` for at most `max_iter` iterations, updating `x`
    /// in place to the best point found.
    pub fn minimize<O: Objective + ?Sized>(
        &self,
        f: &mut O,
        x: &mut Vec<f64>,
        max_iter: usize,
    ) -> MinimizeReport {
        let n = x.len();
        let mut g = vec![0.0; n];
        let mut fx = f.evaluate(x, &mut g);
        let mut evals = 1;
        let mut trace = vec![fx];
        if !fx.is_finite() || !all_finite(&g) {
            return MinimizeReport {
                trace,
                evaluations: evals,
                termination: Termination::NonFinite,
            };
        }
        let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(self.memory);
        let mut termination = Termination::MaxIterations;

        for iter in 0..max_iter {
            if g.iter().fold(0.0f64, |m, v| m.max(v.abs())) < self.grad_tol {
                termination = Termination::Converged;
                break;
            }
            let mut dir = self.direction(&g, &history);
            let mut slope = dot(&dir, &g);
            if slope.is_nan() || slope >= 0.0 {
                history.clear();
                dir = g.iter().map(|v| -v).collect();
                slope = dot(&dir, &g);
            }
            let step0 = if iter == 0 && history.is_empty() {
                (1.0 / g.iter().map(|v| v.abs()).sum::<f64>()).min(1.0)
            } else {
                1.0
            };
            let start = Point {
                step: 0.0,
                f: fx,
                slope,
                x: x.clone(),
                g: g.clone(),
            };
            let (found, used) = self.line_search(f, &start, &dir, step0);
            evals += used;
            let Some(next) = found else {
                termination = Termination::LineSearchFailed;
                break;
            };
            let s: Vec<f64> = next.x.iter().zip(x.iter()).map(|(a, b)| a - b).collect();
            let y: Vec<f64> = next.g.iter().zip(&g).map(|(a, b)| a - b).collect();
            let sy = dot(&s, &y);
            if sy > 1e-10 * dot(&y, &y).max(f64::MIN_POSITIVE) {
                if history.len() == self.memory {
                    history.pop_front();
                }
                history.push_back((s, y, 1.0 / sy));
            }
            *x = next.x;
            g = next.g;
            fx = next.f;
            trace.push(fx);
            log::debug!("iteration {}: objective {:.10e}", iter + 1, fx);
        }
        MinimizeReport {
            trace,
            evaluations: evals,
            termination,
        }
    }

    fn direction(&self, g: &[f64], history: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
        let mut q: Vec<f64> = g.to_vec();
        let mut alphas = Vec::with_capacity(history.len());
        for (s, y, rho) in history.iter().rev() {
            let a = rho * dot(s, &q);
            for (qi, yi) in q.iter_mut().zip(y) {
                *qi -= a * yi;
            }
            alphas.push(a);
        }
        if let Some((s, y, _)) = history.back() {
            let gamma = dot(s, y) / dot(y, y);
            q.iter_mut().for_each(|v| *v *= gamma);
        }
        for ((s, y, rho), a) in history.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &q);
            for (qi, si) in q.iter_mut().zip(s) {
                *qi += (a - b) * si;
            }
        }
        q.iter_mut().for_each(|v| *v = -*v);
        q
    }

    fn eval_at<O: Objective + ?Sized>(
        &self,
        f: &mut O,
        start: &Point,
        dir: &[f64],
        step: f64,
    ) -> Point {
        let x: Vec<f64> = start
            .x
            .iter()
            .zip(dir)
            .map(|(xi, di)| xi + step * di)
            .collect();
        let mut g = vec![0.0; x.len()];
        let fv = f.evaluate(&x, &mut g);
        let (fv, slope) = if fv.is_finite() && all_finite(&g) {
            (fv, dot(&g, dir))
        } else {
            (f64::INFINITY, f64::NAN)
        };
        Point {
            step,
            f: fv,
            slope,
            x,
            g,
        }
    }

    /// Returns the accepted point (if any) and the evaluations used.
    fn line_search<O: Objective + ?Sized>(
        &self,
        f: &mut O,
        start: &Point,
        dir: &[f64],
        step0: f64,
    ) -> (Option<Point>, usize) {
        let armijo = |p: &Point| p.f <= start.f + self.c1 * p.step * start.slope;
        let curvature = |p: &Point| p.slope.abs() <= -self.c2 * start.slope;
        let mut evals = 0;
        let mut prev = start.clone();
        let mut step = step0;
        let (mut lo, mut hi);
        loop {
            let cur = self.eval_at(f, start, dir, step);
            evals += 1;
            if !cur.f.is_finite() {
                // Overshot into a non-finite region; shrink toward prev.
                if evals >= self.max_line_evals {
                    return (accept_lo(prev, start), evals);
                }
                step = prev.step + 0.5 * (step - prev.step);
                continue;
            }
            if !armijo(&cur) || (prev.step > 0.0 && cur.f >= prev.f) {
                lo = prev;
                hi = cur;
                break;
            }
            if curvature(&cur) {
                return (Some(cur), evals);
            }
            if cur.slope >= 0.0 {
                lo = cur;
                hi = prev;
                break;
            }
            if evals >= self.max_line_evals {
                return (Some(cur), evals);
            }
            let next = cubic_min(prev.step, prev.f, prev.slope, cur.step, cur.f, cur.slope);
            let (min_ext, max_ext) = (cur.step * 1.1, cur.step * 10.0);
            step = if next.is_finite() {
                next.clamp(min_ext, max_ext)
            } else {
                max_ext
            };
            prev = cur;
        }

        // Zoom: lo satisfies sufficient decrease and has the lowest value seen.
        while evals < self.max_line_evals {
            let (a, b) = (lo.step, hi.step);
            let width = (b - a).abs();
            if width < 1e-16 * a.abs().max(1.0) {
                break;
            }
            let t = if hi.f.is_finite() && hi.slope.is_finite() {
                cubic_min(a, lo.f, lo.slope, b, hi.f, hi.slope)
            } else {
                0.5 * (a + b)
            };
            let (left, right) = (a.min(b), a.max(b));
            let margin = 0.1 * width;
            let t = if t.is_finite() {
                t.clamp(left + margin, right - margin)
            } else {
                0.5 * (a + b)
            };
            let cur = self.eval_at(f, start, dir, t);
            evals += 1;
            if !armijo(&cur) || cur.f >= lo.f {
                hi = cur;
            } else {
                if curvature(&cur) {
                    return (Some(cur), evals);
                }
                if cur.slope * (hi.step - lo.step) >= 0.0 {
                    hi = lo;
                }
                lo = cur;
            }
        }
        (accept_lo(lo, start), evals)
    }
}

fn accept_lo(lo: Point, start: &Point) -> Option<Point> {
    (lo.step > 0.0 && lo.f < start.f).then_some(lo)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &[f64], g: &mut [f64]) -> f64 {
        let (a, b) = (x[0], x[1]);
        g[0] = -2.0 * (1.0 - a) - 400.0 * a * (b - a * a);
        g[1] = 200.0 * (b - a * a);
        (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2)
    }

    #[test]
    fn solves_rosenbrock() {
        let mut x = vec![-1.2, 1.0];
        let mut f = rosenbrock;
        let report = Lbfgs::default().minimize(&mut f, &mut x, 200);
        assert!(
            (x[0] - 1.0).abs() < 1e-6 && (x[1] - 1.0).abs() < 1e-6,
            "{x:?}"
        );
        assert!(report.trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn quadratic_converges_and_zero_iterations_is_noop() {
        let mut f = |x: &[f64], g: &mut [f64]| {
            let mut v = 0.0;
            for (i, (xi, gi)) in x.iter().zip(g.iter_mut()).enumerate() {
                let c = (i + 1) as f64;
                *gi = 2.0 * c * (xi - 1.0);
                v += c * (xi - 1.0) * (xi - 1.0);
            }
            v
        };
        let mut x = vec![0.0; 6];
        let r = Lbfgs::default().minimize(&mut f, &mut x, 0);
        assert_eq!(x, vec![0.0; 6]);
        assert_eq!(r.trace.len(), 1);
        let r = Lbfgs::default().minimize(&mut f, &mut x, 100);
        assert!(x.iter().all(|v| (v - 1.0).abs() < 1e-8));
        assert_eq!(r.termination, Termination::Converged);
    }

    #[test]
    fn cubic_min_of_parabola() {
        // f(t) = (t - 0.3)^2 sampled at 0 and 1
        let t = cubic_min(0.0, 0.09, -0.6, 1.0, 0.49, 1.4);
        assert!((t - 0.3).abs() < 1e-12);
    }
}

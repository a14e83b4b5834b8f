//! Unconstrained minimisation and finite-difference derivatives.
//!
//! Objectives signal an infeasible point by returning `None` (or a non-finite
//! value); line searches then shrink the step.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::math::{abs, sqrt};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Options {
    pub max_iter: usize,
    /// Convergence threshold on the Euclidean gradient norm.
    pub grad_tol: f64,
    /// Convergence threshold on the largest parameter change.
    pub step_tol: f64,
}

impl Default for Options {
    fn default() -> Self {
        Options { max_iter: 200, grad_tol: 1e-6, step_tol: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub gradient: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl Minimum {
    pub fn grad_norm(&self) -> f64 {
        norm(&self.gradient)
    }
}

pub fn norm(v: &[f64]) -> f64 {
    sqrt(v.iter().map(|x| x * x).sum())
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| f64::max(m, abs(x - y)))
}

/// BFGS with a backtracking Armijo line search. `objective` returns the value
/// and gradient at a point.
pub fn bfgs<F>(mut objective: F, x0: &[f64], opts: &Options) -> Result<Minimum>
where
    F: FnMut(&[f64]) -> Option<(f64, Vec<f64>)>,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    let (mut fx, mut g) = match objective(&x) {
        Some((f, g)) if f.is_finite() && g.iter().all(|v| v.is_finite()) => (f, g),
        _ => return Err(Error::Numerical("objective not finite at the starting point".into())),
    };
    let mut h_inv = Matrix::identity(n);
    let mut fresh = true;
    let mut last_step = f64::INFINITY;
    for iter in 0..opts.max_iter {
        let gn = norm(&g);
        if gn <= opts.grad_tol {
            return Ok(Minimum { x, value: fx, gradient: g, iterations: iter, converged: true });
        }
        let mut dir: Vec<f64> = h_inv.mul_vec(&g).into_iter().map(|v| -v).collect();
        let mut slope: f64 = dir.iter().zip(&g).map(|(d, gi)| d * gi).sum();
        if !(slope < 0.0) {
            h_inv = Matrix::identity(n);
            dir = g.iter().map(|v| -v).collect();
            slope = -gn * gn;
            fresh = true;
        }
        if fresh {
            // keep the first trial step modest in parameter space
            let dn = norm(&dir);
            if dn > 1.0 {
                for d in &mut dir {
                    *d /= dn;
                }
                slope /= dn;
            }
        }
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<f64> = x.iter().zip(&dir).map(|(xi, di)| xi + step * di).collect();
            if let Some((ft, gt)) = objective(&trial) {
                if ft.is_finite() && gt.iter().all(|v| v.is_finite()) && ft <= fx + 1e-4 * step * slope {
                    accepted = Some((trial, ft, gt));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((x_new, f_new, g_new)) = accepted else {
            if !fresh {
                h_inv = Matrix::identity(n);
                fresh = true;
                continue;
            }
            let converged = gn <= opts.grad_tol || last_step < opts.step_tol;
            return Ok(Minimum { x, value: fx, gradient: g, iterations: iter, converged });
        };
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
        last_step = max_abs_diff(&x_new, &x);
        x = x_new;
        fx = f_new;
        g = g_new;
        if sy > 1e-12 * norm(&s) * norm(&y) {
            if fresh {
                let yy: f64 = y.iter().map(|v| v * v).sum();
                h_inv = Matrix::identity(n).scale(sy / yy);
            }
            let rho = 1.0 / sy;
            let hy = h_inv.mul_vec(&y);
            let yhy: f64 = y.iter().zip(&hy).map(|(a, b)| a * b).sum();
            for i in 0..n {
                for j in 0..n {
                    h_inv[(i, j)] += -rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
                }
            }
            fresh = false;
        }
    }
    let gn = norm(&g);
    Ok(Minimum { x, value: fx, gradient: g, iterations: opts.max_iter, converged: gn <= opts.grad_tol })
}

/// Brent's method for a scalar minimum on `[a, b]`.
/// Returns `(argmin, min, evaluations)`.
pub fn brent_minimize<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, tol: f64) -> (f64, f64, usize) {
    const GOLDEN: f64 = 0.381_966_011_250_105_1;
    let (mut lo, mut hi) = if a < b { (a, b) } else { (b, a) };
    let mut x = lo + GOLDEN * (hi - lo);
    let mut w = x;
    let mut v = x;
    let mut fx = f(x);
    let mut fw = fx;
    let mut fv = fx;
    let mut d: f64 = 0.0;
    let mut e: f64 = 0.0;
    let mut evals = 1;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let tol1 = tol * abs(x) + 1e-12;
        let tol2 = 2.0 * tol1;
        if abs(x - mid) <= tol2 - 0.5 * (hi - lo) {
            break;
        }
        let mut golden = true;
        if abs(e) > tol1 {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            }
            q = abs(q);
            let e_prev = e;
            if abs(p) < abs(0.5 * q * e_prev) && p > q * (lo - x) && p < q * (hi - x) {
                e = d;
                d = p / q;
                let u = x + d;
                if u - lo < tol2 || hi - u < tol2 {
                    d = if mid >= x { tol1 } else { -tol1 };
                }
                golden = false;
            }
        }
        if golden {
            e = if x >= mid { lo - x } else { hi - x };
            d = GOLDEN * e;
        }
        let u = if abs(d) >= tol1 { x + d } else if d > 0.0 { x + tol1 } else { x - tol1 };
        let mut fu = f(u);
        evals += 1;
        if !fu.is_finite() {
            fu = f64::INFINITY;
        }
        if fu <= fx {
            if u >= x {
                lo = x;
            } else {
                hi = x;
            }
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = u;
            fx = fu;
        } else {
            if u < x {
                lo = u;
            } else {
                hi = u;
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
    (x, fx, evals)
}

/// Per-coordinate step `rel * max(1, |x_i|)`.
pub fn relative_steps(x: &[f64], rel: f64) -> Vec<f64> {
    x.iter().map(|v| rel * f64::max(1.0, abs(*v))).collect()
}

/// Central-difference gradient.
pub fn fd_gradient<F: FnMut(&[f64]) -> f64>(mut f: F, x: &[f64], steps: &[f64]) -> Vec<f64> {
    let mut p = x.to_vec();
    let mut g = vec![0.0; x.len()];
    for i in 0..x.len() {
        let h = steps[i];
        p[i] = x[i] + h;
        let fp = f(&p);
        p[i] = x[i] - h;
        let fm = f(&p);
        p[i] = x[i];
        g[i] = (fp - fm) / (2.0 * h);
    }
    g
}

/// Five-point central-difference gradient, `O(h^4)` truncation error.
pub fn fd_gradient5<F: FnMut(&[f64]) -> f64>(mut f: F, x: &[f64], steps: &[f64]) -> Vec<f64> {
    let mut p = x.to_vec();
    let mut g = vec![0.0; x.len()];
    for i in 0..x.len() {
        let h = steps[i];
        let mut at = |k: f64| {
            p[i] = x[i] + k * h;
            let v = f(&p);
            p[i] = x[i];
            v
        };
        let (f2, f1, m1, m2) = (at(2.0), at(1.0), at(-1.0), at(-2.0));
        g[i] = (-f2 + 8.0 * f1 - 8.0 * m1 + m2) / (12.0 * h);
    }
    g
}

/// Central-difference Hessian from function values.
pub fn fd_hessian<F: FnMut(&[f64]) -> f64>(mut f: F, x: &[f64], steps: &[f64]) -> Matrix {
    let n = x.len();
    let mut h = Matrix::zeros(n, n);
    let f0 = f(x);
    let mut p = x.to_vec();
    for i in 0..n {
        let hi = steps[i];
        p[i] = x[i] + hi;
        let fp = f(&p);
        p[i] = x[i] - hi;
        let fm = f(&p);
        p[i] = x[i];
        h[(i, i)] = (fp - 2.0 * f0 + fm) / (hi * hi);
        for j in 0..i {
            let hj = steps[j];
            let mut eval = |si: f64, sj: f64| {
                p[i] = x[i] + si * hi;
                p[j] = x[j] + sj * hj;
                let v = f(&p);
                p[i] = x[i];
                p[j] = x[j];
                v
            };
            let v = (eval(1.0, 1.0) - eval(1.0, -1.0) - eval(-1.0, 1.0) + eval(-1.0, -1.0)) / (4.0 * hi * hj);
            h[(i, j)] = v;
            h[(j, i)] = v;
        }
    }
    h
}

/// Hessian as the symmetrised central-difference Jacobian of a gradient.
pub fn fd_jacobian_of_gradient<G: FnMut(&[f64]) -> Vec<f64>>(mut grad: G, x: &[f64], steps: &[f64]) -> Matrix {
    let n = x.len();
    let mut h = Matrix::zeros(n, n);
    let mut p = x.to_vec();
    for j in 0..n {
        p[j] = x[j] + steps[j];
        let gp = grad(&p);
        p[j] = x[j] - steps[j];
        let gm = grad(&p);
        p[j] = x[j];
        for i in 0..n {
            h[(i, j)] = (gp[i] - gm[i]) / (2.0 * steps[j]);
        }
    }
    h.symmetrize();
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &[f64]) -> (f64, Vec<f64>) {
        let (a, b) = (x[0], x[1]);
        let f = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
        let g = vec![-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)];
        (f, g)
    }

    #[test]
    fn bfgs_solves_rosenbrock() {
        let m = bfgs(|x| Some(rosenbrock(x)), &[-1.2, 1.0], &Options { max_iter: 500, ..Options::default() }).unwrap();
        assert!(m.converged);
        assert!((m.x[0] - 1.0).abs() < 1e-6 && (m.x[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn bfgs_respects_infeasible_region() {
        // minimise x - ln x on x > 0; optimum at 1
        let m = bfgs(
            |x| if x[0] > 0.0 { Some((x[0] - x[0].ln(), vec![1.0 - 1.0 / x[0]])) } else { None },
            &[5.0],
            &Options::default(),
        )
        .unwrap();
        assert!(m.converged);
        assert!((m.x[0] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn brent_finds_parabola_minimum() {
        let (x, fx, _) = brent_minimize(|x| (x - 0.3) * (x - 0.3) + 2.0, -5.0, 5.0, 1e-10);
        assert!((x - 0.3).abs() < 1e-8);
        assert!((fx - 2.0).abs() < 1e-14);
    }

    #[test]
    fn finite_difference_of_square() {
        let g = fd_gradient(|x| x[0] * x[0], &[1.0], &[1e-5]);
        assert!((g[0] - 2.0).abs() < 1e-8);
        let g = fd_gradient5(|x| x[0].powi(5), &[1.0], &[1e-3]);
        assert!((g[0] - 5.0).abs() < 1e-9);
        let h = fd_hessian(|x| x[0] * x[0] * x[1] + x[1] * x[1], &[1.0, 2.0], &[1e-4, 1e-4]);
        assert!((h[(0, 0)] - 4.0).abs() < 1e-5);
        assert!((h[(0, 1)] - 2.0).abs() < 1e-5);
        assert!((h[(1, 1)] - 2.0).abs() < 1e-5);
    }
}

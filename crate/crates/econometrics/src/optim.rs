//! Damped Newton minimization with a backtracking Armijo line search.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct Options {
    pub max_iterations: usize,
    /// Stop once the gradient max-norm is below this...
    pub gradient_tolerance: f64,
    /// ...and the last relative change of the objective is below this.
    pub relative_tolerance: f64,
}

impl Default for Options {
    fn default() -> Self {
        Options { max_iterations: 500, gradient_tolerance: 1e-6, relative_tolerance: 1e-10 }
    }
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: DVector<f64>,
    pub value: f64,
    pub gradient: DVector<f64>,
    pub iterations: usize,
}

fn max_norm(g: &DVector<f64>) -> f64 {
    g.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Damped Newton. `hessian` should be positive definite near the path taken; when
/// it is not, a ridge is added until it is.
pub fn newton<F, H>(mut f: F, mut hessian: H, start: DVector<f64>, opts: &Options) -> Result<Minimum>
where
    F: FnMut(&DVector<f64>) -> (f64, DVector<f64>),
    H: FnMut(&DVector<f64>) -> DMatrix<f64>,
{
    let p = start.len();
    let mut x = start;
    let (mut fx, mut g) = f(&x);
    if !fx.is_finite() {
        return Err(Error::Domain("objective is not finite at the start point".into()));
    }
    let mut last_change = f64::INFINITY;

    for iter in 0..opts.max_iterations {
        let noise = 8.0 * f64::EPSILON * fx.abs().max(1.0);
        if max_norm(&g) < opts.gradient_tolerance && last_change < opts.relative_tolerance {
            return Ok(Minimum { x, value: fx, gradient: g, iterations: iter });
        }
        let h = hessian(&x);
        let scale = h.diagonal().iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
        let mut ridge = 0.0;
        let dir = loop {
            let shifted = &h + DMatrix::identity(p, p) * ridge;
            if let Some(c) = shifted.cholesky() {
                break -c.solve(&g);
            }
            ridge = if ridge == 0.0 { 1e-10 * scale } else { ridge * 10.0 };
            if ridge > 1e10 * scale {
                break -g.clone();
            }
        };
        let slope = g.dot(&dir);

        let mut step: f64 = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let trial = &x + step * &dir;
            let (ft, gt) = f(&trial);
            let armijo = ft <= fx + 1e-4 * step * slope;
            let flat = ft <= fx + noise && gt.dot(&dir).abs() < slope.abs();
            if ft.is_finite() && (armijo || flat) {
                accepted = Some((trial, ft, gt));
                break;
            }
            step *= 0.5;
        }
        let Some((xn, fn_, gn)) = accepted else {
            // Half the Newton decrement estimates the remaining gap; within rounding
            // noise of f there is nothing left to gain.
            if -slope / 2.0 <= noise {
                return Ok(Minimum { x, value: fx, gradient: g, iterations: iter });
            }
            return Err(Error::NoConvergence { iterations: iter, gradient_norm: max_norm(&g) });
        };
        last_change = (fx - fn_).abs() / fx.abs().max(1.0);
        x = xn;
        fx = fn_;
        g = gn;
    }
    if max_norm(&g) < opts.gradient_tolerance && last_change < opts.relative_tolerance {
        return Ok(Minimum { x, value: fx, gradient: g, iterations: opts.max_iterations });
    }
    Err(Error::NoConvergence { iterations: opts.max_iterations, gradient_norm: max_norm(&g) })
}

/// Hessian by central differences of an analytic gradient, symmetrized.
pub fn numerical_hessian<G>(mut grad: G, at: &DVector<f64>) -> DMatrix<f64>
where
    G: FnMut(&DVector<f64>) -> DVector<f64>,
{
    let p = at.len();
    let mut h = DMatrix::zeros(p, p);
    for j in 0..p {
        let step = 1e-5 * at[j].abs().max(1.0);
        let mut up = at.clone();
        let mut down = at.clone();
        up[j] += step;
        down[j] -= step;
        let col = (grad(&up) - grad(&down)) / (2.0 * step);
        h.set_column(j, &col);
    }
    (&h + h.transpose()) * 0.5
}

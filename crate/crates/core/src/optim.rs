//! Root finding and damped nonlinear least squares shared by the fitting
//! modules.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

/// Brent's method on a bracketing interval `[a, b]`.
pub fn find_root<F>(mut f: F, mut a: f64, mut b: f64, xtol: f64) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    let mut fa = f(a)?;
    let mut fb = f(b)?;
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(Error::domain(format!("root not bracketed by [{a}, {b}]")));
    }
    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut e = d;
    for _ in 0..200 {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol = 2.0 * f64::EPSILON * b.abs() + 0.5 * xtol;
        let m = 0.5 * (c - b);
        if m.abs() <= tol || fb == 0.0 {
            return Ok(b);
        }
        if e.abs() >= tol && fa.abs() > fb.abs() {
            // inverse quadratic or secant step
            let s = fb / fa;
            let (mut p, mut q) = if a == c {
                (2.0 * m * s, 1.0 - s)
            } else {
                let q = fa / fc;
                let r = fb / fc;
                (s * (2.0 * m * q * (q - r) - (b - a) * (r - 1.0)), (q - 1.0) * (r - 1.0) * (s - 1.0))
            };
            if p > 0.0 {
                q = -q;
            } else {
                p = -p;
            }
            if 2.0 * p < (3.0 * m * q - (tol * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = m;
                e = m;
            }
        } else {
            d = m;
            e = m;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol { d } else { tol.copysign(m) };
        fb = f(b)?;
    }
    Err(Error::NonConvergence { iterations: 200, reason: "Brent root search".into() })
}

/// Golden-section search for a minimum of a unimodal `f` on `[a, b]`.
pub fn minimize_scalar<F>(mut f: F, mut a: f64, mut b: f64, xtol: f64) -> (f64, f64)
where
    F: FnMut(f64) -> f64,
{
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > xtol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    if fc < fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LmOptions {
    pub max_iter: usize,
    /// Converged once a step satisfies `|dx| <= xtol (|x| + xtol)`.
    pub xtol: f64,
    /// Converged once the relative cost reduction of an accepted step falls
    /// below this value and the predicted reduction agrees.
    pub ftol: f64,
    pub initial_damping: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self { max_iter: 200, xtol: 1e-10, ftol: 1e-15, initial_damping: 1e-3 }
    }
}

#[derive(Debug, Clone)]
pub struct LmReport {
    pub params: Vec<f64>,
    pub residuals: Vec<f64>,
    pub jacobian: DMatrix<f64>,
    /// Sum of squared residuals.
    pub rss: f64,
    pub iterations: usize,
}

impl LmReport {
    /// `s² (JᵀJ)⁻¹` with `s² = rss / (m - n)`.
    pub fn covariance(&self) -> Result<DMatrix<f64>> {
        let m = self.residuals.len();
        let n = self.params.len();
        if m <= n {
            return Err(Error::invalid("covariance needs more residuals than parameters"));
        }
        let s2 = self.rss / (m - n) as f64;
        Ok(self.unscaled_covariance()? * s2)
    }

    /// `(JᵀJ)⁻¹`.
    pub fn unscaled_covariance(&self) -> Result<DMatrix<f64>> {
        let jtj = self.jacobian.transpose() * &self.jacobian;
        // equilibrate before inverting; parameters may differ by many decades
        let d: DVector<f64> = jtj.diagonal().map(|v| if v > 0.0 { 1.0 / v.sqrt() } else { 1.0 });
        let scaled = DMatrix::from_fn(jtj.nrows(), jtj.ncols(), |i, j| jtj[(i, j)] * d[i] * d[j]);
        let inv =
            scaled.try_inverse().ok_or_else(|| Error::Unphysical("singular normal matrix at the optimum".into()))?;
        Ok(DMatrix::from_fn(inv.nrows(), inv.ncols(), |i, j| inv[(i, j)] * d[i] * d[j]))
    }
}

/// Levenberg-Marquardt with Marquardt's diagonal scaling and Nielsen's
/// damping update.
///
/// `residuals` maps parameters to the residual vector, `jacobian` to its
/// `m x n` derivative. Hitting `max_iter` is an error, never a best-effort
/// return.
pub fn levenberg_marquardt<R, J>(residuals: R, jacobian: J, x0: &[f64], opts: &LmOptions) -> Result<LmReport>
where
    R: Fn(&[f64]) -> Vec<f64>,
    J: Fn(&[f64]) -> DMatrix<f64>,
{
    let n = x0.len();
    let mut x = DVector::from_column_slice(x0);
    let mut r = DVector::from_vec(residuals(x.as_slice()));
    if r.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite residuals at the starting point"));
    }
    let mut cost = r.norm_squared();
    let mut jac = jacobian(x.as_slice());
    let mut lambda = opts.initial_damping;
    let mut nu = 2.0;

    for iter in 1..=opts.max_iter {
        let jtj = jac.transpose() * &jac;
        let g = jac.transpose() * &r;
        if g.amax() == 0.0 || cost == 0.0 {
            return Ok(report(x, r, jac, cost, iter));
        }
        let diag: DVector<f64> = jtj.diagonal().map(|v| v.max(1e-300));
        let mut accepted = false;
        while !accepted {
            let mut lhs = jtj.clone();
            for i in 0..n {
                lhs[(i, i)] += lambda * diag[i];
            }
            let step = match lhs.cholesky() {
                Some(ch) => ch.solve(&(-&g)),
                None => {
                    lambda *= nu;
                    nu *= 2.0;
                    if !lambda.is_finite() {
                        return Err(Error::NonConvergence {
                            iterations: iter,
                            reason: "damped normal matrix not positive definite".into(),
                        });
                    }
                    continue;
                }
            };
            let small_step = step.norm() <= opts.xtol * (x.norm() + opts.xtol);
            let trial = &x + &step;
            let r_trial = DVector::from_vec(residuals(trial.as_slice()));
            let cost_trial = if r_trial.iter().all(|v| v.is_finite()) { r_trial.norm_squared() } else { f64::INFINITY };
            // predicted reduction of the quadratic model
            let predicted = -(step.dot(&g) * 2.0 + (&jac * &step).norm_squared());
            let actual = cost - cost_trial;
            if actual > 0.0 {
                let rho = if predicted > 0.0 { actual / predicted } else { 1.0 };
                let rel_drop = actual / cost;
                x = trial;
                r = r_trial;
                cost = cost_trial;
                jac = jacobian(x.as_slice());
                lambda *= (1.0f64 / 3.0).max(1.0 - (2.0 * rho - 1.0).powi(3));
                nu = 2.0;
                accepted = true;
                if small_step || (rel_drop <= opts.ftol && predicted / cost.max(1e-300) <= opts.ftol) {
                    return Ok(report(x, r, jac, cost, iter));
                }
            } else {
                if small_step {
                    return Ok(report(x, r, jac, cost, iter));
                }
                lambda *= nu;
                nu *= 2.0;
                if !lambda.is_finite() || lambda > 1e300 {
                    return Err(Error::NonConvergence {
                        iterations: iter,
                        reason: "damping diverged without a descent step".into(),
                    });
                }
            }
        }
    }
    Err(Error::NonConvergence {
        iterations: opts.max_iter,
        reason: "relative parameter step stayed above tolerance".into(),
    })
}

fn report(x: DVector<f64>, r: DVector<f64>, jac: DMatrix<f64>, rss: f64, iterations: usize) -> LmReport {
    LmReport { params: x.as_slice().to_vec(), residuals: r.as_slice().to_vec(), jacobian: jac, rss, iterations }
}

/// Central-difference Jacobian.
pub fn numeric_jacobian<R>(residuals: &R, x: &[f64]) -> DMatrix<f64>
where
    R: Fn(&[f64]) -> Vec<f64>,
{
    let n = x.len();
    let mut cols = Vec::with_capacity(n);
    let mut xp = x.to_vec();
    for k in 0..n {
        let h = 1e-6 * x[k].abs().max(1e-6);
        xp[k] = x[k] + h;
        let fp = residuals(&xp);
        xp[k] = x[k] - h;
        let fm = residuals(&xp);
        xp[k] = x[k];
        cols.push(fp.iter().zip(&fm).map(|(a, b)| (a - b) / (2.0 * h)).collect::<Vec<_>>());
    }
    let m = cols.first().map_or(0, |c| c.len());
    DMatrix::from_fn(m, n, |i, j| cols[j][i])
}

//! Descent machinery shared by the solvers: preconditioned nonlinear CG
//! with Armijo backtracking, truncated Newton, and the Krylov solvers
//! behind it.

use crate::error::{Result, VortexError};

/// Linear operator on flat vectors.
pub(crate) trait LinearOp {
    fn apply(&self, x: &[f64], out: &mut [f64]);
}

/// A smooth functional on flat vectors with an `L²`-type gradient.
pub(crate) trait Objective {
    fn dim(&self) -> usize;
    /// Value at `x`; `Err` marks a point outside the domain of definition.
    fn value(&self, x: &[f64]) -> Result<f64>;
    /// Value and gradient with respect to [`Objective::dot`].
    fn value_grad(&self, x: &[f64], g: &mut [f64]) -> Result<f64>;
    /// Approximate inverse Hessian.
    fn precondition(&self, r: &[f64], z: &mut [f64]);
    fn dot(&self, a: &[f64], b: &[f64]) -> f64;
    /// Stopping measure, normally the sup norm of the Euler-Lagrange residual.
    fn residual(&self, x: &[f64]) -> Result<f64>;
    /// Hessian at `x`, when available.
    fn hessian<'a>(&'a self, _x: &[f64]) -> Option<Box<dyn LinearOp + 'a>> {
        None
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct MinimizeSettings {
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Switch to truncated Newton once the residual drops below this.
    pub newton_switch: f64,
    pub armijo: f64,
    pub restart_every: usize,
}

impl Default for MinimizeSettings {
    fn default() -> Self {
        Self { tolerance: 1e-8, max_iterations: 10_000, newton_switch: 1e-3, armijo: 1e-4, restart_every: 50 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum StopReason {
    Converged,
    MaxIterations,
    LineSearchFailed,
    /// The last rejected trial failed with this error.
    Blocked(VortexError),
    Failed(VortexError),
}

#[derive(Debug, Clone)]
pub(crate) struct MinimizeOutcome {
    pub x: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
    pub history: Vec<f64>,
    pub stop: StopReason,
}

#[cfg(test)]
impl MinimizeOutcome {
    pub fn converged(&self) -> bool {
        self.stop == StopReason::Converged
    }
}

/// Roundoff allowance on energy comparisons, relative to `|f|`.
const ENERGY_ROUNDOFF: f64 = 64.0 * f64::EPSILON;

enum Trial {
    Accepted { x: Vec<f64>, value: f64, step: f64 },
    Rejected(Option<VortexError>),
}

fn backtrack<O: Objective + ?Sized>(
    obj: &O,
    x: &[f64],
    f: f64,
    d: &[f64],
    slope: f64,
    t0: f64,
    settings: &MinimizeSettings,
    res_now: Option<f64>,
) -> Trial {
    let mut t = t0;
    let mut trial = vec![0.0; x.len()];
    let mut last_err = None;
    for _ in 0..60 {
        for ((ti, xi), di) in trial.iter_mut().zip(x).zip(d) {
            *ti = xi + t * di;
        }
        match obj.value(&trial) {
            Ok(v) if v.is_finite() => {
                if v <= f + settings.armijo * t * slope {
                    return Trial::Accepted { x: trial, value: v, step: t };
                }
                // At the roundoff floor the energy cannot resolve progress;
                // accept a flat step that reduces the residual.
                if let Some(r0) = res_now {
                    if v <= f + ENERGY_ROUNDOFF * f.abs().max(1.0) {
                        if let Ok(r) = obj.residual(&trial) {
                            if r < r0 {
                                return Trial::Accepted { x: trial, value: v, step: t };
                            }
                        }
                    }
                }
                last_err = None;
            }
            Ok(_) => last_err = Some(VortexError::NonFinite("energy".into())),
            Err(e) => last_err = Some(e),
        }
        t *= 0.5;
    }
    Trial::Rejected(last_err)
}

/// Minimize `obj` from `x0`: preconditioned Polak-Ribière+ CG, then
/// truncated Newton once the residual is below `newton_switch`.
pub(crate) fn minimize<O: Objective + ?Sized>(obj: &O, x0: Vec<f64>, settings: &MinimizeSettings) -> MinimizeOutcome {
    let n = obj.dim();
    let mut x = x0;
    let mut g = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut history = Vec::new();
    let fail = |x: Vec<f64>, e: VortexError, history: Vec<f64>, it: usize| MinimizeOutcome {
        x,
        residual: f64::INFINITY,
        iterations: it,
        history,
        stop: StopReason::Failed(e),
    };
    let mut f = match obj.value_grad(&x, &mut g) {
        Ok(v) => v,
        Err(e) => return fail(x, e, history, 0),
    };
    history.push(f);
    obj.precondition(&g, &mut z);
    let mut gz = obj.dot(&g, &z);
    for (di, zi) in d.iter_mut().zip(&z) {
        *di = -zi;
    }
    let mut step = 1.0f64;
    let mut since_restart = 0usize;
    for it in 0..settings.max_iterations {
        let res = match obj.residual(&x) {
            Ok(r) => r,
            Err(e) => return fail(x, e, history, it),
        };
        let done = |x: Vec<f64>, history: Vec<f64>, stop| MinimizeOutcome {
            x,
            residual: res,
            iterations: it,
            history,
            stop,
        };
        if res < settings.tolerance {
            return done(x, history, StopReason::Converged);
        }
        let newton = res < settings.newton_switch;
        if newton {
            if let Some(h) = obj.hessian(&x) {
                let rhs: Vec<f64> = g.iter().map(|v| -v).collect();
                let eta = (res / settings.newton_switch).sqrt().clamp(1e-6, 0.1);
                let sol = pcg(&*h, |r, out| obj.precondition(r, out), |a, b| obj.dot(a, b), &rhs, eta, 200);
                log::trace!(
                    "newton-cg: {} iterations, relative residual {:e}, negative curvature {}",
                    sol.iterations,
                    sol.rel_residual,
                    sol.negative_curvature
                );
                d.copy_from_slice(&sol.x);
            }
        }
        let mut slope = obj.dot(&g, &d);
        if !(slope < 0.0) {
            for (di, zi) in d.iter_mut().zip(&z) {
                *di = -zi;
            }
            slope = -gz;
            since_restart = 0;
        }
        let t0 = if newton { 1.0 } else { (2.0 * step).min(1.0) };
        let res_now = if newton { Some(res) } else { None };
        match backtrack(obj, &x, f, &d, slope, t0, settings, res_now) {
            Trial::Accepted { x: xn, value, step: t } => {
                x = xn;
                f = value;
                step = t;
            }
            Trial::Rejected(err) => {
                // A failed CG step gets one retry along the preconditioned gradient.
                let retry = if !newton && since_restart > 0 {
                    for (di, zi) in d.iter_mut().zip(&z) {
                        *di = -zi;
                    }
                    match backtrack(obj, &x, f, &d, -gz, 1.0, settings, Some(res)) {
                        Trial::Accepted { x: xn, value, step: t } => Some((xn, value, t)),
                        Trial::Rejected(_) => None,
                    }
                } else {
                    None
                };
                match retry {
                    Some((xn, value, t)) => {
                        x = xn;
                        f = value;
                        step = t;
                        since_restart = 0;
                    }
                    None => {
                        let stop = match err {
                            Some(e) => StopReason::Blocked(e),
                            None => StopReason::LineSearchFailed,
                        };
                        return done(x, history, stop);
                    }
                }
            }
        }
        history.push(f);
        let g_old = g.clone();
        let gz_old = gz;
        if let Err(e) = obj.value_grad(&x, &mut g) {
            return fail(x, e, history, it + 1);
        }
        obj.precondition(&g, &mut z);
        gz = obj.dot(&g, &z);
        since_restart += 1;
        let beta = if since_restart >= settings.restart_every {
            since_restart = 0;
            0.0
        } else {
            let diff: Vec<f64> = g.iter().zip(&g_old).map(|(a, b)| a - b).collect();
            (obj.dot(&diff, &z) / gz_old).max(0.0)
        };
        for (di, zi) in d.iter_mut().zip(&z) {
            *di = -zi + beta * *di;
        }
    }
    let res = obj.residual(&x).unwrap_or(f64::INFINITY);
    let stop = if res < settings.tolerance { StopReason::Converged } else { StopReason::MaxIterations };
    MinimizeOutcome { x, residual: res, iterations: settings.max_iterations, history, stop }
}

pub(crate) struct KrylovOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub rel_residual: f64,
    pub negative_curvature: bool,
}

/// Preconditioned conjugate gradients for `A x = b`. Stops early on
/// negative curvature, returning the last iterate (or `b` preconditioned
/// when that happens in the first step).
pub(crate) fn pcg(
    a: &dyn LinearOp,
    mut precond: impl FnMut(&[f64], &mut [f64]),
    dot: impl Fn(&[f64], &[f64]) -> f64,
    b: &[f64],
    rel_tol: f64,
    max_iter: usize,
) -> KrylovOutcome {
    let n = b.len();
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut z = vec![0.0; n];
    precond(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let b_norm = dot(b, b).sqrt();
    let mut ap = vec![0.0; n];
    if b_norm == 0.0 {
        return KrylovOutcome { x, iterations: 0, rel_residual: 0.0, negative_curvature: false };
    }
    for k in 0..max_iter {
        a.apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            if k == 0 {
                x.copy_from_slice(&z);
            }
            let rel = dot(&r, &r).sqrt() / b_norm;
            return KrylovOutcome { x, iterations: k, rel_residual: rel, negative_curvature: true };
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rel = dot(&r, &r).sqrt() / b_norm;
        if rel < rel_tol {
            return KrylovOutcome { x, iterations: k + 1, rel_residual: rel, negative_curvature: false };
        }
        precond(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    let rel = dot(&r, &r).sqrt() / b_norm;
    KrylovOutcome { x, iterations: max_iter, rel_residual: rel, negative_curvature: false }
}

/// Restarted GMRES with right preconditioning for indefinite systems.
pub(crate) fn gmres(
    a: &dyn LinearOp,
    mut precond: impl FnMut(&[f64], &mut [f64]),
    dot: impl Fn(&[f64], &[f64]) -> f64,
    b: &[f64],
    rel_tol: f64,
    restart: usize,
    max_restarts: usize,
) -> KrylovOutcome {
    let n = b.len();
    let mut x = vec![0.0; n];
    let b_norm = dot(b, b).sqrt();
    if b_norm == 0.0 {
        return KrylovOutcome { x, iterations: 0, rel_residual: 0.0, negative_curvature: false };
    }
    let mut total = 0;
    let mut tmp = vec![0.0; n];
    let mut rel = 1.0;
    for _ in 0..max_restarts {
        // r = b - A x
        a.apply(&x, &mut tmp);
        let r: Vec<f64> = b.iter().zip(&tmp).map(|(bi, ai)| bi - ai).collect();
        let beta = dot(&r, &r).sqrt();
        rel = beta / b_norm;
        if rel < rel_tol {
            break;
        }
        let mut basis: Vec<Vec<f64>> = vec![r.iter().map(|v| v / beta).collect()];
        let mut zs: Vec<Vec<f64>> = Vec::new();
        let mut hess = vec![vec![0.0; restart]; restart + 1];
        let (mut cs, mut sn) = (vec![0.0; restart], vec![0.0; restart]);
        let mut s = vec![0.0; restart + 1];
        s[0] = beta;
        let mut k_used = 0;
        for k in 0..restart {
            let mut zk = vec![0.0; n];
            precond(&basis[k], &mut zk);
            let mut w = vec![0.0; n];
            a.apply(&zk, &mut w);
            zs.push(zk);
            for (i, v) in basis.iter().enumerate() {
                let hij = dot(&w, v);
                hess[i][k] = hij;
                for (wj, vj) in w.iter_mut().zip(v) {
                    *wj -= hij * vj;
                }
            }
            let h_next = dot(&w, &w).sqrt();
            hess[k + 1][k] = h_next;
            for i in 0..k {
                let t = cs[i] * hess[i][k] + sn[i] * hess[i + 1][k];
                hess[i + 1][k] = -sn[i] * hess[i][k] + cs[i] * hess[i + 1][k];
                hess[i][k] = t;
            }
            let denom = hess[k][k].hypot(hess[k + 1][k]);
            cs[k] = hess[k][k] / denom;
            sn[k] = hess[k + 1][k] / denom;
            hess[k][k] = denom;
            hess[k + 1][k] = 0.0;
            s[k + 1] = -sn[k] * s[k];
            s[k] *= cs[k];
            k_used = k + 1;
            total += 1;
            rel = s[k + 1].abs() / b_norm;
            if rel < rel_tol || h_next == 0.0 {
                break;
            }
            basis.push(w.iter().map(|v| v / h_next).collect());
        }
        let mut y = vec![0.0; k_used];
        for i in (0..k_used).rev() {
            let mut acc = s[i];
            for j in i + 1..k_used {
                acc -= hess[i][j] * y[j];
            }
            y[i] = acc / hess[i][i];
        }
        for (yi, zi) in y.iter().zip(&zs) {
            for (xj, zj) in x.iter_mut().zip(zi) {
                *xj += yi * zj;
            }
        }
        if rel < rel_tol {
            break;
        }
    }
    KrylovOutcome { x, iterations: total, rel_residual: rel, negative_curvature: false }
}

#[cfg(test)]
pub(crate) fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

//! Second torus solution by a mountain-pass search.
//!
//! The path runs from a local minimizer `v` to the shifted fields `v − ξ0`,
//! whose energy is lower by at least one. A string of nodes relaxes toward
//! the minimum-energy path, its highest point is refined by alternating a
//! maximization along the path tangent with descent across it, and Newton
//! iterations with GMRES solves finish on the indefinite Hessian.

use crate::error::{Result, VortexError};
use crate::lattice::ScalarField;
use crate::optim::gmres;
use crate::solution::{SolveMethod, SolveResult};
use crate::system::FieldSystem;

/// Largest admissible endpoint shift.
pub const SHIFT_CAP: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PassSettings {
    /// Nodes on the string, endpoints included.
    pub nodes: usize,
    pub max_sweeps: usize,
    /// Initial endpoint shift; doubled until the energy drop exceeds one.
    pub xi0: f64,
    /// Step of the string relaxation, in units of the preconditioned gradient.
    pub string_step: f64,
    pub refine_iterations: usize,
    /// Residual at which refinement hands over to Newton.
    pub newton_switch: f64,
    pub max_newton: usize,
    /// Residual bound; `None` uses the tolerance of the local minimizer.
    pub tolerance: Option<f64>,
    /// Distinctness floor relative to `√|Ω|`.
    pub distinct_floor: f64,
    /// Paths whose maximum stays within this of the minimum count as degenerate.
    pub degenerate_gap: f64,
}

impl Default for PassSettings {
    fn default() -> Self {
        Self {
            nodes: 32,
            max_sweeps: 400,
            xi0: 2.0,
            string_step: 0.25,
            refine_iterations: 20,
            newton_switch: 1e-2,
            max_newton: 60,
            tolerance: None,
            distinct_floor: 1e-2,
            degenerate_gap: 1e-8,
        }
    }
}

/// Discrete path with the energy of each sample.
#[derive(Debug, Clone)]
pub struct PassPath {
    pub samples: Vec<(ScalarField, ScalarField)>,
    pub energies: Vec<f64>,
}

impl PassPath {
    pub fn max_energy(&self) -> f64 {
        self.energies.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, e) in self.energies.iter().enumerate() {
            if *e > self.energies[best] {
                best = i;
            }
        }
        best
    }
}

#[derive(Debug, Clone)]
pub struct MountainPassReport {
    pub result: SolveResult,
    /// Relaxed string at the end of the sweeps.
    pub path: PassPath,
    /// Path maximum after each sweep.
    pub path_max_history: Vec<f64>,
    pub xi0: f64,
    /// Weighted `L²` distance from the local minimizer.
    pub distance: f64,
    /// Energy of the critical point minus that of the minimizer.
    pub energy_gap: f64,
}

fn shifted(x: &[f64], xi: f64) -> Vec<f64> {
    x.iter().map(|v| v - xi).collect()
}

/// Shifted endpoint `v − ξ` with `I(v − ξ) < I(v) − 1`, doubling `ξ` from `xi0`.
pub fn make_endpoint(local_min: &SolveResult, xi0: f64) -> Result<(ScalarField, ScalarField, f64)> {
    if !(xi0 > 1.0) {
        return Err(VortexError::InvalidParameter(format!("endpoint shift must exceed 1, got {xi0}")));
    }
    let sys = FieldSystem::new(local_min.params, &local_min.background);
    let x = local_min.state();
    let base = sys.energy(&x)?;
    let mut xi = xi0;
    loop {
        if xi > SHIFT_CAP {
            return Err(VortexError::ShiftCap(xi));
        }
        if sys.energy(&shifted(&x, xi))? < base - 1.0 {
            break;
        }
        xi *= 2.0;
    }
    Ok((local_min.v1.map(|v| v - xi), local_min.v2.map(|v| v - xi), xi))
}

struct Pass<'a> {
    sys: &'a FieldSystem,
}

impl Pass<'_> {
    fn norm(&self, a: &[f64]) -> f64 {
        self.sys.dot(a, a).sqrt()
    }

    fn gradient(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let mut g = vec![0.0; x.len()];
        let f = self.sys.value_grad(x, &mut g)?;
        Ok((f, g))
    }

    fn preconditioned(&self, g: &[f64]) -> Vec<f64> {
        let mut z = vec![0.0; g.len()];
        self.sys.precondition(g, &mut z);
        z
    }

    /// Armijo descent along `d` from `x` with first trial `t0`.
    fn descend(&self, x: &[f64], f: f64, g: &[f64], d: &[f64], t0: f64) -> Option<(Vec<f64>, f64)> {
        let slope = self.sys.dot(g, d);
        if !(slope < 0.0) {
            return None;
        }
        let mut t = t0;
        for _ in 0..40 {
            let trial: Vec<f64> = x.iter().zip(d).map(|(a, b)| a + t * b).collect();
            if let Ok(v) = self.sys.energy(&trial) {
                if v.is_finite() && v <= f + 1e-4 * t * slope {
                    return Some((trial, v));
                }
            }
            t *= 0.5;
        }
        None
    }

    /// Redistributes interior nodes to equal `L²` arc length.
    fn respace(&self, nodes: &mut [Vec<f64>]) {
        let n = nodes.len();
        let mut s = vec![0.0; n];
        for i in 1..n {
            let diff: Vec<f64> = nodes[i].iter().zip(&nodes[i - 1]).map(|(a, b)| a - b).collect();
            s[i] = s[i - 1] + self.norm(&diff);
        }
        let total = s[n - 1];
        if !(total > 0.0) {
            return;
        }
        let old = nodes.to_vec();
        let mut seg = 0;
        for (j, node) in nodes.iter_mut().enumerate().take(n - 1).skip(1) {
            let target = total * j as f64 / (n - 1) as f64;
            while seg + 1 < n - 1 && s[seg + 1] < target {
                seg += 1;
            }
            let len = s[seg + 1] - s[seg];
            let t = if len > 0.0 { (target - s[seg]) / len } else { 0.0 };
            for (k, v) in node.iter_mut().enumerate() {
                *v = (1.0 - t) * old[seg][k] + t * old[seg + 1][k];
            }
        }
    }

    fn tangent(&self, prev: &[f64], next: &[f64]) -> Vec<f64> {
        let d: Vec<f64> = next.iter().zip(prev).map(|(a, b)| a - b).collect();
        let n = self.norm(&d);
        d.iter().map(|v| v / n).collect()
    }

    /// Golden-section maximization of `I(x + sτ)` over `|s| ≤ h`.
    fn maximize_along(&self, x: &[f64], tau: &[f64], h: f64) -> Vec<f64> {
        let at = |s: f64| -> f64 {
            let p: Vec<f64> = x.iter().zip(tau).map(|(a, b)| a + s * b).collect();
            self.sys.energy(&p).unwrap_or(f64::NEG_INFINITY)
        };
        let phi = 0.5 * (5f64.sqrt() - 1.0);
        let (mut a, mut b) = (-h, h);
        let (mut c, mut d) = (b - phi * (b - a), a + phi * (b - a));
        let (mut fc, mut fd) = (at(c), at(d));
        for _ in 0..60 {
            if fc > fd {
                b = d;
                d = c;
                fd = fc;
                c = b - phi * (b - a);
                fc = at(c);
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + phi * (b - a);
                fd = at(d);
            }
        }
        let s = 0.5 * (a + b);
        if at(s) >= at(0.0) {
            x.iter().zip(tau).map(|(a, b)| a + s * b).collect()
        } else {
            x.to_vec()
        }
    }

    /// Newton iterations on the gradient with GMRES solves and a backtracking
    /// search on the gradient norm.
    fn newton(&self, mut x: Vec<f64>, tol: f64, max_iter: usize) -> (Vec<f64>, usize, Option<String>) {
        for it in 0..max_iter {
            let res = match self.sys.el_residual(&x) {
                Ok(r) => r,
                Err(e) => return (x, it, Some(format!("evaluation failed: {e}"))),
            };
            if res < tol {
                return (x, it, None);
            }
            let (_, g) = match self.gradient(&x) {
                Ok(v) => v,
                Err(e) => return (x, it, Some(format!("evaluation failed: {e}"))),
            };
            let merit = self.norm(&g);
            let h = match self.sys.hessian_at(&x) {
                Ok(h) => h,
                Err(e) => return (x, it, Some(format!("evaluation failed: {e}"))),
            };
            let rhs: Vec<f64> = g.iter().map(|v| -v).collect();
            let sol = gmres(&h, |r, z| self.sys.precondition(r, z), |a, b| self.sys.dot(a, b), &rhs, 1e-10, 60, 20);
            log::trace!("gmres: {} iterations, relative residual {:e}", sol.iterations, sol.rel_residual);
            let mut t = 1.0;
            let mut accepted = false;
            for _ in 0..30 {
                let trial: Vec<f64> = x.iter().zip(&sol.x).map(|(a, b)| a + t * b).collect();
                if let Ok((_, gt)) = self.gradient(&trial) {
                    if self.norm(&gt) < (1.0 - 1e-4 * t) * merit {
                        x = trial;
                        accepted = true;
                        break;
                    }
                }
                t *= 0.5;
            }
            if !accepted {
                return (x, it, Some("Newton line search failed".into()));
            }
        }
        let done = self.sys.el_residual(&x).map(|r| r < tol).unwrap_or(false);
        (x, max_iter, if done { None } else { Some("Newton iteration budget exhausted".into()) })
    }
}

/// Second critical point with default settings; errors unless it converges.
pub fn mountain_pass(local_min: &SolveResult) -> Result<SolveResult> {
    let report = mountain_pass_with(local_min, &PassSettings::default())?;
    if !report.result.converged {
        return Err(VortexError::NotConverged(
            report.result.note.clone().unwrap_or_else(|| format!("residual {:.3e}", report.result.el_residual)),
        ));
    }
    Ok(report.result)
}

/// Mountain-pass search from a converged local minimizer on a torus.
pub fn mountain_pass_with(local_min: &SolveResult, settings: &PassSettings) -> Result<MountainPassReport> {
    if !local_min.grid().is_torus() {
        return Err(VortexError::Geometry("the mountain-pass search needs a torus solution".into()));
    }
    if !local_min.converged {
        return Err(VortexError::InvalidParameter("the starting point is not a converged solution".into()));
    }
    if settings.nodes < 3 {
        return Err(VortexError::InvalidParameter("the path needs at least three nodes".into()));
    }
    let sys = FieldSystem::new(local_min.params, &local_min.background);
    let pass = Pass { sys: &sys };
    let tol = settings.tolerance.unwrap_or(local_min.tolerance);
    let x_min = local_min.state();
    let e_min = sys.energy(&x_min)?;
    let (_, _, xi0) = make_endpoint(local_min, settings.xi0)?;
    let x_end = shifted(&x_min, xi0);
    let n = settings.nodes;

    let mut nodes: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let t = j as f64 / (n - 1) as f64;
            x_min.iter().zip(&x_end).map(|(a, b)| (1.0 - t) * a + t * b).collect()
        })
        .collect();
    let mut energies: Vec<f64> = nodes.iter().map(|x| sys.energy(x)).collect::<Result<_>>()?;
    let mut history = vec![energies.iter().copied().fold(f64::NEG_INFINITY, f64::max)];

    let spacing = pass.norm(&x_end.iter().zip(&x_min).map(|(a, b)| a - b).collect::<Vec<_>>()) / (n - 1) as f64;
    let mut step = settings.string_step;
    let mut top = history[0];
    for _ in 0..settings.max_sweeps {
        let mut trial = nodes.clone();
        for j in 1..n - 1 {
            let (f, g) = pass.gradient(&nodes[j])?;
            let z = pass.preconditioned(&g);
            let tau = pass.tangent(&nodes[j - 1], &nodes[j + 1]);
            let along = sys.dot(&z, &tau);
            let d: Vec<f64> = z.iter().zip(&tau).map(|(zi, ti)| -(zi - along * ti)).collect();
            if let Some((x, _)) = pass.descend(&nodes[j], f, &g, &d, step) {
                trial[j] = x;
            }
        }
        pass.respace(&mut trial);
        let trial_energies: Vec<f64> = trial.iter().map(|x| sys.energy(x)).collect::<Result<_>>()?;
        let trial_top = trial_energies.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        // A sweep that raises the path maximum is retried with a shorter step.
        if trial_top > top {
            step *= 0.5;
            if step < 1e-4 * settings.string_step {
                break;
            }
            continue;
        }
        let moved = trial
            .iter()
            .zip(&nodes)
            .map(|(a, b)| pass.norm(&a.iter().zip(b).map(|(p, q)| p - q).collect::<Vec<_>>()))
            .fold(0.0, f64::max);
        nodes = trial;
        energies = trial_energies;
        let drop = top - trial_top;
        top = trial_top;
        history.push(top);
        step = (1.5 * step).min(1.0);
        if moved < 1e-6 * spacing || drop < 1e-10 * top.abs().max(1.0) {
            break;
        }
    }
    let path_max = energies[1..n - 1].iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if path_max - e_min < settings.degenerate_gap * e_min.abs().max(1.0) {
        return Err(VortexError::DegenerateMinimum { path_max, min_energy: e_min });
    }

    let k = (1..n - 1).max_by(|&a, &b| energies[a].total_cmp(&energies[b])).expect("interior nodes");
    let tau = pass.tangent(&nodes[k - 1], &nodes[k + 1]);
    let mut h = 0.5 * pass.norm(&nodes[k + 1].iter().zip(&nodes[k - 1]).map(|(a, b)| a - b).collect::<Vec<_>>());
    let mut x = nodes[k].clone();
    let mut refine_steps = 0;
    for _ in 0..settings.refine_iterations {
        if sys.el_residual(&x)? < settings.newton_switch {
            break;
        }
        x = pass.maximize_along(&x, &tau, h);
        let (f, g) = pass.gradient(&x)?;
        let z = pass.preconditioned(&g);
        let along = sys.dot(&z, &tau);
        let d: Vec<f64> = z.iter().zip(&tau).map(|(zi, ti)| -(zi - along * ti)).collect();
        match pass.descend(&x, f, &g, &d, 1.0) {
            Some((xn, _)) => x = xn,
            None => break,
        }
        h = (0.5 * h).max(1e-3);
        refine_steps += 1;
    }

    let (x, newton_steps, note) = pass.newton(x, tol, settings.max_newton);
    let diff: Vec<f64> = x.iter().zip(&x_min).map(|(a, b)| a - b).collect();
    let distance = pass.norm(&diff);
    let floor = settings.distinct_floor * sys.grid.area().sqrt();
    if distance < floor {
        return Err(VortexError::NotDistinct { distance, floor });
    }
    let energy = sys.energy(&x)?;
    let result = SolveResult::assemble(
        &sys,
        &x,
        &local_min.background,
        &local_min.vortices,
        SolveMethod::MountainPass,
        history.len() + refine_steps + newton_steps,
        tol,
        history.clone(),
        note,
    )?;
    let grid = sys.grid;
    let len = grid.len();
    let samples = nodes
        .iter()
        .map(|v| {
            Ok((ScalarField::new(grid, v[..len].to_vec())?, ScalarField::new(grid, v[len..].to_vec())?))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MountainPassReport {
        result,
        path: PassPath { samples, energies },
        path_max_history: history,
        xi0,
        distance,
        energy_gap: energy - e_min,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::background::{VortexPoint, VortexSet};
    use crate::coupling::CouplingParams;
    use crate::lattice::TorusDomain;
    use crate::periodic::{solve_periodic, verify_solution, PeriodicProblem, VerifyOptions};
    use std::f64::consts::PI;

    fn first_solution(factor: f64, m: usize) -> SolveResult {
        let params = CouplingParams::new(2, 3.0, factor * 4.0 / PI).unwrap();
        let vortices = VortexSet::new(vec![VortexPoint::new(1.0, 2.0, 1)], vec![VortexPoint::new(4.0, 3.5, 1)]);
        let prob = PeriodicProblem::new(params, vortices, TorusDomain::new(2.0 * PI, 2.0 * PI).unwrap(), m, m).unwrap();
        solve_periodic(&prob).unwrap()
    }

    #[test]
    fn endpoint_drops_the_energy_by_more_than_one() {
        let first = first_solution(4.0, 16);
        let sys = FieldSystem::new(first.params, &first.background);
        let (v1, v2, xi) = make_endpoint(&first, 2.0).unwrap();
        assert!(xi >= 2.0 && xi <= SHIFT_CAP);
        let mut x = v1.values().to_vec();
        x.extend_from_slice(v2.values());
        assert!(sys.energy(&x).unwrap() < first.energy_value - 1.0);
        // Far enough out the energy keeps falling as the shift grows.
        let e = |s: f64| sys.energy(&shifted(&first.state(), s)).unwrap();
        assert!(e(2.0 * xi) < e(xi) && e(4.0 * xi) < e(2.0 * xi));
    }

    #[test]
    fn endpoint_rejects_small_shifts() {
        let first = first_solution(4.0, 16);
        assert!(matches!(make_endpoint(&first, 1.0), Err(VortexError::InvalidParameter(_))));
        assert!(matches!(make_endpoint(&first, 0.0), Err(VortexError::InvalidParameter(_))));
    }

    #[test]
    fn second_solution_is_a_distinct_critical_point() {
        let first = first_solution(4.0, 16);
        let report = mountain_pass_with(&first, &PassSettings::default()).unwrap();
        let second = &report.result;
        assert!(second.converged, "residual {}", second.el_residual);
        assert_eq!(second.method, SolveMethod::MountainPass);
        assert!(report.distance > 1e-2 * 2.0 * PI);
        assert!(report.energy_gap > 0.0);
        assert!(report.path.max_energy() >= first.energy_value);
        for pair in report.path_max_history.windows(2) {
            assert!(pair[1] <= pair[0]);
        }
        assert!(verify_solution(second, &VerifyOptions::default()).passed());
    }

    #[test]
    fn unconverged_start_is_rejected() {
        let mut first = first_solution(4.0, 16);
        first.converged = false;
        assert!(matches!(mountain_pass(&first), Err(VortexError::InvalidParameter(_))));
    }

    #[test]
    fn respacing_equalizes_arc_length() {
        let first = first_solution(4.0, 16);
        let sys = FieldSystem::new(first.params, &first.background);
        let pass = Pass { sys: &sys };
        let x = first.state();
        let mut nodes: Vec<Vec<f64>> = [0.0, 0.1, 0.15, 0.9, 1.0].iter().map(|t| shifted(&x, 3.0 * t)).collect();
        pass.respace(&mut nodes);
        let gaps: Vec<f64> = nodes
            .windows(2)
            .map(|w| pass.norm(&w[1].iter().zip(&w[0]).map(|(a, b)| a - b).collect::<Vec<_>>()))
            .collect();
        for g in &gaps {
            assert!((g - gaps[0]).abs() < 1e-10 * gaps[0]);
        }
    }
}

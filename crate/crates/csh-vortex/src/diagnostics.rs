//! Fluxes, charges, energy and λ-sweeps of computed solutions.

use std::f64::consts::PI;

use crate::coupling::{build_k, rhs_from_exp, CouplingParams};
use crate::error::{Result, VortexError};
use crate::lattice::{integrate, ScalarField};
use crate::periodic::{solve_periodic, PeriodicProblem};
use crate::solution::{SolveMethod, SolveResult};
use crate::system::FieldSystem;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluxReport {
    pub flux_u1: f64,
    pub flux_sun: f64,
    pub charge_u1: f64,
    pub charge_sun: f64,
    /// Energy from the integrated Laplacian of the fields.
    pub energy: f64,
    pub n1: u32,
    pub n2: u32,
    pub expected_flux_u1: f64,
    pub expected_flux_sun: f64,
    pub expected_energy: f64,
    /// False when the input did not converge.
    pub trusted: bool,
}

impl FluxReport {
    /// Flux quantum used to normalize errors of vanishing targets.
    fn unit(&self, n: usize) -> f64 {
        4.0 * PI / (2.0 * n as f64).sqrt()
    }

    /// Relative errors of `(flux_u1, flux_sun, energy)`; targets that vanish
    /// are measured against the unit flux `4π/√(2N)`.
    pub fn relative_errors(&self, params: &CouplingParams) -> (f64, f64, f64) {
        let unit = self.unit(params.n());
        let rel = |v: f64, e: f64| (v - e).abs() / e.abs().max(unit);
        (
            rel(self.flux_u1, self.expected_flux_u1),
            rel(self.flux_sun, self.expected_flux_sun),
            rel(self.energy, self.expected_energy),
        )
    }
}

/// Quantized values `(flux_u1, flux_sun, energy)` for vortex numbers `n1`, `n2`.
pub fn quantized_values(params: &CouplingParams, n1: u32, n2: u32) -> (f64, f64, f64) {
    let n = params.nf();
    let (a, b) = (n1 as f64, n2 as f64);
    let total = (n - 1.0) * a + b;
    (
        4.0 * PI * total / (2.0 * n).sqrt(),
        4.0 * PI * ((n - 1.0) / (2.0 * n)).sqrt() * (a - b),
        4.0 * PI * total,
    )
}

/// Fluxes from the integral of the smooth right-hand side, charges from the
/// flux-charge relations, and the energy from the integrated Laplacian.
pub fn compute_fluxes(result: &SolveResult) -> Result<FluxReport> {
    let params = result.params;
    let grid = *result.grid();
    let k = build_k(&params);
    let lam = params.lambda();
    let mut f1 = vec![0.0; grid.len()];
    let mut f2 = vec![0.0; grid.len()];
    for (idx, (u1, u2)) in result.u1.values().iter().zip(result.u2.values()).enumerate() {
        let (a, b) = rhs_from_exp(u1.exp(), u2.exp(), &k, lam);
        if !(a.is_finite() && b.is_finite()) {
            return Err(VortexError::NonFinite("right-hand side".into()));
        }
        f1[idx] = a;
        f2[idx] = b;
    }
    let s1 = integrate(&ScalarField::new(grid, f1)?);
    let s2 = integrate(&ScalarField::new(grid, f2)?);
    let n = params.nf();
    let flux_u1 = -((n - 1.0) * s1 + s2) / (2.0 * n).sqrt();
    let flux_sun = -((n - 1.0) / (2.0 * n)).sqrt() * (s1 - s2);

    // On a box both terms are summed over interior cells, so the stencil sum
    // telescopes to a flux through the same contour that bounds the source.
    let sys = FieldSystem::new(params, &result.background);
    let cell = grid.cell_area();
    let weight = |idx: usize| if grid.is_torus() || !grid.is_boundary(idx) { cell } else { 0.0 };
    let lap = |v: &ScalarField, h: &ScalarField| -> f64 {
        let l = sys.laplacian(v.values());
        l.iter().zip(h.values()).enumerate().map(|(idx, (a, b))| weight(idx) * (a - b)).sum()
    };
    let l1 = lap(&result.v1, &result.background.h[0]);
    let l2 = lap(&result.v2, &result.background.h[1]);
    let energy = -((n - 1.0) * l1 + l2);

    let (n1, n2) = (result.vortices.n1(), result.vortices.n2());
    let (expected_flux_u1, expected_flux_sun, expected_energy) = quantized_values(&params, n1, n2);
    Ok(FluxReport {
        flux_u1,
        flux_sun,
        charge_u1: params.kappa1() * flux_u1,
        charge_sun: params.kappa2() * flux_sun,
        energy,
        n1,
        n2,
        expected_flux_u1,
        expected_flux_sun,
        expected_energy,
        trusted: result.converged,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum SweepStatus {
    Converged,
    NotConverged,
    /// At or below the Bradlow bound; not attempted.
    Infeasible,
    Failed(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepEntry {
    pub lambda: f64,
    pub ratio_to_bound: f64,
    pub status: SweepStatus,
    pub method: Option<SolveMethod>,
    pub el_residual: f64,
    pub iterations: usize,
    pub energy_value: f64,
    /// `‖e^{u_i} − 1‖₂` for both components.
    pub deviation: (f64, f64),
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub bound: f64,
    pub entries: Vec<SweepEntry>,
    /// Deviations strictly decrease along the converged entries.
    pub monotone: bool,
    /// Smallest sampled λ that converged.
    pub lambda0: Option<f64>,
}

fn deviation(u: &ScalarField) -> f64 {
    integrate(&u.map(|v| (v.exp() - 1.0).powi(2))).sqrt()
}

/// Solves the template at each λ in ascending order, warm-starting from the
/// last converged solution. Failures are recorded and the sweep continues.
pub fn lambda_sweep(template: &PeriodicProblem, lambdas: &[f64]) -> Result<SweepReport> {
    template.validate()?;
    if lambdas.is_empty() {
        return Err(VortexError::InvalidParameter("empty λ list".into()));
    }
    if lambdas.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(VortexError::InvalidParameter("λ values must be strictly ascending".into()));
    }
    let bound = template.bradlow_bound();
    let mut entries = Vec::with_capacity(lambdas.len());
    let mut warm: Option<(ScalarField, ScalarField)> = template.initial_guess.clone();
    for &lambda in lambdas {
        let mut entry = SweepEntry {
            lambda,
            ratio_to_bound: lambda / bound,
            status: SweepStatus::Infeasible,
            method: None,
            el_residual: f64::NAN,
            iterations: 0,
            energy_value: f64::NAN,
            deviation: (f64::NAN, f64::NAN),
            note: None,
        };
        if lambda <= bound {
            entry.note = Some(format!("λ = {lambda} is at or below the Bradlow bound {bound}"));
            entries.push(entry);
            continue;
        }
        let mut problem = template.with_lambda(lambda)?;
        problem.initial_guess = warm.clone();
        match solve_periodic(&problem) {
            Ok(r) => {
                entry.status = if r.converged { SweepStatus::Converged } else { SweepStatus::NotConverged };
                entry.method = Some(r.method);
                entry.el_residual = r.el_residual;
                entry.iterations = r.iterations;
                entry.energy_value = r.energy_value;
                entry.deviation = (deviation(&r.u1), deviation(&r.u2));
                entry.note = r.note.clone();
                if r.converged {
                    warm = Some((r.v1, r.v2));
                }
            }
            Err(e) => {
                entry.status = SweepStatus::Failed(e.to_string());
            }
        }
        entries.push(entry);
    }
    let converged: Vec<&SweepEntry> = entries.iter().filter(|e| e.status == SweepStatus::Converged).collect();
    let monotone = converged.len() >= 2
        && converged.windows(2).all(|w| w[1].deviation.0 < w[0].deviation.0 && w[1].deviation.1 < w[0].deviation.1);
    let lambda0 = converged.first().map(|e| e.lambda);
    Ok(SweepReport { bound, entries, monotone, lambda0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::background::{VortexPoint, VortexSet};
    use crate::lattice::TorusDomain;
    use crate::planar::{solve_planar, PlanarProblem};

    fn torus_problem(factor: f64, m: usize) -> PeriodicProblem {
        let params = CouplingParams::new(2, 3.0, factor * 4.0 / PI).unwrap();
        let vortices = VortexSet::new(vec![VortexPoint::new(1.0, 2.0, 1)], vec![VortexPoint::new(4.0, 3.5, 1)]);
        PeriodicProblem::new(params, vortices, TorusDomain::new(2.0 * PI, 2.0 * PI).unwrap(), m, m).unwrap()
    }

    #[test]
    fn quantized_examples() {
        let p = CouplingParams::new(2, 3.0, 1.0).unwrap();
        let (f, s, e) = quantized_values(&p, 1, 0);
        assert!((f - 2.0 * PI).abs() < 1e-14 && (s - 2.0 * PI).abs() < 1e-14 && (e - 4.0 * PI).abs() < 1e-14);
        let p3 = CouplingParams::new(3, 2.0, 1.0).unwrap();
        let (f, s, _) = quantized_values(&p3, 1, 1);
        assert!((f - 2.0 * PI * 6f64.sqrt()).abs() < 1e-13);
        assert_eq!(s, 0.0);
        let (_, s, _) = quantized_values(&p3, 4, 4);
        assert_eq!(s, 0.0);
    }

    #[test]
    fn torus_fluxes_are_quantized() {
        let r = solve_periodic(&torus_problem(4.0, 32)).unwrap();
        let rep = compute_fluxes(&r).unwrap();
        let (e1, e2, e3) = rep.relative_errors(&r.params);
        assert!(rep.trusted);
        assert!(e1 < 1e-6 && e2 < 1e-6 && e3 < 1e-6, "{rep:?}");
        assert!((rep.charge_u1 - rep.flux_u1 / (2.0 * r.params.lambda().sqrt())).abs() < 1e-12);
    }

    #[test]
    fn planar_single_vortex_flux() {
        let params = CouplingParams::new(2, 3.0, 2.0).unwrap();
        let vortices = VortexSet::new(vec![VortexPoint::new(0.0, 0.0, 1)], vec![]);
        let r = solve_planar(&PlanarProblem::new(params, vortices, 8.0, 96, 96).unwrap()).unwrap();
        let rep = compute_fluxes(&r).unwrap();
        let (e1, e2, e3) = rep.relative_errors(&params);
        assert!(e1 < 1e-3 && e2 < 1e-3 && e3 < 1e-3, "{rep:?}");
    }

    #[test]
    fn unconverged_results_are_untrusted() {
        let mut r = solve_periodic(&torus_problem(4.0, 16)).unwrap();
        r.converged = false;
        assert!(!compute_fluxes(&r).unwrap().trusted);
    }

    #[test]
    fn sweep_flags_infeasible_members_and_decreases() {
        let template = torus_problem(4.0, 32);
        let b = template.bradlow_bound();
        let rep = lambda_sweep(&template, &[0.5 * b, 4.0 * b, 8.0 * b, 16.0 * b]).unwrap();
        assert_eq!(rep.entries[0].status, SweepStatus::Infeasible);
        assert!(rep.entries[1..].iter().all(|e| e.status == SweepStatus::Converged));
        assert!(rep.monotone);
        assert_eq!(rep.lambda0, Some(4.0 * b));
    }

    #[test]
    fn single_member_sweep_echoes_one_solve() {
        let template = torus_problem(4.0, 16);
        let b = template.bradlow_bound();
        let rep = lambda_sweep(&template, &[4.0 * b]).unwrap();
        let direct = solve_periodic(&template).unwrap();
        assert_eq!(rep.entries.len(), 1);
        assert!(!rep.monotone);
        assert!((rep.entries[0].energy_value - direct.energy_value).abs() < 1e-9 * direct.energy_value.abs());
    }

    #[test]
    fn sweep_rejects_unsorted_lambdas() {
        let template = torus_problem(4.0, 16);
        assert!(lambda_sweep(&template, &[2.0, 1.0]).is_err());
        assert!(lambda_sweep(&template, &[]).is_err());
    }
}

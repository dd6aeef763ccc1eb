//! Topological vortex solutions on the plane, computed on a truncated box.
//!
//! The fluctuation `v = u − u0` takes the values `−u0` on the box edge, so
//! the total field vanishes there.

use crate::background::{planar_background, VortexSet, DEFAULT_MU};
use crate::coupling::CouplingParams;
use crate::error::{Result, VortexError};
use crate::lattice::{gradient, Geometry, GridSpec, PlanarBox, ScalarField};
use crate::optim::{minimize, MinimizeSettings, StopReason};
use crate::solution::{SolveMethod, SolveResult};
use crate::system::{EnergyObjective, FieldSystem};

/// Box edge distance from the outermost vortex, in decay lengths.
pub const MIN_DECAY_LENGTHS: f64 = 5.0;

#[derive(Debug, Clone)]
pub struct PlanarProblem {
    pub params: CouplingParams,
    pub vortices: VortexSet,
    pub grid: GridSpec,
    pub mu: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl PlanarProblem {
    pub fn new(params: CouplingParams, vortices: VortexSet, half_width: f64, m1: usize, m2: usize) -> Result<Self> {
        let grid = GridSpec::planar(PlanarBox::new(half_width)?, m1, m2)?;
        let problem =
            Self { params, vortices, grid, mu: DEFAULT_MU, tolerance: 1e-8, max_iterations: 10_000 };
        problem.validate()?;
        Ok(problem)
    }

    pub fn with_mu(mut self, mu: f64) -> Self {
        self.mu = mu;
        self
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self
    }

    pub fn half_width(&self) -> f64 {
        match self.grid.geometry {
            Geometry::Planar(b) => b.half_width,
            Geometry::Torus(_) => unreachable!("planar problems carry box grids"),
        }
    }

    /// Smallest admissible half-width: outermost vortex plus five decay lengths.
    pub fn min_half_width(params: &CouplingParams, vortices: &VortexSet) -> f64 {
        vortices.max_radius() + MIN_DECAY_LENGTHS / (params.sigma0() * (2.0 * params.lambda()).sqrt())
    }

    pub fn validate(&self) -> Result<()> {
        if !matches!(self.grid.geometry, Geometry::Planar(_)) {
            return Err(VortexError::Geometry("planar problems need a box grid".into()));
        }
        let need = Self::min_half_width(&self.params, &self.vortices);
        if self.half_width() < need {
            return Err(VortexError::InvalidParameter(format!(
                "box half-width {} is below the decay-length minimum {need:.4}",
                self.half_width()
            )));
        }
        if !(self.mu.is_finite() && self.mu > 0.0) {
            return Err(VortexError::InvalidParameter(format!("mu must be positive, got {}", self.mu)));
        }
        Ok(())
    }
}

/// Discretized planar energy at arbitrary `(v1, v2)`.
pub fn planar_energy(v1: &ScalarField, v2: &ScalarField, problem: &PlanarProblem) -> Result<f64> {
    problem.grid.ensure_same(v1.grid())?;
    problem.grid.ensure_same(v2.grid())?;
    let bg = planar_background(&problem.vortices, problem.mu, &problem.grid)?;
    let sys = FieldSystem::new(problem.params, &bg);
    let mut x = v1.values().to_vec();
    x.extend_from_slice(v2.values());
    sys.energy(&x)
}

/// `L²` gradient of [`planar_energy`] with respect to the interior values.
pub fn planar_energy_gradient(
    v1: &ScalarField,
    v2: &ScalarField,
    problem: &PlanarProblem,
) -> Result<(ScalarField, ScalarField)> {
    problem.grid.ensure_same(v1.grid())?;
    problem.grid.ensure_same(v2.grid())?;
    let bg = planar_background(&problem.vortices, problem.mu, &problem.grid)?;
    let sys = FieldSystem::new(problem.params, &bg);
    let mut x = v1.values().to_vec();
    x.extend_from_slice(v2.values());
    let mut g = vec![0.0; x.len()];
    sys.value_grad(&x, &mut g)?;
    let n = problem.grid.len();
    Ok((ScalarField::new(problem.grid, g[..n].to_vec())?, ScalarField::new(problem.grid, g[n..].to_vec())?))
}

/// Minimizes the planar energy from `v = 0` in the interior.
pub fn solve_planar(problem: &PlanarProblem) -> Result<SolveResult> {
    problem.validate()?;
    let bg = planar_background(&problem.vortices, problem.mu, &problem.grid)?;
    let sys = FieldSystem::new(problem.params, &bg);
    let n = problem.grid.len();
    let mut x0 = vec![0.0; 2 * n];
    for idx in 0..n {
        if problem.grid.is_boundary(idx) {
            x0[idx] = -bg.u0[0].values()[idx];
            x0[n + idx] = -bg.u0[1].values()[idx];
        }
    }
    let settings = MinimizeSettings {
        tolerance: problem.tolerance,
        max_iterations: problem.max_iterations,
        ..Default::default()
    };
    let out = minimize(&EnergyObjective(&sys), x0, &settings);
    let note = stop_note(&out.stop);
    SolveResult::assemble(
        &sys,
        &out.x,
        &bg,
        &problem.vortices,
        SolveMethod::Planar,
        out.iterations,
        problem.tolerance,
        out.history,
        note,
    )
}

pub(crate) fn stop_note(stop: &StopReason) -> Option<String> {
    match stop {
        StopReason::Converged => None,
        StopReason::MaxIterations => Some("iteration budget exhausted".into()),
        StopReason::LineSearchFailed => Some("line search failed".into()),
        StopReason::Blocked(e) => Some(format!("line search blocked: {e}")),
        StopReason::Failed(e) => Some(format!("evaluation failed: {e}")),
    }
}

/// Values below this are excluded from the decay fit.
pub const DECAY_FLOOR: f64 = 1e-280;

/// Least-squares exponential rates of `|w|²` and `|∇w|²` over the annulus
/// `R/2 < |x| < 0.9R`, where `w = ((N−1)u1 + u2, u1 − u2)`.
pub fn fit_decay_rate(result: &SolveResult, params: &CouplingParams) -> Result<(f64, f64)> {
    let grid = *result.grid();
    let half = match grid.geometry {
        Geometry::Planar(b) => b.half_width,
        Geometry::Torus(_) => return Err(VortexError::Geometry("decay fits need a planar solution".into())),
    };
    let nm1 = params.nf() - 1.0;
    let w1 = result.u1.zip_map(&result.u2, |a, b| nm1 * a + b)?;
    let w2 = result.u1.zip_map(&result.u2, |a, b| a - b)?;
    let (w1x, w1y) = gradient(&w1);
    let (w2x, w2y) = gradient(&w2);
    let mut pts_w = Vec::new();
    let mut pts_g = Vec::new();
    for idx in 0..grid.len() {
        if grid.is_boundary(idx) {
            continue;
        }
        let (x, y) = grid.point(idx);
        let r = x.hypot(y);
        if r <= 0.5 * half || r >= 0.9 * half {
            continue;
        }
        let mag = w1.values()[idx].powi(2) + w2.values()[idx].powi(2);
        let gmag = w1x.values()[idx].powi(2)
            + w1y.values()[idx].powi(2)
            + w2x.values()[idx].powi(2)
            + w2y.values()[idx].powi(2);
        if mag > DECAY_FLOOR {
            pts_w.push((r, mag.ln()));
        }
        if gmag > DECAY_FLOOR {
            pts_g.push((r, gmag.ln()));
        }
    }
    Ok((fit_rate(&pts_w)?, fit_rate(&pts_g)?))
}

/// Negative slope of the least-squares line through `(r, ln f)`.
fn fit_rate(points: &[(f64, f64)]) -> Result<f64> {
    if points.len() < 16 {
        return Err(VortexError::NoSignal);
    }
    let n = points.len() as f64;
    let mr = points.iter().map(|p| p.0).sum::<f64>() / n;
    let ml = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mr) * (p.1 - ml)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mr).powi(2)).sum();
    if sxx == 0.0 {
        return Err(VortexError::NoSignal);
    }
    Ok(-sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::background::VortexPoint;
    use crate::lattice::integrate;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn problem(vortices: VortexSet, m: usize) -> PlanarProblem {
        let params = CouplingParams::new(2, 3.0, 2.0).unwrap();
        PlanarProblem::new(params, vortices, 8.0, m, m).unwrap()
    }

    fn one_vortex() -> VortexSet {
        VortexSet::new(vec![VortexPoint::new(0.1, -0.2, 1)], vec![])
    }

    #[test]
    fn energy_examples() {
        let p = problem(VortexSet::empty(), 16);
        let z = ScalarField::zeros(p.grid);
        assert_eq!(planar_energy(&z, &z, &p).unwrap(), 0.0);
        let p = problem(one_vortex(), 32);
        let z = ScalarField::zeros(p.grid);
        let e = planar_energy(&z, &z, &p).unwrap();
        let bg = planar_background(&p.vortices, p.mu, &p.grid).unwrap();
        let ap = crate::coupling::build_a(&p.params, true);
        let q1 = bg.u0[0].map(|u| u.exp() - 1.0);
        let q2 = bg.u0[1].map(|u| u.exp() - 1.0);
        let lam = p.params.lambda();
        let vals: Vec<f64> = (0..p.grid.len())
            .map(|i| {
                let q = [q1.values()[i], q2.values()[i]];
                0.5 * lam * ap.bilinear(q, q)
            })
            .collect();
        let expected = integrate(&ScalarField::new(p.grid, vals).unwrap());
        assert!(e > 0.0);
        assert!((e - expected).abs() < 1e-12 * expected);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let p = problem(one_vortex(), 24);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let interior = |rng: &mut ChaCha8Rng, scale: f64| {
            let mut f = ScalarField::from_fn(p.grid, |_, _| scale * rng.gen_range(-1.0..1.0));
            for idx in 0..p.grid.len() {
                if p.grid.is_boundary(idx) {
                    f.values_mut()[idx] = 0.0;
                }
            }
            f
        };
        let v1 = interior(&mut rng, 0.3);
        let v2 = interior(&mut rng, 0.3);
        let (g1, g2) = planar_energy_gradient(&v1, &v2, &p).unwrap();
        let w = p.grid.cell_area();
        for _ in 0..10 {
            let d1 = interior(&mut rng, 1.0);
            let d2 = interior(&mut rng, 1.0);
            let eps = 1e-5;
            let shift = |s: f64| {
                let a = v1.zip_map(&d1, |x, y| x + s * y).unwrap();
                let b = v2.zip_map(&d2, |x, y| x + s * y).unwrap();
                planar_energy(&a, &b, &p).unwrap()
            };
            let fd = (shift(eps) - shift(-eps)) / (2.0 * eps);
            let an: f64 = (0..p.grid.len())
                .map(|i| w * (g1.values()[i] * d1.values()[i] + g2.values()[i] * d2.values()[i]))
                .sum();
            assert!((fd - an).abs() < 1e-6 * an.abs().max(1e-3), "fd {fd} an {an}");
        }
    }

    #[test]
    fn rejects_small_box() {
        let params = CouplingParams::new(2, 3.0, 2.0).unwrap();
        assert!(PlanarProblem::new(params, one_vortex(), 2.0, 32, 32).is_err());
        let far = VortexSet::new(vec![VortexPoint::new(6.0, 0.0, 1)], vec![]);
        assert!(PlanarProblem::new(params, far, 8.0, 32, 32).is_err());
    }

    #[test]
    fn vacuum_solve_is_zero_and_has_no_decay_signal() {
        let p = problem(VortexSet::empty(), 32);
        let r = solve_planar(&p).unwrap();
        assert!(r.converged);
        assert!(r.v1.sup_norm() < 1e-8 && r.v2.sup_norm() < 1e-8);
        assert_eq!(fit_decay_rate(&r, &p.params), Err(VortexError::NoSignal));
    }

    #[test]
    fn single_vortex_solve_stays_below_vacuum() {
        let p = problem(one_vortex(), 64);
        let r = solve_planar(&p).unwrap();
        assert!(r.converged, "{:?} {}", r.note, r.el_residual);
        for idx in 0..p.grid.len() {
            if !p.grid.is_boundary(idx) {
                assert!(r.u1.values()[idx].exp() < 1.0 && r.u2.values()[idx].exp() < 1.0);
            }
        }
        for w in r.energy_history.windows(2) {
            assert!(w[1] <= w[0] + 1e-12 * w[0].abs().max(1.0));
        }
        for idx in 0..p.grid.len() {
            if p.grid.is_boundary(idx) {
                assert_eq!(r.u1.values()[idx], 0.0);
            }
        }
    }
}

use crate::background::{BackgroundPair, VortexSet};
use crate::coupling::CouplingParams;
use crate::error::Result;
use crate::lattice::{GridSpec, ScalarField};
use crate::system::FieldSystem;

/// How a solution was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveMethod {
    Planar,
    /// Minimization of the reduced functional over the admissible set.
    Constrained,
    /// Direct local minimization of the full torus functional.
    Unconstrained,
    MountainPass,
}

impl SolveMethod {
    pub fn name(&self) -> &'static str {
        match self {
            SolveMethod::Planar => "planar",
            SolveMethod::Constrained => "constrained",
            SolveMethod::Unconstrained => "unconstrained",
            SolveMethod::MountainPass => "mountain-pass",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        [SolveMethod::Planar, SolveMethod::Constrained, SolveMethod::Unconstrained, SolveMethod::MountainPass]
            .into_iter()
            .find(|m| m.name() == name)
    }
}

/// Fields and diagnostics of one solve.
#[derive(Debug, Clone)]
pub struct SolveResult {
    pub v1: ScalarField,
    pub v2: ScalarField,
    pub u1: ScalarField,
    pub u2: ScalarField,
    /// Sup norm of the discrete Euler-Lagrange residual away from fixed and core nodes.
    pub el_residual: f64,
    pub energy_value: f64,
    pub iterations: usize,
    pub converged: bool,
    pub tolerance: f64,
    pub energy_history: Vec<f64>,
    pub params: CouplingParams,
    pub vortices: VortexSet,
    pub background: BackgroundPair,
    pub method: SolveMethod,
    /// Recovered means `(c1, c2)` of a constrained torus solve.
    pub means: Option<(f64, f64)>,
    /// Constraint margins at the returned point (torus only).
    pub margins: Option<(f64, f64)>,
    /// Why the solver stopped, when it did not converge.
    pub note: Option<String>,
}

impl SolveResult {
    pub fn grid(&self) -> &GridSpec {
        self.v1.grid()
    }

    /// `v1` then `v2` as one vector.
    pub fn state(&self) -> Vec<f64> {
        let mut x = self.v1.values().to_vec();
        x.extend_from_slice(self.v2.values());
        x
    }

    /// Rebuilds a result from stored fluctuations; residual and energy are recomputed.
    pub fn from_fields(
        v1: ScalarField,
        v2: ScalarField,
        params: CouplingParams,
        vortices: VortexSet,
        background: BackgroundPair,
        method: SolveMethod,
        tolerance: f64,
    ) -> Result<Self> {
        background.grid().ensure_same(v1.grid())?;
        background.grid().ensure_same(v2.grid())?;
        let sys = FieldSystem::new(params, &background);
        let mut x = v1.into_values();
        x.extend_from_slice(v2.values());
        Self::assemble(&sys, &x, &background, &vortices, method, 0, tolerance, Vec::new(), None)
    }

    #[allow(clippy::too_many_arguments)]
    pub(crate) fn assemble(
        sys: &FieldSystem,
        x: &[f64],
        background: &BackgroundPair,
        vortices: &VortexSet,
        method: SolveMethod,
        iterations: usize,
        tolerance: f64,
        energy_history: Vec<f64>,
        note: Option<String>,
    ) -> Result<Self> {
        let grid = sys.grid;
        let (a, b) = sys.split(x);
        let v1 = ScalarField::new(grid, a.to_vec())?;
        let v2 = ScalarField::new(grid, b.to_vec())?;
        let u1 = v1.zip_map(&background.u0[0], |v, u| v + u)?;
        let u2 = v2.zip_map(&background.u0[1], |v, u| v + u)?;
        let el_residual = sys.el_residual(x).unwrap_or(f64::INFINITY);
        let energy_value = sys.energy(x).unwrap_or(f64::NAN);
        Ok(Self {
            v1,
            v2,
            u1,
            u2,
            el_residual,
            energy_value,
            iterations,
            converged: el_residual < tolerance,
            tolerance,
            energy_history,
            params: sys.params,
            vortices: vortices.clone(),
            background: background.clone(),
            method,
            means: None,
            margins: None,
            note,
        })
    }
}

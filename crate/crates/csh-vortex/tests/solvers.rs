use std::f64::consts::PI;

use csh_vortex::background::{VortexPoint, VortexSet};
use csh_vortex::coupling::CouplingParams;
use csh_vortex::diagnostics::compute_fluxes;
use csh_vortex::lattice::{ScalarField, TorusDomain};
use csh_vortex::mountain_pass::mountain_pass;
use csh_vortex::periodic::{
    integral_identities, solve_mean_fixed_point, solve_periodic, verify_solution, ConstraintState, PeriodicProblem,
    VerifyOptions,
};
use csh_vortex::planar::{solve_planar, PlanarProblem};
use csh_vortex::VortexError;
use proptest::prelude::*;

fn torus(vortices: VortexSet, factor: f64, m: usize) -> PeriodicProblem {
    let domain = TorusDomain::new(2.0 * PI, 2.0 * PI).unwrap();
    let p = PeriodicProblem::new(CouplingParams::new(2, 3.0, 1.0).unwrap(), vortices, domain, m, m).unwrap();
    let bound = p.bradlow_bound();
    p.with_lambda(factor * bound).unwrap()
}

fn pair(a: (f64, f64), b: (f64, f64)) -> VortexSet {
    VortexSet::new(vec![VortexPoint::new(a.0, a.1, 1)], vec![VortexPoint::new(b.0, b.1, 1)])
}

#[test]
fn shifting_vortices_by_a_grid_step_shifts_the_solution() {
    let m = 32;
    let h = 2.0 * PI / m as f64;
    let a = solve_periodic(&torus(pair((1.0, 2.0), (4.0, 3.5)), 4.0, m)).unwrap();
    let b = solve_periodic(&torus(pair((1.0 + h, 2.0), (4.0 + h, 3.5)), 4.0, m)).unwrap();
    assert!(a.converged && b.converged);
    let mut worst = 0.0f64;
    for j in 0..m {
        for i in 0..m {
            let src = a.grid().index(i, j);
            let dst = a.grid().index((i + 1) % m, j);
            worst = worst.max((a.u1.values()[src] - b.u1.values()[dst]).abs());
            worst = worst.max((a.u2.values()[src] - b.u2.values()[dst]).abs());
        }
    }
    assert!(worst < 1e-7, "shift mismatch {worst:e}");
}

#[test]
fn planar_single_vortex_is_mirror_symmetric() {
    let params = CouplingParams::new(2, 3.0, 2.0).unwrap();
    let vortices = VortexSet::new(vec![VortexPoint::new(0.0, 0.0, 1)], vec![]);
    let r = solve_planar(&PlanarProblem::new(params, vortices, 8.0, 48, 48).unwrap()).unwrap();
    assert!(r.converged);
    let g = *r.grid();
    let mut worst = 0.0f64;
    for j in 0..g.m2 {
        for i in 0..g.m1 {
            let a = r.u1.values()[g.index(i, j)];
            worst = worst.max((a - r.u1.values()[g.index(g.m1 - 1 - i, j)]).abs());
            worst = worst.max((a - r.u1.values()[g.index(j, i)]).abs());
        }
    }
    assert!(worst < 1e-8, "asymmetry {worst:e}");
}

#[test]
fn mountain_pass_needs_a_converged_torus_minimizer() {
    let params = CouplingParams::new(2, 3.0, 2.0).unwrap();
    let vortices = VortexSet::new(vec![VortexPoint::new(0.0, 0.0, 1)], vec![]);
    let planar = solve_planar(&PlanarProblem::new(params, vortices, 8.0, 32, 32).unwrap()).unwrap();
    assert!(matches!(mountain_pass(&planar), Err(VortexError::Geometry(_))));

    let mut p = torus(pair((1.0, 2.0), (4.0, 3.5)), 4.0, 16);
    p.max_iterations = 1;
    let mut early = solve_periodic(&p).unwrap();
    early.converged = false;
    assert!(mountain_pass(&early).is_err());
}

#[test]
fn higher_multiplicity_fluxes_are_quantized() {
    let vortices = VortexSet::new(
        vec![VortexPoint::new(1.0, 1.0, 2)],
        vec![VortexPoint::new(3.0, 4.0, 1), VortexPoint::new(5.0, 2.0, 1)],
    );
    let r = solve_periodic(&torus(vortices, 6.0, 32)).unwrap();
    assert!(r.converged);
    let f = compute_fluxes(&r).unwrap();
    let (e1, e2, e3) = f.relative_errors(&r.params);
    assert!(e1 < 1e-8 && e2 < 1e-8 && e3 < 1e-8, "{e1:e} {e2:e} {e3:e}");
    assert!((f.flux_u1 - 8.0 * PI).abs() < 1e-6);
    assert!(verify_solution(&r, &VerifyOptions::default()).passed());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn torus_solutions_obey_the_maximum_principle(
        x1 in 0.0..6.2f64, y1 in 0.0..6.2f64, x2 in 0.0..6.2f64, y2 in 0.0..6.2f64, factor in 3.0..12.0f64,
    ) {
        let r = solve_periodic(&torus(pair((x1, y1), (x2, y2)), factor, 16)).unwrap();
        prop_assert!(r.converged);
        let (i1, i2) = integral_identities(&r);
        prop_assert!(i1 < 1e-6 && i2 < 1e-6);
        for idx in 0..r.grid().len() {
            prop_assert!(r.u1.values()[idx].exp() < 1.0 && r.u2.values()[idx].exp() < 1.0);
        }
    }

    #[test]
    fn recovered_means_are_nonpositive(amp in 0.0..1.0f64, phase in 0.0..6.2f64, factor in 4.0..40.0f64, kappa in 1.1..5.0f64) {
        let domain = TorusDomain::new(2.0 * PI, 2.0 * PI).unwrap();
        let base = CouplingParams::new(3, kappa, 1.0).unwrap();
        let p = PeriodicProblem::new(base, pair((1.0, 1.0), (3.0, 5.0)), domain, 16, 16).unwrap();
        let p = p.with_lambda(factor * p.bradlow_bound()).unwrap();
        let bg = p.background().unwrap();
        let w1 = ScalarField::from_fn(p.grid, |x, y| amp * (x + phase).sin() * y.cos());
        let w2 = ScalarField::from_fn(p.grid, |x, _| amp * (2.0 * x - phase).cos());
        let s = ConstraintState::from_fields(&w1, &w2, &bg, &p.params, &p.vortices).unwrap();
        let (m1, m2) = s.margins(&p.params);
        prop_assume!(m1 > 0.0 && m2 > 0.0);
        let fp = solve_mean_fixed_point(&s, &p.params).unwrap();
        prop_assert!(fp.bounds_hold);
        prop_assert!(fp.c1 <= 0.0 && fp.c2 <= 0.0);
        prop_assert!(fp.substitution_residual.0 < 1e-10 && fp.substitution_residual.1 < 1e-10);
    }
}

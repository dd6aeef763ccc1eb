//! Singular background functions carrying the vortex points, and their
//! smooth source densities.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;

use crate::error::{Result, VortexError};
use crate::lattice::{fft_for, Geometry, GridSpec, ScalarField, Spectrum};

/// Lower clamp for `u0` at nodes that coincide with a vortex point.
pub const CORE_CLAMP: f64 = -700.0;

pub const DEFAULT_MU: f64 = 10.0;

/// Default mollifier width of a torus delta, in grid spacings.
pub const DEFAULT_CORE_WIDTH_CELLS: f64 = 2.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VortexPoint {
    pub x: f64,
    pub y: f64,
    pub multiplicity: u32,
}

impl VortexPoint {
    pub fn new(x: f64, y: f64, multiplicity: u32) -> Self {
        Self { x, y, multiplicity }
    }
}

/// Prescribed zeros of the two Higgs components.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct VortexSet {
    pub points1: Vec<VortexPoint>,
    pub points2: Vec<VortexPoint>,
}

impl VortexSet {
    pub fn new(points1: Vec<VortexPoint>, points2: Vec<VortexPoint>) -> Self {
        Self { points1, points2 }
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn n1(&self) -> u32 {
        self.points1.iter().map(|p| p.multiplicity).sum()
    }

    pub fn n2(&self) -> u32 {
        self.points2.iter().map(|p| p.multiplicity).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.n1() == 0 && self.n2() == 0
    }

    pub fn component(&self, i: usize) -> &[VortexPoint] {
        if i == 0 {
            &self.points1
        } else {
            &self.points2
        }
    }

    pub fn all_points(&self) -> impl Iterator<Item = &VortexPoint> {
        self.points1.iter().chain(self.points2.iter())
    }

    /// Largest distance of a point from the origin.
    pub fn max_radius(&self) -> f64 {
        self.all_points().map(|p| p.x.hypot(p.y)).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BackgroundKind {
    Planar { mu: f64 },
    Periodic { core_width: f64 },
}

/// Background `u0_i` and source density `h_i`, with `Δu0_i = −h_i` away
/// from the vortex points. On a torus `h_i` is the constant `4πn_i/|Ω|`.
#[derive(Debug, Clone, PartialEq)]
pub struct BackgroundPair {
    pub u0: [ScalarField; 2],
    pub h: [ScalarField; 2],
    pub kind: BackgroundKind,
    core: Vec<bool>,
}

impl BackgroundPair {
    pub fn grid(&self) -> &GridSpec {
        self.u0[0].grid()
    }

    pub fn mu(&self) -> Option<f64> {
        match self.kind {
            BackgroundKind::Planar { mu } => Some(mu),
            BackgroundKind::Periodic { .. } => None,
        }
    }

    /// Nodes where a background sits at the clamp (a vortex point lies on the node).
    pub fn is_core(&self, idx: usize) -> bool {
        self.core[idx]
    }

    pub fn core_mask(&self) -> &[bool] {
        &self.core
    }
}

/// Closed-form planar background `u0 = −Σ m ln(1 + μ/|x−p|²)`, `h = Σ 4mμ/(μ+|x−p|²)²`.
pub fn planar_background(vortices: &VortexSet, mu: f64, grid: &GridSpec) -> Result<BackgroundPair> {
    if !(mu.is_finite() && mu > 0.0) {
        return Err(VortexError::InvalidParameter(format!("mu must be positive, got {mu}")));
    }
    let half = match grid.geometry {
        Geometry::Planar(b) => b.half_width,
        Geometry::Torus(_) => return Err(VortexError::Geometry("planar background needs a box grid".into())),
    };
    for p in vortices.all_points() {
        if p.x.abs() > half || p.y.abs() > half {
            return Err(VortexError::PointOutsideDomain { x: p.x, y: p.y });
        }
    }
    let build = |points: &[VortexPoint]| {
        let u0 = ScalarField::from_fn(*grid, |x, y| {
            let mut u = 0.0;
            for p in points {
                let r2 = (x - p.x).powi(2) + (y - p.y).powi(2);
                if r2 == 0.0 {
                    return CORE_CLAMP;
                }
                u -= p.multiplicity as f64 * (mu / r2).ln_1p();
            }
            u.max(CORE_CLAMP)
        });
        let h = ScalarField::from_fn(*grid, |x, y| {
            points
                .iter()
                .map(|p| {
                    let r2 = (x - p.x).powi(2) + (y - p.y).powi(2);
                    4.0 * p.multiplicity as f64 * mu / (mu + r2).powi(2)
                })
                .sum()
        });
        (u0, h)
    };
    let (u01, h1) = build(&vortices.points1);
    let (u02, h2) = build(&vortices.points2);
    let core = u01.values().iter().zip(u02.values()).map(|(&a, &b)| a <= CORE_CLAMP || b <= CORE_CLAMP).collect();
    Ok(BackgroundPair { u0: [u01, u02], h: [h1, h2], kind: BackgroundKind::Planar { mu }, core })
}

/// Mean-zero torus background with the default mollifier width.
pub fn periodic_background(vortices: &VortexSet, grid: &GridSpec) -> Result<BackgroundPair> {
    let (hx, hy) = grid.spacing();
    periodic_background_with_core(vortices, grid, DEFAULT_CORE_WIDTH_CELLS * hx.max(hy))
}

/// Mean-zero spectral solution of `Δu0 = 4πΣ mδ_p − 4πn/|Ω|`. Each delta
/// enters through its Fourier series, damped by `exp(−|k|²σ²/2)` with
/// `σ = core_width`; `core_width = 0` keeps the sharp Nyquist truncation.
pub fn periodic_background_with_core(
    vortices: &VortexSet,
    grid: &GridSpec,
    core_width: f64,
) -> Result<BackgroundPair> {
    let domain = grid
        .torus_domain()
        .ok_or_else(|| VortexError::Geometry("periodic background needs a torus grid".into()))?;
    if !(core_width.is_finite() && core_width >= 0.0) {
        return Err(VortexError::InvalidParameter(format!("core width must be non-negative, got {core_width}")));
    }
    for p in vortices.all_points() {
        if !domain.contains(p.x, p.y) {
            return Err(VortexError::PointOutsideDomain { x: p.x, y: p.y });
        }
    }
    let u01 = delta_background(&vortices.points1, grid, core_width)?;
    let u02 = delta_background(&vortices.points2, grid, core_width)?;
    let area = domain.area();
    let h1 = ScalarField::constant(*grid, 4.0 * PI * vortices.n1() as f64 / area);
    let h2 = ScalarField::constant(*grid, 4.0 * PI * vortices.n2() as f64 / area);
    Ok(BackgroundPair {
        u0: [u01, u02],
        h: [h1, h2],
        kind: BackgroundKind::Periodic { core_width },
        core: vec![false; grid.len()],
    })
}

/// Spectral Green's-function sum for one component; points need not lie in the cell.
fn delta_background(points: &[VortexPoint], grid: &GridSpec, core_width: f64) -> Result<ScalarField> {
    let spec = Spectrum::new(grid)?;
    let fft = fft_for(grid.m1, grid.m2);
    let area = grid.area();
    let n_nodes = grid.len() as f64;
    let m1 = grid.m1;
    let coeffs: Vec<Complex64> = (0..grid.len())
        .map(|idx| {
            let k2 = spec.k2(idx);
            if k2 == 0.0 || points.is_empty() {
                return Complex64::new(0.0, 0.0);
            }
            let (kx, ky) = (spec.kx[idx % m1], spec.ky[idx / m1]);
            let damping = (-0.5 * k2 * core_width * core_width).exp();
            let mut c = Complex64::new(0.0, 0.0);
            for p in points {
                c += Complex64::from_polar(p.multiplicity as f64, -(kx * p.x + ky * p.y));
            }
            c * (-4.0 * PI * damping * n_nodes / (area * k2))
        })
        .collect();
    ScalarField::new(*grid, fft.inverse_real(coeffs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{integrate, laplacian, PlanarBox, TorusDomain};

    fn torus(m: usize) -> GridSpec {
        GridSpec::torus(TorusDomain::new(2.0 * PI, 2.0 * PI).unwrap(), m, m).unwrap()
    }

    fn planar(r: f64, m: usize) -> GridSpec {
        GridSpec::planar(PlanarBox::new(r).unwrap(), m, m).unwrap()
    }

    #[test]
    fn empty_sets_give_zero_backgrounds() {
        let bg = planar_background(&VortexSet::empty(), 10.0, &planar(5.0, 16)).unwrap();
        for i in 0..2 {
            assert_eq!(bg.u0[i].sup_norm(), 0.0);
            assert_eq!(bg.h[i].sup_norm(), 0.0);
        }
        let bg = periodic_background(&VortexSet::empty(), &torus(16)).unwrap();
        assert_eq!(bg.u0[0].sup_norm(), 0.0);
    }

    #[test]
    fn planar_closed_form_identity() {
        let vs = VortexSet::new(vec![VortexPoint::new(0.0, 0.0, 1)], vec![]);
        let g = planar(4.0, 32);
        let bg = planar_background(&vs, 10.0, &g).unwrap();
        for idx in 0..g.len() {
            let (x, y) = g.point(idx);
            let r2 = x * x + y * y;
            let resid = bg.u0[0].values()[idx] - r2.ln() + (10.0 + r2).ln();
            assert!(resid.abs() < 1e-13);
            assert!(bg.u0[0].values()[idx] < 0.0);
        }
    }

    #[test]
    fn planar_core_node_is_clamped() {
        let grid = planar(4.0, 8);
        let on_node = VortexSet::new(vec![VortexPoint::new(grid.x(3), grid.y(4), 1)], vec![]);
        let bg = planar_background(&on_node, 10.0, &grid).unwrap();
        let idx = grid.index(3, 4);
        assert_eq!(bg.u0[0].values()[idx], CORE_CLAMP);
        assert!(bg.is_core(idx));
        assert!(bg.u0[0].values()[idx].exp() < 1e-300);
        assert!(bg.h[0].values()[idx].is_finite());
        assert!(planar_background(&on_node, 0.0, &grid).is_err());
        let outside = VortexSet::new(vec![VortexPoint::new(5.0, 0.0, 1)], vec![]);
        assert!(planar_background(&outside, 10.0, &grid).is_err());
    }

    #[test]
    fn planar_source_integrates_to_four_pi() {
        for mu in [1.0, 10.0] {
            let vs = VortexSet::new(vec![VortexPoint::new(0.1, -0.2, 1)], vec![VortexPoint::new(-0.3, 0.0, 2)]);
            let g = planar(400.0, 1600);
            let bg = planar_background(&vs, mu, &g).unwrap();
            assert!((integrate(&bg.h[0]) - 4.0 * PI).abs() < 4.0 * PI * 1e-3, "{}", integrate(&bg.h[0]));
            assert!((integrate(&bg.h[1]) - 8.0 * PI).abs() < 8.0 * PI * 1e-3);
        }
    }

    #[test]
    fn planar_source_l2_scales_like_inverse_sqrt_mu() {
        let vs = VortexSet::new(vec![VortexPoint::new(0.0, 0.0, 1)], vec![]);
        let mut c = Vec::new();
        for mu in [1.0f64, 10.0, 100.0] {
            let g = planar(30.0 * mu.sqrt(), 600);
            let bg = planar_background(&vs, mu, &g).unwrap();
            c.push(bg.h[0].l2_norm() * mu.sqrt());
        }
        let fitted = c.iter().copied().fold(0.0, f64::max);
        let exact = (16.0f64 * PI / 3.0).sqrt();
        assert!((fitted - exact).abs() < 1e-2 * exact, "{c:?}");
        for v in c {
            assert!(v <= fitted);
        }
    }

    #[test]
    fn periodic_mean_zero_and_sink() {
        let vs = VortexSet::new(vec![VortexPoint::new(1.0, 2.0, 1)], vec![VortexPoint::new(4.0, 3.5, 2)]);
        let mut errs = Vec::new();
        for m in [32, 64, 128] {
            let g = torus(m);
            let bg = periodic_background(&vs, &g).unwrap();
            assert!(bg.u0[0].values().iter().sum::<f64>().abs() / (m * m) as f64 <= 1e-14);
            assert!(bg.u0[1].values().iter().sum::<f64>().abs() / (m * m) as f64 <= 1e-14);
            let lap = laplacian(&bg.u0[0]);
            let mut err = 0.0f64;
            for idx in 0..g.len() {
                let (x, y) = g.point(idx);
                let dx = (x - 1.0).abs().min(2.0 * PI - (x - 1.0).abs());
                let dy = (y - 2.0).abs().min(2.0 * PI - (y - 2.0).abs());
                if dx.hypot(dy) > PI / 2.0 {
                    err = err.max((lap.values()[idx] + 1.0 / PI).abs() * PI);
                }
            }
            errs.push(err);
        }
        assert!(errs[2] < errs[1] && errs[1] < errs[0], "{errs:?}");
        assert!(errs[2] < 1e-10, "{errs:?}");
    }

    #[test]
    fn periodic_rejects_outside_points_and_is_lattice_periodic() {
        let g = torus(32);
        let out = VortexSet::new(vec![VortexPoint::new(-0.5, 1.0, 1)], vec![]);
        assert!(matches!(periodic_background(&out, &g), Err(VortexError::PointOutsideDomain { .. })));
        assert!(periodic_background(&out, &planar(3.0, 32)).is_err());
        let base = [VortexPoint::new(1.3, 2.1, 1), VortexPoint::new(5.0, 0.4, 2)];
        let shifted: Vec<VortexPoint> =
            base.iter().map(|p| VortexPoint::new(p.x + 2.0 * PI, p.y - 4.0 * PI, p.multiplicity)).collect();
        let a = delta_background(&base, &g, 0.2).unwrap();
        let b = delta_background(&shifted, &g, 0.2).unwrap();
        let diff = a.zip_map(&b, |x, y| x - y).unwrap().sup_norm();
        assert!(diff < 1e-12 * a.sup_norm(), "{diff}");
    }
}

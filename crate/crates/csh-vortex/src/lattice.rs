//! Uniform grids on a torus or a truncated planar box, with quadrature,
//! Laplacians, a mean-zero Poisson solver and gradient inner products.
//!
//! Fields are stored row-major: node `(i, j)` lives at `j * m1 + i`, with
//! `i` running along `x`.

use std::cell::RefCell;
use std::collections::HashMap;
use std::rc::Rc;

use rustfft::num_complex::Complex64;

use crate::error::{Result, VortexError};
use crate::fft::{wave_numbers, Fft2};

/// Rectangular fundamental cell `[0, l1) × [0, l2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TorusDomain {
    pub l1: f64,
    pub l2: f64,
}

impl TorusDomain {
    pub fn new(l1: f64, l2: f64) -> Result<Self> {
        if !(l1.is_finite() && l1 > 0.0 && l2.is_finite() && l2 > 0.0) {
            return Err(VortexError::InvalidParameter(format!("cell lengths must be positive, got {l1} x {l2}")));
        }
        Ok(Self { l1, l2 })
    }

    pub fn area(&self) -> f64 {
        self.l1 * self.l2
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        (0.0..self.l1).contains(&x) && (0.0..self.l2).contains(&y)
    }
}

/// Square box `[-R, R]²` standing in for the plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanarBox {
    pub half_width: f64,
}

impl PlanarBox {
    pub fn new(half_width: f64) -> Result<Self> {
        if !(half_width.is_finite() && half_width > 0.0) {
            return Err(VortexError::InvalidParameter(format!("box half-width must be positive, got {half_width}")));
        }
        Ok(Self { half_width })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Geometry {
    Torus(TorusDomain),
    Planar(PlanarBox),
}

/// Sample counts plus geometry. Torus nodes sit at `x = i·L1/m1`; box nodes
/// include both edges, `x = −R + i·2R/(m1−1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub m1: usize,
    pub m2: usize,
    pub geometry: Geometry,
}

impl GridSpec {
    pub fn torus(domain: TorusDomain, m1: usize, m2: usize) -> Result<Self> {
        Self::checked(m1, m2, Geometry::Torus(domain))
    }

    pub fn planar(planar: PlanarBox, m1: usize, m2: usize) -> Result<Self> {
        Self::checked(m1, m2, Geometry::Planar(planar))
    }

    fn checked(m1: usize, m2: usize, geometry: Geometry) -> Result<Self> {
        for m in [m1, m2] {
            if m < 8 || m % 2 != 0 {
                return Err(VortexError::InvalidParameter(format!(
                    "grid sizes must be even and at least 8, got {m1}x{m2}"
                )));
            }
        }
        Ok(Self { m1, m2, geometry })
    }

    pub fn len(&self) -> usize {
        self.m1 * self.m2
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn torus_domain(&self) -> Option<TorusDomain> {
        match self.geometry {
            Geometry::Torus(d) => Some(d),
            Geometry::Planar(_) => None,
        }
    }

    pub fn is_torus(&self) -> bool {
        matches!(self.geometry, Geometry::Torus(_))
    }

    pub fn spacing(&self) -> (f64, f64) {
        match self.geometry {
            Geometry::Torus(d) => (d.l1 / self.m1 as f64, d.l2 / self.m2 as f64),
            Geometry::Planar(b) => {
                (2.0 * b.half_width / (self.m1 - 1) as f64, 2.0 * b.half_width / (self.m2 - 1) as f64)
            }
        }
    }

    pub fn cell_area(&self) -> f64 {
        let (hx, hy) = self.spacing();
        hx * hy
    }

    /// Area of the computational region.
    pub fn area(&self) -> f64 {
        match self.geometry {
            Geometry::Torus(d) => d.area(),
            Geometry::Planar(b) => 4.0 * b.half_width * b.half_width,
        }
    }

    /// Physical extents `(x_len, y_len)`.
    pub fn extents(&self) -> (f64, f64) {
        match self.geometry {
            Geometry::Torus(d) => (d.l1, d.l2),
            Geometry::Planar(b) => (2.0 * b.half_width, 2.0 * b.half_width),
        }
    }

    pub fn x(&self, i: usize) -> f64 {
        let (hx, _) = self.spacing();
        match self.geometry {
            Geometry::Torus(_) => i as f64 * hx,
            Geometry::Planar(b) => -b.half_width + i as f64 * hx,
        }
    }

    pub fn y(&self, j: usize) -> f64 {
        let (_, hy) = self.spacing();
        match self.geometry {
            Geometry::Torus(_) => j as f64 * hy,
            Geometry::Planar(b) => -b.half_width + j as f64 * hy,
        }
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.m1 + i
    }

    pub fn point(&self, idx: usize) -> (f64, f64) {
        (self.x(idx % self.m1), self.y(idx / self.m1))
    }

    /// Box nodes on the outer edge; always false on a torus.
    pub fn is_boundary(&self, idx: usize) -> bool {
        match self.geometry {
            Geometry::Torus(_) => false,
            Geometry::Planar(_) => {
                let (i, j) = (idx % self.m1, idx / self.m1);
                i == 0 || j == 0 || i == self.m1 - 1 || j == self.m2 - 1
            }
        }
    }

    /// Quadrature weight of a node (rectangle rule on a torus, trapezoid on a box).
    pub fn weight(&self, idx: usize) -> f64 {
        let base = self.cell_area();
        match self.geometry {
            Geometry::Torus(_) => base,
            Geometry::Planar(_) => {
                let (i, j) = (idx % self.m1, idx / self.m1);
                let wx = if i == 0 || i == self.m1 - 1 { 0.5 } else { 1.0 };
                let wy = if j == 0 || j == self.m2 - 1 { 0.5 } else { 1.0 };
                base * wx * wy
            }
        }
    }

    pub fn weights(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.weight(i)).collect()
    }

    pub(crate) fn ensure_same(&self, other: &GridSpec) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(VortexError::GridMismatch(format!(
                "{}x{} {:?} vs {}x{} {:?}",
                self.m1, self.m2, self.geometry, other.m1, other.m2, other.geometry
            )))
        }
    }
}

/// Real samples on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: GridSpec,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(VortexError::GridMismatch(format!(
                "expected {} samples, got {}",
                grid.len(),
                values.len()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: GridSpec) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: GridSpec, c: f64) -> Self {
        Self { grid, values: vec![c; grid.len()] }
    }

    pub fn from_fn(grid: GridSpec, mut f: impl FnMut(f64, f64) -> f64) -> Self {
        let values = (0..grid.len())
            .map(|idx| {
                let (x, y) = grid.point(idx);
                f(x, y)
            })
            .collect();
        Self { grid, values }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { grid: self.grid, values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn zip_map(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.grid.ensure_same(&other.grid)?;
        Ok(Self { grid: self.grid, values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect() })
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Quadrature mean over the domain.
    pub fn mean(&self) -> f64 {
        integrate(self) / self.grid.area()
    }

    /// `(∫ f²)^{1/2}`.
    pub fn l2_norm(&self) -> f64 {
        integrate(&self.map(|v| v * v)).sqrt()
    }
}

/// Quadrature of `f` over its domain.
pub fn integrate(f: &ScalarField) -> f64 {
    let grid = f.grid();
    match grid.geometry {
        Geometry::Torus(_) => f.values.iter().sum::<f64>() * grid.cell_area(),
        Geometry::Planar(_) => f.values.iter().enumerate().map(|(i, v)| v * grid.weight(i)).sum(),
    }
}

thread_local! {
    static TRANSFORMS: RefCell<HashMap<(usize, usize), Rc<Fft2>>> = RefCell::new(HashMap::new());
}

pub(crate) fn fft_for(m1: usize, m2: usize) -> Rc<Fft2> {
    TRANSFORMS.with(|cache| cache.borrow_mut().entry((m1, m2)).or_insert_with(|| Rc::new(Fft2::new(m1, m2))).clone())
}

/// Wave-number tables of a torus grid.
#[derive(Debug, Clone)]
pub(crate) struct Spectrum {
    pub kx: Vec<f64>,
    pub ky: Vec<f64>,
}

impl Spectrum {
    pub fn new(grid: &GridSpec) -> Result<Self> {
        let d = grid
            .torus_domain()
            .ok_or_else(|| VortexError::Geometry("spectral operators need a torus".into()))?;
        Ok(Self { kx: wave_numbers(grid.m1, d.l1), ky: wave_numbers(grid.m2, d.l2) })
    }

    pub fn k2(&self, idx: usize) -> f64 {
        let m1 = self.kx.len();
        let (kx, ky) = (self.kx[idx % m1], self.ky[idx / m1]);
        kx * kx + ky * ky
    }
}

fn torus_only(f: &ScalarField, op: &str) -> Result<Spectrum> {
    Spectrum::new(f.grid()).map_err(|_| VortexError::Geometry(format!("{op} is only defined on a torus")))
}

/// Mean-zero `u` with spectral `Δu = f − mean(f)`.
pub fn poisson_solve_mean_zero(f: &ScalarField) -> Result<ScalarField> {
    let spec = torus_only(f, "poisson_solve_mean_zero")?;
    let grid = *f.grid();
    let mean = f.mean();
    let scale = f.sup_norm().max(1.0);
    if mean.abs() > 1e-8 * scale {
        log::warn!("poisson source has nonzero mean {mean:.3e}; solving for the mean-free part");
    }
    let fft = fft_for(grid.m1, grid.m2);
    let mut hat = fft.forward_real(&f.values);
    for (idx, c) in hat.iter_mut().enumerate() {
        let k2 = spec.k2(idx);
        *c = if k2 == 0.0 { Complex64::new(0.0, 0.0) } else { *c / (-k2) };
    }
    ScalarField::new(grid, fft.inverse_real(hat))
}

/// Spectral Laplacian on a torus, 5-point stencil on a box (zero on box edges).
pub fn laplacian(f: &ScalarField) -> ScalarField {
    match f.grid().geometry {
        Geometry::Torus(_) => spectral_laplacian(f),
        Geometry::Planar(_) => stencil_laplacian(f),
    }
}

fn spectral_laplacian(f: &ScalarField) -> ScalarField {
    let grid = *f.grid();
    let spec = Spectrum::new(&grid).expect("torus grid");
    let fft = fft_for(grid.m1, grid.m2);
    let mut hat = fft.forward_real(&f.values);
    for (idx, c) in hat.iter_mut().enumerate() {
        *c *= -spec.k2(idx);
    }
    ScalarField { grid, values: fft.inverse_real(hat) }
}

/// Second-order 5-point Laplacian. Wraps around on a torus; box edge nodes get 0.
pub fn stencil_laplacian(f: &ScalarField) -> ScalarField {
    let grid = *f.grid();
    let (m1, m2) = (grid.m1, grid.m2);
    let (hx, hy) = grid.spacing();
    let (cx, cy) = (1.0 / (hx * hx), 1.0 / (hy * hy));
    let v = &f.values;
    let mut out = vec![0.0; grid.len()];
    let torus = grid.is_torus();
    for j in 0..m2 {
        for i in 0..m1 {
            let idx = j * m1 + i;
            if !torus && grid.is_boundary(idx) {
                continue;
            }
            let (ip, im) = ((i + 1) % m1, (i + m1 - 1) % m1);
            let (jp, jm) = ((j + 1) % m2, (j + m2 - 1) % m2);
            out[idx] = cx * (v[j * m1 + ip] - 2.0 * v[idx] + v[j * m1 + im])
                + cy * (v[jp * m1 + i] - 2.0 * v[idx] + v[jm * m1 + i]);
        }
    }
    ScalarField { grid, values: out }
}

/// `∫ ∇f·∇g`: Parseval with `|k|²` on a torus, edge differences on a box.
pub fn grad_inner(f: &ScalarField, g: &ScalarField) -> Result<f64> {
    f.grid().ensure_same(g.grid())?;
    let grid = *f.grid();
    match grid.geometry {
        Geometry::Torus(d) => {
            let spec = Spectrum::new(&grid)?;
            let fft = fft_for(grid.m1, grid.m2);
            let fh = fft.forward_real(&f.values);
            let gh = fft.forward_real(&g.values);
            let n = grid.len() as f64;
            let sum: f64 = fh.iter().zip(&gh).enumerate().map(|(i, (a, b))| spec.k2(i) * (a * b.conj()).re).sum();
            Ok(sum * d.area() / (n * n))
        }
        Geometry::Planar(_) => Ok(edge_inner(&grid, &f.values, &g.values)),
    }
}

/// `Σ_edges (δf)(δg)·(h⊥/h∥)`, the box form whose variation is the 5-point Laplacian.
pub(crate) fn edge_inner(grid: &GridSpec, f: &[f64], g: &[f64]) -> f64 {
    let (m1, m2) = (grid.m1, grid.m2);
    let (hx, hy) = grid.spacing();
    let (wx, wy) = (hy / hx, hx / hy);
    let mut sx = 0.0;
    let mut sy = 0.0;
    for j in 0..m2 {
        for i in 0..m1 {
            let idx = j * m1 + i;
            if i + 1 < m1 {
                sx += (f[idx + 1] - f[idx]) * (g[idx + 1] - g[idx]);
            }
            if j + 1 < m2 {
                sy += (f[idx + m1] - f[idx]) * (g[idx + m1] - g[idx]);
            }
        }
    }
    wx * sx + wy * sy
}

/// `(∂x f, ∂y f)`: spectral on a torus, centered differences on a box
/// (one-sided on the edges).
pub fn gradient(f: &ScalarField) -> (ScalarField, ScalarField) {
    let grid = *f.grid();
    match grid.geometry {
        Geometry::Torus(_) => {
            let spec = Spectrum::new(&grid).expect("torus grid");
            let fft = fft_for(grid.m1, grid.m2);
            let hat = fft.forward_real(&f.values);
            let m1 = grid.m1;
            let deriv = |use_x: bool| {
                let d: Vec<Complex64> = hat
                    .iter()
                    .enumerate()
                    .map(|(idx, &c)| {
                        let (i, j) = (idx % m1, idx / m1);
                        let (k, nyq) = if use_x { (spec.kx[i], i == grid.m1 / 2) } else { (spec.ky[j], j == grid.m2 / 2) };
                        if nyq {
                            Complex64::new(0.0, 0.0)
                        } else {
                            c * Complex64::new(0.0, k)
                        }
                    })
                    .collect();
                ScalarField { grid, values: fft.inverse_real(d) }
            };
            (deriv(true), deriv(false))
        }
        Geometry::Planar(_) => {
            let (m1, m2) = (grid.m1, grid.m2);
            let (hx, hy) = grid.spacing();
            let v = &f.values;
            let mut gx = vec![0.0; grid.len()];
            let mut gy = vec![0.0; grid.len()];
            for j in 0..m2 {
                for i in 0..m1 {
                    let idx = j * m1 + i;
                    gx[idx] = if i == 0 {
                        (v[idx + 1] - v[idx]) / hx
                    } else if i == m1 - 1 {
                        (v[idx] - v[idx - 1]) / hx
                    } else {
                        (v[idx + 1] - v[idx - 1]) / (2.0 * hx)
                    };
                    gy[idx] = if j == 0 {
                        (v[idx + m1] - v[idx]) / hy
                    } else if j == m2 - 1 {
                        (v[idx] - v[idx - m1]) / hy
                    } else {
                        (v[idx + m1] - v[idx - m1]) / (2.0 * hy)
                    };
                }
            }
            (ScalarField { grid, values: gx }, ScalarField { grid, values: gy })
        }
    }
}

//! Discrete energy, gradient, Hessian, residual and preconditioner shared by
//! the planar and periodic solvers.
//!
//! The energy is
//! `½∫∇vᵀ(sA)∇v + (λ/2)∫qᵀ(sA')q + ∫hᵀ(sA)v`, `q = e^{u0+v} − 1`,
//! with `s = 1` on the plane and `s = N` on a torus. State vectors hold
//! `v1` followed by `v2`.

use std::rc::Rc;

use rustfft::num_complex::Complex64;

use crate::background::BackgroundPair;
use crate::coupling::{build_a, build_k, rhs_from_exp, CouplingParams, Matrix2};
use crate::error::{Result, VortexError};
use crate::fft::{Dst2, Fft2};
use crate::lattice::{edge_inner, fft_for, stencil_laplacian, GridSpec, ScalarField, Spectrum};
use crate::optim::{LinearOp, Objective};

enum Transform {
    Torus { fft: Rc<Fft2>, spectrum: Spectrum },
    Planar { dst: Dst2, eig_x: Vec<f64>, eig_y: Vec<f64> },
}

pub(crate) struct FieldSystem {
    pub grid: GridSpec,
    pub params: CouplingParams,
    pub k: Matrix2,
    /// `s·A(N, κ)`.
    pub a: Matrix2,
    /// `s·A(N, 1/κ)`.
    pub ap: Matrix2,
    pub u0: [Vec<f64>; 2],
    pub h: [Vec<f64>; 2],
    /// `s·A·h`, the source term of the gradient.
    ah: [Vec<f64>; 2],
    weights: Vec<f64>,
    fixed: Vec<bool>,
    core: Vec<bool>,
    transform: Transform,
}

pub(crate) struct Exps {
    pub e: [Vec<f64>; 2],
}

impl FieldSystem {
    pub fn new(params: CouplingParams, background: &BackgroundPair) -> Self {
        let grid = *background.grid();
        let scale = if grid.is_torus() { params.nf() } else { 1.0 };
        let a = build_a(&params, false).scale(scale);
        let ap = build_a(&params, true).scale(scale);
        let h = [background.h[0].values().to_vec(), background.h[1].values().to_vec()];
        let mut ah = [vec![0.0; grid.len()], vec![0.0; grid.len()]];
        for n in 0..grid.len() {
            let [p, q] = a.apply([h[0][n], h[1][n]]);
            ah[0][n] = p;
            ah[1][n] = q;
        }
        let fixed: Vec<bool> = (0..grid.len()).map(|i| grid.is_boundary(i)).collect();
        let transform = if grid.is_torus() {
            Transform::Torus { fft: fft_for(grid.m1, grid.m2), spectrum: Spectrum::new(&grid).expect("torus") }
        } else {
            let (hx, hy) = grid.spacing();
            let (nx, ny) = (grid.m1 - 2, grid.m2 - 2);
            let eig = |n: usize, h: f64| -> Vec<f64> {
                (1..=n)
                    .map(|k| {
                        let s = (std::f64::consts::PI * k as f64 / (2.0 * (n + 1) as f64)).sin();
                        4.0 * s * s / (h * h)
                    })
                    .collect()
            };
            Transform::Planar { dst: Dst2::new(nx, ny), eig_x: eig(nx, hx), eig_y: eig(ny, hy) }
        };
        Self {
            grid,
            params,
            k: build_k(&params),
            a,
            ap,
            u0: [background.u0[0].values().to_vec(), background.u0[1].values().to_vec()],
            h,
            ah,
            weights: grid.weights(),
            fixed,
            core: background.core_mask().to_vec(),
            transform,
        }
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn lambda(&self) -> f64 {
        self.params.lambda()
    }

    pub fn split<'a>(&self, x: &'a [f64]) -> (&'a [f64], &'a [f64]) {
        x.split_at(self.len())
    }

    pub fn exps(&self, x: &[f64]) -> Result<Exps> {
        let (v1, v2) = self.split(x);
        let mut e = [vec![0.0; self.len()], vec![0.0; self.len()]];
        for (c, v) in [v1, v2].into_iter().enumerate() {
            for (n, (ei, vi)) in e[c].iter_mut().zip(v).enumerate() {
                let u = self.u0[c][n] + vi;
                let val = u.exp();
                if !val.is_finite() || u.is_nan() {
                    return Err(VortexError::Overflow(u));
                }
                *ei = val;
            }
        }
        Ok(Exps { e })
    }

    /// Laplacian used by the solvers: spectral on a torus, 5-point on a box.
    pub fn laplacian(&self, f: &[f64]) -> Vec<f64> {
        match &self.transform {
            Transform::Torus { fft, spectrum } => {
                let mut hat = fft.forward_real(f);
                for (idx, c) in hat.iter_mut().enumerate() {
                    *c *= -spectrum.k2(idx);
                }
                fft.inverse_real(hat)
            }
            Transform::Planar { .. } => {
                let field = ScalarField::new(self.grid, f.to_vec()).expect("grid-sized vector");
                stencil_laplacian(&field).into_values()
            }
        }
    }

    pub fn gradient_form(&self, v1: &[f64], v2: &[f64]) -> f64 {
        let a = &self.a;
        match self.transform {
            Transform::Torus { .. } => {
                let l1 = self.laplacian(v1);
                let l2 = self.laplacian(v2);
                let cell = self.grid.cell_area();
                let mut s = 0.0;
                for n in 0..self.len() {
                    let av = a.apply([l1[n], l2[n]]);
                    s += v1[n] * av[0] + v2[n] * av[1];
                }
                -0.5 * s * cell
            }
            Transform::Planar { .. } => {
                let e11 = edge_inner(&self.grid, v1, v1);
                let e12 = edge_inner(&self.grid, v1, v2);
                let e22 = edge_inner(&self.grid, v2, v2);
                0.5 * (a.get(0, 0) * e11 + 2.0 * a.get(0, 1) * e12 + a.get(1, 1) * e22)
            }
        }
    }

    pub fn energy(&self, x: &[f64]) -> Result<f64> {
        let ex = self.exps(x)?;
        Ok(self.energy_with(x, &ex))
    }

    fn energy_with(&self, x: &[f64], ex: &Exps) -> f64 {
        let (v1, v2) = self.split(x);
        let lam = self.lambda();
        let mut pot = 0.0;
        for n in 0..self.len() {
            let q = [ex.e[0][n] - 1.0, ex.e[1][n] - 1.0];
            let src = self.h[0][n] * (self.a.get(0, 0) * v1[n] + self.a.get(0, 1) * v2[n])
                + self.h[1][n] * (self.a.get(1, 0) * v1[n] + self.a.get(1, 1) * v2[n]);
            pot += self.weights[n] * (0.5 * lam * self.ap.bilinear(q, q) + src);
        }
        self.gradient_form(v1, v2) + pot
    }

    /// Energy and its `L²` gradient; zero at fixed nodes.
    pub fn value_grad(&self, x: &[f64], g: &mut [f64]) -> Result<f64> {
        let ex = self.exps(x)?;
        let (v1, v2) = self.split(x);
        let l1 = self.laplacian(v1);
        let l2 = self.laplacian(v2);
        let lam = self.lambda();
        let n_len = self.len();
        let (g1, g2) = g.split_at_mut(n_len);
        for n in 0..n_len {
            if self.fixed[n] {
                g1[n] = 0.0;
                g2[n] = 0.0;
                continue;
            }
            let (e1, e2) = (ex.e[0][n], ex.e[1][n]);
            let apq = self.ap.apply([e1 - 1.0, e2 - 1.0]);
            let al = self.a.apply([l1[n], l2[n]]);
            g1[n] = -al[0] + lam * e1 * apq[0] + self.ah[0][n];
            g2[n] = -al[1] + lam * e2 * apq[1] + self.ah[1][n];
        }
        Ok(self.energy_with(x, &ex))
    }

    /// Pointwise residual `Δv − λF(u) − h` of the Euler-Lagrange equations;
    /// zero at fixed nodes.
    pub fn residual_fields(&self, x: &[f64]) -> Result<[Vec<f64>; 2]> {
        let ex = self.exps(x)?;
        let (v1, v2) = self.split(x);
        let l = [self.laplacian(v1), self.laplacian(v2)];
        let mut r = [vec![0.0; self.len()], vec![0.0; self.len()]];
        for n in 0..self.len() {
            if self.fixed[n] {
                continue;
            }
            let f = rhs_from_exp(ex.e[0][n], ex.e[1][n], &self.k, self.lambda());
            r[0][n] = l[0][n] - f.0 - self.h[0][n];
            r[1][n] = l[1][n] - f.1 - self.h[1][n];
        }
        Ok(r)
    }

    /// Sup norm of the residual away from fixed and vortex-core nodes.
    pub fn el_residual(&self, x: &[f64]) -> Result<f64> {
        let r = self.residual_fields(x)?;
        let mut m = 0.0f64;
        for n in 0..self.len() {
            if self.core[n] {
                continue;
            }
            m = m.max(r[0][n].abs()).max(r[1][n].abs());
        }
        Ok(m)
    }

    pub fn dot(&self, a: &[f64], b: &[f64]) -> f64 {
        let n_len = self.len();
        let mut s = 0.0;
        for n in 0..n_len {
            s += self.weights[n] * (a[n] * b[n] + a[n + n_len] * b[n + n_len]);
        }
        s
    }

    /// Applies the inverse of `sA ⊗ (−Δ) + λ·sA'`.
    pub fn precondition(&self, r: &[f64], z: &mut [f64]) {
        let n_len = self.len();
        let lam = self.lambda();
        let solve_block = |k2: f64, r1: Complex64, r2: Complex64| -> (Complex64, Complex64) {
            let a11 = self.a.get(0, 0) * k2 + lam * self.ap.get(0, 0);
            let a12 = self.a.get(0, 1) * k2 + lam * self.ap.get(0, 1);
            let a22 = self.a.get(1, 1) * k2 + lam * self.ap.get(1, 1);
            let det = a11 * a22 - a12 * a12;
            ((r1 * a22 - r2 * a12) / det, (r2 * a11 - r1 * a12) / det)
        };
        match &self.transform {
            Transform::Torus { fft, spectrum } => {
                let mut h1 = fft.forward_real(&r[..n_len]);
                let mut h2 = fft.forward_real(&r[n_len..]);
                for idx in 0..n_len {
                    let (a, b) = solve_block(spectrum.k2(idx), h1[idx], h2[idx]);
                    h1[idx] = a;
                    h2[idx] = b;
                }
                z[..n_len].copy_from_slice(&fft.inverse_real(h1));
                z[n_len..].copy_from_slice(&fft.inverse_real(h2));
            }
            Transform::Planar { dst, eig_x, eig_y } => {
                let (m1, m2) = (self.grid.m1, self.grid.m2);
                let (nx, ny) = (m1 - 2, m2 - 2);
                let interior = |src: &[f64]| -> Vec<f64> {
                    let mut out = Vec::with_capacity(nx * ny);
                    for j in 1..m2 - 1 {
                        out.extend_from_slice(&src[j * m1 + 1..j * m1 + m1 - 1]);
                    }
                    out
                };
                let mut s1 = interior(&r[..n_len]);
                let mut s2 = interior(&r[n_len..]);
                dst.transform(&mut s1);
                dst.transform(&mut s2);
                for j in 0..ny {
                    for i in 0..nx {
                        let idx = j * nx + i;
                        let (a, b) = solve_block(
                            eig_x[i] + eig_y[j],
                            Complex64::new(s1[idx], 0.0),
                            Complex64::new(s2[idx], 0.0),
                        );
                        s1[idx] = a.re;
                        s2[idx] = b.re;
                    }
                }
                dst.transform(&mut s1);
                dst.transform(&mut s2);
                let scale = dst.inverse_scale();
                z.iter_mut().for_each(|v| *v = 0.0);
                for j in 1..m2 - 1 {
                    for i in 1..m1 - 1 {
                        let src = (j - 1) * nx + (i - 1);
                        z[j * m1 + i] = s1[src] * scale;
                        z[n_len + j * m1 + i] = s2[src] * scale;
                    }
                }
            }
        }
    }

    pub fn hessian_at(&self, x: &[f64]) -> Result<Hessian<'_>> {
        let ex = self.exps(x)?;
        let lam = self.lambda();
        let n_len = self.len();
        let mut blocks = Vec::with_capacity(n_len);
        for n in 0..n_len {
            let (e1, e2) = (ex.e[0][n], ex.e[1][n]);
            let apq = self.ap.apply([e1 - 1.0, e2 - 1.0]);
            let b11 = lam * (e1 * e1 * self.ap.get(0, 0) + e1 * apq[0]);
            let b22 = lam * (e2 * e2 * self.ap.get(1, 1) + e2 * apq[1]);
            let b12 = lam * e1 * e2 * self.ap.get(0, 1);
            blocks.push([b11, b12, b22]);
        }
        Ok(Hessian { sys: self, blocks })
    }
}

/// Second variation at a fixed state.
pub(crate) struct Hessian<'a> {
    sys: &'a FieldSystem,
    blocks: Vec<[f64; 3]>,
}

impl LinearOp for Hessian<'_> {
    fn apply(&self, d: &[f64], out: &mut [f64]) {
        let s = self.sys;
        let n_len = s.len();
        let l1 = s.laplacian(&d[..n_len]);
        let l2 = s.laplacian(&d[n_len..]);
        for n in 0..n_len {
            if s.fixed[n] {
                out[n] = 0.0;
                out[n + n_len] = 0.0;
                continue;
            }
            let al = s.a.apply([l1[n], l2[n]]);
            let [b11, b12, b22] = self.blocks[n];
            out[n] = -al[0] + b11 * d[n] + b12 * d[n + n_len];
            out[n + n_len] = -al[1] + b12 * d[n] + b22 * d[n + n_len];
        }
    }
}

/// Plain minimization of the full energy.
pub(crate) struct EnergyObjective<'a>(pub &'a FieldSystem);

impl Objective for EnergyObjective<'_> {
    fn dim(&self) -> usize {
        2 * self.0.len()
    }
    fn value(&self, x: &[f64]) -> Result<f64> {
        self.0.energy(x)
    }
    fn value_grad(&self, x: &[f64], g: &mut [f64]) -> Result<f64> {
        self.0.value_grad(x, g)
    }
    fn precondition(&self, r: &[f64], z: &mut [f64]) {
        self.0.precondition(r, z)
    }
    fn dot(&self, a: &[f64], b: &[f64]) -> f64 {
        self.0.dot(a, b)
    }
    fn residual(&self, x: &[f64]) -> Result<f64> {
        self.0.el_residual(x)
    }
    fn hessian<'b>(&'b self, x: &[f64]) -> Option<Box<dyn LinearOp + 'b>> {
        self.0.hessian_at(x).ok().map(|h| Box::new(h) as Box<dyn LinearOp>)
    }
}

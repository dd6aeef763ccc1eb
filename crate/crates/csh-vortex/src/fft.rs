//! Two-dimensional transforms on row-major grids: complex FFT for tori and
//! DST-I for homogeneous Dirichlet boxes.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Forward/inverse 2-D FFT of an `nx × ny` row-major array.
pub(crate) struct Fft2 {
    nx: usize,
    ny: usize,
    fwd_x: Arc<dyn Fft<f64>>,
    inv_x: Arc<dyn Fft<f64>>,
    fwd_y: Arc<dyn Fft<f64>>,
    inv_y: Arc<dyn Fft<f64>>,
}

impl Fft2 {
    pub fn new(nx: usize, ny: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            nx,
            ny,
            fwd_x: planner.plan_fft_forward(nx),
            inv_x: planner.plan_fft_inverse(nx),
            fwd_y: planner.plan_fft_forward(ny),
            inv_y: planner.plan_fft_inverse(ny),
        }
    }

    pub fn forward_real(&self, data: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = data.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward(&mut buf);
        buf
    }

    pub fn forward(&self, buf: &mut [Complex64]) {
        self.fwd_x.process(buf);
        self.columns(buf, &self.fwd_y);
    }

    /// Inverse transform including the `1/(nx·ny)` normalization; returns real parts.
    pub fn inverse_real(&self, mut buf: Vec<Complex64>) -> Vec<f64> {
        self.columns(&mut buf, &self.inv_y);
        self.inv_x.process(&mut buf);
        let scale = 1.0 / (self.nx * self.ny) as f64;
        buf.iter().map(|c| c.re * scale).collect()
    }

    fn columns(&self, buf: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        let (nx, ny) = (self.nx, self.ny);
        let mut col = vec![Complex64::new(0.0, 0.0); ny];
        for i in 0..nx {
            for j in 0..ny {
                col[j] = buf[j * nx + i];
            }
            plan.process(&mut col);
            for j in 0..ny {
                buf[j * nx + i] = col[j];
            }
        }
    }
}

/// Angular wave numbers in FFT order for `n` samples over a period `l`.
pub(crate) fn wave_numbers(n: usize, l: f64) -> Vec<f64> {
    let base = 2.0 * std::f64::consts::PI / l;
    (0..n)
        .map(|i| {
            let m = if i <= n / 2 { i as f64 } else { i as f64 - n as f64 };
            base * m
        })
        .collect()
}

/// Unnormalized 2-D DST-I on an `nx × ny` interior array, computed through
/// odd extension and an FFT of length `2(n + 1)`.
pub(crate) struct Dst2 {
    nx: usize,
    ny: usize,
    plan_x: Arc<dyn Fft<f64>>,
    plan_y: Arc<dyn Fft<f64>>,
}

impl Dst2 {
    pub fn new(nx: usize, ny: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self { nx, ny, plan_x: planner.plan_fft_forward(2 * (nx + 1)), plan_y: planner.plan_fft_forward(2 * (ny + 1)) }
    }

    /// `S[k,l] = Σ x[i,j] sin(π(i+1)(k+1)/(nx+1)) sin(π(j+1)(l+1)/(ny+1))`.
    /// Applying it twice multiplies by `(nx+1)(ny+1)/4`.
    pub fn transform(&self, data: &mut [f64]) {
        let (nx, ny) = (self.nx, self.ny);
        let mut ext = vec![Complex64::new(0.0, 0.0); 2 * (nx + 1)];
        for row in data.chunks_mut(nx) {
            dst_line(row, &mut ext, &self.plan_x);
        }
        let mut col = vec![0.0; ny];
        let mut ext = vec![Complex64::new(0.0, 0.0); 2 * (ny + 1)];
        for i in 0..nx {
            for j in 0..ny {
                col[j] = data[j * nx + i];
            }
            dst_line(&mut col, &mut ext, &self.plan_y);
            for j in 0..ny {
                data[j * nx + i] = col[j];
            }
        }
    }

    pub fn inverse_scale(&self) -> f64 {
        4.0 / ((self.nx + 1) * (self.ny + 1)) as f64
    }
}

fn dst_line(line: &mut [f64], ext: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
    let n = line.len();
    for c in ext.iter_mut() {
        *c = Complex64::new(0.0, 0.0);
    }
    for (j, &v) in line.iter().enumerate() {
        ext[j + 1] = Complex64::new(v, 0.0);
        ext[2 * (n + 1) - (j + 1)] = Complex64::new(-v, 0.0);
    }
    plan.process(ext);
    for (k, out) in line.iter_mut().enumerate() {
        *out = -0.5 * ext[k + 1].im;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fft_round_trip() {
        let (nx, ny) = (8, 12);
        let data: Vec<f64> = (0..nx * ny).map(|i| ((i * 37 % 11) as f64).sin()).collect();
        let f = Fft2::new(nx, ny);
        let back = f.inverse_real(f.forward_real(&data));
        for (a, b) in data.iter().zip(&back) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn dst_matches_direct_sum() {
        let (nx, ny) = (5, 7);
        let data: Vec<f64> = (0..nx * ny).map(|i| (i as f64 * 0.3).cos()).collect();
        let mut fast = data.clone();
        Dst2::new(nx, ny).transform(&mut fast);
        let pi = std::f64::consts::PI;
        for l in 0..ny {
            for k in 0..nx {
                let mut s = 0.0;
                for j in 0..ny {
                    for i in 0..nx {
                        s += data[j * nx + i]
                            * (pi * ((i + 1) * (k + 1)) as f64 / (nx + 1) as f64).sin()
                            * (pi * ((j + 1) * (l + 1)) as f64 / (ny + 1) as f64).sin();
                    }
                }
                assert!((s - fast[l * nx + k]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn dst_inverse() {
        let (nx, ny) = (6, 6);
        let data: Vec<f64> = (0..nx * ny).map(|i| (i as f64).sqrt()).collect();
        let d = Dst2::new(nx, ny);
        let mut x = data.clone();
        d.transform(&mut x);
        d.transform(&mut x);
        for (a, b) in data.iter().zip(&x) {
            assert!((a - b * d.inverse_scale()).abs() < 1e-12);
        }
    }
}

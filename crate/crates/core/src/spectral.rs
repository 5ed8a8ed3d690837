//! Inverse of the periodic five-point Laplacian and the discrete `H^{-1}` norm.
//!
//! The periodic stencil is diagonal in the discrete Fourier basis with
//! eigenvalues `(4/h^2)(sin^2(pi k/N) + sin^2(pi l/N))`; the zero mode is
//! projected out, which selects the mean-zero representative.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::grid::{diff_to_edges, edge_inner, l2_norm, CellField, GridSpec};
use crate::num::Real;

/// Relative tolerance on the mean of an `H^{-1}` argument.
pub const MEAN_ZERO_TOL: f64 = 1e-12;

/// Cached transforms and symbols for one grid size.
pub struct PeriodicPoisson<T: Real> {
    grid: GridSpec<T>,
    forward: Arc<dyn Fft<T>>,
    inverse: Arc<dyn Fft<T>>,
    /// `1 / lambda(k, l)`, zero for the constant mode.
    inv_symbol: Vec<T>,
}

impl<T: Real> PeriodicPoisson<T> {
    pub fn new(grid: GridSpec<T>) -> Self {
        let n = grid.n();
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let h2 = grid.h() * grid.h();
        let four = T::lit(4.0);
        let s2: Vec<T> = (0..n)
            .map(|k| (T::PI() * T::from_usize_lossy(k) / T::from_usize_lossy(n)).sin().powi(2))
            .collect();
        let mut inv_symbol = vec![T::zero(); n * n];
        for l in 0..n {
            for k in 0..n {
                if k == 0 && l == 0 {
                    continue;
                }
                inv_symbol[l * n + k] = h2 / (four * (s2[k] + s2[l]));
            }
        }
        Self { grid, forward, inverse, inv_symbol }
    }

    pub fn grid(&self) -> &GridSpec<T> {
        &self.grid
    }

    /// Smallest nonzero eigenvalue of `-Delta_h`, `(4/h^2) sin^2(pi h / L)`.
    pub fn smallest_eigenvalue(&self) -> T {
        let h = self.grid.h();
        T::lit(4.0) / (h * h) * (T::PI() / T::from_usize_lossy(self.grid.n())).sin().powi(2)
    }

    fn transform_2d(&self, data: &mut [Complex<T>], fft: &Arc<dyn Fft<T>>) {
        let n = self.grid.n();
        // rows
        fft.process(data);
        // columns, via a transpose round trip
        let mut t = vec![Complex::new(T::zero(), T::zero()); n * n];
        transpose(data, &mut t, n);
        fft.process(&mut t);
        transpose(&t, data, n);
    }

    /// The unique mean-zero `psi` with `-Delta_h psi = phi - mean(phi)`.
    pub fn solve(&self, phi: &CellField<T>) -> Result<CellField<T>> {
        self.grid.same_as(phi.grid())?;
        let n = self.grid.n();
        let mut data: Vec<Complex<T>> = phi.values().iter().map(|&v| Complex::new(v, T::zero())).collect();
        self.transform_2d(&mut data, &self.forward);
        for (c, &s) in data.iter_mut().zip(&self.inv_symbol) {
            *c = *c * s;
        }
        self.transform_2d(&mut data, &self.inverse);
        let scale = T::one() / T::from_usize_lossy(n * n);
        let psi = CellField::from_vec(self.grid, data.iter().map(|c| c.re * scale).collect())?;
        // the transform leaves a rounding-level mean behind
        Ok(psi.minus_mean())
    }

    /// `||phi||_{-1,h}` for a mean-zero `phi`.
    pub fn h_minus1_norm(&self, phi: &CellField<T>) -> Result<T> {
        check_mean_zero(phi)?;
        let psi = self.solve(phi)?;
        let g = diff_to_edges(&psi);
        Ok(edge_inner(&g, &g)?.max(T::zero()).sqrt())
    }

    /// `<phi1, phi2>_{-1,h} = [grad psi1, grad psi2]` for mean-zero arguments.
    pub fn h_minus1_inner(&self, phi1: &CellField<T>, phi2: &CellField<T>) -> Result<T> {
        check_mean_zero(phi1)?;
        check_mean_zero(phi2)?;
        let g1 = diff_to_edges(&self.solve(phi1)?);
        let g2 = diff_to_edges(&self.solve(phi2)?);
        edge_inner(&g1, &g2)
    }
}

fn transpose<T: Copy>(src: &[T], dst: &mut [T], n: usize) {
    for j in 0..n {
        for i in 0..n {
            dst[i * n + j] = src[j * n + i];
        }
    }
}

fn check_mean_zero<T: Real>(phi: &CellField<T>) -> Result<()> {
    let mean = phi.mean();
    // ||mean||_2 against ||phi||_2
    let mean_norm = mean.abs() * phi.grid().length();
    let tol = T::lit(T::tol(MEAN_ZERO_TOL)) * l2_norm(phi);
    if mean_norm > tol {
        return Err(Error::NotMeanZero { mean: mean.as_f64(), tol: tol.as_f64() });
    }
    Ok(())
}

/// `(-Delta_h)^{-1} (phi - mean(phi))`.
pub fn inv_laplacian<T: Real>(phi: &CellField<T>) -> CellField<T> {
    PeriodicPoisson::new(*phi.grid()).solve(phi).expect("grid matches by construction")
}

/// `||phi||_{-1,h}`; `phi` must be mean-zero to [`MEAN_ZERO_TOL`].
pub fn h_minus1_norm<T: Real>(phi: &CellField<T>) -> Result<T> {
    PeriodicPoisson::new(*phi.grid()).h_minus1_norm(phi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{cell_inner, laplacian};
    use std::f64::consts::PI;

    fn rough(g: GridSpec<f64>) -> CellField<f64> {
        CellField::from_fn(g, |i, j| ((i * 7 + j * 13) % 11) as f64 * 0.1 - (i as f64 * 0.3).sin())
    }

    #[test]
    fn constant_maps_to_zero() {
        let g = GridSpec::new(64.0, 16).unwrap();
        let psi = inv_laplacian(&CellField::constant(g, 0.6));
        assert!(psi.values().iter().all(|v: &f64| v.abs() < 1e-15));
    }

    #[test]
    fn round_trip() {
        for n in [8, 16, 32, 30] {
            let g = GridSpec::new(64.0, n).unwrap();
            let phi = rough(g);
            let psi = inv_laplacian(&phi);
            let back = laplacian(&psi).scale(-1.0);
            let target = phi.minus_mean();
            for (a, b) in back.values().iter().zip(target.values()) {
                assert!((a - b).abs() < 1e-10, "{a} vs {b}");
            }
            assert!(psi.mean().abs() * 64.0 <= 1e-13 * l2_norm(&psi));
        }
    }

    #[test]
    fn single_mode() {
        let g = GridSpec::new(64.0, 32).unwrap();
        let phi = CellField::sample(g, |x, _| (2.0 * PI * x / 64.0).cos());
        let solver = PeriodicPoisson::new(g);
        let lam = 4.0 / (g.h() * g.h()) * (PI * g.h() / 64.0).sin().powi(2);
        assert!((solver.smallest_eigenvalue() - lam).abs() < 1e-15);
        let psi = solver.solve(&phi).unwrap();
        for (a, b) in psi.values().iter().zip(phi.values()) {
            assert!((a - b / lam).abs() < 1e-10);
        }
        let norm = solver.h_minus1_norm(&phi).unwrap();
        assert!((norm - l2_norm(&phi) / lam.sqrt()).abs() < 1e-10 * norm);
    }

    #[test]
    fn dual_evaluation_agrees() {
        let g = GridSpec::new(64.0, 16).unwrap();
        let phi = rough(g).minus_mean();
        let solver = PeriodicPoisson::new(g);
        let n = solver.h_minus1_norm(&phi).unwrap();
        let dual = cell_inner(&phi, &solver.solve(&phi).unwrap()).unwrap();
        assert!((n * n - dual).abs() <= 1e-10 * dual);
        assert!(n <= l2_norm(&phi) / solver.smallest_eigenvalue().sqrt() * (1.0 + 1e-12));
    }

    #[test]
    fn rejects_nonzero_mean() {
        let g = GridSpec::new(64.0, 8).unwrap();
        assert!(matches!(h_minus1_norm(&rough(g)), Err(Error::NotMeanZero { .. })));
        assert_eq!(h_minus1_norm(&CellField::zeros(g)).unwrap(), 0.0);
    }
}

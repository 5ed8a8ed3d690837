//! Nonlinear FAS multigrid for the per-step system `N(u) = S`.
//!
//! Smoothing is a red-black nonlinear Gauss-Seidel sweep. At each cell the
//! pair `(phi_ij, mu_ij)` solves a 2x2 linear system obtained by freezing the
//! neighbours at their newest values and linearizing the second equation
//! about the current iterate `phi^k`:
//!
//! ```text
//! c_t phi + (4 c_l / h^2) mu = f1 + (c_l / h^2) sum mu_nb
//! mu + J phi                 = b2
//! ```
//!
//! with `c_t, c_l = 3, 2 dt` for BDF2 and `1, dt` for backward Euler. Two
//! linearizations are available (see [`Linearization`]). Both reproduce the
//! scheme equation at `phi = phi^k`, so converged sweeps solve `N(u) = S`.
//! The 2x2 system is solved by Cramer's rule.
//!
//! Coarse levels rediscretize `N` with their own `h`; grids are cell centered
//! and nest as 2x2 children per coarse cell.

use crate::energy::{kappa, kappa_prime, kappa_second, ModelParams};
use crate::error::{Error, Result};
use crate::grid::{CellField, GridSpec};
use crate::num::Real;
use crate::scheme::{SchemeState, StepOperator};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CycleKind {
    V,
    W,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialGuess {
    /// `2 phi^n - phi^{n-1}`, clamped into the interior.
    Extrapolate,
    /// `phi^n`.
    Previous,
}

/// Local linearization of the second equation in the smoother.
///
/// ```text
/// Newton:  J  = dN2/dphi_ij with neighbours frozen
///             = -kappa'' g + 2 kappa' sum (phi_nb - phi) / h^2 - (sum kappa_nb + 4 kappa) / h^2
///               - 4 A dt / h^2 - S''                                   [+ 2 chi rho if H' implicit]
///          b2 = f2 - (N2(phi^k) - mu) + J phi^k
///
/// Frozen:  J  = -kappa' g / phi - (sum kappa_nb + 4 kappa) / h^2 + kappa sum phi_nb / (h^2 phi)
///               - 4 A dt / h^2 - S''                                   [+ 2 chi rho if H' implicit]
///          b2 = f2 - S'' phi + S' - sum kappa_nb phi_nb / h^2 - A dt sum phi_nb / h^2
/// ```
///
/// (all coefficients at `phi^k`). The frozen form underestimates the diagonal
/// by roughly `4 kappa / h^2` and its sweeps lose their smoothing power on fine grids.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Linearization {
    Newton,
    Frozen,
}

/// A converged `(phi^{n+1}, mu^{n+1})` pair.
pub type Solution<T> = (CellField<T>, CellField<T>);

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig<T> {
    /// Stopping threshold on `sqrt(||r1||_2^2 + ||r2||_2^2)`.
    pub tol: T,
    pub max_cycles: usize,
    pub pre_sweeps: usize,
    pub post_sweeps: usize,
    /// Coarsest grid size; equal to the fine `N` for pure smoothing.
    pub min_level_n: usize,
    /// Iterates are clamped into `[eps, 1/rho - eps]`.
    pub interior_eps: T,
    pub cycle: CycleKind,
    /// Sweeps on the coarsest level.
    pub coarse_sweeps: usize,
    pub initial_guess: InitialGuess,
    pub linearization: Linearization,
}

impl<T: Real> Default for SolverConfig<T> {
    fn default() -> Self {
        Self {
            tol: T::lit(1e-9),
            max_cycles: 100,
            pre_sweeps: 2,
            post_sweeps: 2,
            min_level_n: 4,
            interior_eps: T::lit(1e-9),
            cycle: CycleKind::V,
            coarse_sweeps: 50,
            initial_guess: InitialGuess::Extrapolate,
            linearization: Linearization::Newton,
        }
    }
}

impl<T: Real> SolverConfig<T> {
    /// Checks the configuration against a fine grid size and the model.
    pub fn validate(&self, n: usize, p: &ModelParams<T>) -> Result<()> {
        if !(self.tol > T::zero()) {
            return Err(Error::InvalidParameter { name: "tol", value: self.tol.as_f64() });
        }
        if self.max_cycles == 0 {
            return Err(Error::InvalidParameter { name: "max_cycles", value: 0.0 });
        }
        if !(self.interior_eps > T::zero() && self.interior_eps < p.upper() / T::lit(2.0)) {
            return Err(Error::InvalidParameter { name: "interior_eps", value: self.interior_eps.as_f64() });
        }
        let m = self.min_level_n;
        if m < 2 || m > n {
            return Err(Error::InvalidGrid(format!("min_level_n {m} incompatible with N = {n}")));
        }
        if m < n {
            if !m.is_power_of_two() || m < 4 {
                return Err(Error::InvalidGrid(format!("min_level_n {m} must be a power of two >= 4")));
            }
            if !n.is_power_of_two() {
                return Err(Error::InvalidGrid(format!("N = {n} must be a power of two for multigrid")));
            }
        }
        Ok(())
    }

    pub fn levels(&self, n: usize) -> usize {
        let mut count = 1;
        let mut k = n;
        while k > self.min_level_n && k.is_multiple_of(2) {
            k /= 2;
            count += 1;
        }
        count
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub cycles: usize,
    /// Combined residual norm before the first cycle and after each cycle.
    pub residual_history: Vec<f64>,
    pub converged: bool,
    /// Clamp activations during the last cycle.
    pub final_clamps: usize,
}

impl SolveReport {
    pub fn final_residual(&self) -> f64 {
        self.residual_history.last().copied().unwrap_or(f64::NAN)
    }

    /// Geometric-mean residual reduction per cycle.
    pub fn mean_reduction(&self) -> Option<f64> {
        let first = *self.residual_history.first()?;
        let last = *self.residual_history.last()?;
        if self.cycles == 0 || last <= 0.0 {
            return None;
        }
        Some((first / last).powf(1.0 / self.cycles as f64))
    }
}

#[derive(Debug, Clone)]
struct Level<T> {
    grid: GridSpec<T>,
    phi: Vec<T>,
    mu: Vec<T>,
    f1: Vec<T>,
    f2: Vec<T>,
    r1: Vec<T>,
    r2: Vec<T>,
    kap: Vec<T>,
    phi_start: Vec<T>,
    mu_start: Vec<T>,
}

impl<T: Real> Level<T> {
    fn new(grid: GridSpec<T>) -> Self {
        let z = vec![T::zero(); grid.cells()];
        Self {
            grid,
            phi: z.clone(),
            mu: z.clone(),
            f1: z.clone(),
            f2: z.clone(),
            r1: z.clone(),
            r2: z.clone(),
            kap: z.clone(),
            phi_start: z.clone(),
            mu_start: z,
        }
    }
}

/// Interior clamp bounds.
#[derive(Debug, Clone, Copy)]
struct Bounds<T> {
    lo: T,
    hi: T,
}

/// Fused evaluation of `N(u)` on one level.
fn apply_kernel<T: Real>(
    op: &StepOperator<T>,
    grid: &GridSpec<T>,
    phi: &[T],
    mu: &[T],
    kap: &mut [T],
    out1: &mut [T],
    out2: &mut [T],
) {
    let p = &op.params;
    let n = grid.n();
    let inv_h2 = T::one() / (grid.h() * grid.h());
    let half = T::lit(0.5);
    let four = T::lit(4.0);
    let concave = if op.implicit_concave { T::lit(2.0) * p.chi * p.rho } else { T::zero() };
    for (k, &v) in kap.iter_mut().zip(phi) {
        *k = kappa(v);
    }
    for j in 0..n {
        let (jn, jp) = (grid.next(j), grid.prev(j));
        for i in 0..n {
            let (inx, ipx) = (grid.next(i), grid.prev(i));
            let c = grid.idx(i, j);
            let nb = [grid.idx(inx, j), grid.idx(ipx, j), grid.idx(i, jn), grid.idx(i, jp)];
            let pc = phi[c];
            let kc = kap[c];
            let (mut sum_phi, mut sum_mu, mut sum_k, mut sum_kphi, mut sq) =
                (T::zero(), T::zero(), T::zero(), T::zero(), T::zero());
            for &m in &nb {
                let d = phi[m] - pc;
                sum_phi = sum_phi + phi[m];
                sum_mu = sum_mu + mu[m];
                sum_k = sum_k + kap[m];
                sum_kphi = sum_kphi + kap[m] * phi[m];
                sq = sq + d * d;
            }
            let g = half * sq * inv_h2;
            out1[c] = op.time_coeff * pc - op.lap_coeff * inv_h2 * (sum_mu - four * mu[c]);
            out2[c] = mu[c] - kappa_prime(pc) * g
                + inv_h2 * (sum_kphi + kc * sum_phi - (sum_k + four * kc) * pc)
                + op.reg * inv_h2 * (sum_phi - four * pc)
                - p.s_prime(pc)
                + concave * pc;
        }
    }
}

/// One red (`color = 0`) or black (`color = 1`) half-sweep. Returns the
/// number of clamp activations. `kap` must hold `kappa(phi)` on entry and is
/// kept current.
#[allow(clippy::too_many_arguments)]
fn smooth_color<T: Real>(
    op: &StepOperator<T>,
    grid: &GridSpec<T>,
    phi: &mut [T],
    mu: &mut [T],
    f1: &[T],
    f2: &[T],
    kap: &mut [T],
    color: usize,
    bounds: Bounds<T>,
    lin: Linearization,
) -> Result<usize> {
    let p = &op.params;
    let n = grid.n();
    let inv_h2 = T::one() / (grid.h() * grid.h());
    let half = T::lit(0.5);
    let four = T::lit(4.0);
    let two = T::lit(2.0);
    let a12 = four * op.lap_coeff * inv_h2;
    let ct = op.time_coeff;
    let concave = if op.implicit_concave { T::lit(2.0) * p.chi * p.rho } else { T::zero() };
    let tiny = T::min_positive_value() * T::lit(1e8) * (ct.abs() + a12.abs());
    let mut clamps = 0;
    for j in 0..n {
        let (jn, jp) = (grid.next(j), grid.prev(j));
        let start = (color + j) % 2;
        for i in (start..n).step_by(2) {
            let (inx, ipx) = (grid.next(i), grid.prev(i));
            let c = grid.idx(i, j);
            let nb = [grid.idx(inx, j), grid.idx(ipx, j), grid.idx(i, jn), grid.idx(i, jp)];
            let pc = phi[c];
            let kc = kap[c];
            let (mut sum_phi, mut sum_mu, mut sum_k, mut sum_kphi, mut sq) =
                (T::zero(), T::zero(), T::zero(), T::zero(), T::zero());
            for &m in &nb {
                let d = phi[m] - pc;
                sum_phi = sum_phi + phi[m];
                sum_mu = sum_mu + mu[m];
                sum_k = sum_k + kap[m];
                sum_kphi = sum_kphi + kap[m] * phi[m];
                sq = sq + d * d;
            }
            let g = half * sq * inv_h2;
            let s1 = p.s_prime(pc);
            let s2 = p.s_second(pc);

            let b1 = f1[c] + op.lap_coeff * inv_h2 * sum_mu;
            let (jac, b2) = match lin {
                Linearization::Newton => {
                    let kp = kappa_prime(pc);
                    let m = -kp * g
                        + inv_h2 * (sum_kphi + kc * sum_phi - (sum_k + four * kc) * pc)
                        + op.reg * inv_h2 * (sum_phi - four * pc)
                        - s1
                        + concave * pc;
                    let jac = -kappa_second(pc) * g + two * kp * (sum_phi - four * pc) * inv_h2
                        - (sum_k + four * kc) * inv_h2
                        - four * op.reg * inv_h2
                        - s2
                        + concave;
                    (jac, f2[c] - m + jac * pc)
                }
                Linearization::Frozen => {
                    let jac = -kappa_prime(pc) * g / pc - (sum_k + four * kc) * inv_h2
                        + kc * sum_phi * inv_h2 / pc
                        - four * op.reg * inv_h2
                        - s2
                        + concave;
                    (jac, f2[c] - s2 * pc + s1 - inv_h2 * sum_kphi - op.reg * inv_h2 * sum_phi)
                }
            };

            let det = ct - a12 * jac;
            if !(det.abs() > tiny) {
                return Err(Error::SingularLocalSystem { i, j, det: det.as_f64() });
            }
            let mut new_phi = (b1 - a12 * b2) / det;
            let mut new_mu = (ct * b2 - jac * b1) / det;
            if !new_phi.is_finite() || !new_mu.is_finite() {
                return Err(Error::SingularLocalSystem { i, j, det: det.as_f64() });
            }
            if new_phi < bounds.lo || new_phi > bounds.hi {
                new_phi = new_phi.max(bounds.lo).min(bounds.hi);
                new_mu = b2 - jac * new_phi;
                clamps += 1;
            }
            phi[c] = new_phi;
            mu[c] = new_mu;
            kap[c] = kappa(new_phi);
        }
    }
    Ok(clamps)
}

fn clamp_into<T: Real>(values: &mut [T], bounds: Bounds<T>) -> usize {
    let mut count = 0;
    for v in values.iter_mut() {
        if *v < bounds.lo || *v > bounds.hi || !v.is_finite() {
            *v = if v.is_finite() { v.max(bounds.lo).min(bounds.hi) } else { bounds.lo };
            count += 1;
        }
    }
    count
}

fn restrict_into<T: Real>(fine: &GridSpec<T>, src: &[T], dst: &mut [T]) {
    let nc = fine.n() / 2;
    let nf = fine.n();
    let quarter = T::lit(0.25);
    for jc in 0..nc {
        for ic in 0..nc {
            let (i, j) = (2 * ic, 2 * jc);
            dst[jc * nc + ic] = quarter
                * (src[j * nf + i] + src[j * nf + i + 1] + src[(j + 1) * nf + i] + src[(j + 1) * nf + i + 1]);
        }
    }
}

/// Bilinear cell-centered interpolation, added onto `dst` (`accumulate`) or written.
fn prolong_into<T: Real>(coarse: &GridSpec<T>, src: &[T], dst: &mut [T], accumulate: bool) {
    let nc = coarse.n();
    let nf = 2 * nc;
    let (w0, w1, w2) = (T::lit(9.0 / 16.0), T::lit(3.0 / 16.0), T::lit(1.0 / 16.0));
    for jf in 0..nf {
        let jc = jf / 2;
        let jo = if jf % 2 == 0 { coarse.prev(jc) } else { coarse.next(jc) };
        for i_f in 0..nf {
            let ic = i_f / 2;
            let io = if i_f % 2 == 0 { coarse.prev(ic) } else { coarse.next(ic) };
            let v = w0 * src[jc * nc + ic]
                + w1 * (src[jc * nc + io] + src[jo * nc + ic])
                + w2 * src[jo * nc + io];
            let k = jf * nf + i_f;
            dst[k] = if accumulate { dst[k] + v } else { v };
        }
    }
}

/// Average of the 2x2 children of each coarse cell.
pub fn restrict<T: Real>(fine: &CellField<T>) -> Result<CellField<T>> {
    let coarse = fine.grid().coarsen()?;
    let mut out = vec![T::zero(); coarse.cells()];
    restrict_into(fine.grid(), fine.values(), &mut out);
    CellField::from_vec(coarse, out)
}

/// Bilinear interpolation to the grid with twice as many cells per axis.
pub fn prolong<T: Real>(coarse: &CellField<T>) -> CellField<T> {
    let fine = coarse.grid().refine().expect("refinable grid");
    let mut out = vec![T::zero(); fine.cells()];
    prolong_into(coarse.grid(), coarse.values(), &mut out, false);
    CellField::from_vec(fine, out).expect("size matches")
}

fn norm2<T: Real>(grid: &GridSpec<T>, a: &[T], b: &[T]) -> T {
    let s = a.iter().chain(b).fold(T::zero(), |acc, &v| acc + v * v);
    (grid.h() * grid.h() * s).sqrt()
}

/// FAS multigrid solver owning its level hierarchy and work buffers.
#[derive(Debug, Clone)]
pub struct Solver<T> {
    config: SolverConfig<T>,
    levels: Vec<Level<T>>,
    op: Option<StepOperator<T>>,
    bounds: Bounds<T>,
    clamps: usize,
}

impl<T: Real> Solver<T> {
    pub fn new(config: SolverConfig<T>) -> Self {
        Self {
            config,
            levels: Vec::new(),
            op: None,
            bounds: Bounds { lo: T::zero(), hi: T::one() },
            clamps: 0,
        }
    }

    pub fn config(&self) -> &SolverConfig<T> {
        &self.config
    }

    fn prepare(&mut self, grid: GridSpec<T>, op: StepOperator<T>) -> Result<()> {
        let p = &op.params;
        self.config.validate(grid.n(), p)?;
        let depth = self.config.levels(grid.n());
        let rebuild = self.levels.len() != depth || self.levels.first().map(|l| l.grid) != Some(grid);
        if rebuild {
            self.levels.clear();
            let mut g = grid;
            for d in 0..depth {
                self.levels.push(Level::new(g));
                if d + 1 < depth {
                    g = g.coarsen()?;
                }
            }
        }
        let eps = self.config.interior_eps;
        self.bounds = Bounds { lo: eps, hi: p.upper() - eps };
        self.op = Some(op);
        Ok(())
    }

    fn op(&self) -> &StepOperator<T> {
        self.op.as_ref().expect("operator set before use")
    }

    fn smooth_level(&mut self, l: usize, sweeps: usize) -> Result<()> {
        let op = *self.op();
        let bounds = self.bounds;
        let lin = self.config.linearization;
        let lev = &mut self.levels[l];
        for (k, &v) in lev.kap.iter_mut().zip(&lev.phi) {
            *k = kappa(v);
        }
        for _ in 0..sweeps {
            for color in [0, 1] {
                self.clamps += smooth_color(
                    &op,
                    &lev.grid,
                    &mut lev.phi,
                    &mut lev.mu,
                    &lev.f1,
                    &lev.f2,
                    &mut lev.kap,
                    color,
                    bounds,
                    lin,
                )?;
            }
        }
        Ok(())
    }

    /// `r = f - N(u)` on level `l`; returns the combined norm.
    fn residual_level(&mut self, l: usize) -> T {
        let op = *self.op();
        let lev = &mut self.levels[l];
        apply_kernel(&op, &lev.grid, &lev.phi, &lev.mu, &mut lev.kap, &mut lev.r1, &mut lev.r2);
        for (r, &f) in lev.r1.iter_mut().zip(&lev.f1) {
            *r = f - *r;
        }
        for (r, &f) in lev.r2.iter_mut().zip(&lev.f2) {
            *r = f - *r;
        }
        norm2(&lev.grid, &lev.r1, &lev.r2)
    }

    /// One FAS cycle starting at level `l`.
    pub fn fas_cycle(&mut self, l: usize) -> Result<()> {
        let last = self.levels.len() - 1;
        if l == last {
            let sweeps = if last == 0 {
                self.config.pre_sweeps + self.config.post_sweeps
            } else {
                self.config.coarse_sweeps
            };
            return self.smooth_level(l, sweeps);
        }
        self.smooth_level(l, self.config.pre_sweeps)?;
        self.residual_level(l);
        {
            let op = *self.op();
            let (fine_part, coarse_part) = self.levels.split_at_mut(l + 1);
            let fine = &fine_part[l];
            let coarse = &mut coarse_part[0];
            restrict_into(&fine.grid, &fine.phi, &mut coarse.phi);
            restrict_into(&fine.grid, &fine.mu, &mut coarse.mu);
            coarse.phi_start.copy_from_slice(&coarse.phi);
            coarse.mu_start.copy_from_slice(&coarse.mu);
            // coarse right-hand side: N_c(R u) + R(f - N(u))
            apply_kernel(
                &op,
                &coarse.grid,
                &coarse.phi,
                &coarse.mu,
                &mut coarse.kap,
                &mut coarse.f1,
                &mut coarse.f2,
            );
            restrict_into(&fine.grid, &fine.r1, &mut coarse.r1);
            restrict_into(&fine.grid, &fine.r2, &mut coarse.r2);
            for (f, &r) in coarse.f1.iter_mut().zip(&coarse.r1) {
                *f = *f + r;
            }
            for (f, &r) in coarse.f2.iter_mut().zip(&coarse.r2) {
                *f = *f + r;
            }
        }
        let visits = match self.config.cycle {
            CycleKind::V => 1,
            CycleKind::W => 2,
        };
        for _ in 0..visits {
            self.fas_cycle(l + 1)?;
        }
        {
            let bounds = self.bounds;
            let (fine_part, coarse_part) = self.levels.split_at_mut(l + 1);
            let fine = &mut fine_part[l];
            let coarse = &mut coarse_part[0];
            for (e, &s) in coarse.phi.iter_mut().zip(&coarse.phi_start) {
                *e = *e - s;
            }
            for (e, &s) in coarse.mu.iter_mut().zip(&coarse.mu_start) {
                *e = *e - s;
            }
            prolong_into(&coarse.grid, &coarse.phi, &mut fine.phi, true);
            prolong_into(&coarse.grid, &coarse.mu, &mut fine.mu, true);
            self.clamps += clamp_into(&mut fine.phi, bounds);
        }
        self.smooth_level(l, self.config.post_sweeps)
    }

    /// Removes the constant mode of the first residual, which red-black
    /// smoothing leaves almost untouched. Since `sum Delta_h mu = 0`, a shift of
    /// `phi` by `delta` moves `N1` by exactly `time_coeff * delta`.
    /// Expects `r1` on the fine level to be current.
    fn mean_correction(&mut self) {
        let ct = self.op().time_coeff;
        let bounds = self.bounds;
        let lev = &mut self.levels[0];
        let n = T::from_usize_lossy(lev.r1.len());
        let delta = lev.r1.iter().fold(T::zero(), |a, &r| a + r) / n / ct;
        for v in lev.phi.iter_mut() {
            *v = *v + delta;
        }
        self.clamps += clamp_into(&mut lev.phi, bounds);
    }

    fn load_fine(&mut self, phi: &CellField<T>, mu: &CellField<T>, s1: &CellField<T>, s2: &CellField<T>) {
        let lev = &mut self.levels[0];
        lev.phi.copy_from_slice(phi.values());
        lev.mu.copy_from_slice(mu.values());
        lev.f1.copy_from_slice(s1.values());
        lev.f2.copy_from_slice(s2.values());
    }

    fn fine_fields(&self) -> (CellField<T>, CellField<T>) {
        let lev = &self.levels[0];
        (
            CellField::from_vec(lev.grid, lev.phi.clone()).expect("size"),
            CellField::from_vec(lev.grid, lev.mu.clone()).expect("size"),
        )
    }

    /// Initial iterate for a state: clamped extrapolant (or `phi^n`) and the
    /// chemical potential that satisfies the second equation exactly.
    pub fn initial_iterate(
        &mut self,
        state: &SchemeState<T>,
        p: &ModelParams<T>,
    ) -> Result<(CellField<T>, CellField<T>)> {
        let op = StepOperator::new(state.variant(), state.dt(), p);
        let grid = *state.phi().grid();
        self.prepare(grid, op)?;
        let (_, s2) = op.source(state);
        let two = T::lit(2.0);
        let mut phi0 = match self.config.initial_guess {
            InitialGuess::Extrapolate => state.phi().zip_map(state.phi_prev(), |a, b| two * a - b)?,
            InitialGuess::Previous => state.phi().clone(),
        };
        clamp_into(phi0.values_mut(), self.bounds);
        let zero = CellField::zeros(grid);
        let lev = &mut self.levels[0];
        let (mut n1, mut n2) = (vec![T::zero(); grid.cells()], vec![T::zero(); grid.cells()]);
        apply_kernel(&op, &grid, phi0.values(), zero.values(), &mut lev.kap, &mut n1, &mut n2);
        let mu0 = CellField::from_fn(grid, |i, j| s2.at(i, j) - n2[grid.idx(i, j)]);
        Ok((phi0, mu0))
    }

    /// Solves one time step from the solver's initial iterate.
    pub fn solve(
        &mut self,
        state: &SchemeState<T>,
        p: &ModelParams<T>,
    ) -> Result<(Solution<T>, SolveReport)> {
        let (phi0, mu0) = self.initial_iterate(state, p)?;
        self.solve_from(state, p, phi0, mu0)
    }

    /// Solves one time step from a caller-provided iterate.
    pub fn solve_from(
        &mut self,
        state: &SchemeState<T>,
        p: &ModelParams<T>,
        phi0: CellField<T>,
        mu0: CellField<T>,
    ) -> Result<(Solution<T>, SolveReport)> {
        let op = StepOperator::new(state.variant(), state.dt(), p);
        let grid = *state.phi().grid();
        grid.same_as(phi0.grid())?;
        grid.same_as(mu0.grid())?;
        self.prepare(grid, op)?;
        let (s1, s2) = op.source(state);
        self.load_fine(&phi0, &mu0, &s1, &s2);
        let tol = self.config.tol;
        let mut history = vec![self.residual_level(0).as_f64()];
        let mut cycles = 0;
        let mut final_clamps = 0;
        while history.last().copied().unwrap_or(f64::INFINITY) > tol.as_f64()
            && cycles < self.config.max_cycles
        {
            self.clamps = 0;
            self.fas_cycle(0)?;
            self.residual_level(0);
            self.mean_correction();
            final_clamps = self.clamps;
            cycles += 1;
            let r = self.residual_level(0).as_f64();
            history.push(r);
            if !r.is_finite() {
                break;
            }
        }
        let converged = history.last().is_some_and(|&r| r <= tol.as_f64());
        let report = SolveReport { cycles, residual_history: history, converged, final_clamps };
        if !converged {
            return Err(Error::NotConverged(Box::new(report)));
        }
        let (phi, mu) = self.fine_fields();
        let target = op.target_mean(state);
        let drift = ((phi.mean() - target) / target).abs();
        let mass_tol = T::tol(crate::scheme::MASS_TOL);
        if drift > T::lit(mass_tol) {
            return Err(Error::MassDrift { relative: drift.as_f64(), tol: mass_tol });
        }
        Ok(((phi, mu), report))
    }

    /// Red-black sweeps on the fine level against `N(u) = (f1, f2)`.
    /// Returns the number of clamp activations.
    #[allow(clippy::too_many_arguments)]
    pub fn smooth_rb(
        &mut self,
        op: StepOperator<T>,
        phi: &mut CellField<T>,
        mu: &mut CellField<T>,
        f1: &CellField<T>,
        f2: &CellField<T>,
        sweeps: usize,
    ) -> Result<usize> {
        self.prepare(*phi.grid(), op)?;
        self.load_fine(phi, mu, f1, f2);
        self.clamps = 0;
        self.smooth_level(0, sweeps)?;
        let (p_new, m_new) = self.fine_fields();
        *phi = p_new;
        *mu = m_new;
        Ok(self.clamps)
    }
}

/// One red (`color = 0`) or black (`color = 1`) half-sweep on standalone fields.
#[allow(clippy::too_many_arguments)]
pub fn smooth_half<T: Real>(
    op: &StepOperator<T>,
    phi: &mut CellField<T>,
    mu: &mut CellField<T>,
    f1: &CellField<T>,
    f2: &CellField<T>,
    color: usize,
    interior_eps: T,
    lin: Linearization,
) -> Result<usize> {
    let grid = *phi.grid();
    let mut kap: Vec<T> = phi.values().iter().map(|&v| kappa(v)).collect();
    let bounds = Bounds { lo: interior_eps, hi: op.params.upper() - interior_eps };
    let mut m = mu.values().to_vec();
    let clamps = smooth_color(
        op,
        &grid,
        phi.values_mut(),
        &mut m,
        f1.values(),
        f2.values(),
        &mut kap,
        color,
        bounds,
        lin,
    )?;
    mu.values_mut().copy_from_slice(&m);
    Ok(clamps)
}

/// `N(u)` through the fused kernel used by the solver.
pub fn apply_operator<T: Real>(
    op: &StepOperator<T>,
    phi: &CellField<T>,
    mu: &CellField<T>,
) -> Result<(CellField<T>, CellField<T>)> {
    let grid = *phi.grid();
    grid.same_as(mu.grid())?;
    op.params.check_field(phi)?;
    let mut kap = vec![T::zero(); grid.cells()];
    let (mut a, mut b) = (vec![T::zero(); grid.cells()], vec![T::zero(); grid.cells()]);
    apply_kernel(op, &grid, phi.values(), mu.values(), &mut kap, &mut a, &mut b);
    Ok((CellField::from_vec(grid, a)?, CellField::from_vec(grid, b)?))
}

/// Solves one step with a fresh [`Solver`].
pub fn solve<T: Real>(
    state: &SchemeState<T>,
    p: &ModelParams<T>,
    config: &SolverConfig<T>,
) -> Result<(Solution<T>, SolveReport)> {
    Solver::new(config.clone()).solve(state, p)
}

//! Fully discrete time-stepping systems written as residual equations
//! `N(u) = S` for `u = (phi^{n+1}, mu^{n+1})`.
//!
//! Every variant shares the chemical-potential structure; they differ in the
//! time stencil, in where the concave part `H'` is evaluated and in whether the
//! `-A dt Delta_h(phi^{n+1} - phi^n)` regularization is present:
//!
//! | variant              | time stencil                  | `H'` at           | `A`   |
//! |----------------------|-------------------------------|-------------------|-------|
//! | `Bdf2Regularized`    | `(3, -4, 1) / (2 dt)`         | `2 phi^n - phi^{n-1}` | model |
//! | `Bdf2Plain`          | `(3, -4, 1) / (2 dt)`         | `2 phi^n - phi^{n-1}` | 0     |
//! | `Cs1`                | `(1, -1) / dt`                | `phi^n`           | 0     |
//! | `Bdf2FullImplicit`   | `(3, -4, 1) / (2 dt)`         | `phi^{n+1}`       | 0     |

use std::fmt;
use std::str::FromStr;

use crate::energy::{
    discrete_energy, gradient_energy_derivative, kappa, kappa_prime, modified_energy_with, ModelParams,
};
use crate::error::{Error, Result};
use crate::grid::{laplacian, CellField};
use crate::num::Real;
use crate::solver::{SolveReport, Solver, SolverConfig};
use crate::spectral::PeriodicPoisson;

/// Relative tolerance of the per-step mass check (in `f64`; see [`Real::tol`]).
pub const MASS_TOL: f64 = 1e-10;
/// Relative slack allowed on each energy-decay check.
pub const ENERGY_SLACK: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SchemeVariant {
    Bdf2Regularized,
    Bdf2Plain,
    Cs1,
    Bdf2FullImplicit,
}

impl SchemeVariant {
    pub const ALL: [SchemeVariant; 4] = [
        SchemeVariant::Cs1,
        SchemeVariant::Bdf2Regularized,
        SchemeVariant::Bdf2Plain,
        SchemeVariant::Bdf2FullImplicit,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            SchemeVariant::Bdf2Regularized => "bdf2_regularized",
            SchemeVariant::Bdf2Plain => "bdf2_plain",
            SchemeVariant::Cs1 => "cs1",
            SchemeVariant::Bdf2FullImplicit => "bdf2_full_implicit",
        }
    }

    pub fn is_bdf2(&self) -> bool {
        !matches!(self, SchemeVariant::Cs1)
    }
}

impl fmt::Display for SchemeVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SchemeVariant {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "bdf2_regularized" | "bdf2" => Ok(SchemeVariant::Bdf2Regularized),
            "bdf2_plain" => Ok(SchemeVariant::Bdf2Plain),
            "cs1" => Ok(SchemeVariant::Cs1),
            "bdf2_full_implicit" => Ok(SchemeVariant::Bdf2FullImplicit),
            other => Err(format!("unknown scheme variant '{other}'")),
        }
    }
}

/// Time-stepping window `(phi^n, phi^{n-1})`.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemeState<T> {
    pub(crate) phi_n: CellField<T>,
    pub(crate) phi_nm1: CellField<T>,
    pub(crate) dt: T,
    pub(crate) step: usize,
    pub(crate) variant: SchemeVariant,
}

impl<T: Real> SchemeState<T> {
    /// Starts a run from `phi0`; BDF2 variants take `phi^1 := phi^0` and begin at step 1.
    pub fn init(phi0: CellField<T>, dt: T, variant: SchemeVariant, p: &ModelParams<T>) -> Result<Self> {
        if !(dt > T::zero()) || !dt.is_finite() {
            return Err(Error::InvalidParameter { name: "dt", value: dt.as_f64() });
        }
        p.check_field(&phi0)?;
        let step = if variant.is_bdf2() { 1 } else { 0 };
        Ok(Self { phi_nm1: phi0.clone(), phi_n: phi0, dt, step, variant })
    }

    pub fn phi(&self) -> &CellField<T> {
        &self.phi_n
    }

    pub fn phi_prev(&self) -> &CellField<T> {
        &self.phi_nm1
    }

    pub fn dt(&self) -> T {
        self.dt
    }

    pub fn step(&self) -> usize {
        self.step
    }

    pub fn time(&self) -> T {
        T::from_usize_lossy(self.step) * self.dt
    }

    pub fn variant(&self) -> SchemeVariant {
        self.variant
    }

    /// Shifts the window after an accepted solve.
    pub(crate) fn shifted(&self, phi_new: CellField<T>) -> Self {
        Self {
            phi_nm1: self.phi_n.clone(),
            phi_n: phi_new,
            dt: self.dt,
            step: self.step + 1,
            variant: self.variant,
        }
    }
}

/// See [`SchemeState::init`].
pub fn init_state<T: Real>(
    phi0: CellField<T>,
    dt: T,
    variant: SchemeVariant,
    p: &ModelParams<T>,
) -> Result<SchemeState<T>> {
    SchemeState::init(phi0, dt, variant, p)
}

/// Level-independent coefficients of `N`.
///
/// ```text
/// N1 = time_coeff phi - lap_coeff Delta_h mu
/// N2 = mu - kappa'(phi) g(phi) + 2 div_h(A kappa grad_h phi) + reg Delta_h phi - S'(phi)
///      [- H'(phi) when the concave part is implicit]
/// ```
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOperator<T> {
    pub time_coeff: T,
    pub lap_coeff: T,
    /// `A dt`, zero for the unregularized variants.
    pub reg: T,
    pub implicit_concave: bool,
    pub params: ModelParams<T>,
}

impl<T: Real> StepOperator<T> {
    pub fn new(variant: SchemeVariant, dt: T, p: &ModelParams<T>) -> Self {
        let (time_coeff, lap_coeff) = match variant {
            SchemeVariant::Cs1 => (T::one(), dt),
            _ => (T::lit(3.0), T::lit(2.0) * dt),
        };
        let reg = match variant {
            SchemeVariant::Bdf2Regularized => p.a_reg * dt,
            _ => T::zero(),
        };
        Self {
            time_coeff,
            lap_coeff,
            reg,
            implicit_concave: variant == SchemeVariant::Bdf2FullImplicit,
            params: *p,
        }
    }

    /// `N(u)` assembled from the grid operators.
    pub fn apply(&self, phi: &CellField<T>, mu: &CellField<T>) -> Result<(CellField<T>, CellField<T>)> {
        self.params.check_field(phi)?;
        phi.grid().same_as(mu.grid())?;
        let p = &self.params;
        let lap_mu = laplacian(mu);
        let lap_phi = laplacian(phi);
        let n1 = CellField::from_fn(*phi.grid(), |i, j| {
            self.time_coeff * phi.at(i, j) - self.lap_coeff * lap_mu.at(i, j)
        });
        let grad_part = gradient_energy_derivative(phi, kappa, kappa_prime);
        let n2 = CellField::from_fn(*phi.grid(), |i, j| {
            let v = phi.at(i, j);
            let mut out = mu.at(i, j) - grad_part.at(i, j) + self.reg * lap_phi.at(i, j) - p.s_prime(v);
            if self.implicit_concave {
                out = out - p.h_prime(v);
            }
            out
        });
        Ok((n1, n2))
    }

    /// Source `S` built from the time-stepping window.
    pub fn source(&self, state: &SchemeState<T>) -> (CellField<T>, CellField<T>) {
        let p = &self.params;
        let (phi_n, phi_nm1) = (&state.phi_n, &state.phi_nm1);
        let two = T::lit(2.0);
        match state.variant {
            SchemeVariant::Cs1 => (phi_n.clone(), phi_n.map(|v| p.h_prime(v))),
            variant => {
                let s1 = phi_n.zip_map(phi_nm1, |a, b| T::lit(4.0) * a - b).expect("same grid");
                let s2 = match variant {
                    SchemeVariant::Bdf2FullImplicit => CellField::zeros(*phi_n.grid()),
                    _ => {
                        let lap = laplacian(phi_n);
                        CellField::from_fn(*phi_n.grid(), |i, j| {
                            p.h_prime(two * phi_n.at(i, j) - phi_nm1.at(i, j)) + self.reg * lap.at(i, j)
                        })
                    }
                };
                (s1, s2)
            }
        }
    }

    /// Mean that `phi^{n+1}` must carry: the time stencil conserves `mean(phi^n)`.
    pub fn target_mean(&self, state: &SchemeState<T>) -> T {
        state.phi_n.mean()
    }
}

/// `(N1(u) - S1, N2(u) - S2)` for the state's variant.
pub fn residual<T: Real>(
    phi: &CellField<T>,
    mu: &CellField<T>,
    state: &SchemeState<T>,
    p: &ModelParams<T>,
) -> Result<(CellField<T>, CellField<T>)> {
    let op = StepOperator::new(state.variant, state.dt, p);
    let (n1, n2) = op.apply(phi, mu)?;
    let (s1, s2) = op.source(state);
    Ok((&n1 - &s1, &n2 - &s2))
}

/// Outcome of one accepted step.
#[derive(Debug, Clone)]
pub struct StepReport<T> {
    pub solve: SolveReport,
    /// `F(phi^{n+1})`.
    pub energy: T,
    /// `E_h(phi^{n+1}, phi^n)`.
    pub modified_energy: T,
}

/// Advances a run while owning the solver buffers and the energy history.
pub struct Stepper<T: Real> {
    params: ModelParams<T>,
    solver: Solver<T>,
    poisson: Option<PeriodicPoisson<T>>,
    /// `(step, E_h(phi^n, phi^{n-1}), F(phi^n))` for the last state seen.
    last: Option<(usize, T, T)>,
}

impl<T: Real> Stepper<T> {
    pub fn new(params: ModelParams<T>, config: SolverConfig<T>) -> Self {
        Self { params, solver: Solver::new(config), poisson: None, last: None }
    }

    pub fn params(&self) -> &ModelParams<T> {
        &self.params
    }

    pub fn solver(&self) -> &Solver<T> {
        &self.solver
    }

    fn poisson(&mut self, phi: &CellField<T>) -> &PeriodicPoisson<T> {
        let stale = self.poisson.as_ref().is_none_or(|ps| ps.grid() != phi.grid());
        if stale {
            self.poisson = Some(PeriodicPoisson::new(*phi.grid()));
        }
        self.poisson.as_ref().expect("just set")
    }

    /// `(E_h(phi^n, phi^{n-1}), F(phi^n))` of a state.
    pub fn energies(&mut self, state: &SchemeState<T>) -> Result<(T, T)> {
        if let Some((step, e, f)) = self.last {
            if step == state.step {
                return Ok((e, f));
            }
        }
        let p = self.params;
        let f = discrete_energy(&state.phi_n, &p)?.total;
        let e = modified_energy_with(self.poisson(&state.phi_n), &state.phi_n, &state.phi_nm1, state.dt, &p)?;
        Ok((e, f))
    }

    /// Solves for `phi^{n+1}` and checks mass, positivity and, where a decay
    /// estimate holds, the energy.
    pub fn advance(&mut self, state: &SchemeState<T>) -> Result<(SchemeState<T>, StepReport<T>)> {
        let p = self.params;
        let (e_prev, f_prev) = self.energies(state)?;
        let ((phi, _mu), report) = self.solver.solve(state, &p)?;

        let target = state.phi_n.mean();
        let drift = ((phi.mean() - target) / target).abs();
        let mass_tol = T::tol(MASS_TOL);
        if drift > T::lit(mass_tol) {
            return Err(Error::MassDrift { relative: drift.as_f64(), tol: mass_tol });
        }
        let (lo, hi) = (phi.min(), phi.max());
        if !(lo > T::zero() && hi < p.upper()) {
            return Err(Error::Positivity { min: lo.as_f64(), max: hi.as_f64(), upper: p.upper().as_f64() });
        }

        let next = state.shifted(phi);
        let f = discrete_energy(&next.phi_n, &p)?.total;
        let e = modified_energy_with(self.poisson(&next.phi_n), &next.phi_n, &next.phi_nm1, next.dt, &p)?;
        let slack = T::lit(T::tol(ENERGY_SLACK));
        match state.variant {
            SchemeVariant::Bdf2Regularized if p.energy_decay_guaranteed() => {
                if e > e_prev + slack * e_prev.abs() {
                    return Err(Error::EnergyIncrease { previous: e_prev.as_f64(), current: e.as_f64() });
                }
            }
            SchemeVariant::Cs1 if f > f_prev + slack * f_prev.abs() => {
                return Err(Error::EnergyIncrease { previous: f_prev.as_f64(), current: f.as_f64() });
            }
            _ => {}
        }
        self.last = Some((next.step, e, f));
        Ok((next, StepReport { solve: report, energy: f, modified_energy: e }))
    }
}

/// One step with a freshly built solver; see [`Stepper::advance`].
pub fn advance<T: Real>(
    state: &SchemeState<T>,
    config: &SolverConfig<T>,
    p: &ModelParams<T>,
) -> Result<(SchemeState<T>, StepReport<T>)> {
    Stepper::new(*p, config.clone()).advance(state)
}

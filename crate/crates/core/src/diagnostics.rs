//! Run drivers and the observables tracked along a run: energies, mass,
//! bounds, refinement studies and scheme comparisons.

use std::time::Instant;

use crate::energy::ModelParams;
use crate::error::{Error, Result};
use crate::grid::{l2_norm, linf_norm, CellField, GridSpec};
use crate::initial::InitialCondition;
use crate::num::Real;
use crate::scheme::{SchemeState, SchemeVariant, StepReport, Stepper, ENERGY_SLACK, MASS_TOL};
use crate::solver::{prolong, SolverConfig};

/// One row of the per-step time series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagnosticsRecord<T> {
    pub step: usize,
    pub t: T,
    pub energy: T,
    pub modified_energy: T,
    /// `mean(phi^n) - mean(phi^0)`.
    pub mass_error: T,
    pub min_phi: T,
    pub max_phi: T,
    pub cycles: usize,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    Positivity { step: usize, min: f64, max: f64 },
    EnergyIncrease { step: usize, previous: f64, current: f64 },
    Mass { step: usize, relative: f64 },
}

/// Accumulates records and checks them against the run invariants.
///
/// In strict mode the first violation is returned as an error; otherwise it
/// is kept in [`Tracker::violations`].
#[derive(Debug, Clone)]
pub struct Tracker<T> {
    initial_mean: T,
    upper: T,
    strict: bool,
    check_energy: bool,
    previous: Option<DiagnosticsRecord<T>>,
    violations: Vec<Violation>,
}

impl<T: Real> Tracker<T> {
    /// `check_energy` enables the modified-energy monotonicity check.
    pub fn new(phi0: &CellField<T>, p: &ModelParams<T>, strict: bool, check_energy: bool) -> Self {
        Self {
            initial_mean: phi0.mean(),
            upper: p.upper(),
            strict,
            check_energy,
            previous: None,
            violations: Vec::new(),
        }
    }

    /// Whether the decay estimate applies to this variant and model.
    pub fn energy_check_applies(variant: SchemeVariant, p: &ModelParams<T>) -> bool {
        variant == SchemeVariant::Bdf2Regularized && p.energy_decay_guaranteed()
    }

    pub fn violations(&self) -> &[Violation] {
        &self.violations
    }

    pub fn last(&self) -> Option<&DiagnosticsRecord<T>> {
        self.previous.as_ref()
    }

    fn flag(&mut self, v: Violation) -> Result<()> {
        if self.strict {
            return Err(match v {
                Violation::Positivity { min, max, .. } => {
                    Error::Positivity { min, max, upper: self.upper.as_f64() }
                }
                Violation::EnergyIncrease { previous, current, .. } => {
                    Error::EnergyIncrease { previous, current }
                }
                Violation::Mass { relative, .. } => Error::MassDrift { relative, tol: T::tol(MASS_TOL) },
            });
        }
        self.violations.push(v);
        Ok(())
    }

    /// Builds and checks the record for `state` given its energies.
    pub fn record(
        &mut self,
        state: &SchemeState<T>,
        energy: T,
        modified_energy: T,
        cycles: usize,
        residual: f64,
    ) -> Result<DiagnosticsRecord<T>> {
        let phi = state.phi();
        let rec = DiagnosticsRecord {
            step: state.step(),
            t: state.time(),
            energy,
            modified_energy,
            mass_error: phi.mean() - self.initial_mean,
            min_phi: phi.min(),
            max_phi: phi.max(),
            cycles,
            residual,
        };
        if !(rec.min_phi > T::zero() && rec.max_phi < self.upper && rec.min_phi <= rec.max_phi) {
            self.flag(Violation::Positivity {
                step: rec.step,
                min: rec.min_phi.as_f64(),
                max: rec.max_phi.as_f64(),
            })?;
        }
        let rel = (rec.mass_error / self.initial_mean).abs();
        if rel > T::lit(T::tol(MASS_TOL)) {
            self.flag(Violation::Mass { step: rec.step, relative: rel.as_f64() })?;
        }
        if self.check_energy {
            if let Some(prev) = self.previous {
                let slack = T::lit(T::tol(ENERGY_SLACK)) * prev.modified_energy.abs();
                if rec.modified_energy > prev.modified_energy + slack {
                    self.flag(Violation::EnergyIncrease {
                        step: rec.step,
                        previous: prev.modified_energy.as_f64(),
                        current: rec.modified_energy.as_f64(),
                    })?;
                }
            }
        }
        self.previous = Some(rec);
        Ok(rec)
    }

    /// Record for a state produced by [`Stepper::advance`].
    pub fn record_step(
        &mut self,
        _before: &SchemeState<T>,
        after: &SchemeState<T>,
        report: &StepReport<T>,
    ) -> Result<DiagnosticsRecord<T>> {
        self.record(
            after,
            report.energy,
            report.modified_energy,
            report.solve.cycles,
            report.solve.final_residual(),
        )
    }
}

/// Number of steps of size `dt` in `t_final`; errors unless it is an integer.
pub fn step_count<T: Real>(t_final: T, dt: T) -> Result<usize> {
    if !(dt > T::zero()) || !(t_final >= T::zero()) {
        return Err(Error::TimeStep(format!("dt = {dt}, T = {t_final}")));
    }
    let ratio = (t_final / dt).as_f64();
    let n = ratio.round();
    if (ratio - n).abs() > 1e-8 * n.max(1.0) {
        return Err(Error::TimeStep(format!("T = {t_final} is not a multiple of dt = {dt}")));
    }
    Ok(n as usize)
}

/// Run parameters shared by the drivers.
#[derive(Debug, Clone)]
pub struct RunSpec<T> {
    pub dt: T,
    pub t_final: T,
    pub variant: SchemeVariant,
    pub params: ModelParams<T>,
    pub solver: SolverConfig<T>,
    pub strict: bool,
}

/// Runs from `phi0` to `t_final`, handing each record (including the initial
/// one) to `on_record`. Returns the final state and the tracker.
pub fn simulate<T: Real>(
    phi0: CellField<T>,
    spec: &RunSpec<T>,
    mut on_record: impl FnMut(&SchemeState<T>, &DiagnosticsRecord<T>) -> Result<()>,
) -> Result<(SchemeState<T>, Tracker<T>)> {
    let p = spec.params;
    let total = step_count(spec.t_final, spec.dt)?;
    let mut tracker = Tracker::new(&phi0, &p, spec.strict, Tracker::energy_check_applies(spec.variant, &p));
    let mut state = SchemeState::init(phi0, spec.dt, spec.variant, &p)?;
    let mut stepper = Stepper::new(p, spec.solver.clone());
    let (e0, f0) = stepper.energies(&state)?;
    let rec = tracker.record(&state, f0, e0, 0, 0.0)?;
    on_record(&state, &rec)?;
    while state.step() < total {
        let (next, report) = stepper.advance(&state)?;
        let rec = tracker.record_step(&state, &next, &report)?;
        on_record(&next, &rec)?;
        state = next;
    }
    Ok((state, tracker))
}

/// Final field of a run, without per-step callbacks.
pub fn final_field<T: Real>(phi0: CellField<T>, spec: &RunSpec<T>) -> Result<CellField<T>> {
    simulate(phi0, spec, |_, _| Ok(())).map(|(s, _)| s.phi().clone())
}

/// Nearest-neighbour injection: every fine child takes its coarse parent's value.
pub fn coarse_to_fine<T: Real>(coarse: &CellField<T>, fine: &GridSpec<T>) -> Result<CellField<T>> {
    let cg = coarse.grid();
    if fine.n() != 2 * cg.n() || fine.length() != cg.length() {
        return Err(Error::GridMismatch { left: fine.n(), right: 2 * cg.n() });
    }
    Ok(CellField::from_fn(*fine, |i, j| coarse.at(i / 2, j / 2)))
}

/// Operator used to bring a coarse solution onto the fine grid before differencing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Interpolation {
    NearestNeighbor,
    Bilinear,
}

impl Interpolation {
    pub fn apply<T: Real>(&self, coarse: &CellField<T>, fine: &GridSpec<T>) -> Result<CellField<T>> {
        match self {
            Interpolation::NearestNeighbor => coarse_to_fine(coarse, fine),
            Interpolation::Bilinear => {
                let out = prolong(coarse);
                out.grid().same_as(fine)?;
                Ok(out)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefinementResult {
    pub grid_sizes: Vec<usize>,
    pub dts: Vec<f64>,
    /// `||phi_{h_f} - I(phi_{h_c})||_2` for each adjacent pair.
    pub cauchy_errors: Vec<f64>,
    /// `log2(e_k / e_{k+1})`.
    pub rates: Vec<f64>,
}

/// Linear refinement path `dt = c h`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefinementPath<T> {
    pub c: T,
}

impl<T: Real> RefinementPath<T> {
    pub fn dt(&self, grid: &GridSpec<T>) -> T {
        self.c * grid.h()
    }
}

pub struct RefinementSetup<T> {
    pub length: T,
    pub initial: InitialCondition<T>,
    pub grids: Vec<usize>,
    pub path: RefinementPath<T>,
    pub t_final: T,
    pub variant: SchemeVariant,
    pub params: ModelParams<T>,
    pub solver: SolverConfig<T>,
    pub interpolation: Interpolation,
    /// Maximum number of grids run concurrently.
    pub threads: usize,
}

pub fn rates_from_errors(errors: &[f64]) -> Vec<f64> {
    errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect()
}

/// Runs every grid of the path to `t_final` and measures Cauchy differences.
pub fn refinement_study<T: Real>(setup: &RefinementSetup<T>) -> Result<RefinementResult> {
    let finals = refinement_runs(setup)?;
    cauchy_differences(&finals, setup.interpolation, setup.path)
}

/// Final fields of every grid of the path, coarsest first.
pub fn refinement_runs<T: Real>(setup: &RefinementSetup<T>) -> Result<Vec<CellField<T>>> {
    let grids: Vec<GridSpec<T>> =
        setup.grids.iter().map(|&n| GridSpec::new(setup.length, n)).collect::<Result<_>>()?;
    if grids.len() < 2 || grids.windows(2).any(|w| w[1].n() != 2 * w[0].n()) {
        return Err(Error::InvalidGrid(format!("grids {:?} must strictly double", setup.grids)));
    }
    for g in &grids {
        step_count(setup.t_final, setup.path.dt(g))?;
    }

    let run = |g: &GridSpec<T>| -> Result<CellField<T>> {
        let spec = RunSpec {
            dt: setup.path.dt(g),
            t_final: setup.t_final,
            variant: setup.variant,
            params: setup.params,
            solver: setup.solver.clone(),
            strict: true,
        };
        final_field(setup.initial.sample(*g)?, &spec)
    };

    let threads = setup.threads.max(1);
    let mut finals: Vec<Option<Result<CellField<T>>>> = (0..grids.len()).map(|_| None).collect();
    if threads == 1 {
        for (slot, g) in finals.iter_mut().zip(&grids) {
            *slot = Some(run(g));
        }
    } else {
        // largest grids first so the long runs overlap
        let order: Vec<usize> = (0..grids.len()).rev().collect();
        for chunk in order.chunks(threads) {
            let results: Vec<(usize, Result<CellField<T>>)> = std::thread::scope(|s| {
                let handles: Vec<_> = chunk
                    .iter()
                    .map(|&k| {
                        let g = &grids[k];
                        let run = &run;
                        (k, s.spawn(move || run(g)))
                    })
                    .collect();
                handles.into_iter().map(|(k, h)| (k, h.join().expect("refinement worker panicked"))).collect()
            });
            for (k, r) in results {
                finals[k] = Some(r);
            }
        }
    }
    finals.into_iter().map(|r| r.expect("every grid ran")).collect()
}

/// Cauchy differences and rates of final fields on a doubling sequence of grids.
pub fn cauchy_differences<T: Real>(
    finals: &[CellField<T>],
    interpolation: Interpolation,
    path: RefinementPath<T>,
) -> Result<RefinementResult> {
    let mut errors = Vec::with_capacity(finals.len().saturating_sub(1));
    for w in finals.windows(2) {
        let interp = interpolation.apply(&w[0], w[1].grid())?;
        errors.push(l2_norm(&(&w[1] - &interp)).as_f64());
    }
    Ok(RefinementResult {
        grid_sizes: finals.iter().map(|f| f.grid().n()).collect(),
        dts: finals.iter().map(|f| path.dt(f.grid()).as_f64()).collect(),
        rates: rates_from_errors(&errors),
        cauchy_errors: errors,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub variant: SchemeVariant,
    pub dt: f64,
    pub max_err: f64,
    pub l2_err: f64,
    pub cpu_seconds: f64,
}

/// Runs each variant at `dt` and measures its final field against `reference`.
pub fn compare_against<T: Real>(
    phi0: &CellField<T>,
    reference: &CellField<T>,
    variants: &[SchemeVariant],
    dt: T,
    t_final: T,
    p: &ModelParams<T>,
    solver: &SolverConfig<T>,
) -> Result<Vec<ComparisonRow>> {
    let mut rows = Vec::with_capacity(variants.len());
    for &variant in variants {
        let spec = RunSpec { dt, t_final, variant, params: *p, solver: solver.clone(), strict: true };
        let start = Instant::now();
        let phi = final_field(phi0.clone(), &spec)?;
        let cpu_seconds = start.elapsed().as_secs_f64();
        let err = &phi - reference;
        rows.push(ComparisonRow {
            variant,
            dt: dt.as_f64(),
            max_err: linf_norm(&err).as_f64(),
            l2_err: l2_norm(&err).as_f64(),
            cpu_seconds,
        });
    }
    Ok(rows)
}

/// Reference run: `variant` at `dt / divisor`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceSpec {
    pub variant: SchemeVariant,
    pub divisor: usize,
}

impl Default for ReferenceSpec {
    fn default() -> Self {
        Self { variant: SchemeVariant::Bdf2FullImplicit, divisor: 16 }
    }
}

/// Runs the reference, then every variant, at `dt`.
pub fn scheme_comparison<T: Real>(
    phi0: &CellField<T>,
    variants: &[SchemeVariant],
    reference: ReferenceSpec,
    dt: T,
    t_final: T,
    p: &ModelParams<T>,
    solver: &SolverConfig<T>,
) -> Result<Vec<ComparisonRow>> {
    let ref_dt = dt / T::from_usize_lossy(reference.divisor.max(1));
    let spec = RunSpec {
        dt: ref_dt,
        t_final,
        variant: reference.variant,
        params: *p,
        solver: solver.clone(),
        strict: true,
    };
    let reference_field = final_field(phi0.clone(), &spec)?;
    compare_against(phi0, &reference_field, variants, dt, t_final, p, solver)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::restrict;

    #[test]
    fn injection_basics() {
        let cg = GridSpec::new(64.0, 8).unwrap();
        let fg = cg.refine().unwrap();
        let c = CellField::from_fn(cg, |i, j| (i * 3 + j) as f64 * 0.01 + 0.2);
        let f = coarse_to_fine(&c, &fg).unwrap();
        assert_eq!(f.at(5, 3), c.at(2, 1));
        assert!((f.mean() - c.mean()).abs() < 1e-15);
        assert_eq!(restrict(&f).unwrap(), c);
        let k = CellField::constant(cg, 0.4);
        assert!(coarse_to_fine(&k, &fg).unwrap().values().iter().all(|&v| v == 0.4));
        assert!(coarse_to_fine(&c, &GridSpec::new(64.0, 32).unwrap()).is_err());
    }

    #[test]
    fn step_counts() {
        assert_eq!(step_count(0.128, 8e-4).unwrap(), 160);
        assert_eq!(step_count(0.128, 5e-5).unwrap(), 2560);
        assert_eq!(step_count(1.6, 1e-3 / 16.0).unwrap(), 25600);
        assert!(step_count(1.0, 0.3).is_err());
        assert!(step_count(1.0, 0.0).is_err());
    }

    #[test]
    fn rates() {
        let r = rates_from_errors(&[4.0, 1.0, 0.25]);
        assert_eq!(r, vec![2.0, 2.0]);
    }

    #[test]
    fn tracker_flags() {
        let p = ModelParams::<f64>::standard();
        let g = GridSpec::new(64.0, 8).unwrap();
        let phi = CellField::constant(g, 0.5);
        let state = SchemeState::init(phi.clone(), 1e-3, SchemeVariant::Bdf2Regularized, &p).unwrap();
        let mut t = Tracker::new(&phi, &p, false, true);
        t.record(&state, 1.0, 1.0, 0, 0.0).unwrap();
        t.record(&state, 1.0, 2.0, 0, 0.0).unwrap();
        assert!(matches!(t.violations()[0], Violation::EnergyIncrease { .. }));
        let mut strict = Tracker::new(&phi, &p, true, true);
        strict.record(&state, 1.0, 1.0, 0, 0.0).unwrap();
        assert!(strict.record(&state, 1.0, 1.5, 0, 0.0).is_err());
        let mut mass = Tracker::new(&CellField::constant(g, 0.4), &p, true, false);
        assert!(matches!(mass.record(&state, 1.0, 1.0, 0, 0.0), Err(Error::MassDrift { .. })));
    }
}

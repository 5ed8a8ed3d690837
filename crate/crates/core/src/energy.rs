//! Flory-Huggins-deGennes free energy, its convex splitting and the chemical
//! potential.
//!
//! The reticular free energy density is `S(phi) + H(phi)` with
//!
//! ```text
//! S(phi) = (phi/tau) ln(alpha phi/tau) + (phi/N1) ln(beta phi/tau) + (1 - rho phi) ln(1 - rho phi)
//! H(phi) = chi phi (1 - rho phi)
//! ```
//!
//! and the gradient coefficient is `kappa(phi) = 1 / (36 phi (1 - phi))`. `S` is
//! convex and `H` concave on `(0, 1/rho)`; the energy is split as
//! `F = F_S + F_K1 + F_K2 - F_H` with every piece convex.
//!
//! Derivatives `S'` and `H'` drop their additive constants: they only ever
//! enter through a Laplacian.

use crate::error::{Error, Result};
use crate::grid::{diff_to_edges, div_from_edges, grad_l2_norm, laplacian, CellField, EdgeField};
use crate::num::Real;
use crate::spectral::PeriodicPoisson;

/// Relative tolerance on the mass difference of the two states fed to
/// [`modified_energy`].
pub const MODIFIED_ENERGY_MASS_TOL: f64 = 1e-8;

/// How the Douglas-Dupont regularization coefficient `A` is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RegPolicy<T> {
    Explicit(T),
    /// `A = chi^2 rho^2`, the smallest value with a proven energy decay.
    Chi2Rho2,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams<T> {
    pub chi: T,
    pub n1: T,
    pub n2: T,
    pub alpha: T,
    pub beta: T,
    pub tau: T,
    pub rho: T,
    pub a_reg: T,
}

impl<T: Real> ModelParams<T> {
    pub fn new(chi: T, n1: T, n2: T, policy: RegPolicy<T>) -> Result<Self> {
        for (name, v) in [("chi", chi), ("n1", n1), ("n2", n2)] {
            if !(v > T::zero()) || !v.is_finite() {
                return Err(Error::InvalidParameter { name, value: v.as_f64() });
            }
        }
        let pi = T::PI();
        let alpha = pi * ((n2 / pi).sqrt() + n1 / T::lit(2.0)).powi(2);
        let beta = alpha / (pi * n2).sqrt();
        let tau = (pi * n2).sqrt() * n1;
        let rho = T::one() + n2 / tau;
        let a_reg = match policy {
            RegPolicy::Explicit(a) => {
                if !(a >= T::zero()) || !a.is_finite() {
                    return Err(Error::InvalidParameter { name: "a_reg", value: a.as_f64() });
                }
                a
            }
            RegPolicy::Chi2Rho2 => chi * chi * rho * rho,
        };
        Ok(Self { chi, n1, n2, alpha, beta, tau, rho, a_reg })
    }

    /// The experiment setup `chi = 2.37, N1 = 5.12, N2 = 0.16, A = chi^2 rho^2`.
    pub fn standard() -> Self {
        Self::new(T::lit(2.37), T::lit(5.12), T::lit(0.16), RegPolicy::Chi2Rho2).expect("valid constants")
    }

    /// Copy with a different regularization coefficient.
    pub fn with_a_reg(mut self, a: T) -> Self {
        self.a_reg = a;
        self
    }

    /// Upper end `1/rho` of the admissible interval.
    #[inline]
    pub fn upper(&self) -> T {
        T::one() / self.rho
    }

    /// `A >= chi^2 rho^2`.
    pub fn energy_decay_guaranteed(&self) -> bool {
        self.a_reg >= self.chi * self.chi * self.rho * self.rho
    }

    #[inline]
    pub fn is_interior(&self, phi: T) -> bool {
        phi > T::zero() && phi < self.upper()
    }

    pub fn check_interior(&self, phi: T) -> Result<()> {
        if self.is_interior(phi) {
            Ok(())
        } else {
            Err(Error::OutOfDomain { value: phi.as_f64(), upper: self.upper().as_f64() })
        }
    }

    pub fn check_field(&self, phi: &CellField<T>) -> Result<()> {
        let (lo, hi) = (phi.min(), phi.max());
        if !(lo > T::zero()) {
            return self.check_interior(lo);
        }
        self.check_interior(hi)
    }

    #[inline]
    pub fn s(&self, phi: T) -> T {
        let u = T::one() - self.rho * phi;
        phi / self.tau * (self.alpha * phi / self.tau).ln()
            + phi / self.n1 * (self.beta * phi / self.tau).ln()
            + u * u.ln()
    }

    #[inline]
    pub fn s_prime(&self, phi: T) -> T {
        (T::one() / self.tau + T::one() / self.n1) * phi.ln() - self.rho * (T::one() - self.rho * phi).ln()
    }

    #[inline]
    pub fn s_second(&self, phi: T) -> T {
        (T::one() / self.tau + T::one() / self.n1) / phi + self.rho * self.rho / (T::one() - self.rho * phi)
    }

    #[inline]
    pub fn h(&self, phi: T) -> T {
        self.chi * phi * (T::one() - self.rho * phi)
    }

    #[inline]
    pub fn h_prime(&self, phi: T) -> T {
        -T::lit(2.0) * self.chi * self.rho * phi
    }

    #[inline]
    pub fn h_second(&self) -> T {
        -T::lit(2.0) * self.chi * self.rho
    }
}

#[inline]
pub fn kappa<T: Real>(phi: T) -> T {
    T::one() / (T::lit(36.0) * phi * (T::one() - phi))
}

#[inline]
pub fn kappa_prime<T: Real>(phi: T) -> T {
    let w = phi * (T::one() - phi);
    (T::lit(2.0) * phi - T::one()) / (T::lit(36.0) * w * w)
}

#[inline]
pub fn kappa_second<T: Real>(phi: T) -> T {
    let w = phi * (T::one() - phi);
    (T::lit(3.0) * phi * phi - T::lit(3.0) * phi + T::one()) / (T::lit(18.0) * w * w * w)
}

/// Hessian of `(u, v) -> (kappa(u) - shift) v^2`.
///
/// `shift = 0` gives the full gradient integrand `K`, `shift = 1/36` the convex
/// part `K1` of the split.
pub fn gradient_integrand_hessian<T: Real>(u: T, v: T, shift: T) -> [[T; 2]; 2] {
    let two = T::lit(2.0);
    let off = two * kappa_prime(u) * v;
    [[kappa_second(u) * v * v, off], [off, two * (kappa(u) - shift)]]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PotentialValues<T> {
    pub s: T,
    pub s1: T,
    pub s2: T,
    pub h: T,
    pub h1: T,
    pub kappa: T,
    pub kappa1: T,
}

/// Every pointwise potential quantity at `phi`, which must lie in `(0, 1/rho)`.
pub fn potential_values<T: Real>(phi: T, p: &ModelParams<T>) -> Result<PotentialValues<T>> {
    p.check_interior(phi)?;
    Ok(PotentialValues {
        s: p.s(phi),
        s1: p.s_prime(phi),
        s2: p.s_second(phi),
        h: p.h(phi),
        h1: p.h_prime(phi),
        kappa: kappa(phi),
        kappa1: kappa_prime(phi),
    })
}

/// `a_x((D_x phi)^2) + a_y((D_y phi)^2)` at every cell.
pub fn gradient_density<T: Real>(phi: &CellField<T>) -> CellField<T> {
    let g = *phi.grid();
    let inv_2h2 = T::one() / (T::lit(2.0) * g.h() * g.h());
    CellField::from_fn(g, |i, j| {
        let c = phi.at(i, j);
        let sq = |v: T| (v - c) * (v - c);
        (sq(phi.at(g.next(i), j))
            + sq(phi.at(g.prev(i), j))
            + sq(phi.at(i, g.next(j)))
            + sq(phi.at(i, g.prev(j))))
            * inv_2h2
    })
}

/// Discrete energy and its convex-splitting pieces.
///
/// `f_h` is `F_H = -<H(phi), 1>`, so `total = f_s + f_k1 + f_k2 - f_h`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyBreakdown<T> {
    pub total: T,
    pub f_s: T,
    pub f_h: T,
    pub f_k1: T,
    pub f_k2: T,
}

pub fn discrete_energy<T: Real>(phi: &CellField<T>, p: &ModelParams<T>) -> Result<EnergyBreakdown<T>> {
    p.check_field(phi)?;
    let h = phi.grid().h();
    let h2 = h * h;
    let g = gradient_density(phi);
    let k2 = T::one() / T::lit(36.0);
    let (mut total, mut f_s, mut f_h, mut f_k1) = (T::zero(), T::zero(), T::zero(), T::zero());
    for (&v, &gd) in phi.values().iter().zip(g.values()) {
        let (s, hh, k) = (p.s(v), p.h(v), kappa(v));
        total = total + s + hh + k * gd;
        f_s = f_s + s;
        f_h = f_h - hh;
        f_k1 = f_k1 + (k - k2) * gd;
    }
    let grad = grad_l2_norm(phi);
    Ok(EnergyBreakdown {
        total: h2 * total,
        f_s: h2 * f_s,
        f_h: h2 * f_h,
        f_k1: h2 * f_k1,
        f_k2: k2 * grad * grad,
    })
}

/// `E_h = F(new) + ||new - old||_{-1,h}^2 / (4 dt) + chi rho ||new - old||_2^2`.
pub fn modified_energy<T: Real>(
    phi_new: &CellField<T>,
    phi_old: &CellField<T>,
    dt: T,
    p: &ModelParams<T>,
) -> Result<T> {
    let poisson = PeriodicPoisson::new(*phi_new.grid());
    modified_energy_with(&poisson, phi_new, phi_old, dt, p)
}

/// [`modified_energy`] reusing a prepared Poisson solver.
pub fn modified_energy_with<T: Real>(
    poisson: &PeriodicPoisson<T>,
    phi_new: &CellField<T>,
    phi_old: &CellField<T>,
    dt: T,
    p: &ModelParams<T>,
) -> Result<T> {
    if !(dt > T::zero()) {
        return Err(Error::InvalidParameter { name: "dt", value: dt.as_f64() });
    }
    let f = discrete_energy(phi_new, p)?.total;
    let diff = phi_new.zip_map(phi_old, |a, b| a - b)?;
    let (m_new, m_old) = (phi_new.mean(), phi_old.mean());
    let drift = (m_new - m_old).abs() / m_old.abs().max(T::min_positive_value());
    let tol = T::tol(MODIFIED_ENERGY_MASS_TOL);
    if drift > T::lit(tol) {
        return Err(Error::MassDrift { relative: drift.as_f64(), tol });
    }
    // the remaining solver-level mass difference carries no H^{-1} content
    let diff = diff.minus_mean();
    let hm1 = poisson.h_minus1_norm(&diff)?;
    let l2 = crate::grid::l2_norm(&diff);
    Ok(f + hm1 * hm1 / (T::lit(4.0) * dt) + p.chi * p.rho * l2 * l2)
}

/// `-2 div_h(A kappa(phi) grad_h phi)` plus `kappa'(phi) (a_x((D_x phi)^2) + a_y((D_y phi)^2))`,
/// the variational derivative of the gradient energy, for an arbitrary
/// coefficient function pair.
pub(crate) fn gradient_energy_derivative<T: Real>(
    phi: &CellField<T>,
    kappa_fn: impl Fn(T) -> T,
    kappa_prime_fn: impl Fn(T) -> T,
) -> CellField<T> {
    let grid = *phi.grid();
    let kap = phi.map(&kappa_fn);
    let half = T::lit(0.5);
    let d = diff_to_edges(phi);
    // A_x kappa, A_y kappa
    let avg = EdgeField::from_fns(
        grid,
        |i, j| half * (kap.at(grid.next(i), j) + kap.at(i, j)),
        |i, j| half * (kap.at(i, grid.next(j)) + kap.at(i, j)),
    );
    let flux = div_from_edges(&avg.pointwise_mul(&d).expect("same grid"));
    let g = gradient_density(phi);
    CellField::from_fn(grid, |i, j| kappa_prime_fn(phi.at(i, j)) * g.at(i, j) - T::lit(2.0) * flux.at(i, j))
}

/// Scheme chemical potential
///
/// ```text
/// mu = S'(phi) + kappa'(phi)(a_x((D_x phi)^2) + a_y((D_y phi)^2))
///      - 2 d_x(A_x kappa(phi) D_x phi) - 2 d_y(A_y kappa(phi) D_y phi)
///      + H'(phi_explicit) - A dt Delta_h(phi - phi_prev_for_reg)
/// ```
pub fn chemical_potential<T: Real>(
    phi: &CellField<T>,
    phi_explicit: &CellField<T>,
    phi_prev_for_reg: &CellField<T>,
    dt: T,
    p: &ModelParams<T>,
) -> Result<CellField<T>> {
    chemical_potential_with(phi, phi_explicit, phi_prev_for_reg, dt, p, kappa, kappa_prime)
}

pub(crate) fn chemical_potential_with<T: Real>(
    phi: &CellField<T>,
    phi_explicit: &CellField<T>,
    phi_prev_for_reg: &CellField<T>,
    dt: T,
    p: &ModelParams<T>,
    kappa_fn: impl Fn(T) -> T,
    kappa_prime_fn: impl Fn(T) -> T,
) -> Result<CellField<T>> {
    p.check_field(phi)?;
    phi.grid().same_as(phi_explicit.grid())?;
    phi.grid().same_as(phi_prev_for_reg.grid())?;
    let grad_part = gradient_energy_derivative(phi, kappa_fn, kappa_prime_fn);
    let reg = laplacian(&phi.zip_map(phi_prev_for_reg, |a, b| a - b)?);
    let ad = p.a_reg * dt;
    let out = CellField::from_fn(*phi.grid(), |i, j| {
        p.s_prime(phi.at(i, j)) + grad_part.at(i, j) + p.h_prime(phi_explicit.at(i, j)) - ad * reg.at(i, j)
    });
    Ok(out)
}

/// `delta_phi F` with all pieces evaluated at `phi` (constants of `S'`, `H'` dropped).
pub fn energy_gradient<T: Real>(phi: &CellField<T>, p: &ModelParams<T>) -> Result<CellField<T>> {
    chemical_potential(phi, phi, phi, T::zero(), p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{cell_inner, GridSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params() -> ModelParams<f64> {
        ModelParams::standard()
    }

    fn random_interior(g: GridSpec<f64>, rng: &mut ChaCha8Rng) -> CellField<f64> {
        CellField::from_fn(g, |_, _| rng.gen_range(0.2..0.9))
    }

    #[test]
    fn derived_constants_frozen() {
        // independent arithmetic of the parameter formulas
        let p = params();
        let tau = (std::f64::consts::PI * 0.16).sqrt() * 5.12;
        assert!((p.tau - tau).abs() < 1e-14 * tau);
        assert!((p.tau - 3.629_985_486_654_497).abs() < 1e-13);
        assert!((p.rho - 1.044_077_311_214_668_5).abs() < 1e-14);
        assert!((p.alpha - 24.378_727_101_220_566).abs() < 1e-12);
        assert!((p.beta - 34.385_559_726_655_08).abs() < 1e-12);
        assert!((p.a_reg - 6.122_968_264_639_515).abs() < 1e-12);
        assert!((p.upper() - 0.957_783_479_497_902_9).abs() < 1e-14);
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(ModelParams::new(2.37, 5.12, 0.0, RegPolicy::Chi2Rho2).is_err());
        assert!(ModelParams::new(-1.0, 5.12, 0.16, RegPolicy::Chi2Rho2).is_err());
        assert!(ModelParams::new(2.37, 0.0, 0.16, RegPolicy::Chi2Rho2).is_err());
        assert!(ModelParams::new(2.37, 5.12, 0.16, RegPolicy::Explicit(-1.0)).is_err());
        let p = ModelParams::new(2.37, 5.12, 1e-12, RegPolicy::Explicit(0.0)).unwrap();
        assert!(p.beta > 1e6);
        assert!(p.rho > 1.0);
    }

    #[test]
    fn kappa_symmetry_point() {
        assert!((kappa(0.5f64) - 1.0 / 9.0).abs() < 1e-16);
        assert_eq!(kappa_prime(0.5f64), 0.0);
    }

    #[test]
    fn potential_domain_guard() {
        let p = params();
        assert!(potential_values(0.0, &p).is_err());
        assert!(potential_values(p.upper(), &p).is_err());
        assert!(potential_values(-0.1, &p).is_err());
        assert!(potential_values(f64::NAN, &p).is_err());
        assert!(potential_values(0.5, &p).is_ok());
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let p = params();
        for &x in &[0.05, 0.3, 0.6, 0.9] {
            let e = 1e-6;
            let ds = (p.s(x + e) - p.s(x - e)) / (2.0 * e);
            // S' drops the constant (1/tau) (1 + ln(alpha/tau)) + (1/N1)(1 + ln(beta/tau)) + rho
            let c = (1.0 + (p.alpha / p.tau).ln()) / p.tau + (1.0 + (p.beta / p.tau).ln()) / p.n1 - p.rho;
            assert!((ds - (p.s_prime(x) + c)).abs() < 1e-7, "S' at {x}");
            let d2 = (p.s_prime(x + e) - p.s_prime(x - e)) / (2.0 * e);
            assert!((d2 - p.s_second(x)).abs() < 1e-5 * p.s_second(x));
            let dh = (p.h(x + e) - p.h(x - e)) / (2.0 * e);
            assert!((dh - (p.h_prime(x) + p.chi)).abs() < 1e-8);
            let dk = (kappa(x + e) - kappa(x - e)) / (2.0 * e);
            assert!((dk - kappa_prime(x)).abs() < 1e-5 * kappa_prime(x).abs().max(1.0));
            let dk2 = (kappa_prime(x + e) - kappa_prime(x - e)) / (2.0 * e);
            assert!((dk2 - kappa_second(x)).abs() < 1e-5 * kappa_second(x));
        }
    }

    #[test]
    fn s_prime_root_matches_scan() {
        // bisection against a brute-force scan for the sign change of S'
        let p = params();
        let (mut lo, mut hi) = (1e-9, p.upper() - 1e-9);
        assert!(p.s_prime(lo) < 0.0 && p.s_prime(hi) > 0.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if p.s_prime(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let n = 1_000_000;
        let step = p.upper() / n as f64;
        let scan = (1..n).map(|k| k as f64 * step).find(|&x| p.s_prime(x) >= 0.0).unwrap();
        assert!((scan - lo).abs() <= step);
    }

    #[test]
    fn s_convex_h_concave() {
        let p = params();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100_000 {
            let x = rng.gen_range(0.0..p.upper());
            if x == 0.0 {
                continue;
            }
            assert!(p.s_second(x) > 0.0);
        }
        assert!(p.h_second() < 0.0);
    }

    #[test]
    fn constant_field_energy() {
        let p = params();
        let g = GridSpec::new(64.0, 8).unwrap();
        let e = discrete_energy(&CellField::constant(g, 0.6), &p).unwrap();
        let expect = 4096.0 * (p.s(0.6) + p.h(0.6));
        assert!((e.total - expect).abs() < 1e-12 * expect.abs());
        assert_eq!(e.f_k1, 0.0);
        assert_eq!(e.f_k2, 0.0);
        assert!(discrete_energy(&CellField::constant(g, 0.99), &p).is_err());
    }

    #[test]
    fn splitting_identity_and_k2() {
        let p = params();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let g = GridSpec::new(64.0, 16).unwrap();
        for _ in 0..20 {
            let phi = random_interior(g, &mut rng);
            let e = discrete_energy(&phi, &p).unwrap();
            let split = e.f_s + e.f_k1 + e.f_k2 - e.f_h;
            assert!((e.total - split).abs() <= 1e-12 * e.total.abs());
            let gn = grad_l2_norm(&phi);
            assert!((e.f_k2 - gn * gn / 36.0).abs() <= 1e-14 * e.f_k2);
        }
    }

    #[test]
    fn modified_energy_basics() {
        let p = params();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = GridSpec::new(64.0, 16).unwrap();
        let phi = random_interior(g, &mut rng);
        let f = discrete_energy(&phi, &p).unwrap().total;
        assert_eq!(modified_energy(&phi, &phi, 1e-3, &p).unwrap(), f);
        let pert = CellField::from_fn(g, |i, j| 0.01 * (((i + 2 * j) % 3) as f64 - 1.0));
        let other = (&phi + &pert.minus_mean()).map(|v| v.clamp(0.01, 0.95));
        let other = &other - &CellField::constant(g, other.mean() - phi.mean());
        let e = modified_energy(&other, &phi, 1e-3, &p).unwrap();
        assert!(e >= discrete_energy(&other, &p).unwrap().total);
        assert!(modified_energy(&phi, &phi, 0.0, &p).is_err());
        let shifted = phi.map(|v| v + 0.01);
        assert!(matches!(modified_energy(&shifted, &phi, 1e-3, &p), Err(Error::MassDrift { .. })));
    }

    #[test]
    fn chemical_potential_of_constant() {
        let p = params();
        let g = GridSpec::new(64.0, 8).unwrap();
        let c = CellField::constant(g, 0.45);
        let mu = chemical_potential(&c, &c, &c, 1e-3, &p).unwrap();
        let expect = p.s_prime(0.45) + p.h_prime(0.45);
        assert!(mu.values().iter().all(|&v| (v - expect).abs() < 1e-14));
    }

    #[test]
    fn constant_kappa_collapse() {
        let p = params().with_a_reg(0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = GridSpec::new(64.0, 16).unwrap();
        let phi = random_interior(g, &mut rng);
        let expl = random_interior(g, &mut rng);
        let k0 = 0.2;
        let mu = chemical_potential_with(&phi, &expl, &phi, 1e-3, &p, |_| k0, |_| 0.0).unwrap();
        let lap = laplacian(&phi);
        for i in 0..16 {
            for j in 0..16 {
                let expect = p.s_prime(phi.at(i, j)) - 2.0 * k0 * lap.at(i, j) + p.h_prime(expl.at(i, j));
                assert!((mu.at(i, j) - expect).abs() < 1e-12 * expect.abs().max(1.0));
            }
        }
    }

    #[test]
    fn variation_matches_central_difference() {
        let p = params();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let g = GridSpec::new(64.0, 16).unwrap();
        let phi = CellField::from_fn(g, |_, _| rng.gen_range(0.35..0.75));
        let psi = CellField::from_fn(g, |_, _| rng.gen_range(-1.0..1.0)).minus_mean();
        let grad = energy_gradient(&phi, &p).unwrap();
        let exact = cell_inner(&grad, &psi).unwrap();
        let fd = |eps: f64| {
            let plus = discrete_energy(&(&phi + &psi.scale(eps)), &p).unwrap().total;
            let minus = discrete_energy(&(&phi - &psi.scale(eps)), &p).unwrap().total;
            (plus - minus) / (2.0 * eps)
        };
        let e1 = (fd(1e-3) - exact).abs();
        let e2 = (fd(1e-4) - exact).abs();
        assert!(e2 < e1);
        assert!((e1 / e2).log10() >= 1.9, "order {}", (e1 / e2).log10());
    }
}

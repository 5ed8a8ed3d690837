mod common;

use mmc_ch::energy::{kappa, ModelParams, RegPolicy};
use mmc_ch::grid::{cell_inner, norms};
use mmc_ch::{Field, Grid, Params};
use proptest::prelude::*;

fn grid_n() -> impl Strategy<Value = usize> {
    prop_oneof![Just(8usize), Just(16), Just(32)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn summation_by_parts(n in grid_n(), length in 1.0f64..100.0, seed in any::<u64>()) {
        common::summation_by_parts(n, length, seed)?;
    }

    #[test]
    fn laplacian_symmetric_and_nonpositive(n in grid_n(), seed in any::<u64>()) {
        common::laplacian_structure(n, seed)?;
    }

    #[test]
    fn operators_are_linear(n in grid_n(), seed in any::<u64>(), a in -5.0f64..5.0, b in -5.0f64..5.0) {
        common::linearity(n, seed, a, b)?;
    }

    #[test]
    fn inverse_laplacian_round_trip(n in prop_oneof![Just(8usize), Just(12), Just(16), Just(32)], seed in any::<u64>()) {
        common::inverse_laplacian(n, seed)?;
    }

    #[test]
    fn splitting_identity(n in grid_n(), seed in any::<u64>()) {
        common::splitting_identity(n, seed)?;
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn kappa_tangent_bound(a in 0.001f64..0.999, b in 0.001f64..0.999) {
        let slack = common::kappa_inequality_slack(a, b);
        prop_assert!(slack >= -1e-12, "slack {slack} at ({a}, {b})");
    }

    #[test]
    fn hessian_minors(u in 1e-4f64..0.9577, v in -10.0f64..10.0) {
        common::hessian_minors(u, v)?;
    }

    #[test]
    fn entropy_convex(x in 1e-9f64..1.0) {
        let p = Params::standard();
        let phi = x * p.upper() * (1.0 - 1e-12);
        prop_assert!(p.s_second(phi) > 0.0);
        prop_assert!(p.h_second() < 0.0);
    }

    #[test]
    fn derived_constants(chi in 0.1f64..5.0, n1 in 0.5f64..20.0, n2 in 0.01f64..2.0) {
        let p = ModelParams::new(chi, n1, n2, RegPolicy::Chi2Rho2).unwrap();
        let pi = std::f64::consts::PI;
        let alpha = pi * ((n2 / pi).sqrt() + n1 / 2.0).powi(2);
        let tau = (pi * n2).sqrt() * n1;
        prop_assert!((p.alpha - alpha).abs() <= 1e-14 * alpha);
        prop_assert!((p.beta - alpha / (pi * n2).sqrt()).abs() <= 1e-14 * p.beta);
        prop_assert!((p.tau - tau).abs() <= 1e-14 * tau);
        prop_assert!((p.rho - (1.0 + n2 / tau)).abs() <= 1e-14 * p.rho);
        prop_assert!(p.rho > 1.0);
        prop_assert!((p.a_reg - chi * chi * p.rho * p.rho).abs() <= 1e-14 * p.a_reg);
        prop_assert!(p.energy_decay_guaranteed());
    }
}

proptest! {
    #[test]
    fn variational_consistency(seed in any::<u64>()) {
        let order = common::variational_order(seed);
        prop_assert!(order >= 1.9, "order {order}");
    }

    #[test]
    fn norm_relations(n in grid_n(), seed in any::<u64>()) {
        let g = Grid::new(64.0, n).unwrap();
        let mut r = common::rng(seed);
        let nu = common::random_field(g, &mut r, -2.0, 2.0);
        let m = norms(&nu, 3.0).unwrap();
        prop_assert!(m.l2 <= m.linf * 64.0 * (1.0 + 1e-14));
        prop_assert!((m.l2 * m.l2 - cell_inner(&nu, &nu).unwrap()).abs() <= 1e-12 * m.l2 * m.l2);
        prop_assert!((m.h1 * m.h1 - m.l2 * m.l2 - m.grad_l2 * m.grad_l2).abs() <= 1e-10 * m.h1 * m.h1);
    }

    #[test]
    fn kappa_symmetric(x in 0.001f64..0.999) {
        prop_assert!((kappa(x) - kappa(1.0 - x)).abs() <= 1e-12 * kappa(x));
    }
}

#[test]
fn constant_fields_have_no_gradient_energy() {
    let p = Params::standard();
    let g = Grid::new(64.0, 8).unwrap();
    let e = mmc_ch::discrete_energy(&Field::constant(g, 0.5), &p).unwrap();
    assert_eq!(e.f_k1, 0.0);
    assert_eq!(e.f_k2, 0.0);
    let expected = 4096.0 * (p.s(0.5) + p.h(0.5));
    assert!((e.total - expected).abs() < 1e-10 * expected.abs());
}
#[test]
fn density_sums_to_energy() {
    let p = Params::standard();
    let g = Grid::new(64.0, 16).unwrap();
    let phi = common::random_field(g, &mut common::rng(4), 0.1, 0.9);
    let total: f64 = common::energy_density(&phi, &p).iter().sum::<f64>() * g.h() * g.h();
    let e = mmc_ch::discrete_energy(&phi, &p).unwrap().total;
    assert!((total - e).abs() <= 1e-12 * e.abs());
}

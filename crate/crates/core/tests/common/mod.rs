#![allow(dead_code)]

use mmc_ch::energy::{
    discrete_energy, energy_gradient, gradient_density, gradient_integrand_hessian, kappa, kappa_prime,
};
use mmc_ch::grid::{
    cell_inner, diff_to_edges, div_from_edges, edge_inner, l2_norm, laplacian, var_laplacian,
};
use mmc_ch::spectral::PeriodicPoisson;
use mmc_ch::{Edges, Field, Grid, Params};
use proptest::test_runner::TestCaseError;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Check = Result<(), TestCaseError>;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_field(g: Grid, rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> Field {
    Field::from_fn(g, |_, _| rng.gen_range(lo..hi))
}

pub fn random_edges(g: Grid, rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> Edges {
    let x: Vec<f64> = (0..g.cells()).map(|_| rng.gen_range(lo..hi)).collect();
    let y: Vec<f64> = (0..g.cells()).map(|_| rng.gen_range(lo..hi)).collect();
    let n = g.n();
    Edges::from_fns(g, |i, j| x[j * n + i], |i, j| y[j * n + i])
}

fn close(a: f64, b: f64, tol: f64, what: &str) -> Check {
    if (a - b).abs() <= tol {
        Ok(())
    } else {
        Err(TestCaseError::fail(format!("{what}: {a} vs {b} (tol {tol:e})")))
    }
}

/// Sum of `|a_k b_k|` weighted by `h^2`: the magnitude the inner product is built from.
fn abs_inner(a: &[f64], b: &[f64], h: f64) -> f64 {
    h * h * a.iter().zip(b).map(|(x, y)| (x * y).abs()).sum::<f64>()
}

/// `<psi, div f> = -[grad psi, f]` and `<psi, div(D grad nu)> = -[grad psi, D grad nu]`.
pub fn summation_by_parts(n: usize, length: f64, seed: u64) -> Check {
    let g = Grid::new(length, n).unwrap();
    let mut r = rng(seed);
    let psi = random_field(g, &mut r, -1.0, 1.0);
    let nu = random_field(g, &mut r, -1.0, 1.0);
    let f = random_edges(g, &mut r, -1.0, 1.0);
    let d = random_edges(g, &mut r, 0.1, 2.0);
    let h = g.h();

    let div = div_from_edges(&f);
    let gp = diff_to_edges(&psi);
    let lhs = cell_inner(&psi, &div).unwrap();
    let rhs = -edge_inner(&gp, &f).unwrap();
    let scale = abs_inner(psi.values(), div.values(), h);
    close(lhs, rhs, 1e-12 * scale.max(1e-300), "first identity")?;

    let flux = d.pointwise_mul(&diff_to_edges(&nu)).unwrap();
    let vl = var_laplacian(&d, &nu).unwrap();
    let lhs = cell_inner(&psi, &vl).unwrap();
    let rhs = -edge_inner(&gp, &flux).unwrap();
    let scale = abs_inner(psi.values(), vl.values(), h);
    close(lhs, rhs, 1e-12 * scale.max(1e-300), "second identity")
}

/// Symmetry, sign and null space of the 5-point Laplacian.
pub fn laplacian_structure(n: usize, seed: u64) -> Check {
    let g = Grid::new(64.0, n).unwrap();
    let mut r = rng(seed);
    let psi = random_field(g, &mut r, -1.0, 1.0);
    let nu = random_field(g, &mut r, -1.0, 1.0);
    let (lp, ln) = (laplacian(&psi), laplacian(&nu));
    let a = cell_inner(&psi, &ln).unwrap();
    let b = cell_inner(&nu, &lp).unwrap();
    let scale = abs_inner(psi.values(), ln.values(), g.h());
    close(a, b, 1e-12 * scale, "symmetry")?;
    let q = cell_inner(&nu, &ln).unwrap();
    if q > 1e-12 * abs_inner(nu.values(), ln.values(), g.h()) {
        return Err(TestCaseError::fail(format!("<nu, lap nu> = {q} > 0")));
    }
    // null space: only constants give a vanishing quadratic form
    let c = Field::constant(g, r.gen_range(-3.0..3.0));
    if laplacian(&c).values().iter().any(|&v| v.abs() > 1e-12) {
        return Err(TestCaseError::fail("constant not annihilated"));
    }
    let nonconst = nu.minus_mean();
    if l2_norm(&nonconst) > 1e-8 && q.abs() < 1e-14 {
        return Err(TestCaseError::fail("non-constant field in null space"));
    }
    Ok(())
}

/// Operator linearity: `op(a x + b y) = a op(x) + b op(y)`.
pub fn linearity(n: usize, seed: u64, a: f64, b: f64) -> Check {
    let g = Grid::new(64.0, n).unwrap();
    let mut r = rng(seed);
    let x = random_field(g, &mut r, -1.0, 1.0);
    let y = random_field(g, &mut r, -1.0, 1.0);
    let d = random_edges(g, &mut r, 0.1, 2.0);
    let combo = &x.scale(a) + &y.scale(b);
    type Op = fn(&Field, &Edges) -> Field;
    let ops: [(&str, Op); 4] = [
        ("laplacian", |v, _| laplacian(v)),
        ("var_laplacian", |v, d| var_laplacian(d, v).unwrap()),
        ("div.diff", |v, _| div_from_edges(&diff_to_edges(v))),
        ("inv_laplacian", |v, _| mmc_ch::inv_laplacian(v)),
    ];
    for (name, op) in ops {
        let lhs = op(&combo, &d);
        let rhs = &op(&x, &d).scale(a) + &op(&y, &d).scale(b);
        let scale = a.abs() * op(&x, &d).values().iter().fold(0.0f64, |m, v| m.max(v.abs()))
            + b.abs() * op(&y, &d).values().iter().fold(0.0f64, |m, v| m.max(v.abs()))
            + 1.0;
        for (u, v) in lhs.values().iter().zip(rhs.values()) {
            close(*u, *v, 1e-12 * scale, name)?;
        }
    }
    Ok(())
}

/// `1/2 kappa'(a)(b - a) <= kappa(b)`; returns the slack.
pub fn kappa_inequality_slack(a: f64, b: f64) -> f64 {
    kappa(b) - 0.5 * kappa_prime(a) * (b - a)
}

/// Principal minors of the gradient-integrand Hessians against their closed forms.
///
/// For `K = kappa(u) v^2` and `K1 = (kappa(u) - 1/36) v^2`, with `w = u(1 - u)`:
///
/// ```text
/// D1 = (3u^2 - 3u + 1) v^2 / (18 w^3)
/// D2 = 1 / (18 w)                     (K)
///      (u^2 - u + 1) / (18 w)         (K1)
/// det = v^2 / (18^2 w^3)              (K)
///       3 v^2 / (18^2 w^2)            (K1)
/// ```
pub fn hessian_minors(u: f64, v: f64) -> Check {
    let w = u * (1.0 - u);
    let d1 = (3.0 * u * u - 3.0 * u + 1.0) * v * v / (18.0 * w.powi(3));
    for (shift, d2, det) in [
        (0.0, 1.0 / (18.0 * w), v * v / (324.0 * w.powi(3))),
        (1.0 / 36.0, (u * u - u + 1.0) / (18.0 * w), 3.0 * v * v / (324.0 * w * w)),
    ] {
        let hm = gradient_integrand_hessian(u, v, shift);
        let scale = hm[0][0].abs() * hm[1][1].abs() + hm[0][1] * hm[1][0];
        close(hm[0][0], d1, 1e-12 * d1.abs().max(1e-300), "D1")?;
        close(hm[1][1], d2, 1e-12 * d2, "D2")?;
        let num_det = hm[0][0] * hm[1][1] - hm[0][1] * hm[1][0];
        close(num_det, det, 1e-12 * scale.max(1e-300), "det")?;
        for m in [hm[0][0], hm[1][1], num_det] {
            if m < -1e-12 * scale.max(1.0) {
                return Err(TestCaseError::fail(format!("negative minor {m} at ({u}, {v})")));
            }
        }
    }
    Ok(())
}

/// `total = f_s + f_k1 + f_k2 - f_h` on a random interior field.
pub fn splitting_identity(n: usize, seed: u64) -> Check {
    let p = Params::standard();
    let g = Grid::new(64.0, n).unwrap();
    let mut r = rng(seed);
    let phi = random_field(g, &mut r, 0.02, p.upper() - 0.02);
    let e = discrete_energy(&phi, &p).unwrap();
    let parts = e.f_s + e.f_k1 + e.f_k2 - e.f_h;
    close(e.total, parts, 1e-12 * e.total.abs(), "splitting")
}

/// Round trip and dual H^{-1} evaluation.
pub fn inverse_laplacian(n: usize, seed: u64) -> Check {
    let g = Grid::new(64.0, n).unwrap();
    let mut r = rng(seed);
    let phi = random_field(g, &mut r, -1.0, 1.0);
    let solver = PeriodicPoisson::new(g);
    let psi = solver.solve(&phi).unwrap();
    let back = laplacian(&psi).scale(-1.0);
    let target = phi.minus_mean();
    let scale = target.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for (a, b) in back.values().iter().zip(target.values()) {
        close(*a, *b, 1e-10 * scale, "round trip")?;
    }
    if psi.mean().abs() * g.length() > 1e-13 * l2_norm(&psi) {
        return Err(TestCaseError::fail("output not mean-zero"));
    }
    let primal = solver.h_minus1_norm(&target).unwrap();
    let dual = cell_inner(&target, &psi).unwrap().sqrt();
    close(primal, dual, 1e-10 * dual, "dual norm")
}

/// Cellwise energy density `S + H + kappa g`, summing (times `h^2`) to `F`.
pub fn energy_density(phi: &Field, p: &Params) -> Vec<f64> {
    let g = gradient_density(phi);
    phi.values().iter().zip(g.values()).map(|(&v, &gd)| p.s(v) + p.h(v) + kappa(v) * gd).collect()
}

/// Central-difference and assembled directional derivatives; the energy
/// difference is taken cell by cell so rounding in `F` itself does not enter.
pub fn variational_errors(seed: u64) -> (f64, f64) {
    let p = Params::standard();
    let g = Grid::new(64.0, 16).unwrap();
    let mut r = rng(seed);
    let phi = random_field(g, &mut r, 0.35, 0.75);
    let psi = random_field(g, &mut r, -1.0, 1.0).minus_mean();
    let exact = cell_inner(&energy_gradient(&phi, &p).unwrap(), &psi).unwrap();
    let h2 = g.h() * g.h();
    let fd = |eps: f64| {
        let plus = energy_density(&(&phi + &psi.scale(eps)), &p);
        let minus = energy_density(&(&phi - &psi.scale(eps)), &p);
        h2 * plus.iter().zip(&minus).map(|(a, b)| a - b).sum::<f64>() / (2.0 * eps)
    };
    ((fd(1e-3) - exact).abs(), (fd(1e-4) - exact).abs())
}

/// Observed order over `eps = 1e-3, 1e-4`.
pub fn variational_order(seed: u64) -> f64 {
    let (e1, e2) = variational_errors(seed);
    (e1 / e2).log10()
}

//! Periodic cell-centered grids and the discrete calculus on them.
//!
//! A [`CellField`] stores one value per cell center `(i + 1/2) h`, `i = 0..N`. An
//! [`EdgeField`] stores the x-component at the east faces `(i + 1/2, j)` and
//! the y-component at the north faces `(i, j + 1/2)`; the face `N - 1/2` is
//! identified with `-1/2`, so each component holds exactly `N * N` values and
//! no ghost layers are needed.
//!
//! Storage is row-major with `i` (the x index) varying fastest.

use std::ops::{Add, Mul, Sub};

use crate::error::{Error, Result};
use crate::num::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec<T> {
    length: T,
    n: usize,
    h: T,
}

impl<T: Real> GridSpec<T> {
    pub fn new(length: T, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidGrid(format!("need N >= 2, got {n}")));
        }
        if !(length > T::zero()) || !length.is_finite() {
            return Err(Error::InvalidGrid(format!("domain length {length} must be positive")));
        }
        Ok(Self { length, n, h: length / T::from_usize_lossy(n) })
    }

    #[inline]
    pub fn length(&self) -> T {
        self.length
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn h(&self) -> T {
        self.h
    }

    /// `|Omega| = L^2`.
    pub fn area(&self) -> T {
        self.length * self.length
    }

    pub fn cells(&self) -> usize {
        self.n * self.n
    }

    /// Center of the zero-based cell `i`, `(i + 1/2) h` (the one-based `p_i = (i - 1/2) h`).
    pub fn center(&self, i: usize) -> T {
        (T::from_usize_lossy(i) + T::lit(0.5)) * self.h
    }

    /// Same domain with half as many cells per axis.
    pub fn coarsen(&self) -> Result<Self> {
        if !self.n.is_multiple_of(2) || self.n < 4 {
            return Err(Error::InvalidGrid(format!("cannot coarsen N = {}", self.n)));
        }
        Self::new(self.length, self.n / 2)
    }

    /// Same domain with twice as many cells per axis.
    pub fn refine(&self) -> Result<Self> {
        Self::new(self.length, self.n * 2)
    }

    pub fn same_as(&self, other: &Self) -> Result<()> {
        if self.n != other.n || self.length != other.length {
            return Err(Error::GridMismatch { left: self.n, right: other.n });
        }
        Ok(())
    }

    #[inline(always)]
    pub(crate) fn idx(&self, i: usize, j: usize) -> usize {
        j * self.n + i
    }

    #[inline(always)]
    pub(crate) fn wrap(&self, k: isize) -> usize {
        k.rem_euclid(self.n as isize) as usize
    }

    #[inline(always)]
    pub(crate) fn next(&self, k: usize) -> usize {
        if k + 1 == self.n {
            0
        } else {
            k + 1
        }
    }

    #[inline(always)]
    pub(crate) fn prev(&self, k: usize) -> usize {
        if k == 0 {
            self.n - 1
        } else {
            k - 1
        }
    }
}

/// Periodic cell-centered grid function.
#[derive(Debug, Clone, PartialEq)]
pub struct CellField<T> {
    grid: GridSpec<T>,
    values: Vec<T>,
}

impl<T: Real> CellField<T> {
    pub fn zeros(grid: GridSpec<T>) -> Self {
        Self::constant(grid, T::zero())
    }

    pub fn constant(grid: GridSpec<T>, c: T) -> Self {
        Self { grid, values: vec![c; grid.cells()] }
    }

    pub fn from_fn(grid: GridSpec<T>, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut values = Vec::with_capacity(grid.cells());
        for j in 0..grid.n {
            for i in 0..grid.n {
                values.push(f(i, j));
            }
        }
        Self { grid, values }
    }

    /// Samples `f(x, y)` at the cell centers.
    pub fn sample(grid: GridSpec<T>, f: impl Fn(T, T) -> T) -> Self {
        Self::from_fn(grid, |i, j| f(grid.center(i), grid.center(j)))
    }

    /// Wraps row-major values (`i` fastest).
    pub fn from_vec(grid: GridSpec<T>, values: Vec<T>) -> Result<Self> {
        if values.len() != grid.cells() {
            return Err(Error::InvalidGrid(format!(
                "expected {} values, got {}",
                grid.cells(),
                values.len()
            )));
        }
        Ok(Self { grid, values })
    }

    #[inline]
    pub fn grid(&self) -> &GridSpec<T> {
        &self.grid
    }

    #[inline]
    pub fn values(&self) -> &[T] {
        &self.values
    }

    #[inline]
    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    /// Periodic access: indices are taken modulo `N`.
    #[inline]
    pub fn get(&self, i: isize, j: isize) -> T {
        self.values[self.grid.idx(self.grid.wrap(i), self.grid.wrap(j))]
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> T {
        self.values[self.grid.idx(i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        let k = self.grid.idx(i, j);
        self.values[k] = v;
    }

    pub fn sum(&self) -> T {
        self.values.iter().fold(T::zero(), |acc, &v| acc + v)
    }

    /// `|Omega|^{-1} <nu, 1>`.
    pub fn mean(&self) -> T {
        self.sum() / T::from_usize_lossy(self.values.len())
    }

    pub fn min(&self) -> T {
        self.values.iter().fold(T::infinity(), |a, &b| a.min(b))
    }

    pub fn max(&self) -> T {
        self.values.iter().fold(T::neg_infinity(), |a, &b| a.max(b))
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self { grid: self.grid, values: self.values.iter().map(|&v| f(v)).collect() }
    }

    /// Pointwise combination of two fields on the same grid.
    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Result<Self> {
        self.grid.same_as(&other.grid)?;
        Ok(Self {
            grid: self.grid,
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    /// `self - mean(self)`.
    pub fn minus_mean(&self) -> Self {
        let m = self.mean();
        self.map(|v| v - m)
    }

    pub fn scale(&self, a: T) -> Self {
        self.map(|v| a * v)
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

impl<T: Real> Add for &CellField<T> {
    type Output = CellField<T>;

    fn add(self, rhs: Self) -> CellField<T> {
        self.zip_map(rhs, |a, b| a + b).expect("fields on the same grid")
    }
}

impl<T: Real> Sub for &CellField<T> {
    type Output = CellField<T>;

    fn sub(self, rhs: Self) -> CellField<T> {
        self.zip_map(rhs, |a, b| a - b).expect("fields on the same grid")
    }
}

impl<T: Real> Mul<T> for &CellField<T> {
    type Output = CellField<T>;

    fn mul(self, rhs: T) -> CellField<T> {
        self.scale(rhs)
    }
}

/// Periodic edge-centered vector grid function `(f^x, f^y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeField<T> {
    grid: GridSpec<T>,
    x: Vec<T>,
    y: Vec<T>,
}

impl<T: Real> EdgeField<T> {
    pub fn zeros(grid: GridSpec<T>) -> Self {
        Self::constant(grid, T::zero())
    }

    pub fn constant(grid: GridSpec<T>, c: T) -> Self {
        Self { grid, x: vec![c; grid.cells()], y: vec![c; grid.cells()] }
    }

    /// `fx(i, j)` is the value at `(i + 1/2, j)`, `fy(i, j)` at `(i, j + 1/2)`.
    pub fn from_fns(
        grid: GridSpec<T>,
        mut fx: impl FnMut(usize, usize) -> T,
        mut fy: impl FnMut(usize, usize) -> T,
    ) -> Self {
        let x = CellField::from_fn(grid, &mut fx).into_values();
        let y = CellField::from_fn(grid, &mut fy).into_values();
        Self { grid, x, y }
    }

    #[inline]
    pub fn grid(&self) -> &GridSpec<T> {
        &self.grid
    }

    /// Value at `(i + 1/2, j)`; `i = -1` addresses the face `-1/2 = N - 1/2`.
    #[inline]
    pub fn x_at(&self, i: isize, j: isize) -> T {
        self.x[self.grid.idx(self.grid.wrap(i), self.grid.wrap(j))]
    }

    /// Value at `(i, j + 1/2)`.
    #[inline]
    pub fn y_at(&self, i: isize, j: isize) -> T {
        self.y[self.grid.idx(self.grid.wrap(i), self.grid.wrap(j))]
    }

    pub fn x_values(&self) -> &[T] {
        &self.x
    }

    pub fn y_values(&self) -> &[T] {
        &self.y
    }

    pub fn x_values_mut(&mut self) -> &mut [T] {
        &mut self.x
    }

    pub fn y_values_mut(&mut self) -> &mut [T] {
        &mut self.y
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            grid: self.grid,
            x: self.x.iter().map(|&v| f(v)).collect(),
            y: self.y.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Result<Self> {
        self.grid.same_as(&other.grid)?;
        Ok(Self {
            grid: self.grid,
            x: self.x.iter().zip(&other.x).map(|(&a, &b)| f(a, b)).collect(),
            y: self.y.iter().zip(&other.y).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    /// Pointwise product `D f` of a scalar edge coefficient with this field.
    pub fn pointwise_mul(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a * b)
    }
}

/// Discrete gradient `(D_x nu, D_y nu)`.
pub fn diff_to_edges<T: Real>(nu: &CellField<T>) -> EdgeField<T> {
    let g = *nu.grid();
    let inv_h = T::one() / g.h();
    EdgeField::from_fns(
        g,
        |i, j| (nu.at(g.next(i), j) - nu.at(i, j)) * inv_h,
        |i, j| (nu.at(i, g.next(j)) - nu.at(i, j)) * inv_h,
    )
}

/// Cell-to-edge averages `(A_x nu, A_y nu)`.
pub fn avg_to_edges<T: Real>(nu: &CellField<T>) -> EdgeField<T> {
    let g = *nu.grid();
    let half = T::lit(0.5);
    EdgeField::from_fns(
        g,
        |i, j| half * (nu.at(g.next(i), j) + nu.at(i, j)),
        |i, j| half * (nu.at(i, g.next(j)) + nu.at(i, j)),
    )
}

/// Discrete divergence `d_x f^x + d_y f^y`.
pub fn div_from_edges<T: Real>(f: &EdgeField<T>) -> CellField<T> {
    let g = *f.grid();
    let inv_h = T::one() / g.h();
    let (fx, fy) = (f.x_values(), f.y_values());
    CellField::from_fn(g, |i, j| {
        ((fx[g.idx(i, j)] - fx[g.idx(g.prev(i), j)]) + (fy[g.idx(i, j)] - fy[g.idx(i, g.prev(j))])) * inv_h
    })
}

/// Edge-to-cell averages `(a_x f^x, a_y f^y)`.
pub fn avg_from_edges<T: Real>(f: &EdgeField<T>) -> (CellField<T>, CellField<T>) {
    let g = *f.grid();
    let half = T::lit(0.5);
    let (fx, fy) = (f.x_values(), f.y_values());
    (
        CellField::from_fn(g, |i, j| half * (fx[g.idx(i, j)] + fx[g.idx(g.prev(i), j)])),
        CellField::from_fn(g, |i, j| half * (fy[g.idx(i, j)] + fy[g.idx(i, g.prev(j))])),
    )
}

/// Five-point periodic Laplacian.
pub fn laplacian<T: Real>(nu: &CellField<T>) -> CellField<T> {
    let g = *nu.grid();
    let inv_h2 = T::one() / (g.h() * g.h());
    let four = T::lit(4.0);
    CellField::from_fn(g, |i, j| {
        (nu.at(g.next(i), j) + nu.at(g.prev(i), j) + nu.at(i, g.next(j)) + nu.at(i, g.prev(j))
            - four * nu.at(i, j))
            * inv_h2
    })
}

/// `div_h (D grad_h nu)` for an edge coefficient `D`.
pub fn var_laplacian<T: Real>(d: &EdgeField<T>, nu: &CellField<T>) -> Result<CellField<T>> {
    d.grid().same_as(nu.grid())?;
    Ok(div_from_edges(&d.pointwise_mul(&diff_to_edges(nu))?))
}

/// `h^2 sum nu xi`.
pub fn cell_inner<T: Real>(nu: &CellField<T>, xi: &CellField<T>) -> Result<T> {
    nu.grid().same_as(xi.grid())?;
    let h = nu.grid().h();
    let s = nu.values().iter().zip(xi.values()).fold(T::zero(), |acc, (&a, &b)| acc + a * b);
    Ok(h * h * s)
}

/// Edge inner product `[f, g]`.
///
/// Defined through cell averages `<a_x(f^x g^x), 1> + <a_y(f^y g^y), 1>`; with
/// periodic faces each face contributes to exactly two half-weights, so this is
/// the plain sum `h^2 (sum f^x g^x + sum f^y g^y)`.
pub fn edge_inner<T: Real>(f: &EdgeField<T>, g: &EdgeField<T>) -> Result<T> {
    f.grid().same_as(g.grid())?;
    let h = f.grid().h();
    let dot = |a: &[T], b: &[T]| a.iter().zip(b).fold(T::zero(), |acc, (&u, &v)| acc + u * v);
    Ok(h * h * (dot(f.x_values(), g.x_values()) + dot(f.y_values(), g.y_values())))
}

/// `||nu||_2`.
pub fn l2_norm<T: Real>(nu: &CellField<T>) -> T {
    cell_inner(nu, nu).expect("same grid").sqrt()
}

/// `||nu||_p` for `1 <= p < inf`.
pub fn lp_norm<T: Real>(nu: &CellField<T>, p: T) -> Result<T> {
    if !(p >= T::one()) || !p.is_finite() {
        return Err(Error::InvalidExponent(p.as_f64()));
    }
    let h = nu.grid().h();
    let s = nu.values().iter().fold(T::zero(), |acc, &v| acc + v.abs().powf(p));
    Ok((h * h * s).powf(T::one() / p))
}

pub fn linf_norm<T: Real>(nu: &CellField<T>) -> T {
    nu.values().iter().fold(T::zero(), |a, &v| a.max(v.abs()))
}

/// `||grad_h nu||_2`.
pub fn grad_l2_norm<T: Real>(nu: &CellField<T>) -> T {
    let d = diff_to_edges(nu);
    edge_inner(&d, &d).expect("same grid").sqrt()
}

pub fn h1_norm<T: Real>(nu: &CellField<T>) -> T {
    let (a, b) = (l2_norm(nu), grad_l2_norm(nu));
    (a * a + b * b).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Norms<T> {
    pub l2: T,
    pub lp: T,
    pub linf: T,
    pub grad_l2: T,
    pub h1: T,
}

/// All standard norms of `nu`, with `lp` evaluated at exponent `p`.
pub fn norms<T: Real>(nu: &CellField<T>, p: T) -> Result<Norms<T>> {
    let lp = lp_norm(nu, p)?;
    let l2 = l2_norm(nu);
    let grad_l2 = grad_l2_norm(nu);
    Ok(Norms { l2, lp, linf: linf_norm(nu), grad_l2, h1: (l2 * l2 + grad_l2 * grad_l2).sqrt() })
}

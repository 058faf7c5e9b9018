//! Truncated multivariate Taylor jets (forward-mode differentiation up to
//! third order), generic over the scalar so the same propagation rules serve
//! point evaluation (`f64`) and derivative enclosures ([`Interval`]).

use std::ops::{Add, Mul, Neg, Sub};

use super::interval::Interval;

pub trait Scalar:
    Copy + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Neg<Output = Self>
{
    fn constant(c: f64) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn exp(self) -> Self;
    fn recip(self) -> Option<Self>;
    fn powi(self, k: i32) -> Option<Self>;
    fn finite(&self) -> bool;
}

impl Scalar for f64 {
    fn constant(c: f64) -> Self {
        c
    }
    fn sin(self) -> Self {
        f64::sin(self)
    }
    fn cos(self) -> Self {
        f64::cos(self)
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn recip(self) -> Option<Self> {
        (self != 0.0).then(|| 1.0 / self)
    }
    fn powi(self, k: i32) -> Option<Self> {
        if k < 0 && self == 0.0 {
            None
        } else {
            Some(f64::powi(self, k))
        }
    }
    fn finite(&self) -> bool {
        self.is_finite()
    }
}

impl Scalar for Interval {
    fn constant(c: f64) -> Self {
        Interval::with_inflation(c, c, 0.0)
    }
    fn sin(self) -> Self {
        Interval::sin(self)
    }
    fn cos(self) -> Self {
        Interval::cos(self)
    }
    fn exp(self) -> Self {
        Interval::exp(self)
    }
    fn recip(self) -> Option<Self> {
        Interval::recip(self)
    }
    fn powi(self, k: i32) -> Option<Self> {
        Interval::powi(self, k)
    }
    fn finite(&self) -> bool {
        self.is_finite()
    }
}

/// Value plus all partial derivatives up to `order` in `dim` variables,
/// stored as full (symmetric) tensors.
#[derive(Debug, Clone)]
pub struct Jet<S> {
    pub dim: usize,
    pub order: usize,
    pub value: S,
    pub grad: Vec<S>,
    pub hess: Vec<S>,
    pub third: Vec<S>,
}

impl<S: Scalar> Jet<S> {
    pub fn constant(value: S, dim: usize, order: usize) -> Self {
        let z = S::constant(0.0);
        Self {
            dim,
            order,
            value,
            grad: if order >= 1 { vec![z; dim] } else { Vec::new() },
            hess: if order >= 2 { vec![z; dim * dim] } else { Vec::new() },
            third: if order >= 3 { vec![z; dim * dim * dim] } else { Vec::new() },
        }
    }

    /// The `index`-th independent variable with the given value.
    pub fn variable(value: S, index: usize, dim: usize, order: usize) -> Self {
        let mut j = Self::constant(value, dim, order);
        if order >= 1 {
            j.grad[index] = S::constant(1.0);
        }
        j
    }

    pub fn neg(&self) -> Self {
        self.map(|x| -x)
    }

    fn map(&self, f: impl Fn(S) -> S) -> Self {
        Self {
            dim: self.dim,
            order: self.order,
            value: f(self.value),
            grad: self.grad.iter().map(|&x| f(x)).collect(),
            hess: self.hess.iter().map(|&x| f(x)).collect(),
            third: self.third.iter().map(|&x| f(x)).collect(),
        }
    }

    fn zip(&self, o: &Self, f: impl Fn(S, S) -> S) -> Self {
        Self {
            dim: self.dim,
            order: self.order,
            value: f(self.value, o.value),
            grad: self.grad.iter().zip(&o.grad).map(|(&a, &b)| f(a, b)).collect(),
            hess: self.hess.iter().zip(&o.hess).map(|(&a, &b)| f(a, b)).collect(),
            third: self.third.iter().zip(&o.third).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    pub fn add(&self, o: &Self) -> Self {
        self.zip(o, |a, b| a + b)
    }

    pub fn sub(&self, o: &Self) -> Self {
        self.zip(o, |a, b| a - b)
    }

    pub fn mul(&self, o: &Self) -> Self {
        let d = self.dim;
        let (a, b) = (self, o);
        let mut r = Self::constant(a.value * b.value, d, self.order);
        if self.order >= 1 {
            for i in 0..d {
                r.grad[i] = a.grad[i] * b.value + a.value * b.grad[i];
            }
        }
        if self.order >= 2 {
            for i in 0..d {
                for j in 0..d {
                    let ij = i * d + j;
                    r.hess[ij] = a.hess[ij] * b.value
                        + a.grad[i] * b.grad[j]
                        + a.grad[j] * b.grad[i]
                        + a.value * b.hess[ij];
                }
            }
        }
        if self.order >= 3 {
            for i in 0..d {
                for j in 0..d {
                    for k in 0..d {
                        let ijk = (i * d + j) * d + k;
                        let (ij, ik, jk) = (i * d + j, i * d + k, j * d + k);
                        r.third[ijk] = a.third[ijk] * b.value
                            + a.hess[ij] * b.grad[k]
                            + a.hess[ik] * b.grad[j]
                            + a.hess[jk] * b.grad[i]
                            + a.grad[i] * b.hess[jk]
                            + a.grad[j] * b.hess[ik]
                            + a.grad[k] * b.hess[ij]
                            + a.value * b.third[ijk];
                    }
                }
            }
        }
        r
    }

    /// Composition `g(self)` given `g` and its first three derivatives at
    /// `self.value`.
    pub fn compose(&self, g: [S; 4]) -> Self {
        let d = self.dim;
        let a = self;
        let mut r = Self::constant(g[0], d, self.order);
        if self.order >= 1 {
            for i in 0..d {
                r.grad[i] = g[1] * a.grad[i];
            }
        }
        if self.order >= 2 {
            for i in 0..d {
                for j in 0..d {
                    let ij = i * d + j;
                    r.hess[ij] = g[2] * a.grad[i] * a.grad[j] + g[1] * a.hess[ij];
                }
            }
        }
        if self.order >= 3 {
            for i in 0..d {
                for j in 0..d {
                    for k in 0..d {
                        let ijk = (i * d + j) * d + k;
                        let (ij, ik, jk) = (i * d + j, i * d + k, j * d + k);
                        r.third[ijk] = g[3] * a.grad[i] * a.grad[j] * a.grad[k]
                            + g[2]
                                * (a.hess[ij] * a.grad[k]
                                    + a.hess[ik] * a.grad[j]
                                    + a.hess[jk] * a.grad[i])
                            + g[1] * a.third[ijk];
                    }
                }
            }
        }
        r
    }

    pub fn sin(&self) -> Self {
        let (s, c) = (self.value.sin(), self.value.cos());
        self.compose([s, c, -s, -c])
    }

    pub fn cos(&self) -> Self {
        let (s, c) = (self.value.sin(), self.value.cos());
        self.compose([c, -s, -c, s])
    }

    pub fn exp(&self) -> Self {
        let e = self.value.exp();
        self.compose([e, e, e, e])
    }

    pub fn recip(&self) -> Option<Self> {
        let r = self.value.recip()?;
        let r2 = r * r;
        let r3 = r2 * r;
        let r4 = r3 * r;
        Some(self.compose([r, -r2, S::constant(2.0) * r3, S::constant(-6.0) * r4]))
    }

    pub fn powi(&self, k: i32) -> Option<Self> {
        let kf = k as f64;
        let coeff = [1.0, kf, kf * (kf - 1.0), kf * (kf - 1.0) * (kf - 2.0)];
        let mut g = [S::constant(0.0); 4];
        for (m, c) in coeff.iter().enumerate() {
            if m > self.order || *c == 0.0 {
                continue;
            }
            g[m] = S::constant(*c) * self.value.powi(k - m as i32)?;
        }
        Some(self.compose(g))
    }

    pub fn finite(&self) -> bool {
        self.value.finite()
            && self.grad.iter().all(Scalar::finite)
            && self.hess.iter().all(Scalar::finite)
            && self.third.iter().all(Scalar::finite)
    }
}

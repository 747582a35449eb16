//! Numeric carrier shared by the plain and the differentiable forward pass.
//!
//! Every overlap kernel is written once against [`Scalar`]. Instantiated with
//! `f64` it is the ordinary evaluation; instantiated with
//! [`DiffScalar`](crate::grad::DiffScalar) it records a tape. All discrete
//! decisions (containment, crossings, sort order, min/max selection) are made
//! on [`Scalar::value`], so both instantiations take identical branches and
//! produce bit-identical values.

use std::ops::{Add, Div, Mul, Neg, Sub};

pub trait Scalar:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
{
    /// Whether derivative information is recorded. Kernels skip computing
    /// local partials when this is false.
    const TRACKED: bool;

    fn value(&self) -> f64;

    /// A constant on the same tape as `self`.
    fn constant_like(&self, value: f64) -> Self;

    fn sin(self) -> Self;
    fn cos(self) -> Self;

    /// A node with a precomputed value and local partial derivatives with
    /// respect to `parents`. `parents` must not be empty.
    fn custom(value: f64, parents: &[(Self, f64)]) -> Self;
}

impl Scalar for f64 {
    const TRACKED: bool = false;

    #[inline]
    fn value(&self) -> f64 {
        *self
    }

    #[inline]
    fn constant_like(&self, value: f64) -> Self {
        value
    }

    #[inline]
    fn sin(self) -> Self {
        f64::sin(self)
    }

    #[inline]
    fn cos(self) -> Self {
        f64::cos(self)
    }

    #[inline]
    fn custom(value: f64, _parents: &[(Self, f64)]) -> Self {
        value
    }
}

/// Minimum by value; the lowest index wins ties. Returns the winner's index.
pub(crate) fn argmin<S: Scalar>(xs: &[S]) -> (S, usize) {
    let mut best = 0;
    for (i, x) in xs.iter().enumerate().skip(1) {
        if x.value() < xs[best].value() {
            best = i;
        }
    }
    (xs[best], best)
}

/// Maximum by value; the lowest index wins ties.
pub(crate) fn argmax<S: Scalar>(xs: &[S]) -> (S, usize) {
    let mut best = 0;
    for (i, x) in xs.iter().enumerate().skip(1) {
        if x.value() > xs[best].value() {
            best = i;
        }
    }
    (xs[best], best)
}

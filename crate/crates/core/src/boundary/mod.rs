//! Stopping boundaries `f: T x E -> [0, inf]` and the operations on them.

mod convolution;
mod extract;
mod mlp;
mod tabular;

pub use convolution::{inf_convolution, inf_convolution_pruned, sup_convolution, Envelope};
pub use extract::extract_boundary;
pub use mlp::{mlp_value_and_grad, softplus, AdTape, Mlp, MlpBoundary};
pub use tabular::{Interpolation, LatentGrid, TabularBoundary};

/// A boundary evaluated at an exercise-date index and a latent point.
///
/// Values are usually in `[0, inf]`; analytic test fixtures may go negative.
pub trait Boundary: Sync {
    fn value(&self, date: usize, xi: &[f64]) -> f64;
}

impl<B: Boundary + ?Sized> Boundary for &B {
    fn value(&self, date: usize, xi: &[f64]) -> f64 {
        (**self).value(date, xi)
    }
}

impl<B: Boundary + ?Sized> Boundary for Box<B> {
    fn value(&self, date: usize, xi: &[f64]) -> f64 {
        (**self).value(date, xi)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConstantBoundary(pub f64);

impl Boundary for ConstantBoundary {
    fn value(&self, _date: usize, _xi: &[f64]) -> f64 {
        self.0
    }
}

/// One level per date, independent of the latent point.
#[derive(Clone, Debug, PartialEq)]
pub struct DateBoundary(pub Vec<f64>);

impl Boundary for DateBoundary {
    fn value(&self, date: usize, _xi: &[f64]) -> f64 {
        self.0[date]
    }
}

/// Wraps a closure.
pub struct FnBoundary<F>(pub F);

impl<F> Boundary for FnBoundary<F>
where
    F: Fn(usize, &[f64]) -> f64 + Sync,
{
    fn value(&self, date: usize, xi: &[f64]) -> f64 {
        (self.0)(date, xi)
    }
}

/// `f + shift`, with `+inf` kept as `+inf`.
pub struct Shifted<B> {
    pub inner: B,
    pub shift: f64,
}

impl<B: Boundary> Boundary for Shifted<B> {
    fn value(&self, date: usize, xi: &[f64]) -> f64 {
        self.inner.value(date, xi) + self.shift
    }
}

pub fn eval_boundary(b: &dyn Boundary, date: usize, xi: &[f64]) -> f64 {
    b.value(date, xi)
}

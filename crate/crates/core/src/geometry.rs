//! Latent coordinates `A = (Xi, alpha)`, stopping-region membership, the gap to
//! the region and the fuzzy phase indicator.

use serde::{Deserialize, Serialize};

use crate::boundary::Boundary;
use crate::error::{invalid, Error, Result};
use crate::market::PayoffKind;

/// The two supported coordinate systems.
///
/// * `MaxCall(m)`: `alpha(x) = max_i x_i`, `Xi(x) = x / alpha(x)` with image
///   `{xi in (0,1]^m : max_i xi_i = 1}`.
/// * `MinCall2d`: `alpha(x) = min(x_1, x_2)`, `Xi(x) = max/min in [1, inf)`.
///   `Xi` is two-to-one off the diagonal, so the inverse takes a [`Branch`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoordinateSystem {
    MaxCall(usize),
    MinCall2d,
}

/// Which asset is the larger one when inverting the min-call coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Branch {
    #[default]
    FirstLarger,
    SecondLarger,
}

/// `Epigraph` (eta = +1) or `Hypograph` (eta = -1) stopping sections.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    #[default]
    Epigraph,
    Hypograph,
}

impl Orientation {
    pub fn sign(self) -> f64 {
        match self {
            Orientation::Epigraph => 1.0,
            Orientation::Hypograph => -1.0,
        }
    }
}

const ROUND_TRIP_TOL: f64 = 1e-12;

impl CoordinateSystem {
    pub fn for_payoff(kind: PayoffKind, n_assets: usize) -> Result<Self> {
        match kind {
            PayoffKind::MaxCall => Ok(Self::MaxCall(n_assets)),
            PayoffKind::MinCall if n_assets == 2 => Ok(Self::MinCall2d),
            PayoffKind::MinCall => Err(Error::Unsupported(format!(
                "min-call coordinates need exactly 2 assets, got {n_assets}"
            ))),
        }
    }

    pub fn payoff_kind(&self) -> PayoffKind {
        match self {
            Self::MaxCall(_) => PayoffKind::MaxCall,
            Self::MinCall2d => PayoffKind::MinCall,
        }
    }

    pub fn n_assets(&self) -> usize {
        match self {
            Self::MaxCall(m) => *m,
            Self::MinCall2d => 2,
        }
    }

    pub fn latent_dim(&self) -> usize {
        match self {
            Self::MaxCall(m) => *m,
            Self::MinCall2d => 1,
        }
    }

    fn check_state(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n_assets() || x.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidState(x.to_vec()));
        }
        Ok(())
    }

    pub fn alpha(&self, x: &[f64]) -> Result<f64> {
        self.check_state(x)?;
        Ok(self.alpha_of(x))
    }

    pub fn xi(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_state(x)?;
        let mut out = vec![0.0; self.latent_dim()];
        self.project(x, &mut out);
        Ok(out)
    }

    /// `alpha(x)` without validation.
    #[inline]
    pub fn alpha_of(&self, x: &[f64]) -> f64 {
        match self {
            Self::MaxCall(_) => x.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            Self::MinCall2d => x[0].min(x[1]),
        }
    }

    /// Writes `Xi(x)` into `xi` and returns `alpha(x)`, without validation.
    #[inline]
    pub fn project(&self, x: &[f64], xi: &mut [f64]) -> f64 {
        match self {
            Self::MaxCall(_) => {
                let a = self.alpha_of(x);
                for (o, v) in xi.iter_mut().zip(x) {
                    *o = v / a;
                }
                a
            }
            Self::MinCall2d => {
                let (hi, lo) = (x[0].max(x[1]), x[0].min(x[1]));
                xi[0] = hi / lo;
                lo
            }
        }
    }

    pub fn contains_latent(&self, xi: &[f64]) -> bool {
        match self {
            Self::MaxCall(m) => {
                xi.len() == *m
                    && xi.iter().all(|v| *v > 0.0 && *v <= 1.0 + ROUND_TRIP_TOL)
                    && (xi.iter().copied().fold(f64::NEG_INFINITY, f64::max) - 1.0).abs() <= ROUND_TRIP_TOL
            }
            Self::MinCall2d => xi.len() == 1 && xi[0] >= 1.0 && xi[0].is_finite(),
        }
    }

    /// `A^{-1}(xi, a)`. `branch` only matters for the min-call coordinates.
    pub fn a_inverse(&self, xi: &[f64], a: f64, branch: Branch) -> Result<Vec<f64>> {
        if !self.contains_latent(xi) {
            return Err(Error::OutsideImage(xi.to_vec()));
        }
        if !(a >= 0.0) || !a.is_finite() {
            return Err(invalid(format!("level must be finite and nonnegative, got {a}")));
        }
        Ok(match self {
            Self::MaxCall(_) => xi.iter().map(|v| a * v).collect(),
            Self::MinCall2d => match branch {
                Branch::FirstLarger => vec![xi[0] * a, a],
                Branch::SecondLarger => vec![a, xi[0] * a],
            },
        })
    }
}

/// Gap between a boundary value and the statistic, `(f - alpha)^+` for
/// epigraphs and `(alpha - f)^+` for hypographs. `+inf` propagates.
#[inline]
pub fn gap(boundary_value: f64, alpha: f64, orientation: Orientation) -> f64 {
    match orientation {
        Orientation::Epigraph => {
            if boundary_value == f64::INFINITY {
                f64::INFINITY
            } else {
                (boundary_value - alpha).max(0.0)
            }
        }
        Orientation::Hypograph => (alpha - boundary_value).max(0.0),
    }
}

/// Closed-region membership test; the boundary itself stops.
#[inline]
pub fn stops(boundary_value: f64, alpha: f64, orientation: Orientation) -> bool {
    match orientation {
        Orientation::Epigraph => alpha >= boundary_value,
        Orientation::Hypograph => alpha <= boundary_value,
    }
}

pub fn gap_distance(
    f: &dyn Boundary,
    date: usize,
    x: &[f64],
    cs: &CoordinateSystem,
    orientation: Orientation,
) -> f64 {
    let mut xi = vec![0.0; cs.latent_dim()];
    let a = cs.project(x, &mut xi);
    gap(f.value(date, &xi), a, orientation)
}

pub fn in_stop_region(
    f: &dyn Boundary,
    date: usize,
    x: &[f64],
    cs: &CoordinateSystem,
    orientation: Orientation,
) -> bool {
    let mut xi = vec![0.0; cs.latent_dim()];
    let a = cs.project(x, &mut xi);
    stops(f.value(date, &xi), a, orientation)
}

/// Width of the fuzzy band; always positive.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct FuzzyWidth(f64);

impl FuzzyWidth {
    pub fn new(eps: f64) -> Result<Self> {
        if eps > 0.0 && eps.is_finite() {
            Ok(Self(eps))
        } else {
            Err(invalid(format!("fuzzy width must be positive, got {eps}")))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

/// `chi(delta) = (1 - delta/eps)^+ ^ 1`.
#[inline]
pub fn phase_indicator(delta: f64, width: FuzzyWidth) -> f64 {
    if delta <= 0.0 {
        1.0
    } else {
        (1.0 - delta / width.0).max(0.0)
    }
}

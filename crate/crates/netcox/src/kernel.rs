//! Kernel functions on `[-1, 1]`, their moment and L2 constants, local-linear
//! equivalent kernels, and the bandwidth transfer factor between kernels.
//!
//! All constants are obtained by adaptive quadrature rather than hand-derived
//! formulas; the kernels are piecewise polynomial, so quadrature is exact up
//! to rounding.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::numeric::adaptive_simpson;

/// Absolute tolerance for all kernel quadrature.
pub const QUAD_TOL: f64 = 1e-10;

#[derive(Debug, Error, PartialEq)]
pub enum KernelError {
    /// M2 - M1^2 of the base kernel is not positive.
    #[error("degenerate kernel: M2 - M1^2 = {0:.3e} is not positive")]
    Degenerate(f64),
    /// One-sided construction needs a kernel with mass on (0, 1].
    #[error("one-sided construction requires a kernel with mass on (0, 1]")]
    AlreadyOneSided,
    /// Transfer factor requires order-one kernels (first moment zero).
    #[error("kernel `{0}` is not order-one: first moment {1:.3e}")]
    NotOrderOne(String, f64),
    /// Transfer factor is undefined for a vanishing second moment.
    #[error("kernel `{0}` has vanishing second moment")]
    ZeroSecondMoment(String),
    #[error("unknown kernel spec `{0}`")]
    UnknownSpec(String),
}

/// A kernel function with bounded support inside `[-1, 1]`.
///
/// `LocalLinearEquivalent` may take negative values on parts of its support;
/// everything else is nonnegative.
#[derive(Debug, Clone, PartialEq)]
pub enum Kernel {
    /// `1 - |u|` on `[-1, 1]`.
    Triangular,
    /// `3/4 (1 - u^2)` on `[-1, 1]`.
    Epanechnikov,
    /// `1/2` on `[-1, 1]`.
    Uniform,
    /// `2 K(u)` on `[-1, 0]`, zero elsewhere.
    OneSided(Box<Kernel>),
    /// `K(u) (M2 - u M1) / (M2 - M1^2)`; the effective kernel of a
    /// local-linear fit with kernel `K`. Integrates to one with first
    /// moment zero even when `K` does not.
    LocalLinearEquivalent {
        inner: Box<Kernel>,
        m1: f64,
        m2: f64,
    },
}

impl Kernel {
    /// Kernel value at `u`; zero outside the support.
    pub fn eval(&self, u: f64) -> f64 {
        match self {
            Kernel::Triangular => {
                if u.abs() <= 1.0 {
                    1.0 - u.abs()
                } else {
                    0.0
                }
            }
            Kernel::Epanechnikov => {
                if u.abs() <= 1.0 {
                    0.75 * (1.0 - u * u)
                } else {
                    0.0
                }
            }
            Kernel::Uniform => {
                if u.abs() <= 1.0 {
                    0.5
                } else {
                    0.0
                }
            }
            Kernel::OneSided(inner) => {
                if (-1.0..=0.0).contains(&u) {
                    2.0 * inner.eval(u)
                } else {
                    0.0
                }
            }
            Kernel::LocalLinearEquivalent { inner, m1, m2 } => {
                inner.eval(u) * (m2 - u * m1) / (m2 - m1 * m1)
            }
        }
    }

    /// Support interval `(lo, hi)`.
    pub fn support(&self) -> (f64, f64) {
        match self {
            Kernel::Triangular | Kernel::Epanechnikov | Kernel::Uniform => (-1.0, 1.0),
            Kernel::OneSided(inner) => {
                let (lo, hi) = inner.support();
                (lo.max(-1.0), hi.min(0.0))
            }
            Kernel::LocalLinearEquivalent { inner, .. } => inner.support(),
        }
    }

    /// `∫ u^order k(u) du` over the support, by adaptive quadrature.
    pub fn moment(&self, order: u32) -> f64 {
        self.quad(|u| u.powi(order as i32) * self.eval(u))
    }

    /// `∫ k(u)^2 du` over the support.
    pub fn l2(&self) -> f64 {
        self.quad(|u| {
            let v = self.eval(u);
            v * v
        })
    }

    /// `∫_a^b k(u) du`, clipped to the support. Closed form for the
    /// triangular kernel, quadrature otherwise.
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        if a >= b {
            return 0.0;
        }
        if let Kernel::Triangular = self {
            return triangular_cdf(b) - triangular_cdf(a);
        }
        let (lo, hi) = self.support();
        let a = a.max(lo);
        let b = b.min(hi);
        if a >= b {
            return 0.0;
        }
        if a < 0.0 && b > 0.0 {
            adaptive_simpson(&|u| self.eval(u), a, 0.0, QUAD_TOL)
                + adaptive_simpson(&|u| self.eval(u), 0.0, b, QUAD_TOL)
        } else {
            adaptive_simpson(&|u| self.eval(u), a, b, QUAD_TOL)
        }
    }

    /// The one-sided version `K*(u) = 2 K(u) 1[-1,0](u)`.
    pub fn one_sided(self) -> Result<Kernel, KernelError> {
        // Doubling the restriction only preserves unit mass when half the
        // mass sits on each side of zero.
        let (_, hi) = self.support();
        if hi <= 0.0 {
            return Err(KernelError::AlreadyOneSided);
        }
        Ok(Kernel::OneSided(Box::new(self)))
    }

    /// The local-linear equivalent kernel `L(u) = K(u)(M2 - u M1)/(M2 - M1^2)`.
    pub fn local_linear_equivalent(self) -> Result<Kernel, KernelError> {
        let m1 = self.moment(1);
        let m2 = self.moment(2);
        let denom = m2 - m1 * m1;
        if denom <= 1e-12 {
            return Err(KernelError::Degenerate(denom));
        }
        Ok(Kernel::LocalLinearEquivalent {
            inner: Box::new(self),
            m1,
            m2,
        })
    }

    fn quad<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        let (lo, hi) = self.support();
        if lo < 0.0 && hi > 0.0 {
            // Split at zero: triangular kernels have a kink there.
            adaptive_simpson(&f, lo, 0.0, QUAD_TOL) + adaptive_simpson(&f, 0.0, hi, QUAD_TOL)
        } else {
            adaptive_simpson(&f, lo, hi, QUAD_TOL)
        }
    }
}

fn triangular_cdf(u: f64) -> f64 {
    if u <= -1.0 {
        0.0
    } else if u <= 0.0 {
        0.5 * (1.0 + u) * (1.0 + u)
    } else if u <= 1.0 {
        1.0 - 0.5 * (1.0 - u) * (1.0 - u)
    } else {
        1.0
    }
}

/// Factor `f` such that the MSE-optimal bandwidths satisfy `h_to = f * h_from`:
///
/// `f = [ (∫to² / M2(to)²) · (M2(from)² / ∫from²) ]^{1/5}`
///
/// Both kernels must be order-one (first moment zero) with nonzero second
/// moments; the one-sided kernel itself does not qualify, its local-linear
/// equivalent does.
pub fn bandwidth_transfer_factor(from: &Kernel, to: &Kernel) -> Result<f64, KernelError> {
    for (k, name) in [(from, "from"), (to, "to")] {
        let m1 = k.moment(1);
        if m1.abs() > 1e-6 {
            return Err(KernelError::NotOrderOne(name.to_string(), m1));
        }
        if k.moment(2).abs() <= 1e-12 {
            return Err(KernelError::ZeroSecondMoment(name.to_string()));
        }
    }
    let m2_from = from.moment(2);
    let m2_to = to.moment(2);
    let ratio = (to.l2() / (m2_to * m2_to)) * ((m2_from * m2_from) / from.l2());
    Ok(ratio.powf(0.2))
}

impl fmt::Display for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Kernel::Triangular => write!(f, "triangular"),
            Kernel::Epanechnikov => write!(f, "epanechnikov"),
            Kernel::Uniform => write!(f, "uniform"),
            Kernel::OneSided(inner) => write!(f, "{inner} one_sided"),
            Kernel::LocalLinearEquivalent { inner, .. } => {
                write!(f, "{inner} local_linear_equivalent")
            }
        }
    }
}

impl FromStr for Kernel {
    type Err = KernelError;

    /// Parses a config name: a base kernel (`triangular`, `epanechnikov`,
    /// `uniform`) plus optional modifiers `one_sided` and
    /// `local_linear_equivalent`, separated by whitespace, `,` or `+`.
    /// Modifiers apply in that order regardless of spelling order.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut base: Option<Kernel> = None;
        let mut one_sided = false;
        let mut local_linear = false;
        for tok in s.split(|c: char| c.is_whitespace() || c == ',' || c == '+') {
            if tok.is_empty() {
                continue;
            }
            match tok {
                "triangular" if base.is_none() => base = Some(Kernel::Triangular),
                "epanechnikov" if base.is_none() => base = Some(Kernel::Epanechnikov),
                "uniform" if base.is_none() => base = Some(Kernel::Uniform),
                "one_sided" if !one_sided => one_sided = true,
                "local_linear_equivalent" if !local_linear => local_linear = true,
                _ => return Err(KernelError::UnknownSpec(s.to_string())),
            }
        }
        let mut k = base.ok_or_else(|| KernelError::UnknownSpec(s.to_string()))?;
        if one_sided {
            k = k.one_sided()?;
        }
        if local_linear {
            k = k.local_linear_equivalent()?;
        }
        Ok(k)
    }
}

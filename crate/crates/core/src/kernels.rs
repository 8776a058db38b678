//! Smoothing kernels, including higher-order kernels with vanishing moments.
//!
//! A kernel of order `l` integrates to one and has `∫ u^j K(u) du = 0` for
//! `1 <= j <= l - 1`. Higher orders are obtained by multiplying a symmetric
//! base kernel `K0` by the polynomial `Σ c_i u^i` (degree `l - 1`) that makes
//! the first `l - 1` moments vanish, i.e. the reproducing kernel at zero of the
//! polynomials orthonormal under `K0`. With the uniform base this is the
//! classical Legendre-expansion kernel `Σ_m φ_m(0) φ_m(u)`.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelFamily {
    Gaussian,
    Epanechnikov,
    /// Uniform base on `[-1, 1]` with a Legendre-polynomial correction.
    LegendreHigherOrder,
}

impl KernelFamily {
    pub fn is_compact(self) -> bool {
        !matches!(self, KernelFamily::Gaussian)
    }

    fn base(self, u: f64) -> f64 {
        match self {
            KernelFamily::Gaussian => (-0.5 * u * u).exp() / (2.0 * PI).sqrt(),
            KernelFamily::Epanechnikov => {
                if u.abs() <= 1.0 {
                    0.75 * (1.0 - u * u)
                } else {
                    0.0
                }
            }
            KernelFamily::LegendreHigherOrder => {
                if u.abs() <= 1.0 {
                    0.5
                } else {
                    0.0
                }
            }
        }
    }

    /// `∫ u^j K0(u) du`.
    fn base_moment(self, j: usize) -> f64 {
        if j % 2 == 1 {
            return 0.0;
        }
        let k = (j / 2) as f64;
        match self {
            // (j - 1)!!
            KernelFamily::Gaussian => (1..j).step_by(2).map(|v| v as f64).product(),
            KernelFamily::Epanechnikov => 3.0 / ((2.0 * k + 1.0) * (2.0 * k + 3.0)),
            KernelFamily::LegendreHigherOrder => 1.0 / (2.0 * k + 1.0),
        }
    }
}

impl std::str::FromStr for KernelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(KernelFamily::Gaussian),
            "epanechnikov" => Ok(KernelFamily::Epanechnikov),
            "legendre" | "legendre-higher-order" => Ok(KernelFamily::LegendreHigherOrder),
            other => Err(Error::InvalidParameter(format!("unknown kernel family '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelSpec {
    family: KernelFamily,
    order: usize,
    coefs: Vec<f64>,
}

impl KernelSpec {
    pub fn new(family: KernelFamily, order: usize) -> Result<Self> {
        if order == 0 {
            return Err(Error::InvalidParameter("kernel order must be positive".into()));
        }
        let m = order;
        let hankel = DMatrix::from_fn(m, m, |i, j| family.base_moment(i + j));
        let mut rhs = DVector::zeros(m);
        rhs[0] = 1.0;
        let coefs = hankel
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::InvalidParameter(format!("kernel order {order} is too high")))?;
        Ok(Self {
            family,
            order,
            coefs: coefs.iter().copied().collect(),
        })
    }

    pub fn gaussian() -> Self {
        Self {
            family: KernelFamily::Gaussian,
            order: 2,
            coefs: vec![1.0, 0.0],
        }
    }

    pub fn epanechnikov() -> Self {
        Self {
            family: KernelFamily::Epanechnikov,
            order: 2,
            coefs: vec![1.0, 0.0],
        }
    }

    /// Legendre kernel of order `⌊min(alpha, beta)⌋` (at least 1).
    pub fn for_smoothness(alpha: f64, beta: f64) -> Result<Self> {
        let l = alpha.min(beta).floor().max(1.0) as usize;
        Self::new(KernelFamily::LegendreHigherOrder, l)
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Support half-width; `None` when unbounded.
    pub fn support(&self) -> Option<f64> {
        self.family.is_compact().then_some(1.0)
    }

    pub fn eval(&self, u: f64) -> f64 {
        let base = self.family.base(u);
        if base == 0.0 {
            return 0.0;
        }
        let poly = self.coefs.iter().rev().fold(0.0, |acc, c| acc * u + c);
        base * poly
    }

    /// `K_ht(a) = K((a - t) / h) / h`.
    pub fn localized(&self, h: f64, t: f64, a: f64) -> Result<f64> {
        check_bandwidth(h)?;
        Ok(self.eval((a - t) / h) / h)
    }
}

pub fn check_bandwidth(h: f64) -> Result<()> {
    if h > 0.0 && h.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidBandwidth(h))
    }
}

//! Normal and truncated-normal helpers.

use rand::Rng;
use statrs::distribution::{ContinuousCDF, Normal};
use std::f64::consts::{FRAC_1_SQRT_2, PI};

pub fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z * FRAC_1_SQRT_2)
}

pub fn std_normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

/// Normal with mean `mean` and standard deviation `sd`, truncated to `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncatedNormal {
    pub mean: f64,
    pub sd: f64,
    pub lo: f64,
    pub hi: f64,
}

impl TruncatedNormal {
    pub fn new(mean: f64, sd: f64, lo: f64, hi: f64) -> Self {
        debug_assert!(sd > 0.0 && lo < hi);
        Self { mean, sd, lo, hi }
    }

    fn mass(&self) -> (f64, f64) {
        let a = std_normal_cdf((self.lo - self.mean) / self.sd);
        let b = std_normal_cdf((self.hi - self.mean) / self.sd);
        (a, b - a)
    }

    pub fn pdf(&self, x: f64) -> f64 {
        if x < self.lo || x > self.hi {
            return 0.0;
        }
        let (_, z) = self.mass();
        std_normal_pdf((x - self.mean) / self.sd) / (self.sd * z)
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= self.lo {
            return 0.0;
        }
        if x >= self.hi {
            return 1.0;
        }
        let (a, z) = self.mass();
        (std_normal_cdf((x - self.mean) / self.sd) - a) / z
    }

    /// Inverse-CDF draw.
    pub fn inverse_cdf(&self, u: f64) -> f64 {
        let (a, z) = self.mass();
        let p = (a + u * z).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON);
        (self.mean + self.sd * std_normal_quantile(p)).clamp(self.lo, self.hi)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.inverse_cdf(rng.random::<f64>())
    }
}

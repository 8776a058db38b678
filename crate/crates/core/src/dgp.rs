//! The simulation design: `X ~ U(-1, 1)`, `A | X ~ TruncNorm(κ(X), 1)` on `[-1, 1]`,
//! `Y | A, X ~ N(ξ(A, X), 0.25)`, with analytic nuisance functions and dose-response.

use crate::basis::normalized_legendre;
use crate::data::Sample;
use crate::dist::TruncatedNormal;
use crate::nuisance::{NuisanceFit, Provenance};
use crate::quadrature::GaussLegendre;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use std::sync::Arc;

pub const DEFAULT_BETA: [f64; 6] = [1.0, 0.8, 0.4, 0.2, 0.1, 0.05];

#[derive(Debug, Clone)]
pub struct Dgp {
    pub beta: [f64; 6],
    /// Outcome noise standard deviation (variance 0.25).
    pub y_sd: f64,
    rule: GaussLegendre,
}

impl Default for Dgp {
    fn default() -> Self {
        Self::new(DEFAULT_BETA)
    }
}

impl Dgp {
    pub fn new(beta: [f64; 6]) -> Self {
        Self {
            beta,
            y_sd: 0.5,
            rule: GaussLegendre::new(48),
        }
    }

    pub const SUPPORT: (f64, f64) = (-1.0, 1.0);

    /// `b(v)ᵀ β` with the first six normalized Legendre polynomials.
    pub fn index(&self, v: f64) -> f64 {
        let mut b = [0.0; 6];
        normalized_legendre(v, 6, &mut b);
        b.iter().zip(&self.beta).map(|(x, y)| x * y).sum()
    }

    pub fn kappa(&self, x: f64) -> f64 {
        self.index(x) / 3.0
    }

    pub fn xi(&self, a: f64, x: f64) -> f64 {
        self.index(a) + self.index(x)
    }

    pub fn treatment_law(&self, x: f64) -> TruncatedNormal {
        TruncatedNormal::new(self.kappa(x), 1.0, -1.0, 1.0)
    }

    /// `π(a | x)`.
    pub fn pi(&self, a: f64, x: f64) -> f64 {
        self.treatment_law(x).pdf(a)
    }

    pub fn p_x(&self, x: f64) -> f64 {
        if (-1.0..=1.0).contains(&x) {
            0.5
        } else {
            0.0
        }
    }

    /// Joint density `p(a, x)`.
    pub fn joint(&self, a: f64, x: f64) -> f64 {
        self.pi(a, x) * self.p_x(x)
    }

    /// `p(a) = ∫ π(a | x) p(x) dx` by quadrature.
    pub fn p_a(&self, a: f64) -> f64 {
        self.integrate_x(|x| self.pi(a, x))
    }

    pub fn w(&self, a: f64, x: f64) -> f64 {
        self.p_a(a) / self.pi(a, x)
    }

    /// `θ(a) = b(a)ᵀβ + ½∫ b(x)ᵀβ dx`; the integral keeps only the constant term.
    pub fn theta(&self, a: f64) -> f64 {
        self.index(a) + self.beta[0]
    }

    /// `E{f(X)}` for `X ~ U(-1, 1)`.
    pub fn integrate_x<F: FnMut(f64) -> f64>(&self, f: F) -> f64 {
        0.5 * self.rule.integrate(-1.0, 1.0, 2, f)
    }

    /// `E{f(X) | A = t}`.
    pub fn integrate_x_given_a<F: FnMut(f64) -> f64>(&self, t: f64, mut f: F) -> f64 {
        let pt = self.p_a(t);
        self.integrate_x(|x| f(x) * self.pi(t, x)) / pt
    }

    pub fn draw_sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Sample {
        let noise = Normal::new(0.0, self.y_sd).expect("positive sd");
        let mut y = Vec::with_capacity(n);
        let mut a = Vec::with_capacity(n);
        let mut x = Vec::with_capacity(n);
        for _ in 0..n {
            let xi = rng.random_range(-1.0..1.0);
            let ai = self.treatment_law(xi).sample(rng);
            y.push(self.xi(ai, xi) + noise.sample(rng));
            a.push(ai);
            x.push(xi);
        }
        Sample::new(y, a, x, 1).expect("consistent lengths")
    }

    /// True nuisance functions, with analytic `p(a)` and `m(a) = θ(a)`.
    pub fn exact_nuisance(&self) -> NuisanceFit {
        let (d1, d2, d3, d4) = (self.clone(), self.clone(), self.clone(), self.clone());
        NuisanceFit::new(
            Arc::new(move |a, x: &[f64]| d1.xi(a, x[0])),
            Arc::new(move |a, x: &[f64]| d2.pi(a, x[0])),
            Arc::new(move |a| d3.p_a(a)),
            Arc::new(move |a| d4.theta(a)),
            Provenance::ExactOracle,
        )
    }
}

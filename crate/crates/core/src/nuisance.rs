//! Nuisance functions `μ̂(a, x)`, `π̂(a | x)`, `ŵ = p̂(a)/π̂(a | x)`, `p̂(a)` and `m̂(a)`.
//!
//! A [`NuisanceFit`] bundles evaluable closures, so fitted series models, the
//! fluctuated "simulated" estimators and the exact truth all share one type.

use crate::basis::{BasisSpec, OutOfBox};
use crate::data::Sample;
use crate::dgp::Dgp;
use crate::dist::TruncatedNormal;
use crate::error::{Error, Result};
use crate::kernels::{check_bandwidth, KernelSpec};
use crate::series::{fit_least_squares, SeriesFit};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

pub type SurfaceFn = Arc<dyn Fn(f64, &[f64]) -> f64 + Send + Sync>;
pub type CurveFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

pub const DEFAULT_POSITIVITY_FLOOR: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Fitted,
    SimulatedOracle,
    ExactOracle,
}

#[derive(Clone)]
pub struct NuisanceFit {
    mu: SurfaceFn,
    pi: SurfaceFn,
    p_marginal: CurveFn,
    m: CurveFn,
    positivity_floor: f64,
    provenance: Provenance,
}

impl fmt::Debug for NuisanceFit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NuisanceFit")
            .field("provenance", &self.provenance)
            .field("positivity_floor", &self.positivity_floor)
            .finish_non_exhaustive()
    }
}

impl NuisanceFit {
    pub fn new(mu: SurfaceFn, pi: SurfaceFn, p_marginal: CurveFn, m: CurveFn, provenance: Provenance) -> Self {
        Self {
            mu,
            pi,
            p_marginal,
            m,
            positivity_floor: DEFAULT_POSITIVITY_FLOOR,
            provenance,
        }
    }

    pub fn with_floor(mut self, floor: f64) -> Self {
        self.positivity_floor = floor;
        self
    }

    pub fn with_m(mut self, m: CurveFn) -> Self {
        self.m = m;
        self
    }

    pub fn with_mu(mut self, mu: SurfaceFn) -> Self {
        self.mu = mu;
        self
    }

    pub fn with_pi(mut self, pi: SurfaceFn) -> Self {
        self.pi = pi;
        self
    }

    pub fn with_p_marginal(mut self, p: CurveFn) -> Self {
        self.p_marginal = p;
        self
    }

    pub fn mu(&self, a: f64, x: &[f64]) -> f64 {
        (self.mu)(a, x)
    }

    pub fn pi(&self, a: f64, x: &[f64]) -> f64 {
        (self.pi)(a, x)
    }

    pub fn p_marginal(&self, a: f64) -> f64 {
        (self.p_marginal)(a)
    }

    pub fn m(&self, a: f64) -> f64 {
        (self.m)(a)
    }

    pub fn w(&self, a: f64, x: &[f64]) -> f64 {
        self.p_marginal(a) / self.pi(a, x)
    }

    pub fn positivity_floor(&self) -> f64 {
        self.positivity_floor
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn mu_fn(&self) -> SurfaceFn {
        Arc::clone(&self.mu)
    }

    pub fn pi_fn(&self) -> SurfaceFn {
        Arc::clone(&self.pi)
    }
}

/// Bounding box of `(a, x)` over a fold, slightly padded.
pub fn fold_box(fold: &Sample) -> Vec<(f64, f64)> {
    let mut ranges = vec![fold.treatment_range()];
    ranges.extend(fold.covariate_ranges());
    ranges
        .into_iter()
        .map(|(lo, hi)| {
            let pad = 1e-9 + 1e-6 * (hi - lo).abs();
            if hi - lo < 1e-12 {
                (lo - 0.5, hi + 0.5)
            } else {
                (lo - pad, hi + pad)
            }
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct OutcomeConfig {
    /// Legendre terms in `a`.
    pub degree_a: usize,
    /// Legendre terms per covariate.
    pub degree_x: usize,
    pub ridge: f64,
}

impl Default for OutcomeConfig {
    fn default() -> Self {
        Self {
            degree_a: 4,
            degree_x: 4,
            ridge: 1e-6,
        }
    }
}

/// Tensor-product series regression of `Y` on `(A, X)`.
#[derive(Debug, Clone)]
pub struct OutcomeRegression {
    fit: SeriesFit,
}

impl OutcomeRegression {
    pub fn eval(&self, a: f64, x: &[f64]) -> f64 {
        let mut p = Vec::with_capacity(x.len() + 1);
        p.push(a);
        p.extend_from_slice(x);
        // clip policy makes evaluation total
        self.fit.eval(&p).unwrap_or(f64::NAN)
    }

    pub fn series(&self) -> &SeriesFit {
        &self.fit
    }

    pub fn into_fn(self) -> SurfaceFn {
        Arc::new(move |a, x| self.eval(a, x))
    }
}

pub fn series_points(fold: &Sample) -> Vec<Vec<f64>> {
    (0..fold.len())
        .map(|i| {
            let mut p = vec![fold.a()[i]];
            p.extend_from_slice(fold.x(i));
            p
        })
        .collect()
}

/// Series regression of an arbitrary response on `(A, X)` over the fold's box.
pub fn fit_surface(fold: &Sample, response: &[f64], cfg: &OutcomeConfig) -> Result<OutcomeRegression> {
    if fold.is_empty() {
        return Err(Error::TooFewObservations { needed: 1, got: 0 });
    }
    let mut degrees = vec![cfg.degree_a];
    degrees.extend(std::iter::repeat_n(cfg.degree_x, fold.dim()));
    let basis = BasisSpec::new(degrees, fold_box(fold))?.with_out_of_box(OutOfBox::Clip);
    let fit = fit_least_squares(&basis, &series_points(fold), response, cfg.ridge, true)?;
    Ok(OutcomeRegression { fit })
}

pub fn fit_outcome_regression(fold: &Sample, cfg: &OutcomeConfig) -> Result<OutcomeRegression> {
    fit_surface(fold, fold.y(), cfg)
}

#[derive(Debug, Clone)]
pub struct DensityConfig {
    /// Bandwidth of the smoothing kernel `G_{h₁t}(A)`.
    pub h1: f64,
    pub degree_x: usize,
    pub ridge: f64,
    pub grid_size: usize,
    pub floor: f64,
    /// Divide by the grid integral so that `∫ π̂(t | x) dt = 1`.
    pub renormalize: bool,
}

impl Default for DensityConfig {
    fn default() -> Self {
        Self {
            h1: 0.2,
            degree_x: 4,
            ridge: 1e-6,
            grid_size: 41,
            floor: DEFAULT_POSITIVITY_FLOOR,
            renormalize: false,
        }
    }
}

/// `π̂(t | x)` from series regressions of `G_{h₁t}(A)` on `X` over a grid of `t`.
#[derive(Debug, Clone)]
pub struct ConditionalDensity {
    basis: BasisSpec,
    grid: Vec<f64>,
    /// `grid.len()` rows of `basis.size()` coefficients.
    coefs: Vec<Vec<f64>>,
    floor: f64,
    renormalize: bool,
    degenerate: bool,
}

impl ConditionalDensity {
    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    fn raw_on_grid(&self, b: &[f64]) -> Vec<f64> {
        self.coefs
            .iter()
            .map(|c| c.iter().zip(b).map(|(x, y)| x * y).sum::<f64>().max(self.floor))
            .collect()
    }

    pub fn eval(&self, t: f64, x: &[f64]) -> f64 {
        let Ok(b) = self.basis.eval(x) else {
            return f64::NAN;
        };
        let vals = self.raw_on_grid(&b);
        let g = &self.grid;
        let last = g.len() - 1;
        let v = if g.len() == 1 || t <= g[0] {
            vals[0]
        } else if t >= g[last] {
            vals[last]
        } else {
            let step = (g[last] - g[0]) / last as f64;
            let j = (((t - g[0]) / step).floor() as usize).min(last - 1);
            let frac = (t - g[j]) / (g[j + 1] - g[j]);
            vals[j] * (1.0 - frac) + vals[j + 1] * frac
        };
        if self.renormalize && g.len() > 1 {
            let mass: f64 = vals.windows(2).zip(g.windows(2)).map(|(v, t)| 0.5 * (v[0] + v[1]) * (t[1] - t[0])).sum();
            (v / mass).max(self.floor)
        } else {
            v.max(self.floor)
        }
    }

    pub fn into_fn(self) -> SurfaceFn {
        Arc::new(move |a, x| self.eval(a, x))
    }
}

pub fn fit_conditional_density(fold: &Sample, cfg: &DensityConfig) -> Result<ConditionalDensity> {
    check_bandwidth(cfg.h1)?;
    if fold.is_empty() {
        return Err(Error::TooFewObservations { needed: 1, got: 0 });
    }
    let ranges: Vec<(f64, f64)> = fold_box(fold)[1..].to_vec();
    let basis = BasisSpec::tensor(cfg.degree_x, ranges)?.with_out_of_box(OutOfBox::Clip);
    let points: Vec<Vec<f64>> = fold.x_rows().map(|r| r.to_vec()).collect();
    let (alo, ahi) = fold.treatment_range();
    let size = cfg.grid_size.max(2);
    let grid: Vec<f64> = (0..size).map(|i| alo + (ahi - alo) * i as f64 / (size - 1) as f64).collect();
    let kernel = KernelSpec::gaussian();
    let mut coefs = Vec::with_capacity(size);
    let mut fell_back = false;
    for &t in &grid {
        let response: Vec<f64> = fold.a().iter().map(|&a| kernel.eval((a - t) / cfg.h1) / cfg.h1).collect();
        let fit = fit_least_squares(&basis, &points, &response, cfg.ridge, true)?;
        fell_back |= fit.fell_back();
        coefs.push(fit.coefficients().to_vec());
    }
    if fell_back {
        log::warn!("conditional density fit needed a larger ridge on a {}-row fold", fold.len());
    }
    let mut dens = ConditionalDensity {
        basis,
        grid,
        coefs,
        floor: cfg.floor,
        renormalize: cfg.renormalize,
        degenerate: false,
    };
    let all_clipped = points.iter().all(|x| {
        let b = dens.basis.eval(x).unwrap_or_default();
        dens.coefs
            .iter()
            .all(|c| c.iter().zip(&b).map(|(u, v)| u * v).sum::<f64>() <= cfg.floor)
    });
    if all_clipped {
        log::warn!("degenerate conditional density: every fitted value was clipped at {}", cfg.floor);
        dens.degenerate = true;
    }
    Ok(dens)
}

/// `p̂(a) = n⁻¹ Σ π̂(a | X_i)` over the given covariate rows.
pub fn marginal_density(pi: SurfaceFn, covariates: Vec<Vec<f64>>) -> CurveFn {
    Arc::new(move |a| covariates.iter().map(|x| pi(a, x)).sum::<f64>() / covariates.len().max(1) as f64)
}

/// `m̂(a) = n⁻¹ Σ μ̂(a, X_i)` over the given covariate rows.
pub fn fit_m(mu: SurfaceFn, covariates: Vec<Vec<f64>>) -> CurveFn {
    Arc::new(move |a| covariates.iter().map(|x| mu(a, x)).sum::<f64>() / covariates.len().max(1) as f64)
}

pub fn covariate_rows(fold: &Sample) -> Vec<Vec<f64>> {
    fold.x_rows().map(|r| r.to_vec()).collect()
}

#[derive(Debug, Clone, Default)]
pub struct FitConfig {
    pub outcome: OutcomeConfig,
    pub density: DensityConfig,
}

/// Fits `μ̂`, `π̂` and `p̂` on `train` and `m̂` on `m_fold`.
pub fn fit_nuisances(train: &Sample, m_fold: &Sample, cfg: &FitConfig) -> Result<NuisanceFit> {
    let mu = fit_outcome_regression(train, &cfg.outcome)?.into_fn();
    let pi = fit_conditional_density(train, &cfg.density)?.into_fn();
    let p = marginal_density(Arc::clone(&pi), covariate_rows(train));
    let m = fit_m(Arc::clone(&mu), covariate_rows(m_fold));
    Ok(NuisanceFit::new(mu, pi, p, m, Provenance::Fitted).with_floor(cfg.density.floor))
}

#[derive(Debug, Clone)]
pub struct SimulatedNuisanceConfig {
    /// Fluctuations scale as `n^(-1/alpha)`.
    pub alpha: f64,
    pub n: usize,
    pub seed: u64,
    /// Force every fluctuation coefficient to zero.
    pub zero_fluctuation: bool,
}

/// Fluctuated nuisance estimators together with the coefficients that were drawn.
#[derive(Debug, Clone)]
pub struct SimulatedNuisance {
    pub fit: NuisanceFit,
    /// `(ζ₁, ζ₂, ζ₃)`: `μ̂ = ξ + ζ₁cos(2πx) + ζ₂cos(2πa)`, `π̂` has mean `κ(x) + ζ₃cos(2πx)`.
    pub zeta: [f64; 3],
}

/// Fluctuation scale `n^(-1/alpha)`.
pub fn fluctuation_scale(n: usize, alpha: f64) -> f64 {
    (n as f64).powf(-1.0 / alpha)
}

/// Draws `(ζ₁, ζ₂, ζ₃)` with `ζ₁, ζ₂ ~ N(5s, s)` and `ζ₃ ~ N(s, s/2)` (mean, sd), `s = n^(-1/alpha)`.
pub fn draw_fluctuations<R: rand::Rng + ?Sized>(alpha: f64, n: usize, rng: &mut R) -> [f64; 3] {
    let s = fluctuation_scale(n, alpha);
    let outcome = Normal::new(5.0 * s, s).expect("positive sd");
    let density = Normal::new(s, 0.5 * s).expect("positive sd");
    [outcome.sample(rng), outcome.sample(rng), density.sample(rng)]
}

/// Nuisances built from given fluctuations; `p̂` and `m̂` average over `covariates`.
pub fn fluctuated_nuisances(dgp: &Dgp, zeta: [f64; 3], covariates: Vec<Vec<f64>>) -> NuisanceFit {
    let d_mu = dgp.clone();
    let d_pi = dgp.clone();
    let [z1, z2, z3] = zeta;
    let mu: SurfaceFn =
        Arc::new(move |a, x: &[f64]| d_mu.xi(a, x[0]) + z1 * (2.0 * PI * x[0]).cos() + z2 * (2.0 * PI * a).cos());
    let pi: SurfaceFn = Arc::new(move |a, x: &[f64]| {
        TruncatedNormal::new(d_pi.kappa(x[0]) + z3 * (2.0 * PI * x[0]).cos(), 1.0, -1.0, 1.0).pdf(a)
    });
    let p = marginal_density(Arc::clone(&pi), covariates.clone());
    let m = fit_m(Arc::clone(&mu), covariates);
    NuisanceFit::new(mu, pi, p, m, Provenance::SimulatedOracle).with_floor(1e-6)
}

pub fn simulated_nuisances(cfg: &SimulatedNuisanceConfig, dgp: &Dgp, covariates: Vec<Vec<f64>>) -> Result<SimulatedNuisance> {
    if !(cfg.alpha > 0.0) {
        return Err(Error::InvalidParameter(format!("alpha must be positive, got {}", cfg.alpha)));
    }
    let zeta = if cfg.zero_fluctuation {
        [0.0; 3]
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        draw_fluctuations(cfg.alpha, cfg.n, &mut rng)
    };
    Ok(SimulatedNuisance {
        fit: fluctuated_nuisances(dgp, zeta, covariates),
        zeta,
    })
}

//! Bounds on the dose-response under bounded unmeasured confounding.
//!
//! For `γ >= 1` the treatment density given `(X, U)` may differ from `π(a | x)`
//! by a factor of at most `γ`. The bounds `θ_l(t; γ) <= E(Y^t) <= θ_u(t; γ)`
//! are estimated by regressing `φ_j = ŵ{s_j - κ̂_j} + ∫κ̂_j dP(x)` on `A`, where
//! `s_j` tilts `Y` around the conditional quantile `q_j` at level
//! `1/(1+γ)` (lower) or `γ/(1+γ)` (upper), and `κ_j = E(s_j | A, X)`.

use crate::basis::{BasisSpec, OutOfBox};
use crate::data::Sample;
use crate::dgp::Dgp;
use crate::dist::{std_normal_cdf, std_normal_pdf, std_normal_quantile};
use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::nuisance::{
    covariate_rows, fit_conditional_density, fit_m, fold_box, fit_surface, marginal_density, series_points, CurveFn, FitConfig,
    NuisanceFit, OutcomeConfig, Provenance, SurfaceFn,
};
use crate::pseudo::{build_pseudo, dr_learner_estimate, split, PseudoOutcomeSet};
use crate::quadrature::GaussLegendre;
use crate::series::fit_quantile;
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensitivityConfig {
    gamma: f64,
}

impl SensitivityConfig {
    pub fn new(gamma: f64) -> Result<Self> {
        if !(gamma >= 1.0) || !gamma.is_finite() {
            return Err(Error::InvalidParameter(format!("gamma must be finite and >= 1, got {gamma}")));
        }
        Ok(Self { gamma })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn tau_l(&self) -> f64 {
        1.0 / (1.0 + self.gamma)
    }

    pub fn tau_u(&self) -> f64 {
        self.gamma / (1.0 + self.gamma)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Lower,
    Upper,
}

fn sgn(v: f64) -> i32 {
    if v > 0.0 {
        1
    } else if v < 0.0 {
        -1
    } else {
        0
    }
}

/// `s_l = q + (Y - q) γ^{sgn(q - Y)}`, `s_u = q + (Y - q) γ^{sgn(Y - q)}`.
///
/// Evaluated as `Y + (Y - q)(γ^{sgn} - 1)` so that `γ = 1` returns `Y` exactly.
pub fn s_transform(y: f64, q: f64, gamma: f64, side: Side) -> f64 {
    let e = match side {
        Side::Lower => sgn(q - y),
        Side::Upper => sgn(y - q),
    };
    y + (y - q) * (gamma.powi(e) - 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuantileProvenance {
    Fitted,
    AnalyticOracle,
}

/// Conditional quantile surfaces `q_l(a, x) <= q_u(a, x)`.
#[derive(Clone)]
pub struct QuantileFit {
    lower: SurfaceFn,
    upper: SurfaceFn,
    provenance: QuantileProvenance,
}

impl std::fmt::Debug for QuantileFit {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("QuantileFit").field("provenance", &self.provenance).finish_non_exhaustive()
    }
}

impl QuantileFit {
    pub fn new(lower: SurfaceFn, upper: SurfaceFn, provenance: QuantileProvenance) -> Self {
        Self {
            lower,
            upper,
            provenance,
        }
    }

    /// `ξ(a, x) + σ Φ⁻¹(τ)` under the simulation design.
    pub fn analytic(dgp: &Dgp, cfg: &SensitivityConfig) -> Self {
        let (dl, du) = (dgp.clone(), dgp.clone());
        let zl = dgp.y_sd * std_normal_quantile(cfg.tau_l());
        let zu = dgp.y_sd * std_normal_quantile(cfg.tau_u());
        Self::new(
            Arc::new(move |a, x: &[f64]| dl.xi(a, x[0]) + zl),
            Arc::new(move |a, x: &[f64]| du.xi(a, x[0]) + zu),
            QuantileProvenance::AnalyticOracle,
        )
    }

    pub fn lower(&self, a: f64, x: &[f64]) -> f64 {
        (self.lower)(a, x)
    }

    pub fn upper(&self, a: f64, x: &[f64]) -> f64 {
        (self.upper)(a, x)
    }

    pub fn get(&self, side: Side, a: f64, x: &[f64]) -> f64 {
        match side {
            Side::Lower => self.lower(a, x),
            Side::Upper => self.upper(a, x),
        }
    }

    pub fn provenance(&self) -> QuantileProvenance {
        self.provenance
    }
}

#[derive(Debug, Clone)]
pub struct QuantileConfig {
    pub degree_a: usize,
    pub degree_x: usize,
    pub ridge: f64,
    pub max_iter: usize,
}

impl Default for QuantileConfig {
    fn default() -> Self {
        Self {
            degree_a: 3,
            degree_x: 3,
            ridge: 1e-6,
            max_iter: 5000,
        }
    }
}

/// Pinball-loss series regressions at `τ_l` and `τ_u`, rearranged so the two never cross.
pub fn fit_quantiles(fold: &Sample, cfg: &SensitivityConfig, qcfg: &QuantileConfig) -> Result<QuantileFit> {
    if fold.is_empty() {
        return Err(Error::TooFewObservations { needed: 1, got: 0 });
    }
    let mut degrees = vec![qcfg.degree_a];
    degrees.extend(std::iter::repeat_n(qcfg.degree_x, fold.dim()));
    let basis = BasisSpec::new(degrees, fold_box(fold))?.with_out_of_box(OutOfBox::Clip);
    let points = series_points(fold);
    let lo = fit_quantile(&basis, &points, fold.y(), cfg.tau_l(), qcfg.ridge, qcfg.max_iter)?;
    let hi = if cfg.gamma == 1.0 {
        lo.clone()
    } else {
        fit_quantile(&basis, &points, fold.y(), cfg.tau_u(), qcfg.ridge, qcfg.max_iter)?
    };
    let eval = |fit: &crate::series::SeriesFit, a: f64, x: &[f64]| {
        let mut p = vec![a];
        p.extend_from_slice(x);
        fit.eval(&p).unwrap_or(f64::NAN)
    };
    let (lo2, hi2) = (lo.clone(), hi.clone());
    Ok(QuantileFit::new(
        Arc::new(move |a, x: &[f64]| eval(&lo, a, x).min(eval(&hi, a, x))),
        Arc::new(move |a, x: &[f64]| eval(&lo2, a, x).max(eval(&hi2, a, x))),
        QuantileProvenance::Fitted,
    ))
}

/// Series regression of `s_j` on `(A, X)`; same basis and ridge as the outcome model.
pub fn fit_kappa(
    fold: &Sample,
    q: &QuantileFit,
    cfg: &SensitivityConfig,
    side: Side,
    outcome: &OutcomeConfig,
) -> Result<SurfaceFn> {
    let s: Vec<f64> = (0..fold.len())
        .map(|i| {
            let (a, x) = (fold.a()[i], fold.x(i));
            s_transform(fold.y()[i], q.get(side, a, x), cfg.gamma, side)
        })
        .collect();
    Ok(fit_surface(fold, &s, outcome)?.into_fn())
}

/// Everything the bound pseudo-outcomes need from the training folds.
#[derive(Clone, Debug)]
pub struct SensitivityNuisance {
    pub base: NuisanceFit,
    pub quantiles: QuantileFit,
    /// `base` with `(μ̂, m̂)` replaced by `(κ̂_l, ∫κ̂_l dP)`.
    pub lower: NuisanceFit,
    pub upper: NuisanceFit,
}

/// Fits `μ̂, π̂, p̂, q̂_j, κ̂_j` on `train`; `m̂` and `∫κ̂_j dP(x)` average over `m_fold`.
pub fn fit_sensitivity_nuisance(
    train: &Sample,
    m_fold: &Sample,
    cfg: &SensitivityConfig,
    fit: &FitConfig,
    qcfg: &QuantileConfig,
) -> Result<SensitivityNuisance> {
    let mu = fit_surface(train, train.y(), &fit.outcome)?.into_fn();
    let pi = fit_conditional_density(train, &fit.density)?.into_fn();
    let p = marginal_density(Arc::clone(&pi), covariate_rows(train));
    let m = fit_m(Arc::clone(&mu), covariate_rows(m_fold));
    let base = NuisanceFit::new(mu, pi, p, m, Provenance::Fitted).with_floor(fit.density.floor);
    let quantiles = fit_quantiles(train, cfg, qcfg)?;
    let lower = with_kappa(&base, fit_kappa(train, &quantiles, cfg, Side::Lower, &fit.outcome)?, m_fold);
    let upper = with_kappa(&base, fit_kappa(train, &quantiles, cfg, Side::Upper, &fit.outcome)?, m_fold);
    Ok(SensitivityNuisance {
        base,
        quantiles,
        lower,
        upper,
    })
}

fn with_kappa(base: &NuisanceFit, kappa: SurfaceFn, m_fold: &Sample) -> NuisanceFit {
    let bar: CurveFn = fit_m(Arc::clone(&kappa), covariate_rows(m_fold));
    base.clone().with_mu(kappa).with_m(bar)
}

/// Assembles [`SensitivityNuisance`] from given pieces.
pub fn sensitivity_nuisance_from(
    base: NuisanceFit,
    quantiles: QuantileFit,
    kappa_l: SurfaceFn,
    kappa_l_bar: CurveFn,
    kappa_u: SurfaceFn,
    kappa_u_bar: CurveFn,
) -> SensitivityNuisance {
    let lower = base.clone().with_mu(kappa_l).with_m(kappa_l_bar);
    let upper = base.clone().with_mu(kappa_u).with_m(kappa_u_bar);
    SensitivityNuisance {
        base,
        quantiles,
        lower,
        upper,
    }
}

/// Pseudo-outcomes `(φ̂_l, φ̂_u)` over an estimation fold.
pub fn bound_pseudo(
    fold: &Sample,
    nuis: &SensitivityNuisance,
    cfg: &SensitivityConfig,
) -> Result<(PseudoOutcomeSet, PseudoOutcomeSet)> {
    let tilted = |side: Side| -> Result<Sample> {
        let s: Vec<f64> = (0..fold.len())
            .map(|i| {
                let (a, x) = (fold.a()[i], fold.x(i));
                s_transform(fold.y()[i], nuis.quantiles.get(side, a, x), cfg.gamma, side)
            })
            .collect();
        Sample::new(s, fold.a().to_vec(), fold.x_rows().flatten().copied().collect(), fold.dim())
    };
    let lower = build_pseudo(&tilted(Side::Lower)?, &nuis.lower)?;
    let upper = build_pseudo(&tilted(Side::Upper)?, &nuis.upper)?;
    Ok((lower, upper))
}

#[derive(Debug, Clone)]
pub struct BoundsConfig {
    pub sensitivity: SensitivityConfig,
    pub fit: FitConfig,
    pub quantile: QuantileConfig,
    pub h: f64,
    /// Local polynomial order of the second stage. Only `p = 0` has nonnegative weights.
    pub p: usize,
    pub kernel: KernelSpec,
    pub eval: Vec<f64>,
}

impl BoundsConfig {
    pub fn new(gamma: f64, h: f64, eval: Vec<f64>) -> Result<Self> {
        Ok(Self {
            sensitivity: SensitivityConfig::new(gamma)?,
            fit: FitConfig::default(),
            quantile: QuantileConfig::default(),
            h,
            p: 0,
            kernel: KernelSpec::gaussian(),
            eval,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundsEstimate {
    pub eval: Vec<f64>,
    /// DR-Learner estimate of `θ(t)` from the same folds and second stage.
    pub point: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

/// Second-stage smoothing of `(φ̂, φ̂_l, φ̂_u)` at every evaluation point.
pub fn bounds_from_pseudo(
    point: &PseudoOutcomeSet,
    lower: &PseudoOutcomeSet,
    upper: &PseudoOutcomeSet,
    cfg: &BoundsConfig,
) -> Result<BoundsEstimate> {
    if cfg.p > 0 {
        log::warn!("local polynomial order {} has signed weights; bound ordering is not guaranteed", cfg.p);
    }
    let smooth = |set: &PseudoOutcomeSet| -> Result<Vec<f64>> {
        cfg.eval
            .iter()
            .map(|&t| dr_learner_estimate(set, t, cfg.h, cfg.p, &cfg.kernel))
            .collect()
    };
    Ok(BoundsEstimate {
        eval: cfg.eval.clone(),
        point: smooth(point)?,
        lower: smooth(lower)?,
        upper: smooth(upper)?,
    })
}

/// Cross-fitted DR-Learner estimates of `θ_l(t; γ)` and `θ_u(t; γ)`.
pub fn bounds_estimate(sample: &Sample, seed: u64, cfg: &BoundsConfig) -> Result<BoundsEstimate> {
    let sp = split(sample.len(), seed)?;
    let mut total = BoundsEstimate {
        eval: cfg.eval.clone(),
        point: vec![0.0; cfg.eval.len()],
        lower: vec![0.0; cfg.eval.len()],
        upper: vec![0.0; cfg.eval.len()],
    };
    for r in 0..3 {
        let one = (|| {
            let (train, m_fold, est) = sp.roles(r);
            let nuis = fit_sensitivity_nuisance(
                &sample.subset(train),
                &sample.subset(m_fold),
                &cfg.sensitivity,
                &cfg.fit,
                &cfg.quantile,
            )?;
            let est = sample.subset(est);
            let point = build_pseudo(&est, &nuis.base)?;
            let (lo, hi) = bound_pseudo(&est, &nuis, &cfg.sensitivity)?;
            bounds_from_pseudo(&point, &lo, &hi, cfg)
        })()
        .map_err(|e| Error::Rotation {
            rotation: r,
            source: Box::new(e),
        })?;
        for j in 0..cfg.eval.len() {
            total.point[j] += one.point[j] / 3.0;
            total.lower[j] += one.lower[j] / 3.0;
            total.upper[j] += one.upper[j] / 3.0;
        }
    }
    Ok(total)
}

/// `E{s_j(Z; q)}` for `Y ~ N(mean, sd²)`, in closed form.
pub fn gaussian_kappa(mean: f64, sd: f64, q: f64, gamma: f64, side: Side) -> f64 {
    let z = (q - mean) / sd;
    let (pdf, cdf) = (std_normal_pdf(z), std_normal_cdf(z));
    // E(Y - q)₊ and E(q - Y)₊
    let above = sd * (pdf - z * (1.0 - cdf));
    let below = sd * (z * cdf + pdf);
    match side {
        Side::Upper => q + gamma * above - below / gamma,
        Side::Lower => q + above / gamma - gamma * below,
    }
}

/// `E{s_j(Z; q)}` for `Y ~ N(mean, sd²)` by Gauss–Legendre quadrature split at the kink.
pub fn gaussian_kappa_quadrature(mean: f64, sd: f64, q: f64, gamma: f64, side: Side) -> f64 {
    let rule = GaussLegendre::new(40);
    let zq = ((q - mean) / sd).clamp(-12.0, 12.0);
    let integrand = |z: f64| std_normal_pdf(z) * s_transform(mean + sd * z, q, gamma, side);
    rule.integrate(-12.0, zq, 8, integrand) + rule.integrate(zq, 12.0, 8, integrand)
}

/// `∫ E{s_u(Z; q̂) - s_u(Z; q_u) | A = t, X = x} dP(x | A = t)` with
/// `q̂ = q_u + ε cos(2πx)` (or `q_l` for the lower side) under the simulation design.
pub fn sens_bias_oracle(truth: &Dgp, cfg: &SensitivityConfig, side: Side, eps: f64, t: f64) -> f64 {
    let tau = match side {
        Side::Lower => cfg.tau_l(),
        Side::Upper => cfg.tau_u(),
    };
    let sd = truth.y_sd;
    let offset = sd * std_normal_quantile(tau);
    truth.integrate_x_given_a(t, |x| {
        let mean = truth.xi(t, x);
        let q = mean + offset;
        let qhat = q + eps * (2.0 * std::f64::consts::PI * x).cos();
        gaussian_kappa_quadrature(mean, sd, qhat, cfg.gamma, side) - gaussian_kappa_quadrature(mean, sd, q, cfg.gamma, side)
    })
}

/// `θ_j(t; γ) = ∫ κ_j(t, x; q_j) dP(x)` under the simulation design.
pub fn population_bound(truth: &Dgp, cfg: &SensitivityConfig, side: Side, t: f64) -> f64 {
    let tau = match side {
        Side::Lower => cfg.tau_l(),
        Side::Upper => cfg.tau_u(),
    };
    let offset = truth.y_sd * std_normal_quantile(tau);
    truth.integrate_x(|x| {
        let mean = truth.xi(t, x);
        gaussian_kappa(mean, truth.y_sd, mean + offset, cfg.gamma, side)
    })
}

/// `E{φ_j(Z; w̄, κ̄, q̄, γ) | A = t}` under the simulation design, by quadrature over `x`
/// and closed-form Gaussian expectations over `Y`.
pub fn population_pseudo_mean(
    truth: &Dgp,
    cfg: &SensitivityConfig,
    side: Side,
    w_bar: &dyn Fn(f64, f64) -> f64,
    kappa_bar: &dyn Fn(f64, f64) -> f64,
    q_bar: &dyn Fn(f64, f64) -> f64,
    t: f64,
) -> f64 {
    let sd = truth.y_sd;
    let weighted = truth.integrate_x_given_a(t, |x| {
        let kappa = gaussian_kappa(truth.xi(t, x), sd, q_bar(t, x), cfg.gamma, side);
        w_bar(t, x) * (kappa - kappa_bar(t, x))
    });
    weighted + truth.integrate_x(|x| kappa_bar(t, x))
}

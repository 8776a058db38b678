//! Closed-form MSE exponents `r` (MSE ~ `n^(-r)`) for the competing estimators.

use crate::error::{Error, Result};

/// `alpha`: smoothness of the dose-response; `s`: covariate smoothness of `μ` and `π`;
/// `d`: covariate dimension. `beta` is the smoothness of `a ↦ π`; when given and below
/// `alpha`, the higher-order estimator loses its oracle guarantee.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateInputs {
    pub alpha: f64,
    pub beta: Option<f64>,
    pub s: f64,
    pub d: f64,
}

impl RateInputs {
    pub fn new(alpha: f64, s: f64, d: f64) -> Result<Self> {
        let r = Self {
            alpha,
            beta: None,
            s,
            d,
        };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        let named = [("alpha", self.alpha), ("s", self.s), ("d", self.d)];
        for (name, v) in named.into_iter().chain(self.beta.map(|b| ("beta", b))) {
            // +inf is allowed as a limit
            if !(v > 0.0) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateExponents {
    pub s: f64,
    pub oracle: f64,
    pub plugin: f64,
    pub dr: f64,
    /// Quadratic estimator with `k ~ (nh)^(2d/(d + 4s))` basis terms and bandwidth
    /// `h ~ n^(-4s/(α(4s + d) + 4s))`. The simulation tunes `(k, h)` on a grid instead.
    pub hoif2: f64,
    pub ate_minimax: f64,
    /// `min(oracle, 4s/(2s + d + 1))`: the first-order rate with isotropic `(d + 1)`-variate
    /// nuisances, the setting of the first-order oracle threshold.
    pub dr_isotropic: f64,
    /// `s < d/4`: the density-estimation term may dominate the quadratic estimator's error.
    pub density_term_may_dominate: bool,
}

pub fn rate_exponents(r: &RateInputs) -> Result<RateExponents> {
    r.validate()?;
    let RateInputs { alpha, s, d, .. } = *r;
    let oracle = if alpha.is_infinite() { 1.0 } else { 2.0 * alpha / (2.0 * alpha + 1.0) };
    let (plugin, dr, hoif_raw, ate, iso) = if s.is_infinite() {
        (1.0, 2.0, 2.0 / (1.0 + 1.0 / alpha), 2.0, 2.0)
    } else {
        let denom = 2.0 * s + s / alpha + d;
        (
            2.0 * s / denom,
            4.0 * s / denom,
            2.0 / (1.0 + d / (4.0 * s) + 1.0 / alpha),
            2.0 / (1.0 + d / (4.0 * s)),
            4.0 * s / (2.0 * s + d + 1.0),
        )
    };
    let mut hoif2 = oracle.min(hoif_raw);
    if let Some(beta) = r.beta {
        if beta < alpha {
            // smoothing bias in the treatment density is no longer negligible
            hoif2 = hoif2.min(2.0 * beta / (2.0 * beta + 1.0));
        }
    }
    Ok(RateExponents {
        s,
        oracle,
        plugin: plugin.min(oracle),
        dr: oracle.min(dr),
        hoif2,
        ate_minimax: ate.min(1.0),
        dr_isotropic: oracle.min(iso),
        density_term_may_dominate: s < d / 4.0,
    })
}

/// Smallest `s` at which `dr` reaches the oracle exponent: `αd/(2α + 1)`.
pub fn dr_threshold(alpha: f64, d: f64) -> f64 {
    alpha * d / (2.0 * alpha + 1.0)
}

/// Smallest `s` at which `dr_isotropic` reaches the oracle exponent: `(d + 1)/(2(1 + 1/α))`.
pub fn dr_isotropic_threshold(alpha: f64, d: f64) -> f64 {
    (d + 1.0) / (2.0 * (1.0 + 1.0 / alpha))
}

/// Smallest `s` at which the `α → ∞` quadratic exponent reaches 1: `d/4`.
pub fn hoif2_threshold(d: f64) -> f64 {
    d / 4.0
}

/// `lo, lo + step, …` up to `hi` (inclusive within rounding). A step larger than the
/// range yields `[lo]`.
pub fn s_grid(lo: f64, hi: f64, step: f64) -> Result<Vec<f64>> {
    if !(lo.is_finite() && hi.is_finite() && step.is_finite()) || !(step > 0.0) || hi < lo {
        return Err(Error::InvalidParameter(format!("invalid grid {lo}:{hi}:{step}")));
    }
    let count = ((hi - lo) / step + 1e-9).floor() as usize;
    Ok((0..=count).map(|i| lo + i as f64 * step).collect())
}

pub fn rate_table(alpha: f64, d: f64, grid: &[f64]) -> Result<Vec<RateExponents>> {
    grid.iter().map(|&s| rate_exponents(&RateInputs::new(alpha, s, d)?)).collect()
}

pub const RATE_HEADER: [&str; 6] = ["s", "oracle", "plugin", "dr", "hoif2", "ate_minimax"];

pub fn write_rate_csv<W: std::io::Write>(rows: &[RateExponents], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RATE_HEADER)?;
    for r in rows {
        w.write_record([r.s, r.oracle, r.plugin, r.dr, r.hoif2, r.ate_minimax].map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

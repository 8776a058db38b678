//! Doubly-robust pseudo-outcome regression with three-way sample splitting.
//!
//! Nuisances `μ̂`, `π̂` are trained on one fold, `m̂` is averaged over a second,
//! and the pseudo-outcome `φ̂ = ŵ(A, X){Y - μ̂(A, X)} + m̂(A)` is regressed on `A`
//! over the third, either by least squares on a Legendre series or by local
//! polynomial weights. Cross-fitting rotates the roles and averages.

use crate::basis::BasisSpec;
use crate::data::Sample;
use crate::dgp::Dgp;
use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::local_poly::local_poly_weights;
use crate::nuisance::{fit_nuisances, FitConfig, NuisanceFit};
use crate::quadrature::GaussLegendre;
use crate::series::{fit_least_squares, SeriesFit};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// A random partition of `0..n` into three folds whose sizes differ by at most one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ThreeWaySplit {
    folds: [Vec<usize>; 3],
    seed: u64,
}

impl ThreeWaySplit {
    pub fn fold(&self, j: usize) -> &[usize] {
        &self.folds[j % 3]
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// `(nuisance, m̂, estimation)` folds for rotation `r`.
    pub fn roles(&self, r: usize) -> (&[usize], &[usize], &[usize]) {
        (self.fold(r), self.fold(r + 1), self.fold(r + 2))
    }
}

pub fn split(n: usize, seed: u64) -> Result<ThreeWaySplit> {
    if n < 3 {
        return Err(Error::TooFewObservations { needed: 3, got: n });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut folds: [Vec<usize>; 3] = Default::default();
    for (pos, i) in order.into_iter().enumerate() {
        folds[pos % 3].push(i);
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(ThreeWaySplit { folds, seed })
}

/// Treatments and pseudo-outcomes over an estimation fold.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoOutcomeSet {
    pub a: Vec<f64>,
    pub phi: Vec<f64>,
}

impl PseudoOutcomeSet {
    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }
}

pub fn build_pseudo(fold: &Sample, nuis: &NuisanceFit) -> Result<PseudoOutcomeSet> {
    let mut phi = Vec::with_capacity(fold.len());
    for i in 0..fold.len() {
        let (a, x) = (fold.a()[i], fold.x(i));
        let pi = nuis.pi(a, x);
        if !(pi > 0.0) || !pi.is_finite() {
            return Err(Error::PositivityViolation {
                index: i,
                value: pi,
                floor: nuis.positivity_floor(),
            });
        }
        phi.push(nuis.p_marginal(a) / pi * (fold.y()[i] - nuis.mu(a, x)) + nuis.m(a));
    }
    Ok(PseudoOutcomeSet {
        a: fold.a().to_vec(),
        phi,
    })
}

/// Orthogonal-series regression of the pseudo-outcome on `A`.
#[derive(Debug, Clone)]
pub struct ErmFit {
    fit: SeriesFit,
    projected: bool,
}

impl ErmFit {
    pub fn coefficients(&self) -> &[f64] {
        self.fit.coefficients()
    }

    /// Whether the coefficients were rescaled onto the unit ball.
    pub fn projected(&self) -> bool {
        self.projected
    }

    pub fn eval(&self, t: f64) -> Result<f64> {
        self.fit.eval(&[t])
    }
}

#[derive(Debug, Clone)]
pub struct ErmConfig {
    pub k: usize,
    /// Treatment support the basis is orthonormal on.
    pub range: (f64, f64),
    /// Rescale coefficients so that `Σ c² <= 1`.
    pub unit_ball: bool,
}

impl ErmConfig {
    pub fn new(k: usize, range: (f64, f64)) -> Self {
        Self {
            k,
            range,
            unit_ball: false,
        }
    }
}

pub fn erm_series_fit(pseudo: &PseudoOutcomeSet, cfg: &ErmConfig) -> Result<ErmFit> {
    if pseudo.len() < cfg.k {
        return Err(Error::TooFewObservations {
            needed: cfg.k,
            got: pseudo.len(),
        });
    }
    let basis = BasisSpec::univariate(cfg.k, cfg.range.0, cfg.range.1)?;
    let points: Vec<Vec<f64>> = pseudo.a.iter().map(|&a| vec![a]).collect();
    let mut fit = fit_least_squares(&basis, &points, &pseudo.phi, 0.0, false)?;
    let mut projected = false;
    if cfg.unit_ball {
        let norm = fit.coefficients().iter().map(|c| c * c).sum::<f64>().sqrt();
        if norm > 1.0 {
            fit = fit.scaled(1.0 / norm);
            projected = true;
        }
    }
    Ok(ErmFit { fit, projected })
}

/// `θ̂(t) = n⁻¹ Σ W_i(t) φ̂_i` with local polynomial weights of order `p`.
pub fn dr_learner_estimate(pseudo: &PseudoOutcomeSet, t: f64, h: f64, p: usize, kernel: &KernelSpec) -> Result<f64> {
    let w = local_poly_weights(t, &pseudo.a, h, p, kernel)?;
    Ok(w.iter().zip(&pseudo.phi).map(|(w, f)| w * f).sum::<f64>() / pseudo.len() as f64)
}

#[derive(Debug, Clone)]
pub enum SecondStage {
    Erm(ErmConfig),
    LocalPoly { h: f64, p: usize, kernel: KernelSpec },
}

impl SecondStage {
    /// Second-stage estimates at each point of `eval`.
    pub fn estimate(&self, pseudo: &PseudoOutcomeSet, eval: &[f64]) -> Result<Vec<f64>> {
        match self {
            SecondStage::Erm(cfg) => {
                let fit = erm_series_fit(pseudo, cfg)?;
                eval.iter().map(|&t| fit.eval(t)).collect()
            }
            SecondStage::LocalPoly { h, p, kernel } => {
                eval.iter().map(|&t| dr_learner_estimate(pseudo, t, *h, *p, kernel)).collect()
            }
        }
    }
}

#[derive(Debug, Clone)]
pub enum NuisanceSource {
    /// Fit `μ̂, π̂, p̂` on the nuisance fold and `m̂` on the second fold.
    Fit(FitConfig),
    /// Use the given functions for every rotation.
    Fixed(NuisanceFit),
}

#[derive(Debug, Clone)]
pub struct CrossFitConfig {
    pub nuisance: NuisanceSource,
    pub second_stage: SecondStage,
    pub eval: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct CrossFitEstimate {
    pub eval: Vec<f64>,
    /// Average over the three rotations.
    pub estimate: Vec<f64>,
    pub per_rotation: Vec<Vec<f64>>,
}

/// Estimates from a single rotation of the split.
pub fn single_split(sample: &Sample, split: &ThreeWaySplit, rotation: usize, cfg: &CrossFitConfig) -> Result<Vec<f64>> {
    let (train, m_fold, est) = split.roles(rotation);
    let est = sample.subset(est);
    let nuis = match &cfg.nuisance {
        NuisanceSource::Fit(fc) => fit_nuisances(&sample.subset(train), &sample.subset(m_fold), fc)?,
        NuisanceSource::Fixed(n) => n.clone(),
    };
    let pseudo = build_pseudo(&est, &nuis)?;
    cfg.second_stage.estimate(&pseudo, &cfg.eval)
}

pub fn cross_fit(sample: &Sample, seed: u64, cfg: &CrossFitConfig) -> Result<CrossFitEstimate> {
    let split = split(sample.len(), seed)?;
    let per_rotation = (0..3)
        .map(|r| {
            single_split(sample, &split, r, cfg).map_err(|e| Error::Rotation {
                rotation: r,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let estimate = (0..cfg.eval.len())
        .map(|j| per_rotation.iter().map(|r| r[j]).sum::<f64>() / 3.0)
        .collect();
    Ok(CrossFitEstimate {
        eval: cfg.eval.clone(),
        estimate,
        per_rotation,
    })
}

/// `r̂(t) = E{φ̂(Z) | A = t} - θ(t)` under the simulation design, by quadrature over `x`:
/// `∫ ŵ(t, x){μ(t, x) - μ̂(t, x)} dP(x | A = t) + m̂(t) - θ(t)`.
///
/// The integral is evaluated on two Gauss–Legendre grids; disagreement beyond
/// `1e-10` is reported as non-convergence.
pub fn bias_oracle_rhat(nuis: &NuisanceFit, truth: &Dgp, t: f64) -> Result<f64> {
    let (coarse, fine) = ((32usize, 4usize), (64usize, 8usize));
    let integral = |nodes: usize, panels: usize| {
        let rule = GaussLegendre::new(nodes);
        let pt = rule.integrate(-1.0, 1.0, panels, |x| truth.pi(t, x) * truth.p_x(x));
        let num = rule.integrate(-1.0, 1.0, panels, |x| {
            let xs = [x];
            nuis.w(t, &xs) * (truth.xi(t, x) - nuis.mu(t, &xs)) * truth.pi(t, x) * truth.p_x(x)
        });
        num / pt
    };
    let ic = integral(coarse.0, coarse.1);
    let ifine = integral(fine.0, fine.1);
    let diff = (ic - ifine).abs();
    if !(diff <= 1e-10 * (1.0 + ifine.abs())) {
        return Err(Error::QuadratureNotConverged {
            t,
            coarse: coarse.0 * coarse.1,
            fine: fine.0 * fine.1,
            diff,
        });
    }
    Ok(ifine + nuis.m(t) - truth.theta(t))
}

/// `∫ μ̂(a, x) dP(x)` under the simulation design, i.e. an exact `m̂`.
pub fn population_m(nuis: &NuisanceFit, truth: &Dgp, a: f64) -> f64 {
    truth.integrate_x(|x| nuis.mu(a, &[x]))
}

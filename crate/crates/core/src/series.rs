//! Penalized least-squares and pinball-loss fits on a Legendre series.

use crate::basis::BasisSpec;
use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};

const SINGULAR_FLOOR: f64 = 1e-10;
const MAX_RIDGE: f64 = 1e2;

#[derive(Debug, Clone)]
pub struct SeriesFit {
    basis: BasisSpec,
    coef: Vec<f64>,
    ridge_used: f64,
    fell_back: bool,
}

impl SeriesFit {
    pub fn basis(&self) -> &BasisSpec {
        &self.basis
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coef
    }

    pub fn ridge_used(&self) -> f64 {
        self.ridge_used
    }

    /// True when the requested ridge left the design singular and a larger one was used.
    pub fn fell_back(&self) -> bool {
        self.fell_back
    }

    pub fn eval(&self, point: &[f64]) -> Result<f64> {
        let b = self.basis.eval(point)?;
        Ok(dot(&b, &self.coef))
    }

    /// The same fit with every coefficient multiplied by `factor`.
    pub fn scaled(mut self, factor: f64) -> Self {
        self.coef.iter_mut().for_each(|c| *c *= factor);
        self
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn design(basis: &BasisSpec, points: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let k = basis.size();
    let mut m = DMatrix::zeros(points.len(), k);
    let mut row = vec![0.0; k];
    for (i, p) in points.iter().enumerate() {
        basis.eval_into(p, &mut row)?;
        for (j, v) in row.iter().enumerate() {
            m[(i, j)] = *v;
        }
    }
    Ok(m)
}

fn solve_spd(gram: &DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    let min_eig = gram.clone().symmetric_eigen().eigenvalues.min();
    if !(min_eig > SINGULAR_FLOOR) {
        return None;
    }
    gram.clone().cholesky().map(|c| c.solve(rhs))
}

/// Weighted ridge solve of `(Bᵀ V B / n + λ I) c = (Bᵀ V y + extra) / n`.
fn ridge_solve(
    b: &DMatrix<f64>,
    y: &[f64],
    weights: Option<&[f64]>,
    extra: Option<&DVector<f64>>,
    ridge: f64,
) -> Option<DVector<f64>> {
    let n = b.nrows().max(1) as f64;
    let k = b.ncols();
    let bw = match weights {
        Some(w) => {
            let mut m = b.clone();
            for (i, wi) in w.iter().enumerate() {
                m.row_mut(i).scale_mut(*wi);
            }
            m
        }
        None => b.clone(),
    };
    let mut gram = bw.transpose() * b / n;
    for j in 0..k {
        gram[(j, j)] += ridge;
    }
    let mut rhs = bw.transpose() * DVector::from_column_slice(y) / n;
    if let Some(e) = extra {
        rhs += e / n;
    }
    solve_spd(&gram, &rhs)
}

/// Least squares of `y` on `b(point)` with ridge `λ`.
///
/// When `fallback` is set, a singular design is retried with a growing ridge
/// (logged); otherwise it is reported as a degenerate design.
pub fn fit_least_squares(
    basis: &BasisSpec,
    points: &[Vec<f64>],
    y: &[f64],
    ridge: f64,
    fallback: bool,
) -> Result<SeriesFit> {
    if points.is_empty() {
        return Err(Error::TooFewObservations { needed: 1, got: 0 });
    }
    let b = design(basis, points)?;
    let mut lambda = ridge.max(0.0);
    let mut fell_back = false;
    loop {
        if let Some(c) = ridge_solve(&b, y, None, None, lambda) {
            return Ok(SeriesFit {
                basis: basis.clone(),
                coef: c.iter().copied().collect(),
                ridge_used: lambda,
                fell_back,
            });
        }
        if !fallback || lambda >= MAX_RIDGE {
            return Err(Error::DegenerateDesign(format!(
                "series design with {} functions and {} rows is singular (ridge {lambda:.1e})",
                basis.size(),
                points.len()
            )));
        }
        let next = (lambda * 10.0).max(1e-8);
        log::warn!(
            "singular series design ({} functions, {} rows); retrying with ridge {next:.1e}",
            basis.size(),
            points.len()
        );
        lambda = next;
        fell_back = true;
    }
}

/// Pinball-loss (level `tau`) series regression by majorize–minimize iterations.
///
/// Each step minimizes the quadratic majorizer of the smoothed check loss
/// `ρ_τ(r) = |r|/2 + (τ - ½) r` at the current residuals.
pub fn fit_quantile(
    basis: &BasisSpec,
    points: &[Vec<f64>],
    y: &[f64],
    tau: f64,
    ridge: f64,
    max_iter: usize,
) -> Result<SeriesFit> {
    if !(0.0 < tau && tau < 1.0) {
        return Err(Error::InvalidParameter(format!("quantile level {tau} outside (0, 1)")));
    }
    let start = fit_least_squares(basis, points, y, ridge, true)?;
    let b = design(basis, points)?;
    let n = y.len();
    let scale = {
        let mean = y.iter().sum::<f64>() / n as f64;
        (y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt()
    };
    let eps = 1e-5 * (1.0 + scale);
    let tol = 1e-9 * (1.0 + scale);
    let lambda = start.ridge_used.max(1e-12);
    let ones_term = b.transpose() * DVector::from_element(n, tau - 0.5);
    let mut coef = DVector::from_vec(start.coef.clone());
    // perturbed check loss; MM decreases it monotonically
    let objective = |c: &DVector<f64>| -> f64 {
        let fitted = &b * c;
        y.iter()
            .zip(fitted.iter())
            .map(|(yi, fi)| {
                let r = yi - fi;
                0.5 * r.abs() + (tau - 0.5) * r - 0.5 * eps * (eps + r.abs()).ln()
            })
            .sum::<f64>()
            / n as f64
    };
    let mut obj = objective(&coef);
    let mut last_change = f64::INFINITY;
    for _ in 0..max_iter {
        let fitted = &b * &coef;
        let weights: Vec<f64> = y
            .iter()
            .zip(fitted.iter())
            .map(|(yi, fi)| 0.5 / (eps + (yi - fi).abs()))
            .collect();
        let next = ridge_solve(&b, y, Some(&weights), Some(&ones_term), lambda)
            .ok_or_else(|| Error::DegenerateDesign("weighted quantile design is singular".into()))?;
        last_change = (&next - &coef).amax();
        coef = next;
        let next_obj = objective(&coef);
        let stalled = (obj - next_obj).abs() <= 1e-10 * (1.0 + obj.abs());
        obj = next_obj;
        if last_change < tol || stalled {
            return Ok(SeriesFit {
                basis: basis.clone(),
                coef: coef.iter().copied().collect(),
                ridge_used: lambda,
                fell_back: start.fell_back,
            });
        }
    }
    Err(Error::QuantileNotConverged {
        iterations: max_iter,
        last_change,
    })
}

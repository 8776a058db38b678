//! Local-polynomial smoother weights.

use crate::error::{Error, Result};
use crate::kernels::{check_bandwidth, KernelSpec};
use nalgebra::{DMatrix, DVector};

/// Eigenvalue floor for the local design matrix `Q̂`.
pub const DESIGN_FLOOR: f64 = 1e-10;

/// Weights `W_i(t; A)` of the order-`p` local-polynomial fit at `t`.
///
/// `W_i = e_0ᵀ Q̂⁻¹ K_ht(A_i) s(A_i)` with `s(a) = [1, (a-t)/h, ..., ((a-t)/h)^p]`
/// and `Q̂ = n⁻¹ Σ K_ht(A_i) s(A_i) s(A_i)ᵀ`, so that the estimate is `n⁻¹ Σ W_i φ_i`
/// and `n⁻¹ Σ W_i ((A_i - t)/h)^q = δ_{q0}` for `q <= p`.
pub fn local_poly_weights(t: f64, a: &[f64], h: f64, p: usize, kernel: &KernelSpec) -> Result<Vec<f64>> {
    check_bandwidth(h)?;
    let n = a.len();
    let dim = p + 1;
    let kvals: Vec<f64> = a.iter().map(|&ai| kernel.eval((ai - t) / h) / h).collect();
    let active = kvals.iter().filter(|k| **k != 0.0).count();
    if active < dim {
        return Err(Error::DegenerateDesign(format!(
            "only {active} treatment values inside the kernel window at t = {t} (h = {h}), need {dim}"
        )));
    }
    let mut q = DMatrix::<f64>::zeros(dim, dim);
    let mut s = vec![0.0; dim];
    for (&ai, &ki) in a.iter().zip(&kvals) {
        if ki == 0.0 {
            continue;
        }
        powers((ai - t) / h, &mut s);
        for r in 0..dim {
            for c in 0..dim {
                q[(r, c)] += ki * s[r] * s[c];
            }
        }
    }
    q /= n as f64;
    let min_eig = q.clone().symmetric_eigen().eigenvalues.min();
    if !(min_eig >= DESIGN_FLOOR) {
        return Err(Error::DegenerateDesign(format!(
            "local design matrix at t = {t} (h = {h}, p = {p}) has min eigenvalue {min_eig:.3e}"
        )));
    }
    let mut e0 = DVector::zeros(dim);
    e0[0] = 1.0;
    let row = q
        .lu()
        .solve(&e0)
        .ok_or_else(|| Error::DegenerateDesign(format!("singular local design at t = {t}")))?;
    Ok(a
        .iter()
        .zip(&kvals)
        .map(|(&ai, &ki)| {
            if ki == 0.0 {
                return 0.0;
            }
            powers((ai - t) / h, &mut s);
            ki * s.iter().zip(row.iter()).map(|(x, y)| x * y).sum::<f64>()
        })
        .collect())
}

fn powers(u: f64, out: &mut [f64]) {
    let mut v = 1.0;
    for o in out.iter_mut() {
        *o = v;
        v *= u;
    }
}

/// `n⁻¹ Σ W_i(t) y_i`.
pub fn smooth_at(t: f64, a: &[f64], y: &[f64], h: f64, p: usize, kernel: &KernelSpec) -> Result<f64> {
    let w = local_poly_weights(t, a, h, p, kernel)?;
    Ok(w.iter().zip(y).map(|(w, y)| w * y).sum::<f64>() / a.len() as f64)
}

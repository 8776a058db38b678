//! The projection kernel `Π(x, y) = b(x)ᵀ Ω⁻¹ b(y)` onto `span{b}` in `L₂(g)`,
//! where `g(x) = ∫ K_ht(a) p(a, x) da`.
//!
//! `Ω` is either the empirical `𝔼ₙ{b(X) b(X)ᵀ K_ht(A)}` or a quadrature of
//! `∫ b bᵀ g` against a supplied joint density. The kernel also keeps the
//! symmetric inverse square root of `Ω`, so that `Π(x_i, x_j) = b̃_iᵀ b̃_j` with
//! whitened vectors `b̃ = Ω^{-1/2} b`.

use crate::basis::BasisSpec;
use crate::data::Sample;
use crate::error::{Error, Result};
use crate::kernels::{check_bandwidth, KernelSpec};
use crate::quadrature::{tensor_rule, GaussLegendre};
use nalgebra::{DMatrix, DVector};

pub const GRAM_FLOOR: f64 = 1e-10;

/// Analytic joint density `p(a, x)` used to form `Ω` by quadrature.
pub struct JointDensity<'a> {
    pub density: &'a dyn Fn(f64, &[f64]) -> f64,
    /// Support of the treatment.
    pub a_range: (f64, f64),
    /// Quadrature nodes per panel and panels per axis.
    pub nodes: usize,
    pub panels: usize,
}

pub enum GramMode<'a> {
    Empirical,
    Quadrature(JointDensity<'a>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GramSource {
    Empirical,
    Quadrature,
    Supplied,
}

#[derive(Debug, Clone)]
pub struct ProjectionKernel {
    basis: BasisSpec,
    omega: DMatrix<f64>,
    omega_inv: DMatrix<f64>,
    whitener: DMatrix<f64>,
    source: GramSource,
    /// Quadrature points with weights `w · g(x)`; only in quadrature mode.
    weighted_nodes: Vec<(Vec<f64>, f64)>,
}

/// Builds `Π` at treatment point `t` with bandwidth `h`.
pub fn build_projection(
    sample: &Sample,
    basis: &BasisSpec,
    kernel: &KernelSpec,
    h: f64,
    t: f64,
    mode: GramMode<'_>,
) -> Result<ProjectionKernel> {
    match mode {
        GramMode::Empirical => ProjectionKernel::empirical(sample, basis, kernel, h, t),
        GramMode::Quadrature(d) => ProjectionKernel::quadrature(basis, kernel, h, t, &d),
    }
}

impl ProjectionKernel {
    pub fn empirical(sample: &Sample, basis: &BasisSpec, kernel: &KernelSpec, h: f64, t: f64) -> Result<Self> {
        check_bandwidth(h)?;
        let k = basis.size();
        let n = sample.len();
        if k > 0 && n < k {
            return Err(Error::IllConditionedGram {
                k,
                n,
                h,
                min_eig: 0.0,
                floor: GRAM_FLOOR,
            });
        }
        let mut omega = DMatrix::<f64>::zeros(k, k);
        let mut b = vec![0.0; k];
        for (i, x) in sample.x_rows().enumerate() {
            let kv = kernel.eval((sample.a()[i] - t) / h) / h;
            if kv == 0.0 || k == 0 {
                continue;
            }
            basis.eval_into(x, &mut b)?;
            for r in 0..k {
                let br = kv * b[r];
                for c in r..k {
                    omega[(r, c)] += br * b[c];
                }
            }
        }
        symmetrize_upper(&mut omega);
        if n > 0 {
            omega /= n as f64;
        }
        Self::finish(basis.clone(), omega, GramSource::Empirical, Vec::new(), n, h)
    }

    pub fn quadrature(basis: &BasisSpec, kernel: &KernelSpec, h: f64, t: f64, joint: &JointDensity<'_>) -> Result<Self> {
        check_bandwidth(h)?;
        let k = basis.size();
        let rule = GaussLegendre::new(joint.nodes.max(2));
        let (alo, ahi) = joint.a_range;
        // restrict the a-integral to the kernel window when compact
        let (lo, hi) = match kernel.support() {
            Some(s) => ((t - s * h).max(alo), (t + s * h).min(ahi)),
            None => (alo, ahi),
        };
        let a_nodes = if lo < hi { rule.composite(lo, hi, joint.panels) } else { Vec::new() };
        let x_nodes = tensor_rule(&rule, basis.ranges(), joint.panels);
        let mut omega = DMatrix::<f64>::zeros(k, k);
        let mut weighted = Vec::with_capacity(x_nodes.len());
        let mut b = vec![0.0; k];
        for (x, wx) in x_nodes {
            let g: f64 = a_nodes
                .iter()
                .map(|&(a, wa)| wa * kernel.eval((a - t) / h) / h * (joint.density)(a, &x))
                .sum();
            basis.eval_into(&x, &mut b)?;
            let wg = wx * g;
            for r in 0..k {
                for c in r..k {
                    omega[(r, c)] += wg * b[r] * b[c];
                }
            }
            weighted.push((x, wg));
        }
        symmetrize_upper(&mut omega);
        Self::finish(basis.clone(), omega, GramSource::Quadrature, weighted, 0, h)
    }

    /// Wraps an explicitly supplied Gram matrix.
    pub fn from_gram(basis: BasisSpec, omega: DMatrix<f64>) -> Result<Self> {
        if omega.nrows() != basis.size() || omega.ncols() != basis.size() {
            return Err(Error::InvalidParameter(format!(
                "Gram matrix is {}x{}, basis has {} functions",
                omega.nrows(),
                omega.ncols(),
                basis.size()
            )));
        }
        Self::finish(basis, omega, GramSource::Supplied, Vec::new(), 0, f64::NAN)
    }

    fn finish(
        basis: BasisSpec,
        omega: DMatrix<f64>,
        source: GramSource,
        weighted_nodes: Vec<(Vec<f64>, f64)>,
        n: usize,
        h: f64,
    ) -> Result<Self> {
        let k = basis.size();
        if k == 0 {
            return Ok(Self {
                basis,
                omega: DMatrix::zeros(0, 0),
                omega_inv: DMatrix::zeros(0, 0),
                whitener: DMatrix::zeros(0, 0),
                source,
                weighted_nodes,
            });
        }
        let eig = omega.clone().symmetric_eigen();
        let min_eig = eig.eigenvalues.min();
        if !(min_eig > GRAM_FLOOR) {
            return Err(Error::IllConditionedGram {
                k,
                n,
                h,
                min_eig,
                floor: GRAM_FLOOR,
            });
        }
        let inv_vals = eig.eigenvalues.map(|v| 1.0 / v);
        let inv_sqrt = eig.eigenvalues.map(|v| 1.0 / v.sqrt());
        let q = &eig.eigenvectors;
        let omega_inv = q * DMatrix::from_diagonal(&inv_vals) * q.transpose();
        let whitener = q * DMatrix::from_diagonal(&inv_sqrt) * q.transpose();
        Ok(Self {
            basis,
            omega,
            omega_inv: symmetrized(omega_inv),
            whitener: symmetrized(whitener),
            source,
            weighted_nodes,
        })
    }

    pub fn basis(&self) -> &BasisSpec {
        &self.basis
    }

    pub fn size(&self) -> usize {
        self.basis.size()
    }

    pub fn omega(&self) -> &DMatrix<f64> {
        &self.omega
    }

    pub fn omega_inv(&self) -> &DMatrix<f64> {
        &self.omega_inv
    }

    pub fn source(&self) -> GramSource {
        self.source
    }

    /// `Π(x_i, x_j)`.
    pub fn eval(&self, xi: &[f64], xj: &[f64]) -> Result<f64> {
        if self.size() == 0 {
            return Ok(0.0);
        }
        let bi = DVector::from_vec(self.basis.eval(xi)?);
        let bj = DVector::from_vec(self.basis.eval(xj)?);
        Ok(self.quadratic(&bi, &bj))
    }

    /// `b_iᵀ Ω⁻¹ b_j`, symmetric in the two arguments.
    pub fn quadratic(&self, bi: &DVector<f64>, bj: &DVector<f64>) -> f64 {
        let u = &self.omega_inv * bi;
        let v = &self.omega_inv * bj;
        0.5 * (u.dot(bj) + v.dot(bi))
    }

    /// Symmetric inverse square root `Ω^{-1/2}`.
    pub fn whitener(&self) -> &DMatrix<f64> {
        &self.whitener
    }

    /// `Ω^{-1/2} b(x)`.
    pub fn whiten(&self, x: &[f64]) -> Result<Vec<f64>> {
        if self.size() == 0 {
            return Ok(Vec::new());
        }
        let b = DVector::from_vec(self.basis.eval(x)?);
        Ok((&self.whitener * b).iter().copied().collect())
    }

    /// Coefficients `β*` of the `L₂(g)` projection of `f` onto `span{b}`, so that
    /// `Π(f)(x) = b(x)ᵀ β*`. Needs quadrature mode.
    pub fn project_coefficients(&self, f: &dyn Fn(&[f64]) -> f64) -> Result<Vec<f64>> {
        if self.source != GramSource::Quadrature {
            return Err(Error::InvalidParameter(
                "function projection requires a quadrature-mode kernel".into(),
            ));
        }
        let k = self.size();
        let mut rhs = DVector::zeros(k);
        let mut b = vec![0.0; k];
        for (x, wg) in &self.weighted_nodes {
            self.basis.eval_into(x, &mut b)?;
            let fx = f(x);
            for r in 0..k {
                rhs[r] += wg * b[r] * fx;
            }
        }
        Ok((&self.omega_inv * rhs).iter().copied().collect())
    }

    /// `Π(f)(x) = ∫ Π(x, y) f(y) g(y) dy`.
    pub fn project_at(&self, coefficients: &[f64], x: &[f64]) -> Result<f64> {
        let b = self.basis.eval(x)?;
        Ok(b.iter().zip(coefficients).map(|(a, c)| a * c).sum())
    }
}

fn symmetrize_upper(m: &mut DMatrix<f64>) {
    let k = m.nrows();
    for r in 0..k {
        for c in 0..r {
            m[(r, c)] = m[(c, r)];
        }
    }
}

fn symmetrized(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

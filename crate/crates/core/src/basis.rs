//! Tensor-product Legendre bases, orthonormal under the uniform distribution on a box.

use crate::error::{Error, Result};

/// `√(2j+1) P_j(u)` for `j < k`, written into `out`.
///
/// These are orthonormal under Uniform(-1, 1): `½∫ b_i b_j du = δ_ij`.
pub fn normalized_legendre(u: f64, k: usize, out: &mut [f64]) {
    debug_assert!(out.len() >= k);
    if k == 0 {
        return;
    }
    let mut p_prev = 1.0;
    out[0] = 1.0;
    if k == 1 {
        return;
    }
    let mut p = u;
    out[1] = 3f64.sqrt() * u;
    for (j, slot) in out.iter_mut().enumerate().take(k).skip(2) {
        let jf = j as f64;
        let next = ((2.0 * jf - 1.0) * u * p - (jf - 1.0) * p_prev) / jf;
        p_prev = p;
        p = next;
        *slot = (2.0 * jf + 1.0).sqrt() * p;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OutOfBox {
    #[default]
    Error,
    Clip,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BasisSpec {
    degrees: Vec<usize>,
    ranges: Vec<(f64, f64)>,
    out_of_box: OutOfBox,
}

impl BasisSpec {
    pub fn new(degrees: Vec<usize>, ranges: Vec<(f64, f64)>) -> Result<Self> {
        if degrees.len() != ranges.len() {
            return Err(Error::InvalidParameter(format!(
                "basis has {} degree entries but {} ranges",
                degrees.len(),
                ranges.len()
            )));
        }
        if let Some((lo, hi)) = ranges.iter().find(|(lo, hi)| !(lo < hi) || !lo.is_finite() || !hi.is_finite()) {
            return Err(Error::InvalidParameter(format!("invalid basis range [{lo}, {hi}]")));
        }
        Ok(Self {
            degrees,
            ranges,
            out_of_box: OutOfBox::Error,
        })
    }

    /// One-dimensional basis with `k` terms on `[lo, hi]`.
    pub fn univariate(k: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![k], vec![(lo, hi)])
    }

    /// Same number of terms `k` in every coordinate.
    pub fn tensor(k: usize, ranges: Vec<(f64, f64)>) -> Result<Self> {
        Self::new(vec![k; ranges.len()], ranges)
    }

    pub fn with_out_of_box(mut self, policy: OutOfBox) -> Self {
        self.out_of_box = policy;
        self
    }

    pub fn dim(&self) -> usize {
        self.degrees.len()
    }

    /// Total number of basis functions, `∏ k_j`.
    pub fn size(&self) -> usize {
        self.degrees.iter().product()
    }

    pub fn degrees(&self) -> &[usize] {
        &self.degrees
    }

    pub fn ranges(&self) -> &[(f64, f64)] {
        &self.ranges
    }

    /// Affine map of coordinate `j` onto `[-1, 1]`, honouring the out-of-box policy.
    fn rescale(&self, j: usize, v: f64) -> Result<f64> {
        let (lo, hi) = self.ranges[j];
        let tol = 1e-12 * (hi - lo);
        let v = if v < lo - tol || v > hi + tol {
            match self.out_of_box {
                OutOfBox::Error => {
                    return Err(Error::OutOfDomain {
                        coord: j,
                        value: v,
                        lo,
                        hi,
                    })
                }
                OutOfBox::Clip => v.clamp(lo, hi),
            }
        } else {
            v
        };
        Ok(((2.0 * v - lo - hi) / (hi - lo)).clamp(-1.0, 1.0))
    }

    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.size()];
        self.eval_into(x, &mut out)?;
        Ok(out)
    }

    /// Writes `b(x)` into `out` (length `size()`); first coordinate varies slowest.
    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::InvalidParameter(format!(
                "point has {} coordinates, basis expects {}",
                x.len(),
                self.dim()
            )));
        }
        let size = self.size();
        if size == 0 {
            return Ok(());
        }
        let mut factors: Vec<Vec<f64>> = Vec::with_capacity(self.dim());
        for (j, &k) in self.degrees.iter().enumerate() {
            let u = self.rescale(j, x[j])?;
            let mut f = vec![0.0; k];
            normalized_legendre(u, k, &mut f);
            factors.push(f);
        }
        out[0] = 1.0;
        let mut len = 1;
        for f in &factors {
            // expand in place from the back so earlier coordinates stay slowest
            for i in (0..len).rev() {
                let base = out[i];
                for (m, fm) in f.iter().enumerate().rev() {
                    out[i * f.len() + m] = base * fm;
                }
            }
            len *= f.len();
        }
        Ok(())
    }
}

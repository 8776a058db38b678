//! Higher-order influence-function estimator of `θ(t)`:
//! `θ̂(t) = ℙₙ f̂₀ + Σ_{j=2}^m 𝕌ₙ φ̂_j`.
//!
//! The correction kernels are chains
//! `f₁(Z_{i₁}) Π_{i₁i₂} K(A_{i₂}) Π_{i₂i₃} ⋯ Π_{i_{L-1}i_L} f₂(Z_{i_L})`, and
//! `φ_j` is the alternating sum over which of the middle positions are kept:
//! `φ_j = Σ_{S ⊆ {2..j-1}} (-1)^{|S|+1} chain(1, S, j)`.
//!
//! `𝕌ₙ` averages over ordered tuples of distinct indices. Besides direct
//! enumeration, the chain sums are computed from whitened basis vectors
//! `b̃_i = Ω̂^{-1/2} b(X_i)` (so `Π_ij = b̃_iᵀ b̃_j`): unrestricted sums factor into
//! small tensor contractions, and Möbius inversion over set partitions of the
//! positions removes the coincident-index terms.

use crate::basis::{BasisSpec, OutOfBox};
use crate::data::Sample;
use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::nuisance::{fit_nuisances, FitConfig, NuisanceFit};
use crate::projection::ProjectionKernel;
use nalgebra::{DMatrix, DVector};

pub const MAX_ORDER: usize = 4;

/// Per-observation ingredients.
#[derive(Debug, Clone, PartialEq)]
pub struct HoifParts {
    pub f0: Vec<f64>,
    pub f1: Vec<f64>,
    pub f2: Vec<f64>,
    /// `K_ht(A_i)`.
    pub kern: Vec<f64>,
    /// Basis images `b(X_i)`.
    pub b: Vec<Vec<f64>>,
}

impl HoifParts {
    pub fn from_arrays(f0: Vec<f64>, f1: Vec<f64>, f2: Vec<f64>, kern: Vec<f64>, b: Vec<Vec<f64>>) -> Result<Self> {
        let n = f1.len();
        if f0.len() != n || f2.len() != n || kern.len() != n || b.len() != n {
            return Err(Error::InvalidParameter("HOIF parts must all have the same length".into()));
        }
        Ok(Self { f0, f1, f2, kern, b })
    }

    pub fn len(&self) -> usize {
        self.f1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.f1.is_empty()
    }

    /// Rows `Ω^{-1/2} b(X_i)`.
    pub fn whitened(&self, proj: &ProjectionKernel) -> DMatrix<f64> {
        let k = proj.size();
        let n = self.len();
        if k == 0 {
            return DMatrix::zeros(n, 0);
        }
        let braw = DMatrix::from_fn(n, k, |i, c| self.b[i][c]);
        braw * proj.whitener()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UMode {
    #[default]
    MatrixChain,
    Naive,
}

#[derive(Debug, Clone)]
pub struct HoifConfig {
    pub t: f64,
    pub h: f64,
    /// Legendre terms per covariate; the tensor basis has `k^d` functions.
    pub k: usize,
    pub m: usize,
    pub kernel: KernelSpec,
    /// Box for the covariate basis; defaults to the fold's covariate ranges.
    pub x_ranges: Option<Vec<(f64, f64)>>,
    pub mode: UMode,
}

impl HoifConfig {
    pub fn new(t: f64, h: f64, k: usize, m: usize) -> Self {
        Self {
            t,
            h,
            k,
            m,
            kernel: KernelSpec::gaussian(),
            x_ranges: None,
            mode: UMode::MatrixChain,
        }
    }

    pub fn basis_for(&self, fold: &Sample) -> Result<BasisSpec> {
        let ranges = match &self.x_ranges {
            Some(r) => r.clone(),
            None => fold
                .covariate_ranges()
                .into_iter()
                .map(|(lo, hi)| if hi > lo { (lo, hi) } else { (lo - 0.5, hi + 0.5) })
                .collect(),
        };
        Ok(BasisSpec::tensor(self.k, ranges)?.with_out_of_box(OutOfBox::Clip))
    }
}

fn checked_pi(nuis: &NuisanceFit, a: f64, x: &[f64], index: usize) -> Result<f64> {
    let v = nuis.pi(a, x);
    if !(v >= nuis.positivity_floor()) || !v.is_finite() {
        return Err(Error::PositivityViolation {
            index,
            value: v,
            floor: nuis.positivity_floor(),
        });
    }
    Ok(v)
}

pub fn compute_parts(fold: &Sample, nuis: &NuisanceFit, basis: &BasisSpec, cfg: &HoifConfig) -> Result<HoifParts> {
    let n = fold.len();
    let (mut f0, mut f1, mut f2, mut kern, mut b) = (
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
    );
    for i in 0..n {
        let (y, a, x) = (fold.y()[i], fold.a()[i], fold.x(i));
        let k = cfg.kernel.localized(cfg.h, cfg.t, a)?;
        let mu_t = nuis.mu(cfg.t, x);
        let pi_t = checked_pi(nuis, cfg.t, x, i)?;
        let pi_a = checked_pi(nuis, a, x, i)?;
        f0.push(k * (y - mu_t) / pi_t + mu_t);
        f1.push(k * (y - nuis.mu(a, x)));
        f2.push(k / pi_a - 1.0);
        kern.push(k);
        b.push(basis.eval(x)?);
    }
    HoifParts::from_arrays(f0, f1, f2, kern, b)
}

/// Direct evaluator of `φ_j` on index tuples into a [`HoifParts`].
#[derive(Debug, Clone)]
pub struct PhiKernel<'a> {
    j: usize,
    parts: &'a HoifParts,
    pi: DMatrix<f64>,
}

impl<'a> PhiKernel<'a> {
    pub fn new(parts: &'a HoifParts, proj: &ProjectionKernel, j: usize) -> Result<Self> {
        if !(2..=MAX_ORDER).contains(&j) {
            return Err(Error::InvalidParameter(format!("kernel order {j} outside 2..={MAX_ORDER}")));
        }
        let n = parts.len();
        let pi = if proj.size() == 0 {
            DMatrix::zeros(n, n)
        } else {
            let bs: Vec<DVector<f64>> = parts.b.iter().map(|v| DVector::from_column_slice(v)).collect();
            DMatrix::from_fn(n, n, |r, c| proj.quadratic(&bs[r], &bs[c]))
        };
        Ok(Self { j, parts, pi })
    }

    pub fn order(&self) -> usize {
        self.j
    }

    pub fn pi(&self, i: usize, l: usize) -> f64 {
        self.pi[(i, l)]
    }

    fn chain(&self, nodes: &[usize]) -> f64 {
        let last = nodes.len() - 1;
        let mut v = self.parts.f1[nodes[0]];
        for w in 1..=last {
            v *= self.pi[(nodes[w - 1], nodes[w])];
            if w < last {
                v *= self.parts.kern[nodes[w]];
            }
        }
        v * self.parts.f2[nodes[last]]
    }

    /// `φ_j(Z_{i₁}, …, Z_{i_j})`; repeated indices are allowed.
    pub fn value_at(&self, idx: &[usize]) -> f64 {
        assert_eq!(idx.len(), self.j, "tuple length must match kernel order");
        let middle = self.j - 2;
        let mut total = 0.0;
        let mut nodes = Vec::with_capacity(self.j);
        for mask in 0..(1usize << middle) {
            nodes.clear();
            nodes.push(idx[0]);
            for (q, &i) in idx[1..self.j - 1].iter().enumerate() {
                if mask & (1 << q) != 0 {
                    nodes.push(i);
                }
            }
            nodes.push(idx[self.j - 1]);
            let sign = if mask.count_ones() % 2 == 0 { -1.0 } else { 1.0 };
            total += sign * self.chain(&nodes);
        }
        total
    }

    /// `φ_j` on a tuple of distinct indices.
    pub fn eval(&self, idx: &[usize]) -> Result<f64> {
        let n = self.parts.len();
        let distinct = idx.iter().enumerate().all(|(p, i)| *i < n && !idx[..p].contains(i));
        if idx.len() != self.j || !distinct {
            return Err(Error::InvalidTuple(idx.to_vec()));
        }
        Ok(self.value_at(idx))
    }
}

/// Falling factorial `n (n-1) ⋯ (n-j+1)`.
fn falling(n: usize, j: usize) -> f64 {
    (0..j).map(|r| (n - r) as f64).product()
}

fn binom(n: usize, r: usize) -> f64 {
    (0..r).map(|q| (n - q) as f64 / (q + 1) as f64).product()
}

/// Average of `φ_j` over ordered tuples of distinct indices.
pub fn u_statistic(parts: &HoifParts, proj: &ProjectionKernel, j: usize, mode: UMode) -> Result<f64> {
    let n = parts.len();
    if n < j {
        return Err(Error::TooFewObservations { needed: j, got: n });
    }
    if !(2..=MAX_ORDER).contains(&j) {
        return Err(Error::InvalidParameter(format!("U-statistic order {j} outside 2..={MAX_ORDER}")));
    }
    match mode {
        UMode::Naive => {
            let phi = PhiKernel::new(parts, proj, j)?;
            Ok(naive_sum(&phi, n, j) / falling(n, j))
        }
        UMode::MatrixChain => {
            let bt = parts.whitened(proj);
            // 𝕌ₙ φ_j = Σ_s C(j-2, s) (-1)^{s+1} 𝕌ₙ chain_{s+2}
            let mut total = 0.0;
            for s in 0..=j - 2 {
                let len = s + 2;
                let sign = if s % 2 == 0 { -1.0 } else { 1.0 };
                total += sign * binom(j - 2, s) * distinct_chain_sum(parts, &bt, len) / falling(n, len);
            }
            Ok(total)
        }
    }
}

fn naive_sum(phi: &PhiKernel<'_>, n: usize, j: usize) -> f64 {
    let mut idx = vec![0usize; j];
    let mut total = 0.0;
    fn rec(phi: &PhiKernel<'_>, n: usize, depth: usize, idx: &mut Vec<usize>, total: &mut f64) {
        if depth == idx.len() {
            *total += phi.value_at(idx);
            return;
        }
        for i in 0..n {
            if idx[..depth].contains(&i) {
                continue;
            }
            idx[depth] = i;
            rec(phi, n, depth + 1, idx, total);
        }
    }
    rec(phi, n, 0, &mut idx, &mut total);
    total
}

/// Set partitions of `0..len` as restricted-growth strings.
fn set_partitions(len: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = vec![0usize; len];
    fn rec(p: usize, max: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if p == cur.len() {
            out.push(cur.clone());
            return;
        }
        for b in 0..=max + 1 {
            cur[p] = b;
            rec(p + 1, max.max(b), cur, out);
        }
    }
    if len > 0 {
        rec(1, 0, &mut cur, &mut out);
    }
    out
}

/// `Σ` over distinct `(i₁, …, i_len)` of the chain with `len` nodes.
fn distinct_chain_sum(parts: &HoifParts, bt: &DMatrix<f64>, len: usize) -> f64 {
    let n = parts.len();
    let k = bt.ncols();
    if k == 0 {
        return 0.0;
    }
    let sqnorm: Vec<f64> = (0..n).map(|i| bt.row(i).norm_squared()).collect();
    let node_weight = |p: usize, i: usize| {
        if p == 0 {
            parts.f1[i]
        } else if p == len - 1 {
            parts.f2[i]
        } else {
            parts.kern[i]
        }
    };
    let mut total = 0.0;
    for part in set_partitions(len) {
        let blocks = part.iter().max().map_or(0, |m| m + 1);
        let mut sizes = vec![0usize; blocks];
        for &b in &part {
            sizes[b] += 1;
        }
        // ∏ (-1)^{|B|-1} (|B|-1)!
        let coef: f64 = sizes
            .iter()
            .map(|&s| {
                let f: f64 = (1..s).map(|v| v as f64).product();
                if s % 2 == 0 {
                    -f
                } else {
                    f
                }
            })
            .product();
        let mut weights = vec![vec![1.0; n]; blocks];
        for (p, &b) in part.iter().enumerate() {
            for (i, w) in weights[b].iter_mut().enumerate() {
                *w *= node_weight(p, i);
            }
        }
        let mut incident: Vec<Vec<usize>> = vec![Vec::new(); blocks];
        let mut edges = 0;
        for p in 0..len - 1 {
            let (u, v) = (part[p], part[p + 1]);
            if u == v {
                for (i, w) in weights[u].iter_mut().enumerate() {
                    *w *= sqnorm[i];
                }
            } else {
                incident[u].push(edges);
                incident[v].push(edges);
                edges += 1;
            }
        }
        // T_B[c_1, …, c_deg] = Σ_i w_B(i) ∏_r b̃_{i, c_r}
        let tensors: Vec<Vec<f64>> = (0..blocks)
            .map(|b| {
                let deg = incident[b].len();
                let size = k.pow(deg as u32);
                let mut t = vec![0.0; size];
                for i in 0..n {
                    let w = weights[b][i];
                    if w == 0.0 {
                        continue;
                    }
                    for (flat, slot) in t.iter_mut().enumerate() {
                        let mut rem = flat;
                        let mut v = w;
                        for _ in 0..deg {
                            v *= bt[(i, rem % k)];
                            rem /= k;
                        }
                        *slot += v;
                    }
                }
                t
            })
            .collect();
        let assignments = k.pow(edges as u32);
        let mut s = 0.0;
        let mut channel = vec![0usize; edges];
        for flat in 0..assignments {
            let mut rem = flat;
            for c in channel.iter_mut() {
                *c = rem % k;
                rem /= k;
            }
            let mut v = 1.0;
            for b in 0..blocks {
                let mut idx = 0;
                let mut stride = 1;
                for &e in &incident[b] {
                    idx += channel[e] * stride;
                    stride *= k;
                }
                v *= tensors[b][idx];
            }
            s += v;
        }
        total += coef * s;
    }
    total
}

#[derive(Debug, Clone, PartialEq)]
pub struct HoifEstimate {
    pub estimate: f64,
    /// `ℙₙ f̂₀`, the first-order estimate.
    pub first_order: f64,
    /// `𝕌ₙ φ̂_j` for `j = 2..=m`.
    pub corrections: Vec<f64>,
}

/// Estimate from precomputed parts; `Π` is built from `𝔼ₙ{b bᵀ K_ht(A)}` over the same fold.
pub fn hoif_from_parts(parts: &HoifParts, proj: &ProjectionKernel, m: usize, mode: UMode) -> Result<HoifEstimate> {
    if !(1..=MAX_ORDER).contains(&m) {
        return Err(Error::InvalidParameter(format!("HOIF order {m} outside 1..={MAX_ORDER}")));
    }
    if parts.is_empty() {
        return Err(Error::TooFewObservations { needed: 1, got: 0 });
    }
    let first_order = parts.f0.iter().sum::<f64>() / parts.len() as f64;
    let mut estimate = first_order;
    let mut corrections = Vec::with_capacity(m.saturating_sub(1));
    for j in 2..=m {
        let u = if proj.size() == 0 {
            0.0
        } else {
            u_statistic(parts, proj, j, mode)?
        };
        estimate += u;
        corrections.push(u);
    }
    Ok(HoifEstimate {
        estimate,
        first_order,
        corrections,
    })
}

pub fn hoif_estimate(fold: &Sample, nuis: &NuisanceFit, cfg: &HoifConfig) -> Result<HoifEstimate> {
    let basis = cfg.basis_for(fold)?;
    let parts = compute_parts(fold, nuis, &basis, cfg)?;
    let proj = if cfg.m >= 2 {
        ProjectionKernel::empirical(fold, &basis, &cfg.kernel, cfg.h, cfg.t)?
    } else {
        ProjectionKernel::from_gram(BasisSpec::tensor(0, vec![(0.0, 1.0); fold.dim()])?, DMatrix::zeros(0, 0))?
    };
    hoif_from_parts(&parts, &proj, cfg.m, cfg.mode)
}

/// Cross-fitted estimates on observed data. In rotation `r`, nuisances are
/// trained on fold `r` and the estimator runs on the two remaining folds; the
/// three rotations are averaged. `template.t` is replaced by each point of `eval`.
pub fn hoif_cross_fit(
    sample: &Sample,
    seed: u64,
    fit: &FitConfig,
    template: &HoifConfig,
    eval: &[f64],
) -> Result<Vec<f64>> {
    let sp = crate::pseudo::split(sample.len(), seed)?;
    let mut total = vec![0.0; eval.len()];
    for r in 0..3 {
        let one = (|| -> Result<Vec<f64>> {
            let (train, a, b) = sp.roles(r);
            let mut rest: Vec<usize> = a.iter().chain(b).copied().collect();
            rest.sort_unstable();
            let est = sample.subset(&rest);
            // m̂ is not used by this estimator
            let nuis = fit_nuisances(&sample.subset(train), &est, fit)?;
            eval.iter()
                .map(|&t| {
                    let cfg = HoifConfig { t, ..template.clone() };
                    hoif_estimate(&est, &nuis, &cfg).map(|e| e.estimate)
                })
                .collect()
        })()
        .map_err(|e| Error::Rotation {
            rotation: r,
            source: Box::new(e),
        })?;
        for (acc, v) in total.iter_mut().zip(one) {
            *acc += v / 3.0;
        }
    }
    Ok(total)
}

//! Gauss–Legendre quadrature, plain and composite.

use std::f64::consts::PI;

/// Nodes and weights of an `n`-point Gauss–Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n > 0, "Gauss-Legendre rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            // Tricomi initial guess, refined by Newton on P_n.
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Nodes and weights mapped onto `[lo, hi]` and split into `panels` equal pieces.
    pub fn composite(&self, lo: f64, hi: f64, panels: usize) -> Vec<(f64, f64)> {
        let panels = panels.max(1);
        let width = (hi - lo) / panels as f64;
        let mut out = Vec::with_capacity(panels * self.len());
        for p in 0..panels {
            let a = lo + width * p as f64;
            let half = 0.5 * width;
            let mid = a + half;
            for (x, w) in self.nodes.iter().zip(&self.weights) {
                out.push((mid + half * x, half * w));
            }
        }
        out
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, lo: f64, hi: f64, panels: usize, mut f: F) -> f64 {
        self.composite(lo, hi, panels)
            .into_iter()
            .map(|(x, w)| w * f(x))
            .sum()
    }
}

/// P_n(x) and P_n'(x) by the three-term recurrence.
fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Tensor-product rule over a box, as flat `(point, weight)` pairs.
pub fn tensor_rule(rule: &GaussLegendre, ranges: &[(f64, f64)], panels: usize) -> Vec<(Vec<f64>, f64)> {
    let axes: Vec<Vec<(f64, f64)>> = ranges
        .iter()
        .map(|&(lo, hi)| rule.composite(lo, hi, panels))
        .collect();
    let mut out: Vec<(Vec<f64>, f64)> = vec![(Vec::with_capacity(ranges.len()), 1.0)];
    for axis in &axes {
        let mut next = Vec::with_capacity(out.len() * axis.len());
        for (pt, w) in &out {
            for &(x, wx) in axis {
                let mut p = pt.clone();
                p.push(x);
                next.push((p, w * wx));
            }
        }
        out = next;
    }
    out
}

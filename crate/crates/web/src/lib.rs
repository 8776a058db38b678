//! Browser bindings. Every export returns a JSON string so the page needs no glue beyond `JSON.parse`.

use drcurve::dgp::Dgp;
use drcurve::hoif::{hoif_estimate, HoifConfig};
use drcurve::kernels::KernelSpec;
use drcurve::nuisance::{covariate_rows, simulated_nuisances, SimulatedNuisanceConfig};
use drcurve::pseudo::{build_pseudo, dr_learner_estimate};
use drcurve::rates::{rate_table, s_grid};
use drcurve::sensitivity::{bounds_estimate, BoundsConfig};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use wasm_bindgen::prelude::*;

const MAX_N: usize = 5000;

#[derive(Debug, Serialize, PartialEq)]
pub struct RateRow {
    pub s: f64,
    pub oracle: f64,
    pub plugin: f64,
    pub dr: f64,
    pub hoif2: f64,
    pub ate_minimax: f64,
}

pub fn rate_rows(alpha: f64, dim: f64, lo: f64, hi: f64, step: f64) -> Result<Vec<RateRow>, String> {
    let grid = s_grid(lo, hi, step).map_err(|e| e.to_string())?;
    let rows = rate_table(alpha, dim, &grid).map_err(|e| e.to_string())?;
    Ok(rows
        .into_iter()
        .map(|r| RateRow {
            s: r.s,
            oracle: r.oracle,
            plugin: r.plugin,
            dr: r.dr,
            hoif2: r.hoif2,
            ate_minimax: r.ate_minimax,
        })
        .collect())
}

#[derive(Debug, Serialize, PartialEq)]
pub struct Curves {
    pub t: Vec<f64>,
    pub truth: Vec<f64>,
    pub oracle_dr: Vec<f64>,
    pub dr_learner: Vec<f64>,
    pub hoif1: Vec<f64>,
    pub hoif2: Vec<f64>,
}

fn grid(points: usize) -> Vec<f64> {
    (0..points).map(|i| -0.8 + 1.6 * i as f64 / (points - 1) as f64).collect()
}

fn check(n: usize, h: f64) -> Result<(), String> {
    if !(30..=MAX_N).contains(&n) {
        return Err(format!("n must lie in 30..={MAX_N}"));
    }
    if !(h > 0.0 && h.is_finite()) {
        return Err("bandwidth must be positive".into());
    }
    Ok(())
}

/// Estimates on one simulated sample whose nuisances fluctuate at scale `n^(-1/α)`.
pub fn simulated_curves(alpha: f64, n: usize, seed: u64, h: f64) -> Result<Curves, String> {
    check(n, h)?;
    let dgp = Dgp::default();
    let sample = dgp.draw_sample(n, &mut ChaCha8Rng::seed_from_u64(seed));
    let cfg = SimulatedNuisanceConfig {
        alpha,
        n,
        seed: seed.wrapping_add(1),
        zero_fluctuation: false,
    };
    let nuis = simulated_nuisances(&cfg, &dgp, covariate_rows(&sample)).map_err(|e| e.to_string())?.fit;
    let kernel = KernelSpec::gaussian();
    let t = grid(33);
    let smooth = |nf: &drcurve::nuisance::NuisanceFit| -> Result<Vec<f64>, String> {
        let pseudo = build_pseudo(&sample, nf).map_err(|e| e.to_string())?;
        t.iter()
            .map(|&p| dr_learner_estimate(&pseudo, p, h, 1, &kernel).map_err(|e| e.to_string()))
            .collect()
    };
    let hoif = |m: usize| -> Result<Vec<f64>, String> {
        t.iter()
            .map(|&p| {
                let mut c = HoifConfig::new(p, h, 11, m);
                c.x_ranges = Some(vec![(-1.0, 1.0)]);
                hoif_estimate(&sample, &nuis, &c).map(|e| e.estimate).map_err(|e| e.to_string())
            })
            .collect()
    };
    Ok(Curves {
        truth: t.iter().map(|&p| dgp.theta(p)).collect(),
        oracle_dr: smooth(&dgp.exact_nuisance())?,
        dr_learner: smooth(&nuis)?,
        hoif1: hoif(1)?,
        hoif2: hoif(2)?,
        t,
    })
}

#[derive(Debug, Serialize, PartialEq)]
pub struct Band {
    pub t: Vec<f64>,
    pub truth: Vec<f64>,
    pub point: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

/// Cross-fitted bounds under confounding strength `gamma` on one simulated sample.
pub fn sensitivity_band(gamma: f64, n: usize, seed: u64, h: f64) -> Result<Band, String> {
    check(n, h)?;
    let dgp = Dgp::default();
    let sample = dgp.draw_sample(n, &mut ChaCha8Rng::seed_from_u64(seed));
    let t = grid(17);
    let cfg = BoundsConfig::new(gamma, h, t.clone()).map_err(|e| e.to_string())?;
    let b = bounds_estimate(&sample, seed, &cfg).map_err(|e| e.to_string())?;
    Ok(Band {
        truth: t.iter().map(|&p| dgp.theta(p)).collect(),
        t,
        point: b.point,
        lower: b.lower,
        upper: b.upper,
    })
}

fn to_js<T: Serialize>(r: Result<T, String>) -> Result<String, JsValue> {
    r.and_then(|v| serde_json::to_string(&v).map_err(|e| e.to_string()))
        .map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = rateCurves)]
pub fn rate_curves_js(alpha: f64, dim: f64, lo: f64, hi: f64, step: f64) -> Result<String, JsValue> {
    to_js(rate_rows(alpha, dim, lo, hi, step))
}

#[wasm_bindgen(js_name = simulatedCurves)]
pub fn simulated_curves_js(alpha: f64, n: u32, seed: u32, h: f64) -> Result<String, JsValue> {
    to_js(simulated_curves(alpha, n as usize, seed as u64, h))
}

#[wasm_bindgen(js_name = sensitivityBand)]
pub fn sensitivity_band_js(gamma: f64, n: u32, seed: u32, h: f64) -> Result<String, JsValue> {
    to_js(sensitivity_band(gamma, n as usize, seed as u64, h))
}

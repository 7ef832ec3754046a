//! Browser bindings: a model config in, JSON out. The page in `www/`
//! draws the results. Each export has a plain Rust counterpart so the
//! logic is tested natively.

use fbq_core::inversion::{from_samples, InversionRequest};
use fbq_core::queueing::{QueueAnalyzer, SystemState};
use fbq_core::{ModelConfig, QueueModel};
use serde_json::json;
use wasm_bindgen::prelude::*;

/// Grids are capped so a slider cannot freeze the tab.
pub const MAX_POINTS: usize = 400;

fn model(config: &str) -> Result<QueueModel, String> {
    ModelConfig::from_toml_str(config)
        .and_then(|c| c.build())
        .map_err(|e| e.to_string())
}

fn grid(max: f64, points: usize, name: &str) -> Result<Vec<f64>, String> {
    if !(max.is_finite() && max > 0.0) {
        return Err(format!("{name} must be positive, got {max}"));
    }
    if !(2..=MAX_POINTS).contains(&points) {
        return Err(format!("points must lie in 2..={MAX_POINTS}, got {points}"));
    }
    // skip zero: transforms at s = 0 and CDFs at t = 0 are trivial
    Ok((1..=points).map(|i| max * i as f64 / points as f64).collect())
}

/// `{rho, mean, levels: [{level, prob, cdf}]}`.
pub fn stationary_json(config: &str) -> Result<String, String> {
    let m = model(config)?;
    let rho = m.rho();
    let d = QueueAnalyzer::new(m).stationary_dist().map_err(|e| e.to_string())?;
    let levels: Vec<_> = d
        .masses
        .iter()
        .zip(&d.cdf)
        .enumerate()
        .map(|(l, (p, c))| json!({ "level": l, "prob": p, "cdf": c }))
        .collect();
    Ok(json!({ "rho": rho, "mean": d.mean(), "levels": levels }).to_string())
}

/// `{mean, points: [{s, value}]}` for the busy period from `(r, x)`.
pub fn busy_period_json(config: &str, r: usize, x: f64, s_max: f64, points: usize) -> Result<String, String> {
    let an = QueueAnalyzer::new(model(config)?);
    let st = SystemState::new(r, x);
    let mean = an.busy_period_mean(st).map_err(|e| e.to_string())?;
    let pts = grid(s_max, points, "s_max")?
        .into_iter()
        .map(|s| Ok(json!({ "s": s, "value": an.busy_period_lt(st, s).map_err(|e| e.to_string())? })))
        .collect::<Result<Vec<_>, String>>()?;
    Ok(json!({ "mean": mean, "points": pts }).to_string())
}

/// `{level, stationary, points: [{t, cdf, error_estimate}]}`: the CDF at
/// `level` over time, started from `(r, x)`.
pub fn transient_json(config: &str, r: usize, x: f64, level: usize, t_max: f64, points: usize) -> Result<String, String> {
    let m = model(config)?;
    if level > m.buffer + 1 {
        return Err(format!("level must be <= B + 1 = {}", m.buffer + 1));
    }
    let an = QueueAnalyzer::new(m);
    let st = SystemState::new(r, x);
    let stationary = an.stationary_dist().map_err(|e| e.to_string())?.cdf[level];
    let mut pts = Vec::new();
    for t in grid(t_max, points, "t_max")? {
        let req = InversionRequest::new(t);
        let samples = req
            .abscissae()
            .iter()
            .map(|&s| an.transient_cdf(st, level, s).map(|p| p / s))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| e.to_string())?;
        let inv = from_samples(&req, &samples);
        pts.push(json!({ "t": t, "cdf": inv.value, "error_estimate": inv.error_estimate }));
    }
    Ok(json!({ "level": level, "stationary": stationary, "points": pts }).to_string())
}

#[wasm_bindgen]
pub fn stationary(config: &str) -> Result<String, JsError> {
    stationary_json(config).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = busyPeriod)]
pub fn busy_period(config: &str, r: usize, x: f64, s_max: f64, points: usize) -> Result<String, JsError> {
    busy_period_json(config, r, x, s_max, points).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn transient(config: &str, r: usize, x: f64, level: usize, t_max: f64, points: usize) -> Result<String, JsError> {
    transient_json(config, r, x, level, t_max, points).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn version() -> String {
    fbq_core::VERSION.to_string()
}

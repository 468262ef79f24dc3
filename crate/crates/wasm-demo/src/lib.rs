//! Browser bindings for the interactive demo page in `www/`.
//!
//! Each export returns a JSON string. The `*_json` functions hold the logic
//! and are plain Rust so they can be tested natively.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use dprmdi_core::attack::{attack_demo, AttackScenario};
use dprmdi_core::channel::{ChannelParams, IntensitySettings};
use dprmdi_core::estimator::EstimationConfig;
use dprmdi_core::fock::{class_probability, fidelity_bound_xy, PhaseRandomization, SourceConfig};
use dprmdi_core::key_rate::evaluate_point;
use dprmdi_core::sweep::linear_grid;

/// `0` means continuous phase randomization.
fn phases_from(n: u32) -> PhaseRandomization {
    if n == 0 {
        PhaseRandomization::Continuous
    } else {
        PhaseRandomization::Discrete(n)
    }
}

fn to_json<T: Serialize>(v: &T) -> Result<String, String> {
    serde_json::to_string(v).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct ClassRow {
    j: usize,
    probability: f64,
    fidelity_bound: f64,
}

/// Photon-number class probabilities and fidelity bounds for the first
/// `max_classes` classes.
pub fn class_table_json(num_phases: u32, mu: f64, max_classes: usize) -> Result<String, String> {
    let phases = phases_from(num_phases);
    let cfg = SourceConfig::new(phases, mu).map_err(|e| e.to_string())?;
    let count = phases.num_classes().map_or(max_classes, |n| n.min(max_classes));
    let rows = (0..count)
        .map(|j| {
            let probability = class_probability(&cfg, j)?;
            // The bound is undefined for an empty class.
            let fidelity_bound = if mu == 0.0 && j > 0 {
                1.0
            } else {
                fidelity_bound_xy(&cfg, j)?
            };
            Ok(ClassRow {
                j,
                probability,
                fidelity_bound,
            })
        })
        .collect::<dprmdi_core::Result<Vec<_>>>()
        .map_err(|e| e.to_string())?;
    to_json(&rows)
}

#[derive(Serialize)]
struct CurvePoint {
    distance_km: f64,
    key_rate: f64,
    y11_lo: f64,
    e11_upper: f64,
    phase_error: f64,
}

/// Key rate against distance at fixed intensities.
pub fn keyrate_curve_json(num_phases: u32, mu: f64, nu: f64, stop_km: f64, step_km: f64) -> Result<String, String> {
    let settings = IntensitySettings::new(mu, nu).map_err(|e| e.to_string())?;
    let distances = linear_grid(0.0, stop_km, step_km).map_err(|e| e.to_string())?;
    if distances.len() > 2000 {
        return Err("too many distance points; increase the step".into());
    }
    let est = EstimationConfig::default();
    let base = ChannelParams::default();
    let points = distances
        .iter()
        .map(|&d| {
            let p = evaluate_point(&base.at_distance(d), phases_from(num_phases), &settings, &est, None)?;
            Ok(CurvePoint {
                distance_km: d,
                key_rate: p.report.rate,
                y11_lo: p.inputs.y11_lo,
                e11_upper: p.inputs.e11_upper,
                phase_error: p.report.phase_error,
            })
        })
        .collect::<dprmdi_core::Result<Vec<_>>>()
        .map_err(|e| e.to_string())?;
    to_json(&points)
}

#[derive(Serialize)]
struct AttackSummary {
    eta: f64,
    q_opt: f64,
    feasible: bool,
    z1_mu_min: Option<f64>,
    z_mu: Vec<f64>,
    z_nu: Vec<f64>,
    rate_upper: Option<f64>,
    rate_lower: Option<f64>,
    success: bool,
    report: String,
}

/// USD attack on an unrandomized source with matched channel loss.
pub fn attack_json(mu: f64, nu: f64, cutoff: usize) -> Result<String, String> {
    let mut scenario = AttackScenario::with_matched_loss(mu, nu).map_err(|e| e.to_string())?;
    scenario.max_photon_number = cutoff;
    let r = attack_demo(&scenario).map_err(|e| e.to_string())?;
    let (z_mu, z_nu) = r
        .solution
        .as_ref()
        .map(|s| (s.policy.z_mu.clone(), s.policy.z_nu.clone()))
        .unwrap_or_default();
    to_json(&AttackSummary {
        eta: scenario.eta,
        q_opt: r.q_opt,
        feasible: r.solution.is_some(),
        z1_mu_min: r.solution.as_ref().map(|s| s.z1_mu_min),
        z_mu,
        z_nu,
        rate_upper: r.rate_upper,
        rate_lower: r.estimate.as_ref().map(|e| e.rate_lower),
        success: r.success,
        report: r.to_string(),
    })
}

#[wasm_bindgen]
pub fn class_table(num_phases: u32, mu: f64, max_classes: usize) -> Result<String, JsError> {
    class_table_json(num_phases, mu, max_classes).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn keyrate_curve(num_phases: u32, mu: f64, nu: f64, stop_km: f64, step_km: f64) -> Result<String, JsError> {
    keyrate_curve_json(num_phases, mu, nu, stop_km, step_km).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn attack(mu: f64, nu: f64, cutoff: usize) -> Result<String, JsError> {
    attack_json(mu, nu, cutoff).map_err(|e| JsError::new(&e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::Value;

    #[test]
    fn class_table_sums_to_one() {
        let v: Value = serde_json::from_str(&class_table_json(4, 0.5, 16).unwrap()).unwrap();
        let rows = v.as_array().unwrap();
        assert_eq!(rows.len(), 4);
        let total: f64 = rows.iter().map(|r| r["probability"].as_f64().unwrap()).sum();
        assert!((total - 1.0).abs() < 1e-12);
        let v: Value = serde_json::from_str(&class_table_json(0, 0.5, 5).unwrap()).unwrap();
        assert!(v.as_array().unwrap().iter().all(|r| r["fidelity_bound"] == 1.0));
        assert!(class_table_json(4, -1.0, 4).is_err());
    }

    #[test]
    fn curve_decreases_with_distance() {
        let v: Value = serde_json::from_str(&keyrate_curve_json(0, 0.3, 0.01, 60.0, 20.0).unwrap()).unwrap();
        let rates: Vec<f64> = v
            .as_array()
            .unwrap()
            .iter()
            .map(|p| p["key_rate"].as_f64().unwrap())
            .collect();
        assert_eq!(rates.len(), 4);
        assert!(rates[0] > 0.0 && rates.windows(2).all(|w| w[1] <= w[0]));
        assert!(keyrate_curve_json(0, 0.01, 0.3, 60.0, 20.0).is_err());
    }

    #[test]
    fn attack_defaults_succeed() {
        let v: Value = serde_json::from_str(&attack_json(0.1, 0.02, 10).unwrap()).unwrap();
        assert_eq!(v["feasible"], true);
        assert_eq!(v["success"], true);
        assert_eq!(v["z_mu"].as_array().unwrap().len(), 10);
    }
}

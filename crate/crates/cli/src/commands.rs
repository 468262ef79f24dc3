//! Subcommand bodies. Each returns the bytes to emit so callers (and tests)
//! decide where they go.

use anyhow::{bail, Result};
use rayon::prelude::*;

use dprmdi_core::attack::{attack_demo, AttackReport, AttackScenario};
use dprmdi_core::channel::{simulate_stats, IntensitySettings, ObservedStats, Setting};
use dprmdi_core::estimator::{estimate, Interval, SourceSet, Target, YieldBounds};
use dprmdi_core::fock::PhaseRandomization;
use dprmdi_core::sweep::{keyrate_sweep, noise_sweep, KeyRateRow, NoiseRow};

use crate::config::ExperimentConfig;
use crate::output::{finish, fmt_f64, stats_to_csv, writer};

pub const KEYRATE_HEADER: [&str; 11] = [
    "num_phases",
    "distance_km",
    "mu_opt",
    "nu_opt",
    "key_rate",
    "raw_rate",
    "Y11_lo",
    "e11b_hi",
    "F11",
    "delta",
    "phase_error",
];

pub const NOISE_HEADER: [&str; 4] = ["num_phases", "e11b", "key_rate", "raw_rate"];

/// Runs every (phase count, distance) point concurrently; rows come back in
/// phase-major, distance-minor order.
pub fn keyrate_rows(cfg: &ExperimentConfig) -> Result<Vec<KeyRateRow>> {
    let distances = cfg.distances()?;
    let points: Vec<(PhaseRandomization, f64)> = cfg
        .phases
        .iter()
        .flat_map(|&p| distances.iter().map(move |&d| (p, d)))
        .collect();
    let rows = points
        .par_iter()
        .map(|&(p, d)| keyrate_sweep(&cfg.channel, &[p], &[d], &cfg.grid, &cfg.estimation))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(rows.into_iter().flatten().collect())
}

pub fn keyrate_csv(rows: &[KeyRateRow]) -> Result<String> {
    let mut w = writer();
    w.write_record(KEYRATE_HEADER)?;
    for r in rows {
        w.write_record([
            r.phases.to_string(),
            fmt_f64(r.distance_km),
            fmt_f64(r.mu),
            fmt_f64(r.nu),
            fmt_f64(r.rate),
            fmt_f64(r.raw_rate),
            fmt_f64(r.y11_lo),
            fmt_f64(r.e11_upper),
            fmt_f64(r.f11),
            fmt_f64(r.delta),
            fmt_f64(r.phase_error),
        ])?;
    }
    finish(w)
}

pub fn noise_rows(cfg: &ExperimentConfig) -> Result<Vec<NoiseRow>> {
    let levels = cfg.noise_levels()?;
    let rows = cfg
        .phases
        .par_iter()
        .map(|&p| noise_sweep(&cfg.channel, &[p], &levels, &cfg.grid, &cfg.estimation))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(rows.into_iter().flatten().collect())
}

pub fn noise_csv(rows: &[NoiseRow]) -> Result<String> {
    let mut w = writer();
    w.write_record(NOISE_HEADER)?;
    for r in rows {
        w.write_record([
            r.phases.to_string(),
            fmt_f64(r.e11b),
            fmt_f64(r.rate),
            fmt_f64(r.raw_rate),
        ])?;
    }
    finish(w)
}

pub struct AttackOutput {
    pub report: AttackReport,
    pub text: String,
    pub record: String,
}

pub const ATTACK_HEADER: [&str; 12] = [
    "mu",
    "nu",
    "eta",
    "cutoff",
    "q_opt",
    "feasible",
    "z1_mu_min",
    "residual_signal",
    "residual_decoy",
    "rate_upper",
    "rate_lower",
    "success",
];

pub fn attack(mu: f64, nu: f64, eta: Option<f64>, cutoff: usize) -> Result<AttackOutput> {
    let mut scenario = match eta {
        Some(eta) => AttackScenario::new(mu, nu, eta)?,
        None => AttackScenario::with_matched_loss(mu, nu)?,
    };
    scenario.max_photon_number = cutoff;
    let report = attack_demo(&scenario)?;

    let opt = |x: Option<f64>| x.map_or_else(|| "nan".to_string(), fmt_f64);
    let mut w = writer();
    w.write_record(ATTACK_HEADER)?;
    w.write_record([
        fmt_f64(mu),
        fmt_f64(nu),
        fmt_f64(scenario.eta),
        cutoff.to_string(),
        fmt_f64(report.q_opt),
        report.solution.is_some().to_string(),
        opt(report.solution.as_ref().map(|s| s.z1_mu_min)),
        opt(report.residuals.map(|r| r.0)),
        opt(report.residuals.map(|r| r.1)),
        opt(report.rate_upper),
        opt(report.estimate.as_ref().map(|e| e.rate_lower)),
        report.success.to_string(),
    ])?;
    let record = finish(w)?;
    let text = format!("{report}\n");
    Ok(AttackOutput { report, text, record })
}

fn single_phase(cfg: &ExperimentConfig, phases: Option<PhaseRandomization>) -> Result<PhaseRandomization> {
    match (phases, cfg.phases.as_slice()) {
        (Some(p), _) => Ok(p),
        (None, [p]) => Ok(*p),
        (None, list) => bail!(
            "estimate needs one phase count but the config lists {}; pass --phases",
            list.len()
        ),
    }
}

pub fn estimate_bounds(
    cfg: &ExperimentConfig,
    stats: &ObservedStats,
    phases: Option<PhaseRandomization>,
) -> Result<YieldBounds> {
    let phases = single_phase(cfg, phases)?;
    let sources = SourceSet::new(phases, &cfg.intensities)?;
    let bounds = estimate(stats, &sources, &cfg.estimation)?;
    for d in bounds.diagnostics() {
        log::warn!(
            "stage {} {:?} row {}: widened {} time(s){}",
            d.stage,
            d.target,
            d.row,
            d.widenings,
            if d.vacuous { ", fell back to [0, 1]" } else { "" }
        );
    }
    Ok(bounds)
}

pub const BOUNDS_HEADER: [&str; 6] = ["stage", "target", "alice_class", "bob", "lo", "hi"];

/// Stage-1 rows give Alice's class against each Bob setting; stage-2 rows
/// give class pairs. The last row is the single-photon error-rate bound.
pub fn bounds_csv(b: &YieldBounds) -> Result<String> {
    let mut w = writer();
    w.write_record(BOUNDS_HEADER)?;
    let name = |t: Target| match t {
        Target::Gain => "gain",
        Target::ErrorProduct => "error_product",
    };
    {
        let mut row = |stage: &str, t: &str, i: String, j: String, iv: Interval| {
            w.write_record([stage, t, &i, &j, &fmt_f64(iv.lo), &fmt_f64(iv.hi)])
        };
        for s1 in [&b.gain_stage1, &b.error_stage1] {
            for bob in Setting::ALL {
                for i in 0..s1.k() {
                    row(
                        "1",
                        name(s1.target),
                        i.to_string(),
                        bob.name().to_string(),
                        s1.get(bob, i),
                    )?;
                }
            }
        }
        for s2 in [&b.gain, &b.error] {
            for (i, r) in s2.intervals.iter().enumerate() {
                for j in 0..r.len() {
                    row("2", name(s2.target), i.to_string(), j.to_string(), s2.get(i, j))?;
                }
            }
        }
        row(
            "final",
            "e11b_hi",
            "1".into(),
            "1".into(),
            Interval::new(0.0, b.e11_upper),
        )?;
    }
    finish(w)
}

/// Simulated statistics at the config distance and fixed intensities.
pub fn simulate(cfg: &ExperimentConfig) -> ObservedStats {
    simulate_stats(&cfg.channel, &cfg.intensities, &cfg.intensities)
}

pub fn simulate_csv(cfg: &ExperimentConfig) -> Result<String> {
    stats_to_csv(&simulate(cfg))
}

pub fn intensities_override(cfg: &mut ExperimentConfig, mu: Option<f64>, nu: Option<f64>) -> Result<()> {
    if mu.is_some() || nu.is_some() {
        cfg.intensities = IntensitySettings::new(
            mu.unwrap_or(cfg.intensities.signal),
            nu.unwrap_or(cfg.intensities.decoy),
        )?;
    }
    Ok(())
}

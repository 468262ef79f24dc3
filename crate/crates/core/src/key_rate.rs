//! Key-rate assembly and intensity optimization.
//!
//! Only the `(1,1)` class contributes a certified privacy-amplification term:
//!
//! ```text
//! R = P_1² Y11^lo (1 − H(e_p)) − Q_rect f H(E_rect)
//! ```
//!
//! where `e_p` is the bit error bound corrected by the basis-dependence bias
//! `Δ = (1 − F11) / (2 Y11^lo)`.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::channel::{simulate_stats, ChannelParams, IntensitySettings, Setting};
use crate::error::{domain, Error, Result};
use crate::estimator::{estimate_single_photon, EstimationConfig, SinglePhotonBounds, SourceSet};
use crate::fock::{class_probability_with, fidelity_bound_xy_with, PhaseRandomization};

/// `H(p) = −p log₂ p − (1−p) log₂(1−p)`.
pub fn binary_entropy(p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return domain(format!("binary entropy argument {p} outside [0, 1]"));
    }
    if p == 0.0 || p == 1.0 {
        return Ok(0.0);
    }
    Ok(-p * p.log2() - (1.0 - p) * (1.0 - p).log2())
}

/// Basis-dependence bias `min(1/2, (1 − F) / (2Y))`.
///
/// Returns `(Δ, vacuous)`. A zero yield gives the vacuous 1/2.
pub fn delta_bias(fidelity: f64, yield_lo: f64) -> Result<(f64, bool)> {
    if !(0.0..=1.0).contains(&fidelity) {
        return domain(format!("fidelity {fidelity} outside [0, 1]"));
    }
    if !(yield_lo >= 0.0) {
        return domain(format!("yield {yield_lo} must be >= 0"));
    }
    if fidelity == 1.0 {
        return Ok((0.0, false));
    }
    if yield_lo == 0.0 {
        return Ok((0.5, true));
    }
    let d = (1.0 - fidelity) / (2.0 * yield_lo);
    Ok((d.min(0.5), d >= 0.5))
}

/// Phase error bound from a bit error rate and the bias `Δ`.
pub fn phase_error_upper(e_b: f64, delta: f64) -> Result<f64> {
    if !(0.0..=0.5).contains(&e_b) {
        return domain(format!("bit error rate {e_b} outside [0, 0.5]"));
    }
    if !(0.0..=0.5).contains(&delta) {
        return domain(format!("bias {delta} outside [0, 0.5]"));
    }
    if delta == 0.0 {
        return Ok(e_b);
    }
    let d = delta * (1.0 - delta);
    let e = e_b + 4.0 * d * (1.0 - 2.0 * e_b) + 4.0 * (1.0 - 2.0 * delta) * (d * e_b * (1.0 - e_b)).sqrt();
    Ok(e.min(0.5))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeyRateInputs {
    pub q_rect: f64,
    pub e_rect: f64,
    /// Probability of the signal setting emitting class 1.
    pub p1: f64,
    pub y11_lo: f64,
    pub e11_upper: f64,
    pub f11: f64,
    pub ec_efficiency: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeyRateReport {
    /// `max(0, raw_rate)`.
    pub rate: f64,
    pub raw_rate: f64,
    pub ec_term: f64,
    pub pa_term: f64,
    pub delta: f64,
    pub delta_vacuous: bool,
    pub phase_error: f64,
}

pub fn key_rate(inputs: &KeyRateInputs) -> Result<KeyRateReport> {
    let (delta, delta_vacuous) = delta_bias(inputs.f11, inputs.y11_lo)?;
    let e_b = inputs.e11_upper.clamp(0.0, 0.5);
    let phase_error = phase_error_upper(e_b, delta)?;
    let pa_term = inputs.p1 * inputs.p1 * inputs.y11_lo * (1.0 - binary_entropy(phase_error)?);
    let ec_term = inputs.q_rect * inputs.ec_efficiency * binary_entropy(inputs.e_rect.clamp(0.0, 1.0))?;
    let raw_rate = pa_term - ec_term;
    Ok(KeyRateReport {
        rate: raw_rate.max(0.0),
        raw_rate,
        ec_term,
        pa_term,
        delta,
        delta_vacuous,
        phase_error,
    })
}

/// Everything computed for one `(channel, source, intensities)` point.
#[derive(Debug, Clone, PartialEq)]
pub struct PointEvaluation {
    pub settings: IntensitySettings,
    pub bounds: SinglePhotonBounds,
    pub inputs: KeyRateInputs,
    pub report: KeyRateReport,
}

/// Simulate, estimate and assemble the key rate at one point.
///
/// `e11_override` replaces the estimated single-photon bit error bound; the
/// yield bound still comes from the estimator.
pub fn evaluate_point(
    params: &ChannelParams,
    phases: PhaseRandomization,
    settings: &IntensitySettings,
    est: &EstimationConfig,
    e11_override: Option<f64>,
) -> Result<PointEvaluation> {
    params.validate()?;
    let stats = simulate_stats(params, settings, settings);
    let sources = SourceSet::new(phases, settings)?;
    let bounds = estimate_single_photon(&stats, &sources, est)?;
    let signal = sources.get(Setting::Signal);
    let has_class_one = phases.num_classes().is_none_or(|n| n > 1);
    let (p1, f11) = if !has_class_one {
        (0.0, 0.0)
    } else if phases.is_continuous() {
        (class_probability_with(signal, 1, &est.series)?, 1.0)
    } else {
        (
            class_probability_with(signal, 1, &est.series)?,
            fidelity_bound_xy_with(signal, 1, &est.series)?,
        )
    };
    let rect = stats.get(Setting::Signal, Setting::Signal);
    let inputs = KeyRateInputs {
        q_rect: rect.gain,
        e_rect: rect.error_rate,
        p1,
        y11_lo: bounds.y11.lo,
        e11_upper: e11_override.unwrap_or(bounds.e11_upper),
        f11,
        ec_efficiency: params.ec_efficiency,
    };
    let report = key_rate(&inputs)?;
    Ok(PointEvaluation {
        settings: *settings,
        bounds,
        inputs,
        report,
    })
}

/// Geometric `(μ, ν)` search grid.
///
/// `μ` takes `points` values from `mu_min` to `mu_max`. For each `μ` the decoy
/// takes `points` values `ν_k = nu_min (μ/nu_min)^{k/points}`, `k < points`,
/// so always `ν < μ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntensityGrid {
    pub mu_min: f64,
    pub mu_max: f64,
    pub nu_min: f64,
    pub points: usize,
}

impl Default for IntensityGrid {
    fn default() -> Self {
        Self {
            mu_min: 0.01,
            mu_max: 1.0,
            nu_min: 0.001,
            points: 40,
        }
    }
}

fn geometric(lo: f64, hi: f64, k: usize, n: usize) -> f64 {
    if n <= 1 {
        return lo;
    }
    lo * (hi / lo).powf(k as f64 / (n - 1) as f64)
}

impl IntensityGrid {
    pub fn validate(&self) -> Result<()> {
        let ok = self.mu_min.is_finite()
            && self.mu_max.is_finite()
            && self.nu_min > 0.0
            && self.mu_min > 0.0
            && self.mu_min <= self.mu_max
            && self.points > 0;
        if !ok {
            return domain(format!("invalid intensity grid {self:?}"));
        }
        Ok(())
    }

    /// All `(μ, ν)` pairs, sorted lexicographically.
    pub fn settings(&self) -> Result<Vec<IntensitySettings>> {
        self.validate()?;
        let mut out = Vec::with_capacity(self.points * self.points);
        for a in 0..self.points {
            let mu = geometric(self.mu_min, self.mu_max, a, self.points);
            if mu <= self.nu_min {
                continue;
            }
            for k in 0..self.points {
                let nu = self.nu_min * (mu / self.nu_min).powf(k as f64 / self.points as f64);
                if nu < mu {
                    out.push(IntensitySettings::new(mu, nu)?);
                }
            }
        }
        if out.is_empty() {
            return Err(Error::EmptyGrid(format!("no (mu, nu) with nu < mu in {self:?}")));
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Optimum {
    pub best: PointEvaluation,
    /// Every grid point had a non-positive raw rate.
    pub all_zero: bool,
    pub evaluated: usize,
}

/// Exhaustive grid search for the intensities maximizing the raw key rate.
///
/// Ties go to the lexicographically smallest `(μ, ν)`.
pub fn optimize_intensities(
    params: &ChannelParams,
    phases: PhaseRandomization,
    grid: &IntensityGrid,
    est: &EstimationConfig,
    e11_override: Option<f64>,
) -> Result<Optimum> {
    let candidates = grid.settings()?;
    let eval = |s: &IntensitySettings| evaluate_point(params, phases, s, est, e11_override);
    #[cfg(feature = "parallel")]
    let results: Vec<Result<PointEvaluation>> = candidates.par_iter().map(eval).collect();
    #[cfg(not(feature = "parallel"))]
    let results: Vec<Result<PointEvaluation>> = candidates.iter().map(eval).collect();

    let mut best: Option<PointEvaluation> = None;
    let mut all_zero = true;
    let evaluated = results.len();
    for r in results {
        let p = r?;
        if p.report.raw_rate > 0.0 {
            all_zero = false;
        }
        // Candidates arrive in lexicographic order, so strict > keeps the smallest on ties.
        if best.as_ref().is_none_or(|b| p.report.raw_rate > b.report.raw_rate) {
            best = Some(p);
        }
    }
    let best = best.ok_or_else(|| Error::EmptyGrid("intensity grid is empty".into()))?;
    Ok(Optimum {
        best,
        all_zero,
        evaluated,
    })
}

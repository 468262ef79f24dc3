//! Distance and noise sweeps over several phase counts.

use crate::channel::ChannelParams;
use crate::error::{domain, Result};
use crate::estimator::EstimationConfig;
use crate::fock::PhaseRandomization;
use crate::key_rate::{evaluate_point, optimize_intensities, IntensityGrid};

/// `start, start + step, …` up to `stop` inclusive (within a small rounding slack).
pub fn linear_grid(start: f64, stop: f64, step: f64) -> Result<Vec<f64>> {
    if !(start.is_finite() && stop.is_finite() && step.is_finite()) || step <= 0.0 || stop < start {
        return domain(format!("invalid grid start={start} stop={stop} step={step}"));
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| start + i as f64 * step).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeyRateRow {
    pub phases: PhaseRandomization,
    pub distance_km: f64,
    pub mu: f64,
    pub nu: f64,
    pub rate: f64,
    pub raw_rate: f64,
    pub y11_lo: f64,
    pub e11_upper: f64,
    pub f11: f64,
    pub delta: f64,
    pub phase_error: f64,
    pub all_zero: bool,
}

/// Optimized key rate for every phase count and distance, in that order.
pub fn keyrate_sweep(
    params: &ChannelParams,
    phases: &[PhaseRandomization],
    distances: &[f64],
    grid: &IntensityGrid,
    est: &EstimationConfig,
) -> Result<Vec<KeyRateRow>> {
    let mut rows = Vec::with_capacity(phases.len() * distances.len());
    for &ph in phases {
        for &d in distances {
            let opt = optimize_intensities(&params.at_distance(d), ph, grid, est, None)?;
            let b = &opt.best;
            rows.push(KeyRateRow {
                phases: ph,
                distance_km: d,
                mu: b.settings.signal,
                nu: b.settings.decoy,
                rate: b.report.rate,
                raw_rate: b.report.raw_rate,
                y11_lo: b.inputs.y11_lo,
                e11_upper: b.inputs.e11_upper,
                f11: b.inputs.f11,
                delta: b.report.delta,
                phase_error: b.report.phase_error,
                all_zero: opt.all_zero,
            });
        }
    }
    Ok(rows)
}

/// Largest distance with a positive rate, per phase count (`None` if never positive).
pub fn max_positive_distance(rows: &[KeyRateRow], phases: PhaseRandomization) -> Option<f64> {
    rows.iter()
        .filter(|r| r.phases == phases && r.rate > 0.0)
        .map(|r| r.distance_km)
        .fold(None, |m, d| Some(m.map_or(d, |m: f64| m.max(d))))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseRow {
    pub phases: PhaseRandomization,
    pub e11b: f64,
    pub mu: f64,
    pub nu: f64,
    pub rate: f64,
    pub raw_rate: f64,
}

/// Key rate against an injected single-photon bit error rate.
///
/// For each phase count the intensities are optimized once for the channel
/// at `params.distance_km` and then held fixed; every grid value replaces
/// the estimated `e11` bound while the yield bound, `Q_rect` and `E_rect`
/// stay as simulated.
pub fn noise_sweep(
    params: &ChannelParams,
    phases: &[PhaseRandomization],
    e11_values: &[f64],
    grid: &IntensityGrid,
    est: &EstimationConfig,
) -> Result<Vec<NoiseRow>> {
    if let Some(e) = e11_values.iter().find(|e| !(0.0..=1.0).contains(*e)) {
        return domain(format!("injected e11 {e} outside [0, 1]"));
    }
    let mut rows = Vec::with_capacity(phases.len() * e11_values.len());
    for &ph in phases {
        let settings = optimize_intensities(params, ph, grid, est, None)?.best.settings;
        for &e in e11_values {
            let p = evaluate_point(params, ph, &settings, est, Some(e))?;
            rows.push(NoiseRow {
                phases: ph,
                e11b: e,
                mu: settings.signal,
                nu: settings.decoy,
                rate: p.report.rate,
                raw_rate: p.report.raw_rate,
            });
        }
    }
    Ok(rows)
}

/// First point where `ys` goes from positive to non-positive, linearly
/// interpolated between the bracketing samples.
pub fn zero_crossing(xs: &[f64], ys: &[f64]) -> Option<f64> {
    xs.windows(2).zip(ys.windows(2)).find_map(|(x, y)| {
        if y[0] > 0.0 && y[1] <= 0.0 {
            Some(x[0] + (x[1] - x[0]) * y[0] / (y[0] - y[1]))
        } else {
            None
        }
    })
}

/// Zero crossing of the raw rate for one phase count in a noise sweep.
pub fn noise_threshold(rows: &[NoiseRow], phases: PhaseRandomization) -> Option<f64> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = rows
        .iter()
        .filter(|r| r.phases == phases)
        .map(|r| (r.e11b, r.raw_rate))
        .unzip();
    zero_crossing(&xs, &ys)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids() {
        assert_eq!(linear_grid(0.0, 10.0, 5.0).unwrap(), vec![0.0, 5.0, 10.0]);
        assert_eq!(linear_grid(0.0, 0.3, 0.1).unwrap().len(), 4);
        assert_eq!(linear_grid(2.0, 2.0, 1.0).unwrap(), vec![2.0]);
        assert!(linear_grid(0.0, 1.0, 0.0).is_err());
        assert!(linear_grid(1.0, 0.0, 0.5).is_err());
    }

    #[test]
    fn crossing_interpolates() {
        assert_eq!(zero_crossing(&[0.0, 1.0, 2.0], &[2.0, 1.0, -1.0]), Some(1.5));
        assert_eq!(zero_crossing(&[0.0, 1.0], &[1.0, 2.0]), None);
        assert_eq!(zero_crossing(&[0.0, 1.0], &[-1.0, -2.0]), None);
    }

    #[test]
    fn small_sweeps_run() {
        let grid = IntensityGrid {
            points: 6,
            ..IntensityGrid::default()
        };
        let est = EstimationConfig::default();
        let params = ChannelParams::default();
        let rows = keyrate_sweep(&params, &[PhaseRandomization::Continuous], &[0.0, 50.0], &grid, &est).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows[0].rate >= rows[1].rate);
        assert_eq!(max_positive_distance(&rows, PhaseRandomization::Continuous), Some(50.0));

        let e = linear_grid(0.0, 0.2, 0.01).unwrap();
        let rows = noise_sweep(&params, &[PhaseRandomization::Continuous], &e, &grid, &est).unwrap();
        assert_eq!(rows.len(), e.len());
        assert!(rows.windows(2).all(|w| w[1].raw_rate <= w[0].raw_rate));
        assert!(noise_threshold(&rows, PhaseRandomization::Continuous).is_some());
        assert!(noise_sweep(&params, &[PhaseRandomization::Continuous], &[1.5], &grid, &est).is_err());
    }
}

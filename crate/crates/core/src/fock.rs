//! Coherent-state and Fock-series numerics for discrete-phase-randomized sources.
//!
//! A weak coherent pulse whose global phase is drawn from `N` equally spaced
//! values is a mixture of `N` orthogonal "approximated photon-number" states.
//! Class `j` collects the Fock components with photon number `n ≡ j (mod N)`.
//! Every quantity in this module is a (possibly weighted) sum over such a
//! residue class of the Poisson weights `μⁿ/n!`.

use std::f64::consts::{FRAC_1_SQRT_2, PI, SQRT_2};
use std::fmt;
use std::str::FromStr;

use crate::error::{domain, Error, Result};

/// How the global phase of the laser pulse is randomized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PhaseRandomization {
    /// `N` equally spaced phases `2πk/N`.
    Discrete(u32),
    /// Uniform phase on `[0, 2π)`; the `N → ∞` limit.
    Continuous,
}

impl PhaseRandomization {
    pub fn num_phases(self) -> Option<u32> {
        match self {
            PhaseRandomization::Discrete(n) => Some(n),
            PhaseRandomization::Continuous => None,
        }
    }

    pub fn is_continuous(self) -> bool {
        matches!(self, PhaseRandomization::Continuous)
    }

    /// Number of photon classes, `None` when unbounded.
    pub fn num_classes(self) -> Option<usize> {
        self.num_phases().map(|n| n as usize)
    }
}

impl fmt::Display for PhaseRandomization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PhaseRandomization::Discrete(n) => write!(f, "{n}"),
            PhaseRandomization::Continuous => write!(f, "inf"),
        }
    }
}

impl FromStr for PhaseRandomization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        if t.eq_ignore_ascii_case("inf") || t.eq_ignore_ascii_case("continuous") {
            return Ok(PhaseRandomization::Continuous);
        }
        match t.parse::<u32>() {
            Ok(n) if n >= 1 => Ok(PhaseRandomization::Discrete(n)),
            _ => domain(format!(
                "invalid number of phases '{t}' (expected an integer >= 1 or 'inf')"
            )),
        }
    }
}

/// A source: phase randomization plus mean photon number `μ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceConfig {
    pub phases: PhaseRandomization,
    pub intensity: f64,
}

impl SourceConfig {
    pub fn new(phases: PhaseRandomization, intensity: f64) -> Result<Self> {
        if let PhaseRandomization::Discrete(0) = phases {
            return domain("number of phases must be at least 1");
        }
        if !(intensity.is_finite() && intensity >= 0.0) {
            return domain(format!("intensity must be finite and non-negative, got {intensity}"));
        }
        Ok(Self { phases, intensity })
    }

    pub fn discrete(num_phases: u32, intensity: f64) -> Result<Self> {
        Self::new(PhaseRandomization::Discrete(num_phases), intensity)
    }

    pub fn continuous(intensity: f64) -> Result<Self> {
        Self::new(PhaseRandomization::Continuous, intensity)
    }

    /// Same phase randomization, different intensity.
    pub fn with_intensity(&self, intensity: f64) -> Result<Self> {
        Self::new(self.phases, intensity)
    }

    fn check_class(&self, j: usize) -> Result<()> {
        match self.phases {
            PhaseRandomization::Discrete(n) if j >= n as usize => {
                domain(format!("photon class {j} out of range for {n} phases"))
            }
            _ => Ok(()),
        }
    }
}

/// Truncation rule for the infinite residue-class series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesPolicy {
    /// Stop once the next term is below this fraction of the running sum.
    pub relative_term_cutoff: f64,
    /// Hard cap on the number of summed terms.
    pub max_terms: usize,
}

impl Default for SeriesPolicy {
    fn default() -> Self {
        Self {
            relative_term_cutoff: 1e-16,
            max_terms: 200,
        }
    }
}

impl SeriesPolicy {
    pub fn validate(&self) -> Result<()> {
        if !(self.relative_term_cutoff > 0.0 && self.relative_term_cutoff.is_finite()) {
            return domain("relative_term_cutoff must be positive");
        }
        if self.max_terms == 0 {
            return domain("max_terms must be at least 1");
        }
        Ok(())
    }
}

/// Neumaier-compensated running sum.
#[derive(Debug, Default, Clone, Copy)]
pub(crate) struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub(crate) fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub(crate) fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

/// Result of summing one residue class.
#[derive(Debug, Clone, Copy)]
struct ClassSums {
    /// `Σ xⁿ/n!` over the class.
    plain: f64,
    /// `Σ xⁿ/n! · weight(n)` over the class.
    weighted: f64,
}

/// Sums `xⁿ/n!` (and a weighted copy) over `n = lN + j`, `l = 0, 1, …`.
///
/// With `period == None` only the `n = j` term is kept, which is what the
/// continuous-phase limit reduces every class sum to.
fn class_series(
    x: f64,
    period: Option<u32>,
    j: usize,
    policy: &SeriesPolicy,
    weight: impl Fn(u64) -> f64,
) -> ClassSums {
    // Iterative term ratios: never form a factorial explicitly.
    let mut term = 1.0;
    for k in 1..=j {
        term *= x / k as f64;
    }
    let mut n = j as u64;
    let mut plain = CompensatedSum::default();
    let mut weighted = CompensatedSum::default();
    for _ in 0..policy.max_terms {
        plain.add(term);
        weighted.add(term * weight(n));
        let Some(period) = period else { break };
        let mut next = term;
        for k in (n + 1)..=(n + period as u64) {
            next *= x / k as f64;
        }
        n += period as u64;
        term = next;
        if term <= policy.relative_term_cutoff * plain.value() {
            break;
        }
    }
    ClassSums {
        plain: plain.value(),
        weighted: weighted.value(),
    }
}

/// `cos(nπ/4) + sin(nπ/4)`, tabulated so the result is exact for integer `n`.
fn cos_plus_sin_quarter(n: u64) -> f64 {
    match n % 8 {
        0 => 1.0,
        1 => SQRT_2,
        2 => 1.0,
        3 => 0.0,
        4 => -1.0,
        5 => -SQRT_2,
        6 => -1.0,
        _ => 0.0,
    }
}

/// `2^{-n/2}`.
fn half_power_of_two(n: u64) -> f64 {
    let even = 0.5f64.powi((n / 2) as i32);
    if n % 2 == 1 {
        even * FRAC_1_SQRT_2
    } else {
        even
    }
}

/// Probability `P_j` that the source emits the approximated `j`-photon state.
pub fn class_probability(cfg: &SourceConfig, j: usize) -> Result<f64> {
    class_probability_with(cfg, j, &SeriesPolicy::default())
}

pub fn class_probability_with(cfg: &SourceConfig, j: usize, policy: &SeriesPolicy) -> Result<f64> {
    policy.validate()?;
    cfg.check_class(j)?;
    let sums = class_series(cfg.intensity, cfg.phases.num_phases(), j, policy, |_| 1.0);
    // With one phase the product is e^{-μ}e^{μ}, which can round just above 1.
    Ok(((-cfg.intensity).exp() * sums.plain).min(1.0))
}

/// `P_j` for `j = 0..count` (`count` is clipped to the number of classes).
pub fn class_probabilities(cfg: &SourceConfig, count: usize, policy: &SeriesPolicy) -> Result<Vec<f64>> {
    let count = cfg.phases.num_classes().map_or(count, |n| n.min(count));
    (0..count).map(|j| class_probability_with(cfg, j, policy)).collect()
}

/// Lower bound on the fidelity between the X-basis and Y-basis two-party
/// source states restricted to photon class `j`.
///
/// Returns `|Σ wₙ 2^{-n/2}(cos nπ/4 + sin nπ/4) / Σ wₙ|²` over the class,
/// clamped to `[0, 1]`. The continuous limit is basis independent and
/// returns exactly 1.
pub fn fidelity_bound_xy(cfg: &SourceConfig, j: usize) -> Result<f64> {
    fidelity_bound_xy_with(cfg, j, &SeriesPolicy::default())
}

pub fn fidelity_bound_xy_with(cfg: &SourceConfig, j: usize, policy: &SeriesPolicy) -> Result<f64> {
    policy.validate()?;
    cfg.check_class(j)?;
    let Some(n) = cfg.phases.num_phases() else {
        return Ok(1.0);
    };
    if cfg.intensity == 0.0 && j > 0 {
        return domain(format!("photon class {j} is empty at zero intensity"));
    }
    let sums = class_series(cfg.intensity, Some(n), j, policy, |m| {
        half_power_of_two(m) * cos_plus_sin_quarter(m)
    });
    let ratio = sums.weighted / sums.plain;
    Ok((ratio * ratio).clamp(0.0, 1.0))
}

/// First-order expansion in `μ^N` of the single-photon fidelity bound:
/// `1 − 2(1 − 2^{-N/2} cos(Nπ/4)) μ^N/(N+1)!`.
pub fn first_order_fidelity(cfg: &SourceConfig) -> Result<f64> {
    let Some(n) = cfg.phases.num_phases() else {
        return Ok(1.0);
    };
    let mu = cfg.intensity;
    let mut ratio = 1.0;
    for k in 2..=(n as u64 + 1) {
        ratio *= mu / k as f64;
    }
    // ratio = μ^N / (N+1)!
    let phase_term = half_power_of_two(n as u64) * (n as f64 * PI / 4.0).cos();
    Ok(1.0 - 2.0 * (1.0 - phase_term) * ratio)
}

/// Overlap bound `F_{μν}` between the class states of two intensities that
/// share the same phase randomization.
pub fn fidelity_between_intensities(a: &SourceConfig, b: &SourceConfig) -> Result<f64> {
    fidelity_between_intensities_with(a, b, &SeriesPolicy::default())
}

pub fn fidelity_between_intensities_with(a: &SourceConfig, b: &SourceConfig, policy: &SeriesPolicy) -> Result<f64> {
    policy.validate()?;
    if a.phases != b.phases {
        return domain(format!("phase randomization mismatch: {} vs {}", a.phases, b.phases));
    }
    let Some(n) = a.phases.num_phases() else {
        return Ok(1.0);
    };
    if a.intensity == b.intensity {
        return Ok(1.0);
    }
    let cross = class_series((a.intensity * b.intensity).sqrt(), Some(n), 0, policy, |_| 1.0);
    let sa = class_series(a.intensity, Some(n), 0, policy, |_| 1.0);
    let sb = class_series(b.intensity, Some(n), 0, policy, |_| 1.0);
    let f = cross.plain / (sa.plain * sb.plain).sqrt();
    Ok(f.clamp(0.0, 1.0))
}

/// Largest yield deviation compatible with fidelity `F`: `sqrt(1 − F²)`.
pub fn deviation_bound(fidelity: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&fidelity) {
        return domain(format!("fidelity {fidelity} outside [0, 1]"));
    }
    if fidelity == 1.0 {
        return Ok(0.0);
    }
    // (1-F)(1+F) keeps precision when F is close to 1.
    Ok(((1.0 - fidelity) * (1.0 + fidelity)).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn poisson(mu: f64, j: usize) -> f64 {
        let mut p = (-mu).exp();
        for k in 1..=j {
            p *= mu / k as f64;
        }
        p
    }

    #[test]
    fn two_phase_classes_are_hyperbolic() {
        let cfg = SourceConfig::discrete(2, 0.5).unwrap();
        let p0 = class_probability(&cfg, 0).unwrap();
        let p1 = class_probability(&cfg, 1).unwrap();
        assert_relative_eq!(p0, (-0.5f64).exp() * 0.5f64.cosh(), max_relative = 1e-14);
        assert_relative_eq!(p1, (-0.5f64).exp() * 0.5f64.sinh(), max_relative = 1e-14);
        assert!((p0 - 0.683940).abs() < 5e-7);
        assert!((p1 - 0.316060).abs() < 5e-7);
    }

    #[test]
    fn zero_intensity_is_vacuum() {
        for n in [1, 3, 8] {
            let cfg = SourceConfig::discrete(n, 0.0).unwrap();
            assert_eq!(class_probability(&cfg, 0).unwrap(), 1.0);
            for j in 1..n as usize {
                assert_eq!(class_probability(&cfg, j).unwrap(), 0.0);
            }
        }
    }

    #[test]
    fn class_out_of_range_is_rejected() {
        let cfg = SourceConfig::discrete(4, 0.3).unwrap();
        assert!(matches!(class_probability(&cfg, 4), Err(Error::Domain(_))));
        assert!(fidelity_bound_xy(&cfg, 7).is_err());
        let cont = SourceConfig::continuous(0.3).unwrap();
        assert_relative_eq!(
            class_probability(&cont, 7).unwrap(),
            poisson(0.3, 7),
            max_relative = 1e-14
        );
    }

    #[test]
    fn invalid_sources_are_rejected() {
        assert!(SourceConfig::discrete(0, 0.1).is_err());
        assert!(SourceConfig::discrete(3, -0.1).is_err());
        assert!(SourceConfig::continuous(f64::NAN).is_err());
        assert!("0".parse::<PhaseRandomization>().is_err());
        assert_eq!(
            "inf".parse::<PhaseRandomization>().unwrap(),
            PhaseRandomization::Continuous
        );
        assert_eq!(
            " 14 ".parse::<PhaseRandomization>().unwrap(),
            PhaseRandomization::Discrete(14)
        );
    }

    #[test]
    fn normalization_over_classes() {
        for n in 1..=32u32 {
            for mu in [0.01, 0.1, 0.5, 1.0] {
                let cfg = SourceConfig::discrete(n, mu).unwrap();
                let total: f64 = (0..n as usize).map(|j| class_probability(&cfg, j).unwrap()).sum();
                assert!((total - 1.0).abs() < 1e-12, "N={n} mu={mu} total={total}");
            }
        }
    }

    #[test]
    fn many_phases_approach_poisson() {
        for n in [40u32, 64] {
            for mu in [0.01, 0.3, 1.0] {
                let cfg = SourceConfig::discrete(n, mu).unwrap();
                for j in 0..=5 {
                    let diff = (class_probability(&cfg, j).unwrap() - poisson(mu, j)).abs();
                    assert!(diff < 1e-12);
                }
            }
        }
    }

    #[test]
    fn halving_cutoff_is_stable() {
        let coarse = SeriesPolicy::default();
        let fine = SeriesPolicy {
            relative_term_cutoff: coarse.relative_term_cutoff / 2.0,
            ..coarse
        };
        for n in [1u32, 2, 4, 8, 12, 16] {
            for mu in [0.01, 0.1, 0.5, 1.0] {
                let cfg = SourceConfig::discrete(n, mu).unwrap();
                for j in 0..(n as usize).min(3) {
                    let a = class_probability_with(&cfg, j, &coarse).unwrap();
                    let b = class_probability_with(&cfg, j, &fine).unwrap();
                    assert!((a - b).abs() <= 1e-12);
                    let a = fidelity_bound_xy_with(&cfg, j, &coarse).unwrap();
                    let b = fidelity_bound_xy_with(&cfg, j, &fine).unwrap();
                    assert!((a - b).abs() <= 1e-12);
                }
                let other = cfg.with_intensity(mu / 3.0).unwrap();
                let a = fidelity_between_intensities_with(&cfg, &other, &coarse).unwrap();
                let b = fidelity_between_intensities_with(&cfg, &other, &fine).unwrap();
                assert!((a - b).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn fidelity_bound_examples() {
        let cont = SourceConfig::continuous(0.4).unwrap();
        assert_eq!(fidelity_bound_xy(&cont, 3).unwrap(), 1.0);

        let cfg = SourceConfig::discrete(8, 0.5).unwrap();
        let f = fidelity_bound_xy(&cfg, 1).unwrap();
        assert!(f < 1.0 && f > 1.0 - 5e-8, "{f}");

        let unrandomized = SourceConfig::discrete(1, 0.5).unwrap();
        assert!(fidelity_bound_xy(&unrandomized, 0).unwrap() < 1.0);

        let vacuum = SourceConfig::discrete(4, 0.0).unwrap();
        assert_eq!(fidelity_bound_xy(&vacuum, 0).unwrap(), 1.0);
        assert!(fidelity_bound_xy(&vacuum, 1).is_err());
    }

    #[test]
    fn first_order_examples() {
        let cfg = SourceConfig::discrete(8, 0.5).unwrap();
        let expected = 1.0 - 2.0 * (1.0 - 1.0 / 16.0) * 0.5f64.powi(8) / 362_880.0;
        assert_relative_eq!(first_order_fidelity(&cfg).unwrap(), expected, max_relative = 1e-15);
        assert!((1.0 - first_order_fidelity(&cfg).unwrap() - 2.018e-8).abs() < 1e-11);

        let cfg = SourceConfig::discrete(4, 1.0).unwrap();
        assert_relative_eq!(
            first_order_fidelity(&cfg).unwrap(),
            1.0 - 2.0 * 1.25 / 120.0,
            max_relative = 1e-14
        );
        let big = SourceConfig::discrete(60, 0.9).unwrap();
        assert!(1.0 - first_order_fidelity(&big).unwrap() < 1e-80);
    }

    #[test]
    fn first_order_is_below_series_in_small_regime() {
        for n in 2..=20u32 {
            for mu in [0.05, 0.1, 0.2, 0.3, 0.5, 0.8] {
                let cfg = SourceConfig::discrete(n, mu).unwrap();
                let mut small = 1.0;
                for k in 2..=(n + 1) {
                    small *= mu / k as f64;
                }
                if small < 1e-3 {
                    let full = fidelity_bound_xy(&cfg, 1).unwrap();
                    let first = first_order_fidelity(&cfg).unwrap();
                    assert!(full >= first - 1e-15, "N={n} mu={mu}: {full} < {first}");
                }
            }
        }
    }

    #[test]
    fn intensity_fidelity_examples() {
        let a = SourceConfig::discrete(2, 0.5).unwrap();
        let b = SourceConfig::discrete(2, 0.1).unwrap();
        let expected = 0.05f64.sqrt().cosh() / (0.5f64.cosh() * 0.1f64.cosh()).sqrt();
        let f = fidelity_between_intensities(&a, &b).unwrap();
        assert_relative_eq!(f, expected, max_relative = 1e-14);
        assert!((f - 0.9629).abs() < 1e-4);

        assert_eq!(fidelity_between_intensities(&a, &a).unwrap(), 1.0);
        let c = SourceConfig::discrete(3, 0.1).unwrap();
        assert!(fidelity_between_intensities(&a, &c).is_err());

        let big_a = SourceConfig::discrete(50, 0.5).unwrap();
        let big_b = SourceConfig::discrete(50, 0.1).unwrap();
        assert!(1.0 - fidelity_between_intensities(&big_a, &big_b).unwrap() < 1e-15);

        let ca = SourceConfig::continuous(0.5).unwrap();
        let cb = SourceConfig::continuous(0.1).unwrap();
        assert_eq!(fidelity_between_intensities(&ca, &cb).unwrap(), 1.0);
    }

    #[test]
    fn deviation_bound_edges() {
        assert_eq!(deviation_bound(1.0).unwrap(), 0.0);
        assert_eq!(deviation_bound(0.0).unwrap(), 1.0);
        assert_relative_eq!(
            deviation_bound(0.9629).unwrap(),
            (1.0f64 - 0.9629 * 0.9629).sqrt(),
            max_relative = 1e-14
        );
        assert!((deviation_bound(0.9629).unwrap() - 0.2699).abs() < 1e-4);
        assert!(deviation_bound(1.0 + 1e-12).is_err());
        assert!(deviation_bound(-0.1).is_err());
    }

    #[test]
    fn deviation_bound_is_decreasing() {
        let mut prev = f64::INFINITY;
        for k in 0..=1000 {
            let f = k as f64 / 1000.0;
            let e = deviation_bound(f).unwrap();
            assert!(e <= prev);
            prev = e;
        }
    }
}

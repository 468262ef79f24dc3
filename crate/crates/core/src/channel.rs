//! Lossy-fiber simulation model for symmetric MDI links.
//!
//! Both parties send through identical links of transmittance
//! `η = 10^{−α L/10} η₁`. Coincidence gains factorize per party and errors
//! come from dark counts plus a constant misalignment rate.

use std::fmt;
use std::str::FromStr;

use crate::error::{domain, Error, Result};

/// Channel and detection parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelParams {
    pub distance_km: f64,
    pub fiber_loss_db_per_km: f64,
    /// Losses other than the fiber (detector efficiency, optics), `η₁`.
    pub other_loss: f64,
    pub misalignment: f64,
    pub dark_count: f64,
    pub ec_efficiency: f64,
}

impl Default for ChannelParams {
    fn default() -> Self {
        Self {
            distance_km: 0.0,
            fiber_loss_db_per_km: 0.2,
            other_loss: 0.045,
            misalignment: 0.033,
            dark_count: 1.7e-6,
            ec_efficiency: 1.16,
        }
    }
}

impl ChannelParams {
    pub fn at_distance(&self, distance_km: f64) -> Self {
        Self { distance_km, ..*self }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.distance_km,
            self.fiber_loss_db_per_km,
            self.other_loss,
            self.misalignment,
            self.dark_count,
            self.ec_efficiency,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return domain("channel parameters must be finite");
        }
        if self.distance_km < 0.0 {
            return domain("distance_km must be >= 0");
        }
        if self.fiber_loss_db_per_km < 0.0 {
            return domain("fiber_loss_db_per_km must be >= 0");
        }
        if !(self.other_loss > 0.0 && self.other_loss <= 1.0) {
            return domain("other_loss must lie in (0, 1]");
        }
        if !(0.0..=0.5).contains(&self.misalignment) {
            return domain("misalignment must lie in [0, 0.5]");
        }
        if !(0.0..1.0).contains(&self.dark_count) {
            return domain("dark_count must lie in [0, 1)");
        }
        if self.ec_efficiency < 1.0 {
            return domain("ec_efficiency must be >= 1");
        }
        Ok(())
    }
}

/// Overall single-link transmittance `η`.
pub fn transmittance(params: &ChannelParams) -> f64 {
    10f64.powf(-params.fiber_loss_db_per_km * params.distance_km / 10.0) * params.other_loss
}

/// One of the three intensity settings each party chooses from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Setting {
    Signal,
    Decoy,
    Vacuum,
}

impl Setting {
    pub const ALL: [Setting; 3] = [Setting::Signal, Setting::Decoy, Setting::Vacuum];

    pub fn index(self) -> usize {
        match self {
            Setting::Signal => 0,
            Setting::Decoy => 1,
            Setting::Vacuum => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Setting::Signal => "signal",
            Setting::Decoy => "decoy",
            Setting::Vacuum => "vacuum",
        }
    }
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Setting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "signal" => Ok(Setting::Signal),
            "decoy" => Ok(Setting::Decoy),
            "vacuum" => Ok(Setting::Vacuum),
            other => domain(format!("unknown intensity setting '{other}'")),
        }
    }
}

/// Signal and decoy intensities; the vacuum setting is always 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntensitySettings {
    pub signal: f64,
    pub decoy: f64,
}

impl IntensitySettings {
    pub fn new(signal: f64, decoy: f64) -> Result<Self> {
        if !(signal.is_finite() && decoy.is_finite() && signal > decoy && decoy >= 0.0) {
            return domain(format!(
                "intensities must satisfy signal > decoy >= 0, got signal={signal} decoy={decoy}"
            ));
        }
        Ok(Self { signal, decoy })
    }

    pub fn intensity(&self, setting: Setting) -> f64 {
        match setting {
            Setting::Signal => self.signal,
            Setting::Decoy => self.decoy,
            Setting::Vacuum => 0.0,
        }
    }
}

/// Gain and error rate for one pair of settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub gain: f64,
    pub error_rate: f64,
    /// Set when the error rate was forced into `[0, 1/2]` (or defined by
    /// convention because the gain vanished).
    pub clamped: bool,
}

impl Observation {
    pub fn new(gain: f64, error_rate: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&gain) {
            return domain(format!("gain {gain} outside [0, 1]"));
        }
        if !(0.0..=1.0).contains(&error_rate) {
            return domain(format!("error rate {error_rate} outside [0, 1]"));
        }
        Ok(Self {
            gain,
            error_rate,
            clamped: false,
        })
    }

    /// `Q·E`.
    pub fn error_product(&self) -> f64 {
        self.gain * self.error_rate
    }
}

/// Observations for every (Alice setting, Bob setting) pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObservedStats {
    entries: [[Observation; 3]; 3],
}

impl ObservedStats {
    pub fn from_fn(mut f: impl FnMut(Setting, Setting) -> Observation) -> Self {
        let entries = Setting::ALL.map(|a| Setting::ALL.map(|b| f(a, b)));
        Self { entries }
    }

    pub fn get(&self, alice: Setting, bob: Setting) -> &Observation {
        &self.entries[alice.index()][bob.index()]
    }

    pub fn set(&mut self, alice: Setting, bob: Setting, obs: Observation) {
        self.entries[alice.index()][bob.index()] = obs;
    }

    pub fn iter(&self) -> impl Iterator<Item = (Setting, Setting, &Observation)> {
        Setting::ALL
            .into_iter()
            .flat_map(move |a| Setting::ALL.into_iter().map(move |b| (a, b, self.get(a, b))))
    }
}

/// Gain and error rate for intensities `(m, n)` under the simulation model.
pub fn simulate_pair(params: &ChannelParams, m: f64, n: f64) -> Observation {
    let eta = transmittance(params);
    let y0 = params.dark_count;
    // 1 - e^{-ηx} without cancellation for tiny ηx.
    let click_a = -(-eta * m).exp_m1();
    let click_b = -(-eta * n).exp_m1();
    let gain = (y0 + click_a) * (y0 + click_b);
    let error_product = y0 * (y0 + click_a + click_b) / 2.0 + params.misalignment * click_a * click_b;
    if gain <= 0.0 {
        return Observation {
            gain: 0.0,
            error_rate: 0.5,
            clamped: true,
        };
    }
    let raw = error_product / gain;
    let error_rate = raw.clamp(0.0, 0.5);
    Observation {
        gain,
        error_rate,
        clamped: error_rate != raw,
    }
}

/// Observed statistics for every setting pair.
pub fn simulate_stats(params: &ChannelParams, alice: &IntensitySettings, bob: &IntensitySettings) -> ObservedStats {
    ObservedStats::from_fn(|a, b| simulate_pair(params, alice.intensity(a), bob.intensity(b)))
}

//! Two-stage linear-programming decoy estimation.
//!
//! Observed gains decompose over the photon classes of both parties:
//!
//! ```text
//! Q^{α,β}   = Σ_i P_i^α Y_i^{α,β},   Y_i^{α,β} = Σ_j P_j^β Y_{i,j}^{α,β}
//! Q^{α,β}E  = Σ_i P_i^α W_i^{α,β},   W_i^{α,β} = Σ_j P_j^β (Y e)_{i,j}^{α,β}
//! ```
//!
//! With discrete phases the class yields depend on the intensity setting, but
//! only by at most `ε = sqrt(1 − F²)` between a non-signal setting and the
//! signal setting. Stage 1 bounds `Y_i^{μ,β}` (or `W_i^{μ,β}`) for every Bob
//! setting `β`; stage 2 feeds those intervals into a second family of LPs for
//! `Y_{i,j}^{μ,μ}`. Only the lowest `K` classes are kept as variables. The
//! remaining classes contribute an unknown amount in `[0, 1 − Σ_{i<K} P_i]`
//! to every row. By default that tail is further tied to the signal row: for
//! photon numbers `n ≥ K` the weight ratio `P_n^α / P_n^μ` never exceeds
//! `c_α = e^{μ−α}(α/μ)^K` when `α < μ`, so the tail of row `α` is at most
//! `c_α` times the tail of the signal row. This is implied by the untruncated
//! system and keeps low-intensity rows informative at small gains.

use log::warn;

use crate::channel::{IntensitySettings, ObservedStats, Setting};
use crate::error::{domain, Result};
use crate::fock::{
    class_probabilities, deviation_bound, fidelity_between_intensities_with, PhaseRandomization, SeriesPolicy,
    SourceConfig,
};
use crate::lp::{solve_with, LinearProgram, LpStatus, Relation, Sense, SolverOptions};

/// How many times the `ε` band is doubled before an LP is declared vacuous.
const MAX_WIDENINGS: u32 = 3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimationConfig {
    /// Number of photon classes kept as LP variables (`K`).
    pub truncation: usize,
    /// Number of non-signal settings (`M`); the data model fixes it at 2
    /// (decoy and vacuum).
    pub num_decoys: usize,
    /// Replaces the fidelity-derived deviation bound for non-signal settings.
    pub epsilon_override: Option<f64>,
    pub tail: TailModel,
    pub series: SeriesPolicy,
    pub solver: SolverOptions,
}

/// Treatment of the relaxed classes `i ≥ K`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TailModel {
    /// Each row's tail anywhere in `[0, 1 − Σ_{i<K} P_i]`.
    Independent,
    /// As `Independent`, plus the tail of each lower-intensity row bounded by
    /// `c_α` times the signal-row tail.
    #[default]
    SignalCoupled,
}

impl Default for EstimationConfig {
    fn default() -> Self {
        Self {
            truncation: 3,
            num_decoys: 2,
            epsilon_override: None,
            tail: TailModel::default(),
            series: SeriesPolicy::default(),
            solver: SolverOptions::default(),
        }
    }
}

impl EstimationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.truncation < 2 {
            return domain("truncation K must be at least 2");
        }
        if self.num_decoys != 2 {
            return domain(format!(
                "{} decoy settings requested; the observation model has exactly 2 (decoy and vacuum)",
                self.num_decoys
            ));
        }
        if let Some(e) = self.epsilon_override {
            if !(0.0..=1.0).contains(&e) {
                return domain(format!("epsilon_override {e} outside [0, 1]"));
            }
        }
        self.series.validate()
    }
}

/// What the LPs bound: class yields or class yield-error products.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Target {
    Gain,
    ErrorProduct,
}

impl Target {
    fn data(self, stats: &ObservedStats, alice: Setting, bob: Setting) -> f64 {
        let obs = stats.get(alice, bob);
        match self {
            Target::Gain => obs.gain,
            Target::ErrorProduct => obs.error_product(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const VACUOUS: Interval = Interval { lo: 0.0, hi: 1.0 };

    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn contains(&self, x: f64, tol: f64) -> bool {
        x >= self.lo - tol && x <= self.hi + tol
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn is_vacuous(&self) -> bool {
        *self == Self::VACUOUS
    }
}

/// Per-setting source states sharing one phase randomization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceSet {
    configs: [SourceConfig; 3],
}

impl SourceSet {
    pub fn new(phases: PhaseRandomization, settings: &IntensitySettings) -> Result<Self> {
        let configs = [
            SourceConfig::new(phases, settings.signal)?,
            SourceConfig::new(phases, settings.decoy)?,
            SourceConfig::new(phases, 0.0)?,
        ];
        Ok(Self { configs })
    }

    pub fn get(&self, setting: Setting) -> &SourceConfig {
        &self.configs[setting.index()]
    }

    pub fn phases(&self) -> PhaseRandomization {
        self.configs[0].phases
    }
}

/// `ε` between the signal state and another setting of the same source.
pub fn compute_epsilon(signal: &SourceConfig, other: &SourceConfig) -> Result<f64> {
    compute_epsilon_with(signal, other, &SeriesPolicy::default())
}

pub fn compute_epsilon_with(signal: &SourceConfig, other: &SourceConfig, policy: &SeriesPolicy) -> Result<f64> {
    deviation_bound(fidelity_between_intensities_with(signal, other, policy)?)
}

/// A fallback taken while solving one family of LPs.
#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostic {
    pub stage: u8,
    pub target: Target,
    /// Bob setting (stage 1) or Alice class index (stage 2).
    pub row: String,
    pub widenings: u32,
    pub vacuous: bool,
}

/// Class probabilities, tails and deviation bounds for the three settings.
#[derive(Debug, Clone)]
struct ClassModel {
    k: usize,
    probs: [Vec<f64>; 3],
    tails: [f64; 3],
    /// Tail coupling factor to the signal row; `None` leaves the tail free.
    coupling: [Option<f64>; 3],
    eps: [f64; 3],
}

impl ClassModel {
    fn new(sources: &SourceSet, cfg: &EstimationConfig) -> Result<Self> {
        cfg.validate()?;
        let k = sources
            .phases()
            .num_classes()
            .map_or(cfg.truncation, |n| n.min(cfg.truncation));
        let mut probs: [Vec<f64>; 3] = Default::default();
        let mut tails = [0.0; 3];
        let mut eps = [0.0; 3];
        let mut coupling = [None; 3];
        let signal = sources.get(Setting::Signal);
        let mu = signal.intensity;
        for s in Setting::ALL {
            let alpha = sources.get(s).intensity;
            if s != Setting::Signal && cfg.tail == TailModel::SignalCoupled && alpha < mu {
                coupling[s.index()] = Some((mu - alpha).exp() * (alpha / mu).powi(k as i32));
            }
            let p = class_probabilities(sources.get(s), k, &cfg.series)?;
            tails[s.index()] = (1.0 - p.iter().sum::<f64>()).max(0.0);
            probs[s.index()] = p;
            if s != Setting::Signal {
                eps[s.index()] = match cfg.epsilon_override {
                    Some(e) => e,
                    None => compute_epsilon_with(signal, sources.get(s), &cfg.series)?,
                };
            }
        }
        Ok(Self {
            k,
            probs,
            tails,
            coupling,
            eps,
        })
    }

    /// Range of `Σ_{i<K} P_i^s x_i + t_s` implied by a measured value in `[lo, hi]`.
    fn row_range(&self, s: Setting, lo: f64, hi: f64, widening: f64) -> (f64, f64) {
        let e = self.eps[s.index()] * widening;
        (lo - e, hi + e)
    }
}

/// One family of LPs: variables `x_0..x_{K-1}` in `[0, 1]` plus one tail
/// variable `t_s` per setting, one range row per setting. Solved for the min
/// and max of selected `x` variables.
struct RangeSystem<'a> {
    model: &'a ClassModel,
    solver: &'a SolverOptions,
    /// Measured `[lo, hi]` per setting (points in stage 1).
    measured: [(f64, f64); 3],
}

enum SystemOutcome {
    Bounds(Vec<Option<Interval>>, u32),
    Vacuous,
}

impl RangeSystem<'_> {
    fn build(&self, widening: f64, scale: f64) -> Result<LinearProgram> {
        let k = self.model.k;
        let n = k + 3;
        let mut upper = vec![1.0 / scale; k];
        upper.extend(self.model.tails.iter().map(|t| t / scale));
        let mut lp = LinearProgram::new(vec![0.0; n], upper, vec![0.0; n], Sense::Minimize)?;
        for s in Setting::ALL {
            let (lo, hi) = self.measured[s.index()];
            let (lo, hi) = self.model.row_range(s, lo, hi, widening);
            let mut coeffs = self.model.probs[s.index()].clone();
            coeffs.extend([0.0; 3]);
            coeffs[k + s.index()] = 1.0;
            let capacity: f64 = coeffs.iter().sum::<f64>() / scale;
            let lo = lo / scale;
            let hi = hi / scale;
            // Rows implied by the variable bounds are dropped.
            let lo = if lo > 0.0 { lo } else { f64::NEG_INFINITY };
            let hi = if hi < capacity { hi } else { f64::INFINITY };
            if lo.is_finite() || hi.is_finite() {
                lp.add_range(coeffs, lo, hi)?;
            }
            if let Some(c) = self.model.coupling[s.index()] {
                if self.model.tails[s.index()] > 0.0 {
                    let mut row = vec![0.0; n];
                    row[k + s.index()] = 1.0;
                    row[k + Setting::Signal.index()] = -c;
                    lp.add_constraint(row, Relation::Le, 0.0)?;
                }
            }
        }
        Ok(lp)
    }

    fn solve(&self, wanted: &[usize]) -> Result<SystemOutcome> {
        let scale = self.measured.iter().map(|&(_, hi)| hi).fold(0.0f64, f64::max);
        let scale = if scale > 0.0 { scale.min(1.0) } else { 1.0 };
        let k = self.model.k;
        let mut widening = 1.0;
        for attempt in 0..=MAX_WIDENINGS {
            let mut lp = self.build(widening, scale)?;
            let mut out = vec![None; k];
            let mut feasible = true;
            for &v in wanted {
                let mut obj = vec![0.0; k + 3];
                obj[v] = 1.0;
                lp.set_objective(obj, Sense::Minimize)?;
                let lo = solve_with(&lp, self.solver);
                if lo.status != LpStatus::Optimal {
                    feasible = false;
                    break;
                }
                lp.set_sense(Sense::Maximize);
                let hi = solve_with(&lp, self.solver);
                if hi.status != LpStatus::Optimal {
                    feasible = false;
                    break;
                }
                let lo = (lo.objective_value * scale).clamp(0.0, 1.0);
                let hi = (hi.objective_value * scale).clamp(lo, 1.0);
                out[v] = Some(Interval::new(lo, hi));
            }
            if feasible {
                return Ok(SystemOutcome::Bounds(out, attempt));
            }
            widening *= 2.0;
        }
        Ok(SystemOutcome::Vacuous)
    }
}

/// Stage-1 intervals for `Y_i^{μ,β}` (or `W_i^{μ,β}`), indexed by Bob setting
/// then class.
#[derive(Debug, Clone, PartialEq)]
pub struct Stage1Bounds {
    pub target: Target,
    pub intervals: [Vec<Interval>; 3],
    pub diagnostics: Vec<Diagnostic>,
}

impl Stage1Bounds {
    pub fn get(&self, bob: Setting, i: usize) -> Interval {
        self.intervals[bob.index()][i]
    }

    pub fn k(&self) -> usize {
        self.intervals[0].len()
    }
}

/// Stage-2 intervals for `Y_{i,j}^{μ,μ}` (or the error product), `[i][j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Stage2Bounds {
    pub target: Target,
    pub intervals: Vec<Vec<Interval>>,
    pub diagnostics: Vec<Diagnostic>,
}

impl Stage2Bounds {
    pub fn get(&self, i: usize, j: usize) -> Interval {
        self.intervals[i][j]
    }
}

fn record(diags: &mut Vec<Diagnostic>, stage: u8, target: Target, row: String, widenings: u32, vacuous: bool) {
    if widenings == 0 && !vacuous {
        return;
    }
    if vacuous {
        warn!("stage {stage} {target:?} LP for {row} infeasible after {MAX_WIDENINGS} widenings; using [0, 1]");
    } else {
        warn!("stage {stage} {target:?} LP for {row} needed {widenings} epsilon doubling(s)");
    }
    diags.push(Diagnostic {
        stage,
        target,
        row,
        widenings,
        vacuous,
    });
}

fn stage1_impl(
    stats: &ObservedStats,
    model: &ClassModel,
    cfg: &EstimationConfig,
    target: Target,
    wanted: &[usize],
) -> Result<Stage1Bounds> {
    let k = model.k;
    let mut intervals: [Vec<Interval>; 3] = Default::default();
    let mut diagnostics = Vec::new();
    for bob in Setting::ALL {
        let measured = Setting::ALL.map(|alice| {
            let d = target.data(stats, alice, bob);
            (d, d)
        });
        let system = RangeSystem {
            model,
            solver: &cfg.solver,
            measured,
        };
        let row = vec![Interval::VACUOUS; k];
        intervals[bob.index()] = match system.solve(wanted)? {
            SystemOutcome::Bounds(found, widenings) => {
                record(&mut diagnostics, 1, target, format!("bob={bob}"), widenings, false);
                found.into_iter().map(|b| b.unwrap_or(Interval::VACUOUS)).collect()
            }
            SystemOutcome::Vacuous => {
                record(&mut diagnostics, 1, target, format!("bob={bob}"), MAX_WIDENINGS, true);
                row
            }
        };
    }
    Ok(Stage1Bounds {
        target,
        intervals,
        diagnostics,
    })
}

fn stage2_impl(
    stage1: &Stage1Bounds,
    model: &ClassModel,
    cfg: &EstimationConfig,
    rows: &[usize],
    wanted: &[usize],
) -> Result<Stage2Bounds> {
    let k = model.k;
    if stage1.k() != k {
        return domain(format!("stage-1 bounds have {} classes, expected {k}", stage1.k()));
    }
    let mut intervals = vec![vec![Interval::VACUOUS; k]; k];
    let mut diagnostics = Vec::new();
    for &i in rows {
        let measured = Setting::ALL.map(|bob| {
            let iv = stage1.get(bob, i);
            (iv.lo, iv.hi)
        });
        let system = RangeSystem {
            model,
            solver: &cfg.solver,
            measured,
        };
        match system.solve(wanted)? {
            SystemOutcome::Bounds(found, widenings) => {
                record(&mut diagnostics, 2, stage1.target, format!("i={i}"), widenings, false);
                for (j, b) in found.into_iter().enumerate() {
                    if let Some(b) = b {
                        intervals[i][j] = b;
                    }
                }
            }
            SystemOutcome::Vacuous => {
                record(
                    &mut diagnostics,
                    2,
                    stage1.target,
                    format!("i={i}"),
                    MAX_WIDENINGS,
                    true,
                );
            }
        }
    }
    Ok(Stage2Bounds {
        target: stage1.target,
        intervals,
        diagnostics,
    })
}

/// Stage 1 for every class `i < K` and every Bob setting.
pub fn estimate_stage1(
    stats: &ObservedStats,
    sources: &SourceSet,
    cfg: &EstimationConfig,
    target: Target,
) -> Result<Stage1Bounds> {
    let model = ClassModel::new(sources, cfg)?;
    let all: Vec<usize> = (0..model.k).collect();
    stage1_impl(stats, &model, cfg, target, &all)
}

/// Stage 2 for every pair `i, j < K`.
pub fn estimate_stage2(stage1: &Stage1Bounds, sources: &SourceSet, cfg: &EstimationConfig) -> Result<Stage2Bounds> {
    let model = ClassModel::new(sources, cfg)?;
    let all: Vec<usize> = (0..model.k).collect();
    stage2_impl(stage1, &model, cfg, &all, &all)
}

/// Upper bound on the single-photon bit error rate, `min(1, (Ye)^hi / Y^lo)`.
///
/// Returns `(value, vacuous)`; a zero yield lower bound gives the vacuous 1.
pub fn error_rate_upper(y11_lo: f64, ye11_hi: f64) -> (f64, bool) {
    if ye11_hi <= 0.0 {
        (0.0, false)
    } else if y11_lo <= 0.0 {
        (1.0, true)
    } else {
        ((ye11_hi / y11_lo).min(1.0), false)
    }
}

/// Complete estimation output.
#[derive(Debug, Clone, PartialEq)]
pub struct YieldBounds {
    pub gain_stage1: Stage1Bounds,
    pub gain: Stage2Bounds,
    pub error_stage1: Stage1Bounds,
    pub error: Stage2Bounds,
    pub e11_upper: f64,
    pub e11_vacuous: bool,
}

impl YieldBounds {
    pub fn k(&self) -> usize {
        self.gain.intervals.len()
    }

    pub fn y11(&self) -> Interval {
        if self.k() < 2 {
            Interval::VACUOUS
        } else {
            self.gain.get(1, 1)
        }
    }

    pub fn ye11(&self) -> Interval {
        if self.k() < 2 {
            Interval::VACUOUS
        } else {
            self.error.get(1, 1)
        }
    }

    pub fn diagnostics(&self) -> impl Iterator<Item = &Diagnostic> {
        self.gain_stage1
            .diagnostics
            .iter()
            .chain(&self.gain.diagnostics)
            .chain(&self.error_stage1.diagnostics)
            .chain(&self.error.diagnostics)
    }
}

/// Both stages for gains and error products, all classes.
pub fn estimate(stats: &ObservedStats, sources: &SourceSet, cfg: &EstimationConfig) -> Result<YieldBounds> {
    let model = ClassModel::new(sources, cfg)?;
    let all: Vec<usize> = (0..model.k).collect();
    let gain_stage1 = stage1_impl(stats, &model, cfg, Target::Gain, &all)?;
    let gain = stage2_impl(&gain_stage1, &model, cfg, &all, &all)?;
    let error_stage1 = stage1_impl(stats, &model, cfg, Target::ErrorProduct, &all)?;
    let error = stage2_impl(&error_stage1, &model, cfg, &all, &all)?;
    let (y11, ye11) = if model.k >= 2 {
        (gain.get(1, 1), error.get(1, 1))
    } else {
        (Interval::VACUOUS, Interval::VACUOUS)
    };
    let (e11_upper, e11_vacuous) = error_rate_upper(y11.lo, ye11.hi);
    Ok(YieldBounds {
        gain_stage1,
        gain,
        error_stage1,
        error,
        e11_upper,
        e11_vacuous,
    })
}

/// The single-photon quantities the key rate consumes.
#[derive(Debug, Clone, PartialEq)]
pub struct SinglePhotonBounds {
    pub y11: Interval,
    pub ye11: Interval,
    pub e11_upper: f64,
    pub e11_vacuous: bool,
    pub diagnostics: Vec<Diagnostic>,
}

/// Same `(1,1)` intervals as [`estimate`], solving only the LPs they depend on.
pub fn estimate_single_photon(
    stats: &ObservedStats,
    sources: &SourceSet,
    cfg: &EstimationConfig,
) -> Result<SinglePhotonBounds> {
    let model = ClassModel::new(sources, cfg)?;
    if model.k < 2 {
        return Ok(SinglePhotonBounds {
            y11: Interval::VACUOUS,
            ye11: Interval::VACUOUS,
            e11_upper: 1.0,
            e11_vacuous: true,
            diagnostics: Vec::new(),
        });
    }
    let mut diagnostics = Vec::new();
    let mut single = |target: Target| -> Result<Interval> {
        let s1 = stage1_impl(stats, &model, cfg, target, &[1])?;
        let s2 = stage2_impl(&s1, &model, cfg, &[1], &[1])?;
        let value = s2.get(1, 1);
        diagnostics.extend(s1.diagnostics);
        diagnostics.extend(s2.diagnostics);
        Ok(value)
    };
    let y11 = single(Target::Gain)?;
    let ye11 = single(Target::ErrorProduct)?;
    let (e11_upper, e11_vacuous) = error_rate_upper(y11.lo, ye11.hi);
    Ok(SinglePhotonBounds {
        y11,
        ye11,
        e11_upper,
        e11_vacuous,
        diagnostics,
    })
}

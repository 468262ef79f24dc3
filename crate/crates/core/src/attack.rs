//! Unambiguous-state-discrimination attack on sources without phase
//! randomization.
//!
//! Eve tells signal from decoy pulses with probability `q_opt`, measures the
//! photon number and forwards selectively so that the per-party gains still
//! read `1 − e^{−ηα}`. The honest decoy analysis then certifies a single-photon
//! gain `R^l` that can exceed the true single-photon gain `R^u` left to the
//! parties. Dark counts and errors are ignored throughout this module.

use std::fmt;

use crate::error::{domain, Error, Result};
use crate::lp::{solve, LinearProgram, LpStatus, Sense};

/// Relative gain-matching tolerances tried in order.
pub const TOLERANCE_LADDER: [f64; 3] = [1e-6, 1e-4, 1e-2];

/// `q_opt = 1 − exp(−|√μ − √ν|²/4)`.
pub fn usd_success_probability(mu: f64, nu: f64) -> Result<f64> {
    if !(mu >= 0.0 && nu >= 0.0 && mu.is_finite() && nu.is_finite()) {
        return domain(format!("intensities must be finite and >= 0, got mu={mu} nu={nu}"));
    }
    let d = mu.sqrt() - nu.sqrt();
    Ok(-(-d * d / 4.0).exp_m1())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttackScenario {
    pub mu: f64,
    pub nu: f64,
    pub eta: f64,
    pub max_photon_number: usize,
}

impl AttackScenario {
    pub fn new(mu: f64, nu: f64, eta: f64) -> Result<Self> {
        let s = Self {
            mu,
            nu,
            eta,
            max_photon_number: 10,
        };
        s.validate()?;
        Ok(s)
    }

    /// The transmittance Eve can just afford: `η = q_opt μ / 2`.
    pub fn with_matched_loss(mu: f64, nu: f64) -> Result<Self> {
        let q = usd_success_probability(mu, nu)?;
        Self::new(mu, nu, q * mu / 2.0)
    }

    pub fn validate(&self) -> Result<()> {
        usd_success_probability(self.mu, self.nu)?;
        if !(0.0..=1.0).contains(&self.eta) {
            return domain(format!("transmittance {} outside [0, 1]", self.eta));
        }
        if self.max_photon_number == 0 {
            return domain("max_photon_number must be >= 1");
        }
        Ok(())
    }

    /// `μ > ν > μ²/2`, where the closed-form policy is meant to apply.
    pub fn in_documented_regime(&self) -> bool {
        self.mu > self.nu && self.nu > self.mu * self.mu / 2.0
    }

    /// Honest per-party gain `1 − e^{−ηα}`.
    pub fn normal_gain(&self, alpha: f64) -> f64 {
        -(-self.eta * alpha).exp_m1()
    }
}

/// Poisson weights `e^{−x} x^i / i!` for `i = 1..=cutoff`, and the tail beyond.
fn poisson_weights(x: f64, cutoff: usize) -> (Vec<f64>, f64) {
    let mut w = Vec::with_capacity(cutoff);
    let mut t = (-x).exp();
    for i in 1..=cutoff {
        t *= x / i as f64;
        w.push(t);
    }
    // 1 − e^{−x} − Σ, written to avoid cancellation for small x.
    let tail = (-(-x).exp_m1() - w.iter().sum::<f64>()).max(0.0);
    (w, tail)
}

/// Forwarding probabilities `Z_i` for photon numbers `i = 1..=cutoff`.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardingPolicy {
    pub z_mu: Vec<f64>,
    pub z_nu: Vec<f64>,
    /// Gain contributed by photon numbers beyond the cutoff (already scaled
    /// by `q_opt`).
    pub tail_mu: f64,
    pub tail_nu: f64,
}

impl ForwardingPolicy {
    pub fn z1_mu(&self) -> f64 {
        self.z_mu.first().copied().unwrap_or(0.0)
    }

    /// The closed-form choice `Z_2^μ = 1`, `Z_1^ν = μ²/(2ν)`, all else 0.
    pub fn closed_form(scenario: &AttackScenario) -> Self {
        let n = scenario.max_photon_number.max(2);
        let mut z_mu = vec![0.0; n];
        let mut z_nu = vec![0.0; n];
        z_mu[1] = 1.0;
        z_nu[0] = if scenario.nu > 0.0 {
            (scenario.mu * scenario.mu / (2.0 * scenario.nu)).min(1.0)
        } else {
            0.0
        };
        Self {
            z_mu,
            z_nu,
            tail_mu: 0.0,
            tail_nu: 0.0,
        }
    }

    /// Eve's faked per-party gains `(Q_μ, Q_ν)`.
    pub fn attack_gains(&self, scenario: &AttackScenario) -> Result<(f64, f64)> {
        let q = usd_success_probability(scenario.mu, scenario.nu)?;
        let gain = |x: f64, z: &[f64], tail: f64| {
            let (w, _) = poisson_weights(x, z.len());
            q * z.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() + tail
        };
        Ok((
            gain(scenario.mu, &self.z_mu, self.tail_mu),
            gain(scenario.nu, &self.z_nu, self.tail_nu),
        ))
    }

    /// Relative mismatch `(Q_attack − Q_normal)/Q_normal` for signal and decoy;
    /// absolute when the normal gain is 0.
    pub fn residuals(&self, scenario: &AttackScenario) -> Result<(f64, f64)> {
        let (qa_mu, qa_nu) = self.attack_gains(scenario)?;
        let rel = |a: f64, n: f64| if n > 0.0 { (a - n) / n } else { a };
        Ok((
            rel(qa_mu, scenario.normal_gain(scenario.mu)),
            rel(qa_nu, scenario.normal_gain(scenario.nu)),
        ))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicySolution {
    pub policy: ForwardingPolicy,
    pub z1_mu_min: f64,
    /// Relative tolerance at which the gains were matched.
    pub tolerance: f64,
}

/// Minimize `Z_1^μ` subject to matching both honest gains.
pub fn find_policy(scenario: &AttackScenario) -> Result<PolicySolution> {
    scenario.validate()?;
    let q = usd_success_probability(scenario.mu, scenario.nu)?;
    let c = scenario.max_photon_number;
    let (w_mu, t_mu) = poisson_weights(scenario.mu, c);
    let (w_nu, t_nu) = poisson_weights(scenario.nu, c);
    let target_mu = scenario.normal_gain(scenario.mu);
    let target_nu = scenario.normal_gain(scenario.nu);

    // Variables: Z^μ_1..c, Z^ν_1..c, tail_μ, tail_ν. Each row is divided by its target.
    let n = 2 * c + 2;
    let mut upper = vec![1.0; 2 * c];
    upper.push(q * t_mu);
    upper.push(q * t_nu);
    let mut objective = vec![0.0; n];
    objective[0] = 1.0;

    let row = |w: &[f64], offset: usize, tail_var: usize, target: f64| -> (Vec<f64>, f64) {
        let scale = if target > 0.0 { target } else { 1.0 };
        let mut r = vec![0.0; n];
        for (i, wi) in w.iter().enumerate() {
            r[offset + i] = q * wi / scale;
        }
        r[tail_var] = 1.0 / scale;
        (r, target / scale)
    };
    let (row_mu, rhs_mu) = row(&w_mu, 0, 2 * c, target_mu);
    let (row_nu, rhs_nu) = row(&w_nu, c, 2 * c + 1, target_nu);

    for tol in TOLERANCE_LADDER {
        let mut lp = LinearProgram::new(vec![0.0; n], upper.clone(), objective.clone(), Sense::Minimize)?;
        lp.add_range(row_mu.clone(), rhs_mu * (1.0 - tol), rhs_mu * (1.0 + tol))?;
        lp.add_range(row_nu.clone(), rhs_nu * (1.0 - tol), rhs_nu * (1.0 + tol))?;
        let sol = solve(&lp);
        if sol.status == LpStatus::Optimal {
            let v = sol.values;
            let policy = ForwardingPolicy {
                z_mu: v[..c].to_vec(),
                z_nu: v[c..2 * c].to_vec(),
                tail_mu: v[2 * c],
                tail_nu: v[2 * c + 1],
            };
            return Ok(PolicySolution {
                z1_mu_min: policy.z1_mu(),
                policy,
                tolerance: tol,
            });
        }
    }

    let loosest = TOLERANCE_LADDER[TOLERANCE_LADDER.len() - 1];
    let capacity = |w: &[f64], t: f64| q * (w.iter().sum::<f64>() + t);
    let violated = if target_mu * (1.0 - loosest) > capacity(&w_mu, t_mu) {
        format!(
            "signal gain {target_mu:.6e} exceeds the most Eve can forward ({:.6e})",
            capacity(&w_mu, t_mu)
        )
    } else if target_nu * (1.0 - loosest) > capacity(&w_nu, t_nu) {
        format!(
            "decoy gain {target_nu:.6e} exceeds the most Eve can forward ({:.6e})",
            capacity(&w_nu, t_nu)
        )
    } else {
        "signal and decoy gains cannot be matched simultaneously".to_string()
    };
    Err(Error::AttackInfeasible(violated))
}

/// `R^u = (q_opt Z_1^μ e^{−μ} μ)²`.
pub fn attacked_key_rate_upper(scenario: &AttackScenario, policy: &ForwardingPolicy) -> Result<f64> {
    let q = usd_success_probability(scenario.mu, scenario.nu)?;
    let g = q * policy.z1_mu() * (-scenario.mu).exp() * scenario.mu;
    Ok(g * g)
}

/// Intermediate and final quantities of the honest two-step estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HonestEstimate {
    pub y1_mu: f64,
    pub y1_nu: f64,
    pub y11: f64,
    /// `R^l = Y_{1,1} (e^{−μ} μ)²`.
    pub rate_lower: f64,
}

/// Two-intensity single-photon lower bound
/// `μ/(μν − ν²) (A_ν e^ν − A_μ e^μ ν²/μ²)`.
fn decoy_lower(mu: f64, nu: f64, a_mu: f64, a_nu: f64) -> f64 {
    mu / (mu * nu - nu * nu) * (a_nu * nu.exp() - a_mu * mu.exp() * nu * nu / (mu * mu))
}

fn check_nondegenerate(s: &AttackScenario) -> Result<()> {
    if !(s.nu > 0.0 && s.mu > s.nu) {
        return Err(Error::Degenerate(format!(
            "two-intensity estimate needs mu > nu > 0, got mu={} nu={}",
            s.mu, s.nu
        )));
    }
    Ok(())
}

/// Closed-form honest estimate from the gains `Q_{α,β} = Q_α Q_β`.
pub fn estimated_key_rate_lower(scenario: &AttackScenario) -> Result<HonestEstimate> {
    scenario.validate()?;
    check_nondegenerate(scenario)?;
    let (mu, nu) = (scenario.mu, scenario.nu);
    let q = |a: f64, b: f64| scenario.normal_gain(a) * scenario.normal_gain(b);
    let y1_mu = decoy_lower(mu, nu, q(mu, mu), q(nu, mu));
    let y1_nu = decoy_lower(mu, nu, q(mu, nu), q(nu, nu));
    let y11 = decoy_lower(mu, nu, y1_mu, y1_nu);
    let w = (-mu).exp() * mu;
    Ok(HonestEstimate {
        y1_mu,
        y1_nu,
        y11,
        rate_lower: y11 * w * w,
    })
}

/// Same estimate by solving the truncated systems
/// `A_α e^α = α Y_1 + α²/2 Y_2` (for `α = μ, ν`) for `Y_1`.
pub fn estimated_key_rate_lower_linear(scenario: &AttackScenario) -> Result<HonestEstimate> {
    scenario.validate()?;
    check_nondegenerate(scenario)?;
    let (mu, nu) = (scenario.mu, scenario.nu);
    let first = |a_mu: f64, a_nu: f64| -> f64 {
        // [μ μ²/2; ν ν²/2] [Y1; Y2] = [a_μ e^μ; a_ν e^ν], by Cramer's rule.
        let (m11, m12, m21, m22) = (mu, mu * mu / 2.0, nu, nu * nu / 2.0);
        let (b1, b2) = (a_mu * mu.exp(), a_nu * nu.exp());
        (b1 * m22 - m12 * b2) / (m11 * m22 - m12 * m21)
    };
    let q = |a: f64, b: f64| scenario.normal_gain(a) * scenario.normal_gain(b);
    let y1_mu = first(q(mu, mu), q(nu, mu));
    let y1_nu = first(q(mu, nu), q(nu, nu));
    let y11 = first(y1_mu, y1_nu);
    let w = (-mu).exp() * mu;
    Ok(HonestEstimate {
        y1_mu,
        y1_nu,
        y11,
        rate_lower: y11 * w * w,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackReport {
    pub scenario: AttackScenario,
    pub q_opt: f64,
    /// `None` when Eve cannot match the gains.
    pub solution: Option<PolicySolution>,
    pub infeasibility: Option<String>,
    pub rate_upper: Option<f64>,
    /// `None` when the honest estimate is degenerate (`μ = ν`).
    pub estimate: Option<HonestEstimate>,
    pub residuals: Option<(f64, f64)>,
    /// Residuals of the closed-form policy `Z_2^μ = 1, Z_1^ν = μ²/2ν`.
    pub closed_form_residuals: (f64, f64),
    pub success: bool,
}

pub fn attack_demo(scenario: &AttackScenario) -> Result<AttackReport> {
    scenario.validate()?;
    let q_opt = usd_success_probability(scenario.mu, scenario.nu)?;
    let (solution, infeasibility) = match find_policy(scenario) {
        Ok(s) => (Some(s), None),
        Err(Error::AttackInfeasible(msg)) => (None, Some(msg)),
        Err(e) => return Err(e),
    };
    let rate_upper = solution
        .as_ref()
        .map(|s| attacked_key_rate_upper(scenario, &s.policy))
        .transpose()?;
    let residuals = solution.as_ref().map(|s| s.policy.residuals(scenario)).transpose()?;
    let estimate = match estimated_key_rate_lower(scenario) {
        Ok(e) => Some(e),
        Err(Error::Degenerate(_)) => None,
        Err(e) => return Err(e),
    };
    let closed_form_residuals = ForwardingPolicy::closed_form(scenario).residuals(scenario)?;
    let success = match (rate_upper, estimate) {
        (Some(ru), Some(est)) => est.rate_lower > ru,
        _ => false,
    };
    Ok(AttackReport {
        scenario: *scenario,
        q_opt,
        solution,
        infeasibility,
        rate_upper,
        estimate,
        residuals,
        closed_form_residuals,
        success,
    })
}

impl fmt::Display for AttackReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = &self.scenario;
        writeln!(f, "USD attack without phase randomization")?;
        writeln!(
            f,
            "  mu = {}, nu = {}, eta = {:.6e}, photon cutoff = {}",
            s.mu, s.nu, s.eta, s.max_photon_number
        )?;
        writeln!(f, "  q_opt = {:.6e}", self.q_opt)?;
        if !s.in_documented_regime() {
            writeln!(f, "  note: outside the regime mu > nu > mu^2/2")?;
        }
        match (&self.solution, &self.infeasibility) {
            (Some(sol), _) => {
                writeln!(f, "  forwarding policy (tolerance {:e}):", sol.tolerance)?;
                let fmt_z = |z: &[f64]| z.iter().map(|v| format!("{v:.4e}")).collect::<Vec<_>>().join(" ");
                writeln!(f, "    Z_mu = [{}]", fmt_z(&sol.policy.z_mu))?;
                writeln!(f, "    Z_nu = [{}]", fmt_z(&sol.policy.z_nu))?;
                writeln!(
                    f,
                    "    tail gains = {:.4e}, {:.4e}",
                    sol.policy.tail_mu, sol.policy.tail_nu
                )?;
                writeln!(f, "  min Z1_mu = {:.6e}", sol.z1_mu_min)?;
            }
            (None, Some(msg)) => writeln!(f, "  no forwarding policy: {msg}")?,
            (None, None) => {}
        }
        if let Some((rm, rn)) = self.residuals {
            writeln!(f, "  gain residuals (relative): signal {rm:.3e}, decoy {rn:.3e}")?;
        }
        let (cm, cn) = self.closed_form_residuals;
        writeln!(
            f,
            "  closed-form policy Z2_mu = 1, Z1_nu = mu^2/(2 nu): residuals signal {cm:.3e}, decoy {cn:.3e}"
        )?;
        if cm.abs() > TOLERANCE_LADDER[2] || cn.abs() > TOLERANCE_LADDER[2] {
            writeln!(
                f,
                "    (does not match the honest gains; the decoy mismatch is about mu/nu - 1 = {:.3})",
                s.mu / s.nu - 1.0
            )?;
        }
        match self.rate_upper {
            Some(ru) => writeln!(f, "  R^u = {ru:.6e}")?,
            None => writeln!(f, "  R^u = n/a")?,
        }
        match &self.estimate {
            Some(e) => {
                writeln!(
                    f,
                    "  Y1_mu = {:.6e}, Y1_nu = {:.6e}, Y11 = {:.6e}",
                    e.y1_mu, e.y1_nu, e.y11
                )?;
                writeln!(f, "  R^l = {:.6e}", e.rate_lower)?;
            }
            None => writeln!(f, "  R^l = n/a (mu = nu)")?,
        }
        write!(f, "  attack successful (R^l > R^u): {}", self.success)
    }
}

//! Independent oracles used to validate the analysis routines.
//!
//! Nothing in here is on the key-rate path. Each function recomputes a
//! quantity by a different route than the production code (coherent-state
//! overlaps instead of Fock series, vertex enumeration instead of simplex
//! pivoting) so that the two can be checked against each other.

use num_complex::Complex64;

use crate::channel::{transmittance, ChannelParams, IntensitySettings, ObservedStats, Setting};
use crate::error::{domain, Result};
use crate::estimator::{Interval, Target};
use crate::fock::{CompensatedSum, SourceConfig};
use crate::lp::{LinearProgram, Relation, Sense};

/// `⟨β|γ⟩` for coherent states.
fn coherent_overlap(beta: Complex64, gamma: Complex64) -> Complex64 {
    (-0.5 * beta.norm_sqr() - 0.5 * gamma.norm_sqr() + beta.conj() * gamma).exp()
}

/// Exact fidelity between the X-basis and Y-basis two-party source states of
/// photon class `j` (oracle for [`crate::fock::fidelity_bound_xy`]).
///
/// Each logical state is `Σ_k e^{-2πikj/N} |ω^k α⟩|φ ω^k α⟩` with `ω = e^{2πi/N}`,
/// `μ = 2|α|²` and `φ ∈ {1, −1}` for X, `φ ∈ {i, −i}` for Y. Only pairwise
/// inner products are needed: with `ρ_X = A A†`, `ρ_Y = B B†` the root
/// fidelity is the trace norm of the 2×2 cross-Gram block `A†B`, which for a
/// 2×2 matrix is `sqrt(‖M‖_F² + 2|det M|)`. No Fock truncation and no
/// inversion of the (possibly near-singular) Gram matrix is involved.
///
/// The two parties are independent, so the returned value is the square of
/// the single-party fidelity.
pub fn exact_fidelity_oracle(cfg: &SourceConfig, j: usize) -> Result<f64> {
    let Some(n) = cfg.phases.num_phases() else {
        return domain("the exact oracle needs a discrete phase count");
    };
    if j >= n as usize {
        return domain(format!("photon class {j} out of range for {n} phases"));
    }
    if cfg.intensity <= 0.0 {
        return domain("the exact oracle needs a positive intensity");
    }
    let n = n as usize;
    let alpha = (cfg.intensity / 2.0).sqrt();
    let roots: Vec<Complex64> = (0..n)
        .map(|k| Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * k as f64 / n as f64))
        .collect();
    // Class coefficient e^{-2πikj/N} = ω^{-kj}.
    let coeff = |k: usize| roots[(k * j) % n].conj();

    let inner = |phi_a: Complex64, phi_b: Complex64| -> Complex64 {
        let mut re = CompensatedSum::default();
        let mut im = CompensatedSum::default();
        for k in 0..n {
            let ref_a = roots[k] * alpha;
            let sig_a = ref_a * phi_a;
            for kp in 0..n {
                let ref_b = roots[kp] * alpha;
                let sig_b = ref_b * phi_b;
                let z = coeff(k).conj() * coeff(kp) * coherent_overlap(ref_a, ref_b) * coherent_overlap(sig_a, sig_b);
                re.add(z.re);
                im.add(z.im);
            }
        }
        Complex64::new(re.value(), im.value())
    };

    let one = Complex64::new(1.0, 0.0);
    let i = Complex64::new(0.0, 1.0);
    let x_states = [one, -one];
    let y_states = [i, -i];

    let norm_x: f64 = x_states.iter().map(|&p| inner(p, p).re).sum();
    let norm_y: f64 = y_states.iter().map(|&p| inner(p, p).re).sum();
    if !(norm_x > 0.0 && norm_y > 0.0) {
        return domain("photon class has vanishing weight at this intensity");
    }

    let m = [
        [inner(x_states[0], y_states[0]), inner(x_states[0], y_states[1])],
        [inner(x_states[1], y_states[0]), inner(x_states[1], y_states[1])],
    ];
    let frob: f64 = m.iter().flatten().map(|z| z.norm_sqr()).sum();
    let det = (m[0][0] * m[1][1] - m[0][1] * m[1][0]).norm();
    let trace_norm = (frob + 2.0 * det).sqrt();
    let single = (trace_norm / (norm_x * norm_y).sqrt()).min(1.0);
    Ok(single * single)
}

/// Optimum of a small LP by enumerating every basic point.
///
/// Every vertex of the feasible polytope is the intersection of `n` linearly
/// independent active hyperplanes drawn from the constraint rows and the
/// variable bounds. All `n`-subsets are tried. Returns `None` when no
/// feasible vertex exists. Only meant for a handful of variables.
pub fn vertex_enumeration_optimum(lp: &LinearProgram, tol: f64) -> Option<(f64, Vec<f64>)> {
    let n = lp.num_vars();
    let mut planes: Vec<(Vec<f64>, f64)> = Vec::new();
    for c in lp.constraints() {
        planes.push((c.coeffs.clone(), c.rhs));
    }
    for k in 0..n {
        let mut e = vec![0.0; n];
        e[k] = 1.0;
        planes.push((e.clone(), lp.lower_bounds()[k]));
        if lp.upper_bounds()[k].is_finite() {
            planes.push((e, lp.upper_bounds()[k]));
        }
    }

    let feasible = |x: &[f64]| -> bool {
        for k in 0..n {
            if x[k] < lp.lower_bounds()[k] - tol || x[k] > lp.upper_bounds()[k] + tol {
                return false;
            }
        }
        lp.constraints().iter().all(|c| {
            let lhs: f64 = c.coeffs.iter().zip(x).map(|(a, v)| a * v).sum();
            let scale = 1.0 + c.rhs.abs();
            match c.relation {
                Relation::Eq => (lhs - c.rhs).abs() <= tol * scale,
                Relation::Le => lhs <= c.rhs + tol * scale,
                Relation::Ge => lhs >= c.rhs - tol * scale,
            }
        })
    };

    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut idx: Vec<usize> = (0..n).collect();
    loop {
        let rows: Vec<&(Vec<f64>, f64)> = idx.iter().map(|&i| &planes[i]).collect();
        if let Some(x) = solve_square(&rows) {
            if feasible(&x) {
                let obj: f64 = lp.objective().iter().zip(&x).map(|(c, v)| c * v).sum();
                let better = match (&best, lp.sense()) {
                    (None, _) => true,
                    (Some((b, _)), Sense::Minimize) => obj < *b,
                    (Some((b, _)), Sense::Maximize) => obj > *b,
                };
                if better {
                    best = Some((obj, x));
                }
            }
        }
        if !next_combination(&mut idx, planes.len()) {
            break;
        }
    }
    best
}

fn next_combination(idx: &mut [usize], total: usize) -> bool {
    let k = idx.len();
    if k == 0 || k > total {
        return false;
    }
    let mut i = k;
    while i > 0 {
        i -= 1;
        if idx[i] < total - k + i {
            idx[i] += 1;
            for t in (i + 1)..k {
                idx[t] = idx[t - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Gaussian elimination with partial pivoting; `None` if (nearly) singular.
fn solve_square(rows: &[&(Vec<f64>, f64)]) -> Option<Vec<f64>> {
    let n = rows.len();
    let mut a: Vec<Vec<f64>> = rows
        .iter()
        .map(|(c, b)| {
            let mut r = c.clone();
            r.push(*b);
            r
        })
        .collect();
    for col in 0..n {
        let piv = (col..n).max_by(|&p, &q| a[p][col].abs().total_cmp(&a[q][col].abs()))?;
        let row_scale = a[piv][..n].iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if a[piv][col].abs() <= 1e-12 * row_scale.max(1e-300) {
            return None;
        }
        a.swap(col, piv);
        for r in 0..n {
            if r != col {
                let f = a[r][col] / a[col][col];
                if f != 0.0 {
                    for c in col..=n {
                        a[r][c] -= f * a[col][c];
                    }
                }
            }
        }
    }
    Some((0..n).map(|i| a[i][n] / a[i][i]).collect())
}

/// Photon numbers beyond this carry negligible weight for intensities up to ~5.
const MAX_PHOTONS: usize = 80;

/// Photon-number weights of the source, normalized.
fn photon_weights(cfg: &SourceConfig) -> Vec<f64> {
    let mu = cfg.intensity;
    let mut w = Vec::with_capacity(MAX_PHOTONS + 1);
    let mut term = (-mu).exp();
    for n in 0..=MAX_PHOTONS {
        if n > 0 {
            term *= mu / n as f64;
        }
        w.push(term);
    }
    w
}

fn in_class(cfg: &SourceConfig, n: usize, j: usize) -> bool {
    match cfg.phases.num_phases() {
        Some(p) => n % p as usize == j,
        None => n == j,
    }
}

/// Photon-number resolved yield and error product of the simulation model:
/// `(Y_{n,m}, (Ye)_{n,m})`.
pub fn photon_pair_yield(params: &ChannelParams, n: usize, m: usize) -> (f64, f64) {
    let eta = transmittance(params);
    let y0 = params.dark_count;
    let eta_n = 1.0 - (1.0 - eta).powi(n as i32);
    let eta_m = 1.0 - (1.0 - eta).powi(m as i32);
    let y = (y0 + eta_n) * (y0 + eta_m);
    let ye = y0 * (y0 + eta_n + eta_m) / 2.0 + params.misalignment * eta_n * eta_m;
    (y, ye)
}

/// True class yield `Y_{i,j}` (or `(Ye)_{i,j}`) of the simulation model for
/// sources `a` and `b`: the photon-pair yields averaged over each class.
pub fn model_class_yield(
    params: &ChannelParams,
    a: &SourceConfig,
    b: &SourceConfig,
    i: usize,
    j: usize,
    target: Target,
) -> f64 {
    let wa = photon_weights(a);
    let wb = photon_weights(b);
    let mut num = CompensatedSum::default();
    let mut den = CompensatedSum::default();
    for n in (0..=MAX_PHOTONS).filter(|&n| in_class(a, n, i)) {
        for m in (0..=MAX_PHOTONS).filter(|&m| in_class(b, m, j)) {
            let w = wa[n] * wb[m];
            let (y, ye) = photon_pair_yield(params, n, m);
            num.add(w * if target == Target::Gain { y } else { ye });
            den.add(w);
        }
    }
    if den.value() > 0.0 {
        num.value() / den.value()
    } else {
        0.0
    }
}

/// True stage-1 quantity `Y_i^{a,b}` (or `W_i^{a,b}`): Alice in class `i`,
/// Bob's photon number unrestricted.
pub fn model_stage1_yield(params: &ChannelParams, a: &SourceConfig, b: &SourceConfig, i: usize, target: Target) -> f64 {
    let wa = photon_weights(a);
    let wb = photon_weights(b);
    let mut num = CompensatedSum::default();
    let mut den = CompensatedSum::default();
    for n in (0..=MAX_PHOTONS).filter(|&n| in_class(a, n, i)) {
        den.add(wa[n]);
        for (m, &w) in wb.iter().enumerate() {
            let (y, ye) = photon_pair_yield(params, n, m);
            num.add(wa[n] * w * if target == Target::Gain { y } else { ye });
        }
    }
    if den.value() > 0.0 {
        num.value() / den.value()
    } else {
        0.0
    }
}

/// Single-photon intervals `(Y11, (Ye)11)` of the standard decoy analysis
/// for continuously randomized sources, computed by vertex enumeration.
///
/// Variables: yields `Y_0..Y_2` with Poisson coefficients and the tail sums
/// `t_μ = Σ_{n≥3} P_n^μ Y_n`, `t_ν = Σ_{n≥3} P_n^ν Y_n`, with
/// `t_ν ≤ e^{μ−ν}(ν/μ)^3 t_μ` because `P_n^ν/P_n^μ` decreases in `n`. The
/// vacuum row has no tail. No deviation bands.
pub fn standard_decoy_bounds(stats: &ObservedStats, settings: &IntensitySettings) -> Option<(Interval, Interval)> {
    const K: usize = 3;
    const VARS: usize = K + 2;
    let (mu, nu) = (settings.signal, settings.decoy);
    let poisson = |x: f64| -> Vec<f64> {
        let mut p = Vec::with_capacity(K);
        let mut t = (-x).exp();
        for i in 0..K {
            if i > 0 {
                t *= x / i as f64;
            }
            p.push(t);
        }
        p
    };
    let intensities = [mu, nu, 0.0];
    let tails: Vec<f64> = intensities
        .iter()
        .map(|&x| (1.0 - poisson(x).iter().sum::<f64>()).max(0.0))
        .collect();
    // Row r: Poisson coefficients, then its own tail variable (none for vacuum).
    let row = |r: usize| -> Vec<f64> {
        let mut c = poisson(intensities[r]);
        c.extend([0.0; 2]);
        if r < 2 {
            c[K + r] = 1.0;
        }
        c
    };
    let ratio = (mu - nu).exp() * (nu / mu).powi(K as i32);

    // Bounds on x_1 given per-row data intervals, in units of `scale`.
    let bound_x1 = |data: [(f64, f64); 3]| -> Option<Interval> {
        let scale = data.iter().map(|d| d.1).fold(0.0f64, f64::max);
        let scale = if scale > 0.0 { scale.min(1.0) } else { 1.0 };
        let upper = vec![
            1.0 / scale,
            1.0 / scale,
            1.0 / scale,
            tails[0] / scale,
            tails[1] / scale,
        ];
        let mut objective = vec![0.0; VARS];
        objective[1] = 1.0;
        let mut lp = LinearProgram::new(vec![0.0; VARS], upper, objective, Sense::Minimize).ok()?;
        for (r, &(lo, hi)) in data.iter().enumerate() {
            lp.add_constraint(row(r), Relation::Le, hi / scale).ok()?;
            lp.add_constraint(row(r), Relation::Ge, lo / scale).ok()?;
        }
        lp.add_constraint(vec![0.0, 0.0, 0.0, -ratio, 1.0], Relation::Le, 0.0)
            .ok()?;
        let (lo, _) = vertex_enumeration_optimum(&lp, 1e-9)?;
        lp.set_sense(Sense::Maximize);
        let (hi, _) = vertex_enumeration_optimum(&lp, 1e-9)?;
        Some(Interval::new(
            (lo * scale).clamp(0.0, 1.0),
            (hi * scale).clamp(0.0, 1.0),
        ))
    };

    let single = |target: Target| -> Option<Interval> {
        let mut per_bob = [(0.0, 0.0); 3];
        for bob in Setting::ALL {
            let data = Setting::ALL.map(|alice| {
                let o = stats.get(alice, bob);
                let d = if target == Target::Gain {
                    o.gain
                } else {
                    o.gain * o.error_rate
                };
                (d, d)
            });
            let iv = bound_x1(data)?;
            per_bob[bob.index()] = (iv.lo, iv.hi);
        }
        bound_x1(per_bob)
    };
    Some((single(Target::Gain)?, single(Target::ErrorProduct)?))
}

//! Dense bounded-variable primal simplex.
//!
//! The programs solved here are tiny (a few variables, a dozen rows), so the
//! solver keeps a full tableau and prices with Bland's rule. That makes it
//! cycle-free and fully deterministic for identical input.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Eq,
    Le,
    Ge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub coeffs: Vec<f64>,
    pub relation: Relation,
    pub rhs: f64,
}

/// `min/max cᵀx` subject to linear rows and `lower ≤ x ≤ upper`.
///
/// Lower bounds must be finite; upper bounds may be `+∞`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    lower: Vec<f64>,
    upper: Vec<f64>,
    constraints: Vec<Constraint>,
    objective: Vec<f64>,
    sense: Sense,
}

impl LinearProgram {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, objective: Vec<f64>, sense: Sense) -> Result<Self> {
        let n = lower.len();
        if upper.len() != n || objective.len() != n {
            return Err(Error::MalformedProgram(format!(
                "length mismatch: {} lower bounds, {} upper bounds, {} objective coefficients",
                n,
                upper.len(),
                objective.len()
            )));
        }
        for k in 0..n {
            if !lower[k].is_finite() {
                return Err(Error::MalformedProgram(format!("lower bound of x{k} must be finite")));
            }
            if upper[k].is_nan() || upper[k] < lower[k] {
                return Err(Error::MalformedProgram(format!(
                    "bounds of x{k} are inverted: [{}, {}]",
                    lower[k], upper[k]
                )));
            }
            if !objective[k].is_finite() {
                return Err(Error::MalformedProgram(format!(
                    "objective coefficient {k} is not finite"
                )));
            }
        }
        Ok(Self {
            lower,
            upper,
            constraints: Vec::new(),
            objective,
            sense,
        })
    }

    pub fn add_constraint(&mut self, coeffs: Vec<f64>, relation: Relation, rhs: f64) -> Result<()> {
        if coeffs.len() != self.num_vars() {
            return Err(Error::MalformedProgram(format!(
                "constraint has {} coefficients, program has {} variables",
                coeffs.len(),
                self.num_vars()
            )));
        }
        if !rhs.is_finite() || coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::MalformedProgram("constraint with non-finite coefficient".into()));
        }
        self.constraints.push(Constraint { coeffs, relation, rhs });
        Ok(())
    }

    /// Adds `lo ≤ a·x ≤ hi` as one or two rows (an equality when `lo == hi`).
    pub fn add_range(&mut self, coeffs: Vec<f64>, lo: f64, hi: f64) -> Result<()> {
        if lo == hi {
            return self.add_constraint(coeffs, Relation::Eq, lo);
        }
        if lo.is_finite() {
            self.add_constraint(coeffs.clone(), Relation::Ge, lo)?;
        }
        if hi.is_finite() {
            self.add_constraint(coeffs, Relation::Le, hi)?;
        }
        Ok(())
    }

    pub fn set_objective(&mut self, objective: Vec<f64>, sense: Sense) -> Result<()> {
        if objective.len() != self.num_vars() || objective.iter().any(|c| !c.is_finite()) {
            return Err(Error::MalformedProgram("objective does not match the program".into()));
        }
        self.objective = objective;
        self.sense = sense;
        Ok(())
    }

    pub fn set_sense(&mut self, sense: Sense) {
        self.sense = sense;
    }

    pub fn num_vars(&self) -> usize {
        self.lower.len()
    }

    pub fn lower_bounds(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper_bounds(&self) -> &[f64] {
        &self.upper
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn objective(&self) -> &[f64] {
        &self.objective
    }

    pub fn sense(&self) -> Sense {
        self.sense
    }

    /// Largest constraint violation of `x`, measured relative to `1 + |rhs|`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        self.constraints
            .iter()
            .map(|c| {
                let lhs: f64 = c.coeffs.iter().zip(x).map(|(a, v)| a * v).sum();
                let v = match c.relation {
                    Relation::Eq => (lhs - c.rhs).abs(),
                    Relation::Le => (lhs - c.rhs).max(0.0),
                    Relation::Ge => (c.rhs - lhs).max(0.0),
                };
                v / (1.0 + c.rhs.abs())
            })
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub feasibility_tol: f64,
    pub pivot_tol: f64,
    pub optimality_tol: f64,
    pub max_iterations: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            feasibility_tol: 1e-9,
            pivot_tol: 1e-11,
            optimality_tol: 1e-12,
            max_iterations: 50_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    /// The pivot budget ran out; cannot happen under Bland's rule unless the
    /// budget is set absurdly low.
    IterationLimit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    pub objective_value: f64,
    pub values: Vec<f64>,
    pub iterations: usize,
}

impl LpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}

pub fn solve(lp: &LinearProgram) -> LpSolution {
    solve_with(lp, &SolverOptions::default())
}

pub fn solve_with(lp: &LinearProgram, opts: &SolverOptions) -> LpSolution {
    Tableau::build(lp, opts).run(lp)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum VarState {
    Basic(usize),
    AtLower,
    AtUpper,
}

/// Full tableau `B⁻¹[A | b]` over structural, slack and artificial columns.
struct Tableau<'a> {
    opts: &'a SolverOptions,
    rows: usize,
    cols: usize,
    num_structural: usize,
    first_artificial: usize,
    tab: Vec<Vec<f64>>,
    rhs: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    state: Vec<VarState>,
    basis: Vec<usize>,
    values: Vec<f64>,
    iterations: usize,
    rhs_scale: f64,
}

enum Phase {
    Optimal,
    Unbounded,
    IterationLimit,
}

impl<'a> Tableau<'a> {
    fn build(lp: &LinearProgram, opts: &'a SolverOptions) -> Self {
        let n = lp.num_vars();
        let m = lp.constraints.len();
        let num_slack = lp.constraints.iter().filter(|c| c.relation != Relation::Eq).count();
        let first_artificial = n + num_slack;
        let cols = first_artificial + m;

        let mut a = vec![vec![0.0; cols]; m];
        let mut lower = lp.lower.clone();
        let mut upper = lp.upper.clone();
        lower.resize(cols, 0.0);
        upper.resize(first_artificial, f64::INFINITY);
        upper.resize(cols, f64::INFINITY);

        let mut slack = n;
        for (i, c) in lp.constraints.iter().enumerate() {
            a[i][..n].copy_from_slice(&c.coeffs);
            match c.relation {
                Relation::Eq => {}
                Relation::Le => {
                    a[i][slack] = 1.0;
                    slack += 1;
                }
                Relation::Ge => {
                    a[i][slack] = -1.0;
                    slack += 1;
                }
            }
        }

        // Start with every non-artificial column at its lower bound; the
        // artificials absorb the residual with a sign that keeps them >= 0.
        let mut values = lower.clone();
        let mut rhs = vec![0.0; m];
        let mut basis = vec![0; m];
        let mut state = vec![VarState::AtLower; cols];
        for i in 0..m {
            let b = lp.constraints[i].rhs;
            let residual: f64 = b - (0..first_artificial).map(|j| a[i][j] * values[j]).sum::<f64>();
            let sign = if residual >= 0.0 { 1.0 } else { -1.0 };
            let art = first_artificial + i;
            a[i][art] = sign;
            // Row scaled by the sign so the artificial has a unit pivot.
            for v in a[i].iter_mut() {
                *v *= sign;
            }
            rhs[i] = b * sign;
            basis[i] = art;
            state[art] = VarState::Basic(i);
            values[art] = residual.abs();
        }
        let rhs_scale = lp.constraints.iter().fold(1.0f64, |s, c| s.max(c.rhs.abs()));

        Self {
            opts,
            rows: m,
            cols,
            num_structural: n,
            first_artificial,
            tab: a,
            rhs,
            lower,
            upper,
            state,
            basis,
            values,
            iterations: 0,
            rhs_scale,
        }
    }

    fn run(mut self, lp: &LinearProgram) -> LpSolution {
        let n = self.num_structural;

        // Phase 1: drive the artificials to zero.
        let mut phase1 = vec![0.0; self.cols];
        for c in phase1.iter_mut().skip(self.first_artificial) {
            *c = 1.0;
        }
        match self.optimize(&phase1, true) {
            Phase::Optimal => {}
            Phase::IterationLimit => return self.finish(lp, LpStatus::IterationLimit),
            // The phase-1 objective is bounded below by zero.
            Phase::Unbounded => return self.finish(lp, LpStatus::Infeasible),
        }
        let infeasibility: f64 = (self.first_artificial..self.cols).map(|j| self.values[j]).sum();
        if infeasibility > self.opts.feasibility_tol * self.rhs_scale {
            return self.finish(lp, LpStatus::Infeasible);
        }

        // Phase 2: artificials pinned at zero.
        for j in self.first_artificial..self.cols {
            self.upper[j] = 0.0;
            if !matches!(self.state[j], VarState::Basic(_)) {
                self.state[j] = VarState::AtLower;
                self.values[j] = 0.0;
            }
        }
        let mut cost = vec![0.0; self.cols];
        let flip = match lp.sense {
            Sense::Minimize => 1.0,
            Sense::Maximize => -1.0,
        };
        for k in 0..n {
            cost[k] = flip * lp.objective[k];
        }
        let status = match self.optimize(&cost, false) {
            Phase::Optimal => LpStatus::Optimal,
            Phase::Unbounded => LpStatus::Unbounded,
            Phase::IterationLimit => LpStatus::IterationLimit,
        };
        self.finish(lp, status)
    }

    fn finish(&self, lp: &LinearProgram, status: LpStatus) -> LpSolution {
        let n = self.num_structural;
        let values: Vec<f64> = (0..n).map(|k| self.values[k].clamp(lp.lower[k], lp.upper[k])).collect();
        let objective_value = match status {
            LpStatus::Optimal => lp.objective.iter().zip(&values).map(|(c, v)| c * v).sum(),
            LpStatus::Unbounded => match lp.sense {
                Sense::Minimize => f64::NEG_INFINITY,
                Sense::Maximize => f64::INFINITY,
            },
            _ => f64::NAN,
        };
        LpSolution {
            status,
            objective_value,
            values,
            iterations: self.iterations,
        }
    }

    fn recompute_basic_values(&mut self) {
        for i in 0..self.rows {
            let mut v = self.rhs[i];
            for j in 0..self.cols {
                if !matches!(self.state[j], VarState::Basic(_)) && self.values[j] != 0.0 {
                    v -= self.tab[i][j] * self.values[j];
                }
            }
            self.values[self.basis[i]] = v;
        }
    }

    fn optimize(&mut self, cost: &[f64], phase_one: bool) -> Phase {
        loop {
            if self.iterations >= self.opts.max_iterations {
                return Phase::IterationLimit;
            }
            self.recompute_basic_values();

            // Bland: lowest-index improving column.
            let mut entering = None;
            for j in 0..self.cols {
                if !phase_one && j >= self.first_artificial {
                    break;
                }
                let st = self.state[j];
                if matches!(st, VarState::Basic(_)) || self.upper[j] <= self.lower[j] {
                    continue;
                }
                let mut d = cost[j];
                for i in 0..self.rows {
                    let t = self.tab[i][j];
                    if t != 0.0 {
                        d -= cost[self.basis[i]] * t;
                    }
                }
                let improving = match st {
                    VarState::AtLower => d < -self.opts.optimality_tol,
                    VarState::AtUpper => d > self.opts.optimality_tol,
                    VarState::Basic(_) => false,
                };
                if improving {
                    entering = Some(j);
                    break;
                }
            }
            let Some(q) = entering else {
                return Phase::Optimal;
            };
            let dir = if self.state[q] == VarState::AtLower { 1.0 } else { -1.0 };

            // Ratio test; ties go to the lowest variable index.
            let mut step = self.upper[q] - self.lower[q];
            let mut leave: Option<(usize, bool)> = None; // (row, leaves at upper)
            for i in 0..self.rows {
                let rate = dir * self.tab[i][q];
                if rate.abs() <= self.opts.pivot_tol {
                    continue;
                }
                let b = self.basis[i];
                let (limit, at_upper) = if rate > 0.0 {
                    ((self.values[b] - self.lower[b]) / rate, false)
                } else if self.upper[b].is_finite() {
                    ((self.upper[b] - self.values[b]) / -rate, true)
                } else {
                    continue;
                };
                let limit = limit.max(0.0);
                let better = match leave {
                    None => limit < step || (limit == step && step.is_finite()),
                    Some((r, _)) => limit < step || (limit == step && b < self.basis[r]),
                };
                if better {
                    step = limit;
                    leave = Some((i, at_upper));
                }
            }
            if !step.is_finite() {
                return Phase::Unbounded;
            }
            self.iterations += 1;

            match leave {
                None => {
                    // Bound flip, no basis change.
                    self.state[q] = if dir > 0.0 {
                        VarState::AtUpper
                    } else {
                        VarState::AtLower
                    };
                    self.values[q] = if dir > 0.0 { self.upper[q] } else { self.lower[q] };
                }
                Some((r, at_upper)) => {
                    let old = self.basis[r];
                    self.values[q] += dir * step;
                    self.state[old] = if at_upper { VarState::AtUpper } else { VarState::AtLower };
                    self.values[old] = if at_upper { self.upper[old] } else { self.lower[old] };
                    self.pivot(r, q);
                }
            }
        }
    }

    fn pivot(&mut self, r: usize, q: usize) {
        let p = self.tab[r][q];
        for v in self.tab[r].iter_mut() {
            *v /= p;
        }
        self.rhs[r] /= p;
        let pivot_row = self.tab[r].clone();
        let pivot_rhs = self.rhs[r];
        for i in 0..self.rows {
            if i == r {
                continue;
            }
            let f = self.tab[i][q];
            if f != 0.0 {
                for (v, pv) in self.tab[i].iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
                self.tab[i][q] = 0.0;
                self.rhs[i] -= f * pivot_rhs;
            }
        }
        self.basis[r] = q;
        self.state[q] = VarState::Basic(r);
    }
}

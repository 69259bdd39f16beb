//! Dense linear programming engine.
//!
//! Minimizes `c^T x` subject to general linear rows (`<=`, `>=`, `==`) and
//! per-variable box bounds, and reports the full dual solution: one
//! multiplier per row plus a reduced cost per variable. Everything downstream
//! (market clearing, the single-level bilevel rebuild, the node solves inside
//! branch-and-bound) runs through this module, so the solver favours
//! predictable, deterministic behaviour over raw speed: two-phase primal
//! simplex over bounded variables, revised form with a dense basis inverse,
//! Dantzig pricing with a Bland fallback once the objective stalls.
//!
//! Dual sign convention: `duals[i]` is the derivative of the optimal
//! objective with respect to `rhs[i]`. For a minimization this means binding
//! `<=` rows carry non-positive duals, binding `>=` rows non-negative ones,
//! and equality rows are unrestricted. Reduced costs are `c_j - y^T a_j`:
//! non-negative for variables sitting on their lower bound, non-positive on
//! their upper bound, zero (within tolerance) for basic variables.

use crate::error::{Error, Result};

/// Primal feasibility tolerance on row residuals and bound violations.
pub const FEAS_TOL: f64 = 1e-8;
/// Reduced-cost (dual feasibility) tolerance.
pub const OPT_TOL: f64 = 1e-9;
/// Tolerance on the primal-dual objective gap.
pub const DUALITY_GAP_TOL: f64 = 1e-7;

/// Ratio-test significance threshold for tableau column entries.
const RATE_EPS: f64 = 1e-9;
/// Window within which minimum-ratio candidates count as tied.
const TIE_EPS: f64 = 1e-9;
/// Non-improving iterations tolerated before switching to Bland's rule.
const STALL_LIMIT: usize = 64;
/// Pivots between basis refactorizations.
const REFACTOR_EVERY: usize = 64;

/// Row comparison sense.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

/// One linear row: `sum(coef * x) sense rhs`. Terms are sparse
/// `(variable index, coefficient)` pairs; duplicate indices are summed.
#[derive(Debug, Clone)]
pub struct Row {
    pub name: String,
    pub terms: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

/// A linear program in minimization form.
#[derive(Debug, Clone, Default)]
pub struct LinearProgram {
    pub var_names: Vec<String>,
    /// Objective coefficients, one per variable.
    pub objective: Vec<f64>,
    /// Lower bounds; `f64::NEG_INFINITY` when absent.
    pub lower: Vec<f64>,
    /// Upper bounds; `f64::INFINITY` when absent.
    pub upper: Vec<f64>,
    pub rows: Vec<Row>,
}

impl LinearProgram {
    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    /// Adds a variable and returns its index.
    pub fn add_var(&mut self, name: impl Into<String>, lower: f64, upper: f64, cost: f64) -> usize {
        self.var_names.push(name.into());
        self.objective.push(cost);
        self.lower.push(lower);
        self.upper.push(upper);
        self.objective.len() - 1
    }

    /// Adds a row and returns its index.
    pub fn add_row(
        &mut self,
        name: impl Into<String>,
        terms: Vec<(usize, f64)>,
        sense: Sense,
        rhs: f64,
    ) -> usize {
        self.rows.push(Row {
            name: name.into(),
            terms,
            sense,
            rhs,
        });
        self.rows.len() - 1
    }

    fn validate(&self) -> Result<()> {
        let n = self.num_vars();
        for j in 0..n {
            if !self.objective[j].is_finite() {
                return Err(Error::Validation(format!(
                    "objective coefficient of {} is not finite",
                    self.var_names[j]
                )));
            }
            if self.lower[j].is_nan() || self.upper[j].is_nan() {
                return Err(Error::Validation(format!(
                    "bound of {} is NaN",
                    self.var_names[j]
                )));
            }
            if self.lower[j] > self.upper[j] + 1e-12 {
                return Err(Error::Validation(format!(
                    "variable {} has lower bound {} above upper bound {}",
                    self.var_names[j], self.lower[j], self.upper[j]
                )));
            }
        }
        for row in &self.rows {
            if !row.rhs.is_finite() {
                return Err(Error::Validation(format!("rhs of {} is not finite", row.name)));
            }
            for &(j, c) in &row.terms {
                if j >= n {
                    return Err(Error::Validation(format!(
                        "row {} references variable index {} out of range",
                        row.name, j
                    )));
                }
                if !c.is_finite() {
                    return Err(Error::Validation(format!(
                        "row {} has a non-finite coefficient",
                        row.name
                    )));
                }
            }
        }
        Ok(())
    }

    /// Objective value of an assignment under this program's costs.
    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }
}

/// Solve outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

/// Primal and dual solution of a [`LinearProgram`].
#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Primal values, one per variable (empty unless optimal).
    pub x: Vec<f64>,
    /// Row multipliers `y`: derivative of the objective w.r.t. each rhs.
    pub duals: Vec<f64>,
    /// Reduced costs `c_j - y^T a_j`, one per variable.
    pub reduced_costs: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
}

impl LpSolution {
    fn non_optimal(status: LpStatus, iterations: usize) -> Self {
        LpSolution {
            status,
            x: Vec::new(),
            duals: Vec::new(),
            reduced_costs: Vec::new(),
            objective: f64::NAN,
            iterations,
        }
    }
}

/// Solves the program with the default iteration budget.
pub fn solve_lp(lp: &LinearProgram) -> Result<LpSolution> {
    lp.validate()?;
    let limit = 400 + 40 * (lp.num_vars() + lp.num_rows());
    Solver::new(lp)?.run(limit)
}

// ─── internal standard form ─────────────────────────────────────────────────

/// How an original variable maps onto standard-form columns (all of which
/// live in `[0, span]`).
#[derive(Clone, Copy)]
enum ColMap {
    /// `x = lower + col`
    Shifted { col: usize, lower: f64 },
    /// `x = upper - col` (no finite lower bound)
    Negated { col: usize, upper: f64 },
    /// `x = pos - neg` (free variable)
    Split { pos: usize, neg: usize },
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum VarState {
    Basic(usize),
    AtLower,
    AtUpper,
}

struct Column {
    terms: Vec<(usize, f64)>,
    cost: f64,
    span: f64,
    artificial: bool,
}

struct Solver {
    m: usize,
    cols: Vec<Column>,
    rhs: Vec<f64>,
    col_map: Vec<ColMap>,
    row_flip: Vec<bool>,
    n_rows_orig: usize,
    n_vars_orig: usize,
    objective_orig: Vec<f64>,

    state: Vec<VarState>,
    basis: Vec<usize>,
    binv: Vec<f64>,
    xb: Vec<f64>,
    bland: bool,
    stall: usize,
    best_obj: f64,
}

impl Solver {
    fn new(lp: &LinearProgram) -> Result<Self> {
        let n = lp.num_vars();
        let m = lp.num_rows();

        // Standard-form columns for the original variables.
        let mut cols: Vec<Column> = Vec::with_capacity(n + 2 * m);
        let mut col_map = Vec::with_capacity(n);
        // Per-row rhs, adjusted below for bound shifts.
        let mut rhs: Vec<f64> = lp.rows.iter().map(|r| r.rhs).collect();

        let add_col = |cols: &mut Vec<Column>, cost: f64, span: f64| -> usize {
            cols.push(Column {
                terms: Vec::new(),
                cost,
                span,
                artificial: false,
            });
            cols.len() - 1
        };

        for j in 0..n {
            let (lo, hi, c) = (lp.lower[j], lp.upper[j], lp.objective[j]);
            if lo.is_finite() {
                let col = add_col(&mut cols, c, hi - lo);
                col_map.push(ColMap::Shifted { col, lower: lo });
            } else if hi.is_finite() {
                let col = add_col(&mut cols, -c, f64::INFINITY);
                col_map.push(ColMap::Negated { col, upper: hi });
            } else {
                let pos = add_col(&mut cols, c, f64::INFINITY);
                let neg = add_col(&mut cols, -c, f64::INFINITY);
                col_map.push(ColMap::Split { pos, neg });
            }
        }

        // Scatter row coefficients into the columns, adjusting rhs for the
        // bound shifts, then flip >= rows so every inequality reads <=.
        let mut row_flip = vec![false; m];
        for (i, row) in lp.rows.iter().enumerate() {
            for &(j, coef) in &row.terms {
                if coef == 0.0 {
                    continue;
                }
                match col_map[j] {
                    ColMap::Shifted { col, lower } => {
                        rhs[i] -= coef * lower;
                        cols[col].terms.push((i, coef));
                    }
                    ColMap::Negated { col, upper } => {
                        rhs[i] -= coef * upper;
                        cols[col].terms.push((i, -coef));
                    }
                    ColMap::Split { pos, neg } => {
                        cols[pos].terms.push((i, coef));
                        cols[neg].terms.push((i, -coef));
                    }
                }
            }
            if row.sense == Sense::Ge {
                row_flip[i] = true;
                rhs[i] = -rhs[i];
            }
        }
        for col in cols.iter_mut() {
            // Merge duplicate row entries so the ratio test sees one rate per row.
            col.terms.sort_by_key(|&(i, _)| i);
            col.terms.dedup_by(|b, a| {
                if a.0 == b.0 {
                    a.1 += b.1;
                    true
                } else {
                    false
                }
            });
            if row_flip.iter().any(|&f| f) {
                for t in col.terms.iter_mut() {
                    if row_flip[t.0] {
                        t.1 = -t.1;
                    }
                }
            }
        }

        // Slacks for inequality rows; artificials wherever the all-at-lower
        // start cannot produce a feasible basic value.
        let mut state = vec![VarState::AtLower; cols.len()];
        let mut basis = vec![usize::MAX; m];
        let mut xb = vec![0.0; m];
        for i in 0..m {
            let sense = lp.rows[i].sense;
            let ineq = sense != Sense::Eq;
            if ineq {
                let slack = cols.len();
                cols.push(Column {
                    terms: vec![(i, 1.0)],
                    cost: 0.0,
                    span: f64::INFINITY,
                    artificial: false,
                });
                state.push(VarState::AtLower);
                if rhs[i] >= 0.0 {
                    basis[i] = slack;
                    xb[i] = rhs[i];
                    state[slack] = VarState::Basic(i);
                    continue;
                }
            }
            let art = cols.len();
            cols.push(Column {
                terms: vec![(i, if rhs[i] >= 0.0 { 1.0 } else { -1.0 })],
                cost: 0.0,
                span: f64::INFINITY,
                artificial: true,
            });
            state.push(VarState::Basic(i));
            basis[i] = art;
            xb[i] = rhs[i].abs();
        }

        let binv = identity(m);
        Ok(Solver {
            m,
            cols,
            rhs,
            col_map,
            row_flip,
            n_rows_orig: m,
            n_vars_orig: n,
            objective_orig: lp.objective.clone(),
            state,
            basis,
            binv,
            xb,
            bland: false,
            stall: 0,
            best_obj: f64::INFINITY,
        })
    }

    fn run(mut self, iteration_limit: usize) -> Result<LpSolution> {
        let mut iterations = 0;
        // The starting basis is not the identity when negative-rhs rows get
        // artificials with coefficient -1; factorize before the first pivot.
        self.refactor()?;

        // Phase 1: minimize the sum of artificials under zeroed real costs.
        let has_artificial = self.cols.iter().any(|c| c.artificial);
        if has_artificial {
            let saved: Vec<f64> = self.cols.iter().map(|c| c.cost).collect();
            for c in self.cols.iter_mut() {
                c.cost = if c.artificial { 1.0 } else { 0.0 };
            }
            let status = self.simplex(iteration_limit, &mut iterations)?;
            if status == LpStatus::Unbounded {
                return Err(Error::Numerical(
                    "phase-1 objective reported unbounded".into(),
                ));
            }
            let infeas = self.phase_objective();
            if infeas > 1e-7 {
                return Ok(LpSolution::non_optimal(LpStatus::Infeasible, iterations));
            }
            for (c, cost) in self.cols.iter_mut().zip(saved) {
                c.cost = cost;
                if c.artificial {
                    // Pin artificials at zero for phase 2; a basic artificial
                    // stuck at zero marks a redundant row and may stay.
                    c.span = 0.0;
                }
            }
            self.bland = false;
            self.stall = 0;
            self.best_obj = f64::INFINITY;
        }

        // Phase 2.
        self.refactor()?;
        let status = self.simplex(iteration_limit, &mut iterations)?;
        if status == LpStatus::Unbounded {
            return Ok(LpSolution::non_optimal(LpStatus::Unbounded, iterations));
        }

        self.refactor()?;
        self.extract(iterations)
    }

    fn phase_objective(&self) -> f64 {
        self.basis
            .iter()
            .zip(&self.xb)
            .map(|(&j, &v)| self.cols[j].cost * v)
            .sum::<f64>()
    }

    /// Runs primal simplex until optimal or unbounded under current costs.
    fn simplex(&mut self, limit: usize, iterations: &mut usize) -> Result<LpStatus> {
        loop {
            if *iterations >= limit {
                return Err(Error::Numerical(format!(
                    "simplex iteration limit {} exceeded",
                    limit
                )));
            }
            *iterations += 1;
            if *iterations % REFACTOR_EVERY == 0 {
                self.refactor()?;
            }

            let y = self.dual_vector();

            // Pricing: Dantzig by default, Bland once stalled.
            let mut enter: Option<(usize, f64, i8)> = None;
            for j in 0..self.cols.len() {
                let col = &self.cols[j];
                if col.span <= 0.0 {
                    continue;
                }
                let dir = match self.state[j] {
                    VarState::Basic(_) => continue,
                    VarState::AtLower => 1i8,
                    VarState::AtUpper => -1i8,
                };
                let d = col.cost - dot_sparse(&y, &col.terms);
                let favorable = if dir == 1 { d < -OPT_TOL } else { d > OPT_TOL };
                if !favorable {
                    continue;
                }
                if self.bland {
                    enter = Some((j, d, dir));
                    break;
                }
                match enter {
                    Some((_, best, _)) if d.abs() <= best.abs() => {}
                    _ => enter = Some((j, d, dir)),
                }
            }
            let Some((j_enter, _, dir)) = enter else {
                return Ok(LpStatus::Optimal);
            };

            // Tableau column of the entering variable.
            let alpha = self.ftran(&self.cols[j_enter].terms);

            // Bounded ratio test. rate[r] is d(x_B[r])/dt as the entering
            // variable moves t away from its current bound.
            let mut t_best = self.cols[j_enter].span;
            let mut leave: Option<usize> = None;
            for r in 0..self.m {
                let rate = -(dir as f64) * alpha[r];
                if rate < -RATE_EPS {
                    let t = (self.xb[r].max(0.0)) / -rate;
                    if t < t_best - TIE_EPS {
                        t_best = t;
                        leave = Some(r);
                    } else if t < t_best + TIE_EPS {
                        if let Some(cur) = leave {
                            if self.better_leaver(r, cur, &alpha) {
                                leave = Some(r);
                            }
                        } else if t <= t_best {
                            t_best = t.min(t_best);
                            leave = Some(r);
                        }
                    }
                } else if rate > RATE_EPS {
                    let span = self.cols[self.basis[r]].span;
                    if span.is_finite() {
                        let room = (span - self.xb[r]).max(0.0);
                        let t = room / rate;
                        if t < t_best - TIE_EPS {
                            t_best = t;
                            leave = Some(r);
                        } else if t < t_best + TIE_EPS {
                            if let Some(cur) = leave {
                                if self.better_leaver(r, cur, &alpha) {
                                    leave = Some(r);
                                }
                            } else if t <= t_best {
                                t_best = t.min(t_best);
                                leave = Some(r);
                            }
                        }
                    }
                }
            }

            if t_best.is_infinite() {
                return Ok(LpStatus::Unbounded);
            }

            let improvement = t_best.max(0.0);
            self.track_stall(improvement);

            match leave {
                None => {
                    // The entering variable runs all the way to its other
                    // bound: flip it, no basis change.
                    let t = t_best;
                    for r in 0..self.m {
                        self.xb[r] += t * (-(dir as f64) * alpha[r]);
                    }
                    self.state[j_enter] = if dir == 1 {
                        VarState::AtUpper
                    } else {
                        VarState::AtLower
                    };
                }
                Some(r_leave) => {
                    let t = t_best.max(0.0);
                    let pivot = alpha[r_leave];
                    if pivot.abs() < 1e-11 {
                        return Err(Error::Numerical(format!(
                            "pivot element {:.3e} too small",
                            pivot
                        )));
                    }
                    // Move every basic value, then swap the basis slot.
                    for r in 0..self.m {
                        if r != r_leave {
                            self.xb[r] += t * (-(dir as f64) * alpha[r]);
                        }
                    }
                    let j_leave = self.basis[r_leave];
                    let rate = -(dir as f64) * pivot;
                    self.state[j_leave] = if rate < 0.0 {
                        VarState::AtLower
                    } else {
                        VarState::AtUpper
                    };
                    let entering_value = if dir == 1 {
                        t
                    } else {
                        self.cols[j_enter].span - t
                    };
                    self.basis[r_leave] = j_enter;
                    self.state[j_enter] = VarState::Basic(r_leave);
                    self.xb[r_leave] = entering_value;

                    // binv <- E * binv with E the elementary pivot matrix.
                    let inv_pivot = 1.0 / pivot;
                    let pivot_row: Vec<f64> = (0..self.m)
                        .map(|k| self.binv[r_leave * self.m + k] * inv_pivot)
                        .collect();
                    for r in 0..self.m {
                        if r == r_leave {
                            continue;
                        }
                        let f = alpha[r];
                        if f != 0.0 {
                            for k in 0..self.m {
                                self.binv[r * self.m + k] -= f * pivot_row[k];
                            }
                        }
                    }
                    self.binv[r_leave * self.m..(r_leave + 1) * self.m]
                        .copy_from_slice(&pivot_row);
                }
            }
        }
    }

    /// Deterministic leaving-row preference: larger pivot magnitude first,
    /// then (in Bland mode) smaller variable index, then smaller row index.
    fn better_leaver(&self, cand: usize, cur: usize, alpha: &[f64]) -> bool {
        if self.bland {
            return self.basis[cand] < self.basis[cur];
        }
        let (a, b) = (alpha[cand].abs(), alpha[cur].abs());
        if (a - b).abs() > 1e-12 {
            return a > b;
        }
        cand < cur
    }

    fn track_stall(&mut self, improvement: f64) {
        if improvement > 1e-12 {
            self.stall = 0;
            self.bland = false;
        } else {
            self.stall += 1;
            if self.stall >= STALL_LIMIT {
                self.bland = true;
            }
        }
    }

    /// `y = c_B^T B^{-1}` under the current (phase) costs.
    fn dual_vector(&self) -> Vec<f64> {
        let mut y = vec![0.0; self.m];
        for r in 0..self.m {
            let cb = self.cols[self.basis[r]].cost;
            if cb != 0.0 {
                let row = &self.binv[r * self.m..(r + 1) * self.m];
                for i in 0..self.m {
                    y[i] += cb * row[i];
                }
            }
        }
        y
    }

    /// `B^{-1} a` for a sparse column.
    fn ftran(&self, terms: &[(usize, f64)]) -> Vec<f64> {
        let mut out = vec![0.0; self.m];
        for &(i, v) in terms {
            if v == 0.0 {
                continue;
            }
            for r in 0..self.m {
                out[r] += self.binv[r * self.m + i] * v;
            }
        }
        out
    }

    /// Rebuilds the basis inverse from scratch and refreshes basic values.
    fn refactor(&mut self) -> Result<()> {
        let m = self.m;
        let mut mat = vec![0.0; m * m];
        for (r, &j) in self.basis.iter().enumerate() {
            for &(i, v) in &self.cols[j].terms {
                mat[i * m + r] = v;
            }
        }
        self.binv = invert(&mat, m).ok_or_else(|| {
            Error::Numerical("basis matrix became singular during refactorization".into())
        })?;

        // xb = B^{-1} (rhs - N x_N)
        let mut b_eff = self.rhs.clone();
        for j in 0..self.cols.len() {
            let v = match self.state[j] {
                VarState::AtUpper => self.cols[j].span,
                _ => continue,
            };
            if v == 0.0 {
                continue;
            }
            for &(i, coef) in &self.cols[j].terms {
                b_eff[i] -= coef * v;
            }
        }
        for r in 0..m {
            let mut s = 0.0;
            for i in 0..m {
                s += self.binv[r * m + i] * b_eff[i];
            }
            self.xb[r] = s;
        }
        Ok(())
    }

    fn extract(self, iterations: usize) -> Result<LpSolution> {
        let y = self.dual_vector();

        // Column values in standard space.
        let mut vals = vec![0.0; self.cols.len()];
        for j in 0..self.cols.len() {
            vals[j] = match self.state[j] {
                VarState::Basic(r) => self.xb[r],
                VarState::AtLower => 0.0,
                VarState::AtUpper => self.cols[j].span,
            };
        }
        let reduced = |j: usize| self.cols[j].cost - dot_sparse(&y, &self.cols[j].terms);

        let mut x = vec![0.0; self.n_vars_orig];
        let mut reduced_costs = vec![0.0; self.n_vars_orig];
        for (v, map) in col_map_iter(&self.col_map) {
            match map {
                ColMap::Shifted { col, lower } => {
                    x[v] = lower + vals[col];
                    reduced_costs[v] = reduced(col);
                }
                ColMap::Negated { col, upper } => {
                    x[v] = upper - vals[col];
                    reduced_costs[v] = -reduced(col);
                }
                ColMap::Split { pos, neg } => {
                    x[v] = vals[pos] - vals[neg];
                    reduced_costs[v] = reduced(pos);
                }
            }
        }

        let mut duals = vec![0.0; self.n_rows_orig];
        for i in 0..self.n_rows_orig {
            duals[i] = if self.row_flip[i] { -y[i] } else { y[i] };
        }

        let objective = self
            .objective_orig
            .iter()
            .zip(&x)
            .map(|(c, v)| c * v)
            .sum::<f64>();

        Ok(LpSolution {
            status: LpStatus::Optimal,
            x,
            duals,
            reduced_costs,
            objective,
            iterations,
        })
    }
}

fn col_map_iter(maps: &[ColMap]) -> impl Iterator<Item = (usize, ColMap)> + '_ {
    maps.iter().copied().enumerate()
}

fn dot_sparse(dense: &[f64], sparse: &[(usize, f64)]) -> f64 {
    sparse.iter().map(|&(i, v)| dense[i] * v).sum()
}

fn identity(m: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * m];
    for i in 0..m {
        out[i * m + i] = 1.0;
    }
    out
}

/// Dense Gauss-Jordan inverse with partial pivoting. Returns `None` when a
/// pivot falls below 1e-12.
fn invert(mat: &[f64], m: usize) -> Option<Vec<f64>> {
    let mut a = mat.to_vec();
    let mut inv = identity(m);
    for col in 0..m {
        let mut piv_row = col;
        let mut piv_val = a[col * m + col].abs();
        for r in col + 1..m {
            let v = a[r * m + col].abs();
            if v > piv_val {
                piv_val = v;
                piv_row = r;
            }
        }
        if piv_val < 1e-12 {
            return None;
        }
        if piv_row != col {
            for k in 0..m {
                a.swap(col * m + k, piv_row * m + k);
                inv.swap(col * m + k, piv_row * m + k);
            }
        }
        let p = a[col * m + col];
        let inv_p = 1.0 / p;
        for k in 0..m {
            a[col * m + k] *= inv_p;
            inv[col * m + k] *= inv_p;
        }
        for r in 0..m {
            if r == col {
                continue;
            }
            let f = a[r * m + col];
            if f != 0.0 {
                for k in 0..m {
                    a[r * m + k] -= f * a[col * m + k];
                    inv[r * m + k] -= f * inv[col * m + k];
                }
            }
        }
    }
    Some(inv)
}

/// Maximum primal residual of `x` over rows and bounds.
pub fn primal_residual(lp: &LinearProgram, x: &[f64]) -> f64 {
    let mut worst: f64 = 0.0;
    for row in &lp.rows {
        let lhs: f64 = row.terms.iter().map(|&(j, c)| c * x[j]).sum();
        let viol = match row.sense {
            Sense::Le => (lhs - row.rhs).max(0.0),
            Sense::Ge => (row.rhs - lhs).max(0.0),
            Sense::Eq => (lhs - row.rhs).abs(),
        };
        worst = worst.max(viol);
    }
    for j in 0..lp.num_vars() {
        worst = worst.max(lp.lower[j] - x[j]).max(x[j] - lp.upper[j]);
    }
    worst
}

/// Worst violation of the optimality conditions for an LP solution:
/// dual feasibility of reduced costs against the active bound, complementary
/// slackness on rows, and the primal-dual objective identity.
pub fn kkt_residual(lp: &LinearProgram, sol: &LpSolution) -> f64 {
    let mut worst = primal_residual(lp, &sol.x);
    let scale = 1.0 + sol.objective.abs();

    // Reduced-cost consistency: d = c - y^T A recomputed from scratch.
    let n = lp.num_vars();
    let mut d = lp.objective.clone();
    for (i, row) in lp.rows.iter().enumerate() {
        let y = sol.duals[i];
        if y != 0.0 {
            for &(j, c) in &row.terms {
                d[j] -= y * c;
            }
        }
    }
    for j in 0..n {
        worst = worst.max((d[j] - sol.reduced_costs[j]).abs() / scale);
        let at_lower = (sol.x[j] - lp.lower[j]).abs() <= 1e-6;
        let at_upper = (lp.upper[j] - sol.x[j]).abs() <= 1e-6;
        if !at_lower {
            worst = worst.max(d[j] / scale); // must not be positive
        }
        if !at_upper {
            worst = worst.max(-d[j] / scale); // must not be negative
        }
    }

    // Complementary slackness on rows.
    for (i, row) in lp.rows.iter().enumerate() {
        let lhs: f64 = row.terms.iter().map(|&(j, c)| c * sol.x[j]).sum();
        let slack = match row.sense {
            Sense::Le => row.rhs - lhs,
            Sense::Ge => lhs - row.rhs,
            Sense::Eq => 0.0,
        };
        worst = worst.max((sol.duals[i] * slack).abs() / scale);
    }

    // Objective identity: c^T x = y^T b + d^T x at a complementary point.
    let ytb: f64 = lp.rows.iter().zip(&sol.duals).map(|(r, y)| y * r.rhs).sum();
    let dtx: f64 = d.iter().zip(&sol.x).map(|(dj, xj)| dj * xj).sum();
    worst = worst.max((sol.objective - ytb - dtx).abs() / scale);

    worst
}

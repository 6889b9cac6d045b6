//! Dense bounded-variable primal simplex.
//!
//! Every row `a·x ⋈ b` is turned into `a·x - s = 0` with a row variable
//! `s` carrying the row bounds, so all structural and row variables are
//! handled uniformly as bounded columns. Phase I minimizes the sum of
//! artificials; Phase II the user objective. Entering and leaving choices
//! follow Bland's smallest-index rule, so degenerate cycles cannot occur.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("iteration limit {0} reached")]
    IterationLimit(usize),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RowKind {
    Le(f64),
    Ge(f64),
    Eq(f64),
    Range(f64, f64),
}

impl RowKind {
    fn bounds(self) -> (f64, f64) {
        match self {
            RowKind::Le(b) => (f64::NEG_INFINITY, b),
            RowKind::Ge(b) => (b, f64::INFINITY),
            RowKind::Eq(b) => (b, b),
            RowKind::Range(lo, hi) => (lo, hi),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Row {
    pub coeffs: Vec<(usize, f64)>,
    pub kind: RowKind,
}

/// A linear program `min c·x` subject to row and variable bounds.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LpProblem {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub objective: Vec<f64>,
    pub rows: Vec<Row>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimplexOptions {
    pub pivot_tol: f64,
    pub feasibility_tol: f64,
    pub optimality_tol: f64,
    pub max_iterations: usize,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        Self {
            pivot_tol: 1e-9,
            feasibility_tol: 1e-6,
            optimality_tol: 1e-9,
            max_iterations: 100_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub enum LpOutcome {
    Optimal(LpSolution),
    Infeasible,
    Unbounded,
}

impl LpOutcome {
    pub fn optimal(self) -> Option<LpSolution> {
        match self {
            LpOutcome::Optimal(s) => Some(s),
            _ => None,
        }
    }
}

impl LpProblem {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn add_var(&mut self, lower: f64, upper: f64, cost: f64) -> usize {
        self.lower.push(lower);
        self.upper.push(upper);
        self.objective.push(cost);
        self.objective.len() - 1
    }

    pub fn add_row(&mut self, coeffs: Vec<(usize, f64)>, kind: RowKind) -> usize {
        self.rows.push(Row { coeffs, kind });
        self.rows.len() - 1
    }

    fn check(&self) -> Result<(), LpError> {
        let n = self.objective.len();
        if self.lower.len() != n || self.upper.len() != n {
            return Err(LpError::Dimension(format!(
                "{} costs, {} lower bounds, {} upper bounds",
                n,
                self.lower.len(),
                self.upper.len()
            )));
        }
        for (j, (&lo, &hi)) in self.lower.iter().zip(&self.upper).enumerate() {
            if lo.is_nan() || hi.is_nan() || lo > hi || lo == f64::INFINITY || hi == f64::NEG_INFINITY {
                return Err(LpError::Dimension(format!("variable {j} has bounds [{lo}, {hi}]")));
            }
        }
        for (i, row) in self.rows.iter().enumerate() {
            let (lo, hi) = row.kind.bounds();
            if lo.is_nan() || hi.is_nan() || lo > hi {
                return Err(LpError::Dimension(format!("row {i} has bounds [{lo}, {hi}]")));
            }
            for &(j, a) in &row.coeffs {
                if j >= n {
                    return Err(LpError::Dimension(format!("row {i} references variable {j} of {n}")));
                }
                if !a.is_finite() {
                    return Err(LpError::Dimension(format!("row {i} has coefficient {a}")));
                }
            }
        }
        if self.objective.iter().any(|c| !c.is_finite()) {
            return Err(LpError::Dimension("non-finite objective coefficient".into()));
        }
        Ok(())
    }

    pub fn solve(&self, opts: &SimplexOptions) -> Result<LpOutcome, LpError> {
        self.check()?;
        let mut tab = Tableau::new(self, opts);
        if !tab.phase_one()? {
            return Ok(LpOutcome::Infeasible);
        }
        if !tab.phase_two()? {
            return Ok(LpOutcome::Unbounded);
        }
        let x = tab.value[..self.num_vars()].to_vec();
        self.verify(&x, opts)?;
        let objective = self.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
        Ok(LpOutcome::Optimal(LpSolution {
            x,
            objective,
            iterations: tab.iterations,
        }))
    }

    fn verify(&self, x: &[f64], opts: &SimplexOptions) -> Result<(), LpError> {
        let slack = |b: f64| 10.0 * opts.feasibility_tol * (1.0 + b.abs());
        for (j, &v) in x.iter().enumerate() {
            if !v.is_finite() || v < self.lower[j] - slack(self.lower[j]) || v > self.upper[j] + slack(self.upper[j]) {
                return Err(LpError::Numerical(format!(
                    "variable {j} = {v} outside [{}, {}]",
                    self.lower[j], self.upper[j]
                )));
            }
        }
        for (i, row) in self.rows.iter().enumerate() {
            let act: f64 = row.coeffs.iter().map(|&(j, a)| a * x[j]).sum();
            let (lo, hi) = row.kind.bounds();
            if act < lo - slack(lo) || act > hi + slack(hi) {
                return Err(LpError::Numerical(format!(
                    "row {i} activity {act} outside [{lo}, {hi}]"
                )));
            }
        }
        Ok(())
    }
}

struct Tableau<'a> {
    opts: &'a SimplexOptions,
    rows: usize,
    cols: usize,
    first_artificial: usize,
    /// Row-major `rows × cols`, holding `B⁻¹A`.
    t: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    cost: Vec<f64>,
    reduced: Vec<f64>,
    value: Vec<f64>,
    basis: Vec<usize>,
    is_basic: Vec<bool>,
    iterations: usize,
    phase_two_cost: Vec<f64>,
}

impl<'a> Tableau<'a> {
    fn new(lp: &LpProblem, opts: &'a SimplexOptions) -> Self {
        let n = lp.num_vars();
        let m = lp.rows.len();
        let cols = n + 2 * m;
        let first_artificial = n + m;

        let mut a = vec![0.0; m * cols];
        let mut lower = Vec::with_capacity(cols);
        let mut upper = Vec::with_capacity(cols);
        lower.extend_from_slice(&lp.lower);
        upper.extend_from_slice(&lp.upper);
        for (i, row) in lp.rows.iter().enumerate() {
            for &(j, v) in &row.coeffs {
                a[i * cols + j] += v;
            }
            a[i * cols + n + i] = -1.0;
            let (lo, hi) = row.kind.bounds();
            lower.push(lo);
            upper.push(hi);
        }
        lower.extend(std::iter::repeat_n(0.0, m));
        upper.extend(std::iter::repeat_n(0.0, m));

        let mut value = vec![0.0; cols];
        for j in 0..n {
            value[j] = nonbasic_start(lower[j], upper[j]);
        }

        let mut basis = vec![0; m];
        let mut is_basic = vec![false; cols];
        for i in 0..m {
            let activity: f64 = (0..n).map(|j| a[i * cols + j] * value[j]).sum();
            let s = n + i;
            let art = first_artificial + i;
            let tol = opts.feasibility_tol;
            if activity >= lower[s] - tol && activity <= upper[s] + tol {
                // row variable can absorb the activity directly
                basis[i] = s;
                value[s] = activity;
                value[art] = 0.0;
                for j in 0..cols {
                    a[i * cols + j] = -a[i * cols + j];
                }
            } else {
                let target = activity.clamp(lower[s], upper[s]);
                value[s] = target;
                // a·x - s + sigma·art = 0
                let residual = activity - target;
                let sigma = if residual > 0.0 { -1.0 } else { 1.0 };
                a[i * cols + art] = sigma;
                upper[art] = f64::INFINITY;
                value[art] = residual.abs();
                basis[i] = art;
                if sigma < 0.0 {
                    for j in 0..cols {
                        a[i * cols + j] = -a[i * cols + j];
                    }
                }
            }
            is_basic[basis[i]] = true;
        }

        let mut cost = vec![0.0; cols];
        for &b in &basis {
            if b >= first_artificial {
                cost[b] = 1.0;
            }
        }
        let mut phase_two_cost = vec![0.0; cols];
        phase_two_cost[..n].copy_from_slice(&lp.objective);

        let mut tab = Self {
            opts,
            rows: m,
            cols,
            first_artificial,
            t: a,
            lower,
            upper,
            cost,
            reduced: vec![0.0; cols],
            value,
            basis,
            is_basic,
            iterations: 0,
            phase_two_cost,
        };
        tab.recompute_reduced();
        tab
    }

    fn recompute_reduced(&mut self) {
        let cols = self.cols;
        self.reduced.copy_from_slice(&self.cost);
        for i in 0..self.rows {
            let cb = self.cost[self.basis[i]];
            if cb != 0.0 {
                let row = &self.t[i * cols..(i + 1) * cols];
                for (d, &v) in self.reduced.iter_mut().zip(row) {
                    *d -= cb * v;
                }
            }
        }
    }

    fn artificial_sum(&self) -> f64 {
        (self.first_artificial..self.cols).map(|j| self.value[j]).sum()
    }

    fn phase_one(&mut self) -> Result<bool, LpError> {
        if self.artificial_sum() > 0.0 && !self.optimize()? {
            return Err(LpError::Numerical("phase one reported unbounded".into()));
        }
        if self.artificial_sum() > self.opts.feasibility_tol {
            return Ok(false);
        }
        // freeze artificials and drive any zero-valued basic ones out
        for j in self.first_artificial..self.cols {
            self.upper[j] = 0.0;
            if !self.is_basic[j] {
                self.value[j] = 0.0;
            }
        }
        for r in 0..self.rows {
            if self.basis[r] < self.first_artificial {
                continue;
            }
            let row = &self.t[r * self.cols..(r + 1) * self.cols];
            let candidate = (0..self.first_artificial)
                .filter(|&j| !self.is_basic[j])
                .max_by(|&p, &q| row[p].abs().total_cmp(&row[q].abs()));
            if let Some(q) = candidate {
                if row[q].abs() > 1e-7 {
                    let leaving = self.basis[r];
                    self.pivot(r, q);
                    self.value[leaving] = 0.0;
                }
            }
        }
        Ok(true)
    }

    fn phase_two(&mut self) -> Result<bool, LpError> {
        self.cost.copy_from_slice(&self.phase_two_cost);
        self.recompute_reduced();
        self.optimize()
    }

    /// Runs simplex iterations on the current cost vector. Returns `false`
    /// when the objective is unbounded below.
    fn optimize(&mut self) -> Result<bool, LpError> {
        let cols = self.cols;
        loop {
            if self.iterations >= self.opts.max_iterations {
                return Err(LpError::IterationLimit(self.opts.max_iterations));
            }
            let mut entering = None;
            for j in 0..self.first_artificial {
                if self.is_basic[j] || self.lower[j] == self.upper[j] {
                    continue;
                }
                let d = self.reduced[j];
                if d < -self.opts.optimality_tol && self.value[j] < self.upper[j] {
                    entering = Some((j, 1.0));
                    break;
                }
                if d > self.opts.optimality_tol && self.value[j] > self.lower[j] {
                    entering = Some((j, -1.0));
                    break;
                }
            }
            let Some((q, dir)) = entering else {
                return Ok(true);
            };
            self.iterations += 1;

            let mut step = self.upper[q] - self.lower[q];
            let mut leave: Option<(usize, bool)> = None;
            for i in 0..self.rows {
                let alpha = dir * self.t[i * cols + q];
                let b = self.basis[i];
                let limit = if alpha > self.opts.pivot_tol && self.lower[b].is_finite() {
                    ((self.value[b] - self.lower[b]) / alpha).max(0.0)
                } else if alpha < -self.opts.pivot_tol && self.upper[b].is_finite() {
                    ((self.upper[b] - self.value[b]) / -alpha).max(0.0)
                } else {
                    continue;
                };
                if limit < step - 1e-12 {
                    step = limit;
                    leave = Some((i, alpha > 0.0));
                } else if limit <= step + 1e-12 {
                    // ties: smallest basic index leaves; a tied bound flip wins
                    if let Some((r, _)) = leave {
                        if b < self.basis[r] {
                            step = step.min(limit);
                            leave = Some((i, alpha > 0.0));
                        }
                    }
                }
            }
            if !step.is_finite() {
                return Ok(false);
            }

            self.value[q] += dir * step;
            for i in 0..self.rows {
                let b = self.basis[i];
                self.value[b] -= dir * step * self.t[i * cols + q];
            }
            match leave {
                None => {
                    // bound flip; snap to the bound to avoid drift
                    self.value[q] = if dir > 0.0 { self.upper[q] } else { self.lower[q] };
                }
                Some((r, to_lower)) => {
                    let leaving = self.basis[r];
                    self.pivot(r, q);
                    self.value[leaving] = if to_lower {
                        self.lower[leaving]
                    } else {
                        self.upper[leaving]
                    };
                }
            }
            if self.value[q].is_nan() {
                return Err(LpError::Numerical("NaN in basic solution".into()));
            }
        }
    }

    fn pivot(&mut self, r: usize, q: usize) {
        let cols = self.cols;
        let piv = self.t[r * cols + q];
        {
            let row = &mut self.t[r * cols..(r + 1) * cols];
            for v in row.iter_mut() {
                *v /= piv;
            }
            row[q] = 1.0;
        }
        let pivot_row: Vec<f64> = self.t[r * cols..(r + 1) * cols].to_vec();
        for i in 0..self.rows {
            if i == r {
                continue;
            }
            let f = self.t[i * cols + q];
            if f != 0.0 {
                let row = &mut self.t[i * cols..(i + 1) * cols];
                for (v, &p) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * p;
                }
                row[q] = 0.0;
            }
        }
        let dq = self.reduced[q];
        if dq != 0.0 {
            for (d, &p) in self.reduced.iter_mut().zip(&pivot_row) {
                *d -= dq * p;
            }
            self.reduced[q] = 0.0;
        }
        let leaving = self.basis[r];
        self.is_basic[leaving] = false;
        self.is_basic[q] = true;
        self.basis[r] = q;
    }
}

fn nonbasic_start(lo: f64, hi: f64) -> f64 {
    if lo.is_finite() {
        lo
    } else if hi.is_finite() {
        hi
    } else {
        0.0
    }
}

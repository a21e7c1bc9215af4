//! Dense two-phase simplex for small linear programs.
//!
//! Minimizes `c·x` subject to rows `a·x {≥,≤,=} b`. Variables are
//! nonnegative unless marked free. Bland's rule prevents cycling.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const PIVOT_EPS: f64 = 1e-11;
const FEAS_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Ge,
    Le,
    Eq,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub coeffs: Vec<f64>,
    pub rel: Relation,
    pub rhs: f64,
}

impl Constraint {
    pub fn new(coeffs: Vec<f64>, rel: Relation, rhs: f64) -> Self {
        Constraint { coeffs, rel, rhs }
    }

    fn lhs(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().zip(x).map(|(a, b)| a * b).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
    pub free: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    /// One multiplier per constraint: `≥` rows nonnegative, `≤` rows nonpositive.
    pub duals: Vec<f64>,
}

impl LinearProgram {
    pub fn new(objective: Vec<f64>) -> Self {
        let n = objective.len();
        LinearProgram { objective, constraints: Vec::new(), free: vec![false; n] }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn add(&mut self, coeffs: Vec<f64>, rel: Relation, rhs: f64) {
        assert_eq!(coeffs.len(), self.num_vars(), "constraint width");
        self.constraints.push(Constraint::new(coeffs, rel, rhs));
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(a, b)| a * b).sum()
    }

    /// Largest violation of any constraint or sign restriction.
    pub fn infeasibility(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for c in &self.constraints {
            let gap = c.lhs(x) - c.rhs;
            let v = match c.rel {
                Relation::Ge => (-gap).max(0.0),
                Relation::Le => gap.max(0.0),
                Relation::Eq => gap.abs(),
            };
            worst = worst.max(v);
        }
        for (xj, free) in x.iter().zip(&self.free) {
            if !free {
                worst = worst.max((-xj).max(0.0));
            }
        }
        worst
    }

    /// Largest violation among primal feasibility, dual feasibility and
    /// complementary slackness.
    pub fn kkt_residual(&self, sol: &LpSolution) -> f64 {
        let x = &sol.x;
        let y = &sol.duals;
        let mut worst = self.infeasibility(x);
        for (c, &yi) in self.constraints.iter().zip(y) {
            let gap = c.lhs(x) - c.rhs;
            let sign_violation = match c.rel {
                Relation::Ge => (-yi).max(0.0),
                Relation::Le => yi.max(0.0),
                Relation::Eq => 0.0,
            };
            worst = worst.max(sign_violation).max((yi * gap).abs());
        }
        for j in 0..self.num_vars() {
            let reduced = self.objective[j]
                - self
                    .constraints
                    .iter()
                    .zip(y)
                    .map(|(c, yi)| yi * c.coeffs[j])
                    .sum::<f64>();
            if self.free[j] {
                worst = worst.max(reduced.abs());
            } else {
                worst = worst.max((-reduced).max(0.0)).max((reduced * x[j]).abs());
            }
        }
        worst
    }

    pub fn solve(&self) -> Result<LpSolution> {
        Tableau::build(self).run(self)
    }
}

struct Tableau {
    rows: Vec<Vec<f64>>,
    basis: Vec<usize>,
    /// Standard-form column of each original variable (positive part, negative part).
    var_cols: Vec<(usize, Option<usize>)>,
    /// Slack column of each constraint.
    slack_cols: Vec<Option<usize>>,
    /// Sign applied to each constraint to make its right-hand side nonnegative.
    row_sign: Vec<f64>,
    first_artificial: usize,
    width: usize,
    /// Original constraint index of each tableau row.
    row_origin: Vec<usize>,
}

impl Tableau {
    fn build(lp: &LinearProgram) -> Tableau {
        let mut col = 0;
        let var_cols: Vec<(usize, Option<usize>)> = lp
            .free
            .iter()
            .map(|&free| {
                let pos = col;
                col += 1;
                let neg = if free {
                    col += 1;
                    Some(col - 1)
                } else {
                    None
                };
                (pos, neg)
            })
            .collect();
        let slack_cols: Vec<Option<usize>> = lp
            .constraints
            .iter()
            .map(|c| {
                if c.rel == Relation::Eq {
                    None
                } else {
                    col += 1;
                    Some(col - 1)
                }
            })
            .collect();
        let first_artificial = col;
        let m = lp.constraints.len();
        let width = first_artificial + m;
        let mut rows = Vec::with_capacity(m);
        let mut row_sign = Vec::with_capacity(m);
        for (i, c) in lp.constraints.iter().enumerate() {
            let mut row = vec![0.0; width + 1];
            for (j, &(pos, neg)) in var_cols.iter().enumerate() {
                row[pos] = c.coeffs[j];
                if let Some(neg) = neg {
                    row[neg] = -c.coeffs[j];
                }
            }
            if let Some(s) = slack_cols[i] {
                row[s] = if c.rel == Relation::Ge { -1.0 } else { 1.0 };
            }
            row[width] = c.rhs;
            let sign = if c.rhs < 0.0 { -1.0 } else { 1.0 };
            if sign < 0.0 {
                for x in &mut row {
                    *x = -*x;
                }
            }
            row[first_artificial + i] = 1.0;
            rows.push(row);
            row_sign.push(sign);
        }
        Tableau {
            rows,
            basis: (first_artificial..first_artificial + m).collect(),
            var_cols,
            slack_cols,
            row_sign,
            first_artificial,
            width,
            row_origin: (0..m).collect(),
        }
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.rows[r][c];
        for x in &mut self.rows[r] {
            *x /= p;
        }
        let pivot_row = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[c];
            if f != 0.0 {
                for (x, &y) in row.iter_mut().zip(&pivot_row) {
                    *x -= f * y;
                }
                row[c] = 0.0;
            }
        }
        self.basis[r] = c;
    }

    /// Bland's-rule iterations minimizing `cost` over columns `< allowed`.
    fn optimize(&mut self, cost: &[f64], allowed: usize) -> Result<()> {
        let rhs = self.width;
        let max_iter = 50_000;
        for _ in 0..max_iter {
            let mut entering = None;
            for j in 0..allowed {
                if self.basis.contains(&j) {
                    continue;
                }
                let reduced = cost[j]
                    - self
                        .rows
                        .iter()
                        .zip(&self.basis)
                        .map(|(row, &b)| cost[b] * row[j])
                        .sum::<f64>();
                if reduced < -1e-12 {
                    entering = Some(j);
                    break;
                }
            }
            let Some(j) = entering else { return Ok(()) };
            let mut leave: Option<(usize, f64)> = None;
            for (i, row) in self.rows.iter().enumerate() {
                if row[j] > PIVOT_EPS {
                    let ratio = row[rhs] / row[j];
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((k, best)) => {
                            if ratio < best - 1e-14
                                || (ratio <= best + 1e-14 && self.basis[i] < self.basis[k])
                            {
                                Some((i, ratio))
                            } else {
                                Some((k, best))
                            }
                        }
                    };
                }
            }
            let Some((r, _)) = leave else { return Err(Error::Unbounded) };
            self.pivot(r, j);
        }
        Err(Error::NotConverged { iterations: max_iter, residual: f64::NAN })
    }

    fn run(mut self, lp: &LinearProgram) -> Result<LpSolution> {
        let rhs = self.width;
        let mut phase1 = vec![0.0; self.width];
        for c in phase1.iter_mut().skip(self.first_artificial) {
            *c = 1.0;
        }
        self.optimize(&phase1, self.width)?;
        let infeasibility: f64 = self
            .rows
            .iter()
            .zip(&self.basis)
            .filter(|(_, &b)| b >= self.first_artificial)
            .map(|(row, _)| row[rhs])
            .sum();
        let scale = 1.0 + lp.constraints.iter().map(|c| c.rhs.abs()).fold(0.0, f64::max);
        if infeasibility > FEAS_EPS * scale {
            return Err(Error::Infeasible);
        }
        // drive artificials out of the basis, dropping redundant rows
        let mut r = 0;
        while r < self.rows.len() {
            if self.basis[r] >= self.first_artificial {
                match (0..self.first_artificial).find(|&j| self.rows[r][j].abs() > PIVOT_EPS) {
                    Some(j) => self.pivot(r, j),
                    None => {
                        self.rows.remove(r);
                        self.basis.remove(r);
                        self.row_origin.remove(r);
                        continue;
                    }
                }
            }
            r += 1;
        }
        let mut cost = vec![0.0; self.width];
        for (j, &(pos, neg)) in self.var_cols.iter().enumerate() {
            cost[pos] = lp.objective[j];
            if let Some(neg) = neg {
                cost[neg] = -lp.objective[j];
            }
        }
        self.optimize(&cost, self.first_artificial)?;

        let mut z = vec![0.0; self.first_artificial];
        for (row, &b) in self.rows.iter().zip(&self.basis) {
            z[b] = row[rhs];
        }
        let x: Vec<f64> = self
            .var_cols
            .iter()
            .map(|&(pos, neg)| z[pos] - neg.map_or(0.0, |n| z[n]))
            .collect();

        // duals from B^T y = c_B on the standard-form columns
        let m = self.rows.len();
        let column = |j: usize, orig_row: usize| -> f64 {
            let c = &lp.constraints[orig_row];
            let sign = self.row_sign[orig_row];
            for (v, &(pos, neg)) in self.var_cols.iter().enumerate() {
                if pos == j {
                    return sign * c.coeffs[v];
                }
                if neg == Some(j) {
                    return -sign * c.coeffs[v];
                }
            }
            if self.slack_cols[orig_row] == Some(j) {
                return sign * if c.rel == Relation::Ge { -1.0 } else { 1.0 };
            }
            0.0
        };
        let mut bt = DMatrix::zeros(m, m);
        let mut cb = DVector::zeros(m);
        for (k, &b) in self.basis.iter().enumerate() {
            cb[k] = cost[b];
            for (i, &orig) in self.row_origin.iter().enumerate() {
                bt[(k, i)] = column(b, orig);
            }
        }
        let y_std = if m == 0 {
            DVector::zeros(0)
        } else {
            bt.lu().solve(&cb).ok_or(Error::SingularSystem)?
        };
        let mut duals = vec![0.0; lp.constraints.len()];
        for (i, &orig) in self.row_origin.iter().enumerate() {
            duals[orig] = self.row_sign[orig] * y_std[i];
        }
        Ok(LpSolution { objective: lp.value(&x), x, duals })
    }
}

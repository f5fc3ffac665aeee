//! Dense two-phase primal simplex for the small linear programs used by the
//! stability analyzer.
//!
//! Problems are stated as `maximize c·x` over `x >= 0` subject to row
//! constraints. Instances here have at most a few hundred variables, so the
//! tableau is dense and pivoting uses Bland's rule, which cannot cycle.

use thiserror::Error;

const PIVOT_TOL: f64 = 1e-9;
const MAX_ITERATIONS: usize = 200_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone)]
pub struct Constraint {
    pub coeffs: Vec<f64>,
    pub relation: Relation,
    pub rhs: f64,
}

/// A maximization problem over non-negative variables.
#[derive(Debug, Clone, Default)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
}

impl LinearProgram {
    pub fn new(num_vars: usize) -> Self {
        LinearProgram {
            objective: vec![0.0; num_vars],
            constraints: Vec::new(),
        }
    }

    pub fn constrain(&mut self, coeffs: Vec<f64>, relation: Relation, rhs: f64) {
        debug_assert_eq!(coeffs.len(), self.objective.len());
        self.constraints.push(Constraint {
            coeffs,
            relation,
            rhs,
        });
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LpError {
    #[error("problem is infeasible")]
    Infeasible,
    #[error("objective is unbounded")]
    Unbounded,
    #[error("simplex did not converge within the iteration cap")]
    IterationLimit,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub objective: f64,
    pub x: Vec<f64>,
}

struct Tableau {
    rows: Vec<Vec<f64>>,
    basis: Vec<usize>,
    num_cols: usize,
}

impl Tableau {
    fn rhs(&self, row: usize) -> f64 {
        self.rows[row][self.num_cols]
    }

    fn pivot(&mut self, pivot_row: usize, pivot_col: usize) {
        let inv = 1.0 / self.rows[pivot_row][pivot_col];
        for value in self.rows[pivot_row].iter_mut() {
            *value *= inv;
        }
        let pivot_vals = self.rows[pivot_row].clone();
        for (r, row) in self.rows.iter_mut().enumerate() {
            if r == pivot_row {
                continue;
            }
            let factor = row[pivot_col];
            if factor == 0.0 {
                continue;
            }
            for (value, pv) in row.iter_mut().zip(pivot_vals.iter()) {
                *value -= factor * pv;
            }
        }
        self.basis[pivot_row] = pivot_col;
    }

    /// Runs Bland-rule pivots until `cost` has no improving column.
    /// `cost[j]` is the objective coefficient of column j (maximization);
    /// reduced costs are recomputed from the basis every iteration.
    fn optimize(&mut self, cost: &[f64], allowed: &[bool]) -> Result<(), LpError> {
        for _ in 0..MAX_ITERATIONS {
            let mut entering = None;
            for j in 0..self.num_cols {
                if !allowed[j] || self.basis.contains(&j) {
                    continue;
                }
                // reduced cost: c_j - c_B . B^-1 A_j
                let mut reduced = cost[j];
                for (r, &b) in self.basis.iter().enumerate() {
                    reduced -= cost[b] * self.rows[r][j];
                }
                if reduced > PIVOT_TOL {
                    entering = Some(j);
                    break; // Bland: lowest improving index
                }
            }
            let Some(col) = entering else {
                return Ok(());
            };
            let mut leaving: Option<(usize, f64)> = None;
            for r in 0..self.rows.len() {
                let a = self.rows[r][col];
                if a > PIVOT_TOL {
                    let ratio = self.rhs(r) / a;
                    let better = match leaving {
                        None => true,
                        Some((lr, lratio)) => {
                            ratio < lratio - PIVOT_TOL
                                || (ratio < lratio + PIVOT_TOL && self.basis[r] < self.basis[lr])
                        }
                    };
                    if better {
                        leaving = Some((r, ratio));
                    }
                }
            }
            let Some((row, _)) = leaving else {
                return Err(LpError::Unbounded);
            };
            self.pivot(row, col);
        }
        Err(LpError::IterationLimit)
    }

    fn objective_value(&self, cost: &[f64]) -> f64 {
        self.basis
            .iter()
            .enumerate()
            .map(|(r, &b)| cost[b] * self.rhs(r))
            .sum()
    }
}

/// Solves the program with a two-phase dense simplex.
pub fn solve(lp: &LinearProgram) -> Result<LpSolution, LpError> {
    let n = lp.objective.len();
    let m = lp.constraints.len();

    // Column layout: structural | slack/surplus | artificial | rhs.
    let num_slack = lp
        .constraints
        .iter()
        .filter(|c| c.relation != Relation::Eq)
        .count();
    let mut num_art = 0usize;

    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(m);
    let mut basis = vec![usize::MAX; m];
    let slack_base = n;
    let art_base = n + num_slack;

    let mut slack_idx = 0usize;
    for (r, c) in lp.constraints.iter().enumerate() {
        let mut coeffs = c.coeffs.clone();
        let mut rhs = c.rhs;
        let mut relation = c.relation;
        if rhs < 0.0 {
            for v in coeffs.iter_mut() {
                *v = -*v;
            }
            rhs = -rhs;
            relation = match relation {
                Relation::Le => Relation::Ge,
                Relation::Ge => Relation::Le,
                Relation::Eq => Relation::Eq,
            };
        }
        let mut row = vec![0.0; n + num_slack + m + 1];
        row[..n].copy_from_slice(&coeffs);
        *row.last_mut().unwrap() = rhs;
        match relation {
            Relation::Le => {
                row[slack_base + slack_idx] = 1.0;
                basis[r] = slack_base + slack_idx;
                slack_idx += 1;
            }
            Relation::Ge => {
                row[slack_base + slack_idx] = -1.0;
                slack_idx += 1;
                row[art_base + num_art] = 1.0;
                basis[r] = art_base + num_art;
                num_art += 1;
            }
            Relation::Eq => {
                row[art_base + num_art] = 1.0;
                basis[r] = art_base + num_art;
                num_art += 1;
            }
        }
        rows.push(row);
    }

    let num_cols = n + num_slack + num_art;
    for row in rows.iter_mut() {
        let rhs = row.pop().unwrap();
        row.truncate(num_cols);
        row.push(rhs);
    }

    let mut tableau = Tableau {
        rows,
        basis,
        num_cols,
    };

    if num_art > 0 {
        // Phase 1: drive artificials to zero.
        let mut cost = vec![0.0; num_cols];
        for j in art_base..art_base + num_art {
            cost[j] = -1.0;
        }
        let allowed = vec![true; num_cols];
        tableau.optimize(&cost, &allowed)?;
        if tableau.objective_value(&cost) < -1e-7 {
            return Err(LpError::Infeasible);
        }
        // Pivot any artificial still in the basis onto a structural column,
        // or drop its (redundant) row.
        let mut r = 0;
        while r < tableau.rows.len() {
            if tableau.basis[r] >= art_base {
                let mut pivoted = false;
                for j in 0..art_base {
                    if tableau.rows[r][j].abs() > PIVOT_TOL {
                        tableau.pivot(r, j);
                        pivoted = true;
                        break;
                    }
                }
                if !pivoted {
                    tableau.rows.remove(r);
                    tableau.basis.remove(r);
                    continue;
                }
            }
            r += 1;
        }
    }

    // Phase 2: the real objective; artificials may not re-enter.
    let mut cost = vec![0.0; num_cols];
    cost[..n].copy_from_slice(&lp.objective);
    let mut allowed = vec![true; num_cols];
    for a in allowed.iter_mut().skip(art_base) {
        *a = false;
    }
    tableau.optimize(&cost, &allowed)?;

    let mut x = vec![0.0; n];
    for (r, &b) in tableau.basis.iter().enumerate() {
        if b < n {
            x[b] = tableau.rhs(r);
        }
    }
    Ok(LpSolution {
        objective: tableau.objective_value(&cost),
        x,
    })
}

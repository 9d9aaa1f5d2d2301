//! Dense two-phase simplex for small linear programs over free variables,
//! with dual multipliers (shadow prices) per constraint.
//!
//! Problems here are tiny (tens of rows), so a full tableau with Bland's
//! rule is plenty. Duals follow the shadow-price convention: the dual of a
//! constraint is the derivative of the optimal objective with respect to
//! that constraint's right-hand side.

use thiserror::Error;

const PIVOT_TOL: f64 = 1e-9;
const FEASIBILITY_TOL: f64 = 1e-7;
const MAX_ITERATIONS: usize = 50_000;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LpError {
    #[error("linear program is infeasible")]
    Infeasible,
    #[error("linear program is unbounded")]
    Unbounded,
    #[error("simplex iteration limit reached")]
    IterationLimit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Eq,
    Le,
    Ge,
}

#[derive(Debug, Clone)]
struct Row {
    coeffs: Vec<f64>,
    relation: Relation,
    rhs: f64,
}

/// Minimize `c'x` over free `x` subject to linear constraints.
#[derive(Debug, Clone)]
pub struct LinearProgram {
    num_vars: usize,
    objective: Vec<f64>,
    rows: Vec<Row>,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective_value: f64,
    /// One dual per constraint, in insertion order.
    pub duals: Vec<f64>,
}

impl LinearProgram {
    pub fn new(num_vars: usize) -> Self {
        Self { num_vars, objective: vec![0.0; num_vars], rows: Vec::new() }
    }

    pub fn set_objective(&mut self, coeffs: Vec<f64>) {
        assert_eq!(coeffs.len(), self.num_vars);
        self.objective = coeffs;
    }

    /// Returns the constraint's row index (the index of its dual).
    pub fn add_constraint(&mut self, coeffs: Vec<f64>, relation: Relation, rhs: f64) -> usize {
        assert_eq!(coeffs.len(), self.num_vars);
        self.rows.push(Row { coeffs, relation, rhs });
        self.rows.len() - 1
    }

    pub fn num_constraints(&self) -> usize {
        self.rows.len()
    }

    pub fn solve(&self) -> Result<LpSolution, LpError> {
        let n = self.num_vars;
        let m = self.rows.len();

        // Normalize to rhs >= 0, remembering sign flips for the duals.
        let mut flip = vec![1.0f64; m];
        let mut rows: Vec<Row> = self.rows.clone();
        for (i, row) in rows.iter_mut().enumerate() {
            if row.rhs < 0.0 {
                flip[i] = -1.0;
                row.rhs = -row.rhs;
                for c in &mut row.coeffs {
                    *c = -*c;
                }
                row.relation = match row.relation {
                    Relation::Eq => Relation::Eq,
                    Relation::Le => Relation::Ge,
                    Relation::Ge => Relation::Le,
                };
            }
        }

        // Column layout: positive parts, negative parts, slack/surplus, artificials.
        let mut num_slack = 0;
        let mut num_art = 0;
        for row in &rows {
            match row.relation {
                Relation::Le => num_slack += 1,
                Relation::Ge => {
                    num_slack += 1;
                    num_art += 1;
                }
                Relation::Eq => num_art += 1,
            }
        }
        let slack_base = 2 * n;
        let art_base = slack_base + num_slack;
        let num_cols = art_base + num_art;

        // Tableau: m rows of [columns | rhs].
        let mut tab = vec![vec![0.0f64; num_cols + 1]; m];
        let mut basis = vec![usize::MAX; m];
        // Which slack/artificial column belongs to which row.
        let mut row_slack = vec![usize::MAX; m];
        let mut row_art = vec![usize::MAX; m];
        let mut next_slack = slack_base;
        let mut next_art = art_base;
        for (i, row) in rows.iter().enumerate() {
            for j in 0..n {
                tab[i][j] = row.coeffs[j];
                tab[i][n + j] = -row.coeffs[j];
            }
            tab[i][num_cols] = row.rhs;
            match row.relation {
                Relation::Le => {
                    tab[i][next_slack] = 1.0;
                    row_slack[i] = next_slack;
                    basis[i] = next_slack;
                    next_slack += 1;
                }
                Relation::Ge => {
                    tab[i][next_slack] = -1.0;
                    row_slack[i] = next_slack;
                    next_slack += 1;
                    tab[i][next_art] = 1.0;
                    row_art[i] = next_art;
                    basis[i] = next_art;
                    next_art += 1;
                }
                Relation::Eq => {
                    tab[i][next_art] = 1.0;
                    row_art[i] = next_art;
                    basis[i] = next_art;
                    next_art += 1;
                }
            }
        }

        // Phase 1: minimize the sum of artificials.
        let mut cost = vec![0.0f64; num_cols + 1];
        for j in art_base..num_cols {
            cost[j] = 1.0;
        }
        for i in 0..m {
            if basis[i] >= art_base {
                for j in 0..=num_cols {
                    cost[j] -= tab[i][j];
                }
            }
        }
        run_simplex(&mut tab, &mut cost, &mut basis, num_cols, num_cols)?;
        let phase1_obj = -cost[num_cols];
        if phase1_obj > FEASIBILITY_TOL {
            return Err(LpError::Infeasible);
        }

        // Drive artificials out of the basis where possible; rows where it is
        // impossible are redundant (all-zero) and stay harmlessly basic at 0.
        for i in 0..m {
            if basis[i] >= art_base {
                if let Some(j) = (0..art_base).find(|&j| tab[i][j].abs() > PIVOT_TOL) {
                    pivot(&mut tab, &mut cost, &mut basis, i, j, num_cols);
                }
            }
        }

        // Phase 2: original objective over split variables; artificials are
        // barred from entering.
        let mut cost2 = vec![0.0f64; num_cols + 1];
        for j in 0..n {
            cost2[j] = self.objective[j];
            cost2[n + j] = -self.objective[j];
        }
        for i in 0..m {
            let b = basis[i];
            let cb = if b < num_cols { cost2[b] } else { 0.0 };
            if cb != 0.0 {
                for j in 0..=num_cols {
                    cost2[j] -= cb * tab[i][j];
                }
            }
        }
        run_simplex(&mut tab, &mut cost2, &mut basis, art_base, num_cols)?;

        // Primal solution.
        let mut x = vec![0.0f64; n];
        for i in 0..m {
            let b = basis[i];
            if b < n {
                x[b] += tab[i][num_cols];
            } else if b < 2 * n {
                x[b - n] -= tab[i][num_cols];
            }
        }
        let objective_value = self.objective.iter().zip(&x).map(|(c, v)| c * v).sum();

        // Duals from final reduced costs: for a unit column e_i with cost 0,
        // the reduced cost is -y_i (+y_i for the -1 surplus column).
        let mut duals = vec![0.0f64; m];
        for i in 0..m {
            let y = if row_art[i] != usize::MAX {
                -cost2[row_art[i]]
            } else {
                match rows[i].relation {
                    Relation::Le => -cost2[row_slack[i]],
                    _ => cost2[row_slack[i]],
                }
            };
            duals[i] = flip[i] * y;
        }

        Ok(LpSolution { x, objective_value, duals })
    }
}

/// Bland's-rule simplex on a prepared tableau. `enter_limit` bounds the
/// entering columns (used to bar artificials in phase 2).
fn run_simplex(
    tab: &mut [Vec<f64>],
    cost: &mut [f64],
    basis: &mut [usize],
    enter_limit: usize,
    num_cols: usize,
) -> Result<(), LpError> {
    let m = tab.len();
    for _ in 0..MAX_ITERATIONS {
        let Some(enter) = (0..enter_limit).find(|&j| cost[j] < -PIVOT_TOL) else {
            return Ok(());
        };
        let mut leave: Option<usize> = None;
        let mut best_ratio = f64::INFINITY;
        for i in 0..m {
            if tab[i][enter] > PIVOT_TOL {
                let ratio = tab[i][num_cols] / tab[i][enter];
                if ratio < best_ratio - 1e-12
                    || (ratio < best_ratio + 1e-12
                        && leave.is_some_and(|l| basis[i] < basis[l]))
                {
                    best_ratio = ratio;
                    leave = Some(i);
                }
            }
        }
        let Some(leave) = leave else {
            return Err(LpError::Unbounded);
        };
        pivot(tab, cost, basis, leave, enter, num_cols);
    }
    Err(LpError::IterationLimit)
}

fn pivot(
    tab: &mut [Vec<f64>],
    cost: &mut [f64],
    basis: &mut [usize],
    row: usize,
    col: usize,
    num_cols: usize,
) {
    let p = tab[row][col];
    for j in 0..=num_cols {
        tab[row][j] /= p;
    }
    tab[row][col] = 1.0;
    for i in 0..tab.len() {
        if i != row {
            let factor = tab[i][col];
            if factor != 0.0 {
                for j in 0..=num_cols {
                    tab[i][j] -= factor * tab[row][j];
                }
                tab[i][col] = 0.0;
            }
        }
    }
    let factor = cost[col];
    if factor != 0.0 {
        for j in 0..=num_cols {
            cost[j] -= factor * tab[row][j];
        }
        cost[col] = 0.0;
    }
    basis[row] = col;
}

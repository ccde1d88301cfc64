//! Small dense linear programs over `a·x <= b` rows, backed by `microlp`.
//!
//! Used for boundedness probes of operational regions, the max-slack interior
//! point that seeds the barrier solver, and the oracle's sampling box.

use microlp::{ComparisonOp, OptimizationDirection, Problem, Solution, Variable};

use crate::error::{Error, Result};
use crate::geometry::Polytope;

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal { x: Vec<f64>, value: f64 },
    Infeasible,
    Unbounded,
}

/// Outcome plus the simplex pivot count, which feeds the work model.
#[derive(Debug, Clone, PartialEq)]
pub struct LpRun {
    pub outcome: LpOutcome,
    pub pivots: u64,
}

impl LpRun {
    /// Rough flop estimate: one dense tableau sweep per pivot.
    pub fn work(&self, rows: usize, cols: usize) -> u64 {
        (self.pivots + 1) * (rows as u64 + 1) * (cols as u64 + 1)
    }
}

/// Maximizes `objective·x` subject to `row.0·x <= row.1` for every row.
/// Variables are free unless `bounds` is given.
pub fn maximize(
    objective: &[f64],
    rows: &[(Vec<f64>, f64)],
    bounds: Option<&[(f64, f64)]>,
) -> Result<LpRun> {
    let mut problem = Problem::new(OptimizationDirection::Maximize);
    let vars: Vec<Variable> = objective
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            let b = bounds.map_or((f64::NEG_INFINITY, f64::INFINITY), |b| b[i]);
            problem.add_var(c, b)
        })
        .collect();
    for (a, b) in rows {
        if a.len() != vars.len() {
            return Err(Error::Dimension { expected: vars.len(), got: a.len() });
        }
        let expr: Vec<(Variable, f64)> = vars
            .iter()
            .zip(a)
            .filter(|(_, &c)| c != 0.0)
            .map(|(&v, &c)| (v, c))
            .collect();
        problem.add_constraint(expr.as_slice(), ComparisonOp::Le, *b);
    }
    match problem.solve() {
        Ok(outcome) => match outcome.into_solution() {
            Ok(sol) => Ok(read_solution(&sol, &vars)),
            Err(_) => Err(Error::Lp("solve interrupted".into())),
        },
        Err(microlp::Error::Infeasible) => Ok(LpRun { outcome: LpOutcome::Infeasible, pivots: 0 }),
        Err(microlp::Error::Unbounded) => Ok(LpRun { outcome: LpOutcome::Unbounded, pivots: 0 }),
        Err(e) => Err(Error::Lp(e.to_string())),
    }
}

fn read_solution(sol: &Solution, vars: &[Variable]) -> LpRun {
    LpRun {
        outcome: LpOutcome::Optimal {
            x: vars.iter().map(|&v| sol.var_value(v)).collect(),
            value: sol.objective(),
        },
        pivots: sol.stats().lp_iterations,
    }
}


/// Per-axis `[min, max]` of the polytope, via two LPs per coordinate.
///
/// Errors with `Unbounded { axis }` on the first unbounded probe and with
/// `EmptyRegion` when the region has no points.
pub fn axis_bounds(poly: &Polytope) -> Result<(Vec<(f64, f64)>, u64)> {
    let n = poly.dim();
    let rows = poly.rows();
    let mut out = Vec::with_capacity(n);
    let mut work = 0;
    for axis in 0..n {
        let mut lohi = [0.0; 2];
        for (slot, sign) in [(1usize, 1.0), (0, -1.0)] {
            let mut c = vec![0.0; n];
            c[axis] = sign;
            let run = maximize(&c, &rows, None)?;
            work += run.work(rows.len(), n);
            match run.outcome {
                LpOutcome::Optimal { value, .. } => lohi[slot] = sign * value,
                LpOutcome::Unbounded => return Err(Error::Unbounded { axis }),
                LpOutcome::Infeasible => return Err(Error::EmptyRegion),
            }
        }
        out.push((lohi[0], lohi[1]));
    }
    Ok((out, work))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn maximize_simple_triangle() {
        // x + y <= 1, x >= 0, y >= 0; max x + 2y = 2 at (0, 1)
        let rows = vec![
            (vec![1.0, 1.0], 1.0),
            (vec![-1.0, 0.0], 0.0),
            (vec![0.0, -1.0], 0.0),
        ];
        let run = maximize(&[1.0, 2.0], &rows, None).unwrap();
        match run.outcome {
            LpOutcome::Optimal { x, value } => {
                assert!((value - 2.0).abs() < 1e-9);
                assert!((x[0]).abs() < 1e-9 && (x[1] - 1.0).abs() < 1e-9);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn detects_unbounded_and_infeasible() {
        let rows = vec![(vec![-1.0, 0.0], 0.0)];
        assert_eq!(maximize(&[1.0, 0.0], &rows, None).unwrap().outcome, LpOutcome::Unbounded);
        let rows = vec![(vec![1.0], -1.0), (vec![-1.0], -1.0)];
        assert_eq!(maximize(&[1.0], &rows, None).unwrap().outcome, LpOutcome::Infeasible);
    }
}

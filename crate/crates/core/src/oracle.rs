//! Brute-force reference solutions used to check the solvers.
//!
//! Nothing in the solve path calls into this module. The projection oracle
//! solves the polytope projection exactly by least squares on every face
//! subset; the sampling oracle approximates the full problem by rejection
//! sampling and pattern search.

use itertools::Itertools;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{Polytope, StateVector};
use crate::lp::{self, LpOutcome};
use crate::orsop::OrsopProblem;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub best_point: StateVector,
    pub best_objective: f64,
    pub samples_used: usize,
    /// No other candidate at a different point comes within 1e-10 of the best.
    pub certified_unique: bool,
}

const PRIMAL_TOL: f64 = 1e-9;
const DUAL_TOL: f64 = 1e-10;
const UNIQUE_GAP: f64 = 1e-10;

/// Euclidean projection of `xp` onto `region`.
pub fn projection_oracle(region: &Polytope, xp: &StateVector) -> Result<OracleResult> {
    let n = region.dim();
    if xp.len() != n {
        return Err(Error::Dimension { expected: n, got: xp.len() });
    }
    let run = lp::maximize(&vec![0.0; n], &region.rows(), None)?;
    if run.outcome == LpOutcome::Infeasible {
        return Err(Error::Input("projection onto an empty region".into()));
    }
    let hs = region.halfspaces();
    let r = hs.len();
    let value = |x: &DVector<f64>, j: usize| hs[j].normal().dot(x) + hs[j].offset();
    if (0..r).all(|j| value(xp, j) <= 0.0) {
        return Ok(OracleResult {
            best_point: xp.clone(),
            best_objective: 0.0,
            samples_used: 0,
            certified_unique: true,
        });
    }

    // (point, objective, dual feasible)
    let mut found: Vec<(DVector<f64>, f64, bool)> = Vec::new();
    for size in 1..=r.min(n) {
        for subset in (0..r).combinations(size) {
            let a = DMatrix::from_fn(size, n, |i, k| hs[subset[i]].normal()[k]);
            let resid = DVector::from_fn(size, |i, _| value(xp, subset[i]));
            // least-norm y with A y = resid; x = xp - y lies on the affine hull
            let Ok(pinv) = a.clone().pseudo_inverse(1e-12) else {
                continue;
            };
            let y = &pinv * &resid;
            let x = xp - &y;
            if (&a * &x + DVector::from_fn(size, |i, _| hs[subset[i]].offset())).amax() > PRIMAL_TOL {
                continue;
            }
            if (0..r).any(|j| value(&x, j) > PRIMAL_TOL) {
                continue;
            }
            // stationarity: xp - x = Aᵀ μ with μ >= 0
            let mu = pinv.transpose() * &y;
            let dual = mu.iter().all(|&m| m >= -DUAL_TOL) && (a.transpose() * &mu - &y).amax() <= 1e-9;
            let obj = y.norm_squared();
            found.push((x, obj, dual));
        }
    }
    if found.is_empty() {
        return Err(Error::Numerical("no face projection is feasible".into()));
    }
    let pick = |dual_only: bool| {
        found
            .iter()
            .filter(|c| !dual_only || c.2)
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .cloned()
    };
    let (best, best_obj, _) = pick(true).or_else(|| pick(false)).expect("nonempty");
    let certified_unique = found
        .iter()
        .filter(|c| (&c.0 - &best).norm() > 1e-9)
        .all(|c| c.1 > best_obj + UNIQUE_GAP);
    Ok(OracleResult {
        best_point: best,
        best_objective: best_obj,
        samples_used: found.len(),
        certified_unique,
    })
}

/// Feasibility and objective for the sampling oracle, written independently
/// of the solver's own checks.
struct Judge<'a> {
    prob: &'a OrsopProblem,
    p: DMatrix<f64>,
    norm: f64,
    /// `ν_kᵀ P⁻¹ ν_k` per operational face.
    widths: Vec<f64>,
}

impl<'a> Judge<'a> {
    fn new(prob: &'a OrsopProblem) -> Result<Self> {
        let p = prob.shape().dense().clone();
        let n = p.nrows();
        let p_inv = p.clone().try_inverse().ok_or_else(|| Error::Numerical("P is singular".into()))?;
        let norm = p.determinant().powf(1.0 / n as f64);
        let widths = prob
            .op_region()
            .halfspaces()
            .iter()
            .map(|h| h.normal().dot(&(&p_inv * h.normal())))
            .collect();
        Ok(Self { prob, p, norm, widths })
    }

    fn level(&self, c: &DVector<f64>) -> f64 {
        let d = self.prob.xp() - c;
        d.dot(&(&self.p * &d))
    }

    fn objective(&self, c: &DVector<f64>) -> f64 {
        self.level(c) / self.norm
    }

    fn feasible(&self, c: &DVector<f64>) -> bool {
        let in_ref = self
            .prob
            .ref_region()
            .halfspaces()
            .iter()
            .all(|h| h.normal().dot(c) + h.offset() <= 0.0);
        if !in_ref {
            return false;
        }
        let level = self.level(c);
        self.prob
            .op_region()
            .halfspaces()
            .iter()
            .zip(&self.widths)
            .all(|(h, w)| h.normal().dot(c) + h.offset() + (level * w).sqrt() <= 0.0)
    }
}

const CHUNK: usize = 4096;

/// Best feasible reference found by uniform sampling of the bounding box of
/// the reference region intersected with the operational region, refined by
/// pattern search. `None` when no sample is feasible (evidence, not proof,
/// of infeasibility).
pub fn sampling_oracle(prob: &OrsopProblem, budget: usize, seed: u64) -> Result<Option<OracleResult>> {
    let judge = Judge::new(prob)?;
    let n = prob.dim();
    let mut rows = prob.ref_region().rows();
    rows.extend(prob.op_region().rows());
    let mut bounds = Vec::with_capacity(n);
    for axis in 0..n {
        let mut lohi = [0.0; 2];
        for (slot, sign) in [(1usize, 1.0), (0, -1.0)] {
            let mut c = vec![0.0; n];
            c[axis] = sign;
            match lp::maximize(&c, &rows, None)?.outcome {
                LpOutcome::Optimal { value, .. } => lohi[slot] = sign * value,
                LpOutcome::Infeasible => return Ok(None),
                LpOutcome::Unbounded => return Err(Error::Unbounded { axis }),
            }
        }
        bounds.push((lohi[0], lohi[1]));
    }

    let chunks = budget.div_ceil(CHUNK);
    let best = (0..chunks)
        .into_par_iter()
        .filter_map(|chunk| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(chunk as u64);
            let count = CHUNK.min(budget - chunk * CHUNK);
            let mut best: Option<(f64, DVector<f64>)> = None;
            for _ in 0..count {
                let c = DVector::from_fn(n, |i, _| {
                    let (lo, hi) = bounds[i];
                    if hi > lo { rng.random_range(lo..=hi) } else { lo }
                });
                if judge.feasible(&c) {
                    let obj = judge.objective(&c);
                    if best.as_ref().is_none_or(|(b, _)| obj < *b) {
                        best = Some((obj, c));
                    }
                }
            }
            best.map(|(obj, c)| (obj, chunk, c))
        })
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let Some((_, _, start)) = best else {
        return Ok(None);
    };

    let diameter = bounds.iter().map(|(lo, hi)| hi - lo).fold(0.0, f64::max).max(1e-12);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let (point, objective) = refine(&judge, start, diameter * 0.05, &mut rng);
    Ok(Some(OracleResult {
        best_point: point,
        best_objective: objective,
        samples_used: budget,
        certified_unique: false,
    }))
}

/// Pattern search over ±axes, the direction to `xp` and random directions,
/// halving the step whenever no direction improves.
fn refine(judge: &Judge, start: DVector<f64>, step: f64, rng: &mut ChaCha8Rng) -> (DVector<f64>, f64) {
    let n = start.len();
    let mut x = start;
    let mut fx = judge.objective(&x);
    let mut h = step;
    let mut evals = 0usize;
    while h > 1e-13 && evals < 400_000 {
        let mut dirs: Vec<DVector<f64>> = Vec::with_capacity(2 * n + 2 + 2 * n);
        for i in 0..n {
            let mut e = DVector::zeros(n);
            e[i] = 1.0;
            dirs.push(e.clone());
            dirs.push(-e);
        }
        let to_xp = judge.prob.xp() - &x;
        if to_xp.norm() > 0.0 {
            dirs.push(to_xp.normalize());
        }
        for _ in 0..2 * n {
            let d = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
            if d.norm() > 1e-6 {
                dirs.push(d.normalize());
            }
        }
        let mut improved = false;
        for d in &dirs {
            let c = &x + d * h;
            evals += 1;
            if judge.feasible(&c) {
                let fc = judge.objective(&c);
                if fc < fx {
                    x = c;
                    fx = fc;
                    improved = true;
                }
            }
        }
        if !improved {
            h *= 0.5;
        }
    }
    (x, fx)
}

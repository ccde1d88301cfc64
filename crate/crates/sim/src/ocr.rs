//! Baseline: redesign the controller instead of moving the reference.
//!
//! This is a surrogate for LMI-based online controller redesign, not the LMI
//! method itself. It walks a fixed ladder of LQR designs with state weight
//! `Q = s I` and input weight `R = I`, solves each Riccati equation by
//! Kleinman's iteration (a Lyapunov solve per iterate), derives the new
//! Lyapunov matrix from `A_clᵀ P + P A_cl = -I` and accepts the first design
//! whose ellipsoid through the frozen state fits the new operational region.
//! When no rung fits, the current design is kept if it still fits.

use std::time::Instant;

use nalgebra::DMatrix;

use refshift_core::geometry::{Polytope, StateVector, DEFAULT_TOL};
use refshift_core::lyapunov::{lyapunov_work, solve_lyapunov, Ellipsoid, PlantModel, SpdMatrix};
use refshift_core::orsop::{Diagnostics, SolveReport, SolveStatus};
use refshift_core::{Error, Result};

/// State-weight scalings tried in order.
pub const LADDER: [f64; 7] = [1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3, 1e4];

const KLEINMAN_MAX_ITERS: usize = 100;
const KLEINMAN_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct LqrDesign {
    pub gain: DMatrix<f64>,
    /// Riccati solution.
    pub riccati: SpdMatrix,
    pub iterations: usize,
    pub work: u64,
}

fn solve_work(n: usize) -> u64 {
    // Lyapunov LU plus the Hurwitz eigenvalue check and a few products
    lyapunov_work(n) + 14 * (n as u64).pow(3)
}

/// LQR gain for `Q = q_scale I`, `R = I` by Kleinman's iteration, started
/// from the plant's (stabilizing) gain.
pub fn lqr_kleinman(plant: &PlantModel, q_scale: f64) -> Result<LqrDesign> {
    if !(q_scale > 0.0 && q_scale.is_finite()) {
        return Err(Error::Input(format!("state weight must be positive, got {q_scale}")));
    }
    let n = plant.n();
    let (a, b) = (plant.a(), plant.b());
    let q = DMatrix::<f64>::identity(n, n) * q_scale;
    let mut k = plant.k().clone();
    let mut work = 0;
    for it in 1..=KLEINMAN_MAX_ITERS {
        let a_i = a - b * &k;
        let p = solve_lyapunov(&a_i, &SpdMatrix::new(&q + k.transpose() * &k)?)?;
        work += solve_work(n);
        let next = b.transpose() * p.dense();
        let step = (&next - &k).norm();
        let scale = 1.0 + next.norm();
        k = next;
        if step <= KLEINMAN_TOL * scale {
            return Ok(LqrDesign { gain: k, riccati: p, iterations: it, work });
        }
    }
    Err(Error::Numerical(format!("Kleinman iteration did not converge in {KLEINMAN_MAX_ITERS} steps")))
}

#[derive(Debug, Clone, PartialEq)]
pub struct OcrOutcome {
    /// New gain and Lyapunov matrix, present when a rung was accepted.
    pub design: Option<(DMatrix<f64>, SpdMatrix)>,
    /// Index into [`LADDER`] of the accepted rung; `None` with a design
    /// means the current controller was kept.
    pub rung: Option<usize>,
    pub rungs_tried: usize,
    pub report: SolveReport,
}

fn redesigned(
    x_ref: &StateVector,
    e: Ellipsoid,
    shape: &SpdMatrix,
    margin: f64,
    started: Instant,
    work: u64,
) -> SolveReport {
    let n = shape.dim();
    SolveReport {
        status: SolveStatus::Redesigned,
        reference: Some(x_ref.clone()),
        objective_volume: e.volume(),
        objective: e.level() / shape.det().powf(1.0 / n as f64),
        margin,
        ellipsoid: Some(e),
        elapsed: started.elapsed(),
        work,
        diagnostics: Diagnostics::default(),
    }
}

/// Runs the redesign for the frozen state `x_t1`, keeping the reference
/// `x_ref`; `current` is the Lyapunov matrix of the plant's own gain.
/// Status is `Redesigned` on success.
pub fn ocr_surrogate(
    plant: &PlantModel,
    current: &SpdMatrix,
    op_after: &Polytope,
    x_t1: &StateVector,
    x_ref: &StateVector,
) -> OcrOutcome {
    let started = Instant::now();
    let n = plant.n();
    let check_work = op_after.len() as u64 * 2 * (n * n) as u64;
    let mut work = 0;
    let mut last_reason = String::from("ladder exhausted");
    for (i, &s) in LADDER.iter().enumerate() {
        let design = match lqr_kleinman(plant, s) {
            Ok(d) => d,
            Err(e) => {
                last_reason = format!("rung {s:e}: {e}");
                continue;
            }
        };
        work += design.work;
        let accepted = plant.with_gain(design.gain.clone()).and_then(|p| {
            let shape = solve_lyapunov(p.a_cl(), &SpdMatrix::identity(n))?;
            let e = Ellipsoid::through(x_ref.clone(), shape.clone(), x_t1)?;
            let fit = e.in_region(op_after, DEFAULT_TOL)?;
            Ok((shape, e, fit))
        });
        work += solve_work(n) + check_work;
        match accepted {
            Ok((shape, e, fit)) if fit.feasible => {
                let report = redesigned(x_ref, e, &shape, fit.worst_violation, started, work);
                return OcrOutcome { design: Some((design.gain, shape)), rung: Some(i), rungs_tried: i + 1, report };
            }
            Ok(_) => last_reason = "no rung of the ladder fits the new region".into(),
            Err(e) => last_reason = format!("rung {s:e}: {e}"),
        }
    }
    work += check_work;
    if let Ok(e) = Ellipsoid::through(x_ref.clone(), current.clone(), x_t1) {
        if let Ok(fit) = e.in_region(op_after, DEFAULT_TOL) {
            if fit.feasible {
                let report = redesigned(x_ref, e, current, fit.worst_violation, started, work);
                return OcrOutcome {
                    design: Some((plant.k().clone(), current.clone())),
                    rung: None,
                    rungs_tried: LADDER.len(),
                    report,
                };
            }
        }
    }
    OcrOutcome {
        design: None,
        rung: None,
        rungs_tried: LADDER.len(),
        report: SolveReport::failure(last_reason, started.elapsed(), work, Diagnostics::default()),
    }
}

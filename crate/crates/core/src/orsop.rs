//! Online reference re-optimization after an operational-region change.
//!
//! Given the frozen state `xp`, find a reference `x'` in the reference region
//! whose Lyapunov ellipsoid through `xp` fits the new operational region,
//! with minimal volume. The solve tries, in order:
//!
//! 1. `xp` itself when it is an admissible reference (level-0 ellipsoid);
//! 2. the analytic projection of `xp` onto the reference region, accepted when
//!    its ellipsoid clears the operational faces;
//! 3. a log-barrier Newton solve from a deep interior point.
//!
//! Non-spherical `P` is handled by solving in whitened coordinates, where the
//! ellipsoid is a ball and the volume objective is squared distance.

use std::fmt;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};

use crate::barrier::{newton_solve, BarrierProblem, NewtonConfig, NewtonStatus};
use crate::error::{check_dim, Error, Result};
use crate::geometry::{report_from_values, FeasibilityReport, Polytope, RegionKind, StateVector, DEFAULT_TOL};
use crate::kkt;
use crate::lyapunov::{Ellipsoid, SpdMatrix};
use crate::whitening::WhitenTransform;

/// `P` with `λ_max / λ_min <= 1 + SPHERE_REL` is treated as a multiple of I.
pub const SPHERE_REL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct OrsopProblem {
    ref_region: Polytope,
    op_region: Polytope,
    xp: StateVector,
    shape: SpdMatrix,
}

impl OrsopProblem {
    /// Rejects `xp` outside the open operational region: no reference can
    /// keep such a state safe.
    pub fn new(ref_region: Polytope, op_region: Polytope, xp: StateVector, shape: SpdMatrix) -> Result<Self> {
        let n = xp.len();
        check_dim(n, ref_region.dim())?;
        check_dim(n, op_region.dim())?;
        check_dim(n, shape.dim())?;
        if op_region.kind() != RegionKind::Operational {
            return Err(Error::Input("second region must be operational".into()));
        }
        if xp.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("state has non-finite entries".into()));
        }
        let worst = op_region.contains(&xp, 0.0)?.worst_violation;
        if worst >= 0.0 {
            return Err(Error::Input(format!(
                "state is not strictly inside the operational region (worst face value {worst})"
            )));
        }
        Ok(Self { ref_region, op_region, xp, shape })
    }

    pub fn ref_region(&self) -> &Polytope {
        &self.ref_region
    }

    pub fn op_region(&self) -> &Polytope {
        &self.op_region
    }

    pub fn xp(&self) -> &StateVector {
        &self.xp
    }

    pub fn shape(&self) -> &SpdMatrix {
        &self.shape
    }

    pub fn dim(&self) -> usize {
        self.xp.len()
    }

    /// Volume-monotone objective `(x - xp)ᵀ P (x - xp) / det(P)^{1/n}`;
    /// plain squared distance when `P = cI`.
    pub fn objective(&self, reference: &StateVector) -> f64 {
        let d = reference - &self.xp;
        self.shape.quad(&d) / self.shape.det().powf(1.0 / self.dim() as f64)
    }

    /// Ellipsoid through `xp` centred at `reference`.
    pub fn ellipsoid(&self, reference: &StateVector) -> Result<Ellipsoid> {
        Ellipsoid::through(reference.clone(), self.shape.clone(), &self.xp)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Method {
    /// Case 1, then the analytic step, then Newton.
    #[default]
    Auto,
    /// Never runs Newton.
    KktOnly,
    /// Skips the analytic step.
    NewtonOnly,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOptions {
    pub newton: NewtonConfig,
    pub method: Method,
    /// Whiten even when `P` is spherical.
    pub force_whitening: bool,
    /// Origin of the whitened frame, normally the pre-change reference.
    pub origin: Option<StateVector>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { newton: NewtonConfig::default(), method: Method::Auto, force_whitening: false, origin: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SolveStatus {
    Case1,
    KktAnalytic,
    NewtonNumeric,
    /// Gain redesign by the baseline controller-redesign surrogate.
    Redesigned,
    Failure,
}

impl SolveStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SolveStatus::Case1 => "case1",
            SolveStatus::KktAnalytic => "kkt",
            SolveStatus::NewtonNumeric => "newton",
            SolveStatus::Redesigned => "redesigned",
            SolveStatus::Failure => "failure",
        }
    }

    pub fn is_success(self) -> bool {
        self != SolveStatus::Failure
    }
}

impl fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// What happened to the analytic candidate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Step2 {
    #[default]
    NotRun,
    Passed,
    Failed,
    NoSurvivor,
    /// More reference constraints than the enumeration budget.
    OverBudget,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Diagnostics {
    pub whitened: bool,
    pub kkt_combinations: u64,
    pub kkt_survivors: usize,
    pub step2: Step2,
    pub newton_iterations: usize,
    pub newton_status: Option<NewtonStatus>,
    pub start_rounds: usize,
    /// Barrier weight actually used, after rescaling for whitened frames.
    pub lambda_effective: f64,
    pub failure_reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub status: SolveStatus,
    pub reference: Option<StateVector>,
    pub ellipsoid: Option<Ellipsoid>,
    /// Volume of the new ellipsoid, NaN on failure.
    pub objective_volume: f64,
    /// See [`OrsopProblem::objective`]; NaN on failure.
    pub objective: f64,
    /// Largest support value of the new ellipsoid over the operational faces
    /// (negative means clearance); NaN on failure.
    pub margin: f64,
    pub elapsed: Duration,
    /// Deterministic flop estimate of the solve.
    pub work: u64,
    pub diagnostics: Diagnostics,
}

impl SolveReport {
    pub fn failure(reason: impl Into<String>, elapsed: Duration, work: u64, mut diagnostics: Diagnostics) -> Self {
        diagnostics.failure_reason = Some(reason.into());
        Self {
            status: SolveStatus::Failure,
            reference: None,
            ellipsoid: None,
            objective_volume: f64::NAN,
            objective: f64::NAN,
            margin: f64::NAN,
            elapsed,
            work,
            diagnostics,
        }
    }
}

/// R1/R2 certificate of a reference, computed from scratch.
#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    pub in_reference_region: FeasibilityReport,
    pub ellipsoid_in_region: FeasibilityReport,
    pub ellipsoid: Ellipsoid,
}

impl Certificate {
    pub fn holds(&self) -> bool {
        self.in_reference_region.feasible && self.ellipsoid_in_region.feasible
    }

    pub fn margin(&self) -> f64 {
        self.ellipsoid_in_region.worst_violation
    }
}

pub fn certify(prob: &OrsopProblem, reference: &StateVector, tol: f64) -> Result<Certificate> {
    let ellipsoid = prob.ellipsoid(reference)?;
    Ok(Certificate {
        in_reference_region: prob.ref_region.contains(reference, tol)?,
        ellipsoid_in_region: ellipsoid.in_region(&prob.op_region, tol)?,
        ellipsoid,
    })
}

/// `q_k = V(xp) - s_k² / (ν_kᵀ P⁻¹ ν_k)` for every operational face, where
/// `s_k = ν_k·candidate + β_k` and `V` is the Lyapunov function centred at
/// the candidate. This is `‖z - zp‖² - dist(z, face)²` in whitened
/// coordinates and reduces to `‖x - xp‖² - s_k²` for `P = I`.
pub fn q_values(candidate: &StateVector, prob: &OrsopProblem) -> Result<Vec<f64>> {
    check_dim(prob.dim(), candidate.len())?;
    let level = prob.shape.quad(&(&prob.xp - candidate));
    Ok(prob
        .op_region
        .halfspaces()
        .iter()
        .map(|h| {
            let s = h.signed_distance(candidate);
            level - s * s / prob.shape.inv_quad(h.normal())
        })
        .collect())
}

/// Nonlinear check of a candidate reference: every `q_k <= tol` (see
/// [`q_values`]) and every face value `s_k <= tol`. The report's values are
/// the q-terms followed by the face values, so `violating_index >= K` points
/// at a side-condition failure.
pub fn check_nonlinear(candidate: &StateVector, prob: &OrsopProblem, tol: f64) -> Result<FeasibilityReport> {
    let mut values = q_values(candidate, prob)?;
    values.extend(prob.op_region.values(candidate)?);
    Ok(report_from_values(&values, tol))
}

struct Frame {
    whiten: Option<WhitenTransform>,
    ref_region: Polytope,
    op_region: Polytope,
    xp: StateVector,
}

impl Frame {
    fn to_s1(&self, z: &StateVector) -> Result<StateVector> {
        match &self.whiten {
            Some(t) => t.to_s1(z),
            None => Ok(z.clone()),
        }
    }
}

pub fn solve(prob: &OrsopProblem, opts: &SolveOptions) -> SolveReport {
    let started = Instant::now();
    let mut work = 0u64;
    let mut diag = Diagnostics { lambda_effective: opts.newton.lambda, ..Default::default() };
    match solve_inner(prob, opts, &mut work, &mut diag) {
        Ok(Some((status, reference))) => finish(prob, status, reference, started, work, diag),
        Ok(None) => {
            let reason = diag.failure_reason.take().unwrap_or_else(|| "no admissible reference".into());
            SolveReport::failure(reason, started.elapsed(), work, diag)
        }
        Err(e) => SolveReport::failure(e.to_string(), started.elapsed(), work, diag),
    }
}

fn finish(
    prob: &OrsopProblem,
    status: SolveStatus,
    reference: StateVector,
    started: Instant,
    mut work: u64,
    diag: Diagnostics,
) -> SolveReport {
    let n = prob.dim() as u64;
    work += (prob.ref_region.len() + prob.op_region.len()) as u64 * (2 * n * n + 2 * n);
    match certify(prob, &reference, DEFAULT_TOL) {
        Ok(cert) if cert.holds() => SolveReport {
            status,
            objective: prob.objective(&reference),
            objective_volume: cert.ellipsoid.volume(),
            margin: cert.margin(),
            ellipsoid: Some(cert.ellipsoid),
            reference: Some(reference),
            elapsed: started.elapsed(),
            work,
            diagnostics: diag,
        },
        Ok(cert) => SolveReport::failure(
            format!(
                "certificate rejected {status} reference (reference slack {}, ellipsoid slack {})",
                cert.in_reference_region.worst_violation,
                cert.ellipsoid_in_region.worst_violation
            ),
            started.elapsed(),
            work,
            diag,
        ),
        Err(e) => SolveReport::failure(e.to_string(), started.elapsed(), work, diag),
    }
}

fn solve_inner(
    prob: &OrsopProblem,
    opts: &SolveOptions,
    work: &mut u64,
    diag: &mut Diagnostics,
) -> Result<Option<(SolveStatus, StateVector)>> {
    opts.newton.validate()?;
    let n = prob.dim();
    let nw = n as u64;
    let r = prob.ref_region.len() as u64;
    let k = prob.op_region.len() as u64;

    *work += r * nw;
    if prob.ref_region.contains(&prob.xp, 0.0)?.feasible {
        return Ok(Some((SolveStatus::Case1, prob.xp.clone())));
    }

    let frame = if opts.force_whitening || !prob.shape.is_spherical(SPHERE_REL) {
        let mut t = WhitenTransform::from_spd(&prob.shape);
        if let Some(o) = &opts.origin {
            t = t.with_origin(o.clone())?;
        }
        let w = t.transform_problem(&prob.ref_region, &prob.op_region, &prob.xp)?;
        *work += (r + k + 2) * nw * nw;
        diag.whitened = true;
        Frame { whiten: Some(t), ref_region: w.ref_region, op_region: w.op_region, xp: w.xp }
    } else {
        Frame {
            whiten: None,
            ref_region: prob.ref_region.clone(),
            op_region: prob.op_region.clone(),
            xp: prob.xp.clone(),
        }
    };

    let mut hint = None;
    if opts.method != Method::NewtonOnly {
        match kkt::enumerate_with_stats(&frame.ref_region, &frame.xp, kkt::EQ_TOL) {
            Ok(e) => {
                *work += e.work;
                diag.kkt_combinations = e.combinations;
                diag.kkt_survivors = e.candidates.len();
                match kkt::select_best(e.candidates) {
                    Some(best) => {
                        let cand = frame.to_s1(&best.point)?;
                        hint = Some(best.point);
                        *work += k * nw * nw;
                        let passes = check_nonlinear(&cand, prob, 0.0)?.feasible
                            && certify(prob, &cand, DEFAULT_TOL)?.holds();
                        if passes {
                            diag.step2 = Step2::Passed;
                            return Ok(Some((SolveStatus::KktAnalytic, cand)));
                        }
                        diag.step2 = Step2::Failed;
                    }
                    None => diag.step2 = Step2::NoSurvivor,
                }
            }
            Err(Error::CombinatorialBudget { .. }) => diag.step2 = Step2::OverBudget,
            Err(e) => return Err(e),
        }
        if opts.method == Method::KktOnly {
            diag.failure_reason = Some(format!("analytic step gave no admissible reference ({:?})", diag.step2));
            return Ok(None);
        }
    }

    let lambda = match &frame.whiten {
        Some(_) => opts.newton.lambda / prob.shape.det().powf(1.0 / n as f64),
        None => opts.newton.lambda,
    };
    diag.lambda_effective = lambda;
    let Some(start) = interior_start(&frame, hint.as_ref(), work, diag)? else {
        diag.failure_reason = Some("no strictly feasible reference exists".into());
        return Ok(None);
    };
    // warm the start along the central path, two decades of weight at a
    // time; a fixed large weight from a far start takes hundreds of damped
    // steps
    let mut start = start;
    let mut iterations = 0;
    let mut weight = lambda.min(WARM_FIRST);
    while weight < lambda {
        let bp = BarrierProblem::new(frame.xp.clone(), &frame.ref_region, &frame.op_region, weight)?;
        let cfg = NewtonConfig { lambda: weight, epsilon: WARM_EPS, ..opts.newton };
        let out = newton_solve(&bp, &start, &cfg)?;
        *work += out.work;
        iterations += out.iterations;
        if let (NewtonStatus::Converged, Some(z)) = (out.status, out.point) {
            start = z;
        }
        weight *= WARM_FACTOR;
    }
    let bp = BarrierProblem::new(frame.xp.clone(), &frame.ref_region, &frame.op_region, lambda)?;
    let cfg = NewtonConfig { lambda, ..opts.newton };
    let out = newton_solve(&bp, &start, &cfg)?;
    *work += out.work;
    diag.newton_iterations = iterations + out.iterations;
    diag.newton_status = Some(out.status);
    match (out.status, out.point) {
        (NewtonStatus::Converged, Some(z)) => Ok(Some((SolveStatus::NewtonNumeric, frame.to_s1(&z)?))),
        _ => {
            diag.failure_reason = Some(format!("Newton iteration failed after {} iterations", out.iterations));
            Ok(None)
        }
    }
}

const WARM_FIRST: f64 = 10.0;
const WARM_FACTOR: f64 = 100.0;
const WARM_EPS: f64 = 1e-6;

const START_OUTER: usize = 14;
const START_NEWTON: usize = 60;

/// Point with a large smallest slack over the reference faces and the
/// ball-containment cones `‖x - xp‖ + s_k(x) <= 0`: maximizes `t` subject
/// to `c_i(x) + t <= 0` with a phase-one log barrier (the cones use the
/// smooth barrier `-log(w² - ‖x - xp‖²)`, `w = -(s_k + t)`), following the
/// central path until the point's slack is at least half the duality bound
/// on the optimal `t`. `None` when that bound proves the interior empty.
///
/// Newton starts from `hint` (the rejected projection) when there is one.
fn interior_start(
    frame: &Frame,
    hint: Option<&StateVector>,
    work: &mut u64,
    diag: &mut Diagnostics,
) -> Result<Option<StateVector>> {
    let n = frame.xp.len();
    let xp = &frame.xp;
    let refs = frame.ref_region.halfspaces();
    let ops = frame.op_region.halfspaces();
    let m = refs.len() + ops.len();
    // barrier parameter: 1 per face, 2 per cone
    let nu = (refs.len() + 2 * ops.len()) as f64;
    let step_work = (m * (n + 1) * (n + 1) + (n + 1).pow(3)) as u64;

    let slack = |x: &StateVector| -> f64 {
        let dist = (x - xp).norm();
        refs.iter()
            .map(|h| -h.signed_distance(x))
            .chain(ops.iter().map(|h| -h.signed_distance(x) - dist))
            .fold(f64::INFINITY, f64::min)
    };
    // φ(x, t) = -τ t - Σ log(-(g_i + t)) - Σ log(w_k² - ‖x - xp‖²),
    // +∞ outside the domain
    let phi = |x: &StateVector, t: f64, tau: f64| -> f64 {
        let d2 = (x - xp).norm_squared();
        let mut v = -tau * t;
        for h in refs {
            let u = -(h.signed_distance(x) + t);
            if !(u > 0.0) {
                return f64::INFINITY;
            }
            v -= u.ln();
        }
        for h in ops {
            let w = -(h.signed_distance(x) + t);
            let g = w * w - d2;
            if !(w > 0.0 && g > 0.0) {
                return f64::INFINITY;
            }
            v -= g.ln();
        }
        v
    };

    let mut x = hint.cloned().unwrap_or_else(|| xp.clone());
    let s0 = slack(&x);
    let scale = 1.0 + s0.abs();
    let mut t = s0 - 0.5 * scale;
    let mut tau = nu / scale;

    let mut a = DVector::zeros(n + 1);
    a[n] = 1.0;
    let mut dg = DVector::zeros(n + 1);
    for outer in 0..START_OUTER {
        diag.start_rounds = outer + 1;
        let mut centred = false;
        for _ in 0..START_NEWTON {
            *work += step_work;
            let d = &x - xp;
            let d2 = d.norm_squared();
            let mut grad = DVector::zeros(n + 1);
            let mut hess = DMatrix::zeros(n + 1, n + 1);
            grad[n] = -tau;
            for h in refs {
                let u = -(h.signed_distance(&x) + t);
                a.rows_mut(0, n).copy_from(h.normal());
                grad.axpy(1.0 / u, &a, 1.0);
                hess.ger(1.0 / (u * u), &a, &a, 1.0);
            }
            for h in ops {
                let w = -(h.signed_distance(&x) + t);
                let g = w * w - d2;
                // ∇g = -2w a - 2(d, 0), ∇²g = 2 a aᵀ - 2 diag(I, 0)
                a.rows_mut(0, n).copy_from(h.normal());
                dg.copy_from(&a);
                dg *= -2.0 * w;
                dg.rows_mut(0, n).axpy(-2.0, &d, 1.0);
                grad.axpy(-1.0 / g, &dg, 1.0);
                hess.ger(1.0 / (g * g), &dg, &dg, 1.0);
                hess.ger(-2.0 / g, &a, &a, 1.0);
                for k in 0..n {
                    hess[(k, k)] += 2.0 / g;
                }
            }
            let step = match hess.clone().cholesky() {
                Some(ch) => -ch.solve(&grad),
                None => {
                    let reg = 1e-12 * hess.diagonal().amax().max(1.0);
                    match (hess + DMatrix::identity(n + 1, n + 1) * reg).cholesky() {
                        Some(ch) => -ch.solve(&grad),
                        None => return Err(Error::Numerical("singular phase-one Hessian".into())),
                    }
                }
            };
            let decrement = -grad.dot(&step);
            if decrement <= 1e-10 {
                centred = true;
                break;
            }
            let f0 = phi(&x, t, tau);
            let mut alpha = 1.0;
            let mut moved = false;
            for _ in 0..60 {
                let xn = &x + step.rows(0, n) * alpha;
                let tn = t + step[n] * alpha;
                if phi(&xn, tn, tau) <= f0 - 0.25 * alpha * decrement {
                    x = xn;
                    t = tn;
                    moved = true;
                    break;
                }
                alpha *= 0.5;
            }
            if !moved {
                break;
            }
        }
        // optimal t* <= t + ν/τ at a centred point
        let bound = t + nu / tau;
        let s = slack(&x);
        if s > 0.0 && (s >= 0.5 * bound || !centred) {
            return Ok(Some(x));
        }
        if centred && bound <= 0.0 {
            return Ok(None);
        }
        tau *= 10.0;
    }
    Ok((slack(&x) > 0.0).then_some(x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::axis_box;

    fn v(x: &[f64]) -> StateVector {
        StateVector::from_column_slice(x)
    }

    fn problem(op_half: f64, xp: &[f64], p: SpdMatrix) -> OrsopProblem {
        let r = axis_box(&[0.0, 0.0], &[1.0, 1.0], RegionKind::ReferenceFeasible).unwrap();
        let o = axis_box(&[-op_half, -op_half], &[op_half, op_half], RegionKind::Operational).unwrap();
        OrsopProblem::new(r, o, v(xp), p).unwrap()
    }

    #[test]
    fn rejects_state_outside_operational_region() {
        let r = axis_box(&[0.0, 0.0], &[1.0, 1.0], RegionKind::ReferenceFeasible).unwrap();
        let o = axis_box(&[-1.0, -1.0], &[1.0, 1.0], RegionKind::Operational).unwrap();
        assert!(OrsopProblem::new(r.clone(), o.clone(), v(&[1.0, 0.0]), SpdMatrix::identity(2)).is_err());
        assert!(OrsopProblem::new(o, r, v(&[0.5, 0.0]), SpdMatrix::identity(2)).is_err());
    }

    #[test]
    fn nonlinear_check_examples() {
        let prob = problem(2.0, &[0.0, 0.0], SpdMatrix::identity(2));
        let rep = check_nonlinear(&v(&[0.5, 0.0]), &prob, 0.0).unwrap();
        assert!(rep.feasible);
        // faces: x1 <= 2, -x1 <= 2, x2 <= 2, -x2 <= 2
        let q = q_values(&v(&[0.5, 0.0]), &prob).unwrap();
        assert!((q[0] + 2.0).abs() < 1e-12);

        let rep = check_nonlinear(&v(&[0.0, 0.0]), &prob, 0.0).unwrap();
        assert!(rep.feasible);
        for (q, h) in q_values(&v(&[0.0, 0.0]), &prob).unwrap().iter().zip(prob.op_region().halfspaces()) {
            let s = h.signed_distance(&v(&[0.0, 0.0]));
            assert!((q + s * s).abs() < 1e-12);
        }

        let rep = check_nonlinear(&v(&[1.5, 0.0]), &prob, 0.0).unwrap();
        assert!(!rep.feasible);
        assert_eq!(rep.violating_index, Some(0));
        assert!((rep.worst_violation - 2.0).abs() < 1e-12);
    }

    #[test]
    fn nonlinear_check_scales_with_spherical_p() {
        let prob = problem(2.0, &[0.0, 0.0], SpdMatrix::scaled_identity(2, 3.0));
        let q = q_values(&v(&[0.5, 0.0]), &prob).unwrap();
        assert!((q[0] + 6.0).abs() < 1e-12);
    }

    #[test]
    fn side_condition_catches_center_beyond_face() {
        // ball around a center past x1 <= 2 with a tiny radius passes q but not the side test
        let prob = problem(2.0, &[1.99, 0.0], SpdMatrix::identity(2));
        let rep = check_nonlinear(&v(&[2.5, 0.0]), &prob, 0.0).unwrap();
        assert!(!rep.feasible);
    }

    #[test]
    fn case1() {
        let prob = problem(3.0, &[0.5, 0.5], SpdMatrix::identity(2));
        let rep = solve(&prob, &SolveOptions::default());
        assert_eq!(rep.status, SolveStatus::Case1);
        assert_eq!(rep.reference.unwrap(), v(&[0.5, 0.5]));
        assert_eq!(rep.objective_volume, 0.0);
        assert_eq!(rep.ellipsoid.unwrap().level(), 0.0);
    }

    #[test]
    fn boundary_state_is_case1() {
        let prob = problem(3.0, &[1.0, 0.5], SpdMatrix::identity(2));
        assert_eq!(solve(&prob, &SolveOptions::default()).status, SolveStatus::Case1);
    }

    #[test]
    fn analytic_step() {
        let prob = problem(3.0, &[2.0, 0.5], SpdMatrix::identity(2));
        let rep = solve(&prob, &SolveOptions::default());
        assert_eq!(rep.status, SolveStatus::KktAnalytic);
        assert!((rep.reference.unwrap() - v(&[1.0, 0.5])).norm() < 1e-12);
        assert!((rep.objective - 1.0).abs() < 1e-12);
        assert!((rep.objective_volume - std::f64::consts::PI).abs() < 1e-12);
        // ball of radius 1 around (1, 0.5): tightest face is x1 <= 3 at distance 2
        assert!((rep.margin + 1.0).abs() < 1e-12);
        assert_eq!(rep.diagnostics.step2, Step2::Passed);
    }

    /// Unit-box reference region, operational region `[-3, 2.2] x [-3, 4]`.
    fn corner_problem() -> OrsopProblem {
        let r = axis_box(&[0.0, 0.0], &[1.0, 1.0], RegionKind::ReferenceFeasible).unwrap();
        let o = axis_box(&[-3.0, -3.0], &[2.2, 4.0], RegionKind::Operational).unwrap();
        OrsopProblem::new(r, o, v(&[2.0, 1.8]), SpdMatrix::identity(2)).unwrap()
    }

    #[test]
    fn newton_step_when_projection_is_unsafe() {
        let prob = corner_problem();
        // projection (1,1) has radius sqrt(1.64) ~ 1.28 but x1 = 2.2 is only 1.2 away
        assert!(!check_nonlinear(&v(&[1.0, 1.0]), &prob, 0.0).unwrap().feasible);
        let rep = solve(&prob, &SolveOptions::default());
        assert_eq!(rep.status, SolveStatus::NewtonNumeric);
        assert_eq!(rep.diagnostics.step2, Step2::Failed);
        let x = rep.reference.unwrap();
        assert!(prob.ref_region().contains(&x, DEFAULT_TOL).unwrap().feasible);
        assert!(rep.margin <= DEFAULT_TOL);
        // (1.8 - c2)² <= 0.84 - 0.4 c1 on the x1 face, optimum at (0.5, 1), objective 2.89
        assert!((&x - v(&[0.5, 1.0])).norm() < 1e-3);
        assert!(rep.objective >= 2.89 - 1e-9 && rep.objective < 2.89 + 1e-4);
    }

    #[test]
    fn kkt_only_fails_where_newton_is_needed() {
        let opts = SolveOptions { method: Method::KktOnly, ..Default::default() };
        let rep = solve(&corner_problem(), &opts);
        assert_eq!(rep.status, SolveStatus::Failure);
        assert!(rep.objective.is_nan());
    }

    #[test]
    fn unreachable_safety_fails() {
        // with x1 <= 2.2 and x2 <= 2.2 no reference in the unit box keeps (2, 1.8) safe
        let prob = problem(2.2, &[2.0, 1.8], SpdMatrix::identity(2));
        let rep = solve(&prob, &SolveOptions::default());
        assert_eq!(rep.status, SolveStatus::Failure);
    }

    #[test]
    fn newton_only_matches_analytic() {
        let prob = problem(3.0, &[2.0, 0.5], SpdMatrix::identity(2));
        let opts = SolveOptions { method: Method::NewtonOnly, ..Default::default() };
        let rep = solve(&prob, &opts);
        assert_eq!(rep.status, SolveStatus::NewtonNumeric);
        assert!((rep.reference.unwrap() - v(&[1.0, 0.5])).norm() < 1e-4);
        assert!((rep.objective - 1.0).abs() < 1e-5);
    }

    #[test]
    fn impossible_region_fails() {
        // reference region far from xp inside a tight operational box
        let r = axis_box(&[5.0, 5.0], &[6.0, 6.0], RegionKind::ReferenceFeasible).unwrap();
        let o = axis_box(&[-1.0, -1.0], &[1.0, 1.0], RegionKind::Operational).unwrap();
        let prob = OrsopProblem::new(r, o, v(&[0.0, 0.0]), SpdMatrix::identity(2)).unwrap();
        let rep = solve(&prob, &SolveOptions::default());
        assert_eq!(rep.status, SolveStatus::Failure);
        assert!(rep.diagnostics.failure_reason.is_some());
    }

    #[test]
    fn whitening_is_transparent_for_spherical_p() {
        let shaped = |p: OrsopProblem| {
            OrsopProblem::new(p.ref_region, p.op_region, p.xp, SpdMatrix::scaled_identity(2, 2.5)).unwrap()
        };
        for prob in [shaped(problem(3.0, &[2.0, 0.5], SpdMatrix::identity(2))), shaped(corner_problem())] {
            let plain = solve(&prob, &SolveOptions::default());
            let forced = solve(&prob, &SolveOptions { force_whitening: true, ..Default::default() });
            assert_eq!(plain.status, forced.status);
            assert!(forced.diagnostics.whitened && !plain.diagnostics.whitened);
            let d = (plain.reference.unwrap() - forced.reference.unwrap()).norm();
            assert!(d < 1e-9, "difference {d}");
        }
    }

    #[test]
    fn general_p_is_certified() {
        let p = SpdMatrix::new(DMatrix::from_row_slice(2, 2, &[3.0, 1.0, 1.0, 1.0])).unwrap();
        let r = axis_box(&[-0.5, -0.5], &[0.5, 0.5], RegionKind::ReferenceFeasible).unwrap();
        let o = axis_box(&[-3.0, -4.0], &[3.0, 4.0], RegionKind::Operational).unwrap();
        let prob = OrsopProblem::new(r, o, v(&[1.5, 1.0]), p).unwrap();
        let opts = SolveOptions { origin: Some(v(&[0.0, 0.0])), ..Default::default() };
        let rep = solve(&prob, &opts);
        assert!(rep.status.is_success(), "{:?}", rep.diagnostics);
        assert!(rep.diagnostics.whitened);
        let cert = certify(&prob, rep.reference.as_ref().unwrap(), DEFAULT_TOL).unwrap();
        assert!(cert.holds());
        assert!((cert.margin() - rep.margin).abs() < 1e-15);
    }

    #[test]
    fn interior_start_is_strictly_feasible() {
        let prob = corner_problem();
        let frame = Frame {
            whiten: None,
            ref_region: prob.ref_region.clone(),
            op_region: prob.op_region.clone(),
            xp: prob.xp.clone(),
        };
        let mut work = 0;
        let mut diag = Diagnostics::default();
        let x = interior_start(&frame, None, &mut work, &mut diag).unwrap().unwrap();
        let bp = BarrierProblem::new(prob.xp.clone(), &prob.ref_region, &prob.op_region, 1e6).unwrap();
        assert!(bp.strictly_feasible(&x));
        assert!(work > 0);
    }
}

//! Log-barrier reformulation of the reference re-optimization problem and a
//! damped Newton solver with analytic derivatives.
//!
//! With `f(x) = ‖x - xp‖²`, reference constraints `g_j(x) = ω_j·x + b_j` and
//! operational terms `q_k(x) = ‖M(x - xp)‖² - (ν_k·x + β_k)²`, the barrier
//! function is
//!
//! `F(x) = f(x) - (1/λ) Σ ln(-g_j(x)) - (1/λ) Σ ln(-q_k(x))`.
//!
//! `M` defaults to the identity. The domain additionally requires
//! `ν_k·x + β_k < 0`: `q_k` is blind to the sign of the face value, and the
//! extra condition keeps iterates on the side of the face where `xp` lies.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};
use crate::geometry::{HalfSpace, Polytope, StateVector};

#[derive(Debug, Clone, PartialEq)]
pub struct BarrierProblem {
    xp: StateVector,
    g_faces: Vec<HalfSpace>,
    q_faces: Vec<HalfSpace>,
    lambda: f64,
    /// `MᵀM` used inside the q-terms.
    q_gram: DMatrix<f64>,
    /// `MᵀM` used inside f; identity unless the metric also weights f.
    f_gram: DMatrix<f64>,
}

impl BarrierProblem {
    pub fn new(xp: StateVector, ref_region: &Polytope, op_region: &Polytope, lambda: f64) -> Result<Self> {
        check_dim(ref_region.dim(), xp.len())?;
        check_dim(op_region.dim(), xp.len())?;
        Self::from_faces(xp, ref_region.halfspaces().to_vec(), op_region.halfspaces().to_vec(), lambda)
    }

    /// Any face list may be empty.
    pub fn from_faces(
        xp: StateVector,
        g_faces: Vec<HalfSpace>,
        q_faces: Vec<HalfSpace>,
        lambda: f64,
    ) -> Result<Self> {
        let n = xp.len();
        for h in g_faces.iter().chain(&q_faces) {
            check_dim(n, h.dim())?;
        }
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::Input(format!("barrier weight must be positive, got {lambda}")));
        }
        let eye = DMatrix::identity(n, n);
        Ok(Self { xp, g_faces, q_faces, lambda, q_gram: eye.clone(), f_gram: eye })
    }

    /// Uses `‖M(x - xp)‖²` in the q-terms, and in f as well when
    /// `weight_objective` is set.
    pub fn with_metric(mut self, m: &DMatrix<f64>, weight_objective: bool) -> Result<Self> {
        let n = self.xp.len();
        check_dim(n, m.nrows())?;
        check_dim(n, m.ncols())?;
        if m.determinant().abs() < f64::MIN_POSITIVE {
            return Err(Error::Input("metric is singular".into()));
        }
        let gram = m.transpose() * m;
        let gram = (&gram + gram.transpose()) * 0.5;
        if weight_objective {
            self.f_gram = gram.clone();
        }
        self.q_gram = gram;
        Ok(self)
    }

    pub fn xp(&self) -> &StateVector {
        &self.xp
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn dim(&self) -> usize {
        self.xp.len()
    }

    pub fn constraint_count(&self) -> usize {
        self.g_faces.len() + self.q_faces.len()
    }

    pub fn objective(&self, x: &StateVector) -> f64 {
        let d = x - &self.xp;
        d.dot(&(&self.f_gram * &d))
    }

    /// `q_k(x)` for every operational face.
    pub fn q_values(&self, x: &StateVector) -> Vec<f64> {
        let d = x - &self.xp;
        let r2 = d.dot(&(&self.q_gram * &d));
        self.q_faces
            .iter()
            .map(|h| {
                let s = h.signed_distance(x);
                r2 - s * s
            })
            .collect()
    }

    /// Largest constraint value over g, q and the face sides; the point is in
    /// the barrier domain iff this is negative.
    pub fn max_constraint(&self, x: &StateVector) -> f64 {
        let g = self.g_faces.iter().map(|h| h.signed_distance(x));
        let s = self.q_faces.iter().map(|h| h.signed_distance(x));
        g.chain(s)
            .chain(self.q_values(x))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn strictly_feasible(&self, x: &StateVector) -> bool {
        x.len() == self.dim() && self.max_constraint(x) < 0.0
    }

    fn domain_check(&self, x: &StateVector) -> Result<()> {
        check_dim(self.dim(), x.len())?;
        let value = self.max_constraint(x);
        if value < 0.0 {
            Ok(())
        } else {
            Err(Error::Domain { value })
        }
    }

    pub fn value(&self, x: &StateVector) -> Result<f64> {
        self.domain_check(x)?;
        let inv = 1.0 / self.lambda;
        let mut v = self.objective(x);
        for h in &self.g_faces {
            v -= inv * (-h.signed_distance(x)).ln();
        }
        for q in self.q_values(x) {
            v -= inv * (-q).ln();
        }
        Ok(v)
    }

    pub fn gradient(&self, x: &StateVector) -> Result<DVector<f64>> {
        self.domain_check(x)?;
        let inv = 1.0 / self.lambda;
        let d = x - &self.xp;
        let mut grad = &self.f_gram * &d * 2.0;
        for h in &self.g_faces {
            let c = h.signed_distance(x);
            grad.axpy(-inv / c, h.normal(), 1.0);
        }
        let gd = &self.q_gram * &d * 2.0;
        let r2 = d.dot(&(&self.q_gram * &d));
        for h in &self.q_faces {
            let s = h.signed_distance(x);
            let c = r2 - s * s;
            let dq = &gd - h.normal() * (2.0 * s);
            grad.axpy(-inv / c, &dq, 1.0);
        }
        Ok(grad)
    }

    pub fn hessian(&self, x: &StateVector) -> Result<DMatrix<f64>> {
        self.eval(x).map(|e| e.hessian)
    }

    /// Value, gradient and Hessian in one pass.
    pub fn eval(&self, x: &StateVector) -> Result<BarrierEval> {
        self.domain_check(x)?;
        let n = self.dim();
        let inv = 1.0 / self.lambda;
        let d = x - &self.xp;
        let fd = &self.f_gram * &d;
        let mut value = d.dot(&fd);
        let mut gradient = fd * 2.0;
        let mut hessian = &self.f_gram * 2.0;
        for h in &self.g_faces {
            let c = h.signed_distance(x);
            value -= inv * (-c).ln();
            gradient.axpy(-inv / c, h.normal(), 1.0);
            hessian.ger(inv / (c * c), h.normal(), h.normal(), 1.0);
        }
        let qd = &self.q_gram * &d;
        let r2 = d.dot(&qd);
        let gd = qd * 2.0;
        let q_hess_base = &self.q_gram * 2.0;
        for h in &self.q_faces {
            let s = h.signed_distance(x);
            let c = r2 - s * s;
            value -= inv * (-c).ln();
            let dq = &gd - h.normal() * (2.0 * s);
            gradient.axpy(-inv / c, &dq, 1.0);
            // ∇²q = 2MᵀM - 2ννᵀ
            hessian += &q_hess_base * (-inv / c);
            hessian.ger(2.0 * inv / c, h.normal(), h.normal(), 1.0);
            hessian.ger(inv / (c * c), &dq, &dq, 1.0);
        }
        let hessian = (&hessian + hessian.transpose()) * 0.5;
        debug_assert_eq!(hessian.nrows(), n);
        Ok(BarrierEval { value, gradient, hessian })
    }

    /// Flop estimate of one [`BarrierProblem::eval`].
    pub fn eval_work(&self) -> u64 {
        let n = self.dim() as u64;
        (self.constraint_count() as u64 + 2) * (4 * n * n + 6 * n)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BarrierEval {
    pub value: f64,
    pub gradient: DVector<f64>,
    pub hessian: DMatrix<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonConfig {
    /// Initial (or fixed) step size.
    pub eta: f64,
    /// Stop when an accepted step is shorter than this.
    pub epsilon: f64,
    pub n_max: usize,
    /// Barrier weight λ.
    pub lambda: f64,
    /// Halve the step until it stays in the domain and does not increase F.
    /// When off, every step uses exactly `eta`.
    pub backtracking: bool,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        Self { eta: 1.0, epsilon: 1e-9, n_max: 200, lambda: 1e6, backtracking: true }
    }
}

impl NewtonConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.eta > 0.0 && self.epsilon > 0.0 && self.n_max > 0 && self.lambda > 0.0;
        if ok && self.eta.is_finite() && self.lambda.is_finite() {
            Ok(())
        } else {
            Err(Error::Input(format!("invalid Newton configuration {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NewtonStatus {
    Converged,
    Failure,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonOutcome {
    pub status: NewtonStatus,
    pub point: Option<StateVector>,
    pub iterations: usize,
    /// Barrier value at the last iterate.
    pub final_objective: f64,
    /// Barrier value at the start and after every accepted step.
    pub trace: Vec<f64>,
    /// Number of iterations that fell back to a gradient step.
    pub gradient_steps: usize,
    pub work: u64,
}

const MAX_HALVINGS: usize = 60;

/// Damped Newton iteration `x ← x - η [∇²F]⁻¹ ∇F` from a strictly feasible
/// start.
pub fn newton_solve(p: &BarrierProblem, start: &StateVector, cfg: &NewtonConfig) -> Result<NewtonOutcome> {
    cfg.validate()?;
    check_dim(p.dim(), start.len())?;
    if !p.strictly_feasible(start) {
        return Err(Error::Input("Newton start point is not strictly feasible".into()));
    }
    let n = p.dim() as u64;
    let eval_work = p.eval_work();
    let solve_work = n * n * n / 3 + 2 * n * n + 1;
    let mut x = start.clone();
    let mut current = p.eval(&x)?;
    let mut trace = vec![current.value];
    let mut work = eval_work;
    let mut gradient_steps = 0;
    let failure = |iterations, value, trace, gradient_steps, work| NewtonOutcome {
        status: NewtonStatus::Failure,
        point: None,
        iterations,
        final_objective: value,
        trace,
        gradient_steps,
        work,
    };

    for it in 1..=cfg.n_max {
        work += solve_work;
        let dir = match current.hessian.clone().cholesky() {
            Some(ch) => -ch.solve(&current.gradient),
            None => {
                gradient_steps += 1;
                -current.gradient.clone()
            }
        };
        if dir.iter().any(|v| !v.is_finite()) {
            return Ok(failure(it, current.value, trace, gradient_steps, work));
        }

        let mut eta = cfg.eta;
        let mut accepted = None;
        let halvings = if cfg.backtracking { MAX_HALVINGS } else { 1 };
        for _ in 0..halvings {
            let cand = &x + &dir * eta;
            work += p.eval_work() / (n + 1);
            if p.strictly_feasible(&cand) {
                let next = p.eval(&cand)?;
                work += eval_work;
                if !cfg.backtracking || next.value <= current.value {
                    accepted = Some((cand, next));
                    break;
                }
            }
            eta *= 0.5;
        }

        let Some((next_x, next)) = accepted else {
            // no admissible step: stationary when the Newton decrement is at roundoff
            let decrement = -current.gradient.dot(&dir) * 0.5;
            if cfg.backtracking && decrement.abs() <= 1e-14 * current.value.abs().max(1.0) {
                return Ok(NewtonOutcome {
                    status: NewtonStatus::Converged,
                    final_objective: current.value,
                    point: Some(x),
                    iterations: it,
                    trace,
                    gradient_steps,
                    work,
                });
            }
            return Ok(failure(it, current.value, trace, gradient_steps, work));
        };

        let step = (&next_x - &x).norm();
        x = next_x;
        current = next;
        trace.push(current.value);
        if step < cfg.epsilon && current.value.is_finite() {
            return Ok(NewtonOutcome {
                status: NewtonStatus::Converged,
                final_objective: current.value,
                point: Some(x),
                iterations: it,
                trace,
                gradient_steps,
                work,
            });
        }
    }
    Ok(failure(cfg.n_max, current.value, trace, gradient_steps, work))
}

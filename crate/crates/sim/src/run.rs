//! One closed-loop run with a constraint change and a recovery strategy.
//!
//! The plant tracks the original reference until `t_change`, when the
//! operational region switches to `op_after`. The strategy is solved on the
//! frozen state at that sample, and its result takes effect
//! `ceil(elapsed / dt)` samples later, so a slow solve is paid for inside the
//! simulation.

use std::fmt;
use std::str::FromStr;
use std::time::Duration;

use nalgebra::DMatrix;

use refshift_core::geometry::{StateVector, DEFAULT_TOL};
use refshift_core::lyapunov::{lyap_value, SpdMatrix};
use refshift_core::orsop::{solve, OrsopProblem, SolveOptions, SolveReport};

use crate::error::{Result, SimError};
use crate::integrate::{step, EventKind, Trajectory};
use crate::ocr::ocr_surrogate;
use crate::scenario::Scenario;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Strategy {
    Orsop,
    /// Riccati-ladder stand-in for online controller redesign.
    OcrSurrogate,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Orsop => "orsop",
            Strategy::OcrSurrogate => "ocr-surrogate",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim() {
            "orsop" => Ok(Strategy::Orsop),
            "ocr" | "ocr-surrogate" => Ok(Strategy::OcrSurrogate),
            other => Err(format!("unknown method {other:?} (expected orsop or ocr)")),
        }
    }
}

/// Which duration drives latency and deadlines.
///
/// `Work` converts the solvers' deterministic flop estimate at one
/// nanosecond per unit, so runs are reproducible bit for bit. `Wall` uses
/// measured time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Clock {
    #[default]
    Work,
    Wall,
}

impl Clock {
    pub fn elapsed(self, report: &SolveReport) -> Duration {
        match self {
            Clock::Work => Duration::from_nanos(report.work),
            Clock::Wall => report.elapsed,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Clock::Work => "work",
            Clock::Wall => "wall",
        }
    }
}

impl FromStr for Clock {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "work" => Ok(Clock::Work),
            "wall" => Ok(Clock::Wall),
            other => Err(format!("unknown clock {other:?} (expected work or wall)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunConfig {
    pub solve: SolveOptions,
    pub deadline: Option<Duration>,
    pub clock: Clock,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub strategy: Strategy,
    pub trajectory: Trajectory,
    pub report: SolveReport,
    /// Solve time according to the configured clock.
    pub elapsed: Duration,
    pub change_index: usize,
    pub latency_steps: usize,
    /// Sample at which the new reference (or gain) took effect.
    pub switch_index: Option<usize>,
    pub violations: usize,
    /// Violations at or after `change_index + latency_steps`.
    pub post_switch_violations: usize,
    pub deadline_missed: bool,
    /// Whether the new Lyapunov function was nonincreasing after the switch
    /// (up to `1e-6` of its level); `None` without a switch.
    pub lyapunov_monotone: Option<bool>,
}

impl RunOutcome {
    pub fn success(&self) -> bool {
        self.report.status.is_success() && !self.deadline_missed && self.post_switch_violations == 0
    }
}

/// State at the first sample at or after `t_change`, integrated exactly as
/// [`run_scenario`] does.
pub fn state_at_change(s: &Scenario) -> StateVector {
    let ci = s.change_index().min(s.steps());
    let mut x = s.x0.clone();
    for _ in 0..ci {
        x = step(s.plant.a_cl(), &s.x_ref0, &x, s.sim.dt, s.sim.integrator);
    }
    x
}

/// The reference re-optimization problem posed at injection.
pub fn injection_problem(s: &Scenario, xp: StateVector) -> Result<OrsopProblem> {
    OrsopProblem::new(s.ref_region.clone(), s.op_after.clone(), xp, s.shape.clone()).map_err(|e| match e {
        refshift_core::Error::Input(msg) => SimError::Schema(format!("at t_change: {msg}")),
        e => SimError::Core(e),
    })
}

struct Applied {
    reference: StateVector,
    a_cl: DMatrix<f64>,
    shape: SpdMatrix,
}

pub fn run_scenario(s: &Scenario, strategy: Strategy, cfg: &RunConfig) -> Result<RunOutcome> {
    let steps = s.steps();
    let ci = s.change_index().min(steps);
    let dt = s.sim.dt;
    let mut traj = Trajectory::default();
    let mut x = s.x0.clone();
    let mut reference = s.x_ref0.clone();
    let mut a_cl = s.plant.a_cl().clone();
    traj.push(0.0, x.clone(), reference.clone());
    for i in 1..=ci {
        x = step(&a_cl, &reference, &x, dt, s.sim.integrator);
        traj.push(i as f64 * dt, x.clone(), reference.clone());
    }
    let xp = x.clone();

    let (report, applied) = match strategy {
        Strategy::Orsop => {
            let prob = injection_problem(s, xp)?;
            let mut opts = cfg.solve.clone();
            if opts.origin.is_none() {
                opts.origin = Some(s.x_ref0.clone());
            }
            let rep = solve(&prob, &opts);
            let applied = rep.reference.clone().map(|r| Applied {
                reference: r,
                a_cl: s.plant.a_cl().clone(),
                shape: s.shape.clone(),
            });
            (rep, applied)
        }
        Strategy::OcrSurrogate => {
            // same Assumption-4 check as the reference solve
            injection_problem(s, xp.clone())?;
            let o = ocr_surrogate(&s.plant, &s.shape, &s.op_after, &xp, &s.x_ref0);
            let applied = match o.design {
                Some((k, shape)) => Some(Applied {
                    reference: s.x_ref0.clone(),
                    a_cl: s.plant.with_gain(k)?.a_cl().clone(),
                    shape,
                }),
                None => None,
            };
            (o.report, applied)
        }
    };
    let elapsed = cfg.clock.elapsed(&report);
    let latency = (elapsed.as_secs_f64() / dt).ceil() as usize;
    let switch_at = ci + latency;
    let deadline_missed = cfg.deadline.is_some_and(|d| elapsed > d);

    let mut applied = applied;
    let mut switch_index = None;
    let mut new_shape = None;
    let mut take = |i: usize, reference: &mut StateVector, a_cl: &mut DMatrix<f64>, switch_index: &mut Option<usize>| {
        if i == switch_at {
            if let Some(a) = applied.take() {
                *reference = a.reference;
                *a_cl = a.a_cl;
                new_shape = Some(a.shape);
                *switch_index = Some(i);
            }
        }
    };
    take(ci, &mut reference, &mut a_cl, &mut switch_index);
    if switch_index.is_some() {
        traj.reference_at[ci] = reference.clone();
    }
    for i in ci + 1..=steps {
        x = step(&a_cl, &reference, &x, dt, s.sim.integrator);
        take(i, &mut reference, &mut a_cl, &mut switch_index);
        traj.push(i as f64 * dt, x.clone(), reference.clone());
    }

    if ci <= steps {
        traj.mark(ci, EventKind::ConstraintChange);
    }
    if let Some(i) = switch_index {
        traj.mark(i, EventKind::ReferenceSwitch);
    }
    let mut violations = 0;
    let mut post_switch_violations = 0;
    for i in 0..traj.len() {
        let region = if i < ci { &s.op_before } else { &s.op_after };
        if !region.contains(&traj.states[i], DEFAULT_TOL)?.feasible {
            traj.mark(i, EventKind::Violation);
            violations += 1;
            if i >= switch_at {
                post_switch_violations += 1;
            }
        }
    }
    traj.events.sort_by_key(|e| e.index);

    let lyapunov_monotone = match (switch_index, &new_shape) {
        (Some(i0), Some(shape)) => {
            let r = &traj.reference_at[i0];
            let v: Vec<f64> = traj.states[i0..].iter().map(|x| lyap_value(r, shape, x)).collect();
            let slack = 1e-6 * v[0].max(f64::MIN_POSITIVE);
            Some(v.windows(2).all(|w| w[1] <= w[0] + slack))
        }
        _ => None,
    };

    Ok(RunOutcome {
        strategy,
        trajectory: traj,
        report,
        elapsed,
        change_index: ci,
        latency_steps: latency,
        switch_index,
        violations,
        post_switch_violations,
        deadline_missed,
        lyapunov_monotone,
    })
}

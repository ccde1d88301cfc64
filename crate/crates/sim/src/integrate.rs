//! Fixed-step integration of the closed loop `ẋ = A_cl (x - x_ref)` and the
//! sampled trajectory it produces.

use std::fmt::Write as _;
use std::io;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use refshift_core::geometry::StateVector;
use refshift_core::lyapunov::PlantModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Integrator {
    #[default]
    Rk4,
    Euler,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    ConstraintChange,
    ReferenceSwitch,
    Violation,
}

impl EventKind {
    pub fn token(self) -> &'static str {
        match self {
            EventKind::ConstraintChange => "change",
            EventKind::ReferenceSwitch => "switch",
            EventKind::Violation => "violation",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    /// Sample index the event is attached to.
    pub index: usize,
    pub time: f64,
    pub kind: EventKind,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<StateVector>,
    pub reference_at: Vec<StateVector>,
    pub events: Vec<Event>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub(crate) fn push(&mut self, t: f64, x: StateVector, r: StateVector) {
        self.times.push(t);
        self.states.push(x);
        self.reference_at.push(r);
    }

    pub(crate) fn mark(&mut self, index: usize, kind: EventKind) {
        self.events.push(Event { index, time: self.times[index], kind });
    }

    pub fn count(&self, kind: EventKind) -> usize {
        self.events.iter().filter(|e| e.kind == kind).count()
    }

    /// `t,x1..xn,ref1..refn,event`. Several events on one sample are joined
    /// with `;`, no event is `-`.
    pub fn write_csv<W: io::Write>(&self, mut w: W) -> io::Result<()> {
        let n = self.states.first().map_or(0, |x| x.len());
        let mut line = String::from("t");
        for i in 1..=n {
            write!(line, ",x{i}").unwrap();
        }
        for i in 1..=n {
            write!(line, ",ref{i}").unwrap();
        }
        writeln!(w, "{line},event")?;
        let mut tokens: Vec<Vec<&str>> = vec![Vec::new(); self.len()];
        for e in &self.events {
            tokens[e.index].push(e.kind.token());
        }
        for (i, t) in self.times.iter().enumerate() {
            line.clear();
            write!(line, "{t}").unwrap();
            for v in self.states[i].iter().chain(self.reference_at[i].iter()) {
                write!(line, ",{v}").unwrap();
            }
            let ev = if tokens[i].is_empty() { "-".to_string() } else { tokens[i].join(";") };
            writeln!(w, "{line},{ev}")?;
        }
        Ok(())
    }
}

/// One step of `ẋ = A_cl (x - x_ref)`.
pub fn step(a_cl: &DMatrix<f64>, x_ref: &StateVector, x: &StateVector, dt: f64, method: Integrator) -> StateVector {
    let f = |y: &StateVector| a_cl * (y - x_ref);
    match method {
        Integrator::Euler => x + f(x) * dt,
        Integrator::Rk4 => {
            let k1 = f(x);
            let k2 = f(&(x + &k1 * (dt / 2.0)));
            let k3 = f(&(x + &k2 * (dt / 2.0)));
            let k4 = f(&(x + &k3 * dt));
            x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0)
        }
    }
}

/// Integrates `steps` steps from `x_start` at time 0; the result has
/// `steps + 1` samples.
pub fn integrate(
    plant: &PlantModel,
    x_ref: &StateVector,
    x_start: &StateVector,
    dt: f64,
    steps: usize,
    method: Integrator,
) -> Trajectory {
    assert!(dt > 0.0, "dt must be positive");
    let mut traj = Trajectory::default();
    let mut x = x_start.clone();
    traj.push(0.0, x.clone(), x_ref.clone());
    for i in 1..=steps {
        x = step(plant.a_cl(), x_ref, &x, dt, method);
        traj.push(i as f64 * dt, x.clone(), x_ref.clone());
    }
    traj
}

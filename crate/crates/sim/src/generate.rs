//! Seeded random scenarios.
//!
//! Each scenario draws a random plant, places the closed-loop poles at
//! random negative reals (Ackermann's formula on a random input direction),
//! takes `Q = I`, puts the operational region as a box around the origin and
//! a smaller reference box inside it, starts the state on a Lyapunov level
//! that fits the box, and shrinks every operational face by a factor from
//! `shrink_range` at the change time. Scenario `i` only depends on
//! `(seed, i)`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use refshift_core::geometry::{axis_box, HalfSpace, Polytope, RegionKind, StateVector};
use refshift_core::lyapunov::{max_real_eigenvalue, solve_lyapunov, PlantModel, SpdMatrix};

use crate::error::{Result, SimError};
use crate::integrate::Integrator;
use crate::run::state_at_change;
use crate::scenario::{Scenario, ShapeSource, SimSpec};

pub const MAX_ATTEMPTS: usize = 100;

const POLE_RANGE: (f64, f64) = (-3.0, -0.5);
const DT: f64 = 2e-3;
const HORIZON: f64 = 8.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenSpec {
    pub n: usize,
    pub m: usize,
    pub count: usize,
    pub seed: u64,
    #[serde(default = "default_shrink")]
    pub shrink_range: (f64, f64),
}

fn default_shrink() -> (f64, f64) {
    (0.4, 0.9)
}

impl GenSpec {
    pub fn new(n: usize, m: usize, count: usize, seed: u64) -> Self {
        Self { n, m, count, seed, shrink_range: default_shrink() }
    }

    fn validate(&self) -> Result<()> {
        if !(2..=10).contains(&self.n) {
            return Err(SimError::Schema(format!("generator needs 2 <= n <= 10, got {}", self.n)));
        }
        if !(1..=self.n).contains(&self.m) {
            return Err(SimError::Schema(format!("generator needs 1 <= m <= n, got {}", self.m)));
        }
        let (lo, hi) = self.shrink_range;
        if !(lo > 0.0 && lo <= hi && hi <= 1.0) {
            return Err(SimError::Schema(format!("shrink_range must satisfy 0 < lo <= hi <= 1, got ({lo}, {hi})")));
        }
        Ok(())
    }
}

pub fn generate_scenarios(spec: &GenSpec) -> Result<Vec<Scenario>> {
    spec.validate()?;
    (0..spec.count).map(|i| generate_one(spec, i)).collect()
}

/// Concatenates the suites of several specs. With more than one spec the ids
/// get an `n{n}m{m}-` prefix so they stay unique.
pub fn generate_suite(specs: &[GenSpec]) -> Result<Vec<Scenario>> {
    let mut out = Vec::new();
    for spec in specs {
        let mut part = generate_scenarios(spec)?;
        if specs.len() > 1 {
            for s in &mut part {
                s.id = format!("n{}m{}-{}", spec.n, spec.m, s.id);
            }
        }
        out.extend(part);
    }
    Ok(out)
}

/// Scenario `index` of the suite described by `spec`.
pub fn generate_one(spec: &GenSpec, index: usize) -> Result<Scenario> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(index as u64);
    let mut reason = String::new();
    for _ in 0..MAX_ATTEMPTS {
        match draw(&mut rng, spec, index) {
            Ok(s) => return Ok(s),
            Err(r) => reason = r,
        }
    }
    Err(SimError::Generator { attempts: MAX_ATTEMPTS, reason })
}

fn normal_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.sample::<f64, _>(StandardNormal) * scale)
}

/// Row gain `k` with `eig(A - b k) = poles`, by Ackermann's formula.
pub fn ackermann(a: &DMatrix<f64>, b: &DVector<f64>, poles: &[f64]) -> Option<DVector<f64>> {
    let n = a.nrows();
    let mut ctrb = DMatrix::zeros(n, n);
    let mut col = b.clone();
    for j in 0..n {
        ctrb.set_column(j, &col);
        col = a * col;
    }
    let sv = ctrb.singular_values();
    if sv.min() <= 1e-10 * sv.max() {
        return None;
    }
    let mut e = DVector::zeros(n);
    e[n - 1] = 1.0;
    let y = ctrb.transpose().lu().solve(&e)?;
    let mut phi = DMatrix::<f64>::identity(n, n);
    for &p in poles {
        phi = &phi * (a - DMatrix::<f64>::identity(n, n) * p);
    }
    Some(phi.transpose() * y)
}

fn draw(rng: &mut ChaCha8Rng, spec: &GenSpec, index: usize) -> std::result::Result<Scenario, String> {
    let (n, m) = (spec.n, spec.m);
    let a = normal_matrix(rng, n, n, 1.0 / (n as f64).sqrt());
    let b = normal_matrix(rng, n, m, 1.0);
    let mut w = DVector::from_fn(m, |_, _| rng.sample::<f64, _>(StandardNormal));
    w /= w.norm();
    let poles: Vec<f64> = (0..n).map(|_| rng.random_range(POLE_RANGE.0..POLE_RANGE.1)).collect();
    let k_row = ackermann(&a, &(&b * &w), &poles).ok_or("uncontrollable input direction")?;
    let k = &w * k_row.transpose();
    let plant = PlantModel::new(a, b, k).map_err(|e| e.to_string())?;
    // placement can lose accuracy on badly conditioned draws
    if max_real_eigenvalue(plant.a_cl()) > 0.5 * POLE_RANGE.1 {
        return Err("pole placement inaccurate".into());
    }
    let q = SpdMatrix::identity(n);
    let shape = solve_lyapunov(plant.a_cl(), &q).map_err(|e| e.to_string())?;
    if shape.condition() > 1e8 {
        return Err("Lyapunov matrix too ill-conditioned".into());
    }

    let h: Vec<f64> = (0..n).map(|_| rng.random_range(2.0..4.0)).collect();
    let lo: Vec<f64> = h.iter().map(|v| -v).collect();
    let op_before = axis_box(&lo, &h, RegionKind::Operational).map_err(|e| e.to_string())?;

    let mut r_lo = vec![0.0; n];
    let mut r_hi = vec![0.0; n];
    for i in 0..n {
        let c = rng.random_range(-0.3..0.3) * h[i];
        let half = rng.random_range(0.05..0.2) * h[i];
        r_lo[i] = c - half;
        r_hi[i] = c + half;
    }
    let ref_region = axis_box(&r_lo, &r_hi, RegionKind::ReferenceFeasible).map_err(|e| e.to_string())?;
    let x_ref0 = StateVector::from_fn(n, |i, _| rng.random_range(r_lo[i]..r_hi[i]));

    let max_level = op_before
        .halfspaces()
        .iter()
        .map(|f| {
            let s = f.signed_distance(&x_ref0);
            s * s / shape.inv_quad(f.normal())
        })
        .fold(f64::INFINITY, f64::min);
    let rho = rng.random_range(0.5..0.95);
    let mut d = StateVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
    d /= d.norm();
    let x0 = &x_ref0 + &d * (rho * max_level / shape.quad(&d)).sqrt();

    let t_change = (rng.random_range(0.05..0.6) / DT).round() * DT;
    let factors: Vec<f64> = (0..op_before.len())
        .map(|_| {
            let (lo, hi) = spec.shrink_range;
            if lo == hi {
                lo
            } else {
                rng.random_range(lo..hi)
            }
        })
        .collect();
    let shrunk: Vec<HalfSpace> = op_before
        .halfspaces()
        .iter()
        .zip(&factors)
        .map(|(f, s)| HalfSpace::normalize(f.normal().clone(), f.offset() * s))
        .collect::<refshift_core::Result<_>>()
        .map_err(|e| e.to_string())?;
    let op_after = Polytope::new(shrunk, RegionKind::Operational).map_err(|e| e.to_string())?;

    let s = Scenario {
        id: format!("s{index:04}"),
        plant,
        shape,
        shape_source: ShapeSource::FromQ(q),
        x0,
        x_ref0,
        ref_region,
        op_before,
        op_after,
        t_change,
        sim: SimSpec { dt: DT, t_end: t_change + HORIZON, integrator: Integrator::Rk4 },
    };
    s.check_premise().map_err(|e| e.to_string())?;
    let x1 = state_at_change(&s);
    let worst = s.op_after.values(&x1).map_err(|e| e.to_string())?.into_iter().fold(f64::NEG_INFINITY, f64::max);
    if worst >= -1e-3 {
        return Err("state at the change is not inside the new region".into());
    }
    Ok(s)
}

//! Scenario files: a plant, its Lyapunov matrix, the regions before and after
//! the constraint change, and the simulation grid.
//!
//! Files are JSON with row-major matrices. Face normals may be non-unit;
//! they are normalized on load.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use refshift_core::geometry::{Polytope, RegionKind, StateVector, DEFAULT_TOL};
use refshift_core::lyapunov::{solve_lyapunov, Ellipsoid, PlantModel, SpdMatrix};

use crate::error::{Result, SimError};
use crate::integrate::Integrator;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaceSpec {
    pub normal: Vec<f64>,
    pub offset: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimSpec {
    pub dt: f64,
    pub t_end: f64,
    #[serde(default)]
    pub integrator: Integrator,
}

/// On-disk form. Exactly one of `P` and `Q` must be present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub schema: u32,
    pub n: usize,
    pub m: usize,
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<f64>>,
    #[serde(rename = "K")]
    pub k: Vec<Vec<f64>>,
    #[serde(rename = "P", default, skip_serializing_if = "Option::is_none")]
    pub p: Option<Vec<Vec<f64>>>,
    #[serde(rename = "Q", default, skip_serializing_if = "Option::is_none")]
    pub q: Option<Vec<Vec<f64>>>,
    pub x0: Vec<f64>,
    pub x_ref0: Vec<f64>,
    pub ref_region: Vec<FaceSpec>,
    pub op_before: Vec<FaceSpec>,
    pub op_after: Vec<FaceSpec>,
    pub t_change: f64,
    pub sim: SimSpec,
}

/// Where the Lyapunov matrix came from; kept so a scenario round-trips.
#[derive(Debug, Clone, PartialEq)]
pub enum ShapeSource {
    Given,
    FromQ(SpdMatrix),
}

/// A validated scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub id: String,
    pub plant: PlantModel,
    pub shape: SpdMatrix,
    pub shape_source: ShapeSource,
    pub x0: StateVector,
    pub x_ref0: StateVector,
    pub ref_region: Polytope,
    pub op_before: Polytope,
    pub op_after: Polytope,
    pub t_change: f64,
    pub sim: SimSpec,
}

fn schema<T>(msg: impl Into<String>) -> Result<T> {
    Err(SimError::Schema(msg.into()))
}

fn matrix(name: &str, rows: &[Vec<f64>], nr: usize, nc: usize) -> Result<DMatrix<f64>> {
    if rows.len() != nr || rows.iter().any(|r| r.len() != nc) {
        return schema(format!("{name} must be {nr}x{nc}"));
    }
    Ok(DMatrix::from_fn(nr, nc, |i, j| rows[i][j]))
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn vector(name: &str, v: &[f64], n: usize) -> Result<StateVector> {
    if v.len() != n {
        return schema(format!("{name} must have {n} entries, got {}", v.len()));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return schema(format!("{name} has non-finite entries"));
    }
    Ok(StateVector::from_column_slice(v))
}

fn region(name: &str, faces: &[FaceSpec], n: usize, kind: RegionKind) -> Result<Polytope> {
    if faces.is_empty() {
        return schema(format!("{name} has no faces"));
    }
    if let Some(f) = faces.iter().find(|f| f.normal.len() != n) {
        return schema(format!("{name}: normal of length {} in a {n}-state scenario", f.normal.len()));
    }
    let rows: Vec<(Vec<f64>, f64)> = faces.iter().map(|f| (f.normal.clone(), f.offset)).collect();
    Polytope::from_raw(&rows, kind).map_err(|e| SimError::Schema(format!("{name}: {e}")))
}

fn faces_of(p: &Polytope) -> Vec<FaceSpec> {
    p.halfspaces()
        .iter()
        .map(|h| FaceSpec { normal: h.normal().iter().copied().collect(), offset: h.offset() })
        .collect()
}

impl Scenario {
    pub fn from_file_data(id: impl Into<String>, f: &ScenarioFile) -> Result<Self> {
        if f.schema != SCHEMA_VERSION {
            return schema(format!("unsupported schema {} (expected {SCHEMA_VERSION})", f.schema));
        }
        let (n, m) = (f.n, f.m);
        if n == 0 || m == 0 {
            return schema("n and m must be positive");
        }
        let a = matrix("A", &f.a, n, n)?;
        let b = matrix("B", &f.b, n, m)?;
        let k = matrix("K", &f.k, m, n)?;
        let plant = PlantModel::new(a, b, k)?;
        let (shape, shape_source) = match (&f.p, &f.q) {
            (Some(p), None) => (SpdMatrix::new(matrix("P", p, n, n)?)?, ShapeSource::Given),
            (None, Some(q)) => {
                let q = SpdMatrix::new(matrix("Q", q, n, n)?)?;
                (solve_lyapunov(plant.a_cl(), &q)?, ShapeSource::FromQ(q))
            }
            _ => return schema("exactly one of P and Q must be given"),
        };
        let sim = f.sim;
        if !(sim.dt > 0.0 && sim.dt.is_finite()) {
            return schema("sim.dt must be positive");
        }
        if !(f.t_change >= 0.0 && f.t_change < sim.t_end && sim.t_end.is_finite()) {
            return schema("need 0 <= t_change < t_end");
        }
        let s = Scenario {
            id: id.into(),
            plant,
            shape,
            shape_source,
            x0: vector("x0", &f.x0, n)?,
            x_ref0: vector("x_ref0", &f.x_ref0, n)?,
            ref_region: region("ref_region", &f.ref_region, n, RegionKind::ReferenceFeasible)?,
            op_before: region("op_before", &f.op_before, n, RegionKind::Operational)?,
            op_after: region("op_after", &f.op_after, n, RegionKind::Operational)?,
            t_change: f.t_change,
            sim,
        };
        s.check_premise()?;
        Ok(s)
    }

    /// The design-time premise: the original ellipsoid fits the original
    /// operational region.
    pub fn check_premise(&self) -> Result<()> {
        let e = self.original_ellipsoid()?;
        let rep = e.in_region(&self.op_before, DEFAULT_TOL)?;
        if !rep.feasible {
            return schema(format!(
                "original ellipsoid leaves op_before (face {:?}, slack {})",
                rep.violating_index, rep.worst_violation
            ));
        }
        Ok(())
    }

    pub fn original_ellipsoid(&self) -> Result<Ellipsoid> {
        Ok(Ellipsoid::through(self.x_ref0.clone(), self.shape.clone(), &self.x0)?)
    }

    pub fn n(&self) -> usize {
        self.plant.n()
    }

    /// Number of integration steps up to `t_end`.
    pub fn steps(&self) -> usize {
        (self.sim.t_end / self.sim.dt).round() as usize
    }

    /// First sample index at or after `t_change`.
    pub fn change_index(&self) -> usize {
        let k = self.t_change / self.sim.dt;
        // guard against 0.3/0.1 = 2.9999999999999996
        let r = k.round();
        if (k - r).abs() < 1e-9 {
            r as usize
        } else {
            k.ceil() as usize
        }
    }

    pub fn to_file_data(&self) -> ScenarioFile {
        let (p, q) = match &self.shape_source {
            ShapeSource::Given => (Some(rows_of(self.shape.dense())), None),
            ShapeSource::FromQ(q) => (None, Some(rows_of(q.dense()))),
        };
        ScenarioFile {
            schema: SCHEMA_VERSION,
            n: self.plant.n(),
            m: self.plant.m(),
            a: rows_of(self.plant.a()),
            b: rows_of(self.plant.b()),
            k: rows_of(self.plant.k()),
            p,
            q,
            x0: self.x0.iter().copied().collect(),
            x_ref0: self.x_ref0.iter().copied().collect(),
            ref_region: faces_of(&self.ref_region),
            op_before: faces_of(&self.op_before),
            op_after: faces_of(&self.op_after),
            t_change: self.t_change,
            sim: self.sim,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file_data()).expect("scenario serializes")
    }

    /// Loads a scenario; its id is the file stem.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| SimError::io(path, e))?;
        let data: ScenarioFile =
            serde_json::from_str(&text).map_err(|source| SimError::Json { path: path.into(), source })?;
        let id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        Self::from_file_data(id, &data)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = self.to_json();
        text.push('\n');
        fs::write(path, text).map_err(|e| SimError::io(path, e))
    }
}

/// Every `*.json` file in `dir`, sorted by file name.
pub fn load_dir(dir: &Path) -> Result<Vec<Scenario>> {
    let mut paths: Vec<_> = fs::read_dir(dir)
        .map_err(|e| SimError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    paths.iter().map(|p| Scenario::load(p)).collect()
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn sample_file() -> ScenarioFile {
        let face = |normal: Vec<f64>, offset: f64| FaceSpec { normal, offset };
        ScenarioFile {
            schema: 1,
            n: 2,
            m: 1,
            a: vec![vec![0.0, 1.0], vec![0.0, 0.0]],
            b: vec![vec![0.0], vec![1.0]],
            k: vec![vec![1.0, 2.0]],
            p: None,
            q: Some(vec![vec![1.0, 0.0], vec![0.0, 1.0]]),
            x0: vec![0.5, 0.0],
            x_ref0: vec![0.0, 0.0],
            ref_region: vec![
                face(vec![1.0, 0.0], -0.2),
                face(vec![-1.0, 0.0], -0.2),
                face(vec![0.0, 1.0], -0.2),
                face(vec![0.0, -1.0], -0.2),
            ],
            op_before: vec![
                face(vec![2.0, 0.0], -6.0),
                face(vec![-1.0, 0.0], -3.0),
                face(vec![0.0, 1.0], -3.0),
                face(vec![0.0, -1.0], -3.0),
            ],
            op_after: vec![
                face(vec![1.0, 0.0], -1.0),
                face(vec![-1.0, 0.0], -3.0),
                face(vec![0.0, 1.0], -3.0),
                face(vec![0.0, -1.0], -3.0),
            ],
            t_change: 0.5,
            sim: SimSpec { dt: 0.01, t_end: 5.0, integrator: Integrator::Rk4 },
        }
    }

    #[test]
    fn loads_and_normalizes() {
        let s = Scenario::from_file_data("a", &sample_file()).unwrap();
        let h = &s.op_before.halfspaces()[0];
        assert!((h.normal()[0] - 1.0).abs() < 1e-15);
        assert!((h.offset() + 3.0).abs() < 1e-15);
        // P from Q = I for the companion closed loop
        assert!((s.shape.dense()[(0, 0)] - 1.5).abs() < 1e-10);
        assert_eq!(s.steps(), 500);
        assert_eq!(s.change_index(), 50);
    }

    #[test]
    fn json_round_trip() {
        let s = Scenario::from_file_data("a", &sample_file()).unwrap();
        let text = s.to_json();
        let back: ScenarioFile = serde_json::from_str(&text).unwrap();
        let s2 = Scenario::from_file_data("a", &back).unwrap();
        assert_eq!(s, s2);
        assert_eq!(text, s2.to_json());
    }

    #[test]
    fn rejects_bad_files() {
        let mut f = sample_file();
        f.p = Some(vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert!(matches!(Scenario::from_file_data("x", &f), Err(SimError::Schema(_))));

        let mut f = sample_file();
        f.schema = 2;
        assert!(Scenario::from_file_data("x", &f).is_err());

        let mut f = sample_file();
        f.a.pop();
        assert!(Scenario::from_file_data("x", &f).is_err());

        // unstabilized plant
        let mut f = sample_file();
        f.k = vec![vec![0.0, 0.0]];
        assert!(matches!(Scenario::from_file_data("x", &f), Err(SimError::Core(_))));

        // original ellipsoid pokes through op_before
        let mut f = sample_file();
        f.x0 = vec![2.9, 0.0];
        assert!(matches!(Scenario::from_file_data("x", &f), Err(SimError::Schema(_))));

        let mut f = sample_file();
        f.t_change = 6.0;
        assert!(Scenario::from_file_data("x", &f).is_err());
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let mut v = serde_json::to_value(sample_file()).unwrap();
        v["extra"] = serde_json::json!(1);
        assert!(serde_json::from_value::<ScenarioFile>(v).is_err());
    }

    #[test]
    fn change_index_tolerates_roundoff() {
        let mut f = sample_file();
        f.t_change = 0.3;
        f.sim.dt = 0.1;
        let s = Scenario::from_file_data("a", &f).unwrap();
        assert_eq!(s.change_index(), 3);
        f.t_change = 0.25;
        let s = Scenario::from_file_data("a", &f).unwrap();
        assert_eq!(s.change_index(), 3);
    }
}

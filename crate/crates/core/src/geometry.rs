//! Half-spaces and polytopes in H-representation.
//!
//! A half-space is stored as `normal·x + offset <= 0` with a unit normal, so
//! `normal·x + offset` is the signed Euclidean distance to its boundary.

use nalgebra::DVector;

use crate::error::{check_dim, Error, Result};
use crate::lp;

/// A point in plant-state coordinates.
pub type StateVector = DVector<f64>;

/// Default absolute feasibility tolerance.
pub const DEFAULT_TOL: f64 = 1e-9;

/// `{x : normal·x + offset <= 0}` with `‖normal‖₂ = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct HalfSpace {
    normal: DVector<f64>,
    offset: f64,
}

impl HalfSpace {
    /// Scales `(raw_normal, raw_offset)` so the normal has unit length.
    pub fn normalize(raw_normal: DVector<f64>, raw_offset: f64) -> Result<Self> {
        if raw_normal.is_empty() {
            return Err(Error::Input("half-space normal has no entries".into()));
        }
        if !raw_offset.is_finite() || raw_normal.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("half-space has non-finite entries".into()));
        }
        let norm = raw_normal.norm();
        if norm == 0.0 {
            return Err(Error::ZeroNormal);
        }
        Ok(Self { normal: raw_normal / norm, offset: raw_offset / norm })
    }

    /// Convenience over [`HalfSpace::normalize`] for slice input.
    pub fn from_slice(raw_normal: &[f64], raw_offset: f64) -> Result<Self> {
        Self::normalize(DVector::from_column_slice(raw_normal), raw_offset)
    }

    pub fn normal(&self) -> &DVector<f64> {
        &self.normal
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn dim(&self) -> usize {
        self.normal.len()
    }

    /// `normal·x + offset`: negative inside, zero on the boundary.
    ///
    /// # Panics
    /// If `x` has the wrong length.
    pub fn signed_distance(&self, x: &StateVector) -> f64 {
        assert_eq!(x.len(), self.normal.len(), "signed_distance: dimension mismatch");
        self.normal.dot(x) + self.offset
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegionKind {
    /// Where the reference state may be placed.
    ReferenceFeasible,
    /// Where the plant state must stay; must be bounded.
    Operational,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityReport {
    pub feasible: bool,
    pub worst_violation: f64,
    /// Index of the constraint attaining `worst_violation` when infeasible.
    pub violating_index: Option<usize>,
}

/// Conjunction of half-spaces.
#[derive(Debug, Clone, PartialEq)]
pub struct Polytope {
    halfspaces: Vec<HalfSpace>,
    kind: RegionKind,
}

impl Polytope {
    /// Builds a polytope. Operational regions are probed by LP and rejected
    /// when empty or unbounded.
    pub fn new(halfspaces: Vec<HalfSpace>, kind: RegionKind) -> Result<Self> {
        let poly = Self::new_unchecked(halfspaces, kind)?;
        if kind == RegionKind::Operational {
            lp::axis_bounds(&poly)?;
        }
        Ok(poly)
    }

    /// Normalizes raw `(normal, offset)` rows, then calls [`Polytope::new`].
    pub fn from_raw(rows: &[(Vec<f64>, f64)], kind: RegionKind) -> Result<Self> {
        let hs = rows
            .iter()
            .map(|(a, b)| HalfSpace::from_slice(a, *b))
            .collect::<Result<Vec<_>>>()?;
        Self::new(hs, kind)
    }

    /// Only checks shape: nonempty and equal dimensions. Used for images of
    /// already validated regions.
    pub(crate) fn new_unchecked(halfspaces: Vec<HalfSpace>, kind: RegionKind) -> Result<Self> {
        let Some(first) = halfspaces.first() else {
            return Err(Error::Input("polytope needs at least one half-space".into()));
        };
        let n = first.dim();
        for h in &halfspaces {
            check_dim(n, h.dim())?;
        }
        Ok(Self { halfspaces, kind })
    }

    pub fn halfspaces(&self) -> &[HalfSpace] {
        &self.halfspaces
    }

    pub fn kind(&self) -> RegionKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.halfspaces[0].dim()
    }

    pub fn len(&self) -> usize {
        self.halfspaces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.halfspaces.is_empty()
    }

    /// Rows `(a, b)` meaning `a·x <= b`, for the LP layer.
    pub fn rows(&self) -> Vec<(Vec<f64>, f64)> {
        self.halfspaces
            .iter()
            .map(|h| (h.normal.iter().copied().collect(), -h.offset))
            .collect()
    }

    /// Constraint values `normal_j·x + offset_j`.
    pub fn values(&self, x: &StateVector) -> Result<Vec<f64>> {
        check_dim(self.dim(), x.len())?;
        Ok(self.halfspaces.iter().map(|h| h.signed_distance(x)).collect())
    }

    pub fn contains(&self, x: &StateVector, tol: f64) -> Result<FeasibilityReport> {
        let values = self.values(x)?;
        Ok(report_from_values(&values, tol))
    }

    /// Per-axis `[min, max]` of the region.
    pub fn bounding_box(&self) -> Result<Vec<(f64, f64)>> {
        lp::axis_bounds(self).map(|(b, _)| b)
    }
}

pub(crate) fn report_from_values(values: &[f64], tol: f64) -> FeasibilityReport {
    let (idx, worst) = values
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc });
    let feasible = worst <= tol;
    FeasibilityReport {
        feasible,
        worst_violation: worst,
        violating_index: if feasible { None } else { Some(idx) },
    }
}

/// Axis-aligned box `lo <= x <= hi`.
pub fn axis_box(lo: &[f64], hi: &[f64], kind: RegionKind) -> Result<Polytope> {
    check_dim(lo.len(), hi.len())?;
    let n = lo.len();
    let mut rows = Vec::with_capacity(2 * n);
    for i in 0..n {
        let mut e = vec![0.0; n];
        e[i] = 1.0;
        rows.push((e.clone(), hi[i]));
        e[i] = -1.0;
        rows.push((e, -lo[i]));
    }
    // rows above are a·x <= b; HalfSpace wants a·x - b <= 0
    let hs = rows
        .into_iter()
        .map(|(a, b)| HalfSpace::from_slice(&a, -b))
        .collect::<Result<Vec<_>>>()?;
    Polytope::new(hs, kind)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn v(x: &[f64]) -> StateVector {
        StateVector::from_column_slice(x)
    }

    fn unit_box() -> Polytope {
        axis_box(&[0.0, 0.0], &[1.0, 1.0], RegionKind::ReferenceFeasible).unwrap()
    }

    #[test]
    fn box_interior_point() {
        let r = unit_box().contains(&v(&[0.5, 0.5]), 0.0).unwrap();
        assert!(r.feasible);
        assert_eq!(r.worst_violation, -0.5);
        assert_eq!(r.violating_index, None);
    }

    #[test]
    fn box_exterior_point_names_face() {
        let b = unit_box();
        let r = b.contains(&v(&[2.0, 0.5]), 0.0).unwrap();
        assert!(!r.feasible);
        assert_eq!(r.worst_violation, 1.0);
        let h = &b.halfspaces()[r.violating_index.unwrap()];
        assert_eq!(h.normal().as_slice(), &[1.0, 0.0]);
        assert_eq!(h.offset(), -1.0);
    }

    #[test]
    fn box_corner_is_feasible() {
        let r = unit_box().contains(&v(&[1.0, 1.0]), 1e-12).unwrap();
        assert!(r.feasible);
        assert_eq!(r.worst_violation, 0.0);
    }

    #[test]
    fn contains_rejects_wrong_dimension() {
        assert!(matches!(
            unit_box().contains(&v(&[1.0, 1.0, 1.0]), 0.0),
            Err(Error::Dimension { expected: 2, got: 3 })
        ));
    }

    #[test]
    fn signed_distance_examples() {
        let h = HalfSpace::from_slice(&[1.0, 0.0], -2.0).unwrap();
        assert_eq!(h.signed_distance(&v(&[0.0, 0.0])), -2.0);
        assert_eq!(h.signed_distance(&v(&[2.0, 5.0])), 0.0);

        let h = HalfSpace::from_slice(&[3.0, 4.0], -10.0).unwrap();
        assert!((h.normal()[0] - 0.6).abs() < 1e-15);
        assert!((h.normal()[1] - 0.8).abs() < 1e-15);
        assert!((h.offset() + 2.0).abs() < 1e-15);
        assert!((h.signed_distance(&v(&[0.0, 0.0])) + 2.0).abs() < 1e-15);
    }

    #[test]
    fn normalize_examples() {
        let h = HalfSpace::from_slice(&[2.0, 0.0], -4.0).unwrap();
        assert_eq!((h.normal().as_slice(), h.offset()), (&[1.0, 0.0][..], -2.0));
        assert_eq!(HalfSpace::from_slice(&[0.0, 0.0], 1.0), Err(Error::ZeroNormal));
        let h = HalfSpace::from_slice(&[1.0, 1.0], 0.0).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert!((h.normal()[0] - s).abs() < 1e-15 && (h.normal()[1] - s).abs() < 1e-15);
        assert_eq!(h.offset(), 0.0);
    }

    #[test]
    fn operational_region_must_be_bounded() {
        let half_plane = vec![HalfSpace::from_slice(&[1.0, 0.0], -1.0).unwrap()];
        assert!(matches!(
            Polytope::new(half_plane.clone(), RegionKind::Operational),
            Err(Error::Unbounded { .. })
        ));
        assert!(Polytope::new(half_plane, RegionKind::ReferenceFeasible).is_ok());

        let empty = vec![
            HalfSpace::from_slice(&[1.0], 1.0).unwrap(),
            HalfSpace::from_slice(&[-1.0], 1.0).unwrap(),
        ];
        assert_eq!(Polytope::new(empty, RegionKind::Operational), Err(Error::EmptyRegion));
        assert!(Polytope::new(vec![], RegionKind::ReferenceFeasible).is_err());
    }

    #[test]
    fn bounding_box_of_triangle() {
        let tri = Polytope::from_raw(
            &[(vec![-1.0, 0.0], 0.0), (vec![0.0, -1.0], 0.0), (vec![1.0, 1.0], -1.0)],
            RegionKind::Operational,
        )
        .unwrap();
        let bb = tri.bounding_box().unwrap();
        for (lo, hi) in bb {
            assert!(lo.abs() < 1e-9 && (hi - 1.0).abs() < 1e-9);
        }
    }

    proptest! {
        #[test]
        fn normalization_preserves_sides(
            a in prop::collection::vec(-5.0f64..5.0, 3),
            b in -5.0f64..5.0,
            x in prop::collection::vec(-10.0f64..10.0, 3),
        ) {
            prop_assume!(a.iter().map(|v| v * v).sum::<f64>() > 1e-6);
            let h = HalfSpace::from_slice(&a, b).unwrap();
            let raw: f64 = a.iter().zip(&x).map(|(p, q)| p * q).sum::<f64>() + b;
            prop_assume!(raw.abs() > 1e-9);
            prop_assert_eq!(raw > 0.0, h.signed_distance(&v(&x)) > 0.0);
        }

        #[test]
        fn contains_is_monotone_in_tol(
            x in prop::collection::vec(-2.0f64..3.0, 2),
            t1 in 0.0f64..1.0,
            dt in 0.0f64..1.0,
        ) {
            let b = unit_box();
            if b.contains(&v(&x), t1).unwrap().feasible {
                prop_assert!(b.contains(&v(&x), t1 + dt).unwrap().feasible);
            }
        }

        #[test]
        fn accepted_operational_regions_have_finite_extent(
            lo in prop::collection::vec(-5.0f64..0.0, 3),
            w in prop::collection::vec(0.1f64..5.0, 3),
            tilt in prop::collection::vec(-1.0f64..1.0, 3),
        ) {
            let hi: Vec<f64> = lo.iter().zip(&w).map(|(l, w)| l + w).collect();
            let mut hs = axis_box(&lo, &hi, RegionKind::Operational).unwrap().halfspaces().to_vec();
            hs.push(HalfSpace::from_slice(&tilt, -10.0).unwrap_or_else(|_| hs[0].clone()));
            let poly = Polytope::new(hs, RegionKind::Operational).unwrap();
            for (l, h) in poly.bounding_box().unwrap() {
                prop_assert!(l.is_finite() && h.is_finite() && l <= h);
            }
        }
    }
}

//! Coordinates in which a Lyapunov ellipsoid becomes a sphere.
//!
//! With `P = U Λ Uᵀ` and an origin `o`, the forward map is
//! `z = Λ^{1/2} Uᵀ (x - o)` and the inverse is `x = o + U Λ^{-1/2} z`, so
//! `(x - c)ᵀ P (x - c) = ‖z - z_c‖²`.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Result};
use crate::geometry::{HalfSpace, Polytope, StateVector};
use crate::lyapunov::SpdMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct WhitenTransform {
    origin: StateVector,
    u: DMatrix<f64>,
    lambda_sqrt: DVector<f64>,
    lambda_inv_sqrt: DVector<f64>,
    det_back: f64,
}

impl WhitenTransform {
    /// Transform for `p` centred at the origin of the state space.
    pub fn from_spd(p: &SpdMatrix) -> Self {
        let u = p.u().clone();
        let lambda_sqrt = p.lambda().map(f64::sqrt);
        let lambda_inv_sqrt = lambda_sqrt.map(|s| 1.0 / s);
        let det_back = u.determinant().signum() * lambda_inv_sqrt.iter().product::<f64>();
        Self { origin: StateVector::zeros(p.dim()), u, lambda_sqrt, lambda_inv_sqrt, det_back }
    }

    /// Same transform, translated so that `origin` maps to zero.
    pub fn with_origin(mut self, origin: StateVector) -> Result<Self> {
        check_dim(self.dim(), origin.len())?;
        self.origin = origin;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.u.nrows()
    }

    pub fn origin(&self) -> &StateVector {
        &self.origin
    }

    pub fn u(&self) -> &DMatrix<f64> {
        &self.u
    }

    /// `Λ^{1/2}`, descending.
    pub fn lambda_sqrt(&self) -> &DVector<f64> {
        &self.lambda_sqrt
    }

    pub fn lambda_inv_sqrt(&self) -> &DVector<f64> {
        &self.lambda_inv_sqrt
    }

    /// `det(U Λ^{-1/2})`.
    pub fn det_back(&self) -> f64 {
        self.det_back
    }

    /// `M = U Λ^{-1/2}`, the linear part of the inverse map.
    pub fn metric(&self) -> DMatrix<f64> {
        let mut m = self.u.clone();
        for (j, s) in self.lambda_inv_sqrt.iter().enumerate() {
            m.column_mut(j).scale_mut(*s);
        }
        m
    }

    pub fn to_s2(&self, x1: &StateVector) -> Result<StateVector> {
        check_dim(self.dim(), x1.len())?;
        let y = self.u.tr_mul(&(x1 - &self.origin));
        Ok(y.component_mul(&self.lambda_sqrt))
    }

    pub fn to_s1(&self, x2: &StateVector) -> Result<StateVector> {
        check_dim(self.dim(), x2.len())?;
        Ok(&self.origin + &self.u * x2.component_mul(&self.lambda_inv_sqrt))
    }

    /// Image of `{x : ω·x + b <= 0}`: `(Mᵀω)·z + (ω·o + b) <= 0`, renormalized.
    pub fn halfspace_to_s2(&self, h: &HalfSpace) -> Result<HalfSpace> {
        check_dim(self.dim(), h.dim())?;
        let normal = self.metric().tr_mul(h.normal());
        let offset = h.signed_distance(&self.origin);
        HalfSpace::normalize(normal, offset)
    }

    pub fn polytope_to_s2(&self, poly: &Polytope) -> Result<Polytope> {
        let hs = poly
            .halfspaces()
            .iter()
            .map(|h| self.halfspace_to_s2(h))
            .collect::<Result<Vec<_>>>()?;
        Polytope::new_unchecked(hs, poly.kind())
    }

    /// Problem data in whitened coordinates.
    pub fn transform_problem(
        &self,
        ref_region: &Polytope,
        op_region: &Polytope,
        xp1: &StateVector,
    ) -> Result<WhitenedProblem> {
        Ok(WhitenedProblem {
            ref_region: self.polytope_to_s2(ref_region)?,
            op_region: self.polytope_to_s2(op_region)?,
            xp: self.to_s2(xp1)?,
            metric: self.metric(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WhitenedProblem {
    pub ref_region: Polytope,
    pub op_region: Polytope,
    pub xp: StateVector,
    /// `U Λ^{-1/2}`.
    pub metric: DMatrix<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{axis_box, RegionKind};
    use crate::lyapunov::{unit_ball_volume, Ellipsoid};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn v(x: &[f64]) -> StateVector {
        StateVector::from_column_slice(x)
    }

    fn random_spd(n: usize, rng: &mut ChaCha8Rng) -> SpdMatrix {
        let m = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        SpdMatrix::new(&m * m.transpose() + DMatrix::identity(n, n) * 0.2).unwrap()
    }

    #[test]
    fn identity_transform() {
        let t = WhitenTransform::from_spd(&SpdMatrix::identity(3));
        assert_eq!(t.lambda_sqrt().as_slice(), &[1.0, 1.0, 1.0]);
        let x = v(&[0.3, -1.0, 2.0]);
        assert!((t.to_s2(&x).unwrap() - &x).norm() < 1e-15);
    }

    #[test]
    fn diagonal_transform() {
        let t = WhitenTransform::from_spd(&SpdMatrix::from_diagonal(&[4.0, 1.0]).unwrap());
        assert_eq!(t.lambda_sqrt().as_slice(), &[2.0, 1.0]);
        let z = t.to_s2(&v(&[1.0, 1.0])).unwrap();
        assert!((z[0].abs() - 2.0).abs() < 1e-15 && (z[1].abs() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn off_diagonal_factors() {
        let p = SpdMatrix::new(DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0])).unwrap();
        let t = WhitenTransform::from_spd(&p);
        assert!((t.lambda_sqrt()[0] - 3f64.sqrt()).abs() < 1e-12);
        assert!((t.lambda_sqrt()[1] - 1.0).abs() < 1e-12);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let u0 = t.u().column(0);
        let u1 = t.u().column(1);
        assert!((u0[0].abs() - s).abs() < 1e-12 && (u0[0] - u0[1]).abs() < 1e-12);
        assert!((u1[0].abs() - s).abs() < 1e-12 && (u1[0] + u1[1]).abs() < 1e-12);
        let rec = t.u() * DMatrix::from_diagonal(&t.lambda_sqrt().map(|s| s * s)) * t.u().transpose();
        assert!((rec - p.dense()).norm() < 1e-10);
    }

    #[test]
    fn identity_problem_unchanged() {
        let t = WhitenTransform::from_spd(&SpdMatrix::identity(2));
        let r = axis_box(&[0.0, 0.0], &[1.0, 1.0], RegionKind::ReferenceFeasible).unwrap();
        let o = axis_box(&[-3.0, -3.0], &[3.0, 3.0], RegionKind::Operational).unwrap();
        let w = t.transform_problem(&r, &o, &v(&[2.0, 0.5])).unwrap();
        for (a, b) in w.ref_region.halfspaces().iter().zip(r.halfspaces()) {
            assert!((a.normal() - b.normal()).norm() < 1e-15 && (a.offset() - b.offset()).abs() < 1e-15);
        }
        assert_eq!(w.xp, v(&[2.0, 0.5]));
        assert!((w.metric - DMatrix::identity(2, 2)).norm() < 1e-15);
    }

    #[test]
    fn scaled_face() {
        let t = WhitenTransform::from_spd(&SpdMatrix::from_diagonal(&[4.0, 1.0]).unwrap());
        let h = HalfSpace::from_slice(&[1.0, 0.0], -1.0).unwrap();
        let h2 = t.halfspace_to_s2(&h).unwrap();
        // x1 = z1 / 2 (up to the sign of U), so x1 <= 1 becomes ±z1 <= 2
        assert!((h2.normal()[0].abs() - 1.0).abs() < 1e-15 && h2.normal()[1].abs() < 1e-15);
        assert!((h2.offset() + 2.0).abs() < 1e-15);
        let x = v(&[0.9, 5.0]);
        assert_eq!(h.signed_distance(&x) <= 0.0, h2.signed_distance(&t.to_s2(&x).unwrap()) <= 0.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn round_trip(seed in any::<u64>(), n in 1usize..=6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = random_spd(n, &mut rng);
            let o = StateVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
            let t = WhitenTransform::from_spd(&p).with_origin(o).unwrap();
            let x = StateVector::from_fn(n, |_, _| rng.random_range(-2.0..2.0));
            prop_assert!((t.to_s1(&t.to_s2(&x).unwrap()).unwrap() - &x).norm() <= 1e-12 * x.norm().max(1.0));
            prop_assert!((t.to_s2(&t.to_s1(&x).unwrap()).unwrap() - &x).norm() <= 1e-12 * x.norm().max(1.0));
        }

        #[test]
        fn volume_relation(seed in any::<u64>(), n in 1usize..=6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = random_spd(n, &mut rng);
            let t = WhitenTransform::from_spd(&p);
            let level = rng.random_range(0.1..3.0);
            let e1 = Ellipsoid::new(StateVector::zeros(n), p, level).unwrap();
            let vol2 = unit_ball_volume(n) * level.powf(n as f64 / 2.0);
            let rel = (e1.volume() - t.det_back().abs() * vol2).abs() / e1.volume();
            prop_assert!(rel <= 1e-8);
        }

        #[test]
        fn set_consistency(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = rng.random_range(2..=4);
            let p = random_spd(n, &mut rng);
            let o = StateVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
            let t = WhitenTransform::from_spd(&p).with_origin(o).unwrap();
            let a: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let h = HalfSpace::from_slice(&a, rng.random_range(-1.0..1.0));
            prop_assume!(h.is_ok());
            let h = h.unwrap();
            let h2 = t.halfspace_to_s2(&h).unwrap();
            for _ in 0..1000 {
                let x = StateVector::from_fn(n, |_, _| rng.random_range(-3.0..3.0));
                let s1 = h.signed_distance(&x);
                if s1.abs() < 1e-9 {
                    continue;
                }
                prop_assert_eq!(s1 <= 0.0, h2.signed_distance(&t.to_s2(&x).unwrap()) <= 0.0);
            }
        }

        #[test]
        fn ellipsoid_maps_to_sphere(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = rng.random_range(2..=5);
            let p = random_spd(n, &mut rng);
            let c = StateVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
            let level: f64 = rng.random_range(0.1..3.0);
            let t = WhitenTransform::from_spd(&p);
            let zc = t.to_s2(&c).unwrap();
            for _ in 0..50 {
                // boundary point of the sphere mapped back must lie on the ellipsoid
                let mut u = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
                u.normalize_mut();
                let z = &zc + u * level.sqrt();
                let x = t.to_s1(&z).unwrap();
                let e = Ellipsoid::new(c.clone(), p.clone(), level).unwrap();
                prop_assert!((e.value(&x) - level).abs() <= 1e-10 * level.max(1.0));
            }
        }

        #[test]
        fn larger_whitened_distance_means_larger_volume(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = rng.random_range(2..=4);
            let p = random_spd(n, &mut rng);
            let t = WhitenTransform::from_spd(&p);
            let xp = StateVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
            let a = StateVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
            let b = StateVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
            let xp2 = t.to_s2(&xp).unwrap();
            let da = (t.to_s2(&a).unwrap() - &xp2).norm_squared();
            let db = (t.to_s2(&b).unwrap() - &xp2).norm_squared();
            prop_assume!((da - db).abs() > 1e-9);
            let va = Ellipsoid::through(a, p.clone(), &xp).unwrap().volume();
            let vb = Ellipsoid::through(b, p, &xp).unwrap().volume();
            prop_assert_eq!(da > db, va > vb);
        }
    }
}

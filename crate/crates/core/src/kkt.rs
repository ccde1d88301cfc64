//! Analytic projection of a point onto a polytope by enumerating active sets.
//!
//! For an active set `J` with Gram matrix `W = [ω_i·ω_j]` and
//! `d_j = ω_j·xp + b_j`, stationarity plus `g_j = 0` on `J` gives
//! `μ = 2 W⁻¹ d` and the candidate `xp - ½ Σ μ_j ω_j`. Candidates that break
//! the active equalities or the inactive inequalities are discarded; the
//! closest survivor is the projection.

use itertools::Itertools;
use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};
use crate::geometry::{Polytope, StateVector};

/// Largest number of constraints accepted for enumeration (2²⁰ subsets).
pub const MAX_CONSTRAINTS: usize = 20;
/// Gram matrices with a condition estimate above this are treated as singular.
pub const SINGULAR_CONDITION: f64 = 1e12;
/// Default tolerance of the presumption check.
pub const EQ_TOL: f64 = 1e-8;

/// Sorted, distinct constraint indices.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ActiveSet(Vec<usize>);

impl ActiveSet {
    pub fn new(mut indices: Vec<usize>) -> Self {
        indices.sort_unstable();
        indices.dedup();
        Self(indices)
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KktCandidate {
    pub point: StateVector,
    pub multipliers: DVector<f64>,
    pub active_set: ActiveSet,
    /// `‖point - xp‖²`.
    pub objective: f64,
    /// All multipliers nonnegative. Recorded, never used for pruning.
    pub dual_feasible: bool,
}

/// Candidates plus bookkeeping for the work model.
#[derive(Debug, Clone, PartialEq)]
pub struct Enumeration {
    pub candidates: Vec<KktCandidate>,
    pub combinations: u64,
    pub work: u64,
}

/// Face Gram matrix and face values at `xp`, shared by every active set.
struct Tables {
    gram: DMatrix<f64>,
    values: DVector<f64>,
}

impl Tables {
    fn new(region: &Polytope, xp: &StateVector) -> Self {
        let hs = region.halfspaces();
        let r = hs.len();
        Self {
            gram: DMatrix::from_fn(r, r, |i, j| hs[i].normal().dot(hs[j].normal())),
            values: DVector::from_fn(r, |i, _| hs[i].signed_distance(xp)),
        }
    }

    /// `μ = 2 W⁻¹ d` for the active set, `None` when `W` is singular.
    fn multipliers(&self, indices: &[usize]) -> Option<DVector<f64>> {
        let l = indices.len();
        let w = DMatrix::from_fn(l, l, |i, j| self.gram[(indices[i], indices[j])]);
        let d = DVector::from_fn(l, |i, _| self.values[indices[i]]);
        let chol = w.clone().cholesky()?;
        // ‖W‖_F ‖W⁻¹‖_F brackets the 2-norm condition number within a factor
        // of l; the eigenvalues are only needed inside that bracket
        let upper = w.norm() * chol.inverse().norm();
        if upper > SINGULAR_CONDITION && (upper / l as f64 > SINGULAR_CONDITION || !well_conditioned(&w)) {
            return None;
        }
        Some(chol.solve(&d) * 2.0)
    }

    /// Face values at the candidate, `g = g(xp) - ½ Σ μ_k ω_j·ω_k`.
    fn candidate_values(&self, indices: &[usize], mu: &DVector<f64>) -> DVector<f64> {
        let mut g = self.values.clone();
        for (k, &j) in indices.iter().enumerate() {
            g.axpy(-0.5 * mu[k], &self.gram.column(j), 1.0);
        }
        g
    }
}

fn well_conditioned(w: &DMatrix<f64>) -> bool {
    let eig = w.clone().symmetric_eigen();
    let hi = eig.eigenvalues.max();
    let lo = eig.eigenvalues.min();
    lo > 0.0 && hi / lo <= SINGULAR_CONDITION
}

fn build(indices: &[usize], region: &Polytope, xp: &StateVector, mu: DVector<f64>) -> KktCandidate {
    let hs = region.halfspaces();
    let mut point = xp.clone();
    for (k, &j) in indices.iter().enumerate() {
        point.axpy(-0.5 * mu[k], hs[j].normal(), 1.0);
    }
    let objective = (&point - xp).norm_squared();
    let dual_feasible = mu.iter().all(|&m| m >= 0.0);
    KktCandidate { point, multipliers: mu, active_set: ActiveSet(indices.to_vec()), objective, dual_feasible }
}

/// Evaluates the stationary point for one active set; `None` when its Gram
/// matrix is singular.
///
/// Unlike [`ActiveSet::new`] this takes the indices as given, so a repeated
/// index produces a singular Gram matrix.
pub fn candidate_for(indices: &[usize], region: &Polytope, xp: &StateVector) -> Option<KktCandidate> {
    if indices.is_empty() || xp.len() != region.dim() {
        return None;
    }
    if indices.iter().any(|&i| i >= region.len()) {
        return None;
    }
    let mu = Tables::new(region, xp).multipliers(indices)?;
    Some(build(indices, region, xp, mu))
}

/// All candidates surviving the presumption check: `|g_j| <= tol` on the
/// active set and `g_j < tol` elsewhere.
///
/// Active sets larger than the dimension are skipped: their Gram matrix has
/// rank at most n and is always singular.
pub fn enumerate_candidates(region: &Polytope, xp: &StateVector, tol: f64) -> Result<Vec<KktCandidate>> {
    enumerate_with_stats(region, xp, tol).map(|e| e.candidates)
}

pub fn enumerate_with_stats(region: &Polytope, xp: &StateVector, tol: f64) -> Result<Enumeration> {
    check_dim(region.dim(), xp.len())?;
    let r = region.len();
    if r > MAX_CONSTRAINTS {
        return Err(Error::CombinatorialBudget { constraints: r, budget: MAX_CONSTRAINTS });
    }
    let n = region.dim() as u64;
    let tables = Tables::new(region, xp);
    let mut out = Vec::new();
    let mut combinations = 0u64;
    let mut work = (r * r) as u64 * n;
    let mut in_set = vec![false; r];
    for l in 1..=r.min(region.dim()) {
        let lw = l as u64;
        for combo in (0..r).combinations(l) {
            combinations += 1;
            work += 4 * lw * lw * lw + lw * lw;
            let Some(mu) = tables.multipliers(&combo) else {
                continue;
            };
            work += r as u64 * lw;
            let g = tables.candidate_values(&combo, &mu);
            for &j in &combo {
                in_set[j] = true;
            }
            let ok = (0..r).all(|j| if in_set[j] { g[j].abs() <= tol } else { g[j] < tol });
            for &j in &combo {
                in_set[j] = false;
            }
            if ok {
                work += lw * n;
                out.push(build(&combo, region, xp, mu));
            }
        }
    }
    Ok(Enumeration { candidates: out, combinations, work })
}

/// The closest surviving candidate; ties go to the lexicographically smallest
/// active set. `None` when nothing survives.
pub fn solve_problem2(region: &Polytope, xp: &StateVector, tol: f64) -> Result<Option<KktCandidate>> {
    Ok(select_best(enumerate_candidates(region, xp, tol)?))
}

pub fn select_best(candidates: Vec<KktCandidate>) -> Option<KktCandidate> {
    candidates.into_iter().min_by(|a, b| {
        a.objective
            .total_cmp(&b.objective)
            .then_with(|| a.active_set.cmp(&b.active_set))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{axis_box, HalfSpace, RegionKind};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn v(x: &[f64]) -> StateVector {
        StateVector::from_column_slice(x)
    }

    // faces in order: x1<=1, -x1<=0, x2<=1, -x2<=0
    fn unit_box() -> Polytope {
        axis_box(&[0.0, 0.0], &[1.0, 1.0], RegionKind::ReferenceFeasible).unwrap()
    }

    fn close(a: &StateVector, b: &[f64]) -> bool {
        (a - v(b)).norm() < 1e-12
    }

    #[test]
    fn single_face_candidate() {
        let c = candidate_for(&[0], &unit_box(), &v(&[2.0, 0.5])).unwrap();
        assert!(close(&c.point, &[1.0, 0.5]));
        assert!((c.multipliers[0] - 2.0).abs() < 1e-12);
        assert!((c.objective - 1.0).abs() < 1e-12);
    }

    #[test]
    fn corner_candidate() {
        let c = candidate_for(&[0, 2], &unit_box(), &v(&[2.0, 2.0])).unwrap();
        assert!(close(&c.point, &[1.0, 1.0]));
        assert!((c.multipliers - v(&[2.0, 2.0])).norm() < 1e-12);
        assert!((c.objective - 2.0).abs() < 1e-12);
    }

    #[test]
    fn repeated_face_is_singular() {
        assert!(candidate_for(&[0, 0], &unit_box(), &v(&[2.0, 0.5])).is_none());
        // parallel opposite faces are singular too
        assert!(candidate_for(&[0, 1], &unit_box(), &v(&[2.0, 0.5])).is_none());
    }

    #[test]
    fn survivors_for_edge_projection() {
        let cands = enumerate_candidates(&unit_box(), &v(&[2.0, 0.5]), EQ_TOL).unwrap();
        let mut pts: Vec<_> = cands.iter().map(|c| (c.point[0], c.point[1], c.dual_feasible)).collect();
        pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        // every face or vertex stationary point that lands in the box passes the
        // presumption check; only the projection has nonnegative multipliers
        assert_eq!(
            pts,
            vec![
                (0.0, 0.0, false),
                (0.0, 0.5, false),
                (0.0, 1.0, false),
                (1.0, 0.0, false),
                (1.0, 0.5, true),
                (1.0, 1.0, false),
            ]
        );
        let best = solve_problem2(&unit_box(), &v(&[2.0, 0.5]), EQ_TOL).unwrap().unwrap();
        assert!(close(&best.point, &[1.0, 0.5]));
        assert_eq!(best.active_set.indices(), &[0]);
    }

    #[test]
    fn corner_projection_rejects_single_faces() {
        let cands = enumerate_candidates(&unit_box(), &v(&[2.0, 2.0]), EQ_TOL).unwrap();
        // single-face candidates (1,2) and (2,1) violate the other upper face
        for active in [[0usize], [2]] {
            assert!(cands.iter().all(|c| c.active_set.indices() != active));
        }
        let c = candidate_for(&[0], &unit_box(), &v(&[2.0, 2.0])).unwrap();
        assert!(close(&c.point, &[1.0, 2.0]));
        let best = select_best(cands).unwrap();
        assert!(close(&best.point, &[1.0, 1.0]));
        assert_eq!(best.active_set.indices(), &[0, 2]);
        assert!((best.multipliers.clone() - v(&[2.0, 2.0])).norm() < 1e-12);
    }

    #[test]
    fn triangle_diagonal_face() {
        let tri = Polytope::from_raw(
            &[(vec![-1.0, 0.0], 0.0), (vec![0.0, -1.0], 0.0), (vec![1.0, 1.0], -1.0)],
            RegionKind::ReferenceFeasible,
        )
        .unwrap();
        let best = solve_problem2(&tri, &v(&[1.0, 1.0]), EQ_TOL).unwrap().unwrap();
        assert!((&best.point - v(&[0.5, 0.5])).norm() < 1e-12);
        assert_eq!(best.active_set.indices(), &[2]);
    }

    #[test]
    fn left_face_projection() {
        let best = solve_problem2(&unit_box(), &v(&[-3.0, 0.5]), EQ_TOL).unwrap().unwrap();
        assert!(close(&best.point, &[0.0, 0.5]));
    }

    #[test]
    fn redundant_parallel_faces() {
        let p = Polytope::from_raw(
            &[(vec![1.0, 0.0], -1.0), (vec![1.0, 0.0], -2.0)],
            RegionKind::ReferenceFeasible,
        )
        .unwrap();
        let cands = enumerate_candidates(&p, &v(&[3.0, 0.0]), EQ_TOL).unwrap();
        // (2,0) from the slack face violates x1 <= 1
        assert_eq!(cands.len(), 1);
        assert!(close(&cands[0].point, &[1.0, 0.0]));
    }

    #[test]
    fn budget_is_enforced() {
        let hs: Vec<_> = (0..21)
            .map(|i| {
                let t = i as f64 * 0.3;
                HalfSpace::from_slice(&[t.cos(), t.sin()], -1.0).unwrap()
            })
            .collect();
        let p = Polytope::new(hs, RegionKind::ReferenceFeasible).unwrap();
        assert_eq!(
            solve_problem2(&p, &v(&[5.0, 5.0]), EQ_TOL),
            Err(Error::CombinatorialBudget { constraints: 21, budget: 20 })
        );
    }

    #[test]
    fn stats_count_combinations() {
        let e = enumerate_with_stats(&unit_box(), &v(&[2.0, 0.5]), EQ_TOL).unwrap();
        // C(4,1) + C(4,2)
        assert_eq!(e.combinations, 10);
        assert!(e.work > 0);
    }

    fn random_polytope(rng: &mut ChaCha8Rng, n: usize, r: usize) -> Polytope {
        let hs = (0..r)
            .map(|_| {
                let a: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
                HalfSpace::from_slice(&a, -rng.random_range(0.2..2.0)).unwrap()
            })
            .collect();
        Polytope::new(hs, RegionKind::ReferenceFeasible).unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(128))]

        #[test]
        fn survivors_are_feasible_and_best_is_minimal(
            seed in any::<u64>(), n in 2usize..=4, r in 3usize..=8,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = random_polytope(&mut rng, n, r);
            let xp = StateVector::from_fn(n, |_, _| rng.random_range(-4.0..4.0));
            prop_assume!(!p.contains(&xp, 0.0).unwrap().feasible);
            let cands = enumerate_candidates(&p, &xp, EQ_TOL).unwrap();
            for c in &cands {
                prop_assert!(p.contains(&c.point, EQ_TOL).unwrap().feasible);
            }
            if let Some(best) = select_best(cands.clone()) {
                for c in &cands {
                    prop_assert!(best.objective <= c.objective);
                }
                // projecting the projection is a fixed point
                prop_assert!(p.contains(&best.point, EQ_TOL).unwrap().feasible);
            }
        }
    }
}

//! Closed-loop stability algebra: the Lyapunov equation, Lyapunov functions
//! and their sublevel ellipsoids.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};
use crate::geometry::{report_from_values, FeasibilityReport, Polytope, StateVector};

/// Largest state dimension accepted by [`solve_lyapunov`]. The Kronecker
/// system has n² unknowns, so the dense LU costs O(n⁶).
pub const MAX_LYAPUNOV_DIM: usize = 30;

/// `ẋ = A x + B u`, `u = -K (x - x_ref)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantModel {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    k: DMatrix<f64>,
    a_cl: DMatrix<f64>,
}

impl PlantModel {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, k: DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        if n == 0 {
            return Err(Error::Input("plant has zero states".into()));
        }
        check_dim(n, a.ncols())?;
        check_dim(n, b.nrows())?;
        check_dim(b.ncols(), k.nrows())?;
        check_dim(n, k.ncols())?;
        if a.iter().chain(b.iter()).chain(k.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Input("plant matrices contain non-finite entries".into()));
        }
        let a_cl = &a - &b * &k;
        ensure_hurwitz(&a_cl)?;
        Ok(Self { a, b, k, a_cl })
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn k(&self) -> &DMatrix<f64> {
        &self.k
    }

    pub fn a_cl(&self) -> &DMatrix<f64> {
        &self.a_cl
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    /// Same plant with a different gain.
    pub fn with_gain(&self, k: DMatrix<f64>) -> Result<Self> {
        Self::new(self.a.clone(), self.b.clone(), k)
    }
}

pub fn max_real_eigenvalue(m: &DMatrix<f64>) -> f64 {
    m.complex_eigenvalues().iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max)
}

pub fn ensure_hurwitz(m: &DMatrix<f64>) -> Result<()> {
    let max_real_part = max_real_eigenvalue(m);
    if max_real_part < 0.0 {
        Ok(())
    } else {
        Err(Error::NotHurwitz { max_real_part })
    }
}

/// Symmetric positive-definite matrix with its eigen-factorization
/// `P = U diag(λ) Uᵀ`, λ descending.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdMatrix {
    dense: DMatrix<f64>,
    u: DMatrix<f64>,
    lambda: DVector<f64>,
    inverse: DMatrix<f64>,
    det: f64,
}

impl SpdMatrix {
    /// Symmetrizes `m` and factors it. Fails unless every eigenvalue is positive.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        let n = m.nrows();
        if n == 0 {
            return Err(Error::Input("empty matrix".into()));
        }
        check_dim(n, m.ncols())?;
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("matrix contains non-finite entries".into()));
        }
        let dense = (&m + m.transpose()) * 0.5;
        let eig = dense.clone().symmetric_eigen();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
        let lambda = DVector::from_fn(n, |i, _| eig.eigenvalues[order[i]]);
        let min_eigenvalue = lambda[n - 1];
        if !(min_eigenvalue > 0.0) {
            return Err(Error::NotPositiveDefinite { min_eigenvalue });
        }
        let u = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
        let inv_diag = DMatrix::from_diagonal(&lambda.map(|l| 1.0 / l));
        let inverse = &u * inv_diag * u.transpose();
        let inverse = (&inverse + inverse.transpose()) * 0.5;
        let det = lambda.iter().product();
        Ok(Self { dense, u, lambda, inverse, det })
    }

    pub fn identity(n: usize) -> Self {
        Self::scaled_identity(n, 1.0)
    }

    pub fn scaled_identity(n: usize, c: f64) -> Self {
        Self::new(DMatrix::identity(n, n) * c).expect("positive multiple of identity")
    }

    pub fn from_diagonal(d: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&DVector::from_column_slice(d)))
    }

    pub fn dense(&self) -> &DMatrix<f64> {
        &self.dense
    }

    pub fn u(&self) -> &DMatrix<f64> {
        &self.u
    }

    /// Eigenvalues, descending.
    pub fn lambda(&self) -> &DVector<f64> {
        &self.lambda
    }

    pub fn inverse(&self) -> &DMatrix<f64> {
        &self.inverse
    }

    pub fn det(&self) -> f64 {
        self.det
    }

    pub fn dim(&self) -> usize {
        self.dense.nrows()
    }

    pub fn condition(&self) -> f64 {
        self.lambda[0] / self.lambda[self.dim() - 1]
    }

    /// True when the matrix is a positive multiple of the identity up to `rel`.
    pub fn is_spherical(&self, rel: f64) -> bool {
        self.condition() <= 1.0 + rel
    }

    /// `vᵀ P v`.
    pub fn quad(&self, v: &DVector<f64>) -> f64 {
        v.dot(&(&self.dense * v))
    }

    /// `vᵀ P⁻¹ v`.
    pub fn inv_quad(&self, v: &DVector<f64>) -> f64 {
        v.dot(&(&self.inverse * v))
    }
}

/// Solves `A_clᵀ P + P A_cl = -Q` through the Kronecker form
/// `(I ⊗ A_clᵀ + A_clᵀ ⊗ I) vec(P) = -vec(Q)`.
pub fn solve_lyapunov(a_cl: &DMatrix<f64>, q: &SpdMatrix) -> Result<SpdMatrix> {
    let n = a_cl.nrows();
    check_dim(n, a_cl.ncols())?;
    check_dim(n, q.dim())?;
    if n > MAX_LYAPUNOV_DIM {
        return Err(Error::Input(format!(
            "Lyapunov solver supports n <= {MAX_LYAPUNOV_DIM}, got {n}"
        )));
    }
    ensure_hurwitz(a_cl)?;
    let at = a_cl.transpose();
    let eye = DMatrix::<f64>::identity(n, n);
    let m = eye.kronecker(&at) + at.kronecker(&eye);
    let rhs = DVector::from_column_slice(q.dense().as_slice()) * -1.0;
    let lu = m.clone().lu();
    let mut x = lu
        .solve(&rhs)
        .ok_or_else(|| Error::Numerical("singular Lyapunov operator".into()))?;
    // one round of iterative refinement
    let r = &rhs - &m * &x;
    if let Some(dx) = lu.solve(&r) {
        x += dx;
    }
    SpdMatrix::new(DMatrix::from_column_slice(n, n, x.as_slice()))
}

/// Frobenius norm of `A_clᵀ P + P A_cl + Q` divided by that of `Q`.
pub fn lyapunov_residual(a_cl: &DMatrix<f64>, p: &SpdMatrix, q: &SpdMatrix) -> f64 {
    let r = a_cl.transpose() * p.dense() + p.dense() * a_cl + q.dense();
    r.norm() / q.dense().norm()
}

/// Flop estimate for [`solve_lyapunov`]: dense LU on n² unknowns.
pub fn lyapunov_work(n: usize) -> u64 {
    let k = (n * n) as u64;
    2 * k * k * k / 3 + 4 * k * k
}

/// `{ξ : (ξ - center)ᵀ P (ξ - center) <= level}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Ellipsoid {
    center: StateVector,
    shape: SpdMatrix,
    level: f64,
}

impl Ellipsoid {
    pub fn new(center: StateVector, shape: SpdMatrix, level: f64) -> Result<Self> {
        check_dim(shape.dim(), center.len())?;
        if !(level >= 0.0) || !level.is_finite() {
            return Err(Error::Input(format!("ellipsoid level must be >= 0, got {level}")));
        }
        Ok(Self { center, shape, level })
    }

    /// The sublevel set whose boundary passes through `boundary_point`.
    pub fn through(center: StateVector, shape: SpdMatrix, boundary_point: &StateVector) -> Result<Self> {
        check_dim(shape.dim(), boundary_point.len())?;
        let level = lyap_value(&center, &shape, boundary_point);
        Self::new(center, shape, level)
    }

    pub fn center(&self) -> &StateVector {
        &self.center
    }

    pub fn shape(&self) -> &SpdMatrix {
        &self.shape
    }

    pub fn level(&self) -> f64 {
        self.level
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    /// Lyapunov function `V(x) = (x - center)ᵀ P (x - center)`.
    pub fn value(&self, x: &StateVector) -> f64 {
        lyap_value(&self.center, &self.shape, x)
    }

    pub fn volume(&self) -> f64 {
        let n = self.dim();
        unit_ball_volume(n) * self.level.powf(n as f64 / 2.0) / self.shape.det().sqrt()
    }

    /// `max over the ellipsoid of (normal·ξ + offset)`.
    pub fn support(&self, normal: &DVector<f64>, offset: f64) -> f64 {
        normal.dot(&self.center) + offset + (self.level * self.shape.inv_quad(normal)).sqrt()
    }

    /// Support value of every face of `region`.
    pub fn support_values(&self, region: &Polytope) -> Result<Vec<f64>> {
        check_dim(region.dim(), self.dim())?;
        Ok(region
            .halfspaces()
            .iter()
            .map(|h| self.support(h.normal(), h.offset()))
            .collect())
    }

    /// Containment of the whole ellipsoid in `region`, via support values.
    /// A center outside the region simply reports infeasible.
    pub fn in_region(&self, region: &Polytope, tol: f64) -> Result<FeasibilityReport> {
        Ok(report_from_values(&self.support_values(region)?, tol))
    }
}

pub fn lyap_value(center: &StateVector, shape: &SpdMatrix, x: &StateVector) -> f64 {
    let d = x - center;
    shape.quad(&d).max(0.0)
}

/// Volume of the unit ball in `n` dimensions.
pub fn unit_ball_volume(n: usize) -> f64 {
    let mut v = [1.0, 2.0];
    if n < 2 {
        return v[n];
    }
    let mut out = 0.0;
    for k in 2..=n {
        out = v[k % 2] * 2.0 * std::f64::consts::PI / k as f64;
        v[k % 2] = out;
    }
    out
}

//! Shared dense linear-algebra helpers.
//!
//! Everything here works on `nalgebra` dense matrices; the desk-scale grids
//! this crate targets (reduced dimensions up to a few thousand) make dense
//! factorizations the simplest reliable choice.

use crate::error::{Error, Result};
use nalgebra::linalg::{Cholesky, SymmetricEigen, LU};
use nalgebra::{Complex, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type C64 = Complex<f64>;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// Deterministic RNG for seeded experiments.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_vector(rng: &mut ChaCha8Rng, len: usize) -> DVector<f64> {
    DVector::from_fn(len, |_, _| rng.random::<f64>() * 2.0 - 1.0)
}

pub fn random_complex_vector(rng: &mut ChaCha8Rng, len: usize) -> CVector {
    DVector::from_fn(len, |_, _| {
        C64::new(rng.random::<f64>() * 2.0 - 1.0, rng.random::<f64>() * 2.0 - 1.0)
    })
}

pub fn complexify(a: &DMatrix<f64>) -> CMatrix {
    a.map(|v| C64::new(v, 0.0))
}

pub fn complexify_vec(v: &DVector<f64>) -> CVector {
    v.map(|x| C64::new(x, 0.0))
}

/// Orthonormal basis of the null space of `c`, via the spectral
/// decomposition of the Gram matrix `cᵀc`.
///
/// `expected` pins the null-space dimension; a mismatch signals an
/// assembly bug and is reported as an error rather than silently truncated.
pub fn null_space_basis(c: &DMatrix<f64>, expected: usize) -> Result<DMatrix<f64>> {
    let gram = c.transpose() * c;
    let dim = gram.nrows();
    let eig = SymmetricEigen::new(gram);
    let lambda_max = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    let tol = lambda_max.max(1.0) * 1e-12;

    let mut idx: Vec<usize> = (0..dim).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
    let kernel: Vec<usize> = idx
        .iter()
        .cloned()
        .filter(|&i| eig.eigenvalues[i] <= tol)
        .collect();
    if kernel.len() != expected {
        return Err(Error::numerics(format!(
            "constraint null space dimension {} does not match the expected {} \
             (eigenvalue gap {:.3e} / {:.3e})",
            kernel.len(),
            expected,
            eig.eigenvalues[idx[kernel.len().min(dim - 1)]],
            tol
        )));
    }

    let mut basis = DMatrix::zeros(dim, expected);
    for (j, &i) in kernel.iter().enumerate() {
        basis.set_column(j, &eig.eigenvectors.column(i));
    }

    // Iterative refinement: project the residual `c * basis` back out so
    // the basis satisfies the constraints to near round-off, not just to
    // eigen-solver accuracy. The factorization of c cᵀ exists because the
    // constraint rows are linearly independent.
    let cct = c * c.transpose();
    let cct = (&cct + cct.transpose()) * 0.5;
    if let Some(chol) = Cholesky::new(cct) {
        for _ in 0..2 {
            let resid = c * &basis;
            let corr = chol.solve(&resid);
            basis -= c.transpose() * corr;
        }
    }

    // Guard: residual of the candidate basis under the constraints.
    let resid = (c * &basis).norm() / c.norm().max(1.0);
    if resid > 1e-10 {
        return Err(Error::numerics(format!(
            "null-space basis residual too large: {resid:.3e}"
        )));
    }
    Ok(basis)
}

/// Smallest singular value of a complex square matrix via inverse iteration
/// on the normal-equations operator, reusing one LU factorization of `h`
/// and one of `hᴴ`.
pub fn smallest_singular_value(h: &CMatrix, seed: u64) -> Result<f64> {
    let n = h.nrows();
    let lu = LU::new(h.clone());
    let lu_adj = LU::new(h.adjoint());

    let mut rng = seeded_rng(seed);
    let mut v = random_complex_vector(&mut rng, n);
    v /= C64::new(v.norm(), 0.0);

    let mut mu_prev = 0.0f64;
    for iter in 0..200 {
        let w = lu_adj
            .solve(&v)
            .ok_or_else(|| Error::numerics("singular shift in smallest-singular-value solve"))?;
        let y = lu
            .solve(&w)
            .ok_or_else(|| Error::numerics("singular shift in smallest-singular-value solve"))?;
        // Rayleigh quotient of (HᴴH)⁻¹ at the current unit iterate.
        let mu = w.norm_squared();
        let ny = y.norm();
        if !ny.is_finite() || ny == 0.0 {
            return Err(Error::numerics("inverse iteration broke down"));
        }
        v = y / C64::new(ny, 0.0);
        if iter > 4 && (mu - mu_prev).abs() <= 1e-12 * mu.abs() {
            return Ok(1.0 / mu.sqrt());
        }
        mu_prev = mu;
    }
    Ok(1.0 / mu_prev.sqrt())
}

/// Smallest singular value by dense Hermitian eigendecomposition of `hᴴh`
/// (test oracle; squares the condition number).
pub fn smallest_singular_value_dense(h: &CMatrix) -> f64 {
    let normal = h.adjoint() * h;
    let eig = SymmetricEigen::new(normal);
    eig.eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
        .max(0.0)
        .sqrt()
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    let mut out = DMatrix::zeros(ar * br, ac * bc);
    for i in 0..ar {
        for j in 0..ac {
            let s = a[(i, j)];
            if s != 0.0 {
                let mut block = out.view_mut((i * br, j * bc), (br, bc));
                block.copy_from(&(b * s));
            }
        }
    }
    out
}

/// Solves the continuous Lyapunov equation `aᵀx + xa + c = 0` for symmetric
/// `c`, by the vectorized (Kronecker) formulation. Dense and exact; meant
/// for the small reduced systems used in control studies.
pub fn lyapunov_solve(a: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if a.ncols() != n || c.shape() != (n, n) {
        return Err(Error::numerics("lyapunov_solve: shape mismatch"));
    }
    let eye = DMatrix::identity(n, n);
    let at = a.transpose();
    // vec(aᵀx) = (i ⊗ aᵀ) vec(x), vec(xa) = (aᵀ ⊗ i) vec(x), column-major vec.
    let big = kron(&eye, &at) + kron(&at, &eye);
    let rhs = DVector::from_fn(n * n, |k, _| -c[(k % n, k / n)]);
    let lu = LU::new(big);
    let sol = lu
        .solve(&rhs)
        .ok_or_else(|| Error::numerics("lyapunov operator singular (is the system stable?)"))?;
    let mut x = DMatrix::zeros(n, n);
    for j in 0..n {
        for i in 0..n {
            x[(i, j)] = sol[j * n + i];
        }
    }
    // Symmetrize away round-off skew.
    let xt = x.transpose();
    Ok((x + xt) * 0.5)
}

/// Cholesky factor handle that maps between a metric and its inverse.
pub struct SpdSolver {
    chol: Cholesky<f64, Dyn>,
}

impl SpdSolver {
    pub fn new(m: DMatrix<f64>, what: &str) -> Result<Self> {
        let chol = Cholesky::new(m)
            .ok_or_else(|| Error::numerics(format!("{what}: matrix is not positive definite")))?;
        Ok(SpdSolver { chol })
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(b)
    }

    pub fn solve_matrix(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(b)
    }

    /// Solve with a complex right-hand side by splitting real and
    /// imaginary parts through the real factorization.
    pub fn solve_complex(&self, b: &CVector) -> CVector {
        let re = self.chol.solve(&b.map(|z| z.re));
        let im = self.chol.solve(&b.map(|z| z.im));
        re.zip_map(&im, |a, b| C64::new(a, b))
    }

    /// Upper-triangular factor `lᵀ` (for metric-orthonormalizations).
    pub fn l_transpose(&self) -> DMatrix<f64> {
        self.chol.l().transpose()
    }
}

//! Ordinary least squares on small, tall designs.
//!
//! The cross-product matrix is factored by Cholesky when every pivot is well
//! separated from zero. Otherwise the solver switches to a symmetric
//! eigendecomposition of the cross-product matrix and returns the
//! minimum-norm solution, so exactly collinear or all-zero columns get zero
//! weight along their null directions.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative pivot below which a column is treated as collinear with the
/// preceding ones.
const PIVOT_TOL: f64 = 1e-10;
/// Eigenvalues below this fraction of the largest are treated as zero.
const EIGEN_TOL: f64 = 1e-11;

#[derive(Clone, Debug, PartialEq)]
pub struct OlsSolution {
    pub coefficients: Vec<f64>,
    pub rss: f64,
    /// Numerical rank of the design.
    pub rank: usize,
}

/// Minimizes `||y - X b||^2`.
pub fn least_squares(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<OlsSolution> {
    let (n, p) = x.shape();
    if y.len() != n {
        return Err(Error::Fit(format!("design has {n} rows, target has {}", y.len())));
    }
    if n < p {
        return Err(Error::Underdetermined { rows: n, cols: p });
    }
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Fit("non-finite value in least-squares problem".into()));
    }
    if p == 0 {
        return Ok(OlsSolution {
            coefficients: Vec::new(),
            rss: y.norm_squared(),
            rank: 0,
        });
    }
    let (beta, rank) = solve_normal_equations(cross_product(x), &x.tr_mul(y));
    let resid = y - x * &beta;
    Ok(OlsSolution {
        coefficients: beta.iter().copied().collect(),
        rss: resid.norm_squared(),
        rank,
    })
}

/// `X'X`, exactly symmetric. Goes through the blocked matrix product, which
/// is several times faster than `tr_mul` on tall designs.
pub(crate) fn cross_product(x: &DMatrix<f64>) -> DMatrix<f64> {
    let mut g = x.transpose() * x;
    for j in 1..g.ncols() {
        for i in 0..j {
            g[(i, j)] = g[(j, i)];
        }
    }
    g
}

/// Solves `G b = r` for a positive semi-definite cross-product matrix `G`,
/// returning the minimum-norm solution and the numerical rank.
pub(crate) fn solve_normal_equations(gram: DMatrix<f64>, rhs: &DVector<f64>) -> (DVector<f64>, usize) {
    match well_conditioned_cholesky(&gram) {
        Some(chol) => (chol.solve(rhs), gram.nrows()),
        None => min_norm_solve(gram, rhs),
    }
}

fn well_conditioned_cholesky(gram: &DMatrix<f64>) -> Option<Cholesky<f64, nalgebra::Dyn>> {
    let chol = Cholesky::new(gram.clone())?;
    let l = chol.l_dirty();
    let ok = (0..gram.nrows()).all(|i| {
        let g = gram[(i, i)];
        g > 0.0 && l[(i, i)] * l[(i, i)] >= PIVOT_TOL * g
    });
    ok.then_some(chol)
}

fn min_norm_solve(gram: DMatrix<f64>, rhs: &DVector<f64>) -> (DVector<f64>, usize) {
    let eig = SymmetricEigen::new(gram);
    let largest = eig.eigenvalues.iter().fold(0.0_f64, |m, &v| m.max(v));
    let cutoff = EIGEN_TOL * largest;
    let proj = eig.eigenvectors.tr_mul(rhs);
    let mut scaled = DVector::zeros(proj.len());
    let mut rank = 0;
    for (i, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda > cutoff && lambda > 0.0 {
            scaled[i] = proj[i] / lambda;
            rank += 1;
        }
    }
    (&eig.eigenvectors * scaled, rank)
}

//! Small dense helpers shared by the estimator and risk code. Every
//! factorization here is of an n×n (or 2n×2n) matrix; nothing p×p is formed.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{Error, Result};

/// Largest condition number accepted for an unregularized Gram matrix.
pub const MAX_CONDITION: f64 = 1e12;

/// Relative diagonal jitter, applied as `JITTER_SCALE · tr(G) / n`.
pub const JITTER_SCALE: f64 = 1e-12;

/// `A · diag(w) · Bᵀ` for row-major design-like matrices `A` (r×p) and `B` (s×p).
/// Only the first `support` columns are touched; the weights past it must be zero.
pub fn weighted_cross(a: &DMatrix<f64>, b: &DMatrix<f64>, w: &[f64], support: usize) -> DMatrix<f64> {
    let s = support.min(w.len()).min(a.ncols());
    let mut scaled = a.columns(0, s).clone_owned();
    for (j, mut col) in scaled.column_iter_mut().enumerate() {
        col *= w[j];
    }
    scaled * b.columns(0, s).transpose()
}

/// Cholesky factor of a symmetric positive-definite matrix, with the shift and
/// jitter that were applied recorded alongside.
#[derive(Debug, Clone)]
pub struct SpdFactor {
    chol: Cholesky<f64, Dyn>,
    pub shift: f64,
    pub jitter: f64,
}

impl SpdFactor {
    /// Factor `gram + shift·I`. When `shift == 0` the condition number is
    /// checked against [`MAX_CONDITION`]; with `jitter` set, an ill-conditioned
    /// Gram gets `JITTER_SCALE·tr(G)/n` added to its diagonal instead of failing.
    pub fn new(gram: &DMatrix<f64>, shift: f64, jitter: bool) -> Result<Self> {
        let n = gram.nrows();
        if n == 0 || gram.ncols() != n {
            return Err(Error::Dimension(format!(
                "Gram matrix must be square and non-empty, got {}×{}",
                gram.nrows(),
                gram.ncols()
            )));
        }
        let mut applied_jitter = 0.0;
        if shift == 0.0 {
            if let Err(err) = check_condition(gram) {
                if !jitter {
                    return Err(err);
                }
                applied_jitter = JITTER_SCALE * gram.trace() / n as f64;
            }
        }
        let mut shifted = gram.clone();
        for i in 0..n {
            shifted[(i, i)] += shift + applied_jitter;
        }
        let chol = Cholesky::new(shifted).ok_or_else(|| Error::SingularGram {
            condition: f64::INFINITY,
            limit: MAX_CONDITION,
            rows: offending_rows(gram),
        })?;
        Ok(SpdFactor {
            chol,
            shift,
            jitter: applied_jitter,
        })
    }

    pub fn dim(&self) -> usize {
        self.chol.l_dirty().nrows()
    }

    pub fn solve_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(b)
    }

    pub fn solve(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(b)
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        self.chol.inverse()
    }
}

/// Spectral condition number of a symmetric positive semi-definite matrix.
pub fn condition_number(gram: &DMatrix<f64>) -> f64 {
    let eig = SymmetricEigen::new(gram.clone());
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

fn check_condition(gram: &DMatrix<f64>) -> Result<()> {
    let condition = condition_number(gram);
    if condition.is_finite() && condition <= MAX_CONDITION {
        Ok(())
    } else {
        Err(Error::SingularGram {
            condition,
            limit: MAX_CONDITION,
            rows: offending_rows(gram),
        })
    }
}

/// Rows carrying most of the weight of the Gram's weakest eigenvector.
fn offending_rows(gram: &DMatrix<f64>) -> Vec<usize> {
    let eig = SymmetricEigen::new(gram.clone());
    let weakest = eig.eigenvalues.imin();
    let v = eig.eigenvectors.column(weakest);
    let peak = v.amax();
    v.iter()
        .enumerate()
        .filter(|(_, x)| x.abs() >= 0.25 * peak)
        .map(|(i, _)| i)
        .collect()
}

/// Pairwise (cascade) summation; the result depends only on the slice order.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const LEAF: usize = 16;
    if values.len() <= LEAF {
        values.iter().sum()
    } else {
        let mid = values.len() / 2;
        pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
    }
}

/// Mean and standard error of the mean, using pairwise sums.
pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = pairwise_sum(values) / n;
    if values.len() < 2 {
        return (mean, f64::NAN);
    }
    let sq: Vec<f64> = values.iter().map(|v| (v - mean).powi(2)).collect();
    let var = pairwise_sum(&sq) / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Trace of a product `tr(A·B)` without forming it.
pub fn trace_of_product(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.component_mul(&b.transpose()).sum()
}

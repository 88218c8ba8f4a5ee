//! Dense complex linear algebra used by the rate model and the beamformer updates.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::NumericsError;

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

/// Dense complex matrix. Channel, transmit and receive matrices are all stored this way.
pub type ComplexMatrix = CMat;

/// Builds a `rows x cols` matrix from column-major entries, rejecting NaN/Inf.
pub fn complex_matrix(rows: usize, cols: usize, entries: &[C64]) -> Result<CMat, NumericsError> {
    if entries.len() != rows * cols {
        return Err(NumericsError::DimensionMismatch {
            expected: rows * cols,
            found: entries.len(),
        });
    }
    if entries.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(NumericsError::NonFinite);
    }
    Ok(CMat::from_column_slice(rows, cols, entries))
}

/// Solves `A x = b` for Hermitian positive-definite `A` through a Cholesky factorization.
pub fn solve_hpd_system(a: &CMat, b: &CVec) -> Result<CVec, NumericsError> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(NumericsError::NotSquare {
            rows: n,
            cols: a.ncols(),
        });
    }
    if b.len() != n {
        return Err(NumericsError::DimensionMismatch {
            expected: n,
            found: b.len(),
        });
    }
    let l = cholesky_lower(a)?;
    // Forward substitution L y = b, then back substitution L^H x = y.
    let mut y = b.clone();
    for i in 0..n {
        let mut acc = y[i];
        for k in 0..i {
            acc -= l[(i, k)] * y[k];
        }
        y[i] = acc / l[(i, i)].re;
    }
    let mut x = y;
    for i in (0..n).rev() {
        let mut acc = x[i];
        for k in i + 1..n {
            acc -= l[(k, i)].conj() * x[k];
        }
        x[i] = acc / l[(i, i)].re;
    }
    Ok(x)
}

/// Lower-triangular `L` with `A = L L^H`; only the lower triangle of `A` is read.
pub fn cholesky_lower(a: &CMat) -> Result<CMat, NumericsError> {
    let n = a.nrows();
    let mut l = CMat::zeros(n, n);
    for j in 0..n {
        let mut pivot = a[(j, j)].re;
        for k in 0..j {
            pivot -= l[(j, k)].norm_sqr();
        }
        if !(pivot > 0.0) {
            return Err(NumericsError::NotPositiveDefinite);
        }
        let d = pivot.sqrt();
        l[(j, j)] = C64::new(d, 0.0);
        for i in j + 1..n {
            let mut acc = a[(i, j)];
            for k in 0..j {
                acc -= l[(i, k)] * l[(j, k)].conj();
            }
            l[(i, j)] = acc / d;
        }
    }
    Ok(l)
}

/// Frobenius norm squared, `||A||_F^2`.
pub fn fro_norm_sqr(a: &CMat) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum()
}

/// Leading singular triplets of `h`, sorted by decreasing singular value.
#[derive(Debug, Clone)]
pub struct TopSingular {
    pub values: Vec<f64>,
    /// `rows x count` left singular vectors.
    pub left: CMat,
    /// `cols x count` right singular vectors.
    pub right: CMat,
}

/// Top-`count` singular values and vectors of `h`.
///
/// When `count` exceeds `min(rows, cols)` the missing directions are padded
/// with zero singular values and orthonormal completions of the identity.
pub fn top_singular(h: &CMat, count: usize) -> TopSingular {
    let (m, n) = h.shape();
    let svd = h.clone().svd(true, true);
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested V^H");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| {
        svd.singular_values[b]
            .partial_cmp(&svd.singular_values[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut values = Vec::with_capacity(count);
    let mut left = CMat::zeros(m, count);
    let mut right = CMat::zeros(n, count);
    for (slot, &idx) in order.iter().take(count).enumerate() {
        values.push(svd.singular_values[idx]);
        left.set_column(slot, &u.column(idx));
        // v_t holds V^H, so its row conjugated is the right singular vector.
        let row = v_t.row(idx);
        for r in 0..n {
            right[(r, slot)] = row[r].conj();
        }
    }
    for slot in values.len()..count {
        values.push(0.0);
        if slot < m {
            left[(slot, slot)] = C64::new(1.0, 0.0);
        }
        if slot < n {
            right[(slot, slot)] = C64::new(1.0, 0.0);
        }
    }
    TopSingular {
        values,
        left,
        right,
    }
}

/// `a^H b` for two complex vectors given as matrix columns.
pub fn inner(a: &CVec, b: &CVec) -> C64 {
    a.dotc(b)
}

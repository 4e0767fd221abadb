//! Dense small-matrix numerics: orthogonal projection, Haar-uniform O(d)
//! sampling, and the eigendecompositions used by the column-rescaling
//! subroutine and the convergence diagnostics.

use nalgebra::{Complex, DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Singular-value ratio below which the least-squares projection onto O(d)
/// is treated as non-unique.
pub const PROJECTION_SINGULARITY_TOL: f64 = 1e-12;

/// Relative tolerance on imaginary parts when deciding whether a spectrum is
/// real (and on real parts for positivity).
pub const EIGEN_REAL_TOL: f64 = 1e-9;

/// Relative pairwise gap below which eigenvalues count as coincident.
pub const EIGEN_DISTINCT_TOL: f64 = 1e-7;

/// Relative symmetry tolerance accepted by [`symmetric_eigen`].
pub const SYMMETRY_TOL: f64 = 1e-9;

fn ensure_square(m: &DMatrix<f64>) -> Result<usize> {
    if m.nrows() != m.ncols() {
        return Err(Error::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    Ok(m.nrows())
}

/// Largest singular value of a (possibly rectangular) matrix.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    let svd = m.clone().svd(false, false);
    svd.singular_values.max()
}

/// Least-squares projection onto O(d): for `M = W1 S W2^T` returns `W1 W2^T`,
/// the orthogonal maximizer of `trace(Q^T M)`.
///
/// Fails with [`Error::DegenerateProjection`] when the smallest singular value
/// is below `PROJECTION_SINGULARITY_TOL` times the largest, since the nearest
/// orthogonal matrix is then not unique.
pub fn project_orthogonal(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    project_orthogonal_with_tol(m, PROJECTION_SINGULARITY_TOL)
}

/// [`project_orthogonal`] with an explicit singularity gate; `tol = 0` accepts
/// any finite input and always returns an orthogonal factor.
pub fn project_orthogonal_with_tol(m: &DMatrix<f64>, tol: f64) -> Result<DMatrix<f64>> {
    ensure_square(m)?;
    let svd = m.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smax.is_finite()) {
        return Err(Error::Singular {
            context: "orthogonal projection of non-finite matrix",
        });
    }
    if smax == 0.0 || smin < tol * smax {
        return Err(Error::DegenerateProjection {
            sigma_ratio: if smax == 0.0 { 0.0 } else { smin / smax },
        });
    }
    let u = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v_t requested");
    Ok(u * v_t)
}

/// Haar-uniform sample from O(d): QR of a Gaussian matrix with the R-diagonal
/// sign correction. Determinants +1 and -1 each occur with probability 1/2.
pub fn random_orthogonal<R: Rng + ?Sized>(d: usize, rng: &mut R) -> DMatrix<f64> {
    assert!(d >= 1, "dimension must be positive");
    let g = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    // Fixing diag(R) > 0 makes the factorization unique, hence Haar.
    for k in 0..d {
        if r[(k, k)] < 0.0 {
            for i in 0..d {
                q[(i, k)] = -q[(i, k)];
            }
        }
    }
    q
}

/// Eigendecomposition `M = P^{-1} D P` of a real square matrix, with the rows
/// of `P` holding normalized left eigenvectors.
///
/// The factor pair is only produced when the spectrum is real and simple
/// (that is exactly when the downstream rescaling step needs it); the flags
/// are always populated from the full complex spectrum.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    /// Sorted descending by real part, then imaginary part.
    pub eigenvalues: Vec<Complex<f64>>,
    /// Rows are left eigenvectors, unit norm, first nonzero component
    /// positive; present when the spectrum is real and simple and the
    /// eigenvector matrix is invertible at working precision.
    pub p: Option<DMatrix<f64>>,
    pub p_inv: Option<DMatrix<f64>>,
    pub all_real: bool,
    pub all_distinct: bool,
    pub all_positive: bool,
}

impl EigenDecomposition {
    /// Real parts of the eigenvalues when the spectrum is real.
    pub fn real_eigenvalues(&self) -> Option<Vec<f64>> {
        if self.all_real {
            Some(self.eigenvalues.iter().map(|z| z.re).collect())
        } else {
            None
        }
    }
}

/// Full eigendecomposition with the default tolerances.
pub fn general_eigen(m: &DMatrix<f64>) -> Result<EigenDecomposition> {
    general_eigen_with(m, EIGEN_REAL_TOL, EIGEN_DISTINCT_TOL)
}

/// Full eigendecomposition with explicit relative tolerances for the
/// real/distinct/positive flags.
pub fn general_eigen_with(
    m: &DMatrix<f64>,
    real_tol: f64,
    distinct_tol: f64,
) -> Result<EigenDecomposition> {
    let d = ensure_square(m)?;
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::Singular {
            context: "eigendecomposition of non-finite matrix",
        });
    }
    let scale = spectral_norm(m);
    let schur = nalgebra::Schur::try_new(m.clone(), f64::EPSILON, 100_000)
        .ok_or(Error::EigenFailed)?;
    let mut eigenvalues: Vec<Complex<f64>> = schur.complex_eigenvalues().iter().copied().collect();
    eigenvalues.sort_by(|a, b| {
        b.re.partial_cmp(&a.re)
            .unwrap()
            .then(b.im.partial_cmp(&a.im).unwrap())
    });

    let tau_r = real_tol * scale;
    let tau_g = distinct_tol * scale;
    let all_real = eigenvalues.iter().all(|z| z.im.abs() <= tau_r);
    let mut all_distinct = true;
    for i in 0..eigenvalues.len() {
        for j in i + 1..eigenvalues.len() {
            if (eigenvalues[i] - eigenvalues[j]).norm() <= tau_g {
                all_distinct = false;
            }
        }
    }
    let all_positive = eigenvalues.iter().all(|z| z.re > tau_r);

    // A spectrum can be simple per tolerance while the eigenvector matrix is
    // defective at working precision; the factors are then withheld instead
    // of failing, since the flags remain valid.
    let (p, p_inv) = if all_real && all_distinct && d > 0 {
        build_left_factors(m, &eigenvalues).unwrap_or((None, None))
    } else {
        (None, None)
    };

    Ok(EigenDecomposition {
        eigenvalues,
        p,
        p_inv,
        all_real,
        all_distinct,
        all_positive,
    })
}

fn build_left_factors(
    m: &DMatrix<f64>,
    eigenvalues: &[Complex<f64>],
) -> Result<(Option<DMatrix<f64>>, Option<DMatrix<f64>>)> {
    let d = m.nrows();
    let mut rows = DMatrix::zeros(d, d);
    for (s, z) in eigenvalues.iter().enumerate() {
        let w = left_eigenvector(m, z.re)?;
        rows.row_mut(s).copy_from(&w.transpose());
    }
    match rows.clone().try_inverse() {
        Some(inv) => Ok((Some(rows), Some(inv))),
        None => Ok((None, None)),
    }
}

/// Unit-norm left eigenvector of `m` for the (real, simple) eigenvalue
/// `lambda`, sign-fixed so the first nonzero component is positive.
fn left_eigenvector(m: &DMatrix<f64>, lambda: f64) -> Result<DVector<f64>> {
    let d = m.nrows();
    let shifted = m.transpose() - DMatrix::from_diagonal_element(d, d, lambda);
    let svd = shifted.svd(false, true);
    let v_t = svd.v_t.expect("v_t requested");
    // Right singular vector of the smallest singular value spans the kernel.
    let mut min_idx = 0;
    for (k, s) in svd.singular_values.iter().enumerate() {
        if *s < svd.singular_values[min_idx] {
            min_idx = k;
        }
    }
    let mut w = v_t.row(min_idx).transpose();
    let norm = w.norm();
    if norm == 0.0 {
        return Err(Error::EigenFailed);
    }
    w /= norm;
    let thresh = 1e-12;
    if let Some(first) = w.iter().find(|x| x.abs() > thresh) {
        if *first < 0.0 {
            w = -w;
        }
    }
    Ok(w)
}

/// Eigendecomposition of a symmetric matrix: ascending eigenvalues and the
/// matching orthonormal eigenvector columns. Asymmetric input is rejected.
pub fn symmetric_eigen(s: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    ensure_square(s)?;
    let scale = s.norm();
    let asym = (s - s.transpose()).norm();
    if scale > 0.0 && asym > SYMMETRY_TOL * scale {
        return Err(Error::AsymmetricInput {
            residual: asym / scale,
        });
    }
    // Work on the symmetrized matrix so tiny asymmetries cannot leak through.
    let sym = (s + s.transpose()) * 0.5;
    let eig = nalgebra::SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
    let values: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let n = s.nrows();
    let mut vectors = DMatrix::zeros(n, n);
    for (col, &k) in order.iter().enumerate() {
        vectors.column_mut(col).copy_from(&eig.eigenvectors.column(k));
    }
    Ok((values, vectors))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn frob(m: &DMatrix<f64>) -> f64 {
        m.norm()
    }

    #[test]
    fn project_identity_is_fixed_point() {
        let id = DMatrix::<f64>::identity(4, 4);
        let q = project_orthogonal(&id).unwrap();
        assert!(frob(&(q - id)) <= 1e-12);
    }

    #[test]
    fn project_positive_diagonal() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 0.5]));
        let q = project_orthogonal(&m).unwrap();
        assert!(frob(&(q - DMatrix::identity(2, 2))) <= 1e-12);
    }

    #[test]
    fn project_rotation_like_input() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, -3.0, 2.0, 0.0]);
        let expected = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        let q = project_orthogonal(&m).unwrap();
        assert!(frob(&(q.clone() - expected)) <= 1e-12);
        // Cross-check against a coarse maximizer of trace(Q^T M) over O(2).
        let best = brute_force_o2(&m, 20_000);
        assert!(frob(&(q - best)) <= 1e-3);
    }

    /// Grid search over rotations and reflections.
    fn brute_force_o2(m: &DMatrix<f64>, steps: usize) -> DMatrix<f64> {
        let mut best = DMatrix::identity(2, 2);
        let mut best_tr = f64::NEG_INFINITY;
        for k in 0..steps {
            let th = 2.0 * std::f64::consts::PI * (k as f64) / (steps as f64);
            let (s, c) = th.sin_cos();
            for refl in [false, true] {
                let q = if refl {
                    DMatrix::from_row_slice(2, 2, &[c, s, s, -c])
                } else {
                    DMatrix::from_row_slice(2, 2, &[c, -s, s, c])
                };
                let tr = (q.transpose() * m).trace();
                if tr > best_tr {
                    best_tr = tr;
                    best = q;
                }
            }
        }
        best
    }

    #[test]
    fn project_rejects_singular() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        assert!(matches!(
            project_orthogonal(&m),
            Err(Error::DegenerateProjection { .. })
        ));
    }

    #[test]
    fn project_orthogonality_and_equivariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..100 {
            let d = rng.random_range(1..=6);
            let m = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
            let q = match project_orthogonal(&m) {
                Ok(q) => q,
                Err(_) => continue,
            };
            assert!(frob(&(q.transpose() * &q - DMatrix::identity(d, d))) <= 1e-10);
            let rot = random_orthogonal(d, &mut rng);
            let lhs = project_orthogonal(&(&rot * &m)).unwrap();
            assert!(frob(&(lhs - &rot * &q)) <= 1e-8);
        }
    }

    #[test]
    fn project_idempotent_on_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(18);
        for d in 1..=6 {
            let q = random_orthogonal(d, &mut rng);
            let p = project_orthogonal(&q).unwrap();
            assert!(frob(&(p - q)) <= 1e-10);
        }
    }

    #[test]
    fn haar_o1_is_sign_flip() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut plus = 0usize;
        for _ in 0..10_000 {
            let q = random_orthogonal(1, &mut rng);
            let v = q[(0, 0)];
            assert!((v.abs() - 1.0).abs() <= 1e-12);
            if v > 0.0 {
                plus += 1;
            }
        }
        // ~50/50 within 5 sigma of a fair binomial.
        assert!((plus as f64 - 5000.0).abs() < 5.0 * 50.0);
    }

    #[test]
    fn haar_reproducible_and_unimodular() {
        let a = random_orthogonal(3, &mut ChaCha8Rng::seed_from_u64(123));
        let b = random_orthogonal(3, &mut ChaCha8Rng::seed_from_u64(123));
        assert_eq!(a, b);
        assert!((a.determinant().abs() - 1.0).abs() <= 1e-10);
    }

    #[test]
    fn haar_gram_off_diagonal_statistic() {
        // Monte-Carlo: averaged off-diagonal entries of Q^T Q vanish.
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let d = 4;
        let mut acc = 0.0;
        let mut count = 0usize;
        for _ in 0..1000 {
            let q = random_orthogonal(d, &mut rng);
            let g = q.transpose() * &q;
            for i in 0..d {
                for j in 0..d {
                    if i != j {
                        acc += g[(i, j)];
                        count += 1;
                    }
                }
            }
        }
        assert!((acc / count as f64).abs() < 1e-9);
    }

    #[test]
    fn eigen_diagonal() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 2.0, 1.0]));
        let e = general_eigen(&m).unwrap();
        let vals = e.real_eigenvalues().unwrap();
        assert_abs_diff_eq!(vals[0], 3.0, epsilon = 1e-10);
        assert_abs_diff_eq!(vals[1], 2.0, epsilon = 1e-10);
        assert_abs_diff_eq!(vals[2], 1.0, epsilon = 1e-10);
        assert!(e.all_real && e.all_distinct && e.all_positive);
    }

    #[test]
    fn eigen_rotation_is_complex() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        let e = general_eigen(&m).unwrap();
        assert!(!e.all_real);
        assert_abs_diff_eq!(e.eigenvalues[0].im.abs(), 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(e.eigenvalues[0].re, 0.0, epsilon = 1e-10);
    }

    #[test]
    fn eigen_jordan_block_not_distinct() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 0.0, 2.0]);
        let e = general_eigen(&m).unwrap();
        assert!(!e.all_distinct);
        assert_abs_diff_eq!(e.eigenvalues[0].re, 2.0, epsilon = 1e-8);
        assert_abs_diff_eq!(e.eigenvalues[1].re, 2.0, epsilon = 1e-8);
    }

    #[test]
    fn eigen_reconstruction_on_random_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let mut checked = 0usize;
        for _ in 0..1000 {
            let d = rng.random_range(1..=8);
            let m = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
            let e = general_eigen(&m).unwrap();
            if let (Some(p), Some(p_inv)) = (&e.p, &e.p_inv) {
                let diag = DMatrix::from_diagonal(&DVector::from_iterator(
                    d,
                    e.eigenvalues.iter().map(|z| z.re),
                ));
                let rec = p_inv * diag * p;
                assert!(frob(&(rec - &m)) <= 1e-8 * frob(&m).max(1.0));
                checked += 1;
            }
        }
        assert!(checked > 100, "too few real-simple spectra: {checked}");
    }

    #[test]
    fn symmetric_eigen_hand_case() {
        // det(S - xI) = x^2 - 4x, roots 0 and 4.
        let s = DMatrix::from_row_slice(2, 2, &[2.0, -2.0, -2.0, 2.0]);
        let (vals, vecs) = symmetric_eigen(&s).unwrap();
        assert_abs_diff_eq!(vals[0], 0.0, epsilon = 1e-10);
        assert_abs_diff_eq!(vals[1], 4.0, epsilon = 1e-10);
        let d = DMatrix::from_diagonal(&DVector::from_vec(vals));
        assert!(frob(&(&s * &vecs - &vecs * d)) <= 1e-8);
        assert!(frob(&(vecs.transpose() * &vecs - DMatrix::identity(2, 2))) <= 1e-10);
    }

    #[test]
    fn symmetric_eigen_identity_and_diagonal() {
        let (vals, _) = symmetric_eigen(&DMatrix::identity(5, 5)).unwrap();
        assert!(vals.iter().all(|&v| (v - 1.0).abs() <= 1e-12));
        let s = DMatrix::from_diagonal(&DVector::from_vec(vec![5.0, -1.0]));
        let (vals, _) = symmetric_eigen(&s).unwrap();
        assert_abs_diff_eq!(vals[0], -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(vals[1], 5.0, epsilon = 1e-12);
    }

    #[test]
    fn symmetric_eigen_rejects_asymmetric() {
        let s = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(matches!(
            symmetric_eigen(&s),
            Err(Error::AsymmetricInput { .. })
        ));
    }

    #[test]
    fn symmetric_matches_general_on_symmetric_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let d = rng.random_range(2..=6);
            let g = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
            let s = &g + g.transpose();
            let (vals, _) = symmetric_eigen(&s).unwrap();
            let e = general_eigen(&s).unwrap();
            assert!(e.all_real);
            let mut gen_vals = e.real_eigenvalues().unwrap();
            gen_vals.reverse();
            for (a, b) in vals.iter().zip(&gen_vals) {
                assert!((a - b).abs() <= 1e-7 * spectral_norm(&s).max(1.0));
            }
        }
    }

    #[test]
    fn spectral_norm_cases() {
        assert_abs_diff_eq!(spectral_norm(&DMatrix::identity(3, 3)), 1.0, epsilon = 1e-10);
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, -7.0]));
        assert_abs_diff_eq!(spectral_norm(&m), 7.0, epsilon = 1e-10);
        // Singular values from the eigenvalues of M^T M: sqrt of {9, 4}.
        let m = DMatrix::from_row_slice(2, 2, &[0.0, -3.0, 2.0, 0.0]);
        let (vals, _) = symmetric_eigen(&(m.transpose() * &m)).unwrap();
        let oracle = vals.last().unwrap().sqrt();
        assert_abs_diff_eq!(spectral_norm(&m), oracle, epsilon = 1e-8);
        assert_abs_diff_eq!(spectral_norm(&m), 3.0, epsilon = 1e-10);
    }
}

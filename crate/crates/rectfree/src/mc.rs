//! Monte Carlo estimators for finite-size spherical integrals and
//! singular-value laws, plus the explicit 2x2 block diagonalization used to
//! reduce bidiagonal-plus-perturbation forms.
//!
//! The finite-`n` spherical integral admits a sphere-vector representation:
//!
//! ```text
//! I_n(theta) = (1/n) log E exp[ sqrt(nm) theta Re sum_k u_k s_k v_k ]
//! ```
//!
//! with `u` uniform on the unit sphere of `K^n`, `v` the first `n`
//! coordinates of a uniform vector on the unit sphere of `K^m`, and `s_k` the
//! singular values of the deterministic matrix. No `n x m` matrices are ever
//! materialized; each sample costs `O(m)` Gaussians and one dot product. The
//! expectation of the exponential is taken in log-sum-exp form so large
//! `theta sqrt(nm)` cannot overflow.
//!
//! Reproducibility contract: every estimator derives one ChaCha substream per
//! sample index from `(seed, index)`, collects per-sample statistics into a
//! vector indexed by sample, and reduces that vector sequentially. The result
//! is bit-identical no matter how many threads filled the vector. The env var
//! `RECTFREE_THREADS` picks the thread count per call (`0` or unset means
//! sequential); the `parallel` cargo feature gates the rayon dependency
//! entirely.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::measure::DiscreteMeasure;

/// Ground field of the matrix ensemble; `beta` is the usual Dyson index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScalarField {
    Real,
    Complex,
}

impl ScalarField {
    pub fn beta(self) -> u8 {
        match self {
            ScalarField::Real => 1,
            ScalarField::Complex => 2,
        }
    }
}

/// A deterministic rectangular matrix described by its singular values: the
/// `n x m` matrix `diag(s) | 0` over the given field.
#[derive(Debug, Clone)]
pub struct MatrixModel {
    singular_values: Vec<f64>,
    m: usize,
    field: ScalarField,
}

impl MatrixModel {
    pub fn new(singular_values: Vec<f64>, m: usize, field: ScalarField) -> Result<Self> {
        if singular_values.is_empty() {
            return Err(Error::invalid("a matrix model needs at least one row"));
        }
        if m < singular_values.len() {
            return Err(Error::invalid(format!(
                "column count {m} is smaller than row count {}",
                singular_values.len()
            )));
        }
        for &s in &singular_values {
            if !(s.is_finite() && s >= 0.0) {
                return Err(Error::invalid(format!("bad singular value {s}")));
            }
        }
        Ok(MatrixModel {
            singular_values,
            m,
            field,
        })
    }

    /// Realize a measure as the singular values of an `n x m` model by
    /// sampling its quantile function at the midpoints `(i + 1/2)/n`.
    pub fn from_measure_quantiles(
        mu: &DiscreteMeasure,
        n: usize,
        m: usize,
        field: ScalarField,
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("a matrix model needs at least one row"));
        }
        let values: Vec<f64> = (0..n)
            .map(|i| mu.quantile((i as f64 + 0.5) / n as f64))
            .collect();
        MatrixModel::new(values, m, field)
    }

    pub fn n(&self) -> usize {
        self.singular_values.len()
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn field(&self) -> ScalarField {
        self.field
    }

    pub fn singular_values(&self) -> &[f64] {
        &self.singular_values
    }

    /// Finite-size stand-in for the aspect ratio lambda.
    pub fn ratio(&self) -> f64 {
        self.n() as f64 / self.m as f64
    }
}

/// A Monte Carlo estimate with its delta-method standard error and enough
/// metadata to reproduce it.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct McEstimate {
    pub value: f64,
    pub std_error: f64,
    pub samples: usize,
    pub seed: u64,
}

// ===== RNG plumbing =====

/// Substream for one sample: same 256-bit key, per-index stream. Streams are
/// offset by one so the plain seeded generator never aliases a sample.
fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index.wrapping_add(1));
    rng
}

fn thread_count() -> usize {
    std::env::var("RECTFREE_THREADS")
        .ok()
        .and_then(|s| s.trim().parse::<usize>().ok())
        .unwrap_or(0)
}

/// Fill `samples` slots by applying `task` to each sample index, in parallel
/// when `RECTFREE_THREADS` asks for it and the `parallel` feature is
/// compiled in. Order of the result is by index either way, so downstream
/// sequential reductions see identical input.
fn fill_per_sample<F>(samples: usize, task: F) -> Vec<f64>
where
    F: Fn(u64) -> f64 + Sync,
{
    #[cfg(feature = "parallel")]
    {
        let threads = thread_count();
        if threads >= 1 {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build();
            if let Ok(pool) = pool {
                use rayon::iter::{IntoParallelIterator, ParallelIterator};
                return pool
                    .install(|| (0..samples as u64).into_par_iter().map(&task).collect());
            }
        }
    }
    #[cfg(not(feature = "parallel"))]
    let _ = thread_count; // the env var is simply ignored without the feature
    (0..samples as u64).map(task).collect()
}

// ===== sphere and Haar sampling =====

/// Uniform vector on the unit sphere of `R^dim`: a normalized standard
/// Gaussian. The resample loop guards the measure-zero underflow case.
pub fn sample_unit_sphere_real(rng: &mut ChaCha8Rng, dim: usize) -> DVector<f64> {
    assert!(dim >= 1, "sphere dimension must be positive");
    loop {
        let v = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        let norm = v.norm();
        if norm > 1e-150 {
            return v / norm;
        }
    }
}

/// Uniform vector on the unit sphere of `C^dim`.
pub fn sample_unit_sphere_complex(rng: &mut ChaCha8Rng, dim: usize) -> DVector<Complex64> {
    assert!(dim >= 1, "sphere dimension must be positive");
    loop {
        let v = DVector::from_fn(dim, |_, _| {
            Complex64::new(
                rng.sample::<f64, _>(StandardNormal),
                rng.sample::<f64, _>(StandardNormal),
            )
        });
        let norm = v.norm();
        if norm > 1e-150 {
            return v.unscale(norm);
        }
    }
}

/// Haar-distributed orthogonal matrix: QR of a Gaussian matrix with each
/// column of `Q` flipped to make the corresponding diagonal of `R` positive.
/// Without the sign correction the QR factorization is biased.
pub fn sample_haar_real(rng: &mut ChaCha8Rng, dim: usize) -> DMatrix<f64> {
    assert!(dim >= 1, "Haar dimension must be positive");
    let g = DMatrix::from_fn(dim, dim, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..dim {
        if r[(j, j)] < 0.0 {
            for i in 0..dim {
                q[(i, j)] = -q[(i, j)];
            }
        }
    }
    q
}

/// Haar-distributed unitary matrix; the diagonal phases of `R` are absorbed
/// into the columns of `Q`.
pub fn sample_haar_complex(rng: &mut ChaCha8Rng, dim: usize) -> DMatrix<Complex64> {
    assert!(dim >= 1, "Haar dimension must be positive");
    let g = DMatrix::from_fn(dim, dim, |_, _| {
        Complex64::new(
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
        )
    });
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..dim {
        let d = r[(j, j)];
        let mag = d.norm();
        let phase = if mag > 0.0 {
            d / mag
        } else {
            Complex64::new(1.0, 0.0)
        };
        for i in 0..dim {
            q[(i, j)] *= phase;
        }
    }
    q
}

// ===== the spherical-integral estimator =====

/// One sample of the exponent `sqrt(nm) theta Re <u, diag(s) v>`.
fn sphere_exponent(model: &MatrixModel, theta: f64, rng: &mut ChaCha8Rng) -> f64 {
    let n = model.n();
    let m = model.m();
    let scale = ((n * m) as f64).sqrt() * theta;
    match model.field {
        ScalarField::Real => {
            let u = sample_unit_sphere_real(rng, n);
            let v = sample_unit_sphere_real(rng, m);
            let mut dot = 0.0;
            for k in 0..n {
                dot += u[k] * model.singular_values[k] * v[k];
            }
            scale * dot
        }
        ScalarField::Complex => {
            let u = sample_unit_sphere_complex(rng, n);
            let v = sample_unit_sphere_complex(rng, m);
            let mut dot = Complex64::new(0.0, 0.0);
            for k in 0..n {
                dot += u[k] * model.singular_values[k] * v[k];
            }
            scale * dot.re
        }
    }
}

/// Estimate the normalized spherical integral `I_n(theta)` by plain Monte
/// Carlo over the sphere-vector representation.
///
/// The sample mean of the exponential is accumulated in log-sum-exp form and
/// the standard error follows by the delta method: the error of
/// `log(mean e^S)` is `sd(e^S) / (sqrt(N) mean e^S)`, divided by `n`.
pub fn estimate_in(model: &MatrixModel, theta: f64, samples: usize, seed: u64) -> Result<McEstimate> {
    if samples < 1 {
        return Err(Error::invalid("need at least one sample"));
    }
    if !theta.is_finite() {
        return Err(Error::invalid(format!("non-finite theta = {theta}")));
    }
    let exponents = fill_per_sample(samples, |i| {
        let mut rng = sample_rng(seed, i);
        sphere_exponent(model, theta, &mut rng)
    });

    let peak = exponents.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for &s in &exponents {
        let e = (s - peak).exp();
        sum += e;
        sum_sq += e * e;
    }
    let count = samples as f64;
    let mean = sum / count;
    let value = (peak + mean.ln()) / model.n() as f64;
    let std_error = if samples > 1 {
        let var = (sum_sq - count * mean * mean).max(0.0) / (count - 1.0);
        (var / count).sqrt() / mean / model.n() as f64
    } else {
        0.0
    };
    Ok(McEstimate {
        value,
        std_error,
        samples,
        seed,
    })
}

// ===== classical second cumulant of the trace functional =====

/// Estimate `c_2` through its classical-cumulant interpretation:
/// `c_2(mu) = m beta Var(X)` with `X = Re <u, diag(s) v>` in the same sphere
/// representation (the `k = 1` case of the cumulant correspondence).
pub fn estimate_classical_cumulant_c2(
    model: &MatrixModel,
    samples: usize,
    seed: u64,
) -> Result<McEstimate> {
    if samples < 2 {
        return Err(Error::invalid("variance estimation needs at least two samples"));
    }
    let xs = fill_per_sample(samples, |i| {
        let mut rng = sample_rng(seed, i);
        sphere_exponent(model, 1.0, &mut rng) / ((model.n() * model.m()) as f64).sqrt()
    });

    let count = samples as f64;
    let mean = xs.iter().sum::<f64>() / count;
    let mut m2 = 0.0;
    let mut m4 = 0.0;
    for &x in &xs {
        let d = x - mean;
        m2 += d * d;
        m4 += d * d * d * d;
    }
    let var = m2 / (count - 1.0);
    m4 /= count;
    let scale = model.m() as f64 * f64::from(model.field.beta());
    // variance of the sample variance, to first order
    let var_of_var = (m4 - var * var * (count - 3.0) / (count - 1.0)) / count;
    Ok(McEstimate {
        value: scale * var,
        std_error: scale * var_of_var.max(0.0).sqrt(),
        samples,
        seed,
    })
}

// ===== singular law of A + U B V =====

/// Draw one realization of the singular-value law of `A + U B V`, where `A`
/// and `B` are the `n x m` matrices `diag(vals) | 0` and `U`, `V` are
/// independent Haar matrices of sizes `n` and `m`.
///
/// `B = 0` short-circuits to the exact law of `A`; there is no randomness to
/// consume in that case.
pub fn sample_sum_singular_law(
    a_vals: &[f64],
    b_vals: &[f64],
    n: usize,
    m: usize,
    field: ScalarField,
    rng: &mut ChaCha8Rng,
) -> Result<DiscreteMeasure> {
    if n == 0 || a_vals.len() != n || b_vals.len() != n {
        return Err(Error::invalid(format!(
            "need two value sequences of length n = {n}, got {} and {}",
            a_vals.len(),
            b_vals.len()
        )));
    }
    if m < n {
        return Err(Error::invalid(format!("need n <= m, got n = {n}, m = {m}")));
    }
    if b_vals.iter().all(|&b| b == 0.0) {
        return DiscreteMeasure::from_singular_values(a_vals);
    }

    let values: Vec<f64> = match field {
        ScalarField::Real => {
            let mut s = DMatrix::<f64>::zeros(n, m);
            let u = sample_haar_real(rng, n);
            let v = sample_haar_real(rng, m);
            // A + U B V assembled without forming full n x m products of
            // diagonals: U B is U with scaled columns, then one GEMM with V.
            let mut ub = DMatrix::<f64>::zeros(n, m);
            for j in 0..n {
                for i in 0..n {
                    ub[(i, j)] = u[(i, j)] * b_vals[j];
                }
            }
            s += ub * v;
            for k in 0..n {
                s[(k, k)] += a_vals[k];
            }
            let svd = s
                .try_svd(false, false, f64::EPSILON, 0)
                .ok_or_else(|| Error::numerical("SVD did not converge"))?;
            svd.singular_values.iter().copied().collect()
        }
        ScalarField::Complex => {
            let mut s = DMatrix::<Complex64>::zeros(n, m);
            let u = sample_haar_complex(rng, n);
            let v = sample_haar_complex(rng, m);
            let mut ub = DMatrix::<Complex64>::zeros(n, m);
            for j in 0..n {
                for i in 0..n {
                    ub[(i, j)] = u[(i, j)] * b_vals[j];
                }
            }
            s += ub * v;
            for k in 0..n {
                s[(k, k)] += Complex64::new(a_vals[k], 0.0);
            }
            let svd = s
                .try_svd(false, false, f64::EPSILON, 0)
                .ok_or_else(|| Error::numerical("SVD did not converge"))?;
            svd.singular_values.iter().copied().collect()
        }
    };
    DiscreteMeasure::from_singular_values(&values)
}

// ===== explicit 2x2 block diagonalization =====

/// Orthogonal diagonalization of the coupled family
/// `T = [[a I, diag(L)], [diag(L), b I]]` (size `2p`), done per index with
/// the closed-form eigensystem of `[[a, L_i], [L_i, b]]`:
/// `Delta = (b - a)^2 + 4 L^2`, eigenvalues `r_pm = (a + b pm sqrt(Delta))/2`.
///
/// The normalizations `f_pm = 1 / sqrt(2 Delta pm 2(b-a) sqrt(Delta))` lose
/// all precision when `|L|` is tiny and the matching cancellation fires, so
/// whichever of `sqrt(Delta) pm (b-a)` would cancel is rationalized to
/// `4 L^2 / (sqrt(Delta) mp (b-a))` instead.
///
/// Returns the orthogonal `P` and the diagonal of `D` with `T = P D P^t`;
/// entry `i` of the diagonal is `r_plus_i`, entry `p + i` is `r_minus_i`.
pub fn block_diagonalize(a: f64, b: f64, couplings: &[f64]) -> Result<(DMatrix<f64>, DVector<f64>)> {
    if !a.is_finite() || !b.is_finite() {
        return Err(Error::invalid("block entries must be finite"));
    }
    if couplings.is_empty() {
        return Err(Error::invalid("need at least one coupling"));
    }
    for &l in couplings {
        if !(l.is_finite() && l != 0.0) {
            return Err(Error::invalid(format!(
                "couplings must be nonzero and finite, got {l}"
            )));
        }
    }
    let p = couplings.len();
    let mut pm = DMatrix::<f64>::zeros(2 * p, 2 * p);
    let mut diag = DVector::<f64>::zeros(2 * p);
    let d = b - a;
    for (i, &l) in couplings.iter().enumerate() {
        let delta = d * d + 4.0 * l * l;
        let root = delta.sqrt();
        // s_plus = sqrt(Delta) + d, s_minus = sqrt(Delta) - d; rationalize
        // the one that cancels
        let (s_plus, s_minus) = if d >= 0.0 {
            let s_plus = root + d;
            (s_plus, 4.0 * l * l / s_plus)
        } else {
            let s_minus = root - d;
            (4.0 * l * l / s_minus, s_minus)
        };
        let f_plus = 1.0 / (2.0 * root * s_plus).sqrt();
        let f_minus = 1.0 / (2.0 * root * s_minus).sqrt();
        // eigenvector of r_plus is (L, s_plus/2), of r_minus is (L, -s_minus/2),
        // each with norm 1/(2 f_pm)
        pm[(i, i)] = 2.0 * f_plus * l;
        pm[(p + i, i)] = f_plus * s_plus;
        pm[(i, p + i)] = 2.0 * f_minus * l;
        pm[(p + i, p + i)] = -f_minus * s_minus;
        diag[i] = (a + b + root) / 2.0;
        diag[p + i] = (a + b - root) / 2.0;
    }
    Ok((pm, diag))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transforms::TransformContext;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn ones_model(n: usize, m: usize, field: ScalarField) -> MatrixModel {
        MatrixModel::new(vec![1.0; n], m, field).unwrap()
    }

    #[test]
    fn model_validation() {
        assert!(MatrixModel::new(vec![], 4, ScalarField::Real).is_err());
        assert!(MatrixModel::new(vec![1.0; 5], 4, ScalarField::Real).is_err());
        assert!(MatrixModel::new(vec![1.0, -0.5], 4, ScalarField::Real).is_err());
        let m = MatrixModel::new(vec![1.0, 0.5], 4, ScalarField::Complex).unwrap();
        assert_eq!(m.n(), 2);
        assert_eq!(m.ratio(), 0.5);
        assert_eq!(m.field().beta(), 2);
    }

    #[test]
    fn model_from_quantiles_realizes_atoms() {
        // weights in eighths so n = 8 rows split exactly across the atoms
        let mu = DiscreteMeasure::new(vec![0.5, 1.0], vec![0.25, 0.75]).unwrap();
        let model = MatrixModel::from_measure_quantiles(&mu, 8, 16, ScalarField::Real).unwrap();
        assert_eq!(
            model.singular_values(),
            &[0.5, 0.5, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0]
        );
    }

    #[test]
    fn sphere_dim_one_is_a_sign() {
        let mut r = rng(7);
        let mut seen = [false, false];
        for _ in 0..64 {
            let u = sample_unit_sphere_real(&mut r, 1);
            assert!(u[0].abs() == 1.0);
            seen[usize::from(u[0] > 0.0)] = true;
        }
        assert!(seen[0] && seen[1]);
    }

    #[test]
    fn sphere_vectors_have_unit_norm() {
        let mut r = rng(11);
        for dim in [1, 3, 10, 64] {
            for _ in 0..25 {
                let u = sample_unit_sphere_real(&mut r, dim);
                assert!((u.norm() - 1.0).abs() < 1e-14);
                let w = sample_unit_sphere_complex(&mut r, dim);
                assert!((w.norm() - 1.0).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn sphere_first_coordinate_second_moment() {
        // E u_1^2 = 1/dim by exchangeability; Var(u_1^2) at dim = 10 is
        // 3/(dim(dim+2)) - 1/dim^2 = 0.015, so 3 sigma over 1e5 samples is
        // about 1.2e-3.
        let mut r = rng(13);
        let dim = 10;
        let samples = 100_000;
        let mut acc_re = 0.0;
        let mut acc_cx = 0.0;
        for _ in 0..samples {
            let u = sample_unit_sphere_real(&mut r, dim);
            acc_re += u[0] * u[0];
            let w = sample_unit_sphere_complex(&mut r, dim);
            acc_cx += w[0].norm_sqr();
        }
        let mean_re = acc_re / samples as f64;
        let mean_cx = acc_cx / samples as f64;
        assert!((mean_re - 0.1).abs() < 1.3e-3, "real: {mean_re}");
        assert!((mean_cx - 0.1).abs() < 1.3e-3, "complex: {mean_cx}");
    }

    #[test]
    fn haar_matrices_are_orthonormal() {
        let mut r = rng(17);
        for dim in [1, 5, 20] {
            let q = sample_haar_real(&mut r, dim);
            let gram = q.transpose() * &q;
            for i in 0..dim {
                for j in 0..dim {
                    let expected = if i == j { 1.0 } else { 0.0 };
                    assert!((gram[(i, j)] - expected).abs() < 1e-12);
                }
            }
            let q = sample_haar_complex(&mut r, dim);
            let gram = q.adjoint() * &q;
            for i in 0..dim {
                for j in 0..dim {
                    let expected = if i == j { 1.0 } else { 0.0 };
                    assert!((gram[(i, j)] - Complex64::new(expected, 0.0)).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn haar_dim_one_is_a_sign() {
        let mut r = rng(19);
        let mut seen = [false, false];
        for _ in 0..64 {
            let q = sample_haar_real(&mut r, 1);
            assert!(q[(0, 0)].abs() == 1.0);
            seen[usize::from(q[(0, 0)] > 0.0)] = true;
        }
        assert!(seen[0] && seen[1]);
    }

    #[test]
    fn haar_first_entry_matches_sphere_statistics() {
        // |Q_11|^2 has the law of a squared sphere coordinate: mean 1/dim.
        let mut r = rng(23);
        let dim = 8;
        let draws = 20_000;
        let mut acc = 0.0;
        for _ in 0..draws {
            let q = sample_haar_real(&mut r, dim);
            acc += q[(0, 0)] * q[(0, 0)];
        }
        let mean = acc / draws as f64;
        assert!((mean - 0.125).abs() < 3.5e-3, "{mean}");
    }

    #[test]
    fn estimate_in_exact_zeros() {
        let model = ones_model(8, 16, ScalarField::Real);
        let est = estimate_in(&model, 0.0, 100, 1).unwrap();
        assert_eq!(est.value, 0.0);
        assert_eq!(est.std_error, 0.0);

        let null = MatrixModel::new(vec![0.0; 8], 16, ScalarField::Real).unwrap();
        let est = estimate_in(&null, 0.7, 100, 1).unwrap();
        assert_eq!(est.value, 0.0);
        assert_eq!(est.std_error, 0.0);
    }

    #[test]
    fn estimate_in_is_reproducible() {
        let model = ones_model(8, 16, ScalarField::Real);
        let a = estimate_in(&model, 0.3, 500, 42).unwrap();
        let b = estimate_in(&model, 0.3, 500, 42).unwrap();
        assert_eq!(a.value.to_bits(), b.value.to_bits());
        assert_eq!(a.std_error.to_bits(), b.std_error.to_bits());
        let c = estimate_in(&model, 0.3, 500, 43).unwrap();
        assert_ne!(a.value.to_bits(), c.value.to_bits());
    }

    #[test]
    fn estimate_in_is_even_within_error() {
        let model = ones_model(16, 32, ScalarField::Real);
        let plus = estimate_in(&model, 0.25, 20_000, 5).unwrap();
        let minus = estimate_in(&model, -0.25, 20_000, 6).unwrap();
        let joint = (plus.std_error.powi(2) + minus.std_error.powi(2)).sqrt();
        assert!(
            (plus.value - minus.value).abs() <= 4.0 * joint,
            "{} vs {} (joint sigma {joint})",
            plus.value,
            minus.value
        );
    }

    #[test]
    fn estimate_in_converges_toward_the_limit() {
        // |I_n - I| at n = 16, 32, 64 should not grow with n beyond noise.
        let mu = DiscreteMeasure::dirac(1.0).unwrap();
        let limit = TransformContext::new(mu, 0.5, 1)
            .unwrap()
            .limit_integral(0.2)
            .unwrap();
        let mut gaps = Vec::new();
        let mut errs = Vec::new();
        for n in [16, 32, 64] {
            let model = ones_model(n, 2 * n, ScalarField::Real);
            let est = estimate_in(&model, 0.2, 30_000, 1234).unwrap();
            gaps.push((est.value - limit).abs());
            errs.push(est.std_error);
        }
        for i in 1..gaps.len() {
            let slack = 2.0 * (errs[i - 1] + errs[i]);
            assert!(
                gaps[i] <= gaps[i - 1] + slack,
                "gap grew: {:?} (slack {slack})",
                gaps
            );
        }
    }

    #[test]
    fn estimate_in_validates_input() {
        let model = ones_model(4, 8, ScalarField::Real);
        assert!(estimate_in(&model, 0.5, 0, 1).is_err());
        assert!(estimate_in(&model, f64::INFINITY, 10, 1).is_err());
    }

    #[test]
    fn c2_estimate_zero_and_scaling() {
        let null = MatrixModel::new(vec![0.0; 16], 32, ScalarField::Real).unwrap();
        let est = estimate_classical_cumulant_c2(&null, 1000, 3).unwrap();
        assert_eq!(est.value, 0.0);

        // scaling all singular values by s multiplies X by s, the variance
        // by s^2; identical seeds make the comparison exact
        let base = ones_model(16, 32, ScalarField::Real);
        let scaled = MatrixModel::new(vec![2.0; 16], 32, ScalarField::Real).unwrap();
        let e1 = estimate_classical_cumulant_c2(&base, 2000, 9).unwrap();
        let e2 = estimate_classical_cumulant_c2(&scaled, 2000, 9).unwrap();
        assert!((e2.value - 4.0 * e1.value).abs() < 1e-12);
    }

    #[test]
    fn c2_estimate_near_one_for_unit_model() {
        // c_2(delta_1) = 1; a smaller-than-acceptance configuration should
        // still land within 10%
        let model = ones_model(32, 64, ScalarField::Real);
        let est = estimate_classical_cumulant_c2(&model, 20_000, 77).unwrap();
        assert!((est.value - 1.0).abs() < 0.1, "{}", est.value);
        assert!(est.std_error > 0.0);
        assert!(estimate_classical_cumulant_c2(&model, 1, 0).is_err());
    }

    #[test]
    fn complex_model_reduces_to_doubled_real_model() {
        // I^(2)_{n,m}(theta) ~ 2 I^(1)_{2n,2m}(theta/2) with each singular
        // value doubled in multiplicity
        let cx = ones_model(8, 16, ScalarField::Complex);
        let re = ones_model(16, 32, ScalarField::Real);
        let a = estimate_in(&cx, 0.3, 20_000, 21).unwrap();
        let b = estimate_in(&re, 0.15, 20_000, 22).unwrap();
        let joint = (a.std_error.powi(2) + (2.0 * b.std_error).powi(2)).sqrt();
        assert!(
            (a.value - 2.0 * b.value).abs() <= 4.0 * joint,
            "{} vs {}",
            a.value,
            2.0 * b.value
        );
    }

    #[test]
    fn sum_law_with_zero_b_is_exact() {
        let mut r = rng(31);
        let law =
            sample_sum_singular_law(&[0.5, 1.0], &[0.0, 0.0], 2, 4, ScalarField::Real, &mut r)
                .unwrap();
        assert_eq!(law.atoms(), &[0.5, 1.0]);
        assert_eq!(law.weights(), &[0.5, 0.5]);

        let zero =
            sample_sum_singular_law(&[0.0, 0.0], &[0.0, 0.0], 2, 4, ScalarField::Real, &mut r)
                .unwrap();
        assert!(zero.is_zero());
    }

    #[test]
    fn sum_law_validates_shapes() {
        let mut r = rng(37);
        assert!(sample_sum_singular_law(&[1.0], &[1.0, 2.0], 1, 4, ScalarField::Real, &mut r).is_err());
        assert!(sample_sum_singular_law(&[1.0, 1.0], &[1.0, 1.0], 2, 1, ScalarField::Real, &mut r).is_err());
    }

    #[test]
    fn sum_law_first_moment_tracks_the_convolution() {
        // one realization at n = 60 should sit within a few percent of the
        // free-convolution prediction m_1((delta_1 plus delta_1)^2) = 2
        let n = 60;
        let m = 120;
        let ones = vec![1.0; n];
        for field in [ScalarField::Real, ScalarField::Complex] {
            let mut r = rng(41);
            let law = sample_sum_singular_law(&ones, &ones, n, m, field, &mut r).unwrap();
            let m1 = law.moment(2);
            assert!((m1 - 2.0).abs() < 0.2, "{field:?}: {m1}");
        }
    }

    #[test]
    fn block_diagonalize_swap_matrix() {
        // a = b = 0, L = 1: T = [[0,1],[1,0]], eigenvalues +-1
        let (p, d) = block_diagonalize(0.0, 0.0, &[1.0]).unwrap();
        assert!((d[0] - 1.0).abs() < 1e-15);
        assert!((d[1] + 1.0).abs() < 1e-15);
        let t = &p * DMatrix::from_diagonal(&d) * p.transpose();
        assert!((t[(0, 0)]).abs() < 1e-14);
        assert!((t[(0, 1)] - 1.0).abs() < 1e-14);
        let gram = p.transpose() * &p;
        assert!((gram[(0, 0)] - 1.0).abs() < 1e-14);
        assert!((gram[(0, 1)]).abs() < 1e-14);
    }

    #[test]
    fn block_diagonalize_matches_dense_eigensolver() {
        let mut r = rng(43);
        for _ in 0..200 {
            let a = 0.5 + 2.5 * r.random::<f64>();
            let b = 0.5 + 2.5 * r.random::<f64>();
            let count = 1 + (r.random::<u32>() % 4) as usize;
            let couplings: Vec<f64> = (0..count)
                .map(|_| {
                    let mag = 0.01 + 0.99 * r.random::<f64>();
                    if r.random::<bool>() {
                        mag
                    } else {
                        -mag
                    }
                })
                .collect();
            let (p, d) = block_diagonalize(a, b, &couplings).unwrap();
            let size = 2 * couplings.len();

            // orthogonality
            let gram = p.transpose() * &p;
            for i in 0..size {
                for j in 0..size {
                    let expected = if i == j { 1.0 } else { 0.0 };
                    assert!((gram[(i, j)] - expected).abs() < 1e-12);
                }
            }

            // reconstruction of the coupled matrix
            let mut t = DMatrix::<f64>::zeros(size, size);
            for (i, &l) in couplings.iter().enumerate() {
                t[(i, i)] = a;
                t[(couplings.len() + i, couplings.len() + i)] = b;
                t[(i, couplings.len() + i)] = l;
                t[(couplings.len() + i, i)] = l;
            }
            let rebuilt = &p * DMatrix::from_diagonal(&d) * p.transpose();
            for i in 0..size {
                for j in 0..size {
                    assert!(
                        (rebuilt[(i, j)] - t[(i, j)]).abs() < 1e-12,
                        "a={a} b={b} couplings={couplings:?}"
                    );
                }
            }

            // eigenvalues block by block against the dense solver
            for (i, &l) in couplings.iter().enumerate() {
                let block = DMatrix::from_row_slice(2, 2, &[a, l, l, b]);
                let mut eig: Vec<f64> =
                    block.symmetric_eigen().eigenvalues.iter().copied().collect();
                eig.sort_by(f64::total_cmp);
                assert!((d[couplings.len() + i] - eig[0]).abs() < 1e-12);
                assert!((d[i] - eig[1]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn block_diagonalize_survives_tiny_couplings() {
        // |L| = 1e-8 against a spread of 2: the naive f_minus would divide
        // by a fully cancelled quantity
        for (a, b) in [(0.5, 2.5), (2.5, 0.5)] {
            let (p, d) = block_diagonalize(a, b, &[1e-8]).unwrap();
            let t = &p * DMatrix::from_diagonal(&d) * p.transpose();
            assert!((t[(0, 0)] - a).abs() < 1e-12);
            assert!((t[(1, 1)] - b).abs() < 1e-12);
            assert!((t[(0, 1)] - 1e-8).abs() < 1e-12);
            let gram = p.transpose() * &p;
            assert!((gram[(0, 0)] - 1.0).abs() < 1e-12);
            assert!((gram[(1, 0)]).abs() < 1e-12);
        }
    }

    #[test]
    fn block_diagonalize_rejects_zero_couplings() {
        assert!(block_diagonalize(1.0, 2.0, &[0.5, 0.0]).is_err());
        assert!(block_diagonalize(1.0, 2.0, &[]).is_err());
        assert!(block_diagonalize(f64::NAN, 2.0, &[1.0]).is_err());
    }
}

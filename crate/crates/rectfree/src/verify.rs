//! The verification suite: ten numbered criteria exercising the analytic
//! layer against independent routes to the same numbers, and the Monte Carlo
//! layer against the analytic limits.
//!
//! Each criterion evaluates a set of clauses (one comparison each, with a
//! pinned tolerance) and reports the binding clause: the one with the worst
//! error-to-tolerance ratio. Tolerances are fixed here, in code; the only
//! knob is a global `tolerance_scale` multiplier kept as a test hook for the
//! CLI's failure path. All randomness is seeded, so a rerun reproduces the
//! report bit for bit in sequential mode.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::mc::{
    block_diagonalize, estimate_classical_cumulant_c2, estimate_in, sample_sum_singular_law,
    MatrixModel, ScalarField,
};
use crate::measure::DiscreteMeasure;
use crate::series::{
    cumulants_to_squared_moments, evaluate_cumulant_series, rect_cumulants, rect_free_convolve,
};
use crate::transforms::TransformContext;

pub const CRITERIA_COUNT: usize = 10;

/// Names indexed by criterion id (1-based).
pub const CRITERIA_NAMES: [&str; CRITERIA_COUNT] = [
    "gamma three ways",
    "R-transform corollaries",
    "quadrature vs closed form",
    "spherical integral at desk scale",
    "complex-to-real reduction",
    "convolution vs matrix model",
    "classical second cumulant",
    "block diagonalization",
    "continuity in lambda and measure",
    "moment-cumulant round trip",
];

#[derive(Debug, Clone)]
pub struct VerifyConfig {
    /// Multiplies every tolerance; 1.0 is the contract, anything else is for
    /// exercising failure handling.
    pub tolerance_scale: f64,
    /// Subset of criterion ids to run (1-based); `None` runs everything.
    pub criteria: Option<Vec<usize>>,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            tolerance_scale: 1.0,
            criteria: None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CriterionReport {
    pub id: usize,
    pub name: String,
    pub passed: bool,
    /// Error of the binding clause (worst error-to-tolerance ratio).
    pub worst_error: f64,
    /// Tolerance of the binding clause, after scaling.
    pub tolerance: f64,
    /// Where the binding clause sat, plus failure counts if any.
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub criteria: Vec<CriterionReport>,
    pub passed: bool,
}

/// One comparison inside a criterion.
struct Clause {
    label: String,
    error: f64,
    tolerance: f64,
}

impl Clause {
    fn new(label: impl Into<String>, error: f64, tolerance: f64) -> Self {
        Clause {
            label: label.into(),
            error,
            tolerance,
        }
    }
}

fn summarize(id: usize, clauses: Vec<Clause>, scale: f64) -> CriterionReport {
    assert!(!clauses.is_empty(), "criterion {id} produced no clauses");
    let failing = clauses
        .iter()
        .filter(|c| !(c.error <= c.tolerance * scale))
        .count();
    let binding = clauses
        .iter()
        .max_by(|a, b| {
            let ra = a.error / a.tolerance;
            let rb = b.error / b.tolerance;
            ra.total_cmp(&rb)
        })
        .expect("nonempty");
    let mut detail = format!("binding: {} ", binding.label);
    if failing > 0 {
        detail.push_str(&format!(
            "({failing} of {} clauses out of tolerance)",
            clauses.len()
        ));
    } else {
        detail.push_str(&format!("(all {} clauses within tolerance)", clauses.len()));
    }
    CriterionReport {
        id,
        name: CRITERIA_NAMES[id - 1].to_string(),
        passed: failing == 0,
        worst_error: binding.error,
        tolerance: binding.tolerance * scale,
        detail,
    }
}

// ===== shared fixtures =====

/// The three reference measures of the analytic criteria, all with support
/// bound 1.
fn analytic_measures() -> Vec<(&'static str, DiscreteMeasure)> {
    vec![
        ("delta_1", DiscreteMeasure::dirac(1.0).unwrap()),
        (
            "uniform3",
            DiscreteMeasure::from_singular_values(&[1.0 / 3.0, 2.0 / 3.0, 1.0]).unwrap(),
        ),
        ("random6", random_six_atom()),
    ]
}

/// A fixed "random" six-atom measure: atoms drawn once from a seeded stream
/// and rescaled so the largest is exactly 1, weights a random composition of
/// 64 into six positive parts. Sixty-fourths make the 64-row quantile model
/// realize the measure exactly, so the Monte Carlo criteria can reuse it
/// without discretization bias.
pub fn random_six_atom() -> DiscreteMeasure {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5EC7_0001);
    let raw: Vec<f64> = (0..6).map(|_| 0.15 + 0.85 * rng.random::<f64>()).collect();
    let top = raw.iter().cloned().fold(f64::MIN, f64::max);
    let atoms: Vec<f64> = raw.iter().map(|a| a / top).collect();
    let mut parts = [1u64; 6];
    for _ in 0..(64 - 6) {
        parts[rng.random_range(0..6)] += 1;
    }
    let weights: Vec<f64> = parts.iter().map(|&p| p as f64 / 64.0).collect();
    DiscreteMeasure::new(atoms, weights).expect("fixture measure is valid")
}

const LAMBDA_GRID: [f64; 4] = [0.0, 0.25, 0.5, 1.0];

fn theta_grid(k: f64) -> Vec<f64> {
    (0..21)
        .map(|i| (-0.8 + 1.6 * i as f64 / 20.0) / k)
        .collect()
}

// ===== criteria =====

/// Criterion 1: gamma through the fixed point, through `H` inversion, and
/// through the truncated cumulant series.
fn gamma_three_ways(scale: f64) -> Result<CriterionReport> {
    let mut clauses = Vec::new();
    for (mname, mu) in analytic_measures() {
        let k = mu.support_bound();
        for lambda in LAMBDA_GRID {
            let ctx = TransformContext::new(mu.clone(), lambda, 1)?;
            let mut worst = (0.0f64, 0.0f64);
            for &theta in &theta_grid(k) {
                let gap = (ctx.gamma(theta)? - ctx.rect_r(theta * theta)?).abs();
                if gap > worst.0 {
                    worst = (gap, theta);
                }
            }
            clauses.push(Clause::new(
                format!("gamma vs C, {mname} lambda={lambda} (worst theta {:.3})", worst.1),
                worst.0,
                1e-10,
            ));

            let cumulants = rect_cumulants(&mu, lambda, 12)?;
            let mut worst = (0.0f64, 0.0f64);
            for i in 0..21 {
                let z = (-0.25 + 0.5 * i as f64 / 20.0) / (k * k);
                let gap = (ctx.rect_r(z)? - evaluate_cumulant_series(&cumulants, z)).abs();
                if gap > worst.0 {
                    worst = (gap, z);
                }
            }
            clauses.push(Clause::new(
                format!(
                    "12-term series vs C, {mname} lambda={lambda} (worst z {:.4})",
                    worst.1
                ),
                worst.0,
                1e-6,
            ));
        }
    }
    Ok(summarize(1, clauses, scale))
}

/// Criterion 2: the classical R-transform identities at the two edge ratios.
fn r_transform_corollaries(scale: f64) -> Result<CriterionReport> {
    let mut clauses = Vec::new();
    for (mname, mu) in analytic_measures() {
        let k = mu.support_bound();
        for lambda in [1.0, 0.0] {
            let ctx = TransformContext::new(mu.clone(), lambda, 1)?;
            let mut worst = (0.0f64, 0.0f64);
            for &t in &theta_grid(k) {
                let (left, right) = ctx.corollary_pair(t)?;
                let gap = (left - right).abs();
                if gap > worst.0 {
                    worst = (gap, t);
                }
            }
            let side = if lambda == 1.0 {
                "symmetrization"
            } else {
                "squared measure"
            };
            clauses.push(Clause::new(
                format!("{side}, {mname} (worst t {:.3})", worst.1),
                worst.0,
                1e-9,
            ));
        }
    }
    Ok(summarize(2, clauses, scale))
}

/// Criterion 3: the quadrature and closed-form routes to the limit agree.
fn quadrature_vs_closed_form(scale: f64) -> Result<CriterionReport> {
    let mut clauses = Vec::new();
    for (mname, mu) in analytic_measures() {
        let k = mu.support_bound();
        for lambda in LAMBDA_GRID {
            for beta in [1u8, 2] {
                let ctx = TransformContext::new(mu.clone(), lambda, beta)?;
                let mut worst = (0.0f64, 0.0f64);
                for &theta in &theta_grid(k) {
                    let gap =
                        (ctx.limit_integral(theta)? - ctx.closed_form_integral(theta)?).abs();
                    if gap > worst.0 {
                        worst = (gap, theta);
                    }
                }
                clauses.push(Clause::new(
                    format!(
                        "{mname} lambda={lambda} beta={beta} (worst theta {:.3})",
                        worst.1
                    ),
                    worst.0,
                    1e-7,
                ));
            }
        }
    }
    Ok(summarize(3, clauses, scale))
}

/// Criterion 4: the finite-size estimator lands on the analytic limit for
/// the unit measure and the random six-atom measure at n = 64, m = 128.
fn spherical_integral_desk_scale(scale: f64) -> Result<CriterionReport> {
    let samples = 200_000;
    let mut clauses = Vec::new();
    let cases = [
        ("delta_1", DiscreteMeasure::dirac(1.0).unwrap()),
        ("random6", random_six_atom()),
    ];
    for (c_idx, (mname, mu)) in cases.into_iter().enumerate() {
        let ctx = TransformContext::new(mu.clone(), 0.5, 1)?;
        let model = MatrixModel::from_measure_quantiles(&mu, 64, 128, ScalarField::Real)?;
        for (t_idx, &theta) in [0.1, 0.2, 0.3].iter().enumerate() {
            let seed = 0x0404_0000 + (c_idx * 3 + t_idx) as u64;
            let est = estimate_in(&model, theta, samples, seed)?;
            let limit = ctx.limit_integral(theta)?;
            let tol = (0.15 * limit.abs()).max(0.005);
            clauses.push(Clause::new(
                format!("{mname} theta={theta} (I={limit:.4e}, Ihat={:.4e})", est.value),
                (est.value - limit).abs(),
                tol,
            ));
        }
    }
    Ok(summarize(4, clauses, scale))
}

/// Criterion 5: a complex-field estimate equals twice the real-field
/// estimate at half the angle with every singular value doubled in
/// multiplicity, within Monte Carlo error.
fn complex_to_real_reduction(scale: f64) -> Result<CriterionReport> {
    let samples = 200_000;
    let complex_model = MatrixModel::new(vec![1.0; 32], 64, ScalarField::Complex)?;
    let real_model = MatrixModel::new(vec![1.0; 64], 128, ScalarField::Real)?;
    let cx = estimate_in(&complex_model, 0.3, samples, 0x0505_0001)?;
    let re = estimate_in(&real_model, 0.15, samples, 0x0505_0002)?;
    let joint = (cx.std_error.powi(2) + (2.0 * re.std_error).powi(2)).sqrt();
    let clause = Clause::new(
        format!(
            "complex (32,64) theta=0.3 vs doubled real (64,128) theta=0.15: {:.5e} vs {:.5e}",
            cx.value,
            2.0 * re.value
        ),
        (cx.value - 2.0 * re.value).abs(),
        4.0 * joint,
    );
    Ok(summarize(5, vec![clause], scale))
}

/// Criterion 6: empirical squared-singular-value moments of `A + U B V`
/// track the free-convolution prediction.
fn convolution_vs_matrix_model(scale: f64) -> Result<CriterionReport> {
    let n = 300;
    let m = 600;
    let realizations = 20;
    let ones = vec![1.0; n];
    let delta = DiscreteMeasure::dirac(1.0).unwrap();
    let predicted = rect_free_convolve(&delta, &delta, 0.5, 3)?;

    let mut rng = ChaCha8Rng::seed_from_u64(0x0606_0001);
    let mut empirical = [0.0f64; 3];
    for _ in 0..realizations {
        let law = sample_sum_singular_law(&ones, &ones, n, m, ScalarField::Real, &mut rng)?;
        for (k, e) in empirical.iter_mut().enumerate() {
            *e += law.moment(2 * (k as u32 + 1));
        }
    }
    let mut clauses = Vec::new();
    for k in 0..3 {
        let avg = empirical[k] / realizations as f64;
        let rel = (avg - predicted[k]).abs() / predicted[k];
        clauses.push(Clause::new(
            format!(
                "moment {} of the squared law: {avg:.5} vs predicted {:.5}",
                k + 1,
                predicted[k]
            ),
            rel,
            0.02,
        ));
    }
    Ok(summarize(6, clauses, scale))
}

/// Criterion 7: the classical-cumulant route to `c_2` on the unit model.
fn classical_second_cumulant(scale: f64) -> Result<CriterionReport> {
    let model = MatrixModel::new(vec![1.0; 64], 128, ScalarField::Real)?;
    let est = estimate_classical_cumulant_c2(&model, 100_000, 0x0707_0001)?;
    let clause = Clause::new(
        format!("m*beta*Var estimate {:.5} vs c_2 = 1", est.value),
        (est.value - 1.0).abs(),
        0.05,
    );
    Ok(summarize(7, vec![clause], scale))
}

/// Criterion 8: the closed-form block diagonalization stays orthogonal and
/// reconstructs `T` over a thousand random coupled families.
fn block_diagonalization(scale: f64) -> Result<CriterionReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x0808_0001);
    let mut worst_orth = (0.0f64, String::new());
    let mut worst_rec = (0.0f64, String::new());
    for draw in 0..1000 {
        let a = 0.5 + 2.5 * rng.random::<f64>();
        let b = 0.5 + 2.5 * rng.random::<f64>();
        let count = 1 + rng.random_range(0..4usize);
        let couplings: Vec<f64> = (0..count)
            .map(|_| loop {
                let l = -1.0 + 2.0 * rng.random::<f64>();
                if l != 0.0 {
                    break l;
                }
            })
            .collect();
        let (p, d) = block_diagonalize(a, b, &couplings)?;
        let size = 2 * count;

        let gram = p.transpose() * &p;
        let mut orth: f64 = 0.0;
        for i in 0..size {
            for j in 0..size {
                let expected = if i == j { 1.0 } else { 0.0 };
                orth = orth.max((gram[(i, j)] - expected).abs());
            }
        }
        if orth > worst_orth.0 {
            worst_orth = (orth, format!("draw {draw}"));
        }

        let rebuilt = &p * nalgebra::DMatrix::from_diagonal(&d) * p.transpose();
        let mut rec: f64 = 0.0;
        for (i, &l) in couplings.iter().enumerate() {
            rec = rec.max((rebuilt[(i, i)] - a).abs());
            rec = rec.max((rebuilt[(count + i, count + i)] - b).abs());
            rec = rec.max((rebuilt[(i, count + i)] - l).abs());
            rec = rec.max((rebuilt[(count + i, i)] - l).abs());
        }
        for i in 0..size {
            for j in 0..size {
                let coupled = j == i
                    || (i < count && j == i + count)
                    || (j < count && i == j + count);
                if !coupled {
                    rec = rec.max(rebuilt[(i, j)].abs());
                }
            }
        }
        if rec > worst_rec.0 {
            worst_rec = (rec, format!("draw {draw}"));
        }
    }
    let clauses = vec![
        Clause::new(format!("orthogonality ({})", worst_orth.1), worst_orth.0, 1e-12),
        Clause::new(format!("reconstruction ({})", worst_rec.1), worst_rec.0, 1e-12),
    ];
    Ok(summarize(8, clauses, scale))
}

/// Criterion 9: `C` is stable under simultaneous perturbation of the
/// measure (n-point quantile discretization jittered at scale 1/n) and the
/// ratio (lambda + 1/n) at n = 10^4.
fn continuity(scale: f64) -> Result<CriterionReport> {
    let n = 10_000usize;
    let lambda = 0.5;
    let mu = DiscreteMeasure::from_singular_values(&[0.3, 0.7, 1.0])?;
    let mut rng = ChaCha8Rng::seed_from_u64(0x0909_0001);
    let atoms: Vec<f64> = (0..n)
        .map(|i| {
            let q = mu.quantile((i as f64 + 0.5) / n as f64);
            let eps = -1.0 + 2.0 * rng.random::<f64>();
            q + eps / n as f64
        })
        .collect();
    let weights = vec![1.0 / n as f64; n];
    let mu_n = DiscreteMeasure::new(atoms, weights)?;

    let base = TransformContext::new(mu.clone(), lambda, 1)?;
    let pert = TransformContext::new(mu_n, lambda + 1.0 / n as f64, 1)?;
    let k = mu.support_bound();
    let mut worst = (0.0f64, 0.0f64);
    for i in 0..50 {
        let z = 0.5 / (k * k) * i as f64 / 49.0;
        let gap = (base.rect_r(z)? - pert.rect_r(z)?).abs();
        if gap > worst.0 {
            worst = (gap, z);
        }
    }
    let clause = Clause::new(
        format!("sup over z-grid (worst at z = {:.3})", worst.1),
        worst.0,
        1e-3,
    );
    Ok(summarize(9, vec![clause], scale))
}

/// Criterion 10: cumulants of random measures convert back to the exact
/// moments of the squared measure.
///
/// Atoms stay in [0.1, 0.8]: the round trip is exact in exact arithmetic at
/// any truncation, but the reversion coefficients grow like the fourth power
/// of the support bound per order, and support at 1.0 already amplifies
/// roundoff to the 1e-11 line at order 10. Keeping the support below one
/// leaves two orders of magnitude of margin.
fn moment_cumulant_round_trip(scale: f64) -> Result<CriterionReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x0A0A_0001);
    let order = 10;
    let mut worst = (0.0f64, String::new());
    for draw in 0..50 {
        let count = 1 + rng.random_range(0..8usize);
        let atoms: Vec<f64> = (0..count).map(|_| 0.1 + 0.7 * rng.random::<f64>()).collect();
        let raw: Vec<f64> = (0..count).map(|_| 0.05 + rng.random::<f64>()).collect();
        let total: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let mu = DiscreteMeasure::new(atoms, weights)?;
        for lambda in LAMBDA_GRID {
            let cumulants = rect_cumulants(&mu, lambda, order)?;
            let back = cumulants_to_squared_moments(&cumulants, lambda)?;
            for (k, &mk) in back.iter().enumerate() {
                let direct = mu.moment(2 * (k as u32 + 1));
                let gap = (mk - direct).abs() / direct.abs().max(1.0);
                if gap > worst.0 {
                    worst = (
                        gap,
                        format!("draw {draw} lambda={lambda} moment {}", k + 1),
                    );
                }
            }
        }
    }
    let clause = Clause::new(format!("relative gap ({})", worst.1), worst.0, 1e-11);
    Ok(summarize(10, vec![clause], scale))
}

// ===== the driver =====

/// Run the selected criteria and aggregate their reports.
pub fn run(config: &VerifyConfig) -> Result<VerifyReport> {
    if !(config.tolerance_scale.is_finite() && config.tolerance_scale > 0.0) {
        return Err(Error::invalid(format!(
            "tolerance scale must be positive and finite, got {}",
            config.tolerance_scale
        )));
    }
    if let Some(ids) = &config.criteria {
        if ids.is_empty() {
            return Err(Error::invalid("criterion subset is empty"));
        }
        for &id in ids {
            if !(1..=CRITERIA_COUNT).contains(&id) {
                return Err(Error::invalid(format!(
                    "criterion id {id} out of range 1..={CRITERIA_COUNT}"
                )));
            }
        }
    }
    let wanted = |id: usize| {
        config
            .criteria
            .as_ref()
            .map_or(true, |ids| ids.contains(&id))
    };
    let scale = config.tolerance_scale;
    let runners: [fn(f64) -> Result<CriterionReport>; CRITERIA_COUNT] = [
        gamma_three_ways,
        r_transform_corollaries,
        quadrature_vs_closed_form,
        spherical_integral_desk_scale,
        complex_to_real_reduction,
        convolution_vs_matrix_model,
        classical_second_cumulant,
        block_diagonalization,
        continuity,
        moment_cumulant_round_trip,
    ];
    let mut criteria = Vec::new();
    for (idx, runner) in runners.iter().enumerate() {
        if wanted(idx + 1) {
            criteria.push(runner(scale)?);
        }
    }
    let passed = criteria.iter().all(|c| c.passed);
    Ok(VerifyReport { criteria, passed })
}

/// Convenience for one criterion; used by the per-criterion acceptance
/// tests so each can fail independently with its own report line.
pub fn run_criterion(id: usize) -> Result<CriterionReport> {
    let report = run(&VerifyConfig {
        tolerance_scale: 1.0,
        criteria: Some(vec![id]),
    })?;
    report
        .criteria
        .into_iter()
        .next()
        .ok_or_else(|| Error::numerical("criterion produced no report"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        assert!(run(&VerifyConfig {
            tolerance_scale: 0.0,
            criteria: None
        })
        .is_err());
        assert!(run(&VerifyConfig {
            tolerance_scale: 1.0,
            criteria: Some(vec![])
        })
        .is_err());
        assert!(run(&VerifyConfig {
            tolerance_scale: 1.0,
            criteria: Some(vec![11])
        })
        .is_err());
    }

    #[test]
    fn fixture_measure_is_stable() {
        let a = random_six_atom();
        let b = random_six_atom();
        assert_eq!(a.atoms(), b.atoms());
        assert_eq!(a.weights(), b.weights());
        assert_eq!(a.support_bound(), 1.0);
        assert_eq!(a.atoms().len(), 6);
        let mass: f64 = a.weights().iter().sum();
        assert!((mass - 1.0).abs() < 1e-15);
    }

    #[test]
    fn subset_runs_only_requested_criteria() {
        let report = run(&VerifyConfig {
            tolerance_scale: 1.0,
            criteria: Some(vec![8, 10]),
        })
        .unwrap();
        assert_eq!(report.criteria.len(), 2);
        assert_eq!(report.criteria[0].id, 8);
        assert_eq!(report.criteria[1].id, 10);
        assert!(report.criteria.iter().all(|c| c.passed));
    }

    #[test]
    fn absurd_tolerance_scale_fails_criteria() {
        let report = run(&VerifyConfig {
            tolerance_scale: 1e-30,
            criteria: Some(vec![8]),
        })
        .unwrap();
        assert!(!report.passed);
        assert!(!report.criteria[0].passed);
    }
}

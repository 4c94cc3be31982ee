//! The rectangular R-transform and the limit of normalized spherical
//! integrals.
//!
//! Fix an aspect ratio `lambda = n/m` in `[0, 1]` and a measure `mu` with
//! support bound `K`. Everything below is assembled from three pieces:
//!
//! * the ratio polynomial `T(z) = (lambda z + 1)(z + 1)`;
//! * the squared-moment generating function `M(z)` of `mu` (see
//!   [`DiscreteMeasure::squared_moment_gen`]);
//! * the map `H(z) = z T(M(z))`, an increasing diffeomorphism from
//!   `[0, 1/K^2)` onto `[0, sup)`.
//!
//! The rectangular R-transform is `C(z) = T^{-1}(z / H^{-1}(z))` with
//! `C(0) = 0`. It linearizes the free convolution of singular-value laws and
//! appears as the integrand of the spherical-integral limit
//! `I(theta) = beta * int_0^{theta/beta} C(t^2)/t dt`, which also has a
//! closed form in terms of `gamma = C(theta^2)` (see
//! [`TransformContext::closed_form_integral`]).
//!
//! `H` is inverted by bracketed bisection with a Newton polish; `gamma` is
//! recomputed independently through its fixed-point characterization
//! `M(theta^2 / T(gamma)) = gamma`, which gives the test suites two routes to
//! the same number.
//!
//! The point mass at zero is degenerate (`K = 0`): every transform is
//! identically zero there and every theta is admissible.

use crate::error::{Error, Result};
use crate::measure::DiscreteMeasure;
use crate::numeric::{adaptive_simpson, bisect_newton};

/// Budget for the gamma fixed-point iteration.
const GAMMA_ITER_BUDGET: usize = 10_000;
/// Step size under which the fixed-point iteration is declared converged.
const GAMMA_STEP_TOL: f64 = 1e-13;
/// The fixed-point residual every returned gamma must satisfy.
const GAMMA_RESIDUAL_TOL: f64 = 1e-12;
/// Absolute tolerance of the root-finding brackets.
const ROOT_TOL: f64 = 1e-13;
/// Absolute tolerance of the quadrature behind `limit_integral`.
const QUAD_TOL: f64 = 1e-10;
/// Leaf-interval budget of the adaptive quadrature.
const QUAD_BUDGET: usize = 1_000_000;
/// `H` is evaluated up to `(1 - this) / K^2`; the value there stands in for
/// the (typically infinite) supremum of the `C` domain.
const CAP_MARGIN: f64 = 1e-15;

// ===== the ratio polynomial T and its inverse branch =====

/// `T(z) = (lambda z + 1)(z + 1)`.
#[inline]
pub fn t_ratio(lambda: f64, z: f64) -> f64 {
    (lambda * z + 1.0) * (z + 1.0)
}

/// Derivative `T'(z) = 2 lambda z + lambda + 1`.
#[inline]
pub fn t_ratio_deriv(lambda: f64, z: f64) -> f64 {
    2.0 * lambda * z + lambda + 1.0
}

/// Inverse of `T` on the branch through the origin, for `y >= 0`.
///
/// Written as `2(y - 1) / (sqrt((1-lambda)^2 + 4 lambda y) + 1 + lambda)`,
/// which is the quadratic-formula branch with the cancellation divided out;
/// it degrades gracefully to `y - 1` as `lambda -> 0`.
pub fn t_ratio_inv(lambda: f64, y: f64) -> Result<f64> {
    if !(y >= 0.0) {
        return Err(Error::domain(format!(
            "T^-1 needs a non-negative argument, got {y}"
        )));
    }
    let disc = (1.0 - lambda) * (1.0 - lambda) + 4.0 * lambda * y;
    Ok(2.0 * (y - 1.0) / (disc.sqrt() + 1.0 + lambda))
}

// ===== transform context =====

/// A measure together with the aspect ratio `lambda = n/m` and the field
/// parameter `beta` (1 for real, 2 for complex matrices). All transform
/// evaluations hang off this.
#[derive(Debug, Clone)]
pub struct TransformContext {
    measure: DiscreteMeasure,
    lambda: f64,
    beta: u8,
    support_bound: f64,
}

impl TransformContext {
    pub fn new(measure: DiscreteMeasure, lambda: f64, beta: u8) -> Result<Self> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::invalid(format!(
                "aspect ratio lambda must lie in [0, 1], got {lambda}"
            )));
        }
        if beta != 1 && beta != 2 {
            return Err(Error::invalid(format!("beta must be 1 or 2, got {beta}")));
        }
        let support_bound = measure.support_bound();
        Ok(TransformContext {
            measure,
            lambda,
            beta,
            support_bound,
        })
    }

    pub fn measure(&self) -> &DiscreteMeasure {
        &self.measure
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn beta(&self) -> u8 {
        self.beta
    }

    /// Support bound `K` of the measure.
    pub fn support_bound(&self) -> f64 {
        self.support_bound
    }

    /// Admissible thetas are `|theta| < beta / K` (`infinity` for the point
    /// mass at zero).
    pub fn theta_bound(&self) -> f64 {
        if self.is_degenerate() {
            f64::INFINITY
        } else {
            f64::from(self.beta) / self.support_bound
        }
    }

    fn is_degenerate(&self) -> bool {
        self.support_bound == 0.0
    }

    /// Pole-side end of the `H` domain, `1/K^2`.
    fn z_cap(&self) -> f64 {
        self.support_bound.powi(-2)
    }

    /// Largest `z` at which `H` is actually evaluated; `H` there is the
    /// working stand-in for `sup H`.
    fn z_top(&self) -> f64 {
        self.z_cap() * (1.0 - CAP_MARGIN)
    }

    // ----- H and its inverse -----

    /// `H(z) = z T(M(z))` without the domain clamp; used internally for the
    /// analytic continuation to `z < 0`.
    fn h_raw(&self, z: f64) -> Result<f64> {
        let m = self.measure.squared_moment_gen(z)?;
        Ok(z * t_ratio(self.lambda, m))
    }

    /// `H'(z) = T(M(z)) + z T'(M(z)) M'(z)`.
    fn h_raw_deriv(&self, z: f64) -> Result<f64> {
        let m = self.measure.squared_moment_gen(z)?;
        let dm = self.measure.squared_moment_gen_deriv(z)?;
        Ok(t_ratio(self.lambda, m) + z * t_ratio_deriv(self.lambda, m) * dm)
    }

    /// The diffeomorphism `H` on its natural domain `[0, 1/K^2)`.
    ///
    /// `H(0) = 0`, `H'(0) = 1` and `H(z) >= z` throughout the domain.
    pub fn h(&self, z: f64) -> Result<f64> {
        if self.is_degenerate() {
            if z >= 0.0 {
                return Ok(z);
            }
            return Err(Error::domain(format!("H needs z >= 0, got {z}")));
        }
        if !(z >= 0.0 && z < self.z_cap()) {
            return Err(Error::domain(format!(
                "H is defined on [0, {:e}), got {z}",
                self.z_cap()
            )));
        }
        self.h_raw(z)
    }

    /// Inverse of `H`, defined for `w` in `[0, sup H)`.
    ///
    /// Since `H(z) >= z` the root lies in `[0, min(w, 1/K^2))`, which is the
    /// bracket handed to bisection; a Newton polish with the analytic `H'`
    /// sharpens the result to near machine precision.
    pub fn h_inverse(&self, w: f64) -> Result<f64> {
        if !(w >= 0.0) {
            return Err(Error::domain(format!("H^-1 needs w >= 0, got {w}")));
        }
        if self.is_degenerate() {
            return Ok(w);
        }
        if w == 0.0 {
            return Ok(0.0);
        }
        let hi = w.min(self.z_top());
        if self.h_raw(hi)? < w {
            return Err(Error::domain(format!(
                "w = {w} is beyond the numeric range of H (about {:e})",
                self.h_raw(self.z_top())?
            )));
        }
        let f = |z: f64| self.h_raw(z).map_or(f64::NAN, |v| v - w);
        let df = |z: f64| self.h_raw_deriv(z).map_or(f64::NAN, |v| v);
        bisect_newton(f, df, 0.0, hi, ROOT_TOL * hi.max(1.0))
    }

    /// Continuation of `H^{-1}` to negative arguments, walking down the
    /// branch through the origin. `H` stays increasing on some maximal
    /// interval `(z_*, 0]`; beyond `H(z_*)` there is nothing to invert and
    /// the request is a domain error.
    fn h_inverse_negative(&self, w: f64) -> Result<f64> {
        debug_assert!(w < 0.0);
        let mut prev = 0.0;
        let mut a = w;
        for _ in 0..200 {
            let slope = self.h_raw_deriv(a)?;
            if slope <= 0.0 {
                // Walked past the branch edge: pin down the critical point
                // and decide whether w is still reachable.
                let dh = |z: f64| self.h_raw_deriv(z).map_or(f64::NAN, |v| v);
                let ddh = |z: f64| {
                    // second derivative by central difference; only steers
                    // the Newton polish, bisection carries correctness
                    let h = 1e-6 * (1.0 + z.abs());
                    (dh(z + h) - dh(z - h)) / (2.0 * h)
                };
                let z_star = bisect_newton(dh, ddh, a, prev, ROOT_TOL * (1.0 + a.abs()))?;
                let floor = self.h_raw(z_star)?;
                if w < floor {
                    return Err(Error::domain(format!(
                        "w = {w} is below the lower edge {floor:e} of the invertible branch of H"
                    )));
                }
                let f = |z: f64| self.h_raw(z).map_or(f64::NAN, |v| v - w);
                return bisect_newton(f, dh, z_star, prev, ROOT_TOL * (1.0 + z_star.abs()));
            }
            let value = self.h_raw(a)?;
            if value <= w {
                let f = |z: f64| self.h_raw(z).map_or(f64::NAN, |v| v - w);
                let df = |z: f64| self.h_raw_deriv(z).map_or(f64::NAN, |v| v);
                return bisect_newton(f, df, a, prev, ROOT_TOL * (1.0 + a.abs()));
            }
            prev = a;
            a *= 2.0;
            if a < -1e250 {
                break;
            }
        }
        Err(Error::domain(format!(
            "w = {w} is below the limit of H along the negative axis"
        )))
    }

    // ----- the rectangular R-transform -----

    /// The rectangular R-transform `C(z) = T^{-1}(z / H^{-1}(z))`, `C(0) = 0`.
    ///
    /// Defined for `z` in `[0, sup H)` and, by analytic continuation through
    /// the same formula, for negative `z` down to the edge of the invertible
    /// branch of `H`. For the point mass at zero it vanishes identically.
    pub fn rect_r(&self, z: f64) -> Result<f64> {
        if !z.is_finite() {
            return Err(Error::invalid(format!("non-finite z = {z}")));
        }
        if self.is_degenerate() || z == 0.0 {
            return Ok(0.0);
        }
        let y = if z > 0.0 {
            self.h_inverse(z)?
        } else {
            self.h_inverse_negative(z)?
        };
        t_ratio_inv(self.lambda, z / y)
    }

    // ----- gamma via its fixed-point characterization -----

    /// Solve `M(theta^2 / T(gamma)) = gamma`, the fixed-point form of
    /// `gamma = C(theta^2)`.
    ///
    /// For `theta^2 < 1/K^2` this iterates `gamma <- M(theta^2 / T(gamma))`
    /// from zero and falls back to bracketed root finding if the iteration
    /// oscillates outward. Larger `theta^2` (still below `sup H`) start past
    /// the pole of `M`, so the bracketed route is used directly. Either way
    /// the result is checked against [`GAMMA_RESIDUAL_TOL`].
    pub fn gamma(&self, theta: f64) -> Result<f64> {
        if !theta.is_finite() {
            return Err(Error::invalid(format!("non-finite theta = {theta}")));
        }
        if self.is_degenerate() || theta == 0.0 {
            return Ok(0.0);
        }
        let w = theta * theta;
        if w < self.z_cap() {
            let phi = |g: f64| {
                self.measure
                    .squared_moment_gen(w / t_ratio(self.lambda, g))
                    .map_or(f64::NAN, |v| v)
            };
            let mut g = 0.0;
            let mut prev_step = f64::INFINITY;
            let mut widening = 0u32;
            for _ in 0..GAMMA_ITER_BUDGET {
                let next = phi(g);
                let step = (next - g).abs();
                if step <= GAMMA_STEP_TOL * next.abs().max(1.0) {
                    return self.admit_gamma(w, next);
                }
                if step > prev_step {
                    widening += 1;
                    if widening >= 3 {
                        break; // oscillating outward, the map is not contracting here
                    }
                } else {
                    widening = 0;
                }
                prev_step = step;
                g = next;
            }
            let hi = self.measure.squared_moment_gen(w)?;
            let root = self.bracketed_gamma(w, 0.0, hi)?;
            self.admit_gamma(w, root)
        } else {
            // theta^2 is past 1/K^2 but may still be in the C domain; get
            // onto the branch where M's argument is below its pole.
            if self.h_raw(self.z_top())? <= w {
                return Err(Error::domain(format!(
                    "theta = {theta} is outside the admissible range"
                )));
            }
            let k2 = self.support_bound * self.support_bound;
            let g_edge = t_ratio_inv(self.lambda, w * k2)?;
            let mut lo = f64::NAN;
            let mut eps = 1e-3 * (1.0 + g_edge);
            for _ in 0..80 {
                let cand = g_edge + eps;
                let phi = self
                    .measure
                    .squared_moment_gen(w / t_ratio(self.lambda, cand))?;
                if phi > cand {
                    lo = cand;
                    break;
                }
                eps /= 8.0;
            }
            if lo.is_nan() {
                return Err(Error::numerical(format!(
                    "could not bracket gamma near the branch edge for theta = {theta}"
                )));
            }
            let mut hi = lo;
            let mut bracketed = false;
            for _ in 0..300 {
                hi = 2.0 * hi + 1.0;
                let phi = self
                    .measure
                    .squared_moment_gen(w / t_ratio(self.lambda, hi))?;
                if phi < hi {
                    bracketed = true;
                    break;
                }
            }
            if !bracketed {
                return Err(Error::numerical(format!(
                    "gamma grows without bound for theta = {theta}"
                )));
            }
            let root = self.bracketed_gamma(w, lo, hi)?;
            self.admit_gamma(w, root)
        }
    }

    /// Root of `gamma -> M(theta^2 / T(gamma)) - gamma`, which is strictly
    /// decreasing, on a bracket where it changes sign.
    fn bracketed_gamma(&self, w: f64, lo: f64, hi: f64) -> Result<f64> {
        let f = |g: f64| {
            self.measure
                .squared_moment_gen(w / t_ratio(self.lambda, g))
                .map_or(f64::NAN, |v| v - g)
        };
        let df = |g: f64| {
            let t = t_ratio(self.lambda, g);
            let arg = w / t;
            let dm = self.measure.squared_moment_gen_deriv(arg);
            dm.map_or(f64::NAN, |dm| {
                -dm * w * t_ratio_deriv(self.lambda, g) / (t * t) - 1.0
            })
        };
        bisect_newton(f, df, lo, hi, ROOT_TOL * hi.max(1.0))
    }

    fn admit_gamma(&self, w: f64, gamma: f64) -> Result<f64> {
        let back = self
            .measure
            .squared_moment_gen(w / t_ratio(self.lambda, gamma))?;
        let residual = (back - gamma).abs();
        if residual <= GAMMA_RESIDUAL_TOL * gamma.abs().max(1.0) {
            Ok(gamma)
        } else {
            Err(Error::numerical(format!(
                "gamma fixed point stalled at residual {residual:e}"
            )))
        }
    }

    // ----- the spherical-integral limit, two ways -----

    fn check_theta(&self, theta: f64) -> Result<()> {
        if !theta.is_finite() {
            return Err(Error::invalid(format!("non-finite theta = {theta}")));
        }
        if theta.abs() >= self.theta_bound() {
            return Err(Error::domain(format!(
                "theta = {theta} is outside (-{b}, {b})",
                b = self.theta_bound()
            )));
        }
        Ok(())
    }

    /// `I(theta) = beta * int_0^{theta/beta} C(t^2)/t dt` by adaptive
    /// quadrature. The integrand extends continuously by 0 at `t = 0` and the
    /// result is even in theta.
    pub fn limit_integral(&self, theta: f64) -> Result<f64> {
        self.check_theta(theta)?;
        if self.is_degenerate() || theta == 0.0 {
            return Ok(0.0);
        }
        let beta = f64::from(self.beta);
        let failure = std::cell::RefCell::new(None);
        let integrand = |t: f64| {
            if t == 0.0 {
                return 0.0;
            }
            match self.rect_r(t * t) {
                Ok(c) => c / t,
                Err(e) => {
                    failure.borrow_mut().get_or_insert(e);
                    0.0
                }
            }
        };
        let value = adaptive_simpson(&integrand, 0.0, theta / beta, QUAD_TOL / beta, QUAD_BUDGET)?;
        if let Some(e) = failure.into_inner() {
            return Err(e);
        }
        Ok(beta * value)
    }

    /// The same limit in closed form:
    /// `f(theta) = gamma - ln(1 + lambda gamma)/(2 lambda) - ln(1 + gamma)/2
    ///  - (1/2) int ln(1 - theta^2 t^2 / T(gamma)) dmu(t)`
    /// with `gamma = C(theta^2)`; the `lambda = 0` limit of the second term
    /// is `gamma / 2`. For `beta = 2` the value is `2 f(theta / 2)`.
    pub fn closed_form_integral(&self, theta: f64) -> Result<f64> {
        self.check_theta(theta)?;
        if self.is_degenerate() || theta == 0.0 {
            return Ok(0.0);
        }
        match self.beta {
            1 => self.closed_form_beta1(theta),
            2 => Ok(2.0 * self.closed_form_beta1(theta / 2.0)?),
            _ => unreachable!("beta validated at construction"),
        }
    }

    fn closed_form_beta1(&self, theta: f64) -> Result<f64> {
        let gamma = self.rect_r(theta * theta)?;
        let lambda_term = if self.lambda == 0.0 {
            0.5 * gamma
        } else {
            (self.lambda * gamma).ln_1p() / (2.0 * self.lambda)
        };
        let t_gamma = t_ratio(self.lambda, gamma);
        let theta2 = theta * theta;
        let mut log_avg = 0.0;
        for (&a, &wt) in self
            .measure
            .atoms()
            .iter()
            .zip(self.measure.weights().iter())
        {
            let x = theta2 * a * a / t_gamma;
            if x >= 1.0 {
                return Err(Error::domain(format!(
                    "log argument 1 - {x} not positive at atom {a}"
                )));
            }
            log_avg += wt * (-x).ln_1p();
        }
        Ok(gamma - lambda_term - 0.5 * gamma.ln_1p() - 0.5 * log_avg)
    }

    // ----- the two corollary identities -----

    /// The identities tying `C` to a classical (square-matrix) R-transform:
    /// for `lambda = 1`, `C(t^2) = t R_{mu_s}(t)` with `mu_s` the
    /// symmetrization; for `lambda = 0`, `C(t) = t R_{mu^2}(t)` with `mu^2`
    /// the squared measure. Returns the pair (left side, right side); other
    /// lambdas have no such identity and are rejected.
    pub fn corollary_pair(&self, t: f64) -> Result<(f64, f64)> {
        if !t.is_finite() {
            return Err(Error::invalid(format!("non-finite t = {t}")));
        }
        if self.lambda == 1.0 {
            let left = self.rect_r(t * t)?;
            let right = t * classical_r(&self.measure.symmetrize(), t)?;
            Ok((left, right))
        } else if self.lambda == 0.0 {
            let left = self.rect_r(t)?;
            let right = t * classical_r(&self.measure.square_pushforward(), t)?;
            Ok((left, right))
        } else {
            Err(Error::invalid(format!(
                "the R-transform identity holds only for lambda 0 or 1, got {}",
                self.lambda
            )))
        }
    }
}

// ===== classical R-transform =====

/// Classical R-transform `R(t) = G^{-1}(t) - 1/t` of a discrete measure,
/// with `R(0)` the mean.
///
/// For `t > 0` the relevant branch of the Cauchy transform `G` decreases
/// from `+infinity` to `0` right of the support, and the elementary bounds
/// `1/(z - a_min) <= G(z) <= 1/(z - a_max)` bracket `G^{-1}(t)` inside
/// `[a_min + 1/t, a_max + 1/t]`; `t < 0` mirrors this left of the support.
pub fn classical_r(nu: &DiscreteMeasure, t: f64) -> Result<f64> {
    if !t.is_finite() {
        return Err(Error::invalid(format!("non-finite t = {t}")));
    }
    if t == 0.0 {
        return Ok(nu.moment(1));
    }
    let atoms = nu.atoms();
    let a_min = atoms[0];
    let a_max = atoms[atoms.len() - 1];
    if a_min == a_max {
        // Point mass: G(z) = 1/(z - a), so R is constant.
        return Ok(a_min);
    }
    let (mut lo, mut hi) = (a_min + 1.0 / t, a_max + 1.0 / t);
    if t > 0.0 {
        // Keep the bracket right of the support; close enough to a_max the
        // leading pole pushes G above any target.
        if lo <= a_max {
            let w_edge = nu.weights()[atoms.len() - 1];
            lo = a_max + 0.5 * (w_edge / t).min(hi - a_max);
        }
    } else if hi >= a_min {
        let w_edge = nu.weights()[0];
        hi = a_min - 0.5 * (w_edge / -t).min(a_min - lo);
    }
    let f = |z: f64| nu.cauchy_transform(z).map_or(f64::NAN, |v| v - t);
    let df = |z: f64| nu.cauchy_transform_deriv(z).map_or(f64::NAN, |v| v);
    let z_star = bisect_newton(f, df, lo, hi, ROOT_TOL * (1.0 + hi.abs()))?;
    Ok(z_star - 1.0 / t)
}

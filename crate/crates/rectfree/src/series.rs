//! Truncated power series and the cumulant side of the rectangular
//! R-transform.
//!
//! Where [`crate::transforms`] evaluates `C` pointwise through root finding,
//! this module works with `C` as a formal series: its coefficients are the
//! rectangular cumulants `c_{2k}`, and they linearize the free convolution of
//! singular-value laws (`c_{2k}` of the convolution is the sum of the
//! `c_{2k}` of the operands).
//!
//! Everything rests on the formal identity `M = C o H` with
//! `H(z) = z T(M(z))`: the coefficient of `z^k` on either side only involves
//! coefficients of order at most `k` on the other, so truncated series
//! arithmetic recovers cumulants from moments exactly, and back. Routines
//! work internally at one order above the requested one; the returned
//! coefficients are exact up to roundoff.

use crate::error::{Error, Result};
use crate::measure::DiscreteMeasure;

/// Default truncation order: cumulants `c_2` through `c_24`.
pub const DEFAULT_ORDER: usize = 12;

/// A polynomial truncation of a power series; `coeffs[k]` is the coefficient
/// of `z^k`.
///
/// Binary operations truncate to the shorter operand, which is the order to
/// which the result is trustworthy anyway.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerSeries {
    coeffs: Vec<f64>,
}

impl PowerSeries {
    pub fn new(coeffs: Vec<f64>) -> Self {
        let coeffs = if coeffs.is_empty() { vec![0.0] } else { coeffs };
        PowerSeries { coeffs }
    }

    pub fn zero(order: usize) -> Self {
        PowerSeries {
            coeffs: vec![0.0; order + 1],
        }
    }

    /// The truncation order (largest represented power of `z`).
    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    /// Coefficient of `z^k`; zero past the truncation order.
    pub fn coeff(&self, k: usize) -> f64 {
        self.coeffs.get(k).copied().unwrap_or(0.0)
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Reinterpret at a different order, padding with zeros or dropping the
    /// tail.
    pub fn with_order(mut self, order: usize) -> Self {
        self.coeffs.resize(order + 1, 0.0);
        self
    }

    pub fn add(&self, rhs: &Self) -> Self {
        let n = self.order().min(rhs.order());
        PowerSeries::new((0..=n).map(|k| self.coeff(k) + rhs.coeff(k)).collect())
    }

    pub fn scale(&self, s: f64) -> Self {
        PowerSeries::new(self.coeffs.iter().map(|c| c * s).collect())
    }

    pub fn mul(&self, rhs: &Self) -> Self {
        let n = self.order().min(rhs.order());
        let mut out = vec![0.0; n + 1];
        for (i, &a) in self.coeffs.iter().enumerate().take(n + 1) {
            if a == 0.0 {
                continue;
            }
            for (j, &b) in rhs.coeffs.iter().enumerate().take(n + 1 - i) {
                out[i + j] += a * b;
            }
        }
        PowerSeries::new(out)
    }

    /// Multiply by `z`, keeping the order (the top coefficient falls off the
    /// end of the truncation).
    pub fn shift_up(&self) -> Self {
        let n = self.order();
        let mut out = vec![0.0; n + 1];
        out[1..].copy_from_slice(&self.coeffs[..n]);
        PowerSeries::new(out)
    }

    /// Divide by `z`; requires a vanishing constant term.
    pub fn shift_down(&self) -> Result<Self> {
        if self.coeff(0) != 0.0 {
            return Err(Error::numerical(
                "cannot divide by z: constant term is nonzero",
            ));
        }
        Ok(PowerSeries::new(self.coeffs[1..].to_vec()))
    }

    /// Multiplicative inverse `1/f`; requires a nonzero constant term.
    pub fn reciprocal(&self) -> Result<Self> {
        let a0 = self.coeff(0);
        if a0 == 0.0 {
            return Err(Error::numerical(
                "series has no reciprocal: constant term vanishes",
            ));
        }
        let n = self.order();
        let mut out = vec![0.0; n + 1];
        out[0] = 1.0 / a0;
        for k in 1..=n {
            let mut s = 0.0;
            for j in 1..=k {
                s += self.coeff(j) * out[k - j];
            }
            out[k] = -s / a0;
        }
        Ok(PowerSeries::new(out))
    }

    /// Composition `self(inner)`; the inner series must vanish at zero or
    /// the truncation would be meaningless.
    pub fn compose(&self, inner: &Self) -> Self {
        assert_eq!(
            inner.coeff(0),
            0.0,
            "composition needs an inner series with zero constant term"
        );
        let n = self.order().min(inner.order());
        let mut acc = PowerSeries::zero(n);
        for k in (0..=self.order().min(n)).rev() {
            acc = acc.mul(inner);
            acc.coeffs[0] += self.coeff(k);
        }
        acc.with_order(n)
    }

    /// Compositional inverse of `f` with `f(0) = 0`, `f'(0) != 0`, computed
    /// order by order: once orders below `k` are fixed, the `z^k` defect of
    /// `f(g)` is linear in the unknown `g_k` with slope `f'(0)`.
    pub fn revert(&self) -> Result<Self> {
        if self.coeff(0) != 0.0 {
            return Err(Error::numerical(
                "cannot revert a series that does not vanish at zero",
            ));
        }
        let f1 = self.coeff(1);
        if f1 == 0.0 {
            return Err(Error::numerical(
                "cannot revert a series with vanishing linear term",
            ));
        }
        let n = self.order();
        let mut g = PowerSeries::zero(n);
        if n >= 1 {
            g.coeffs[1] = 1.0 / f1;
        }
        for k in 2..=n {
            let defect = self.compose(&g).coeff(k);
            g.coeffs[k] -= defect / f1;
        }
        Ok(g)
    }

    /// Evaluate at a point by Horner's rule.
    pub fn eval(&self, z: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * z + c)
    }
}

/// `T(f) = (lambda f + 1)(f + 1)` applied to a series.
fn t_apply(lambda: f64, f: &PowerSeries) -> PowerSeries {
    let sq = f.mul(f);
    let mut out = sq.scale(lambda).add(&f.scale(lambda + 1.0));
    out.coeffs[0] += 1.0;
    out
}

/// The squared-moment generating series `M(z) = sum_k m_k(mu^2) z^k`
/// truncated at `order`.
pub fn squared_moment_series(mu: &DiscreteMeasure, order: usize) -> PowerSeries {
    let mut coeffs = vec![0.0; order + 1];
    for k in 1..=order {
        coeffs[k] = mu.moment(2 * k as u32);
    }
    PowerSeries::new(coeffs)
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::invalid(format!(
            "aspect ratio lambda must lie in [0, 1], got {lambda}"
        )));
    }
    Ok(())
}

/// Solve `T(C) = ratio` for a series `C` vanishing at zero.
///
/// The fixed-point form `C = (ratio - 1 - lambda C^2) / (1 + lambda)` settles
/// one further coefficient per sweep because `C^2` at order `k` only uses
/// orders below `k`.
fn t_inverse_series(lambda: f64, ratio: &PowerSeries) -> PowerSeries {
    let n = ratio.order();
    let mut target = ratio.clone();
    target.coeffs[0] -= 1.0;
    let mut c = PowerSeries::zero(n);
    for _ in 0..=n {
        let sq = c.mul(&c);
        c = target.add(&sq.scale(-lambda)).scale(1.0 / (1.0 + lambda));
    }
    c
}

/// Rectangular cumulants `c_2, c_4, ..., c_{2 order}` of a singular-value
/// law, read off the series expansion of `C(z) = T^{-1}(z / H^{-1}(z))`.
pub fn rect_cumulants(mu: &DiscreteMeasure, lambda: f64, order: usize) -> Result<Vec<f64>> {
    check_lambda(lambda)?;
    if order == 0 {
        return Ok(Vec::new());
    }
    let p = order + 1;
    let m = squared_moment_series(mu, p);
    let h = t_apply(lambda, &m).shift_up(); // z T(M(z))
    let h_inv = h.revert()?;
    let ratio = h_inv.shift_down()?.reciprocal()?; // z / H^{-1}(z)
    let c = t_inverse_series(lambda, &ratio);
    Ok((1..=order).map(|k| c.coeff(k)).collect())
}

/// Moments `m_1, ..., m_N` of the squared law determined by the cumulants
/// `c_2, ..., c_{2N}` at aspect ratio `lambda`.
///
/// Inverts [`rect_cumulants`] through the same identity read the other way:
/// `W(u) = u / T(C(u))` is the compositional inverse of `H`, so
/// `M = C o revert(W)`.
pub fn cumulants_to_squared_moments(cumulants: &[f64], lambda: f64) -> Result<Vec<f64>> {
    check_lambda(lambda)?;
    let n = cumulants.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let p = n + 1;
    let mut c = PowerSeries::zero(p);
    c.coeffs[1..=n].copy_from_slice(cumulants);
    let w = t_apply(lambda, &c).reciprocal()?.shift_up(); // u / T(C(u))
    let h = w.revert()?;
    let m = c.compose(&h);
    Ok((1..=n).map(|k| m.coeff(k)).collect())
}

/// Moments of the squared free convolution: cumulants of the operands add,
/// and the sum is pushed back to moments.
pub fn rect_free_convolve(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    lambda: f64,
    order: usize,
) -> Result<Vec<f64>> {
    let ca = rect_cumulants(mu, lambda, order)?;
    let cb = rect_cumulants(nu, lambda, order)?;
    let sum: Vec<f64> = ca.iter().zip(cb.iter()).map(|(a, b)| a + b).collect();
    cumulants_to_squared_moments(&sum, lambda)
}

/// Evaluate the truncated cumulant series `sum_k c_{2k} z^k` at a point.
pub fn evaluate_cumulant_series(cumulants: &[f64], z: f64) -> f64 {
    cumulants.iter().rev().fold(0.0, |acc, &c| acc * z + c) * z
}

//! Finitely supported probability measures on the real line.
//!
//! A [`DiscreteMeasure`] is the basic input everywhere in this crate: it
//! models the singular-value law of a (rescaled) rectangular matrix, so most
//! call sites care about the *squared* measure. The generating function of
//! the squared moments and the Cauchy transform both live here; everything
//! transform-shaped builds on top of them.
//!
//! Construction is strict: atoms must be finite, weights non-negative, and
//! the total mass within `1e-9` of one (it is then renormalized to machine
//! precision). Atoms closer than `1e-14 * K` are merged, with `K` the largest
//! absolute atom, so downstream root finding never sees two poles a few ulps
//! apart.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative gap (in units of the support bound) under which two atoms are
/// considered the same point.
const MERGE_REL_TOL: f64 = 1e-14;
/// Weight sums further than this from 1 are rejected outright.
const MASS_REJECT_TOL: f64 = 1e-9;

/// A probability measure `sum_i w_i * delta(a_i)` with finitely many atoms.
///
/// Atoms are kept sorted in increasing order and the weights renormalized to
/// sum to one, so two measures built from the same data compare bit-equal.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    atoms: Vec<f64>,
    weights: Vec<f64>,
}

/// On-disk form: `{"atoms": [...], "weights": [...]}` with `weights`
/// optional (uniform when missing). A bare JSON array is also accepted and
/// is read as a list of singular values with uniform weights.
#[derive(Serialize, Deserialize)]
struct MeasureFile {
    atoms: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    weights: Option<Vec<f64>>,
}

impl DiscreteMeasure {
    /// Build a measure from parallel atom/weight lists.
    pub fn new(atoms: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::invalid("measure needs at least one atom"));
        }
        if atoms.len() != weights.len() {
            return Err(Error::invalid(format!(
                "{} atoms but {} weights",
                atoms.len(),
                weights.len()
            )));
        }
        if let Some(a) = atoms.iter().find(|a| !a.is_finite()) {
            return Err(Error::invalid(format!("non-finite atom {a}")));
        }
        if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(Error::invalid(format!("bad weight {w}")));
        }
        let mass: f64 = weights.iter().sum();
        if (mass - 1.0).abs() > MASS_REJECT_TOL {
            return Err(Error::invalid(format!(
                "weights sum to {mass}, further than {MASS_REJECT_TOL} from 1"
            )));
        }

        let mut pairs: Vec<(f64, f64)> = atoms
            .into_iter()
            .zip(weights)
            .filter(|&(_, w)| w > 0.0)
            .map(|(a, w)| (a, w / mass))
            .collect();
        if pairs.is_empty() {
            return Err(Error::invalid("all weights are zero"));
        }
        pairs.sort_by(|x, y| x.0.total_cmp(&y.0));

        let bound = pairs.iter().fold(0.0f64, |m, &(a, _)| m.max(a.abs()));
        let merge_gap = MERGE_REL_TOL * bound;
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(pairs.len());
        for (a, w) in pairs {
            match merged.last_mut() {
                Some(last) if a - last.0 <= merge_gap => {
                    // Weighted midpoint keeps the merged atom where the mass
                    // is; exact duplicates keep their value bit-for-bit so
                    // that merging is idempotent.
                    if a != last.0 {
                        last.0 = (last.0 * last.1 + a * w) / (last.1 + w);
                    }
                    last.1 += w;
                }
                _ => merged.push((a, w)),
            }
        }

        let (atoms, weights) = merged.into_iter().unzip();
        Ok(DiscreteMeasure { atoms, weights })
    }

    /// Uniform measure on a list of singular values (all must be `>= 0`).
    pub fn from_singular_values(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("empty singular value list"));
        }
        if let Some(v) = values.iter().find(|v| !(**v >= 0.0)) {
            return Err(Error::invalid(format!("negative singular value {v}")));
        }
        let w = 1.0 / values.len() as f64;
        Self::new(values.to_vec(), vec![w; values.len()])
    }

    /// Point mass at `atom`.
    pub fn dirac(atom: f64) -> Result<Self> {
        Self::new(vec![atom], vec![1.0])
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Largest absolute atom; `0` exactly for the point mass at zero.
    pub fn support_bound(&self) -> f64 {
        self.atoms.iter().fold(0.0f64, |m, a| m.max(a.abs()))
    }

    /// True when the measure is the point mass at zero. Every transform of
    /// this measure degenerates to something explicit, so callers special-case
    /// it.
    pub fn is_zero(&self) -> bool {
        self.support_bound() == 0.0
    }

    /// Even symmetrization: half the mass of each atom goes to `-atom`.
    /// Already-symmetric measures come back unchanged; the operation is
    /// idempotent.
    pub fn symmetrize(&self) -> Self {
        let mut atoms = Vec::with_capacity(2 * self.atoms.len());
        let mut weights = Vec::with_capacity(2 * self.atoms.len());
        for (&a, &w) in self.atoms.iter().zip(&self.weights) {
            atoms.push(a);
            weights.push(0.5 * w);
            atoms.push(-a);
            weights.push(0.5 * w);
        }
        // Inputs came from a valid measure, so this cannot fail.
        Self::new(atoms, weights).expect("symmetrize preserves validity")
    }

    /// Pushforward under `t -> t^2`.
    pub fn square_pushforward(&self) -> Self {
        let atoms = self.atoms.iter().map(|a| a * a).collect();
        Self::new(atoms, self.weights.clone()).expect("squaring preserves validity")
    }

    /// Raw moment `sum_i w_i a_i^k`; `k = 0` gives 1.
    pub fn moment(&self, k: u32) -> f64 {
        self.atoms
            .iter()
            .zip(&self.weights)
            .map(|(a, w)| w * a.powi(k as i32))
            .sum()
    }

    /// Generating function of the squared-measure moments,
    /// `M(z) = sum_i w_i a_i^2 z / (1 - a_i^2 z)`.
    ///
    /// Defined for every real `z` that is not a pole `1 / a_i^2`. On
    /// `[0, 1/K^2)` it is non-negative and increasing, which is the range the
    /// transform layer uses.
    pub fn squared_moment_gen(&self, z: f64) -> Result<f64> {
        if !z.is_finite() {
            return Err(Error::invalid(format!("non-finite z = {z}")));
        }
        let mut acc = 0.0;
        for (&a, &w) in self.atoms.iter().zip(&self.weights) {
            let t2 = a * a;
            let denom = 1.0 - t2 * z;
            if denom == 0.0 {
                return Err(Error::domain(format!(
                    "z = {z} is a pole of the squared-moment generating function (atom {a})"
                )));
            }
            acc += w * t2 * z / denom;
        }
        Ok(acc)
    }

    /// Derivative of [`Self::squared_moment_gen`] in `z`:
    /// `sum_i w_i a_i^2 / (1 - a_i^2 z)^2`.
    pub fn squared_moment_gen_deriv(&self, z: f64) -> Result<f64> {
        if !z.is_finite() {
            return Err(Error::invalid(format!("non-finite z = {z}")));
        }
        let mut acc = 0.0;
        for (&a, &w) in self.atoms.iter().zip(&self.weights) {
            let t2 = a * a;
            let denom = 1.0 - t2 * z;
            if denom == 0.0 {
                return Err(Error::domain(format!(
                    "z = {z} is a pole of the squared-moment generating function (atom {a})"
                )));
            }
            acc += w * t2 / (denom * denom);
        }
        Ok(acc)
    }

    /// Cauchy transform `G(z) = sum_i w_i / (z - a_i)` for real `z` off the
    /// support.
    pub fn cauchy_transform(&self, z: f64) -> Result<f64> {
        if !z.is_finite() {
            return Err(Error::invalid(format!("non-finite z = {z}")));
        }
        let mut acc = 0.0;
        for (&a, &w) in self.atoms.iter().zip(&self.weights) {
            let denom = z - a;
            if denom == 0.0 {
                return Err(Error::domain(format!("z = {z} hits the atom at {a}")));
            }
            acc += w / denom;
        }
        Ok(acc)
    }

    /// Derivative of the Cauchy transform, `-sum_i w_i / (z - a_i)^2`.
    pub fn cauchy_transform_deriv(&self, z: f64) -> Result<f64> {
        if !z.is_finite() {
            return Err(Error::invalid(format!("non-finite z = {z}")));
        }
        let mut acc = 0.0;
        for (&a, &w) in self.atoms.iter().zip(&self.weights) {
            let denom = z - a;
            if denom == 0.0 {
                return Err(Error::domain(format!("z = {z} hits the atom at {a}")));
            }
            acc -= w / (denom * denom);
        }
        Ok(acc)
    }

    /// Left-continuous quantile: the smallest atom whose cumulative weight
    /// reaches `p`. Used to discretize a measure into `n` representative
    /// points via `p = (k - 1/2) / n`.
    pub fn quantile(&self, p: f64) -> f64 {
        let mut cum = 0.0;
        for (&a, &w) in self.atoms.iter().zip(&self.weights) {
            cum += w;
            if cum >= p {
                return a;
            }
        }
        *self.atoms.last().expect("measure is never empty")
    }

    // ===== serialization =====

    pub fn from_json_str(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        if value.is_array() {
            let values: Vec<f64> = serde_json::from_value(value)?;
            return Self::from_singular_values(&values);
        }
        let file: MeasureFile = serde_json::from_value(value)?;
        match file.weights {
            Some(w) => Self::new(file.atoms, w),
            None => {
                let n = file.atoms.len();
                if n == 0 {
                    return Err(Error::invalid("measure needs at least one atom"));
                }
                Self::new(file.atoms, vec![1.0 / n as f64; n])
            }
        }
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text)
    }

    pub fn to_json_string(&self) -> String {
        let file = MeasureFile {
            atoms: self.atoms.clone(),
            weights: Some(self.weights.clone()),
        };
        serde_json::to_string(&file).expect("plain floats always serialize")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn uniform(atoms: &[f64]) -> DiscreteMeasure {
        DiscreteMeasure::from_singular_values(atoms).unwrap()
    }

    #[test]
    fn constructor_rejects_bad_input() {
        assert!(DiscreteMeasure::new(vec![], vec![]).is_err());
        assert!(DiscreteMeasure::new(vec![1.0], vec![1.0, 0.5]).is_err());
        assert!(DiscreteMeasure::new(vec![f64::NAN], vec![1.0]).is_err());
        assert!(DiscreteMeasure::new(vec![f64::INFINITY], vec![1.0]).is_err());
        assert!(DiscreteMeasure::new(vec![1.0], vec![-0.1]).is_err());
        // total mass 0.9 is further than 1e-9 from 1
        assert!(DiscreteMeasure::new(vec![1.0, 2.0], vec![0.5, 0.4]).is_err());
        assert!(DiscreteMeasure::new(vec![1.0], vec![0.0]).is_err());
    }

    #[test]
    fn constructor_renormalizes_small_mass_defect() {
        let m = DiscreteMeasure::new(vec![1.0, 2.0], vec![0.5, 0.5 + 3e-10]).unwrap();
        let total: f64 = m.weights().iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constructor_merges_atoms_within_relative_gap() {
        let m = DiscreteMeasure::new(vec![1.0, 1.0 + 1e-15], vec![0.5, 0.5]).unwrap();
        assert_eq!(m.atoms().len(), 1);
        assert!((m.weights()[0] - 1.0).abs() < 1e-15);

        // a 1e-13 gap at K = 1 stays resolved
        let m = DiscreteMeasure::new(vec![1.0, 1.0 + 1e-13], vec![0.5, 0.5]).unwrap();
        assert_eq!(m.atoms().len(), 2);
    }

    #[test]
    fn from_singular_values_basics() {
        let m = uniform(&[2.0, 3.0]);
        assert_eq!(m.atoms(), &[2.0, 3.0]);
        assert_eq!(m.weights(), &[0.5, 0.5]);
        assert_eq!(m.support_bound(), 3.0);

        assert!(DiscreteMeasure::from_singular_values(&[]).is_err());
        assert!(DiscreteMeasure::from_singular_values(&[-1.0]).is_err());

        let zero = uniform(&[0.0, 0.0]);
        assert!(zero.is_zero());
        assert_eq!(zero.support_bound(), 0.0);
    }

    #[test]
    fn singular_values_match_an_explicit_svd() {
        // Oracle: the 2x4 matrix with rows (2,0,0,0) and (0,3,0,0) has
        // singular values {2, 3} by direct computation.
        let mat = nalgebra::DMatrix::<f64>::from_row_slice(
            2,
            4,
            &[2.0, 0.0, 0.0, 0.0, 0.0, 3.0, 0.0, 0.0],
        );
        let mut sv: Vec<f64> = mat.singular_values().iter().copied().collect();
        sv.sort_by(f64::total_cmp);
        let m = DiscreteMeasure::from_singular_values(&sv).unwrap();
        assert!((m.atoms()[0] - 2.0).abs() < 1e-12);
        assert!((m.atoms()[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn symmetrize_splits_mass() {
        let m = DiscreteMeasure::dirac(1.0).unwrap().symmetrize();
        assert_eq!(m.atoms(), &[-1.0, 1.0]);
        assert_eq!(m.weights(), &[0.5, 0.5]);

        let m = DiscreteMeasure::new(vec![1.0, 2.0], vec![0.25, 0.75])
            .unwrap()
            .symmetrize();
        assert_eq!(m.atoms(), &[-2.0, -1.0, 1.0, 2.0]);
        assert_eq!(m.weights(), &[0.375, 0.125, 0.125, 0.375]);
    }

    #[test]
    fn symmetrize_fixes_symmetric_measures() {
        let sym = DiscreteMeasure::new(vec![-1.0, 1.0], vec![0.5, 0.5]).unwrap();
        let again = sym.symmetrize();
        assert_eq!(sym.atoms(), again.atoms());
        assert_eq!(sym.weights(), again.weights());
    }

    #[test]
    fn square_pushforward_folds_signs() {
        let m = DiscreteMeasure::new(vec![-1.0, 1.0], vec![0.5, 0.5])
            .unwrap()
            .square_pushforward();
        assert_eq!(m.atoms(), &[1.0]);
        assert_eq!(m.weights(), &[1.0]);

        let m = uniform(&[0.5, 1.5]).square_pushforward();
        assert_eq!(m.atoms(), &[0.25, 2.25]);
    }

    #[test]
    fn moments_of_simple_measures() {
        let d1 = DiscreteMeasure::dirac(1.0).unwrap();
        assert_eq!(d1.moment(7), 1.0);
        assert_eq!(d1.moment(0), 1.0);

        let sym = d1.symmetrize();
        assert_eq!(sym.moment(7), 0.0);
        assert_eq!(sym.moment(2), 1.0);

        let m = uniform(&[0.5, 1.5]);
        assert_eq!(m.moment(2), 1.25);
    }

    #[test]
    fn squared_moment_gen_closed_forms() {
        let zero = DiscreteMeasure::dirac(0.0).unwrap();
        for z in [-3.0, -0.5, 0.0, 0.5, 7.0] {
            assert_eq!(zero.squared_moment_gen(z).unwrap(), 0.0);
        }

        // delta_1: M(z) = z / (1 - z)
        let d1 = DiscreteMeasure::dirac(1.0).unwrap();
        assert_eq!(d1.squared_moment_gen(0.0).unwrap(), 0.0);
        assert!((d1.squared_moment_gen(0.5).unwrap() - 1.0).abs() < 1e-15);
        for z in [-1.0, 0.1, 0.9] {
            let direct = z / (1.0 - z);
            assert!((d1.squared_moment_gen(z).unwrap() - direct).abs() < 1e-12);
        }
        assert!(matches!(
            d1.squared_moment_gen(1.0),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn squared_moment_gen_matches_moment_partial_sums() {
        // M(z) = sum_k m_k(mu^2) z^k for |z| < 1/K^2; compare a 20-term
        // partial sum, whose tail is dominated by a geometric series.
        let m = uniform(&[0.5, 1.0]);
        let sq = m.square_pushforward();
        let z: f64 = 0.3;
        let mut partial = 0.0;
        for k in 1..=20u32 {
            partial += sq.moment(k) * z.powi(k as i32);
        }
        let tail = z.powi(21) / (1.0 - z);
        let value = m.squared_moment_gen(z).unwrap();
        assert!((value - partial).abs() <= tail + 1e-12);
    }

    #[test]
    fn squared_moment_gen_deriv_matches_finite_difference() {
        let m = uniform(&[0.5, 1.0, 1.5]);
        let z = 0.2;
        let h = 1e-6;
        let fd = (m.squared_moment_gen(z + h).unwrap() - m.squared_moment_gen(z - h).unwrap())
            / (2.0 * h);
        let exact = m.squared_moment_gen_deriv(z).unwrap();
        assert!((fd - exact).abs() < 1e-7 * exact.abs().max(1.0));
    }

    #[test]
    fn cauchy_transform_closed_forms() {
        let zero = DiscreteMeasure::dirac(0.0).unwrap();
        for z in [-2.0, 0.5, 10.0] {
            assert!((zero.cauchy_transform(z).unwrap() - 1.0 / z).abs() < 1e-15);
        }

        let sym = DiscreteMeasure::dirac(1.0).unwrap().symmetrize();
        assert!((sym.cauchy_transform(2.0).unwrap() - 2.0 / 3.0).abs() < 1e-15);

        let d1 = DiscreteMeasure::dirac(1.0).unwrap();
        assert_eq!(d1.cauchy_transform(3.0).unwrap(), 0.5);
        assert!(matches!(d1.cauchy_transform(1.0), Err(Error::Domain(_))));

        // z G(z) -> 1 far from the support
        let m = uniform(&[0.3, 0.9, 1.4]);
        let z = 1e6;
        assert!((z * m.cauchy_transform(z).unwrap() - 1.0).abs() < 2e-6);
    }

    #[test]
    fn cauchy_transform_decreases_right_of_support() {
        let m = uniform(&[0.5, 1.0, 2.0]);
        let mut prev = f64::INFINITY;
        for i in 0..50 {
            let z = 2.0 + 1e-6 + 0.2 * i as f64;
            let g = m.cauchy_transform(z).unwrap();
            assert!(g > 0.0 && g < prev);
            prev = g;
        }
    }

    #[test]
    fn quantile_walks_the_cdf() {
        let m = uniform(&[1.0, 2.0, 3.0]);
        assert_eq!(m.quantile(0.1), 1.0);
        assert_eq!(m.quantile(0.5), 2.0);
        assert_eq!(m.quantile(0.99), 3.0);
    }

    #[test]
    fn json_round_trip_and_variants() {
        let m = DiscreteMeasure::new(vec![0.5, 1.5], vec![0.25, 0.75]).unwrap();
        let back = DiscreteMeasure::from_json_str(&m.to_json_string()).unwrap();
        assert_eq!(m, back);

        let bare = DiscreteMeasure::from_json_str("[1.0, 2.0, 2.0]").unwrap();
        assert_eq!(bare.atoms(), &[1.0, 2.0]);
        assert_eq!(bare.weights(), &[1.0 / 3.0, 2.0 / 3.0]);

        let no_weights = DiscreteMeasure::from_json_str(r#"{"atoms":[-1.0,1.0]}"#).unwrap();
        assert_eq!(no_weights.weights(), &[0.5, 0.5]);

        assert!(matches!(
            DiscreteMeasure::from_json_str("{"),
            Err(Error::Json(_))
        ));
        assert!(DiscreteMeasure::from_json_str(r#"{"atoms":[],"weights":[]}"#).is_err());
        assert!(matches!(
            DiscreteMeasure::from_json_file("/nonexistent/measure.json"),
            Err(Error::Io(_))
        ));
    }

    proptest! {
        #[test]
        fn symmetrize_is_idempotent(
            atoms in proptest::collection::vec(0.01f64..3.0, 1..6),
        ) {
            let m = DiscreteMeasure::from_singular_values(&atoms).unwrap();
            let once = m.symmetrize();
            let twice = once.symmetrize();
            prop_assert_eq!(once.atoms(), twice.atoms());
            for (a, b) in once.weights().iter().zip(twice.weights()) {
                prop_assert!((a - b).abs() < 1e-15);
            }
        }

        #[test]
        fn squaring_commutes_with_symmetrization(
            atoms in proptest::collection::vec(0.01f64..3.0, 1..6),
        ) {
            let m = DiscreteMeasure::from_singular_values(&atoms).unwrap();
            let a = m.square_pushforward();
            let b = m.symmetrize().square_pushforward();
            for k in 0..6 {
                let (ma, mb) = (a.moment(k), b.moment(k));
                prop_assert!((ma - mb).abs() <= 1e-12 * ma.abs().max(1.0));
            }
        }

        #[test]
        fn squared_moment_gen_monotone_below_pole(
            atoms in proptest::collection::vec(0.05f64..2.0, 1..6),
        ) {
            let m = DiscreteMeasure::from_singular_values(&atoms).unwrap();
            let cap = m.support_bound().powi(-2);
            let mut prev = -1.0;
            for i in 0..40 {
                let z = cap * 0.975 * i as f64 / 39.0;
                let v = m.squared_moment_gen(z).unwrap();
                prop_assert!(v >= prev);
                prop_assert!(v >= 0.0);
                prev = v;
            }
        }
    }
}

//! A small algebra of class-K functions: continuous, strictly increasing,
//! zero at zero. These carry every comparison-function role in the
//! certificate bundle and the scalar error model.
//!
//! Closed-form inverses exist for the linear and power forms; everything
//! else inverts by monotone bisection with bracket doubling.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

const INV_TOL: f64 = 1e-10;

/// One monomial of a positive-coefficient polynomial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolyTerm {
    pub coeff: f64,
    pub exponent: f64,
}

/// Class-K function forms closed under the operations this crate needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum ClassK {
    /// a * r
    Linear { a: f64 },
    /// a * r^p, p > 0
    Power { a: f64, p: f64 },
    /// sum of a_i * r^{p_i} with a_i > 0
    Polynomial { terms: Vec<PolyTerm> },
    /// outer(inner(r))
    Compose { outer: Box<ClassK>, inner: Box<ClassK> },
    /// min(inner(r), (1 - eps) * r); keeps Id minus the result increasing
    MinWithScaledId { inner: Box<ClassK>, eps: f64 },
}

impl ClassK {
    pub fn linear(a: f64) -> Self {
        ClassK::Linear { a }
    }

    pub fn power(a: f64, p: f64) -> Self {
        ClassK::Power { a, p }
    }

    pub fn poly(terms: &[(f64, f64)]) -> Self {
        ClassK::Polynomial {
            terms: terms
                .iter()
                .map(|&(coeff, exponent)| PolyTerm { coeff, exponent })
                .collect(),
        }
    }

    pub fn compose(outer: ClassK, inner: ClassK) -> Self {
        ClassK::Compose {
            outer: Box::new(outer),
            inner: Box::new(inner),
        }
    }

    pub fn min_with_scaled_id(inner: ClassK, eps: f64) -> Self {
        ClassK::MinWithScaledId {
            inner: Box::new(inner),
            eps,
        }
    }

    /// Rejects non-positive coefficients and exponents at construction
    /// points that accept external data.
    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            ClassK::Linear { a } => *a > 0.0,
            ClassK::Power { a, p } => *a > 0.0 && *p > 0.0,
            ClassK::Polynomial { terms } => {
                !terms.is_empty() && terms.iter().all(|t| t.coeff > 0.0 && t.exponent > 0.0)
            }
            ClassK::Compose { outer, inner } => {
                outer.validate()?;
                inner.validate()?;
                true
            }
            ClassK::MinWithScaledId { inner, eps } => {
                inner.validate()?;
                *eps > 0.0 && *eps < 1.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("class-K parameters out of range: {self:?}")))
        }
    }

    /// Evaluates the function. Panics on a negative argument: class-K
    /// functions are only defined on [0, inf) and a negative input is a
    /// caller bug, not recoverable data.
    pub fn eval(&self, r: f64) -> f64 {
        assert!(r >= 0.0, "class-K function evaluated at negative argument {r}");
        if r == 0.0 {
            return 0.0;
        }
        match self {
            ClassK::Linear { a } => a * r,
            ClassK::Power { a, p } => a * r.powf(*p),
            ClassK::Polynomial { terms } => {
                terms.iter().map(|t| t.coeff * r.powf(t.exponent)).sum()
            }
            ClassK::Compose { outer, inner } => outer.eval(inner.eval(r)),
            ClassK::MinWithScaledId { inner, eps } => inner.eval(r).min((1.0 - eps) * r),
        }
    }

    /// Inverse: the r with f(r) = y, to |f(r) - y| <= 1e-10 * max(1, y).
    /// Linear and power forms invert in closed form; the rest bisect with
    /// bracket doubling from [0, 1].
    pub fn invert(&self, y: f64) -> Result<f64> {
        if y < 0.0 {
            return Err(Error::NotInvertible(format!("negative value {y}")));
        }
        if y == 0.0 {
            return Ok(0.0);
        }
        match self {
            ClassK::Linear { a } => Ok(y / a),
            ClassK::Power { a, p } => Ok((y / a).powf(1.0 / p)),
            _ => self.invert_bisect(y),
        }
    }

    fn invert_bisect(&self, y: f64) -> Result<f64> {
        let mut hi = 1.0f64;
        let mut grow = 0;
        while self.eval(hi) < y {
            hi *= 2.0;
            grow += 1;
            if grow > 400 {
                return Err(Error::NotInvertible(format!(
                    "value {y} not reached below r = {hi:.3e}"
                )));
            }
        }
        let mut lo = 0.0f64;
        let tol = INV_TOL * y.max(1.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let f = self.eval(mid);
            if (f - y).abs() <= tol {
                return Ok(mid);
            }
            if f < y {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// Grid check that the function is strictly increasing and that the
    /// inverse round-trips, on 10^3 points up to `horizon`.
    pub fn check_monotone(&self, horizon: f64) -> Result<()> {
        let n = 1000;
        let mut prev = 0.0;
        for i in 1..=n {
            let r = horizon * i as f64 / n as f64;
            let f = self.eval(r);
            if f <= prev {
                return Err(Error::Certificate(format!(
                    "class-K function not strictly increasing near r = {r}"
                )));
            }
            prev = f;
            let back = self.invert(f)?;
            if (self.eval(back) - f).abs() > 1e-8 * f.max(1.0) {
                return Err(Error::Certificate(format!(
                    "class-K inverse round-trip failed at r = {r}"
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn linear_eval_matches_hand_value() {
        let f = ClassK::linear(0.6);
        assert_relative_eq!(f.eval(5.0), 3.0, epsilon = 1e-15);
    }

    #[test]
    fn polynomial_eval_matches_hand_value() {
        // 3.5 r + 0.16 r^2 at r = 0.04: 0.14 + 0.000256
        let f = ClassK::poly(&[(3.5, 1.0), (0.16, 2.0)]);
        assert_relative_eq!(f.eval(0.04), 0.140256, epsilon = 1e-12);
    }

    #[test]
    fn zero_maps_to_zero() {
        let f = ClassK::compose(ClassK::power(2.0, 2.0), ClassK::linear(3.0));
        assert_eq!(f.eval(0.0), 0.0);
        assert_eq!(f.invert(0.0).unwrap(), 0.0);
    }

    #[test]
    fn closed_form_inverses() {
        assert_relative_eq!(ClassK::linear(2.0).invert(6.0).unwrap(), 3.0);
        let quad = ClassK::power(0.3165, 2.0);
        assert_relative_eq!(quad.invert(0.3165).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn bisection_inverse_round_trip() {
        let f = ClassK::poly(&[(3.5, 1.0), (0.16, 2.0)]);
        for i in 1..=1000 {
            let r = 10.0 * i as f64 / 1000.0;
            let back = f.invert(f.eval(r)).unwrap();
            assert!((back - r).abs() < 1e-8, "round trip off at r = {r}: {back}");
        }
    }

    #[test]
    fn min_with_scaled_id_caps_growth() {
        let f = ClassK::min_with_scaled_id(ClassK::linear(2.0), 1e-6);
        // For large r the (1 - eps) Id branch wins.
        assert!(f.eval(10.0) < 10.0);
        // Near zero the inner branch wins (2r < (1-eps) r is false)...
        // 2r > (1-eps) r always, so the cap is active everywhere here.
        assert_relative_eq!(f.eval(1.0), 1.0 - 1e-6, epsilon = 1e-12);
        let back = f.invert(f.eval(3.0)).unwrap();
        assert!((back - 3.0).abs() < 1e-8);
    }

    #[test]
    fn monotone_check_accepts_composition() {
        let f = ClassK::compose(ClassK::power(1.5, 2.0), ClassK::linear(0.4));
        f.check_monotone(10.0).unwrap();
    }

    #[test]
    fn validate_rejects_bad_coefficients() {
        assert!(ClassK::linear(-1.0).validate().is_err());
        assert!(ClassK::power(1.0, 0.0).validate().is_err());
    }

    #[test]
    fn invert_precision_contract() {
        let f = ClassK::poly(&[(0.5, 1.0), (0.02, 3.0)]);
        for &y in &[1e-6, 0.1, 1.0, 37.5] {
            let r = f.invert(y).unwrap();
            assert!((f.eval(r) - y).abs() <= 1e-10 * y.max(1.0));
        }
    }
}

//! Value-to-radius laws for geocircles.

use thiserror::Error;

use crate::model::{ModelError, ScaleMethod, ScalingSpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScalingError {
    #[error(transparent)]
    InvalidSpec(#[from] ModelError),
    #[error("value {0} is negative or not finite")]
    InvalidValue(f64),
    #[error("no positive values to fit a reference against")]
    AllZero,
}

/// Radius before the user factor and clamps are applied.
pub fn base_radius(value: f64, spec: &ScalingSpec) -> f64 {
    let u = value / spec.reference_value;
    let f = match spec.method {
        ScaleMethod::Linear => u,
        ScaleMethod::Log => u.ln_1p() / std::f64::consts::LN_10,
        ScaleMethod::Flannery => u.powf(ScalingSpec::FLANNERY_EXPONENT),
    };
    spec.base_radius_px * f
}

/// Radius with the user factor applied but no clamping.
pub fn unclamped_radius(value: f64, spec: &ScalingSpec) -> f64 {
    spec.user_factor * base_radius(value, spec)
}

/// Pixel radius for `value`. Zero maps to exactly zero; anything positive
/// is clamped into `[r_min_px, r_max_px]`.
pub fn radius(value: f64, spec: &ScalingSpec) -> Result<f64, ScalingError> {
    spec.validate()?;
    if !(value >= 0.0 && value.is_finite()) {
        return Err(ScalingError::InvalidValue(value));
    }
    if value == 0.0 {
        return Ok(0.0);
    }
    Ok(unclamped_radius(value, spec).clamp(spec.r_min_px, spec.r_max_px))
}

/// Per-frame reference: the largest value, so the biggest circle is drawn at
/// `base_radius_px * user_factor`.
pub fn fit_reference(values: impl IntoIterator<Item = f64>) -> Result<f64, ScalingError> {
    let max = values.into_iter().filter(|v| v.is_finite()).fold(0.0f64, f64::max);
    if max > 0.0 {
        Ok(max)
    } else {
        Err(ScalingError::AllZero)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(method: ScaleMethod) -> ScalingSpec {
        ScalingSpec {
            method,
            base_radius_px: 1.0,
            reference_value: 1.0,
            user_factor: 1.0,
            r_min_px: 1e-12,
            r_max_px: 1e12,
        }
    }

    #[test]
    fn zero_is_zero() {
        for m in [ScaleMethod::Linear, ScaleMethod::Log, ScaleMethod::Flannery] {
            assert_eq!(radius(0.0, &ScalingSpec::default()).unwrap(), 0.0);
            assert_eq!(radius(0.0, &spec(m)).unwrap(), 0.0);
        }
    }

    #[test]
    fn flannery_identity_at_reference() {
        let s = ScalingSpec {
            reference_value: 250.0,
            ..ScalingSpec::default()
        };
        assert_eq!(radius(250.0, &s).unwrap(), s.base_radius_px);
    }

    #[test]
    fn flannery_thousand() {
        // exp(0.57 * ln 1000) = exp(3.937433...) = 51.2861383991...
        let expected = 51.286_138_399_136_5_f64;
        let r = radius(1000.0, &spec(ScaleMethod::Flannery)).unwrap();
        assert!(((r - expected) / expected).abs() < 1e-6, "{r}");
    }

    #[test]
    fn log_and_linear() {
        assert!((radius(9.0, &spec(ScaleMethod::Log)).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(radius(6.0, &spec(ScaleMethod::Linear)).unwrap(), 6.0);
    }

    #[test]
    fn clamps_apply() {
        let s = ScalingSpec::default();
        assert_eq!(radius(1e-9, &s).unwrap(), s.r_min_px);
        assert_eq!(radius(1e9, &s).unwrap(), s.r_max_px);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(radius(-1.0, &ScalingSpec::default()), Err(ScalingError::InvalidValue(_))));
        let bad = ScalingSpec {
            user_factor: 9.0,
            ..ScalingSpec::default()
        };
        assert!(matches!(radius(1.0, &bad), Err(ScalingError::InvalidSpec(_))));
    }

    #[test]
    fn fit_reference_examples() {
        assert_eq!(fit_reference([3.0, 9.0, 27.0]).unwrap(), 27.0);
        assert_eq!(fit_reference([5.0]).unwrap(), 5.0);
        assert_eq!(fit_reference([4.0, 4.0, 4.0]).unwrap(), 4.0);
        assert_eq!(fit_reference([0.0, 0.0]), Err(ScalingError::AllZero));
        assert_eq!(fit_reference([]), Err(ScalingError::AllZero));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn method() -> impl Strategy<Value = ScaleMethod> {
            prop_oneof![Just(ScaleMethod::Linear), Just(ScaleMethod::Log), Just(ScaleMethod::Flannery)]
        }

        proptest! {
            #[test]
            fn monotone(m in method(), a in 0.0f64..1e7, b in 0.0f64..1e7) {
                let s = ScalingSpec { method: m, ..ScalingSpec::default() };
                let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
                prop_assert!(radius(lo, &s).unwrap() <= radius(hi, &s).unwrap());
            }

            #[test]
            fn linear_doubles(v in 1e-3f64..1e6) {
                let s = spec(ScaleMethod::Linear);
                let r1 = radius(v, &s).unwrap();
                let r2 = radius(2.0 * v, &s).unwrap();
                prop_assert!((r2 - 2.0 * r1).abs() <= 1e-12 * r2);
            }
        }
    }
}

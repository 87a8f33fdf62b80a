//! The two information measures and the zero-shot loss.
//!
//! Contextual relevance is `p(X|Q;D) - p(X|Q)`: how much the demonstration
//! helps predict the output. Learning gain is `p(D|Q;X) - p(D|Q)`: how much
//! the output tells about the demonstration. For an exact predictor the two
//! are related by `gain = p(D|Q) / p(X|Q) * relevance`, which is why the
//! slope of gain against relevance measures ICL effectiveness.

use crate::error::{Error, Result};

pub(crate) fn check_probability(what: &'static str, p: f64) -> Result<f64> {
    if p.is_finite() && p > 0.0 && p <= 1.0 {
        Ok(p)
    } else {
        Err(Error::InvalidProbability { what, value: p })
    }
}

/// `p(X|Q;D) - p(X|Q)`. Negative for harmful demonstrations; never clamped.
pub fn contextual_relevance(p_x_qd: f64, p_x_q: f64) -> Result<f64> {
    Ok(check_probability("p(X|Q;D)", p_x_qd)? - check_probability("p(X|Q)", p_x_q)?)
}

/// `p(D|Q;X) - p(D|Q)`. Never clamped.
pub fn learning_gain(p_d_qx: f64, p_d_q: f64) -> Result<f64> {
    Ok(check_probability("p(D|Q;X)", p_d_qx)? - check_probability("p(D|Q)", p_d_q)?)
}

/// Negative log-likelihood of the zero-shot output.
pub fn zero_shot_loss(p_x_q: f64) -> Result<f64> {
    Ok(-libm::log(check_probability("p(X|Q)", p_x_q)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn relevance_examples() {
        assert_eq!(contextual_relevance(0.8, 0.8).unwrap(), 0.0);
        assert!((contextual_relevance(2.0 / 3.0, 0.5).unwrap() - 1.0 / 6.0).abs() < 1e-15);
        assert!((contextual_relevance(0.3, 0.5).unwrap() + 0.2).abs() < 1e-15);
    }

    #[test]
    fn gain_examples() {
        assert_eq!(learning_gain(0.6, 0.6).unwrap(), 0.0);
        assert!((learning_gain(0.8, 0.6).unwrap() - 0.2).abs() < 1e-15);
        assert!((learning_gain(0.1, 0.4).unwrap() + 0.3).abs() < 1e-15);
        // Slope identity on the W1 numbers: 1.2 * 1/6.
        assert!((1.2 * (1.0 / 6.0) - learning_gain(0.8, 0.6).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn loss_examples() {
        assert_eq!(zero_shot_loss(1.0).unwrap(), 0.0);
        assert!((zero_shot_loss(0.5).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((zero_shot_loss((-3.0f64).exp()).unwrap() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_out_of_range() {
        for bad in [0.0, -0.1, 1.5, f64::NAN, f64::INFINITY] {
            assert!(contextual_relevance(bad, 0.5).is_err());
            assert!(contextual_relevance(0.5, bad).is_err());
            assert!(learning_gain(bad, 0.5).is_err());
            assert!(zero_shot_loss(bad).is_err());
        }
    }

    proptest! {
        #[test]
        fn antisymmetric(a in 1e-9f64..=1.0, b in 1e-9f64..=1.0) {
            prop_assert_eq!(contextual_relevance(a, b).unwrap(), -contextual_relevance(b, a).unwrap());
            prop_assert_eq!(learning_gain(a, b).unwrap(), -learning_gain(b, a).unwrap());
        }

        #[test]
        fn loss_strictly_decreasing(a in 1e-9f64..1.0, b in 1e-9f64..1.0) {
            prop_assume!(a < b);
            prop_assert!(zero_shot_loss(a).unwrap() > zero_shot_loss(b).unwrap());
        }
    }
}

//! Score arithmetic for step generation and verification, and for beam
//! aggregation and pruning. Generic over the scalar type.

use crate::error::{Error, Result};
use crate::parse::Prediction;
use crate::scalar::Scalar;

/// Mean token log-probability of a generated step (s_C1).
pub fn step_generation_score<F: Scalar>(token_logprobs: &[F]) -> Result<F> {
    if token_logprobs.is_empty() {
        return Err(Error::invalid_input("token_logprobs must be non-empty"));
    }
    let sum = token_logprobs.iter().fold(F::zero(), |acc, &x| acc + x);
    Ok(sum / F::from_usize(token_logprobs.len()).unwrap())
}

/// Verification score s_C2 from the verifier's mean response
/// log-probability. An affirmative prediction returns the score as-is;
/// a negative prediction flips it to the complement probability in log
/// space, clamped so the result stays finite.
pub fn verification_score<F: Scalar>(
    prediction: Prediction,
    s_hat_c2: F,
    epsilon: F,
) -> Result<F> {
    if s_hat_c2 > F::zero() {
        return Err(Error::invalid_input(format!(
            "s_hat_c2 must be a log-probability (<= 0), got {s_hat_c2}"
        )));
    }
    match prediction {
        Prediction::Correct => Ok(s_hat_c2),
        Prediction::Incorrect => {
            let clamp = (F::one() - epsilon).ln();
            if s_hat_c2 > clamp {
                Ok(epsilon.ln())
            } else {
                Ok((-s_hat_c2.exp()).ln_1p())
            }
        }
    }
}

/// Unified per-step score s_f. With `use_c1` the generation and
/// verification scores are averaged and exponentiated; without it only
/// the verification score is used (ablation mode).
pub fn unify_score<F: Scalar>(s_c1: F, s_c2: F, use_c1: bool) -> F {
    if use_c1 {
        ((s_c1 + s_c2) / (F::one() + F::one())).exp()
    } else {
        s_c2.exp()
    }
}

/// Aggregate beam score sb_m: mean of per-step log s_f values, kept in
/// log space.
pub fn aggregate_beam_score<F: Scalar>(log_sf_values: &[F]) -> Result<F> {
    if log_sf_values.is_empty() {
        return Err(Error::invalid_input("log_sf_values must be non-empty"));
    }
    let sum = log_sf_values.iter().fold(F::zero(), |acc, &x| acc + x);
    Ok(sum / F::from_usize(log_sf_values.len()).unwrap())
}

/// Normalize beam scores into a probability distribution:
/// softmax(sb / tau), with max-subtraction for numerical stability.
pub fn normalize_beam_scores<F: Scalar>(sb_values: &[F], tau: F) -> Result<Vec<F>> {
    if sb_values.is_empty() {
        return Err(Error::invalid_input("sb_values must be non-empty"));
    }
    if tau <= F::zero() {
        return Err(Error::invalid_input("tau must be positive"));
    }
    let scaled: Vec<F> = sb_values.iter().map(|&s| s / tau).collect();
    let max = scaled.iter().fold(F::neg_infinity(), |m, &x| if x > m { x } else { m });
    let exps: Vec<F> = scaled.iter().map(|&x| (x - max).exp()).collect();
    let total = exps.iter().fold(F::zero(), |acc, &x| acc + x);
    Ok(exps.into_iter().map(|x| x / total).collect())
}

/// Per-turn temperature decay: tau <- tau * alpha.
pub fn decay_temperature<F: Scalar>(tau: F, alpha: F) -> F {
    tau * alpha
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_of_logprobs() {
        assert!((step_generation_score(&[-0.2, -0.4]).unwrap() - (-0.3f64)).abs() < 1e-15);
        assert_eq!(step_generation_score(&[0.0]).unwrap(), 0.0);
        assert_eq!(step_generation_score(&[-1.0, -2.0, -3.0]).unwrap(), -2.0);
        assert!(step_generation_score::<f64>(&[]).is_err());
    }

    #[test]
    fn eq1_identity_branch() {
        let s = verification_score(Prediction::Correct, -0.5, 1e-12).unwrap();
        assert_eq!(s, -0.5);
    }

    #[test]
    fn eq1_complement_branch() {
        // ln 0.25 -> ln 0.75, frozen from a high-precision evaluation.
        let s = verification_score(Prediction::Incorrect, 0.25f64.ln(), 1e-12).unwrap();
        assert!((s - 0.75f64.ln()).abs() < 1e-12);
        assert!((s - (-0.2876820724517809)).abs() < 1e-7);
    }

    #[test]
    fn eq1_clamp_keeps_branch_b_finite() {
        let s: f64 = verification_score(Prediction::Incorrect, 0.0, 1e-12).unwrap();
        assert!(s.is_finite());
        assert!((s - 1e-12f64.ln()).abs() < 1e-6);
        assert!((s - (-27.631021115928547)).abs() < 1e-6);
    }

    #[test]
    fn eq1_rejects_positive_logprob() {
        assert!(verification_score(Prediction::Correct, 0.1, 1e-12).is_err());
    }

    #[test]
    fn eq1_boundary_symmetry_at_half() {
        let half = 0.5f64.ln();
        let a = verification_score(Prediction::Correct, half, 1e-12).unwrap();
        let b = verification_score(Prediction::Incorrect, half, 1e-12).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn eq2_unification() {
        assert!((unify_score(-0.2, -0.4, true) - (-0.3f64).exp()).abs() < 1e-12);
        assert!((unify_score::<f64>(-0.2, -0.4, true) - 0.7408182206817179).abs() < 1e-7);
        assert_eq!(unify_score(0.0, 0.0, true), 1.0);
        assert!((unify_score(-5.0, -0.4, false) - (-0.4f64).exp()).abs() < 1e-12);
        assert!((unify_score::<f64>(-5.0, -0.4, false) - 0.6703200460356393).abs() < 1e-7);
    }

    #[test]
    fn beam_score_mean() {
        assert!((aggregate_beam_score::<f64>(&[-0.1, -0.2, -0.3]).unwrap() - (-0.2)).abs() < 1e-15);
        assert_eq!(aggregate_beam_score(&[0.5f64.ln()]).unwrap(), 0.5f64.ln());
        assert_eq!(aggregate_beam_score(&[-1.0, -3.0]).unwrap(), -2.0);
        assert!(aggregate_beam_score::<f64>(&[]).is_err());
    }

    #[test]
    fn softmax_normalization() {
        // softmax([ln 0.8, ln 0.2] / 0.5) = [0.64, 0.04] normalized.
        let p = normalize_beam_scores(&[0.8f64.ln(), 0.2f64.ln()], 0.5).unwrap();
        assert!((p[0] - 0.64 / 0.68).abs() < 1e-12);
        assert!((p[1] - 0.04 / 0.68).abs() < 1e-12);
        assert!((p[0] + p[1] - 1.0).abs() < 1e-12);

        let q = normalize_beam_scores::<f64>(&[-1.23, -1.23], 0.7).unwrap();
        assert!((q[0] - 0.5).abs() < 1e-12);

        let single = normalize_beam_scores(&[-3.0], 0.5).unwrap();
        assert_eq!(single, vec![1.0]);
    }

    #[test]
    fn temperature_decay() {
        assert_eq!(decay_temperature(0.5, 0.5), 0.25);
        assert_eq!(decay_temperature(decay_temperature(0.5, 0.5), 0.5), 0.125);
        assert_eq!(decay_temperature(0.37, 1.0), 0.37);
    }

    #[test]
    fn generic_over_f32() {
        let s = verification_score(Prediction::Incorrect, 0.25f32.ln(), 1e-6f32).unwrap();
        assert!((s - 0.75f32.ln()).abs() < 1e-6);
        let p = normalize_beam_scores(&[0.8f32.ln(), 0.2f32.ln()], 0.5f32).unwrap();
        assert!((p[0] + p[1] - 1.0).abs() < 1e-6);
    }
}

//! Sigmoid focal loss over every (query, token) cell, computed in log-space
//! so extreme logits stay finite.

use grounder_autodiff::{Tape, Tensor, Var};

use crate::error::Result;

/// Per-cell focal term for a probability `p` and binary target, in direct
/// form. Used for match costs; tests check the tape version against it.
pub fn focal_cell(p: f64, positive: bool, alpha: f64, gamma: f64) -> f64 {
    if positive {
        -alpha * (1.0 - p).powf(gamma) * p.ln()
    } else {
        -(1.0 - alpha) * p.powf(gamma) * (1.0 - p).ln()
    }
}

/// Focal loss summed over a `[n, m]` logits matrix against 0/1 targets,
/// divided by `normalizer`.
///
/// Positive cells contribute `-alpha (1-p)^gamma ln p` and negative cells
/// `-(1-alpha) p^gamma ln(1-p)`; both are assembled from `log_sigmoid` so
/// saturated logits cannot produce NaN.
pub fn focal_loss_matrix(
    tape: &mut Tape,
    logits: Var,
    targets: &Tensor,
    alpha: f64,
    gamma: f64,
    normalizer: f64,
) -> Result<Var> {
    let shape = tape.shape(logits).to_vec();
    debug_assert_eq!(&shape, targets.shape());

    let log_p = tape.log_sigmoid(logits)?; // ln p
    let neg_logits = tape.neg(logits)?;
    let log_q = tape.log_sigmoid(neg_logits)?; // ln (1-p)

    // (1-p)^gamma = exp(gamma ln(1-p)); p^gamma analogous
    let gq = tape.scale(log_q, gamma)?;
    let mod_pos = tape.exp(gq)?;
    let gp = tape.scale(log_p, gamma)?;
    let mod_neg = tape.exp(gp)?;

    let pos_raw = tape.mul(mod_pos, log_p)?;
    let pos_term = tape.scale(pos_raw, -alpha)?;
    let neg_raw = tape.mul(mod_neg, log_q)?;
    let neg_term = tape.scale(neg_raw, -(1.0 - alpha))?;

    let t = tape.constant(targets.clone());
    let one_minus_t = {
        let neg_t = tape.neg(t)?;
        tape.add_scalar(neg_t, 1.0)?
    };
    let pos_masked = tape.mul(pos_term, t)?;
    let neg_masked = tape.mul(neg_term, one_minus_t)?;
    let cells = tape.add(pos_masked, neg_masked)?;
    let total = tape.sum(cells)?;
    Ok(tape.scale(total, 1.0 / normalizer)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sigmoid(x: f64) -> f64 {
        1.0 / (1.0 + (-x).exp())
    }

    #[test]
    fn positive_cell_at_half_probability() {
        // 0.25 * 0.25 * ln 2
        let want = 0.25 * 0.25 * std::f64::consts::LN_2;
        assert!((focal_cell(0.5, true, 0.25, 2.0) - want).abs() < 1e-12);
        assert!((want - 0.043_321_698_785).abs() < 1e-9);

        let mut tape = Tape::new();
        let logits = tape.constant(Tensor::new(vec![1, 1], vec![0.0]).unwrap());
        let targets = Tensor::new(vec![1, 1], vec![1.0]).unwrap();
        let loss = focal_loss_matrix(&mut tape, logits, &targets, 0.25, 2.0, 1.0).unwrap();
        assert!((tape.value(loss).scalar_value() - want).abs() < 1e-12);
    }

    #[test]
    fn perfect_logits_drive_loss_to_zero() {
        let mut tape = Tape::new();
        let logits = tape.constant(Tensor::new(vec![1, 2], vec![40.0, -40.0]).unwrap());
        let targets = Tensor::new(vec![1, 2], vec![1.0, 0.0]).unwrap();
        let loss = focal_loss_matrix(&mut tape, logits, &targets, 0.25, 2.0, 1.0).unwrap();
        let v = tape.value(loss).scalar_value();
        assert!(v.is_finite() && v < 1e-12, "loss {v}");
    }

    #[test]
    fn all_negative_at_bias_matches_direct_evaluation() {
        let b = -(99f64.ln());
        let p = sigmoid(b);
        let per_cell = focal_cell(p, false, 0.25, 2.0);

        let mut tape = Tape::new();
        let logits = tape.constant(Tensor::full(&[3, 5], b));
        let targets = Tensor::zeros(&[3, 5]);
        let loss = focal_loss_matrix(&mut tape, logits, &targets, 0.25, 2.0, 1.0).unwrap();
        let got = tape.value(loss).scalar_value();
        assert!((got - 15.0 * per_cell).abs() < 1e-12, "{got} vs {}", 15.0 * per_cell);
    }

    #[test]
    fn gamma_zero_reduces_to_weighted_bce() {
        let mut tape = Tape::new();
        let x = 0.7;
        let logits = tape.constant(Tensor::new(vec![1, 1], vec![x]).unwrap());
        let targets = Tensor::new(vec![1, 1], vec![1.0]).unwrap();
        let loss = focal_loss_matrix(&mut tape, logits, &targets, 0.25, 0.0, 1.0).unwrap();
        let want = -0.25 * sigmoid(x).ln();
        assert!((tape.value(loss).scalar_value() - want).abs() < 1e-12);
    }
}

//! Peak First Regularization: each frame's temperature-smoothed distribution
//! is pulled toward the distribution `mu` frames away. The neighbour acts as
//! a fixed teacher, so only the student frame receives gradient.

use serde::{Deserialize, Serialize};

use crate::ctc::softmax_rows;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PfrParams {
    /// Teacher offset in frames; -1 delays peaks, +1 advances them.
    pub mu: i64,
    pub tau: f64,
    pub lambda_pfr: f64,
    pub lambda_ce: f64,
}

impl Default for PfrParams {
    fn default() -> Self {
        Self {
            mu: -1,
            tau: 10.0,
            lambda_pfr: 0.0,
            lambda_ce: 0.95,
        }
    }
}

impl PfrParams {
    pub fn with_lambda(lambda_pfr: f64) -> Self {
        Self {
            lambda_pfr,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return Err(Error::invalid(format!("tau must be positive, got {}", self.tau)));
        }
        if !(self.lambda_pfr.is_finite() && self.lambda_pfr >= 0.0) {
            return Err(Error::invalid(format!(
                "lambda_pfr must be >= 0, got {}",
                self.lambda_pfr
            )));
        }
        if !(0.0..=1.0).contains(&self.lambda_ce) {
            return Err(Error::invalid(format!(
                "lambda_ce must lie in [0, 1], got {}",
                self.lambda_ce
            )));
        }
        Ok(())
    }
}

/// Sum over frames of `KL(P(t + mu) || P(t))` at temperature `tau`, and its
/// gradient with the teacher frame held constant. Frames whose teacher falls
/// outside the utterance are skipped.
pub fn pfr_loss_grad(logits: &Matrix, params: &PfrParams) -> Result<(f64, Matrix)> {
    if !(params.tau.is_finite() && params.tau > 0.0) {
        return Err(Error::invalid(format!("tau must be positive, got {}", params.tau)));
    }
    let frames = logits.rows();
    let mut grad = Matrix::zeros(frames, logits.cols());
    if params.mu == 0 {
        return Ok((0.0, grad));
    }
    if frames < 2 {
        log::warn!("PFR on a single frame with mu = {} contributes nothing", params.mu);
        return Ok((0.0, grad));
    }
    let p = softmax_rows(logits, params.tau);
    let mut loss = 0.0;
    for t in 0..frames {
        let teacher = t as i64 + params.mu;
        if teacher < 0 || teacher >= frames as i64 {
            continue;
        }
        let q = p.row(teacher as usize);
        let s = p.row(t);
        loss += q
            .iter()
            .zip(s)
            .filter(|(&q, _)| q > 0.0)
            .map(|(&q, &s)| q * (q.ln() - s.ln()))
            .sum::<f64>();
        for ((g, &s), &q) in grad.row_mut(t).iter_mut().zip(s).zip(q) {
            *g = (s - q) / params.tau;
        }
    }
    Ok((loss, grad))
}

/// Mixes per-utterance loss terms:
/// `lambda_ce * CE + (1 - lambda_ce) * (CTC + lambda_pfr * PFR)`.
/// Without a CE term the mix reduces to `CTC + lambda_pfr * PFR`.
pub fn combined_loss(
    ctc: (f64, &Matrix),
    pfr: (f64, &Matrix),
    ce: Option<(f64, &Matrix)>,
    params: &PfrParams,
) -> Result<(f64, Matrix)> {
    params.validate()?;
    let (ctc_loss, ctc_grad) = ctc;
    let (pfr_loss, pfr_grad) = pfr;
    let mut grad = ctc_grad.clone();
    grad.axpy(params.lambda_pfr, pfr_grad)?;
    let mut loss = ctc_loss + params.lambda_pfr * pfr_loss;
    if let Some((ce_loss, ce_grad)) = ce {
        let keep = 1.0 - params.lambda_ce;
        grad.scale(keep);
        grad.axpy(params.lambda_ce, ce_grad)?;
        loss = params.lambda_ce * ce_loss + keep * loss;
    }
    Ok((loss, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn params(mu: i64, tau: f64) -> PfrParams {
        PfrParams {
            mu,
            tau,
            ..PfrParams::default()
        }
    }

    #[test]
    fn identical_frames_have_zero_loss() {
        let m = Matrix::from_rows(&[[1.0, -2.0, 0.5]; 4]).unwrap();
        let (loss, grad) = pfr_loss_grad(&m, &params(-1, 1.0)).unwrap();
        assert!(loss.abs() < 1e-15);
        assert!(grad.as_slice().iter().all(|g| g.abs() < 1e-15));
        let other = Matrix::from_rows(&[[1.0, 0.0], [0.0, 3.0]]).unwrap();
        assert_eq!(pfr_loss_grad(&other, &params(0, 1.0)).unwrap().0, 0.0);
    }

    #[test]
    fn binary_kl_closed_form() {
        let m = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap();
        let (loss, _) = pfr_loss_grad(&m, &params(-1, 1.0)).unwrap();
        let p = 1.0 / (1.0 + (-1.0f64).exp());
        let q = 1.0 - p;
        let expected = p * (p / q).ln() + (1.0 - p) * ((1.0 - p) / (1.0 - q)).ln();
        assert!((loss - expected).abs() < 1e-12);
        assert!((loss - 0.46212).abs() < 1e-5);
    }

    #[test]
    fn rejects_bad_temperature_and_handles_single_frame() {
        let m = Matrix::from_rows(&[[1.0, 0.0]]).unwrap();
        assert!(pfr_loss_grad(&m, &params(-1, 0.0)).is_err());
        assert!(pfr_loss_grad(&m, &params(-1, -2.0)).is_err());
        assert_eq!(pfr_loss_grad(&m, &params(-1, 1.0)).unwrap().0, 0.0);
    }

    #[test]
    fn combination_weights() {
        let g1 = Matrix::filled(2, 2, 1.0);
        let g2 = Matrix::filled(2, 2, 2.0);
        let g3 = Matrix::filled(2, 2, 4.0);
        let p0 = PfrParams::with_lambda(0.0);
        let (loss, grad) = combined_loss((3.0, &g1), (5.0, &g2), None, &p0).unwrap();
        assert_eq!((loss, &grad), (3.0, &g1));

        let p = PfrParams {
            lambda_ce: 0.0,
            ..PfrParams::with_lambda(1.5)
        };
        let (loss, grad) = combined_loss((3.0, &g1), (5.0, &g2), Some((7.0, &g3)), &p).unwrap();
        assert_eq!(loss, 3.0 + 1.5 * 5.0);
        assert_eq!(grad.get(0, 0), 1.0 + 1.5 * 2.0);

        let p = PfrParams::with_lambda(1.0);
        let (loss, _) = combined_loss((3.0, &g1), (5.0, &g2), Some((7.0, &g3)), &p).unwrap();
        assert!((loss - (0.95 * 7.0 + 0.05 * 8.0)).abs() < 1e-12);

        let neg = PfrParams::with_lambda(-1.0);
        assert!(combined_loss((3.0, &g1), (5.0, &g2), None, &neg).is_err());
    }

    fn logits() -> impl Strategy<Value = Matrix> {
        (2usize..7, 2usize..5).prop_flat_map(|(t, v)| {
            proptest::collection::vec(-4.0f64..4.0, t * v).prop_map(move |d| Matrix::from_vec(t, v, d).unwrap())
        })
    }

    fn reversed(m: &Matrix) -> Matrix {
        let rows: Vec<Vec<f64>> = m.iter_rows().rev().map(|r| r.to_vec()).collect();
        Matrix::from_rows(&rows).unwrap()
    }

    proptest! {
        #[test]
        fn non_negative_and_symmetric(m in logits(), tau in 0.5f64..20.0) {
            let (a, _) = pfr_loss_grad(&m, &params(-1, tau)).unwrap();
            let (b, _) = pfr_loss_grad(&reversed(&m), &params(1, tau)).unwrap();
            prop_assert!(a >= -1e-15);
            prop_assert!((a - b).abs() < 1e-12);
        }

        #[test]
        fn high_temperature_vanishes(m in logits()) {
            let (loss, _) = pfr_loss_grad(&m, &params(-1, 1e6)).unwrap();
            prop_assert!(loss < 1e-6);
        }

        #[test]
        fn lambda_linearity(m in logits(), lambda in 0.0f64..3.0) {
            let (pl, pg) = pfr_loss_grad(&m, &params(-1, 10.0)).unwrap();
            let ctc_g = Matrix::zeros(m.rows(), m.cols());
            let one = combined_loss((0.0, &ctc_g), (pl, &pg), None, &PfrParams::with_lambda(lambda)).unwrap();
            let two = combined_loss((0.0, &ctc_g), (pl, &pg), None, &PfrParams::with_lambda(2.0 * lambda)).unwrap();
            prop_assert!((two.0 - 2.0 * one.0).abs() < 1e-12);
            for (a, b) in two.1.as_slice().iter().zip(one.1.as_slice()) {
                prop_assert!((a - 2.0 * b).abs() < 1e-12);
            }
        }
    }
}

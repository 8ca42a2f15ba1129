//! Training objectives for the loss estimator.
//!
//! Both objectives treat the true losses (and interval endpoints) as
//! constants: gradients flow only into the estimates.

use crate::error::{Error, Result};
use crate::nn::mc::PredictionInterval;

/// How the pairwise ordering indicator treats a pair.
///
/// `Signed` maps the ordering of the true losses to +1/-1, so every
/// misordered pair is pushed in the right direction. `Literal` maps the
/// `s_i <= s_j` case to 0 instead, which turns that branch into a constant
/// penalty with no gradient; it is kept behind this switch for comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndicatorMode {
    Signed,
    Literal,
}

/// One contrastive pair: true losses and estimates for two samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossPair {
    pub true_i: f64,
    pub true_j: f64,
    pub est_i: f64,
    pub est_j: f64,
}

fn indicator(true_i: f64, true_j: f64, mode: IndicatorMode) -> f64 {
    match mode {
        IndicatorMode::Signed => {
            if true_i > true_j {
                1.0
            } else {
                -1.0
            }
        }
        IndicatorMode::Literal => {
            if true_i > true_j {
                1.0
            } else {
                0.0
            }
        }
    }
}

/// Ranking hinge over sample pairs:
/// `sum over pairs of max(0, -I(s_i, s_j) * (est_i - est_j) + margin)`.
pub fn contrastive_loss(pairs: &[LossPair], margin: f64, mode: IndicatorMode) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::invalid_argument("contrastive loss needs pairs"));
    }
    let mut total = 0.0;
    for pair in pairs {
        let values = [pair.true_i, pair.true_j, pair.est_i, pair.est_j];
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::non_finite("contrastive pair"));
        }
        let sign = indicator(pair.true_i, pair.true_j, mode);
        total += (-sign * (pair.est_i - pair.est_j) + margin).max(0.0);
    }
    Ok(total)
}

/// Subgradients of one pair's hinge with respect to `(est_i, est_j)`.
/// Zero at the hinge boundary.
pub fn contrastive_pair_grad(pair: &LossPair, margin: f64, mode: IndicatorMode) -> (f64, f64) {
    let sign = indicator(pair.true_i, pair.true_j, mode);
    let active = -sign * (pair.est_i - pair.est_j) + margin > 0.0;
    if active {
        (-sign, sign)
    } else {
        (0.0, 0.0)
    }
}

/// Interval calibration hinge:
/// `max(0, est - upper + margin) + max(0, lower - est + margin)` with
/// `lower/upper = mean -/+ std`. Zero exactly when the estimate sits inside
/// the margin-shrunk interval.
pub fn dropout_calibration_loss(
    estimate: f64,
    interval: &PredictionInterval,
    margin: f64,
) -> Result<f64> {
    if !estimate.is_finite() || !interval.loss_mean.is_finite() || !interval.loss_std.is_finite() {
        return Err(Error::non_finite("calibration inputs"));
    }
    Ok(calibration_terms(estimate, interval.lower(), interval.upper(), margin))
}

pub(crate) fn calibration_terms(estimate: f64, lower: f64, upper: f64, margin: f64) -> f64 {
    (estimate - upper + margin).max(0.0) + (lower - estimate + margin).max(0.0)
}

/// Subgradient of the calibration hinge with respect to the estimate.
/// The two terms have slopes +1 and -1; both are active only when the
/// shrunk interval is empty, where they cancel, so the value is always
/// -1, 0, or +1.
pub(crate) fn calibration_grad(estimate: f64, lower: f64, upper: f64, margin: f64) -> f64 {
    let mut g = 0.0;
    if estimate - upper + margin > 0.0 {
        g += 1.0;
    }
    if lower - estimate + margin > 0.0 {
        g -= 1.0;
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;

    fn interval(mean: f64, std: f64) -> PredictionInterval {
        PredictionInterval {
            loss_mean: mean,
            loss_std: std,
            passes: 10,
            mean_activations: Vec::new(),
        }
    }

    fn pair(true_i: f64, true_j: f64, est_i: f64, est_j: f64) -> LossPair {
        LossPair {
            true_i,
            true_j,
            est_i,
            est_j,
        }
    }

    #[test]
    fn margin_exactly_met_contributes_zero() {
        // s_i > s_j and est_i - est_j == margin
        let pairs = [pair(2.0, 1.0, 1.5, 0.5)];
        assert_eq!(
            contrastive_loss(&pairs, 1.0, IndicatorMode::Signed).unwrap(),
            0.0
        );
    }

    #[test]
    fn equal_estimates_contribute_the_margin() {
        let pairs = [pair(2.0, 1.0, 0.7, 0.7)];
        assert_eq!(
            contrastive_loss(&pairs, 1.0, IndicatorMode::Signed).unwrap(),
            1.0
        );
    }

    #[test]
    fn four_pair_fixture_matches_hand_total() {
        // hand computation, signed indicator, margin 1:
        //   (2,1,1.5,0.5): I=+1, max(0, -1.0+1) = 0
        //   (2,1,0.2,0.9): I=+1, max(0, 0.7+1)  = 1.7
        //   (1,3,0.4,0.1): I=-1, max(0, 0.3+1)  = 1.3
        //   (1,1,0.6,0.2): tie -> I=-1, max(0, 0.4+1) = 1.4
        let pairs = [
            pair(2.0, 1.0, 1.5, 0.5),
            pair(2.0, 1.0, 0.2, 0.9),
            pair(1.0, 3.0, 0.4, 0.1),
            pair(1.0, 1.0, 0.6, 0.2),
        ];
        let total = contrastive_loss(&pairs, 1.0, IndicatorMode::Signed).unwrap();
        assert!((total - 4.4).abs() < 1e-12);
    }

    #[test]
    fn literal_indicator_makes_unordered_pairs_constant() {
        // s_i <= s_j maps to I = 0: the hinge is max(0, margin), a constant
        let p = pair(1.0, 3.0, 0.4, 0.1);
        assert_eq!(
            contrastive_loss(&[p], 1.0, IndicatorMode::Literal).unwrap(),
            1.0
        );
        assert_eq!(contrastive_pair_grad(&p, 1.0, IndicatorMode::Literal), (0.0, 0.0));
        // ordered pairs behave as in the signed mode
        let q = pair(3.0, 1.0, 0.1, 0.4);
        assert_eq!(
            contrastive_loss(&[q], 1.0, IndicatorMode::Literal).unwrap(),
            contrastive_loss(&[q], 1.0, IndicatorMode::Signed).unwrap()
        );
    }

    #[test]
    fn shift_within_a_pair_leaves_the_loss_unchanged() {
        let base = pair(2.0, 1.0, 0.3, 0.9);
        let shifted = pair(2.0, 1.0, 0.3 + 5.0, 0.9 + 5.0);
        let a = contrastive_loss(&[base], 1.0, IndicatorMode::Signed).unwrap();
        let b = contrastive_loss(&[shifted], 1.0, IndicatorMode::Signed).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn zero_iff_every_pair_ordered_with_margin() {
        let margin = 0.5;
        let good = [pair(2.0, 1.0, 1.1, 0.5), pair(0.5, 3.0, 0.0, 0.6)];
        assert_eq!(
            contrastive_loss(&good, margin, IndicatorMode::Signed).unwrap(),
            0.0
        );
        // one pair ordered but short of the margin -> strictly positive
        let short = [pair(2.0, 1.0, 1.1, 0.5), pair(0.5, 3.0, 0.2, 0.6)];
        assert!(contrastive_loss(&short, margin, IndicatorMode::Signed).unwrap() > 0.0);
    }

    #[test]
    fn empty_pairs_are_rejected() {
        assert!(contrastive_loss(&[], 1.0, IndicatorMode::Signed).is_err());
    }

    #[test]
    fn calibration_center_of_interval_is_zero() {
        let iv = interval(1.0, 0.2);
        assert_eq!(dropout_calibration_loss(1.0, &iv, 0.05).unwrap(), 0.0);
    }

    #[test]
    fn calibration_upper_boundary_without_margin_is_zero() {
        let iv = interval(1.0, 0.2);
        assert_eq!(dropout_calibration_loss(1.2, &iv, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn calibration_fixture_matches_direct_evaluation() {
        let iv = interval(1.0, 0.2);
        let v = dropout_calibration_loss(1.4, &iv, 0.05).unwrap();
        assert!((v - 0.25).abs() < 1e-12);
        let below = dropout_calibration_loss(0.5, &iv, 0.05).unwrap();
        assert!((below - 0.35).abs() < 1e-12);
    }

    #[test]
    fn calibration_zero_iff_inside_shrunk_interval() {
        let iv = interval(2.0, 0.5);
        let margin = 0.1;
        // shrunk interval is [1.6, 2.4]
        assert_eq!(dropout_calibration_loss(1.6, &iv, margin).unwrap(), 0.0);
        assert_eq!(dropout_calibration_loss(2.4, &iv, margin).unwrap(), 0.0);
        assert!(dropout_calibration_loss(1.59, &iv, margin).unwrap() > 0.0);
        assert!(dropout_calibration_loss(2.41, &iv, margin).unwrap() > 0.0);
    }

    #[test]
    fn calibration_subgradient_matches_finite_differences_away_from_kinks() {
        let iv = interval(1.0, 0.3);
        let margin = 0.05;
        let h = 1e-6;
        for &s in &[0.2, 0.9, 1.0, 1.1, 1.9] {
            let g = calibration_grad(s, iv.lower(), iv.upper(), margin);
            assert!(g == -1.0 || g == 0.0 || g == 1.0);
            let fp = dropout_calibration_loss(s + h, &iv, margin).unwrap();
            let fm = dropout_calibration_loss(s - h, &iv, margin).unwrap();
            let numeric = (fp - fm) / (2.0 * h);
            assert!(
                (g - numeric).abs() < 1e-6,
                "estimate {s}: subgradient {g} vs numeric {numeric}"
            );
        }
    }

    #[test]
    fn calibration_is_convex_piecewise_linear() {
        // convexity check on a grid: midpoint value <= average of endpoints
        let iv = interval(0.5, 0.2);
        let f = |s: f64| dropout_calibration_loss(s, &iv, 0.1).unwrap();
        let grid: Vec<f64> = (0..60).map(|i| -1.0 + i as f64 * 0.05).collect();
        for w in grid.windows(3) {
            assert!(f(w[1]) <= 0.5 * (f(w[0]) + f(w[2])) + 1e-12);
        }
    }
}

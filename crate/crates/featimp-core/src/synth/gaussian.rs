//! Equicorrelated Gaussian datasets with controlled distribution shifts.
//!
//! One spec yields a triple: the original dataset, a correlation-shifted
//! copy (off-diagonal covariance moved by a delta), and a variance-shifted
//! copy (diagonal inflated). Labels come from each set's own Mahalanobis
//! distance quantiles, so classes are nested concentric shells around the
//! mean.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::seeds::{derive, Stream};
use crate::synth::linalg::{cholesky, forward_substitute, lower_mul};

/// Parameters of one shift-triple realization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShiftSpec {
    /// Number of covariates.
    pub dims: usize,
    /// Samples per dataset.
    pub samples: usize,
    /// Every component of the mean vector.
    pub mean: f64,
    /// Off-diagonal covariance of the original set.
    pub correlation: f64,
    /// Added to the correlation for the correlation-shifted set.
    pub correlation_shift: f64,
    /// Added to the diagonal for the variance-shifted set.
    pub variance_increase: f64,
    pub classes: usize,
    pub seed: u64,
}

impl Default for ShiftSpec {
    fn default() -> Self {
        ShiftSpec {
            dims: 20,
            samples: 5000,
            mean: 0.0,
            correlation: 0.3,
            correlation_shift: 0.1,
            variance_increase: 0.5,
            classes: 4,
            seed: 0,
        }
    }
}

impl ShiftSpec {
    /// Draw `mean`, `correlation`, `correlation_shift`, and
    /// `variance_increase` uniformly from their conventional ranges
    /// ([-2, 2], [-1, 1], [-0.2, 0.2], [0.25, 0.75]).
    pub fn sampled(dims: usize, samples: usize, classes: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(derive(seed, Stream::DataGen(0xFFFF)));
        ShiftSpec {
            dims,
            samples,
            mean: rng.random_range(-2.0..2.0),
            correlation: rng.random_range(-1.0..1.0),
            correlation_shift: rng.random_range(-0.2..0.2),
            variance_increase: rng.random_range(0.25..0.75),
            classes,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.dims < 2 {
            return Err(Error::invalid_argument("shift spec needs dims >= 2"));
        }
        if self.samples == 0 {
            return Err(Error::invalid_argument("shift spec needs samples >= 1"));
        }
        if self.classes == 0 {
            return Err(Error::invalid_argument("shift spec needs classes >= 1"));
        }
        if self.classes > self.samples {
            return Err(Error::invalid_argument("more classes than samples"));
        }
        let values = [
            self.mean,
            self.correlation,
            self.correlation_shift,
            self.variance_increase,
        ];
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::non_finite("shift spec parameters"));
        }
        if self.variance_increase < 0.0 {
            return Err(Error::invalid_argument("variance increase must be >= 0"));
        }
        Ok(())
    }
}

/// Effective (post-clamp) correlations actually used for generation,
/// recorded for provenance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RealizedCorrelations {
    pub original: f64,
    pub shifted: f64,
}

/// The generated datasets plus the clamped correlations.
#[derive(Debug, Clone)]
pub struct ShiftTriple {
    pub original: Dataset,
    pub corr_shifted: Dataset,
    pub var_shifted: Dataset,
    pub realized: RealizedCorrelations,
}

/// Clamp an off-diagonal correlation into the open interval where the
/// equicorrelation matrix stays positive definite:
/// `(-1/(d-1) + 1e-3, 1 - 1e-3)`.
pub fn clamp_correlation(correlation: f64, dims: usize) -> f64 {
    debug_assert!(dims >= 2);
    correlation
        .max(-1.0 / (dims as f64 - 1.0) + 1e-3)
        .min(1.0 - 1e-3)
}

fn equicorrelation(dims: usize, diagonal: f64, off_diagonal: f64) -> Vec<f64> {
    let mut cov = vec![off_diagonal; dims * dims];
    for i in 0..dims {
        cov[i * dims + i] = diagonal;
    }
    cov
}

/// Equal-frequency labels from Mahalanobis distance quantiles: class 0 is
/// the innermost shell. Class counts differ by at most one.
pub fn quantile_label(
    features: &[f64],
    dims: usize,
    mean: &[f64],
    covariance: &[f64],
    classes: usize,
) -> Result<Vec<usize>> {
    if dims == 0 || features.len() % dims != 0 {
        return Err(Error::ShapeMismatch {
            what: "quantile features",
            expected: dims,
            actual: features.len(),
        });
    }
    let n = features.len() / dims;
    if classes == 0 {
        return Err(Error::invalid_argument("need at least one class"));
    }
    if classes > n {
        return Err(Error::invalid_argument(format!(
            "{classes} classes for only {n} samples"
        )));
    }
    if mean.len() != dims {
        return Err(Error::ShapeMismatch {
            what: "quantile mean",
            expected: dims,
            actual: mean.len(),
        });
    }
    let lower = cholesky(covariance, dims)?;

    let mut distances = Vec::with_capacity(n);
    let mut centered = vec![0.0; dims];
    for row in 0..n {
        let x = &features[row * dims..(row + 1) * dims];
        for ((c, &v), &m) in centered.iter_mut().zip(x).zip(mean) {
            *c = v - m;
        }
        let y = forward_substitute(&lower, dims, &centered);
        distances.push(y.iter().map(|v| v * v).sum::<f64>());
    }

    // rank by distance (stable on ties by row index), then bin by rank
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        distances[a]
            .partial_cmp(&distances[b])
            .expect("non-finite distance")
            .then(a.cmp(&b))
    });
    let mut labels = vec![0usize; n];
    for (rank, &row) in order.iter().enumerate() {
        labels[row] = rank * classes / n;
    }
    Ok(labels)
}

fn generate_one(
    dims: usize,
    samples: usize,
    mean: f64,
    diagonal: f64,
    off_diagonal: f64,
    classes: usize,
    seed: u64,
) -> Result<Dataset> {
    let cov = equicorrelation(dims, diagonal, off_diagonal);
    let lower = cholesky(&cov, dims)?;
    let mean_vec = vec![mean; dims];
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut features = Vec::with_capacity(samples * dims);
    let mut z = vec![0.0; dims];
    for _ in 0..samples {
        for v in z.iter_mut() {
            *v = normal.sample(&mut rng);
        }
        let correlated = lower_mul(&lower, dims, &z);
        features.extend(correlated.iter().zip(&mean_vec).map(|(c, m)| c + m));
    }

    let labels = quantile_label(&features, dims, &mean_vec, &cov, classes)?;
    let feature_names = (0..dims).map(|j| format!("f{j}")).collect();
    Dataset::new(features, labels, feature_names, classes)
}

/// Generate the original / correlation-shifted / variance-shifted triple.
/// All three share the spec's mean; only the covariance changes.
pub fn generate_triple(spec: &ShiftSpec) -> Result<ShiftTriple> {
    spec.validate()?;
    let correlation = clamp_correlation(spec.correlation, spec.dims);
    let shifted = clamp_correlation(spec.correlation + spec.correlation_shift, spec.dims);

    let original = generate_one(
        spec.dims,
        spec.samples,
        spec.mean,
        1.0,
        correlation,
        spec.classes,
        derive(spec.seed, Stream::DataGen(0)),
    )?;
    let corr_shifted = generate_one(
        spec.dims,
        spec.samples,
        spec.mean,
        1.0,
        shifted,
        spec.classes,
        derive(spec.seed, Stream::DataGen(1)),
    )?;
    let var_shifted = generate_one(
        spec.dims,
        spec.samples,
        spec.mean,
        1.0 + spec.variance_increase,
        correlation,
        spec.classes,
        derive(spec.seed, Stream::DataGen(2)),
    )?;

    Ok(ShiftTriple {
        original,
        corr_shifted,
        var_shifted,
        realized: RealizedCorrelations {
            original: correlation,
            shifted,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clamp_leaves_valid_values_untouched() {
        assert_eq!(clamp_correlation(0.3, 10), 0.3);
    }

    #[test]
    fn clamp_lower_bound_matches_formula() {
        let clamped = clamp_correlation(-0.9, 10);
        assert_eq!(clamped, -1.0 / 9.0 + 1e-3);
        assert!((clamped - (-0.1101111111111111)).abs() < 1e-12);
        assert_eq!(clamp_correlation(0.99999, 10), 1.0 - 1e-3);
    }

    #[test]
    fn clamped_covariance_has_positive_eigenvalues() {
        // closed-form eigenvalues of an equicorrelation matrix with
        // diagonal a and off-diagonal b: a + (d-1)b and a - b
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..100 {
            let dims = rng.random_range(2..60);
            let raw = rng.random_range(-1.0..1.0);
            let b = clamp_correlation(raw, dims);
            let min_eig = (1.0 + (dims as f64 - 1.0) * b).min(1.0 - b);
            assert!(min_eig > 0.0, "dims {dims} correlation {b}");
            assert!(cholesky(&equicorrelation(dims, 1.0, b), dims).is_ok());
        }
    }

    #[test]
    fn quantile_label_single_class() {
        let labels = quantile_label(&[1.0, 2.0, 3.0, 4.0], 2, &[0.0, 0.0], &[1.0, 0.0, 0.0, 1.0], 1)
            .unwrap();
        assert_eq!(labels, vec![0, 0]);
    }

    #[test]
    fn quantile_label_matches_hand_mahalanobis() {
        // identity covariance in 2-d: distance is the euclidean radius;
        // points at radii 1, 2, 3, 4 with two classes split (0, 0, 1, 1)
        let features = vec![1.0, 0.0, 0.0, 2.0, -3.0, 0.0, 0.0, -4.0];
        let labels =
            quantile_label(&features, 2, &[0.0, 0.0], &[1.0, 0.0, 0.0, 1.0], 2).unwrap();
        assert_eq!(labels, vec![0, 0, 1, 1]);
    }

    #[test]
    fn quantile_label_is_equal_frequency() {
        let spec = ShiftSpec {
            dims: 10,
            samples: 5000,
            classes: 4,
            seed: 3,
            ..ShiftSpec::default()
        };
        let triple = generate_triple(&spec).unwrap();
        for ds in [&triple.original, &triple.corr_shifted, &triple.var_shifted] {
            let mut counts = vec![0usize; 4];
            for &label in ds.labels() {
                counts[label] += 1;
            }
            assert_eq!(counts, vec![1250; 4]);
        }
        // uneven case: counts differ by at most one
        let labels = quantile_label(
            &(0..20).map(|i| i as f64).collect::<Vec<_>>(),
            2,
            &[0.0, 0.0],
            &[1.0, 0.0, 0.0, 1.0],
            3,
        )
        .unwrap();
        let mut counts = vec![0usize; 3];
        for l in labels {
            counts[l] += 1;
        }
        for &c in &counts {
            assert!((c as i64 - 10 / 3).abs() <= 1, "counts {counts:?}");
        }
    }

    #[test]
    fn more_classes_than_samples_is_an_error() {
        assert!(quantile_label(&[1.0, 2.0], 2, &[0.0, 0.0], &[1.0, 0.0, 0.0, 1.0], 2).is_err());
    }

    #[test]
    fn independence_case_has_near_zero_empirical_correlation() {
        let spec = ShiftSpec {
            dims: 10,
            samples: 5000,
            mean: 0.5,
            correlation: 0.0,
            correlation_shift: 0.0,
            variance_increase: 0.0,
            classes: 2,
            seed: 11,
        };
        let triple = generate_triple(&spec).unwrap();
        for ds in [&triple.original, &triple.corr_shifted, &triple.var_shifted] {
            let cov = empirical_covariance(ds);
            for i in 0..10 {
                for j in 0..10 {
                    if i != j {
                        assert!(cov[i * 10 + j].abs() < 0.05, "cov[{i},{j}] = {}", cov[i * 10 + j]);
                    }
                }
            }
        }
    }

    #[test]
    fn empirical_covariance_matches_target() {
        let spec = ShiftSpec {
            dims: 10,
            samples: 5000,
            mean: -1.0,
            correlation: 0.5,
            correlation_shift: 0.1,
            variance_increase: 0.5,
            classes: 4,
            seed: 21,
        };
        let triple = generate_triple(&spec).unwrap();
        let check = |ds: &Dataset, diag: f64, off: f64| {
            let cov = empirical_covariance(ds);
            let mut max_err: f64 = 0.0;
            for i in 0..10 {
                for j in 0..10 {
                    let target = if i == j { diag } else { off };
                    max_err = max_err.max((cov[i * 10 + j] - target).abs());
                }
            }
            assert!(max_err <= 0.08, "max entry error {max_err}");
        };
        check(&triple.original, 1.0, 0.5);
        check(&triple.corr_shifted, 1.0, 0.6);
        check(&triple.var_shifted, 1.5, 0.5);
        // all three share the mean
        for ds in [&triple.original, &triple.corr_shifted, &triple.var_shifted] {
            for m in ds.column_means() {
                assert!((m - -1.0).abs() < 0.08);
            }
        }
    }

    #[test]
    fn generation_is_bitwise_reproducible() {
        let spec = ShiftSpec {
            dims: 12,
            samples: 200,
            seed: 7,
            ..ShiftSpec::default()
        };
        let a = generate_triple(&spec).unwrap();
        let b = generate_triple(&spec).unwrap();
        assert_eq!(a.original, b.original);
        assert_eq!(a.corr_shifted, b.corr_shifted);
        assert_eq!(a.var_shifted, b.var_shifted);
        // datasets differ from each other
        assert_ne!(a.original, a.corr_shifted);
    }

    #[test]
    fn sampled_specs_stay_in_conventional_ranges() {
        for seed in 0..10 {
            let spec = ShiftSpec::sampled(20, 100, 4, seed);
            assert!((-2.0..2.0).contains(&spec.mean));
            assert!((-1.0..1.0).contains(&spec.correlation));
            assert!((-0.2..0.2).contains(&spec.correlation_shift));
            assert!((0.25..0.75).contains(&spec.variance_increase));
            generate_triple(&spec).unwrap();
        }
    }

    fn empirical_covariance(ds: &Dataset) -> Vec<f64> {
        let d = ds.num_features();
        let n = ds.num_samples();
        let means = ds.column_means();
        let mut cov = vec![0.0; d * d];
        for r in 0..n {
            let row = ds.sample(r);
            for i in 0..d {
                for j in 0..d {
                    cov[i * d + j] += (row[i] - means[i]) * (row[j] - means[j]);
                }
            }
        }
        for v in cov.iter_mut() {
            *v /= (n - 1) as f64;
        }
        cov
    }
}

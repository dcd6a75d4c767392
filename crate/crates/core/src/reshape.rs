//! Scale-clip distribution reshaping.
//!
//! Hard-clipping weights at `T = k * mean(|W|)` during training pushes their
//! distribution toward uniform-like: for data uniform on `[-T, T]` the mean
//! absolute value is `T/2`, so `k` near 2 clips exactly the mass a uniform
//! distribution would not have. Activations get a tracked threshold instead,
//! updated by gradient descent toward `k * mean(|A|)` per batch, since batch
//! statistics are too noisy to use directly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pal;
use crate::tensor::Tensor;

/// Scale-clip constants for one training run.
///
/// `k_w = inf` disables weight reshaping entirely; the clip becomes a no-op.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClipConfig {
    pub k_w: f32,
    pub k_a: f32,
    pub lambda: f32,
}

impl Default for ClipConfig {
    fn default() -> Self {
        ClipConfig {
            k_w: 2.0,
            k_a: 4.0,
            lambda: 0.01,
        }
    }
}

impl ClipConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_w.is_nan() || self.k_w < 1.0 {
            return Err(Error::Config(format!(
                "clip.k_w must be >= 1 (or inf for no reshaping), got {}",
                self.k_w
            )));
        }
        if self.k_a.is_nan() || self.k_a <= 0.0 {
            return Err(Error::Config(format!(
                "clip.k_a must be positive, got {}",
                self.k_a
            )));
        }
        if !(self.lambda > 0.0 && self.lambda <= 1.0) {
            return Err(Error::Config(format!(
                "clip.lambda must be in (0, 1], got {}",
                self.lambda
            )));
        }
        Ok(())
    }

    /// Weight reshaping is a no-op when `k_w` is the infinity sentinel.
    pub fn reshapes_weights(&self) -> bool {
        self.k_w.is_finite()
    }

    pub fn reshapes_activations(&self) -> bool {
        self.k_a.is_finite()
    }
}

/// Clip threshold for a weight tensor: `k_w * mean(|W|)`, or infinity when
/// `k_w` is the no-reshaping sentinel.
pub fn weight_threshold(weights: &Tensor, k_w: f32) -> Result<f32> {
    if weights.is_empty() {
        return Err(Error::EmptyTensor);
    }
    if k_w.is_infinite() {
        return Ok(f32::INFINITY);
    }
    if !(k_w > 0.0) {
        return Err(Error::Config(format!("k_w must be positive, got {k_w}")));
    }
    Ok((k_w as f64 * pal::abs_mean(weights.data())) as f32)
}

/// Elementwise clamp into `[-threshold, threshold]`. Elements strictly
/// inside the range are returned bit-identical.
pub fn clip_weights(weights: &Tensor, threshold: f32) -> Tensor {
    if threshold.is_infinite() {
        return weights.clone();
    }
    let data = pal::map(weights.data(), |w| w.clamp(-threshold, threshold));
    Tensor::new(weights.shape().to_vec(), data).expect("shape unchanged")
}

/// In-place variant of [`clip_weights`] for training hot paths.
pub fn clip_in_place(weights: &mut [f32], threshold: f32) {
    if threshold.is_infinite() {
        return;
    }
    pal::map_in_place(weights, |w| w.clamp(-threshold, threshold));
}

/// Tracked activation clip threshold.
///
/// The first batch initializes the threshold directly to
/// `k_a * mean(|A|)`; later batches take one descent step
/// `t <- t - lambda * (t - k_a * mean(|A|))`, whose fixed point under a
/// stationary stream is `k_a * mean(|A|)` with contraction rate
/// `1 - lambda`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActivationTracker {
    pub t_a: f32,
    pub initialized: bool,
    pub update_count: u64,
}

impl Default for ActivationTracker {
    fn default() -> Self {
        Self::new()
    }
}

impl ActivationTracker {
    pub fn new() -> Self {
        ActivationTracker {
            t_a: 0.0,
            initialized: false,
            update_count: 0,
        }
    }

    /// Current threshold, once one batch has been seen.
    pub fn threshold(&self) -> Option<f32> {
        self.initialized.then_some(self.t_a)
    }

    /// Fold one batch of activations into the threshold.
    pub fn update(&mut self, batch_activations: &Tensor, k_a: f32, lambda: f32) -> Result<()> {
        if batch_activations.is_empty() {
            return Err(Error::EmptyTensor);
        }
        if !(lambda > 0.0 && lambda <= 1.0) {
            return Err(Error::Config(format!(
                "lambda must be in (0, 1], got {lambda}"
            )));
        }
        let target = (k_a as f64 * pal::abs_mean(batch_activations.data())) as f32;
        let next = if self.initialized {
            self.t_a - lambda * (self.t_a - target)
        } else {
            target
        };
        if !(next > 0.0) || !next.is_finite() {
            return Err(Error::NonPositiveThreshold(next));
        }
        self.t_a = next;
        self.initialized = true;
        self.update_count += 1;
        Ok(())
    }
}

/// Shape statistics quantifying how uniform-like a weight tensor is.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReshapeMetrics {
    /// Fourth-moment shape statistic; -1.2 for uniform, 0 for Gaussian.
    pub excess_kurtosis: f64,
    /// Fraction of elements with `|w| >= 2 * mean(|W|)`.
    pub clip_fraction_at_2mean: f64,
}

pub fn reshape_metrics(weights: &Tensor) -> Result<ReshapeMetrics> {
    let n = weights.numel();
    if n < 4 {
        return Err(Error::Degenerate(format!(
            "kurtosis needs at least 4 elements, got {n}"
        )));
    }
    let nf = n as f64;
    let mean = pal::map_sum(weights.data(), |x| x as f64) / nf;
    let m2 = pal::map_sum(weights.data(), |x| {
        let d = x as f64 - mean;
        d * d
    }) / nf;
    if m2 <= 0.0 {
        return Err(Error::Degenerate("zero variance".into()));
    }
    let m4 = pal::map_sum(weights.data(), |x| {
        let d = x as f64 - mean;
        d * d * d * d
    }) / nf;
    let abs_mean = pal::abs_mean(weights.data());
    let cutoff = 2.0 * abs_mean;
    let clipped = pal::map_sum(weights.data(), |x| {
        if (x.abs() as f64) >= cutoff {
            1.0
        } else {
            0.0
        }
    });
    Ok(ReshapeMetrics {
        excess_kurtosis: m4 / (m2 * m2) - 3.0,
        clip_fraction_at_2mean: clipped / nf,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quant::{sample_distribution, DistKind};

    #[test]
    fn threshold_uniform_relationship() {
        // Evenly spread on [-1, 1]: mean|W| = 0.5, so k = 2 recovers T = 1.
        let n = 20_000;
        let data: Vec<f32> = (0..n)
            .map(|i| -1.0 + 2.0 * (i as f32 + 0.5) / n as f32)
            .collect();
        let t = weight_threshold(&Tensor::from_vec(data), 2.0).unwrap();
        assert!((t - 1.0).abs() < 1e-4);
    }

    #[test]
    fn threshold_hand_example() {
        let w = Tensor::from_vec(vec![0.1, -0.3]);
        let t = weight_threshold(&w, 3.0).unwrap();
        assert!((t - 0.6).abs() < 1e-6);
    }

    #[test]
    fn threshold_sentinel_and_empty() {
        let w = Tensor::from_vec(vec![5.0, -7.0]);
        assert_eq!(weight_threshold(&w, f32::INFINITY).unwrap(), f32::INFINITY);
        assert!(weight_threshold(&Tensor::from_vec(vec![]), 2.0).is_err());
    }

    #[test]
    fn clip_interior_is_bit_identical() {
        let w = Tensor::from_vec(vec![-0.9, 0.2, 0.9]);
        let c = clip_weights(&w, 1.0);
        assert_eq!(c.data(), w.data());
    }

    #[test]
    fn clip_boundaries_and_sentinel() {
        let w = Tensor::from_vec(vec![-5.0, 0.2, 5.0]);
        assert_eq!(clip_weights(&w, 1.0).data(), &[-1.0, 0.2, 1.0]);
        assert_eq!(clip_weights(&w, f32::INFINITY).data(), w.data());
    }

    #[test]
    fn clip_is_idempotent() {
        let w = Tensor::from_vec(vec![-3.0, -0.5, 0.0, 0.7, 9.0]);
        let once = clip_weights(&w, 0.8);
        let twice = clip_weights(&once, 0.8);
        assert_eq!(once.data(), twice.data());
    }

    #[test]
    fn tracker_fixed_point_is_stable() {
        let mut tr = ActivationTracker::new();
        let batch = Tensor::from_vec(vec![1.0; 64]); // mean|A| = 1
        tr.update(&batch, 2.0, 0.5).unwrap(); // init to 2.0
        let before = tr.t_a;
        tr.update(&batch, 2.0, 0.9).unwrap();
        assert_eq!(tr.t_a, before);
    }

    #[test]
    fn tracker_single_descent_step() {
        let mut tr = ActivationTracker {
            t_a: 2.0,
            initialized: true,
            update_count: 1,
        };
        let batch = Tensor::from_vec(vec![1.0; 8]); // k_a = 1 -> target 1
        tr.update(&batch, 1.0, 0.5).unwrap();
        assert!((tr.t_a - 1.5).abs() < 1e-7);
    }

    #[test]
    fn tracker_converges_geometrically() {
        let mut tr = ActivationTracker::new();
        let batch = Tensor::from_vec(vec![0.5; 32]); // target m = k_a * 0.5
        let k_a = 4.0;
        let m = 2.0;
        // Start far away by initializing against a different batch.
        tr.update(&Tensor::from_vec(vec![5.0; 32]), k_a, 0.1).unwrap();
        for _ in 0..100 {
            tr.update(&batch, k_a, 0.1).unwrap();
        }
        assert!((tr.t_a - m).abs() < 1e-4 * m);
        assert_eq!(tr.update_count, 101);
    }

    #[test]
    fn tracker_rejects_degenerate_first_batch() {
        let mut tr = ActivationTracker::new();
        let zeros = Tensor::from_vec(vec![0.0; 8]);
        assert!(matches!(
            tr.update(&zeros, 4.0, 0.1),
            Err(Error::NonPositiveThreshold(_))
        ));
    }

    #[test]
    fn kurtosis_of_known_shapes() {
        let n = 1_000_000;
        let u = sample_distribution(DistKind::Uniform, 1.0, n, 31).unwrap();
        let m = reshape_metrics(&u).unwrap();
        assert!((m.excess_kurtosis - (-1.2)).abs() < 0.02);

        let g = sample_distribution(DistKind::Gaussian, 1.0, n, 32).unwrap();
        let m = reshape_metrics(&g).unwrap();
        assert!(m.excess_kurtosis.abs() < 0.02);
    }

    #[test]
    fn kurtosis_of_two_point_distribution() {
        let data: Vec<f32> = (0..1000).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let m = reshape_metrics(&Tensor::from_vec(data)).unwrap();
        assert!((m.excess_kurtosis - (-2.0)).abs() < 1e-9);
    }

    #[test]
    fn metrics_reject_degenerate_inputs() {
        assert!(reshape_metrics(&Tensor::from_vec(vec![1.0, 2.0, 3.0])).is_err());
        assert!(reshape_metrics(&Tensor::from_vec(vec![1.0; 16])).is_err());
    }

    #[test]
    fn energy_ordering_under_clip() {
        let w = Tensor::from_vec(vec![-4.0, -0.5, 0.1, 2.0, 8.0]);
        let c = clip_weights(&w, 1.5);
        let before = pal::abs_sum(w.data());
        let after = pal::abs_sum(c.data());
        assert!(after < before);

        let inside = Tensor::from_vec(vec![-1.0, 0.5, 1.0]);
        let c = clip_weights(&inside, 1.5);
        assert_eq!(pal::abs_sum(c.data()), pal::abs_sum(inside.data()));
    }
}

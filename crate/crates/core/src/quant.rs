//! Uniform quantization, relative-L1 quantization error, and clipping-value
//! search.
//!
//! A quantizer maps a value onto an evenly spaced grid: clamp into the
//! clipping range, divide by the grid step, round half away from zero,
//! multiply back. The grid step for an `n`-bit symmetric quantizer with
//! clipping value `alpha` is `alpha / (2^(n-1) - 1)`; the non-negative
//! variant (for post-ReLU activations) uses `alpha / (2^n - 1)` over
//! `[0, alpha]`.
//!
//! The quality of a clipping value is measured by the quantized loss
//! `QL = ||w - Q(w)||_1 / ||w||_1`, and [`optimal_alpha`] searches the value
//! minimizing it: a dense hybrid grid over `(0, max|w|]` followed by one
//! golden-section refinement over the best bracket. QL is piecewise-smooth
//! in alpha, so local refinement after a dense scan is safe.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pal;
use crate::tensor::Tensor;

/// How the clipping range is laid out around zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RangeMode {
    /// Weights: levels in `[-alpha, alpha]`, symmetric around zero.
    Symmetric,
    /// Activations after ReLU: levels in `[0, alpha]`.
    NonNegative,
}

/// One quantization site: bitwidth, range layout, and clipping value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantSpec {
    pub bits: u8,
    pub range_mode: RangeMode,
    pub alpha: f32,
}

impl QuantSpec {
    pub fn new(bits: u8, range_mode: RangeMode, alpha: f32) -> Result<Self> {
        if bits < 1 || bits > 8 {
            return Err(Error::InvalidSpec(format!("bits must be 1..=8, got {bits}")));
        }
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(Error::InvalidSpec(format!("alpha must be positive and finite, got {alpha}")));
        }
        Ok(QuantSpec { bits, range_mode, alpha })
    }

    pub fn symmetric(bits: u8, alpha: f32) -> Result<Self> {
        Self::new(bits, RangeMode::Symmetric, alpha)
    }

    pub fn non_negative(bits: u8, alpha: f32) -> Result<Self> {
        Self::new(bits, RangeMode::NonNegative, alpha)
    }

    /// Grid step. The 1-bit symmetric grid is the two-level set
    /// `{-alpha, +alpha}` whose inter-level distance is `2*alpha`.
    pub fn step(&self) -> f32 {
        match self.range_mode {
            RangeMode::Symmetric => {
                if self.bits == 1 {
                    2.0 * self.alpha
                } else {
                    self.alpha / ((1u32 << (self.bits - 1)) - 1) as f32
                }
            }
            RangeMode::NonNegative => self.alpha / ((1u32 << self.bits) - 1) as f32,
        }
    }

    /// Quantize one value onto the grid.
    #[inline]
    pub fn quantize_value(&self, w: f32) -> f32 {
        match self.range_mode {
            RangeMode::Symmetric => {
                if self.bits == 1 {
                    // Two-level grid; zero rounds away from zero upward.
                    if w >= 0.0 {
                        self.alpha
                    } else {
                        -self.alpha
                    }
                } else {
                    let s = self.alpha / ((1u32 << (self.bits - 1)) - 1) as f32;
                    let c = w.clamp(-self.alpha, self.alpha);
                    // f32::round rounds half away from zero.
                    (c / s).round() * s
                }
            }
            RangeMode::NonNegative => {
                let s = self.alpha / ((1u32 << self.bits) - 1) as f32;
                let c = w.clamp(0.0, self.alpha);
                (c / s).round() * s
            }
        }
    }
}

/// Result of a quantized-loss evaluation or clipping-value search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantReport {
    /// Relative L1 error `||w - Q(w)||_1 / ||w||_1`.
    pub ql: f64,
    /// The clipping value the loss was evaluated at.
    pub alpha_star: f32,
    pub bits: u8,
    /// Order of the norm; fixed to 1.
    pub norm_order: u8,
}

/// Quantize every element of `values` under `spec`.
///
/// Rejects non-finite inputs, naming the offending flat index.
pub fn quantize(values: &Tensor, spec: &QuantSpec) -> Result<Tensor> {
    values.check_finite("quantize input")?;
    let data = pal::map(values.data(), |w| spec.quantize_value(w));
    Tensor::new(values.shape().to_vec(), data)
}

/// Relative L1 quantization error of `values` under `spec`.
///
/// Errors with [`Error::ZeroNorm`] when `||values||_1 == 0`.
pub fn quantized_loss(values: &Tensor, spec: &QuantSpec) -> Result<QuantReport> {
    values.check_finite("quantized_loss input")?;
    let den = pal::abs_sum(values.data());
    if den == 0.0 {
        return Err(Error::ZeroNorm);
    }
    let num = pal::map_sum(values.data(), |w| {
        (w - spec.quantize_value(w)).abs() as f64
    });
    Ok(QuantReport {
        ql: num / den,
        alpha_star: spec.alpha,
        bits: spec.bits,
        norm_order: 1,
    })
}

/// Numerator of the quantized loss, accumulated with the same chunking as
/// [`quantized_loss`] but single-threaded; used inside the candidate sweep,
/// where parallelism is over candidates.
fn ql_num_seq(xs: &[f32], spec: &QuantSpec) -> f64 {
    pal::map_sum_seq(xs, |w| (w - spec.quantize_value(w)).abs() as f64)
}

const GRID_LINEAR: usize = 512;
const GRID_GEOMETRIC: usize = 512;
const GRID_SPAN_DECADES: f64 = 3.0;
const GOLDEN_ITERS: usize = 60;

/// Search the clipping value minimizing the quantized loss over
/// `(0, max|values|]`.
///
/// A hybrid grid (512 linear + 512 geometric candidates) is swept first,
/// then one golden-section pass refines the bracket around the best
/// candidate. The returned loss never exceeds the loss at
/// `alpha = max|values|`, which the linear grid contains exactly.
pub fn optimal_alpha(values: &Tensor, bits: u8, range_mode: RangeMode) -> Result<QuantReport> {
    values.check_finite("optimal_alpha input")?;
    if bits < 1 || bits > 8 {
        return Err(Error::InvalidSpec(format!("bits must be 1..=8, got {bits}")));
    }
    let den = pal::abs_sum(values.data());
    if den == 0.0 {
        return Err(Error::ZeroNorm);
    }
    let max_abs = values.max_abs();

    let mut candidates: Vec<f32> = Vec::with_capacity(GRID_LINEAR + GRID_GEOMETRIC);
    for i in 1..=GRID_LINEAR {
        candidates.push(max_abs * (i as f32 / GRID_LINEAR as f32));
    }
    for i in 1..=GRID_GEOMETRIC {
        let exponent = -GRID_SPAN_DECADES * i as f64 / GRID_GEOMETRIC as f64;
        candidates.push(max_abs * 10f64.powf(exponent) as f32);
    }
    candidates.retain(|a| *a > 0.0);
    candidates.sort_by(|a, b| a.partial_cmp(b).unwrap());
    candidates.dedup();

    let eval = |alpha: f32| -> f64 {
        let spec = QuantSpec { bits, range_mode, alpha };
        ql_num_seq(values.data(), &spec) / den
    };

    let losses = pal::eval_indexed(candidates.len(), |i| eval(candidates[i]));
    let mut best_idx = 0;
    for (i, &l) in losses.iter().enumerate() {
        if l < losses[best_idx] {
            best_idx = i;
        }
    }
    let mut best_alpha = candidates[best_idx];
    let mut best_ql = losses[best_idx];

    // Golden-section pass over the bracket around the winning candidate,
    // tracking the best point seen rather than trusting unimodality.
    let lo = candidates[best_idx.saturating_sub(1)] as f64;
    let hi = candidates[(best_idx + 1).min(candidates.len() - 1)] as f64;
    if hi > lo {
        const INV_PHI: f64 = 0.618_033_988_749_894_8;
        let mut a = lo;
        let mut b = hi;
        let mut c = b - (b - a) * INV_PHI;
        let mut d = a + (b - a) * INV_PHI;
        let mut fc = eval(c as f32);
        let mut fd = eval(d as f32);
        for _ in 0..GOLDEN_ITERS {
            if fc < best_ql {
                best_ql = fc;
                best_alpha = c as f32;
            }
            if fd < best_ql {
                best_ql = fd;
                best_alpha = d as f32;
            }
            if fc < fd {
                b = d;
                d = c;
                fd = fc;
                c = b - (b - a) * INV_PHI;
                fc = eval(c as f32);
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + (b - a) * INV_PHI;
                fd = eval(d as f32);
            }
        }
    }

    Ok(QuantReport {
        ql: best_ql,
        alpha_star: best_alpha,
        bits,
        norm_order: 1,
    })
}

/// Distribution families used in the quantized-loss studies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistKind {
    Laplace,
    Gaussian,
    Uniform,
}

impl DistKind {
    pub fn name(self) -> &'static str {
        match self {
            DistKind::Laplace => "laplace",
            DistKind::Gaussian => "gaussian",
            DistKind::Uniform => "uniform",
        }
    }

    /// E|x| in terms of the natural scale parameter (half-width T, sigma,
    /// or the Laplace diversity b).
    pub fn abs_mean(self, scale: f64) -> f64 {
        match self {
            DistKind::Laplace => scale,
            DistKind::Gaussian => scale * (2.0 / std::f64::consts::PI).sqrt(),
            DistKind::Uniform => scale / 2.0,
        }
    }

    /// Natural scale parameter giving the requested E|x|.
    pub fn scale_for_abs_mean(self, abs_mean: f64) -> f64 {
        match self {
            DistKind::Laplace => abs_mean,
            DistKind::Gaussian => abs_mean / (2.0 / std::f64::consts::PI).sqrt(),
            DistKind::Uniform => 2.0 * abs_mean,
        }
    }
}

/// Draw `count` samples from the named distribution, deterministically for a
/// fixed seed. `scale` is the natural parameter: half-width for Uniform,
/// sigma for Gaussian, diversity for Laplace.
pub fn sample_distribution(kind: DistKind, scale: f64, count: usize, seed: u64) -> Result<Tensor> {
    use rand::{Rng, SeedableRng};

    if count == 0 {
        return Err(Error::Degenerate("sample count must be positive".into()));
    }
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::Degenerate(format!(
            "scale must be positive and finite, got {scale}"
        )));
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(count);
    match kind {
        DistKind::Uniform => {
            for _ in 0..count {
                let u: f64 = rng.gen();
                data.push((scale * (2.0 * u - 1.0)) as f32);
            }
        }
        DistKind::Gaussian => {
            use rand_distr::{Distribution, Normal};
            let normal = Normal::new(0.0, scale).expect("scale validated above");
            for _ in 0..count {
                data.push(normal.sample(&mut rng) as f32);
            }
        }
        DistKind::Laplace => {
            // Inverse-CDF: u in (0,1), x = b*ln(2u) below the median,
            // -b*ln(2(1-u)) above it.
            for _ in 0..count {
                let u: f64 = loop {
                    let u: f64 = rng.gen();
                    if u > 0.0 {
                        break u;
                    }
                };
                let x = if u < 0.5 {
                    scale * (2.0 * u).ln()
                } else {
                    -scale * (2.0 * (1.0 - u)).ln()
                };
                data.push(x as f32);
            }
        }
    }
    Ok(Tensor::from_vec(data))
}

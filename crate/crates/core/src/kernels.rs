//! Per-tick stream kernels.
//!
//! Image kernels are pure functions of their input frames. Sampler kernels
//! additionally take the program's generator and document exactly how many
//! draws they consume, because replay determinism depends on it.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::frame::ImageFrame;

/// `(1 - alpha) * a + alpha * b`, pixel by pixel.
///
/// `alpha == 0` and `alpha == 1` return exact copies of `a` and `b`.
pub fn convex_combine(a: &ImageFrame, b: &ImageFrame, alpha: f64) -> Result<ImageFrame> {
    if !a.same_dims(b) {
        return Err(CoreError::DimensionMismatch {
            left: a.dims(),
            right: b.dims(),
        });
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(CoreError::AlphaOutOfRange(alpha));
    }
    if alpha == 0.0 {
        return Ok(a.clone());
    }
    if alpha == 1.0 {
        return Ok(b.clone());
    }
    let keep = 1.0 - alpha;
    let values = a
        .values()
        .iter()
        .zip(b.values())
        .map(|(&x, &y)| (keep * x + alpha * y).clamp(-1.0, 1.0))
        .collect();
    ImageFrame::from_values(a.width(), a.height(), values)
}

/// Color inversion around the gray zero level.
pub fn negate(a: &ImageFrame) -> ImageFrame {
    let values = a.values().iter().map(|v| -v).collect();
    ImageFrame::from_values(a.width(), a.height(), values).expect("negation preserves range")
}

/// Shape of a synthetic radial wave.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaveParams {
    /// Peak displacement, in pixels.
    pub amplitude: f64,
    /// Distance between crests, in pixels. Must be positive.
    pub wavelength: f64,
    /// Outward crest speed, in pixels per tick.
    pub speed: f64,
}

impl Default for WaveParams {
    fn default() -> Self {
        WaveParams {
            amplitude: 3.0,
            wavelength: 12.0,
            speed: 0.5,
        }
    }
}

/// Reflection of `a` in a radial sine wave centered at `center`, `t_rel`
/// ticks after the wave started.
///
/// Each output pixel `p` reads the input at `p + d(p)`, where
/// `d(p) = amplitude * sin(2pi * (r - speed * t_rel) / wavelength) * u(p)`,
/// `r = |p - center|` and `u(p)` is the unit vector from the center
/// (zero at the center). Sample coordinates are rounded to the nearest pixel
/// (half away from zero) and clamped to the frame.
pub fn wave_warp(a: &ImageFrame, center: [f64; 2], t_rel: u64, params: &WaveParams) -> ImageFrame {
    let (w, h) = a.dims();
    let phase_shift = params.speed * t_rel as f64;
    let mut values = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let (px, py) = (x as f64, y as f64);
            let (dx, dy) = (px - center[0], py - center[1]);
            let r = (dx * dx + dy * dy).sqrt();
            let (ox, oy) = if r == 0.0 {
                (0.0, 0.0)
            } else {
                let s = params.amplitude * (2.0 * PI * (r - phase_shift) / params.wavelength).sin();
                (s * dx / r, s * dy / r)
            };
            let sx = (px + ox).round().clamp(0.0, (w - 1) as f64) as usize;
            let sy = (py + oy).round().clamp(0.0, (h - 1) as f64) as usize;
            values.push(a.get(sx, sy));
        }
    }
    ImageFrame::from_values(w, h, values).expect("warp only moves in-range values")
}

/// Largest support of a categorical distribution.
pub const MAX_SUPPORT: usize = 16;

/// A categorical distribution over `0..weights.len()`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Categorical {
    weights: Vec<f64>,
}

impl TryFrom<Vec<f64>> for Categorical {
    type Error = CoreError;

    fn try_from(weights: Vec<f64>) -> Result<Self> {
        Categorical::new(weights)
    }
}

impl From<Categorical> for Vec<f64> {
    fn from(c: Categorical) -> Self {
        c.weights
    }
}

impl Categorical {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() || weights.len() > MAX_SUPPORT {
            return Err(CoreError::InvalidData(format!(
                "categorical support must have 1..={MAX_SUPPORT} points, got {}",
                weights.len()
            )));
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(CoreError::InvalidData("negative categorical weight".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(CoreError::InvalidData(format!(
                "categorical weights sum to {total}, not 1"
            )));
        }
        Ok(Categorical { weights })
    }

    /// Point mass on `value`.
    pub fn delta(value: usize) -> Self {
        assert!(value < MAX_SUPPORT);
        let mut weights = vec![0.0; value + 1];
        weights[value] = 1.0;
        Categorical { weights }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn mean(&self) -> f64 {
        self.weights.iter().enumerate().map(|(i, w)| i as f64 * w).sum()
    }

    pub fn second_moment(&self) -> f64 {
        self.weights
            .iter()
            .enumerate()
            .map(|(i, w)| (i * i) as f64 * w)
            .sum()
    }

    /// Inverse-CDF sampling. Consumes exactly one draw.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut last_positive = 0;
        for (i, &w) in self.weights.iter().enumerate() {
            if w > 0.0 {
                last_positive = i;
                acc += w;
                if u < acc {
                    return i as u32;
                }
            }
        }
        last_positive as u32
    }
}

/// Mixes two sampler streams: the latest sample of P with probability
/// `1 - alpha`, otherwise the latest sample of Q. Consumes exactly one draw.
pub fn mixture_sample<R: Rng + ?Sized>(latest_p: i64, latest_q: i64, alpha: f64, rng: &mut R) -> i64 {
    let u: f64 = rng.random();
    if u < alpha {
        latest_q
    } else {
        latest_p
    }
}

/// A sampler with separate positive and negative channels.
///
/// Its signed expectation is
/// `pos_weight * E[pos] - neg_weight * E[neg]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignedSampler {
    pub pos_channel: Categorical,
    pub neg_channel: Categorical,
    pub pos_weight: f64,
    pub neg_weight: f64,
}

/// One draw from a [`SignedSampler`]: a channel and a value from it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SignedSample {
    pub negative: bool,
    pub value: u32,
}

impl SignedSample {
    /// `+value` or `-value` according to the channel.
    pub fn signed_value(&self) -> i64 {
        if self.negative {
            -(self.value as i64)
        } else {
            self.value as i64
        }
    }
}

impl SignedSampler {
    pub fn total_weight(&self) -> f64 {
        self.pos_weight + self.neg_weight
    }

    pub fn signed_expectation(&self) -> f64 {
        self.pos_weight * self.pos_channel.mean() - self.neg_weight * self.neg_channel.mean()
    }

    /// Picks a channel in proportion to its weight, then samples it.
    /// Consumes exactly two draws. `total_weight() * signed_value()` is an
    /// unbiased estimate of the signed expectation.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> SignedSample {
        let u: f64 = rng.random();
        let total = self.total_weight();
        let negative = total > 0.0 && u >= self.pos_weight / total;
        let channel = if negative {
            &self.neg_channel
        } else {
            &self.pos_channel
        };
        SignedSample {
            negative,
            value: channel.sample(rng),
        }
    }
}

/// Negation for sampler streams: swap the channels and their weights.
pub fn signed_negate(s: &SignedSampler) -> SignedSampler {
    SignedSampler {
        pos_channel: s.neg_channel.clone(),
        neg_channel: s.pos_channel.clone(),
        pos_weight: s.neg_weight,
        neg_weight: s.pos_weight,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn frame(w: usize, h: usize, v: &[f64]) -> ImageFrame {
        ImageFrame::from_values(w, h, v.to_vec()).unwrap()
    }

    #[test]
    fn convex_combine_endpoints_are_exact() {
        let a = frame(2, 1, &[0.2, -0.4]);
        let b = frame(2, 1, &[1.0, 0.0]);
        assert_eq!(convex_combine(&a, &b, 0.0).unwrap(), a);
        assert_eq!(convex_combine(&a, &b, 1.0).unwrap(), b);
    }

    #[test]
    fn convex_combine_midpoint() {
        // elementwise: 0.5*0.2 + 0.5*1.0 = 0.6, 0.5*(-0.4) + 0.5*0.0 = -0.2
        let a = frame(2, 1, &[0.2, -0.4]);
        let b = frame(2, 1, &[1.0, 0.0]);
        let out = convex_combine(&a, &b, 0.5).unwrap();
        assert!((out.get(0, 0) - 0.6).abs() < 1e-12);
        assert!((out.get(1, 0) + 0.2).abs() < 1e-12);
    }

    #[test]
    fn convex_combine_rejects_mismatch_and_bad_alpha() {
        let a = ImageFrame::zeros(2, 2);
        let b = ImageFrame::zeros(3, 2);
        assert!(matches!(
            convex_combine(&a, &b, 0.5),
            Err(CoreError::DimensionMismatch { .. })
        ));
        assert!(convex_combine(&a, &a, 1.5).is_err());
    }

    #[test]
    fn negate_basics() {
        assert_eq!(negate(&ImageFrame::zeros(3, 3)).values(), &[0.0; 9]);
        assert_eq!(negate(&frame(1, 1, &[0.3])).values(), &[-0.3]);
    }

    #[test]
    fn zero_amplitude_wave_is_identity() {
        let a = ImageFrame::from_fn(9, 7, |x, y| (x as f64 * 0.1 - y as f64 * 0.07).sin());
        let p = WaveParams {
            amplitude: 0.0,
            ..WaveParams::default()
        };
        for t in [0, 1, 17, 1000] {
            assert_eq!(wave_warp(&a, [4.0, 3.0], t, &p), a);
        }
    }

    #[test]
    fn wave_pixel_on_sine_zero_is_fixed() {
        // r = wavelength / 2 gives sin(pi) ~ 1e-16, far below the rounding step
        let a = ImageFrame::from_fn(16, 16, |x, y| (x * 16 + y) as f64 / 256.0);
        let p = WaveParams {
            amplitude: 2.0,
            wavelength: 8.0,
            speed: 1.0,
        };
        let out = wave_warp(&a, [4.0, 4.0], 0, &p);
        assert_eq!(out.get(8, 4), a.get(8, 4));
        assert_eq!(out.get(4, 4), a.get(4, 4));
    }

    #[test]
    fn categorical_validation() {
        assert!(Categorical::new(vec![]).is_err());
        assert!(Categorical::new(vec![0.5, 0.6]).is_err());
        assert!(Categorical::new(vec![-0.1, 1.1]).is_err());
        assert!(Categorical::new(vec![1.0 / 17.0; 17]).is_err());
        assert!(Categorical::new(vec![0.25; 4]).is_ok());
    }

    #[test]
    fn delta_always_returns_its_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = Categorical::delta(5);
        assert!((0..100).all(|_| d.sample(&mut rng) == 5));
    }

    #[test]
    fn mixture_endpoints() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        assert!((0..1000).all(|_| mixture_sample(4, 7, 0.0, &mut rng) == 4));
        assert!((0..1000).all(|_| mixture_sample(4, 7, 1.0, &mut rng) == 7));
    }

    #[test]
    fn mixture_consumes_one_draw() {
        let mut a = ChaCha8Rng::seed_from_u64(11);
        let mut b = ChaCha8Rng::seed_from_u64(11);
        mixture_sample(0, 1, 0.3, &mut a);
        let _: f64 = b.random();
        assert_eq!(a.random::<u64>(), b.random::<u64>());
    }

    #[test]
    fn signed_negate_swaps_channels() {
        let s = SignedSampler {
            pos_channel: Categorical::delta(2),
            neg_channel: Categorical::delta(0),
            pos_weight: 1.0,
            neg_weight: 0.0,
        };
        let n = signed_negate(&s);
        assert_eq!(n.pos_channel, Categorical::delta(0));
        assert_eq!(n.neg_channel, Categorical::delta(2));
        assert_eq!((n.pos_weight, n.neg_weight), (0.0, 1.0));
        assert_eq!(signed_negate(&n), s);
        assert_eq!(n.signed_expectation(), -s.signed_expectation());
    }
}

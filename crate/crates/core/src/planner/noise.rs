//! Power-law ("colored") Gaussian noise by spectral synthesis.
//!
//! Each series draws independent Gaussian Fourier coefficients with
//! amplitude `f^(-β/2)` (frequencies below `1/H` are floored at `1/H`),
//! is transformed back to the time axis and divided by its exact marginal
//! standard deviation, so every entry has unit variance.

use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::rng;

/// Noise of shape `samples × dim × horizon`, contiguous along the horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseTensor {
    pub samples: usize,
    pub dim: usize,
    pub horizon: usize,
    pub data: Vec<f64>,
}

impl NoiseTensor {
    pub fn series(&self, sample: usize, dim: usize) -> &[f64] {
        let start = (sample * self.dim + dim) * self.horizon;
        &self.data[start..start + self.horizon]
    }

    pub fn get(&self, sample: usize, dim: usize, t: usize) -> f64 {
        self.data[(sample * self.dim + dim) * self.horizon + t]
    }
}

fn amplitudes(horizon: usize, exponent: f64) -> Vec<f64> {
    let h = horizon as f64;
    let fmin = 1.0 / h;
    (0..=horizon / 2)
        .map(|k| {
            let f = (k as f64 / h).max(fmin);
            f.powf(-exponent / 2.0)
        })
        .collect()
}

pub fn colored_noise(horizon: usize, dim: usize, samples: usize, exponent: f64, seed: u64) -> NoiseTensor {
    assert!(exponent >= 0.0, "noise exponent must be non-negative");
    let mut tensor = NoiseTensor {
        samples,
        dim,
        horizon,
        data: vec![0.0; samples * dim * horizon],
    };
    if horizon == 0 {
        return tensor;
    }
    if horizon == 1 {
        let mut r = rng::stream(seed, &[]);
        for v in tensor.data.iter_mut() {
            *v = r.sample(StandardNormal);
        }
        return tensor;
    }
    let amp = amplitudes(horizon, exponent);
    let even = horizon % 2 == 0;
    let nyquist = horizon / 2;
    // Var(y_t) = (2 s_0² + 4 Σ_mid s_k² + [2 s_nyq²]) / H².
    let mut var = 2.0 * amp[0] * amp[0];
    for (k, a) in amp.iter().enumerate().skip(1) {
        if even && k == nyquist {
            var += 2.0 * a * a;
        } else {
            var += 4.0 * a * a;
        }
    }
    let sd = var.sqrt() / horizon as f64;

    let ifft = FftPlanner::<f64>::new().plan_fft_inverse(horizon);
    let mut rng = rng::stream(seed, &[]);
    let mut buf = vec![Complex::new(0.0, 0.0); horizon];
    for series in tensor.data.chunks_mut(horizon) {
        buf.fill(Complex::new(0.0, 0.0));
        let dc: f64 = rng.sample(StandardNormal);
        buf[0] = Complex::new(std::f64::consts::SQRT_2 * amp[0] * dc, 0.0);
        for k in 1..=nyquist {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            if even && k == nyquist {
                buf[k] = Complex::new(std::f64::consts::SQRT_2 * amp[k] * re, 0.0);
            } else {
                let c = Complex::new(amp[k] * re, amp[k] * im);
                buf[k] = c;
                buf[horizon - k] = c.conj();
            }
        }
        ifft.process(&mut buf);
        for (out, c) in series.iter_mut().zip(&buf) {
            *out = c.re / horizon as f64 / sd;
        }
    }
    tensor
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lag1_autocorrelation(t: &NoiseTensor) -> f64 {
        let (mut num, mut den) = (0.0, 0.0);
        for s in 0..t.samples {
            for d in 0..t.dim {
                let x = t.series(s, d);
                for k in 0..x.len() {
                    den += x[k] * x[k];
                    if k + 1 < x.len() {
                        num += x[k] * x[k + 1];
                    }
                }
            }
        }
        num / den * t.horizon as f64 / (t.horizon - 1) as f64
    }

    fn variance(t: &NoiseTensor) -> f64 {
        t.data.iter().map(|v| v * v).sum::<f64>() / t.data.len() as f64
    }

    #[test]
    fn white_noise_is_uncorrelated() {
        let t = colored_noise(30, 1, 10_000, 0.0, 1);
        let r = lag1_autocorrelation(&t);
        assert!(r.abs() < 0.05, "lag-1 autocorrelation {r}");
        assert!((variance(&t) - 1.0).abs() < 0.03);
    }

    #[test]
    fn brown_noise_is_strongly_correlated() {
        let t = colored_noise(100, 1, 10_000, 2.0, 2);
        let r = lag1_autocorrelation(&t);
        assert!(r > 0.5, "lag-1 autocorrelation {r}");
        assert!((variance(&t) - 1.0).abs() < 0.05);
    }

    #[test]
    fn odd_horizon_has_unit_variance() {
        let t = colored_noise(31, 2, 5_000, 1.0, 3);
        assert!((variance(&t) - 1.0).abs() < 0.05);
    }

    #[test]
    fn seeded_noise_repeats() {
        assert_eq!(colored_noise(30, 2, 16, 2.0, 5), colored_noise(30, 2, 16, 2.0, 5));
        assert_ne!(colored_noise(30, 2, 16, 2.0, 5), colored_noise(30, 2, 16, 2.0, 6));
    }
}

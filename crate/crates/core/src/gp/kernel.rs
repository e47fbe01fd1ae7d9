use serde::{Deserialize, Serialize};

/// Squared-exponential kernel with per-input lengthscales (ARD),
/// parametrised in log space.
///
/// `k(a, b) = σ_f² exp(-½ Σ_k ((a_k - b_k) / ℓ_k)²)`, so `k(z, z) = σ_f²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RbfKernel {
    pub log_signal_var: f64,
    pub log_lengthscales: Vec<f64>,
}

impl RbfKernel {
    pub fn new(signal_var: f64, lengthscales: &[f64]) -> Self {
        assert!(signal_var > 0.0, "signal variance must be positive");
        assert!(
            lengthscales.iter().all(|&l| l > 0.0),
            "lengthscales must be positive"
        );
        RbfKernel {
            log_signal_var: signal_var.ln(),
            log_lengthscales: lengthscales.iter().map(|l| l.ln()).collect(),
        }
    }

    pub fn isotropic(signal_var: f64, lengthscale: f64, dim: usize) -> Self {
        Self::new(signal_var, &vec![lengthscale; dim])
    }

    pub fn dim(&self) -> usize {
        self.log_lengthscales.len()
    }

    pub fn signal_var(&self) -> f64 {
        self.log_signal_var.exp()
    }

    pub fn lengthscales(&self) -> Vec<f64> {
        self.log_lengthscales.iter().map(|l| l.exp()).collect()
    }

    pub fn inverse_lengthscales(&self) -> Vec<f64> {
        self.log_lengthscales.iter().map(|l| (-l).exp()).collect()
    }

    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        let r2: f64 = a
            .iter()
            .zip(b)
            .zip(&self.log_lengthscales)
            .map(|((x, y), l)| {
                let d = (x - y) * (-l).exp();
                d * d
            })
            .sum();
        self.signal_var() * (-0.5 * r2).exp()
    }

    /// Flattens `points` scaled by the inverse lengthscales, row-major.
    pub(crate) fn scale_rows<'a, I>(&self, points: I) -> Vec<f64>
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let inv = self.inverse_lengthscales();
        let mut out = Vec::new();
        for p in points {
            debug_assert_eq!(p.len(), inv.len());
            out.extend(p.iter().zip(&inv).map(|(v, s)| v * s));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_is_signal_variance() {
        let k = RbfKernel::new(2.5, &[0.3, 4.0]);
        for z in [[0.0, 0.0], [10.0, -3.0], [1e3, 1e-3]] {
            assert!((k.eval(&z, &z) - 2.5).abs() < 1e-12);
        }
    }

    #[test]
    fn decays_with_scaled_distance() {
        let k = RbfKernel::new(1.0, &[2.0]);
        assert!((k.eval(&[0.0], &[2.0]) - (-0.5f64).exp()).abs() < 1e-15);
        assert!(k.eval(&[0.0], &[100.0]) < 1e-300);
    }
}

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;

use super::kernel::RbfKernel;
use crate::error::{Error, Result};

/// Diagonal jitter tried in order when a Cholesky factorisation fails.
pub const JITTER_LADDER: [f64; 6] = [0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6];

/// Cholesky of `mat + jitter·I` for the smallest jitter on the ladder that works.
pub(crate) fn cholesky_with_jitter(mat: &DMatrix<f64>) -> Result<(Cholesky<f64, Dyn>, f64)> {
    for &jitter in &JITTER_LADDER {
        let mut m = mat.clone();
        if jitter > 0.0 {
            for i in 0..m.nrows() {
                m[(i, i)] += jitter;
            }
        }
        if let Some(ch) = Cholesky::new(m) {
            return Ok((ch, jitter));
        }
    }
    let eig = SymmetricEigen::new(mat.clone()).eigenvalues;
    let max = eig.iter().fold(f64::MIN, |a, &b| a.max(b.abs()));
    let min = eig.iter().fold(f64::MAX, |a, &b| a.min(b));
    let condition = if min > 0.0 { max / min } else { f64::INFINITY };
    Err(Error::IllConditioned {
        condition,
        jitter: *JITTER_LADDER.last().unwrap(),
    })
}

/// Exact GP posterior of a single output dimension.
///
/// `μ(z) = k(z)ᵀ(K + σ²I)⁻¹y`, `σ²(z) = k(z,z) - k(z)ᵀ(K + σ²I)⁻¹k(z)`.
#[derive(Debug, Clone)]
pub struct GpPosterior {
    kernel: RbfKernel,
    noise_var: f64,
    inputs: Vec<Vec<f64>>,
    scaled: Vec<f64>,
    targets: DVector<f64>,
    chol_l: DMatrix<f64>,
    alpha: DVector<f64>,
    k_inv: DMatrix<f64>,
    jitter: f64,
}

impl GpPosterior {
    pub fn prior(kernel: RbfKernel, noise_var: f64) -> Self {
        GpPosterior {
            scaled: Vec::new(),
            kernel,
            noise_var,
            inputs: Vec::new(),
            targets: DVector::zeros(0),
            chol_l: DMatrix::zeros(0, 0),
            alpha: DVector::zeros(0),
            k_inv: DMatrix::zeros(0, 0),
            jitter: 0.0,
        }
    }

    pub fn fit(
        inputs: Vec<Vec<f64>>,
        targets: Vec<f64>,
        kernel: RbfKernel,
        noise_var: f64,
    ) -> Result<Self> {
        if inputs.len() != targets.len() {
            return Err(Error::Shape(format!(
                "{} inputs but {} targets",
                inputs.len(),
                targets.len()
            )));
        }
        if let Some(bad) = inputs.iter().find(|z| z.len() != kernel.dim()) {
            return Err(Error::Shape(format!(
                "input of length {} for a kernel over {} dims",
                bad.len(),
                kernel.dim()
            )));
        }
        if inputs.is_empty() {
            return Ok(Self::prior(kernel, noise_var));
        }
        let n = inputs.len();
        let scaled = kernel.scale_rows(inputs.iter().map(|z| z.as_slice()));
        let mut a = signal_gram(&scaled, kernel.dim(), kernel.signal_var());
        for i in 0..n {
            a[(i, i)] += noise_var;
        }
        let (chol, jitter) = cholesky_with_jitter(&a)?;
        let targets = DVector::from_vec(targets);
        let alpha = chol.solve(&targets);
        let k_inv = chol.inverse();
        Ok(GpPosterior {
            kernel,
            noise_var,
            inputs,
            scaled,
            targets,
            chol_l: chol.unpack(),
            alpha,
            k_inv,
            jitter,
        })
    }

    pub fn kernel(&self) -> &RbfKernel {
        &self.kernel
    }

    pub fn noise_var(&self) -> f64 {
        self.noise_var
    }

    /// Jitter that had to be added on top of the noise variance.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.kernel.dim()
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn targets(&self) -> &DVector<f64> {
        &self.targets
    }

    /// `(K + σ²I)⁻¹ y`.
    pub fn alpha(&self) -> &DVector<f64> {
        &self.alpha
    }

    /// Noise-free kernel matrix of the training inputs.
    pub fn signal_gram(&self) -> DMatrix<f64> {
        signal_gram(&self.scaled, self.kernel.dim(), self.kernel.signal_var())
    }

    /// `k_n(z)` for every query row: a `B × n` matrix.
    pub fn cross_kernel(&self, queries: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let d = self.kernel.dim();
        if queries.ncols() != d {
            return Err(Error::Shape(format!(
                "query of width {} for a GP over {d} inputs",
                queries.ncols()
            )));
        }
        let b = queries.nrows();
        let n = self.len();
        let inv = self.kernel.inverse_lengthscales();
        let mut q = vec![0.0; b * d];
        for r in 0..b {
            for c in 0..d {
                q[r * d + c] = queries[(r, c)] * inv[c];
            }
        }
        let sf2 = self.kernel.signal_var();
        let mut ks = DMatrix::<f64>::zeros(b, n);
        let data = ks.as_mut_slice();
        for i in 0..n {
            let zi = &self.scaled[i * d..(i + 1) * d];
            let col = &mut data[i * b..(i + 1) * b];
            for (r, out) in col.iter_mut().enumerate() {
                let qr = &q[r * d..(r + 1) * d];
                let mut r2 = 0.0;
                for k in 0..d {
                    let diff = qr[k] - zi[k];
                    r2 += diff * diff;
                }
                *out = sf2 * (-0.5 * r2).exp();
            }
        }
        Ok(ks)
    }

    pub fn mean_batch(&self, queries: &DMatrix<f64>) -> Result<DVector<f64>> {
        if self.is_empty() {
            self.check_width(queries)?;
            return Ok(DVector::zeros(queries.nrows()));
        }
        let ks = self.cross_kernel(queries)?;
        Ok(&ks * &self.alpha)
    }

    /// Posterior mean and variance for every query row.
    pub fn predict_batch(&self, queries: &DMatrix<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
        let sf2 = self.kernel.signal_var();
        if self.is_empty() {
            self.check_width(queries)?;
            let b = queries.nrows();
            return Ok((DVector::zeros(b), DVector::from_element(b, sf2)));
        }
        let ks = self.cross_kernel(queries)?;
        let mean = &ks * &self.alpha;
        let var = self.variance_from_cross(&ks);
        Ok((mean, var))
    }

    pub(crate) fn variance_from_cross(&self, ks: &DMatrix<f64>) -> DVector<f64> {
        let sf2 = self.kernel.signal_var();
        let w = ks * &self.k_inv;
        let explained = w.component_mul(ks).column_sum();
        explained.map(|e| (sf2 - e).clamp(0.0, sf2))
    }

    pub fn predict(&self, z: &[f64]) -> Result<(f64, f64)> {
        let q = DMatrix::from_row_slice(1, z.len(), z);
        let (m, v) = self.predict_batch(&q)?;
        Ok((m[0], v[0]))
    }

    /// Log marginal likelihood of the training targets.
    pub fn log_marginal_likelihood(&self) -> f64 {
        let n = self.len() as f64;
        if self.is_empty() {
            return 0.0;
        }
        let log_det_half: f64 = self.chol_l.diagonal().iter().map(|v| v.ln()).sum();
        -0.5 * self.targets.dot(&self.alpha) - log_det_half - 0.5 * n * (2.0 * std::f64::consts::PI).ln()
    }

    /// `½ log det(I + K/σ²)`, the information-gain proxy of the data set.
    pub fn information_gain(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        let noise = self.noise_var + self.jitter;
        let log_det_half: f64 = self.chol_l.diagonal().iter().map(|v| v.ln()).sum();
        (log_det_half - 0.5 * self.len() as f64 * noise.ln()).max(0.0)
    }

    /// One joint draw of the latent function at the query rows.
    pub fn sample_joint<R: Rng + ?Sized>(
        &self,
        queries: &DMatrix<f64>,
        rng: &mut R,
    ) -> Result<DVector<f64>> {
        let b = queries.nrows();
        let sf2 = self.kernel.signal_var();
        self.check_width(queries)?;
        let rows: Vec<Vec<f64>> = (0..b)
            .map(|r| queries.row(r).iter().copied().collect())
            .collect();
        let qs = self.kernel.scale_rows(rows.iter().map(|v| v.as_slice()));
        let mut cov = signal_gram(&qs, self.kernel.dim(), sf2);
        let mean = if self.is_empty() {
            DVector::zeros(b)
        } else {
            let ks = self.cross_kernel(queries)?;
            cov -= &ks * &self.k_inv * ks.transpose();
            &ks * &self.alpha
        };
        let cov = (&cov + cov.transpose()) * 0.5;
        let max_var = cov.diagonal().iter().fold(0.0f64, |a, &v| a.max(v));
        if max_var <= 1e-14 * sf2 {
            return Ok(mean);
        }
        let (chol, _) = cholesky_with_jitter(&cov)?;
        let eps = DVector::<f64>::from_fn(b, |_, _| rng.sample(StandardNormal));
        Ok(mean + chol.l() * eps)
    }

    fn check_width(&self, queries: &DMatrix<f64>) -> Result<()> {
        if queries.ncols() != self.kernel.dim() {
            return Err(Error::Shape(format!(
                "query of width {} for a GP over {} inputs",
                queries.ncols(),
                self.kernel.dim()
            )));
        }
        Ok(())
    }
}

/// Noise-free Gram matrix of pre-scaled row-major points.
pub(crate) fn signal_gram(scaled: &[f64], d: usize, signal_var: f64) -> DMatrix<f64> {
    let n = if d == 0 { 0 } else { scaled.len() / d };
    let mut k = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        k[(i, i)] = signal_var;
        let zi = &scaled[i * d..(i + 1) * d];
        for j in 0..i {
            let zj = &scaled[j * d..(j + 1) * d];
            let r2: f64 = zi.iter().zip(zj).map(|(a, b)| (a - b) * (a - b)).sum();
            let v = signal_var * (-0.5 * r2).exp();
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

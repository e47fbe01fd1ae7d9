//! Projection of the posterior mean onto the RKHS ball of radius B.
//!
//! In representer form `f = Σ α_i k(z_i, ·)` the problem is
//!
//! ```text
//! min_α (α - α_n)ᵀ K (I + K/σ²) (α - α_n)   s.t.  αᵀ K α ≤ B²
//! ```
//!
//! Stationarity gives `((1 + ν)I + K/σ²) α = (I + K/σ²) α_n` for the
//! multiplier ν ≥ 0 of the single constraint. In the eigenbasis of K this is
//! diagonal, and the constrained norm is monotone decreasing in ν, so the
//! multiplier is found by bisection.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::posterior::GpPosterior;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct ProjectedDim {
    pub alpha: DVector<f64>,
    /// `‖f‖_k = √(αᵀKα)`.
    pub rkhs_norm: f64,
    /// `‖f - μ_n‖_{k_n}`, the square root of the QP objective.
    pub data_fit_distance: f64,
    /// Lagrange multiplier of the norm constraint (0 when inactive).
    pub multiplier: f64,
}

/// Planning model made of projected means, one per output dimension.
#[derive(Debug, Clone)]
pub struct ProjectedModel {
    posteriors: Vec<GpPosterior>,
    pub dims: Vec<ProjectedDim>,
    pub rkhs_bound: f64,
}

impl ProjectedModel {
    pub fn output_dim(&self) -> usize {
        self.dims.len()
    }

    pub fn input_dim(&self) -> usize {
        self.posteriors[0].input_dim()
    }

    /// `f(z)` for every query row: a `B × d_x` matrix.
    pub fn mean_batch(&self, queries: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let mut out = DMatrix::zeros(queries.nrows(), self.dims.len());
        for (j, (post, dim)) in self.posteriors.iter().zip(&self.dims).enumerate() {
            let ks = post.cross_kernel(queries)?;
            out.set_column(j, &(&ks * &dim.alpha));
        }
        Ok(out)
    }
}

/// `(α - α_n)ᵀ K (I + K/σ²) (α - α_n)`.
pub fn projection_objective(
    gram: &DMatrix<f64>,
    noise_var: f64,
    alpha: &DVector<f64>,
    alpha_n: &DVector<f64>,
) -> f64 {
    let d = alpha - alpha_n;
    let kd = gram * &d;
    d.dot(&kd) + kd.dot(&kd) / noise_var
}

fn project_dim(post: &GpPosterior, bound: f64) -> Result<ProjectedDim> {
    let alpha_n = post.alpha().clone();
    let n = alpha_n.len();
    if bound <= 0.0 {
        return Ok(ProjectedDim {
            alpha: DVector::zeros(n),
            rkhs_norm: 0.0,
            data_fit_distance: {
                let k = post.signal_gram();
                projection_objective(&k, effective_noise(post)?, &DVector::zeros(n), &alpha_n).sqrt()
            },
            multiplier: f64::INFINITY,
        });
    }
    let gram = post.signal_gram();
    let s2 = effective_noise(post)?;
    let b2 = bound * bound;
    let norm0 = alpha_n.dot(&(&gram * &alpha_n));
    if norm0 <= b2 {
        return Ok(ProjectedDim {
            rkhs_norm: norm0.max(0.0).sqrt(),
            alpha: alpha_n,
            data_fit_distance: 0.0,
            multiplier: 0.0,
        });
    }

    let eig = SymmetricEigen::new(gram.clone());
    let lambdas: Vec<f64> = eig.eigenvalues.iter().map(|l| l.max(0.0)).collect();
    let coords = eig.eigenvectors.transpose() * &alpha_n;
    let shrink = |nu: f64, i: usize| {
        let r = lambdas[i] / s2;
        (1.0 + r) / (1.0 + nu + r)
    };
    let norm2 = |nu: f64| -> f64 {
        (0..n)
            .map(|i| {
                let c = shrink(nu, i) * coords[i];
                lambdas[i] * c * c
            })
            .sum()
    };

    let mut hi = 1.0;
    let mut doublings = 0;
    while norm2(hi) > b2 {
        hi *= 2.0;
        doublings += 1;
        if doublings > 2000 || !hi.is_finite() {
            return Err(Error::Solver(format!(
                "no feasible multiplier found (norm² {:.3e} vs bound² {b2:.3e})",
                norm2(hi)
            )));
        }
    }
    let mut lo = 0.0;
    for _ in 0..300 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if norm2(mid) > b2 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let nu = hi;
    let scaled = DVector::from_fn(n, |i, _| shrink(nu, i) * coords[i]);
    let mut alpha = &eig.eigenvectors * scaled;
    let mut achieved = alpha.dot(&(&gram * &alpha));
    if achieved > b2 {
        alpha *= bound / achieved.sqrt();
        achieved = alpha.dot(&(&gram * &alpha));
    }
    let residual = achieved - b2;
    if residual > b2 * 1e-8 {
        return Err(Error::Solver(format!(
            "projection constraint residual {residual:.3e} after bisection"
        )));
    }
    let objective = projection_objective(&gram, s2, &alpha, &alpha_n);
    Ok(ProjectedDim {
        alpha,
        rkhs_norm: achieved.max(0.0).sqrt(),
        data_fit_distance: objective.max(0.0).sqrt(),
        multiplier: nu,
    })
}

fn effective_noise(post: &GpPosterior) -> Result<f64> {
    let s2 = post.noise_var() + post.jitter();
    if s2 > 0.0 {
        Ok(s2)
    } else {
        Err(Error::Solver("projection needs a positive noise variance".into()))
    }
}

/// Projects each posterior mean onto `{f : ‖f‖_k ≤ B}` under the
/// data-dependent norm `‖·‖_{k_n}`.
pub fn project_to_rkhs_ball(posteriors: &[GpPosterior], bound: f64) -> Result<ProjectedModel> {
    if posteriors.is_empty() || posteriors.iter().any(|p| p.is_empty()) {
        return Err(Error::Shape("projection needs a non-empty training set".into()));
    }
    let dims = posteriors
        .iter()
        .map(|p| project_dim(p, bound))
        .collect::<Result<Vec<_>>>()?;
    Ok(ProjectedModel {
        posteriors: posteriors.to_vec(),
        dims,
        rkhs_bound: bound,
    })
}

//! Image-set and image-pair metrics over the fixed random feature pyramid.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{dim_err, Error, Result};
use crate::losses::{loss_perceptual, FeaturePyramid};
use crate::tensor::{Element, Tape, Tensor};

/// Eigenvalues above this (negative) threshold are treated as round-off.
pub const EIGEN_CLAMP: f64 = -1e-6;

/// Sample mean and unbiased covariance of a set of feature vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianStats {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub n: usize,
}

impl GaussianStats {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>, n: usize) -> Result<Self> {
        let d = mean.len();
        if cov.shape() != (d, d) {
            return Err(dim_err!("covariance {:?} does not match mean of length {d}", cov.shape()));
        }
        if n < 2 {
            return Err(Error::Argument(format!("statistics need at least 2 samples, got {n}")));
        }
        if mean.iter().chain(cov.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Argument("statistics contain non-finite values".into()));
        }
        let asym = (&cov - cov.transpose()).abs().max();
        if asym > 1e-8 {
            return Err(Error::Argument(format!("covariance is not symmetric (max |Σ-Σᵀ| = {asym:e})")));
        }
        Ok(GaussianStats { mean, cov, n })
    }

    /// Two-pass mean and `1/(n-1)` covariance of row vectors.
    pub fn from_samples(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if n < 2 {
            return Err(Error::Argument(format!("statistics need at least 2 samples, got {n}")));
        }
        let d = rows[0].len();
        if rows.iter().any(|r| r.len() != d) {
            return Err(dim_err!("feature rows have differing lengths"));
        }
        let x = DMatrix::from_fn(n, d, |i, j| rows[i][j]);
        let mean = DVector::from_fn(d, |j, _| x.column(j).sum() / n as f64);
        let centered = DMatrix::from_fn(n, d, |i, j| x[(i, j)] - mean[j]);
        let mut cov = centered.transpose() * &centered / (n - 1) as f64;
        // exact symmetry despite summation order
        cov = (&cov + cov.transpose()) * 0.5;
        GaussianStats::new(mean, cov, n)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Symmetric eigendecomposition of `m` rescaled to unit max-norm, with the
/// eigenvalues scaled back.
///
/// The QR solver returns NaN on some nearly rank-deficient inputs; those are
/// redone through the SVD, taking each eigenvalue's sign from the Rayleigh
/// quotient of its singular vector.
fn sym_eigen(m: DMatrix<f64>) -> SymmetricEigen<f64, nalgebra::Dyn> {
    let scale = m.amax();
    let d = m.nrows();
    if scale == 0.0 {
        return SymmetricEigen {
            eigenvectors: DMatrix::identity(d, d),
            eigenvalues: DVector::zeros(d),
        };
    }
    let m = m / scale;
    let mut eig = SymmetricEigen::new(m.clone());
    let finite = eig.eigenvalues.iter().chain(eig.eigenvectors.iter()).all(|v| v.is_finite());
    if !finite {
        let svd = nalgebra::SVD::new(m.clone(), true, false);
        let u = svd.u.expect("requested U");
        let vals = DVector::from_fn(d, |i, _| {
            let col = u.column(i);
            let sign = if (col.transpose() * &m * col)[(0, 0)] < 0.0 { -1.0 } else { 1.0 };
            sign * svd.singular_values[i]
        });
        eig = SymmetricEigen {
            eigenvectors: u,
            eigenvalues: vals,
        };
    }
    eig.eigenvalues *= scale;
    eig
}

fn psd_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = sym_eigen(m.clone());
    let mut vals = eig.eigenvalues.clone();
    for v in vals.iter_mut() {
        if *v < 0.0 {
            if *v < EIGEN_CLAMP * m.norm().max(1.0) {
                return Err(Error::Argument(format!("matrix is not positive semi-definite (eigenvalue {v:e})")));
            }
            *v = 0.0;
        }
        *v = v.sqrt();
    }
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose())
}

/// `‖μ₁-μ₂‖² + Tr(Σ₁ + Σ₂ - 2 (Σ₁Σ₂)^{1/2})`.
///
/// The trace of the product root is taken as the trace of the root of the
/// symmetric PSD matrix `Σ₁^{1/2} Σ₂ Σ₁^{1/2}`, which has the same spectrum
/// as `Σ₁Σ₂`.
pub fn frechet_distance(s1: &GaussianStats, s2: &GaussianStats) -> Result<f64> {
    if s1.dim() != s2.dim() {
        return Err(dim_err!("Fréchet distance between {}-d and {}-d statistics", s1.dim(), s2.dim()));
    }
    let diff = &s1.mean - &s2.mean;
    let root1 = psd_sqrt(&s1.cov)?;
    let inner = &root1 * &s2.cov * &root1;
    let inner = (&inner + inner.transpose()) * 0.5;
    let eig = sym_eigen(inner);
    let mut tr_root = 0.0;
    for &v in eig.eigenvalues.iter() {
        if v < EIGEN_CLAMP {
            return Err(Error::Argument(format!("covariance product has eigenvalue {v:e}")));
        }
        tr_root += v.max(0.0).sqrt();
    }
    let d = diff.norm_squared() + s1.cov.trace() + s2.cov.trace() - 2.0 * tr_root;
    if !d.is_finite() {
        return Err(Error::Argument("Fréchet distance is not finite".into()));
    }
    Ok(d.max(0.0))
}

/// Gaussian fit of pooled final-stage pyramid features over `images`.
pub fn embed_for_fid<E: Element>(images: &[Tensor<E>], backbone: &FeaturePyramid<E>) -> Result<GaussianStats> {
    if images.len() < 2 {
        return Err(Error::Argument(format!("FID needs at least 2 images, got {}", images.len())));
    }
    let mut rows = Vec::with_capacity(images.len());
    for img in images {
        rows.extend(backbone.pooled_final(img)?);
    }
    GaussianStats::from_samples(&rows)
}

/// Mean over pyramid levels and positions of the squared distance between
/// channel-normalized feature vectors.
pub fn perceptual_patch_distance<E: Element>(x: &Tensor<E>, y: &Tensor<E>, backbone: &FeaturePyramid<E>) -> Result<f64> {
    if x.shape() != y.shape() {
        return Err(dim_err!("image shapes differ: {} vs {}", x.shape(), y.shape()));
    }
    let mut tape = Tape::new();
    let xv = tape.constant(x.clone());
    let yv = tape.constant(y.clone());
    let fx = backbone.features(&mut tape, xv)?;
    let fy = backbone.features(&mut tape, yv)?;
    let levels = fx.len();
    let mut total = 0.0;
    for (a, b) in fx.into_iter().zip(fy) {
        let (a, b) = (tape.value(a), tape.value(b));
        let [n, c, h, w] = a.shape().0;
        let mut level = 0.0;
        for bi in 0..n {
            for yy in 0..h {
                for xx in 0..w {
                    let col = |t: &Tensor<E>| -> Vec<f64> { (0..c).map(|k| t.at([bi, k, yy, xx]).as_f64()).collect() };
                    let (va, vb) = (col(a), col(b));
                    let norm = |v: &[f64]| v.iter().map(|t| t * t).sum::<f64>().sqrt() + 1e-10;
                    let (na, nb) = (norm(&va), norm(&vb));
                    level += va.iter().zip(&vb).map(|(p, q)| (p / na - q / nb).powi(2)).sum::<f64>();
                }
            }
        }
        total += level / (n * h * w) as f64;
    }
    Ok(total / levels as f64)
}

/// The perceptual training loss evaluated without gradients.
pub fn feature_reconstruction_loss<E: Element>(x: &Tensor<E>, y: &Tensor<E>, backbone: &FeaturePyramid<E>) -> Result<f64> {
    let mut tape = Tape::new();
    let xv = tape.constant(x.clone());
    let yv = tape.constant(y.clone());
    let l = loss_perceptual(&mut tape, xv, yv, backbone)?;
    Ok(tape.scalar(l))
}

fn channel_histograms<E: Element>(img: &Tensor<E>, bins: usize) -> Result<Vec<Vec<f64>>> {
    let [n, c, h, w] = img.shape().0;
    if c != 3 {
        return Err(dim_err!("expected an RGB image, got {}", img.shape()));
    }
    let count = (n * h * w) as f64;
    if count == 0.0 {
        return Err(dim_err!("empty image"));
    }
    let mut hist = vec![vec![0.0; bins]; c];
    for b in 0..n {
        for (ch, hc) in hist.iter_mut().enumerate() {
            for y in 0..h {
                for x in 0..w {
                    let v = img.at([b, ch, y, x]).as_f64().clamp(-1.0, 1.0);
                    let bin = (((v + 1.0) / 2.0 * bins as f64) as usize).min(bins - 1);
                    hc[bin] += 1.0;
                }
            }
        }
    }
    for hc in &mut hist {
        hc.iter_mut().for_each(|v| *v /= count);
    }
    Ok(hist)
}

pub const DEFAULT_HISTOGRAM_BINS: usize = 32;

/// Mean over RGB channels of the L1 distance between normalized value
/// histograms. Images may differ in size.
pub fn channel_histogram_distance<E: Element>(x: &Tensor<E>, y: &Tensor<E>, bins: usize) -> Result<f64> {
    if bins < 2 {
        return Err(Error::Argument(format!("histogram needs at least 2 bins, got {bins}")));
    }
    let (hx, hy) = (channel_histograms(x, bins)?, channel_histograms(y, bins)?);
    let total: f64 = hx
        .iter()
        .zip(&hy)
        .map(|(a, b)| a.iter().zip(b).map(|(p, q)| (p - q).abs()).sum::<f64>())
        .sum();
    Ok(total / 3.0)
}

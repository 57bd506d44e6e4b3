//! PSNR and SSIM on images with values in `[0, 1]`.

use ndarray::{Array1, Array2, ArrayView1};

use crate::error::{check_dim, Error, Result};
use crate::operator::ImageGeometry;
use crate::Scalar;

/// Value reported when the two images are identical.
pub const PSNR_CAP_DB: f64 = 200.0;

/// `10·log10(1/MSE)` for unit data range, capped at [`PSNR_CAP_DB`].
pub fn psnr<S: Scalar>(x: ArrayView1<S>, reference: ArrayView1<S>) -> Result<S> {
    check_dim("psnr", reference.len(), x.len())?;
    if x.is_empty() {
        return Err(Error::InvalidRange {
            name: "image",
            detail: "psnr of an empty image".into(),
        });
    }
    let diff = &x - &reference;
    let mse = diff.dot(&diff) / S::lit(x.len() as f64);
    if mse == S::zero() {
        return Ok(S::lit(PSNR_CAP_DB));
    }
    Ok((S::lit(-10.0) * mse.log10()).min(S::lit(PSNR_CAP_DB)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SsimParams {
    pub window: usize,
    pub sigma: f64,
    pub k1: f64,
    pub k2: f64,
}

impl Default for SsimParams {
    fn default() -> Self {
        Self {
            window: 11,
            sigma: 1.5,
            k1: 0.01,
            k2: 0.03,
        }
    }
}

impl SsimParams {
    /// Normalised 1-D Gaussian window; the 2-D window is its outer product.
    pub fn window_weights<S: Scalar>(&self) -> Vec<S> {
        let r = (self.window / 2) as f64;
        let raw: Vec<f64> = (0..self.window)
            .map(|i| {
                let u = i as f64 - r;
                (-u * u / (2.0 * self.sigma * self.sigma)).exp()
            })
            .collect();
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|w| S::lit(w / total)).collect()
    }

    fn validate(&self) -> Result<()> {
        if self.window == 0 || self.window.is_multiple_of(2) {
            return Err(Error::InvalidRange {
                name: "ssim window",
                detail: format!("window must be odd, got {}", self.window),
            });
        }
        if !(self.sigma > 0.0) || !(self.k1 > 0.0) || !(self.k2 > 0.0) {
            return Err(Error::InvalidRange {
                name: "ssim params",
                detail: format!("sigma, k1, k2 must be positive, got {:?}", self),
            });
        }
        Ok(())
    }
}

/// Valid-region separable filter of one `height × width` plane.
fn filter_valid<S: Scalar>(plane: &Array2<S>, w: &[S]) -> Array2<S> {
    let k = w.len();
    let (h, wd) = plane.dim();
    let (oh, ow) = (h + 1 - k, wd + 1 - k);
    let mut rows = Array2::zeros((h, ow));
    for r in 0..h {
        for c in 0..ow {
            let mut acc = S::zero();
            for (i, &wi) in w.iter().enumerate() {
                acc += wi * plane[[r, c + i]];
            }
            rows[[r, c]] = acc;
        }
    }
    let mut out = Array2::zeros((oh, ow));
    for r in 0..oh {
        for c in 0..ow {
            let mut acc = S::zero();
            for (i, &wi) in w.iter().enumerate() {
                acc += wi * rows[[r + i, c]];
            }
            out[[r, c]] = acc;
        }
    }
    out
}

fn channel_plane<S: Scalar>(x: ArrayView1<S>, g: ImageGeometry, ch: usize) -> Array2<S> {
    Array2::from_shape_fn((g.height, g.width), |(r, c)| x[g.index(r, c, ch)])
}

/// Mean SSIM over all valid windows and channels.
pub fn ssim<S: Scalar>(
    x: ArrayView1<S>,
    reference: ArrayView1<S>,
    geometry: ImageGeometry,
    params: &SsimParams,
) -> Result<S> {
    params.validate()?;
    check_dim("ssim", geometry.len(), x.len())?;
    check_dim("ssim", geometry.len(), reference.len())?;
    if geometry.width < params.window || geometry.height < params.window {
        return Err(Error::InvalidRange {
            name: "image",
            detail: format!(
                "{}x{} image is smaller than the {} px SSIM window",
                geometry.width, geometry.height, params.window
            ),
        });
    }
    let w = params.window_weights::<S>();
    let c1 = S::lit(params.k1 * params.k1);
    let c2 = S::lit(params.k2 * params.k2);
    let two = S::lit(2.0);
    let mut total = S::zero();
    let mut count = 0usize;
    for ch in 0..geometry.channels {
        let a = channel_plane(x, geometry, ch);
        let b = channel_plane(reference, geometry, ch);
        let mu_a = filter_valid(&a, &w);
        let mu_b = filter_valid(&b, &w);
        let e_aa = filter_valid(&(&a * &a), &w);
        let e_bb = filter_valid(&(&b * &b), &w);
        let e_ab = filter_valid(&(&a * &b), &w);
        for idx in ndarray::indices(mu_a.dim()) {
            let (ma, mb) = (mu_a[idx], mu_b[idx]);
            let saa = e_aa[idx] - ma * ma;
            let sbb = e_bb[idx] - mb * mb;
            let sab = e_ab[idx] - ma * mb;
            let num = (two * ma * mb + c1) * (two * sab + c2);
            let den = (ma * ma + mb * mb + c1) * (saa + sbb + c2);
            total += num / den;
            count += 1;
        }
    }
    Ok(total / S::lit(count as f64))
}

pub fn ssim_default<S: Scalar>(x: ArrayView1<S>, reference: ArrayView1<S>, geometry: ImageGeometry) -> Result<S> {
    ssim(x, reference, geometry, &SsimParams::default())
}

/// Quality figures for one reconstruction.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport<S> {
    pub psnr_db: S,
    /// Absent when the signal is not an image at least one window wide.
    pub ssim: Option<S>,
    /// ‖y − A x̂₀‖
    pub residual_norm: S,
    /// ‖x̂₀ − μ_post‖ when an exact posterior is known.
    pub posterior_error: Option<S>,
}

impl<S: Scalar> MetricsReport<S> {
    pub fn compute(
        x0: ArrayView1<S>,
        reference: ArrayView1<S>,
        geometry: Option<ImageGeometry>,
        residual: ArrayView1<S>,
        posterior_mean: Option<&Array1<S>>,
    ) -> Result<Self> {
        let ssim = match geometry {
            Some(g) if g.width >= 11 && g.height >= 11 => Some(ssim_default(x0, reference, g)?),
            _ => None,
        };
        let posterior_error = match posterior_mean {
            Some(mu) => {
                check_dim("posterior mean", x0.len(), mu.len())?;
                let d = &x0 - mu;
                Some(d.dot(&d).sqrt())
            }
            None => None,
        };
        Ok(Self {
            psnr_db: psnr(x0, reference)?,
            ssim,
            residual_norm: residual.dot(&residual).sqrt(),
            posterior_error,
        })
    }
}

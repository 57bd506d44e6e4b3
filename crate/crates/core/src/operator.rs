//! Linear degradation operators and the noisy measurement model `y = A x₀ + n`.
//!
//! Image vectors are laid out row-major with interleaved channels:
//! `index = (row · width + col) · channels + channel`.

use ndarray::{Array1, Array2, ArrayView1};
use rand::seq::index;

use crate::error::{check_dim, Error, Result};
use crate::rng;
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ImageGeometry {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
}

impl ImageGeometry {
    pub fn new(width: usize, height: usize, channels: usize) -> Self {
        Self {
            width,
            height,
            channels,
        }
    }

    pub fn gray(width: usize, height: usize) -> Self {
        Self::new(width, height, 1)
    }

    pub fn pixels(&self) -> usize {
        self.width * self.height
    }

    pub fn len(&self) -> usize {
        self.pixels() * self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize, channel: usize) -> usize {
        (row * self.width + col) * self.channels + channel
    }
}

/// Square 2-D kernel with odd side length, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel2d<S> {
    size: usize,
    taps: Vec<S>,
}

impl<S: Scalar> Kernel2d<S> {
    /// Validates and normalizes `taps` to unit sum.
    pub fn normalized(size: usize, taps: Vec<S>) -> Result<Self> {
        if size.is_multiple_of(2) || size == 0 {
            return Err(Error::InvalidRange {
                name: "kernel_size",
                detail: format!("kernel side length must be odd, got {size}"),
            });
        }
        check_dim("kernel taps", size * size, taps.len())?;
        if taps.iter().any(|&v| v < S::zero() || !v.is_finite()) {
            return Err(Error::InvalidRange {
                name: "kernel",
                detail: "kernel entries must be finite and non-negative".into(),
            });
        }
        let total: S = taps.iter().copied().sum();
        if !(total > S::zero()) {
            return Err(Error::InvalidRange {
                name: "kernel",
                detail: "kernel has zero mass".into(),
            });
        }
        Ok(Self {
            size,
            taps: taps.into_iter().map(|v| v / total).collect(),
        })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn radius(&self) -> usize {
        self.size / 2
    }

    /// Tap at `(row, col)` of the kernel grid.
    pub fn at(&self, row: usize, col: usize) -> S {
        self.taps[row * self.size + col]
    }

    pub fn taps(&self) -> &[S] {
        &self.taps
    }

    pub fn center(&self) -> S {
        let r = self.radius();
        self.at(r, r)
    }

    pub fn transposed(&self) -> Self {
        let n = self.size;
        let mut taps = vec![S::zero(); n * n];
        for r in 0..n {
            for c in 0..n {
                taps[c * n + r] = self.at(r, c);
            }
        }
        Self { size: n, taps }
    }

    /// Separable Gaussian sampled at integer offsets.
    pub fn gaussian(size: usize, sigma: S) -> Result<Self> {
        if !(sigma > S::zero()) {
            return Err(Error::InvalidRange {
                name: "sigma",
                detail: format!("blur sigma must be positive, got {sigma}"),
            });
        }
        if size.is_multiple_of(2) {
            return Err(Error::InvalidRange {
                name: "kernel_size",
                detail: format!("kernel side length must be odd, got {size}"),
            });
        }
        let r = (size / 2) as i64;
        let two_s2 = S::lit(2.0) * sigma * sigma;
        let g: Vec<S> = (-r..=r)
            .map(|i| {
                let x = S::lit(i as f64);
                (-(x * x) / two_s2).exp()
            })
            .collect();
        let taps = g.iter().flat_map(|&a| g.iter().map(move |&b| a * b)).collect();
        Self::normalized(size, taps)
    }

    /// Anti-aliased line segment of `length` pixels through the center at
    /// `angle_degrees` (0 = horizontal, 90 = vertical).
    pub fn motion(size: usize, angle_degrees: S, length: S) -> Result<Self> {
        if size.is_multiple_of(2) {
            return Err(Error::InvalidRange {
                name: "kernel_size",
                detail: format!("kernel side length must be odd, got {size}"),
            });
        }
        if !(length > S::zero() && length <= S::lit(size as f64)) {
            return Err(Error::InvalidRange {
                name: "length",
                detail: format!("motion length must be in (0, {size}], got {length}"),
            });
        }
        let theta = angle_degrees.to_radians();
        let (dir_row, dir_col) = (theta.sin(), theta.cos());
        let half_len = length * S::lit(0.5);
        let r = (size / 2) as i64;
        let half = S::lit(0.5);
        let mut taps = Vec::with_capacity(size * size);
        for dr in -r..=r {
            for dc in -r..=r {
                let (y, x) = (S::lit(dr as f64), S::lit(dc as f64));
                let along = (x * dir_col + y * dir_row).abs();
                let across = (y * dir_col - x * dir_row).abs();
                let coverage = (half_len + half - along).max(S::zero()).min(S::one());
                let falloff = (S::one() - across).max(S::zero());
                taps.push(coverage * falloff);
            }
        }
        Self::normalized(size, taps)
    }
}

/// Half-sample symmetric reflection of an arbitrary integer index into `0..n`.
#[inline]
fn reflect(i: i64, n: usize) -> usize {
    let n = n as i64;
    let period = 2 * n;
    let m = i.rem_euclid(period);
    (if m >= n { period - 1 - m } else { m }) as usize
}

#[derive(Debug, Clone, PartialEq)]
pub enum OperatorKind<S> {
    Identity,
    /// Kept coordinates, ascending.
    Mask {
        kept: Vec<usize>,
    },
    Convolution {
        kernel: Kernel2d<S>,
        geometry: ImageGeometry,
    },
    Downsample {
        factor: usize,
        geometry: ImageGeometry,
    },
    Dense(Array2<S>),
}

/// A linear map `A: R^d → R^m` with its exact adjoint.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearOperator<S> {
    kind: OperatorKind<S>,
    input_dim: usize,
    output_dim: usize,
}

impl<S: Scalar> LinearOperator<S> {
    pub fn identity(dim: usize) -> Self {
        Self {
            kind: OperatorKind::Identity,
            input_dim: dim,
            output_dim: dim,
        }
    }

    /// Keeps the listed coordinates of a `dim`-vector.
    pub fn mask(dim: usize, mut kept: Vec<usize>) -> Result<Self> {
        kept.sort_unstable();
        kept.dedup();
        if kept.is_empty() {
            return Err(Error::InvalidRange {
                name: "mask",
                detail: "mask keeps no coordinates".into(),
            });
        }
        if let Some(&last) = kept.last() {
            if last >= dim {
                return Err(Error::DimensionMismatch {
                    context: "mask index",
                    expected: dim,
                    actual: last + 1,
                });
            }
        }
        Ok(Self {
            output_dim: kept.len(),
            kind: OperatorKind::Mask { kept },
            input_dim: dim,
        })
    }

    /// Uniformly random pixel subset of size `round(keep_fraction · w · h)`,
    /// shared by all channels.
    pub fn random_mask(geometry: ImageGeometry, keep_fraction: f64, seed: u64) -> Result<Self> {
        if !(keep_fraction > 0.0 && keep_fraction <= 1.0) {
            return Err(Error::InvalidRange {
                name: "keep_fraction",
                detail: format!("must be in (0, 1], got {keep_fraction}"),
            });
        }
        let pixels = geometry.pixels();
        let keep = (keep_fraction * pixels as f64).round() as usize;
        if keep == 0 {
            return Err(Error::InvalidRange {
                name: "keep_fraction",
                detail: format!("{keep_fraction} keeps zero of {pixels} pixels"),
            });
        }
        let mut rng = rng::stream(seed, rng::streams::MASK);
        let mut chosen = index::sample(&mut rng, pixels, keep).into_vec();
        chosen.sort_unstable();
        let kept = chosen
            .into_iter()
            .flat_map(|p| (0..geometry.channels).map(move |c| p * geometry.channels + c))
            .collect();
        Self::mask(geometry.len(), kept)
    }

    pub fn convolution(geometry: ImageGeometry, kernel: Kernel2d<S>) -> Self {
        Self {
            kind: OperatorKind::Convolution { kernel, geometry },
            input_dim: geometry.len(),
            output_dim: geometry.len(),
        }
    }

    pub fn gaussian_blur(geometry: ImageGeometry, kernel_size: usize, sigma: S) -> Result<Self> {
        Ok(Self::convolution(geometry, Kernel2d::gaussian(kernel_size, sigma)?))
    }

    pub fn motion_blur(geometry: ImageGeometry, kernel_size: usize, angle_degrees: S, length: S) -> Result<Self> {
        Ok(Self::convolution(
            geometry,
            Kernel2d::motion(kernel_size, angle_degrees, length)?,
        ))
    }

    /// Averages non-overlapping `factor × factor` blocks.
    pub fn downsample(geometry: ImageGeometry, factor: usize) -> Result<Self> {
        if factor == 0 || !geometry.width.is_multiple_of(factor) || !geometry.height.is_multiple_of(factor) {
            return Err(Error::InvalidRange {
                name: "factor",
                detail: format!(
                    "factor {factor} must divide image size {}x{}",
                    geometry.width, geometry.height
                ),
            });
        }
        Ok(Self {
            kind: OperatorKind::Downsample { factor, geometry },
            input_dim: geometry.len(),
            output_dim: geometry.len() / (factor * factor),
        })
    }

    pub fn dense(matrix: Array2<S>) -> Self {
        Self {
            input_dim: matrix.ncols(),
            output_dim: matrix.nrows(),
            kind: OperatorKind::Dense(matrix),
        }
    }

    pub fn kind(&self) -> &OperatorKind<S> {
        &self.kind
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    /// `A x`
    pub fn apply(&self, x: ArrayView1<S>) -> Result<Array1<S>> {
        check_dim("operator input", self.input_dim, x.len())?;
        Ok(match &self.kind {
            OperatorKind::Identity => x.to_owned(),
            OperatorKind::Mask { kept } => kept.iter().map(|&i| x[i]).collect(),
            OperatorKind::Convolution { kernel, geometry } => convolve(kernel, geometry, x, false),
            OperatorKind::Downsample { factor, geometry } => block_average(*factor, geometry, x),
            OperatorKind::Dense(m) => m.dot(&x),
        })
    }

    /// `Aᵀ v`
    pub fn adjoint(&self, v: ArrayView1<S>) -> Result<Array1<S>> {
        check_dim("operator adjoint input", self.output_dim, v.len())?;
        Ok(match &self.kind {
            OperatorKind::Identity => v.to_owned(),
            OperatorKind::Mask { kept } => {
                let mut out = Array1::zeros(self.input_dim);
                for (&i, &val) in kept.iter().zip(v.iter()) {
                    out[i] = val;
                }
                out
            }
            OperatorKind::Convolution { kernel, geometry } => convolve(kernel, geometry, v, true),
            OperatorKind::Downsample { factor, geometry } => block_spread(*factor, geometry, v),
            OperatorKind::Dense(m) => m.t().dot(&v),
        })
    }

    /// Materializes `A` as an `m × d` matrix, column by column.
    pub fn to_matrix(&self) -> Array2<S> {
        let mut m = Array2::zeros((self.output_dim, self.input_dim));
        let mut e = Array1::<S>::zeros(self.input_dim);
        for j in 0..self.input_dim {
            e[j] = S::one();
            let col = self.apply(e.view()).expect("basis vector has input dimension");
            m.column_mut(j).assign(&col);
            e[j] = S::zero();
        }
        m
    }
}

/// `out[p] = Σ_q K[q] · x[reflect(p − q)]`; with `transpose` the same taps are
/// scattered instead, which is the exact adjoint under the same reflection.
fn convolve<S: Scalar>(kernel: &Kernel2d<S>, geom: &ImageGeometry, x: ArrayView1<S>, transpose: bool) -> Array1<S> {
    let mut out = Array1::zeros(geom.len());
    let r = kernel.radius() as i64;
    for row in 0..geom.height {
        for col in 0..geom.width {
            for kr in 0..kernel.size() {
                let src_row = reflect(row as i64 - (kr as i64 - r), geom.height);
                for kc in 0..kernel.size() {
                    let w = kernel.at(kr, kc);
                    if w == S::zero() {
                        continue;
                    }
                    let src_col = reflect(col as i64 - (kc as i64 - r), geom.width);
                    for ch in 0..geom.channels {
                        let dst = geom.index(row, col, ch);
                        let src = geom.index(src_row, src_col, ch);
                        if transpose {
                            out[src] += w * x[dst];
                        } else {
                            out[dst] += w * x[src];
                        }
                    }
                }
            }
        }
    }
    out
}

fn block_average<S: Scalar>(factor: usize, geom: &ImageGeometry, x: ArrayView1<S>) -> Array1<S> {
    let small = ImageGeometry::new(geom.width / factor, geom.height / factor, geom.channels);
    let inv_area = S::one() / S::lit((factor * factor) as f64);
    let mut out = Array1::zeros(small.len());
    for row in 0..geom.height {
        for col in 0..geom.width {
            for ch in 0..geom.channels {
                out[small.index(row / factor, col / factor, ch)] += x[geom.index(row, col, ch)] * inv_area;
            }
        }
    }
    out
}

fn block_spread<S: Scalar>(factor: usize, geom: &ImageGeometry, v: ArrayView1<S>) -> Array1<S> {
    let small = ImageGeometry::new(geom.width / factor, geom.height / factor, geom.channels);
    let inv_area = S::one() / S::lit((factor * factor) as f64);
    let mut out = Array1::zeros(geom.len());
    for row in 0..geom.height {
        for col in 0..geom.width {
            for ch in 0..geom.channels {
                out[geom.index(row, col, ch)] = v[small.index(row / factor, col / factor, ch)] * inv_area;
            }
        }
    }
    out
}

/// `y = A x₀ + σ_y z` together with the operator that produced it.
#[derive(Debug, Clone)]
pub struct MeasurementModel<S> {
    pub operator: LinearOperator<S>,
    /// Standard deviation σ_y of the additive Gaussian noise.
    pub noise_std: S,
    pub measurement: Array1<S>,
}

impl<S: Scalar> MeasurementModel<S> {
    pub fn new(operator: LinearOperator<S>, noise_std: S, measurement: Array1<S>) -> Result<Self> {
        check_dim("measurement", operator.output_dim(), measurement.len())?;
        if !(noise_std >= S::zero()) {
            return Err(Error::InvalidRange {
                name: "noise_std",
                detail: format!("must be non-negative, got {noise_std}"),
            });
        }
        Ok(Self {
            operator,
            noise_std,
            measurement,
        })
    }

    /// Draws `y = A x₀ + σ_y z` with `z` from the seed's measurement-noise stream.
    pub fn synthesize(operator: LinearOperator<S>, x0: ArrayView1<S>, noise_std: S, seed: u64) -> Result<Self> {
        if !(noise_std >= S::zero()) {
            return Err(Error::InvalidRange {
                name: "noise_std",
                detail: format!("must be non-negative, got {noise_std}"),
            });
        }
        let mut y = operator.apply(x0)?;
        if noise_std > S::zero() {
            let mut rng = rng::stream(seed, rng::streams::MEASUREMENT_NOISE);
            let z = rng::standard_normal::<S, _>(&mut rng, y.len());
            y.scaled_add(noise_std, &z);
        }
        Self::new(operator, noise_std, y)
    }

    pub fn dim(&self) -> usize {
        self.operator.input_dim()
    }

    /// `y − A x`
    pub fn residual(&self, x: ArrayView1<S>) -> Result<Array1<S>> {
        Ok(&self.measurement - &self.operator.apply(x)?)
    }
}

//! Haar wavelets, periodic finite differences and FFT-based circulant
//! solves.
//!
//! Video data is stored frame-major: element `(f, y, x)` lives at
//! `f·(n_y·n_x) + y·n_x + x`.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{check_len, Error, Result};

/// Weighted periodic first-difference operator
/// `∇ = [ω_x∇_x; ω_y∇_y; ω_t∇_t]` on an `n_F × n_y × n_x` volume.
///
/// Each component is `x_i − x_{i+1}` along its axis with wraparound.
/// `apply` returns the three components stacked (length `3·len()`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientOperator {
    nx: usize,
    ny: usize,
    nf: usize,
    weights: [f64; 3],
}

impl GradientOperator {
    /// Unit weights.
    pub fn new(nx: usize, ny: usize, nf: usize) -> Result<Self> {
        Self::with_weights(nx, ny, nf, [1.0, 1.0, 1.0])
    }

    /// `weights = [ω_x, ω_y, ω_t]`, each non-negative.
    pub fn with_weights(nx: usize, ny: usize, nf: usize, weights: [f64; 3]) -> Result<Self> {
        if nx == 0 || ny == 0 || nf == 0 {
            return Err(Error::param("gradient dimensions must be positive"));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::param("gradient weights must be finite and non-negative"));
        }
        Ok(Self { nx, ny, nf, weights })
    }

    /// Same shape with the temporal weight cleared.
    pub fn without_temporal(mut self) -> Self {
        self.weights[2] = 0.0;
        self
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.nf, self.ny, self.nx)
    }

    pub fn weights(&self) -> [f64; 3] {
        self.weights
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny * self.nf
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    fn strides(&self) -> [(usize, usize); 3] {
        // (axis length, stride) for x, y, t
        [(self.nx, 1), (self.ny, self.nx), (self.nf, self.nx * self.ny)]
    }

    /// Index of the wraparound neighbour `i + 1` along an axis.
    #[inline]
    fn next(i: usize, len: usize, stride: usize) -> usize {
        let pos = (i / stride) % len;
        if pos + 1 == len {
            i + stride - len * stride
        } else {
            i + stride
        }
    }

    #[inline]
    fn prev(i: usize, len: usize, stride: usize) -> usize {
        let pos = (i / stride) % len;
        if pos == 0 {
            i + (len - 1) * stride
        } else {
            i - stride
        }
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        let n = self.len();
        check_len("gradient input", n, x.len())?;
        let mut out = vec![0.0; 3 * n];
        for (k, (len, stride)) in self.strides().into_iter().enumerate() {
            let w = self.weights[k];
            let block = &mut out[k * n..(k + 1) * n];
            if w == 0.0 {
                continue;
            }
            for (i, o) in block.iter_mut().enumerate() {
                *o = w * (x[i] - x[Self::next(i, len, stride)]);
            }
        }
        Ok(out)
    }

    pub fn adjoint(&self, z: &[f64]) -> Result<Vec<f64>> {
        let n = self.len();
        check_len("gradient adjoint input", 3 * n, z.len())?;
        let mut out = vec![0.0; n];
        for (k, (len, stride)) in self.strides().into_iter().enumerate() {
            let w = self.weights[k];
            if w == 0.0 {
                continue;
            }
            let block = &z[k * n..(k + 1) * n];
            for (i, o) in out.iter_mut().enumerate() {
                *o += w * (block[i] - block[Self::prev(i, len, stride)]);
            }
        }
        Ok(out)
    }

    /// First column of `∇ᵀ∇`, assembled from the per-axis circulant second
    /// difference `[2, −1, 0, …, 0, −1]` placed along each axis.
    pub fn laplacian_first_column(&self) -> Vec<f64> {
        let mut col = vec![0.0; self.len()];
        for (k, (len, stride)) in self.strides().into_iter().enumerate() {
            let w2 = self.weights[k] * self.weights[k];
            col[0] += 2.0 * w2;
            col[stride % (len * stride)] -= w2;
            col[(len - 1) * stride] -= w2;
        }
        col
    }
}

/// `grad_apply` in free-function form.
pub fn grad_apply(g: &GradientOperator, x: &[f64]) -> Result<Vec<f64>> {
    g.apply(x)
}

pub fn grad_adjoint(g: &GradientOperator, z: &[f64]) -> Result<Vec<f64>> {
    g.adjoint(z)
}

fn plan(planner: &mut FftPlanner<f64>, len: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    if inverse {
        planner.plan_fft_inverse(len)
    } else {
        planner.plan_fft_forward(len)
    }
}

/// In-place n-dimensional DFT over a row-major array of the given shape.
/// The inverse is normalized by the total length.
pub fn fft_nd(data: &mut [Complex64], shape: &[usize], inverse: bool) -> Result<()> {
    let total: usize = shape.iter().product();
    check_len("FFT data", total, data.len())?;
    if total == 0 {
        return Ok(());
    }
    let mut planner = FftPlanner::new();
    let mut stride = total;
    for &len in shape {
        stride /= len;
        if len == 1 {
            continue;
        }
        let fft = plan(&mut planner, len, inverse);
        let mut lane = vec![Complex64::default(); len];
        let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
        let outer = total / (len * stride);
        for o in 0..outer {
            let base = o * len * stride;
            for s in 0..stride {
                for (j, v) in lane.iter_mut().enumerate() {
                    *v = data[base + s + j * stride];
                }
                fft.process_with_scratch(&mut lane, &mut scratch);
                for (j, v) in lane.iter().enumerate() {
                    data[base + s + j * stride] = *v;
                }
            }
        }
    }
    if inverse {
        let inv = 1.0 / total as f64;
        data.iter_mut().for_each(|v| *v *= inv);
    }
    Ok(())
}

/// 1D forward DFT of a real signal.
pub fn fft_real(x: &[f64]) -> Vec<Complex64> {
    let mut c: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    let n = c.len();
    // a 1D shape always matches its own length
    fft_nd(&mut c, &[n], false).expect("1D FFT");
    c
}

/// Normalized 1D inverse DFT.
pub fn ifft(x: &[Complex64]) -> Vec<Complex64> {
    let mut c = x.to_vec();
    let n = c.len();
    fft_nd(&mut c, &[n], true).expect("1D FFT");
    c
}

/// Eigenvalues of the (block-)circulant matrix with first column `col`.
pub fn circulant_eigenvalues(col: &[f64], shape: &[usize]) -> Result<Vec<f64>> {
    let mut c: Vec<Complex64> = col.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft_nd(&mut c, shape, false)?;
    Ok(c.into_iter().map(|v| v.re).collect())
}

/// Solves `C·x = rhs` for a symmetric (block-)circulant `C` given its
/// eigenvalues from [`circulant_eigenvalues`].
pub fn circulant_solve(eigs: &[f64], rhs: &[f64], shape: &[usize]) -> Result<Vec<f64>> {
    check_len("circulant right-hand side", eigs.len(), rhs.len())?;
    let mut c: Vec<Complex64> = rhs.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft_nd(&mut c, shape, false)?;
    for (v, &e) in c.iter_mut().zip(eigs) {
        if e.abs() < 1e-300 {
            return Err(Error::Degenerate("singular circulant system".into()));
        }
        *v /= e;
    }
    fft_nd(&mut c, shape, true)?;
    Ok(c.into_iter().map(|v| v.re).collect())
}

/// Shape and depth of an orthonormal multi-level Haar decomposition.
///
/// Coefficients use the usual pyramid layout: after each level the
/// approximation occupies the leading half of every transformed axis.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WaveletPlan {
    shape: Vec<usize>,
    levels: usize,
}

impl WaveletPlan {
    pub fn new_1d(n: usize, levels: usize) -> Result<Self> {
        Self::new(vec![n], levels)
    }

    /// `ny × nx` image, row-major.
    pub fn new_2d(ny: usize, nx: usize, levels: usize) -> Result<Self> {
        Self::new(vec![ny, nx], levels)
    }

    /// Deepest decomposition the shape allows.
    pub fn max_levels(shape: &[usize]) -> usize {
        shape
            .iter()
            .map(|&d| if d == 0 { 0 } else { d.trailing_zeros() as usize })
            .min()
            .unwrap_or(0)
    }

    fn new(shape: Vec<usize>, levels: usize) -> Result<Self> {
        if shape.contains(&0) {
            return Err(Error::param("wavelet plan dimensions must be positive"));
        }
        if levels > Self::max_levels(&shape) {
            return Err(Error::param(format!(
                "shape {shape:?} is not divisible by 2^{levels}"
            )));
        }
        Ok(Self { shape, levels })
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len("wavelet input", self.len(), x.len())?;
        let mut c = x.to_vec();
        let mut tmp = Vec::new();
        for l in 0..self.levels {
            self.each_lane(l, |idx| haar_step(&mut c, &idx, &mut tmp));
        }
        Ok(c)
    }

    pub fn inverse(&self, c: &[f64]) -> Result<Vec<f64>> {
        check_len("wavelet coefficients", self.len(), c.len())?;
        let mut x = c.to_vec();
        let mut tmp = Vec::new();
        for l in (0..self.levels).rev() {
            self.each_lane_rev(l, |idx| haar_unstep(&mut x, &idx, &mut tmp));
        }
        Ok(x)
    }

    /// Index lanes touched at level `l` (0 = finest), in analysis order.
    fn lanes(&self, l: usize) -> Vec<Vec<usize>> {
        match self.shape.as_slice() {
            [n] => vec![(0..n >> l).collect()],
            [ny, nx] => {
                let (h, w) = (ny >> l, nx >> l);
                let mut lanes: Vec<Vec<usize>> =
                    (0..h).map(|r| (0..w).map(|c| r * nx + c).collect()).collect();
                lanes.extend((0..w).map(|c| (0..h).map(|r| r * nx + c).collect()));
                lanes
            }
            _ => unreachable!("plans are 1D or 2D"),
        }
    }

    fn each_lane(&self, l: usize, mut f: impl FnMut(Vec<usize>)) {
        self.lanes(l).into_iter().for_each(&mut f);
    }

    fn each_lane_rev(&self, l: usize, mut f: impl FnMut(Vec<usize>)) {
        self.lanes(l).into_iter().rev().for_each(&mut f);
    }

    /// Detail subbands as coefficient index lists, finest level first.
    /// A 1D plan has one band per level, a 2D plan three.
    pub fn detail_bands(&self) -> Vec<(usize, Vec<usize>)> {
        let mut bands = Vec::new();
        for l in 1..=self.levels {
            match self.shape.as_slice() {
                [n] => bands.push((l, ((n >> l)..(n >> (l - 1))).collect())),
                [ny, nx] => {
                    let (h, w) = (ny >> l, nx >> l);
                    let block = |r0: usize, c0: usize| -> Vec<usize> {
                        (r0..r0 + h)
                            .flat_map(|r| (c0..c0 + w).map(move |c| r * nx + c))
                            .collect()
                    };
                    bands.push((l, block(0, w)));
                    bands.push((l, block(h, 0)));
                    bands.push((l, block(h, w)));
                }
                _ => unreachable!("plans are 1D or 2D"),
            }
        }
        bands
    }
}

fn haar_step(v: &mut [f64], idx: &[usize], tmp: &mut Vec<f64>) {
    let half = idx.len() / 2;
    tmp.clear();
    tmp.resize(idx.len(), 0.0);
    for k in 0..half {
        let (a, b) = (v[idx[2 * k]], v[idx[2 * k + 1]]);
        tmp[k] = (a + b) * std::f64::consts::FRAC_1_SQRT_2;
        tmp[half + k] = (a - b) * std::f64::consts::FRAC_1_SQRT_2;
    }
    for (k, &i) in idx.iter().enumerate() {
        v[i] = tmp[k];
    }
}

fn haar_unstep(v: &mut [f64], idx: &[usize], tmp: &mut Vec<f64>) {
    let half = idx.len() / 2;
    tmp.clear();
    tmp.resize(idx.len(), 0.0);
    for k in 0..half {
        let (s, d) = (v[idx[k]], v[idx[half + k]]);
        tmp[2 * k] = (s + d) * std::f64::consts::FRAC_1_SQRT_2;
        tmp[2 * k + 1] = (s - d) * std::f64::consts::FRAC_1_SQRT_2;
    }
    for (k, &i) in idx.iter().enumerate() {
        v[i] = tmp[k];
    }
}

pub fn haar_forward(plan: &WaveletPlan, x: &[f64]) -> Result<Vec<f64>> {
    plan.forward(x)
}

pub fn haar_inverse(plan: &WaveletPlan, c: &[f64]) -> Result<Vec<f64>> {
    plan.inverse(c)
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len().is_multiple_of(2) {
        0.5 * (v[m - 1] + v[m])
    } else {
        v[m]
    }
}

/// BayesShrink denoising in the Haar domain.
///
/// Noise level from the finest details, `σ = median|d|/0.6745`; each detail
/// subband is soft-thresholded at `σ²/σ_x` with
/// `σ_x = sqrt(max(mean(d²) − σ², 0))`, or at `max|d|` when `σ_x = 0`.
/// The approximation band is left alone.
pub fn bayes_shrink(noisy: &[f64], plan: &WaveletPlan) -> Result<Vec<f64>> {
    let mut c = plan.forward(noisy)?;
    let bands = plan.detail_bands();
    let finest: Vec<f64> = bands
        .iter()
        .filter(|(l, _)| *l == 1)
        .flat_map(|(_, idx)| idx.iter().map(|&i| c[i].abs()))
        .collect();
    let sigma = median(finest) / 0.6745;
    if sigma == 0.0 {
        return Ok(noisy.to_vec());
    }
    for (_, idx) in &bands {
        let var = idx.iter().map(|&i| c[i] * c[i]).sum::<f64>() / idx.len() as f64;
        let sx = (var - sigma * sigma).max(0.0).sqrt();
        let t = if sx > 0.0 {
            sigma * sigma / sx
        } else {
            idx.iter().fold(0.0f64, |m, &i| m.max(c[i].abs()))
        };
        for &i in idx {
            c[i] = c[i].signum() * (c[i].abs() - t).max(0.0);
        }
    }
    plan.inverse(&c)
}

/// Wiener deconvolution `conj(K)·S / (|K|² + noise_ratio)`, elementwise.
pub fn wiener_deconvolve(
    signal_spectrum: &[Complex64],
    kernel_spectrum: &[Complex64],
    noise_ratio: f64,
) -> Result<Vec<Complex64>> {
    check_len("Wiener kernel spectrum", signal_spectrum.len(), kernel_spectrum.len())?;
    if !(noise_ratio > 0.0) {
        return Err(Error::param("Wiener noise ratio must be positive"));
    }
    if kernel_spectrum.iter().all(|k| k.norm_sqr() == 0.0) {
        return Err(Error::value("Wiener kernel spectrum is identically zero"));
    }
    Ok(signal_spectrum
        .iter()
        .zip(kernel_spectrum)
        .map(|(s, k)| k.conj() * s / (k.norm_sqr() + noise_ratio))
        .collect())
}

//! FMCW compressive depth mapping.
//!
//! A sawtooth chirp sweeps `Δν` in `T` seconds, so a target at depth `d`
//! beats against the local oscillator at `ν = Δν·(2d/c)/T`. Each Hadamard
//! row is split into its `+1` and `−1` pixel sets, one per detector. Each
//! detector's spectrum is simulated, cleaned and differenced. The bucket
//! sums `y_I = Σ amp` and `y_Iν = Σ amp·ν` are then two linear measurements
//! of the amplitude image and of the amplitude-weighted beat-frequency
//! image, and their ratio gives depth.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex64;
use rand_distr::{Distribution as _, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::rng;
use crate::sensing::{BlockDiagonalSensor, HadamardSensing, PermutedSelector, SelectorDoc};
use crate::solvers::{admm_tv_video, cg_least_squares, LinearOperatorHandle, SolverConfig};
use crate::transforms::{bayes_shrink, fft_nd, fft_real, wiener_deconvolve, GradientOperator, WaveletPlan};

/// Speed of light used by the ranging model, rounded to 3e8 m/s.
pub const SPEED_OF_LIGHT: f64 = 3.0e8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChirpConfig {
    /// Start optical frequency (Hz).
    pub nu0: f64,
    /// End optical frequency (Hz).
    pub nu_f: f64,
    /// Sweep period (s).
    pub period: f64,
    /// Detector sample rate (Hz).
    pub sample_rate: f64,
    /// Deepest representable target (m).
    pub max_depth: f64,
}

impl Default for ChirpConfig {
    /// Desk scale: 100 GHz over 1 ms at 1550 nm, 1024 positive bins of 1 kHz.
    fn default() -> Self {
        Self {
            nu0: 193.4e12,
            nu_f: 193.4e12 + 100e9,
            period: 1e-3,
            sample_rate: 2.048e6,
            max_depth: 1.5,
        }
    }
}

impl ChirpConfig {
    pub fn delta_nu(&self) -> f64 {
        self.nu_f - self.nu0
    }

    /// Samples per sweep.
    pub fn samples(&self) -> usize {
        (self.sample_rate * self.period).round() as usize
    }

    /// Positive-frequency bins kept, `N = samples/2`.
    pub fn bins(&self) -> usize {
        self.samples() / 2
    }

    /// DFT bin width `1/T` (Hz).
    pub fn bin_width(&self) -> f64 {
        1.0 / self.period
    }

    /// Depth spanned by one frequency bin (m).
    pub fn depth_resolution(&self) -> f64 {
        self.bin_width() * self.period * SPEED_OF_LIGHT / (2.0 * self.delta_nu())
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta_nu() > 0.0) {
            return Err(Error::param("chirp must sweep upward (ν_f > ν₀)"));
        }
        if !(self.period > 0.0 && self.sample_rate > 0.0 && self.max_depth > 0.0) {
            return Err(Error::param("period, sample rate and max depth must be positive"));
        }
        if self.bins() < 2 {
            return Err(Error::param("sweep yields fewer than two frequency bins"));
        }
        let deepest = self.delta_nu() * 2.0 * self.max_depth / (SPEED_OF_LIGHT * self.period);
        if self.sample_rate < 2.0 * deepest * (1.0 - 1e-12) {
            return Err(Error::param(format!(
                "sample rate {} Hz is below Nyquist {} Hz for max depth {} m",
                self.sample_rate,
                2.0 * deepest,
                self.max_depth
            )));
        }
        Ok(())
    }

    /// Frequency of bin `k` (Hz).
    pub fn bin_frequency(&self, k: usize) -> f64 {
        k as f64 * self.bin_width()
    }
}

/// Beat frequency `Δν·(2d/c)/T` of a target at depth `d`.
pub fn beat_frequency(cfg: &ChirpConfig, depth: f64) -> Result<f64> {
    if !(0.0..=cfg.max_depth).contains(&depth) {
        return Err(Error::param(format!("depth {depth} m outside [0, {}]", cfg.max_depth)));
    }
    Ok(cfg.delta_nu() * (2.0 * depth / SPEED_OF_LIGHT) / cfg.period)
}

/// Depth `νTc/(2Δν)` of a beat frequency.
pub fn depth_of(cfg: &ChirpConfig, nu: f64) -> Result<f64> {
    if !(nu >= 0.0 && nu.is_finite()) {
        return Err(Error::param(format!("beat frequency {nu} must be non-negative")));
    }
    Ok(depth_scale(cfg) * nu)
}

/// `Tc/(2Δν)`, metres per hertz of beat frequency.
fn depth_scale(cfg: &ChirpConfig) -> f64 {
    cfg.period * SPEED_OF_LIGHT / (2.0 * cfg.delta_nu())
}

/// Pixel grid of Lambertian targets, row-major (`y` slowest).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub nx: usize,
    pub ny: usize,
    /// Metres, 0 for empty pixels.
    pub depth: Vec<f64>,
    pub reflectivity: Vec<f64>,
    /// Relative illumination per pixel.
    pub illumination: Vec<f64>,
    /// Local-oscillator field amplitude.
    pub lo_amplitude: f64,
}

impl Scene {
    pub fn new(nx: usize, ny: usize, depth: Vec<f64>, reflectivity: Vec<f64>) -> Result<Self> {
        let s = Self {
            nx,
            ny,
            illumination: vec![1.0; nx * ny],
            depth,
            reflectivity,
            lo_amplitude: 1.0,
        };
        s.check_shape()?;
        Ok(s)
    }

    fn check_shape(&self) -> Result<()> {
        let n = self.nx * self.ny;
        if n == 0 {
            return Err(Error::param("scene must have at least one pixel"));
        }
        check_len("scene depth plane", n, self.depth.len())?;
        check_len("scene reflectivity plane", n, self.reflectivity.len())?;
        check_len("scene illumination plane", n, self.illumination.len())
    }

    pub fn validate(&self, cfg: &ChirpConfig) -> Result<()> {
        self.check_shape()?;
        if let Some(d) = self.depth.iter().find(|d| !(0.0..=cfg.max_depth).contains(*d)) {
            return Err(Error::param(format!("scene depth {d} outside [0, {}]", cfg.max_depth)));
        }
        if self
            .reflectivity
            .iter()
            .chain(&self.illumination)
            .any(|v| !(*v >= 0.0 && v.is_finite()))
        {
            return Err(Error::param("reflectivity and illumination must be non-negative"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Mixed-signal amplitude `A_LO·A_j·illum_j`, zero on empty pixels.
    pub fn amplitudes(&self) -> Vec<f64> {
        (0..self.len())
            .map(|p| {
                if self.depth[p] > 0.0 {
                    self.lo_amplitude * self.reflectivity[p] * self.illumination[p]
                } else {
                    0.0
                }
            })
            .collect()
    }

    pub fn object_mask(&self) -> Vec<bool> {
        self.amplitudes().iter().map(|a| *a > 0.0).collect()
    }

    /// One plane filling the frame.
    pub fn plane(nx: usize, ny: usize, depth: f64) -> Result<Self> {
        Self::new(nx, ny, vec![depth; nx * ny], vec![1.0; nx * ny])
    }

    /// Two separated rectangles at 30% and 60% of the frequency range,
    /// both on bin centres, with reflectivities 1.0 and 0.7.
    pub fn two_planes(nx: usize, ny: usize, cfg: &ChirpConfig) -> Result<Self> {
        let bins = cfg.bins();
        let near = depth_of(cfg, cfg.bin_frequency(bins * 3 / 10))?;
        let far = depth_of(cfg, cfg.bin_frequency(bins * 6 / 10))?;
        let mut depth = vec![0.0; nx * ny];
        let mut refl = vec![0.0; nx * ny];
        let rect = |x0: f64, x1: f64, y0: f64, y1: f64| {
            let xs = (x0 * nx as f64) as usize..(x1 * nx as f64) as usize;
            let ys = (y0 * ny as f64) as usize..(y1 * ny as f64) as usize;
            ys.flat_map(move |y| xs.clone().map(move |x| y * nx + x))
        };
        for p in rect(0.12, 0.45, 0.15, 0.8) {
            depth[p] = near;
            refl[p] = 1.0;
        }
        for p in rect(0.55, 0.9, 0.3, 0.7) {
            depth[p] = far;
            refl[p] = 0.7;
        }
        Self::new(nx, ny, depth, refl)
    }

    /// Three objects at off-bin depths (25%, 45% and 70% of the range,
    /// offset 0.37 and 0.61 bins for the far two), dimming with distance:
    /// a near box, a mid plane and a far disc.
    pub fn desk(nx: usize, ny: usize, cfg: &ChirpConfig) -> Result<Self> {
        let bins = cfg.bins() as f64;
        let at = |frac: f64, offset: f64| depth_of(cfg, (bins * frac).floor() * cfg.bin_width() + offset * cfg.bin_width());
        let objects = [(at(0.25, 0.0)?, 1.0), (at(0.45, 0.37)?, 0.55), (at(0.7, 0.61)?, 0.3)];
        let mut depth = vec![0.0; nx * ny];
        let mut refl = vec![0.0; nx * ny];
        for y in 0..ny {
            for x in 0..nx {
                let (u, v) = ((x as f64 + 0.5) / nx as f64, (y as f64 + 0.5) / ny as f64);
                let hit = if (0.1..0.4).contains(&u) && (0.1..0.5).contains(&v) {
                    Some(0)
                } else if (0.5..0.88).contains(&u) && (0.12..0.45).contains(&v) {
                    Some(1)
                } else if (u - 0.55).powi(2) + (v - 0.75).powi(2) < 0.16f64.powi(2) {
                    Some(2)
                } else {
                    None
                };
                if let Some(i) = hit {
                    depth[y * nx + x] = objects[i].0;
                    refl[y * nx + x] = objects[i].1;
                }
            }
        }
        Self::new(nx, ny, depth, refl)
    }

    /// Named scenes available to the command line.
    pub fn builtin(name: &str, nx: usize, ny: usize, cfg: &ChirpConfig) -> Result<Self> {
        match name {
            "two-planes" => Self::two_planes(nx, ny, cfg),
            "desk" => Self::desk(nx, ny, cfg),
            "plane" => Self::plane(nx, ny, depth_of(cfg, cfg.bin_frequency(cfg.bins() / 2))?),
            other => Err(Error::param(format!(
                "unknown scene '{other}' (expected desk, two-planes or plane)"
            ))),
        }
    }
}

/// Detector noise and cleaning parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseParams {
    /// Beat-note linewidth FWHM (Hz); 0 disables broadening. The default
    /// spans about 12% of the desk-scale band.
    pub linewidth_fwhm: f64,
    /// SNR of the brightest single pixel's broadened beat note; `None` is
    /// noiseless.
    pub psnr: Option<f64>,
    pub wiener_ratio: f64,
    /// Snap beat frequencies to bin centres (no spectral leakage).
    pub on_bin: bool,
    /// Cleaned bins with magnitude at or below this many estimated noise
    /// deviations are zeroed; 0 disables the gate.
    pub floor_sigmas: f64,
    /// Analysis window applied before the DFT.
    pub window: Window,
}

/// Detector analysis window. Hann trades a four-bin main lobe for side
/// lobes falling as `1/k³`, which keeps off-bin tones from leaking across
/// the band.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Window {
    Rectangular,
    Hann,
}

impl Default for NoiseParams {
    fn default() -> Self {
        Self {
            linewidth_fwhm: 120e3,
            psnr: None,
            wiener_ratio: 1e-3,
            on_bin: false,
            floor_sigmas: 4.0,
            window: Window::Hann,
        }
    }
}

impl NoiseParams {
    /// No noise, no broadening, no window: the exact linear model.
    pub fn noiseless() -> Self {
        Self {
            linewidth_fwhm: 0.0,
            window: Window::Rectangular,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.linewidth_fwhm >= 0.0 && self.linewidth_fwhm.is_finite()) {
            return Err(Error::param("linewidth must be non-negative"));
        }
        if let Some(p) = self.psnr {
            if !(p > 0.0) {
                return Err(Error::param(format!("PSNR must be positive, got {p}")));
            }
        }
        if !(self.wiener_ratio > 0.0) {
            return Err(Error::param("Wiener ratio must be positive"));
        }
        if !(self.floor_sigmas >= 0.0 && self.floor_sigmas.is_finite()) {
            return Err(Error::param("noise floor gate must be non-negative"));
        }
        Ok(())
    }
}

/// Unit-area circular Lorentzian over `bins` frequency bins; a delta when
/// the linewidth is zero.
pub fn lorentzian_kernel(bins: usize, fwhm_bins: f64) -> Vec<f64> {
    let mut k = vec![0.0; bins];
    if fwhm_bins <= 0.0 {
        k[0] = 1.0;
        return k;
    }
    let g = fwhm_bins / 2.0;
    for (i, v) in k.iter_mut().enumerate() {
        let d = i.min(bins - i) as f64;
        *v = g / PI / (d * d + g * g);
    }
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

fn circular_convolve(x: &[f64], kernel_spectrum: &[Complex64]) -> Vec<f64> {
    let mut c = fft_real(x);
    c.iter_mut().zip(kernel_spectrum).for_each(|(a, k)| *a *= k);
    let n = c.len();
    fft_nd(&mut c, &[n], true).expect("1D FFT");
    c.into_iter().map(|v| v.re).collect()
}

/// Half-sample symmetric extension to `2N`, so line tails fold back at
/// both band edges instead of wrapping across the band.
fn mirror(x: &[f64]) -> Vec<f64> {
    x.iter().chain(x.iter().rev()).copied().collect()
}

/// Spectrum of the Lorentzian line shape on the mirrored `2N` grid.
fn line_shape_spectrum(bins: usize, cfg: &ChirpConfig, fwhm: f64) -> Vec<Complex64> {
    fft_real(&lorentzian_kernel(2 * bins, fwhm / cfg.bin_width()))
}

/// Convolves a positive-frequency spectrum with the line shape.
pub fn broaden(spectrum: &[f64], cfg: &ChirpConfig, fwhm: f64) -> Vec<f64> {
    let n = spectrum.len();
    if fwhm <= 0.0 {
        return spectrum.to_vec();
    }
    let mut out = circular_convolve(&mirror(spectrum), &line_shape_spectrum(n, cfg, fwhm));
    out.truncate(n);
    out
}

/// Time series of one detector: a sinusoid per distinct depth with
/// amplitude summed over the selected pixels at that depth.
pub fn heterodyne_signal(scene: &Scene, cfg: &ChirpConfig, weights: &[f64], on_bin: bool) -> Result<Vec<f64>> {
    check_len("projection weights", scene.len(), weights.len())?;
    let amps = scene.amplitudes();
    let mut tones: BTreeMap<u64, (f64, f64, f64)> = BTreeMap::new();
    for p in 0..scene.len() {
        let a = amps[p] * weights[p];
        if a == 0.0 {
            continue;
        }
        let mut nu = beat_frequency(cfg, scene.depth[p])?;
        if on_bin {
            nu = (nu / cfg.bin_width()).round() * cfg.bin_width();
        }
        let tau = 2.0 * depth_of(cfg, nu)? / SPEED_OF_LIGHT;
        let phase = (cfg.nu0 * tau).fract() - (cfg.delta_nu() / (2.0 * cfg.period) * tau * tau).fract();
        tones.entry(nu.to_bits()).or_insert((nu, 2.0 * PI * phase, 0.0)).2 += a;
    }
    let (m, fs) = (cfg.samples(), cfg.sample_rate);
    let mut s = vec![0.0; m];
    for (nu, phi, a) in tones.values() {
        let w = 2.0 * PI * nu / fs;
        for (t, v) in s.iter_mut().enumerate() {
            *v += a * (w * t as f64 + phi).sin();
        }
    }
    Ok(s)
}

/// Single-sided amplitude spectrum `2|X_k|/M` for the first `N` bins.
pub fn amplitude_spectrum(signal: &[f64], bins: usize) -> Vec<f64> {
    windowed_amplitude_spectrum(signal, bins, Window::Rectangular)
}

/// Amplitude spectrum `2|X_k|/Σw` of the windowed signal, so an on-bin
/// sinusoid of amplitude `a` reads `a` at its bin either way.
pub fn windowed_amplitude_spectrum(signal: &[f64], bins: usize, window: Window) -> Vec<f64> {
    let m = signal.len();
    let (x, sum) = match window {
        Window::Rectangular => (signal.to_vec(), m as f64),
        Window::Hann => {
            let w: Vec<f64> = (0..m).map(|t| 0.5 - 0.5 * (2.0 * PI * t as f64 / m as f64).cos()).collect();
            let sum = w.iter().sum();
            (signal.iter().zip(&w).map(|(s, w)| s * w).collect(), sum)
        }
    };
    let scale = 2.0 / sum;
    fft_real(&x).iter().take(bins).map(|c| c.norm() * scale).collect()
}

/// White-noise deviation for a scene: the brightest pixel's broadened
/// beat-note amplitude divided by the PSNR. Zero when noiseless or empty.
pub fn noise_deviation(scene: &Scene, cfg: &ChirpConfig, noise: &NoiseParams) -> f64 {
    let Some(psnr) = noise.psnr else { return 0.0 };
    let brightest = scene.amplitudes().into_iter().fold(0.0f64, f64::max);
    let peak = lorentzian_kernel(2 * cfg.bins(), noise.linewidth_fwhm / cfg.bin_width())[0];
    brightest * peak / psnr
}

/// Raw spectrum of one detector: synthesize, DFT, broaden, add noise of
/// deviation `sigma`.
pub fn detector_spectrum(
    scene: &Scene,
    cfg: &ChirpConfig,
    weights: &[f64],
    noise: &NoiseParams,
    sigma: f64,
    rng: &mut rng::Rng,
) -> Result<Vec<f64>> {
    let bins = cfg.bins();
    let clean = windowed_amplitude_spectrum(&heterodyne_signal(scene, cfg, weights, noise.on_bin)?, bins, noise.window);
    let mut spec = broaden(&clean, cfg, noise.linewidth_fwhm);
    if sigma > 0.0 {
        let dist = Normal::new(0.0, sigma).map_err(|e| Error::param(e.to_string()))?;
        spec.iter_mut().for_each(|v| *v += dist.sample(rng));
    }
    Ok(spec)
}

/// Raw `(+1, −1)` detector spectra for one ±1 pattern.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionSpectra {
    pub plus: Vec<f64>,
    pub minus: Vec<f64>,
}

pub fn simulate_projection(
    scene: &Scene,
    cfg: &ChirpConfig,
    pattern: &[f64],
    noise: &NoiseParams,
    seed: u64,
) -> Result<ProjectionSpectra> {
    noise.validate()?;
    check_len("projection pattern", scene.len(), pattern.len())?;
    let plus_w: Vec<f64> = pattern.iter().map(|v| if *v > 0.0 { 1.0 } else { 0.0 }).collect();
    let minus_w: Vec<f64> = pattern.iter().map(|v| if *v < 0.0 { 1.0 } else { 0.0 }).collect();
    let sigma = noise_deviation(scene, cfg, noise);
    Ok(ProjectionSpectra {
        plus: detector_spectrum(scene, cfg, &plus_w, noise, sigma, &mut rng::stream(seed, 0))?,
        minus: detector_spectrum(scene, cfg, &minus_w, noise, sigma, &mut rng::stream(seed, 1))?,
    })
}

/// Robust white-noise deviation from second differences over disjoint
/// triples, `median|x₀ − 2x₁ + x₂|/(√6·0.6745)`. Bright line shapes have
/// steep slopes but little curvature, so first differences would mistake
/// them for noise.
pub fn noise_sigma(x: &[f64]) -> f64 {
    let mut d: Vec<f64> = x.chunks_exact(3).map(|w| (w[0] - 2.0 * w[1] + w[2]).abs()).collect();
    if d.is_empty() {
        return 0.0;
    }
    let mid = d.len() / 2;
    let (_, m, _) = d.select_nth_unstable_by(mid, f64::total_cmp);
    *m / (6f64.sqrt() * 0.6745)
}

/// BayesShrink, Wiener deconvolution of the Lorentzian line shape, then
/// the noise-floor gate.
///
/// Bucket sums only see the wavelet approximation band, which BayesShrink
/// leaves alone, so without the gate every bin's noise reaches `y_I`.
/// The gate is the raw noise estimate times the Wiener filter's white-noise
/// gain `sqrt(mean |K|²/(|K|² + r)²)`.
pub fn clean_spectrum(raw: &[f64], cfg: &ChirpConfig, noise: &NoiseParams) -> Result<Vec<f64>> {
    let n = raw.len();
    let plan = WaveletPlan::new_1d(n, WaveletPlan::max_levels(&[n]))?;
    let mut out = bayes_shrink(raw, &plan)?;
    let mut gain = 1.0;
    if noise.linewidth_fwhm > 0.0 {
        let k = line_shape_spectrum(n, cfg, noise.linewidth_fwhm);
        let mut d = wiener_deconvolve(&fft_real(&mirror(&out)), &k, noise.wiener_ratio)?;
        fft_nd(&mut d, &[2 * n], true)?;
        out = d.into_iter().take(n).map(|v| v.re).collect();
        let r = noise.wiener_ratio;
        let g2: f64 = k.iter().map(|k| k.norm_sqr() / (k.norm_sqr() + r).powi(2)).sum();
        gain = (g2 / k.len() as f64).sqrt();
    }
    if noise.floor_sigmas > 0.0 {
        let floor = noise.floor_sigmas * gain * noise_sigma(raw);
        out.iter_mut().filter(|v| v.abs() <= floor).for_each(|v| *v = 0.0);
    }
    Ok(out)
}

/// Bucket sums of a compressive acquisition.
#[derive(Debug, Clone, PartialEq)]
pub struct LidarMeasurement {
    pub nx: usize,
    pub ny: usize,
    /// `Σ amp` per row.
    pub y_i: Vec<f64>,
    /// `Σ amp·ν` per row, ν in Hz.
    pub y_inu: Vec<f64>,
    pub selector: PermutedSelector,
    pub noise: NoiseParams,
    pub bins: usize,
    pub bin_width: f64,
}

/// Serializable form of [`LidarMeasurement`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LidarMeasurementDoc {
    pub nx: usize,
    pub ny: usize,
    pub bins: usize,
    pub bin_width_hz: f64,
    pub noise: NoiseParams,
    pub selector: SelectorDoc,
    pub y_i: Vec<f64>,
    pub y_inu: Vec<f64>,
}

impl LidarMeasurement {
    pub fn to_doc(&self) -> LidarMeasurementDoc {
        LidarMeasurementDoc {
            nx: self.nx,
            ny: self.ny,
            bins: self.bins,
            bin_width_hz: self.bin_width,
            noise: self.noise,
            selector: self.selector.to_doc(),
            y_i: self.y_i.clone(),
            y_inu: self.y_inu.clone(),
        }
    }

    pub fn from_doc(doc: &LidarMeasurementDoc) -> Result<Self> {
        let selector = PermutedSelector::from_doc(&doc.selector)?;
        check_len("measurement pixels", selector.n(), doc.nx * doc.ny)?;
        check_len("y_I length", selector.m(), doc.y_i.len())?;
        check_len("y_Iν length", selector.m(), doc.y_inu.len())?;
        Ok(Self {
            nx: doc.nx,
            ny: doc.ny,
            y_i: doc.y_i.clone(),
            y_inu: doc.y_inu.clone(),
            selector,
            noise: doc.noise,
            bins: doc.bins,
            bin_width: doc.bin_width_hz,
        })
    }
}

/// Runs every row of `sel` through both detectors. Rows are independent
/// (seed per row) and run in parallel.
pub fn acquire(
    scene: &Scene,
    cfg: &ChirpConfig,
    sel: &PermutedSelector,
    noise: &NoiseParams,
    seed: u64,
) -> Result<LidarMeasurement> {
    cfg.validate()?;
    scene.validate(cfg)?;
    noise.validate()?;
    check_len("selector width vs scene pixels", scene.len(), sel.n())?;
    let freqs: Vec<f64> = (0..cfg.bins()).map(|k| cfg.bin_frequency(k)).collect();
    let rows: Vec<(f64, f64)> = (0..sel.m())
        .into_par_iter()
        .map(|k| {
            let spectra = simulate_projection(scene, cfg, &sel.pattern(k)?, noise, rng::child_seed(seed, k as u64))?;
            let plus = clean_spectrum(&spectra.plus, cfg, noise)?;
            let minus = clean_spectrum(&spectra.minus, cfg, noise)?;
            let (mut yi, mut yn) = (0.0, 0.0);
            for ((p, q), f) in plus.iter().zip(&minus).zip(&freqs) {
                yi += p - q;
                yn += (p - q) * f;
            }
            Ok((yi, yn))
        })
        .collect::<Result<_>>()?;
    let (y_i, y_inu) = rows.into_iter().unzip();
    Ok(LidarMeasurement {
        nx: scene.nx,
        ny: scene.ny,
        y_i,
        y_inu,
        selector: sel.clone(),
        noise: *noise,
        bins: cfg.bins(),
        bin_width: cfg.bin_width(),
    })
}

/// Estimated depths with a validity mask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthMap {
    pub nx: usize,
    pub ny: usize,
    /// Metres; 0 where invalid.
    pub depth: Vec<f64>,
    pub valid: Vec<bool>,
}

impl DepthMap {
    /// Mean squared depth error over all pixels, empty = depth 0.
    pub fn mse(&self, truth: &Scene) -> Result<f64> {
        check_len("depth map vs scene", truth.len(), self.depth.len())?;
        let mask = truth.object_mask();
        let se: f64 = (0..self.depth.len())
            .map(|p| {
                let t = if mask[p] { truth.depth[p] } else { 0.0 };
                let e = if self.valid[p] { self.depth[p] } else { 0.0 };
                (e - t).powi(2)
            })
            .sum();
        Ok(se / self.depth.len() as f64)
    }

    /// Fraction of object pixels estimated within `tol` metres.
    pub fn fraction_within(&self, truth: &Scene, tol: f64) -> Result<f64> {
        check_len("depth map vs scene", truth.len(), self.depth.len())?;
        let mask = truth.object_mask();
        let objects = mask.iter().filter(|m| **m).count();
        if objects == 0 {
            return Err(Error::Degenerate("scene has no object pixels".into()));
        }
        let hits = (0..self.depth.len())
            .filter(|&p| mask[p] && self.valid[p] && (self.depth[p] - truth.depth[p]).abs() <= tol)
            .count();
        Ok(hits as f64 / objects as f64)
    }
}

/// Settings for [`reconstruct_depth`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReconstructionConfig {
    /// TV stage; `weight` is per pixel and multiplied by the pixel count.
    pub tv: SolverConfig,
    /// How the TV image is hard-thresholded into the object mask.
    pub mask: MaskRule,
    /// Retained Haar support as a fraction of `m`.
    pub support_fraction: f64,
    pub cg_tol: f64,
    pub cg_max_iters: usize,
    /// Pixels need `x̂_I` above this fraction of its maximum.
    pub min_amplitude_fraction: f64,
    /// 4×4 mean filter over valid depths.
    pub smooth: bool,
}

impl Default for ReconstructionConfig {
    fn default() -> Self {
        Self {
            tv: SolverConfig {
                weight: 4e-3,
                max_iters: 400,
                tol: 1e-4,
                ..SolverConfig::default()
            },
            mask: MaskRule::Fraction(0.15),
            support_fraction: 1.0 / 3.0,
            cg_tol: 1e-10,
            cg_max_iters: 500,
            min_amplitude_fraction: 0.1,
            smooth: false,
        }
    }
}

/// Hard-threshold rule for the object mask.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MaskRule {
    /// Otsu on the TV image itself. With several reflectivities it tends to
    /// split between objects rather than at the background.
    Otsu,
    /// Otsu on `ln max(v, 10⁻³·max)`. Separates background from objects
    /// spanning a decade of brightness, but low-ratio TV ripple can win.
    LogOtsu,
    /// This fraction of the TV image maximum.
    Fraction(f64),
    /// Fixed level on the normalized TV image.
    Absolute(f64),
}

impl MaskRule {
    /// Threshold for `image`; pixels strictly above it form the mask.
    pub fn threshold(&self, image: &[f64]) -> f64 {
        let max = image.iter().fold(f64::NEG_INFINITY, |a, v| a.max(*v));
        match *self {
            MaskRule::Otsu => otsu_threshold(image),
            MaskRule::LogOtsu => {
                if !(max > 0.0) {
                    return otsu_threshold(image);
                }
                let floor = 1e-3 * max;
                let logs: Vec<f64> = image.iter().map(|v| v.max(floor).ln()).collect();
                otsu_threshold(&logs).exp()
            }
            MaskRule::Fraction(f) => f * max,
            MaskRule::Absolute(t) => t,
        }
    }
}

/// Otsu's threshold over a 256-bin histogram.
pub fn otsu_threshold(values: &[f64]) -> f64 {
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
    if !(hi > lo) {
        return lo;
    }
    const BINS: usize = 256;
    let width = (hi - lo) / BINS as f64;
    let mut hist = [0usize; BINS];
    for v in values {
        hist[(((v - lo) / width) as usize).min(BINS - 1)] += 1;
    }
    let total = values.len() as f64;
    let sum_all: f64 = hist.iter().enumerate().map(|(i, c)| i as f64 * *c as f64).sum();
    let (mut w0, mut sum0, mut best, mut best_i) = (0.0, 0.0, -1.0, 0);
    for (i, c) in hist.iter().enumerate() {
        w0 += *c as f64;
        sum0 += i as f64 * *c as f64;
        let w1 = total - w0;
        if w0 == 0.0 || w1 == 0.0 {
            continue;
        }
        let between = w0 * w1 * (sum0 / w0 - (sum_all - sum0) / w1).powi(2);
        if between > best {
            best = between;
            best_i = i;
        }
    }
    lo + (best_i + 1) as f64 * width
}

/// Indices of the `k` largest-magnitude nonzero entries, ties to the
/// lower index.
fn top_k(c: &[f64], k: usize) -> Vec<usize> {
    let eps = 1e-12 * c.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let mut idx: Vec<usize> = (0..c.len()).filter(|&i| c[i].abs() > eps).collect();
    idx.sort_by(|&a, &b| c[b].abs().total_cmp(&c[a].abs()).then(a.cmp(&b)));
    idx.truncate(k);
    idx.sort_unstable();
    idx
}

/// TV image, Otsu mask, Haar support of the mask, then least squares for
/// both images on that support and their ratio as depth.
pub fn reconstruct_depth(meas: &LidarMeasurement, cfg: &ChirpConfig, rc: &ReconstructionConfig) -> Result<DepthMap> {
    let sel = &meas.selector;
    let (nx, ny, n, m) = (meas.nx, meas.ny, sel.n(), sel.m());
    check_len("measurement pixels", n, nx * ny)?;
    check_len("y_I length", m, meas.y_i.len())?;
    check_len("y_Iν length", m, meas.y_inu.len())?;
    if !(rc.support_fraction > 0.0 && rc.support_fraction <= 1.0) {
        return Err(Error::param("support fraction must lie in (0, 1]"));
    }

    let scale = meas.y_i.iter().fold(0.0f64, |a, v| a.max(v.abs())) / n as f64;
    if scale == 0.0 {
        return Err(Error::Degenerate("all y_I measurements are zero".into()));
    }
    let yn: Vec<f64> = meas.y_i.iter().map(|v| v / scale).collect();
    let sensor = BlockDiagonalSensor::new(vec![sel.clone()])?;
    let grad = GradientOperator::new(nx, ny, 1)?;
    let tv_cfg = SolverConfig {
        weight: rc.tv.weight * n as f64,
        ..rc.tv.clone()
    };
    let tv = admm_tv_video(&sensor, &yn, &grad, &tv_cfg)?;
    log::debug!("TV stage: {} iterations, converged {}", tv.iterations, tv.converged);

    let t = rc.mask.threshold(&tv.x);
    let mask: Vec<f64> = tv.x.iter().map(|v| if *v > t { 1.0 } else { 0.0 }).collect();
    let on = mask.iter().filter(|v| **v > 0.0).count();
    if on == 0 {
        let (lo, hi) = tv.x.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
        return Err(Error::Degenerate(format!(
            "empty mask: threshold {t:.4e} over TV image range [{lo:.4e}, {hi:.4e}]"
        )));
    }

    let plan = WaveletPlan::new_2d(ny, nx, WaveletPlan::max_levels(&[ny, nx]))?;
    let k = ((rc.support_fraction * m as f64).round() as usize).clamp(1, n);
    let support = top_k(&plan.forward(&mask)?, k);
    let op = restricted_operator(sel, &plan, support.clone())?;
    let solve = |y: &[f64]| -> Result<Vec<f64>> {
        let out = cg_least_squares(&op, y, rc.cg_tol, rc.cg_max_iters)?;
        let mut c = vec![0.0; n];
        support.iter().zip(&out.x).for_each(|(&i, v)| c[i] = *v);
        plan.inverse(&c)
    };
    let x_i = solve(&meas.y_i)?;
    let x_inu = solve(&meas.y_inu)?;

    let floor = rc.min_amplitude_fraction * x_i.iter().fold(0.0f64, |a, v| a.max(*v));
    let ds = depth_scale(cfg);
    let mut valid = vec![false; n];
    let mut depth = vec![0.0; n];
    for p in 0..n {
        if mask[p] > 0.0 && x_i[p] > floor {
            valid[p] = true;
            depth[p] = (ds * x_inu[p] / x_i[p]).clamp(0.0, cfg.max_depth);
        }
    }
    if rc.smooth {
        depth = box_smooth(&depth, &valid, nx, ny);
    }
    Ok(DepthMap { nx, ny, depth, valid })
}

fn restricted_operator(sel: &PermutedSelector, plan: &WaveletPlan, support: Vec<usize>) -> Result<LinearOperatorHandle> {
    let n = sel.n();
    let (s1, p1, sup1) = (sel.clone(), plan.clone(), support.clone());
    let (s2, p2, sup2) = (sel.clone(), plan.clone(), support.clone());
    LinearOperatorHandle::new(
        sel.m(),
        support.len(),
        move |c: &[f64]| {
            let mut full = vec![0.0; n];
            sup1.iter().zip(c).for_each(|(&i, v)| full[i] = *v);
            let x = p1.inverse(&full).expect("support image");
            s1.apply(&x).expect("selector width")
        },
        move |y: &[f64]| {
            let x = s2.apply_adjoint(y).expect("selector height");
            let c = p2.forward(&x).expect("support image");
            sup2.iter().map(|&i| c[i]).collect()
        },
    )
}

/// 4×4 mean over valid neighbours (window offsets −1..=2).
fn box_smooth(depth: &[f64], valid: &[bool], nx: usize, ny: usize) -> Vec<f64> {
    let mut out = depth.to_vec();
    for y in 0..ny {
        for x in 0..nx {
            if !valid[y * nx + x] {
                continue;
            }
            let (mut s, mut c) = (0.0, 0usize);
            for yy in y.saturating_sub(1)..(y + 3).min(ny) {
                for xx in x.saturating_sub(1)..(x + 3).min(nx) {
                    if valid[yy * nx + xx] {
                        s += depth[yy * nx + xx];
                        c += 1;
                    }
                }
            }
            out[y * nx + x] = s / c as f64;
        }
    }
    out
}

/// One cell of an MSE sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub psnr: Option<f64>,
    pub ratio: f64,
    pub trial: usize,
    pub mse: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub psnr: Option<f64>,
    pub ratio: f64,
    pub mean: f64,
    pub stderr: f64,
}

/// Sweep axes. The linewidth and Wiener settings come from `noise`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub psnrs: Vec<Option<f64>>,
    pub ratios: Vec<f64>,
    pub trials: usize,
    pub noise: NoiseParams,
    pub reconstruction: ReconstructionConfig,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            psnrs: vec![Some(5.0), Some(10.0), None],
            ratios: vec![0.1, 0.2, 0.5, 1.0],
            trials: 3,
            noise: NoiseParams::default(),
            reconstruction: ReconstructionConfig::default(),
        }
    }
}

/// Depth-map MSE for every (psnr, ratio, trial). Trial `t` uses the same
/// selector seed at every PSNR, so noise level is the only difference
/// between PSNR cells of one trial.
pub fn sweep_mse(scene: &Scene, cfg: &ChirpConfig, sweep: &SweepConfig, seed: u64) -> Result<Vec<SweepRow>> {
    if sweep.ratios.iter().any(|r| !(*r > 0.0 && *r <= 1.0)) {
        return Err(Error::param("ratios must lie in (0, 1]"));
    }
    if sweep.trials == 0 {
        return Err(Error::param("trials must be at least 1"));
    }
    let n = scene.len();
    let mut cells = Vec::new();
    for &psnr in &sweep.psnrs {
        for &ratio in &sweep.ratios {
            for trial in 0..sweep.trials {
                cells.push((psnr, ratio, trial));
            }
        }
    }
    cells
        .into_par_iter()
        .map(|(psnr, ratio, trial)| {
            let m = ((ratio * n as f64).round() as usize).max(1);
            let t = trial as u64;
            let sel = PermutedSelector::random(n, m, rng::child_seed(seed, 2 * t), false)?.with_dc_row();
            let noise = NoiseParams { psnr, ..sweep.noise };
            let meas = acquire(scene, cfg, &sel, &noise, rng::child_seed(seed, 2 * t + 1))?;
            let map = reconstruct_depth(&meas, cfg, &sweep.reconstruction)?;
            Ok(SweepRow {
                psnr,
                ratio,
                trial,
                mse: map.mse(scene)?,
            })
        })
        .collect()
}

/// Mean and standard error per (psnr, ratio), in first-seen order.
pub fn summarize(rows: &[SweepRow]) -> Vec<SweepSummary> {
    let mut keys: Vec<(Option<f64>, f64)> = Vec::new();
    for r in rows {
        if !keys.contains(&(r.psnr, r.ratio)) {
            keys.push((r.psnr, r.ratio));
        }
    }
    keys.into_iter()
        .map(|(psnr, ratio)| {
            let v: Vec<f64> = rows
                .iter()
                .filter(|r| r.psnr == psnr && r.ratio == ratio)
                .map(|r| r.mse)
                .collect();
            let k = v.len() as f64;
            let mean = v.iter().sum::<f64>() / k;
            let var = if v.len() > 1 {
                v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (k - 1.0)
            } else {
                0.0
            };
            SweepSummary {
                psnr,
                ratio,
                mean,
                stderr: (var / k).sqrt(),
            }
        })
        .collect()
}

/// CSV with header `psnr,ratio,trial,mse`; infinite PSNR is written `inf`.
pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], mut w: W) -> Result<()> {
    writeln!(w, "psnr,ratio,trial,mse")?;
    for r in rows {
        let psnr = r.psnr.map_or_else(|| "inf".to_string(), |p| p.to_string());
        writeln!(w, "{psnr},{},{},{:e}", r.ratio, r.trial, r.mse)?;
    }
    Ok(())
}

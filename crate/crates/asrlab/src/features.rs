//! Acoustic front-end: log-mel filterbank features, per-corpus feature
//! normalization, an optional binary feature cache, and the waveform
//! augmenters (noise, pitch, far-field) that are kept behind flags and
//! default to off.

use std::f64::consts::PI;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use ndarray::Array2;
use rand::Rng;
use rustfft::{num_complex::Complex, Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::audio::Waveform;
use crate::seed;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("invalid feature config: {0}")]
    InvalidConfig(String),
    #[error("waveform too short: {samples} samples, one frame needs {frame_len}")]
    WaveformTooShort { samples: usize, frame_len: usize },
    #[error("zero-power input: SNR undefined")]
    ZeroPowerInput,
    #[error("invalid augmenter parameter: {0}")]
    InvalidParameter(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: not a feature cache file")]
    BadCacheFile { path: PathBuf },
}

/// Log-mel extraction parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub n_mels: usize,
    pub frame_length_ms: f64,
    pub frame_shift_ms: f64,
    pub fft_size: usize,
    pub fmin_hz: f64,
    pub fmax_hz: f64,
    pub log_floor: f64,
    pub preemphasis: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            n_mels: 40,
            frame_length_ms: 25.0,
            frame_shift_ms: 10.0,
            fft_size: 512,
            fmin_hz: 20.0,
            fmax_hz: 7600.0,
            log_floor: 1e-10,
            preemphasis: 0.97,
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self, sample_rate: u32) -> Result<(), FeatureError> {
        if self.n_mels < 1 {
            return Err(FeatureError::InvalidConfig("n_mels must be >= 1".into()));
        }
        if self.frame_shift_ms > self.frame_length_ms {
            return Err(FeatureError::InvalidConfig(format!(
                "frame shift {} ms exceeds frame length {} ms",
                self.frame_shift_ms, self.frame_length_ms
            )));
        }
        if self.fmax_hz > sample_rate as f64 / 2.0 {
            return Err(FeatureError::InvalidConfig(format!(
                "fmax {} Hz above Nyquist {}",
                self.fmax_hz,
                sample_rate as f64 / 2.0
            )));
        }
        if self.fmin_hz < 0.0 || self.fmin_hz >= self.fmax_hz {
            return Err(FeatureError::InvalidConfig("need 0 <= fmin < fmax".into()));
        }
        let frame_len = self.frame_len_samples(sample_rate);
        if frame_len > self.fft_size {
            return Err(FeatureError::InvalidConfig(format!(
                "frame of {frame_len} samples exceeds fft size {}",
                self.fft_size
            )));
        }
        if !(self.log_floor > 0.0) {
            return Err(FeatureError::InvalidConfig("log_floor must be positive".into()));
        }
        Ok(())
    }

    pub fn frame_len_samples(&self, sample_rate: u32) -> usize {
        (self.frame_length_ms * sample_rate as f64 / 1000.0).round() as usize
    }

    pub fn frame_shift_samples(&self, sample_rate: u32) -> usize {
        (self.frame_shift_ms * sample_rate as f64 / 1000.0).round() as usize
    }

    /// Stable hash of the config, used to key cache files and checkpoints.
    pub fn hash(&self) -> u64 {
        let canonical = format!(
            "{};{};{};{};{};{};{};{}",
            self.n_mels,
            self.frame_length_ms,
            self.frame_shift_ms,
            self.fft_size,
            self.fmin_hz,
            self.fmax_hz,
            self.log_floor,
            self.preemphasis
        );
        let mut hasher = Sha256::new();
        hasher.update(canonical.as_bytes());
        let digest = hasher.finalize();
        u64::from_le_bytes(digest[..8].try_into().unwrap())
    }
}

/// A frames-by-mels matrix of log filterbank energies.
#[derive(Debug, Clone, PartialEq)]
pub struct Features {
    pub matrix: Array2<f64>,
    pub frame_shift_ms: f64,
}

impl Features {
    pub fn frames(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn n_mels(&self) -> usize {
        self.matrix.ncols()
    }
}

fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10_f64.powf(mel / 2595.0) - 1.0)
}

/// Precomputed window, FFT plan, and filterbank for one (config, rate) pair.
pub struct FeatureExtractor {
    cfg: FeatureConfig,
    sample_rate: u32,
    frame_len: usize,
    frame_shift: usize,
    window: Vec<f64>,
    /// n_mels rows of (start_bin, weights)
    filters: Vec<(usize, Vec<f64>)>,
    fft: Arc<dyn Fft<f64>>,
}

impl FeatureExtractor {
    pub fn new(cfg: FeatureConfig, sample_rate: u32) -> Result<Self, FeatureError> {
        cfg.validate(sample_rate)?;
        let frame_len = cfg.frame_len_samples(sample_rate);
        let frame_shift = cfg.frame_shift_samples(sample_rate);
        let window: Vec<f64> =
            (0..frame_len).map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / frame_len as f64).cos()).collect();

        let n_bins = cfg.fft_size / 2 + 1;
        let bin_hz = sample_rate as f64 / cfg.fft_size as f64;
        let mel_lo = hz_to_mel(cfg.fmin_hz);
        let mel_hi = hz_to_mel(cfg.fmax_hz);
        let edges: Vec<f64> = (0..cfg.n_mels + 2)
            .map(|i| mel_to_hz(mel_lo + (mel_hi - mel_lo) * i as f64 / (cfg.n_mels + 1) as f64))
            .collect();
        let mut filters = Vec::with_capacity(cfg.n_mels);
        for m in 0..cfg.n_mels {
            let (lo, mid, hi) = (edges[m], edges[m + 1], edges[m + 2]);
            let mut start = None;
            let mut weights = Vec::new();
            for k in 0..n_bins {
                let f = k as f64 * bin_hz;
                let w = if f <= lo || f >= hi {
                    0.0
                } else if f <= mid {
                    (f - lo) / (mid - lo)
                } else {
                    (hi - f) / (hi - mid)
                };
                if w > 0.0 {
                    if start.is_none() {
                        start = Some(k);
                    }
                    weights.push(w);
                } else if start.is_some() {
                    break;
                }
            }
            filters.push((start.unwrap_or(0), weights));
        }

        let fft = FftPlanner::new().plan_fft_forward(cfg.fft_size);
        Ok(Self { cfg, sample_rate, frame_len, frame_shift, window, filters, fft })
    }

    pub fn config(&self) -> &FeatureConfig {
        &self.cfg
    }

    pub fn frame_count(&self, samples: usize) -> Option<usize> {
        if samples < self.frame_len {
            None
        } else {
            Some((samples - self.frame_len) / self.frame_shift + 1)
        }
    }

    /// Log-mel features: pre-emphasis, Hann window, magnitude spectrum,
    /// mel filterbank, `ln(x + log_floor)`.
    pub fn logmel(&self, wav: &Waveform) -> Result<Features, FeatureError> {
        debug_assert_eq!(wav.sample_rate, self.sample_rate);
        let n = wav.samples.len();
        let frames = self.frame_count(n).ok_or(FeatureError::WaveformTooShort {
            samples: n,
            frame_len: self.frame_len,
        })?;

        let mut emphasized = Vec::with_capacity(n);
        emphasized.push(wav.samples[0] as f64);
        for i in 1..n {
            emphasized.push(wav.samples[i] as f64 - self.cfg.preemphasis * wav.samples[i - 1] as f64);
        }

        let mut out = Array2::<f64>::zeros((frames, self.cfg.n_mels));
        let mut buf = vec![Complex::new(0.0, 0.0); self.cfg.fft_size];
        let n_bins = self.cfg.fft_size / 2 + 1;
        let mut power = vec![0.0f64; n_bins];
        for t in 0..frames {
            let start = t * self.frame_shift;
            for i in 0..self.cfg.fft_size {
                let v = if i < self.frame_len { emphasized[start + i] * self.window[i] } else { 0.0 };
                buf[i] = Complex::new(v, 0.0);
            }
            self.fft.process(&mut buf);
            for (k, p) in power.iter_mut().enumerate() {
                *p = buf[k].norm_sqr();
            }
            for (m, (bin0, weights)) in self.filters.iter().enumerate() {
                let mut energy = 0.0;
                for (off, &w) in weights.iter().enumerate() {
                    energy += w * power[bin0 + off];
                }
                out[[t, m]] = (energy + self.cfg.log_floor).ln();
            }
        }
        Ok(Features { matrix: out, frame_shift_ms: self.cfg.frame_shift_ms })
    }
}

/// Convenience one-shot extraction.
pub fn logmel(wav: &Waveform, cfg: &FeatureConfig) -> Result<Features, FeatureError> {
    FeatureExtractor::new(cfg.clone(), wav.sample_rate)?.logmel(wav)
}

/// Per-mel-bin mean/std normalization, fit on the training subset only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureNormalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl FeatureNormalizer {
    pub fn identity(n_mels: usize) -> Self {
        Self { mean: vec![0.0; n_mels], std: vec![1.0; n_mels] }
    }

    /// Two-pass mean/variance over all frames of the given feature matrices,
    /// accumulated in index order.
    pub fn fit<'a>(features: impl Iterator<Item = &'a Features> + Clone) -> Self {
        let mut n = 0usize;
        let mut n_mels = 0usize;
        let mut sum: Vec<f64> = Vec::new();
        for f in features.clone() {
            if sum.is_empty() {
                n_mels = f.n_mels();
                sum = vec![0.0; n_mels];
            }
            for row in f.matrix.rows() {
                for (m, &v) in row.iter().enumerate() {
                    sum[m] += v;
                }
            }
            n += f.frames();
        }
        if n == 0 {
            return Self::identity(n_mels.max(1));
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / n as f64).collect();
        let mut sq = vec![0.0; n_mels];
        for f in features {
            for row in f.matrix.rows() {
                for (m, &v) in row.iter().enumerate() {
                    let d = v - mean[m];
                    sq[m] += d * d;
                }
            }
        }
        let std: Vec<f64> =
            sq.iter().map(|s| (s / n as f64).sqrt().max(1e-8)).collect();
        Self { mean, std }
    }

    pub fn apply(&self, features: &mut Features) {
        for mut row in features.matrix.rows_mut() {
            for (m, v) in row.iter_mut().enumerate() {
                *v = (*v - self.mean[m]) / self.std[m];
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Binary feature cache
// ---------------------------------------------------------------------------
//
// Layout (all little-endian): magic "ALFC", u32 version, u64 config hash,
// u32 frames, u32 mels, f64 frame_shift_ms, then frames*mels f32 values in
// row-major order.

const CACHE_MAGIC: &[u8; 4] = b"ALFC";
const CACHE_VERSION: u32 = 1;

pub fn cache_path(dir: &Path, utt_id: &str, cfg: &FeatureConfig) -> PathBuf {
    dir.join(format!("{utt_id}.{:016x}.feat", cfg.hash()))
}

pub fn write_cache(path: &Path, cfg: &FeatureConfig, f: &Features) -> Result<(), FeatureError> {
    let io = |source| FeatureError::Io { path: path.to_path_buf(), source };
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io)?;
    }
    let mut buf = Vec::with_capacity(32 + f.matrix.len() * 4);
    buf.extend_from_slice(CACHE_MAGIC);
    buf.extend_from_slice(&CACHE_VERSION.to_le_bytes());
    buf.extend_from_slice(&cfg.hash().to_le_bytes());
    buf.extend_from_slice(&(f.frames() as u32).to_le_bytes());
    buf.extend_from_slice(&(f.n_mels() as u32).to_le_bytes());
    buf.extend_from_slice(&f.frame_shift_ms.to_le_bytes());
    for &v in f.matrix.iter() {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
    fs::write(path, buf).map_err(io)
}

pub fn read_cache(path: &Path, cfg: &FeatureConfig) -> Result<Features, FeatureError> {
    let io = |source| FeatureError::Io { path: path.to_path_buf(), source };
    let bad = || FeatureError::BadCacheFile { path: path.to_path_buf() };
    let mut bytes = Vec::new();
    fs::File::open(path).map_err(io)?.read_to_end(&mut bytes).map_err(io)?;
    if bytes.len() < 32 || &bytes[0..4] != CACHE_MAGIC {
        return Err(bad());
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    let hash = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    if version != CACHE_VERSION || hash != cfg.hash() {
        return Err(bad());
    }
    let frames = u32::from_le_bytes(bytes[16..20].try_into().unwrap()) as usize;
    let mels = u32::from_le_bytes(bytes[20..24].try_into().unwrap()) as usize;
    let frame_shift_ms = f64::from_le_bytes(bytes[24..32].try_into().unwrap());
    let expected = 32 + frames * mels * 4;
    if bytes.len() != expected {
        return Err(bad());
    }
    let mut values = Vec::with_capacity(frames * mels);
    for chunk in bytes[32..].chunks_exact(4) {
        values.push(f32::from_le_bytes(chunk.try_into().unwrap()) as f64);
    }
    let matrix = Array2::from_shape_vec((frames, mels), values).map_err(|_| bad())?;
    Ok(Features { matrix, frame_shift_ms })
}

// ---------------------------------------------------------------------------
// Augmenters (kept for completeness; off by default in every protocol)
// ---------------------------------------------------------------------------

/// Mix seeded white noise at the requested SNR measured against signal power.
pub fn add_noise(wav: &Waveform, snr_db: f64, seed_value: u64) -> Result<Waveform, FeatureError> {
    if !snr_db.is_finite() {
        return Err(FeatureError::InvalidParameter(format!("snr_db = {snr_db}")));
    }
    let signal_power = wav.power();
    if signal_power <= 0.0 {
        return Err(FeatureError::ZeroPowerInput);
    }
    let noise_power = signal_power / 10f64.powf(snr_db / 10.0);
    // uniform white noise over [-1, 1): variance 1/3
    let scale = (3.0 * noise_power).sqrt();
    let mut rng = seed::rng(seed_value, "features.noise", 0);
    let mut out = wav.clone();
    for s in &mut out.samples {
        let n: f64 = rng.random_range(-1.0..1.0);
        *s = (*s as f64 + scale * n) as f32;
    }
    out.clamp_in_place();
    Ok(out)
}

/// Granular pitch shift: within each 46 ms Hann grain the source is read at
/// rate `2^(semitones/12)`, grains are overlap-added at their original
/// positions, and the result is divided by the window sum. Duration is
/// preserved exactly; a zero shift reproduces the input (up to edge samples
/// where the window sum vanishes).
pub fn pitch_shift(wav: &Waveform, semitones: f64) -> Result<Waveform, FeatureError> {
    if !semitones.is_finite() {
        return Err(FeatureError::InvalidParameter(format!("semitones = {semitones}")));
    }
    let n = wav.samples.len();
    if n == 0 {
        return Ok(wav.clone());
    }
    let ratio = 2f64.powf(semitones / 12.0);
    let grain = ((0.046 * wav.sample_rate as f64) as usize).max(4) & !1; // even
    let hop = grain / 2;
    let window: Vec<f64> =
        (0..grain).map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / grain as f64).cos()).collect();

    let sample_at = |pos: f64| -> f64 {
        if pos < 0.0 {
            return 0.0;
        }
        let i = pos.floor() as usize;
        if i + 1 < n {
            let frac = pos - i as f64;
            wav.samples[i] as f64 * (1.0 - frac) + wav.samples[i + 1] as f64 * frac
        } else if i < n {
            wav.samples[i] as f64
        } else {
            0.0
        }
    };

    let mut acc = vec![0.0f64; n];
    let mut wsum = vec![0.0f64; n];
    let n_grains = n.div_ceil(hop);
    for g in 0..n_grains {
        let anchor = g * hop;
        for i in 0..grain {
            let out_idx = anchor + i;
            if out_idx >= n {
                break;
            }
            let src = anchor as f64 + i as f64 * ratio;
            acc[out_idx] += window[i] * sample_at(src);
            wsum[out_idx] += window[i];
        }
    }
    let samples: Vec<f32> = acc
        .iter()
        .zip(&wsum)
        .map(|(&a, &w)| if w > 1e-9 { (a / w).clamp(-1.0, 1.0) as f32 } else { 0.0 })
        .collect();
    Ok(Waveform { samples, sample_rate: wav.sample_rate })
}

/// Convolve with a synthetic exponentially decaying impulse response
/// (direct path plus seeded noise tail reaching -60 dB at `rt60_s`).
pub fn far_field(wav: &Waveform, rt60_s: f64, seed_value: u64) -> Result<Waveform, FeatureError> {
    if !(rt60_s >= 0.0) {
        return Err(FeatureError::InvalidParameter(format!("rt60_s = {rt60_s}")));
    }
    let n = wav.samples.len();
    if rt60_s == 0.0 || n == 0 {
        return Ok(wav.clone());
    }
    let sr = wav.sample_rate as f64;
    let ir_len = ((rt60_s * sr) as usize).clamp(2, n.max(2));
    let decay = -(1000f64.ln()) / (rt60_s * sr); // -60 dB at rt60
    let mut rng = seed::rng(seed_value, "features.farfield", 0);
    let mut ir = Vec::with_capacity(ir_len);
    ir.push(1.0f64);
    for i in 1..ir_len {
        let v: f64 = rng.random_range(-1.0..1.0);
        ir.push(0.4 * v * (decay * i as f64).exp());
    }

    let conv_len = (n + ir_len - 1).next_power_of_two();
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(conv_len);
    let inv = planner.plan_fft_inverse(conv_len);
    let mut a: Vec<Complex<f64>> = (0..conv_len)
        .map(|i| Complex::new(if i < n { wav.samples[i] as f64 } else { 0.0 }, 0.0))
        .collect();
    let mut b: Vec<Complex<f64>> = (0..conv_len)
        .map(|i| Complex::new(if i < ir_len { ir[i] } else { 0.0 }, 0.0))
        .collect();
    fwd.process(&mut a);
    fwd.process(&mut b);
    for (x, y) in a.iter_mut().zip(&b) {
        *x *= *y;
    }
    inv.process(&mut a);
    let scale = 1.0 / conv_len as f64;
    let samples: Vec<f32> =
        a[..n].iter().map(|c| (c.re * scale).clamp(-1.0, 1.0) as f32).collect();
    Ok(Waveform { samples, sample_rate: wav.sample_rate })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine(freq: f64, duration_s: f64, sr: u32, amp: f64) -> Waveform {
        let n = (duration_s * sr as f64) as usize;
        let samples: Vec<f32> =
            (0..n).map(|i| (amp * (2.0 * PI * freq * i as f64 / sr as f64).sin()) as f32).collect();
        Waveform::new(samples, sr)
    }

    #[test]
    fn silence_maps_to_log_floor() {
        let cfg = FeatureConfig::default();
        let wav = Waveform::new(vec![0.0; 16_000], 16_000);
        let f = logmel(&wav, &cfg).unwrap();
        let expected = cfg.log_floor.ln();
        for &v in f.matrix.iter() {
            assert!((v - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn frame_count_formula() {
        // 16000 samples, 25 ms frame (400), 10 ms shift (160):
        // (16000 - 400) / 160 + 1 = 98
        let cfg = FeatureConfig::default();
        let ex = FeatureExtractor::new(cfg, 16_000).unwrap();
        assert_eq!(ex.frame_count(16_000), Some(98));
        let wav = sine(300.0, 1.0, 16_000, 0.5);
        assert_eq!(ex.logmel(&wav).unwrap().frames(), 98);
    }

    #[test]
    fn pure_tone_concentrates_in_one_mel_bin() {
        let cfg = FeatureConfig::default();
        let ex = FeatureExtractor::new(cfg.clone(), 16_000).unwrap();
        let wav = sine(440.0, 0.5, 16_000, 0.5);
        let f = ex.logmel(&wav).unwrap();

        // independent expectation: the filter whose peak frequency is
        // nearest 440 Hz on the mel scale
        let mel_lo = hz_to_mel(cfg.fmin_hz);
        let mel_hi = hz_to_mel(cfg.fmax_hz);
        let centers: Vec<f64> = (1..=cfg.n_mels)
            .map(|i| mel_to_hz(mel_lo + (mel_hi - mel_lo) * i as f64 / (cfg.n_mels + 1) as f64))
            .collect();
        let expected_bin = centers
            .iter()
            .enumerate()
            .min_by(|a, b| {
                (a.1 - 440.0).abs().partial_cmp(&(b.1 - 440.0).abs()).unwrap()
            })
            .unwrap()
            .0;

        let mut argmaxes = Vec::new();
        for row in f.matrix.rows() {
            let argmax = row
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0;
            argmaxes.push(argmax);
        }
        assert!(argmaxes.iter().all(|&a| a == argmaxes[0]), "argmax not constant");
        let diff = (argmaxes[0] as isize - expected_bin as isize).abs();
        assert!(diff <= 1, "tone bin {} vs expected {expected_bin}", argmaxes[0]);
    }

    #[test]
    fn too_short_waveform_is_error() {
        let cfg = FeatureConfig::default();
        let wav = Waveform::new(vec![0.1; 100], 16_000);
        assert!(matches!(logmel(&wav, &cfg), Err(FeatureError::WaveformTooShort { .. })));
    }

    #[test]
    fn noise_at_zero_db_doubles_power() {
        let wav = sine(200.0, 1.0, 16_000, 0.5);
        let before = wav.power();
        let noisy = add_noise(&wav, 0.0, 42).unwrap();
        let after = noisy.power();
        assert!((after / before - 2.0).abs() < 0.05, "power ratio {}", after / before);
        assert_eq!(noisy.samples.len(), wav.samples.len());
    }

    #[test]
    fn noise_rejects_silence() {
        let wav = Waveform::new(vec![0.0; 1000], 16_000);
        assert!(matches!(add_noise(&wav, 10.0, 1), Err(FeatureError::ZeroPowerInput)));
    }

    #[test]
    fn zero_pitch_shift_is_identity_within_tolerance() {
        let wav = sine(250.0, 0.3, 16_000, 0.4);
        let shifted = pitch_shift(&wav, 0.0).unwrap();
        assert_eq!(shifted.samples.len(), wav.samples.len());
        let hop = ((0.046 * 16_000.0) as usize & !1) / 2;
        let mut max_err = 0.0f32;
        for i in hop..wav.samples.len().saturating_sub(hop) {
            max_err = max_err.max((shifted.samples[i] - wav.samples[i]).abs());
        }
        assert!(max_err < 1e-5, "interior max err {max_err}");
    }

    #[test]
    fn pitch_shift_preserves_duration() {
        let wav = sine(250.0, 0.5, 16_000, 0.4);
        for semi in [-2.0, 2.0, 5.0] {
            let shifted = pitch_shift(&wav, semi).unwrap();
            assert_eq!(shifted.samples.len(), wav.samples.len());
        }
    }

    #[test]
    fn pitch_shift_moves_spectral_peak() {
        let sr = 16_000;
        let wav = sine(400.0, 0.5, sr, 0.4);
        let up = pitch_shift(&wav, 12.0).unwrap();
        let peak = |w: &Waveform| -> usize {
            let size = 4096;
            let mut planner = FftPlanner::new();
            let fft = planner.plan_fft_forward(size);
            let mut buf: Vec<Complex<f64>> = (0..size)
                .map(|i| Complex::new(*w.samples.get(i + 2000).unwrap_or(&0.0) as f64, 0.0))
                .collect();
            fft.process(&mut buf);
            (1..size / 2)
                .max_by(|&a, &b| buf[a].norm_sqr().partial_cmp(&buf[b].norm_sqr()).unwrap())
                .unwrap()
        };
        let before = peak(&wav);
        let after = peak(&up);
        let ratio = after as f64 / before as f64;
        assert!((ratio - 2.0).abs() < 0.15, "octave shift ratio {ratio}");
    }

    #[test]
    fn far_field_preserves_rate_and_length() {
        let wav = sine(300.0, 0.4, 16_000, 0.4);
        let out = far_field(&wav, 0.3, 9).unwrap();
        assert_eq!(out.samples.len(), wav.samples.len());
        assert_eq!(out.sample_rate, wav.sample_rate);
        assert!(out.peak() <= 1.0);
        let identity = far_field(&wav, 0.0, 9).unwrap();
        assert_eq!(identity.samples, wav.samples);
    }

    #[test]
    fn normalizer_zeroes_mean_and_unit_variance() {
        let cfg = FeatureConfig::default();
        let wav = sine(700.0, 1.0, 16_000, 0.5);
        let feats = vec![logmel(&wav, &cfg).unwrap()];
        let norm = FeatureNormalizer::fit(feats.iter());
        let mut f = feats[0].clone();
        norm.apply(&mut f);
        let n = f.frames() as f64;
        for m in 0..f.n_mels() {
            // near-constant columns hit the std floor, which amplifies
            // rounding in the mean; stay comfortably above that
            let mean: f64 = f.matrix.column(m).sum() / n;
            assert!(mean.abs() < 1e-5, "bin {m} mean {mean}");
        }
    }

    #[test]
    fn cache_round_trip() {
        let cfg = FeatureConfig::default();
        let wav = sine(500.0, 0.2, 16_000, 0.5);
        let f = logmel(&wav, &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = cache_path(dir.path(), "u1", &cfg);
        write_cache(&path, &cfg, &f).unwrap();
        let back = read_cache(&path, &cfg).unwrap();
        assert_eq!(back.frames(), f.frames());
        assert_eq!(back.n_mels(), f.n_mels());
        for (a, b) in f.matrix.iter().zip(back.matrix.iter()) {
            assert!((a - b).abs() < 1e-6); // stored as f32
        }
        // wrong config hash is rejected
        let other = FeatureConfig { n_mels: 39, ..FeatureConfig::default() };
        assert!(matches!(read_cache(&path, &other), Err(FeatureError::BadCacheFile { .. })));
    }
}

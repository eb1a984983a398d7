use crate::dsp::PowerSpectrogram;
use crate::error::{invalid, Result};

use super::{FeatureKind, FeatureMatrix, Matrix};

pub const N_CHROMA: usize = 12;

/// Quantization thresholds for CENS; each one exceeded adds a quarter step.
pub const CENS_THRESHOLDS: [f32; 4] = [0.05, 0.1, 0.2, 0.4];

const MIN_CHROMA_HZ: f64 = 20.0;

/// Linear map from STFT bins to the 12 pitch classes (C = 0).
#[derive(Debug, Clone, PartialEq)]
pub struct ChromaMap {
    pub n_chroma: usize,
    pub n_bins: usize,
    pub tuning_hz: f64,
    /// Row-major `12 × n_bins`.
    pub weights: Vec<f64>,
}

impl ChromaMap {
    pub fn weight(&self, class: usize, bin: usize) -> f64 {
        self.weights[class * self.n_bins + bin]
    }

    /// Pitch class receiving the largest weight from `bin`, if any.
    pub fn dominant_class(&self, bin: usize) -> Option<usize> {
        let mut best = None;
        let mut best_w = 0.0;
        for p in 0..self.n_chroma {
            let w = self.weight(p, bin);
            if w > best_w {
                best_w = w;
                best = Some(p);
            }
        }
        best
    }
}

/// Continuous pitch class of a frequency, C = 0, in `[0, 12)`.
pub fn pitch_class(freq_hz: f64, tuning_hz: f64) -> f64 {
    (12.0 * (freq_hz / tuning_hz).log2() + 9.0).rem_euclid(12.0)
}

/// Each bin spreads over the pitch classes with a Gaussian of one semitone
/// standard deviation around its (circular) pitch class; bins under 20 Hz
/// get no weight.
pub fn build_chroma_map(sample_rate: f64, n_fft: usize, tuning_hz: f64) -> Result<ChromaMap> {
    if !(tuning_hz > 0.0) {
        return Err(invalid("tuning frequency must be positive"));
    }
    let n_bins = n_fft / 2 + 1;
    let mut weights = vec![0.0; N_CHROMA * n_bins];
    for k in 1..n_bins {
        let f = k as f64 * sample_rate / n_fft as f64;
        if f < MIN_CHROMA_HZ {
            continue;
        }
        let pc = pitch_class(f, tuning_hz);
        for p in 0..N_CHROMA {
            let d = (p as f64 - pc + 6.0).rem_euclid(12.0) - 6.0;
            weights[p * n_bins + k] = (-0.5 * d * d).exp();
        }
    }
    Ok(ChromaMap {
        n_chroma: N_CHROMA,
        n_bins,
        tuning_hz,
        weights,
    })
}

/// `C(m, p) = Σ_k W(p, k) P(m, k)` without normalization.
pub fn chroma_project(power: &PowerSpectrogram, map: &ChromaMap) -> Result<Matrix> {
    if power.bins != map.n_bins {
        return Err(invalid(format!(
            "power spectrogram has {} bins, chroma map expects {}",
            power.bins, map.n_bins
        )));
    }
    let mut out = Matrix::zeros(map.n_chroma, power.frames);
    for m in 0..power.frames {
        let frame = power.frame(m);
        for p in 0..map.n_chroma {
            let row = &map.weights[p * map.n_bins..(p + 1) * map.n_bins];
            let acc: f64 = row.iter().zip(frame).map(|(&w, &v)| w * v as f64).sum();
            out.set(p, m, acc as f32);
        }
    }
    Ok(out)
}

/// Scales each column so its maximum is 1; all-zero columns are left alone.
pub fn max_normalize_columns(m: &mut Matrix) {
    for c in 0..m.cols {
        let peak = (0..m.rows).map(|r| m.get(r, c)).fold(0.0f32, f32::max);
        if peak > 0.0 {
            for r in 0..m.rows {
                m.set(r, c, m.get(r, c) / peak);
            }
        }
    }
}

pub fn stft_chromagram(power: &PowerSpectrogram, map: &ChromaMap, frame_hop_seconds: f64) -> Result<FeatureMatrix> {
    let mut chroma = chroma_project(power, map)?;
    max_normalize_columns(&mut chroma);
    Ok(FeatureMatrix::from_matrix(FeatureKind::ChromaStft, chroma, frame_hop_seconds))
}

/// Sums CQT magnitudes over octaves. Bin 0 must sit on pitch class C;
/// `bins_per_octave` must be a multiple of 12.
pub fn cqt_chroma_raw(cqt_mags: &Matrix, bins_per_octave: usize) -> Result<Matrix> {
    if bins_per_octave == 0 || bins_per_octave % N_CHROMA != 0 {
        return Err(invalid(format!("bins_per_octave {bins_per_octave} is not a multiple of 12")));
    }
    let per_class = bins_per_octave / N_CHROMA;
    let mut out = Matrix::zeros(N_CHROMA, cqt_mags.cols);
    for k in 0..cqt_mags.rows {
        let p = (k / per_class) % N_CHROMA;
        for m in 0..cqt_mags.cols {
            let v = out.get(p, m) + cqt_mags.get(k, m);
            out.set(p, m, v);
        }
    }
    Ok(out)
}

pub fn cqt_chromagram(cqt_mags: &Matrix, bins_per_octave: usize, frame_hop_seconds: f64) -> Result<FeatureMatrix> {
    let mut chroma = cqt_chroma_raw(cqt_mags, bins_per_octave)?;
    max_normalize_columns(&mut chroma);
    Ok(FeatureMatrix::from_matrix(FeatureKind::ChromaCqt, chroma, frame_hop_seconds))
}

fn quantize(v: f32) -> f32 {
    CENS_THRESHOLDS.iter().filter(|&&t| v > t).count() as f32 * 0.25
}

/// L1 normalization, log-like quantization, then a per-row moving mean of
/// `window` frames (truncated at the edges).
pub fn cens_quantized(raw: &Matrix) -> Result<Matrix> {
    if let Some(bad) = raw.values.iter().find(|&&v| v < 0.0 || v.is_nan()) {
        return Err(invalid(format!("CENS input must be non-negative, found {bad}")));
    }
    let mut q = raw.clone();
    for c in 0..q.cols {
        let total: f64 = (0..q.rows).map(|r| q.get(r, c) as f64).sum();
        for r in 0..q.rows {
            let normalized = if total > 0.0 { (q.get(r, c) as f64 / total) as f32 } else { 0.0 };
            q.set(r, c, quantize(normalized));
        }
    }
    Ok(q)
}

pub fn cens_chromagram(raw: &Matrix, window: usize, frame_hop_seconds: f64) -> Result<FeatureMatrix> {
    if window == 0 {
        return Err(invalid("CENS smoothing window must be positive"));
    }
    let q = cens_quantized(raw)?;
    let half = window / 2;
    let mut out = Matrix::zeros(q.rows, q.cols);
    for r in 0..q.rows {
        let row = q.row(r);
        // Prefix sums keep the moving mean linear in the frame count.
        let mut prefix = vec![0.0f64; row.len() + 1];
        for (i, &v) in row.iter().enumerate() {
            prefix[i + 1] = prefix[i] + v as f64;
        }
        for c in 0..q.cols {
            let lo = c.saturating_sub(half);
            let hi = (c + window - half).min(q.cols);
            let mean = (prefix[hi] - prefix[lo]) / (hi - lo) as f64;
            out.set(r, c, mean.clamp(0.0, 1.0) as f32);
        }
    }
    Ok(FeatureMatrix::from_matrix(FeatureKind::ChromaCens, out, frame_hop_seconds))
}

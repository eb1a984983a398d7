use std::f64::consts::PI;

use crate::audio::AudioClip;
use crate::error::{invalid, Result};

use super::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct CqtFilter {
    pub center_hz: f64,
    /// Time-domain basis `g_k(n)`, Hann-windowed complex exponential.
    pub re: Vec<f32>,
    pub im: Vec<f32>,
}

impl CqtFilter {
    pub fn len(&self) -> usize {
        self.re.len()
    }

    pub fn is_empty(&self) -> bool {
        self.re.is_empty()
    }
}

/// Constant-Q basis filters; bin `k` is centered on `fmin · 2^(k / bins_per_octave)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CqtKernel {
    pub n_bins: usize,
    pub bins_per_octave: usize,
    pub fmin: f64,
    pub sample_rate: f64,
    pub q: f64,
    pub filters: Vec<CqtFilter>,
}

impl CqtKernel {
    pub fn new(sample_rate: f64, fmin: f64, n_bins: usize, bins_per_octave: usize) -> Result<Self> {
        if !(fmin > 0.0) || n_bins == 0 || bins_per_octave == 0 {
            return Err(invalid("CQT needs positive fmin, bin count and bins per octave"));
        }
        let q = 1.0 / (2f64.powf(1.0 / bins_per_octave as f64) - 1.0);
        let top = fmin * 2f64.powf((n_bins - 1) as f64 / bins_per_octave as f64);
        if top >= sample_rate / 2.0 {
            return Err(invalid(format!("highest CQT bin {top:.1} Hz is above Nyquist")));
        }
        let filters = (0..n_bins)
            .map(|k| {
                let center_hz = fmin * 2f64.powf(k as f64 / bins_per_octave as f64);
                let len = (q * sample_rate / center_hz).ceil() as usize;
                let window: Vec<f64> = (0..len).map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / len as f64).cos()).collect();
                // Scaled so a unit-amplitude sinusoid at the center frequency reads 1.
                let norm = 2.0 / window.iter().sum::<f64>();
                let half = len as f64 / 2.0;
                let (re, im) = window
                    .iter()
                    .enumerate()
                    .map(|(n, w)| {
                        let phase = -2.0 * PI * center_hz * (n as f64 - half) / sample_rate;
                        ((norm * w * phase.cos()) as f32, (norm * w * phase.sin()) as f32)
                    })
                    .unzip();
                CqtFilter { center_hz, re, im }
            })
            .collect();
        Ok(Self {
            n_bins,
            bins_per_octave,
            fmin,
            sample_rate,
            q,
            filters,
        })
    }

    pub fn longest(&self) -> usize {
        self.filters.iter().map(CqtFilter::len).max().unwrap_or(0)
    }

    pub fn center_hz(&self, bin: usize) -> f64 {
        self.filters[bin].center_hz
    }
}

/// CQT magnitudes: rows are bins, columns frames centered on multiples of
/// `hop` (zero outside the clip).
pub fn cqt(clip: &AudioClip, kernel: &CqtKernel, hop: usize) -> Result<Matrix> {
    if hop == 0 {
        return Err(invalid("CQT hop must be positive"));
    }
    if (clip.sample_rate as f64 - kernel.sample_rate).abs() > 1e-9 {
        return Err(invalid("clip and CQT kernel sample rates differ"));
    }
    if clip.len() < kernel.longest() {
        return Err(invalid(format!(
            "clip of {} samples is shorter than the longest CQT kernel ({})",
            clip.len(),
            kernel.longest()
        )));
    }
    let x = &clip.samples;
    let frames = 1 + x.len() / hop;
    let mut out = Matrix::zeros(kernel.n_bins, frames);
    for (k, filter) in kernel.filters.iter().enumerate() {
        let len = filter.len() as i64;
        for m in 0..frames {
            let start = (m * hop) as i64 - len / 2;
            let lo = (-start).max(0) as usize;
            let hi = (x.len() as i64 - start).min(len).max(0) as usize;
            if lo >= hi {
                continue;
            }
            let base = (start + lo as i64) as usize;
            let seg = &x[base..base + (hi - lo)];
            let (mut acc_re, mut acc_im) = (0.0f64, 0.0f64);
            for ((&s, &gr), &gi) in seg.iter().zip(&filter.re[lo..hi]).zip(&filter.im[lo..hi]) {
                acc_re += (s * gr) as f64;
                acc_im += (s * gi) as f64;
            }
            out.set(k, m, acc_re.hypot(acc_im) as f32);
        }
    }
    Ok(out)
}

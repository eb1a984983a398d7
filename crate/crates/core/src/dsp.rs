//! Windows, FFT, STFT and the brute-force DFT oracle.

use std::f64::consts::PI;

use num_complex::{Complex32, Complex64};
use rustfft::FftPlanner;

use crate::audio::AudioClip;
use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowKind {
    Hann,
    Hamming,
    Rectangular,
}

/// Periodic (DFT-even) window of length `n`.
pub fn make_window(kind: WindowKind, n: usize) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(invalid("window length must be at least 1"));
    }
    let phase = |i: usize| 2.0 * PI * i as f64 / n as f64;
    Ok(match kind {
        WindowKind::Rectangular => vec![1.0; n],
        WindowKind::Hann => (0..n).map(|i| 0.5 - 0.5 * phase(i).cos()).collect(),
        WindowKind::Hamming => (0..n).map(|i| 0.54 - 0.46 * phase(i).cos()).collect(),
    })
}

/// Power-of-two FFT. The inverse is normalized by `1/N` so that
/// `fft(fft(x, false), true) == x`.
pub fn fft(signal: &[Complex64], inverse: bool) -> Result<Vec<Complex64>> {
    let n = signal.len();
    if n == 0 || !n.is_power_of_two() {
        return Err(invalid(format!("FFT length {n} is not a power of two")));
    }
    let mut planner = FftPlanner::<f64>::new();
    let plan = if inverse {
        planner.plan_fft_inverse(n)
    } else {
        planner.plan_fft_forward(n)
    };
    let mut buf = signal.to_vec();
    plan.process(&mut buf);
    if inverse {
        let scale = 1.0 / n as f64;
        buf.iter_mut().for_each(|c| *c *= scale);
    }
    Ok(buf)
}

/// O(N²) evaluation of the DFT kernel sum, any length. Test oracle only;
/// deliberately unoptimized.
pub fn naive_dft(signal: &[Complex64]) -> Vec<Complex64> {
    let n = signal.len();
    (0..n)
        .map(|k| {
            signal
                .iter()
                .enumerate()
                .map(|(t, &x)| {
                    let angle = -2.0 * PI * ((k * t) % n) as f64 / n as f64;
                    x * Complex64::new(angle.cos(), angle.sin())
                })
                .sum()
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct StftConfig {
    pub n_fft: usize,
    pub hop: usize,
    pub window: WindowKind,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self {
            n_fft: 2048,
            hop: 512,
            window: WindowKind::Hann,
        }
    }
}

impl StftConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.n_fft.is_power_of_two() {
            return Err(invalid(format!("n_fft {} is not a power of two", self.n_fft)));
        }
        if self.hop == 0 || self.hop > self.n_fft {
            return Err(invalid(format!("hop {} must be in 1..={}", self.hop, self.n_fft)));
        }
        Ok(())
    }

    pub fn bins(&self) -> usize {
        self.n_fft / 2 + 1
    }

    /// Frames produced for a signal of `len` samples under center padding.
    pub fn frame_count(&self, len: usize) -> usize {
        1 + len / self.hop
    }
}

/// STFT values, frame-major: `values[m * bins + k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrogram {
    pub frames: usize,
    pub bins: usize,
    pub values: Vec<Complex32>,
}

impl ComplexSpectrogram {
    pub fn frame(&self, m: usize) -> &[Complex32] {
        &self.values[m * self.bins..(m + 1) * self.bins]
    }
}

/// Squared magnitudes, frame-major like [`ComplexSpectrogram`].
#[derive(Debug, Clone, PartialEq)]
pub struct PowerSpectrogram {
    pub frames: usize,
    pub bins: usize,
    pub values: Vec<f32>,
}

impl PowerSpectrogram {
    pub fn frame(&self, m: usize) -> &[f32] {
        &self.values[m * self.bins..(m + 1) * self.bins]
    }

    pub fn get(&self, m: usize, k: usize) -> f32 {
        self.values[m * self.bins + k]
    }
}

/// Reflect-pads `x` by `pad` samples on both sides (edge sample not repeated).
pub(crate) fn reflect_pad(x: &[f32], pad: usize) -> Vec<f32> {
    let len = x.len();
    debug_assert!(len > pad);
    let mut out = Vec::with_capacity(len + 2 * pad);
    out.extend((1..=pad).rev().map(|i| x[i]));
    out.extend_from_slice(x);
    out.extend((0..pad).map(|i| x[len - 2 - i]));
    out
}

/// Short-time Fourier transform with center reflect padding of `n_fft/2`.
pub fn stft(clip: &AudioClip, cfg: &StftConfig) -> Result<ComplexSpectrogram> {
    cfg.validate()?;
    if clip.len() < cfg.n_fft {
        return Err(invalid(format!(
            "clip of {} samples is shorter than n_fft {}",
            clip.len(),
            cfg.n_fft
        )));
    }
    let window = make_window(cfg.window, cfg.n_fft)?;
    let padded = reflect_pad(&clip.samples, cfg.n_fft / 2);
    let frames = cfg.frame_count(clip.len());
    let bins = cfg.bins();

    let plan = FftPlanner::<f64>::new().plan_fft_forward(cfg.n_fft);
    let mut buf = vec![Complex64::default(); cfg.n_fft];
    let mut scratch = vec![Complex64::default(); plan.get_inplace_scratch_len()];
    let mut values = Vec::with_capacity(frames * bins);
    for m in 0..frames {
        let start = m * cfg.hop;
        for (i, c) in buf.iter_mut().enumerate() {
            *c = Complex64::new(padded[start + i] as f64 * window[i], 0.0);
        }
        plan.process_with_scratch(&mut buf, &mut scratch);
        values.extend(buf[..bins].iter().map(|c| Complex32::new(c.re as f32, c.im as f32)));
    }
    Ok(ComplexSpectrogram { frames, bins, values })
}

pub fn power_spectrogram(spec: &ComplexSpectrogram) -> PowerSpectrogram {
    PowerSpectrogram {
        frames: spec.frames,
        bins: spec.bins,
        values: spec.values.iter().map(|c| c.re * c.re + c.im * c.im).collect(),
    }
}

/// Convenience: STFT followed by squared magnitude.
pub fn power_stft(clip: &AudioClip, cfg: &StftConfig) -> Result<PowerSpectrogram> {
    stft(clip, cfg).map(|s| power_spectrogram(&s))
}

pub fn relative_l2(actual: &[Complex64], expected: &[Complex64]) -> f64 {
    let num: f64 = actual.iter().zip(expected).map(|(a, e)| (a - e).norm_sqr()).sum();
    let den: f64 = expected.iter().map(|e| e.norm_sqr()).sum();
    if den == 0.0 {
        num.sqrt()
    } else {
        (num / den).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;
    use approx::assert_abs_diff_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_complex(rng: &mut SplitMix64, n: usize) -> Vec<Complex64> {
        (0..n).map(|_| c(rng.next_f64() * 2.0 - 1.0, rng.next_f64() * 2.0 - 1.0)).collect()
    }

    #[test]
    fn window_definitions() {
        assert_eq!(make_window(WindowKind::Rectangular, 4).unwrap(), vec![1.0; 4]);
        let hann = make_window(WindowKind::Hann, 4).unwrap();
        for (a, e) in hann.iter().zip([0.0, 0.5, 1.0, 0.5]) {
            assert_abs_diff_eq!(*a, e, epsilon = 1e-15);
        }
        let sum: f64 = make_window(WindowKind::Hann, 2048).unwrap().iter().sum();
        assert!((sum / 1024.0 - 1.0).abs() < 1e-9);
        let hamming = make_window(WindowKind::Hamming, 4).unwrap();
        assert_abs_diff_eq!(hamming[0], 0.08, epsilon = 1e-12);
        assert_abs_diff_eq!(hamming[2], 1.0, epsilon = 1e-12);
        assert!(make_window(WindowKind::Hann, 0).is_err());
    }

    #[test]
    fn fft_small_cases() {
        let impulse = fft(&[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)], false).unwrap();
        for v in impulse {
            assert_abs_diff_eq!((v - c(1.0, 0.0)).norm(), 0.0, epsilon = 1e-12);
        }
        let constant = fft(&[c(1.0, 0.0); 4], false).unwrap();
        assert_abs_diff_eq!((constant[0] - c(4.0, 0.0)).norm(), 0.0, epsilon = 1e-12);
        for v in &constant[1..] {
            assert_abs_diff_eq!(v.norm(), 0.0, epsilon = 1e-12);
        }
        assert!(fft(&[c(1.0, 0.0); 3], false).is_err());
        assert!(fft(&[], false).is_err());
    }

    #[test]
    fn naive_dft_small_cases() {
        let two = naive_dft(&[c(1.0, 0.0), c(0.0, 0.0)]);
        assert_abs_diff_eq!((two[0] - c(1.0, 0.0)).norm(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!((two[1] - c(1.0, 0.0)).norm(), 0.0, epsilon = 1e-12);
        let mixed = naive_dft(&[c(1.0, 0.0), c(0.0, 1.0)]);
        assert_abs_diff_eq!((mixed[0] - c(1.0, 1.0)).norm(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!((mixed[1] - c(1.0, -1.0)).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn fft_matches_oracle_and_inverts() {
        let mut rng = SplitMix64::new(11);
        for log_n in 1..=10 {
            let x = random_complex(&mut rng, 1 << log_n);
            let fast = fft(&x, false).unwrap();
            assert!(relative_l2(&fast, &naive_dft(&x)) < 1e-6);
            let back = fft(&fast, true).unwrap();
            assert!(relative_l2(&back, &x) < 1e-6);
        }
    }

    #[test]
    fn real_input_spectrum_is_conjugate_symmetric() {
        let mut rng = SplitMix64::new(5);
        let x: Vec<Complex64> = (0..256).map(|_| c(rng.next_f64() - 0.5, 0.0)).collect();
        let spec = fft(&x, false).unwrap();
        for k in 1..256 {
            assert_abs_diff_eq!((spec[k] - spec[256 - k].conj()).norm(), 0.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn frame_count_for_canonical_clip() {
        let cfg = StftConfig::default();
        let clip = AudioClip::new(vec![0.0; 110_250], 22_050).unwrap();
        let spec = stft(&clip, &cfg).unwrap();
        // Explicit enumeration of frame starts within the padded signal.
        let padded_len = 110_250 + cfg.n_fft;
        let starts = (0..).map(|m| m * cfg.hop).take_while(|s| s + cfg.n_fft <= padded_len).count();
        assert_eq!(spec.frames, starts);
        assert_eq!(spec.frames, 216);
        assert_eq!(spec.bins, 1025);
        assert!(spec.values.iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn bin_centered_sine_is_one_bin_with_rectangular_window() {
        let cfg = StftConfig {
            n_fft: 2048,
            hop: 512,
            window: WindowKind::Rectangular,
        };
        let sr = 22_050.0;
        let f = 21.0 * sr / 2048.0;
        let samples: Vec<f32> = (0..16_384).map(|n| (0.5 * (2.0 * PI * f * n as f64 / sr).sin()) as f32).collect();
        let clip = AudioClip::new(samples, 22_050).unwrap();
        let spec = stft(&clip, &cfg).unwrap();
        // Interior frames only: edge frames see reflected signal.
        for m in 2..spec.frames - 2 {
            let frame = spec.frame(m);
            let peak = frame[21].norm();
            for (k, v) in frame.iter().enumerate() {
                if k != 21 {
                    assert!(v.norm() < 1e-6 * peak, "bin {k}: {} vs {peak}", v.norm());
                }
            }
            let argmax = frame.iter().enumerate().max_by(|a, b| a.1.norm().total_cmp(&b.1.norm())).unwrap().0;
            assert_eq!(argmax, 21);
        }
    }

    #[test]
    fn stft_frame_matches_naive_dft() {
        let mut rng = SplitMix64::new(21);
        let samples: Vec<f32> = (0..4096).map(|_| (rng.next_f64() - 0.5) as f32).collect();
        let clip = AudioClip::new(samples.clone(), 22_050).unwrap();
        let cfg = StftConfig {
            n_fft: 512,
            hop: 128,
            window: WindowKind::Hann,
        };
        let spec = stft(&clip, &cfg).unwrap();
        let window = make_window(WindowKind::Hann, 512).unwrap();
        let m = 10;
        let start = m * 128 - 256;
        let frame: Vec<Complex64> = (0..512).map(|i| c(samples[start + i] as f64 * window[i], 0.0)).collect();
        let oracle = naive_dft(&frame);
        let got: Vec<Complex64> = spec.frame(m).iter().map(|v| c(v.re as f64, v.im as f64)).collect();
        assert!(relative_l2(&got, &oracle[..257]) < 1e-6);
    }

    #[test]
    fn stft_is_linear() {
        let mut rng = SplitMix64::new(33);
        let x: Vec<f32> = (0..8192).map(|_| (rng.next_f64() - 0.5) as f32 * 0.5).collect();
        let y: Vec<f32> = (0..8192).map(|_| (rng.next_f64() - 0.5) as f32 * 0.5).collect();
        let (a, b) = (0.75f32, -0.25f32);
        let mix: Vec<f32> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
        let cfg = StftConfig::default();
        let sx = stft(&AudioClip::new(x, 22_050).unwrap(), &cfg).unwrap();
        let sy = stft(&AudioClip::new(y, 22_050).unwrap(), &cfg).unwrap();
        let sm = stft(&AudioClip::new(mix, 22_050).unwrap(), &cfg).unwrap();
        let expected: Vec<Complex64> = sx
            .values
            .iter()
            .zip(&sy.values)
            .map(|(p, q)| c((a * p.re + b * q.re) as f64, (a * p.im + b * q.im) as f64))
            .collect();
        let got: Vec<Complex64> = sm.values.iter().map(|v| c(v.re as f64, v.im as f64)).collect();
        assert!(relative_l2(&got, &expected) < 1e-6);
    }

    #[test]
    fn stft_rejects_short_clip_and_bad_config() {
        let clip = AudioClip::new(vec![0.0; 1000], 22_050).unwrap();
        assert!(stft(&clip, &StftConfig::default()).is_err());
        let bad = StftConfig {
            n_fft: 1000,
            hop: 10,
            window: WindowKind::Hann,
        };
        assert!(bad.validate().is_err());
        let bad_hop = StftConfig { hop: 0, ..StftConfig::default() };
        assert!(bad_hop.validate().is_err());
    }

    #[test]
    fn power_values() {
        let spec = ComplexSpectrogram {
            frames: 1,
            bins: 2,
            values: vec![Complex32::new(0.0, 0.0), Complex32::new(3.0, 4.0)],
        };
        assert_eq!(power_spectrogram(&spec).values, vec![0.0, 25.0]);

        let mut rng = SplitMix64::new(2);
        let values: Vec<Complex32> = (0..500)
            .map(|_| Complex32::new(rng.next_f64() as f32 - 0.5, rng.next_f64() as f32 - 0.5))
            .collect();
        let spec = ComplexSpectrogram { frames: 5, bins: 100, values };
        let power = power_spectrogram(&spec);
        for (p, v) in power.values.iter().zip(&spec.values) {
            assert_eq!(*p, v.re * v.re + v.im * v.im);
            assert!(*p >= 0.0);
        }
    }

    #[test]
    fn reflect_padding_layout() {
        assert_eq!(reflect_pad(&[1.0, 2.0, 3.0, 4.0], 2), vec![3.0, 2.0, 1.0, 2.0, 3.0, 4.0, 3.0, 2.0]);
    }
}

use crate::dsp::PowerSpectrogram;
use crate::error::{invalid, Result};

use super::{FeatureKind, FeatureMatrix};

const F_SP: f64 = 200.0 / 3.0;
const MIN_LOG_HZ: f64 = 1000.0;
const MIN_LOG_MEL: f64 = MIN_LOG_HZ / F_SP;

fn log_step() -> f64 {
    6.4f64.ln() / 27.0
}

/// Slaney mel scale: linear below 1 kHz, logarithmic above.
pub fn hz_to_mel(hz: f64) -> f64 {
    if hz >= MIN_LOG_HZ {
        MIN_LOG_MEL + (hz / MIN_LOG_HZ).ln() / log_step()
    } else {
        hz / F_SP
    }
}

pub fn mel_to_hz(mel: f64) -> f64 {
    if mel >= MIN_LOG_MEL {
        MIN_LOG_HZ * (log_step() * (mel - MIN_LOG_MEL)).exp()
    } else {
        F_SP * mel
    }
}

/// Triangular, area-normalized filters on the mel axis.
#[derive(Debug, Clone, PartialEq)]
pub struct MelFilterBank {
    pub n_mels: usize,
    pub n_bins: usize,
    pub fmin: f64,
    pub fmax: f64,
    /// Row-major `n_mels × n_bins`.
    pub weights: Vec<f64>,
    /// Band edges in Hz: `n_mels + 2` breakpoints; filter `j` peaks at `edges[j + 1]`.
    pub edges_hz: Vec<f64>,
    support: Vec<(usize, usize)>,
}

impl MelFilterBank {
    pub fn weight(&self, band: usize, bin: usize) -> f64 {
        self.weights[band * self.n_bins + bin]
    }

    pub fn row(&self, band: usize) -> &[f64] {
        &self.weights[band * self.n_bins..(band + 1) * self.n_bins]
    }

    pub fn center_hz(&self, band: usize) -> f64 {
        self.edges_hz[band + 1]
    }
}

pub fn build_mel_filterbank(sample_rate: f64, n_fft: usize, n_mels: usize, fmin: f64, fmax: f64) -> Result<MelFilterBank> {
    if n_mels == 0 {
        return Err(invalid("n_mels must be at least 1"));
    }
    if n_fft < 2 {
        return Err(invalid("n_fft must be at least 2"));
    }
    if !(0.0 <= fmin && fmin < fmax && fmax <= sample_rate / 2.0) {
        return Err(invalid(format!(
            "need 0 <= fmin < fmax <= {}; got fmin={fmin}, fmax={fmax}",
            sample_rate / 2.0
        )));
    }
    let n_bins = n_fft / 2 + 1;
    let (mel_lo, mel_hi) = (hz_to_mel(fmin), hz_to_mel(fmax));
    let edges_hz: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(mel_lo + (mel_hi - mel_lo) * i as f64 / (n_mels + 1) as f64))
        .collect();

    let mut weights = vec![0.0; n_mels * n_bins];
    let mut support = Vec::with_capacity(n_mels);
    for j in 0..n_mels {
        let (lo, mid, hi) = (edges_hz[j], edges_hz[j + 1], edges_hz[j + 2]);
        let norm = 2.0 / (hi - lo);
        let (mut first, mut last) = (n_bins, 0);
        for k in 0..n_bins {
            let f = k as f64 * sample_rate / n_fft as f64;
            let rising = (f - lo) / (mid - lo);
            let falling = (hi - f) / (hi - mid);
            let w = rising.min(falling).max(0.0) * norm;
            if w > 0.0 {
                weights[j * n_bins + k] = w;
                first = first.min(k);
                last = k + 1;
            }
        }
        support.push(if first < last { (first, last) } else { (0, 0) });
    }

    Ok(MelFilterBank {
        n_mels,
        n_bins,
        fmin,
        fmax,
        weights,
        edges_hz,
        support,
    })
}

/// `M(m, j) = Σ_k H_j(k) P(m, k)`; output rows are bands, columns frames.
pub fn mel_spectrogram(power: &PowerSpectrogram, bank: &MelFilterBank, frame_hop_seconds: f64) -> Result<FeatureMatrix> {
    if power.bins != bank.n_bins {
        return Err(invalid(format!(
            "power spectrogram has {} bins, filter bank expects {}",
            power.bins, bank.n_bins
        )));
    }
    let frames = power.frames;
    let mut values = vec![0.0f32; bank.n_mels * frames];
    for j in 0..bank.n_mels {
        let (lo, hi) = bank.support[j];
        let row = &bank.row(j)[lo..hi];
        for m in 0..frames {
            let p = &power.frame(m)[lo..hi];
            let acc: f64 = row.iter().zip(p).map(|(&w, &v)| w * v as f64).sum();
            values[j * frames + m] = acc as f32;
        }
    }
    Ok(FeatureMatrix {
        kind: FeatureKind::Mel,
        rows: bank.n_mels,
        cols: frames,
        values,
        frame_hop_seconds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    fn bank() -> MelFilterBank {
        build_mel_filterbank(22_050.0, 2048, 128, 0.0, 11_025.0).unwrap()
    }

    #[test]
    fn mel_scale_reference_points() {
        assert!((hz_to_mel(1000.0) - 15.0).abs() < 1e-12);
        assert!((hz_to_mel(200.0) - 3.0).abs() < 1e-12);
        for hz in [0.0, 50.0, 999.0, 1000.0, 4321.0, 11_025.0] {
            assert!((mel_to_hz(hz_to_mel(hz)) - hz).abs() < 1e-9);
        }
    }

    #[test]
    fn single_band_spans_range() {
        let b = build_mel_filterbank(22_050.0, 2048, 1, 100.0, 5000.0).unwrap();
        assert_eq!(b.edges_hz.len(), 3);
        assert!((b.edges_hz[0] - 100.0).abs() < 1e-9);
        assert!((b.edges_hz[2] - 5000.0).abs() < 1e-9);
        let mid = mel_to_hz((hz_to_mel(100.0) + hz_to_mel(5000.0)) / 2.0);
        assert!((b.center_hz(0) - mid).abs() < 1e-9);
        let peak_bin = (0..b.n_bins).max_by(|&a, &c| b.weight(0, a).total_cmp(&b.weight(0, c))).unwrap();
        assert!((peak_bin as f64 * 22_050.0 / 2048.0 - mid).abs() < 22_050.0 / 2048.0);
    }

    #[test]
    fn centers_match_independent_breakpoints() {
        let b = bank();
        // Independent evaluation of the Slaney breakpoints in closed form.
        let top = 15.0 + (11_025.0f64 / 1000.0).ln() * 27.0 / 6.4f64.ln();
        for j in 0..128 {
            let mel = top * (j + 1) as f64 / 129.0;
            let hz = if mel < 15.0 { mel * 200.0 / 3.0 } else { 1000.0 * 6.4f64.powf((mel - 15.0) / 27.0) };
            assert!((b.center_hz(j) - hz).abs() < 1e-6 * hz.max(1.0), "band {j}");
        }
        assert!(b.center_hz(0) < 100.0);
        assert!(b.edges_hz.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn interior_bins_are_covered_and_rows_unimodal() {
        let b = bank();
        for k in 0..b.n_bins {
            let f = k as f64 * 22_050.0 / 2048.0;
            if f > 0.0 && f < 11_025.0 {
                let total: f64 = (0..b.n_mels).map(|j| b.weight(j, k)).sum();
                assert!(total > 0.0, "bin {k} at {f} Hz uncovered");
            }
        }
        for j in 0..b.n_mels {
            let row = b.row(j);
            assert!(row.iter().all(|&w| w >= 0.0));
            let peak = (0..row.len()).max_by(|&a, &c| row[a].total_cmp(&row[c])).unwrap();
            assert!(row[..=peak].windows(2).all(|w| w[1] >= w[0]));
            assert!(row[peak..].windows(2).all(|w| w[1] <= w[0]));
        }
    }

    #[test]
    fn rejects_bad_ranges() {
        assert!(build_mel_filterbank(22_050.0, 2048, 0, 0.0, 8000.0).is_err());
        assert!(build_mel_filterbank(22_050.0, 2048, 10, 5000.0, 4000.0).is_err());
        assert!(build_mel_filterbank(22_050.0, 2048, 10, 0.0, 12_000.0).is_err());
    }

    fn random_power(rng: &mut SplitMix64, frames: usize, bins: usize) -> PowerSpectrogram {
        PowerSpectrogram {
            frames,
            bins,
            values: (0..frames * bins).map(|_| rng.next_f64() as f32 * 10.0).collect(),
        }
    }

    #[test]
    fn matches_double_loop_and_is_linear() {
        let b = bank();
        let mut rng = SplitMix64::new(8);
        let p1 = random_power(&mut rng, 6, b.n_bins);
        let p2 = random_power(&mut rng, 6, b.n_bins);
        let mel = mel_spectrogram(&p1, &b, 0.01).unwrap();
        for j in 0..b.n_mels {
            for m in 0..6 {
                let mut oracle = 0.0f64;
                for k in 0..b.n_bins {
                    oracle += b.weight(j, k) * p1.get(m, k) as f64;
                }
                let got = mel.get(j, m) as f64;
                assert!((got - oracle).abs() <= 1e-5 * oracle.abs().max(1e-12));
            }
        }

        let (a, c) = (2.5f32, 0.5f32);
        let mix = PowerSpectrogram {
            frames: 6,
            bins: b.n_bins,
            values: p1.values.iter().zip(&p2.values).map(|(x, y)| a * x + c * y).collect(),
        };
        let m_mix = mel_spectrogram(&mix, &b, 0.01).unwrap();
        let m2 = mel_spectrogram(&p2, &b, 0.01).unwrap();
        for i in 0..m_mix.values.len() {
            let expected = a * mel.values[i] + c * m2.values[i];
            assert!((m_mix.values[i] - expected).abs() <= 1e-5 * expected.abs().max(1e-12));
        }
    }

    #[test]
    fn zero_power_and_dimension_mismatch() {
        let b = bank();
        let zero = PowerSpectrogram { frames: 3, bins: b.n_bins, values: vec![0.0; 3 * b.n_bins] };
        assert!(mel_spectrogram(&zero, &b, 0.01).unwrap().values.iter().all(|&v| v == 0.0));
        let wrong = PowerSpectrogram { frames: 3, bins: 10, values: vec![0.0; 30] };
        assert!(mel_spectrogram(&wrong, &b, 0.01).is_err());
    }
}

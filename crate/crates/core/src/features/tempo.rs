use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

use super::mfcc::LOG_FLOOR;
use super::{FeatureKind, FeatureMatrix, Matrix};

/// Positive spectral flux on the dB-scaled mel spectrogram, averaged over
/// bands. `O(0) = 0`.
pub fn onset_envelope(mel: &FeatureMatrix) -> Result<Vec<f32>> {
    if mel.cols < 2 {
        return Err(invalid("onset envelope needs at least two frames"));
    }
    let db = |v: f32| 10.0 * (v as f64 + LOG_FLOOR).log10();
    let mut onset = vec![0.0f32; mel.cols];
    for (m, slot) in onset.iter_mut().enumerate().skip(1) {
        let flux: f64 = (0..mel.rows)
            .map(|j| (db(mel.get(j, m)) - db(mel.get(j, m - 1))).max(0.0))
            .sum();
        *slot = (flux / mel.rows as f64) as f32;
    }
    Ok(onset)
}

/// Windowed autocorrelation of the onset envelope. Column `c` covers
/// `onset[c*hop .. c*hop + win]`; row `τ` holds `Σ O(m) O(m+τ)` over pairs
/// inside that window, divided by the lag-0 value when it is positive.
pub fn autocorrelation_tempogram(onset: &[f32], win_frames: usize, hop_frames: usize) -> Result<Matrix> {
    if win_frames == 0 || hop_frames == 0 {
        return Err(invalid("tempogram window and hop must be positive"));
    }
    if win_frames > onset.len() {
        return Err(invalid(format!(
            "tempogram window {win_frames} exceeds onset length {}",
            onset.len()
        )));
    }
    let cols = 1 + (onset.len() - win_frames) / hop_frames;
    let mut out = Matrix::zeros(win_frames, cols);
    for c in 0..cols {
        let seg = &onset[c * hop_frames..c * hop_frames + win_frames];
        let r0: f64 = seg.iter().map(|&v| v as f64 * v as f64).sum();
        if r0 <= 0.0 {
            continue;
        }
        for tau in 0..win_frames {
            let r: f64 = seg[..win_frames - tau]
                .iter()
                .zip(&seg[tau..])
                .map(|(&a, &b)| a as f64 * b as f64)
                .sum();
            out.set(tau, c, (r / r0) as f32);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CyclicTempoConfig {
    pub n_bins: usize,
    pub ref_tempo_bpm: f64,
    /// Number of tempo octaves above the reference that are folded together.
    pub octaves: usize,
}

impl Default for CyclicTempoConfig {
    fn default() -> Self {
        Self {
            n_bins: 64,
            ref_tempo_bpm: 30.0,
            octaves: 5,
        }
    }
}

fn interpolate_lag(lags: &Matrix, col: usize, lag: f64) -> f64 {
    let lo = lag.floor() as usize;
    let frac = lag - lo as f64;
    let a = lags.get(lo, col) as f64;
    if frac == 0.0 || lo + 1 >= lags.rows {
        return a;
    }
    a + frac * (lags.get(lo + 1, col) as f64 - a)
}

/// Folds tempo octaves of a lag tempogram onto one cycle.
///
/// Cyclic bin `c` collects the tempi `ref · 2^(o + c/n)` for every folded
/// octave `o`; each tempo is converted back to a fractional lag
/// (`60 / (bpm · hop_seconds)`) and read from the tempogram by linear
/// interpolation. Lags outside `[1, rows - 1]` contribute nothing.
pub fn cyclic_tempogram(
    lags: &Matrix,
    cfg: &CyclicTempoConfig,
    frame_hop_seconds: f64,
    tempogram_hop_frames: usize,
) -> Result<FeatureMatrix> {
    if lags.rows == 0 || lags.cols == 0 {
        return Err(invalid("tempogram is empty"));
    }
    if cfg.n_bins == 0 || cfg.ref_tempo_bpm <= 0.0 || cfg.octaves == 0 {
        return Err(invalid("cyclic tempogram needs positive bins, reference tempo and octaves"));
    }
    let max_lag = (lags.rows - 1) as f64;
    let mut out = Matrix::zeros(cfg.n_bins, lags.cols);
    for bin in 0..cfg.n_bins {
        let sample_lags: Vec<f64> = (0..cfg.octaves)
            .map(|o| {
                let bpm = cfg.ref_tempo_bpm * 2f64.powf(o as f64 + bin as f64 / cfg.n_bins as f64);
                60.0 / (bpm * frame_hop_seconds)
            })
            .filter(|&lag| (1.0..=max_lag).contains(&lag))
            .collect();
        for col in 0..lags.cols {
            let v: f64 = sample_lags.iter().map(|&lag| interpolate_lag(lags, col, lag)).sum();
            out.set(bin, col, v as f32);
        }
    }
    Ok(FeatureMatrix::from_matrix(
        FeatureKind::CyclicTempogram,
        out,
        frame_hop_seconds * tempogram_hop_frames as f64,
    ))
}

/// Lag (in frames) at which `bpm` repeats.
pub fn bpm_to_lag(bpm: f64, frame_hop_seconds: f64) -> f64 {
    60.0 / (bpm * frame_hop_seconds)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mel_from(rows: usize, cols: usize, f: impl Fn(usize, usize) -> f32) -> FeatureMatrix {
        FeatureMatrix::from_matrix(FeatureKind::Mel, Matrix::from_fn(rows, cols, f), 0.02)
    }

    #[test]
    fn constant_mel_has_no_flux() {
        let env = onset_envelope(&mel_from(16, 30, |_, _| 2.0)).unwrap();
        assert!(env.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn loud_frame_peaks_envelope() {
        let env = onset_envelope(&mel_from(16, 30, |_, c| if c == 10 { 1.0 } else { 0.0 })).unwrap();
        let peak = (0..env.len()).max_by(|&a, &b| env[a].total_cmp(&env[b])).unwrap();
        assert_eq!(peak, 10);
        assert_eq!(env[0], 0.0);
        assert!(onset_envelope(&mel_from(4, 1, |_, _| 1.0)).is_err());
    }

    #[test]
    fn constant_envelope_gives_triangular_decay() {
        let tg = autocorrelation_tempogram(&[0.7; 100], 32, 4).unwrap();
        assert_eq!(tg.rows, 32);
        assert_eq!(tg.cols, 1 + (100 - 32) / 4);
        for c in 0..tg.cols {
            for tau in 0..32 {
                let expected = (32 - tau) as f32 / 32.0;
                assert!((tg.get(tau, c) - expected).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn impulse_train_peaks_at_period_multiples() {
        let period = 7;
        let onset: Vec<f32> = (0..120).map(|i| if i % period == 0 { 1.0 } else { 0.0 }).collect();
        let tg = autocorrelation_tempogram(&onset, 60, 10).unwrap();
        for c in 0..tg.cols {
            // Brute-force autocorrelation of the same window.
            let seg = &onset[c * 10..c * 10 + 60];
            for tau in 1..60 {
                let brute: f32 = (0..60 - tau).map(|m| seg[m] * seg[m + tau]).sum();
                let r0: f32 = seg.iter().map(|v| v * v).sum();
                assert!((tg.get(tau, c) - brute / r0).abs() < 1e-6);
                if tau % period != 0 {
                    assert_eq!(tg.get(tau, c), 0.0);
                }
            }
            let peak = (1..60).max_by(|&a, &b| tg.get(a, c).total_cmp(&tg.get(b, c))).unwrap();
            assert_eq!(peak, period);
        }
    }

    #[test]
    fn zero_envelope_stays_zero() {
        let tg = autocorrelation_tempogram(&[0.0; 50], 20, 5).unwrap();
        assert!(tg.values.iter().all(|&v| v == 0.0));
        assert!(autocorrelation_tempogram(&[0.0; 10], 20, 1).is_err());
    }

    #[test]
    fn reference_tempo_lands_in_bin_zero() {
        let hop_s = 512.0 / 22_050.0;
        let lag = 40usize;
        let cfg = CyclicTempoConfig {
            ref_tempo_bpm: 60.0 / (lag as f64 * hop_s),
            ..CyclicTempoConfig::default()
        };
        let mut lags = Matrix::zeros(128, 1);
        lags.set(0, 0, 1.0);
        lags.set(lag, 0, 1.0);
        let out = cyclic_tempogram(&lags, &cfg, hop_s, 1).unwrap();
        assert_eq!(out.rows, 64);
        assert_eq!(out.argmax_in_column(0), 0);
        assert!((out.get(0, 0) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn octave_lags_share_a_bin() {
        let hop_s = 512.0 / 22_050.0;
        let cfg = CyclicTempoConfig::default();
        let bin_of = |period: usize| {
            let mut lags = Matrix::zeros(128, 1);
            for k in 1..128 {
                if k % period == 0 {
                    lags.set(k, 0, 1.0);
                }
            }
            cyclic_tempogram(&lags, &cfg, hop_s, 1).unwrap().argmax_in_column(0)
        };
        let a = bin_of(12) as i64;
        let b = bin_of(24) as i64;
        let d = (a - b).rem_euclid(64);
        assert!(d <= 1 || d >= 63, "{a} vs {b}");
    }

    #[test]
    fn zero_tempogram_folds_to_zero() {
        let out = cyclic_tempogram(&Matrix::zeros(64, 5), &CyclicTempoConfig::default(), 0.023, 1).unwrap();
        assert!(out.values.iter().all(|&v| v == 0.0));
        assert_eq!(out.cols, 5);
    }
}

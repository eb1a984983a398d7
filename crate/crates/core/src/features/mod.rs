//! The six spectral and rhythm features, their conversion into fixed-size
//! CNN input images, and the on-disk feature file format.

mod chroma;
mod cqt;
pub mod file;
mod image;
mod mel;
mod mfcc;
mod tempo;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::audio::AudioClip;
use crate::dsp::{power_stft, StftConfig};
use crate::error::{invalid, Error, Result};

pub use chroma::{
    build_chroma_map, cens_chromagram, chroma_project, cqt_chroma_raw, cqt_chromagram, max_normalize_columns,
    stft_chromagram, ChromaMap, CENS_THRESHOLDS,
};
pub use cqt::{cqt, CqtKernel};
pub use file::{read_feature_file, write_feature_file, SidecarEntry};
pub use image::{bilinear_resize, to_feature_image, FeatureImage};
pub use mel::{build_mel_filterbank, hz_to_mel, mel_spectrogram, mel_to_hz, MelFilterBank};
pub use mfcc::{inverse_dct, mfcc, LOG_FLOOR};
pub use tempo::{autocorrelation_tempogram, bpm_to_lag, cyclic_tempogram, onset_envelope, CyclicTempoConfig};

/// The six feature kinds, in file-format code order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Mel,
    Mfcc,
    #[serde(rename = "tempogram", alias = "cyclic_tempogram")]
    CyclicTempogram,
    ChromaStft,
    ChromaCqt,
    ChromaCens,
}

impl FeatureKind {
    pub const ALL: [FeatureKind; 6] = [
        FeatureKind::Mel,
        FeatureKind::Mfcc,
        FeatureKind::CyclicTempogram,
        FeatureKind::ChromaStft,
        FeatureKind::ChromaCqt,
        FeatureKind::ChromaCens,
    ];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            FeatureKind::Mel => "mel",
            FeatureKind::Mfcc => "mfcc",
            FeatureKind::CyclicTempogram => "tempogram",
            FeatureKind::ChromaStft => "chroma_stft",
            FeatureKind::ChromaCqt => "chroma_cqt",
            FeatureKind::ChromaCens => "chroma_cens",
        }
    }

    pub fn is_chroma(self) -> bool {
        matches!(self, FeatureKind::ChromaStft | FeatureKind::ChromaCqt | FeatureKind::ChromaCens)
    }
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FeatureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cyclic_tempogram" => Ok(FeatureKind::CyclicTempogram),
            _ => Self::ALL
                .into_iter()
                .find(|k| k.name() == s)
                .ok_or_else(|| invalid(format!("unknown feature kind '{s}'"))),
        }
    }
}

/// Plain row-major real matrix for intermediate results (tempogram lags,
/// CQT magnitudes, raw chroma).
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f32>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            values: vec![0.0; rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> f32) -> Self {
        let values = (0..rows).flat_map(|r| (0..cols).map(move |c| (r, c))).map(|(r, c)| f(r, c)).collect();
        Self { rows, cols, values }
    }

    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.values[row * self.cols + col]
    }

    pub fn set(&mut self, row: usize, col: usize, v: f32) {
        self.values[row * self.cols + col] = v;
    }

    pub fn row(&self, row: usize) -> &[f32] {
        &self.values[row * self.cols..(row + 1) * self.cols]
    }

    pub fn column(&self, col: usize) -> Vec<f32> {
        (0..self.rows).map(|r| self.get(r, col)).collect()
    }

    /// Row index of the largest value in `col`; ties go to the lower row.
    pub fn argmax_in_column(&self, col: usize) -> usize {
        let mut best = 0;
        for r in 1..self.rows {
            if self.get(r, col) > self.get(best, col) {
                best = r;
            }
        }
        best
    }
}

/// A time–feature matrix: `rows` is the feature axis, `cols` the frames.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub kind: FeatureKind,
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f32>,
    pub frame_hop_seconds: f64,
}

impl FeatureMatrix {
    pub fn from_matrix(kind: FeatureKind, m: Matrix, frame_hop_seconds: f64) -> Self {
        Self {
            kind,
            rows: m.rows,
            cols: m.cols,
            values: m.values,
            frame_hop_seconds,
        }
    }

    pub fn as_matrix(&self) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            values: self.values.clone(),
        }
    }

    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.values[row * self.cols + col]
    }

    pub fn argmax_in_column(&self, col: usize) -> usize {
        let mut best = 0;
        for r in 1..self.rows {
            if self.get(r, col) > self.get(best, col) {
                best = r;
            }
        }
        best
    }
}

/// Every tunable of the feature pipeline. Defaults mirror common
/// audio-analysis toolkit defaults at a 22,050 Hz working rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    pub stft: StftConfig,
    pub n_mels: usize,
    pub fmin: f64,
    /// `None` means the Nyquist frequency.
    pub fmax: Option<f64>,
    pub n_mfcc: usize,
    pub tempogram_win_frames: usize,
    pub tempogram_hop_frames: usize,
    pub cyclic: CyclicTempoConfig,
    pub tuning_hz: f64,
    pub cqt_fmin: f64,
    pub cqt_bins: usize,
    pub cqt_bins_per_octave: usize,
    pub cens_window: usize,
    pub image_height: usize,
    pub image_width: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            stft: StftConfig::default(),
            n_mels: 128,
            fmin: 0.0,
            fmax: None,
            n_mfcc: 20,
            tempogram_win_frames: 128,
            tempogram_hop_frames: 1,
            cyclic: CyclicTempoConfig::default(),
            tuning_hz: 440.0,
            cqt_fmin: 32.703_195_662_574_83,
            cqt_bins: 84,
            cqt_bins_per_octave: 12,
            cens_window: 41,
            image_height: 128,
            image_width: 216,
        }
    }
}

/// Precomputed filter banks for one sample rate; immutable and shareable.
#[derive(Debug, Clone)]
pub struct FeatureExtractor {
    pub config: FeatureConfig,
    pub sample_rate: u32,
    pub mel_bank: MelFilterBank,
    pub chroma_map: ChromaMap,
    pub cqt_kernel: CqtKernel,
}

impl FeatureExtractor {
    pub fn new(config: FeatureConfig, sample_rate: u32) -> Result<Self> {
        config.stft.validate()?;
        let sr = sample_rate as f64;
        let mel_bank = build_mel_filterbank(
            sr,
            config.stft.n_fft,
            config.n_mels,
            config.fmin,
            config.fmax.unwrap_or(sr / 2.0),
        )?;
        let chroma_map = build_chroma_map(sr, config.stft.n_fft, config.tuning_hz)?;
        let cqt_kernel = CqtKernel::new(sr, config.cqt_fmin, config.cqt_bins, config.cqt_bins_per_octave)?;
        Ok(Self {
            config,
            sample_rate,
            mel_bank,
            chroma_map,
            cqt_kernel,
        })
    }

    fn hop_seconds(&self) -> f64 {
        self.config.stft.hop as f64 / self.sample_rate as f64
    }

    fn check_rate(&self, clip: &AudioClip) -> Result<()> {
        if clip.sample_rate != self.sample_rate {
            return Err(invalid(format!(
                "clip sample rate {} differs from extractor rate {}",
                clip.sample_rate, self.sample_rate
            )));
        }
        Ok(())
    }

    pub fn mel(&self, clip: &AudioClip) -> Result<FeatureMatrix> {
        self.check_rate(clip)?;
        let power = power_stft(clip, &self.config.stft)?;
        mel_spectrogram(&power, &self.mel_bank, self.hop_seconds())
    }

    pub fn extract(&self, clip: &AudioClip, kind: FeatureKind) -> Result<FeatureMatrix> {
        self.check_rate(clip)?;
        let hop_s = self.hop_seconds();
        match kind {
            FeatureKind::Mel => self.mel(clip),
            FeatureKind::Mfcc => mfcc(&self.mel(clip)?, self.config.n_mfcc),
            FeatureKind::CyclicTempogram => {
                let onset = onset_envelope(&self.mel(clip)?)?;
                let win = self.config.tempogram_win_frames.min(onset.len());
                let lags = autocorrelation_tempogram(&onset, win, self.config.tempogram_hop_frames)?;
                cyclic_tempogram(&lags, &self.config.cyclic, hop_s, self.config.tempogram_hop_frames)
            }
            FeatureKind::ChromaStft => {
                let power = power_stft(clip, &self.config.stft)?;
                stft_chromagram(&power, &self.chroma_map, hop_s)
            }
            FeatureKind::ChromaCqt => {
                let mags = cqt(clip, &self.cqt_kernel, self.config.stft.hop)?;
                cqt_chromagram(&mags, self.config.cqt_bins_per_octave, hop_s)
            }
            FeatureKind::ChromaCens => {
                let mags = cqt(clip, &self.cqt_kernel, self.config.stft.hop)?;
                let raw = cqt_chroma_raw(&mags, self.config.cqt_bins_per_octave)?;
                cens_chromagram(&raw, self.config.cens_window, hop_s)
            }
        }
    }

    pub fn extract_image(&self, clip: &AudioClip, kind: FeatureKind) -> Result<FeatureImage> {
        let feat = self.extract(clip, kind)?;
        to_feature_image(&feat, self.config.image_height, self.config.image_width)
    }
}

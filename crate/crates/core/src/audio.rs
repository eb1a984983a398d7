//! Decoding, resampling and length standardization of audio clips.

use std::io::Read;
use std::path::Path;

use crate::error::{invalid, Error, Result};

/// Mono signal with samples in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
    pub source_path: Option<String>,
}

impl AudioClip {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(invalid("sample rate must be positive"));
        }
        if let Some(bad) = samples.iter().find(|s| !(-1.0..=1.0).contains(*s)) {
            return Err(invalid(format!("sample {bad} outside [-1, 1]")));
        }
        Ok(Self {
            samples,
            sample_rate,
            source_path: None,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_seconds(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

fn map_hound(err: hound::Error) -> Error {
    match err {
        hound::Error::Unsupported => Error::UnsupportedFormat("non-PCM or unsupported WAVE encoding".into()),
        hound::Error::FormatError(msg) => Error::Decode(msg.to_string()),
        hound::Error::IoError(e) => Error::Decode(format!("truncated or unreadable payload: {e}")),
        other => Error::Decode(other.to_string()),
    }
}

/// Decodes a RIFF/WAVE file. Stereo is downmixed by the per-sample mean and
/// integer PCM is scaled by `2^(bits-1)`.
pub fn load_wav(path: impl AsRef<Path>) -> Result<AudioClip> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)?;
    let mut clip = decode_wav(std::io::BufReader::new(file))?;
    clip.source_path = Some(path.display().to_string());
    Ok(clip)
}

/// Same as [`load_wav`] but reads from any byte source.
pub fn decode_wav<R: Read>(reader: R) -> Result<AudioClip> {
    let reader = hound::WavReader::new(reader).map_err(map_hound)?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    if !(1..=2).contains(&channels) {
        return Err(Error::UnsupportedFormat(format!("{channels} channels (only mono and stereo)")));
    }
    if spec.sample_rate == 0 {
        return Err(Error::Decode("sample rate of zero in header".into()));
    }

    let interleaved: Vec<f32> = match spec.sample_format {
        hound::SampleFormat::Int => {
            if !matches!(spec.bits_per_sample, 8 | 16 | 24 | 32) {
                return Err(Error::UnsupportedFormat(format!("{}-bit integer PCM", spec.bits_per_sample)));
            }
            let scale = (1u64 << (spec.bits_per_sample - 1)) as f64;
            reader
                .into_samples::<i32>()
                .map(|s| s.map(|v| (v as f64 / scale) as f32).map_err(map_hound))
                .collect::<Result<_>>()?
        }
        hound::SampleFormat::Float => {
            if spec.bits_per_sample != 32 {
                return Err(Error::UnsupportedFormat(format!("{}-bit float", spec.bits_per_sample)));
            }
            reader
                .into_samples::<f32>()
                .map(|s| s.map(|v| v.clamp(-1.0, 1.0)).map_err(map_hound))
                .collect::<Result<_>>()?
        }
    };

    if interleaved.is_empty() {
        return Err(Error::EmptyAudio("data chunk holds no samples".into()));
    }

    let samples = if channels == 1 {
        interleaved
    } else {
        interleaved.chunks_exact(2).map(|lr| (lr[0] + lr[1]) / 2.0).collect()
    };

    Ok(AudioClip {
        samples,
        sample_rate: spec.sample_rate,
        source_path: None,
    })
}

/// Writes a clip as 16-bit mono PCM. Used for debug dumps and test fixtures.
pub fn write_wav_16(clip: &AudioClip, path: impl AsRef<Path>) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: clip.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(map_hound)?;
    for &s in &clip.samples {
        writer.write_sample(quantize_16(s)).map_err(map_hound)?;
    }
    writer.finalize().map_err(map_hound)?;
    Ok(())
}

fn quantize_16(s: f32) -> i16 {
    (s as f64 * 32768.0).round().clamp(-32768.0, 32767.0) as i16
}

/// Zero-pads or truncates at the end to exactly `target_samples`.
pub fn pad_or_trim(clip: &AudioClip, target_samples: usize) -> Result<AudioClip> {
    if target_samples == 0 {
        return Err(invalid("target length must be positive"));
    }
    let mut samples = clip.samples.clone();
    samples.resize(target_samples, 0.0);
    Ok(AudioClip {
        samples,
        sample_rate: clip.sample_rate,
        source_path: clip.source_path.clone(),
    })
}

const ZERO_CROSSINGS: f64 = 32.0;
const KAISER_BETA: f64 = 8.6;
const MAX_TABLE_PHASES: u64 = 4096;

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

// Zeroth-order modified Bessel function of the first kind, power series.
fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let q = x * x / 4.0;
    for k in 1..64 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

struct SincFilter {
    cutoff: f64,
    half: i64,
    i0_beta: f64,
}

impl SincFilter {
    /// Tap weight at a signed distance `t` (input samples) from the output instant.
    fn weight(&self, t: f64) -> f64 {
        let span = self.half as f64;
        if t.abs() >= span {
            return 0.0;
        }
        let x = self.cutoff * t;
        let sinc = if x.abs() < 1e-12 {
            1.0
        } else {
            (std::f64::consts::PI * x).sin() / (std::f64::consts::PI * x)
        };
        let r = t / span;
        let window = bessel_i0(KAISER_BETA * (1.0 - r * r).max(0.0).sqrt()) / self.i0_beta;
        self.cutoff * sinc * window
    }

    fn taps(&self, frac: f64) -> Vec<f64> {
        (-self.half + 1..=self.half).map(|k| self.weight(k as f64 - frac)).collect()
    }
}

/// Band-limited polyphase resampling with a Kaiser-windowed sinc whose cutoff
/// sits at the lower of the two Nyquist frequencies.
pub fn resample(clip: &AudioClip, target_rate: u32) -> Result<AudioClip> {
    if target_rate == 0 {
        return Err(invalid("target rate must be positive"));
    }
    if target_rate == clip.sample_rate {
        return Ok(clip.clone());
    }
    let in_rate = clip.sample_rate as u64;
    let out_rate = target_rate as u64;
    let g = gcd(in_rate, out_rate);
    let (up, down) = (out_rate / g, in_rate / g);

    let len = clip.samples.len() as u64;
    let out_len = ((len * out_rate * 2 + in_rate) / (2 * in_rate)) as usize;

    let cutoff = (out_rate as f64 / in_rate as f64).min(1.0);
    let filter = SincFilter {
        cutoff,
        half: (ZERO_CROSSINGS / cutoff).ceil() as i64,
        i0_beta: bessel_i0(KAISER_BETA),
    };

    let table: Option<Vec<Vec<f64>>> = (up <= MAX_TABLE_PHASES)
        .then(|| (0..up).map(|phase| filter.taps(phase as f64 / up as f64)).collect());

    let x = &clip.samples;
    let mut out = Vec::with_capacity(out_len);
    for n in 0..out_len as u64 {
        let pos = n * down;
        let base = (pos / up) as i64;
        let phase = pos % up;
        let owned;
        let taps: &[f64] = match &table {
            Some(t) => &t[phase as usize],
            None => {
                owned = filter.taps(phase as f64 / up as f64);
                &owned
            }
        };
        let mut acc = 0.0f64;
        for (offset, w) in (-filter.half + 1..=filter.half).zip(taps) {
            let idx = base + offset;
            if idx >= 0 && (idx as usize) < x.len() {
                acc += x[idx as usize] as f64 * w;
            }
        }
        out.push(acc.clamp(-1.0, 1.0) as f32);
    }

    Ok(AudioClip {
        samples: out,
        sample_rate: target_rate,
        source_path: clip.source_path.clone(),
    })
}

/// Decode, resample to `rate` and standardize to `target_samples`.
pub fn load_canonical(path: impl AsRef<Path>, rate: u32, target_samples: usize) -> Result<AudioClip> {
    let clip = load_wav(path)?;
    let clip = resample(&clip, rate)?;
    pad_or_trim(&clip, target_samples)
}

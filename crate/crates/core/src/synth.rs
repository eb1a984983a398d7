//! Deterministic test signals and the five-class synthetic corpus.

use std::f64::consts::TAU;

use crate::audio::AudioClip;
use crate::error::Result;
use crate::rng::SplitMix64;

/// Equal-tempered frequency of MIDI note `midi` (A4 = 69 = 440 Hz).
pub fn midi_to_hz(midi: f64) -> f64 {
    440.0 * 2f64.powf((midi - 69.0) / 12.0)
}

pub fn sine(freq_hz: f64, amplitude: f64, sample_rate: u32, n: usize) -> Vec<f32> {
    let sr = sample_rate as f64;
    (0..n).map(|i| (amplitude * (TAU * freq_hz * i as f64 / sr).sin()) as f32).collect()
}

/// Unit clicks of `click_len` samples every `60/bpm` seconds, first at
/// `offset_s`.
pub fn click_train(bpm: f64, offset_s: f64, click_len: usize, sample_rate: u32, n: usize) -> Vec<f32> {
    let sr = sample_rate as f64;
    let period = 60.0 / bpm * sr;
    let mut out = vec![0.0f32; n];
    let mut t = offset_s * sr;
    while (t as usize) < n {
        let start = t.round() as usize;
        for v in out.iter_mut().skip(start).take(click_len) {
            *v = 1.0;
        }
        t += period;
    }
    out
}

/// Uniform white noise in `[-amplitude, amplitude)`.
pub fn white_noise(rng: &mut SplitMix64, amplitude: f64, n: usize) -> Vec<f32> {
    (0..n).map(|_| (amplitude * (2.0 * rng.next_f64() - 1.0)) as f32).collect()
}

/// Exponential sweep from `f0` to `f1` over the whole length.
pub fn chirp(f0: f64, f1: f64, amplitude: f64, sample_rate: u32, n: usize) -> Vec<f32> {
    let sr = sample_rate as f64;
    let dur = n as f64 / sr;
    let k = (f1 / f0).ln() / dur;
    (0..n)
        .map(|i| {
            let t = i as f64 / sr;
            let phase = TAU * f0 * ((k * t).exp() - 1.0) / k;
            (amplitude * phase.sin()) as f32
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynthClass {
    PureTone,
    NoiseBursts,
    Chirp,
    AmNoise,
    ClickTrain,
}

impl SynthClass {
    pub const ALL: [SynthClass; 5] =
        [SynthClass::PureTone, SynthClass::NoiseBursts, SynthClass::Chirp, SynthClass::AmNoise, SynthClass::ClickTrain];

    pub fn name(self) -> &'static str {
        match self {
            SynthClass::PureTone => "pure_tone",
            SynthClass::NoiseBursts => "noise_bursts",
            SynthClass::Chirp => "chirp",
            SynthClass::AmNoise => "am_noise",
            SynthClass::ClickTrain => "click_train",
        }
    }
}

/// Noise floor added under every synthetic clip.
pub const BACKGROUND_LEVEL: f64 = 0.003;

/// One randomized clip of `class`. Parameters (pitch, burst timing, sweep
/// range, modulation rate, tempo) are drawn from `rng`.
pub fn synth_clip(class: SynthClass, rng: &mut SplitMix64, sample_rate: u32, n: usize) -> Result<AudioClip> {
    let sr = sample_rate as f64;
    let uniform = |rng: &mut SplitMix64, lo: f64, hi: f64| lo + (hi - lo) * rng.next_f64();
    let mut x = match class {
        SynthClass::PureTone => {
            let midi = uniform(rng, 48.0, 84.0).round();
            sine(midi_to_hz(midi), uniform(rng, 0.2, 0.6), sample_rate, n)
        }
        SynthClass::NoiseBursts => {
            let mut out = vec![0.0f32; n];
            let amp = uniform(rng, 0.2, 0.5);
            let mut t = uniform(rng, 0.0, 0.5);
            while t < n as f64 / sr {
                let len = (uniform(rng, 0.1, 0.4) * sr) as usize;
                let start = (t * sr) as usize;
                for v in out.iter_mut().skip(start).take(len) {
                    *v = (amp * (2.0 * rng.next_f64() - 1.0)) as f32;
                }
                t += uniform(rng, 0.5, 1.2);
            }
            out
        }
        SynthClass::Chirp => {
            let f0 = uniform(rng, 100.0, 400.0);
            let f1 = f0 * uniform(rng, 4.0, 16.0);
            let (a, b) = if rng.next_f64() < 0.5 { (f0, f1) } else { (f1, f0) };
            chirp(a, b, uniform(rng, 0.2, 0.6), sample_rate, n)
        }
        SynthClass::AmNoise => {
            let rate = uniform(rng, 2.0, 8.0);
            let amp = uniform(rng, 0.2, 0.5);
            let phase = uniform(rng, 0.0, TAU);
            (0..n)
                .map(|i| {
                    let env = 0.5 * (1.0 + (TAU * rate * i as f64 / sr + phase).sin());
                    (amp * env * (2.0 * rng.next_f64() - 1.0)) as f32
                })
                .collect()
        }
        SynthClass::ClickTrain => {
            let bpm = uniform(rng, 60.0, 240.0);
            let offset = uniform(rng, 0.0, 60.0 / bpm);
            let amp = uniform(rng, 0.3, 0.9) as f32;
            click_train(bpm, offset, 10, sample_rate, n).into_iter().map(|v| v * amp).collect()
        }
    };
    for v in x.iter_mut() {
        *v += (BACKGROUND_LEVEL * (2.0 * rng.next_f64() - 1.0)) as f32;
    }
    AudioClip::new(x, sample_rate)
}

/// `per_class` clips of each class, class-major; labels are indices into
/// [`SynthClass::ALL`].
pub fn synth_corpus(per_class: usize, seed: u64, sample_rate: u32, n: usize) -> Result<Vec<(AudioClip, usize)>> {
    let mut rng = SplitMix64::new(seed);
    let mut out = Vec::with_capacity(per_class * 5);
    for (label, &class) in SynthClass::ALL.iter().enumerate() {
        for _ in 0..per_class {
            out.push((synth_clip(class, &mut rng, sample_rate, n)?, label));
        }
    }
    Ok(out)
}

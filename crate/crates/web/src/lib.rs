//! WebAssembly bindings for the static demo page in `www/`.
//!
//! Three operations are exposed: render any of the six feature images for a
//! synthesized five-second signal, show the mel filter bank, and score a
//! pasted list of true/predicted labels.

use srfe_core::features::{build_mel_filterbank, FeatureConfig, FeatureExtractor, FeatureKind};
use srfe_core::metrics::EvalReport;
use srfe_core::rng::SplitMix64;
use srfe_core::synth::{chirp, click_train, sine, white_noise};
use srfe_core::{AudioClip, CLIP_SAMPLES, WORKING_SAMPLE_RATE};
use wasm_bindgen::prelude::*;

/// Row-major image handed to JavaScript; row 0 is the lowest frequency.
#[wasm_bindgen]
pub struct Heatmap {
    height: usize,
    width: usize,
    values: Vec<f32>,
}

#[wasm_bindgen]
impl Heatmap {
    #[wasm_bindgen(getter)]
    pub fn height(&self) -> usize {
        self.height
    }

    #[wasm_bindgen(getter)]
    pub fn width(&self) -> usize {
        self.width
    }

    #[wasm_bindgen(getter)]
    pub fn values(&self) -> Vec<f32> {
        self.values.clone()
    }
}

fn js_err(e: impl std::fmt::Display) -> JsValue {
    JsValue::from_str(&e.to_string())
}

/// `signal`: "tone" (at `param` Hz), "chirp" (from `param` Hz up four
/// octaves), "clicks" (at `param` BPM) or "noise".
pub fn synthesize(signal: &str, param: f64) -> Result<AudioClip, String> {
    let n = CLIP_SAMPLES;
    let sr = WORKING_SAMPLE_RATE;
    let samples = match signal {
        "tone" => sine(param, 0.5, sr, n),
        "chirp" => chirp(param, param * 16.0, 0.5, sr, n),
        "clicks" => click_train(param, 0.05, 10, sr, n),
        "noise" => white_noise(&mut SplitMix64::new(param.to_bits()), 0.3, n),
        other => return Err(format!("unknown signal '{other}'")),
    };
    if !samples.iter().all(|v| v.is_finite()) {
        return Err(format!("parameter {param} gives a non-finite signal"));
    }
    AudioClip::new(samples, sr).map_err(|e| e.to_string())
}

pub fn feature_heatmap(kind: &str, signal: &str, param: f64) -> Result<Heatmap, String> {
    let kind: FeatureKind = kind.parse().map_err(|e: srfe_core::Error| e.to_string())?;
    let clip = synthesize(signal, param)?;
    let ex = FeatureExtractor::new(FeatureConfig::default(), WORKING_SAMPLE_RATE).map_err(|e| e.to_string())?;
    let img = ex.extract_image(&clip, kind).map_err(|e| e.to_string())?;
    Ok(Heatmap { height: img.height, width: img.width, values: img.values })
}

/// Normalized feature image (128×216) of a synthesized signal.
#[wasm_bindgen(js_name = featureImage)]
pub fn feature_image(kind: &str, signal: &str, param: f64) -> Result<Heatmap, JsValue> {
    feature_heatmap(kind, signal, param).map_err(js_err)
}

/// Mel filter weights, `n_mels` rows by 1025 FFT bins.
#[wasm_bindgen(js_name = melFilterbank)]
pub fn mel_filterbank(n_mels: usize, fmin: f64, fmax: f64) -> Result<Heatmap, JsValue> {
    let bank = build_mel_filterbank(WORKING_SAMPLE_RATE as f64, 2048, n_mels, fmin, fmax).map_err(js_err)?;
    Ok(Heatmap { height: bank.n_mels, width: bank.n_bins, values: bank.weights.iter().map(|&w| w as f32).collect() })
}

/// Parses whitespace/comma separated label ids.
pub fn parse_labels(text: &str) -> Result<Vec<usize>, String> {
    text.split(|c: char| c.is_whitespace() || c == ',')
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<usize>().map_err(|_| format!("'{t}' is not a label id")))
        .collect()
}

pub fn metrics_report(y_true: &str, y_pred: &str, n_labels: usize) -> Result<String, String> {
    let t = parse_labels(y_true)?;
    let p = parse_labels(y_pred)?;
    let report = EvalReport::from_labels(&t, &p, n_labels).map_err(|e| e.to_string())?;
    serde_json::to_string(&report).map_err(|e| e.to_string())
}

/// Evaluation report JSON for two label lists.
#[wasm_bindgen(js_name = metricsFromLabels)]
pub fn metrics_from_labels(y_true: &str, y_pred: &str, n_labels: usize) -> Result<String, JsValue> {
    metrics_report(y_true, y_pred, n_labels).map_err(js_err)
}

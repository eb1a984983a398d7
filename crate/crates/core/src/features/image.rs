use crate::error::{invalid, Result};

use super::mfcc::LOG_FLOOR;
use super::{FeatureKind, FeatureMatrix};

/// Fixed-size single-channel CNN input, row-major, values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureImage {
    pub kind: FeatureKind,
    pub height: usize,
    pub width: usize,
    pub values: Vec<f32>,
}

impl FeatureImage {
    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.values[row * self.width + col]
    }
}

/// Bilinear resize with corner-aligned sampling, so equal sizes are an
/// exact identity and the source corners map onto the output corners.
pub fn bilinear_resize(src: &[f32], rows: usize, cols: usize, out_rows: usize, out_cols: usize) -> Vec<f32> {
    let axis = |n_in: usize, n_out: usize| -> Vec<(usize, usize, f64)> {
        (0..n_out)
            .map(|i| {
                if n_in == 1 || n_out == 1 {
                    return (0, 0, 0.0);
                }
                let pos = i as f64 * (n_in - 1) as f64 / (n_out - 1) as f64;
                let lo = (pos.floor() as usize).min(n_in - 1);
                let hi = (lo + 1).min(n_in - 1);
                (lo, hi, pos - lo as f64)
            })
            .collect()
    };
    let ys = axis(rows, out_rows);
    let xs = axis(cols, out_cols);
    let at = |r: usize, c: usize| src[r * cols + c] as f64;
    let mut out = Vec::with_capacity(out_rows * out_cols);
    for &(y0, y1, fy) in &ys {
        for &(x0, x1, fx) in &xs {
            let top = at(y0, x0) + fx * (at(y0, x1) - at(y0, x0));
            let bottom = at(y1, x0) + fx * (at(y1, x1) - at(y1, x0));
            out.push((top + fy * (bottom - top)) as f32);
        }
    }
    out
}

/// dB scaling for mel, whole-matrix min–max normalization (constant
/// matrices become 0.5), then bilinear resize to `height × width`.
pub fn to_feature_image(feat: &FeatureMatrix, height: usize, width: usize) -> Result<FeatureImage> {
    if feat.rows == 0 || feat.cols == 0 || feat.values.is_empty() {
        return Err(invalid("feature matrix is empty"));
    }
    if height == 0 || width == 0 {
        return Err(invalid("image dimensions must be positive"));
    }
    let scaled: Vec<f64> = match feat.kind {
        FeatureKind::Mel => feat.values.iter().map(|&v| 10.0 * (v as f64 + LOG_FLOOR).log10()).collect(),
        _ => feat.values.iter().map(|&v| v as f64).collect(),
    };
    let (lo, hi) = scaled
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let normalized: Vec<f32> = if hi > lo {
        scaled.iter().map(|&v| ((v - lo) / (hi - lo)) as f32).collect()
    } else {
        vec![0.5; scaled.len()]
    };
    let values = bilinear_resize(&normalized, feat.rows, feat.cols, height, width)
        .into_iter()
        .map(|v| v.clamp(0.0, 1.0))
        .collect();
    Ok(FeatureImage {
        kind: feat.kind,
        height,
        width,
        values,
    })
}

use std::f64::consts::PI;

use crate::error::{invalid, Result};

use super::{FeatureKind, FeatureMatrix};

/// Floor added before every logarithm of a possibly-zero energy.
pub const LOG_FLOOR: f64 = 1e-10;

fn dct_scale(n: usize, bands: usize) -> f64 {
    if n == 0 {
        (1.0 / bands as f64).sqrt()
    } else {
        (2.0 / bands as f64).sqrt()
    }
}

/// Natural-log mel energies followed by an orthonormal DCT-II per frame.
pub fn mfcc(mel: &FeatureMatrix, n_mfcc: usize) -> Result<FeatureMatrix> {
    let bands = mel.rows;
    if n_mfcc == 0 || n_mfcc > bands {
        return Err(invalid(format!("n_mfcc {n_mfcc} must be in 1..={bands}")));
    }
    let basis: Vec<f64> = (0..n_mfcc)
        .flat_map(|n| {
            let scale = dct_scale(n, bands);
            (0..bands).map(move |j| scale * (PI * n as f64 * (j as f64 + 0.5) / bands as f64).cos())
        })
        .collect();

    let frames = mel.cols;
    let mut values = vec![0.0f32; n_mfcc * frames];
    let mut log_frame = vec![0.0f64; bands];
    for m in 0..frames {
        for (j, slot) in log_frame.iter_mut().enumerate() {
            *slot = (mel.get(j, m) as f64 + LOG_FLOOR).ln();
        }
        for n in 0..n_mfcc {
            let row = &basis[n * bands..(n + 1) * bands];
            let c: f64 = row.iter().zip(&log_frame).map(|(b, s)| b * s).sum();
            values[n * frames + m] = c as f32;
        }
    }
    Ok(FeatureMatrix {
        kind: FeatureKind::Mfcc,
        rows: n_mfcc,
        cols: frames,
        values,
        frame_hop_seconds: mel.frame_hop_seconds,
    })
}

/// Inverse of the orthonormal DCT-II (a scaled DCT-III) for one full-length
/// coefficient vector.
pub fn inverse_dct(coeffs: &[f64]) -> Vec<f64> {
    let bands = coeffs.len();
    (0..bands)
        .map(|j| {
            coeffs
                .iter()
                .enumerate()
                .map(|(n, c)| c * dct_scale(n, bands) * (PI * n as f64 * (j as f64 + 0.5) / bands as f64).cos())
                .sum()
        })
        .collect()
}

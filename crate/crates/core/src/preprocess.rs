//! Resizing and normalization of selected slices to model-input shape.

use crate::format::fmt_sig;
use crate::volume::Slice;
use serde::{Deserialize, Serialize};

/// Per-slice normalization mode.
///
/// Both operate on the slice's own statistics; degenerate slices
/// (constant intensity) normalize to all zeros rather than erroring,
/// since all-black frames occur in real scans.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Normalization {
    MinMax,
    ZScore,
}

impl std::str::FromStr for Normalization {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "minmax" => Ok(Self::MinMax),
            "zscore" => Ok(Self::ZScore),
            other => Err(format!(
                "unknown normalization '{other}' (expected minmax or zscore)"
            )),
        }
    }
}

/// Target shape and normalization for model input.
///
/// 224x224 suits most pretrained backbones; Inception-bound exports use
/// 299x299 via the same config.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PreprocessConfig {
    pub target: (usize, usize),
    pub normalization: Normalization,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            target: (224, 224),
            normalization: Normalization::MinMax,
        }
    }
}

/// Bilinear resize with half-pixel-center coordinates:
/// `src = (dst + 0.5) * (src_extent / dst_extent) - 0.5`, clamped.
///
/// Resizing to the source dims is exactly the identity under this
/// convention.
pub fn resize_bilinear(slice: &Slice, target: (usize, usize)) -> Slice {
    let (th, tw) = target;
    assert!(th >= 1 && tw >= 1, "target dims must be at least 1");
    let (sh, sw) = (slice.height(), slice.width());
    let mut pixels = Vec::with_capacity(th * tw);
    let scale_y = sh as f64 / th as f64;
    let scale_x = sw as f64 / tw as f64;
    for row in 0..th {
        let sy = ((row as f64 + 0.5) * scale_y - 0.5).clamp(0.0, (sh - 1) as f64);
        let y0 = sy.floor() as usize;
        let y1 = (y0 + 1).min(sh - 1);
        let fy = sy - y0 as f64;
        for col in 0..tw {
            let sx = ((col as f64 + 0.5) * scale_x - 0.5).clamp(0.0, (sw - 1) as f64);
            let x0 = sx.floor() as usize;
            let x1 = (x0 + 1).min(sw - 1);
            let fx = sx - x0 as f64;
            let top = slice.pixel(y0, x0) * (1.0 - fx) + slice.pixel(y0, x1) * fx;
            let bottom = slice.pixel(y1, x0) * (1.0 - fx) + slice.pixel(y1, x1) * fx;
            pixels.push(top * (1.0 - fy) + bottom * fy);
        }
    }
    Slice::new(pixels, th, tw, slice.index(), slice.scan_id())
        .expect("interpolation of finite pixels is finite")
}

/// Normalize a slice in place of its own statistics.
pub fn normalize(slice: &Slice, mode: Normalization) -> Slice {
    let pixels = slice.pixels();
    let n = pixels.len() as f64;
    let out: Vec<f64> = match mode {
        Normalization::MinMax => {
            let min = pixels.iter().cloned().fold(f64::INFINITY, f64::min);
            let max = pixels.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if max == min {
                vec![0.0; pixels.len()]
            } else {
                let span = max - min;
                pixels.iter().map(|&p| (p - min) / span).collect()
            }
        }
        Normalization::ZScore => {
            let mean = pixels.iter().sum::<f64>() / n;
            let var = pixels.iter().map(|&p| (p - mean).powi(2)).sum::<f64>() / n;
            let sd = var.sqrt();
            if sd == 0.0 {
                vec![0.0; pixels.len()]
            } else {
                pixels.iter().map(|&p| (p - mean) / sd).collect()
            }
        }
    };
    Slice::new(out, slice.height(), slice.width(), slice.index(), slice.scan_id())
        .expect("normalization of finite pixels is finite")
}

/// Row-major flattening into a feature vector of length h*w.
pub fn flatten_features(slice: &Slice) -> Vec<f64> {
    slice.pixels().to_vec()
}

/// Inverse of [`flatten_features`] for a known shape.
pub fn unflatten_features(
    features: &[f64],
    height: usize,
    width: usize,
    index: usize,
    scan_id: &str,
) -> crate::volume::Result<Slice> {
    Slice::new(features.to_vec(), height, width, index, scan_id)
}

/// Resize then normalize, the standard model-input path.
pub fn preprocess_slice(slice: &Slice, config: &PreprocessConfig) -> Slice {
    normalize(&resize_bilinear(slice, config.target), config.normalization)
}

/// Header of the features CSV: `scan_id,slice_index,px0,...,px{n-1}`.
pub fn features_csv_header(feature_len: usize) -> String {
    let mut s = String::from("scan_id,slice_index");
    for i in 0..feature_len {
        s.push_str(&format!(",px{i}"));
    }
    s
}

/// One features CSV row for a preprocessed slice.
pub fn features_csv_row(slice: &Slice) -> String {
    let mut s = format!("{},{}", slice.scan_id(), slice.index());
    for &p in slice.pixels() {
        s.push(',');
        s.push_str(&fmt_sig(p));
    }
    s
}

/// Sidecar JSON describing the feature layout next to a features CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeaturesSidecar {
    pub height: usize,
    pub width: usize,
    pub normalization: Normalization,
}

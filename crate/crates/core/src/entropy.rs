//! Shannon-entropy slice scoring and the three sampling regimes.
//!
//! A slice's information content is measured as the Shannon entropy (in
//! bits) of its min-max-scaled intensity histogram. Min-max scaling makes
//! the score invariant to positive affine intensity maps, so raw and
//! display-normalized scans rank identically.

use crate::format::fmt_sig;
use crate::volume::Slice;
use thiserror::Error;

/// Default histogram resolution, matching 8-bit display convention.
pub const DEFAULT_BIN_COUNT: usize = 256;

#[derive(Debug, Error)]
pub enum EntropyError {
    #[error("histogram has no mass")]
    EmptyHistogram,
    #[error("trimming {trim} slices consumes all {available} available")]
    OverTrimmed { trim: usize, available: usize },
}

impl EntropyError {
    pub fn code(&self) -> &'static str {
        match self {
            Self::EmptyHistogram => "entropy_sampler/EmptyHistogram",
            Self::OverTrimmed { .. } => "entropy_sampler/OverTrimmed",
        }
    }
}

pub type Result<T> = std::result::Result<T, EntropyError>;

/// A slice index paired with its entropy score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SliceScore {
    pub index: usize,
    pub entropy_bits: f64,
}

/// Which slices of a scan feed the classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleStrategy {
    /// The single slice with maximum entropy.
    MaxOne,
    /// The k highest-entropy slices (clamped to what is available).
    TopK(usize),
    /// Every slice, in index order.
    All,
}

impl std::str::FromStr for SampleStrategy {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let lower = s.to_ascii_lowercase();
        match lower.as_str() {
            "max1" | "maxone" => Ok(Self::MaxOne),
            "all" => Ok(Self::All),
            _ => {
                if let Some(k) = lower.strip_prefix("top") {
                    let k: usize = k
                        .parse()
                        .map_err(|_| format!("bad strategy '{s}' (expected max1, topN, or all)"))?;
                    if k == 0 {
                        return Err("topK requires k >= 1".to_string());
                    }
                    Ok(Self::TopK(k))
                } else {
                    Err(format!("bad strategy '{s}' (expected max1, topN, or all)"))
                }
            }
        }
    }
}

impl std::fmt::Display for SampleStrategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::MaxOne => write!(f, "max1"),
            Self::TopK(k) => write!(f, "top{k}"),
            Self::All => write!(f, "all"),
        }
    }
}

/// Full sampling configuration: regime plus head/tail trimming.
///
/// Trimming removes leading/trailing slices by index before any entropy
/// ranking; it defaults to off. 35 per side is the documented suggestion
/// for scans whose first and last ~30-40 frames are known to be empty.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampleSpec {
    pub strategy: SampleStrategy,
    pub trim_head: usize,
    pub trim_tail: usize,
    pub bin_count: usize,
}

impl Default for SampleSpec {
    fn default() -> Self {
        Self {
            strategy: SampleStrategy::All,
            trim_head: 0,
            trim_tail: 0,
            bin_count: DEFAULT_BIN_COUNT,
        }
    }
}

impl SampleSpec {
    pub fn new(strategy: SampleStrategy) -> Self {
        Self {
            strategy,
            ..Self::default()
        }
    }
}

/// Histogram of min-max-scaled intensities.
///
/// Values are scaled to [0, 1] over the slice itself and binned by
/// `floor(value * bin_count)` clamped to the last bin; a constant slice
/// lands entirely in bin 0.
pub fn intensity_histogram(slice: &Slice, bin_count: usize) -> Vec<u64> {
    assert!(bin_count >= 2, "bin_count must be at least 2");
    let mut hist = vec![0u64; bin_count];
    let pixels = slice.pixels();
    if pixels.is_empty() {
        return hist;
    }
    let min = pixels.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = pixels.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == min {
        hist[0] = pixels.len() as u64;
        return hist;
    }
    let span = max - min;
    for &p in pixels {
        let scaled = (p - min) / span;
        let bin = ((scaled * bin_count as f64).floor() as usize).min(bin_count - 1);
        hist[bin] += 1;
    }
    hist
}

/// Shannon entropy in bits: `-sum p_i log2 p_i` over nonzero bins.
pub fn shannon_entropy(hist: &[u64]) -> Result<f64> {
    let total: u64 = hist.iter().sum();
    if total == 0 {
        return Err(EntropyError::EmptyHistogram);
    }
    let total = total as f64;
    let mut h = 0.0;
    for &count in hist {
        if count > 0 {
            let p = count as f64 / total;
            h -= p * p.log2();
        }
    }
    Ok(h)
}

fn rank_refs<'a>(slices: &[&'a Slice], bin_count: usize) -> Vec<(&'a Slice, f64)> {
    let mut scored: Vec<(&Slice, f64)> = slices
        .iter()
        .map(|&s| {
            let h = shannon_entropy(&intensity_histogram(s, bin_count)).expect("slice has pixels");
            (s, h)
        })
        .collect();
    scored.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .expect("entropy is finite")
            .then(a.0.index().cmp(&b.0.index()))
    });
    scored
}

/// Score every slice and sort by descending entropy, ties broken by
/// ascending slice index.
pub fn rank_slices(slices: &[Slice], bin_count: usize) -> Vec<SliceScore> {
    let refs: Vec<&Slice> = slices.iter().collect();
    rank_refs(&refs, bin_count)
        .into_iter()
        .map(|(s, entropy_bits)| SliceScore {
            index: s.index(),
            entropy_bits,
        })
        .collect()
}

/// Apply trimming, then realize the sampling regime.
///
/// MaxOne returns the single highest-entropy slice; TopK returns
/// `min(k, remaining)` slices in descending-entropy order; All returns
/// the remaining slices in index order.
pub fn select_samples(slices: &[Slice], spec: &SampleSpec) -> Result<Vec<Slice>> {
    let trim = spec.trim_head + spec.trim_tail;
    if trim >= slices.len() {
        return Err(EntropyError::OverTrimmed {
            trim,
            available: slices.len(),
        });
    }
    let mut kept: Vec<&Slice> = slices.iter().collect();
    kept.sort_by_key(|s| s.index());
    let kept = &kept[spec.trim_head..kept.len() - spec.trim_tail];

    let take_top = |k: usize| -> Vec<Slice> {
        rank_refs(kept, spec.bin_count)
            .into_iter()
            .take(k)
            .map(|(s, _)| s.clone())
            .collect()
    };

    Ok(match spec.strategy {
        SampleStrategy::MaxOne => take_top(1),
        SampleStrategy::TopK(k) => {
            assert!(k >= 1, "TopK requires k >= 1");
            take_top(k)
        }
        SampleStrategy::All => kept.iter().map(|&s| s.clone()).collect(),
    })
}

/// Header of the sampling manifest CSV emitted by the `sample` command.
pub const SAMPLE_CSV_HEADER: &str = "scan_id,slice_index,entropy_bits,selected";

/// Manifest rows for one scan's slices: every slice scored, with a 0/1
/// selected flag per `spec`. Rows are ordered by slice index.
pub fn sample_manifest_rows(slices: &[Slice], spec: &SampleSpec) -> Result<String> {
    let selected = select_samples(slices, spec)?;
    let chosen: std::collections::HashSet<usize> = selected.iter().map(|s| s.index()).collect();
    let mut scores: Vec<(&Slice, f64)> = slices
        .iter()
        .map(|s| {
            let h = shannon_entropy(&intensity_histogram(s, spec.bin_count))?;
            Ok((s, h))
        })
        .collect::<Result<_>>()?;
    scores.sort_by_key(|(s, _)| s.index());
    let mut out = String::new();
    for (s, entropy_bits) in scores {
        out.push_str(&format!(
            "{},{},{},{}\n",
            s.scan_id(),
            s.index(),
            fmt_sig(entropy_bits),
            u8::from(chosen.contains(&s.index()))
        ));
    }
    Ok(out)
}

/// Complete single-scan manifest CSV (header plus rows).
pub fn sample_manifest_csv(slices: &[Slice], spec: &SampleSpec) -> Result<String> {
    Ok(format!(
        "{SAMPLE_CSV_HEADER}\n{}",
        sample_manifest_rows(slices, spec)?
    ))
}

//! Histogram distances and the weighted per-scale fusion.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::{BINS, BLOCKS, FEATURE_LEN};

/// The five supported block distances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum MetricId {
    /// `sum |a - b| / (1 + a + b)`
    #[default]
    D1,
    Euclidean,
    Manhattan,
    /// `sum |a - b| / (a + b)`; bins empty in both inputs contribute 0.
    Canberra,
    /// `1/2 sum (a - b)^2 / (a + b)`; bins empty in both inputs contribute 0.
    ChiSquare,
}

impl MetricId {
    pub const ALL: [MetricId; 5] = [
        MetricId::D1,
        MetricId::Euclidean,
        MetricId::Manhattan,
        MetricId::Canberra,
        MetricId::ChiSquare,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MetricId::D1 => "d1",
            MetricId::Euclidean => "euclidean",
            MetricId::Manhattan => "manhattan",
            MetricId::Canberra => "canberra",
            MetricId::ChiSquare => "chi_square",
        }
    }
}

impl fmt::Display for MetricId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MetricId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MetricId::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::UnknownMetric(s.to_string()))
    }
}

/// Distance between two histogram blocks of equal length.
pub fn block_distance(a: &[f64], b: &[f64], metric: MetricId) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(a.len(), b.len()));
    }
    Ok(block_distance_unchecked(a, b, metric))
}

// Every term is written so that swapping `a` and `b` yields bit-identical
// values: `x + y` commutes exactly, `(x - y)` only flips sign.
#[inline]
pub(crate) fn block_distance_unchecked(a: &[f64], b: &[f64], metric: MetricId) -> f64 {
    let pairs = a.iter().zip(b);
    match metric {
        MetricId::D1 => pairs.map(|(&x, &y)| ((x - y) / (1.0 + (x + y))).abs()).sum(),
        MetricId::Euclidean => pairs.map(|(&x, &y)| (x - y) * (x - y)).sum::<f64>().sqrt(),
        MetricId::Manhattan => pairs.map(|(&x, &y)| (x - y).abs()).sum(),
        MetricId::Canberra => pairs
            .map(|(&x, &y)| {
                let den = x + y;
                if den == 0.0 {
                    0.0
                } else {
                    ((x - y) / den).abs()
                }
            })
            .sum(),
        MetricId::ChiSquare => {
            0.5 * pairs
                .map(|(&x, &y)| {
                    let den = x + y;
                    if den == 0.0 {
                        0.0
                    } else {
                        (x - y) * (x - y) / den
                    }
                })
                .sum::<f64>()
        }
    }
}

/// Nonnegative fusion weights, one per feature block (raw, then each scale).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightVector([f64; BLOCKS]);

impl WeightVector {
    pub fn new(w: [f64; BLOCKS]) -> Result<Self> {
        if let Some(&bad) = w.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::NegativeWeight(bad));
        }
        if w.iter().all(|&v| v == 0.0) {
            return Err(Error::AllZeroWeights);
        }
        Ok(WeightVector(w))
    }

    /// `(1, 1, 1, 1)`: plain sum of the per-block distances.
    pub fn uniform() -> Self {
        WeightVector([1.0; BLOCKS])
    }

    /// `(1, 0, 0, 0)`: raw-image block only.
    pub fn raw_only() -> Self {
        WeightVector([1.0, 0.0, 0.0, 0.0])
    }

    pub fn as_array(&self) -> &[f64; BLOCKS] {
        &self.0
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        WeightVector::new(self.0.map(|v| v * c))
    }
}

/// `sum_j w_j d_j`, accumulated in block order. Every fused distance in the
/// crate goes through here so that precomputed and on-the-fly paths agree
/// bit for bit.
#[inline]
pub(crate) fn fuse(w: &[f64; BLOCKS], d: &[f64; BLOCKS]) -> f64 {
    let mut acc = 0.0;
    for j in 0..BLOCKS {
        acc += w[j] * d[j];
    }
    acc
}

#[inline]
pub(crate) fn block_distances(q: &[f64], f: &[f64], metric: MetricId) -> [f64; BLOCKS] {
    std::array::from_fn(|j| {
        let r = j * BINS..(j + 1) * BINS;
        block_distance_unchecked(&q[r.clone()], &f[r], metric)
    })
}

/// Weighted sum of per-block d1 distances between two 1024-long features.
pub fn combined_distance(q: &[f64], f: &[f64], w: &WeightVector) -> Result<f64> {
    combined_distance_with(q, f, w, MetricId::D1)
}

/// [`combined_distance`] with another block metric.
pub fn combined_distance_with(q: &[f64], f: &[f64], w: &WeightVector, metric: MetricId) -> Result<f64> {
    for len in [q.len(), f.len()] {
        if len != FEATURE_LEN {
            return Err(Error::LengthMismatch(len, FEATURE_LEN));
        }
    }
    Ok(fuse(&w.0, &block_distances(q, f, metric)))
}

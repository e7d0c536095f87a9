//! Distance functions between a data vector and a query vector.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{FairKnnError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum DistanceKind {
    Euclidean,
    Manhattan,
    /// `1 - cos(x, q)`, in `[0, 2]`.
    CosineBased,
    Minkowski(f64),
}

impl DistanceKind {
    pub fn minkowski(p: f64) -> Result<Self> {
        if p.is_finite() && p > 0.0 {
            Ok(Self::Minkowski(p))
        } else {
            Err(FairKnnError::Config(format!(
                "Minkowski order must be finite and positive, got {p}"
            )))
        }
    }
}

impl fmt::Display for DistanceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Euclidean => f.write_str("euclidean"),
            Self::Manhattan => f.write_str("manhattan"),
            Self::CosineBased => f.write_str("cosine"),
            Self::Minkowski(p) => write!(f, "minkowski:{p}"),
        }
    }
}

impl FromStr for DistanceKind {
    type Err = FairKnnError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "euclidean" | "l2" => Ok(Self::Euclidean),
            "manhattan" | "l1" => Ok(Self::Manhattan),
            "cosine" => Ok(Self::CosineBased),
            other => match other.strip_prefix("minkowski:") {
                Some(p) => {
                    let p: f64 = p
                        .parse()
                        .map_err(|_| FairKnnError::Config(format!("bad Minkowski order {p:?}")))?;
                    Self::minkowski(p)
                }
                None => Err(FairKnnError::Config(format!("unknown distance {s:?}"))),
            },
        }
    }
}

/// Distance between `x` and `q`.
///
/// Panics if the lengths differ. Cosine distance with a zero vector is an error.
pub fn distance(x: &[f64], q: &[f64], kind: DistanceKind) -> Result<f64> {
    assert_eq!(x.len(), q.len(), "dimension mismatch");
    match kind {
        DistanceKind::Euclidean => Ok(squared_euclidean(x, q).sqrt()),
        DistanceKind::Manhattan => Ok(x.iter().zip(q).map(|(a, b)| (a - b).abs()).sum()),
        DistanceKind::CosineBased => cosine_distance(x, q),
        DistanceKind::Minkowski(p) => {
            let s: f64 = x.iter().zip(q).map(|(a, b)| (a - b).abs().powf(p)).sum();
            Ok(s.powf(1.0 / p))
        }
    }
}

#[inline]
pub fn squared_euclidean(x: &[f64], q: &[f64]) -> f64 {
    x.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum()
}

#[inline]
pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

pub fn norm(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

fn cosine_distance(x: &[f64], q: &[f64]) -> Result<f64> {
    let nx = norm(x);
    let nq = norm(q);
    if nx == 0.0 || nq == 0.0 {
        return Err(FairKnnError::ZeroVector);
    }
    // 1 - cos(x, q) as half the squared distance between the unit vectors
    let half_sq: f64 = x
        .iter()
        .zip(q)
        .map(|(a, b)| {
            let d = a / nx - b / nq;
            d * d
        })
        .sum::<f64>()
        / 2.0;
    Ok(half_sq.min(2.0))
}

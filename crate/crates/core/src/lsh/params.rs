//! LSH parameters and their derivation from collision probabilities.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{FairKnnError, Result};
use crate::lsh::FamilyKind;

/// How `mu` and `ell` are chosen for each partition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TableSizing {
    Fixed { mu: usize, ell: usize },
    /// Per-partition values from the partition size and `(p1, p2)`.
    Derived,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LshParams {
    /// Near radius.
    pub r: f64,
    /// Approximation factor, `> 1`.
    pub c: f64,
    /// Bucket width of the p-stable family.
    pub w: f64,
    /// Failure budget in `(0, 1)`.
    pub delta: f64,
    /// Maximum number of near points a query asks for (`K`).
    pub max_near: usize,
    pub sizing: TableSizing,
    pub ell_max: usize,
    pub seed: u64,
}

pub const DEFAULT_ELL_MAX: usize = 512;

impl Default for LshParams {
    fn default() -> Self {
        Self {
            r: 1.0,
            c: 2.0,
            w: 4.0,
            delta: 0.1,
            max_near: 10,
            sizing: TableSizing::Fixed { mu: 2, ell: 16 },
            ell_max: DEFAULT_ELL_MAX,
            seed: 0,
        }
    }
}

impl LshParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(FairKnnError::LshParams(msg));
        if !(self.r.is_finite() && self.r > 0.0) {
            return bad(format!("R must be positive, got {}", self.r));
        }
        if !(self.c.is_finite() && self.c > 1.0) {
            return bad(format!("c must exceed 1, got {}", self.c));
        }
        if !(self.w.is_finite() && self.w > 0.0) {
            return bad(format!("w must be positive, got {}", self.w));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return bad(format!("delta must lie in (0, 1), got {}", self.delta));
        }
        if self.max_near == 0 {
            return bad("K must be at least 1".into());
        }
        if self.ell_max == 0 {
            return bad("ell_max must be at least 1".into());
        }
        if let TableSizing::Fixed { mu, ell } = self.sizing {
            if mu == 0 || ell == 0 {
                return bad(format!("mu and ell must be at least 1, got mu={mu} ell={ell}"));
            }
        }
        Ok(())
    }

    /// Near and far collision probabilities `(p1, p2)` for one base hash.
    pub fn collision_probabilities(&self, kind: FamilyKind) -> (f64, f64) {
        match kind {
            FamilyKind::PStableL2 => (
                pstable_collision_probability(self.r, self.w),
                pstable_collision_probability(self.c * self.r, self.w),
            ),
            FamilyKind::AngularSign => {
                // R is a cosine-based distance; far radius is capped at 2.
                let angle = |d: f64| (1.0 - d.min(2.0)).clamp(-1.0, 1.0).acos();
                (
                    angular_collision_probability(angle(self.r)),
                    angular_collision_probability(angle(self.c * self.r)),
                )
            }
        }
    }

    /// Concrete table layout for a partition of `n_pi` points.
    pub fn resolve(&self, n_pi: usize, kind: FamilyKind) -> Result<DerivedParams> {
        self.validate()?;
        match self.sizing {
            TableSizing::Fixed { mu, ell } => Ok(DerivedParams {
                mu,
                ell,
                surplus: false_positive_surplus(ell, self.delta),
                rho: None,
                clamped: false,
            }),
            TableSizing::Derived => {
                let (p1, p2) = self.collision_probabilities(kind);
                derive_params(n_pi, p1, p2, self.max_near, self.delta, self.ell_max)
            }
        }
    }
}

/// Table layout resolved for one partition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedParams {
    pub mu: usize,
    pub ell: usize,
    /// `ceil(2 ell / delta)`; the candidate cap is `k_pi + surplus`.
    pub surplus: usize,
    pub rho: Option<f64>,
    /// True when `ell` was cut down to `ell_max`.
    pub clamped: bool,
}

impl DerivedParams {
    pub fn candidate_cap(&self, k_pi: usize) -> usize {
        k_pi.saturating_add(self.surplus)
    }
}

/// `ceil(x)` that ignores representation error just above an integer.
fn ceil_tol(x: f64) -> f64 {
    (x - 1e-9).ceil()
}

pub fn false_positive_surplus(ell: usize, delta: f64) -> usize {
    let s = ceil_tol(2.0 * ell as f64 / delta);
    if s >= usize::MAX as f64 {
        usize::MAX
    } else {
        s as usize
    }
}

/// Concatenation length, table count and candidate surplus for a partition.
///
/// `mu = ceil(ln n / ln(1/p2))`, `rho = ln(1/p1) / ln(1/p2)`,
/// `ell = ceil(n^rho * ln(2K/delta))` clamped to `[1, ell_max]`.
pub fn derive_params(
    n_pi: usize,
    p1: f64,
    p2: f64,
    max_near: usize,
    delta: f64,
    ell_max: usize,
) -> Result<DerivedParams> {
    if !(0.0 < p2 && p2 < p1 && p1 < 1.0) {
        return Err(FairKnnError::LshParams(format!(
            "need 0 < p2 < p1 < 1, got p1={p1} p2={p2}"
        )));
    }
    if n_pi == 0 {
        return Err(FairKnnError::LshParams("partition is empty".into()));
    }
    if !(delta > 0.0 && delta < 1.0) || max_near == 0 || ell_max == 0 {
        return Err(FairKnnError::LshParams(format!(
            "bad delta={delta}, K={max_near} or ell_max={ell_max}"
        )));
    }
    let n = n_pi as f64;
    let inv_p2 = (1.0 / p2).ln();
    let mu = (ceil_tol(n.ln() / inv_p2) as usize).max(1);
    let rho = (1.0 / p1).ln() / inv_p2;
    let raw_ell = ceil_tol(n.powf(rho) * (2.0 * max_near as f64 / delta).ln()).max(1.0);
    let clamped = raw_ell > ell_max as f64;
    let ell = if clamped { ell_max } else { raw_ell as usize };
    Ok(DerivedParams {
        mu,
        ell,
        surplus: false_positive_surplus(ell, delta),
        rho: Some(rho),
        clamped,
    })
}

/// Collision probability of `floor((a.x + b) / w)` for two points at
/// Euclidean distance `dist`, with `a ~ N(0, I)` and `b ~ U[0, w)`.
pub fn pstable_collision_probability(dist: f64, w: f64) -> f64 {
    if dist <= 0.0 {
        return 1.0;
    }
    let t = w / dist;
    // 1 - 2 Phi(-t) - 2 / (sqrt(2 pi) t) (1 - exp(-t^2 / 2)),  Phi(-t) = erfc(t / sqrt 2) / 2
    let p = 1.0 - erfc(t / std::f64::consts::SQRT_2)
        - 2.0 / ((2.0 * PI).sqrt() * t) * (1.0 - (-t * t / 2.0).exp());
    p.clamp(0.0, 1.0)
}

/// Collision probability of one sign hash for two vectors at angle `theta`.
pub fn angular_collision_probability(theta: f64) -> f64 {
    1.0 - theta / PI
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Numerical quadrature of the p-stable collision integral
    /// `int_0^w (1/d) f(t/d) (1 - t/w) dt` with `f` the density of |N(0,1)|.
    fn quadrature(dist: f64, w: f64) -> f64 {
        let steps = 200_000;
        let h = w / steps as f64;
        let f = |t: f64| {
            let z = t / dist;
            (2.0 / (2.0 * PI).sqrt()) * (-z * z / 2.0).exp() / dist * (1.0 - t / w)
        };
        // Simpson's rule
        let mut s = f(0.0) + f(w);
        for i in 1..steps {
            let x = i as f64 * h;
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(x);
        }
        s * h / 3.0
    }

    #[test]
    fn pstable_closed_form_matches_quadrature() {
        for &(d, w) in &[(0.5, 4.0), (1.0, 4.0), (2.0, 1.0), (7.5, 1.0), (30.0, 2.0), (1.0, 0.3)] {
            let closed = pstable_collision_probability(d, w);
            let numeric = quadrature(d, w);
            assert!((closed - numeric).abs() < 1e-7, "d={d} w={w}: {closed} vs {numeric}");
        }
        assert_eq!(pstable_collision_probability(0.0, 1.0), 1.0);
        assert!(pstable_collision_probability(1.0, 4.0) > pstable_collision_probability(2.0, 4.0));
    }

    #[test]
    fn smallest_partition_has_mu_one() {
        let d = derive_params(1, 0.8, 0.3, 10, 0.1, 512).unwrap();
        assert_eq!(d.mu, 1);
        assert!(d.ell >= 1);
    }

    #[test]
    fn ell_follows_table_count_bound() {
        // rho = 0.5 exactly when p1 = p2^0.5
        let p2: f64 = 0.25;
        let p1 = p2.sqrt();
        let d = derive_params(10_000, p1, p2, 10, 0.1, usize::MAX).unwrap();
        let expected = (100.0 * 200f64.ln()).ceil() as usize;
        assert_eq!(expected, 530);
        assert_eq!(d.ell, expected);
        assert!(!d.clamped);
        assert!((d.rho.unwrap() - 0.5).abs() < 1e-12);
        // mu = ceil(ln 10000 / ln 4) = ceil(6.64) = 7
        assert_eq!(d.mu, 7);

        let clamped = derive_params(10_000, p1, p2, 10, 0.1, 512).unwrap();
        assert_eq!(clamped.ell, 512);
        assert!(clamped.clamped);
    }

    #[test]
    fn surplus_arithmetic() {
        assert_eq!(false_positive_surplus(16, 0.1), 320);
        assert_eq!(false_positive_surplus(1, 0.5), 4);
        assert_eq!(false_positive_surplus(3, 0.7), 9);
    }

    #[test]
    fn probability_order_is_checked() {
        assert!(derive_params(10, 0.3, 0.5, 10, 0.1, 512).is_err());
        assert!(derive_params(10, 1.0, 0.5, 10, 0.1, 512).is_err());
        assert!(derive_params(0, 0.8, 0.5, 10, 0.1, 512).is_err());
    }

    #[test]
    fn params_validation() {
        let mut p = LshParams::default();
        assert!(p.validate().is_ok());
        p.c = 1.0;
        assert!(p.validate().is_err());
        p = LshParams { delta: 1.0, ..LshParams::default() };
        assert!(p.validate().is_err());
        p = LshParams {
            sizing: TableSizing::Fixed { mu: 0, ell: 4 },
            ..LshParams::default()
        };
        assert!(p.validate().is_err());
    }

    #[test]
    fn angular_probabilities() {
        let p = LshParams {
            r: 0.1,
            c: 3.0,
            ..LshParams::default()
        };
        let (p1, p2) = p.collision_probabilities(FamilyKind::AngularSign);
        assert!((p1 - (1.0 - (0.9f64).acos() / PI)).abs() < 1e-12);
        assert!((p2 - (1.0 - (0.7f64).acos() / PI)).abs() < 1e-12);
        assert!(p1 > p2);
    }
}

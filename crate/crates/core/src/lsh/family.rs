use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::distance::{dot, norm, DistanceKind};
use crate::error::{FairKnnError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FamilyKind {
    /// `floor((a.x + b) / w)` for Euclidean distance.
    PStableL2,
    /// `sign(u.x)` for angular / cosine distance.
    AngularSign,
}

impl FamilyKind {
    pub fn for_distance(kind: DistanceKind) -> Result<Self> {
        match kind {
            DistanceKind::Euclidean => Ok(Self::PStableL2),
            DistanceKind::CosineBased => Ok(Self::AngularSign),
            other => Err(FairKnnError::UnsupportedFamily(other.to_string())),
        }
    }
}

/// Bucket key of one table: `mu` bucket indices, or `mu` sign bits.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CompoundKey {
    Buckets(Box<[i64]>),
    Signs(u64),
}

/// `ell * mu` random base hashes, stored row-major as `[table][hash][dim]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HashFamily {
    kind: FamilyKind,
    dim: usize,
    mu: usize,
    ell: usize,
    w: f64,
    projections: Vec<f64>,
    offsets: Vec<f64>,
}

impl HashFamily {
    pub fn sample(kind: FamilyKind, dim: usize, mu: usize, ell: usize, w: f64, seed: u64) -> Result<Self> {
        if kind == FamilyKind::AngularSign && mu > 64 {
            return Err(FairKnnError::LshParams(format!(
                "sign keys hold at most 64 bits, mu = {mu}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut projections = Vec::with_capacity(ell * mu * dim);
        let mut offsets = Vec::new();
        for _ in 0..ell * mu {
            let start = projections.len();
            projections.extend((0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)));
            match kind {
                FamilyKind::PStableL2 => offsets.push(rng.random::<f64>() * w),
                FamilyKind::AngularSign => {
                    let row = &mut projections[start..];
                    let n = norm(row);
                    if n > 0.0 {
                        row.iter_mut().for_each(|v| *v /= n);
                    }
                }
            }
        }
        Self::from_parts(kind, dim, mu, ell, w, projections, offsets)
    }

    /// Builds a family from explicit projection vectors and offsets.
    pub fn from_parts(
        kind: FamilyKind,
        dim: usize,
        mu: usize,
        ell: usize,
        w: f64,
        projections: Vec<f64>,
        offsets: Vec<f64>,
    ) -> Result<Self> {
        if mu == 0 || ell == 0 {
            return Err(FairKnnError::LshParams("mu and ell must be at least 1".into()));
        }
        if projections.len() != ell * mu * dim {
            return Err(FairKnnError::LshParams(format!(
                "expected {} projection entries, got {}",
                ell * mu * dim,
                projections.len()
            )));
        }
        let want_offsets = match kind {
            FamilyKind::PStableL2 => ell * mu,
            FamilyKind::AngularSign => 0,
        };
        if offsets.len() != want_offsets {
            return Err(FairKnnError::LshParams(format!(
                "expected {want_offsets} offsets, got {}",
                offsets.len()
            )));
        }
        if kind == FamilyKind::PStableL2 && !(w.is_finite() && w > 0.0) {
            return Err(FairKnnError::LshParams(format!("bucket width must be positive, got {w}")));
        }
        Ok(Self {
            kind,
            dim,
            mu,
            ell,
            w,
            projections,
            offsets,
        })
    }

    pub fn kind(&self) -> FamilyKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn mu(&self) -> usize {
        self.mu
    }

    pub fn ell(&self) -> usize {
        self.ell
    }

    pub fn w(&self) -> f64 {
        self.w
    }

    pub(crate) fn projections(&self) -> &[f64] {
        &self.projections
    }

    pub(crate) fn offsets(&self) -> &[f64] {
        &self.offsets
    }

    fn row(&self, table: usize, i: usize) -> &[f64] {
        let start = (table * self.mu + i) * self.dim;
        &self.projections[start..start + self.dim]
    }

    /// Key of `x` in table `table`.
    pub fn compound_hash(&self, x: &[f64], table: usize) -> CompoundKey {
        debug_assert_eq!(x.len(), self.dim);
        match self.kind {
            FamilyKind::PStableL2 => CompoundKey::Buckets(
                (0..self.mu)
                    .map(|i| {
                        let b = self.offsets[table * self.mu + i];
                        ((dot(self.row(table, i), x) + b) / self.w).floor() as i64
                    })
                    .collect(),
            ),
            FamilyKind::AngularSign => {
                let mut bits = 0u64;
                for i in 0..self.mu {
                    if dot(self.row(table, i), x) >= 0.0 {
                        bits |= 1 << i;
                    }
                }
                CompoundKey::Signs(bits)
            }
        }
    }
}

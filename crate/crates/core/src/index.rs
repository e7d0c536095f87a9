//! The partitioned LSH index over a dataset, and its on-disk format.
//!
//! Index file (little-endian): magic `FKNNINDX`, version `u32`, dataset
//! fingerprint (`n: u64`, `d: u32`, content hash `u64`), `m: u32`, distance,
//! schema, LSH parameters, then every partition in ascending bitmap order
//! with its members, resolved table layout, hash family and tables. Buckets
//! are written sorted by key so equal indexes give equal files.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};

use crate::codec;
use crate::dataset::Dataset;
use crate::distance::DistanceKind;
use crate::error::{FairKnnError, Result};
use crate::exec::Exec;
use crate::lsh::{
    mix_seed, Bucket, CompoundKey, DerivedParams, FamilyKind, HashFamily, LshParams, LshTables, PartitionLsh,
    TableSizing,
};
use crate::partition::{build_registry, BitLayout, PartitionBitmap, PartitionRegistry};
use crate::types::{AttributeSchema, RecordId};

pub const INDEX_MAGIC: &[u8; 8] = b"FKNNINDX";
pub const INDEX_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct FairIndex {
    schema: AttributeSchema,
    layout: BitLayout,
    distance: DistanceKind,
    family_kind: FamilyKind,
    params: LshParams,
    registry: PartitionRegistry,
    partitions: BTreeMap<PartitionBitmap, PartitionLsh>,
    dim: usize,
    dataset_len: usize,
    dataset_hash: u64,
}

impl FairIndex {
    pub fn build(ds: &Dataset, params: &LshParams, exec: Exec) -> Result<Self> {
        params.validate()?;
        let family_kind = FamilyKind::for_distance(ds.distance())?;
        let layout = BitLayout::new(ds.schema())?;
        let registry = build_registry(ds.records(), &layout)?;
        let groups: Vec<(PartitionBitmap, &[RecordId])> = registry.iter().collect();
        let built = exec.map(&groups, |&(b, members)| {
            PartitionLsh::build(
                members,
                |id| ds.embedding(id),
                ds.dim(),
                params,
                family_kind,
                mix_seed(params.seed, b.0),
            )
            .map(|p| (b, p))
        });
        let partitions = built.into_iter().collect::<Result<BTreeMap<_, _>>>()?;
        Ok(Self {
            schema: ds.schema().clone(),
            layout,
            distance: ds.distance(),
            family_kind,
            params: params.clone(),
            registry,
            partitions,
            dim: ds.dim(),
            dataset_len: ds.len(),
            dataset_hash: ds.fingerprint(),
        })
    }

    pub fn schema(&self) -> &AttributeSchema {
        &self.schema
    }

    pub fn layout(&self) -> &BitLayout {
        &self.layout
    }

    pub fn distance(&self) -> DistanceKind {
        self.distance
    }

    pub fn family_kind(&self) -> FamilyKind {
        self.family_kind
    }

    pub fn params(&self) -> &LshParams {
        &self.params
    }

    pub fn registry(&self) -> &PartitionRegistry {
        &self.registry
    }

    pub fn partition(&self, b: PartitionBitmap) -> Option<&PartitionLsh> {
        self.partitions.get(&b)
    }

    pub fn partitions(&self) -> impl Iterator<Item = (PartitionBitmap, &PartitionLsh)> {
        self.partitions.iter().map(|(b, p)| (*b, p))
    }

    /// Partitions whose derived table count was clamped to `ell_max`.
    pub fn clamped_partitions(&self) -> usize {
        self.partitions.values().filter(|p| p.params.clamped).count()
    }

    pub fn total_entries(&self) -> usize {
        self.partitions.values().map(|p| p.tables.entry_count()).sum()
    }

    /// Errors unless `ds` is the dataset this index was built from.
    pub fn check_dataset(&self, ds: &Dataset) -> Result<()> {
        if ds.len() != self.dataset_len || ds.dim() != self.dim || ds.fingerprint() != self.dataset_hash {
            return Err(FairKnnError::Format(
                "index was built from a different dataset".into(),
            ));
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(&mut BufReader::new(File::open(path)?))
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(INDEX_MAGIC)?;
        w.write_u32::<LE>(INDEX_VERSION)?;
        w.write_u64::<LE>(self.dataset_len as u64)?;
        w.write_u32::<LE>(self.dim as u32)?;
        w.write_u64::<LE>(self.dataset_hash)?;
        w.write_u32::<LE>(self.schema.len() as u32)?;
        codec::write_distance(w, self.distance)?;
        codec::write_schema(w, &self.schema)?;
        write_params(w, &self.params)?;
        w.write_u64::<LE>(self.partitions.len() as u64)?;
        for (b, members) in self.registry.iter() {
            let p = &self.partitions[&b];
            w.write_u64::<LE>(b.0)?;
            w.write_u64::<LE>(members.len() as u64)?;
            for &id in members {
                w.write_u64::<LE>(id)?;
            }
            write_derived(w, &p.params)?;
            write_family(w, &p.family)?;
            write_tables(w, &p.tables)?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        codec::check_magic(r, INDEX_MAGIC, INDEX_VERSION, "index")?;
        let dataset_len = codec::read_len(r)?;
        let dim = r.read_u32::<LE>()? as usize;
        let dataset_hash = r.read_u64::<LE>()?;
        let m = r.read_u32::<LE>()? as usize;
        let distance = codec::read_distance(r)?;
        let schema = codec::read_schema(r, m)?;
        let params = read_params(r)?;
        let layout = BitLayout::new(&schema)?;
        let family_kind = FamilyKind::for_distance(distance)?;
        let count = codec::read_len(r)?;
        let mut members_by_partition = BTreeMap::new();
        let mut partitions = BTreeMap::new();
        for _ in 0..count {
            let b = PartitionBitmap(r.read_u64::<LE>()?);
            crate::partition::decode_full(b, &layout)?;
            let n = codec::read_len(r)?;
            let members = (0..n).map(|_| r.read_u64::<LE>()).collect::<std::io::Result<Vec<_>>>()?;
            let derived = read_derived(r)?;
            let family = read_family(r)?;
            let tables = read_tables(r, family.kind())?;
            members_by_partition.insert(b, members);
            partitions.insert(
                b,
                PartitionLsh {
                    family,
                    tables,
                    params: derived,
                },
            );
        }
        Ok(Self {
            schema,
            layout,
            distance,
            family_kind,
            params,
            registry: PartitionRegistry::from_map(members_by_partition),
            partitions,
            dim,
            dataset_len,
            dataset_hash,
        })
    }
}

fn write_params<W: Write>(w: &mut W, p: &LshParams) -> Result<()> {
    for x in [p.r, p.c, p.w, p.delta] {
        w.write_f64::<LE>(x)?;
    }
    w.write_u64::<LE>(p.max_near as u64)?;
    match p.sizing {
        TableSizing::Fixed { mu, ell } => {
            w.write_u8(0)?;
            w.write_u64::<LE>(mu as u64)?;
            w.write_u64::<LE>(ell as u64)?;
        }
        TableSizing::Derived => {
            w.write_u8(1)?;
            w.write_u64::<LE>(0)?;
            w.write_u64::<LE>(0)?;
        }
    }
    w.write_u64::<LE>(p.ell_max as u64)?;
    w.write_u64::<LE>(p.seed)?;
    Ok(())
}

fn read_params<R: Read>(r: &mut R) -> Result<LshParams> {
    let r_ = r.read_f64::<LE>()?;
    let c = r.read_f64::<LE>()?;
    let w = r.read_f64::<LE>()?;
    let delta = r.read_f64::<LE>()?;
    let max_near = r.read_u64::<LE>()? as usize;
    let tag = r.read_u8()?;
    let mu = r.read_u64::<LE>()? as usize;
    let ell = r.read_u64::<LE>()? as usize;
    let sizing = match tag {
        0 => TableSizing::Fixed { mu, ell },
        1 => TableSizing::Derived,
        t => return Err(FairKnnError::Format(format!("unknown sizing tag {t}"))),
    };
    let ell_max = r.read_u64::<LE>()? as usize;
    let seed = r.read_u64::<LE>()?;
    let params = LshParams {
        r: r_,
        c,
        w,
        delta,
        max_near,
        sizing,
        ell_max,
        seed,
    };
    params.validate()?;
    Ok(params)
}

fn write_derived<W: Write>(w: &mut W, d: &DerivedParams) -> Result<()> {
    w.write_u64::<LE>(d.mu as u64)?;
    w.write_u64::<LE>(d.ell as u64)?;
    w.write_u64::<LE>(d.surplus as u64)?;
    w.write_u8(d.rho.is_some() as u8)?;
    w.write_f64::<LE>(d.rho.unwrap_or(0.0))?;
    w.write_u8(d.clamped as u8)?;
    Ok(())
}

fn read_derived<R: Read>(r: &mut R) -> Result<DerivedParams> {
    let mu = r.read_u64::<LE>()? as usize;
    let ell = r.read_u64::<LE>()? as usize;
    let surplus = r.read_u64::<LE>()? as usize;
    let has_rho = r.read_u8()? != 0;
    let rho = r.read_f64::<LE>()?;
    let clamped = r.read_u8()? != 0;
    Ok(DerivedParams {
        mu,
        ell,
        surplus,
        rho: has_rho.then_some(rho),
        clamped,
    })
}

fn write_family<W: Write>(w: &mut W, f: &HashFamily) -> Result<()> {
    w.write_u8(match f.kind() {
        FamilyKind::PStableL2 => 0,
        FamilyKind::AngularSign => 1,
    })?;
    w.write_u64::<LE>(f.dim() as u64)?;
    w.write_u64::<LE>(f.mu() as u64)?;
    w.write_u64::<LE>(f.ell() as u64)?;
    w.write_f64::<LE>(f.w())?;
    for &x in f.projections() {
        w.write_f64::<LE>(x)?;
    }
    for &x in f.offsets() {
        w.write_f64::<LE>(x)?;
    }
    Ok(())
}

fn read_family<R: Read>(r: &mut R) -> Result<HashFamily> {
    let kind = match r.read_u8()? {
        0 => FamilyKind::PStableL2,
        1 => FamilyKind::AngularSign,
        t => return Err(FairKnnError::Format(format!("unknown family tag {t}"))),
    };
    let dim = codec::read_len(r)?;
    let mu = codec::read_len(r)?;
    let ell = codec::read_len(r)?;
    let w = r.read_f64::<LE>()?;
    let read_f64s = |r: &mut R, n: usize| (0..n).map(|_| r.read_f64::<LE>()).collect::<std::io::Result<Vec<_>>>();
    let projections = read_f64s(r, ell * mu * dim)?;
    let offsets = match kind {
        FamilyKind::PStableL2 => read_f64s(r, ell * mu)?,
        FamilyKind::AngularSign => Vec::new(),
    };
    HashFamily::from_parts(kind, dim, mu, ell, w, projections, offsets)
}

fn write_tables<W: Write>(w: &mut W, t: &LshTables) -> Result<()> {
    w.write_u64::<LE>(t.num_tables() as u64)?;
    for j in 0..t.num_tables() {
        let mut buckets: Vec<_> = t.table(j).iter().collect();
        buckets.sort_by(|a, b| a.0.cmp(b.0));
        w.write_u64::<LE>(buckets.len() as u64)?;
        for (key, ids) in buckets {
            match key {
                CompoundKey::Buckets(parts) => {
                    w.write_u8(0)?;
                    w.write_u64::<LE>(parts.len() as u64)?;
                    for &p in parts.iter() {
                        w.write_i64::<LE>(p)?;
                    }
                }
                CompoundKey::Signs(bits) => {
                    w.write_u8(1)?;
                    w.write_u64::<LE>(*bits)?;
                }
            }
            w.write_u64::<LE>(ids.len() as u64)?;
            for &id in ids {
                w.write_u64::<LE>(id)?;
            }
        }
    }
    Ok(())
}

fn read_tables<R: Read>(r: &mut R, kind: FamilyKind) -> Result<LshTables> {
    let n_tables = codec::read_len(r)?;
    let mut tables = Vec::with_capacity(n_tables);
    for _ in 0..n_tables {
        let n_buckets = codec::read_len(r)?;
        let mut table = Bucket::default();
        for _ in 0..n_buckets {
            let key = match (r.read_u8()?, kind) {
                (0, FamilyKind::PStableL2) => {
                    let len = codec::read_len(r)?;
                    let parts = (0..len).map(|_| r.read_i64::<LE>()).collect::<std::io::Result<Vec<_>>>()?;
                    CompoundKey::Buckets(parts.into())
                }
                (1, FamilyKind::AngularSign) => CompoundKey::Signs(r.read_u64::<LE>()?),
                (t, _) => return Err(FairKnnError::Format(format!("bucket key tag {t} does not match family"))),
            };
            let len = codec::read_len(r)?;
            let ids = (0..len).map(|_| r.read_u64::<LE>()).collect::<std::io::Result<Vec<_>>>()?;
            table.insert(key, ids);
        }
        tables.push(table);
    }
    Ok(LshTables::from_tables(tables))
}

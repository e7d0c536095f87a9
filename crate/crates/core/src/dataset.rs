//! In-memory datasets and their CSV / packed-binary file formats.
//!
//! CSV: a header `id,attr:<name>,...,vec:<d>` followed by rows of
//! `id, <m attribute strings>, <d floats>`. Attribute values get indices in
//! order of first appearance.
//!
//! Packed binary (little-endian): magic `FKNNDSET`, version `u32`, `n: u64`,
//! `d: u32`, `m: u32`, distance (tag `u8`, Minkowski order `f64`), the
//! schema (per attribute: name, value count `u32`, value names; strings are
//! `u32` length + UTF-8), then `n` records of `id: u64`, `d` x `f64`,
//! `m` x `u32`.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};

use crate::codec::{self, Fnv64};
use crate::distance::DistanceKind;
use crate::error::{FairKnnError, Result};
use crate::types::{Attribute, AttributeSchema, RecordId, ValueIndex, VectorRecord};

pub const DATASET_MAGIC: &[u8; 8] = b"FKNNDSET";
pub const DATASET_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    schema: AttributeSchema,
    dim: usize,
    distance: DistanceKind,
    records: Vec<VectorRecord>,
    positions: HashMap<RecordId, usize>,
}

impl Dataset {
    pub fn new(
        schema: AttributeSchema,
        dim: usize,
        distance: DistanceKind,
        records: Vec<VectorRecord>,
    ) -> Result<Self> {
        let mut positions = HashMap::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            if r.embedding.len() != dim {
                return Err(FairKnnError::Record {
                    id: r.id,
                    reason: format!("embedding has {} entries, expected {dim}", r.embedding.len()),
                });
            }
            schema.check_attrs(&r.attrs).map_err(|e| FairKnnError::Record {
                id: r.id,
                reason: e.to_string(),
            })?;
            if positions.insert(r.id, i).is_some() {
                return Err(FairKnnError::Record {
                    id: r.id,
                    reason: "duplicate id".into(),
                });
            }
        }
        Ok(Self {
            schema,
            dim,
            distance,
            records,
            positions,
        })
    }

    pub fn schema(&self) -> &AttributeSchema {
        &self.schema
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn distance(&self) -> DistanceKind {
        self.distance
    }

    pub fn with_distance(mut self, distance: DistanceKind) -> Self {
        self.distance = distance;
        self
    }

    pub fn records(&self) -> &[VectorRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, id: RecordId) -> Option<&VectorRecord> {
        self.positions.get(&id).map(|&i| &self.records[i])
    }

    /// Embedding of a record known to exist.
    pub fn embedding(&self, id: RecordId) -> &[f64] {
        &self.records[self.positions[&id]].embedding
    }

    /// Fraction of records holding `value` on `attr`, for every attribute and value.
    pub fn marginals(&self) -> Vec<Vec<f64>> {
        let mut counts: Vec<Vec<usize>> = self.schema.domain_sizes().iter().map(|&s| vec![0; s]).collect();
        for r in &self.records {
            for (j, &v) in r.attrs.iter().enumerate() {
                counts[j][v as usize] += 1;
            }
        }
        let n = self.records.len().max(1) as f64;
        counts
            .into_iter()
            .map(|c| c.into_iter().map(|x| x as f64 / n).collect())
            .collect()
    }

    /// Order-sensitive hash of ids, embeddings and attributes.
    pub fn fingerprint(&self) -> u64 {
        let mut h = Fnv64::default();
        for r in &self.records {
            h.update(&r.id.to_le_bytes());
            for x in &r.embedding {
                h.update(&x.to_le_bytes());
            }
            for a in &r.attrs {
                h.update(&a.to_le_bytes());
            }
        }
        h.finish()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetFormat {
    Csv,
    Binary,
}

impl DatasetFormat {
    /// `.csv` means CSV, anything else the packed binary format.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => Self::Csv,
            _ => Self::Binary,
        }
    }
}

/// Loads a dataset; CSV carries no distance so `csv_distance` is used for it.
pub fn ingest(path: &Path, format: DatasetFormat, csv_distance: DistanceKind) -> Result<Dataset> {
    let file = File::open(path)?;
    match format {
        DatasetFormat::Csv => read_csv(BufReader::new(file), csv_distance),
        DatasetFormat::Binary => read_binary(&mut BufReader::new(file)),
    }
}

pub fn export(ds: &Dataset, path: &Path, format: DatasetFormat) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    match format {
        DatasetFormat::Csv => write_csv(ds, &mut out)?,
        DatasetFormat::Binary => write_binary(ds, &mut out)?,
    }
    out.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(input: R, distance: DistanceKind) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let mut rows = reader.records();
    let header = match rows.next() {
        Some(h) => h?,
        None => return Err(FairKnnError::Parse { line: 1, reason: "empty file".into() }),
    };
    let bad_header = |reason: String| FairKnnError::Parse { line: 1, reason };
    if header.get(0) != Some("id") {
        return Err(bad_header("first header column must be `id`".into()));
    }
    let mut names = Vec::new();
    let mut dim = None;
    for (i, col) in header.iter().enumerate().skip(1) {
        if let Some(name) = col.strip_prefix("attr:") {
            if dim.is_some() {
                return Err(bad_header("`attr:` columns must precede `vec:`".into()));
            }
            names.push(name.to_string());
        } else if let Some(d) = col.strip_prefix("vec:") {
            if i != header.len() - 1 {
                return Err(bad_header("`vec:<d>` must be the last header column".into()));
            }
            dim = Some(d.parse::<usize>().map_err(|_| bad_header(format!("bad dimension {d:?}")))?);
        } else {
            return Err(bad_header(format!("unexpected header column {col:?}")));
        }
    }
    let dim = dim.ok_or_else(|| bad_header("missing `vec:<d>` column".into()))?;
    let m = names.len();
    let mut domains: Vec<Vec<String>> = vec![Vec::new(); m];
    let mut lookup: Vec<HashMap<String, ValueIndex>> = vec![HashMap::new(); m];
    let mut records = Vec::new();
    for row in rows {
        let row = row?;
        let line = row.position().map(|p| p.line() as usize).unwrap_or(0);
        let err = |reason: String| FairKnnError::Parse { line, reason };
        if row.len() != 1 + m + dim {
            return Err(err(format!("expected {} fields, found {}", 1 + m + dim, row.len())));
        }
        let id: RecordId = row[0].parse().map_err(|_| err(format!("bad id {:?}", &row[0])))?;
        let mut attrs = Vec::with_capacity(m);
        for j in 0..m {
            let value = &row[1 + j];
            let next = domains[j].len() as ValueIndex;
            let idx = *lookup[j].entry(value.to_string()).or_insert_with(|| {
                domains[j].push(value.to_string());
                next
            });
            attrs.push(idx);
        }
        let embedding = (0..dim)
            .map(|i| {
                let s = &row[1 + m + i];
                s.parse::<f64>().map_err(|_| err(format!("bad number {s:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        records.push(VectorRecord::new(id, embedding, attrs));
    }
    if records.is_empty() {
        return Err(FairKnnError::Parse { line: 2, reason: "no records".into() });
    }
    let schema = AttributeSchema::new(
        names
            .into_iter()
            .zip(domains)
            .map(|(name, values)| Attribute { name, values })
            .collect(),
    )?;
    Dataset::new(schema, dim, distance, records)
}

pub fn write_csv<W: Write>(ds: &Dataset, out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().flexible(true).from_writer(out);
    let mut header = vec!["id".to_string()];
    header.extend(ds.schema.attributes().iter().map(|a| format!("attr:{}", a.name)));
    header.push(format!("vec:{}", ds.dim));
    w.write_record(&header)?;
    for r in &ds.records {
        let mut row = vec![r.id.to_string()];
        for (j, &v) in r.attrs.iter().enumerate() {
            row.push(ds.schema.attributes()[j].values[v as usize].clone());
        }
        row.extend(r.embedding.iter().map(|x| x.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_binary<W: Write>(ds: &Dataset, w: &mut W) -> Result<()> {
    w.write_all(DATASET_MAGIC)?;
    w.write_u32::<LE>(DATASET_VERSION)?;
    w.write_u64::<LE>(ds.records.len() as u64)?;
    w.write_u32::<LE>(ds.dim as u32)?;
    w.write_u32::<LE>(ds.schema.len() as u32)?;
    codec::write_distance(w, ds.distance)?;
    codec::write_schema(w, &ds.schema)?;
    for r in &ds.records {
        w.write_u64::<LE>(r.id)?;
        for &x in &r.embedding {
            w.write_f64::<LE>(x)?;
        }
        for &a in &r.attrs {
            w.write_u32::<LE>(a)?;
        }
    }
    Ok(())
}

pub fn read_binary<R: Read>(r: &mut R) -> Result<Dataset> {
    codec::check_magic(r, DATASET_MAGIC, DATASET_VERSION, "dataset")?;
    let n = codec::read_len(r)?;
    let dim = r.read_u32::<LE>()? as usize;
    let m = r.read_u32::<LE>()? as usize;
    let distance = codec::read_distance(r)?;
    let schema = codec::read_schema(r, m)?;
    let mut records = Vec::with_capacity(n.min(1 << 24));
    for _ in 0..n {
        let id = r.read_u64::<LE>()?;
        let embedding = (0..dim).map(|_| r.read_f64::<LE>()).collect::<std::io::Result<Vec<_>>>()?;
        let attrs = (0..m).map(|_| r.read_u32::<LE>()).collect::<std::io::Result<Vec<_>>>()?;
        records.push(VectorRecord::new(id, embedding, attrs));
    }
    Dataset::new(schema, dim, distance, records)
}

//! `MSRD` sample-pair files (little-endian).
//!
//! Header: magic `MSRD`, `u32` version, `u64` patch size `m`, `u32` vertex
//! count, `u32` samples per neighborhood, `u32` training samples per
//! neighborhood, `u32` offline basis count, `u8` experiment tag (0 steady,
//! 1 time-dependent), `u32` time step. Records follow sample-major, each as
//! `u32` vertex, `u64` seed, `f64[m]` permeability patch, `f64[m]` basis patch.

use std::io::{Read, Write};

use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"MSRD";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetMode {
    Steady,
    /// Enrichment event at this 1-based time step.
    Time(usize),
}

impl DatasetMode {
    fn tags(self) -> (u8, u32) {
        match self {
            Self::Steady => (0, 0),
            Self::Time(s) => (1, s as u32),
        }
    }

    fn from_tags(tag: u8, step: u32) -> Result<Self> {
        match tag {
            0 => Ok(Self::Steady),
            1 => Ok(Self::Time(step as usize)),
            t => Err(Error::Format(format!("unknown experiment tag {t}"))),
        }
    }

    /// File stem used by the CLI, e.g. `steady_nb4` or `time_nb4_s10`.
    pub fn stem(self, nb: usize) -> String {
        match self {
            Self::Steady => format!("steady_nb{nb}"),
            Self::Time(s) => format!("time_nb{nb}_s{s}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DatasetHeader {
    pub patch_size: usize,
    pub n_vertices: usize,
    pub samples_per_neighborhood: usize,
    pub train_samples: usize,
    pub nb: usize,
    pub mode: DatasetMode,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetRecord {
    pub vertex: u32,
    pub seed: u64,
    pub kappa: Vec<f64>,
    pub phi: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetFile {
    pub header: DatasetHeader,
    pub records: Vec<DatasetRecord>,
}

impl DatasetFile {
    pub fn new(header: DatasetHeader, records: Vec<DatasetRecord>) -> Result<Self> {
        let file = Self { header, records };
        file.check()?;
        Ok(file)
    }

    fn check(&self) -> Result<()> {
        let h = &self.header;
        if h.train_samples > h.samples_per_neighborhood {
            return Err(Error::Format(format!(
                "{} training samples exceed {} samples per neighborhood",
                h.train_samples, h.samples_per_neighborhood
            )));
        }
        let expected = h.n_vertices * h.samples_per_neighborhood;
        if self.records.len() != expected {
            return Err(Error::Format(format!(
                "dataset has {} records, header implies {expected}",
                self.records.len()
            )));
        }
        if let Some(r) = self
            .records
            .iter()
            .find(|r| r.kappa.len() != h.patch_size || r.phi.len() != h.patch_size)
        {
            return Err(Error::Dimension {
                expected: h.patch_size,
                actual: r.kappa.len().min(r.phi.len()),
            });
        }
        Ok(())
    }

    fn split_at(&self) -> usize {
        self.header.train_samples * self.header.n_vertices
    }

    pub fn train_records(&self) -> &[DatasetRecord] {
        &self.records[..self.split_at()]
    }

    pub fn test_records(&self) -> &[DatasetRecord] {
        &self.records[self.split_at()..]
    }

    /// Records of one sample, in vertex order.
    pub fn sample_records(&self, sample: usize) -> &[DatasetRecord] {
        let nv = self.header.n_vertices;
        &self.records[sample * nv..(sample + 1) * nv]
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        self.check()?;
        let h = &self.header;
        let (tag, step) = h.mode.tags();
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(h.patch_size as u64).to_le_bytes())?;
        for v in [h.n_vertices, h.samples_per_neighborhood, h.train_samples, h.nb] {
            w.write_all(&(v as u32).to_le_bytes())?;
        }
        w.write_all(&[tag])?;
        w.write_all(&step.to_le_bytes())?;
        for r in &self.records {
            w.write_all(&r.vertex.to_le_bytes())?;
            w.write_all(&r.seed.to_le_bytes())?;
            for x in r.kappa.iter().chain(&r.phi) {
                w.write_all(&x.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read<R: Read>(mut r: R) -> Result<Self> {
        let mut buf = Vec::new();
        r.read_to_end(&mut buf)?;
        let mut cur = Cursor { buf: &buf, pos: 0 };
        if cur.take(4)? != MAGIC {
            return Err(Error::Format("missing MSRD magic".into()));
        }
        let version = cur.u32()?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported MSRD version {version}")));
        }
        let patch_size = cur.u64()? as usize;
        let n_vertices = cur.u32()? as usize;
        let samples_per_neighborhood = cur.u32()? as usize;
        let train_samples = cur.u32()? as usize;
        let nb = cur.u32()? as usize;
        let tag = cur.take(1)?[0];
        let mode = DatasetMode::from_tags(tag, cur.u32()?)?;
        let header = DatasetHeader {
            patch_size,
            n_vertices,
            samples_per_neighborhood,
            train_samples,
            nb,
            mode,
        };
        let n_records = n_vertices * samples_per_neighborhood;
        let record_bytes = 12 + 16 * patch_size;
        if cur.remaining() != n_records * record_bytes {
            return Err(Error::Format(format!(
                "expected {n_records} records of {record_bytes} bytes, found {} bytes",
                cur.remaining()
            )));
        }
        let mut records = Vec::with_capacity(n_records);
        for _ in 0..n_records {
            let vertex = cur.u32()?;
            let seed = cur.u64()?;
            let kappa = cur.f64s(patch_size)?;
            let phi = cur.f64s(patch_size)?;
            records.push(DatasetRecord {
                vertex,
                seed,
                kappa,
                phi,
            });
        }
        Self::new(header, records)
    }
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(Error::Format("truncated dataset file".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        Ok(self
            .take(8 * n)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
}

//! `HFDS` shard files.
//!
//! Little-endian throughout. Header (24 bytes): magic `HFDS`, u32 version,
//! u64 record_count, u32 samples_per_record, u32 class_count. Each record is
//! a u16 label followed by 4096 interleaved I/Q f32 pairs.

use std::fs::File;
use std::io::{BufReader, BufWriter, ErrorKind, Read, Write};
use std::path::Path;

use num_complex::{Complex32, Complex64};

use crate::error::{Error, Result};
use crate::RECORD_LEN;

pub const SHARD_MAGIC: [u8; 4] = *b"HFDS";
pub const SHARD_VERSION: u32 = 1;
pub const HEADER_BYTES: u64 = 24;
pub const RECORD_BYTES: u64 = 2 + RECORD_LEN as u64 * 8;

/// One labeled record as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetRecord {
    pub label_id: u16,
    pub iq: Vec<Complex32>,
}

impl DatasetRecord {
    pub fn new(label_id: u16, iq: Vec<Complex32>) -> Result<Self> {
        if iq.len() != RECORD_LEN {
            return Err(Error::ShapeMismatch {
                expected: format!("{RECORD_LEN} samples"),
                actual: format!("{} samples", iq.len()),
            });
        }
        Ok(Self { label_id, iq })
    }

    /// Rounds to single precision.
    pub fn from_f64(label_id: u16, iq: &[Complex64]) -> Result<Self> {
        Self::new(label_id, iq.iter().map(|z| Complex32::new(z.re as f32, z.im as f32)).collect())
    }

    pub fn to_f64(&self) -> Vec<Complex64> {
        self.iq.iter().map(|z| Complex64::new(z.re as f64, z.im as f64)).collect()
    }

    pub fn power(&self) -> f64 {
        self.iq.iter().map(|z| (z.re as f64).powi(2) + (z.im as f64).powi(2)).sum::<f64>()
            / self.iq.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ShardHeader {
    pub version: u32,
    pub record_count: u64,
    pub samples_per_record: u32,
    pub class_count: u32,
}

impl ShardHeader {
    fn to_bytes(self) -> [u8; HEADER_BYTES as usize] {
        let mut b = [0u8; HEADER_BYTES as usize];
        b[0..4].copy_from_slice(&SHARD_MAGIC);
        b[4..8].copy_from_slice(&self.version.to_le_bytes());
        b[8..16].copy_from_slice(&self.record_count.to_le_bytes());
        b[16..20].copy_from_slice(&self.samples_per_record.to_le_bytes());
        b[20..24].copy_from_slice(&self.class_count.to_le_bytes());
        b
    }

    fn from_bytes(b: &[u8; HEADER_BYTES as usize]) -> Result<Self> {
        let magic: [u8; 4] = b[0..4].try_into().unwrap();
        if magic != SHARD_MAGIC {
            return Err(Error::BadMagic { expected: SHARD_MAGIC, found: magic });
        }
        let version = u32::from_le_bytes(b[4..8].try_into().unwrap());
        if version != SHARD_VERSION {
            return Err(Error::UnsupportedVersion(version));
        }
        let header = Self {
            version,
            record_count: u64::from_le_bytes(b[8..16].try_into().unwrap()),
            samples_per_record: u32::from_le_bytes(b[16..20].try_into().unwrap()),
            class_count: u32::from_le_bytes(b[20..24].try_into().unwrap()),
        };
        if header.samples_per_record as usize != RECORD_LEN {
            return Err(Error::MalformedShard(format!(
                "samples_per_record is {}, expected {RECORD_LEN}",
                header.samples_per_record
            )));
        }
        Ok(header)
    }
}

/// Writes `records` to `path`. Labels must be below `class_count`.
pub fn write_shard(path: &Path, records: &[DatasetRecord], class_count: u32) -> Result<()> {
    for r in records {
        if r.label_id as u32 >= class_count {
            return Err(Error::InvalidLabel { label: r.label_id as usize, classes: class_count as usize });
        }
        if r.iq.len() != RECORD_LEN {
            return Err(Error::ShapeMismatch {
                expected: format!("{RECORD_LEN} samples"),
                actual: format!("{} samples", r.iq.len()),
            });
        }
    }
    let header = ShardHeader {
        version: SHARD_VERSION,
        record_count: records.len() as u64,
        samples_per_record: RECORD_LEN as u32,
        class_count,
    };
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&header.to_bytes())?;
    let mut buf = Vec::with_capacity(RECORD_BYTES as usize);
    for r in records {
        buf.clear();
        buf.extend_from_slice(&r.label_id.to_le_bytes());
        for z in &r.iq {
            buf.extend_from_slice(&z.re.to_le_bytes());
            buf.extend_from_slice(&z.im.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    w.flush()?;
    Ok(())
}

/// Streaming reader over a shard file.
pub struct ShardReader {
    header: ShardHeader,
    reader: BufReader<File>,
    remaining: u64,
    label: String,
}

impl ShardReader {
    pub fn open(path: &Path) -> Result<Self> {
        let label = path.display().to_string();
        let file = File::open(path)?;
        let len = file.metadata()?.len();
        let mut reader = BufReader::new(file);
        let mut hb = [0u8; HEADER_BYTES as usize];
        // A file shorter than the magic cannot be identified as a shard at all.
        if len < 4 {
            return Err(Error::TruncatedShard(format!("{label}: {len} bytes")));
        }
        let got = read_fully(&mut reader, &mut hb)?;
        if got < 4 {
            return Err(Error::TruncatedShard(format!("{label}: header")));
        }
        let magic: [u8; 4] = hb[0..4].try_into().unwrap();
        if magic != SHARD_MAGIC {
            return Err(Error::BadMagic { expected: SHARD_MAGIC, found: magic });
        }
        if got < hb.len() {
            return Err(Error::TruncatedShard(format!("{label}: header is {got} bytes")));
        }
        let header = ShardHeader::from_bytes(&hb)?;
        let expected = header
            .record_count
            .checked_mul(RECORD_BYTES)
            .and_then(|b| b.checked_add(HEADER_BYTES))
            .ok_or_else(|| Error::MalformedShard(format!("{label}: record count overflows")))?;
        if len < expected {
            return Err(Error::TruncatedShard(format!(
                "{label}: {len} bytes, header promises {expected}"
            )));
        }
        if len > expected {
            return Err(Error::MalformedShard(format!(
                "{label}: {} trailing bytes",
                len - expected
            )));
        }
        Ok(Self { header, reader, remaining: header.record_count, label })
    }

    pub fn header(&self) -> ShardHeader {
        self.header
    }

    fn read_record(&mut self) -> Result<DatasetRecord> {
        let mut buf = vec![0u8; RECORD_BYTES as usize];
        self.reader.read_exact(&mut buf).map_err(|e| {
            if e.kind() == ErrorKind::UnexpectedEof {
                Error::TruncatedShard(format!("{}: record cut short", self.label))
            } else {
                Error::Io(e)
            }
        })?;
        let label_id = u16::from_le_bytes([buf[0], buf[1]]);
        if label_id as u32 >= self.header.class_count {
            return Err(Error::InvalidLabel {
                label: label_id as usize,
                classes: self.header.class_count as usize,
            });
        }
        let iq = buf[2..]
            .chunks_exact(8)
            .map(|c| {
                Complex32::new(
                    f32::from_le_bytes(c[0..4].try_into().unwrap()),
                    f32::from_le_bytes(c[4..8].try_into().unwrap()),
                )
            })
            .collect();
        Ok(DatasetRecord { label_id, iq })
    }
}

impl Iterator for ShardReader {
    type Item = Result<DatasetRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.remaining == 0 {
            return None;
        }
        self.remaining -= 1;
        let r = self.read_record();
        if r.is_err() {
            self.remaining = 0;
        }
        Some(r)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        (self.remaining as usize, Some(self.remaining as usize))
    }
}

fn read_fully(r: &mut impl Read, buf: &mut [u8]) -> Result<usize> {
    let mut got = 0;
    while got < buf.len() {
        match r.read(&mut buf[got..]) {
            Ok(0) => break,
            Ok(n) => got += n,
            Err(e) if e.kind() == ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    Ok(got)
}

/// A shard fully loaded into memory.
#[derive(Debug, Clone, PartialEq)]
pub struct Shard {
    pub header: ShardHeader,
    pub records: Vec<DatasetRecord>,
}

impl Shard {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn class_count(&self) -> usize {
        self.header.class_count as usize
    }

    pub fn labels(&self) -> Vec<usize> {
        self.records.iter().map(|r| r.label_id as usize).collect()
    }
}

pub fn load_shard(path: &Path) -> Result<ShardReader> {
    ShardReader::open(path)
}

pub fn read_shard(path: &Path) -> Result<Shard> {
    let reader = ShardReader::open(path)?;
    let header = reader.header();
    let records = reader.collect::<Result<Vec<_>>>()?;
    Ok(Shard { header, records })
}

/// Reads a headerless interleaved f32 LE I/Q file.
pub fn read_raw_iq(path: &Path) -> Result<Vec<Complex64>> {
    let bytes = std::fs::read(path)?;
    if bytes.len() % 8 != 0 {
        return Err(Error::InvalidArgument(format!(
            "{}: {} bytes is not a whole number of f32 I/Q pairs",
            path.display(),
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| {
            Complex64::new(
                f32::from_le_bytes(c[0..4].try_into().unwrap()) as f64,
                f32::from_le_bytes(c[4..8].try_into().unwrap()) as f64,
            )
        })
        .collect())
}

/// Writes samples as headerless interleaved f32 LE I/Q.
pub fn write_raw_iq(path: &Path, samples: &[Complex64]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for z in samples {
        w.write_all(&(z.re as f32).to_le_bytes())?;
        w.write_all(&(z.im as f32).to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

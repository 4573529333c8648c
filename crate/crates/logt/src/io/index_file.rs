//! Bit-exact index persistence.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic  "LOGT"
//! version u32
//! header      section   build parameters and shapes
//! assignment  section   per unit: count u32, members as u32 deltas
//! bank        section   tag u8: 0 dense f32 columns | 1 pq codebooks+codes
//! decoder     section   per column: nnz u32, indices u32, values f32
//! cascade     section   optional: p f64, head boundary u32 per column
//! ```
//!
//! Every section is `[len u64][payload][crc32 u32]`; a checksum mismatch
//! anywhere fails the load. Memory vectors and coefficients are rounded
//! through f32 at build time, so the f32 payload reproduces query results
//! bit-for-bit after reload.

use std::io::Write;
use std::path::Path;

use crate::decoding::{Cascade, SparseColumn, SparseDecoder, SupportOrder};
use crate::encoding::{Construction, MemoryBank};
use crate::error::{Error, Result};
use crate::grouping::{Assignment, AssignmentParams, Strategy};
use crate::index::{BuildParams, Index, IndexBank};
use crate::quantization::{PqCodes, ProductQuantizer, CODEBOOK_SIZE};

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"LOGT";

const FLAG_OMP_L: u8 = 1;
const FLAG_CASCADE: u8 = 1 << 1;
const FLAG_PQ: u8 = 1 << 2;

struct SectionBuf {
    buf: Vec<u8>,
}

impl SectionBuf {
    fn new() -> Self {
        Self { buf: Vec::new() }
    }
    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn f32(&mut self, v: f32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
}

fn write_section(out: &mut impl Write, payload: &[u8]) -> Result<()> {
    out.write_all(&(payload.len() as u64).to_le_bytes())?;
    out.write_all(payload)?;
    out.write_all(&crc32fast::hash(payload).to_le_bytes())?;
    Ok(())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, len: usize, what: &'static str) -> Result<&'a [u8]> {
        if self.pos + len > self.buf.len() {
            return Err(Error::MalformedFile(format!("{what}: unexpected end")));
        }
        let s = &self.buf[self.pos..self.pos + len];
        self.pos += len;
        Ok(s)
    }
    fn u8(&mut self, what: &'static str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }
    fn u32(&mut self, what: &'static str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
    fn u64(&mut self, what: &'static str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
    fn f32(&mut self, what: &'static str) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
    fn f64(&mut self, what: &'static str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
    fn done(&self) -> bool {
        self.pos == self.buf.len()
    }
}

fn read_section<'a>(r: &mut Reader<'a>, name: &'static str) -> Result<Reader<'a>> {
    let len = r.u64(name)? as usize;
    let payload = r.take(len, name)?;
    let stored = r.u32(name)?;
    if crc32fast::hash(payload) != stored {
        return Err(Error::ChecksumFailure(name));
    }
    Ok(Reader {
        buf: payload,
        pos: 0,
    })
}

fn header_payload(index: &Index) -> Vec<u8> {
    let p = index.params();
    let mut s = SectionBuf::new();
    s.u32(index.dim() as u32);
    s.u64(index.num_vectors() as u64);
    s.u64(index.num_units() as u64);
    s.u32(p.n as u32);
    s.u32(p.m as u32);
    s.u8(match p.strategy {
        Strategy::Random => 0,
        Strategy::Orthogonal => 1,
    });
    s.u8(match p.encoder {
        Construction::Sum => 0,
        Construction::Pinv => 1,
    });
    s.u8(match p.order {
        SupportOrder::Order0 => 0,
        SupportOrder::Order1 => 1,
    });
    let mut flags = 0u8;
    if p.omp_l.is_some() {
        flags |= FLAG_OMP_L;
    }
    if p.cascade_p.is_some() {
        flags |= FLAG_CASCADE;
    }
    if matches!(index.bank(), IndexBank::Quantized { .. }) {
        flags |= FLAG_PQ;
    }
    s.u8(flags);
    s.u32(p.omp_l.unwrap_or(0) as u32);
    s.f64(p.cascade_p.unwrap_or(0.0));
    s.u32(p.pq_subspaces.unwrap_or(0) as u32);
    s.u64(p.seed);
    s.u32(p.chunk_factor as u32);
    s.buf
}

fn assignment_payload(assignment: &Assignment) -> Vec<u8> {
    let mut s = SectionBuf::new();
    for unit in assignment.units() {
        s.u32(unit.len() as u32);
        let mut prev = 0u32;
        for (t, &i) in unit.iter().enumerate() {
            s.u32(if t == 0 { i } else { i - prev });
            prev = i;
        }
    }
    s.buf
}

fn bank_payload(bank: &IndexBank) -> Vec<u8> {
    let mut s = SectionBuf::new();
    match bank {
        IndexBank::Dense(b) => {
            s.u8(0);
            for &v in b.as_slice() {
                s.f32(v as f32);
            }
        }
        IndexBank::Quantized { quantizer, codes } => {
            s.u8(1);
            s.u32(quantizer.sub_count() as u32);
            s.u32(quantizer.sub_dim() as u32);
            s.u32(quantizer.kmeans_iters() as u32);
            s.u64(quantizer.seed());
            for &v in quantizer.codebooks() {
                s.f32(v as f32);
            }
            s.buf.extend_from_slice(codes.as_slice());
        }
    }
    s.buf
}

fn decoder_payload(decoder: &SparseDecoder) -> Vec<u8> {
    let mut s = SectionBuf::new();
    for col in decoder.columns() {
        s.u32(col.nnz() as u32);
        for &i in &col.indices {
            s.u32(i);
        }
        for &v in &col.values {
            s.f32(v as f32);
        }
    }
    s.buf
}

/// Serializes a complete index. Reloading reproduces bit-identical query
/// results.
pub fn save_index(index: &Index, path: &Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    out.write_all(MAGIC)?;
    out.write_all(&FORMAT_VERSION.to_le_bytes())?;
    write_section(&mut out, &header_payload(index))?;
    write_section(&mut out, &assignment_payload(index.assignment()))?;
    write_section(&mut out, &bank_payload(index.bank()))?;
    write_section(&mut out, &decoder_payload(index.decoder()))?;
    if let Some(c) = index.decoder().cascade() {
        let mut s = SectionBuf::new();
        s.f64(c.p);
        for &b in &c.boundaries {
            s.u32(b);
        }
        write_section(&mut out, &s.buf)?;
    }
    out.flush()?;
    Ok(())
}

pub fn load_index(path: &Path) -> Result<Index> {
    let bytes = std::fs::read(path)?;
    let mut r = Reader {
        buf: &bytes,
        pos: 0,
    };
    if r.take(4, "magic")? != MAGIC {
        return Err(Error::MalformedFile("bad magic".into()));
    }
    let version = r.u32("version")?;
    if version != FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            expected: FORMAT_VERSION,
            got: version,
        });
    }

    let mut h = read_section(&mut r, "header")?;
    let d = h.u32("d")? as usize;
    let num_vectors = h.u64("num_vectors")? as usize;
    let num_units = h.u64("num_units")? as usize;
    let n = h.u32("n")? as usize;
    let m = h.u32("m")? as usize;
    let strategy = match h.u8("strategy")? {
        0 => Strategy::Random,
        1 => Strategy::Orthogonal,
        v => return Err(Error::MalformedFile(format!("unknown strategy {v}"))),
    };
    let encoder = match h.u8("encoder")? {
        0 => Construction::Sum,
        1 => Construction::Pinv,
        v => return Err(Error::MalformedFile(format!("unknown encoder {v}"))),
    };
    let order = match h.u8("order")? {
        0 => SupportOrder::Order0,
        1 => SupportOrder::Order1,
        v => return Err(Error::MalformedFile(format!("unknown order {v}"))),
    };
    let flags = h.u8("flags")?;
    let omp_l_raw = h.u32("omp_l")? as usize;
    let cascade_p_raw = h.f64("cascade_p")?;
    let pq_subspaces_raw = h.u32("pq_subspaces")? as usize;
    let seed = h.u64("seed")?;
    let chunk_factor = h.u32("chunk_factor")? as usize;
    let params = BuildParams {
        n,
        m,
        strategy,
        chunk_factor,
        encoder,
        order,
        omp_l: (flags & FLAG_OMP_L != 0).then_some(omp_l_raw),
        cascade_p: (flags & FLAG_CASCADE != 0).then_some(cascade_p_raw),
        pq_subspaces: (flags & FLAG_PQ != 0).then_some(pq_subspaces_raw),
        seed,
    };

    let mut a = read_section(&mut r, "assignment")?;
    let mut units = Vec::with_capacity(num_units);
    for _ in 0..num_units {
        let len = a.u32("unit size")? as usize;
        let mut members = Vec::with_capacity(len);
        let mut prev = 0u32;
        for t in 0..len {
            let delta = a.u32("member")?;
            prev = if t == 0 { delta } else { prev + delta };
            members.push(prev);
        }
        units.push(members);
    }
    let assignment = Assignment::from_units(
        num_vectors,
        units,
        AssignmentParams {
            n,
            m,
            seed,
            strategy,
            // The random strategy ignores chunking and records a factor of 1.
            chunk_factor: match strategy {
                Strategy::Random => 1,
                Strategy::Orthogonal => chunk_factor,
            },
        },
    )?;

    let mut b = read_section(&mut r, "bank")?;
    let bank = match b.u8("bank tag")? {
        0 => {
            let mut data = Vec::with_capacity(d * num_units);
            for _ in 0..d * num_units {
                data.push(b.f32("bank value")? as f64);
            }
            IndexBank::Dense(MemoryBank::from_columns(d, data, encoder)?)
        }
        1 => {
            let sub_count = b.u32("sub_count")? as usize;
            let sub_dim = b.u32("sub_dim")? as usize;
            let kmeans_iters = b.u32("kmeans_iters")? as usize;
            let pq_seed = b.u64("pq seed")?;
            let mut codebooks = Vec::with_capacity(sub_count * CODEBOOK_SIZE * sub_dim);
            for _ in 0..sub_count * CODEBOOK_SIZE * sub_dim {
                codebooks.push(b.f32("centroid value")? as f64);
            }
            let quantizer =
                ProductQuantizer::from_parts(sub_count, sub_dim, codebooks, pq_seed, kmeans_iters)?;
            let codes = b.take(num_units * sub_count, "codes")?.to_vec();
            IndexBank::Quantized {
                quantizer,
                codes: PqCodes::from_parts(num_units, sub_count, codes)?,
            }
        }
        v => return Err(Error::MalformedFile(format!("unknown bank tag {v}"))),
    };

    let mut dsec = read_section(&mut r, "decoder")?;
    let mut columns = Vec::with_capacity(num_vectors);
    for _ in 0..num_vectors {
        let nnz = dsec.u32("column nnz")? as usize;
        let mut indices = Vec::with_capacity(nnz);
        for _ in 0..nnz {
            indices.push(dsec.u32("column index")?);
        }
        let mut values = Vec::with_capacity(nnz);
        for _ in 0..nnz {
            values.push(dsec.f32("column value")? as f64);
        }
        columns.push(SparseColumn { indices, values });
    }
    let mut decoder = SparseDecoder::new(num_units, columns, order, params.omp_l);

    if params.cascade_p.is_some() {
        let mut c = read_section(&mut r, "cascade")?;
        let p = c.f64("cascade p")?;
        let mut boundaries = Vec::with_capacity(num_vectors);
        for _ in 0..num_vectors {
            boundaries.push(c.u32("boundary")?);
        }
        decoder.set_cascade(Some(Cascade { p, boundaries }));
    }
    if !r.done() {
        return Err(Error::MalformedFile("trailing bytes".into()));
    }

    Index::from_parts(params, assignment, bank, decoder)
}

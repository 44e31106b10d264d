//! Portable little-endian dataset container.
//!
//! ```text
//! offset  size      field
//! 0       8         magic "BIANDSET"
//! 8       4         u32 version (1)
//! 12      4         u32 n (nodes)
//! 16      4         u32 m (edges)
//! 20      4         u32 d_v (node attribute width)
//! 24      1         flags: bit0 edge types present, bit1 timestamps present
//! 25      3         reserved, zero
//! 28      8·n·d_v   node attributes, f64, row-major
//!         8·m       edges, (u32 src, u32 dst) pairs
//!         8·m       timestamps, f64 raw days         (if bit1)
//!         m         edge types, u8 in [0, 11)         (if bit0)
//!         n         labels, i8 in {-1, 0, 1, 2, 3}
//!         3·⌈n/8⌉   train, valid, test bitsets, LSB-first
//! ```
//!
//! Nothing may follow the last bitset. Unused high bits of the final byte of
//! each bitset must be zero, which makes the encoding canonical: `encode`
//! of a decoded file reproduces its bytes exactly.

use std::path::Path;

use thiserror::Error;

use crate::error::Result;
use crate::graph::{EdgeAttributedGraph, Label, Masks, EDGE_TYPES};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"BIANDSET";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 28;

const FLAG_TYPES: u8 = 0b01;
const FLAG_TIMES: u8 = 0b10;

/// Decoding failures; every variant names the byte offset at fault.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum FormatError {
    #[error("bad magic at offset 0")]
    BadMagic,
    #[error("unsupported version {version} at offset 8")]
    UnsupportedVersion { version: u32 },
    #[error("truncated {section} section at offset {offset}: need {needed} bytes, {available} available")]
    Truncated { section: &'static str, offset: usize, needed: usize, available: usize },
    #[error("edge {edge} endpoint {endpoint} out of range for {n} nodes at offset {offset}")]
    EndpointOutOfRange { edge: usize, endpoint: u32, n: usize, offset: usize },
    #[error("node {node} is in the {mask} mask but has label {label} (offset {offset})")]
    MaskLabel { node: usize, mask: &'static str, label: i8, offset: usize },
    #[error("node {node} appears in more than one mask (offset {offset})")]
    MaskOverlap { node: usize, offset: usize },
    #[error("invalid label {label} for node {node} at offset {offset}")]
    InvalidLabel { node: usize, label: i8, offset: usize },
    #[error("invalid edge type {ty} for edge {edge} at offset {offset}")]
    InvalidEdgeType { edge: usize, ty: u8, offset: usize },
    #[error("invalid timestamp {value} for edge {edge} at offset {offset}")]
    InvalidTimestamp { edge: usize, value: f64, offset: usize },
    #[error("non-finite node attribute at offset {offset}")]
    NonFinite { offset: usize },
    #[error("non-canonical encoding at offset {offset}: {what}")]
    NonCanonical { offset: usize, what: &'static str },
    #[error("{count} trailing bytes at offset {offset}")]
    TrailingBytes { offset: usize, count: usize },
    #[error("graph too large for the format: {0}")]
    TooLarge(String),
}

/// Serializes a graph. Raw (not normalized) timestamps are written.
pub fn encode(g: &EdgeAttributedGraph) -> std::result::Result<Vec<u8>, FormatError> {
    let (n, m, dv) = (g.num_nodes(), g.num_edges(), g.node_attr_dim());
    let as_u32 = |x: usize, what: &str| u32::try_from(x).map_err(|_| FormatError::TooLarge(format!("{what} = {x}")));
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * n * dv + 17 * m + n + 3 * n.div_ceil(8));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&as_u32(n, "n")?.to_le_bytes());
    out.extend_from_slice(&as_u32(m, "m")?.to_le_bytes());
    out.extend_from_slice(&as_u32(dv, "d_v")?.to_le_bytes());
    let mut flags = 0;
    if g.edge_types().is_some() {
        flags |= FLAG_TYPES;
    }
    if g.raw_timestamps().is_some() {
        flags |= FLAG_TIMES;
    }
    out.extend_from_slice(&[flags, 0, 0, 0]);
    for x in g.node_attrs().data() {
        out.extend_from_slice(&x.to_le_bytes());
    }
    for &(u, v) in g.edges() {
        out.extend_from_slice(&(u as u32).to_le_bytes());
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    if let Some(ts) = g.raw_timestamps() {
        for t in ts {
            out.extend_from_slice(&t.to_le_bytes());
        }
    }
    if let Some(ty) = g.edge_types() {
        out.extend_from_slice(ty);
    }
    out.extend(g.labels().iter().map(|l| l.code() as u8));
    let masks = g.masks();
    for mask in [&masks.train, &masks.valid, &masks.test] {
        out.extend(pack_bits(mask));
    }
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> std::result::Result<EdgeAttributedGraph, FormatError> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take("header", 8)? != MAGIC {
        return Err(FormatError::BadMagic);
    }
    let version = r.u32("header")?;
    if version != VERSION {
        return Err(FormatError::UnsupportedVersion { version });
    }
    let n = r.u32("header")? as usize;
    let m = r.u32("header")? as usize;
    let dv = r.u32("header")? as usize;
    let flags_at = r.pos;
    let head = r.take("header", 4)?;
    let flags = head[0];
    if flags & !(FLAG_TYPES | FLAG_TIMES) != 0 {
        return Err(FormatError::NonCanonical { offset: flags_at, what: "unknown flag bits" });
    }
    if head[1..] != [0, 0, 0] {
        return Err(FormatError::NonCanonical { offset: flags_at + 1, what: "reserved header bytes" });
    }

    let attr_len = n.checked_mul(dv).and_then(|x| x.checked_mul(8)).ok_or(FormatError::TooLarge("n·d_v".into()))?;
    let attr_at = r.pos;
    let attrs: Vec<f64> = r.take("node attribute", attr_len)?.chunks_exact(8).map(f64_le).collect();
    if let Some(i) = attrs.iter().position(|x| !x.is_finite()) {
        return Err(FormatError::NonFinite { offset: attr_at + 8 * i });
    }

    let edge_at = r.pos;
    let raw_edges = r.take("edge", m.checked_mul(8).ok_or(FormatError::TooLarge("m".into()))?)?;
    let mut edges = Vec::with_capacity(m);
    for (j, pair) in raw_edges.chunks_exact(8).enumerate() {
        let u = u32::from_le_bytes(pair[..4].try_into().unwrap());
        let v = u32::from_le_bytes(pair[4..].try_into().unwrap());
        for (k, end) in [u, v].into_iter().enumerate() {
            if end as usize >= n {
                return Err(FormatError::EndpointOutOfRange {
                    edge: j,
                    endpoint: end,
                    n,
                    offset: edge_at + 8 * j + 4 * k,
                });
            }
        }
        edges.push((u as usize, v as usize));
    }

    let times = if flags & FLAG_TIMES != 0 {
        let at = r.pos;
        let ts: Vec<f64> = r.take("timestamp", 8 * m)?.chunks_exact(8).map(f64_le).collect();
        if let Some((j, &t)) = ts.iter().enumerate().find(|(_, t)| !t.is_finite() || **t < 0.0) {
            return Err(FormatError::InvalidTimestamp { edge: j, value: t, offset: at + 8 * j });
        }
        Some(ts)
    } else {
        None
    };

    let types = if flags & FLAG_TYPES != 0 {
        let at = r.pos;
        let ty = r.take("edge type", m)?.to_vec();
        if let Some((j, &t)) = ty.iter().enumerate().find(|(_, &t)| t as usize >= EDGE_TYPES) {
            return Err(FormatError::InvalidEdgeType { edge: j, ty: t, offset: at + j });
        }
        Some(ty)
    } else {
        None
    };

    let label_at = r.pos;
    let mut labels = Vec::with_capacity(n);
    for (i, &b) in r.take("label", n)?.iter().enumerate() {
        let code = b as i8;
        labels.push(Label::from_code(code).ok_or(FormatError::InvalidLabel {
            node: i,
            label: code,
            offset: label_at + i,
        })?);
    }

    let nbytes = n.div_ceil(8);
    let mut sets = Vec::with_capacity(3);
    for name in ["train", "valid", "test"] {
        let at = r.pos;
        let raw = r.take("mask", nbytes)?;
        if !n.is_multiple_of(8) && raw[nbytes - 1] >> (n % 8) != 0 {
            return Err(FormatError::NonCanonical { offset: at + nbytes - 1, what: "padding bits in mask" });
        }
        let bits = unpack_bits(raw, n);
        for (i, &on) in bits.iter().enumerate() {
            if on && labels[i].target().is_none() {
                return Err(FormatError::MaskLabel {
                    node: i,
                    mask: name,
                    label: labels[i].code(),
                    offset: at + i / 8,
                });
            }
        }
        sets.push((at, bits));
    }
    for i in 0..n {
        let hits: Vec<usize> = sets.iter().filter(|(_, b)| b[i]).map(|(at, _)| *at).collect();
        if hits.len() > 1 {
            return Err(FormatError::MaskOverlap { node: i, offset: hits[1] + i / 8 });
        }
    }
    if r.pos != bytes.len() {
        return Err(FormatError::TrailingBytes { offset: r.pos, count: bytes.len() - r.pos });
    }

    let mut it = sets.into_iter().map(|(_, b)| b);
    let masks = Masks { train: it.next().unwrap(), valid: it.next().unwrap(), test: it.next().unwrap() };
    // Every invariant was checked above, so building cannot fail.
    let attrs = Tensor::new(n, dv, attrs).expect("attribute length checked");
    let mut g = EdgeAttributedGraph::new(n, edges, attrs).expect("endpoints checked");
    if let Some(ts) = times {
        g = g.with_timestamps(ts).expect("timestamps checked");
    }
    if let Some(ty) = types {
        g = g.with_edge_types(ty).expect("types checked");
    }
    Ok(g.with_labels(labels, masks).expect("masks checked"))
}

pub fn save(g: &EdgeAttributedGraph, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode(g)?).map_err(|e| with_path(e, path))?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<EdgeAttributedGraph> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| with_path(e, path))?;
    Ok(decode(&bytes)?)
}

/// Prefixes an I/O error with the file it concerns.
pub fn with_path(e: std::io::Error, path: &Path) -> std::io::Error {
    std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, section: &'static str, len: usize) -> std::result::Result<&'a [u8], FormatError> {
        let available = self.bytes.len() - self.pos;
        if len > available {
            return Err(FormatError::Truncated { section, offset: self.pos, needed: len, available });
        }
        let s = &self.bytes[self.pos..self.pos + len];
        self.pos += len;
        Ok(s)
    }

    fn u32(&mut self, section: &'static str) -> std::result::Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.take(section, 4)?.try_into().unwrap()))
    }
}

fn f64_le(b: &[u8]) -> f64 {
    f64::from_le_bytes(b.try_into().unwrap())
}

fn pack_bits(bits: &[bool]) -> Vec<u8> {
    let mut out = vec![0u8; bits.len().div_ceil(8)];
    for (i, _) in bits.iter().enumerate().filter(|(_, &b)| b) {
        out[i / 8] |= 1 << (i % 8);
    }
    out
}

fn unpack_bits(bytes: &[u8], n: usize) -> Vec<bool> {
    (0..n).map(|i| bytes[i / 8] >> (i % 8) & 1 == 1).collect()
}

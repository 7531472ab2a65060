//! Little-endian binary persistence for [`RetrievalIndex`].
//!
//! Layout (version 1):
//! `"RTIX"`, version `u32`, band count B `u32`, record count `u64`,
//! B band centers `f64`, then per record: `rir_id` and `room_id` as
//! `u32`-length-prefixed UTF-8, source and receiver as 6 `f64`, and B `f64`
//! fingerprint values.

use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::{RetrievalError, RetrievalIndex, RirRecord};
use crate::rir::{BandSpec, Rt60Fingerprint};

pub const SIDECAR_MAGIC: &[u8; 4] = b"RTIX";
pub const SIDECAR_VERSION: u32 = 1;

fn write_str<W: Write>(w: &mut W, s: &str) -> std::io::Result<()> {
    w.write_u32::<LittleEndian>(s.len() as u32)?;
    w.write_all(s.as_bytes())
}

fn read_str<R: Read>(r: &mut R) -> Result<String, RetrievalError> {
    let len = r.read_u32::<LittleEndian>()? as usize;
    let mut buf = vec![0; len];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|_| RetrievalError::Sidecar("invalid UTF-8 id".into()))
}

pub fn write_sidecar<W: Write>(mut w: W, index: &RetrievalIndex) -> std::io::Result<()> {
    let b = index.bands().len();
    w.write_all(SIDECAR_MAGIC)?;
    w.write_u32::<LittleEndian>(SIDECAR_VERSION)?;
    w.write_u32::<LittleEndian>(b as u32)?;
    w.write_u64::<LittleEndian>(index.len() as u64)?;
    for &c in index.bands().centers() {
        w.write_f64::<LittleEndian>(c)?;
    }
    for rec in index.records() {
        write_str(&mut w, &rec.rir_id)?;
        write_str(&mut w, &rec.room_id)?;
        for v in rec.src.iter().chain(&rec.rcv) {
            w.write_f64::<LittleEndian>(*v)?;
        }
        for &v in rec.fingerprint.as_slice() {
            w.write_f64::<LittleEndian>(v)?;
        }
    }
    w.flush()
}

pub fn read_sidecar<R: Read>(mut r: R) -> Result<RetrievalIndex, RetrievalError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != SIDECAR_MAGIC {
        return Err(RetrievalError::Sidecar("bad magic".into()));
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != SIDECAR_VERSION {
        return Err(RetrievalError::Sidecar(format!(
            "unsupported version {version}"
        )));
    }
    let b = r.read_u32::<LittleEndian>()? as usize;
    let count = r.read_u64::<LittleEndian>()? as usize;
    let centers = (0..b)
        .map(|_| r.read_f64::<LittleEndian>())
        .collect::<Result<Vec<_>, _>>()?;
    let bands = BandSpec::new(centers).map_err(|e| RetrievalError::Sidecar(e.to_string()))?;
    let mut records = Vec::with_capacity(count.min(1 << 20));
    for _ in 0..count {
        let rir_id = read_str(&mut r)?;
        let room_id = read_str(&mut r)?;
        let mut pos = [0.0; 6];
        for p in &mut pos {
            *p = r.read_f64::<LittleEndian>()?;
        }
        let fp = (0..b)
            .map(|_| r.read_f64::<LittleEndian>())
            .collect::<Result<Vec<_>, _>>()?;
        records.push(RirRecord {
            rir_id,
            room_id,
            src: [pos[0], pos[1], pos[2]],
            rcv: [pos[3], pos[4], pos[5]],
            fingerprint: Rt60Fingerprint::new(fp)
                .map_err(|e| RetrievalError::Sidecar(e.to_string()))?,
        });
    }
    RetrievalIndex::new(records, bands)
}

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::model::LoraShape;
use super::{FieldConfig, FieldError, LoraAdapters, ModelParams, StftConfig};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"NAFC";
pub const CHECKPOINT_VERSION: u32 = 1;

const HAS_BASE: u32 = 1;
const HAS_LORA: u32 = 2;

/// Contents of a checkpoint file. Adapter-only files carry no base weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: FieldConfig,
    pub base: Option<ModelParams>,
    pub lora: Option<LoraAdapters>,
}

fn bad(msg: impl Into<String>) -> FieldError {
    FieldError::Checkpoint(msg.into())
}

fn put_f32s<W: Write>(w: &mut W, v: &[f64]) -> std::io::Result<()> {
    v.iter()
        .try_for_each(|&x| w.write_f32::<LittleEndian>(x as f32))
}

fn get_f32s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>, FieldError> {
    (0..n)
        .map(|_| Ok(f64::from(r.read_f32::<LittleEndian>()?)))
        .collect()
}

fn get_len<R: Read>(r: &mut R) -> Result<usize, FieldError> {
    Ok(r.read_u32::<LittleEndian>()? as usize)
}

pub fn encode_checkpoint<W: Write>(w: &mut W, ckpt: &Checkpoint) -> Result<(), FieldError> {
    let mut flags = 0;
    if ckpt.base.is_some() {
        flags |= HAS_BASE;
    }
    if ckpt.lora.is_some() {
        flags |= HAS_LORA;
    }
    w.write_all(&CHECKPOINT_MAGIC)?;
    w.write_u32::<LittleEndian>(CHECKPOINT_VERSION)?;
    w.write_u32::<LittleEndian>(flags)?;
    let c = &ckpt.config;
    for v in [
        c.num_bounce_points,
        c.encoding_levels,
        c.hidden_width,
        c.hidden_layers,
        c.stft.window,
        c.stft.hop,
        c.stft.fft,
        c.rir_samples,
    ] {
        w.write_u32::<LittleEndian>(v as u32)?;
    }
    w.write_u32::<LittleEndian>(c.sample_rate)?;
    if let Some(p) = &ckpt.base {
        if p.config() != c {
            return Err(bad("base parameters disagree with the header config"));
        }
        w.write_u32::<LittleEndian>(p.layers().len() as u32)?;
        for l in p.layers() {
            w.write_u32::<LittleEndian>(l.d_out as u32)?;
            w.write_u32::<LittleEndian>(l.d_in as u32)?;
            put_f32s(w, &p.values()[l.weights()])?;
            put_f32s(w, &p.values()[l.bias()])?;
        }
    }
    if let Some(a) = &ckpt.lora {
        w.write_u32::<LittleEndian>(a.rank as u32)?;
        w.write_u32::<LittleEndian>(a.shapes.len() as u32)?;
        for s in &a.shapes {
            w.write_u32::<LittleEndian>(s.layer as u32)?;
            w.write_u32::<LittleEndian>(s.d_out as u32)?;
            w.write_u32::<LittleEndian>(s.d_in as u32)?;
            put_f32s(w, &a.values[s.a()])?;
            put_f32s(w, &a.values[s.b()])?;
        }
    }
    Ok(())
}

pub fn decode_checkpoint<R: Read>(r: &mut R) -> Result<Checkpoint, FieldError> {
    let mut magic = [0; 4];
    r.read_exact(&mut magic)?;
    if magic != CHECKPOINT_MAGIC {
        return Err(bad("bad magic"));
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != CHECKPOINT_VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let flags = r.read_u32::<LittleEndian>()?;
    let mut f = [0usize; 8];
    for v in &mut f {
        *v = get_len(r)?;
    }
    let config = FieldConfig {
        num_bounce_points: f[0],
        encoding_levels: f[1],
        hidden_width: f[2],
        hidden_layers: f[3],
        stft: StftConfig {
            window: f[4],
            hop: f[5],
            fft: f[6],
        },
        rir_samples: f[7],
        sample_rate: r.read_u32::<LittleEndian>()?,
    };
    config.validate()?;

    let base = if flags & HAS_BASE != 0 {
        let template = ModelParams::init(config, 0)?;
        let count = get_len(r)?;
        if count != template.layers().len() {
            return Err(bad(format!(
                "{count} layers, config implies {}",
                template.layers().len()
            )));
        }
        let mut values = Vec::with_capacity(template.len());
        for l in template.layers() {
            let (d_out, d_in) = (get_len(r)?, get_len(r)?);
            if (d_out, d_in) != (l.d_out, l.d_in) {
                return Err(bad(format!(
                    "layer {d_out}x{d_in}, expected {}x{}",
                    l.d_out, l.d_in
                )));
            }
            values.extend(get_f32s(r, l.size())?);
        }
        Some(ModelParams::from_values(config, values)?)
    } else {
        None
    };

    let lora = if flags & HAS_LORA != 0 {
        let rank = get_len(r)?;
        let count = get_len(r)?;
        let mut shapes = Vec::with_capacity(count);
        let mut values = Vec::new();
        for _ in 0..count {
            let layer = get_len(r)?;
            let (d_out, d_in) = (get_len(r)?, get_len(r)?);
            if rank == 0 || rank > d_in.min(d_out) {
                return Err(FieldError::RankError { rank, d_in, d_out });
            }
            let s = LoraShape {
                layer,
                d_in,
                d_out,
                rank,
                offset: values.len(),
            };
            values.extend(get_f32s(r, (d_in + d_out) * rank)?);
            shapes.push(s);
        }
        Some(LoraAdapters {
            rank,
            shapes,
            values,
        })
    } else {
        None
    };
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(bad("trailing bytes"));
    }
    Ok(Checkpoint { config, base, lora })
}

pub fn write_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<(), FieldError> {
    let mut w = BufWriter::new(File::create(path)?);
    encode_checkpoint(&mut w, ckpt)?;
    w.flush()?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint, FieldError> {
    decode_checkpoint(&mut BufReader::new(File::open(path)?))
}

use std::path::Path;

use hound::{SampleFormat, WavSpec};

use super::{ImpulseResponse, RirError};

fn wav_err(path: &Path, source: hound::Error) -> RirError {
    RirError::Wav {
        path: path.display().to_string(),
        source,
    }
}

/// Reads a mono WAV (32-bit float or 16-bit PCM). Multi-channel files keep
/// only the first channel.
pub fn read_wav(path: &Path) -> Result<ImpulseResponse, RirError> {
    let mut reader = hound::WavReader::open(path).map_err(|e| wav_err(path, e))?;
    let spec = reader.spec();
    let channels = spec.channels.max(1) as usize;
    let samples: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<Result<_, _>>(),
        (SampleFormat::Int, bits) if bits <= 32 => {
            let scale = 1.0 / (1i64 << (bits - 1)) as f64;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| v as f64 * scale))
                .collect::<Result<_, _>>()
        }
        _ => Err(hound::Error::Unsupported),
    }
    .map_err(|e| wav_err(path, e))?;
    let mono = samples.into_iter().step_by(channels).collect();
    ImpulseResponse::new(mono, spec.sample_rate)
}

/// Writes a mono 32-bit float WAV.
pub fn write_wav(path: &Path, ir: &ImpulseResponse) -> Result<(), RirError> {
    let spec = WavSpec {
        channels: 1,
        sample_rate: ir.sample_rate(),
        bits_per_sample: 32,
        sample_format: SampleFormat::Float,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(|e| wav_err(path, e))?;
    for &s in ir.samples() {
        writer
            .write_sample(s as f32)
            .map_err(|e| wav_err(path, e))?;
    }
    writer.finalize().map_err(|e| wav_err(path, e))
}

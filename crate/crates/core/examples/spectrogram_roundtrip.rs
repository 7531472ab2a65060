//! Log-magnitude spectrogram of a simulated RIR and its phase-free
//! reconstruction.

use std::error::Error;

use rirfield::nafield::{spectrogram, synthesize_waveform, StftConfig};
use rirfield::rir::{multiband_rt60, rt60_single, schroeder_edc, BandSpec};
use rirfield::simulator::{image_source_rir, ShoeboxRoom};

fn main() -> Result<(), Box<dyn Error>> {
    let mut room = ShoeboxRoom::uniform([5.0, 4.0, 3.0], 0.3, 16_000);
    let bands = BandSpec::default();
    room.absorption = vec![[0.3; 6]; bands.len()];
    room.bands = Some(bands.clone());
    let ir = image_source_rir(&room, [1.0, 1.0, 1.5], [3.5, 2.8, 1.2], 10_000, 0.5)?;

    let cfg = StftConfig::default();
    let frames = cfg.frames(ir.len());
    let spec = spectrogram(&ir, cfg, frames);
    println!("{} frames x {} bins", spec.frames, spec.bins);

    for iterations in [1, 8, 32, 64] {
        let rebuilt = synthesize_waveform(&spec, cfg, ir.len(), ir.sample_rate(), iterations)?;
        let again = spectrogram(&rebuilt, cfg, frames);
        let mae = again
            .values
            .iter()
            .zip(&spec.values)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
            / spec.values.len() as f64;
        println!(
            "{iterations:>3} iterations: log-magnitude MAE {mae:.3}, RT60 {:.3} s",
            rt60_single(&schroeder_edc(&rebuilt)?)?
        );
    }
    let fp = multiband_rt60(&ir, &bands)?;
    println!(
        "original RT60 {:.3} s, per band {:?}",
        rt60_single(&schroeder_edc(&ir)?)?,
        fp.as_slice()
    );
    Ok(())
}

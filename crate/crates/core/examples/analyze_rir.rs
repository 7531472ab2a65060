//! Decay analysis of a single impulse response.
//!
//! ```bash
//! cargo run --example analyze_rir             # synthetic decay
//! cargo run --example analyze_rir -- ir.wav   # your own file
//! ```

use std::error::Error;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rirfield::rir::{
    drr, multiband_rt60, read_wav, rt60_single, schroeder_edc, BandSpec, ImpulseResponse,
};

fn synthetic(tau: f64, fs: u32) -> ImpulseResponse {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let n = (1.5 * fs as f64) as usize;
    let mut samples: Vec<f64> = (0..n)
        .map(|k| {
            let z: f64 = StandardNormal.sample(&mut rng);
            0.1 * z * (-(k as f64) / fs as f64 / tau).exp()
        })
        .collect();
    samples[0] = 1.0;
    ImpulseResponse::new(samples, fs).unwrap()
}

fn main() -> Result<(), Box<dyn Error>> {
    let ir = match std::env::args().nth(1) {
        Some(path) => read_wav(Path::new(&path))?,
        None => synthetic(0.08, 16_000),
    };
    println!(
        "{} samples at {} Hz ({:.3} s)",
        ir.len(),
        ir.sample_rate(),
        ir.duration_s()
    );

    let edc = schroeder_edc(&ir)?;
    for db in [-5.0, -25.0, -60.0] {
        match edc.first_below(db) {
            Some(i) => println!(
                "EDC reaches {db} dB at {:.1} ms",
                1e3 * i as f64 / ir.sample_rate() as f64
            ),
            None => println!("EDC never reaches {db} dB"),
        }
    }
    println!("broadband RT60  {:.3} s", rt60_single(&edc)?);

    let bands = BandSpec::default();
    let fp = multiband_rt60(&ir, &bands)?;
    for (f, t) in bands.centers().iter().zip(fp.as_slice()) {
        println!("  {f:>6.0} Hz  {t:.3} s");
    }
    println!("DRR {:.2} dB", drr(&ir));
    Ok(())
}

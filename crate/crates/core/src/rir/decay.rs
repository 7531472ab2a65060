use serde::{Deserialize, Serialize};

use super::{band_filter, BandSpec, ImpulseResponse, RirError};

/// Lowest value an energy decay curve is allowed to take, in dB.
pub const EDC_FLOOR_DB: f64 = -120.0;

const FIT_START_DB: f64 = -5.0;
const FIT_END_DB: f64 = -25.0;

/// Schroeder backward-integrated energy, normalised to 0 dB at the first sample.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyDecayCurve {
    values_db: Vec<f64>,
    sample_rate: u32,
}

impl EnergyDecayCurve {
    pub fn values_db(&self) -> &[f64] {
        &self.values_db
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.values_db.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values_db.is_empty()
    }

    /// Value at `index`, or the floor past the end of the curve.
    pub fn at(&self, index: usize) -> f64 {
        self.values_db.get(index).copied().unwrap_or(EDC_FLOOR_DB)
    }

    /// First index whose value is at or below `level_db`.
    pub fn first_below(&self, level_db: f64) -> Option<usize> {
        self.values_db.iter().position(|&v| v <= level_db)
    }
}

pub fn schroeder_edc(ir: &ImpulseResponse) -> Result<EnergyDecayCurve, RirError> {
    let mut cum = vec![0.0; ir.len()];
    let mut acc = 0.0;
    for (c, x) in cum.iter_mut().zip(ir.samples()).rev() {
        acc += x * x;
        *c = acc;
    }
    let total = cum[0];
    if total <= 0.0 {
        return Err(RirError::ZeroEnergy);
    }
    let values_db = cum
        .iter()
        .map(|&e| {
            if e <= 0.0 {
                EDC_FLOOR_DB
            } else {
                (10.0 * (e / total).log10()).max(EDC_FLOOR_DB)
            }
        })
        .collect();
    Ok(EnergyDecayCurve {
        values_db,
        sample_rate: ir.sample_rate(),
    })
}

/// RT60 in seconds from a -5 dB to -25 dB least-squares fit, extrapolated to 60 dB.
pub fn rt60_single(edc: &EnergyDecayCurve) -> Result<f64, RirError> {
    let insufficient = RirError::InsufficientDecay {
        needed_db: FIT_END_DB,
    };
    let v = edc.values_db();
    let end = v.iter().position(|&x| x < FIT_END_DB).ok_or(insufficient)?;
    let start = v.iter().position(|&x| x <= FIT_START_DB).unwrap_or(end);
    let seg = &v[start..end];
    if seg.len() < 2 {
        return Err(RirError::InsufficientDecay {
            needed_db: FIT_END_DB,
        });
    }
    let fs = edc.sample_rate() as f64;
    let n = seg.len() as f64;
    let t_mean = (start as f64 + (seg.len() - 1) as f64 / 2.0) / fs;
    let y_mean = seg.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, &y) in seg.iter().enumerate() {
        let dt = (start + i) as f64 / fs - t_mean;
        sxy += dt * (y - y_mean);
        sxx += dt * dt;
    }
    let slope = sxy / sxx;
    if !(slope < 0.0) || !slope.is_finite() {
        return Err(RirError::InsufficientDecay {
            needed_db: FIT_END_DB,
        });
    }
    Ok(-60.0 / slope)
}

/// Per-band RT60 in seconds; the retrieval key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rt60Fingerprint(Vec<f64>);

impl Rt60Fingerprint {
    pub fn new(rt60_s: Vec<f64>) -> Result<Self, RirError> {
        if rt60_s.is_empty() || rt60_s.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(RirError::Invalid(
                "fingerprint entries must be positive and finite".into(),
            ));
        }
        Ok(Self(rt60_s))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn distance(&self, other: &Self) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

/// RT60 per octave band. Bands whose decay cannot be fit fall back to the
/// broadband RT60.
pub fn multiband_rt60(ir: &ImpulseResponse, bands: &BandSpec) -> Result<Rt60Fingerprint, RirError> {
    bands.validate_for(ir.sample_rate())?;
    let mut broadband: Option<Result<f64, RirError>> = None;
    let mut out = Vec::with_capacity(bands.len());
    for &center in bands.centers() {
        let filtered = band_filter(ir, center)?;
        let band = schroeder_edc(&filtered).and_then(|edc| rt60_single(&edc));
        let value = match band {
            Ok(v) => v,
            Err(RirError::InsufficientDecay { .. } | RirError::ZeroEnergy) => {
                let bb = broadband
                    .get_or_insert_with(|| schroeder_edc(ir).and_then(|edc| rt60_single(&edc)));
                match bb {
                    Ok(v) => *v,
                    Err(_) => {
                        return Err(RirError::InsufficientDecay {
                            needed_db: FIT_END_DB,
                        })
                    }
                }
            }
            Err(e) => return Err(e),
        };
        out.push(value);
    }
    Rt60Fingerprint::new(out)
}

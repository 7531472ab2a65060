use std::f64::consts::{PI, SQRT_2};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{ImpulseResponse, RirError};

/// Octave bands used for multi-band analysis, identified by center frequency.
///
/// Each band spans `center / sqrt(2)` to `center * sqrt(2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct BandSpec {
    centers: Vec<f64>,
}

impl BandSpec {
    pub const DEFAULT_CENTERS: [f64; 6] = [125.0, 250.0, 500.0, 1000.0, 2000.0, 4000.0];

    pub fn new(centers: Vec<f64>) -> Result<Self, RirError> {
        if centers.is_empty() {
            return Err(RirError::Invalid(
                "band spec needs at least one band".into(),
            ));
        }
        if centers.iter().any(|c| !c.is_finite() || *c <= 0.0) {
            return Err(RirError::Invalid("band centers must be positive".into()));
        }
        if centers.windows(2).any(|w| w[1] <= w[0]) {
            return Err(RirError::Invalid(
                "band centers must be strictly increasing".into(),
            ));
        }
        Ok(Self { centers })
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    /// Checks that every band's upper edge sits below Nyquist.
    pub fn validate_for(&self, sample_rate: u32) -> Result<(), RirError> {
        for &c in &self.centers {
            check_band(c, sample_rate)?;
        }
        Ok(())
    }

    /// Parses `"default"` or a comma separated list of center frequencies.
    pub fn parse(s: &str) -> Result<Self, RirError> {
        if s.trim().eq_ignore_ascii_case("default") {
            return Ok(Self::default());
        }
        let centers = s
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<f64>()
                    .map_err(|_| RirError::Invalid(format!("bad band center '{t}'")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(centers)
    }
}

impl Default for BandSpec {
    fn default() -> Self {
        Self {
            centers: Self::DEFAULT_CENTERS.to_vec(),
        }
    }
}

impl TryFrom<Vec<f64>> for BandSpec {
    type Error = RirError;
    fn try_from(v: Vec<f64>) -> Result<Self, RirError> {
        Self::new(v)
    }
}

impl From<BandSpec> for Vec<f64> {
    fn from(b: BandSpec) -> Self {
        b.centers
    }
}

fn check_band(center_hz: f64, sample_rate: u32) -> Result<(), RirError> {
    if !(center_hz > 0.0) || center_hz * SQRT_2 >= sample_rate as f64 / 2.0 {
        return Err(RirError::BandOutOfRange {
            center_hz,
            sample_rate,
        });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy)]
struct Biquad {
    b: [f64; 3],
    a: [f64; 2],
}

impl Biquad {
    fn run(&self, x: &mut [f64]) {
        let (mut z1, mut z2) = (0.0, 0.0);
        for v in x.iter_mut() {
            let input = *v;
            let y = self.b[0] * input + z1;
            z1 = self.b[1] * input - self.a[0] * y + z2;
            z2 = self.b[2] * input - self.a[1] * y;
            *v = y;
        }
    }

    fn response(&self, z_inv: Complex64) -> Complex64 {
        let num = self.b[0] + self.b[1] * z_inv + self.b[2] * z_inv * z_inv;
        let den = 1.0 + self.a[0] * z_inv + self.a[1] * z_inv * z_inv;
        num / den
    }
}

/// Fourth-order Butterworth octave band-pass, realised as two biquads.
///
/// Designed from the second-order low-pass prototype through the
/// low-pass to band-pass transform and a prewarped bilinear map, then
/// normalised to unit gain at the band center.
#[derive(Debug, Clone)]
pub struct OctaveBandpass {
    sections: [Biquad; 2],
}

impl OctaveBandpass {
    pub fn new(center_hz: f64, sample_rate: u32) -> Result<Self, RirError> {
        check_band(center_hz, sample_rate)?;
        let fs = sample_rate as f64;
        let warp = |f: f64| 2.0 * fs * (PI * f / fs).tan();
        let w_lo = warp(center_hz / SQRT_2);
        let w_hi = warp(center_hz * SQRT_2);
        let w0_sq = w_lo * w_hi;
        let bw = w_hi - w_lo;

        let mut upper = Vec::with_capacity(2);
        for k in 0..2 {
            let theta = PI * (2 * k + 3) as f64 / 4.0;
            let p = Complex64::from_polar(1.0, theta) * bw;
            let disc = (p * p - 4.0 * w0_sq).sqrt();
            for s in [(p + disc) / 2.0, (p - disc) / 2.0] {
                let z = (2.0 * fs + s) / (2.0 * fs - s);
                if z.im > 0.0 {
                    upper.push(z);
                }
            }
        }
        debug_assert_eq!(upper.len(), 2);

        let mut sections = [Biquad {
            b: [1.0, 0.0, -1.0],
            a: [0.0, 0.0],
        }; 2];
        for (sec, z) in sections.iter_mut().zip(&upper) {
            sec.a = [-2.0 * z.re, z.norm_sqr()];
        }

        let w_center = 2.0 * (w0_sq.sqrt() / (2.0 * fs)).atan();
        let z_inv = Complex64::from_polar(1.0, -w_center);
        let gain = sections
            .iter()
            .map(|s| s.response(z_inv))
            .fold(Complex64::new(1.0, 0.0), |acc, h| acc * h)
            .norm();
        let per_section = gain.sqrt();
        for sec in &mut sections {
            for b in &mut sec.b {
                *b /= per_section;
            }
        }
        Ok(Self { sections })
    }

    pub fn apply(&self, samples: &[f64]) -> Vec<f64> {
        let mut out = samples.to_vec();
        for sec in &self.sections {
            sec.run(&mut out);
        }
        out
    }

    /// Magnitude response at `freq_hz`.
    pub fn gain_at(&self, freq_hz: f64, sample_rate: u32) -> f64 {
        let w = 2.0 * PI * freq_hz / sample_rate as f64;
        let z_inv = Complex64::from_polar(1.0, -w);
        self.sections
            .iter()
            .map(|s| s.response(z_inv))
            .fold(Complex64::new(1.0, 0.0), |acc, h| acc * h)
            .norm()
    }
}

/// Filters `ir` with the octave band-pass centered at `center_hz`.
pub fn band_filter(ir: &ImpulseResponse, center_hz: f64) -> Result<ImpulseResponse, RirError> {
    let filter = OctaveBandpass::new(center_hz, ir.sample_rate())?;
    Ok(ImpulseResponse {
        samples: filter.apply(ir.samples()),
        sample_rate: ir.sample_rate(),
    })
}

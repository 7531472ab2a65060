//! Image-source simulation of shoebox rooms, used to build synthetic corpora.

mod corpus;

pub use corpus::{generate_corpus, generate_room, CorpusRecipe, GeneratedRoom};

use thiserror::Error;

use crate::geometry::{distance, Point3};
use crate::rir::{BandSpec, ImpulseResponse, OctaveBandpass, RirError};

#[derive(Debug, Error)]
pub enum SimulatorError {
    #[error("source and receiver coincide")]
    CoincidentEndpoints,
    #[error("point {0:?} is not strictly inside the room")]
    OutOfRoom(Point3),
    #[error("invalid room: {0}")]
    InvalidRoom(String),
    #[error(transparent)]
    Rir(#[from] RirError),
    #[error(transparent)]
    Manifest(#[from] crate::manifest::ManifestError),
    #[error("i/o on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Wall order used for absorption rows: x=0, x=Lx, y=0, y=Ly, z=0, z=Lz.
pub type WallCoefficients = [f64; 6];

#[derive(Debug, Clone, PartialEq)]
pub struct ShoeboxRoom {
    pub dims: Point3,
    /// One row per band (or a single broadband row when `bands` is `None`).
    pub absorption: Vec<WallCoefficients>,
    pub bands: Option<BandSpec>,
    pub sample_rate: u32,
    pub speed_of_sound: f64,
}

impl ShoeboxRoom {
    pub const SPEED_OF_SOUND: f64 = 343.0;

    /// A frequency-independent room with the same absorption on every wall.
    pub fn uniform(dims: Point3, absorption: f64, sample_rate: u32) -> Self {
        Self {
            dims,
            absorption: vec![[absorption; 6]],
            bands: None,
            sample_rate,
            speed_of_sound: Self::SPEED_OF_SOUND,
        }
    }

    pub fn validate(&self) -> Result<(), SimulatorError> {
        let bad = |m: String| Err(SimulatorError::InvalidRoom(m));
        if self.dims.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
            return bad(format!("dimensions {:?} must be positive", self.dims));
        }
        if self.sample_rate == 0 || !(self.speed_of_sound > 0.0) {
            return bad("sample rate and speed of sound must be positive".into());
        }
        let rows = self.bands.as_ref().map_or(1, BandSpec::len);
        if self.absorption.len() != rows {
            return bad(format!(
                "expected {rows} absorption rows, got {}",
                self.absorption.len()
            ));
        }
        if self
            .absorption
            .iter()
            .flatten()
            .any(|a| !(*a > 0.0 && *a <= 1.0))
        {
            return bad("absorption coefficients must lie in (0, 1]".into());
        }
        if let Some(b) = &self.bands {
            b.validate_for(self.sample_rate)?;
        }
        Ok(())
    }

    pub fn volume(&self) -> f64 {
        self.dims.iter().product()
    }

    pub fn surface_area(&self) -> f64 {
        let [x, y, z] = self.dims;
        2.0 * (x * y + y * z + x * z)
    }

    /// Area-weighted mean absorption, averaged over bands.
    pub fn mean_absorption(&self) -> f64 {
        let [x, y, z] = self.dims;
        let areas = [y * z, y * z, x * z, x * z, x * y, x * y];
        let per_row: f64 = self
            .absorption
            .iter()
            .map(|row| row.iter().zip(&areas).map(|(a, s)| a * s).sum::<f64>())
            .sum::<f64>()
            / self.absorption.len() as f64;
        per_row / self.surface_area()
    }

    /// Sabine reverberation time in seconds.
    pub fn sabine_rt60(&self) -> f64 {
        0.161 * self.volume() / (self.surface_area() * self.mean_absorption())
    }

    fn strictly_inside(&self, p: Point3) -> bool {
        (0..3).all(|i| p[i] > 0.0 && p[i] < self.dims[i])
    }
}

/// Shoebox RIR by the image-source method.
///
/// Each image up to `max_order` reflections adds `prod(beta) / distance` at a
/// delay of `distance / c`, split over two samples by linear interpolation.
/// `beta = sqrt(1 - absorption)` per wall. With frequency-dependent
/// absorption, one image sum runs per band, each is octave filtered, and the
/// results are summed.
pub fn image_source_rir(
    room: &ShoeboxRoom,
    src: Point3,
    rcv: Point3,
    max_order: usize,
    length_s: f64,
) -> Result<ImpulseResponse, SimulatorError> {
    room.validate()?;
    for p in [src, rcv] {
        if !room.strictly_inside(p) {
            return Err(SimulatorError::OutOfRoom(p));
        }
    }
    if src == rcv {
        return Err(SimulatorError::CoincidentEndpoints);
    }
    let fs = room.sample_rate as f64;
    let n = (length_s * fs).round() as usize;
    if n == 0 {
        return Err(SimulatorError::InvalidRoom(
            "RIR length rounds to zero samples".into(),
        ));
    }
    let c = room.speed_of_sound;
    let max_dist = n as f64 / fs * c;
    let rows = room.absorption.len();
    let log_beta: Vec<[f64; 6]> = room
        .absorption
        .iter()
        .map(|row| row.map(|a| (1.0 - a).max(0.0).sqrt().ln()))
        .collect();
    let mut buffers = vec![vec![0.0; n]; rows];

    let axis_images = |axis: usize| {
        let (s, r, len) = (src[axis], rcv[axis], room.dims[axis]);
        let mut out = Vec::new();
        for parity in 0..2i64 {
            let base = (1 - 2 * parity) as f64 * s;
            let lo = ((r - max_dist - base) / (2.0 * len)).floor() as i64;
            let hi = ((r + max_dist - base) / (2.0 * len)).ceil() as i64;
            for m in lo..=hi {
                let offset = base + 2.0 * m as f64 * len - r;
                let near = (m - parity).unsigned_abs() as usize;
                let far = m.unsigned_abs() as usize;
                if near + far <= max_order && offset.abs() <= max_dist {
                    out.push((offset * offset, near, far));
                }
            }
        }
        out
    };
    let (ix, iy, iz) = (axis_images(0), axis_images(1), axis_images(2));
    let max_d2 = max_dist * max_dist;

    for &(dx2, nx0, nx1) in &ix {
        for &(dy2, ny0, ny1) in &iy {
            let order_xy = nx0 + nx1 + ny0 + ny1;
            if order_xy > max_order || dx2 + dy2 > max_d2 {
                continue;
            }
            for &(dz2, nz0, nz1) in &iz {
                if order_xy + nz0 + nz1 > max_order {
                    continue;
                }
                let d2 = dx2 + dy2 + dz2;
                if d2 > max_d2 {
                    continue;
                }
                let d = d2.sqrt();
                let delay = d / c * fs;
                let i0 = delay.floor() as usize;
                if i0 + 1 >= n {
                    continue;
                }
                let frac = delay - i0 as f64;
                let counts = [nx0, nx1, ny0, ny1, nz0, nz1];
                for (buf, lb) in buffers.iter_mut().zip(&log_beta) {
                    let log_gain: f64 = counts
                        .iter()
                        .zip(lb)
                        .filter(|(&k, _)| k > 0)
                        .map(|(&k, &l)| k as f64 * l)
                        .sum();
                    let amp = log_gain.exp() / d;
                    buf[i0] += amp * (1.0 - frac);
                    buf[i0 + 1] += amp * frac;
                }
            }
        }
    }

    let samples = match &room.bands {
        None => buffers.pop().expect("one broadband row"),
        Some(bands) => {
            let mut sum = vec![0.0; n];
            for (buf, &center) in buffers.iter().zip(bands.centers()) {
                let filtered = OctaveBandpass::new(center, room.sample_rate)?.apply(buf);
                for (s, f) in sum.iter_mut().zip(filtered) {
                    *s += f;
                }
            }
            sum
        }
    };
    debug_assert!(distance(src, rcv) > 0.0);
    Ok(ImpulseResponse::new(samples, room.sample_rate)?)
}

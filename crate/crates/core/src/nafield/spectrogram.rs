use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::{FieldError, StftConfig};
use crate::rir::ImpulseResponse;

/// Added to magnitudes before taking the natural log.
pub const LOG_EPS: f64 = 1e-8;

/// T x F grid of `ln(|STFT| + LOG_EPS)`, row-major by frame.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrogramTarget {
    pub frames: usize,
    pub bins: usize,
    pub values: Vec<f64>,
}

impl SpectrogramTarget {
    pub fn new(frames: usize, bins: usize, values: Vec<f64>) -> Result<Self, FieldError> {
        if values.len() != frames * bins {
            return Err(FieldError::ShapeError(format!(
                "{} values for a {frames}x{bins} grid",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(FieldError::NumericalError("spectrogram".into()));
        }
        Ok(Self {
            frames,
            bins,
            values,
        })
    }

    /// Every cell at the log floor, i.e. zero magnitude.
    pub fn silent(frames: usize, bins: usize) -> Self {
        Self {
            frames,
            bins,
            values: vec![LOG_EPS.ln(); frames * bins],
        }
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        &self.values[t * self.bins..(t + 1) * self.bins]
    }

    fn magnitudes(&self) -> Vec<f64> {
        self.values
            .iter()
            .map(|v| (v.exp() - LOG_EPS).max(0.0))
            .collect()
    }
}

struct Stft {
    cfg: StftConfig,
    window: Vec<f64>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl Stft {
    fn new(cfg: StftConfig) -> Self {
        let mut planner = FftPlanner::new();
        // periodic Hann: constant overlap-add at 50% hop
        let window = (0..cfg.window)
            .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / cfg.window as f64).cos())
            .collect();
        Self {
            fwd: planner.plan_fft_forward(cfg.fft),
            inv: planner.plan_fft_inverse(cfg.fft),
            window,
            cfg,
        }
    }

    fn pad(&self) -> usize {
        self.cfg.window / 2
    }

    fn analyze(&self, x: &[f64], frames: usize) -> Vec<Complex64> {
        let (win, hop, fft, bins) = (self.cfg.window, self.cfg.hop, self.cfg.fft, self.cfg.bins());
        let pad = self.pad();
        let mut out = Vec::with_capacity(frames * bins);
        let mut buf = vec![Complex64::new(0.0, 0.0); fft];
        for t in 0..frames {
            buf.iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
            for i in 0..win {
                let n = (t * hop + i) as isize - pad as isize;
                if n >= 0 && (n as usize) < x.len() {
                    buf[i] = Complex64::new(x[n as usize] * self.window[i], 0.0);
                }
            }
            self.fwd.process(&mut buf);
            out.extend_from_slice(&buf[..bins]);
        }
        out
    }

    fn synthesize(&self, spec: &[Complex64], frames: usize, len: usize) -> Vec<f64> {
        let (win, hop, fft, bins) = (self.cfg.window, self.cfg.hop, self.cfg.fft, self.cfg.bins());
        let pad = self.pad();
        let total = (frames - 1) * hop + win;
        let mut acc = vec![0.0; total];
        let mut norm = vec![0.0; total];
        let mut buf = vec![Complex64::new(0.0, 0.0); fft];
        for t in 0..frames {
            let frame = &spec[t * bins..(t + 1) * bins];
            buf[..bins].copy_from_slice(frame);
            for k in bins..fft {
                buf[k] = frame[fft - k].conj();
            }
            // DC and Nyquist of a real signal are real
            buf[0].im = 0.0;
            if fft % 2 == 0 {
                buf[fft / 2].im = 0.0;
            }
            self.inv.process(&mut buf);
            for i in 0..win {
                let w = self.window[i];
                acc[t * hop + i] += buf[i].re / fft as f64 * w;
                norm[t * hop + i] += w * w;
            }
        }
        (0..len)
            .map(|n| {
                let j = n + pad;
                if j < total && norm[j] > 1e-10 {
                    acc[j] / norm[j]
                } else {
                    0.0
                }
            })
            .collect()
    }
}

/// Log-magnitude STFT of `ir` over `frames` centered frames.
pub fn spectrogram(ir: &ImpulseResponse, cfg: StftConfig, frames: usize) -> SpectrogramTarget {
    let stft = Stft::new(cfg);
    let values = stft
        .analyze(ir.samples(), frames)
        .iter()
        .map(|c| (c.norm() + LOG_EPS).ln())
        .collect();
    SpectrogramTarget {
        frames,
        bins: cfg.bins(),
        values,
    }
}

/// Griffin-Lim reconstruction of a `len`-sample waveform from zero-phase
/// initial estimates and a fixed number of iterations.
pub fn synthesize_waveform(
    spec: &SpectrogramTarget,
    cfg: StftConfig,
    len: usize,
    sample_rate: u32,
    iterations: usize,
) -> Result<ImpulseResponse, FieldError> {
    if spec.bins != cfg.bins() || spec.frames == 0 {
        return Err(FieldError::ShapeError(format!(
            "{}x{} spectrogram for {} bins",
            spec.frames,
            spec.bins,
            cfg.bins()
        )));
    }
    let stft = Stft::new(cfg);
    let mags = spec.magnitudes();
    let mut current: Vec<Complex64> = mags.iter().map(|&m| Complex64::new(m, 0.0)).collect();
    let mut x = stft.synthesize(&current, spec.frames, len);
    for _ in 0..iterations {
        let est = stft.analyze(&x, spec.frames);
        for ((c, e), &m) in current.iter_mut().zip(&est).zip(&mags) {
            let n = e.norm();
            *c = if n > 0.0 {
                e * (m / n)
            } else {
                Complex64::new(m, 0.0)
            };
        }
        x = stft.synthesize(&current, spec.frames, len);
    }
    ImpulseResponse::new(x, sample_rate).map_err(|e| FieldError::NumericalError(e.to_string()))
}

use serde::{Deserialize, Serialize};

use super::FieldError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct StftConfig {
    pub window: usize,
    pub hop: usize,
    pub fft: usize,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self {
            window: 256,
            hop: 128,
            fft: 256,
        }
    }
}

impl StftConfig {
    pub fn bins(&self) -> usize {
        self.fft / 2 + 1
    }

    /// Frame count for a signal of `samples` samples (centered framing).
    pub fn frames(&self, samples: usize) -> usize {
        samples / self.hop + 1
    }
}

/// Architecture and output grid of a field model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FieldConfig {
    pub num_bounce_points: usize,
    pub encoding_levels: usize,
    pub hidden_width: usize,
    pub hidden_layers: usize,
    pub stft: StftConfig,
    /// Length of generated RIRs in samples; fixes the frame count.
    pub rir_samples: usize,
    pub sample_rate: u32,
}

impl Default for FieldConfig {
    fn default() -> Self {
        Self {
            num_bounce_points: 64,
            encoding_levels: 8,
            hidden_width: 256,
            hidden_layers: 4,
            stft: StftConfig::default(),
            rir_samples: 8000,
            sample_rate: 16000,
        }
    }
}

impl FieldConfig {
    pub fn frames(&self) -> usize {
        self.stft.frames(self.rir_samples)
    }

    pub fn bins(&self) -> usize {
        self.stft.bins()
    }

    pub fn output_len(&self) -> usize {
        self.frames() * self.bins()
    }

    /// Width of one encoded point.
    pub fn encoding_width(&self) -> usize {
        6 * self.encoding_levels
    }

    pub fn validate(&self) -> Result<(), FieldError> {
        let s = &self.stft;
        let positive = [
            self.num_bounce_points,
            self.encoding_levels,
            self.hidden_width,
            self.hidden_layers,
            s.window,
            s.hop,
            s.fft,
            self.rir_samples,
            self.sample_rate as usize,
        ];
        if positive.contains(&0) {
            return Err(FieldError::InvalidInput(format!(
                "all field config values must be positive: {self:?}"
            )));
        }
        if s.window > s.fft || s.hop > s.window {
            return Err(FieldError::InvalidInput("need hop <= window <= fft".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grid() {
        let c = FieldConfig::default();
        assert_eq!(c.bins(), 129);
        assert_eq!(c.frames(), 63);
        assert_eq!(c.encoding_width(), 48);
        c.validate().unwrap();
    }

    #[test]
    fn toml_defaults_fill_in() {
        let c: FieldConfig = toml::from_str("hidden_width = 32\n[stft]\nhop = 64\n").unwrap();
        assert_eq!(c.hidden_width, 32);
        assert_eq!(c.stft.hop, 64);
        assert_eq!(c.stft.window, 256);
        assert_eq!(c.encoding_levels, 8);
    }
}

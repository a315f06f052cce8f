use serde::{Deserialize, Serialize};

use crate::codebook::MAX_PROBES;
use crate::encoding::{EncodingConfig, HashLookup, MAX_FEATURES};
use crate::error::{Error, Result};
use crate::mlp::OutputActivation;

/// Output channels of the image decoder (RGB).
pub const RGB: usize = 3;

/// Model hyperparameters. Defaults follow the recommended values for image fitting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HyperParams {
    /// Feature codebook size per level.
    pub n_f: u32,
    /// Index (confidence) codebook rows per level.
    pub n_c: u32,
    /// Probing range.
    pub n_p: u32,
    /// Feature width per level.
    pub features: u32,
    pub levels: u32,
    pub n_min: u32,
    pub n_max: u32,
    /// Hidden width of the decoder.
    pub neurons: u32,
    pub hidden_layers: u32,
    pub activation: OutputActivation,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            n_f: 1 << 8,
            n_c: 1 << 16,
            n_p: 1 << 2,
            features: 2,
            levels: 16,
            n_min: 16,
            n_max: 512,
            neurons: 64,
            hidden_layers: 2,
            activation: OutputActivation::Linear,
        }
    }
}

impl HyperParams {
    /// Instant NGP equivalent: no index codebook, probing range one.
    pub fn is_baseline(&self) -> bool {
        self.n_p == 1
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidHyperparameter(msg));
        for (name, value) in [("n_f", self.n_f), ("n_c", self.n_c), ("n_p", self.n_p)] {
            if value == 0 || !value.is_power_of_two() {
                return bad(format!("{name} must be a power of two, got {value}"));
            }
        }
        if self.n_p > self.n_f {
            return bad(format!(
                "n_p={} does not divide n_f={}",
                self.n_p, self.n_f
            ));
        }
        if self.n_p as usize > MAX_PROBES {
            return bad(format!("n_p={} exceeds the supported maximum {MAX_PROBES}", self.n_p));
        }
        if self.n_f > 1 << 24 || self.n_c > 1 << 24 {
            return bad("n_f and n_c are limited to 2^24".into());
        }
        if self.features == 0 || self.features as usize > MAX_FEATURES {
            return bad(format!("features={} not in 1..={MAX_FEATURES}", self.features));
        }
        if self.levels == 0 || self.levels > 64 {
            return bad(format!("levels={} not in 1..=64", self.levels));
        }
        if self.n_min == 0 || self.n_max < self.n_min {
            return bad(format!(
                "resolutions must satisfy 1 <= n_min <= n_max, got {} and {}",
                self.n_min, self.n_max
            ));
        }
        if self.neurons == 0 || self.neurons > u16::MAX as u32 {
            return bad(format!("neurons={} not in 1..=65535", self.neurons));
        }
        if self.hidden_layers > 16 {
            return bad(format!("hidden_layers={} exceeds 16", self.hidden_layers));
        }
        Ok(())
    }

    pub fn encoding_config(&self, dims: usize, hash_lookup: HashLookup) -> EncodingConfig {
        EncodingConfig {
            dims,
            levels: self.levels,
            n_min: self.n_min,
            n_max: self.n_max,
            n_f: self.n_f,
            n_c: self.n_c,
            n_p: self.n_p,
            features: self.features as usize,
            hash_lookup,
        }
    }

    /// Decoder layer widths from the encoding width to `outputs`.
    pub fn mlp_widths(&self, outputs: usize) -> Vec<usize> {
        let mut widths = vec![(self.levels * self.features) as usize];
        widths.extend(std::iter::repeat_n(self.neurons as usize, self.hidden_layers as usize));
        widths.push(outputs);
        widths
    }

    pub fn mlp_param_count(&self, outputs: usize) -> usize {
        self.mlp_widths(outputs)
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        HyperParams::default().validate().unwrap();
    }

    #[test]
    fn rejects_non_power_of_two_and_bad_ratio() {
        let mut h = HyperParams { n_p: 3, ..Default::default() };
        assert!(h.validate().is_err());
        h.n_p = 1 << 7;
        h.n_f = 1 << 6;
        assert!(h.validate().is_err());
    }

    #[test]
    fn mlp_shape() {
        let h = HyperParams::default();
        assert_eq!(h.mlp_widths(3), vec![32, 64, 64, 3]);
        assert_eq!(h.mlp_param_count(3), 32 * 64 + 64 + 64 * 64 + 64 + 64 * 3 + 3);
    }
}

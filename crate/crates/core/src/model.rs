//! Trained parameters plus the descriptor needed to rebuild their network.

use alloc::format;
use alloc::vec::Vec;

use crate::detect::DetectorArch;
use crate::error::{invalid, Result};
use crate::nn::Network;
use crate::predict::SpectrumArch;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case"))]
pub enum ModelArch {
    Spectrum(SpectrumArch),
    Detector(DetectorArch),
}

impl ModelArch {
    pub fn network(&self) -> Result<Network> {
        match self {
            ModelArch::Spectrum(a) => a.network(),
            ModelArch::Detector(a) => a.network(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub arch: ModelArch,
    pub values: Vec<f64>,
}

impl ModelParams {
    /// Checks the parameter count against the descriptor and that every value is finite.
    pub fn new(arch: ModelArch, values: Vec<f64>) -> Result<Self> {
        let expected = arch.network()?.param_count();
        if values.len() != expected {
            return Err(invalid(format!(
                "{} parameters, architecture needs {expected}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("non-finite parameter"));
        }
        Ok(Self { arch, values })
    }
}

//! Spatial-spectrum predictors: SRP-PHAT and the trainable spectrum network.

mod net;
mod srp;

pub use net::{
    mse_loss, mse_loss_grad, net_backward, net_forward, train_spectrum_net, InputNorm,
    SpectrumArch, SpectrumNet, SpectrumNetConfig, SpectrumNetPredictor,
};
pub use srp::{srp_phat_predict, srp_power, ArrayManifold, SrpOutput, SrpPhat};

use crate::error::Result;
use crate::frontend::FeatureTensor;
use crate::spectrum::SpatialSpectrum;

/// Anything that maps one feature tensor to a 360-point spectrum.
/// Implementations must be deterministic and return finite values.
pub trait SpectrumPredictor {
    fn predict(&self, feature: &FeatureTensor) -> Result<SpatialSpectrum>;
}

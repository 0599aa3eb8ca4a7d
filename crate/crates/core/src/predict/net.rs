//! Desk-scale spectrum network.
//!
//! Stage layout, input `(2C, T, F)`:
//! two strided convolutions along frequency, residual blocks, a 1×1
//! convolution whose 360 output channels are the DOA axis, a swap of the DOA
//! and frequency axes, two convolutions over (time, DOA) with the DOA axis
//! wrapping around, a mean over time and a sigmoid.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::SpectrumPredictor;
use crate::error::{invalid, Result};
use crate::frontend::FeatureTensor;
use crate::model::{ModelArch, ModelParams};
use crate::nn::{
    self, Conv2d, Layer, Network, Objective, Shape, Tensor, TrainConfig, TrainOutcome,
};
use crate::spectrum::{SpatialSpectrum, AZIMUTH_BINS};

/// How a feature tensor is scaled before entering the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum InputNorm {
    /// Divide the whole tensor by its RMS.
    Rms,
    /// Per time-frequency cell, rotate all mics so mic 0 has zero phase and
    /// scale the mic vector to unit norm. Keeps only inter-mic phase and
    /// level differences.
    #[default]
    PhaseReference,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SpectrumArch {
    pub frames: usize,
    pub bins: usize,
    /// Feature channels, `2C`.
    pub channels: usize,
    /// `[first strided conv, second strided conv and residual trunk, DOA head]`.
    pub widths: Vec<usize>,
    pub residual_blocks: usize,
    pub strides: Vec<usize>,
    pub freq_kernel: usize,
    pub input_norm: InputNorm,
}

impl SpectrumArch {
    pub fn input_shape(&self) -> Shape {
        Shape::new(self.channels, self.frames, self.bins)
    }

    pub fn layers(&self) -> Result<Vec<Layer>> {
        if self.widths.len() != 3 || self.widths.contains(&0) {
            return Err(invalid("spectrum net needs three positive widths"));
        }
        if self.strides.len() != 2 || self.strides.contains(&0) {
            return Err(invalid("spectrum net needs two positive strides"));
        }
        if self.residual_blocks == 0 {
            return Err(invalid("spectrum net needs at least one residual block"));
        }
        let (w0, w1, head) = (self.widths[0], self.widths[1], self.widths[2]);
        let k = self.freq_kernel;
        let mut layers = vec![
            Layer::Conv2d(Conv2d::new(w0, (1, k)).stride(1, self.strides[0])),
            Layer::Affine,
            Layer::Relu,
            Layer::Conv2d(Conv2d::new(w1, (1, k)).stride(1, self.strides[1])),
            Layer::Affine,
            Layer::Relu,
        ];
        for _ in 0..self.residual_blocks {
            layers.push(Layer::Residual(vec![
                Layer::Conv2d(Conv2d::new(w1, (3, 3)).padding(1, 1)),
                Layer::Affine,
                Layer::Relu,
                Layer::Conv2d(Conv2d::new(w1, (3, 3)).padding(1, 1)),
                Layer::Affine,
            ]));
            layers.push(Layer::Relu);
        }
        layers.extend([
            // linear: a ReLU here can silence a DOA for good
            Layer::Conv2d(Conv2d::new(AZIMUTH_BINS, (1, 1))),
            Layer::SwapChannelsWidth,
            Layer::Conv2d(Conv2d::new(head, (3, 3)).padding(1, 1).circular()),
            Layer::Affine,
            Layer::Relu,
            Layer::Conv2d(Conv2d::new(1, (3, 3)).padding(1, 1).circular()),
            Layer::MeanHeight,
            Layer::Sigmoid,
        ]);
        Ok(layers)
    }

    pub fn network(&self) -> Result<Network> {
        let net = Network::new(self.input_shape(), &self.layers()?)?;
        if net.output_shape() != Shape::new(1, 1, AZIMUTH_BINS) {
            return Err(invalid(format!(
                "spectrum net ends in {:?}",
                net.output_shape()
            )));
        }
        Ok(net)
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct SpectrumNetConfig {
    pub widths: Vec<usize>,
    pub residual_blocks: usize,
    pub strides: Vec<usize>,
    pub freq_kernel: usize,
    pub input_norm: InputNorm,
    pub train: TrainConfig,
}

impl Default for SpectrumNetConfig {
    fn default() -> Self {
        Self {
            widths: vec![8, 16, 32],
            residual_blocks: 2,
            strides: vec![4, 4],
            freq_kernel: 7,
            input_norm: InputNorm::PhaseReference,
            train: TrainConfig::default(),
        }
    }
}

impl SpectrumNetConfig {
    /// Architecture for features of shape `(frames, bins, channels)`.
    pub fn arch(&self, frames: usize, bins: usize, channels: usize) -> SpectrumArch {
        SpectrumArch {
            frames,
            bins,
            channels,
            widths: self.widths.clone(),
            residual_blocks: self.residual_blocks,
            strides: self.strides.clone(),
            freq_kernel: self.freq_kernel,
            input_norm: self.input_norm,
        }
    }
}

const OUTPUT_INIT_SCALE: f64 = 0.1;
/// Sigmoid of this is about 0.05.
const OUTPUT_INIT_BIAS: f64 = -3.0;

/// Mean squared error over the 360 azimuths.
pub fn mse_loss(pred: &SpatialSpectrum, target: &SpatialSpectrum) -> f64 {
    mse(pred.values(), target.values())
}

/// Gradient of [`mse_loss`] with respect to each predicted value.
pub fn mse_loss_grad(pred: &[f64], target: &[f64]) -> Vec<f64> {
    let n = pred.len() as f64;
    pred.iter()
        .zip(target)
        .map(|(p, t)| 2.0 * (p - t) / n)
        .collect()
}

fn mse(pred: &[f64], target: &[f64]) -> f64 {
    pred.iter()
        .zip(target)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / pred.len() as f64
}

#[derive(Debug, Clone)]
pub struct SpectrumNet {
    pub arch: SpectrumArch,
    network: Network,
}

impl SpectrumNet {
    pub fn new(arch: SpectrumArch) -> Result<Self> {
        let network = arch.network()?;
        Ok(Self { arch, network })
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    /// Normalized `(2C, T, F)` input tensor for one feature.
    pub fn prepare(&self, feature: &FeatureTensor) -> Result<Tensor> {
        let a = &self.arch;
        if feature.shape() != (a.frames, a.bins, a.channels) {
            return Err(invalid(format!(
                "feature shape {:?}, network expects {:?}",
                feature.shape(),
                (a.frames, a.bins, a.channels)
            )));
        }
        let (t_n, f_n, c_n) = feature.shape();
        let mics = c_n / 2;
        let mut x = Tensor::zeros(self.arch.input_shape());
        let at = |c: usize, t: usize, f: usize| (c * t_n + t) * f_n + f;
        match a.input_norm {
            InputNorm::Rms => {
                let ms = feature
                    .data
                    .iter()
                    .map(|&v| f64::from(v) * f64::from(v))
                    .sum::<f64>()
                    / feature.data.len() as f64;
                let scale = if ms > 0.0 { 1.0 / libm::sqrt(ms) } else { 0.0 };
                for t in 0..t_n {
                    for f in 0..f_n {
                        for c in 0..c_n {
                            x.data[at(c, t, f)] = f64::from(feature.at(t, f, c)) * scale;
                        }
                    }
                }
            }
            InputNorm::PhaseReference => {
                for t in 0..t_n {
                    for f in 0..f_n {
                        let reference = feature.complex(t, f, 0);
                        let norm = libm::sqrt(
                            (0..mics)
                                .map(|m| feature.complex(t, f, m).norm_sqr())
                                .sum::<f64>(),
                        );
                        let rmag = reference.norm();
                        if norm <= 1e-20 || rmag <= 1e-20 {
                            continue;
                        }
                        let rot = reference.conj() / (rmag * norm);
                        for m in 0..mics {
                            let z = feature.complex(t, f, m) * rot;
                            x.data[at(m, t, f)] = z.re;
                            x.data[at(mics + m, t, f)] = z.im;
                        }
                    }
                }
            }
        }
        Ok(x)
    }

    pub fn forward(&self, params: &[f64], feature: &FeatureTensor) -> Result<SpatialSpectrum> {
        let x = self.prepare(feature)?;
        self.forward_prepared(params, &x)
    }

    pub fn forward_prepared(&self, params: &[f64], x: &Tensor) -> Result<SpatialSpectrum> {
        let y = self.network.forward(params, x)?;
        SpatialSpectrum::from_prediction(y.data)
    }

    /// MSE loss against `target`; its gradient is added into `grad`.
    pub fn loss_grad_prepared(
        &self,
        params: &[f64],
        x: &Tensor,
        target: &[f64],
        grad: &mut [f64],
    ) -> Result<f64> {
        let (y, cache) = self.network.forward_cached(params, x)?;
        let dy = Tensor::from_vec(y.shape, mse_loss_grad(&y.data, target))?;
        self.network.backward(params, &cache, &dy, grad);
        Ok(mse(&y.data, target))
    }

    /// Default initialization, except that the output layer starts small
    /// with a negative bias so initial outputs sit near the sparse targets
    /// instead of at 0.5. Pulling everything down from 0.5 tends to kill the
    /// head's ReLUs.
    pub fn init_params(&self, seed: u64) -> ModelParams {
        let mut values = self.network.init_params(seed);
        let last = self.network.last_layer_params();
        let bias = last.end - 1;
        for v in &mut values[last.start..bias] {
            *v *= OUTPUT_INIT_SCALE;
        }
        values[bias] = OUTPUT_INIT_BIAS;
        ModelParams {
            arch: ModelArch::Spectrum(self.arch.clone()),
            values,
        }
    }
}

fn spectrum_net(params: &ModelParams) -> Result<SpectrumNet> {
    match &params.arch {
        ModelArch::Spectrum(a) => SpectrumNet::new(a.clone()),
        ModelArch::Detector(_) => Err(invalid("expected a spectrum network, got a detector")),
    }
}

pub fn net_forward(params: &ModelParams, feature: &FeatureTensor) -> Result<SpatialSpectrum> {
    spectrum_net(params)?.forward(&params.values, feature)
}

/// Gradient of the MSE loss with respect to every parameter.
pub fn net_backward(
    params: &ModelParams,
    feature: &FeatureTensor,
    target: &SpatialSpectrum,
) -> Result<Vec<f64>> {
    let net = spectrum_net(params)?;
    let x = net.prepare(feature)?;
    let mut grad = vec![0.0; params.values.len()];
    net.loss_grad_prepared(&params.values, &x, target.values(), &mut grad)?;
    Ok(grad)
}

struct SpectrumObjective<'a> {
    net: &'a SpectrumNet,
    inputs: Vec<Tensor>,
    targets: Vec<&'a [f64]>,
}

impl<'a> SpectrumObjective<'a> {
    fn new(net: &'a SpectrumNet, data: &'a [(FeatureTensor, SpatialSpectrum)]) -> Result<Self> {
        let inputs = data
            .iter()
            .map(|(f, _)| net.prepare(f))
            .collect::<Result<Vec<_>>>()?;
        let targets = data.iter().map(|(_, s)| s.values()).collect();
        Ok(Self {
            net,
            inputs,
            targets,
        })
    }
}

impl Objective for SpectrumObjective<'_> {
    fn len(&self) -> usize {
        self.inputs.len()
    }

    fn param_count(&self) -> usize {
        self.net.network.param_count()
    }

    fn batch_loss_grad(&self, params: &[f64], batch: &[usize], grad: &mut [f64]) -> f64 {
        let mut sample = vec![0.0; grad.len()];
        let mut total = 0.0;
        for &i in batch {
            sample.fill(0.0);
            total += self
                .net
                .loss_grad_prepared(params, &self.inputs[i], self.targets[i], &mut sample)
                .unwrap_or(f64::NAN);
            for (g, s) in grad.iter_mut().zip(&sample) {
                *g += s;
            }
        }
        let inv = 1.0 / batch.len() as f64;
        for g in grad.iter_mut() {
            *g *= inv;
        }
        total * inv
    }

    fn loss(&self, params: &[f64]) -> f64 {
        let total: f64 = self
            .inputs
            .iter()
            .zip(&self.targets)
            .map(|(x, t)| match self.net.network.forward(params, x) {
                Ok(y) => mse(&y.data, t),
                Err(_) => f64::NAN,
            })
            .sum();
        total / self.inputs.len() as f64
    }
}

/// Trains a spectrum network on `(feature, target spectrum)` pairs. With an
/// empty `validation` set, the best parameters are chosen by training loss.
pub fn train_spectrum_net(
    cfg: &SpectrumNetConfig,
    train: &[(FeatureTensor, SpatialSpectrum)],
    validation: &[(FeatureTensor, SpatialSpectrum)],
) -> Result<(ModelParams, TrainOutcome)> {
    let Some((first, _)) = train.first() else {
        return Err(invalid("empty training set"));
    };
    let (frames, bins, channels) = first.shape();
    let net = SpectrumNet::new(cfg.arch(frames, bins, channels))?;
    let init = net
        .init_params(crate::seed::derive(cfg.train.seed, "spectrum-init", 0))
        .values;
    let objective = SpectrumObjective::new(&net, train)?;
    let val = SpectrumObjective::new(&net, validation)?;
    let outcome = nn::train(&objective, Some(&val), init, &cfg.train)?;
    let params = ModelParams::new(
        ModelArch::Spectrum(net.arch.clone()),
        outcome.params.clone(),
    )?;
    Ok((params, outcome))
}

/// A trained spectrum network behind the predictor contract.
#[derive(Debug, Clone)]
pub struct SpectrumNetPredictor {
    net: SpectrumNet,
    params: ModelParams,
}

impl SpectrumNetPredictor {
    pub fn new(params: ModelParams) -> Result<Self> {
        let net = spectrum_net(&params)?;
        Ok(Self { net, params })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }
}

impl SpectrumPredictor for SpectrumNetPredictor {
    fn predict(&self, feature: &FeatureTensor) -> Result<SpatialSpectrum> {
        self.net.forward(&self.params.values, feature)
    }
}

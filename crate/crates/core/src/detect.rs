//! Active-source detection on (residual) spatial spectra.
//!
//! Labels follow the stop convention: `1` means no active source remains,
//! `0` means keep extracting. A detector score above 0.5 means stop.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Result};
use crate::model::{ModelArch, ModelParams};
use crate::nn::{
    self, Conv2d, Layer, Network, Objective, Shape, Tensor, TrainConfig, TrainOutcome,
};
use crate::spectrum::{global_peak, DoaSet, Peeler, SpatialSpectrum, AZIMUTH_BINS};

/// Scores a spectrum in `[0, 1]`; above 0.5 means stop.
pub trait StopDetector {
    fn score(&self, spectrum: &SpatialSpectrum) -> f64;

    fn should_stop(&self, spectrum: &SpatialSpectrum) -> bool {
        self.score(spectrum) > 0.5
    }
}

/// Stop once the strongest remaining value falls below `floor`. A test
/// oracle for the extraction loop, not a learned detector.
pub fn rule_detector(spectrum: &SpatialSpectrum, floor: f64) -> f64 {
    if global_peak(spectrum).1 < floor {
        1.0
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RuleDetector {
    pub floor: f64,
}

impl RuleDetector {
    pub fn new(floor: f64) -> Result<Self> {
        if !(floor > 0.0 && floor < 1.0) {
            return Err(invalid(format!(
                "rule floor must lie in (0, 1), got {floor}"
            )));
        }
        Ok(Self { floor })
    }
}

impl StopDetector for RuleDetector {
    fn score(&self, spectrum: &SpatialSpectrum) -> f64 {
        rule_detector(spectrum, self.floor)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualSample {
    pub spectrum: SpatialSpectrum,
    /// 1 = stop (nothing left), 0 = continue.
    pub label: u8,
}

/// For a spectrum with `k` true sources, emits the residuals after `0..=k`
/// peel steps: the first `k` labeled continue, the last labeled stop.
pub fn build_residual_dataset(
    spectra: &[(SpatialSpectrum, DoaSet)],
    radius: u32,
) -> Vec<ResidualSample> {
    let mut out = Vec::new();
    for (spec, doas) in spectra {
        let k = doas.len();
        let mut peeler = Peeler::new(spec, radius);
        for i in 0..=k {
            out.push(ResidualSample {
                spectrum: peeler.residual().clone(),
                label: u8::from(i == k),
            });
            if i < k {
                peeler.peel();
            }
        }
    }
    out
}

/// Binary cross entropy with scores clamped to `[1e-7, 1 - 1e-7]`.
pub fn bce_loss(scores: &[f64], labels: &[u8]) -> f64 {
    assert_eq!(scores.len(), labels.len());
    if scores.is_empty() {
        return 0.0;
    }
    scores
        .iter()
        .zip(labels)
        .map(|(&s, &z)| bce_term(s, z))
        .sum::<f64>()
        / scores.len() as f64
}

/// Gradient of [`bce_loss`] with respect to each score; zero where clamped.
pub fn bce_loss_grad(scores: &[f64], labels: &[u8]) -> Vec<f64> {
    let n = scores.len() as f64;
    scores
        .iter()
        .zip(labels)
        .map(|(&s, &z)| bce_term_grad(s, z) / n)
        .collect()
}

const CLAMP: f64 = 1e-7;

fn bce_term(score: f64, label: u8) -> f64 {
    let s = score.clamp(CLAMP, 1.0 - CLAMP);
    if label == 1 {
        -libm::log(s)
    } else {
        -libm::log(1.0 - s)
    }
}

fn bce_term_grad(score: f64, label: u8) -> f64 {
    if !(CLAMP..=1.0 - CLAMP).contains(&score) {
        return 0.0;
    }
    if label == 1 {
        -1.0 / score
    } else {
        1.0 / (1.0 - score)
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DetectorArch {
    /// Filters per stride-2 convolution block along the azimuth axis.
    pub conv_widths: Vec<usize>,
    pub kernel: usize,
    /// Hidden fully connected widths; a single sigmoid unit follows.
    pub fc_widths: Vec<usize>,
}

impl DetectorArch {
    pub fn layers(&self) -> Result<Vec<Layer>> {
        if self.kernel == 0 || self.conv_widths.contains(&0) || self.fc_widths.contains(&0) {
            return Err(invalid("detector widths and kernel must be positive"));
        }
        let mut layers = Vec::new();
        for &w in &self.conv_widths {
            layers.push(Layer::Conv2d(
                Conv2d::new(w, (1, self.kernel))
                    .stride(1, 2)
                    .padding(0, self.kernel / 2)
                    .circular(),
            ));
            layers.push(Layer::Affine);
            layers.push(Layer::Relu);
        }
        layers.push(Layer::Flatten);
        for &w in &self.fc_widths {
            layers.push(Layer::Dense { out: w });
            layers.push(Layer::Relu);
        }
        layers.push(Layer::Dense { out: 1 });
        layers.push(Layer::Sigmoid);
        Ok(layers)
    }

    pub fn network(&self) -> Result<Network> {
        Network::new(Shape::new(1, 1, AZIMUTH_BINS), &self.layers()?)
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct DetectorNetConfig {
    pub conv_widths: Vec<usize>,
    pub kernel: usize,
    pub fc_widths: Vec<usize>,
    pub train: TrainConfig,
}

impl Default for DetectorNetConfig {
    fn default() -> Self {
        Self {
            conv_widths: vec![8, 16, 32],
            kernel: 5,
            fc_widths: vec![32, 8],
            train: TrainConfig::default(),
        }
    }
}

impl DetectorNetConfig {
    pub fn arch(&self) -> DetectorArch {
        DetectorArch {
            conv_widths: self.conv_widths.clone(),
            kernel: self.kernel,
            fc_widths: self.fc_widths.clone(),
        }
    }
}

/// Centers the `[0, 1]` spectrum on zero. An empty residual is then a
/// constant -0.5 that the weights can act on, rather than an all-zero input
/// only the biases can respond to.
pub fn detector_input(spectrum: &SpatialSpectrum) -> Tensor {
    Tensor {
        shape: Shape::new(1, 1, AZIMUTH_BINS),
        data: spectrum.values().iter().map(|v| v - 0.5).collect(),
    }
}

fn detector_network(params: &ModelParams) -> Result<Network> {
    match &params.arch {
        ModelArch::Detector(a) => a.network(),
        ModelArch::Spectrum(_) => Err(invalid("expected a detector, got a spectrum network")),
    }
}

/// Detector score in `(0, 1)`.
pub fn detector_forward(params: &ModelParams, spectrum: &SpatialSpectrum) -> Result<f64> {
    let net = detector_network(params)?;
    Ok(net.forward(&params.values, &detector_input(spectrum))?.data[0])
}

/// Gradient of the single-sample BCE loss with respect to every parameter.
pub fn detector_backward(
    params: &ModelParams,
    spectrum: &SpatialSpectrum,
    label: u8,
) -> Result<Vec<f64>> {
    let net = detector_network(params)?;
    let mut grad = vec![0.0; params.values.len()];
    sample_loss_grad(
        &net,
        &params.values,
        &detector_input(spectrum),
        label,
        1.0,
        &mut grad,
    )?;
    Ok(grad)
}

fn sample_loss_grad(
    net: &Network,
    params: &[f64],
    x: &Tensor,
    label: u8,
    weight: f64,
    grad: &mut [f64],
) -> Result<f64> {
    let (y, cache) = net.forward_cached(params, x)?;
    let s = y.data[0];
    let dy = Tensor {
        shape: y.shape,
        data: vec![weight * bce_term_grad(s, label)],
    };
    net.backward(params, &cache, &dy, grad);
    Ok(weight * bce_term(s, label))
}

/// A trained detector behind the stop contract.
#[derive(Debug, Clone)]
pub struct NetDetector {
    network: Network,
    params: ModelParams,
}

impl NetDetector {
    pub fn new(params: ModelParams) -> Result<Self> {
        Ok(Self {
            network: detector_network(&params)?,
            params,
        })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }
}

impl StopDetector for NetDetector {
    fn score(&self, spectrum: &SpatialSpectrum) -> f64 {
        self.network
            .forward(&self.params.values, &detector_input(spectrum))
            .map_or(f64::NAN, |y| y.data[0])
    }
}

/// Weighted BCE where each class carries half of the total weight.
struct DetectorObjective<'a> {
    net: &'a Network,
    inputs: Vec<Tensor>,
    labels: Vec<u8>,
    weights: [f64; 2],
}

impl<'a> DetectorObjective<'a> {
    fn new(net: &'a Network, data: &[ResidualSample], weights: [f64; 2]) -> Self {
        Self {
            net,
            inputs: data.iter().map(|s| detector_input(&s.spectrum)).collect(),
            labels: data.iter().map(|s| s.label).collect(),
            weights,
        }
    }
}

/// Inverse class-frequency weights `[continue, stop]`.
pub fn class_weights(data: &[ResidualSample]) -> [f64; 2] {
    let pos = data.iter().filter(|s| s.label == 1).count();
    let neg = data.len() - pos;
    let w = |n: usize| {
        if n == 0 {
            0.0
        } else {
            data.len() as f64 / (2.0 * n as f64)
        }
    };
    [w(neg), w(pos)]
}

impl Objective for DetectorObjective<'_> {
    fn len(&self) -> usize {
        self.inputs.len()
    }

    fn param_count(&self) -> usize {
        self.net.param_count()
    }

    fn batch_loss_grad(&self, params: &[f64], batch: &[usize], grad: &mut [f64]) -> f64 {
        let inv = 1.0 / batch.len() as f64;
        let mut total = 0.0;
        for &i in batch {
            let label = self.labels[i];
            let w = self.weights[usize::from(label)] * inv;
            total += sample_loss_grad(self.net, params, &self.inputs[i], label, w, grad)
                .unwrap_or(f64::NAN);
        }
        total
    }

    fn loss(&self, params: &[f64]) -> f64 {
        let total: f64 = self
            .inputs
            .iter()
            .zip(&self.labels)
            .map(|(x, &z)| match self.net.forward(params, x) {
                Ok(y) => self.weights[usize::from(z)] * bce_term(y.data[0], z),
                Err(_) => f64::NAN,
            })
            .sum();
        total / self.inputs.len() as f64
    }
}

/// Trains a detector with class-balanced BCE. Both labels must be present
/// in the training set.
pub fn train_detector(
    cfg: &DetectorNetConfig,
    train: &[ResidualSample],
    validation: &[ResidualSample],
) -> Result<(ModelParams, TrainOutcome)> {
    if train.iter().any(|s| s.label > 1) {
        return Err(invalid("labels must be 0 or 1"));
    }
    let weights = class_weights(train);
    if weights.contains(&0.0) {
        return Err(invalid(
            "detector training needs both stop and continue samples",
        ));
    }
    let arch = cfg.arch();
    let net = arch.network()?;
    let mut init = net.init_params(crate::seed::derive(cfg.train.seed, "detector-init", 0));
    let last = net.last_layer_params();
    for v in &mut init[last.clone()] {
        *v *= OUTPUT_INIT_SCALE;
    }
    init[last.end - 1] = OUTPUT_INIT_BIAS;
    let objective = DetectorObjective::new(&net, train, weights);
    let val = DetectorObjective::new(&net, validation, weights);
    let outcome = nn::train(&objective, Some(&val), init, &cfg.train)?;
    let params = ModelParams::new(ModelArch::Detector(arch), outcome.params.clone())?;
    Ok((params, outcome))
}

/// The output layer starts small and biased toward stop. Samples that end up
/// with every hidden unit silent (near-empty residuals, typically) then
/// already score as stop; otherwise only the output bias could move them,
/// one learning-rate step at a time.
const OUTPUT_INIT_SCALE: f64 = 0.1;
const OUTPUT_INIT_BIAS: f64 = 2.0;

/// Unweighted mean BCE of a detector over a sample set.
pub fn detector_bce(params: &ModelParams, data: &[ResidualSample]) -> Result<f64> {
    let det = NetDetector::new(params.clone())?;
    let scores: Vec<f64> = data.iter().map(|s| det.score(&s.spectrum)).collect();
    let labels: Vec<u8> = data.iter().map(|s| s.label).collect();
    Ok(bce_loss(&scores, &labels))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectrum::encode;

    fn doas(v: &[u16]) -> DoaSet {
        DoaSet::from_azimuths(v).unwrap()
    }

    #[test]
    fn residual_dataset_shapes() {
        let zero = SpatialSpectrum::zeros();
        let s = build_residual_dataset(&[(zero.clone(), DoaSet::new())], 16);
        assert_eq!(
            s,
            vec![ResidualSample {
                spectrum: zero,
                label: 1
            }]
        );

        let two = encode(&doas(&[40, 200]), 8.0);
        let s = build_residual_dataset(&[(two.clone(), doas(&[40, 200]))], 16);
        assert_eq!(s.iter().map(|r| r.label).collect::<Vec<_>>(), vec![0, 0, 1]);
        assert_eq!(s[0].spectrum, two);

        let one = build_residual_dataset(&[(encode(&doas(&[90]), 8.0), doas(&[90]))], 16);
        let (az, v) = global_peak(&one[1].spectrum);
        let want = libm::exp(-289.0 / 64.0);
        assert!((v - want).abs() < 1e-12);
        assert!((v - 0.010_94).abs() < 1e-5);
        assert_eq!(az, 73);
        assert_eq!(one[1].spectrum.get(107), v);
    }

    #[test]
    fn rule_examples() {
        let s = encode(&doas(&[90]), 8.0);
        assert_eq!(rule_detector(&s, 0.5), 0.0);
        assert_eq!(rule_detector(&SpatialSpectrum::zeros(), 0.5), 1.0);
        let residual = crate::spectrum::zero_neighborhood(&s, 90, 16);
        assert_eq!(rule_detector(&residual, 0.5), 1.0);
        assert!(RuleDetector::new(0.0).is_err());
        assert!(RuleDetector::new(1.0).is_err());
    }

    #[test]
    fn bce_examples() {
        assert!(bce_loss(&[1.0 - 1e-7], &[1]) < 1.1e-7);
        assert!((bce_loss(&[0.5], &[1]) - core::f64::consts::LN_2).abs() < 1e-12);
        assert!((bce_loss(&[0.2], &[0]) - bce_loss(&[0.8], &[1])).abs() < 1e-15);
        // clamping keeps the loss finite
        assert!(bce_loss(&[0.0, 1.0], &[1, 0]).is_finite());
    }

    #[test]
    fn zero_final_layer_scores_half() {
        let arch = DetectorNetConfig::default().arch();
        let net = arch.network().unwrap();
        let mut values = net.init_params(3);
        let last = net.last_layer_params();
        values[last].fill(0.0);
        let p = ModelParams::new(ModelArch::Detector(arch), values).unwrap();
        let s = encode(&doas(&[10]), 8.0);
        assert_eq!(detector_forward(&p, &s).unwrap(), 0.5);
    }

    #[test]
    fn scores_in_open_interval_and_deterministic() {
        let arch = DetectorNetConfig::default().arch();
        let net = arch.network().unwrap();
        let p = ModelParams::new(ModelArch::Detector(arch), net.init_params(4)).unwrap();
        for az in [0u16, 77, 300] {
            let s = encode(&doas(&[az]), 8.0);
            let a = detector_forward(&p, &s).unwrap();
            assert!(a > 0.0 && a < 1.0);
            assert_eq!(a, detector_forward(&p, &s).unwrap());
        }
    }

    #[test]
    fn single_class_is_rejected() {
        let data = vec![
            ResidualSample {
                spectrum: SpatialSpectrum::zeros(),
                label: 1
            };
            4
        ];
        assert!(matches!(
            train_detector(&DetectorNetConfig::default(), &data, &[]),
            Err(crate::Error::InvalidInput(_))
        ));
    }

    #[test]
    fn class_weights_balance() {
        let mk = |label| ResidualSample {
            spectrum: SpatialSpectrum::zeros(),
            label,
        };
        let data = vec![mk(0), mk(0), mk(0), mk(1)];
        let w = class_weights(&data);
        assert!((w[0] * 3.0 - w[1]).abs() < 1e-12);
        assert!((w[0] * 3.0 + w[1] - 4.0).abs() < 1e-12);
    }
}

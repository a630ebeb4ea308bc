//! The consensual classifier with tappable intermediate layers, and the
//! adversary head that reads one tapped feature.
//!
//! Layers are numbered from 1. Tap `i` exposes the post-activation output of
//! layer `i`; the final layer `N` emits logits and cannot be tapped.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::autodiff::{OpRecord, Tape, Var};
use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::tensor::Tensor;

pub const MODEL_MAGIC: &[u8; 8] = b"PRIVNET1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    None,
}

impl Activation {
    fn as_str(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::None => "none",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSpec {
    pub width: usize,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn relu(width: usize) -> Self {
        LayerSpec { width, activation: Activation::Relu }
    }

    pub fn linear(width: usize) -> Self {
        LayerSpec { width, activation: Activation::None }
    }
}

impl fmt::Display for LayerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.width, self.activation.as_str())
    }
}

impl FromStr for LayerSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (width, act) = s.trim().split_once(':').unwrap_or((s.trim(), "relu"));
        let width: usize = width.trim().parse().map_err(|_| Error::config(format!("bad layer width in {s:?}")))?;
        if width == 0 {
            return Err(Error::config("layer width must be at least 1"));
        }
        let activation = match act.trim() {
            "relu" => Activation::Relu,
            "none" => Activation::None,
            other => return Err(Error::config(format!("unknown activation {other:?}"))),
        };
        Ok(LayerSpec { width, activation })
    }
}

/// Parses `"32:relu,16:relu,3:none"`. An empty string is an empty list.
pub fn parse_layer_specs(s: &str) -> Result<Vec<LayerSpec>> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(',').map(str::parse).collect()
}

pub fn format_layer_specs(layers: &[LayerSpec]) -> String {
    layers.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

/// Whether a pass registers parameters as trainable or as constants.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamMode {
    Trainable,
    Frozen,
}

/// Stack of affine layers with optional ReLU.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    input_dim: usize,
    layers: Vec<LayerSpec>,
    weights: Vec<Tensor>,
    biases: Vec<Tensor>,
}

impl Mlp {
    /// Glorot-uniform weights, zero biases, drawn layer by layer from `rng`.
    pub fn init(input_dim: usize, layers: &[LayerSpec], rng: &mut RngStream) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::config("input dimension must be at least 1"));
        }
        if layers.is_empty() {
            return Err(Error::config("a network needs at least one layer"));
        }
        let mut weights = Vec::with_capacity(layers.len());
        let mut biases = Vec::with_capacity(layers.len());
        let mut fan_in = input_dim;
        for spec in layers {
            if spec.width == 0 {
                return Err(Error::config("layer width must be at least 1"));
            }
            let limit = (6.0 / (fan_in + spec.width) as f64).sqrt();
            let data = (0..fan_in * spec.width).map(|_| rng.symmetric(limit)).collect();
            weights.push(Tensor::new(vec![fan_in, spec.width], data)?);
            biases.push(Tensor::zeros(&[spec.width]));
            fan_in = spec.width;
        }
        Ok(Mlp { input_dim, layers: layers.to_vec(), weights, biases })
    }

    fn from_parts(input_dim: usize, layers: Vec<LayerSpec>, flat: &[f64]) -> Result<Self> {
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        let mut fan_in = input_dim;
        let mut offset = 0;
        for spec in &layers {
            let wlen = fan_in * spec.width;
            weights.push(Tensor::new(vec![fan_in, spec.width], flat[offset..offset + wlen].to_vec())?);
            offset += wlen;
            biases.push(Tensor::new(vec![spec.width], flat[offset..offset + spec.width].to_vec())?);
            offset += spec.width;
            fan_in = spec.width;
        }
        Ok(Mlp { input_dim, layers, weights, biases })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(self.input_dim, |l| l.width)
    }

    /// Width of the output of layer `index` (1-based).
    pub fn width_of(&self, index: usize) -> usize {
        self.layers[index - 1].width
    }

    pub fn parameter_count(&self) -> usize {
        parameter_count(self.input_dim, &self.layers)
    }

    /// Parameters in registration order: `w1, b1, w2, b2, …`.
    pub fn params(&self) -> Vec<&Tensor> {
        self.weights.iter().zip(&self.biases).flat_map(|(w, b)| [w, b]).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.weights.iter_mut().zip(self.biases.iter_mut()).flat_map(|(w, b)| [w, b]).collect()
    }

    fn flat_params(&self) -> Vec<f64> {
        self.params().into_iter().flat_map(|t| t.data().iter().copied()).collect()
    }

    /// Registers the parameters on `tape` and runs every layer; returns the
    /// parameter slots and the output slot of each layer.
    pub fn forward(&self, tape: &mut Tape, input: Var, mode: ParamMode) -> Result<(Vec<Var>, Vec<Var>)> {
        let width = tape.value(input).dims2()?.1;
        if width != self.input_dim {
            return Err(Error::dim(format!("network expects {} input features, got {width}", self.input_dim)));
        }
        let params: Vec<Var> = self
            .params()
            .into_iter()
            .map(|t| match mode {
                ParamMode::Trainable => tape.param(t.clone()),
                ParamMode::Frozen => tape.constant(t.clone()),
            })
            .collect();
        let mut outputs = Vec::with_capacity(self.layers.len());
        let mut h = input;
        for (l, spec) in self.layers.iter().enumerate() {
            h = tape.affine(h, params[2 * l], params[2 * l + 1])?;
            if spec.activation == Activation::Relu {
                h = tape.relu(h)?;
            }
            outputs.push(h);
        }
        Ok((params, outputs))
    }
}

/// Number of weights and biases for an MLP of the given shape.
pub fn parameter_count(input_dim: usize, layers: &[LayerSpec]) -> usize {
    let mut fan_in = input_dim;
    let mut total = 0;
    for l in layers {
        total += fan_in * l.width + l.width;
        fan_in = l.width;
    }
    total
}

/// Slots produced by one classifier pass.
#[derive(Debug, Clone)]
pub struct ClassifierPass {
    pub params: Vec<Var>,
    pub feature: Var,
    pub logits: Var,
}

/// The consensual classifier: `N` layers, `D` output logits, and a set of
/// tappable layers strictly before `N`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierModel {
    net: Mlp,
    num_classes: usize,
    taps: Vec<usize>,
}

fn validate_classifier(layers: &[LayerSpec], num_classes: usize, taps: &[usize]) -> Result<()> {
    let last = layers.last().ok_or_else(|| Error::config("classifier needs at least one layer"))?;
    if num_classes < 2 {
        return Err(Error::config("classifier needs at least 2 classes"));
    }
    if last.width != num_classes {
        return Err(Error::config(format!(
            "final layer width {} must equal the number of classes {num_classes}",
            last.width
        )));
    }
    if last.activation != Activation::None {
        return Err(Error::config("final classifier layer must emit logits (activation none)"));
    }
    let n = layers.len();
    if let Some(&bad) = taps.iter().find(|&&t| t == 0 || t >= n) {
        return Err(Error::config(format!("tap {bad} is not a layer index in 1..{}", n - 1)));
    }
    Ok(())
}

fn normalize_taps(taps: &[usize]) -> Vec<usize> {
    let mut taps = taps.to_vec();
    taps.sort_unstable();
    taps.dedup();
    taps
}

impl ClassifierModel {
    pub fn build(
        input_dim: usize,
        layers: &[LayerSpec],
        num_classes: usize,
        taps: &[usize],
        rng: &mut RngStream,
    ) -> Result<Self> {
        validate_classifier(layers, num_classes, taps)?;
        let net = Mlp::init(input_dim, layers, rng)?;
        Ok(ClassifierModel { net, num_classes, taps: normalize_taps(taps) })
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub fn net_mut(&mut self) -> &mut Mlp {
        &mut self.net
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn taps(&self) -> &[usize] {
        &self.taps
    }

    pub fn parameter_count(&self) -> usize {
        self.net.parameter_count()
    }

    /// Width of the feature exposed at `tap`.
    pub fn tap_width(&self, tap: usize) -> Result<usize> {
        self.check_tap(tap)?;
        Ok(self.net.width_of(tap))
    }

    fn check_tap(&self, tap: usize) -> Result<()> {
        if self.taps.contains(&tap) {
            Ok(())
        } else {
            Err(Error::contract(format!("tap {tap} is not registered (taps: {:?})", self.taps)))
        }
    }

    /// Full forward pass that also exposes the output of layer `tap`.
    pub fn forward_with_tap(&self, tape: &mut Tape, input: Var, tap: usize, mode: ParamMode) -> Result<ClassifierPass> {
        self.check_tap(tap)?;
        let (params, outputs) = self.net.forward(tape, input, mode)?;
        let logits = *outputs.last().expect("validated non-empty");
        Ok(ClassifierPass { params, feature: outputs[tap - 1], logits })
    }

    /// Plain forward pass returning the logits slot.
    pub fn forward(&self, tape: &mut Tape, input: Var, mode: ParamMode) -> Result<(Vec<Var>, Var)> {
        let (params, outputs) = self.net.forward(tape, input, mode)?;
        Ok((params, *outputs.last().expect("validated non-empty")))
    }

    pub fn logits(&self, x: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let input = tape.constant(x.clone());
        let (_, logits) = self.forward(&mut tape, input, ParamMode::Frozen)?;
        Ok(tape.value(logits).clone())
    }

    /// Feature at `tap` for a batch, with no gradient bookkeeping.
    pub fn features(&self, x: &Tensor, tap: usize) -> Result<Tensor> {
        let mut tape = Tape::new();
        let input = tape.constant(x.clone());
        let pass = self.forward_with_tap(&mut tape, input, tap, ParamMode::Frozen)?;
        Ok(tape.value(pass.feature).clone())
    }

    pub fn predict(&self, x: &Tensor) -> Result<Vec<usize>> {
        self.logits(x)?.argmax_rows()
    }

    /// Primitive ops executed to classify `x`.
    pub fn inference_trace(&self, x: &Tensor) -> Result<Vec<OpRecord>> {
        let mut tape = Tape::new();
        let input = tape.constant(x.clone());
        self.forward(&mut tape, input, ParamMode::Frozen)?;
        Ok(tape.op_trace())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let taps = self.taps.iter().map(ToString::to_string).collect::<Vec<_>>().join(",");
        let header = format!(
            "kind=classifier\ninput_dim={}\nlayers={}\nclasses={}\ntaps={}\n",
            self.net.input_dim,
            format_layer_specs(&self.net.layers),
            self.num_classes,
            taps
        );
        encode(&header, &self.net.flat_params())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (header, payload) = decode_header(bytes, "classifier")?;
        let taps = header
            .get("taps")?
            .split(',')
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<usize>().map_err(|_| Error::format(format!("bad tap {s:?}"))))
            .collect::<Result<Vec<_>>>()?;
        validate_classifier(&header.layers, header.classes, &taps).map_err(|e| Error::format(e.to_string()))?;
        let flat = decode_params(payload, parameter_count(header.input_dim, &header.layers))?;
        let net = Mlp::from_parts(header.input_dim, header.layers, &flat)?;
        Ok(ClassifierModel { net, num_classes: header.classes, taps: normalize_taps(&taps) })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

/// Slots produced by one adversary pass.
#[derive(Debug, Clone)]
pub struct AdversaryPass {
    pub params: Vec<Var>,
    pub logits: Var,
    pub probs: Var,
}

/// Adversary head: `M` layers mapping the feature at one tap to `K`
/// private-class confidences (softmax over the final logits).
#[derive(Debug, Clone, PartialEq)]
pub struct AdversaryModel {
    net: Mlp,
    num_private_classes: usize,
    tap: usize,
}

impl AdversaryModel {
    /// `hidden` lists the layers before the final `K`-wide logit layer, which
    /// is appended here.
    pub fn build(
        feature_width: usize,
        hidden: &[LayerSpec],
        num_private_classes: usize,
        tap: usize,
        rng: &mut RngStream,
    ) -> Result<Self> {
        if num_private_classes < 2 {
            return Err(Error::config("adversary needs at least 2 private classes"));
        }
        let mut layers = hidden.to_vec();
        layers.push(LayerSpec::linear(num_private_classes));
        let net = Mlp::init(feature_width, &layers, rng)?;
        Ok(AdversaryModel { net, num_private_classes, tap })
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub fn net_mut(&mut self) -> &mut Mlp {
        &mut self.net
    }

    pub fn num_private_classes(&self) -> usize {
        self.num_private_classes
    }

    pub fn tap(&self) -> usize {
        self.tap
    }

    pub fn input_width(&self) -> usize {
        self.net.input_dim
    }

    pub fn parameter_count(&self) -> usize {
        self.net.parameter_count()
    }

    pub fn forward(&self, tape: &mut Tape, feature: Var, mode: ParamMode) -> Result<AdversaryPass> {
        let (params, outputs) = self.net.forward(tape, feature, mode)?;
        let logits = *outputs.last().expect("adversary has a final layer");
        let probs = tape.softmax(logits)?;
        Ok(AdversaryPass { params, logits, probs })
    }

    /// Private-class confidences for a batch of features.
    pub fn probs(&self, feature: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let input = tape.constant(feature.clone());
        let pass = self.forward(&mut tape, input, ParamMode::Frozen)?;
        Ok(tape.value(pass.probs).clone())
    }

    pub fn predict(&self, feature: &Tensor) -> Result<Vec<usize>> {
        self.probs(feature)?.argmax_rows()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = format!(
            "kind=adversary\ninput_dim={}\nlayers={}\nclasses={}\ntap={}\n",
            self.net.input_dim,
            format_layer_specs(&self.net.layers),
            self.num_private_classes,
            self.tap
        );
        encode(&header, &self.net.flat_params())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (header, payload) = decode_header(bytes, "adversary")?;
        let tap: usize = header.get("tap")?.parse().map_err(|_| Error::format("bad adversary tap"))?;
        let last = header.layers.last().ok_or_else(|| Error::format("adversary has no layers"))?;
        if last.width != header.classes || last.activation != Activation::None || header.classes < 2 {
            return Err(Error::format("adversary output layer does not match its class count"));
        }
        let flat = decode_params(payload, parameter_count(header.input_dim, &header.layers))?;
        let net = Mlp::from_parts(header.input_dim, header.layers, &flat)?;
        Ok(AdversaryModel { net, num_private_classes: header.classes, tap })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

// File layout: magic, u64 LE header length, UTF-8 header lines, then the
// parameters as f64 LE in registration order.

fn encode(header: &str, params: &[f64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + header.len() + 8 * params.len());
    out.extend_from_slice(MODEL_MAGIC);
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(header.as_bytes());
    for p in params {
        out.extend_from_slice(&p.to_le_bytes());
    }
    out
}

struct Header {
    fields: Vec<(String, String)>,
    input_dim: usize,
    layers: Vec<LayerSpec>,
    classes: usize,
}

impl Header {
    fn get(&self, key: &str) -> Result<&str> {
        self.fields
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| Error::format(format!("header is missing {key:?}")))
    }
}

fn decode_header<'a>(bytes: &'a [u8], kind: &str) -> Result<(Header, &'a [u8])> {
    if bytes.len() < 16 {
        return Err(Error::format("file too short for a model header"));
    }
    if &bytes[..8] != MODEL_MAGIC {
        if bytes.starts_with(b"PRIVNET") {
            return Err(Error::format(format!("unsupported model version {:?}", String::from_utf8_lossy(&bytes[..8]))));
        }
        return Err(Error::format("not a model file (bad magic)"));
    }
    let len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let body = &bytes[16..];
    if len > body.len() {
        return Err(Error::format("header length exceeds file size"));
    }
    let text = std::str::from_utf8(&body[..len]).map_err(|_| Error::format("header is not UTF-8"))?;
    let fields: Vec<(String, String)> = text
        .lines()
        .filter(|l| !l.is_empty())
        .map(|l| {
            l.split_once('=')
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .ok_or_else(|| Error::format(format!("malformed header line {l:?}")))
        })
        .collect::<Result<_>>()?;
    let mut header = Header { fields, input_dim: 0, layers: Vec::new(), classes: 0 };
    let found = header.get("kind")?;
    if found != kind {
        return Err(Error::format(format!("expected a {kind} model, found {found}")));
    }
    header.input_dim = header.get("input_dim")?.parse().map_err(|_| Error::format("bad input_dim"))?;
    header.layers = parse_layer_specs(header.get("layers")?).map_err(|e| Error::format(e.to_string()))?;
    header.classes = header.get("classes")?.parse().map_err(|_| Error::format("bad classes"))?;
    if header.input_dim == 0 || header.layers.is_empty() {
        return Err(Error::format("empty network in header"));
    }
    Ok((header, &body[len..]))
}

fn decode_params(payload: &[u8], expected: usize) -> Result<Vec<f64>> {
    if payload.len() != expected * 8 {
        return Err(Error::format(format!(
            "corrupt length: expected {} parameter bytes, found {}",
            expected * 8,
            payload.len()
        )));
    }
    Ok(payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8"))).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::streams;

    fn specs() -> Vec<LayerSpec> {
        vec![LayerSpec::relu(8), LayerSpec::relu(8), LayerSpec::linear(3)]
    }

    fn stream(seed: u64) -> RngStream {
        RngStream::derive(seed, streams::CLASSIFIER)
    }

    #[test]
    fn parameter_count_matches_hand_arithmetic() {
        let m = ClassifierModel::build(5, &specs(), 3, &[1, 2], &mut stream(1)).unwrap();
        assert_eq!(m.parameter_count(), 5 * 8 + 8 + 8 * 8 + 8 + 8 * 3 + 3);
        assert_eq!(m.parameter_count(), 147);
    }

    #[test]
    fn same_seed_gives_identical_parameters() {
        let a = ClassifierModel::build(5, &specs(), 3, &[1], &mut stream(9)).unwrap();
        let b = ClassifierModel::build(5, &specs(), 3, &[1], &mut stream(9)).unwrap();
        assert_eq!(a.to_bytes(), b.to_bytes());
        let c = ClassifierModel::build(5, &specs(), 3, &[1], &mut stream(10)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn init_respects_glorot_limit() {
        let m = ClassifierModel::build(5, &specs(), 3, &[1], &mut stream(2)).unwrap();
        let limit = (6.0f64 / 13.0).sqrt();
        assert!(m.net().params()[0].data().iter().all(|v| v.abs() <= limit));
        assert!(m.net().params()[1].data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn invalid_taps_and_heads_are_rejected() {
        let err = ClassifierModel::build(5, &specs(), 3, &[3], &mut stream(1));
        assert!(matches!(err, Err(Error::Config(_))));
        assert!(ClassifierModel::build(5, &specs(), 3, &[0], &mut stream(1)).is_err());
        assert!(ClassifierModel::build(5, &specs(), 4, &[1], &mut stream(1)).is_err());
        let relu_head = vec![LayerSpec::relu(8), LayerSpec::relu(3)];
        assert!(ClassifierModel::build(5, &relu_head, 3, &[1], &mut stream(1)).is_err());
    }

    #[test]
    fn unregistered_tap_is_a_contract_error() {
        let m = ClassifierModel::build(5, &specs(), 3, &[1], &mut stream(1)).unwrap();
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::zeros(&[2, 5]));
        assert!(matches!(m.forward_with_tap(&mut tape, x, 2, ParamMode::Frozen), Err(Error::Contract(_))));
    }

    #[test]
    fn identity_first_layer_exposes_input() {
        let layers = vec![LayerSpec::linear(3), LayerSpec::linear(2)];
        let mut m = ClassifierModel::build(3, &layers, 2, &[1], &mut stream(4)).unwrap();
        let mut params = m.net_mut().params_mut();
        let w = params[0].data_mut();
        w.fill(0.0);
        for i in 0..3 {
            w[i * 3 + i] = 1.0;
        }
        let x = Tensor::from_rows(&[vec![1.0, -2.0, 0.5], vec![0.0, 3.0, -4.0]]).unwrap();
        assert_eq!(m.features(&x, 1).unwrap(), x);
    }

    #[test]
    fn logits_do_not_depend_on_requested_tap() {
        let m = ClassifierModel::build(5, &specs(), 3, &[1, 2], &mut stream(3)).unwrap();
        let mut rng = RngStream::derive(5, "batch");
        let x = Tensor::new(vec![4, 5], (0..20).map(|_| rng.normal()).collect()).unwrap();
        let plain = m.logits(&x).unwrap();
        for tap in [1, 2] {
            let mut tape = Tape::new();
            let input = tape.constant(x.clone());
            let pass = m.forward_with_tap(&mut tape, input, tap, ParamMode::Trainable).unwrap();
            assert_eq!(tape.value(pass.logits), &plain);
        }
    }

    #[test]
    fn zero_adversary_is_uniform() {
        let mut adv = AdversaryModel::build(4, &[LayerSpec::relu(6)], 5, 1, &mut stream(1)).unwrap();
        for p in adv.net_mut().params_mut() {
            p.data_mut().fill(0.0);
        }
        let f = Tensor::from_rows(&[vec![1.0, 2.0, 3.0, 4.0], vec![-1.0, 0.0, 9.0, 2.0]]).unwrap();
        let probs = adv.probs(&f).unwrap();
        assert!(probs.data().iter().all(|&p| p == 0.2));
    }

    #[test]
    fn adversary_rejects_wrong_feature_width() {
        let adv = AdversaryModel::build(4, &[], 2, 1, &mut stream(1)).unwrap();
        assert!(matches!(adv.probs(&Tensor::zeros(&[1, 3])), Err(Error::Dimension(_))));
    }

    #[test]
    fn large_margin_feature_gives_confident_adversary() {
        // single linear layer, logits = (10·f, -10·f); at f = 1 the margin is 20
        let mut adv = AdversaryModel::build(1, &[], 2, 1, &mut stream(1)).unwrap();
        let mut params = adv.net_mut().params_mut();
        params[0].data_mut().copy_from_slice(&[10.0, -10.0]);
        params[1].data_mut().fill(0.0);
        let probs = adv.probs(&Tensor::from_rows(&[vec![1.0]]).unwrap()).unwrap();
        let expected = 1.0 / (1.0 + (-20.0f64).exp());
        assert!(probs.data()[0] > 0.99);
        assert!((probs.data()[0] - expected).abs() < 1e-12);
    }

    #[test]
    fn model_files_round_trip_bitwise() {
        let m = ClassifierModel::build(5, &specs(), 3, &[2, 1], &mut stream(8)).unwrap();
        let bytes = m.to_bytes();
        assert_eq!(&bytes[..8], MODEL_MAGIC);
        let back = ClassifierModel::from_bytes(&bytes).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.to_bytes(), bytes);

        let adv = AdversaryModel::build(8, &[LayerSpec::relu(4)], 2, 2, &mut stream(8)).unwrap();
        let abytes = adv.to_bytes();
        assert_eq!(AdversaryModel::from_bytes(&abytes).unwrap().to_bytes(), abytes);
    }

    #[test]
    fn damaged_files_are_format_errors() {
        let m = ClassifierModel::build(5, &specs(), 3, &[1], &mut stream(8)).unwrap();
        let bytes = m.to_bytes();
        for cut in [0, 10, bytes.len() - 1] {
            assert!(matches!(ClassifierModel::from_bytes(&bytes[..cut]), Err(Error::Format(_))));
        }
        let mut longer = bytes.clone();
        longer.push(0);
        assert!(matches!(ClassifierModel::from_bytes(&longer), Err(Error::Format(_))));
        let mut version = bytes.clone();
        version[7] = b'2';
        let err = ClassifierModel::from_bytes(&version).unwrap_err();
        assert!(err.to_string().contains("version"), "{err}");
        assert!(matches!(AdversaryModel::from_bytes(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn layer_spec_strings_parse() {
        let parsed = parse_layer_specs("32:relu, 16 ,3:none").unwrap();
        assert_eq!(parsed, vec![LayerSpec::relu(32), LayerSpec::relu(16), LayerSpec::linear(3)]);
        assert_eq!(format_layer_specs(&parsed), "32:relu,16:relu,3:none");
        assert!(parse_layer_specs("").unwrap().is_empty());
        assert!(parse_layer_specs("0:relu").is_err());
        assert!(parse_layer_specs("4:tanh").is_err());
    }
}

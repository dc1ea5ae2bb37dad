//! Differentiable classifiers: a linear model, a rectified MLP, and a small
//! two-block CNN. Parameters live in one flat [`ParamVector`]; all arithmetic
//! is `f64`.
//!
//! The per-sample loss is softmax cross-entropy. Gradients are exact
//! backpropagation of the mean loss over a batch.

mod conv;
mod dense;

use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::Sample;
use crate::error::{Error, Result};
use crate::rng::{self, derive_rng};
use conv::ConvShape;
use dense::Mat;

/// Rows evaluated per forward chunk when scoring large sets.
const EVAL_CHUNK: usize = 256;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Architecture {
    Linear,
    /// Fully connected rectifier layers of the given widths, then a linear head.
    Mlp {
        hidden: Vec<usize>,
    },
    /// Two blocks of 3x3 conv (same padding), rectifier, 2x2 max pool; then a
    /// linear head. Input is read as `channels × height × width`.
    CnnSmall {
        channels: usize,
        height: usize,
        width: usize,
        conv1: usize,
        conv2: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModelSpec {
    pub arch: Architecture,
    pub input_dim: usize,
    pub classes: usize,
}

/// One named tensor inside a [`ParamVector`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayoutEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl LayoutEntry {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Flat parameter snapshot with its tensor layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    values: Vec<f64>,
    layout: Arc<[LayoutEntry]>,
}

impl ParamVector {
    pub fn new(values: Vec<f64>, layout: Arc<[LayoutEntry]>) -> Result<Self> {
        let mut expected = 0;
        for e in layout.iter() {
            if e.offset != expected {
                return Err(Error::format(format!(
                    "layout entry {} starts at {} instead of {expected}",
                    e.name, e.offset
                )));
            }
            expected += e.len();
        }
        if expected != values.len() {
            return Err(Error::format(format!(
                "layout covers {expected} values but {} were given",
                values.len()
            )));
        }
        Ok(ParamVector { values, layout })
    }

    pub fn zeros_like(other: &ParamVector) -> Self {
        ParamVector {
            values: vec![0.0; other.values.len()],
            layout: other.layout.clone(),
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn layout(&self) -> &Arc<[LayoutEntry]> {
        &self.layout
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn segment(&self, name: &str) -> Option<&[f64]> {
        self.layout
            .iter()
            .find(|e| e.name == name)
            .map(|e| &self.values[e.range()])
    }

    pub fn segment_mut(&mut self, name: &str) -> Option<&mut [f64]> {
        let range = self.layout.iter().find(|e| e.name == name)?.range();
        Some(&mut self.values[range])
    }

    pub fn same_layout(&self, other: &ParamVector) -> bool {
        Arc::ptr_eq(&self.layout, &other.layout) || self.layout == other.layout
    }
}

/// Raw per-class network outputs for one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Logits(pub Vec<f64>);

impl Logits {
    pub fn argmax(&self) -> usize {
        argmax_first(&self.0)
    }
}

/// Index of the first maximum.
pub(crate) fn argmax_first(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Softmax cross-entropy `-log softmax(logits)[y]`, via log-sum-exp.
pub fn loss(logits: &Logits, y: usize) -> f64 {
    loss_slice(&logits.0, y)
}

pub(crate) fn loss_slice(z: &[f64], y: usize) -> f64 {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let s: f64 = z.iter().map(|&v| (v - m).exp()).sum();
    (m - z[y]) + s.ln()
}

/// Per-class losses `-log softmax(z)[c]` for every `c`.
pub fn class_losses(logits: &Logits) -> Vec<f64> {
    let z = &logits.0;
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let ln_s = z.iter().map(|&v| (v - m).exp()).sum::<f64>().ln();
    z.iter().map(|&v| (m - v) + ln_s).collect()
}

struct DenseLayer {
    name: String,
    w: std::ops::Range<usize>,
    b: std::ops::Range<usize>,
}

impl ModelSpec {
    pub fn linear(input_dim: usize, classes: usize) -> Self {
        ModelSpec {
            arch: Architecture::Linear,
            input_dim,
            classes,
        }
    }

    pub fn mlp(input_dim: usize, classes: usize, hidden: Vec<usize>) -> Self {
        ModelSpec {
            arch: Architecture::Mlp { hidden },
            input_dim,
            classes,
        }
    }

    pub fn cnn_small(channels: usize, height: usize, width: usize, conv1: usize, conv2: usize, classes: usize) -> Self {
        ModelSpec {
            arch: Architecture::CnnSmall {
                channels,
                height,
                width,
                conv1,
                conv2,
            },
            input_dim: channels * height * width,
            classes,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::arg("input dimension must be positive"));
        }
        if self.classes < 2 {
            return Err(Error::arg("a classifier needs at least 2 classes"));
        }
        match &self.arch {
            Architecture::Linear => {}
            Architecture::Mlp { hidden } => {
                if hidden.is_empty() || hidden.contains(&0) {
                    return Err(Error::arg("mlp hidden widths must be non-empty and positive"));
                }
            }
            &Architecture::CnnSmall {
                channels,
                height,
                width,
                conv1,
                conv2,
            } => {
                if channels * height * width != self.input_dim {
                    return Err(Error::arg(format!(
                        "cnn input {channels}x{height}x{width} does not match dimension {}",
                        self.input_dim
                    )));
                }
                if height % 4 != 0 || width % 4 != 0 || height == 0 || width == 0 {
                    return Err(Error::arg("cnn height and width must be positive multiples of 4"));
                }
                if channels == 0 || conv1 == 0 || conv2 == 0 {
                    return Err(Error::arg("cnn channel counts must be positive"));
                }
            }
        }
        Ok(())
    }

    pub fn layout(&self) -> Vec<LayoutEntry> {
        let mut entries = Vec::new();
        let mut offset = 0;
        let mut push = |name: String, shape: Vec<usize>| {
            let e = LayoutEntry { name, shape, offset };
            offset += e.len();
            entries.push(e);
        };
        match &self.arch {
            Architecture::Linear => {
                push("fc.weight".into(), vec![self.classes, self.input_dim]);
                push("fc.bias".into(), vec![self.classes]);
            }
            Architecture::Mlp { hidden } => {
                let mut prev = self.input_dim;
                for (i, &h) in hidden.iter().enumerate() {
                    push(format!("fc{}.weight", i + 1), vec![h, prev]);
                    push(format!("fc{}.bias", i + 1), vec![h]);
                    prev = h;
                }
                push("out.weight".into(), vec![self.classes, prev]);
                push("out.bias".into(), vec![self.classes]);
            }
            &Architecture::CnnSmall {
                channels,
                height,
                width,
                conv1,
                conv2,
            } => {
                push("conv1.weight".into(), vec![conv1, channels, 3, 3]);
                push("conv1.bias".into(), vec![conv1]);
                push("conv2.weight".into(), vec![conv2, conv1, 3, 3]);
                push("conv2.bias".into(), vec![conv2]);
                push(
                    "fc.weight".into(),
                    vec![self.classes, conv2 * (height / 4) * (width / 4)],
                );
                push("fc.bias".into(), vec![self.classes]);
            }
        }
        entries
    }

    pub fn param_count(&self) -> usize {
        self.layout().iter().map(LayoutEntry::len).sum()
    }

    /// SHA-256 of the canonical JSON encoding; stamped into checkpoint headers.
    pub fn hash(&self) -> [u8; 32] {
        let json = serde_json::to_vec(self).expect("spec serializes");
        Sha256::digest(&json).into()
    }

    /// Seeded initialization: weights drawn from N(0, gain/fan_in) with gain 2
    /// for layers feeding a rectifier and 1 for the output layer; zero biases.
    pub fn init(&self, seed: u64) -> Result<ParamVector> {
        self.validate()?;
        let layout: Arc<[LayoutEntry]> = self.layout().into();
        let mut values = vec![0.0; layout.iter().map(LayoutEntry::len).sum()];
        let mut rng = derive_rng(seed, &[rng::TAG_INIT]);
        let last_weight = layout
            .iter()
            .rposition(|e| e.name.ends_with(".weight"))
            .expect("every architecture has weights");
        for (idx, e) in layout.iter().enumerate() {
            if !e.name.ends_with(".weight") {
                continue;
            }
            let fan_in: usize = e.shape[1..].iter().product();
            let gain = if idx == last_weight { 1.0 } else { 2.0 };
            let std = (gain / fan_in as f64).sqrt();
            for v in &mut values[e.range()] {
                *v = std * rng.sample::<f64, _>(StandardNormal);
            }
        }
        ParamVector::new(values, layout)
    }

    fn check_params(&self, params: &ParamVector) -> Result<()> {
        let layout = self.layout();
        if params.layout().as_ref() != layout.as_slice() {
            return Err(Error::arg("parameter layout does not match the model spec"));
        }
        Ok(())
    }

    fn check_inputs<'a>(&self, xs: impl IntoIterator<Item = &'a [f64]>) -> Result<()> {
        for (i, x) in xs.into_iter().enumerate() {
            if x.len() != self.input_dim {
                return Err(Error::arg(format!(
                    "input {i} has {} features, model expects {}",
                    x.len(),
                    self.input_dim
                )));
            }
        }
        Ok(())
    }

    fn dense_layers(&self) -> Vec<DenseLayer> {
        let layout = self.layout();
        let find = |n: &str| {
            layout
                .iter()
                .find(|e| e.name == n)
                .map(LayoutEntry::range)
                .expect("layout entry exists")
        };
        match &self.arch {
            Architecture::Linear => vec![DenseLayer {
                name: "fc".into(),
                w: find("fc.weight"),
                b: find("fc.bias"),
            }],
            Architecture::Mlp { hidden } => {
                let mut layers: Vec<DenseLayer> = (1..=hidden.len())
                    .map(|i| DenseLayer {
                        name: format!("fc{i}"),
                        w: find(&format!("fc{i}.weight")),
                        b: find(&format!("fc{i}.bias")),
                    })
                    .collect();
                layers.push(DenseLayer {
                    name: "out".into(),
                    w: find("out.weight"),
                    b: find("out.bias"),
                });
                layers
            }
            Architecture::CnnSmall { .. } => vec![DenseLayer {
                name: "fc".into(),
                w: find("fc.weight"),
                b: find("fc.bias"),
            }],
        }
    }

    /// Logits for one input.
    pub fn forward(&self, params: &ParamVector, x: &[f64]) -> Result<Logits> {
        self.check_params(params)?;
        self.check_inputs([x])?;
        let input = Mat::from_rows(std::iter::once(x), self.input_dim);
        let trace = self.run(params, input)?;
        Ok(Logits(trace.logits.data))
    }

    /// Logits for each sample, in order.
    pub fn forward_batch(&self, params: &ParamVector, samples: &[Sample]) -> Result<Vec<Logits>> {
        self.check_params(params)?;
        self.check_inputs(samples.iter().map(|s| &s.features[..]))?;
        let mut out = Vec::with_capacity(samples.len());
        for chunk in samples.chunks(EVAL_CHUNK) {
            let input = Mat::from_rows(chunk.iter().map(|s| &s.features[..]), self.input_dim);
            let trace = self.run(params, input)?;
            out.extend(trace.logits.data.chunks_exact(self.classes).map(|r| Logits(r.to_vec())));
        }
        Ok(out)
    }

    /// Per-sample cross-entropy losses, in order.
    pub fn per_sample_losses(&self, params: &ParamVector, samples: &[Sample]) -> Result<Vec<f64>> {
        let logits = self.forward_batch(params, samples)?;
        Ok(logits.iter().zip(samples).map(|(z, s)| loss(z, s.label)).collect())
    }

    /// Mean per-sample loss.
    pub fn batch_risk(&self, params: &ParamVector, samples: &[Sample]) -> Result<f64> {
        if samples.is_empty() {
            return Err(Error::arg("empirical risk of an empty batch"));
        }
        let losses = self.per_sample_losses(params, samples)?;
        Ok(losses.iter().sum::<f64>() / samples.len() as f64)
    }

    /// Gradient of [`ModelSpec::batch_risk`] with respect to the parameters.
    pub fn grad(&self, params: &ParamVector, samples: &[Sample]) -> Result<ParamVector> {
        self.risk_and_grad(params, samples).map(|(_, g)| g)
    }

    pub fn risk_and_grad(&self, params: &ParamVector, samples: &[Sample]) -> Result<(f64, ParamVector)> {
        if samples.is_empty() {
            return Err(Error::arg("gradient of an empty batch"));
        }
        self.check_params(params)?;
        self.check_inputs(samples.iter().map(|s| &s.features[..]))?;
        let input = Mat::from_rows(samples.iter().map(|s| &s.features[..]), self.input_dim);
        let trace = self.run(params, input)?;

        let n = samples.len() as f64;
        let mut risk = 0.0;
        let mut dlogits = Mat::zeros(samples.len(), self.classes);
        for (i, s) in samples.iter().enumerate() {
            let z = trace.logits.row(i);
            risk += loss_slice(z, s.label);
            let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = z.iter().map(|&v| (v - m).exp()).sum();
            let row = &mut dlogits.data[i * self.classes..(i + 1) * self.classes];
            for (c, d) in row.iter_mut().enumerate() {
                let p = (z[c] - m).exp() / sum;
                *d = (p - if c == s.label { 1.0 } else { 0.0 }) / n;
            }
        }
        let grad = self.backward(params, trace, dlogits)?;
        Ok((risk / n, grad))
    }

    fn run(&self, params: &ParamVector, input: Mat) -> Result<Trace> {
        match &self.arch {
            Architecture::Linear | Architecture::Mlp { .. } => self.run_dense(params, input, None),
            Architecture::CnnSmall { .. } => self.run_cnn(params, input),
        }
    }

    fn run_dense(&self, params: &ParamVector, input: Mat, cnn: Option<CnnTrace>) -> Result<Trace> {
        let layers = self.dense_layers();
        let v = params.values();
        let mut acts = vec![input];
        for (l, layer) in layers.iter().enumerate() {
            let mut z = dense::affine(
                acts.last().expect("non-empty"),
                &v[layer.w.clone()],
                &v[layer.b.clone()],
            );
            if !z.all_finite() {
                return Err(Error::Numeric {
                    at: format!("layer {}", layer.name),
                });
            }
            if l + 1 < layers.len() {
                dense::relu_in_place(&mut z);
            }
            acts.push(z);
        }
        let logits = acts.pop().expect("output layer");
        Ok(Trace { acts, logits, cnn })
    }

    fn cnn_shapes(&self) -> (ConvShape, ConvShape) {
        let Architecture::CnnSmall {
            channels,
            height,
            width,
            conv1,
            conv2,
        } = self.arch
        else {
            unreachable!("cnn shapes of a dense model")
        };
        (
            ConvShape {
                in_ch: channels,
                out_ch: conv1,
                height,
                width,
            },
            ConvShape {
                in_ch: conv1,
                out_ch: conv2,
                height: height / 2,
                width: width / 2,
            },
        )
    }

    fn run_cnn(&self, params: &ParamVector, input: Mat) -> Result<Trace> {
        let (s1, s2) = self.cnn_shapes();
        let (w1, b1) = (
            params.segment("conv1.weight").unwrap(),
            params.segment("conv1.bias").unwrap(),
        );
        let (w2, b2) = (
            params.segment("conv2.weight").unwrap(),
            params.segment("conv2.bias").unwrap(),
        );
        let per_sample: Vec<Result<ConvCache>> = (0..input.rows)
            .into_par_iter()
            .map(|i| {
                let x = input.row(i);
                let mut a1 = conv::conv3x3(s1, x, w1, b1);
                if !a1.iter().all(|v| v.is_finite()) {
                    return Err(Error::Numeric {
                        at: "layer conv1".into(),
                    });
                }
                a1.iter_mut().for_each(|v| *v = v.max(0.0));
                let (p1, arg1) = conv::maxpool2(s1.out_ch, s1.height, s1.width, &a1);
                let mut a2 = conv::conv3x3(s2, &p1, w2, b2);
                if !a2.iter().all(|v| v.is_finite()) {
                    return Err(Error::Numeric {
                        at: "layer conv2".into(),
                    });
                }
                a2.iter_mut().for_each(|v| *v = v.max(0.0));
                let (p2, arg2) = conv::maxpool2(s2.out_ch, s2.height, s2.width, &a2);
                Ok(ConvCache {
                    a1,
                    arg1,
                    p1,
                    a2,
                    arg2,
                    p2,
                })
            })
            .collect();
        let caches = per_sample.into_iter().collect::<Result<Vec<_>>>()?;
        let feat_dim = s2.out_ch * (s2.height / 2) * (s2.width / 2);
        let features = Mat::from_rows(caches.iter().map(|c| &c.p2[..]), feat_dim);
        self.run_dense(params, features, Some(CnnTrace { input, caches }))
    }

    fn backward(&self, params: &ParamVector, trace: Trace, dlogits: Mat) -> Result<ParamVector> {
        let layers = self.dense_layers();
        let v = params.values();
        let mut grad = ParamVector::zeros_like(params);
        let g = grad.values_mut();
        let is_cnn = trace.cnn.is_some();

        let mut dz = dlogits;
        for l in (0..layers.len()).rev() {
            let layer = &layers[l];
            let x = &trace.acts[l];
            let want_dx = l > 0 || is_cnn;
            let (gw, gb) = split_two(g, layer.w.clone(), layer.b.clone());
            let dx = dense::affine_backward(x, &v[layer.w.clone()], &dz, gw, gb, want_dx);
            match dx {
                Some(mut dx) if l > 0 => {
                    dense::relu_mask(&mut dx, x);
                    dz = dx;
                }
                Some(dx) => dz = dx,
                None => break,
            }
        }

        if let Some(cnn) = trace.cnn {
            let (s1, s2) = self.cnn_shapes();
            let w2 = params.segment("conv2.weight").unwrap();
            let conv_len = params
                .layout()
                .iter()
                .find(|e| e.name == "conv2.bias")
                .map(|e| e.offset + e.len())
                .unwrap();
            let w1_len = s1.weight_len();
            let b1_len = s1.out_ch;
            let w2_len = s2.weight_len();
            let dfeat = dz;
            let per_sample: Vec<Vec<f64>> = (0..cnn.input.rows)
                .into_par_iter()
                .map(|i| {
                    let c = &cnn.caches[i];
                    let mut local = vec![0.0; conv_len];
                    let (gw1, rest) = local.split_at_mut(w1_len);
                    let (gb1, rest) = rest.split_at_mut(b1_len);
                    let (gw2, gb2) = rest.split_at_mut(w2_len);

                    let mut da2 = conv::maxpool2_backward(c.a2.len(), &c.arg2, dfeat.row(i));
                    mask_rectified(&mut da2, &c.a2);
                    let dp1 = conv::conv3x3_backward(s2, &c.p1, w2, &da2, gw2, gb2, true).expect("requested");
                    let mut da1 = conv::maxpool2_backward(c.a1.len(), &c.arg1, &dp1);
                    mask_rectified(&mut da1, &c.a1);
                    conv::conv3x3_backward(s1, cnn.input.row(i), &[], &da1, gw1, gb1, false);
                    local
                })
                .collect();
            let conv_grad = &mut g[..conv_len];
            for local in &per_sample {
                for (acc, v) in conv_grad.iter_mut().zip(local) {
                    *acc += v;
                }
            }
        }

        if !grad.values().iter().all(|v| v.is_finite()) {
            return Err(Error::Numeric { at: "gradient".into() });
        }
        Ok(grad)
    }
}

fn mask_rectified(d: &mut [f64], activated: &[f64]) {
    for (dv, &a) in d.iter_mut().zip(activated) {
        if a <= 0.0 {
            *dv = 0.0;
        }
    }
}

/// Borrows two disjoint ranges `a` (before) and `b` (after) of `v` mutably.
fn split_two(v: &mut [f64], a: std::ops::Range<usize>, b: std::ops::Range<usize>) -> (&mut [f64], &mut [f64]) {
    debug_assert!(a.end <= b.start);
    let (lo, hi) = v.split_at_mut(b.start);
    (&mut lo[a], &mut hi[..b.end - b.start])
}

struct ConvCache {
    a1: Vec<f64>,
    arg1: Vec<usize>,
    p1: Vec<f64>,
    a2: Vec<f64>,
    arg2: Vec<usize>,
    p2: Vec<f64>,
}

struct CnnTrace {
    input: Mat,
    caches: Vec<ConvCache>,
}

struct Trace {
    /// Input of each dense layer (post-rectifier for hidden layers).
    acts: Vec<Mat>,
    logits: Mat,
    cnn: Option<CnnTrace>,
}

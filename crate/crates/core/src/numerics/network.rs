use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::gemm::gemm;
use super::params::{ParamArray, ParamSet};
use super::{NumericsError, Result};

/// Negative-side slope of every LeakyReLU in the crate.
pub const LEAKY_SLOPE: f64 = 0.01;

static NEXT_UID: AtomicU64 = AtomicU64::new(1);

fn fresh_uid() -> u64 {
    NEXT_UID.fetch_add(1, Ordering::Relaxed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    LeakyRelu,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::LeakyRelu if z <= 0.0 => LEAKY_SLOPE * z,
            _ => z,
        }
    }

    #[inline]
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::LeakyRelu if z <= 0.0 => LEAKY_SLOPE,
            _ => 1.0,
        }
    }

    fn init_gain(self) -> f64 {
        match self {
            Activation::LeakyRelu => (2.0 / (1.0 + LEAKY_SLOPE * LEAKY_SLOPE)).sqrt(),
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InputShape {
    Image {
        channels: usize,
        height: usize,
        width: usize,
    },
    Flat(usize),
}

impl InputShape {
    pub fn len(&self) -> usize {
        match *self {
            InputShape::Image {
                channels,
                height,
                width,
            } => channels * height * width,
            InputShape::Flat(n) => n,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LayerSpec {
    /// Valid (unpadded) square convolution.
    Conv {
        out_channels: usize,
        kernel: usize,
        stride: usize,
        activation: Activation,
    },
    /// Fully connected layer; flattens image-shaped input.
    Dense {
        units: usize,
        activation: Activation,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input: InputShape,
    pub layers: Vec<LayerSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Geometry {
    Conv {
        in_c: usize,
        in_h: usize,
        in_w: usize,
        out_c: usize,
        out_h: usize,
        out_w: usize,
        kernel: usize,
        stride: usize,
        act: Activation,
    },
    Dense {
        inputs: usize,
        outputs: usize,
        act: Activation,
    },
}

impl Geometry {
    fn act(&self) -> Activation {
        match *self {
            Geometry::Conv { act, .. } | Geometry::Dense { act, .. } => act,
        }
    }

    fn weight_shape(&self) -> Vec<usize> {
        match *self {
            Geometry::Conv {
                in_c, out_c, kernel, ..
            } => vec![out_c, in_c, kernel, kernel],
            Geometry::Dense {
                inputs, outputs, ..
            } => vec![outputs, inputs],
        }
    }

    fn bias_len(&self) -> usize {
        match *self {
            Geometry::Conv { out_c, .. } => out_c,
            Geometry::Dense { outputs, .. } => outputs,
        }
    }

    fn fan_in(&self) -> usize {
        match *self {
            Geometry::Conv { in_c, kernel, .. } => in_c * kernel * kernel,
            Geometry::Dense { inputs, .. } => inputs,
        }
    }

    fn output_len(&self) -> usize {
        match *self {
            Geometry::Conv {
                out_c,
                out_h,
                out_w,
                ..
            } => out_c * out_h * out_w,
            Geometry::Dense { outputs, .. } => outputs,
        }
    }
}

impl NetworkSpec {
    /// Dense stack: `hidden` LeakyReLU layers followed by an output layer.
    pub fn mlp(inputs: usize, hidden: &[usize], outputs: usize, output: Activation) -> Self {
        let mut layers: Vec<LayerSpec> = hidden
            .iter()
            .map(|&units| LayerSpec::Dense {
                units,
                activation: Activation::LeakyRelu,
            })
            .collect();
        layers.push(LayerSpec::Dense {
            units: outputs,
            activation: output,
        });
        Self {
            input: InputShape::Flat(inputs),
            layers,
        }
    }

    fn resolve(&self) -> Result<Vec<Geometry>> {
        if self.input.is_empty() {
            return Err(NumericsError::IncompatibleLayer {
                layer: 0,
                reason: "empty input".into(),
            });
        }
        let mut shape = self.input;
        let mut out = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            match *layer {
                LayerSpec::Conv {
                    out_channels,
                    kernel,
                    stride,
                    activation,
                } => {
                    let InputShape::Image {
                        channels,
                        height,
                        width,
                    } = shape
                    else {
                        return Err(NumericsError::IncompatibleLayer {
                            layer: i,
                            reason: "convolution needs image-shaped input".into(),
                        });
                    };
                    if out_channels == 0 || kernel == 0 || stride == 0 {
                        return Err(NumericsError::IncompatibleLayer {
                            layer: i,
                            reason: "zero channels, kernel or stride".into(),
                        });
                    }
                    if kernel > height || kernel > width {
                        return Err(NumericsError::IncompatibleLayer {
                            layer: i,
                            reason: format!("kernel {kernel} exceeds input {height}x{width}"),
                        });
                    }
                    let out_h = (height - kernel) / stride + 1;
                    let out_w = (width - kernel) / stride + 1;
                    out.push(Geometry::Conv {
                        in_c: channels,
                        in_h: height,
                        in_w: width,
                        out_c: out_channels,
                        out_h,
                        out_w,
                        kernel,
                        stride,
                        act: activation,
                    });
                    shape = InputShape::Image {
                        channels: out_channels,
                        height: out_h,
                        width: out_w,
                    };
                }
                LayerSpec::Dense { units, activation } => {
                    if units == 0 {
                        return Err(NumericsError::IncompatibleLayer {
                            layer: i,
                            reason: "zero units".into(),
                        });
                    }
                    out.push(Geometry::Dense {
                        inputs: shape.len(),
                        outputs: units,
                        act: activation,
                    });
                    shape = InputShape::Flat(units);
                }
            }
        }
        if out.is_empty() {
            return Err(NumericsError::IncompatibleLayer {
                layer: 0,
                reason: "network has no layers".into(),
            });
        }
        Ok(out)
    }

    /// Validates the layer chain and returns the number of scalars it owns.
    pub fn parameter_count(&self) -> Result<usize> {
        Ok(self
            .resolve()?
            .iter()
            .map(|g| g.weight_shape().iter().product::<usize>() + g.bias_len())
            .sum())
    }

    /// Per-layer output shapes as `(channels, height, width)`; dense layers
    /// report `(units, 1, 1)`.
    pub fn output_shapes(&self) -> Result<Vec<(usize, usize, usize)>> {
        Ok(self
            .resolve()?
            .iter()
            .map(|g| match *g {
                Geometry::Conv {
                    out_c,
                    out_h,
                    out_w,
                    ..
                } => (out_c, out_h, out_w),
                Geometry::Dense { outputs, .. } => (outputs, 1, 1),
            })
            .collect())
    }
}

/// Result of a backward pass.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub params: ParamSet,
    /// `dLoss/dInput`, laid out like the forward input.
    pub input: Vec<f64>,
}

struct LayerRecord {
    /// Dense: the layer input `[N, in]`. Conv: the im2col matrix `[CKK, N*P]`.
    input: Vec<f64>,
    /// Pre-activation values in output layout.
    pre: Vec<f64>,
}

/// Activation record of one forward pass, consumed by `backward`.
pub struct Tape {
    uid: u64,
    version: u64,
    batch: usize,
    layers: Vec<LayerRecord>,
}

impl Tape {
    pub fn batch(&self) -> usize {
        self.batch
    }

    /// Sign pattern of every LeakyReLU pre-activation (used to detect kinks
    /// crossed by finite differences).
    pub(crate) fn kink_pattern(&self, net: &Network) -> Vec<bool> {
        let mut out = Vec::new();
        for (rec, geo) in self.layers.iter().zip(&net.geometry) {
            if geo.act() == Activation::LeakyRelu {
                out.extend(rec.pre.iter().map(|&z| z > 0.0));
            }
        }
        out
    }
}

#[derive(Serialize, Deserialize)]
struct NetworkData {
    spec: NetworkSpec,
    params: ParamSet,
}

/// A network specification plus its parameters.
#[derive(Debug, Serialize, Deserialize)]
#[serde(try_from = "NetworkData", into = "NetworkData")]
pub struct Network {
    spec: NetworkSpec,
    geometry: Vec<Geometry>,
    params: ParamSet,
    uid: u64,
    version: u64,
}

impl Clone for Network {
    fn clone(&self) -> Self {
        Self {
            spec: self.spec.clone(),
            geometry: self.geometry.clone(),
            params: self.params.clone(),
            uid: fresh_uid(),
            version: 0,
        }
    }
}

impl PartialEq for Network {
    fn eq(&self, other: &Self) -> bool {
        self.spec == other.spec && self.params.bit_eq(&other.params)
    }
}

impl From<Network> for NetworkData {
    fn from(net: Network) -> Self {
        NetworkData {
            spec: net.spec,
            params: net.params,
        }
    }
}

impl TryFrom<NetworkData> for Network {
    type Error = NumericsError;

    fn try_from(data: NetworkData) -> Result<Self> {
        Network::with_params(data.spec, data.params)
    }
}

impl Network {
    /// Builds a network with Kaiming-uniform weights and zero biases.
    pub fn new<R: Rng + ?Sized>(spec: NetworkSpec, rng: &mut R) -> Result<Self> {
        let geometry = spec.resolve()?;
        let mut arrays = Vec::with_capacity(geometry.len() * 2);
        for (i, g) in geometry.iter().enumerate() {
            let mut w = ParamArray::zeros(format!("layer{i}.weight"), g.weight_shape());
            let bound = g.act().init_gain() * (3.0 / g.fan_in() as f64).sqrt();
            for v in w.data.iter_mut() {
                *v = rng.random_range(-bound..bound);
            }
            arrays.push(w);
            arrays.push(ParamArray::zeros(format!("layer{i}.bias"), vec![g.bias_len()]));
        }
        Ok(Self {
            spec,
            geometry,
            params: ParamSet { arrays },
            uid: fresh_uid(),
            version: 0,
        })
    }

    /// Builds a network around existing parameters, checking their shapes.
    pub fn with_params(spec: NetworkSpec, params: ParamSet) -> Result<Self> {
        let geometry = spec.resolve()?;
        if params.arrays.len() != geometry.len() * 2 {
            return Err(NumericsError::ParamCount {
                got: params.arrays.len(),
                expected: geometry.len() * 2,
            });
        }
        for (i, g) in geometry.iter().enumerate() {
            let w = &params.arrays[2 * i];
            let b = &params.arrays[2 * i + 1];
            if w.shape != g.weight_shape() || w.data.len() != w.shape.iter().product::<usize>() {
                return Err(NumericsError::ArrayShape {
                    name: w.name.clone(),
                });
            }
            if b.shape != [g.bias_len()] || b.data.len() != g.bias_len() {
                return Err(NumericsError::ArrayShape {
                    name: b.name.clone(),
                });
            }
        }
        Ok(Self {
            spec,
            geometry,
            params,
            uid: fresh_uid(),
            version: 0,
        })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    /// Mutable access to the parameters. Invalidates outstanding tapes.
    pub fn params_mut(&mut self) -> &mut ParamSet {
        self.version += 1;
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.count()
    }

    pub fn input_len(&self) -> usize {
        self.spec.input.len()
    }

    pub fn output_len(&self) -> usize {
        self.geometry.last().map_or(0, Geometry::output_len)
    }

    /// Forward pass over `batch` samples, recording a tape for `backward`.
    pub fn forward(&self, input: &[f64], batch: usize) -> Result<(Vec<f64>, Tape)> {
        let (out, tape) = self.run(input, batch, true)?;
        Ok((out, tape.expect("tape requested")))
    }

    /// Forward pass without recording activations.
    pub fn predict(&self, input: &[f64], batch: usize) -> Result<Vec<f64>> {
        Ok(self.run(input, batch, false)?.0)
    }

    /// Backpropagates `grad_output` through the recorded pass, returning
    /// parameter and input gradients.
    pub fn backward(&self, tape: Tape, grad_output: &[f64]) -> Result<Gradients> {
        let (params, input) = self.backprop(tape, grad_output, true)?;
        Ok(Gradients {
            params,
            input: input.unwrap_or_default(),
        })
    }

    /// Like `backward` but skips the input gradient of the first layer.
    pub fn backward_params(&self, tape: Tape, grad_output: &[f64]) -> Result<ParamSet> {
        Ok(self.backprop(tape, grad_output, false)?.0)
    }

    fn run(&self, input: &[f64], batch: usize, record: bool) -> Result<(Vec<f64>, Option<Tape>)> {
        let expected = self.input_len();
        if input.len() != batch * expected || batch == 0 {
            return Err(NumericsError::InputShape {
                got: input.len(),
                batch,
                expected,
            });
        }
        let mut records = Vec::new();
        let mut x = input.to_vec();
        for (li, g) in self.geometry.iter().enumerate() {
            let w = &self.params.arrays[2 * li].data;
            let b = &self.params.arrays[2 * li + 1].data;
            let (layer_input, z) = match *g {
                Geometry::Dense {
                    inputs, outputs, ..
                } => {
                    let mut z = Vec::with_capacity(batch * outputs);
                    for _ in 0..batch {
                        z.extend_from_slice(b);
                    }
                    gemm(batch, inputs, outputs, &x, false, w, true, 1.0, &mut z);
                    (x, z)
                }
                Geometry::Conv {
                    in_c,
                    in_h,
                    in_w,
                    out_c,
                    out_h,
                    out_w,
                    kernel,
                    stride,
                    ..
                } => {
                    let p = out_h * out_w;
                    let np = batch * p;
                    let ckk = in_c * kernel * kernel;
                    let cols = im2col(&x, batch, in_c, in_h, in_w, kernel, stride, out_h, out_w);
                    let mut tmp = vec![0.0; out_c * np];
                    gemm(out_c, ckk, np, w, false, &cols, false, 0.0, &mut tmp);
                    let mut z = vec![0.0; batch * out_c * p];
                    for c in 0..out_c {
                        for n in 0..batch {
                            let src = &tmp[c * np + n * p..c * np + (n + 1) * p];
                            let dst = &mut z[(n * out_c + c) * p..(n * out_c + c + 1) * p];
                            for (d, s) in dst.iter_mut().zip(src) {
                                *d = s + b[c];
                            }
                        }
                    }
                    (cols, z)
                }
            };
            let act = g.act();
            let a: Vec<f64> = match act {
                Activation::Identity => z.clone(),
                _ => z.iter().map(|&v| act.apply(v)).collect(),
            };
            if record {
                records.push(LayerRecord {
                    input: layer_input,
                    pre: z,
                });
            }
            x = a;
        }
        let tape = record.then(|| Tape {
            uid: self.uid,
            version: self.version,
            batch,
            layers: records,
        });
        Ok((x, tape))
    }

    fn backprop(
        &self,
        tape: Tape,
        grad_output: &[f64],
        need_input: bool,
    ) -> Result<(ParamSet, Option<Vec<f64>>)> {
        if tape.uid != self.uid {
            return Err(NumericsError::ForeignTape);
        }
        if tape.version != self.version {
            return Err(NumericsError::StaleTape);
        }
        let batch = tape.batch;
        let expected = batch * self.output_len();
        if grad_output.len() != expected {
            return Err(NumericsError::GradShape {
                got: grad_output.len(),
                expected,
            });
        }
        let mut grads = ParamSet::zeros_like(&self.params);
        let mut g = grad_output.to_vec();
        let mut records = tape.layers;
        for li in (0..self.geometry.len()).rev() {
            let geo = self.geometry[li];
            let rec = records.pop().expect("one record per layer");
            if geo.act() == Activation::LeakyRelu {
                for (gv, &z) in g.iter_mut().zip(&rec.pre) {
                    if z <= 0.0 {
                        *gv *= LEAKY_SLOPE;
                    }
                }
            }
            let w = &self.params.arrays[2 * li].data;
            let want_dx = li > 0 || need_input;
            let (dw_slot, rest) = grads.arrays[2 * li..].split_at_mut(1);
            let dw = &mut dw_slot[0].data;
            let db = &mut rest[0].data;
            match geo {
                Geometry::Dense {
                    inputs, outputs, ..
                } => {
                    gemm(outputs, batch, inputs, &g, true, &rec.input, false, 0.0, dw);
                    for row in g.chunks_exact(outputs) {
                        for (d, v) in db.iter_mut().zip(row) {
                            *d += v;
                        }
                    }
                    if want_dx {
                        let mut dx = vec![0.0; batch * inputs];
                        gemm(batch, outputs, inputs, &g, false, w, false, 0.0, &mut dx);
                        g = dx;
                    }
                }
                Geometry::Conv {
                    in_c,
                    in_h,
                    in_w,
                    out_c,
                    out_h,
                    out_w,
                    kernel,
                    stride,
                    ..
                } => {
                    let p = out_h * out_w;
                    let np = batch * p;
                    let ckk = in_c * kernel * kernel;
                    let mut tmp = vec![0.0; out_c * np];
                    for c in 0..out_c {
                        let mut acc = 0.0;
                        for n in 0..batch {
                            let src = &g[(n * out_c + c) * p..(n * out_c + c + 1) * p];
                            tmp[c * np + n * p..c * np + (n + 1) * p].copy_from_slice(src);
                            acc += src.iter().sum::<f64>();
                        }
                        db[c] = acc;
                    }
                    gemm(out_c, np, ckk, &tmp, false, &rec.input, true, 0.0, dw);
                    if want_dx {
                        let mut dcols = vec![0.0; ckk * np];
                        gemm(ckk, out_c, np, w, true, &tmp, false, 0.0, &mut dcols);
                        g = col2im(&dcols, batch, in_c, in_h, in_w, kernel, stride, out_h, out_w);
                    }
                }
            }
        }
        Ok((grads, need_input.then_some(g)))
    }
}

#[allow(clippy::too_many_arguments)]
fn im2col(
    x: &[f64],
    batch: usize,
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    s: usize,
    oh: usize,
    ow: usize,
) -> Vec<f64> {
    let p = oh * ow;
    let np = batch * p;
    let mut cols = vec![0.0; c * k * k * np];
    for ci in 0..c {
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let dst = &mut cols[row * np..(row + 1) * np];
                for n in 0..batch {
                    let img = &x[(n * c + ci) * h * w..(n * c + ci + 1) * h * w];
                    for oy in 0..oh {
                        let src = &img[(oy * s + ky) * w..];
                        let d = &mut dst[n * p + oy * ow..n * p + (oy + 1) * ow];
                        for (ox, dv) in d.iter_mut().enumerate() {
                            *dv = src[ox * s + kx];
                        }
                    }
                }
            }
        }
    }
    cols
}

#[allow(clippy::too_many_arguments)]
fn col2im(
    cols: &[f64],
    batch: usize,
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    s: usize,
    oh: usize,
    ow: usize,
) -> Vec<f64> {
    let p = oh * ow;
    let np = batch * p;
    let mut x = vec![0.0; batch * c * h * w];
    for ci in 0..c {
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let src = &cols[row * np..(row + 1) * np];
                for n in 0..batch {
                    let img = &mut x[(n * c + ci) * h * w..(n * c + ci + 1) * h * w];
                    for oy in 0..oh {
                        let base = (oy * s + ky) * w + kx;
                        let sv = &src[n * p + oy * ow..n * p + (oy + 1) * ow];
                        for (ox, v) in sv.iter().enumerate() {
                            img[base + ox * s] += v;
                        }
                    }
                }
            }
        }
    }
    x
}

//! Small dense networks with hand-written backpropagation.
//!
//! Weights are stored row-major, one row per output unit. The binary
//! format is the magic `FRLN`, a little-endian `u32` version and layer
//! count, then per layer its input width, output width (`u32`) and
//! activation (`u8`), followed by every layer's weights and biases as
//! little-endian `f64`.

use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;

use crate::Error;

const MAGIC: &[u8; 4] = b"FRLN";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Sigmoid,
    Identity,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
            Activation::Identity => z,
        }
    }

    /// Derivative in terms of the pre-activation `z` and output `y`.
    fn derivative(self, z: f64, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Identity => 1.0,
        }
    }

    fn code(self) -> u8 {
        match self {
            Activation::Relu => 0,
            Activation::Sigmoid => 1,
            Activation::Identity => 2,
        }
    }

    fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(Activation::Relu),
            1 => Some(Activation::Sigmoid),
            2 => Some(Activation::Identity),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Layer {
    /// Xavier-uniform weights, zero bias.
    pub fn xavier<R: Rng + ?Sized>(inputs: usize, outputs: usize, activation: Activation, rng: &mut R) -> Self {
        let limit = (6.0 / (inputs + outputs) as f64).sqrt();
        let weights = (0..inputs * outputs).map(|_| rng.random_range(-limit..=limit)).collect();
        Layer { inputs, outputs, weights, bias: vec![0.0; outputs], activation }
    }

    fn pre_activation(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .chunks_exact(self.inputs)
            .zip(&self.bias)
            .map(|(row, b)| row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b)
            .collect()
    }
}

/// Intermediate values of one forward pass.
#[derive(Debug, Clone)]
pub struct Cache {
    inputs: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
    output: Vec<f64>,
}

impl Cache {
    pub fn pre_activations(&self) -> &[Vec<f64>] {
        &self.pre
    }

    pub fn output(&self) -> &[f64] {
        &self.output
    }
}

/// Parameter gradients with the same shapes as the network.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(net: &DenseNet) -> Self {
        Gradients {
            weights: net.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            bias: net.layers.iter().map(|l| vec![0.0; l.bias.len()]).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
        for (a, b) in self.bias.iter_mut().zip(&other.bias) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }

    pub fn scale(&mut self, f: f64) {
        self.weights.iter_mut().chain(self.bias.iter_mut()).flatten().for_each(|x| *x *= f);
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().chain(&self.bias).flatten().all(|x| x.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseNet {
    pub layers: Vec<Layer>,
}

impl DenseNet {
    /// `sizes` holds the input width then every layer's width.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], activations: &[Activation], rng: &mut R) -> Self {
        assert_eq!(sizes.len(), activations.len() + 1, "one activation per layer");
        let layers = sizes
            .windows(2)
            .zip(activations)
            .map(|(w, &a)| Layer::xavier(w[0], w[1], a, rng))
            .collect();
        DenseNet { layers }
    }

    pub fn from_layers(layers: Vec<Layer>) -> Result<Self, Error> {
        if layers.is_empty() {
            return Err(Error::Neural("a network needs at least one layer".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.weights.len() != l.inputs * l.outputs || l.bias.len() != l.outputs {
                return Err(Error::Neural(format!("layer {i} has inconsistent shapes")));
            }
            if i > 0 && layers[i - 1].outputs != l.inputs {
                return Err(Error::Neural(format!("layer {i} expects {} inputs", l.inputs)));
            }
        }
        Ok(DenseNet { layers })
    }

    pub fn identity(n: usize) -> Self {
        let mut weights = vec![0.0; n * n];
        for i in 0..n {
            weights[i * n + i] = 1.0;
        }
        DenseNet {
            layers: vec![Layer { inputs: n, outputs: n, weights, bias: vec![0.0; n], activation: Activation::Identity }],
        }
    }

    pub fn input_size(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_size(&self) -> usize {
        self.layers.last().expect("non-empty").outputs
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut h = x.to_vec();
        for l in &self.layers {
            h = l.pre_activation(&h).into_iter().map(|z| l.activation.apply(z)).collect();
        }
        h
    }

    pub fn forward_cached(&self, x: &[f64]) -> Cache {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut h = x.to_vec();
        for l in &self.layers {
            let z = l.pre_activation(&h);
            let y = z.iter().map(|&v| l.activation.apply(v)).collect();
            inputs.push(h);
            pre.push(z);
            h = y;
        }
        Cache { inputs, pre, output: h }
    }

    /// Accumulates parameter gradients for `grad_out` into `grads` and
    /// returns the gradient with respect to the input.
    pub fn backward_into(&self, cache: &Cache, grad_out: &[f64], grads: &mut Gradients) -> Vec<f64> {
        let mut delta = grad_out.to_vec();
        for (i, l) in self.layers.iter().enumerate().rev() {
            let out = if i + 1 < self.layers.len() { &cache.inputs[i + 1] } else { &cache.output };
            for (o, d) in delta.iter_mut().enumerate() {
                *d *= l.activation.derivative(cache.pre[i][o], out[o]);
            }
            let x = &cache.inputs[i];
            let gw = &mut grads.weights[i];
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                let row = &mut gw[o * l.inputs..(o + 1) * l.inputs];
                row.iter_mut().zip(x).for_each(|(g, v)| *g += d * v);
                grads.bias[i][o] += d;
            }
            let mut prev = vec![0.0; l.inputs];
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                let row = &l.weights[o * l.inputs..(o + 1) * l.inputs];
                prev.iter_mut().zip(row).for_each(|(p, w)| *p += d * w);
            }
            delta = prev;
        }
        delta
    }

    pub fn backward(&self, cache: &Cache, grad_out: &[f64]) -> (Gradients, Vec<f64>) {
        let mut grads = Gradients::zeros_like(self);
        let input_grad = self.backward_into(cache, grad_out, &mut grads);
        (grads, input_grad)
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| l.weights.iter().chain(&l.bias).all(|v| v.is_finite()))
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), Error> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(self.layers.len() as u32).to_le_bytes())?;
        for l in &self.layers {
            w.write_all(&(l.inputs as u32).to_le_bytes())?;
            w.write_all(&(l.outputs as u32).to_le_bytes())?;
            w.write_all(&[l.activation.code()])?;
        }
        for l in &self.layers {
            for v in l.weights.iter().chain(&l.bias) {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, Error> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Neural("not a network file".into()));
        }
        let version = read_u32(&mut r)?;
        if version != VERSION {
            return Err(Error::Neural(format!("unsupported network format version {version}")));
        }
        let count = read_u32(&mut r)? as usize;
        let mut shapes = Vec::with_capacity(count);
        for _ in 0..count {
            let inputs = read_u32(&mut r)? as usize;
            let outputs = read_u32(&mut r)? as usize;
            let mut code = [0u8; 1];
            r.read_exact(&mut code)?;
            let activation = Activation::from_code(code[0])
                .ok_or_else(|| Error::Neural(format!("unknown activation code {}", code[0])))?;
            shapes.push((inputs, outputs, activation));
        }
        let mut layers = Vec::with_capacity(count);
        for (inputs, outputs, activation) in shapes {
            let weights = read_f64s(&mut r, inputs * outputs)?;
            let bias = read_f64s(&mut r, outputs)?;
            layers.push(Layer { inputs, outputs, weights, bias, activation });
        }
        DenseNet::from_layers(layers)
    }

    pub fn save(&self, path: &Path) -> Result<(), Error> {
        let f = std::fs::File::create(path)?;
        self.write_to(std::io::BufWriter::new(f))
    }

    pub fn load(path: &Path) -> Result<Self, Error> {
        let f = std::fs::File::open(path)?;
        DenseNet::read_from(std::io::BufReader::new(f))
    }
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, Error> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>, Error> {
    let mut out = Vec::with_capacity(n);
    let mut b = [0u8; 8];
    for _ in 0..n {
        r.read_exact(&mut b)?;
        out.push(f64::from_le_bytes(b));
    }
    Ok(out)
}

pub fn sgd_step(net: &mut DenseNet, grads: &Gradients, lr: f64) -> Result<(), Error> {
    if !grads.is_finite() {
        return Err(Error::Neural("non-finite gradient; update skipped".into()));
    }
    for ((l, gw), gb) in net.layers.iter_mut().zip(&grads.weights).zip(&grads.bias) {
        l.weights.iter_mut().zip(gw).for_each(|(w, g)| *w -= lr * g);
        l.bias.iter_mut().zip(gb).for_each(|(b, g)| *b -= lr * g);
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: i32,
    m: Gradients,
    v: Gradients,
}

impl Adam {
    pub fn new(net: &DenseNet, lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: Gradients::zeros_like(net),
            v: Gradients::zeros_like(net),
        }
    }

    /// One update; a non-finite gradient aborts the step and leaves `net`
    /// untouched.
    pub fn step(&mut self, net: &mut DenseNet, grads: &Gradients) -> Result<(), Error> {
        if !grads.is_finite() {
            return Err(Error::Neural("non-finite gradient; update skipped".into()));
        }
        self.t += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powi(self.t);
        let c2 = 1.0 - b2.powi(self.t);
        let lr = self.lr;
        let eps = self.eps;
        let update = |p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                p[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
            }
        };
        for (i, l) in net.layers.iter_mut().enumerate() {
            update(&mut l.weights, &grads.weights[i], &mut self.m.weights[i], &mut self.v.weights[i]);
            update(&mut l.bias, &grads.bias[i], &mut self.m.bias[i], &mut self.v.bias[i]);
        }
        Ok(())
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

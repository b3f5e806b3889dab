//! Small fully-connected networks with hand-written backpropagation, Adam and
//! soft target updates.
//!
//! Inputs are batched row-wise: a `(batch, inputs)` matrix goes in and a
//! `(batch, outputs)` matrix comes out. Weights are stored `(fan_in, fan_out)`.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Relu,
    /// Saturates to (-1, 1).
    Tanh,
    /// Saturates to (0, 1).
    Sigmoid,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
            Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
        }
    }

    /// Derivative given the pre-activation `z` and output `y`.
    fn derivative(self, z: f64, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Sigmoid => y * (1.0 - y),
        }
    }

    fn name(self) -> &'static str {
        match self {
            Activation::Identity => "identity",
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Sigmoid => "sigmoid",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "identity" => Activation::Identity,
            "relu" => Activation::Relu,
            "tanh" => Activation::Tanh,
            "sigmoid" => Activation::Sigmoid,
            other => return Err(Error::WeightFormat(format!("unknown activation {other:?}"))),
        })
    }
}

/// Architecture of a network.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpSpec {
    /// Input width, hidden widths, output width.
    pub layer_sizes: Vec<usize>,
    pub hidden_activation: Activation,
    /// One activation per output unit.
    pub output_activations: Vec<Activation>,
    pub seed: u64,
}

impl MlpSpec {
    pub fn validate(&self) -> Result<()> {
        if self.layer_sizes.len() < 3 {
            return Err(Error::Parameter(
                "a network needs at least one hidden layer".into(),
            ));
        }
        if self.layer_sizes.contains(&0) {
            return Err(Error::Parameter(format!(
                "zero-width layer in {:?}",
                self.layer_sizes
            )));
        }
        if self.output_activations.len() != *self.layer_sizes.last().unwrap() {
            return Err(Error::Parameter(format!(
                "{} output activations for {} outputs",
                self.output_activations.len(),
                self.layer_sizes.last().unwrap()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Layer {
    pub fn fan_in(&self) -> usize {
        self.weights.nrows()
    }

    pub fn fan_out(&self) -> usize {
        self.weights.ncols()
    }
}

/// Adam constants. The moment buffers live in [`Mlp`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct AdamState {
    m: Gradients,
    v: Gradients,
    step: u64,
}

/// Per-layer parameter gradients, shaped like the network.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl Gradients {
    fn zeros_like(layers: &[Layer]) -> Self {
        Self {
            weights: layers
                .iter()
                .map(|l| Array2::zeros(l.weights.raw_dim()))
                .collect(),
            biases: layers
                .iter()
                .map(|l| Array1::zeros(l.bias.raw_dim()))
                .collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|x| x.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|x| x.is_finite()))
    }

    pub fn max_abs(&self) -> f64 {
        self.weights
            .iter()
            .flat_map(|w| w.iter())
            .chain(self.biases.iter().flat_map(|b| b.iter()))
            .fold(0.0_f64, |m, x| m.max(x.abs()))
    }
}

/// Activations retained by [`Mlp::forward`] for [`Mlp::backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    net_id: u64,
    generation: u64,
    /// Layer inputs; `activations[0]` is the network input.
    activations: Vec<Array2<f64>>,
    pre_activations: Vec<Array2<f64>>,
    output: Array2<f64>,
}

impl ForwardCache {
    pub fn output(&self) -> &Array2<f64> {
        &self.output
    }
}

static NEXT_NET_ID: AtomicU64 = AtomicU64::new(1);

/// Network parameters together with their Adam state.
#[derive(Debug, Clone)]
pub struct Mlp {
    layers: Vec<Layer>,
    hidden: Activation,
    outputs: Vec<Activation>,
    adam_config: AdamConfig,
    adam: AdamState,
    id: u64,
    /// Bumped on every parameter change; invalidates older caches.
    generation: u64,
}

impl PartialEq for Mlp {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers
            && self.hidden == other.hidden
            && self.outputs == other.outputs
            && self.adam == other.adam
    }
}

impl Mlp {
    /// Random init: weights uniform on `±1/sqrt(fan_in)`, zero biases.
    pub fn init(spec: &MlpSpec) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let layers = spec
            .layer_sizes
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = 1.0 / (fan_in as f64).sqrt();
                let weights = Array2::from_shape_simple_fn((fan_in, fan_out), || {
                    rng.random_range(-bound..bound)
                });
                Layer {
                    weights,
                    bias: Array1::zeros(fan_out),
                }
            })
            .collect();
        Self::from_layers(
            layers,
            spec.hidden_activation,
            spec.output_activations.clone(),
        )
    }

    /// Build from explicit layers. Any depth, including a single affine map.
    pub fn from_layers(
        layers: Vec<Layer>,
        hidden: Activation,
        outputs: Vec<Activation>,
    ) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Shape("no layers".into()));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].fan_out() != pair[1].fan_in() {
                return Err(Error::Shape(format!(
                    "layer {i} outputs {} but layer {} takes {}",
                    pair[0].fan_out(),
                    i + 1,
                    pair[1].fan_in()
                )));
            }
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.len() != l.fan_out() {
                return Err(Error::Shape(format!(
                    "layer {i} bias length {} != {}",
                    l.bias.len(),
                    l.fan_out()
                )));
            }
        }
        let out_width = layers.last().unwrap().fan_out();
        if outputs.len() != out_width {
            return Err(Error::Shape(format!(
                "{} output activations for {out_width} outputs",
                outputs.len()
            )));
        }
        let zeros = Gradients::zeros_like(&layers);
        Ok(Self {
            adam: AdamState {
                m: zeros.clone(),
                v: zeros,
                step: 0,
            },
            layers,
            hidden,
            outputs,
            adam_config: AdamConfig::default(),
            id: NEXT_NET_ID.fetch_add(1, Ordering::Relaxed),
            generation: 0,
        })
    }

    pub fn with_adam_config(mut self, cfg: AdamConfig) -> Self {
        self.adam_config = cfg;
        self
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Mutable access to the parameters. Invalidates outstanding caches.
    pub fn layers_mut(&mut self) -> &mut [Layer] {
        self.generation += 1;
        &mut self.layers
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].fan_in()
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().unwrap().fan_out()
    }

    pub fn adam_steps(&self) -> u64 {
        self.adam.step
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(l.bias.iter()).all(|x| x.is_finite()))
    }

    fn check_input(&self, x: &ArrayView2<f64>) -> Result<()> {
        if x.ncols() != self.input_width() {
            return Err(Error::Shape(format!(
                "input has {} columns, network expects {}",
                x.ncols(),
                self.input_width()
            )));
        }
        Ok(())
    }

    fn activation_for(&self, layer: usize, col: usize) -> Activation {
        if layer + 1 == self.layers.len() {
            self.outputs[col]
        } else {
            self.hidden
        }
    }

    fn affine(layer: &Layer, x: &ArrayView2<f64>) -> Array2<f64> {
        let mut z = x.dot(&layer.weights);
        z += &layer.bias;
        z
    }

    fn activate(&self, layer: usize, z: &Array2<f64>) -> Array2<f64> {
        let mut y = z.clone();
        if layer + 1 == self.layers.len() {
            for (col, mut column) in y.axis_iter_mut(Axis(1)).enumerate() {
                let act = self.outputs[col];
                column.mapv_inplace(|v| act.apply(v));
            }
        } else {
            let act = self.hidden;
            y.mapv_inplace(|v| act.apply(v));
        }
        y
    }

    /// Batched evaluation without keeping a cache.
    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(&x)?;
        let mut a = x.to_owned();
        for (i, layer) in self.layers.iter().enumerate() {
            let z = Self::affine(layer, &a.view());
            a = self.activate(i, &z);
        }
        Ok(a)
    }

    /// Single-input evaluation.
    pub fn predict_one(&self, x: &[f64]) -> Result<Vec<f64>> {
        let view =
            ArrayView2::from_shape((1, x.len()), x).map_err(|e| Error::Shape(e.to_string()))?;
        Ok(self.predict(view)?.into_raw_vec_and_offset().0)
    }

    /// Batched evaluation retaining what [`Mlp::backward`] needs.
    pub fn forward(&self, x: ArrayView2<f64>) -> Result<(Array2<f64>, ForwardCache)> {
        self.check_input(&x)?;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        let mut pre_activations = Vec::with_capacity(self.layers.len());
        activations.push(x.to_owned());
        for (i, layer) in self.layers.iter().enumerate() {
            let z = Self::affine(layer, &activations[i].view());
            let a = self.activate(i, &z);
            pre_activations.push(z);
            activations.push(a);
        }
        let output = activations.pop().unwrap();
        let cache = ForwardCache {
            net_id: self.id,
            generation: self.generation,
            activations,
            pre_activations,
            output: output.clone(),
        };
        Ok((output, cache))
    }

    /// Reverse-mode gradients of `sum(output_gradient ⊙ output)` with respect
    /// to every parameter and to the input. Gradients are summed over the batch.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        output_gradient: ArrayView2<f64>,
    ) -> Result<(Gradients, Array2<f64>)> {
        if cache.net_id != self.id || cache.generation != self.generation {
            return Err(Error::StaleCache);
        }
        if output_gradient.dim() != cache.output.dim() {
            return Err(Error::Shape(format!(
                "output gradient {:?} vs output {:?}",
                output_gradient.dim(),
                cache.output.dim()
            )));
        }
        let n = self.layers.len();
        let mut weights = Vec::with_capacity(n);
        let mut biases = Vec::with_capacity(n);

        // delta = dL/dz for the current layer
        let mut delta = output_gradient.to_owned();
        let last = n - 1;
        Zip::indexed(&mut delta)
            .and(&cache.pre_activations[last])
            .and(&cache.output)
            .for_each(|(_, col), d, &z, &y| *d *= self.activation_for(last, col).derivative(z, y));

        for i in (0..n).rev() {
            let input = &cache.activations[i];
            weights.push(input.t().dot(&delta));
            biases.push(delta.sum_axis(Axis(0)));
            let mut upstream = delta.dot(&self.layers[i].weights.t());
            if i > 0 {
                let act = self.hidden;
                Zip::from(&mut upstream)
                    .and(&cache.pre_activations[i - 1])
                    .and(&cache.activations[i])
                    .for_each(|d, &z, &y| *d *= act.derivative(z, y));
            }
            delta = upstream;
        }
        weights.reverse();
        biases.reverse();
        Ok((Gradients { weights, biases }, delta))
    }

    fn check_same_shape(&self, grads: &Gradients) -> Result<()> {
        let ok = grads.weights.len() == self.layers.len()
            && grads.biases.len() == self.layers.len()
            && self
                .layers
                .iter()
                .zip(grads.weights.iter().zip(&grads.biases))
                .all(|(l, (w, b))| l.weights.dim() == w.dim() && l.bias.dim() == b.dim());
        if ok {
            Ok(())
        } else {
            Err(Error::Shape("gradients do not match network shape".into()))
        }
    }

    /// One bias-corrected Adam step of descent along `grads`.
    pub fn adam_update(&mut self, grads: &Gradients, learning_rate: f64) -> Result<()> {
        self.check_same_shape(grads)?;
        if !grads.is_finite() {
            return Err(Error::Numeric("non-finite gradient".into()));
        }
        let AdamConfig {
            beta1,
            beta2,
            epsilon,
        } = self.adam_config;
        self.adam.step += 1;
        let t = self.adam.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        let step = |p: &mut f64, m: &mut f64, v: &mut f64, g: f64| {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
        };
        for (i, layer) in self.layers.iter_mut().enumerate() {
            Zip::from(&mut layer.weights)
                .and(&mut self.adam.m.weights[i])
                .and(&mut self.adam.v.weights[i])
                .and(&grads.weights[i])
                .for_each(|p, m, v, &g| step(p, m, v, g));
            Zip::from(&mut layer.bias)
                .and(&mut self.adam.m.biases[i])
                .and(&mut self.adam.v.biases[i])
                .and(&grads.biases[i])
                .for_each(|p, m, v, &g| step(p, m, v, g));
        }
        self.generation += 1;
        Ok(())
    }

    fn check_same_architecture(&self, other: &Mlp) -> Result<()> {
        let same = self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.weights.dim() == b.weights.dim());
        if same {
            Ok(())
        } else {
            Err(Error::Shape("networks differ in architecture".into()))
        }
    }

    /// `self <- tau * online + (1 - tau) * self`, elementwise.
    pub fn soft_update(&mut self, online: &Mlp, tau: f64) -> Result<()> {
        self.check_same_architecture(online)?;
        let keep = 1.0 - tau;
        for (t, o) in self.layers.iter_mut().zip(&online.layers) {
            Zip::from(&mut t.weights)
                .and(&o.weights)
                .for_each(|t, &o| *t = tau * o + keep * *t);
            Zip::from(&mut t.bias)
                .and(&o.bias)
                .for_each(|t, &o| *t = tau * o + keep * *t);
        }
        self.generation += 1;
        Ok(())
    }

    /// Largest absolute parameter difference between two networks.
    pub fn max_abs_diff(&self, other: &Mlp) -> Result<f64> {
        self.check_same_architecture(other)?;
        Ok(self
            .layers
            .iter()
            .zip(&other.layers)
            .flat_map(|(a, b)| {
                a.weights
                    .iter()
                    .zip(b.weights.iter())
                    .chain(a.bias.iter().zip(b.bias.iter()))
                    .map(|(x, y)| (x - y).abs())
            })
            .fold(0.0, f64::max))
    }

    /// Serialize weights to the text format read by [`Mlp::from_text`].
    ///
    /// ```text
    /// mlp 1
    /// activations <hidden> <out_0> <out_1> ...
    /// layers <n>
    /// layer <fan_in> <fan_out>
    /// <fan_in lines of fan_out weights, row-major>
    /// <one line of fan_out biases>
    /// ...
    /// ```
    ///
    /// Values use the shortest decimal form that parses back to the same bits.
    /// Optimizer state is not stored.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "mlp 1");
        let _ = write!(s, "activations {}", self.hidden.name());
        for a in &self.outputs {
            let _ = write!(s, " {}", a.name());
        }
        let _ = writeln!(s, "\nlayers {}", self.layers.len());
        let join = |it: &mut dyn Iterator<Item = &f64>| {
            it.map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
        };
        for l in &self.layers {
            let _ = writeln!(s, "layer {} {}", l.fan_in(), l.fan_out());
            for row in l.weights.rows() {
                let _ = writeln!(s, "{}", join(&mut row.iter()));
            }
            let _ = writeln!(s, "{}", join(&mut l.bias.iter()));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |m: String| Error::WeightFormat(m);
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let mut next = |what: &str| lines.next().ok_or_else(|| bad(format!("missing {what}")));

        if next("magic")?.trim() != "mlp 1" {
            return Err(bad("expected header `mlp 1`".into()));
        }
        let acts: Vec<&str> = next("activations")?.split_whitespace().collect();
        if acts.len() < 3 || acts[0] != "activations" {
            return Err(bad("expected `activations <hidden> <outputs...>`".into()));
        }
        let hidden = Activation::parse(acts[1])?;
        let outputs = acts[2..]
            .iter()
            .map(|a| Activation::parse(a))
            .collect::<Result<Vec<_>>>()?;

        let count_line: Vec<&str> = next("layer count")?.split_whitespace().collect();
        let n: usize = match count_line.as_slice() {
            ["layers", n] => n
                .parse()
                .map_err(|_| bad(format!("bad layer count {n:?}")))?,
            _ => return Err(bad("expected `layers <n>`".into())),
        };

        let parse_row = |line: &str, width: usize| -> Result<Vec<f64>> {
            let vals = line
                .split_whitespace()
                .map(|v| {
                    v.parse::<f64>()
                        .map_err(|_| bad(format!("bad number {v:?}")))
                })
                .collect::<Result<Vec<_>>>()?;
            if vals.len() != width {
                return Err(bad(format!(
                    "row has {} values, expected {width}",
                    vals.len()
                )));
            }
            Ok(vals)
        };

        let mut layers = Vec::with_capacity(n);
        for _ in 0..n {
            let header: Vec<&str> = next("layer header")?.split_whitespace().collect();
            let (fan_in, fan_out) = match header.as_slice() {
                ["layer", i, o] => (
                    i.parse::<usize>()
                        .map_err(|_| bad(format!("bad fan_in {i:?}")))?,
                    o.parse::<usize>()
                        .map_err(|_| bad(format!("bad fan_out {o:?}")))?,
                ),
                _ => return Err(bad("expected `layer <fan_in> <fan_out>`".into())),
            };
            let mut flat = Vec::with_capacity(fan_in * fan_out);
            for _ in 0..fan_in {
                flat.extend(parse_row(next("weight row")?, fan_out)?);
            }
            let weights =
                Array2::from_shape_vec((fan_in, fan_out), flat).map_err(|e| bad(e.to_string()))?;
            let bias = Array1::from(parse_row(next("bias row")?, fan_out)?);
            layers.push(Layer { weights, bias });
        }
        Self::from_layers(layers, hidden, outputs).map_err(|e| bad(e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

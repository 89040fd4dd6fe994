//! Ordered layer graphs with forward/backward execution.
//!
//! A model is a sequence of named stages (one per row of the layout tables
//! it was built from); each stage holds primitive layers. Residual units are
//! nested layer sequences whose output is added back to their input.

use rand_chacha::ChaCha8Rng;

use super::layers::{
    dropout_backward, dropout_forward, global_avgpool_backward, global_avgpool_forward,
    maxpool2_backward, maxpool2_forward, relu_backward, relu_forward, selu_backward,
    selu_forward, BatchNorm, BnCache, Conv1d, Dense,
};
use super::tensor::{Mode, Real, Tensor};
use crate::error::{Error, Result};

#[derive(Clone)]
pub enum Layer<F> {
    Conv1d(Conv1d<F>),
    BatchNorm(BatchNorm<F>),
    Relu,
    Selu,
    Dropout { rate: f64 },
    MaxPool2,
    GlobalAvgPool,
    Flatten,
    Dense(Dense<F>),
    Residual { body: Vec<Layer<F>> },
}

pub enum LayerCache<F> {
    Conv { x: Tensor<F> },
    BatchNorm(BnCache<F>),
    Relu { mask: Vec<u8> },
    Selu { y: Tensor<F> },
    Dropout { mask: Option<Vec<u8>>, rate: f64 },
    MaxPool { mask: Vec<u8> },
    GlobalAvgPool { in_len: usize },
    Flatten { shape: Vec<usize> },
    Dense { x: Tensor<F> },
    Residual { body: Vec<LayerCache<F>> },
}

/// Caches of one training forward pass, in traversal order.
pub struct GraphCache<F>(Vec<LayerCache<F>>);

#[derive(Clone)]
pub struct Stage<F> {
    pub label: String,
    pub layers: Vec<Layer<F>>,
}

/// Ordered layer specification with owned parameters.
#[derive(Clone)]
pub struct ModelGraph<F> {
    pub id: String,
    pub input_channels: usize,
    pub input_len: usize,
    pub num_classes: usize,
    pub stages: Vec<Stage<F>>,
}

fn add_into<F: Real>(acc: &mut Tensor<F>, other: &Tensor<F>) -> Result<()> {
    if acc.shape() != other.shape() {
        return Err(Error::ShapeMismatch(format!(
            "residual addition of {:?} and {:?}",
            acc.shape(),
            other.shape()
        )));
    }
    for (a, &b) in acc.data_mut().iter_mut().zip(other.data()) {
        *a += b;
    }
    Ok(())
}

fn layer_forward_train<F: Real>(
    layer: &mut Layer<F>,
    x: Tensor<F>,
    rng: &mut ChaCha8Rng,
) -> Result<(Tensor<F>, LayerCache<F>)> {
    match layer {
        Layer::Conv1d(conv) => {
            let y = conv.forward(&x)?;
            Ok((y, LayerCache::Conv { x }))
        }
        Layer::BatchNorm(bn) => {
            let (y, cache) = bn.forward_train(&x)?;
            Ok((y, LayerCache::BatchNorm(cache)))
        }
        Layer::Relu => {
            let (y, mask) = relu_forward(&x);
            Ok((y, LayerCache::Relu { mask }))
        }
        Layer::Selu => {
            let y = selu_forward(&x);
            Ok((y.clone(), LayerCache::Selu { y }))
        }
        Layer::Dropout { rate } => {
            let (y, mask) = dropout_forward(&x, *rate, Mode::Train, rng)?;
            Ok((y, LayerCache::Dropout { mask, rate: *rate }))
        }
        Layer::MaxPool2 => {
            let (y, mask) = maxpool2_forward(&x)?;
            Ok((y, LayerCache::MaxPool { mask }))
        }
        Layer::GlobalAvgPool => {
            let in_len = *x.shape().last().unwrap();
            let y = global_avgpool_forward(&x)?;
            Ok((y, LayerCache::GlobalAvgPool { in_len }))
        }
        Layer::Flatten => {
            let shape = x.shape().to_vec();
            if shape.len() != 3 {
                return Err(Error::ShapeMismatch("flatten expects [N, C, L]".into()));
            }
            let y = x.reshaped(&[shape[0], shape[1] * shape[2]])?;
            Ok((y, LayerCache::Flatten { shape }))
        }
        Layer::Dense(fc) => {
            let y = fc.forward(&x)?;
            Ok((y, LayerCache::Dense { x }))
        }
        Layer::Residual { body } => {
            let skip = x.clone();
            let mut cur = x;
            let mut caches = Vec::with_capacity(body.len());
            for sub in body.iter_mut() {
                let (y, cache) = layer_forward_train(sub, cur, rng)?;
                cur = y;
                caches.push(cache);
            }
            add_into(&mut cur, &skip)?;
            Ok((cur, LayerCache::Residual { body: caches }))
        }
    }
}

fn layer_forward_infer<F: Real>(layer: &Layer<F>, x: Tensor<F>) -> Result<Tensor<F>> {
    match layer {
        Layer::Conv1d(conv) => conv.forward(&x),
        Layer::BatchNorm(bn) => bn.forward_infer(&x),
        Layer::Relu => Ok(relu_forward(&x).0),
        Layer::Selu => Ok(selu_forward(&x)),
        Layer::Dropout { .. } => Ok(x),
        Layer::MaxPool2 => Ok(maxpool2_forward(&x)?.0),
        Layer::GlobalAvgPool => global_avgpool_forward(&x),
        Layer::Flatten => {
            let shape = x.shape().to_vec();
            x.reshaped(&[shape[0], shape[1] * shape[2]])
        }
        Layer::Dense(fc) => fc.forward(&x),
        Layer::Residual { body } => {
            let skip = x.clone();
            let mut cur = x;
            for sub in body {
                cur = layer_forward_infer(sub, cur)?;
            }
            add_into(&mut cur, &skip)?;
            Ok(cur)
        }
    }
}

fn layer_backward<F: Real>(
    layer: &mut Layer<F>,
    cache: LayerCache<F>,
    dy: Tensor<F>,
) -> Result<Tensor<F>> {
    match (layer, cache) {
        (Layer::Conv1d(conv), LayerCache::Conv { x }) => conv.backward(&x, &dy),
        (Layer::BatchNorm(bn), LayerCache::BatchNorm(c)) => bn.backward(&c, &dy),
        (Layer::Relu, LayerCache::Relu { mask }) => Ok(relu_backward(&dy, &mask)),
        (Layer::Selu, LayerCache::Selu { y }) => Ok(selu_backward(&dy, &y)),
        (Layer::Dropout { .. }, LayerCache::Dropout { mask, rate }) => {
            Ok(dropout_backward(&dy, mask.as_deref(), rate))
        }
        (Layer::MaxPool2, LayerCache::MaxPool { mask }) => maxpool2_backward(&dy, &mask),
        (Layer::GlobalAvgPool, LayerCache::GlobalAvgPool { in_len }) => {
            global_avgpool_backward(&dy, in_len)
        }
        (Layer::Flatten, LayerCache::Flatten { shape }) => dy.reshaped(&shape),
        (Layer::Dense(fc), LayerCache::Dense { x }) => fc.backward(&x, &dy),
        (Layer::Residual { body }, LayerCache::Residual { body: caches }) => {
            let mut grad = dy.clone();
            for (sub, cache) in body.iter_mut().zip(caches).rev() {
                grad = layer_backward(sub, cache, grad)?;
            }
            add_into(&mut grad, &dy)?;
            Ok(grad)
        }
        _ => Err(Error::InvalidArgument(
            "layer/cache mismatch in backward pass".into(),
        )),
    }
}

impl<F: Real> ModelGraph<F> {
    fn check_input(&self, x: &Tensor<F>) -> Result<()> {
        match *x.shape() {
            [_, c, l] if c == self.input_channels && l == self.input_len => Ok(()),
            _ => Err(Error::ShapeMismatch(format!(
                "model {} expects [N, {}, {}], got {:?}",
                self.id,
                self.input_channels,
                self.input_len,
                x.shape()
            ))),
        }
    }

    /// Training-mode forward pass; caches are consumed by [`Self::backward`].
    pub fn forward_train(
        &mut self,
        x: Tensor<F>,
        rng: &mut ChaCha8Rng,
    ) -> Result<(Tensor<F>, GraphCache<F>)> {
        self.check_input(&x)?;
        let mut cur = x;
        let mut caches = Vec::new();
        for stage in &mut self.stages {
            for layer in &mut stage.layers {
                let (y, cache) = layer_forward_train(layer, cur, rng)?;
                cur = y;
                caches.push(cache);
            }
        }
        Ok((cur, GraphCache(caches)))
    }

    /// Inference-mode forward pass: running statistics, identity dropout,
    /// no mutation.
    pub fn forward_infer(&self, x: Tensor<F>) -> Result<Tensor<F>> {
        self.check_input(&x)?;
        let mut cur = x;
        for stage in &self.stages {
            for layer in &stage.layers {
                cur = layer_forward_infer(layer, cur)?;
            }
        }
        Ok(cur)
    }

    /// Backpropagate `dy` through the graph, accumulating parameter
    /// gradients; returns the input gradient.
    pub fn backward(&mut self, cache: GraphCache<F>, dy: Tensor<F>) -> Result<Tensor<F>> {
        let mut caches = cache.0;
        let mut grad = dy;
        for stage in self.stages.iter_mut().rev() {
            for layer in stage.layers.iter_mut().rev() {
                let cache = caches.pop().ok_or_else(|| {
                    Error::InvalidArgument("backward called without matching forward cache".into())
                })?;
                grad = layer_backward(layer, cache, grad)?;
            }
        }
        Ok(grad)
    }

    pub fn zero_grads(&mut self) {
        self.for_each_param(&mut |_, grad| grad.fill(F::ZERO));
    }

    /// Visit `(parameter, gradient)` pairs in declaration order.
    pub fn for_each_param(&mut self, f: &mut dyn FnMut(&mut Tensor<F>, &mut Tensor<F>)) {
        fn walk<F: Real>(
            layers: &mut [Layer<F>],
            f: &mut dyn FnMut(&mut Tensor<F>, &mut Tensor<F>),
        ) {
            for layer in layers {
                match layer {
                    Layer::Conv1d(conv) => {
                        f(&mut conv.weight, &mut conv.grad_weight);
                        f(&mut conv.bias, &mut conv.grad_bias);
                    }
                    Layer::BatchNorm(bn) => {
                        f(&mut bn.gamma, &mut bn.grad_gamma);
                        f(&mut bn.beta, &mut bn.grad_beta);
                    }
                    Layer::Dense(fc) => {
                        f(&mut fc.weight, &mut fc.grad_weight);
                        f(&mut fc.bias, &mut fc.grad_bias);
                    }
                    Layer::Residual { body } => walk(body, f),
                    _ => {}
                }
            }
        }
        for stage in &mut self.stages {
            walk(&mut stage.layers, f);
        }
    }

    /// Trainable parameter count (running statistics excluded).
    pub fn param_count(&mut self) -> usize {
        let mut count = 0;
        self.for_each_param(&mut |param, _| count += param.numel());
        count
    }

    /// Visit every state tensor (parameters and batch-norm running
    /// statistics) in declaration order.
    pub fn for_each_state(&self, f: &mut dyn FnMut(&Tensor<F>)) {
        fn walk<F: Real>(layers: &[Layer<F>], f: &mut dyn FnMut(&Tensor<F>)) {
            for layer in layers {
                match layer {
                    Layer::Conv1d(conv) => {
                        f(&conv.weight);
                        f(&conv.bias);
                    }
                    Layer::BatchNorm(bn) => {
                        f(&bn.gamma);
                        f(&bn.beta);
                        f(&bn.running_mean);
                        f(&bn.running_var);
                    }
                    Layer::Dense(fc) => {
                        f(&fc.weight);
                        f(&fc.bias);
                    }
                    Layer::Residual { body } => walk(body, f),
                    _ => {}
                }
            }
        }
        for stage in &self.stages {
            walk(&stage.layers, f);
        }
    }

    pub fn for_each_state_mut(&mut self, f: &mut dyn FnMut(&mut Tensor<F>)) {
        fn walk<F: Real>(layers: &mut [Layer<F>], f: &mut dyn FnMut(&mut Tensor<F>)) {
            for layer in layers {
                match layer {
                    Layer::Conv1d(conv) => {
                        f(&mut conv.weight);
                        f(&mut conv.bias);
                    }
                    Layer::BatchNorm(bn) => {
                        f(&mut bn.gamma);
                        f(&mut bn.beta);
                        f(&mut bn.running_mean);
                        f(&mut bn.running_var);
                    }
                    Layer::Dense(fc) => {
                        f(&mut fc.weight);
                        f(&mut fc.bias);
                    }
                    Layer::Residual { body } => walk(body, f),
                    _ => {}
                }
            }
        }
        for stage in &mut self.stages {
            walk(&mut stage.layers, f);
        }
    }

    /// Clone all state tensors in declaration order.
    pub fn state_snapshot(&self) -> Vec<Tensor<F>> {
        let mut out = Vec::new();
        self.for_each_state(&mut |t| out.push(t.clone()));
        out
    }

    pub fn load_state(&mut self, state: &[Tensor<F>]) -> Result<()> {
        let mut idx = 0;
        let mut status = Ok(());
        self.for_each_state_mut(&mut |t| {
            if status.is_err() {
                return;
            }
            match state.get(idx) {
                Some(src) if src.shape() == t.shape() => {
                    t.data_mut().copy_from_slice(src.data());
                }
                Some(src) => {
                    status = Err(Error::ShapeMismatch(format!(
                        "state tensor {idx}: {:?} vs {:?}",
                        src.shape(),
                        t.shape()
                    )));
                }
                None => {
                    status = Err(Error::StructuralMismatch(format!(
                        "state has too few tensors (needed more than {idx})"
                    )));
                }
            }
            idx += 1;
        });
        status?;
        if idx != state.len() {
            return Err(Error::StructuralMismatch(format!(
                "state has {} tensors, model uses {idx}",
                state.len()
            )));
        }
        Ok(())
    }

    /// Canonical text listing of the graph structure (no parameter values).
    pub fn spec_string(&self) -> String {
        fn write_layers<F: Real>(out: &mut String, layers: &[Layer<F>], indent: usize) {
            for layer in layers {
                for _ in 0..indent {
                    out.push(' ');
                }
                match layer {
                    Layer::Conv1d(c) => {
                        out.push_str(&format!("conv1d {}->{} k{}\n", c.in_ch, c.out_ch, c.kernel))
                    }
                    Layer::BatchNorm(b) => out.push_str(&format!("batchnorm {}\n", b.ch)),
                    Layer::Relu => out.push_str("relu\n"),
                    Layer::Selu => out.push_str("selu\n"),
                    Layer::Dropout { rate } => out.push_str(&format!("dropout {rate}\n")),
                    Layer::MaxPool2 => out.push_str("maxpool w2 s2\n"),
                    Layer::GlobalAvgPool => out.push_str("global_avgpool\n"),
                    Layer::Flatten => out.push_str("flatten\n"),
                    Layer::Dense(d) => {
                        out.push_str(&format!("dense {}->{}\n", d.in_dim, d.out_dim))
                    }
                    Layer::Residual { body } => {
                        out.push_str("residual {\n");
                        write_layers(out, body, indent + 2);
                        for _ in 0..indent {
                            out.push(' ');
                        }
                        out.push_str("}\n");
                    }
                }
            }
        }
        let mut out = format!(
            "model {} input {}x{} classes {}\n",
            self.id, self.input_channels, self.input_len, self.num_classes
        );
        for stage in &self.stages {
            out.push_str(&format!("stage {}\n", stage.label));
            write_layers(&mut out, &stage.layers, 2);
        }
        out
    }

    /// Per-stage output dimensions, formatted like the layout tables
    /// ("C x L" for feature maps, "D" after flattening).
    pub fn shape_trace(&self) -> Result<Vec<(String, String)>> {
        let mut rows = vec![(
            "Input".to_string(),
            format!("{} x {}", self.input_channels, self.input_len),
        )];
        let mut shape = FeatShape::Map(self.input_channels, self.input_len);
        for stage in &self.stages {
            for layer in &stage.layers {
                shape = layer_out_shape(layer, shape)?;
            }
            rows.push((stage.label.clone(), shape.format()));
        }
        Ok(rows)
    }
}

/// Feature shape flowing through the graph (batch dimension implicit).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatShape {
    Map(usize, usize),
    Flat(usize),
}

impl FeatShape {
    pub fn format(self) -> String {
        match self {
            FeatShape::Map(c, l) => format!("{c} x {l}"),
            FeatShape::Flat(d) => format!("{d}"),
        }
    }
}

/// Static shape inference for one layer.
pub fn layer_out_shape<F: Real>(layer: &Layer<F>, input: FeatShape) -> Result<FeatShape> {
    let err = |what: &str| {
        Err(Error::ShapeMismatch(format!(
            "{what} cannot take input shape {input:?}"
        )))
    };
    match layer {
        Layer::Conv1d(c) => match input {
            FeatShape::Map(ch, l) if ch == c.in_ch => Ok(FeatShape::Map(c.out_ch, l)),
            _ => err("conv1d"),
        },
        Layer::BatchNorm(b) => match input {
            FeatShape::Map(ch, l) if ch == b.ch => Ok(FeatShape::Map(ch, l)),
            FeatShape::Flat(d) if d == b.ch => Ok(input),
            _ => err("batchnorm"),
        },
        Layer::Relu | Layer::Selu | Layer::Dropout { .. } => Ok(input),
        Layer::MaxPool2 => match input {
            FeatShape::Map(c, l) if l % 2 == 0 && l > 0 => Ok(FeatShape::Map(c, l / 2)),
            _ => err("maxpool"),
        },
        Layer::GlobalAvgPool => match input {
            FeatShape::Map(c, _) => Ok(FeatShape::Flat(c)),
            _ => err("global_avgpool"),
        },
        Layer::Flatten => match input {
            FeatShape::Map(c, l) => Ok(FeatShape::Flat(c * l)),
            _ => err("flatten"),
        },
        Layer::Dense(d) => match input {
            FeatShape::Flat(n) if n == d.in_dim => Ok(FeatShape::Flat(d.out_dim)),
            _ => err("dense"),
        },
        Layer::Residual { body } => {
            let mut shape = input;
            for sub in body {
                shape = layer_out_shape(sub, shape)?;
            }
            if shape != input {
                return Err(Error::ShapeMismatch(format!(
                    "residual body maps {input:?} to {shape:?}; addition needs equal shapes"
                )));
            }
            Ok(shape)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn tiny_residual_graph() -> ModelGraph<f64> {
        let conv1 = Conv1d::<f64>::new(2, 2, 3).unwrap();
        let conv2 = Conv1d::<f64>::new(2, 2, 3).unwrap();
        ModelGraph {
            id: "tiny".into(),
            input_channels: 2,
            input_len: 8,
            num_classes: 2,
            stages: vec![
                Stage {
                    label: "Residual Unit".into(),
                    layers: vec![Layer::Residual {
                        body: vec![
                            Layer::Conv1d(conv1),
                            Layer::Relu,
                            Layer::Conv1d(conv2),
                        ],
                    }],
                },
                Stage {
                    label: "Head".into(),
                    layers: vec![Layer::Flatten, Layer::Dense(Dense::new(16, 2))],
                },
            ],
        }
    }

    #[test]
    fn zeroed_residual_body_is_identity() {
        let mut g = tiny_residual_graph();
        let x = Tensor::from_vec(&[1, 2, 8], (0..16).map(|i| i as f64 * 0.25 - 2.0).collect())
            .unwrap();
        // Body convs have zero weights and biases, so body output is zero
        // and the unit must pass its input through.
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (_, cache) = {
            let (y, cache) = {
                let mut stage_only = g.stages.remove(0);
                let (y, c) = layer_forward_train(&mut stage_only.layers[0], x.clone(), &mut rng)
                    .unwrap();
                g.stages.insert(0, stage_only);
                (y, c)
            };
            assert_eq!(y.data(), x.data());
            (y, cache)
        };
        drop(cache);
    }

    #[test]
    fn forward_backward_shapes_line_up() {
        let mut g = tiny_residual_graph();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = Tensor::from_vec(&[3, 2, 8], (0..48).map(|i| (i as f64 * 0.3).sin()).collect())
            .unwrap();
        let (y, cache) = g.forward_train(x.clone(), &mut rng).unwrap();
        assert_eq!(y.shape(), &[3, 2]);
        let dy = Tensor::from_vec(&[3, 2], vec![1.0; 6]).unwrap();
        let dx = g.backward(cache, dy).unwrap();
        assert_eq!(dx.shape(), x.shape());
    }

    #[test]
    fn infer_is_deterministic_and_pure() {
        let mut g = tiny_residual_graph();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        // Give the parameters nonzero values.
        g.for_each_param(&mut |p, _| {
            for (i, v) in p.data_mut().iter_mut().enumerate() {
                *v = ((i % 7) as f64 - 3.0) * 0.21;
            }
        });
        let _ = rng;
        let x = Tensor::from_vec(&[2, 2, 8], (0..32).map(|i| (i as f64 * 0.7).cos()).collect())
            .unwrap();
        let snapshot = g.state_snapshot();
        let y1 = g.forward_infer(x.clone()).unwrap();
        let y2 = g.forward_infer(x).unwrap();
        assert_eq!(y1.data(), y2.data());
        let after = g.state_snapshot();
        for (a, b) in snapshot.iter().zip(&after) {
            assert_eq!(a.data(), b.data());
        }
    }

    #[test]
    fn shape_trace_of_tiny_graph() {
        let g = tiny_residual_graph();
        let trace = g.shape_trace().unwrap();
        assert_eq!(
            trace,
            vec![
                ("Input".to_string(), "2 x 8".to_string()),
                ("Residual Unit".to_string(), "2 x 8".to_string()),
                ("Head".to_string(), "2".to_string()),
            ]
        );
    }

    #[test]
    fn residual_shape_mismatch_rejected() {
        let g = ModelGraph::<f64> {
            id: "bad".into(),
            input_channels: 2,
            input_len: 8,
            num_classes: 2,
            stages: vec![Stage {
                label: "Residual".into(),
                layers: vec![Layer::Residual { body: vec![Layer::MaxPool2] }],
            }],
        };
        assert!(g.shape_trace().is_err());
    }

    #[test]
    fn state_roundtrip() {
        let mut g = tiny_residual_graph();
        g.for_each_param(&mut |p, _| {
            for (i, v) in p.data_mut().iter_mut().enumerate() {
                *v = i as f64 * 0.5 - 1.0;
            }
        });
        let snap = g.state_snapshot();
        let mut g2 = tiny_residual_graph();
        g2.load_state(&snap).unwrap();
        assert_eq!(g2.state_snapshot(), snap);
        assert!(g2.load_state(&snap[1..]).is_err());
    }
}

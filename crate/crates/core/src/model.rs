//! A stack of graph layers producing node embeddings, example-embedding
//! assembly, and an MLP head with a sigmoid output.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::examples::Example;
use crate::graph::Graph;
use crate::matrix::{gemm, Matrix};
use crate::nn::{self, ParamArray};
use crate::seed::{self, Rng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerKind {
    Gcn,
    Sage,
}

impl fmt::Display for LayerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LayerKind::Gcn => "gcn",
            LayerKind::Sage => "sage",
        })
    }
}

impl std::str::FromStr for LayerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gcn" => Ok(LayerKind::Gcn),
            "sage" => Ok(LayerKind::Sage),
            other => invalid(format!("unknown layer kind {other:?} (expected gcn or sage)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GnnConfig {
    pub layer_kind: LayerKind,
    pub num_layers: usize,
    pub embed_dim: usize,
    pub input_dim: usize,
    /// Row-wise L2 normalisation after each ReLU and on the final embedding.
    pub normalize_after_relu: bool,
    pub mlp_hidden_dims: Vec<usize>,
}

impl GnnConfig {
    /// Five layers of width 128 with an MLP of hidden widths `[256, 128]`.
    pub fn new(layer_kind: LayerKind, input_dim: usize) -> GnnConfig {
        GnnConfig::with_dims(layer_kind, input_dim, 5, 128)
    }

    /// MLP hidden widths default to `[2k, k]` for embedding width `k`.
    pub fn with_dims(layer_kind: LayerKind, input_dim: usize, num_layers: usize, embed_dim: usize) -> GnnConfig {
        GnnConfig {
            layer_kind,
            num_layers,
            embed_dim,
            input_dim,
            normalize_after_relu: true,
            mlp_hidden_dims: vec![2 * embed_dim, embed_dim],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_layers == 0 {
            return invalid("num_layers must be at least 1");
        }
        if self.embed_dim == 0 {
            return invalid("embed_dim must be at least 1");
        }
        if self.input_dim == 0 {
            return invalid("input_dim must be at least 1");
        }
        if self.mlp_hidden_dims.contains(&0) {
            return invalid("MLP hidden widths must be positive");
        }
        Ok(())
    }
}

/// In-neighbor lists in compressed form plus the GCN degree normalisation
/// `1 / sqrt(|N_in(n)| + 1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Adjacency {
    offsets: Vec<usize>,
    indices: Vec<usize>,
    inv_sqrt_deg: Vec<f64>,
}

impl Adjacency {
    pub fn from_graph(g: &Graph) -> Adjacency {
        let n = g.num_nodes();
        let mut offsets = Vec::with_capacity(n + 1);
        let mut indices = Vec::new();
        offsets.push(0);
        for v in 0..n {
            indices.extend_from_slice(g.in_neighbors(v));
            offsets.push(indices.len());
        }
        let inv_sqrt_deg = (0..n)
            .map(|v| 1.0 / (((offsets[v + 1] - offsets[v]) + 1) as f64).sqrt())
            .collect();
        Adjacency {
            offsets,
            indices,
            inv_sqrt_deg,
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.offsets.len() - 1
    }

    #[inline]
    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.indices[self.offsets[v]..self.offsets[v + 1]]
    }

    fn check_rows(&self, h: &Matrix) -> Result<()> {
        if h.rows() != self.num_nodes() {
            return Err(Error::Shape(format!(
                "matrix has {} rows but the graph has {} nodes",
                h.rows(),
                self.num_nodes()
            )));
        }
        Ok(())
    }

    /// Row `v` becomes the mean of the rows of its in-neighbors (zero when
    /// there are none).
    pub fn mean_aggregate(&self, h: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(h.rows(), h.cols());
        for v in 0..self.num_nodes() {
            let nb = self.neighbors(v);
            if nb.is_empty() {
                continue;
            }
            let inv = 1.0 / nb.len() as f64;
            let row = out.row_mut(v);
            for &u in nb {
                for (o, x) in row.iter_mut().zip(h.row(u)) {
                    *o += x;
                }
            }
            row.iter_mut().for_each(|o| *o *= inv);
        }
        out
    }

    /// Adjoint of [`Adjacency::mean_aggregate`].
    pub fn mean_aggregate_transpose(&self, d: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(d.rows(), d.cols());
        for v in 0..self.num_nodes() {
            let nb = self.neighbors(v);
            if nb.is_empty() {
                continue;
            }
            let inv = 1.0 / nb.len() as f64;
            for &u in nb {
                let src = d.row(v);
                for (o, x) in out.row_mut(u).iter_mut().zip(src) {
                    *o += x * inv;
                }
            }
        }
        out
    }

    /// `D̃^{-1/2} (A + I) D̃^{-1/2} · x` with `A[v][u] = 1` for each in-edge `u → v`.
    pub fn gcn_propagate(&self, x: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(x.rows(), x.cols());
        for v in 0..self.num_nodes() {
            let cv = self.inv_sqrt_deg[v];
            let row = out.row_mut(v);
            for (o, s) in row.iter_mut().zip(x.row(v)) {
                *o = cv * cv * s;
            }
            for &u in self.neighbors(v) {
                let c = cv * self.inv_sqrt_deg[u];
                for (o, s) in row.iter_mut().zip(x.row(u)) {
                    *o += c * s;
                }
            }
        }
        out
    }

    /// Adjoint of [`Adjacency::gcn_propagate`].
    pub fn gcn_propagate_transpose(&self, d: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(d.rows(), d.cols());
        for v in 0..self.num_nodes() {
            let cv = self.inv_sqrt_deg[v];
            for (o, s) in out.row_mut(v).iter_mut().zip(d.row(v)) {
                *o += cv * cv * s;
            }
            for &u in self.neighbors(v) {
                let c = cv * self.inv_sqrt_deg[u];
                let src = d.row(v);
                for (o, s) in out.row_mut(u).iter_mut().zip(src) {
                    *o += c * s;
                }
            }
        }
        out
    }
}

/// Result of a layer forward pass: the output and any intermediate the
/// backward pass needs.
#[derive(Clone, Debug)]
pub struct LayerForward {
    pub output: Matrix,
    pub aux: Option<Matrix>,
}

/// A message-passing layer with a hand-written backward pass. New layer
/// types plug in by implementing this trait.
pub trait GraphLayer: Send + Sync + fmt::Debug {
    fn kind(&self) -> LayerKind;
    fn in_dim(&self) -> usize;
    fn out_dim(&self) -> usize;
    fn forward(&self, input: &Matrix, adj: &Adjacency) -> Result<LayerForward>;
    /// Accumulates parameter gradients and returns the gradient with respect
    /// to `input` when `need_input_grad` is set.
    fn backward(
        &mut self,
        input: &Matrix,
        aux: Option<&Matrix>,
        adj: &Adjacency,
        grad_out: &Matrix,
        need_input_grad: bool,
    ) -> Option<Matrix>;
    fn params(&self) -> Vec<&ParamArray>;
    fn params_mut(&mut self) -> Vec<&mut ParamArray>;
    fn box_clone(&self) -> Box<dyn GraphLayer>;
}

impl Clone for Box<dyn GraphLayer> {
    fn clone(&self) -> Self {
        self.box_clone()
    }
}

fn check_input(layer: &dyn GraphLayer, input: &Matrix, adj: &Adjacency) -> Result<()> {
    adj.check_rows(input)?;
    if input.cols() != layer.in_dim() {
        return Err(Error::Shape(format!(
            "{} layer expects {} input columns, got {}",
            layer.kind(),
            layer.in_dim(),
            input.cols()
        )));
    }
    Ok(())
}

/// Symmetric-normalised graph convolution with self-loops, no bias.
#[derive(Clone, Debug)]
pub struct GcnLayer {
    pub weight: ParamArray,
}

impl GcnLayer {
    pub fn new(weight: ParamArray) -> GcnLayer {
        GcnLayer { weight }
    }
}

impl GraphLayer for GcnLayer {
    fn kind(&self) -> LayerKind {
        LayerKind::Gcn
    }

    fn in_dim(&self) -> usize {
        self.weight.value.rows()
    }

    fn out_dim(&self) -> usize {
        self.weight.value.cols()
    }

    fn forward(&self, input: &Matrix, adj: &Adjacency) -> Result<LayerForward> {
        check_input(self, input, adj)?;
        let mut xw = Matrix::zeros(input.rows(), self.out_dim());
        gemm(false, input, false, &self.weight.value, 0.0, &mut xw);
        Ok(LayerForward {
            output: adj.gcn_propagate(&xw),
            aux: None,
        })
    }

    fn backward(
        &mut self,
        input: &Matrix,
        _aux: Option<&Matrix>,
        adj: &Adjacency,
        grad_out: &Matrix,
        need_input_grad: bool,
    ) -> Option<Matrix> {
        let d_xw = adj.gcn_propagate_transpose(grad_out);
        gemm(true, input, false, &d_xw, 1.0, &mut self.weight.grad);
        need_input_grad.then(|| {
            let mut dx = Matrix::zeros(input.rows(), self.in_dim());
            gemm(false, &d_xw, true, &self.weight.value, 0.0, &mut dx);
            dx
        })
    }

    fn params(&self) -> Vec<&ParamArray> {
        vec![&self.weight]
    }

    fn params_mut(&mut self) -> Vec<&mut ParamArray> {
        vec![&mut self.weight]
    }

    fn box_clone(&self) -> Box<dyn GraphLayer> {
        Box::new(self.clone())
    }
}

/// Mean-aggregator SAGE layer: `H·W_self + mean(H[N(v)])·W_neigh`, no bias.
#[derive(Clone, Debug)]
pub struct SageLayer {
    pub w_self: ParamArray,
    pub w_neigh: ParamArray,
}

impl SageLayer {
    pub fn new(w_self: ParamArray, w_neigh: ParamArray) -> Result<SageLayer> {
        if w_self.shape() != w_neigh.shape() {
            return Err(Error::Shape(format!(
                "SAGE weights differ in shape: {:?} vs {:?}",
                w_self.shape(),
                w_neigh.shape()
            )));
        }
        Ok(SageLayer { w_self, w_neigh })
    }
}

impl GraphLayer for SageLayer {
    fn kind(&self) -> LayerKind {
        LayerKind::Sage
    }

    fn in_dim(&self) -> usize {
        self.w_self.value.rows()
    }

    fn out_dim(&self) -> usize {
        self.w_self.value.cols()
    }

    fn forward(&self, input: &Matrix, adj: &Adjacency) -> Result<LayerForward> {
        check_input(self, input, adj)?;
        let mean = adj.mean_aggregate(input);
        let mut out = Matrix::zeros(input.rows(), self.out_dim());
        gemm(false, input, false, &self.w_self.value, 0.0, &mut out);
        gemm(false, &mean, false, &self.w_neigh.value, 1.0, &mut out);
        Ok(LayerForward {
            output: out,
            aux: Some(mean),
        })
    }

    fn backward(
        &mut self,
        input: &Matrix,
        aux: Option<&Matrix>,
        adj: &Adjacency,
        grad_out: &Matrix,
        need_input_grad: bool,
    ) -> Option<Matrix> {
        let recomputed;
        let mean = match aux {
            Some(m) => m,
            None => {
                recomputed = adj.mean_aggregate(input);
                &recomputed
            }
        };
        gemm(true, input, false, grad_out, 1.0, &mut self.w_self.grad);
        gemm(true, mean, false, grad_out, 1.0, &mut self.w_neigh.grad);
        need_input_grad.then(|| {
            let mut d_mean = Matrix::zeros(input.rows(), self.in_dim());
            gemm(false, grad_out, true, &self.w_neigh.value, 0.0, &mut d_mean);
            let mut dx = adj.mean_aggregate_transpose(&d_mean);
            gemm(false, grad_out, true, &self.w_self.value, 1.0, &mut dx);
            dx
        })
    }

    fn params(&self) -> Vec<&ParamArray> {
        vec![&self.w_self, &self.w_neigh]
    }

    fn params_mut(&mut self) -> Vec<&mut ParamArray> {
        vec![&mut self.w_self, &mut self.w_neigh]
    }

    fn box_clone(&self) -> Box<dyn GraphLayer> {
        Box::new(self.clone())
    }
}

/// Divides each row by its L2 norm in place; zero rows are left alone.
/// Returns the norms.
pub fn normalize_rows(m: &mut Matrix) -> Vec<f64> {
    (0..m.rows())
        .map(|i| {
            let row = m.row_mut(i);
            let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.0 {
                row.iter_mut().for_each(|x| *x /= norm);
            }
            norm
        })
        .collect()
}

/// Backward of [`normalize_rows`] given the normalised output `y` and norms.
fn normalize_rows_backward(y: &Matrix, norms: &[f64], dy: &mut Matrix) {
    for (i, &norm) in norms.iter().enumerate() {
        if norm == 0.0 {
            continue;
        }
        let yr = y.row(i);
        let dot: f64 = yr.iter().zip(dy.row(i)).map(|(a, b)| a * b).sum();
        for (d, &yv) in dy.row_mut(i).iter_mut().zip(yr) {
            *d = (*d - yv * dot) / norm;
        }
    }
}

#[derive(Clone, Debug)]
struct LayerTrace {
    aux: Option<Matrix>,
    /// Layer output before activation; kept only when a ReLU follows.
    pre: Option<Matrix>,
    norms: Option<Vec<f64>>,
}

/// Everything the backward pass needs from one GNN forward pass.
#[derive(Clone, Debug)]
pub struct GnnTrace {
    /// `activations[0]` is the input; `activations[l + 1]` the output of layer `l`.
    activations: Vec<Matrix>,
    layers: Vec<LayerTrace>,
}

impl GnnTrace {
    pub fn embeddings(&self) -> &Matrix {
        self.activations.last().expect("at least one activation")
    }
}

#[derive(Clone, Debug)]
struct Dense {
    weight: ParamArray,
    bias: ParamArray,
}

/// The GNN encoder and MLP predictor, trained jointly.
#[derive(Clone, Debug)]
pub struct NodePredictor {
    config: GnnConfig,
    layers: Vec<Box<dyn GraphLayer>>,
    mlp: Vec<Dense>,
}

/// Forward pass of the MLP over a batch of example embeddings.
struct MlpTrace {
    /// Inputs to each dense layer; `inputs[0]` is the example-embedding batch.
    inputs: Vec<Matrix>,
    /// Pre-activations of the hidden layers.
    pre: Vec<Matrix>,
    probs: Vec<f64>,
}

impl NodePredictor {
    /// Glorot-uniform weights and zero biases drawn from `seed`.
    pub fn new(config: GnnConfig, seed: u64) -> Result<NodePredictor> {
        config.validate()?;
        let mut rng = seed::rng(seed);
        let mut layers: Vec<Box<dyn GraphLayer>> = Vec::with_capacity(config.num_layers);
        for l in 0..config.num_layers {
            let fan_in = if l == 0 { config.input_dim } else { config.embed_dim };
            let k = config.embed_dim;
            layers.push(match config.layer_kind {
                LayerKind::Gcn => Box::new(GcnLayer::new(ParamArray::glorot(format!("gnn.{l}.weight"), fan_in, k, &mut rng))),
                LayerKind::Sage => Box::new(SageLayer::new(
                    ParamArray::glorot(format!("gnn.{l}.w_self"), fan_in, k, &mut rng),
                    ParamArray::glorot(format!("gnn.{l}.w_neigh"), fan_in, k, &mut rng),
                )?),
            });
        }
        let mlp = mlp_dims(&config)
            .windows(2)
            .enumerate()
            .map(|(i, w)| Dense {
                weight: ParamArray::glorot(format!("mlp.{i}.weight"), w[0], w[1], &mut rng),
                bias: ParamArray::zeros(format!("mlp.{i}.bias"), 1, w[1]),
            })
            .collect();
        Ok(NodePredictor { config, layers, mlp })
    }

    pub fn config(&self) -> &GnnConfig {
        &self.config
    }

    pub fn num_params(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    /// GNN parameters first (layer order), then MLP weight/bias pairs.
    pub fn params(&self) -> Vec<&ParamArray> {
        let mut out: Vec<&ParamArray> = self.layers.iter().flat_map(|l| l.params()).collect();
        for d in &self.mlp {
            out.push(&d.weight);
            out.push(&d.bias);
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut ParamArray> {
        let mut out: Vec<&mut ParamArray> = self.layers.iter_mut().flat_map(|l| l.params_mut()).collect();
        for d in &mut self.mlp {
            out.push(&mut d.weight);
            out.push(&mut d.bias);
        }
        out
    }

    pub fn zero_grad(&mut self) {
        self.params_mut().into_iter().for_each(ParamArray::zero_grad);
    }

    pub fn snapshot(&self) -> Vec<Matrix> {
        self.params().iter().map(|p| p.value.clone()).collect()
    }

    pub fn restore(&mut self, snapshot: &[Matrix]) -> Result<()> {
        let mut params = self.params_mut();
        if params.len() != snapshot.len() {
            return invalid(format!("snapshot has {} arrays, model has {}", snapshot.len(), params.len()));
        }
        for (p, v) in params.iter_mut().zip(snapshot) {
            if p.value.shape() != v.shape() {
                return Err(Error::Shape(format!("snapshot shape mismatch for {}", p.name())));
            }
            p.value = v.clone();
        }
        Ok(())
    }

    fn check_features(&self, features: &Matrix, adj: &Adjacency) -> Result<()> {
        if features.cols() != self.config.input_dim {
            return Err(Error::ConfigMismatch(format!(
                "model expects {} feature columns, got {}",
                self.config.input_dim,
                features.cols()
            )));
        }
        adj.check_rows(features)
    }

    /// Node embeddings with the intermediates needed for backward.
    pub fn forward_gnn(&self, adj: &Adjacency, features: &Matrix) -> Result<GnnTrace> {
        self.check_features(features, adj)?;
        let last = self.layers.len() - 1;
        let mut activations = vec![features.clone()];
        let mut traces = Vec::with_capacity(self.layers.len());
        for (l, layer) in self.layers.iter().enumerate() {
            let LayerForward { output, aux } = layer.forward(&activations[l], adj)?;
            if !output.is_finite() {
                return Err(Error::NonFinite(format!("output of GNN layer {l}")));
            }
            let (mut act, pre) = if l < last {
                (nn::relu(&output), Some(output))
            } else {
                (output, None)
            };
            let norms = self.config.normalize_after_relu.then(|| normalize_rows(&mut act));
            traces.push(LayerTrace { aux, pre, norms });
            activations.push(act);
        }
        Ok(GnnTrace {
            activations,
            layers: traces,
        })
    }

    pub fn embed(&self, adj: &Adjacency, features: &Matrix) -> Result<Matrix> {
        let mut trace = self.forward_gnn(adj, features)?;
        Ok(trace.activations.pop().expect("non-empty"))
    }

    /// Back-propagates `grad` (with respect to the embeddings) through the
    /// GNN, accumulating parameter gradients.
    pub fn backward_gnn(&mut self, adj: &Adjacency, trace: &GnnTrace, grad: Matrix) {
        let mut grad = grad;
        for l in (0..self.layers.len()).rev() {
            let t = &trace.layers[l];
            if let Some(norms) = &t.norms {
                normalize_rows_backward(&trace.activations[l + 1], norms, &mut grad);
            }
            if let Some(pre) = &t.pre {
                nn::relu_backward(pre, &mut grad);
            }
            match self.layers[l].backward(&trace.activations[l], t.aux.as_ref(), adj, &grad, l > 0) {
                Some(g) => grad = g,
                None => break,
            }
        }
    }

    /// Example-embedding batch: one row per example.
    pub fn assemble(&self, emb: &Matrix, examples: &[&Example]) -> Result<Matrix> {
        let k = emb.cols();
        let mut x = Matrix::zeros(examples.len(), 2 * k);
        for (i, ex) in examples.iter().enumerate() {
            let row = embed_example(emb, ex)?;
            x.row_mut(i).copy_from_slice(&row);
        }
        Ok(x)
    }

    fn forward_mlp(&self, x: Matrix) -> Result<MlpTrace> {
        let expected = 2 * self.config.embed_dim;
        if x.cols() != expected {
            return Err(Error::Shape(format!(
                "predictor expects inputs of width {expected}, got {}",
                x.cols()
            )));
        }
        let last = self.mlp.len() - 1;
        let mut inputs = vec![x];
        let mut pre = Vec::with_capacity(last);
        for (i, d) in self.mlp.iter().enumerate() {
            let z = nn::affine_forward(&inputs[i], &d.weight, Some(&d.bias))?;
            if i < last {
                inputs.push(nn::relu(&z));
                pre.push(z);
            } else {
                if !z.is_finite() {
                    return Err(Error::NonFinite("predictor logits".into()));
                }
                let probs = nn::sigmoid(z.as_slice());
                return Ok(MlpTrace { inputs, pre, probs });
            }
        }
        unreachable!("the predictor always has an output layer")
    }

    /// Probabilities for a batch of example embeddings.
    pub fn predict_embedded(&self, x: Matrix) -> Result<Vec<f64>> {
        Ok(self.forward_mlp(x)?.probs)
    }

    /// Probability for a single example embedding.
    pub fn predict(&self, example_embedding: &[f64]) -> Result<f64> {
        let x = Matrix::from_vec(1, example_embedding.len(), example_embedding.to_vec())?;
        Ok(self.predict_embedded(x)?[0])
    }

    /// Scores examples against precomputed node embeddings.
    pub fn score(&self, emb: &Matrix, examples: &[&Example]) -> Result<Vec<f64>> {
        if examples.is_empty() {
            return Ok(Vec::new());
        }
        let x = self.assemble(emb, examples)?;
        self.predict_embedded(x)
    }

    /// Mean BCE over `examples` without touching gradients.
    pub fn loss(&self, adj: &Adjacency, features: &Matrix, examples: &[&Example]) -> Result<f64> {
        let emb = self.embed(adj, features)?;
        let probs = self.score(&emb, examples)?;
        nn::bce_loss(&probs, &labels(examples))
    }

    /// Zeroes gradients, then runs a full forward and backward pass over the
    /// batch. Returns the mean BCE and the batch probabilities.
    pub fn loss_and_grad(&mut self, adj: &Adjacency, features: &Matrix, examples: &[&Example]) -> Result<(f64, Vec<f64>)> {
        if examples.is_empty() {
            return invalid("empty batch");
        }
        self.zero_grad();
        let trace = self.forward_gnn(adj, features)?;
        let emb = trace.embeddings();
        let x = self.assemble(emb, examples)?;
        let mlp = self.forward_mlp(x)?;
        let y = labels(examples);
        let loss = nn::bce_loss(&mlp.probs, &y)?;
        if !loss.is_finite() {
            return Err(Error::NonFinite("training loss".into()));
        }

        let b = examples.len() as f64;
        let dz: Vec<f64> = mlp.probs.iter().zip(&y).map(|(p, y)| (p - y) / b).collect();
        let mut grad = Matrix::from_vec(examples.len(), 1, dz)?;
        for i in (0..self.mlp.len()).rev() {
            let d = &mut self.mlp[i];
            let dx = nn::affine_backward(&mlp.inputs[i], &mut d.weight, Some(&mut d.bias), &grad);
            if i > 0 {
                grad = dx;
                nn::relu_backward(&mlp.pre[i - 1], &mut grad);
            } else {
                grad = dx;
            }
        }

        let k = self.config.embed_dim;
        let mut d_emb = Matrix::zeros(emb.rows(), k);
        for (i, ex) in examples.iter().enumerate() {
            let row = grad.row(i);
            let inv = 1.0 / ex.members.len() as f64;
            for &m in &ex.members {
                for (acc, g) in d_emb.row_mut(m).iter_mut().zip(&row[..k]) {
                    *acc += g * inv;
                }
            }
            for (acc, g) in d_emb.row_mut(ex.target).iter_mut().zip(&row[k..]) {
                *acc += g;
            }
        }
        self.backward_gnn(adj, &trace, d_emb);
        Ok((loss, mlp.probs))
    }

    pub fn to_checkpoint(&self, seed: u64) -> Checkpoint {
        Checkpoint {
            config: self.config.clone(),
            seed,
            params: self
                .params()
                .iter()
                .map(|p| NamedArray {
                    name: p.name().to_string(),
                    shape: p.shape(),
                    values: p.value.as_slice().to_vec(),
                })
                .collect(),
        }
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<NodePredictor> {
        let mut model = NodePredictor::new(ckpt.config.clone(), ckpt.seed)?;
        let mut params = model.params_mut();
        if params.len() != ckpt.params.len() {
            return Err(Error::ConfigMismatch(format!(
                "checkpoint has {} arrays, configuration implies {}",
                ckpt.params.len(),
                params.len()
            )));
        }
        for (p, saved) in params.iter_mut().zip(&ckpt.params) {
            if p.name() != saved.name || p.shape() != saved.shape {
                return Err(Error::ConfigMismatch(format!(
                    "checkpoint array {} {:?} does not match {} {:?}",
                    saved.name,
                    saved.shape,
                    p.name(),
                    p.shape()
                )));
            }
            p.value = Matrix::from_vec(saved.shape[0], saved.shape[1], saved.values.clone())?;
            if !p.value.is_finite() {
                return Err(Error::NonFinite(format!("checkpoint array {}", saved.name)));
            }
        }
        Ok(model)
    }

    /// Mutable access to the `l`-th graph layer, for tests and diagnostics.
    pub fn layer_mut(&mut self, l: usize) -> &mut dyn GraphLayer {
        self.layers[l].as_mut()
    }
}

fn mlp_dims(config: &GnnConfig) -> Vec<usize> {
    let mut dims = vec![2 * config.embed_dim];
    dims.extend_from_slice(&config.mlp_hidden_dims);
    dims.push(1);
    dims
}

fn labels(examples: &[&Example]) -> Vec<f64> {
    examples.iter().map(|e| f64::from(e.label)).collect()
}

/// `[mean(h_m for m in S), h_t]`.
pub fn embed_example(emb: &Matrix, ex: &Example) -> Result<Vec<f64>> {
    if ex.members.is_empty() {
        return invalid(format!("example for target {} has no members", ex.target));
    }
    let n = emb.rows();
    if ex.target >= n || ex.members.iter().any(|&m| m >= n) {
        return invalid(format!("example for target {} refers to a node outside 0..{n}", ex.target));
    }
    let k = emb.cols();
    let mut out = vec![0.0; 2 * k];
    for &m in &ex.members {
        for (o, x) in out[..k].iter_mut().zip(emb.row(m)) {
            *o += x;
        }
    }
    let inv = 1.0 / ex.members.len() as f64;
    out[..k].iter_mut().for_each(|o| *o *= inv);
    out[k..].copy_from_slice(emb.row(ex.target));
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedArray {
    pub name: String,
    pub shape: [usize; 2],
    pub values: Vec<f64>,
}

/// Configuration, initialisation seed and parameter values of a model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub config: GnnConfig,
    pub seed: u64,
    pub params: Vec<NamedArray>,
}

/// Seeded features uniform in `[-1, 1]`.
pub fn random_features(num_nodes: usize, dim: usize, seed: u64) -> Matrix {
    use rand::Rng as _;
    let mut rng: Rng = seed::rng(seed);
    let data = (0..num_nodes * dim).map(|_| rng.gen_range(-1.0..=1.0)).collect();
    Matrix::from_vec(num_nodes, dim, data).expect("sized")
}

/// The all-ones feature matrix with three columns.
pub fn dummy_features(num_nodes: usize) -> Matrix {
    Matrix::filled(num_nodes, 3, 1.0)
}

/// A model bound to a graph and a fixed batch, for gradient checking.
pub struct BatchObjective<'a> {
    pub model: NodePredictor,
    pub adj: &'a Adjacency,
    pub features: &'a Matrix,
    pub examples: Vec<&'a Example>,
    /// Scales the analytic gradient of the first GNN array by `1 + c` after
    /// backward; used to show that the checker catches broken gradients.
    pub corrupt: Option<f64>,
}

impl nn::Objective for BatchObjective<'_> {
    fn params_mut(&mut self) -> Vec<&mut ParamArray> {
        self.model.params_mut()
    }

    fn loss(&mut self) -> Result<f64> {
        self.model.loss(self.adj, self.features, &self.examples)
    }

    fn loss_and_grad(&mut self) -> Result<f64> {
        let (loss, _) = self.model.loss_and_grad(self.adj, self.features, &self.examples)?;
        if let Some(c) = self.corrupt {
            let first = &mut self.model.params_mut()[0];
            first.grad.as_mut_slice().iter_mut().for_each(|g| *g *= 1.0 + c);
        }
        Ok(loss)
    }
}

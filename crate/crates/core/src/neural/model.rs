//! Network runtime: initialization, forward evaluation, and hand-written
//! reverse-mode gradients for every layer kind.

use std::collections::hash_map::DefaultHasher;
use std::hash::Hasher;
use std::path::Path;

use ndarray::{s, Array1, Array2, Array3, Array4, Axis};
use rand::RngExt;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neural::io::{read_container, write_container, Container, KIND_MODEL};
use crate::neural::{InputShape, NetworkSpec, PlannedLayer};
use crate::seeding::{self, streams};
use crate::Scalar;

/// Value flowing between layers: flat vector or channel-first tensor.
#[derive(Debug, Clone)]
pub(crate) enum Value<F> {
    Flat(Array1<F>),
    Spatial(Array3<F>),
}

/// One materialized layer. Parameter layout (weights then bias, row-major)
/// defines the flat parameter order used by optimizers and serialization.
#[derive(Debug, Clone)]
pub(crate) enum Layer<F> {
    Dense { w: Array2<F>, b: Array1<F> },
    Relu,
    Conv { w: Array4<F>, b: Array1<F> },
    MaxPool { kernel: usize },
    Flatten,
}

/// Unrolls an image tensor into the patch matrix of a valid convolution:
/// row (ic·k+ky)·k+kx, column oy·ow+ox.
fn im2col<F: Scalar>(x: &Array3<F>, k: usize) -> Array2<F> {
    let (c, h, w) = x.dim();
    let (oh, ow) = (h - k + 1, w - k + 1);
    let mut cols = Array2::zeros((c * k * k, oh * ow));
    for ic in 0..c {
        for ky in 0..k {
            for kx in 0..k {
                let row = (ic * k + ky) * k + kx;
                for oy in 0..oh {
                    cols.slice_mut(s![row, oy * ow..(oy + 1) * ow])
                        .assign(&x.slice(s![ic, oy + ky, kx..kx + ow]));
                }
            }
        }
    }
    cols
}

impl<F: Scalar> Layer<F> {
    /// Evaluates the layer. When `rec` is given, every non-smooth decision
    /// (relu sign, pool argmax) is hashed into it, fingerprinting the
    /// active linear region of the network.
    fn forward(&self, input: &Value<F>, rec: Option<&mut DefaultHasher>) -> Result<Value<F>> {
        match (self, input) {
            (Layer::Dense { w, b }, Value::Flat(x)) => {
                if x.len() != w.ncols() {
                    return Err(Error::validation(format!(
                        "dense layer expects {} inputs, got {}",
                        w.ncols(),
                        x.len()
                    )));
                }
                Ok(Value::Flat(w.dot(x) + b))
            }
            (Layer::Relu, Value::Flat(x)) => {
                if let Some(h) = rec {
                    for &v in x.iter() {
                        h.write_u8(u8::from(v > F::zero()));
                    }
                }
                Ok(Value::Flat(x.mapv(|v| v.max(F::zero()))))
            }
            (Layer::Relu, Value::Spatial(x)) => {
                if let Some(h) = rec {
                    for &v in x.iter() {
                        h.write_u8(u8::from(v > F::zero()));
                    }
                }
                Ok(Value::Spatial(x.mapv(|v| v.max(F::zero()))))
            }
            (Layer::Conv { w, b }, Value::Spatial(x)) => {
                let (oc, ic, k, _) = w.dim();
                let (c, h, width) = x.dim();
                if c != ic || h < k || width < k {
                    return Err(Error::validation(format!(
                        "conv layer expects {ic} channels and extent ≥ {k}, got {c}x{h}x{width}"
                    )));
                }
                let (oh, ow) = (h - k + 1, width - k + 1);
                let cols = im2col(x, k);
                let w_mat = w
                    .to_shape((oc, ic * k * k))
                    .expect("conv weights are contiguous");
                let mut out = w_mat.dot(&cols);
                for (mut row, &bias) in out.rows_mut().into_iter().zip(b.iter()) {
                    row.mapv_inplace(|v| v + bias);
                }
                Ok(Value::Spatial(
                    out.into_shape_with_order((oc, oh, ow))
                        .expect("conv output shape"),
                ))
            }
            (Layer::MaxPool { kernel }, Value::Spatial(x)) => {
                let k = *kernel;
                let (c, h, w) = x.dim();
                if h < k || w < k {
                    return Err(Error::validation(format!(
                        "pool kernel {k} exceeds spatial extent {h}x{w}"
                    )));
                }
                let (oh, ow) = (h / k, w / k);
                let mut rec = rec;
                let mut out = Array3::zeros((c, oh, ow));
                for ci in 0..c {
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let mut best = x[(ci, oy * k, ox * k)];
                            let mut arg = 0usize;
                            for wy in 0..k {
                                for wx in 0..k {
                                    let v = x[(ci, oy * k + wy, ox * k + wx)];
                                    if v > best {
                                        best = v;
                                        arg = wy * k + wx;
                                    }
                                }
                            }
                            if let Some(h) = rec.as_mut() {
                                h.write_usize(arg);
                            }
                            out[(ci, oy, ox)] = best;
                        }
                    }
                }
                Ok(Value::Spatial(out))
            }
            (Layer::Flatten, Value::Spatial(x)) => {
                Ok(Value::Flat(Array1::from_iter(x.iter().cloned())))
            }
            _ => Err(Error::validation(
                "layer input has the wrong kind (flat vs spatial)",
            )),
        }
    }

    /// Gradient w.r.t. the layer input, plus parameter gradients accumulated
    /// into `grad_buf` (this layer's flat slice, weights then bias).
    fn backward(&self, input: &Value<F>, upstream: Value<F>, grad_buf: &mut [F]) -> Value<F> {
        match (self, input, upstream) {
            (Layer::Dense { w, .. }, Value::Flat(x), Value::Flat(g)) => {
                let (out_dim, in_dim) = w.dim();
                let (dw, db) = grad_buf.split_at_mut(out_dim * in_dim);
                for i in 0..out_dim {
                    let gi = g[i];
                    let row = &mut dw[i * in_dim..(i + 1) * in_dim];
                    for (d, &xv) in row.iter_mut().zip(x.iter()) {
                        *d += gi * xv;
                    }
                    db[i] += gi;
                }
                Value::Flat(w.t().dot(&g))
            }
            (Layer::Relu, x, Value::Flat(g)) => {
                let Value::Flat(x) = x else { unreachable!("relu trace kind") };
                let mut g = g;
                g.zip_mut_with(x, |gv, &xv| {
                    if xv <= F::zero() {
                        *gv = F::zero();
                    }
                });
                Value::Flat(g)
            }
            (Layer::Relu, x, Value::Spatial(g)) => {
                let Value::Spatial(x) = x else { unreachable!("relu trace kind") };
                let mut g = g;
                g.zip_mut_with(x, |gv, &xv| {
                    if xv <= F::zero() {
                        *gv = F::zero();
                    }
                });
                Value::Spatial(g)
            }
            (Layer::Conv { w, .. }, Value::Spatial(x), Value::Spatial(g)) => {
                let (oc, ic, k, _) = w.dim();
                let (c, h, width) = x.dim();
                let (oh, ow) = (h - k + 1, width - k + 1);
                let g_mat = g
                    .into_shape_with_order((oc, oh * ow))
                    .expect("conv upstream shape");
                let cols = im2col(x, k);

                let dw_mat = g_mat.dot(&cols.t());
                let db = g_mat.sum_axis(Axis(1));
                let (dw_buf, db_buf) = grad_buf.split_at_mut(oc * ic * k * k);
                for (d, &v) in dw_buf.iter_mut().zip(dw_mat.iter()) {
                    *d += v;
                }
                for (d, &v) in db_buf.iter_mut().zip(db.iter()) {
                    *d += v;
                }

                let w_mat = w
                    .to_shape((oc, ic * k * k))
                    .expect("conv weights are contiguous");
                let dx_cols = w_mat.t().dot(&g_mat);
                let mut dx = Array3::zeros((c, h, width));
                for ci in 0..c {
                    for ky in 0..k {
                        for kx in 0..k {
                            let row = (ci * k + ky) * k + kx;
                            for oy in 0..oh {
                                let mut target = dx.slice_mut(s![ci, oy + ky, kx..kx + ow]);
                                target += &dx_cols.slice(s![row, oy * ow..(oy + 1) * ow]);
                            }
                        }
                    }
                }
                Value::Spatial(dx)
            }
            (Layer::MaxPool { kernel }, Value::Spatial(x), Value::Spatial(g)) => {
                let k = *kernel;
                let (c, h, w) = x.dim();
                let (oh, ow) = (h / k, w / k);
                let mut dx = Array3::zeros((c, h, w));
                for ci in 0..c {
                    for oy in 0..oh {
                        for ox in 0..ow {
                            // First maximum in row-major window order wins,
                            // matching the forward pass implicitly.
                            let (mut by, mut bx) = (0, 0);
                            let mut best = x[(ci, oy * k, ox * k)];
                            for wy in 0..k {
                                for wx in 0..k {
                                    let v = x[(ci, oy * k + wy, ox * k + wx)];
                                    if v > best {
                                        best = v;
                                        (by, bx) = (wy, wx);
                                    }
                                }
                            }
                            dx[(ci, oy * k + by, ox * k + bx)] += g[(ci, oy, ox)];
                        }
                    }
                }
                Value::Spatial(dx)
            }
            (Layer::Flatten, Value::Spatial(x), Value::Flat(g)) => {
                let dims = x.dim();
                Value::Spatial(
                    g.into_shape_with_order(dims)
                        .expect("flatten upstream shape"),
                )
            }
            _ => unreachable!("trace and upstream kinds always match the layer"),
        }
    }

    /// Number of trainable parameters.
    fn param_len(&self) -> usize {
        match self {
            Layer::Dense { w, b } => w.len() + b.len(),
            Layer::Conv { w, b } => w.len() + b.len(),
            _ => 0,
        }
    }

    fn append_params(&self, out: &mut Vec<F>) {
        match self {
            Layer::Dense { w, b } => {
                out.extend(w.iter().cloned());
                out.extend(b.iter().cloned());
            }
            Layer::Conv { w, b } => {
                out.extend(w.iter().cloned());
                out.extend(b.iter().cloned());
            }
            _ => {}
        }
    }

    fn load_params(&mut self, src: &[F]) {
        match self {
            Layer::Dense { w, b } => {
                let (ws, bs) = src.split_at(w.len());
                for (dst, &v) in w.iter_mut().zip(ws) {
                    *dst = v;
                }
                for (dst, &v) in b.iter_mut().zip(bs) {
                    *dst = v;
                }
            }
            Layer::Conv { w, b } => {
                let (ws, bs) = src.split_at(w.len());
                for (dst, &v) in w.iter_mut().zip(ws) {
                    *dst = v;
                }
                for (dst, &v) in b.iter_mut().zip(bs) {
                    *dst = v;
                }
            }
            _ => debug_assert!(src.is_empty()),
        }
    }
}

/// Persisted next to the weights so a loaded model reports its history.
#[derive(Serialize, Deserialize)]
struct ModelMeta {
    spec: NetworkSpec,
    train_log: Vec<f64>,
}

/// A (possibly trained) embedding network: spec, parameters, and the
/// per-epoch mean triplet loss of its training run.
#[derive(Debug, Clone)]
pub struct EmbeddingModel<F> {
    spec: NetworkSpec,
    layers: Vec<Layer<F>>,
    train_log: Vec<f64>,
}

/// Builds a network with uniform fan-in-scaled weights, `±√(6/fan_in)`,
/// and zero biases; bit-identical for equal seeds.
pub fn init_network<F: Scalar>(spec: &NetworkSpec, seed: u64) -> Result<EmbeddingModel<F>> {
    let plan = spec.plan()?;
    let mut rng = seeding::rng(seed, streams::WEIGHT_INIT, 0, 0);
    let mut draw = |n: usize, fan_in: usize| -> Vec<F> {
        let bound = (6.0 / fan_in as f64).sqrt();
        (0..n)
            .map(|_| F::cast(rng.random_range(-bound..=bound)))
            .collect()
    };

    let mut layers = Vec::with_capacity(plan.layers.len());
    for planned in &plan.layers {
        layers.push(match *planned {
            PlannedLayer::Dense { in_dim, out_dim } => Layer::Dense {
                w: Array2::from_shape_vec((out_dim, in_dim), draw(out_dim * in_dim, in_dim))
                    .expect("dense weight shape"),
                b: Array1::zeros(out_dim),
            },
            PlannedLayer::Conv {
                in_c,
                out_c,
                kernel,
                ..
            } => Layer::Conv {
                w: Array4::from_shape_vec(
                    (out_c, in_c, kernel, kernel),
                    draw(out_c * in_c * kernel * kernel, in_c * kernel * kernel),
                )
                .expect("conv weight shape"),
                b: Array1::zeros(out_c),
            },
            PlannedLayer::Relu => Layer::Relu,
            PlannedLayer::MaxPool { kernel } => Layer::MaxPool { kernel },
            PlannedLayer::Flatten => Layer::Flatten,
        });
    }
    Ok(EmbeddingModel {
        spec: spec.clone(),
        layers,
        train_log: Vec::new(),
    })
}

impl<F: Scalar> EmbeddingModel<F> {
    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    /// Per-epoch mean triplet loss of the training run (empty if untrained).
    pub fn train_log(&self) -> &[f64] {
        &self.train_log
    }

    pub(crate) fn push_epoch_loss(&mut self, loss: f64) {
        self.train_log.push(loss);
    }

    pub fn output_dim(&self) -> usize {
        self.spec.output_dim
    }

    /// Expected length of a flat input slice.
    pub fn input_len(&self) -> usize {
        match self.spec.input {
            InputShape::Flat { dim } => dim,
            InputShape::Image {
                height,
                width,
                channels,
            } => height * width * channels,
        }
    }

    fn input_value(&self, features: &[F]) -> Result<Value<F>> {
        if features.len() != self.input_len() {
            return Err(Error::validation(format!(
                "input has {} values, network expects {}",
                features.len(),
                self.input_len()
            )));
        }
        Ok(match self.spec.input {
            InputShape::Flat { .. } => Value::Flat(Array1::from(features.to_vec())),
            InputShape::Image {
                height,
                width,
                channels,
            } => Value::Spatial(
                Array3::from_shape_vec((channels, height, width), features.to_vec())
                    .expect("validated input length"),
            ),
        })
    }

    /// Maps a feature vector (channel-first flat pixels for image networks)
    /// to its embedding.
    pub fn embed(&self, features: &[F]) -> Result<Array1<F>> {
        let mut value = self.input_value(features)?;
        for layer in &self.layers {
            value = layer.forward(&value, None)?;
        }
        match value {
            Value::Flat(v) => Ok(v),
            Value::Spatial(_) => unreachable!("head layer is dense"),
        }
    }

    /// Like [`Self::embed`], additionally hashing every relu sign and pool
    /// argmax into `hasher` — a fingerprint of the active linear region.
    pub fn embed_recorded(
        &self,
        features: &[F],
        hasher: &mut DefaultHasher,
    ) -> Result<Array1<F>> {
        let mut value = self.input_value(features)?;
        for layer in &self.layers {
            value = layer.forward(&value, Some(hasher))?;
        }
        match value {
            Value::Flat(v) => Ok(v),
            Value::Spatial(_) => unreachable!("head layer is dense"),
        }
    }

    /// Forward pass that records the input of every layer, for backprop.
    pub(crate) fn forward_trace(&self, features: &[F]) -> Result<(Vec<Value<F>>, Array1<F>)> {
        let mut value = self.input_value(features)?;
        let mut trace = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let next = layer.forward(&value, None)?;
            trace.push(value);
            value = next;
        }
        match value {
            Value::Flat(v) => Ok((trace, v)),
            Value::Spatial(_) => unreachable!("head layer is dense"),
        }
    }

    /// Accumulates parameter gradients of one branch into `grad_buf`
    /// (aligned with [`Self::parameters`]), given the gradient w.r.t. the
    /// branch output.
    pub(crate) fn backward(
        &self,
        trace: &[Value<F>],
        output_grad: Array1<F>,
        grad_buf: &mut [F],
    ) {
        debug_assert_eq!(grad_buf.len(), self.parameter_count());
        let mut upstream = Value::Flat(output_grad);
        let mut offset = self.parameter_count();
        for (layer, input) in self.layers.iter().zip(trace).rev() {
            let len = layer.param_len();
            offset -= len;
            upstream = layer.backward(input, upstream, &mut grad_buf[offset..offset + len]);
        }
        debug_assert_eq!(offset, 0);
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(Layer::param_len).sum()
    }

    /// All parameters as one flat vector, in layer order (weights before
    /// bias within a layer, row-major).
    pub fn parameters(&self) -> Vec<F> {
        let mut out = Vec::with_capacity(self.parameter_count());
        for layer in &self.layers {
            layer.append_params(&mut out);
        }
        out
    }

    /// Overwrites all parameters from a flat vector laid out as
    /// [`Self::parameters`].
    pub fn set_parameters(&mut self, params: &[F]) -> Result<()> {
        if params.len() != self.parameter_count() {
            return Err(Error::validation(format!(
                "expected {} parameters, got {}",
                self.parameter_count(),
                params.len()
            )));
        }
        let mut offset = 0;
        for layer in &mut self.layers {
            let len = layer.param_len();
            layer.load_params(&params[offset..offset + len]);
            offset += len;
        }
        Ok(())
    }

    /// Writes the model as a flat binary container: header with the spec as
    /// JSON text, then every weight array as little-endian f64. The
    /// round-trip is bit-exact for f64 models.
    pub fn save(&self, path: &Path) -> Result<()> {
        let meta = serde_json::to_string(&ModelMeta {
            spec: self.spec.clone(),
            train_log: self.train_log.clone(),
        })
        .expect("model meta serializes");
        let mut arrays = Vec::new();
        for layer in &self.layers {
            match layer {
                Layer::Dense { w, b } => {
                    arrays.push(w.iter().map(|v| v.widen()).collect());
                    arrays.push(b.iter().map(|v| v.widen()).collect());
                }
                Layer::Conv { w, b } => {
                    arrays.push(w.iter().map(|v| v.widen()).collect());
                    arrays.push(b.iter().map(|v| v.widen()).collect());
                }
                _ => {}
            }
        }
        write_container(
            path,
            &Container {
                kind: KIND_MODEL,
                meta,
                arrays,
            },
        )
    }

    /// Reads a model written by [`Self::save`]. Weights are stored as f64;
    /// loading into an `f32` model narrows them.
    pub fn load(path: &Path) -> Result<Self> {
        let container = read_container(path)?;
        if container.kind != KIND_MODEL {
            return Err(Error::artifact(format!(
                "container holds kind {}, expected an embedding model",
                container.kind
            )));
        }
        let meta: ModelMeta = serde_json::from_str(&container.meta)
            .map_err(|e| Error::artifact(format!("bad model metadata: {e}")))?;
        let mut model: EmbeddingModel<F> = init_network(&meta.spec, 0)?;
        model.train_log = meta.train_log;

        let expected: usize = model
            .layers
            .iter()
            .map(|l| match l {
                Layer::Dense { .. } | Layer::Conv { .. } => 2,
                _ => 0,
            })
            .sum();
        if container.arrays.len() != expected {
            return Err(Error::artifact(format!(
                "container holds {} arrays, spec needs {expected}",
                container.arrays.len()
            )));
        }
        let mut arrays = container.arrays.into_iter();
        let mut take = |len: usize| -> Result<Vec<F>> {
            let a = arrays.next().expect("array count checked");
            if a.len() != len {
                return Err(Error::artifact(format!(
                    "weight array holds {} values, spec needs {len}",
                    a.len()
                )));
            }
            Ok(a.into_iter().map(F::cast).collect())
        };
        for layer in &mut model.layers {
            match layer {
                Layer::Dense { w, b } => {
                    let wv = take(w.len())?;
                    let bv = take(b.len())?;
                    for (dst, v) in w.iter_mut().zip(wv) {
                        *dst = v;
                    }
                    for (dst, v) in b.iter_mut().zip(bv) {
                        *dst = v;
                    }
                }
                Layer::Conv { w, b } => {
                    let wv = take(w.len())?;
                    let bv = take(b.len())?;
                    for (dst, v) in w.iter_mut().zip(wv) {
                        *dst = v;
                    }
                    for (dst, v) in b.iter_mut().zip(bv) {
                        *dst = v;
                    }
                }
                _ => {}
            }
        }
        Ok(model)
    }
}

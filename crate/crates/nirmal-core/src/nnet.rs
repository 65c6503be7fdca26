//! Small feed-forward stack: conv2d, maxpool2d, dense, relu, flatten, and
//! softmax cross-entropy, with hand-written backprop.
//!
//! Layout convention is B x C x H x W everywhere. Conv weights are
//! [out_ch, in_ch, k, k], dense weights [in, out], biases one per output
//! channel or feature. Forward caches whatever backward needs; backward
//! zeroes the gradient buffers before filling them.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::buffer::{matmul_nt_slices, matmul_slices, matmul_tn_slices, Buffer};
use crate::error::{Error, Result};

/// Architecture of a single layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LayerSpec {
    Conv2d {
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    MaxPool2d {
        window: usize,
        stride: usize,
    },
    Dense {
        out_features: usize,
    },
    Relu,
    Flatten,
}

enum Cache {
    Empty,
    /// Conv keeps the im2col expansion of its input (one block per image).
    Conv { cols: Vec<f32> },
    /// Pool keeps, per output element, the flat within-image index that won.
    Pool { switches: Vec<u32> },
    Dense { input: Buffer },
    Relu { input: Buffer },
    Flatten,
}

struct Layer {
    spec: LayerSpec,
    in_shape: Vec<usize>,
    out_shape: Vec<usize>,
    weight: Option<Buffer>,
    bias: Option<Buffer>,
    grad_w: Option<Buffer>,
    grad_b: Option<Buffer>,
    cache: Cache,
}

impl Layer {
    fn fan_in(&self) -> usize {
        match self.spec {
            LayerSpec::Conv2d { kernel, .. } => self.in_shape[0] * kernel * kernel,
            LayerSpec::Dense { .. } => self.in_shape[0],
            _ => 0,
        }
    }
}

/// An ordered stack of layers with a fixed per-sample input shape.
pub struct Network {
    input_shape: [usize; 3],
    layers: Vec<Layer>,
    forward_batch: Option<usize>,
}

fn conv_out_extent(extent: usize, kernel: usize, stride: usize, padding: usize) -> Result<usize> {
    let padded = extent + 2 * padding;
    if padded < kernel {
        return Err(Error::Contract(format!(
            "kernel {kernel} larger than padded extent {padded}"
        )));
    }
    Ok((padded - kernel) / stride + 1)
}

fn infer_out_shape(spec: &LayerSpec, in_shape: &[usize]) -> Result<Vec<usize>> {
    match *spec {
        LayerSpec::Conv2d { out_channels, kernel, stride, padding } => {
            let &[_, h, w] = in_shape else {
                return Err(Error::Contract(format!(
                    "conv2d wants CxHxW input, got {in_shape:?}"
                )));
            };
            if out_channels == 0 || kernel == 0 || stride == 0 {
                return Err(Error::Contract("conv2d extents must be positive".into()));
            }
            Ok(vec![
                out_channels,
                conv_out_extent(h, kernel, stride, padding)?,
                conv_out_extent(w, kernel, stride, padding)?,
            ])
        }
        LayerSpec::MaxPool2d { window, stride } => {
            let &[c, h, w] = in_shape else {
                return Err(Error::Contract(format!(
                    "maxpool2d wants CxHxW input, got {in_shape:?}"
                )));
            };
            if window == 0 || stride == 0 {
                return Err(Error::Contract("maxpool2d extents must be positive".into()));
            }
            if h < window || w < window {
                return Err(Error::Contract(format!(
                    "pool window {window} exceeds input {h}x{w}"
                )));
            }
            Ok(vec![c, (h - window) / stride + 1, (w - window) / stride + 1])
        }
        LayerSpec::Dense { out_features } => {
            let &[f] = in_shape else {
                return Err(Error::Contract(format!(
                    "dense wants flattened input, got {in_shape:?}"
                )));
            };
            if out_features == 0 || f == 0 {
                return Err(Error::Contract("dense extents must be positive".into()));
            }
            Ok(vec![out_features])
        }
        LayerSpec::Relu => Ok(in_shape.to_vec()),
        LayerSpec::Flatten => {
            if in_shape.len() != 3 {
                return Err(Error::Contract(format!(
                    "flatten wants CxHxW input, got {in_shape:?}"
                )));
            }
            Ok(vec![in_shape.iter().product()])
        }
    }
}

impl Network {
    /// Builds the stack and dry-runs the per-sample shapes through it.
    /// Parameters start at zero; call [`Network::init_params`] before training.
    pub fn new(input_shape: [usize; 3], specs: &[LayerSpec]) -> Result<Self> {
        if input_shape.contains(&0) {
            return Err(Error::Contract("input shape has a zero extent".into()));
        }
        if specs.is_empty() {
            return Err(Error::Contract("network needs at least one layer".into()));
        }
        let mut layers = Vec::with_capacity(specs.len());
        let mut shape = input_shape.to_vec();
        for spec in specs {
            let out_shape = infer_out_shape(spec, &shape)?;
            let (weight, bias) = match *spec {
                LayerSpec::Conv2d { out_channels, kernel, .. } => (
                    Some(Buffer::zeros(vec![out_channels, shape[0], kernel, kernel])?),
                    Some(Buffer::zeros(vec![out_channels])?),
                ),
                LayerSpec::Dense { out_features } => (
                    Some(Buffer::zeros(vec![shape[0], out_features])?),
                    Some(Buffer::zeros(vec![out_features])?),
                ),
                _ => (None, None),
            };
            layers.push(Layer {
                spec: spec.clone(),
                in_shape: shape,
                out_shape: out_shape.clone(),
                grad_w: weight.clone(),
                grad_b: bias.clone(),
                weight,
                bias,
                cache: Cache::Empty,
            });
            shape = out_shape;
        }
        Ok(Self {
            input_shape,
            layers,
            forward_batch: None,
        })
    }

    pub fn input_shape(&self) -> [usize; 3] {
        self.input_shape
    }

    /// Per-sample output shape of the final layer.
    pub fn output_shape(&self) -> &[usize] {
        &self.layers.last().expect("nonempty").out_shape
    }

    /// Draws every weight from uniform(-sqrt(1/fan_in), +sqrt(1/fan_in)) and
    /// zeroes every bias. Deterministic for a given seed.
    pub fn init_params(&mut self, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for layer in &mut self.layers {
            let fan_in = layer.fan_in();
            if let Some(w) = &mut layer.weight {
                let bound = (1.0 / fan_in as f32).sqrt();
                for x in w.data_mut() {
                    *x = rng.random_range(-bound..bound);
                }
            }
            if let Some(b) = &mut layer.bias {
                b.data_mut().fill(0.0);
            }
        }
    }

    /// Parameter buffers in a fixed order: per layer, weight then bias.
    pub fn param_buffers(&self) -> Vec<&Buffer> {
        self.layers
            .iter()
            .flat_map(|l| [l.weight.as_ref(), l.bias.as_ref()])
            .flatten()
            .collect()
    }

    /// Gradient buffers, aligned with [`Network::param_buffers`].
    pub fn grad_buffers(&self) -> Vec<&Buffer> {
        self.layers
            .iter()
            .flat_map(|l| [l.grad_w.as_ref(), l.grad_b.as_ref()])
            .flatten()
            .collect()
    }

    pub fn num_param_buffers(&self) -> usize {
        self.param_buffers().len()
    }

    /// Total scalar parameter count.
    pub fn num_params(&self) -> usize {
        self.param_buffers().iter().map(|b| b.len()).sum()
    }

    /// Replaces one parameter buffer (same indexing as `param_buffers`).
    pub fn set_param_buffer(&mut self, index: usize, value: Buffer) -> Result<()> {
        let mut slot = 0;
        for layer in &mut self.layers {
            for param in [&mut layer.weight, &mut layer.bias] {
                if let Some(p) = param {
                    if slot == index {
                        if p.shape() != value.shape() {
                            return Err(Error::Contract(format!(
                                "parameter {index} has shape {:?}, got {:?}",
                                p.shape(),
                                value.shape()
                            )));
                        }
                        *p = value;
                        return Ok(());
                    }
                    slot += 1;
                }
            }
        }
        Err(Error::Contract(format!(
            "parameter index {index} out of range ({slot} buffers)"
        )))
    }

    /// Runs the batch through every layer and caches activations for
    /// [`Network::backward`]. Returns the final activations (logits).
    pub fn forward(&mut self, batch: &Buffer) -> Result<Buffer> {
        let shape = batch.shape();
        let want: Vec<usize> = self.input_shape.to_vec();
        if shape.len() != 4 || shape[1..] != want[..] {
            return Err(Error::Contract(format!(
                "forward wants Bx{}x{}x{} input, got {:?}",
                want[0], want[1], want[2], shape
            )));
        }
        let b = shape[0];
        let mut x = batch.clone();
        for layer in &mut self.layers {
            x = forward_layer(layer, &x, b)?;
        }
        self.forward_batch = Some(b);
        Ok(x)
    }

    /// Backpropagates from d(loss)/d(logits), filling every gradient buffer,
    /// and returns the gradient with respect to the network input.
    /// Requires a prior [`Network::forward`] whose caches are still intact.
    pub fn backward(&mut self, dlogits: &Buffer) -> Result<Buffer> {
        let Some(b) = self.forward_batch else {
            return Err(Error::State("backward before forward".into()));
        };
        let out_shape = self.output_shape();
        let want: Vec<usize> = std::iter::once(b).chain(out_shape.iter().copied()).collect();
        if dlogits.shape() != want {
            return Err(Error::Contract(format!(
                "backward wants {:?} upstream gradient, got {:?}",
                want,
                dlogits.shape()
            )));
        }
        for layer in &mut self.layers {
            if let Some(g) = &mut layer.grad_w {
                g.data_mut().fill(0.0);
            }
            if let Some(g) = &mut layer.grad_b {
                g.data_mut().fill(0.0);
            }
        }
        let mut dy = dlogits.clone();
        for layer in self.layers.iter_mut().rev() {
            dy = backward_layer(layer, &dy, b)?;
        }
        Ok(dy)
    }
}

fn batched(shape_per_sample: &[usize], b: usize) -> Vec<usize> {
    std::iter::once(b).chain(shape_per_sample.iter().copied()).collect()
}

fn forward_layer(layer: &mut Layer, x: &Buffer, b: usize) -> Result<Buffer> {
    match layer.spec {
        LayerSpec::Conv2d { out_channels, kernel, stride, padding } => {
            let (&[c, h, w], &[_, oh, ow]) = (&layer.in_shape[..], &layer.out_shape[..]) else {
                unreachable!("validated at construction")
            };
            let ck = c * kernel * kernel;
            let spatial = oh * ow;
            let mut cols = vec![0.0f32; b * ck * spatial];
            let mut out = vec![0.0f32; b * out_channels * spatial];
            let weight = layer.weight.as_ref().expect("conv has weight");
            let bias = layer.bias.as_ref().expect("conv has bias");
            for i in 0..b {
                let img = &x.data()[i * c * h * w..(i + 1) * c * h * w];
                let col = &mut cols[i * ck * spatial..(i + 1) * ck * spatial];
                im2col(img, c, h, w, kernel, stride, padding, oh, ow, col);
                let out_img = &mut out[i * out_channels * spatial..(i + 1) * out_channels * spatial];
                matmul_slices(weight.data(), col, out_channels, ck, spatial, out_img);
                for oc in 0..out_channels {
                    let bv = bias.data()[oc];
                    for o in &mut out_img[oc * spatial..(oc + 1) * spatial] {
                        *o += bv;
                    }
                }
            }
            layer.cache = Cache::Conv { cols };
            Buffer::new(batched(&layer.out_shape, b), out)
        }
        LayerSpec::MaxPool2d { window, stride } => {
            let (&[c, h, w], &[_, oh, ow]) = (&layer.in_shape[..], &layer.out_shape[..]) else {
                unreachable!("validated at construction")
            };
            let mut out = vec![0.0f32; b * c * oh * ow];
            let mut switches = vec![0u32; b * c * oh * ow];
            for i in 0..b {
                let img = &x.data()[i * c * h * w..(i + 1) * c * h * w];
                let base = i * c * oh * ow;
                for ch in 0..c {
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let mut best_idx = ch * h * w + oy * stride * w + ox * stride;
                            let mut best = img[best_idx];
                            for ky in 0..window {
                                for kx in 0..window {
                                    let idx = ch * h * w + (oy * stride + ky) * w + ox * stride + kx;
                                    // Strict > keeps the first-scanned max on ties.
                                    if img[idx] > best {
                                        best = img[idx];
                                        best_idx = idx;
                                    }
                                }
                            }
                            let o = base + ch * oh * ow + oy * ow + ox;
                            out[o] = best;
                            switches[o] = best_idx as u32;
                        }
                    }
                }
            }
            layer.cache = Cache::Pool { switches };
            Buffer::new(batched(&layer.out_shape, b), out)
        }
        LayerSpec::Dense { out_features } => {
            let fin = layer.in_shape[0];
            let weight = layer.weight.as_ref().expect("dense has weight");
            let bias = layer.bias.as_ref().expect("dense has bias");
            let mut out = vec![0.0f32; b * out_features];
            matmul_slices(x.data(), weight.data(), b, fin, out_features, &mut out);
            for row in out.chunks_exact_mut(out_features) {
                for (o, &bv) in row.iter_mut().zip(bias.data()) {
                    *o += bv;
                }
            }
            layer.cache = Cache::Dense { input: x.clone() };
            Buffer::new(batched(&layer.out_shape, b), out)
        }
        LayerSpec::Relu => {
            let out = x.data().iter().map(|&v| v.max(0.0)).collect();
            layer.cache = Cache::Relu { input: x.clone() };
            Buffer::new(x.shape().to_vec(), out)
        }
        LayerSpec::Flatten => {
            layer.cache = Cache::Flatten;
            x.reshape(batched(&layer.out_shape, b))
        }
    }
}

fn backward_layer(layer: &mut Layer, dy: &Buffer, b: usize) -> Result<Buffer> {
    match layer.spec {
        LayerSpec::Conv2d { out_channels, kernel, stride, padding } => {
            let Cache::Conv { cols } = &layer.cache else {
                return Err(Error::State("conv backward before forward".into()));
            };
            let (&[c, h, w], &[_, oh, ow]) = (&layer.in_shape[..], &layer.out_shape[..]) else {
                unreachable!("validated at construction")
            };
            let ck = c * kernel * kernel;
            let spatial = oh * ow;
            let weight = layer.weight.as_ref().expect("conv has weight");
            let grad_w = layer.grad_w.as_mut().expect("conv has weight");
            let grad_b = layer.grad_b.as_mut().expect("conv has bias");
            let mut dx = vec![0.0f32; b * c * h * w];
            let mut dw_img = vec![0.0f32; out_channels * ck];
            let mut dcols = vec![0.0f32; ck * spatial];
            for i in 0..b {
                let dout = &dy.data()[i * out_channels * spatial..(i + 1) * out_channels * spatial];
                let col = &cols[i * ck * spatial..(i + 1) * ck * spatial];
                // dW += dOut x cols^T, accumulated over images and positions.
                matmul_nt_slices(dout, col, out_channels, spatial, ck, &mut dw_img);
                for (g, d) in grad_w.data_mut().iter_mut().zip(&dw_img) {
                    *g += d;
                }
                for oc in 0..out_channels {
                    let s: f32 = dout[oc * spatial..(oc + 1) * spatial].iter().sum();
                    grad_b.data_mut()[oc] += s;
                }
                // dcols = W^T x dOut, then scatter back through the padding.
                matmul_tn_slices(weight.data(), dout, ck, out_channels, spatial, &mut dcols);
                let dimg = &mut dx[i * c * h * w..(i + 1) * c * h * w];
                col2im_add(&dcols, c, h, w, kernel, stride, padding, oh, ow, dimg);
            }
            Buffer::new(batched(&layer.in_shape, b), dx)
        }
        LayerSpec::MaxPool2d { .. } => {
            let Cache::Pool { switches } = &layer.cache else {
                return Err(Error::State("maxpool backward before forward".into()));
            };
            let &[c, h, w] = &layer.in_shape[..] else {
                unreachable!("validated at construction")
            };
            let per_out: usize = layer.out_shape.iter().product();
            let mut dx = vec![0.0f32; b * c * h * w];
            for i in 0..b {
                let dimg = &mut dx[i * c * h * w..(i + 1) * c * h * w];
                let douts = &dy.data()[i * per_out..(i + 1) * per_out];
                let sw = &switches[i * per_out..(i + 1) * per_out];
                for (&d, &s) in douts.iter().zip(sw) {
                    dimg[s as usize] += d;
                }
            }
            Buffer::new(batched(&layer.in_shape, b), dx)
        }
        LayerSpec::Dense { out_features } => {
            let Cache::Dense { input } = &layer.cache else {
                return Err(Error::State("dense backward before forward".into()));
            };
            let fin = layer.in_shape[0];
            let weight = layer.weight.as_ref().expect("dense has weight");
            let grad_w = layer.grad_w.as_mut().expect("dense has weight");
            let grad_b = layer.grad_b.as_mut().expect("dense has bias");
            // dW = x^T x dy; db = column sums of dy; dx = dy x W^T.
            matmul_tn_slices(input.data(), dy.data(), fin, b, out_features, grad_w.data_mut());
            for row in dy.data().chunks_exact(out_features) {
                for (g, &d) in grad_b.data_mut().iter_mut().zip(row) {
                    *g += d;
                }
            }
            let mut dx = vec![0.0f32; b * fin];
            matmul_nt_slices(dy.data(), weight.data(), b, out_features, fin, &mut dx);
            Buffer::new(batched(&layer.in_shape, b), dx)
        }
        LayerSpec::Relu => {
            let Cache::Relu { input } = &layer.cache else {
                return Err(Error::State("relu backward before forward".into()));
            };
            let dx = input
                .data()
                .iter()
                .zip(dy.data())
                .map(|(&x, &d)| if x > 0.0 { d } else { 0.0 })
                .collect();
            Buffer::new(dy.shape().to_vec(), dx)
        }
        LayerSpec::Flatten => {
            if matches!(layer.cache, Cache::Empty) {
                return Err(Error::State("flatten backward before forward".into()));
            }
            dy.reshape(batched(&layer.in_shape, b))
        }
    }
}

/// Expands one image into columns: cols[(c*k*k) x (oh*ow)], zero padding.
#[allow(clippy::too_many_arguments)]
fn im2col(
    img: &[f32],
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
    cols: &mut [f32],
) {
    let spatial = oh * ow;
    for ch in 0..c {
        for ky in 0..k {
            for kx in 0..k {
                let row = (ch * k * k + ky * k + kx) * spatial;
                for oy in 0..oh {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    let out_row = row + oy * ow;
                    if iy < 0 || iy >= h as isize {
                        cols[out_row..out_row + ow].fill(0.0);
                        continue;
                    }
                    let src = ch * h * w + iy as usize * w;
                    for ox in 0..ow {
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        cols[out_row + ox] = if ix < 0 || ix >= w as isize {
                            0.0
                        } else {
                            img[src + ix as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatter-adds column gradients back onto the image.
#[allow(clippy::too_many_arguments)]
fn col2im_add(
    dcols: &[f32],
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
    dimg: &mut [f32],
) {
    let spatial = oh * ow;
    for ch in 0..c {
        for ky in 0..k {
            for kx in 0..k {
                let row = (ch * k * k + ky * k + kx) * spatial;
                for oy in 0..oh {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let dst = ch * h * w + iy as usize * w;
                    let src_row = row + oy * ow;
                    for ox in 0..ow {
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        if ix >= 0 && ix < w as isize {
                            dimg[dst + ix as usize] += dcols[src_row + ox];
                        }
                    }
                }
            }
        }
    }
}

/// Mean cross-entropy of softmax(logits) against integer labels, plus the
/// gradient d(loss)/d(logits) = (softmax - onehot)/B.
///
/// Row maxima are subtracted before exponentiation so large logits cannot
/// overflow.
pub fn softmax_cross_entropy(logits: &Buffer, labels: &[usize]) -> Result<(f32, Buffer)> {
    let &[b, k] = logits.shape() else {
        return Err(Error::Contract(format!(
            "softmax wants BxK logits, got {:?}",
            logits.shape()
        )));
    };
    if labels.len() != b {
        return Err(Error::Contract(format!(
            "{} labels for batch of {b}",
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::Contract(format!("label {bad} out of range for K={k}")));
    }
    let mut dlogits = vec![0.0f32; b * k];
    let mut loss = 0.0f64;
    let inv_b = 1.0 / b as f64;
    for (i, (&label, row)) in labels.iter().zip(logits.data().chunks_exact(k)).enumerate() {
        let mx = row.iter().fold(f32::NEG_INFINITY, |a, &x| a.max(x)) as f64;
        let mut denom = 0.0f64;
        for &x in row {
            denom += (x as f64 - mx).exp();
        }
        loss += denom.ln() - (row[label] as f64 - mx);
        for (j, &x) in row.iter().enumerate() {
            let p = (x as f64 - mx).exp() / denom;
            let y = if j == label { 1.0 } else { 0.0 };
            dlogits[i * k + j] = ((p - y) * inv_b) as f32;
        }
    }
    Ok((
        (loss * inv_b) as f32,
        Buffer::new(vec![b, k], dlogits)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn filled(shape: &[usize], f: impl Fn(usize) -> f32) -> Buffer {
        let n: usize = shape.iter().product();
        Buffer::new(shape.to_vec(), (0..n).map(f).collect()).unwrap()
    }

    #[test]
    fn zero_weights_give_zero_logits() {
        let mut net = Network::new(
            [1, 6, 6],
            &[
                LayerSpec::Conv2d { out_channels: 2, kernel: 3, stride: 1, padding: 1 },
                LayerSpec::Relu,
                LayerSpec::MaxPool2d { window: 2, stride: 2 },
                LayerSpec::Flatten,
                LayerSpec::Dense { out_features: 3 },
            ],
        )
        .unwrap();
        let x = filled(&[2, 1, 6, 6], |i| (i as f32).sin());
        let y = net.forward(&x).unwrap();
        assert_eq!(y.shape(), &[2, 3]);
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_dense_passes_input_through() {
        let mut net = Network::new([1, 1, 3], &[LayerSpec::Flatten, LayerSpec::Dense { out_features: 3 }])
            .unwrap();
        let eye = Buffer::new(
            vec![3, 3],
            vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
        )
        .unwrap();
        net.set_param_buffer(0, eye).unwrap();
        let x = filled(&[2, 1, 1, 3], |i| i as f32 - 2.5);
        let y = net.forward(&x).unwrap();
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn forward_rejects_wrong_shape() {
        let mut net =
            Network::new([1, 4, 4], &[LayerSpec::Flatten, LayerSpec::Dense { out_features: 2 }])
                .unwrap();
        let x = filled(&[2, 1, 3, 3], |_| 0.0);
        assert!(matches!(net.forward(&x), Err(Error::Contract(_))));
    }

    #[test]
    fn backward_before_forward_is_a_state_error() {
        let mut net =
            Network::new([1, 1, 2], &[LayerSpec::Flatten, LayerSpec::Dense { out_features: 2 }])
                .unwrap();
        let d = filled(&[1, 2], |_| 0.1);
        assert!(matches!(net.backward(&d), Err(Error::State(_))));
    }

    #[test]
    fn zero_upstream_gradient_zeroes_every_param_gradient() {
        let mut net = Network::new(
            [1, 4, 4],
            &[
                LayerSpec::Conv2d { out_channels: 2, kernel: 3, stride: 1, padding: 1 },
                LayerSpec::Relu,
                LayerSpec::Flatten,
                LayerSpec::Dense { out_features: 3 },
            ],
        )
        .unwrap();
        net.init_params(7);
        let x = filled(&[2, 1, 4, 4], |i| (i as f32 * 0.37).cos());
        let _ = net.forward(&x).unwrap();
        let _ = net.backward(&Buffer::zeros(vec![2, 3]).unwrap()).unwrap();
        for g in net.grad_buffers() {
            assert!(g.data().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn single_dense_weight_gradient_is_outer_product() {
        let mut net =
            Network::new([1, 1, 3], &[LayerSpec::Flatten, LayerSpec::Dense { out_features: 2 }])
                .unwrap();
        net.init_params(3);
        let x = filled(&[1, 1, 1, 3], |i| [0.5, -1.0, 2.0][i]);
        let _ = net.forward(&x).unwrap();
        let d = filled(&[1, 2], |i| [0.25, -0.75][i]);
        net.backward(&d).unwrap();
        let gw = net.grad_buffers()[0];
        for i in 0..3 {
            for j in 0..2 {
                let want = x.data()[i] * d.data()[j];
                assert_eq!(gw.data()[i * 2 + j], want);
            }
        }
        let gb = net.grad_buffers()[1];
        assert_eq!(gb.data(), d.data());
    }

    #[test]
    fn maxpool_ties_route_to_first_scanned() {
        let mut net = Network::new([1, 2, 2], &[LayerSpec::MaxPool2d { window: 2, stride: 2 }])
            .unwrap();
        let x = Buffer::new(vec![1, 1, 2, 2], vec![0.5, 0.5, 0.5, 0.5]).unwrap();
        let y = net.forward(&x).unwrap();
        assert_eq!(y.data(), &[0.5]);
        // All four inputs tie; the whole gradient must land on the
        // first-scanned cell.
        let dx = net
            .backward(&Buffer::new(vec![1, 1, 1, 1], vec![1.0]).unwrap())
            .unwrap();
        assert_eq!(dx.data(), &[1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn init_same_seed_is_bit_identical() {
        let mk = || {
            let mut n = Network::new(
                [1, 4, 4],
                &[
                    LayerSpec::Conv2d { out_channels: 2, kernel: 3, stride: 1, padding: 1 },
                    LayerSpec::Flatten,
                    LayerSpec::Dense { out_features: 2 },
                ],
            )
            .unwrap();
            n.init_params(99);
            n
        };
        let a = mk();
        let b = mk();
        for (x, y) in a.param_buffers().iter().zip(b.param_buffers()) {
            assert_eq!(x.data(), y.data());
        }
    }

    #[test]
    fn init_respects_fan_in_bound() {
        let mut net = Network::new(
            [1, 1, 100],
            &[LayerSpec::Flatten, LayerSpec::Dense { out_features: 50 }],
        )
        .unwrap();
        net.init_params(5);
        let w = net.param_buffers()[0];
        assert!(w.data().iter().all(|&x| x.abs() <= 0.1));
        assert!(w.data().iter().any(|&x| x != 0.0));
    }

    #[test]
    fn init_mean_is_near_zero() {
        let mut net = Network::new(
            [1, 1, 100],
            &[LayerSpec::Flatten, LayerSpec::Dense { out_features: 100 }],
        )
        .unwrap();
        net.init_params(11);
        let w = net.param_buffers()[0];
        let mean: f64 = w.data().iter().map(|&x| x as f64).sum::<f64>() / w.len() as f64;
        assert!(mean.abs() < 0.005, "mean {mean}");
    }

    #[test]
    fn softmax_uniform_logits_loss_is_ln_k() {
        let logits = Buffer::new(vec![2, 10], vec![0.3; 20]).unwrap();
        let (loss, d) = softmax_cross_entropy(&logits, &[4, 9]).unwrap();
        assert!((loss - 2.302585).abs() < 1e-5);
        // Gradient rows sum to zero.
        for row in d.data().chunks_exact(10) {
            let s: f32 = row.iter().sum();
            assert!(s.abs() < 1e-6);
        }
    }

    #[test]
    fn softmax_is_stable_for_huge_logits() {
        let logits = Buffer::new(vec![1, 2], vec![1000.0, 0.0]).unwrap();
        let (loss, d) = softmax_cross_entropy(&logits, &[0]).unwrap();
        assert!(loss.is_finite());
        assert!(loss.abs() < 1e-6);
        assert!(d.data().iter().all(|x| x.is_finite()));
    }

    #[test]
    fn softmax_rejects_bad_labels() {
        let logits = Buffer::new(vec![1, 3], vec![0.0; 3]).unwrap();
        assert!(matches!(
            softmax_cross_entropy(&logits, &[3]),
            Err(Error::Contract(_))
        ));
        assert!(softmax_cross_entropy(&logits, &[0, 1]).is_err());
    }

    #[test]
    fn softmax_loss_is_positive() {
        let logits = filled(&[3, 4], |i| ((i * 31 % 17) as f32 - 8.0) * 0.3);
        let (loss, _) = softmax_cross_entropy(&logits, &[0, 3, 2]).unwrap();
        assert!(loss > 0.0);
    }

    #[test]
    fn mnist_architecture_composes() {
        let net = Network::new(
            [1, 28, 28],
            &[
                LayerSpec::Conv2d { out_channels: 32, kernel: 3, stride: 1, padding: 1 },
                LayerSpec::Relu,
                LayerSpec::MaxPool2d { window: 2, stride: 2 },
                LayerSpec::Conv2d { out_channels: 64, kernel: 3, stride: 1, padding: 1 },
                LayerSpec::Relu,
                LayerSpec::MaxPool2d { window: 2, stride: 2 },
                LayerSpec::Flatten,
                LayerSpec::Dense { out_features: 128 },
                LayerSpec::Relu,
                LayerSpec::Dense { out_features: 10 },
            ],
        )
        .unwrap();
        assert_eq!(net.output_shape(), &[10]);
        assert_eq!(net.num_params(), 32 * 9 + 32 + 64 * 32 * 9 + 64 + 3136 * 128 + 128 + 1280 + 10);
    }

    #[test]
    fn forward_backward_is_deterministic() {
        let run = || {
            let mut net = Network::new(
                [2, 6, 6],
                &[
                    LayerSpec::Conv2d { out_channels: 3, kernel: 3, stride: 1, padding: 0 },
                    LayerSpec::Relu,
                    LayerSpec::MaxPool2d { window: 2, stride: 2 },
                    LayerSpec::Flatten,
                    LayerSpec::Dense { out_features: 4 },
                ],
            )
            .unwrap();
            net.init_params(123);
            let x = filled(&[3, 2, 6, 6], |i| ((i * 7 % 23) as f32 - 11.0) * 0.1);
            let y = net.forward(&x).unwrap();
            let (loss, d) = softmax_cross_entropy(&y, &[0, 2, 3]).unwrap();
            net.backward(&d).unwrap();
            let grads: Vec<Vec<f32>> = net.grad_buffers().iter().map(|g| g.data().to_vec()).collect();
            (y.into_data(), loss, grads)
        };
        let a = run();
        let b = run();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
        assert_eq!(a.2, b.2);
    }
}

use ndarray::linalg::general_mat_mul;
use ndarray::{ArrayView2, ArrayViewMut2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::layers::{capture_points, infer_shapes, LayerSpec};
use super::loss::LossKind;
use super::NnError;
use crate::tensor::Tensor;

/// Weights and bias of a dense or conv layer.
///
/// Dense weights are `[units, inputs]`; conv weights are `[filters, channels * k * k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub weight: Tensor,
    pub bias: Tensor,
}

/// A feed-forward classifier. Immutable once trained; forward passes take `&self`.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    input_shape: Vec<usize>,
    layers: Vec<LayerSpec>,
    shapes: Vec<Vec<usize>>,
    params: Vec<Option<LayerParams>>,
    capture: Vec<usize>,
    seed: u64,
}

/// Per-layer activations of one input.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationTrace {
    pub layers: Vec<Vec<f32>>,
}

/// Cached intermediate state of a batched forward pass.
pub struct ForwardPass {
    batch: usize,
    /// `outputs[i]` is the batch output of layer `i`.
    outputs: Vec<Vec<f32>>,
    /// Flat argmax offsets for each max-pool layer (empty for other kinds).
    pool_argmax: Vec<Vec<u32>>,
}

impl ForwardPass {
    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn logits(&self) -> &[f32] {
        let n = self.outputs.len();
        &self.outputs[n - 1]
    }

    pub fn layer_output(&self, layer: usize) -> &[f32] {
        &self.outputs[layer]
    }
}

/// Parameter gradients, aligned with `Model::params`.
pub type ParamGrads = Vec<Option<LayerParams>>;

impl Model {
    /// Builds a model with He-uniform weights and zero biases.
    pub fn new(input_shape: Vec<usize>, layers: Vec<LayerSpec>, seed: u64) -> Result<Self, NnError> {
        let shapes = infer_shapes(&input_shape, &layers)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::with_capacity(layers.len());
        let mut in_shape = input_shape.clone();
        for (layer, out_shape) in layers.iter().zip(&shapes) {
            let p = match *layer {
                LayerSpec::Dense { units } => {
                    let fan_in = in_shape[0];
                    Some(he_uniform(&mut rng, vec![units, fan_in], fan_in, units))
                }
                LayerSpec::Conv2d { filters, kernel, .. } => {
                    let fan_in = in_shape[0] * kernel * kernel;
                    Some(he_uniform(&mut rng, vec![filters, fan_in], fan_in, filters))
                }
                _ => None,
            };
            params.push(p);
            in_shape = out_shape.clone();
        }
        let capture = capture_points(&layers);
        Ok(Self {
            input_shape,
            layers,
            shapes,
            params,
            capture,
            seed,
        })
    }

    /// Builds a model from explicit parameters, checking every shape.
    pub fn from_parts(
        input_shape: Vec<usize>,
        layers: Vec<LayerSpec>,
        params: Vec<Option<LayerParams>>,
        seed: u64,
    ) -> Result<Self, NnError> {
        let mut model = Self::new(input_shape, layers, seed)?;
        if params.len() != model.params.len() {
            return Err(NnError::InvalidSpec(format!(
                "{} parameter slots for {} layers",
                params.len(),
                model.params.len()
            )));
        }
        for (i, (have, want)) in params.iter().zip(&model.params).enumerate() {
            let ok = match (have, want) {
                (None, None) => true,
                (Some(h), Some(w)) => {
                    h.weight.shape() == w.weight.shape() && h.bias.shape() == w.bias.shape()
                }
                _ => false,
            };
            if !ok {
                return Err(NnError::InvalidSpec(format!("parameter shape mismatch at layer {i}")));
            }
        }
        model.params = params;
        Ok(model)
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn input_len(&self) -> usize {
        self.input_shape.iter().product()
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn params(&self) -> &[Option<LayerParams>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Option<LayerParams>] {
        &mut self.params
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn classes(&self) -> usize {
        self.shapes.last().map(|s| s[0]).unwrap_or(0)
    }

    /// Layer indices recorded in activation traces.
    pub fn capture_layers(&self) -> &[usize] {
        &self.capture
    }

    /// Flattened size of every traced layer, in network order.
    pub fn trace_dims(&self) -> Vec<usize> {
        self.capture
            .iter()
            .map(|&i| self.shapes[i].iter().product())
            .collect()
    }

    fn layer_input_shape(&self, i: usize) -> &[usize] {
        if i == 0 {
            &self.input_shape
        } else {
            &self.shapes[i - 1]
        }
    }

    /// Single-input forward pass. Returns the logits and, when `capture` is set,
    /// the activation trace.
    pub fn forward(&self, input: &Tensor, capture: bool) -> Result<(Tensor, Option<ActivationTrace>), NnError> {
        let flat = [self.input_len()];
        if input.shape() != self.input_shape.as_slice() && input.shape() != flat.as_slice() {
            return Err(NnError::ShapeMismatch {
                expected: self.input_shape.clone(),
                found: input.shape().to_vec(),
            });
        }
        let pass = self.forward_batch(input.data(), 1)?;
        let logits = Tensor::vector(pass.logits().to_vec());
        let trace = capture.then(|| self.trace_of(&pass, 0));
        Ok((logits, trace))
    }

    /// Extracts the activation trace of sample `index` from a batched pass.
    pub fn trace_of(&self, pass: &ForwardPass, index: usize) -> ActivationTrace {
        let layers = self
            .capture
            .iter()
            .map(|&l| {
                let size: usize = self.shapes[l].iter().product();
                pass.outputs[l][index * size..(index + 1) * size].to_vec()
            })
            .collect();
        ActivationTrace { layers }
    }

    /// Logits of a batch of flattened inputs, `[batch, classes]` row-major.
    pub fn logits_batch(&self, inputs: &[f32], batch: usize) -> Result<Vec<f32>, NnError> {
        let mut pass = self.forward_batch(inputs, batch)?;
        Ok(pass.outputs.pop().unwrap_or_default())
    }

    pub fn forward_batch(&self, inputs: &[f32], batch: usize) -> Result<ForwardPass, NnError> {
        if inputs.len() != batch * self.input_len() {
            return Err(NnError::ShapeMismatch {
                expected: vec![batch, self.input_len()],
                found: vec![inputs.len()],
            });
        }
        let mut outputs: Vec<Vec<f32>> = Vec::with_capacity(self.layers.len());
        let mut pool_argmax = Vec::with_capacity(self.layers.len());
        for i in 0..self.layers.len() {
            let x: &[f32] = if i == 0 { inputs } else { &outputs[i - 1] };
            let in_shape = self.layer_input_shape(i);
            let out_shape = &self.shapes[i];
            let mut argmax = Vec::new();
            let y = match self.layers[i] {
                LayerSpec::Dense { units } => {
                    let p = self.params[i].as_ref().expect("dense params");
                    dense_forward(x, batch, in_shape[0], units, p)
                }
                LayerSpec::Conv2d {
                    filters,
                    kernel,
                    stride,
                    padding,
                } => {
                    let p = self.params[i].as_ref().expect("conv params");
                    let geom = ConvGeom::new(in_shape, filters, kernel, stride, padding);
                    conv_forward(x, batch, &geom, p)
                }
                LayerSpec::Relu => x.iter().map(|&v| v.max(0.0)).collect(),
                LayerSpec::MaxPool2d { size } => {
                    let (y, am) = pool_forward(x, batch, in_shape, out_shape, size);
                    argmax = am;
                    y
                }
                LayerSpec::Flatten | LayerSpec::SoftmaxOutput => x.to_vec(),
            };
            outputs.push(y);
            pool_argmax.push(argmax);
        }
        Ok(ForwardPass {
            batch,
            outputs,
            pool_argmax,
        })
    }

    /// Backpropagates `grad_logits` (`[batch, classes]`) through a cached pass.
    /// Returns the input gradient and, if requested, parameter gradients summed over the batch.
    pub fn backward(
        &self,
        inputs: &[f32],
        pass: &ForwardPass,
        grad_logits: &[f32],
        want_params: bool,
    ) -> (Vec<f32>, Option<ParamGrads>) {
        let batch = pass.batch;
        let mut grads: Option<ParamGrads> = want_params.then(|| vec![None; self.layers.len()]);
        let mut g = grad_logits.to_vec();
        for i in (0..self.layers.len()).rev() {
            let x: &[f32] = if i == 0 { inputs } else { &pass.outputs[i - 1] };
            let in_shape = self.layer_input_shape(i);
            g = match self.layers[i] {
                LayerSpec::Dense { units } => {
                    let p = self.params[i].as_ref().expect("dense params");
                    let (gx, gp) = dense_backward(x, &g, batch, in_shape[0], units, p, want_params);
                    if let (Some(all), Some(gp)) = (grads.as_mut(), gp) {
                        all[i] = Some(gp);
                    }
                    gx
                }
                LayerSpec::Conv2d {
                    filters,
                    kernel,
                    stride,
                    padding,
                } => {
                    let p = self.params[i].as_ref().expect("conv params");
                    let geom = ConvGeom::new(in_shape, filters, kernel, stride, padding);
                    let (gx, gp) = conv_backward(x, &g, batch, &geom, p, want_params);
                    if let (Some(all), Some(gp)) = (grads.as_mut(), gp) {
                        all[i] = Some(gp);
                    }
                    gx
                }
                LayerSpec::Relu => g
                    .iter()
                    .zip(x)
                    .map(|(&gv, &xv)| if xv > 0.0 { gv } else { 0.0 })
                    .collect(),
                LayerSpec::MaxPool2d { .. } => {
                    let mut gx = vec![0.0; x.len()];
                    for (gv, &src) in g.iter().zip(&pass.pool_argmax[i]) {
                        gx[src as usize] += gv;
                    }
                    gx
                }
                LayerSpec::Flatten | LayerSpec::SoftmaxOutput => g,
            };
        }
        (g, grads)
    }

    /// Per-sample losses and input gradients for a batch, one loss kind per sample.
    pub fn loss_input_gradients(
        &self,
        inputs: &[f32],
        losses: &[LossKind],
    ) -> Result<(Vec<f32>, Vec<f32>, Vec<f32>), NnError> {
        let batch = losses.len();
        let pass = self.forward_batch(inputs, batch)?;
        let classes = self.classes();
        let logits = pass.logits();
        let mut values = Vec::with_capacity(batch);
        let mut grad_logits = vec![0.0; logits.len()];
        for (b, loss) in losses.iter().enumerate() {
            let row = &logits[b * classes..(b + 1) * classes];
            let v = loss.value_and_grad(row, &mut grad_logits[b * classes..(b + 1) * classes])?;
            values.push(v);
        }
        let (gx, _) = self.backward(inputs, &pass, &grad_logits, false);
        Ok((logits.to_vec(), values, gx))
    }
}

/// Gradient of the selected loss with respect to the input image.
pub fn input_gradient(model: &Model, input: &Tensor, loss: LossKind) -> Result<Tensor, NnError> {
    if input.len() != model.input_len() {
        return Err(NnError::ShapeMismatch {
            expected: model.input_shape().to_vec(),
            found: input.shape().to_vec(),
        });
    }
    let (_, _, g) = model.loss_input_gradients(input.data(), &[loss])?;
    Ok(Tensor::new(input.shape().to_vec(), g).expect("gradient has input shape"))
}

fn he_uniform(rng: &mut ChaCha8Rng, shape: Vec<usize>, fan_in: usize, bias_len: usize) -> LayerParams {
    let bound = (6.0 / fan_in as f64).sqrt() as f32;
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-bound..bound)).collect();
    LayerParams {
        weight: Tensor::new(shape, data).expect("weight shape"),
        bias: Tensor::zeros(vec![bias_len]),
    }
}

fn gemm(alpha: f32, a: ArrayView2<f32>, b: ArrayView2<f32>, beta: f32, c: &mut ArrayViewMut2<f32>) {
    general_mat_mul(alpha, &a, &b, beta, c);
}

fn view<'a>(data: &'a [f32], rows: usize, cols: usize) -> ArrayView2<'a, f32> {
    ArrayView2::from_shape((rows, cols), data).expect("matrix view")
}

fn view_mut<'a>(data: &'a mut [f32], rows: usize, cols: usize) -> ArrayViewMut2<'a, f32> {
    ArrayViewMut2::from_shape((rows, cols), data).expect("matrix view")
}

fn dense_forward(x: &[f32], batch: usize, n_in: usize, units: usize, p: &LayerParams) -> Vec<f32> {
    let mut y = vec![0.0; batch * units];
    for row in y.chunks_mut(units) {
        row.copy_from_slice(p.bias.data());
    }
    let w = view(p.weight.data(), units, n_in);
    gemm(1.0, view(x, batch, n_in), w.t(), 1.0, &mut view_mut(&mut y, batch, units));
    y
}

fn dense_backward(
    x: &[f32],
    g: &[f32],
    batch: usize,
    n_in: usize,
    units: usize,
    p: &LayerParams,
    want_params: bool,
) -> (Vec<f32>, Option<LayerParams>) {
    let mut gx = vec![0.0; batch * n_in];
    let gy = view(g, batch, units);
    gemm(
        1.0,
        gy,
        view(p.weight.data(), units, n_in),
        0.0,
        &mut view_mut(&mut gx, batch, n_in),
    );
    let gp = want_params.then(|| {
        let mut gw = vec![0.0; units * n_in];
        gemm(1.0, gy.t(), view(x, batch, n_in), 0.0, &mut view_mut(&mut gw, units, n_in));
        let mut gb = vec![0.0; units];
        for row in g.chunks(units) {
            for (acc, v) in gb.iter_mut().zip(row) {
                *acc += v;
            }
        }
        LayerParams {
            weight: Tensor::new(vec![units, n_in], gw).expect("grad shape"),
            bias: Tensor::vector(gb),
        }
    });
    (gx, gp)
}

struct ConvGeom {
    channels: usize,
    height: usize,
    width: usize,
    filters: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
    out_h: usize,
    out_w: usize,
}

impl ConvGeom {
    fn new(input: &[usize], filters: usize, kernel: usize, stride: usize, padding: usize) -> Self {
        let (channels, height, width) = (input[0], input[1], input[2]);
        Self {
            channels,
            height,
            width,
            filters,
            kernel,
            stride,
            padding,
            out_h: (height + 2 * padding - kernel) / stride + 1,
            out_w: (width + 2 * padding - kernel) / stride + 1,
        }
    }

    fn patch_len(&self) -> usize {
        self.channels * self.kernel * self.kernel
    }

    fn positions(&self) -> usize {
        self.out_h * self.out_w
    }

    fn in_len(&self) -> usize {
        self.channels * self.height * self.width
    }

    /// Source offset in the input image for patch row `r` at output position `(oy, ox)`,
    /// or `None` when it falls in the zero padding.
    #[inline]
    fn source(&self, r: usize, oy: usize, ox: usize) -> Option<usize> {
        let c = r / (self.kernel * self.kernel);
        let ky = (r / self.kernel) % self.kernel;
        let kx = r % self.kernel;
        let iy = (oy * self.stride + ky) as isize - self.padding as isize;
        let ix = (ox * self.stride + kx) as isize - self.padding as isize;
        if iy < 0 || ix < 0 || iy >= self.height as isize || ix >= self.width as isize {
            None
        } else {
            Some((c * self.height + iy as usize) * self.width + ix as usize)
        }
    }

    fn im2col(&self, image: &[f32], cols: &mut [f32]) {
        let pos = self.positions();
        for r in 0..self.patch_len() {
            let row = &mut cols[r * pos..(r + 1) * pos];
            for oy in 0..self.out_h {
                for ox in 0..self.out_w {
                    row[oy * self.out_w + ox] = self.source(r, oy, ox).map_or(0.0, |s| image[s]);
                }
            }
        }
    }

    fn col2im(&self, cols: &[f32], image: &mut [f32]) {
        let pos = self.positions();
        for r in 0..self.patch_len() {
            let row = &cols[r * pos..(r + 1) * pos];
            for oy in 0..self.out_h {
                for ox in 0..self.out_w {
                    if let Some(s) = self.source(r, oy, ox) {
                        image[s] += row[oy * self.out_w + ox];
                    }
                }
            }
        }
    }
}

fn conv_forward(x: &[f32], batch: usize, geom: &ConvGeom, p: &LayerParams) -> Vec<f32> {
    let (pl, pos, f) = (geom.patch_len(), geom.positions(), geom.filters);
    let mut cols = vec![0.0; pl * pos];
    let mut y = vec![0.0; batch * f * pos];
    let w = view(p.weight.data(), f, pl);
    for (image, out) in x.chunks(geom.in_len()).zip(y.chunks_mut(f * pos)) {
        geom.im2col(image, &mut cols);
        for (fi, row) in out.chunks_mut(pos).enumerate() {
            row.fill(p.bias.data()[fi]);
        }
        gemm(1.0, w, view(&cols, pl, pos), 1.0, &mut view_mut(out, f, pos));
    }
    y
}

fn conv_backward(
    x: &[f32],
    g: &[f32],
    batch: usize,
    geom: &ConvGeom,
    p: &LayerParams,
    want_params: bool,
) -> (Vec<f32>, Option<LayerParams>) {
    let (pl, pos, f) = (geom.patch_len(), geom.positions(), geom.filters);
    let w = view(p.weight.data(), f, pl);
    let mut gx = vec![0.0; batch * geom.in_len()];
    let mut cols = vec![0.0; pl * pos];
    let mut gcols = vec![0.0; pl * pos];
    let mut gw = vec![0.0; if want_params { f * pl } else { 0 }];
    let mut gb = vec![0.0; if want_params { f } else { 0 }];
    for ((image, gy), gimg) in x
        .chunks(geom.in_len())
        .zip(g.chunks(f * pos))
        .zip(gx.chunks_mut(geom.in_len()))
    {
        let gy_m = view(gy, f, pos);
        if want_params {
            geom.im2col(image, &mut cols);
            gemm(1.0, gy_m, view(&cols, pl, pos).t(), 1.0, &mut view_mut(&mut gw, f, pl));
            for (acc, row) in gb.iter_mut().zip(gy.chunks(pos)) {
                *acc += row.iter().sum::<f32>();
            }
        }
        gemm(1.0, w.t(), gy_m, 0.0, &mut view_mut(&mut gcols, pl, pos));
        geom.col2im(&gcols, gimg);
    }
    let gp = want_params.then(|| LayerParams {
        weight: Tensor::new(vec![f, pl], gw).expect("grad shape"),
        bias: Tensor::vector(gb),
    });
    (gx, gp)
}

fn pool_forward(
    x: &[f32],
    batch: usize,
    in_shape: &[usize],
    out_shape: &[usize],
    size: usize,
) -> (Vec<f32>, Vec<u32>) {
    let (c, h, w) = (in_shape[0], in_shape[1], in_shape[2]);
    let (oh, ow) = (out_shape[1], out_shape[2]);
    let in_len = c * h * w;
    let out_len = c * oh * ow;
    let mut y = Vec::with_capacity(batch * out_len);
    let mut argmax = Vec::with_capacity(batch * out_len);
    for b in 0..batch {
        for ch in 0..c {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = f32::NEG_INFINITY;
                    let mut best_at = 0usize;
                    for dy in 0..size {
                        for dx in 0..size {
                            let at = b * in_len + (ch * h + oy * size + dy) * w + ox * size + dx;
                            if x[at] > best {
                                best = x[at];
                                best_at = at;
                            }
                        }
                    }
                    y.push(best);
                    argmax.push(best_at as u32);
                }
            }
        }
    }
    (y, argmax)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::layers::Architecture;

    fn zero_params(model: &mut Model) {
        for p in model.params_mut().iter_mut().flatten() {
            p.weight.data_mut().fill(0.0);
            p.bias.data_mut().fill(0.0);
        }
    }

    #[test]
    fn zero_weights_give_zero_logits_and_uniform_softmax() {
        let mut model = Model::new(vec![1, 28, 28], Architecture::MnistFc.layers(), 3).unwrap();
        zero_params(&mut model);
        let x = Tensor::new(vec![1, 28, 28], (0..784).map(|i| (i % 7) as f32 / 7.0).collect()).unwrap();
        let (logits, _) = model.forward(&x, false).unwrap();
        assert!(logits.data().iter().all(|&v| v == 0.0));
        let probs = crate::nn::loss::softmax(logits.data());
        assert!(probs.iter().all(|&p| (p - 0.1).abs() < 1e-7));
    }

    #[test]
    fn identity_dense_layer_passes_input_through() {
        let layers = vec![LayerSpec::Dense { units: 4 }, LayerSpec::SoftmaxOutput];
        let mut w = vec![0.0; 16];
        for i in 0..4 {
            w[i * 4 + i] = 1.0;
        }
        let params = vec![
            Some(LayerParams {
                weight: Tensor::new(vec![4, 4], w).unwrap(),
                bias: Tensor::zeros(vec![4]),
            }),
            None,
        ];
        let model = Model::from_parts(vec![4], layers, params, 0).unwrap();
        let v = vec![0.25, -1.0, 3.5, 0.0];
        let (logits, trace) = model.forward(&Tensor::vector(v.clone()), true).unwrap();
        assert_eq!(logits.data(), v.as_slice());
        assert_eq!(trace.unwrap().layers, vec![v]);
    }

    #[test]
    fn rejects_wrong_input_shape() {
        let model = Model::new(vec![1, 28, 28], Architecture::MnistFc.layers(), 0).unwrap();
        let err = model.forward(&Tensor::zeros(vec![1, 27, 27]), false).unwrap_err();
        assert!(matches!(err, NnError::ShapeMismatch { .. }));
    }

    #[test]
    fn capture_does_not_change_logits() {
        let model = Model::new(vec![1, 28, 28], Architecture::MnistConv.layers(), 9).unwrap();
        let x = Tensor::new(vec![1, 28, 28], (0..784).map(|i| ((i * 37) % 255) as f32 / 255.0).collect()).unwrap();
        let (a, _) = model.forward(&x, false).unwrap();
        let (b, trace) = model.forward(&x, true).unwrap();
        assert_eq!(a, b);
        let trace = trace.unwrap();
        assert_eq!(trace.layers.len(), 3);
        assert_eq!(trace.layers[2], b.data());
        assert!(trace.layers[..2].iter().flatten().all(|&v| v >= 0.0));
    }

    #[test]
    fn from_parts_rejects_bad_param_shape() {
        let layers = vec![LayerSpec::Dense { units: 2 }, LayerSpec::SoftmaxOutput];
        let params = vec![
            Some(LayerParams {
                weight: Tensor::zeros(vec![3, 3]),
                bias: Tensor::zeros(vec![2]),
            }),
            None,
        ];
        assert!(Model::from_parts(vec![3], layers, params, 0).is_err());
    }
}

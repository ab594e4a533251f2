use num_complex::Complex64;
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{ComplexMatrix, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Relu,
    Sigmoid,
    Identity,
}

impl Activation {
    fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Relu => v.max(0.0),
            Activation::Sigmoid => sigmoid(v),
            Activation::Identity => v,
        }
    }

    /// Derivative expressed through the activation's output.
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Identity => 1.0,
        }
    }
}

/// Numerically stable logistic function; the result is strictly inside (0, 1)
/// for every finite input that does not saturate f64.
pub fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// Fully connected layer, `y = W x + b` with `W` of shape out × in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

/// Elman recurrence over `steps` equal input slices:
/// `h_t = tanh(W_ih x_t + W_hh h_{t-1} + b)`, returning the final hidden state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recurrent {
    pub w_ih: Matrix,
    pub w_hh: Matrix,
    pub bias: Vec<f64>,
    pub steps: usize,
}

impl Recurrent {
    pub fn hidden_size(&self) -> usize {
        self.w_hh.rows()
    }

    pub fn step_width(&self) -> usize {
        self.w_ih.cols()
    }
}

/// Single-input-channel 1D convolution, stride 1, no padding. One kernel per
/// output channel (rows of `kernels`); output is channel-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conv1d {
    pub kernels: Matrix,
    pub bias: Vec<f64>,
}

impl Conv1d {
    pub fn out_channels(&self) -> usize {
        self.kernels.rows()
    }

    pub fn kernel_width(&self) -> usize {
        self.kernels.cols()
    }
}

/// Complex affine map `z = W u + b`.
///
/// Complex vectors travel between layers interleaved as `[re0, im0, re1, im1, ..]`.
/// With `real_input` set the layer reads a plain real vector and lifts it to
/// complex values with zero imaginary part.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexDense {
    pub weight: ComplexMatrix,
    pub bias: Vec<Complex64>,
    pub real_input: bool,
}

impl ComplexDense {
    fn lift(&self, x: &[f64]) -> Vec<Complex64> {
        if self.real_input {
            x.iter().map(|&v| Complex64::new(v, 0.0)).collect()
        } else {
            x.chunks_exact(2)
                .map(|p| Complex64::new(p[0], p[1]))
                .collect()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Layer {
    Dense(Dense),
    Activation(Activation),
    /// Inverted dropout: scaled by `1/(1-p)` in training, identity at inference.
    Dropout {
        p: f64,
    },
    Recurrent(Recurrent),
    Conv1d(Conv1d),
    ComplexDense(ComplexDense),
    /// Interleaved complex vector to elementwise modulus.
    Magnitude,
}

/// Mutable view over one parameter block.
pub enum ParamsMut<'a> {
    Real(&'a mut [f64]),
    Complex(&'a mut [Complex64]),
}

impl ParamsMut<'_> {
    /// Number of real coordinates (complex entries count twice).
    pub fn scalar_len(&self) -> usize {
        match self {
            ParamsMut::Real(s) => s.len(),
            ParamsMut::Complex(s) => 2 * s.len(),
        }
    }

    pub fn scalar_mut(&mut self, i: usize) -> &mut f64 {
        match self {
            ParamsMut::Real(s) => &mut s[i],
            ParamsMut::Complex(s) => {
                let z = &mut s[i / 2];
                if i.is_multiple_of(2) {
                    &mut z.re
                } else {
                    &mut z.im
                }
            }
        }
    }

    pub fn for_each(&mut self, mut f: impl FnMut(usize, &mut f64)) {
        match self {
            ParamsMut::Real(s) => s.iter_mut().enumerate().for_each(|(i, v)| f(i, v)),
            ParamsMut::Complex(s) => {
                for (i, z) in s.iter_mut().enumerate() {
                    f(2 * i, &mut z.re);
                    f(2 * i + 1, &mut z.im);
                }
            }
        }
    }
}

/// What the forward pass keeps for the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerCache {
    Input(Vec<f64>),
    Output(Vec<f64>),
    /// Per-unit dropout scale (0 or `1/(1-p)`); `None` when dropout was bypassed.
    Mask(Option<Vec<f64>>),
    Recurrent {
        input: Vec<f64>,
        /// `h_0 ..= h_T`
        hidden: Vec<Vec<f64>>,
    },
}

/// How a dropout layer obtains its mask during a forward pass.
pub(crate) enum DropoutSource<'a> {
    Bypass,
    Draw(&'a mut dyn RngCore),
    Frozen(Option<&'a [f64]>),
}

fn glorot(
    rng: &mut dyn RngCore,
    fan_in: usize,
    fan_out: usize,
    scale: f64,
) -> impl FnMut() -> f64 + '_ {
    let bound = (6.0 / (fan_in + fan_out).max(1) as f64).sqrt() * scale;
    move || rng.random_range(-bound..=bound)
}

impl Layer {
    pub fn dense(input: usize, output: usize) -> Layer {
        Layer::Dense(Dense {
            weight: Matrix::zeros(output, input),
            bias: vec![0.0; output],
        })
    }

    pub fn dropout(p: f64) -> Result<Layer> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::contract(format!(
                "dropout probability {p} outside [0, 1)"
            )));
        }
        Ok(Layer::Dropout { p })
    }

    pub fn recurrent(step_width: usize, steps: usize, hidden: usize) -> Layer {
        Layer::Recurrent(Recurrent {
            w_ih: Matrix::zeros(hidden, step_width),
            w_hh: Matrix::zeros(hidden, hidden),
            bias: vec![0.0; hidden],
            steps,
        })
    }

    pub fn conv1d(out_channels: usize, kernel_width: usize) -> Layer {
        Layer::Conv1d(Conv1d {
            kernels: Matrix::zeros(out_channels, kernel_width),
            bias: vec![0.0; out_channels],
        })
    }

    pub fn complex_dense(input: usize, output: usize, real_input: bool) -> Layer {
        Layer::ComplexDense(ComplexDense {
            weight: ComplexMatrix::zeros(output, input),
            bias: vec![Complex64::new(0.0, 0.0); output],
            real_input,
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Layer::Dense(_) => "dense",
            Layer::Activation(Activation::Relu) => "relu",
            Layer::Activation(Activation::Sigmoid) => "sigmoid",
            Layer::Activation(Activation::Identity) => "identity",
            Layer::Dropout { .. } => "dropout",
            Layer::Recurrent(_) => "recurrent",
            Layer::Conv1d(_) => "conv1d",
            Layer::ComplexDense(_) => "complex_dense",
            Layer::Magnitude => "magnitude",
        }
    }

    /// Input width this layer insists on, if it fixes one.
    pub fn fixed_input_width(&self) -> Option<usize> {
        match self {
            Layer::Dense(d) => Some(d.weight.cols()),
            Layer::Recurrent(r) => Some(r.steps * r.step_width()),
            Layer::ComplexDense(c) => Some(if c.real_input {
                c.weight.cols()
            } else {
                2 * c.weight.cols()
            }),
            _ => None,
        }
    }

    /// Output width for a given input width, or `None` when the input is unacceptable.
    pub fn output_width(&self, input: usize) -> Option<usize> {
        if let Some(w) = self.fixed_input_width() {
            if w != input {
                return None;
            }
        }
        match self {
            Layer::Dense(d) => Some(d.weight.rows()),
            Layer::Activation(_) | Layer::Dropout { .. } => Some(input),
            Layer::Recurrent(r) => Some(r.hidden_size()),
            Layer::Conv1d(c) => {
                let k = c.kernel_width();
                (input >= k && k > 0).then(|| c.out_channels() * (input - k + 1))
            }
            Layer::ComplexDense(c) => Some(2 * c.weight.rows()),
            Layer::Magnitude => input.is_multiple_of(2).then_some(input / 2),
        }
    }

    /// Parameter block names, in visiting order.
    pub fn param_names(&self) -> &'static [&'static str] {
        match self {
            Layer::Dense(_) | Layer::ComplexDense(_) => &["weight", "bias"],
            Layer::Recurrent(_) => &["w_ih", "w_hh", "bias"],
            Layer::Conv1d(_) => &["kernels", "bias"],
            _ => &[],
        }
    }

    pub fn params_mut(&mut self) -> Vec<ParamsMut<'_>> {
        match self {
            Layer::Dense(d) => vec![
                ParamsMut::Real(d.weight.data_mut()),
                ParamsMut::Real(&mut d.bias),
            ],
            Layer::Recurrent(r) => vec![
                ParamsMut::Real(r.w_ih.data_mut()),
                ParamsMut::Real(r.w_hh.data_mut()),
                ParamsMut::Real(&mut r.bias),
            ],
            Layer::Conv1d(c) => vec![
                ParamsMut::Real(c.kernels.data_mut()),
                ParamsMut::Real(&mut c.bias),
            ],
            Layer::ComplexDense(c) => vec![
                ParamsMut::Complex(c.weight.data_mut()),
                ParamsMut::Complex(&mut c.bias),
            ],
            _ => Vec::new(),
        }
    }

    /// Parameter blocks flattened to real coordinates (complex as re, im pairs).
    pub fn params_flat(&self) -> Vec<Vec<f64>> {
        fn flat_c(z: &[Complex64]) -> Vec<f64> {
            z.iter().flat_map(|c| [c.re, c.im]).collect()
        }
        match self {
            Layer::Dense(d) => vec![d.weight.data().to_vec(), d.bias.clone()],
            Layer::Recurrent(r) => vec![
                r.w_ih.data().to_vec(),
                r.w_hh.data().to_vec(),
                r.bias.clone(),
            ],
            Layer::Conv1d(c) => vec![c.kernels.data().to_vec(), c.bias.clone()],
            Layer::ComplexDense(c) => vec![flat_c(c.weight.data()), flat_c(&c.bias)],
            _ => Vec::new(),
        }
    }

    pub fn param_count(&self) -> usize {
        self.params_flat().iter().map(Vec::len).sum()
    }

    /// Glorot-uniform weights, zero biases.
    pub(crate) fn init(&mut self, rng: &mut dyn RngCore) {
        match self {
            Layer::Dense(d) => {
                let (out, inp) = d.weight.shape();
                let mut draw = glorot(rng, inp, out, 1.0);
                d.weight.data_mut().iter_mut().for_each(|w| *w = draw());
                d.bias.fill(0.0);
            }
            Layer::Recurrent(r) => {
                let (h, d) = r.w_ih.shape();
                {
                    let mut draw = glorot(rng, d, h, 1.0);
                    r.w_ih.data_mut().iter_mut().for_each(|w| *w = draw());
                }
                let mut draw = glorot(rng, h, h, 1.0);
                r.w_hh.data_mut().iter_mut().for_each(|w| *w = draw());
                r.bias.fill(0.0);
            }
            Layer::Conv1d(c) => {
                let (ch, k) = c.kernels.shape();
                let mut draw = glorot(rng, k, ch * k, 1.0);
                c.kernels.data_mut().iter_mut().for_each(|w| *w = draw());
                c.bias.fill(0.0);
            }
            Layer::ComplexDense(c) => {
                let (out, inp) = (c.weight.rows(), c.weight.cols());
                let mut draw = glorot(rng, inp, out, std::f64::consts::FRAC_1_SQRT_2);
                for z in c.weight.data_mut() {
                    z.re = draw();
                    z.im = draw();
                }
                c.bias.fill(Complex64::new(0.0, 0.0));
            }
            _ => {}
        }
    }

    pub(crate) fn forward(&self, x: &[f64], dropout: DropoutSource<'_>) -> (Vec<f64>, LayerCache) {
        match self {
            Layer::Dense(d) => {
                let mut y = d.weight.matvec(x);
                y.iter_mut().zip(&d.bias).for_each(|(v, b)| *v += b);
                (y, LayerCache::Input(x.to_vec()))
            }
            Layer::Activation(a) => {
                let y: Vec<f64> = x.iter().map(|&v| a.apply(v)).collect();
                (y.clone(), LayerCache::Output(y))
            }
            Layer::Dropout { p } => {
                let mask = match dropout {
                    DropoutSource::Bypass => None,
                    DropoutSource::Frozen(m) => m.map(<[f64]>::to_vec),
                    DropoutSource::Draw(rng) => {
                        let keep = 1.0 / (1.0 - p);
                        Some(
                            (0..x.len())
                                .map(|_| if rng.random::<f64>() < *p { 0.0 } else { keep })
                                .collect(),
                        )
                    }
                };
                let y = match &mask {
                    Some(m) => x.iter().zip(m).map(|(v, s)| v * s).collect(),
                    None => x.to_vec(),
                };
                (y, LayerCache::Mask(mask))
            }
            Layer::Recurrent(r) => {
                let d = r.step_width();
                let mut hidden = vec![vec![0.0; r.hidden_size()]];
                for t in 0..r.steps {
                    let xt = &x[t * d..(t + 1) * d];
                    let prev = &hidden[t];
                    let a = r.w_ih.matvec(xt);
                    let rec = r.w_hh.matvec(prev);
                    let h: Vec<f64> = a
                        .iter()
                        .zip(&rec)
                        .zip(&r.bias)
                        .map(|((a, c), b)| (a + c + b).tanh())
                        .collect();
                    hidden.push(h);
                }
                let out = hidden[r.steps].clone();
                (
                    out,
                    LayerCache::Recurrent {
                        input: x.to_vec(),
                        hidden,
                    },
                )
            }
            Layer::Conv1d(c) => {
                let k = c.kernel_width();
                let positions = x.len() + 1 - k;
                let mut y = Vec::with_capacity(c.out_channels() * positions);
                for ch in 0..c.out_channels() {
                    let ker = c.kernels.row(ch);
                    for j in 0..positions {
                        let s: f64 = ker.iter().zip(&x[j..j + k]).map(|(w, v)| w * v).sum();
                        y.push(s + c.bias[ch]);
                    }
                }
                (y, LayerCache::Input(x.to_vec()))
            }
            Layer::ComplexDense(c) => {
                let u = c.lift(x);
                let z = c.weight.matvec(&u);
                let y = z
                    .iter()
                    .zip(&c.bias)
                    .flat_map(|(z, b)| {
                        let s = z + b;
                        [s.re, s.im]
                    })
                    .collect();
                (y, LayerCache::Input(x.to_vec()))
            }
            Layer::Magnitude => {
                let y = x.chunks_exact(2).map(|p| p[0].hypot(p[1])).collect();
                (y, LayerCache::Input(x.to_vec()))
            }
        }
    }

    /// Returns the gradient with respect to the layer input (empty when not
    /// requested) and one gradient vector per parameter block.
    pub(crate) fn backward(
        &self,
        cache: &LayerCache,
        grad_out: &[f64],
        want_input_grad: bool,
    ) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        let mismatch =
            || Error::contract(format!("cache does not belong to a {} layer", self.name()));
        match (self, cache) {
            (Layer::Dense(d), LayerCache::Input(x)) => {
                let mut gw = Matrix::zeros(d.weight.rows(), d.weight.cols());
                gw.add_outer(grad_out, x);
                let gx = if want_input_grad {
                    d.weight.matvec_t(grad_out)
                } else {
                    Vec::new()
                };
                Ok((gx, vec![gw.into_data(), grad_out.to_vec()]))
            }
            (Layer::Activation(a), LayerCache::Output(y)) => {
                let gx = grad_out
                    .iter()
                    .zip(y)
                    .map(|(g, &y)| g * a.derivative_from_output(y))
                    .collect();
                Ok((gx, Vec::new()))
            }
            (Layer::Dropout { .. }, LayerCache::Mask(mask)) => {
                let gx = match mask {
                    Some(m) => grad_out.iter().zip(m).map(|(g, s)| g * s).collect(),
                    None => grad_out.to_vec(),
                };
                Ok((gx, Vec::new()))
            }
            (Layer::Recurrent(r), LayerCache::Recurrent { input, hidden }) => {
                let d = r.step_width();
                let h = r.hidden_size();
                let mut g_ih = Matrix::zeros(h, d);
                let mut g_hh = Matrix::zeros(h, h);
                let mut g_b = vec![0.0; h];
                let mut gx = if want_input_grad {
                    vec![0.0; input.len()]
                } else {
                    Vec::new()
                };
                let mut dh = grad_out.to_vec();
                for t in (1..=r.steps).rev() {
                    let da: Vec<f64> = dh
                        .iter()
                        .zip(&hidden[t])
                        .map(|(g, ht)| g * (1.0 - ht * ht))
                        .collect();
                    let xt = &input[(t - 1) * d..t * d];
                    g_ih.add_outer(&da, xt);
                    g_hh.add_outer(&da, &hidden[t - 1]);
                    g_b.iter_mut().zip(&da).for_each(|(b, v)| *b += v);
                    if want_input_grad {
                        let gxt = r.w_ih.matvec_t(&da);
                        gx[(t - 1) * d..t * d].copy_from_slice(&gxt);
                    }
                    dh = r.w_hh.matvec_t(&da);
                }
                Ok((gx, vec![g_ih.into_data(), g_hh.into_data(), g_b]))
            }
            (Layer::Conv1d(c), LayerCache::Input(x)) => {
                let k = c.kernel_width();
                let positions = x.len() + 1 - k;
                let mut gk = Matrix::zeros(c.out_channels(), k);
                let mut gb = vec![0.0; c.out_channels()];
                let mut gx = vec![0.0; if want_input_grad { x.len() } else { 0 }];
                for ch in 0..c.out_channels() {
                    for j in 0..positions {
                        let g = grad_out[ch * positions + j];
                        gb[ch] += g;
                        for i in 0..k {
                            gk.set(ch, i, gk.get(ch, i) + g * x[j + i]);
                            if want_input_grad {
                                gx[j + i] += g * c.kernels.get(ch, i);
                            }
                        }
                    }
                }
                Ok((gx, vec![gk.into_data(), gb]))
            }
            (Layer::ComplexDense(c), LayerCache::Input(x)) => {
                // Treating re and im as independent real coordinates, with
                // g = dL/dRe z + i dL/dIm z: dL/dW = g conj(u), dL/du = conj(W)ᵀ g.
                let u = c.lift(x);
                let g: Vec<Complex64> = grad_out
                    .chunks_exact(2)
                    .map(|p| Complex64::new(p[0], p[1]))
                    .collect();
                let mut gw = Vec::with_capacity(2 * c.weight.rows() * c.weight.cols());
                for gr in &g {
                    for uc in &u {
                        let v = gr * uc.conj();
                        gw.extend([v.re, v.im]);
                    }
                }
                let gb = g.iter().flat_map(|z| [z.re, z.im]).collect();
                let gx = if want_input_grad {
                    let mut gu = vec![Complex64::new(0.0, 0.0); u.len()];
                    for (r, gr) in g.iter().enumerate() {
                        for (col, acc) in gu.iter_mut().enumerate() {
                            *acc += c.weight.get(r, col).conj() * gr;
                        }
                    }
                    if c.real_input {
                        gu.iter().map(|z| z.re).collect()
                    } else {
                        gu.iter().flat_map(|z| [z.re, z.im]).collect()
                    }
                } else {
                    Vec::new()
                };
                Ok((gx, vec![gw, gb]))
            }
            (Layer::Magnitude, LayerCache::Input(x)) => {
                let mut gx = Vec::with_capacity(x.len());
                for (p, g) in x.chunks_exact(2).zip(grad_out) {
                    let m = p[0].hypot(p[1]);
                    if m > 0.0 {
                        gx.extend([g * p[0] / m, g * p[1] / m]);
                    } else {
                        gx.extend([0.0, 0.0]);
                    }
                }
                Ok((gx, Vec::new()))
            }
            _ => Err(mismatch()),
        }
    }
}

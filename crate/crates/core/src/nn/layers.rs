//! Differentiable layers. Each layer caches what its backward pass needs from
//! the most recent forward call, so forward/backward must alternate per sample.

use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::scalar::Scalar;

use super::{Param, Tensor};

/// Fully connected layer, `y = W·x + b` with `W` of shape `out × in`.
#[derive(Debug, Clone)]
pub struct Dense<T> {
    pub weight: Param<T>,
    pub bias: Param<T>,
    input: Option<Tensor<T>>,
}

impl<T: Scalar> Dense<T> {
    pub fn new(name: &str, n_in: usize, n_out: usize, rng: &mut RngStream) -> Self {
        Self {
            weight: Param::glorot(format!("{name}.weight"), &[n_out, n_in], n_in, n_out, rng),
            bias: Param::new(format!("{name}.bias"), Tensor::zeros(&[n_out])),
            input: None,
        }
    }

    pub fn from_params(weight: Param<T>, bias: Param<T>) -> Result<Self> {
        let ws = weight.value.shape();
        if ws.len() != 2 || bias.value.shape() != [ws[0]] {
            return Err(Error::Shape(format!(
                "dense weight {ws:?} incompatible with bias {:?}",
                bias.value.shape()
            )));
        }
        Ok(Self {
            weight,
            bias,
            input: None,
        })
    }

    pub fn n_in(&self) -> usize {
        self.weight.value.shape()[1]
    }

    pub fn n_out(&self) -> usize {
        self.weight.value.shape()[0]
    }

    pub fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let y = self.compute(x)?;
        self.input = Some(x.clone());
        Ok(y)
    }

    /// Forward pass without caching.
    pub fn compute(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (n_out, n_in) = (self.n_out(), self.n_in());
        if x.len() != n_in {
            return Err(Error::Shape(format!(
                "dense expects {n_in} inputs, got shape {:?}",
                x.shape()
            )));
        }
        let w = self.weight.value.data();
        let xs = x.data();
        let y = (0..n_out)
            .map(|i| {
                let row = &w[i * n_in..(i + 1) * n_in];
                let dot: T = row.iter().zip(xs).map(|(&a, &b)| a * b).sum();
                dot + self.bias.value.data()[i]
            })
            .collect();
        Ok(Tensor::from_vec(y))
    }

    pub fn backward(&mut self, dy: &Tensor<T>, need_dx: bool) -> Result<Option<Tensor<T>>> {
        let (n_out, n_in) = (self.n_out(), self.n_in());
        if dy.len() != n_out {
            return Err(Error::Shape(format!("dense dy has {} entries, want {n_out}", dy.len())));
        }
        let x = self.input.as_ref().ok_or_else(|| Error::Shape("dense backward before forward".into()))?;
        let dys = dy.data();
        if !self.weight.frozen {
            let gw = self.weight.grad.data_mut();
            for i in 0..n_out {
                let row = &mut gw[i * n_in..(i + 1) * n_in];
                for (g, &xj) in row.iter_mut().zip(x.data()) {
                    *g += dys[i] * xj;
                }
            }
        }
        if !self.bias.frozen {
            for (g, &d) in self.bias.grad.data_mut().iter_mut().zip(dys) {
                *g += d;
            }
        }
        if !need_dx {
            return Ok(None);
        }
        let w = self.weight.value.data();
        let mut dx = vec![T::zero(); n_in];
        for i in 0..n_out {
            let row = &w[i * n_in..(i + 1) * n_in];
            for (d, &wij) in dx.iter_mut().zip(row) {
                *d += wij * dys[i];
            }
        }
        Ok(Some(Tensor::new(x.shape().to_vec(), dx)?))
    }
}

/// Valid-padding 2D cross-correlation with square kernels.
#[derive(Debug, Clone)]
pub struct Conv2d<T> {
    /// `out_c × in_c × k × k`.
    pub kernel: Param<T>,
    pub bias: Param<T>,
    pub stride: usize,
    input: Option<Tensor<T>>,
}

/// Output extent of a valid convolution: `⌊(n − k)/s⌋ + 1`.
pub fn conv_out_extent(n: usize, k: usize, stride: usize) -> Option<usize> {
    if n < k || k == 0 || stride == 0 {
        None
    } else {
        Some((n - k) / stride + 1)
    }
}

impl<T: Scalar> Conv2d<T> {
    pub fn new(
        name: &str,
        in_c: usize,
        out_c: usize,
        k: usize,
        stride: usize,
        rng: &mut RngStream,
    ) -> Self {
        Self {
            kernel: Param::glorot(
                format!("{name}.weight"),
                &[out_c, in_c, k, k],
                in_c * k * k,
                out_c * k * k,
                rng,
            ),
            bias: Param::new(format!("{name}.bias"), Tensor::zeros(&[out_c])),
            stride,
            input: None,
        }
    }

    pub fn from_params(kernel: Param<T>, bias: Param<T>, stride: usize) -> Result<Self> {
        let ks = kernel.value.shape();
        if ks.len() != 4 || ks[2] != ks[3] || bias.value.shape() != [ks[0]] || stride == 0 {
            return Err(Error::Shape(format!(
                "conv kernel {ks:?} incompatible with bias {:?}",
                bias.value.shape()
            )));
        }
        Ok(Self {
            kernel,
            bias,
            stride,
            input: None,
        })
    }

    pub fn in_channels(&self) -> usize {
        self.kernel.value.shape()[1]
    }

    pub fn out_channels(&self) -> usize {
        self.kernel.value.shape()[0]
    }

    pub fn kernel_size(&self) -> usize {
        self.kernel.value.shape()[2]
    }

    pub fn output_shape(&self, input: &[usize]) -> Result<[usize; 3]> {
        let k = self.kernel_size();
        if input.len() != 3 || input[0] != self.in_channels() {
            return Err(Error::Shape(format!(
                "conv expects {} input channels (C×H×W), got {input:?}",
                self.in_channels()
            )));
        }
        let oh = conv_out_extent(input[1], k, self.stride);
        let ow = conv_out_extent(input[2], k, self.stride);
        match (oh, ow) {
            (Some(oh), Some(ow)) => Ok([self.out_channels(), oh, ow]),
            _ => Err(Error::Shape(format!(
                "kernel {k}×{k} larger than input {}×{}",
                input[1], input[2]
            ))),
        }
    }

    pub fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let y = self.compute(x)?;
        self.input = Some(x.clone());
        Ok(y)
    }

    /// Forward pass without caching.
    pub fn compute(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let [oc, oh, ow] = self.output_shape(x.shape())?;
        let (ic, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        let k = self.kernel_size();
        let s = self.stride;
        let kd = self.kernel.value.data();
        let xd = x.data();
        let mut y = vec![T::zero(); oc * oh * ow];
        for o in 0..oc {
            let yo = &mut y[o * oh * ow..(o + 1) * oh * ow];
            yo.iter_mut().for_each(|v| *v = self.bias.value.data()[o]);
            for c in 0..ic {
                let xc = &xd[c * h * w..(c + 1) * h * w];
                for u in 0..k {
                    for v in 0..k {
                        let kv = kd[((o * ic + c) * k + u) * k + v];
                        for i in 0..oh {
                            let yrow = &mut yo[i * ow..(i + 1) * ow];
                            let base = (i * s + u) * w + v;
                            if s == 1 {
                                let xrow = &xc[base..base + ow];
                                for (yv, &xv) in yrow.iter_mut().zip(xrow) {
                                    *yv += kv * xv;
                                }
                            } else {
                                for (j, yv) in yrow.iter_mut().enumerate() {
                                    *yv += kv * xc[base + j * s];
                                }
                            }
                        }
                    }
                }
            }
        }
        Tensor::new(vec![oc, oh, ow], y)
    }

    pub fn backward(&mut self, dy: &Tensor<T>, need_dx: bool) -> Result<Option<Tensor<T>>> {
        let x = self.input.as_ref().ok_or_else(|| Error::Shape("conv backward before forward".into()))?;
        let [oc, oh, ow] = self.output_shape(x.shape())?;
        dy.expect_shape(&[oc, oh, ow], "conv dy")?;
        let (ic, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        let k = self.kernel_size();
        let s = self.stride;
        let xd = x.data();
        let dyd = dy.data();
        if !self.bias.frozen {
            for (o, g) in self.bias.grad.data_mut().iter_mut().enumerate() {
                *g += dyd[o * oh * ow..(o + 1) * oh * ow].iter().copied().sum::<T>();
            }
        }
        if !self.kernel.frozen {
            let gk = self.kernel.grad.data_mut();
            for o in 0..oc {
                let dyo = &dyd[o * oh * ow..(o + 1) * oh * ow];
                for c in 0..ic {
                    let xc = &xd[c * h * w..(c + 1) * h * w];
                    for u in 0..k {
                        for v in 0..k {
                            let mut acc = T::zero();
                            for i in 0..oh {
                                let drow = &dyo[i * ow..(i + 1) * ow];
                                let base = (i * s + u) * w + v;
                                if s == 1 {
                                    let xrow = &xc[base..base + ow];
                                    for (&d, &xv) in drow.iter().zip(xrow) {
                                        acc += d * xv;
                                    }
                                } else {
                                    for (j, &d) in drow.iter().enumerate() {
                                        acc += d * xc[base + j * s];
                                    }
                                }
                            }
                            gk[((o * ic + c) * k + u) * k + v] += acc;
                        }
                    }
                }
            }
        }
        if !need_dx {
            return Ok(None);
        }
        let kd = self.kernel.value.data();
        let mut dx = vec![T::zero(); ic * h * w];
        for o in 0..oc {
            let dyo = &dyd[o * oh * ow..(o + 1) * oh * ow];
            for c in 0..ic {
                let dxc = &mut dx[c * h * w..(c + 1) * h * w];
                for u in 0..k {
                    for v in 0..k {
                        let kv = kd[((o * ic + c) * k + u) * k + v];
                        for i in 0..oh {
                            let drow = &dyo[i * ow..(i + 1) * ow];
                            let base = (i * s + u) * w + v;
                            if s == 1 {
                                let xrow = &mut dxc[base..base + ow];
                                for (xv, &d) in xrow.iter_mut().zip(drow) {
                                    *xv += kv * d;
                                }
                            } else {
                                for (j, &d) in drow.iter().enumerate() {
                                    dxc[base + j * s] += kv * d;
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok(Some(Tensor::new(x.shape().to_vec(), dx)?))
    }
}

/// 2×2 max pooling with stride 2; trailing odd row/column is dropped.
#[derive(Debug, Clone, Default)]
pub struct MaxPool2x2 {
    input_shape: Option<Vec<usize>>,
    argmax: Vec<usize>,
}

impl MaxPool2x2 {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn output_shape(input: &[usize]) -> Result<[usize; 3]> {
        if input.len() != 3 || input[1] < 2 || input[2] < 2 {
            return Err(Error::Shape(format!(
                "max-pool needs C×H×W with H, W ≥ 2, got {input:?}"
            )));
        }
        Ok([input[0], input[1] / 2, input[2] / 2])
    }

    pub fn forward<T: Scalar>(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (y, argmax) = Self::compute(x)?;
        self.argmax = argmax;
        self.input_shape = Some(x.shape().to_vec());
        Ok(y)
    }

    /// Pooled output and the flat input index each output was taken from.
    pub fn compute<T: Scalar>(x: &Tensor<T>) -> Result<(Tensor<T>, Vec<usize>)> {
        let [c, oh, ow] = Self::output_shape(x.shape())?;
        let (h, w) = (x.shape()[1], x.shape()[2]);
        let xd = x.data();
        let mut y = Vec::with_capacity(c * oh * ow);
        let mut argmax = Vec::with_capacity(c * oh * ow);
        for ch in 0..c {
            let off = ch * h * w;
            for i in 0..oh {
                for j in 0..ow {
                    // row-major window order; strict > keeps the first maximum
                    let mut best = off + 2 * i * w + 2 * j;
                    for (du, dv) in [(0, 1), (1, 0), (1, 1)] {
                        let idx = off + (2 * i + du) * w + 2 * j + dv;
                        if xd[idx] > xd[best] {
                            best = idx;
                        }
                    }
                    argmax.push(best);
                    y.push(xd[best]);
                }
            }
        }
        Ok((Tensor::new(vec![c, oh, ow], y)?, argmax))
    }

    pub fn backward<T: Scalar>(&self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let shape = self
            .input_shape
            .as_ref()
            .ok_or_else(|| Error::Shape("max-pool backward before forward".into()))?;
        if dy.len() != self.argmax.len() {
            return Err(Error::Shape("max-pool dy size mismatch".into()));
        }
        let mut dx = Tensor::zeros(shape);
        let dxd = dx.data_mut();
        for (&idx, &d) in self.argmax.iter().zip(dy.data()) {
            dxd[idx] += d;
        }
        Ok(dx)
    }
}

/// Elementwise `max(x, 0)`; the gradient at exactly 0 is 0.
#[derive(Debug, Clone, Default)]
pub struct Relu {
    mask: Vec<bool>,
}

impl Relu {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn forward<T: Scalar>(&mut self, x: &Tensor<T>) -> Tensor<T> {
        self.mask = x.data().iter().map(|&v| v > T::zero()).collect();
        x.map(|v| if v > T::zero() { v } else { T::zero() })
    }

    pub fn backward<T: Scalar>(&self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        if dy.len() != self.mask.len() {
            return Err(Error::Shape("relu dy size mismatch".into()));
        }
        let data = dy
            .data()
            .iter()
            .zip(&self.mask)
            .map(|(&d, &m)| if m { d } else { T::zero() })
            .collect();
        Tensor::new(dy.shape().to_vec(), data)
    }
}

/// Reshapes to a flat vector and back.
#[derive(Debug, Clone, Default)]
pub struct Flatten {
    input_shape: Option<Vec<usize>>,
}

impl Flatten {
    pub fn forward<T: Scalar>(&mut self, x: &Tensor<T>) -> Tensor<T> {
        self.input_shape = Some(x.shape().to_vec());
        Tensor::from_vec(x.data().to_vec())
    }

    pub fn backward<T: Scalar>(&self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let shape = self
            .input_shape
            .as_ref()
            .ok_or_else(|| Error::Shape("flatten backward before forward".into()))?;
        dy.clone().reshape(shape)
    }
}

/// Any layer the three architectures are built from.
#[derive(Debug, Clone)]
pub enum Layer<T> {
    Dense(Dense<T>),
    Conv2d(Conv2d<T>),
    MaxPool(MaxPool2x2),
    Relu(Relu),
    Flatten(Flatten),
}

impl<T: Scalar> Layer<T> {
    pub fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        match self {
            Layer::Dense(l) => l.forward(x),
            Layer::Conv2d(l) => l.forward(x),
            Layer::MaxPool(l) => l.forward(x),
            Layer::Relu(l) => Ok(l.forward(x)),
            Layer::Flatten(l) => Ok(l.forward(x)),
        }
    }

    /// Forward pass that leaves the backward caches untouched.
    pub fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        match self {
            Layer::Dense(l) => l.compute(x),
            Layer::Conv2d(l) => l.compute(x),
            Layer::MaxPool(_) => MaxPool2x2::compute(x).map(|(y, _)| y),
            Layer::Relu(_) => Ok(x.map(|v| if v > T::zero() { v } else { T::zero() })),
            Layer::Flatten(_) => Ok(Tensor::from_vec(x.data().to_vec())),
        }
    }

    /// Accumulates parameter gradients; returns `dx` when `need_dx` is set.
    pub fn backward(&mut self, dy: &Tensor<T>, need_dx: bool) -> Result<Option<Tensor<T>>> {
        match self {
            Layer::Dense(l) => l.backward(dy, need_dx),
            Layer::Conv2d(l) => l.backward(dy, need_dx),
            Layer::MaxPool(l) => l.backward(dy).map(Some),
            Layer::Relu(l) => l.backward(dy).map(Some),
            Layer::Flatten(l) => l.backward(dy).map(Some),
        }
    }

    /// Static output shape for a given input shape.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        match self {
            Layer::Dense(l) => {
                if input.iter().product::<usize>() != l.n_in() {
                    return Err(Error::Shape(format!(
                        "dense expects {} inputs, got {input:?}",
                        l.n_in()
                    )));
                }
                Ok(vec![l.n_out()])
            }
            Layer::Conv2d(l) => l.output_shape(input).map(|s| s.to_vec()),
            Layer::MaxPool(_) => MaxPool2x2::output_shape(input).map(|s| s.to_vec()),
            Layer::Relu(_) => Ok(input.to_vec()),
            Layer::Flatten(_) => Ok(vec![input.iter().product()]),
        }
    }

    pub fn params(&self) -> Vec<&Param<T>> {
        match self {
            Layer::Dense(l) => vec![&l.weight, &l.bias],
            Layer::Conv2d(l) => vec![&l.kernel, &l.bias],
            _ => Vec::new(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        match self {
            Layer::Dense(l) => vec![&mut l.weight, &mut l.bias],
            Layer::Conv2d(l) => vec![&mut l.kernel, &mut l.bias],
            _ => Vec::new(),
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Layer::Dense(_) => "dense",
            Layer::Conv2d(_) => "conv2d",
            Layer::MaxPool(_) => "maxpool2x2",
            Layer::Relu(_) => "relu",
            Layer::Flatten(_) => "flatten",
        }
    }
}

/// Layers applied in order.
#[derive(Debug, Clone, Default)]
pub struct Sequential<T> {
    pub layers: Vec<Layer<T>>,
}

impl<T: Scalar> Sequential<T> {
    pub fn new(layers: Vec<Layer<T>>) -> Self {
        Self { layers }
    }

    pub fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut h = x.clone();
        for layer in &mut self.layers {
            h = layer.forward(&h)?;
        }
        Ok(h)
    }

    pub fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut h = x.clone();
        for layer in &self.layers {
            h = layer.infer(&h)?;
        }
        Ok(h)
    }

    /// Backpropagates `dy`. When `need_dx` is false, stops as soon as no earlier
    /// layer has trainable parameters.
    pub fn backward(&mut self, dy: &Tensor<T>, need_dx: bool) -> Result<Option<Tensor<T>>> {
        let stop = if need_dx {
            0
        } else {
            self.layers
                .iter()
                .position(|l| l.params().iter().any(|p| !p.frozen))
                .unwrap_or(self.layers.len())
        };
        let mut grad = dy.clone();
        for (i, layer) in self.layers.iter_mut().enumerate().rev() {
            if i < stop {
                break;
            }
            let want_dx = need_dx || i > stop;
            match layer.backward(&grad, want_dx)? {
                Some(dx) => grad = dx,
                None => return Ok(None),
            }
        }
        Ok(if need_dx { Some(grad) } else { None })
    }

    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        self.layers
            .iter()
            .try_fold(input.to_vec(), |shape, l| l.output_shape(&shape))
    }

    pub fn params(&self) -> Vec<&Param<T>> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor<f64> {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    fn dense_with(w: &[f64], b: &[f64], n_out: usize, n_in: usize) -> Dense<f64> {
        Dense::from_params(
            Param::new("d.weight", t(&[n_out, n_in], w)),
            Param::new("d.bias", t(&[n_out], b)),
        )
        .unwrap()
    }

    #[test]
    fn dense_examples() {
        let mut id = dense_with(&[1.0, 0.0, 0.0, 1.0], &[0.0, 0.0], 2, 2);
        assert_eq!(id.forward(&t(&[2], &[3.0, -1.0])).unwrap().data(), &[3.0, -1.0]);
        let mut d = dense_with(&[1.0, 2.0, 3.0, 4.0], &[0.5, -0.5], 2, 2);
        assert_eq!(d.forward(&t(&[2], &[1.0, 1.0])).unwrap().data(), &[3.5, 6.5]);
        assert!(d.forward(&t(&[3], &[1.0, 1.0, 1.0])).is_err());
        let dx = d.backward(&t(&[2], &[1.0, -1.0]), true).unwrap().unwrap();
        // Wᵀ·dy
        assert_eq!(dx.data(), &[-2.0, -2.0]);
        assert_eq!(d.weight.grad.data(), &[1.0, 1.0, -1.0, -1.0]);
        assert_eq!(d.bias.grad.data(), &[1.0, -1.0]);
    }

    #[test]
    fn conv_examples() {
        let mut rng = RngStream::new(0);
        let mut one = Conv2d::<f64>::from_params(
            Param::new("c.weight", t(&[1, 1, 1, 1], &[1.0])),
            Param::new("c.bias", t(&[1], &[0.0])),
            1,
        )
        .unwrap();
        let x = t(&[1, 2, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(one.forward(&x).unwrap(), x);

        let mut sum = Conv2d::<f64>::from_params(
            Param::new("c.weight", Tensor::filled(&[1, 1, 2, 2], 1.0)),
            Param::new("c.bias", t(&[1], &[0.0])),
            1,
        )
        .unwrap();
        let y = sum.forward(&Tensor::filled(&[1, 3, 3], 1.0)).unwrap();
        assert_eq!(y.shape(), &[1, 2, 2]);
        assert!(y.data().iter().all(|&v| v == 4.0));

        let big = Conv2d::<f64>::new("c", 3, 8, 3, 1, &mut rng);
        assert_eq!(big.output_shape(&[3, 64, 64]).unwrap(), [8, 62, 62]);
        assert!(big.output_shape(&[3, 2, 64]).is_err());
        let strided = Conv2d::<f64>::new("c", 3, 8, 3, 2, &mut rng);
        assert_eq!(strided.output_shape(&[3, 64, 64]).unwrap(), [8, 31, 31]);
    }

    #[test]
    fn maxpool_examples() {
        let mut p = MaxPool2x2::new();
        let y = p.forward(&t(&[1, 2, 2], &[1.0, 2.0, 3.0, 4.0])).unwrap();
        assert_eq!(y.data(), &[4.0]);
        let dx = p.backward(&t(&[1, 1, 1], &[1.0])).unwrap();
        assert_eq!(dx.data(), &[0.0, 0.0, 0.0, 1.0]);

        let x3 = t(&[1, 3, 3], &[1.0, 2.0, 9.0, 3.0, 0.0, 9.0, 9.0, 9.0, 9.0]);
        let y3 = p.forward(&x3).unwrap();
        assert_eq!(y3.shape(), &[1, 1, 1]);
        assert_eq!(y3.data(), &[3.0]);

        // ties route to the first occurrence
        p.forward(&t(&[1, 2, 2], &[5.0, 5.0, 5.0, 5.0])).unwrap();
        let dx = p.backward(&t(&[1, 1, 1], &[2.0])).unwrap();
        assert_eq!(dx.data(), &[2.0, 0.0, 0.0, 0.0]);

        assert!(p.forward(&t(&[1, 1, 4], &[1.0; 4])).is_err());
    }

    #[test]
    fn relu_examples() {
        let mut r = Relu::new();
        let y = r.forward(&t(&[3], &[-1.0, 0.0, 2.0]));
        assert_eq!(y.data(), &[0.0, 0.0, 2.0]);
        let dx = r.backward(&t(&[3], &[1.0, 1.0, 1.0])).unwrap();
        assert_eq!(dx.data(), &[0.0, 0.0, 1.0]);
        let pos = t(&[2], &[0.5, 3.0]);
        assert_eq!(r.forward(&pos), pos);
    }

    #[test]
    fn sequential_skips_frozen_prefix() {
        let mut rng = RngStream::new(2);
        let mut net = Sequential::new(vec![
            Layer::Dense(Dense::<f64>::new("a", 3, 4, &mut rng)),
            Layer::Relu(Relu::new()),
            Layer::Dense(Dense::new("b", 4, 2, &mut rng)),
        ]);
        for p in net.layers[0].params_mut() {
            p.frozen = true;
        }
        net.forward(&t(&[3], &[1.0, -2.0, 0.5])).unwrap();
        assert!(net.backward(&t(&[2], &[1.0, 1.0]), false).unwrap().is_none());
        assert!(net.params()[0].grad.data().iter().all(|&g| g == 0.0));
        assert!(net.params()[2].grad.data().iter().any(|&g| g != 0.0));
        assert_eq!(net.output_shape(&[3]).unwrap(), vec![2]);
    }
}

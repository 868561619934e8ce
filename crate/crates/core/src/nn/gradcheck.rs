//! Central finite-difference verification of analytic gradients.

use std::fmt;

use crate::error::Result;
use crate::rng::RngStream;
use crate::scalar::Scalar;
use crate::tabular::StageLabel;

use super::layers::{Conv2d, Dense, Flatten, Layer, MaxPool2x2, Relu, Sequential};
use super::loss::softmax_cross_entropy;
use super::{Param, Tensor};

pub const DEFAULT_EPS: f64 = 1e-5;
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

/// Anything with a forward pass, a backward pass returning `dx`, and parameters.
pub trait Differentiable<T: Scalar> {
    fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>>;
    fn backward_dx(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>>;
    fn params_mut(&mut self) -> Vec<&mut Param<T>>;
}

impl<T: Scalar> Differentiable<T> for Layer<T> {
    fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        Layer::forward(self, x)
    }
    fn backward_dx(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.backward(dy, true)?.expect("dx requested"))
    }
    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        Layer::params_mut(self)
    }
}

impl<T: Scalar> Differentiable<T> for Sequential<T> {
    fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        Sequential::forward(self, x)
    }
    fn backward_dx(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.backward(dy, true)?.expect("dx requested"))
    }
    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        Sequential::params_mut(self)
    }
}

/// Scalar objective placed on top of the network output.
#[derive(Debug, Clone)]
pub enum Objective<T> {
    /// `L = Σ wᵢ·yᵢ`.
    Projection(Vec<T>),
    /// Softmax cross-entropy against a stage label.
    CrossEntropy(StageLabel),
}

impl<T: Scalar> Objective<T> {
    fn eval(&self, y: &Tensor<T>) -> Result<(T, Tensor<T>)> {
        match self {
            Objective::Projection(w) => {
                let loss = y.data().iter().zip(w).map(|(&a, &b)| a * b).sum();
                Ok((loss, Tensor::new(y.shape().to_vec(), w.clone())?))
            }
            Objective::CrossEntropy(label) => {
                let ce = softmax_cross_entropy(y, *label)?;
                Ok((ce.loss, ce.dlogits))
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GradCheckOptions {
    pub eps: f64,
    /// Multiplier applied to analytic gradients before comparison; anything other
    /// than 1 simulates a broken backward pass.
    pub analytic_scale: f64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            eps: DEFAULT_EPS,
            analytic_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Which coordinate produced the maximum, e.g. `input[3]` or `fc.weight[7]`.
    pub worst: String,
    pub checked: usize,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

/// Compares analytic input and parameter gradients with central differences.
pub fn grad_check<T: Scalar, D: Differentiable<T>>(
    net: &mut D,
    input: &Tensor<T>,
    objective: &Objective<T>,
    opts: GradCheckOptions,
) -> Result<GradCheckReport> {
    for p in net.params_mut() {
        p.zero_grad();
    }
    let y = net.forward(input)?;
    let (_, dy) = objective.eval(&y)?;
    let dx = net.backward_dx(&dy)?;
    let param_grads: Vec<(String, Vec<T>)> = net
        .params_mut()
        .into_iter()
        .map(|p| (p.name.clone(), p.grad.data().to_vec()))
        .collect();

    let eps = T::lit(opts.eps);
    let two_eps = eps + eps;
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: String::new(),
        checked: 0,
    };
    let mut record = |name: String, analytic: T, numeric: T| {
        let e = relative_error(analytic.as_f64() * opts.analytic_scale, numeric.as_f64());
        report.checked += 1;
        if e > report.max_rel_error || report.worst.is_empty() {
            report.max_rel_error = report.max_rel_error.max(e);
            report.worst = name;
        }
    };

    let mut x = input.clone();
    for i in 0..x.len() {
        let orig = x.data()[i];
        x.data_mut()[i] = orig + eps;
        let plus = objective.eval(&net.forward(&x)?)?.0;
        x.data_mut()[i] = orig - eps;
        let minus = objective.eval(&net.forward(&x)?)?.0;
        x.data_mut()[i] = orig;
        record(format!("input[{i}]"), dx.data()[i], (plus - minus) / two_eps);
    }

    for (pi, (name, analytic)) in param_grads.iter().enumerate() {
        for i in 0..analytic.len() {
            let orig = net.params_mut()[pi].value.data()[i];
            net.params_mut()[pi].value.data_mut()[i] = orig + eps;
            let plus = objective.eval(&net.forward(input)?)?.0;
            net.params_mut()[pi].value.data_mut()[i] = orig - eps;
            let minus = objective.eval(&net.forward(input)?)?.0;
            net.params_mut()[pi].value.data_mut()[i] = orig;
            record(format!("{name}[{i}]"), analytic[i], (plus - minus) / two_eps);
        }
    }
    for p in net.params_mut() {
        p.zero_grad();
    }
    Ok(report)
}

/// A randomly instantiated network shape for gradient checking.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GradCheckCase {
    Dense { n_in: usize, n_out: usize },
    Conv { in_c: usize, out_c: usize, k: usize, stride: usize, side: usize },
    MaxPool { channels: usize, side: usize },
    Relu { n: usize },
    SoftmaxCrossEntropy,
    /// dense → relu → dense → softmax-CE
    DenseStack { n_in: usize, hidden: usize },
    /// conv → relu → pool → flatten → dense → softmax-CE
    ConvStack { in_c: usize, side: usize },
}

impl fmt::Display for GradCheckCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            GradCheckCase::Dense { n_in, n_out } => write!(f, "dense {n_in}->{n_out}"),
            GradCheckCase::Conv { in_c, out_c, k, stride, side } => {
                write!(f, "conv2d {in_c}ch->{out_c}ch k{k} s{stride} {side}x{side}")
            }
            GradCheckCase::MaxPool { channels, side } => {
                write!(f, "maxpool2x2 {channels}x{side}x{side}")
            }
            GradCheckCase::Relu { n } => write!(f, "relu {n}"),
            GradCheckCase::SoftmaxCrossEntropy => write!(f, "softmax-xent 5"),
            GradCheckCase::DenseStack { n_in, hidden } => {
                write!(f, "dense {n_in}->{hidden} relu dense ->5 xent")
            }
            GradCheckCase::ConvStack { in_c, side } => {
                write!(f, "conv {in_c}ch {side}x{side} relu pool dense ->5 xent")
            }
        }
    }
}

fn uniform_tensor<T: Scalar>(shape: &[usize], rng: &mut RngStream) -> Tensor<T> {
    let n = shape.iter().product();
    let data = (0..n).map(|_| T::lit(rng.uniform(-1.0, 1.0))).collect();
    Tensor::new(shape.to_vec(), data).expect("shape matches")
}

/// Distinct values 0.01 apart in random order, so no pooling window is near a tie.
fn separated_tensor<T: Scalar>(shape: &[usize], rng: &mut RngStream) -> Tensor<T> {
    let n: usize = shape.iter().product();
    let mut data: Vec<T> = (0..n).map(|i| T::lit(i as f64 * 0.01 - 0.5)).collect();
    rng.shuffle(&mut data);
    Tensor::new(shape.to_vec(), data).expect("shape matches")
}

/// Values bounded away from the relu kink.
fn kink_free_tensor<T: Scalar>(shape: &[usize], rng: &mut RngStream) -> Tensor<T> {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let mag = rng.uniform(0.1, 1.0);
            T::lit(if rng.bernoulli(0.5) { mag } else { -mag })
        })
        .collect();
    Tensor::new(shape.to_vec(), data).expect("shape matches")
}

impl GradCheckCase {
    /// Runs the check on an instance drawn from `seed`.
    pub fn run<T: Scalar>(&self, seed: u64, opts: GradCheckOptions) -> Result<GradCheckReport> {
        let mut rng = RngStream::new(seed);
        let label = StageLabel::from_index(rng.below(5))?;
        match *self {
            GradCheckCase::Dense { n_in, n_out } => {
                let mut layer = Layer::Dense(Dense::<T>::new("fc", n_in, n_out, &mut rng));
                let x = uniform_tensor(&[n_in], &mut rng);
                let w = uniform_tensor::<T>(&[n_out], &mut rng).into_data();
                grad_check(&mut layer, &x, &Objective::Projection(w), opts)
            }
            GradCheckCase::Conv { in_c, out_c, k, stride, side } => {
                let mut conv = Conv2d::<T>::new("conv", in_c, out_c, k, stride, &mut rng);
                // non-zero bias so its gradient path is exercised
                for b in conv.bias.value.data_mut() {
                    *b = T::lit(rng.uniform(-0.5, 0.5));
                }
                let out = conv.output_shape(&[in_c, side, side])?;
                let mut layer = Layer::Conv2d(conv);
                let x = uniform_tensor(&[in_c, side, side], &mut rng);
                let w = uniform_tensor::<T>(&out, &mut rng).into_data();
                grad_check(&mut layer, &x, &Objective::Projection(w), opts)
            }
            GradCheckCase::MaxPool { channels, side } => {
                let mut layer = Layer::<T>::MaxPool(MaxPool2x2::new());
                let x = separated_tensor(&[channels, side, side], &mut rng);
                let out = MaxPool2x2::output_shape(x.shape())?;
                let w = uniform_tensor::<T>(&out, &mut rng).into_data();
                grad_check(&mut layer, &x, &Objective::Projection(w), opts)
            }
            GradCheckCase::Relu { n } => {
                let mut layer = Layer::<T>::Relu(Relu::new());
                let x = kink_free_tensor(&[n], &mut rng);
                let w = uniform_tensor::<T>(&[n], &mut rng).into_data();
                grad_check(&mut layer, &x, &Objective::Projection(w), opts)
            }
            GradCheckCase::SoftmaxCrossEntropy => {
                let mut identity = Sequential::<T>::new(Vec::new());
                let x = uniform_tensor::<T>(&[5], &mut rng).map(|v| v * T::lit(3.0));
                grad_check(&mut identity, &x, &Objective::CrossEntropy(label), opts)
            }
            GradCheckCase::DenseStack { n_in, hidden } => {
                let mut net = Sequential::new(vec![
                    Layer::Dense(Dense::<T>::new("fc1", n_in, hidden, &mut rng)),
                    Layer::Relu(Relu::new()),
                    Layer::Dense(Dense::new("fc2", hidden, 5, &mut rng)),
                ]);
                let x = uniform_tensor(&[n_in], &mut rng);
                grad_check(&mut net, &x, &Objective::CrossEntropy(label), opts)
            }
            GradCheckCase::ConvStack { in_c, side } => {
                let conv = Conv2d::<T>::new("conv", in_c, 3, 3, 1, &mut rng);
                let pooled = MaxPool2x2::output_shape(&conv.output_shape(&[in_c, side, side])?)?;
                let flat: usize = pooled.iter().product();
                let mut net = Sequential::new(vec![
                    Layer::Conv2d(conv),
                    Layer::Relu(Relu::new()),
                    Layer::MaxPool(MaxPool2x2::new()),
                    Layer::Flatten(Flatten::default()),
                    Layer::Dense(Dense::new("fc", flat, 5, &mut rng)),
                ]);
                let x = uniform_tensor(&[in_c, side, side], &mut rng);
                grad_check(&mut net, &x, &Objective::CrossEntropy(label), opts)
            }
        }
    }
}

/// The standard battery: every layer type plus composed stacks.
pub fn standard_cases() -> Vec<GradCheckCase> {
    use GradCheckCase::*;
    vec![
        Dense { n_in: 4, n_out: 3 },
        Dense { n_in: 7, n_out: 5 },
        Conv { in_c: 2, out_c: 3, k: 3, stride: 1, side: 8 },
        Conv { in_c: 1, out_c: 2, k: 2, stride: 2, side: 7 },
        Conv { in_c: 3, out_c: 1, k: 1, stride: 1, side: 4 },
        MaxPool { channels: 2, side: 4 },
        MaxPool { channels: 1, side: 5 },
        Relu { n: 12 },
        SoftmaxCrossEntropy,
        DenseStack { n_in: 6, hidden: 8 },
        ConvStack { in_c: 2, side: 8 },
        ConvStack { in_c: 3, side: 9 },
    ]
}

#[derive(Debug, Clone)]
pub struct SuiteEntry {
    pub case: GradCheckCase,
    pub seed: u64,
    pub report: GradCheckReport,
}

/// Runs every standard case under `seeds_per_case` seeds derived from `seed`.
pub fn run_suite(seed: u64, seeds_per_case: usize) -> Result<Vec<SuiteEntry>> {
    let root = RngStream::new(seed);
    let mut out = Vec::new();
    for (ci, case) in standard_cases().into_iter().enumerate() {
        for s in 0..seeds_per_case {
            let case_seed = root.indexed("gradcheck", (ci * 1000 + s) as u64).seed();
            let report = case.run::<f64>(case_seed, GradCheckOptions::default())?;
            out.push(SuiteEntry {
                case,
                seed: case_seed,
                report,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_passes() {
        let r = GradCheckCase::Dense { n_in: 4, n_out: 3 }
            .run::<f64>(11, GradCheckOptions::default())
            .unwrap();
        assert!(r.max_rel_error < GRADCHECK_TOLERANCE, "{r:?}");
        assert_eq!(r.checked, 4 + 12 + 3);
    }

    #[test]
    fn conv_passes() {
        let case = GradCheckCase::Conv { in_c: 2, out_c: 3, k: 3, stride: 1, side: 8 };
        let r = case.run::<f64>(5, GradCheckOptions::default()).unwrap();
        assert!(r.max_rel_error < GRADCHECK_TOLERANCE, "{r:?}");
    }

    #[test]
    fn corrupted_gradients_detected() {
        let opts = GradCheckOptions {
            analytic_scale: 2.0,
            ..Default::default()
        };
        let r = GradCheckCase::Dense { n_in: 4, n_out: 3 }.run::<f64>(11, opts).unwrap();
        assert!(r.max_rel_error > 0.3, "{r:?}");
    }

    #[test]
    fn relu_passes_away_from_kink() {
        let r = GradCheckCase::Relu { n: 20 }
            .run::<f64>(3, GradCheckOptions::default())
            .unwrap();
        assert!(r.max_rel_error < GRADCHECK_TOLERANCE, "{r:?}");
    }
}

//! Fully connected networks with exact reverse-mode gradients, and Adam.
//!
//! Batches are row-major: one sample per row.

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Real, Rng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Tanh,
    Relu,
}

impl Activation {
    fn apply<T: Real>(self, x: T) -> T {
        match self {
            Activation::Identity => x,
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(T::zero()),
        }
    }

    /// Derivative expressed through the activation's output `y`.
    fn slope_at_output<T: Real>(self, y: T) -> T {
        match self {
            Activation::Identity => T::one(),
            Activation::Tanh => T::one() - y * y,
            Activation::Relu => {
                if y > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layer<T> {
    /// `in × out`.
    pub weights: Array2<T>,
    pub bias: Array1<T>,
    pub activation: Activation,
}

impl<T: Real> Layer<T> {
    pub fn new(weights: Array2<T>, bias: Array1<T>, activation: Activation) -> Result<Self> {
        if weights.ncols() != bias.len() {
            return Err(Error::shape(
                "Layer::new",
                format!("{:?} weights vs {} biases", weights.dim(), bias.len()),
            ));
        }
        Ok(Self { weights, bias, activation })
    }

    pub fn input_dim(&self) -> usize {
        self.weights.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.ncols()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseNet<T> {
    layers: Vec<Layer<T>>,
}

/// Layer inputs saved by [`DenseNet::forward_train`]; `values[0]` is the
/// network input and `values[k+1]` the output of layer `k`.
#[derive(Clone, Debug)]
pub struct Tape<T> {
    values: Vec<Array2<T>>,
}

impl<T> Tape<T> {
    pub fn output(&self) -> &Array2<T> {
        self.values.last().expect("tape holds at least the input")
    }
}

/// Per-layer `(dW, db)`, same shapes as the parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients<T> {
    pub layers: Vec<(Array2<T>, Array1<T>)>,
}

impl<T: Real> Gradients<T> {
    pub fn to_vec(&self) -> Vec<T> {
        self.layers.iter().flat_map(|(w, b)| w.iter().chain(b.iter()).copied()).collect()
    }

    pub fn max_abs(&self) -> T {
        self.layers
            .iter()
            .flat_map(|(w, b)| w.iter().chain(b.iter()))
            .fold(T::zero(), |m, &x| m.max(x.abs()))
    }
}

impl<T: Real> DenseNet<T> {
    /// Glorot-uniform weights and zero biases. `sizes` lists every layer
    /// width including input and output.
    pub fn new(sizes: &[usize], hidden: Activation, output: Activation, rng: &mut Rng) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::shape("DenseNet::new", format!("invalid layer sizes {sizes:?}")));
        }
        let n = sizes.len() - 1;
        let layers = (0..n)
            .map(|k| {
                let (fan_in, fan_out) = (sizes[k], sizes[k + 1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let w = Array2::from_shape_fn((fan_in, fan_out), |_| T::lit(rng.uniform_in(-limit, limit)));
                let act = if k + 1 == n { output } else { hidden };
                Layer {
                    weights: w,
                    bias: Array1::zeros(fan_out),
                    activation: act,
                }
            })
            .collect();
        Ok(Self { layers })
    }

    pub fn from_layers(layers: Vec<Layer<T>>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::shape("DenseNet::from_layers", "no layers"));
        }
        for pair in layers.windows(2) {
            if pair[0].output_dim() != pair[1].input_dim() {
                return Err(Error::shape(
                    "DenseNet::from_layers",
                    format!("layer widths {} and {} do not chain", pair[0].output_dim(), pair[1].input_dim()),
                ));
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<T>] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().output_dim()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(l.bias.iter()).all(|x| x.is_finite()))
    }

    fn check_input(&self, x: &ArrayView2<T>) -> Result<()> {
        if x.ncols() != self.input_dim() {
            return Err(Error::shape(
                "DenseNet::forward",
                format!("input has {} columns, expected {}", x.ncols(), self.input_dim()),
            ));
        }
        Ok(())
    }

    fn apply_layer(layer: &Layer<T>, x: &ArrayView2<T>) -> Array2<T> {
        let mut z = x.dot(&layer.weights);
        z += &layer.bias;
        let act = layer.activation;
        if act != Activation::Identity {
            z.mapv_inplace(|v| act.apply(v));
        }
        z
    }

    pub fn forward(&self, x: ArrayView2<T>) -> Result<Array2<T>> {
        self.check_input(&x)?;
        let mut h = Self::apply_layer(&self.layers[0], &x);
        for layer in &self.layers[1..] {
            h = Self::apply_layer(layer, &h.view());
        }
        Ok(h)
    }

    /// Forward pass that keeps what [`Self::backward`] needs.
    pub fn forward_train(&self, x: ArrayView2<T>) -> Result<Tape<T>> {
        self.check_input(&x)?;
        let mut values = Vec::with_capacity(self.layers.len() + 1);
        values.push(x.to_owned());
        for layer in &self.layers {
            let next = Self::apply_layer(layer, &values.last().unwrap().view());
            values.push(next);
        }
        Ok(Tape { values })
    }

    /// Parameter gradients and input gradient of `Σ grad_out ⊙ output`.
    pub fn backward(&self, tape: &Tape<T>, grad_out: ArrayView2<T>) -> Result<(Gradients<T>, Array2<T>)> {
        if grad_out.dim() != tape.output().dim() {
            return Err(Error::shape(
                "DenseNet::backward",
                format!("gradient {:?} vs output {:?}", grad_out.dim(), tape.output().dim()),
            ));
        }
        let mut delta = grad_out.to_owned();
        let mut grads = Vec::with_capacity(self.layers.len());
        for (k, layer) in self.layers.iter().enumerate().rev() {
            let act = layer.activation;
            if act != Activation::Identity {
                Zip::from(&mut delta)
                    .and(&tape.values[k + 1])
                    .for_each(|d, &y| *d *= act.slope_at_output(y));
            }
            let gw = tape.values[k].t().dot(&delta);
            let gb = delta.sum_axis(Axis(0));
            delta = delta.dot(&layer.weights.t());
            grads.push((gw, gb));
        }
        grads.reverse();
        Ok((Gradients { layers: grads }, delta))
    }

    /// `θ ← τ·src + (1−τ)·θ`.
    pub fn soft_update_from(&mut self, src: &Self, tau: T) {
        let keep = T::one() - tau;
        for (dst, s) in self.layers.iter_mut().zip(&src.layers) {
            Zip::from(&mut dst.weights)
                .and(&s.weights)
                .for_each(|d, &v| *d = tau * v + keep * *d);
            Zip::from(&mut dst.bias).and(&s.bias).for_each(|d, &v| *d = tau * v + keep * *d);
        }
    }

    /// All parameters, layer by layer, weights (row-major) before biases.
    pub fn params_to_vec(&self) -> Vec<T> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()).copied())
            .collect()
    }

    pub fn set_params(&mut self, values: &[T]) -> Result<()> {
        if values.len() != self.param_count() {
            return Err(Error::shape(
                "DenseNet::set_params",
                format!("{} values for {} parameters", values.len(), self.param_count()),
            ));
        }
        let mut it = values.iter().copied();
        for l in &mut self.layers {
            for x in l.weights.iter_mut().chain(l.bias.iter_mut()) {
                *x = it.next().unwrap();
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamParams<T> {
    pub lr: T,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
}

impl<T: Real> AdamParams<T> {
    pub fn with_lr(lr: T) -> Self {
        Self {
            lr,
            beta1: T::lit(0.9),
            beta2: T::lit(0.999),
            eps: T::lit(1e-8),
        }
    }

    /// Step size and the bias-correction of the second moment at step `t`.
    fn corrections(&self, t: u64) -> (T, T) {
        let t = t as i32;
        let c1 = T::one() - self.beta1.powi(t);
        let c2 = T::one() - self.beta2.powi(t);
        (self.lr / c1, c2)
    }
}

/// Adam state for one network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adam<T> {
    pub params: AdamParams<T>,
    t: u64,
    m: Vec<(Array2<T>, Array1<T>)>,
    v: Vec<(Array2<T>, Array1<T>)>,
}

impl<T: Real> Adam<T> {
    pub fn new(net: &DenseNet<T>, params: AdamParams<T>) -> Self {
        let zeros: Vec<_> = net
            .layers()
            .iter()
            .map(|l| (Array2::zeros(l.weights.raw_dim()), Array1::zeros(l.bias.len())))
            .collect();
        Self {
            params,
            t: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, net: &mut DenseNet<T>, grads: &Gradients<T>) {
        self.t += 1;
        let p = self.params;
        let (step, c2) = p.corrections(self.t);
        let (b1, b2) = (p.beta1, p.beta2);
        let (ob1, ob2) = (T::one() - b1, T::one() - b2);
        let update = |x: &mut T, m: &mut T, v: &mut T, g: T| {
            *m = b1 * *m + ob1 * g;
            *v = b2 * *v + ob2 * g * g;
            *x -= step * *m / ((*v / c2).sqrt() + p.eps);
        };
        for (k, layer) in net.layers_mut().iter_mut().enumerate() {
            let (gw, gb) = &grads.layers[k];
            let (mw, mb) = &mut self.m[k];
            let (vw, vb) = &mut self.v[k];
            Zip::from(&mut layer.weights)
                .and(mw)
                .and(vw)
                .and(gw)
                .for_each(|x, m, v, &g| update(x, m, v, g));
            Zip::from(&mut layer.bias)
                .and(mb)
                .and(vb)
                .and(gb)
                .for_each(|x, m, v, &g| update(x, m, v, g));
        }
    }
}

/// Adam state for a single scalar parameter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalarAdam<T> {
    pub params: AdamParams<T>,
    t: u64,
    m: T,
    v: T,
}

impl<T: Real> ScalarAdam<T> {
    pub fn new(params: AdamParams<T>) -> Self {
        Self {
            params,
            t: 0,
            m: T::zero(),
            v: T::zero(),
        }
    }

    pub fn step(&mut self, x: &mut T, g: T) {
        self.t += 1;
        let p = self.params;
        let (step, c2) = p.corrections(self.t);
        self.m = p.beta1 * self.m + (T::one() - p.beta1) * g;
        self.v = p.beta2 * self.v + (T::one() - p.beta2) * g * g;
        *x -= step * self.m / ((self.v / c2).sqrt() + p.eps);
    }
}

#[cfg(test)]
mod tests {
    use super::Rng;
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::array;

    fn naive_forward(net: &DenseNet<f64>, x: &[f64]) -> Vec<f64> {
        let mut h = x.to_vec();
        for l in net.layers() {
            let mut out = vec![0.0; l.output_dim()];
            for (j, o) in out.iter_mut().enumerate() {
                let mut s = l.bias[j];
                for (i, &hi) in h.iter().enumerate() {
                    s += hi * l.weights[[i, j]];
                }
                *o = match l.activation {
                    Activation::Identity => s,
                    Activation::Tanh => s.tanh(),
                    Activation::Relu => s.max(0.0),
                };
            }
            h = out;
        }
        h
    }

    /// Scalar loss `Σ c ⊙ f(x)` with fixed random weights `c`.
    fn weighted_sum(net: &DenseNet<f64>, x: &Array2<f64>, c: &Array2<f64>) -> f64 {
        (net.forward(x.view()).unwrap() * c).sum()
    }

    fn max_rel_error(a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .map(|(&x, &y)| (x - y).abs() / (x.abs().max(y.abs()).max(1e-6)))
            .fold(0.0, f64::max)
    }

    #[test]
    fn identity_layer_passes_input() {
        let layer = Layer::new(Array2::eye(3), Array1::zeros(3), Activation::Identity).unwrap();
        let net = DenseNet::from_layers(vec![layer]).unwrap();
        let x = array![[1.0, -2.0, 3.5]];
        assert_eq!(net.forward(x.view()).unwrap(), x);
    }

    #[test]
    fn zero_weights_emit_bias() {
        let layer = Layer::new(Array2::zeros((2, 3)), array![0.5, -1.0, 2.0], Activation::Identity).unwrap();
        let net = DenseNet::from_layers(vec![layer]).unwrap();
        assert_eq!(net.forward(array![[7.0, 8.0]].view()).unwrap(), array![[0.5, -1.0, 2.0]]);
    }

    #[test]
    fn forward_matches_scalar_loops() {
        let mut rng = Rng::new(1);
        let net = DenseNet::<f64>::new(&[4, 8, 2], Activation::Tanh, Activation::Identity, &mut rng).unwrap();
        let x = Array2::from_shape_fn((5, 4), |_| rng.standard_normal());
        let y = net.forward(x.view()).unwrap();
        for r in 0..5 {
            let expect = naive_forward(&net, x.row(r).as_slice().unwrap());
            for c in 0..2 {
                assert_relative_eq!(y[[r, c]], expect[c], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn shape_errors() {
        let mut rng = Rng::new(0);
        let net = DenseNet::<f64>::new(&[3, 2], Activation::Tanh, Activation::Identity, &mut rng).unwrap();
        assert!(matches!(net.forward(Array2::zeros((1, 4)).view()), Err(Error::Shape { .. })));
        let bad = vec![
            Layer::new(Array2::<f64>::zeros((2, 3)), Array1::zeros(3), Activation::Tanh).unwrap(),
            Layer::new(Array2::zeros((4, 1)), Array1::zeros(1), Activation::Identity).unwrap(),
        ];
        assert!(DenseNet::from_layers(bad).is_err());
        assert!(DenseNet::<f64>::new(&[3], Activation::Tanh, Activation::Identity, &mut rng).is_err());
    }

    #[test]
    fn linear_squared_loss_gradient() {
        let (w, b, x, y) = (0.7, -0.2, 1.5, 0.4);
        let layer = Layer::new(array![[w]], array![b], Activation::Identity).unwrap();
        let net = DenseNet::from_layers(vec![layer]).unwrap();
        let tape = net.forward_train(array![[x]].view()).unwrap();
        let residual = tape.output()[[0, 0]] - y;
        let (g, _) = net.backward(&tape, array![[2.0 * residual]].view()).unwrap();
        assert_relative_eq!(g.layers[0].0[[0, 0]], 2.0 * (w * x + b - y) * x, epsilon = 1e-15);
        assert_relative_eq!(g.layers[0].1[0], 2.0 * (w * x + b - y), epsilon = 1e-15);
    }

    #[test]
    fn zero_upstream_gradient_gives_zero() {
        let mut rng = Rng::new(2);
        let net = DenseNet::<f64>::new(&[3, 5, 2], Activation::Tanh, Activation::Identity, &mut rng).unwrap();
        let tape = net.forward_train(Array2::from_elem((4, 3), 0.3).view()).unwrap();
        let (g, dx) = net.backward(&tape, Array2::zeros((4, 2)).view()).unwrap();
        assert_eq!(g.max_abs(), 0.0);
        assert!(dx.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gradients_match_central_differences() {
        let mut rng = Rng::new(3);
        for (sizes, act) in [
            (vec![4, 8, 2], Activation::Tanh),
            (vec![3, 6, 6, 1], Activation::Tanh),
            (vec![5, 7, 3], Activation::Relu),
        ] {
            let mut net = DenseNet::<f64>::new(&sizes, act, Activation::Identity, &mut rng).unwrap();
            let x = Array2::from_shape_fn((3, sizes[0]), |_| rng.standard_normal());
            let c = Array2::from_shape_fn((3, *sizes.last().unwrap()), |_| rng.standard_normal());
            let tape = net.forward_train(x.view()).unwrap();
            let (g, dx) = net.backward(&tape, c.view()).unwrap();

            let theta = net.params_to_vec();
            let h = 1e-5;
            let numeric: Vec<f64> = (0..theta.len())
                .map(|i| {
                    let mut p = theta.clone();
                    p[i] += h;
                    net.set_params(&p).unwrap();
                    let up = weighted_sum(&net, &x, &c);
                    p[i] -= 2.0 * h;
                    net.set_params(&p).unwrap();
                    let down = weighted_sum(&net, &x, &c);
                    (up - down) / (2.0 * h)
                })
                .collect();
            net.set_params(&theta).unwrap();
            assert!(max_rel_error(&g.to_vec(), &numeric) <= 1e-4, "{sizes:?}");

            let numeric_dx: Vec<f64> = (0..x.len())
                .map(|i| {
                    let mut xp = x.clone();
                    xp.as_slice_mut().unwrap()[i] += h;
                    let up = weighted_sum(&net, &xp, &c);
                    xp.as_slice_mut().unwrap()[i] -= 2.0 * h;
                    (up - weighted_sum(&net, &xp, &c)) / (2.0 * h)
                })
                .collect();
            assert!(max_rel_error(&dx.iter().copied().collect::<Vec<_>>(), &numeric_dx) <= 1e-4);
        }
    }

    #[test]
    fn soft_update_extremes() {
        let mut rng = Rng::new(4);
        let src = DenseNet::<f64>::new(&[3, 4, 2], Activation::Tanh, Activation::Identity, &mut rng).unwrap();
        let orig = DenseNet::<f64>::new(&[3, 4, 2], Activation::Tanh, Activation::Identity, &mut rng).unwrap();
        let mut frozen = orig.clone();
        for _ in 0..5 {
            frozen.soft_update_from(&src, 0.0);
        }
        assert_eq!(frozen, orig);
        let mut copy = orig.clone();
        copy.soft_update_from(&src, 1.0);
        assert_eq!(copy, src);
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let layer = Layer::new(array![[1.0]], array![0.0], Activation::Identity).unwrap();
        let mut net = DenseNet::from_layers(vec![layer]).unwrap();
        let mut opt = Adam::new(&net, AdamParams::with_lr(0.01));
        let g = Gradients {
            layers: vec![(array![[3.0]], array![-0.5])],
        };
        opt.step(&mut net, &g);
        assert_relative_eq!(net.layers()[0].weights[[0, 0]], 1.0 - 0.01, epsilon = 1e-9);
        assert_relative_eq!(net.layers()[0].bias[0], 0.01, epsilon = 1e-9);

        let mut x = 1.0;
        let mut s = ScalarAdam::new(AdamParams::with_lr(0.01));
        s.step(&mut x, 3.0);
        assert_relative_eq!(x, 0.99, epsilon = 1e-9);
    }

    #[test]
    fn adam_minimizes_quadratic() {
        let mut x = 5.0f64;
        let mut s = ScalarAdam::new(AdamParams::with_lr(0.1));
        for _ in 0..2000 {
            let g = 2.0 * (x - 1.5);
            s.step(&mut x, g);
        }
        assert!((x - 1.5f64).abs() < 1e-3);
    }

    #[test]
    fn works_in_single_precision() {
        let mut rng = Rng::new(5);
        let net = DenseNet::<f32>::new(&[4, 8, 2], Activation::Tanh, Activation::Identity, &mut rng).unwrap();
        let y = net.forward(Array2::from_elem((2, 4), 0.5f32).view()).unwrap();
        assert!(y.iter().all(|v| v.is_finite()));
    }
}

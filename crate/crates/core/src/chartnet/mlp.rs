//! Dense rectifier network with a hand-written batched backward pass.
//!
//! Generic over the scalar type so that training runs in `f32` while
//! finite-difference checks run the identical code path in `f64`.

use std::fmt::Debug;

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use num_traits::Float;
use rand::Rng;

use super::loss::{triplet_loss, triplet_loss_grad};

pub trait Scalar: Float + ndarray::LinalgScalar + ndarray::ScalarOperand + Debug + Send + Sync + 'static {
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
}

impl Scalar for f32 {
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn to_f64(self) -> f64 {
        self
    }
}

/// One affine layer: `y = W x + b` with `W` of shape `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    pub weights: Array2<T>,
    pub bias: Array1<T>,
}

impl<T: Scalar> Dense<T> {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            weights: Array2::zeros((outputs, inputs)),
            bias: Array1::zeros(outputs),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weights.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.weights.nrows()
    }
}

/// Layer stack; every layer but the last is followed by a rectifier.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<T> {
    pub layers: Vec<Dense<T>>,
}

impl<T: Scalar> Mlp<T> {
    pub fn zeros(dims: &[usize]) -> Self {
        Self {
            layers: dims.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect(),
        }
    }

    /// He-uniform weights `U(−√(6/fan_in), √(6/fan_in))`, zero biases.
    pub fn init(dims: &[usize], rng: &mut impl Rng) -> Self {
        let mut mlp = Self::zeros(dims);
        for layer in &mut mlp.layers {
            let bound = (6.0 / layer.inputs() as f64).sqrt();
            layer
                .weights
                .mapv_inplace(|_| T::from_f64(rng.random_range(-bound..bound)));
        }
        mlp
    }

    /// `[input, hidden…, output]` widths.
    pub fn dims(&self) -> Vec<usize> {
        let mut dims = vec![self.input_dim()];
        dims.extend(self.layers.iter().map(Dense::outputs));
        dims
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, Dense::inputs)
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, Dense::outputs)
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn cast<U: Scalar>(&self) -> Mlp<U> {
        Mlp {
            layers: self
                .layers
                .iter()
                .map(|l| Dense {
                    weights: l.weights.mapv(|v| U::from_f64(v.to_f64())),
                    bias: l.bias.mapv(|v| U::from_f64(v.to_f64())),
                })
                .collect(),
        }
    }

    /// Mutable flat views of every parameter tensor in a fixed order.
    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut [T]> {
        self.layers.iter_mut().flat_map(|l| {
            [
                l.weights.as_slice_mut().expect("standard layout"),
                l.bias.as_slice_mut().expect("standard layout"),
            ]
        })
    }

    pub fn tensors(&self) -> impl Iterator<Item = &[T]> {
        self.layers.iter().flat_map(|l| {
            [
                l.weights.as_slice().expect("standard layout"),
                l.bias.as_slice().expect("standard layout"),
            ]
        })
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().all(|t| t.iter().all(|v| v.is_finite()))
    }

    /// Forward pass of a single input vector.
    pub fn forward_one(&self, input: &[T]) -> Vec<T> {
        let mut act = input.to_vec();
        let last = self.layers.len().saturating_sub(1);
        for (l, layer) in self.layers.iter().enumerate() {
            let mut next = layer.bias.to_vec();
            for (o, row) in layer.weights.outer_iter().enumerate() {
                next[o] = row.iter().zip(&act).fold(next[o], |acc, (w, a)| acc + *w * *a);
            }
            if l < last {
                next.iter_mut().for_each(|v| *v = v.max(T::zero()));
            }
            act = next;
        }
        act
    }

    /// Forward pass of a row-major batch; returns `rows × output_dim`.
    pub fn forward_batch(&self, inputs: ArrayView2<'_, T>) -> Array2<T> {
        let mut act = inputs.to_owned();
        let last = self.layers.len().saturating_sub(1);
        for (l, layer) in self.layers.iter().enumerate() {
            let mut next = Array2::zeros((act.nrows(), layer.outputs()));
            next.assign(&layer.bias.view().insert_axis(Axis(0)));
            general_mat_mul(T::one(), &act, &layer.weights.t(), T::one(), &mut next);
            if l < last {
                next.mapv_inplace(|v| v.max(T::zero()));
            }
            act = next;
        }
        act
    }
}

/// Reusable activation and gradient buffers for [`batch_loss_grad`].
#[derive(Debug)]
pub struct Workspace<T> {
    acts: Vec<Array2<T>>,
    deltas: Vec<Array2<T>>,
}

impl<T: Scalar> Workspace<T> {
    pub fn new(mlp: &Mlp<T>, max_rows: usize) -> Self {
        let dims = mlp.dims();
        Self {
            acts: dims[1..].iter().map(|&d| Array2::zeros((max_rows, d))).collect(),
            deltas: dims[1..].iter().map(|&d| Array2::zeros((max_rows, d))).collect(),
        }
    }

    fn max_rows(&self) -> usize {
        self.acts.first().map_or(0, |a| a.nrows())
    }
}

/// Mean triplet loss over `triplets` and its gradient with respect to every
/// parameter of `mlp`, written into `grads` (overwrite semantics).
///
/// `triplets` index rows of `inputs`; each row is pushed through the shared
/// network once no matter how many triplets reference it. Returns the summed
/// (not averaged) loss.
pub fn batch_loss_grad<T: Scalar>(
    mlp: &Mlp<T>,
    inputs: ArrayView2<'_, T>,
    triplets: &[[usize; 3]],
    margin: T,
    ws: &mut Workspace<T>,
    grads: &mut Mlp<T>,
) -> T {
    let rows = inputs.nrows();
    if ws.max_rows() < rows {
        *ws = Workspace::new(mlp, rows);
    }
    let depth = mlp.layers.len();

    for l in 0..depth {
        let layer = &mlp.layers[l];
        let (before, after) = ws.acts.split_at_mut(l);
        let out = &mut after[0];
        let mut out = out.slice_mut(s![..rows, ..]);
        out.assign(&layer.bias.view().insert_axis(Axis(0)));
        if l == 0 {
            general_mat_mul(T::one(), &inputs, &layer.weights.t(), T::one(), &mut out);
        } else {
            let prev = before[l - 1].slice(s![..rows, ..]);
            general_mat_mul(T::one(), &prev, &layer.weights.t(), T::one(), &mut out);
        }
        if l + 1 < depth {
            out.mapv_inplace(|v| v.max(T::zero()));
        }
    }

    let scale = T::one() / T::from_f64(triplets.len().max(1) as f64);
    let mut total = T::zero();
    {
        let z = ws.acts[depth - 1].slice(s![..rows, ..]);
        let mut dz = ws.deltas[depth - 1].slice_mut(s![..rows, ..]);
        dz.fill(T::zero());
        for &[a, p, n] in triplets {
            let (za, zp, zn) = (z.row(a), z.row(p), z.row(n));
            let (za, zp, zn) = (
                za.as_slice().expect("contiguous"),
                zp.as_slice().expect("contiguous"),
                zn.as_slice().expect("contiguous"),
            );
            total = total + triplet_loss(za, zp, zn, margin);
            if let Some((ga, gp, gn)) = triplet_loss_grad(za, zp, zn, margin) {
                for k in 0..za.len() {
                    dz[[a, k]] = dz[[a, k]] + ga[k] * scale;
                    dz[[p, k]] = dz[[p, k]] + gp[k] * scale;
                    dz[[n, k]] = dz[[n, k]] + gn[k] * scale;
                }
            }
        }
    }

    for l in (0..depth).rev() {
        let (lower, upper) = ws.deltas.split_at_mut(l);
        let delta = upper[0].slice(s![..rows, ..]);
        let grad = &mut grads.layers[l];
        if l == 0 {
            general_mat_mul(T::one(), &delta.t(), &inputs, T::zero(), &mut grad.weights);
        } else {
            let prev = ws.acts[l - 1].slice(s![..rows, ..]);
            general_mat_mul(T::one(), &delta.t(), &prev, T::zero(), &mut grad.weights);
        }
        grad.bias.assign(&delta.sum_axis(Axis(0)));
        if l > 0 {
            let mut below = lower[l - 1].slice_mut(s![..rows, ..]);
            general_mat_mul(T::one(), &delta, &mlp.layers[l].weights, T::zero(), &mut below);
            // Rectifier derivative, with subgradient 0 at the kink.
            let act = ws.acts[l - 1].slice(s![..rows, ..]);
            ndarray::Zip::from(&mut below).and(&act).for_each(|d, &a| {
                if a <= T::zero() {
                    *d = T::zero();
                }
            });
        }
    }
    total
}

/// Summed triplet loss without gradients.
pub fn batch_loss<T: Scalar>(mlp: &Mlp<T>, inputs: ArrayView2<'_, T>, triplets: &[[usize; 3]], margin: T) -> T {
    let z = mlp.forward_batch(inputs);
    triplets.iter().fold(T::zero(), |acc, &[a, p, n]| {
        acc + triplet_loss(
            z.row(a).as_slice().expect("contiguous"),
            z.row(p).as_slice().expect("contiguous"),
            z.row(n).as_slice().expect("contiguous"),
            margin,
        )
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Scalar reference forward pass written with explicit index loops.
    fn reference_forward(mlp: &Mlp<f64>, x: &[f64]) -> Vec<f64> {
        let mut a = x.to_vec();
        for (l, layer) in mlp.layers.iter().enumerate() {
            let mut out = vec![0.0; layer.outputs()];
            for o in 0..layer.outputs() {
                let mut acc = layer.bias[o];
                for i in 0..layer.inputs() {
                    acc += layer.weights[[o, i]] * a[i];
                }
                out[o] = if l + 1 < mlp.layers.len() && acc < 0.0 { 0.0 } else { acc };
            }
            a = out;
        }
        a
    }

    #[test]
    fn batch_and_single_forward_match_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mlp: Mlp<f64> = Mlp::init(&[7, 9, 5, 2], &mut rng);
        let x = Array2::from_shape_fn((6, 7), |(i, j)| ((i * 7 + j) as f64 * 0.37).sin());
        let batch = mlp.forward_batch(x.view());
        for r in 0..6 {
            let row: Vec<f64> = x.row(r).to_vec();
            let expected = reference_forward(&mlp, &row);
            let single = mlp.forward_one(&row);
            for k in 0..2 {
                assert!((batch[[r, k]] - expected[k]).abs() < 1e-12);
                assert!((single[k] - expected[k]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_network_maps_everything_to_origin() {
        let mlp: Mlp<f32> = Mlp::zeros(&[4, 3, 2]);
        assert_eq!(mlp.forward_one(&[1.0, -2.0, 3.0, 9.0]), vec![0.0, 0.0]);
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let a: Mlp<f32> = Mlp::init(&[16, 8, 2], &mut ChaCha8Rng::seed_from_u64(1));
        let b: Mlp<f32> = Mlp::init(&[16, 8, 2], &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(a, b);
        let bound = (6.0f32 / 16.0).sqrt();
        assert!(a.layers[0].weights.iter().all(|w| w.abs() <= bound));
        assert_eq!(a.parameter_count(), 16 * 8 + 8 + 8 * 2 + 2);
    }
}

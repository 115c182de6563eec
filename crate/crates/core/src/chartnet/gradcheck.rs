//! Finite-difference verification of the analytic backward pass.

use ndarray::ArrayView2;

use super::mlp::{batch_loss, batch_loss_grad, Mlp, Workspace};

/// Denominator floor for relative errors, so parameters whose true gradient
/// is (numerically) zero do not report spurious relative error.
const RELATIVE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    /// `max |g_analytic − g_numeric| / max(|g_analytic|, |g_numeric|, 1e-6)`.
    pub max_relative_error: f64,
    pub max_absolute_error: f64,
    pub parameters_checked: usize,
    /// Smallest distance of the batch to a non-differentiable point, see
    /// [`kink_clearance`].
    pub kink_clearance: f64,
}

impl GradCheckReport {
    /// Whether a perturbation of `epsilon` may cross a kink, making the
    /// finite-difference estimate meaningless.
    pub fn near_kink(&self, epsilon: f64) -> bool {
        self.kink_clearance < 10.0 * epsilon
    }
}

/// Smallest of: any hidden pre-activation magnitude, any hinge argument
/// `|‖z_a − z_p‖ − ‖z_a − z_n‖ + margin|`, and any chart distance within a
/// triplet. Derivatives are discontinuous where one of these is zero.
pub fn kink_clearance(mlp: &Mlp<f64>, inputs: ArrayView2<'_, f64>, triplets: &[[usize; 3]], margin: f64) -> f64 {
    let mut clearance = f64::INFINITY;
    let last = mlp.layers.len() - 1;
    let mut chart = Vec::with_capacity(inputs.nrows());
    for row in inputs.outer_iter() {
        let mut act = row.to_vec();
        for (l, layer) in mlp.layers.iter().enumerate() {
            let mut next = layer.bias.to_vec();
            for (o, w) in layer.weights.outer_iter().enumerate() {
                next[o] += w.iter().zip(&act).map(|(a, b)| a * b).sum::<f64>();
            }
            if l < last {
                for v in &mut next {
                    clearance = clearance.min(v.abs());
                    *v = v.max(0.0);
                }
            }
            act = next;
        }
        chart.push(act);
    }
    let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    for &[a, p, n] in triplets {
        let dp = dist(&chart[a], &chart[p]);
        let dn = dist(&chart[a], &chart[n]);
        clearance = clearance.min((dp - dn + margin).abs()).min(dp).min(dn);
    }
    clearance
}

/// Compares the analytic gradient of the mean triplet loss with central
/// finite differences `(L(θ + ε) − L(θ − ε)) / 2ε` for every parameter.
pub fn gradient_check(
    mlp: &Mlp<f64>,
    inputs: ArrayView2<'_, f64>,
    triplets: &[[usize; 3]],
    margin: f64,
    epsilon: f64,
) -> GradCheckReport {
    let mut ws = Workspace::new(mlp, inputs.nrows());
    let mut analytic = Mlp::zeros(&mlp.dims());
    batch_loss_grad(mlp, inputs, triplets, margin, &mut ws, &mut analytic);

    let count = triplets.len().max(1) as f64;
    let mut probe = mlp.clone();
    let mut max_rel = 0f64;
    let mut max_abs = 0f64;
    let mut checked = 0;
    let grads: Vec<Vec<f64>> = analytic.tensors().map(<[f64]>::to_vec).collect();
    let tensor_count = grads.len();
    for t in 0..tensor_count {
        for i in 0..grads[t].len() {
            let original = nth_tensor(&mut probe, t)[i];
            nth_tensor(&mut probe, t)[i] = original + epsilon;
            let plus = batch_loss(&probe, inputs, triplets, margin) / count;
            nth_tensor(&mut probe, t)[i] = original - epsilon;
            let minus = batch_loss(&probe, inputs, triplets, margin) / count;
            nth_tensor(&mut probe, t)[i] = original;

            let numeric = (plus - minus) / (2.0 * epsilon);
            let a = grads[t][i];
            let abs = (a - numeric).abs();
            let rel = abs / a.abs().max(numeric.abs()).max(RELATIVE_FLOOR);
            max_abs = max_abs.max(abs);
            max_rel = max_rel.max(rel);
            checked += 1;
        }
    }
    GradCheckReport {
        max_relative_error: max_rel,
        max_absolute_error: max_abs,
        parameters_checked: checked,
        kink_clearance: kink_clearance(mlp, inputs, triplets, margin),
    }
}

fn nth_tensor(mlp: &mut Mlp<f64>, t: usize) -> &mut [f64] {
    mlp.tensors_mut().nth(t).expect("tensor index in range")
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn satisfied_margin_gives_zero_gradients() {
        // Chart = input; negatives far away, positives on top of the anchor.
        let mut mlp = Mlp::<f64>::zeros(&[2, 2]);
        mlp.layers[0].weights[[0, 0]] = 1.0;
        mlp.layers[0].weights[[1, 1]] = 1.0;
        let inputs = Array2::from_shape_vec((3, 2), vec![0.0, 0.0, 0.1, 0.0, 10.0, 0.0]).unwrap();
        let report = gradient_check(&mlp, inputs.view(), &[[0, 1, 2]], 1.0, 1e-4);
        assert_eq!(report.max_absolute_error, 0.0);
        let mut ws = Workspace::new(&mlp, 3);
        let mut g = Mlp::zeros(&[2, 2]);
        assert_eq!(batch_loss_grad(&mlp, inputs.view(), &[[0, 1, 2]], 1.0, &mut ws, &mut g), 0.0);
        assert!(g.tensors().all(|t| t.iter().all(|v| *v == 0.0)));
    }

    #[test]
    fn small_random_network_passes() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut passed = 0;
        for _ in 0..20 {
            let mlp: Mlp<f64> = Mlp::init(&[5, 7, 4, 2], &mut rng);
            let inputs = Array2::from_shape_fn((6, 5), |_| rng.random_range(-2.0..2.0));
            let triplets: Vec<[usize; 3]> = (0..4).map(|k| [k, k + 1, (k + 2) % 6]).collect();
            let report = gradient_check(&mlp, inputs.view(), &triplets, 1.0, 1e-4);
            if report.near_kink(1e-4) {
                continue;
            }
            assert!(report.max_relative_error < 1e-3, "{report:?}");
            assert_eq!(report.parameters_checked, mlp.parameter_count());
            passed += 1;
        }
        assert!(passed >= 5);
    }
}

use num_traits::Float;

fn distance<T: Float>(a: &[T], b: &[T]) -> T {
    a.iter()
        .zip(b)
        .fold(T::zero(), |acc, (x, y)| acc + (*x - *y) * (*x - *y))
        .sqrt()
}

/// `max(0, ‖z_a − z_p‖ − ‖z_a − z_n‖ + margin)`.
pub fn triplet_loss<T: Float>(anchor: &[T], positive: &[T], negative: &[T], margin: T) -> T {
    (distance(anchor, positive) - distance(anchor, negative) + margin).max(T::zero())
}

/// Gradient of [`triplet_loss`] with respect to the three chart points, or
/// `None` where the loss is flat. The hinge boundary and coincident points use
/// subgradient 0.
pub(crate) fn triplet_loss_grad<T: Float>(
    anchor: &[T],
    positive: &[T],
    negative: &[T],
    margin: T,
) -> Option<(Vec<T>, Vec<T>, Vec<T>)> {
    let dp = distance(anchor, positive);
    let dn = distance(anchor, negative);
    if dp - dn + margin <= T::zero() {
        return None;
    }
    let dim = anchor.len();
    let mut ga = vec![T::zero(); dim];
    let mut gp = vec![T::zero(); dim];
    let mut gn = vec![T::zero(); dim];
    for k in 0..dim {
        if dp > T::zero() {
            let u = (anchor[k] - positive[k]) / dp;
            ga[k] = ga[k] + u;
            gp[k] = gp[k] - u;
        }
        if dn > T::zero() {
            let v = (anchor[k] - negative[k]) / dn;
            ga[k] = ga[k] - v;
            gn[k] = gn[k] + v;
        }
    }
    Some((ga, gp, gn))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn satisfied_margin_gives_zero() {
        assert_eq!(triplet_loss(&[0.0, 0.0], &[0.0, 0.0], &[3.0, 4.0], 1.0), 0.0);
    }

    #[test]
    fn collapsed_negative() {
        // 2 − 0 + 1
        assert_eq!(triplet_loss(&[1.0, 1.0], &[1.0, 3.0], &[1.0, 1.0], 1.0), 3.0);
    }

    #[test]
    fn gradient_matches_closed_form() {
        let (ga, gp, gn) = triplet_loss_grad(&[0.0, 0.0], &[3.0, 4.0], &[1.0, 0.0], 1.0).unwrap();
        assert_eq!(gp, vec![0.6, 0.8]);
        assert_eq!(gn, vec![-1.0, 0.0]);
        assert_eq!(ga, vec![-0.6 + 1.0, -0.8]);
        assert!(triplet_loss_grad(&[0.0, 0.0], &[0.0, 0.0], &[5.0, 0.0], 1.0).is_none());
    }

    fn point() -> impl Strategy<Value = [f64; 2]> {
        [-10.0f64..10.0, -10.0f64..10.0]
    }

    proptest! {
        #[test]
        fn nonnegative_and_zero_exactly_when_margin_met(a in point(), p in point(), n in point(), m in 0.01f64..3.0) {
            let l = triplet_loss(&a, &p, &n, m);
            prop_assert!(l >= 0.0);
            let met = distance(&a, &n) >= distance(&a, &p) + m;
            prop_assert_eq!(l == 0.0, met);
        }

        #[test]
        fn translation_invariant(a in point(), p in point(), n in point(), t in point()) {
            let sh = |x: [f64; 2]| [x[0] + t[0], x[1] + t[1]];
            let l0 = triplet_loss(&a, &p, &n, 1.0);
            let l1 = triplet_loss(&sh(a), &sh(p), &sh(n), 1.0);
            prop_assert!((l0 - l1).abs() < 1e-9);
        }
    }
}

use super::{Graph, NodeId, Tensor};

/// Compares reverse-mode gradients of a scalar function against central
/// differences `(f(x + eps) - f(x - eps)) / 2 eps`, coordinate by coordinate.
///
/// `f` receives one leaf node per entry of `params` and returns the `1 x 1`
/// output node. Returns the largest `|a - n| / max(1e-8, |a| + |n|)`.
pub fn grad_check<F>(f: F, params: &[Tensor], epsilon: f64) -> f64
where
    F: Fn(&mut Graph, &[NodeId]) -> NodeId,
{
    assert!(
        (1e-7..=1e-3).contains(&epsilon),
        "epsilon {epsilon} outside [1e-7, 1e-3]"
    );
    let eval = |values: &[Tensor]| -> f64 {
        let mut g = Graph::new();
        let ids: Vec<NodeId> = values.iter().map(|t| g.leaf(t.clone())).collect();
        let out = f(&mut g, &ids);
        g.scalar(out)
    };

    let mut g = Graph::new();
    let ids: Vec<NodeId> = params.iter().map(|t| g.leaf(t.clone())).collect();
    let out = f(&mut g, &ids);
    let grads = g.backward(out).expect("grad_check output must be 1x1");

    let mut worst: f64 = 0.0;
    let mut work: Vec<Tensor> = params.to_vec();
    for (p, id) in ids.iter().enumerate() {
        let analytic = grads.get(*id).cloned().unwrap_or_else(|| {
            Tensor::zeros(params[p].rows(), params[p].cols())
        });
        for k in 0..params[p].len() {
            let orig = params[p].data()[k];
            work[p].data_mut()[k] = orig + epsilon;
            let plus = eval(&work);
            work[p].data_mut()[k] = orig - epsilon;
            let minus = eval(&work);
            work[p].data_mut()[k] = orig;
            let numeric = (plus - minus) / (2.0 * epsilon);
            let a = analytic.data()[k];
            let err = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-8);
            worst = worst.max(err);
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_at_three() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::scalar(3.0));
        let y = g.mul(x, x);
        let grads = g.backward(y).unwrap();
        assert_eq!(grads.get(x).unwrap().item(), 6.0);
    }

    #[test]
    fn quadratic_bowl() {
        let p = Tensor::row(&[0.3, -1.2, 2.5]);
        let err = grad_check(
            |g, ids| {
                let sq = g.mul(ids[0], ids[0]);
                g.sum(sq)
            },
            &[p],
            1e-5,
        );
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn constant_function() {
        let p = Tensor::row(&[1.0, 2.0]);
        let err = grad_check(|g, _| g.leaf(Tensor::scalar(4.0)), &[p], 1e-5);
        assert_eq!(err, 0.0);
    }
}

//! Alignment, diagnosis, and composite losses, as plain functions and as
//! graph builders sharing one implementation.

use super::{Graph, NodeId, NumericError, Tensor};

/// `u.v / (|u| |v|)`.
pub fn cosine_similarity(u: &[f64], v: &[f64]) -> Result<f64, NumericError> {
    if u.len() != v.len() {
        return Err(NumericError::ShapeMismatch {
            op: "cosine_similarity",
            detail: format!("lengths {} and {}", u.len(), v.len()),
        });
    }
    let nu = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        return Err(NumericError::ZeroNorm);
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    Ok((dot / (nu * nv)).clamp(-1.0, 1.0))
}

/// Pooled visual and text embeddings for one batch, row `i` of each forming
/// the positive pair.
#[derive(Debug, Clone)]
pub struct AlignmentBatch {
    z_v: Tensor,
    z_t: Tensor,
    tau: f64,
}

fn check_rows_nonzero(t: &Tensor) -> Result<(), NumericError> {
    for r in 0..t.rows() {
        if t.row_slice(r).iter().all(|x| *x == 0.0) {
            return Err(NumericError::ZeroNorm);
        }
    }
    Ok(())
}

impl AlignmentBatch {
    pub fn new(z_v: Tensor, z_t: Tensor, tau: f64) -> Result<Self, NumericError> {
        if !(tau > 0.0) || !tau.is_finite() {
            return Err(NumericError::NonPositiveTau(tau));
        }
        if z_v.shape().len() != 2 || z_v.shape() != z_t.shape() {
            return Err(NumericError::ShapeMismatch {
                op: "infonce_align",
                detail: format!("z_v {:?} vs z_t {:?}", z_v.shape(), z_t.shape()),
            });
        }
        check_rows_nonzero(&z_v)?;
        check_rows_nonzero(&z_t)?;
        Ok(AlignmentBatch { z_v, z_t, tau })
    }

    pub fn batch_size(&self) -> usize {
        self.z_v.rows()
    }
}

/// Visual-to-text InfoNCE over the batch, mean-reduced:
/// `-(1/B) sum_i log softmax_j(S(z_v_i, z_t_j) / tau)[i]`.
pub fn infonce_align(batch: &AlignmentBatch) -> Result<f64, NumericError> {
    let mut g = Graph::new();
    let zv = g.leaf(batch.z_v.clone());
    let zt = g.leaf(batch.z_t.clone());
    let loss = infonce_node(&mut g, zv, zt, batch.tau)?;
    Ok(g.scalar(loss))
}

/// Graph form of [`infonce_align`]; `zv` and `zt` are `B x d` nodes.
pub fn infonce_node(g: &mut Graph, zv: NodeId, zt: NodeId, tau: f64) -> Result<NodeId, NumericError> {
    if !(tau > 0.0) {
        return Err(NumericError::NonPositiveTau(tau));
    }
    check_rows_nonzero(g.value(zv))?;
    check_rows_nonzero(g.value(zt))?;
    let b = g.value(zv).rows();
    let nv = g.l2_normalize_rows(zv);
    let nt = g.l2_normalize_rows(zt);
    let nt_t = g.transpose(nt);
    let sim = g.matmul(nv, nt_t);
    let logits = g.scale(sim, 1.0 / tau);
    let logp = g.log_softmax_rows(logits);
    let diag: Vec<(usize, usize)> = (0..b).map(|i| (i, i)).collect();
    let picked = g.gather(logp, &diag);
    let mean = g.mean(picked);
    Ok(g.scale(mean, -1.0))
}

/// `-log softmax(logits)[label]` for a single example.
pub fn cross_entropy(logits: &[f64], label: usize) -> Result<f64, NumericError> {
    if logits.len() < 2 {
        return Err(NumericError::ShapeMismatch {
            op: "cross_entropy",
            detail: format!("need at least 2 classes, got {}", logits.len()),
        });
    }
    let mut g = Graph::new();
    let l = g.leaf(Tensor::new(vec![1, logits.len()], logits.to_vec())?);
    let loss = cross_entropy_node(&mut g, l, &[label])?;
    Ok(g.scalar(loss))
}

/// Mean cross-entropy over the rows of a `B x C` logits node.
pub fn cross_entropy_node(g: &mut Graph, logits: NodeId, labels: &[usize]) -> Result<NodeId, NumericError> {
    let (rows, classes) = (g.value(logits).rows(), g.value(logits).cols());
    if rows != labels.len() {
        return Err(NumericError::ShapeMismatch {
            op: "cross_entropy",
            detail: format!("{rows} logit rows for {} labels", labels.len()),
        });
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(NumericError::LabelOutOfRange { label: bad, classes });
    }
    let logp = g.log_softmax_rows(logits);
    let positions: Vec<(usize, usize)> = labels.iter().enumerate().map(|(i, &l)| (i, l)).collect();
    let picked = g.gather(logp, &positions);
    let mean = g.mean(picked);
    Ok(g.scale(mean, -1.0))
}

/// `l_diag + lambda_logic * l_logic + lambda_align * l_align`.
pub fn total_loss(l_diag: f64, l_logic: f64, l_align: f64, lambda_logic: f64, lambda_align: f64) -> f64 {
    l_diag + lambda_logic * l_logic + lambda_align * l_align
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn cosine_examples() {
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[1.0, 0.0]).unwrap(), 1.0);
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert!(close(
            cosine_similarity(&[1.0, 1.0], &[1.0, 0.0]).unwrap(),
            0.70710678,
            1e-8
        ));
        assert_eq!(cosine_similarity(&[0.0, 0.0], &[1.0, 0.0]), Err(NumericError::ZeroNorm));
    }

    #[test]
    fn infonce_examples() {
        let one = AlignmentBatch::new(
            Tensor::row(&[0.3, -1.0]),
            Tensor::row(&[2.0, 0.5]),
            0.07,
        )
        .unwrap();
        assert!(infonce_align(&one).unwrap().abs() <= 1e-12);

        let eye = Tensor::identity(2);
        let two = AlignmentBatch::new(eye.clone(), eye, 1.0).unwrap();
        // each row: -log(e / (e + 1)) = log(1 + e^-1)
        let expected = (1.0 + (-1.0f64).exp()).ln();
        assert!(close(infonce_align(&two).unwrap(), expected, 1e-9));
        assert!(close(expected, 0.31326169, 1e-8));

        let same = Tensor::from_rows(&vec![vec![0.5, 1.5, -2.0]; 5]).unwrap();
        let uniform = AlignmentBatch::new(same.clone(), same, 0.07).unwrap();
        assert!(close(infonce_align(&uniform).unwrap(), 5f64.ln(), 1e-9));
    }

    #[test]
    fn infonce_errors() {
        let z = Tensor::row(&[1.0, 0.0]);
        assert_eq!(
            AlignmentBatch::new(z.clone(), z.clone(), 0.0).unwrap_err(),
            NumericError::NonPositiveTau(0.0)
        );
        assert_eq!(
            AlignmentBatch::new(z, Tensor::row(&[0.0, 0.0]), 1.0).unwrap_err(),
            NumericError::ZeroNorm
        );
    }

    #[test]
    fn cross_entropy_examples() {
        assert!(cross_entropy(&[30.0, 0.0, 0.0], 0).unwrap() < 1e-9);
        assert!(close(cross_entropy(&[0.0; 4], 2).unwrap(), 4f64.ln(), 1e-9));
        // logits (1, 0): the class holding logit 1 costs log(1 + e) - 1
        assert!(close(cross_entropy(&[1.0, 0.0], 0).unwrap(), 0.31326169, 1e-8));
        assert!(close(cross_entropy(&[1.0, 0.0], 1).unwrap(), 1.31326169, 1e-8));
        assert_eq!(
            cross_entropy(&[1.0, 0.0], 2),
            Err(NumericError::LabelOutOfRange { label: 2, classes: 2 })
        );
    }

    #[test]
    fn total_loss_examples() {
        assert_eq!(total_loss(1.0, 0.0, 0.0, 3.0, 7.0), 1.0);
        assert!(close(total_loss(0.5, 0.25, 0.31326, 1.0, 0.5), 0.90663, 1e-9));
        assert_eq!(total_loss(0.8, 0.9, 0.4, 0.0, 0.0), 0.8);
    }
}

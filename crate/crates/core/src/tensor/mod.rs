//! Minimal dense-tensor library with reverse-mode automatic differentiation
//! and an Adam optimizer.

mod adam;
mod checkpoint;
mod matrix;
mod tape;

pub use adam::AdamState;
pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use matrix::Matrix;
pub use tape::{grad_check, sigmoid, softplus, Grads, SparseMat, Tape, Var, LN_CLAMP};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Result;

    #[test]
    fn relu_and_softmax_basics() {
        let t = Tape::new();
        let x = t.constant(Matrix::from_vec(1, 2, vec![-1.0, 2.0]).unwrap());
        let y = t.value(t.relu(x));
        assert_eq!(y.data, vec![0.0, 2.0]);

        let z = t.constant(Matrix::zeros(1, 4));
        let s = t.value(t.row_softmax(z));
        for v in s.data {
            assert!((v - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn softplus_at_zero_is_ln2() {
        let t = Tape::new();
        let x = t.constant(Matrix::scalar(0.0));
        let y = t.scalar_value(t.softplus(x));
        assert!((y - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn backward_sum_is_ones() {
        let t = Tape::new();
        let x = t.leaf(Matrix::from_vec(2, 3, vec![1.0; 6]).unwrap());
        let loss = t.sum(x);
        let g = t.backward(loss).unwrap();
        assert_eq!(g.get(x).unwrap().data, vec![1.0; 6]);
    }

    #[test]
    fn backward_quadratic() {
        let t = Tape::new();
        let x = t.leaf(Matrix::from_vec(1, 3, vec![1.0, 2.0, 3.0]).unwrap());
        let loss = t.sum(t.mul(x, x).unwrap());
        let g = t.backward(loss).unwrap();
        assert_eq!(g.get(x).unwrap().data, vec![2.0, 4.0, 6.0]);
    }

    #[test]
    fn relu_grad_at_zero_is_zero() {
        let t = Tape::new();
        let x = t.leaf(Matrix::scalar(0.0));
        let loss = t.sum(t.relu(x));
        let g = t.backward(loss).unwrap();
        assert_eq!(g.get(x).unwrap().data[0], 0.0);
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let t = Tape::new();
        let x = t.leaf(Matrix::zeros(2, 2));
        assert!(t.backward(x).is_err());
    }

    #[test]
    fn grad_check_linear_is_exact() {
        let x = Matrix::from_vec(1, 4, vec![0.3, -0.7, 1.1, 0.2]).unwrap();
        let err = grad_check(|t, v| Ok(t.scale(t.sum(v), 3.0)), &x, 1e-5).unwrap();
        assert!(err < 1e-9, "linear grad_check err {err}");
    }

    #[test]
    fn grad_check_quadratic_form() {
        let x = Matrix::from_vec(1, 5, vec![0.5, -0.3, 0.8, 0.1, -0.9]).unwrap();
        let err = grad_check(
            |t, v| {
                let q = t.mul(v, v)?;
                Ok(t.sum(q))
            },
            &x,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-6, "quadratic grad_check err {err}");
    }

    #[test]
    fn grad_check_matmul_relu_composition() -> Result<()> {
        // inputs perturbed away from relu kinks
        let x = Matrix::from_vec(2, 3, vec![0.9, -0.8, 0.7, 0.6, -0.5, 0.4])?;
        let w = Matrix::from_vec(3, 2, vec![0.2, -0.1, 0.4, 0.3, -0.6, 0.5])?;
        let err = grad_check(
            move |t, v| {
                let wc = t.constant(w.clone());
                let h = t.relu(t.matmul(v, wc)?);
                Ok(t.sum(t.mul(h, h)?))
            },
            &x,
            1e-5,
        )?;
        assert!(err < 1e-4, "matmul∘relu grad_check err {err}");
        Ok(())
    }

    #[test]
    fn grad_check_softmax_log_softplus_sigmoid() -> Result<()> {
        let x = Matrix::from_vec(1, 4, vec![0.5, -1.2, 0.3, 2.0]).unwrap();
        let err = grad_check(
            |t, v| {
                let p = t.row_softmax(v);
                let lp = t.ln(p);
                let s = t.sigmoid(v);
                let sp = t.softplus(v);
                let a = t.sum(t.mul(p, lp)?);
                let b = t.sum(t.mul(s, sp)?);
                t.add(a, b)
            },
            &x,
            1e-6,
        )?;
        assert!(err < 1e-6, "composite grad_check err {err}");
        Ok(())
    }

    #[test]
    fn backward_is_deterministic() {
        let run = || {
            let t = Tape::new();
            let x = t.leaf(Matrix::from_vec(3, 3, (0..9).map(|i| i as f64 * 0.1).collect()).unwrap());
            let y = t.matmul(x, x).unwrap();
            let loss = t.sum(t.mul(y, y).unwrap());
            let g = t.backward(loss).unwrap();
            g.get(x).unwrap().clone()
        };
        assert_eq!(run().data, run().data);
    }

    #[test]
    fn scatter_edges_roundtrip_grad() {
        use std::rc::Rc;
        let edges = Rc::new(vec![(0usize, 1usize), (1, 2)]);
        let t = Tape::new();
        let theta = t.leaf(Matrix::from_vec(2, 1, vec![0.3, 0.7]).unwrap());
        let m = t.scatter_edges(theta, edges, 3).unwrap();
        let v = t.value(m);
        assert_eq!(v.get(0, 1), 0.3);
        assert_eq!(v.get(1, 0), 0.3);
        assert_eq!(v.get(2, 1), 0.7);
        let loss = t.sum(m);
        let g = t.backward(loss).unwrap();
        // each edge appears twice in the symmetric matrix
        assert_eq!(g.get(theta).unwrap().data, vec![2.0, 2.0]);
    }

    #[test]
    fn spmm_matches_dense_matmul_and_grad() {
        use std::rc::Rc;
        let a = Matrix::from_vec(3, 3, vec![
            0.0, 2.0, 0.0, //
            1.0, 0.0, 0.5, //
            0.0, 0.0, 3.0,
        ])
        .unwrap();
        let s = Rc::new(SparseMat::from_dense(&a));
        let h = Matrix::from_vec(3, 2, vec![1.0, -1.0, 0.5, 2.0, 0.0, 4.0]).unwrap();

        let t = Tape::new();
        let hv = t.leaf(h.clone());
        let sp = t.spmm(Rc::clone(&s), hv).unwrap();
        assert_eq!(t.value(sp), a.matmul(&h).unwrap());

        // gradient of sum(w ⊙ (S·H)) wrt H must equal Sᵀ·W
        let w = Matrix::from_vec(3, 2, vec![0.3, 0.7, -0.2, 0.1, 1.0, 0.5]).unwrap();
        let wv = t.constant(w.clone());
        let loss = t.sum(t.mul(sp, wv).unwrap());
        let g = t.backward(loss).unwrap();
        let expected = a.transpose().matmul(&w).unwrap();
        for (x, y) in g.get(hv).unwrap().data.iter().zip(expected.data.iter()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn adam_zero_grad_keeps_params() {
        let mut p = vec![Matrix::from_vec(1, 2, vec![1.0, -2.0]).unwrap()];
        let mut st = AdamState::new(0.01, 0.0, &[(1, 2)]);
        let g = Matrix::zeros(1, 2);
        st.step(&mut p, &[Some(&g)]).unwrap();
        assert_eq!(p[0].data, vec![1.0, -2.0]);
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        // bias-corrected first step: update magnitude ~ lr * sign(g)
        let mut p = vec![Matrix::scalar(0.0)];
        let mut st = AdamState::new(0.01, 0.0, &[(1, 1)]);
        let g = Matrix::scalar(5.0);
        st.step(&mut p, &[Some(&g)]).unwrap();
        assert!((p[0].data[0] + 0.01).abs() < 1e-6, "got {}", p[0].data[0]);
    }

    #[test]
    fn adam_decoupled_decay_shrinks() {
        let mut p = vec![Matrix::scalar(2.0)];
        let mut st = AdamState::new(0.01, 5e-4, &[(1, 1)]);
        let g = Matrix::scalar(0.0);
        st.step(&mut p, &[Some(&g)]).unwrap();
        assert!((p[0].data[0] - 2.0 * (1.0 - 0.01 * 5e-4)).abs() < 1e-15);
    }

    #[test]
    fn adam_nan_grad_errors() {
        let mut p = vec![Matrix::scalar(0.0)];
        let mut st = AdamState::new(0.01, 0.0, &[(1, 1)]);
        let g = Matrix::scalar(f64::NAN);
        assert!(st.step(&mut p, &[Some(&g)]).is_err());
    }

    #[test]
    fn checkpoint_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let base = dir.path().join("ckpt");
        let entries = vec![
            ("w1".to_string(), Matrix::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap()),
            ("b1".to_string(), Matrix::from_vec(1, 2, vec![-0.5, 0.25]).unwrap()),
        ];
        save_checkpoint(&base, &entries).unwrap();
        let loaded = load_checkpoint(&base).unwrap();
        assert_eq!(loaded, entries);
    }
}

//! From-scratch 1-D CNN: conv + ELU + max-pool stages, ELU dense layers and
//! a softmax output, trained with Adam on cross-entropy plus L1 on the dense
//! weights.

mod checkpoint;
mod net;
mod params;
mod scalar;
mod train;

pub use checkpoint::{decode, encode, read_checkpoint, write_checkpoint, Checkpoint};
pub use net::{forward, loss_and_grads};
pub use params::{init_network, Architecture, ConvLayer, ConvSpec, DenseLayer, NetworkParams};
pub use scalar::Scalar;
pub use train::{
    adam_step, evaluate, history_csv, train, train_with, AdamState, EpochRecord, Evaluation,
    TrainConfig,
};

impl Architecture {
    /// Two conv and two dense layers on 12-sample inputs, small enough to
    /// check every gradient coordinate by finite differences.
    pub fn tiny() -> Self {
        Self {
            input_len: 12,
            input_channels: 2,
            conv: vec![
                ConvSpec {
                    channels: 3,
                    kernel: 3,
                    pool: 2,
                },
                ConvSpec {
                    channels: 4,
                    kernel: 3,
                    pool: 2,
                },
            ],
            dense: vec![5, 3],
        }
    }
}

/// Largest relative error between backprop and central differences over
/// every parameter: `|g - fd| / max(|g| + |fd|, floor)`.
pub fn gradient_check(
    params: &NetworkParams<f64>,
    inputs: &[f64],
    labels: &[usize],
    l1_lambda: f64,
    h: f64,
) -> crate::Result<f64> {
    let (_, grads) = loss_and_grads(params, inputs, labels, l1_lambda)?;
    let mut probe = params.clone();
    let mut worst = 0.0f64;
    let n_tensors = params.tensors().len();
    for ti in 0..n_tensors {
        for i in 0..params.tensors()[ti].len() {
            let w0 = params.tensors()[ti][i];
            probe.tensors_mut()[ti][i] = w0 + h;
            let (lp, _) = loss_and_grads(&probe, inputs, labels, l1_lambda)?;
            probe.tensors_mut()[ti][i] = w0 - h;
            let (lm, _) = loss_and_grads(&probe, inputs, labels, l1_lambda)?;
            probe.tensors_mut()[ti][i] = w0;
            let fd = (lp - lm) / (2.0 * h);
            let g = grads.tensors()[ti][i];
            let rel = (g - fd).abs() / (g.abs() + fd.abs()).max(1e-7);
            worst = worst.max(rel);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use rand::Rng;

    fn random_inputs(arch: &Architecture, b: usize, seed: u64) -> Vec<f64> {
        let mut rng = stream(seed, 9);
        (0..b * arch.input_size())
            .map(|_| rng.random_range(-1.0..1.0))
            .collect()
    }

    /// Random nonzero biases so no ELU sits exactly at its kink.
    fn jittered(arch: &Architecture, seed: u64) -> NetworkParams<f64> {
        let mut p = init_network::<f64>(arch, seed).unwrap();
        let mut rng = stream(seed, 3);
        for t in p.tensors_mut() {
            t.iter_mut().for_each(|v| *v += rng.random_range(-0.1..0.1));
        }
        p
    }

    fn check(arch: Architecture, l1: f64) {
        let p = jittered(&arch, 21);
        let x = random_inputs(&arch, 4, 22);
        let labels: Vec<usize> = (0..4).map(|i| i % arch.n_classes()).collect();
        let worst = gradient_check(&p, &x, &labels, l1, 1e-5).unwrap();
        assert!(worst <= 1e-4, "{arch:?}: worst relative error {worst}");
    }

    #[test]
    fn gradients_tiny_net() {
        check(Architecture::tiny(), 0.0);
        check(Architecture::tiny(), 1e-3);
    }

    #[test]
    fn gradients_dense_only() {
        let mut a = Architecture::tiny();
        a.conv.clear();
        check(a, 1e-3);
    }

    #[test]
    fn gradients_conv_without_pooling() {
        let mut a = Architecture::tiny();
        a.conv.truncate(1);
        a.conv[0].pool = 1;
        a.dense = vec![3];
        check(a, 0.0);
    }

    #[test]
    fn gradients_pool_with_even_kernel() {
        let mut a = Architecture::tiny();
        a.conv = vec![ConvSpec {
            channels: 2,
            kernel: 4,
            pool: 3,
        }];
        a.dense = vec![3];
        check(a, 0.0);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let a = Architecture::tiny();
        let p = init_network::<f64>(&a, 1).unwrap();
        for scale in [1.0, 1e4] {
            let x: Vec<f64> = random_inputs(&a, 6, 2).iter().map(|v| v * scale).collect();
            let probs = forward(&p, &x).unwrap();
            for row in probs.chunks(3) {
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6);
                assert!(row.iter().all(|v| v.is_finite()));
                if scale == 1.0 {
                    assert!(row.iter().all(|&v| v > 0.0 && v < 1.0));
                }
            }
        }
    }

    #[test]
    fn zero_input_gives_uniform_output_and_ln_n_loss() {
        let a = Architecture::default_for(21);
        let p = init_network::<f32>(&a, 1).unwrap();
        let x = vec![0.0f32; a.input_size()];
        let probs = forward(&p, &x).unwrap();
        assert!(probs.iter().all(|&v| (v - 1.0 / 21.0).abs() < 1e-6));
        let (loss, _) = loss_and_grads(&p, &x, &[4], 0.0).unwrap();
        assert!((loss as f64 - 21f64.ln()).abs() < 1e-5, "{loss}");
    }

    #[test]
    fn duplicated_rows_give_identical_outputs() {
        let a = Architecture::tiny();
        let p = init_network::<f32>(&a, 4).unwrap();
        let row: Vec<f32> = random_inputs(&a, 1, 5).iter().map(|&v| v as f32).collect();
        let mut x = row.clone();
        x.extend_from_slice(&row);
        let probs = forward(&p, &x).unwrap();
        assert_eq!(
            probs[..3].iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            probs[3..].iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn shape_and_label_errors() {
        let a = Architecture::tiny();
        let p = init_network::<f64>(&a, 4).unwrap();
        assert!(matches!(
            forward(&p, &[0.0; 23]),
            Err(crate::Error::Shape { .. })
        ));
        let x = random_inputs(&a, 1, 1);
        assert!(matches!(
            loss_and_grads(&p, &x, &[3], 0.0),
            Err(crate::Error::LabelRange { .. })
        ));
    }

    #[test]
    fn zero_dense_weights_add_no_l1() {
        let a = Architecture::tiny();
        let mut p = jittered(&a, 8);
        p.dense
            .iter_mut()
            .for_each(|d| d.weight.iter_mut().for_each(|w| *w = 0.0));
        let x = random_inputs(&a, 2, 1);
        let (l0, g0) = loss_and_grads(&p, &x, &[0, 1], 0.0).unwrap();
        let (l1, g1) = loss_and_grads(&p, &x, &[0, 1], 0.5).unwrap();
        assert_eq!(l0, l1);
        assert_eq!(g0, g1, "a weight pinned at 0 gets no L1 push");
    }

    #[test]
    fn l1_touches_dense_weights_only() {
        let a = Architecture::tiny();
        let p = jittered(&a, 8);
        let x = random_inputs(&a, 2, 1);
        let (_, g0) = loss_and_grads(&p, &x, &[0, 1], 0.0).unwrap();
        let (_, g1) = loss_and_grads(&p, &x, &[0, 1], 0.5).unwrap();
        assert_eq!(g0.conv, g1.conv);
        for (d0, d1) in g0.dense.iter().zip(&g1.dense) {
            assert_eq!(d0.bias, d1.bias);
            assert_ne!(d0.weight, d1.weight);
        }
    }

    #[test]
    fn permuting_output_rows_permutes_probabilities() {
        let a = Architecture::tiny();
        let p = jittered(&a, 2);
        let perm = [2usize, 0, 1];
        let mut q = p.clone();
        let last = q.dense.len() - 1;
        let fan_in = a.dense[last - 1];
        for (new, &old) in perm.iter().enumerate() {
            q.dense[last].weight[new * fan_in..(new + 1) * fan_in]
                .copy_from_slice(&p.dense[last].weight[old * fan_in..(old + 1) * fan_in]);
            q.dense[last].bias[new] = p.dense[last].bias[old];
        }
        let x = random_inputs(&a, 3, 4);
        let pp = forward(&p, &x).unwrap();
        let pq = forward(&q, &x).unwrap();
        for (rp, rq) in pp.chunks(3).zip(pq.chunks(3)) {
            for (new, &old) in perm.iter().enumerate() {
                assert!((rq[new] - rp[old]).abs() < 1e-15);
            }
        }
    }

    fn cfg() -> TrainConfig {
        TrainConfig {
            lr: 0.1,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn adam_zero_gradient_is_a_fixed_point() {
        let a = Architecture::tiny();
        let mut p = jittered(&a, 1);
        let before = p.clone();
        let mut s = AdamState::new(&p);
        s.m.dense[0].weight[0] = 1.0;
        s.v.dense[0].weight[0] = 1.0;
        let g = p.zeros_like();
        adam_step(&mut p, &g, &mut s, &cfg());
        assert_eq!(s.step, 1);
        assert!((s.m.dense[0].weight[0] - 0.9).abs() < 1e-15);
        assert!((s.v.dense[0].weight[0] - 0.999).abs() < 1e-15);
        // Only the coordinate with leftover momentum moves.
        let moved: usize = p
            .tensors()
            .iter()
            .zip(before.tensors())
            .map(|(x, y)| x.iter().zip(y).filter(|(a, b)| a != b).count())
            .sum();
        assert_eq!(moved, 1);
        let mut fresh = AdamState::new(&before);
        let mut q = before.clone();
        adam_step(&mut q, &g, &mut fresh, &cfg());
        assert_eq!(q, before);
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let a = Architecture::tiny();
        let mut p = jittered(&a, 1);
        let before = p.clone();
        let mut g = p.zeros_like();
        let mut rng = stream(4, 4);
        for t in g.tensors_mut() {
            t.iter_mut().for_each(|v| *v = rng.random_range(-3.0..3.0));
        }
        g.dense[1].weight[0] = 0.0;
        let mut s = AdamState::new(&p);
        let c = cfg();
        adam_step(&mut p, &g, &mut s, &c);
        for ((after, orig), grad) in p.tensors().iter().zip(before.tensors()).zip(g.tensors()) {
            for ((w1, w0), gi) in after.iter().zip(orig).zip(grad.iter()) {
                let step = w1 - w0;
                if *gi == 0.0 {
                    assert_eq!(step, 0.0);
                } else {
                    assert!(
                        (step + c.lr * gi.signum()).abs() < 1e-6,
                        "{step} for g={gi}"
                    );
                }
            }
        }
    }

    #[test]
    fn adam_quadratic_bowl_converges() {
        // f(w) = w^2 from w = 1, single parameter; the independent scalar
        // recursion below is compared step by step.
        let a = Architecture {
            input_len: 1,
            input_channels: 1,
            conv: vec![],
            dense: vec![2],
        };
        let mut p = NetworkParams::<f64>::zeros(&a).unwrap();
        p.dense[0].bias[0] = 1.0;
        let c = TrainConfig {
            lr: 0.01,
            ..TrainConfig::default()
        };
        let mut s = AdamState::new(&p);
        let (mut w, mut m, mut v) = (1.0f64, 0.0f64, 0.0f64);
        let mut norms = vec![];
        for t in 1..=100 {
            let mut g = p.zeros_like();
            g.dense[0].bias[0] = 2.0 * p.dense[0].bias[0];
            adam_step(&mut p, &g, &mut s, &c);
            let gw = 2.0 * w;
            m = 0.9 * m + 0.1 * gw;
            v = 0.999 * v + 0.001 * gw * gw;
            w -= 0.01 * (m / (1.0 - 0.9f64.powi(t)))
                / ((v / (1.0 - 0.999f64.powi(t))).sqrt() + 1e-8);
            assert!((p.dense[0].bias[0] - w).abs() < 1e-12);
            norms.push(w.abs());
        }
        assert!(norms.windows(2).skip(2).all(|x| x[1] < x[0]));
        assert!(norms[99] < 0.5);
    }

    #[test]
    fn checkpoint_round_trip_and_corruption() {
        let a = Architecture::compact_for(5);
        let ckpt = Checkpoint {
            params: init_network::<f32>(&a, 3).unwrap(),
            normalize: true,
        };
        let bytes = encode(&ckpt);
        assert_eq!(&bytes[..8], b"TXIDNET1");
        assert_eq!(decode(&bytes).unwrap(), ckpt);
        assert!(decode(&bytes[..bytes.len() - 1]).is_err());
        let mut wrong = bytes.clone();
        wrong[0] = b'X';
        assert!(decode(&wrong).is_err());
        let mut nan = bytes.clone();
        let n = nan.len();
        nan[n - 4..].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(decode(&nan).is_err());
    }
}

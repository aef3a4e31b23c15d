//! Forward pass and backpropagation.
//!
//! Conv activations are kept as `[channel][batch][time]` so every conv stage
//! is a single GEMM over an im2col matrix of shape `(c_in * k) x (B * L)`.

use super::scalar::{matmul, Mat};
use super::{NetworkParams, Scalar};
use crate::error::{Error, Result};

fn elu<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        x
    } else {
        x.exp_m1()
    }
}

/// ELU derivative written in terms of the activation itself.
fn elu_grad_from_output<T: Scalar>(a: T) -> T {
    if a > T::zero() {
        T::one()
    } else {
        a + T::one()
    }
}

/// Same-padding offsets for a kernel of width `k`.
fn pad_left(k: usize) -> usize {
    (k - 1) / 2
}

/// `x` is `[c][b][l]`; returns `[c * k][b * l]`.
fn im2col<T: Scalar>(x: &[T], c: usize, b: usize, l: usize, k: usize) -> Vec<T> {
    let pad = pad_left(k) as isize;
    let bl = b * l;
    let mut cols = vec![T::zero(); c * k * bl];
    for ci in 0..c {
        for kk in 0..k {
            let shift = kk as isize - pad;
            let row = &mut cols[(ci * k + kk) * bl..(ci * k + kk + 1) * bl];
            for bi in 0..b {
                let src = &x[(ci * b + bi) * l..(ci * b + bi + 1) * l];
                let dst = &mut row[bi * l..(bi + 1) * l];
                let lo = (-shift).max(0) as usize;
                let hi = (l as isize - shift).min(l as isize).max(0) as usize;
                for t in lo.min(hi)..hi {
                    dst[t] = src[(t as isize + shift) as usize];
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`].
fn col2im<T: Scalar>(cols: &[T], c: usize, b: usize, l: usize, k: usize) -> Vec<T> {
    let pad = pad_left(k) as isize;
    let bl = b * l;
    let mut x = vec![T::zero(); c * bl];
    for ci in 0..c {
        for kk in 0..k {
            let shift = kk as isize - pad;
            let row = &cols[(ci * k + kk) * bl..(ci * k + kk + 1) * bl];
            for bi in 0..b {
                let dst = &mut x[(ci * b + bi) * l..(ci * b + bi + 1) * l];
                let src = &row[bi * l..(bi + 1) * l];
                let lo = (-shift).max(0) as usize;
                let hi = (l as isize - shift).min(l as isize).max(0) as usize;
                for t in lo.min(hi)..hi {
                    let j = (t as isize + shift) as usize;
                    dst[j] = dst[j] + src[t];
                }
            }
        }
    }
    x
}

struct ConvCache<T> {
    cols: Vec<T>,
    /// Post-ELU, pre-pool activations `[c][b][l]`.
    act: Vec<T>,
    /// Flat index into `act` of each pooled output.
    argmax: Vec<usize>,
}

struct Cache<T> {
    batch: usize,
    conv: Vec<ConvCache<T>>,
    /// Inputs to each dense layer, `[b][in]`; the last entry is the softmax output.
    dense_in: Vec<Vec<T>>,
}

/// `B x L x 2` interleaved samples to `[2][B][L]`.
fn to_channel_major<T: Scalar>(inputs: &[T], b: usize, l: usize, c: usize) -> Vec<T> {
    let mut out = vec![T::zero(); inputs.len()];
    for bi in 0..b {
        for t in 0..l {
            for ci in 0..c {
                out[(ci * b + bi) * l + t] = inputs[(bi * l + t) * c + ci];
            }
        }
    }
    out
}

fn check_inputs<T: Scalar>(params: &NetworkParams<T>, inputs: &[T]) -> Result<usize> {
    let size = params.arch.input_size();
    if inputs.is_empty() || inputs.len() % size != 0 {
        return Err(Error::Shape {
            expected: size,
            got: inputs.len(),
        });
    }
    Ok(inputs.len() / size)
}

fn run<T: Scalar>(params: &NetworkParams<T>, inputs: &[T], keep: bool) -> Result<Cache<T>> {
    let arch = &params.arch;
    let b = check_inputs(params, inputs)?;
    let lens = arch.conv_lengths();
    let chans = arch.conv_channels();
    let mut x = to_channel_major(inputs, b, arch.input_len, arch.input_channels);
    let mut conv_cache = Vec::with_capacity(arch.conv.len());
    for (i, (spec, layer)) in arch.conv.iter().zip(&params.conv).enumerate() {
        let (c_in, l) = (chans[i], lens[i]);
        let cols = im2col(&x, c_in, b, l, spec.kernel);
        let mut act = vec![T::zero(); spec.channels * b * l];
        matmul(
            Mat::new(&layer.weight, spec.channels, c_in * spec.kernel),
            Mat::new(&cols, c_in * spec.kernel, b * l),
            &mut act,
            false,
        );
        for (co, row) in act.chunks_mut(b * l).enumerate() {
            let bias = layer.bias[co];
            row.iter_mut().for_each(|v| *v = elu(*v + bias));
        }
        let lp = lens[i + 1];
        let p = spec.pool;
        let mut pooled = vec![T::zero(); spec.channels * b * lp];
        let mut argmax = vec![0usize; pooled.len()];
        for cb in 0..spec.channels * b {
            for t in 0..lp {
                let base = cb * l + t * p;
                let mut best = base;
                for j in base + 1..base + p {
                    if act[j] > act[best] {
                        best = j;
                    }
                }
                pooled[cb * lp + t] = act[best];
                argmax[cb * lp + t] = best;
            }
        }
        if keep {
            conv_cache.push(ConvCache { cols, act, argmax });
        }
        x = pooled;
    }
    // [c][b][l] -> [b][c * l]
    let (c_last, l_last) = (*chans.last().unwrap_or(&0), *lens.last().unwrap_or(&0));
    let mut h = vec![T::zero(); x.len()];
    for ci in 0..c_last {
        for bi in 0..b {
            let src = &x[(ci * b + bi) * l_last..(ci * b + bi + 1) * l_last];
            h[bi * c_last * l_last + ci * l_last..][..l_last].copy_from_slice(src);
        }
    }
    let mut dense_in = Vec::with_capacity(params.dense.len() + 1);
    let mut fan_in = arch.flatten_len();
    let n_dense = params.dense.len();
    for (i, layer) in params.dense.iter().enumerate() {
        let width = arch.dense[i];
        let mut z = vec![T::zero(); b * width];
        matmul(
            Mat::new(&h, b, fan_in),
            Mat::new(&layer.weight, width, fan_in).t(),
            &mut z,
            false,
        );
        for row in z.chunks_mut(width) {
            row.iter_mut()
                .zip(&layer.bias)
                .for_each(|(v, &bb)| *v = *v + bb);
        }
        if i + 1 == n_dense {
            for row in z.chunks_mut(width) {
                softmax_in_place(row);
            }
        } else {
            z.iter_mut().for_each(|v| *v = elu(*v));
        }
        if keep {
            dense_in.push(std::mem::replace(&mut h, z));
        } else {
            h = z;
        }
        fan_in = width;
    }
    dense_in.push(h);
    Ok(Cache {
        batch: b,
        conv: conv_cache,
        dense_in,
    })
}

fn softmax_in_place<T: Scalar>(row: &mut [T]) {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    let mut sum = T::zero();
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum = sum + *v;
    }
    row.iter_mut().for_each(|v| *v = *v / sum);
}

/// Class probabilities, `B x n_classes`, for `B x input_len x input_channels`
/// interleaved inputs.
pub fn forward<T: Scalar>(params: &NetworkParams<T>, inputs: &[T]) -> Result<Vec<T>> {
    let mut cache = run(params, inputs, false)?;
    Ok(cache.dense_in.pop().unwrap_or_default())
}

/// Mean cross-entropy plus `l1_lambda * sum |dense weights|`, and its
/// gradient with respect to every parameter.
pub fn loss_and_grads<T: Scalar>(
    params: &NetworkParams<T>,
    inputs: &[T],
    labels: &[usize],
    l1_lambda: T,
) -> Result<(T, NetworkParams<T>)> {
    let n_classes = params.arch.n_classes();
    if let Some(&bad) = labels.iter().find(|&&l| l >= n_classes) {
        return Err(Error::LabelRange {
            label: bad,
            n_classes,
        });
    }
    let cache = run(params, inputs, true)?;
    let b = cache.batch;
    if labels.len() != b {
        return Err(Error::Shape {
            expected: b,
            got: labels.len(),
        });
    }
    let arch = &params.arch;
    let mut grads = params.zeros_like();
    let probs = cache.dense_in.last().expect("softmax output");
    let bt = T::lit(b as f64);
    let tiny = T::min_positive_value();
    let mut loss = T::zero();
    let mut delta = probs.clone();
    for (bi, &label) in labels.iter().enumerate() {
        loss = loss - probs[bi * n_classes + label].max(tiny).ln();
        delta[bi * n_classes + label] = delta[bi * n_classes + label] - T::one();
    }
    loss = loss / bt;
    delta.iter_mut().for_each(|v| *v = *v / bt);

    for (i, layer) in params.dense.iter().enumerate().rev() {
        let width = arch.dense[i];
        let x = &cache.dense_in[i];
        let fan_in = x.len() / b;
        let g = &mut grads.dense[i];
        matmul(
            Mat::new(&delta, b, width).t(),
            Mat::new(x, b, fan_in),
            &mut g.weight,
            false,
        );
        for row in delta.chunks(width) {
            g.bias
                .iter_mut()
                .zip(row)
                .for_each(|(gb, &d)| *gb = *gb + d);
        }
        for (gw, &w) in g.weight.iter_mut().zip(&layer.weight) {
            let sign = if w > T::zero() {
                T::one()
            } else if w < T::zero() {
                -T::one()
            } else {
                T::zero()
            };
            *gw = *gw + l1_lambda * sign;
            loss = loss + l1_lambda * w.abs();
        }
        let mut dx = vec![T::zero(); b * fan_in];
        matmul(
            Mat::new(&delta, b, width),
            Mat::new(&layer.weight, width, fan_in),
            &mut dx,
            false,
        );
        if i > 0 {
            dx.iter_mut()
                .zip(x)
                .for_each(|(d, &a)| *d = *d * elu_grad_from_output(a));
        }
        delta = dx;
    }

    if arch.conv.is_empty() {
        return Ok((loss, grads));
    }
    let lens = arch.conv_lengths();
    let chans = arch.conv_channels();
    // [b][c * l] -> [c][b][l]
    let (c_last, l_last) = (chans[arch.conv.len()], lens[arch.conv.len()]);
    let mut d_pooled = vec![T::zero(); delta.len()];
    for bi in 0..b {
        for ci in 0..c_last {
            d_pooled[(ci * b + bi) * l_last..][..l_last]
                .copy_from_slice(&delta[bi * c_last * l_last + ci * l_last..][..l_last]);
        }
    }
    for i in (0..arch.conv.len()).rev() {
        let spec = arch.conv[i];
        let cc = &cache.conv[i];
        let (c_in, l) = (chans[i], lens[i]);
        let mut d_act = vec![T::zero(); cc.act.len()];
        for (&j, &d) in cc.argmax.iter().zip(&d_pooled) {
            d_act[j] = d_act[j] + d;
        }
        d_act
            .iter_mut()
            .zip(&cc.act)
            .for_each(|(d, &a)| *d = *d * elu_grad_from_output(a));
        let g = &mut grads.conv[i];
        for (co, row) in d_act.chunks(b * l).enumerate() {
            g.bias[co] = row.iter().copied().sum();
        }
        let ck = c_in * spec.kernel;
        matmul(
            Mat::new(&d_act, spec.channels, b * l),
            Mat::new(&cc.cols, ck, b * l).t(),
            &mut g.weight,
            false,
        );
        if i > 0 {
            let mut d_cols = vec![T::zero(); ck * b * l];
            matmul(
                Mat::new(&params.conv[i].weight, spec.channels, ck).t(),
                Mat::new(&d_act, spec.channels, b * l),
                &mut d_cols,
                false,
            );
            d_pooled = col2im(&d_cols, c_in, b, l, spec.kernel);
        }
    }
    Ok((loss, grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{init_network, Architecture, ConvSpec};

    #[test]
    fn im2col_and_col2im_are_adjoint() {
        let (c, b, l, k) = (2, 3, 7, 4);
        let x: Vec<f64> = (0..c * b * l).map(|i| (i as f64 * 0.7).sin()).collect();
        let y: Vec<f64> = (0..c * k * b * l).map(|i| (i as f64 * 0.3).cos()).collect();
        let lhs: f64 = im2col(&x, c, b, l, k)
            .iter()
            .zip(&y)
            .map(|(a, b)| a * b)
            .sum();
        let rhs: f64 = x
            .iter()
            .zip(&col2im(&y, c, b, l, k))
            .map(|(a, b)| a * b)
            .sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn conv_matches_direct_same_padded_correlation() {
        let arch = Architecture {
            input_len: 9,
            input_channels: 2,
            conv: vec![ConvSpec {
                channels: 3,
                kernel: 3,
                pool: 1,
            }],
            dense: vec![2],
        };
        let p = init_network::<f64>(&arch, 5).unwrap();
        let x: Vec<f64> = (0..18).map(|i| (i as f64 * 0.9).sin()).collect();
        let cache = run(&p, &x, true).unwrap();
        let act = &cache.conv[0].act;
        for co in 0..3 {
            for t in 0..9usize {
                let mut z = p.conv[0].bias[co];
                for ci in 0..2 {
                    for kk in 0..3 {
                        let src = t as isize + kk as isize - 1;
                        if (0..9).contains(&src) {
                            z +=
                                p.conv[0].weight[(co * 2 + ci) * 3 + kk] * x[src as usize * 2 + ci];
                        }
                    }
                }
                assert!((act[co * 9 + t] - elu(z)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn elu_values() {
        assert_eq!(elu(2.0f64), 2.0);
        assert!((elu(-1.0f64) - (-1f64).exp_m1()).abs() < 1e-15);
        assert_eq!(elu(0.0f64), 0.0);
    }
}

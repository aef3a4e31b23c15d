use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Scalar;
use crate::error::{Error, Result};
use crate::rng::stream;

/// One convolution stage: same-padded stride-1 1-D convolution, ELU, then
/// non-overlapping max pooling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub channels: usize,
    pub kernel: usize,
    /// 1 disables pooling.
    pub pool: usize,
}

/// Shape of the whole network. The last dense width is the class count.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_len: usize,
    pub input_channels: usize,
    pub conv: Vec<ConvSpec>,
    pub dense: Vec<usize>,
}

impl Architecture {
    /// Five conv stages (600 -> 18 samples) and six dense layers.
    pub fn default_for(n_classes: usize) -> Self {
        let conv = [(64, 7), (64, 5), (128, 5), (128, 3), (128, 3)]
            .into_iter()
            .map(|(channels, kernel)| ConvSpec {
                channels,
                kernel,
                pool: 2,
            })
            .collect();
        Self {
            input_len: 600,
            input_channels: 2,
            conv,
            dense: vec![256, 128, 128, 64, 32, n_classes],
        }
    }

    /// Same layer counts at a quarter of the width; what the multi-seed
    /// studies train on a desk CPU.
    pub fn compact_for(n_classes: usize) -> Self {
        let conv = [(16, 7), (16, 5), (32, 5), (32, 3), (32, 3)]
            .into_iter()
            .map(|(channels, kernel)| ConvSpec {
                channels,
                kernel,
                pool: 2,
            })
            .collect();
        Self {
            input_len: 600,
            input_channels: 2,
            conv,
            dense: vec![64, 32, 32, 32, 16, n_classes],
        }
    }

    pub fn n_classes(&self) -> usize {
        self.dense.last().copied().unwrap_or(0)
    }

    /// Sequence length entering each conv stage, followed by the final one.
    pub fn conv_lengths(&self) -> Vec<usize> {
        let mut lens = vec![self.input_len];
        for spec in &self.conv {
            let last = *lens.last().unwrap_or(&0);
            lens.push(last / spec.pool);
        }
        lens
    }

    /// Channel count entering each conv stage, followed by the final one.
    pub fn conv_channels(&self) -> Vec<usize> {
        std::iter::once(self.input_channels)
            .chain(self.conv.iter().map(|c| c.channels))
            .collect()
    }

    pub fn flatten_len(&self) -> usize {
        self.conv_channels().last().copied().unwrap_or(0)
            * self.conv_lengths().last().copied().unwrap_or(0)
    }

    pub fn input_size(&self) -> usize {
        self.input_len * self.input_channels
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_len == 0 || self.input_channels == 0 {
            return Err(Error::invalid("empty network input"));
        }
        if self.dense.is_empty() || self.dense.contains(&0) {
            return Err(Error::invalid("need at least one non-empty dense layer"));
        }
        if self.n_classes() < 2 {
            return Err(Error::invalid("need at least two classes"));
        }
        for (i, c) in self.conv.iter().enumerate() {
            if c.channels == 0 || c.kernel == 0 || c.pool == 0 {
                return Err(Error::invalid(format!(
                    "conv stage {i} has a zero dimension"
                )));
            }
        }
        if self.flatten_len() == 0 {
            return Err(Error::invalid("pooling shrinks the sequence to nothing"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer<T> {
    /// `[out][in][kernel]`
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer<T> {
    /// `[out][in]`
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

/// All weights and biases. Gradients and Adam moments use the same type.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams<T> {
    pub arch: Architecture,
    pub conv: Vec<ConvLayer<T>>,
    pub dense: Vec<DenseLayer<T>>,
}

impl<T: Scalar> NetworkParams<T> {
    pub fn zeros(arch: &Architecture) -> Result<Self> {
        arch.validate()?;
        let channels = arch.conv_channels();
        let conv = arch
            .conv
            .iter()
            .enumerate()
            .map(|(i, spec)| ConvLayer {
                weight: vec![T::zero(); spec.channels * channels[i] * spec.kernel],
                bias: vec![T::zero(); spec.channels],
            })
            .collect();
        let mut fan_in = arch.flatten_len();
        let mut dense = Vec::with_capacity(arch.dense.len());
        for &width in &arch.dense {
            dense.push(DenseLayer {
                weight: vec![T::zero(); width * fan_in],
                bias: vec![T::zero(); width],
            });
            fan_in = width;
        }
        Ok(Self {
            arch: arch.clone(),
            conv,
            dense,
        })
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(&self.arch).expect("architecture already validated")
    }

    /// Tensors in declaration order: each conv weight then bias, then each
    /// dense weight then bias.
    pub fn tensors(&self) -> Vec<&[T]> {
        let mut out: Vec<&[T]> = Vec::with_capacity(2 * (self.conv.len() + self.dense.len()));
        for c in &self.conv {
            out.push(&c.weight);
            out.push(&c.bias);
        }
        for d in &self.dense {
            out.push(&d.weight);
            out.push(&d.bias);
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [T]> {
        let mut out: Vec<&mut [T]> = Vec::with_capacity(2 * (self.conv.len() + self.dense.len()));
        for c in &mut self.conv {
            out.push(&mut c.weight);
            out.push(&mut c.bias);
        }
        for d in &mut self.dense {
            out.push(&mut d.weight);
            out.push(&mut d.bias);
        }
        out
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|t| t.iter().all(|v| v.is_finite()))
    }

    pub fn cast<U: Scalar>(&self) -> NetworkParams<U> {
        let conv_t = |v: &[T]| {
            v.iter()
                .map(|x| U::lit(x.to_f64().unwrap_or(f64::NAN)))
                .collect()
        };
        NetworkParams {
            arch: self.arch.clone(),
            conv: self
                .conv
                .iter()
                .map(|c| ConvLayer {
                    weight: conv_t(&c.weight),
                    bias: conv_t(&c.bias),
                })
                .collect(),
            dense: self
                .dense
                .iter()
                .map(|d| DenseLayer {
                    weight: conv_t(&d.weight),
                    bias: conv_t(&d.bias),
                })
                .collect(),
        }
    }
}

/// Fan-in scaled uniform weights (He limits for ELU layers, LeCun for the
/// softmax layer) and zero biases.
pub fn init_network<T: Scalar>(arch: &Architecture, seed: u64) -> Result<NetworkParams<T>> {
    let mut params = NetworkParams::<T>::zeros(arch)?;
    let channels = arch.conv_channels();
    let mut rng = stream(seed, 0);
    for (i, layer) in params.conv.iter_mut().enumerate() {
        let fan_in = channels[i] * arch.conv[i].kernel;
        let limit = (6.0 / fan_in as f64).sqrt();
        layer
            .weight
            .iter_mut()
            .for_each(|w| *w = T::lit(rng.random_range(-limit..limit)));
    }
    let n_dense = params.dense.len();
    let mut fan_in = arch.flatten_len();
    for (i, layer) in params.dense.iter_mut().enumerate() {
        let gain = if i + 1 == n_dense { 3.0 } else { 6.0 };
        let limit = (gain / fan_in as f64).sqrt();
        layer
            .weight
            .iter_mut()
            .for_each(|w| *w = T::lit(rng.random_range(-limit..limit)));
        fan_in = arch.dense[i];
    }
    Ok(params)
}

//! Parameterized building blocks.

use candle_core::{Tensor, Var};

use super::ops;
use super::params::ParamStore;
use crate::error::Result;

#[derive(Debug, Clone)]
pub struct Conv2d {
    pub weight: Tensor,
    pub bias: Option<Tensor>,
    pub stride: usize,
    pub padding: usize,
    pub dilation: usize,
}

impl Conv2d {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        bias: bool,
    ) -> Result<Self> {
        Self::dilated(store, name, in_ch, out_ch, kernel, stride, 1, bias)
    }

    #[allow(clippy::too_many_arguments)]
    pub fn dilated(
        store: &mut ParamStore,
        name: &str,
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        dilation: usize,
        bias: bool,
    ) -> Result<Self> {
        let weight = store.normal(
            &format!("{name}.weight"),
            &[out_ch, in_ch, kernel, kernel],
            in_ch * kernel * kernel,
        )?;
        let bias = if bias {
            Some(store.constant(&format!("{name}.bias"), &[out_ch], 0.0)?)
        } else {
            None
        };
        Ok(Conv2d {
            weight,
            bias,
            stride,
            padding: dilation * (kernel / 2),
            dilation,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let y = x.conv2d(&self.weight, self.padding, self.stride, self.dilation, 1)?;
        match &self.bias {
            Some(b) => Ok(y.broadcast_add(&b.reshape((1, (), 1, 1))?)?),
            None => Ok(y),
        }
    }

    pub fn out_channels(&self) -> usize {
        self.weight.dims()[0]
    }
}

/// Batch normalization: batch statistics while training (running averages
/// updated in place), running averages at inference.
#[derive(Debug, Clone)]
pub struct BatchNorm {
    gamma: Tensor,
    beta: Tensor,
    running_mean: Var,
    running_var: Var,
    momentum: f64,
    eps: f64,
}

impl BatchNorm {
    pub fn new(store: &mut ParamStore, name: &str, channels: usize) -> Result<Self> {
        Ok(BatchNorm {
            gamma: store.constant(&format!("{name}.weight"), &[channels], 1.0)?,
            beta: store.constant(&format!("{name}.bias"), &[channels], 0.0)?,
            running_mean: store.buffer(&format!("{name}.running_mean"), &[channels], 0.0)?,
            running_var: store.buffer(&format!("{name}.running_var"), &[channels], 1.0)?,
            momentum: 0.1,
            eps: 1e-5,
        })
    }

    pub fn forward(&self, x: &Tensor, train: bool) -> Result<Tensor> {
        let shape = (1, (), 1, 1);
        let (mean, var) = if train {
            let (b, _, h, w) = x.dims4()?;
            let n = b * h * w;
            let mean = x.mean_keepdim((0, 2, 3))?;
            let centered = x.broadcast_sub(&mean)?;
            let var = centered.sqr()?.mean_keepdim((0, 2, 3))?;
            let m = self.momentum;
            let unbiased = if n > 1 {
                (var.detach() * (n as f64 / (n - 1) as f64))?
            } else {
                var.detach()
            };
            let rm = ((self.running_mean.as_tensor() * (1.0 - m))?
                + (mean.detach().flatten_all()? * m)?)?;
            let rv = ((self.running_var.as_tensor() * (1.0 - m))?
                + (unbiased.flatten_all()? * m)?)?;
            self.running_mean.set(&rm)?;
            self.running_var.set(&rv)?;
            (mean, var)
        } else {
            (
                self.running_mean.as_tensor().reshape(shape)?,
                self.running_var.as_tensor().reshape(shape)?,
            )
        };
        let inv = (var + self.eps)?.sqrt()?.recip()?;
        let y = x.broadcast_sub(&mean)?.broadcast_mul(&inv)?;
        Ok(y
            .broadcast_mul(&self.gamma.reshape(shape)?)?
            .broadcast_add(&self.beta.reshape(shape)?)?)
    }
}

/// Convolution → batch norm → optional ReLU.
#[derive(Debug, Clone)]
pub struct ConvBn {
    pub conv: Conv2d,
    pub bn: BatchNorm,
    pub relu: bool,
}

impl ConvBn {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        dilation: usize,
        relu: bool,
    ) -> Result<Self> {
        Ok(ConvBn {
            conv: Conv2d::dilated(store, &format!("{name}.conv"), in_ch, out_ch, kernel, stride, dilation, false)?,
            bn: BatchNorm::new(store, &format!("{name}.bn"), out_ch)?,
            relu,
        })
    }

    pub fn relu(store: &mut ParamStore, name: &str, in_ch: usize, out_ch: usize, kernel: usize) -> Result<Self> {
        Self::new(store, name, in_ch, out_ch, kernel, 1, 1, true)
    }

    pub fn forward(&self, x: &Tensor, train: bool) -> Result<Tensor> {
        let y = self.bn.forward(&self.conv.forward(x)?, train)?;
        if self.relu {
            Ok(y.relu()?)
        } else {
            Ok(y)
        }
    }
}

/// ×2 upsampling step of a learned decoder: bilinear resize followed by a
/// 3×3 conv-bn-relu, or a stride-2 transposed convolution.
#[derive(Debug, Clone)]
pub enum UpStep {
    Bilinear(ConvBn),
    Transposed { weight: Tensor, bias: Tensor },
}

impl UpStep {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_ch: usize,
        out_ch: usize,
        mode: crate::config::Upsampling,
    ) -> Result<Self> {
        match mode {
            crate::config::Upsampling::Bilinear => {
                Ok(UpStep::Bilinear(ConvBn::relu(store, name, in_ch, out_ch, 3)?))
            }
            crate::config::Upsampling::Transposed => Ok(UpStep::Transposed {
                weight: store.normal(&format!("{name}.weight"), &[in_ch, out_ch, 2, 2], in_ch)?,
                bias: store.constant(&format!("{name}.bias"), &[out_ch], 0.0)?,
            }),
        }
    }

    pub fn forward(&self, x: &Tensor, train: bool) -> Result<Tensor> {
        let (_, _, h, w) = x.dims4()?;
        match self {
            UpStep::Bilinear(conv) => conv.forward(&ops::resize_bilinear(x, 2 * h, 2 * w)?, train),
            UpStep::Transposed { weight, bias } => {
                let y = x.conv_transpose2d(weight, 0, 0, 2, 1)?;
                Ok(y.broadcast_add(&bias.reshape((1, (), 1, 1))?)?.relu()?)
            }
        }
    }
}

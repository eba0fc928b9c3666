//! ADADELTA (Zeiler, 2012) with learning-rate multiplier.
//!
//! E[g²] ← ρE[g²] + (1−ρ)g²
//! Δx   = −lr · √(E[Δx²]+ε) / √(E[g²]+ε) · g
//! E[Δx²] ← ρE[Δx²] + (1−ρ)Δx²

use candle_core::{DType, Tensor, Var};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdadeltaConfig {
    pub rho: f64,
    pub eps: f64,
    pub lr: f64,
}

impl Default for AdadeltaConfig {
    fn default() -> Self {
        AdadeltaConfig {
            rho: 0.95,
            eps: 1e-6,
            lr: 1.0,
        }
    }
}

/// Per-parameter accumulators, aligned with the parameter list they were
/// created for.
#[derive(Debug, Clone)]
pub struct AdadeltaState {
    pub config: AdadeltaConfig,
    pub sq_grad: Vec<Tensor>,
    pub sq_delta: Vec<Tensor>,
    pub steps: u64,
}

impl AdadeltaState {
    pub fn new(config: AdadeltaConfig, params: &[Var]) -> Result<Self> {
        let zeros = params
            .iter()
            .map(|p| Ok(p.as_tensor().zeros_like()?))
            .collect::<Result<Vec<_>>>()?;
        Ok(AdadeltaState {
            config,
            sq_grad: zeros.clone(),
            sq_delta: zeros,
            steps: 0,
        })
    }
}

fn all_finite(t: &Tensor) -> Result<bool> {
    let s = t.abs()?.max_all()?.to_dtype(DType::F64)?.to_scalar::<f64>()?;
    Ok(s.is_finite())
}

/// One update of every parameter. `grads[i]` of `None` counts as zero.
/// Nothing is modified if any gradient is non-finite.
pub fn adadelta_step(params: &[Var], grads: &[Option<Tensor>], state: &mut AdadeltaState) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.sq_grad.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} parameters, {} gradients, {} accumulators",
            params.len(),
            grads.len(),
            state.sq_grad.len()
        )));
    }
    for (i, g) in grads.iter().enumerate() {
        if let Some(g) = g {
            if g.dims() != params[i].dims() {
                return Err(Error::ShapeMismatch(format!(
                    "gradient {i} has shape {:?}, parameter {:?}",
                    g.dims(),
                    params[i].dims()
                )));
            }
            if !all_finite(g)? {
                return Err(Error::NonFiniteGradient(i.to_string()));
            }
        }
    }
    let AdadeltaConfig { rho, eps, lr } = state.config;
    for (i, p) in params.iter().enumerate() {
        let g = match &grads[i] {
            // gradients carry autograd history; keeping it in the
            // accumulators would chain every step's graph together
            Some(g) => g.detach().to_dtype(p.dtype())?,
            None => p.as_tensor().zeros_like()?.detach(),
        };
        let sq_grad = ((&state.sq_grad[i] * rho)? + (g.sqr()? * (1.0 - rho))?)?;
        let ratio = ((&state.sq_delta[i] + eps)?.sqrt()? / (&sq_grad + eps)?.sqrt()?)?;
        let delta = (ratio * &g)?;
        let sq_delta = ((&state.sq_delta[i] * rho)? + (delta.sqr()? * (1.0 - rho))?)?;
        p.set(&(p.as_tensor() - (delta * lr)?)?)?;
        state.sq_grad[i] = sq_grad;
        state.sq_delta[i] = sq_delta;
    }
    state.steps += 1;
    Ok(())
}

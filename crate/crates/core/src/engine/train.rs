//! Mini-batch training with ADADELTA.

use candle_core::{Tensor, Var};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adadelta::{adadelta_step, AdadeltaConfig, AdadeltaState};
use super::data::{self, LoadedScan};
use super::loss::cross_entropy;
use crate::config::RunConfig;
use crate::datasets::DatasetManifest;
use crate::error::{Error, Result};
use crate::models::{build, ModelSpec, SegmentationModel};
use crate::record::{Modality, Split};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub mean_loss: f64,
    pub steps: usize,
}

#[derive(Debug)]
pub struct TrainState {
    pub model: SegmentationModel,
    pub optimizer: AdadeltaState,
    /// Completed epochs.
    pub epoch: usize,
    pub step: u64,
    /// Mean loss of the last completed epoch.
    pub running_loss: f64,
    /// Base seed; per-epoch shuffles derive from it.
    pub seed: u64,
}

impl TrainState {
    pub fn new(spec: &ModelSpec, seed: u64) -> Result<Self> {
        let model = build(spec, seed)?;
        let optimizer = AdadeltaState::new(AdadeltaConfig::default(), &trainable_vars(&model))?;
        Ok(TrainState {
            model,
            optimizer,
            epoch: 0,
            step: 0,
            running_loss: 0.0,
            seed,
        })
    }
}

pub fn trainable_vars(model: &SegmentationModel) -> Vec<Var> {
    model.store().trainable().map(|p| p.var.clone()).collect()
}

fn epoch_rng(seed: u64, epoch: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed.rotate_left(17) ^ (epoch as u64).wrapping_mul(0xA076_1D64_78BD_642F))
}

/// Scan order for one epoch: each modality shuffled on its own, then
/// interleaved in proportion so every batch mixes fundus and OCT whenever
/// both are available.
pub fn epoch_order(modalities: &[Modality], seed: u64, epoch: usize) -> Vec<usize> {
    let mut rng = epoch_rng(seed, epoch);
    let mut oct: Vec<usize> = (0..modalities.len()).filter(|&i| modalities[i] == Modality::Oct).collect();
    let mut fundus: Vec<usize> = (0..modalities.len()).filter(|&i| modalities[i] == Modality::Fundus).collect();
    oct.shuffle(&mut rng);
    fundus.shuffle(&mut rng);
    let (n_oct, n_fundus) = (oct.len(), fundus.len());
    let mut order = Vec::with_capacity(modalities.len());
    let (mut a, mut b) = (oct.into_iter(), fundus.into_iter());
    let (mut taken_a, mut taken_b) = (0usize, 0usize);
    while taken_a < n_oct || taken_b < n_fundus {
        // take from whichever modality lags its share
        let take_a = taken_b >= n_fundus || (taken_a < n_oct && taken_a * n_fundus <= taken_b * n_oct);
        if take_a {
            order.extend(a.next());
            taken_a += 1;
        } else {
            order.extend(b.next());
            taken_b += 1;
        }
    }
    order
}

pub struct Trainer {
    config: RunConfig,
    manifest: DatasetManifest,
    state: TrainState,
    vars: Vec<Var>,
    curve: Vec<EpochLoss>,
}

impl Trainer {
    /// Fresh model from `config`, trained on the train split of `manifest`.
    pub fn new(config: &RunConfig, manifest: &DatasetManifest) -> Result<Self> {
        let spec = ModelSpec::from_config(config)?;
        Self::resume(config, manifest, TrainState::new(&spec, config.seed)?)
    }

    pub fn resume(config: &RunConfig, manifest: &DatasetManifest, state: TrainState) -> Result<Self> {
        config.validate()?;
        let manifest = manifest.split(Split::Train);
        if manifest.is_empty() {
            return Err(Error::EmptyManifest);
        }
        if state.model.spec() != &ModelSpec::from_config(config)? {
            return Err(Error::InvalidConfig(vec!["model state does not match the configuration".into()]));
        }
        let vars = trainable_vars(&state.model);
        Ok(Trainer {
            config: config.clone(),
            manifest,
            state,
            vars,
            curve: Vec::new(),
        })
    }

    pub fn state(&self) -> &TrainState {
        &self.state
    }

    pub fn into_state(self) -> TrainState {
        self.state
    }

    pub fn loss_curve(&self) -> &[EpochLoss] {
        &self.curve
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    /// Index order of the train records for epoch `epoch` (0-based).
    pub fn epoch_order(&self, epoch: usize) -> Vec<usize> {
        let modalities: Vec<Modality> = self.manifest.records().iter().map(|r| r.modality).collect();
        epoch_order(&modalities, self.state.seed, epoch)
    }

    pub fn run_epochs(&mut self, n: usize) -> Result<()> {
        for _ in 0..n {
            self.run_epoch()?;
        }
        Ok(())
    }

    pub fn run_epoch(&mut self) -> Result<EpochLoss> {
        let epoch = self.state.epoch;
        let order = self.epoch_order(epoch);
        let mut aug_rng = epoch_rng(self.state.seed ^ 0x5EED_F11F, epoch);
        let mut total = 0.0;
        let mut steps = 0;
        for batch in order.chunks(self.config.batch_size) {
            let scans = batch
                .iter()
                .map(|&i| data::load_scan(&self.manifest, &self.manifest.records()[i], self.config.input_size))
                .collect::<Result<Vec<LoadedScan>>>()?;
            let (mut x, mut y) = data::collate(&scans)?;
            if self.config.augment && aug_rng.random_bool(0.5) {
                x = data::flip_horizontal(&x)?;
                y = data::flip_horizontal(&y)?;
            }
            total += self.step(&x, &y)?;
            steps += 1;
        }
        let record = EpochLoss {
            epoch: epoch + 1,
            mean_loss: total / steps as f64,
            steps,
        };
        self.state.epoch += 1;
        self.state.running_loss = record.mean_loss;
        self.curve.push(record);
        Ok(record)
    }

    /// One optimizer step on a collated batch; returns the batch loss.
    pub fn step(&mut self, x: &Tensor, targets: &Tensor) -> Result<f64> {
        let scores = self.state.model.forward_t(x, true)?;
        let loss = cross_entropy(&scores, targets, self.config.class_weights.as_deref())?;
        let value = loss.to_dtype(candle_core::DType::F64)?.to_scalar::<f64>()?;
        if !value.is_finite() {
            return Err(Error::Divergence {
                step: self.state.step as usize,
                loss: value,
            });
        }
        let grads = loss.backward()?;
        let g: Vec<Option<Tensor>> = self.vars.iter().map(|v| grads.get(v.as_tensor()).cloned()).collect();
        adadelta_step(&self.vars, &g, &mut self.state.optimizer).map_err(|e| match e {
            Error::NonFiniteGradient(i) => {
                let name = i
                    .parse::<usize>()
                    .ok()
                    .and_then(|i| self.state.model.store().trainable().nth(i))
                    .map_or(i.clone(), |p| p.name.clone());
                Error::NonFiniteGradient(name)
            }
            other => other,
        })?;
        self.state.step += 1;
        Ok(value)
    }
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub state: TrainState,
    pub loss_curve: Vec<EpochLoss>,
}

/// Runs `config.epochs` epochs on the train split of `manifest`.
pub fn train(config: &RunConfig, manifest: &DatasetManifest) -> Result<TrainOutcome> {
    let mut trainer = Trainer::new(config, manifest)?;
    trainer.run_epochs(config.epochs)?;
    let loss_curve = trainer.loss_curve().to_vec();
    Ok(TrainOutcome {
        state: trainer.into_state(),
        loss_curve,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_a_permutation_that_mixes_modalities() {
        let m: Vec<Modality> = (0..10)
            .map(|i| if i % 3 == 0 { Modality::Fundus } else { Modality::Oct })
            .collect();
        for epoch in 0..5 {
            let order = epoch_order(&m, 9, epoch);
            let mut sorted = order.clone();
            sorted.sort();
            assert_eq!(sorted, (0..10).collect::<Vec<_>>());
            for batch in order.chunks(4) {
                assert!(batch.iter().any(|&i| m[i] == Modality::Fundus));
                assert!(batch.iter().any(|&i| m[i] == Modality::Oct));
            }
        }
        assert_ne!(epoch_order(&m, 9, 0), epoch_order(&m, 9, 1));
        assert_eq!(epoch_order(&m, 9, 3), epoch_order(&m, 9, 3));
    }
}

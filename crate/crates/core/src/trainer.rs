//! The stochastic training process: SGD with momentum and coupled weight
//! decay, full training runs, and the low learning-rate continuation that
//! yields consecutive checkpoint pairs.

use std::sync::Arc;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::dataset::{LabeledSet, Sample};
use crate::error::{Error, Result};
use crate::model::{ModelSpec, ParamVector};
use crate::rng::{self, derive_rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for OptimConfig {
    fn default() -> Self {
        OptimConfig {
            learning_rate: 0.05,
            momentum: 0.9,
            weight_decay: 4e-3,
            batch_size: 128,
            epochs: 32,
            seed: 0,
        }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::arg(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::arg(format!("momentum must be in [0,1), got {}", self.momentum)));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(Error::arg(format!(
                "weight decay must be non-negative, got {}",
                self.weight_decay
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::arg("batch size must be positive"));
        }
        Ok(())
    }

    pub fn hyper(&self) -> SgdHyper {
        SgdHyper {
            learning_rate: self.learning_rate,
            momentum: self.momentum,
            weight_decay: self.weight_decay,
        }
    }
}

/// The three coefficients of one SGD update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SgdHyper {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
}

/// θ, its momentum buffer, and the step counter k.
///
/// Batch order is a pure function of the run seed and `step`, so no RNG
/// state needs to be carried or persisted.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainerState {
    pub params: ParamVector,
    pub velocity: ParamVector,
    pub step: u64,
}

impl TrainerState {
    pub fn new(params: ParamVector) -> Self {
        TrainerState {
            velocity: ParamVector::zeros_like(&params),
            params,
            step: 0,
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Self {
        TrainerState {
            velocity: ck
                .velocity
                .clone()
                .unwrap_or_else(|| ParamVector::zeros_like(&ck.params)),
            params: ck.params.clone(),
            step: ck.step,
        }
    }

    pub fn to_checkpoint(&self, with_velocity: bool) -> Checkpoint {
        Checkpoint {
            step: self.step,
            params: self.params.clone(),
            velocity: with_velocity.then(|| self.velocity.clone()),
        }
    }

    /// `v ← μ·v + (g + λ·θ)`, `θ ← θ − η·v`, `k ← k + 1`.
    ///
    /// Leaves the state untouched when the result would be non-finite.
    pub fn apply_gradient(&mut self, grad: &[f64], hp: SgdHyper) -> Result<()> {
        if grad.len() != self.params.len() {
            return Err(Error::arg("gradient length does not match parameters"));
        }
        let theta = self.params.values();
        let vel = self.velocity.values();
        let mut new_vel = Vec::with_capacity(theta.len());
        let mut new_theta = Vec::with_capacity(theta.len());
        for ((&t, &v), &g) in theta.iter().zip(vel).zip(grad) {
            let nv = hp.momentum * v + (g + hp.weight_decay * t);
            let nt = t - hp.learning_rate * nv;
            if !nt.is_finite() || !nv.is_finite() {
                return Err(Error::Numeric {
                    at: format!("training step {}", self.step),
                });
            }
            new_vel.push(nv);
            new_theta.push(nt);
        }
        self.velocity.values_mut().copy_from_slice(&new_vel);
        self.params.values_mut().copy_from_slice(&new_theta);
        self.step += 1;
        Ok(())
    }

    /// One SGD step on `batch`. Returns the batch risk before the update.
    pub fn sgd_step(&mut self, spec: &ModelSpec, batch: &[Sample], hp: SgdHyper) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::arg("SGD step on an empty batch"));
        }
        let (risk, grad) = spec.risk_and_grad(&self.params, batch)?;
        self.apply_gradient(grad.values(), hp)?;
        Ok(risk)
    }
}

/// One line of the run log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub step: u64,
    pub epoch: usize,
    /// Mean of the batch risks seen during the epoch.
    pub batch_risk: f64,
}

pub fn steps_per_epoch(n: usize, batch_size: usize) -> usize {
    n.div_ceil(batch_size)
}

/// Runs `epochs × ⌈N / batch_size⌉` steps over seeded shuffles of `data`,
/// continuing from `state.step` (so a resumed run picks up mid-schedule).
/// Calls `log` once per completed epoch.
pub fn train(
    spec: &ModelSpec,
    data: &LabeledSet,
    config: &OptimConfig,
    mut state: TrainerState,
    mut log: impl FnMut(&RunRecord),
) -> Result<TrainerState> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::arg("training set is empty"));
    }
    let per_epoch = steps_per_epoch(data.len(), config.batch_size);
    let total = (config.epochs * per_epoch) as u64;
    if total == 0 {
        return Err(Error::arg("training schedule has zero steps"));
    }
    let hp = config.hyper();
    let samples = data.samples();

    while state.step < total {
        let epoch = (state.step / per_epoch as u64) as usize;
        let mut order: Vec<usize> = (0..samples.len()).collect();
        order.shuffle(&mut derive_rng(config.seed, &[rng::TAG_EPOCH, epoch as u64]));
        let first = (state.step % per_epoch as u64) as usize;
        let mut risk_sum = 0.0;
        let mut seen = 0usize;
        for b in first..per_epoch {
            let idx = &order[b * config.batch_size..((b + 1) * config.batch_size).min(samples.len())];
            let batch: Vec<Sample> = idx.iter().map(|&i| samples[i].clone()).collect();
            risk_sum += state.sgd_step(spec, &batch, hp)?;
            seen += 1;
        }
        log(&RunRecord {
            step: state.step,
            epoch,
            batch_risk: risk_sum / seen as f64,
        });
    }
    Ok(state)
}

/// Settings of the low learning-rate continuation.
///
/// Momentum is separate from training: with the training momentum carried
/// over, consecutive sampling steps are dominated by the shared velocity and
/// the sign patterns of successive pairs are strongly correlated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplingSchedule {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl SamplingSchedule {
    /// The training configuration with learning rate and momentum replaced.
    pub fn from_optim(config: &OptimConfig, sampling_lr: f64, sampling_momentum: f64, seed: u64) -> Self {
        SamplingSchedule {
            learning_rate: sampling_lr,
            momentum: sampling_momentum,
            weight_decay: config.weight_decay,
            batch_size: config.batch_size,
            seed,
        }
    }
}

/// Consecutive checkpoint pairs `(T^K, T^{K+1})` along one trajectory.
///
/// The second checkpoint of pair `i` is the first of pair `i + 1`. Each
/// step trains on a uniform without-replacement batch from the full
/// training set.
pub struct CheckpointPairs<'a> {
    spec: &'a ModelSpec,
    data: &'a LabeledSet,
    state: TrainerState,
    schedule: SamplingSchedule,
    current: Arc<Checkpoint>,
    produced: usize,
    count: usize,
}

pub fn checkpoint_pair_stream<'a>(
    spec: &'a ModelSpec,
    state: TrainerState,
    data: &'a LabeledSet,
    schedule: SamplingSchedule,
    count: usize,
) -> Result<CheckpointPairs<'a>> {
    if count == 0 {
        return Err(Error::arg("checkpoint pair count must be at least 1"));
    }
    if data.is_empty() {
        return Err(Error::arg("sampling needs a non-empty training set"));
    }
    if !(schedule.learning_rate.is_finite() && schedule.learning_rate > 0.0) {
        return Err(Error::arg("sampling learning rate must be positive"));
    }
    if !(0.0..1.0).contains(&schedule.momentum) {
        return Err(Error::arg("sampling momentum must be in [0,1)"));
    }
    if !(schedule.weight_decay.is_finite() && schedule.weight_decay >= 0.0) {
        return Err(Error::arg("sampling weight decay must be non-negative"));
    }
    if schedule.batch_size == 0 {
        return Err(Error::arg("sampling batch size must be positive"));
    }
    let current = Arc::new(state.to_checkpoint(false));
    Ok(CheckpointPairs {
        spec,
        data,
        state,
        schedule,
        current,
        produced: 0,
        count,
    })
}

impl CheckpointPairs<'_> {
    /// State after the last produced step.
    pub fn state(&self) -> &TrainerState {
        &self.state
    }

    fn advance(&mut self) -> Result<(Arc<Checkpoint>, Arc<Checkpoint>)> {
        let n = self.data.len();
        let bs = self.schedule.batch_size.min(n);
        let mut rng = derive_rng(self.schedule.seed, &[rng::TAG_SAMPLING, self.produced as u64]);
        let idx = rand::seq::index::sample(&mut rng, n, bs);
        let batch: Vec<Sample> = idx.iter().map(|i| self.data.samples()[i].clone()).collect();
        let hp = SgdHyper {
            learning_rate: self.schedule.learning_rate,
            momentum: self.schedule.momentum,
            weight_decay: self.schedule.weight_decay,
        };
        self.state.sgd_step(self.spec, &batch, hp)?;
        let next = Arc::new(self.state.to_checkpoint(false));
        let pair = (self.current.clone(), next.clone());
        self.current = next;
        Ok(pair)
    }
}

impl Iterator for CheckpointPairs<'_> {
    type Item = Result<(Arc<Checkpoint>, Arc<Checkpoint>)>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.produced >= self.count {
            return None;
        }
        let out = self.advance();
        self.produced = if out.is_ok() { self.produced + 1 } else { self.count };
        Some(out)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = self.count - self.produced;
        (left, Some(left))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::gen_synthetic;

    fn state_with(values: Vec<f64>) -> TrainerState {
        let spec = ModelSpec::linear(1, 2);
        let layout = spec.init(0).unwrap().layout().clone();
        TrainerState::new(ParamVector::new(values, layout).unwrap())
    }

    #[test]
    fn vanilla_sgd() {
        let mut s = state_with(vec![1.0, -2.0, 0.5, 3.0]);
        let g = [0.1, 0.2, -0.3, 0.4];
        let hp = SgdHyper {
            learning_rate: 0.5,
            momentum: 0.0,
            weight_decay: 0.0,
        };
        s.apply_gradient(&g, hp).unwrap();
        assert_eq!(s.params.values(), &[1.0 - 0.05, -2.0 - 0.1, 0.5 + 0.15, 3.0 - 0.2]);
        assert_eq!(s.step, 1);
    }

    #[test]
    fn zero_gradient_is_fixed_point() {
        let mut s = state_with(vec![1.0, -2.0, 0.5, 3.0]);
        let before = s.params.clone();
        let hp = SgdHyper {
            learning_rate: 0.1,
            momentum: 0.9,
            weight_decay: 0.0,
        };
        s.apply_gradient(&[0.0; 4], hp).unwrap();
        assert_eq!(s.params, before);
    }

    #[test]
    fn momentum_two_step_unrolling() {
        let theta0 = vec![0.3, -1.1, 2.0, 0.0];
        let g = [0.7, -0.2, 1.5, -3.0];
        let (lr, mu) = (0.05, 0.9);
        let hp = SgdHyper {
            learning_rate: lr,
            momentum: mu,
            weight_decay: 0.0,
        };
        let mut s = state_with(theta0.clone());
        s.apply_gradient(&g, hp).unwrap();
        let after1 = s.params.values().to_vec();
        s.apply_gradient(&g, hp).unwrap();
        let after2 = s.params.values().to_vec();
        for i in 0..4 {
            assert!((theta0[i] - after1[i] - lr * g[i]).abs() < 1e-12);
            assert!((after1[i] - after2[i] - lr * 1.9 * g[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn non_finite_update_reports_step() {
        let mut s = state_with(vec![1.0, 1.0, 1.0, 1.0]);
        s.step = 41;
        let hp = SgdHyper {
            learning_rate: 1.0,
            momentum: 0.0,
            weight_decay: 0.0,
        };
        let before = s.clone();
        match s.apply_gradient(&[f64::NAN, 0.0, 0.0, 0.0], hp) {
            Err(Error::Numeric { at }) => assert!(at.contains("41")),
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(s, before);
    }

    #[test]
    fn empty_batch_rejected() {
        let spec = ModelSpec::linear(1, 2);
        let mut s = TrainerState::new(spec.init(0).unwrap());
        assert!(s.sgd_step(&spec, &[], OptimConfig::default().hyper()).is_err());
    }

    #[test]
    fn zero_epochs_rejected() {
        let spec = ModelSpec::linear(2, 2);
        let data = gen_synthetic(2, 2, 5, 3.0, 0).unwrap();
        let cfg = OptimConfig {
            epochs: 0,
            ..OptimConfig::default()
        };
        let err = train(&spec, &data, &cfg, TrainerState::new(spec.init(0).unwrap()), |_| {});
        assert!(matches!(err, Err(Error::Argument(_))));
    }

    #[test]
    fn pair_stream_shape() {
        let spec = ModelSpec::linear(2, 2);
        let data = gen_synthetic(2, 2, 20, 3.0, 0).unwrap();
        let state = TrainerState::new(spec.init(0).unwrap());
        let sched = SamplingSchedule::from_optim(&OptimConfig::default(), 0.001, 0.0, 3);
        let pairs: Vec<_> = checkpoint_pair_stream(&spec, state, &data, sched, 1)
            .unwrap()
            .collect::<Result<_>>()
            .unwrap();
        assert_eq!(pairs.len(), 1);
        assert_eq!((pairs[0].0.step, pairs[0].1.step), (0, 1));
        assert!(checkpoint_pair_stream(&spec, TrainerState::new(spec.init(0).unwrap()), &data, sched, 0).is_err());
    }
}

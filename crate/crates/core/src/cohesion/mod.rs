//! Sign-of-loss-difference scoring and cohesive-degree accumulation.
//!
//! For a checkpoint pair `(T^K, T^{K+1})` each sample's loss either falls,
//! rises, or stays put (within `eps_zero`). The score of a pair `(a, b)` is
//! the product of the two signs: `+1` when both moved the same way, `-1`
//! when they moved apart, `0` when either did not move. Scores are summed
//! over checkpoint pairs into integer planes.
//!
//! The unconditional variant replaces one side's labeled loss with a value
//! per class, adding a class axis to the result.

mod io;
mod score;

use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::dataset::LabeledSet;
use crate::error::{Error, Result};
use crate::model::{class_losses, ModelSpec};
use crate::rng::derive_rng;
use crate::trainer::{checkpoint_pair_stream, SamplingSchedule, TrainerState};

pub use io::{decode_counts, encode_counts, read_counts, write_counts, write_csv, MATRIX_MAGIC, MATRIX_VERSION};
pub use score::{get_score, ScoreArray, SideValues, SignScore};

pub const DEFAULT_EPS_ZERO: f64 = 1e-12;

/// One row of the four accumulator planes.
type RowPlanes<'r> = (&'r mut [i64], &'r mut [u64], &'r mut [u64], &'r mut [u64]);

const TAG_BATCH_DRAW: u64 = 0x4241_5443;

/// Integer accumulators over an `a_len × b_len × classes` grid
/// (`classes == 1` for the pairwise matrix). Cell `(a, b, c)` lives at
/// `(a * b_len + b) * classes + c`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Counts {
    pub a_len: usize,
    pub b_len: usize,
    pub classes: usize,
    /// Checkpoint pairs consumed.
    pub trials: u64,
    /// Sum of sign products; always `pos - neg`.
    pub score: Vec<i64>,
    pub pos: Vec<u64>,
    pub neg: Vec<u64>,
    pub zero: Vec<u64>,
}

impl Counts {
    pub fn new(a_len: usize, b_len: usize, classes: usize) -> Self {
        let n = a_len * b_len * classes;
        Counts {
            a_len,
            b_len,
            classes,
            trials: 0,
            score: vec![0; n],
            pos: vec![0; n],
            neg: vec![0; n],
            zero: vec![0; n],
        }
    }

    pub fn cells(&self) -> usize {
        self.score.len()
    }

    pub fn index(&self, a: usize, b: usize, c: usize) -> usize {
        debug_assert!(a < self.a_len && b < self.b_len && c < self.classes);
        (a * self.b_len + b) * self.classes + c
    }

    pub fn observations(&self, cell: usize) -> u64 {
        self.pos[cell] + self.neg[cell] + self.zero[cell]
    }

    /// Adds `scores` (shaped `ia.len() × ib.len() × classes`) into the cells
    /// `ia × ib`. Indices within `ia` (and within `ib`) must be distinct.
    pub fn accumulate(&mut self, ia: &[usize], ib: &[usize], scores: &ScoreArray) -> Result<()> {
        if scores.a_len() != ia.len() || scores.b_len() != ib.len() || scores.classes() != self.classes {
            return Err(Error::arg(format!(
                "score array {}x{}x{} does not fit index sets {}x{} with class extent {}",
                scores.a_len(),
                scores.b_len(),
                scores.classes(),
                ia.len(),
                ib.len(),
                self.classes
            )));
        }
        if ia.iter().any(|&a| a >= self.a_len) || ib.iter().any(|&b| b >= self.b_len) {
            return Err(Error::arg("score index out of range"));
        }
        let row = self.b_len * self.classes;
        let classes = self.classes;
        let values = scores.values();
        let dense_rows = ia.len() == self.a_len && ia.iter().enumerate().all(|(i, &a)| i == a);
        let update = |(i, (score, pos, neg, zero)): (usize, RowPlanes)| {
            for (j, &b) in ib.iter().enumerate() {
                for c in 0..classes {
                    let s = values[(i * ib.len() + j) * classes + c];
                    let cell = b * classes + c;
                    score[cell] += s.value() as i64;
                    match s {
                        SignScore::POS => pos[cell] += 1,
                        SignScore::NEG => neg[cell] += 1,
                        _ => zero[cell] += 1,
                    }
                }
            }
        };
        if dense_rows {
            (
                self.score.par_chunks_mut(row),
                self.pos.par_chunks_mut(row),
                self.neg.par_chunks_mut(row),
                self.zero.par_chunks_mut(row),
            )
                .into_par_iter()
                .enumerate()
                .for_each(update);
        } else {
            for (i, &a) in ia.iter().enumerate() {
                let r = a * row..(a + 1) * row;
                update((
                    i,
                    (
                        &mut self.score[r.clone()],
                        &mut self.pos[r.clone()],
                        &mut self.neg[r.clone()],
                        &mut self.zero[r],
                    ),
                ));
            }
        }
        Ok(())
    }

    /// Checks `score = pos − neg` and `|score| ≤ observations` everywhere.
    pub fn check_invariants(&self) -> Result<()> {
        for cell in 0..self.cells() {
            let s = self.score[cell];
            if s != self.pos[cell] as i64 - self.neg[cell] as i64 || s.unsigned_abs() > self.observations(cell) {
                return Err(Error::format(format!("accumulator invariant broken at cell {cell}")));
            }
        }
        Ok(())
    }

    /// Multiplies every accumulator by `k`.
    pub fn scaled(&self, k: u64) -> Counts {
        Counts {
            score: self.score.iter().map(|&s| s * k as i64).collect(),
            pos: self.pos.iter().map(|&v| v * k).collect(),
            neg: self.neg.iter().map(|&v| v * k).collect(),
            zero: self.zero.iter().map(|&v| v * k).collect(),
            ..self.clone()
        }
    }
}

/// The pairwise cohesive-degree matrix over `A × B`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CohesionMatrix2D {
    pub counts: Counts,
}

impl CohesionMatrix2D {
    pub fn new(a_len: usize, b_len: usize) -> Self {
        CohesionMatrix2D {
            counts: Counts::new(a_len, b_len, 1),
        }
    }

    pub fn a_len(&self) -> usize {
        self.counts.a_len
    }

    pub fn b_len(&self) -> usize {
        self.counts.b_len
    }

    pub fn score(&self, a: usize, b: usize) -> i64 {
        self.counts.score[self.counts.index(a, b, 0)]
    }

    pub fn observations(&self, a: usize, b: usize) -> u64 {
        self.counts.observations(self.counts.index(a, b, 0))
    }

    pub fn support(&self, a: usize, b: usize) -> u64 {
        let i = self.counts.index(a, b, 0);
        self.counts.pos[i] + self.counts.neg[i]
    }
}

/// The per-class cohesive-degree tensor over `A × B × classes`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CohesionTensor3D {
    pub counts: Counts,
}

impl CohesionTensor3D {
    pub fn new(a_len: usize, b_len: usize, classes: usize) -> Self {
        CohesionTensor3D {
            counts: Counts::new(a_len, b_len, classes),
        }
    }

    pub fn classes(&self) -> usize {
        self.counts.classes
    }

    pub fn score(&self, a: usize, b: usize, c: usize) -> i64 {
        self.counts.score[self.counts.index(a, b, c)]
    }

    pub fn support(&self, a: usize, b: usize, c: usize) -> u64 {
        let i = self.counts.index(a, b, c);
        self.counts.pos[i] + self.counts.neg[i]
    }

    /// The `A × B` matrix of one class.
    pub fn class_slice(&self, c: usize) -> Result<CohesionMatrix2D> {
        if c >= self.classes() {
            return Err(Error::arg(format!("class {c} out of range")));
        }
        let k = self.classes();
        let pick = |v: &Vec<u64>| v.iter().skip(c).step_by(k).copied().collect::<Vec<_>>();
        Ok(CohesionMatrix2D {
            counts: Counts {
                a_len: self.counts.a_len,
                b_len: self.counts.b_len,
                classes: 1,
                trials: self.counts.trials,
                score: self.counts.score.iter().skip(c).step_by(k).copied().collect(),
                pos: pick(&self.counts.pos),
                neg: pick(&self.counts.neg),
                zero: pick(&self.counts.zero),
            },
        })
    }
}

/// Empirical probability that a pair's losses move together:
/// `pos / (pos + neg)`, undefined where no non-zero observation exists.
#[derive(Debug, Clone, PartialEq)]
pub struct AgreementMatrix {
    pub a_len: usize,
    pub b_len: usize,
    pub p_hat: Vec<Option<f64>>,
    pub support: Vec<u64>,
}

impl AgreementMatrix {
    pub fn get(&self, a: usize, b: usize) -> Option<f64> {
        self.p_hat[a * self.b_len + b]
    }

    pub fn support_at(&self, a: usize, b: usize) -> u64 {
        self.support[a * self.b_len + b]
    }
}

pub fn agreement(m: &CohesionMatrix2D) -> AgreementMatrix {
    let c = &m.counts;
    let support: Vec<u64> = c.pos.iter().zip(&c.neg).map(|(p, n)| p + n).collect();
    let p_hat = c
        .pos
        .iter()
        .zip(&support)
        .map(|(&p, &s)| (s > 0).then(|| p as f64 / s as f64))
        .collect();
    AgreementMatrix {
        a_len: c.a_len,
        b_len: c.b_len,
        p_hat,
        support,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplingMode {
    /// Every cell observed once per checkpoint pair.
    #[default]
    Dense,
    /// `inner_iters` random `batch_a × batch_b` sub-blocks per checkpoint pair.
    Batch,
}

/// Which side of Algorithm 2 contributes per-class values instead of
/// labeled losses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UnconditionalSide {
    /// B (test) contributes per-class values; no test label is read.
    #[default]
    Test,
    /// A (train) contributes per-class values; B contributes labeled losses.
    Train,
}

/// The per-class value tracked on the unlabeled side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClassSignal {
    /// Raw network output of each class.
    Logit,
    /// Cross-entropy the sample would have if its label were each class.
    #[default]
    ClassLoss,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub trials: usize,
    pub mode: SamplingMode,
    pub batch_a: usize,
    pub batch_b: usize,
    /// Sub-block draws per checkpoint pair in batch mode; `None` means
    /// `|A| · |B|`.
    pub inner_iters: Option<usize>,
    pub eps_zero: f64,
    pub side: UnconditionalSide,
    pub class_signal: ClassSignal,
    /// Seed of the batch-mode index draws.
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            trials: 30,
            mode: SamplingMode::Dense,
            batch_a: 64,
            batch_b: 64,
            inner_iters: None,
            eps_zero: DEFAULT_EPS_ZERO,
            side: UnconditionalSide::Test,
            class_signal: ClassSignal::ClassLoss,
            seed: 0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self, a_len: usize, b_len: usize) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::arg("trials must be at least 1"));
        }
        if !(self.eps_zero.is_finite() && self.eps_zero >= 0.0) {
            return Err(Error::arg("eps_zero must be a non-negative number"));
        }
        if a_len == 0 || b_len == 0 {
            return Err(Error::arg("cohesion needs non-empty A and B"));
        }
        if self.mode == SamplingMode::Batch {
            if self.batch_a == 0 || self.batch_a > a_len || self.batch_b == 0 || self.batch_b > b_len {
                return Err(Error::arg(format!(
                    "batch sizes {}x{} must lie within 1..={a_len} x 1..={b_len}",
                    self.batch_a, self.batch_b
                )));
            }
            if self.inner_iters == Some(0) {
                return Err(Error::arg("inner_iters must be at least 1"));
            }
        }
        Ok(())
    }
}

/// Generator of the batch-mode sub-block draws. Every trial replays the same
/// sequence, so each cell has one observation multiplicity shared by all
/// trials and batch-mode counts are that multiplicity times the dense
/// counts.
pub fn batch_draw_rng(seed: u64) -> rand_chacha::ChaCha8Rng {
    derive_rng(seed, &[TAG_BATCH_DRAW])
}

/// Uniform without-replacement draws of `batch_a` positions of `a` and
/// `batch_b` of `b`, returned with the selected samples.
pub fn sampling_batch<R: Rng + ?Sized>(
    a: &LabeledSet,
    b: &LabeledSet,
    batch_a: usize,
    batch_b: usize,
    rng: &mut R,
) -> Result<(LabeledSet, LabeledSet, Vec<usize>, Vec<usize>)> {
    if batch_a == 0 || batch_a > a.len() || batch_b == 0 || batch_b > b.len() {
        return Err(Error::arg(format!(
            "batch {batch_a}x{batch_b} does not fit sets of {} and {}",
            a.len(),
            b.len()
        )));
    }
    let ia = rand::seq::index::sample(rng, a.len(), batch_a).into_vec();
    let ib = rand::seq::index::sample(rng, b.len(), batch_b).into_vec();
    Ok((a.select(&ia)?, b.select(&ib)?, ia, ib))
}

/// What one side contributes at one checkpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SideKind {
    Loss,
    PerClass(ClassSignal),
}

fn side_values(spec: &ModelSpec, ck: &Checkpoint, set: &LabeledSet, kind: SideKind) -> Result<SideValues> {
    match kind {
        SideKind::Loss => Ok(SideValues::PerSample(
            spec.per_sample_losses(&ck.params, set.samples())?,
        )),
        SideKind::PerClass(signal) => {
            let logits = spec.forward_batch(&ck.params, set.samples())?;
            let classes = spec.classes;
            let mut values = Vec::with_capacity(logits.len() * classes);
            for z in &logits {
                match signal {
                    ClassSignal::Logit => values.extend_from_slice(&z.0),
                    ClassSignal::ClassLoss => values.extend(class_losses(z)),
                }
            }
            Ok(SideValues::PerClass {
                rows: logits.len(),
                classes,
                values,
            })
        }
    }
}

/// Accumulates cohesion over a stream of checkpoint pairs.
pub struct Sampler<'a> {
    spec: &'a ModelSpec,
    a: &'a LabeledSet,
    b: &'a LabeledSet,
    config: &'a SamplerConfig,
}

impl<'a> Sampler<'a> {
    pub fn new(spec: &'a ModelSpec, a: &'a LabeledSet, b: &'a LabeledSet, config: &'a SamplerConfig) -> Result<Self> {
        config.validate(a.len(), b.len())?;
        Ok(Sampler { spec, a, b, config })
    }

    /// Labeled losses on both sides.
    pub fn pairwise<I>(&self, pairs: I) -> Result<CohesionMatrix2D>
    where
        I: IntoIterator<Item = Result<(Arc<Checkpoint>, Arc<Checkpoint>)>>,
    {
        let counts = self.run(pairs, SideKind::Loss, SideKind::Loss, 1)?;
        Ok(CohesionMatrix2D { counts })
    }

    /// Per-class values on the `side` chosen in the config, labeled losses
    /// on the other.
    pub fn unconditional<I>(&self, pairs: I) -> Result<CohesionTensor3D>
    where
        I: IntoIterator<Item = Result<(Arc<Checkpoint>, Arc<Checkpoint>)>>,
    {
        let per_class = SideKind::PerClass(self.config.class_signal);
        let (ka, kb) = match self.config.side {
            UnconditionalSide::Test => (SideKind::Loss, per_class),
            UnconditionalSide::Train => (per_class, SideKind::Loss),
        };
        let counts = self.run(pairs, ka, kb, self.spec.classes)?;
        Ok(CohesionTensor3D { counts })
    }

    fn run<I>(&self, pairs: I, ka: SideKind, kb: SideKind, classes: usize) -> Result<Counts>
    where
        I: IntoIterator<Item = Result<(Arc<Checkpoint>, Arc<Checkpoint>)>>,
    {
        let cfg = self.config;
        let mut counts = Counts::new(self.a.len(), self.b.len(), classes);
        let all_a: Vec<usize> = (0..self.a.len()).collect();
        let all_b: Vec<usize> = (0..self.b.len()).collect();
        for pair in pairs {
            let (ck0, ck1) = pair?;
            let a0 = side_values(self.spec, &ck0, self.a, ka)?;
            let a1 = side_values(self.spec, &ck1, self.a, ka)?;
            let b0 = side_values(self.spec, &ck0, self.b, kb)?;
            let b1 = side_values(self.spec, &ck1, self.b, kb)?;
            match cfg.mode {
                SamplingMode::Dense => {
                    let s = get_score(&a0, &a1, &b0, &b1, cfg.eps_zero)?;
                    counts.accumulate(&all_a, &all_b, &s)?;
                }
                SamplingMode::Batch => {
                    let iters = cfg.inner_iters.unwrap_or(self.a.len() * self.b.len());
                    let mut rng = batch_draw_rng(cfg.seed);
                    for _ in 0..iters {
                        let (_, _, ia, ib) = sampling_batch(self.a, self.b, cfg.batch_a, cfg.batch_b, &mut rng)?;
                        let s = get_score(
                            &a0.select(&ia),
                            &a1.select(&ia),
                            &b0.select(&ib),
                            &b1.select(&ib),
                            cfg.eps_zero,
                        )?;
                        counts.accumulate(&ia, &ib, &s)?;
                    }
                }
            }
            counts.trials += 1;
        }
        Ok(counts)
    }
}

/// Algorithm 1 end to end: continues `state` for `config.trials` steps at
/// the schedule's learning rate and accumulates pairwise cohesion.
pub fn sample_cohesion(
    spec: &ModelSpec,
    state: &TrainerState,
    train: &LabeledSet,
    a: &LabeledSet,
    b: &LabeledSet,
    schedule: SamplingSchedule,
    config: &SamplerConfig,
) -> Result<CohesionMatrix2D> {
    let sampler = Sampler::new(spec, a, b, config)?;
    let pairs = checkpoint_pair_stream(spec, state.clone(), train, schedule, config.trials)?;
    sampler.pairwise(pairs)
}

/// Algorithm 2 end to end; see [`Sampler::unconditional`].
pub fn sample_cohesion_unconditional(
    spec: &ModelSpec,
    state: &TrainerState,
    train: &LabeledSet,
    a: &LabeledSet,
    b: &LabeledSet,
    schedule: SamplingSchedule,
    config: &SamplerConfig,
) -> Result<CohesionTensor3D> {
    let sampler = Sampler::new(spec, a, b, config)?;
    let pairs = checkpoint_pair_stream(spec, state.clone(), train, schedule, config.trials)?;
    sampler.unconditional(pairs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Sample;

    #[test]
    fn agreement_rules() {
        let mut m = CohesionMatrix2D::new(1, 3);
        m.counts.pos = vec![30, 7, 0];
        m.counts.neg = vec![0, 7, 0];
        m.counts.zero = vec![0, 0, 30];
        m.counts.score = vec![30, 0, 0];
        let agr = agreement(&m);
        assert_eq!(agr.p_hat, vec![Some(1.0), Some(0.5), None]);
        assert_eq!(agr.support, vec![30, 14, 0]);
    }

    #[test]
    fn sampling_batch_full_is_permutation() {
        let set = LabeledSet::new((0..9).map(|i| Sample::new(vec![i as f64], i % 3)).collect(), 1, 3).unwrap();
        let mut rng = derive_rng(1, &[]);
        let (a0, _, mut ia, mut ib) = sampling_batch(&set, &set, 9, 9, &mut rng).unwrap();
        assert_eq!(a0.samples()[0], set.samples()[ia[0]]);
        ia.sort();
        ib.sort();
        assert_eq!(ia, (0..9).collect::<Vec<_>>());
        assert_eq!(ib, ia);

        let (_, b0, _, ib) = sampling_batch(&set, &set, 2, 1, &mut rng).unwrap();
        assert_eq!(ib.len(), 1);
        assert!(ib[0] < 9);
        assert_eq!(b0.samples()[0], set.samples()[ib[0]]);

        let draw = |seed| sampling_batch(&set, &set, 4, 3, &mut derive_rng(seed, &[])).unwrap().2;
        assert_eq!(draw(5), draw(5));
        assert!(sampling_batch(&set, &set, 10, 1, &mut rng).is_err());
        assert!(sampling_batch(&set, &set, 1, 0, &mut rng).is_err());
    }

    #[test]
    fn class_slice_extracts_plane() {
        let mut t = CohesionTensor3D::new(2, 2, 3);
        for (i, v) in t.counts.score.iter_mut().enumerate() {
            *v = i as i64;
        }
        let s = t.class_slice(1).unwrap();
        assert_eq!(s.counts.score, vec![1, 4, 7, 10]);
        assert!(t.class_slice(3).is_err());
    }

    #[test]
    fn accumulate_rejects_bad_shapes() {
        let mut c = Counts::new(2, 2, 1);
        let s = get_score(
            &SideValues::PerSample(vec![1.0]),
            &SideValues::PerSample(vec![0.0]),
            &SideValues::PerSample(vec![1.0]),
            &SideValues::PerSample(vec![0.0]),
            0.0,
        )
        .unwrap();
        assert!(c.accumulate(&[0, 1], &[0], &s).is_err());
        assert!(c.accumulate(&[2], &[0], &s).is_err());
        c.accumulate(&[1], &[0], &s).unwrap();
        assert_eq!(c.score, vec![0, 0, 1, 0]);
    }
}

//! The four pipeline stages. Stages communicate only through files in the
//! output directory:
//!
//! ```text
//! config.toml        effective configuration (written by prepare)
//! manifest.json      seeds, model, split indices and data fingerprints
//! model.ckpt         trained parameters and momentum buffer
//! run_log.jsonl      one {step, epoch, batch_risk} record per epoch
//! train.json         initial and final training risk
//! alg1.cohesion      pairwise cohesion between A and B   (+ .csv)
//! alg2.cohesion      per-class cohesion between A and B  (+ .csv)
//! union.cohesion     pairwise cohesion within A ∪ B      (+ .csv)
//! report.json        accuracies, predictions and groups
//! report.txt         the same in aligned columns
//! ```

use std::path::{Path, PathBuf};

use cohesive::analysis::{
    argmax_baseline, chance_pure_fraction, cohesion_classify, cohesion_classify_unconditional, extract_groups,
    find_generative_groups, pure_group_fraction, render_accuracy_table, render_groups, AccuracyRow, Group, GroupReport,
    PredictionReport,
};
use cohesive::checkpoint::Checkpoint;
use cohesive::cohesion::{
    agreement, read_counts, sample_cohesion, sample_cohesion_unconditional, write_counts, write_csv, CohesionMatrix2D,
    CohesionTensor3D, Counts,
};
use cohesive::dataset::{
    gen_synthetic, load_cifar10_raw, make_splits, stratified_indices, ChannelStats, Cifar10Side, DatasetBundle,
    LabeledSet, SplitIndices, CIFAR_CLASSES,
};
use cohesive::model::ModelSpec;
use cohesive::rng::derive_seed;
use cohesive::trainer::{steps_per_epoch, train, OptimConfig, RunRecord, SamplingSchedule, TrainerState};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{DataConfig, ExperimentConfig, Seeds};
use crate::error::{CliError, Context, Result};

pub const CONFIG_FILE: &str = "config.toml";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const RUN_LOG_FILE: &str = "run_log.jsonl";
pub const TRAIN_SUMMARY_FILE: &str = "train.json";
pub const ALG1_MATRIX: &str = "alg1";
pub const ALG2_MATRIX: &str = "alg2";
pub const UNION_MATRIX: &str = "union";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TEXT: &str = "report.txt";

/// A configuration bound to an output directory.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub out: PathBuf,
    pub quiet: bool,
}

impl Experiment {
    pub fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    pub fn matrix_path(&self, name: &str) -> PathBuf {
        self.out.join(format!("{name}.cohesion"))
    }

    fn note(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("{}", msg.as_ref());
        }
    }
}

/// Copy of the config as stored in an output directory: data paths made
/// absolute and the output location dropped, so the file does not depend on
/// where the experiment was launched from.
pub fn normalized_config(cfg: &ExperimentConfig, base: &Path) -> Result<ExperimentConfig> {
    let mut out = cfg.clone();
    out.out_dir = None;
    if let Some(dir) = cfg.data_dir(base) {
        let abs = std::path::absolute(&dir).map_err(|e| CliError::io(&dir, e))?;
        if let DataConfig::Cifar10 { path, .. } = &mut out.data {
            *path = abs;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSizes {
    pub retain_train: usize,
    pub compact_train: usize,
    pub retain_test: usize,
    pub compact_test: usize,
}

/// Everything needed to rebuild the exact data bundle of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub source: String,
    pub classes: usize,
    pub dim: usize,
    pub seeds: Seeds,
    pub model: ModelSpec,
    pub parameters: usize,
    /// Positions in the original training side, when a subset is used.
    pub train_pool: Option<Vec<usize>>,
    pub test_pool: Option<Vec<usize>>,
    pub sizes: SplitSizes,
    pub split: SplitIndices,
    /// SHA-256 of labels and features of each split, in split order.
    pub fingerprints: [String; 4],
}

struct SourceData {
    train: LabeledSet,
    test: LabeledSet,
    train_pool: Option<Vec<usize>>,
    test_pool: Option<Vec<usize>>,
}

fn load_source(cfg: &ExperimentConfig, seeds: &Seeds) -> Result<SourceData> {
    match &cfg.data {
        DataConfig::Synthetic {
            classes,
            dim,
            train_per_class,
            test_per_class,
            separation,
            seed,
        } => {
            let all = gen_synthetic(*classes, *dim, train_per_class + test_per_class, *separation, *seed)
                .context("generating synthetic data")?;
            // samples are interleaved by class, so a prefix is balanced
            let cut = classes * train_per_class;
            let train = all
                .select(&(0..cut).collect::<Vec<_>>())
                .context("splitting synthetic data")?;
            let test = all
                .select(&(cut..all.len()).collect::<Vec<_>>())
                .context("splitting synthetic data")?;
            Ok(SourceData {
                train,
                test,
                train_pool: None,
                test_pool: None,
            })
        }
        DataConfig::Cifar10 {
            path,
            train_subset,
            test_subset,
        } => {
            if !path.is_dir() {
                return Err(CliError::io(
                    path,
                    std::io::Error::new(std::io::ErrorKind::NotFound, "CIFAR-10 directory not found"),
                ));
            }
            let raw_train = load_cifar10_raw(path, Cifar10Side::Train).context("loading CIFAR-10")?;
            let stats = ChannelStats::from_images(&raw_train).context("CIFAR-10 statistics")?;
            let pool =
                |raw: &cohesive::dataset::RawImages, k: Option<usize>, seed: u64| -> Result<Option<Vec<usize>>> {
                    k.map(|k| {
                        let labels: Vec<usize> = raw.labels.iter().map(|&y| y as usize).collect();
                        stratified_indices(&labels, CIFAR_CLASSES, k, seed).context("CIFAR-10 subset")
                    })
                    .transpose()
                };
            let train_pool = pool(&raw_train, *train_subset, derive_seed(seeds.subset, &[0]))?;
            let train = raw_train
                .to_labeled_set(&stats, train_pool.as_deref())
                .context("decoding CIFAR-10")?;
            drop(raw_train);
            let raw_test = load_cifar10_raw(path, Cifar10Side::Test).context("loading CIFAR-10")?;
            let test_pool = pool(&raw_test, *test_subset, derive_seed(seeds.subset, &[1]))?;
            let test = raw_test
                .to_labeled_set(&stats, test_pool.as_deref())
                .context("decoding CIFAR-10")?;
            Ok(SourceData {
                train,
                test,
                train_pool,
                test_pool,
            })
        }
    }
}

fn fingerprint(set: &LabeledSet) -> String {
    let mut h = Sha256::new();
    for s in set.samples() {
        h.update((s.label as u64).to_le_bytes());
        for v in s.features.iter() {
            h.update(v.to_le_bytes());
        }
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

fn bundle_fingerprints(b: &DatasetBundle) -> [String; 4] {
    [
        fingerprint(&b.retain_train),
        fingerprint(&b.compact_train),
        fingerprint(&b.retain_test),
        fingerprint(&b.compact_test),
    ]
}

fn source_name(cfg: &ExperimentConfig) -> &'static str {
    match cfg.data {
        DataConfig::Cifar10 { .. } => "cifar10",
        DataConfig::Synthetic { .. } => "synthetic",
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    std::fs::write(&tmp, bytes).map_err(|e| CliError::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Core {
        context: format!("reading {}", path.display()),
        source: cohesive::Error::Format(e.to_string()),
    })
}

/// Loads or generates the data, splits it, and records the split.
pub fn cmd_prepare(exp: &Experiment) -> Result<Manifest> {
    let cfg = &exp.config;
    cfg.validate()?;
    std::fs::create_dir_all(&exp.out).map_err(|e| CliError::io(&exp.out, e))?;
    let seeds = cfg.seeds();
    let src = load_source(cfg, &seeds)?;
    let bundle = make_splits(&src.train, &src.test, cfg.split.compact_size, seeds.split).context("splitting data")?;
    let model = cfg.model_spec(src.train.dim(), src.train.classes())?;
    let manifest = Manifest {
        source: source_name(cfg).to_string(),
        classes: src.train.classes(),
        dim: src.train.dim(),
        parameters: model.param_count(),
        model,
        seeds,
        train_pool: src.train_pool,
        test_pool: src.test_pool,
        sizes: SplitSizes {
            retain_train: bundle.retain_train.len(),
            compact_train: bundle.compact_train.len(),
            retain_test: bundle.retain_test.len(),
            compact_test: bundle.compact_test.len(),
        },
        fingerprints: bundle_fingerprints(&bundle),
        split: bundle.indices,
    };
    write_atomic(&exp.path(CONFIG_FILE), cfg.to_toml().as_bytes())?;
    write_json(&exp.path(MANIFEST_FILE), &manifest)?;
    let s = &manifest.sizes;
    exp.note(format!(
        "prepare: {} data, retain/compact train {}/{}, retain/compact test {}/{}",
        manifest.source, s.retain_train, s.compact_train, s.retain_test, s.compact_test
    ));
    Ok(manifest)
}

/// The prepared data of an output directory, checked against the manifest.
pub struct Prepared {
    pub manifest: Manifest,
    pub bundle: DatasetBundle,
    pub spec: ModelSpec,
}

pub fn load_prepared(exp: &Experiment) -> Result<Prepared> {
    let cfg = &exp.config;
    let manifest: Manifest = read_json(&exp.path(MANIFEST_FILE))?;
    let seeds = cfg.seeds();
    if manifest.seeds != seeds {
        return Err(CliError::config(
            "seeds differ from the prepared manifest; rerun prepare",
        ));
    }
    let src = load_source(cfg, &seeds)?;
    if src.train_pool != manifest.train_pool || src.test_pool != manifest.test_pool {
        return Err(CliError::config(
            "data subset differs from the prepared manifest; rerun prepare",
        ));
    }
    let bundle = DatasetBundle::from_indices(&src.train, &src.test, manifest.split.clone(), seeds.split)
        .context("rebuilding the split")?;
    if bundle_fingerprints(&bundle) != manifest.fingerprints {
        return Err(CliError::Core {
            context: "rebuilding the split".into(),
            source: cohesive::Error::Format("data differs from the prepared manifest".into()),
        });
    }
    let spec = cfg.model_spec(manifest.dim, manifest.classes)?;
    if spec != manifest.model {
        return Err(CliError::config(
            "model differs from the prepared manifest; rerun prepare",
        ));
    }
    Ok(Prepared { manifest, bundle, spec })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub steps: u64,
    pub epochs: usize,
    pub steps_per_epoch: usize,
    /// Mean loss over the full training side at the initial parameters.
    pub initial_risk: f64,
    pub final_risk: f64,
}

fn total_steps(optim: &OptimConfig, n: usize) -> u64 {
    (optim.epochs * steps_per_epoch(n, optim.batch_size)) as u64
}

/// Trains the model, checkpointing after every epoch. Resumes from an
/// existing checkpoint.
pub fn cmd_train(exp: &Experiment) -> Result<TrainSummary> {
    let Prepared { bundle, spec, manifest } = load_prepared(exp)?;
    let data = bundle.full_train();
    let optim = exp.config.optim();
    let per_epoch = steps_per_epoch(data.len(), optim.batch_size);
    let total = total_steps(&optim, data.len());
    let init = spec.init(manifest.seeds.init).context("initializing the model")?;
    let initial_risk = spec.batch_risk(&init, data.samples()).context("initial risk")?;

    let ckpt_path = exp.path(CHECKPOINT_FILE);
    let log_path = exp.path(RUN_LOG_FILE);
    let mut state = if ckpt_path.exists() {
        let ck = Checkpoint::read(&ckpt_path, &spec).context("reading the checkpoint")?;
        TrainerState::from_checkpoint(&ck)
    } else {
        TrainerState::new(init)
    };
    if state.step > total {
        return Err(CliError::config(format!(
            "checkpoint is at step {} beyond the configured {total} steps",
            state.step
        )));
    }
    // keep only the log records the checkpoint covers
    let mut log: Vec<RunRecord> = if state.step > 0 && log_path.exists() {
        let text = std::fs::read_to_string(&log_path).map_err(|e| CliError::io(&log_path, e))?;
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                serde_json::from_str::<RunRecord>(l).map_err(|e| CliError::Core {
                    context: format!("reading {}", log_path.display()),
                    source: cohesive::Error::Format(e.to_string()),
                })
            })
            .filter(|r| r.as_ref().map_or(true, |r| r.step <= state.step))
            .collect::<Result<_>>()?
    } else {
        Vec::new()
    };
    if state.step > 0 {
        exp.note(format!("train: resuming at step {}", state.step));
    }

    let first_epoch = (state.step / per_epoch as u64) as usize + 1;
    for epoch in first_epoch..=optim.epochs {
        let upto = OptimConfig {
            epochs: epoch,
            ..optim.clone()
        };
        state = train(&spec, &data, &upto, state, |r| log.push(r.clone())).context("training")?;
        write_atomic(&ckpt_path, &state.to_checkpoint(true).encode(&spec))?;
        let mut lines = String::new();
        for r in &log {
            lines.push_str(&serde_json::to_string(r).expect("serializable"));
            lines.push('\n');
        }
        write_atomic(&log_path, lines.as_bytes())?;
        if let Some(r) = log.last() {
            exp.note(format!(
                "train: epoch {}/{} mean batch risk {:.5}",
                r.epoch + 1,
                optim.epochs,
                r.batch_risk
            ));
        }
    }
    let final_risk = spec.batch_risk(&state.params, data.samples()).context("final risk")?;
    let summary = TrainSummary {
        steps: state.step,
        epochs: optim.epochs,
        steps_per_epoch: per_epoch,
        initial_risk,
        final_risk,
    };
    write_json(&exp.path(TRAIN_SUMMARY_FILE), &summary)?;
    exp.note(format!(
        "train: risk {initial_risk:.5} -> {final_risk:.5} after {} steps",
        state.step
    ));
    Ok(summary)
}

fn trained_state(exp: &Experiment, spec: &ModelSpec, n_train: usize) -> Result<TrainerState> {
    let ckpt_path = exp.path(CHECKPOINT_FILE);
    let ck = Checkpoint::read(&ckpt_path, spec).context("reading the checkpoint")?;
    let total = total_steps(&exp.config.optim(), n_train);
    if ck.step != total {
        return Err(CliError::config(format!(
            "training is incomplete ({} of {total} steps); run train first",
            ck.step
        )));
    }
    Ok(TrainerState::from_checkpoint(&ck))
}

fn save_matrix(exp: &Experiment, name: &str, counts: &Counts) -> Result<()> {
    write_counts(&exp.matrix_path(name), counts).context("writing a matrix")?;
    if exp.config.sampling.write_csv {
        write_csv(&exp.path(&format!("{name}.csv")), counts).context("writing a matrix")?;
    }
    Ok(())
}

/// Samples the pairwise (Algorithm 1), per-class (Algorithm 2) and, when
/// groups are enabled, union cohesion matrices.
pub fn cmd_cohesion(exp: &Experiment) -> Result<()> {
    let Prepared { bundle, spec, manifest } = load_prepared(exp)?;
    let train_set = bundle.full_train();
    let state = trained_state(exp, &spec, train_set.len())?;
    let s = &exp.config.sampling;
    let mut schedule = SamplingSchedule::from_optim(
        &exp.config.optim(),
        s.learning_rate,
        s.momentum,
        manifest.seeds.sampling,
    );
    if let Some(wd) = s.weight_decay {
        schedule.weight_decay = wd;
    }
    let sampler = exp.config.sampler();
    let (a, b) = (&bundle.compact_train, &bundle.compact_test);

    let m = sample_cohesion(&spec, &state, &train_set, a, b, schedule, &sampler).context("algorithm 1")?;
    save_matrix(exp, ALG1_MATRIX, &m.counts)?;
    exp.note(format!(
        "cohesion: algorithm 1 {}x{} over {} trials",
        a.len(),
        b.len(),
        m.counts.trials
    ));

    let t =
        sample_cohesion_unconditional(&spec, &state, &train_set, a, b, schedule, &sampler).context("algorithm 2")?;
    save_matrix(exp, ALG2_MATRIX, &t.counts)?;
    exp.note(format!("cohesion: algorithm 2 {}x{}x{}", a.len(), b.len(), t.classes()));

    if exp.config.groups.enabled {
        let union = a.concat(b).context("building A ∪ B")?;
        let u =
            sample_cohesion(&spec, &state, &train_set, &union, &union, schedule, &sampler).context("union cohesion")?;
        save_matrix(exp, UNION_MATRIX, &u.counts)?;
        exp.note(format!("cohesion: union {}x{}", union.len(), union.len()));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Member {
    /// Position in A ∪ B (A first).
    pub index: usize,
    /// `A` for the compact training set, `B` for the compact test set.
    pub side: char,
    /// Position within its own compact set.
    pub position: usize,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupEntry {
    pub members: Vec<Member>,
    pub min_p_hat: f64,
    pub min_support: u64,
    pub generative: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSection {
    pub threshold: f64,
    pub min_support: u64,
    pub count: usize,
    pub generative_count: usize,
    /// Fraction of groups whose members share one label.
    pub pure_fraction: f64,
    /// The same fraction expected for random groups of equal sizes.
    pub chance_pure_fraction: f64,
    pub groups: Vec<GroupEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub classes: usize,
    pub chance: f64,
    /// Algorithm 1, Algorithm 2, argmax on the training side, argmax on the
    /// compact test set.
    pub accuracy: Vec<AccuracyRow>,
    /// Fraction of compact-test elements where Algorithm 1 and argmax agree.
    pub alg1_argmax_agreement: f64,
    pub alg1: PredictionReport,
    pub alg2: PredictionReport,
    pub argmax_test: PredictionReport,
    pub groups: Option<GroupSection>,
}

impl Report {
    /// Aligned-column text. `labels` and `sides` are indexed by position in
    /// A ∪ B and are needed only for the group section.
    pub fn render(&self, labels: &[usize], sides: &[char]) -> String {
        let mut s = render_accuracy_table(&self.accuracy);
        s.push_str(&format!(
            "\nchance {:.4}; algorithm 1 agrees with argmax on {:.4} of the compact test set\n",
            self.chance, self.alg1_argmax_agreement
        ));
        if let Some(g) = &self.groups {
            let report = GroupReport {
                threshold: g.threshold,
                min_support: g.min_support,
                groups: g
                    .groups
                    .iter()
                    .map(|e| Group {
                        members: e.members.iter().map(|m| m.index).collect(),
                        min_p_hat: e.min_p_hat,
                        min_support: e.min_support,
                        generative: e.generative,
                    })
                    .collect(),
            };
            s.push('\n');
            s.push_str(&render_groups(&report, labels, sides));
            s.push_str(&format!(
                "generative groups: {}; label-pure fraction {:.4} (chance {:.4})\n",
                g.generative_count, g.pure_fraction, g.chance_pure_fraction
            ));
        }
        s
    }
}

fn read_matrix(exp: &Experiment, name: &str, a: usize, b: usize, classes: usize) -> Result<Counts> {
    let path = exp.matrix_path(name);
    let counts = read_counts(&path).context("reading a matrix")?;
    if counts.a_len == 0 || counts.b_len == 0 || counts.trials == 0 {
        return Err(CliError::Core {
            context: format!("reading {}", path.display()),
            source: cohesive::Error::Argument("the matrix is empty; nothing to report".into()),
        });
    }
    if (counts.a_len, counts.b_len, counts.classes) != (a, b, classes) {
        return Err(CliError::Core {
            context: format!("reading {}", path.display()),
            source: cohesive::Error::Format(format!(
                "matrix is {}x{}x{}, expected {a}x{b}x{classes}",
                counts.a_len, counts.b_len, counts.classes
            )),
        });
    }
    Ok(counts)
}

/// Classifies the compact test set from the matrices, evaluates the argmax
/// baseline, and extracts groups. Nothing is written unless every part
/// succeeds.
pub fn cmd_report(exp: &Experiment) -> Result<Report> {
    let Prepared { bundle, spec, manifest } = load_prepared(exp)?;
    let classes = manifest.classes;
    let (a, b) = (&bundle.compact_train, &bundle.compact_test);
    let (la, lb) = (a.labels(), b.labels());

    let m = CohesionMatrix2D {
        counts: read_matrix(exp, ALG1_MATRIX, a.len(), b.len(), 1)?,
    };
    let t = CohesionTensor3D {
        counts: read_matrix(exp, ALG2_MATRIX, a.len(), b.len(), classes)?,
    };
    let union_counts = if exp.config.groups.enabled {
        let n = a.len() + b.len();
        Some(read_matrix(exp, UNION_MATRIX, n, n, 1)?)
    } else {
        None
    };

    let train_set = bundle.full_train();
    let state = trained_state(exp, &spec, train_set.len())?;
    let alg1 = cohesion_classify(&m, &la, Some(&lb)).context("algorithm 1 classification")?;
    let alg2 = cohesion_classify_unconditional(&t, &la, Some(&lb)).context("algorithm 2 classification")?;
    let argmax_train = argmax_baseline(&spec, &state.params, &train_set).context("argmax on training data")?;
    let argmax_test = argmax_baseline(&spec, &state.params, b).context("argmax on test data")?;
    let agree = alg1
        .predicted_labels()
        .iter()
        .zip(argmax_test.predicted_labels())
        .filter(|(x, y)| **x == *y)
        .count();

    let mut union_labels = la.clone();
    union_labels.extend_from_slice(&lb);
    let sides: Vec<char> = (0..union_labels.len())
        .map(|i| if i < a.len() { 'A' } else { 'B' })
        .collect();
    let groups = match union_counts {
        None => None,
        Some(counts) => {
            let g = &exp.config.groups;
            let membership: Vec<bool> = (0..union_labels.len()).map(|i| i < a.len()).collect();
            let agr = agreement(&CohesionMatrix2D { counts });
            let report = extract_groups(&agr, g.threshold, g.min_support, &membership).context("group extraction")?;
            let generative = find_generative_groups(&report, &membership).context("group extraction")?;
            let member = |i: usize| Member {
                index: i,
                side: sides[i],
                position: if i < a.len() { i } else { i - a.len() },
                label: union_labels[i],
            };
            Some(GroupSection {
                threshold: g.threshold,
                min_support: g.min_support,
                count: report.groups.len(),
                generative_count: generative.groups.len(),
                pure_fraction: pure_group_fraction(&report.groups, &union_labels),
                chance_pure_fraction: chance_pure_fraction(&report.groups, &union_labels),
                groups: report
                    .groups
                    .iter()
                    .map(|grp| GroupEntry {
                        members: grp.members.iter().map(|&i| member(i)).collect(),
                        min_p_hat: grp.min_p_hat,
                        min_support: grp.min_support,
                        generative: grp.generative,
                    })
                    .collect(),
            })
        }
    };

    let report = Report {
        classes,
        chance: 1.0 / classes as f64,
        accuracy: vec![
            AccuracyRow::new("algorithm 1 (cohesion)", "compact test", &alg1),
            AccuracyRow::new("algorithm 2 (unconditional)", "compact test", &alg2),
            AccuracyRow::new("argmax", "training set", &argmax_train),
            AccuracyRow::new("argmax", "compact test", &argmax_test),
        ],
        alg1_argmax_agreement: agree as f64 / b.len() as f64,
        alg1,
        alg2,
        argmax_test,
        groups,
    };
    let text = report.render(&union_labels, &sides);
    write_json(&exp.path(REPORT_JSON), &report)?;
    write_atomic(&exp.path(REPORT_TEXT), text.as_bytes())?;
    exp.note(text.trim_end());
    Ok(report)
}

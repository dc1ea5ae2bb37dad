//! Acceptance suite: one PASS, FAIL or NOT RUN line per criterion.
//!
//! Every check recomputes its expected values with an independent oracle
//! (finite differences, offline recomputation from stored checkpoints,
//! exhaustive clique enumeration) or by rerunning the pipeline. The CIFAR-10
//! reproduction runs only when `CIFAR10_DIR` names a directory holding the
//! binary batches; otherwise it is reported as NOT RUN together with an
//! informational line from a synthetic stand-in that does not count towards
//! the verdict.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use clap::Parser;
use cohesive::analysis::{extract_groups, find_generative_groups};
use cohesive::checkpoint::Checkpoint;
use cohesive::cohesion::{
    agreement, batch_draw_rng, encode_counts, sample_cohesion, sampling_batch, AgreementMatrix, Counts, SamplerConfig,
    SamplingMode,
};
use cohesive::dataset::{gen_synthetic, make_splits, LabeledSet, Sample};
use cohesive::model::{ModelSpec, ParamVector};
use cohesive::trainer::{checkpoint_pair_stream, train, OptimConfig, SamplingSchedule, TrainerState};
use cohesive_cli::pipeline::Report;
use cohesive_cli::{run, Cli};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

enum Outcome {
    Pass(String),
    Fail(String),
    NotRun(String),
}

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(start: Instant, budget: Duration) -> Result<(), String> {
    let took = start.elapsed();
    ensure(took < budget, || {
        format!("took {:.1}s, budget {}s", took.as_secs_f64(), budget.as_secs())
    })
}

fn run_criterion(f: impl FnOnce() -> Check) -> Outcome {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(detail)) => Outcome::Pass(detail),
        Ok(Err(detail)) => Outcome::Fail(detail),
        Err(panic) => {
            let msg = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into());
            Outcome::Fail(format!("panic: {msg}"))
        }
    }
}

// ---------------------------------------------------------------- criterion 1

const FD_STEP: f64 = 1e-5;

fn normal_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

fn shifted(p: &ParamVector, dir: &[f64], h: f64) -> ParamVector {
    let mut q = p.clone();
    for (v, d) in q.values_mut().iter_mut().zip(dir) {
        *v += h * d;
    }
    q
}

/// Largest relative error between the analytic gradient and central
/// differences over `draws` random parameter/batch draws, each probing a
/// random direction and four random coordinates.
fn max_fd_error(spec: &ModelSpec, draws: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..draws {
        let mut params = spec.init(rng.random()).unwrap();
        for v in params.values_mut() {
            *v += 0.05 * rng.sample::<f64, _>(StandardNormal);
        }
        let n = rng.random_range(1..=5);
        let batch: Vec<Sample> = (0..n)
            .map(|_| Sample::new(normal_vec(&mut rng, spec.input_dim), rng.random_range(0..spec.classes)))
            .collect();
        let g = spec.grad(&params, &batch).unwrap();
        let risk = |p: &ParamVector| spec.batch_risk(p, &batch).unwrap();
        let mut dirs = vec![normal_vec(&mut rng, params.len())];
        for _ in 0..4 {
            let mut e = vec![0.0; params.len()];
            e[rng.random_range(0..params.len())] = 1.0;
            dirs.push(e);
        }
        for d in dirs {
            let analytic: f64 = g.values().iter().zip(&d).map(|(a, b)| a * b).sum();
            let numeric =
                (risk(&shifted(&params, &d, FD_STEP)) - risk(&shifted(&params, &d, -FD_STEP))) / (2.0 * FD_STEP);
            let scale = analytic.abs().max(numeric.abs());
            if scale >= 1e-10 {
                worst = worst.max((analytic - numeric).abs() / scale);
            }
        }
    }
    worst
}

fn gradient_correctness() -> Check {
    let start = Instant::now();
    let mut parts = Vec::new();
    for (name, spec, seed) in [
        ("linear", ModelSpec::linear(7, 4), 1),
        ("mlp", ModelSpec::mlp(6, 3, vec![9, 5]), 2),
        ("cnn", ModelSpec::cnn_small(2, 8, 4, 3, 4, 3), 3),
    ] {
        let err = max_fd_error(&spec, 100, seed);
        ensure(err < 1e-4, || format!("{name}: max relative error {err:.2e}"))?;
        parts.push(format!("{name} {err:.1e}"));
    }
    within(start, Duration::from_secs(30))?;
    Ok(format!(
        "max rel err {} in {:.1}s",
        parts.join(", "),
        start.elapsed().as_secs_f64()
    ))
}

// ------------------------------------------------------- criteria 2, 3 and 4

struct Toy {
    spec: ModelSpec,
    train: LabeledSet,
    a: LabeledSet,
    b: LabeledSet,
    state: TrainerState,
    schedule: SamplingSchedule,
}

/// Linear model on four Gaussian blobs with |A| = |B| = 16.
fn toy(seed: u64) -> Toy {
    let all = gen_synthetic(4, 6, 60, 3.0, seed).unwrap();
    let train_set = all.select(&(0..160).collect::<Vec<_>>()).unwrap();
    let test = all.select(&(160..240).collect::<Vec<_>>()).unwrap();
    let a = train_set.select(&(0..16).map(|i| i * 10).collect::<Vec<_>>()).unwrap();
    let b = test.select(&(0..16).map(|i| i * 5).collect::<Vec<_>>()).unwrap();
    let spec = ModelSpec::linear(6, 4);
    let config = OptimConfig {
        epochs: 3,
        batch_size: 32,
        seed,
        ..OptimConfig::default()
    };
    let state = train(
        &spec,
        &train_set,
        &config,
        TrainerState::new(spec.init(seed).unwrap()),
        |_| {},
    )
    .unwrap();
    let schedule = SamplingSchedule::from_optim(&config, 0.001, 0.0, seed + 100);
    Toy {
        spec,
        train: train_set,
        a,
        b,
        state,
        schedule,
    }
}

fn sampler(mode: SamplingMode) -> SamplerConfig {
    SamplerConfig {
        trials: 8,
        mode,
        batch_a: 5,
        batch_b: 7,
        seed: 21,
        ..SamplerConfig::default()
    }
}

fn stored_checkpoints(t: &Toy, trials: usize) -> Vec<Arc<Checkpoint>> {
    let pairs: Vec<_> = checkpoint_pair_stream(&t.spec, t.state.clone(), &t.train, t.schedule, trials)
        .unwrap()
        .collect::<Result<_, _>>()
        .unwrap();
    let mut cks = vec![pairs[0].0.clone()];
    cks.extend(pairs.into_iter().map(|p| p.1));
    cks
}

/// Cross-entropy through the textbook softmax.
fn naive_loss(z: &[f64], y: usize) -> f64 {
    let denom: f64 = z.iter().map(|v| v.exp()).sum();
    -(z[y].exp() / denom).ln()
}

fn losses(t: &Toy, ck: &Checkpoint, set: &LabeledSet) -> Vec<f64> {
    set.samples()
        .iter()
        .map(|s| naive_loss(&t.spec.forward(&ck.params, &s.features).unwrap().0, s.label))
        .collect()
}

fn sign(before: f64, after: f64, eps: f64) -> i64 {
    let d = before - after;
    if d.abs() < eps {
        0
    } else if d > 0.0 {
        1
    } else {
        -1
    }
}

/// Pairwise accumulators recomputed from stored checkpoints.
fn offline(t: &Toy, cfg: &SamplerConfig, cks: &[Arc<Checkpoint>]) -> Counts {
    let nb = t.b.len();
    let mut c = Counts::new(t.a.len(), nb, 1);
    for w in cks.windows(2) {
        let (a0, a1) = (losses(t, &w[0], &t.a), losses(t, &w[1], &t.a));
        let (b0, b1) = (losses(t, &w[0], &t.b), losses(t, &w[1], &t.b));
        let mut observe = |ia: usize, ib: usize| {
            let s = sign(a0[ia], a1[ia], cfg.eps_zero) * sign(b0[ib], b1[ib], cfg.eps_zero);
            let cell = ia * nb + ib;
            c.score[cell] += s;
            match s {
                1 => c.pos[cell] += 1,
                -1 => c.neg[cell] += 1,
                _ => c.zero[cell] += 1,
            }
        };
        match cfg.mode {
            SamplingMode::Dense => {
                for ia in 0..t.a.len() {
                    for ib in 0..nb {
                        observe(ia, ib);
                    }
                }
            }
            SamplingMode::Batch => {
                let mut rng = batch_draw_rng(cfg.seed);
                for _ in 0..cfg.inner_iters.unwrap_or(t.a.len() * nb) {
                    let (_, _, ia, ib) = sampling_batch(&t.a, &t.b, cfg.batch_a, cfg.batch_b, &mut rng).unwrap();
                    for &x in &ia {
                        for &y in &ib {
                            observe(x, y);
                        }
                    }
                }
            }
        }
        c.trials += 1;
    }
    c
}

fn offline_oracle() -> Check {
    let start = Instant::now();
    for seed in [1, 2] {
        let t = toy(seed);
        let cks = stored_checkpoints(&t, 8);
        for mode in [SamplingMode::Dense, SamplingMode::Batch] {
            let cfg = sampler(mode);
            let streamed = sample_cohesion(&t.spec, &t.state, &t.train, &t.a, &t.b, t.schedule, &cfg).unwrap();
            ensure(streamed.counts == offline(&t, &cfg, &cks), || {
                format!("seed {seed} {mode:?}: accumulators differ")
            })?;
        }
    }
    within(start, Duration::from_secs(60))?;
    Ok(format!(
        "dense and batch bit-identical on 2 toy runs in {:.1}s",
        start.elapsed().as_secs_f64()
    ))
}

fn batch_dense_equality() -> Check {
    let start = Instant::now();
    let mut compared = 0;
    for seed in [3, 4, 5] {
        let t = toy(seed);
        let dense = sample_cohesion(
            &t.spec,
            &t.state,
            &t.train,
            &t.a,
            &t.b,
            t.schedule,
            &sampler(SamplingMode::Dense),
        )
        .unwrap();
        let full = SamplerConfig {
            batch_a: 16,
            batch_b: 16,
            inner_iters: Some(1),
            ..sampler(SamplingMode::Batch)
        };
        let single = sample_cohesion(&t.spec, &t.state, &t.train, &t.a, &t.b, t.schedule, &full).unwrap();
        ensure(encode_counts(&single.counts) == encode_counts(&dense.counts), || {
            format!("seed {seed}: full-batch accumulators differ from dense")
        })?;
        let random = SamplerConfig {
            inner_iters: Some(40),
            ..sampler(SamplingMode::Batch)
        };
        let batch = sample_cohesion(&t.spec, &t.state, &t.train, &t.a, &t.b, t.schedule, &random).unwrap();
        let (pd, pb) = (agreement(&dense), agreement(&batch));
        for cell in 0..pd.p_hat.len() {
            if let (Some(x), Some(y)) = (pd.p_hat[cell], pb.p_hat[cell]) {
                ensure(x == y, || format!("seed {seed} cell {cell}: dense {x} vs batch {y}"))?;
                compared += 1;
            }
        }
    }
    within(start, Duration::from_secs(60))?;
    Ok(format!(
        "full batch bit-identical; p_hat equal on {compared} shared cells in {:.1}s",
        start.elapsed().as_secs_f64()
    ))
}

fn self_cohesion() -> Check {
    let mut runs = 0;
    for seed in 0..4 {
        let t0 = toy(seed);
        let copy = LabeledSet::new(vec![t0.a.samples()[2].clone()], 6, 4).unwrap();
        let b = t0.b.concat(&copy).unwrap();
        let t = Toy { b, ..t0 };
        let diag = 2 * t.b.len() + (t.b.len() - 1);
        for mode in [SamplingMode::Dense, SamplingMode::Batch] {
            let cfg = SamplerConfig {
                inner_iters: Some(200),
                ..sampler(mode)
            };
            let m = sample_cohesion(&t.spec, &t.state, &t.train, &t.a, &t.b, t.schedule, &cfg).unwrap();
            let agr = agreement(&m);
            ensure(agr.support[diag] >= 1 && agr.p_hat[diag] == Some(1.0), || {
                format!(
                    "seed {seed} {mode:?}: support {} p_hat {:?}",
                    agr.support[diag], agr.p_hat[diag]
                )
            })?;
            runs += 1;
        }
    }
    Ok(format!("p_hat = 1 on the injected diagonal in {runs} toy runs"))
}

// ---------------------------------------------------------------- criterion 5

fn risk_decrease() -> Check {
    let start = Instant::now();
    let data = gen_synthetic(4, 10, 150, 4.0, 11).unwrap();
    let spec = ModelSpec::linear(data.dim(), data.classes());
    let config = OptimConfig::default();
    let hp = config.hyper();
    let mut state = TrainerState::new(spec.init(3).unwrap());
    let initial = spec.batch_risk(&state.params, data.samples()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut order: Vec<usize> = Vec::new();
    let mut worst_after = f64::MIN;
    let mut at_500 = f64::NAN;
    for k in 1..=1000 {
        if order.len() < config.batch_size {
            order = (0..data.len()).collect();
            order.shuffle(&mut rng);
        }
        let batch: Vec<Sample> = order
            .drain(..config.batch_size)
            .map(|i| data.samples()[i].clone())
            .collect();
        state.sgd_step(&spec, &batch, hp).unwrap();
        let r = spec.batch_risk(&state.params, data.samples()).unwrap();
        if k == 500 {
            at_500 = r;
        }
        if k >= 500 {
            worst_after = worst_after.max(r);
        }
    }
    ensure(at_500 < 0.5 * initial, || {
        format!("risk {at_500:.4} at step 500 vs initial {initial:.4}")
    })?;
    ensure(worst_after <= initial, || {
        format!("risk reached {worst_after:.4} after step 500, initial {initial:.4}")
    })?;
    within(start, Duration::from_secs(30))?;
    Ok(format!(
        "initial {initial:.4}, step 500 {at_500:.4}, max over 500..1000 {worst_after:.4}, {:.1}s",
        start.elapsed().as_secs_f64()
    ))
}

// ---------------------------------------------------------------- criterion 6

fn cli(args: &[&str]) -> Cli {
    Cli::parse_from(
        std::iter::once("cohesive")
            .chain(args.iter().copied())
            .chain(["--quiet"]),
    )
}

fn run_pipeline(config: &str, dir: &Path, threads: Option<usize>) -> Result<PathBuf, String> {
    let cfg = dir.join("experiment.toml");
    std::fs::write(&cfg, config).map_err(|e| e.to_string())?;
    let out = dir.join(format!("out{}", threads.unwrap_or(0)));
    let threads = threads.map(|t| t.to_string());
    let mut args = vec!["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
    if let Some(t) = &threads {
        args.extend(["--threads", t.as_str()]);
    }
    run(&cli(&args)).map_err(|e| format!("pipeline failed: {e}"))?;
    Ok(out)
}

fn read_report(out: &Path) -> Report {
    serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap()
}

/// Checks the four accuracy conditions of the scaled reproduction.
fn reproduction_checks(report: &Report) -> Check {
    let acc = |i: usize| report.accuracy[i].accuracy;
    let (alg1, alg2, train_acc, test_acc) = (acc(0), acc(1), acc(2), acc(3));
    let chance = report.chance;
    let summary = format!(
        "alg1 {alg1:.3}, alg2 {alg2:.3}, argmax train {train_acc:.3}, argmax test {test_acc:.3}, chance {chance:.2}"
    );
    ensure(alg1 >= 5.0 * chance, || format!("alg1 below 5x chance: {summary}"))?;
    ensure(alg1 >= 0.9 * test_acc, || {
        format!("alg1 below 0.9x argmax test: {summary}")
    })?;
    ensure(train_acc > test_acc, || {
        format!("argmax train not above test: {summary}")
    })?;
    ensure(alg2 >= 3.0 * chance, || format!("alg2 below 3x chance: {summary}"))?;
    Ok(summary)
}

const REPRODUCTION_BODY: &str = r#"
[split]
compact_size = 128

[model]
kind = "mlp"
hidden = [256, 256]

[sampling]
trials = 30
mode = "dense"

[groups]
enabled = false
"#;

fn cifar_reproduction(dir: &Path) -> Outcome {
    let cifar = match std::env::var("CIFAR10_DIR") {
        Ok(p) if Path::new(&p).is_dir() => p,
        _ => return Outcome::NotRun("CIFAR10_DIR is not set to a CIFAR-10 binary directory".into()),
    };
    run_criterion(|| {
        let start = Instant::now();
        let config = format!(
            "seed = 0\n\n[data]\nsource = \"cifar10\"\npath = {:?}\ntrain_subset = 5000\n{REPRODUCTION_BODY}",
            cifar
        );
        let work = dir.join("cifar");
        std::fs::create_dir_all(&work).map_err(|e| e.to_string())?;
        let out = run_pipeline(&config, &work, None)?;
        let summary = reproduction_checks(&read_report(&out))?;
        within(start, Duration::from_secs(30 * 60))?;
        Ok(format!("{summary}, {:.0}s", start.elapsed().as_secs_f64()))
    })
}

/// The same pipeline on 10-class Gaussian blobs. Reported for information
/// only; it is no substitute for CIFAR-10.
fn synthetic_stand_in(dir: &Path) -> String {
    let config = format!(
        "seed = 0\n\n[data]\nsource = \"synthetic\"\nclasses = 10\ndim = 64\ntrain_per_class = 200\ntest_per_class = 60\nseparation = 2.0\n\n[training]\nepochs = 16\n{}",
        REPRODUCTION_BODY.replace("hidden = [256, 256]", "hidden = [64, 64]")
    );
    let work = dir.join("synthetic");
    let start = Instant::now();
    let result = std::fs::create_dir_all(&work)
        .map_err(|e| e.to_string())
        .and_then(|_| run_pipeline(&config, &work, None))
        .map(|out| match reproduction_checks(&read_report(&out)) {
            Ok(s) => format!("conditions hold: {s}"),
            Err(s) => format!("conditions do not hold: {s}"),
        });
    match result {
        Ok(s) => format!("{s}, {:.0}s", start.elapsed().as_secs_f64()),
        Err(e) => e,
    }
}

// ---------------------------------------------------------------- criterion 7

fn adjacency(agr: &AgreementMatrix, threshold: f64, min_support: u64) -> Vec<Vec<bool>> {
    let n = agr.a_len;
    let ok = |i: usize, j: usize| {
        agr.p_hat[i * n + j].is_some_and(|p| p >= threshold) && agr.support[i * n + j] >= min_support
    };
    (0..n)
        .map(|i| (0..n).map(|j| i != j && ok(i, j) && ok(j, i)).collect())
        .collect()
}

fn is_clique(adj: &[Vec<bool>], mask: u32) -> bool {
    let n = adj.len();
    (0..n).all(|i| mask & (1 << i) == 0 || (i + 1..n).all(|j| mask & (1 << j) == 0 || adj[i][j]))
}

/// Every maximal clique of size > 1, by enumerating all subsets.
fn maximal_cliques(adj: &[Vec<bool>]) -> Vec<u32> {
    let n = adj.len();
    (1u32..1 << n)
        .filter(|&m| m.count_ones() > 1 && is_clique(adj, m))
        .filter(|&m| (0..n).all(|v| m & (1 << v) != 0 || !is_clique(adj, m | (1 << v))))
        .collect()
}

fn group_oracle() -> Check {
    let mut groups = 0;
    let mut cliques = 0;
    for seed in 0..6 {
        let all = gen_synthetic(4, 6, 100, 3.0, seed).unwrap();
        let train_set = all.select(&(0..320).collect::<Vec<_>>()).unwrap();
        let test = all.select(&(320..400).collect::<Vec<_>>()).unwrap();
        let spec = ModelSpec::linear(6, 4);
        let config = OptimConfig {
            epochs: 3,
            seed,
            ..OptimConfig::default()
        };
        let state = train(
            &spec,
            &train_set,
            &config,
            TrainerState::new(spec.init(seed).unwrap()),
            |_| {},
        )
        .unwrap();
        let bundle = make_splits(&train_set, &test, 8, seed).unwrap();
        let union = bundle.compact_train.concat(&bundle.compact_test).unwrap();
        let membership: Vec<bool> = (0..union.len()).map(|i| i < 8).collect();
        let schedule = SamplingSchedule::from_optim(&config, 0.001, 0.0, seed);
        let cfg = SamplerConfig {
            trials: 30,
            ..SamplerConfig::default()
        };
        let m = sample_cohesion(&spec, &state, &train_set, &union, &union, schedule, &cfg).unwrap();
        let agr = agreement(&m);
        for min_support in [1, 20] {
            let report = extract_groups(&agr, 1.0, min_support, &membership).unwrap();
            let adj = adjacency(&agr, 1.0, min_support);
            let maximal = maximal_cliques(&adj);
            let masks: Vec<u32> = report
                .groups
                .iter()
                .map(|g| g.members.iter().fold(0, |m, &i| m | (1 << i)))
                .collect();
            for (g, &mask) in report.groups.iter().zip(&masks) {
                ensure(g.members.len() > 1 && maximal.contains(&mask), || {
                    format!("seed {seed}: group {:?} is not a maximal clique", g.members)
                })?;
                let generative = g.members.iter().any(|&i| !membership[i]);
                ensure(g.generative == generative, || {
                    format!("seed {seed}: wrong generative flag on {:?}", g.members)
                })?;
            }
            for &c in &maximal {
                ensure(masks.iter().any(|&m| m & c != 0), || {
                    format!("seed {seed}: maximal clique {c:#b} missed")
                })?;
            }
            let found = find_generative_groups(&report, &membership).unwrap();
            ensure(found.groups.iter().all(|g| g.generative), || {
                "non-generative group returned as generative".into()
            })?;
            ensure(
                found.groups.len() == report.groups.iter().filter(|g| g.generative).count(),
                || "generative filter dropped a group".into(),
            )?;
            groups += report.groups.len();
            cliques += maximal.len();
        }
    }
    ensure(groups > 0, || "toy runs produced no groups".into())?;
    Ok(format!(
        "{groups} groups and {cliques} maximal cliques confirmed over 12 extractions"
    ))
}

// ---------------------------------------------------------------- criterion 8

const DETERMINISM_CONFIG: &str = r#"
seed = 3

[data]
source = "synthetic"
classes = 4
dim = 8
train_per_class = 80
test_per_class = 40
separation = 3.0

[split]
compact_size = 16

[model]
kind = "mlp"
hidden = [12]

[training]
epochs = 3
batch_size = 32

[sampling]
trials = 10
"#;

const ARTIFACTS: [&str; 8] = [
    "alg1.cohesion",
    "alg2.cohesion",
    "union.cohesion",
    "alg1.csv",
    "alg2.csv",
    "union.csv",
    "report.json",
    "report.txt",
];

fn determinism(dir: &Path) -> Check {
    let n = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
        .max(4);
    let mut outputs = Vec::new();
    for threads in [1, n] {
        let work = dir.join(format!("det{threads}"));
        std::fs::create_dir_all(&work).map_err(|e| e.to_string())?;
        let out = run_pipeline(DETERMINISM_CONFIG, &work, Some(threads))?;
        let files: Vec<Vec<u8>> = ARTIFACTS.iter().map(|f| std::fs::read(out.join(f)).unwrap()).collect();
        outputs.push(files);
    }
    for (i, name) in ARTIFACTS.iter().enumerate() {
        ensure(outputs[0][i] == outputs[1][i], || {
            format!("{name} differs between 1 and {n} threads")
        })?;
    }
    Ok(format!(
        "{} matrix and report files byte-identical at 1 and {n} threads",
        ARTIFACTS.len()
    ))
}

fn main() {
    let dir = tempfile::tempdir().expect("temporary directory");
    let mut failed = false;
    let mut report = |n: usize, name: &str, outcome: Outcome| {
        let (tag, detail) = match outcome {
            Outcome::Pass(d) => ("PASS", d),
            Outcome::Fail(d) => {
                failed = true;
                ("FAIL", d)
            }
            Outcome::NotRun(d) => ("NOT RUN", d),
        };
        println!("criterion {n} {tag}: {name}: {detail}");
    };

    report(1, "gradient correctness", run_criterion(gradient_correctness));
    report(2, "offline-oracle equivalence", run_criterion(offline_oracle));
    report(3, "batch/dense agreement equality", run_criterion(batch_dense_equality));
    report(4, "self-cohesion", run_criterion(self_cohesion));
    report(5, "risk decrease", run_criterion(risk_decrease));
    let cifar = cifar_reproduction(dir.path());
    let cifar_ran = !matches!(cifar, Outcome::NotRun(_));
    report(6, "scaled CIFAR-10 reproduction", cifar);
    if !cifar_ran {
        println!(
            "  info (does not count for criterion 6): synthetic stand-in: {}",
            synthetic_stand_in(dir.path())
        );
    }
    report(7, "group extraction oracle", run_criterion(group_oracle));
    report(
        8,
        "determinism across thread counts",
        run_criterion(|| determinism(dir.path())),
    );

    if failed {
        std::process::exit(1);
    }
}

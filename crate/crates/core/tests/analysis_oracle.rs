//! Group extraction against exhaustive clique enumeration, label purity of
//! groups on a converged toy problem, and the coupling between the cohesion
//! classifier and the argmax baseline.

use cohesive::analysis::{
    argmax_baseline, chance_pure_fraction, cohesion_classify, cohesion_classify_unconditional, extract_groups,
    find_generative_groups, pure_group_fraction, GroupReport,
};
use cohesive::cohesion::{
    agreement, sample_cohesion, sample_cohesion_unconditional, AgreementMatrix, CohesionMatrix2D, Counts, SamplerConfig,
};
use cohesive::dataset::{gen_synthetic, make_splits, LabeledSet};
use cohesive::model::ModelSpec;
use cohesive::trainer::{train, OptimConfig, SamplingSchedule, TrainerState};
use proptest::prelude::*;

/// Adjacency computed straight from the agreement matrix.
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

/// All maximal cliques of size > 1, by brute force over every subset.
fn maximal_cliques(adj: &[Vec<bool>]) -> Vec<u32> {
    let n = adj.len();
    assert!(n <= 16);
    let cliques: Vec<u32> = (1u32..1 << n).filter(|&m| is_clique(adj, m)).collect();
    cliques
        .iter()
        .copied()
        .filter(|&m| m.count_ones() > 1)
        .filter(|&m| (0..n).all(|v| m & (1 << v) != 0 || !is_clique(adj, m | (1 << v))))
        .collect()
}

fn mask_of(members: &[usize]) -> u32 {
    members.iter().fold(0, |m, &i| m | (1 << i))
}

fn check_against_oracle(agr: &AgreementMatrix, threshold: f64, min_support: u64, membership: &[bool]) -> GroupReport {
    let report = extract_groups(agr, threshold, min_support, membership).unwrap();
    let adj = adjacency(agr, threshold, min_support);
    let maximal = maximal_cliques(&adj);
    for g in &report.groups {
        assert!(g.members.len() > 1);
        let m = mask_of(&g.members);
        assert!(is_clique(&adj, m), "group {:?} is not a clique", g.members);
        assert!(maximal.contains(&m), "group {:?} is not maximal", g.members);
        assert_eq!(g.generative, g.members.iter().any(|&i| !membership[i]));
    }
    for &c in &maximal {
        assert!(
            report.groups.iter().any(|g| mask_of(&g.members) & c != 0),
            "maximal clique {c:#b} missed"
        );
    }
    // every edge is covered by some group
    for (i, row) in adj.iter().enumerate() {
        for (j, _) in row.iter().enumerate().skip(i + 1).filter(|(_, &e)| e) {
            assert!(report
                .groups
                .iter()
                .any(|g| g.members.contains(&i) && g.members.contains(&j)));
        }
    }
    let generative = find_generative_groups(&report, membership).unwrap();
    let expected: Vec<_> = report.groups.iter().filter(|g| g.generative).cloned().collect();
    assert_eq!(generative.groups, expected);
    report
}

struct Trained {
    spec: ModelSpec,
    train: LabeledSet,
    test: LabeledSet,
    state: TrainerState,
    config: OptimConfig,
}

fn trained(
    classes: usize,
    dim: usize,
    per_class: usize,
    sep: f64,
    spec: ModelSpec,
    epochs: usize,
    seed: u64,
) -> Trained {
    let all = gen_synthetic(classes, dim, per_class, sep, seed).unwrap();
    let cut = all.len() * 4 / 5;
    let train_set = all.select(&(0..cut).collect::<Vec<_>>()).unwrap();
    let test = all.select(&(cut..all.len()).collect::<Vec<_>>()).unwrap();
    let config = OptimConfig {
        epochs,
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
    Trained {
        spec,
        train: train_set,
        test,
        state,
        config,
    }
}

fn union_cohesion(t: &Trained, per_side: usize, trials: usize, seed: u64) -> (CohesionMatrix2D, LabeledSet, Vec<bool>) {
    let bundle = make_splits(&t.train, &t.test, per_side, seed).unwrap();
    let union = bundle.compact_train.concat(&bundle.compact_test).unwrap();
    let membership: Vec<bool> = (0..union.len()).map(|i| i < per_side).collect();
    let schedule = SamplingSchedule::from_optim(&t.config, 0.001, 0.0, seed);
    let cfg = SamplerConfig {
        trials,
        ..SamplerConfig::default()
    };
    let m = sample_cohesion(&t.spec, &t.state, &t.train, &union, &union, schedule, &cfg).unwrap();
    (m, union, membership)
}

#[test]
fn toy_runs_match_clique_enumeration() {
    let mut total_groups = 0;
    for seed in 0..6 {
        let t = trained(4, 6, 80, 3.0, ModelSpec::linear(6, 4), 3, seed);
        let (m, _, membership) = union_cohesion(&t, 8, 30, seed);
        let agr = agreement(&m);
        for min_support in [1, 10, 20] {
            total_groups += check_against_oracle(&agr, 1.0, min_support, &membership).groups.len();
        }
        check_against_oracle(&agr, 0.8, 20, &membership);
    }
    assert!(total_groups > 0, "toy runs produced no groups to check");
}

fn arb_agreement(n: usize) -> impl Strategy<Value = AgreementMatrix> {
    prop::collection::vec((0u64..4, 0u64..3), n * n).prop_map(move |cells| {
        let mut c = Counts::new(n, n, 1);
        for (i, &(pos, neg)) in cells.iter().enumerate() {
            // bias towards perfect agreement so the graphs are not empty
            let neg = if neg == 2 { 0 } else { neg };
            let pos = pos * 10;
            c.pos[i] = pos;
            c.neg[i] = neg;
            c.score[i] = pos as i64 - neg as i64;
        }
        agreement(&CohesionMatrix2D { counts: c })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn random_graphs_match_clique_enumeration(
        agr in (2usize..=12).prop_flat_map(arb_agreement),
        split in 0usize..12,
        min_support in 0u64..25,
    ) {
        let membership: Vec<bool> = (0..agr.a_len).map(|i| i < split).collect();
        check_against_oracle(&agr, 1.0, min_support, &membership);
    }

    #[test]
    fn positive_scaling_keeps_predictions(
        scores in prop::collection::vec(-30i64..30, 12),
        k in 1u64..50,
    ) {
        let mut c = Counts::new(4, 3, 1);
        for (i, &s) in scores.iter().enumerate() {
            c.score[i] = s;
            if s > 0 { c.pos[i] = s as u64 } else { c.neg[i] = (-s) as u64 }
        }
        let labels = [2, 0, 1, 2];
        let base = cohesion_classify(&CohesionMatrix2D { counts: c.clone() }, &labels, None).unwrap();
        let scaled = cohesion_classify(&CohesionMatrix2D { counts: c.scaled(k) }, &labels, None).unwrap();
        prop_assert_eq!(base.predicted_labels(), scaled.predicted_labels());
    }
}

#[test]
fn groups_on_a_converged_toy_are_label_pure() {
    let mut pure = 0.0;
    let mut chance = 0.0;
    for seed in 0..3 {
        let t = trained(4, 8, 120, 4.0, ModelSpec::mlp(8, 4, vec![16]), 8, seed);
        let (m, union, membership) = union_cohesion(&t, 24, 30, seed);
        let report = extract_groups(&agreement(&m), 1.0, 20, &membership).unwrap();
        assert!(!report.groups.is_empty(), "seed {seed}");
        let labels = union.labels();
        pure += pure_group_fraction(&report.groups, &labels);
        chance += chance_pure_fraction(&report.groups, &labels);
    }
    assert!(
        pure >= 2.0 * chance,
        "pure fraction {} vs chance {}",
        pure / 3.0,
        chance / 3.0
    );
}

#[test]
fn cohesion_classifier_tracks_argmax() {
    let t = trained(10, 20, 100, 3.0, ModelSpec::mlp(20, 10, vec![64, 64]), 10, 5);
    let bundle = make_splits(&t.train, &t.test, 100, 5).unwrap();
    let (a, b) = (&bundle.compact_train, &bundle.compact_test);
    let schedule = SamplingSchedule::from_optim(&t.config, 0.001, 0.0, 5);
    let cfg = SamplerConfig::default();
    let m = sample_cohesion(&t.spec, &t.state, &t.train, a, b, schedule, &cfg).unwrap();
    let alg1 = cohesion_classify(&m, &a.labels(), Some(&b.labels())).unwrap();
    let base = argmax_baseline(&t.spec, &t.state.params, b).unwrap();
    let same = alg1
        .predicted_labels()
        .iter()
        .zip(base.predicted_labels())
        .filter(|(x, y)| **x == *y)
        .count();
    assert!(same as f64 >= 0.7 * b.len() as f64, "agreement {same}/{}", b.len());
    assert!(alg1.accuracy.unwrap() >= 0.5, "alg1 accuracy {:?}", alg1.accuracy);

    let tensor = sample_cohesion_unconditional(&t.spec, &t.state, &t.train, a, b, schedule, &cfg).unwrap();
    let alg2 = cohesion_classify_unconditional(&tensor, &a.labels(), Some(&b.labels())).unwrap();
    assert!(alg2.accuracy.unwrap() > 0.1, "alg2 accuracy {:?}", alg2.accuracy);
    for p in &alg2.predictions {
        assert_eq!(Some(p.predicted), p.best_class);
        assert_eq!(a.labels()[p.best_match.unwrap()], p.predicted);
    }
}

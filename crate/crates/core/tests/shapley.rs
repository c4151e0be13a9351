mod common;

use common::{fixture, shapley_config, six_neuron_config};
use hint_core::pipeline::with_workers;
use hint_core::shapley::{
    exact_shapley, exact_shapley_all, neuron_permutation, randomize_coalition, score_matrix,
    shapley_score, signed_efficiency_gap, EvaluationPool, ScoreMatrix, ShapleyConfig,
};
use hint_core::synth::SynthConfig;
use hint_core::Error;

fn four_neuron() -> common::Fixture {
    let mut cfg = SynthConfig::planted(4, 1, 2, 3);
    cfg.height = 5;
    cfg.width = 5;
    cfg.samples_per_concept = 6;
    fixture(&cfg)
}

#[test]
fn monte_carlo_agrees_with_enumeration_on_four_neurons() {
    let f = four_neuron();
    let cfg = shapley_config(2000, 8);
    let exact = exact_shapley_all("concept_0", &f.regions, &cfg).unwrap();
    let lo = exact.iter().map(|v| v.score).fold(f64::INFINITY, f64::min);
    let hi = exact.iter().map(|v| v.score).fold(f64::NEG_INFINITY, f64::max);
    for (pos, &neuron) in f.regions.neurons().iter().enumerate() {
        let mc = shapley_score(neuron, "concept_0", &f.regions, &cfg).unwrap();
        assert!(
            (mc.score - exact[pos].score).abs() <= 0.05 * (hi - lo),
            "neuron {neuron}: mc {} exact {}",
            mc.score,
            exact[pos].score
        );
    }
    assert_eq!(exact_shapley(1, "concept_0", &f.regions, &cfg).unwrap(), exact[1]);
}

#[test]
fn scores_are_nonnegative_and_signed_efficiency_holds() {
    for seed in 0..3 {
        let f = fixture(&six_neuron_config(seed));
        let cfg = shapley_config(64, seed);
        let m = score_matrix(
            &f.regions,
            &f.data.hierarchy,
            &["concept_0".to_string(), "whole".to_string()],
            &cfg,
        )
        .unwrap();
        assert!(m.scores.iter().flatten().all(|&v| v >= 0.0));
        let gap = signed_efficiency_gap("concept_0", &f.regions, &cfg).unwrap();
        assert!(gap.abs() <= 1e-6, "seed {seed}: efficiency gap {gap}");
    }
}

#[test]
fn constant_neuron_is_a_dummy() {
    let f = fixture(&six_neuron_config(4));
    let exact = exact_shapley_all("concept_0", &f.regions, &shapley_config(1, 4)).unwrap();
    assert_eq!(exact[5].score, 0.0);
    assert_eq!(exact[5].signed, 0.0);
}

#[test]
fn randomization_permutes_columns_only_outside_the_coalition() {
    let f = four_neuron();
    let out = randomize_coalition(&f.regions, &[0, 2], 77);
    let n = f.regions.len();
    let perm = neuron_permutation(77, 1, n);
    for r in 0..n {
        assert_eq!(out.row(r)[0], f.regions.row(r)[0]);
        assert_eq!(out.row(r)[2], f.regions.row(r)[2]);
        assert_eq!(out.row(r)[1], f.regions.row(perm[r] as usize)[1]);
    }
    let mut sorted_a: Vec<u32> = (0..n).map(|r| out.row(r)[3].to_bits()).collect();
    let mut sorted_b: Vec<u32> = (0..n).map(|r| f.regions.row(r)[3].to_bits()).collect();
    sorted_a.sort_unstable();
    sorted_b.sort_unstable();
    assert_eq!(sorted_a, sorted_b);
}

#[test]
fn worker_count_does_not_change_the_matrix() {
    let f = fixture(&six_neuron_config(2));
    let cfg = shapley_config(40, 2);
    let concepts = vec!["concept_0".to_string(), "whole".to_string()];
    let run = |w| with_workers(w, || score_matrix(&f.regions, &f.data.hierarchy, &concepts, &cfg)).unwrap().unwrap();
    let one = run(1);
    let four = run(4);
    assert_eq!(one.to_json(), four.to_json());
    let cell = shapley_score(3, "whole", &f.regions, &cfg).unwrap();
    assert_eq!(one.get(3, "whole").unwrap(), cell.score);
}

#[test]
fn subsampled_pool_is_seeded() {
    let f = four_neuron();
    let cfg = ShapleyConfig {
        evaluation_pool: EvaluationPool::SubsampleK(30),
        ..shapley_config(20, 5)
    };
    let a = hint_core::shapley::evaluation_pool(&f.regions, "concept_0", &cfg);
    let b = hint_core::shapley::evaluation_pool(&f.regions, "concept_0", &cfg);
    assert_eq!(a, b);
    assert_eq!(a.len(), 30);
    assert!(a.windows(2).all(|w| w[0] < w[1]));
}

#[test]
fn enumeration_refuses_large_neuron_sets() {
    let f = fixture(&SynthConfig::planted(13, 1, 2, 0));
    let err = exact_shapley_all("concept_0", &f.regions, &shapley_config(1, 0)).unwrap_err();
    assert!(matches!(err, Error::TooManyNeurons { max: 12, got: 13 }));
}

#[test]
fn matrix_errors_and_json() {
    let f = four_neuron();
    let cfg = shapley_config(10, 1);
    let err = score_matrix(&f.regions, &f.data.hierarchy, &["nope".to_string()], &cfg).unwrap_err();
    assert!(matches!(err, Error::UnknownConcept(_)));
    let bad = ShapleyConfig {
        mc_iterations: 0,
        ..cfg.clone()
    };
    assert!(score_matrix(&f.regions, &f.data.hierarchy, &["whole".to_string()], &bad).is_err());

    let m = score_matrix(&f.regions, &f.data.hierarchy, &["whole".to_string()], &cfg).unwrap();
    let back = ScoreMatrix::from_json(&m.to_json()).unwrap();
    assert_eq!(back, m);
    let mut broken = m.clone();
    broken.scores.pop();
    assert!(ScoreMatrix::from_json(&serde_json::to_string(&broken).unwrap()).is_err());
}

//! Cross-module pipeline checks: generated data flows through extraction,
//! routing, and metrics without touching any backend.

use statefactory_core::baselines::monotonic_predict;
use statefactory_core::dataset::{generate_blocksworld_pairs, BlocksworldGenConfig};
use statefactory_core::embedding::SimilarityProvider;
use statefactory_core::extraction::{
    run_trajectory, validate_goal_evolution, ExtractorBackend, DEFAULT_ANCHOR_THRESHOLD,
};
use statefactory_core::metrics::{evaluate, EvalMode, PredictionSet};

#[test]
fn offline_pipeline_orders_methods_and_respects_goal_persistence() {
    let pairs = generate_blocksworld_pairs(BlocksworldGenConfig::new(15, 31)).unwrap();
    let provider = SimilarityProvider::exact_match();
    let backend = ExtractorBackend::BlocksWorldRules;

    let mut factored = PredictionSet::new();
    let mut monotonic = PredictionSet::new();
    for pair in &pairs {
        for trajectory in [&pair.positive, &pair.negative] {
            let run = run_trajectory(trajectory, &backend, &provider).unwrap();
            assert_eq!(run.rewards.len(), trajectory.steps.len());

            // Rule-backed goals are static, so consecutive blueprints must
            // be violation-free at every step.
            for window in run.goals.windows(2) {
                let violations = validate_goal_evolution(
                    &window[0],
                    &window[1],
                    &provider,
                    DEFAULT_ANCHOR_THRESHOLD,
                )
                .unwrap();
                assert!(violations.is_empty(), "{}: {violations:?}", trajectory.id);
            }

            // Positives end in a goal-satisfying observation, so the final
            // predicted reward is exactly 1 there; negatives never reach it.
            let terminal = *run.rewards.values().last().unwrap();
            if trajectory.id.ends_with("pos") {
                assert_eq!(terminal, 1.0, "{}", trajectory.id);
            } else {
                assert!(terminal < 1.0, "{}", trajectory.id);
            }

            factored.insert(&trajectory.id, run.rewards);
            monotonic.insert(&trajectory.id, monotonic_predict(trajectory));
        }
    }

    let factored_report = evaluate(&pairs, &factored, EvalMode::PerPair).unwrap();
    let monotonic_report = evaluate(&pairs, &monotonic, EvalMode::PerPair).unwrap();
    let factored_distance = factored_report.overall.unwrap();
    let monotonic_distance = monotonic_report.overall.unwrap();
    assert!(
        factored_distance < monotonic_distance,
        "factored {factored_distance} vs monotonic {monotonic_distance}"
    );
}

//! Monte Carlo trends of the bandit simulator, median over 20 seeds.

use plle::bandit::{
    estimation_error_curve, median, run_comparison_seeds, run_ucb_glm, BanditEnv, RewardModel, UcbGlmConfig,
};
use plle::linkfn::{make_comp_exponential, make_scaled_sigmoid};
use plle::mle::MleOptions;
use plle::tailfix::{build_corrected_link, InputRangeBounds};

const SEEDS: u64 = 20;

fn two_arm() -> BanditEnv {
    BanditEnv::new(
        vec![vec![1.0, 0.0], vec![0.0, 1.0]],
        vec![0.8, 0.2],
        make_comp_exponential(),
        RewardModel::Bernoulli,
        2024,
    )
    .unwrap()
}

#[test]
fn two_arm_estimate_improves_between_500_and_5000() {
    let env = two_arm();
    let c = build_corrected_link(env.link(), InputRangeBounds::new(1.0, 0.0, 2).unwrap()).unwrap();
    let (mut early, mut late) = (Vec::new(), Vec::new());
    for seed in 0..SEEDS {
        let cfg = UcbGlmConfig { tau: 50, horizon: 5000, alpha: 1.0, seed };
        let trace = run_ucb_glm(&env, &cfg, &c, &MleOptions::default()).unwrap();
        assert_eq!(trace.divergence_incidents, 0);
        early.push(trace.error_at(500).unwrap());
        late.push(trace.error_at(5000).unwrap());
    }
    let (early, late) = (median(&mut early).unwrap(), median(&mut late).unwrap());
    assert!(late < early, "{late} ≥ {early}");
}

#[test]
fn zero_parameter_error_shrinks_with_data() {
    let env = BanditEnv::new(
        vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]],
        vec![0.0, 0.0],
        make_scaled_sigmoid(),
        RewardModel::ClippedGaussian { sigma: 0.1 },
        5,
    )
    .unwrap();
    let c = build_corrected_link(env.link(), InputRangeBounds::from_theta_star(env.theta_star()).unwrap()).unwrap();
    let cfg = UcbGlmConfig { tau: 0, horizon: 2000, alpha: 0.0, seed: 0 };
    let seeds: Vec<u64> = (0..SEEDS).collect();
    let curve = estimation_error_curve(&env, &cfg, &c, &MleOptions::default(), &seeds, None).unwrap();
    let first = curve.iter().find_map(|p| p.median_error).unwrap();
    let last = curve.last().unwrap();
    assert_eq!(last.t, 2000);
    assert!(last.median_error.unwrap() < first);
}

#[test]
fn quadrupling_random_play_reduces_error() {
    let env = two_arm();
    let c = build_corrected_link(env.link(), InputRangeBounds::new(1.0, 0.0, 2).unwrap()).unwrap();
    let cfg = UcbGlmConfig { tau: 0, horizon: 8000, alpha: 0.0, seed: 0 };
    let seeds: Vec<u64> = (0..SEEDS).collect();
    let curve = estimation_error_curve(&env, &cfg, &c, &MleOptions::default(), &seeds, Some(&[2000, 8000])).unwrap();
    assert!(curve.iter().all(|p| p.fitted_seeds == SEEDS as usize));
    assert!(curve[1].median_error.unwrap() < curve[0].median_error.unwrap());
}

#[test]
fn all_success_prefix_breaks_only_the_raw_fit() {
    // μ(10) = 1 − e^{−10}: every pull succeeds for a long stretch.
    let env = BanditEnv::new(vec![vec![1.0]], vec![10.0], make_comp_exponential(), RewardModel::Bernoulli, 1).unwrap();
    let cfg = UcbGlmConfig { tau: 2, horizon: 50, alpha: 1.0, seed: 0 };
    let seeds: Vec<u64> = (0..SEEDS).collect();
    let bounds = InputRangeBounds::new(10.0, 0.0, 1).unwrap();
    let reports = run_comparison_seeds(&env, &cfg, bounds, &MleOptions::default(), &seeds).unwrap();
    for r in &reports {
        assert_eq!(r.corrected.divergence_incidents, 0);
        assert!(r.uncorrected.incident_rounds().first().is_some_and(|&t| t <= 3));
    }
}

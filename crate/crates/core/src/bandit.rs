//! GLM-bandit simulation.
//!
//! Arms are fixed feature vectors; pulling arm `x` returns a reward with mean
//! `μ(xᵀθ*)`. The learner plays `τ` uniformly random rounds, then refits the
//! pseudo log-likelihood estimate on the whole history every round and pulls
//! the arm maximizing `xᵀθ̂ + α √(xᵀV⁻¹x)`. A round whose fit does not
//! converge falls back to a uniformly random arm; unbounded fits are counted
//! as divergence incidents.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;
use thiserror::Error;

use crate::linkfn::LinkFunction;
use crate::mle::{maximize, Dataset, GlmLink, MleOptions, MleStatus};
use crate::tailfix::{build_corrected_link, CorrectedLink, InputRangeBounds, TailError};

/// Ridge added to the design matrix in the exploration bonus.
pub const DESIGN_RIDGE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BanditError {
    #[error("invalid environment: {0}")]
    InvalidEnv(String),
    #[error("invalid bandit config: {0}")]
    InvalidConfig(String),
    #[error("arm {arm} has mean {mean} outside [0, 1]")]
    MeanOutOfRange { arm: usize, mean: f64 },
    #[error("arm index {0} out of range")]
    NoSuchArm(usize),
    #[error(transparent)]
    Tail(#[from] TailError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum RewardModel {
    Bernoulli,
    /// `clamp(mean + σ·N(0,1), 0, 1)`.
    ClippedGaussian {
        sigma: f64,
    },
}

#[derive(Debug, Clone)]
pub struct BanditEnv {
    arms: Vec<Vec<f64>>,
    theta_star: Vec<f64>,
    link: LinkFunction,
    reward_model: RewardModel,
    seed: u64,
    means: Vec<f64>,
}

impl BanditEnv {
    pub fn new(
        arms: Vec<Vec<f64>>,
        theta_star: Vec<f64>,
        link: LinkFunction,
        reward_model: RewardModel,
        seed: u64,
    ) -> Result<Self, BanditError> {
        let d = theta_star.len();
        if d == 0 || arms.is_empty() {
            return Err(BanditError::InvalidEnv("need at least one arm and one dimension".into()));
        }
        for (k, a) in arms.iter().enumerate() {
            if a.len() != d {
                return Err(BanditError::InvalidEnv(format!("arm {k} has dimension {}, expected {d}", a.len())));
            }
            if a.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(BanditError::InvalidEnv(format!("arm {k} has a feature outside [0, 1]")));
            }
        }
        if let RewardModel::ClippedGaussian { sigma } = reward_model {
            if !(sigma >= 0.0 && sigma.is_finite()) {
                return Err(BanditError::InvalidEnv(format!("sigma = {sigma} must be nonnegative")));
            }
        }
        let means: Vec<f64> =
            arms.iter().map(|a| link.eval(a.iter().zip(&theta_star).map(|(x, t)| x * t).sum())).collect();
        if let Some((arm, &mean)) = means.iter().enumerate().find(|(_, m)| !(0.0..=1.0).contains(*m)) {
            return Err(BanditError::MeanOutOfRange { arm, mean });
        }
        Ok(Self { arms, theta_star, link, reward_model, seed, means })
    }

    pub fn dim(&self) -> usize {
        self.theta_star.len()
    }

    pub fn arms(&self) -> &[Vec<f64>] {
        &self.arms
    }

    pub fn theta_star(&self) -> &[f64] {
        &self.theta_star
    }

    pub fn link(&self) -> &LinkFunction {
        &self.link
    }

    pub fn reward_model(&self) -> RewardModel {
        self.reward_model
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// `μ(xᵀθ*)` per arm.
    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn best_mean(&self) -> f64 {
        self.means.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Checks that a corrected link fitted in this environment agrees with
    /// `μ` on every reachable `xᵀθ*`.
    pub fn check_corrected(&self, c: &CorrectedLink) -> Result<(), BanditError> {
        if c.base().name() != self.link.name() {
            return Err(BanditError::InvalidEnv(format!(
                "corrected link is built on `{}`, environment uses `{}`",
                c.base().name(),
                self.link.name()
            )));
        }
        if c.bounds().dim_d() != self.dim() || !c.bounds().covers(&self.theta_star) {
            return Err(BanditError::InvalidEnv("theta_star is not covered by the corrected link's bounds".into()));
        }
        let (lo, hi) = c.core_interval();
        for a in &self.arms {
            let z: f64 = a.iter().zip(&self.theta_star).map(|(x, t)| x * t).sum();
            if !(lo..=hi).contains(&z) || c.h_eval(z) != self.link.eval(z) {
                return Err(BanditError::InvalidEnv(format!("corrected link differs from μ at {z}")));
            }
        }
        Ok(())
    }
}

/// Draws a reward for `arm`.
pub fn sample_reward<R: Rng + ?Sized>(env: &BanditEnv, arm: usize, rng: &mut R) -> Result<f64, BanditError> {
    let mean = *env.means.get(arm).ok_or(BanditError::NoSuchArm(arm))?;
    if !(0.0..=1.0).contains(&mean) {
        return Err(BanditError::MeanOutOfRange { arm, mean });
    }
    Ok(match env.reward_model {
        RewardModel::Bernoulli => {
            if rng.random::<f64>() < mean {
                1.0
            } else {
                0.0
            }
        }
        RewardModel::ClippedGaussian { sigma } => {
            let z: f64 = rng.sample(StandardNormal);
            (mean + sigma * z).clamp(0.0, 1.0)
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UcbGlmConfig {
    pub tau: usize,
    pub horizon: usize,
    pub alpha: f64,
    pub seed: u64,
}

impl UcbGlmConfig {
    pub fn validate(&self) -> Result<(), BanditError> {
        if self.horizon == 0 {
            return Err(BanditError::InvalidConfig("horizon must be positive".into()));
        }
        if self.tau > self.horizon {
            return Err(BanditError::InvalidConfig(format!("tau = {} exceeds horizon = {}", self.tau, self.horizon)));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(BanditError::InvalidConfig(format!("alpha = {} must be nonnegative", self.alpha)));
        }
        Ok(())
    }
}

/// splitmix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A named random stream derived from the run seeds.
pub fn substream(env_seed: u64, run_seed: u64, label: &str, index: u64) -> ChaCha8Rng {
    let mut h = mix(env_seed) ^ mix(run_seed.rotate_left(17));
    for b in label.bytes() {
        h = mix(h ^ u64::from(b));
    }
    ChaCha8Rng::seed_from_u64(mix(h ^ index))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RoundKind {
    Explore,
    Converged,
    Unbounded,
    MaxIterations,
    FitError,
}

impl RoundKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            RoundKind::Explore => "explore",
            RoundKind::Converged => "converged",
            RoundKind::Unbounded => "unbounded",
            RoundKind::MaxIterations => "max_iterations",
            RoundKind::FitError => "fit_error",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundRecord {
    pub round: usize,
    pub arm: usize,
    pub reward: f64,
    pub regret: f64,
    pub cumulative_regret: f64,
    /// `‖θ̂ − θ*‖₂` of the estimate that chose this round's arm.
    pub estimate_error: Option<f64>,
    pub kind: RoundKind,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct BanditTrace {
    pub rounds: Vec<RoundRecord>,
    pub divergence_incidents: usize,
    pub fit_failures: usize,
}

impl BanditTrace {
    pub fn cumulative_regret(&self) -> Vec<f64> {
        self.rounds.iter().map(|r| r.cumulative_regret).collect()
    }

    pub fn final_regret(&self) -> f64 {
        self.rounds.last().map_or(0.0, |r| r.cumulative_regret)
    }

    /// Cumulative regret after `t` rounds.
    pub fn regret_at(&self, t: usize) -> Option<f64> {
        t.checked_sub(1).and_then(|i| self.rounds.get(i)).map(|r| r.cumulative_regret)
    }

    /// Estimate error logged at round `t` (1-based).
    pub fn error_at(&self, t: usize) -> Option<f64> {
        t.checked_sub(1).and_then(|i| self.rounds.get(i)).and_then(|r| r.estimate_error)
    }

    /// Rounds with an unbounded fit, 1-based.
    pub fn incident_rounds(&self) -> Vec<usize> {
        self.rounds.iter().filter(|r| r.kind == RoundKind::Unbounded).map(|r| r.round).collect()
    }
}

/// Per-arm pull counts and reward sums; the fitted dataset has one weighted
/// row per pulled arm.
#[derive(Debug, Clone)]
struct History {
    counts: Vec<f64>,
    sums: Vec<f64>,
}

impl History {
    fn new(arms: usize) -> Self {
        Self { counts: vec![0.0; arms], sums: vec![0.0; arms] }
    }

    fn record(&mut self, arm: usize, reward: f64) {
        self.counts[arm] += 1.0;
        self.sums[arm] += reward;
    }

    fn dataset(&self, env: &BanditEnv) -> Dataset {
        let mut data = Dataset::new(env.dim());
        for (k, &n) in self.counts.iter().enumerate() {
            if n > 0.0 {
                let y = (self.sums[k] / n).clamp(0.0, 1.0);
                data.push_weighted(env.arms[k].clone(), y, n).expect("arms validated at construction");
            }
        }
        data
    }

    /// `Σ nₖ xₖxₖᵀ`.
    fn design(&self, env: &BanditEnv) -> DMatrix<f64> {
        let d = env.dim();
        let mut v = DMatrix::zeros(d, d);
        for (k, &n) in self.counts.iter().enumerate() {
            if n > 0.0 {
                let x = DVector::from_column_slice(&env.arms[k]);
                v += n * &x * x.transpose();
            }
        }
        v
    }
}

fn error_norm(theta: &[f64], theta_star: &[f64]) -> f64 {
    theta.iter().zip(theta_star).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

fn ucb_arm(env: &BanditEnv, history: &History, theta: &[f64], alpha: f64) -> usize {
    let mut v = history.design(env);
    for i in 0..env.dim() {
        v[(i, i)] += DESIGN_RIDGE;
    }
    let chol = Cholesky::new(v).expect("ridged design matrix is positive definite");
    let mut best = (0, f64::NEG_INFINITY);
    for (k, arm) in env.arms.iter().enumerate() {
        let x = DVector::from_column_slice(arm);
        let width = x.dot(&chol.solve(&x)).max(0.0).sqrt();
        let score = arm.iter().zip(theta).map(|(a, t)| a * t).sum::<f64>() + alpha * width;
        if score > best.1 {
            best = (k, score);
        }
    }
    best.0
}

/// Runs UCB-GLM fitting with `link` (corrected or not).
pub fn run_ucb_glm<L: GlmLink + ?Sized>(
    env: &BanditEnv,
    cfg: &UcbGlmConfig,
    link: &L,
    opts: &MleOptions,
) -> Result<BanditTrace, BanditError> {
    cfg.validate()?;
    let mut explore_rng = substream(env.seed, cfg.seed, "explore", 0);
    let mut reward_rng = substream(env.seed, cfg.seed, "reward", 0);
    let mut history = History::new(env.arms.len());
    let mut trace = BanditTrace::default();
    let best = env.best_mean();
    let mut cumulative = 0.0;

    for round in 1..=cfg.horizon {
        let (arm, kind, estimate_error) = if round <= cfg.tau {
            (explore_rng.random_range(0..env.arms.len()), RoundKind::Explore, None)
        } else {
            match maximize(&history.dataset(env), link, opts) {
                Ok(res) if res.status == MleStatus::Converged => {
                    let theta = res.theta_hat.expect("converged fits carry an estimate");
                    let arm = ucb_arm(env, &history, &theta, cfg.alpha);
                    (arm, RoundKind::Converged, Some(error_norm(&theta, &env.theta_star)))
                }
                Ok(res) => {
                    let kind = if res.status == MleStatus::Unbounded {
                        trace.divergence_incidents += 1;
                        RoundKind::Unbounded
                    } else {
                        trace.fit_failures += 1;
                        RoundKind::MaxIterations
                    };
                    (explore_rng.random_range(0..env.arms.len()), kind, None)
                }
                Err(_) => {
                    trace.fit_failures += 1;
                    (explore_rng.random_range(0..env.arms.len()), RoundKind::FitError, None)
                }
            }
        };
        let reward = sample_reward(env, arm, &mut reward_rng)?;
        let regret = (best - env.means[arm]).max(0.0);
        cumulative += regret;
        history.record(arm, reward);
        trace.rounds.push(RoundRecord {
            round,
            arm,
            reward,
            regret,
            cumulative_regret: cumulative,
            estimate_error,
            kind,
        });
    }
    Ok(trace)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub corrected: BanditTrace,
    pub uncorrected: BanditTrace,
}

/// Runs the same seeds once fitting with the tail-extended link and once with
/// the raw link.
pub fn run_comparison(
    env: &BanditEnv,
    cfg: &UcbGlmConfig,
    bounds: InputRangeBounds,
    opts: &MleOptions,
) -> Result<ComparisonReport, BanditError> {
    if env.link.sup_value().is_none() {
        return Err(BanditError::InvalidEnv(format!(
            "link `{}` is not bounded above; the raw estimator cannot fail",
            env.link.name()
        )));
    }
    let corrected_link = build_corrected_link(&env.link, bounds)?;
    env.check_corrected(&corrected_link)?;
    Ok(ComparisonReport {
        corrected: run_ucb_glm(env, cfg, &corrected_link, opts)?,
        uncorrected: run_ucb_glm(env, cfg, &env.link, opts)?,
    })
}

/// Applies `f` to every seed on a pool of scoped threads. Results are in
/// seed order and independent of the thread count.
pub fn map_seeds<T, E, F>(seeds: &[u64], f: F) -> Result<Vec<T>, E>
where
    T: Send,
    E: Send,
    F: Fn(u64) -> Result<T, E> + Sync,
{
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(seeds.len()).max(1);
    let chunk = seeds.len().div_ceil(workers).max(1);
    let f = &f;
    std::thread::scope(|scope| {
        let handles: Vec<_> = seeds
            .chunks(chunk)
            .map(|part| scope.spawn(move || part.iter().map(|&seed| f(seed)).collect::<Result<Vec<_>, E>>()))
            .collect();
        let mut out = Vec::with_capacity(seeds.len());
        for h in handles {
            out.extend(h.join().expect("bandit worker panicked")?);
        }
        Ok(out)
    })
}

/// [`run_comparison`] once per run seed.
pub fn run_comparison_seeds(
    env: &BanditEnv,
    cfg: &UcbGlmConfig,
    bounds: InputRangeBounds,
    opts: &MleOptions,
    seeds: &[u64],
) -> Result<Vec<ComparisonReport>, BanditError> {
    map_seeds(seeds, |seed| run_comparison(env, &UcbGlmConfig { seed, ..*cfg }, bounds, opts))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvePoint {
    pub t: usize,
    /// Median of `‖θ̂_t − θ*‖₂` over the seeds that produced an estimate.
    pub median_error: Option<f64>,
    pub fitted_seeds: usize,
    /// Seeds with a rank-deficient design or a non-converged fit at `t`.
    pub skipped_seeds: usize,
}

/// `1, 2, 3, 5, 10, 20, 30, 50, …` up to `max`, with `max` appended.
pub fn log_checkpoints(max: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut decade = 1usize;
    'outer: loop {
        for m in [1, 2, 3, 5] {
            let t = m * decade;
            if t > max {
                break 'outer;
            }
            out.push(t);
        }
        decade *= 10;
    }
    if out.last() != Some(&max) {
        out.push(max);
    }
    out
}

pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 { values[n / 2] } else { 0.5 * (values[n / 2 - 1] + values[n / 2]) })
}

/// Estimation error of the corrected fit under uniformly random play, at the
/// given checkpoints (default [`log_checkpoints`] of the horizon), median over
/// `seeds` (each used as the run seed).
pub fn estimation_error_curve(
    env: &BanditEnv,
    cfg: &UcbGlmConfig,
    c: &CorrectedLink,
    opts: &MleOptions,
    seeds: &[u64],
    checkpoints: Option<&[usize]>,
) -> Result<Vec<CurvePoint>, BanditError> {
    if seeds.is_empty() {
        return Err(BanditError::InvalidConfig("need at least one seed".into()));
    }
    cfg.validate()?;
    let default_checkpoints;
    let checkpoints = match checkpoints {
        Some(c) => c,
        None => {
            default_checkpoints = log_checkpoints(cfg.horizon);
            &default_checkpoints
        }
    };
    let mut errors: Vec<Vec<f64>> = vec![Vec::new(); checkpoints.len()];
    for &seed in seeds {
        let mut explore_rng = substream(env.seed, seed, "explore", 0);
        let mut reward_rng = substream(env.seed, seed, "reward", 0);
        let mut history = History::new(env.arms.len());
        let mut next = 0;
        for t in 1..=checkpoints.iter().copied().max().unwrap_or(0) {
            let arm = explore_rng.random_range(0..env.arms.len());
            let reward = sample_reward(env, arm, &mut reward_rng)?;
            history.record(arm, reward);
            while next < checkpoints.len() && checkpoints[next] == t {
                if history.design(env).rank(1e-9) == env.dim() {
                    if let Ok(res) = maximize(&history.dataset(env), c, opts) {
                        if let Some(theta) = res.theta_hat {
                            errors[next].push(error_norm(&theta, &env.theta_star));
                        }
                    }
                }
                next += 1;
            }
        }
    }
    Ok(checkpoints
        .iter()
        .zip(errors)
        .map(|(&t, mut errs)| CurvePoint {
            t,
            fitted_seeds: errs.len(),
            skipped_seeds: seeds.len() - errs.len(),
            median_error: median(&mut errs),
        })
        .collect())
}

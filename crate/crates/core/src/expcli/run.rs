//! The four subcommands. Each writes its data files into the output
//! directory and returns their names.

use std::path::Path;

use serde::Serialize;
use serde_json::json;

use super::config::{BanditSpec, CounterexampleKind, CounterexampleSpec, ScenarioConfig};
use super::emit::{fmt_f64, fmt_opt, write_json, Table};
use super::CliError;
use crate::bandit::{
    log_checkpoints, map_seeds, median, run_comparison, run_ucb_glm, BanditEnv, BanditTrace, UcbGlmConfig,
};
use crate::linkfn::LinkFunction;
use crate::mle::{
    certify_unbounded, maximize, ray_profile, Dataset, GlmLink, MleResult, MleStatus, UnboundednessCertificate,
};
use crate::tailfix::{build_corrected_link, CorrectedLink, InputRangeBounds, Knot};

/// Scales of the ray profile written by the counterexample runs.
pub const RAY_SCALES: [f64; 4] = [1.0, 10.0, 100.0, 1000.0];

fn require<T: Clone>(v: &Option<T>, field: &str, sub: &str) -> Result<T, CliError> {
    v.clone().ok_or_else(|| CliError::Validation(vec![format!("{field}: required by `{sub}`")]))
}

fn corrected(f: &LinkFunction, bounds: InputRangeBounds) -> Result<CorrectedLink, CliError> {
    build_corrected_link(f, bounds).map_err(|e| CliError::Numerical(e.to_string()))
}

fn knot_json(k: &Option<Knot>) -> serde_json::Value {
    match k {
        Some(k) => json!({ "x": k.x, "slope": k.a, "curvature": k.b, "value": k.value() }),
        None => serde_json::Value::Null,
    }
}

/// `correct-link`: tabulates `h`, `h′`, `h″` and `m_h` and records the knots.
pub fn run_correct_link(cfg: &ScenarioConfig, out: &Path) -> Result<Vec<String>, CliError> {
    require(&cfg.link, "link.name", "correct-link")?;
    let bounds = require(&cfg.bounds, "bounds", "correct-link")?;
    let f = cfg.link_function().expect("checked above");
    let c = corrected(&f, bounds)?;
    let pad = bounds.dim_d() as f64 + 10.0;
    let lo = cfg.grid.min.unwrap_or(bounds.lower_l() - pad);
    let hi = cfg.grid.max.unwrap_or(bounds.upper_u() + pad);
    let n = cfg.grid.points;

    let mut table = Table::new(["x", "h", "h_prime", "h_double_prime", "m_h"]);
    for i in 0..n {
        let x = lo + (hi - lo) * i as f64 / (n - 1) as f64;
        let m = c.m_h(x).map_err(|e| CliError::Numerical(e.to_string()))?;
        table.push(vec![fmt_f64(x), fmt_f64(c.h_eval(x)), fmt_f64(c.h_deriv1(x)), fmt_f64(c.h_deriv2(x)), fmt_f64(m)]);
    }
    std::fs::write(out.join("correct_link.csv"), table.to_csv_string())?;

    let (core_lo, core_hi) = c.core_interval();
    let summary = json!({
        "link": f.name(),
        "bounds": { "u": bounds.upper_u(), "l": bounds.lower_l(), "d": bounds.dim_d() },
        "core_interval": [core_lo, core_hi],
        "upper_knot": knot_json(&c.knots().upper),
        "lower_knot": knot_json(&c.knots().lower),
    });
    write_json(&summary, &out.join("knots.json"))?;
    Ok(vec!["correct_link.csv".into(), "knots.json".into()])
}

/// Reads rows with header `x_1,…,x_d,y[,weight]`.
pub fn read_dataset(path: &Path) -> Result<Dataset, CliError> {
    let bad = |msg: String| CliError::Validation(vec![format!("data.path: {}: {msg}", path.display())]);
    let mut r = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
    let header: Vec<String> = r.headers().map_err(|e| bad(e.to_string()))?.iter().map(String::from).collect();
    let x_cols: Vec<usize> = header.iter().enumerate().filter(|(_, h)| h.starts_with("x_")).map(|(i, _)| i).collect();
    let y_col = header.iter().position(|h| h == "y").ok_or_else(|| bad("no `y` column".into()))?;
    let w_col = header.iter().position(|h| h == "weight");
    if x_cols.is_empty() {
        return Err(bad("no `x_` columns".into()));
    }
    let mut data = Dataset::new(x_cols.len());
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let num = |j: usize| -> Result<f64, CliError> {
            rec.get(j)
                .and_then(|s| s.trim().parse::<f64>().ok())
                .ok_or_else(|| bad(format!("row {}: column `{}` is not a number", i + 1, header[j])))
        };
        let x = x_cols.iter().map(|&j| num(j)).collect::<Result<Vec<_>, _>>()?;
        let y = num(y_col)?;
        let w = w_col.map(num).transpose()?.unwrap_or(1.0);
        data.push_weighted(x, y, w).map_err(|e| bad(e.to_string()))?;
    }
    Ok(data)
}

fn fit<L: GlmLink + ?Sized>(data: &Dataset, link: &L, cfg: &ScenarioConfig) -> Result<MleResult, CliError> {
    maximize(data, link, &cfg.mle).map_err(|e| CliError::Numerical(e.to_string()))
}

/// `mle`: fits the data file with the configured (optionally corrected) link.
pub fn run_mle(cfg: &ScenarioConfig, out: &Path) -> Result<Vec<String>, CliError> {
    require(&cfg.link, "link.name", "mle")?;
    let path = require(&cfg.data_path, "data.path", "mle")?;
    let f = cfg.link_function().expect("checked above");
    let data = read_dataset(&path)?;
    let res = if cfg.corrected {
        let bounds = require(&cfg.bounds, "bounds", "mle with mle.corrected = true")?;
        fit(&data, &corrected(&f, bounds)?, cfg)?
    } else {
        fit(&data, &f, cfg)?
    };
    write_json(&res, &out.join("mle_result.json"))?;
    if res.status == MleStatus::MaxIterations {
        return Err(CliError::Numerical(format!(
            "maximize stopped after {} iterations with gradient norm {:e}",
            res.iterations, res.grad_norm
        )));
    }
    Ok(vec!["mle_result.json".into()])
}

/// The dataset of a counterexample scenario.
pub fn counterexample_dataset(spec: &CounterexampleSpec) -> Dataset {
    let rows = (0..spec.t).map(|i| match spec.which {
        CounterexampleKind::Binary => (vec![1.0; spec.d], 1.0),
        CounterexampleKind::Continuous => (vec![(i + 1) as f64 / (spec.t + 1) as f64; spec.d], spec.y),
    });
    let mut rows: Vec<_> = rows.collect();
    if spec.flip_row {
        if let Some(last) = rows.last_mut() {
            last.1 = 0.0;
        }
    }
    Dataset::from_rows(spec.d, rows).expect("generated rows are in range")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Expectation {
    pub name: &'static str,
    pub met: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RayReport {
    pub direction: Vec<f64>,
    pub scales: Vec<f64>,
    pub uncorrected: Vec<f64>,
    pub uncorrected_gains: Vec<f64>,
    pub corrected: Vec<f64>,
    pub strictly_increasing: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CounterexampleVerdict {
    pub scenario: CounterexampleKind,
    pub link: String,
    pub d: usize,
    pub t: usize,
    pub flip_row: bool,
    pub certificate: Option<UnboundednessCertificate>,
    pub uncorrected: MleResult,
    pub corrected: MleResult,
    pub ray: RayReport,
    pub expectations: Vec<Expectation>,
    pub passed: bool,
}

/// Runs one counterexample without touching the filesystem.
pub fn evaluate_counterexample(
    spec: &CounterexampleSpec,
    cfg: &ScenarioConfig,
) -> Result<CounterexampleVerdict, CliError> {
    let f = LinkFunction::by_name(spec.which.link_name()).expect("built-in link");
    let bounds = match cfg.bounds {
        Some(b) => b,
        None => InputRangeBounds::new(spec.d as f64, 0.0, spec.d).expect("d ≥ 1"),
    };
    let c = corrected(&f, bounds)?;
    let data = counterexample_dataset(spec);
    let numerical = |e: crate::mle::MleError| CliError::Numerical(e.to_string());

    let certificate = certify_unbounded(&data, &f, None).map_err(numerical)?;
    let uncorrected = fit(&data, &f, cfg)?;
    let corrected_fit = fit(&data, &c, cfg)?;

    let direction = certificate.as_ref().map_or_else(|| vec![1.0; spec.d], |cert| cert.direction.clone());
    let raw = ray_profile(&data, &f, &direction, &RAY_SCALES).map_err(numerical)?;
    let fixed = ray_profile(&data, &c, &direction, &RAY_SCALES).map_err(numerical)?;
    let ray = RayReport {
        direction,
        scales: RAY_SCALES.to_vec(),
        strictly_increasing: raw.strictly_increasing(),
        uncorrected: raw.values,
        uncorrected_gains: raw.gains,
        corrected: fixed.values,
    };

    let corrected_ok = corrected_fit.status == MleStatus::Converged
        && corrected_fit.grad_norm <= cfg.mle.grad_tol
        && corrected_fit.theta_hat.as_ref().is_some_and(|t| t.iter().all(|v| v.is_finite()));
    let expectations = if spec.flip_row {
        vec![
            Expectation { name: "certificate_absent", met: certificate.is_none() },
            Expectation { name: "uncorrected_converged", met: uncorrected.status == MleStatus::Converged },
            Expectation { name: "corrected_converged", met: corrected_ok },
        ]
    } else {
        vec![
            Expectation { name: "certificate_present", met: certificate.is_some() },
            Expectation {
                name: "uncorrected_unbounded",
                met: uncorrected.status == MleStatus::Unbounded && uncorrected.theta_norm > cfg.mle.divergence_norm_cap,
            },
            Expectation { name: "objective_increasing_along_ray", met: ray.strictly_increasing },
            Expectation { name: "corrected_converged", met: corrected_ok },
        ]
    };
    Ok(CounterexampleVerdict {
        scenario: spec.which,
        link: f.name().to_string(),
        d: spec.d,
        t: spec.t,
        flip_row: spec.flip_row,
        certificate,
        uncorrected,
        corrected: corrected_fit,
        ray,
        passed: expectations.iter().all(|e| e.met),
        expectations,
    })
}

/// `counterexample`: writes `verdict.json` and `ray.csv`; fails with the
/// names of any unmet expectations.
pub fn run_counterexample(
    spec: &CounterexampleSpec,
    cfg: &ScenarioConfig,
    out: &Path,
) -> Result<Vec<String>, CliError> {
    let verdict = evaluate_counterexample(spec, cfg)?;
    write_json(&verdict, &out.join("verdict.json"))?;
    let mut table = Table::new(["s", "uncorrected_objective", "uncorrected_gain", "corrected_objective"]);
    for (i, s) in verdict.ray.scales.iter().enumerate() {
        let gain = i.checked_sub(1).map(|j| verdict.ray.uncorrected_gains[j]);
        table.push(vec![
            fmt_f64(*s),
            fmt_f64(verdict.ray.uncorrected[i]),
            fmt_opt(gain),
            fmt_f64(verdict.ray.corrected[i]),
        ]);
    }
    std::fs::write(out.join("ray.csv"), table.to_csv_string())?;
    let failed: Vec<String> = verdict.expectations.iter().filter(|e| !e.met).map(|e| e.name.to_string()).collect();
    if failed.is_empty() {
        Ok(vec!["verdict.json".into(), "ray.csv".into()])
    } else {
        Err(CliError::Expectation(failed))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckpointSummary {
    pub t: usize,
    pub median_error: Option<f64>,
    pub replicates_with_estimate: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitSummary {
    pub fit: &'static str,
    pub final_regret: Vec<f64>,
    pub median_final_regret: Option<f64>,
    pub divergence_incidents: Vec<usize>,
    pub replicates_with_incidents: usize,
    pub fit_failures: Vec<usize>,
    pub error_checkpoints: Vec<CheckpointSummary>,
}

impl FitSummary {
    pub fn new(fit: &'static str, traces: &[&BanditTrace], horizon: usize) -> Self {
        let final_regret: Vec<f64> = traces.iter().map(|t| t.final_regret()).collect();
        let divergence_incidents: Vec<usize> = traces.iter().map(|t| t.divergence_incidents).collect();
        let error_checkpoints = log_checkpoints(horizon)
            .into_iter()
            .map(|t| {
                let mut errs: Vec<f64> = traces.iter().filter_map(|tr| tr.error_at(t)).collect();
                CheckpointSummary { t, replicates_with_estimate: errs.len(), median_error: median(&mut errs) }
            })
            .collect();
        Self {
            fit,
            median_final_regret: median(&mut final_regret.clone()),
            final_regret,
            replicates_with_incidents: divergence_incidents.iter().filter(|&&n| n > 0).count(),
            divergence_incidents,
            fit_failures: traces.iter().map(|t| t.fit_failures).collect(),
            error_checkpoints,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BanditSummary {
    pub link: String,
    pub seed: u64,
    pub arms: Vec<Vec<f64>>,
    pub theta_star: Vec<f64>,
    pub tau: usize,
    pub horizon: usize,
    pub alpha: f64,
    pub replicates: usize,
    pub fits: Vec<FitSummary>,
}

/// Runs every replicate; returns `(fit label, replicate, trace)` triples in
/// a fixed order.
pub fn simulate_bandit(
    spec: &BanditSpec,
    cfg: &ScenarioConfig,
) -> Result<Vec<(&'static str, usize, BanditTrace)>, CliError> {
    require(&cfg.link, "link.name", "bandit")?;
    let f = cfg.link_function().expect("checked above");
    let invalid = |e: crate::bandit::BanditError| CliError::Validation(vec![format!("bandit: {e}")]);
    if spec.compare && f.sup_value().is_none() {
        return Err(CliError::Validation(vec![format!(
            "bandit.compare: link `{}` is unbounded above, so there is nothing to compare; set compare = false",
            f.name()
        )]));
    }
    let env = BanditEnv::new(spec.arms.clone(), spec.theta_star.clone(), f.clone(), spec.reward, cfg.seed)
        .map_err(invalid)?;
    let bounds = match cfg.bounds {
        Some(b) => b,
        None => InputRangeBounds::from_theta_star(&spec.theta_star).map_err(|e| invalid(e.into()))?,
    };
    let c = corrected(&f, bounds)?;
    env.check_corrected(&c).map_err(invalid)?;
    let ucb = UcbGlmConfig { tau: spec.tau, horizon: spec.horizon, alpha: spec.alpha, seed: 0 };
    let seeds: Vec<u64> = (0..spec.replicates as u64).collect();
    let runs = map_seeds(&seeds, |seed| {
        let ucb = UcbGlmConfig { seed, ..ucb };
        if spec.compare {
            run_comparison(&env, &ucb, bounds, &cfg.mle).map(|r| vec![r.corrected, r.uncorrected])
        } else {
            run_ucb_glm(&env, &ucb, &c, &cfg.mle).map(|t| vec![t])
        }
    })
    .map_err(invalid)?;
    let labels = ["corrected", "uncorrected"];
    Ok(runs
        .into_iter()
        .enumerate()
        .flat_map(|(r, traces)| traces.into_iter().enumerate().map(move |(k, t)| (labels[k], r, t)))
        .collect())
}

/// `bandit`: writes the per-round `trace.csv` and `summary.json`.
pub fn run_bandit(cfg: &ScenarioConfig, out: &Path) -> Result<Vec<String>, CliError> {
    let spec = require(&cfg.bandit, "bandit", "bandit")?;
    let runs = simulate_bandit(&spec, cfg)?;

    let mut table = Table::new([
        "replicate",
        "fit",
        "round",
        "arm",
        "reward",
        "regret",
        "cumulative_regret",
        "estimate_error",
        "status",
    ]);
    for (label, rep, trace) in &runs {
        for r in &trace.rounds {
            table.push(vec![
                rep.to_string(),
                label.to_string(),
                r.round.to_string(),
                r.arm.to_string(),
                fmt_f64(r.reward),
                fmt_f64(r.regret),
                fmt_f64(r.cumulative_regret),
                fmt_opt(r.estimate_error),
                r.kind.as_str().to_string(),
            ]);
        }
    }
    std::fs::write(out.join("trace.csv"), table.to_csv_string())?;

    let fits: Vec<FitSummary> = ["corrected", "uncorrected"]
        .into_iter()
        .filter_map(|label| {
            let traces: Vec<&BanditTrace> = runs.iter().filter(|(l, _, _)| *l == label).map(|(_, _, t)| t).collect();
            (!traces.is_empty()).then(|| FitSummary::new(label, &traces, spec.horizon))
        })
        .collect();
    let corrected_incidents: usize = fits[0].divergence_incidents.iter().sum();
    let summary = BanditSummary {
        link: cfg.link.clone().expect("checked in simulate_bandit"),
        seed: cfg.seed,
        arms: spec.arms.clone(),
        theta_star: spec.theta_star.clone(),
        tau: spec.tau,
        horizon: spec.horizon,
        alpha: spec.alpha,
        replicates: spec.replicates,
        fits,
    };
    write_json(&summary, &out.join("summary.json"))?;
    if corrected_incidents > 0 {
        return Err(CliError::Expectation(vec![format!(
            "corrected_no_divergence ({corrected_incidents} unbounded corrected fits)"
        )]));
    }
    Ok(vec!["trace.csv".into(), "summary.json".into()])
}

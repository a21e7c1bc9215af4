//! Joint-departures experiments: characteristic curves and bound sweeps.

use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::biaslp::{assemble, BiasLpSolution};
use crate::error::{Error, Result};
use crate::errorbound::{
    bound_multipliers, error_bound_constant, ErrorBoundReport, homogeneous_bound_joint_departures,
    joint_departures_bias_constant, product_form_rho, summed_multipliers,
};
use crate::geomsum::{GeometricSum, GeometricTerm, Reward};
use crate::model::{h_sigma, intersect_q_with, q_sigma_branches, v_rho, Curve, RandomWalk};
use crate::oracle::{BaseOracle, OracleConfig};
use crate::perturb::{build_perturbation, thresholds, PerturbedWalk, ThresholdStatus};

/// Two queues with arrivals `λ`, joint service `μ` and degraded service `μ*`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct JointDeparturesConfig {
    pub lambda: f64,
    pub mu: f64,
    pub mu_star: f64,
}

impl JointDeparturesConfig {
    pub fn new(lambda: f64, mu: f64, mu_star: f64) -> Result<Self> {
        if (2.0 * lambda + mu - 1.0).abs() > 1e-12 {
            return Err(Error::Config(format!("need 2λ + μ = 1, got {}", 2.0 * lambda + mu)));
        }
        if !(lambda > 0.0 && mu_star > 0.0 && mu_star < mu) {
            return Err(Error::Config(format!(
                "need λ > 0 and 0 < μ* < μ, got λ={lambda}, μ={mu}, μ*={mu_star}"
            )));
        }
        Ok(JointDeparturesConfig { lambda, mu, mu_star })
    }

    pub fn from_eta(lambda: f64, mu: f64, eta: f64) -> Result<Self> {
        JointDeparturesConfig::new(lambda, mu, eta * mu)
    }

    /// `λ/μ = load` with `2λ + μ = 1`.
    pub fn from_load(load: f64, eta: f64) -> Result<Self> {
        let mu = 1.0 / (1.0 + 2.0 * load);
        let lambda = 1.0 - mu;
        JointDeparturesConfig::new(lambda / 2.0, mu, eta * mu)
    }

    pub fn eta(&self) -> f64 {
        self.mu_star / self.mu
    }

    pub fn walk(&self) -> Result<RandomWalk> {
        RandomWalk::joint_departures(self.lambda, self.mu, self.mu_star)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarkedPoint {
    pub label: String,
    pub rho: f64,
    pub sigma: f64,
}

fn round4(x: f64) -> f64 {
    (x * 1e4).round() / 1e4
}

/// Intersections of `Q` with `H` and `V`, collapsed to a single point when
/// they coincide (product form).
pub fn marked_points(cfg: &JointDeparturesConfig) -> Result<Vec<MarkedPoint>> {
    let walk = cfg.walk()?;
    let qh = intersect_q_with(&walk, Curve::H)?;
    let qv = intersect_q_with(&walk, Curve::V)?;
    let mut points = Vec::new();
    for &(rho, sigma) in &qh {
        let shared = qv
            .iter()
            .any(|&(r, s)| (r - rho).abs() < 1e-8 && (s - sigma).abs() < 1e-8);
        let label = if shared { "product_form" } else { "q_h" };
        points.push(MarkedPoint { label: label.into(), rho, sigma });
    }
    for &(rho, sigma) in &qv {
        if !points.iter().any(|p| (p.rho - rho).abs() < 1e-8 && (p.sigma - sigma).abs() < 1e-8) {
            points.push(MarkedPoint { label: "q_v".into(), rho, sigma });
        }
    }
    Ok(points)
}

const CURVE_SAMPLES: usize = 999;

/// Writes sampled curves and marked points as CSV files into `dir`:
/// `allcurves_data_int.csv`, `allcurves_data_hor.csv`,
/// `allcurves_data_ver.csv` and `points.csv`.
pub fn run_curves(cfg: &JointDeparturesConfig, dir: &Path) -> Result<Vec<MarkedPoint>> {
    let walk = cfg.walk()?;
    let points = marked_points(cfg)?;
    std::fs::create_dir_all(dir)?;
    let fmt = |x: Option<f64>| x.filter(|v| v.is_finite()).map_or(String::new(), |v| format!("{v:.10}"));
    let grid = (1..=CURVE_SAMPLES).map(|k| k as f64 / (CURVE_SAMPLES + 1) as f64);

    let mut w = csv::Writer::from_path(dir.join("allcurves_data_int.csv"))?;
    w.write_record(["rho", "sigma_q_branch1", "sigma_q_branch2"])?;
    for x in grid.clone() {
        let [a, b] = q_sigma_branches(&walk, x);
        w.write_record([format!("{x:.10}"), fmt(a), fmt(b)])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("allcurves_data_hor.csv"))?;
    w.write_record(["rho", "sigma_h"])?;
    for x in grid.clone() {
        w.write_record([format!("{x:.10}"), fmt(h_sigma(&walk, x))])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("allcurves_data_ver.csv"))?;
    w.write_record(["rho_v", "sigma"])?;
    for y in grid {
        w.write_record([fmt(v_rho(&walk, y)), format!("{y:.10}")])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("points.csv"))?;
    w.write_record(["label", "rho", "sigma"])?;
    for p in &points {
        w.write_record([p.label.clone(), format!("{:.4}", round4(p.rho)), format!("{:.4}", round4(p.sigma))])?;
    }
    w.flush()?;
    Ok(points)
}

/// Two-term measure from the first points of `Q ∩ H` and `Q ∩ V`.
pub fn two_term_measure(walk: &RandomWalk, weights: (f64, f64)) -> Result<GeometricSum> {
    let (r1, s1) = intersect_q_with(walk, Curve::H)?[0];
    let (r2, s2) = intersect_q_with(walk, Curve::V)?[0];
    GeometricSum::normalize(vec![
        GeometricTerm::new(r1, s1, weights.0),
        GeometricTerm::new(r2, s2, weights.1),
    ])
}

/// The inhomogeneous perturbation with outward axis rates `λ`, raised to the
/// sufficient thresholds when the downward rates would fall below the base.
pub fn inhomogeneous_perturbation(
    cfg: &JointDeparturesConfig,
    weights: (f64, f64),
) -> Result<PerturbedWalk> {
    let walk = cfg.walk()?;
    let pi = two_term_measure(&walk, weights)?;
    let first = build_perturbation(&walk, &pi, cfg.lambda, cfg.lambda);
    if let Ok(p) = &first {
        if p.threshold_status() != ThresholdStatus::Violated {
            return first;
        }
    }
    let (h_min, v_min) = thresholds(&walk, &pi)?;
    build_perturbation(&walk, &pi, cfg.lambda.max(h_min), cfg.lambda.max(v_min))
}

/// The product-form perturbation: downward axis rates set to `μ/2`.
pub fn homogeneous_perturbation(cfg: &JointDeparturesConfig) -> Result<PerturbedWalk> {
    let walk = cfg.walk()?;
    let rho = product_form_rho(cfg.lambda, cfg.mu);
    let pi = GeometricSum::product_form(rho, rho)?;
    build_perturbation(&walk, &pi, cfg.lambda, cfg.lambda)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SweepMode {
    Load,
    Eta,
}

impl SweepMode {
    pub fn name(self) -> &'static str {
        match self {
            SweepMode::Load => "load",
            SweepMode::Eta => "eta",
        }
    }

    /// Default grid: `λ/μ ∈ {0.05, …, 0.40}` or `η ∈ {0.35, …, 0.95}`.
    pub fn default_grid(self) -> Vec<f64> {
        match self {
            SweepMode::Load => (1..=8).map(|k| round4(0.05 * k as f64)).collect(),
            SweepMode::Eta => (7..=19).map(|k| round4(0.05 * k as f64)).collect(),
        }
    }

    pub fn config(self, x: f64) -> Result<JointDeparturesConfig> {
        match self {
            SweepMode::Load => JointDeparturesConfig::from_load(x, LOAD_SWEEP_ETA),
            SweepMode::Eta => JointDeparturesConfig::from_eta(ETA_SWEEP_LAMBDA, ETA_SWEEP_MU, x),
        }
    }
}

pub const LOAD_SWEEP_ETA: f64 = 0.3;
pub const ETA_SWEEP_LAMBDA: f64 = 0.2;
pub const ETA_SWEEP_MU: f64 = 0.6;
/// Above this load the LP for the queue-length reward has no feasible point
/// in the reference study; rows beyond it are flagged as not comparable.
pub const LP_LOAD_LIMIT: f64 = 0.4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepOptions {
    pub oracle: OracleConfig,
    /// Degree of the bias-bound polynomials; `None` picks 0 for the
    /// empty-system reward and 1 otherwise.
    pub bias_degree: Option<usize>,
    pub weights: (f64, f64),
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions { oracle: OracleConfig::default(), bias_degree: None, weights: (1.0, 1.0) }
    }
}

pub fn default_degree(reward: &Reward) -> usize {
    match reward {
        Reward::OriginIndicator => 0,
        Reward::Polynomial(_) => 1,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RowStatus {
    Ok,
    ThresholdViolated,
    BoundViolated,
    PaperInfeasibleRegime,
    ConfigInfeasible,
    NoIntersection,
    Failed,
}

impl RowStatus {
    fn from_error(e: &Error) -> Self {
        match e {
            Error::Config(_) => RowStatus::ConfigInfeasible,
            Error::NoIntersection(_) => RowStatus::NoIntersection,
            Error::ThresholdViolated(_) => RowStatus::ThresholdViolated,
            _ => RowStatus::Failed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub mode: &'static str,
    pub x: f64,
    pub reward: String,
    pub lambda: f64,
    pub mu: f64,
    pub mu_star: f64,
    pub eta: f64,
    pub h_bar_10: f64,
    pub v_bar_01: f64,
    pub threshold: &'static str,
    pub bias_degree: usize,
    pub bound_inhom: f64,
    pub bound_hom: f64,
    /// Empty-system reward only: the bound with the analytic bias constant.
    pub bound_inhom_const: Option<f64>,
    pub f_bar_inhom: f64,
    pub f_bar_hom: f64,
    pub f_oracle: f64,
    pub allowance: f64,
    pub verified: bool,
    pub hom_holds: bool,
    pub conditions_hold: bool,
    pub gain_converged: bool,
    pub sup_drift: f64,
    pub lp_cs_residual: f64,
    pub status: RowStatus,
    pub message: String,
}

impl SweepRow {
    fn blank(mode: SweepMode, x: f64, reward: &Reward, degree: usize) -> Self {
        SweepRow {
            mode: mode.name(),
            x,
            reward: reward.name(),
            lambda: f64::NAN,
            mu: f64::NAN,
            mu_star: f64::NAN,
            eta: f64::NAN,
            h_bar_10: f64::NAN,
            v_bar_01: f64::NAN,
            threshold: "",
            bias_degree: degree,
            bound_inhom: f64::NAN,
            bound_hom: f64::NAN,
            bound_inhom_const: None,
            f_bar_inhom: f64::NAN,
            f_bar_hom: f64::NAN,
            f_oracle: f64::NAN,
            allowance: f64::NAN,
            verified: false,
            hom_holds: false,
            conditions_hold: false,
            gain_converged: false,
            sup_drift: f64::NAN,
            lp_cs_residual: f64::NAN,
            status: RowStatus::Failed,
            message: String::new(),
        }
    }
}

struct PointContext {
    walk: RandomWalk,
    oracle: BaseOracle,
    inhom: Result<PerturbedWalk>,
    hom: PerturbedWalk,
}

fn prepare(cfg: &JointDeparturesConfig, rewards: &[Reward], options: &SweepOptions) -> Result<PointContext> {
    let walk = cfg.walk()?;
    let inhom = inhomogeneous_perturbation(cfg, options.weights);
    let hom = homogeneous_perturbation(cfg)?;
    let oracle = BaseOracle::new(&walk, options.oracle, rewards)?;
    Ok(PointContext { walk, oracle, inhom, hom })
}

/// LP-chosen bias bounds for one perturbation and the resulting bound. The
/// summed form is used when the threshold condition cannot be established.
pub fn chosen_bias_bounds(
    base: &RandomWalk,
    walk: &PerturbedWalk,
    oracle: &BaseOracle,
    reward: &Reward,
    degree: usize,
) -> Result<(ErrorBoundReport, BiasLpSolution)> {
    let multipliers = if walk.threshold_status() == ThresholdStatus::Violated {
        summed_multipliers(base, walk, degree)
    } else {
        bound_multipliers(base, walk, degree)
    };
    let data = oracle.bias_data(reward, walk)?;
    let problem = assemble(multipliers.clone(), degree, &data)?;
    let sol = problem.solve()?;
    Ok((multipliers.report(&sol.bounds)?, sol))
}

fn evaluate_reward(
    mode: SweepMode,
    x: f64,
    cfg: &JointDeparturesConfig,
    ctx: &PointContext,
    reward: &Reward,
    options: &SweepOptions,
) -> SweepRow {
    let degree = options.bias_degree.unwrap_or_else(|| default_degree(reward));
    let mut row = SweepRow::blank(mode, x, reward, degree);
    row.lambda = cfg.lambda;
    row.mu = cfg.mu;
    row.mu_star = cfg.mu_star;
    row.eta = cfg.eta();
    let result = (|| -> Result<()> {
        let f_oracle = ctx.oracle.expected(reward);
        row.f_oracle = f_oracle;
        row.f_bar_hom = ctx.hom.pi_bar().expected_reward(reward)?;
        let hom_bound = match reward {
            Reward::OriginIndicator => homogeneous_bound_joint_departures(cfg.lambda, cfg.mu, cfg.mu_star)?,
            Reward::Polynomial(_) => chosen_bias_bounds(&ctx.walk, &ctx.hom, &ctx.oracle, reward, degree)?.1.objective,
        };
        row.bound_hom = hom_bound;
        let hom_allow = ctx.oracle.allowance(&ctx.hom, reward);
        row.hom_holds = (row.f_bar_hom - f_oracle).abs() <= hom_bound + hom_allow;

        let inhom = ctx.inhom.as_ref().map_err(clone_error)?;
        let p = inhom.params();
        row.h_bar_10 = p.h_bar_10;
        row.v_bar_01 = p.v_bar_01;
        let status = inhom.threshold_status();
        row.threshold = status.name();
        if status == ThresholdStatus::Violated {
            return Err(Error::ThresholdViolated("inhomogeneous perturbation".into()));
        }
        let (_, sol) = chosen_bias_bounds(&ctx.walk, inhom, &ctx.oracle, reward, degree)?;
        let bound = sol.objective;
        row.bound_inhom = bound;
        row.lp_cs_residual = sol.cs_residual;
        if *reward == Reward::OriginIndicator {
            let b = joint_departures_bias_constant(cfg.mu, cfg.mu_star);
            row.bound_inhom_const = Some(error_bound_constant(&ctx.walk, inhom, b, b, b)?.total);
        }
        let report = ctx.oracle.check(inhom, reward, bound, Some(&sol.bounds))?;
        row.f_bar_inhom = report.f_bar;
        row.allowance = report.allowance;
        row.verified = report.passed;
        row.conditions_hold = report.conditions_hold.unwrap_or(false);
        row.gain_converged = report.gain_converged;
        row.sup_drift = report.sup_drift;
        row.status = if !report.passed {
            RowStatus::BoundViolated
        } else if mode == SweepMode::Load
            && matches!(reward, Reward::Polynomial(_))
            && x > LP_LOAD_LIMIT
        {
            RowStatus::PaperInfeasibleRegime
        } else {
            RowStatus::Ok
        };
        Ok(())
    })();
    if let Err(e) = result {
        row.status = RowStatus::from_error(&e);
        row.message = e.to_string();
    }
    row
}

fn clone_error(e: &Error) -> Error {
    match e {
        Error::NoIntersection(c) => Error::NoIntersection(c),
        Error::ThresholdViolated(m) => Error::ThresholdViolated(m.clone()),
        other => Error::Domain(other.to_string()),
    }
}

/// All rows of one grid point, one per reward.
pub fn sweep_point(mode: SweepMode, x: f64, rewards: &[Reward], options: &SweepOptions) -> Vec<SweepRow> {
    let failed = |e: Error| -> Vec<SweepRow> {
        rewards
            .iter()
            .map(|r| {
                let mut row = SweepRow::blank(mode, x, r, options.bias_degree.unwrap_or_else(|| default_degree(r)));
                row.status = RowStatus::from_error(&e);
                row.message = e.to_string();
                row
            })
            .collect()
    };
    let cfg = match mode.config(x) {
        Ok(c) => c,
        Err(e) => return failed(e),
    };
    let ctx = match prepare(&cfg, rewards, options) {
        Ok(c) => c,
        Err(e) => {
            let mut rows = failed(e);
            for r in &mut rows {
                r.lambda = cfg.lambda;
                r.mu = cfg.mu;
                r.mu_star = cfg.mu_star;
                r.eta = cfg.eta();
            }
            return rows;
        }
    };
    rewards
        .iter()
        .map(|r| evaluate_reward(mode, x, &cfg, &ctx, r, options))
        .collect()
}

/// Rows for every grid point and reward, ordered by grid index then reward.
pub fn run_sweep(mode: SweepMode, grid: &[f64], rewards: &[Reward], options: &SweepOptions) -> Vec<SweepRow> {
    grid.par_iter()
        .map(|&x| sweep_point(mode, x, rewards, options))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect()
}

pub fn write_rows<W: std::io::Write>(out: W, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

use std::fs::File;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use qpwalk::config::load_model;
use qpwalk::errorbound::error_bound_constant;
use qpwalk::experiment::{
    chosen_bias_bounds, default_degree, inhomogeneous_perturbation, run_curves, run_sweep,
    JointDeparturesConfig, RowStatus, SweepMode, SweepOptions,
};
use qpwalk::oracle::{BaseOracle, OracleConfig};
use qpwalk::{build_perturbation, thresholds, Error, PerturbedWalk, RandomWalk, Reward};

#[derive(Parser)]
#[command(name = "qpwalk", version, about = "Error bounds for perturbed quarter-plane random walks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample the characteristic curves and write them as CSV files.
    Curves {
        #[command(flatten)]
        model: ModelArgs,
        /// Output directory.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Build the perturbed walk and report its rates.
    Perturb {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compute the error bound for one reward.
    Bound {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        oracle: OracleArgs,
        #[arg(long, default_value = "empty")]
        reward: String,
        /// Use this constant for every bias bound instead of the LP.
        #[arg(long)]
        bias_constant: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare the bound with the truncated-grid solution of the base walk.
    Oracle {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        oracle: OracleArgs,
        #[arg(long, default_value = "empty")]
        reward: String,
        #[arg(long)]
        bias_constant: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Homogeneous versus inhomogeneous bounds over a load or η grid.
    Sweep {
        #[arg(long, value_enum)]
        mode: Mode,
        /// Rewards to evaluate; both by default.
        #[arg(long, value_delimiter = ',', default_values_t = ["empty".to_string(), "n1".to_string()])]
        reward: Vec<String>,
        /// Grid values; the built-in grid when omitted.
        #[arg(long, value_delimiter = ',')]
        grid: Vec<f64>,
        #[arg(long, value_delimiter = ',', num_args = 2, default_values_t = [1.0, 1.0])]
        weight: Vec<f64>,
        #[command(flatten)]
        oracle: OracleArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Load,
    Eta,
}

#[derive(Args)]
struct ModelArgs {
    /// Model file; overrides the joint-departures parameters.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, default_value_t = 0.2)]
    lambda: f64,
    #[arg(long, default_value_t = 0.6)]
    mu: f64,
    #[arg(long, conflicts_with = "eta")]
    mu_star: Option<f64>,
    /// μ*/μ; 0.3 when neither this nor --mu-star is given.
    #[arg(long)]
    eta: Option<f64>,
    /// Pre-normalization weights of the two geometric terms.
    #[arg(long, value_delimiter = ',', num_args = 2, default_values_t = [1.0, 1.0])]
    weight: Vec<f64>,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long, default_value_t = qpwalk::oracle::DEFAULT_TRUNCATION)]
    trunc: u32,
    #[arg(long, default_value_t = qpwalk::oracle::DEFAULT_HORIZON)]
    horizon: usize,
    #[arg(long, default_value_t = qpwalk::oracle::DEFAULT_WINDOW)]
    constraint_window: u32,
    #[arg(long)]
    bias_degree: Option<usize>,
}

impl OracleArgs {
    fn config(&self) -> OracleConfig {
        OracleConfig { truncation: self.trunc, horizon: self.horizon, window: self.constraint_window }
    }
}

impl ModelArgs {
    fn joint(&self) -> Result<JointDeparturesConfig, Error> {
        match (self.mu_star, self.eta) {
            (Some(m), _) => JointDeparturesConfig::new(self.lambda, self.mu, m),
            (None, e) => JointDeparturesConfig::from_eta(self.lambda, self.mu, e.unwrap_or(0.3)),
        }
    }

    fn weights(&self) -> (f64, f64) {
        (self.weight[0], self.weight[1])
    }

    /// Base walk and its perturbation.
    fn perturbation(&self) -> Result<(RandomWalk, PerturbedWalk), Error> {
        let Some(path) = &self.model else {
            let cfg = self.joint()?;
            return Ok((cfg.walk()?, inhomogeneous_perturbation(&cfg, self.weights())?));
        };
        let file = load_model(path)?;
        let walk = file.walk;
        let pi = file
            .pi
            .ok_or_else(|| Error::Config("model file has no [pi] section".into()))?;
        let settings = file.perturbation;
        let mut h = settings.h_bar_10.unwrap_or(walk.h(1, 0));
        let mut v = settings.v_bar_01.unwrap_or(walk.v(0, 1));
        if settings.auto_threshold {
            let (h_min, v_min) = thresholds(&walk, &pi)?;
            h = h.max(h_min);
            v = v.max(v_min);
        }
        let perturbed = build_perturbation(&walk, &pi, h, v)?;
        Ok((walk, perturbed))
    }
}

fn output(path: &Option<PathBuf>) -> Result<Box<dyn Write>, Error> {
    Ok(match path {
        Some(p) => Box::new(File::create(p)?),
        None => Box::new(io::stdout()),
    })
}

fn write_row<T: Serialize>(path: &Option<PathBuf>, row: &T) -> Result<(), Error> {
    let mut w = csv::Writer::from_writer(output(path)?);
    w.serialize(row)?;
    w.flush()?;
    Ok(())
}

fn join(values: &[f64]) -> String {
    values.iter().map(|v| format!("{v}")).collect::<Vec<_>>().join(";")
}

#[derive(Serialize)]
struct PerturbRow {
    terms: usize,
    h_bar_10: f64,
    v_bar_01: f64,
    h_min: f64,
    v_min: f64,
    limit_h_down: f64,
    limit_v_down: f64,
    window_min_h_down: f64,
    window_min_v_down: f64,
    gamma_bar: f64,
    threshold: &'static str,
}

#[derive(Serialize)]
struct BoundRow {
    reward: String,
    bias_degree: usize,
    threshold: &'static str,
    delta_h: f64,
    delta_v: f64,
    delta_r: f64,
    g1: f64,
    g2: f64,
    g3: f64,
    total: f64,
    b1: String,
    b2: String,
    b3: f64,
}

#[derive(Serialize)]
struct OracleRow {
    reward: String,
    f_bar: f64,
    f_oracle: f64,
    bound: f64,
    allowance: f64,
    margin: f64,
    passed: bool,
    conditions_hold: Option<bool>,
    gain_converged: bool,
    sup_drift: f64,
}

fn bound_for(
    base: &RandomWalk,
    walk: &PerturbedWalk,
    oracle: &OracleArgs,
    reward: &Reward,
    bias_constant: Option<f64>,
    base_oracle: Option<&BaseOracle>,
) -> Result<(BoundRow, Option<qpwalk::errorbound::BiasBounds>), Error> {
    let degree = oracle.bias_degree.unwrap_or_else(|| default_degree(reward));
    let (report, bias) = match bias_constant {
        Some(b) => (error_bound_constant(base, walk, b, b, b)?, None),
        None => {
            let owned;
            let o = match base_oracle {
                Some(o) => o,
                None => {
                    owned = BaseOracle::new(base, oracle.config(), std::slice::from_ref(reward))?;
                    &owned
                }
            };
            let (report, sol) = chosen_bias_bounds(base, walk, o, reward, degree)?;
            (report, Some(sol.bounds))
        }
    };
    let (b1, b2, b3) = match &bias {
        Some(b) => (join(&b.b1), join(&b.b2), b.b3),
        None => {
            let b = bias_constant.unwrap_or(f64::NAN);
            (format!("{b}"), format!("{b}"), b)
        }
    };
    let row = BoundRow {
        reward: reward.name(),
        bias_degree: if bias_constant.is_some() { 0 } else { degree },
        threshold: walk.threshold_status().name(),
        delta_h: report.delta_h,
        delta_v: report.delta_v,
        delta_r: report.delta_r,
        g1: report.g1,
        g2: report.g2,
        g3: report.g3,
        total: report.total,
        b1,
        b2,
        b3,
    };
    Ok((row, bias))
}

fn run(cli: Cli) -> Result<ExitCode, Error> {
    match cli.command {
        Command::Curves { model, out } => {
            let cfg = model.joint()?;
            let points = run_curves(&cfg, &out)?;
            for p in points {
                println!("{},{:.4},{:.4}", p.label, p.rho, p.sigma);
            }
        }
        Command::Perturb { model, out } => {
            let (base, walk) = model.perturbation()?;
            let (h_min, v_min) = thresholds(&base, walk.pi_bar())?;
            let (limit_h, limit_v) = walk.limit_rates();
            let (min_h, min_v) = walk.window_minima();
            write_row(
                &out,
                &PerturbRow {
                    terms: walk.pi_bar().len(),
                    h_bar_10: walk.params().h_bar_10,
                    v_bar_01: walk.params().v_bar_01,
                    h_min,
                    v_min,
                    limit_h_down: limit_h,
                    limit_v_down: limit_v,
                    window_min_h_down: min_h,
                    window_min_v_down: min_v,
                    gamma_bar: walk.gamma_bar(),
                    threshold: walk.threshold_status().name(),
                },
            )?;
        }
        Command::Bound { model, oracle, reward, bias_constant, out } => {
            let reward = Reward::parse(&reward)?;
            let (base, walk) = model.perturbation()?;
            let (row, _) = bound_for(&base, &walk, &oracle, &reward, bias_constant, None)?;
            write_row(&out, &row)?;
        }
        Command::Oracle { model, oracle, reward, bias_constant, out } => {
            let reward = Reward::parse(&reward)?;
            let (base, walk) = model.perturbation()?;
            let base_oracle = BaseOracle::new(&base, oracle.config(), std::slice::from_ref(&reward))?;
            let (row, bias) = bound_for(&base, &walk, &oracle, &reward, bias_constant, Some(&base_oracle))?;
            let bias = match bias {
                Some(b) => Some(b),
                None => bias_constant.map(qpwalk::errorbound::BiasBounds::constant).transpose()?,
            };
            let report = base_oracle.check(&walk, &reward, row.total, bias.as_ref())?;
            write_row(
                &out,
                &OracleRow {
                    reward: reward.name(),
                    f_bar: report.f_bar,
                    f_oracle: report.f_oracle,
                    bound: report.bound,
                    allowance: report.allowance,
                    margin: report.margin,
                    passed: report.passed,
                    conditions_hold: report.conditions_hold,
                    gain_converged: report.gain_converged,
                    sup_drift: report.sup_drift,
                },
            )?;
            if !report.passed {
                eprintln!("bound violated by {:.3e}", report.margin);
                return Ok(ExitCode::from(2));
            }
        }
        Command::Sweep { mode, reward, grid, weight, oracle, out } => {
            let rewards = reward.iter().map(|r| Reward::parse(r)).collect::<Result<Vec<_>, _>>()?;
            let mode = match mode {
                Mode::Load => SweepMode::Load,
                Mode::Eta => SweepMode::Eta,
            };
            let grid = if grid.is_empty() { mode.default_grid() } else { grid };
            let options = SweepOptions {
                oracle: oracle.config(),
                bias_degree: oracle.bias_degree,
                weights: (weight[0], weight[1]),
            };
            let rows = run_sweep(mode, &grid, &rewards, &options);
            qpwalk::experiment::write_rows(output(&out)?, &rows)?;
            if rows.iter().any(|r| r.status == RowStatus::BoundViolated) {
                eprintln!("at least one bound was violated");
                return Ok(ExitCode::from(2));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::BoundViolated { .. } => 2,
        Error::Io(_) | Error::Csv(_) | Error::SingularSystem | Error::NotConverged { .. } => 1,
        _ => 3,
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

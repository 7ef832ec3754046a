//! `fbq`: analytic and simulated functionals of the finite-buffer batch
//! queue from a TOML model config.
//!
//! Exit status: 0 on success (and for `verify`, only if every check
//! passes), 1 when `verify` has a failing check, 2 for usage or config
//! errors, 3 for numerical failures, 4 for I/O errors.

mod output;
mod parse;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fbq_core::exit::two_sided;
use fbq_core::inversion::{from_samples, InversionRequest, DEFAULT_ORDER};
use fbq_core::queueing::{QueueAnalyzer, SystemState};
use fbq_core::simulator::{simulate, SimConfig};
use fbq_core::verify::{verify, VerifyOptions};
use fbq_core::{Error as CoreError, ModelConfig, QueueModel};
use serde_json::{json, Value};

use output::{Emitter, Provenance, Table};

#[derive(Parser, Debug)]
#[command(name = "fbq", version, about = "Finite-buffer batch queue M^k|G^d|1|B")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Model config (TOML).
    #[arg(long, short)]
    config: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Output file; standard output when absent.
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
struct Start {
    /// Customers in the system at time zero.
    #[arg(long, default_value_t = 1)]
    r: usize,
    /// Elapsed service time of the customer in service.
    #[arg(long, default_value_t = 0.0)]
    x: f64,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Limiting distribution of the number in system.
    Stationary {
        #[command(flatten)]
        common: Common,
    },
    /// Busy-period transform on an s grid, and its mean.
    BusyPeriod {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        start: Start,
        /// Comma-separated transform arguments.
        #[arg(long, default_value = "0.1,0.5,1,2,5")]
        s: String,
    },
    /// First-loss transform, mean, and (unit departures) lost-count law.
    FirstLoss {
        #[command(flatten)]
        common: Common,
        /// Customers in the system at time zero.
        #[arg(long, default_value_t = 0)]
        r: usize,
        #[arg(long, default_value_t = 0.0)]
        x: f64,
        #[arg(long, default_value = "0.1,0.5,1,2,5")]
        s: String,
    },
    /// Time-domain CDF of the number in system, by transform inversion.
    Transient {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0)]
        r: usize,
        #[arg(long, default_value_t = 0.0)]
        x: f64,
        /// Levels: list and inclusive ranges, `B` names the buffer,
        /// e.g. `0..B+1` or `0,2,5`.
        #[arg(long, default_value = "0..B+1")]
        levels: String,
        #[arg(long, default_value = "0.5,1,2,5")]
        times: String,
        /// Even Gaver-Stehfest order.
        #[arg(long, default_value_t = DEFAULT_ORDER)]
        order: usize,
    },
    /// Two-sided exit of the free process from `[-lower, upper]`.
    Exit {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        lower: usize,
        #[arg(long)]
        upper: usize,
        #[arg(long, default_value_t = 0.0)]
        x: f64,
        #[arg(long, default_value = "0.1,0.5,1,2,5")]
        s: String,
    },
    /// Monte Carlo estimates with 99% intervals.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0)]
        r: usize,
        #[arg(long, default_value_t = 0.0)]
        x: f64,
        #[arg(long)]
        horizon: f64,
        #[arg(long, default_value_t = 10_000)]
        replications: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Comma-separated: busy_period, first_loss_time, first_loss_count,
        /// occupancy_at:T, time_average_occupancy, exit_side:LOWER:UPPER.
        #[arg(long)]
        estimands: String,
        /// Directory for `level,count` histogram files.
        #[arg(long)]
        histograms: Option<PathBuf>,
    },
    /// Cross-validation suite; exit status 0 iff every check passes.
    Verify {
        /// Model config; the bundled reference model when absent.
        #[arg(long, short)]
        config: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
        /// Also write the checks to this file.
        #[arg(long, short)]
        output: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        skip_simulation: bool,
        #[arg(long)]
        skip_diffusion: bool,
    },
}

/// Failure with its exit status.
#[derive(Debug)]
pub struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Self { code: 2, message: message.into() }
    }

    pub fn io(message: impl Into<String>) -> Self {
        Self { code: 4, message: message.into() }
    }
}

impl From<CoreError> for Failure {
    fn from(e: CoreError) -> Self {
        let code = match e {
            CoreError::Config { .. } | CoreError::InvalidParameter { .. } | CoreError::InvalidState(_) => 2,
            _ => 3,
        };
        Self { code, message: e.to_string() }
    }
}

type Outcome<T> = std::result::Result<T, Failure>;

/// Reference model used by `verify` without `--config`.
const REFERENCE_CONFIG: &str = r#"
[arrival]
mu = 1.0
[batch]
pmf = [0.5, 0.5]
[service]
family = "erlang"
shape = 2
rate = 4.0
[jump]
lambda = 0.3
[buffer]
B = 8
"#;

fn load(path: &PathBuf) -> Outcome<(QueueModel, Provenance)> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::io(format!("cannot read {}: {e}", path.display())))?;
    let model = ModelConfig::from_toml_str(&text)?.build()?;
    Ok((model, Provenance::new(Some(path), &text)))
}

fn state(model: &QueueModel, r: usize, x: f64) -> Outcome<SystemState> {
    let st = SystemState::new(r, x);
    st.validate(model)?;
    Ok(st)
}

fn run(cli: Cli) -> Outcome<bool> {
    match cli.command {
        Command::Stationary { common } => {
            let (model, prov) = load(&common.config)?;
            let d = QueueAnalyzer::new(model).stationary_dist()?;
            let mut t = Table::new(&["level", "prob", "cdf"]);
            for (l, (p, c)) in d.masses.iter().zip(&d.cdf).enumerate() {
                t.row(vec![json!(l), json!(p), json!(c)]);
            }
            let body = json!({ "mean": d.mean(), "levels": t.records() });
            Emitter::new(&common, prov, "stationary").emit(body, &t)?;
        }
        Command::BusyPeriod { common, start, s } => {
            let (model, prov) = load(&common.config)?;
            let grid = parse::floats(&s, "s")?;
            let st = state(&model, start.r, start.x)?;
            let an = QueueAnalyzer::new(model);
            let mean = an.busy_period_mean(st)?;
            let mut t = Table::new(&["kind", "arg", "value"]);
            let mut lts = Vec::new();
            for &s in &grid {
                let v = an.busy_period_lt(st, s)?;
                t.row(vec![json!("lt"), json!(s), json!(v)]);
                lts.push(json!({ "s": s, "value": v }));
            }
            t.row(vec![json!("mean"), Value::Null, json!(mean)]);
            let body = json!({ "state": { "r": st.r, "x": st.x }, "mean": mean, "transform": lts });
            Emitter::new(&common, prov, "busy-period").emit(body, &t)?;
        }
        Command::FirstLoss { common, r, x, s } => {
            let (model, prov) = load(&common.config)?;
            let grid = parse::floats(&s, "s")?;
            let st = state(&model, r, x)?;
            let unit = model.lambda == 0.0;
            let max_batch = model.batch.explicit_len();
            let an = QueueAnalyzer::new(model);
            let mean = an.first_loss_mean(st)?;
            let mut t = Table::new(&["kind", "arg", "value"]);
            let mut lts = Vec::new();
            for &s in &grid {
                let v = an.first_loss_lt(st, s)?;
                t.row(vec![json!("lt"), json!(s), json!(v)]);
                lts.push(json!({ "s": s, "value": v }));
            }
            t.row(vec![json!("mean"), Value::Null, json!(mean)]);
            let mut pmf = Vec::new();
            if unit {
                // the transform at a tiny s stands in for the probability
                for n in 1..=max_batch {
                    let p = an.first_loss_joint_coeff(st, 1e-9, n)?;
                    t.row(vec![json!("loss_pmf"), json!(n), json!(p)]);
                    pmf.push(json!({ "n": n, "prob": p }));
                }
            }
            let body = json!({
                "state": { "r": st.r, "x": st.x },
                "mean": mean,
                "transform": lts,
                "loss_count_pmf": if unit { Value::Array(pmf) } else { Value::Null },
            });
            Emitter::new(&common, prov, "first-loss").emit(body, &t)?;
        }
        Command::Transient { common, r, x, levels, times, order } => {
            let (model, prov) = load(&common.config)?;
            let levels = parse::levels(&levels, model.buffer)?;
            let times = parse::floats(&times, "times")?;
            let st = state(&model, r, x)?;
            let an = QueueAnalyzer::new(model);
            let mut t = Table::new(&["time", "level", "cdf", "error_estimate"]);
            let mut curves = Vec::new();
            for &time in &times {
                let req = InversionRequest::with_order(time, order);
                req.validate()?;
                let rows: Vec<Vec<f64>> = req
                    .abscissae()
                    .iter()
                    .map(|&s| Ok(an.transient_counts(st, s)?.cdf.iter().map(|p| p / s).collect()))
                    .collect::<Outcome<_>>()?;
                let mut cdf = Vec::new();
                for &u in &levels {
                    let samples: Vec<f64> = rows.iter().map(|row| row[u]).collect();
                    let inv = from_samples(&req, &samples);
                    t.row(vec![json!(time), json!(u), json!(inv.value), json!(inv.error_estimate)]);
                    cdf.push(json!({ "level": u, "cdf": inv.value, "error_estimate": inv.error_estimate }));
                }
                curves.push(json!({ "time": time, "levels": cdf }));
            }
            let body = json!({ "state": { "r": st.r, "x": st.x }, "order": order, "curves": curves });
            Emitter::new(&common, prov, "transient").emit(body, &t)?;
        }
        Command::Exit { common, lower, upper, x, s } => {
            let (model, prov) = load(&common.config)?;
            let grid = parse::floats(&s, "s")?;
            model.service.check_age(x)?;
            let mut t = Table::new(&["s", "lower", "upper"]);
            let p = two_sided(&model, x, lower, upper, 0.0)?;
            t.row(vec![json!(0.0), json!(p.lower_prob), json!(p.upper_prob)]);
            let mut rows = Vec::new();
            for &s in &grid {
                let law = two_sided(&model, x, lower, upper, s)?;
                t.row(vec![json!(s), json!(law.lower_lt), json!(law.upper_lt)]);
                rows.push(json!({ "s": s, "lower": law.lower_lt, "upper": law.upper_lt }));
            }
            let body = json!({
                "strip": { "lower": lower, "upper": upper, "x": x },
                "lower_prob": p.lower_prob,
                "upper_prob": p.upper_prob,
                "transform": rows,
            });
            Emitter::new(&common, prov, "exit").emit(body, &t)?;
        }
        Command::Simulate {
            common,
            r,
            x,
            horizon,
            replications,
            seed,
            estimands,
            histograms,
        } => {
            let (model, prov) = load(&common.config)?;
            let cfg = SimConfig {
                initial: SystemState::new(r, x),
                model,
                horizon,
                replications,
                seed,
                estimands: parse::estimands(&estimands)?,
            };
            let rep = simulate(&cfg)?;
            if let Some(dir) = histograms {
                output::write_histograms(&dir, &rep.histograms)?;
            }
            let mut t = Table::new(&["name", "mean", "variance", "half_width_99", "n"]);
            for (name, e) in &rep.estimates {
                t.row(vec![json!(name), json!(e.mean), json!(e.variance), json!(e.half_width_99), json!(e.n)]);
            }
            let body = serde_json::to_value(&rep).map_err(|e| Failure::io(e.to_string()))?;
            Emitter::new(&common, prov.with_seed(seed), "simulate").emit(body, &t)?;
        }
        Command::Verify {
            config,
            format,
            output,
            seed,
            skip_simulation,
            skip_diffusion,
        } => {
            let (model, prov) = match &config {
                Some(p) => load(p)?,
                None => {
                    let m = ModelConfig::from_toml_str(REFERENCE_CONFIG)?.build()?;
                    (m, Provenance::new(None, REFERENCE_CONFIG))
                }
            };
            let opts = VerifyOptions {
                seed,
                simulation: !skip_simulation,
                diffusion: !skip_diffusion,
            };
            let rep = verify(&model, &opts)?;
            for c in &rep.checks {
                let tol = c.tolerance.map_or_else(|| "trend".to_string(), |t| format!("{t:.1e}"));
                println!(
                    "{} {:<26} measured {:<10.3e} tolerance {:<8} {}",
                    if c.pass { "PASS" } else { "FAIL" },
                    c.name,
                    c.measured,
                    tol,
                    c.detail
                );
            }
            let failed = rep.checks.iter().filter(|c| !c.pass).count();
            println!("{} of {} checks passed", rep.checks.len() - failed, rep.checks.len());
            if let Some(path) = output {
                let mut t = Table::new(&["name", "pass", "measured", "tolerance", "detail"]);
                for c in &rep.checks {
                    t.row(vec![json!(c.name), json!(c.pass), json!(c.measured), json!(c.tolerance), json!(c.detail)]);
                }
                let body = json!({ "all_pass": rep.all_pass(), "checks": rep.checks });
                let common = Common {
                    config: config.unwrap_or_default(),
                    format,
                    output: Some(path),
                };
                Emitter::new(&common, prov.with_seed(seed), "verify").emit(body, &t)?;
            }
            return Ok(rep.all_pass());
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

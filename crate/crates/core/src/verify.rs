//! Self-check suite behind `fbq verify`: cross-validates the analytic
//! paths of one model against each other, against closed forms, and against
//! simulation, then checks the diffusion trends on the unit-load reference
//! model.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::diffusion::{convergence_report, reference_model, LimitFamily, LimitSettings};
use crate::error::Result;
use crate::exit::two_sided;
use crate::inversion::{invert, InversionRequest};
use crate::model::{BatchLaw, QueueModel, ServiceLaw};
use crate::queueing::{QueueAnalyzer, SystemState};
use crate::resolvent::{q_contour_auto, q_table};
use crate::root::solve_c;
use crate::simulator::{simulate, Estimand, SimConfig};

/// One named comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    /// Pass iff `measured <= tolerance`; `None` for shape checks whose
    /// verdict is in `pass` alone.
    pub tolerance: Option<f64>,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    fn bound(name: &str, measured: f64, tolerance: f64, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            measured,
            tolerance: Some(tolerance),
            // NaN fails
            pass: measured <= tolerance,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerifyOptions {
    pub seed: u64,
    pub simulation: bool,
    pub diffusion: bool,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            seed: 1,
            simulation: true,
            diffusion: true,
        }
    }
}

fn root_residual(model: &QueueModel, s: f64, c: f64) -> f64 {
    let lam = model.lambda;
    let arg = s + model.mu * (1.0 - model.batch.pgf(c));
    (c - lam - (1.0 - lam) * model.service.lt(arg)).abs()
}

fn max_abs(it: impl IntoIterator<Item = f64>) -> f64 {
    it.into_iter().fold(0.0, |m, x| if x.is_nan() || m.is_nan() { f64::NAN } else { m.max(x.abs()) })
}

fn analytic_checks(model: &QueueModel, out: &mut Vec<Check>) -> Result<()> {
    let b = model.buffer;
    let grid: Vec<f64> = (0..25).map(|i| 10f64.powf(-2.0 + 4.0 * i as f64 / 24.0)).collect();
    let mut worst = 0.0f64;
    for &s in &grid {
        worst = worst.max(root_residual(model, s, solve_c(model, s)?.c));
    }
    out.push(Check::bound("root.residual", worst, 1e-12, "max over 25 log-spaced s in [1e-2, 1e2]"));

    let quad = QueueModel::new(1.0, BatchLaw::fixed(1)?, ServiceLaw::exponential(2.0)?, 0.0, 1)?;
    let c = solve_c(&quad, 1.0)?.c;
    out.push(Check::bound(
        "root.quadratic",
        (c - (2.0 - 2f64.sqrt())).abs(),
        1e-12,
        "M/M/1 at s = 1: c = 2 - sqrt(2)",
    ));

    let kmax = (b + 1).min(50);
    let t = q_table(model, 0.0, 1.0, kmax)?;
    let mut worst = 0.0f64;
    for k in 0..=kmax {
        let (q, _) = q_contour_auto(model, 0.0, 1.0, k, 1e-13)?;
        worst = worst.max((t.q[k] - q).abs() / q.abs().max(1.0));
    }
    out.push(Check::bound("resolvent.contour", worst, 1e-9, format!("recurrence vs contour, s = 1, k <= {kmax}")));

    let strips = [(0, 1), (2, 3), (b / 2, b - b / 2 + 1), (b, 1)];
    let mut worst = 0.0f64;
    for (r, k) in strips {
        let law = two_sided(model, 0.0, r, k, 0.0)?;
        worst = worst.max((law.lower_prob + law.upper_prob - 1.0).abs());
    }
    out.push(Check::bound("exit.completeness", worst, 1e-12, "|P[lower] + P[upper] - 1| over four strips"));

    let an = QueueAnalyzer::new(model.clone());
    let pi = an.stationary_dist()?;
    out.push(Check::bound(
        "stationary.normalization",
        (pi.masses.iter().sum::<f64>() - 1.0).abs(),
        1e-10,
        "sum of stationary masses",
    ));
    let neg = pi.masses.iter().fold(0.0f64, |m, &p| m.max(-p));
    out.push(Check::bound("stationary.nonnegative", neg, 0.0, "largest negative stationary mass"));

    // birth-death oracle with this model's arrival rate and mean service
    let (a, v) = (model.mu, 1.0 / model.service.mean());
    let mm = QueueModel::new(a, BatchLaw::fixed(1)?, ServiceLaw::exponential(v)?, 0.0, b)?;
    let got = QueueAnalyzer::new(mm).stationary_dist()?.masses;
    let w: Vec<f64> = (0..=b + 1).map(|n| (a / v).powi(n as i32)).collect();
    let z: f64 = w.iter().sum();
    let gap = max_abs(got.iter().zip(&w).map(|(p, x)| p - x / z));
    out.push(Check::bound("stationary.birth_death", gap, 1e-10, "M/M/1/N with the same mu, E eta, B"));

    let small = an.transient_counts(SystemState::new(0, 0.0), 1e-8)?.cdf;
    let gap = max_abs(small.iter().zip(&pi.cdf).map(|(x, y)| x - y));
    out.push(Check::bound("transient.abelian", gap, 1e-5, "CDF at s = 1e-8 vs stationary CDF"));

    let st = SystemState::new(1, 0.0);
    let lt = an.busy_period_lt(st, 1e-8)?;
    out.push(Check::bound("busy_period.proper", (lt - 1.0).abs(), 1e-6, "|LT(1e-8) - 1| from (1, 0)"));
    let mean = an.busy_period_mean(st)?;
    let h = 1e-3 / mean.max(1.0);
    let q = |h: f64| -> Result<f64> { Ok((1.0 - an.busy_period_lt(st, h)?) / h) };
    let (d1, d2, d4) = (q(h)?, q(h / 2.0)?, q(h / 4.0)?);
    let fd = (4.0 * (2.0 * d4 - d2) - (2.0 * d2 - d1)) / 3.0;
    out.push(Check::bound(
        "busy_period.mean",
        (fd - mean).abs() / mean,
        1e-4,
        format!("difference quotient {fd:.8} vs closed form {mean:.8}"),
    ));

    let inv = invert(&InversionRequest::new(1.0), |s| Ok(1.0 / (s + 1.0)))?;
    out.push(Check::bound(
        "inversion.exponential",
        (inv.value - (-1f64).exp()).abs(),
        1e-6,
        "1/(s+1) at t = 1, default order",
    ));
    Ok(())
}

/// Half-width of a family of `m` simultaneous 99% intervals.
fn simultaneous_half_width(variance: f64, n: usize, m: usize) -> f64 {
    let q = StudentsT::new(0.0, 1.0, (n - 1) as f64)
        .expect("dof > 0")
        .inverse_cdf(1.0 - 0.005 / m as f64);
    q * (variance / n as f64).sqrt()
}

fn simulation_checks(model: &QueueModel, seed: u64, out: &mut Vec<Check>) -> Result<()> {
    let an = QueueAnalyzer::new(model.clone());
    let pi = an.stationary_dist()?.masses;
    let clock = model.service.mean().max(1.0 / model.mu);
    let cfg = SimConfig {
        model: model.clone(),
        initial: SystemState::new(0, 0.0),
        horizon: 2e4 * clock,
        replications: 100,
        seed,
        estimands: vec![Estimand::TimeAverageOccupancy],
    };
    let rep = simulate(&cfg)?;
    let levels = pi.len();
    let mut worst = 0.0f64;
    for (l, &p) in pi.iter().enumerate() {
        let e = rep.estimates[&format!("time_average_occupancy[{l}]")];
        let hw = simultaneous_half_width(e.variance, e.n, levels);
        // a level never visited and of negligible mass is covered
        let ratio = if hw > 0.0 { (e.mean - p).abs() / hw } else { f64::from(u8::from((e.mean - p).abs() > 1e-9)) };
        worst = worst.max(ratio);
    }
    out.push(Check::bound(
        "simulation.occupancy",
        worst,
        1.0,
        format!("largest |sim - pi| over its simultaneous 99% half-width, {levels} levels"),
    ));

    let st = SystemState::new(1, 0.0);
    let mean = an.busy_period_mean(st)?;
    let cfg = SimConfig {
        initial: st,
        horizon: f64::MAX,
        replications: 20_000,
        estimands: vec![Estimand::BusyPeriod],
        ..cfg
    };
    let e = simulate(&cfg)?.estimates["busy_period"];
    out.push(Check::bound(
        "simulation.busy_period",
        (e.mean - mean).abs() / e.half_width_99,
        1.0,
        format!("|sim - mean| over 99% half-width; sim {:.6}, analytic {mean:.6}", e.mean),
    ));
    Ok(())
}

fn diffusion_checks(out: &mut Vec<Check>) -> Result<()> {
    let model = reference_model();
    let settings = LimitSettings::default();
    for family in LimitFamily::ALL {
        let rep = convergence_report(&model, family, &[50, 100, 200], &settings)?;
        let devs: Vec<String> = rep.rows.iter().map(|r| format!("{:.4}", r.deviation)).collect();
        out.push(Check {
            name: format!("diffusion.{}", family.name()),
            measured: rep.last_deviation(),
            tolerance: None,
            pass: rep.nonincreasing,
            detail: format!("deviation nonincreasing over B = 50, 100, 200: {}", devs.join(", ")),
        });
    }
    Ok(())
}

/// Run every check on `model`. Errors from a numerical path abort the run.
pub fn verify(model: &QueueModel, opts: &VerifyOptions) -> Result<VerifyReport> {
    let mut checks = Vec::new();
    analytic_checks(model, &mut checks)?;
    if opts.simulation {
        simulation_checks(model, opts.seed, &mut checks)?;
    }
    if opts.diffusion {
        diffusion_checks(&mut checks)?;
    }
    Ok(VerifyReport { checks })
}

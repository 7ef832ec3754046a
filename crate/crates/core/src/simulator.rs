//! Discrete-event simulation of the queue and of the free difference
//! process, used as a Monte Carlo oracle for the analytic results.
//!
//! Replication `i` draws from a ChaCha8 generator keyed by four rounds of
//! splitmix64 started at `seed + i * 0x9E3779B97F4A7C15`. Stream 0 drives
//! the queue path and stream 1 the free process for exit estimands, so
//! adding an estimand never changes the draws of another. Replications run
//! in parallel; their samples are reduced sequentially in replication
//! order, which makes results bit-identical for a given seed and config.

use std::collections::BTreeMap;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Geometric};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{invalid, Error, Result};
use crate::model::QueueModel;
use crate::queueing::SystemState;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Estimand {
    /// Time until the system first empties; needs `r >= 1`.
    BusyPeriod,
    /// Epoch of the first arrival that does not fit.
    FirstLossTime,
    /// Customers rejected at that epoch.
    FirstLossCount,
    /// Level indicators at time `t`.
    OccupancyAt { t: f64 },
    /// Fraction of `[0, horizon]` spent at each level.
    TimeAverageOccupancy,
    /// Whether the free process started at 0 leaves `[-lower, upper]`
    /// through the top; also records the exit time.
    ExitSide { lower: usize, upper: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub model: QueueModel,
    pub initial: SystemState,
    /// Observation window for time-based estimands and the censoring time
    /// for passage estimands.
    pub horizon: f64,
    pub replications: usize,
    pub seed: u64,
    pub estimands: Vec<Estimand>,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        self.initial.validate(&self.model)?;
        if self.replications == 0 {
            return Err(invalid("replications", "must be >= 1"));
        }
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(invalid("horizon", format!("must be positive and finite, got {}", self.horizon)));
        }
        for e in &self.estimands {
            match *e {
                Estimand::BusyPeriod if self.initial.r == 0 => {
                    return Err(Error::InvalidState("no busy period starts from the empty state".into()))
                }
                Estimand::OccupancyAt { t } if !(t >= 0.0 && t <= self.horizon) => {
                    return Err(invalid("t", format!("occupancy time {t} must lie in [0, horizon]")))
                }
                _ => {}
            }
        }
        Ok(())
    }
}

/// Replication-level summary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimEstimate {
    pub mean: f64,
    /// Sample variance of the replication values.
    pub variance: f64,
    /// Student-t 99% half-width of the mean.
    pub half_width_99: f64,
    pub n: usize,
}

impl SimEstimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        // Welford, in sample order
        let (mut mean, mut m2) = (0.0, 0.0);
        for (i, &x) in xs.iter().enumerate() {
            let d = x - mean;
            mean += d / (i + 1) as f64;
            m2 += d * (x - mean);
        }
        let n = xs.len();
        let variance = if n > 1 { m2 / (n - 1) as f64 } else { f64::NAN };
        let half_width_99 = if n > 1 {
            let q = StudentsT::new(0.0, 1.0, (n - 1) as f64).expect("dof > 0").inverse_cdf(0.995);
            q * (variance / n as f64).sqrt()
        } else {
            f64::INFINITY
        };
        Self {
            mean: if n > 0 { mean } else { f64::NAN },
            variance,
            half_width_99,
            n,
        }
    }

    /// `|mean - truth| <= half_width_99`.
    pub fn covers(&self, truth: f64) -> bool {
        (self.mean - truth).abs() <= self.half_width_99
    }
}

/// Counts by integer value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub name: String,
    pub counts: Vec<u64>,
}

impl Histogram {
    /// `level,count` rows with a header line.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "level,count")?;
        for (l, c) in self.counts.iter().enumerate() {
            writeln!(w, "{l},{c}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub replications: usize,
    pub seed: u64,
    /// Keyed by estimand name; vector estimands use `name[level]`.
    pub estimates: BTreeMap<String, SimEstimate>,
    pub histograms: Vec<Histogram>,
    /// Passage estimands unresolved by the horizon, excluded from their
    /// estimates.
    pub censored: BTreeMap<String, usize>,
}

impl SimReport {
    pub fn get(&self, name: &str) -> Option<&SimEstimate> {
        self.estimates.get(name)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generator for replication `rep` on `stream`.
pub fn replication_rng(seed: u64, rep: u64, stream: u64) -> ChaCha8Rng {
    let mut st = seed.wrapping_add(rep.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut st).to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(stream);
    rng
}

struct Sampler<'a> {
    model: &'a QueueModel,
    arrivals: Exp<f64>,
    departures: Geometric,
}

impl<'a> Sampler<'a> {
    fn new(model: &'a QueueModel) -> Self {
        Self {
            model,
            arrivals: Exp::new(model.mu).expect("mu > 0"),
            departures: Geometric::new(1.0 - model.lambda).expect("lambda in [0, 1)"),
        }
    }

    fn gap<R: Rng>(&self, rng: &mut R) -> f64 {
        self.arrivals.sample(rng)
    }

    fn batch<R: Rng>(&self, rng: &mut R) -> usize {
        self.model.batch.sample(rng)
    }

    /// `P[d = n] = (1 - lambda) lambda^(n-1)`, `n >= 1`.
    fn departure<R: Rng>(&self, rng: &mut R) -> usize {
        self.departures.sample(rng) as usize + 1
    }

    fn service<R: Rng>(&self, rng: &mut R) -> f64 {
        self.model.service.sample(rng)
    }
}

/// Per-replication outcome of the queue path.
#[derive(Debug, Clone, Default)]
struct QueueSample {
    busy_period: Option<f64>,
    first_loss: Option<(f64, usize)>,
    occupancy_at: Vec<usize>,
    time_at_level: Vec<f64>,
}

fn queue_path(cfg: &SimConfig, rng: &mut ChaCha8Rng, times: &[f64], want_average: bool, need: (bool, bool)) -> QueueSample {
    let model = &cfg.model;
    let cap = model.buffer + 1;
    let smp = Sampler::new(model);
    let mut out = QueueSample {
        occupancy_at: vec![0; times.len()],
        time_at_level: if want_average { vec![0.0; cap + 1] } else { Vec::new() },
        ..Default::default()
    };
    let mut r = cfg.initial.r;
    let mut now = 0.0;
    let mut next_arrival = smp.gap(rng);
    let mut next_completion = if r > 0 {
        Some(model.service.sample_residual(cfg.initial.x, rng).expect("validated age"))
    } else {
        None
    };
    let mut pending_times = 0;
    // passages run until resolved or the horizon; time estimands until the horizon
    let run_to_horizon = want_average || !times.is_empty();
    loop {
        debug_assert!(r > 0 || next_completion.is_none(), "empty system with a service in progress");
        debug_assert!(r <= cap);
        let event = next_completion.map_or(next_arrival, |c| c.min(next_arrival));
        let until = event.min(cfg.horizon);
        while pending_times < times.len() && times[pending_times] < until {
            out.occupancy_at[pending_times] = r;
            pending_times += 1;
        }
        if want_average {
            out.time_at_level[r] += until - now;
        }
        if event >= cfg.horizon {
            while pending_times < times.len() {
                out.occupancy_at[pending_times] = r;
                pending_times += 1;
            }
            break;
        }
        now = event;
        if next_completion == Some(event) {
            let d = smp.departure(rng);
            r -= d.min(r);
            if r > 0 {
                next_completion = Some(now + smp.service(rng));
            } else {
                next_completion = None;
                if out.busy_period.is_none() {
                    out.busy_period = Some(now);
                }
            }
        } else {
            let k = smp.batch(rng);
            let admitted = k.min(cap - r);
            if k > admitted && out.first_loss.is_none() {
                out.first_loss = Some((now, k - admitted));
            }
            if r == 0 && admitted > 0 {
                next_completion = Some(now + smp.service(rng));
            }
            r += admitted;
            next_arrival = now + smp.gap(rng);
        }
        let passages_done = (!need.0 || out.busy_period.is_some()) && (!need.1 || out.first_loss.is_some());
        if passages_done && !run_to_horizon {
            break;
        }
    }
    out
}

/// Exit of the free process `D` (services never stop, departures may take
/// it below zero) from `[-lower, upper]`: `(upper exit, time)`.
fn exit_path(cfg: &SimConfig, rng: &mut ChaCha8Rng, lower: usize, upper: usize) -> Option<(bool, f64)> {
    let model = &cfg.model;
    let smp = Sampler::new(model);
    let (lo, hi) = (-(lower as i64), upper as i64);
    let mut d = 0i64;
    let mut next_arrival = smp.gap(rng);
    let mut next_completion = model.service.sample_residual(cfg.initial.x, rng).expect("validated age");
    loop {
        let now = next_arrival.min(next_completion);
        if now > cfg.horizon {
            return None;
        }
        if next_completion <= next_arrival {
            d -= smp.departure(rng) as i64;
            next_completion = now + smp.service(rng);
        } else {
            d += smp.batch(rng) as i64;
            next_arrival = now + smp.gap(rng);
        }
        if d > hi {
            return Some((true, now));
        }
        if d < lo {
            return Some((false, now));
        }
    }
}

#[derive(Debug, Clone, Default)]
struct ReplicationOutcome {
    queue: Option<QueueSample>,
    exits: Vec<Option<(bool, f64)>>,
}

/// Run all replications of `cfg`.
pub fn simulate(cfg: &SimConfig) -> Result<SimReport> {
    cfg.validate()?;
    let mut times: Vec<f64> = cfg
        .estimands
        .iter()
        .filter_map(|e| match e {
            Estimand::OccupancyAt { t } => Some(*t),
            _ => None,
        })
        .collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    let want_average = cfg.estimands.contains(&Estimand::TimeAverageOccupancy);
    let need_busy = cfg.estimands.contains(&Estimand::BusyPeriod);
    let need_loss = cfg
        .estimands
        .iter()
        .any(|e| matches!(e, Estimand::FirstLossTime | Estimand::FirstLossCount));
    let need_queue = need_busy || need_loss || want_average || !times.is_empty();
    let exits: Vec<(usize, usize)> = cfg
        .estimands
        .iter()
        .filter_map(|e| match e {
            Estimand::ExitSide { lower, upper } => Some((*lower, *upper)),
            _ => None,
        })
        .collect();

    let outcomes: Vec<ReplicationOutcome> = (0..cfg.replications as u64)
        .into_par_iter()
        .map(|rep| {
            let queue = need_queue.then(|| {
                let mut rng = replication_rng(cfg.seed, rep, 0);
                queue_path(cfg, &mut rng, &times, want_average, (need_busy, need_loss))
            });
            let mut rng = replication_rng(cfg.seed, rep, 1);
            let exits = exits.iter().map(|&(lo, hi)| exit_path(cfg, &mut rng, lo, hi)).collect();
            ReplicationOutcome { queue, exits }
        })
        .collect();

    let mut report = SimReport {
        replications: cfg.replications,
        seed: cfg.seed,
        estimates: BTreeMap::new(),
        histograms: Vec::new(),
        censored: BTreeMap::new(),
    };
    let levels = cfg.model.buffer + 2;
    let queues = || outcomes.iter().map(|o| o.queue.as_ref().expect("queue path simulated"));
    for e in &cfg.estimands {
        match *e {
            Estimand::BusyPeriod => {
                let xs: Vec<f64> = queues().filter_map(|q| q.busy_period).collect();
                report.censored.insert("busy_period".into(), cfg.replications - xs.len());
                report.estimates.insert("busy_period".into(), SimEstimate::from_samples(&xs));
            }
            Estimand::FirstLossTime => {
                let xs: Vec<f64> = queues().filter_map(|q| q.first_loss.map(|l| l.0)).collect();
                report.censored.insert("first_loss_time".into(), cfg.replications - xs.len());
                report.estimates.insert("first_loss_time".into(), SimEstimate::from_samples(&xs));
            }
            Estimand::FirstLossCount => {
                let ns: Vec<usize> = queues().filter_map(|q| q.first_loss.map(|l| l.1)).collect();
                report.censored.insert("first_loss_count".into(), cfg.replications - ns.len());
                let xs: Vec<f64> = ns.iter().map(|&n| n as f64).collect();
                report.estimates.insert("first_loss_count".into(), SimEstimate::from_samples(&xs));
                let max = ns.iter().copied().max().unwrap_or(0);
                let mut counts = vec![0u64; max + 1];
                for &n in &ns {
                    counts[n] += 1;
                }
                for n in 1..=max {
                    let ind: Vec<f64> = ns.iter().map(|&m| f64::from(u8::from(m == n))).collect();
                    report.estimates.insert(format!("first_loss_count[{n}]"), SimEstimate::from_samples(&ind));
                }
                report.histograms.push(Histogram {
                    name: "first_loss_count".into(),
                    counts,
                });
            }
            Estimand::OccupancyAt { t } => {
                let idx = times.iter().position(|&x| x == t).expect("time registered");
                let name = format!("occupancy_at({t})");
                let ls: Vec<usize> = queues().map(|q| q.occupancy_at[idx]).collect();
                let mut counts = vec![0u64; levels];
                for &l in &ls {
                    counts[l] += 1;
                }
                for level in 0..levels {
                    let ind: Vec<f64> = ls.iter().map(|&l| f64::from(u8::from(l == level))).collect();
                    report.estimates.insert(format!("{name}[{level}]"), SimEstimate::from_samples(&ind));
                }
                report.histograms.push(Histogram { name, counts });
            }
            Estimand::TimeAverageOccupancy => {
                for level in 0..levels {
                    let xs: Vec<f64> = queues().map(|q| q.time_at_level[level] / cfg.horizon).collect();
                    report
                        .estimates
                        .insert(format!("time_average_occupancy[{level}]"), SimEstimate::from_samples(&xs));
                }
            }
            Estimand::ExitSide { lower, upper } => {
                let j = exits.iter().position(|&p| p == (lower, upper)).expect("strip registered");
                let done: Vec<(bool, f64)> = outcomes.iter().filter_map(|o| o.exits[j]).collect();
                let tag = format!("exit[-{lower},{upper}]");
                report.censored.insert(tag.clone(), cfg.replications - done.len());
                let up: Vec<f64> = done.iter().map(|&(u, _)| f64::from(u8::from(u))).collect();
                let time: Vec<f64> = done.iter().map(|&(_, t)| t).collect();
                report.estimates.insert(format!("{tag}.upper"), SimEstimate::from_samples(&up));
                report.estimates.insert(format!("{tag}.time"), SimEstimate::from_samples(&time));
            }
        }
    }
    Ok(report)
}

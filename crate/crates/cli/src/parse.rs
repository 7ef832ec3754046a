//! Option values: float lists, level expressions, estimand lists.

use fbq_core::simulator::Estimand;

use crate::{Failure, Outcome};

pub fn floats(text: &str, option: &str) -> Outcome<Vec<f64>> {
    text.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| Failure::usage(format!("--{option}: `{t}` is not a number")))
        })
        .collect::<Outcome<Vec<_>>>()
        .and_then(|v| {
            if v.is_empty() {
                Err(Failure::usage(format!("--{option}: empty list")))
            } else {
                Ok(v)
            }
        })
}

/// `n`, `B`, `B+n` or `B-n`.
fn level(text: &str, b: usize) -> Outcome<usize> {
    let bad = || Failure::usage(format!("--levels: cannot read `{text}`"));
    let t = text.trim();
    let value = if let Some(rest) = t.strip_prefix('B') {
        let rest = rest.trim();
        if rest.is_empty() {
            b as i64
        } else if let Some(n) = rest.strip_prefix('+') {
            b as i64 + n.trim().parse::<i64>().map_err(|_| bad())?
        } else if let Some(n) = rest.strip_prefix('-') {
            b as i64 - n.trim().parse::<i64>().map_err(|_| bad())?
        } else {
            return Err(bad());
        }
    } else {
        t.parse::<i64>().map_err(|_| bad())?
    };
    if value < 0 || value > b as i64 + 1 {
        return Err(Failure::usage(format!("--levels: `{text}` = {value} outside 0..={}", b + 1)));
    }
    Ok(value as usize)
}

/// Comma-separated levels and inclusive `a..b` ranges.
pub fn levels(text: &str, b: usize) -> Outcome<Vec<usize>> {
    let mut out = Vec::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part.split_once("..") {
            Some((lo, hi)) => {
                let (lo, hi) = (level(lo, b)?, level(hi, b)?);
                if lo > hi {
                    return Err(Failure::usage(format!("--levels: empty range `{part}`")));
                }
                out.extend(lo..=hi);
            }
            None => out.push(level(part, b)?),
        }
    }
    if out.is_empty() {
        return Err(Failure::usage("--levels: empty list"));
    }
    Ok(out)
}

pub fn estimands(text: &str) -> Outcome<Vec<Estimand>> {
    text.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| {
            let bad = |why: &str| Failure::usage(format!("--estimands: `{t}`: {why}"));
            let mut parts = t.split(':');
            let head = parts.next().unwrap_or_default();
            let args: Vec<&str> = parts.collect();
            let e = match (head, args.as_slice()) {
                ("busy_period", []) => Estimand::BusyPeriod,
                ("first_loss_time", []) => Estimand::FirstLossTime,
                ("first_loss_count", []) => Estimand::FirstLossCount,
                ("time_average_occupancy", []) => Estimand::TimeAverageOccupancy,
                ("occupancy_at", [t]) => Estimand::OccupancyAt {
                    t: t.parse().map_err(|_| bad("time is not a number"))?,
                },
                ("exit_side", [lo, hi]) => Estimand::ExitSide {
                    lower: lo.parse().map_err(|_| bad("lower is not a count"))?,
                    upper: hi.parse().map_err(|_| bad("upper is not a count"))?,
                },
                _ => return Err(bad("unknown estimand or wrong arguments")),
            };
            Ok(e)
        })
        .collect()
}

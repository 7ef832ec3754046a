//! The difference process reflected at an upper boundary: passage below
//! zero, increments up to an exponential horizon, the ergodic law and the
//! two-sided law with a lower killing level.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::exit::density_row;
use crate::model::QueueModel;
use crate::numeric::{integrate_vec, KahanSum};
use crate::resolvent::{Resolvent, ResolventTable};

const GENERAL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReflectedLaw {
    pub s: f64,
    /// `E e^{-s tau}` of the first passage below zero.
    pub passage_lt: f64,
    pub passage_mean: f64,
    /// The overshoot below zero is geometric with this parameter.
    pub overshoot_ratio: f64,
}

impl ReflectedLaw {
    /// `E[e^{-s tau}; overshoot = m]`.
    pub fn passage_joint(&self, m: usize) -> f64 {
        if m == 0 {
            0.0
        } else {
            self.passage_lt * (1.0 - self.overshoot_ratio) * self.overshoot_ratio.powi(m as i32 - 1)
        }
    }
}

fn check_level(r: usize, b: usize) -> Result<()> {
    if r > b {
        return Err(invalid("r", format!("start level {r} above the boundary {b}")));
    }
    Ok(())
}

/// `(f_x + (1-f) S_j(x)) / (f + (1-f) E S_{delta+B-1})` with `S_{-1} = 0`.
pub(crate) fn passage_ratio(ctx: &Resolvent, t: &ResolventTable, x: f64, j: i64, b: usize) -> Result<f64> {
    let model = &ctx.model;
    let f = model.service.lt(ctx.s);
    let fx = model.service.residual_lt(x, ctx.s)?;
    let es = ctx.expect_partial(b as i64 - 1);
    Ok((fx + (1.0 - f) * t.s_at(j)) / (f + (1.0 - f) * es))
}

/// `E eta_x - E eta + E eta [E S_{delta+B-1} - S_j(x)]` at `s = 0`.
pub(crate) fn passage_mean(model: &QueueModel, x: f64, j: i64, b: usize) -> Result<f64> {
    let ctx = Resolvent::new(model, 0.0, b)?;
    let t = ctx.table(x, j.max(0) as usize)?;
    let eta = model.service.mean();
    Ok(model.service.residual_mean(x)? - eta + eta * (ctx.expect_partial(b as i64 - 1) - t.s_at(j)))
}

/// Passage below zero of the process started at `r` with age `x` and
/// reflected at `b`, for geometric departure batches.
pub fn reflected_passage_geometric(model: &QueueModel, x: f64, r: usize, b: usize, s: f64) -> Result<ReflectedLaw> {
    check_level(r, b)?;
    if !(s >= 0.0) {
        return Err(invalid("s", format!("must be >= 0, got {s}")));
    }
    model.service.check_age(x)?;
    let j = b as i64 - r as i64 - 1;
    let ctx = Resolvent::new(model, s, b)?;
    let t = ctx.table(x, j.max(0) as usize)?;
    Ok(ReflectedLaw {
        s,
        passage_lt: passage_ratio(&ctx, &t, x, j, b)?,
        passage_mean: passage_mean(model, x, j, b)?,
        overshoot_ratio: model.lambda,
    })
}

/// Passage below zero when the jump away from the boundary has the law
/// `delta_pmf[i-1] = P[delta = i]` while the process between visits to the
/// boundary keeps the model's geometric departures. `m = None` sums over
/// overshoots.
pub fn reflected_passage_general(
    model: &QueueModel,
    delta_pmf: &[f64],
    x: f64,
    r: usize,
    b: usize,
    m: Option<usize>,
    s: f64,
) -> Result<f64> {
    check_level(r, b)?;
    if !(s > 0.0) {
        return Err(invalid("s", format!("must be > 0, got {s}")));
    }
    if m == Some(0) {
        return Err(invalid("m", "overshoot index starts at 1"));
    }
    let total: f64 = delta_pmf.iter().sum();
    if (total - 1.0).abs() > 1e-12 || delta_pmf.iter().any(|p| *p < 0.0) {
        return Err(Error::PmfNotNormalized { sum: total });
    }
    model.service.check_age(x)?;
    let pd = |i: usize| if i >= 1 && i <= delta_pmf.len() { delta_pmf[i - 1] } else { 0.0 };
    let ctx = Resolvent::new(model, s, b)?;
    let lam = model.lambda;
    let geo = |m: Option<usize>| match m {
        Some(m) => (1.0 - lam) * lam.powi(m as i32 - 1),
        None => 1.0,
    };
    let eq = ctx.expect_q(b as i64);
    let base = ctx.base().clone();
    let tx = ctx.table(x, b)?;
    let k = b - r;
    let c = ctx.c();

    // a^j(0) for j = 1..=b in slots 0..b, a^k(x) in slot b
    let mut br = model.service.breakpoints();
    br.push(x);
    let end = model.service.support_end().unwrap_or_else(|| model.service.upper_time(1e-18));
    let integrand = |l: f64, out: &mut [f64]| {
        out.iter_mut().for_each(|v| *v = 0.0);
        let Ok(fl) = model.service.residual_lt(l, s) else {
            return;
        };
        let (d0, phi) = density_row(model, s, c, 0.0, &base.q, l, None);
        let e0 = ctx.expect(&d0, b as i64, phi);
        for j in 1..=b {
            out[j - 1] = (d0[j] - base.q[j] / eq * e0) * fl;
        }
        let (dx, _) = density_row(model, s, c, x, &tx.q[..=k], l, None);
        out[b] = (dx[k] - tx.q[k] / eq * e0) * fl;
    };
    let a = integrate_vec(integrand, 0.0, end, &br, b + 1, GENERAL_TOL)?;

    let mut big_a = KahanSum::new();
    for j in 1..=b {
        big_a.add(pd(j) * a[j - 1]);
    }
    let mut refl = KahanSum::new();
    refl.add(match m {
        Some(m) => pd(m + b),
        None => 1.0 - (1..=b).map(pd).sum::<f64>(),
    });
    for i in 1..=b {
        // lower exit of [-(b-i), i] from zero
        refl.add(pd(i) * base.q[i] / eq * geo(m));
    }
    let direct = tx.q[k] / eq * geo(m);
    Ok(direct + a[b] / (1.0 - big_a.value()) * refl.value())
}

/// `P[reflected-at-k process started at 0 is <= u at nu_s]`.
pub fn reflected_increments(model: &QueueModel, x: f64, k: usize, u: i64, s: f64) -> Result<f64> {
    if !(s > 0.0) {
        return Err(invalid("s", format!("must be > 0, got {s}")));
    }
    if u > k as i64 {
        return Err(invalid("u", format!("must be <= k = {k}, got {u}")));
    }
    if u == k as i64 {
        return Ok(1.0);
    }
    let ctx = Resolvent::new(model, s, k)?;
    let t = ctx.table(x, k)?;
    let c = ctx.c();
    let lam = model.lambda;
    let kc = model.cumulant_real(c)?;
    let big_f = s * (1.0 - c) / ((1.0 - lam) * (s - kc));
    let f = model.service.lt(s);
    let fx = model.service.residual_lt(x, s)?;
    Ok(t.a_at(u) + c.powi((k as i64 - u - 1) as i32) * big_f * (fx / (1.0 - f) + t.s_at(k as i64 - 1)))
}

/// Limit of [`reflected_increments`] as the horizon grows; exists above
/// unit load.
pub fn reflected_ergodic(model: &QueueModel, k: usize, u: i64) -> Result<f64> {
    let rho = model.rho();
    if rho <= 1.0 {
        return Err(Error::NoErgodicLaw { rho });
    }
    if u >= k as i64 {
        return Ok(1.0);
    }
    let c = crate::root::solve_c(model, 0.0)?.c;
    let factor = model.batch.mean() / rho * (1.0 - c) / (1.0 - model.batch.pgf(c));
    Ok(factor * c.powi((k as i64 - u - 1) as i32))
}

/// `P[process reflected at k, started at 0, is <= u at nu_s and has not
/// passed below -r]`.
pub fn reflected_two_sided(model: &QueueModel, x: f64, r: usize, k: usize, u: i64, s: f64) -> Result<f64> {
    if !(s > 0.0) {
        return Err(invalid("s", format!("must be > 0, got {s}")));
    }
    if u < -(r as i64) || u > k as i64 {
        return Err(invalid("u", format!("must lie in [-{r}, {k}], got {u}")));
    }
    model.service.check_age(x)?;
    let b = k + r;
    let ctx = Resolvent::new(model, s, b)?;
    let t = ctx.table(x, k)?;
    let ratio = passage_ratio(&ctx, &t, x, k as i64 - 1, b)?;
    if u == k as i64 {
        return Ok(1.0 - ratio);
    }
    Ok(t.a_at(u) - ratio * ctx.expect_a(u + r as i64))
}

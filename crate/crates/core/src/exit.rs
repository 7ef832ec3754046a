//! Exit of the difference process `D_x(t)` (compound Poisson arrivals
//! minus geometric departure batches) from a strip, in transform form.

use serde::{Deserialize, Serialize};

use crate::compound_poisson::{batch_vec, mixed_from_residual, panjer};
use crate::error::{invalid, Result};
use crate::model::QueueModel;
use crate::numeric::KahanSum;
use crate::resolvent::{Resolvent, ResolventTable};

fn need_positive(s: f64) -> Result<()> {
    if s > 0.0 && s.is_finite() {
        Ok(())
    } else {
        Err(invalid("s", format!("must be finite and > 0, got {s}")))
    }
}

fn geometric(lambda: f64, m: usize) -> Result<f64> {
    if m == 0 {
        return Err(invalid("m", "overshoot index starts at 1"));
    }
    Ok((1.0 - lambda) * lambda.powi(m as i32 - 1))
}

/// `E[e^{-s tau_k}; T = m]` for the first passage below `-k` with
/// overshoot `T`.
pub fn lower_passage(model: &QueueModel, x: f64, k: usize, m: usize, s: f64) -> Result<f64> {
    need_positive(s)?;
    let ctx = Resolvent::new(model, s, 0)?;
    let c = ctx.c();
    let z = s - model.cumulant_real(c)?;
    Ok(model.service.residual_lt(x, z)? * c.powi(k as i32) * geometric(model.lambda, m)?)
}

/// `1 - s/(s-k(c)) Q_k/(1-lambda)`, with the `s/(s-k(c))` factor shared
/// by the upper-passage functionals.
pub(crate) fn escape_factor(ctx: &Resolvent) -> f64 {
    let s = ctx.s;
    let kc = ctx.model.cumulant_real(ctx.c()).unwrap_or(0.0);
    s / ((s - kc) * (1.0 - ctx.model.lambda))
}

pub(crate) fn upper_lt_from(ctx: &Resolvent, t: &ResolventTable, k: usize) -> f64 {
    1.0 - escape_factor(ctx) * t.q[k] - t.a[k]
}

/// `E e^{-s tau^k(x)}` for the first passage above level `k`.
pub fn upper_passage_lt(model: &QueueModel, x: f64, k: usize, s: f64) -> Result<f64> {
    need_positive(s)?;
    let ctx = Resolvent::new(model, s, k)?;
    let t = ctx.table(x, k)?;
    Ok(upper_lt_from(&ctx, &t, k))
}

/// Overshoot weights `w_j`: `P[kappa = j + m]` for a fixed overshoot `m`,
/// or `P[kappa > j]` when summed over all overshoots.
fn overshoot_weights(model: &QueueModel, m: Option<usize>, n: usize) -> Vec<f64> {
    match m {
        Some(m) => (0..n).map(|j| model.batch.pmf(j + m)).collect(),
        None => (0..n).map(|j| model.batch.tail(j)).collect(),
    }
}

/// `sum_n c^n P[kappa = n + m]`, or `(1 - E c^kappa)/(1 - c)` when summed.
fn root_series(model: &QueueModel, c: f64, m: Option<usize>) -> f64 {
    match m {
        Some(m) => model.batch.excess_pgf(m - 1, c.into()).re / c,
        None => (1.0 - model.batch.pgf(c)) / (1.0 - c),
    }
}

fn convolve(p: &[f64], q: &[f64], n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| {
            let mut acc = KahanSum::new();
            for i in 0..=k.min(p.len() - 1) {
                if k - i < q.len() {
                    acc.add(p[i] * q[k - i]);
                }
            }
            acc.value()
        })
        .collect()
}

/// `h_i = int e^{-su} P[eta_x > u] rho_i(u) du` from the mixed row `f(x)`.
fn survival_row(ctx: &Resolvent, fx: &[f64], n: usize) -> Vec<f64> {
    let rho = ctx.rho_row();
    let conv = convolve(rho, fx, n);
    (0..n).map(|i| (rho[i] - conv[i]) / ctx.s).collect()
}

/// `(1 - f(s - k(c)))/(s - k(c))` times [`root_series`]; `mu` times this is
/// also the generating function of the age-zero overshoot row at `lambda`.
fn root_term(ctx: &Resolvent, m: Option<usize>) -> Result<f64> {
    let model = &ctx.model;
    let c = ctx.c();
    let z = ctx.s - model.cumulant_real(c)?;
    Ok((1.0 - (c - model.lambda) / (1.0 - model.lambda)) / z * root_series(model, c, m))
}

/// Values `E[e^{-s tau^k}; T^k = m]` (or summed over `m`) for `k < n`,
/// obtained by integrating the joint density over the age at crossing.
pub(crate) fn overshoot_row(ctx: &Resolvent, x: f64, t: &ResolventTable, m: Option<usize>, n: usize) -> Result<Vec<f64>> {
    let model = &ctx.model;
    let fx = if x == 0.0 {
        ctx.f0_row()[..n].to_vec()
    } else {
        let res = model.service.residual(x)?;
        mixed_from_residual(model, &res, ctx.s, n - 1)?
    };
    let w = overshoot_weights(model, m, n);
    let hx = survival_row(ctx, &fx, n);
    let h0 = survival_row(ctx, &ctx.f0_row()[..n], n);
    let root_term = root_term(ctx, m)?;
    let first = convolve(&hx, &w, n);
    let inner = convolve(&h0, &w, n);
    let third = convolve(&t.q[..n], &inner, n);
    Ok((0..n)
        .map(|k| model.mu * (first[k] + t.q[k] * root_term - third[k]))
        .collect())
}

/// `E[e^{-s tau^k(x)}; T^k = m]` (`m = None` sums over overshoots).
pub fn upper_overshoot(model: &QueueModel, x: f64, k: usize, m: Option<usize>, s: f64) -> Result<f64> {
    need_positive(s)?;
    if m == Some(0) {
        return Err(invalid("m", "overshoot index starts at 1"));
    }
    let ctx = Resolvent::new(model, s, k)?;
    let t = ctx.table(x, k)?;
    Ok(overshoot_row(&ctx, x, &t, m, k + 1)?[k])
}

/// Density in the age `l` at crossing of the first passage above `k`, for
/// every `k < q.len()`, with `q` the resolvent row at age `x`. Also returns
/// `Phi(l)`, the generating function of the age-zero row at `lambda`.
pub(crate) fn density_row(model: &QueueModel, s: f64, c: f64, x: f64, q: &[f64], l: f64, m: Option<usize>) -> (Vec<f64>, f64) {
    let n = q.len();
    let sv = model.service.survival(l);
    if sv <= 0.0 {
        return (vec![0.0; n], 0.0);
    }
    let a = batch_vec(&model.batch, n - 1);
    let w = overshoot_weights(model, m, n);
    let base = (-s * l).exp() * sv;
    let kc = model.cumulant_real(c).unwrap_or(0.0);
    let phi = base * model.mu * (l * kc).exp() * root_series(model, c, m);
    let inner = convolve(&panjer(model.mu * l, &a, n - 1), &w, n);
    let third = convolve(q, &inner, n);
    let first = if l > x {
        let u = l - x;
        let f = (-s * u).exp() * sv / model.service.survival(x);
        convolve(&panjer(model.mu * u, &a, n - 1), &w, n).into_iter().map(|v| f * v).collect()
    } else {
        vec![0.0; n]
    };
    let row = (0..n)
        .map(|k| model.mu * first[k] + phi * q[k] - base * model.mu * third[k])
        .collect();
    (row, phi)
}

/// Joint density of the age of the service in progress at the first
/// passage above `k`, evaluated pointwise.
#[derive(Debug, Clone)]
pub struct UpperDensity {
    model: QueueModel,
    x: f64,
    k: usize,
    s: f64,
    c: f64,
    q: Vec<f64>,
    a: Vec<f64>,
}

pub fn upper_passage_density(model: &QueueModel, x: f64, k: usize, s: f64) -> Result<UpperDensity> {
    need_positive(s)?;
    model.service.check_age(x)?;
    let ctx = Resolvent::new(model, s, k)?;
    let t = ctx.table(x, k)?;
    Ok(UpperDensity {
        model: model.clone(),
        x,
        k,
        s,
        c: ctx.c(),
        q: t.q,
        a: batch_vec(&model.batch, k),
    })
}

impl UpperDensity {
    /// Density at age `l` for overshoot `m`, or summed over overshoots.
    pub fn eval(&self, l: f64, m: Option<usize>) -> f64 {
        let model = &self.model;
        let k = self.k;
        let sv = model.service.survival(l);
        if sv <= 0.0 {
            return 0.0;
        }
        let w = overshoot_weights(model, m, k + 1);
        let p = |row: &[f64], j: usize| -> f64 {
            let mut acc = KahanSum::new();
            for i in 0..=j {
                acc.add(row[i] * w[j - i]);
            }
            model.mu * acc.value()
        };
        let mut out = KahanSum::new();
        if l > self.x {
            let u = l - self.x;
            let row = panjer(model.mu * u, &self.a, k);
            out.add((-self.s * u).exp() * sv / model.service.survival(self.x) * p(&row, k));
        }
        let base = (-self.s * l).exp() * sv;
        let kc = model.cumulant_real(self.c).unwrap_or(0.0);
        out.add(base * model.mu * (l * kc).exp() * root_series(model, self.c, m) * self.q[k]);
        let row = panjer(model.mu * l, &self.a, k);
        for i in 0..=k {
            out.add(-base * self.q[i] * p(&row, k - i));
        }
        out.value()
    }
}

/// Two-sided exit from `[-r, k]`, started at `0` with age `x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExitLaw {
    pub s: f64,
    /// `E[e^{-s chi}; lower exit]`.
    pub lower_lt: f64,
    /// `E[e^{-s chi}; upper exit]`.
    pub upper_lt: f64,
    pub lower_prob: f64,
    pub upper_prob: f64,
    pub lambda: f64,
    /// `E[e^{-s chi}; upper exit, overshoot = m]` for `m = 1, 2, ...`.
    pub upper_overshoot: Vec<f64>,
}

impl ExitLaw {
    /// `E[e^{-s chi}; lower exit, overshoot = m]`; the overshoot below is
    /// geometric and independent of the exit time.
    pub fn lower_overshoot(&self, m: usize) -> f64 {
        if m == 0 {
            0.0
        } else {
            self.lower_lt * (1.0 - self.lambda) * self.lambda.powi(m as i32 - 1)
        }
    }

    pub fn upper_overshoot_at(&self, m: usize) -> f64 {
        if m == 0 {
            0.0
        } else {
            self.upper_overshoot.get(m - 1).copied().unwrap_or(0.0)
        }
    }
}

fn check_strip(model: &QueueModel, x: f64, r: usize, k: usize) -> Result<usize> {
    model.service.check_age(x)?;
    Ok(r + k)
}

/// `(lower, upper)` exit transforms from a prepared context.
pub(crate) fn two_sided_from(ctx: &Resolvent, t: &ResolventTable, k: usize, b: usize) -> (f64, f64) {
    let g = ctx.geom(b);
    let ratio = t.q[k] / g.eq;
    (ratio, 1.0 - t.a[k] - ratio * (1.0 - g.ea))
}

/// Largest overshoot index with non-negligible mass.
fn overshoot_horizon(model: &QueueModel) -> usize {
    let mut m = model.batch.explicit_len();
    while model.batch.tail(m) > 1e-16 && m < 2_000 {
        m += 1;
    }
    m.max(1)
}

pub fn two_sided(model: &QueueModel, x: f64, r: usize, k: usize, s: f64) -> Result<ExitLaw> {
    if !(s >= 0.0) {
        return Err(invalid("s", format!("must be >= 0, got {s}")));
    }
    let b = check_strip(model, x, r, k)?;
    let ctx = Resolvent::new(model, s, b)?;
    let t = ctx.table(x, k)?;
    let (lower_lt, upper_lt) = two_sided_from(&ctx, &t, k, b);
    let (lower_prob, upper_prob) = if s == 0.0 {
        (lower_lt, upper_lt)
    } else {
        let ctx0 = Resolvent::new(model, 0.0, b)?;
        let t0 = ctx0.table(x, k)?;
        two_sided_from(&ctx0, &t0, k, b)
    };
    let upper_overshoot = if s > 0.0 {
        let g = ctx.geom(b);
        let n = ctx.kmax() + 1;
        let base = ctx.base();
        let horizon = overshoot_horizon(model);
        let mut out = Vec::with_capacity(horizon);
        for m in 1..=horizon {
            let ux = overshoot_row(&ctx, x, &t, Some(m), k + 1)?;
            let u0 = overshoot_row(&ctx, 0.0, base, Some(m), n)?;
            let e = ctx.expect(&u0, b as i64, model.mu * root_term(&ctx, Some(m))?);
            out.push(ux[k] - t.q[k] / g.eq * e);
        }
        out
    } else {
        Vec::new()
    };
    Ok(ExitLaw {
        s,
        lower_lt,
        upper_lt,
        lower_prob,
        upper_prob,
        lambda: model.lambda,
        upper_overshoot,
    })
}

/// `E[e^{-s nu_s} ; sup_{t<=nu_s} D_x(t) <= k, D_x(nu_s) <= u]` for an
/// exponential horizon `nu_s`.
pub fn sup_joint(model: &QueueModel, x: f64, k: usize, u: i64, s: f64) -> Result<f64> {
    need_positive(s)?;
    if u > k as i64 {
        return Err(invalid("u", format!("must be <= k = {k}, got {u}")));
    }
    let ctx = Resolvent::new(model, s, k)?;
    let t = ctx.table(x, k)?;
    Ok(sup_joint_from(&ctx, &t, k, u))
}

pub(crate) fn sup_joint_from(ctx: &Resolvent, t: &ResolventTable, k: usize, u: i64) -> f64 {
    let c = ctx.c();
    t.a_at(u) + escape_factor(ctx) * c.powi((k as i64 - u) as i32) * t.q[k]
}

/// `P[D_x(nu_s) <= u, the strip [-r, k] not left before nu_s]`.
pub fn trivariate(model: &QueueModel, x: f64, r: usize, k: usize, u: i64, s: f64) -> Result<f64> {
    need_positive(s)?;
    let b = check_strip(model, x, r, k)?;
    if u < -(r as i64) || u > k as i64 {
        return Err(invalid("u", format!("must lie in [-{r}, {k}], got {u}")));
    }
    let ctx = Resolvent::new(model, s, b)?;
    let t = ctx.table(x, k)?;
    let g = ctx.geom(b);
    Ok(t.a_at(u) - t.q[k] / g.eq * ctx.expect_a(r as i64 + u))
}

//! Queue-level quantities of M^k|G^d|1|B: busy period, first loss, the
//! number lost at the first loss, and transient and stationary counts.
//!
//! While the server is busy the queue length moves like `r + D_x(t)`, so
//! every quantity is a combination of exit and reflected functionals of
//! the difference process.

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::compound_poisson::occupation_row;
use crate::error::{invalid, Error, Result};
use crate::model::QueueModel;
use crate::numeric::KahanSum;
use crate::reflected::{passage_mean, passage_ratio};
use crate::resolvent::{companion, Resolvent, ResolventTable};

/// Occupied places `r` (0..=B+1) and the age `x` of the service in progress.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemState {
    pub r: usize,
    pub x: f64,
}

impl SystemState {
    pub const EMPTY: SystemState = SystemState { r: 0, x: 0.0 };

    pub fn new(r: usize, x: f64) -> Self {
        Self { r, x }
    }

    pub fn validate(&self, model: &QueueModel) -> Result<()> {
        if self.r > model.buffer + 1 {
            return Err(Error::InvalidState(format!(
                "r = {} exceeds the waiting room B + 1 = {}",
                self.r,
                model.buffer + 1
            )));
        }
        if self.r == 0 && self.x != 0.0 {
            return Err(Error::InvalidState("an empty system has no service in progress (x must be 0)".into()));
        }
        if !(self.x >= 0.0) {
            return Err(Error::InvalidState(format!("age must be >= 0, got {}", self.x)));
        }
        model.service.check_age(self.x)
    }
}

/// How `raw` relates to the distribution function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CountConvention {
    /// `raw[u]`, `u >= 1`, is `P[1 <= d <= u]`; `raw[0] = P[d = 0]`.
    LevelZeroExcluded,
    /// `raw` is the distribution function itself.
    Cumulative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountDistribution {
    /// `None` for the stationary law, otherwise the transform variable.
    pub s: Option<f64>,
    pub masses: Vec<f64>,
    pub cdf: Vec<f64>,
    pub raw: Vec<f64>,
    pub convention: CountConvention,
}

impl CountDistribution {
    fn from_raw(s: f64, raw: Vec<f64>) -> Self {
        let mut cdf = Vec::with_capacity(raw.len());
        cdf.push(raw[0]);
        for v in &raw[1..] {
            cdf.push(raw[0] + v);
        }
        let masses = diff(&cdf);
        Self {
            s: Some(s),
            masses,
            cdf,
            raw,
            convention: CountConvention::LevelZeroExcluded,
        }
    }

    fn from_masses(masses: Vec<f64>) -> Self {
        let mut acc = KahanSum::new();
        let cdf: Vec<f64> = masses
            .iter()
            .map(|m| {
                acc.add(*m);
                acc.value()
            })
            .collect();
        Self {
            s: None,
            raw: cdf.clone(),
            masses,
            cdf,
            convention: CountConvention::Cumulative,
        }
    }

    pub fn len(&self) -> usize {
        self.masses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masses.is_empty()
    }

    pub fn mean(&self) -> f64 {
        kahan(self.masses.iter().enumerate().map(|(i, p)| i as f64 * p))
    }
}

fn diff(cdf: &[f64]) -> Vec<f64> {
    let mut out = vec![cdf[0]];
    out.extend(cdf.windows(2).map(|w| w[1] - w[0]));
    out
}

fn kahan(it: impl IntoIterator<Item = f64>) -> f64 {
    crate::numeric::kahan_sum(it)
}

/// Everything at one `s` that does not depend on the start state.
#[derive(Debug)]
struct SContext {
    ctx: Resolvent,
    eq: f64,
    ea: f64,
    q_tilde: f64,
    a_tilde: f64,
    b_tilde: f64,
}

/// Queue functionals of one model, with per-`s` tables cached behind a
/// read-mostly lock.
#[derive(Debug)]
pub struct QueueAnalyzer {
    model: QueueModel,
    cache: RwLock<HashMap<u64, Arc<SContext>>>,
}

impl Clone for QueueAnalyzer {
    fn clone(&self) -> Self {
        Self::new(self.model.clone())
    }
}

impl QueueAnalyzer {
    pub fn new(model: QueueModel) -> Self {
        Self {
            model,
            cache: RwLock::new(HashMap::new()),
        }
    }

    pub fn model(&self) -> &QueueModel {
        &self.model
    }

    fn b(&self) -> usize {
        self.model.buffer
    }

    fn context(&self, s: f64) -> Result<Arc<SContext>> {
        let key = s.to_bits();
        if let Some(c) = self.cache.read().expect("cache lock").get(&key) {
            return Ok(c.clone());
        }
        let built = Arc::new(self.build_context(s)?);
        let mut w = self.cache.write().expect("cache lock");
        Ok(w.entry(key).or_insert(built).clone())
    }

    fn build_context(&self, s: f64) -> Result<SContext> {
        let model = &self.model;
        let b = self.b();
        let ctx = Resolvent::new(model, s, b + 1)?;
        let base = ctx.base();
        let g = ctx.geom(b);
        let a = |i: usize| model.batch.pmf(i);
        let q_tilde = kahan((1..=b + 1).map(|i| a(i) * base.q[b + 1 - i]));
        let a_tilde = kahan((1..=b + 1).map(|i| a(i) * base.a[b + 1 - i]));
        let mut busy0 = vec![0.0; b + 2];
        for (i, slot) in busy0.iter_mut().enumerate().skip(1) {
            *slot = passage_ratio(&ctx, base, 0.0, b as i64 - i as i64, b)?;
        }
        let b_tilde = model.batch.tail(b) * busy0[b + 1] + kahan((1..=b).map(|i| a(i) * busy0[i]));
        Ok(SContext {
            eq: g.eq,
            ea: g.ea,
            q_tilde,
            a_tilde,
            b_tilde,
            ctx,
        })
    }

    fn table(&self, sc: &SContext, x: f64, kmax: usize) -> Result<ResolventTable> {
        sc.ctx.table(x, kmax)
    }

    fn busy_state(&self, state: SystemState) -> Result<()> {
        state.validate(&self.model)?;
        if state.r == 0 {
            return Err(Error::InvalidState("no busy period starts from the empty state".into()));
        }
        Ok(())
    }

    /// `E e^{-s b_r(x)}`: time until the system first empties.
    pub fn busy_period_lt(&self, state: SystemState, s: f64) -> Result<f64> {
        self.busy_state(state)?;
        if !(s >= 0.0) {
            return Err(invalid("s", format!("must be >= 0, got {s}")));
        }
        let b = self.b();
        // the busy period from r is the reflected passage from r - 1
        let j = b as i64 - state.r as i64;
        let sc = self.context(s)?;
        let t = self.table(&sc, state.x, j.max(0) as usize)?;
        passage_ratio(&sc.ctx, &t, state.x, j, b)
    }

    pub fn busy_period_mean(&self, state: SystemState) -> Result<f64> {
        self.busy_state(state)?;
        let b = self.b();
        passage_mean(&self.model, state.x, b as i64 - state.r as i64, b)
    }

    /// `1 - E e^{-s l_r(x)}`, computed without cancellation near `s = 0`.
    pub fn first_loss_complement(&self, state: SystemState, s: f64) -> Result<f64> {
        state.validate(&self.model)?;
        if !(s > 0.0) {
            return Err(invalid("s", format!("must be > 0, got {s}")));
        }
        let sc = self.context(s)?;
        let mu = self.model.mu;
        let w = mu / (s + mu);
        let ratio = (sc.ea - w * sc.a_tilde - s / (s + mu)) / (sc.eq - w * sc.q_tilde);
        if state.r == 0 {
            return Ok(sc.ea - sc.eq * ratio);
        }
        let k = self.b() + 1 - state.r;
        let t = self.table(&sc, state.x, k)?;
        Ok(t.a[k] - t.q[k] * ratio)
    }

    /// `E e^{-s l_r(x)}` of the time of the first loss.
    pub fn first_loss_lt(&self, state: SystemState, s: f64) -> Result<f64> {
        Ok(1.0 - self.first_loss_complement(state, s)?)
    }

    /// Mean time to the first loss, by Richardson-extrapolated difference
    /// quotients `(1 - l(h))/h` at a step scaled to the answer.
    pub fn first_loss_mean(&self, state: SystemState) -> Result<f64> {
        let quotient = |h: f64| -> Result<f64> { Ok(self.first_loss_complement(state, h)? / h) };
        let rich = |h: f64| -> Result<f64> { Ok(2.0 * quotient(h / 2.0)? - quotient(h)?) };
        let scale = self.model.mu.min(1.0 / self.model.service.mean());
        let rough = rich(1e-3 * scale)?;
        let h = 1e-3 / rough.max(1.0 / scale);
        // second Richardson level: error O(h^3 m^3)
        let (d1, d2, d4) = (quotient(h)?, quotient(h / 2.0)?, quotient(h / 4.0)?);
        let r1 = 2.0 * d2 - d1;
        let r2 = 2.0 * d4 - d2;
        Ok((4.0 * r2 - r1) / 3.0)
    }

    /// `E[e^{-s l_r(x)} z^{lost}]` for unit departures.
    pub fn first_loss_joint(&self, state: SystemState, s: f64, z: Complex64) -> Result<Complex64> {
        let (sc, k, t) = self.joint_setup(state, s)?;
        if z.norm() > 1.0 + 1e-15 {
            return Err(Error::OutsideUnitDisk { modulus: z.norm() });
        }
        let model = &self.model;
        let mu = model.mu;
        let b = self.b();
        let base = sc.ctx.base();
        let e = |i: usize| model.batch.excess_pgf(i, z);
        let mut first = Complex64::new(0.0, 0.0);
        for i in 0..=k {
            first += e(i) * (t.a_at((k - i) as i64) - t.a_at(k as i64 - i as i64 - 1));
        }
        let mut second = Complex64::new(0.0, 0.0);
        for i in 0..=b + 1 {
            second += e(i) * (base.q_at((b + 1 - i) as i64) - base.q_at(b as i64 - i as i64));
        }
        let qb = base.q[b + 1];
        let den = s + mu - mu * sc.q_tilde / qb;
        Ok(first * (mu / s) + second * (mu * t.q[k] / qb / den))
    }

    /// `E[e^{-s l_r(x)}; lost = n]` for `n >= 1`, unit departures.
    pub fn first_loss_joint_coeff(&self, state: SystemState, s: f64, n: usize) -> Result<f64> {
        if n == 0 {
            return Ok(0.0);
        }
        let (sc, k, t) = self.joint_setup(state, s)?;
        let model = &self.model;
        let mu = model.mu;
        let b = self.b();
        let base = sc.ctx.base();
        let a = |i: usize| model.batch.pmf(i);
        let mut first = KahanSum::new();
        first.add(a(n) * t.a[k]);
        for i in 1..=k {
            first.add((a(n + i) - a(n + i - 1)) * t.a[k - i]);
        }
        let qb = base.q[b + 1];
        let mut second = KahanSum::new();
        second.add(a(n) * qb);
        for i in 1..=b + 1 {
            second.add((a(n + i) - a(n + i - 1)) * base.q[b + 1 - i]);
        }
        let den = s + mu - mu * sc.q_tilde / qb;
        Ok(mu / s * first.value() + mu * t.q[k] / qb * second.value() / den)
    }

    fn joint_setup(&self, state: SystemState, s: f64) -> Result<(Arc<SContext>, usize, ResolventTable)> {
        state.validate(&self.model)?;
        if self.model.lambda != 0.0 {
            return Err(Error::LossLawNeedsUnitDepartures { lambda: self.model.lambda });
        }
        if !(s > 0.0) {
            return Err(invalid("s", format!("must be > 0, got {s}")));
        }
        let sc = self.context(s)?;
        let k = self.b() + 1 - state.r;
        let t = self.table(&sc, state.x, k)?;
        Ok((sc, k, t))
    }

    /// Law of the number in system at an independent `exp(s)` time.
    pub fn transient_counts(&self, state: SystemState, s: f64) -> Result<CountDistribution> {
        state.validate(&self.model)?;
        if !(s > 0.0) {
            return Err(invalid("s", format!("must be > 0, got {s}")));
        }
        let model = &self.model;
        let (mu, lam) = (model.mu, model.lambda);
        let b = self.b();
        let sc = self.context(s)?;
        let base = sc.ctx.base();
        let den = s + mu - mu * sc.b_tilde;
        let c_u = |u: usize| s * base.q[u] / (1.0 - lam) - s + lam * (s + mu) * (base.a[u] - sc.ctx.expect_a(u as i64));
        let mut raw = vec![0.0; b + 2];
        if state.r == 0 {
            raw[0] = s / den;
            for (u, slot) in raw.iter_mut().enumerate().take(b + 1).skip(1) {
                *slot = sc.ctx.expect_a(u as i64 - 1) + c_u(u) / den;
            }
            raw[b + 1] = 1.0 - s / den;
        } else {
            let busy = self.busy_period_lt(state, s)?;
            let t = self.table(&sc, state.x, b)?;
            raw[0] = s * busy / den;
            for (u, slot) in raw.iter_mut().enumerate().take(b + 1).skip(1) {
                *slot = t.a_at(u as i64 - state.r as i64) + busy * c_u(u) / den;
            }
            raw[b + 1] = 1.0 - s * busy / den;
        }
        Ok(CountDistribution::from_raw(s, raw))
    }

    /// `P[d(nu_s) <= u]` with the level-zero convention resolved.
    pub fn transient_cdf(&self, state: SystemState, u: usize, s: f64) -> Result<f64> {
        if u > self.b() + 1 {
            return Err(invalid("u", format!("must be <= B + 1 = {}", self.b() + 1)));
        }
        Ok(self.transient_counts(state, s)?.cdf[u])
    }

    /// Limiting law of the number in system.
    pub fn stationary_dist(&self) -> Result<CountDistribution> {
        let model = &self.model;
        let (mu, lam) = (model.mu, model.lambda);
        let b = self.b();
        let ctx = Resolvent::new(model, 0.0, b + 1)?;
        let q = &ctx.base().q;
        let occ = occupation_row(model, ctx.kmax()).values;
        // A_0^u scaled by 1/s at s = 0, and its geometric expectation
        let a_scaled = companion(&occ, q, lam);
        // its generating function at lambda is (1 - Q(lambda)) times the
        // occupation transform, and Q(lambda) = 1
        let ea = |u: usize| ctx.expect(&a_scaled, u as i64, 0.0);
        let c_u = |u: usize| {
            if u == 0 {
                0.0
            } else {
                q[u] / (1.0 - lam) - 1.0 + lam * mu * (a_scaled[u] - ea(u))
            }
        };
        let tail = kahan((0..=b).map(|i| model.batch.tail(i) * q[b - i]));
        let eq = ctx.expect_q(b as i64);
        let pi0 = 1.0 / (1.0 + mu * model.service.mean() * (lam / (1.0 - lam) * eq + tail));
        let mut masses = vec![0.0; b + 2];
        masses[0] = pi0;
        for (i, slot) in masses.iter_mut().enumerate().take(b + 1).skip(1) {
            *slot = pi0 * (c_u(i) - c_u(i - 1));
        }
        masses[b + 1] = 1.0 - pi0 * (1.0 + c_u(b));
        Ok(CountDistribution::from_masses(masses))
    }
}

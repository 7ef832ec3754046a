//! Wiener limits at critical load and a comparator for the scaled
//! prelimit quantities.
//!
//! At `rho = 1` with finite `sigma^2`, levels scale like `B`, time like
//! `B^2` and the transform argument like `s / B^2`. The functions here give
//! the limiting values in continuum units; [`convergence_report`] evaluates
//! the corresponding finite-`B` quantity and reports the relative gap.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::exit::{sup_joint, trivariate};
use crate::inversion::{invert, InversionRequest};
use crate::model::{BatchLaw, QueueModel, ServiceLaw};
use crate::reflected::{reflected_increments, reflected_passage_geometric, reflected_two_sided};
use crate::resolvent::Resolvent;
use crate::root::solve_c;

/// Remainder bound for the sine series.
pub const SERIES_TOL: f64 = 1e-14;
/// Load mismatch tolerated by [`convergence_report`].
pub const CRITICAL_TOL: f64 = 1e-9;

/// Wiener process with dispersion `sigma` on the strip `[-r, k]`, observed
/// at level `u` and time `t`, all in continuum units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WienerSpec {
    pub sigma: f64,
    pub r: f64,
    pub k: f64,
    pub u: f64,
    pub t: f64,
}

impl WienerSpec {
    fn check(&self) -> Result<()> {
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(invalid("sigma", format!("must be positive, got {}", self.sigma)));
        }
        if !(self.t.is_finite() && self.t >= 0.0) {
            return Err(invalid("t", format!("must be >= 0, got {}", self.t)));
        }
        Ok(())
    }

    fn check_strip(&self) -> Result<()> {
        self.check()?;
        if !(self.r >= 0.0 && self.k >= 0.0 && ((self.r + self.k) - 1.0).abs() < 1e-12) {
            return Err(invalid("r, k", format!("need r, k >= 0 with r + k = 1, got {} and {}", self.r, self.k)));
        }
        if !(-self.r..=self.k).contains(&self.u) {
            return Err(invalid("u", format!("must lie in [-r, k], got {}", self.u)));
        }
        Ok(())
    }

    /// `a` in the factor `e^{-a m^2}` of the sine series.
    fn decay(&self) -> f64 {
        0.5 * self.t * (PI * self.sigma).powi(2)
    }
}

/// Partial sum of `sum_m e^{-a m^2} g(m) / m` over `m = shift + n`,
/// `n = 0, 1, ...` (skipping `m = 0`), with `|g| <= 1`. Stops once the tail
/// bound `e^{-a M^2} / (M (1 - e^{-2 a M}))` at the next `M` is below `tol`.
fn sine_series(a: f64, shift: f64, tol: f64, g: impl Fn(f64) -> f64) -> (f64, usize) {
    let mut sum = 0.0;
    let mut n = if shift == 0.0 { 1 } else { 0 };
    let mut terms = 0;
    loop {
        let m = n as f64 + shift;
        sum += (-a * m * m).exp() * g(m) / m;
        terms += 1;
        let next = m + 1.0;
        let ratio = (-2.0 * a * next).exp();
        let tail = (-a * next * next).exp() / (next * (1.0 - ratio));
        if 4.0 / PI * tail < tol || !tail.is_finite() && ratio < 1.0 {
            return (4.0 / PI * sum, terms);
        }
        n += 1;
    }
}

/// `P[-r <= inf w, w_t <= u, sup w <= k]` for `w_0 = 0`.
pub fn wiener_trivariate(params: &WienerSpec) -> Result<f64> {
    params.check_strip()?;
    Ok(trivariate_series(params).0)
}

/// Value and number of terms used.
pub fn trivariate_series(params: &WienerSpec) -> (f64, usize) {
    if params.t == 0.0 {
        return (initial_value(params), 0);
    }
    let (r, v) = (params.r, (params.r + params.u) / 2.0);
    sine_series(params.decay(), 0.0, SERIES_TOL, |m| (r * m * PI).sin() * (v * m * PI).sin().powi(2))
}

/// The process reflected at `k` from its running supremum: probability of
/// being at or below `u` at `t` without having passed below `-r`.
pub fn wiener_reflected_window(params: &WienerSpec) -> Result<f64> {
    params.check_strip()?;
    Ok(reflected_window_series(params).0)
}

/// Value and number of terms used.
pub fn reflected_window_series(params: &WienerSpec) -> (f64, usize) {
    if params.t == 0.0 {
        return (initial_value(params), 0);
    }
    let (r, v) = (params.r, (params.r + params.u) / 2.0);
    sine_series(params.decay(), 0.5, SERIES_TOL, |m| (r * m * PI).sin() * (v * m * PI).sin().powi(2))
}

fn initial_value(params: &WienerSpec) -> f64 {
    if params.r > 0.0 && params.u >= 0.0 {
        1.0
    } else {
        0.0
    }
}

/// `Phi(b) - Phi(a)` for the standard normal, through `erfc` on the tails.
fn normal_mass(a: f64, b: f64) -> f64 {
    0.5 * (libm::erfc(a * FRAC_1_SQRT_2) - libm::erfc(b * FRAC_1_SQRT_2))
}

/// `P[w_t <= u, sup w <= k]`, `u <= k`; the mass of `N(0, sigma^2 t)` on
/// `[-u, 2k - u]`.
pub fn wiener_sup_window(params: &WienerSpec) -> Result<f64> {
    params.check()?;
    if params.u > params.k || params.k < 0.0 {
        return Err(invalid("u", format!("need u <= k and k >= 0, got u = {}, k = {}", params.u, params.k)));
    }
    if params.t == 0.0 {
        return Ok(if params.u >= 0.0 && params.k > 0.0 { 1.0 } else { 0.0 });
    }
    let sd = params.sigma * params.t.sqrt();
    Ok(normal_mass(-params.u / sd, (2.0 * params.k - params.u) / sd))
}

/// `P[w_t - max(0, sup w - k) <= u]`, `u <= k`; one minus the mass of
/// `N(0, sigma^2 t)` on `[u, 2k - u]`.
pub fn wiener_reflected_sup(params: &WienerSpec) -> Result<f64> {
    params.check()?;
    if params.u > params.k || params.k < 0.0 {
        return Err(invalid("u", format!("need u <= k and k >= 0, got u = {}, k = {}", params.u, params.k)));
    }
    if params.t == 0.0 {
        return Ok(if params.u >= 0.0 { 1.0 } else { 0.0 });
    }
    let sd = params.sigma * params.t.sqrt();
    Ok(1.0 - normal_mass(params.u / sd, (2.0 * params.k - params.u) / sd))
}

fn kappa(sigma: f64, s: f64) -> f64 {
    (2.0 * s).sqrt() / sigma
}

/// `1 - sqrt(2s) / (sigma B)`, the first-order form of `c(s / B^2)`.
pub fn root_linearization(sigma: f64, s: f64, b: f64) -> f64 {
    1.0 - kappa(sigma, s) / b
}

/// Limit of `B^-1 Q_{[kB]}(s / B^2)`.
pub fn resolvent_limit(sigma: f64, mean_service: f64, k: f64, s: f64) -> f64 {
    let w = kappa(sigma, s);
    2.0 * (k * w).sinh() / (sigma * (2.0 * s).sqrt() * mean_service)
}

/// Limit of `A^{[kB]}(s / B^2)`.
pub fn increment_limit(sigma: f64, k: f64, s: f64) -> f64 {
    1.0 - (k * kappa(sigma, s)).cosh()
}

/// Limit of `B^-2 S_{[kB]}(s / B^2)`.
pub fn partial_sum_limit(sigma: f64, mean_service: f64, k: f64, s: f64) -> f64 {
    ((k * kappa(sigma, s)).cosh() - 1.0) / (s * mean_service)
}

/// Limit of the transform `E e^{-s tau / B^2}` of the passage below zero
/// from `[rB]` for the process reflected at `B`, `k = 1 - r`.
pub fn passage_ch_ratio(sigma: f64, k: f64, s: f64) -> f64 {
    let w = kappa(sigma, s);
    (k * w).cosh() / w.cosh()
}

/// Scaled prelimit quantities compared by [`convergence_report`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LimitFamily {
    /// `B (1 - c(s / B^2))` against `sqrt(2s) / sigma`.
    Root,
    /// `B^-1 Q_{[kB]}(0)` at `s / B^2`.
    Resolvent,
    /// `A_0^{[kB]}` at `s / B^2`.
    Increment,
    /// `B^-2 S_{[kB]}(0)` at `s / B^2`.
    PartialSum,
    /// `P[D(tB^2) <= [uB]`, strip `[-[rB], B - [rB]]` not left`].
    Trivariate,
    /// `P[D(tB^2) <= [uB], sup D <= [kB]]`.
    SupWindow,
    /// Process reflected at `[kB]` from its supremum, `P[. <= [uB]]` at `tB^2`.
    ReflectedSup,
    /// Same, killed below `-[rB]`.
    ReflectedWindow,
    /// Transform of the passage below zero from `[rB]` with reflection at `B`.
    ReflectedPassage,
}

impl LimitFamily {
    pub const ALL: [LimitFamily; 9] = [
        LimitFamily::Root,
        LimitFamily::Resolvent,
        LimitFamily::Increment,
        LimitFamily::PartialSum,
        LimitFamily::Trivariate,
        LimitFamily::SupWindow,
        LimitFamily::ReflectedSup,
        LimitFamily::ReflectedWindow,
        LimitFamily::ReflectedPassage,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LimitFamily::Root => "root",
            LimitFamily::Resolvent => "resolvent",
            LimitFamily::Increment => "increment",
            LimitFamily::PartialSum => "partial_sum",
            LimitFamily::Trivariate => "trivariate",
            LimitFamily::SupWindow => "sup_window",
            LimitFamily::ReflectedSup => "reflected_sup",
            LimitFamily::ReflectedWindow => "reflected_window",
            LimitFamily::ReflectedPassage => "reflected_passage",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|f| f.name() == name)
    }

    fn is_time_domain(self) -> bool {
        matches!(
            self,
            LimitFamily::Trivariate | LimitFamily::SupWindow | LimitFamily::ReflectedSup | LimitFamily::ReflectedWindow
        )
    }
}

/// Continuum geometry shared by all families. Transform families use `s`
/// and `k`; time families use `t`, `r`, `k`, `u`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitSettings {
    pub s: f64,
    pub t: f64,
    pub r: f64,
    pub u: f64,
    /// Gaver-Stehfest order for the time families.
    pub order: usize,
}

impl Default for LimitSettings {
    fn default() -> Self {
        Self {
            s: 1.0,
            t: 0.5,
            r: 0.5,
            u: 0.0,
            order: 14,
        }
    }
}

impl LimitSettings {
    pub fn k(&self) -> f64 {
        1.0 - self.r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub b: usize,
    pub prelimit: f64,
    pub limit: f64,
    /// `|prelimit - limit| / |limit|`.
    pub deviation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub family: LimitFamily,
    pub sigma: f64,
    pub rows: Vec<ConvergenceRow>,
    /// Deviations do not increase along the supplied `B` list.
    pub nonincreasing: bool,
}

impl ConvergenceReport {
    pub fn last_deviation(&self) -> f64 {
        self.rows.last().map_or(f64::NAN, |r| r.deviation)
    }
}

/// Batch `{1: 1/2, 2: 1/2}`, Erlang(2, 1/2) service, `lambda = 0.3`, `mu`
/// rescaled to unit load. The slow service puts `sigma^2 = 4.01 / E eta`
/// near 1, so `t = 0.5` is a time at which the strip probabilities are of
/// order one.
pub fn reference_model() -> QueueModel {
    QueueModel::new(
        1.0,
        BatchLaw::from_pmf(vec![0.5, 0.5]).expect("valid pmf"),
        ServiceLaw::erlang(2, 0.5).expect("valid service"),
        0.3,
        200,
    )
    .expect("valid model")
    .with_critical_load()
}

fn scaled(x: f64, b: usize) -> i64 {
    (x * b as f64).floor() as i64
}

fn level(x: f64, b: usize, name: &'static str) -> Result<usize> {
    usize::try_from(scaled(x, b)).map_err(|_| invalid(name, format!("scaled level must be >= 0, got {x}")))
}

/// Limit value of `family` under `settings`.
pub fn limit_value(family: LimitFamily, sigma: f64, mean_service: f64, settings: &LimitSettings) -> Result<f64> {
    let (s, k) = (settings.s, settings.k());
    let params = WienerSpec {
        sigma,
        r: settings.r,
        k,
        u: settings.u,
        t: settings.t,
    };
    Ok(match family {
        LimitFamily::Root => kappa(sigma, s),
        LimitFamily::Resolvent => resolvent_limit(sigma, mean_service, k, s),
        LimitFamily::Increment => increment_limit(sigma, k, s),
        LimitFamily::PartialSum => partial_sum_limit(sigma, mean_service, k, s),
        LimitFamily::Trivariate => wiener_trivariate(&params)?,
        LimitFamily::SupWindow => wiener_sup_window(&params)?,
        LimitFamily::ReflectedSup => wiener_reflected_sup(&params)?,
        LimitFamily::ReflectedWindow => wiener_reflected_window(&params)?,
        LimitFamily::ReflectedPassage => passage_ch_ratio(sigma, k, s),
    })
}

/// Finite-`B` value of `family`, in the same units as [`limit_value`].
pub fn prelimit_value(model: &QueueModel, family: LimitFamily, b: usize, settings: &LimitSettings) -> Result<f64> {
    if b == 0 {
        return Err(invalid("B", "must be positive"));
    }
    let bf = b as f64;
    let s = settings.s / (bf * bf);
    let kk = level(settings.k(), b, "k")?;
    if family.is_time_domain() {
        let rr = b - kk;
        let u = scaled(settings.u, b);
        let req = InversionRequest::with_order(settings.t * bf * bf, settings.order);
        let f = |s: f64| -> Result<f64> {
            let p = match family {
                LimitFamily::Trivariate => trivariate(model, 0.0, rr, kk, u, s)?,
                LimitFamily::SupWindow => sup_joint(model, 0.0, kk, u, s)?,
                LimitFamily::ReflectedSup => reflected_increments(model, 0.0, kk, u, s)?,
                LimitFamily::ReflectedWindow => reflected_two_sided(model, 0.0, rr, kk, u, s)?,
                _ => unreachable!(),
            };
            Ok(p / s)
        };
        return Ok(invert(&req, f)?.value);
    }
    Ok(match family {
        LimitFamily::Root => bf * (1.0 - solve_c(model, s)?.c),
        LimitFamily::ReflectedPassage => {
            let r0 = level(settings.r, b, "r")?;
            reflected_passage_geometric(model, 0.0, r0, b, s)?.passage_lt
        }
        _ => {
            let ctx = Resolvent::new(model, s, kk)?;
            let t = ctx.table(0.0, kk)?;
            match family {
                LimitFamily::Resolvent => t.q[kk] / bf,
                LimitFamily::Increment => t.a[kk],
                LimitFamily::PartialSum => t.partial[kk] / (bf * bf),
                _ => unreachable!(),
            }
        }
    })
}

/// Compare `family` with its Wiener limit for each `B` in `bs`. The model
/// must be at unit load (see [`QueueModel::with_critical_load`]).
pub fn convergence_report(
    model: &QueueModel,
    family: LimitFamily,
    bs: &[usize],
    settings: &LimitSettings,
) -> Result<ConvergenceReport> {
    let rho = model.rho();
    if (rho - 1.0).abs() > CRITICAL_TOL {
        return Err(Error::CriticalLoadNotMet { rho });
    }
    if !(settings.r > 0.0 && settings.r < 1.0) {
        return Err(invalid("r", format!("must lie in (0, 1), got {}", settings.r)));
    }
    let d = model.diffusion_params();
    let sigma = d.sigma();
    let limit = limit_value(family, sigma, model.service.mean(), settings)?;
    let rows = bs
        .iter()
        .map(|&b| {
            let model = model.with_buffer(b);
            let prelimit = prelimit_value(&model, family, b, settings)?;
            Ok(ConvergenceRow {
                b,
                prelimit,
                limit,
                deviation: (prelimit - limit).abs() / limit.abs(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let nonincreasing = rows.windows(2).all(|w| w[1].deviation <= w[0].deviation);
    Ok(ConvergenceReport {
        family,
        sigma,
        rows,
        nonincreasing,
    })
}

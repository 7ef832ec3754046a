use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Piecewise-linear cdf through `(knots[i], cdf[i])`, with an atom of mass
/// `cdf[0]` at `knots[0]` when it is positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalCdf {
    knots: Vec<f64>,
    cdf: Vec<f64>,
}

impl EmpiricalCdf {
    pub fn new(knots: Vec<f64>, cdf: Vec<f64>) -> Result<Self> {
        if knots.len() != cdf.len() || knots.len() < 2 {
            return Err(invalid("service.table", "need >= 2 knots with matching cdf values"));
        }
        if knots[0] < 0.0 || knots.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(invalid("service.table", "knots must be >= 0 and strictly increasing"));
        }
        if cdf.iter().any(|p| !(0.0..=1.0).contains(p)) || cdf.windows(2).any(|w| w[1] < w[0]) {
            return Err(invalid("service.table", "cdf values must be nondecreasing in [0,1]"));
        }
        if (cdf[cdf.len() - 1] - 1.0).abs() > 1e-12 {
            return Err(Error::PmfNotNormalized {
                sum: cdf[cdf.len() - 1],
            });
        }
        if cdf[0] > 0.0 && knots[0] == 0.0 {
            return Err(invalid("service.table", "atom at zero: service times must be positive"));
        }
        let mut cdf = cdf;
        *cdf.last_mut().unwrap() = 1.0;
        Ok(Self { knots, cdf })
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn cdf_values(&self) -> &[f64] {
        &self.cdf
    }

    fn cdf(&self, t: f64) -> f64 {
        if t < self.knots[0] {
            return 0.0;
        }
        let n = self.knots.len();
        if t >= self.knots[n - 1] {
            return 1.0;
        }
        let i = self.knots.partition_point(|k| *k <= t) - 1;
        let (a, b) = (self.knots[i], self.knots[i + 1]);
        self.cdf[i] + (self.cdf[i + 1] - self.cdf[i]) * (t - a) / (b - a)
    }

    /// `(a, b, density)` for each linear piece.
    fn segments(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.knots
            .windows(2)
            .zip(self.cdf.windows(2))
            .map(|(k, p)| (k[0], k[1], (p[1] - p[0]) / (k[1] - k[0])))
    }

    fn quantile(&self, p: f64) -> f64 {
        if p <= self.cdf[0] {
            return self.knots[0];
        }
        let i = self.cdf.partition_point(|c| *c < p).clamp(1, self.cdf.len() - 1);
        let (a, b) = (self.knots[i - 1], self.knots[i]);
        let (pa, pb) = (self.cdf[i - 1], self.cdf[i]);
        if pb <= pa {
            return a;
        }
        a + (b - a) * (p - pa) / (pb - pa)
    }
}

/// Service time law with its residual (age-conditioned) variants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ServiceLaw {
    Exponential { rate: f64 },
    Erlang { shape: usize, rate: f64 },
    HyperExponential { probs: Vec<f64>, rates: Vec<f64> },
    Deterministic { value: f64 },
    Empirical(EmpiricalCdf),
}

/// One component of a phase-type residual: `weight * Erlang(phases, rate)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Phase {
    pub weight: f64,
    pub rate: f64,
    pub phases: usize,
}

/// Law of the remaining service time given the elapsed age.
#[derive(Debug, Clone, PartialEq)]
pub enum Residual<'a> {
    Mixture(Vec<Phase>),
    Constant(f64),
    Empirical { table: &'a EmpiricalCdf, age: f64, survival: f64 },
}

fn normalize_log_weights(logw: Vec<f64>) -> Vec<f64> {
    let m = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logw.iter().map(|l| (l - m).exp()).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

/// `int_a^{a+h} e^{-z u} du` and `int_a^{a+h} u e^{-z u} du`.
fn exp_moments(z: Complex64, a: f64, h: f64) -> (Complex64, Complex64) {
    let zh = z * h;
    let ea = (-z * a).exp();
    let (e1, e2) = if zh.norm() < 1e-3 {
        let e1 = h * (1.0 - zh / 2.0 + zh * zh / 6.0 - zh.powi(3) / 24.0 + zh.powi(4) / 120.0);
        let e2 = h * h
            * (0.5 - zh / 3.0 + zh * zh / 8.0 - zh.powi(3) / 30.0 + zh.powi(4) / 144.0);
        (e1, e2)
    } else {
        let ezh = (-zh).exp();
        ((1.0 - ezh) / z, (1.0 - ezh * (1.0 + zh)) / (z * z))
    };
    (ea * e1, ea * (e1 * a + e2))
}

impl ServiceLaw {
    pub fn exponential(rate: f64) -> Result<Self> {
        Self::Exponential { rate }.validated()
    }

    pub fn erlang(shape: usize, rate: f64) -> Result<Self> {
        Self::Erlang { shape, rate }.validated()
    }

    pub fn hyperexponential(probs: Vec<f64>, rates: Vec<f64>) -> Result<Self> {
        Self::HyperExponential { probs, rates }.validated()
    }

    pub fn deterministic(value: f64) -> Result<Self> {
        Self::Deterministic { value }.validated()
    }

    pub fn empirical(knots: Vec<f64>, cdf: Vec<f64>) -> Result<Self> {
        Ok(Self::Empirical(EmpiricalCdf::new(knots, cdf)?))
    }

    pub fn validated(self) -> Result<Self> {
        let positive = |name, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(invalid(name, format!("must be positive and finite, got {v}")))
            }
        };
        match &self {
            Self::Exponential { rate } => positive("service.rate", *rate)?,
            Self::Erlang { shape, rate } => {
                positive("service.rate", *rate)?;
                if *shape == 0 {
                    return Err(invalid("service.shape", "must be >= 1"));
                }
            }
            Self::HyperExponential { probs, rates } => {
                if probs.is_empty() || probs.len() != rates.len() {
                    return Err(invalid("service.probs", "need matching nonempty probs and rates"));
                }
                for r in rates {
                    positive("service.rates", *r)?;
                }
                if probs.iter().any(|p| !(*p >= 0.0)) {
                    return Err(invalid("service.probs", "must be nonnegative"));
                }
                let sum: f64 = probs.iter().sum();
                if (sum - 1.0).abs() > 1e-12 {
                    return Err(Error::PmfNotNormalized { sum });
                }
            }
            Self::Deterministic { value } => positive("service.value", *value)?,
            Self::Empirical(_) => {}
        }
        Ok(self)
    }

    pub fn family_name(&self) -> &'static str {
        match self {
            Self::Exponential { .. } => "exponential",
            Self::Erlang { .. } => "erlang",
            Self::HyperExponential { .. } => "hyperexponential",
            Self::Deterministic { .. } => "deterministic",
            Self::Empirical(_) => "empirical",
        }
    }

    pub fn cdf(&self, t: f64) -> f64 {
        if t < 0.0 {
            return 0.0;
        }
        match self {
            Self::Empirical(e) => e.cdf(t),
            Self::Deterministic { value } => {
                if t >= *value {
                    1.0
                } else {
                    0.0
                }
            }
            _ => 1.0 - self.survival(t),
        }
    }

    /// `1 - F(t)`, computed without cancellation for phase-type laws.
    pub fn survival(&self, t: f64) -> f64 {
        if t < 0.0 {
            return 1.0;
        }
        match self {
            Self::Exponential { rate } => (-rate * t).exp(),
            Self::Erlang { shape, rate } => erlang_survival(*shape, *rate, t),
            Self::HyperExponential { probs, rates } => probs
                .iter()
                .zip(rates)
                .map(|(p, r)| p * (-r * t).exp())
                .sum(),
            Self::Deterministic { .. } | Self::Empirical(_) => 1.0 - self.cdf(t),
        }
    }

    /// Smallest `t` with `F(t) = 1`, if any.
    pub fn support_end(&self) -> Option<f64> {
        match self {
            Self::Deterministic { value } => Some(*value),
            Self::Empirical(e) => Some(*e.knots.last().unwrap()),
            _ => None,
        }
    }

    /// Breakpoints where the law is not smooth.
    pub fn breakpoints(&self) -> Vec<f64> {
        match self {
            Self::Deterministic { value } => vec![*value],
            Self::Empirical(e) => e.knots.clone(),
            _ => Vec::new(),
        }
    }

    /// A time beyond which `1 - F` is below `eps`.
    pub fn upper_time(&self, eps: f64) -> f64 {
        if let Some(end) = self.support_end() {
            return end;
        }
        let mut hi = self.mean().max(1e-12);
        while self.survival(hi) > eps {
            hi *= 2.0;
        }
        hi
    }

    pub fn mean(&self) -> f64 {
        match self {
            Self::Exponential { rate } => 1.0 / rate,
            Self::Erlang { shape, rate } => *shape as f64 / rate,
            Self::HyperExponential { probs, rates } => {
                probs.iter().zip(rates).map(|(p, r)| p / r).sum()
            }
            Self::Deterministic { value } => *value,
            Self::Empirical(e) => {
                let atom = e.cdf[0] * e.knots[0];
                atom + e.segments().map(|(a, b, d)| d * (b * b - a * a) / 2.0).sum::<f64>()
            }
        }
    }

    pub fn second_moment(&self) -> f64 {
        match self {
            Self::Exponential { rate } => 2.0 / (rate * rate),
            Self::Erlang { shape, rate } => (shape * (shape + 1)) as f64 / (rate * rate),
            Self::HyperExponential { probs, rates } => {
                probs.iter().zip(rates).map(|(p, r)| 2.0 * p / (r * r)).sum()
            }
            Self::Deterministic { value } => value * value,
            Self::Empirical(e) => {
                let atom = e.cdf[0] * e.knots[0] * e.knots[0];
                atom + e
                    .segments()
                    .map(|(a, b, d)| d * (b.powi(3) - a.powi(3)) / 3.0)
                    .sum::<f64>()
            }
        }
    }

    /// Errors unless `F(x) < 1`.
    pub fn check_age(&self, x: f64) -> Result<()> {
        if !(x >= 0.0) || !x.is_finite() {
            return Err(invalid("x", format!("age must be finite and >= 0, got {x}")));
        }
        if self.survival(x) <= 0.0 {
            return Err(Error::AgeBeyondSupport { age: x });
        }
        Ok(())
    }

    pub fn residual(&self, x: f64) -> Result<Residual<'_>> {
        self.check_age(x)?;
        Ok(match self {
            Self::Exponential { rate } => Residual::Mixture(vec![Phase {
                weight: 1.0,
                rate: *rate,
                phases: 1,
            }]),
            Self::Erlang { shape, rate } => {
                // j completed phases has posterior weight (rate x)^j / j!
                let lx = (rate * x).ln();
                let logw: Vec<f64> = (0..*shape)
                    .map(|j| {
                        if x == 0.0 {
                            if j == 0 {
                                0.0
                            } else {
                                f64::NEG_INFINITY
                            }
                        } else {
                            j as f64 * lx - ln_factorial(j)
                        }
                    })
                    .collect();
                let w = normalize_log_weights(logw);
                Residual::Mixture(
                    w.into_iter()
                        .enumerate()
                        .filter(|(_, w)| *w > 0.0)
                        .map(|(j, w)| Phase {
                            weight: w,
                            rate: *rate,
                            phases: shape - j,
                        })
                        .collect(),
                )
            }
            Self::HyperExponential { probs, rates } => {
                let logw: Vec<f64> = probs
                    .iter()
                    .zip(rates)
                    .map(|(p, r)| if *p > 0.0 { p.ln() - r * x } else { f64::NEG_INFINITY })
                    .collect();
                let w = normalize_log_weights(logw);
                Residual::Mixture(
                    w.into_iter()
                        .zip(rates)
                        .filter(|(w, _)| *w > 0.0)
                        .map(|(w, r)| Phase {
                            weight: w,
                            rate: *r,
                            phases: 1,
                        })
                        .collect(),
                )
            }
            Self::Deterministic { value } => Residual::Constant(value - x),
            Self::Empirical(e) => Residual::Empirical {
                table: e,
                age: x,
                survival: 1.0 - e.cdf(x),
            },
        })
    }

    /// `E e^{-z eta_x}` for complex `z` with nonnegative real part.
    pub fn residual_lt_c(&self, x: f64, z: Complex64) -> Result<Complex64> {
        Ok(self.residual(x)?.lt(z))
    }

    /// `E e^{-s eta_x}`.
    pub fn residual_lt(&self, x: f64, s: f64) -> Result<f64> {
        Ok(self.residual(x)?.lt(Complex64::new(s, 0.0)).re)
    }

    pub fn lt(&self, s: f64) -> f64 {
        self.residual(0.0).expect("age zero is always valid").lt(Complex64::new(s, 0.0)).re
    }

    /// `E[eta_x]`.
    pub fn residual_mean(&self, x: f64) -> Result<f64> {
        Ok(self.residual(x)?.mean())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Self::Exponential { rate } => Exp::new(*rate).unwrap().sample(rng),
            Self::Deterministic { value } => *value,
            _ => self.residual(0.0).unwrap().sample(rng),
        }
    }

    pub fn sample_residual<R: Rng + ?Sized>(&self, x: f64, rng: &mut R) -> Result<f64> {
        Ok(self.residual(x)?.sample(rng))
    }
}

impl Residual<'_> {
    pub fn lt(&self, z: Complex64) -> Complex64 {
        match self {
            Residual::Mixture(ph) => ph
                .iter()
                .map(|p| (p.rate / (p.rate + z)).powi(p.phases as i32) * p.weight)
                .sum(),
            Residual::Constant(d) => (-z * *d).exp(),
            Residual::Empirical { table, age, survival } => {
                let mut acc = Complex64::new(0.0, 0.0);
                if table.knots[0] > *age {
                    acc += (-z * (table.knots[0] - age)).exp() * table.cdf[0];
                }
                for (a, b, d) in table.segments() {
                    if b <= *age || d == 0.0 {
                        continue;
                    }
                    let lo = a.max(*age);
                    acc += exp_moments(z, lo - age, b - lo).0 * d;
                }
                acc / *survival
            }
        }
    }

    /// `E[eta_x e^{-z eta_x}]`, the negated derivative of `lt`.
    pub fn lt_neg_deriv(&self, z: f64) -> f64 {
        match self {
            Residual::Mixture(ph) => ph
                .iter()
                .map(|p| {
                    let n = p.phases as i32;
                    p.weight * n as f64 * p.rate.powi(n) / (p.rate + z).powi(n + 1)
                })
                .sum(),
            Residual::Constant(d) => d * (-z * d).exp(),
            Residual::Empirical { table, age, survival } => {
                let zc = Complex64::new(z, 0.0);
                let mut acc = 0.0;
                if table.knots[0] > *age {
                    let u = table.knots[0] - age;
                    acc += table.cdf[0] * u * (-z * u).exp();
                }
                for (a, b, d) in table.segments() {
                    if b <= *age || d == 0.0 {
                        continue;
                    }
                    let lo = a.max(*age);
                    acc += d * exp_moments(zc, lo - age, b - lo).1.re;
                }
                acc / survival
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            Residual::Mixture(ph) => ph.iter().map(|p| p.weight * p.phases as f64 / p.rate).sum(),
            Residual::Constant(d) => *d,
            Residual::Empirical { .. } => self.lt_neg_deriv(0.0),
        }
    }

    /// Density of the residual time at `u > 0`, excluding atoms.
    pub fn density(&self, u: f64) -> f64 {
        match self {
            Residual::Mixture(ph) => ph
                .iter()
                .map(|p| {
                    let n = p.phases;
                    let ln = n as f64 * p.rate.ln() + (n - 1) as f64 * u.ln() - p.rate * u
                        - ln_factorial(n - 1);
                    p.weight * ln.exp()
                })
                .sum(),
            Residual::Constant(_) => 0.0,
            Residual::Empirical { table, age, survival } => {
                let t = u + age;
                table
                    .segments()
                    .find(|(a, b, _)| t >= *a && t < *b)
                    .map_or(0.0, |(_, _, d)| d / survival)
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Residual::Mixture(ph) => {
                let mut u: f64 = rng.random();
                let mut pick = ph[ph.len() - 1];
                for p in ph {
                    if u < p.weight {
                        pick = *p;
                        break;
                    }
                    u -= p.weight;
                }
                let e = Exp::new(pick.rate).unwrap();
                (0..pick.phases).map(|_| e.sample(rng)).sum()
            }
            Residual::Constant(d) => *d,
            Residual::Empirical { table, age, survival } => {
                let u: f64 = rng.random();
                let fx = 1.0 - survival;
                table.quantile(fx + u * survival) - age
            }
        }
    }
}

pub(crate) fn ln_factorial(n: usize) -> f64 {
    (1..=n).map(|k| (k as f64).ln()).sum()
}

fn erlang_survival(n: usize, rate: f64, t: f64) -> f64 {
    // P[Poisson(rate t) < n]
    let x = rate * t;
    if x == 0.0 {
        return 1.0;
    }
    let mut term = (-x).exp();
    if term == 0.0 {
        let lx = x.ln();
        return (0..n)
            .map(|j| (j as f64 * lx - x - ln_factorial(j)).exp())
            .sum();
    }
    let mut acc = 0.0;
    for j in 0..n {
        acc += term;
        term *= x / (j + 1) as f64;
    }
    acc
}

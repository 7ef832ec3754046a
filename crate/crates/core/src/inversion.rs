//! Gaver-Stehfest inversion of Laplace transforms from real-axis samples.
//!
//! The transform is sampled at `s_k = k ln2 / t`, `k = 1..=N`, and combined
//! as `f(t) ~ (ln2 / t) sum_k V_k F(s_k)`. The weights `V_k` alternate in
//! sign with magnitude near `10^(0.45 N)`, so the combination is carried out
//! in exact rational arithmetic: each `f64` sample is converted exactly and
//! multiplied by the exact rational weight. Rounding happens once, at the
//! end. The error estimate compares order `N` with order `N - 2`, which
//! reuses the first `N - 2` samples.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub const DEFAULT_ORDER: usize = 14;
/// Beyond this the weights exceed `10^27`, far past what `f64` samples
/// can support.
pub const MAX_ORDER: usize = 60;

/// Target time, order and bookkeeping for one inversion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InversionRequest {
    pub t: f64,
    /// Even, at least 6.
    pub order: usize,
    /// Decimal digits the weight combination must carry. The exact
    /// rational accumulation satisfies any value.
    pub precision: u32,
    /// Results whose error estimate exceeds this are flagged.
    pub tolerance: Option<f64>,
}

impl InversionRequest {
    pub fn new(t: f64) -> Self {
        Self::with_order(t, DEFAULT_ORDER)
    }

    pub fn with_order(t: f64, order: usize) -> Self {
        Self {
            t,
            order,
            precision: default_precision(order),
            tolerance: None,
        }
    }

    pub fn tolerance(mut self, tol: f64) -> Self {
        self.tolerance = Some(tol);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t.is_finite() && self.t > 0.0) {
            return Err(invalid("t", format!("must be positive and finite, got {}", self.t)));
        }
        if self.order < 6 || self.order > MAX_ORDER || self.order % 2 != 0 {
            return Err(invalid("order", format!("must be even in [6, {MAX_ORDER}], got {}", self.order)));
        }
        if self.precision < default_precision(self.order) {
            return Err(invalid(
                "precision",
                format!("{} digits is below 2.2 x order = {}", self.precision, default_precision(self.order)),
            ));
        }
        Ok(())
    }

    /// Sample spacing `ln2 / t` with its six low mantissa bits cleared, so
    /// that every abscissa `k h`, `k <= 64`, is an exact product. The
    /// implied time moves by at most `2^-46` relative.
    pub fn spacing(&self) -> f64 {
        let h = std::f64::consts::LN_2 / self.t;
        f64::from_bits(h.to_bits() & !0x3F)
    }

    /// Sample abscissae `k h`, `k = 1..=order`.
    pub fn abscissae(&self) -> Vec<f64> {
        let h = self.spacing();
        (1..=self.order).map(|k| k as f64 * h).collect()
    }
}

fn default_precision(order: usize) -> u32 {
    (2.2 * order as f64).ceil() as u32
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Inverted {
    pub t: f64,
    pub value: f64,
    /// `|f_N(t) - f_{N-2}(t)|`.
    pub error_estimate: f64,
    /// Set when a caller tolerance was given and the estimate exceeds it.
    pub flagged: bool,
}

/// Exact weights `V_1..V_N` for even `n`.
pub fn stehfest_weights(n: usize) -> Arc<Vec<BigRational>> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<Vec<BigRational>>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().expect("weight cache poisoned");
    guard.entry(n).or_insert_with(|| Arc::new(compute_weights(n))).clone()
}

fn compute_weights(n: usize) -> Vec<BigRational> {
    assert!(n >= 2 && n % 2 == 0);
    let half = n / 2;
    let fact: Vec<BigInt> = std::iter::once(BigInt::one())
        .chain((1..=n).scan(BigInt::one(), |acc, i| {
            *acc *= i;
            Some(acc.clone())
        }))
        .collect();
    (1..=n)
        .map(|k| {
            let mut sum = BigRational::zero();
            for j in k.div_ceil(2)..=k.min(half) {
                let num = BigInt::from(j).pow(half as u32) * &fact[2 * j];
                let den = &fact[half - j] * &fact[j] * &fact[j - 1] * &fact[k - j] * &fact[2 * j - k];
                sum += BigRational::new(num, den);
            }
            if (k + half) % 2 == 1 {
                -sum
            } else {
                sum
            }
        })
        .collect()
}

fn combine(weights: &[BigRational], samples: &[BigRational]) -> BigRational {
    weights.iter().zip(samples).map(|(w, f)| w * f).fold(BigRational::zero(), |a, b| a + b)
}

fn to_f64(x: &BigRational) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

/// Invert `transform` at `req.t`. The transform is evaluated concurrently at
/// the sample points and must be finite there.
pub fn invert<F>(req: &InversionRequest, transform: F) -> Result<Inverted>
where
    F: Fn(f64) -> Result<f64> + Sync,
{
    req.validate()?;
    let points = req.abscissae();
    let values: Vec<f64> = points
        .par_iter()
        .map(|&s| {
            let v = transform(s).map_err(|e| Error::Transform { s, reason: e.to_string() })?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::Transform {
                    s,
                    reason: format!("non-finite value {v}"),
                })
            }
        })
        .collect::<Result<_>>()?;
    Ok(from_samples(req, &values))
}

/// Combine precomputed samples at [`InversionRequest::abscissae`].
pub fn from_samples(req: &InversionRequest, values: &[f64]) -> Inverted {
    let n = req.order;
    assert_eq!(values.len(), n, "one sample per abscissa");
    let exact: Vec<BigRational> = values
        .iter()
        .map(|&v| BigRational::from_float(v).expect("finite sample"))
        .collect();
    let scale = req.spacing();
    let hi = to_f64(&combine(&stehfest_weights(n), &exact)) * scale;
    let lo = to_f64(&combine(&stehfest_weights(n - 2), &exact[..n - 2])) * scale;
    let error_estimate = (hi - lo).abs();
    Inverted {
        t: req.t,
        value: hi,
        error_estimate,
        flagged: req.tolerance.is_some_and(|tol| error_estimate > tol),
    }
}

/// Invert on a grid of times. Time points run concurrently.
pub fn invert_grid<F>(times: &[f64], order: usize, transform: F) -> Result<Vec<Inverted>>
where
    F: Fn(f64) -> Result<f64> + Sync,
{
    times
        .par_iter()
        .map(|&t| invert(&InversionRequest::with_order(t, order), &transform))
        .collect()
}

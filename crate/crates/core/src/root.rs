//! The root `c(s)` in `(lambda, 1]` of `theta = lambda + (1-lambda) f(s - k(theta))`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::QueueModel;

pub const ROOT_TOL: f64 = 1e-14;
pub const MAX_ITER: usize = 100_000;
/// A residual this small is at the rounding level of the map itself.
const RESIDUAL_FLOOR: f64 = 4.0 * f64::EPSILON;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RootValue {
    pub c: f64,
    pub s: f64,
    pub residual: f64,
    pub iterations: usize,
}

struct RootMap<'a> {
    model: &'a QueueModel,
    s: f64,
}

impl RootMap<'_> {
    fn arg(&self, theta: f64) -> f64 {
        self.s + self.model.mu * (1.0 - self.model.batch.pgf(theta))
    }

    fn value(&self, theta: f64) -> f64 {
        let lam = self.model.lambda;
        lam + (1.0 - lam) * self.model.service.lt(self.arg(theta))
    }

    fn slope(&self, theta: f64) -> f64 {
        let lam = self.model.lambda;
        let res = self.model.service.residual(0.0).expect("age zero");
        (1.0 - lam) * self.model.mu * self.model.batch.pgf_deriv(theta) * res.lt_neg_deriv(self.arg(theta))
    }
}

/// Smallest fixed point of the root map on `[lambda, 1]`.
///
/// Iterates the (increasing, convex) map from `lambda`, then switches to a
/// Newton polish from the left, which stays below the root by convexity;
/// bisection on `[theta, 1]` guards the polish for `s > 0`.
pub fn solve_c(model: &QueueModel, s: f64) -> Result<RootValue> {
    if !(s >= 0.0) || !s.is_finite() {
        return Err(invalid("s", format!("must be finite and >= 0, got {s}")));
    }
    if s == 0.0 && model.rho() <= 1.0 {
        return Ok(RootValue {
            c: 1.0,
            s,
            residual: 0.0,
            iterations: 0,
        });
    }
    let map = RootMap { model, s };
    let mut theta = model.lambda;
    let mut it = 0;

    // plain iteration: cheap and monotone, fast away from criticality
    while it < 200 {
        let next = map.value(theta);
        it += 1;
        let step = next - theta;
        theta = next;
        if step.abs() < ROOT_TOL {
            return Ok(finish(&map, theta, s, it));
        }
    }

    // Newton from the left
    let mut hi: f64 = 1.0;
    let mut best = (f64::INFINITY, theta);
    while it < MAX_ITER {
        it += 1;
        let h = theta - map.value(theta);
        if h.abs() < best.0 {
            best = (h.abs(), theta);
        }
        if h.abs() <= RESIDUAL_FLOOR {
            return Ok(finish(&map, theta, s, it));
        }
        if h > 0.0 {
            hi = hi.min(theta);
        }
        let dh = 1.0 - map.slope(theta);
        let mut next = if dh > 0.0 { theta - h / dh } else { f64::NAN };
        if !(next.is_finite() && next > model.lambda && next < hi) {
            if s == 0.0 {
                // the other root sits at 1, so bisection has no bracket
                break;
            }
            next = 0.5 * (theta + hi);
        }
        let step = next - theta;
        theta = next;
        if step.abs() < ROOT_TOL * theta.max(1e-300) {
            return Ok(finish(&map, theta, s, it));
        }
    }
    if best.0 <= 1e-14 {
        return Ok(finish(&map, best.1, s, it));
    }
    let residual = (theta - map.value(theta)).abs();
    Err(Error::RootStagnation {
        s,
        iterations: it,
        theta,
        residual,
    })
}

fn finish(map: &RootMap<'_>, c: f64, s: f64, iterations: usize) -> RootValue {
    RootValue {
        c,
        s,
        residual: (c - map.value(c)).abs(),
        iterations,
    }
}

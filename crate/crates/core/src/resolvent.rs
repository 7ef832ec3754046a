//! The resolvent sequence `Q_k(x, s)`, its partial sums `S_k` and the
//! companion sequence `A_x^k(s)`, plus expectations over the geometric
//! overshoot `delta` with `P[delta = j] = (1 - lambda) lambda^{j-1}`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::compound_poisson::{lt_row_or_zero, mixed_from_residual};
use crate::error::{invalid, Error, Result};
use crate::model::QueueModel;
use crate::numeric::KahanSum;
use crate::root::{solve_c, RootValue};

/// Relative size of the dropped geometric tail.
pub const TRUNCATION_TOL: f64 = 1e-13;
const TRUNCATION_SAFETY: f64 = 10.0;
/// Beyond this many terms the expectations switch to the generating
/// function identities `sum lambda^k Q_k(0) = 1`, `sum lambda^k A_0^k = 0`.
const MAX_SERIES: usize = 2_000;
/// Tables stop short of `e^{MAX_LOG_GROWTH}` times their first entry.
const MAX_LOG_GROWTH: f64 = 650.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolventTable {
    pub s: f64,
    pub x: f64,
    pub q: Vec<f64>,
    /// `S_k = sum_{i<=k} Q_i`.
    pub partial: Vec<f64>,
    /// `A_x^k = sum_{i<=k} rho~_i (1 - Q_{k-i}/(1-lambda))`; zero at `s = 0`.
    pub a: Vec<f64>,
    pub root: RootValue,
}

impl ResolventTable {
    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    /// `Q_k`, zero for negative `k`.
    pub fn q_at(&self, k: i64) -> f64 {
        if k < 0 {
            0.0
        } else {
            self.q[k as usize]
        }
    }

    pub fn s_at(&self, k: i64) -> f64 {
        if k < 0 {
            0.0
        } else {
            self.partial[k as usize]
        }
    }

    pub fn a_at(&self, k: i64) -> f64 {
        if k < 0 {
            0.0
        } else {
            self.a[k as usize]
        }
    }
}

/// Solves the triangular system for `Q_0..=Q_kmax` given the mixed rows at
/// age zero (`f0`) and at age `x` (`fx`).
pub(crate) fn q_recursion(lambda: f64, f0: &[f64], fx: &[f64], kmax: usize) -> Vec<f64> {
    let w = 1.0 - lambda;
    let d = lambda + w * f0[0];
    let mut q = vec![0.0; kmax + 1];
    q[0] = w * fx[0] / d;
    for k in 1..=kmax {
        let mut acc = KahanSum::new();
        acc.add(w * fx[k]);
        acc.add(q[k - 1]);
        for i in 0..k {
            acc.add(-w * q[i] * f0[k - i]);
        }
        q[k] = acc.value() / d;
    }
    q
}

/// `sum_{i<=k} row_i (1 - Q_{k-i}/(1-lambda))` for every `k`.
pub fn companion(row: &[f64], q: &[f64], lambda: f64) -> Vec<f64> {
    let w = 1.0 - lambda;
    (0..q.len())
        .map(|k| {
            let mut acc = KahanSum::new();
            for i in 0..=k {
                acc.add(row[i] * (1.0 - q[k - i] / w));
            }
            acc.value()
        })
        .collect()
}

fn prefix(q: &[f64]) -> Vec<f64> {
    let mut acc = KahanSum::new();
    q.iter()
        .map(|v| {
            acc.add(*v);
            acc.value()
        })
        .collect()
}

/// Number of terms `J` of a geometric expectation whose terms shrink like
/// `(lambda/c)^j`; `None` when the series is too slow and the closed form
/// should be used instead.
pub fn truncation_len(lambda: f64, c: f64) -> Option<usize> {
    if lambda == 0.0 {
        return Some(1);
    }
    let r = lambda / c;
    if !(r < 1.0) {
        return None;
    }
    let j = ((TRUNCATION_TOL * (1.0 - r) / TRUNCATION_SAFETY).ln() / r.ln()).ceil().max(1.0) as usize;
    (j <= MAX_SERIES).then_some(j)
}

/// Per-`s` state shared by every functional: the root, the age-zero mixed
/// row, the arrival row and the age-zero table long enough for geometric
/// expectations of indices up to `max_index`.
#[derive(Debug, Clone)]
pub struct Resolvent {
    pub model: QueueModel,
    pub s: f64,
    pub root: RootValue,
    /// Series length of geometric expectations, or `None` for the closed form.
    pub trunc: Option<usize>,
    f0: Vec<f64>,
    rho: Vec<f64>,
    base: ResolventTable,
}

impl Resolvent {
    pub fn new(model: &QueueModel, s: f64, max_index: usize) -> Result<Self> {
        let root = solve_c(model, s)?;
        // Q_k grows like c^{-k}; keep the table inside the f64 range
        let growth = -root.c.ln();
        let fits = |len: usize| (len as f64) * growth < MAX_LOG_GROWTH;
        let trunc = truncation_len(model.lambda, root.c).filter(|j| fits(max_index + j + 2));
        let kmax = max_index + trunc.unwrap_or(0) + 1;
        if !fits(kmax + 1) {
            return Err(invalid(
                "buffer",
                format!("resolvent grows like {:.3e}^k and overflows before index {kmax}", 1.0 / root.c),
            ));
        }
        let res0 = model.service.residual(0.0)?;
        let f0 = mixed_from_residual(model, &res0, s, kmax)?;
        let rho = lt_row_or_zero(model, s, kmax);
        let q = q_recursion(model.lambda, &f0, &f0, kmax);
        let base = ResolventTable {
            s,
            x: 0.0,
            partial: prefix(&q),
            a: companion(&rho, &q, model.lambda),
            q,
            root,
        };
        Ok(Self {
            model: model.clone(),
            s,
            root,
            trunc,
            f0,
            rho,
            base,
        })
    }

    pub fn c(&self) -> f64 {
        self.root.c
    }

    pub fn base(&self) -> &ResolventTable {
        &self.base
    }

    /// Largest index available in tables built by this context.
    pub fn kmax(&self) -> usize {
        self.base.len() - 1
    }

    pub fn rho_row(&self) -> &[f64] {
        &self.rho
    }

    pub fn f0_row(&self) -> &[f64] {
        &self.f0
    }

    /// Table at age `x`, up to `kmax` (at most [`Self::kmax`]).
    pub fn table(&self, x: f64, kmax: usize) -> Result<ResolventTable> {
        if kmax > self.kmax() {
            return Err(invalid("k", format!("index {kmax} beyond table length {}", self.kmax())));
        }
        if x == 0.0 {
            let b = &self.base;
            return Ok(ResolventTable {
                s: self.s,
                x,
                q: b.q[..=kmax].to_vec(),
                partial: b.partial[..=kmax].to_vec(),
                a: b.a[..=kmax].to_vec(),
                root: self.root,
            });
        }
        if !(x >= 0.0) {
            return Err(invalid("x", format!("age must be >= 0, got {x}")));
        }
        let res = self.model.service.residual(x)?;
        let fx = mixed_from_residual(&self.model, &res, self.s, kmax)?;
        let q = q_recursion(self.model.lambda, &self.f0, &fx, kmax);
        Ok(ResolventTable {
            s: self.s,
            x,
            partial: prefix(&q),
            a: companion(&self.rho[..=kmax], &q, self.model.lambda),
            q,
            root: self.root,
        })
    }

    /// `E v_{delta + off}` for a sequence `v` (zero at negative indices)
    /// whose generating function at `lambda` equals `total`.
    pub fn expect(&self, v: &[f64], off: i64, total: f64) -> f64 {
        let lam = self.model.lambda;
        let w = 1.0 - lam;
        let mut acc = KahanSum::new();
        match self.trunc {
            Some(terms) => {
                let mut p = w;
                for j in 1..=terms {
                    let idx = j as i64 + off;
                    if idx >= 0 {
                        acc.add(p * v[idx as usize]);
                    }
                    p *= lam;
                }
                acc.value()
            }
            None => {
                // (1-lambda) lambda^{-off-1} (total - sum_{k<=off} lambda^k v_k)
                acc.add(total * lam.powi(-(off as i32) - 1));
                for k in 0..=off.max(-1) {
                    acc.add(-v[k as usize] * lam.powi(k as i32 - off as i32 - 1));
                }
                w * acc.value()
            }
        }
    }

    pub fn expect_q(&self, off: i64) -> f64 {
        self.expect(&self.base.q, off, 1.0)
    }

    pub fn expect_partial(&self, off: i64) -> f64 {
        self.expect(&self.base.partial, off, 1.0 / (1.0 - self.model.lambda))
    }

    pub fn expect_a(&self, off: i64) -> f64 {
        self.expect(&self.base.a, off, 0.0)
    }

    /// The three expectations every two-sided functional with upper level
    /// `b` needs.
    pub fn geom(&self, b: usize) -> GeomExpectations {
        let b = b as i64;
        let lam = self.model.lambda;
        let last = match self.trunc {
            Some(j) if lam > 0.0 => {
                let r = lam / self.c();
                TRUNCATION_SAFETY * r.powf(j as f64) / (1.0 - r)
            }
            _ => 0.0,
        };
        GeomExpectations {
            eq: self.expect_q(b),
            es: self.expect_partial(b - 1),
            ea: self.expect_a(b),
            terms: self.trunc,
            tail_bound: last,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeomExpectations {
    /// `E Q_{delta+B}(0, s)`.
    pub eq: f64,
    /// `E S_{delta+B-1}(0, s)`.
    pub es: f64,
    /// `E A_0^{delta+B}(s)`.
    pub ea: f64,
    /// Series length, `None` when the generating-function form was used.
    pub terms: Option<usize>,
    /// Bound on the relative size of the dropped tail.
    pub tail_bound: f64,
}

/// `Q_0..=Q_kmax` at age `x`.
pub fn q_table(model: &QueueModel, x: f64, s: f64, kmax: usize) -> Result<ResolventTable> {
    Resolvent::new(model, s, kmax)?.table(x, kmax)
}

/// Generating function `sum_k Q_k(x) theta^k` at a point inside the disk
/// of radius `c(s)`.
pub fn q_generating(model: &QueueModel, x: f64, s: f64, theta: Complex64) -> Result<Complex64> {
    let lam = model.lambda;
    let z = Complex64::new(s, 0.0) - model.cumulant(theta)?;
    let w = 1.0 - lam;
    let num = w * model.service.residual_lt_c(x, z)?;
    let den = w * model.service.residual_lt_c(0.0, z)? + lam - theta;
    Ok(num / den)
}

/// `Q_k(x)` by the trapezoidal rule on the circle `|theta| = alpha`.
pub fn q_contour(model: &QueueModel, x: f64, s: f64, k: usize, alpha: f64, n: usize) -> Result<f64> {
    let c = solve_c(model, s)?.c;
    if !(alpha > 0.0 && alpha < c) {
        return Err(Error::RadiusTooLarge { alpha, c });
    }
    let res = model.service.residual(x)?;
    let res0 = model.service.residual(0.0)?;
    let lam = model.lambda;
    let w = 1.0 - lam;
    let mut acc_re = KahanSum::new();
    for j in 0..n {
        let phi = 2.0 * std::f64::consts::PI * j as f64 / n as f64;
        let theta = Complex64::from_polar(alpha, phi);
        let z = Complex64::new(s, 0.0) - model.cumulant_unchecked(theta);
        let val = w * res.lt(z) / (w * res0.lt(z) + lam - theta);
        // theta^{-k} = alpha^{-k} e^{-i k phi}
        let rot = Complex64::from_polar(1.0, -(k as f64) * phi);
        acc_re.add((val * rot).re);
    }
    Ok(acc_re.value() / (n as f64 * alpha.powi(k as i32)))
}

/// Contour value at `alpha = 0.9 c(s)`, doubling the node count until two
/// successive values agree to `tol` relative to `max(1, |Q_k|)`.
pub fn q_contour_auto(model: &QueueModel, x: f64, s: f64, k: usize, tol: f64) -> Result<(f64, usize)> {
    let c = solve_c(model, s)?.c;
    let alpha = 0.9 * c;
    let mut n = 256;
    let mut prev = q_contour(model, x, s, k, alpha, n)?;
    while n < 1 << 16 {
        n *= 2;
        let cur = q_contour(model, x, s, k, alpha, n)?;
        if (cur - prev).abs() <= tol * cur.abs().max(1.0) {
            return Ok((cur, n));
        }
        prev = cur;
    }
    Err(Error::Quadrature {
        achieved: f64::NAN,
        requested: tol,
    })
}

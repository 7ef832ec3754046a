//! Kernels of the compound Poisson arrival stream: the level pmf at a
//! fixed time, its Laplace-weighted row, the occupation measure and the
//! mixed coefficients `E[e^{-s eta_x}; arrivals during eta_x = k]`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::model::service::Residual;
use crate::model::{BatchLaw, QueueModel};
use crate::numeric::integrate_vec;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum RowKind {
    /// `P[level at time t = k]`.
    PmfAtTime { t: f64 },
    /// `s * int e^{-st} P[level at t = k] dt`.
    Transform { s: f64 },
    /// `int_0^inf P[level at t = k] dt`.
    Occupation,
    /// `E[e^{-s eta_x}; arrivals during eta_x = k]`.
    Mixed { s: f64, x: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelRow {
    pub values: Vec<f64>,
    pub kind: RowKind,
}

impl KernelRow {
    pub fn sum(&self) -> f64 {
        crate::numeric::kahan_sum(self.values.iter().copied())
    }
}

const QUAD_TOL: f64 = 1e-11;

/// Panjer recursion for the compound Poisson pmf with mean jump count `m`.
/// `a[j] = P[batch = j]`, `a[0] = 0`.
pub(crate) fn panjer(m: f64, a: &[f64], kmax: usize) -> Vec<f64> {
    let mut out = vec![0.0; kmax + 1];
    if m == 0.0 {
        out[0] = 1.0;
        return out;
    }
    // unnormalized u_k = rho_k e^{m} e^{-scale}; rescaled when large
    let mut log_scale = 0.0_f64;
    out[0] = 1.0;
    for k in 1..=kmax {
        let mut acc = 0.0;
        for j in 1..=k.min(a.len() - 1) {
            acc += j as f64 * a[j] * out[k - j];
        }
        out[k] = m / k as f64 * acc;
        if out[k] > 1e250 {
            for v in out[..=k].iter_mut() {
                *v *= 1e-250;
            }
            log_scale += 250.0 * std::f64::consts::LN_10;
        }
    }
    let f = (log_scale - m).exp();
    if f == 0.0 || !f.is_finite() {
        let shift = log_scale - m;
        for v in out.iter_mut() {
            *v = if *v > 0.0 { (v.ln() + shift).exp() } else { 0.0 };
        }
    } else {
        for v in out.iter_mut() {
            *v *= f;
        }
    }
    out
}

/// `s/(s+mu)` weighted row: generating function `s/(s - k(theta))`.
pub(crate) fn lt_recursion(mu: f64, a: &[f64], s: f64, kmax: usize) -> Vec<f64> {
    let mut out = vec![0.0; kmax + 1];
    let d = s + mu;
    out[0] = s / d;
    let r = mu / d;
    for k in 1..=kmax {
        let mut acc = 0.0;
        for j in 1..=k.min(a.len() - 1) {
            acc += a[j] * out[k - j];
        }
        out[k] = r * acc;
    }
    out
}

pub(crate) fn batch_vec(batch: &BatchLaw, kmax: usize) -> Vec<f64> {
    batch.pmf_vec(kmax + 1)
}

pub fn pmf_at_t(model: &QueueModel, t: f64, kmax: usize) -> Result<KernelRow> {
    if !(t >= 0.0) {
        return Err(invalid("t", format!("must be >= 0, got {t}")));
    }
    let a = batch_vec(&model.batch, kmax);
    Ok(KernelRow {
        values: panjer(model.mu * t, &a, kmax),
        kind: RowKind::PmfAtTime { t },
    })
}

pub fn lt_row(model: &QueueModel, s: f64, kmax: usize) -> Result<KernelRow> {
    if !(s > 0.0) {
        return Err(invalid("s", format!("must be > 0, got {s}")));
    }
    Ok(KernelRow {
        values: lt_recursion(model.mu, &batch_vec(&model.batch, kmax), s, kmax),
        kind: RowKind::Transform { s },
    })
}

/// Row of `s * int e^{-st} rho_k(t) dt`, all zeros at `s = 0`.
pub(crate) fn lt_row_or_zero(model: &QueueModel, s: f64, kmax: usize) -> Vec<f64> {
    if s == 0.0 {
        vec![0.0; kmax + 1]
    } else {
        lt_recursion(model.mu, &batch_vec(&model.batch, kmax), s, kmax)
    }
}

pub fn occupation_row(model: &QueueModel, kmax: usize) -> KernelRow {
    let a = batch_vec(&model.batch, kmax);
    let mut v = vec![0.0; kmax + 1];
    v[0] = 1.0;
    for i in 1..=kmax {
        let mut acc = 0.0;
        for j in 1..=i {
            acc += a[j] * v[i - j];
        }
        v[i] = acc;
    }
    KernelRow {
        values: v.into_iter().map(|x| x / model.mu).collect(),
        kind: RowKind::Occupation,
    }
}

fn convolve_truncated(p: &[f64], q: &[f64]) -> Vec<f64> {
    let n = p.len();
    let mut out = vec![0.0; n];
    for (i, pi) in p.iter().enumerate() {
        if *pi == 0.0 {
            continue;
        }
        for (j, qj) in q.iter().enumerate().take(n - i) {
            out[i + j] += pi * qj;
        }
    }
    out
}

pub(crate) fn mixed_from_residual(
    model: &QueueModel,
    res: &Residual<'_>,
    s: f64,
    kmax: usize,
) -> Result<Vec<f64>> {
    let a = batch_vec(&model.batch, kmax);
    match res {
        Residual::Mixture(phases) => {
            let mut out = vec![0.0; kmax + 1];
            for ph in phases {
                // one exp(rate) phase has coefficients rate/(rate+s) * lt_row(rate+s)
                let sig = ph.rate + s;
                let mut g = lt_recursion(model.mu, &a, sig, kmax);
                let f = ph.rate / sig;
                g.iter_mut().for_each(|v| *v *= f);
                let mut pw = g.clone();
                for _ in 1..ph.phases {
                    pw = convolve_truncated(&pw, &g);
                }
                for (o, v) in out.iter_mut().zip(&pw) {
                    *o += ph.weight * v;
                }
            }
            Ok(out)
        }
        Residual::Constant(d) => {
            let row = panjer(model.mu * d, &a, kmax);
            let e = (-s * d).exp();
            Ok(row.into_iter().map(|v| v * e).collect())
        }
        Residual::Empirical { table, age, survival } => {
            let knots = table.knots();
            let cdf = table.cdf_values();
            let mut out = vec![0.0; kmax + 1];
            if knots[0] > *age {
                let u = knots[0] - age;
                let row = panjer(model.mu * u, &a, kmax);
                let w = cdf[0] * (-s * u).exp() / survival;
                for (o, v) in out.iter_mut().zip(row) {
                    *o += w * v;
                }
            }
            let lo = knots[0].max(*age) - age;
            let hi = knots[knots.len() - 1] - age;
            if hi > lo {
                let breaks: Vec<f64> = knots.iter().map(|k| k - age).collect();
                let mu = model.mu;
                let quad = integrate_vec(
                    |u, buf| {
                        let dens = res.density(u);
                        if dens == 0.0 {
                            buf.iter_mut().for_each(|v| *v = 0.0);
                            return;
                        }
                        let row = panjer(mu * u, &a, kmax);
                        let w = dens * (-s * u).exp();
                        for (b, v) in buf.iter_mut().zip(row) {
                            *b = w * v;
                        }
                    },
                    lo,
                    hi,
                    &breaks,
                    kmax + 1,
                    QUAD_TOL,
                )?;
                for (o, v) in out.iter_mut().zip(quad) {
                    *o += v;
                }
            }
            Ok(out)
        }
    }
}

pub fn mixed_coeffs(model: &QueueModel, x: f64, s: f64, kmax: usize) -> Result<KernelRow> {
    if !(s >= 0.0) {
        return Err(invalid("s", format!("must be >= 0, got {s}")));
    }
    let res = model.service.residual(x)?;
    Ok(KernelRow {
        values: mixed_from_residual(model, &res, s, kmax)?,
        kind: RowKind::Mixed { s, x },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ServiceLaw;
    use proptest::prelude::*;

    fn model(batch: BatchLaw, service: ServiceLaw) -> QueueModel {
        QueueModel::new(1.0, batch, service, 0.0, 5).unwrap()
    }

    fn factorial(n: usize) -> f64 {
        (1..=n).map(|k| k as f64).product()
    }

    /// sum_n e^{-m} m^n/n! a^{*n}(k)
    fn brute_pmf(m: f64, a: &[f64], kmax: usize, nmax: usize) -> Vec<f64> {
        let mut conv = vec![0.0; kmax + 1];
        conv[0] = 1.0;
        let mut out = vec![0.0; kmax + 1];
        for n in 0..=nmax {
            let w = (-m).exp() * m.powi(n as i32) / factorial(n);
            for k in 0..=kmax {
                out[k] += w * conv[k];
            }
            conv = convolve_truncated(&conv, a);
        }
        out
    }

    #[test]
    fn panjer_matches_convolution() {
        let laws = [
            BatchLaw::from_pmf(vec![0.5, 0.5]).unwrap(),
            BatchLaw::from_pmf(vec![0.2, 0.0, 0.5, 0.3]).unwrap(),
            BatchLaw::geometric(0.4).unwrap(),
        ];
        for b in laws {
            let m = model(b.clone(), ServiceLaw::exponential(1.0).unwrap());
            for t in [0.3, 1.0, 4.0] {
                let row = pmf_at_t(&m, t, 20).unwrap();
                let bf = brute_pmf(t, &batch_vec(&b, 20), 20, 80);
                for k in 0..=20 {
                    assert!((row.values[k] - bf[k]).abs() < 1e-10, "t={t} k={k}");
                }
            }
        }
        let m = model(BatchLaw::from_pmf(vec![0.5, 0.5]).unwrap(), ServiceLaw::exponential(1.0).unwrap());
        let v = pmf_at_t(&m, 1.0, 2).unwrap().values[2];
        let bf = brute_pmf(1.0, &[0.0, 0.5, 0.5], 2, 40)[2];
        assert!((v - bf).abs() < 1e-14);
    }

    #[test]
    fn pmf_at_zero_and_poisson_case() {
        let m = model(BatchLaw::fixed(1).unwrap(), ServiceLaw::exponential(1.0).unwrap());
        assert_eq!(pmf_at_t(&m, 0.0, 3).unwrap().values, vec![1.0, 0.0, 0.0, 0.0]);
        let row = pmf_at_t(&m, 2.5, 30).unwrap();
        for k in 0..=30 {
            let p = (-2.5f64).exp() * 2.5f64.powi(k as i32) / factorial(k);
            assert!((row.values[k] - p).abs() < 1e-15);
        }
        assert!(pmf_at_t(&m, -1.0, 3).is_err());
    }

    #[test]
    fn panjer_survives_large_means() {
        let m = model(BatchLaw::fixed(1).unwrap(), ServiceLaw::exponential(1.0).unwrap());
        let row = pmf_at_t(&m, 900.0, 1200).unwrap();
        assert!((row.sum() - 1.0).abs() < 1e-9);
        let mode = row.values.iter().cloned().fold(0.0, f64::max);
        assert!((mode - 1.0 / (2.0 * std::f64::consts::PI * 900.0f64).sqrt()).abs() < 1e-4);
    }

    #[test]
    fn transform_row_examples() {
        let m = model(BatchLaw::fixed(1).unwrap(), ServiceLaw::exponential(1.0).unwrap());
        let s = 0.7;
        let row = lt_row(&m, s, 40).unwrap();
        for k in 0..=40 {
            let expect = s * m.mu.powi(k as i32) / (s + m.mu).powi(k as i32 + 1);
            assert!((row.values[k] - expect).abs() < 1e-15);
        }
        assert!(lt_row(&m, 0.0, 3).is_err());
        let m = model(BatchLaw::geometric(0.5).unwrap(), ServiceLaw::exponential(1.0).unwrap());
        let row = lt_row(&m, 1.0, 200).unwrap();
        assert!((row.values[0] - 0.5).abs() < 1e-15);
        assert!((row.sum() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn occupation_examples() {
        let m = QueueModel::new(2.0, BatchLaw::fixed(1).unwrap(), ServiceLaw::exponential(1.0).unwrap(), 0.0, 1).unwrap();
        let row = occupation_row(&m, 10);
        assert!(row.values.iter().all(|v| (v - 0.5).abs() < 1e-15));
        let m = model(BatchLaw::fixed(2).unwrap(), ServiceLaw::exponential(1.0).unwrap());
        let row = occupation_row(&m, 6);
        assert_eq!(row.values, vec![1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0]);
        let m = model(BatchLaw::from_pmf(vec![0.3, 0.5, 0.2]).unwrap(), ServiceLaw::exponential(1.0).unwrap());
        let row = occupation_row(&m, 200);
        assert!((row.values[200] * m.mu - 1.0 / m.batch.mean()).abs() < 1e-3);
        assert!(row.values.iter().all(|v| *v >= 0.0 && *v <= 1.0 / m.mu + 1e-15));
    }

    #[test]
    fn mixed_coefficient_examples() {
        let nu = 2.0;
        let m = QueueModel::new(1.5, BatchLaw::fixed(1).unwrap(), ServiceLaw::exponential(nu).unwrap(), 0.0, 1).unwrap();
        let row = mixed_coeffs(&m, 3.0, 0.0, 30).unwrap();
        for k in 0..=30 {
            let expect = nu * m.mu.powi(k as i32) / (nu + m.mu).powi(k as i32 + 1);
            assert!((row.values[k] - expect).abs() < 1e-15);
        }
        let d = 1.3;
        let m = model(BatchLaw::from_pmf(vec![0.5, 0.5]).unwrap(), ServiceLaw::deterministic(d).unwrap());
        let row = mixed_coeffs(&m, 0.0, 0.4, 20).unwrap();
        let rho = pmf_at_t(&m, d, 20).unwrap();
        for k in 0..=20 {
            assert!((row.values[k] - (-0.4 * d).exp() * rho.values[k]).abs() < 1e-15);
        }
    }

    #[test]
    fn mixed_coefficients_sum_and_first_term() {
        let laws = [
            ServiceLaw::exponential(2.0).unwrap(),
            ServiceLaw::erlang(3, 4.0).unwrap(),
            ServiceLaw::hyperexponential(vec![0.3, 0.7], vec![0.5, 3.0]).unwrap(),
            ServiceLaw::deterministic(1.0).unwrap(),
            ServiceLaw::empirical(vec![0.2, 0.5, 1.0, 2.0], vec![0.1, 0.4, 0.8, 1.0]).unwrap(),
        ];
        for law in laws {
            let m = model(BatchLaw::from_pmf(vec![0.6, 0.4]).unwrap(), law.clone());
            for (x, s) in [(0.0, 0.5), (0.3, 0.0), (0.3, 2.0)] {
                let row = mixed_coeffs(&m, x, s, 150).unwrap();
                let lt = m.residual_lt(x, s).unwrap();
                assert!((row.sum() - lt).abs() < 1e-10, "{} x={x} s={s}", law.family_name());
                let f0 = m.residual_lt(x, s + m.mu).unwrap();
                assert!((row.values[0] - f0).abs() < 1e-11, "{}", law.family_name());
            }
        }
    }

    proptest! {
        #[test]
        fn transform_rows_are_probability_vectors(s in 0.05f64..20.0, mu in 0.1f64..5.0, p in 0.0f64..1.0) {
            let m = QueueModel::new(mu, BatchLaw::from_pmf(vec![p, 1.0 - p]).unwrap(), ServiceLaw::exponential(1.0).unwrap(), 0.0, 1).unwrap();
            let row = lt_row(&m, s, 4000).unwrap();
            prop_assert!(row.values.iter().all(|v| *v >= 0.0 && *v < 1.0));
            let tail_bound = (mu / (mu + s)).powi(2000);
            prop_assert!((row.sum() - 1.0).abs() < 1e-10 + tail_bound);
        }
    }
}

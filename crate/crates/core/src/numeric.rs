//! Compensated summation and Gauss-Legendre quadrature.

use std::sync::OnceLock;

use crate::error::{Error, Result};

/// Neumaier variant of Kahan summation.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

pub fn kahan_sum<I: IntoIterator<Item = f64>>(it: I) -> f64 {
    let mut k = KahanSum::new();
    for x in it {
        k.add(x);
    }
    k.value()
}

/// Nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else if n == 1 { x } else { p1 };
            let pn1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * pn - pn1) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

pub(crate) fn gl32() -> &'static (Vec<f64>, Vec<f64>) {
    static GL: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    GL.get_or_init(|| gauss_legendre(32))
}

fn panel<F>(f: &mut F, a: f64, b: f64, dim: usize, buf: &mut [f64], out: &mut [f64])
where
    F: FnMut(f64, &mut [f64]),
{
    let (nodes, weights) = gl32();
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    out[..dim].iter_mut().for_each(|v| *v = 0.0);
    for (x, w) in nodes.iter().zip(weights) {
        f(mid + half * x, buf);
        for j in 0..dim {
            out[j] += w * half * buf[j];
        }
    }
}

/// Adaptive vector quadrature of `f` over `[a, b]` split at `breaks`.
///
/// `f(t, out)` writes `dim` integrand values. Each panel is bisected until
/// the max-norm difference between the panel and its halves is at most
/// `tol` scaled by the panel's share of the interval.
pub fn integrate_vec<F>(mut f: F, a: f64, b: f64, breaks: &[f64], dim: usize, tol: f64) -> Result<Vec<f64>>
where
    F: FnMut(f64, &mut [f64]),
{
    let mut pts = vec![a];
    let mut inner: Vec<f64> = breaks.iter().copied().filter(|&t| t > a && t < b).collect();
    inner.sort_by(|x, y| x.partial_cmp(y).unwrap());
    pts.extend(inner);
    pts.push(b);

    let total = (b - a).max(f64::MIN_POSITIVE);
    let mut acc: Vec<KahanSum> = vec![KahanSum::new(); dim];
    let mut buf = vec![0.0; dim];
    let mut whole = vec![0.0; dim];
    let mut left = vec![0.0; dim];
    let mut right = vec![0.0; dim];
    let mut worst = 0.0_f64;

    for w in pts.windows(2) {
        if w[1] <= w[0] {
            continue;
        }
        let mut stack = vec![(w[0], w[1], 0usize)];
        while let Some((lo, hi, depth)) = stack.pop() {
            let mid = 0.5 * (lo + hi);
            panel(&mut f, lo, hi, dim, &mut buf, &mut whole);
            panel(&mut f, lo, mid, dim, &mut buf, &mut left);
            panel(&mut f, mid, hi, dim, &mut buf, &mut right);
            let err = (0..dim)
                .map(|j| (left[j] + right[j] - whole[j]).abs())
                .fold(0.0, f64::max);
            let budget = tol * (hi - lo) / total;
            if err <= budget || depth >= 40 {
                if err > budget {
                    worst = worst.max(err);
                }
                for j in 0..dim {
                    acc[j].add(left[j] + right[j]);
                }
            } else {
                stack.push((lo, mid, depth + 1));
                stack.push((mid, hi, depth + 1));
            }
        }
    }
    if worst > tol {
        return Err(Error::Quadrature {
            achieved: worst,
            requested: tol,
        });
    }
    Ok(acc.iter().map(KahanSum::value).collect())
}

pub fn integrate<F>(mut f: F, a: f64, b: f64, breaks: &[f64], tol: f64) -> Result<f64>
where
    F: FnMut(f64) -> f64,
{
    integrate_vec(|t, out| out[0] = f(t), a, b, breaks, 1, tol).map(|v| v[0])
}

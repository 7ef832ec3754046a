use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub const DEFAULT_SUPPORT_CAP: usize = 64;
const NORMALIZATION_TOL: f64 = 1e-12;

/// Law of the arrival batch size, supported on 1, 2, ...
///
/// `weights[i - 1] = P[batch = i]` for `i <= weights.len()`; beyond that an
/// optional geometric tail continues with `P[batch = K + j] = a_K * q^j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchLaw {
    weights: Vec<f64>,
    tail_ratio: Option<f64>,
    mean: f64,
    second_factorial: f64,
}

impl BatchLaw {
    /// Explicit finite pmf; `pmf[i - 1] = P[batch = i]`.
    pub fn from_pmf(pmf: Vec<f64>) -> Result<Self> {
        Self::with_tail(pmf, None, DEFAULT_SUPPORT_CAP)
    }

    pub fn with_tail(weights: Vec<f64>, tail_ratio: Option<f64>, cap: usize) -> Result<Self> {
        if weights.is_empty() {
            return Err(invalid("batch.pmf", "empty pmf"));
        }
        if weights.len() > cap {
            return Err(invalid(
                "batch.pmf",
                format!("support {} exceeds cap {}", weights.len(), cap),
            ));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(invalid("batch.pmf", "weights must be finite and nonnegative"));
        }
        let last = *weights.last().unwrap();
        let tail_mass = match tail_ratio {
            Some(q) if !(0.0..1.0).contains(&q) => {
                return Err(invalid("batch.tail", format!("ratio {q} not in [0,1)")));
            }
            Some(q) => last * q / (1.0 - q),
            None => 0.0,
        };
        let sum: f64 = weights.iter().sum::<f64>() + tail_mass;
        if (sum - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::PmfNotNormalized { sum });
        }
        let k = weights.len() as f64;
        let mut mean: f64 = weights.iter().enumerate().map(|(i, w)| (i + 1) as f64 * w).sum();
        let mut fact2: f64 = weights
            .iter()
            .enumerate()
            .map(|(i, w)| ((i + 1) * i) as f64 * w)
            .sum();
        if let Some(q) = tail_ratio {
            // sum_{j>=1} q^j (K+j) and sum q^j (K+j)(K+j-1)
            let g0 = q / (1.0 - q);
            let g1 = q / (1.0 - q).powi(2);
            let g2 = 2.0 * q * q / (1.0 - q).powi(3) + g1;
            mean += last * (k * g0 + g1);
            fact2 += last * (k * (k - 1.0) * g0 + (2.0 * k - 1.0) * g1 + g2);
        }
        Ok(Self {
            weights,
            tail_ratio,
            mean,
            second_factorial: fact2,
        })
    }

    /// Batch of constant size `n`.
    pub fn fixed(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(invalid("batch.size", "batch size must be at least 1"));
        }
        let mut w = vec![0.0; n];
        w[n - 1] = 1.0;
        Self::with_tail(w, None, n.max(DEFAULT_SUPPORT_CAP))
    }

    /// `P[batch = i] = (1 - q) q^(i-1)`.
    pub fn geometric(q: f64) -> Result<Self> {
        Self::with_tail(vec![1.0 - q], Some(q), DEFAULT_SUPPORT_CAP)
    }

    pub fn explicit_len(&self) -> usize {
        self.weights.len()
    }

    pub fn tail_ratio(&self) -> Option<f64> {
        self.tail_ratio
    }

    pub fn is_unit(&self) -> bool {
        self.weights.len() == 1 && self.tail_ratio.map_or(true, |q| q == 0.0)
    }

    /// `P[batch = i]`, zero at `i = 0`.
    pub fn pmf(&self, i: usize) -> f64 {
        if i == 0 {
            return 0.0;
        }
        let k = self.weights.len();
        if i <= k {
            self.weights[i - 1]
        } else {
            match self.tail_ratio {
                Some(q) if q > 0.0 => self.weights[k - 1] * q.powi((i - k) as i32),
                _ => 0.0,
            }
        }
    }

    /// `P[batch > i]`.
    pub fn tail(&self, i: usize) -> f64 {
        let k = self.weights.len();
        let tail_mass = |from: usize| match self.tail_ratio {
            // sum_{j > from} a_K q^{j-K}, from >= K
            Some(q) if q > 0.0 => self.weights[k - 1] * q.powi((from - k) as i32) * q / (1.0 - q),
            _ => 0.0,
        };
        if i >= k {
            tail_mass(i)
        } else {
            let s: f64 = self.weights[i..].iter().sum();
            (s + tail_mass(k)).min(1.0)
        }
    }

    pub fn pmf_vec(&self, n: usize) -> Vec<f64> {
        (0..n).map(|i| self.pmf(i)).collect()
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// `E[batch (batch - 1)]`.
    pub fn second_factorial_moment(&self) -> f64 {
        self.second_factorial
    }

    pub fn pgf(&self, z: f64) -> f64 {
        self.pgf_c(Complex64::new(z, 0.0)).re
    }

    pub fn pgf_c(&self, z: Complex64) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for w in self.weights.iter().rev() {
            acc = (acc + w) * z;
        }
        if let Some(q) = self.tail_ratio.filter(|q| *q > 0.0) {
            let k = self.weights.len() as i32;
            let last = self.weights[self.weights.len() - 1];
            acc += z.powi(k) * last * q * z / (1.0 - q * z);
        }
        acc
    }

    /// Derivative of the pgf on the real line.
    pub fn pgf_deriv(&self, z: f64) -> f64 {
        let mut acc = 0.0;
        for (i, w) in self.weights.iter().enumerate().rev() {
            acc = acc * z + (i + 1) as f64 * w;
        }
        if let Some(q) = self.tail_ratio.filter(|q| *q > 0.0) {
            let k = self.weights.len() as f64;
            let last = self.weights[self.weights.len() - 1];
            // d/dz [ a_K q z^{K+1} / (1 - q z) ]
            let u = z.powf(k) * z;
            let du = (k + 1.0) * z.powf(k);
            acc += last * q * (du * (1.0 - q * z) + u * q) / (1.0 - q * z).powi(2);
        }
        acc
    }

    /// `E[z^(batch - i); batch > i]`.
    pub fn excess_pgf(&self, i: usize, z: Complex64) -> Complex64 {
        let k = self.weights.len();
        let mut acc = Complex64::new(0.0, 0.0);
        if i < k {
            let mut zp = z;
            for w in &self.weights[i..] {
                acc += zp * w;
                zp *= z;
            }
        }
        if let Some(q) = self.tail_ratio.filter(|q| *q > 0.0) {
            let last = self.weights[k - 1];
            let from = i.max(k);
            // sum_{j > from} a_K q^{j-K} z^{j-i}
            let lead = last * q.powi((from - k) as i32) * z.powi((from - i) as i32);
            acc += lead * q * z / (1.0 - q * z);
        }
        acc
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let mut u: f64 = rng.random();
        for (i, w) in self.weights.iter().enumerate() {
            if u < *w {
                return i + 1;
            }
            u -= w;
        }
        let k = self.weights.len();
        match self.tail_ratio.filter(|q| *q > 0.0) {
            Some(q) => {
                // remaining mass is a geometric tail on K+1, K+2, ...
                let v: f64 = rng.random::<f64>();
                let extra = ((1.0 - v).ln() / q.ln()).floor() as usize;
                k + 1 + extra
            }
            None => k,
        }
    }
}

//! Primitive distributions of the queue and their scalar functionals.

pub mod batch;
pub mod config;
pub mod service;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

pub use batch::BatchLaw;
pub use config::ModelConfig;
pub use service::{EmpiricalCdf, ServiceLaw};

use crate::error::{invalid, Error, Result};

/// The queue M^k|G^d|1|B: Poisson batch arrivals at rate `mu`, batch law
/// `batch`, service law `service`, geometric departure batches with
/// parameter `lambda` (`P[d = n] = (1 - lambda) lambda^(n-1)`), and a waiting
/// room of `buffer + 1` places.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueModel {
    pub mu: f64,
    pub batch: BatchLaw,
    pub service: ServiceLaw,
    pub lambda: f64,
    pub buffer: usize,
}

/// Load and variance parameters for the critical-load diffusion limits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiffusionParams {
    pub rho: f64,
    pub sigma2: f64,
}

impl DiffusionParams {
    pub fn sigma(&self) -> f64 {
        self.sigma2.sqrt()
    }
}

impl QueueModel {
    pub fn new(mu: f64, batch: BatchLaw, service: ServiceLaw, lambda: f64, buffer: usize) -> Result<Self> {
        if !(mu.is_finite() && mu > 0.0) {
            return Err(invalid("mu", format!("must be positive, got {mu}")));
        }
        if !(0.0..1.0).contains(&lambda) {
            return Err(invalid("lambda", format!("must lie in [0,1), got {lambda}")));
        }
        let service = service.validated()?;
        Ok(Self {
            mu,
            batch,
            service,
            lambda,
            buffer,
        })
    }

    pub fn from_config(cfg: &ModelConfig) -> Result<Self> {
        cfg.build()
    }

    pub fn with_buffer(&self, buffer: usize) -> Self {
        Self {
            buffer,
            ..self.clone()
        }
    }

    pub fn with_lambda(&self, lambda: f64) -> Result<Self> {
        Self::new(self.mu, self.batch.clone(), self.service.clone(), lambda, self.buffer)
    }

    /// `rho = (1 - lambda) mu E[batch] E[service]`.
    pub fn rho(&self) -> f64 {
        (1.0 - self.lambda) * self.mu * self.batch.mean() * self.service.mean()
    }

    /// Same shapes with `mu` rescaled so that `rho = 1`.
    pub fn with_critical_load(&self) -> Self {
        let mu = 1.0 / ((1.0 - self.lambda) * self.batch.mean() * self.service.mean());
        Self { mu, ..self.clone() }
    }

    pub fn diffusion_params(&self) -> DiffusionParams {
        let eta = self.service.mean();
        let sigma2 = self.mu
            * (self.batch.second_factorial_moment()
                + self.batch.mean() * self.service.second_moment() / ((1.0 - self.lambda) * eta * eta));
        DiffusionParams {
            rho: self.rho(),
            sigma2,
        }
    }

    /// `k(theta) = mu (E theta^batch - 1)` on the closed unit disk.
    pub fn cumulant(&self, theta: Complex64) -> Result<Complex64> {
        let m = theta.norm();
        if m > 1.0 + 1e-15 {
            return Err(Error::OutsideUnitDisk { modulus: m });
        }
        Ok(self.cumulant_unchecked(theta))
    }

    pub(crate) fn cumulant_unchecked(&self, theta: Complex64) -> Complex64 {
        (self.batch.pgf_c(theta) - 1.0) * self.mu
    }

    pub fn cumulant_real(&self, theta: f64) -> Result<f64> {
        self.cumulant(Complex64::new(theta, 0.0)).map(|z| z.re)
    }

    /// `E e^{-s eta_x}`.
    pub fn residual_lt(&self, x: f64, s: f64) -> Result<f64> {
        if !(s >= 0.0) {
            return Err(invalid("s", format!("must be >= 0, got {s}")));
        }
        self.service.residual_lt(x, s)
    }

    /// `P[d = n]` for the departure batch.
    pub fn departure_pmf(&self, n: usize) -> f64 {
        if n == 0 {
            0.0
        } else {
            (1.0 - self.lambda) * self.lambda.powi(n as i32 - 1)
        }
    }
}

//! Key-value model configuration (TOML).
//!
//! ```toml
//! [arrival]
//! mu = 1.0
//! [batch]
//! pmf = [0.5, 0.5]          # or family = "fixed", size = 2
//!                           # or family = "geometric", q = 0.4
//! [service]
//! family = "erlang"         # exponential(rate) | erlang(shape, rate)
//! shape = 2                 # | hyperexponential(probs, rates)
//! rate = 4.0                # | deterministic(value) | empirical(knots, cdf)
//! [jump]
//! lambda = 0.3
//! [buffer]
//! B = 8
//! ```

use serde::{Deserialize, Serialize};

use super::{BatchLaw, QueueModel, ServiceLaw};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub arrival: Option<ArrivalSection>,
    pub batch: Option<BatchSection>,
    pub service: Option<ServiceSection>,
    pub jump: Option<JumpSection>,
    pub buffer: Option<BufferSection>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrivalSection {
    pub mu: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatchSection {
    pub pmf: Option<Vec<f64>>,
    pub family: Option<String>,
    pub size: Option<usize>,
    pub q: Option<f64>,
    pub support_cap: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceSection {
    pub family: Option<String>,
    pub rate: Option<f64>,
    pub shape: Option<usize>,
    pub probs: Option<Vec<f64>>,
    pub rates: Option<Vec<f64>>,
    pub value: Option<f64>,
    pub knots: Option<Vec<f64>>,
    pub cdf: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JumpSection {
    pub lambda: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BufferSection {
    #[serde(rename = "B")]
    pub b: Option<usize>,
}

fn cfg_err(key: &str, reason: impl std::fmt::Display) -> Error {
    Error::Config {
        key: key.to_string(),
        reason: reason.to_string(),
    }
}

fn need<T: Clone>(v: &Option<T>, key: &str) -> Result<T> {
    v.clone().ok_or_else(|| cfg_err(key, "missing"))
}

/// Re-tag parameter errors with the config key that produced them.
fn at(key: &'static str) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::PmfNotNormalized { sum } => cfg_err(key, format!("pmf not normalized (sum = {sum})")),
        Error::InvalidParameter { reason, .. } => cfg_err(key, reason),
        other => other,
    }
}

impl ModelConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let msg = e.message().to_string();
            // toml reports unknown fields by name; keep the whole message
            cfg_err("<document>", msg)
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn build(&self) -> Result<QueueModel> {
        let arrival = need(&self.arrival, "arrival")?;
        let mu = need(&arrival.mu, "arrival.mu")?;

        let batch = need(&self.batch, "batch")?;
        let cap = batch.support_cap.unwrap_or(super::batch::DEFAULT_SUPPORT_CAP);
        let batch_law = match (&batch.pmf, batch.family.as_deref()) {
            (Some(_), Some(_)) => return Err(cfg_err("batch", "give either pmf or family, not both")),
            (Some(pmf), None) => BatchLaw::with_tail(pmf.clone(), None, cap).map_err(at("batch.pmf"))?,
            (None, Some("fixed")) => BatchLaw::fixed(need(&batch.size, "batch.size")?).map_err(at("batch.size"))?,
            (None, Some("geometric")) => BatchLaw::geometric(need(&batch.q, "batch.q")?).map_err(at("batch.q"))?,
            (None, Some(other)) => return Err(cfg_err("batch.family", format!("unknown family `{other}`"))),
            (None, None) => return Err(cfg_err("batch.pmf", "missing (or batch.family)")),
        };

        let svc = need(&self.service, "service")?;
        let family = need(&svc.family, "service.family")?;
        let service = match family.as_str() {
            "exponential" => ServiceLaw::exponential(need(&svc.rate, "service.rate")?).map_err(at("service.rate"))?,
            "erlang" => ServiceLaw::erlang(need(&svc.shape, "service.shape")?, need(&svc.rate, "service.rate")?)
                .map_err(at("service"))?,
            "hyperexponential" => {
                ServiceLaw::hyperexponential(need(&svc.probs, "service.probs")?, need(&svc.rates, "service.rates")?)
                    .map_err(at("service.probs"))?
            }
            "deterministic" => ServiceLaw::deterministic(need(&svc.value, "service.value")?).map_err(at("service.value"))?,
            "empirical" => ServiceLaw::empirical(need(&svc.knots, "service.knots")?, need(&svc.cdf, "service.cdf")?)
                .map_err(at("service.cdf"))?,
            other => return Err(cfg_err("service.family", Error::UnsupportedFamily(other.to_string()))),
        };

        let lambda = self.jump.as_ref().and_then(|j| j.lambda).unwrap_or(0.0);
        let b = need(&need(&self.buffer, "buffer")?.b, "buffer.B")?;
        QueueModel::new(mu, batch_law, service, lambda, b).map_err(|e| match e {
            Error::InvalidParameter { name: "mu", reason } => cfg_err("arrival.mu", reason),
            Error::InvalidParameter { name: "lambda", reason } => cfg_err("jump.lambda", reason),
            other => other,
        })
    }
}

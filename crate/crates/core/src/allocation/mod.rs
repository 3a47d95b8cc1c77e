//! Allocation schemes: inverse volatility (IVP), hierarchical risk parity
//! (HRP), the critical line algorithm (CLA) and network-modularity
//! allocation (NetMod).

mod cla;
mod hrp;
mod ivp;
mod netmod;

pub use cla::{cla_turning_points, cla_weights, ClaConfig, TurningPoint};
pub use hrp::{
    hrp_distance, hrp_weights, quasi_diagonalize, recursive_bisection, single_linkage, LinkageTree,
    Merge,
};
pub use ivp::ivp_weights;
pub use netmod::{
    build_threshold_graph, louvain_communities, modularity, netmod_partition, netmod_weights,
    AssetGraph, Partition,
};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::correlation::MetricKind;
use crate::error::{LabError, Result};

const WEIGHT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchemeKind {
    Ivp,
    Hrp,
    Cla,
    Netmod,
}

impl SchemeKind {
    pub fn label(self) -> &'static str {
        match self {
            SchemeKind::Ivp => "IVP",
            SchemeKind::Hrp => "HRP",
            SchemeKind::Cla => "CLA",
            SchemeKind::Netmod => "NetMod",
        }
    }
}

impl FromStr for SchemeKind {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ivp" => Ok(SchemeKind::Ivp),
            "hrp" => Ok(SchemeKind::Hrp),
            "cla" => Ok(SchemeKind::Cla),
            "netmod" => Ok(SchemeKind::Netmod),
            _ => Err(LabError::UnknownMethod(s.to_string())),
        }
    }
}

/// A scheme paired with the correlation measure plugged into it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Method {
    pub scheme: SchemeKind,
    pub metric: MetricKind,
}

impl Method {
    pub fn new(scheme: SchemeKind, metric: MetricKind) -> Result<Self> {
        if scheme == SchemeKind::Cla && metric != MetricKind::Pearson {
            return Err(LabError::UnknownMethod(format!(
                "{}-{} (CLA only runs on the covariance matrix)",
                scheme.label().to_ascii_lowercase(),
                metric.label()
            )));
        }
        Ok(Self { scheme, metric })
    }

    /// The ten methods compared in the study, in table order.
    pub fn sweep() -> Vec<Method> {
        let mut out = Vec::with_capacity(10);
        for scheme in [SchemeKind::Ivp, SchemeKind::Hrp, SchemeKind::Netmod] {
            for metric in MetricKind::ALL {
                out.push(Method { scheme, metric });
            }
        }
        out.push(Method {
            scheme: SchemeKind::Cla,
            metric: MetricKind::Pearson,
        });
        out
    }

    /// Identifier such as `netmod-dcca`.
    pub fn id(&self) -> String {
        format!("{}-{}", self.scheme.label().to_ascii_lowercase(), self.metric.label())
    }

    /// Table label such as `NetMod dcca`.
    pub fn display_name(&self) -> String {
        format!("{} {}", self.scheme.label(), self.metric.label())
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.id())
    }
}

impl FromStr for Method {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        let mut parts = s.trim().split(['-', '_', ' ']).filter(|p| !p.is_empty());
        let (Some(scheme), Some(metric), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(LabError::UnknownMethod(s.to_string()));
        };
        let scheme = scheme.parse().map_err(|_| LabError::UnknownMethod(s.to_string()))?;
        let metric = metric.parse().map_err(|_| LabError::UnknownMethod(s.to_string()))?;
        Method::new(scheme, metric)
    }
}

impl Serialize for Method {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.id())
    }
}

impl<'de> Deserialize<'de> for Method {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Long-only allocation vector summing to one.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Weights {
    values: Vec<f64>,
    pub scheme: SchemeKind,
    pub metric: MetricKind,
}

impl Weights {
    pub fn new(values: Vec<f64>, scheme: SchemeKind, metric: MetricKind) -> Result<Self> {
        if values.is_empty() {
            return Err(LabError::InsufficientData("empty weight vector".into()));
        }
        let sum: f64 = values.iter().sum();
        if !((sum - 1.0).abs() <= WEIGHT_TOL) {
            return Err(LabError::Domain(format!("weights sum to {sum}, not 1")));
        }
        if let Some((i, w)) = values
            .iter()
            .enumerate()
            .find(|(_, &w)| !(-WEIGHT_TOL..=1.0 + WEIGHT_TOL).contains(&w))
        {
            return Err(LabError::Domain(format!("weight {i} = {w} is outside [0, 1]")));
        }
        Ok(Self {
            values,
            scheme,
            metric,
        })
    }

    /// `1/N` on every asset.
    pub fn equal(n: usize, scheme: SchemeKind, metric: MetricKind) -> Self {
        Self {
            values: vec![1.0 / n as f64; n],
            scheme,
            metric,
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn with_metric(mut self, metric: MetricKind) -> Self {
        self.metric = metric;
        self
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

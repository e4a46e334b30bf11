//! Per-node confusion matrices and nan-aware accuracy/precision/recall
//! with defined-node averaging.

use crate::error::{Error, Result};
use crate::graph::Label;
use serde::de::{self, Deserializer};
use serde::{Deserialize, Serialize, Serializer};

/// A metric that may be mathematically undefined. Never a float NaN:
/// undefined values serialize as the literal string "undefined" and are
/// excluded from averages.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MetricValue {
    Defined(f64),
    Undefined,
}

impl MetricValue {
    pub fn as_option(self) -> Option<f64> {
        match self {
            MetricValue::Defined(v) => Some(v),
            MetricValue::Undefined => None,
        }
    }

    pub fn is_defined(self) -> bool {
        matches!(self, MetricValue::Defined(_))
    }
}

impl Serialize for MetricValue {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            MetricValue::Defined(v) => s.serialize_f64(*v),
            MetricValue::Undefined => s.serialize_str("undefined"),
        }
    }
}

impl<'de> Deserialize<'de> for MetricValue {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(MetricValue::Defined(v)),
            Raw::Text(s) if s == "undefined" => Ok(MetricValue::Undefined),
            Raw::Text(s) => Err(de::Error::custom(format!("unexpected metric value {s:?}"))),
        }
    }
}

/// Confusion counts for one node slot, with dead as the positive class.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeConfusion {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl NodeConfusion {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    /// Merge two partial confusions (fold over parallel shards).
    pub fn merge(&self, other: &NodeConfusion) -> NodeConfusion {
        NodeConfusion {
            tp: self.tp + other.tp,
            fp: self.fp + other.fp,
            tn: self.tn + other.tn,
            fn_: self.fn_ + other.fn_,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeMetrics {
    pub confusion: NodeConfusion,
    pub accuracy: f64,
    pub precision: MetricValue,
    pub recall: MetricValue,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub per_node: Vec<NodeMetrics>,
    /// Averaged over nodes where precision or recall is defined.
    pub average_accuracy: MetricValue,
    pub average_precision: MetricValue,
    pub average_recall: MetricValue,
    pub mean_loss: f64,
}

/// Argmax decision with ties going to alive, the majority class.
pub fn hard_decision(probs: &[f64]) -> Result<Label> {
    if probs.len() != 2 {
        return Err(Error::domain(format!(
            "expected 2 class probabilities, got {}",
            probs.len()
        )));
    }
    let sum = probs[0] + probs[1];
    if (sum - 1.0).abs() > 1e-6 {
        return Err(Error::domain(format!("probabilities sum to {sum}")));
    }
    Ok(if probs[1] > 0.5 { Label::Dead } else { Label::Alive })
}

/// Increment exactly one confusion cell for one node.
pub fn accumulate(
    confusions: &mut [NodeConfusion],
    node: usize,
    predicted: Label,
    actual: Label,
) -> Result<()> {
    let c = confusions
        .get_mut(node)
        .ok_or_else(|| Error::domain(format!("node index {node} out of range")))?;
    match (predicted, actual) {
        (Label::Dead, Label::Dead) => c.tp += 1,
        (Label::Dead, Label::Alive) => c.fp += 1,
        (Label::Alive, Label::Alive) => c.tn += 1,
        (Label::Alive, Label::Dead) => c.fn_ += 1,
    }
    Ok(())
}

/// Builds the report. Precision is undefined when tp+fp = 0, recall when
/// tp+fn = 0; averages run over nodes where the metric is defined, and
/// average accuracy over nodes with at least one defined precision or
/// recall (the "on two nodes" convention).
pub fn finalize(confusions: &[NodeConfusion], losses: &[f64]) -> Result<MetricsReport> {
    if losses.is_empty() || confusions.iter().all(|c| c.total() == 0) {
        return Err(Error::domain("no scored sequences".to_string()));
    }
    let mut per_node = Vec::with_capacity(confusions.len());
    for c in confusions {
        let total = c.total();
        let accuracy = (c.tp + c.tn) as f64 / total as f64;
        let precision = if c.tp + c.fp > 0 {
            MetricValue::Defined(c.tp as f64 / (c.tp + c.fp) as f64)
        } else {
            MetricValue::Undefined
        };
        let recall = if c.tp + c.fn_ > 0 {
            MetricValue::Defined(c.tp as f64 / (c.tp + c.fn_) as f64)
        } else {
            MetricValue::Undefined
        };
        per_node.push(NodeMetrics {
            confusion: *c,
            accuracy,
            precision,
            recall,
        });
    }
    let avg = |vals: Vec<f64>| {
        if vals.is_empty() {
            MetricValue::Undefined
        } else {
            MetricValue::Defined(vals.iter().sum::<f64>() / vals.len() as f64)
        }
    };
    let average_precision = avg(per_node.iter().filter_map(|m| m.precision.as_option()).collect());
    let average_recall = avg(per_node.iter().filter_map(|m| m.recall.as_option()).collect());
    let average_accuracy = avg(
        per_node
            .iter()
            .filter(|m| m.precision.is_defined() || m.recall.is_defined())
            .map(|m| m.accuracy)
            .collect(),
    );
    let mean_loss = losses.iter().sum::<f64>() / losses.len() as f64;
    Ok(MetricsReport {
        per_node,
        average_accuracy,
        average_precision,
        average_recall,
        mean_loss,
    })
}

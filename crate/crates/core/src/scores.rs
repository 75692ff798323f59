use std::collections::BTreeMap;
use std::fmt::Display;

/// Per-sample scores together with the knobs that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVector {
    pub values: Vec<f64>,
    pub metric: String,
    pub params: BTreeMap<String, String>,
    pub higher_is_better: bool,
}

impl ScoreVector {
    pub fn new(metric: impl Into<String>, values: Vec<f64>) -> Self {
        ScoreVector { values, metric: metric.into(), params: BTreeMap::new(), higher_is_better: true }
    }

    pub fn with_param(mut self, key: &str, value: impl Display) -> Self {
        self.params.insert(key.to_string(), value.to_string());
        self
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::collections::BTreeMap;

/// A concrete counterexample attached to a failing check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub what: String,
    pub elements: Vec<Vec<i64>>,
}

/// Verification report. A failing certificate always carries a witness.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub name: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub stage: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub core: Option<u64>,
    pub pass: bool,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub witnesses: Vec<Witness>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty", default)]
    pub measured: BTreeMap<String, Value>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub bound: Option<String>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub children: Vec<Certificate>,
}

impl Default for Certificate {
    fn default() -> Self {
        Certificate::new("")
    }
}

impl Certificate {
    pub fn new(name: impl Into<String>) -> Self {
        Certificate {
            name: name.into(),
            stage: None,
            core: None,
            pass: true,
            witnesses: Vec::new(),
            measured: BTreeMap::new(),
            bound: None,
            children: Vec::new(),
        }
    }

    pub fn with_core(mut self, core: u64) -> Self {
        self.core = Some(core);
        self
    }

    pub fn with_stage(mut self, stage: usize) -> Self {
        self.stage = Some(stage);
        self
    }

    pub fn fail(&mut self, what: impl Into<String>, elements: Vec<Vec<i64>>) {
        self.pass = false;
        self.witnesses.push(Witness { what: what.into(), elements });
    }

    pub fn measure(&mut self, key: &str, value: impl Into<Value>) {
        self.measured.insert(key.to_string(), value.into());
    }

    pub fn bound(&mut self, text: impl Into<String>) {
        self.bound = Some(text.into());
    }

    /// Attach a sub-certificate; the parent fails with it.
    pub fn push(&mut self, child: Certificate) {
        if !child.pass {
            self.pass = false;
        }
        self.children.push(child);
    }

    /// Depth-first list of failing leaves, for reports.
    pub fn failures(&self) -> Vec<&Certificate> {
        let mut out = Vec::new();
        if !self.pass && self.children.iter().all(|c| c.pass) {
            out.push(self);
        }
        for c in &self.children {
            out.extend(c.failures());
        }
        out
    }
}

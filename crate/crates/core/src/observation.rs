//! Observation patterns: which dyads and attribute entries were seen, plus
//! the ordered trace of a link-tracing design.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{Dyad, Network};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TraceItem {
    Node { node: usize },
    Dyad { from: usize, to: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEntry {
    #[serde(flatten)]
    pub item: TraceItem,
    pub time: usize,
}

/// One wave of a trace, in sampling order.
pub type Wave = Vec<TraceEntry>;

#[derive(Debug, Clone, PartialEq)]
pub struct ObservationPattern {
    n: usize,
    directed: bool,
    dyads: Vec<bool>,
    attrs: Vec<Vec<bool>>,
    trace: Option<Vec<Wave>>,
}

impl ObservationPattern {
    pub fn fully_observed(net: &Network) -> Self {
        Self::uniform(net, true)
    }

    pub fn nothing_observed(net: &Network) -> Self {
        Self::uniform(net, false)
    }

    fn uniform(net: &Network, seen: bool) -> Self {
        let n = net.n();
        ObservationPattern {
            n,
            directed: net.is_directed(),
            dyads: vec![seen; n * n],
            attrs: vec![vec![seen; n]; net.variables().len()],
            trace: None,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn variable_count(&self) -> usize {
        self.attrs.len()
    }

    pub fn dyad_observed(&self, i: usize, j: usize) -> bool {
        self.dyads[i * self.n + j]
    }

    pub fn set_dyad_observed(&mut self, i: usize, j: usize, seen: bool) {
        self.dyads[i * self.n + j] = seen;
        if !self.directed {
            self.dyads[j * self.n + i] = seen;
        }
    }

    pub fn attr_observed(&self, node: usize, var: usize) -> bool {
        self.attrs[var][node]
    }

    pub fn set_attr_observed(&mut self, node: usize, var: usize, seen: bool) {
        self.attrs[var][node] = seen;
    }

    /// Mark every entry of `var` unobserved (a latent variable).
    pub fn hide_variable(&mut self, var: usize) {
        self.attrs[var].iter_mut().for_each(|x| *x = false);
    }

    pub fn trace(&self) -> Option<&[Wave]> {
        self.trace.as_deref()
    }

    pub fn set_trace(&mut self, trace: Option<Vec<Wave>>) {
        self.trace = trace;
    }

    /// Nodes that appear as `Node` entries in the trace.
    pub fn traced_nodes(&self) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .trace
            .iter()
            .flatten()
            .flatten()
            .filter_map(|e| match e.item {
                TraceItem::Node { node } => Some(node),
                TraceItem::Dyad { .. } => None,
            })
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    fn canonical_dyads(&self) -> impl Iterator<Item = Dyad> + '_ {
        let n = self.n;
        let directed = self.directed;
        (0..n).flat_map(move |i| {
            let start = if directed { 0 } else { i + 1 };
            (start..n).filter(move |&j| j != i).map(move |j| (i, j))
        })
    }

    pub fn unobserved_dyads(&self) -> Vec<Dyad> {
        self.canonical_dyads()
            .filter(|&(i, j)| !self.dyad_observed(i, j))
            .collect()
    }

    pub fn observed_dyad_count(&self) -> usize {
        self.canonical_dyads()
            .filter(|&(i, j)| self.dyad_observed(i, j))
            .count()
    }

    /// Unobserved `(node, variable)` entries.
    pub fn unobserved_attrs(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (var, mask) in self.attrs.iter().enumerate() {
            for (node, &seen) in mask.iter().enumerate() {
                if !seen {
                    out.push((node, var));
                }
            }
        }
        out
    }

    pub fn unobserved_count(&self) -> usize {
        self.unobserved_dyads().len() + self.unobserved_attrs().len()
    }

    pub fn is_complete(&self) -> bool {
        self.unobserved_count() == 0
    }

    pub fn validate(&self, net: &Network) -> Result<()> {
        if self.n != net.n() || self.directed != net.is_directed() {
            return Err(Error::config(format!(
                "observation pattern is for a {}-node {} network",
                self.n,
                if self.directed {
                    "directed"
                } else {
                    "undirected"
                }
            )));
        }
        if self.attrs.len() != net.variables().len() {
            return Err(Error::config(format!(
                "observation pattern has {} attribute masks for {} variables",
                self.attrs.len(),
                net.variables().len()
            )));
        }
        for e in self.trace.iter().flatten().flatten() {
            match e.item {
                TraceItem::Node { node } => {
                    if node >= self.n {
                        return Err(Error::config(format!("trace references node {node}")));
                    }
                }
                TraceItem::Dyad { from, to } => {
                    if from >= self.n || to >= self.n || from == to {
                        return Err(Error::config(format!(
                            "trace references dyad ({from}, {to})"
                        )));
                    }
                    if !self.dyad_observed(from, to) {
                        return Err(Error::config(format!(
                            "traced dyad ({from}, {to}) is not observed"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// The observed part of `net`: unobserved dyads cleared and unobserved
    /// attributes reset to level 0.
    pub fn mask(&self, net: &Network) -> Network {
        let mut out = net.clone();
        for (i, j) in self.unobserved_dyads() {
            out.set_edge(i, j, false).expect("valid dyad");
        }
        for (node, var) in self.unobserved_attrs() {
            out.set_attr(node, var, 0).expect("valid attribute");
        }
        out
    }

    pub fn to_toml(&self) -> String {
        let row = |i: usize| -> String {
            (0..self.n)
                .map(|j| {
                    if i == j {
                        '-'
                    } else if self.dyad_observed(i, j) {
                        '1'
                    } else {
                        '0'
                    }
                })
                .collect()
        };
        let file = PatternFile {
            n: self.n,
            directed: self.directed,
            dyads: (0..self.n).map(row).collect(),
            attributes: self
                .attrs
                .iter()
                .map(|m| m.iter().map(|&b| if b { '1' } else { '0' }).collect())
                .collect(),
            trace: self.trace.clone().map(|waves| {
                waves
                    .into_iter()
                    .map(|entries| WaveFile { entries })
                    .collect()
            }),
        };
        toml::to_string(&file).expect("pattern serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let file: PatternFile =
            toml::from_str(text).map_err(|e| Error::config(format!("observation pattern: {e}")))?;
        let n = file.n;
        if file.dyads.len() != n {
            return Err(Error::config(format!(
                "expected {n} dyad rows, found {}",
                file.dyads.len()
            )));
        }
        let mut dyads = vec![false; n * n];
        for (i, row) in file.dyads.iter().enumerate() {
            let chars: Vec<char> = row.chars().collect();
            if chars.len() != n {
                return Err(Error::config(format!(
                    "dyad row {i} has {} entries",
                    chars.len()
                )));
            }
            for (j, c) in chars.into_iter().enumerate() {
                dyads[i * n + j] = match (i == j, c) {
                    (true, '-') => false,
                    (false, '1') => true,
                    (false, '0') => false,
                    _ => {
                        return Err(Error::config(format!(
                            "bad dyad mask entry '{c}' at ({i}, {j})"
                        )))
                    }
                };
            }
        }
        let mut attrs = Vec::new();
        for (v, row) in file.attributes.iter().enumerate() {
            let mask: Vec<bool> = row
                .chars()
                .map(|c| match c {
                    '1' => Ok(true),
                    '0' => Ok(false),
                    _ => Err(Error::config(format!(
                        "bad attribute mask entry '{c}' for variable {v}"
                    ))),
                })
                .collect::<Result<_>>()?;
            if mask.len() != n {
                return Err(Error::config(format!(
                    "attribute mask {v} has {} entries",
                    mask.len()
                )));
            }
            attrs.push(mask);
        }
        Ok(ObservationPattern {
            n,
            directed: file.directed,
            dyads,
            attrs,
            trace: file
                .trace
                .map(|w| w.into_iter().map(|w| w.entries).collect()),
        })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(&path, self.to_toml()).map_err(|e| Error::io(&path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Self::from_toml(&text)
    }
}

#[derive(Serialize, Deserialize)]
struct PatternFile {
    n: usize,
    directed: bool,
    dyads: Vec<String>,
    attributes: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    trace: Option<Vec<WaveFile>>,
}

#[derive(Serialize, Deserialize)]
struct WaveFile {
    entries: Vec<TraceEntry>,
}

//! Binary networks with categorical nodal attributes.
//!
//! A [`Network`] is the pair `T = {X, Y}`: a binary tie matrix `Y` without
//! self-loops and an `n x K` matrix `X` of categorical attributes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A categorical nodal variable with levels `0..levels`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    pub levels: u32,
}

impl Variable {
    pub fn new(name: impl Into<String>, levels: u32) -> Self {
        Variable {
            name: name.into(),
            levels,
        }
    }
}

/// A dyad `(i, j)`; for undirected networks always stored with `i < j`.
pub type Dyad = (usize, usize);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Network {
    n: usize,
    directed: bool,
    // row-major n*n; symmetric when undirected
    adj: Vec<bool>,
    edges: usize,
    variables: Vec<Variable>,
    // attrs[var][node]
    attrs: Vec<Vec<u32>>,
}

impl Network {
    /// Empty graph; every attribute starts at level 0.
    pub fn empty(n: usize, directed: bool, variables: Vec<Variable>) -> Result<Self> {
        if n == 0 {
            return Err(Error::config("node count must be positive"));
        }
        for v in &variables {
            if v.levels == 0 {
                return Err(Error::config(format!(
                    "variable '{}' has no levels",
                    v.name
                )));
            }
        }
        let attrs = variables.iter().map(|_| vec![0; n]).collect();
        Ok(Network {
            n,
            directed,
            adj: vec![false; n * n],
            edges: 0,
            variables,
            attrs,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn is_directed(&self) -> bool {
        self.directed
    }

    pub fn edge_count(&self) -> usize {
        self.edges
    }

    pub fn variables(&self) -> &[Variable] {
        &self.variables
    }

    pub fn variable_index(&self, name: &str) -> Option<usize> {
        self.variables.iter().position(|v| v.name == name)
    }

    pub fn levels(&self, var: usize) -> u32 {
        self.variables[var].levels
    }

    /// Number of dyads in the sample space.
    pub fn dyad_count(&self) -> usize {
        if self.directed {
            self.n * (self.n - 1)
        } else {
            self.n * (self.n - 1) / 2
        }
    }

    /// Canonical form of a dyad, or `None` for self-loops and out-of-range nodes.
    pub fn canonical(&self, i: usize, j: usize) -> Option<Dyad> {
        if i == j || i >= self.n || j >= self.n {
            None
        } else if self.directed || i < j {
            Some((i, j))
        } else {
            Some((j, i))
        }
    }

    /// All dyads in canonical order.
    pub fn dyads(&self) -> impl Iterator<Item = Dyad> + '_ {
        let n = self.n;
        let directed = self.directed;
        (0..n).flat_map(move |i| {
            let start = if directed { 0 } else { i + 1 };
            (start..n).filter(move |&j| j != i).map(move |j| (i, j))
        })
    }

    #[inline]
    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adj[i * self.n + j]
    }

    /// Edges incident to `i` with `j`, counting both directions: 0, 1 or 2.
    #[inline]
    pub fn multiplicity(&self, i: usize, j: usize) -> u32 {
        if self.directed {
            self.adj[i * self.n + j] as u32 + self.adj[j * self.n + i] as u32
        } else {
            self.adj[i * self.n + j] as u32
        }
    }

    pub fn set_edge(&mut self, i: usize, j: usize, present: bool) -> Result<()> {
        let (a, b) = self.canonical(i, j).ok_or_else(|| {
            Error::InvalidMove(format!("no dyad ({i}, {j}) in a {}-node network", self.n))
        })?;
        let cur = self.adj[a * self.n + b];
        if cur != present {
            self.adj[a * self.n + b] = present;
            if !self.directed {
                self.adj[b * self.n + a] = present;
            }
            if present {
                self.edges += 1;
            } else {
                self.edges -= 1;
            }
        }
        Ok(())
    }

    /// Flip a dyad; returns the new state.
    pub fn toggle(&mut self, i: usize, j: usize) -> Result<bool> {
        let now = !self.has_edge(i, j);
        self.set_edge(i, j, now)?;
        Ok(now)
    }

    /// Present edges in canonical order.
    pub fn edges(&self) -> Vec<Dyad> {
        self.dyads().filter(|&(i, j)| self.has_edge(i, j)).collect()
    }

    /// Distinct alters of `i` (ties in either direction).
    pub fn alters(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.n).filter(move |&j| j != i && self.multiplicity(i, j) > 0)
    }

    pub fn degree(&self, i: usize) -> u32 {
        (0..self.n)
            .filter(|&j| j != i)
            .map(|j| self.multiplicity(i, j))
            .sum()
    }

    #[inline]
    pub fn attr(&self, node: usize, var: usize) -> u32 {
        self.attrs[var][node]
    }

    pub fn attr_column(&self, var: usize) -> &[u32] {
        &self.attrs[var]
    }

    pub fn set_attr(&mut self, node: usize, var: usize, level: u32) -> Result<()> {
        if var >= self.variables.len() {
            return Err(Error::InvalidMove(format!("no variable {var}")));
        }
        if node >= self.n {
            return Err(Error::InvalidMove(format!("no node {node}")));
        }
        if level >= self.variables[var].levels {
            return Err(Error::InvalidMove(format!(
                "level {level} out of range for '{}' ({} levels)",
                self.variables[var].name, self.variables[var].levels
            )));
        }
        self.attrs[var][node] = level;
        Ok(())
    }

    pub fn set_attr_column(&mut self, var: usize, values: &[u32]) -> Result<()> {
        if values.len() != self.n {
            return Err(Error::config(format!(
                "attribute column has {} values for {} nodes",
                values.len(),
                self.n
            )));
        }
        for (node, &v) in values.iter().enumerate() {
            self.set_attr(node, var, v)?;
        }
        Ok(())
    }

    /// Node count per level of `var`.
    pub fn level_counts(&self, var: usize) -> Vec<usize> {
        let mut counts = vec![0; self.variables[var].levels as usize];
        for &x in &self.attrs[var] {
            counts[x as usize] += 1;
        }
        counts
    }

    /// Append a variable with every node at level 0; returns its index.
    pub fn add_variable(&mut self, var: Variable) -> Result<usize> {
        if var.levels == 0 {
            return Err(Error::config(format!(
                "variable '{}' has no levels",
                var.name
            )));
        }
        if self.variable_index(&var.name).is_some() {
            return Err(Error::config(format!("duplicate variable '{}'", var.name)));
        }
        self.variables.push(var);
        self.attrs.push(vec![0; self.n]);
        Ok(self.variables.len() - 1)
    }

    /// Copy of the network keeping only the listed variables, in that order.
    pub fn select_variables(&self, vars: &[usize]) -> Network {
        Network {
            n: self.n,
            directed: self.directed,
            adj: self.adj.clone(),
            edges: self.edges,
            variables: vars.iter().map(|&v| self.variables[v].clone()).collect(),
            attrs: vars.iter().map(|&v| self.attrs[v].clone()).collect(),
        }
    }

    pub fn density(&self) -> f64 {
        self.edges as f64 / self.dyad_count().max(1) as f64
    }

    pub fn mean_degree(&self) -> f64 {
        let ends = if self.directed {
            self.edges
        } else {
            2 * self.edges
        };
        ends as f64 / self.n as f64
    }

    /// Ties whose endpoints differ on `var`.
    pub fn cross_ties(&self, var: usize) -> usize {
        self.edges()
            .into_iter()
            .filter(|&(i, j)| self.attrs[var][i] != self.attrs[var][j])
            .count()
    }
}

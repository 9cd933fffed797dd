//! Model specification: an ordered list of statistic terms defining `g(t)`
//! together with natural parameters `eta`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::homophily::{regularized_homophily, Centering};
use crate::network::{Network, Variable};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Term {
    Edges,
    GroupCount {
        var: usize,
        level: u32,
    },
    Homophily {
        var: usize,
        #[serde(default)]
        centering: Centering,
    },
}

impl Term {
    /// Every term is scalar.
    pub fn dim(&self) -> usize {
        1
    }

    pub fn label(&self, vars: &[Variable]) -> String {
        let name = |v: usize| {
            vars.get(v)
                .map(|x| x.name.clone())
                .unwrap_or_else(|| format!("var{v}"))
        };
        match self {
            Term::Edges => "edges".to_string(),
            Term::GroupCount { var, level } => format!("group-count({},{})", name(*var), level),
            Term::Homophily { var, .. } => format!("homophily({})", name(*var)),
        }
    }

    pub fn variable(&self) -> Option<usize> {
        match self {
            Term::Edges => None,
            Term::GroupCount { var, .. } | Term::Homophily { var, .. } => Some(*var),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    terms: Vec<Term>,
    eta: Vec<f64>,
}

impl ModelSpec {
    pub fn new(terms: Vec<Term>, eta: Vec<f64>) -> Result<Self> {
        let q: usize = terms.iter().map(Term::dim).sum();
        if eta.len() != q {
            return Err(Error::config(format!(
                "model has {q} statistics but {} parameters",
                eta.len()
            )));
        }
        if terms.is_empty() {
            return Err(Error::config("model has no terms"));
        }
        Ok(ModelSpec { terms, eta })
    }

    /// `[edges, homophily(var), group-count(var, 0..m-1)]` with `m - 1` counts.
    pub fn simple_homophily(var: usize, levels: u32, eta: Vec<f64>) -> Result<Self> {
        let mut terms = vec![
            Term::Edges,
            Term::Homophily {
                var,
                centering: Centering::Exact,
            },
        ];
        terms.extend((0..levels.saturating_sub(1)).map(|level| Term::GroupCount { var, level }));
        ModelSpec::new(terms, eta)
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn eta(&self) -> &[f64] {
        &self.eta
    }

    pub fn q(&self) -> usize {
        self.eta.len()
    }

    pub fn with_eta(&self, eta: Vec<f64>) -> Result<Self> {
        ModelSpec::new(self.terms.clone(), eta)
    }

    pub fn labels(&self, vars: &[Variable]) -> Vec<String> {
        self.terms.iter().map(|t| t.label(vars)).collect()
    }

    /// Variables referenced by any term.
    pub fn variables(&self) -> Vec<usize> {
        let mut vars: Vec<usize> = self.terms.iter().filter_map(Term::variable).collect();
        vars.sort_unstable();
        vars.dedup();
        vars
    }

    /// Check variable references against a network and the group-count
    /// identifiability rule (levels `0..m-1` exactly, last level dropped).
    pub fn validate(&self, net: &Network) -> Result<()> {
        let vars = net.variables();
        for t in &self.terms {
            if let Some(v) = t.variable() {
                if v >= vars.len() {
                    return Err(Error::config(format!(
                        "term references missing variable {v}"
                    )));
                }
            }
            if let Term::GroupCount { var, level } = t {
                if *level >= vars[*var].levels {
                    return Err(Error::config(format!(
                        "group-count level {level} out of range for '{}'",
                        vars[*var].name
                    )));
                }
            }
        }
        for v in self.variables() {
            let mut levels: Vec<u32> = self
                .terms
                .iter()
                .filter_map(|t| match t {
                    Term::GroupCount { var, level } if *var == v => Some(*level),
                    _ => None,
                })
                .collect();
            if levels.is_empty() {
                continue;
            }
            levels.sort_unstable();
            let m = vars[v].levels;
            let expected: Vec<u32> = (0..m - 1).collect();
            if levels != expected {
                return Err(Error::config(format!(
                    "group-count block on '{}' must cover levels 0..{} exactly (last level dropped)",
                    vars[v].name,
                    m.saturating_sub(2)
                )));
            }
        }
        Ok(())
    }

    /// Parse term expressions such as `edges`, `homophily(class)`,
    /// `group-count(class, 0)` or `group-counts(class)` (all `m - 1` counts).
    pub fn parse_terms(exprs: &[String], vars: &[Variable]) -> Result<Vec<Term>> {
        let lookup = |name: &str| {
            vars.iter()
                .position(|v| v.name == name)
                .ok_or_else(|| Error::config(format!("unknown variable '{name}' in model term")))
        };
        let mut out = Vec::new();
        for e in exprs {
            let e = e.trim();
            let (head, args) = match e.find('(') {
                Some(p) if e.ends_with(')') => {
                    let args: Vec<&str> = e[p + 1..e.len() - 1].split(',').map(str::trim).collect();
                    (&e[..p], args)
                }
                _ => (e, vec![]),
            };
            match (head, args.as_slice()) {
                ("edges", []) => out.push(Term::Edges),
                ("homophily", [v]) => out.push(Term::Homophily {
                    var: lookup(v)?,
                    centering: Centering::Exact,
                }),
                ("group-count", [v, l]) => {
                    let level = l
                        .parse()
                        .map_err(|_| Error::config(format!("bad level '{l}' in '{e}'")))?;
                    out.push(Term::GroupCount {
                        var: lookup(v)?,
                        level,
                    });
                }
                ("group-counts", [v]) => {
                    let var = lookup(v)?;
                    out.extend(
                        (0..vars[var].levels - 1).map(|level| Term::GroupCount { var, level }),
                    );
                }
                _ => return Err(Error::config(format!("unrecognized model term '{e}'"))),
            }
        }
        Ok(out)
    }
}

/// `g(t)` by full evaluation.
pub fn compute_statistics(net: &Network, spec: &ModelSpec) -> Result<Vec<f64>> {
    spec.validate(net)?;
    Ok(spec
        .terms()
        .iter()
        .map(|t| match t {
            Term::Edges => net.edge_count() as f64,
            Term::GroupCount { var, level } => net
                .attr_column(*var)
                .iter()
                .filter(|&&x| x == *level)
                .count() as f64,
            Term::Homophily { var, centering } => regularized_homophily(net, *var, centering),
        })
        .collect())
}

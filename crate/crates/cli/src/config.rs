//! Run configuration files.

use std::path::{Path, PathBuf};

use ernm::io::{read_network_files, NetworkSchema};
use ernm::{
    fixtures, ChainConfig, Error, FitConfig, ModelSpec, Network, Result, SamplingMechanism,
    Variable,
};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    McarStudy,
    LatentClass,
    ContactTraceStudy,
    FitSingle,
    Simulate,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::McarStudy => "mcar-study",
            ExperimentKind::LatentClass => "latent-class",
            ExperimentKind::ContactTraceStudy => "contact-trace-study",
            ExperimentKind::FitSingle => "fit-single",
            ExperimentKind::Simulate => "simulate",
        }
    }
}

/// Where the network comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case")]
pub enum NetworkSource {
    /// A bundled data set; `variables` keeps only the named variables.
    Fixture {
        name: String,
        #[serde(default)]
        variables: Option<Vec<String>>,
    },
    Files {
        edges: PathBuf,
        #[serde(default)]
        attributes: Option<PathBuf>,
        n: usize,
        directed: bool,
        #[serde(default)]
        variables: Vec<Variable>,
    },
    /// One draw from a model. `counts` fixes the level counts of the first
    /// variable and enables count-preserving attribute moves.
    Generate {
        n: usize,
        directed: bool,
        variables: Vec<Variable>,
        terms: Vec<String>,
        eta: Vec<f64>,
        #[serde(default)]
        counts: Option<Vec<usize>>,
        #[serde(default)]
        burn_in_sweeps: Option<usize>,
    },
}

impl NetworkSource {
    pub fn monks() -> Self {
        NetworkSource::Fixture {
            name: "monks".into(),
            variables: None,
        }
    }

    /// Load or generate the network; node ids are returned alongside.
    pub fn load(&self, seed: u64) -> Result<(Network, Vec<String>)> {
        match self {
            NetworkSource::Fixture { name, variables } => {
                if name != "monks" {
                    return Err(Error::Config(format!("unknown fixture '{name}'")));
                }
                let m = fixtures::monks();
                let net = match variables {
                    Some(names) => {
                        let idx = names
                            .iter()
                            .map(|v| {
                                m.network.variable_index(v).ok_or_else(|| {
                                    Error::Config(format!("fixture has no variable '{v}'"))
                                })
                            })
                            .collect::<Result<Vec<_>>>()?;
                        m.network.select_variables(&idx)
                    }
                    None => m.network,
                };
                Ok((net, m.ids))
            }
            NetworkSource::Files {
                edges,
                attributes,
                n,
                directed,
                variables,
            } => {
                let schema = NetworkSchema {
                    n: *n,
                    directed: *directed,
                    variables: variables.clone(),
                };
                let l = read_network_files(edges, attributes.as_ref(), &schema)?;
                Ok((l.network, l.ids))
            }
            NetworkSource::Generate {
                n,
                directed,
                variables,
                terms,
                eta,
                counts,
                burn_in_sweeps,
            } => {
                let net = generate_network(
                    *n,
                    *directed,
                    variables,
                    terms,
                    eta,
                    counts.as_deref(),
                    *burn_in_sweeps,
                    seed,
                )?;
                Ok((net, (1..=*n).map(|i| i.to_string()).collect()))
            }
        }
    }

    fn resolve(&mut self, base: &Path) {
        if let NetworkSource::Files {
            edges, attributes, ..
        } = self
        {
            *edges = base.join(&*edges);
            if let Some(a) = attributes {
                *a = base.join(&*a);
            }
        }
    }

    fn check_files(&self) -> Result<()> {
        if let NetworkSource::Files {
            edges, attributes, ..
        } = self
        {
            for p in std::iter::once(edges).chain(attributes.iter()) {
                if !p.exists() {
                    return Err(Error::Config(format!(
                        "network file {} does not exist",
                        p.display()
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Draw one network from the model after `burn_in_sweeps` sweeps (default
/// 50) from the empty graph.
#[allow(clippy::too_many_arguments)]
pub fn generate_network(
    n: usize,
    directed: bool,
    variables: &[Variable],
    terms: &[String],
    eta: &[f64],
    counts: Option<&[usize]>,
    burn_in_sweeps: Option<usize>,
    seed: u64,
) -> Result<Network> {
    let mut template = Network::empty(n, directed, variables.to_vec())?;
    if let Some(counts) = counts {
        if variables.is_empty()
            || counts.len() != variables[0].levels as usize
            || counts.iter().sum::<usize>() != n
        {
            return Err(Error::config(
                "counts must give one entry per level of the first variable and sum to n",
            ));
        }
        let mut node = 0;
        for (level, &c) in counts.iter().enumerate() {
            for _ in 0..c {
                template.set_attr(node, 0, level as u32)?;
                node += 1;
            }
        }
    }
    let spec = ModelSpec::new(ModelSpec::parse_terms(terms, variables)?, eta.to_vec())?;
    let elements = template.dyad_count() + n * variables.len();
    let cfg = ChainConfig {
        samples: 1,
        burn_in: Some(burn_in_sweeps.unwrap_or(50) * elements),
        thinning: Some(1),
        seed,
        keep_networks: true,
        fixed_attribute_counts: counts.is_some(),
        ..Default::default()
    };
    let batch = ernm::sample_full(&spec, &template, &cfg)?;
    Ok(batch.networks.expect("kept").remove(0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Term expressions such as `edges`, `homophily(x)`, `group-counts(x)`.
    pub terms: Vec<String>,
    #[serde(default)]
    pub eta: Option<Vec<f64>>,
}

impl ModelConfig {
    pub fn simple_homophily(var: &str) -> Self {
        ModelConfig {
            terms: vec![
                "edges".into(),
                format!("homophily({var})"),
                format!("group-counts({var})"),
            ],
            eta: None,
        }
    }

    pub fn build(&self, vars: &[Variable]) -> Result<ModelSpec> {
        let terms = ModelSpec::parse_terms(&self.terms, vars)?;
        let q = terms.iter().map(|t| t.dim()).sum();
        ModelSpec::new(terms, self.eta.clone().unwrap_or_else(|| vec![0.0; q]))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McarSettings {
    /// Missingness rates, applied to dyads and attribute values alike.
    pub rates: Vec<f64>,
}

impl Default for McarSettings {
    fn default() -> Self {
        McarSettings {
            rates: vec![0.0, 0.05, 0.1, 0.2, 0.3, 0.4, 0.5],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LatentSettings {
    /// Number of latent classes.
    pub levels: u32,
    /// Starting homophily; zero is a stationary point of the latent-class
    /// likelihood.
    pub homophily_init: f64,
    pub posterior: ChainConfig,
    /// Occupancy threshold for counting classes.
    pub threshold: f64,
    /// Variable holding known classes, reported next to the posterior.
    pub reference_variable: Option<String>,
}

impl Default for LatentSettings {
    fn default() -> Self {
        LatentSettings {
            levels: 3,
            homophily_init: 1.0,
            posterior: ChainConfig {
                samples: 4000,
                burn_in: Some(2000),
                seed: 3,
                ..Default::default()
            },
            threshold: 0.5,
            reference_variable: Some("faction".into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContactTraceSettings {
    pub n: usize,
    pub infected: usize,
    /// `(edges, homophily, infected count)` for the population model.
    pub eta: Vec<f64>,
    pub seeds_infected: usize,
    /// One condition per entry.
    pub seeds_uninfected: Vec<usize>,
    pub paper_scale: bool,
    pub burn_in_sweeps: usize,
}

impl Default for ContactTraceSettings {
    fn default() -> Self {
        // the edge parameter is shifted by ln 5 from the n = 1000 setting to
        // keep the mean degree at n = 200
        ContactTraceSettings {
            n: 200,
            infected: 30,
            eta: vec![-4.19, 0.7, -1.95],
            seeds_infected: 8,
            seeds_uninfected: vec![0, 9, 45],
            paper_scale: false,
            burn_in_sweeps: 50,
        }
    }
}

impl ContactTraceSettings {
    pub fn paper() -> Self {
        ContactTraceSettings {
            n: 1000,
            infected: 150,
            eta: vec![-5.8, 0.7, -1.95],
            seeds_infected: 40,
            seeds_uninfected: vec![0, 45, 90, 135, 180, 225],
            paper_scale: true,
            burn_in_sweeps: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSettings {
    pub count: usize,
    pub chain: ChainConfig,
}

impl Default for SimulateSettings {
    fn default() -> Self {
        SimulateSettings {
            count: 1,
            chain: ChainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub kind: ExperimentKind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub replicates: Option<usize>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub network: Option<NetworkSource>,
    #[serde(default)]
    pub model: Option<ModelConfig>,
    #[serde(default)]
    pub mechanism: Option<SamplingMechanism>,
    /// Observation pattern file for `fit-single`.
    #[serde(default)]
    pub observation: Option<PathBuf>,
    #[serde(default)]
    pub fit: Option<FitConfig>,
    #[serde(default)]
    pub mcar: McarSettings,
    #[serde(default)]
    pub latent: LatentSettings,
    #[serde(default)]
    pub contact_trace: ContactTraceSettings,
    #[serde(default)]
    pub simulate: SimulateSettings,
}

impl RunConfig {
    pub fn new(kind: ExperimentKind) -> Self {
        RunConfig {
            kind,
            seed: 0,
            replicates: None,
            out: None,
            network: None,
            model: None,
            mechanism: None,
            observation: None,
            fit: None,
            mcar: McarSettings::default(),
            latent: LatentSettings::default(),
            contact_trace: ContactTraceSettings::default(),
            simulate: SimulateSettings::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("run config: {e}")))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("run config: {e}")))
    }

    /// Read a config; relative paths are taken relative to its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let Some(n) = &mut cfg.network {
            n.resolve(base);
        }
        if let Some(o) = &mut cfg.observation {
            *o = base.join(&*o);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates == Some(0) {
            return Err(Error::config("replicates must be at least 1"));
        }
        if let Some(n) = &self.network {
            n.check_files()?;
        }
        if let Some(o) = &self.observation {
            if !o.exists() {
                return Err(Error::Config(format!(
                    "observation file {} does not exist",
                    o.display()
                )));
            }
        }
        if let Some(f) = &self.fit {
            f.validate()?;
        }
        if self.mcar.rates.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return Err(Error::config("missingness rates must lie in [0, 1]"));
        }
        if self.latent.levels < 2 {
            return Err(Error::config("latent classes need at least 2 levels"));
        }
        let ct = &self.contact_trace;
        if ct.eta.len() != 3 || ct.infected > ct.n || ct.seeds_uninfected.is_empty() {
            return Err(Error::config(
                "contact_trace needs a 3-component eta, infected <= n and at least one seed mix",
            ));
        }
        Ok(())
    }
}

//! Study runners and their tabular output.

use std::collections::BTreeMap;
use std::path::Path;

use ernm::mechanisms::{naive_estimators, simulate_contact_trace, simulate_mcar};
use ernm::mle::{class_membership_posterior, derive_seed, initial_eta, PosteriorTable};
use ernm::{
    compute_statistics, fit, importance_stat_estimate, ChainConfig, Error, FitConfig, FitResult,
    ModelSpec, Network, ObservationPattern, Result, Sampler, SamplingMechanism, Term, Variable,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{generate_network, ExperimentKind, ModelConfig, NetworkSource, RunConfig};

/// One replicate of one condition.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyRow {
    pub condition: String,
    pub replicate: usize,
    pub seed: u64,
    /// Values aligned with [`StudyResult::columns`]; NaN when missing.
    pub values: Vec<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub condition: String,
    pub column: String,
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyResult {
    pub kind: ExperimentKind,
    pub conditions: Vec<String>,
    pub columns: Vec<String>,
    pub rows: Vec<StudyRow>,
    pub summary: Vec<SummaryRow>,
    /// Scalars reported alongside the table.
    pub info: BTreeMap<String, f64>,
}

fn fmt(x: f64) -> String {
    if x.is_nan() {
        String::new()
    } else {
        format!("{x}")
    }
}

fn median(xs: &mut [f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let m = xs.len() / 2;
    if xs.len() % 2 == 1 {
        xs[m]
    } else {
        0.5 * (xs[m - 1] + xs[m])
    }
}

impl StudyResult {
    fn new(
        kind: ExperimentKind,
        conditions: Vec<String>,
        columns: Vec<String>,
        rows: Vec<StudyRow>,
    ) -> Self {
        let mut summary = Vec::new();
        for c in &conditions {
            for (k, col) in columns.iter().enumerate() {
                let mut xs: Vec<f64> = rows
                    .iter()
                    .filter(|r| &r.condition == c)
                    .map(|r| r.values[k])
                    .filter(|x| x.is_finite())
                    .collect();
                let count = xs.len();
                let mean = xs.iter().sum::<f64>() / count as f64;
                let sd = if count > 1 {
                    (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (count - 1) as f64).sqrt()
                } else {
                    f64::NAN
                };
                summary.push(SummaryRow {
                    condition: c.clone(),
                    column: col.clone(),
                    count,
                    mean,
                    median: median(&mut xs),
                    sd,
                });
            }
        }
        StudyResult {
            kind,
            conditions,
            columns,
            rows,
            summary,
            info: BTreeMap::new(),
        }
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Summary entry for a condition and column.
    pub fn stat(&self, condition: &str, column: &str) -> Option<&SummaryRow> {
        self.summary
            .iter()
            .find(|s| s.condition == condition && s.column == column)
    }

    pub fn failure_fraction(&self) -> f64 {
        if self.rows.is_empty() {
            return 0.0;
        }
        self.rows.iter().filter(|r| r.error.is_some()).count() as f64 / self.rows.len() as f64
    }

    pub fn rows_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["condition".to_string(), "replicate".into(), "seed".into()];
        header.extend(self.columns.iter().cloned());
        header.push("error".into());
        w.write_record(&header).expect("in-memory write");
        for r in &self.rows {
            let mut rec = vec![
                r.condition.clone(),
                r.replicate.to_string(),
                r.seed.to_string(),
            ];
            rec.extend(r.values.iter().map(|&x| fmt(x)));
            rec.push(r.error.clone().unwrap_or_default());
            w.write_record(&rec).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
    }

    pub fn summary_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["condition", "column", "count", "mean", "median", "sd"])
            .expect("in-memory write");
        for s in &self.summary {
            w.write_record([
                s.condition.clone(),
                s.column.clone(),
                s.count.to_string(),
                fmt(s.mean),
                fmt(s.median),
                fmt(s.sd),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
    }

    /// Write `<kind>.csv`, `<kind>_summary.csv` and `<kind>_manifest.toml`.
    pub fn write(&self, dir: &Path, config: &RunConfig) -> Result<()> {
        let name = self.kind.name();
        write_file(&dir.join(format!("{name}.csv")), &self.rows_csv())?;
        write_file(
            &dir.join(format!("{name}_summary.csv")),
            &self.summary_csv(),
        )?;
        let mut info = self.info.clone();
        info.insert("failure_fraction".into(), self.failure_fraction());
        write_manifest(dir, config, info)
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    kind: &'a str,
    seed: u64,
    version: &'a str,
    info: BTreeMap<String, f64>,
    config: &'a RunConfig,
}

pub fn write_manifest(dir: &Path, config: &RunConfig, info: BTreeMap<String, f64>) -> Result<()> {
    let m = Manifest {
        kind: config.kind.name(),
        seed: config.seed,
        version: env!("CARGO_PKG_VERSION"),
        info: info.into_iter().filter(|(_, v)| v.is_finite()).collect(),
        config,
    };
    let text = toml::to_string(&m).map_err(|e| Error::Config(format!("manifest: {e}")))?;
    write_file(
        &dir.join(format!("{}_manifest.toml", config.kind.name())),
        &text,
    )
}

pub fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::Io {
            path: parent.display().to_string(),
            source: e,
        })?;
    }
    std::fs::write(path, text).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })
}

/// Fit settings for small networks (tens of nodes).
pub fn small_network_fit() -> FitConfig {
    let mut f = FitConfig {
        max_iter: 30,
        average_last: 5,
        ..Default::default()
    };
    for c in [&mut f.full_chain, &mut f.cond_chain] {
        c.samples = 2000;
    }
    f
}

/// Fit settings for the latent-class model, whose full chain mixes slowly
/// in the class sizes at high homophily.
pub fn latent_class_fit(elements: usize) -> FitConfig {
    let mut f = FitConfig {
        max_iter: 30,
        ..Default::default()
    };
    f.full_chain.samples = 2000;
    f.full_chain.thinning = Some(10 * elements);
    f.full_chain.burn_in = Some(100 * elements);
    f.cond_chain.samples = 2000;
    f
}

/// Fit settings for networks of a few hundred nodes: short thinning on
/// warm-started chains, so batches are large enough for the importance
/// weights to allow full trust-region steps.
pub fn large_network_fit(elements: usize) -> FitConfig {
    let mut f = FitConfig {
        max_iter: 25,
        average_last: 4,
        ..Default::default()
    };
    for c in [&mut f.full_chain, &mut f.cond_chain] {
        c.samples = 1600;
        c.thinning = Some((elements / 16).max(1));
        c.burn_in = Some(elements);
    }
    f
}

fn elements(net: &Network) -> usize {
    net.dyad_count() + net.n() * net.variables().len()
}

fn seeded(fit: &FitConfig, seed: u64) -> FitConfig {
    fit.clone().with_seed(seed)
}

fn fit_columns(prefix: &str, labels: &[String]) -> Vec<String> {
    let mut cols: Vec<String> = labels.iter().map(|l| format!("{prefix}eta_{l}")).collect();
    cols.extend(labels.iter().map(|l| format!("{prefix}se_{l}")));
    cols.push(format!("{prefix}converged"));
    cols.push(format!("{prefix}iterations"));
    cols
}

fn fit_values(r: &FitResult) -> Vec<f64> {
    let q = r.eta_hat.len();
    let mut v = r.eta_hat.clone();
    v.extend(r.se_eta.clone().unwrap_or_else(|| vec![f64::NAN; q]));
    v.push(if r.converged { 1.0 } else { 0.0 });
    v.push(r.iterations.len() as f64);
    v
}

fn replicate_grid(conditions: usize, replicates: usize) -> Vec<(usize, usize)> {
    (0..conditions)
        .flat_map(|c| (0..replicates).map(move |r| (c, r)))
        .collect()
}

fn monks_cloisterville() -> NetworkSource {
    NetworkSource::Fixture {
        name: "monks".into(),
        variables: Some(vec!["cloisterville".into()]),
    }
}

/// Tag for seeds that belong to no condition. Condition seeds are keyed by
/// the condition's value, so a rerun of a subset reproduces its rows.
const SHARED: u64 = u64::MAX;

/// Per-rate MCAR masking and refitting of a fully observed network.
pub fn run_mcar_study(config: &RunConfig) -> Result<StudyResult> {
    let source = config.network.clone().unwrap_or_else(monks_cloisterville);
    let (net, _) = source.load(derive_seed(config.seed, &[SHARED, 0]))?;
    let model = match &config.model {
        Some(m) => m.clone(),
        None => ModelConfig::simple_homophily(
            &net.variables()
                .first()
                .map(|v| v.name.clone())
                .unwrap_or_default(),
        ),
    };
    let spec = model.build(net.variables())?;
    let fit_cfg = config.fit.clone().unwrap_or_else(small_network_fit);
    let replicates = config.replicates.unwrap_or(20);
    let labels = spec.labels(net.variables());
    let rates = &config.mcar.rates;

    let full = ObservationPattern::fully_observed(&net);
    let reference = fit(
        &spec,
        &net,
        &full,
        &SamplingMechanism::Ignorable,
        &seeded(&fit_cfg, derive_seed(config.seed, &[SHARED, 1])),
    )?;

    let mut columns = fit_columns("", &labels);
    columns.push("unobserved_dyads".into());
    columns.push("unobserved_attributes".into());
    let conditions: Vec<String> = rates.iter().map(|r| format!("rate={r}")).collect();
    let rows: Vec<StudyRow> = replicate_grid(rates.len(), replicates)
        .into_par_iter()
        .map(|(c, r)| {
            let rate = rates[c];
            let seed = derive_seed(config.seed, &[rate.to_bits(), r as u64]);
            let outcome =
                simulate_mcar(&net, rate, rate, derive_seed(seed, &[0])).and_then(|(w, t_obs)| {
                    let mech = SamplingMechanism::Mcar {
                        dyad_rate: rate,
                        attr_rate: rate,
                    };
                    let res = fit(&spec, &t_obs, &w, &mech, &seeded(&fit_cfg, seed))?;
                    let mut v = fit_values(&res);
                    v.push(w.unobserved_dyads().len() as f64);
                    v.push(w.unobserved_attrs().len() as f64);
                    Ok(v)
                });
            row(&conditions[c], r, seed, columns.len(), outcome)
        })
        .collect();
    let mut result = StudyResult::new(ExperimentKind::McarStudy, conditions, columns, rows);
    for (l, e) in labels.iter().zip(&reference.eta_hat) {
        result.info.insert(format!("reference_eta_{l}"), *e);
    }
    if let Some(se) = &reference.se_eta {
        for (l, s) in labels.iter().zip(se) {
            result.info.insert(format!("reference_se_{l}"), *s);
        }
    }
    Ok(result)
}

fn row(
    condition: &str,
    replicate: usize,
    seed: u64,
    width: usize,
    outcome: Result<Vec<f64>>,
) -> StudyRow {
    match outcome {
        Ok(values) => StudyRow {
            condition: condition.to_string(),
            replicate,
            seed,
            values,
            error: None,
        },
        Err(e) => StudyRow {
            condition: condition.to_string(),
            replicate,
            seed,
            values: vec![f64::NAN; width],
            error: Some(e.to_string()),
        },
    }
}

/// Population for the contact-tracing study together with its summary.
#[derive(Debug, Clone)]
pub struct Population {
    pub network: Network,
    pub mean_degree: f64,
    pub cross_ties: usize,
    pub infected: usize,
}

/// Draw a population with the infected count held fixed. Level 0 of the
/// `infected` variable marks infection.
pub fn generate_population(
    settings: &crate::config::ContactTraceSettings,
    seed: u64,
) -> Result<Population> {
    let var = Variable::new("infected", 2);
    let terms: Vec<String> = ModelConfig::simple_homophily("infected").terms;
    let net = generate_network(
        settings.n,
        false,
        &[var],
        &terms,
        &settings.eta,
        Some(&[settings.infected, settings.n - settings.infected]),
        Some(settings.burn_in_sweeps),
        seed,
    )?;
    Ok(Population {
        mean_degree: net.mean_degree(),
        cross_ties: net.cross_ties(0),
        infected: net.level_counts(0)[0],
        network: net,
    })
}

/// Index of the group-count term for `level` of `var`.
fn group_count_index(spec: &ModelSpec, var: usize, level: u32) -> Option<usize> {
    spec.terms().iter().position(
        |t| matches!(t, Term::GroupCount { var: v, level: l } if *v == var && *l == level),
    )
}

/// Positive contact tracing at several seed mixes, estimating the infected
/// count under ignorable and non-ignorable models.
pub fn run_contact_trace_study(config: &RunConfig) -> Result<StudyResult> {
    let settings = if config.contact_trace.paper_scale {
        crate::config::ContactTraceSettings::paper()
    } else {
        config.contact_trace.clone()
    };
    let replicates = config
        .replicates
        .unwrap_or(if settings.paper_scale { 1 } else { 20 });
    let pop = generate_population(&settings, derive_seed(config.seed, &[SHARED, 0]))?;
    let net = &pop.network;
    let spec = ModelConfig::simple_homophily("infected").build(net.variables())?;
    let labels = spec.labels(net.variables());
    let gc = group_count_index(&spec, 0, 0).expect("simple homophily has a level-0 count");
    let fit_cfg = config
        .fit
        .clone()
        .unwrap_or_else(|| large_network_fit(elements(net)));
    let s_i = settings.seeds_infected;

    let mut columns: Vec<String> = [
        "sample_size",
        "sample_infected",
        "sample_uninfected",
        "traced",
        "naive",
        "seed_adjusted",
        "mar",
        "mnar",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    columns.extend(fit_columns("mar_", &labels));
    columns.extend(fit_columns("mnar_", &labels));
    let conditions: Vec<String> = settings
        .seeds_uninfected
        .iter()
        .map(|s| format!("s_u={s}"))
        .collect();
    let rows: Vec<StudyRow> = replicate_grid(conditions.len(), replicates)
        .into_par_iter()
        .map(|(c, r)| {
            let s_u = settings.seeds_uninfected[c];
            let seed = derive_seed(config.seed, &[s_u as u64, r as u64]);
            let outcome = (|| -> Result<Vec<f64>> {
                let (w, t_obs) =
                    simulate_contact_trace(net, s_i, s_u, 0, 0, derive_seed(seed, &[0]))?;
                let naive = naive_estimators(&w, &t_obs, 0, 0, s_i, s_u);
                let mar = fit(
                    &spec,
                    &t_obs,
                    &w,
                    &SamplingMechanism::Ignorable,
                    &seeded(&fit_cfg, derive_seed(seed, &[1])),
                )?;
                let mech = SamplingMechanism::PositiveContactTrace {
                    seeds_infected: s_i,
                    seeds_uninfected: s_u,
                    var: 0,
                    infected_level: 0,
                };
                let mnar_cfg = seeded(&fit_cfg, derive_seed(seed, &[2]));
                let mnar = fit(&spec, &t_obs, &w, &mech, &mnar_cfg)?;
                // infected count under the fitted non-ignorable model, by
                // reweighting a plain conditional chain
                let at_hat = spec.with_eta(mnar.eta_hat.clone())?;
                let mut plain_cfg = mnar_cfg.cond_chain.clone();
                plain_cfg.seed = derive_seed(seed, &[3]);
                plain_cfg.burn_in = Some(plain_cfg.burn_in.unwrap_or(0).max(10 * elements(net)));
                let plain = Sampler::conditional(&at_hat, &t_obs, &w, &mech, false, &plain_cfg)?
                    .run(at_hat.eta())?;
                let mnar_est = importance_stat_estimate(&plain, &mech)?[gc];
                let observed = (0..net.n()).filter(|&v| w.attr_observed(v, 0)).count();
                let mut v = vec![
                    observed as f64,
                    naive.sample_infected as f64,
                    naive.sample_uninfected as f64,
                    w.traced_nodes().len() as f64,
                    naive.naive.unwrap_or(f64::NAN),
                    naive.seed_adjusted.unwrap_or(f64::NAN),
                    mar.cond_mean[gc],
                    mnar_est,
                ];
                v.extend(fit_values(&mar));
                v.extend(fit_values(&mnar));
                Ok(v)
            })();
            row(&conditions[c], r, seed, columns.len(), outcome)
        })
        .collect();
    let mut result = StudyResult::new(ExperimentKind::ContactTraceStudy, conditions, columns, rows);
    result.info.insert("population_n".into(), net.n() as f64);
    result
        .info
        .insert("population_infected".into(), pop.infected as f64);
    result
        .info
        .insert("population_mean_degree".into(), pop.mean_degree);
    result
        .info
        .insert("population_cross_ties".into(), pop.cross_ties as f64);
    result
        .info
        .insert("population_edges".into(), net.edge_count() as f64);
    Ok(result)
}

/// Latent-class fit with estimates in canonical class order.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentClassResult {
    pub fit: FitResult,
    pub labels: Vec<String>,
    pub eta: Vec<f64>,
    pub se_eta: Option<Vec<f64>>,
    pub mu: Vec<f64>,
    pub se_mu: Vec<f64>,
    pub posterior: PosteriorTable,
    pub occupied: usize,
    pub ids: Vec<String>,
    /// Known classes of each node, when the network carries them.
    pub reference: Option<Vec<u32>>,
}

impl LatentClassResult {
    pub fn estimates_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["term", "eta", "se_eta", "mu", "se_mu"])
            .expect("in-memory write");
        for k in 0..self.labels.len() {
            w.write_record([
                self.labels[k].clone(),
                fmt(self.eta[k]),
                self.se_eta.as_ref().map_or(String::new(), |s| fmt(s[k])),
                fmt(self.mu[k]),
                fmt(self.se_mu[k]),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
    }

    pub fn posterior_csv(&self) -> String {
        let m = self.posterior.order.len();
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["id".to_string()];
        header.extend((0..m).map(|k| format!("p_class{k}")));
        header.push("modal".into());
        if self.reference.is_some() {
            header.push("reference".into());
        }
        w.write_record(&header).expect("in-memory write");
        let modal = self.posterior.modal();
        for (i, p) in self.posterior.probs.iter().enumerate() {
            let mut rec = vec![self.ids[i].clone()];
            rec.extend(p.iter().map(|&x| fmt(x)));
            rec.push(modal[i].to_string());
            if let Some(r) = &self.reference {
                rec.push(r[i].to_string());
            }
            w.write_record(&rec).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
    }

    pub fn write(&self, dir: &Path, config: &RunConfig) -> Result<()> {
        write_file(
            &dir.join("latent_class_estimates.csv"),
            &self.estimates_csv(),
        )?;
        write_file(
            &dir.join("latent_class_posterior.csv"),
            &self.posterior_csv(),
        )?;
        write_file(&dir.join("latent_class_trace.csv"), &self.fit.trace_csv())?;
        let mut info = BTreeMap::new();
        info.insert("occupied_classes".into(), self.occupied as f64);
        info.insert(
            "converged".into(),
            if self.fit.converged { 1.0 } else { 0.0 },
        );
        info.insert("iterations".into(), self.fit.iterations.len() as f64);
        for (k, o) in self.posterior.occupancy.iter().enumerate() {
            info.insert(format!("occupancy_class{k}"), *o);
        }
        write_manifest(dir, config, info)
    }
}

/// Linear maps taking raw group-count coordinates to canonical ones:
/// `η' = A η` and `μ' = B μ + b`.
fn canonical_maps(
    spec: &ModelSpec,
    var: usize,
    order: &[usize],
    n: usize,
) -> (Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<f64>) {
    let q = spec.q();
    let m = order.len();
    let idx: Vec<Option<usize>> = (0..m as u32)
        .map(|l| group_count_index(spec, var, l))
        .collect();
    let mut a = vec![vec![0.0; q]; q];
    let mut b = vec![vec![0.0; q]; q];
    let mut c = vec![0.0; q];
    for k in 0..q {
        a[k][k] = 1.0;
        b[k][k] = 1.0;
    }
    let block: Vec<usize> = idx
        .iter()
        .take(m - 1)
        .map(|i| i.expect("full group-count block"))
        .collect();
    for (k, &row) in block.iter().enumerate() {
        a[row][row] = 0.0;
        b[row][row] = 0.0;
        let src = order[k];
        let reference = order[m - 1];
        if src < m - 1 {
            a[row][block[src]] += 1.0;
            b[row][block[src]] = 1.0;
        } else {
            for &col in &block {
                b[row][col] = -1.0;
            }
            c[row] = n as f64;
        }
        if reference < m - 1 {
            a[row][block[reference]] -= 1.0;
        }
    }
    (a, b, c)
}

fn mat_vec(a: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    a.iter()
        .map(|r| r.iter().zip(x).map(|(p, q)| p * q).sum())
        .collect()
}

fn sandwich_diag(a: &[Vec<f64>], cov: &[Vec<f64>]) -> Vec<f64> {
    a.iter()
        .map(|r| {
            let mut s = 0.0;
            for (i, ri) in r.iter().enumerate() {
                for (j, rj) in r.iter().enumerate() {
                    s += ri * cov[i][j] * rj;
                }
            }
            s.max(0.0).sqrt()
        })
        .collect()
}

/// Fit a latent-class model with every class value missing, then summarize
/// class membership.
pub fn run_latent_class(config: &RunConfig) -> Result<LatentClassResult> {
    let source = config.network.clone().unwrap_or_else(NetworkSource::monks);
    let (mut net, ids) = source.load(derive_seed(config.seed, &[SHARED, 0]))?;
    let settings = &config.latent;
    let reference = settings
        .reference_variable
        .as_ref()
        .and_then(|name| net.variable_index(name))
        .map(|v| net.attr_column(v).to_vec());
    let var = net.add_variable(Variable::new("class", settings.levels))?;
    let model = config
        .model
        .clone()
        .unwrap_or_else(|| ModelConfig::simple_homophily("class"));
    let spec = model.build(net.variables())?;
    let mut w = ObservationPattern::fully_observed(&net);
    w.hide_variable(var);
    let mech = SamplingMechanism::LatentAttributes { var };
    let mut fit_cfg = config
        .fit
        .clone()
        .unwrap_or_else(|| latent_class_fit(net.dyad_count() + net.n()))
        .with_seed(config.seed);
    if fit_cfg.init.is_none() {
        let mut init = initial_eta(&spec, &net, &w);
        for (k, t) in spec.terms().iter().enumerate() {
            if matches!(t, Term::Homophily { var: v, .. } if *v == var) {
                init[k] = settings.homophily_init;
            }
        }
        fit_cfg.init = Some(init);
    }
    let res = fit(&spec, &net, &w, &mech, &fit_cfg)?;
    let at_hat = spec.with_eta(res.eta_hat.clone())?;
    let post_cfg = ChainConfig {
        seed: derive_seed(config.seed, &[SHARED, 2]),
        ..settings.posterior.clone()
    };
    let posterior = class_membership_posterior(&at_hat, &net, var, &post_cfg)?;
    let occupied = posterior.occupied(settings.threshold);
    let (a, b, c) = canonical_maps(&spec, var, &posterior.order, net.n());
    let eta = mat_vec(&a, &res.eta_hat);
    let se_eta = res.cov_eta.as_ref().map(|cov| sandwich_diag(&a, cov));
    let mu: Vec<f64> = mat_vec(&b, &res.mu_hat)
        .iter()
        .zip(&c)
        .map(|(x, y)| x + y)
        .collect();
    let se_mu = sandwich_diag(&b, &res.cov_mu);
    let labels = spec.labels(net.variables());
    Ok(LatentClassResult {
        fit: res,
        labels,
        eta,
        se_eta,
        mu,
        se_mu,
        posterior,
        occupied,
        ids,
        reference,
    })
}

/// A single fit, with an optional observation pattern and mechanism.
pub fn run_fit_single(config: &RunConfig) -> Result<(FitResult, Vec<f64>)> {
    let source = config
        .network
        .clone()
        .ok_or_else(|| Error::config("fit-single needs a [network] section"))?;
    let (net, _) = source.load(derive_seed(config.seed, &[SHARED, 0]))?;
    let model = config
        .model
        .clone()
        .ok_or_else(|| Error::config("fit-single needs a [model] section"))?;
    let spec = model.build(net.variables())?;
    let w = match &config.observation {
        Some(p) => ObservationPattern::read(p)?,
        None => ObservationPattern::fully_observed(&net),
    };
    w.validate(&net)?;
    let t_obs = w.mask(&net);
    let mech = config
        .mechanism
        .clone()
        .unwrap_or(SamplingMechanism::Ignorable);
    let fit_cfg = match &config.fit {
        Some(f) => f.clone().with_seed(config.seed),
        None if net.n() > 60 => large_network_fit(elements(&net)).with_seed(config.seed),
        None => small_network_fit().with_seed(config.seed),
    };
    let res = fit(&spec, &t_obs, &w, &mech, &fit_cfg)?;
    let observed = compute_statistics(&t_obs, &spec)?;
    Ok((res, observed))
}

pub fn fit_estimates_csv(res: &FitResult) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["term", "eta", "se_eta", "mu", "se_mu", "conditional_mean"])
        .expect("in-memory write");
    for k in 0..res.labels.len() {
        w.write_record([
            res.labels[k].clone(),
            fmt(res.eta_hat[k]),
            res.se_eta.as_ref().map_or(String::new(), |s| fmt(s[k])),
            fmt(res.mu_hat[k]),
            fmt(res.se_mu[k]),
            fmt(res.cond_mean[k]),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
}

pub fn write_fit(res: &FitResult, dir: &Path, config: &RunConfig) -> Result<()> {
    write_file(&dir.join("fit_estimates.csv"), &fit_estimates_csv(res))?;
    write_file(&dir.join("fit_trace.csv"), &res.trace_csv())?;
    let mut info = BTreeMap::new();
    info.insert("converged".into(), if res.converged { 1.0 } else { 0.0 });
    info.insert("iterations".into(), res.iterations.len() as f64);
    write_manifest(dir, config, info)
}

/// Networks drawn from a model.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub networks: Vec<Network>,
    pub labels: Vec<String>,
    pub stats: Vec<Vec<f64>>,
}

impl Simulation {
    pub fn write(&self, dir: &Path, config: &RunConfig) -> Result<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["sample".to_string()];
        header.extend(self.labels.iter().cloned());
        w.write_record(&header).expect("in-memory write");
        for (k, (net, s)) in self.networks.iter().zip(&self.stats).enumerate() {
            let mut rec = vec![k.to_string()];
            rec.extend(s.iter().map(|&x| fmt(x)));
            w.write_record(&rec).expect("in-memory write");
            let (edges, attrs) = ernm::io::write_network(net, None);
            write_file(&dir.join(format!("network_{k}_edges.txt")), &edges)?;
            write_file(&dir.join(format!("network_{k}_attributes.csv")), &attrs)?;
        }
        write_file(
            &dir.join("simulate_stats.csv"),
            &String::from_utf8(w.into_inner().expect("flush")).expect("utf8"),
        )?;
        write_manifest(dir, config, BTreeMap::new())
    }
}

/// Draw networks from the configured model, using the configured network
/// (or an empty one of the generator's size) as the template.
pub fn run_simulate(config: &RunConfig) -> Result<Simulation> {
    let source = config
        .network
        .clone()
        .ok_or_else(|| Error::config("simulate needs a [network] section"))?;
    let (template, _) = source.load(derive_seed(config.seed, &[SHARED, 0]))?;
    let model = config
        .model
        .clone()
        .ok_or_else(|| Error::config("simulate needs a [model] section"))?;
    let spec = model.build(template.variables())?;
    let chain = ChainConfig {
        samples: config.simulate.count,
        keep_networks: true,
        seed: derive_seed(config.seed, &[SHARED, 1]),
        ..config.simulate.chain.clone()
    };
    let batch = ernm::sample_full(&spec, &template, &chain)?;
    Ok(Simulation {
        networks: batch.networks.expect("kept"),
        labels: spec.labels(template.variables()),
        stats: batch.stats,
    })
}

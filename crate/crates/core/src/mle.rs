//! Monte Carlo maximum likelihood.
//!
//! Each outer iteration draws a full-model batch and a conditional batch at
//! the current `η`, then maximizes the Monte Carlo ratio surrogate over a
//! ball of radius `ε` around it by damped Newton ascent with backtracking.

use rayon::join;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::likelihood::{
    alt_loglik_ratio, damped_newton_direction, ess_threshold, importance_stat_estimate,
    loglik_ratio, mean_value_params, to_matrix, LogLikRatioEstimate,
};
use crate::mcmc::{ChainConfig, SampleBatch, Sampler};
use crate::mechanisms::SamplingMechanism;
use crate::model::{ModelSpec, Term};
use crate::network::Network;
use crate::observation::ObservationPattern;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    #[default]
    Main,
    Alternate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    /// Trust-region radius on `‖η_{k+1} − η_k‖`.
    pub epsilon: f64,
    pub max_iter: usize,
    /// Convergence threshold on the maximized ratio.
    pub tol: f64,
    /// Consecutive iterations below `tol` required.
    pub consecutive: usize,
    /// Times `ε` may be halved within one iteration.
    pub retries: usize,
    /// Sample counts double, up to this many, once the ratio is within
    /// `10 tol`; `None` keeps them fixed.
    pub max_samples: Option<usize>,
    /// Sample count for the standard-error batches at `η̂`.
    pub final_samples: Option<usize>,
    pub full_chain: ChainConfig,
    pub cond_chain: ChainConfig,
    pub algorithm: Algorithm,
    /// Starting `η`; defaults to the observed-density logit for the edge
    /// term and zero elsewhere.
    pub init: Option<Vec<f64>>,
    /// Without convergence, report the mean of this many final iterates
    /// instead of the last one (0 or 1 disables).
    pub average_last: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            epsilon: 1.0,
            max_iter: 40,
            tol: 1e-3,
            consecutive: 2,
            retries: 6,
            max_samples: None,
            final_samples: None,
            full_chain: ChainConfig {
                seed: 1,
                ..Default::default()
            },
            cond_chain: ChainConfig {
                seed: 2,
                ..Default::default()
            },
            algorithm: Algorithm::Main,
            init: None,
            average_last: 0,
        }
    }
}

/// Stream-splitting hash for deriving independent seeds.
pub fn derive_seed(master: u64, parts: &[u64]) -> u64 {
    let mut x = master;
    for &p in parts {
        x = splitmix(x ^ splitmix(p.wrapping_add(0x632B_E59B_D9B4_E019)));
    }
    x
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) || !(self.tol > 0.0) {
            return Err(Error::config("epsilon and tol must be positive"));
        }
        if self.max_iter == 0 || self.consecutive == 0 {
            return Err(Error::config("max_iter and consecutive must be positive"));
        }
        self.full_chain.validate()?;
        self.cond_chain.validate()
    }

    /// Derive both chain seeds from one master seed.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.full_chain.seed = derive_seed(seed, &[1]);
        self.cond_chain.seed = derive_seed(seed, &[2]);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub eta: Vec<f64>,
    pub theta: Vec<f64>,
    /// Maximized surrogate ratio at the accepted point.
    pub ratio: f64,
    pub ess_full: f64,
    pub ess_cond: f64,
    pub epsilon: f64,
    pub samples: usize,
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub labels: Vec<String>,
    pub eta_hat: Vec<f64>,
    pub theta_hat: Vec<f64>,
    /// `None` when the information matrix could not be inverted.
    pub se_eta: Option<Vec<f64>>,
    /// Inverse information matrix, when available.
    pub cov_eta: Option<Vec<Vec<f64>>>,
    pub se_error: Option<String>,
    pub mu_hat: Vec<f64>,
    pub se_mu: Vec<f64>,
    /// Covariance of `g` under the fitted model.
    pub cov_mu: Vec<Vec<f64>>,
    /// `E(g | t_obs, w)` at the estimate.
    pub cond_mean: Vec<f64>,
    pub iterations: Vec<IterationRecord>,
    pub converged: bool,
}

impl FitResult {
    pub fn trace_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["iteration".to_string()];
        header.extend(self.labels.iter().map(|l| format!("eta_{l}")));
        header.extend((0..self.theta_hat.len()).map(|i| format!("theta_{i}")));
        header.extend(
            [
                "ratio",
                "ess_full",
                "ess_cond",
                "epsilon",
                "samples",
                "degenerate",
            ]
            .iter()
            .map(|s| s.to_string()),
        );
        w.write_record(&header).expect("in-memory write");
        for r in &self.iterations {
            let mut row = vec![r.iteration.to_string()];
            row.extend(r.eta.iter().map(|x| format!("{x}")));
            row.extend(r.theta.iter().map(|x| format!("{x}")));
            row.push(format!("{}", r.ratio));
            row.push(format!("{}", r.ess_full));
            row.push(format!("{}", r.ess_cond));
            row.push(format!("{}", r.epsilon));
            row.push(r.samples.to_string());
            row.push(r.degenerate.to_string());
            w.write_record(&row).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
    }
}

/// Edge term at the logit of the observed density, zero elsewhere.
pub fn initial_eta(spec: &ModelSpec, t_obs: &Network, w: &ObservationPattern) -> Vec<f64> {
    let mut present = 0usize;
    let mut seen = 0usize;
    for (i, j) in t_obs.dyads() {
        if w.dyad_observed(i, j) {
            seen += 1;
            if t_obs.has_edge(i, j) {
                present += 1;
            }
        }
    }
    let logit = if seen == 0 {
        0.0
    } else {
        let p = (present as f64 + 0.5) / (seen as f64 + 1.0);
        (p / (1.0 - p)).ln()
    };
    spec.terms()
        .iter()
        .flat_map(|t| {
            std::iter::repeat_n(if matches!(t, Term::Edges) { logit } else { 0.0 }, t.dim())
        })
        .collect()
}

fn norm_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Project `x` onto the closed ball of radius `eps` around `center`.
pub fn project_to_ball(center: &[f64], x: &[f64], eps: f64) -> Vec<f64> {
    let d = norm_dist(center, x);
    if d <= eps {
        return x.to_vec();
    }
    let mut scale = eps / d;
    loop {
        let y: Vec<f64> = center
            .iter()
            .zip(x)
            .map(|(c, v)| c + (v - c) * scale)
            .collect();
        if norm_dist(center, &y) <= eps {
            return y;
        }
        scale *= 1.0 - 1e-12;
    }
}

struct Maximum {
    eta: Vec<f64>,
    est: LogLikRatioEstimate,
    hit_degenerate: bool,
}

/// Damped Newton ascent on `eval` within the `eps`-ball around `center`.
fn maximize_surrogate(
    eval: &dyn Fn(&[f64]) -> Result<LogLikRatioEstimate>,
    center: &[f64],
    eps: f64,
    gate: (f64, f64),
) -> Result<Maximum> {
    let start = eval(center)?;
    let gate_full = gate.0.min(start.ess_full);
    let gate_cond = gate.1.min(start.ess_cond);
    let usable = |e: &LogLikRatioEstimate| {
        e.value.is_finite() && e.ess_full >= gate_full && e.ess_cond >= gate_cond
    };
    let mut x = center.to_vec();
    let mut cur = start;
    let mut hit = false;
    for _ in 0..100 {
        let d = damped_newton_direction(&cur.gradient, &cur.hessian);
        let mut t = 1.0;
        let mut moved = false;
        for _ in 0..40 {
            let step: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + t * b).collect();
            let cand = project_to_ball(center, &step, eps);
            let e = eval(&cand)?;
            if !usable(&e) {
                hit = true;
            } else if e.value > cur.value {
                let shift = norm_dist(&cand, &x);
                x = cand;
                cur = e;
                moved = shift > 1e-10;
                break;
            }
            t *= 0.5;
        }
        if !moved {
            break;
        }
    }
    Ok(Maximum {
        eta: x,
        est: cur,
        hit_degenerate: hit,
    })
}

/// Inverse of the observed information `−H`.
pub fn inverse_information(hessian: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let info = -to_matrix(hessian);
    let q = info.nrows();
    let chol = info.cholesky().ok_or_else(|| {
        Error::SingularInformation(format!(
            "information matrix is not positive definite (q = {q})"
        ))
    })?;
    let inv = chol.inverse();
    Ok((0..q)
        .map(|i| (0..q).map(|j| inv[(i, j)]).collect())
        .collect())
}

/// Standard errors from the observed information `−H`.
pub fn se_from_hessian(hessian: &[Vec<f64>]) -> Result<Vec<f64>> {
    let cov = inverse_information(hessian)?;
    Ok((0..cov.len()).map(|i| cov[i][i].sqrt()).collect())
}

fn covariance(stats: &[Vec<f64>], mean: &[f64]) -> Vec<Vec<f64>> {
    let q = mean.len();
    let mut cov = vec![vec![0.0; q]; q];
    for s in stats {
        for a in 0..q {
            for b in 0..q {
                cov[a][b] += (s[a] - mean[a]) * (s[b] - mean[b]);
            }
        }
    }
    let denom = (stats.len().max(2) - 1) as f64;
    cov.iter()
        .map(|r| r.iter().map(|c| c / denom).collect())
        .collect()
}

/// Coordinate line search of `log mean p_i(θ)` over θ within the trust
/// region. Returns θ unchanged when the weights do not depend on it.
fn theta_step(cond: &SampleBatch, mech: &SamplingMechanism, eps: f64) -> Result<SamplingMechanism> {
    let theta0 = mech.theta();
    if theta0.is_empty() || mech.is_ignorable() || cond.summaries.is_none() {
        return Ok(mech.clone());
    }
    let objective = |m: &SamplingMechanism| -> f64 {
        let s = cond.summaries.as_ref().expect("checked");
        let lw: Vec<f64> = s.iter().map(|x| m.log_weight_summary(x)).collect();
        let max = lw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return f64::NEG_INFINITY;
        }
        max + lw.iter().map(|l| (l - max).exp()).sum::<f64>().ln()
    };
    let mut best = mech.clone();
    let mut best_val = objective(mech);
    let per = eps / (theta0.len() as f64).sqrt();
    for k in 0..theta0.len() {
        for frac in [-1.0, -0.5, -0.25, 0.25, 0.5, 1.0] {
            let mut th = best.theta();
            th[k] = theta0[k] + frac * per;
            if let Ok(m) = mech.with_theta(&th) {
                let v = objective(&m);
                if v > best_val {
                    best_val = v;
                    best = m;
                }
            }
        }
    }
    Ok(best)
}

/// MCMC maximum likelihood from observed data `(t_obs, w)`.
pub fn fit(
    spec: &ModelSpec,
    t_obs: &Network,
    w: &ObservationPattern,
    mech: &SamplingMechanism,
    config: &FitConfig,
) -> Result<FitResult> {
    config.validate()?;
    let alternate = config.algorithm == Algorithm::Alternate;
    let eta0 = match &config.init {
        Some(e) => e.clone(),
        None => initial_eta(spec, t_obs, w),
    };
    let spec = spec.with_eta(eta0)?;
    let mut full = Sampler::full(&spec, t_obs, &config.full_chain)?;
    let mut cond = Sampler::conditional(&spec, t_obs, w, mech, !alternate, &config.cond_chain)?;
    let mut eta = spec.eta().to_vec();
    let mut mech = mech.clone();
    let mut records = Vec::new();
    let mut below = 0usize;
    let mut converged = false;
    let mut samples = (config.full_chain.samples, config.cond_chain.samples);
    let cap = config.max_samples;
    for iteration in 0..config.max_iter {
        let (fb, cb) = draw(&mut full, &mut cond, &eta)?;
        if alternate {
            mech = theta_step(&cb, &mech, config.epsilon)?;
        }
        let theta = mech.theta();
        let gate = (ess_threshold(fb.len()), ess_threshold(cb.len()));
        let eval = |x: &[f64]| -> Result<LogLikRatioEstimate> {
            if alternate {
                alt_loglik_ratio(&cb, &fb, x, &eta, &mech, &theta)
            } else {
                loglik_ratio(&fb, &cb, x, &eta, &mech, &theta)
            }
        };
        let mut eps = config.epsilon;
        let mut best = maximize_surrogate(&eval, &eta, eps, gate)?;
        let mut retries = 0;
        while best.hit_degenerate && norm_dist(&best.eta, &eta) == 0.0 && retries < config.retries {
            eps /= 2.0;
            retries += 1;
            best = maximize_surrogate(&eval, &eta, eps, gate)?;
        }
        records.push(IterationRecord {
            iteration,
            eta: best.eta.clone(),
            theta: theta.clone(),
            ratio: best.est.value,
            ess_full: best.est.ess_full,
            ess_cond: best.est.ess_cond,
            epsilon: eps,
            samples: fb.len(),
            degenerate: best.hit_degenerate,
        });
        let improvement = best.est.value;
        eta = best.eta;
        if improvement.abs() < config.tol {
            below += 1;
            if below >= config.consecutive {
                converged = true;
                break;
            }
        } else {
            below = 0;
        }
        if let Some(cap) = cap {
            if improvement.abs() < 10.0 * config.tol {
                samples = ((samples.0 * 2).min(cap), (samples.1 * 2).min(cap));
                full.set_samples(samples.0.max(config.full_chain.samples));
                cond.set_samples(samples.1.max(config.cond_chain.samples));
            }
        }
    }
    if !converged && config.average_last > 1 {
        let k = config.average_last.min(records.len());
        let tail = &records[records.len() - k..];
        eta = (0..eta.len())
            .map(|j| tail.iter().map(|r| r.eta[j]).sum::<f64>() / k as f64)
            .collect();
    }
    if let Some(m) = config.final_samples {
        full.set_samples(m);
        cond.set_samples(m);
    }
    let (fb, cb) = draw(&mut full, &mut cond, &eta)?;
    let theta = mech.theta();
    let at_hat = if alternate {
        alt_loglik_ratio(&cb, &fb, &eta, &eta, &mech, &theta)?
    } else {
        loglik_ratio(&fb, &cb, &eta, &eta, &mech, &theta)?
    };
    let (cov_eta, se_error) = match inverse_information(&at_hat.hessian) {
        Ok(c) => (Some(c), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let se_eta = cov_eta
        .as_ref()
        .map(|c| (0..c.len()).map(|i| c[i][i].sqrt()).collect());
    let (mu_hat, se_mu) = mean_value_params(&fb);
    let cov_mu = covariance(&fb.stats, &mu_hat);
    let cond_mean = if alternate {
        importance_stat_estimate(&cb, &mech)?
    } else {
        cb.mean()
    };
    Ok(FitResult {
        labels: spec.labels(t_obs.variables()),
        eta_hat: eta,
        theta_hat: theta,
        se_eta,
        cov_eta,
        se_error,
        mu_hat,
        se_mu,
        cov_mu,
        cond_mean,
        iterations: records,
        converged,
    })
}

fn draw(full: &mut Sampler, cond: &mut Sampler, eta: &[f64]) -> Result<(SampleBatch, SampleBatch)> {
    let (f, c) = join(|| full.run(eta), || cond.run(eta));
    Ok((f?, c?))
}

/// The importance-sampling variant: conditional chains ignore the
/// mechanism, θ is updated first, then `η` maximizes the alternate ratio.
pub fn fit_alternate(
    spec: &ModelSpec,
    t_obs: &Network,
    w: &ObservationPattern,
    mech: &SamplingMechanism,
    config: &FitConfig,
) -> Result<FitResult> {
    let config = FitConfig {
        algorithm: Algorithm::Alternate,
        ..config.clone()
    };
    fit(spec, t_obs, w, mech, &config)
}

/// Per-node class-membership probabilities with classes in canonical order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorTable {
    /// `probs[i][k]`: posterior probability that node `i` is in class `k`.
    pub probs: Vec<Vec<f64>>,
    /// `order[k]`: original level shown as canonical class `k`.
    pub order: Vec<usize>,
    /// Expected class sizes in canonical order.
    pub occupancy: Vec<f64>,
}

impl PosteriorTable {
    pub fn modal(&self) -> Vec<usize> {
        self.probs
            .iter()
            .map(|row| {
                let mut best = 0;
                for k in 1..row.len() {
                    if row[k] > row[best] {
                        best = k;
                    }
                }
                best
            })
            .collect()
    }

    pub fn occupied(&self, threshold: f64) -> usize {
        self.occupancy.iter().filter(|&&o| o > threshold).count()
    }
}

/// Canonical order: ascending expected occupancy, ties broken by the
/// smallest node whose modal class it is.
pub fn canonical_order(probs: &[Vec<f64>]) -> Vec<usize> {
    let m = probs.first().map_or(0, Vec::len);
    let occupancy: Vec<f64> = (0..m).map(|k| probs.iter().map(|r| r[k]).sum()).collect();
    let mut first = vec![usize::MAX; m];
    for (i, row) in probs.iter().enumerate() {
        let mut best = 0;
        for k in 1..m {
            if row[k] > row[best] {
                best = k;
            }
        }
        first[best] = first[best].min(i);
    }
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| {
        occupancy[a]
            .partial_cmp(&occupancy[b])
            .expect("finite occupancy")
            .then(first[a].cmp(&first[b]))
            .then(a.cmp(&b))
    });
    order
}

/// Rewrite a group-count block for a relabeled variable. The block holds
/// levels `0..m-1` relative to the dropped last level.
pub fn relabel_group_counts(block: &[f64], order: &[usize]) -> Vec<f64> {
    let m = order.len();
    let full: Vec<f64> = (0..m)
        .map(|l| if l + 1 < m { block[l] } else { 0.0 })
        .collect();
    let reference = full[order[m - 1]];
    (0..m - 1).map(|k| full[order[k]] - reference).collect()
}

/// `P(X_i = k | Y = y_obs, η)` estimated from the conditional chain with
/// every value of `var` latent and the graph observed.
pub fn class_membership_posterior(
    spec: &ModelSpec,
    y_obs: &Network,
    var: usize,
    config: &ChainConfig,
) -> Result<PosteriorTable> {
    let mut w = ObservationPattern::fully_observed(y_obs);
    w.hide_variable(var);
    let mech = SamplingMechanism::LatentAttributes { var };
    let cfg = ChainConfig {
        keep_networks: true,
        ..config.clone()
    };
    let mut sampler = Sampler::conditional(spec, y_obs, &w, &mech, true, &cfg)?;
    anneal(&mut sampler, spec.eta())?;
    let batch = sampler.run(spec.eta())?;
    let n = y_obs.n();
    let m = y_obs.levels(var) as usize;
    let mut counts = vec![vec![0usize; m]; n];
    let nets = batch.networks.as_ref().expect("networks kept");
    for net in nets {
        for (i, &x) in net.attr_column(var).iter().enumerate() {
            counts[i][x as usize] += 1;
        }
    }
    let total = nets.len() as f64;
    let raw: Vec<Vec<f64>> = counts
        .iter()
        .map(|r| r.iter().map(|&c| c as f64 / total).collect())
        .collect();
    let order = canonical_order(&raw);
    let probs: Vec<Vec<f64>> = raw
        .iter()
        .map(|r| order.iter().map(|&k| r[k]).collect())
        .collect();
    let occupancy = (0..m).map(|k| probs.iter().map(|r| r[k]).sum()).collect();
    Ok(PosteriorTable {
        probs,
        order,
        occupancy,
    })
}

/// Warm the chains up along `s η` for `s` rising from 0 to 1, so strongly
/// clustered targets start near a dominant mode.
pub fn anneal(sampler: &mut Sampler, eta: &[f64]) -> Result<()> {
    let keep = sampler.config().samples;
    sampler.set_samples(sampler.config().chains);
    for step in 0..=ANNEAL_STEPS {
        let s = step as f64 / ANNEAL_STEPS as f64;
        let scaled: Vec<f64> = eta.iter().map(|e| e * s).collect();
        sampler.run(&scaled)?;
    }
    sampler.set_samples(keep);
    Ok(())
}

const ANNEAL_STEPS: usize = 50;

/// Classes whose posterior expected occupancy exceeds `threshold` nodes.
pub fn occupied_class_count(
    spec: &ModelSpec,
    y_obs: &Network,
    var: usize,
    config: &ChainConfig,
    threshold: f64,
) -> Result<usize> {
    Ok(class_membership_posterior(spec, y_obs, var, config)?.occupied(threshold))
}

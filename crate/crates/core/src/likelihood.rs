//! Monte Carlo estimates of the observed-data log-likelihood ratio
//! `ℓ(η, θ) − ℓ(η0, θ0)`, its derivatives, and the importance-sampling
//! estimators used by the alternate algorithm.
//!
//! Everything is computed in log space; weights are self-normalized.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mcmc::SampleBatch;
use crate::mechanisms::SamplingMechanism;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogLikRatioEstimate {
    pub value: f64,
    pub gradient: Vec<f64>,
    pub hessian: Vec<Vec<f64>>,
    pub ess_full: f64,
    pub ess_cond: f64,
    pub degenerate: bool,
}

/// Exponentially tilted moments of a batch.
#[derive(Debug, Clone)]
struct Tilted {
    /// `log (1/k) Σ exp(l_i)`
    log_mean_exp: f64,
    mean: Vec<f64>,
    cov: Vec<Vec<f64>>,
    ess: f64,
}

fn tilt(stats: &[Vec<f64>], base: Option<&[f64]>, deta: &[f64]) -> Tilted {
    let q = deta.len();
    let k = stats.len();
    let logw: Vec<f64> = stats
        .iter()
        .enumerate()
        .map(|(i, g)| {
            let b = base.map_or(0.0, |b| b[i]);
            if b == f64::NEG_INFINITY {
                return b;
            }
            b + deta.iter().zip(g).map(|(a, x)| a * x).sum::<f64>()
        })
        .collect();
    let max = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Tilted {
            log_mean_exp: if max == f64::INFINITY {
                max
            } else {
                f64::NEG_INFINITY
            },
            mean: vec![f64::NAN; q],
            cov: vec![vec![f64::NAN; q]; q],
            ess: 0.0,
        };
    }
    let e: Vec<f64> = logw.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = e.iter().sum();
    let total_sq: f64 = e.iter().map(|x| x * x).sum();
    let mut mean = vec![0.0; q];
    for (g, &ei) in stats.iter().zip(&e) {
        for (m, x) in mean.iter_mut().zip(g) {
            *m += ei * x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= total);
    let mut cov = vec![vec![0.0; q]; q];
    for (g, &ei) in stats.iter().zip(&e) {
        if ei == 0.0 {
            continue;
        }
        for a in 0..q {
            let da = g[a] - mean[a];
            for b in a..q {
                cov[a][b] += ei * da * (g[b] - mean[b]);
            }
        }
    }
    for a in 0..q {
        for b in a..q {
            cov[a][b] /= total;
            cov[b][a] = cov[a][b];
        }
    }
    Tilted {
        log_mean_exp: max + (total / k as f64).ln(),
        mean,
        cov,
        ess: total * total / total_sq,
    }
}

/// ESS below which an estimate is flagged degenerate.
pub fn ess_threshold(batch_len: usize) -> f64 {
    30f64.min(batch_len as f64 / 2.0)
}

fn mech_log_weights(batch: &SampleBatch, mech: &SamplingMechanism) -> Option<Vec<f64>> {
    if mech.is_ignorable() {
        return None;
    }
    batch
        .summaries
        .as_ref()
        .map(|s| s.iter().map(|x| mech.log_weight_summary(x)).collect())
}

fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn mat_diff(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    a.iter().zip(b).map(|(x, y)| diff(x, y)).collect()
}

fn check_dims(full: &SampleBatch, cond: &SampleBatch, eta: &[f64], eta0: &[f64]) -> Result<()> {
    if full.is_empty() || cond.is_empty() {
        return Err(Error::Sampling("empty sample batch".into()));
    }
    let q = eta.len();
    if eta0.len() != q || full.q() != q || cond.q() != q {
        return Err(Error::config("parameter and statistic dimensions disagree"));
    }
    Ok(())
}

fn assemble(
    value: f64,
    c: Tilted,
    f: Tilted,
    full_len: usize,
    cond_len: usize,
) -> LogLikRatioEstimate {
    let degenerate =
        !value.is_finite() || c.ess < ess_threshold(cond_len) || f.ess < ess_threshold(full_len);
    LogLikRatioEstimate {
        value,
        gradient: diff(&c.mean, &f.mean),
        hessian: mat_diff(&c.cov, &f.cov),
        ess_full: f.ess,
        ess_cond: c.ess,
        degenerate,
    }
}

/// Ratio estimate from a full batch and a conditional batch, both drawn at
/// `(η0, θ0)`; the conditional batch targets the mechanism-weighted missing
/// data distribution. `mech` carries θ0 and `theta` is the evaluation θ.
pub fn loglik_ratio(
    full: &SampleBatch,
    cond: &SampleBatch,
    eta: &[f64],
    eta0: &[f64],
    mech: &SamplingMechanism,
    theta: &[f64],
) -> Result<LogLikRatioEstimate> {
    check_dims(full, cond, eta, eta0)?;
    let deta = diff(eta, eta0);
    let base = match (
        mech_log_weights(cond, mech),
        mech.theta().as_slice() == theta,
    ) {
        (Some(lw0), false) => {
            let lw = mech_log_weights(cond, &mech.with_theta(theta)?).expect("same kind");
            Some(
                lw.iter()
                    .zip(&lw0)
                    .map(|(a, b)| if *a == f64::NEG_INFINITY { *a } else { a - b })
                    .collect::<Vec<f64>>(),
            )
        }
        _ => None,
    };
    let c = tilt(&cond.stats, base.as_deref(), &deta);
    let f = tilt(&full.stats, None, &deta);
    let value = c.log_mean_exp - f.log_mean_exp;
    Ok(assemble(value, c, f, full.len(), cond.len()))
}

/// Score `E(g | obs, w) − E(g)` and Hessian `cov(g | obs, w) − cov(g)` at
/// the point the batches were drawn at.
pub fn score_and_hessian(full: &SampleBatch, cond: &SampleBatch) -> (Vec<f64>, Vec<Vec<f64>>) {
    let q = full.q();
    let zero = vec![0.0; q];
    let c = tilt(&cond.stats, None, &zero);
    let f = tilt(&full.stats, None, &zero);
    (diff(&c.mean, &f.mean), mat_diff(&c.cov, &f.cov))
}

pub fn to_matrix(m: &[Vec<f64>]) -> DMatrix<f64> {
    let q = m.len();
    DMatrix::from_fn(q, q, |i, j| m[i][j])
}

/// Standard errors from the inverse of `cov(g) − cov(g | obs, w)`.
pub fn fisher_se(full: &SampleBatch, cond: &SampleBatch) -> Result<Vec<f64>> {
    let (_, h) = score_and_hessian(full, cond);
    let info = -to_matrix(&h);
    let chol = info.clone().cholesky().ok_or_else(|| {
        Error::SingularInformation(format!(
            "information matrix is not positive definite (q = {})",
            info.nrows()
        ))
    })?;
    let inv = chol.inverse();
    Ok((0..inv.nrows()).map(|i| inv[(i, i)].sqrt()).collect())
}

/// Mean-value parameters `E(g | η)` and the network-to-network standard
/// deviation of `g` from a full-model batch.
pub fn mean_value_params(full: &SampleBatch) -> (Vec<f64>, Vec<f64>) {
    let zero = vec![0.0; full.q()];
    let t = tilt(&full.stats, None, &zero);
    let sd = (0..t.mean.len())
        .map(|k| t.cov[k][k].max(0.0).sqrt())
        .collect();
    (t.mean, sd)
}

/// Importance-sampling form of the ratio for a conditional batch drawn
/// from `p(t_miss | t_obs, η0)` without mechanism weighting:
/// `log Σ ω_i p_i(θ) / mean p_i(θ0)` plus the ignorable-case terms.
pub fn alt_loglik_ratio(
    cond: &SampleBatch,
    full: &SampleBatch,
    eta: &[f64],
    eta0: &[f64],
    mech: &SamplingMechanism,
    theta: &[f64],
) -> Result<LogLikRatioEstimate> {
    check_dims(full, cond, eta, eta0)?;
    let deta = diff(eta, eta0);
    let lw0 = mech_log_weights(cond, mech);
    let lw = if lw0.is_some() && mech.theta().as_slice() != theta {
        mech_log_weights(cond, &mech.with_theta(theta)?)
    } else {
        lw0.clone()
    };
    let c = tilt(&cond.stats, lw.as_deref(), &deta);
    let zero = vec![0.0; deta.len()];
    let norm = match &lw0 {
        Some(w) => tilt(&cond.stats, Some(w), &zero).log_mean_exp,
        None => 0.0,
    };
    let f = tilt(&full.stats, None, &deta);
    let value = c.log_mean_exp - norm - f.log_mean_exp;
    Ok(assemble(value, c, f, full.len(), cond.len()))
}

/// Self-normalized estimate of `E(g | t_obs, w, η, θ)` from a conditional
/// batch drawn without mechanism weighting.
pub fn importance_stat_estimate(cond: &SampleBatch, mech: &SamplingMechanism) -> Result<Vec<f64>> {
    if cond.is_empty() {
        return Err(Error::Sampling("empty sample batch".into()));
    }
    let Some(lw) = mech_log_weights(cond, mech) else {
        return Ok(cond.mean());
    };
    let t = tilt(&cond.stats, Some(&lw), &vec![0.0; cond.q()]);
    if t.log_mean_exp == f64::NEG_INFINITY {
        return Err(Error::ZeroWeights(format!(
            "all {} samples are infeasible under {}",
            cond.len(),
            mech.name()
        )));
    }
    Ok(t.mean)
}

/// Solve `(−H + λI) d = g` for the smallest `λ` in a geometric ladder that
/// makes the system positive definite.
pub fn damped_newton_direction(gradient: &[f64], hessian: &[Vec<f64>]) -> Vec<f64> {
    let q = gradient.len();
    let neg_h = -to_matrix(hessian);
    let g = DVector::from_column_slice(gradient);
    let scale = (0..q)
        .map(|i| neg_h[(i, i)].abs())
        .fold(0.0, f64::max)
        .max(1e-8);
    let mut lambda = 0.0;
    for _ in 0..40 {
        let m = &neg_h + DMatrix::identity(q, q) * lambda;
        if let Some(ch) = m.cholesky() {
            let d = ch.solve(&g);
            if d.iter().all(|x| x.is_finite()) {
                return d.iter().cloned().collect();
            }
        }
        lambda = if lambda == 0.0 {
            scale * 1e-8
        } else {
            lambda * 10.0
        };
    }
    gradient.to_vec()
}

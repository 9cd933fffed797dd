//! Sampling mechanisms `p(W = w | T = t, θ)` and the simulators that produce
//! observed data from a complete network.
//!
//! Log-weights are defined up to an additive constant that does not depend
//! on the missing part of `t`. The trace-based mechanisms only depend on `t`
//! through a [`MechanismSummary`], which the samplers keep current
//! incrementally.

use rand::seq::index::sample as sample_indices;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::change::Move;
use crate::error::{Error, Result};
use crate::network::Network;
use crate::observation::{ObservationPattern, TraceEntry, TraceItem, Wave};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SamplingMechanism {
    /// No mechanism at all: the observed data are analysed as given.
    Ignorable,
    Mcar {
        dyad_rate: f64,
        attr_rate: f64,
    },
    LatentAttributes {
        var: usize,
    },
    BiasedSeedTrace {
        seeds_infected: usize,
        seeds_uninfected: usize,
        var: usize,
        #[serde(default)]
        infected_level: u32,
    },
    PositiveContactTrace {
        seeds_infected: usize,
        seeds_uninfected: usize,
        var: usize,
        #[serde(default)]
        infected_level: u32,
    },
}

/// Everything a trace mechanism needs to know about a complete network.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MechanismSummary {
    pub infected: usize,
    pub uninfected: usize,
    /// Ties between a traced infected node and an infected node outside the trace.
    pub violations: usize,
}

/// `ln((n - s)! / n!)`, or `-inf` when `s > n`.
pub fn log_falling_factorial_ratio(n: usize, s: usize) -> f64 {
    if s > n {
        return f64::NEG_INFINITY;
    }
    -((n - s + 1)..=n).map(|k| (k as f64).ln()).sum::<f64>()
}

impl SamplingMechanism {
    pub fn is_ignorable(&self) -> bool {
        matches!(
            self,
            SamplingMechanism::Ignorable
                | SamplingMechanism::Mcar { .. }
                | SamplingMechanism::LatentAttributes { .. }
        )
    }

    pub fn name(&self) -> &'static str {
        match self {
            SamplingMechanism::Ignorable => "ignorable",
            SamplingMechanism::Mcar { .. } => "mcar",
            SamplingMechanism::LatentAttributes { .. } => "latent-attributes",
            SamplingMechanism::BiasedSeedTrace { .. } => "biased-seed-trace",
            SamplingMechanism::PositiveContactTrace { .. } => "positive-contact-trace",
        }
    }

    /// Free parameters θ. Seed counts are design constants, not parameters.
    pub fn theta(&self) -> Vec<f64> {
        match self {
            SamplingMechanism::Mcar {
                dyad_rate,
                attr_rate,
            } => vec![*dyad_rate, *attr_rate],
            _ => Vec::new(),
        }
    }

    pub fn with_theta(&self, theta: &[f64]) -> Result<Self> {
        let expected = self.theta().len();
        if theta.len() != expected {
            return Err(Error::config(format!(
                "{} takes {expected} parameters, got {}",
                self.name(),
                theta.len()
            )));
        }
        let out = match self {
            SamplingMechanism::Mcar { .. } => SamplingMechanism::Mcar {
                dyad_rate: theta[0],
                attr_rate: theta[1],
            },
            other => other.clone(),
        };
        out.check_rates()?;
        Ok(out)
    }

    fn check_rates(&self) -> Result<()> {
        if let SamplingMechanism::Mcar {
            dyad_rate,
            attr_rate,
        } = self
        {
            for r in [dyad_rate, attr_rate] {
                if !(0.0..=1.0).contains(r) {
                    return Err(Error::config(format!("mcar rate {r} outside [0, 1]")));
                }
            }
        }
        Ok(())
    }

    /// Infection variable and infected level of a trace mechanism.
    pub fn infection(&self) -> Option<(usize, u32)> {
        match self {
            SamplingMechanism::BiasedSeedTrace {
                var,
                infected_level,
                ..
            }
            | SamplingMechanism::PositiveContactTrace {
                var,
                infected_level,
                ..
            } => Some((*var, *infected_level)),
            _ => None,
        }
    }

    fn seeds(&self) -> Option<(usize, usize)> {
        match self {
            SamplingMechanism::BiasedSeedTrace {
                seeds_infected,
                seeds_uninfected,
                ..
            }
            | SamplingMechanism::PositiveContactTrace {
                seeds_infected,
                seeds_uninfected,
                ..
            } => Some((*seeds_infected, *seeds_uninfected)),
            _ => None,
        }
    }

    pub fn validate(&self, net: &Network) -> Result<()> {
        self.check_rates()?;
        let var = match self {
            SamplingMechanism::LatentAttributes { var } => Some(*var),
            _ => self.infection().map(|(v, _)| v),
        };
        if let Some(var) = var {
            if var >= net.variables().len() {
                return Err(Error::config(format!(
                    "{} references variable {var}",
                    self.name()
                )));
            }
        }
        if let Some((var, level)) = self.infection() {
            if net.levels(var) != 2 {
                return Err(Error::config(format!(
                    "infection variable '{}' must be binary",
                    net.variables()[var].name
                )));
            }
            if level > 1 {
                return Err(Error::config(format!(
                    "infected level {level} is not binary"
                )));
            }
        }
        Ok(())
    }

    pub fn summarize(&self, w: &ObservationPattern, t: &Network) -> MechanismSummary {
        let Some((var, level)) = self.infection() else {
            return MechanismSummary::default();
        };
        let infected = t.attr_column(var).iter().filter(|&&x| x == level).count();
        let mut traced = vec![false; t.n()];
        for v in w.traced_nodes() {
            traced[v] = true;
        }
        let mut violations = 0;
        for i in 0..t.n() {
            for j in t.alters(i).filter(|&j| j > i) {
                if pair_violates(t, &traced, var, level, i, j) {
                    violations += 1;
                }
            }
        }
        MechanismSummary {
            infected,
            uninfected: t.n() - infected,
            violations,
        }
    }

    pub fn log_weight_summary(&self, s: &MechanismSummary) -> f64 {
        let Some((si, su)) = self.seeds() else {
            return 0.0;
        };
        if matches!(self, SamplingMechanism::PositiveContactTrace { .. }) && s.violations > 0 {
            return f64::NEG_INFINITY;
        }
        log_falling_factorial_ratio(s.infected, si) + log_falling_factorial_ratio(s.uninfected, su)
    }

    /// `log p(w | t, θ)` up to a constant in the missing part of `t`.
    pub fn log_weight(&self, w: &ObservationPattern, t: &Network) -> f64 {
        if self.is_ignorable() {
            return 0.0;
        }
        self.log_weight_summary(&self.summarize(w, t))
    }
}

fn infected(t: &Network, var: usize, level: u32, v: usize) -> bool {
    t.attr(v, var) == level
}

fn pair_violates(t: &Network, traced: &[bool], var: usize, level: u32, i: usize, j: usize) -> bool {
    if t.multiplicity(i, j) == 0 || !infected(t, var, level, i) || !infected(t, var, level, j) {
        return false;
    }
    traced[i] != traced[j]
}

/// Keeps a [`MechanismSummary`] current while a sampler mutates the network.
#[derive(Debug, Clone)]
pub struct MechanismTracker {
    var: usize,
    level: u32,
    traced: Vec<bool>,
    summary: MechanismSummary,
    nodes: Vec<usize>,
}

impl MechanismTracker {
    /// `None` for mechanisms whose weight does not depend on the network.
    pub fn new(mech: &SamplingMechanism, w: &ObservationPattern, t: &Network) -> Option<Self> {
        let (var, level) = mech.infection()?;
        let mut traced = vec![false; t.n()];
        for v in w.traced_nodes() {
            traced[v] = true;
        }
        Some(MechanismTracker {
            var,
            level,
            traced,
            summary: mech.summarize(w, t),
            nodes: Vec::new(),
        })
    }

    pub fn summary(&self) -> MechanismSummary {
        self.summary
    }

    pub fn set_summary(&mut self, s: MechanismSummary) {
        self.summary = s;
    }

    /// Contribution of the part of `t` touched by `moves`; call on the state
    /// before and after the moves and pass both to [`update`](Self::update).
    /// `alters(v)` lists the nodes tied to `v` in either direction.
    pub fn local<'a>(
        &mut self,
        t: &Network,
        alters: impl Fn(usize) -> &'a [usize],
        moves: &[Move],
    ) -> (i64, i64) {
        let mut inf = 0i64;
        let mut viol = 0i64;
        self.nodes.clear();
        for &mv in moves {
            match mv {
                Move::Toggle(i, j) => {
                    if pair_violates(t, &self.traced, self.var, self.level, i, j) {
                        viol += 1;
                    }
                }
                Move::SetAttr { node, var, .. } if var == self.var => self.nodes.push(node),
                Move::SetAttr { .. } => {}
            }
        }
        self.nodes.sort_unstable();
        self.nodes.dedup();
        for (a, &v) in self.nodes.iter().enumerate() {
            if infected(t, self.var, self.level, v) {
                inf += 1;
            }
            for &u in alters(v) {
                // pairs inside the touched set are counted once
                if self.nodes[..a].contains(&u) {
                    continue;
                }
                if pair_violates(t, &self.traced, self.var, self.level, v, u) {
                    viol += 1;
                }
            }
        }
        (inf, viol)
    }

    /// Summary after toggling `(i, j)` in `t`, without recording it.
    pub fn peek_toggle(&self, t: &Network, i: usize, j: usize) -> MechanismSummary {
        let mut s = self.summary;
        let inf = |v| infected(t, self.var, self.level, v);
        if inf(i) && inf(j) && self.traced[i] != self.traced[j] {
            let before = t.multiplicity(i, j) > 0;
            let after = if t.has_edge(i, j) {
                t.multiplicity(i, j) > 1
            } else {
                true
            };
            match (before, after) {
                (false, true) => s.violations += 1,
                (true, false) => s.violations -= 1,
                _ => {}
            }
        }
        s
    }

    pub fn update(&mut self, n: usize, before: (i64, i64), after: (i64, i64)) -> MechanismSummary {
        let infected = (self.summary.infected as i64 + after.0 - before.0) as usize;
        self.summary = MechanismSummary {
            infected,
            uninfected: n - infected,
            violations: (self.summary.violations as i64 + after.1 - before.1) as usize,
        };
        self.summary
    }
}

/// Mask each dyad with probability `dyad_rate` and each attribute entry with
/// probability `attr_rate`. Returns the pattern and the observed network.
pub fn simulate_mcar(
    net: &Network,
    dyad_rate: f64,
    attr_rate: f64,
    seed: u64,
) -> Result<(ObservationPattern, Network)> {
    SamplingMechanism::Mcar {
        dyad_rate,
        attr_rate,
    }
    .check_rates()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = ObservationPattern::fully_observed(net);
    for (i, j) in net.dyads() {
        if rng.random::<f64>() < dyad_rate {
            w.set_dyad_observed(i, j, false);
        }
    }
    for var in 0..net.variables().len() {
        for node in 0..net.n() {
            if rng.random::<f64>() < attr_rate {
                w.set_attr_observed(node, var, false);
            }
        }
    }
    let obs = w.mask(net);
    Ok((w, obs))
}

/// Graph fully observed, variable `var` entirely latent.
pub fn simulate_latent(net: &Network, var: usize) -> Result<(ObservationPattern, Network)> {
    SamplingMechanism::LatentAttributes { var }.validate(net)?;
    let mut w = ObservationPattern::fully_observed(net);
    w.hide_variable(var);
    let obs = w.mask(net);
    Ok((w, obs))
}

fn observe_node(w: &mut ObservationPattern, net: &Network, v: usize, var: usize) {
    w.set_attr_observed(v, var, true);
    for u in 0..net.n() {
        if u != v {
            w.set_dyad_observed(v, u, true);
            if net.is_directed() {
                w.set_dyad_observed(u, v, true);
            }
        }
    }
}

/// Positive contact tracing from `s_i` infected and `s_u` uninfected seeds.
///
/// All seeds are observed (status and incident dyads). Infected seeds are
/// then traced in random order: a traced subject reveals its dyads and the
/// status of its alters, and every infected alter is traced in turn. Wave 0
/// holds the seeds; wave `k` holds subjects first reached at depth `k`.
pub fn simulate_contact_trace(
    net: &Network,
    s_i: usize,
    s_u: usize,
    var: usize,
    infected_level: u32,
    seed: u64,
) -> Result<(ObservationPattern, Network)> {
    let mech = SamplingMechanism::PositiveContactTrace {
        seeds_infected: s_i,
        seeds_uninfected: s_u,
        var,
        infected_level,
    };
    mech.validate(net)?;
    let (inf, uninf): (Vec<usize>, Vec<usize>) =
        (0..net.n()).partition(|&v| net.attr(v, var) == infected_level);
    if inf.len() < s_i || uninf.len() < s_u {
        return Err(Error::config(format!(
            "population has {} infected and {} uninfected nodes; {s_i} and {s_u} seeds requested",
            inf.len(),
            uninf.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = ObservationPattern::nothing_observed(net);
    for v in 0..net.variables().len() {
        if v != var {
            w.hide_variable(v);
        }
    }
    let mut time = 0usize;
    let mut stamp = |item: TraceItem| {
        let e = TraceEntry { item, time };
        time += 1;
        e
    };
    let mut waves: Vec<Wave> = vec![Vec::new()];
    let useeds: Vec<usize> = sample_indices(&mut rng, uninf.len(), s_u)
        .into_iter()
        .map(|k| uninf[k])
        .collect();
    let mut iseeds: Vec<usize> = sample_indices(&mut rng, inf.len(), s_i)
        .into_iter()
        .map(|k| inf[k])
        .collect();
    for &v in useeds.iter().chain(&iseeds) {
        observe_node(&mut w, net, v, var);
        waves[0].push(stamp(TraceItem::Node { node: v }));
    }
    iseeds.shuffle(&mut rng);
    let mut traced = vec![false; net.n()];
    for &s in &iseeds {
        if traced[s] {
            continue;
        }
        traced[s] = true;
        let mut frontier = vec![s];
        let mut depth = 0;
        while !frontier.is_empty() {
            let mut next = Vec::new();
            for &v in &frontier {
                observe_node(&mut w, net, v, var);
                let mut alters: Vec<usize> = net.alters(v).collect();
                alters.sort_unstable();
                for u in alters {
                    w.set_attr_observed(u, var, true);
                    if net.attr(u, var) == infected_level && !traced[u] {
                        traced[u] = true;
                        if waves.len() <= depth + 1 {
                            waves.push(Vec::new());
                        }
                        let (a, b) = if net.has_edge(v, u) { (v, u) } else { (u, v) };
                        waves[depth + 1].push(stamp(TraceItem::Dyad { from: a, to: b }));
                        waves[depth + 1].push(stamp(TraceItem::Node { node: u }));
                        next.push(u);
                    }
                }
            }
            frontier = next;
            depth += 1;
        }
    }
    w.set_trace(Some(waves));
    let obs = w.mask(net);
    Ok((w, obs))
}

/// Design-based estimates of the population infected count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NaiveEstimates {
    pub sample_infected: usize,
    pub sample_uninfected: usize,
    /// `None` when the denominator is zero.
    pub naive: Option<f64>,
    pub seed_adjusted: Option<f64>,
}

pub fn naive_estimators(
    w: &ObservationPattern,
    t_obs: &Network,
    var: usize,
    infected_level: u32,
    s_i: usize,
    s_u: usize,
) -> NaiveEstimates {
    let n = t_obs.n();
    let (mut ni, mut nu) = (0usize, 0usize);
    for v in 0..n {
        if w.attr_observed(v, var) {
            if t_obs.attr(v, var) == infected_level {
                ni += 1;
            } else {
                nu += 1;
            }
        }
    }
    let naive = (ni + nu > 0).then(|| n as f64 * ni as f64 / (ni + nu) as f64);
    let num = ni as f64 - s_i as f64;
    let den = num + nu as f64 - s_u as f64;
    let seed_adjusted =
        (den != 0.0).then(|| (n as f64 - s_i as f64 - s_u as f64) * num / den + s_i as f64);
    NaiveEstimates {
        sample_infected: ni,
        sample_uninfected: nu,
        naive,
        seed_adjusted,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::Variable;

    #[test]
    fn falling_factorial_ratio() {
        assert_eq!(log_falling_factorial_ratio(5, 0), 0.0);
        assert!((log_falling_factorial_ratio(5, 2) - (1.0f64 / 20.0).ln()).abs() < 1e-12);
        assert_eq!(log_falling_factorial_ratio(2, 3), f64::NEG_INFINITY);
    }

    #[test]
    fn naive_arithmetic() {
        let net = Network::empty(1000, false, vec![Variable::new("inf", 2)]).unwrap();
        let mut w = ObservationPattern::nothing_observed(&net);
        let mut t = net.clone();
        for v in 0..200 {
            w.set_attr_observed(v, 0, true);
            t.set_attr(v, 0, if v < 60 { 0 } else { 1 }).unwrap();
        }
        let est = naive_estimators(&w, &t, 0, 0, 10, 0);
        assert_eq!(est.naive, Some(300.0));
    }

    #[test]
    fn mcar_rates_validated() {
        let net = Network::empty(3, false, vec![]).unwrap();
        assert!(simulate_mcar(&net, 1.5, 0.0, 1).is_err());
    }
}

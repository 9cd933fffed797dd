//! Brute-force oracles shared by the integration tests. Everything here works
//! by enumeration and never calls the incremental or MCMC code paths.

#![allow(dead_code)]

use ernm::mechanisms::simulate_contact_trace;
use ernm::{
    compute_statistics, ModelSpec, Network, ObservationPattern, SamplingMechanism, Term, Variable,
};

/// All distinct arrangements of a label multiset.
pub fn multiset_permutations(labels: &[u32]) -> Vec<Vec<u32>> {
    let mut sorted = labels.to_vec();
    sorted.sort_unstable();
    let mut out = vec![sorted.clone()];
    // lexicographic next-permutation
    loop {
        let n = sorted.len();
        let Some(i) = (0..n.saturating_sub(1))
            .rev()
            .find(|&i| sorted[i] < sorted[i + 1])
        else {
            break;
        };
        let j = (i + 1..n).rev().find(|&j| sorted[j] > sorted[i]).unwrap();
        sorted.swap(i, j);
        sorted[i + 1..].reverse();
        out.push(sorted.clone());
    }
    out
}

fn sqrt_same(net: &Network, labels: &[u32], i: usize) -> f64 {
    let d: u32 = (0..net.n())
        .filter(|&j| j != i && labels[j] == labels[i])
        .map(|j| net.multiplicity(i, j))
        .sum();
    (d as f64).sqrt()
}

/// Homophily with the centering term computed by enumerating every label
/// arrangement with the observed counts and conditioning on each node's own label.
pub fn homophily_by_permutation(net: &Network, var: usize) -> f64 {
    let labels = net.attr_column(var).to_vec();
    let perms = multiset_permutations(&labels);
    let n = net.n();
    let mut total = 0.0;
    for i in 0..n {
        let mut acc = 0.0;
        let mut count = 0usize;
        for p in perms.iter().filter(|p| p[i] == labels[i]) {
            acc += sqrt_same(net, p, i);
            count += 1;
        }
        total += sqrt_same(net, &labels, i) - acc / count as f64;
    }
    total
}

/// Two disjoint triangles on six nodes, labelled by triangle.
pub fn two_triangles(directed: bool) -> Network {
    let mut net = Network::empty(6, directed, vec![Variable::new("x", 2)]).unwrap();
    for &(i, j) in &[(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5)] {
        net.set_edge(i, j, true).unwrap();
    }
    net.set_attr_column(0, &[0, 0, 0, 1, 1, 1]).unwrap();
    net
}

/// Every network on `n` nodes with the given variables, in a fixed order.
pub fn all_networks(n: usize, directed: bool, variables: &[Variable]) -> Vec<Network> {
    let base = Network::empty(n, directed, variables.to_vec()).unwrap();
    let dyads: Vec<_> = base.dyads().collect();
    let attr_slots: Vec<(usize, usize, u32)> = variables
        .iter()
        .enumerate()
        .flat_map(|(v, var)| (0..n).map(move |i| (i, v, var.levels)))
        .collect();
    let attr_states: u64 = attr_slots.iter().map(|s| s.2 as u64).product();
    let mut out = Vec::new();
    for mask in 0u64..(1u64 << dyads.len()) {
        let mut net = base.clone();
        for (b, &(i, j)) in dyads.iter().enumerate() {
            if mask >> b & 1 == 1 {
                net.set_edge(i, j, true).unwrap();
            }
        }
        for mut code in 0..attr_states {
            let mut full = net.clone();
            for &(i, v, levels) in &attr_slots {
                full.set_attr(i, v, (code % levels as u64) as u32).unwrap();
                code /= levels as u64;
            }
            out.push(full);
        }
    }
    out
}

/// Distinct statistic vectors with multiplicities over a state list.
pub fn statistic_histogram(states: &[Network], spec: &ModelSpec) -> Vec<(Vec<f64>, f64)> {
    let mut hist: Vec<(Vec<f64>, f64)> = Vec::new();
    let mut keyed: std::collections::BTreeMap<Vec<i64>, usize> = Default::default();
    for s in states {
        let g = compute_statistics(s, spec).unwrap();
        let key: Vec<i64> = g.iter().map(|x| (x * 1e9).round() as i64).collect();
        match keyed.get(&key) {
            Some(&k) => hist[k].1 += 1.0,
            None => {
                keyed.insert(key, hist.len());
                hist.push((g, 1.0));
            }
        }
    }
    hist
}

pub fn log_sum_exp(xs: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = xs.collect();
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// `log sum_t mult(t) exp(eta . g(t))` over a histogram.
pub fn log_partition(hist: &[(Vec<f64>, f64)], eta: &[f64]) -> f64 {
    log_sum_exp(hist.iter().map(|(g, c)| c.ln() + dot(eta, g)))
}

/// Exact moments `E(g)` over a histogram at `eta`.
pub fn exact_mean(hist: &[(Vec<f64>, f64)], eta: &[f64]) -> Vec<f64> {
    let lz = log_partition(hist, eta);
    let q = eta.len();
    let mut mean = vec![0.0; q];
    for (g, c) in hist {
        let p = (c.ln() + dot(eta, g) - lz).exp();
        for k in 0..q {
            mean[k] += p * g[k];
        }
    }
    mean
}

pub fn exact_cov(hist: &[(Vec<f64>, f64)], eta: &[f64]) -> Vec<Vec<f64>> {
    let lz = log_partition(hist, eta);
    let mu = exact_mean(hist, eta);
    let q = eta.len();
    let mut cov = vec![vec![0.0; q]; q];
    for (g, c) in hist {
        let p = (c.ln() + dot(eta, g) - lz).exp();
        for a in 0..q {
            for b in 0..q {
                cov[a][b] += p * (g[a] - mu[a]) * (g[b] - mu[b]);
            }
        }
    }
    cov
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Exact observed-data log-likelihood (up to a constant) from the
/// histograms of complete networks consistent with the observed data and of
/// all networks.
pub fn exact_loglik(obs: &[(Vec<f64>, f64)], all: &[(Vec<f64>, f64)], eta: &[f64]) -> f64 {
    log_partition(obs, eta) - log_partition(all, eta)
}

/// Grid-refined maximizer of `f` over a box: coarse grid, then repeated
/// local refinement down to `final_step`.
pub fn grid_maximize(
    f: &dyn Fn(&[f64]) -> f64,
    lo: &[f64],
    hi: &[f64],
    final_step: f64,
) -> Vec<f64> {
    let q = lo.len();
    let mut step: Vec<f64> = lo.iter().zip(hi).map(|(a, b)| (b - a) / 20.0).collect();
    let mut best: Vec<f64> = lo.iter().zip(hi).map(|(a, b)| 0.5 * (a + b)).collect();
    let mut center = best.clone();
    let mut half: Vec<usize> = vec![10; q];
    loop {
        let mut best_val = f64::NEG_INFINITY;
        let mut idx = vec![0usize; q];
        let counts: Vec<usize> = half.iter().map(|h| 2 * h + 1).collect();
        'grid: loop {
            let point: Vec<f64> = (0..q)
                .map(|k| center[k] + (idx[k] as f64 - half[k] as f64) * step[k])
                .collect();
            let v = f(&point);
            if v > best_val {
                best_val = v;
                best = point;
            }
            for k in 0..q {
                idx[k] += 1;
                if idx[k] < counts[k] {
                    continue 'grid;
                }
                idx[k] = 0;
            }
            break;
        }
        if step.iter().all(|&s| s <= final_step + 1e-12) {
            return best;
        }
        center = best.clone();
        for s in step.iter_mut() {
            *s = (*s / 4.0).max(final_step);
        }
        half = vec![6; q];
    }
}

/// Batch-means standard error of the mean of a correlated series.
pub fn batch_means_se(xs: &[f64]) -> f64 {
    let batches = 50usize.min(xs.len());
    let size = xs.len() / batches;
    let means: Vec<f64> = (0..batches)
        .map(|b| xs[b * size..(b + 1) * size].iter().sum::<f64>() / size as f64)
        .collect();
    let grand = means.iter().sum::<f64>() / batches as f64;
    let var = means.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / (batches - 1) as f64;
    (var / batches as f64).sqrt()
}

pub fn column(stats: &[Vec<f64>], k: usize) -> Vec<f64> {
    stats.iter().map(|g| g[k]).collect()
}

/// A fully enumerable partially observed instance with its exact MLE.
pub struct OracleInstance {
    pub spec: ModelSpec,
    pub t_obs: Network,
    pub w: ObservationPattern,
    pub mle: Vec<f64>,
}

/// Histogram of the complete networks that agree with the observed part.
pub fn consistent_histogram(
    states: &[Network],
    t_obs: &Network,
    w: &ObservationPattern,
    spec: &ModelSpec,
) -> Vec<(Vec<f64>, f64)> {
    let keep: Vec<Network> = states
        .iter()
        .filter(|s| {
            t_obs
                .dyads()
                .all(|(i, j)| !w.dyad_observed(i, j) || s.has_edge(i, j) == t_obs.has_edge(i, j))
                && (0..s.n()).all(|v| {
                    (0..s.variables().len())
                        .all(|k| !w.attr_observed(v, k) || s.attr(v, k) == t_obs.attr(v, k))
                })
        })
        .cloned()
        .collect();
    statistic_histogram(&keep, spec)
}

/// Ten small instances with mixed missingness whose exact observed-data
/// MLE lies well inside `[-4, 4]^q`.
pub fn oracle_instances() -> Vec<OracleInstance> {
    use rand::{Rng, SeedableRng};
    let vars = vec![Variable::new("x", 2)];
    let mut out = Vec::new();
    let mut seed = 0u64;
    while out.len() < 10 {
        seed += 1;
        assert!(seed < 2000, "too few instances with an interior MLE");
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let directed = out.len() % 2 == 0;
        let n = if out.len() % 3 == 2 { 3 } else { 4 };
        let spec = if out.len() % 2 == 0 {
            ModelSpec::new(
                vec![Term::Edges, Term::GroupCount { var: 0, level: 0 }],
                vec![0.0; 2],
            )
            .unwrap()
        } else {
            let homophily = Term::Homophily {
                var: 0,
                centering: ernm::Centering::Exact,
            };
            ModelSpec::new(vec![Term::Edges, homophily], vec![0.0; 2]).unwrap()
        };
        let q = spec.q();
        let mut t = Network::empty(n, directed, vars.clone()).unwrap();
        let pairs: Vec<_> = t.dyads().collect();
        for (i, j) in pairs {
            t.set_edge(i, j, rng.random_bool(0.45)).unwrap();
        }
        for v in 0..n {
            t.set_attr(v, 0, rng.random_range(0..2)).unwrap();
        }
        let mut w = ObservationPattern::fully_observed(&t);
        let pairs: Vec<_> = t.dyads().collect();
        for (i, j) in pairs {
            if rng.random_bool(0.3) {
                w.set_dyad_observed(i, j, false);
            }
        }
        for v in 0..n {
            if rng.random_bool(0.3) {
                w.set_attr_observed(v, 0, false);
            }
        }
        if w.unobserved_count() == 0 {
            continue;
        }
        let t_obs = w.mask(&t);
        let states = all_networks(n, directed, &vars);
        let all = statistic_histogram(&states, &spec);
        let obs = consistent_histogram(&states, &t_obs, &w, &spec);
        let f = |eta: &[f64]| exact_loglik(&obs, &all, eta);
        let mle = grid_maximize(&f, &vec![-4.0; q], &vec![4.0; q], 1e-3);
        if mle.iter().any(|x| x.abs() > 2.5) {
            continue;
        }
        // require a well-identified maximum: observed information safely positive
        let (ca, co) = (exact_cov(&all, &mle), exact_cov(&obs, &mle));
        let info = nalgebra::DMatrix::from_fn(q, q, |a, b| ca[a][b] - co[a][b]);
        if info.symmetric_eigen().eigenvalues.min() < 0.05 {
            continue;
        }
        out.push(OracleInstance {
            spec,
            t_obs,
            w,
            mle,
        });
    }
    out
}

/// n = 20 population whose infected nodes form one traced path; the hidden
/// part is a few statuses and the dyads among untraced uninfected nodes.
pub fn traced_path() -> (ModelSpec, Network, ObservationPattern, SamplingMechanism) {
    let mut t = Network::empty(20, false, vec![Variable::new("infected", 2)]).unwrap();
    let labels: Vec<u32> = (0..20).map(|v| u32::from(v >= 17)).collect();
    t.set_attr_column(0, &labels).unwrap();
    for v in 0..16 {
        t.set_edge(v, v + 1, true).unwrap();
    }
    t.set_edge(16, 19, true).unwrap();
    t.set_edge(17, 18, true).unwrap();
    let (w, t_obs) = simulate_contact_trace(&t, 1, 0, 0, 0, 3).unwrap();
    assert_eq!(w.unobserved_count(), 5);
    let spec = ModelSpec::new(
        vec![Term::Edges, Term::GroupCount { var: 0, level: 0 }],
        vec![-2.5, 0.3],
    )
    .unwrap();
    let mech = SamplingMechanism::BiasedSeedTrace {
        seeds_infected: 1,
        seeds_uninfected: 0,
        var: 0,
        infected_level: 0,
    };
    (spec, t_obs, w, mech)
}

pub fn hidden_completions(t_obs: &Network, w: &ObservationPattern) -> Vec<Network> {
    let dyads = w.unobserved_dyads();
    let attrs = w.unobserved_attrs();
    let bits = dyads.len() + attrs.len();
    (0u32..1 << bits)
        .map(|mask| {
            let mut t = t_obs.clone();
            for (b, &(i, j)) in dyads.iter().enumerate() {
                t.set_edge(i, j, mask >> b & 1 == 1).unwrap();
            }
            for (b, &(v, var)) in attrs.iter().enumerate() {
                t.set_attr(v, var, mask >> (dyads.len() + b) & 1).unwrap();
            }
            t
        })
        .collect()
}

/// Observed-data log-likelihood with the normalizer in closed form.
pub fn traced_path_loglik(
    spec: &ModelSpec,
    t_obs: &Network,
    w: &ObservationPattern,
    mech: &SamplingMechanism,
    eta: &[f64],
) -> f64 {
    let d = t_obs.dyad_count() as f64;
    let log_z = d * eta[0].exp().ln_1p() + t_obs.n() as f64 * eta[1].exp().ln_1p();
    let terms = hidden_completions(t_obs, w)
        .into_iter()
        .map(|t| dot(eta, &compute_statistics(&t, spec).unwrap()) + mech.log_weight(w, &t));
    log_sum_exp(terms) - log_z
}

pub fn traced_path_conditional_mean(
    spec: &ModelSpec,
    t_obs: &Network,
    w: &ObservationPattern,
    mech: &SamplingMechanism,
) -> Vec<f64> {
    let all = hidden_completions(t_obs, w);
    let lp: Vec<f64> = all
        .iter()
        .map(|t| dot(spec.eta(), &compute_statistics(t, spec).unwrap()) + mech.log_weight(w, t))
        .collect();
    let lz = log_sum_exp(lp.iter().cloned());
    let mut mean = vec![0.0; spec.q()];
    for (t, l) in all.iter().zip(&lp) {
        for (m, g) in mean.iter_mut().zip(compute_statistics(t, spec).unwrap()) {
            *m += (l - lz).exp() * g;
        }
    }
    mean
}

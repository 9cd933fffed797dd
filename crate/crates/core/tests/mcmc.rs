mod common;

use ernm::mechanisms::simulate_contact_trace;
use ernm::{
    compute_statistics, sample_conditional, sample_full, ChainConfig, ModelSpec, Network,
    ObservationPattern, Sampler, SamplingMechanism, Term, Variable,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::*;

fn binary() -> Vec<Variable> {
    vec![Variable::new("x", 2)]
}

fn assert_means_within(stats: &[Vec<f64>], exact: &[f64], sigmas: f64) {
    for (k, &want) in exact.iter().enumerate() {
        let xs = column(stats, k);
        let got = xs.iter().sum::<f64>() / xs.len() as f64;
        let se = batch_means_se(&xs).max(1e-9);
        assert!(
            (got - want).abs() < sigmas * se,
            "component {k}: {got} vs {want} (se {se})"
        );
    }
}

#[test]
fn full_sampler_matches_enumeration_n3_undirected() {
    let spec = ModelSpec::simple_homophily(0, 2, vec![-0.3, 0.8, 0.4]).unwrap();
    let states = all_networks(3, false, &binary());
    let hist = statistic_histogram(&states, &spec);
    let exact = exact_mean(&hist, spec.eta());
    let cfg = ChainConfig {
        samples: 20_000,
        seed: 11,
        ..Default::default()
    };
    let batch = sample_full(&spec, &states[0], &cfg).unwrap();
    assert_eq!(batch.len(), 20_000);
    assert_means_within(&batch.stats, &exact, 3.5);
}

#[test]
fn full_sampler_matches_enumeration_n4_directed() {
    let spec = ModelSpec::simple_homophily(0, 2, vec![0.5, 1.0, 0.0]).unwrap();
    let states = all_networks(4, true, &binary());
    let hist = statistic_histogram(&states, &spec);
    let exact = exact_mean(&hist, spec.eta());
    let cfg = ChainConfig {
        samples: 20_000,
        seed: 12,
        ..Default::default()
    };
    let batch = sample_full(&spec, &states[0], &cfg).unwrap();
    assert_means_within(&batch.stats, &exact, 3.5);
}

#[test]
fn labelled_state_frequencies_match_enumeration() {
    let spec = ModelSpec::simple_homophily(0, 2, vec![-0.2, 0.7, 0.3]).unwrap();
    let states = all_networks(3, true, &binary());
    assert_eq!(states.len(), 512);
    let key = |net: &Network| format!("{:?}|{:?}", net.edges(), net.attr_column(0));
    let index: std::collections::HashMap<String, usize> = states
        .iter()
        .enumerate()
        .map(|(i, s)| (key(s), i))
        .collect();
    let logp: Vec<f64> = states
        .iter()
        .map(|s| dot(spec.eta(), &compute_statistics(s, &spec).unwrap()))
        .collect();
    let lz = log_sum_exp(logp.iter().cloned());
    let cfg = ChainConfig {
        samples: 200_000,
        burn_in: Some(1000),
        thinning: Some(3),
        keep_networks: true,
        seed: 13,
        ..Default::default()
    };
    let batch = sample_full(&spec, &states[0], &cfg).unwrap();
    let mut counts = vec![0usize; states.len()];
    for net in batch.networks.as_ref().unwrap() {
        counts[index[&key(net)]] += 1;
    }
    let m = batch.len() as f64;
    let tv: f64 = counts
        .iter()
        .zip(&logp)
        .map(|(&c, &lp)| (c as f64 / m - (lp - lz).exp()).abs())
        .sum::<f64>()
        / 2.0;
    assert!(tv < 0.03, "tv {tv}");
}

/// Network on `n` nodes with a handful of observed edges and hidden parts.
fn partial_instance() -> (Network, ObservationPattern) {
    let mut t = Network::empty(4, true, binary()).unwrap();
    t.set_attr_column(0, &[0, 1, 1, 0]).unwrap();
    t.set_edge(0, 1, true).unwrap();
    t.set_edge(2, 3, true).unwrap();
    t.set_edge(3, 0, true).unwrap();
    let mut w = ObservationPattern::fully_observed(&t);
    for &(i, j) in &[(0, 2), (1, 2), (2, 1), (3, 1), (1, 3)] {
        w.set_dyad_observed(i, j, false);
    }
    w.set_attr_observed(2, 0, false);
    w.set_attr_observed(3, 0, false);
    (w.mask(&t), w)
}

/// Every completion of the hidden part of `t_obs`.
fn completions(t_obs: &Network, w: &ObservationPattern) -> Vec<Network> {
    let dyads = w.unobserved_dyads();
    let attrs = w.unobserved_attrs();
    let levels: Vec<u32> = attrs.iter().map(|&(_, v)| t_obs.levels(v)).collect();
    let attr_states: u64 = levels.iter().map(|&l| l as u64).product();
    let mut out = Vec::new();
    for mask in 0u64..(1 << dyads.len()) {
        for code in 0..attr_states {
            let mut t = t_obs.clone();
            for (b, &(i, j)) in dyads.iter().enumerate() {
                t.set_edge(i, j, mask >> b & 1 == 1).unwrap();
            }
            let mut c = code;
            for (&(node, var), &l) in attrs.iter().zip(&levels) {
                t.set_attr(node, var, (c % l as u64) as u32).unwrap();
                c /= l as u64;
            }
            out.push(t);
        }
    }
    out
}

#[test]
fn conditional_sampler_matches_enumeration() {
    let spec = ModelSpec::simple_homophily(0, 2, vec![0.2, 1.2, -0.5]).unwrap();
    let (t_obs, w) = partial_instance();
    let hist = statistic_histogram(&completions(&t_obs, &w), &spec);
    let exact = exact_mean(&hist, spec.eta());
    let cfg = ChainConfig {
        samples: 20_000,
        seed: 14,
        ..Default::default()
    };
    let batch = sample_conditional(&spec, &t_obs, &w, &SamplingMechanism::Ignorable, &cfg).unwrap();
    assert!(batch.log_weights.is_none());
    assert_means_within(&batch.stats, &exact, 3.5);
    // observed parts never move
    let cfg = ChainConfig {
        samples: 300,
        keep_networks: true,
        ..cfg
    };
    let batch = sample_conditional(&spec, &t_obs, &w, &SamplingMechanism::Ignorable, &cfg).unwrap();
    for net in batch.networks.unwrap() {
        for (i, j) in t_obs.dyads() {
            if w.dyad_observed(i, j) {
                assert_eq!(net.has_edge(i, j), t_obs.has_edge(i, j));
            }
        }
        assert_eq!(net.attr(0, 0), 0);
        assert_eq!(net.attr(1, 0), 1);
    }
}

fn trace_toy() -> (Network, ObservationPattern, SamplingMechanism) {
    let mut t = Network::empty(7, false, vec![Variable::new("infected", 2)]).unwrap();
    t.set_attr_column(0, &[0, 0, 1, 0, 1, 0, 1]).unwrap();
    for &(i, j) in &[(0, 1), (1, 2), (3, 4), (4, 5), (5, 6), (2, 6)] {
        t.set_edge(i, j, true).unwrap();
    }
    let (w, t_obs) = (0..)
        .map(|seed| simulate_contact_trace(&t, 1, 1, 0, 0, seed).unwrap())
        .find(|(w, _)| (2..=12).contains(&(w.unobserved_count())))
        .unwrap();
    let mech = SamplingMechanism::PositiveContactTrace {
        seeds_infected: 1,
        seeds_uninfected: 1,
        var: 0,
        infected_level: 0,
    };
    (t_obs, w, mech)
}

#[test]
fn weighted_sampler_targets_mechanism_adjusted_distribution() {
    let spec = ModelSpec::new(
        vec![Term::Edges, Term::GroupCount { var: 0, level: 0 }],
        vec![-0.6, 0.4],
    )
    .unwrap();
    let (t_obs, w, mech) = trace_toy();
    let all = completions(&t_obs, &w);
    let logp: Vec<f64> = all
        .iter()
        .map(|t| dot(spec.eta(), &compute_statistics(t, &spec).unwrap()) + mech.log_weight(&w, t))
        .collect();
    let lz = log_sum_exp(logp.iter().cloned());
    let mut exact = vec![0.0; 2];
    for (t, lp) in all.iter().zip(&logp) {
        let g = compute_statistics(t, &spec).unwrap();
        let p = (lp - lz).exp();
        exact[0] += p * g[0];
        exact[1] += p * g[1];
    }
    let cfg = ChainConfig {
        samples: 20_000,
        seed: 15,
        ..Default::default()
    };
    let batch = sample_conditional(&spec, &t_obs, &w, &mech, &cfg).unwrap();
    let lw = batch.log_weights.as_ref().unwrap();
    assert!(lw.iter().all(|x| x.is_finite()));
    assert_means_within(&batch.stats, &exact, 3.5);
}

#[test]
fn same_seed_same_samples() {
    let spec = ModelSpec::simple_homophily(0, 3, vec![-1.0, 0.5, 0.2, 0.1]).unwrap();
    let net = Network::empty(8, false, vec![Variable::new("x", 3)]).unwrap();
    let cfg = ChainConfig {
        samples: 200,
        chains: 3,
        seed: 99,
        ..Default::default()
    };
    let a = sample_full(&spec, &net, &cfg).unwrap();
    let b = sample_full(&spec, &net, &cfg).unwrap();
    assert_eq!(a, b);
    let c = sample_full(&spec, &net, &ChainConfig { seed: 100, ..cfg }).unwrap();
    assert_ne!(a.stats, c.stats);
}

#[test]
fn warm_started_sampler_continues_from_its_state() {
    let spec = ModelSpec::simple_homophily(0, 2, vec![-0.5, 0.5, 0.0]).unwrap();
    let net = Network::empty(10, false, binary()).unwrap();
    let cfg = ChainConfig {
        samples: 50,
        seed: 5,
        ..Default::default()
    };
    let mut s = Sampler::full(&spec, &net, &cfg).unwrap();
    let first = s.run(spec.eta()).unwrap();
    let state = s.state(0).clone();
    let recomputed = compute_statistics(&state, &spec).unwrap();
    for (a, b) in recomputed.iter().zip(first.stats.last().unwrap()) {
        assert!((a - b).abs() < 1e-9);
    }
    let second = s.run(spec.eta()).unwrap();
    assert_ne!(first.stats, second.stats);
    assert!(s.run(&[0.0]).is_err());
}

#[test]
fn fixed_counts_are_preserved() {
    let spec = ModelSpec::simple_homophily(0, 3, vec![-1.0, 1.0, 0.0, 0.0]).unwrap();
    let mut net = Network::empty(12, false, vec![Variable::new("x", 3)]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let labels: Vec<u32> = (0..12).map(|_| rng.random_range(0..3)).collect();
    net.set_attr_column(0, &labels).unwrap();
    let want = net.level_counts(0);
    let cfg = ChainConfig {
        samples: 200,
        keep_networks: true,
        fixed_attribute_counts: true,
        seed: 3,
        ..Default::default()
    };
    let batch = sample_full(&spec, &net, &cfg).unwrap();
    let nets = batch.networks.unwrap();
    assert!(nets.iter().all(|t| t.level_counts(0) == want));
    assert!(nets.iter().any(|t| t.attr_column(0) != labels.as_slice()));
}

#[test]
fn diagnostics_are_written() {
    let spec = ModelSpec::simple_homophily(0, 2, vec![-0.5, 0.5, 0.0]).unwrap();
    let net = Network::empty(6, false, binary()).unwrap();
    let cfg = ChainConfig {
        samples: 40,
        chains: 2,
        ..Default::default()
    };
    let batch = sample_full(&spec, &net, &cfg).unwrap();
    let labels = spec.labels(net.variables());
    let dir = std::env::temp_dir().join(format!("ernm-diag-{}", std::process::id()));
    batch.write_diagnostics(&labels, &dir, "full").unwrap();
    let trace = std::fs::read_to_string(dir.join("full_trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 41);
    assert!(trace
        .lines()
        .next()
        .unwrap()
        .starts_with("sample,chain,edges"));
    let acc = std::fs::read_to_string(dir.join("full_acceptance.csv")).unwrap();
    assert_eq!(acc.lines().count(), 3);
    for d in &batch.diagnostics {
        let r = d.acceptance_rate();
        assert!((0.0..=1.0).contains(&r) && r > 0.0);
    }
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn extreme_parameters_do_not_fail() {
    let spec = ModelSpec::simple_homophily(0, 2, vec![40.0, 0.0, 0.0]).unwrap();
    let net = Network::empty(6, false, binary()).unwrap();
    let batch = sample_full(
        &spec,
        &net,
        &ChainConfig {
            samples: 20,
            ..Default::default()
        },
    )
    .unwrap();
    assert!(batch.stats.iter().skip(5).all(|g| g[0] == 15.0));
}

#[test]
fn invalid_config_is_rejected() {
    let spec = ModelSpec::simple_homophily(0, 2, vec![0.0; 3]).unwrap();
    let net = Network::empty(4, false, binary()).unwrap();
    for cfg in [
        ChainConfig {
            samples: 0,
            ..Default::default()
        },
        ChainConfig {
            dyad_prob: 1.5,
            ..Default::default()
        },
        ChainConfig {
            thinning: Some(0),
            ..Default::default()
        },
    ] {
        assert_eq!(sample_full(&spec, &net, &cfg).unwrap_err().kind(), "config");
    }
}

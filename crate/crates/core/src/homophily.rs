//! Regularized sample homophily.
//!
//! `h(y, x) = sum_i [ sqrt(d_{i,x_i}) - E(sqrt(d_{i,x_i}) | Y = y, n(x), X_i = x_i) ]`
//! where `d_{i,k}` counts edges between `i` and members of group `k` (a mutual
//! directed pair counts twice). The centering expectation is taken under
//! independence of labels and graph given the category counts.
//!
//! Under that null the other `n - 1` labels are a uniform arrangement with
//! `n_k - 1` members of group `k`. Node `i` has `c1` alters joined by one edge
//! and `c2` joined by two, so the numbers `(A, B)` of each falling in group `k`
//! are bivariate hypergeometric and `E sqrt(A + 2B)` is a finite sum.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::network::Network;

/// How the independence expectation is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "method", rename_all = "kebab-case")]
pub enum Centering {
    /// Hypergeometric summation.
    #[default]
    Exact,
    /// Frozen Monte Carlo over `draws` label permutations per node, drawn
    /// from a stream seeded by `seed` (so the statistic stays deterministic).
    Permutation { draws: u32, seed: u64 },
}

/// `ln k!` for `k <= capacity`, built by summing logs.
#[derive(Debug, Clone)]
pub struct LogFactorials {
    table: Vec<f64>,
}

impl LogFactorials {
    pub fn new(capacity: usize) -> Self {
        let mut table = Vec::with_capacity(capacity + 1);
        table.push(0.0);
        let mut acc = 0.0;
        for k in 1..=capacity {
            acc += (k as f64).ln();
            table.push(acc);
        }
        LogFactorials { table }
    }

    #[inline]
    pub fn ln_factorial(&self, k: usize) -> f64 {
        self.table[k]
    }

    #[inline]
    pub fn ln_choose(&self, n: usize, k: usize) -> f64 {
        debug_assert!(k <= n);
        self.table[n] - self.table[k] - self.table[n - k]
    }
}

/// `E sqrt(A + 2B)` for alters profile `(c1, c2)` with `k_same` group members
/// among `others` candidate nodes.
pub fn expected_sqrt_degree(
    lf: &LogFactorials,
    c1: usize,
    c2: usize,
    others: usize,
    k_same: usize,
) -> f64 {
    debug_assert!(c1 + c2 <= others && k_same <= others);
    if k_same == 0 || c1 + c2 == 0 {
        return 0.0;
    }
    let rest = others - c1 - c2;
    let ln_total = lf.ln_choose(others, k_same);
    let mut acc = 0.0;
    for b in 0..=c2.min(k_same) {
        let lb = lf.ln_choose(c2, b);
        for a in 0..=c1.min(k_same - b) {
            let r = k_same - a - b;
            if r > rest {
                continue;
            }
            let d = a + 2 * b;
            if d == 0 {
                continue;
            }
            let lp = lf.ln_choose(c1, a) + lb + lf.ln_choose(rest, r) - ln_total;
            acc += lp.exp() * (d as f64).sqrt();
        }
    }
    acc
}

/// Memoized [`expected_sqrt_degree`] for a fixed node count.
#[derive(Debug, Clone)]
pub struct SqrtDegreeTable {
    others: usize,
    lf: LogFactorials,
    // cache[k_same][c2][c1], NaN when not yet computed
    cache: Vec<Vec<Vec<f64>>>,
}

impl SqrtDegreeTable {
    pub fn new(n: usize) -> Self {
        SqrtDegreeTable {
            others: n - 1,
            lf: LogFactorials::new(n),
            cache: Vec::new(),
        }
    }

    #[inline]
    pub fn get(&mut self, c1: u32, c2: u32, k_same: u32) -> f64 {
        let (c1, c2, k) = (c1 as usize, c2 as usize, k_same as usize);
        if self.cache.len() <= k {
            self.cache.resize(k + 1, Vec::new());
        }
        let by_c2 = &mut self.cache[k];
        if by_c2.len() <= c2 {
            by_c2.resize(c2 + 1, Vec::new());
        }
        let row = &mut by_c2[c2];
        if row.len() <= c1 {
            row.resize(c1 + 1, f64::NAN);
        }
        if row[c1].is_nan() {
            row[c1] = expected_sqrt_degree(&self.lf, c1, c2, self.others, k);
        }
        row[c1]
    }
}

/// Per-node alter profile: (alters with one edge, alters with two edges).
pub fn alter_profile(net: &Network, i: usize) -> (u32, u32) {
    let mut c1 = 0;
    let mut c2 = 0;
    for j in 0..net.n() {
        if j == i {
            continue;
        }
        match net.multiplicity(i, j) {
            1 => c1 += 1,
            2 => c2 += 1,
            _ => {}
        }
    }
    (c1, c2)
}

/// Edges between `i` and nodes whose label (under `labels`) equals `k`.
pub fn same_group_edges(net: &Network, labels: &[u32], i: usize, k: u32) -> u32 {
    (0..net.n())
        .filter(|&j| j != i && labels[j] == k)
        .map(|j| net.multiplicity(i, j))
        .sum()
}

/// Full evaluation of `h(y, x)` for variable `var`.
pub fn regularized_homophily(net: &Network, var: usize, centering: &Centering) -> f64 {
    let labels = net.attr_column(var);
    let counts = net.level_counts(var);
    let observed: f64 = (0..net.n())
        .map(|i| (same_group_edges(net, labels, i, labels[i]) as f64).sqrt())
        .sum();
    let expected: f64 = match *centering {
        Centering::Exact => {
            let mut table = SqrtDegreeTable::new(net.n());
            (0..net.n())
                .map(|i| {
                    let (c1, c2) = alter_profile(net, i);
                    table.get(c1, c2, counts[labels[i] as usize] as u32 - 1)
                })
                .sum()
        }
        Centering::Permutation { draws, seed } => (0..net.n())
            .map(|i| permutation_expectation(net, labels, i, draws, seed))
            .sum(),
    };
    observed - expected
}

/// Monte Carlo estimate of `E(sqrt(d_{i,x_i}) | X_i = x_i)` from `draws`
/// shuffles of the remaining labels.
fn permutation_expectation(net: &Network, labels: &[u32], i: usize, draws: u32, seed: u64) -> f64 {
    let n = net.n();
    let own = labels[i];
    let alters: Vec<(usize, u32)> = (0..n)
        .filter(|&j| j != i)
        .enumerate()
        .filter_map(|(slot, j)| {
            let m = net.multiplicity(i, j);
            (m > 0).then_some((slot, m))
        })
        .collect();
    if alters.is_empty() || draws == 0 {
        return 0.0;
    }
    let mut pool: Vec<u32> = (0..n).filter(|&j| j != i).map(|j| labels[j]).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(i as u64);
    let mut acc = 0.0;
    for _ in 0..draws {
        pool.shuffle(&mut rng);
        let d: u32 = alters
            .iter()
            .filter(|&&(slot, _)| pool[slot] == own)
            .map(|&(_, m)| m)
            .sum();
        acc += (d as f64).sqrt();
    }
    acc / draws as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::Variable;

    fn binom(n: u64, k: u64) -> f64 {
        (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
    }

    #[test]
    fn hypergeometric_undirected_matches_direct_pmf() {
        let lf = LogFactorials::new(30);
        // draw 4 alters from 20 others with 6 in group
        let direct: f64 = (0..=4u64)
            .map(|a| binom(4, a) * binom(16, 6 - a) / binom(20, 6) * (a as f64).sqrt())
            .sum();
        let got = expected_sqrt_degree(&lf, 4, 0, 20, 6);
        assert!((got - direct).abs() < 1e-12, "{got} vs {direct}");
    }

    #[test]
    fn expected_sqrt_edge_cases() {
        let lf = LogFactorials::new(10);
        assert_eq!(expected_sqrt_degree(&lf, 0, 0, 9, 4), 0.0);
        assert_eq!(expected_sqrt_degree(&lf, 3, 1, 9, 0), 0.0);
        // whole population in the group: D is the full degree
        let full = expected_sqrt_degree(&lf, 2, 1, 9, 9);
        assert!((full - 4f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn two_node_single_edge_is_zero() {
        let mut net = Network::empty(2, false, vec![Variable::new("x", 2)]).unwrap();
        net.set_edge(0, 1, true).unwrap();
        net.set_attr(1, 0, 1).unwrap();
        assert_eq!(regularized_homophily(&net, 0, &Centering::Exact), 0.0);
    }

    #[test]
    fn empty_graph_is_zero() {
        let net = Network::empty(5, true, vec![Variable::new("x", 3)]).unwrap();
        assert_eq!(regularized_homophily(&net, 0, &Centering::Exact), 0.0);
        let mc = Centering::Permutation { draws: 50, seed: 1 };
        assert_eq!(regularized_homophily(&net, 0, &mc), 0.0);
    }

    #[test]
    fn permutation_path_is_frozen() {
        let mut net = Network::empty(6, true, vec![Variable::new("x", 2)]).unwrap();
        for &(i, j) in &[(0, 1), (1, 0), (2, 3), (4, 5), (0, 4)] {
            net.set_edge(i, j, true).unwrap();
        }
        net.set_attr_column(0, &[0, 0, 1, 1, 0, 1]).unwrap();
        let mc = Centering::Permutation {
            draws: 200,
            seed: 9,
        };
        assert_eq!(
            regularized_homophily(&net, 0, &mc).to_bits(),
            regularized_homophily(&net, 0, &mc).to_bits()
        );
    }
}

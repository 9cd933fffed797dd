//! Incremental change statistics.
//!
//! [`StatTracker`] owns a network and keeps `g(t)` current under single-dyad
//! toggles and single attribute changes, touching only the affected nodes.

use crate::error::{Error, Result};
use crate::homophily::{regularized_homophily, Centering, SqrtDegreeTable};
use crate::model::{compute_statistics, ModelSpec, Term};
use crate::network::Network;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Move {
    Toggle(usize, usize),
    SetAttr { node: usize, var: usize, level: u32 },
}

#[derive(Debug, Clone)]
struct HomophilyState {
    term: usize,
    var: usize,
    counts: Vec<u32>,
    // d[i * m + k]: edges between i and group k
    d: Vec<u32>,
    c1: Vec<u32>,
    c2: Vec<u32>,
    // profiles[k][c2][c1]: nodes in group k with that alter profile
    profiles: Vec<Vec<Vec<u32>>>,
    centers: Vec<f64>,
    sqrt_sum: f64,
    table: SqrtDegreeTable,
}

impl HomophilyState {
    fn build(net: &Network, term: usize, var: usize) -> Self {
        let n = net.n();
        let m = net.levels(var) as usize;
        let labels = net.attr_column(var);
        let counts: Vec<u32> = net
            .level_counts(var)
            .into_iter()
            .map(|c| c as u32)
            .collect();
        let mut d = vec![0u32; n * m];
        let mut c1 = vec![0u32; n];
        let mut c2 = vec![0u32; n];
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let mult = net.multiplicity(i, j);
                d[i * m + labels[j] as usize] += mult;
                match mult {
                    1 => c1[i] += 1,
                    2 => c2[i] += 1,
                    _ => {}
                }
            }
        }
        let mut profiles = vec![Vec::new(); m];
        for i in 0..n {
            bump(&mut profiles[labels[i] as usize], (c1[i], c2[i]));
        }
        let sqrt_sum = (0..n)
            .map(|i| (d[i * m + labels[i] as usize] as f64).sqrt())
            .sum();
        let mut st = HomophilyState {
            term,
            var,
            counts,
            d,
            c1,
            c2,
            profiles,
            centers: vec![0.0; m],
            sqrt_sum,
            table: SqrtDegreeTable::new(n),
        };
        for k in 0..m {
            st.recenter(k);
        }
        st
    }

    fn m(&self) -> usize {
        self.counts.len()
    }

    fn recenter(&mut self, k: usize) {
        let same = self.counts[k].saturating_sub(1);
        let table = &mut self.table;
        let mut acc = 0.0;
        for (c2, row) in self.profiles[k].iter().enumerate() {
            for (c1, &count) in row.iter().enumerate() {
                if count > 0 {
                    acc += count as f64 * table.get(c1 as u32, c2 as u32, same);
                }
            }
        }
        self.centers[k] = acc;
    }

    fn value(&self) -> f64 {
        self.sqrt_sum - self.centers.iter().sum::<f64>()
    }

    fn profile_remove(&mut self, k: usize, p: (u32, u32)) {
        self.profiles[k][p.1 as usize][p.0 as usize] -= 1;
    }

    fn profile_add(&mut self, k: usize, p: (u32, u32)) {
        bump(&mut self.profiles[k], p);
    }

    /// Change in the statistic if the pair multiplicity of `(i, j)` went
    /// from `before` to `after`, without modifying the state.
    fn peek_toggle(&mut self, labels: &[u32], i: usize, j: usize, before: u32, after: u32) -> f64 {
        let m = self.m();
        let mut dv = 0.0;
        for (u, v) in [(i, j), (j, i)] {
            let xu = labels[u] as usize;
            if xu == labels[v] as usize {
                let d = self.d[u * m + xu];
                let nd = if after > before { d + 1 } else { d - 1 };
                dv += (nd as f64).sqrt() - (d as f64).sqrt();
            }
            let (c1, c2) = (self.c1[u], self.c2[u]);
            let (mut n1, mut n2) = (c1, c2);
            match before {
                1 => n1 -= 1,
                2 => n2 -= 1,
                _ => {}
            }
            match after {
                1 => n1 += 1,
                2 => n2 += 1,
                _ => {}
            }
            let same = self.counts[xu] - 1;
            dv -= self.table.get(n1, n2, same) - self.table.get(c1, c2, same);
        }
        dv
    }

    /// Node `i` gains/loses one edge to `j`; `before`/`after` are the pair multiplicities.
    fn edge_changed(&mut self, labels: &[u32], i: usize, j: usize, before: u32, after: u32) {
        let m = self.m();
        let xi = labels[i] as usize;
        let xj = labels[j] as usize;
        let idx = i * m + xj;
        let old_d = self.d[idx];
        self.d[idx] = if after > before { old_d + 1 } else { old_d - 1 };
        if xi == xj {
            self.sqrt_sum += (self.d[idx] as f64).sqrt() - (old_d as f64).sqrt();
        }
        let old_p = (self.c1[i], self.c2[i]);
        let (mut c1, mut c2) = old_p;
        match before {
            1 => c1 -= 1,
            2 => c2 -= 1,
            _ => {}
        }
        match after {
            1 => c1 += 1,
            2 => c2 += 1,
            _ => {}
        }
        self.c1[i] = c1;
        self.c2[i] = c2;
        self.profile_remove(xi, old_p);
        self.profile_add(xi, (c1, c2));
        let same = self.counts[xi] - 1;
        self.centers[xi] += self.table.get(c1, c2, same) - self.table.get(old_p.0, old_p.1, same);
    }
}

#[derive(Debug, Clone)]
enum HomophilyTracker {
    Incremental(HomophilyState),
    Recompute {
        term: usize,
        var: usize,
        centering: Centering,
    },
}

#[derive(Debug, Clone)]
pub struct StatTracker {
    terms: Vec<Term>,
    net: Network,
    stats: Vec<f64>,
    delta: Vec<f64>,
    alters: Vec<Vec<usize>>,
    homophily: Vec<HomophilyTracker>,
    saved_stats: Vec<f64>,
    saved_homophily: Vec<(f64, Vec<f64>)>,
    peek: Vec<f64>,
}

impl StatTracker {
    pub fn new(net: Network, spec: &ModelSpec) -> Result<Self> {
        let stats = compute_statistics(&net, spec)?;
        let terms = spec.terms().to_vec();
        let alters = (0..net.n()).map(|i| net.alters(i).collect()).collect();
        let homophily = terms
            .iter()
            .enumerate()
            .filter_map(|(t, term)| match term {
                Term::Homophily {
                    var,
                    centering: Centering::Exact,
                } => Some(HomophilyTracker::Incremental(HomophilyState::build(
                    &net, t, *var,
                ))),
                Term::Homophily { var, centering } => Some(HomophilyTracker::Recompute {
                    term: t,
                    var: *var,
                    centering: *centering,
                }),
                _ => None,
            })
            .collect();
        let q = stats.len();
        Ok(StatTracker {
            terms,
            net,
            saved_stats: stats.clone(),
            stats,
            delta: vec![0.0; q],
            alters,
            homophily,
            saved_homophily: Vec::new(),
            peek: vec![0.0; q],
        })
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn into_network(self) -> Network {
        self.net
    }

    pub fn stats(&self) -> &[f64] {
        &self.stats
    }

    /// `g(after) - g(before)` for the most recent [`apply`](Self::apply).
    pub fn delta(&self) -> &[f64] {
        &self.delta
    }

    pub fn alters(&self, i: usize) -> &[usize] {
        &self.alters[i]
    }

    fn check(&self, mv: Move) -> Result<()> {
        match mv {
            Move::Toggle(i, j) => {
                if self.net.canonical(i, j).is_none() {
                    return Err(Error::InvalidMove(format!("no dyad ({i}, {j})")));
                }
            }
            Move::SetAttr { node, var, level } => {
                if node >= self.net.n() || var >= self.net.variables().len() {
                    return Err(Error::InvalidMove(format!("no attribute ({node}, {var})")));
                }
                if level >= self.net.levels(var) {
                    return Err(Error::InvalidMove(format!("level {level} out of range")));
                }
            }
        }
        Ok(())
    }

    /// `g(after) - g(before)` for toggling `(i, j)`, leaving the state untouched.
    pub fn peek_toggle(&mut self, i: usize, j: usize) -> Result<&[f64]> {
        let (a, b) = self
            .net
            .canonical(i, j)
            .ok_or_else(|| Error::InvalidMove(format!("no dyad ({i}, {j})")))?;
        let before = self.net.multiplicity(a, b);
        let present = self.net.has_edge(a, b);
        let after = if present { before - 1 } else { before + 1 };
        let sign = if present { -1.0 } else { 1.0 };
        self.peek.iter_mut().for_each(|d| *d = 0.0);
        let mut recompute = false;
        for (t, term) in self.terms.iter().enumerate() {
            if matches!(term, Term::Edges) {
                self.peek[t] = sign;
            }
        }
        for h in &mut self.homophily {
            match h {
                HomophilyTracker::Incremental(st) => {
                    let labels = self.net.attr_column(st.var);
                    self.peek[st.term] = st.peek_toggle(labels, a, b, before, after);
                }
                HomophilyTracker::Recompute { .. } => recompute = true,
            }
        }
        if recompute {
            self.apply(Move::Toggle(a, b))?;
            let delta = self.delta.clone();
            self.undo(Move::Toggle(a, b));
            for (t, term) in self.terms.iter().enumerate() {
                if matches!(term, Term::Homophily { centering, .. } if *centering != Centering::Exact)
                {
                    self.peek[t] = delta[t];
                }
            }
        }
        Ok(&self.peek)
    }

    /// Apply a move, update `g`, and return the move that undoes it.
    pub fn apply(&mut self, mv: Move) -> Result<Move> {
        self.check(mv)?;
        self.snapshot();
        let inverse = self.apply_raw(mv);
        self.finish_delta();
        Ok(inverse)
    }

    /// Apply a compound move as one step; `delta` covers the whole sequence.
    /// Inverses are written to `inverses` in the order they must be undone.
    pub fn apply_many(&mut self, moves: &[Move], inverses: &mut Vec<Move>) -> Result<()> {
        for &mv in moves {
            self.check(mv)?;
        }
        self.snapshot();
        inverses.clear();
        for &mv in moves {
            inverses.push(self.apply_raw(mv));
        }
        inverses.reverse();
        self.finish_delta();
        Ok(())
    }

    /// Revert the most recent move given its inverse; restores `g` bit-for-bit.
    pub fn undo(&mut self, inverse: Move) {
        self.undo_many(&[inverse]);
    }

    /// Revert the most recent [`apply_many`](Self::apply_many).
    pub fn undo_many(&mut self, inverses: &[Move]) {
        for &mv in inverses {
            self.apply_raw(mv);
        }
        self.stats.copy_from_slice(&self.saved_stats);
        let mut it = self.saved_homophily.iter();
        for h in &mut self.homophily {
            if let HomophilyTracker::Incremental(st) = h {
                let (s, c) = it.next().expect("saved homophily state");
                st.sqrt_sum = *s;
                st.centers.copy_from_slice(c);
            }
        }
        self.delta.iter_mut().for_each(|d| *d = 0.0);
    }

    fn snapshot(&mut self) {
        self.saved_stats.copy_from_slice(&self.stats);
        let mut slot = 0;
        for h in &self.homophily {
            if let HomophilyTracker::Incremental(st) = h {
                if slot == self.saved_homophily.len() {
                    self.saved_homophily.push((st.sqrt_sum, st.centers.clone()));
                } else {
                    let saved = &mut self.saved_homophily[slot];
                    saved.0 = st.sqrt_sum;
                    saved.1.copy_from_slice(&st.centers);
                }
                slot += 1;
            }
        }
    }

    fn apply_raw(&mut self, mv: Move) -> Move {
        match mv {
            Move::Toggle(i, j) => {
                self.toggle(i, j);
                mv
            }
            Move::SetAttr { node, var, level } => {
                let old = self.net.attr(node, var);
                self.set_attr(node, var, level);
                Move::SetAttr {
                    node,
                    var,
                    level: old,
                }
            }
        }
    }

    fn finish_delta(&mut self) {
        for (d, (a, b)) in self
            .delta
            .iter_mut()
            .zip(self.stats.iter().zip(&self.saved_stats))
        {
            *d = a - b;
        }
    }

    fn toggle(&mut self, i: usize, j: usize) {
        let (a, b) = self.net.canonical(i, j).expect("checked dyad");
        let before = self.net.multiplicity(a, b);
        let added = self.net.toggle(a, b).expect("checked dyad");
        let after = self.net.multiplicity(a, b);
        if before == 0 {
            self.alters[a].push(b);
            self.alters[b].push(a);
        } else if after == 0 {
            remove_item(&mut self.alters[a], b);
            remove_item(&mut self.alters[b], a);
        }
        let sign = if added { 1.0 } else { -1.0 };
        for (t, term) in self.terms.iter().enumerate() {
            if matches!(term, Term::Edges) {
                self.stats[t] += sign;
            }
        }
        for h in &mut self.homophily {
            match h {
                HomophilyTracker::Incremental(st) => {
                    let labels = self.net.attr_column(st.var);
                    st.edge_changed(labels, a, b, before, after);
                    st.edge_changed(labels, b, a, before, after);
                    self.stats[st.term] = st.value();
                }
                HomophilyTracker::Recompute {
                    term,
                    var,
                    centering,
                } => {
                    self.stats[*term] = regularized_homophily(&self.net, *var, centering);
                }
            }
        }
    }

    fn set_attr(&mut self, node: usize, var: usize, level: u32) {
        let old = self.net.attr(node, var);
        if old == level {
            return;
        }
        for (t, term) in self.terms.iter().enumerate() {
            if let Term::GroupCount { var: v, level: l } = term {
                if *v == var {
                    if *l == old {
                        self.stats[t] -= 1.0;
                    } else if *l == level {
                        self.stats[t] += 1.0;
                    }
                }
            }
        }
        let (a, b) = (old as usize, level as usize);
        for h in &mut self.homophily {
            match h {
                HomophilyTracker::Incremental(st) if st.var == var => {
                    let m = st.m();
                    let labels = self.net.attr_column(var);
                    st.sqrt_sum -= (st.d[node * m + a] as f64).sqrt();
                    st.sqrt_sum += (st.d[node * m + b] as f64).sqrt();
                    for &u in &self.alters[node] {
                        let mult = self.net.multiplicity(u, node);
                        let xu = labels[u] as usize;
                        let da = st.d[u * m + a];
                        let db = st.d[u * m + b];
                        st.d[u * m + a] = da - mult;
                        st.d[u * m + b] = db + mult;
                        if xu == a {
                            st.sqrt_sum += ((da - mult) as f64).sqrt() - (da as f64).sqrt();
                        } else if xu == b {
                            st.sqrt_sum += ((db + mult) as f64).sqrt() - (db as f64).sqrt();
                        }
                    }
                    let p = (st.c1[node], st.c2[node]);
                    st.profile_remove(a, p);
                    st.profile_add(b, p);
                    st.counts[a] -= 1;
                    st.counts[b] += 1;
                    st.recenter(a);
                    st.recenter(b);
                }
                _ => {}
            }
        }
        self.net
            .set_attr(node, var, level)
            .expect("checked attribute");
        for h in &mut self.homophily {
            match h {
                HomophilyTracker::Incremental(st) if st.var == var => {
                    self.stats[st.term] = st.value();
                }
                HomophilyTracker::Recompute {
                    term,
                    var: v,
                    centering,
                } if *v == var => {
                    self.stats[*term] = regularized_homophily(&self.net, *v, centering);
                }
                _ => {}
            }
        }
    }
}

fn bump(profile: &mut Vec<Vec<u32>>, (c1, c2): (u32, u32)) {
    let (c1, c2) = (c1 as usize, c2 as usize);
    if profile.len() <= c2 {
        profile.resize(c2 + 1, Vec::new());
    }
    let row = &mut profile[c2];
    if row.len() <= c1 {
        row.resize(c1 + 1, 0);
    }
    row[c1] += 1;
}

fn remove_item(v: &mut Vec<usize>, x: usize) {
    if let Some(p) = v.iter().position(|&y| y == x) {
        v.swap_remove(p);
    }
}

/// `g(t_after) - g(t_before)` for one move.
pub fn change_statistics(net: &Network, spec: &ModelSpec, mv: Move) -> Result<Vec<f64>> {
    if let Move::SetAttr { node, var, level } = mv {
        if var < net.variables().len() && node < net.n() && net.attr(node, var) == level {
            return Err(Error::InvalidMove(format!(
                "node {node} already has level {level} on '{}'",
                net.variables()[var].name
            )));
        }
    }
    let mut tracker = StatTracker::new(net.clone(), spec)?;
    tracker.apply(mv)?;
    Ok(tracker.delta().to_vec())
}

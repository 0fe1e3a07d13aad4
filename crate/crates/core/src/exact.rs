//! Exact MAP structure search by dynamic programming over node subsets.

use crate::cache::LocalScores;
use crate::dag::{bit, bits, Dag};
use crate::error::{Error, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;
use std::fmt;

/// Default memory ceiling for the best-parent tables (8 GiB), enough for
/// about 25 nodes.
pub const DEFAULT_MEMORY_BUDGET: u64 = 8 << 30;

const NO_SET: u32 = u32::MAX;
const MAX_EXACT_NODES: usize = 31;

/// Prior over parent sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum StructuralPrior {
    /// Every cardinality equally likely, uniform within a cardinality.
    #[default]
    Koivisto,
    /// Every parent set equally likely.
    Uninformative,
}

impl StructuralPrior {
    pub fn log_prior(self, n_nodes: usize, n_parents: usize) -> f64 {
        match self {
            StructuralPrior::Koivisto => {
                let n = (n_nodes - 1) as f64;
                let k = n_parents as f64;
                -(ln_gamma(n + 1.0) - ln_gamma(k + 1.0) - ln_gamma(n - k + 1.0))
            }
            StructuralPrior::Uninformative => 0.0,
        }
    }
}

impl fmt::Display for StructuralPrior {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StructuralPrior::Koivisto => "koivisto",
            StructuralPrior::Uninformative => "uninformative",
        })
    }
}

impl std::str::FromStr for StructuralPrior {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "koivisto" => Ok(StructuralPrior::Koivisto),
            "uninformative" => Ok(StructuralPrior::Uninformative),
            other => Err(Error::Parse(format!("unknown structural prior `{other}`"))),
        }
    }
}

/// Removes bit `i` from `mask`, shifting higher bits down.
fn compress(mask: u64, i: usize) -> usize {
    let low = bit(i) - 1;
    ((mask & low) | ((mask >> 1) & !low)) as usize
}

#[cfg(test)]
fn expand(idx: usize, i: usize) -> u64 {
    let low = bit(i) - 1;
    let m = idx as u64;
    (m & low) | ((m & !low) << 1)
}

/// For each node `i` and candidate set `S ⊆ V∖{i}`: the best admissible
/// parent set inside `S` and its prior-adjusted score.
#[derive(Debug, Clone)]
pub struct BestParentTable {
    nodes: Vec<String>,
    prior: StructuralPrior,
    scores: Vec<Vec<f64>>,
    args: Vec<Vec<u32>>,
}

fn better(a: (f64, u64), b: (f64, u64)) -> bool {
    // is `a` preferred over `b`
    a.0 > b.0
        || (a.0 == b.0
            && (a.1.count_ones(), a.1) < (b.1.count_ones(), b.1))
}

impl BestParentTable {
    pub fn build(scores: &LocalScores, prior: StructuralPrior) -> Result<Self> {
        Self::build_with_budget(scores, prior, DEFAULT_MEMORY_BUDGET)
    }

    pub fn build_with_budget(scores: &LocalScores, prior: StructuralPrior, budget: u64) -> Result<Self> {
        let n = scores.n_nodes();
        if n == 0 {
            return Err(Error::EmptyCache);
        }
        if n > MAX_EXACT_NODES {
            return Err(Error::TooManyNodes(n));
        }
        let per_node = 1u64 << (n - 1);
        // best-parent entries plus the sink table
        let needed = n as u64 * per_node * 12 + (1u64 << n) * 9;
        if needed > budget {
            return Err(Error::MemoryLimit { needed, budget });
        }
        let tables: Vec<(Vec<f64>, Vec<u32>)> = (0..n)
            .into_par_iter()
            .map(|i| {
                let size = per_node as usize;
                let mut best = vec![f64::NEG_INFINITY; size];
                let mut arg = vec![NO_SET; size];
                for &(m, s) in scores.entries(i) {
                    let v = s + prior.log_prior(n, m.count_ones() as usize);
                    let k = compress(m, i);
                    best[k] = v;
                    arg[k] = m as u32;
                }
                // ascending index visits every subset after its subsets
                for k in 0..size {
                    let mut rest = k;
                    while rest != 0 {
                        let low = rest & rest.wrapping_neg();
                        rest ^= low;
                        let sub = k ^ low;
                        if arg[sub] == NO_SET {
                            continue;
                        }
                        let cand = (best[sub], u64::from(arg[sub]));
                        if arg[k] == NO_SET || better(cand, (best[k], u64::from(arg[k]))) {
                            best[k] = cand.0;
                            arg[k] = arg[sub];
                        }
                    }
                }
                (best, arg)
            })
            .collect();
        let (scores_t, args) = tables.into_iter().unzip();
        Ok(BestParentTable {
            nodes: scores.nodes().to_vec(),
            prior,
            scores: scores_t,
            args,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn prior(&self) -> StructuralPrior {
        self.prior
    }

    /// Best prior-adjusted score and parent set of `node` within `candidates`.
    pub fn best(&self, node: usize, candidates: u64) -> Option<(f64, u64)> {
        let k = compress(candidates & !bit(node), node);
        let a = self.args[node][k];
        (a != NO_SET).then(|| (self.scores[node][k], u64::from(a)))
    }
}

/// Result of exact search.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExactResult {
    pub dag: Dag,
    /// Data score plus structural log-prior, summed in node order.
    pub total: f64,
    /// Sum of the local data scores alone.
    pub data_score: f64,
    /// Per node: (local data score, structural log-prior).
    pub per_node: Vec<(f64, f64)>,
}

/// Maximizes the total score over all DAGs whose parent sets are in the table.
pub fn most_probable_dag(table: &BestParentTable, scores: &LocalScores) -> Result<ExactResult> {
    let n = table.n_nodes();
    let full = (1usize << n) - 1;
    let mut f = vec![f64::NEG_INFINITY; full + 1];
    let mut sink = vec![u8::MAX; full + 1];
    f[0] = 0.0;
    for s in 1..=full {
        let mut best = f64::NEG_INFINITY;
        let mut arg = u8::MAX;
        for j in bits(s as u64) {
            let rest = s & !(1usize << j);
            if f[rest] == f64::NEG_INFINITY {
                continue;
            }
            let Some((b, _)) = table.best(j, rest as u64) else {
                continue;
            };
            let v = f[rest] + b;
            if arg == u8::MAX || v > best {
                best = v;
                arg = j as u8;
            }
        }
        f[s] = best;
        sink[s] = arg;
    }
    if sink[full] == u8::MAX || !f[full].is_finite() {
        return Err(Error::Infeasible);
    }
    let mut parents = vec![0u64; n];
    let mut s = full;
    while s != 0 {
        let j = sink[s] as usize;
        let rest = s & !(1usize << j);
        parents[j] = table.best(j, rest as u64).expect("feasible sink").1;
        s = rest;
    }
    let dag = Dag::new(table.nodes.clone(), parents)?;
    let mut per_node = Vec::with_capacity(n);
    for i in 0..n {
        let m = dag.parents_of(i);
        per_node.push((
            scores.score(i, m)?,
            table.prior.log_prior(n, m.count_ones() as usize),
        ));
    }
    let total = per_node.iter().map(|(s, p)| s + p).sum();
    let data_score = per_node.iter().map(|(s, _)| s).sum();
    Ok(ExactResult {
        dag,
        total,
        data_score,
        per_node,
    })
}

/// Builds the table and runs the search in one call.
pub fn exact_search(scores: &LocalScores, prior: StructuralPrior) -> Result<ExactResult> {
    let table = BestParentTable::build(scores, prior)?;
    most_probable_dag(&table, scores)
}

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Log of the order-summed evidence `Σ_orders Π_j Σ_{P ⊆ pred(j)} exp(score + prior)`.
/// Diagnostic only; it does not select a structure.
pub fn order_summed_evidence(scores: &LocalScores, prior: StructuralPrior) -> Result<f64> {
    let n = scores.n_nodes();
    if n > 20 {
        return Err(Error::TooManyNodes(n));
    }
    let size = 1usize << (n - 1);
    let sums: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut a = vec![f64::NEG_INFINITY; size];
            for &(m, s) in scores.entries(i) {
                a[compress(m, i)] = s + prior.log_prior(n, m.count_ones() as usize);
            }
            // subset sums (zeta transform) in log space
            for b in 0..n - 1 {
                for k in 0..size {
                    if k & (1 << b) != 0 {
                        a[k] = log_add(a[k], a[k ^ (1 << b)]);
                    }
                }
            }
            a
        })
        .collect();
    let full = (1usize << n) - 1;
    let mut g = vec![f64::NEG_INFINITY; full + 1];
    g[0] = 0.0;
    for s in 1..=full {
        let mut acc = f64::NEG_INFINITY;
        for j in bits(s as u64) {
            let rest = s & !(1usize << j);
            acc = log_add(acc, g[rest] + sums[j][compress(rest as u64, j)]);
        }
        g[s] = acc;
    }
    Ok(g[full])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dag::is_acyclic;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("v{i}")).collect()
    }

    fn random_scores(n: usize, seed: u64) -> LocalScores {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let entries = (0..n)
            .map(|i| {
                (0..1u64 << n)
                    .filter(|m| m & bit(i) == 0)
                    .map(|m| (m, rng.random_range(-10.0..0.0)))
                    .collect()
            })
            .collect();
        LocalScores::new(names(n), entries).unwrap()
    }

    /// All parent assignments that form a DAG, each an n-vector of masks.
    fn all_dags(n: usize) -> Vec<Vec<u64>> {
        let mut out = vec![vec![]];
        for i in 0..n {
            let mut next = Vec::new();
            for partial in &out {
                for m in 0..1u64 << n {
                    if m & bit(i) == 0 {
                        let mut p: Vec<u64> = partial.clone();
                        p.push(m);
                        next.push(p);
                    }
                }
            }
            out = next;
        }
        out.into_iter().filter(|p| is_acyclic(p)).collect()
    }

    fn brute_best(s: &LocalScores, prior: StructuralPrior, dags: &[Vec<u64>]) -> f64 {
        let n = s.n_nodes();
        dags.iter()
            .filter_map(|p| {
                let mut t = 0.0;
                for (i, &m) in p.iter().enumerate() {
                    t += s.get(i, m)? + prior.log_prior(n, m.count_ones() as usize);
                }
                Some(t)
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }

    #[test]
    fn dag_counts() {
        assert_eq!(all_dags(3).len(), 25);
        assert_eq!(all_dags(4).len(), 543);
    }

    #[test]
    fn matches_brute_force() {
        let d3 = all_dags(3);
        let d4 = all_dags(4);
        for seed in 0..200 {
            for (n, dags) in [(3, &d3), (4, &d4)] {
                let s = random_scores(n, seed);
                for prior in [StructuralPrior::Koivisto, StructuralPrior::Uninformative] {
                    let r = exact_search(&s, prior).unwrap();
                    assert_eq!(r.total, brute_best(&s, prior, dags));
                }
            }
        }
    }

    #[test]
    fn table_is_subset_max() {
        for seed in 0..20 {
            let s = random_scores(4, seed);
            let t = BestParentTable::build(&s, StructuralPrior::Uninformative).unwrap();
            for i in 0..4 {
                for cand in 0..16u64 {
                    let cand = cand & !bit(i);
                    let direct = (0..16u64)
                        .filter(|&p| p & !cand == 0)
                        .filter_map(|p| s.get(i, p).map(|v| (v, p)))
                        .fold(None, |acc: Option<(f64, u64)>, c| match acc {
                            Some(a) if !better(c, a) => Some(a),
                            _ => Some(c),
                        });
                    assert_eq!(t.best(i, cand), direct);
                }
            }
        }
    }

    #[test]
    fn empty_candidates_give_retained_only_set() {
        // node 0 must keep parent 1
        let entries = vec![vec![(0b010, -1.0), (0b110, -0.5)], vec![(0, -2.0)], vec![(0, -1.0), (0b001, -0.1)]];
        let s = LocalScores::new(names(3), entries).unwrap();
        let t = BestParentTable::build(&s, StructuralPrior::Uninformative).unwrap();
        assert_eq!(t.best(0, 0), None);
        assert_eq!(t.best(0, 0b010), Some((-1.0, 0b010)));
        let r = exact_search(&s, StructuralPrior::Uninformative).unwrap();
        assert!(r.dag.has_arc(1, 0));
        assert!(is_acyclic(r.dag.parent_masks()));
    }

    #[test]
    fn ties_prefer_smaller_sets() {
        let entries = vec![vec![(0, -1.0), (0b10, -1.0)], vec![(0, -1.0), (0b01, -1.0)]];
        let s = LocalScores::new(names(2), entries).unwrap();
        let r = exact_search(&s, StructuralPrior::Uninformative).unwrap();
        assert_eq!(r.dag.n_arcs(), 0);
    }

    #[test]
    fn infeasible_retained_cycle() {
        let entries = vec![vec![(0b10, -1.0)], vec![(0b01, -1.0)]];
        let s = LocalScores::new(names(2), entries).unwrap();
        assert_eq!(exact_search(&s, StructuralPrior::Koivisto), Err(Error::Infeasible));
    }

    #[test]
    fn memory_budget_enforced() {
        let s = random_scores(4, 1);
        assert!(matches!(
            BestParentTable::build_with_budget(&s, StructuralPrior::Koivisto, 10),
            Err(Error::MemoryLimit { .. })
        ));
    }

    #[test]
    fn order_evidence_matches_enumeration() {
        let s = random_scores(3, 9);
        let prior = StructuralPrior::Koivisto;
        let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
        let mut total = 0.0;
        for order in perms {
            let mut prod = 1.0;
            for (pos, &j) in order.iter().enumerate() {
                let pred: u64 = order[..pos].iter().map(|&k| bit(k)).sum();
                prod *= s
                    .entries(j)
                    .iter()
                    .filter(|(m, _)| m & !pred == 0)
                    .map(|(m, v)| (v + prior.log_prior(3, m.count_ones() as usize)).exp())
                    .sum::<f64>();
            }
            total += prod;
        }
        assert!((order_summed_evidence(&s, prior).unwrap() - total.ln()).abs() < 1e-10);
    }

    #[test]
    fn compress_roundtrip() {
        for i in 0..6 {
            for m in 0..64u64 {
                if m & bit(i) == 0 {
                    assert_eq!(expand(compress(m, i), i), m);
                }
            }
        }
    }

    proptest! {
        #[test]
        fn table_monotone_in_candidates(seed in 0u64..1000, i in 0usize..5, s in 0u64..32, j in 0usize..5) {
            let sc = random_scores(5, seed);
            let t = BestParentTable::build(&sc, StructuralPrior::Koivisto).unwrap();
            let a = t.best(i, s).unwrap().0;
            let b = t.best(i, s | bit(j)).unwrap().0;
            prop_assert!(b >= a);
        }

        #[test]
        fn relabeling_is_equivariant(seed in 0u64..500) {
            let sc = random_scores(4, seed);
            let perm = [2usize, 0, 3, 1];
            let map = |m: u64| bits(m).map(|k| bit(perm[k])).sum::<u64>();
            let mut entries = vec![Vec::new(); 4];
            for i in 0..4 {
                entries[perm[i]] = sc.entries(i).iter().map(|&(m, v)| (map(m), v)).collect();
            }
            let relabeled = LocalScores::new(names(4), entries).unwrap();
            let a = exact_search(&sc, StructuralPrior::Uninformative).unwrap();
            let b = exact_search(&relabeled, StructuralPrior::Uninformative).unwrap();
            for i in 0..4 {
                prop_assert_eq!(map(a.dag.parents_of(i)), b.dag.parents_of(perm[i]));
            }
        }
    }
}

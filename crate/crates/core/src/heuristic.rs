//! Hill-climbing, tabu and simulated-annealing structure search over cached
//! scores, majority consensus, and cycle repair.

use crate::cache::LocalScores;
use crate::dag::{bit, creates_cycle, find_cycle, ConstraintSet, Dag};
use crate::error::{Error, Result};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::{HashSet, VecDeque};
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    HillClimb,
    Tabu,
    SimulatedAnnealing,
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::HillClimb => "hill_climb",
            Algorithm::Tabu => "tabu",
            Algorithm::SimulatedAnnealing => "simulated_annealing",
        })
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "hill_climb" | "hc" => Ok(Algorithm::HillClimb),
            "tabu" => Ok(Algorithm::Tabu),
            "simulated_annealing" | "sa" => Ok(Algorithm::SimulatedAnnealing),
            other => Err(Error::Parse(format!("unknown search algorithm `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeuristicConfig {
    pub algorithm: Algorithm,
    pub restarts: usize,
    pub max_steps: usize,
    pub tabu_length: usize,
    pub initial_temperature: f64,
    pub cooling_factor: f64,
    /// Probability that each admissible arc is tried when building a
    /// random starting graph.
    pub initial_density: f64,
    pub seed: u64,
}

impl Default for HeuristicConfig {
    fn default() -> Self {
        HeuristicConfig {
            algorithm: Algorithm::HillClimb,
            restarts: 1,
            max_steps: 1000,
            tabu_length: 10,
            initial_temperature: 1.0,
            cooling_factor: 0.995,
            initial_density: 0.1,
            seed: 0,
        }
    }
}

impl HeuristicConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.restarts >= 1
            && self.max_steps >= 1
            && self.initial_temperature > 0.0
            && self.cooling_factor > 0.0
            && self.cooling_factor < 1.0
            && (0.0..=1.0).contains(&self.initial_density);
        if ok {
            Ok(())
        } else {
            Err(Error::Parse(
                "restarts and steps must be positive, temperature > 0, cooling in (0,1)".into(),
            ))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RestartTrace {
    pub dag: Dag,
    pub score: f64,
    /// Best score seen after each step, starting with the initial graph.
    pub best_scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchTrace {
    pub restarts: Vec<RestartTrace>,
}

impl SearchTrace {
    /// Highest-scoring restart; the earliest wins ties.
    pub fn best(&self) -> &RestartTrace {
        let mut best = &self.restarts[0];
        for r in &self.restarts[1..] {
            if r.score > best.score {
                best = r;
            }
        }
        best
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Move {
    Add(usize, usize),
    Delete(usize, usize),
    /// Turn `p -> c` into `c -> p`.
    Reverse(usize, usize),
}

impl Move {
    fn inverse(self) -> Move {
        match self {
            Move::Add(p, c) => Move::Delete(p, c),
            Move::Delete(p, c) => Move::Add(p, c),
            Move::Reverse(p, c) => Move::Reverse(c, p),
        }
    }
}

struct State<'a> {
    scores: &'a LocalScores,
    constraints: &'a ConstraintSet,
    parents: Vec<u64>,
    local: Vec<f64>,
}

impl<'a> State<'a> {
    fn total(&self) -> f64 {
        self.local.iter().sum()
    }

    fn admissible(&self, node: usize, mask: u64) -> Option<f64> {
        if !self.constraints.allows(node, mask) {
            return None;
        }
        self.scores.get(node, mask).filter(|s| !s.is_nan() && *s > f64::NEG_INFINITY)
    }

    /// Score change of a move, or `None` if it leaves the cache or creates a cycle.
    fn delta(&self, mv: Move) -> Option<f64> {
        match mv {
            Move::Add(p, c) => {
                if self.parents[c] & bit(p) != 0 || creates_cycle(&self.parents, c, p) {
                    return None;
                }
                Some(self.admissible(c, self.parents[c] | bit(p))? - self.local[c])
            }
            Move::Delete(p, c) => {
                if self.parents[c] & bit(p) == 0 {
                    return None;
                }
                Some(self.admissible(c, self.parents[c] & !bit(p))? - self.local[c])
            }
            Move::Reverse(p, c) => {
                if self.parents[c] & bit(p) == 0 {
                    return None;
                }
                let new_c = self.admissible(c, self.parents[c] & !bit(p))?;
                let new_p = self.admissible(p, self.parents[p] | bit(c))?;
                let mut tmp = self.parents.clone();
                tmp[c] &= !bit(p);
                if creates_cycle(&tmp, p, c) {
                    return None;
                }
                Some(new_c + new_p - self.local[c] - self.local[p])
            }
        }
    }

    fn apply(&mut self, mv: Move) {
        match mv {
            Move::Add(p, c) => self.parents[c] |= bit(p),
            Move::Delete(p, c) => self.parents[c] &= !bit(p),
            Move::Reverse(p, c) => {
                self.parents[c] &= !bit(p);
                self.parents[p] |= bit(c);
                self.local[p] = self.scores.get(p, self.parents[p]).expect("checked");
            }
        }
        let c = match mv {
            Move::Add(_, c) | Move::Delete(_, c) | Move::Reverse(_, c) => c,
        };
        self.local[c] = self.scores.get(c, self.parents[c]).expect("checked");
    }

    /// Every valid move with its score change, in a fixed order.
    fn moves(&self) -> Vec<(Move, f64)> {
        let n = self.parents.len();
        let mut out = Vec::new();
        for c in 0..n {
            for p in 0..n {
                if p == c {
                    continue;
                }
                let candidates: &[Move] = if self.parents[c] & bit(p) != 0 {
                    &[Move::Delete(p, c), Move::Reverse(p, c)]
                } else {
                    &[Move::Add(p, c)]
                };
                for &mv in candidates {
                    if let Some(d) = self.delta(mv) {
                        out.push((mv, d));
                    }
                }
            }
        }
        out
    }
}

fn initial_state<'a>(
    scores: &'a LocalScores,
    constraints: &'a ConstraintSet,
    density: f64,
    rng: &mut ChaCha8Rng,
) -> Result<State<'a>> {
    let n = scores.n_nodes();
    let parents = constraints.retained.clone();
    let mut local = Vec::with_capacity(n);
    for (i, &m) in parents.iter().enumerate() {
        local.push(scores.score(i, m)?);
    }
    let mut state = State {
        scores,
        constraints,
        parents,
        local,
    };
    let mut pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|c| (0..n).filter(move |&p| p != c).map(move |p| (p, c)))
        .collect();
    pairs.shuffle(rng);
    for (p, c) in pairs {
        if rng.random::<f64>() < density && state.delta(Move::Add(p, c)).is_some() {
            state.apply(Move::Add(p, c));
        }
    }
    Ok(state)
}

fn pick_best(moves: &[(Move, f64)], allowed: impl Fn(&Move, f64) -> bool) -> Option<(Move, f64)> {
    let mut best: Option<(Move, f64)> = None;
    for &(mv, d) in moves {
        if allowed(&mv, d) && best.is_none_or(|(_, bd)| d > bd) {
            best = Some((mv, d));
        }
    }
    best
}

fn run_restart(
    scores: &LocalScores,
    constraints: &ConstraintSet,
    config: &HeuristicConfig,
    restart: usize,
) -> Result<RestartTrace> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(restart as u64);
    let mut state = initial_state(scores, constraints, config.initial_density, &mut rng)?;
    let mut current = state.total();
    let mut best_score = current;
    let mut best_parents = state.parents.clone();
    let mut trace = vec![best_score];

    match config.algorithm {
        Algorithm::HillClimb => {
            for _ in 0..config.max_steps {
                let moves = state.moves();
                let Some((mv, _)) = pick_best(&moves, |_, d| d > 0.0) else {
                    break;
                };
                state.apply(mv);
                let total = state.total();
                if total <= current {
                    // rounding left no real gain
                    break;
                }
                current = total;
                best_score = current;
                best_parents = state.parents.clone();
                trace.push(best_score);
            }
        }
        Algorithm::Tabu => {
            let mut tabu: VecDeque<Move> = VecDeque::with_capacity(config.tabu_length + 1);
            let patience = (5 * config.tabu_length).max(20);
            let mut stale = 0;
            for _ in 0..config.max_steps {
                let moves = state.moves();
                let chosen = pick_best(&moves, |mv, d| {
                    !tabu.contains(mv) || current + d > best_score
                });
                let Some((mv, _)) = chosen else { break };
                state.apply(mv);
                current = state.total();
                if config.tabu_length > 0 {
                    tabu.push_back(mv.inverse());
                    if tabu.len() > config.tabu_length {
                        tabu.pop_front();
                    }
                }
                if current > best_score {
                    best_score = current;
                    best_parents = state.parents.clone();
                    stale = 0;
                } else {
                    stale += 1;
                }
                trace.push(best_score);
                if stale >= patience {
                    break;
                }
            }
        }
        Algorithm::SimulatedAnnealing => {
            let mut temperature = config.initial_temperature;
            for _ in 0..config.max_steps {
                let moves = state.moves();
                if moves.is_empty() {
                    break;
                }
                let (mv, d) = moves[rng.random_range(0..moves.len())];
                let accept = d >= 0.0 || rng.random::<f64>() < (d / temperature).exp();
                if accept {
                    state.apply(mv);
                    current = state.total();
                    if current > best_score {
                        best_score = current;
                        best_parents = state.parents.clone();
                    }
                }
                temperature *= config.cooling_factor;
                trace.push(best_score);
            }
        }
    }
    let dag = Dag::new(scores.nodes().to_vec(), best_parents)?;
    // canonical node-order total
    let score = scores.total(dag.parent_masks())?;
    Ok(RestartTrace {
        dag,
        score,
        best_scores: trace,
    })
}

/// Runs `config.restarts` independent searches. Restart `r` draws from
/// stream `r` of a generator seeded with `config.seed`, so results do not
/// depend on thread scheduling.
pub fn heuristic_search(
    scores: &LocalScores,
    constraints: &ConstraintSet,
    config: &HeuristicConfig,
) -> Result<SearchTrace> {
    config.validate()?;
    if scores.n_nodes() == 0 {
        return Err(Error::EmptyCache);
    }
    constraints.validate(scores.nodes())?;
    let restarts = (0..config.restarts)
        .into_par_iter()
        .map(|r| run_restart(scores, constraints, config, r))
        .collect::<Result<Vec<_>>>()?;
    Ok(SearchTrace { restarts })
}

/// Arc frequencies across a set of graphs and the arcs passing a threshold.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Consensus {
    pub nodes: Vec<String>,
    /// `frequencies[child][parent]`.
    pub frequencies: Vec<Vec<f64>>,
    /// Parent masks of the kept arcs; may contain cycles.
    pub matrix: Vec<u64>,
    pub cyclic: bool,
}

/// Keeps arcs whose frequency reaches `threshold`. With `directed = false`
/// the support of a pair is the sum of both directions and the kept arc
/// takes the more frequent direction (both on a tie).
pub fn majority_consensus(dags: &[Dag], threshold: f64, directed: bool) -> Result<Consensus> {
    let first = dags.first().ok_or(Error::EmptyCache)?;
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::Parse("consensus threshold must lie in (0, 1]".into()));
    }
    let n = first.n_nodes();
    let mut counts = vec![vec![0usize; n]; n];
    for d in dags {
        if d.nodes() != first.nodes() {
            return Err(Error::NodeSetMismatch);
        }
        for (p, c) in d.arcs() {
            counts[c][p] += 1;
        }
    }
    let total = dags.len() as f64;
    let frequencies: Vec<Vec<f64>> = counts
        .iter()
        .map(|row| row.iter().map(|&k| k as f64 / total).collect())
        .collect();
    let mut matrix = vec![0u64; n];
    for c in 0..n {
        for p in 0..n {
            if p == c {
                continue;
            }
            let keep = if directed {
                counts[c][p] as f64 / total >= threshold
            } else {
                (counts[c][p] + counts[p][c]) as f64 / total >= threshold
                    && counts[c][p] > 0
                    && counts[c][p] >= counts[p][c]
            };
            if keep {
                matrix[c] |= bit(p);
            }
        }
    }
    let cyclic = find_cycle(&matrix).is_some();
    Ok(Consensus {
        nodes: first.nodes().to_vec(),
        frequencies,
        matrix,
        cyclic,
    })
}

/// Breaks cycles by reversing, on each detected cycle, the arc with the
/// lowest frequency. The arc is deleted instead when its reversal would
/// close another cycle, duplicate an existing arc, or repeat an earlier
/// reversal.
pub fn repair_to_dag(nodes: Vec<String>, matrix: &[u64], frequencies: &[Vec<f64>]) -> Result<Dag> {
    let mut parents = matrix.to_vec();
    for (i, m) in parents.iter_mut().enumerate() {
        *m &= !bit(i);
    }
    let mut reversed: HashSet<(usize, usize)> = HashSet::new();
    while let Some(cycle) = find_cycle(&parents) {
        // cycle lists nodes in arc order: cycle[k] -> cycle[k+1]
        let len = cycle.len();
        let (p, c) = (0..len)
            .map(|k| (cycle[k], cycle[(k + 1) % len]))
            .min_by(|a, b| {
                frequencies[a.1][a.0]
                    .total_cmp(&frequencies[b.1][b.0])
                    .then(a.cmp(b))
            })
            .expect("non-empty cycle");
        parents[c] &= !bit(p);
        let reverse_ok = parents[p] & bit(c) == 0
            && !creates_cycle(&parents, p, c)
            && reversed.insert((p.min(c), p.max(c)));
        if reverse_ok {
            parents[p] |= bit(c);
        }
    }
    Dag::new(nodes, parents)
}

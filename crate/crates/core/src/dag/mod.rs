//! DAG representation, structural constraints, metrics and comparison.
//!
//! Adjacency is always stored row = child, column = parent: `parents[i]` is a
//! bitmask whose bit `j` is set when there is an arc `j -> i`.

mod export;
mod formula;

pub use export::{
    read_adjacency, read_real_matrix, to_dot, write_adjacency, write_real_matrix, DotStyle,
    LabeledMatrix,
};
pub use formula::{parse_formula, parse_formula_with_notes, render_formula};

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Maximum number of nodes, bounded by the 64-bit parent masks.
pub const MAX_NODES: usize = 64;

const RESERVED: [char; 5] = ['~', ':', '|', '+', '.'];

pub(crate) fn bit(i: usize) -> u64 {
    1u64 << i
}

pub(crate) fn bits(mask: u64) -> impl Iterator<Item = usize> {
    let mut m = mask;
    std::iter::from_fn(move || {
        if m == 0 {
            None
        } else {
            let i = m.trailing_zeros() as usize;
            m &= m - 1;
            Some(i)
        }
    })
}

/// Checks a node name against the formula grammar's reserved symbols.
pub fn validate_name(name: &str) -> Result<()> {
    if name.is_empty()
        || name.chars().any(|c| RESERVED.contains(&c) || c.is_whitespace())
    {
        return Err(Error::InvalidName(name.to_string()));
    }
    Ok(())
}

fn validate_names(nodes: &[String]) -> Result<()> {
    if nodes.len() > MAX_NODES {
        return Err(Error::TooManyNodes(nodes.len()));
    }
    for (i, n) in nodes.iter().enumerate() {
        validate_name(n)?;
        if nodes[..i].contains(n) {
            return Err(Error::DuplicateName(n.clone()));
        }
    }
    Ok(())
}

/// Result of an acyclicity check.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Acyclicity {
    /// A topological order (parents before children).
    Acyclic(Vec<usize>),
    /// Node indices along a directed cycle, in arc order.
    Cycle(Vec<usize>),
}

impl Acyclicity {
    pub fn is_acyclic(&self) -> bool {
        matches!(self, Acyclicity::Acyclic(_))
    }
}

pub(crate) fn children_masks(parents: &[u64]) -> Vec<u64> {
    let mut ch = vec![0u64; parents.len()];
    for (i, &p) in parents.iter().enumerate() {
        for j in bits(p) {
            ch[j] |= bit(i);
        }
    }
    ch
}

/// Returns a topological certificate or a directed cycle for a square
/// adjacency given as per-child parent masks.
pub fn validate_acyclic(parents: &[u64]) -> Acyclicity {
    match topo_by_rank(parents, &(0..parents.len()).collect::<Vec<_>>()) {
        Some(order) => Acyclicity::Acyclic(order),
        None => Acyclicity::Cycle(find_cycle(parents).expect("Kahn failed so a cycle exists")),
    }
}

#[cfg(test)]
pub(crate) fn is_acyclic(parents: &[u64]) -> bool {
    let n = parents.len();
    let mut done = 0u64;
    let all = if n == 64 { u64::MAX } else { bit(n) - 1 };
    loop {
        let mut progressed = false;
        for (i, &p) in parents.iter().enumerate() {
            if done & bit(i) == 0 && p & !done == 0 {
                done |= bit(i);
                progressed = true;
            }
        }
        if done == all {
            return true;
        }
        if !progressed {
            return false;
        }
    }
}

/// Whether adding `parent -> child` to an acyclic graph keeps it acyclic,
/// i.e. `child` is not an ancestor of `parent`.
pub(crate) fn creates_cycle(parents: &[u64], child: usize, parent: usize) -> bool {
    if child == parent {
        return true;
    }
    // walk ancestors of `parent`
    let mut seen = 0u64;
    let mut stack = vec![parent];
    while let Some(v) = stack.pop() {
        if v == child {
            return true;
        }
        for p in bits(parents[v] & !seen) {
            seen |= bit(p);
            stack.push(p);
        }
    }
    false
}

/// Kahn's algorithm; among ready nodes the one with the smallest `rank` goes first.
fn topo_by_rank(parents: &[u64], rank: &[usize]) -> Option<Vec<usize>> {
    let n = parents.len();
    let mut placed = 0u64;
    let mut order = Vec::with_capacity(n);
    while order.len() < n {
        let next = (0..n)
            .filter(|&i| placed & bit(i) == 0 && parents[i] & !placed == 0)
            .min_by_key(|&i| rank[i])?;
        placed |= bit(next);
        order.push(next);
    }
    Some(order)
}

pub(crate) fn find_cycle(parents: &[u64]) -> Option<Vec<usize>> {
    let n = parents.len();
    let children = children_masks(parents);
    // 0 = unvisited, 1 = on stack, 2 = done
    let mut state = vec![0u8; n];
    let mut path: Vec<usize> = Vec::new();
    for start in 0..n {
        if state[start] != 0 {
            continue;
        }
        let mut stack: Vec<(usize, u64)> = vec![(start, children[start])];
        state[start] = 1;
        path.push(start);
        while let Some((v, rest)) = stack.last_mut() {
            if *rest == 0 {
                state[*v] = 2;
                stack.pop();
                path.pop();
                continue;
            }
            let c = rest.trailing_zeros() as usize;
            *rest &= *rest - 1;
            match state[c] {
                0 => {
                    state[c] = 1;
                    path.push(c);
                    stack.push((c, children[c]));
                }
                1 => {
                    let pos = path.iter().position(|&x| x == c).unwrap();
                    return Some(path[pos..].to_vec());
                }
                _ => {}
            }
        }
    }
    None
}

/// A directed acyclic graph over named nodes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dag {
    nodes: Vec<String>,
    parents: Vec<u64>,
}

impl Dag {
    /// Builds a DAG from per-child parent masks, rejecting cycles and self loops.
    pub fn new(nodes: Vec<String>, parents: Vec<u64>) -> Result<Self> {
        validate_names(&nodes)?;
        if parents.len() != nodes.len() {
            return Err(Error::NodeSetMismatch);
        }
        let n = nodes.len();
        for (i, &p) in parents.iter().enumerate() {
            if p & bit(i) != 0 {
                return Err(Error::SelfArc(nodes[i].clone()));
            }
            if n < 64 && p >> n != 0 {
                return Err(Error::NodeSetMismatch);
            }
        }
        if let Some(cycle) = find_cycle(&parents) {
            return Err(Error::CyclicInput(
                cycle.into_iter().map(|i| nodes[i].clone()).collect(),
            ));
        }
        Ok(Dag { nodes, parents })
    }

    pub fn empty(nodes: Vec<String>) -> Result<Self> {
        let n = nodes.len();
        Dag::new(nodes, vec![0; n])
    }

    /// Builds a DAG from `(parent, child)` name pairs.
    pub fn from_arcs(nodes: Vec<String>, arcs: &[(&str, &str)]) -> Result<Self> {
        let mut parents = vec![0u64; nodes.len()];
        let idx = |s: &str| {
            nodes
                .iter()
                .position(|n| n == s)
                .ok_or_else(|| Error::UnknownName(s.to_string()))
        };
        for &(p, c) in arcs {
            parents[idx(c)?] |= bit(idx(p)?);
        }
        Dag::new(nodes, parents)
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// Per-child parent masks.
    pub fn parent_masks(&self) -> &[u64] {
        &self.parents
    }

    pub fn parents_of(&self, i: usize) -> u64 {
        self.parents[i]
    }

    pub fn children_of(&self, i: usize) -> u64 {
        self.parents
            .iter()
            .enumerate()
            .filter(|(_, &p)| p & bit(i) != 0)
            .fold(0, |m, (c, _)| m | bit(c))
    }

    pub fn has_arc(&self, parent: usize, child: usize) -> bool {
        self.parents[child] & bit(parent) != 0
    }

    pub fn n_arcs(&self) -> usize {
        self.parents.iter().map(|p| p.count_ones() as usize).sum()
    }

    /// Arcs as `(parent, child)` index pairs in row-major (child, parent) order.
    pub fn arcs(&self) -> Vec<(usize, usize)> {
        self.parents
            .iter()
            .enumerate()
            .flat_map(|(c, &p)| bits(p).map(move |j| (j, c)))
            .collect()
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.nodes
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::UnknownName(name.to_string()))
    }

    /// Dense 0/1 matrix, row = child, column = parent.
    pub fn adjacency(&self) -> Vec<Vec<u8>> {
        let n = self.n_nodes();
        (0..n)
            .map(|i| (0..n).map(|j| u8::from(self.has_arc(j, i))).collect())
            .collect()
    }

    /// Topological order with ties broken by node name.
    pub fn topological_order(&self) -> Vec<usize> {
        let mut by_name: Vec<usize> = (0..self.n_nodes()).collect();
        by_name.sort_by(|&a, &b| self.nodes[a].cmp(&self.nodes[b]));
        let mut rank = vec![0; self.n_nodes()];
        for (r, &i) in by_name.iter().enumerate() {
            rank[i] = r;
        }
        topo_by_rank(&self.parents, &rank).expect("Dag is acyclic by construction")
    }

    /// Same as [`Dag::topological_order`] but returns names.
    pub fn topological_names(&self) -> Vec<&str> {
        self.topological_order()
            .into_iter()
            .map(|i| self.nodes[i].as_str())
            .collect()
    }

    /// Parents, children and co-parents of `node`, excluding the node itself.
    pub fn markov_blanket(&self, node: usize) -> u64 {
        let children = self.children_of(node);
        let mut mb = self.parents[node] | children;
        for c in bits(children) {
            mb |= self.parents[c];
        }
        mb & !bit(node)
    }

    pub fn markov_blanket_names(&self, name: &str) -> Result<Vec<String>> {
        let i = self.index_of(name)?;
        Ok(bits(self.markov_blanket(i))
            .map(|j| self.nodes[j].clone())
            .collect())
    }

    /// Returns the DAG with nodes renamed/reordered by `perm`: new node `k`
    /// is old node `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Dag> {
        let n = self.n_nodes();
        let mut inv = vec![0; n];
        for (k, &old) in perm.iter().enumerate() {
            inv[old] = k;
        }
        let nodes = perm.iter().map(|&o| self.nodes[o].clone()).collect();
        let parents = perm
            .iter()
            .map(|&o| bits(self.parents[o]).fold(0, |m, j| m | bit(inv[j])))
            .collect();
        Dag::new(nodes, parents)
    }

    pub fn with_parents(&self, parents: Vec<u64>) -> Result<Dag> {
        Dag::new(self.nodes.clone(), parents)
    }
}

/// Summary counts describing a DAG.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DagMetrics {
    pub n_nodes: usize,
    pub n_arcs: usize,
    pub avg_markov_blanket: f64,
    pub avg_neighborhood: f64,
    pub avg_parents: f64,
    pub avg_children: f64,
}

pub fn info_metrics(dag: &Dag) -> DagMetrics {
    let n = dag.n_nodes();
    let n_arcs = dag.n_arcs();
    if n == 0 {
        return DagMetrics {
            n_nodes: 0,
            n_arcs: 0,
            avg_markov_blanket: 0.0,
            avg_neighborhood: 0.0,
            avg_parents: 0.0,
            avg_children: 0.0,
        };
    }
    let mb: u32 = (0..n).map(|i| dag.markov_blanket(i).count_ones()).sum();
    let nh: u32 = (0..n)
        .map(|i| (dag.parents_of(i) | dag.children_of(i)).count_ones())
        .sum();
    let nf = n as f64;
    DagMetrics {
        n_nodes: n,
        n_arcs,
        avg_markov_blanket: f64::from(mb) / nf,
        avg_neighborhood: f64::from(nh) / nf,
        avg_parents: n_arcs as f64 / nf,
        avg_children: n_arcs as f64 / nf,
    }
}

/// Arc-wise confusion of a candidate DAG against a reference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DagComparison {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
    pub tpr: f64,
    pub fpr: f64,
    pub accuracy: f64,
    pub g_measure: f64,
    pub f1: f64,
    pub ppv: f64,
    pub false_omission_rate: f64,
    pub hamming: usize,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Confusion counts over the n(n-1) ordered node pairs. Rates with a zero
/// denominator are reported as 0.
pub fn compare_dags(reference: &Dag, candidate: &Dag) -> Result<DagComparison> {
    if reference.nodes() != candidate.nodes() {
        return Err(Error::NodeSetMismatch);
    }
    let n = reference.n_nodes();
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            match (reference.has_arc(j, i), candidate.has_arc(j, i)) {
                (true, true) => tp += 1,
                (false, true) => fp += 1,
                (true, false) => fn_ += 1,
                (false, false) => tn += 1,
            }
        }
    }
    let tpr = ratio(tp, tp + fn_);
    let ppv = ratio(tp, tp + fp);
    Ok(DagComparison {
        tp,
        fp,
        tn,
        fn_,
        tpr,
        fpr: ratio(fp, fp + tn),
        accuracy: ratio(tp + tn, tp + tn + fp + fn_),
        g_measure: (tpr * ppv).sqrt(),
        f1: ratio(2 * tp, 2 * tp + fp + fn_),
        ppv,
        false_omission_rate: ratio(fn_, fn_ + tn),
        hamming: fp + fn_,
    })
}

/// Banned and retained arcs plus a per-node parent limit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstraintSet {
    pub banned: Vec<u64>,
    pub retained: Vec<u64>,
    pub max_parents: Vec<usize>,
}

impl ConstraintSet {
    pub fn unconstrained(n: usize, max_parents: usize) -> Self {
        ConstraintSet {
            banned: vec![0; n],
            retained: vec![0; n],
            max_parents: vec![max_parents; n],
        }
    }

    pub fn new(banned: Vec<u64>, retained: Vec<u64>, max_parents: Vec<usize>) -> Self {
        ConstraintSet {
            banned,
            retained,
            max_parents,
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.banned.len()
    }

    /// Checks the constraint invariants against a node list.
    pub fn validate(&self, nodes: &[String]) -> Result<()> {
        let n = nodes.len();
        if self.banned.len() != n || self.retained.len() != n || self.max_parents.len() != n {
            return Err(Error::NodeSetMismatch);
        }
        for i in 0..n {
            if self.banned[i] & self.retained[i] != 0 {
                return Err(Error::InvalidConstraints(format!(
                    "arc into `{}` is both banned and retained",
                    nodes[i]
                )));
            }
            if self.retained[i] & bit(i) != 0 {
                return Err(Error::SelfArc(nodes[i].clone()));
            }
            let r = self.retained[i].count_ones() as usize;
            if r > self.max_parents[i] {
                return Err(Error::RetainedExceedsLimit {
                    node: nodes[i].clone(),
                    retained: r,
                    limit: self.max_parents[i],
                });
            }
        }
        if let Some(cycle) = find_cycle(&self.retained) {
            return Err(Error::InvalidConstraints(format!(
                "retained arcs form a cycle through {:?}",
                cycle.iter().map(|&i| &nodes[i]).collect::<Vec<_>>()
            )));
        }
        Ok(())
    }

    /// Whether `mask` is an admissible parent set for node `i`.
    pub fn allows(&self, i: usize, mask: u64) -> bool {
        mask & bit(i) == 0
            && mask & self.banned[i] == 0
            && mask & self.retained[i] == self.retained[i]
            && mask.count_ones() as usize <= self.max_parents[i]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    pub(crate) fn asia() -> Dag {
        Dag::from_arcs(
            names(&[
                "Asia",
                "Smoking",
                "Tuberculosis",
                "LungCancer",
                "Bronchitis",
                "Either",
                "XRay",
                "Dyspnea",
            ]),
            &[
                ("Smoking", "LungCancer"),
                ("Smoking", "Bronchitis"),
                ("Tuberculosis", "Either"),
                ("LungCancer", "Either"),
                ("Either", "XRay"),
                ("Either", "Dyspnea"),
                ("Bronchitis", "Dyspnea"),
            ],
        )
        .unwrap()
    }

    pub(crate) fn case_study() -> Dag {
        Dag::from_arcs(
            names(&[
                "AR", "pneumS", "female", "livdam", "eggs", "wormCount", "age", "adg",
            ]),
            &[
                ("age", "AR"),
                ("age", "pneumS"),
                ("eggs", "livdam"),
                ("adg", "eggs"),
                ("AR", "wormCount"),
                ("eggs", "wormCount"),
                ("age", "wormCount"),
                ("adg", "wormCount"),
                ("female", "age"),
                ("age", "adg"),
            ],
        )
        .unwrap()
    }

    #[test]
    fn rejects_cycles_and_bad_names() {
        let err = Dag::from_arcs(names(&["a", "b"]), &[("a", "b"), ("b", "a")]).unwrap_err();
        assert!(matches!(err, Error::CyclicInput(_)));
        assert!(Dag::empty(names(&["a|b"])).is_err());
        assert!(Dag::empty(names(&["a", "a"])).is_err());
        assert!(Dag::empty(names(&[""])).is_err());
    }

    #[test]
    fn acyclicity_witnesses() {
        assert!(validate_acyclic(&[]).is_acyclic());
        assert_eq!(validate_acyclic(&[0b10, 0b01]), Acyclicity::Cycle(vec![0, 1]));
        assert!(validate_acyclic(asia().parent_masks()).is_acyclic());
        // 3-cycle a->b->c->a
        match validate_acyclic(&[0b100, 0b001, 0b010]) {
            Acyclicity::Cycle(c) => assert_eq!(c.len(), 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn topological_order_tie_breaks_by_name() {
        let chain = Dag::from_arcs(names(&["c", "b", "a"]), &[("a", "b"), ("b", "c")]).unwrap();
        assert_eq!(chain.topological_names(), vec!["a", "b", "c"]);
        let empty = Dag::empty(names(&["b", "a"])).unwrap();
        assert_eq!(empty.topological_names(), vec!["a", "b"]);

        let cs = case_study();
        let order = cs.topological_order();
        let pos = |s: &str| order.iter().position(|&i| i == cs.index_of(s).unwrap()).unwrap();
        for (p, c) in cs.arcs() {
            assert!(pos(&cs.nodes()[p]) < pos(&cs.nodes()[c]));
        }
        assert!(pos("age") < pos("adg"));
        assert!(pos("eggs") < pos("wormCount"));
    }

    #[test]
    fn asia_markov_blankets() {
        let d = asia();
        let mut mb = d.markov_blanket_names("Dyspnea").unwrap();
        mb.sort();
        assert_eq!(mb, vec!["Bronchitis", "Either"]);
        let mut mb = d.markov_blanket_names("Either").unwrap();
        mb.sort();
        assert_eq!(
            mb,
            vec!["Bronchitis", "Dyspnea", "LungCancer", "Tuberculosis", "XRay"]
        );
        let iso = Dag::empty(names(&["x", "y"])).unwrap();
        assert_eq!(iso.markov_blanket(0), 0);
        assert!(matches!(
            d.markov_blanket_names("Nope"),
            Err(Error::UnknownName(_))
        ));
    }

    #[test]
    fn metrics_case_study_and_small() {
        let m = info_metrics(&case_study());
        assert_eq!(m.n_nodes, 8);
        assert_eq!(m.n_arcs, 10);
        assert_eq!(m.avg_parents, 1.25);
        assert_eq!(m.avg_children, 1.25);
        assert_eq!(m.avg_neighborhood, 2.5);
        // parents ∪ children ∪ co-parents, deduplicated
        assert_eq!(m.avg_markov_blanket, 3.25);

        let e = info_metrics(&Dag::empty(names(&["a", "b", "c", "d", "e", "f", "g", "h"])).unwrap());
        assert_eq!(e.avg_markov_blanket, 0.0);
        assert_eq!(e.avg_parents, 0.0);
        assert_eq!(e.avg_neighborhood, 0.0);

        // full lower triangle on 4 nodes: node i has parents 0..i
        let parents = vec![0, 0b1, 0b11, 0b111];
        let full = Dag::new(names(&["a", "b", "c", "d"]), parents).unwrap();
        let m = info_metrics(&full);
        assert_eq!(m.n_arcs, 6);
        assert_eq!(m.avg_parents, 1.5);
        assert_eq!(m.avg_markov_blanket, 3.0);
    }

    #[test]
    fn comparison_counts() {
        let nodes = names(&["a", "b", "c", "d"]);
        let d = case_study();
        let same = compare_dags(&d, &d).unwrap();
        assert_eq!(same.tpr, 1.0);
        assert_eq!(same.fpr, 0.0);
        assert_eq!(same.hamming, 0);

        let one = Dag::from_arcs(nodes.clone(), &[("a", "b")]).unwrap();
        let none = Dag::empty(nodes.clone()).unwrap();
        let c = compare_dags(&one, &none).unwrap();
        assert_eq!(c.tpr, 0.0);
        assert_eq!(c.hamming, 1);

        let reference =
            Dag::from_arcs(nodes.clone(), &[("a", "b"), ("b", "c"), ("c", "d")]).unwrap();
        let cand = Dag::from_arcs(nodes.clone(), &[("a", "b"), ("b", "c"), ("a", "d")]).unwrap();
        let c = compare_dags(&reference, &cand).unwrap();
        assert_eq!((c.tp, c.fn_, c.fp, c.tn), (2, 1, 1, 8));
        assert!((c.f1 - 4.0 / 6.0).abs() < 1e-12);
        assert_eq!(c.hamming, 2);

        let other = Dag::empty(names(&["a", "b", "c", "x"])).unwrap();
        assert_eq!(compare_dags(&none, &other), Err(Error::NodeSetMismatch));
    }

    #[test]
    fn constraint_validation() {
        let nodes = names(&["a", "b", "c"]);
        let ok = ConstraintSet::new(vec![0b010, 0, 0], vec![0, 0b001, 0], vec![2; 3]);
        ok.validate(&nodes).unwrap();
        let clash = ConstraintSet::new(vec![0, 0b001, 0], vec![0, 0b001, 0], vec![2; 3]);
        assert!(clash.validate(&nodes).is_err());
        let over = ConstraintSet::new(vec![0; 3], vec![0, 0, 0b011], vec![1; 3]);
        assert!(matches!(
            over.validate(&nodes),
            Err(Error::RetainedExceedsLimit { .. })
        ));
        let cyc = ConstraintSet::new(vec![0; 3], vec![0b010, 0b001, 0], vec![2; 3]);
        assert!(cyc.validate(&nodes).is_err());
    }

    #[test]
    fn cycle_creation_check() {
        let d = Dag::from_arcs(names(&["a", "b", "c"]), &[("a", "b"), ("b", "c")]).unwrap();
        assert!(creates_cycle(d.parent_masks(), 0, 2));
        assert!(!creates_cycle(d.parent_masks(), 2, 0));
        assert!(is_acyclic(d.parent_masks()));
    }
}

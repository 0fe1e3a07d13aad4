//! Discretization, plug-in entropies, mutual information and percentage
//! link strength.

use crate::dag::{bits, Dag, LabeledMatrix};
use crate::data::{Dataset, Distribution};
use crate::error::{Error, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fmt;

/// Histogram rule for continuous and count columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinRule {
    /// `k` bins of (near) equal counts, assigned from ranks.
    FixedK(usize),
    Sturges,
    Scott,
    FreedmanDiaconis,
}

impl Default for BinRule {
    fn default() -> Self {
        BinRule::FixedK(8)
    }
}

impl fmt::Display for BinRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BinRule::FixedK(k) => write!(f, "fixed_k:{k}"),
            BinRule::Sturges => f.write_str("sturges"),
            BinRule::Scott => f.write_str("scott"),
            BinRule::FreedmanDiaconis => f.write_str("freedman_diaconis"),
        }
    }
}

impl std::str::FromStr for BinRule {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Parse(format!("unknown binning rule `{s}`"));
        match s {
            "sturges" => Ok(BinRule::Sturges),
            "scott" => Ok(BinRule::Scott),
            "fd" | "freedman_diaconis" => Ok(BinRule::FreedmanDiaconis),
            "fixed_k" => Ok(BinRule::default()),
            other => {
                let k = other.strip_prefix("fixed_k:").ok_or_else(bad)?;
                match k.parse() {
                    Ok(k) if k >= 1 => Ok(BinRule::FixedK(k)),
                    _ => Err(bad()),
                }
            }
        }
    }
}

/// Bin indices per column.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscretizedData {
    pub names: Vec<String>,
    pub rule: BinRule,
    pub columns: Vec<Vec<u32>>,
    pub n_bins: Vec<usize>,
    /// Lower edge of each bin.
    pub edges: Vec<Vec<f64>>,
}

impl DiscretizedData {
    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::UnknownName(name.to_string()))
    }
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

fn equal_width(col: &[f64], lo: f64, hi: f64, k: usize) -> (Vec<u32>, Vec<f64>) {
    let width = (hi - lo) / k as f64;
    let idx = col
        .iter()
        .map(|&v| (((v - lo) / width).floor() as usize).min(k - 1) as u32)
        .collect();
    let edges = (0..k).map(|b| lo + b as f64 * width).collect();
    (idx, edges)
}

fn bin_column(col: &[f64], rule: BinRule) -> (Vec<u32>, usize, Vec<f64>) {
    let n = col.len();
    let mut sorted = col.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (lo, hi) = (sorted[0], sorted[n - 1]);
    if lo == hi {
        log::warn!("constant column placed in a single bin");
        return (vec![0; n], 1, vec![lo]);
    }
    let nf = n as f64;
    let by_width = |h: f64| -> usize {
        if h > 0.0 {
            ((hi - lo) / h).ceil().max(1.0) as usize
        } else {
            (nf.log2().ceil() as usize) + 1
        }
    };
    match rule {
        BinRule::FixedK(k) => {
            let k = k.max(1);
            // bin from the number of strictly smaller values, so ties share a bin
            let idx: Vec<u32> = col
                .iter()
                .map(|&v| {
                    let below = sorted.partition_point(|&s| s < v);
                    ((below * k) / n) as u32
                })
                .collect();
            let mut edges = vec![f64::NAN; k];
            for (&v, &b) in col.iter().zip(&idx) {
                let e = &mut edges[b as usize];
                if e.is_nan() || v < *e {
                    *e = v;
                }
            }
            (idx, k, edges)
        }
        BinRule::Sturges => {
            let k = (nf.log2().ceil() as usize) + 1;
            let (idx, edges) = equal_width(col, lo, hi, k);
            (idx, k, edges)
        }
        BinRule::Scott => {
            let mean = col.iter().sum::<f64>() / nf;
            let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (nf - 1.0).max(1.0)).sqrt();
            let k = by_width(3.49 * sd * nf.powf(-1.0 / 3.0));
            let (idx, edges) = equal_width(col, lo, hi, k);
            (idx, k, edges)
        }
        BinRule::FreedmanDiaconis => {
            let iqr = quantile(&sorted, 0.75) - quantile(&sorted, 0.25);
            let k = by_width(2.0 * iqr * nf.powf(-1.0 / 3.0));
            let (idx, edges) = equal_width(col, lo, hi, k);
            (idx, k, edges)
        }
    }
}

/// Bins gaussian and poisson columns by `rule`; binomial columns keep their
/// two levels.
pub fn discretize(ds: &Dataset, rule: BinRule) -> DiscretizedData {
    let mut columns = Vec::with_capacity(ds.n_vars());
    let mut n_bins = Vec::with_capacity(ds.n_vars());
    let mut edges = Vec::with_capacity(ds.n_vars());
    for (col, dist) in ds.columns().iter().zip(ds.dists()) {
        if *dist == Distribution::Binomial {
            columns.push(col.iter().map(|&v| v as u32).collect());
            n_bins.push(2);
            edges.push(vec![0.0, 1.0]);
        } else {
            let (idx, k, e) = bin_column(col, rule);
            columns.push(idx);
            n_bins.push(k);
            edges.push(e);
        }
    }
    DiscretizedData {
        names: ds.names().to_vec(),
        rule,
        columns,
        n_bins,
        edges,
    }
}

/// Plug-in joint entropy (bits) of one or more equally long columns.
pub fn empirical_entropy(columns: &[&[u32]]) -> f64 {
    let Some(first) = columns.first() else {
        return 0.0;
    };
    let n = first.len();
    if n == 0 {
        return 0.0;
    }
    let mut counts: HashMap<Vec<u32>, usize> = HashMap::new();
    for row in 0..n {
        let key: Vec<u32> = columns.iter().map(|c| c[row]).collect();
        *counts.entry(key).or_insert(0) += 1;
    }
    let nf = n as f64;
    // sort counts so the sum does not depend on hash order
    let mut c: Vec<usize> = counts.into_values().collect();
    c.sort_unstable();
    let h: f64 = c
        .iter()
        .map(|&k| {
            let p = k as f64 / nf;
            -p * p.log2()
        })
        .sum();
    h.max(0.0)
}

/// `H(x) + H(y) − H(x, y)`, clamped at zero.
pub fn mutual_information(x: &[u32], y: &[u32]) -> f64 {
    let (a, b) = if x <= y { (x, y) } else { (y, x) };
    (empirical_entropy(&[a]) + empirical_entropy(&[b]) - empirical_entropy(&[a, b])).max(0.0)
}

/// Percentage link strength of `x → y` given co-parents `z`.
pub fn percentage_link_strength(y: &[u32], x: &[u32], z: &[&[u32]]) -> f64 {
    let mut yz: Vec<&[u32]> = vec![y];
    yz.extend_from_slice(z);
    let h_y_given_z = empirical_entropy(&yz) - empirical_entropy(z);
    if h_y_given_z <= 1e-12 {
        return 0.0;
    }
    let mut yxz = yz.clone();
    yxz.push(x);
    let mut xz: Vec<&[u32]> = vec![x];
    xz.extend_from_slice(z);
    let h_y_given_xz = empirical_entropy(&yxz) - empirical_entropy(&xz);
    ((h_y_given_z - h_y_given_xz) / h_y_given_z).clamp(0.0, 1.0)
}

fn map_columns(dag: &Dag, disc: &DiscretizedData) -> Result<Vec<usize>> {
    dag.nodes().iter().map(|n| disc.index_of(n)).collect()
}

/// PLS of every arc, `values[child][parent]`, zero off the DAG.
pub fn pls_matrix(dag: &Dag, disc: &DiscretizedData) -> Result<LabeledMatrix> {
    let cols = map_columns(dag, disc)?;
    let arcs = dag.arcs();
    let values: Vec<f64> = arcs
        .par_iter()
        .map(|&(p, c)| {
            let z: Vec<&[u32]> = bits(dag.parents_of(c) & !(1u64 << p))
                .map(|k| disc.columns[cols[k]].as_slice())
                .collect();
            percentage_link_strength(&disc.columns[cols[c]], &disc.columns[cols[p]], &z)
        })
        .collect();
    let mut m = LabeledMatrix::zeros(dag.nodes().to_vec());
    for (&(p, c), v) in arcs.iter().zip(values) {
        m.values[c][p] = v;
    }
    Ok(m)
}

/// Raw mutual information of every arc's endpoints, `values[child][parent]`.
pub fn mi_matrix(dag: &Dag, disc: &DiscretizedData) -> Result<LabeledMatrix> {
    let cols = map_columns(dag, disc)?;
    let mut m = LabeledMatrix::zeros(dag.nodes().to_vec());
    for (p, c) in dag.arcs() {
        m.values[c][p] = mutual_information(&disc.columns[cols[c]], &disc.columns[cols[p]]);
    }
    Ok(m)
}

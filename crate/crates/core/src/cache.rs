//! Per-node score cache over all admissible parent sets.

use crate::dag::{bit, bits, ConstraintSet};
use crate::data::{build_design, Dataset};
use crate::error::{Error, Result};
use crate::glm::{fit_node, frequentist_scores, FitMethod, PriorSpec};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fmt::{self, Write as _};
use std::io::{BufRead, Write};

const FORMAT_HEADER: &str = "abnkit-score-cache 1";

/// Score stored for each parent set. All are larger-is-better.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreType {
    Mlik,
    LogLik,
    Aic,
    Bic,
    Mdl,
}

impl ScoreType {
    pub fn for_method(method: FitMethod) -> &'static [ScoreType] {
        match method {
            FitMethod::Bayes => &[ScoreType::Mlik],
            FitMethod::Mle => &[ScoreType::LogLik, ScoreType::Aic, ScoreType::Bic, ScoreType::Mdl],
        }
    }

    /// Default score of a method.
    pub fn default_for(method: FitMethod) -> ScoreType {
        match method {
            FitMethod::Bayes => ScoreType::Mlik,
            FitMethod::Mle => ScoreType::Bic,
        }
    }
}

impl fmt::Display for ScoreType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScoreType::Mlik => "mlik",
            ScoreType::LogLik => "loglik",
            ScoreType::Aic => "aic",
            ScoreType::Bic => "bic",
            ScoreType::Mdl => "mdl",
        })
    }
}

impl std::str::FromStr for ScoreType {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "mlik" => ScoreType::Mlik,
            "loglik" => ScoreType::LogLik,
            "aic" => ScoreType::Aic,
            "bic" => ScoreType::Bic,
            "mdl" => ScoreType::Mdl,
            other => return Err(Error::Parse(format!("unknown score `{other}`"))),
        })
    }
}

/// One scored parent set. `values` follows [`ScoreCache::score_types`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub parents: u64,
    pub values: Vec<f64>,
    /// Reason the fit failed; the values are then `-inf`.
    pub diagnostic: Option<String>,
}

/// Every admissible parent set of `node` in ascending bitmask order.
pub fn enumerate_parent_sets(
    node: usize,
    constraints: &ConstraintSet,
    n_nodes: usize,
) -> Result<Vec<u64>> {
    if n_nodes > crate::dag::MAX_NODES {
        return Err(Error::TooManyNodes(n_nodes));
    }
    let retained = constraints.retained[node];
    let limit = constraints.max_parents[node];
    let n_ret = retained.count_ones() as usize;
    if n_ret > limit {
        return Err(Error::RetainedExceedsLimit {
            node: node.to_string(),
            retained: n_ret,
            limit,
        });
    }
    let all = if n_nodes == 64 { u64::MAX } else { bit(n_nodes) - 1 };
    let free: Vec<usize> = bits(all & !bit(node) & !constraints.banned[node] & !retained).collect();
    let extra = limit - n_ret;
    let mut out = Vec::new();
    // combinations of `free` of every size up to `extra`
    let mut stack: Vec<(usize, u64, usize)> = vec![(0, retained, 0)];
    while let Some((start, mask, used)) = stack.pop() {
        out.push(mask);
        if used == extra {
            continue;
        }
        for (k, &j) in free.iter().enumerate().skip(start) {
            stack.push((k + 1, mask | bit(j), used + 1));
        }
    }
    out.sort_unstable();
    Ok(out)
}

/// Per-node local scores of one score type, the input to structure search.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalScores {
    nodes: Vec<String>,
    entries: Vec<Vec<(u64, f64)>>,
    lookup: Vec<HashMap<u64, f64>>,
}

impl LocalScores {
    /// `entries[i]` lists `(parent mask, score)` for node `i`.
    pub fn new(nodes: Vec<String>, mut entries: Vec<Vec<(u64, f64)>>) -> Result<Self> {
        if nodes.len() != entries.len() {
            return Err(Error::NodeSetMismatch);
        }
        if nodes.len() > crate::dag::MAX_NODES {
            return Err(Error::TooManyNodes(nodes.len()));
        }
        if entries.iter().any(Vec::is_empty) {
            return Err(Error::EmptyCache);
        }
        let mut lookup = Vec::with_capacity(nodes.len());
        for (i, list) in entries.iter_mut().enumerate() {
            list.sort_by_key(|e| e.0);
            let mut map = HashMap::with_capacity(list.len());
            for &(m, s) in list.iter() {
                if m & bit(i) != 0 {
                    return Err(Error::SelfArc(nodes[i].clone()));
                }
                if map.insert(m, s).is_some() {
                    return Err(Error::Parse(format!("duplicate parent set {m:#x} for `{}`", nodes[i])));
                }
            }
            lookup.push(map);
        }
        Ok(LocalScores {
            nodes,
            entries,
            lookup,
        })
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn entries(&self, node: usize) -> &[(u64, f64)] {
        &self.entries[node]
    }

    pub fn get(&self, node: usize, mask: u64) -> Option<f64> {
        self.lookup[node].get(&mask).copied()
    }

    pub fn score(&self, node: usize, mask: u64) -> Result<f64> {
        self.get(node, mask).ok_or(Error::NotInCache { node, mask })
    }

    /// Sum of local scores of a full parent assignment, in node order.
    pub fn total(&self, parents: &[u64]) -> Result<f64> {
        let mut s = 0.0;
        for (i, &m) in parents.iter().enumerate() {
            s += self.score(i, m)?;
        }
        Ok(s)
    }
}

/// Scores of every admissible parent set of every node for one dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreCache {
    pub nodes: Vec<String>,
    pub fingerprint: String,
    pub method: FitMethod,
    pub priors: PriorSpec,
    pub constraints: ConstraintSet,
    pub n_obs: usize,
    entries: Vec<Vec<CacheEntry>>,
    index: Vec<HashMap<u64, usize>>,
}

impl ScoreCache {
    fn from_parts(
        nodes: Vec<String>,
        fingerprint: String,
        method: FitMethod,
        priors: PriorSpec,
        constraints: ConstraintSet,
        n_obs: usize,
        entries: Vec<Vec<CacheEntry>>,
    ) -> Self {
        let index = entries
            .iter()
            .map(|list| list.iter().enumerate().map(|(k, e)| (e.parents, k)).collect())
            .collect();
        ScoreCache {
            nodes,
            fingerprint,
            method,
            priors,
            constraints,
            n_obs,
            entries,
            index,
        }
    }

    pub fn score_types(&self) -> &'static [ScoreType] {
        ScoreType::for_method(self.method)
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn entries(&self, node: usize) -> &[CacheEntry] {
        &self.entries[node]
    }

    pub fn len(&self) -> usize {
        self.entries.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn type_slot(&self, score: ScoreType) -> Result<usize> {
        self.score_types()
            .iter()
            .position(|&t| t == score)
            .ok_or_else(|| Error::ScoreMismatch(format!("{score} is not available for method {}", self.method)))
    }

    pub fn entry(&self, node: usize, mask: u64) -> Result<&CacheEntry> {
        self.index
            .get(node)
            .and_then(|m| m.get(&mask))
            .map(|&k| &self.entries[node][k])
            .ok_or(Error::NotInCache { node, mask })
    }

    pub fn score(&self, node: usize, mask: u64, score: ScoreType) -> Result<f64> {
        let slot = self.type_slot(score)?;
        Ok(self.entry(node, mask)?.values[slot])
    }

    /// Extracts one score type for search.
    pub fn local_scores(&self, score: ScoreType) -> Result<LocalScores> {
        let slot = self.type_slot(score)?;
        LocalScores::new(
            self.nodes.clone(),
            self.entries
                .iter()
                .map(|list| list.iter().map(|e| (e.parents, e.values[slot])).collect())
                .collect(),
        )
    }

    /// Entries whose fit failed, as `(node, mask, reason)`.
    pub fn failures(&self) -> Vec<(usize, u64, &str)> {
        let mut out = Vec::new();
        for (i, list) in self.entries.iter().enumerate() {
            for e in list {
                if let Some(d) = &e.diagnostic {
                    out.push((i, e.parents, d.as_str()));
                }
            }
        }
        out
    }

    pub fn check_fingerprint(&self, ds: &Dataset) -> Result<()> {
        if self.fingerprint != ds.fingerprint() {
            return Err(Error::FingerprintMismatch {
                expected: ds.fingerprint().to_string(),
                found: self.fingerprint.clone(),
            });
        }
        Ok(())
    }

    /// Writes the portable text form. Values use Rust's shortest
    /// round-trip float formatting, so reading back is exact.
    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        let mut s = String::new();
        let _ = writeln!(s, "{FORMAT_HEADER}");
        let _ = writeln!(s, "fingerprint {}", self.fingerprint);
        let _ = writeln!(s, "method {}", self.method);
        let _ = writeln!(s, "n_obs {}", self.n_obs);
        let p = &self.priors;
        let _ = writeln!(
            s,
            "priors {:e} {:e} {:e} {:e} {}",
            p.coef_mean,
            p.coef_variance,
            p.precision_shape,
            p.precision_rate,
            p.fixed_precision.map_or("none".to_string(), |t| format!("{t:e}"))
        );
        let _ = writeln!(s, "nodes {}", self.nodes.join(" "));
        let c = &self.constraints;
        let join = |v: &[u64]| v.iter().map(|m| m.to_string()).collect::<Vec<_>>().join(" ");
        let _ = writeln!(s, "banned {}", join(&c.banned));
        let _ = writeln!(s, "retained {}", join(&c.retained));
        let _ = writeln!(
            s,
            "max_parents {}",
            c.max_parents.iter().map(|m| m.to_string()).collect::<Vec<_>>().join(" ")
        );
        let types = self.score_types();
        let _ = writeln!(s, "records {}", self.len() * types.len());
        for (i, list) in self.entries.iter().enumerate() {
            for e in list {
                for (t, v) in types.iter().zip(&e.values) {
                    let _ = writeln!(s, "{i} {} {t} {v:e}", e.parents);
                }
            }
        }
        for (i, mask, why) in self.failures() {
            let _ = writeln!(s, "failed {i} {mask} {}", why.replace('\n', " "));
        }
        w.write_all(s.as_bytes())?;
        Ok(())
    }

    pub fn read<R: BufRead>(r: R) -> Result<Self> {
        let lines: Vec<String> = r.lines().collect::<std::io::Result<_>>()?;
        let mut it = lines.iter().map(String::as_str);
        let bad = |m: &str| Error::Parse(format!("score cache: {m}"));
        if it.next() != Some(FORMAT_HEADER) {
            return Err(bad("unrecognized header"));
        }
        let mut field = |key: &str| -> Result<&str> {
            let line = it.next().ok_or_else(|| bad("truncated header"))?;
            line.strip_prefix(key)
                .and_then(|r| r.strip_prefix(' ').or(if r.is_empty() { Some("") } else { None }))
                .ok_or_else(|| bad(&format!("expected `{key}`")))
        };
        let num = |t: &str| t.parse::<f64>().map_err(|_| bad(&format!("bad number `{t}`")));
        let fingerprint = field("fingerprint")?.to_string();
        let method: FitMethod = field("method")?.parse()?;
        let n_obs = field("n_obs")?.parse().map_err(|_| bad("bad n_obs"))?;
        let pr: Vec<&str> = field("priors")?.split(' ').collect();
        if pr.len() != 5 {
            return Err(bad("bad priors line"));
        }
        let priors = PriorSpec {
            coef_mean: num(pr[0])?,
            coef_variance: num(pr[1])?,
            precision_shape: num(pr[2])?,
            precision_rate: num(pr[3])?,
            fixed_precision: if pr[4] == "none" { None } else { Some(num(pr[4])?) },
        };
        let nodes: Vec<String> = field("nodes")?.split_whitespace().map(str::to_string).collect();
        let masks = |t: &str| -> Result<Vec<u64>> {
            t.split_whitespace()
                .map(|v| v.parse().map_err(|_| bad("bad mask")))
                .collect()
        };
        let banned = masks(field("banned")?)?;
        let retained = masks(field("retained")?)?;
        let max_parents = field("max_parents")?
            .split_whitespace()
            .map(|v| v.parse().map_err(|_| bad("bad max_parents")))
            .collect::<Result<Vec<usize>>>()?;
        let constraints = ConstraintSet::new(banned, retained, max_parents);
        constraints.validate(&nodes)?;
        let n_records: usize = field("records")?.parse().map_err(|_| bad("bad record count"))?;
        let types = ScoreType::for_method(method);
        let mut entries: Vec<Vec<CacheEntry>> = vec![Vec::new(); nodes.len()];
        let mut seen = 0;
        for line in it {
            let t: Vec<&str> = line.splitn(4, ' ').collect();
            if t[0] == "failed" {
                if t.len() < 3 {
                    return Err(bad("bad failure line"));
                }
                let rest: Vec<&str> = line.splitn(4, ' ').collect();
                let i: usize = rest[1].parse().map_err(|_| bad("bad node index"))?;
                let m: u64 = rest[2].parse().map_err(|_| bad("bad mask"))?;
                let e = entries
                    .get_mut(i)
                    .and_then(|l| l.iter_mut().find(|e| e.parents == m))
                    .ok_or_else(|| bad("failure for unknown entry"))?;
                e.diagnostic = Some(rest.get(3).unwrap_or(&"").to_string());
                continue;
            }
            if t.len() != 4 {
                return Err(bad(&format!("bad record `{line}`")));
            }
            let i: usize = t[0].parse().map_err(|_| bad("bad node index"))?;
            let m: u64 = t[1].parse().map_err(|_| bad("bad mask"))?;
            let ty: ScoreType = t[2].parse()?;
            let v = num(t[3])?;
            let list = entries.get_mut(i).ok_or_else(|| bad("node index out of range"))?;
            let slot = types.iter().position(|&x| x == ty).ok_or_else(|| bad("score type does not match method"))?;
            if slot == 0 {
                list.push(CacheEntry {
                    parents: m,
                    values: vec![f64::NAN; types.len()],
                    diagnostic: None,
                });
            }
            let e = list.last_mut().filter(|e| e.parents == m).ok_or_else(|| bad("records out of order"))?;
            e.values[slot] = v;
            seen += 1;
        }
        if seen != n_records {
            return Err(bad("record count mismatch"));
        }
        for (i, list) in entries.iter().enumerate() {
            if list.iter().any(|e| e.values.iter().any(|v| v.is_nan()) || !constraints.allows(i, e.parents)) {
                return Err(bad("incomplete or inadmissible entry"));
            }
        }
        Ok(ScoreCache::from_parts(
            nodes,
            fingerprint,
            method,
            priors,
            constraints,
            n_obs,
            entries,
        ))
    }

    /// Reads a cache and checks it belongs to `ds`.
    pub fn read_for<R: BufRead>(r: R, ds: &Dataset) -> Result<Self> {
        let c = Self::read(r)?;
        c.check_fingerprint(ds)?;
        if c.nodes != ds.names() {
            return Err(Error::NodeSetMismatch);
        }
        Ok(c)
    }
}

fn score_one(
    ds: &Dataset,
    node: usize,
    mask: u64,
    method: FitMethod,
    priors: &PriorSpec,
) -> std::result::Result<Vec<f64>, String> {
    let design = build_design(ds, node, mask).map_err(|e| e.to_string())?;
    let family = ds.dists()[node].into();
    let fit = fit_node(&design, family, method, priors).map_err(|e| e.to_string())?;
    let values = match method {
        FitMethod::Bayes => vec![fit.mlik.ok_or("missing marginal likelihood")?],
        FitMethod::Mle => {
            let s = frequentist_scores(&fit, ds.n_obs(), ds.n_vars() - 1);
            vec![s.loglik, s.aic, s.bic, s.mdl]
        }
    };
    if values.iter().all(|v| v.is_finite()) {
        Ok(values)
    } else {
        Err("non-finite score".into())
    }
}

/// Fits and scores every admissible `(node, parent set)` pair. Work is
/// spread over the rayon pool; output order does not depend on scheduling.
pub fn build_cache(
    ds: &Dataset,
    constraints: &ConstraintSet,
    method: FitMethod,
    priors: &PriorSpec,
) -> Result<ScoreCache> {
    let n = ds.n_vars();
    constraints.validate(ds.names())?;
    if method == FitMethod::Bayes {
        priors.validate()?;
    }
    let mut jobs = Vec::new();
    for i in 0..n {
        for m in enumerate_parent_sets(i, constraints, n)? {
            jobs.push((i, m));
        }
    }
    let n_types = ScoreType::for_method(method).len();
    let scored: Vec<CacheEntry> = jobs
        .par_iter()
        .map(|&(i, m)| match score_one(ds, i, m, method, priors) {
            Ok(values) => CacheEntry {
                parents: m,
                values,
                diagnostic: None,
            },
            Err(why) => {
                log::warn!("fit failed for node {} parents {m:#x}: {why}", ds.names()[i]);
                CacheEntry {
                    parents: m,
                    values: vec![f64::NEG_INFINITY; n_types],
                    diagnostic: Some(why),
                }
            }
        })
        .collect();
    let mut entries: Vec<Vec<CacheEntry>> = vec![Vec::new(); n];
    for ((i, _), e) in jobs.into_iter().zip(scored) {
        entries[i].push(e);
    }
    Ok(ScoreCache::from_parts(
        ds.names().to_vec(),
        ds.fingerprint().to_string(),
        method,
        *priors,
        constraints.clone(),
        ds.n_obs(),
        entries,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Dataset, Distribution};
    use proptest::prelude::*;

    fn binom_sum(n: usize, k: usize) -> usize {
        (0..=k).map(|j| (0..j).fold(1usize, |acc, t| acc * (n - t) / (t + 1))).sum()
    }

    fn toy() -> Dataset {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let n = 60;
        let a: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b: Vec<f64> = a.iter().map(|x| x + rng.random_range(-0.5..0.5)).collect();
        let c: Vec<f64> = b.iter().map(|x| f64::from(u8::from(*x + rng.random_range(-1.0..1.0) > 0.0))).collect();
        let d: Vec<f64> = (0..n).map(|i| f64::from(rng.random_range(0..4u8)) + c[i]).collect();
        Dataset::from_columns(
            vec!["a".into(), "b".into(), "c".into(), "d".into()],
            vec![Distribution::Gaussian, Distribution::Gaussian, Distribution::Binomial, Distribution::Poisson],
            vec![a, b, c, d],
        )
        .unwrap()
    }

    #[test]
    fn counts_match_binomial_sums() {
        for limit in 0..=7 {
            let c = ConstraintSet::unconstrained(8, limit);
            let sets = enumerate_parent_sets(0, &c, 8).unwrap();
            assert_eq!(sets.len(), binom_sum(7, limit));
        }
        assert_eq!(enumerate_parent_sets(3, &ConstraintSet::unconstrained(8, 4), 8).unwrap().len(), 99);
    }

    #[test]
    fn banned_and_retained_rows() {
        let mut c = ConstraintSet::unconstrained(4, 3);
        c.banned[2] = 0b1011;
        assert_eq!(enumerate_parent_sets(2, &c, 4).unwrap(), vec![0]);
        let mut c = ConstraintSet::unconstrained(4, 1);
        c.retained[1] = 0b0001;
        assert_eq!(enumerate_parent_sets(1, &c, 4).unwrap(), vec![1]);
        c.max_parents[1] = 0;
        assert!(matches!(enumerate_parent_sets(1, &c, 4), Err(Error::RetainedExceedsLimit { .. })));
    }

    proptest! {
        #[test]
        fn enumerated_sets_are_admissible(n in 2usize..9, node_seed in 0usize..64, banned in any::<u64>(), retained in any::<u64>(), limit in 0usize..5) {
            let node = node_seed % n;
            let all = (1u64 << n) - 1;
            let banned_row = banned & all & !(1 << node);
            let retained_row = retained & all & !(1 << node) & !banned_row;
            prop_assume!(retained_row.count_ones() as usize <= limit);
            let mut c = ConstraintSet::unconstrained(n, limit);
            c.banned[node] = banned_row;
            c.retained[node] = retained_row;
            let sets = enumerate_parent_sets(node, &c, n).unwrap();
            prop_assert!(sets.windows(2).all(|w| w[0] < w[1]));
            prop_assert!(sets.iter().all(|&m| c.allows(node, m)));
            // exhaustive cross-check
            let expected = (0..=all).filter(|&m| c.allows(node, m)).count();
            prop_assert_eq!(sets.len(), expected);
            prop_assert_eq!(sets[0], retained_row);
        }
    }

    #[test]
    fn build_is_deterministic_and_roundtrips() {
        let ds = toy();
        let c = ConstraintSet::unconstrained(4, 2);
        for method in [FitMethod::Bayes, FitMethod::Mle] {
            let a = build_cache(&ds, &c, method, &PriorSpec::default()).unwrap();
            let b = build_cache(&ds, &c, method, &PriorSpec::default()).unwrap();
            let (mut ta, mut tb) = (Vec::new(), Vec::new());
            a.write(&mut ta).unwrap();
            b.write(&mut tb).unwrap();
            assert_eq!(ta, tb);
            let back = ScoreCache::read_for(&ta[..], &ds).unwrap();
            assert_eq!(back, a);
            assert_eq!(a.len(), 4 * binom_sum(3, 2));
        }
    }

    #[test]
    fn limit_zero_totals_intercept_only() {
        let ds = toy();
        let c = ConstraintSet::unconstrained(4, 0);
        let cache = build_cache(&ds, &c, FitMethod::Bayes, &PriorSpec::default()).unwrap();
        assert_eq!(cache.len(), 4);
        let ls = cache.local_scores(ScoreType::Mlik).unwrap();
        let total = ls.total(&[0; 4]).unwrap();
        let mut direct = 0.0;
        for i in 0..4 {
            let d = build_design(&ds, i, 0).unwrap();
            direct += fit_node(&d, ds.dists()[i].into(), FitMethod::Bayes, &PriorSpec::default())
                .unwrap()
                .mlik
                .unwrap();
        }
        assert_eq!(total, direct);
    }

    #[test]
    fn lookups_fail_loudly() {
        let ds = toy();
        let mut c = ConstraintSet::unconstrained(4, 2);
        c.banned[0] = 0b0010;
        let cache = build_cache(&ds, &c, FitMethod::Mle, &PriorSpec::default()).unwrap();
        assert_eq!(cache.score(0, 0b0010, ScoreType::Bic), Err(Error::NotInCache { node: 0, mask: 2 }));
        assert!(matches!(cache.score(0, 0, ScoreType::Mlik), Err(Error::ScoreMismatch(_))));
        assert!(cache.local_scores(ScoreType::Bic).unwrap().get(0, 0b0010).is_none());
    }

    #[test]
    fn monotone_entry_count() {
        let ds = toy();
        let mut last = 0;
        for limit in 0..=3 {
            let c = ConstraintSet::unconstrained(4, limit);
            let cache = build_cache(&ds, &c, FitMethod::Mle, &PriorSpec::default()).unwrap();
            assert!(cache.len() > last);
            last = cache.len();
        }
    }

    #[test]
    fn fingerprint_checked() {
        let ds = toy();
        let c = ConstraintSet::unconstrained(4, 1);
        let cache = build_cache(&ds, &c, FitMethod::Mle, &PriorSpec::default()).unwrap();
        let mut buf = Vec::new();
        cache.write(&mut buf).unwrap();
        let other = toy().standardize().unwrap();
        assert!(matches!(
            ScoreCache::read_for(&buf[..], &other),
            Err(Error::FingerprintMismatch { .. })
        ));
    }
}

//! Dataset loading, validation, standardization and design matrices.

use crate::dag::{bit, bits, validate_name};
use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeSet;
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

/// Node distribution; each maps to a canonical-link GLM family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Distribution {
    Binomial,
    Gaussian,
    Poisson,
}

impl fmt::Display for Distribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Distribution::Binomial => "binomial",
            Distribution::Gaussian => "gaussian",
            Distribution::Poisson => "poisson",
        })
    }
}

impl FromStr for Distribution {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "binomial" | "bernoulli" => Ok(Distribution::Binomial),
            "gaussian" | "normal" => Ok(Distribution::Gaussian),
            "poisson" => Ok(Distribution::Poisson),
            other => Err(Error::UnknownDistribution(other.to_string())),
        }
    }
}

/// Column → distribution mapping, plus an optional grouping column that is
/// carried as metadata only.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DistSpec {
    pub entries: Vec<(String, Distribution)>,
    pub group_var: Option<String>,
}

impl DistSpec {
    pub fn new(entries: Vec<(String, Distribution)>) -> Self {
        DistSpec {
            entries,
            group_var: None,
        }
    }

    /// Parses `name = distribution` lines; `#` starts a comment and the
    /// key `group_var` names the grouping column.
    pub fn parse(text: &str) -> Result<Self> {
        let mut spec = DistSpec::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::Parse(format!("line {}: expected `name = distribution`", lineno + 1))
            })?;
            let (k, v) = (k.trim(), v.trim());
            if k == "group_var" {
                spec.group_var = Some(v.to_string());
                continue;
            }
            validate_name(k)?;
            if spec.entries.iter().any(|(n, _)| n == k) {
                return Err(Error::DuplicateName(k.to_string()));
            }
            spec.entries.push((k.to_string(), v.parse()?));
        }
        Ok(spec)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        DistSpec::parse(&std::fs::read_to_string(path)?)
    }

    /// Canonical text form, used for fingerprinting.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (n, d) in &self.entries {
            s.push_str(&format!("{n} = {d}\n"));
        }
        if let Some(g) = &self.group_var {
            s.push_str(&format!("group_var = {g}\n"));
        }
        s
    }
}

/// Mean and standard deviation removed from a gaussian column.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: f64,
    pub sd: f64,
}

impl Standardization {
    pub fn to_original(&self, z: f64) -> f64 {
        z * self.sd + self.mean
    }
}

/// A validated, fully observed table of typed columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    names: Vec<String>,
    dists: Vec<Distribution>,
    columns: Vec<Vec<f64>>,
    levels: Vec<Option<[String; 2]>>,
    transforms: Vec<Option<Standardization>>,
    group: Option<(String, Vec<String>)>,
    fingerprint: String,
}

fn hash_hex(parts: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p);
        h.update([0u8]);
    }
    hex::encode(h.finalize())
}

fn is_missing(s: &str) -> bool {
    s.is_empty() || s == "NA" || s == "NaN" || s == "nan"
}

impl Dataset {
    /// Builds a dataset from numeric columns, validating each against its
    /// distribution. Binomial columns must already be coded 0/1.
    pub fn from_columns(
        names: Vec<String>,
        dists: Vec<Distribution>,
        columns: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if names.len() != dists.len() || names.len() != columns.len() {
            return Err(Error::NodeSetMismatch);
        }
        if names.len() > crate::dag::MAX_NODES {
            return Err(Error::TooManyNodes(names.len()));
        }
        for (i, n) in names.iter().enumerate() {
            validate_name(n)?;
            if names[..i].contains(n) {
                return Err(Error::DuplicateName(n.clone()));
            }
        }
        let n_obs = columns.first().map_or(0, Vec::len);
        if n_obs == 0 {
            return Err(Error::NoObservations);
        }
        for ((name, &dist), col) in names.iter().zip(&dists).zip(&columns) {
            if col.len() != n_obs {
                return Err(Error::Parse(format!("column `{name}` has wrong length")));
            }
            for (row, &v) in col.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::MissingValue {
                        column: name.clone(),
                        row,
                    });
                }
                match dist {
                    Distribution::Binomial if v != 0.0 && v != 1.0 => {
                        return Err(Error::BadValue {
                            column: name.clone(),
                            row,
                            value: v.to_string(),
                        })
                    }
                    Distribution::Poisson if v < 0.0 => {
                        return Err(Error::NegativeCount {
                            column: name.clone(),
                            row,
                        })
                    }
                    Distribution::Poisson if v.fract() != 0.0 => {
                        return Err(Error::BadValue {
                            column: name.clone(),
                            row,
                            value: v.to_string(),
                        })
                    }
                    _ => {}
                }
            }
            if dist == Distribution::Binomial {
                let ones = col.iter().filter(|&&v| v == 1.0).count();
                if ones == 0 || ones == n_obs {
                    return Err(Error::BadLevelCount {
                        column: name.clone(),
                        levels: 1,
                    });
                }
            }
        }
        let levels = dists
            .iter()
            .map(|d| (*d == Distribution::Binomial).then(|| ["0".to_string(), "1".to_string()]))
            .collect();
        let n = names.len();
        let mut ds = Dataset {
            names,
            dists,
            columns,
            levels,
            transforms: vec![None; n],
            group: None,
            fingerprint: String::new(),
        };
        let mut buf = Vec::new();
        ds.write_csv(&mut buf)?;
        let spec = ds.dist_spec().to_text();
        ds.fingerprint = hash_hex(&[&buf, spec.as_bytes()]);
        Ok(ds)
    }

    /// Parses delimited text with a header row. `source` is the raw bytes
    /// (they enter the fingerprint).
    pub fn from_csv_bytes(source: &[u8], spec: &DistSpec) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(source);
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        for h in &header {
            let declared = spec.entries.iter().any(|(n, _)| n == h);
            if !declared && spec.group_var.as_deref() != Some(h) {
                return Err(Error::UnspecifiedColumn(h.clone()));
            }
        }
        let find = |name: &str| {
            header
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::MissingColumn(name.to_string()))
        };
        let idx: Vec<usize> = spec
            .entries
            .iter()
            .map(|(n, _)| find(n))
            .collect::<Result<_>>()?;
        let group_idx = spec.group_var.as_deref().map(find).transpose()?;

        let mut raw: Vec<Vec<String>> = vec![Vec::new(); spec.entries.len()];
        let mut group_vals = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            for (k, &c) in idx.iter().enumerate() {
                raw[k].push(rec.get(c).unwrap_or("").to_string());
            }
            if let Some(g) = group_idx {
                group_vals.push(rec.get(g).unwrap_or("").to_string());
            }
        }

        let mut columns = Vec::with_capacity(raw.len());
        let mut levels = Vec::with_capacity(raw.len());
        for ((name, dist), cells) in spec.entries.iter().zip(&raw) {
            if let Some(row) = cells.iter().position(|c| is_missing(c)) {
                return Err(Error::MissingValue {
                    column: name.clone(),
                    row,
                });
            }
            match dist {
                Distribution::Binomial => {
                    let distinct: BTreeSet<&str> = cells.iter().map(String::as_str).collect();
                    if distinct.len() != 2 {
                        return Err(Error::BadLevelCount {
                            column: name.clone(),
                            levels: distinct.len(),
                        });
                    }
                    let mut it = distinct.into_iter();
                    let (lo, hi) = (it.next().unwrap(), it.next().unwrap());
                    columns.push(
                        cells
                            .iter()
                            .map(|c| if c == hi { 1.0 } else { 0.0 })
                            .collect(),
                    );
                    levels.push(Some([lo.to_string(), hi.to_string()]));
                }
                Distribution::Gaussian | Distribution::Poisson => {
                    let mut col = Vec::with_capacity(cells.len());
                    for (row, c) in cells.iter().enumerate() {
                        let v: f64 = c.parse().map_err(|_| Error::BadValue {
                            column: name.clone(),
                            row,
                            value: c.clone(),
                        })?;
                        if !v.is_finite() {
                            return Err(Error::MissingValue {
                                column: name.clone(),
                                row,
                            });
                        }
                        if *dist == Distribution::Poisson {
                            if v < 0.0 {
                                return Err(Error::NegativeCount {
                                    column: name.clone(),
                                    row,
                                });
                            }
                            if v.fract() != 0.0 {
                                return Err(Error::BadValue {
                                    column: name.clone(),
                                    row,
                                    value: c.clone(),
                                });
                            }
                        }
                        col.push(v);
                    }
                    columns.push(col);
                    levels.push(None);
                }
            }
        }
        if columns.first().map_or(0, Vec::len) == 0 {
            return Err(Error::NoObservations);
        }
        let n = columns.len();
        Ok(Dataset {
            names: spec.entries.iter().map(|(n, _)| n.clone()).collect(),
            dists: spec.entries.iter().map(|(_, d)| *d).collect(),
            columns,
            levels,
            transforms: vec![None; n],
            group: spec.group_var.clone().map(|g| (g, group_vals)),
            fingerprint: hash_hex(&[source, spec.to_text().as_bytes()]),
        })
    }

    pub fn n_obs(&self) -> usize {
        self.columns[0].len()
    }

    pub fn n_vars(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn dists(&self) -> &[Distribution] {
        &self.dists
    }

    pub fn column(&self, i: usize) -> &[f64] {
        &self.columns[i]
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::UnknownName(name.to_string()))
    }

    /// Original level labels of a binomial column (`[level for 0, level for 1]`).
    pub fn levels(&self, i: usize) -> Option<&[String; 2]> {
        self.levels[i].as_ref()
    }

    pub fn transform(&self, i: usize) -> Option<Standardization> {
        self.transforms[i]
    }

    /// Grouping column name and raw values, if declared.
    pub fn group(&self) -> Option<(&str, &[String])> {
        self.group.as_ref().map(|(n, v)| (n.as_str(), v.as_slice()))
    }

    /// Stable hash of the source bytes, the distribution spec and any
    /// transforms applied since loading.
    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn is_standardized(&self) -> bool {
        self.transforms.iter().any(Option::is_some)
    }

    pub fn dist_spec(&self) -> DistSpec {
        DistSpec {
            entries: self
                .names
                .iter()
                .cloned()
                .zip(self.dists.iter().copied())
                .collect(),
            group_var: self.group.as_ref().map(|(g, _)| g.clone()),
        }
    }

    /// Writes the modeled columns as comma-delimited text. Binomial columns
    /// are written with their original level labels.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{}", self.names.join(","))?;
        for r in 0..self.n_obs() {
            let cells: Vec<String> = (0..self.n_vars())
                .map(|c| {
                    let v = self.columns[c][r];
                    match &self.levels[c] {
                        Some(lv) => lv[usize::from(v == 1.0)].clone(),
                        None => format!("{v:?}"),
                    }
                })
                .collect();
            writeln!(w, "{}", cells.join(","))?;
        }
        Ok(())
    }

    /// Replaces every gaussian column by `(x - mean) / sd` (sample sd).
    pub fn standardize(&self) -> Result<Dataset> {
        let mut out = self.clone();
        let mut tag = String::from("standardize");
        for i in 0..self.n_vars() {
            if self.dists[i] != Distribution::Gaussian || self.transforms[i].is_some() {
                continue;
            }
            let col = &self.columns[i];
            let n = col.len() as f64;
            let mean = col.iter().sum::<f64>() / n;
            let var = col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
            let sd = var.sqrt();
            if !(sd > 0.0 && sd.is_finite()) {
                return Err(Error::ZeroVariance(self.names[i].clone()));
            }
            out.columns[i] = col.iter().map(|x| (x - mean) / sd).collect();
            // re-centre to remove the rounding residue of the first pass
            let resid = out.columns[i].iter().sum::<f64>() / n;
            for v in &mut out.columns[i] {
                *v -= resid;
            }
            out.transforms[i] = Some(Standardization { mean, sd });
            tag.push_str(&format!(":{i}"));
        }
        out.fingerprint = hash_hex(&[self.fingerprint.as_bytes(), tag.as_bytes()]);
        Ok(out)
    }
}

/// Loads a comma-delimited file and validates it against `spec`.
pub fn load_dataset(path: impl AsRef<Path>, spec: &DistSpec) -> Result<Dataset> {
    let bytes = std::fs::read(path)?;
    Dataset::from_csv_bytes(&bytes, spec)
}

/// One node's regression: response plus intercept and parent columns.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub child: String,
    /// `(Intercept)` followed by parent names.
    pub labels: Vec<String>,
    pub response: DVector<f64>,
    pub predictors: DMatrix<f64>,
}

impl DesignMatrix {
    pub fn n_obs(&self) -> usize {
        self.response.len()
    }

    pub fn width(&self) -> usize {
        self.predictors.ncols()
    }

    /// Coefficient names in `child|parent` form.
    pub fn coefficient_names(&self) -> Vec<String> {
        self.labels
            .iter()
            .map(|l| format!("{}|{}", self.child, l))
            .collect()
    }

    /// Keeps only the listed predictor columns.
    pub fn select(&self, keep: &[usize]) -> DesignMatrix {
        DesignMatrix {
            child: self.child.clone(),
            labels: keep.iter().map(|&k| self.labels[k].clone()).collect(),
            response: self.response.clone(),
            predictors: self.predictors.select_columns(keep),
        }
    }
}

pub const INTERCEPT: &str = "(Intercept)";

/// Design matrix for `child` given a parent mask; parents appear in name order.
pub fn build_design(ds: &Dataset, child: usize, parents: u64) -> Result<DesignMatrix> {
    if child >= ds.n_vars() {
        return Err(Error::UnknownName(format!("#{child}")));
    }
    if parents & bit(child) != 0 {
        return Err(Error::SelfParent(ds.names[child].clone()));
    }
    let mut idx: Vec<usize> = bits(parents).collect();
    if let Some(&bad) = idx.iter().find(|&&j| j >= ds.n_vars()) {
        return Err(Error::UnknownName(format!("#{bad}")));
    }
    idx.sort_by(|&a, &b| ds.names[a].cmp(&ds.names[b]));
    let n = ds.n_obs();
    let mut x = DMatrix::from_element(n, idx.len() + 1, 1.0);
    for (k, &j) in idx.iter().enumerate() {
        x.set_column(k + 1, &DVector::from_column_slice(&ds.columns[j]));
    }
    let mut labels = vec![INTERCEPT.to_string()];
    labels.extend(idx.iter().map(|&j| ds.names[j].clone()));
    Ok(DesignMatrix {
        child: ds.names[child].clone(),
        labels,
        response: DVector::from_column_slice(&ds.columns[child]),
        predictors: x,
    })
}

/// Name-based variant of [`build_design`].
pub fn build_design_named(ds: &Dataset, child: &str, parents: &[&str]) -> Result<DesignMatrix> {
    let c = ds.index_of(child)?;
    let mut mask = 0u64;
    for &p in parents {
        let j = ds.index_of(p)?;
        if j == c {
            return Err(Error::SelfParent(child.to_string()));
        }
        if mask & bit(j) != 0 {
            return Err(Error::DuplicateParent(p.to_string()));
        }
        mask |= bit(j);
    }
    build_design(ds, c, mask)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(pairs: &[(&str, Distribution)]) -> DistSpec {
        DistSpec::new(pairs.iter().map(|(n, d)| (n.to_string(), *d)).collect())
    }

    const CSV: &str = "sex,w,k,farm\nm,1.0,0,a\nf,2.0,3,a\nm,3.0,1,b\n";

    fn sample() -> Dataset {
        let mut s = spec(&[
            ("sex", Distribution::Binomial),
            ("w", Distribution::Gaussian),
            ("k", Distribution::Poisson),
        ]);
        s.group_var = Some("farm".into());
        Dataset::from_csv_bytes(CSV.as_bytes(), &s).unwrap()
    }

    #[test]
    fn loads_and_codes_levels() {
        let ds = sample();
        assert_eq!(ds.n_obs(), 3);
        // "f" < "m" so f -> 0
        assert_eq!(ds.column(0), &[1.0, 0.0, 1.0]);
        assert_eq!(ds.levels(0).unwrap(), &["f".to_string(), "m".to_string()]);
        assert_eq!(ds.group().unwrap().1, &["a", "a", "b"]);
    }

    #[test]
    fn dist_spec_parsing() {
        let s = DistSpec::parse("# header\nAR = binomial\nage=gaussian # c\n\ngroup_var = farm\n")
            .unwrap();
        assert_eq!(s.entries.len(), 2);
        assert_eq!(s.group_var.as_deref(), Some("farm"));
        assert!(DistSpec::parse("x = multinomial").is_err());
        assert!(DistSpec::parse("x binomial").is_err());
    }

    #[test]
    fn load_errors() {
        let s = spec(&[("a", Distribution::Binomial)]);
        assert!(matches!(
            Dataset::from_csv_bytes(b"a\nx\ny\nz\n", &s),
            Err(Error::BadLevelCount { levels: 3, .. })
        ));
        let s = spec(&[("a", Distribution::Poisson)]);
        assert!(matches!(
            Dataset::from_csv_bytes(b"a\n1\n-1\n", &s),
            Err(Error::NegativeCount { row: 1, .. })
        ));
        assert!(matches!(
            Dataset::from_csv_bytes(b"a\n1\nNA\n", &s),
            Err(Error::MissingValue { row: 1, .. })
        ));
        assert!(matches!(
            Dataset::from_csv_bytes(b"b\n1\n", &s),
            Err(Error::UnspecifiedColumn(_))
        ));
        let s2 = spec(&[("a", Distribution::Poisson), ("b", Distribution::Gaussian)]);
        assert!(matches!(
            Dataset::from_csv_bytes(b"a\n1\n", &s2),
            Err(Error::MissingColumn(_))
        ));
    }

    #[test]
    fn standardize_gaussian_only() {
        let ds = sample();
        let st = ds.standardize().unwrap();
        assert_eq!(st.column(1), &[-1.0, 0.0, 1.0]);
        assert_eq!(st.column(0), ds.column(0));
        assert_eq!(st.column(2), ds.column(2));
        let t = st.transform(1).unwrap();
        assert_eq!((t.mean, t.sd), (2.0, 1.0));
        assert_ne!(st.fingerprint(), ds.fingerprint());

        let flat = Dataset::from_columns(
            vec!["g".into()],
            vec![Distribution::Gaussian],
            vec![vec![2.0; 4]],
        )
        .unwrap();
        assert!(matches!(flat.standardize(), Err(Error::ZeroVariance(_))));
    }

    #[test]
    fn fingerprint_tracks_bytes_and_spec() {
        let s = spec(&[("a", Distribution::Gaussian)]);
        let a = Dataset::from_csv_bytes(b"a\n1\n2\n", &s).unwrap();
        let b = Dataset::from_csv_bytes(b"a\n1\n2\n", &s).unwrap();
        let c = Dataset::from_csv_bytes(b"a\n1\n3\n", &s).unwrap();
        let s2 = spec(&[("a", Distribution::Poisson)]);
        let d = Dataset::from_csv_bytes(b"a\n1\n2\n", &s2).unwrap();
        assert_eq!(a.fingerprint(), b.fingerprint());
        assert_ne!(a.fingerprint(), c.fingerprint());
        assert_ne!(a.fingerprint(), d.fingerprint());
    }

    #[test]
    fn design_matrices() {
        let ds = sample();
        let d = build_design(&ds, 1, 0).unwrap();
        assert_eq!(d.width(), 1);
        assert_eq!(d.labels, vec![INTERCEPT]);

        let d = build_design_named(&ds, "w", &["sex", "k"]).unwrap();
        // canonical name order: k before sex
        assert_eq!(d.labels, vec![INTERCEPT, "k", "sex"]);
        assert_eq!(d.predictors.column(1).as_slice(), &[0.0, 3.0, 1.0]);
        assert_eq!(d.coefficient_names()[2], "w|sex");

        assert!(matches!(
            build_design_named(&ds, "w", &["w"]),
            Err(Error::SelfParent(_))
        ));
        assert!(matches!(
            build_design_named(&ds, "w", &["k", "k"]),
            Err(Error::DuplicateParent(_))
        ));
        assert!(matches!(
            build_design_named(&ds, "w", &["zz"]),
            Err(Error::UnknownName(_))
        ));
    }

    #[test]
    fn csv_round_trip_preserves_values() {
        let ds = sample();
        let mut buf = Vec::new();
        ds.write_csv(&mut buf).unwrap();
        let back = Dataset::from_csv_bytes(&buf, &ds.dist_spec().clone_without_group()).unwrap();
        assert_eq!(back.columns(), ds.columns());
    }

    impl DistSpec {
        fn clone_without_group(&self) -> DistSpec {
            DistSpec::new(self.entries.clone())
        }
    }
}

//! Input loading, output bookkeeping and the run manifest.

use crate::DataArgs;
use abnkit::dag::{parse_formula, read_adjacency};
use abnkit::{ConstraintSet, Dag, Dataset, DistSpec, Error};
use anyhow::{Context, Result};
use serde_json::json;
use sha2::{Digest, Sha256};
use std::fs;
use std::path::{Path, PathBuf};

pub fn optional_data(data: Option<PathBuf>, dists: Option<PathBuf>, standardize: bool) -> Option<DataArgs> {
    Some(DataArgs {
        data: data?,
        dists: dists?,
        standardize,
    })
}

/// Returns `seed`, or a fresh one from the clock, announced on stderr.
pub fn seed_or_generate(seed: Option<u64>) -> u64 {
    seed.unwrap_or_else(|| {
        let nanos = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_nanos() as u64)
            .unwrap_or(0);
        let s = nanos ^ (nanos >> 29);
        eprintln!("note: no --seed given; using seed {s}");
        s
    })
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub fn load_data(args: &DataArgs) -> Result<Dataset> {
    for p in [&args.data, &args.dists] {
        if !p.is_file() {
            return Err(Error::Io(format!("{} not found", p.display())).into());
        }
    }
    let spec = DistSpec::from_path(&args.dists)?;
    let ds = abnkit::load_dataset(&args.data, &spec)?;
    Ok(if args.standardize { ds.standardize()? } else { ds })
}

/// Reorders the parent masks of `from` (listed in `from_names` order) to `to`.
pub fn align_masks(from_names: &[String], masks: &[u64], to: &[String]) -> Result<Vec<u64>> {
    let mut sorted_from = from_names.to_vec();
    let mut sorted_to = to.to_vec();
    sorted_from.sort();
    sorted_to.sort();
    if sorted_from != sorted_to {
        return Err(Error::NodeSetMismatch.into());
    }
    let pos: Vec<usize> = from_names
        .iter()
        .map(|n| to.iter().position(|t| t == n).expect("same node set"))
        .collect();
    let mut out = vec![0u64; to.len()];
    for (i, &m) in masks.iter().enumerate() {
        let mut mapped = 0u64;
        for (j, &p) in pos.iter().enumerate() {
            if m >> j & 1 == 1 {
                mapped |= 1u64 << p;
            }
        }
        out[pos[i]] = mapped;
    }
    Ok(out)
}

pub fn read_dag(path: &Path) -> Result<Dag> {
    let f = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let (names, masks) = read_adjacency(f)?;
    Ok(Dag::new(names, masks)?)
}

/// Reads an adjacency file and re-indexes it to `nodes`.
pub fn read_dag_for(path: &Path, nodes: &[String]) -> Result<Dag> {
    let dag = read_dag(path)?;
    let masks = align_masks(dag.nodes(), dag.parent_masks(), nodes)?;
    Ok(Dag::new(nodes.to_vec(), masks)?)
}

/// A formula, or the path of an adjacency file, as parent masks over `nodes`.
pub fn masks_from_arg(arg: &str, nodes: &[String], inputs: &mut Vec<PathBuf>) -> Result<Vec<u64>> {
    let path = Path::new(arg);
    if !arg.trim_start().starts_with('~') && path.is_file() {
        inputs.push(path.to_path_buf());
        let f = fs::File::open(path)?;
        let (names, masks) = read_adjacency(f)?;
        return align_masks(&names, &masks, nodes);
    }
    Ok(parse_formula(arg, nodes)?)
}

pub fn constraints(
    ban: Option<&str>,
    retain: Option<&str>,
    max_parents: usize,
    nodes: &[String],
    inputs: &mut Vec<PathBuf>,
) -> Result<ConstraintSet> {
    let n = nodes.len();
    let banned = match ban {
        Some(b) => masks_from_arg(b, nodes, inputs)?,
        None => vec![0; n],
    };
    let retained = match retain {
        Some(r) => masks_from_arg(r, nodes, inputs)?,
        None => vec![0; n],
    };
    let cs = ConstraintSet::new(banned, retained, vec![max_parents.min(n.saturating_sub(1)); n]);
    cs.validate(nodes)?;
    Ok(cs)
}

/// Collects artifacts of one run and writes `manifest.json` next to them.
pub struct Run {
    out: PathBuf,
    subcommand: &'static str,
    args: Vec<String>,
    inputs: Vec<PathBuf>,
    outputs: Vec<String>,
    fingerprint: Option<String>,
    seed: Option<u64>,
}

impl Run {
    pub fn new(out: &Path, subcommand: &'static str, args: &[String]) -> Result<Self> {
        fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
        Ok(Run {
            out: out.to_path_buf(),
            subcommand,
            args: args.to_vec(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            fingerprint: None,
            seed: None,
        })
    }

    pub fn input(&mut self, path: &Path) {
        self.inputs.push(path.to_path_buf());
    }

    pub fn inputs(&mut self, paths: Vec<PathBuf>) {
        self.inputs.extend(paths);
    }

    pub fn data(&mut self, args: &DataArgs, ds: &Dataset) {
        self.input(&args.data);
        self.input(&args.dists);
        self.fingerprint = Some(ds.fingerprint().to_string());
    }

    pub fn fingerprint(&mut self, fp: &str) {
        self.fingerprint = Some(fp.to_string());
    }

    pub fn seed(&mut self, seed: u64) {
        self.seed = Some(seed);
    }

    pub fn write(&mut self, name: &str, contents: impl AsRef<[u8]>) -> Result<()> {
        let path = self.out.join(name);
        fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        self.outputs.push(name.to_string());
        Ok(())
    }

    pub fn finish(self) -> Result<()> {
        let mut inputs = serde_json::Map::new();
        for p in &self.inputs {
            inputs.insert(p.display().to_string(), json!(sha256_file(p)?));
        }
        let mut outputs = serde_json::Map::new();
        for name in &self.outputs {
            outputs.insert(name.clone(), json!(sha256_file(&self.out.join(name))?));
        }
        let manifest = json!({
            "tool": "abnkit",
            "version": env!("CARGO_PKG_VERSION"),
            "subcommand": self.subcommand,
            "args": self.args,
            "inputs": inputs,
            "dataset_fingerprint": self.fingerprint,
            "seed": self.seed,
            "outputs": outputs,
        });
        let text = serde_json::to_string_pretty(&manifest)? + "\n";
        let path = self.out.join("manifest.json");
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(())
    }
}

pub fn adjacency_text(names: &[String], masks: &[u64]) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    abnkit::dag::write_adjacency(&mut buf, names, masks)?;
    Ok(buf)
}

pub fn matrix_text(m: &abnkit::dag::LabeledMatrix) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    abnkit::dag::write_real_matrix(&mut buf, m)?;
    Ok(buf)
}

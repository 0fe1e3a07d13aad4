//! Plain-text adjacency matrices and DOT rendering.

use super::{bit, Dag};
use crate::data::Distribution;
use crate::error::{Error, Result};
use std::fmt::Write as _;
use std::io::{Read, Write};

/// A square real-valued matrix with node labels (row = child, column = parent).
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledMatrix {
    pub names: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

impl LabeledMatrix {
    pub fn zeros(names: Vec<String>) -> Self {
        let n = names.len();
        LabeledMatrix {
            names,
            values: vec![vec![0.0; n]; n],
        }
    }

    pub fn get(&self, child: &str, parent: &str) -> Option<f64> {
        let c = self.names.iter().position(|n| n == child)?;
        let p = self.names.iter().position(|n| n == parent)?;
        Some(self.values[c][p])
    }
}

fn read_rows<R: Read>(reader: R) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    let names: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        rows.push(rec.iter().map(str::to_string).collect::<Vec<_>>());
    }
    if rows.len() != names.len() {
        return Err(Error::Parse(format!(
            "expected {} rows, found {}",
            names.len(),
            rows.len()
        )));
    }
    for (row, name) in rows.iter().zip(&names) {
        if row.first() != Some(name) {
            return Err(Error::Parse(format!(
                "row label `{}` does not match column `{name}`",
                row.first().map_or("", String::as_str)
            )));
        }
        if row.len() != names.len() + 1 {
            return Err(Error::Parse(format!("row `{name}` has wrong width")));
        }
    }
    Ok((names, rows))
}

/// Reads a 0/1 adjacency matrix with a header row and a label column.
pub fn read_adjacency<R: Read>(reader: R) -> Result<(Vec<String>, Vec<u64>)> {
    let (names, rows) = read_rows(reader)?;
    if names.len() > super::MAX_NODES {
        return Err(Error::TooManyNodes(names.len()));
    }
    let mut masks = vec![0u64; names.len()];
    for (i, row) in rows.iter().enumerate() {
        for (j, cell) in row[1..].iter().enumerate() {
            match cell.as_str() {
                "0" => {}
                "1" => masks[i] |= bit(j),
                other => return Err(Error::Parse(format!("adjacency entry `{other}` is not 0/1"))),
            }
        }
    }
    Ok((names, masks))
}

pub fn write_adjacency<W: Write>(mut w: W, names: &[String], masks: &[u64]) -> Result<()> {
    writeln!(w, ",{}", names.join(","))?;
    for (i, name) in names.iter().enumerate() {
        let cells: Vec<&str> = (0..names.len())
            .map(|j| if masks[i] & bit(j) != 0 { "1" } else { "0" })
            .collect();
        writeln!(w, "{name},{}", cells.join(","))?;
    }
    Ok(())
}

pub fn read_real_matrix<R: Read>(reader: R) -> Result<LabeledMatrix> {
    let (names, rows) = read_rows(reader)?;
    let values = rows
        .iter()
        .map(|row| {
            row[1..]
                .iter()
                .map(|c| c.parse::<f64>().map_err(|e| Error::Parse(format!("`{c}`: {e}"))))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LabeledMatrix { names, values })
}

pub fn write_real_matrix<W: Write>(mut w: W, m: &LabeledMatrix) -> Result<()> {
    writeln!(w, ",{}", m.names.join(","))?;
    for (name, row) in m.names.iter().zip(&m.values) {
        let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        writeln!(w, "{name},{}", cells.join(","))?;
    }
    Ok(())
}

/// Optional decorations for [`to_dot`].
#[derive(Debug, Clone, Default)]
pub struct DotStyle<'a> {
    /// Node shape per distribution: box = binomial, ellipse = gaussian, diamond = poisson.
    pub distributions: Option<&'a [Distribution]>,
    /// Per-arc weights (row = child, column = parent); penwidth is scaled so
    /// the largest |weight| maps to 5.
    pub weights: Option<&'a [Vec<f64>]>,
}

fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

pub fn to_dot(dag: &Dag, style: &DotStyle<'_>) -> String {
    let mut out = String::from("digraph dag {\n");
    for (i, name) in dag.nodes().iter().enumerate() {
        let shape = style.distributions.map(|d| match d[i] {
            Distribution::Binomial => "box",
            Distribution::Gaussian => "ellipse",
            Distribution::Poisson => "diamond",
        });
        match shape {
            Some(s) => writeln!(out, "  {} [shape={s}];", quote(name)).unwrap(),
            None => writeln!(out, "  {};", quote(name)).unwrap(),
        }
    }
    let max_w = style.weights.map(|w| {
        dag.arcs()
            .iter()
            .map(|&(p, c)| w[c][p].abs())
            .fold(0.0f64, f64::max)
    });
    for (p, c) in dag.arcs() {
        let from = quote(&dag.nodes()[p]);
        let to = quote(&dag.nodes()[c]);
        match (style.weights, max_w) {
            (Some(w), Some(m)) if m > 0.0 => {
                let pw = (5.0 * w[c][p].abs() / m).max(0.1);
                writeln!(out, "  {from} -> {to} [penwidth={pw:.3}];").unwrap()
            }
            _ => writeln!(out, "  {from} -> {to};").unwrap(),
        }
    }
    out.push_str("}\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dag() -> Dag {
        Dag::from_arcs(
            vec!["a".into(), "b".into(), "c".into()],
            &[("a", "b"), ("b", "c"), ("a", "c")],
        )
        .unwrap()
    }

    #[test]
    fn adjacency_text_round_trip() {
        let d = dag();
        let mut buf = Vec::new();
        write_adjacency(&mut buf, d.nodes(), d.parent_masks()).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text, ",a,b,c\na,0,0,0\nb,1,0,0\nc,1,1,0\n");
        let (names, masks) = read_adjacency(&buf[..]).unwrap();
        assert_eq!(names, d.nodes());
        assert_eq!(masks, d.parent_masks());
    }

    #[test]
    fn adjacency_rejects_bad_cells() {
        assert!(read_adjacency(",a,b\na,0,2\nb,0,0\n".as_bytes()).is_err());
        assert!(read_adjacency(",a,b\nb,0,0\na,0,0\n".as_bytes()).is_err());
    }

    #[test]
    fn dot_shapes_and_widths() {
        let d = dag();
        let dists = [
            Distribution::Binomial,
            Distribution::Gaussian,
            Distribution::Poisson,
        ];
        let w = vec![vec![0.0; 3], vec![0.5, 0.0, 0.0], vec![0.25, 1.0, 0.0]];
        let dot = to_dot(
            &d,
            &DotStyle {
                distributions: Some(&dists),
                weights: Some(&w),
            },
        );
        assert!(dot.contains("\"a\" [shape=box]"));
        assert!(dot.contains("\"c\" [shape=diamond]"));
        assert!(dot.contains("\"b\" -> \"c\" [penwidth=5.000]"));
        assert!(dot.contains("\"a\" -> \"b\" [penwidth=2.500]"));
        assert!(to_dot(&d, &DotStyle::default()).contains("\"a\" -> \"c\";"));
    }
}

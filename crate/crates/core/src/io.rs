//! File formats: CSV matrices, spectrum documents (JSON or TOML), solver
//! reports and DOT digraphs.

use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Read a headerless CSV of numbers into a matrix (rows of equal length).
pub fn read_matrix<R: Read>(reader: R) -> Result<DMatrix<f64>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(reader);
    let mut data = Vec::new();
    let mut cols = None;
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse(format!("row {}: {e}", row + 1)))?;
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        let vals = rec
            .iter()
            .enumerate()
            .map(|(col, f)| {
                f.parse::<f64>()
                    .map_err(|e| Error::Parse(format!("row {}, column {}: `{f}`: {e}", row + 1, col + 1)))
            })
            .collect::<Result<Vec<f64>>>()?;
        match cols {
            None => cols = Some(vals.len()),
            Some(c) if c != vals.len() => {
                return Err(Error::Parse(format!("row {} has {} entries, expected {c}", row + 1, vals.len())))
            }
            _ => {}
        }
        data.extend(vals);
    }
    let cols = cols.ok_or_else(|| Error::Parse("matrix file is empty".into()))?;
    Ok(DMatrix::from_row_slice(data.len() / cols, cols, &data))
}

pub fn read_matrix_file(path: &Path) -> Result<DMatrix<f64>> {
    read_matrix(std::fs::File::open(path)?)
}

/// Write a matrix row by row with 17 significant digits, which round-trips
/// every `f64` exactly.
pub fn write_matrix<W: Write>(writer: W, m: &DMatrix<f64>) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    for row in m.row_iter() {
        wtr.write_record(row.iter().map(|v| format!("{v:.16e}")))
            .map_err(|e| Error::Io(e.into()))?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_matrix_file(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    write_matrix(std::fs::File::create(path)?, m)
}

/// On-disk spectrum: `eigenvalues = [[re, im], ...]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumDocument {
    pub eigenvalues: Vec<[f64; 2]>,
}

impl SpectrumDocument {
    pub fn from_values(values: &[Complex64]) -> Self {
        SpectrumDocument { eigenvalues: values.iter().map(|z| [z.re, z.im]).collect() }
    }

    pub fn values(&self) -> Vec<Complex64> {
        self.eigenvalues.iter().map(|&[re, im]| Complex64::new(re, im)).collect()
    }
}

fn is_toml(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("toml"))
}

/// Parse a spectrum document; TOML if `toml` is set, JSON otherwise.
pub fn parse_spectrum_document(text: &str, toml: bool) -> Result<SpectrumDocument> {
    if toml {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    } else {
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }
}

/// Read a spectrum document, choosing TOML for `.toml` files and JSON otherwise.
pub fn read_spectrum_file(path: &Path) -> Result<Vec<Complex64>> {
    let text = std::fs::read_to_string(path)?;
    Ok(parse_spectrum_document(&text, is_toml(path))?.values())
}

pub fn write_spectrum_file(path: &Path, values: &[Complex64]) -> Result<()> {
    let doc = SpectrumDocument::from_values(values);
    let text = if is_toml(path) {
        toml::to_string(&doc).map_err(|e| Error::Parse(e.to_string()))?
    } else {
        serde_json::to_string_pretty(&doc).map_err(|e| Error::Parse(e.to_string()))?
    };
    std::fs::write(path, text)?;
    Ok(())
}

/// Serialize any report-like value as pretty JSON.
pub fn write_json_file<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Parse(e.to_string()))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

/// DOT digraph of a square matrix: nodes `P1 … Pn` and an arc `Pi -> Pj`
/// labelled with `C_ij` (4 decimals) for every entry above `threshold`.
pub fn digraph_dot(c: &DMatrix<f64>, threshold: f64) -> Result<String> {
    let n = c.nrows();
    if c.ncols() != n {
        return Err(Error::DimensionMismatch(format!("digraph needs a square matrix, got {}x{}", n, c.ncols())));
    }
    let mut out = String::from("digraph G {\n");
    for i in 0..n {
        writeln!(out, "  P{};", i + 1).expect("writing to a String");
    }
    for i in 0..n {
        for j in 0..n {
            let v = c[(i, j)];
            if v > threshold {
                writeln!(out, "  P{} -> P{} [label=\"{v:.4}\"];", i + 1, j + 1).expect("writing to a String");
            }
        }
    }
    out.push_str("}\n");
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn csv_round_trip_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = DMatrix::from_fn(5, 3, |_, _| rng.random_range(-1e3..1e3) * 10f64.powi(rng.random_range(-20..20)));
        let mut buf = Vec::new();
        write_matrix(&mut buf, &m).unwrap();
        let back = read_matrix(buf.as_slice()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn ragged_csv_is_rejected() {
        assert!(read_matrix("1,2\n3\n".as_bytes()).is_err());
        assert!(read_matrix("".as_bytes()).is_err());
        assert!(read_matrix("1,x\n".as_bytes()).is_err());
    }

    #[test]
    fn spectrum_documents() {
        let json = r#"{"eigenvalues": [[1, 0], [-0.0856, 0.3336], [-0.0856, -0.3336]]}"#;
        let doc = parse_spectrum_document(json, false).unwrap();
        assert_eq!(doc.values()[1], Complex64::new(-0.0856, 0.3336));
        let toml_text = "eigenvalues = [[1.0, 0.0], [0.5, 0.0]]\n";
        let doc = parse_spectrum_document(toml_text, true).unwrap();
        assert_eq!(doc.eigenvalues, vec![[1.0, 0.0], [0.5, 0.0]]);
        assert!(parse_spectrum_document("{}", false).is_err());
    }

    #[test]
    fn identity_digraph_has_only_loops() {
        let dot = digraph_dot(&DMatrix::identity(3, 3), 0.5).unwrap();
        let arcs: Vec<&str> = dot.lines().filter(|l| l.contains("->")).collect();
        assert_eq!(arcs, vec![
            "  P1 -> P1 [label=\"1.0000\"];",
            "  P2 -> P2 [label=\"1.0000\"];",
            "  P3 -> P3 [label=\"1.0000\"];"
        ]);
        assert!(digraph_dot(&DMatrix::zeros(2, 3), 0.5).is_err());
    }

    #[test]
    fn digraph_parses_as_dot() {
        use graphviz_rust::dot_structures::{Graph, Stmt};
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let c = DMatrix::from_fn(6, 6, |_, _| rng.random_range(0.0..0.3));
        let dot = digraph_dot(&c, 0.1).unwrap();
        let graph = graphviz_rust::parse(&dot).unwrap();
        let Graph::DiGraph { stmts, .. } = graph else { panic!("expected a digraph") };
        let edges = stmts.iter().filter(|s| matches!(s, Stmt::Edge(_))).count();
        assert_eq!(edges, c.iter().filter(|v| **v > 0.1).count());
        let nodes = stmts.iter().filter(|s| matches!(s, Stmt::Node(_))).count();
        assert_eq!(nodes, 6);
    }
}

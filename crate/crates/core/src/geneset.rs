//! Named gene sets and the GMT file format.
//!
//! The crate ships three sets as data: the 25-gene classical and basal
//! halves of the Moffitt PDAC signature and the 6-gene DDR panel.

use std::collections::HashSet;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const MOFFITT_CLASSICAL_GMT: &str = include_str!("../data/moffitt_classical.gmt");
pub const MOFFITT_BASAL_GMT: &str = include_str!("../data/moffitt_basal.gmt");
pub const DDR6_GMT: &str = include_str!("../data/ddr6.gmt");

/// A named, ordered list of gene symbols with duplicates removed
/// (first occurrence wins).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeneSet {
    name: String,
    genes: Vec<String>,
}

impl GeneSet {
    pub fn new(name: impl Into<String>, genes: impl IntoIterator<Item = String>) -> Result<Self> {
        let name = name.into();
        let mut seen = HashSet::new();
        let genes: Vec<String> = genes.into_iter().filter(|g| seen.insert(g.clone())).collect();
        if genes.is_empty() {
            return Err(Error::InvalidInput(format!("gene set {name} is empty")));
        }
        Ok(Self { name, genes })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn genes(&self) -> &[String] {
        &self.genes
    }

    pub fn len(&self) -> usize {
        self.genes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.genes.is_empty()
    }

    pub fn contains(&self, gene: &str) -> bool {
        self.genes.iter().any(|g| g == gene)
    }
}

/// Parse GMT text: `name<TAB>description<TAB>gene...` per line.
pub fn parse_gmt(text: &str, origin: &str) -> Result<Vec<GeneSet>> {
    let mut sets = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split('\t');
        let name = parts.next().unwrap_or_default();
        let _description = parts.next().ok_or_else(|| {
            Error::InvalidInput(format!(
                "{origin} line {}: GMT rows need name, description, genes",
                lineno + 1
            ))
        })?;
        let genes: Vec<String> = parts
            .filter(|g| !g.is_empty())
            .map(str::to_string)
            .collect();
        sets.push(GeneSet::new(name, genes).map_err(|e| {
            Error::InvalidInput(format!("{origin} line {}: {e}", lineno + 1))
        })?);
    }
    if sets.is_empty() {
        return Err(Error::InvalidInput(format!("{origin}: no gene sets found")));
    }
    Ok(sets)
}

/// Read gene sets from a GMT file on disk.
pub fn read_gmt(path: &Path) -> Result<Vec<GeneSet>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut text = String::new();
    for line in BufReader::new(f).lines() {
        text.push_str(&line.map_err(|e| Error::io(path, e))?);
        text.push('\n');
    }
    parse_gmt(&text, &path.display().to_string())
}

/// Read a GMT file expected to contain exactly one set.
pub fn read_single_gmt(path: &Path) -> Result<GeneSet> {
    let mut sets = read_gmt(path)?;
    if sets.len() != 1 {
        return Err(Error::parse(
            path,
            format!("expected exactly one gene set, found {}", sets.len()),
        ));
    }
    Ok(sets.remove(0))
}

pub fn write_gmt(path: &Path, sets: &[GeneSet], description: &str) -> Result<()> {
    let mut f =
        std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
    for set in sets {
        let line = std::iter::once(set.name())
            .chain(std::iter::once(description))
            .chain(set.genes().iter().map(String::as_str))
            .collect::<Vec<_>>()
            .join("\t");
        writeln!(f, "{line}").map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

/// The shipped classical-25 set.
pub fn moffitt_classical() -> GeneSet {
    parse_gmt(MOFFITT_CLASSICAL_GMT, "builtin").unwrap().remove(0)
}

/// The shipped basal-25 set.
pub fn moffitt_basal() -> GeneSet {
    parse_gmt(MOFFITT_BASAL_GMT, "builtin").unwrap().remove(0)
}

/// The shipped 6-gene DDR panel (BRCA1, BRCA2, PALB2, RAD51, ATM, CHEK1).
pub fn ddr6() -> GeneSet {
    parse_gmt(DDR6_GMT, "builtin").unwrap().remove(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_sets_have_expected_shape() {
        let classical = moffitt_classical();
        let basal = moffitt_basal();
        let ddr = ddr6();
        assert_eq!(classical.len(), 25);
        assert_eq!(basal.len(), 25);
        assert_eq!(
            ddr.genes(),
            ["BRCA1", "BRCA2", "PALB2", "RAD51", "ATM", "CHEK1"]
        );
        // marker genes that must be present in each half
        for g in ["TFF1", "TFF2", "TFF3", "REG4", "SPINK1", "TSPAN8", "LGALS4", "CEACAM5", "AGR2", "CTSE"] {
            assert!(classical.contains(g), "classical missing {g}");
        }
        for g in ["SCEL", "KLK8", "CST6", "KRT6A", "S100A2"] {
            assert!(basal.contains(g), "basal missing {g}");
        }
        // the two halves are disjoint
        for g in classical.genes() {
            assert!(!basal.contains(g), "{g} in both halves");
        }
    }

    #[test]
    fn gmt_parses_and_dedups() {
        let sets = parse_gmt("S\tdesc\tA\tB\tA\tC\n", "test").unwrap();
        assert_eq!(sets[0].genes(), ["A", "B", "C"]);
        assert!(parse_gmt("S\n", "test").is_err()); // no description column
        assert!(parse_gmt("S\tdesc\n", "test").is_err()); // empty set
    }

    #[test]
    fn gmt_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sets.gmt");
        let sets = vec![
            GeneSet::new("ONE", ["A".to_string(), "B".to_string()]).unwrap(),
            GeneSet::new("TWO", ["C".to_string()]).unwrap(),
        ];
        write_gmt(&path, &sets, "d").unwrap();
        let back = read_gmt(&path).unwrap();
        assert_eq!(back, sets);
        assert!(read_single_gmt(&path).is_err());
    }
}

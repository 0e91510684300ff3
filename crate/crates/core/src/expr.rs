//! Dense gene-expression matrices and normalization primitives.
//!
//! [`ExpressionMatrix`] stores genes × samples values row-major with a mode
//! tag tracking what the numbers mean (raw counts, TPM, log2(TPM+1), or
//! per-gene z-scores). The operations here are pure: every transform
//! returns a new matrix.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::stats;

/// What the values in a matrix represent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExprMode {
    Counts,
    Tpm,
    Log2Tpm1,
    Zscore,
}

impl fmt::Display for ExprMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ExprMode::Counts => "counts",
            ExprMode::Tpm => "tpm",
            ExprMode::Log2Tpm1 => "log2_tpm1",
            ExprMode::Zscore => "zscore",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for ExprMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "counts" => Ok(ExprMode::Counts),
            "tpm" => Ok(ExprMode::Tpm),
            "log2_tpm1" => Ok(ExprMode::Log2Tpm1),
            "zscore" => Ok(ExprMode::Zscore),
            other => Err(Error::InvalidInput(format!(
                "unknown expression mode `{other}` (expected counts|tpm|log2_tpm1|zscore)"
            ))),
        }
    }
}

/// Dense genes × samples matrix, row-major.
#[derive(Debug, Clone)]
pub struct ExpressionMatrix {
    gene_ids: Vec<String>,
    sample_ids: Vec<String>,
    values: Vec<f64>,
    mode: ExprMode,
    gene_index: HashMap<String, usize>,
}

impl ExpressionMatrix {
    /// Build a matrix from row-major values, validating shape, uniqueness,
    /// finiteness and (for counts/TPM) non-negativity.
    pub fn new(
        gene_ids: Vec<String>,
        sample_ids: Vec<String>,
        values: Vec<f64>,
        mode: ExprMode,
    ) -> Result<Self> {
        if values.len() != gene_ids.len() * sample_ids.len() {
            return Err(Error::InvalidInput(format!(
                "value count {} does not match {} genes x {} samples",
                values.len(),
                gene_ids.len(),
                sample_ids.len()
            )));
        }
        check_unique(&gene_ids, "gene id")?;
        check_unique(&sample_ids, "sample id")?;
        for (i, v) in values.iter().enumerate() {
            if !v.is_finite() {
                let g = &gene_ids[i / sample_ids.len().max(1)];
                return Err(Error::InvalidInput(format!(
                    "non-finite expression value for gene {g}"
                )));
            }
            if matches!(mode, ExprMode::Counts | ExprMode::Tpm) && *v < 0.0 {
                let g = &gene_ids[i / sample_ids.len().max(1)];
                return Err(Error::InvalidInput(format!(
                    "negative {mode} value for gene {g}"
                )));
            }
        }
        let gene_index = gene_ids
            .iter()
            .enumerate()
            .map(|(i, g)| (g.clone(), i))
            .collect();
        Ok(Self {
            gene_ids,
            sample_ids,
            values,
            mode,
            gene_index,
        })
    }

    pub fn n_genes(&self) -> usize {
        self.gene_ids.len()
    }

    pub fn n_samples(&self) -> usize {
        self.sample_ids.len()
    }

    pub fn mode(&self) -> ExprMode {
        self.mode
    }

    pub fn gene_ids(&self) -> &[String] {
        &self.gene_ids
    }

    pub fn sample_ids(&self) -> &[String] {
        &self.sample_ids
    }

    pub fn gene_row(&self, gene: &str) -> Option<&[f64]> {
        let i = *self.gene_index.get(gene)?;
        Some(self.row(i))
    }

    pub fn row(&self, gene_idx: usize) -> &[f64] {
        let n = self.n_samples();
        &self.values[gene_idx * n..(gene_idx + 1) * n]
    }

    /// Column copy: one sample's value for every gene.
    pub fn column(&self, sample_idx: usize) -> Vec<f64> {
        let n = self.n_samples();
        (0..self.n_genes())
            .map(|g| self.values[g * n + sample_idx])
            .collect()
    }

    pub fn get(&self, gene_idx: usize, sample_idx: usize) -> f64 {
        self.values[gene_idx * self.n_samples() + sample_idx]
    }

    /// Convert raw counts to transcripts per million given per-gene lengths
    /// in kilobases. Column sums of the result are 1e6 by construction.
    pub fn counts_to_tpm(&self, lengths: &GeneLengths) -> Result<ExpressionMatrix> {
        if self.mode != ExprMode::Counts {
            return Err(Error::InvalidInput(format!(
                "counts_to_tpm expects counts, got {}",
                self.mode
            )));
        }
        let mut kb = Vec::with_capacity(self.n_genes());
        let mut missing = Vec::new();
        for g in &self.gene_ids {
            match lengths.get(g) {
                Some(l) if l > 0.0 => kb.push(l),
                Some(l) => {
                    return Err(Error::InvalidInput(format!(
                        "non-positive length {l} kb for gene {g}"
                    )))
                }
                None => missing.push(g.clone()),
            }
        }
        if !missing.is_empty() {
            return Err(Error::InvalidInput(format!(
                "missing gene lengths for: {}",
                missing.join(", ")
            )));
        }
        let (ng, ns) = (self.n_genes(), self.n_samples());
        let mut out = vec![0.0; ng * ns];
        for s in 0..ns {
            let mut total = 0.0;
            for g in 0..ng {
                total += self.values[g * ns + s] / kb[g];
            }
            if total <= 0.0 {
                return Err(Error::Degenerate(format!(
                    "sample {} has no reads (all-zero column)",
                    self.sample_ids[s]
                )));
            }
            for g in 0..ng {
                out[g * ns + s] = (self.values[g * ns + s] / kb[g]) / total * 1e6;
            }
        }
        ExpressionMatrix::new(
            self.gene_ids.clone(),
            self.sample_ids.clone(),
            out,
            ExprMode::Tpm,
        )
    }

    /// Elementwise log2(x + 1); requires TPM input.
    pub fn log2p1(&self) -> Result<ExpressionMatrix> {
        if self.mode != ExprMode::Tpm {
            return Err(Error::InvalidInput(format!(
                "log2p1 expects tpm, got {}",
                self.mode
            )));
        }
        let out = self.values.iter().map(|v| (v + 1.0).log2()).collect();
        ExpressionMatrix::new(
            self.gene_ids.clone(),
            self.sample_ids.clone(),
            out,
            ExprMode::Log2Tpm1,
        )
    }

    /// Per-gene z-scores across samples (ddof = 1); constant rows map to
    /// zeros so downstream sums stay finite.
    pub fn zscore_genes(&self) -> Result<ExpressionMatrix> {
        if self.n_samples() < 2 {
            return Err(Error::Degenerate(format!(
                "z-scoring needs at least 2 samples, got {}",
                self.n_samples()
            )));
        }
        let ns = self.n_samples();
        let mut out = Vec::with_capacity(self.values.len());
        for g in 0..self.n_genes() {
            out.extend(stats::zscore_or_zero(&self.values[g * ns..(g + 1) * ns]));
        }
        ExpressionMatrix::new(
            self.gene_ids.clone(),
            self.sample_ids.clone(),
            out,
            ExprMode::Zscore,
        )
    }

    /// Re-key rows from source ids to symbols. Sources mapping to the same
    /// symbol are resolved by `collision`; output rows keep first-occurrence
    /// order of their symbol.
    pub fn map_gene_ids(
        &self,
        map: &GeneIdMap,
        collision: CollisionPolicy,
        drop_unmapped: bool,
    ) -> Result<ExpressionMatrix> {
        let ns = self.n_samples();
        let mut unmapped = Vec::new();
        let mut symbols: Vec<String> = Vec::new();
        let mut sym_index: HashMap<String, usize> = HashMap::new();
        let mut rows: Vec<Vec<f64>> = Vec::new();

        for (gi, src) in self.gene_ids.iter().enumerate() {
            let Some(sym) = map.get(src) else {
                unmapped.push(src.clone());
                continue;
            };
            let row = &self.values[gi * ns..(gi + 1) * ns];
            match sym_index.get(sym) {
                None => {
                    sym_index.insert(sym.to_string(), symbols.len());
                    symbols.push(sym.to_string());
                    rows.push(row.to_vec());
                }
                Some(&at) => match collision {
                    CollisionPolicy::Error => {
                        return Err(Error::InvalidInput(format!(
                            "multiple source ids map to symbol {sym}"
                        )))
                    }
                    CollisionPolicy::Sum => {
                        for (acc, v) in rows[at].iter_mut().zip(row) {
                            *acc += v;
                        }
                    }
                    CollisionPolicy::Max => {
                        for (acc, v) in rows[at].iter_mut().zip(row) {
                            *acc = acc.max(*v);
                        }
                    }
                },
            }
        }
        if !unmapped.is_empty() && !drop_unmapped {
            return Err(Error::InvalidInput(format!(
                "unmapped gene ids: {}",
                unmapped.join(", ")
            )));
        }
        let values: Vec<f64> = rows.into_iter().flatten().collect();
        ExpressionMatrix::new(symbols, self.sample_ids.clone(), values, self.mode)
    }

    /// Tab-separated dump: header `gene<TAB>sample...`, one row per gene.
    pub fn write_tsv(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(
            std::fs::File::create(path).map_err(|e| Error::io(path, e))?,
        );
        let mut res = || -> std::io::Result<()> {
            write!(f, "gene")?;
            for s in &self.sample_ids {
                write!(f, "\t{s}")?;
            }
            writeln!(f)?;
            for (g, id) in self.gene_ids.iter().enumerate() {
                write!(f, "{id}")?;
                for v in self.row(g) {
                    write!(f, "\t{v}")?;
                }
                writeln!(f)?;
            }
            f.flush()
        };
        res().map_err(|e| Error::io(path, e))
    }

    pub fn read_tsv(path: &Path, mode: ExprMode) -> Result<ExpressionMatrix> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut lines = BufReader::new(f).lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::parse(path, "empty file"))?
            .map_err(|e| Error::io(path, e))?;
        let mut cols = header.split('\t');
        if cols.next() != Some("gene") {
            return Err(Error::parse(path, "first header cell must be `gene`"));
        }
        let sample_ids: Vec<String> = cols.map(str::to_string).collect();
        if sample_ids.is_empty() {
            return Err(Error::parse(path, "no sample columns"));
        }
        let mut gene_ids = Vec::new();
        let mut values = Vec::new();
        for (lineno, line) in lines.enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split('\t');
            let gene = parts
                .next()
                .ok_or_else(|| Error::parse(path, format!("line {}: empty row", lineno + 2)))?;
            gene_ids.push(gene.to_string());
            let mut n = 0;
            for p in parts {
                let v: f64 = p.parse().map_err(|_| {
                    Error::parse(path, format!("line {}: bad number `{p}`", lineno + 2))
                })?;
                values.push(v);
                n += 1;
            }
            if n != sample_ids.len() {
                return Err(Error::parse(
                    path,
                    format!(
                        "line {}: expected {} values, found {n}",
                        lineno + 2,
                        sample_ids.len()
                    ),
                ));
            }
        }
        ExpressionMatrix::new(gene_ids, sample_ids, values, mode)
            .map_err(|e| Error::parse(path, e.to_string()))
    }
}

fn check_unique(ids: &[String], what: &str) -> Result<()> {
    let mut seen = HashSet::with_capacity(ids.len());
    for id in ids {
        if !seen.insert(id.as_str()) {
            return Err(Error::InvalidInput(format!("duplicate {what}: {id}")));
        }
    }
    Ok(())
}

/// How to merge rows when several source ids map to the same symbol.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CollisionPolicy {
    Sum,
    Max,
    Error,
}

/// Per-gene transcript lengths in kilobases.
#[derive(Debug, Clone, Default)]
pub struct GeneLengths {
    kb: HashMap<String, f64>,
}

impl GeneLengths {
    pub fn new(entries: impl IntoIterator<Item = (String, f64)>) -> Self {
        Self {
            kb: entries.into_iter().collect(),
        }
    }

    pub fn get(&self, gene: &str) -> Option<f64> {
        self.kb.get(gene).copied()
    }

    /// Two-column TSV `gene<TAB>length_kb`, optional header.
    pub fn read_tsv(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut kb = HashMap::new();
        for (lineno, line) in BufReader::new(f).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.is_empty() || (lineno == 0 && line.starts_with("gene\t")) {
                continue;
            }
            let (gene, len) = line.split_once('\t').ok_or_else(|| {
                Error::parse(path, format!("line {}: expected two columns", lineno + 1))
            })?;
            let len: f64 = len.parse().map_err(|_| {
                Error::parse(path, format!("line {}: bad length `{len}`", lineno + 1))
            })?;
            kb.insert(gene.to_string(), len);
        }
        Ok(Self { kb })
    }
}

/// Mapping from source ids (e.g. versioned ENSEMBL) to gene symbols.
#[derive(Debug, Clone, Default)]
pub struct GeneIdMap {
    entries: HashMap<String, String>,
}

impl GeneIdMap {
    pub fn new(entries: impl IntoIterator<Item = (String, String)>) -> Self {
        Self {
            entries: entries.into_iter().collect(),
        }
    }

    pub fn get(&self, source: &str) -> Option<&str> {
        self.entries.get(source).map(String::as_str)
    }

    /// Two-column TSV `source_id<TAB>symbol`.
    pub fn read_tsv(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut entries = HashMap::new();
        for (lineno, line) in BufReader::new(f).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.is_empty() {
                continue;
            }
            let (src, sym) = line.split_once('\t').ok_or_else(|| {
                Error::parse(path, format!("line {}: expected two columns", lineno + 1))
            })?;
            entries.insert(src.to_string(), sym.to_string());
        }
        Ok(Self { entries })
    }
}

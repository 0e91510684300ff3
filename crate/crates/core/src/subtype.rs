//! Transcriptomic subtype labeling.
//!
//! Per-sample ssGSEA enrichment over the classical and basal gene sets,
//! cohort z-scoring of the score difference, threshold labeling at |z| = 1,
//! GATA6 tertile refinement of intermediate cases, and the DDR composite
//! score.

use std::collections::HashSet;
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::expr::{ExprMode, ExpressionMatrix};
use crate::geneset::GeneSet;
use crate::stats;

/// How equal expression values are ordered during ranking.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieBreak {
    /// Ascending gene-symbol order; deterministic across platforms.
    #[default]
    SymbolAsc,
    /// Keep the input order of the expression vector.
    InputOrder,
}

#[derive(Debug, Clone, Copy)]
pub struct SsgseaParams {
    /// Rank-weight exponent; 0 weights every set gene equally.
    pub alpha: f64,
    pub tie_break: TieBreak,
}

impl Default for SsgseaParams {
    fn default() -> Self {
        Self {
            alpha: 0.25,
            tie_break: TieBreak::default(),
        }
    }
}

/// Single-sample enrichment score of `set` in one expression vector.
///
/// Genes are ranked by descending expression (ties broken per
/// `params.tie_break`); position i (1-based) carries rank value N - i + 1.
/// The score is the sum over all positions of the gap between the
/// weighted in-set CDF and the uniform out-of-set CDF.
pub fn ssgsea_es(
    gene_ids: &[String],
    values: &[f64],
    set: &GeneSet,
    params: &SsgseaParams,
) -> Result<f64> {
    if gene_ids.len() != values.len() {
        return Err(Error::InvalidInput(format!(
            "expression vector has {} values for {} genes",
            values.len(),
            gene_ids.len()
        )));
    }
    if params.alpha < 0.0 {
        return Err(Error::InvalidInput(format!(
            "ssGSEA alpha must be non-negative, got {}",
            params.alpha
        )));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(
            "expression vector contains non-finite values".into(),
        ));
    }
    let n = gene_ids.len();
    let members: HashSet<&str> = set.genes().iter().map(String::as_str).collect();
    let present: usize = gene_ids.iter().filter(|g| members.contains(g.as_str())).count();
    if present == 0 {
        let mut absent: Vec<&str> = set.genes().iter().map(String::as_str).collect();
        absent.sort_unstable();
        return Err(Error::InvalidInput(format!(
            "gene set {} has no genes in the expression vector; missing: {}",
            set.name(),
            absent.join(", ")
        )));
    }
    if present == n {
        return Err(Error::Degenerate(format!(
            "gene set {} covers every gene in the vector; out-of-set CDF undefined",
            set.name()
        )));
    }

    let mut order: Vec<usize> = (0..n).collect();
    match params.tie_break {
        TieBreak::SymbolAsc => order.sort_by(|&a, &b| {
            values[b]
                .total_cmp(&values[a])
                .then_with(|| gene_ids[a].cmp(&gene_ids[b]))
        }),
        TieBreak::InputOrder => order.sort_by(|&a, &b| values[b].total_cmp(&values[a])),
    }

    let denom_in: f64 = order
        .iter()
        .enumerate()
        .filter(|(_, &g)| members.contains(gene_ids[g].as_str()))
        .map(|(i, _)| ((n - i) as f64).powf(params.alpha))
        .sum();
    let denom_out = (n - present) as f64;

    let mut cum_in = 0.0;
    let mut cum_out = 0.0;
    let mut es = 0.0;
    for (i, &g) in order.iter().enumerate() {
        if members.contains(gene_ids[g].as_str()) {
            cum_in += ((n - i) as f64).powf(params.alpha);
        } else {
            cum_out += 1.0;
        }
        es += cum_in / denom_in - cum_out / denom_out;
    }
    Ok(es)
}

/// Classical and basal enrichment plus their difference (the subtype score).
pub fn subtype_score(
    gene_ids: &[String],
    values: &[f64],
    classical: &GeneSet,
    basal: &GeneSet,
    params: &SsgseaParams,
) -> Result<(f64, f64, f64)> {
    let es_classical = ssgsea_es(gene_ids, values, classical, params)?;
    let es_basal = ssgsea_es(gene_ids, values, basal, params)?;
    Ok((es_classical, es_basal, es_classical - es_basal))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SubtypeLabel {
    Basal,
    Classical,
    Intermediate,
    Ambiguous,
}

impl fmt::Display for SubtypeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SubtypeLabel::Basal => "BASAL",
            SubtypeLabel::Classical => "CLASSICAL",
            SubtypeLabel::Intermediate => "INTERMEDIATE",
            SubtypeLabel::Ambiguous => "AMBIGUOUS",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for SubtypeLabel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "BASAL" => Ok(SubtypeLabel::Basal),
            "CLASSICAL" => Ok(SubtypeLabel::Classical),
            "INTERMEDIATE" => Ok(SubtypeLabel::Intermediate),
            "AMBIGUOUS" => Ok(SubtypeLabel::Ambiguous),
            other => Err(Error::InvalidInput(format!("unknown label `{other}`"))),
        }
    }
}

/// The label forced by a cohort z-score: the closed interval [-thr, +thr]
/// is intermediate.
pub fn label_for_z(z: f64, threshold: f64) -> SubtypeLabel {
    if z > threshold {
        SubtypeLabel::Classical
    } else if z < -threshold {
        SubtypeLabel::Basal
    } else {
        SubtypeLabel::Intermediate
    }
}

/// Cohort z-scores (ddof = 1) of subtype scores and the induced labels.
pub fn assign_labels(scores: &[f64]) -> Result<Vec<(f64, SubtypeLabel)>> {
    assign_labels_with(scores, 1.0)
}

pub fn assign_labels_with(scores: &[f64], threshold: f64) -> Result<Vec<(f64, SubtypeLabel)>> {
    if scores.len() < 2 {
        return Err(Error::Degenerate(format!(
            "label assignment needs at least 2 samples, got {}",
            scores.len()
        )));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::InvalidInput("non-finite subtype score".into()));
    }
    let sd = stats::sample_sd(scores);
    if !(sd > 0.0) {
        return Err(Error::Degenerate(
            "cohort subtype scores have zero variance; z-scores undefined".into(),
        ));
    }
    let m = stats::mean(scores);
    Ok(scores
        .iter()
        .map(|s| {
            let z = (s - m) / sd;
            (z, label_for_z(z, threshold))
        })
        .collect())
}

/// GATA6 TPM cutoffs separating the outer tertiles.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TertileCutoffs {
    pub lower: f64,
    pub upper: f64,
}

impl TertileCutoffs {
    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        if !(lower <= upper) {
            return Err(Error::InvalidInput(format!(
                "tertile cutoffs must satisfy lower <= upper, got ({lower}, {upper})"
            )));
        }
        Ok(Self { lower, upper })
    }
}

/// Empirical 1/3 and 2/3 quantiles (linear interpolation) of GATA6 TPM.
pub fn gata6_tertiles(gata6_tpm: &[f64]) -> Result<TertileCutoffs> {
    if gata6_tpm.len() < 3 {
        return Err(Error::Degenerate(format!(
            "tertiles need at least 3 samples, got {}",
            gata6_tpm.len()
        )));
    }
    TertileCutoffs::new(
        stats::quantile_linear(gata6_tpm, 1.0 / 3.0),
        stats::quantile_linear(gata6_tpm, 2.0 / 3.0),
    )
}

/// Per-sample labeling state carried through the pipeline and into
/// `labels.tsv`.
#[derive(Debug, Clone, PartialEq)]
pub struct SubtypeRecord {
    pub sample_id: String,
    pub es_classical: f64,
    pub es_basal: f64,
    pub score: f64,
    pub zscore: f64,
    pub label: SubtypeLabel,
    pub gata6_tpm: Option<f64>,
    pub ddr_score: Option<f64>,
}

/// Resolve intermediate records by GATA6 tertile: bottom tertile is basal,
/// top tertile classical, in between ambiguous. Non-intermediate records
/// pass through untouched.
pub fn refine_with_gata6(
    records: Vec<SubtypeRecord>,
    cutoffs: &TertileCutoffs,
) -> Result<Vec<SubtypeRecord>> {
    records
        .into_iter()
        .map(|mut r| {
            if r.label != SubtypeLabel::Intermediate {
                return Ok(r);
            }
            let gata6 = r.gata6_tpm.ok_or_else(|| {
                Error::InvalidInput(format!(
                    "sample {} is intermediate but has no GATA6 value",
                    r.sample_id
                ))
            })?;
            r.label = if gata6 <= cutoffs.lower {
                SubtypeLabel::Basal
            } else if gata6 >= cutoffs.upper {
                SubtypeLabel::Classical
            } else {
                SubtypeLabel::Ambiguous
            };
            Ok(r)
        })
        .collect()
}

/// Composite DDR score: per-sample sum of per-gene z-scores (ddof = 1)
/// over the DDR panel, computed on log2(TPM+1) unless `on_raw_tpm`.
pub fn ddr_score(m: &ExpressionMatrix, ddr: &GeneSet, on_raw_tpm: bool) -> Result<Vec<f64>> {
    if m.mode() != ExprMode::Tpm {
        return Err(Error::InvalidInput(format!(
            "DDR score expects a TPM matrix, got {}",
            m.mode()
        )));
    }
    if m.n_samples() < 2 {
        return Err(Error::Degenerate(
            "DDR score needs at least 2 samples".into(),
        ));
    }
    let missing: Vec<&str> = ddr
        .genes()
        .iter()
        .filter(|g| m.gene_row(g).is_none())
        .map(|g| g.as_str())
        .collect();
    if !missing.is_empty() {
        return Err(Error::InvalidInput(format!(
            "DDR genes absent from matrix: {}",
            missing.join(", ")
        )));
    }
    let mut scores = vec![0.0; m.n_samples()];
    for gene in ddr.genes() {
        let row = m.gene_row(gene).unwrap();
        let transformed: Vec<f64> = if on_raw_tpm {
            row.to_vec()
        } else {
            row.iter().map(|v| (v + 1.0).log2()).collect()
        };
        for (acc, z) in scores.iter_mut().zip(stats::zscore_or_zero(&transformed)) {
            *acc += z;
        }
    }
    Ok(scores)
}

/// Tertile source for GATA6 refinement.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum TertileMode {
    /// Empirical 1/3 and 2/3 quantiles of the ingested cohort.
    Empirical,
    /// Fixed TPM cutoffs (the published approximations are 20 and 60).
    Fixed { lower: f64, upper: f64 },
}

#[derive(Debug, Clone)]
pub struct LabelOptions {
    pub ssgsea: SsgseaParams,
    pub z_threshold: f64,
    pub tertiles: TertileMode,
    /// Compute the DDR composite (requires all six panel genes).
    pub compute_ddr: bool,
    pub ddr_on_raw_tpm: bool,
}

impl Default for LabelOptions {
    fn default() -> Self {
        Self {
            ssgsea: SsgseaParams::default(),
            z_threshold: 1.0,
            tertiles: TertileMode::Empirical,
            compute_ddr: true,
            ddr_on_raw_tpm: false,
        }
    }
}

/// Full labeling pipeline over a TPM matrix: ssGSEA scores, cohort
/// z-scoring, threshold labels, GATA6 refinement, DDR composite.
pub fn label_cohort(
    tpm: &ExpressionMatrix,
    classical: &GeneSet,
    basal: &GeneSet,
    ddr: &GeneSet,
    opts: &LabelOptions,
) -> Result<Vec<SubtypeRecord>> {
    if tpm.mode() != ExprMode::Tpm {
        return Err(Error::InvalidInput(format!(
            "labeling expects a TPM matrix, got {}",
            tpm.mode()
        )));
    }
    let gene_ids = tpm.gene_ids();
    let mut records = Vec::with_capacity(tpm.n_samples());
    let mut scores = Vec::with_capacity(tpm.n_samples());
    for (s, sample_id) in tpm.sample_ids().iter().enumerate() {
        let col = tpm.column(s);
        let (es_c, es_b, score) = subtype_score(gene_ids, &col, classical, basal, &opts.ssgsea)?;
        scores.push(score);
        records.push(SubtypeRecord {
            sample_id: sample_id.clone(),
            es_classical: es_c,
            es_basal: es_b,
            score,
            zscore: 0.0,
            label: SubtypeLabel::Intermediate,
            gata6_tpm: None,
            ddr_score: None,
        });
    }
    for (r, (z, label)) in records
        .iter_mut()
        .zip(assign_labels_with(&scores, opts.z_threshold)?)
    {
        r.zscore = z;
        r.label = label;
    }

    let gata6_row = tpm.gene_row("GATA6").map(<[f64]>::to_vec);
    if let Some(row) = &gata6_row {
        for (r, v) in records.iter_mut().zip(row) {
            r.gata6_tpm = Some(*v);
        }
    }
    let has_intermediate = records
        .iter()
        .any(|r| r.label == SubtypeLabel::Intermediate);
    if has_intermediate {
        let row = gata6_row.as_ref().ok_or_else(|| {
            Error::InvalidInput(
                "cohort has intermediate cases but no GATA6 row for refinement".into(),
            )
        })?;
        let cutoffs = match opts.tertiles {
            TertileMode::Empirical => gata6_tertiles(row)?,
            TertileMode::Fixed { lower, upper } => TertileCutoffs::new(lower, upper)?,
        };
        records = refine_with_gata6(records, &cutoffs)?;
    }

    if opts.compute_ddr {
        let ddr_scores = ddr_score(tpm, ddr, opts.ddr_on_raw_tpm)?;
        for (r, d) in records.iter_mut().zip(ddr_scores) {
            r.ddr_score = Some(d);
        }
    }
    Ok(records)
}

/// Counts per label plus the classical:basal ratio.
#[derive(Debug, Clone, serde::Serialize)]
pub struct LabelSummary {
    pub n: usize,
    pub basal: usize,
    pub classical: usize,
    pub intermediate: usize,
    pub ambiguous: usize,
    pub classical_fraction_of_called: f64,
}

pub fn summarize_labels(records: &[SubtypeRecord]) -> LabelSummary {
    let count = |l: SubtypeLabel| records.iter().filter(|r| r.label == l).count();
    let basal = count(SubtypeLabel::Basal);
    let classical = count(SubtypeLabel::Classical);
    LabelSummary {
        n: records.len(),
        basal,
        classical,
        intermediate: count(SubtypeLabel::Intermediate),
        ambiguous: count(SubtypeLabel::Ambiguous),
        classical_fraction_of_called: if basal + classical > 0 {
            classical as f64 / (basal + classical) as f64
        } else {
            f64::NAN
        },
    }
}

const LABELS_HEADER: &str =
    "sample_id\tes_classical\tes_basal\tscore\tzscore\tlabel\tgata6_tpm\tddr_score";

pub fn write_labels_tsv(path: &Path, records: &[SubtypeRecord]) -> Result<()> {
    let mut f =
        std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
    let mut res = || -> std::io::Result<()> {
        writeln!(f, "{LABELS_HEADER}")?;
        for r in records {
            let opt = |v: Option<f64>| v.map_or("NA".to_string(), |x| x.to_string());
            writeln!(
                f,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                r.sample_id,
                r.es_classical,
                r.es_basal,
                r.score,
                r.zscore,
                r.label,
                opt(r.gata6_tpm),
                opt(r.ddr_score)
            )?;
        }
        f.flush()
    };
    res().map_err(|e| Error::io(path, e))
}

pub fn read_labels_tsv(path: &Path) -> Result<Vec<SubtypeRecord>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(f).lines();
    match lines.next() {
        Some(Ok(h)) if h == LABELS_HEADER => {}
        _ => return Err(Error::parse(path, "bad or missing labels header")),
    }
    let mut records = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 8 {
            return Err(Error::parse(
                path,
                format!("line {}: expected 8 columns", lineno + 2),
            ));
        }
        let num = |s: &str| -> Result<f64> {
            s.parse()
                .map_err(|_| Error::parse(path, format!("line {}: bad number `{s}`", lineno + 2)))
        };
        let opt_num = |s: &str| -> Result<Option<f64>> {
            if s == "NA" {
                Ok(None)
            } else {
                num(s).map(Some)
            }
        };
        records.push(SubtypeRecord {
            sample_id: cols[0].to_string(),
            es_classical: num(cols[1])?,
            es_basal: num(cols[2])?,
            score: num(cols[3])?,
            zscore: num(cols[4])?,
            label: cols[5].parse()?,
            gata6_tpm: opt_num(cols[6])?,
            ddr_score: opt_num(cols[7])?,
        });
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::ExprMode;

    fn ids(names: &[&str]) -> Vec<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    fn set(name: &str, genes: &[&str]) -> GeneSet {
        GeneSet::new(name, genes.iter().map(|s| s.to_string())).unwrap()
    }

    /// Literal O(N^2) recomputation of the running-sum definition.
    fn es_oracle(gene_ids: &[String], values: &[f64], members: &[&str], alpha: f64) -> f64 {
        let n = gene_ids.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            values[b]
                .total_cmp(&values[a])
                .then_with(|| gene_ids[a].cmp(&gene_ids[b]))
        });
        let in_set = |g: usize| members.contains(&gene_ids[g].as_str());
        let rank_val = |pos: usize| (n - pos) as f64; // 0-based position
        let denom_in: f64 = (0..n)
            .filter(|&i| in_set(order[i]))
            .map(|i| rank_val(i).powf(alpha))
            .sum();
        let n_in = (0..n).filter(|&i| in_set(order[i])).count();
        let denom_out = (n - n_in) as f64;
        let mut es = 0.0;
        for i in 0..n {
            let p_in: f64 = (0..=i)
                .filter(|&j| in_set(order[j]))
                .map(|j| rank_val(j).powf(alpha))
                .sum::<f64>()
                / denom_in;
            let p_out = (0..=i).filter(|&j| !in_set(order[j])).count() as f64 / denom_out;
            es += p_in - p_out;
        }
        es
    }

    #[test]
    fn two_gene_closed_forms() {
        let g = ids(&["hi", "lo"]);
        let v = [10.0, 1.0];
        let p = SsgseaParams {
            alpha: 0.0,
            ..Default::default()
        };
        let top = ssgsea_es(&g, &v, &set("top", &["hi"]), &p).unwrap();
        assert!((top - 1.0).abs() < 1e-12);
        let bottom = ssgsea_es(&g, &v, &set("bottom", &["lo"]), &p).unwrap();
        assert!((bottom + 1.0).abs() < 1e-12);
    }

    #[test]
    fn matches_running_sum_oracle() {
        let g = ids(&["a", "b", "c", "d", "e", "f", "g", "h", "i", "j"]);
        let v = [0.3, 7.1, 2.2, 9.9, 5.5, 1.7, 8.8, 0.1, 4.4, 6.6];
        let members = ["b", "e", "i"];
        let s = set("s", &members);
        for alpha in [0.0, 0.25, 0.75, 1.0] {
            let p = SsgseaParams {
                alpha,
                ..Default::default()
            };
            let es = ssgsea_es(&g, &v, &s, &p).unwrap();
            let oracle = es_oracle(&g, &v, &members, alpha);
            assert!((es - oracle).abs() < 1e-9, "alpha {alpha}: {es} vs {oracle}");
        }
    }

    #[test]
    fn invariant_under_monotone_transform() {
        let g = ids(&["a", "b", "c", "d", "e"]);
        let v = [0.5, 3.0, 1.5, 9.0, 2.5];
        let warped: Vec<f64> = v.iter().map(|x| x.exp()).collect();
        let s = set("s", &["b", "d"]);
        let p = SsgseaParams::default();
        assert_eq!(
            ssgsea_es(&g, &v, &s, &p).unwrap(),
            ssgsea_es(&g, &warped, &s, &p).unwrap()
        );
    }

    #[test]
    fn ssgsea_errors() {
        let g = ids(&["a", "b"]);
        let v = [1.0, 2.0];
        let p = SsgseaParams::default();
        let err = ssgsea_es(&g, &v, &set("none", &["x", "y"]), &p).unwrap_err();
        assert!(matches!(&err, Error::InvalidInput(m) if m.contains('x') && m.contains('y')));
        let err = ssgsea_es(&g, &v, &set("all", &["a", "b"]), &p).unwrap_err();
        assert!(matches!(err, Error::Degenerate(_)));
    }

    #[test]
    fn score_identities() {
        let g = ids(&["a", "b", "c", "d"]);
        let v = [4.0, 1.0, 3.0, 2.0];
        let p = SsgseaParams::default();
        let same = set("s", &["a", "c"]);
        let (_, _, score) = subtype_score(&g, &v, &same, &same, &p).unwrap();
        assert_eq!(score, 0.0);

        let c = set("c", &["a", "b"]);
        let b = set("b", &["c", "d"]);
        let (_, _, fwd) = subtype_score(&g, &v, &c, &b, &p).unwrap();
        let (_, _, rev) = subtype_score(&g, &v, &b, &c, &p).unwrap();
        assert_eq!(fwd, -rev);
    }

    #[test]
    fn label_rule() {
        assert_eq!(label_for_z(1.5, 1.0), SubtypeLabel::Classical);
        assert_eq!(label_for_z(-1.0, 1.0), SubtypeLabel::Intermediate);
        assert_eq!(label_for_z(1.0, 1.0), SubtypeLabel::Intermediate);
        assert_eq!(label_for_z(-1.2, 1.0), SubtypeLabel::Basal);
    }

    #[test]
    fn assign_labels_cohort() {
        // (0,1,2): exact z of (-1, 0, 1), all boundary/intermediate
        let labels = assign_labels(&[0.0, 1.0, 2.0]).unwrap();
        assert_eq!(labels[0].0, -1.0);
        assert_eq!(labels[2].0, 1.0);
        assert!(labels.iter().all(|(_, l)| *l == SubtypeLabel::Intermediate));

        // extremes exceed |1|, middle exactly 0
        let labels = assign_labels(&[-3.0, -1.0, 0.0, 1.0, 3.0]).unwrap();
        assert_eq!(labels[0].1, SubtypeLabel::Basal);
        assert_eq!(labels[2].0, 0.0);
        assert_eq!(labels[2].1, SubtypeLabel::Intermediate);
        assert_eq!(labels[4].1, SubtypeLabel::Classical);

        assert!(matches!(
            assign_labels(&[2.0, 2.0, 2.0]),
            Err(Error::Degenerate(_))
        ));
        assert!(assign_labels(&[1.0]).is_err());
    }

    #[test]
    fn tertile_examples() {
        let zeros = gata6_tertiles(&[0.0, 0.0, 0.0]).unwrap();
        assert_eq!((zeros.lower, zeros.upper), (0.0, 0.0));

        let uniform: Vec<f64> = (1..=9).map(|i| i as f64).collect();
        let t = gata6_tertiles(&uniform).unwrap();
        assert!((t.lower - 11.0 / 3.0).abs() < 1e-9);
        assert!((t.upper - 19.0 / 3.0).abs() < 1e-9);

        let fixed = TertileCutoffs::new(20.0, 60.0).unwrap();
        assert_eq!((fixed.lower, fixed.upper), (20.0, 60.0));
        assert!(gata6_tertiles(&[1.0, 2.0]).is_err());
        assert!(TertileCutoffs::new(5.0, 1.0).is_err());
    }

    fn rec(id: &str, z: f64, label: SubtypeLabel, gata6: Option<f64>) -> SubtypeRecord {
        SubtypeRecord {
            sample_id: id.into(),
            es_classical: 0.0,
            es_basal: 0.0,
            score: 0.0,
            zscore: z,
            label,
            gata6_tpm: gata6,
            ddr_score: None,
        }
    }

    #[test]
    fn gata6_refinement_rules() {
        let cutoffs = TertileCutoffs::new(20.0, 60.0).unwrap();
        let records = vec![
            rec("low", 0.2, SubtypeLabel::Intermediate, Some(5.0)),
            rec("high", -0.5, SubtypeLabel::Intermediate, Some(100.0)),
            rec("mid", 0.0, SubtypeLabel::Intermediate, Some(40.0)),
            rec("called", 2.0, SubtypeLabel::Classical, Some(5.0)),
        ];
        let out = refine_with_gata6(records, &cutoffs).unwrap();
        assert_eq!(out[0].label, SubtypeLabel::Basal);
        assert_eq!(out[1].label, SubtypeLabel::Classical);
        assert_eq!(out[2].label, SubtypeLabel::Ambiguous);
        assert_eq!(out[3].label, SubtypeLabel::Classical); // untouched

        let missing = vec![rec("x", 0.0, SubtypeLabel::Intermediate, None)];
        let err = refine_with_gata6(missing, &cutoffs).unwrap_err();
        assert!(matches!(&err, Error::InvalidInput(m) if m.contains('x')));
    }

    fn tpm_matrix(genes: &[&str], samples: usize, values: &[f64]) -> ExpressionMatrix {
        ExpressionMatrix::new(
            ids(genes),
            (0..samples).map(|i| format!("s{i}")).collect(),
            values.to_vec(),
            ExprMode::Tpm,
        )
        .unwrap()
    }

    #[test]
    fn ddr_score_rules() {
        let panel = set("ddr", &["BRCA1", "BRCA2", "PALB2", "RAD51", "ATM", "CHEK1"]);
        // constant rows -> all zeros
        let m = tpm_matrix(
            &["BRCA1", "BRCA2", "PALB2", "RAD51", "ATM", "CHEK1"],
            3,
            &[5.0; 18],
        );
        assert_eq!(ddr_score(&m, &panel, false).unwrap(), vec![0.0, 0.0, 0.0]);

        // single-gene panel equals that gene's z-score
        let single = set("one", &["BRCA1"]);
        let m = tpm_matrix(&["BRCA1", "OTHER"], 2, &[1.0, 3.0, 9.0, 9.0]);
        let d = ddr_score(&m, &single, false).unwrap();
        let lg: Vec<f64> = [1.0, 3.0].iter().map(|v| (v + 1.0f64).log2()).collect();
        let z = stats::zscore_or_zero(&lg);
        assert!((d[0] - z[0]).abs() < 1e-12 && (d[1] - z[1]).abs() < 1e-12);

        let err = ddr_score(&tpm_matrix(&["BRCA1"], 2, &[1.0, 2.0]), &panel, false).unwrap_err();
        assert!(matches!(&err, Error::InvalidInput(m) if m.contains("CHEK1")));
    }

    #[test]
    fn ddr_matches_formula_oracle() {
        let genes = ["BRCA1", "BRCA2", "PALB2", "RAD51", "ATM", "CHEK1"];
        let panel = set("ddr", &genes);
        let vals: Vec<f64> = (0..48).map(|i| ((i * 37 % 101) as f64) * 0.7 + 0.3).collect();
        let m = tpm_matrix(&genes, 8, &vals);
        let d = ddr_score(&m, &panel, false).unwrap();
        for s in 0..8 {
            let mut expect = 0.0;
            for g in 0..6 {
                let row: Vec<f64> = (0..8).map(|c| (vals[g * 8 + c] + 1.0).log2()).collect();
                let mean = row.iter().sum::<f64>() / 8.0;
                let sd = (row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 7.0).sqrt();
                expect += (row[s] - mean) / sd;
            }
            assert!((d[s] - expect).abs() < 1e-9, "sample {s}");
        }
    }

    #[test]
    fn ddr_invariant_to_appending_constant_gene() {
        let genes = ["BRCA1", "BRCA2", "PALB2", "RAD51", "ATM", "CHEK1"];
        let panel = set("ddr", &genes);
        let vals: Vec<f64> = (0..24).map(|i| (i as f64) * 1.3 + 0.1).collect();
        let m = tpm_matrix(&genes, 4, &vals);
        let base = ddr_score(&m, &panel, false).unwrap();

        let mut genes_plus: Vec<&str> = genes.to_vec();
        genes_plus.push("FILLER");
        let mut vals_plus = vals.clone();
        vals_plus.extend([7.0; 4]);
        let m2 = tpm_matrix(&genes_plus, 4, &vals_plus);
        assert_eq!(ddr_score(&m2, &panel, false).unwrap(), base);
    }

    #[test]
    fn labels_tsv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("labels.tsv");
        let records = vec![
            rec("a", 1.5, SubtypeLabel::Classical, Some(80.0)),
            rec("b", -0.2, SubtypeLabel::Ambiguous, None),
        ];
        write_labels_tsv(&path, &records).unwrap();
        let back = read_labels_tsv(&path).unwrap();
        assert_eq!(back, records);
    }
}

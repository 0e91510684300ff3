//! Kaplan-Meier estimation, median survival with confidence intervals, and
//! the two-group log-rank test.
//!
//! Ties of deaths and censorings at the same time are handled with the
//! deaths-first convention. `PaperReplica` censoring reproduces the source
//! analysis that excluded alive-but-lost-to-follow-up patients; `Standard`
//! keeps right-censored records and is the default.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::stats;

const Z_95: f64 = 1.959963984540054;

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SurvivalRecord {
    pub sample_id: String,
    /// Months from diagnosis; finite and positive.
    pub time: f64,
    /// true = death observed, false = right-censored.
    pub event: bool,
    pub group: String,
}

impl SurvivalRecord {
    pub fn new(sample_id: impl Into<String>, time: f64, event: bool, group: impl Into<String>) -> Result<Self> {
        if !time.is_finite() || time <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "survival time must be finite and positive, got {time}"
            )));
        }
        Ok(Self {
            sample_id: sample_id.into(),
            time,
            event,
            group: group.into(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CensoringMode {
    /// Right-censored records stay in the risk set until their time.
    #[default]
    Standard,
    /// Censored records are dropped before estimation.
    PaperReplica,
}

impl std::str::FromStr for CensoringMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standard" => Ok(CensoringMode::Standard),
            "paper_replica" => Ok(CensoringMode::PaperReplica),
            other => Err(Error::InvalidInput(format!(
                "unknown censoring mode `{other}` (expected standard|paper_replica)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CiMethod {
    /// Kalbfleisch-Prentice log(-log S) transform; bounded in [0, 1].
    #[default]
    LogLog,
    /// Plain Greenwood S +- z*se, clipped to [0, 1].
    Linear,
}

/// Product-limit curve evaluated at the distinct death times.
#[derive(Debug, Clone, PartialEq)]
pub struct KmCurve {
    pub times: Vec<f64>,
    pub n_at_risk: Vec<usize>,
    pub n_events: Vec<usize>,
    pub survival: Vec<f64>,
    /// Greenwood variance of S at each time.
    pub variance: Vec<f64>,
    pub ci_low: Vec<f64>,
    pub ci_high: Vec<f64>,
    /// Subjects entering the estimate (after censoring-mode filtering).
    pub n_subjects: usize,
}

pub fn km_estimate(records: &[SurvivalRecord], mode: CensoringMode) -> Result<KmCurve> {
    km_estimate_with(records, mode, CiMethod::default())
}

pub fn km_estimate_with(
    records: &[SurvivalRecord],
    mode: CensoringMode,
    ci: CiMethod,
) -> Result<KmCurve> {
    let mut data: Vec<(f64, bool)> = records
        .iter()
        .filter(|r| mode == CensoringMode::Standard || r.event)
        .map(|r| (r.time, r.event))
        .collect();
    if data.is_empty() {
        return Err(Error::Degenerate(
            "no subjects left after censoring-mode filtering".into(),
        ));
    }
    data.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = data.len();

    let mut curve = KmCurve {
        times: Vec::new(),
        n_at_risk: Vec::new(),
        n_events: Vec::new(),
        survival: Vec::new(),
        variance: Vec::new(),
        ci_low: Vec::new(),
        ci_high: Vec::new(),
        n_subjects: n,
    };

    let mut s = 1.0;
    let mut greenwood_sum = 0.0; // sum of d / (n (n - d))
    let mut loglog_sum = 0.0; // same accumulator, used by the log-log CI
    let mut i = 0;
    while i < n {
        let t = data[i].0;
        let at_risk = n - i; // deaths-first: everyone with time >= t
        let mut deaths = 0usize;
        let mut j = i;
        while j < n && data[j].0 == t {
            if data[j].1 {
                deaths += 1;
            }
            j += 1;
        }
        if deaths > 0 {
            let nd = at_risk as f64;
            let dd = deaths as f64;
            s *= 1.0 - dd / nd;
            if at_risk > deaths {
                greenwood_sum += dd / (nd * (nd - dd));
                loglog_sum = greenwood_sum;
            } else {
                greenwood_sum = f64::INFINITY;
            }
            let var = if s > 0.0 {
                s * s * greenwood_sum
            } else {
                0.0
            };
            let (lo, hi) = ci_bounds(s, loglog_sum, var, ci);
            curve.times.push(t);
            curve.n_at_risk.push(at_risk);
            curve.n_events.push(deaths);
            curve.survival.push(s);
            curve.variance.push(var);
            curve.ci_low.push(lo);
            curve.ci_high.push(hi);
        }
        i = j;
    }
    Ok(curve)
}

fn ci_bounds(s: f64, loglog_sum: f64, var: f64, method: CiMethod) -> (f64, f64) {
    if s <= 0.0 {
        return (0.0, 0.0);
    }
    if s >= 1.0 {
        return (1.0, 1.0);
    }
    match method {
        CiMethod::LogLog => {
            // se of log(-log S)
            let se = loglog_sum.sqrt() / s.ln().abs();
            if !se.is_finite() {
                return (0.0, 1.0);
            }
            let lo = s.powf((Z_95 * se).exp());
            let hi = s.powf((-Z_95 * se).exp());
            (lo, hi)
        }
        CiMethod::Linear => {
            let se = var.sqrt();
            ((s - Z_95 * se).max(0.0), (s + Z_95 * se).min(1.0))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct MedianSurvival {
    /// Smallest event time with S <= 0.5; None when never reached.
    pub median: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
}

/// Median survival and its confidence bounds from the first times the
/// estimate and its envelopes cross one half.
pub fn median_survival(curve: &KmCurve) -> MedianSurvival {
    let first_crossing = |values: &[f64]| {
        values
            .iter()
            .position(|&v| v <= 0.5)
            .map(|at| curve.times[at])
    };
    MedianSurvival {
        median: first_crossing(&curve.survival),
        ci_low: first_crossing(&curve.ci_low),
        ci_high: first_crossing(&curve.ci_high),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct LogRank {
    pub chi2: f64,
    pub p: f64,
}

/// Two-group log-rank test over the pooled distinct death times.
pub fn logrank_test(
    group_a: &[SurvivalRecord],
    group_b: &[SurvivalRecord],
    mode: CensoringMode,
) -> Result<LogRank> {
    let filter = |recs: &[SurvivalRecord]| -> Vec<(f64, bool)> {
        recs.iter()
            .filter(|r| mode == CensoringMode::Standard || r.event)
            .map(|r| (r.time, r.event))
            .collect()
    };
    let a = filter(group_a);
    let b = filter(group_b);
    if a.is_empty() || b.is_empty() {
        return Err(Error::Degenerate(
            "log-rank needs both groups non-empty after filtering".into(),
        ));
    }
    let events = a.iter().chain(&b).filter(|(_, e)| *e).count();
    if events == 0 {
        return Err(Error::Degenerate("log-rank needs at least one event".into()));
    }

    // (time, in_a, event), sorted by time
    let mut all: Vec<(f64, bool, bool)> = a
        .iter()
        .map(|&(t, e)| (t, true, e))
        .chain(b.iter().map(|&(t, e)| (t, false, e)))
        .collect();
    all.sort_by(|x, y| x.0.total_cmp(&y.0));

    let n_total = all.len();
    let mut observed_minus_expected = 0.0;
    let mut variance = 0.0;
    let mut i = 0;
    let mut at_risk_a = a.len();
    while i < n_total {
        let t = all[i].0;
        let n_at_risk = n_total - i;
        let mut deaths = 0usize;
        let mut deaths_a = 0usize;
        let mut leaving_a = 0usize;
        let mut j = i;
        while j < n_total && all[j].0 == t {
            if all[j].2 {
                deaths += 1;
                if all[j].1 {
                    deaths_a += 1;
                }
            }
            if all[j].1 {
                leaving_a += 1;
            }
            j += 1;
        }
        if deaths > 0 {
            let nf = n_at_risk as f64;
            let na = at_risk_a as f64;
            let df = deaths as f64;
            observed_minus_expected += deaths_a as f64 - df * na / nf;
            if n_at_risk > 1 {
                variance += df * (na / nf) * (1.0 - na / nf) * (nf - df) / (nf - 1.0);
            }
        }
        at_risk_a -= leaving_a;
        i = j;
    }
    if variance <= 0.0 {
        return Err(Error::Degenerate(
            "log-rank variance is zero; groups cannot be compared".into(),
        ));
    }
    let chi2 = observed_minus_expected * observed_minus_expected / variance;
    Ok(LogRank {
        chi2,
        p: chi2_1df_pvalue(chi2)?,
    })
}

/// Upper tail of the chi-square distribution with one degree of freedom.
pub fn chi2_1df_pvalue(x: f64) -> Result<f64> {
    if !x.is_finite() || x < 0.0 {
        return Err(Error::InvalidInput(format!(
            "chi-square statistic must be finite and non-negative, got {x}"
        )));
    }
    Ok(stats::erfc((x / 2.0).sqrt()))
}

/// `time, n_at_risk, survival, ci_low, ci_high` rows at event times.
pub fn write_km_tsv(path: &Path, curve: &KmCurve) -> Result<()> {
    let mut f =
        std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
    let mut res = || -> std::io::Result<()> {
        writeln!(f, "time\tn_at_risk\tsurvival\tci_low\tci_high")?;
        for i in 0..curve.times.len() {
            writeln!(
                f,
                "{}\t{}\t{}\t{}\t{}",
                curve.times[i],
                curve.n_at_risk[i],
                curve.survival[i],
                curve.ci_low[i],
                curve.ci_high[i]
            )?;
        }
        f.flush()
    };
    res().map_err(|e| Error::io(path, e))
}

//! Writer-level comparison of metric distributions.

pub mod special;

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::Path;

use serde::Serialize;
use thiserror::Error;

use crate::metrics::{Metric, MetricsRecord, Scope};
use special::student_t_two_sided;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("sample is empty")]
    EmptySample,
    #[error("sample of size {0} is too small (need at least 2)")]
    InsufficientSample(usize),
    #[error("sample contains a non-finite value")]
    NonFinite,
    #[error("need at least two writers with retained networks, found {0}")]
    TooFewWriters(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSample {
    pub writer: String,
    pub metric: Metric,
    pub scope: Scope,
    /// Defined values only; missing metric values are left out.
    pub values: Vec<f64>,
}

impl ScoreSample {
    pub fn n(&self) -> usize {
        self.values.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub n: usize,
    pub mean: Option<f64>,
    /// Sample standard deviation (divisor `n - 1`).
    pub std: Option<f64>,
}

pub fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

/// Unbiased sample variance, two-pass.
pub fn sample_variance(values: &[f64]) -> Option<f64> {
    if values.len() < 2 {
        return None;
    }
    let m = mean(values)?;
    let ss: f64 = values.iter().map(|x| (x - m) * (x - m)).sum();
    Some(ss / (values.len() - 1) as f64)
}

pub fn summarize(values: &[f64]) -> Summary {
    Summary {
        n: values.len(),
        mean: mean(values),
        std: sample_variance(values).map(f64::sqrt),
    }
}

fn sorted_finite(values: &[f64]) -> Result<Vec<f64>, StatsError> {
    if values.is_empty() {
        return Err(StatsError::EmptySample);
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// First Wasserstein distance between two empirical distributions with
/// uniform weights: the area between their CDFs.
pub fn wasserstein(a: &[f64], b: &[f64]) -> Result<f64, StatsError> {
    let a = sorted_finite(a)?;
    let b = sorted_finite(b)?;
    let mut all: Vec<f64> = a.iter().chain(&b).copied().collect();
    all.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut ia, mut ib) = (0usize, 0usize);
    let mut total = 0.0;
    for w in all.windows(2) {
        let (x, next) = (w[0], w[1]);
        while ia < a.len() && a[ia] <= x {
            ia += 1;
        }
        while ib < b.len() && b[ib] <= x {
            ib += 1;
        }
        total += (ia as f64 / na - ib as f64 / nb).abs() * (next - x);
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WelchResult {
    pub t: f64,
    pub df: f64,
    /// Two-sided p-value.
    pub p: f64,
}

/// Welch's unequal-variance t-test with Welch-Satterthwaite degrees of freedom.
///
/// When both samples have zero variance the statistic degenerates: equal means
/// give `t = 0, p = 1`, different means give `t = +-inf, p = 0`, and `df` is
/// reported as `n_a + n_b - 2`.
pub fn welch_t_test(a: &[f64], b: &[f64]) -> Result<WelchResult, StatsError> {
    for s in [a, b] {
        if s.len() < 2 {
            return Err(StatsError::InsufficientSample(s.len()));
        }
        if s.iter().any(|v| !v.is_finite()) {
            return Err(StatsError::NonFinite);
        }
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (ma, mb) = (mean(a).unwrap(), mean(b).unwrap());
    let (va, vb) = (sample_variance(a).unwrap(), sample_variance(b).unwrap());
    if va == 0.0 && vb == 0.0 {
        let df = na + nb - 2.0;
        return Ok(if ma == mb {
            WelchResult { t: 0.0, df, p: 1.0 }
        } else {
            WelchResult {
                t: if ma > mb { f64::INFINITY } else { f64::NEG_INFINITY },
                df,
                p: 0.0,
            }
        });
    }
    let (sa, sb) = (va / na, vb / nb);
    let se2 = sa + sb;
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2 / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    Ok(WelchResult {
        t,
        df,
        p: student_t_two_sided(t, df),
    })
}

/// p-values this small are shown as 0.
pub const P_DISPLAY_FLOOR: f64 = 1e-300;

pub fn display_p(p: f64) -> f64 {
    if p < P_DISPLAY_FLOOR {
        0.0
    } else {
        p
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub writer: String,
    pub metric: Metric,
    pub scope: Scope,
    pub summary: Summary,
}

/// Symmetric writer-by-writer W1 matrix for one metric and scope. A cell is
/// `None` when either writer has no defined values.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistanceMatrix {
    pub metric: Metric,
    pub scope: Scope,
    pub values: Vec<Vec<Option<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestRow {
    pub writer_a: String,
    pub writer_b: String,
    pub metric: Metric,
    pub scope: Scope,
    pub n_a: usize,
    pub n_b: usize,
    pub result: Option<WelchResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub writers: Vec<String>,
    pub summaries: Vec<SummaryRow>,
    pub distances: Vec<DistanceMatrix>,
    pub tests: Vec<TestRow>,
}

/// Groups defined metric values into samples per writer, scope and metric.
pub fn score_samples(records: &[MetricsRecord], writers: &[String]) -> Vec<ScoreSample> {
    let mut values: BTreeMap<(&str, Scope, Metric), Vec<f64>> = BTreeMap::new();
    for r in records {
        for metric in Metric::ALL {
            if let Some(v) = r.value(metric) {
                values.entry((r.writer.as_str(), r.scope, metric)).or_default().push(v);
            }
        }
    }
    let mut out = Vec::new();
    for scope in Scope::ALL {
        for metric in Metric::ALL {
            for w in writers {
                out.push(ScoreSample {
                    writer: w.clone(),
                    metric,
                    scope,
                    values: values.remove(&(w.as_str(), scope, metric)).unwrap_or_default(),
                });
            }
        }
    }
    out
}

/// Summaries plus pairwise W1 distances and Welch tests for every metric and
/// scope.
///
/// Writers follow `order` when given, otherwise lexicographic order. A writer
/// without any records is dropped with a warning.
pub fn compare_corpora(
    records: &[MetricsRecord],
    order: Option<&[String]>,
) -> Result<ComparisonReport, StatsError> {
    let present: std::collections::BTreeSet<&str> =
        records.iter().map(|r| r.writer.as_str()).collect();
    let writers: Vec<String> = match order {
        Some(order) => order
            .iter()
            .filter(|w| {
                let keep = present.contains(w.as_str());
                if !keep {
                    log::warn!("writer {w:?} has no retained networks and is excluded");
                }
                keep
            })
            .cloned()
            .collect(),
        None => present.iter().map(|w| w.to_string()).collect(),
    };
    if writers.len() < 2 {
        return Err(StatsError::TooFewWriters(writers.len()));
    }

    let samples = score_samples(records, &writers);
    let k = writers.len();
    let mut report = ComparisonReport {
        writers: writers.clone(),
        summaries: Vec::new(),
        distances: Vec::new(),
        tests: Vec::new(),
    };
    for group in samples.chunks(k) {
        let (metric, scope) = (group[0].metric, group[0].scope);
        for s in group {
            report.summaries.push(SummaryRow {
                writer: s.writer.clone(),
                metric,
                scope,
                summary: summarize(&s.values),
            });
        }
        let mut values = vec![vec![None; k]; k];
        for i in 0..k {
            for j in i..k {
                let d = wasserstein(&group[i].values, &group[j].values).ok();
                values[i][j] = d;
                values[j][i] = d;
            }
        }
        report.distances.push(DistanceMatrix { metric, scope, values });
        for i in 0..k {
            for j in i + 1..k {
                report.tests.push(TestRow {
                    writer_a: group[i].writer.clone(),
                    writer_b: group[j].writer.clone(),
                    metric,
                    scope,
                    n_a: group[i].n(),
                    n_b: group[j].n(),
                    result: welch_t_test(&group[i].values, &group[j].values).ok(),
                });
            }
        }
    }
    Ok(report)
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_summary_csv<W: Write>(out: W, report: &ComparisonReport) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["writer", "metric", "scope", "n", "mean", "std"])?;
    for row in &report.summaries {
        w.write_record([
            row.writer.clone(),
            row.metric.as_str().into(),
            row.scope.as_str().into(),
            row.summary.n.to_string(),
            cell(row.summary.mean),
            cell(row.summary.std),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Raw p-values, unclamped.
pub fn write_ttest_csv<W: Write>(out: W, report: &ComparisonReport) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["writer_a", "writer_b", "metric", "scope", "t", "df", "p"])?;
    for row in &report.tests {
        let r = row.result;
        w.write_record([
            row.writer_a.clone(),
            row.writer_b.clone(),
            row.metric.as_str().into(),
            row.scope.as_str().into(),
            cell(r.map(|r| r.t)),
            cell(r.map(|r| r.df)),
            cell(r.map(|r| r.p)),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_distance_csv<W: Write>(
    out: W,
    writers: &[String],
    matrix: &DistanceMatrix,
) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(std::iter::once("writer").chain(writers.iter().map(String::as_str)))?;
    for (name, row) in writers.iter().zip(&matrix.values) {
        w.write_record(std::iter::once(name.clone()).chain(row.iter().map(|&v| cell(v))))?;
    }
    w.flush()?;
    Ok(())
}

pub fn distance_file_name(matrix: &DistanceMatrix) -> String {
    format!("wasserstein_{}_{}.csv", matrix.scope.as_str(), matrix.metric.as_str())
}

/// Writes `summary.csv`, `ttests.csv` and one `wasserstein_<scope>_<metric>.csv`
/// per metric and scope into `dir`.
pub fn write_report(dir: &Path, report: &ComparisonReport) -> io::Result<Vec<std::path::PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut emit = |name: String, f: &dyn Fn(&mut Vec<u8>) -> csv::Result<()>| -> io::Result<()> {
        let mut buf = Vec::new();
        f(&mut buf).map_err(io::Error::other)?;
        let path = dir.join(name);
        fs::write(&path, buf)?;
        written.push(path);
        Ok(())
    };
    emit("summary.csv".into(), &|b| write_summary_csv(b, report))?;
    emit("ttests.csv".into(), &|b| write_ttest_csv(b, report))?;
    for m in &report.distances {
        emit(distance_file_name(m), &|b| write_distance_csv(b, &report.writers, m))?;
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn summary_examples() {
        assert_eq!(
            summarize(&[1.0, 1.0, 1.0]),
            Summary { n: 3, mean: Some(1.0), std: Some(0.0) }
        );
        let s = summarize(&[0.0, 2.0]);
        assert_eq!(s.mean, Some(1.0));
        assert!((s.std.unwrap() - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(summarize(&[]), Summary { n: 0, mean: None, std: None });
        assert_eq!(summarize(&[4.0]).std, None);
    }

    #[test]
    fn wasserstein_examples() {
        assert_eq!(wasserstein(&[0.3, 0.1, 0.2], &[0.1, 0.2, 0.3]), Ok(0.0));
        assert_eq!(wasserstein(&[0.0], &[3.0]), Ok(3.0));
        assert_eq!(wasserstein(&[0.0, 2.0], &[1.0, 3.0]), Ok(1.0));
        assert_eq!(wasserstein(&[], &[1.0]), Err(StatsError::EmptySample));
        assert_eq!(wasserstein(&[f64::NAN], &[1.0]), Err(StatsError::NonFinite));
    }

    #[test]
    fn welch_examples() {
        let r = welch_t_test(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!((r.t, r.p), (0.0, 1.0));

        let r = welch_t_test(&[1.0, 2.0, 3.0, 4.0, 5.0], &[2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        assert!((r.t + 1.0).abs() < 1e-12);
        assert!((r.df - 8.0).abs() < 1e-12);
        assert!((r.p - 0.3466).abs() < 1e-4);

        assert_eq!(welch_t_test(&[1.0], &[1.0, 2.0]), Err(StatsError::InsufficientSample(1)));
    }

    #[test]
    fn welch_degenerate_variances() {
        let r = welch_t_test(&[1.0, 1.0], &[1.0, 1.0, 1.0]).unwrap();
        assert_eq!((r.t, r.df, r.p), (0.0, 3.0, 1.0));
        let r = welch_t_test(&[1.0, 1.0], &[2.0, 2.0]).unwrap();
        assert_eq!((r.t, r.p), (f64::NEG_INFINITY, 0.0));
        // one constant sample: df collapses to the other's n - 1
        let r = welch_t_test(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert!((r.df - 3.0).abs() < 1e-12);
    }

    fn record(writer: &str, density: f64, assort: Option<f64>) -> MetricsRecord {
        MetricsRecord {
            story_id: format!("{writer}-{density}"),
            writer: writer.into(),
            scope: Scope::Original,
            node_count: 10,
            edge_count: 10,
            density: Some(density),
            avg_edge_weight: Some(0.5),
            avg_clustering: Some(density / 2.0),
            assortativity: assort,
        }
    }

    #[test]
    fn compare_two_writers() {
        let records = vec![
            record("b", 0.3, Some(0.1)),
            record("a", 0.2, None),
            record("b", 0.4, Some(0.2)),
            record("a", 0.25, Some(-0.1)),
        ];
        let report = compare_corpora(&records, None).unwrap();
        assert_eq!(report.writers, vec!["a", "b"]);
        assert_eq!(report.distances.len(), 12);
        assert_eq!(report.tests.len(), 12);
        let density = report
            .tests
            .iter()
            .find(|t| t.metric == Metric::Density && t.scope == Scope::Original)
            .unwrap();
        assert!(density.result.is_some());
        let assort = report
            .tests
            .iter()
            .find(|t| t.metric == Metric::Assortativity && t.scope == Scope::Original)
            .unwrap();
        assert_eq!((assort.n_a, assort.n_b), (1, 2));
        assert!(assort.result.is_none());
        for m in &report.distances {
            for i in 0..2 {
                if let Some(d) = m.values[i][i] {
                    assert_eq!(d, 0.0);
                }
            }
            assert_eq!(m.values[0][1], m.values[1][0]);
        }
    }

    #[test]
    fn compare_follows_explicit_order_and_drops_absent_writers() {
        let records: Vec<_> = ["x", "y", "z"]
            .iter()
            .flat_map(|w| [record(w, 0.2, None), record(w, 0.3, None)])
            .collect();
        let order: Vec<String> = ["z", "ghost", "x", "y"].iter().map(|s| s.to_string()).collect();
        let report = compare_corpora(&records, Some(&order)).unwrap();
        assert_eq!(report.writers, vec!["z", "x", "y"]);
        assert_eq!(report.tests.len(), 12 * 3);
        assert_eq!(
            compare_corpora(&records[..2], None),
            Err(StatsError::TooFewWriters(1))
        );
    }

    #[test]
    fn display_floor() {
        assert_eq!(display_p(1e-301), 0.0);
        assert_eq!(display_p(0.05), 0.05);
    }

    fn sample() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-100.0f64..100.0, 2..40)
    }

    proptest! {
        #[test]
        fn wasserstein_is_a_metric(a in sample(), b in sample(), c in sample(), shift in -50.0f64..50.0) {
            let ab = wasserstein(&a, &b).unwrap();
            prop_assert!(ab >= 0.0);
            prop_assert!((ab - wasserstein(&b, &a).unwrap()).abs() <= 1e-9 * (1.0 + ab));
            prop_assert_eq!(wasserstein(&a, &a).unwrap(), 0.0);
            let ac = wasserstein(&a, &c).unwrap();
            let cb = wasserstein(&c, &b).unwrap();
            prop_assert!(ab <= ac + cb + 1e-9);
            let sa: Vec<f64> = a.iter().map(|x| x + shift).collect();
            let sb: Vec<f64> = b.iter().map(|x| x + shift).collect();
            prop_assert!((wasserstein(&sa, &sb).unwrap() - ab).abs() <= 1e-9 * (1.0 + ab));
        }

        #[test]
        fn welch_antisymmetry_and_affine_invariance(a in sample(), b in sample(), scale in 0.01f64..100.0, offset in -100.0f64..100.0) {
            prop_assume!(sample_variance(&a).unwrap() > 1e-6 || sample_variance(&b).unwrap() > 1e-6);
            let ab = welch_t_test(&a, &b).unwrap();
            let ba = welch_t_test(&b, &a).unwrap();
            prop_assert!((ab.t + ba.t).abs() <= 1e-12 * (1.0 + ab.t.abs()));
            prop_assert!((ab.df - ba.df).abs() <= 1e-9 * ab.df);
            prop_assert!((ab.p - ba.p).abs() <= 1e-12);
            prop_assert!((0.0..=1.0).contains(&ab.p));
            let fa: Vec<f64> = a.iter().map(|x| scale * x + offset).collect();
            let fb: Vec<f64> = b.iter().map(|x| scale * x + offset).collect();
            let f = welch_t_test(&fa, &fb).unwrap();
            prop_assert!((f.p - ab.p).abs() <= 1e-9);
        }

        #[test]
        fn incomplete_beta_reflection(x in 0.0f64..=1.0, a in 0.05f64..300.0, b in 0.05f64..300.0) {
            let lhs = special::regularized_incomplete_beta(x, a, b)
                + special::regularized_incomplete_beta(1.0 - x, b, a);
            prop_assert!((lhs - 1.0).abs() <= 1e-10, "sum = {}", lhs);
        }
    }
}

//! Overlap metrics, summary statistics, rank tests and case reports.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::volume::BinaryMask;

/// Sample sizes up to this use exact enumeration; larger ones the normal
/// approximation.
pub const EXACT_LIMIT: usize = 12;

/// Significance level used to flag test results.
pub const ALPHA: f64 = 0.05;

/// Dice similarity coefficient `2|M ∩ S| / (|M| + |S|)` in [0, 1].
pub fn dice(m: &BinaryMask, s: &BinaryMask) -> Result<f64> {
    if m.geometry() != s.geometry() {
        return Err(Error::Geometry(
            "masks are defined on different grids".into(),
        ));
    }
    let inter = m
        .bits()
        .iter()
        .zip(s.bits())
        .filter(|(a, b)| **a && **b)
        .count();
    dice_from_counts(m.count(), s.count(), inter)
}

pub fn dice_from_counts(m: usize, s: usize, intersection: usize) -> Result<f64> {
    if m + s == 0 {
        return Err(Error::UndefinedDice);
    }
    if intersection > m.min(s) {
        return Err(Error::InvalidParameter(format!(
            "intersection {intersection} exceeds a mask size ({m}, {s})"
        )));
    }
    Ok(2.0 * intersection as f64 / (m + s) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub n: usize,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    /// Sample standard deviation (divisor n - 1).
    pub stddev: f64,
}

pub fn summarize(values: &[f64]) -> Result<SummaryRow> {
    let n = values.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!(
            "a summary needs at least 2 values, got {n}"
        )));
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    Ok(SummaryRow {
        n,
        min: values.iter().copied().fold(f64::INFINITY, f64::min),
        max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        mean,
        stddev: (ss / (n - 1) as f64).sqrt(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PMethod {
    Exact,
    Normal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    /// Two-sided.
    pub p_value: f64,
    /// Effective sample size (non-zero differences, or total observations).
    pub n: usize,
    pub method: PMethod,
}

impl TestResult {
    pub fn significant(&self) -> bool {
        self.p_value < ALPHA
    }
}

/// Ranks 1..=n of `values` with ties given their average rank, doubled so
/// they stay integral.
fn doubled_midranks(values: &[f64]) -> Vec<u64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0u64; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // Average of ranks i+1..=j+1, doubled.
        let r2 = (i + 1 + j + 1) as u64;
        for &o in &order[i..=j] {
            ranks[o] = r2;
        }
        i = j + 1;
    }
    ranks
}

/// Sum of `t^3 - t` over tie groups.
fn tie_term(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mut total = 0.0;
    let mut i = 0;
    while i < v.len() {
        let mut j = i;
        while j + 1 < v.len() && v[j + 1] == v[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        total += t * t * t - t;
        i = j + 1;
    }
    total
}

fn normal_two_sided(deviation: f64, sd: f64) -> f64 {
    if !(sd > 0.0) {
        return 1.0;
    }
    let z = ((deviation.abs() - 0.5).max(0.0)) / sd;
    let std = Normal::standard();
    (2.0 * (1.0 - std.cdf(z))).min(1.0)
}

/// Paired signed-rank test. The statistic is W+, the rank sum of the
/// positive differences `a - b`.
pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64]) -> Result<TestResult> {
    if a.len() != b.len() {
        return Err(Error::InvalidParameter(format!(
            "paired samples differ in length ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    let diffs: Vec<f64> = a
        .iter()
        .zip(b)
        .map(|(x, y)| x - y)
        .filter(|d| *d != 0.0)
        .collect();
    let n = diffs.len();
    if n == 0 {
        return Err(Error::DegenerateTest(
            "all paired differences are zero".into(),
        ));
    }
    if n < 5 {
        return Err(Error::InsufficientData(format!(
            "need at least 5 non-zero differences, got {n}"
        )));
    }
    let abs: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let ranks = doubled_midranks(&abs);
    let obs2: u64 = ranks
        .iter()
        .zip(&diffs)
        .filter(|(_, d)| **d > 0.0)
        .map(|(r, _)| r)
        .sum();
    let total2: u64 = ranks.iter().sum();
    let statistic = obs2 as f64 / 2.0;

    if n <= EXACT_LIMIT {
        // Compare doubled deviations from the mean, doubled again so the
        // centre total2 / 2 stays integral.
        let centre = total2 as i64;
        let obs_dev = (2 * obs2 as i64 - centre).abs();
        let mut hits = 0u64;
        for signs in 0u32..(1 << n) {
            let w2: u64 = (0..n)
                .filter(|&i| signs >> i & 1 == 1)
                .map(|i| ranks[i])
                .sum();
            if (2 * w2 as i64 - centre).abs() >= obs_dev {
                hits += 1;
            }
        }
        return Ok(TestResult {
            statistic,
            p_value: hits as f64 / (1u64 << n) as f64,
            n,
            method: PMethod::Exact,
        });
    }
    let nf = n as f64;
    let mean = nf * (nf + 1.0) / 4.0;
    let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term(&abs) / 48.0;
    Ok(TestResult {
        statistic,
        p_value: normal_two_sided(statistic - mean, var.sqrt()),
        n,
        method: PMethod::Normal,
    })
}

/// Two-sample rank-sum test. The statistic is `min(U_a, U_b)`.
pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> Result<TestResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InsufficientData(
            "both samples must be non-empty".into(),
        ));
    }
    let (na, nb) = (a.len(), b.len());
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let ranks = doubled_midranks(&pooled);
    let n = na + nb;
    // Doubled U_a = doubled rank sum of a minus na (na + 1).
    let u_a2 = |rank_sum2: u64| rank_sum2 as i64 - (na * (na + 1)) as i64;
    let obs_u2 = u_a2(ranks[..na].iter().sum());
    let centre2 = (na * nb) as i64; // doubled mean of U
    let u_a = obs_u2 as f64 / 2.0;
    let statistic = u_a.min((na * nb) as f64 - u_a);

    if n <= EXACT_LIMIT {
        let obs_dev = (obs_u2 - centre2).abs();
        let (mut hits, mut total) = (0u64, 0u64);
        for subset in 0u32..(1 << n) {
            if subset.count_ones() as usize != na {
                continue;
            }
            let s2: u64 = (0..n)
                .filter(|&i| subset >> i & 1 == 1)
                .map(|i| ranks[i])
                .sum();
            total += 1;
            if (u_a2(s2) - centre2).abs() >= obs_dev {
                hits += 1;
            }
        }
        return Ok(TestResult {
            statistic,
            p_value: hits as f64 / total as f64,
            n,
            method: PMethod::Exact,
        });
    }
    let (naf, nbf, nf) = (na as f64, nb as f64, n as f64);
    let var = naf * nbf / 12.0 * ((nf + 1.0) - tie_term(&pooled) / (nf * (nf - 1.0)));
    Ok(TestResult {
        statistic,
        p_value: normal_two_sided(u_a - naf * nbf / 2.0, var.sqrt()),
        n,
        method: PMethod::Normal,
    })
}

/// One evaluated case: a manual reference against an automatic result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseRow {
    pub case_id: String,
    pub manual_volume_mm3: f64,
    pub automatic_volume_mm3: f64,
    pub manual_voxels: u64,
    pub automatic_voxels: u64,
    pub dsc_percent: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subgroup: Option<String>,
}

impl CaseRow {
    pub fn from_masks(
        case_id: impl Into<String>,
        manual: &BinaryMask,
        automatic: &BinaryMask,
    ) -> Result<Self> {
        let d = dice(manual, automatic)?;
        Ok(CaseRow {
            case_id: case_id.into(),
            manual_volume_mm3: manual.physical_volume_mm3(),
            automatic_volume_mm3: automatic.physical_volume_mm3(),
            manual_voxels: manual.count() as u64,
            automatic_voxels: automatic.count() as u64,
            dsc_percent: 100.0 * d,
            subgroup: None,
        })
    }

    pub fn with_subgroup(mut self, name: impl Into<String>) -> Self {
        self.subgroup = Some(name.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub name: String,
    pub n: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dsc: Option<SummaryRow>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub manual_volume: Option<SummaryRow>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub automatic_volume: Option<SummaryRow>,
}

/// A test that was either run or skipped for a stated reason.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub name: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub result: Option<TestResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub significant: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omitted: Option<String>,
}

impl TestOutcome {
    fn from(name: &str, r: Result<TestResult>) -> Self {
        match r {
            Ok(t) => TestOutcome {
                name: name.into(),
                result: Some(t),
                significant: Some(t.significant()),
                omitted: None,
            },
            Err(e) => TestOutcome::omitted(name, e.to_string()),
        }
    }

    fn omitted(name: &str, reason: impl Into<String>) -> Self {
        TestOutcome {
            name: name.into(),
            result: None,
            significant: None,
            omitted: Some(reason.into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub alpha: f64,
    pub cases: Vec<CaseRow>,
    pub overall: GroupSummary,
    pub subgroups: Vec<GroupSummary>,
    /// Paired test of manual against automatic volumes.
    pub volume_test: TestOutcome,
    /// Rank-sum test of DSC between the first two subgroups.
    pub subgroup_test: TestOutcome,
}

fn group(name: &str, rows: &[&CaseRow]) -> GroupSummary {
    let col = |f: fn(&CaseRow) -> f64| -> Option<SummaryRow> {
        summarize(&rows.iter().map(|r| f(r)).collect::<Vec<_>>()).ok()
    };
    GroupSummary {
        name: name.into(),
        n: rows.len(),
        dsc: col(|r| r.dsc_percent),
        manual_volume: col(|r| r.manual_volume_mm3),
        automatic_volume: col(|r| r.automatic_volume_mm3),
    }
}

/// Summaries and tests over a set of cases. Subgroups come from the rows'
/// `subgroup` tags in order of first appearance.
pub fn build_report(cases: &[CaseRow]) -> Result<EvalReport> {
    if cases.is_empty() {
        return Err(Error::InsufficientData(
            "a report needs at least one case".into(),
        ));
    }
    for c in cases {
        if !(0.0..=100.0).contains(&c.dsc_percent) {
            return Err(Error::InvalidParameter(format!(
                "case {} has DSC {} outside [0, 100]",
                c.case_id, c.dsc_percent
            )));
        }
    }
    let all: Vec<&CaseRow> = cases.iter().collect();
    let mut names: Vec<&str> = Vec::new();
    for c in cases {
        if let Some(s) = c.subgroup.as_deref() {
            if !names.contains(&s) {
                names.push(s);
            }
        }
    }
    let members = |name: &str| -> Vec<&CaseRow> {
        cases
            .iter()
            .filter(|c| c.subgroup.as_deref() == Some(name))
            .collect()
    };
    let subgroups: Vec<GroupSummary> = names.iter().map(|n| group(n, &members(n))).collect();

    let manual: Vec<f64> = cases.iter().map(|c| c.manual_volume_mm3).collect();
    let automatic: Vec<f64> = cases.iter().map(|c| c.automatic_volume_mm3).collect();
    let volume_test = TestOutcome::from(
        "wilcoxon signed-rank, manual vs automatic volume",
        wilcoxon_signed_rank(&manual, &automatic),
    );

    let mw_name = "mann-whitney u, dsc between subgroups";
    let subgroup_test = match names.len() {
        0 | 1 => TestOutcome::omitted(
            mw_name,
            format!("{} subgroup(s); two are needed", names.len()),
        ),
        k => {
            let dsc = |n: &str| members(n).iter().map(|c| c.dsc_percent).collect::<Vec<_>>();
            let mut t = TestOutcome::from(mw_name, mann_whitney_u(&dsc(names[0]), &dsc(names[1])));
            t.name = format!("{mw_name} ({} vs {})", names[0], names[1]);
            if k > 2 && t.omitted.is_none() {
                t.name.push_str(", remaining subgroups not tested");
            }
            t
        }
    };

    Ok(EvalReport {
        alpha: ALPHA,
        cases: cases.to_vec(),
        overall: group("all", &all),
        subgroups,
        volume_test,
        subgroup_test,
    })
}

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    /// Aligned plain-text rendering with two decimals.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let header = [
            "case",
            "manual mm3",
            "auto mm3",
            "manual vox",
            "auto vox",
            "DSC %",
            "group",
        ];
        let rows: Vec<[String; 7]> = self
            .cases
            .iter()
            .map(|c| {
                [
                    c.case_id.clone(),
                    format!("{:.2}", c.manual_volume_mm3),
                    format!("{:.2}", c.automatic_volume_mm3),
                    c.manual_voxels.to_string(),
                    c.automatic_voxels.to_string(),
                    format!("{:.2}", c.dsc_percent),
                    c.subgroup.clone().unwrap_or_default(),
                ]
            })
            .collect();
        let mut width = header.map(str::len);
        for r in &rows {
            for (w, cell) in width.iter_mut().zip(r) {
                *w = (*w).max(cell.chars().count());
            }
        }
        let line = |cells: &[String]| -> String {
            let mut l = String::new();
            for (i, c) in cells.iter().enumerate() {
                if i == 0 || i == 6 {
                    let _ = write!(l, "{:<w$}  ", c, w = width[i]);
                } else {
                    let _ = write!(l, "{:>w$}  ", c, w = width[i]);
                }
            }
            l.trim_end().to_string()
        };
        let _ = writeln!(s, "{}", line(&header.map(String::from)));
        for r in &rows {
            let _ = writeln!(s, "{}", line(r));
        }
        s.push('\n');
        let _ = writeln!(
            s,
            "{:<16}{:>4}  {:>8}  {:>8}  {:>8}  {:>8}",
            "summary (DSC %)", "n", "min", "max", "mean", "sd"
        );
        for g in std::iter::once(&self.overall).chain(&self.subgroups) {
            match g.dsc {
                Some(d) => {
                    let _ = writeln!(
                        s,
                        "{:<16}{:>4}  {:>8.2}  {:>8.2}  {:>8.2}  {:>8.2}",
                        g.name, g.n, d.min, d.max, d.mean, d.stddev
                    );
                }
                None => {
                    let _ = writeln!(s, "{:<16}{:>4}  (fewer than 2 cases)", g.name, g.n);
                }
            }
        }
        s.push('\n');
        for t in [&self.volume_test, &self.subgroup_test] {
            match (&t.result, &t.omitted) {
                (Some(r), _) => {
                    let verdict = if r.significant() {
                        "significant"
                    } else {
                        "not significant"
                    };
                    let _ = writeln!(
                        s,
                        "{}: statistic {:.2}, p = {:.4} ({:?}, n = {}), {} at alpha {}",
                        t.name, r.statistic, r.p_value, r.method, r.n, verdict, self.alpha
                    );
                }
                (None, Some(why)) => {
                    let _ = writeln!(s, "{}: omitted, {}", t.name, why);
                }
                (None, None) => {}
            }
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::Geometry;

    fn mask(bits: &[u8]) -> BinaryMask {
        let g = Geometry::new([bits.len(), 1, 1], [1.0; 3], [0.0; 3]).unwrap();
        BinaryMask::new(g, bits.iter().map(|&b| b == 1).collect()).unwrap()
    }

    #[test]
    fn dice_cases() {
        let a = mask(&[1, 1, 0, 0]);
        assert_eq!(dice(&a, &a).unwrap(), 1.0);
        assert_eq!(dice(&a, &mask(&[0, 0, 1, 1])).unwrap(), 0.0);
        assert_eq!(dice(&a, &mask(&[0, 1, 1, 0])).unwrap(), 0.5);
        assert!(matches!(
            dice(&mask(&[0, 0]), &mask(&[0, 0])),
            Err(Error::UndefinedDice)
        ));
        assert!(matches!(
            dice(&a, &mask(&[1, 1, 0])),
            Err(Error::Geometry(_))
        ));
        let d = dice_from_counts(55_246, 70_208, 51_424).unwrap();
        assert!((d - 0.8198).abs() < 1e-4);
    }

    #[test]
    fn summary_basics() {
        let s = summarize(&[3.0, 3.0, 3.0]).unwrap();
        assert_eq!((s.min, s.max, s.mean, s.stddev), (3.0, 3.0, 3.0, 0.0));
        let s = summarize(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert!((s.stddev - (5.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert!(summarize(&[1.0]).is_err());
    }

    #[test]
    fn wilcoxon_small() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0];
        let b = [0.0; 5];
        let t = wilcoxon_signed_rank(&a, &b).unwrap();
        assert_eq!(t.statistic, 15.0);
        assert_eq!(t.p_value, 0.0625);
        assert_eq!(t.method, PMethod::Exact);
        assert!(matches!(
            wilcoxon_signed_rank(&a, &a),
            Err(Error::DegenerateTest(_))
        ));
        assert!(wilcoxon_signed_rank(&a[..4], &b[..4]).is_err());
        assert!(wilcoxon_signed_rank(&a, &b[..4]).is_err());
    }

    #[test]
    fn mann_whitney_small() {
        let t = mann_whitney_u(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
        assert_eq!(t.statistic, 0.0);
        assert!((t.p_value - 0.1).abs() < 1e-12);
        let t = mann_whitney_u(&[1.0, 2.0, 2.0], &[2.0, 1.0, 2.0]).unwrap();
        assert!((t.p_value - 1.0).abs() < 1e-12);
        assert!(mann_whitney_u(&[], &[1.0]).is_err());
    }

    #[test]
    fn normal_approximation_is_close_to_exact() {
        // At the switch-over size the two methods should broadly agree.
        let a: Vec<f64> = (0..13).map(|i| i as f64 * 1.3 + 0.2).collect();
        let b: Vec<f64> = (0..13).map(|i| i as f64).collect();
        let t = wilcoxon_signed_rank(&a, &b).unwrap();
        assert_eq!(t.method, PMethod::Normal);
        assert!(t.p_value < 0.01);
        let t = mann_whitney_u(&a, &b).unwrap();
        assert_eq!(t.method, PMethod::Normal);
        assert!(t.p_value > 0.05);
    }

    #[test]
    fn single_group_omits_rank_sum() {
        let rows: Vec<CaseRow> = (0..6)
            .map(|i| CaseRow {
                case_id: format!("c{i}"),
                manual_volume_mm3: 100.0 + i as f64,
                automatic_volume_mm3: 90.0 + 3.0 * i as f64,
                manual_voxels: 100,
                automatic_voxels: 90,
                dsc_percent: 80.0 + i as f64,
                subgroup: Some("only".into()),
            })
            .collect();
        let r = build_report(&rows).unwrap();
        assert!(r.subgroup_test.result.is_none());
        assert!(r.subgroup_test.omitted.is_some());
        assert!(r.volume_test.result.is_some());
        let text = r.to_text();
        assert!(text.contains("omitted"));
        let back: EvalReport = serde_json::from_str(&r.to_json().unwrap()).unwrap();
        assert_eq!(back, r);
    }
}

//! Pearson, Spearman and Kendall correlation with two-sided p-values,
//! leave-one-out sweeps and simple least squares.
//!
//! p-values: Student-t with `n - 2` degrees of freedom for Pearson's r and
//! Spearman's rho; normal approximation with tie-corrected variance for
//! Kendall's tau-b.

use std::cmp::Ordering;
use std::collections::HashSet;

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::error::{Error, Result};
use crate::metrics::ScoreTable;
use crate::typology::{PairFeatures, FEATURE_COLUMNS};

pub const DEFAULT_ALPHA: f64 = 0.05;

/// Description of the tests, written into report headers.
pub const METHOD_NOTE: &str =
    "two-sided; p_r,p_rho: student-t df=n-2; p_tau: normal approx, tie-corrected variance; tau variant: tau-b";

#[derive(Debug, Clone, PartialEq)]
pub struct PairedSample {
    pub labels: Vec<String>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl PairedSample {
    pub fn new(labels: Vec<String>, x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if labels.len() != x.len() || x.len() != y.len() {
            return Err(Error::Invalid(format!(
                "sample lengths differ: {} labels, {} x, {} y",
                labels.len(),
                x.len(),
                y.len()
            )));
        }
        if x.len() < 3 {
            return Err(Error::Invalid(format!("need at least 3 observations, got {}", x.len())));
        }
        let mut seen = HashSet::new();
        if let Some(dup) = labels.iter().find(|l| !seen.insert(l.as_str())) {
            return Err(Error::Duplicate(format!("label `{dup}`")));
        }
        if x.iter().chain(&y).any(|v| !v.is_finite()) {
            return Err(Error::Invalid("sample contains a non-finite value".into()));
        }
        Ok(PairedSample { labels, x, y })
    }

    /// Unlabelled sample; labels are the 1-based positions.
    pub fn from_xy(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        let labels = (1..=x.len()).map(|i| i.to_string()).collect();
        Self::new(labels, x, y)
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn swapped(&self) -> PairedSample {
        PairedSample {
            labels: self.labels.clone(),
            x: self.y.clone(),
            y: self.x.clone(),
        }
    }

    pub fn without(&self, index: usize) -> Result<PairedSample> {
        let keep = |v: &Vec<f64>| {
            v.iter()
                .enumerate()
                .filter(|&(i, _)| i != index)
                .map(|(_, &x)| x)
                .collect()
        };
        let labels = self
            .labels
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != index)
            .map(|(_, l)| l.clone())
            .collect();
        PairedSample::new(labels, keep(&self.x), keep(&self.y))
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn all_equal(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[0] == w[1])
}

/// Centered second moments `(sxx, syy, sxy)`.
fn moments(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let mx = mean(x);
    let my = mean(y);
    x.iter().zip(y).fold((0.0, 0.0, 0.0), |(sxx, syy, sxy), (&a, &b)| {
        let dx = a - mx;
        let dy = b - my;
        (sxx + dx * dx, syy + dy * dy, sxy + dx * dy)
    })
}

fn t_test_p(r: f64, n: usize) -> f64 {
    let df = (n - 2) as f64;
    if r.abs() >= 1.0 {
        return 0.0;
    }
    let t = r * (df / (1.0 - r * r)).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).expect("df > 0");
    (2.0 * dist.cdf(-t.abs())).min(1.0)
}

fn normal_p(z: f64) -> f64 {
    let dist = Normal::new(0.0, 1.0).expect("standard normal");
    (2.0 * dist.cdf(-z.abs())).min(1.0)
}

fn pearson_raw(x: &[f64], y: &[f64]) -> Result<f64> {
    if all_equal(x) || all_equal(y) {
        return Err(Error::Undefined("zero variance".into()));
    }
    let (sxx, syy, sxy) = moments(x, y);
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Product-moment r and its two-sided p-value.
pub fn pearson(sample: &PairedSample) -> Result<(f64, f64)> {
    let r = pearson_raw(&sample.x, &sample.y)?;
    Ok((r, t_test_p(r, sample.len())))
}

/// 1-based ranks, ties sharing their average rank.
pub fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Pearson correlation of average ranks.
pub fn spearman(sample: &PairedSample) -> Result<(f64, f64)> {
    if all_equal(&sample.x) || all_equal(&sample.y) {
        return Err(Error::Undefined("all values tied".into()));
    }
    let rho = pearson_raw(&average_ranks(&sample.x), &average_ranks(&sample.y))?;
    Ok((rho, t_test_p(rho, sample.len())))
}

/// Sums `t(t-1)/2`, `t(t-1)(2t+5)`, `t(t-1)` and `t(t-1)(t-2)` over runs of
/// equal values in a sorted slice.
fn tie_sums(sorted: &[f64]) -> (i128, i128, i128, i128) {
    let mut pairs = 0;
    let mut v0 = 0;
    let mut v1 = 0;
    let mut v2 = 0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i + 1;
        while j < sorted.len() && sorted[j] == sorted[i] {
            j += 1;
        }
        let t = (j - i) as i128;
        pairs += t * (t - 1) / 2;
        v0 += t * (t - 1) * (2 * t + 5);
        v1 += t * (t - 1);
        v2 += t * (t - 1) * (t - 2);
        i = j;
    }
    (pairs, v0, v1, v2)
}

/// Merge sort that returns the number of inversions.
fn sort_count_swaps(v: &mut [f64], buf: &mut [f64]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = {
        let (l, r) = v.split_at_mut(mid);
        let (bl, br) = buf.split_at_mut(mid);
        sort_count_swaps(l, bl) + sort_count_swaps(r, br)
    };
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if v[j] < v[i] {
            buf[k] = v[j];
            swaps += (mid - i) as u64;
            j += 1;
        } else {
            buf[k] = v[i];
            i += 1;
        }
        k += 1;
    }
    buf[k..k + mid - i].copy_from_slice(&v[i..mid]);
    let k = k + mid - i;
    buf[k..k + n - j].copy_from_slice(&v[j..n]);
    v.copy_from_slice(&buf[..n]);
    swaps
}

/// Kendall's tau-b via Knight's O(n log n) algorithm, with the
/// concordance statistic `S = C - D` and its tie-corrected variance.
pub fn kendall(sample: &PairedSample) -> Result<(f64, f64)> {
    let n = sample.len();
    let mut pairs: Vec<(f64, f64)> = sample.x.iter().copied().zip(sample.y.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));

    let xs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let (x_ties, vx0, vx1, vx2) = tie_sums(&xs);
    let mut joint = 0i128;
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && pairs[j] == pairs[i] {
            j += 1;
        }
        let t = (j - i) as i128;
        joint += t * (t - 1) / 2;
        i = j;
    }

    let mut ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let mut buf = vec![0.0; n];
    let swaps = sort_count_swaps(&mut ys, &mut buf) as i128;
    let (y_ties, vy0, vy1, vy2) = tie_sums(&ys);

    let total = (n * (n - 1) / 2) as i128;
    if total == x_ties || total == y_ties {
        return Err(Error::Undefined("all values tied".into()));
    }
    let s = total - x_ties - y_ties + joint - 2 * swaps;
    let tau = (s as f64 / (((total - x_ties) as f64) * ((total - y_ties) as f64)).sqrt()).clamp(-1.0, 1.0);

    let nf = n as f64;
    let var = ((nf * (nf - 1.0) * (2.0 * nf + 5.0)) - vx0 as f64 - vy0 as f64) / 18.0
        + (vx1 as f64 * vy1 as f64) / (2.0 * nf * (nf - 1.0))
        + (vx2 as f64 * vy2 as f64) / (9.0 * nf * (nf - 1.0) * (nf - 2.0));
    let p = if var > 0.0 {
        normal_p(s as f64 / var.sqrt())
    } else {
        1.0
    };
    Ok((tau, p))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CorrelationResult {
    pub r: f64,
    pub rho: f64,
    pub tau: f64,
    pub p_r: f64,
    pub p_rho: f64,
    pub p_tau: f64,
    pub n: usize,
    pub significant_r: bool,
    pub significant_rho: bool,
    pub significant_tau: bool,
}

pub fn correlate(sample: &PairedSample, alpha: f64) -> Result<CorrelationResult> {
    let (r, p_r) = pearson(sample)?;
    let (rho, p_rho) = spearman(sample)?;
    let (tau, p_tau) = kendall(sample)?;
    Ok(CorrelationResult {
        r,
        rho,
        tau,
        p_r,
        p_rho,
        p_tau,
        n: sample.len(),
        significant_r: p_r < alpha,
        significant_rho: p_rho < alpha,
        significant_tau: p_tau < alpha,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LooRow {
    /// `None` for the full sample.
    pub left_out: Option<String>,
    pub result: CorrelationResult,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LooResult {
    pub rows: Vec<LooRow>,
}

/// Full-sample row first, then one row per observation removed, in label
/// order of the input.
pub fn leave_one_out(sample: &PairedSample, alpha: f64) -> Result<LooResult> {
    if sample.len() < 4 {
        return Err(Error::Invalid(format!(
            "leave-one-out needs at least 4 observations, got {}",
            sample.len()
        )));
    }
    let mut rows = vec![LooRow {
        left_out: None,
        result: correlate(sample, alpha)?,
    }];
    for (i, label) in sample.labels.iter().enumerate() {
        let reduced = sample.without(i)?;
        let result = correlate(&reduced, alpha).map_err(|e| Error::Undefined(format!("without {label}: {e}")))?;
        rows.push(LooRow {
            left_out: Some(label.clone()),
            result,
        });
    }
    Ok(LooResult { rows })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OlsFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

impl OlsFit {
    pub fn predict(&self, x: f64) -> f64 {
        self.intercept + self.slope * x
    }
}

/// Least-squares line `y = intercept + slope * x`; `r_squared` is
/// `1 - SSE / SST` (1 when y is constant and fitted exactly).
pub fn ols_fit(sample: &PairedSample) -> Result<OlsFit> {
    if all_equal(&sample.x) {
        return Err(Error::Undefined("zero variance in x".into()));
    }
    let (sxx, syy, sxy) = moments(&sample.x, &sample.y);
    let slope = sxy / sxx;
    let intercept = mean(&sample.y) - slope * mean(&sample.x);
    let fit = OlsFit {
        slope,
        intercept,
        r_squared: 1.0,
    };
    let sse: f64 = sample
        .x
        .iter()
        .zip(&sample.y)
        .map(|(&x, &y)| {
            let e = y - fit.predict(x);
            e * e
        })
        .sum();
    let r_squared = if syy == 0.0 {
        1.0
    } else {
        (1.0 - sse / syy).clamp(0.0, 1.0)
    };
    Ok(OlsFit { r_squared, ..fit })
}

/// One model's correlations between its scores and each pair feature.
/// Cells hold the error text when a correlation is undefined.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureCorrelations {
    pub model: String,
    pub n: usize,
    pub cells: Vec<(String, std::result::Result<CorrelationResult, String>)>,
}

pub fn correlate_features(
    features: &[PairFeatures],
    scores: &ScoreTable,
    model: &str,
    alpha: f64,
) -> Result<FeatureCorrelations> {
    let mut labels = Vec::new();
    let mut rows = Vec::new();
    let mut ys = Vec::new();
    for ((m, pair), &score) in &scores.entries {
        if m != model {
            continue;
        }
        let f = features
            .iter()
            .find(|f| &f.pair == pair)
            .ok_or_else(|| Error::Missing(format!("no features for {pair} (model {model})")))?;
        labels.push(pair.to_string());
        rows.push(f.values());
        ys.push(score);
    }
    if labels.is_empty() {
        return Err(Error::Missing(format!("no {} scores for model {model}", scores.metric)));
    }
    let n = labels.len();
    let cells = FEATURE_COLUMNS
        .iter()
        .enumerate()
        .map(|(k, name)| {
            let xs: Vec<f64> = rows.iter().map(|r| r[k]).collect();
            let res = PairedSample::new(labels.clone(), xs, ys.clone())
                .and_then(|s| correlate(&s, alpha))
                .map_err(|e| e.to_string());
            (name.to_string(), res)
        })
        .collect();
    Ok(FeatureCorrelations {
        model: model.to_string(),
        n,
        cells,
    })
}

/// Comparison helper for sorting labels numerically where possible.
pub fn label_order(a: &str, b: &str) -> Ordering {
    match (a.parse::<f64>(), b.parse::<f64>()) {
        (Ok(x), Ok(y)) => x.total_cmp(&y),
        _ => a.cmp(b),
    }
}

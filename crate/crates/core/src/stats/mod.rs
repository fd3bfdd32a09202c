//! Comparison of severity-quantification treatments: one-way ANOVA, Tukey
//! HSD, t intervals for the means, the pooled two-proportion z test and a
//! Kolmogorov–Smirnov normality check.

pub mod dist;
pub mod special;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
pub use dist::{f_cdf, f_sf, kolmogorov_sf, lilliefors_p, studentized_range_cdf, t_cdf, t_quantile};
pub use special::{erf, erfc, ln_gamma, norm_cdf, reg_inc_beta};

pub const DEFAULT_ALPHA: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnovaTable {
    pub df_between: usize,
    pub df_within: usize,
    pub ss_between: f64,
    pub ss_within: f64,
    pub ms_between: f64,
    pub ms_within: f64,
    pub f: f64,
    pub p: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TestKind {
    ZProp,
    Ks,
    TukeyPair,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub kind: TestKind,
    pub statistic: f64,
    pub p: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pair: Option<(String, String)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_diff: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub significant: Option<bool>,
    /// Set for normality tests whose reference distribution used the
    /// sample's own mean and standard deviation.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub parameters_estimated: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
    pub confidence: f64,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn check_groups(groups: &[Vec<f64>]) -> Result<()> {
    if groups.len() < 2 {
        return Err(Error::arg(format!("need at least 2 groups, got {}", groups.len())));
    }
    if let Some((i, g)) = groups.iter().enumerate().find(|(_, g)| g.len() < 2) {
        return Err(Error::arg(format!("group {i} has {} observations, need at least 2", g.len())));
    }
    if groups.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::arg("observations must be finite"));
    }
    Ok(())
}

pub fn one_way_anova(groups: &[Vec<f64>]) -> Result<AnovaTable> {
    check_groups(groups)?;
    let n: usize = groups.iter().map(Vec::len).sum();
    let grand = groups.iter().flatten().sum::<f64>() / n as f64;
    let mut ss_between = 0.0;
    let mut ss_within = 0.0;
    for g in groups {
        let m = mean(g);
        ss_between += g.len() as f64 * (m - grand) * (m - grand);
        ss_within += g.iter().map(|v| (v - m) * (v - m)).sum::<f64>();
    }
    if ss_within <= 0.0 {
        return Err(Error::Degenerate(
            "no variation within groups; F is undefined".into(),
        ));
    }
    let df_between = groups.len() - 1;
    let df_within = n - groups.len();
    let ms_between = ss_between / df_between as f64;
    let ms_within = ss_within / df_within as f64;
    let f = ms_between / ms_within;
    Ok(AnovaTable {
        df_between,
        df_within,
        ss_between,
        ss_within,
        ms_between,
        ms_within,
        f,
        p: f_sf(f, df_between as f64, df_within as f64),
    })
}

/// All-pairs Tukey HSD (Tukey–Kramer for unequal sizes). `labels` names
/// the groups; indices are used when it is shorter.
pub fn tukey_hsd(groups: &[Vec<f64>], labels: &[String], alpha: f64) -> Result<Vec<TestResult>> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::arg(format!("alpha {alpha} outside (0, 1)")));
    }
    let table = one_way_anova(groups)?;
    let k = groups.len();
    let means: Vec<f64> = groups.iter().map(|g| mean(g)).collect();
    let name = |i: usize| labels.get(i).cloned().unwrap_or_else(|| i.to_string());
    let mut out = Vec::with_capacity(k * (k - 1) / 2);
    for i in 0..k {
        for j in i + 1..k {
            let diff = means[i] - means[j];
            let se = (table.ms_within / 2.0 * (1.0 / groups[i].len() as f64 + 1.0 / groups[j].len() as f64)).sqrt();
            let q = diff.abs() / se;
            let p = (1.0 - studentized_range_cdf(q, k, table.df_within as f64)?).clamp(0.0, 1.0);
            out.push(TestResult {
                kind: TestKind::TukeyPair,
                statistic: q,
                p,
                pair: Some((name(i), name(j))),
                mean_diff: Some(diff),
                significant: Some(p < alpha),
                parameters_estimated: false,
            });
        }
    }
    Ok(out)
}

/// `mean ± t · s/√n` with the t quantile at `(1 + confidence)/2`.
pub fn mean_ci(sample: &[f64], confidence: f64) -> Result<Interval> {
    if sample.len() < 2 {
        return Err(Error::arg(format!("need at least 2 observations, got {}", sample.len())));
    }
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::arg(format!("confidence {confidence} outside (0, 1)")));
    }
    let n = sample.len() as f64;
    let m = mean(sample);
    let var = sample.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0);
    let half = t_quantile((1.0 + confidence) / 2.0, n - 1.0)? * (var / n).sqrt();
    Ok(Interval {
        lower: m - half,
        upper: m + half,
        confidence,
    })
}

/// Pooled two-sample proportion z test, two-sided.
pub fn two_prop_z(x1: u64, n1: u64, x2: u64, n2: u64) -> Result<TestResult> {
    if n1 == 0 || n2 == 0 || x1 > n1 || x2 > n2 {
        return Err(Error::arg(format!(
            "invalid counts {x1}/{n1} and {x2}/{n2}"
        )));
    }
    let pooled = (x1 + x2) as f64 / (n1 + n2) as f64;
    if pooled <= 0.0 || pooled >= 1.0 {
        return Err(Error::Degenerate(format!(
            "pooled proportion {pooled} leaves no variance"
        )));
    }
    let (p1, p2) = (x1 as f64 / n1 as f64, x2 as f64 / n2 as f64);
    let se = (pooled * (1.0 - pooled) * (1.0 / n1 as f64 + 1.0 / n2 as f64)).sqrt();
    let z = (p1 - p2) / se;
    Ok(TestResult {
        kind: TestKind::ZProp,
        statistic: z,
        p: erfc(z.abs() / std::f64::consts::SQRT_2).clamp(0.0, 1.0),
        pair: None,
        mean_diff: None,
        significant: None,
        parameters_estimated: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct KsOptions {
    /// Use the Lilliefors (Dallal–Wilkinson) p-value instead of the
    /// asymptotic Kolmogorov tail.
    pub lilliefors: bool,
}

/// KS distance between the sample and a normal with the sample's mean and
/// standard deviation.
pub fn ks_normality(sample: &[f64], opts: KsOptions) -> Result<TestResult> {
    if sample.len() < 4 {
        return Err(Error::arg(format!("need at least 4 observations, got {}", sample.len())));
    }
    let n = sample.len() as f64;
    let m = mean(sample);
    let sd = (sample.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0)).sqrt();
    if !(sd > 0.0) {
        return Err(Error::Degenerate("sample has zero variance".into()));
    }
    let mut z: Vec<f64> = sample.iter().map(|v| (v - m) / sd).collect();
    z.sort_by(f64::total_cmp);
    let mut d: f64 = 0.0;
    for (i, &zi) in z.iter().enumerate() {
        let cdf = norm_cdf(zi);
        d = d.max((i + 1) as f64 / n - cdf).max(cdf - i as f64 / n);
    }
    let p = if opts.lilliefors {
        lilliefors_p(d, sample.len())
    } else {
        let sn = n.sqrt();
        kolmogorov_sf((sn + 0.12 + 0.11 / sn) * d)
    };
    Ok(TestResult {
        kind: TestKind::Ks,
        statistic: d,
        p,
        pair: None,
        mean_diff: None,
        significant: None,
        parameters_estimated: true,
    })
}

/// Named treatment columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Treatments {
    pub names: Vec<String>,
    pub groups: Vec<Vec<f64>>,
}

/// Reads a CSV with one column per treatment and a header of names. Every
/// row must carry a value for every column.
pub fn parse_treatments_csv(text: &str) -> Result<Treatments> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let names: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::parse(Some(1), e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if names.len() < 2 {
        return Err(Error::parse(Some(1), format!("need at least 2 treatment columns, got {}", names.len())));
    }
    let mut groups = vec![Vec::new(); names.len()];
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| Error::parse(Some(row), e.to_string()))?;
        if rec.len() != names.len() {
            return Err(Error::parse(
                Some(row),
                format!("row has {} fields, header has {}", rec.len(), names.len()),
            ));
        }
        for (col, field) in rec.iter().enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| Error::parse(Some(row), format!("column {:?}: {field:?} is not a number", names[col])))?;
            groups[col].push(v);
        }
    }
    if groups[0].len() < 2 {
        return Err(Error::parse(None, format!("need at least 2 data rows, got {}", groups[0].len())));
    }
    Ok(Treatments { names, groups })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreatmentInterval {
    pub treatment: String,
    pub mean: f64,
    #[serde(flatten)]
    pub interval: Interval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalityCheck {
    pub treatment: String,
    #[serde(flatten)]
    pub result: TestResult,
}

/// Everything the treatment comparison reports, in one document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub alpha: f64,
    pub anova: AnovaTable,
    pub intervals: Vec<TreatmentInterval>,
    pub tukey: Vec<TestResult>,
    pub normality: Vec<NormalityCheck>,
}

pub fn compare_treatments(t: &Treatments, alpha: f64, ks: KsOptions) -> Result<Comparison> {
    let anova = one_way_anova(&t.groups)?;
    let tukey = tukey_hsd(&t.groups, &t.names, alpha)?;
    let intervals = t
        .names
        .iter()
        .zip(&t.groups)
        .map(|(name, g)| {
            Ok(TreatmentInterval {
                treatment: name.clone(),
                mean: mean(g),
                interval: mean_ci(g, 1.0 - alpha)?,
            })
        })
        .collect::<Result<_>>()?;
    let normality = t
        .names
        .iter()
        .zip(&t.groups)
        .filter(|(_, g)| g.len() >= 4)
        .filter_map(|(name, g)| {
            // constant columns have no normality verdict
            ks_normality(g, ks).ok().map(|result| NormalityCheck {
                treatment: name.clone(),
                result,
            })
        })
        .collect();
    Ok(Comparison {
        alpha,
        anova,
        intervals,
        tukey,
        normality,
    })
}

//! Rank-based tests on result tables: Kruskal–Wallis across configurations
//! and Dunn's pairwise comparison against a control, Holm-adjusted.

mod report;
mod special;

use crate::error::{Error, Result};

pub use report::{analyze, read_stats_csv, write_stats_csv, StatsRow, SYSTEM_AGENT};
pub use special::{chi_square_sf, gamma_q, ln_gamma, normal_sf};

/// Labeled samples, at least two groups, none empty.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleGroups {
    groups: Vec<(String, Vec<f64>)>,
}

impl SampleGroups {
    pub fn new(groups: Vec<(String, Vec<f64>)>) -> Result<Self> {
        if groups.len() < 2 {
            return Err(Error::Precondition("need at least two groups".into()));
        }
        if let Some((label, _)) = groups.iter().find(|(_, g)| g.is_empty()) {
            return Err(Error::Precondition(format!("group {label:?} is empty")));
        }
        if groups.iter().any(|(_, g)| g.iter().any(|x| !x.is_finite())) {
            return Err(Error::Precondition("observations must be finite".into()));
        }
        Ok(SampleGroups { groups })
    }

    pub fn from_slices(groups: &[(&str, &[f64])]) -> Result<Self> {
        Self::new(groups.iter().map(|(l, g)| (l.to_string(), g.to_vec())).collect())
    }

    pub fn groups(&self) -> &[(String, Vec<f64>)] {
        &self.groups
    }

    pub fn total(&self) -> usize {
        self.groups.iter().map(|(_, g)| g.len()).sum()
    }
}

/// Pooled mid-ranks, split back per group, plus `sum(t^3 - t)` over tie blocks.
struct Ranking {
    per_group: Vec<Vec<f64>>,
    tie_sum: f64,
    n: usize,
}

fn rank(groups: &SampleGroups) -> Ranking {
    let pooled: Vec<(f64, usize)> = groups
        .groups()
        .iter()
        .enumerate()
        .flat_map(|(g, (_, xs))| xs.iter().map(move |&x| (x, g)))
        .collect();
    let n = pooled.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| pooled[a].0.total_cmp(&pooled[b].0));
    let mut ranks = vec![0.0; n];
    let mut tie_sum = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && pooled[order[j + 1]].0 == pooled[order[i]].0 {
            j += 1;
        }
        // positions i..=j share ranks i+1..=j+1
        let mid = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = mid;
        }
        let t = (j - i + 1) as f64;
        tie_sum += t * t * t - t;
        i = j + 1;
    }
    let mut per_group = vec![Vec::new(); groups.groups().len()];
    for (k, &(_, g)) in pooled.iter().enumerate() {
        per_group[g].push(ranks[k]);
    }
    Ranking { per_group, tie_sum, n }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KruskalWallis {
    pub h: f64,
    pub df: u32,
    pub p_value: f64,
}

/// Tie-corrected H statistic with a chi-square(k-1) p-value.
pub fn kruskal_wallis(groups: &SampleGroups) -> Result<KruskalWallis> {
    if groups.total() < 3 {
        return Err(Error::Precondition("need at least three observations".into()));
    }
    let df = (groups.groups().len() - 1) as u32;
    let ranking = rank(groups);
    let n = ranking.n as f64;
    let correction = 1.0 - ranking.tie_sum / (n * n * n - n);
    if correction <= 0.0 {
        return Ok(KruskalWallis { h: 0.0, df, p_value: 1.0 });
    }
    let rank_term: f64 = ranking
        .per_group
        .iter()
        .map(|r| {
            let sum: f64 = r.iter().sum();
            sum * sum / r.len() as f64
        })
        .sum();
    let h = ((12.0 / (n * (n + 1.0))) * rank_term - 3.0 * (n + 1.0)) / correction;
    let h = h.max(0.0);
    Ok(KruskalWallis {
        h,
        df,
        p_value: chi_square_sf(h, df),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct PairwiseComparison {
    pub label: String,
    pub control: String,
    /// `(mean_rank_control - mean_rank_label) / se`.
    pub z: f64,
    pub raw_p: f64,
    pub adjusted_p: f64,
}

impl PairwiseComparison {
    pub fn pair(&self) -> String {
        format!("{} vs {}", self.label, self.control)
    }
}

/// Dunn's test of every group against `control`, two-sided, Holm-adjusted.
/// Output keeps the groups' original order.
pub fn dunn_posthoc(groups: &SampleGroups, control: &str) -> Result<Vec<PairwiseComparison>> {
    let c = groups
        .groups()
        .iter()
        .position(|(l, _)| l == control)
        .ok_or_else(|| Error::Precondition(format!("control group {control:?} not present")))?;
    let ranking = rank(groups);
    let n = ranking.n as f64;
    let tie_term = if ranking.n > 1 { ranking.tie_sum / (12.0 * (n - 1.0)) } else { 0.0 };
    let spread = n * (n + 1.0) / 12.0 - tie_term;
    let mean = |r: &[f64]| r.iter().sum::<f64>() / r.len() as f64;
    let control_mean = mean(&ranking.per_group[c]);
    let nc = ranking.per_group[c].len() as f64;

    let mut out: Vec<PairwiseComparison> = groups
        .groups()
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != c)
        .map(|(j, (label, _))| {
            let nj = ranking.per_group[j].len() as f64;
            let variance = spread * (1.0 / nc + 1.0 / nj);
            let diff = control_mean - mean(&ranking.per_group[j]);
            let z = if variance > 0.0 { diff / variance.sqrt() } else { 0.0 };
            PairwiseComparison {
                label: label.clone(),
                control: control.to_owned(),
                z,
                raw_p: (2.0 * normal_sf(z.abs())).min(1.0),
                adjusted_p: f64::NAN,
            }
        })
        .collect();
    let raw: Vec<f64> = out.iter().map(|p| p.raw_p).collect();
    for (p, adj) in out.iter_mut().zip(holm_adjust(&raw)) {
        p.adjusted_p = adj;
    }
    Ok(out)
}

/// Holm step-down adjustment; output in input order.
pub fn holm_adjust(raw: &[f64]) -> Vec<f64> {
    let m = raw.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| raw[a].total_cmp(&raw[b]));
    let mut adjusted = vec![0.0; m];
    let mut running: f64 = 0.0;
    for (rank, &k) in order.iter().enumerate() {
        running = running.max(((m - rank) as f64 * raw[k]).min(1.0));
        adjusted[k] = running;
    }
    adjusted
}

pub fn bonferroni_adjust(raw: &[f64]) -> Vec<f64> {
    let m = raw.len() as f64;
    raw.iter().map(|p| (p * m).min(1.0)).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct TestResult {
    pub h_statistic: f64,
    pub degrees_of_freedom: u32,
    pub p_value: f64,
    pub pairwise: Vec<PairwiseComparison>,
}

pub fn test_against_control(groups: &SampleGroups, control: &str) -> Result<TestResult> {
    let kw = kruskal_wallis(groups)?;
    Ok(TestResult {
        h_statistic: kw.h,
        degrees_of_freedom: kw.df,
        p_value: kw.p_value,
        pairwise: dunn_posthoc(groups, control)?,
    })
}

/// `*` p < .05, `**` p < .01, `***` p < .001.
pub fn stars(p: f64) -> &'static str {
    if p < 0.001 {
        "***"
    } else if p < 0.01 {
        "**"
    } else if p < 0.05 {
        "*"
    } else {
        ""
    }
}

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::EvalError;

/// Combined sample size up to which Mann-Whitney p-values are exact.
pub const EXACT_LIMIT: usize = 16;

/// 1-based ranks; tied values share the mean of the ranks they span.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    (sxx > 0.0 && syy > 0.0).then(|| (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Pearson correlation of average ranks.
pub fn spearman_rank(x: &[f64], y: &[f64]) -> Result<f64, EvalError> {
    if x.len() != y.len() {
        return Err(EvalError::Length(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(EvalError::Undefined("spearman needs at least two videos".into()));
    }
    pearson(&average_ranks(x), &average_ranks(y)).ok_or_else(|| EvalError::Undefined("zero variance in ranks".into()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PValueMethod {
    Exact,
    NormalApproximation,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MannWhitney {
    /// U of the first sample.
    pub u1: f64,
    pub u2: f64,
    /// Two-sided: the smaller tail doubled, capped at 1.
    pub p_value: f64,
    pub method: PValueMethod,
}

/// U statistics of group-one rank sums for every way of choosing `n1` of the pooled ranks.
fn enumerate_u(ranks: &[f64], n1: usize) -> Vec<f64> {
    let n = ranks.len();
    let base = (n1 * (n1 + 1)) as f64 / 2.0;
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..n1).collect();
    loop {
        out.push(idx.iter().map(|&i| ranks[i]).sum::<f64>() - base);
        // next combination in lexicographic order
        let mut k = n1;
        loop {
            if k == 0 {
                return out;
            }
            k -= 1;
            if idx[k] != k + n - n1 {
                break;
            }
            if k == 0 {
                return out;
            }
        }
        idx[k] += 1;
        for j in k + 1..n1 {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

pub fn mann_whitney_u(sample1: &[f64], sample2: &[f64]) -> Result<MannWhitney, EvalError> {
    let (n1, n2) = (sample1.len(), sample2.len());
    if n1 == 0 || n2 == 0 {
        return Err(EvalError::Empty);
    }
    let pooled: Vec<f64> = sample1.iter().chain(sample2).cloned().collect();
    let ranks = average_ranks(&pooled);
    let r1: f64 = ranks[..n1].iter().sum();
    let u1 = r1 - (n1 * (n1 + 1)) as f64 / 2.0;
    let nn = (n1 * n2) as f64;
    let u2 = nn - u1;
    let n = n1 + n2;
    const EPS: f64 = 1e-9;
    if n <= EXACT_LIMIT {
        let dist = enumerate_u(&ranks, n1);
        let total = dist.len() as f64;
        let lower = dist.iter().filter(|u| **u <= u1 + EPS).count() as f64 / total;
        let upper = dist.iter().filter(|u| **u >= u1 - EPS).count() as f64 / total;
        return Ok(MannWhitney {
            u1,
            u2,
            p_value: (2.0 * lower.min(upper)).min(1.0),
            method: PValueMethod::Exact,
        });
    }
    let mut sorted = pooled.clone();
    sorted.sort_by(f64::total_cmp);
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        i = j + 1;
    }
    let nf = n as f64;
    let var = nn / 12.0 * ((nf + 1.0) - tie_term / (nf * (nf - 1.0)));
    let p_value = if var <= 0.0 {
        1.0
    } else {
        let z = ((u1 - nn / 2.0).abs() - 0.5).max(0.0) / var.sqrt();
        let normal = Normal::new(0.0, 1.0).expect("standard normal");
        (2.0 * (1.0 - normal.cdf(z))).min(1.0)
    };
    Ok(MannWhitney {
        u1,
        u2,
        p_value,
        method: PValueMethod::NormalApproximation,
    })
}

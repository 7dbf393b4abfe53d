use serde::{Deserialize, Serialize};

use crate::classifiers::ModelKind;

pub const TABLE_COLUMNS: [&str; 5] = [
    "Identity Accuracy",
    "Human-Agent Accuracy",
    "Human-Agent Rank",
    "Hybrid-Symbolic Accuracy",
    "Hybrid-Symbolic Rank",
];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Sample standard deviation; zero for a single value.
    pub std: f64,
    /// Number of defined values summarized.
    pub n: usize,
}

/// Mean and sample standard deviation of the defined values; `None` if there are none.
pub fn summarize(values: &[Option<f64>]) -> Option<MeanStd> {
    let xs: Vec<f64> = values.iter().flatten().copied().collect();
    if xs.is_empty() {
        return None;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let std = if xs.len() > 1 {
        (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Some(MeanStd { mean, std, n: xs.len() })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelMetrics {
    pub model: ModelKind,
    pub identity_accuracy: Option<MeanStd>,
    pub human_agent_accuracy: Option<MeanStd>,
    pub human_agent_rank: Option<MeanStd>,
    pub hybrid_symbolic_accuracy: Option<MeanStd>,
    pub hybrid_symbolic_rank: Option<MeanStd>,
}

impl ModelMetrics {
    pub fn cells(&self) -> [Option<MeanStd>; 5] {
        [
            self.identity_accuracy,
            self.human_agent_accuracy,
            self.human_agent_rank,
            self.hybrid_symbolic_accuracy,
            self.hybrid_symbolic_rank,
        ]
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub rows: Vec<ModelMetrics>,
    /// Free-form provenance such as seeds and repeat counts.
    #[serde(default)]
    pub notes: Vec<String>,
}

impl MetricsReport {
    /// Checks that accuracies lie in [0, 1] and correlations in [-1, 1].
    pub fn validate(&self) -> Result<(), String> {
        for row in &self.rows {
            for (i, cell) in row.cells().iter().enumerate() {
                if let Some(m) = cell {
                    let lo = if i == 2 || i == 4 { -1.0 } else { 0.0 };
                    if !(lo..=1.0).contains(&m.mean) || !m.std.is_finite() {
                        return Err(format!("{} {} out of range: {}", row.model, TABLE_COLUMNS[i], m.mean));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Plain-text table with one row per model and `mean (std)` cells.
pub fn render_table(report: &MetricsReport) -> String {
    let mut header = vec!["Model".to_string()];
    header.extend(TABLE_COLUMNS.iter().map(|s| s.to_string()));
    let mut rows = vec![header];
    for r in &report.rows {
        let mut line = vec![r.model.to_string()];
        line.extend(r.cells().iter().map(|c| match c {
            Some(m) => format!("{:.3} ({:.3})", m.mean, m.std),
            None => "n/a".to_string(),
        }));
        rows.push(line);
    }
    let widths: Vec<usize> = (0..rows[0].len()).map(|i| rows.iter().map(|r| r[i].len()).max().unwrap_or(0)).collect();
    let mut out = String::new();
    for (k, r) in rows.iter().enumerate() {
        let cells: Vec<String> = r.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        out.push_str(cells.join(" | ").trim_end());
        out.push('\n');
        if k == 0 {
            let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
            out.push_str(&rule.join("-|-"));
            out.push('\n');
        }
    }
    out
}

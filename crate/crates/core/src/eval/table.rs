use serde::{Deserialize, Serialize};

use super::{EvalError, MetricSummary, Metrics};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Success,
    Ttf,
    VLin,
    VAng,
}

impl MetricKind {
    pub fn column(self) -> &'static str {
        match self {
            MetricKind::Success => "success",
            MetricKind::Ttf => "ttf",
            MetricKind::VLin => "v_lin_te",
            MetricKind::VAng => "v_ang_te",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            MetricKind::Success => "Success",
            MetricKind::Ttf => "TTF",
            MetricKind::VLin => "V_lin TE",
            MetricKind::VAng => "V_ang TE",
        }
    }

    pub fn get(self, m: &Metrics) -> f64 {
        match self {
            MetricKind::Success => m.success_rate,
            MetricKind::Ttf => m.ttf,
            MetricKind::VLin => m.v_lin_tracking_error,
            MetricKind::VAng => m.v_ang_tracking_error,
        }
    }

    fn from_column(s: &str) -> Option<Self> {
        [MetricKind::Success, MetricKind::Ttf, MetricKind::VLin, MetricKind::VAng].into_iter().find(|k| k.column() == s)
    }
}

/// Rows are methods; columns are `metric x condition`, each as mean and std.
#[derive(Debug, Clone, PartialEq)]
pub struct CompareTable {
    pub metrics: Vec<MetricKind>,
    pub conditions: Vec<String>,
    pub labels: Vec<String>,
    /// `values[row][col]` with `col = (condition * metrics + metric)`, as (mean, std).
    pub values: Vec<Vec<(f64, f64)>>,
}

/// Builds a table from `sets[label][condition]`.
pub fn compare_table(
    sets: &[Vec<MetricSummary>],
    labels: &[String],
    conditions: &[String],
    metrics: &[MetricKind],
) -> Result<CompareTable, EvalError> {
    if sets.len() < 2 {
        return Err(EvalError::Config("a comparison needs at least two metric sets".into()));
    }
    if sets.len() != labels.len() {
        return Err(EvalError::Config(format!("{} metric sets for {} labels", sets.len(), labels.len())));
    }
    if let Some(bad) = sets.iter().position(|s| s.len() != conditions.len()) {
        return Err(EvalError::Config(format!(
            "metric set `{}` has {} conditions, expected {}",
            labels[bad],
            sets[bad].len(),
            conditions.len()
        )));
    }
    let values = sets
        .iter()
        .map(|row| {
            row.iter()
                .flat_map(|s| metrics.iter().map(move |k| (k.get(&s.mean), k.get(&s.std))))
                .collect()
        })
        .collect();
    Ok(CompareTable {
        metrics: metrics.to_vec(),
        conditions: conditions.to_vec(),
        labels: labels.to_vec(),
        values,
    })
}

impl CompareTable {
    fn column_names(&self) -> Vec<String> {
        self.conditions
            .iter()
            .flat_map(|c| {
                self.metrics
                    .iter()
                    .flat_map(move |k| [format!("{}@{c}_mean", k.column()), format!("{}@{c}_std", k.column())])
            })
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["method".to_string()];
        header.extend(self.column_names());
        w.write_record(&header).expect("in-memory write");
        for (label, row) in self.labels.iter().zip(&self.values) {
            let mut rec = vec![label.clone()];
            for (m, s) in row {
                rec.push(m.to_string());
                rec.push(s.to_string());
            }
            w.write_record(&rec).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
    }

    pub fn from_csv(text: &str) -> Result<Self, EvalError> {
        let bad = |m: String| EvalError::Parse(m);
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let header: Vec<String> = r.headers().map_err(|e| bad(e.to_string()))?.iter().map(String::from).collect();
        if header.first().map(String::as_str) != Some("method") || header.len() % 2 == 0 {
            return Err(bad("header must be `method` followed by mean/std column pairs".into()));
        }
        let mut metrics: Vec<MetricKind> = Vec::new();
        let mut conditions: Vec<String> = Vec::new();
        for pair in header[1..].chunks(2) {
            let name = pair[0]
                .strip_suffix("_mean")
                .ok_or_else(|| bad(format!("column `{}` is not a mean column", pair[0])))?;
            if pair[1] != format!("{name}_std") {
                return Err(bad(format!("column `{}` should be `{name}_std`", pair[1])));
            }
            let (metric, cond) = name.split_once('@').ok_or_else(|| bad(format!("column `{name}` lacks a condition")))?;
            let kind = MetricKind::from_column(metric).ok_or_else(|| bad(format!("unknown metric `{metric}`")))?;
            if !conditions.iter().any(|c| c == cond) {
                conditions.push(cond.to_string());
            }
            if !metrics.contains(&kind) {
                metrics.push(kind);
            }
        }
        let mut labels = Vec::new();
        let mut values = Vec::new();
        for (line, rec) in r.records().enumerate() {
            let rec = rec.map_err(|e| bad(e.to_string()))?;
            labels.push(rec.get(0).unwrap_or_default().to_string());
            let nums = rec
                .iter()
                .skip(1)
                .map(|v| v.parse::<f64>().map_err(|e| bad(format!("row {}: `{v}`: {e}", line + 2))))
                .collect::<Result<Vec<_>, _>>()?;
            values.push(nums.chunks(2).map(|p| (p[0], p[1])).collect());
        }
        let table = Self { metrics, conditions, labels, values };
        if table.column_names() != header[1..] {
            return Err(bad("columns are not a full metric x condition grid".into()));
        }
        Ok(table)
    }

    /// Mean of `metric` under `condition` for `label`.
    pub fn get(&self, label: &str, metric: MetricKind, condition: &str) -> Option<(f64, f64)> {
        let row = self.labels.iter().position(|l| l == label)?;
        let c = self.conditions.iter().position(|c| c == condition)?;
        let m = self.metrics.iter().position(|k| *k == metric)?;
        self.values[row].get(c * self.metrics.len() + m).copied()
    }

    /// Column-wise difference of the means of two rows.
    pub fn deltas(&self, a: &str, b: &str) -> Option<Vec<f64>> {
        let ra = self.labels.iter().position(|l| l == a)?;
        let rb = self.labels.iter().position(|l| l == b)?;
        Some(self.values[ra].iter().zip(&self.values[rb]).map(|(x, y)| x.0 - y.0).collect())
    }

    /// Fixed-width text rendering with `mean ± std` cells.
    pub fn to_text(&self) -> String {
        let mut head = vec![String::from("Method")];
        for c in &self.conditions {
            for k in &self.metrics {
                head.push(format!("{} {c}", k.title()));
            }
        }
        let mut rows = vec![head];
        for (label, vals) in self.labels.iter().zip(&self.values) {
            let mut r = vec![label.clone()];
            for (c, (m, s)) in vals.iter().enumerate() {
                let kind = self.metrics[c % self.metrics.len()];
                r.push(match kind {
                    MetricKind::Success | MetricKind::Ttf => format!("{:.2} ± {:.2}", 100.0 * m, 100.0 * s),
                    _ => format!("{m:.3} ± {s:.3}"),
                });
            }
            rows.push(r);
        }
        let widths: Vec<usize> =
            (0..rows[0].len()).map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0)).collect();
        let mut out = String::new();
        for r in &rows {
            let cells: Vec<String> = r.iter().zip(&widths).map(|(v, w)| format!("{v:<w$}")).collect();
            out.push_str(cells.join("  ").trim_end());
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn summary(s: f64, t: f64, l: f64) -> MetricSummary {
        let m = Metrics { success_rate: s, ttf: t, v_lin_tracking_error: l, v_ang_tracking_error: 0.0, trials: 10 };
        MetricSummary { mean: m, std: Metrics { success_rate: 0.01, ..m }, seeds: 3 }
    }

    fn table() -> CompareTable {
        let sets = vec![
            vec![summary(0.9, 0.95, 0.12), summary(0.7, 0.8, 0.2)],
            vec![summary(0.6, 0.75, 0.125), summary(0.4, 0.55, 0.3)],
        ];
        let labels = vec!["staged".to_string(), "ppo".to_string()];
        let conds = vec!["200-300".to_string(), "300-400".to_string()];
        compare_table(&sets, &labels, &conds, &[MetricKind::Success, MetricKind::Ttf, MetricKind::VLin]).unwrap()
    }

    #[test]
    fn csv_round_trip() {
        let t = table();
        let back = CompareTable::from_csv(&t.to_csv()).unwrap();
        assert_eq!(back, t);
        assert!(t.to_csv().starts_with("method,success@200-300_mean,success@200-300_std,ttf@200-300_mean"));
    }

    #[test]
    fn lookup_and_deltas() {
        let t = table();
        assert_eq!(t.get("ppo", MetricKind::Ttf, "300-400"), Some((0.55, 0.55)));
        let d = t.deltas("staged", "ppo").unwrap();
        assert!((d[0] - 0.3).abs() < 1e-12 && (d[3] - 0.3).abs() < 1e-12);
        assert!(t.to_text().contains("90.00 ± 1.00"));
    }

    #[test]
    fn shape_errors() {
        let one = vec![vec![summary(1.0, 1.0, 0.0)]];
        assert!(compare_table(&one, &["a".into()], &["c".into()], &[MetricKind::Success]).is_err());
        let ragged = vec![vec![summary(1.0, 1.0, 0.0)], vec![]];
        assert!(compare_table(&ragged, &["a".into(), "b".into()], &["c".into()], &[MetricKind::Success]).is_err());
        assert!(matches!(CompareTable::from_csv("method,foo@x_mean,foo@x_std\na,1,2\n"), Err(EvalError::Parse(_))));
        assert!(matches!(CompareTable::from_csv("method,ttf@x_mean,ttf@x_std\na,nope,2\n"), Err(EvalError::Parse(_))));
    }
}

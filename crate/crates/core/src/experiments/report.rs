use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::SplitPlan;
use crate::regression::{AssumptionSpec, Regime};
use crate::scoring::{Attribute, LinearForm, Piecewise, ScoringFunction};
use crate::stats::{compare_to_baseline, mean, summarize, MeanSummary, StatsError, TTestResult};

pub const REPORT_VERSION: &str = "evrec/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellError {
    pub regime: Regime,
    pub split: usize,
    pub stage: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RmseRow {
    pub regime: Regime,
    pub splits: Vec<Option<f64>>,
    /// Mean over splits, present only when every split has a value.
    pub mean: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientSummary {
    /// `intercept`, an attribute name, or `R` for the social-to-content ratio.
    pub term: String,
    /// Number of fitted splits in which the term was kept.
    pub present_in: usize,
    pub summary: Option<MeanSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PieceCoefficients {
    pub regime: Regime,
    pub piece: usize,
    pub range: String,
    /// Fitted form for this piece in every split; `None` where the fit failed.
    pub splits: Vec<Option<LinearForm>>,
    pub terms: Vec<CoefficientSummary>,
    pub ratio: Option<CoefficientSummary>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Series {
    Validation,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ComparisonOutcome {
    Tested(TTestResult),
    ZeroVariance { mean_delta: f64, mean_delta_pct: f64 },
    Unavailable { reason: String },
}

/// Paired comparison of two regimes' RMSE series. Positive deltas mean the
/// candidate has the lower error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub series: Series,
    pub baseline: Regime,
    pub candidate: Regime,
    pub outcome: ComparisonOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub version: String,
    pub plan: SplitPlan,
    pub regimes: Vec<AssumptionSpec>,
    pub n_train_pool: usize,
    pub n_test_pool: usize,
    pub validation_rmse: Vec<RmseRow>,
    pub test_rmse: Vec<RmseRow>,
    pub coefficients: Vec<PieceCoefficients>,
    pub comparisons: Vec<Comparison>,
    pub errors: Vec<CellError>,
}

pub(super) type CellParts = (Option<ScoringFunction>, Option<f64>, Option<f64>, Vec<CellError>);

fn rmse_row(regime: Regime, splits: Vec<Option<f64>>) -> RmseRow {
    let all: Option<Vec<f64>> = splits.iter().copied().collect();
    RmseRow {
        regime,
        mean: all.filter(|v| !v.is_empty()).map(|v| mean(&v)),
        splits,
    }
}

fn range_label(thresholds: &[f64], piece: usize) -> String {
    match (piece.checked_sub(1).map(|i| thresholds[i]), thresholds.get(piece)) {
        (None, None) => "all".into(),
        (None, Some(hi)) => format!("< {hi}"),
        (Some(lo), Some(hi)) => format!("[{lo}, {hi})"),
        (Some(lo), None) => format!(">= {lo}"),
    }
}

fn term_summary(term: &str, values: &[f64], present_in: usize) -> CoefficientSummary {
    CoefficientSummary {
        term: term.to_owned(),
        present_in,
        summary: summarize(values).ok(),
    }
}

/// `(rat + rch + frn) / (thi + tyi)`, absent coefficients taken as 0.
pub(crate) fn social_ratio(form: &LinearForm) -> Option<f64> {
    let c = |a| form.coefficient(a).unwrap_or(0.0);
    let content = c(Attribute::Thi) + c(Attribute::Tyi);
    (content != 0.0).then(|| (c(Attribute::Rat) + c(Attribute::Rch) + c(Attribute::Frn)) / content)
}

fn piece_tables(spec: &AssumptionSpec, functions: &[Option<ScoringFunction>]) -> Vec<PieceCoefficients> {
    let n_pieces = if spec.regime.split().is_some() {
        spec.thresholds.len() + 1
    } else {
        1
    };
    let attrs = spec.regime.attributes();
    (0..n_pieces)
        .map(|piece| {
            let splits: Vec<Option<LinearForm>> = functions
                .iter()
                .map(|f| f.as_ref().map(|f| f.pieces()[piece].clone()))
                .collect();
            let fitted: Vec<&LinearForm> = splits.iter().flatten().collect();
            let mut terms = vec![term_summary(
                "intercept",
                &fitted.iter().map(|f| f.intercept).collect::<Vec<_>>(),
                fitted.len(),
            )];
            for &a in &attrs {
                let values: Vec<f64> = fitted.iter().map(|f| f.coefficient(a).unwrap_or(0.0)).collect();
                let present = fitted.iter().filter(|f| f.coefficient(a).is_some()).count();
                terms.push(term_summary(a.name(), &values, present));
            }
            let ratio = (attrs.len() == Attribute::FACTORS.len()).then(|| {
                let values: Vec<f64> = fitted.iter().filter_map(|f| social_ratio(f)).collect();
                let n = values.len();
                term_summary("R", &values, n)
            });
            PieceCoefficients {
                regime: spec.regime,
                piece,
                range: range_label(&spec.thresholds, piece),
                splits,
                terms,
                ratio,
            }
        })
        .collect()
}

fn compare(series: Series, baseline: &RmseRow, candidate: &RmseRow) -> Comparison {
    let b: Option<Vec<f64>> = baseline.splits.iter().copied().collect();
    let c: Option<Vec<f64>> = candidate.splits.iter().copied().collect();
    let outcome = match (c, b) {
        (Some(c), Some(b)) => match compare_to_baseline(&c, &b) {
            Ok(t) => ComparisonOutcome::Tested(t),
            Err(StatsError::ZeroVariance {
                mean_delta,
                mean_delta_pct,
            }) => ComparisonOutcome::ZeroVariance {
                mean_delta,
                mean_delta_pct,
            },
            Err(e) => ComparisonOutcome::Unavailable { reason: e.to_string() },
        },
        _ => ComparisonOutcome::Unavailable {
            reason: "one of the series has missing splits".into(),
        },
    };
    Comparison {
        series,
        baseline: baseline.regime,
        candidate: candidate.regime,
        outcome,
    }
}

impl ExperimentReport {
    pub(super) fn assemble(
        plan: &SplitPlan,
        regimes: &[AssumptionSpec],
        n_train_pool: usize,
        n_test_pool: usize,
        grid: Vec<Vec<CellParts>>,
    ) -> Self {
        let mut validation_rmse = Vec::new();
        let mut test_rmse = Vec::new();
        let mut coefficients = Vec::new();
        let mut errors = Vec::new();
        for (spec, row) in regimes.iter().zip(grid) {
            let mut functions = Vec::new();
            let mut val = Vec::new();
            let mut test = Vec::new();
            for (f, v, t, e) in row {
                functions.push(f);
                val.push(v);
                test.push(t);
                errors.extend(e);
            }
            validation_rmse.push(rmse_row(spec.regime, val));
            test_rmse.push(rmse_row(spec.regime, test));
            coefficients.extend(piece_tables(spec, &functions));
        }
        let mut comparisons = Vec::new();
        for (series, rows) in [(Series::Validation, &validation_rmse), (Series::Test, &test_rmse)] {
            for i in 0..rows.len() {
                for j in i + 1..rows.len() {
                    comparisons.push(compare(series, &rows[i], &rows[j]));
                }
            }
        }
        Self {
            version: REPORT_VERSION.to_owned(),
            plan: plan.clone(),
            regimes: regimes.to_vec(),
            n_train_pool,
            n_test_pool,
            validation_rmse,
            test_rmse,
            coefficients,
            comparisons,
            errors,
        }
    }

    pub fn validation_row(&self, regime: Regime) -> Option<&RmseRow> {
        self.validation_rmse.iter().find(|r| r.regime == regime)
    }

    pub fn test_row(&self, regime: Regime) -> Option<&RmseRow> {
        self.test_rmse.iter().find(|r| r.regime == regime)
    }

    pub fn comparison(&self, series: Series, baseline: Regime, candidate: Regime) -> Option<&Comparison> {
        self.comparisons
            .iter()
            .find(|c| c.series == series && c.baseline == baseline && c.candidate == candidate)
    }

    pub fn pieces(&self, regime: Regime) -> Vec<&PieceCoefficients> {
        self.coefficients.iter().filter(|p| p.regime == regime).collect()
    }

    /// Per-piece mean of the split-wise fitted coefficients. A coefficient
    /// dropped in some splits contributes 0 there; one dropped in every
    /// split stays absent. `None` if any piece never fitted.
    pub fn averaged_model(&self, regime: Regime) -> Option<ScoringFunction> {
        let spec = self.regimes.iter().find(|s| s.regime == regime)?;
        let mut forms = Vec::new();
        for piece in self.pieces(regime) {
            let fitted: Vec<&LinearForm> = piece.splits.iter().flatten().collect();
            if fitted.is_empty() {
                return None;
            }
            let n = fitted.len() as f64;
            let mut sums: BTreeMap<Attribute, f64> = BTreeMap::new();
            for f in &fitted {
                for (&a, &w) in &f.coefficients {
                    *sums.entry(a).or_default() += w;
                }
            }
            let intercept = fitted.iter().map(|f| f.intercept).sum::<f64>() / n;
            forms.push(LinearForm::new(intercept, sums.into_iter().map(|(a, s)| (a, s / n))));
        }
        Some(match regime.split() {
            None => ScoringFunction::Linear(forms.pop()?),
            Some(split) => ScoringFunction::Piecewise(Piecewise {
                split,
                thresholds: spec.thresholds.clone(),
                pieces: forms,
            }),
        })
    }

    /// Plain-text rendering of the tables.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let cell = |v: Option<f64>| v.map_or_else(|| "-".to_owned(), |v| format!("{v:.4}"));
        let _ = writeln!(
            out,
            "splits: {}  seed: {}  train fraction: {}  mode: {:?}",
            self.plan.n_splits, self.plan.seed, self.plan.train_fraction, self.plan.mode
        );
        let _ = writeln!(out, "training pool: {}  test pool: {}", self.n_train_pool, self.n_test_pool);
        for (title, rows) in [("validation RMSE", &self.validation_rmse), ("test RMSE", &self.test_rmse)] {
            let _ = writeln!(out, "\n{title}");
            let _ = write!(out, "{:<6}", "split");
            for r in rows {
                let _ = write!(out, " {:>10}", r.regime.name());
            }
            out.push('\n');
            for s in 0..self.plan.n_splits {
                let _ = write!(out, "{:<6}", s + 1);
                for r in rows {
                    let _ = write!(out, " {:>10}", cell(r.splits[s]));
                }
                out.push('\n');
            }
            let _ = write!(out, "{:<6}", "mean");
            for r in rows {
                let _ = write!(out, " {:>10}", cell(r.mean));
            }
            out.push('\n');
        }

        let _ = writeln!(out, "\ncoefficients (mean, 0.95 CI half-width, t, kept in)");
        for p in &self.coefficients {
            let _ = writeln!(out, "{} piece {} ({})", p.regime.name(), p.piece, p.range);
            for t in p.terms.iter().chain(&p.ratio) {
                match &t.summary {
                    Some(s) => {
                        let _ = writeln!(
                            out,
                            "  {:<10} {:>10.5} {:>10.5} {:>10} {:>3}",
                            t.term,
                            s.mean,
                            s.ci95_halfwidth,
                            s.t_stat.map_or_else(|| "-".to_owned(), |t| format!("{t:.3}")),
                            t.present_in
                        );
                    }
                    None => {
                        let _ = writeln!(out, "  {:<10} {:>10}", t.term, "-");
                    }
                }
            }
        }

        let _ = writeln!(out, "\ncomparisons (delta %, 0.95 CI half-width %, t)");
        for c in &self.comparisons {
            let series = match c.series {
                Series::Validation => "val",
                Series::Test => "test",
            };
            let body = match &c.outcome {
                ComparisonOutcome::Tested(t) => format!(
                    "{:>9.4} {:>9.4} {:>10.4}",
                    t.mean_delta_pct, t.ci95_halfwidth, t.t_stat
                ),
                ComparisonOutcome::ZeroVariance { mean_delta_pct, .. } => {
                    format!("{mean_delta_pct:>9.4} (zero variance)")
                }
                ComparisonOutcome::Unavailable { reason } => format!("n/a ({reason})"),
            };
            let _ = writeln!(
                out,
                "{series:<5} {:>10} vs {:<10} {body}",
                c.candidate.name(),
                c.baseline.name()
            );
        }

        if !self.errors.is_empty() {
            let _ = writeln!(out, "\nerrors");
            for e in &self.errors {
                let _ = writeln!(out, "  {} split {} {}: {}", e.regime.name(), e.split + 1, e.stage, e.message);
            }
        }
        out
    }
}

use super::linear::{fit_linear, sse, LinearFit};
use super::RegressionError;

/// Outcome of backward attribute elimination. `fit.coefficients` lines up
/// with `kept`, which holds column indices into the original inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub kept: Vec<usize>,
    pub fit: LinearFit,
}

/// `n·ln(SSE/n) + 2k` with `k` counting the intercept.
pub fn aic(n: usize, sse: f64, params: usize) -> f64 {
    let nf = n as f64;
    nf * (sse / nf).max(f64::MIN_POSITIVE).ln() + 2.0 * params as f64
}

pub(crate) fn project(x: &[Vec<f64>], cols: &[usize]) -> Vec<Vec<f64>> {
    x.iter()
        .map(|r| cols.iter().map(|&c| r[c]).collect())
        .collect()
}

fn score_subset(
    x: &[Vec<f64>],
    y: &[f64],
    cols: &[usize],
    ridge: f64,
) -> Result<(f64, LinearFit), RegressionError> {
    let sub = project(x, cols);
    let fit = fit_linear(&sub, y, ridge)?;
    let err = sse(&fit.predict_all(&sub), y);
    Ok((aic(y.len(), err, cols.len() + 1), fit))
}

/// Greedy backward elimination: repeatedly removes the attribute whose
/// removal lowers the AIC the most, stopping when no removal helps or a
/// single attribute is left.
pub fn eliminate_attributes(
    x: &[Vec<f64>],
    y: &[f64],
    ridge: f64,
) -> Result<Selection, RegressionError> {
    let p = x.first().map_or(0, Vec::len);
    if p < 2 {
        return Err(RegressionError::TooFewAttributes(p));
    }
    let mut kept: Vec<usize> = (0..p).collect();
    let (mut best, mut fit) = score_subset(x, y, &kept, ridge)?;
    while kept.len() > 1 {
        let mut candidate: Option<(usize, f64, LinearFit)> = None;
        for drop in 0..kept.len() {
            let cols: Vec<usize> = kept
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != drop)
                .map(|(_, &c)| c)
                .collect();
            let (score, f) = score_subset(x, y, &cols, ridge)?;
            if score < best && candidate.as_ref().is_none_or(|(_, s, _)| score < *s) {
                candidate = Some((drop, score, f));
            }
        }
        match candidate {
            Some((drop, score, f)) => {
                kept.remove(drop);
                best = score;
                fit = f;
            }
            None => break,
        }
    }
    Ok(Selection { kept, fit })
}

use super::RegressionError;

/// Coefficients of an affine least-squares fit.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearFit {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
}

impl LinearFit {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.intercept
            + self
                .coefficients
                .iter()
                .zip(x)
                .map(|(w, v)| w * v)
                .sum::<f64>()
    }

    pub fn predict_all(&self, rows: &[Vec<f64>]) -> Vec<f64> {
        rows.iter().map(|r| self.predict(r)).collect()
    }
}

/// Relative pivot size below which the normal equations count as singular.
const SINGULAR_TOL: f64 = 1e-12;

/// Ridge-regularised least squares on mean-centered inputs.
///
/// Solves `(XcᵀXc + ridge·I) w = Xcᵀ yc` where `Xc`, `yc` are centered, then
/// recovers the unpenalised intercept from the means. With `ridge = 0` and
/// full-rank inputs this is the ordinary least-squares minimiser.
pub fn fit_linear(x: &[Vec<f64>], y: &[f64], ridge: f64) -> Result<LinearFit, RegressionError> {
    let n = x.len();
    if n != y.len() {
        return Err(RegressionError::DimensionMismatch(format!(
            "{n} input rows but {} targets",
            y.len()
        )));
    }
    if n < 2 {
        return Err(RegressionError::TooFewRows { rows: n, needed: 2 });
    }
    if !(ridge.is_finite() && ridge >= 0.0) {
        return Err(RegressionError::InvalidRidge(ridge));
    }
    let p = x[0].len();
    if let Some(bad) = x.iter().position(|r| r.len() != p) {
        return Err(RegressionError::DimensionMismatch(format!(
            "row {bad} has {} inputs, expected {p}",
            x[bad].len()
        )));
    }

    let nf = n as f64;
    let mut x_mean = vec![0.0; p];
    for row in x {
        for (m, v) in x_mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    x_mean.iter_mut().for_each(|m| *m /= nf);
    let y_mean = y.iter().sum::<f64>() / nf;

    let mut gram = vec![vec![0.0; p]; p];
    let mut rhs = vec![0.0; p];
    let mut centered = vec![0.0; p];
    for (row, &target) in x.iter().zip(y) {
        for j in 0..p {
            centered[j] = row[j] - x_mean[j];
        }
        let yc = target - y_mean;
        for i in 0..p {
            rhs[i] += centered[i] * yc;
            for j in 0..=i {
                gram[i][j] += centered[i] * centered[j];
            }
        }
    }
    for i in 0..p {
        gram[i][i] += ridge;
        for j in 0..i {
            gram[j][i] = gram[i][j];
        }
    }

    let coefficients = cholesky_solve(gram, rhs)?;
    let intercept = y_mean
        - coefficients
            .iter()
            .zip(&x_mean)
            .map(|(w, m)| w * m)
            .sum::<f64>();
    Ok(LinearFit {
        intercept,
        coefficients,
    })
}

/// Solves the symmetric positive definite system `a · x = b` in place.
fn cholesky_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Result<Vec<f64>, RegressionError> {
    let p = b.len();
    let scale = (0..p).map(|i| a[i][i].abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    for j in 0..p {
        let mut d = a[j][j];
        for k in 0..j {
            d -= a[j][k] * a[j][k];
        }
        if !(d > SINGULAR_TOL * scale) {
            return Err(RegressionError::SingularSystem);
        }
        let d = d.sqrt();
        a[j][j] = d;
        for i in j + 1..p {
            let mut s = a[i][j];
            for k in 0..j {
                s -= a[i][k] * a[j][k];
            }
            a[i][j] = s / d;
        }
    }
    // forward: L z = b
    for i in 0..p {
        for k in 0..i {
            b[i] -= a[i][k] * b[k];
        }
        b[i] /= a[i][i];
    }
    // backward: Lᵀ x = z
    for i in (0..p).rev() {
        for k in i + 1..p {
            b[i] -= a[k][i] * b[k];
        }
        b[i] /= a[i][i];
    }
    Ok(b)
}

/// Root mean square error between predictions and observations.
pub fn rmse(predicted: &[f64], observed: &[f64]) -> Result<f64, RegressionError> {
    if predicted.len() != observed.len() {
        return Err(RegressionError::DimensionMismatch(format!(
            "{} predictions but {} observations",
            predicted.len(),
            observed.len()
        )));
    }
    if predicted.is_empty() {
        return Err(RegressionError::EmptyInput);
    }
    Ok((sse(predicted, observed) / predicted.len() as f64).sqrt())
}

pub(crate) fn sse(predicted: &[f64], observed: &[f64]) -> f64 {
    predicted
        .iter()
        .zip(observed)
        .map(|(p, o)| (o - p) * (o - p))
        .sum()
}

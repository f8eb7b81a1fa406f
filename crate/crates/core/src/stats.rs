//! Student's t distribution, paired t-tests and mean confidence intervals.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("probability must lie strictly between 0 and 1, got {0}")]
    Probability(f64),
    #[error("degrees of freedom must be at least 1, got {0}")]
    DegreesOfFreedom(f64),
    #[error("series lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least 2 paired values, got {0}")]
    TooFew(usize),
    #[error("all differences are identical (mean difference {mean_delta}); t is undefined")]
    ZeroVariance { mean_delta: f64, mean_delta_pct: f64 },
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n − 1 denominator).
pub fn sample_sd(xs: &[f64]) -> f64 {
    let m = mean(xs);
    let ss: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    (ss / (xs.len() as f64 - 1.0)).sqrt()
}

/// Natural log of the gamma function (Lanczos, g = 7, n = 9).
pub fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = COEF[0];
    let t = x + G + 0.5;
    for (i, c) in COEF.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Continued fraction for the incomplete beta function (modified Lentz).
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-16;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=100_000 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Regularised incomplete beta function `I_x(a, b)`.
pub fn incomplete_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x) / a
    } else {
        1.0 - front * beta_cf(b, a, 1.0 - x) / b
    }
}

/// CDF of Student's t distribution with `df` degrees of freedom.
pub fn student_t_cdf(t: f64, df: f64) -> f64 {
    let x = df / (df + t * t);
    let tail = 0.5 * incomplete_beta(df / 2.0, 0.5, x);
    if t >= 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

/// Quantile of Student's t distribution: the `t` with `P(T ≤ t) = p`.
pub fn t_critical(p: f64, df: f64) -> Result<f64, StatsError> {
    if !(p > 0.0 && p < 1.0) {
        return Err(StatsError::Probability(p));
    }
    if !(df >= 1.0) {
        return Err(StatsError::DegreesOfFreedom(df));
    }
    if p == 0.5 {
        return Ok(0.0);
    }
    // P(T ≤ -t) = 1 - P(T ≤ t)
    let upper = p > 0.5;
    let q = if upper { p } else { 1.0 - p };
    let mut lo = 0.0;
    let mut hi = 1.0;
    while student_t_cdf(hi, df) < q {
        lo = hi;
        hi *= 2.0;
        if hi > 1e300 {
            break;
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if student_t_cdf(mid, df) < q {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi.max(1.0) {
            break;
        }
    }
    let t = 0.5 * (lo + hi);
    Ok(if upper { t } else { -t })
}

/// Result of a paired t-test on `a − b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TTestResult {
    pub n: usize,
    pub mean_delta: f64,
    /// `mean_delta` as a percentage of the mean of the baseline series.
    pub mean_delta_pct: f64,
    pub sd_delta: f64,
    /// Half-width of the 0.95 confidence interval of `mean_delta_pct`.
    pub ci95_halfwidth: f64,
    pub t_stat: f64,
    pub df: usize,
}

impl TTestResult {
    /// The same comparison with the roles of the two series swapped in the
    /// difference but not in the percentage base.
    pub fn negated(&self) -> Self {
        Self {
            mean_delta: -self.mean_delta,
            mean_delta_pct: -self.mean_delta_pct,
            t_stat: -self.t_stat,
            ..self.clone()
        }
    }
}

/// Paired t-test of `d = a − b`, with percentages relative to `mean(b)`.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<TTestResult, StatsError> {
    if a.len() != b.len() {
        return Err(StatsError::LengthMismatch(a.len(), b.len()));
    }
    let n = a.len();
    if n < 2 {
        return Err(StatsError::TooFew(n));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean_delta = mean(&d);
    let base = mean(b);
    let mean_delta_pct = mean_delta / base * 100.0;
    let sd = sample_sd(&d);
    if !(sd > 0.0) || d.iter().all(|&x| x == d[0]) {
        return Err(StatsError::ZeroVariance {
            mean_delta,
            mean_delta_pct,
        });
    }
    let se = sd / (n as f64).sqrt();
    let df = n - 1;
    let tc = t_critical(0.975, df as f64)?;
    Ok(TTestResult {
        n,
        mean_delta,
        mean_delta_pct,
        sd_delta: sd,
        ci95_halfwidth: (tc * se / base * 100.0).abs(),
        t_stat: mean_delta / se,
        df,
    })
}

/// Compares a candidate series against a baseline so that a lower
/// candidate yields positive deltas: the difference is `baseline −
/// candidate`, expressed as a percentage of the baseline mean.
pub fn compare_to_baseline(candidate: &[f64], baseline: &[f64]) -> Result<TTestResult, StatsError> {
    match paired_t_test(candidate, baseline) {
        Ok(r) => Ok(r.negated()),
        Err(StatsError::ZeroVariance {
            mean_delta,
            mean_delta_pct,
        }) => Err(StatsError::ZeroVariance {
            mean_delta: -mean_delta,
            mean_delta_pct: -mean_delta_pct,
        }),
        Err(e) => Err(e),
    }
}

/// Mean with its 0.95 confidence half-width and one-sample t statistic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanSummary {
    pub n: usize,
    pub mean: f64,
    pub ci95_halfwidth: f64,
    /// `None` when all values coincide.
    pub t_stat: Option<f64>,
}

pub fn summarize(xs: &[f64]) -> Result<MeanSummary, StatsError> {
    let n = xs.len();
    if n < 2 {
        return Err(StatsError::TooFew(n));
    }
    let m = mean(xs);
    let se = sample_sd(xs) / (n as f64).sqrt();
    let tc = t_critical(0.975, (n - 1) as f64)?;
    Ok(MeanSummary {
        n,
        mean: m,
        ci95_halfwidth: tc * se,
        t_stat: (se > 0.0).then(|| m / se),
    })
}

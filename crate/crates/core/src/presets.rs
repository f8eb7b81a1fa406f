//! Learned scoring functions published for the Salone del Gusto surveys,
//! on the `[0, 10]` scale. They serve as defaults for ranking and as
//! reference values in tests.

use crate::scoring::{Attribute::*, LinearForm, Piecewise, ScoringFunction};

/// Content-only function predicting the score given with content information only.
pub fn sigma_init_0() -> ScoringFunction {
    ScoringFunction::linear(-0.2524, [(Thi, 0.5911), (Tyi, 0.3338)])
}

/// Content-only function predicting the score given with full information.
pub fn sigma_fin_0() -> ScoringFunction {
    ScoringFunction::linear(-0.8436, [(Thi, 0.597), (Tyi, 0.3235)])
}

/// All five factors.
pub fn sigma_x() -> ScoringFunction {
    ScoringFunction::linear(
        -3.0467,
        [
            (Thi, 0.5698),
            (Tyi, 0.3286),
            (Rat, 0.0848),
            (Rch, 0.1967),
            (Frn, 0.07965),
        ],
    )
}

pub fn sigma_xu_abs() -> ScoringFunction {
    ScoringFunction::linear(-1.6102, [(Thi, 0.5835), (Tyi, 0.3199), (UAbs, 0.2799)])
}

pub fn sigma_xu_rel() -> ScoringFunction {
    ScoringFunction::linear(-2.1925, [(Thi, 0.5782), (Tyi, 0.3329), (URel, 0.2331)])
}

/// Piecewise on theme interest with thresholds 6 and 8.
pub fn sigma_xd_thi() -> ScoringFunction {
    ScoringFunction::Piecewise(Piecewise {
        split: Thi,
        thresholds: vec![6.0, 8.0],
        pieces: vec![
            LinearForm::new(
                -1.9663,
                [(Thi, 0.5681), (Tyi, 0.2194), (Rat, 0.1205), (Rch, 0.1492)],
            ),
            LinearForm::new(
                -3.6959,
                [
                    (Thi, 0.3466),
                    (Tyi, 0.4685),
                    (Rat, 0.1476),
                    (Rch, 0.2657),
                    (Frn, 0.1567),
                ],
            ),
            LinearForm::new(
                -4.1450,
                [(Thi, 0.7396), (Tyi, 0.3527), (Rch, 0.1853), (Frn, 0.1017)],
            ),
        ],
    })
}

/// Piecewise on type interest with thresholds 6 and 8.
pub fn sigma_xd_tyi() -> ScoringFunction {
    ScoringFunction::Piecewise(Piecewise {
        split: Tyi,
        thresholds: vec![6.0, 8.0],
        pieces: vec![
            LinearForm::new(
                -1.5022,
                [(Thi, 0.4410), (Tyi, 0.2786), (Rch, 0.1405), (Frn, 0.1341)],
            ),
            LinearForm::new(
                -2.3500,
                [(Thi, 0.6467), (Tyi, 0.2798), (Rch, 0.1754), (Frn, 0.0425)],
            ),
            LinearForm::new(0.0823, [(Thi, 0.6384), (Rch, 0.2181)]),
        ],
    })
}

/// All published functions with their stable ids.
pub fn all() -> Vec<(&'static str, ScoringFunction)> {
    vec![
        ("sigma_init_0", sigma_init_0()),
        ("sigma_fin_0", sigma_fin_0()),
        ("sigma_x", sigma_x()),
        ("sigma_xu_abs", sigma_xu_abs()),
        ("sigma_xu_rel", sigma_xu_rel()),
        ("sigma_xd_thi", sigma_xd_thi()),
        ("sigma_xd_tyi", sigma_xd_tyi()),
    ]
}

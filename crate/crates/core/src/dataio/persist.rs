use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::ser::{Formatter, PrettyFormatter};

use super::DataError;
use crate::experiments::ExperimentReport;
use crate::model::ScoringConfig;
use crate::regression::Regime;
use crate::scoring::ScoringFunction;

pub const FORMAT_VERSION: &str = "evrec/1";

/// A stored scoring function with the context it was produced in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub version: String,
    pub id: String,
    pub regime: Option<Regime>,
    pub function: ScoringFunction,
    pub config: ScoringConfig,
    pub seed: Option<u64>,
    /// Free-form provenance, e.g. how many splits were averaged.
    pub metadata: BTreeMap<String, String>,
}

impl ModelFile {
    pub fn new(id: impl Into<String>, function: ScoringFunction, config: ScoringConfig) -> Self {
        Self {
            version: FORMAT_VERSION.to_owned(),
            id: id.into(),
            regime: None,
            function,
            config,
            seed: None,
            metadata: BTreeMap::new(),
        }
    }
}

/// Pretty JSON that writes every float in plain decimal notation.
struct DecimalFormatter<'a>(PrettyFormatter<'a>);

impl Formatter for DecimalFormatter<'_> {
    fn write_f64<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        let mut s = format!("{value}");
        if !s.contains('.') {
            s.push_str(".0");
        }
        w.write_all(s.as_bytes())
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(w, f64::from(value))
    }

    fn begin_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }

    fn end_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }

    fn begin_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }

    fn end_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }

    fn begin_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }

    fn end_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }

    fn begin_object_key<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }

    fn begin_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }

    fn end_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

/// Serializes `value` as indented JSON with decimal (never exponent)
/// number rendering. Floats round-trip exactly.
pub fn to_decimal_json<T: Serialize + ?Sized>(value: &T) -> String {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, DecimalFormatter(PrettyFormatter::new()));
    value
        .serialize(&mut ser)
        .expect("in-memory serialization of plain data cannot fail");
    buf.push(b'\n');
    String::from_utf8(buf).expect("serde_json writes UTF-8")
}

fn versioned<T: DeserializeOwned>(text: &str, what: &str) -> Result<T, DataError> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| DataError::Invalid(format!("{what}: {e}")))?;
    match value.get("version").and_then(|v| v.as_str()) {
        Some(FORMAT_VERSION) => {}
        Some(other) => {
            return Err(DataError::VersionMismatch {
                found: other.to_owned(),
                expected: FORMAT_VERSION.to_owned(),
            })
        }
        None => return Err(DataError::Invalid(format!("{what}: missing `version` field"))),
    }
    serde_json::from_value(value).map_err(|e| DataError::Invalid(format!("{what}: {e}")))
}

pub fn model_from_str(text: &str) -> Result<ModelFile, DataError> {
    versioned(text, "model")
}

pub fn report_from_str(text: &str) -> Result<ExperimentReport, DataError> {
    versioned(text, "report")
}

fn write_file(path: &Path, text: &str) -> Result<(), DataError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| DataError::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| DataError::io(path, e))
}

fn read_file(path: &Path) -> Result<String, DataError> {
    fs::read_to_string(path).map_err(|e| DataError::io(path, e))
}

pub fn save_model(path: impl AsRef<Path>, model: &ModelFile) -> Result<(), DataError> {
    write_file(path.as_ref(), &to_decimal_json(model))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ModelFile, DataError> {
    model_from_str(&read_file(path.as_ref())?)
}

pub fn save_report(path: impl AsRef<Path>, report: &ExperimentReport) -> Result<(), DataError> {
    write_file(path.as_ref(), &to_decimal_json(report))
}

pub fn load_report(path: impl AsRef<Path>) -> Result<ExperimentReport, DataError> {
    report_from_str(&read_file(path.as_ref())?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;
    use crate::scoring::{Attribute, LinearForm, Piecewise};
    use proptest::prelude::*;

    #[test]
    fn floats_render_in_decimal() {
        let json = to_decimal_json(&[1.0e-8, 1.5e20, 5.0, -0.0, 0.1]);
        assert!(!json.contains('e') && !json.contains('E'), "{json}");
        assert!(json.contains("0.00000001"));
        assert!(json.contains("150000000000000000000.0"));
        assert!(json.contains("5.0"));
        let back: Vec<f64> = serde_json::from_str(&json).unwrap();
        assert_eq!(back[0].to_bits(), 1.0e-8f64.to_bits());
        assert_eq!(back[4], 0.1);
    }

    #[test]
    fn piecewise_model_round_trips_with_dropped_coefficient() {
        let m = ModelFile::new("xd", presets::sigma_xd_thi(), ScoringConfig::default());
        let back = model_from_str(&to_decimal_json(&m)).unwrap();
        assert_eq!(back, m);
        let ScoringFunction::Piecewise(p) = &back.function else { panic!() };
        assert_eq!(p.pieces[2].coefficient(Attribute::Rat), None);
    }

    #[test]
    fn future_version_is_rejected() {
        let mut m = ModelFile::new("x", presets::sigma_x(), ScoringConfig::default());
        m.version = "evrec/2".into();
        assert!(matches!(
            model_from_str(&to_decimal_json(&m)),
            Err(DataError::VersionMismatch { found, .. }) if found == "evrec/2"
        ));
        assert!(matches!(model_from_str("{}"), Err(DataError::Invalid(_))));
        assert!(matches!(model_from_str("not json"), Err(DataError::Invalid(_))));
    }

    fn form() -> impl Strategy<Value = LinearForm> {
        (
            any::<f64>().prop_filter("finite", |v| v.is_finite()),
            proptest::collection::btree_map(
                proptest::sample::select(Attribute::FACTORS.to_vec()),
                -1.0e6..1.0e6f64,
                0..5,
            ),
        )
            .prop_map(|(b, c)| LinearForm::new(b, c))
    }

    fn function() -> impl Strategy<Value = ScoringFunction> {
        prop_oneof![
            form().prop_map(ScoringFunction::Linear),
            (proptest::collection::vec(form(), 3), 0.0..5.0f64, 5.0..10.0f64).prop_map(|(pieces, a, b)| {
                ScoringFunction::Piecewise(Piecewise {
                    split: Attribute::Tyi,
                    thresholds: vec![a, b],
                    pieces,
                })
            }),
        ]
    }

    proptest! {
        #[test]
        fn model_round_trip_is_identity(f in function(), seed in any::<Option<u64>>()) {
            let mut m = ModelFile::new("m", f, ScoringConfig::default());
            m.seed = seed;
            m.regime = Some(Regime::IaXdTyi);
            m.metadata.insert("note".into(), "x".into());
            let back = model_from_str(&to_decimal_json(&m)).unwrap();
            prop_assert_eq!(back, m);
        }
    }
}

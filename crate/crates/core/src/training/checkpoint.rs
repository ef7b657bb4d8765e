//! Versioned text checkpoints. Values are written with 17 significant digits
//! so that loading restores every parameter bit for bit.
//!
//! ```text
//! deepexpress-checkpoint 1
//! [config]
//! history = 21
//! ...
//! [scalers]
//! target = <min> <max>
//! feature.temperature = <min> <max>
//! [params]
//! encoder.input.w 16,1
//! <values separated by spaces>
//! ...
//! end
//! ```

use std::fmt::Write as _;
use std::path::Path;

use crate::config::KeyValues;
use crate::data::{MinMaxScaler, ScalerState};
use crate::error::{Error, Result};
use crate::model::{DeepExpressModel, ModelConfig, Scalers};

pub const FORMAT: &str = "deepexpress-checkpoint";
pub const VERSION: &str = "1";

fn exact(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn to_text(model: &DeepExpressModel) -> String {
    let mut out = format!("{FORMAT} {VERSION}\n[config]\n");
    out.push_str(&model.config().to_config().render());
    out.push_str("[scalers]\n");
    let state = |s: &MinMaxScaler| {
        let st = s.state().expect("model scalers are always fitted");
        format!("{} {}", exact(st.min), exact(st.max))
    };
    let _ = writeln!(out, "target = {}", state(&model.scalers().target));
    for (f, s) in model.schema().features().iter().zip(&model.scalers().features) {
        if let Some(s) = s {
            let _ = writeln!(out, "feature.{} = {}", f.name, state(s));
        }
    }
    out.push_str("[params]\n");
    for (_, p) in model.store().iter() {
        let shape: Vec<String> = p.value.shape().iter().map(usize::to_string).collect();
        let _ = writeln!(out, "{} {}", p.name, shape.join(","));
        let values: Vec<String> = p.value.data().iter().map(|&x| exact(x)).collect();
        let _ = writeln!(out, "{}", values.join(" "));
    }
    out.push_str("end\n");
    out
}

pub fn save_checkpoint(model: &DeepExpressModel, path: &Path) -> Result<()> {
    std::fs::write(path, to_text(model)).map_err(|e| Error::file(path, e))
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    last: usize,
}

impl<'a> Lines<'a> {
    fn next(&mut self, expecting: &str) -> Result<&'a str> {
        match self.inner.next() {
            Some((i, l)) => {
                self.last = i + 1;
                Ok(l)
            }
            None => Err(Error::Parse {
                line: self.last + 1,
                message: format!("unexpected end of checkpoint, expected {expecting}"),
            }),
        }
    }

    fn error(&self, message: String) -> Error {
        Error::Parse {
            line: self.last,
            message,
        }
    }
}

fn parse_scaler(lines: &Lines<'_>, text: &str) -> Result<MinMaxScaler> {
    let parts: Vec<&str> = text.split_whitespace().collect();
    let nums: Vec<f64> = parts
        .iter()
        .map(|p| p.parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| lines.error(format!("invalid scaler `{text}`")))?;
    match nums[..] {
        [min, max] if min <= max => Ok(MinMaxScaler::from_state(ScalerState { min, max })),
        _ => Err(lines.error(format!("scaler needs `min max`, got `{text}`"))),
    }
}

pub fn from_text(text: &str) -> Result<DeepExpressModel> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
        last: 0,
    };
    let header = lines.next("format header").map_err(|_| Error::VersionMismatch {
        expected: VERSION.into(),
        found: "empty file".into(),
    })?;
    match header.split_once(' ') {
        Some((FORMAT, VERSION)) => {}
        Some((FORMAT, other)) => {
            return Err(Error::VersionMismatch {
                expected: VERSION.into(),
                found: other.into(),
            })
        }
        _ => {
            return Err(Error::VersionMismatch {
                expected: VERSION.into(),
                found: format!("unrecognised header `{header}`"),
            })
        }
    }
    if lines.next("[config]")? != "[config]" {
        return Err(lines.error("expected `[config]`".into()));
    }
    let mut config_text = String::new();
    loop {
        let l = lines.next("[scalers]")?;
        if l == "[scalers]" {
            break;
        }
        config_text.push_str(l);
        config_text.push('\n');
    }
    let kv = KeyValues::parse(&config_text)?;
    kv.reject_unknown(ModelConfig::KEYS)?;
    for key in ModelConfig::KEYS {
        if !kv.contains(key) {
            return Err(lines.error(format!("config is missing `{key}`")));
        }
    }
    let config = ModelConfig::from_config(&kv)?;
    let mut model = DeepExpressModel::init(&config, 0)?;

    let mut scalers = Scalers::identity(model.schema());
    let mut target = None;
    loop {
        let l = lines.next("[params]")?;
        if l == "[params]" {
            break;
        }
        let (key, value) = l
            .split_once('=')
            .ok_or_else(|| lines.error(format!("invalid scaler line `{l}`")))?;
        let (key, value) = (key.trim(), value.trim());
        let scaler = parse_scaler(&lines, value)?;
        if key == "target" {
            target = Some(scaler);
        } else if let Some(name) = key.strip_prefix("feature.") {
            let idx = model
                .schema()
                .features()
                .iter()
                .position(|f| f.name == name)
                .filter(|&i| scalers.features[i].is_some())
                .ok_or_else(|| lines.error(format!("no numerical feature `{name}`")))?;
            scalers.features[idx] = Some(scaler);
        } else {
            return Err(lines.error(format!("unknown scaler `{key}`")));
        }
    }
    scalers.target = target.ok_or_else(|| lines.error("missing target scaler".into()))?;
    model.set_scalers(scalers)?;

    let mut seen = vec![false; model.store().len()];
    loop {
        let l = lines.next("parameter or `end`")?;
        if l == "end" {
            break;
        }
        let (name, shape) = l
            .split_once(' ')
            .ok_or_else(|| lines.error(format!("invalid parameter header `{l}`")))?;
        let shape: Vec<usize> = if shape.is_empty() {
            Vec::new()
        } else {
            shape
                .split(',')
                .map(|d| d.parse())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| lines.error(format!("invalid shape `{shape}`")))?
        };
        let id = model
            .store()
            .id(name)
            .ok_or_else(|| lines.error(format!("unknown parameter `{name}`")))?;
        let expected = model.store().value(id).shape().to_vec();
        if shape != expected {
            return Err(Error::ParameterShape {
                name: name.into(),
                expected,
                found: shape,
            });
        }
        let values_line = lines.next("parameter values")?;
        let values: Vec<f64> = values_line
            .split_whitespace()
            .map(|v| v.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| lines.error(format!("invalid values for `{name}`")))?;
        let dest = model.store_mut().value_mut(id);
        if values.len() != dest.len() || values.iter().any(|v| !v.is_finite()) {
            return Err(lines.error(format!(
                "`{name}` needs {} finite values, got {}",
                dest.len(),
                values.len()
            )));
        }
        dest.data_mut().copy_from_slice(&values);
        seen[id.index()] = true;
    }
    if let Some(i) = seen.iter().position(|s| !s) {
        let name = model.store().iter().nth(i).map(|(_, p)| p.name.clone()).unwrap_or_default();
        return Err(Error::MissingParameter(name));
    }
    Ok(model)
}

pub fn load_checkpoint(path: &Path) -> Result<DeepExpressModel> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
    from_text(&text)
}

/// Load and require the stored configuration to equal `expected`.
pub fn load_checkpoint_matching(path: &Path, expected: &ModelConfig) -> Result<DeepExpressModel> {
    let model = load_checkpoint(path)?;
    check_config(model.config(), expected)?;
    Ok(model)
}

pub fn check_config(found: &ModelConfig, expected: &ModelConfig) -> Result<()> {
    let (f, e) = (found.to_config(), expected.to_config());
    for key in ModelConfig::KEYS {
        if f.raw(key) != e.raw(key) {
            return Err(Error::ConfigMismatch {
                field: key.to_string(),
                expected: e.raw(key).unwrap_or("").to_string(),
                found: f.raw(key).unwrap_or("").to_string(),
            });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hfr::FeatureValue;
    use crate::model::Variant;

    fn cfg(variant: Variant) -> ModelConfig {
        ModelConfig {
            history: 4,
            half_window: 1,
            enc_hidden: 5,
            dec_hidden: 5,
            score_dim: 3,
            embedding_dim: 2,
            numeric_hidden: 2,
            head_hidden: 3,
            variant,
            ..ModelConfig::default()
        }
    }

    fn scaled_model(variant: Variant) -> DeepExpressModel {
        let mut m = DeepExpressModel::init(&cfg(variant), 3).unwrap();
        let mut s = Scalers::identity(m.schema());
        s.target = MinMaxScaler::from_state(ScalerState {
            min: 12.345678901234567,
            max: 999.1,
        });
        s.features[0] = Some(MinMaxScaler::from_state(ScalerState { min: -4.9, max: 38.2 }));
        m.set_scalers(s).unwrap();
        m
    }

    #[test]
    fn roundtrip_is_bitwise() {
        for v in Variant::ALL {
            let m = scaled_model(v);
            let text = to_text(&m);
            let back = from_text(&text).unwrap();
            assert_eq!(to_text(&back), text);
            assert_eq!(back.scalers(), m.scalers());
            let window: Vec<Vec<FeatureValue>> = (0..3)
                .map(|i| {
                    vec![
                        FeatureValue::Numerical(0.3 * i as f64),
                        FeatureValue::Categorical(i),
                        FeatureValue::Categorical(1),
                        FeatureValue::Categorical(5 + i % 2),
                    ]
                })
                .collect();
            let h = [0.1, 0.5, 0.2, 0.9];
            assert_eq!(
                m.predict_scaled(&h, &window).unwrap().to_bits(),
                back.predict_scaled(&h, &window).unwrap().to_bits()
            );
        }
    }

    #[test]
    fn truncated_and_versioned_files_rejected() {
        let text = to_text(&scaled_model(Variant::Full));
        let cut = &text[..text.len() / 2];
        assert!(matches!(from_text(cut), Err(Error::Parse { .. })));
        assert!(matches!(from_text(""), Err(Error::VersionMismatch { .. })));
        let v2 = text.replacen(&format!("{FORMAT} {VERSION}"), &format!("{FORMAT} 2"), 1);
        assert!(matches!(from_text(&v2), Err(Error::VersionMismatch { .. })));
    }

    #[test]
    fn missing_and_misshaped_parameters_named() {
        let text = to_text(&scaled_model(Variant::PlainSeq2seq));
        let mut lines: Vec<&str> = text.lines().collect();
        let at = lines.iter().position(|l| l.starts_with("head.b2 ")).unwrap();
        lines.drain(at..at + 2);
        let err = from_text(&(lines.join("\n") + "\n")).unwrap_err();
        assert!(matches!(&err, Error::MissingParameter(n) if n == "head.b2"), "{err}");

        let bad = text.replace("head.b2 1\n", "head.b2 2\n");
        assert!(matches!(from_text(&bad), Err(Error::ParameterShape { .. })));
    }

    #[test]
    fn config_mismatch_named() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save_checkpoint(&scaled_model(Variant::Full), &path).unwrap();
        let other = ModelConfig {
            history: 7,
            ..cfg(Variant::Full)
        };
        let err = load_checkpoint_matching(&path, &other).unwrap_err();
        assert!(matches!(&err, Error::ConfigMismatch { field, .. } if field == "history"), "{err}");
        assert!(load_checkpoint_matching(&path, &cfg(Variant::Full)).is_ok());
    }
}

//! JSON channel-spec files.
//!
//! Named family:
//! ```json
//! {"family": "qutrit-ad", "params": {"p": 0.3, "decomposition": "optimal"}}
//! ```
//! Raw Kraus operators, row-major, each entry a `[re, im]` pair:
//! ```json
//! {"family": "raw", "dim": 2, "kraus": [[[[1,0],[0,0]],[[0,0],[1,0]]]]}
//! ```
//! Family names: `qubit-extreme` (`theta`, `phi`), `qubit-mixture`
//! (`lambda`, `theta`, `phi`, `theta2`, `phi2`), `qutrit-dephasing`
//! (`gamma`), `qutrit-ad` (`p`, optional `decomposition`), `raw`.

use std::path::Path;

use num_complex::Complex64;
use serde_json::{json, Map, Value};

use super::{validate_cptp, AdDecomposition, ChannelFamily, CptpReport, KrausSet};
use crate::error::{Error, Result};
use crate::linalg::ComplexMatrix;

/// A parsed channel-spec file. Raw operators are kept unvalidated so that
/// their deviation can be reported.
#[derive(Clone, Debug, PartialEq)]
pub enum ChannelSpec {
    Named(ChannelFamily),
    Raw(Vec<ComplexMatrix>),
}

impl ChannelSpec {
    pub fn family_name(&self) -> &'static str {
        match self {
            ChannelSpec::Named(f) => f.name(),
            ChannelSpec::Raw(_) => "raw",
        }
    }

    pub fn operators(&self) -> Result<Vec<ComplexMatrix>> {
        match self {
            ChannelSpec::Named(f) => Ok(f.build()?.into_operators()),
            ChannelSpec::Raw(ops) => Ok(ops.clone()),
        }
    }

    pub fn validate(&self) -> Result<CptpReport> {
        validate_cptp(&self.operators()?)
    }

    pub fn build(&self) -> Result<KrausSet> {
        match self {
            ChannelSpec::Named(f) => f.build(),
            ChannelSpec::Raw(ops) => KrausSet::new(ops.clone()),
        }
    }

    pub fn to_json(&self) -> Value {
        let family = self.family_name();
        let params = match self {
            ChannelSpec::Named(ChannelFamily::Raw(set)) => return raw_json(set.operators()),
            ChannelSpec::Raw(ops) => return raw_json(ops),
            ChannelSpec::Named(ChannelFamily::QubitExtreme { theta, phi }) => {
                json!({ "theta": theta, "phi": phi })
            }
            ChannelSpec::Named(ChannelFamily::QubitMixture { lambda, theta, phi, theta2, phi2 }) => {
                json!({ "lambda": lambda, "theta": theta, "phi": phi, "theta2": theta2, "phi2": phi2 })
            }
            ChannelSpec::Named(ChannelFamily::QutritDephasing { gamma }) => json!({ "gamma": gamma }),
            ChannelSpec::Named(ChannelFamily::QutritAmplitudeDamping { p, decomposition }) => {
                json!({ "p": p, "decomposition": decomposition })
            }
        };
        json!({ "family": family, "params": params })
    }
}

impl From<ChannelFamily> for ChannelSpec {
    fn from(f: ChannelFamily) -> Self {
        ChannelSpec::Named(f)
    }
}

fn raw_json(ops: &[ComplexMatrix]) -> Value {
    let dim = ops.first().map_or(0, |t| t.nrows());
    let kraus: Vec<Value> = ops
        .iter()
        .map(|t| {
            Value::Array(
                (0..t.nrows())
                    .map(|i| {
                        Value::Array((0..t.ncols()).map(|j| json!([t[(i, j)].re, t[(i, j)].im])).collect())
                    })
                    .collect(),
            )
        })
        .collect();
    json!({ "family": "raw", "dim": dim, "kraus": kraus })
}

fn parse_err(location: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Parse { location: location.into(), message: message.into() }
}

fn number(params: &Map<String, Value>, key: &str) -> Result<f64> {
    let loc = format!("params.{key}");
    params
        .get(key)
        .ok_or_else(|| parse_err(&loc, "missing field"))?
        .as_f64()
        .ok_or_else(|| parse_err(&loc, "expected a number"))
}

fn parse_raw(obj: &Map<String, Value>) -> Result<ChannelSpec> {
    let dim = obj
        .get("dim")
        .ok_or_else(|| parse_err("dim", "missing field"))?
        .as_u64()
        .filter(|&d| d >= 1)
        .ok_or_else(|| parse_err("dim", "expected a positive integer"))? as usize;
    let kraus = obj
        .get("kraus")
        .ok_or_else(|| parse_err("kraus", "missing field"))?
        .as_array()
        .ok_or_else(|| parse_err("kraus", "expected an array of matrices"))?;
    if kraus.is_empty() {
        return Err(parse_err("kraus", "at least one operator required"));
    }
    let mut ops = Vec::with_capacity(kraus.len());
    for (k, op) in kraus.iter().enumerate() {
        let rows = op
            .as_array()
            .filter(|r| r.len() == dim)
            .ok_or_else(|| parse_err(format!("kraus[{k}]"), format!("expected {dim} rows")))?;
        let mut m = ComplexMatrix::zeros(dim, dim);
        for (i, row) in rows.iter().enumerate() {
            let entries = row
                .as_array()
                .filter(|r| r.len() == dim)
                .ok_or_else(|| parse_err(format!("kraus[{k}][{i}]"), format!("expected {dim} entries")))?;
            for (j, z) in entries.iter().enumerate() {
                let loc = format!("kraus[{k}][{i}][{j}]");
                let pair = z
                    .as_array()
                    .filter(|p| p.len() == 2)
                    .ok_or_else(|| parse_err(&loc, "expected a [re, im] pair"))?;
                let re = pair[0].as_f64().ok_or_else(|| parse_err(&loc, "real part is not a number"))?;
                let im = pair[1].as_f64().ok_or_else(|| parse_err(&loc, "imaginary part is not a number"))?;
                m[(i, j)] = Complex64::new(re, im);
            }
        }
        ops.push(m);
    }
    Ok(ChannelSpec::Raw(ops))
}

/// Parses a channel spec from JSON text.
pub fn parse_channel_spec(text: &str) -> Result<ChannelSpec> {
    let value: Value = serde_json::from_str(text)
        .map_err(|e| parse_err(format!("line {}, column {}", e.line(), e.column()), e.to_string()))?;
    let obj = value.as_object().ok_or_else(|| parse_err("root", "expected a JSON object"))?;
    let family = obj
        .get("family")
        .ok_or_else(|| parse_err("family", "missing field"))?
        .as_str()
        .ok_or_else(|| parse_err("family", "expected a string"))?;
    if family == "raw" {
        return parse_raw(obj);
    }
    let empty = Map::new();
    let params = match obj.get("params") {
        Some(v) => v.as_object().ok_or_else(|| parse_err("params", "expected an object"))?,
        None => &empty,
    };
    let parsed = match family {
        "qubit-extreme" => ChannelFamily::QubitExtreme {
            theta: number(params, "theta")?,
            phi: number(params, "phi")?,
        },
        "qubit-mixture" => ChannelFamily::QubitMixture {
            lambda: number(params, "lambda")?,
            theta: number(params, "theta")?,
            phi: number(params, "phi")?,
            theta2: number(params, "theta2")?,
            phi2: number(params, "phi2")?,
        },
        "qutrit-dephasing" => ChannelFamily::QutritDephasing { gamma: number(params, "gamma")? },
        "qutrit-ad" => {
            let decomposition = match params.get("decomposition") {
                None => AdDecomposition::Canonical,
                Some(v) => serde_json::from_value(v.clone()).map_err(|_| {
                    parse_err("params.decomposition", "expected \"canonical\" or \"optimal\"")
                })?,
            };
            ChannelFamily::QutritAmplitudeDamping { p: number(params, "p")?, decomposition }
        }
        other => return Err(parse_err("family", format!("unknown family {other:?}"))),
    };
    Ok(ChannelSpec::Named(parsed))
}

/// Reads and parses a channel-spec file.
pub fn load_channel_spec(path: impl AsRef<Path>) -> Result<ChannelSpec> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))?;
    parse_channel_spec(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::identity;

    #[test]
    fn parses_named_families() {
        let spec = parse_channel_spec(r#"{"family": "qutrit-ad", "params": {"p": 0.3, "decomposition": "optimal"}}"#)
            .unwrap();
        assert_eq!(
            spec,
            ChannelSpec::Named(ChannelFamily::QutritAmplitudeDamping {
                p: 0.3,
                decomposition: AdDecomposition::Optimal
            })
        );
        assert!(spec.build().is_ok());
        let spec = parse_channel_spec(r#"{"family": "qubit-extreme", "params": {"theta": 0.1, "phi": 0.2}}"#).unwrap();
        assert_eq!(spec.family_name(), "qubit-extreme");
    }

    #[test]
    fn parses_raw_identity() {
        let text = r#"{"family": "raw", "dim": 2, "kraus": [[[[1,0],[0,0]],[[0,0],[1,0]]]]}"#;
        let spec = parse_channel_spec(text).unwrap();
        let set = spec.build().unwrap();
        assert_eq!(set.operators()[0], identity(2));
        assert_eq!(spec.validate().unwrap().deviation, 0.0);
    }

    #[test]
    fn reports_location_of_bad_fields() {
        let err = parse_channel_spec(r#"{"family": "qubit-extreme", "params": {"theta": "x", "phi": 0}}"#)
            .unwrap_err();
        assert!(matches!(err, Error::Parse { ref location, .. } if location == "params.theta"));

        let err = parse_channel_spec(r#"{"family": "raw", "dim": 2, "kraus": [[[[1,0],[0,0]],[[0,0]]]]}"#)
            .unwrap_err();
        assert!(matches!(err, Error::Parse { ref location, .. } if location == "kraus[0][1]"));

        let err = parse_channel_spec("{\n  \"family\": \n}").unwrap_err();
        assert!(matches!(err, Error::Parse { ref location, .. } if location.starts_with("line 3")));

        let err = parse_channel_spec(r#"{"family": "nope"}"#).unwrap_err();
        assert!(matches!(err, Error::Parse { ref location, .. } if location == "family"));
    }

    #[test]
    fn raw_invalid_set_reports_deviation() {
        let text = r#"{"family": "raw", "dim": 1, "kraus": [[[[0.9, 0]]]]}"#;
        let spec = parse_channel_spec(text).unwrap();
        let report = spec.validate().unwrap();
        assert!((report.deviation - 0.19).abs() < 1e-12);
        assert!(matches!(spec.build(), Err(Error::Validation { .. })));
    }

    #[test]
    fn json_round_trip() {
        let specs = [
            ChannelSpec::Named(ChannelFamily::QubitMixture { lambda: 0.5, theta: 0.1, phi: 0.2, theta2: 0.3, phi2: 0.4 }),
            ChannelSpec::Named(ChannelFamily::QutritDephasing { gamma: 1.5 }),
            ChannelSpec::Raw(crate::channels::build_ad_optimal_decomposition(0.2).unwrap().into_operators()),
        ];
        for spec in specs {
            let text = spec.to_json().to_string();
            assert_eq!(parse_channel_spec(&text).unwrap(), spec);
        }
    }
}

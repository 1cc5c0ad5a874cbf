//! Versioned JSON model files shared by every trainable model.
//!
//! Each file is a JSON object carrying `format_version` and `kind` next to
//! the model body. Floats are written in shortest round-trip form, so a
//! save/load cycle reproduces parameters bit for bit.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use super::DenseNetwork;
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u64 = 1;

pub fn to_json<T: Serialize>(kind: &str, body: &T) -> Result<String> {
    let mut obj = Map::new();
    obj.insert("format_version".into(), Value::from(FORMAT_VERSION));
    obj.insert("kind".into(), Value::from(kind));
    match serde_json::to_value(body)? {
        Value::Object(fields) => {
            for (k, v) in fields {
                obj.insert(k, v);
            }
        }
        other => {
            obj.insert("model".into(), other);
        }
    }
    Ok(serde_json::to_string(&Value::Object(obj))?)
}

pub fn from_json<T: DeserializeOwned>(kind: &str, text: &str) -> Result<T> {
    let value: Value = serde_json::from_str(text)?;
    let Value::Object(mut obj) = value else {
        return Err(Error::ModelFormat("model file must be a JSON object".into()));
    };
    match obj.remove("format_version").and_then(|v| v.as_u64()) {
        Some(FORMAT_VERSION) => {}
        Some(v) => return Err(Error::ModelFormat(format!("unsupported format_version {v}"))),
        None => return Err(Error::ModelFormat("missing format_version".into())),
    }
    match obj.remove("kind") {
        Some(Value::String(k)) if k == kind => {}
        Some(other) => return Err(Error::ModelFormat(format!("expected kind '{kind}', found {other}"))),
        None => return Err(Error::ModelFormat("missing kind".into())),
    }
    let body = obj.remove("model").unwrap_or(Value::Object(obj));
    Ok(serde_json::from_value(body)?)
}

pub fn save<T: Serialize>(kind: &str, body: &T, path: &Path) -> Result<()> {
    std::fs::write(path, to_json(kind, body)?).map_err(|e| Error::io(path, e))
}

pub fn load<T: DeserializeOwned>(kind: &str, path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_json(kind, &text)
}

pub const DENSE_KIND: &str = "dense";

impl DenseNetwork {
    pub fn to_json(&self) -> Result<String> {
        to_json(DENSE_KIND, self)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        from_json(DENSE_KIND, text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::Activation;
    use crate::rng::stream_from_seed;

    #[test]
    fn round_trip_is_bit_identical() {
        let mut rng = stream_from_seed(21);
        let net = DenseNetwork::init(&[15, 32, 32, 1], Activation::LeakyRelu { slope: 0.01 }, Activation::Identity, &mut rng).unwrap();
        let text = net.to_json().unwrap();
        let back = DenseNetwork::from_json(&text).unwrap();
        assert_eq!(back, net);
        let x: Vec<f64> = (0..15).map(|i| (i as f64 * 0.37).sin() * 40.0).collect();
        assert_eq!(net.forward(&x).unwrap()[0].to_bits(), back.forward(&x).unwrap()[0].to_bits());
        assert_eq!(back.to_json().unwrap(), text);
    }

    #[test]
    fn rejects_wrong_version_kind_and_shapes() {
        let net = DenseNetwork::init(&[2, 1], Activation::Relu, Activation::Identity, &mut stream_from_seed(1)).unwrap();
        let text = net.to_json().unwrap();
        assert!(DenseNetwork::from_json(&text.replace("\"format_version\":1", "\"format_version\":9")).is_err());
        assert!(DenseNetwork::from_json(&text.replace("\"dense\"", "\"gnn\"")).is_err());
        assert!(DenseNetwork::from_json(&text.replace("\"in_dim\":2", "\"in_dim\":3")).is_err());
        assert!(DenseNetwork::from_json("[1,2]").is_err());
    }
}

//! Versioned JSON artifact files.
//!
//! Every file is an object `{"format": <kind>, "version": <n>, "payload": ...}`.
//! Floats are written with shortest round-trip formatting, so a load after a
//! save reproduces every value bit for bit.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

pub const DATASET: &str = "reach-dataset";
pub const MODEL: &str = "reach-model";
pub const MAP: &str = "reach-map";
pub const PLAN: &str = "reach-plan";

#[derive(Serialize)]
struct EnvelopeOut<'a, P> {
    format: &'a str,
    version: u32,
    payload: &'a P,
}

#[derive(Deserialize)]
struct EnvelopeIn<P> {
    format: String,
    version: u32,
    payload: P,
}

pub fn to_string<P: Serialize>(kind: &'static str, payload: &P) -> Result<String> {
    let mut s = serde_json::to_string_pretty(&EnvelopeOut {
        format: kind,
        version: FORMAT_VERSION,
        payload,
    })?;
    s.push('\n');
    Ok(s)
}

pub fn from_str<P: DeserializeOwned>(kind: &'static str, text: &str) -> Result<P> {
    let env: EnvelopeIn<serde_json::Value> = serde_json::from_str(text).map_err(|e| Error::Format {
        kind,
        detail: e.to_string(),
    })?;
    if env.format != kind {
        return Err(Error::Format {
            kind,
            detail: format!("file holds {:?}", env.format),
        });
    }
    if env.version != FORMAT_VERSION {
        return Err(Error::Format {
            kind,
            detail: format!("version {} is not supported (expected {FORMAT_VERSION})", env.version),
        });
    }
    serde_json::from_value(env.payload).map_err(|e| Error::Format {
        kind,
        detail: e.to_string(),
    })
}

pub fn save<P: Serialize>(path: &Path, kind: &'static str, payload: &P) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, to_string(kind, payload)?)?;
    Ok(())
}

pub fn load<P: DeserializeOwned>(path: &Path, kind: &'static str) -> Result<P> {
    let text = fs::read_to_string(path).map_err(|e| Error::Format {
        kind,
        detail: format!("{}: {e}", path.display()),
    })?;
    from_str(kind, &text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrong_kind_and_version_are_rejected() {
        let text = to_string(MODEL, &vec![1.0f64, 0.1]).unwrap();
        assert!(matches!(from_str::<Vec<f64>>(MAP, &text), Err(Error::Format { .. })));
        let bumped = text.replace("\"version\": 1", "\"version\": 9");
        assert!(matches!(from_str::<Vec<f64>>(MODEL, &bumped), Err(Error::Format { .. })));
        assert_eq!(from_str::<Vec<f64>>(MODEL, &text).unwrap(), vec![1.0, 0.1]);
    }
}

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::NnError;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Envelope<T> {
    format_version: u32,
    payload: T,
}

/// Writes `value` as versioned JSON. Floats use shortest round-trip formatting,
/// so loading gives back bitwise-identical parameters.
pub fn save_json<T: Serialize>(path: &Path, value: &T) -> Result<(), NnError> {
    let env = Envelope { format_version: CHECKPOINT_VERSION, payload: value };
    let text = serde_json::to_string_pretty(&env).map_err(|e| NnError::Format(e.to_string()))?;
    fs::write(path, text)?;
    Ok(())
}

pub fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T, NnError> {
    let text = fs::read_to_string(path)?;
    let env: Envelope<T> = serde_json::from_str(&text)
        .map_err(|e| NnError::Format(format!("{}: {e}", path.display())))?;
    if env.format_version != CHECKPOINT_VERSION {
        return Err(NnError::Format(format!(
            "{}: unsupported checkpoint version {}",
            path.display(),
            env.format_version
        )));
    }
    Ok(env.payload)
}

//! JSON model files.
//!
//! ```json
//! {
//!   "dim": 2,
//!   "hamiltonian": [[0, 0], [1, 0], [1, 0], [0, 0]],
//!   "channels": [
//!     {"operator": [[0, 0], [0, 0], [1, 0], [0, 0]], "weight": 1, "phase": 0}
//!   ]
//! }
//! ```
//!
//! Matrices are row-major lists of `[re, im]` pairs. `phase` defaults to 0 and
//! `monitored` to `true`. Unknown keys are rejected.

use std::path::Path;

use qfpt_core::{CMatrix, JumpChannel, LindbladModel, C64};
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub dim: usize,
    pub hamiltonian: Vec<[f64; 2]>,
    pub channels: Vec<ChannelEntry>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelEntry {
    pub operator: Vec<[f64; 2]>,
    pub weight: f64,
    #[serde(default)]
    pub phase: f64,
    #[serde(default = "monitored_default")]
    pub monitored: bool,
}

fn monitored_default() -> bool {
    true
}

fn matrix(entries: &[[f64; 2]], dim: usize, what: &str) -> Result<CMatrix, CliError> {
    if entries.len() != dim * dim {
        return Err(CliError::Config(format!(
            "{what} has {} entries, expected dim² = {}",
            entries.len(),
            dim * dim
        )));
    }
    Ok(CMatrix::from_row_iterator(
        dim,
        dim,
        entries.iter().map(|[re, im]| C64::new(*re, *im)),
    ))
}

impl ModelFile {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("model file: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn into_model(self) -> Result<LindbladModel, CliError> {
        if self.dim == 0 {
            return Err(CliError::Config("dim must be positive".into()));
        }
        let h = matrix(&self.hamiltonian, self.dim, "hamiltonian")?;
        let channels = self
            .channels
            .iter()
            .enumerate()
            .map(|(k, ch)| {
                let op = matrix(&ch.operator, self.dim, &format!("channel {k} operator"))?;
                let mut c = JumpChannel::new(op, ch.weight).with_phase(ch.phase);
                if !ch.monitored {
                    c = c.unmonitored();
                }
                Ok(c)
            })
            .collect::<Result<Vec<_>, CliError>>()?;
        Ok(LindbladModel::new(h, channels)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const QUBIT: &str = r#"{
        "dim": 2,
        "hamiltonian": [[0, 0], [1, 0], [1, 0], [0, 0]],
        "channels": [{"operator": [[0, 0], [0, 0], [1, 0], [0, 0]], "weight": 1}]
    }"#;

    #[test]
    fn parses_row_major_entries() {
        let m = ModelFile::parse(QUBIT).unwrap().into_model().unwrap();
        assert_eq!(m.dim(), 2);
        // row-major: entry (1, 0) is |g⟩⟨e|
        assert_eq!(m.channels()[0].operator[(1, 0)], C64::new(1.0, 0.0));
        assert_eq!(m.channels()[0].operator[(0, 1)], C64::new(0.0, 0.0));
        assert!(m.channels()[0].monitored);
    }

    #[test]
    fn rejects_unknown_keys() {
        let text = QUBIT.replace("\"weight\"", "\"wieght\"");
        assert!(matches!(ModelFile::parse(&text), Err(CliError::Config(_))));
    }

    #[test]
    fn rejects_non_hermitian_hamiltonian() {
        let text = QUBIT.replacen("[1, 0], [1, 0]", "[1, 0], [2, 0]", 1);
        let err = ModelFile::parse(&text).unwrap().into_model().unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("entry"));
    }

    #[test]
    fn rejects_wrong_entry_count() {
        let text = QUBIT.replace("\"dim\": 2", "\"dim\": 3");
        assert!(ModelFile::parse(&text).unwrap().into_model().is_err());
    }
}

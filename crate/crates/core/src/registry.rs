//! Built-in models with pinned seeds. Each one is also shipped as a JSON file
//! under `models/` so it can be inspected or loaded by path.

use crate::error::{KmError, Result};
use crate::model::{generate_synthetic, load_model, KineticModel, SyntheticKind};

#[derive(Debug, Clone, Copy)]
pub struct RegistryEntry {
    pub name: &'static str,
    pub kind: SyntheticKind,
    pub seed: u64,
    pub dim: usize,
    /// Coercivity margin of the hypothesis report at the pinned seed.
    pub golden_delta: f64,
}

pub const REGISTRY: [RegistryEntry; 4] = [
    RegistryEntry { name: "gnl-min", kind: SyntheticKind::GnlMin, seed: 24, dim: 5, golden_delta: 0.678763187662492 },
    RegistryEntry { name: "gnl-rich", kind: SyntheticKind::GnlRich, seed: 1, dim: 8, golden_delta: 0.6300666820007402 },
    RegistryEntry { name: "ldg-min", kind: SyntheticKind::LdgMin, seed: 3, dim: 6, golden_delta: 0.6011838116296261 },
    RegistryEntry { name: "nonchar", kind: SyntheticKind::NonChar, seed: 1, dim: 6, golden_delta: 0.6002945148795222 },
];

pub fn entry(name: &str) -> Option<&'static RegistryEntry> {
    REGISTRY.iter().find(|e| e.name == name)
}

impl RegistryEntry {
    /// Generates the model, optionally with a different seed.
    pub fn build(&self, seed: Option<u64>) -> Result<KineticModel> {
        let mut m = generate_synthetic(self.kind, seed.unwrap_or(self.seed), self.dim)?;
        m.name = self.name.to_string();
        Ok(m)
    }
}

/// A registry name or a path to a model file.
pub fn resolve_model(reference: &str, seed: Option<u64>) -> Result<KineticModel> {
    if let Some(e) = entry(reference) {
        return e.build(seed);
    }
    let path = std::path::Path::new(reference);
    if path.is_file() {
        return load_model(&std::fs::read(path)?);
    }
    Err(KmError::ModelNotFound(reference.to_string()))
}

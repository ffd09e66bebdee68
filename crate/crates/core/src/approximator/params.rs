use alloc::vec::Vec;

use crate::{Error, Result};

/// Immutable, versioned flat parameter vector.
///
/// Once built a snapshot is never mutated; updates produce a new snapshot
/// with a higher version.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSnapshot {
    version: u64,
    spec_hash: u64,
    values: Vec<f64>,
}

impl ParamSnapshot {
    pub fn new(version: u64, spec_hash: u64, values: Vec<f64>) -> Self {
        Self {
            version,
            spec_hash,
            values,
        }
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn spec_hash(&self) -> u64 {
        self.spec_hash
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Successor snapshot carrying `values`.
    pub fn successor(&self, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), self.values.len());
        Self {
            version: self.version + 1,
            spec_hash: self.spec_hash,
            values,
        }
    }

    /// Same values under an explicit version (used for target-network copies).
    pub fn with_version(&self, version: u64) -> Self {
        Self {
            version,
            spec_hash: self.spec_hash,
            values: self.values.clone(),
        }
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

/// Gradient in the layout of [`ParamSnapshot::values`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradVector(Vec<f64>);

impl GradVector {
    pub fn zeros(len: usize) -> Self {
        Self(alloc::vec![0.0; len])
    }

    /// Wraps `values`, rejecting NaN or infinite entries.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        check_finite(&values)?;
        Ok(Self(values))
    }

    #[cfg(test)]
    pub(crate) fn from_raw(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn scale(&mut self, factor: f64) {
        self.0.iter_mut().for_each(|g| *g *= factor);
    }

    pub fn check_finite(&self) -> Result<()> {
        check_finite(&self.0)
    }

    pub fn into_values(self) -> Vec<f64> {
        self.0
    }
}

fn check_finite(values: &[f64]) -> Result<()> {
    match values.iter().position(|g| !g.is_finite()) {
        Some(i) => Err(Error::NonFiniteGradient(i)),
        None => Ok(()),
    }
}

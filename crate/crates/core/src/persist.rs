//! Versioned JSON bundles holding a fitted model and the history it
//! continues from.

use std::fs;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::model::FittedModel;

pub const BUNDLE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBundle {
    pub format_version: u32,
    pub model_id: String,
    pub asset_names: Vec<String>,
    /// Last date of the training window.
    pub trained_through: Option<NaiveDate>,
    pub model: FittedModel,
    /// Trailing raw daily returns used to start simulations.
    pub history: Matrix,
}

impl ModelBundle {
    pub fn new(
        model_id: impl Into<String>,
        asset_names: Vec<String>,
        trained_through: Option<NaiveDate>,
        model: FittedModel,
        history: Matrix,
    ) -> Result<Self> {
        let b = Self {
            format_version: BUNDLE_VERSION,
            model_id: model_id.into(),
            asset_names,
            trained_through,
            model,
            history,
        };
        b.validate()?;
        Ok(b)
    }

    fn validate(&self) -> Result<()> {
        if self.format_version != BUNDLE_VERSION {
            return Err(Error::BundleVersion {
                found: self.format_version,
                expected: BUNDLE_VERSION,
            });
        }
        let n = self.model.n_assets();
        if self.asset_names.len() != n || self.history.cols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: self.history.cols(),
            });
        }
        if self.history.as_slice().len() != self.history.rows() * n {
            return Err(Error::Data("bundle history has inconsistent shape".into()));
        }
        if self.history.rows() < self.model.min_history() {
            return Err(Error::InsufficientData {
                needed: self.model.min_history(),
                got: self.history.rows(),
            });
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Header {
            format_version: u32,
        }
        let header: Header = serde_json::from_str(text)?;
        if header.format_version != BUNDLE_VERSION {
            return Err(Error::BundleVersion {
                found: header.format_version,
                expected: BUNDLE_VERSION,
            });
        }
        let b: ModelBundle = serde_json::from_str(text)?;
        b.validate()?;
        Ok(b)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

//! Estimation results shared by the closed-form and likelihood estimators.

use serde::{Deserialize, Serialize};

use crate::hazard::Alpha;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub iterations: usize,
    pub final_grad_norm: f64,
    pub log_likelihood: f64,
    pub converged: bool,
    /// Newton steps that fell back to gradient ascent.
    #[serde(default)]
    pub fallbacks: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub objective_trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateResult {
    pub method: String,
    pub beta: Vec<f64>,
    pub alpha: Alpha,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vartheta: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha2: Option<f64>,
    pub diagnostics: FitDiagnostics,
}

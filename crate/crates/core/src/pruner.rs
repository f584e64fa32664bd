//! Iterative task refinement: refit, find threshold violations, remove the
//! single worst removable task, repeat.
//!
//! A construct never drops below `min_indicators` task indicators. When every
//! violator of a construct is protected by that rule the task closest to
//! meeting the thresholds is kept and a fallback note records it.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::diagnostics::{benchmark_report, DiagnosticsReport};
use crate::error::{Error, Result};
use crate::estimator::{fit, EstimatorConfig, FittedModel};
use crate::model::{Level, Taxonomy, ValidatedDataset};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PruneConfig {
    pub vif_threshold: f64,
    pub loading_threshold: f64,
    pub min_indicators: usize,
    pub estimator: EstimatorConfig,
}

impl Default for PruneConfig {
    fn default() -> Self {
        Self {
            vif_threshold: 5.0,
            loading_threshold: 0.75,
            min_indicators: 2,
            estimator: EstimatorConfig::default(),
        }
    }
}

impl PruneConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.vif_threshold > 1.0) || !self.vif_threshold.is_finite() {
            return Err(Error::Config(format!(
                "VIF threshold must be a finite value above 1, got {}",
                self.vif_threshold
            )));
        }
        if !(self.loading_threshold > 0.0 && self.loading_threshold < 1.0) {
            return Err(Error::Config(format!(
                "loading threshold must lie in (0, 1), got {}",
                self.loading_threshold
            )));
        }
        self.estimator.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Reason {
    Vif,
    Loading,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub indicator: String,
    pub construct: String,
    pub reason: Reason,
    /// The offending VIF or loading.
    pub value: f64,
    pub severity: f64,
}

/// `vif / threshold`; above 1 means violation.
pub fn vif_severity(vif: f64, threshold: f64) -> f64 {
    vif / threshold
}

/// `(threshold − loading) / threshold`; above 0 means violation.
pub fn loading_severity(loading: f64, threshold: f64) -> f64 {
    (threshold - loading) / threshold
}

/// Every VIF and loading violation among first-order task indicators, in
/// report order. An indicator can appear once per reason.
pub fn find_violations(diag: &DiagnosticsReport, config: &PruneConfig) -> Vec<Violation> {
    let mut out = Vec::new();
    for c in diag.per_construct.iter().filter(|c| c.level == Level::First) {
        for ind in c.indicators.iter().filter(|i| !i.external) {
            if let Some(v) = ind.vif.filter(|v| *v > config.vif_threshold) {
                out.push(Violation {
                    indicator: ind.indicator.clone(),
                    construct: c.construct.clone(),
                    reason: Reason::Vif,
                    value: v,
                    severity: vif_severity(v, config.vif_threshold),
                });
            }
            if ind.loading < config.loading_threshold {
                out.push(Violation {
                    indicator: ind.indicator.clone(),
                    construct: c.construct.clone(),
                    reason: Reason::Loading,
                    value: ind.loading,
                    severity: loading_severity(ind.loading, config.loading_threshold),
                });
            }
        }
    }
    out
}

/// A protected construct whose violators were all retained.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FallbackNote {
    pub construct: String,
    pub retained: Vec<String>,
    /// Violator with the lowest severity: the one closest to the thresholds.
    pub closest: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Selection {
    /// The worst removable violator, by its larger severity.
    pub removal: Option<Violation>,
    pub fallback: Vec<FallbackNote>,
}

/// Per indicator, the violation with the larger severity (VIF first on ties).
fn worst_per_indicator(violations: &[Violation]) -> BTreeMap<&str, &Violation> {
    let mut worst: BTreeMap<&str, &Violation> = BTreeMap::new();
    for v in violations {
        worst
            .entry(v.indicator.as_str())
            .and_modify(|w| {
                if v.severity > w.severity || (v.severity == w.severity && v.reason < w.reason) {
                    *w = v;
                }
            })
            .or_insert(v);
    }
    worst
}

pub fn select_removal(violations: &[Violation], taxonomy: &Taxonomy, config: &PruneConfig) -> Selection {
    let worst = worst_per_indicator(violations);
    let removable = |v: &Violation| {
        taxonomy
            .construct(&v.construct)
            .is_some_and(|c| c.indicators.len() > config.min_indicators)
    };
    // BTreeMap iteration is in id order, so strict `>` keeps the
    // lexicographically first id among equal severities.
    let mut removal: Option<&Violation> = None;
    for v in worst.values().copied().filter(|v| removable(v)) {
        if removal.is_none_or(|r| v.severity > r.severity) {
            removal = Some(v);
        }
    }

    let mut protected: BTreeMap<&str, Vec<&Violation>> = BTreeMap::new();
    for v in worst.values().copied().filter(|v| !removable(v)) {
        protected.entry(v.construct.as_str()).or_default().push(v);
    }
    let fallback = protected
        .into_iter()
        .map(|(construct, vs)| {
            let closest = vs
                .iter()
                .fold(vs[0], |best, v| if v.severity < best.severity { v } else { best });
            FallbackNote {
                construct: construct.to_string(),
                retained: vs.iter().map(|v| v.indicator.clone()).collect(),
                closest: closest.indicator.clone(),
                message: format!(
                    "construct {construct:?} is at the minimum of {} tasks; violating tasks retained, \
                     {:?} is closest to the thresholds",
                    config.min_indicators, closest.indicator
                ),
            }
        })
        .collect();
    Selection {
        removal: removal.cloned(),
        fallback,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PruneStep {
    pub iteration: usize,
    pub indicator: String,
    pub construct: String,
    pub reason: Reason,
    pub value: f64,
    pub severity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Termination {
    /// No violations remain.
    Clean,
    /// Violations remain, all in constructs at the minimum size.
    Protected,
    /// Re-estimation failed after a removal; the final state is the last
    /// successful fit, before that removal.
    Error { indicator: String, message: String },
}

#[derive(Debug, Clone)]
pub struct PruneTrace {
    pub steps: Vec<PruneStep>,
    pub initial_report: DiagnosticsReport,
    pub final_taxonomy: Taxonomy,
    pub final_fit: FittedModel,
    pub final_report: DiagnosticsReport,
    pub remaining_violations: Vec<Violation>,
    pub fallback_notes: Vec<FallbackNote>,
    pub termination: Termination,
}

fn evaluate(data: &ValidatedDataset, config: &PruneConfig) -> Result<(FittedModel, DiagnosticsReport)> {
    let fitted = fit(data, &config.estimator)?;
    let report = benchmark_report(&fitted, data, None)?;
    Ok((fitted, report))
}

/// Run the refinement loop to its fixed point. Fails only if the initial
/// fit fails; later failures end the trace with `Termination::Error`.
pub fn prune(data: &ValidatedDataset, config: &PruneConfig) -> Result<PruneTrace> {
    config.validate()?;
    let mut current = data.clone();
    let (mut fitted, mut report) = evaluate(&current, config)?;
    let initial_report = report.clone();
    let mut steps = Vec::new();
    loop {
        let violations = find_violations(&report, config);
        let selection = select_removal(&violations, current.taxonomy(), config);
        let Some(chosen) = selection.removal else {
            let termination = if violations.is_empty() {
                Termination::Clean
            } else {
                Termination::Protected
            };
            return Ok(PruneTrace {
                steps,
                initial_report,
                final_taxonomy: current.taxonomy().clone(),
                final_fit: fitted,
                final_report: report,
                remaining_violations: violations,
                fallback_notes: selection.fallback,
                termination,
            });
        };
        let next = current.without_indicator(&chosen.indicator)?;
        match evaluate(&next, config) {
            Ok((f, r)) => {
                steps.push(PruneStep {
                    iteration: steps.len() + 1,
                    indicator: chosen.indicator,
                    construct: chosen.construct,
                    reason: chosen.reason,
                    value: chosen.value,
                    severity: chosen.severity,
                });
                current = next;
                fitted = f;
                report = r;
            }
            Err(e) => {
                return Ok(PruneTrace {
                    steps,
                    initial_report,
                    final_taxonomy: current.taxonomy().clone(),
                    final_fit: fitted,
                    remaining_violations: find_violations(&report, config),
                    final_report: report,
                    fallback_notes: Vec::new(),
                    termination: Termination::Error {
                        indicator: chosen.indicator,
                        message: e.to_string(),
                    },
                });
            }
        }
    }
}

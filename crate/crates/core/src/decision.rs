//! Rule table mapping a classified reading to an [`Advisory`]: DO-class
//! severity plus range checks on pH, temperature, and floc volume, each
//! firing a remediation action drawn from working biofloc practice.

use serde::{Deserialize, Serialize};

use crate::datamodel::{Advisory, DoClass, SensorFrame, Severity};

/// Rule ids as they appear in `Advisory::triggered_rules`.
pub mod rule_id {
    pub const LOW_DO: &str = "low_do";
    pub const FLOC_HIGH: &str = "floc_high";
    pub const PH_LOW: &str = "ph_low";
    pub const PH_HIGH: &str = "ph_high";
    pub const TEMP_OUT_OF_RANGE: &str = "temp_out_of_range";
}

/// Action text per rule id. Defaults echo the interventions practiced at
/// the study farms; the baking-soda wording is deliberately unquantified.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RuleActions {
    pub low_do: String,
    pub floc_high: String,
    pub ph_low: String,
    pub ph_high: String,
    pub temp_out_of_range: String,
    pub none_required: String,
}

impl Default for RuleActions {
    fn default() -> Self {
        RuleActions {
            low_do: "increase aeration".to_string(),
            floc_high: "filter out excess bioflocs".to_string(),
            ph_low: "raise pH with baking soda in a safe amount".to_string(),
            ph_high: "partial water exchange; move fish before adjusting pH".to_string(),
            temp_out_of_range: "adjust tank temperature".to_string(),
            none_required: "no action required".to_string(),
        }
    }
}

/// Thresholds and severity policy for the rule table. The numeric ranges
/// default to the observed operating ranges of the study tanks and are
/// fully configurable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RuleConfig {
    /// Safe pH band [min, max].
    pub ph_range: [f64; 2],
    /// Safe temperature band [min, max] in °C.
    pub temp_range: [f64; 2],
    /// Floc volume ceiling in ml.
    pub floc_max: f64,
    /// Severity per DO class, indexed by class. Must be non-increasing
    /// from class 0 to 3 so that a worse class never alerts more softly.
    pub class_severity: [Severity; 4],
    pub actions: RuleActions,
}

impl Default for RuleConfig {
    fn default() -> Self {
        RuleConfig {
            ph_range: [6.5, 8.5],
            temp_range: [25.0, 32.0],
            floc_max: 100.0,
            class_severity: [Severity::Critical, Severity::Warning, Severity::Info, Severity::Info],
            actions: RuleActions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DecisionError {
    #[error("invalid rule config: {0}")]
    InvalidConfig(String),
}

impl RuleConfig {
    pub fn validate(&self) -> Result<(), DecisionError> {
        let bad = |msg: String| Err(DecisionError::InvalidConfig(msg));
        let ordered = |r: &[f64; 2]| r[0].is_finite() && r[1].is_finite() && r[0] < r[1];
        if !ordered(&self.ph_range) {
            return bad(format!("ph_range {:?} needs finite min < max", self.ph_range));
        }
        if !ordered(&self.temp_range) {
            return bad(format!("temp_range {:?} needs finite min < max", self.temp_range));
        }
        if !self.floc_max.is_finite() || self.floc_max <= 0.0 {
            return bad(format!("floc_max {} must be positive", self.floc_max));
        }
        for w in self.class_severity.windows(2) {
            if w[1] > w[0] {
                return bad(format!(
                    "class severities {:?} must not increase toward higher classes",
                    self.class_severity
                ));
            }
        }
        Ok(())
    }
}

/// Apply the rule table to one classified reading.
///
/// Severity is the max of the configured class severity and a warning for
/// every violated range; the DO-class rule fires (with the aeration action)
/// whenever the class severity is warning or worse, so every non-info
/// advisory carries at least one action.
pub fn evaluate(
    frame: &SensorFrame,
    predicted: DoClass,
    probabilities: [f64; 4],
    config: &RuleConfig,
) -> Result<Advisory, DecisionError> {
    config.validate()?;

    let mut severity = config.class_severity[predicted.index()];
    let mut triggered_rules = Vec::new();
    let mut actions = Vec::new();
    let mut fire = |id: &str, action: &str| {
        triggered_rules.push(id.to_string());
        actions.push(action.to_string());
    };

    if config.class_severity[predicted.index()] >= Severity::Warning {
        fire(rule_id::LOW_DO, &config.actions.low_do);
    }
    let sample = &frame.sample;
    if sample.floc > config.floc_max {
        fire(rule_id::FLOC_HIGH, &config.actions.floc_high);
        severity = severity.max(Severity::Warning);
    }
    if sample.ph < config.ph_range[0] {
        fire(rule_id::PH_LOW, &config.actions.ph_low);
        severity = severity.max(Severity::Warning);
    } else if sample.ph > config.ph_range[1] {
        fire(rule_id::PH_HIGH, &config.actions.ph_high);
        severity = severity.max(Severity::Warning);
    }
    if sample.temp < config.temp_range[0] || sample.temp > config.temp_range[1] {
        fire(rule_id::TEMP_OUT_OF_RANGE, &config.actions.temp_out_of_range);
        severity = severity.max(Severity::Warning);
    }

    if triggered_rules.is_empty() {
        actions.push(config.actions.none_required.clone());
    }

    Ok(Advisory {
        device_id: frame.device_id.clone(),
        timestamp: frame.timestamp,
        predicted_class: predicted,
        probabilities,
        severity,
        actions,
        triggered_rules,
    })
}

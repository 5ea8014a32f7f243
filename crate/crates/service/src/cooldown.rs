//! Alert debouncing: at most one alert per (device, class) per cooldown
//! window. Time comes from the caller — the service passes frame
//! timestamps, so behavior is deterministic under replay.

use std::collections::HashMap;
use std::sync::Mutex;

use floc_core::datamodel::DoClass;

pub struct AlertGate {
    cooldown_secs: u64,
    last_alert: Mutex<HashMap<(String, DoClass), u64>>,
}

impl AlertGate {
    pub fn new(cooldown_secs: u64) -> AlertGate {
        AlertGate { cooldown_secs, last_alert: Mutex::new(HashMap::new()) }
    }

    /// True iff no alert for this (device, class) fired within the last
    /// `cooldown_secs`. State is updated only when this returns true.
    pub fn should_alert(&self, device_id: &str, class: DoClass, now: u64) -> bool {
        let mut last = self.last_alert.lock().expect("gate lock");
        let key = (device_id.to_string(), class);
        match last.get(&key) {
            Some(&prev) if now.saturating_sub(prev) < self.cooldown_secs => false,
            _ => {
                last.insert(key, now);
                true
            }
        }
    }
}

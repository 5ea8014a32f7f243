//! Device simulator: stands in for the microcontroller + probes, emitting
//! protocol frames per scenario, and generates the synthetic labeled
//! dataset used to certify that the classifier can learn.
//!
//! Baselines follow the first study tank's logs (temp 28–30 °C, pH ≈ 7,
//! TDS 1.3–1.75, floc 8–20 ml). Walk steps per frame: temp ±0.1 °C,
//! pH ±0.02, TDS ±0.02, floc ±1 ml.

use crate::datamodel::{DoClass, SensorFrame, WaterSample};
use crate::dataset::{LabeledDataset, DEFAULT_BIN_EDGES};
use crate::protocol::encode_frame;
use crate::rng::{stream, Rng};

/// Default epoch for simulated frames; fixed so that two runs with one
/// seed emit byte-identical sequences.
pub const DEFAULT_START_TS: u64 = 1_602_998_400;

/// Quiet-tank starting point in (temp, ph, tds, floc) order.
pub const NORMAL_BASELINE: [f64; 4] = [29.0, 7.0, 1.5, 14.0];
/// Bounds the normal walk reflects off, per feature.
pub const NORMAL_BAND: [[f64; 2]; 4] = [[28.0, 30.0], [6.8, 7.2], [1.3, 1.75], [8.0, 20.0]];
const WALK_STEP: [f64; 4] = [0.1, 0.02, 0.02, 1.0];

/// Synthetic cluster centers, one per DO class (class 0 first), in
/// (temp, ph, tds, floc) order. The class-0 center is also the `do_crash`
/// ramp target.
pub const CLUSTER_CENTERS: [[f64; 4]; 4] = [
    [34.0, 6.0, 8.0, 150.0],
    [31.0, 6.6, 5.0, 90.0],
    [29.0, 7.0, 1.6, 15.0],
    [26.0, 7.6, 1.0, 8.0],
];
/// Per-feature standard deviation within each synthetic cluster.
pub const CLUSTER_STD: [f64; 4] = [0.5, 0.1, 0.3, 4.0];
/// Center DO value per class; samples jitter ±0.4 mg/L, which stays
/// strictly inside the class's default bin.
pub const CLUSTER_DO: [f64; 4] = [1.5, 4.0, 6.0, 7.8];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioKind {
    /// Bounded random walk inside the quiet-tank bands.
    Normal,
    /// Ramp from the quiet baseline into the class-0 cluster region,
    /// reaching it at 70% of the duration and holding.
    DoCrash,
    /// pH climbs 0.02 per frame (capped at 14); everything else walks
    /// normally.
    PhDrift,
}

impl std::str::FromStr for ScenarioKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "normal" => Ok(ScenarioKind::Normal),
            "do-crash" | "do_crash" => Ok(ScenarioKind::DoCrash),
            "ph-drift" | "ph_drift" => Ok(ScenarioKind::PhDrift),
            other => Err(format!("unknown scenario {other:?} (normal|do-crash|ph-drift)")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub kind: ScenarioKind,
    pub devices: usize,
    /// Frames per second per device.
    pub rate: f64,
    pub duration_secs: f64,
    /// Probability that one payload byte of an emitted line is flipped
    /// after checksum computation.
    pub corrupt_prob: f64,
    pub seed: u64,
    pub start_timestamp: u64,
}

impl Scenario {
    pub fn new(kind: ScenarioKind, seed: u64) -> Scenario {
        Scenario {
            kind,
            devices: 1,
            rate: 2.0,
            duration_secs: 30.0,
            corrupt_prob: 0.0,
            seed,
            start_timestamp: DEFAULT_START_TS,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.devices == 0 {
            return Err("devices must be >= 1".to_string());
        }
        if !self.rate.is_finite() || self.rate <= 0.0 {
            return Err(format!("rate {} must be finite and > 0", self.rate));
        }
        if !self.duration_secs.is_finite() || self.duration_secs <= 0.0 {
            return Err(format!("duration {} must be finite and > 0", self.duration_secs));
        }
        if !(0.0..=1.0).contains(&self.corrupt_prob) {
            return Err(format!("corrupt_prob {} must be in [0, 1]", self.corrupt_prob));
        }
        Ok(())
    }

    /// Frames each device emits over the scenario duration.
    pub fn frames_per_device(&self) -> u64 {
        ((self.rate * self.duration_secs).floor() as u64).max(1)
    }
}

/// Per-device frame generator. Independent devices get independent RNG
/// streams derived from the scenario seed.
pub struct FrameGen {
    scenario: Scenario,
    device_id: String,
    state: [f64; 4],
    frame_index: u64,
    total_frames: u64,
    rng: Rng,
}

impl FrameGen {
    pub fn new(scenario: &Scenario, device_index: usize) -> FrameGen {
        FrameGen {
            scenario: scenario.clone(),
            device_id: format!("SIM-{device_index:02}"),
            state: NORMAL_BASELINE,
            frame_index: 0,
            total_frames: scenario.frames_per_device(),
            rng: Rng::with_stream(scenario.seed, stream::WALK_BASE + device_index as u64),
        }
    }

    pub fn device_id(&self) -> &str {
        &self.device_id
    }

    /// Whether the scenario duration has been exhausted.
    pub fn done(&self) -> bool {
        self.frame_index >= self.total_frames
    }

    fn walk(&mut self) {
        for k in 0..4 {
            let step = WALK_STEP[k] * (2.0 * self.rng.next_f64() - 1.0);
            self.state[k] = (self.state[k] + step).clamp(NORMAL_BAND[k][0], NORMAL_BAND[k][1]);
        }
    }

    fn advance(&mut self) {
        match self.scenario.kind {
            ScenarioKind::Normal => self.walk(),
            ScenarioKind::DoCrash => {
                // Linear ramp toward the class-0 center, arriving at 70% of
                // the duration, plus walk-sized jitter.
                let ramp_frames = ((self.total_frames as f64) * 0.7).max(1.0);
                let progress = (self.frame_index as f64 / ramp_frames).min(1.0);
                let target = CLUSTER_CENTERS[DoClass::Shallow.index()];
                for k in 0..4 {
                    let jitter = WALK_STEP[k] * (2.0 * self.rng.next_f64() - 1.0);
                    let base = NORMAL_BASELINE[k] + (target[k] - NORMAL_BASELINE[k]) * progress;
                    self.state[k] = clamp_feature(k, base + jitter);
                }
            }
            ScenarioKind::PhDrift => {
                self.walk();
                let ph = NORMAL_BASELINE[1] + 0.02 * self.frame_index as f64;
                self.state[1] = ph.min(14.0);
            }
        }
    }

    /// Produce the next protocol line (trailing newline included), applying
    /// fault injection when configured.
    pub fn next_frame(&mut self) -> String {
        self.advance();
        let frame = SensorFrame {
            device_id: self.device_id.clone(),
            seq: self.frame_index + 1,
            timestamp: self.scenario.start_timestamp
                + (self.frame_index as f64 / self.scenario.rate) as u64,
            sample: WaterSample::new(self.state[0], self.state[1], self.state[2], self.state[3]),
        };
        self.frame_index += 1;
        let line = encode_frame(&frame).expect("simulator state stays within frame invariants");

        let corrupt = self.rng.next_f64() < self.scenario.corrupt_prob;
        if !corrupt {
            return line;
        }
        // Flip one payload byte after the checksum was computed. The
        // payload ends before ",HH\n"; xor with 0x01 always changes the
        // byte and keeps it ASCII, so the fold can no longer match.
        let mut bytes = line.into_bytes();
        let payload_len = bytes.len() - 4;
        let pos = self.rng.below(payload_len as u64) as usize;
        bytes[pos] ^= 0x01;
        String::from_utf8(bytes).expect("xor 0x01 keeps ASCII")
    }
}

fn clamp_feature(k: usize, v: f64) -> f64 {
    match k {
        0 => v.clamp(0.0, 59.9),
        1 => v.clamp(0.0, 14.0),
        _ => v.max(0.0),
    }
}

/// Synthetic labeled dataset: `n` samples in four well-separated Gaussian
/// clusters, one per DO class, classes balanced to ±1. This is the
/// learnability oracle's input; its separability is certified by a
/// nearest-centroid check kept in test code.
pub fn gen_labeled(n: usize, seed: u64) -> Result<LabeledDataset, String> {
    if n < 8 {
        return Err(format!("n = {n} too small for four balanced clusters (need >= 8)"));
    }
    let mut rng = Rng::with_stream(seed, stream::SYNTH);
    let mut samples = Vec::with_capacity(n);
    for class in DoClass::ALL {
        let k = class.index();
        let count = n / 4 + usize::from(k < n % 4);
        for _ in 0..count {
            let mut f = [0.0; 4];
            for dim in 0..4 {
                f[dim] = clamp_feature(
                    dim,
                    CLUSTER_CENTERS[k][dim] + CLUSTER_STD[dim] * rng.next_normal(),
                );
            }
            let do_mg_l = CLUSTER_DO[k] + rng.range_f64(-0.4, 0.4);
            samples.push(WaterSample::with_do(f[0], f[1], f[2], f[3], do_mg_l));
        }
    }
    LabeledDataset::from_rows(samples, DEFAULT_BIN_EDGES).map_err(|e| e.to_string())
}

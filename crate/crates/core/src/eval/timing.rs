use std::fmt;

use serde::{Deserialize, Serialize};

use crate::io::NATIVE_HZ;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
    /// Frames the stage processed.
    pub frames: usize,
}

/// Wall-clock record of pipeline stages, one entry per stage name.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TimingLog {
    pub stages: Vec<StageTiming>,
}

impl TimingLog {
    /// Replaces any earlier entry for the same stage.
    pub fn record(&mut self, stage: &str, seconds: f64, frames: usize) {
        self.stages.retain(|s| s.stage != stage);
        self.stages.push(StageTiming {
            stage: stage.to_string(),
            seconds,
            frames,
        });
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub stage: String,
    pub seconds: f64,
    pub frames: usize,
    /// Time the sensor took to record those frames.
    pub sensor_seconds: f64,
    /// `seconds / sensor_seconds`; at most 1 means real time or faster.
    pub realtime_ratio: f64,
    pub frames_per_second: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    pub rows: Vec<TimingRow>,
}

pub fn timing_report(log: &TimingLog) -> TimingReport {
    TimingReport {
        rows: log
            .stages
            .iter()
            .map(|s| {
                let sensor_seconds = s.frames as f64 / NATIVE_HZ;
                TimingRow {
                    stage: s.stage.clone(),
                    seconds: s.seconds,
                    frames: s.frames,
                    sensor_seconds,
                    realtime_ratio: if sensor_seconds > 0.0 { s.seconds / sensor_seconds } else { 0.0 },
                    frames_per_second: if s.seconds > 0.0 { s.frames as f64 / s.seconds } else { 0.0 },
                }
            })
            .collect(),
    }
}

impl fmt::Display for TimingReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<10} {:>10} {:>8} {:>10} {:>8} {:>10}", "stage", "seconds", "frames", "sensor_s", "ratio", "fps")?;
        for r in &self.rows {
            writeln!(
                f,
                "{:<10} {:>10.3} {:>8} {:>10.3} {:>8.3} {:>10.1}",
                r.stage, r.seconds, r.frames, r.sensor_seconds, r.realtime_ratio, r.frames_per_second
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_log_gives_empty_table() {
        assert!(timing_report(&TimingLog::default()).rows.is_empty());
    }

    #[test]
    fn ratio_against_sensor_time() {
        let mut log = TimingLog::default();
        log.record("render", 2.0, 120);
        log.record("fuse", 10.0, 120);
        log.record("render", 1.0, 120);
        let report = timing_report(&log);
        assert_eq!(report.rows.len(), 2);
        let render = report.rows.iter().find(|r| r.stage == "render").unwrap();
        assert_eq!(render.sensor_seconds, 4.0);
        assert_eq!(render.realtime_ratio, 0.25);
        assert_eq!(render.frames_per_second, 120.0);
        assert!(report.to_string().contains("render"));
    }
}

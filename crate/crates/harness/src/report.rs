//! Rollouts and time needed to reach a target smoothed reward.

use std::fmt;

use serde::Serialize;

use crate::metrics::MetricsRecord;

/// Trailing mean over the last `window` values (fewer at the start).
pub fn smoothed(values: &[f64], window: usize) -> Vec<f64> {
    assert!(window > 0, "smoothing window must be positive");
    let mut sum = 0.0;
    values
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            sum += v;
            if i >= window {
                sum -= values[i - window];
            }
            sum / (i + 1).min(window) as f64
        })
        .collect()
}

/// First step whose smoothed reward reaches the target.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TargetHit {
    pub step: usize,
    /// Rollouts used by the updates that produced the policy evaluated at `step`.
    pub rollouts: u64,
    /// Wall-clock time before `step`, when the run recorded it.
    pub wall_clock_ms: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub steps: usize,
    pub final_smoothed_reward: Option<f64>,
    pub hit: Option<TargetHit>,
}

pub fn summarize(records: &[MetricsRecord], target: f64, window: usize) -> RunSummary {
    let rewards: Vec<f64> = records.iter().map(|r| r.mean_reward).collect();
    let smooth = smoothed(&rewards, window);
    let hit = smooth.iter().position(|&r| r >= target).map(|i| {
        let (rollouts, wall_clock_ms) = if i == 0 {
            (0, records[0].wall_clock_ms.map(|_| 0.0))
        } else {
            (records[i - 1].cumulative_rollouts, records[i - 1].wall_clock_ms)
        };
        TargetHit { step: records[i].step, rollouts, wall_clock_ms }
    });
    RunSummary { steps: records.len(), final_smoothed_reward: smooth.last().copied(), hit }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EfficiencyReport {
    pub target: f64,
    pub smoothing_window: usize,
    pub baseline: RunSummary,
    pub sfpo: RunSummary,
    /// Baseline rollouts over slow-fast rollouts; absent unless both runs hit.
    pub rollout_ratio: Option<f64>,
    /// Same for wall-clock time; absent unless both runs recorded it.
    pub time_ratio: Option<f64>,
}

fn ratio(num: f64, den: f64) -> f64 {
    if num == den {
        1.0
    } else {
        num / den
    }
}

pub fn efficiency_report(
    baseline: &[MetricsRecord],
    sfpo: &[MetricsRecord],
    target: f64,
    window: usize,
) -> EfficiencyReport {
    let b = summarize(baseline, target, window);
    let s = summarize(sfpo, target, window);
    let (rollout_ratio, time_ratio) = match (&b.hit, &s.hit) {
        (Some(bh), Some(sh)) => (
            Some(ratio(bh.rollouts as f64, sh.rollouts as f64)),
            bh.wall_clock_ms.zip(sh.wall_clock_ms).map(|(x, y)| ratio(x, y)),
        ),
        _ => (None, None),
    };
    EfficiencyReport { target, smoothing_window: window, baseline: b, sfpo: s, rollout_ratio, time_ratio }
}

fn fmt_summary(f: &mut fmt::Formatter<'_>, name: &str, s: &RunSummary) -> fmt::Result {
    match &s.hit {
        Some(h) => {
            write!(f, "{name}: reached at step {} after {} rollouts", h.step, h.rollouts)?;
            if let Some(ms) = h.wall_clock_ms {
                write!(f, " ({ms:.1} ms)")?;
            }
            writeln!(f)
        }
        None => writeln!(f, "{name}: not reached in {} steps", s.steps),
    }
}

impl fmt::Display for EfficiencyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "target smoothed reward {} (window {})", self.target, self.smoothing_window)?;
        fmt_summary(f, "baseline", &self.baseline)?;
        fmt_summary(f, "sfpo", &self.sfpo)?;
        match self.rollout_ratio {
            Some(r) => writeln!(f, "rollout ratio (baseline / sfpo): {r:.3}")?,
            None => writeln!(f, "rollout ratio: not available")?,
        }
        match self.time_ratio {
            Some(r) => writeln!(f, "time ratio (baseline / sfpo, simulator only): {r:.3}"),
            None => writeln!(f, "time ratio: not available"),
        }
    }
}

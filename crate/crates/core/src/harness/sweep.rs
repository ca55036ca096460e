use super::clock::Clock;
use super::experiment::{run_experiment, ExperimentOptions, Launcher};
use super::sequence::Sequence;
use super::trial::Trial;
use crate::properties::Properties;
use std::collections::BTreeMap;

/// Parameter grid: every key maps to the values to try, in order.
pub type Grid = BTreeMap<String, Vec<String>>;

#[derive(Debug)]
pub struct SweepPoint {
    pub params: Properties,
    /// Directory-friendly name, e.g. `a=1_b=x`.
    pub label: String,
    pub result: Result<Trial, String>,
}

#[derive(Debug, Default)]
pub struct SweepReport {
    pub points: Vec<SweepPoint>,
    pub notes: Vec<String>,
}

/// Cartesian product of the grid, keys in sorted order with the first key
/// varying slowest.
pub fn combinations(grid: &Grid) -> Result<Vec<Properties>, String> {
    if let Some((key, _)) = grid.iter().find(|(_, values)| values.is_empty()) {
        return Err(format!("no values given for {key}"));
    }
    let mut out = vec![Properties::new()];
    for (key, values) in grid {
        let mut next = Vec::with_capacity(out.len() * values.len());
        for partial in &out {
            for value in values {
                let mut p = partial.clone();
                p.set(key.as_str(), value.as_str())
                    .map_err(|e| e.to_string())?;
                next.push(p);
            }
        }
        out = next;
    }
    Ok(out)
}

pub fn label(params: &Properties) -> String {
    params
        .iter()
        .map(|(k, v)| format!("{k}={}", v.replace(['/', '\\'], "_")))
        .collect::<Vec<_>>()
        .join("_")
}

/// Runs one complete experiment per grid point, each against a freshly
/// launched tracker. Failures are recorded per point.
pub fn sweep(
    launcher: &dyn Launcher,
    seq: &Sequence,
    base: &ExperimentOptions,
    grid: &Grid,
    clock: &mut dyn Clock,
) -> SweepReport {
    let mut report = SweepReport::default();
    if grid.is_empty() {
        report.notes.push("empty parameter grid".into());
        return report;
    }
    let combos = match combinations(grid) {
        Ok(c) => c,
        Err(e) => {
            report.notes.push(e);
            return report;
        }
    };
    for combo in combos {
        let opts = ExperimentOptions {
            init_params: base.init_params.merged(&combo),
            ..base.clone()
        };
        let result = run_experiment(launcher, seq, &opts, clock).map_err(|e| e.to_string());
        if let Err(e) = &result {
            report.notes.push(format!("{}: {e}", label(&combo)));
        }
        report.points.push(SweepPoint {
            label: label(&combo),
            params: combo,
            result,
        });
    }
    report
}

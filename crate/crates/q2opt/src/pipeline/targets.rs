use q2opt_core::approximator::ParamSnapshot;
use q2opt_core::Error as CoreError;

use crate::Result;

/// Delayed copies of the live parameters: `theta_bar_1` is an exponential
/// moving average, `theta_bar_2` a copy refreshed every `lag_period` steps.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetNets {
    pub theta_bar_1: ParamSnapshot,
    pub theta_bar_2: ParamSnapshot,
    pub ema_decay: f64,
    pub lag_period: u64,
    updates: u64,
}

impl TargetNets {
    pub fn new(live: &ParamSnapshot, ema_decay: f64, lag_period: u64) -> Self {
        Self {
            theta_bar_1: live.clone(),
            theta_bar_2: live.clone(),
            ema_decay,
            lag_period: lag_period.max(1),
            updates: 0,
        }
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }
}

/// One target step after a trainer update produced `live`.
pub fn update_targets(nets: &TargetNets, live: &ParamSnapshot) -> Result<TargetNets> {
    if live.len() != nets.theta_bar_1.len() || live.spec_hash() != nets.theta_bar_1.spec_hash() {
        return Err(CoreError::DimensionMismatch {
            what: "target parameters",
            expected: nets.theta_bar_1.len(),
            actual: live.len(),
        }
        .into());
    }
    let d = nets.ema_decay;
    let values = nets
        .theta_bar_1
        .values()
        .iter()
        .zip(live.values())
        .map(|(b, t)| d * b + (1.0 - d) * t)
        .collect();
    let theta_bar_1 = ParamSnapshot::new(live.version(), live.spec_hash(), values);
    let updates = nets.updates + 1;
    let theta_bar_2 = if updates.is_multiple_of(nets.lag_period) {
        live.clone()
    } else {
        nets.theta_bar_2.clone()
    };
    Ok(TargetNets {
        theta_bar_1,
        theta_bar_2,
        ema_decay: d,
        lag_period: nets.lag_period,
        updates,
    })
}

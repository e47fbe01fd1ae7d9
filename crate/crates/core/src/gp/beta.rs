use serde::{Deserialize, Serialize};

/// How the confidence scale β_n is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "lowercase")]
pub enum BetaRule {
    /// A constant, as used for experiment parity.
    Fixed { value: f64 },
    /// `B + σ √(2(γ̂_n + 1 + ln(1/δ)))` with γ̂_n the log-det information proxy.
    Theory { rkhs_bound: f64, noise_std: f64 },
}

/// β for confidence `delta` given the current information-gain proxy.
///
/// With nested data sets the proxy is non-decreasing, hence so is β.
pub fn beta(rule: &BetaRule, delta: f64, information_gain: f64) -> f64 {
    assert!(delta > 0.0 && delta <= 1.0, "delta must lie in (0, 1], got {delta}");
    match *rule {
        BetaRule::Fixed { value } => value,
        BetaRule::Theory {
            rkhs_bound,
            noise_std,
        } => rkhs_bound + noise_std * (2.0 * (information_gain.max(0.0) + 1.0 + (1.0 / delta).ln())).sqrt(),
    }
}

//! Named scenario presets.
//!
//! Two regime families, each built around a memoryless baseline and
//! three leader-coupled variants that keep the same direction averages
//! (so every preset pairs exactly with its regime's baseline):
//!
//! * `downward-*`: downgrades dominate (mean rates 0.1 up / 0.5 down),
//!   the fleet drifts toward HDV.
//! * `upward-*`: upgrades dominate (mean rates 0.5 up / 0.1 down).
//!
//! Within a family, `cascade` makes followers copy their leader's kind
//! in both directions (strong rates behind a matching leader),
//! `asymmetric` confines that coupling to the regime's dominant
//! direction and leaves the other memoryless, and `near-a`/`near-b`
//! perturb the baseline by a tenth of each mean in opposite
//! directions. All presets share the default fleet structure: gamma
//! 0.2, k 200, 3 s lockouts, a 50/50 origin split, and the standard
//! headway map at 10 m/s.

use pavflow::{Error, ModelParams};

use crate::config::ScenarioConfig;

/// Every name `preset` accepts, in display order.
pub const PRESET_NAMES: [&str; 11] = [
    "default",
    "downward-baseline",
    "downward-cascade",
    "downward-asymmetric",
    "downward-near-a",
    "downward-near-b",
    "upward-baseline",
    "upward-cascade",
    "upward-asymmetric",
    "upward-near-a",
    "upward-near-b",
];

/// Looks up a preset scenario by name. The rate tuple is
/// (lambda1, lambda2, lambda3, lambda4): upgrade behind HDV, downgrade
/// behind HDV, upgrade behind AV, downgrade behind AV.
pub fn preset(name: &str) -> Result<ScenarioConfig, Error> {
    let rates: (f64, f64, f64, f64) = match name {
        // The library default doubles as the upward cascade.
        "default" | "upward-cascade" => (0.1, 0.15, 0.9, 0.05),
        "downward-baseline" => (0.1, 0.5, 0.1, 0.5),
        "downward-cascade" => (0.05, 0.9, 0.15, 0.1),
        "downward-asymmetric" => (0.1, 0.9, 0.1, 0.1),
        "downward-near-a" => (0.09, 0.55, 0.11, 0.45),
        "downward-near-b" => (0.11, 0.45, 0.09, 0.55),
        "upward-baseline" => (0.5, 0.1, 0.5, 0.1),
        "upward-asymmetric" => (0.1, 0.1, 0.9, 0.1),
        "upward-near-a" => (0.45, 0.11, 0.55, 0.09),
        "upward-near-b" => (0.55, 0.09, 0.45, 0.11),
        other => {
            return Err(Error::InvalidParam {
                name: "preset",
                reason: format!(
                    "unknown preset `{other}`; expected one of {}",
                    PRESET_NAMES.join(", ")
                ),
            });
        }
    };
    let mut cfg = ScenarioConfig::default();
    cfg.label = name.to_owned();
    cfg.params = ModelParams::new(
        rates.0,
        rates.1,
        rates.2,
        rates.3,
        ModelParams::DEFAULT_GAMMA,
        ModelParams::DEFAULT_K,
        ModelParams::DEFAULT_T_LOCK,
        ModelParams::DEFAULT_T_LOCK,
    )?;
    Ok(cfg)
}

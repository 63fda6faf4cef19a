use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::kinematics::PlanarTwist;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TeleopAction {
    Forward,
    Back,
    Left,
    Right,
    Stop,
}

impl TeleopAction {
    pub fn parse(name: &str) -> Option<TeleopAction> {
        Some(match name {
            "forward" => TeleopAction::Forward,
            "back" => TeleopAction::Back,
            "left" => TeleopAction::Left,
            "right" => TeleopAction::Right,
            "stop" => TeleopAction::Stop,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TeleopConfig {
    /// m/s per key press
    pub linear_step: f64,
    /// rad/s per key press
    pub angular_step: f64,
    pub v_max: f64,
    pub w_max: f64,
    /// Key code to action. Action names themselves are always accepted too.
    pub keys: BTreeMap<String, TeleopAction>,
}

impl Default for TeleopConfig {
    fn default() -> Self {
        let keys = [
            ("w", TeleopAction::Forward),
            ("ArrowUp", TeleopAction::Forward),
            ("s", TeleopAction::Back),
            ("ArrowDown", TeleopAction::Back),
            ("a", TeleopAction::Left),
            ("ArrowLeft", TeleopAction::Left),
            ("d", TeleopAction::Right),
            ("ArrowRight", TeleopAction::Right),
            (" ", TeleopAction::Stop),
            ("Space", TeleopAction::Stop),
        ]
        .into_iter()
        .map(|(k, a)| (k.to_string(), a))
        .collect();
        Self {
            linear_step: 0.05,
            angular_step: 0.1,
            v_max: 0.5,
            w_max: 1.5,
            keys,
        }
    }
}

impl TeleopConfig {
    pub fn action_for(&self, key: &str) -> Option<TeleopAction> {
        self.keys
            .get(key)
            .copied()
            .or_else(|| TeleopAction::parse(key))
    }

    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [
            ("linear_step", self.linear_step),
            ("angular_step", self.angular_step),
            ("v_max", self.v_max),
            ("w_max", self.w_max),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(format!("teleop `{name}` must be strictly positive"));
            }
        }
        Ok(())
    }
}

/// Apply one action to the current command, saturating at the limits.
pub fn apply_action(current: PlanarTwist, action: TeleopAction, cfg: &TeleopConfig) -> PlanarTwist {
    let (v, w) = match action {
        TeleopAction::Forward => (current.v + cfg.linear_step, current.w),
        TeleopAction::Back => (current.v - cfg.linear_step, current.w),
        TeleopAction::Left => (current.v, current.w + cfg.angular_step),
        TeleopAction::Right => (current.v, current.w - cfg.angular_step),
        TeleopAction::Stop => (0.0, 0.0),
    };
    PlanarTwist {
        v: v.clamp(-cfg.v_max, cfg.v_max),
        w: w.clamp(-cfg.w_max, cfg.w_max),
    }
}

/// Map a key event to a new command. `None` means the key is unmapped and
/// the current command stands.
pub fn teleop_update(current: PlanarTwist, key: &str, cfg: &TeleopConfig) -> Option<PlanarTwist> {
    cfg.action_for(key).map(|a| apply_action(current, a, cfg))
}

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::geometry::Obstacle;
use super::kinematics::Pose;
use crate::model::SpeedLevel;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("workcell config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid workcell config: {0}")]
    Invalid(String),
}

/// Cruise speed per level, m/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpeedMap {
    pub very_fast: f64,
    pub fast: f64,
    pub normal: f64,
    pub slow: f64,
    pub very_slow: f64,
}

impl Default for SpeedMap {
    fn default() -> Self {
        SpeedMap { very_fast: 0.5, fast: 0.25, normal: 0.1, slow: 0.05, very_slow: 0.01 }
    }
}

impl SpeedMap {
    pub fn get(&self, level: SpeedLevel) -> f64 {
        match level {
            SpeedLevel::VeryFast => self.very_fast,
            SpeedLevel::Fast => self.fast,
            SpeedLevel::Normal => self.normal,
            SpeedLevel::Slow => self.slow,
            SpeedLevel::VerySlow => self.very_slow,
        }
    }
}

/// Workcell description loaded from JSON. Omitted fields take their
/// defaults; unknown fields are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorkcellConfig {
    pub dof: usize,
    pub home_joints: [f64; 6],
    pub bit_count: usize,
    pub obstacles: Vec<Obstacle>,
    pub contact_force: f64,
    pub noise_sigma: f64,
    pub filter_window: usize,
    pub dt: f64,
    pub speed_map: SpeedMap,
    pub perturbation_radius: f64,
    pub rng_seed: u64,
    pub tool_transform: Pose,
}

impl Default for WorkcellConfig {
    fn default() -> Self {
        WorkcellConfig {
            dof: 6,
            home_joints: [0.0; 6],
            bit_count: 8,
            obstacles: Vec::new(),
            contact_force: 50.0,
            noise_sigma: 0.5,
            filter_window: 5,
            dt: 0.008,
            speed_map: SpeedMap::default(),
            perturbation_radius: 0.01,
            rng_seed: 0,
            tool_transform: Pose::IDENTITY,
        }
    }
}

impl WorkcellConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: WorkcellConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.dof != 6 {
            return bad(format!("dof must be 6, got {}", self.dof));
        }
        if self.home_joints.iter().any(|v| !v.is_finite()) {
            return bad("home_joints must be finite".into());
        }
        if self.bit_count == 0 {
            return bad("bit_count must be positive".into());
        }
        if !(self.contact_force > 0.0 && self.contact_force.is_finite()) {
            return bad("contact_force must be > 0".into());
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad("noise_sigma must be >= 0".into());
        }
        if self.filter_window == 0 {
            return bad("filter_window must be positive".into());
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad("dt must be > 0".into());
        }
        if !(self.perturbation_radius >= 0.0 && self.perturbation_radius.is_finite()) {
            return bad("perturbation_radius must be >= 0".into());
        }
        if !self.tool_transform.is_finite() {
            return bad("tool_transform must be finite".into());
        }
        let speeds: Vec<f64> = SpeedLevel::ALL.iter().map(|l| self.speed_map.get(*l)).collect();
        if speeds.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return bad("speed_map values must be positive".into());
        }
        if speeds.windows(2).any(|w| w[0] <= w[1]) {
            return bad("speed_map must strictly decrease from very_fast to very_slow".into());
        }
        for (i, ob) in self.obstacles.iter().enumerate() {
            if (0..3).any(|k| ob.min[k] >= ob.max[k] || !ob.min[k].is_finite() || !ob.max[k].is_finite()) {
                return bad(format!("obstacle {i}: min must be < max componentwise"));
            }
            if let Some(h) = ob.hole {
                for (j, &k) in h.axis.face_axes().iter().enumerate() {
                    let (c, e) = (h.center[j], h.half_extents[j]);
                    if e <= 0.0 || !c.is_finite() || !e.is_finite() {
                        return bad(format!("obstacle {i}: hole half-extents must be positive"));
                    }
                    if c - e < ob.min[k] || c + e > ob.max[k] {
                        return bad(format!("obstacle {i}: hole exceeds face bounds"));
                    }
                }
            }
            if let Some(cond) = ob.present_when {
                if cond.bit >= self.bit_count {
                    return bad(format!("obstacle {i}: present_when bit {} out of range", cond.bit));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_gives_defaults() {
        let cfg = WorkcellConfig::from_json("{}").unwrap();
        assert_eq!(cfg, WorkcellConfig::default());
        assert_eq!(cfg.dt, 0.008);
        assert_eq!(cfg.speed_map.get(SpeedLevel::Slow), 0.05);
    }

    #[test]
    fn unknown_key_rejected() {
        let err = WorkcellConfig::from_json(r#"{"dt": 0.01, "gravity": 9.81}"#).unwrap_err();
        assert!(err.to_string().contains("gravity"), "{err}");
        assert!(WorkcellConfig::from_json(r#"{"obstacles": [{"min": [0,0,0], "max": [1,1,1], "colour": 1}]}"#).is_err());
    }

    #[test]
    fn json_round_trip() {
        let cfg = WorkcellConfig {
            rng_seed: u64::MAX,
            obstacles: vec![Obstacle { min: [0.0; 3], max: [1.0; 3], hole: None, present_when: None }],
            ..WorkcellConfig::default()
        };
        assert_eq!(WorkcellConfig::from_json(&cfg.to_json()).unwrap(), cfg);
    }

    #[test]
    fn speed_map_must_decrease() {
        let text = r#"{"speed_map": {"very_fast": 0.5, "fast": 0.5, "normal": 0.1, "slow": 0.05, "very_slow": 0.01}}"#;
        assert!(matches!(WorkcellConfig::from_json(text), Err(ConfigError::Invalid(_))));
    }

    #[test]
    fn hole_must_fit_face() {
        let text = r#"{"obstacles": [{"min": [0,0,0], "max": [1,1,1],
            "hole": {"axis": "x", "center": [0.95, 0.5], "half_extents": [0.1, 0.1]}}]}"#;
        assert!(matches!(WorkcellConfig::from_json(text), Err(ConfigError::Invalid(_))));
    }

    #[test]
    fn nonpositive_values_rejected() {
        for text in [
            r#"{"dt": 0}"#,
            r#"{"contact_force": 0}"#,
            r#"{"filter_window": 0}"#,
            r#"{"bit_count": 0}"#,
            r#"{"noise_sigma": -1}"#,
        ] {
            assert!(WorkcellConfig::from_json(text).is_err(), "{text}");
        }
    }
}

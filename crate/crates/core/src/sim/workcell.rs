use std::collections::VecDeque;
use std::sync::Arc;

use nalgebra::Vector3;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use super::config::WorkcellConfig;
use super::kinematics::{CartesianKinematics, Joints, Kinematics, Pose};
use crate::model::{Direction, Frame};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("bit {bit} out of range (workcell has {count} bits)")]
    BitOutOfRange { bit: usize, count: usize },
    #[error("pose is unreachable")]
    Unreachable,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorkcellState {
    pub joints: Joints,
    pub io_bits: Vec<bool>,
    pub clock: f64,
    pub raw_force_history: VecDeque<f64>,
    pub in_contact: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorReading {
    pub raw: f64,
    pub filtered: f64,
    pub at: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub contact: bool,
    /// TCP translation during this step, m.
    pub advanced: f64,
    /// The target pose was reached exactly.
    pub reached: bool,
}

/// Simulated robot cell: state plus the fixed configuration it runs under.
#[derive(Clone)]
pub struct Workcell {
    config: WorkcellConfig,
    kinematics: Arc<dyn Kinematics>,
    state: WorkcellState,
}

impl std::fmt::Debug for Workcell {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Workcell").field("config", &self.config).field("state", &self.state).finish()
    }
}

fn sub3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn norm3(v: [f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

fn lerp3(a: [f64; 3], d: [f64; 3], t: f64) -> [f64; 3] {
    [a[0] + t * d[0], a[1] + t * d[1], a[2] + t * d[2]]
}

impl Workcell {
    pub fn new(config: WorkcellConfig) -> Self {
        Self::with_kinematics(config, Arc::new(CartesianKinematics))
    }

    pub fn with_kinematics(config: WorkcellConfig, kinematics: Arc<dyn Kinematics>) -> Self {
        let state = WorkcellState {
            joints: config.home_joints,
            io_bits: vec![false; config.bit_count],
            clock: 0.0,
            raw_force_history: VecDeque::with_capacity(config.filter_window + 1),
            in_contact: false,
        };
        Workcell { config, kinematics, state }
    }

    pub fn config(&self) -> &WorkcellConfig {
        &self.config
    }

    pub fn state(&self) -> &WorkcellState {
        &self.state
    }

    pub fn kinematics(&self) -> &dyn Kinematics {
        self.kinematics.as_ref()
    }

    pub fn joints(&self) -> Joints {
        self.state.joints
    }

    /// Places the robot without simulating motion.
    pub fn set_joints(&mut self, joints: Joints) {
        self.state.joints = joints;
        self.state.in_contact = false;
    }

    pub fn tcp_pose(&self) -> Pose {
        self.kinematics.fk(&self.state.joints)
    }

    pub fn io_bits(&self) -> &[bool] {
        &self.state.io_bits
    }

    pub fn clock(&self) -> f64 {
        self.state.clock
    }

    pub fn advance_clock(&mut self, dt: f64) {
        if dt > 0.0 {
            self.state.clock += dt;
        }
    }

    pub fn set_io(&mut self, bit: usize, level: bool) -> Result<(), SimError> {
        let count = self.state.io_bits.len();
        let slot = self.state.io_bits.get_mut(bit).ok_or(SimError::BitOutOfRange { bit, count })?;
        *slot = level;
        Ok(())
    }

    /// Deepest intrusion of the TCP into any present obstacle.
    pub fn penetration(&self) -> f64 {
        let p = self.tcp_pose().position;
        self.config
            .obstacles
            .iter()
            .filter(|o| o.is_present(&self.state.io_bits))
            .map(|o| o.penetration(&p))
            .fold(0.0, f64::max)
    }

    /// One control cycle of straight-line motion toward `target`. Position
    /// and orientation share one path metric (1 rad counts as 1 m); motion
    /// stops at the first obstacle surface.
    pub fn step_motion(&mut self, target: &Pose, speed: f64, dt: f64) -> Result<StepOutcome, SimError> {
        let cur = self.tcp_pose();
        let dp = sub3(target.position, cur.position);
        let dq = sub3(target.orientation, cur.orientation);
        let remaining = (norm3(dp).powi(2) + norm3(dq).powi(2)).sqrt();
        let step = speed * dt;
        let final_step = remaining <= step;
        let mut next = if final_step {
            *target
        } else {
            let f = step / remaining;
            Pose { position: lerp3(cur.position, dp, f), orientation: lerp3(cur.orientation, dq, f) }
        };

        let seg = sub3(next.position, cur.position);
        let hit = self
            .config
            .obstacles
            .iter()
            .filter(|o| o.is_present(&self.state.io_bits))
            .filter_map(|o| o.first_contact(&cur.position, &next.position))
            .min_by(|a, b| a.t.total_cmp(&b.t));
        let contact = hit.is_some();
        if let Some(c) = hit {
            let mut pos = lerp3(cur.position, seg, c.t);
            if let Some((k, v)) = c.surface {
                pos[k] = v;
            }
            if c.t == 0.0 {
                pos = cur.position;
            }
            let dq_step = sub3(next.orientation, cur.orientation);
            next = Pose { position: pos, orientation: lerp3(cur.orientation, dq_step, c.t) };
        }

        let joints = self.kinematics.ik(&next).ok_or(SimError::Unreachable)?;
        let advanced = norm3(sub3(next.position, cur.position));
        self.state.joints = joints;
        self.state.in_contact = contact;
        self.state.clock += dt;
        Ok(StepOutcome { contact, advanced, reached: final_step && !contact })
    }

    /// Samples the force sensor: the contact force if touching, plus noise,
    /// pushed through the running-average filter.
    pub fn read_force<R: Rng + ?Sized>(&mut self, rng: &mut R) -> SensorReading {
        let noise = Normal::new(0.0, self.config.noise_sigma).expect("validated sigma").sample(rng);
        let base = if self.state.in_contact { self.config.contact_force } else { 0.0 };
        let raw = base + noise;
        let ring = &mut self.state.raw_force_history;
        ring.push_back(raw);
        while ring.len() > self.config.filter_window {
            ring.pop_front();
        }
        SensorReading { raw, filtered: self.filtered_force(), at: self.state.clock }
    }

    pub fn filtered_force(&self) -> f64 {
        let ring = &self.state.raw_force_history;
        if ring.is_empty() {
            return 0.0;
        }
        ring.iter().sum::<f64>() / ring.len() as f64
    }

    pub fn clear_force_history(&mut self) {
        self.state.raw_force_history.clear();
    }

    /// Unit vector of `direction` in base coordinates.
    pub fn direction_vector(&self, direction: Direction, frame: Frame) -> [f64; 3] {
        let local = match direction {
            Direction::Forward | Direction::X => Vector3::x(),
            Direction::Backwards => -Vector3::x(),
            Direction::Left | Direction::Y => Vector3::y(),
            Direction::Right => -Vector3::y(),
            Direction::Up | Direction::Z => Vector3::z(),
            Direction::Down => -Vector3::z(),
        };
        let v = match frame {
            Frame::Base => local,
            Frame::Tcp => self.tcp_pose().rotation() * local,
            Frame::Toolmount => self.tcp_pose().rotation() * self.config.tool_transform.rotation().inverse() * local,
        };
        let v = v.normalize();
        [v.x, v.y, v.z]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::geometry::{Axis, Hole, Obstacle};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn quiet(obstacles: Vec<Obstacle>) -> Workcell {
        Workcell::new(WorkcellConfig { noise_sigma: 0.0, obstacles, ..WorkcellConfig::default() })
    }

    fn ahead(dist: f64) -> Pose {
        Pose { position: [dist, 0.0, 0.0], orientation: [0.0; 3] }
    }

    fn run_to(w: &mut Workcell, target: &Pose, speed: f64) -> (f64, bool) {
        let mut total = 0.0;
        for _ in 0..100_000 {
            let out = w.step_motion(target, speed, 0.008).unwrap();
            total += out.advanced;
            if out.contact {
                return (total, true);
            }
            if out.reached {
                assert_eq!(w.tcp_pose(), *target);
                return (total, false);
            }
        }
        panic!("motion did not terminate");
    }

    fn wall(hole: Option<Hole>) -> Obstacle {
        Obstacle { min: [0.15, -0.1, -0.1], max: [0.2, 0.1, 0.1], hole, present_when: None }
    }

    #[test]
    fn free_space_single_step() {
        let mut w = quiet(vec![]);
        let out = w.step_motion(&ahead(0.30), 0.05, 0.008).unwrap();
        assert!(!out.contact);
        assert!((out.advanced - 0.0004).abs() < 1e-15);
        assert_eq!(w.clock(), 0.008);
    }

    #[test]
    fn wall_halts_motion_at_face() {
        let mut w = quiet(vec![wall(None)]);
        let (total, contact) = run_to(&mut w, &ahead(0.30), 0.05);
        assert!(contact);
        assert!((total - 0.15).abs() < 1e-9, "{total}");
        assert_eq!(w.tcp_pose().position[0], 0.15);
        assert!(w.state().in_contact);
    }

    #[test]
    fn hole_lets_motion_through() {
        let hole = Hole { axis: Axis::X, center: [0.0, 0.0], half_extents: [0.002, 0.002] };
        let mut w = quiet(vec![wall(Some(hole))]);
        let (total, contact) = run_to(&mut w, &ahead(0.30), 0.05);
        assert!(!contact);
        assert!((total - 0.30).abs() < 1e-9);
    }

    #[test]
    fn final_step_snaps_to_target() {
        let mut w = quiet(vec![]);
        let t = Pose { position: [0.1, -0.05, 0.02], orientation: [0.3, 0.0, 0.0] };
        run_to(&mut w, &t, 0.5);
        assert_eq!(w.tcp_pose(), t);
    }

    #[test]
    fn filter_zero_and_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut w = quiet(vec![wall(None)]);
        for _ in 0..5 {
            assert_eq!(w.read_force(&mut rng).filtered, 0.0);
        }
        w.clear_force_history();
        w.read_force(&mut rng);
        w.read_force(&mut rng);
        w.state.in_contact = true;
        w.read_force(&mut rng);
        w.read_force(&mut rng);
        let r = w.read_force(&mut rng);
        assert_eq!(Vec::from(w.state().raw_force_history.clone()), vec![0.0, 0.0, 50.0, 50.0, 50.0]);
        assert_eq!(r.filtered, 30.0);
    }

    #[test]
    fn noise_mean_is_unbiased() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut w = Workcell::new(WorkcellConfig::default());
        let n = 1000;
        let mean: f64 = (0..n).map(|_| w.read_force(&mut rng).raw).sum::<f64>() / n as f64;
        assert!(mean.abs() <= 3.0 * 0.5 / (n as f64).sqrt(), "{mean}");
    }

    #[test]
    fn io_bits() {
        let mut w = quiet(vec![]);
        w.set_io(0, true).unwrap();
        let snap = w.state().clone();
        w.set_io(0, true).unwrap();
        assert_eq!(w.state(), &snap);
        assert!(w.io_bits()[0]);
        assert_eq!(w.set_io(8, true), Err(SimError::BitOutOfRange { bit: 8, count: 8 }));
    }

    #[test]
    fn direction_vectors() {
        let mut w = quiet(vec![]);
        assert_eq!(w.direction_vector(Direction::Z, Frame::Base), [0.0, 0.0, 1.0]);
        assert_eq!(w.direction_vector(Direction::Forward, Frame::Tcp), [1.0, 0.0, 0.0]);
        w.set_joints([0.0, 0.0, 0.0, std::f64::consts::FRAC_PI_2, 0.0, 0.0]);
        let v = w.direction_vector(Direction::Forward, Frame::Tcp);
        for (a, b) in v.iter().zip([0.0, 1.0, 0.0]) {
            assert!((a - b).abs() < 1e-12, "{v:?}");
        }
        // identity tool transform: toolmount coincides with tcp
        assert_eq!(
            w.direction_vector(Direction::Left, Frame::Toolmount),
            w.direction_vector(Direction::Left, Frame::Tcp)
        );
    }

    #[test]
    fn present_when_gates_obstacle() {
        let mut ob = wall(None);
        ob.present_when = Some(crate::sim::geometry::BitCondition { bit: 1, level: false });
        let mut w = quiet(vec![ob]);
        w.set_io(1, true).unwrap();
        let (_, contact) = run_to(&mut w, &ahead(0.30), 0.5);
        assert!(!contact);
    }

    fn coord() -> impl Strategy<Value = f64> {
        -0.3f64..0.3
    }

    proptest! {
        #[test]
        fn never_penetrates(
            start in prop::array::uniform3(coord()),
            targets in prop::collection::vec(prop::array::uniform3(coord()), 1..6),
            hx in -0.05f64..0.05, hy in -0.05f64..0.05,
        ) {
            let hole = Hole { axis: Axis::X, center: [hx, hy], half_extents: [0.01, 0.02] };
            let mut w = quiet(vec![wall(Some(hole)), Obstacle { min: [-0.3, -0.3, -0.25], max: [0.3, 0.3, -0.2], hole: None, present_when: None }]);
            let p0 = Pose { position: start, orientation: [0.0; 3] };
            w.set_joints(w.kinematics().ik(&p0).unwrap());
            prop_assume!(w.penetration() == 0.0);
            let mut clock = w.clock();
            for t in targets {
                let target = Pose { position: t, orientation: [0.0; 3] };
                for _ in 0..200 {
                    let out = w.step_motion(&target, 0.25, 0.008).unwrap();
                    prop_assert!(w.penetration() <= 1e-9, "penetration {}", w.penetration());
                    prop_assert!(w.clock() >= clock);
                    clock = w.clock();
                    if out.contact || out.reached { break; }
                }
            }
        }

        #[test]
        fn filter_is_window_mean(k in 1usize..40, window in 1usize..9, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut w = Workcell::new(WorkcellConfig { filter_window: window, ..WorkcellConfig::default() });
            let mut raws = Vec::new();
            let mut last = None;
            for _ in 0..k {
                let r = w.read_force(&mut rng);
                raws.push(r.raw);
                last = Some(r);
            }
            let tail = &raws[raws.len() - k.min(window)..];
            let mean = tail.iter().sum::<f64>() / tail.len() as f64;
            prop_assert!((last.unwrap().filtered - mean).abs() <= 1e-12);
        }

        #[test]
        fn deterministic_given_seed(seed in any::<u64>()) {
            let run = || {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut w = quiet(vec![wall(None)]);
                let mut out = Vec::new();
                for _ in 0..400 {
                    w.step_motion(&ahead(0.3), 0.1, 0.008).unwrap();
                    out.push(w.read_force(&mut rng).filtered);
                }
                (out, w.state().clone())
            };
            prop_assert_eq!(run(), run());
        }
    }
}

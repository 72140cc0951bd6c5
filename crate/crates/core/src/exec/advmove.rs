use std::f64::consts::TAU;

use nalgebra::Vector3;
use rand::Rng;

use super::controller::{Abort, Controller};
use super::trace::Event;
use crate::model::*;
use crate::sim::Pose;
use crate::syntax::format_query;

/// Final result of an advanced move.
#[derive(Debug, Clone, PartialEq)]
pub enum AttemptOutcome {
    Success,
    /// Canonical text of the queries that did not hold. Never empty.
    Fail(Vec<String>),
}

/// Sensor-derived facts a query is evaluated against.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttemptContext {
    /// Distance advanced during the current attempt, m.
    pub covered: f64,
    /// Latest filtered force reading, N.
    pub filtered: f64,
}

/// All comparisons are strict.
pub fn evaluate_query(query: &Query, ctx: &AttemptContext) -> bool {
    match *query {
        Query::ForcesExceed(t) => ctx.filtered > t,
        Query::DistanceCovered(Comparison::MoreThan, v) => ctx.covered > v,
        Query::DistanceCovered(Comparison::LessThan, v) => ctx.covered < v,
    }
}

/// Two unit vectors completing `dir` to an orthonormal basis.
fn perpendicular_basis(dir: [f64; 3]) -> (Vector3<f64>, Vector3<f64>) {
    let d = Vector3::from(dir).normalize();
    let helper = if d.x.abs() <= d.y.abs() && d.x.abs() <= d.z.abs() {
        Vector3::x()
    } else if d.y.abs() <= d.z.abs() {
        Vector3::y()
    } else {
        Vector3::z()
    };
    let e1 = d.cross(&helper).normalize();
    let e2 = d.cross(&e1);
    (e1, e2)
}

/// Uniform sample from the disc of `radius` perpendicular to `dir`.
pub fn perturbation_offset<R: Rng + ?Sized>(dir: [f64; 3], radius: f64, rng: &mut R) -> [f64; 3] {
    let u: f64 = rng.random();
    let theta = TAU * rng.random::<f64>();
    let r = radius * u.sqrt();
    let (e1, e2) = perpendicular_basis(dir);
    let v = e1 * (r * theta.cos()) + e2 * (r * theta.sin());
    [v.x, v.y, v.z]
}

struct AttemptReport {
    covered: f64,
    filtered: f64,
    guard_tripped: bool,
    failed: Vec<String>,
}

impl<'p> Controller<'p> {
    pub(crate) fn execute_adv_move(&mut self, spec: &'p AdvMoveSpec) -> Result<AttemptOutcome, Abort> {
        if let Some(level) = spec.speed {
            self.set_speed(level)?;
        }
        let speed = self.workcell.config().speed_map.get(self.active_speed);
        let p0 = self.workcell.tcp_pose();
        let mut start = p0;
        let mut attempt = 0u32;
        'attempts: loop {
            attempt += 1;
            self.emit(Event::AttemptBegin { adv_move: spec.name.clone(), attempt })?;
            let report = self.attempt(spec, &start, speed)?;
            let success = report.failed.is_empty();
            self.emit(Event::AttemptEnd {
                adv_move: spec.name.clone(),
                attempt,
                covered: report.covered,
                filtered: report.filtered,
                guard_tripped: report.guard_tripped,
                success,
                failed: report.failed.clone(),
            })?;

            let behaviors = if success { &spec.on_success } else { &spec.on_fail };
            for b in behaviors {
                match b {
                    Behavior::ReturnToInitialPosition => {
                        // retract along the approach before leaving a perturbed start
                        self.move_to(&start, speed)?;
                        if start != p0 {
                            self.move_to(&p0, speed)?;
                        }
                    }
                    Behavior::RepeatWithPerturbation(n) => {
                        // a pending error means this move already gave up
                        if !success && self.pending_error().is_none() && attempt < 1 + n {
                            let dir = self.workcell.direction_vector(spec.motion.direction, spec.motion.frame);
                            let radius = self.workcell.config().perturbation_radius;
                            let off = perturbation_offset(dir, radius, &mut self.rng);
                            start = Pose {
                                position: [p0.position[0] + off[0], p0.position[1] + off[1], p0.position[2] + off[2]],
                                orientation: p0.orientation,
                            };
                            self.move_to(&start, speed)?;
                            continue 'attempts;
                        }
                    }
                    Behavior::ThrowError(e) => {
                        let err = self.signal_error(e)?;
                        if err.respond_after == RespondAfter::Immediately {
                            break;
                        }
                    }
                }
            }
            return Ok(if success { AttemptOutcome::Success } else { AttemptOutcome::Fail(report.failed) });
        }
    }

    fn attempt(&mut self, spec: &AdvMoveSpec, start: &Pose, speed: f64) -> Result<AttemptReport, Abort> {
        if let Some(c) = &spec.condition {
            let ctx = AttemptContext { covered: 0.0, filtered: self.workcell.filtered_force() };
            if !evaluate_query(c, &ctx) {
                return Ok(AttemptReport {
                    covered: 0.0,
                    filtered: ctx.filtered,
                    guard_tripped: false,
                    failed: vec![format_query(c)],
                });
            }
        }
        self.workcell.clear_force_history();
        let dir = self.workcell.direction_vector(spec.motion.direction, spec.motion.frame);
        let d = spec.motion.distance;
        let target = Pose {
            position: [start.position[0] + d * dir[0], start.position[1] + d * dir[1], start.position[2] + d * dir[2]],
            orientation: start.orientation,
        };
        let dt = self.workcell.config().dt;
        let mut covered = 0.0;
        let mut guard_tripped = false;
        let filtered = loop {
            let out = self.workcell.step_motion(&target, speed, dt).map_err(|e| Abort(e.to_string()))?;
            let reading = self.workcell.read_force(&mut self.rng);
            covered += out.advanced;
            self.emit(Event::MotionSample {
                advanced: out.advanced,
                contact: out.contact,
                raw: Some(reading.raw),
                filtered: Some(reading.filtered),
            })?;
            let ctx = AttemptContext { covered, filtered: reading.filtered };
            if spec.stop_if.as_ref().is_some_and(|q| evaluate_query(q, &ctx)) {
                guard_tripped = true;
                break reading.filtered;
            }
            // reached the end, or pressed against a surface with no progress
            if out.reached || (out.contact && out.advanced == 0.0) {
                break reading.filtered;
            }
        };
        let ctx = AttemptContext { covered, filtered };
        let failed = spec.eval_queries.iter().filter(|q| !evaluate_query(q, &ctx)).map(format_query).collect();
        Ok(AttemptReport { covered, filtered, guard_tripped, failed })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn query_comparisons_are_strict() {
        let c = |covered, filtered| AttemptContext { covered, filtered };
        assert!(evaluate_query(&Query::ForcesExceed(5.0), &c(0.0, 50.0)));
        assert!(!evaluate_query(&Query::ForcesExceed(5.0), &c(0.0, 5.0)));
        assert!(!evaluate_query(&Query::DistanceCovered(Comparison::MoreThan, 0.20), &c(0.20, 0.0)));
        assert!(evaluate_query(&Query::DistanceCovered(Comparison::LessThan, 0.20), &c(0.15, 0.0)));
    }

    #[test]
    fn perturbation_lies_in_perpendicular_disc() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for dir in [[1.0, 0.0, 0.0], [0.0, 0.0, -1.0], [0.6, 0.8, 0.0]] {
            for _ in 0..200 {
                let o = perturbation_offset(dir, 0.01, &mut rng);
                let dot: f64 = o.iter().zip(dir).map(|(a, b)| a * b).sum();
                let norm = o.iter().map(|v| v * v).sum::<f64>().sqrt();
                assert!(dot.abs() < 1e-15 && norm <= 0.01 + 1e-15);
            }
        }
    }

    #[test]
    fn perturbation_is_uniform_over_area() {
        // half the area of a disc lies within radius R/sqrt(2)
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 20_000;
        let inner = (0..n)
            .filter(|_| {
                let o = perturbation_offset([1.0, 0.0, 0.0], 1.0, &mut rng);
                (o[1] * o[1] + o[2] * o[2]) < 0.5
            })
            .count();
        let frac = inner as f64 / n as f64;
        assert!((frac - 0.5).abs() < 0.015, "{frac}");
    }
}

//! Axis-aligned obstacles with optional through-hole apertures, and the
//! segment query used to stop motion at the first contact.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }

    /// The two axes spanning a face perpendicular to `self`, in order.
    pub fn face_axes(self) -> [usize; 2] {
        match self {
            Axis::X => [1, 2],
            Axis::Y => [0, 2],
            Axis::Z => [0, 1],
        }
    }
}

/// Rectangular aperture running through the whole box along `axis`.
/// `center` and `half_extents` are given in the two face axes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Hole {
    pub axis: Axis,
    pub center: [f64; 2],
    pub half_extents: [f64; 2],
}

/// An I/O level that must hold for an obstacle to be present.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BitCondition {
    pub bit: usize,
    pub level: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Obstacle {
    pub min: [f64; 3],
    pub max: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hole: Option<Hole>,
    /// Fixture obstacles exist only while an I/O bit has a given level.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub present_when: Option<BitCondition>,
}

/// First point where a segment enters a solid, with the coordinate that
/// lies exactly on the surface crossed there.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Contact {
    pub t: f64,
    pub surface: Option<(usize, f64)>,
}

/// Parameter interval where a moving point lies strictly inside the open
/// slabs on `axes`, together with the entering surface.
fn slab_interval(a: &[f64; 3], b: &[f64; 3], lo: &[f64; 3], hi: &[f64; 3], axes: &[usize]) -> Option<Interval> {
    let mut iv = Interval { t0: f64::NEG_INFINITY, t1: f64::INFINITY, enter: None, exit: None };
    for &k in axes {
        let d = b[k] - a[k];
        if d == 0.0 {
            if a[k] <= lo[k] || a[k] >= hi[k] {
                return None;
            }
            continue;
        }
        let (t_lo, t_hi) = ((lo[k] - a[k]) / d, (hi[k] - a[k]) / d);
        let (t_in, t_out, face_in, face_out) =
            if d > 0.0 { (t_lo, t_hi, lo[k], hi[k]) } else { (t_hi, t_lo, hi[k], lo[k]) };
        if t_in > iv.t0 {
            iv.t0 = t_in;
            iv.enter = Some((k, face_in));
        }
        if t_out < iv.t1 {
            iv.t1 = t_out;
            iv.exit = Some((k, face_out));
        }
    }
    (iv.t0 < iv.t1).then_some(iv)
}

struct Interval {
    t0: f64,
    t1: f64,
    enter: Option<(usize, f64)>,
    exit: Option<(usize, f64)>,
}

impl Obstacle {
    pub fn is_present(&self, io_bits: &[bool]) -> bool {
        match self.present_when {
            None => true,
            Some(c) => io_bits.get(c.bit).copied().unwrap_or(false) == c.level,
        }
    }

    fn hole_bounds(&self) -> Option<([f64; 3], [f64; 3], [usize; 2])> {
        let h = self.hole?;
        let axes = h.axis.face_axes();
        let mut lo = [f64::NEG_INFINITY; 3];
        let mut hi = [f64::INFINITY; 3];
        for (i, &k) in axes.iter().enumerate() {
            lo[k] = h.center[i] - h.half_extents[i];
            hi[k] = h.center[i] + h.half_extents[i];
        }
        Some((lo, hi, axes))
    }

    /// Whether `p` lies in the solid part: inside the open box and outside
    /// the open hole prism.
    pub fn contains(&self, p: &[f64; 3]) -> bool {
        let in_box = (0..3).all(|k| self.min[k] < p[k] && p[k] < self.max[k]);
        if !in_box {
            return false;
        }
        match self.hole_bounds() {
            Some((lo, hi, axes)) => !axes.iter().all(|&k| lo[k] < p[k] && p[k] < hi[k]),
            None => true,
        }
    }

    /// How far `p` is inside the solid; zero when outside.
    pub fn penetration(&self, p: &[f64; 3]) -> f64 {
        if !self.contains(p) {
            return 0.0;
        }
        let mut depth = (0..3).map(|k| (p[k] - self.min[k]).min(self.max[k] - p[k])).fold(f64::INFINITY, f64::min);
        if let Some((lo, hi, axes)) = self.hole_bounds() {
            // distance from p to the aperture rectangle in the face plane
            let d2: f64 = axes
                .iter()
                .map(|&k| {
                    let gap = (lo[k] - p[k]).max(p[k] - hi[k]).max(0.0);
                    gap * gap
                })
                .sum();
            depth = depth.min(d2.sqrt());
        }
        depth
    }

    /// Smallest `t` in `[0, 1)` at which `a + t (b - a)` enters the solid.
    pub fn first_contact(&self, a: &[f64; 3], b: &[f64; 3]) -> Option<Contact> {
        let bx = slab_interval(a, b, &self.min, &self.max, &[0, 1, 2])?;
        let prism = self.hole_bounds().and_then(|(lo, hi, axes)| slab_interval(a, b, &lo, &hi, &axes));
        // first instant from which the box interior continues
        let lo = bx.t0.max(0.0);
        if lo >= bx.t1 {
            return None;
        }
        let (t, surface) = match prism {
            // the aperture covers the moments just after `lo`
            Some(pr) if pr.t0 <= lo && lo < pr.t1 => {
                if pr.t1 < bx.t1 {
                    (pr.t1, pr.exit)
                } else {
                    return None;
                }
            }
            _ if bx.t0 >= 0.0 => (bx.t0, bx.enter),
            // already inside the solid: no progress possible
            _ => (0.0, None),
        };
        (t < 1.0).then_some(Contact { t, surface })
    }
}

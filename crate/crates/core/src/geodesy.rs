//! Coordinate frames, the five-dimensional agent pose and discrete action kinematics.
//!
//! World frame: `x` east, `y` north, `z` altitude above the datum, all in meters.
//! Yaw is measured in degrees counterclockwise from `+x`; pitch in degrees with
//! negative values looking down. Moving forward is horizontal only: pitch orients
//! the camera and is never changed by an action.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

/// Altitude ceiling in meters.
pub const CEILING_M: f64 = 200.0;
/// Horizontal translation of one `move-forward`.
pub const FORWARD_STEP_M: f64 = 5.0;
/// Yaw change of one turn.
pub const TURN_STEP_DEG: f64 = 30.0;
/// Vertical translation of one `ascend` / `descend`.
pub const VERTICAL_STEP_M: f64 = 2.0;
/// Radius of the success sphere around the goal.
pub const SUCCESS_RADIUS_M: f64 = 20.0;

const HEADINGS: u32 = 12;
const EARTH_RADIUS_M: f64 = 6_378_137.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeodesyError {
    #[error("point ({x:.3}, {y:.3}) lies outside the padded map extent")]
    OutOfExtent { x: f64, y: f64 },
    #[error("invalid map transform: {0}")]
    InvalidTransform(&'static str),
}

/// A 3D point in the world frame.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point3<S> {
    pub x: S,
    pub y: S,
    pub z: S,
}

impl<S: Scalar> Point3<S> {
    pub fn new(x: S, y: S, z: S) -> Self {
        Self { x, y, z }
    }

    pub fn distance(&self, other: &Point3<S>) -> S {
        let (dx, dy, dz) = (self.x - other.x, self.y - other.y, self.z - other.z);
        (dx * dx + dy * dy + dz * dz).sqrt()
    }
}

/// Agent state: position plus pitch and yaw in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose<S> {
    pub x: S,
    pub y: S,
    pub z: S,
    pub pitch: S,
    pub yaw: S,
}

impl<S: Scalar> Pose<S> {
    /// Builds a pose, normalizing yaw to `[0, 360)`, clamping pitch to `[-90, 90]`
    /// and altitude to `[0, ceiling]`.
    pub fn new(x: S, y: S, z: S, pitch: S, yaw: S) -> Self {
        Self {
            x,
            y,
            z: clamp_altitude(z),
            pitch: pitch.max(S::lit(-90.0)).min(S::lit(90.0)),
            yaw: normalize_yaw(yaw),
        }
    }

    pub fn position(&self) -> Point3<S> {
        Point3::new(self.x, self.y, self.z)
    }

    /// Unit vector of the horizontal heading.
    pub fn heading(&self) -> (S, S) {
        heading_vector(self.yaw)
    }

    pub fn with_position(mut self, x: S, y: S, z: S) -> Self {
        self.x = x;
        self.y = y;
        self.z = z;
        self
    }
}

/// The six discrete actions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Action {
    MoveForward,
    TurnLeft,
    TurnRight,
    Ascend,
    Descend,
    Stop,
}

impl Action {
    pub const ALL: [Action; 6] = [
        Action::MoveForward,
        Action::TurnLeft,
        Action::TurnRight,
        Action::Ascend,
        Action::Descend,
        Action::Stop,
    ];

    /// Every action except `Stop`.
    pub const MOTIONS: [Action; 5] = [
        Action::MoveForward,
        Action::TurnLeft,
        Action::TurnRight,
        Action::Ascend,
        Action::Descend,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Action::MoveForward => "move-forward",
            Action::TurnLeft => "turn-left",
            Action::TurnRight => "turn-right",
            Action::Ascend => "ascend",
            Action::Descend => "descend",
            Action::Stop => "stop",
        }
    }

    pub fn index(&self) -> usize {
        *self as usize
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("unknown action `{0}`")]
pub struct UnknownAction(pub String);

impl FromStr for Action {
    type Err = UnknownAction;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Action::ALL
            .iter()
            .copied()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| UnknownAction(s.to_string()))
    }
}

pub fn clamp_altitude<S: Scalar>(z: S) -> S {
    z.max(S::zero()).min(S::lit(CEILING_M))
}

pub fn normalize_yaw<S: Scalar>(yaw: S) -> S {
    let full = S::lit(360.0);
    let r = yaw % full;
    let r = if r < S::zero() { r + full } else { r };
    // -0.0 and values that round up to 360 both map to 0.
    if r >= full || r == S::zero() {
        S::zero()
    } else {
        r
    }
}

/// Index of `yaw` on the 30 degree lattice, if it lies exactly on it.
fn heading_index<S: Scalar>(yaw: S) -> Option<u32> {
    let k = (yaw / S::lit(TURN_STEP_DEG)).round();
    if k * S::lit(TURN_STEP_DEG) == yaw {
        k.to_i64().map(|k| k.rem_euclid(HEADINGS as i64) as u32)
    } else {
        None
    }
}

/// Exact cos/sin for the twelve lattice headings.
fn lattice_cos_sin<S: Scalar>(k: u32) -> (S, S) {
    let h = S::lit(0.5);
    let r = S::lit(0.866_025_403_784_438_6);
    let (o, z) = (S::one(), S::zero());
    match k % HEADINGS {
        0 => (o, z),
        1 => (r, h),
        2 => (h, r),
        3 => (z, o),
        4 => (-h, r),
        5 => (-r, h),
        6 => (-o, z),
        7 => (-r, -h),
        8 => (-h, -r),
        9 => (z, -o),
        10 => (h, -r),
        _ => (r, -h),
    }
}

/// Horizontal unit vector for a yaw in degrees.
pub fn heading_vector<S: Scalar>(yaw: S) -> (S, S) {
    match heading_index(yaw) {
        Some(k) => lattice_cos_sin(k),
        None => {
            let (s, c) = yaw.to_radians().sin_cos();
            (c, s)
        }
    }
}

fn rotate_yaw<S: Scalar>(yaw: S, steps: i32) -> S {
    match heading_index(yaw) {
        Some(k) => {
            let k = (k as i32 + steps).rem_euclid(HEADINGS as i32);
            S::lit(TURN_STEP_DEG) * S::from_i32(k).unwrap_or_else(S::zero)
        }
        None => normalize_yaw(yaw + S::lit(TURN_STEP_DEG) * S::from_i32(steps).unwrap_or_else(S::zero)),
    }
}

/// Pure kinematic update for one action. Altitude is clamped to `[0, ceiling]`;
/// terrain clearance and collisions are layered on by the simulator.
pub fn apply_action<S: Scalar>(p: Pose<S>, a: Action) -> Pose<S> {
    let mut next = p;
    match a {
        Action::MoveForward => {
            let (c, s) = heading_vector(p.yaw);
            let step = S::lit(FORWARD_STEP_M);
            next.x = p.x + step * c;
            next.y = p.y + step * s;
        }
        Action::TurnLeft => next.yaw = rotate_yaw(p.yaw, 1),
        Action::TurnRight => next.yaw = rotate_yaw(p.yaw, -1),
        Action::Ascend => next.z = clamp_altitude(p.z + S::lit(VERTICAL_STEP_M)),
        Action::Descend => next.z = clamp_altitude(p.z - S::lit(VERTICAL_STEP_M)),
        Action::Stop => {}
    }
    next
}

pub fn euclidean_distance<S: Scalar>(a: &Pose<S>, b: &Point3<S>) -> S {
    a.position().distance(b)
}

pub fn horizontal_distance<S: Scalar>(a: &Pose<S>, b: &Point3<S>) -> S {
    let (dx, dy) = (a.x - b.x, a.y - b.y);
    (dx * dx + dy * dy).sqrt()
}

/// Bearing from `(x, y)` to `(tx, ty)` in degrees, `[0, 360)`, same convention as yaw.
pub fn bearing_deg<S: Scalar>(x: S, y: S, tx: S, ty: S) -> S {
    normalize_yaw((ty - y).atan2(tx - x).to_degrees())
}

/// Signed smallest rotation from `from` to `to`, in `(-180, 180]`. Positive is counterclockwise.
pub fn yaw_error<S: Scalar>(from: S, to: S) -> S {
    let d = normalize_yaw(to - from);
    if d > S::lit(180.0) {
        d - S::lit(360.0)
    } else {
        d
    }
}

/// Affine link between world meters and the 2D map frame, plus an equirectangular
/// geographic anchor for exporting map features as longitude/latitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapTransform<S> {
    pub origin_lat: S,
    pub origin_lon: S,
    pub meters_per_map_unit: S,
    /// `(width, height)` in map units.
    pub map_extent: (S, S),
}

impl<S: Scalar> MapTransform<S> {
    pub fn new(origin_lat: S, origin_lon: S, meters_per_map_unit: S, map_extent: (S, S)) -> Result<Self, GeodesyError> {
        let t = Self {
            origin_lat,
            origin_lon,
            meters_per_map_unit,
            map_extent,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<(), GeodesyError> {
        if !(self.meters_per_map_unit > S::zero()) || !self.meters_per_map_unit.is_finite() {
            return Err(GeodesyError::InvalidTransform("meters_per_map_unit must be positive"));
        }
        if !(self.map_extent.0 > S::zero() && self.map_extent.1 > S::zero()) {
            return Err(GeodesyError::InvalidTransform("map extent must be positive"));
        }
        Ok(())
    }

    fn within_padded(&self, u: S, v: S) -> bool {
        let pad = S::lit(0.1);
        let (w, h) = self.map_extent;
        u >= -pad * w && u <= (S::one() + pad) * w && v >= -pad * h && v <= (S::one() + pad) * h
    }

    /// Affine world to map conversion without the extent check.
    pub fn to_map(&self, x: S, y: S) -> (S, S) {
        (x / self.meters_per_map_unit, y / self.meters_per_map_unit)
    }

    pub fn world_to_map(&self, x: S, y: S) -> Result<(S, S), GeodesyError> {
        let (u, v) = self.to_map(x, y);
        if self.within_padded(u, v) {
            Ok((u, v))
        } else {
            Err(GeodesyError::OutOfExtent {
                x: x.to_f64_lossy(),
                y: y.to_f64_lossy(),
            })
        }
    }

    pub fn map_to_world(&self, u: S, v: S) -> (S, S) {
        (u * self.meters_per_map_unit, v * self.meters_per_map_unit)
    }

    /// `(lat, lon)` in degrees of a map-frame point.
    pub fn map_to_geo(&self, u: S, v: S) -> (S, S) {
        let (x, y) = self.map_to_world(u, v);
        let r = S::lit(EARTH_RADIUS_M);
        let lat = self.origin_lat + (y / r).to_degrees();
        let lon = self.origin_lon + (x / (r * self.origin_lat.to_radians().cos())).to_degrees();
        (lat, lon)
    }
}

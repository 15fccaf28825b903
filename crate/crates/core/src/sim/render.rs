//! Pinhole renderer over the scene heightfield: category-colored RGB, depth
//! along view rays, and the list of visible annotated objects.

use std::io::Cursor;

use image::{ImageFormat, Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use super::{FloodSpec, SessionState, SimError};
use crate::geodesy::CEILING_M;
use crate::worldmodel::{Category, Scene};
use crate::Pose;

pub const COLOR_SKY: [u8; 3] = [150, 200, 235];
pub const COLOR_TERRAIN: [u8; 3] = [176, 160, 128];
pub const COLOR_WATER: [u8; 3] = [40, 90, 200];

fn category_color(c: Category) -> [u8; 3] {
    match c {
        Category::Building => [200, 80, 60],
        Category::Car => [240, 200, 40],
        Category::Ground => [70, 170, 70],
        Category::ParkingLot => [140, 140, 150],
        Category::Other => [210, 210, 210],
    }
}

const MARCH_STEP_M: f64 = 2.0;
const REFINE_M: f64 = 0.1;
/// Slack when deciding whether an object center is hidden behind a surface.
const OCCLUSION_SLACK_M: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RenderConfig {
    pub fov_deg: f64,
    /// `(width, height)` of the color raster.
    pub rgb_size: (u32, u32),
    /// `(width, height)` of the depth raster.
    pub depth_size: (u32, u32),
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self {
            fov_deg: 90.0,
            rgb_size: (224, 224),
            depth_size: (256, 256),
        }
    }
}

impl RenderConfig {
    /// Tiny rasters for agents that only need visible objects and the center depth.
    pub fn minimal(fov_deg: f64) -> Self {
        Self {
            fov_deg,
            rgb_size: (9, 9),
            depth_size: (9, 9),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisibleObject {
    pub object_id: String,
    /// Screen box `[x0, y0, x1, y1]` in color-raster pixels.
    pub bbox: [f32; 4],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub rgb: RgbImage,
    /// Row-major, top row first, meters along each pixel ray.
    pub depth: Vec<f32>,
    pub depth_size: (u32, u32),
    pub observed_pose: Pose,
    pub visible_objects: Vec<VisibleObject>,
    /// Observed minus true horizontal position. Detections are placed on the
    /// map relative to the observed pose, so they carry this error.
    pub pose_error: (f64, f64),
}

impl Observation {
    /// Depth at the raster center (mean of the central pixels for even sizes).
    pub fn center_depth(&self) -> f64 {
        let (w, h) = (self.depth_size.0 as usize, self.depth_size.1 as usize);
        let xs = if w % 2 == 1 { vec![w / 2] } else { vec![w / 2 - 1, w / 2] };
        let ys = if h % 2 == 1 { vec![h / 2] } else { vec![h / 2 - 1, h / 2] };
        let mut sum = 0.0;
        for &y in &ys {
            for &x in &xs {
                sum += self.depth[y * w + x] as f64;
            }
        }
        sum / (xs.len() * ys.len()) as f64
    }
}

type V3 = [f64; 3];

fn dot(a: V3, b: V3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross(a: V3, b: V3) -> V3 {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn unit(a: V3) -> V3 {
    let n = dot(a, a).sqrt();
    [a[0] / n, a[1] / n, a[2] / n]
}

struct Camera {
    origin: V3,
    fwd: V3,
    right: V3,
    up: V3,
    tan_half: f64,
}

impl Camera {
    fn new(p: &Pose, fov_deg: f64) -> Self {
        let (hx, hy) = p.heading();
        let (sp, cp) = p.pitch.to_radians().sin_cos();
        let fwd = [cp * hx, cp * hy, sp];
        let right = [hy, -hx, 0.0];
        Self {
            origin: [p.x, p.y, p.z],
            fwd,
            right,
            up: cross(right, fwd),
            tan_half: (fov_deg.to_radians() / 2.0).tan(),
        }
    }

    /// Unit ray through the center of pixel `(i, j)`; row 0 is the top.
    fn ray(&self, i: u32, j: u32, w: u32, h: u32) -> V3 {
        let sx = (2.0 * (i as f64 + 0.5) / w as f64 - 1.0) * self.tan_half;
        let sy = (1.0 - 2.0 * (j as f64 + 0.5) / h as f64) * self.tan_half;
        unit([
            self.fwd[0] + sx * self.right[0] + sy * self.up[0],
            self.fwd[1] + sx * self.right[1] + sy * self.up[1],
            self.fwd[2] + sx * self.right[2] + sy * self.up[2],
        ])
    }

    /// Pixel coordinates of a world point, if it is in front of the camera.
    fn project(&self, p: V3, w: u32, h: u32) -> Option<(f64, f64)> {
        let d = [p[0] - self.origin[0], p[1] - self.origin[1], p[2] - self.origin[2]];
        let z = dot(d, self.fwd);
        if z <= 1e-9 {
            return None;
        }
        let sx = dot(d, self.right) / z / self.tan_half;
        let sy = dot(d, self.up) / z / self.tan_half;
        Some(((sx + 1.0) / 2.0 * w as f64, (1.0 - sy) / 2.0 * h as f64))
    }
}

struct Surface<'a> {
    scene: &'a Scene,
    water: Option<f64>,
    top: f64,
}

impl<'a> Surface<'a> {
    fn new(scene: &'a Scene, water: Option<f64>) -> Self {
        let top = scene.max_surface_height().max(water.unwrap_or(0.0));
        Self { scene, water, top }
    }

    fn height(&self, x: f64, y: f64) -> f64 {
        let h = self.scene.heightfield.sample_clamped(x, y);
        match self.water {
            Some(w) if w > h => w,
            _ => h,
        }
    }

    /// Ray parameter where the ray leaves the scene volume (extent times `[0, ceiling]`).
    fn exit(&self, o: V3, d: V3) -> f64 {
        let (w, h) = self.scene.extent;
        let bounds = [(0.0, w), (0.0, h), (0.0, CEILING_M.max(o[2]))];
        let mut t = f64::INFINITY;
        for k in 0..3 {
            if d[k] > 0.0 {
                t = t.min((bounds[k].1 - o[k]) / d[k]);
            } else if d[k] < 0.0 {
                t = t.min((bounds[k].0 - o[k]) / d[k]);
            }
        }
        t.max(0.0)
    }

    /// First intersection with the surface before `tmax`: march, bisect, then
    /// one secant step.
    fn trace(&self, o: V3, d: V3, tmax: f64) -> Option<f64> {
        let f = |t: f64| o[2] + t * d[2] - self.height(o[0] + t * d[0], o[1] + t * d[1]);
        let mut a = 0.0;
        if o[2] > self.top {
            if d[2] >= 0.0 {
                return None;
            }
            a = (o[2] - self.top) / -d[2];
        }
        if a > tmax {
            return None;
        }
        let mut fa = f(a);
        if fa <= 0.0 {
            return Some(a);
        }
        loop {
            let mut b = (a + MARCH_STEP_M).min(tmax);
            let mut fb = f(b);
            if fb <= 0.0 {
                while b - a > REFINE_M {
                    let m = 0.5 * (a + b);
                    let fm = f(m);
                    if fm <= 0.0 {
                        b = m;
                        fb = fm;
                    } else {
                        a = m;
                        fa = fm;
                    }
                }
                let t = a - fa * (b - a) / (fb - fa);
                return Some(t.clamp(a, b));
            }
            if b >= tmax {
                return None;
            }
            a = b;
            fa = fb;
        }
    }

    fn color_at(&self, x: f64, y: f64, z: f64) -> [u8; 3] {
        if let Some(w) = self.water {
            if z <= w + 1e-9 && self.scene.heightfield.sample_clamped(x, y) < w {
                return COLOR_WATER;
            }
        }
        let mut best: Option<Category> = None;
        for o in self.scene.objects_at(x, y) {
            // buildings only own roof and wall hits; flat objects own ground hits
            if o.category == Category::Building || best.is_none() || o.category == Category::Car {
                best = Some(o.category);
            }
            if o.category == Category::Building {
                break;
            }
        }
        best.map(category_color).unwrap_or(COLOR_TERRAIN)
    }
}

fn water_level(scene: &Scene, flood: Option<&FloodSpec>) -> Option<f64> {
    flood.map(|f| f.water_level).or(scene.water_level).filter(|w| *w > 0.0)
}

/// Renders from `pose`; objects hidden by a flood are omitted from the visible list.
pub fn render(scene: &Scene, pose: &Pose, flood: Option<&FloodSpec>, rc: &RenderConfig) -> Result<Observation, SimError> {
    render_with(scene, pose, flood, rc, None)
}

/// Renders from the true pose and reports the session's observed pose. The
/// episode goal (`goal_id`) stays listable even when a flood hides it.
pub fn observe(scene: &Scene, state: &SessionState, rc: &RenderConfig, goal_id: Option<&str>) -> Result<Observation, SimError> {
    let mut obs = render_with(scene, &state.pose, None, rc, goal_id)?;
    obs.observed_pose = state.observed_pose;
    obs.pose_error = (state.observed_pose.x - state.pose.x, state.observed_pose.y - state.pose.y);
    Ok(obs)
}

fn render_with(
    scene: &Scene,
    pose: &Pose,
    flood: Option<&FloodSpec>,
    rc: &RenderConfig,
    exempt: Option<&str>,
) -> Result<Observation, SimError> {
    if !scene.contains_xy(pose.x, pose.y) {
        return Err(SimError::OutOfExtent { x: pose.x, y: pose.y });
    }
    let surface = Surface::new(scene, water_level(scene, flood));
    let cam = Camera::new(pose, rc.fov_deg);

    let shoot = |d: V3| {
        let tmax = surface.exit(cam.origin, d);
        (surface.trace(cam.origin, d, tmax), tmax)
    };

    let (rw, rh) = rc.rgb_size;
    let mut rgb = RgbImage::new(rw, rh);
    for j in 0..rh {
        for i in 0..rw {
            let d = cam.ray(i, j, rw, rh);
            let color = match shoot(d).0 {
                Some(t) => surface.color_at(cam.origin[0] + t * d[0], cam.origin[1] + t * d[1], cam.origin[2] + t * d[2]),
                None => COLOR_SKY,
            };
            rgb.put_pixel(i, j, Rgb(color));
        }
    }

    let (dw, dh) = rc.depth_size;
    let mut depth = Vec::with_capacity((dw * dh) as usize);
    for j in 0..dh {
        for i in 0..dw {
            let (hit, tmax) = shoot(cam.ray(i, j, dw, dh));
            depth.push(hit.unwrap_or(tmax) as f32);
        }
    }

    let mut visible_objects = Vec::new();
    for o in &scene.objects {
        if scene.is_hidden(&o.id) && exempt != Some(o.id.as_str()) {
            continue;
        }
        let c = [o.center.x, o.center.y, o.center.z];
        let Some((px, py)) = cam.project(c, rw, rh) else {
            continue;
        };
        if !(0.0..=rw as f64).contains(&px) || !(0.0..=rh as f64).contains(&py) {
            continue;
        }
        let to = [c[0] - cam.origin[0], c[1] - cam.origin[1], c[2] - cam.origin[2]];
        let dist = dot(to, to).sqrt();
        if dist > 1e-9 {
            let d = unit(to);
            if let Some(t) = surface.trace(cam.origin, d, dist) {
                if t < dist - OCCLUSION_SLACK_M {
                    continue;
                }
            }
        }
        let (lo, hi) = o.footprint.bbox();
        let base = o.center.z - o.height;
        let (mut x0, mut y0, mut x1, mut y1) = (px, py, px, py);
        for x in [lo[0], hi[0]] {
            for y in [lo[1], hi[1]] {
                for z in [base, o.center.z] {
                    if let Some((qx, qy)) = cam.project([x, y, z], rw, rh) {
                        x0 = x0.min(qx);
                        y0 = y0.min(qy);
                        x1 = x1.max(qx);
                        y1 = y1.max(qy);
                    }
                }
            }
        }
        let (fw, fh) = (rw as f64, rh as f64);
        visible_objects.push(VisibleObject {
            object_id: o.id.clone(),
            bbox: [
                x0.clamp(0.0, fw) as f32,
                y0.clamp(0.0, fh) as f32,
                x1.clamp(0.0, fw) as f32,
                y1.clamp(0.0, fh) as f32,
            ],
        });
    }

    Ok(Observation {
        rgb,
        depth,
        depth_size: (dw, dh),
        observed_pose: *pose,
        visible_objects,
        pose_error: (0.0, 0.0),
    })
}

pub fn rgb_to_png(img: &RgbImage) -> Result<Vec<u8>, SimError> {
    let mut out = Cursor::new(Vec::new());
    img.write_to(&mut out, ImageFormat::Png).map_err(|e| SimError::Image(e.to_string()))?;
    Ok(out.into_inner())
}

/// Portable float map, single channel, little-endian, bottom row first.
pub fn depth_to_pfm(depth: &[f32], size: (u32, u32)) -> Vec<u8> {
    let (w, h) = (size.0 as usize, size.1 as usize);
    let mut out = format!("Pf\n{w} {h}\n-1.0\n").into_bytes();
    for row in (0..h).rev() {
        for v in &depth[row * w..(row + 1) * w] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

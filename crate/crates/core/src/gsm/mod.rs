//! Geographic semantic map: five aligned binary masks over the scene's 2D map
//! frame (current field of view, explored area, landmarks, potential goals and
//! surrounding objects), updated every step and exported at 224 x 224.

mod cues;

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use image::{GrayImage, ImageFormat, Luma};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry;
use crate::sim::Observation;
use crate::worldmodel::{Footprint, Scene};
use crate::{MapTransform, Pose};

pub use cues::{extract_cues, phrase_matches, DescriptionCues};

/// Native cell size in meters.
pub const NATIVE_CELL_M: f64 = 2.0;
pub const EXPORT_SIZE: usize = 224;

#[derive(Debug, Error)]
pub enum GsmError {
    #[error("description names no landmark of the scene")]
    NoLandmarkFound(DescriptionCues),
    #[error("unknown channel `{0}`")]
    UnknownChannel(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("image encoding: {0}")]
    Image(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    Fov,
    Explored,
    Landmarks,
    PotentialGoals,
    Surroundings,
}

impl Channel {
    /// Fixed export order.
    pub const ALL: [Channel; 5] = [
        Channel::Fov,
        Channel::Explored,
        Channel::Landmarks,
        Channel::PotentialGoals,
        Channel::Surroundings,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Channel::Fov => "fov",
            Channel::Explored => "explored",
            Channel::Landmarks => "landmarks",
            Channel::PotentialGoals => "potential_goals",
            Channel::Surroundings => "surroundings",
        }
    }

    fn idx(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Channel {
    type Err = GsmError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Channel::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| GsmError::UnknownChannel(s.to_string()))
    }
}

/// Binary grid; cell `(c, r)` is column `c` eastward, row `r` northward.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Mask {
    cols: usize,
    rows: usize,
    bits: Vec<bool>,
}

impl Mask {
    pub fn new(cols: usize, rows: usize) -> Self {
        Self {
            cols,
            rows,
            bits: vec![false; cols * rows],
        }
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn get(&self, c: usize, r: usize) -> bool {
        self.bits[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, c: usize, r: usize, v: bool) {
        self.bits[r * self.cols + c] = v;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|b| *b)
    }

    pub fn clear(&mut self) {
        self.bits.iter_mut().for_each(|b| *b = false);
    }

    /// Set cells as `(c, r)` pairs, row-major order.
    pub fn cells(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, b)| **b)
            .map(|(i, _)| (i % self.cols, i / self.cols))
    }

    pub fn is_subset_of(&self, other: &Mask) -> bool {
        self.bits.iter().zip(&other.bits).all(|(a, b)| !*a || *b)
    }

    pub fn as_bits(&self) -> &[bool] {
        &self.bits
    }
}

/// Inclusive cell rectangle `(c0, r0, c1, r1)`.
type CellRect = (usize, usize, usize, usize);

#[derive(Debug, Clone, PartialEq)]
pub struct GsmStack {
    /// Map units per cell.
    pub resolution: f64,
    pub frame: MapTransform,
    masks: [Mask; 5],
    ablated: [bool; 5],
    fov_rect: Option<CellRect>,
}

impl GsmStack {
    /// Empty stack covering the whole map extent at 2 m cells.
    pub fn new(frame: MapTransform) -> Self {
        Self::with_resolution(frame, NATIVE_CELL_M / frame.meters_per_map_unit)
    }

    pub fn with_resolution(frame: MapTransform, resolution: f64) -> Self {
        let cols = ((frame.map_extent.0 / resolution).ceil() as usize).max(1);
        let rows = ((frame.map_extent.1 / resolution).ceil() as usize).max(1);
        Self {
            resolution,
            frame,
            masks: std::array::from_fn(|_| Mask::new(cols, rows)),
            ablated: [false; 5],
            fov_rect: None,
        }
    }

    /// Stack for one episode: the landmarks channel is filled once from the cues.
    pub fn for_episode(scene: &Scene, cues: &DescriptionCues) -> Self {
        let mut g = Self::new(scene.transform);
        g.masks[Channel::Landmarks.idx()] = rasterize_landmarks(scene, cues, &scene.transform, g.resolution);
        g
    }

    pub fn cols(&self) -> usize {
        self.masks[0].cols
    }

    pub fn rows(&self) -> usize {
        self.masks[0].rows
    }

    pub fn mask(&self, ch: Channel) -> &Mask {
        &self.masks[ch.idx()]
    }

    /// Zeroes a channel and keeps it zero (ablation studies).
    pub fn ablate(&mut self, ch: Channel) {
        self.ablated[ch.idx()] = true;
        self.masks[ch.idx()].clear();
    }

    pub fn is_ablated(&self, ch: Channel) -> bool {
        self.ablated[ch.idx()]
    }

    /// Cell containing a world point, if inside the grid.
    pub fn world_to_cell(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let (u, v) = self.frame.to_map(x, y);
        let (c, r) = ((u / self.resolution).floor(), (v / self.resolution).floor());
        (c >= 0.0 && r >= 0.0 && (c as usize) < self.cols() && (r as usize) < self.rows()).then_some((c as usize, r as usize))
    }

    pub fn cell_center_world(&self, c: usize, r: usize) -> (f64, f64) {
        self.frame
            .map_to_world((c as f64 + 0.5) * self.resolution, (r as f64 + 0.5) * self.resolution)
    }

    /// Cells whose centers lie in the map-frame box, clipped to the grid.
    fn cells_in_box(&self, lo: [f64; 2], hi: [f64; 2]) -> Option<CellRect> {
        let res = self.resolution;
        let c0 = ((lo[0] / res) - 0.5).ceil().max(0.0);
        let r0 = ((lo[1] / res) - 0.5).ceil().max(0.0);
        let c1 = ((hi[0] / res) - 0.5).floor().min(self.cols() as f64 - 1.0);
        let r1 = ((hi[1] / res) - 0.5).floor().min(self.rows() as f64 - 1.0);
        (c0 <= c1 && r0 <= r1).then_some((c0 as usize, r0 as usize, c1 as usize, r1 as usize))
    }

    /// Replaces the FOV with the axis-aligned square of side `2 z tan(fov/2)`
    /// centered at the observed position and adds it to the explored area.
    pub fn update_fov(&mut self, observed: &Pose, fov_deg: f64) {
        let rect = self.fov_rect_at(observed, fov_deg);
        let fov = Channel::Fov.idx();
        if let Some((c0, r0, c1, r1)) = self.fov_rect.take() {
            for r in r0..=r1 {
                for c in c0..=c1 {
                    self.masks[fov].set(c, r, false);
                }
            }
        }
        let Some((c0, r0, c1, r1)) = rect else {
            return;
        };
        for r in r0..=r1 {
            for c in c0..=c1 {
                if !self.ablated[fov] {
                    self.masks[fov].set(c, r, true);
                }
                if !self.ablated[Channel::Explored.idx()] {
                    self.masks[Channel::Explored.idx()].set(c, r, true);
                }
            }
        }
        self.fov_rect = Some((c0, r0, c1, r1));
    }

    fn fov_rect_at(&self, observed: &Pose, fov_deg: f64) -> Option<CellRect> {
        let half_m = observed.z * (fov_deg.to_radians() / 2.0).tan();
        let (u, v) = self.frame.to_map(observed.x, observed.y);
        let half = half_m / self.frame.meters_per_map_unit;
        self.cells_in_box([u - half, v - half], [u + half, v + half])
            .or_else(|| self.world_to_cell(observed.x, observed.y).map(|(c, r)| (c, r, c, r)))
    }

    /// Share of the cells a FOV at `observed` would cover that are not yet explored.
    pub fn unexplored_fraction(&self, observed: &Pose, fov_deg: f64) -> f64 {
        let Some((c0, r0, c1, r1)) = self.fov_rect_at(observed, fov_deg) else {
            return 0.0;
        };
        let explored = &self.masks[Channel::Explored.idx()];
        let mut fresh = 0usize;
        for r in r0..=r1 {
            for c in c0..=c1 {
                fresh += !explored.get(c, r) as usize;
            }
        }
        fresh as f64 / ((c1 - c0 + 1) * (r1 - r0 + 1)) as f64
    }

    /// Current FOV rectangle in cells.
    pub fn fov_cells(&self) -> Option<CellRect> {
        self.fov_rect
    }

    fn mark_footprint(&mut self, ch: Channel, fp: &Footprint, center: (f64, f64), offset: (f64, f64)) {
        if self.ablated[ch.idx()] {
            return;
        }
        let shifted: Vec<[f64; 2]> = fp
            .ring()
            .iter()
            .map(|&[x, y]| {
                let (u, v) = self.frame.to_map(x + offset.0, y + offset.1);
                [u, v]
            })
            .collect();
        let cells = fill_polygon(&shifted, self.resolution, self.cols(), self.rows(), false);
        let mut any = false;
        for (c, r) in cells {
            self.masks[ch.idx()].set(c, r, true);
            any = true;
        }
        if !any {
            if let Some((c, r)) = self.world_to_cell(center.0 + offset.0, center.1 + offset.1) {
                self.masks[ch.idx()].set(c, r, true);
            }
        }
    }

    /// Marks visible objects matching the goal or surrounding phrases. Marks are
    /// persistent; an object matching both kinds lands in both channels.
    pub fn update_detections(&mut self, obs: &Observation, scene: &Scene, cues: &DescriptionCues) {
        for v in &obs.visible_objects {
            let Some(o) = scene.object(&v.object_id) else {
                continue;
            };
            let center = (o.center.x, o.center.y);
            if cues.goal_phrases.iter().any(|p| phrase_matches(p, o)) {
                self.mark_footprint(Channel::PotentialGoals, &o.footprint, center, obs.pose_error);
            }
            if cues.surrounding_phrases.iter().any(|p| phrase_matches(p, o)) {
                self.mark_footprint(Channel::Surroundings, &o.footprint, center, obs.pose_error);
            }
        }
    }

    /// Five channels resampled to 224 x 224 (max-pool when shrinking, nearest
    /// when growing), in the fixed channel order. Row 0 is the southern edge.
    pub fn export(&self) -> [Vec<u8>; 5] {
        let xs = resample_axis(self.cols(), EXPORT_SIZE);
        let ys = resample_axis(self.rows(), EXPORT_SIZE);
        std::array::from_fn(|k| {
            let m = &self.masks[k];
            let mut out = vec![0u8; EXPORT_SIZE * EXPORT_SIZE];
            for (j, &(r0, r1)) in ys.iter().enumerate() {
                for (i, &(c0, c1)) in xs.iter().enumerate() {
                    let hit = (r0..r1).any(|r| (c0..c1).any(|c| m.get(c, r)));
                    out[j * EXPORT_SIZE + i] = hit as u8;
                }
            }
            out
        })
    }

    /// One exported channel as a grayscale PNG, north up.
    pub fn channel_png(&self, ch: Channel) -> Result<Vec<u8>, GsmError> {
        let data = &self.export()[ch.idx()];
        channel_png_from_export(data)
    }

    /// Stacked tensor: one JSON header line, then five channel-major
    /// 224 x 224 `u8` planes.
    pub fn write_tensor(&self, w: &mut impl Write) -> Result<(), GsmError> {
        let header = serde_json::json!({
            "format": "gsm-tensor",
            "version": 1,
            "channels": Channel::ALL.iter().map(|c| c.as_str()).collect::<Vec<_>>(),
            "size": [EXPORT_SIZE, EXPORT_SIZE],
            "dtype": "u8",
            "row_order": "south_to_north",
            "native_size": [self.cols(), self.rows()],
            "resolution": self.resolution,
            "frame": self.frame,
        });
        serde_json::to_writer(&mut *w, &header).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
        for plane in self.export() {
            w.write_all(&plane)?;
        }
        Ok(())
    }
}

/// PNG for one exported plane (row 0 south), flipped so north is up.
pub fn channel_png_from_export(data: &[u8]) -> Result<Vec<u8>, GsmError> {
    let n = EXPORT_SIZE as u32;
    let img = GrayImage::from_fn(n, n, |x, y| {
        let row = EXPORT_SIZE - 1 - y as usize;
        Luma([data[row * EXPORT_SIZE + x as usize] * 255])
    });
    let mut out = std::io::Cursor::new(Vec::new());
    img.write_to(&mut out, ImageFormat::Png).map_err(|e| GsmError::Image(e.to_string()))?;
    Ok(out.into_inner())
}

/// Source index range `[lo, hi)` for each target index along one axis.
fn resample_axis(n: usize, target: usize) -> Vec<(usize, usize)> {
    (0..target)
        .map(|i| {
            if n >= target {
                let lo = i * n / target;
                let hi = ((i + 1) * n).div_ceil(target);
                (lo, hi.max(lo + 1).min(n))
            } else {
                let s = ((2 * i + 1) * n) / (2 * target);
                (s, s + 1)
            }
        })
        .collect()
}

/// Cells of a map-frame polygon: centers inside, plus (when `boundary`) every
/// cell the boundary passes through.
fn fill_polygon(ring: &[[f64; 2]], res: f64, cols: usize, rows: usize, boundary: bool) -> Vec<(usize, usize)> {
    let (lo, hi) = geometry::bounding_box(ring);
    let clamp_c = |v: f64| (v.max(0.0) as usize).min(cols - 1);
    let clamp_r = |v: f64| (v.max(0.0) as usize).min(rows - 1);
    if hi[0] < 0.0 || hi[1] < 0.0 || lo[0] > cols as f64 * res || lo[1] > rows as f64 * res {
        return Vec::new();
    }
    let (c0, c1) = (clamp_c((lo[0] / res).floor()), clamp_c((hi[0] / res).floor()));
    let (r0, r1) = (clamp_r((lo[1] / res).floor()), clamp_r((hi[1] / res).floor()));
    let mut out = Vec::new();
    for r in r0..=r1 {
        for c in c0..=c1 {
            let center = [(c as f64 + 0.5) * res, (r as f64 + 0.5) * res];
            let cell_lo = [c as f64 * res, r as f64 * res];
            let cell_hi = [cell_lo[0] + res, cell_lo[1] + res];
            let on_edge = boundary
                && (0..ring.len()).any(|k| geometry::segment_touches_box(ring[k], ring[(k + 1) % ring.len()], cell_lo, cell_hi));
            if on_edge || geometry::contains_point(ring, center) {
                out.push((c, r));
            }
        }
    }
    out
}

/// Union of the polygon fills of every landmark named in the cues, boundary
/// cells included.
pub fn rasterize_landmarks(scene: &Scene, cues: &DescriptionCues, frame: &MapTransform, resolution: f64) -> Mask {
    let cols = ((frame.map_extent.0 / resolution).ceil() as usize).max(1);
    let rows = ((frame.map_extent.1 / resolution).ceil() as usize).max(1);
    let mut m = Mask::new(cols, rows);
    for name in &cues.landmark_names {
        let Some(l) = scene.landmark(name) else {
            continue;
        };
        for (c, r) in fill_polygon(&l.polygon, resolution, cols, rows, true) {
            m.set(c, r, true);
        }
    }
    m
}

//! Synthetic city scenes: terrain heightfield, annotated objects and a named
//! landmark polygon store with fuzzy lookup.

mod generator;
mod heightfield;
pub mod io;

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{self, Vertex};
use crate::text;
use crate::{MapTransform, Point3};

pub use generator::{generate_scene, GeneratorParams};
pub use heightfield::Heightfield;

/// Upper bound for any heightfield value, below the flight ceiling.
pub const MAX_TERRAIN_M: f64 = 150.0;

#[derive(Debug, Error)]
pub enum WorldError {
    #[error("point ({x:.2}, {y:.2}) is outside the scene extent")]
    OutOfExtent { x: f64, y: f64 },
    #[error("no landmark matches `{0}`")]
    NotFound(String),
    #[error("landmark query `{query}` is ambiguous between {candidates:?}")]
    Ambiguous { query: String, candidates: Vec<String> },
    #[error("invalid generator parameters: {0}")]
    InvalidParams(String),
    #[error("invalid scene: {0}")]
    InvalidScene(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Object categories of the goal/annotation vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Building,
    Car,
    Ground,
    ParkingLot,
    Other,
}

impl Category {
    pub const ALL: [Category; 5] = [
        Category::Building,
        Category::Car,
        Category::Ground,
        Category::ParkingLot,
        Category::Other,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Category::Building => "building",
            Category::Car => "car",
            Category::Ground => "ground",
            Category::ParkingLot => "parking_lot",
            Category::Other => "other",
        }
    }

    /// Noun used in natural-language descriptions.
    pub fn noun(&self) -> &'static str {
        match self {
            Category::Building => "building",
            Category::Car => "car",
            Category::Ground => "ground",
            Category::ParkingLot => "parking lot",
            Category::Other => "object",
        }
    }

    /// Description token that identifies the category.
    pub fn keyword(&self) -> Option<&'static str> {
        match self {
            Category::Building => Some("building"),
            Category::Car => Some("car"),
            Category::Ground => Some("ground"),
            Category::ParkingLot => Some("parking"),
            Category::Other => None,
        }
    }

    pub fn from_keyword(token: &str) -> Option<Category> {
        match token {
            "building" | "buildings" => Some(Category::Building),
            "car" | "cars" => Some(Category::Car),
            "ground" => Some(Category::Ground),
            "parking" => Some(Category::ParkingLot),
            _ => None,
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Object footprint in world meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Footprint {
    Rect { min: [f64; 2], max: [f64; 2] },
    Polygon { ring: Vec<[f64; 2]> },
}

impl Footprint {
    pub fn ring(&self) -> Vec<Vertex<f64>> {
        match self {
            Footprint::Rect { min, max } => geometry::rect_ring(*min, *max),
            Footprint::Polygon { ring } => ring.clone(),
        }
    }

    pub fn bbox(&self) -> ([f64; 2], [f64; 2]) {
        match self {
            Footprint::Rect { min, max } => (*min, *max),
            Footprint::Polygon { ring } => geometry::bounding_box(ring),
        }
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        match self {
            Footprint::Rect { min, max } => x >= min[0] && x <= max[0] && y >= min[1] && y <= max[1],
            Footprint::Polygon { ring } => geometry::contains_point(ring, [x, y]),
        }
    }

    pub fn area(&self) -> f64 {
        match self {
            Footprint::Rect { min, max } => (max[0] - min[0]) * (max[1] - min[1]),
            Footprint::Polygon { ring } => geometry::polygon_area(ring),
        }
    }

    /// Heightfield node positions inside the footprint; falls back to `fallback`
    /// when the footprint is smaller than one cell.
    pub fn sample_nodes(&self, cell: f64, fallback: [f64; 2]) -> Vec<[f64; 2]> {
        let (lo, hi) = self.bbox();
        let c0 = (lo[0] / cell).ceil() as i64;
        let c1 = (hi[0] / cell).floor() as i64;
        let r0 = (lo[1] / cell).ceil() as i64;
        let r1 = (hi[1] / cell).floor() as i64;
        let mut pts = Vec::new();
        for r in r0..=r1 {
            for c in c0..=c1 {
                let p = [c as f64 * cell, r as f64 * cell];
                if self.contains(p[0], p[1]) {
                    pts.push(p);
                }
            }
        }
        if pts.is_empty() {
            pts.push(fallback);
        }
        pts
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub id: String,
    pub category: Category,
    /// Descriptive words such as colors and parts.
    pub name_tokens: Vec<String>,
    /// Footprint center at the top surface of the object.
    pub center: Point3,
    pub footprint: Footprint,
    pub height: f64,
}

/// Named map feature with a polygon in map-frame units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Landmark {
    pub name: String,
    #[serde(with = "io::closed_ring")]
    pub polygon: Vec<[f64; 2]>,
    pub kind: String,
}

impl Landmark {
    pub fn centroid(&self) -> [f64; 2] {
        geometry::polygon_centroid(&self.polygon)
    }

    pub fn area(&self) -> f64 {
        geometry::polygon_area(&self.polygon)
    }
}

/// Even-odd containment of a map-frame point; boundary points are inside.
pub fn point_in_landmark(l: &Landmark, u: f64, v: f64) -> bool {
    geometry::contains_point(&l.polygon, [u, v])
}

#[derive(Debug, Clone, Default)]
struct SpatialIndex {
    bucket: f64,
    cols: usize,
    rows: usize,
    cells: Vec<Vec<u32>>,
}

impl SpatialIndex {
    const BUCKET_M: f64 = 32.0;

    fn build(extent: (f64, f64), objects: &[SceneObject]) -> Self {
        let bucket = Self::BUCKET_M;
        let cols = (extent.0 / bucket).ceil().max(1.0) as usize;
        let rows = (extent.1 / bucket).ceil().max(1.0) as usize;
        let mut cells = vec![Vec::new(); cols * rows];
        let mut idx = Self {
            bucket,
            cols,
            rows,
            cells: Vec::new(),
        };
        for (i, o) in objects.iter().enumerate() {
            let (lo, hi) = o.footprint.bbox();
            let (c0, r0) = idx.bucket_of(lo[0], lo[1]);
            let (c1, r1) = idx.bucket_of(hi[0], hi[1]);
            for r in r0..=r1 {
                for c in c0..=c1 {
                    cells[r * cols + c].push(i as u32);
                }
            }
        }
        idx.cells = cells;
        idx
    }

    fn bucket_of(&self, x: f64, y: f64) -> (usize, usize) {
        let c = ((x / self.bucket).floor().max(0.0) as usize).min(self.cols - 1);
        let r = ((y / self.bucket).floor().max(0.0) as usize).min(self.rows - 1);
        (c, r)
    }

    fn at(&self, x: f64, y: f64) -> &[u32] {
        let (c, r) = self.bucket_of(x, y);
        &self.cells[r * self.cols + c]
    }

    fn in_box(&self, lo: [f64; 2], hi: [f64; 2]) -> Vec<u32> {
        let (c0, r0) = self.bucket_of(lo[0], lo[1]);
        let (c1, r1) = self.bucket_of(hi[0], hi[1]);
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for r in r0..=r1 {
            for c in c0..=c1 {
                for &i in &self.cells[r * self.cols + c] {
                    if seen.insert(i) {
                        out.push(i);
                    }
                }
            }
        }
        out.sort_unstable();
        out
    }
}

/// An immutable city scene. The heightfield is stored in a binary sidecar and
/// shared between derived (e.g. flooded) scenes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Scene {
    pub id: String,
    /// `(width, height)` in meters.
    pub extent: (f64, f64),
    #[serde(skip)]
    pub heightfield: Arc<Heightfield>,
    pub objects: Vec<SceneObject>,
    pub landmarks: Vec<Landmark>,
    pub transform: MapTransform,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub water_level: Option<f64>,
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub hidden_objects: BTreeSet<String>,
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub hidden_landmarks: BTreeSet<String>,
    #[serde(skip)]
    index: OnceLock<SpatialIndex>,
    #[serde(skip)]
    top: OnceLock<f64>,
}

impl PartialEq for Scene {
    fn eq(&self, other: &Self) -> bool {
        self.id == other.id
            && self.extent == other.extent
            && self.heightfield == other.heightfield
            && self.objects == other.objects
            && self.landmarks == other.landmarks
            && self.transform == other.transform
            && self.water_level == other.water_level
            && self.hidden_objects == other.hidden_objects
            && self.hidden_landmarks == other.hidden_landmarks
    }
}

impl Scene {
    pub fn new(
        id: impl Into<String>,
        heightfield: Heightfield,
        objects: Vec<SceneObject>,
        landmarks: Vec<Landmark>,
        transform: MapTransform,
    ) -> Result<Self, WorldError> {
        let scene = Self {
            id: id.into(),
            extent: heightfield.extent(),
            heightfield: Arc::new(heightfield),
            objects,
            landmarks,
            transform,
            water_level: None,
            hidden_objects: BTreeSet::new(),
            hidden_landmarks: BTreeSet::new(),
            index: OnceLock::new(),
            top: OnceLock::new(),
        };
        scene.validate()?;
        Ok(scene)
    }

    /// Checks every structural invariant of a scene.
    pub fn validate(&self) -> Result<(), WorldError> {
        let bad = |m: String| Err(WorldError::InvalidScene(m));
        if self.heightfield.extent() != self.extent {
            return bad(format!(
                "heightfield extent {:?} does not match scene extent {:?}",
                self.heightfield.extent(),
                self.extent
            ));
        }
        let (lo, hi) = self.heightfield.min_max();
        if lo < 0.0 || hi > MAX_TERRAIN_M {
            return bad(format!("heightfield range [{lo}, {hi}] outside [0, {MAX_TERRAIN_M}]"));
        }
        self.transform.validate().map_err(|e| WorldError::InvalidScene(e.to_string()))?;
        let (w, h) = self.extent;
        let mut ids = HashSet::new();
        for o in &self.objects {
            if !ids.insert(o.id.as_str()) {
                return bad(format!("duplicate object id {}", o.id));
            }
            let (a, b) = o.footprint.bbox();
            if a[0] < 0.0 || a[1] < 0.0 || b[0] > w || b[1] > h {
                return bad(format!("object {} footprint leaves the extent", o.id));
            }
            if !o.footprint.contains(o.center.x, o.center.y) {
                return bad(format!("object {} center outside its footprint", o.id));
            }
        }
        let (mw, mh) = self.transform.map_extent;
        let mut names = HashSet::new();
        for l in &self.landmarks {
            if l.name.trim().is_empty() {
                return bad("landmark with empty name".into());
            }
            if !names.insert(l.name.as_str()) {
                return bad(format!("duplicate landmark name {}", l.name));
            }
            if !geometry::is_simple(&l.polygon) {
                return bad(format!("landmark {} polygon is not simple", l.name));
            }
            let (a, b) = geometry::bounding_box(&l.polygon);
            if a[0] < 0.0 || a[1] < 0.0 || b[0] > mw || b[1] > mh {
                return bad(format!("landmark {} leaves the map extent", l.name));
            }
        }
        Ok(())
    }

    fn index(&self) -> &SpatialIndex {
        self.index.get_or_init(|| SpatialIndex::build(self.extent, &self.objects))
    }

    /// Highest heightfield value, computed once.
    pub fn max_surface_height(&self) -> f64 {
        *self.top.get_or_init(|| self.heightfield.min_max().1)
    }

    pub fn contains_xy(&self, x: f64, y: f64) -> bool {
        x >= 0.0 && y >= 0.0 && x <= self.extent.0 && y <= self.extent.1
    }

    /// Surface elevation, bilinearly interpolated from the heightfield.
    pub fn terrain_height(&self, x: f64, y: f64) -> Result<f64, WorldError> {
        self.heightfield.sample(x, y).ok_or(WorldError::OutOfExtent { x, y })
    }

    pub fn object(&self, id: &str) -> Option<&SceneObject> {
        self.objects.iter().find(|o| o.id == id)
    }

    pub fn is_hidden(&self, object_id: &str) -> bool {
        self.hidden_objects.contains(object_id)
    }

    pub fn objects_at(&self, x: f64, y: f64) -> impl Iterator<Item = &SceneObject> + '_ {
        self.index()
            .at(x, y)
            .iter()
            .map(move |&i| &self.objects[i as usize])
            .filter(move |o| o.footprint.contains(x, y))
    }

    /// Objects whose footprint bounding box intersects the query box.
    pub fn objects_in_box(&self, lo: [f64; 2], hi: [f64; 2]) -> impl Iterator<Item = &SceneObject> + '_ {
        self.index().in_box(lo, hi).into_iter().map(move |i| &self.objects[i as usize]).filter(move |o| {
            let (a, b) = o.footprint.bbox();
            a[0] <= hi[0] && b[0] >= lo[0] && a[1] <= hi[1] && b[1] >= lo[1]
        })
    }

    pub fn building_at(&self, x: f64, y: f64) -> Option<&SceneObject> {
        self.objects_at(x, y).find(|o| o.category == Category::Building)
    }

    pub fn landmark(&self, name: &str) -> Option<&Landmark> {
        self.landmarks.iter().find(|l| l.name == name)
    }

    /// Landmarks not hidden by a scenario transform.
    pub fn visible_landmarks(&self) -> impl Iterator<Item = &Landmark> + '_ {
        self.landmarks.iter().filter(move |l| !self.hidden_landmarks.contains(&l.name))
    }

    /// Resolves a landmark by name: exact match first, then case-insensitive
    /// token overlap with stop words removed. Hidden landmarks are not returned.
    pub fn landmark_segment(&self, name: &str) -> Result<&Landmark, WorldError> {
        if let Some(l) = self.visible_landmarks().find(|l| l.name == name) {
            return Ok(l);
        }
        let query: HashSet<String> = text::content_tokens(name).into_iter().collect();
        let mut scored: Vec<(usize, &Landmark)> = self
            .visible_landmarks()
            .map(|l| {
                let toks: HashSet<String> = text::content_tokens(&l.name).into_iter().collect();
                (toks.intersection(&query).count(), l)
            })
            .filter(|(s, _)| *s > 0)
            .collect();
        scored.sort_by(|a, b| b.0.cmp(&a.0));
        match scored.as_slice() {
            [] => Err(WorldError::NotFound(name.to_string())),
            [(best, l), rest @ ..] => {
                let tied: Vec<String> = rest.iter().filter(|(s, _)| s == best).map(|(_, l)| l.name.clone()).collect();
                if tied.is_empty() {
                    Ok(l)
                } else {
                    let mut candidates = vec![l.name.clone()];
                    candidates.extend(tied);
                    Err(WorldError::Ambiguous {
                        query: name.to_string(),
                        candidates,
                    })
                }
            }
        }
    }

    /// Median of all heightfield node values.
    pub fn median_terrain_height(&self) -> f64 {
        let mut v: Vec<f32> = self.heightfield.data().to_vec();
        v.sort_by(|a, b| a.total_cmp(b));
        let n = v.len();
        if n % 2 == 1 {
            v[n / 2] as f64
        } else {
            (v[n / 2 - 1] as f64 + v[n / 2] as f64) / 2.0
        }
    }

    /// World-frame ring of a landmark.
    pub fn landmark_world_ring(&self, l: &Landmark) -> Vec<[f64; 2]> {
        l.polygon
            .iter()
            .map(|&[u, v]| {
                let (x, y) = self.transform.map_to_world(u, v);
                [x, y]
            })
            .collect()
    }
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    pub fn transform(w: f64, h: f64) -> MapTransform {
        MapTransform::new(52.2, 0.12, 1.0, (w, h)).unwrap()
    }

    pub fn landmark(name: &str, lo: [f64; 2], hi: [f64; 2], kind: &str) -> Landmark {
        Landmark {
            name: name.into(),
            polygon: geometry::rect_ring(lo, hi),
            kind: kind.into(),
        }
    }

    pub fn object(id: &str, category: Category, tokens: &[&str], lo: [f64; 2], hi: [f64; 2], top: f64) -> SceneObject {
        SceneObject {
            id: id.into(),
            category,
            name_tokens: tokens.iter().map(|s| s.to_string()).collect(),
            center: Point3::new((lo[0] + hi[0]) / 2.0, (lo[1] + hi[1]) / 2.0, top),
            footprint: Footprint::Rect { min: lo, max: hi },
            height: top,
        }
    }

    /// Flat 200 m square scene with a few landmarks and objects.
    pub fn small_scene() -> Scene {
        let hf = Heightfield::flat(101, 101, 2.0, 0.0);
        let landmarks = vec![
            landmark("Sidney Street", [0.0, 90.0], [200.0, 102.0], "street"),
            landmark("Trinity Street", [90.0, 0.0], [102.0, 200.0], "street"),
            landmark("Jesus Green", [10.0, 10.0], [60.0, 60.0], "park"),
        ];
        let objects = vec![
            object("car-0", Category::Car, &["red", "stripes"], [20.0, 120.0], [24.6, 121.9], 1.5),
            object("bldg-0", Category::Building, &["grey", "dome"], [130.0, 130.0], [160.0, 160.0], 30.0),
        ];
        Scene::new("fixture", hf, objects, landmarks, transform(200.0, 200.0)).unwrap()
    }
}

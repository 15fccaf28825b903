//! Seeded procedural city generator. All randomness flows from one ChaCha
//! stream so a seed reproduces the same scene on every platform.

use std::f64::consts::TAU;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Category, Footprint, Heightfield, Landmark, Scene, SceneObject, WorldError, MAX_TERRAIN_M};
use crate::geometry;
use crate::{MapTransform, Point3};

/// Share of generated objects per category, in percent.
pub const CATEGORY_MIX: [(Category, f64); 4] = [
    (Category::Building, 48.3),
    (Category::Car, 40.7),
    (Category::Ground, 7.4),
    (Category::ParkingLot, 3.6),
];

const MIN_EXTENT_M: f64 = 500.0;
const MIN_OBJECTS: usize = 50;
const MIN_LANDMARKS: usize = 5;
const CAR_LEN: f64 = 4.6;
const CAR_WIDTH: f64 = 1.9;
const CAR_HEIGHT: f64 = 1.5;

const STREET_NAMES: &[&str] = &[
    "Sidney Street", "Trinity Street", "Regent Street", "Hills Road", "Mill Road", "Silver Street",
    "Bridge Street", "Jesus Lane", "Park Terrace", "Tennis Court Road", "Downing Street", "Pembroke Street",
    "Benet Street", "Market Street", "Hobson Street", "Emmanuel Road", "Lensfield Road", "Station Road",
    "Newmarket Road", "Chesterton Road", "Victoria Avenue", "Broad Street", "Corporation Street", "Colmore Row",
    "Bull Street", "Moor Street", "Navigation Street", "Suffolk Street", "Holloway Head", "Bristol Road",
    "Pershore Road", "Harborne Road", "Granta Place", "Fen Causeway", "Huntingdon Road", "Madingley Road",
    "Storeys Way", "Castle Street", "Magdalene Street", "Thompsons Lane",
];

const BUILDING_NAMES: &[&str] = &[
    "Emmanuel College Chapel", "Guildhall", "Corn Exchange", "Senate House", "Fitzwilliam Hall",
    "Darwin Library", "Selwyn Hall", "Kelvin Building", "Mason College", "Aston Hall", "Council House",
    "Curzon Hall", "Elmfield College", "Museum Hall", "Clarendon Library", "Wren Chapel",
];

const PARK_NAMES: &[&str] = &[
    "Parkers Piece", "Christs Pieces", "Jesus Green", "Midsummer Common", "Coe Fen", "Cannon Hill Park",
    "Highbury Park", "Calthorpe Park", "Lammas Land", "Sheep Green", "Eastside Park", "Stourbridge Common",
];

fn palette(cat: Category) -> (&'static [&'static str], &'static [&'static str]) {
    match cat {
        Category::Building => (
            &["grey", "white", "red", "brown", "beige", "black", "blue"],
            &["dome", "chimney", "skylight", "courtyard", "tower", "balcony", "spire", "terrace"],
        ),
        Category::Car => (
            &["red", "white", "black", "blue", "silver", "grey", "yellow", "green"],
            &["stripes", "sunroof", "trailer", "spoiler", "roofbox"],
        ),
        Category::Ground => (&["green", "brown"], &["trees", "grass", "benches", "path", "hedge"]),
        Category::ParkingLot => (&["grey", "black"], &["bays", "markings", "barrier", "kiosk"]),
        Category::Other => (&["grey"], &["pole"]),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorParams {
    /// Scene id; `city-<seed>` when empty.
    pub id: String,
    pub extent: (f64, f64),
    pub object_count: usize,
    pub cell_size: f64,
    pub street_spacing: (f64, f64),
    pub street_width: f64,
    pub terrain_relief: f64,
    pub building_height: (f64, f64),
    pub named_buildings: usize,
    pub origin_lat_lon: (f64, f64),
}

impl Default for GeneratorParams {
    fn default() -> Self {
        Self {
            id: String::new(),
            extent: (1200.0, 1200.0),
            object_count: 400,
            cell_size: 2.0,
            street_spacing: (110.0, 170.0),
            street_width: 14.0,
            terrain_relief: 12.0,
            building_height: (6.0, 60.0),
            named_buildings: 6,
            origin_lat_lon: (52.205, 0.119),
        }
    }
}

impl GeneratorParams {
    fn validate(&self) -> Result<(), WorldError> {
        let bad = |m: String| Err(WorldError::InvalidParams(m));
        if self.extent.0 < MIN_EXTENT_M || self.extent.1 < MIN_EXTENT_M {
            return bad(format!("extent {:?} below {MIN_EXTENT_M} m per side", self.extent));
        }
        if self.object_count < MIN_OBJECTS {
            return bad(format!("object count {} below {MIN_OBJECTS}", self.object_count));
        }
        if !(self.cell_size > 0.0) {
            return bad("cell size must be positive".into());
        }
        for e in [self.extent.0, self.extent.1] {
            let n = e / self.cell_size;
            if (n - n.round()).abs() > 1e-9 {
                return bad(format!("extent {e} is not a multiple of the cell size"));
            }
        }
        let (lo, hi) = self.street_spacing;
        if !(lo > self.street_width + 20.0 && hi >= lo) {
            return bad("street spacing must exceed street width by 20 m".into());
        }
        let (hmin, hmax) = self.building_height;
        if !(hmin > 0.0 && hmax >= hmin && hmax + self.terrain_relief <= MAX_TERRAIN_M && self.terrain_relief >= 0.0) {
            return bad("building heights plus relief must stay within (0, 150] m".into());
        }
        Ok(())
    }
}

/// Smooth rolling ground elevation in `[0, relief]`.
struct Terrain {
    relief: f64,
    waves: [(f64, f64, f64); 3],
}

impl Terrain {
    fn new(rng: &mut ChaCha8Rng, relief: f64) -> Self {
        let mut wave = || {
            (
                rng.random_range(350.0..900.0),
                rng.random_range(0.0..TAU),
                rng.random_range(0.0..TAU),
            )
        };
        Self {
            relief,
            waves: [wave(), wave(), wave()],
        }
    }

    fn at(&self, x: f64, y: f64) -> f64 {
        let [(l0, p0, q0), (l1, p1, _), (l2, p2, q2)] = self.waves;
        let a = (TAU * x / l0 + p0).sin() * (TAU * y / l1 + q0).cos();
        let b = (TAU * (x + y) / l2 + p1).sin();
        let c = (TAU * (x - y) / (l0 + l2) + p2 + q2).cos();
        let s = (a + b + c) / 3.0; // in [-1, 1]
        (self.relief * 0.5 * (1.0 + s)).clamp(0.0, self.relief)
    }
}

#[derive(Clone, Copy)]
struct Rect {
    lo: [f64; 2],
    hi: [f64; 2],
}

impl Rect {
    fn w(&self) -> f64 {
        self.hi[0] - self.lo[0]
    }
    fn h(&self) -> f64 {
        self.hi[1] - self.lo[1]
    }
    fn overlaps(&self, o: &Rect, gap: f64) -> bool {
        self.lo[0] < o.hi[0] + gap && o.lo[0] < self.hi[0] + gap && self.lo[1] < o.hi[1] + gap && o.lo[1] < self.hi[1] + gap
    }
    fn center(&self) -> [f64; 2] {
        [(self.lo[0] + self.hi[0]) / 2.0, (self.lo[1] + self.hi[1]) / 2.0]
    }
}

struct Street {
    name: String,
    rect: Rect,
    vertical: bool,
}

/// Largest-remainder apportionment of `n` over the category mix.
fn category_counts(n: usize) -> Vec<(Category, usize)> {
    let total: f64 = CATEGORY_MIX.iter().map(|(_, p)| p).sum();
    let quotas: Vec<f64> = CATEGORY_MIX.iter().map(|(_, p)| p / total * n as f64).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let mut rest: Vec<usize> = (0..quotas.len()).collect();
    rest.sort_by(|&a, &b| (quotas[b] - quotas[b].floor()).total_cmp(&(quotas[a] - quotas[a].floor())));
    let missing = n - counts.iter().sum::<usize>();
    for &i in rest.iter().take(missing) {
        counts[i] += 1;
    }
    CATEGORY_MIX.iter().zip(counts).map(|((c, _), n)| (*c, n)).collect()
}

fn name_from_pool(pool: &[&str], used: &mut Vec<String>, rng: &mut ChaCha8Rng) -> String {
    let mut fresh: Vec<&&str> = pool.iter().filter(|n| !used.iter().any(|u| u == **n)).collect();
    let name = if fresh.is_empty() {
        let base = pool[rng.random_range(0..pool.len())];
        let mut k = 2;
        loop {
            let candidate = format!("{base} {k}");
            if !used.contains(&candidate) {
                break candidate;
            }
            k += 1;
        }
    } else {
        fresh.shuffle(rng);
        fresh[0].to_string()
    };
    used.push(name.clone());
    name
}

fn street_axis(rng: &mut ChaCha8Rng, length: f64, p: &GeneratorParams) -> Vec<f64> {
    let half = p.street_width / 2.0;
    let mut out = Vec::new();
    let mut at = rng.random_range(p.street_spacing.0 * 0.4..p.street_spacing.0 * 0.8).max(half + 30.0);
    while at < length - half - 30.0 {
        out.push(at);
        at += rng.random_range(p.street_spacing.0..=p.street_spacing.1);
    }
    out
}

fn intervals(cuts: &[f64], length: f64, half: f64, margin: f64) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let mut start = 0.0;
    for &c in cuts {
        out.push((start + if start == 0.0 { 2.0 } else { 0.0 }, c - half - margin));
        start = c + half + margin;
    }
    out.push((start, length - 2.0));
    out.into_iter().filter(|(a, b)| b - a >= 24.0).collect()
}

struct Placer<'a> {
    rng: &'a mut ChaCha8Rng,
    blocks: Vec<Rect>,
    solid: Vec<Rect>,
}

impl Placer<'_> {
    /// Places a `w x h` rectangle inside a random block without touching solid rects.
    fn place(&mut self, w: (f64, f64), h: (f64, f64)) -> Option<Rect> {
        let mut scale = 1.0;
        for _ in 0..6 {
            for _ in 0..120 {
                let b = self.blocks[self.rng.random_range(0..self.blocks.len())];
                let rw = (self.rng.random_range(w.0..=w.1) * scale).min(b.w());
                let rh = (self.rng.random_range(h.0..=h.1) * scale).min(b.h());
                let x = b.lo[0] + self.rng.random_range(0.0..=(b.w() - rw));
                let y = b.lo[1] + self.rng.random_range(0.0..=(b.h() - rh));
                let r = Rect {
                    lo: [x, y],
                    hi: [x + rw, y + rh],
                };
                if !self.solid.iter().any(|s| s.overlaps(&r, 2.0)) {
                    self.solid.push(r);
                    return Some(r);
                }
            }
            scale *= 0.8;
        }
        None
    }
}

fn octagon(r: &Rect) -> Vec<[f64; 2]> {
    let c = 0.25 * r.w().min(r.h());
    let [x0, y0] = r.lo;
    let [x1, y1] = r.hi;
    vec![
        [x0 + c, y0],
        [x1 - c, y0],
        [x1, y0 + c],
        [x1, y1 - c],
        [x1 - c, y1],
        [x0 + c, y1],
        [x0, y1 - c],
        [x0, y0 + c],
    ]
}

fn kind_for(name: &str) -> &'static str {
    ["Hall", "College", "Chapel", "Library", "House", "Exchange"]
        .iter()
        .find(|k| name.contains(*k))
        .map(|k| match *k {
            "Hall" => "hall",
            "College" => "college",
            "Chapel" => "chapel",
            "Library" => "library",
            _ => "building",
        })
        .unwrap_or("building")
}

/// Generates a deterministic synthetic city for `seed`.
pub fn generate_scene(seed: u64, params: &GeneratorParams) -> Result<Scene, WorldError> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = params.extent;
    let cell = params.cell_size;
    let terrain = Terrain::new(&mut rng, params.terrain_relief);

    let half = params.street_width / 2.0;
    let xs = street_axis(&mut rng, w, params);
    let ys = street_axis(&mut rng, h, params);
    let mut used_names = Vec::new();
    let mut streets = Vec::new();
    for &x in &xs {
        streets.push(Street {
            name: name_from_pool(STREET_NAMES, &mut used_names, &mut rng),
            rect: Rect {
                lo: [x - half, 0.0],
                hi: [x + half, h],
            },
            vertical: true,
        });
    }
    for &y in &ys {
        streets.push(Street {
            name: name_from_pool(STREET_NAMES, &mut used_names, &mut rng),
            rect: Rect {
                lo: [0.0, y - half],
                hi: [w, y + half],
            },
            vertical: false,
        });
    }

    let bx = intervals(&xs, w, half, 3.0);
    let by = intervals(&ys, h, half, 3.0);
    let blocks: Vec<Rect> = by
        .iter()
        .flat_map(|&(y0, y1)| bx.iter().map(move |&(x0, x1)| Rect { lo: [x0, y0], hi: [x1, y1] }))
        .collect();
    if blocks.is_empty() {
        return Err(WorldError::InvalidParams("street layout leaves no building blocks".into()));
    }

    let counts = category_counts(params.object_count);
    let count_of = |c: Category| counts.iter().find(|(k, _)| *k == c).map(|(_, n)| *n).unwrap_or(0);

    let mut placer = Placer {
        rng: &mut rng,
        blocks,
        solid: Vec::new(),
    };
    let mut lots = Vec::new();
    for _ in 0..count_of(Category::ParkingLot) {
        lots.push(placer.place((28.0, 50.0), (24.0, 40.0)).ok_or_else(|| crowded("parking lots"))?);
    }
    let mut greens = Vec::new();
    for _ in 0..count_of(Category::Ground) {
        greens.push(placer.place((30.0, 70.0), (30.0, 70.0)).ok_or_else(|| crowded("ground patches"))?);
    }
    let mut buildings = Vec::new();
    for _ in 0..count_of(Category::Building) {
        buildings.push(placer.place((12.0, 40.0), (12.0, 40.0)).ok_or_else(|| crowded("buildings"))?);
    }

    let mut cars: Vec<Rect> = Vec::new();
    let n_cars = count_of(Category::Car);
    let mut attempts = 0;
    while cars.len() < n_cars {
        attempts += 1;
        if attempts > n_cars * 400 {
            return Err(crowded("cars"));
        }
        let in_lot = !lots.is_empty() && rng.random_bool(0.3);
        let r = if in_lot {
            let lot = lots[rng.random_range(0..lots.len())];
            let (cw, ch) = if rng.random_bool(0.5) { (CAR_LEN, CAR_WIDTH) } else { (CAR_WIDTH, CAR_LEN) };
            let x = rng.random_range(lot.lo[0] + 1.0..lot.hi[0] - cw - 1.0);
            let y = rng.random_range(lot.lo[1] + 1.0..lot.hi[1] - ch - 1.0);
            Rect {
                lo: [x, y],
                hi: [x + cw, y + ch],
            }
        } else {
            let s = &streets[rng.random_range(0..streets.len())];
            let side = if rng.random_bool(0.5) { 0.0 } else { 1.0 };
            if s.vertical {
                let x = s.rect.lo[0] + 1.0 + side * (s.rect.w() - 2.0 - CAR_WIDTH);
                let y = rng.random_range(2.0..h - CAR_LEN - 2.0);
                Rect {
                    lo: [x, y],
                    hi: [x + CAR_WIDTH, y + CAR_LEN],
                }
            } else {
                let y = s.rect.lo[1] + 1.0 + side * (s.rect.h() - 2.0 - CAR_WIDTH);
                let x = rng.random_range(2.0..w - CAR_LEN - 2.0);
                Rect {
                    lo: [x, y],
                    hi: [x + CAR_LEN, y + CAR_WIDTH],
                }
            }
        };
        if !cars.iter().any(|c| c.overlaps(&r, 0.5)) {
            cars.push(r);
        }
    }

    let cols = (w / cell).round() as usize + 1;
    let rows = (h / cell).round() as usize + 1;
    let mut data = Vec::with_capacity(cols * rows);
    for r in 0..rows {
        for c in 0..cols {
            data.push(terrain.at(c as f64 * cell, r as f64 * cell) as f32);
        }
    }
    let mut hf = Heightfield::new(cols, rows, cell, data).expect("grid dimensions are valid");

    let mut objects = Vec::with_capacity(params.object_count);
    let tokens = |cat: Category, rng: &mut ChaCha8Rng| {
        let (colors, parts) = palette(cat);
        vec![
            colors[rng.random_range(0..colors.len())].to_string(),
            parts[rng.random_range(0..parts.len())].to_string(),
        ]
    };
    for (i, b) in buildings.iter().enumerate() {
        let [cx, cy] = b.center();
        let (hmin, hmax) = params.building_height;
        let u: f64 = rng.random();
        let height = hmin + (hmax - hmin) * u * u;
        let roof = (terrain.at(cx, cy) + height).min(MAX_TERRAIN_M);
        let (c0, c1) = ((b.lo[0] / cell).ceil() as usize, (b.hi[0] / cell).floor() as usize);
        let (r0, r1) = ((b.lo[1] / cell).ceil() as usize, (b.hi[1] / cell).floor() as usize);
        for r in r0..=r1.min(rows - 1) {
            for c in c0..=c1.min(cols - 1) {
                let v = hf.node(c, r).max(roof);
                hf.set_node(c, r, v as f32);
            }
        }
        objects.push(SceneObject {
            id: format!("bldg-{i:04}"),
            category: Category::Building,
            name_tokens: tokens(Category::Building, &mut rng),
            center: Point3::new(cx, cy, roof),
            footprint: Footprint::Rect { min: b.lo, max: b.hi },
            height: roof - terrain.at(cx, cy),
        });
    }
    for (i, c) in cars.iter().enumerate() {
        let [cx, cy] = c.center();
        objects.push(SceneObject {
            id: format!("car-{i:04}"),
            category: Category::Car,
            name_tokens: tokens(Category::Car, &mut rng),
            center: Point3::new(cx, cy, terrain.at(cx, cy) + CAR_HEIGHT),
            footprint: Footprint::Rect { min: c.lo, max: c.hi },
            height: CAR_HEIGHT,
        });
    }
    for (i, g) in greens.iter().enumerate() {
        let [cx, cy] = g.center();
        objects.push(SceneObject {
            id: format!("ground-{i:04}"),
            category: Category::Ground,
            name_tokens: tokens(Category::Ground, &mut rng),
            center: Point3::new(cx, cy, terrain.at(cx, cy)),
            footprint: Footprint::Polygon { ring: octagon(g) },
            height: 0.0,
        });
    }
    for (i, l) in lots.iter().enumerate() {
        let [cx, cy] = l.center();
        objects.push(SceneObject {
            id: format!("lot-{i:04}"),
            category: Category::ParkingLot,
            name_tokens: tokens(Category::ParkingLot, &mut rng),
            center: Point3::new(cx, cy, terrain.at(cx, cy)),
            footprint: Footprint::Rect { min: l.lo, max: l.hi },
            height: 0.0,
        });
    }

    let transform = MapTransform::new(params.origin_lat_lon.0, params.origin_lat_lon.1, 1.0, (w, h))
        .map_err(|e| WorldError::InvalidParams(e.to_string()))?;
    let to_map = |ring: Vec<[f64; 2]>| -> Vec<[f64; 2]> {
        ring.into_iter()
            .map(|[x, y]| [x / transform.meters_per_map_unit, y / transform.meters_per_map_unit])
            .collect()
    };

    let mut landmarks: Vec<Landmark> = streets
        .iter()
        .map(|s| Landmark {
            name: s.name.clone(),
            polygon: to_map(geometry::rect_ring(s.rect.lo, s.rect.hi)),
            kind: "street".into(),
        })
        .collect();
    let mut by_area: Vec<usize> = (0..buildings.len()).collect();
    by_area.sort_by(|&a, &b| (buildings[b].w() * buildings[b].h()).total_cmp(&(buildings[a].w() * buildings[a].h())));
    for &i in by_area.iter().take(params.named_buildings) {
        let name = name_from_pool(BUILDING_NAMES, &mut used_names, &mut rng);
        landmarks.push(Landmark {
            kind: kind_for(&name).into(),
            name,
            polygon: to_map(geometry::rect_ring(buildings[i].lo, buildings[i].hi)),
        });
    }
    for g in greens.iter().take((greens.len() / 2).max(2)) {
        landmarks.push(Landmark {
            name: name_from_pool(PARK_NAMES, &mut used_names, &mut rng),
            polygon: to_map(octagon(g)),
            kind: "park".into(),
        });
    }
    if landmarks.len() < MIN_LANDMARKS {
        return Err(WorldError::InvalidParams(format!(
            "layout produced {} landmarks, need {MIN_LANDMARKS}",
            landmarks.len()
        )));
    }

    let id = if params.id.is_empty() { format!("city-{seed}") } else { params.id.clone() };
    Scene::new(id, hf, objects, landmarks, transform)
}

fn crowded(what: &str) -> WorldError {
    WorldError::InvalidParams(format!("extent too small to place all {what}"))
}

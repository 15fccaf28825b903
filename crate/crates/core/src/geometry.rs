//! Planar polygon helpers shared by the landmark store and the map rasterizer.

use crate::scalar::Scalar;

pub type Vertex<S> = [S; 2];

/// Twice the signed area; positive for counterclockwise rings.
fn signed_area2<S: Scalar>(ring: &[Vertex<S>]) -> S {
    let n = ring.len();
    let mut acc = S::zero();
    for i in 0..n {
        let [x0, y0] = ring[i];
        let [x1, y1] = ring[(i + 1) % n];
        acc += x0 * y1 - x1 * y0;
    }
    acc
}

pub fn polygon_area<S: Scalar>(ring: &[Vertex<S>]) -> S {
    (signed_area2(ring) / S::lit(2.0)).abs()
}

/// Area centroid; falls back to the vertex mean for degenerate rings.
pub fn polygon_centroid<S: Scalar>(ring: &[Vertex<S>]) -> Vertex<S> {
    let a2 = signed_area2(ring);
    let n = ring.len();
    if n == 0 {
        return [S::zero(), S::zero()];
    }
    if a2.abs() <= S::epsilon() {
        let k = S::from_usize(n).unwrap_or_else(S::one);
        let sx: S = ring.iter().map(|p| p[0]).sum();
        let sy: S = ring.iter().map(|p| p[1]).sum();
        return [sx / k, sy / k];
    }
    let (mut cx, mut cy) = (S::zero(), S::zero());
    for i in 0..n {
        let [x0, y0] = ring[i];
        let [x1, y1] = ring[(i + 1) % n];
        let cross = x0 * y1 - x1 * y0;
        cx += (x0 + x1) * cross;
        cy += (y0 + y1) * cross;
    }
    let k = S::lit(3.0) * a2;
    [cx / k, cy / k]
}

pub fn bounding_box<S: Scalar>(ring: &[Vertex<S>]) -> (Vertex<S>, Vertex<S>) {
    let mut lo = [S::infinity(), S::infinity()];
    let mut hi = [S::neg_infinity(), S::neg_infinity()];
    for p in ring {
        lo = [lo[0].min(p[0]), lo[1].min(p[1])];
        hi = [hi[0].max(p[0]), hi[1].max(p[1])];
    }
    (lo, hi)
}

fn on_segment<S: Scalar>(p: Vertex<S>, a: Vertex<S>, b: Vertex<S>) -> bool {
    let cross = (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
    let scale = (b[0] - a[0]).abs() + (b[1] - a[1]).abs() + S::one();
    if cross.abs() > S::lit(1e-9) * scale {
        return false;
    }
    p[0] >= a[0].min(b[0]) && p[0] <= a[0].max(b[0]) && p[1] >= a[1].min(b[1]) && p[1] <= a[1].max(b[1])
}

/// Even-odd containment. Points on the boundary count as inside.
pub fn contains_point<S: Scalar>(ring: &[Vertex<S>], p: Vertex<S>) -> bool {
    let n = ring.len();
    if n < 3 {
        return false;
    }
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (ring[i], ring[j]);
        if on_segment(p, a, b) {
            return true;
        }
        if (a[1] > p[1]) != (b[1] > p[1]) {
            let x_cross = a[0] + (p[1] - a[1]) * (b[0] - a[0]) / (b[1] - a[1]);
            if p[0] < x_cross {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

fn orient<S: Scalar>(a: Vertex<S>, b: Vertex<S>, c: Vertex<S>) -> S {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

fn segments_intersect<S: Scalar>(p1: Vertex<S>, p2: Vertex<S>, q1: Vertex<S>, q2: Vertex<S>) -> bool {
    let d1 = orient(q1, q2, p1);
    let d2 = orient(q1, q2, p2);
    let d3 = orient(p1, p2, q1);
    let d4 = orient(p1, p2, q2);
    let z = S::zero();
    if ((d1 > z && d2 < z) || (d1 < z && d2 > z)) && ((d3 > z && d4 < z) || (d3 < z && d4 > z)) {
        return true;
    }
    (d1 == z && on_segment(p1, q1, q2))
        || (d2 == z && on_segment(p2, q1, q2))
        || (d3 == z && on_segment(q1, p1, p2))
        || (d4 == z && on_segment(q2, p1, p2))
}

/// True when no two non-adjacent edges touch and the ring has positive area.
pub fn is_simple<S: Scalar>(ring: &[Vertex<S>]) -> bool {
    let n = ring.len();
    if n < 3 || polygon_area(ring) <= S::zero() {
        return false;
    }
    for i in 0..n {
        let (a, b) = (ring[i], ring[(i + 1) % n]);
        for j in (i + 1)..n {
            let adjacent = j == i + 1 || (i == 0 && j == n - 1);
            if adjacent {
                continue;
            }
            let (c, d) = (ring[j], ring[(j + 1) % n]);
            if segments_intersect(a, b, c, d) {
                return false;
            }
        }
    }
    true
}

/// Whether a closed segment touches the closed axis-aligned box `[lo, hi]`.
pub fn segment_touches_box<S: Scalar>(a: Vertex<S>, b: Vertex<S>, lo: Vertex<S>, hi: Vertex<S>) -> bool {
    // Liang-Barsky clipping
    let (mut t0, mut t1) = (S::zero(), S::one());
    let d = [b[0] - a[0], b[1] - a[1]];
    for axis in 0..2 {
        if d[axis] == S::zero() {
            if a[axis] < lo[axis] || a[axis] > hi[axis] {
                return false;
            }
            continue;
        }
        let mut ta = (lo[axis] - a[axis]) / d[axis];
        let mut tb = (hi[axis] - a[axis]) / d[axis];
        if ta > tb {
            std::mem::swap(&mut ta, &mut tb);
        }
        t0 = t0.max(ta);
        t1 = t1.min(tb);
        if t0 > t1 {
            return false;
        }
    }
    true
}

pub fn point_segment_distance<S: Scalar>(p: Vertex<S>, a: Vertex<S>, b: Vertex<S>) -> S {
    let d = [b[0] - a[0], b[1] - a[1]];
    let len2 = d[0] * d[0] + d[1] * d[1];
    let t = if len2 > S::zero() {
        (((p[0] - a[0]) * d[0] + (p[1] - a[1]) * d[1]) / len2).max(S::zero()).min(S::one())
    } else {
        S::zero()
    };
    let c = [a[0] + t * d[0], a[1] + t * d[1]];
    ((p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2)).sqrt()
}

/// Distance from a point to a polygon region; zero inside.
pub fn distance_to_polygon<S: Scalar>(ring: &[Vertex<S>], p: Vertex<S>) -> S {
    if contains_point(ring, p) {
        return S::zero();
    }
    nearest_boundary_point(ring, p).1
}

/// Closest point on the polygon boundary and its distance.
pub fn nearest_boundary_point<S: Scalar>(ring: &[Vertex<S>], p: Vertex<S>) -> (Vertex<S>, S) {
    let n = ring.len();
    let mut best = (ring.first().copied().unwrap_or([S::zero(), S::zero()]), S::infinity());
    for i in 0..n {
        let (a, b) = (ring[i], ring[(i + 1) % n]);
        let d = [b[0] - a[0], b[1] - a[1]];
        let len2 = d[0] * d[0] + d[1] * d[1];
        let t = if len2 > S::zero() {
            (((p[0] - a[0]) * d[0] + (p[1] - a[1]) * d[1]) / len2).max(S::zero()).min(S::one())
        } else {
            S::zero()
        };
        let c = [a[0] + t * d[0], a[1] + t * d[1]];
        let dist = ((p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2)).sqrt();
        if dist < best.1 {
            best = (c, dist);
        }
    }
    best
}

pub fn rect_ring<S: Scalar>(lo: Vertex<S>, hi: Vertex<S>) -> Vec<Vertex<S>> {
    vec![lo, [hi[0], lo[1]], hi, [lo[0], hi[1]]]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square() -> Vec<[f64; 2]> {
        rect_ring([0.0, 0.0], [10.0, 10.0])
    }

    #[test]
    fn containment_including_boundary() {
        let sq = square();
        assert!(contains_point(&sq, [5.0, 5.0]));
        assert!(contains_point(&sq, [0.0, 5.0]));
        assert!(contains_point(&sq, [10.0, 10.0]));
        assert!(!contains_point(&sq, [11.0, 5.0]));
        assert!(!contains_point(&sq, [-1.0, -1.0]));
    }

    #[test]
    fn concave_ring() {
        let l = vec![[0.0, 0.0], [10.0, 0.0], [10.0, 4.0], [4.0, 4.0], [4.0, 10.0], [0.0, 10.0]];
        assert!(contains_point(&l, [2.0, 8.0]));
        assert!(!contains_point(&l, [8.0, 8.0]));
        assert_eq!(polygon_area(&l), 64.0);
        assert!(is_simple(&l));
    }

    #[test]
    fn area_and_centroid() {
        let sq = square();
        assert_eq!(polygon_area(&sq), 100.0);
        assert_eq!(polygon_centroid(&sq), [5.0, 5.0]);
    }

    #[test]
    fn bowtie_is_not_simple() {
        let bow = vec![[0.0, 0.0], [10.0, 10.0], [10.0, 0.0], [0.0, 10.0]];
        assert!(!is_simple(&bow));
        assert!(is_simple(&square()));
    }

    #[test]
    fn segment_box() {
        assert!(segment_touches_box([-5.0, 5.0], [15.0, 5.0], [0.0, 0.0], [2.0, 2.0]) == false);
        assert!(segment_touches_box([-5.0, 1.0], [15.0, 1.0], [0.0, 0.0], [2.0, 2.0]));
        assert!(segment_touches_box([2.0, -1.0], [2.0, 3.0], [0.0, 0.0], [2.0, 2.0]));
    }

    #[test]
    fn distance_outside() {
        assert_eq!(distance_to_polygon(&square(), [13.0, 14.0]), 5.0);
        assert_eq!(distance_to_polygon(&square(), [3.0, 3.0]), 0.0);
    }
}

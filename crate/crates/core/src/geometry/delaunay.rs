//! Incremental (Bowyer–Watson) Delaunay triangulation in the plane and the
//! Voronoi cell data derived from it.
//!
//! Predicates are exact (`robust`). Inputs with duplicate points or exact
//! cocircularities are rebuilt once with a deterministic seeded jitter of
//! magnitude below 1e-10, so the output never depends on insertion luck.

use rand::Rng;
use robust::{incircle, orient2d, Coord};
use serde::{Deserialize, Serialize};

use crate::error::{param, Result};
use crate::point_process::PointConfiguration;
use crate::seed::{self, tag};

const NONE: u32 = u32::MAX;
const JITTER: f64 = 1e-10;

#[derive(Clone, Copy, Debug)]
struct Tri {
    /// Counter-clockwise vertices.
    v: [u32; 3],
    /// `n[i]` is the triangle across the edge opposite `v[i]`.
    n: [u32; 3],
}

#[derive(Debug)]
struct Degenerate;

/// Delaunay triangulation of a planar point set.
#[derive(Clone, Debug)]
pub struct Delaunay {
    pts: Vec<[f64; 2]>,
    n_real: usize,
    tris: Vec<Tri>,
    jittered: bool,
}

#[inline]
fn c(p: [f64; 2]) -> Coord<f64> {
    Coord { x: p[0], y: p[1] }
}

impl Delaunay {
    /// Triangulates `points`; `jitter_seed` drives the degeneracy fallback.
    pub fn new(points: &[[f64; 2]], jitter_seed: u64) -> Self {
        match Builder::run(points) {
            Ok(d) => d,
            Err(Degenerate) => {
                let mut rng = seed::rng(seed::derive(jitter_seed, &[tag::JITTER]));
                let moved: Vec<[f64; 2]> = points
                    .iter()
                    .map(|p| {
                        [
                            p[0] + JITTER * (rng.random::<f64>() - 0.5),
                            p[1] + JITTER * (rng.random::<f64>() - 0.5),
                        ]
                    })
                    .collect();
                let mut d = Builder::run_lenient(&moved);
                d.jittered = true;
                d
            }
        }
    }

    pub fn len(&self) -> usize {
        self.n_real
    }

    pub fn is_empty(&self) -> bool {
        self.n_real == 0
    }

    /// Whether the degeneracy fallback was used.
    pub fn jittered(&self) -> bool {
        self.jittered
    }

    /// Coordinates actually triangulated (jittered if the fallback ran).
    pub fn point(&self, i: usize) -> [f64; 2] {
        self.pts[i]
    }

    fn is_real(&self, v: u32) -> bool {
        (v as usize) < self.n_real
    }

    /// Triangles whose three vertices are input points.
    pub fn triangles(&self) -> impl Iterator<Item = [u32; 3]> + '_ {
        self.tris.iter().filter(|t| t.v.iter().all(|&v| self.is_real(v))).map(|t| t.v)
    }

    /// Delaunay edges between input points, each once with `a < b`.
    pub fn edges(&self) -> Vec<(u32, u32)> {
        let mut out = Vec::new();
        for t in &self.tris {
            for i in 0..3 {
                let (a, b) = (t.v[(i + 1) % 3], t.v[(i + 2) % 3]);
                if a < b && self.is_real(a) && self.is_real(b) {
                    out.push((a, b));
                }
            }
        }
        out.sort_unstable();
        out
    }

    fn circumcenter(&self, t: &Tri) -> [f64; 2] {
        let [a, b, cc] = t.v.map(|v| self.pts[v as usize]);
        let (bx, by) = (b[0] - a[0], b[1] - a[1]);
        let (cx, cy) = (cc[0] - a[0], cc[1] - a[1]);
        let d = 2.0 * (bx * cy - by * cx);
        if d == 0.0 {
            // Flat triangle: push the vertex far along the edge normal.
            return [a[0] + 1e12 * -by, a[1] + 1e12 * bx];
        }
        let b2 = bx * bx + by * by;
        let c2 = cx * cx + cy * cy;
        [a[0] + (cy * b2 - by * c2) / d, a[1] + (bx * c2 - cx * b2) / d]
    }

    /// Voronoi cell data of the input points, measured from the origin.
    pub fn voronoi(&self) -> VoronoiCells {
        let centers: Vec<[f64; 2]> = self.tris.iter().map(|t| self.circumcenter(t)).collect();
        let n = self.n_real;
        let mut edges = Vec::new();
        let mut max_norm = vec![0.0f64; n];
        let mut min_norm = vec![f64::INFINITY; n];
        for (ti, t) in self.tris.iter().enumerate() {
            for i in 0..3 {
                let u = t.n[i];
                if u == NONE {
                    continue;
                }
                let (a, b) = (t.v[(i + 1) % 3], t.v[(i + 2) % 3]);
                // Each edge is seen from both sides; keep the side with a < b.
                if a > b {
                    continue;
                }
                let seg = [centers[ti], centers[u as usize]];
                let far = norm(seg[0]).max(norm(seg[1]));
                let near = segment_distance([0.0, 0.0], seg);
                for v in [a, b] {
                    if self.is_real(v) {
                        let v = v as usize;
                        max_norm[v] = max_norm[v].max(far);
                        min_norm[v] = min_norm[v].min(near);
                    }
                }
                if self.is_real(a) && self.is_real(b) {
                    edges.push(VoronoiEdge { a, b, seg });
                }
            }
        }
        // The cell owning the origin reaches it.
        if let Some(o) = (0..n).min_by(|&i, &j| {
            let (pi, pj) = (self.pts[i], self.pts[j]);
            (norm2(pi), pi).partial_cmp(&(norm2(pj), pj)).unwrap()
        }) {
            min_norm[o] = 0.0;
        }
        edges.sort_by_key(|e| (e.a, e.b));
        VoronoiCells { n, edges, max_norm, min_norm }
    }
}

impl Delaunay {
    /// Vertices of every input point's Voronoi cell in counter-clockwise order.
    ///
    /// Hull cells are closed off by the circumcentres of super-triangle faces.
    pub fn cell_polygons(&self) -> Vec<Vec<[f64; 2]>> {
        let mut around: Vec<Vec<[f64; 2]>> = vec![Vec::new(); self.n_real];
        for t in &self.tris {
            let cc = self.circumcenter(t);
            for &v in &t.v {
                if self.is_real(v) {
                    around[v as usize].push(cc);
                }
            }
        }
        for (i, poly) in around.iter_mut().enumerate() {
            let o = self.pts[i];
            poly.sort_by(|a, b| {
                let ta = (a[1] - o[1]).atan2(a[0] - o[0]);
                let tb = (b[1] - o[1]).atan2(b[0] - o[0]);
                ta.total_cmp(&tb)
            });
        }
        around
    }
}

/// Clips a convex polygon to the closed box `[-r, r]^2`.
pub fn clip_to_square(poly: &[[f64; 2]], r: f64) -> Vec<[f64; 2]> {
    let mut cur = poly.to_vec();
    for (axis, sign) in [(0usize, -1.0f64), (0, 1.0), (1, -1.0), (1, 1.0)] {
        if cur.is_empty() {
            break;
        }
        let bound = sign * r;
        let inside = |q: &[f64; 2]| sign * q[axis] <= r;
        let mut next = Vec::with_capacity(cur.len() + 1);
        for i in 0..cur.len() {
            let (a, b) = (cur[i], cur[(i + 1) % cur.len()]);
            let (ia, ib) = (inside(&a), inside(&b));
            if ia {
                next.push(a);
            }
            if ia != ib {
                let t = (bound - a[axis]) / (b[axis] - a[axis]);
                let mut q = [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
                q[axis] = bound;
                next.push(q);
            }
        }
        cur = next;
    }
    cur
}

fn norm2(p: [f64; 2]) -> f64 {
    p[0] * p[0] + p[1] * p[1]
}

fn norm(p: [f64; 2]) -> f64 {
    norm2(p).sqrt()
}

/// Distance from `q` to a closed segment.
pub fn segment_distance(q: [f64; 2], seg: [[f64; 2]; 2]) -> f64 {
    let [a, b] = seg;
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let l2 = dx * dx + dy * dy;
    let t = if l2 > 0.0 { (((q[0] - a[0]) * dx + (q[1] - a[1]) * dy) / l2).clamp(0.0, 1.0) } else { 0.0 };
    let (px, py) = (a[0] + t * dx - q[0], a[1] + t * dy - q[1]);
    (px * px + py * py).sqrt()
}

/// Whether a closed segment meets the closed box `[lo, hi]` (Liang–Barsky).
pub fn segment_hits_box(seg: [[f64; 2]; 2], lo: [f64; 2], hi: [f64; 2]) -> bool {
    let [a, b] = seg;
    let (mut t0, mut t1) = (0.0f64, 1.0f64);
    for k in 0..2 {
        let d = b[k] - a[k];
        if d == 0.0 {
            if a[k] < lo[k] || a[k] > hi[k] {
                return false;
            }
            continue;
        }
        let (mut ta, mut tb) = ((lo[k] - a[k]) / d, (hi[k] - a[k]) / d);
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

/// One Voronoi edge, shared by the cells of input points `a < b`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VoronoiEdge {
    pub a: u32,
    pub b: u32,
    pub seg: [[f64; 2]; 2],
}

/// Voronoi cells summarised for connection events around the origin.
///
/// Cells of points on the hull are unbounded; their far vertices come from
/// the enclosing super-triangle and sit about 1e4 window widths away.
#[derive(Clone, Debug)]
pub struct VoronoiCells {
    pub n: usize,
    pub edges: Vec<VoronoiEdge>,
    /// Largest distance from the origin to a point of the cell.
    pub max_norm: Vec<f64>,
    /// Distance from the origin to the cell.
    pub min_norm: Vec<f64>,
}

struct Builder {
    d: Delaunay,
    last: u32,
    mark: Vec<u32>,
    stamp: u32,
    strict: bool,
    bad: Vec<u32>,
    stack: Vec<u32>,
    boundary: Vec<(u32, u32, u32)>,
    ids: Vec<u32>,
}

impl Builder {
    fn run(points: &[[f64; 2]]) -> Result<Delaunay, Degenerate> {
        let mut b = Builder::setup(points, true);
        for i in insertion_order(points) {
            b.insert(i)?;
        }
        Ok(b.d)
    }

    fn run_lenient(points: &[[f64; 2]]) -> Delaunay {
        let mut b = Builder::setup(points, false);
        for i in insertion_order(points) {
            // Duplicates that survive jitter are simply skipped.
            let _ = b.insert(i);
        }
        b.d
    }

    fn setup(points: &[[f64; 2]], strict: bool) -> Builder {
        let n = points.len();
        let (mut lo, mut hi) = ([0.0f64; 2], [0.0f64; 2]);
        if let Some(f) = points.first() {
            lo = *f;
            hi = *f;
        }
        for p in points {
            for k in 0..2 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        let cx = 0.5 * (lo[0] + hi[0]);
        let cy = 0.5 * (lo[1] + hi[1]);
        let span = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1.0) * 1e4;
        let mut pts = points.to_vec();
        pts.push([cx - 2.0 * span, cy - span]);
        pts.push([cx + 2.0 * span, cy - span]);
        pts.push([cx, cy + 2.0 * span]);
        let s = n as u32;
        let tris = vec![Tri { v: [s, s + 1, s + 2], n: [NONE; 3] }];
        Builder {
            d: Delaunay { pts, n_real: n, tris, jittered: false },
            last: 0,
            mark: vec![0],
            stamp: 0,
            strict,
            bad: Vec::new(),
            stack: Vec::new(),
            boundary: Vec::new(),
            ids: Vec::new(),
        }
    }

    fn orient(&self, a: u32, b: u32, p: [f64; 2]) -> f64 {
        orient2d(c(self.d.pts[a as usize]), c(self.d.pts[b as usize]), c(p))
    }

    fn locate(&self, p: [f64; 2]) -> u32 {
        let mut t = self.last;
        let mut rot = 0usize;
        'walk: loop {
            let tri = self.d.tris[t as usize];
            rot += 1;
            for k in 0..3 {
                let i = (k + rot) % 3;
                let (a, b) = (tri.v[(i + 1) % 3], tri.v[(i + 2) % 3]);
                if self.orient(a, b, p) < 0.0 && tri.n[i] != NONE {
                    t = tri.n[i];
                    continue 'walk;
                }
            }
            return t;
        }
    }

    fn insert(&mut self, pi: u32) -> Result<(), Degenerate> {
        let p = self.d.pts[pi as usize];
        let t0 = self.locate(p);
        if self.d.tris[t0 as usize].v.iter().any(|&v| self.d.pts[v as usize] == p) {
            return Err(Degenerate);
        }
        self.stamp += 1;
        let stamp = self.stamp;
        self.mark[t0 as usize] = stamp;
        let mut bad = std::mem::take(&mut self.bad);
        let mut stack = std::mem::take(&mut self.stack);
        let mut boundary = std::mem::take(&mut self.boundary);
        let mut ids = std::mem::take(&mut self.ids);
        bad.clear();
        stack.clear();
        boundary.clear();
        ids.clear();
        bad.push(t0);
        stack.push(t0);
        while let Some(t) = stack.pop() {
            let tri = self.d.tris[t as usize];
            for i in 0..3 {
                let nb = tri.n[i];
                if nb != NONE && self.mark[nb as usize] == stamp {
                    continue;
                }
                let inside = nb != NONE && {
                    let v = self.d.tris[nb as usize].v;
                    let ic = incircle(
                        c(self.d.pts[v[0] as usize]),
                        c(self.d.pts[v[1] as usize]),
                        c(self.d.pts[v[2] as usize]),
                        c(p),
                    );
                    if ic == 0.0 && self.strict && v.iter().all(|&x| self.d.is_real(x)) {
                        self.bad = bad;
                        self.stack = stack;
                        self.boundary = boundary;
                        self.ids = ids;
                        return Err(Degenerate);
                    }
                    ic > 0.0
                };
                if inside {
                    self.mark[nb as usize] = stamp;
                    bad.push(nb);
                    stack.push(nb);
                } else {
                    boundary.push((tri.v[(i + 1) % 3], tri.v[(i + 2) % 3], nb));
                }
            }
        }
        // New fan around p, reusing the freed slots first.
        for (k, &(a, b, nb)) in boundary.iter().enumerate() {
            let tri = Tri { v: [a, b, pi], n: [NONE, NONE, nb] };
            let id = if k < bad.len() {
                self.d.tris[bad[k] as usize] = tri;
                bad[k]
            } else {
                self.d.tris.push(tri);
                self.mark.push(0);
                (self.d.tris.len() - 1) as u32
            };
            ids.push(id);
            if nb != NONE {
                let nt = &mut self.d.tris[nb as usize];
                for j in 0..3 {
                    let (x, y) = (nt.v[(j + 1) % 3], nt.v[(j + 2) % 3]);
                    if x == b && y == a {
                        nt.n[j] = id;
                    }
                }
            }
        }
        for (k, &(a, b, _)) in boundary.iter().enumerate() {
            let next = boundary.iter().position(|&(s, _, _)| s == b).expect("closed cavity");
            let prev = boundary.iter().position(|&(_, e, _)| e == a).expect("closed cavity");
            let t = &mut self.d.tris[ids[k] as usize];
            t.n[0] = ids[next];
            t.n[1] = ids[prev];
        }
        self.last = ids[0];
        self.bad = bad;
        self.stack = stack;
        self.boundary = boundary;
        self.ids = ids;
        Ok(())
    }
}

/// Serpentine row order, so that consecutive insertions are close.
fn insertion_order(points: &[[f64; 2]]) -> Vec<u32> {
    let n = points.len();
    if n == 0 {
        return vec![];
    }
    let ymin = points.iter().map(|p| p[1]).fold(f64::INFINITY, f64::min);
    let ymax = points.iter().map(|p| p[1]).fold(f64::NEG_INFINITY, f64::max);
    let rows = ((n as f64).sqrt() / 2.0).ceil().max(1.0);
    let hgt = ((ymax - ymin) / rows).max(1e-12);
    let mut keyed: Vec<(i64, f64, u32)> = points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let r = ((p[1] - ymin) / hgt).floor() as i64;
            let x = if r % 2 == 0 { p[0] } else { -p[0] };
            (r, x, i as u32)
        })
        .collect();
    keyed.sort_by(|a, b| (a.0, a.1, a.2).partial_cmp(&(b.0, b.1, b.2)).unwrap());
    keyed.into_iter().map(|k| k.2).collect()
}

/// Graph on the points of a configuration whose cells share an edge.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdjacencyGraph {
    pub vertices: usize,
    pub edges: Vec<(u32, u32)>,
}

impl AdjacencyGraph {
    pub fn neighbors(&self, v: u32) -> impl Iterator<Item = u32> + '_ {
        self.edges.iter().filter_map(move |&(a, b)| {
            if a == v {
                Some(b)
            } else if b == v {
                Some(a)
            } else {
                None
            }
        })
    }
}

/// Cell adjacency of a planar configuration, restricted to pairs whose shared
/// Voronoi edge meets the padded window.
pub fn delaunay_adjacency_2d(config: &PointConfiguration) -> Result<AdjacencyGraph> {
    if config.dim() != 2 {
        return param("exact Delaunay adjacency needs d = 2");
    }
    if config.len() < 2 {
        return Ok(AdjacencyGraph { vertices: config.len(), edges: vec![] });
    }
    let pts = planar_points(config);
    let del = Delaunay::new(&pts, config.manifest().root_seed);
    let r = config.window().outer();
    let vor = del.voronoi();
    let edges = vor
        .edges
        .iter()
        .filter(|e| segment_hits_box(e.seg, [-r, -r], [r, r]))
        .map(|e| (e.a, e.b))
        .collect();
    Ok(AdjacencyGraph { vertices: config.len(), edges })
}

pub(crate) fn planar_points(config: &PointConfiguration) -> Vec<[f64; 2]> {
    config.coords().chunks(2).map(|x| [x[0], x[1]]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::point_process::{sample_configuration, Window};

    fn empty_circles_hold(d: &Delaunay) -> bool {
        d.triangles().all(|t| {
            let [a, b, cc] = t.map(|v| c(d.point(v as usize)));
            (0..d.len()).filter(|&q| !t.contains(&(q as u32))).all(|q| incircle(a, b, cc, c(d.point(q))) <= 0.0)
        })
    }

    #[test]
    fn triangle_has_three_edges() {
        let d = Delaunay::new(&[[0.0, 0.0], [1.0, 0.0], [0.3, 0.8]], 1);
        assert_eq!(d.edges(), vec![(0, 1), (0, 2), (1, 2)]);
        assert_eq!(d.triangles().count(), 1);
    }

    #[test]
    fn square_gets_one_diagonal() {
        let d = Delaunay::new(&[[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]], 1);
        assert!(d.jittered());
        assert_eq!(d.edges().len(), 5);
        assert_eq!(d.triangles().count(), 2);
    }

    #[test]
    fn duplicates_are_jittered() {
        let d = Delaunay::new(&[[0.0, 0.0], [1.0, 0.0], [0.0, 0.0], [0.2, 0.9]], 7);
        assert!(d.jittered());
        assert!(empty_circles_hold(&d));
    }

    #[test]
    fn collinear_points_form_a_path() {
        let d = Delaunay::new(&[[0.0, 0.0], [2.0, 0.0], [1.0, 0.0], [3.0, 0.0]], 1);
        assert_eq!(d.edges(), vec![(0, 2), (1, 2), (1, 3)]);
    }

    #[test]
    fn random_sets_satisfy_empty_circumcircles() {
        let w = Window::new(2, 4.0, 3.0).unwrap();
        for s in 0..5 {
            let cfg = sample_configuration(&w, 0.5, s).unwrap();
            let d = Delaunay::new(&planar_points(&cfg), s);
            assert!(!d.jittered());
            assert!(empty_circles_hold(&d));
            // Euler: interior triangulation of n points with h hull points has 2n - h - 2 triangles.
            assert!(d.triangles().count() > cfg.len());
        }
    }

    #[test]
    fn polygons_tile_the_square() {
        let w = Window::new(2, 3.0, 3.0).unwrap();
        let cfg = sample_configuration(&w, 0.5, 5).unwrap();
        let d = Delaunay::new(&planar_points(&cfg), 5);
        let area: f64 = d
            .cell_polygons()
            .iter()
            .map(|p| {
                let q = clip_to_square(p, 2.0);
                (0..q.len())
                    .map(|i| {
                        let (a, b) = (q[i], q[(i + 1) % q.len()]);
                        a[0] * b[1] - a[1] * b[0]
                    })
                    .sum::<f64>()
                    / 2.0
            })
            .sum();
        assert!((area - 16.0).abs() < 1e-9, "{area}");
    }

    #[test]
    fn adjacency_is_symmetric_without_loops() {
        let w = Window::new(2, 3.0, 3.0).unwrap();
        let cfg = sample_configuration(&w, 0.5, 3).unwrap();
        let g = delaunay_adjacency_2d(&cfg).unwrap();
        assert!(g.edges.iter().all(|&(a, b)| a < b));
        let mut e = g.edges.clone();
        e.dedup();
        assert_eq!(e.len(), g.edges.len());
    }
}

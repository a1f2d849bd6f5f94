//! Connection events on a configuration: `0 <-> S_n`, `x <-> S_k`,
//! `B_r <-> S_n`, box crossings and their white duals.
//!
//! Both engines reduce an event to a [`CellGraph`]: nodes are Voronoi cells
//! (exact engine) or same-owner raster fragments, each tagged with flag bits,
//! and the event holds iff one monochromatic component carries both flags.

use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::geometry::delaunay::{clip_to_square, planar_points, segment_distance, segment_hits_box};
use crate::geometry::{nearest_point, rasterize_with, ColorGrid, Delaunay, NearestIndex, SiteBox, DEFAULT_SITE_BUDGET};
use crate::point_process::PointConfiguration;
use crate::union_find::UnionFind;

/// Source flag.
pub const SRC: u8 = 1;
/// Target flag.
pub const DST: u8 = 2;
const IN: u8 = 0x80;
/// Diagonal link joining a block's anchor site to its far corner.
pub const MAIN: u8 = 1;
/// Diagonal link joining the two other corners of a block.
pub const ANTI: u8 = 2;

/// Whether the bisector of `a` and `c` meets the square `[x0, x0+h]×[y0, y0+h]`
/// at points no farther from `a` than from `b` and `d`.
fn bisector_crosses(a: [f64; 2], c: [f64; 2], b: [f64; 2], d: [f64; 2], x0: f64, y0: f64, h: f64) -> bool {
    let m = [(a[0] + c[0]) / 2.0, (a[1] + c[1]) / 2.0];
    let u = [a[1] - c[1], c[0] - a[0]];
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    // g · (m + t u) <= rhs
    let mut clip = |g: [f64; 2], rhs: f64| {
        let gm = g[0] * m[0] + g[1] * m[1];
        let gu = g[0] * u[0] + g[1] * u[1];
        if gu == 0.0 {
            if gm > rhs {
                lo = f64::INFINITY;
            }
        } else if gu > 0.0 {
            hi = hi.min((rhs - gm) / gu);
        } else {
            lo = lo.max((rhs - gm) / gu);
        }
    };
    clip([-1.0, 0.0], -x0);
    clip([1.0, 0.0], x0 + h);
    clip([0.0, -1.0], -y0);
    clip([0.0, 1.0], y0 + h);
    let n2 = |p: [f64; 2]| p[0] * p[0] + p[1] * p[1];
    for q in [b, d] {
        clip([2.0 * (q[0] - a[0]), 2.0 * (q[1] - a[1])], n2(q) - n2(a));
    }
    lo <= hi
}

/// Link code of a 2×2 block with corner owners `[(i,j), (i,j+1), (i+1,j), (i+1,j+1)]`.
pub(crate) fn diagonal_code(o: [u32; 4], pos: impl Fn(u32) -> [f64; 2], x0: f64, y0: f64, h: f64) -> u8 {
    let [oa, ob, oc, od] = o;
    if oa == ob || oa == oc || od == ob || od == oc {
        return 0;
    }
    if oa == od {
        return MAIN;
    }
    if ob == oc {
        return ANTI;
    }
    let (a, b, c, d) = (pos(oa), pos(ob), pos(oc), pos(od));
    if bisector_crosses(a, d, b, c, x0, y0, h) {
        MAIN
    } else if bisector_crosses(b, c, a, d, x0, y0, h) {
        ANTI
    } else {
        0
    }
}

/// Corner sites of the block anchored at `s` in a planar grid.
pub(crate) fn block_corners(s: usize, strides: &[usize]) -> [usize; 4] {
    [s, s + strides[1], s + strides[0], s + strides[0] + strides[1]]
}

/// Linked pair of a block code.
pub(crate) fn diagonal_pair(s: usize, code: u8, strides: &[usize]) -> (usize, usize) {
    let c = block_corners(s, strides);
    if code == MAIN {
        (c[0], c[3])
    } else {
        (c[1], c[2])
    }
}

/// Link codes for every block of a planar grid (empty in other dimensions).
pub(crate) fn diagonal_codes(g: &ColorGrid, config: &PointConfiguration) -> Vec<u8> {
    if g.dim != 2 {
        return Vec::new();
    }
    let strides = g.strides();
    let shape = g.shape();
    let pos = |id: u32| {
        let p = config.point(id as usize);
        [p[0], p[1]]
    };
    let mut out = vec![0u8; g.len()];
    for i in 0..shape[0] - 1 {
        for j in 0..shape[1] - 1 {
            let s = i * strides[0] + j;
            let c = block_corners(s, &strides);
            let o = c.map(|t| g.owner[t]);
            let x0 = (i as i64 + g.sites.lo[0]) as f64 * g.h;
            let y0 = (j as i64 + g.sites.lo[1]) as f64 * g.h;
            out[s] = diagonal_code(o, pos, x0, y0, g.h);
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "engine", rename_all = "snake_case")]
pub enum Engine {
    /// Site percolation on the lattice `hZ^d`: orthogonal neighbours, plus
    /// in the plane the diagonal of each 2×2 block whose two cells share an
    /// edge crossing the block.
    Raster { h: f64 },
    /// Exact planar Voronoi adjacency.
    Delaunay2d,
}

impl Engine {
    /// How far the raster blurs a sphere; zero for the exact engine.
    pub fn slack(&self, dim: usize) -> f64 {
        match self {
            Engine::Raster { h } => h * (dim as f64).sqrt(),
            Engine::Delaunay2d => 0.0,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Engine::Raster { .. } => "raster",
            Engine::Delaunay2d => "delaunay",
        }
    }

    pub fn pitch(&self) -> Option<f64> {
        match self {
            Engine::Raster { h } => Some(*h),
            Engine::Delaunay2d => None,
        }
    }
}

/// Side of `Λ_n`; left/right is axis 0, bottom/top axis 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
    Bottom,
    Top,
}

impl Side {
    pub const ALL: [Side; 4] = [Side::Left, Side::Right, Side::Bottom, Side::Top];

    fn axis(self) -> usize {
        match self {
            Side::Left | Side::Right => 0,
            Side::Bottom | Side::Top => 1,
        }
    }

    fn upper(self) -> bool {
        matches!(self, Side::Right | Side::Top)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind {
    /// The origin is joined to `S_n` by a black path.
    OriginToSphere { n: f64 },
    /// The point `x` is joined to `S_k` by a black path inside `B_L`.
    PointToSphere { x: Vec<f64>, k: f64 },
    /// Black left-right crossing of `Λ_n = [-n, n]^d`.
    BoxCrossing { n: f64 },
    /// `B_r` is joined to `S_n` by a black path.
    BoxToSphere { r: f64, n: f64 },
    /// White bottom-top crossing of `Λ_n`. Decreasing.
    WhiteCrossing { n: f64 },
    /// `B_k` is joined inside `Λ_n` to one side of `Λ_n`.
    BallToSide { k: f64, n: f64, side: Side },
}

impl EventKind {
    pub fn is_increasing(&self) -> bool {
        !matches!(self, EventKind::WhiteCrossing { .. })
    }

    /// Colour whose paths realise the event.
    pub fn black_paths(&self) -> bool {
        self.is_increasing()
    }

    pub fn label(&self) -> String {
        match self {
            EventKind::OriginToSphere { n } => format!("origin_to_sphere({n})"),
            EventKind::PointToSphere { x, k } => format!("point_to_sphere({x:?},{k})"),
            EventKind::BoxCrossing { n } => format!("box_crossing({n})"),
            EventKind::BoxToSphere { r, n } => format!("box_to_sphere({r},{n})"),
            EventKind::WhiteCrossing { n } => format!("white_crossing({n})"),
            EventKind::BallToSide { k, n, side } => format!("ball_to_side({k},{n},{side:?})"),
        }
    }

    /// Largest radius the event looks at, in the sup norm.
    pub fn extent(&self, half_width: f64) -> f64 {
        match self {
            EventKind::OriginToSphere { n } | EventKind::BoxToSphere { n, .. } => *n,
            EventKind::PointToSphere { .. } => half_width,
            EventKind::BoxCrossing { n } | EventKind::WhiteCrossing { n } | EventKind::BallToSide { n, .. } => *n,
        }
    }

    fn domain(&self, half_width: f64) -> Domain {
        match self {
            EventKind::OriginToSphere { n } | EventKind::BoxToSphere { n, .. } => Domain::Ball(*n),
            EventKind::PointToSphere { .. } => Domain::Ball(half_width),
            EventKind::BoxCrossing { n } | EventKind::WhiteCrossing { n } | EventKind::BallToSide { n, .. } => {
                Domain::Cube(*n)
            }
        }
    }
}

#[derive(Clone, Copy, Debug)]
enum Domain {
    Ball(f64),
    Cube(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventSpec {
    pub kind: EventKind,
    pub engine: Engine,
}

impl EventSpec {
    pub fn new(kind: EventKind, engine: Engine) -> Self {
        EventSpec { kind, engine }
    }

    /// Checks radii against the window and the engine against the dimension.
    pub fn validate(&self, config: &PointConfiguration) -> Result<()> {
        let dim = config.dim();
        let l = config.window().half_width;
        if let Engine::Raster { h } = self.engine {
            if !(h > 0.0 && h.is_finite()) {
                return param(format!("raster pitch must be positive, got {h}"));
            }
        }
        if self.engine == Engine::Delaunay2d && dim != 2 {
            return param(format!("the Delaunay engine needs d = 2, got d = {dim}"));
        }
        let radii: Vec<f64> = match &self.kind {
            EventKind::OriginToSphere { n } => vec![*n],
            EventKind::PointToSphere { x, k } => {
                if x.len() != dim {
                    return param("point dimension does not match the configuration");
                }
                if x.iter().any(|c| c.abs() > l) {
                    return param("point lies outside [-L, L]^d");
                }
                vec![*k]
            }
            EventKind::BoxCrossing { n } | EventKind::WhiteCrossing { n } => vec![*n],
            EventKind::BoxToSphere { r, n } => {
                if r >= n {
                    return param("box_to_sphere needs r < n");
                }
                vec![*r, *n]
            }
            EventKind::BallToSide { k, n, .. } => {
                if k >= n {
                    return param("ball_to_side needs k < n");
                }
                vec![*k, *n]
            }
        };
        for r in radii {
            if !(r > 0.0 && r <= l) {
                return param(format!("radius {r} must lie in (0, L] with L = {l}"));
            }
        }
        Ok(())
    }
}

/// Monochromatic-component view of one event on one configuration.
#[derive(Clone, Debug)]
pub struct CellGraph {
    /// Configuration point owning each node.
    pub owner: Vec<u32>,
    pub flags: Vec<u8>,
    /// Largest distance from the origin reached by each node.
    pub reach: Vec<f64>,
    pub edges: Vec<(u32, u32)>,
    /// Whether the event asks for black (true) or white paths.
    pub black: bool,
}

impl CellGraph {
    fn merged(&self, colors: &[bool]) -> UnionFind {
        let mut uf = UnionFind::new(self.owner.len());
        for &(a, b) in &self.edges {
            let ca = colors[self.owner[a as usize] as usize];
            let cb = colors[self.owner[b as usize] as usize];
            if ca == self.black && cb == self.black {
                uf.union(a, b);
            }
        }
        uf
    }

    fn active(&self, colors: &[bool], v: usize) -> bool {
        colors[self.owner[v] as usize] == self.black
    }

    /// Whether the event holds under per-point colours `colors`.
    pub fn holds(&self, colors: &[bool]) -> bool {
        let mut uf = self.merged(colors);
        let mut acc = vec![0u8; self.owner.len()];
        for v in 0..self.owner.len() {
            if self.active(colors, v) && self.flags[v] & (SRC | DST) != 0 {
                let r = uf.find(v as u32) as usize;
                acc[r] |= self.flags[v];
                if acc[r] & (SRC | DST) == SRC | DST {
                    return true;
                }
            }
        }
        false
    }

    /// Largest reach of a component containing a source node, if any.
    pub fn reach(&self, colors: &[bool]) -> Option<f64> {
        let mut uf = self.merged(colors);
        let n = self.owner.len();
        let mut best = vec![f64::NEG_INFINITY; n];
        let mut has_src = vec![false; n];
        for v in 0..n {
            if self.active(colors, v) {
                let r = uf.find(v as u32) as usize;
                best[r] = best[r].max(self.reach[v]);
                has_src[r] |= self.flags[v] & SRC != 0;
            }
        }
        (0..n).filter(|&r| has_src[r]).map(|r| best[r]).reduce(f64::max)
    }

    /// Points whose cells (or fragments) appear in the graph.
    pub fn relevant_points(&self) -> Vec<u32> {
        let mut v = self.owner.clone();
        v.sort_unstable();
        v.dedup();
        v
    }
}

/// Raster form of an event: a site grid with per-site flags.
#[derive(Clone, Debug)]
pub struct RasterEvent {
    pub grid: ColorGrid,
    /// Flag bits per site; sites outside the domain carry no `IN` bit.
    pub site_flags: Vec<u8>,
    pub black: bool,
    /// Diagonal link code per block anchor (planar grids only).
    pub diag: Vec<u8>,
}

impl RasterEvent {
    pub fn in_domain(&self, site: usize) -> bool {
        self.site_flags[site] & IN != 0
    }

    /// Evaluates directly on sites with the given per-site colours.
    pub fn holds_sites(&self, black: &[bool]) -> bool {
        self.holds_with(black, &self.diag)
    }

    /// Calls `f(u, v)` for the diagonal link anchored at `s`, if any.
    pub fn diagonal_link(&self, s: usize, diag: &[u8], strides: &[usize]) -> Option<(usize, usize)> {
        match diag.get(s) {
            Some(&c) if c != 0 => Some(diagonal_pair(s, c, strides)),
            _ => None,
        }
    }

    /// [`RasterEvent::holds_sites`] with replacement diagonal codes.
    pub fn holds_with(&self, black: &[bool], diag: &[u8]) -> bool {
        let g = &self.grid;
        let strides = g.strides();
        let shape = g.shape();
        let mut uf = UnionFind::new(g.len());
        let want = self.black;
        let mut cursor = vec![0usize; g.dim];
        for s in 0..g.len() {
            if self.in_domain(s) && black[s] == want {
                for k in 0..g.dim {
                    if cursor[k] + 1 < shape[k] {
                        let t = s + strides[k];
                        if self.in_domain(t) && black[t] == want {
                            uf.union(s as u32, t as u32);
                        }
                    }
                }
            }
            if let Some((u, v)) = self.diagonal_link(s, diag, &strides) {
                if self.in_domain(u) && self.in_domain(v) && black[u] == want && black[v] == want {
                    uf.union(u as u32, v as u32);
                }
            }
            advance(&mut cursor, shape);
        }
        let mut acc = vec![0u8; g.len()];
        for s in 0..g.len() {
            if self.in_domain(s) && black[s] == want && self.site_flags[s] & (SRC | DST) != 0 {
                let r = uf.find(s as u32) as usize;
                acc[r] |= self.site_flags[s];
                if acc[r] & (SRC | DST) == SRC | DST {
                    return true;
                }
            }
        }
        false
    }

    /// Collapses same-owner orthogonally connected sites into nodes.
    pub fn to_graph(&self) -> CellGraph {
        let g = &self.grid;
        let strides = g.strides();
        let shape = g.shape();
        let mut uf = UnionFind::new(g.len());
        let mut cursor = vec![0usize; g.dim];
        for s in 0..g.len() {
            if self.in_domain(s) {
                for k in 0..g.dim {
                    if cursor[k] + 1 < shape[k] {
                        let t = s + strides[k];
                        if self.in_domain(t) && g.owner[t] == g.owner[s] {
                            uf.union(s as u32, t as u32);
                        }
                    }
                }
            }
            advance(&mut cursor, shape);
        }
        let mut node_of = vec![u32::MAX; g.len()];
        let (mut owner, mut flags, mut reach) = (Vec::new(), Vec::new(), Vec::new());
        for s in 0..g.len() {
            if !self.in_domain(s) {
                continue;
            }
            let r = uf.find(s as u32) as usize;
            if node_of[r] == u32::MAX {
                node_of[r] = owner.len() as u32;
                owner.push(g.owner[s]);
                flags.push(0u8);
                reach.push(f64::NEG_INFINITY);
            }
            let v = node_of[r] as usize;
            node_of[s] = v as u32;
            flags[v] |= self.site_flags[s] & (SRC | DST);
            reach[v] = reach[v].max(site_norm(g, s));
        }
        let mut edges = Vec::new();
        cursor.iter_mut().for_each(|c| *c = 0);
        for s in 0..g.len() {
            if self.in_domain(s) {
                for k in 0..g.dim {
                    if cursor[k] + 1 < shape[k] {
                        let t = s + strides[k];
                        if self.in_domain(t) && g.owner[t] != g.owner[s] {
                            let (a, b) = (node_of[s], node_of[t]);
                            edges.push((a.min(b), a.max(b)));
                        }
                    }
                }
            }
            if let Some((u, v)) = self.diagonal_link(s, &self.diag, &strides) {
                if self.in_domain(u) && self.in_domain(v) && node_of[u] != node_of[v] {
                    let (a, b) = (node_of[u], node_of[v]);
                    edges.push((a.min(b), a.max(b)));
                }
            }
            advance(&mut cursor, shape);
        }
        edges.sort_unstable();
        edges.dedup();
        CellGraph { owner, flags, reach, edges, black: self.black }
    }
}

fn site_norm(g: &ColorGrid, mut lin: usize) -> f64 {
    let shape = g.shape();
    let mut acc = 0.0;
    for k in (0..g.dim).rev() {
        let i = (lin % shape[k]) as i64 + g.sites.lo[k];
        lin /= shape[k];
        acc += (i as f64 * g.h).powi(2);
    }
    acc.sqrt()
}

fn advance(cursor: &mut [usize], shape: &[usize]) {
    for k in (0..cursor.len()).rev() {
        cursor[k] += 1;
        if cursor[k] < shape[k] {
            return;
        }
        cursor[k] = 0;
    }
}

/// Builds the raster form of `kind` at pitch `h`.
pub fn raster_event(config: &PointConfiguration, index: &NearestIndex, kind: &EventKind, h: f64) -> Result<RasterEvent> {
    let dim = config.dim();
    let slack = h * (dim as f64).sqrt();
    let domain = kind.domain(config.window().half_width);
    let sites = match domain {
        Domain::Ball(r) => SiteBox::cube(dim, r + slack, h),
        Domain::Cube(n) => SiteBox::cube(dim, n, h),
    };
    let grid = rasterize_with(config, index, &sites, h, DEFAULT_SITE_BUDGET)?;
    let point_site: Option<Vec<i64>> = match kind {
        EventKind::PointToSphere { x, .. } => Some(x.iter().map(|c| (c / h).round() as i64).collect()),
        _ => None,
    };
    let mut site_flags = vec![0u8; grid.len()];
    let mut idx = grid.sites.lo.clone();
    for f in site_flags.iter_mut() {
        let r = idx.iter().map(|&i| (i as f64 * h).powi(2)).sum::<f64>().sqrt();
        let inside = match domain {
            Domain::Ball(rad) => r <= rad + slack,
            Domain::Cube(_) => true,
        };
        if inside {
            let side = |sd: Side| {
                let a = sd.axis();
                if sd.upper() {
                    idx[a] == grid.sites.hi[a]
                } else {
                    idx[a] == grid.sites.lo[a]
                }
            };
            let (src, dst) = match kind {
                EventKind::OriginToSphere { n } => (idx.iter().all(|&i| i == 0), r >= n - slack),
                EventKind::PointToSphere { k, .. } => {
                    (Some(&idx) == point_site.as_ref(), (r - k).abs() <= slack)
                }
                EventKind::BoxToSphere { r: r0, n } => (r <= r0 + slack, r >= n - slack),
                EventKind::BoxCrossing { .. } => (side(Side::Left), side(Side::Right)),
                EventKind::WhiteCrossing { .. } => (side(Side::Bottom), side(Side::Top)),
                EventKind::BallToSide { k, side: sd, .. } => (r <= k + slack, side(*sd)),
            };
            *f = IN | if src { SRC } else { 0 } | if dst { DST } else { 0 };
        }
        for k in (0..dim).rev() {
            if idx[k] < grid.sites.hi[k] {
                idx[k] += 1;
                break;
            }
            idx[k] = grid.sites.lo[k];
        }
    }
    let diag = diagonal_codes(&grid, config);
    Ok(RasterEvent { grid, site_flags, black: kind.black_paths(), diag })
}

/// Exact planar cell graph of `kind`.
pub fn delaunay_event(config: &PointConfiguration, kind: &EventKind) -> Result<CellGraph> {
    let del = Delaunay::new(&planar_points(config), config.manifest().root_seed);
    delaunay_event_with(config, &del, kind)
}

/// [`delaunay_event`] reusing a triangulation of `config`.
pub fn delaunay_event_with(config: &PointConfiguration, del: &Delaunay, kind: &EventKind) -> Result<CellGraph> {
    let vor = del.voronoi();
    let n_pts = config.len();
    let mut flags = vec![0u8; n_pts];
    let mut keep = vec![false; n_pts];
    let mut reach = vor.max_norm.clone();
    let edges: Vec<(u32, u32)>;
    match kind.domain(config.window().half_width) {
        Domain::Ball(rad) => {
            for i in 0..n_pts {
                keep[i] = vor.min_norm[i] <= rad;
            }
            edges = vor
                .edges
                .iter()
                .filter(|e| segment_distance([0.0, 0.0], e.seg) <= rad)
                .map(|e| (e.a, e.b))
                .collect();
            let src_point = match kind {
                EventKind::OriginToSphere { .. } => Some(nearest_point(config, &[0.0, 0.0])?),
                EventKind::PointToSphere { x, .. } => Some(nearest_point(config, x)?),
                _ => None,
            };
            for i in 0..n_pts {
                let (lo, hi) = (vor.min_norm[i], vor.max_norm[i]);
                let (src, dst) = match kind {
                    EventKind::OriginToSphere { n } => (Some(i) == src_point, hi >= *n),
                    EventKind::PointToSphere { k, .. } => (Some(i) == src_point, lo <= *k && hi >= *k),
                    EventKind::BoxToSphere { r, n } => (lo <= *r, hi >= *n),
                    _ => unreachable!("ball domains only"),
                };
                flags[i] = if src { SRC } else { 0 } | if dst { DST } else { 0 };
            }
        }
        Domain::Cube(n) => {
            let polys = del.cell_polygons();
            for i in 0..n_pts {
                let q = clip_to_square(&polys[i], n);
                if q.is_empty() {
                    continue;
                }
                keep[i] = true;
                let touches = |sd: Side| {
                    let a = sd.axis();
                    if sd.upper() {
                        q.iter().any(|v| v[a] >= n)
                    } else {
                        q.iter().any(|v| v[a] <= -n)
                    }
                };
                let (src, dst) = match kind {
                    EventKind::BoxCrossing { .. } => (touches(Side::Left), touches(Side::Right)),
                    EventKind::WhiteCrossing { .. } => (touches(Side::Bottom), touches(Side::Top)),
                    EventKind::BallToSide { k, side, .. } => (vor.min_norm[i] <= *k, touches(*side)),
                    _ => unreachable!("cube domains only"),
                };
                flags[i] = if src { SRC } else { 0 } | if dst { DST } else { 0 };
                reach[i] = q.iter().map(|v| v[0].abs().max(v[1].abs())).fold(0.0, f64::max);
            }
            edges = vor
                .edges
                .iter()
                .filter(|e| segment_hits_box(e.seg, [-n, -n], [n, n]))
                .map(|e| (e.a, e.b))
                .collect();
        }
    }
    // Renumber to the kept cells only.
    let mut node_of = vec![u32::MAX; n_pts];
    let (mut owner, mut f2, mut r2) = (Vec::new(), Vec::new(), Vec::new());
    for i in 0..n_pts {
        if keep[i] {
            node_of[i] = owner.len() as u32;
            owner.push(i as u32);
            f2.push(flags[i]);
            r2.push(reach[i]);
        }
    }
    let edges = edges
        .into_iter()
        .filter_map(|(a, b)| {
            let (x, y) = (node_of[a as usize], node_of[b as usize]);
            (x != u32::MAX && y != u32::MAX).then_some((x, y))
        })
        .collect();
    Ok(CellGraph { owner, flags: f2, reach: r2, edges, black: kind.black_paths() })
}

/// The cell graph of `spec` on `config`, for either engine.
pub fn event_graph(config: &PointConfiguration, spec: &EventSpec) -> Result<CellGraph> {
    spec.validate(config)?;
    if config.is_empty() {
        return Err(Error::State("event evaluation on an empty configuration".into()));
    }
    match spec.engine {
        Engine::Raster { h } => Ok(raster_event(config, &NearestIndex::for_config(config), &spec.kind, h)?.to_graph()),
        Engine::Delaunay2d => delaunay_event(config, &spec.kind),
    }
}

/// Whether the event holds on `config` at its own parameter.
pub fn evaluate(config: &PointConfiguration, spec: &EventSpec) -> Result<bool> {
    Ok(event_graph(config, spec)?.holds(&config.colors()))
}

/// Component labelling of the black region.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Components {
    /// Label per raster site (raster engine) or per point (exact engine);
    /// `None` for white entries. Labels number components by first appearance.
    pub labels: Vec<Option<u32>>,
    pub count: usize,
}

/// Labels the black components over `[-L, L]^d`.
pub fn black_components(config: &PointConfiguration, engine: Engine) -> Result<Components> {
    if config.is_empty() {
        return Err(Error::State("component labelling of an empty configuration".into()));
    }
    let l = config.window().half_width;
    let colors = config.colors();
    let (n, uf, active): (usize, UnionFind, Vec<bool>) = match engine {
        Engine::Raster { h } => {
            let spec = EventSpec::new(EventKind::BoxCrossing { n: l }, engine);
            spec.validate(config)?;
            let ev = raster_event(config, &NearestIndex::for_config(config), &spec.kind, h)?;
            let g = &ev.grid;
            let strides = g.strides();
            let shape = g.shape().to_vec();
            let mut uf = UnionFind::new(g.len());
            let mut cursor = vec![0usize; g.dim];
            for s in 0..g.len() {
                if g.black[s] {
                    for k in 0..g.dim {
                        if cursor[k] + 1 < shape[k] && g.black[s + strides[k]] {
                            uf.union(s as u32, (s + strides[k]) as u32);
                        }
                    }
                }
                if let Some((u, v)) = ev.diagonal_link(s, &ev.diag, &strides) {
                    if g.black[u] && g.black[v] {
                        uf.union(u as u32, v as u32);
                    }
                }
                advance(&mut cursor, &shape);
            }
            (g.len(), uf, g.black.clone())
        }
        Engine::Delaunay2d => {
            let spec = EventSpec::new(EventKind::BoxCrossing { n: l }, engine);
            spec.validate(config)?;
            let graph = delaunay_event(config, &spec.kind)?;
            let mut uf = UnionFind::new(config.len());
            for &(a, b) in &graph.edges {
                let (a, b) = (graph.owner[a as usize], graph.owner[b as usize]);
                if colors[a as usize] && colors[b as usize] {
                    uf.union(a, b);
                }
            }
            let mut active = vec![false; config.len()];
            for &o in &graph.owner {
                active[o as usize] = colors[o as usize];
            }
            (config.len(), uf, active)
        }
    };
    let mut uf = uf;
    let mut label_of = vec![u32::MAX; n];
    let mut labels = vec![None; n];
    let mut count = 0u32;
    for v in 0..n {
        if !active[v] {
            continue;
        }
        let r = uf.find(v as u32) as usize;
        if label_of[r] == u32::MAX {
            label_of[r] = count;
            count += 1;
        }
        labels[v] = Some(label_of[r]);
    }
    Ok(Components { labels, count: count as usize })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::point_process::{sample_configuration, Color, Window};

    fn single(color: Color) -> PointConfiguration {
        let w = Window::new(2, 6.0, 3.0).unwrap();
        PointConfiguration::with_colors(w, &[(vec![0.3, -0.2], color), (vec![8.0, 8.5], color)]).unwrap()
    }

    fn engines() -> [Engine; 2] {
        [Engine::Raster { h: 0.25 }, Engine::Delaunay2d]
    }

    #[test]
    fn monochrome_configurations() {
        for e in engines() {
            for n in [1.0, 3.0, 6.0] {
                let spec = EventSpec::new(EventKind::OriginToSphere { n }, e);
                assert!(evaluate(&single(Color::Black), &spec).unwrap());
                assert!(!evaluate(&single(Color::White), &spec).unwrap());
            }
            let spec = EventSpec::new(EventKind::WhiteCrossing { n: 4.0 }, e);
            assert!(evaluate(&single(Color::White), &spec).unwrap());
        }
    }

    #[test]
    fn engine_dimension_mismatch() {
        let w = Window::new(3, 3.0, 2.0).unwrap();
        let c = sample_configuration(&w, 0.5, 1).unwrap();
        let spec = EventSpec::new(EventKind::OriginToSphere { n: 2.0 }, Engine::Delaunay2d);
        assert!(matches!(evaluate(&c, &spec), Err(Error::Parameter(_))));
        let spec = EventSpec::new(EventKind::OriginToSphere { n: 9.0 }, Engine::Raster { h: 0.5 });
        assert!(matches!(evaluate(&c, &spec), Err(Error::Parameter(_))));
    }

    #[test]
    fn isolated_black_cells_are_separate_components() {
        let w = Window::new(2, 10.0, 3.0).unwrap();
        let mut pts = vec![];
        for i in -4..=4 {
            for j in -4..=4 {
                let c = if (i + j) % 2 == 0 && i % 2 == 0 { Color::Black } else { Color::White };
                pts.push((vec![i as f64 * 2.0 + 0.01 * j as f64, j as f64 * 2.0], c));
            }
        }
        let c = PointConfiguration::with_colors(w, &pts).unwrap();
        let blacks = c.black_count();
        let comps = black_components(&c, Engine::Delaunay2d).unwrap();
        assert_eq!(comps.count, blacks);
    }

    #[test]
    fn origin_events_nest() {
        let w = Window::new(2, 8.0, 3.0).unwrap();
        for s in 0..20 {
            let c = sample_configuration(&w, 0.55, s).unwrap();
            for e in engines() {
                let hits: Vec<bool> = (1..=8)
                    .map(|n| evaluate(&c, &EventSpec::new(EventKind::OriginToSphere { n: n as f64 }, e)).unwrap())
                    .collect();
                assert!(hits.windows(2).all(|w| w[0] || !w[1]), "{hits:?}");
            }
        }
    }

    #[test]
    fn reach_matches_direct_evaluation() {
        let w = Window::new(2, 8.0, 3.0).unwrap();
        for s in 0..10 {
            let c = sample_configuration(&w, 0.6, s).unwrap();
            for e in engines() {
                let g = event_graph(&c, &EventSpec::new(EventKind::OriginToSphere { n: 8.0 }, e)).unwrap();
                let reach = g.reach(&c.colors());
                for n in 1..=8 {
                    let spec = EventSpec::new(EventKind::OriginToSphere { n: n as f64 }, e);
                    let direct = evaluate(&c, &spec).unwrap();
                    let via = reach.is_some_and(|r| r >= n as f64 - e.slack(2));
                    assert_eq!(direct, via, "seed {s} n {n} {e:?}");
                }
            }
        }
    }

    #[test]
    fn black_and_white_crossings_exclude_each_other() {
        let w = Window::new(2, 5.0, 3.0).unwrap();
        for s in 0..30 {
            let c = sample_configuration(&w, 0.5, s).unwrap();
            for e in engines() {
                let b = evaluate(&c, &EventSpec::new(EventKind::BoxCrossing { n: 5.0 }, e)).unwrap();
                let wt = evaluate(&c, &EventSpec::new(EventKind::WhiteCrossing { n: 5.0 }, e)).unwrap();
                assert!(!(b && wt));
                if e == Engine::Delaunay2d {
                    assert!(b || wt, "exact planar duality");
                }
            }
        }
    }

    #[test]
    fn recolouring_white_to_black_is_monotone() {
        let w = Window::new(2, 6.0, 3.0).unwrap();
        let c = sample_configuration(&w, 0.45, 11).unwrap();
        for e in engines() {
            for kind in [
                EventKind::OriginToSphere { n: 5.0 },
                EventKind::BoxCrossing { n: 5.0 },
                EventKind::BoxToSphere { r: 1.0, n: 5.0 },
            ] {
                let g = event_graph(&c, &EventSpec::new(kind, e)).unwrap();
                let mut colors = c.colors();
                let mut prev = g.holds(&colors);
                for i in 0..colors.len() {
                    if !colors[i] {
                        colors[i] = true;
                        let now = g.holds(&colors);
                        assert!(now || !prev);
                        prev = now;
                    }
                }
                assert!(prev);
            }
        }
    }
}

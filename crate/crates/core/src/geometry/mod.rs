//! Colouring queries `ω(y)` and the adjacency substrates.
//!
//! Two engines answer connectivity questions: a dimension-generic raster
//! ([`ColorGrid`]) and an exact planar Voronoi/Delaunay structure
//! ([`delaunay`]). Both resolve nearest-point ties by the lexicographically
//! smallest coordinates.

pub mod delaunay;

use std::cmp::Ordering;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::point_process::{Color, PointConfiguration};

pub use delaunay::{delaunay_adjacency_2d, AdjacencyGraph, Delaunay, VoronoiCells};

/// Default limit on the number of raster sites in one grid.
pub const DEFAULT_SITE_BUDGET: usize = 64 << 20;

/// Orders two candidate points by (squared distance, coordinates).
#[inline]
pub(crate) fn closer(d2a: f64, a: &[f64], d2b: f64, b: &[f64]) -> bool {
    match d2a.partial_cmp(&d2b) {
        Some(Ordering::Less) => true,
        Some(Ordering::Greater) => false,
        _ => a.partial_cmp(b) == Some(Ordering::Less),
    }
}

#[inline]
pub(crate) fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Uniform cell list over a cube, for nearest-point and range queries.
#[derive(Clone, Debug)]
pub struct NearestIndex {
    dim: usize,
    lo: f64,
    cell: f64,
    per_axis: usize,
    starts: Vec<u32>,
    /// Coordinates in cell order.
    coords: Vec<f64>,
    /// Caller ids in cell order.
    ids: Vec<u32>,
}

impl NearestIndex {
    /// Index over `coords` (flat, `dim` per point) covering `[lo, hi]^dim`.
    /// Ids are positions in `coords`.
    pub fn new(dim: usize, coords: &[f64], lo: f64, hi: f64) -> Self {
        let n = coords.len() / dim;
        let span = (hi - lo).max(1e-9);
        // About one point per cell at unit intensity.
        let per_axis = ((span).ceil() as usize).clamp(1, 1 << 12);
        let cell = span / per_axis as f64;
        let mut idx = NearestIndex {
            dim,
            lo,
            cell,
            per_axis,
            starts: vec![0; per_axis.pow(dim as u32) + 1],
            coords: Vec::with_capacity(coords.len()),
            ids: Vec::with_capacity(n),
        };
        let cells: Vec<usize> = coords.chunks(dim).map(|x| idx.cell_of(x)).collect();
        for &c in &cells {
            idx.starts[c + 1] += 1;
        }
        for i in 1..idx.starts.len() {
            idx.starts[i] += idx.starts[i - 1];
        }
        let mut fill = idx.starts.clone();
        let mut order = vec![0u32; n];
        for (i, &c) in cells.iter().enumerate() {
            order[fill[c] as usize] = i as u32;
            fill[c] += 1;
        }
        for &i in &order {
            let i = i as usize;
            idx.coords.extend_from_slice(&coords[i * dim..(i + 1) * dim]);
        }
        idx.ids = order;
        idx
    }

    pub fn for_config(config: &PointConfiguration) -> Self {
        let r = config.window().outer();
        NearestIndex::new(config.dim(), config.coords(), -r, r)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    fn axis_cell(&self, x: f64) -> usize {
        let c = ((x - self.lo) / self.cell).floor();
        if c < 0.0 {
            0
        } else {
            (c as usize).min(self.per_axis - 1)
        }
    }

    fn cell_of(&self, x: &[f64]) -> usize {
        x.iter().fold(0, |acc, &c| acc * self.per_axis + self.axis_cell(c))
    }

    /// Visits the cells at Chebyshev distance exactly `r` from `q`.
    fn for_shell(&self, q: &[usize], r: usize, mut f: impl FnMut(usize)) {
        let d = self.dim;
        let r = r as i64;
        let mut off = [-r; 8];
        loop {
            if off[..d].iter().any(|o| o.abs() == r) {
                let mut lin = 0usize;
                let mut ok = true;
                for k in 0..d {
                    let c = q[k] as i64 + off[k];
                    if c < 0 || c >= self.per_axis as i64 {
                        ok = false;
                        break;
                    }
                    lin = lin * self.per_axis + c as usize;
                }
                if ok {
                    f(lin);
                }
            }
            let mut k = d;
            loop {
                if k == 0 {
                    return;
                }
                k -= 1;
                if off[k] < r {
                    off[k] += 1;
                    break;
                }
                off[k] = -r;
            }
        }
    }

    fn query_cell(&self, y: &[f64]) -> [usize; 8] {
        let mut q = [0usize; 8];
        for (k, &c) in y.iter().enumerate() {
            q[k] = self.axis_cell(c);
        }
        q
    }

    /// Nearest point to `y` under the tie rule, skipping ids for which
    /// `skip` is true. Returns `(id, squared distance)`.
    pub fn nearest_filtered(&self, y: &[f64], skip: impl Fn(u32) -> bool) -> Option<(u32, f64)> {
        if self.ids.is_empty() {
            return None;
        }
        let d = self.dim;
        let q = self.query_cell(y);
        let mut best: Option<(usize, f64)> = None;
        let mut r = 0usize;
        loop {
            self.for_shell(&q, r, |cell| {
                for slot in self.starts[cell] as usize..self.starts[cell + 1] as usize {
                    if skip(self.ids[slot]) {
                        continue;
                    }
                    let x = &self.coords[slot * d..(slot + 1) * d];
                    let d2 = dist2(x, y);
                    let better = match best {
                        None => true,
                        Some((b, bd2)) => closer(d2, x, bd2, &self.coords[b * d..(b + 1) * d]),
                    };
                    if better {
                        best = Some((slot, d2));
                    }
                }
            });
            // Unvisited cells are at distance >= r * cell.
            let bound = r as f64 * self.cell;
            if let Some((_, bd2)) = best {
                if bd2 < bound * bound {
                    break;
                }
            }
            if r > self.per_axis + 1 {
                break;
            }
            r += 1;
        }
        best.map(|(slot, d2)| (self.ids[slot], d2))
    }

    pub fn nearest(&self, y: &[f64]) -> Option<(u32, f64)> {
        self.nearest_filtered(y, |_| false)
    }

    /// [`NearestIndex::nearest`] for a stream of nearby queries.
    ///
    /// Keeps the points of the `3^d` block around the last query cell; the
    /// block answer is exact whenever it is strictly closer than one cell.
    pub fn nearest_cached(&self, y: &[f64], cache: &mut BlockCache) -> Option<(u32, f64)> {
        let d = self.dim;
        let cell = self.cell_of(y);
        if cache.cell != Some(cell) {
            cache.cell = Some(cell);
            cache.slots.clear();
            let q = self.query_cell(y);
            for r in 0..2 {
                self.for_shell(&q, r, |c| cache.slots.extend(self.starts[c]..self.starts[c + 1]));
            }
        }
        let mut best: Option<(usize, f64)> = None;
        for &slot in &cache.slots {
            let slot = slot as usize;
            let x = &self.coords[slot * d..(slot + 1) * d];
            let d2 = dist2(x, y);
            let better = match best {
                None => true,
                Some((b, bd2)) => closer(d2, x, bd2, &self.coords[b * d..(b + 1) * d]),
            };
            if better {
                best = Some((slot, d2));
            }
        }
        match best {
            Some((slot, d2)) if d2 < self.cell * self.cell => Some((self.ids[slot], d2)),
            _ => self.nearest(y),
        }
    }

    /// Calls `f(id, squared distance)` for every point within distance `r` of `y`.
    pub fn within(&self, y: &[f64], r: f64, mut f: impl FnMut(u32, f64)) {
        let d = self.dim;
        let lo: Vec<usize> = y.iter().map(|&c| self.axis_cell(c - r)).collect();
        let hi: Vec<usize> = y.iter().map(|&c| self.axis_cell(c + r)).collect();
        let mut cur = lo.clone();
        let r2 = r * r;
        loop {
            let lin = cur.iter().fold(0, |acc, &c| acc * self.per_axis + c);
            for slot in self.starts[lin] as usize..self.starts[lin + 1] as usize {
                let d2 = dist2(&self.coords[slot * d..(slot + 1) * d], y);
                if d2 <= r2 {
                    f(self.ids[slot], d2);
                }
            }
            let mut k = d;
            loop {
                if k == 0 {
                    return;
                }
                k -= 1;
                if cur[k] < hi[k] {
                    cur[k] += 1;
                    break;
                }
                cur[k] = lo[k];
            }
        }
    }
}

/// Scratch state for [`NearestIndex::nearest_cached`].
#[derive(Clone, Debug, Default)]
pub struct BlockCache {
    cell: Option<usize>,
    slots: Vec<u32>,
}

/// Point of the configuration closest to `y` (ties: smallest coordinates).
pub fn nearest_point(config: &PointConfiguration, y: &[f64]) -> Result<usize> {
    if config.is_empty() {
        return Err(Error::State("nearest point of an empty configuration".into()));
    }
    if y.len() != config.dim() {
        return param("query dimension does not match the configuration");
    }
    let idx = NearestIndex::for_config(config);
    Ok(idx.nearest(y).map(|(i, _)| i as usize).unwrap())
}

/// Linear scan with the same tie rule; the reference for [`nearest_point`].
pub fn nearest_point_brute(config: &PointConfiguration, y: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for i in 0..config.len() {
        let x = config.point(i);
        let d2 = dist2(x, y);
        if best.is_none_or(|(b, bd2)| closer(d2, x, bd2, config.point(b))) {
            best = Some((i, d2));
        }
    }
    best.map(|(i, _)| i)
}

/// `ω(y)`: the colour of the point owning `y`.
pub fn color_at(config: &PointConfiguration, y: &[f64]) -> Result<Color> {
    nearest_point(config, y).map(|i| config.color(i))
}

/// Axis-aligned block of lattice sites `h·i`, `lo[k] <= i[k] <= hi[k]`.
///
/// Sites are anchored at the origin, so the lattice of pitch `h/2` contains
/// the lattice of pitch `h`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SiteBox {
    pub lo: Vec<i64>,
    pub hi: Vec<i64>,
}

impl SiteBox {
    /// All sites of pitch `h` inside `[-r, r]^dim`.
    pub fn cube(dim: usize, r: f64, h: f64) -> Self {
        let m = (r / h + 1e-9).floor() as i64;
        SiteBox { lo: vec![-m; dim], hi: vec![m; dim] }
    }

    pub fn shape(&self) -> Vec<usize> {
        self.lo.iter().zip(&self.hi).map(|(a, b)| (b - a + 1).max(0) as usize).collect()
    }

    pub fn site_count(&self) -> usize {
        self.shape().iter().product()
    }
}

/// Rasterised colouring: owner and colour of every lattice site.
#[derive(Clone, Debug)]
pub struct ColorGrid {
    pub dim: usize,
    pub h: f64,
    pub sites: SiteBox,
    shape: Vec<usize>,
    /// Owner point id per site, row-major with the first axis most significant.
    pub owner: Vec<u32>,
    pub black: Vec<bool>,
}

impl ColorGrid {
    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.owner.len()
    }

    pub fn is_empty(&self) -> bool {
        self.owner.is_empty()
    }

    /// Integer lattice coordinates of a site.
    pub fn site_index(&self, mut lin: usize) -> Vec<i64> {
        let mut v = vec![0i64; self.dim];
        for k in (0..self.dim).rev() {
            v[k] = (lin % self.shape[k]) as i64 + self.sites.lo[k];
            lin /= self.shape[k];
        }
        v
    }

    pub fn linear(&self, i: &[i64]) -> Option<usize> {
        let mut lin = 0usize;
        for k in 0..self.dim {
            if i[k] < self.sites.lo[k] || i[k] > self.sites.hi[k] {
                return None;
            }
            lin = lin * self.shape[k] + (i[k] - self.sites.lo[k]) as usize;
        }
        Some(lin)
    }

    pub fn position(&self, lin: usize) -> Vec<f64> {
        self.site_index(lin).iter().map(|&i| i as f64 * self.h).collect()
    }

    /// Row-major strides per axis.
    pub fn strides(&self) -> Vec<usize> {
        let mut s = vec![1usize; self.dim];
        for k in (0..self.dim.saturating_sub(1)).rev() {
            s[k] = s[k + 1] * self.shape[k + 1];
        }
        s
    }

    /// Recolours every site from per-point colour bits.
    pub fn recolor(&mut self, colors: &[bool]) {
        for (b, &o) in self.black.iter_mut().zip(&self.owner) {
            *b = colors[o as usize];
        }
    }

    /// Writes a plain PGM (P2) image of a 2D grid, black sites as 0.
    pub fn write_pgm<W: Write>(&self, mut out: W) -> Result<()> {
        if self.dim != 2 {
            return param("PGM export needs a 2D grid");
        }
        let (rows, cols) = (self.shape[1], self.shape[0]);
        writeln!(out, "P2\n{cols} {rows}\n1")?;
        // Image rows run from top (largest second coordinate) to bottom.
        for r in (0..rows).rev() {
            let line: Vec<&str> = (0..cols)
                .map(|c| if self.black[c * self.shape[1] + r] { "0" } else { "1" })
                .collect();
            writeln!(out, "{}", line.join(" "))?;
        }
        Ok(())
    }

    /// Writes `i1..id, x1..xd, owner, color` rows.
    pub fn write_owner_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let csv_err = |e: csv::Error| Error::Format(e.to_string());
        let mut head: Vec<String> = (1..=self.dim).map(|k| format!("i{k}")).collect();
        head.extend((1..=self.dim).map(|k| format!("x{k}")));
        head.push("owner".into());
        head.push("color".into());
        w.write_record(&head).map_err(csv_err)?;
        for lin in 0..self.len() {
            let idx = self.site_index(lin);
            let mut row: Vec<String> = idx.iter().map(|i| i.to_string()).collect();
            row.extend(idx.iter().map(|&i| (i as f64 * self.h).to_string()));
            row.push(self.owner[lin].to_string());
            row.push(if self.black[lin] { "b" } else { "w" }.into());
            w.write_record(&row).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Rasterises the colouring over a block of sites of pitch `h`.
pub fn rasterize(config: &PointConfiguration, sites: &SiteBox, h: f64) -> Result<ColorGrid> {
    rasterize_with(config, &NearestIndex::for_config(config), sites, h, DEFAULT_SITE_BUDGET)
}

/// [`rasterize`] reusing a prebuilt index and an explicit site budget.
pub fn rasterize_with(
    config: &PointConfiguration,
    index: &NearestIndex,
    sites: &SiteBox,
    h: f64,
    budget: usize,
) -> Result<ColorGrid> {
    if !(h > 0.0 && h.is_finite()) {
        return param(format!("raster pitch must be positive, got {h}"));
    }
    if sites.lo.len() != config.dim() || sites.hi.len() != config.dim() {
        return param("site block dimension does not match the configuration");
    }
    if config.is_empty() {
        return Err(Error::State("cannot rasterise an empty configuration".into()));
    }
    let shape = sites.shape();
    let count: usize = shape.iter().try_fold(1usize, |a, &s| a.checked_mul(s)).unwrap_or(usize::MAX);
    if count > budget {
        return Err(Error::Resource(format!("{count} raster sites exceed the budget of {budget}")));
    }
    let dim = config.dim();
    let mut owner = Vec::with_capacity(count);
    let mut y = vec![0.0; dim];
    let mut cur = sites.lo.clone();
    let mut cache = BlockCache::default();
    for _ in 0..count {
        for k in 0..dim {
            y[k] = cur[k] as f64 * h;
        }
        owner.push(index.nearest_cached(&y, &mut cache).unwrap().0);
        for k in (0..dim).rev() {
            if cur[k] < sites.hi[k] {
                cur[k] += 1;
                break;
            }
            cur[k] = sites.lo[k];
        }
    }
    let black = owner.iter().map(|&o| config.is_black(o as usize)).collect();
    Ok(ColorGrid { dim, h, sites: sites.clone(), shape, owner, black })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::point_process::{sample_configuration, Window};
    use rand::Rng;

    fn two_points() -> PointConfiguration {
        let w = Window::new(2, 8.0, 3.0).unwrap();
        PointConfiguration::with_colors(
            w,
            &[(vec![0.0, 0.0], Color::Black), (vec![10.0, 0.0], Color::White)],
        )
        .unwrap()
    }

    #[test]
    fn bisector_split() {
        let c = two_points();
        assert_eq!(nearest_point(&c, &[4.0, 0.0]).unwrap(), 0);
        assert_eq!(nearest_point(&c, &[6.0, 0.0]).unwrap(), 1);
        // exact tie goes to the lexicographically smaller point
        assert_eq!(nearest_point(&c, &[5.0, 3.0]).unwrap(), 0);
    }

    #[test]
    fn single_point_owns_everything() {
        let w = Window::new(2, 4.0, 3.0).unwrap();
        let c = PointConfiguration::with_colors(w, &[(vec![1.0, -2.0], Color::Black)]).unwrap();
        for y in [[0.0, 0.0], [6.9, 6.9], [-7.0, 3.0]] {
            assert_eq!(color_at(&c, &y).unwrap(), Color::Black);
        }
        let g = rasterize(&c, &SiteBox::cube(2, 4.0, 0.5), 0.5).unwrap();
        assert!(g.black.iter().all(|&b| b));
    }

    #[test]
    fn empty_configuration_is_a_state_error() {
        let w = Window::new(2, 4.0, 3.0).unwrap();
        let c = PointConfiguration::with_colors(w, &[]).unwrap();
        assert!(matches!(nearest_point(&c, &[0.0, 0.0]), Err(Error::State(_))));
    }

    #[test]
    fn index_matches_brute_force() {
        for d in [2usize, 3] {
            let w = Window::new(d, 3.0, 2.0).unwrap();
            let c = sample_configuration(&w, 0.5, 21 + d as u64).unwrap();
            let idx = NearestIndex::for_config(&c);
            let mut rng = crate::seed::rng(3);
            for _ in 0..500 {
                let y: Vec<f64> = (0..d).map(|_| rng.random_range(-6.0..6.0)).collect();
                let (i, _) = idx.nearest(&y).unwrap();
                assert_eq!(Some(i as usize), nearest_point_brute(&c, &y));
            }
        }
    }

    #[test]
    fn halving_pitch_keeps_shared_sites() {
        let w = Window::new(2, 3.0, 3.0).unwrap();
        let c = sample_configuration(&w, 0.5, 4).unwrap();
        let coarse = rasterize(&c, &SiteBox::cube(2, 3.0, 0.2), 0.2).unwrap();
        let fine = rasterize(&c, &SiteBox::cube(2, 3.0, 0.1), 0.1).unwrap();
        for lin in 0..coarse.len() {
            let i = coarse.site_index(lin);
            let j: Vec<i64> = i.iter().map(|v| 2 * v).collect();
            let fl = fine.linear(&j).unwrap();
            assert_eq!(coarse.owner[lin], fine.owner[fl]);
            assert_eq!(coarse.black[lin], fine.black[fl]);
        }
    }

    #[test]
    fn site_budget_is_enforced() {
        let c = two_points();
        let idx = NearestIndex::for_config(&c);
        let r = rasterize_with(&c, &idx, &SiteBox::cube(2, 8.0, 0.01), 0.01, 1000);
        assert!(matches!(r, Err(Error::Resource(_))));
    }
}

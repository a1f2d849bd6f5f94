//! Two-type Poisson sampling on a padded window, with per-box random streams.
//!
//! A configuration is a unit-intensity Poisson process in which every point
//! carries a uniform colour mark `u`; the point is black at parameter `p` iff
//! `u < p`. Independent thinning makes the black and white points independent
//! Poisson processes of intensities `p` and `1 - p`, and the same positions
//! and marks can be recoloured at any other `p` (common random numbers).

use std::io::{BufRead, Write};

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::seed::{self, tag};

/// Target probability that a ball of radius `pad` is void of points.
pub const VOID_PROBABILITY: f64 = 1e-9;

/// Mark given to points whose colour is forced black for every `p`.
pub const FORCED_BLACK: f64 = -1.0;
/// Mark given to points whose colour is forced white for every `p`.
pub const FORCED_WHITE: f64 = 2.0;

pub fn unit_ball_volume(d: usize) -> f64 {
    match d {
        0 => 1.0,
        1 => 2.0,
        _ => unit_ball_volume(d - 2) * 2.0 * std::f64::consts::PI / d as f64,
    }
}

/// Smallest radius whose ball is empty with probability below [`VOID_PROBABILITY`].
pub fn void_padding(d: usize) -> f64 {
    ((1.0 / VOID_PROBABILITY).ln() / unit_ball_volume(d)).powf(1.0 / d as f64)
}

/// Simulation region `[-L-pad, L+pad]^d`; events live in `[-L, L]^d`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub dim: usize,
    pub half_width: f64,
    pub pad: f64,
}

impl Window {
    pub fn new(dim: usize, half_width: f64, pad: f64) -> Result<Self> {
        if !(2..=8).contains(&dim) {
            return param(format!("dimension must lie in 2..=8, got {dim}"));
        }
        if !(half_width > 0.0 && half_width.is_finite()) {
            return param(format!("half-width must be positive, got {half_width}"));
        }
        if !(pad > 0.0 && pad.is_finite()) {
            return param(format!("padding must be positive, got {pad}"));
        }
        Ok(Window { dim, half_width, pad })
    }

    /// Window padded by the void-probability rule, rounded up so that the
    /// outer half-width is an integer (every dyadic box pitch divides it).
    pub fn padded(dim: usize, half_width: f64) -> Result<Self> {
        if !(half_width > 0.0) {
            return param(format!("half-width must be positive, got {half_width}"));
        }
        let pad = (half_width + void_padding(dim)).ceil() - half_width;
        Window::new(dim, half_width, pad)
    }

    pub fn outer(&self) -> f64 {
        self.half_width + self.pad
    }

    pub fn volume(&self) -> f64 {
        (2.0 * self.outer()).powi(self.dim as i32)
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        let r = self.outer();
        x.iter().all(|&c| c >= -r && c < r)
    }
}

/// Where every random stream of a configuration came from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedManifest {
    pub root_seed: u64,
    pub sample_pitch: f64,
    pub resamples: Vec<ResampleRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResampleRecord {
    pub pitch: f64,
    pub index: Vec<i64>,
    pub fresh_seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Color {
    Black,
    White,
}

impl Color {
    pub fn is_black(self) -> bool {
        self == Color::Black
    }
}

/// The coloured point sample `(η^b, η^w)` inside a padded window.
#[derive(Clone, Debug, PartialEq)]
pub struct PointConfiguration {
    window: Window,
    p: f64,
    coords: Vec<f64>,
    marks: Vec<f64>,
    manifest: SeedManifest,
}

impl PointConfiguration {
    /// Builds a configuration from explicit points and marks.
    pub fn from_parts(
        window: Window,
        p: f64,
        coords: Vec<f64>,
        marks: Vec<f64>,
        manifest: SeedManifest,
    ) -> Result<Self> {
        check_p(p)?;
        if coords.len() != marks.len() * window.dim {
            return param("coordinate and mark counts disagree");
        }
        if let Some(bad) = coords.chunks(window.dim).find(|x| !window.contains(x)) {
            return param(format!("point {bad:?} lies outside the padded window"));
        }
        Ok(PointConfiguration { window, p, coords, marks, manifest })
    }

    /// Configuration with explicitly coloured points (colours ignore `p`).
    pub fn with_colors(window: Window, points: &[(Vec<f64>, Color)]) -> Result<Self> {
        let mut coords = Vec::with_capacity(points.len() * window.dim);
        let mut marks = Vec::with_capacity(points.len());
        for (x, c) in points {
            if x.len() != window.dim {
                return param("point dimension does not match the window");
            }
            coords.extend_from_slice(x);
            marks.push(if c.is_black() { FORCED_BLACK } else { FORCED_WHITE });
        }
        let manifest = SeedManifest { root_seed: 0, sample_pitch: 0.0, resamples: vec![] };
        PointConfiguration::from_parts(window, 0.5, coords, marks, manifest)
    }

    pub fn window(&self) -> &Window {
        &self.window
    }
    pub fn dim(&self) -> usize {
        self.window.dim
    }
    pub fn p(&self) -> f64 {
        self.p
    }
    pub fn len(&self) -> usize {
        self.marks.len()
    }
    pub fn is_empty(&self) -> bool {
        self.marks.is_empty()
    }
    pub fn coords(&self) -> &[f64] {
        &self.coords
    }
    pub fn marks(&self) -> &[f64] {
        &self.marks
    }
    pub fn manifest(&self) -> &SeedManifest {
        &self.manifest
    }
    pub fn point(&self, i: usize) -> &[f64] {
        let d = self.window.dim;
        &self.coords[i * d..(i + 1) * d]
    }
    pub fn is_black(&self, i: usize) -> bool {
        self.marks[i] < self.p
    }
    pub fn color(&self, i: usize) -> Color {
        if self.is_black(i) {
            Color::Black
        } else {
            Color::White
        }
    }

    /// Colour bits at the configuration's own parameter.
    pub fn colors(&self) -> Vec<bool> {
        self.colors_at(self.p)
    }

    /// Colour bits at another parameter, same positions and marks.
    pub fn colors_at(&self, p: f64) -> Vec<bool> {
        self.marks.iter().map(|&u| u < p).collect()
    }

    pub fn recolored(&self, p: f64) -> Result<Self> {
        check_p(p)?;
        Ok(PointConfiguration { p, ..self.clone() })
    }

    pub fn black_count(&self) -> usize {
        self.marks.iter().filter(|&&u| u < self.p).count()
    }

    pub fn white_count(&self) -> usize {
        self.len() - self.black_count()
    }

    /// Indices of the points inside the ball of radius `r` around the origin.
    pub fn indices_within(&self, r: f64) -> Vec<usize> {
        let r2 = r * r;
        (0..self.len())
            .filter(|&i| self.point(i).iter().map(|c| c * c).sum::<f64>() <= r2)
            .collect()
    }

    /// Sub-configuration restricted to the given point indices.
    pub fn subset(&self, keep: &[usize]) -> Self {
        let d = self.dim();
        let mut coords = Vec::with_capacity(keep.len() * d);
        let mut marks = Vec::with_capacity(keep.len());
        for &i in keep {
            coords.extend_from_slice(self.point(i));
            marks.push(self.marks[i]);
        }
        PointConfiguration { coords, marks, ..self.clone_header() }
    }

    /// The configuration with points `remove` dropped and `(coords, marks)` appended.
    pub fn edited(&self, remove: &[usize], add_coords: &[f64], add_marks: &[f64]) -> Self {
        let d = self.dim();
        let mut drop = vec![false; self.len()];
        for &i in remove {
            drop[i] = true;
        }
        let mut coords = Vec::with_capacity(self.coords.len() + add_coords.len());
        let mut marks = Vec::with_capacity(self.len() + add_marks.len());
        for i in 0..self.len() {
            if !drop[i] {
                coords.extend_from_slice(&self.coords[i * d..(i + 1) * d]);
                marks.push(self.marks[i]);
            }
        }
        coords.extend_from_slice(add_coords);
        marks.extend_from_slice(add_marks);
        PointConfiguration { coords, marks, ..self.clone_header() }
    }

    fn clone_header(&self) -> Self {
        PointConfiguration {
            window: self.window,
            p: self.p,
            coords: Vec::new(),
            marks: Vec::new(),
            manifest: self.manifest.clone(),
        }
    }
}

fn check_p(p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        param(format!("p must lie in [0, 1], got {p}"))
    }
}

/// Multi-index of a box `R_x^ε = εx + [0, ε)^d`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BoxIndex(pub Vec<i64>);

/// Partition of the padded window into half-open boxes of pitch `ε`.
///
/// Boxes are numbered row-major with the first axis most significant, so the
/// linear order coincides with the lexicographic order on multi-indices.
#[derive(Clone, Debug, PartialEq)]
pub struct EpsilonGrid {
    dim: usize,
    pitch: f64,
    lo: i64,
    per_axis: usize,
}

/// The ε-box cover of the padded window.
pub fn box_partition(window: &Window, eps: f64) -> Result<EpsilonGrid> {
    if !(eps > 0.0 && eps.is_finite()) {
        return param(format!("box pitch must be positive, got {eps}"));
    }
    let m = window.outer() / eps;
    let mr = m.round();
    if (m - mr).abs() > 1e-9 * mr.max(1.0) || mr < 1.0 {
        return param(format!(
            "pitch {eps} does not divide the padded half-width {}",
            window.outer()
        ));
    }
    let m = mr as i64;
    Ok(EpsilonGrid { dim: window.dim, pitch: eps, lo: -m, per_axis: 2 * m as usize })
}

impl EpsilonGrid {
    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn pitch(&self) -> f64 {
        self.pitch
    }
    /// Smallest index along every axis.
    pub fn lo(&self) -> i64 {
        self.lo
    }
    pub fn per_axis(&self) -> usize {
        self.per_axis
    }
    pub fn box_count(&self) -> usize {
        self.per_axis.pow(self.dim as u32)
    }
    /// Lower corner `x + origin offset` of the grid.
    pub fn origin(&self) -> f64 {
        self.lo as f64 * self.pitch
    }

    pub fn contains(&self, idx: &BoxIndex) -> bool {
        idx.0.len() == self.dim
            && idx.0.iter().all(|&i| i >= self.lo && i < self.lo + self.per_axis as i64)
    }

    /// Box containing `x` (floor-based, half-open).
    pub fn index_of(&self, x: &[f64]) -> Option<BoxIndex> {
        let idx = BoxIndex(x.iter().map(|&c| (c / self.pitch).floor() as i64).collect());
        self.contains(&idx).then_some(idx)
    }

    /// Linear index of the box containing `x`.
    pub fn linear_of(&self, x: &[f64]) -> Option<usize> {
        let mut lin = 0usize;
        for &c in x {
            let i = (c / self.pitch).floor() as i64 - self.lo;
            if i < 0 || i >= self.per_axis as i64 {
                return None;
            }
            lin = lin * self.per_axis + i as usize;
        }
        Some(lin)
    }

    pub fn linear(&self, idx: &BoxIndex) -> Option<usize> {
        if !self.contains(idx) {
            return None;
        }
        Some(idx.0.iter().fold(0usize, |acc, &i| acc * self.per_axis + (i - self.lo) as usize))
    }

    pub fn index(&self, mut lin: usize) -> BoxIndex {
        let mut v = vec![0i64; self.dim];
        for k in (0..self.dim).rev() {
            v[k] = (lin % self.per_axis) as i64 + self.lo;
            lin /= self.per_axis;
        }
        BoxIndex(v)
    }

    /// Lower corner `εx` of a box.
    pub fn anchor(&self, idx: &BoxIndex) -> Vec<f64> {
        idx.0.iter().map(|&i| i as f64 * self.pitch).collect()
    }

    pub fn center(&self, idx: &BoxIndex) -> Vec<f64> {
        idx.0.iter().map(|&i| (i as f64 + 0.5) * self.pitch).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = BoxIndex> + '_ {
        (0..self.box_count()).map(move |l| self.index(l))
    }

    /// Euclidean distance from the origin to the closed box.
    pub fn min_norm(&self, idx: &BoxIndex) -> f64 {
        idx.0
            .iter()
            .map(|&i| {
                let a = i as f64 * self.pitch;
                let b = a + self.pitch;
                let c = if a > 0.0 {
                    a
                } else if b < 0.0 {
                    b
                } else {
                    0.0
                };
                c * c
            })
            .sum::<f64>()
            .sqrt()
    }

    /// Largest distance from the origin to a point of the closed box.
    pub fn max_norm(&self, idx: &BoxIndex) -> f64 {
        idx.0
            .iter()
            .map(|&i| {
                let a = (i as f64 * self.pitch).abs();
                let b = ((i + 1) as f64 * self.pitch).abs();
                a.max(b).powi(2)
            })
            .sum::<f64>()
            .sqrt()
    }

    /// Point ids of a configuration bucketed by linear box index (CSR layout).
    pub fn bucket(&self, config: &PointConfiguration) -> BoxBuckets {
        let mut counts = vec![0u32; self.box_count() + 1];
        let lins: Vec<usize> = (0..config.len())
            .map(|i| self.linear_of(config.point(i)).expect("point inside the grid"))
            .collect();
        for &l in &lins {
            counts[l + 1] += 1;
        }
        for i in 1..counts.len() {
            counts[i] += counts[i - 1];
        }
        let mut fill = counts.clone();
        let mut ids = vec![0u32; config.len()];
        for (i, &l) in lins.iter().enumerate() {
            ids[fill[l] as usize] = i as u32;
            fill[l] += 1;
        }
        BoxBuckets { starts: counts, ids }
    }

    /// Fresh Poisson content of one box, drawn from its own stream.
    pub fn fresh_content(&self, idx: &BoxIndex, stream_seed: u64) -> (Vec<f64>, Vec<f64>) {
        let mut words = vec![tag::RESAMPLE_BOX, self.pitch.to_bits()];
        words.extend(idx.0.iter().map(|&i| i as u64));
        let mut rng = seed::rng(seed::derive(stream_seed, &words));
        sample_box(&mut rng, &self.anchor(idx), self.pitch)
    }
}

/// Points grouped per box.
#[derive(Clone, Debug)]
pub struct BoxBuckets {
    starts: Vec<u32>,
    ids: Vec<u32>,
}

impl BoxBuckets {
    pub fn get(&self, lin: usize) -> &[u32] {
        &self.ids[self.starts[lin] as usize..self.starts[lin + 1] as usize]
    }
}

fn sample_box<R: Rng>(rng: &mut R, anchor: &[f64], pitch: f64) -> (Vec<f64>, Vec<f64>) {
    let vol = pitch.powi(anchor.len() as i32);
    let count = Poisson::new(vol).map(|d| d.sample(rng) as usize).unwrap_or(0);
    let mut coords = Vec::with_capacity(count * anchor.len());
    let mut marks = Vec::with_capacity(count);
    for _ in 0..count {
        for &a in anchor {
            let top = a + pitch;
            let mut x = a + rng.random::<f64>() * pitch;
            // Keep the half-open box exact under rounding.
            if x >= top {
                x = top.next_down();
            }
            if x < a {
                x = a;
            }
            coords.push(x);
        }
        marks.push(rng.random::<f64>());
    }
    (coords, marks)
}

/// Samples `(η^b, η^w)` in the padded window.
///
/// The window is cut into boxes of pitch at most 1 and every box draws its
/// content from a stream keyed by `(root_seed, box index)`, so counts in
/// disjoint boxes are independent and the output is bit-reproducible.
pub fn sample_configuration(window: &Window, p: f64, root_seed: u64) -> Result<PointConfiguration> {
    check_p(p)?;
    let window = Window::new(window.dim, window.half_width, window.pad)?;
    let outer = window.outer();
    let pitch = outer / outer.ceil();
    let grid = box_partition(&window, pitch)?;
    let mut coords = Vec::new();
    let mut marks = Vec::new();
    for lin in 0..grid.box_count() {
        let idx = grid.index(lin);
        let mut words = vec![tag::SAMPLE_BOX, pitch.to_bits()];
        words.extend(idx.0.iter().map(|&i| i as u64));
        let mut rng = seed::rng(seed::derive(root_seed, &words));
        let (c, m) = sample_box(&mut rng, &grid.anchor(&idx), pitch);
        coords.extend(c);
        marks.extend(m);
    }
    let manifest = SeedManifest { root_seed, sample_pitch: pitch, resamples: vec![] };
    Ok(PointConfiguration { window, p, coords, marks, manifest })
}

/// Replaces the content of one ε-box by an independent fresh sample.
///
/// Everything outside the box is left untouched; the input is not modified.
pub fn resample_box(
    config: &PointConfiguration,
    grid: &EpsilonGrid,
    idx: &BoxIndex,
    fresh_seed: u64,
) -> Result<PointConfiguration> {
    if grid.dim() != config.dim() || (grid.origin() + config.window().outer()).abs() > 1e-9 {
        return param("grid does not partition the configuration's window");
    }
    if !grid.contains(idx) {
        return param(format!("box {:?} is outside the grid", idx.0));
    }
    let inside: Vec<usize> = (0..config.len())
        .filter(|&i| grid.index_of(config.point(i)).as_ref() == Some(idx))
        .collect();
    let (c, m) = grid.fresh_content(idx, fresh_seed);
    let mut out = config.edited(&inside, &c, &m);
    out.manifest.resamples.push(ResampleRecord {
        pitch: grid.pitch(),
        index: idx.0.clone(),
        fresh_seed,
    });
    Ok(out)
}

// ---------------------------------------------------------------------------
// Point dump
// ---------------------------------------------------------------------------

/// Writes the CSV point dump: a parameter header row followed by one row per
/// point (`x1..xd, color, mark`). Floats use shortest round-trip formatting.
pub fn write_points<W: Write>(config: &PointConfiguration, out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().flexible(true).from_writer(out);
    let d = config.dim();
    let win = config.window();
    let csv_err = |e: csv::Error| Error::Format(e.to_string());
    w.write_record(["d", "L", "pad", "p", "seed"]).map_err(csv_err)?;
    w.write_record([
        d.to_string(),
        win.half_width.to_string(),
        win.pad.to_string(),
        config.p().to_string(),
        config.manifest().root_seed.to_string(),
    ])
    .map_err(csv_err)?;
    let mut header: Vec<String> = (1..=d).map(|k| format!("x{k}")).collect();
    header.push("color".into());
    header.push("mark".into());
    w.write_record(&header).map_err(csv_err)?;
    for i in 0..config.len() {
        let mut row: Vec<String> = config.point(i).iter().map(|c| c.to_string()).collect();
        row.push(if config.is_black(i) { "b" } else { "w" }.into());
        row.push(config.marks()[i].to_string());
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a point dump written by [`write_points`].
pub fn read_points<R: BufRead>(input: R) -> Result<PointConfiguration> {
    let mut r = csv::ReaderBuilder::new().flexible(true).has_headers(false).from_reader(input);
    let mut rows = r.records();
    let fmt = |m: &str| Error::Format(m.to_string());
    let mut next = || -> Result<csv::StringRecord> {
        rows.next().ok_or_else(|| fmt("truncated point dump"))?.map_err(|e| Error::Format(e.to_string()))
    };
    next()?;
    let head = next()?;
    let num = |s: &str| s.parse::<f64>().map_err(|_| fmt("bad number in header"));
    let d: usize = head[0].parse().map_err(|_| fmt("bad dimension"))?;
    let window = Window::new(d, num(&head[1])?, num(&head[2])?)?;
    let p = num(&head[3])?;
    let root_seed: u64 = head[4].parse().map_err(|_| fmt("bad seed"))?;
    next()?;
    let mut coords = Vec::new();
    let mut marks = Vec::new();
    for rec in rows {
        let rec = rec.map_err(|e| Error::Format(e.to_string()))?;
        if rec.len() != d + 2 {
            return Err(fmt("row width does not match the dimension"));
        }
        for k in 0..d {
            coords.push(num(&rec[k])?);
        }
        marks.push(num(&rec[d + 1])?);
    }
    let manifest = SeedManifest { root_seed, sample_pitch: 0.0, resamples: vec![] };
    PointConfiguration::from_parts(window, p, coords, marks, manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn padding_rule_meets_void_target() {
        for d in 2..=3 {
            let r = void_padding(d);
            let void = (-unit_ball_volume(d) * r.powi(d as i32)).exp();
            assert!((void - VOID_PROBABILITY).abs() < 1e-15);
            let w = Window::padded(d, 8.0).unwrap();
            assert!(w.pad >= r && w.outer().fract() == 0.0);
        }
    }

    #[test]
    fn partition_counts() {
        // padded extent 4 means outer half-width 2
        let w = Window::new(2, 1.0, 1.0).unwrap();
        assert_eq!(box_partition(&w, 1.0).unwrap().box_count(), 16);
        assert_eq!(box_partition(&w, 0.5).unwrap().box_count(), 64);
        assert!(box_partition(&w, 0.3).is_err());
        assert!(box_partition(&w, 0.0).is_err());
    }

    #[test]
    fn every_point_in_exactly_one_box() {
        let w = Window::new(2, 2.0, 1.0).unwrap();
        let c = sample_configuration(&w, 0.4, 11).unwrap();
        let g = box_partition(&w, 0.5).unwrap();
        for i in 0..c.len() {
            let idx = g.index_of(c.point(i)).unwrap();
            let hits = g.iter().filter(|b| {
                let a = g.anchor(b);
                a.iter().zip(c.point(i)).all(|(&lo, &x)| x >= lo && x < lo + g.pitch())
            });
            assert_eq!(hits.count(), 1);
            assert_eq!(g.index(g.linear(&idx).unwrap()), idx);
        }
    }

    #[test]
    fn p_zero_has_no_black_points() {
        let w = Window::new(2, 4.0, 3.0).unwrap();
        for s in 0..20 {
            assert_eq!(sample_configuration(&w, 0.0, s).unwrap().black_count(), 0);
        }
    }

    #[test]
    fn invalid_parameters() {
        let w = Window::new(2, 4.0, 3.0).unwrap();
        assert!(sample_configuration(&w, 1.5, 0).is_err());
        assert!(sample_configuration(&w, -0.1, 0).is_err());
        assert!(Window::new(2, 0.0, 1.0).is_err());
        assert!(Window::new(2, 1.0, -1.0).is_err());
    }

    #[test]
    fn resample_leaves_outside_untouched() {
        let w = Window::new(2, 3.0, 3.0).unwrap();
        let c = sample_configuration(&w, 0.5, 5).unwrap();
        let g = box_partition(&w, 0.5).unwrap();
        let idx = BoxIndex(vec![1, -2]);
        let r = resample_box(&c, &g, &idx, 99).unwrap();
        let outside = |cfg: &PointConfiguration| {
            let mut v: Vec<(Vec<u64>, u64)> = (0..cfg.len())
                .filter(|&i| g.index_of(cfg.point(i)).as_ref() != Some(&idx))
                .map(|i| (cfg.point(i).iter().map(|x| x.to_bits()).collect(), cfg.marks()[i].to_bits()))
                .collect();
            v.sort();
            v
        };
        assert_eq!(outside(&c), outside(&r));
        assert!(c.manifest().resamples.is_empty());
        assert_eq!(r.manifest().resamples.len(), 1);
        assert!(resample_box(&c, &g, &BoxIndex(vec![100, 0]), 1).is_err());
    }

    #[test]
    fn empty_resample_of_empty_box_is_identity() {
        let w = Window::new(2, 3.0, 3.0).unwrap();
        let c = sample_configuration(&w, 0.5, 8).unwrap();
        let g = box_partition(&w, 0.25).unwrap();
        let b = g
            .iter()
            .find(|b| (0..c.len()).all(|i| g.index_of(c.point(i)).as_ref() != Some(b)))
            .unwrap();
        let seed = (0..).find(|&s| g.fresh_content(&b, s).1.is_empty()).unwrap();
        let r = resample_box(&c, &g, &b, seed).unwrap();
        assert_eq!(r.coords(), c.coords());
        assert_eq!(r.marks(), c.marks());
    }
}

//! The exploration algorithm `T_k` for `{0 ↔ ∂B_n}` and its revealments.
//!
//! Runs on the raster form of the event with ε-boxes made of whole raster
//! cells (`ε = m h`): a site with lattice index `i` lies in box `⌊i / m⌋`.
//! `Z_0` is the band of sites within `h√d` of the sphere of radius `k`; a box
//! joins the frontier when it holds a site of `Z_t` or a site adjacent to a
//! black site already in `Z_t` (diagonal neighbours included in the plane, so
//! that every block link between discovered sites is itself determined). Boxes are visited in lexicographic order of
//! their indices.
//!
//! `Discover(y)` reveals the boxes within distance `t` of `y` in rounds
//! `t = 0, 1, ...` and stops as soon as every box meeting a closed ball
//! `B(s, |s - owner(s)|)`, for every domain site `s` of `R_y`, is revealed.
//! That certificate fixes the colour of all of `R_y`.

use std::collections::BTreeSet;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::connectivity::{raster_event, EventKind, RasterEvent, DST, SRC};
use crate::error::{param, Error, Result};
use crate::estimators::{event_window, run_trials};
use crate::geometry::NearestIndex;
use crate::point_process::{box_partition, sample_configuration, BoxIndex, EpsilonGrid, PointConfiguration};
use crate::stats::{Estimate, Params};
use crate::union_find::UnionFind;

/// Geometry of one exploration: target radius `n`, start radius `k`, box pitch `ε`, raster pitch `h`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExplorationSetup {
    pub n: f64,
    pub k: f64,
    pub eps: f64,
    pub h: f64,
}

impl ExplorationSetup {
    pub fn new(n: f64, k: f64, eps: f64, h: f64) -> Result<Self> {
        if !(n > 0.0) || !(0.0..=n).contains(&k) {
            return param(format!("need 0 <= k <= n with n > 0, got k = {k}, n = {n}"));
        }
        if !(h > 0.0) || !(eps > 0.0) {
            return param("pitches must be positive");
        }
        let m = eps / h;
        if (m - m.round()).abs() > 1e-9 || m.round() < 1.0 {
            return param(format!("ε = {eps} is not a multiple of h = {h}"));
        }
        Ok(ExplorationSetup { n, k, eps, h })
    }

    fn cells(&self) -> i64 {
        (self.eps / self.h).round() as i64
    }
}

/// Everything `T_k` did on one configuration.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExplorationTrace {
    pub setup: ExplorationSetup,
    /// Boxes in visiting order: `X_t` is the first `t` entries.
    pub visits: Vec<BoxIndex>,
    /// `|Z_t|` in raster sites, before each visit and after the last.
    pub frontier_sizes: Vec<usize>,
    /// Number of candidate boxes before each visit.
    pub candidates: Vec<usize>,
    /// Largest revealed radius used by `Discover` at each visit (`None`: nothing new needed).
    pub rounds: Vec<Option<u32>>,
    /// Revealed boxes, sorted.
    pub revealed: Vec<BoxIndex>,
    pub decision: bool,
    pub steps: usize,
}

impl ExplorationTrace {
    pub fn write_json<W: Write>(&self, out: W) -> Result<()> {
        serde_json::to_writer_pretty(out, self).map_err(|e| Error::Format(e.to_string()))
    }
}

/// Raster event, ε-grid and bookkeeping shared by [`run_tk`] and the profile.
struct Explorer<'a> {
    config: &'a PointConfiguration,
    ev: RasterEvent,
    grid: EpsilonGrid,
    setup: ExplorationSetup,
    band: Vec<bool>,
}

impl<'a> Explorer<'a> {
    fn new(config: &'a PointConfiguration, setup: &ExplorationSetup) -> Result<Self> {
        let d = config.dim();
        let kind = EventKind::OriginToSphere { n: setup.n };
        let ev = raster_event(config, &NearestIndex::for_config(config), &kind, setup.h)?;
        let grid = box_partition(config.window(), setup.eps)?;
        let slack = setup.h * (d as f64).sqrt();
        let g = &ev.grid;
        let band = (0..g.len())
            .map(|s| ev.in_domain(s) && (norm(&g.position(s)) - setup.k).abs() <= slack)
            .collect();
        Ok(Explorer { config, ev, grid, setup: setup.clone(), band })
    }

    fn box_of_site(&self, idx: &[i64]) -> Option<usize> {
        let m = self.setup.cells();
        let lo = self.grid.lo();
        let per = self.grid.per_axis() as i64;
        let mut lin = 0usize;
        for &i in idx {
            let b = i.div_euclid(m) - lo;
            if b < 0 || b >= per {
                return None;
            }
            lin = lin * per as usize + b as usize;
        }
        Some(lin)
    }

    /// Domain sites of box `lin`.
    fn sites_of_box(&self, lin: usize) -> Vec<usize> {
        let g = &self.ev.grid;
        let m = self.setup.cells();
        let b = self.grid.index(lin);
        let d = g.dim;
        let lo: Vec<i64> = (0..d).map(|k| (b.0[k] * m).max(g.sites.lo[k])).collect();
        let hi: Vec<i64> = (0..d).map(|k| (b.0[k] * m + m - 1).min(g.sites.hi[k])).collect();
        let mut out = Vec::new();
        if lo.iter().zip(&hi).any(|(a, b)| a > b) {
            return out;
        }
        let mut cur = lo.clone();
        loop {
            let s = g.linear(&cur).unwrap();
            if self.ev.in_domain(s) {
                out.push(s);
            }
            let mut k = d;
            loop {
                if k == 0 {
                    return out;
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

    /// Boxes whose closure meets `B(s, |s - owner(s)|)` for some site `s` of the box.
    fn needed(&self, sites: &[usize]) -> Result<BTreeSet<usize>> {
        let g = &self.ev.grid;
        let eps = self.setup.eps;
        let d = g.dim;
        let mut need = BTreeSet::new();
        for &s in sites {
            let pos = g.position(s);
            let o = self.config.point(g.owner[s] as usize);
            let r = pos.iter().zip(o).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt() * (1.0 + 1e-12) + 1e-12;
            let lo: Vec<i64> = pos.iter().map(|c| ((c - r) / eps).floor() as i64).collect();
            let hi: Vec<i64> = pos.iter().map(|c| ((c + r) / eps).floor() as i64).collect();
            let mut cur = lo.clone();
            loop {
                let d2: f64 = (0..d)
                    .map(|k| {
                        let a = cur[k] as f64 * eps;
                        let b = a + eps;
                        let c = pos[k].clamp(a, b);
                        (c - pos[k]).powi(2)
                    })
                    .sum();
                if d2 <= r * r {
                    match self.grid.linear(&BoxIndex(cur.clone())) {
                        Some(l) => {
                            need.insert(l);
                        }
                        None => {
                            return Err(Error::WindowTooSmall(format!(
                                "Discover needs box {cur:?} outside the grid"
                            )))
                        }
                    }
                }
                let mut k = d;
                let mut done = true;
                while k > 0 {
                    k -= 1;
                    if cur[k] < hi[k] {
                        cur[k] += 1;
                        done = false;
                        break;
                    }
                    cur[k] = lo[k];
                }
                if done {
                    break;
                }
            }
        }
        Ok(need)
    }

    /// `Discover(y)`: returns the last round radius, or `None` when nothing new was needed.
    fn discover(&self, y: usize, revealed: &mut [bool]) -> Result<Option<u32>> {
        let need = self.needed(&self.sites_of_box(y))?;
        let yb = self.grid.index(y);
        let eps = self.setup.eps;
        let dist = |x: usize| -> f64 {
            let xb = self.grid.index(x);
            xb.0.iter().zip(&yb.0).map(|(a, b)| ((a - b) as f64 * eps).powi(2)).sum::<f64>().sqrt()
        };
        let mut radius: Option<f64> = None;
        for &x in &need {
            if !revealed[x] {
                let r = dist(x).ceil();
                radius = Some(radius.map_or(r, |q: f64| q.max(r)));
            }
        }
        let Some(t) = radius else {
            return Ok(None);
        };
        let span = (t / eps).floor() as i64;
        let d = yb.0.len();
        let lo = self.grid.lo();
        let top = lo + self.grid.per_axis() as i64 - 1;
        let mut cur: Vec<i64> = yb.0.iter().map(|&c| (c - span).max(lo)).collect();
        let start = cur.clone();
        let end: Vec<i64> = yb.0.iter().map(|&c| (c + span).min(top)).collect();
        loop {
            let l = self.grid.linear(&BoxIndex(cur.clone())).unwrap();
            if dist(l) <= t {
                revealed[l] = true;
            }
            let mut k = d;
            let mut done = true;
            while k > 0 {
                k -= 1;
                if cur[k] < end[k] {
                    cur[k] += 1;
                    done = false;
                    break;
                }
                cur[k] = start[k];
            }
            if done {
                break;
            }
        }
        Ok(Some(t as u32))
    }

    fn run(&self) -> Result<(ExplorationTrace, Vec<bool>)> {
        let g = &self.ev.grid;
        let strides = g.strides();
        let d = g.dim;
        let nbox = self.grid.box_count();
        let mut visited = vec![false; nbox];
        let mut revealed = vec![false; nbox];
        let mut frontier = BTreeSet::new();
        let mut z_size = 0usize;
        for s in 0..g.len() {
            if self.band[s] {
                z_size += 1;
                frontier.insert(self.box_of_site(&g.site_index(s)).ok_or_else(|| {
                    Error::WindowTooSmall("band site outside the ε-grid".into())
                })?);
            }
        }
        let offsets = neighbour_offsets(d);
        let mut known_black = vec![false; g.len()];
        let mut trace = ExplorationTrace {
            setup: self.setup.clone(),
            visits: vec![],
            frontier_sizes: vec![],
            candidates: vec![],
            rounds: vec![],
            revealed: vec![],
            decision: false,
            steps: 0,
        };
        while let Some(y) = frontier.pop_first() {
            trace.frontier_sizes.push(z_size);
            trace.candidates.push(frontier.len() + 1);
            trace.rounds.push(self.discover(y, &mut revealed)?);
            visited[y] = true;
            trace.visits.push(self.grid.index(y));
            for s in self.sites_of_box(y) {
                if !g.black[s] {
                    continue;
                }
                known_black[s] = true;
                if !self.band[s] {
                    z_size += 1;
                }
                let idx = g.site_index(s);
                for off in &offsets {
                    let mut ti = idx.clone();
                    let mut t = s as i64;
                    let mut inside = true;
                    for k in 0..d {
                        ti[k] += off[k];
                        inside &= ti[k] >= g.sites.lo[k] && ti[k] <= g.sites.hi[k];
                        t += off[k] * strides[k] as i64;
                    }
                    if !inside || !self.ev.in_domain(t as usize) {
                        continue;
                    }
                    if let Some(b) = self.box_of_site(&ti) {
                        if !visited[b] {
                            frontier.insert(b);
                        }
                    }
                }
            }
        }
        trace.frontier_sizes.push(z_size);
        trace.steps = trace.visits.len();
        trace.decision = connects(&self.ev, &known_black);
        trace.revealed = (0..nbox).filter(|&l| revealed[l]).map(|l| self.grid.index(l)).collect();
        Ok((trace, revealed))
    }

    /// For every box, whether its anchor site is black and joined to the band.
    fn anchor_connections(&self) -> Vec<Option<bool>> {
        let g = &self.ev.grid;
        let uf = black_union(&self.ev, &g.black);
        let mut touches = vec![false; g.len()];
        for s in 0..g.len() {
            if self.band[s] && g.black[s] {
                touches[uf.find_const(s as u32) as usize] = true;
            }
        }
        let m = self.setup.cells();
        (0..self.grid.box_count())
            .map(|l| {
                let b = self.grid.index(l);
                let site: Vec<i64> = b.0.iter().map(|&c| c * m).collect();
                let s = g.linear(&site)?;
                if !self.ev.in_domain(s) {
                    return None;
                }
                Some(g.black[s] && touches[uf.find_const(s as u32) as usize])
            })
            .collect()
    }
}

/// Orthogonal steps, plus the diagonal steps in the plane.
fn neighbour_offsets(d: usize) -> Vec<Vec<i64>> {
    let mut out = Vec::new();
    for k in 0..d {
        for step in [-1i64, 1] {
            let mut v = vec![0; d];
            v[k] = step;
            out.push(v);
        }
    }
    if d == 2 {
        for a in [-1i64, 1] {
            for b in [-1i64, 1] {
                out.push(vec![a, b]);
            }
        }
    }
    out
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|c| c * c).sum::<f64>().sqrt()
}

/// Union-find after all unions, with read-only lookups.
struct Frozen {
    parent: Vec<u32>,
}

impl Frozen {
    fn find_const(&self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            x = self.parent[x as usize];
        }
        x
    }
}

fn black_union(ev: &RasterEvent, black: &[bool]) -> Frozen {
    let g = &ev.grid;
    let mut uf = UnionFind::new(g.len());
    let strides = g.strides();
    for s in 0..g.len() {
        if !(ev.in_domain(s) && black[s]) {
            continue;
        }
        let idx = g.site_index(s);
        for k in 0..g.dim {
            if idx[k] < g.sites.hi[k] {
                let t = s + strides[k];
                if ev.in_domain(t) && black[t] {
                    uf.union(s as u32, t as u32);
                }
            }
        }
    }
    for s in 0..ev.diag.len() {
        if let Some((u, v)) = ev.diagonal_link(s, &ev.diag, &strides) {
            if ev.in_domain(u) && ev.in_domain(v) && black[u] && black[v] {
                uf.union(u as u32, v as u32);
            }
        }
    }
    let parent = (0..g.len() as u32).map(|s| uf.find(s)).collect();
    Frozen { parent }
}

/// Origin and outer sphere joined through the given black sites.
fn connects(ev: &RasterEvent, black: &[bool]) -> bool {
    let g = &ev.grid;
    let labels = black_union(ev, black);
    let mut acc = vec![0u8; g.len()];
    for s in 0..g.len() {
        if ev.in_domain(s) && black[s] {
            let r = labels.find_const(s as u32) as usize;
            acc[r] |= ev.site_flags[s] & (SRC | DST);
            if acc[r] == SRC | DST {
                return true;
            }
        }
    }
    false
}

/// Runs `T_k` on one configuration.
pub fn run_tk(config: &PointConfiguration, setup: &ExplorationSetup) -> Result<ExplorationTrace> {
    Ok(Explorer::new(config, setup)?.run()?.0)
}

/// Revealments `δ_x(T_k)` and connection probabilities `P[x ↔ S_k]` per box.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RevealmentProfile {
    pub setup: ExplorationSetup,
    pub d: usize,
    pub p: f64,
    pub trials: usize,
    pub root_seed: u64,
    pub boxes: Vec<BoxIndex>,
    pub revealment: Vec<Estimate>,
    /// `None` for boxes whose anchor lies outside the event domain.
    pub connection: Vec<Option<Estimate>>,
    /// Per-trial revealed boxes (linear grid indices).
    pub revealed: Vec<Vec<u32>>,
    pub decisions: Vec<bool>,
    /// Trials where the decision disagreed with direct evaluation.
    pub mismatches: usize,
}

impl RevealmentProfile {
    /// Largest `δ_x / P[x ↔ S_k]` over boxes with `P[x ↔ S_k] > min_prob`.
    pub fn max_ratio(&self, min_prob: f64) -> Option<(BoxIndex, f64)> {
        let mut best: Option<(BoxIndex, f64)> = None;
        for (i, c) in self.connection.iter().enumerate() {
            let Some(c) = c else { continue };
            if c.mean <= min_prob {
                continue;
            }
            let r = self.revealment[i].mean / c.mean;
            if best.as_ref().is_none_or(|b| r > b.1) {
                best = Some((self.boxes[i].clone(), r));
            }
        }
        best
    }

    /// `Σ_x δ_x`, the expected number of revealed boxes.
    pub fn total(&self) -> Estimate {
        let xs: Vec<f64> = self.revealed.iter().map(|r| r.len() as f64).collect();
        Estimate::from_samples(&xs)
    }
}

/// Monte Carlo revealment profile of `T_k` at parameter `p`.
pub fn revealment_profile(d: usize, p: f64, setup: &ExplorationSetup, trials: usize, root_seed: u64) -> Result<RevealmentProfile> {
    let kind = EventKind::OriginToSphere { n: setup.n };
    let window = event_window(d, &kind)?;
    let grid = box_partition(&window, setup.eps)?;
    let rows = run_trials(
        trials,
        root_seed,
        |_, s| {
            let c = sample_configuration(&window, p, s)?;
            let ex = Explorer::new(&c, setup)?;
            let (trace, revealed) = ex.run()?;
            let direct = ex.ev.holds_sites(&ex.ev.grid.black);
            let lins: Vec<u32> = (0..revealed.len()).filter(|&l| revealed[l]).map(|l| l as u32).collect();
            Ok((lins, ex.anchor_connections(), trace.decision, direct))
        },
        |_| f64::NAN,
    )?;
    let nbox = grid.box_count();
    let mut rev = vec![0usize; nbox];
    let mut con = vec![0usize; nbox];
    let mut inside = vec![false; nbox];
    for (lins, anchors, _, _) in &rows {
        for &l in lins {
            rev[l as usize] += 1;
        }
        for (l, a) in anchors.iter().enumerate() {
            if let Some(b) = a {
                inside[l] = true;
                con[l] += *b as usize;
            }
        }
    }
    let prm = Params { d, p, n: Some(setup.n), eps: Some(setup.eps), h: Some(setup.h) };
    let est = |k: usize, label: &str| {
        let m = k as f64 / trials as f64;
        let se = if trials > 1 { (m * (1.0 - m) / (trials - 1) as f64).sqrt() } else { 0.0 };
        Estimate { mean: m, stderr: se, trials, root_seed, event: label.to_string(), params: prm.clone() }
    };
    Ok(RevealmentProfile {
        setup: setup.clone(),
        d,
        p,
        trials,
        root_seed,
        boxes: grid.iter().collect(),
        revealment: rev.iter().map(|&k| est(k, "revealment")).collect(),
        connection: (0..nbox).map(|l| inside[l].then(|| est(con[l], "connection to S_k"))).collect(),
        mismatches: rows.iter().filter(|r| r.2 != r.3).count(),
        decisions: rows.iter().map(|r| r.2).collect(),
        revealed: rows.into_iter().map(|r| r.0).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::connectivity::{evaluate, Engine, EventSpec};

    #[test]
    fn decision_matches_direct_evaluation() {
        let setup = ExplorationSetup::new(3.0, 1.5, 0.5, 0.125).unwrap();
        let kind = EventKind::OriginToSphere { n: 3.0 };
        let window = event_window(2, &kind).unwrap();
        let spec = EventSpec::new(kind, Engine::Raster { h: 0.125 });
        let mut seen = [0; 2];
        for s in 0..40 {
            let c = sample_configuration(&window, 0.6, s).unwrap();
            let t = run_tk(&c, &setup).unwrap();
            assert_eq!(t.decision, evaluate(&c, &spec).unwrap(), "seed {s}");
            seen[t.decision as usize] += 1;
            assert_eq!(t.visits.len(), t.steps);
            let mut sorted = t.visits.clone();
            sorted.sort();
            sorted.dedup();
            assert_eq!(sorted.len(), t.steps);
        }
        assert!(seen[0] > 0 && seen[1] > 0);
    }

    #[test]
    fn visited_boxes_are_revealed() {
        let setup = ExplorationSetup::new(2.0, 1.0, 0.5, 0.25).unwrap();
        let window = event_window(2, &EventKind::OriginToSphere { n: 2.0 }).unwrap();
        let c = sample_configuration(&window, 0.5, 9).unwrap();
        let t = run_tk(&c, &setup).unwrap();
        for v in &t.visits {
            assert!(t.revealed.binary_search(v).is_ok());
        }
    }

    #[test]
    fn bad_setups_are_rejected() {
        assert!(ExplorationSetup::new(2.0, 3.0, 0.5, 0.25).is_err());
        assert!(ExplorationSetup::new(2.0, 1.0, 0.5, 0.3).is_err());
    }
}

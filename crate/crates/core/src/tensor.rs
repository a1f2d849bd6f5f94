//! Per-box influences `Inf_x^ε` and the derivative-versus-influence-sum check.
//!
//! Influences use a paired design: one base configuration per trial, and every
//! box of the ε-grid resampled once against it with the stream
//! `derive(trial seed, FRESH, box)`. On the raster engine the resampled event is
//! recomputed by a local owner update, which is exact: only sites owned by a
//! removed point, or within the covering radius of an added point, can change.

use serde::{Deserialize, Serialize};

use crate::connectivity::{block_corners, diagonal_code, event_graph, raster_event, Engine, EventKind, EventSpec, RasterEvent};
use crate::error::{param, Result};
use crate::estimators::{event_window, run_trials};
use crate::geometry::{closer, dist2, NearestIndex};
use crate::point_process::{box_partition, resample_box, sample_configuration, BoxIndex, EpsilonGrid, PointConfiguration};
use crate::seed::{self, tag};
use crate::stats::{mean_se, Estimate, Params};

/// Fresh-content stream of box `lin` in the trial seeded by `trial_seed`.
pub fn fresh_seed(trial_seed: u64, lin: usize) -> u64 {
    seed::derive(trial_seed, &[tag::FRESH, lin as u64])
}

/// Raster event prepared for many single-box replacements.
pub struct RasterBase<'a> {
    pub config: &'a PointConfiguration,
    pub event: RasterEvent,
    index: NearestIndex,
    /// Domain sites grouped by owner (CSR).
    starts: Vec<u32>,
    sites: Vec<u32>,
    /// Largest distance from a domain site to its owner.
    pub rho: f64,
    pub holds: bool,
}

/// Reusable buffers for [`RasterBase::replaced`].
#[derive(Default)]
pub struct Scratch {
    removed: Vec<bool>,
    stamp: Vec<u32>,
    round: u32,
    touched: Vec<u32>,
    black: Vec<bool>,
    owner: Vec<u32>,
    diag: Vec<u8>,
}

impl<'a> RasterBase<'a> {
    pub fn new(config: &'a PointConfiguration, kind: &EventKind, h: f64) -> Result<Self> {
        let index = NearestIndex::for_config(config);
        let event = raster_event(config, &index, kind, h)?;
        let g = &event.grid;
        let mut starts = vec![0u32; config.len() + 1];
        let mut rho = 0.0f64;
        for s in 0..g.len() {
            if event.in_domain(s) {
                starts[g.owner[s] as usize + 1] += 1;
                let pos = g.position(s);
                let o = config.point(g.owner[s] as usize);
                rho = rho.max(dist2(&pos, o).sqrt());
            }
        }
        for i in 1..starts.len() {
            starts[i] += starts[i - 1];
        }
        let mut fill = starts.clone();
        let mut sites = vec![0u32; starts[config.len()] as usize];
        for s in 0..g.len() {
            if event.in_domain(s) {
                let o = g.owner[s] as usize;
                sites[fill[o] as usize] = s as u32;
                fill[o] += 1;
            }
        }
        let holds = event.holds_sites(&g.black);
        Ok(RasterBase { config, event, index, starts, sites, rho, holds })
    }

    fn owned(&self, i: usize) -> &[u32] {
        &self.sites[self.starts[i] as usize..self.starts[i + 1] as usize]
    }

    /// Whether point `i` owns any domain site.
    pub fn is_relevant(&self, i: usize) -> bool {
        self.starts[i] != self.starts[i + 1]
    }

    /// Event value after removing `removed` and adding `(coords, marks)`.
    pub fn replaced(&self, removed: &[u32], coords: &[f64], marks: &[f64], sc: &mut Scratch) -> bool {
        if removed.is_empty() && marks.is_empty() {
            return self.holds;
        }
        let cfg = self.config;
        let g = &self.event.grid;
        let d = cfg.dim();
        let p = cfg.p();
        if sc.removed.len() != cfg.len() {
            sc.removed = vec![false; cfg.len()];
        }
        if sc.stamp.len() != g.len() {
            sc.stamp = vec![0; g.len()];
            sc.round = 0;
        }
        sc.round = sc.round.wrapping_add(1);
        if sc.round == 0 {
            sc.stamp.iter_mut().for_each(|s| *s = 0);
            sc.round = 1;
        }
        sc.touched.clear();
        for &r in removed {
            sc.removed[r as usize] = true;
        }
        // Sites whose owner disappears, then sites an added point may steal.
        for &r in removed {
            for &s in self.owned(r as usize) {
                if sc.stamp[s as usize] != sc.round {
                    sc.stamp[s as usize] = sc.round;
                    sc.touched.push(s);
                }
            }
        }
        let mut lo = vec![0i64; d];
        let mut hi = vec![0i64; d];
        for q in coords.chunks(d) {
            let mut empty = false;
            for k in 0..d {
                lo[k] = ((q[k] - self.rho) / g.h).ceil().max(g.sites.lo[k] as f64) as i64;
                hi[k] = ((q[k] + self.rho) / g.h).floor().min(g.sites.hi[k] as f64) as i64;
                empty |= lo[k] > hi[k];
            }
            if empty {
                continue;
            }
            let mut cur = lo.clone();
            loop {
                let s = g.linear(&cur).unwrap();
                if self.event.in_domain(s) && sc.stamp[s] != sc.round {
                    sc.stamp[s] = sc.round;
                    sc.touched.push(s as u32);
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
        let mut changed: Vec<(u32, bool)> = Vec::new();
        let mut moved: Vec<(u32, u32)> = Vec::new();
        let mut pos = vec![0.0; d];
        for &s in &sc.touched {
            let s = s as usize;
            for (k, &i) in g.site_index(s).iter().enumerate() {
                pos[k] = i as f64 * g.h;
            }
            let o = g.owner[s] as usize;
            let (mut best_pt, mut best_d2, mut best_black, mut best_id): (Vec<f64>, f64, bool, u32);
            if sc.removed[o] {
                match self.index.nearest_filtered(&pos, |id| sc.removed[id as usize]) {
                    Some((id, d2)) => {
                        best_pt = cfg.point(id as usize).to_vec();
                        best_d2 = d2;
                        best_black = cfg.is_black(id as usize);
                        best_id = id;
                    }
                    None => {
                        best_pt = vec![f64::INFINITY; d];
                        best_d2 = f64::INFINITY;
                        best_black = false;
                        best_id = u32::MAX;
                    }
                }
            } else {
                best_pt = cfg.point(o).to_vec();
                best_d2 = dist2(&pos, &best_pt);
                best_black = g.black[s];
                best_id = o as u32;
            }
            for (j, (q, &m)) in coords.chunks(d).zip(marks).enumerate() {
                let d2 = dist2(&pos, q);
                if closer(d2, q, best_d2, &best_pt) {
                    best_pt.copy_from_slice(q);
                    best_d2 = d2;
                    best_black = m < p;
                    best_id = (cfg.len() + j) as u32;
                }
            }
            if best_black != g.black[s] {
                changed.push((s as u32, best_black));
            }
            if best_id != g.owner[s] {
                moved.push((s as u32, best_id));
            }
        }
        for &r in removed {
            sc.removed[r as usize] = false;
        }
        let relinked = self.relinked(&moved, coords, sc);
        if changed.is_empty() && relinked.is_empty() {
            return self.holds;
        }
        let want = self.event.black;
        if relinked.is_empty() {
            if self.holds && changed.iter().all(|c| c.1 == want) {
                return true;
            }
            if !self.holds && changed.iter().all(|c| c.1 != want) {
                return false;
            }
        }
        if sc.black.len() != g.len() {
            sc.black = g.black.clone();
        }
        if sc.diag.len() != self.event.diag.len() {
            sc.diag = self.event.diag.clone();
        }
        for &(s, b) in &changed {
            sc.black[s as usize] = b;
        }
        for &(s, c) in &relinked {
            sc.diag[s as usize] = c;
        }
        let out = self.event.holds_with(&sc.black, &sc.diag);
        for &(s, _) in &changed {
            sc.black[s as usize] = g.black[s as usize];
        }
        for &(s, _) in &relinked {
            sc.diag[s as usize] = self.event.diag[s as usize];
        }
        out
    }

    /// Blocks whose diagonal link changes after the owner moves in `moved`.
    fn relinked(&self, moved: &[(u32, u32)], coords: &[f64], sc: &mut Scratch) -> Vec<(u32, u8)> {
        let g = &self.event.grid;
        if self.event.diag.is_empty() || moved.is_empty() {
            return Vec::new();
        }
        if sc.owner.len() != g.len() {
            sc.owner = g.owner.clone();
        }
        for &(s, o) in moved {
            sc.owner[s as usize] = o;
        }
        let cfg = self.config;
        let n = cfg.len();
        let pos = |id: u32| {
            let id = id as usize;
            if id < n {
                let p = cfg.point(id);
                [p[0], p[1]]
            } else if id == u32::MAX as usize {
                [f64::INFINITY, f64::INFINITY]
            } else {
                [coords[2 * (id - n)], coords[2 * (id - n) + 1]]
            }
        };
        let strides = g.strides();
        let shape = g.shape();
        let mut anchors: Vec<usize> = Vec::new();
        for &(s, _) in moved {
            let idx = g.site_index(s as usize);
            let (i, j) = ((idx[0] - g.sites.lo[0]) as usize, (idx[1] - g.sites.lo[1]) as usize);
            for (di, dj) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
                if i >= di && j >= dj && i - di + 1 < shape[0] && j - dj + 1 < shape[1] {
                    anchors.push((i - di) * strides[0] + (j - dj) * strides[1]);
                }
            }
        }
        anchors.sort_unstable();
        anchors.dedup();
        let mut out = Vec::new();
        for a in anchors {
            let o = block_corners(a, &strides).map(|t| sc.owner[t]);
            let idx = g.site_index(a);
            let code = diagonal_code(o, pos, idx[0] as f64 * g.h, idx[1] as f64 * g.h, g.h);
            if code != self.event.diag[a] {
                out.push((a as u32, code));
            }
        }
        for &(s, _) in moved {
            sc.owner[s as usize] = g.owner[s as usize];
        }
        out
    }

    /// Per-box flip indicators for every box of `grid`, as the list of flipped boxes.
    pub fn flipped_boxes(&self, grid: &EpsilonGrid, trial_seed: u64, sc: &mut Scratch) -> Vec<u32> {
        let buckets = grid.bucket(self.config);
        let mut out = Vec::new();
        for lin in 0..grid.box_count() {
            let idx = grid.index(lin);
            let (c, m) = grid.fresh_content(&idx, fresh_seed(trial_seed, lin));
            let old = buckets.get(lin);
            if old.is_empty() && m.is_empty() {
                continue;
            }
            if self.replaced(old, &c, &m, sc) != self.holds {
                out.push(lin as u32);
            }
        }
        out
    }
}

/// Influence estimates for every box of an ε-grid.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InfluenceProfile {
    pub eps: f64,
    pub p: f64,
    pub event: EventSpec,
    pub d: usize,
    pub trials: usize,
    pub root_seed: u64,
    pub boxes: Vec<BoxIndex>,
    pub estimates: Vec<Estimate>,
    /// Per-trial `Σ_x 1{box x flips the event}`.
    pub trial_sums: Vec<f64>,
    /// Per-trial event value on the base configuration.
    pub base_values: Vec<bool>,
    /// Per-trial flipped box indices (linear in the grid).
    pub flips: Vec<Vec<u32>>,
}

impl InfluenceProfile {
    /// Estimate of `Σ_x Inf_x` over the whole grid.
    pub fn sum(&self) -> Estimate {
        Estimate::from_samples(&self.trial_sums).labelled("influence sum", self.root_seed, self.params())
    }

    fn params(&self) -> Params {
        Params { d: self.d, p: self.p, n: None, eps: Some(self.eps), h: self.event.engine.pitch() }
    }

    /// Sum over boxes whose sup-norm shell is the outermost one.
    pub fn outer_shell(&self) -> Estimate {
        let m = self.boxes.iter().map(|b| b.0.iter().map(|v| v.abs().max((v + 1).abs())).max().unwrap()).max().unwrap_or(0);
        let outer: Vec<bool> = self.boxes.iter().map(|b| b.0.iter().any(|v| v.abs().max((v + 1).abs()) == m)).collect();
        let xs: Vec<f64> = self
            .flips
            .iter()
            .map(|f| f.iter().filter(|&&lin| outer[lin as usize]).count() as f64)
            .collect();
        Estimate::from_samples(&xs).labelled("outer shell influence", self.root_seed, self.params())
    }
}

fn bernoulli(count: usize, trials: usize) -> Estimate {
    let m = count as f64 / trials as f64;
    let se = if trials > 1 { (m * (1.0 - m) / (trials - 1) as f64).sqrt() } else { 0.0 };
    Estimate { mean: m, stderr: se, trials, root_seed: 0, event: String::new(), params: Params::default() }
}

fn check_eps(window_outer: f64, eps: f64) -> Result<()> {
    if !(eps > 0.0) {
        return param("ε must be positive");
    }
    let r = window_outer / eps;
    if (r - r.round()).abs() > 1e-9 {
        return param(format!("ε = {eps} does not divide the padded extent {window_outer}"));
    }
    Ok(())
}

/// Flip indicator of one box in one trial, by full re-evaluation.
fn flip_direct(config: &PointConfiguration, spec: &EventSpec, grid: &EpsilonGrid, lin: usize, trial_seed: u64, base: bool) -> Result<bool> {
    let idx = grid.index(lin);
    let other = resample_box(config, grid, &idx, fresh_seed(trial_seed, lin))?;
    if other.len() == config.len() && other.coords() == config.coords() {
        return Ok(false);
    }
    Ok(event_graph(&other, spec)?.holds(&other.colors()) != base)
}

/// Monte Carlo `Inf_x^ε` for a single box.
pub fn estimate_influence(
    d: usize,
    p: f64,
    spec: &EventSpec,
    eps: f64,
    bx: &BoxIndex,
    trials: usize,
    root_seed: u64,
) -> Result<Estimate> {
    let window = event_window(d, &spec.kind)?;
    check_eps(window.outer() * 2.0, eps)?;
    let grid = box_partition(&window, eps)?;
    let lin = grid.linear(bx).ok_or_else(|| crate::Error::Parameter(format!("box {:?} is outside the grid", bx.0)))?;
    let flips = run_trials(
        trials,
        root_seed,
        |_, s| {
            let c = sample_configuration(&window, p, s)?;
            let base = event_graph(&c, spec)?.holds(&c.colors());
            flip_direct(&c, spec, &grid, lin, s, base)
        },
        |done| done.iter().filter(|&&b| b).count() as f64 / done.len().max(1) as f64,
    )?;
    let k = flips.iter().filter(|&&b| b).count();
    Ok(bernoulli(k, trials).labelled(
        format!("influence {}", spec.kind.label()),
        root_seed,
        Params { d, p, n: None, eps: Some(eps), h: spec.engine.pitch() },
    ))
}

/// Per-trial flipped boxes for one configuration.
fn trial_flips(config: &PointConfiguration, spec: &EventSpec, grid: &EpsilonGrid, trial_seed: u64) -> Result<(bool, Vec<u32>)> {
    match spec.engine {
        Engine::Raster { h } => {
            spec.validate(config)?;
            let base = RasterBase::new(config, &spec.kind, h)?;
            let mut sc = Scratch::default();
            Ok((base.holds, base.flipped_boxes(grid, trial_seed, &mut sc)))
        }
        Engine::Delaunay2d => {
            let holds = event_graph(config, spec)?.holds(&config.colors());
            let mut out = Vec::new();
            for lin in 0..grid.box_count() {
                if flip_direct(config, spec, grid, lin, trial_seed, holds)? {
                    out.push(lin as u32);
                }
            }
            Ok((holds, out))
        }
    }
}

/// Influences of every box of the ε-grid over the event's padded window.
pub fn influence_profile(d: usize, p: f64, spec: &EventSpec, eps: f64, trials: usize, root_seed: u64) -> Result<InfluenceProfile> {
    let window = event_window(d, &spec.kind)?;
    check_eps(window.outer() * 2.0, eps)?;
    let grid = box_partition(&window, eps)?;
    let rows = run_trials(
        trials,
        root_seed,
        |_, s| {
            let c = sample_configuration(&window, p, s)?;
            trial_flips(&c, spec, &grid, s)
        },
        |_| f64::NAN,
    )?;
    let mut counts = vec![0usize; grid.box_count()];
    for (_, f) in &rows {
        for &lin in f {
            counts[lin as usize] += 1;
        }
    }
    let prm = Params { d, p, n: None, eps: Some(eps), h: spec.engine.pitch() };
    let estimates = counts
        .iter()
        .map(|&k| bernoulli(k, trials).labelled(format!("influence {}", spec.kind.label()), root_seed, prm.clone()))
        .collect();
    Ok(InfluenceProfile {
        eps,
        p,
        event: spec.clone(),
        d,
        trials,
        root_seed,
        boxes: grid.iter().collect(),
        estimates,
        trial_sums: rows.iter().map(|r| r.1.len() as f64).collect(),
        base_values: rows.iter().map(|r| r.0).collect(),
        flips: rows.into_iter().map(|r| r.1).collect(),
    })
}

/// Derivative against half the influence sum, at one ε.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InfluenceSumReport {
    pub eps: f64,
    pub derivative: Estimate,
    pub influence_sum: Estimate,
    /// Influence carried by the outermost shell of boxes (truncation proxy).
    pub tail: Estimate,
    /// Per-trial `derivative - sum / 2`.
    pub margin: Estimate,
    pub holds: bool,
}

/// Checks `d/dp P_p[A] >= ½ Σ_x Inf_x^ε[A] - 3 se` with paired trials.
pub fn influence_sum_vs_derivative(
    d: usize,
    p: f64,
    spec: &EventSpec,
    eps: f64,
    dp: f64,
    trials: usize,
    root_seed: u64,
) -> Result<InfluenceSumReport> {
    if !spec.kind.is_increasing() {
        return param("the influence-sum check needs an increasing event");
    }
    let lo = (p - dp).max(0.0);
    let hi = (p + dp).min(1.0);
    if hi <= lo {
        return param("finite-difference step is empty");
    }
    let profile = influence_profile(d, p, spec, eps, trials, root_seed)?;
    let window = event_window(d, &spec.kind)?;
    let ders = run_trials(
        trials,
        root_seed,
        |_, s| {
            let c = sample_configuration(&window, p, s)?;
            let g = event_graph(&c, spec)?;
            let up = g.holds(&c.colors_at(hi)) as u8 as f64;
            let down = g.holds(&c.colors_at(lo)) as u8 as f64;
            Ok((up - down) / (hi - lo))
        },
        |done| mean_se(done).0,
    )?;
    let prm = Params { d, p, n: None, eps: Some(eps), h: spec.engine.pitch() };
    let margins: Vec<f64> = ders.iter().zip(&profile.trial_sums).map(|(a, s)| a - 0.5 * s).collect();
    let margin = Estimate::from_samples(&margins).labelled("derivative - half influence sum", root_seed, prm.clone());
    Ok(InfluenceSumReport {
        eps,
        derivative: Estimate::from_samples(&ders).labelled("finite difference", root_seed, prm),
        influence_sum: profile.sum(),
        tail: profile.outer_shell(),
        holds: margin.mean >= -3.0 * margin.stderr,
        margin,
    })
}

/// "Box `x` holds at least one black point": the closed-form test event.
#[derive(Clone, Debug, PartialEq)]
pub struct BoxHasBlack {
    pub bx: BoxIndex,
}

impl BoxHasBlack {
    pub fn holds(&self, config: &PointConfiguration, grid: &EpsilonGrid) -> bool {
        (0..config.len()).any(|i| config.is_black(i) && grid.index_of(config.point(i)).as_ref() == Some(&self.bx))
    }

    /// `P_p` of the event, influence of its own box, and `d/dp`, truncating
    /// the Poisson count of the box at `max_points`.
    pub fn exact(p: f64, eps: f64, d: usize, max_points: usize) -> (f64, f64, f64) {
        let lambda = eps.powi(d as i32);
        let mut prob = 0.0;
        let mut deriv = 0.0;
        let mut pk = (-lambda).exp();
        for k in 0..=max_points {
            if k > 0 {
                pk *= lambda / k as f64;
            }
            prob += pk * (1.0 - (1.0 - p).powi(k as i32));
            if k > 0 {
                deriv += pk * k as f64 * (1.0 - p).powi(k as i32 - 1);
            }
        }
        (prob, 2.0 * prob * (1.0 - prob), deriv)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::point_process::Window;

    #[test]
    fn local_update_matches_full_reevaluation() {
        let kind = EventKind::OriginToSphere { n: 3.0 };
        let spec = EventSpec::new(kind.clone(), Engine::Raster { h: 0.125 });
        let window = event_window(2, &kind).unwrap();
        let grid = box_partition(&window, 0.5).unwrap();
        let mut checked = 0;
        for s in 0..6 {
            let c = sample_configuration(&window, 0.55, s).unwrap();
            let base = RasterBase::new(&c, &kind, 0.125).unwrap();
            assert_eq!(base.holds, event_graph(&c, &spec).unwrap().holds(&c.colors()));
            let mut sc = Scratch::default();
            let fast = base.flipped_boxes(&grid, s, &mut sc);
            for lin in 0..grid.box_count() {
                let slow = flip_direct(&c, &spec, &grid, lin, s, base.holds).unwrap();
                assert_eq!(slow, fast.contains(&(lin as u32)), "seed {s} box {lin}");
                checked += 1;
            }
        }
        assert!(checked > 1000);
    }

    #[test]
    fn saturated_parameter_has_no_influence() {
        let spec = EventSpec::new(EventKind::OriginToSphere { n: 2.0 }, Engine::Raster { h: 0.25 });
        let prof = influence_profile(2, 1.0, &spec, 1.0, 5, 3).unwrap();
        assert!(prof.estimates.iter().all(|e| e.mean == 0.0));
    }

    #[test]
    fn box_event_oracle_is_consistent() {
        let (prob, inf, der) = BoxHasBlack::exact(0.5, 1.0, 2, 60);
        let lambda_b: f64 = 0.5;
        assert!((prob - (1.0 - (-lambda_b).exp())).abs() < 1e-12);
        assert!((der - (-lambda_b).exp()).abs() < 1e-12);
        assert!((inf - 2.0 * (-lambda_b).exp() * (1.0 - (-lambda_b).exp())).abs() < 1e-12);
        assert!(der >= 0.5 * inf);
    }

    #[test]
    fn box_event_influence_by_resampling() {
        let w = Window::new(2, 1.0, 1.0).unwrap();
        let grid = box_partition(&w, 1.0).unwrap();
        let ev = BoxHasBlack { bx: BoxIndex(vec![0, 0]) };
        let lin = grid.linear(&ev.bx).unwrap();
        let trials = 20000;
        let mut flips = 0;
        for t in 0..trials {
            let s = seed::trial_seed(77, t);
            let c = sample_configuration(&w, 0.5, s).unwrap();
            let other = resample_box(&c, &grid, &ev.bx, fresh_seed(s, lin)).unwrap();
            flips += (ev.holds(&c, &grid) != ev.holds(&other, &grid)) as usize;
        }
        let e = bernoulli(flips, trials);
        let (_, inf, _) = BoxHasBlack::exact(0.5, 1.0, 2, 4);
        assert!(e.within(inf, 4.0), "{} vs {inf}", e.mean);
    }
}

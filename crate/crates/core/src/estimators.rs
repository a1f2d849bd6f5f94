//! Monte Carlo estimators over independent configurations.
//!
//! Trial `t` always uses the configuration seeded by `trial_seed(root, t)`,
//! whatever the thread schedule, and every estimator sharing a root seed sees
//! the same positions and marks. Changing `p` only recolours the points, which
//! is the common-random-numbers coupling used for finite differences.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::connectivity::{event_graph, EventKind, EventSpec, Engine, Side};
use crate::error::{param, Error, Result};
use crate::point_process::{sample_configuration, PointConfiguration, Window};
use crate::seed::trial_seed;
use crate::stats::{mean_se, Estimate, Params};

/// Runs `f(trial, seed)` for every trial, in parallel, keeping trial order.
///
/// The first failing trial aborts the batch; `partial` turns the completed
/// prefix into a mean for the error report.
pub fn run_trials<T: Send>(
    trials: usize,
    root_seed: u64,
    f: impl Fn(usize, u64) -> Result<T> + Sync,
    partial: impl Fn(&[T]) -> f64,
) -> Result<Vec<T>> {
    if trials == 0 {
        return param("at least one trial is needed");
    }
    let results: Vec<Result<T>> = (0..trials).into_par_iter().map(|t| f(t, trial_seed(root_seed, t))).collect();
    let mut ok = Vec::with_capacity(trials);
    for r in results {
        match r {
            Ok(v) => ok.push(v),
            Err(e) => {
                let completed = ok.len();
                return Err(Error::Batch { completed, partial_mean: partial(&ok), source: Box::new(e) });
            }
        }
    }
    Ok(ok)
}

fn bool_mean(xs: &[bool]) -> f64 {
    xs.iter().filter(|&&b| b).count() as f64 / xs.len().max(1) as f64
}

/// Smallest padded window whose inner part holds every radius of the event.
pub fn event_window(d: usize, kind: &EventKind) -> Result<Window> {
    let extent = match kind {
        EventKind::PointToSphere { x, k } => x.iter().fold(*k, |m, c| m.max(c.abs())),
        other => other.extent(0.0),
    };
    Window::padded(d, (extent - 1e-9).ceil().max(1.0))
}

fn params_of(d: usize, p: f64, spec: &EventSpec) -> Params {
    let n = match &spec.kind {
        EventKind::OriginToSphere { n }
        | EventKind::BoxCrossing { n }
        | EventKind::WhiteCrossing { n }
        | EventKind::BoxToSphere { n, .. }
        | EventKind::BallToSide { n, .. } => Some(*n),
        EventKind::PointToSphere { k, .. } => Some(*k),
    };
    Params { d, p, n, eps: None, h: spec.engine.pitch() }
}

/// Bernoulli estimate of `P_p[event]`.
pub fn estimate_event(d: usize, p: f64, spec: &EventSpec, trials: usize, root_seed: u64) -> Result<Estimate> {
    let window = event_window(d, &spec.kind)?;
    let hits = run_trials(
        trials,
        root_seed,
        |_, s| {
            let c = sample_configuration(&window, p, s)?;
            Ok(event_graph(&c, spec)?.holds(&c.colors()))
        },
        bool_mean,
    )?;
    Ok(Estimate::from_bools(&hits).labelled(spec.kind.label(), root_seed, params_of(d, p, spec)))
}

/// Number of points whose colour decides the event, all else fixed.
pub fn pivotal_count(config: &PointConfiguration, spec: &EventSpec) -> Result<usize> {
    let g = event_graph(config, spec)?;
    Ok(pivotal_count_in(&g, &config.colors()))
}

fn pivotal_count_in(g: &crate::connectivity::CellGraph, colors: &[bool]) -> usize {
    let mut colors = colors.to_vec();
    let mut count = 0;
    for v in g.relevant_points() {
        let v = v as usize;
        let keep = colors[v];
        colors[v] = true;
        let with_black = g.holds(&colors);
        colors[v] = false;
        let with_white = g.holds(&colors);
        colors[v] = keep;
        if with_black != with_white {
            count += 1;
        }
    }
    count
}

/// Estimate of `E_p[|Piv|]`.
pub fn estimate_pivotal(d: usize, p: f64, spec: &EventSpec, trials: usize, root_seed: u64) -> Result<Estimate> {
    let window = event_window(d, &spec.kind)?;
    let counts = run_trials(
        trials,
        root_seed,
        |_, s| {
            let c = sample_configuration(&window, p, s)?;
            Ok(pivotal_count(&c, spec)? as f64)
        },
        |done| mean_se(done).0,
    )?;
    Ok(Estimate::from_samples(&counts).labelled(format!("pivotal {}", spec.kind.label()), root_seed, params_of(d, p, spec)))
}

/// Central finite difference against the expected pivotal count.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RussoReport {
    pub p: f64,
    pub dp: f64,
    /// `(1_A(p+dp) - 1_A(p-dp)) / (2 dp)` per trial.
    pub derivative: Estimate,
    pub pivotal: Estimate,
    /// Per-trial paired difference of the two.
    pub difference: Estimate,
    pub holds: bool,
}

/// Checks `d/dp P_p[A] = E_p[|Piv_A|]` with common random numbers.
pub fn russo_check(d: usize, p: f64, spec: &EventSpec, dp: f64, trials: usize, root_seed: u64) -> Result<RussoReport> {
    if !(dp > 0.0 && p - dp >= 0.0 && p + dp <= 1.0) {
        return param("finite-difference step leaves [0, 1]");
    }
    let window = event_window(d, &spec.kind)?;
    let rows = run_trials(
        trials,
        root_seed,
        |_, s| {
            let c = sample_configuration(&window, p, s)?;
            let g = event_graph(&c, spec)?;
            let up = g.holds(&c.colors_at(p + dp)) as u8 as f64;
            let down = g.holds(&c.colors_at(p - dp)) as u8 as f64;
            let piv = pivotal_count_in(&g, &c.colors()) as f64;
            Ok(((up - down) / (2.0 * dp), piv))
        },
        |done| done.iter().map(|r| r.1).sum::<f64>() / done.len().max(1) as f64,
    )?;
    let prm = params_of(d, p, spec);
    let der: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let piv: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let diff: Vec<f64> = rows.iter().map(|r| r.0 - r.1).collect();
    let difference = Estimate::from_samples(&diff).labelled("derivative - pivotal", root_seed, prm.clone());
    Ok(RussoReport {
        p,
        dp,
        derivative: Estimate::from_samples(&der).labelled("finite difference", root_seed, prm.clone()),
        pivotal: Estimate::from_samples(&piv).labelled("pivotal", root_seed, prm),
        holds: difference.mean.abs() <= 3.0 * difference.stderr,
        difference,
    })
}

/// Least-squares line through `(n, log θ_n)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    /// Slope of `log θ_n` in `n`.
    pub slope: f64,
    pub slope_stderr: f64,
    /// `c_p` in `θ_n ≈ exp(-c_p n)`, i.e. `-slope`.
    pub rate: f64,
    pub intercept: f64,
    pub n_min: f64,
    pub n_max: f64,
    /// Weighted residual sum of squares per degree of freedom.
    pub residual: f64,
    /// Radii kept by the log-safety filter.
    pub used: Vec<f64>,
}

/// Fits `log mean = intercept + slope · n` over estimates with mean above
/// `5 / trials`.
///
/// Points with a positive standard error are weighted by `(mean / stderr)^2`
/// and the slope error is propagated from them; exact inputs fall back to
/// ordinary least squares with a residual-based error.
pub fn fit_decay(points: &[(f64, Estimate)]) -> Result<DecayFit> {
    let usable: Vec<&(f64, Estimate)> = points
        .iter()
        .filter(|(_, e)| e.mean > 5.0 / e.trials.max(1) as f64 && e.mean > 0.0)
        .collect();
    if usable.len() < 4 {
        return Err(Error::Fit { usable: usable.iter().map(|u| u.0).collect() });
    }
    let xs: Vec<f64> = usable.iter().map(|u| u.0).collect();
    let ys: Vec<f64> = usable.iter().map(|u| u.1.mean.ln()).collect();
    let weighted = usable.iter().all(|u| u.1.stderr > 0.0);
    let ws: Vec<f64> =
        usable.iter().map(|u| if weighted { (u.1.mean / u.1.stderr).powi(2) } else { 1.0 }).collect();
    let sw: f64 = ws.iter().sum();
    let xm = xs.iter().zip(&ws).map(|(x, w)| x * w).sum::<f64>() / sw;
    let ym = ys.iter().zip(&ws).map(|(y, w)| y * w).sum::<f64>() / sw;
    let sxx: f64 = xs.iter().zip(&ws).map(|(x, w)| w * (x - xm).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).zip(&ws).map(|((x, y), w)| w * (x - xm) * (y - ym)).sum();
    let slope = sxy / sxx;
    let intercept = ym - slope * xm;
    let dof = (xs.len() - 2) as f64;
    let rss: f64 = xs.iter().zip(&ys).zip(&ws).map(|((x, y), w)| w * (y - intercept - slope * x).powi(2)).sum();
    let slope_stderr = if weighted { (1.0 / sxx).sqrt() } else { (rss / dof / sxx).sqrt() };
    Ok(DecayFit {
        slope,
        slope_stderr,
        rate: -slope,
        intercept,
        n_min: xs.iter().cloned().fold(f64::INFINITY, f64::min),
        n_max: xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        residual: rss / dof,
        used: xs,
    })
}

/// One-sided radii reached by the origin's cluster, for a grid of `p` values
/// sharing the same configurations.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ThetaTable {
    pub d: usize,
    pub engine: Engine,
    pub ps: Vec<f64>,
    pub dp: f64,
    pub ns: Vec<f64>,
    pub root_seed: u64,
    /// `reach[t][3 i + j]` for `p_i + (j - 1) dp`; negative when the origin is
    /// not in the cluster colour.
    reach: Vec<Vec<f64>>,
}

impl ThetaTable {
    /// Samples `trials` configurations once and reads every `θ_n(p)` off them.
    pub fn measure(
        d: usize,
        engine: Engine,
        ps: &[f64],
        dp: f64,
        ns: &[f64],
        trials: usize,
        root_seed: u64,
    ) -> Result<Self> {
        if ps.iter().any(|&p| p - dp < 0.0 || p + dp > 1.0) || dp < 0.0 {
            return param("p grid with its finite-difference step must stay inside [0, 1]");
        }
        let n_max = ns.iter().cloned().fold(0.0, f64::max);
        if ns.is_empty() || ns.iter().any(|&n| n <= 0.0) {
            return param("radii must be positive");
        }
        let kind = EventKind::OriginToSphere { n: n_max };
        let window = event_window(d, &kind)?;
        let spec = EventSpec::new(kind, engine);
        let reach = run_trials(
            trials,
            root_seed,
            |_, s| {
                let c = sample_configuration(&window, 0.5, s)?;
                let g = event_graph(&c, &spec)?;
                let mut row = Vec::with_capacity(3 * ps.len());
                for &p in ps {
                    for q in [p - dp, p, p + dp] {
                        row.push(g.reach(&c.colors_at(q)).unwrap_or(-1.0));
                    }
                }
                Ok(row)
            },
            |_| f64::NAN,
        )?;
        Ok(ThetaTable { d, engine, ps: ps.to_vec(), dp, ns: ns.to_vec(), root_seed, reach })
    }

    pub fn trials(&self) -> usize {
        self.reach.len()
    }

    /// Per-trial indicator of `0 <-> S_n` at `p_i + shift · dp`, `shift ∈ {-1, 0, 1}`.
    pub fn indicators(&self, i: usize, shift: i32, n: f64) -> Vec<f64> {
        let col = 3 * i + (shift + 1) as usize;
        let thr = n - self.engine.slack(self.d);
        self.reach.iter().map(|r| (r[col] >= thr) as u8 as f64).collect()
    }

    fn params(&self, i: usize, n: f64) -> Params {
        Params { d: self.d, p: self.ps[i], n: Some(n), eps: None, h: self.engine.pitch() }
    }

    pub fn theta(&self, i: usize, n: f64) -> Estimate {
        Estimate::from_samples(&self.indicators(i, 0, n)).labelled(
            format!("origin_to_sphere({n})"),
            self.root_seed,
            self.params(i, n),
        )
    }

    /// Per-trial central differences `(θ(p+dp) - θ(p-dp)) / (2 dp)`.
    pub fn derivative_samples(&self, i: usize, n: f64) -> Vec<f64> {
        let up = self.indicators(i, 1, n);
        let down = self.indicators(i, -1, n);
        up.iter().zip(&down).map(|(u, d)| (u - d) / (2.0 * self.dp)).collect()
    }

    pub fn derivative(&self, i: usize, n: f64) -> Estimate {
        Estimate::from_samples(&self.derivative_samples(i, n)).labelled(
            format!("d/dp origin_to_sphere({n})"),
            self.root_seed,
            self.params(i, n),
        )
    }
}

/// Result of the `p_c` bisection.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PcInterval {
    pub d: usize,
    pub lo: f64,
    pub hi: f64,
    pub tolerance: f64,
    /// `(p, statistic)` at every evaluated point; the statistic is positive
    /// on the supercritical side.
    pub steps: Vec<(f64, f64)>,
    pub root_seed: u64,
}

impl PcInterval {
    pub fn contains(&self, p: f64) -> bool {
        self.lo <= p && p <= self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

/// Bisection parameters for [`estimate_pc`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PcSchedule {
    pub lo: f64,
    pub hi: f64,
    /// Box sizes (d = 2) or radii (d = 3).
    pub sizes: Vec<f64>,
    pub trials: usize,
    pub tolerance: f64,
    pub root_seed: u64,
}

impl PcSchedule {
    pub fn planar() -> Self {
        PcSchedule { lo: 0.3, hi: 0.7, sizes: vec![8.0, 16.0], trials: 2000, tolerance: 0.02, root_seed: 1 }
    }
}

/// Signed finite-size statistic: positive means "looks supercritical".
///
/// In d = 2 this is the mean crossing probability over the sizes minus 1/2.
/// In d = 3 it is the change of the log-log slope of `θ_n` between
/// consecutive radius pairs: it flattens above `p_c` and steepens below.
pub fn pc_statistic(d: usize, engine: Engine, p: f64, sched: &PcSchedule) -> Result<f64> {
    match d {
        2 => {
            let mut acc = 0.0;
            for &n in &sched.sizes {
                let spec = EventSpec::new(EventKind::BoxCrossing { n }, engine);
                acc += estimate_event(2, p, &spec, sched.trials, sched.root_seed)?.mean;
            }
            Ok(acc / sched.sizes.len() as f64 - 0.5)
        }
        3 => {
            if sched.sizes.len() < 3 {
                return param("d = 3 needs three radii");
            }
            let t = ThetaTable::measure(3, engine, &[p], 0.0, &sched.sizes, sched.trials, sched.root_seed)?;
            let th: Vec<f64> = sched.sizes.iter().map(|&n| t.theta(0, n).mean.max(0.5 / sched.trials as f64)).collect();
            let ns = &sched.sizes;
            let k = ns.len();
            let s1 = (th[k - 2] / th[k - 3]).ln() / (ns[k - 2] / ns[k - 3]).ln();
            let s2 = (th[k - 1] / th[k - 2]).ln() / (ns[k - 1] / ns[k - 2]).ln();
            Ok(s2 - s1)
        }
        _ => param(format!("p_c estimation supports d = 2 and d = 3, got {d}")),
    }
}

/// Bisects on `p` until the bracket is no wider than the tolerance.
pub fn estimate_pc(d: usize, engine: Engine, sched: &PcSchedule) -> Result<PcInterval> {
    if !(0.0 <= sched.lo && sched.lo < sched.hi && sched.hi <= 1.0) {
        return param("p_c bracket must satisfy 0 <= lo < hi <= 1");
    }
    let mut steps = Vec::new();
    let f_lo = pc_statistic(d, engine, sched.lo, sched)?;
    let f_hi = pc_statistic(d, engine, sched.hi, sched)?;
    steps.push((sched.lo, f_lo));
    steps.push((sched.hi, f_hi));
    if !(f_lo < 0.0 && f_hi > 0.0) {
        return param(format!(
            "initial interval [{}, {}] does not bracket p_c (statistics {f_lo:.4}, {f_hi:.4})",
            sched.lo, sched.hi
        ));
    }
    let (mut lo, mut hi) = (sched.lo, sched.hi);
    while hi - lo > sched.tolerance {
        let mid = 0.5 * (lo + hi);
        let f = pc_statistic(d, engine, mid, sched)?;
        steps.push((mid, f));
        if f > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(PcInterval { d, lo, hi, tolerance: sched.tolerance, steps, root_seed: sched.root_seed })
}

/// Harris-FKG check on one pair of events.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FkgReport {
    pub a: Estimate,
    pub b: Estimate,
    pub both: Estimate,
    /// `P[A ∩ B] - P[A] P[B]` with a delta-method error.
    pub covariance: Estimate,
    /// Whether the events move in the same direction with `p`.
    pub same_direction: bool,
    pub holds: bool,
}

/// Checks positive (or, for opposite monotonicity, negative) association.
pub fn fkg_check(d: usize, p: f64, a: &EventSpec, b: &EventSpec, trials: usize, root_seed: u64) -> Result<FkgReport> {
    let wa = event_window(d, &a.kind)?;
    let wb = event_window(d, &b.kind)?;
    let window = if wa.half_width >= wb.half_width { wa } else { wb };
    let rows = run_trials(
        trials,
        root_seed,
        |_, s| {
            let c = sample_configuration(&window, p, s)?;
            let colors = c.colors();
            Ok((event_graph(&c, a)?.holds(&colors), event_graph(&c, b)?.holds(&colors)))
        },
        |done| bool_mean(&done.iter().map(|r| r.0 && r.1).collect::<Vec<_>>()),
    )?;
    let xa: Vec<bool> = rows.iter().map(|r| r.0).collect();
    let xb: Vec<bool> = rows.iter().map(|r| r.1).collect();
    let xab: Vec<bool> = rows.iter().map(|r| r.0 && r.1).collect();
    let (ma, mb) = (bool_mean(&xa), bool_mean(&xb));
    let psi: Vec<f64> = rows
        .iter()
        .map(|r| (r.0 as u8 as f64 - ma) * (r.1 as u8 as f64 - mb))
        .collect();
    let mut covariance = Estimate::from_samples(&psi);
    covariance.mean = bool_mean(&xab) - ma * mb;
    let same_direction = a.kind.is_increasing() == b.kind.is_increasing();
    let tol = 3.0 * covariance.stderr;
    let holds = if same_direction { covariance.mean >= -tol } else { covariance.mean <= tol };
    let prm = Params { d, p, n: None, eps: None, h: a.engine.pitch() };
    Ok(FkgReport {
        a: Estimate::from_bools(&xa).labelled(a.kind.label(), root_seed, prm.clone()),
        b: Estimate::from_bools(&xb).labelled(b.kind.label(), root_seed, prm.clone()),
        both: Estimate::from_bools(&xab).labelled("both", root_seed, prm.clone()),
        covariance: covariance.labelled("covariance", root_seed, prm),
        same_direction,
        holds,
    })
}

/// Square-root trick on the four sides of `Λ_n`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SqrtTrickReport {
    pub sides: Vec<Estimate>,
    pub union: Estimate,
    /// `1 - (1 - P[union])^{1/4}`.
    pub bound: f64,
    pub bound_stderr: f64,
    pub holds: bool,
}

/// Checks `max_side P[B_k <-> side in Λ_n] >= 1 - (1 - P[union])^{1/4}`.
pub fn sqrt_trick_check(p: f64, k: f64, n: f64, engine: Engine, trials: usize, root_seed: u64) -> Result<SqrtTrickReport> {
    if !(0.0 < k && k < n) {
        return param("the square-root trick needs 0 < k < n");
    }
    let kinds: Vec<EventKind> = Side::ALL.iter().map(|&side| EventKind::BallToSide { k, n, side }).collect();
    let window = event_window(2, &kinds[0])?;
    let rows = run_trials(
        trials,
        root_seed,
        |_, s| {
            let c = sample_configuration(&window, p, s)?;
            let colors = c.colors();
            let mut hit = [false; 4];
            for (h, kind) in hit.iter_mut().zip(&kinds) {
                *h = event_graph(&c, &EventSpec::new(kind.clone(), engine))?.holds(&colors);
            }
            Ok(hit)
        },
        |done| bool_mean(&done.iter().map(|r| r.iter().any(|&x| x)).collect::<Vec<_>>()),
    )?;
    let prm = Params { d: 2, p, n: Some(n), eps: None, h: engine.pitch() };
    let sides: Vec<Estimate> = (0..4)
        .map(|i| {
            let xs: Vec<bool> = rows.iter().map(|r| r[i]).collect();
            Estimate::from_bools(&xs).labelled(kinds[i].label(), root_seed, prm.clone())
        })
        .collect();
    let u: Vec<bool> = rows.iter().map(|r| r.iter().any(|&x| x)).collect();
    let union = Estimate::from_bools(&u).labelled(format!("ball_to_any_side({k},{n})"), root_seed, prm);
    let miss = (1.0 - union.mean).max(0.0);
    let bound = 1.0 - miss.powf(0.25);
    let slope = if miss > 0.0 { 0.25 * miss.powf(-0.75) } else { 0.0 };
    let bound_stderr = slope * union.stderr;
    let best = sides.iter().max_by(|a, b| a.mean.total_cmp(&b.mean)).unwrap();
    let holds = best.mean >= bound - 3.0 * (best.stderr + bound_stderr);
    Ok(SqrtTrickReport { sides, union, bound, bound_stderr, holds })
}

/// Crossing probability at pitch `h` and `h / 2` on the same configurations.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PitchReport {
    pub coarse: Estimate,
    pub fine: Estimate,
    /// Paired difference fine minus coarse.
    pub shift: Estimate,
    /// `|shift| < stderr(coarse)`.
    pub ok: bool,
}

/// Convergence sweep for a raster pitch.
pub fn validate_pitch(d: usize, p: f64, kind: &EventKind, h: f64, trials: usize, root_seed: u64) -> Result<PitchReport> {
    let window = event_window(d, kind)?;
    let coarse_spec = EventSpec::new(kind.clone(), Engine::Raster { h });
    let fine_spec = EventSpec::new(kind.clone(), Engine::Raster { h: h / 2.0 });
    let rows = run_trials(
        trials,
        root_seed,
        |_, s| {
            let c = sample_configuration(&window, p, s)?;
            let colors = c.colors();
            Ok((event_graph(&c, &coarse_spec)?.holds(&colors), event_graph(&c, &fine_spec)?.holds(&colors)))
        },
        |_| f64::NAN,
    )?;
    let xc: Vec<bool> = rows.iter().map(|r| r.0).collect();
    let xf: Vec<bool> = rows.iter().map(|r| r.1).collect();
    let diff: Vec<f64> = rows.iter().map(|r| r.1 as u8 as f64 - r.0 as u8 as f64).collect();
    let coarse = Estimate::from_bools(&xc).labelled(kind.label(), root_seed, params_of(d, p, &coarse_spec));
    let fine = Estimate::from_bools(&xf).labelled(kind.label(), root_seed, params_of(d, p, &fine_spec));
    let shift = Estimate::from_samples(&diff).labelled("pitch shift", root_seed, params_of(d, p, &fine_spec));
    let ok = shift.mean.abs() < coarse.stderr;
    Ok(PitchReport { coarse, fine, shift, ok })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::point_process::Color;

    fn est(mean: f64) -> Estimate {
        Estimate { mean, stderr: 0.0, trials: 1_000_000, root_seed: 0, event: String::new(), params: Params::default() }
    }

    #[test]
    fn exact_exponential_gives_its_rate() {
        let pts: Vec<(f64, Estimate)> = (1..=10).map(|n| (n as f64, est((-0.3 * n as f64).exp()))).collect();
        let fit = fit_decay(&pts).unwrap();
        assert!((fit.rate - 0.3).abs() < 1e-12);
        let flat: Vec<(f64, Estimate)> = (1..=6).map(|n| (n as f64, est(0.4))).collect();
        assert!(fit_decay(&flat).unwrap().rate.abs() < 1e-12);
    }

    #[test]
    fn too_few_points_report_the_usable_ones() {
        let pts: Vec<(f64, Estimate)> = vec![(1.0, est(0.5)), (2.0, est(0.1)), (3.0, est(1e-9)), (4.0, est(0.0))];
        match fit_decay(&pts) {
            Err(Error::Fit { usable }) => assert_eq!(usable, vec![1.0, 2.0]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn saturated_parameter_is_certain() {
        let spec = EventSpec::new(EventKind::OriginToSphere { n: 3.0 }, Engine::Delaunay2d);
        let e = estimate_event(2, 1.0, &spec, 20, 5).unwrap();
        assert_eq!((e.mean, e.stderr), (1.0, 0.0));
    }

    #[test]
    fn lone_point_is_pivotal() {
        let w = Window::new(2, 4.0, 3.0).unwrap();
        let c = PointConfiguration::with_colors(w, &[(vec![0.5, 0.5], Color::Black)]).unwrap();
        for e in [Engine::Delaunay2d, Engine::Raster { h: 0.25 }] {
            let spec = EventSpec::new(EventKind::OriginToSphere { n: 4.0 }, e);
            assert_eq!(pivotal_count(&c, &spec).unwrap(), 1);
        }
    }

    #[test]
    fn estimates_are_schedule_independent() {
        let spec = EventSpec::new(EventKind::BoxCrossing { n: 3.0 }, Engine::Delaunay2d);
        let a = estimate_event(2, 0.5, &spec, 40, 9).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let b = pool.install(|| estimate_event(2, 0.5, &spec, 40, 9).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn identical_events_are_positively_associated() {
        let spec = EventSpec::new(EventKind::BoxCrossing { n: 3.0 }, Engine::Delaunay2d);
        let r = fkg_check(2, 0.5, &spec, &spec, 200, 3).unwrap();
        assert!(r.covariance.mean >= 0.0 && r.holds);
    }
}

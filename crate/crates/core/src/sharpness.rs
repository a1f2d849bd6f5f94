//! The differential inequality `θ'_n >= c (n / S_n) θ_n` on measured data, and
//! the two-regime lemma on integrated sequence families.
//!
//! Conventions: `S_n = Σ_{k<n} θ_k` with `θ_0 = 1`, and likewise
//! `Σ_n = Σ_{k<n} f_k` for families. A "negative rate" below the threshold
//! means a negative slope of `log f_n` in `n`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::estimators::{fit_decay, ThetaTable};
use crate::stats::{mean_se, Estimate};

/// `(a, b)` of the three boundary sets used by the dichotomy check.
pub const CANONICAL_BOUNDARIES: [(f64, f64); 3] = [(0.5, 0.2), (0.3, 0.4), (0.6, 0.3)];

/// One `(p, n)` cell of the inequality check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlemPoint {
    pub p: f64,
    pub n: usize,
    pub theta: f64,
    pub derivative: f64,
    pub s_n: f64,
    /// `θ'_n S_n / (n θ_n)`.
    pub ratio: f64,
    pub stderr: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MlemReport {
    pub points: Vec<MlemPoint>,
    /// `(p, n)` cells dropped by the log-safety filter.
    pub excluded: Vec<(f64, usize)>,
    /// Smallest ratio over the kept cells.
    pub c_hat: f64,
    pub c_hat_stderr: f64,
    pub argmin: (f64, usize),
    pub holds: bool,
}

fn summarise(points: Vec<MlemPoint>, excluded: Vec<(f64, usize)>) -> Result<MlemReport> {
    let best = points
        .iter()
        .min_by(|a, b| a.ratio.total_cmp(&b.ratio))
        .ok_or_else(|| Error::Fit { usable: vec![] })?
        .clone();
    Ok(MlemReport {
        c_hat: best.ratio,
        c_hat_stderr: best.stderr,
        argmin: (best.p, best.n),
        holds: best.ratio > 3.0 * best.stderr,
        points,
        excluded,
    })
}

/// Ratio table from a measured θ-table with common random numbers.
///
/// Cells with `θ_n <= 5 / trials` are excluded. The standard error of each
/// ratio comes from linearising it in the three per-trial means
/// (derivative, `S_n`, `θ_n`), so their covariance is accounted for.
pub fn mlem_check(table: &ThetaTable, p_range: (f64, f64), n_max: usize) -> Result<MlemReport> {
    if n_max == 0 {
        return param("n_max must be at least 1");
    }
    let trials = table.trials();
    let floor = 5.0 / trials as f64;
    let mut points = Vec::new();
    let mut excluded = Vec::new();
    for (i, &p) in table.ps.iter().enumerate() {
        if p < p_range.0 - 1e-12 || p > p_range.1 + 1e-12 {
            continue;
        }
        let mut s_rows = vec![1.0; trials];
        for n in 1..=n_max {
            let th = table.indicators(i, 0, n as f64);
            let der = table.derivative_samples(i, n as f64);
            let (tm, _) = mean_se(&th);
            let (dm, _) = mean_se(&der);
            let (sm, _) = mean_se(&s_rows);
            if tm > floor && dm > 0.0 {
                let ratio = dm * sm / (n as f64 * tm);
                let psi: Vec<f64> = (0..trials)
                    .map(|t| ratio * ((der[t] - dm) / dm + (s_rows[t] - sm) / sm - (th[t] - tm) / tm))
                    .collect();
                points.push(MlemPoint { p, n, theta: tm, derivative: dm, s_n: sm, ratio, stderr: mean_se(&psi).1 });
            } else {
                excluded.push((p, n));
            }
            for t in 0..trials {
                s_rows[t] += th[t];
            }
        }
    }
    summarise(points, excluded)
}

/// Ratio table for a closed-form `θ_n(p)` with central differences of step `dp`.
pub fn mlem_closed_form(theta: impl Fn(f64, usize) -> f64, ps: &[f64], n_max: usize, dp: f64) -> Result<MlemReport> {
    let mut points = Vec::new();
    for &p in ps {
        let mut s = 1.0;
        for n in 1..=n_max {
            let t = theta(p, n);
            let der = (theta(p + dp, n) - theta(p - dp, n)) / (2.0 * dp);
            points.push(MlemPoint { p, n, theta: t, derivative: der, s_n: s, ratio: der * s / (n as f64 * t), stderr: 0.0 });
            s += t;
        }
    }
    summarise(points, vec![])
}

/// Integration settings for the saturated system `f'_n = slack (n / Σ_n) f_n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LemmaSystem {
    pub cap: f64,
    pub alpha0: f64,
    pub alpha1: f64,
    /// `f_n(α_0)` for `n = 0..=N`; `f_0` stays constant.
    pub boundary: Vec<f64>,
    pub slack: f64,
    /// Integration step.
    pub step: f64,
    /// Output every this many steps.
    pub output_every: usize,
}

impl LemmaSystem {
    /// Unit cap on `[0, 1]`, step `1e-4`, output pitch `0.01`.
    pub fn unit(boundary: Vec<f64>) -> Self {
        LemmaSystem { cap: 1.0, alpha0: 0.0, alpha1: 1.0, boundary, slack: 1.0, step: 1e-4, output_every: 100 }
    }

    /// Cap 1 on `[0, 3]` with [`LemmaSystem::exponential_boundary`] values.
    pub fn canonical(n_max: usize, a: f64, b: f64) -> Self {
        LemmaSystem { alpha1: 3.0, step: 1e-4, ..Self::unit(Self::exponential_boundary(n_max, a, b)) }
    }

    /// `f_0 = 1` and `f_n(α_0) = a e^{-b n}` for `1 <= n <= N`.
    pub fn exponential_boundary(n_max: usize, a: f64, b: f64) -> Vec<f64> {
        (0..=n_max).map(|n| if n == 0 { 1.0 } else { a * (-b * n as f64).exp() }).collect()
    }
}

/// `f_n` on a parameter grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequenceFamily {
    pub alpha0: f64,
    pub alpha1: f64,
    pub cap: f64,
    pub grid: Vec<f64>,
    /// `values[n][j] = f_n(grid[j])` for `n = 0..=N`.
    pub values: Vec<Vec<f64>>,
}

impl SequenceFamily {
    pub fn new(alpha0: f64, alpha1: f64, cap: f64, grid: Vec<f64>, values: Vec<Vec<f64>>) -> Result<Self> {
        if values.iter().any(|row| row.len() != grid.len()) {
            return param("every row needs one value per grid point");
        }
        if grid.windows(2).any(|w| w[1] <= w[0]) {
            return param("grid must be increasing");
        }
        if values.iter().flatten().any(|&v| !(0.0..=cap * (1.0 + 1e-12)).contains(&v)) {
            return param("values must lie in [0, M]");
        }
        Ok(SequenceFamily { alpha0, alpha1, cap, grid, values })
    }

    pub fn n_max(&self) -> usize {
        self.values.len() - 1
    }

    /// `Σ_n(grid[j]) = Σ_{k<n} f_k`.
    pub fn sigma(&self, n: usize, j: usize) -> f64 {
        self.values[..n].iter().map(|row| row[j]).sum()
    }

    /// Largest `f_n(β_{j+1}) - f_n(β_j)` violation of monotonicity (0 when nondecreasing).
    pub fn monotonicity_defect(&self) -> f64 {
        self.values
            .iter()
            .flat_map(|row| row.windows(2).map(|w| (w[0] - w[1]).max(0.0)))
            .fold(0.0, f64::max)
    }

    /// Largest relative shortfall of `f'_n >= (n / Σ_n) f_n` at interior grid
    /// points (central differences), ignoring capped entries.
    pub fn hypothesis_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for n in 1..=self.n_max() {
            for j in 1..self.grid.len() - 1 {
                let f = self.values[n][j];
                if self.values[n][j + 1] >= self.cap {
                    continue;
                }
                let der = (self.values[n][j + 1] - self.values[n][j - 1]) / (self.grid[j + 1] - self.grid[j - 1]);
                let need = n as f64 / self.sigma(n, j) * f;
                if need > 0.0 {
                    worst = worst.max((need - der) / need);
                }
            }
        }
        worst
    }

    /// CSV rows `beta,n,f`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["beta", "n", "f"])?;
        for (n, row) in self.values.iter().enumerate() {
            for (b, v) in self.grid.iter().zip(row) {
                w.write_record([b.to_string(), n.to_string(), v.to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// `θ_n / c` read off a measured table, `n = 0..=n_max`, on the table's `p` grid.
    pub fn from_theta_table(table: &ThetaTable, c: f64, n_max: usize) -> Result<Self> {
        if !(c > 0.0) {
            return param("rescaling constant must be positive");
        }
        let values: Vec<Vec<f64>> = (0..=n_max)
            .map(|n| {
                (0..table.ps.len())
                    .map(|i| if n == 0 { 1.0 / c } else { table.theta(i, n as f64).mean / c })
                    .collect()
            })
            .collect();
        let cap = values.iter().flatten().cloned().fold(1.0 / c, f64::max);
        let lo = table.ps[0];
        let hi = *table.ps.last().unwrap();
        SequenceFamily::new(lo, hi, cap, table.ps.clone(), values)
    }
}

fn rhs(f: &[f64], slack: f64, cap: f64, out: &mut [f64]) {
    out[0] = 0.0;
    let mut sigma = f[0];
    for n in 1..f.len() {
        out[n] = if f[n] >= cap { 0.0 } else { slack * n as f64 / sigma * f[n] };
        sigma += f[n];
    }
}

/// Classical fourth-order Runge–Kutta with clipping at `M` after every step.
pub fn integrate_lemma_system(sys: &LemmaSystem) -> Result<SequenceFamily> {
    let m = sys.cap;
    if sys.boundary.len() < 2 {
        return param("need boundary values for n = 0 and at least one n >= 1");
    }
    if sys.boundary.iter().any(|&b| !(b > 0.0 && b <= m)) {
        return param("boundary values must lie in (0, M]");
    }
    if !(sys.slack >= 1.0) {
        return param("slack multiplier must be at least 1");
    }
    if !(sys.alpha1 > sys.alpha0) || !(sys.step > 0.0) || sys.output_every == 0 {
        return param("need α_0 < α_1, a positive step and a positive output stride");
    }
    let steps = ((sys.alpha1 - sys.alpha0) / sys.step).round() as usize;
    if ((sys.alpha1 - sys.alpha0) / sys.step - steps as f64).abs() > 1e-6 {
        return param("step must divide the parameter interval");
    }
    let k = sys.boundary.len();
    let h = sys.step;
    let mut f = sys.boundary.clone();
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; k], vec![0.0; k], vec![0.0; k], vec![0.0; k]);
    let mut tmp = vec![0.0; k];
    let mut grid = vec![sys.alpha0];
    let mut values: Vec<Vec<f64>> = f.iter().map(|&v| vec![v]).collect();
    for s in 1..=steps {
        rhs(&f, sys.slack, m, &mut k1);
        for i in 0..k {
            tmp[i] = (f[i] + 0.5 * h * k1[i]).min(m);
        }
        rhs(&tmp, sys.slack, m, &mut k2);
        for i in 0..k {
            tmp[i] = (f[i] + 0.5 * h * k2[i]).min(m);
        }
        rhs(&tmp, sys.slack, m, &mut k3);
        for i in 0..k {
            tmp[i] = (f[i] + h * k3[i]).min(m);
        }
        rhs(&tmp, sys.slack, m, &mut k4);
        for i in 0..k {
            let next = f[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            if next > m * 1.01 {
                return Err(Error::Step(format!(
                    "f_{i} overshoots the cap by {:.2}% at β = {:.6}; refine the step",
                    100.0 * (next / m - 1.0),
                    sys.alpha0 + s as f64 * h
                )));
            }
            f[i] = next.min(m);
        }
        if s % sys.output_every == 0 || s == steps {
            grid.push(sys.alpha0 + s as f64 * h);
            for i in 0..k {
                values[i].push(f[i]);
            }
        }
    }
    if grid.len() >= 2 && (grid[grid.len() - 1] - grid[grid.len() - 2]).abs() < 1e-15 {
        grid.pop();
        values.iter_mut().for_each(|r| {
            r.pop();
        });
    }
    SequenceFamily::new(sys.alpha0, sys.alpha1, m, grid, values)
}

/// Halves the step until two successive families differ by less than `tol`
/// (relative, on the common output grid).
pub fn integrate_converged(sys: &LemmaSystem, tol: f64, max_halvings: usize) -> Result<(SequenceFamily, f64)> {
    let mut cur = sys.clone();
    let mut prev = integrate_lemma_system(&cur)?;
    for _ in 0..max_halvings {
        cur.step /= 2.0;
        cur.output_every *= 2;
        let next = integrate_lemma_system(&cur)?;
        let diff = relative_gap(&prev, &next);
        if diff < tol {
            return Ok((next, diff));
        }
        prev = next;
    }
    Err(Error::Step(format!("no self-convergence below {tol} after {max_halvings} halvings")))
}

/// Largest relative difference between two families on the same grid.
pub fn relative_gap(a: &SequenceFamily, b: &SequenceFamily) -> f64 {
    a.values
        .iter()
        .zip(&b.values)
        .flat_map(|(x, y)| x.iter().zip(y).map(|(u, v)| (u - v).abs() / u.abs().max(v.abs()).max(1e-300)))
        .fold(0.0, f64::max)
}

/// Finite-N location of `β_1 = inf{β : limsup log Σ_n(β) / log n >= 1}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Beta1 {
    pub beta1: f64,
    /// The proxy never reached the threshold; `beta1` is then `α_1`.
    pub unreached: bool,
    /// `(β, max_{N/2 <= n <= N} log Σ_n / log n)` per grid point.
    pub proxies: Vec<(f64, f64)>,
    pub tolerance: f64,
    pub n_max: usize,
}

/// Smallest grid `β` whose tail-max proxy reaches `1 - tolerance`.
pub fn beta1_estimate(family: &SequenceFamily, tolerance: f64) -> Result<Beta1> {
    let nn = family.n_max();
    if nn < 4 {
        return param("need at least four terms");
    }
    let proxies: Vec<(f64, f64)> = family
        .grid
        .iter()
        .enumerate()
        .map(|(j, &b)| {
            let mut sigma = family.sigma(nn / 2, j);
            let mut best = f64::NEG_INFINITY;
            for n in nn / 2..=nn {
                if n >= 2 {
                    best = best.max(sigma.ln() / (n as f64).ln());
                }
                sigma += family.values[n][j];
            }
            (b, best)
        })
        .collect();
    let hit = proxies.iter().find(|(_, v)| *v >= 1.0 - tolerance);
    Ok(Beta1 {
        beta1: hit.map_or(family.alpha1, |h| h.0),
        unreached: hit.is_none(),
        proxies,
        tolerance,
        n_max: nn,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DichotomyPoint {
    pub beta: f64,
    /// Below the threshold: fitted slope of `log f_n`; above: `f_N(β)`.
    pub value: f64,
    pub required: f64,
    pub ok: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DichotomyReport {
    pub beta1: f64,
    pub margin: f64,
    pub tolerance: f64,
    pub subcritical: Vec<DichotomyPoint>,
    pub supercritical: Vec<DichotomyPoint>,
    pub holds: bool,
}

/// Below `β_1 - margin` every `n ↦ f_n(β)` decays; above `β_1 + margin`,
/// `f_N(β) >= β - β_1 - tolerance`.
pub fn verify_lemma_dichotomy(family: &SequenceFamily, beta1: f64, margin: f64, tolerance: f64) -> Result<DichotomyReport> {
    let g = &family.grid;
    if !(beta1 >= g[0] && beta1 <= *g.last().unwrap()) {
        return param(format!("β_1 = {beta1} lies outside the grid"));
    }
    let below: Vec<usize> = (0..g.len()).filter(|&j| g[j] < beta1 - margin).collect();
    let above: Vec<usize> = (0..g.len()).filter(|&j| g[j] > beta1 + margin).collect();
    if below.is_empty() && above.is_empty() {
        return param("the margin leaves no grid points on either side");
    }
    let nn = family.n_max();
    let mut sub = Vec::new();
    for &j in &below {
        let pts: Vec<(f64, Estimate)> = (1..=nn)
            .map(|n| {
                let mut e = Estimate::from_samples(&[family.values[n][j]]);
                e.trials = usize::MAX;
                (n as f64, e)
            })
            .collect();
        let fit = fit_decay(&pts)?;
        sub.push(DichotomyPoint { beta: g[j], value: fit.slope, required: 0.0, ok: fit.slope < 0.0 });
    }
    let sup: Vec<DichotomyPoint> = above
        .iter()
        .map(|&j| {
            let need = g[j] - beta1 - tolerance;
            let v = family.values[nn][j];
            DichotomyPoint { beta: g[j], value: v, required: need, ok: v >= need }
        })
        .collect();
    let holds = sub.iter().chain(&sup).all(|p| p.ok);
    Ok(DichotomyReport { beta1, margin, tolerance, subcritical: sub, supercritical: sup, holds })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_equation_matches_closed_form() {
        let sys = LemmaSystem { boundary: vec![2.0, 0.1], cap: 10.0, ..LemmaSystem::unit(vec![]) };
        let fam = integrate_lemma_system(&sys).unwrap();
        for (j, &b) in fam.grid.iter().enumerate() {
            let exact = 0.1 * (b / 2.0).exp();
            assert!((fam.values[1][j] - exact).abs() < 1e-6, "β = {b}");
        }
    }

    #[test]
    fn saturated_boundary_stays_at_cap() {
        let fam = integrate_lemma_system(&LemmaSystem::unit(vec![1.0; 9])).unwrap();
        assert!(fam.values.iter().flatten().all(|&v| v == 1.0));
        let b = beta1_estimate(&fam, 0.02).unwrap();
        assert_eq!(b.beta1, 0.0);
    }

    #[test]
    fn halving_the_step_barely_moves_the_family() {
        let sys = LemmaSystem::unit(LemmaSystem::exponential_boundary(16, 0.5, 0.2));
        let (_, gap) = integrate_converged(&sys, 1e-4, 4).unwrap();
        assert!(gap < 1e-4);
    }

    #[test]
    fn beta1_grows_with_the_boundary() {
        let b1 = |a: f64, b: f64| {
            let fam = integrate_lemma_system(&LemmaSystem::canonical(64, a, b)).unwrap();
            beta1_estimate(&fam, 0.02).unwrap().beta1
        };
        assert!(b1(0.3, 0.4) <= b1(0.6, 0.3));
        assert!(b1(0.5, 0.2) <= b1(0.8, 0.2));
    }

    #[test]
    fn power_law_sigma_gives_half() {
        let nn = 64;
        let grid: Vec<f64> = (0..=100).map(|j| j as f64 / 100.0).collect();
        let sigma = |n: usize, b: f64| (n as f64).powf(2.0 * b);
        let values: Vec<Vec<f64>> = (0..=nn)
            .map(|n| grid.iter().map(|&b| if n == 0 { 1.0 } else { sigma(n + 1, b) - sigma(n, b) }).collect())
            .collect();
        let fam = SequenceFamily::new(0.0, 1.0, 1e9, grid, values).unwrap();
        let b = beta1_estimate(&fam, 0.02).unwrap();
        assert!((b.beta1 - 0.49).abs() < 0.011, "{}", b.beta1);
        assert!(b.proxies.windows(2).all(|w| w[1].1 >= w[0].1));
    }

    #[test]
    fn synthetic_theta_ratio() {
        let theta = |p: f64, n: usize| (-(0.5 - p) * n as f64).exp();
        let dp = 1e-3;
        let rep = mlem_closed_form(theta, &[0.3, 0.4], 12, dp).unwrap();
        for pt in &rep.points {
            let a = 0.5 - pt.p;
            let s = (1.0 - (-a * pt.n as f64).exp()) / (1.0 - (-a).exp());
            let x = pt.n as f64 * dp;
            assert!((pt.ratio - s * x.sinh() / x).abs() < 1e-9 * s.max(1.0), "{pt:?}");
            assert!((pt.ratio - s).abs() <= s * x * x);
        }
        assert!(rep.holds);
    }

    #[test]
    fn exponential_families_split() {
        for (a, b) in CANONICAL_BOUNDARIES {
            let fam = integrate_lemma_system(&LemmaSystem::canonical(64, a, b)).unwrap();
            assert!(fam.monotonicity_defect() == 0.0);
            let b1 = beta1_estimate(&fam, 0.02).unwrap();
            assert!(!b1.unreached);
            let rep = verify_lemma_dichotomy(&fam, b1.beta1, 0.05, 0.02).unwrap();
            assert!(!rep.subcritical.is_empty() && !rep.supercritical.is_empty());
            assert!(rep.holds, "a={a} b={b} β1={} {:?}", b1.beta1, rep.subcritical.iter().chain(&rep.supercritical).find(|p| !p.ok));
        }
    }
}

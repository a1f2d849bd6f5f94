//! One function per subcommand: run the experiment, write its files.

use std::fs;

use serde::Serialize;
use serde_json::{json, Value};
use voronoi_perc::connectivity::{Engine, EventKind, EventSpec};
use voronoi_perc::estimators::{
    estimate_event, estimate_pc, event_window, fit_decay, validate_pitch, PcSchedule, ThetaTable,
};
use voronoi_perc::exploration::{revealment_profile, run_tk, ExplorationSetup};
use voronoi_perc::geometry::{rasterize, SiteBox};
use voronoi_perc::osss::{exact_osss, random_batch, FiniteProductSpace};
use voronoi_perc::point_process::{sample_configuration, write_points, Window};
use voronoi_perc::seed::trial_seed;
use voronoi_perc::sharpness::{
    beta1_estimate, integrate_lemma_system, mlem_check, verify_lemma_dichotomy, LemmaSystem,
};
use voronoi_perc::stats::Estimate;
use voronoi_perc::tensor::{influence_profile, influence_sum_vs_derivative};
use voronoi_perc::{osss, Error, Result};

use crate::cli::*;
use crate::plots;
use crate::store::{digest_hex, Check, Staging};

fn bad(msg: impl Into<String>) -> Error {
    Error::Parameter(msg.into())
}

fn check(name: &str, passed: bool, detail: String) -> Option<Check> {
    Some(Check { name: name.into(), passed, detail })
}

/// Parameters that address the result directory, including digests of
/// any input files.
pub fn params(command: &Command) -> Result<Value> {
    let mut v = serde_json::to_value(command).map_err(|e| Error::Format(e.to_string()))?;
    let extra = match command {
        Command::OsssExact(a) => match &a.instance {
            Some(path) => {
                let bytes = fs::read(path).map_err(|e| bad(format!("cannot read {}: {e}", path.display())))?;
                Some(("instance_sha256", json!(digest_hex(&bytes))))
            }
            None => None,
        },
        Command::Plots(a) => Some(("inputs", json!(plots::input_digests(&a.inputs)?))),
        _ => None,
    };
    if let (Some((key, value)), Some(obj)) = (extra, v.as_object_mut().and_then(|o| o.values_mut().next())) {
        if let Some(obj) = obj.as_object_mut() {
            obj.insert(key.into(), value);
        }
    }
    Ok(v)
}

pub fn run(command: &Command, seed: u64, st: &Staging) -> Result<Option<Check>> {
    match command {
        Command::Sample(a) => sample(a, seed, st),
        Command::Theta(a) => theta(a, seed, st),
        Command::Crossing(a) => crossing(a, seed, st),
        Command::Influence(a) => influence(a, seed, st),
        Command::Explore(a) => explore(a, seed, st),
        Command::OsssExact(a) => osss_exact(a, seed, st),
        Command::OsssVoronoi(a) => osss_voronoi(a, seed, st),
        Command::Pc(a) => pc(a, seed, st),
        Command::Decay(a) => decay(a, seed, st),
        Command::Mlem(a) => mlem(a, seed, st),
        Command::Lemma(a) => lemma(a, st),
        Command::Plots(a) => plots::emit(&a.inputs, st),
    }
}

/// Estimate rows: `p, n, event, engine, h, trials, mean, stderr, seed`.
struct EstimateCsv {
    w: csv::Writer<std::io::BufWriter<fs::File>>,
}

impl EstimateCsv {
    fn new(st: &Staging, name: &str) -> Result<Self> {
        let mut w = csv::Writer::from_writer(st.create(name)?);
        w.write_record(["p", "n", "event", "engine", "h", "trials", "mean", "stderr", "seed"])?;
        Ok(EstimateCsv { w })
    }

    fn row(&mut self, e: &Estimate, engine: Engine) -> Result<()> {
        let n = e.params.n.map(|n| n.to_string()).unwrap_or_default();
        let h = engine.pitch().map(|h| h.to_string()).unwrap_or_default();
        self.w.write_record([
            e.params.p.to_string(),
            n,
            e.event.clone(),
            engine.name().to_string(),
            h,
            e.trials.to_string(),
            e.mean.to_string(),
            e.stderr.to_string(),
            e.root_seed.to_string(),
        ])?;
        Ok(())
    }

    fn finish(mut self) -> Result<()> {
        self.w.flush()?;
        Ok(())
    }
}

fn sample(a: &SampleArgs, seed: u64, st: &Staging) -> Result<Option<Check>> {
    let window = Window::padded(a.d, a.l)?;
    let config = sample_configuration(&window, a.p, seed)?;
    write_points(&config, st.create("points.csv")?)?;
    if let Some(h) = a.h {
        let grid = rasterize(&config, &SiteBox::cube(a.d, a.l, h), h)?;
        grid.write_owner_csv(st.create("owners.csv")?)?;
        if a.d == 2 {
            grid.write_pgm(st.create("grid.pgm")?)?;
        }
    }
    Ok(None)
}

fn theta(a: &ThetaArgs, seed: u64, st: &Staging) -> Result<Option<Check>> {
    let engine = a.engine.resolve(a.d)?;
    let table = ThetaTable::measure(a.d, engine, &a.p, 0.0, &a.n, a.trials, seed)?;
    let mut out = EstimateCsv::new(st, "estimates.csv")?;
    for i in 0..a.p.len() {
        for &n in &a.n {
            out.row(&table.theta(i, n), engine)?;
        }
    }
    out.finish()?;
    Ok(None)
}

#[derive(Serialize)]
struct PitchRow {
    p: f64,
    n: f64,
    h: f64,
    coarse: f64,
    fine: f64,
    shift: f64,
    shift_stderr: f64,
    coarse_stderr: f64,
    ok: bool,
}

fn crossing(a: &CrossingArgs, seed: u64, st: &Staging) -> Result<Option<Check>> {
    let engine = a.engine.resolve(a.d)?;
    let mut out = EstimateCsv::new(st, "estimates.csv")?;
    let mut worst: f64 = 0.0;
    for &p in &a.p {
        for &n in &a.n {
            let e = estimate_event(a.d, p, &EventSpec::new(EventKind::BoxCrossing { n }, engine), a.trials, seed)?;
            out.row(&e, engine)?;
            worst = worst.max((e.mean - a.target).abs() / e.stderr.max(f64::MIN_POSITIVE));
        }
    }
    out.finish()?;
    let mut pitch_ok = true;
    if a.pitch_trials > 0 {
        let Engine::Raster { h } = engine else {
            return Err(bad("the pitch sweep needs the raster engine"));
        };
        let mut w = csv::Writer::from_writer(st.create("pitch.csv")?);
        for &p in &a.p {
            for &n in &a.n {
                let r = validate_pitch(a.d, p, &EventKind::BoxCrossing { n }, h, a.pitch_trials, seed)?;
                pitch_ok &= r.ok;
                w.serialize(PitchRow {
                    p,
                    n,
                    h,
                    coarse: r.coarse.mean,
                    fine: r.fine.mean,
                    shift: r.shift.mean,
                    shift_stderr: r.shift.stderr,
                    coarse_stderr: r.coarse.stderr,
                    ok: r.ok,
                })?;
            }
        }
        w.flush()?;
    }
    let passed = worst <= 3.0 && pitch_ok;
    let detail = format!("largest deviation from {} is {worst:.2} standard errors; pitch sweep ok: {pitch_ok}", a.target);
    Ok(check("crossing", passed, detail))
}

fn influence(a: &InfluenceArgs, seed: u64, st: &Staging) -> Result<Option<Check>> {
    let engine = a.engine.resolve(a.d)?;
    let kind = match a.event {
        EventChoice::Origin => EventKind::OriginToSphere { n: a.n },
        EventChoice::Crossing => EventKind::BoxCrossing { n: a.n },
    };
    let spec = EventSpec::new(kind, engine);
    let prof = influence_profile(a.d, a.p, &spec, a.eps, a.trials, seed)?;
    let mut w = csv::Writer::from_writer(st.create("influence.csv")?);
    let mut head = vec!["eps".to_string()];
    head.extend((1..=a.d).map(|k| format!("x{k}")));
    head.extend(["mean".into(), "stderr".into()]);
    w.write_record(&head)?;
    for (b, e) in prof.boxes.iter().zip(&prof.estimates) {
        let mut row = vec![a.eps.to_string()];
        row.extend(b.0.iter().map(|c| c.to_string()));
        row.extend([e.mean.to_string(), e.stderr.to_string()]);
        w.write_record(&row)?;
    }
    w.flush()?;
    let sum = prof.sum();
    let shell = prof.outer_shell();
    let mut summary = json!({ "sum": sum, "outer_shell": shell });
    let mut result = None;
    if let Some(dp) = a.dp {
        let r = influence_sum_vs_derivative(a.d, a.p, &spec, a.eps, dp, a.trials, seed)?;
        result = check(
            "derivative >= half the influence sum",
            r.holds,
            format!("derivative {:.4}, influence sum {:.4}", r.derivative.mean, r.influence_sum.mean),
        );
        summary["derivative_check"] = serde_json::to_value(&r).map_err(|e| Error::Format(e.to_string()))?;
    } else if a.check {
        return Err(bad("--check needs --dp"));
    }
    st.write_json("summary.json", &summary)?;
    Ok(result)
}

#[derive(Serialize)]
struct ExploreSummary {
    p: f64,
    k: f64,
    mismatches: usize,
    total_revealment: Estimate,
    max_ratio: Option<f64>,
    max_ratio_box: Option<Vec<i64>>,
}

fn explore(a: &ExploreArgs, seed: u64, st: &Staging) -> Result<Option<Check>> {
    let min_prob = a.min_prob.unwrap_or(10.0 / a.trials as f64);
    let mut w = csv::Writer::from_writer(st.create("revealments.csv")?);
    let mut head = vec!["p".to_string(), "k".to_string()];
    head.extend((1..=a.d).map(|k| format!("x{k}")));
    for c in ["revealment", "revealment_stderr", "connection", "connection_stderr"] {
        head.push(c.into());
    }
    w.write_record(&head)?;
    let mut summaries = Vec::new();
    for &p in &a.p {
        for &k in &a.k {
            let setup = ExplorationSetup::new(a.n, k, a.eps, a.h)?;
            let prof = revealment_profile(a.d, p, &setup, a.trials, seed)?;
            for (i, b) in prof.boxes.iter().enumerate() {
                let mut row = vec![p.to_string(), k.to_string()];
                row.extend(b.0.iter().map(|c| c.to_string()));
                let r = &prof.revealment[i];
                row.extend([r.mean.to_string(), r.stderr.to_string()]);
                match &prof.connection[i] {
                    Some(c) => row.extend([c.mean.to_string(), c.stderr.to_string()]),
                    None => row.extend([String::new(), String::new()]),
                }
                w.write_record(&row)?;
            }
            let best = prof.max_ratio(min_prob);
            summaries.push(ExploreSummary {
                p,
                k,
                mismatches: prof.mismatches,
                total_revealment: prof.total(),
                max_ratio: best.as_ref().map(|b| b.1),
                max_ratio_box: best.map(|b| b.0 .0),
            });
        }
    }
    w.flush()?;
    let setup = ExplorationSetup::new(a.n, a.k[0], a.eps, a.h)?;
    let window = event_window(a.d, &EventKind::OriginToSphere { n: a.n })?;
    let config = sample_configuration(&window, a.p[0], trial_seed(seed, 0))?;
    run_tk(&config, &setup)?.write_json(st.create("trace.json")?)?;
    let mismatches: usize = summaries.iter().map(|s| s.mismatches).sum();
    let mut spread_ok = true;
    let mut spreads = Vec::new();
    if a.k.len() > 1 {
        for &p in &a.p {
            let ratios: Vec<Option<f64>> = summaries.iter().filter(|s| s.p == p).map(|s| s.max_ratio).collect();
            if ratios.iter().any(|r| r.is_none()) {
                spread_ok = false;
                continue;
            }
            let r: Vec<f64> = ratios.into_iter().flatten().collect();
            let spread = r.iter().cloned().fold(f64::MIN, f64::max) / r.iter().cloned().fold(f64::MAX, f64::min);
            spread_ok &= spread < 2.0;
            spreads.push(json!({ "p": p, "spread": spread }));
        }
    }
    st.write_json("summary.json", &json!({ "min_prob": min_prob, "profiles": summaries, "ratio_spread": spreads }))?;
    let configs = a.p.len() * a.trials;
    Ok(check(
        "exploration",
        mismatches == 0 && spread_ok,
        format!("{mismatches} decision mismatches on {configs} configurations; ratio spread below 2: {spread_ok}"),
    ))
}

fn osss_exact(a: &OsssExactArgs, seed: u64, st: &Staging) -> Result<Option<Check>> {
    match (&a.instance, a.random) {
        (Some(path), None) => {
            let text = fs::read_to_string(path)?;
            let space = FiniteProductSpace::from_json(&text)?;
            let exact = exact_osss(&space)?;
            st.write_json("report.json", &exact.report())?;
            Ok(check("osss", exact.holds(), format!("slack {}", exact.slack)))
        }
        (None, Some(count)) => {
            let batch = random_batch(count, a.max_coords, a.max_alphabet, seed)?;
            let mut w = csv::Writer::from_writer(st.create("instances.csv")?);
            w.write_record(["instance", "coordinates", "variance", "rhs", "slack", "slack_f64"])?;
            let mut failures = 0;
            for (i, e) in batch.iter().enumerate() {
                failures += usize::from(!e.holds());
                w.write_record([
                    i.to_string(),
                    e.revealments.len().to_string(),
                    e.variance.to_string(),
                    e.rhs.to_string(),
                    e.slack.to_string(),
                    e.slack_f64().to_string(),
                ])?;
            }
            w.flush()?;
            let min = batch.iter().map(|e| e.slack.clone()).min();
            let min = min.map(|m| m.to_string()).unwrap_or_default();
            st.write_json("summary.json", &json!({ "instances": count, "failures": failures, "min_slack": min }))?;
            Ok(check("osss", failures == 0, format!("{failures} of {count} instances violate the inequality")))
        }
        _ => Err(bad("give exactly one of --instance and --random")),
    }
}

fn osss_voronoi(a: &OsssVoronoiArgs, seed: u64, st: &Staging) -> Result<Option<Check>> {
    let r = osss::osss_check_voronoi(a.p, a.n, a.k, a.eps, a.h, a.trials, seed)?;
    st.write_json("report.json", &r)?;
    Ok(check(
        "osss on voronoi",
        r.holds,
        format!("lhs {:.4}, rhs {:.4}, combined stderr {:.4}", r.lhs.mean, r.rhs.mean, r.combined_stderr),
    ))
}

fn pc(a: &PcArgs, seed: u64, st: &Staging) -> Result<Option<Check>> {
    let engine = a.engine.resolve(a.d)?;
    let sched = PcSchedule {
        lo: a.lo,
        hi: a.hi,
        sizes: a.sizes.clone(),
        trials: a.trials,
        tolerance: a.tolerance,
        root_seed: seed,
    };
    let iv = estimate_pc(a.d, engine, &sched)?;
    let mut w = csv::Writer::from_writer(st.create("steps.csv")?);
    w.write_record(["p", "statistic"])?;
    for (p, s) in &iv.steps {
        w.write_record([p.to_string(), s.to_string()])?;
    }
    w.flush()?;
    st.write_json("interval.json", &iv)?;
    Ok(check(
        "critical point",
        iv.width() <= a.tolerance + 1e-12 && iv.contains(a.expect),
        format!("[{}, {}] against {}", iv.lo, iv.hi, a.expect),
    ))
}

fn decay(a: &DecayArgs, seed: u64, st: &Staging) -> Result<Option<Check>> {
    let engine = a.engine.resolve(a.d)?;
    if a.n_min == 0 || a.n_min >= a.n_max {
        return Err(bad("need 0 < n-min < n-max"));
    }
    let ns: Vec<f64> = (a.n_min..=a.n_max).map(|n| n as f64).collect();
    let table = ThetaTable::measure(a.d, engine, &a.p, 0.0, &ns, a.trials, seed)?;
    let mut out = EstimateCsv::new(st, "estimates.csv")?;
    let mut fits = Vec::new();
    for i in 0..a.p.len() {
        let pts: Vec<(f64, Estimate)> = ns.iter().map(|&n| (n, table.theta(i, n))).collect();
        for (_, e) in &pts {
            out.row(e, engine)?;
        }
        fits.push(fit_decay(&pts));
    }
    out.finish()?;
    let report: Vec<Value> = a
        .p
        .iter()
        .zip(&fits)
        .map(|(p, f)| match f {
            Ok(f) => json!({ "p": p, "fit": f }),
            Err(e) => json!({ "p": p, "error": e.to_string() }),
        })
        .collect();
    st.write_json("fits.json", &report)?;
    let reference = (0..a.p.len()).min_by(|&i, &j| a.p[i].total_cmp(&a.p[j])).unwrap();
    let (passed, detail) = match &fits[reference] {
        Ok(r) => {
            let significant = r.slope < 0.0 && r.slope.abs() > 3.0 * r.slope_stderr;
            let others_flat = fits.iter().enumerate().filter(|(i, _)| *i != reference).all(|(_, f)| match f {
                Ok(f) => f.slope.abs() * a.factor <= r.slope.abs(),
                Err(_) => false,
            });
            (
                significant && others_flat,
                format!(
                    "slope {:.4} ± {:.4} at p = {}; other slopes {:?}",
                    r.slope,
                    r.slope_stderr,
                    a.p[reference],
                    fits.iter().map(|f| f.as_ref().map(|f| f.slope).ok()).collect::<Vec<_>>()
                ),
            )
        }
        Err(e) => (false, e.to_string()),
    };
    Ok(check("decay", passed, detail))
}

fn p_grid(lo: f64, hi: f64, steps: usize) -> Result<Vec<f64>> {
    if steps < 2 || !(lo < hi) {
        return Err(bad("need lo < hi and at least two p values"));
    }
    Ok((0..steps).map(|i| lo + (hi - lo) * i as f64 / (steps - 1) as f64).collect())
}

fn mlem(a: &MlemArgs, seed: u64, st: &Staging) -> Result<Option<Check>> {
    let engine = a.engine.resolve(a.d)?;
    let ps = p_grid(a.p_lo, a.p_hi, a.p_steps)?;
    let ns: Vec<f64> = (1..=a.n_max).map(|n| n as f64).collect();
    let table = ThetaTable::measure(a.d, engine, &ps, a.dp, &ns, a.trials, seed)?;
    let r = mlem_check(&table, (a.p_lo, a.p_hi), a.n_max)?;
    let mut w = csv::Writer::from_writer(st.create("cells.csv")?);
    for cell in &r.points {
        w.serialize(cell)?;
    }
    w.flush()?;
    st.write_json("report.json", &r)?;
    Ok(check(
        "differential inequality",
        r.holds,
        format!("c = {:.4} ± {:.4} at p = {}, n = {}", r.c_hat, r.c_hat_stderr, r.argmin.0, r.argmin.1),
    ))
}

fn parse_boundary(s: &str) -> Result<(f64, f64)> {
    let (a, b) = s.split_once(':').ok_or_else(|| bad(format!("boundary {s:?} is not of the form a:b")))?;
    let num = |t: &str| t.trim().parse::<f64>().map_err(|_| bad(format!("bad number in boundary {s:?}")));
    Ok((num(a)?, num(b)?))
}

fn lemma(a: &LemmaArgs, st: &Staging) -> Result<Option<Check>> {
    let sets: Vec<(f64, f64)> = a.boundaries.iter().map(|s| parse_boundary(s.as_str())).collect::<Result<_>>()?;
    let mut all = true;
    let mut details = Vec::new();
    for (i, &(x, y)) in sets.iter().enumerate() {
        let family = integrate_lemma_system(&LemmaSystem::canonical(a.n_max, x, y))?;
        family.write_csv(st.create(&format!("family-{i}.csv"))?)?;
        let beta1 = beta1_estimate(&family, a.tolerance)?;
        let report = verify_lemma_dichotomy(&family, beta1.beta1, a.margin, a.tolerance)?;
        all &= report.holds && !beta1.unreached;
        details.push(format!("{x}:{y} β1 = {} {}", beta1.beta1, if report.holds { "ok" } else { "fails" }));
        st.write_json(
            &format!("dichotomy-{i}.json"),
            &json!({ "boundary": [x, y], "beta1": beta1, "report": report, "finite_n_proxy": true }),
        )?;
    }
    // f_1' = f_1 / 2 with f_0 = 2 never reaches the cap.
    let single = LemmaSystem { boundary: vec![2.0, 0.1], cap: 10.0, ..LemmaSystem::unit(vec![]) };
    let fam = integrate_lemma_system(&single)?;
    let err = fam
        .grid
        .iter()
        .enumerate()
        .map(|(j, &b)| (fam.values[1][j] - 0.1 * (b / 2.0).exp()).abs())
        .fold(0.0, f64::max);
    st.write_json("closed_form.json", &json!({ "max_abs_error": err, "tolerance": 1e-6 }))?;
    let passed = all && err < 1e-6;
    details.push(format!("closed form error {err:.2e}"));
    Ok(check("lemma dichotomy", passed, details.join("; ")))
}

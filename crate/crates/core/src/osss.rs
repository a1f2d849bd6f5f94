//! The OSSS inequality `Var(f) <= Σ_i δ_i(T) Inf_i(f)`.
//!
//! Exact verification on finite product spaces by enumeration in rational
//! arithmetic, and a Monte Carlo version for `{0 ↔ ∂B_n}` with `T_k`.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::connectivity::{Engine, EventKind, EventSpec};
use crate::error::{param, Error, Result};
use crate::estimators::estimate_event;
use crate::exploration::{revealment_profile, ExplorationSetup};
use crate::seed;
use crate::stats::{mean_se, Estimate};
use crate::tensor::influence_profile;

/// Enumeration budget on the number of outcomes.
pub const OUTCOME_BUDGET: u64 = 10_000_000;

/// Decision tree: a leaf outputs a value, a query branches on one coordinate.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DecisionTree {
    Leaf { leaf: bool },
    Query { query: usize, children: Vec<DecisionTree> },
}

impl DecisionTree {
    /// Output and queried coordinates on outcome `w`.
    pub fn run(&self, w: &[usize], queried: &mut Vec<usize>) -> bool {
        let mut node = self;
        loop {
            match node {
                DecisionTree::Leaf { leaf } => return *leaf,
                DecisionTree::Query { query, children } => {
                    queried.push(*query);
                    node = &children[w[*query]];
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            DecisionTree::Leaf { .. } => 0,
            DecisionTree::Query { children, .. } => 1 + children.iter().map(|c| c.depth()).max().unwrap_or(0),
        }
    }
}

/// Probability written either as a JSON number or as an `"a/b"` string.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProbValue {
    Number(serde_json::Number),
    Text(String),
}

impl ProbValue {
    fn to_rational(&self) -> Result<BigRational> {
        let s = match self {
            ProbValue::Number(n) => n.to_string(),
            ProbValue::Text(t) => t.trim().to_string(),
        };
        parse_rational(&s)
    }
}

/// Parses `"a/b"`, an integer, or a decimal such as `0.25` or `1e-3` exactly.
pub fn parse_rational(s: &str) -> Result<BigRational> {
    let bad = || Error::Format(format!("not a rational number: {s:?}"));
    if let Some((a, b)) = s.split_once('/') {
        let a: BigInt = a.trim().parse().map_err(|_| bad())?;
        let b: BigInt = b.trim().parse().map_err(|_| bad())?;
        if b.is_zero() {
            return Err(bad());
        }
        return Ok(BigRational::new(a, b));
    }
    let (mant, exp) = match s.find(['e', 'E']) {
        Some(i) => (&s[..i], s[i + 1..].parse::<i32>().map_err(|_| bad())?),
        None => (s, 0),
    };
    let (int, frac) = mant.split_once('.').unwrap_or((mant, ""));
    let digits: BigInt = format!("{int}{frac}").parse().map_err(|_| bad())?;
    let scale = exp - frac.len() as i32;
    let ten = BigInt::from(10);
    Ok(if scale >= 0 {
        BigRational::from_integer(digits * num_traits::pow(ten, scale as usize))
    } else {
        BigRational::new(digits, num_traits::pow(ten, (-scale) as usize))
    })
}

/// Instance file layout.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InstanceFile {
    pub alphabets: Vec<usize>,
    pub probabilities: Vec<Vec<ProbValue>>,
    /// Mixed-radix order with coordinate 0 most significant.
    pub truth_table: Vec<u8>,
    pub tree: DecisionTree,
}

/// `(Ω^I, π^{⊗I})` with a Boolean function and a decision tree for it.
#[derive(Clone, Debug, PartialEq)]
pub struct FiniteProductSpace {
    pub alphabets: Vec<usize>,
    pub probs: Vec<Vec<BigRational>>,
    pub truth: Vec<bool>,
    pub tree: DecisionTree,
}

impl FiniteProductSpace {
    pub fn new(alphabets: Vec<usize>, probs: Vec<Vec<BigRational>>, truth: Vec<bool>, tree: DecisionTree) -> Result<Self> {
        if alphabets.is_empty() || alphabets.contains(&0) {
            return param("every coordinate needs a non-empty alphabet");
        }
        if probs.len() != alphabets.len() {
            return param("one probability vector per coordinate");
        }
        for (i, (a, p)) in alphabets.iter().zip(&probs).enumerate() {
            if p.len() != *a {
                return param(format!("coordinate {i}: {} probabilities for {a} outcomes", p.len()));
            }
            if p.iter().any(|x| x < &BigRational::zero()) {
                return param(format!("coordinate {i}: negative probability"));
            }
            if p.iter().sum::<BigRational>() != BigRational::one() {
                return param(format!("coordinate {i}: probabilities do not sum to 1"));
            }
        }
        let total = alphabets.iter().try_fold(1u64, |a, &b| a.checked_mul(b as u64));
        match total {
            Some(t) if t <= OUTCOME_BUDGET => {
                if truth.len() as u64 != t {
                    return param(format!("truth table has {} entries, expected {t}", truth.len()));
                }
            }
            _ => return Err(Error::Resource(format!("outcome count exceeds the budget of {OUTCOME_BUDGET}"))),
        }
        check_shape(&tree, &alphabets)?;
        Ok(FiniteProductSpace { alphabets, probs, truth, tree })
    }

    pub fn from_file(f: InstanceFile) -> Result<Self> {
        let probs = f
            .probabilities
            .iter()
            .map(|v| v.iter().map(|p| p.to_rational()).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        if f.truth_table.iter().any(|&v| v > 1) {
            return param("truth table entries must be 0 or 1");
        }
        Self::new(f.alphabets, probs, f.truth_table.iter().map(|&v| v == 1).collect(), f.tree)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let f: InstanceFile = serde_json::from_str(s).map_err(|e| Error::Format(e.to_string()))?;
        Self::from_file(f)
    }

    pub fn to_file(&self) -> InstanceFile {
        InstanceFile {
            alphabets: self.alphabets.clone(),
            probabilities: self.probs.iter().map(|v| v.iter().map(|p| ProbValue::Text(p.to_string())).collect()).collect(),
            truth_table: self.truth.iter().map(|&b| b as u8).collect(),
            tree: self.tree.clone(),
        }
    }

    pub fn coordinates(&self) -> usize {
        self.alphabets.len()
    }

    pub fn outcomes(&self) -> usize {
        self.truth.len()
    }

    fn decode(&self, mut lin: usize, w: &mut [usize]) {
        for i in (0..w.len()).rev() {
            w[i] = lin % self.alphabets[i];
            lin /= self.alphabets[i];
        }
    }

    fn encode(&self, w: &[usize]) -> usize {
        w.iter().zip(&self.alphabets).fold(0, |acc, (&x, &a)| acc * a + x)
    }

    fn weight(&self, w: &[usize]) -> BigRational {
        w.iter().enumerate().map(|(i, &x)| self.probs[i][x].clone()).product()
    }
}

fn check_shape(t: &DecisionTree, alphabets: &[usize]) -> Result<()> {
    if let DecisionTree::Query { query, children } = t {
        if *query >= alphabets.len() {
            return param(format!("tree queries coordinate {query}, which does not exist"));
        }
        if children.len() != alphabets[*query] {
            return param(format!("query of coordinate {query} has {} children, expected {}", children.len(), alphabets[*query]));
        }
        for c in children {
            check_shape(c, alphabets)?;
        }
    }
    Ok(())
}

/// Exact quantities of the inequality.
#[derive(Clone, Debug, PartialEq)]
pub struct OsssExact {
    pub variance: BigRational,
    pub revealments: Vec<BigRational>,
    pub influences: Vec<BigRational>,
    pub rhs: BigRational,
    pub slack: BigRational,
}

/// Exact report in serialisable form (rationals as `"a/b"`).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OsssReport {
    pub variance: String,
    pub revealments: Vec<String>,
    pub influences: Vec<String>,
    pub rhs: String,
    pub slack: String,
    pub slack_f64: f64,
    pub holds: bool,
}

impl OsssExact {
    /// The slack rounded to the nearest `f64`.
    pub fn slack_f64(&self) -> f64 {
        self.slack.to_f64().unwrap_or(f64::NAN)
    }

    pub fn holds(&self) -> bool {
        self.slack >= BigRational::zero()
    }

    pub fn report(&self) -> OsssReport {
        OsssReport {
            variance: self.variance.to_string(),
            revealments: self.revealments.iter().map(|x| x.to_string()).collect(),
            influences: self.influences.iter().map(|x| x.to_string()).collect(),
            rhs: self.rhs.to_string(),
            slack: self.slack.to_string(),
            slack_f64: self.slack.to_f64().unwrap_or(f64::NAN),
            holds: self.holds(),
        }
    }
}

/// Full enumeration; fails if the tree does not determine `f`.
pub fn exact_osss(space: &FiniteProductSpace) -> Result<OsssExact> {
    let m = space.coordinates();
    let mut w = vec![0usize; m];
    let mut queried = Vec::new();
    let zero = BigRational::zero();
    let mut mean = zero.clone();
    let mut rev = vec![zero.clone(); m];
    let mut inf = vec![zero.clone(); m];
    for lin in 0..space.outcomes() {
        space.decode(lin, &mut w);
        let pw = space.weight(&w);
        let f = space.truth[lin];
        queried.clear();
        if space.tree.run(&w, &mut queried) != f {
            return Err(Error::Validation(format!("tree output differs from f at outcome {w:?}")));
        }
        if f {
            mean += &pw;
        }
        queried.sort_unstable();
        queried.dedup();
        for &i in &queried {
            rev[i] += &pw;
        }
        for i in 0..m {
            let orig = w[i];
            for a in 0..space.alphabets[i] {
                w[i] = a;
                if space.truth[space.encode(&w)] != f {
                    inf[i] += &pw * &space.probs[i][a];
                }
            }
            w[i] = orig;
        }
    }
    let variance = &mean * (BigRational::one() - &mean);
    let rhs: BigRational = rev.iter().zip(&inf).map(|(a, b)| a * b).sum();
    let slack = &rhs - &variance;
    Ok(OsssExact { variance, revealments: rev, influences: inf, rhs, slack })
}

/// Random instance: uniform truth table and a greedy-consistent random tree.
pub fn random_instance(max_coords: usize, max_alphabet: usize, seed: u64) -> FiniteProductSpace {
    let mut rng = seed::rng(seed::derive(seed, &[seed::tag::INSTANCE]));
    let m = rng.random_range(1..=max_coords.max(1));
    let alphabets: Vec<usize> = (0..m).map(|_| rng.random_range(2..=max_alphabet.max(2))).collect();
    let probs = alphabets
        .iter()
        .map(|&a| {
            let ws: Vec<i64> = (0..a).map(|_| rng.random_range(1..=6)).collect();
            let tot: i64 = ws.iter().sum();
            ws.iter().map(|&x| BigRational::new(x.into(), tot.into())).collect()
        })
        .collect();
    let total: usize = alphabets.iter().product();
    let bias: f64 = rng.random();
    let truth: Vec<bool> = (0..total).map(|_| rng.random::<f64>() < bias).collect();
    let mut space = FiniteProductSpace { alphabets, probs, truth, tree: DecisionTree::Leaf { leaf: false } };
    let mut fixed = vec![None; m];
    space.tree = grow(&space, &mut fixed, &mut rng);
    space
}

/// Queries random unqueried coordinates until `f` is constant on the subcube.
fn grow(space: &FiniteProductSpace, fixed: &mut Vec<Option<usize>>, rng: &mut impl Rng) -> DecisionTree {
    let mut vals = [false, false];
    let mut w = vec![0usize; fixed.len()];
    for lin in 0..space.outcomes() {
        space.decode(lin, &mut w);
        if fixed.iter().zip(&w).all(|(f, x)| f.is_none_or(|v| v == *x)) {
            vals[space.truth[lin] as usize] = true;
        }
    }
    if !(vals[0] && vals[1]) {
        return DecisionTree::Leaf { leaf: vals[1] };
    }
    let free: Vec<usize> = (0..fixed.len()).filter(|&i| fixed[i].is_none()).collect();
    let q = free[rng.random_range(0..free.len())];
    let children = (0..space.alphabets[q])
        .map(|a| {
            fixed[q] = Some(a);
            let c = grow(space, fixed, rng);
            fixed[q] = None;
            c
        })
        .collect();
    DecisionTree::Query { query: q, children }
}

/// Exact check of a batch of random instances; returns the smallest slack seen.
pub fn random_batch(count: usize, max_coords: usize, max_alphabet: usize, root_seed: u64) -> Result<Vec<OsssExact>> {
    (0..count)
        .into_par_iter()
        .map(|i| exact_osss(&random_instance(max_coords, max_alphabet, seed::trial_seed(root_seed, i))))
        .collect()
}

/// Monte Carlo estimates of the exact quantities.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OsssMonteCarlo {
    pub variance: Estimate,
    pub revealments: Vec<Estimate>,
    pub influences: Vec<Estimate>,
}

pub fn monte_carlo_osss(space: &FiniteProductSpace, trials: usize, root_seed: u64) -> Result<OsssMonteCarlo> {
    if trials < 2 {
        return param("at least two trials are needed");
    }
    let m = space.coordinates();
    let cdf: Vec<Vec<f64>> = space
        .probs
        .iter()
        .map(|p| {
            let mut acc = 0.0;
            p.iter().map(|x| {
                acc += x.to_f64().unwrap();
                acc
            }).collect()
        })
        .collect();
    let draw = |i: usize, rng: &mut rand_chacha::ChaCha8Rng| {
        let u: f64 = rng.random();
        cdf[i].iter().position(|&c| u < c).unwrap_or(cdf[i].len() - 1)
    };
    let mut rng = seed::rng(root_seed);
    let mut fs = Vec::with_capacity(trials);
    let mut rev = vec![Vec::with_capacity(trials); m];
    let mut inf = vec![Vec::with_capacity(trials); m];
    let mut queried = Vec::new();
    for _ in 0..trials {
        let mut w: Vec<usize> = (0..m).map(|i| draw(i, &mut rng)).collect();
        let f = space.truth[space.encode(&w)];
        fs.push(f as u8 as f64);
        queried.clear();
        space.tree.run(&w, &mut queried);
        for i in 0..m {
            rev[i].push(queried.contains(&i) as u8 as f64);
            let orig = w[i];
            w[i] = draw(i, &mut rng);
            inf[i].push((space.truth[space.encode(&w)] != f) as u8 as f64);
            w[i] = orig;
        }
    }
    let (mu, se) = mean_se(&fs);
    let var = Estimate { mean: mu * (1.0 - mu), stderr: (1.0 - 2.0 * mu).abs() * se, ..Estimate::from_samples(&fs) };
    Ok(OsssMonteCarlo {
        variance: var,
        revealments: rev.iter().map(|x| Estimate::from_samples(x)).collect(),
        influences: inf.iter().map(|x| Estimate::from_samples(x)).collect(),
    })
}

/// The Voronoi version of the inequality for `{0 ↔ ∂B_n}` and `T_k`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VoronoiOsssReport {
    pub p: f64,
    pub n: f64,
    pub k: f64,
    pub eps: f64,
    pub h: f64,
    pub theta: Estimate,
    pub lhs: Estimate,
    pub rhs: Estimate,
    /// Part of the right-hand side carried by the outermost shell of boxes.
    pub tail: f64,
    pub slack: f64,
    pub combined_stderr: f64,
    pub holds: bool,
    /// Seeds of the three independent estimates (event, revealments, influences).
    pub seeds: [u64; 3],
}

/// `θ_n(1 - θ_n) <= Σ_x δ_x(T_k) Inf_x^ε` with independent estimates of the factors.
pub fn osss_check_voronoi(p: f64, n: f64, k: f64, eps: f64, h: f64, trials: usize, root_seed: u64) -> Result<VoronoiOsssReport> {
    let d = 2;
    let setup = ExplorationSetup::new(n, k, eps, h)?;
    let spec = EventSpec::new(EventKind::OriginToSphere { n }, Engine::Raster { h });
    let seeds = [1u64, 2, 3].map(|w| seed::derive(root_seed, &[w]));
    let theta = estimate_event(d, p, &spec, trials, seeds[0])?;
    let rev = revealment_profile(d, p, &setup, trials, seeds[1])?;
    let inf = influence_profile(d, p, &spec, eps, trials, seeds[2])?;
    if rev.boxes != inf.boxes {
        return Err(Error::State("revealment and influence grids differ".into()));
    }
    let t = theta.mean;
    let lhs = Estimate { mean: t * (1.0 - t), stderr: (1.0 - 2.0 * t).abs() * theta.stderr, ..theta.clone() };
    let dl: Vec<f64> = rev.revealment.iter().map(|e| e.mean).collect();
    let il: Vec<f64> = inf.estimates.iter().map(|e| e.mean).collect();
    let rhs_mean: f64 = dl.iter().zip(&il).map(|(a, b)| a * b).sum();
    // Linearise in each factor; the two samples are independent.
    let by_inf: Vec<f64> = inf.flips.iter().map(|f| f.iter().map(|&l| dl[l as usize]).sum()).collect();
    let by_rev: Vec<f64> = rev.revealed.iter().map(|r| r.iter().map(|&l| il[l as usize]).sum()).collect();
    let se = (mean_se(&by_inf).1.powi(2) + mean_se(&by_rev).1.powi(2)).sqrt();
    let shell = inf.boxes.iter().map(|b| b.0.iter().map(|v| v.abs().max((v + 1).abs())).max().unwrap()).max().unwrap_or(0);
    let tail = inf
        .boxes
        .iter()
        .enumerate()
        .filter(|(_, b)| b.0.iter().any(|v| v.abs().max((v + 1).abs()) == shell))
        .map(|(i, _)| dl[i] * il[i])
        .sum();
    let rhs = Estimate { mean: rhs_mean, stderr: se, trials, root_seed, event: "OSSS right-hand side".into(), params: theta.params.clone() };
    let combined = (lhs.stderr.powi(2) + se.powi(2)).sqrt();
    Ok(VoronoiOsssReport {
        p,
        n,
        k,
        eps,
        h,
        slack: rhs_mean - lhs.mean,
        holds: lhs.mean <= rhs_mean + 3.0 * combined,
        combined_stderr: combined,
        theta,
        lhs,
        rhs,
        tail,
        seeds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(a: i64, b: i64) -> BigRational {
        BigRational::new(a.into(), b.into())
    }

    fn leaf(v: bool) -> DecisionTree {
        DecisionTree::Leaf { leaf: v }
    }

    fn and2() -> FiniteProductSpace {
        let tree = DecisionTree::Query { query: 0, children: vec![leaf(false), DecisionTree::Query { query: 1, children: vec![leaf(false), leaf(true)] }] };
        FiniteProductSpace::new(vec![2, 2], vec![vec![r(1, 2), r(1, 2)]; 2], vec![false, false, false, true], tree).unwrap()
    }

    #[test]
    fn and_of_two_bits() {
        let e = exact_osss(&and2()).unwrap();
        assert_eq!(e.variance, r(3, 16));
        assert_eq!(e.revealments, vec![r(1, 1), r(1, 2)]);
        assert_eq!(e.influences, vec![r(1, 4), r(1, 4)]);
        assert_eq!(e.rhs, r(3, 8));
        assert_eq!(e.slack, r(3, 16));
    }

    #[test]
    fn dictator_and_constant() {
        let tree = DecisionTree::Query { query: 0, children: vec![leaf(false), leaf(true)] };
        let s = FiniteProductSpace::new(vec![2, 2], vec![vec![r(1, 2), r(1, 2)]; 2], vec![false, false, true, true], tree).unwrap();
        let e = exact_osss(&s).unwrap();
        assert_eq!((e.variance.clone(), e.rhs.clone()), (r(1, 4), r(1, 2)));
        assert_eq!(e.revealments, vec![r(1, 1), r(0, 1)]);
        let c = FiniteProductSpace::new(vec![3], vec![vec![r(1, 3); 3]], vec![true; 3], leaf(true)).unwrap();
        let e = exact_osss(&c).unwrap();
        assert!(e.variance.is_zero() && e.rhs.is_zero());
    }

    #[test]
    fn tree_must_determine_f() {
        let s = FiniteProductSpace::new(vec![2, 2], vec![vec![r(1, 2), r(1, 2)]; 2], vec![false, false, false, true], DecisionTree::Query { query: 0, children: vec![leaf(false), leaf(true)] }).unwrap();
        assert!(matches!(exact_osss(&s), Err(Error::Validation(_))));
    }

    #[test]
    fn probabilities_must_sum_to_one() {
        let e = FiniteProductSpace::new(vec![2], vec![vec![r(1, 2), r(1, 3)]], vec![false, true], leaf(false));
        assert!(matches!(e, Err(Error::Parameter(_))));
    }

    #[test]
    fn json_round_trip_with_mixed_probabilities() {
        let js = r#"{"alphabets":[2,2],"probabilities":[[0.5,"1/2"],["1/4",0.75]],
            "truth_table":[0,0,0,1],
            "tree":{"query":0,"children":[{"leaf":false},{"query":1,"children":[{"leaf":false},{"leaf":true}]}]}}"#;
        let s = FiniteProductSpace::from_json(js).unwrap();
        assert_eq!(s.probs[1][1], r(3, 4));
        let back = serde_json::to_string(&s.to_file()).unwrap();
        assert_eq!(FiniteProductSpace::from_json(&back).unwrap(), s);
        assert_eq!(parse_rational("1e-3").unwrap(), r(1, 1000));
        assert_eq!(parse_rational("2.5E1").unwrap(), r(25, 1));
    }

    #[test]
    fn random_instances_never_violate() {
        for e in random_batch(200, 4, 3, 5).unwrap() {
            assert!(e.holds());
        }
    }

    #[test]
    fn monte_carlo_agrees_with_exact() {
        let s = random_instance(3, 3, 21);
        let e = exact_osss(&s).unwrap();
        let mc = monte_carlo_osss(&s, 40000, 4).unwrap();
        for i in 0..s.coordinates() {
            let z = |est: &Estimate, x: &BigRational| (est.mean - x.to_f64().unwrap()).abs() <= 4.0 * est.stderr + 1e-12;
            assert!(z(&mc.revealments[i], &e.revealments[i]));
            assert!(z(&mc.influences[i], &e.influences[i]));
        }
        assert!((mc.variance.mean - e.variance.to_f64().unwrap()).abs() <= 4.0 * mc.variance.stderr + 1e-3);
    }
}

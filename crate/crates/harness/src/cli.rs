use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use voronoi_perc::connectivity::Engine;
use voronoi_perc::Result;

#[derive(Parser, Debug)]
#[command(name = "vperc", version, about = "Reproducible Voronoi percolation experiments")]
pub struct Cli {
    /// Root directory for experiment outputs.
    #[arg(long, global = true, default_value = "results")]
    pub out: PathBuf,
    /// Worker threads (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    /// TOML file with default flags; command-line flags win.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Root seed of every random stream.
    #[arg(long, global = true, default_value_t = 1)]
    pub seed: u64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Sample one coloured configuration, optionally rasterised.
    Sample(SampleArgs),
    /// θ_n(p) on a grid of p and n.
    Theta(ThetaArgs),
    /// Left-right crossing probabilities of Λ_n.
    Crossing(CrossingArgs),
    /// Per-box influences on an ε-grid.
    Influence(InfluenceArgs),
    /// Revealments of the exploration algorithm.
    Explore(ExploreArgs),
    /// Exact OSSS check on finite product spaces.
    OsssExact(OsssExactArgs),
    /// OSSS inequality for {0 ↔ ∂B_n} with the exploration algorithm.
    OsssVoronoi(OsssVoronoiArgs),
    /// Bisection for the critical parameter.
    Pc(PcArgs),
    /// Exponential decay fits of θ_n.
    Decay(DecayArgs),
    /// The θ' ≥ c (n / S_n) θ inequality on a measured table.
    Mlem(MlemArgs),
    /// Integrated sequence families and their dichotomy.
    Lemma(LemmaArgs),
    /// Plot scripts for earlier results.
    Plots(PlotsArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Sample(_) => "sample",
            Command::Theta(_) => "theta",
            Command::Crossing(_) => "crossing",
            Command::Influence(_) => "influence",
            Command::Explore(_) => "explore",
            Command::OsssExact(_) => "osss-exact",
            Command::OsssVoronoi(_) => "osss-voronoi",
            Command::Pc(_) => "pc",
            Command::Decay(_) => "decay",
            Command::Mlem(_) => "mlem",
            Command::Lemma(_) => "lemma",
            Command::Plots(_) => "plots",
        }
    }

    /// Whether a failed check should turn into exit code 4.
    pub fn wants_check(&self) -> bool {
        match self {
            Command::Crossing(a) => a.check,
            Command::Influence(a) => a.check,
            Command::Explore(a) => a.check,
            Command::OsssExact(a) => a.check,
            Command::OsssVoronoi(a) => a.check,
            Command::Pc(a) => a.check,
            Command::Decay(a) => a.check,
            Command::Mlem(a) => a.check,
            Command::Lemma(a) => a.check,
            Command::Sample(_) | Command::Theta(_) | Command::Plots(_) => false,
        }
    }
}

pub const COMMANDS: [&str; 12] = [
    "sample",
    "theta",
    "crossing",
    "influence",
    "explore",
    "osss-exact",
    "osss-voronoi",
    "pc",
    "decay",
    "mlem",
    "lemma",
    "plots",
];

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EngineChoice {
    /// Exact Delaunay adjacency in d = 2, the raster otherwise.
    Auto,
    Raster,
    Delaunay,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct EngineArgs {
    #[arg(long, value_enum, default_value_t = EngineChoice::Auto)]
    pub engine: EngineChoice,
    /// Raster pitch.
    #[arg(long, default_value_t = 0.1)]
    pub h: f64,
}

impl EngineArgs {
    pub fn resolve(&self, d: usize) -> Result<Engine> {
        match (self.engine, d) {
            (EngineChoice::Delaunay, 2) | (EngineChoice::Auto, 2) => Ok(Engine::Delaunay2d),
            (EngineChoice::Delaunay, _) => {
                Err(voronoi_perc::Error::Parameter(format!("the Delaunay engine is planar, got d = {d}")))
            }
            _ => Ok(Engine::Raster { h: self.h }),
        }
    }
}

#[derive(Args, Debug, Serialize)]
pub struct SampleArgs {
    #[arg(long, default_value_t = 2)]
    pub d: usize,
    #[arg(long, default_value_t = 0.5)]
    pub p: f64,
    /// Half-width of the inner window.
    #[arg(long, default_value_t = 8.0)]
    pub l: f64,
    /// Also rasterise the inner window at this pitch.
    #[arg(long)]
    pub h: Option<f64>,
}

#[derive(Args, Debug, Serialize)]
pub struct ThetaArgs {
    #[arg(long, default_value_t = 2)]
    pub d: usize,
    #[arg(long, value_delimiter = ',', default_value = "0.5")]
    pub p: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "8")]
    pub n: Vec<f64>,
    #[arg(long, default_value_t = 1000)]
    pub trials: usize,
    #[command(flatten)]
    pub engine: EngineArgs,
}

#[derive(Args, Debug, Serialize)]
pub struct CrossingArgs {
    #[arg(long, default_value_t = 2)]
    pub d: usize,
    #[arg(long, value_delimiter = ',', default_value = "0.5")]
    pub p: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "8")]
    pub n: Vec<f64>,
    #[arg(long, default_value_t = 4000)]
    pub trials: usize,
    #[command(flatten)]
    pub engine: EngineArgs,
    /// Trials of the h versus h/2 sweep per size (raster only, 0 skips it).
    #[arg(long, default_value_t = 0)]
    pub pitch_trials: usize,
    /// Probability every crossing estimate is checked against.
    #[arg(long, default_value_t = 0.5)]
    pub target: f64,
    #[arg(long)]
    #[serde(skip)]
    pub check: bool,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventChoice {
    /// {0 ↔ ∂B_n}.
    Origin,
    /// Left-right crossing of Λ_n.
    Crossing,
}

#[derive(Args, Debug, Serialize)]
pub struct InfluenceArgs {
    #[arg(long, default_value_t = 2)]
    pub d: usize,
    #[arg(long, default_value_t = 0.5)]
    pub p: f64,
    #[arg(long, value_enum, default_value_t = EventChoice::Origin)]
    pub event: EventChoice,
    #[arg(long, default_value_t = 4.0)]
    pub n: f64,
    #[arg(long, default_value_t = 1.0)]
    pub eps: f64,
    #[arg(long, default_value_t = 200)]
    pub trials: usize,
    #[command(flatten)]
    pub engine: EngineArgs,
    /// Also compare the influence sum with the finite-difference derivative.
    #[arg(long)]
    pub dp: Option<f64>,
    #[arg(long)]
    #[serde(skip)]
    pub check: bool,
}

#[derive(Args, Debug, Serialize)]
pub struct ExploreArgs {
    #[arg(long, default_value_t = 2)]
    pub d: usize,
    #[arg(long, value_delimiter = ',', default_value = "0.5")]
    pub p: Vec<f64>,
    #[arg(long, default_value_t = 8.0)]
    pub n: f64,
    #[arg(long, value_delimiter = ',', default_value = "4")]
    pub k: Vec<f64>,
    #[arg(long, default_value_t = 0.5)]
    pub eps: f64,
    #[arg(long, default_value_t = 0.1)]
    pub h: f64,
    #[arg(long, default_value_t = 200)]
    pub trials: usize,
    /// Boxes enter the ratio only with P̂[x ↔ S_k] above this (default 10 / trials).
    #[arg(long)]
    pub min_prob: Option<f64>,
    #[arg(long)]
    #[serde(skip)]
    pub check: bool,
}

#[derive(Args, Debug, Serialize)]
pub struct OsssExactArgs {
    /// Instance file (JSON).
    #[arg(long, conflicts_with = "random")]
    #[serde(skip)]
    pub instance: Option<PathBuf>,
    /// Check this many random instances instead.
    #[arg(long)]
    pub random: Option<usize>,
    #[arg(long, default_value_t = 4)]
    pub max_coords: usize,
    #[arg(long, default_value_t = 3)]
    pub max_alphabet: usize,
    #[arg(long)]
    #[serde(skip)]
    pub check: bool,
}

#[derive(Args, Debug, Serialize)]
pub struct OsssVoronoiArgs {
    #[arg(long, default_value_t = 0.5)]
    pub p: f64,
    #[arg(long, default_value_t = 8.0)]
    pub n: f64,
    #[arg(long, default_value_t = 4.0)]
    pub k: f64,
    #[arg(long, default_value_t = 0.5)]
    pub eps: f64,
    #[arg(long, default_value_t = 0.1)]
    pub h: f64,
    #[arg(long, default_value_t = 200)]
    pub trials: usize,
    #[arg(long)]
    #[serde(skip)]
    pub check: bool,
}

#[derive(Args, Debug, Serialize)]
pub struct PcArgs {
    #[arg(long, default_value_t = 2)]
    pub d: usize,
    #[arg(long, default_value_t = 0.3)]
    pub lo: f64,
    #[arg(long, default_value_t = 0.7)]
    pub hi: f64,
    /// Box half-widths (d = 2) or radii (d = 3).
    #[arg(long, value_delimiter = ',', default_value = "8,16")]
    pub sizes: Vec<f64>,
    #[arg(long, default_value_t = 2000)]
    pub trials: usize,
    #[arg(long, default_value_t = 0.02)]
    pub tolerance: f64,
    #[command(flatten)]
    pub engine: EngineArgs,
    /// Value the final interval must contain.
    #[arg(long, default_value_t = 0.5)]
    pub expect: f64,
    #[arg(long)]
    #[serde(skip)]
    pub check: bool,
}

#[derive(Args, Debug, Serialize)]
pub struct DecayArgs {
    #[arg(long, default_value_t = 2)]
    pub d: usize,
    /// The smallest value is the subcritical reference.
    #[arg(long, value_delimiter = ',', default_value = "0.35,0.5")]
    pub p: Vec<f64>,
    #[arg(long, default_value_t = 4)]
    pub n_min: usize,
    #[arg(long, default_value_t = 24)]
    pub n_max: usize,
    #[arg(long, default_value_t = 4000)]
    pub trials: usize,
    #[command(flatten)]
    pub engine: EngineArgs,
    /// Required ratio between the reference slope and every other slope.
    #[arg(long, default_value_t = 5.0)]
    pub factor: f64,
    #[arg(long)]
    #[serde(skip)]
    pub check: bool,
}

#[derive(Args, Debug, Serialize)]
pub struct MlemArgs {
    #[arg(long, default_value_t = 2)]
    pub d: usize,
    #[arg(long, default_value_t = 0.3)]
    pub p_lo: f64,
    #[arg(long, default_value_t = 0.7)]
    pub p_hi: f64,
    #[arg(long, default_value_t = 9)]
    pub p_steps: usize,
    #[arg(long, default_value_t = 16)]
    pub n_max: usize,
    #[arg(long, default_value_t = 0.02)]
    pub dp: f64,
    #[arg(long, default_value_t = 4000)]
    pub trials: usize,
    #[command(flatten)]
    pub engine: EngineArgs,
    #[arg(long)]
    #[serde(skip)]
    pub check: bool,
}

#[derive(Args, Debug, Serialize)]
pub struct LemmaArgs {
    #[arg(long, default_value_t = 64)]
    pub n_max: usize,
    /// Boundary `f_n(0) = a e^{-b n}` given as `a:b`; repeatable.
    #[arg(long = "boundary", default_values = ["0.5:0.2", "0.3:0.4", "0.6:0.3"])]
    pub boundaries: Vec<String>,
    #[arg(long, default_value_t = 0.05)]
    pub margin: f64,
    #[arg(long, default_value_t = 0.02)]
    pub tolerance: f64,
    #[arg(long)]
    #[serde(skip)]
    pub check: bool,
}

#[derive(Args, Debug, Serialize)]
pub struct PlotsArgs {
    /// Result directories written by earlier runs.
    #[serde(skip)]
    pub inputs: Vec<PathBuf>,
}

//! Flag plumbing shared by the subcommands: problem lookup, scheme and
//! tolerance parsing, and solver-option assembly.

use std::path::Path;

use clap::{Args, ValueEnum};
use marcher::adapt::{AdaptConfig, Controller};
use marcher::monitor::EmitFormat;
use marcher::options::{Atol, FinalTimePolicy, SolveOptions, ToleranceSpec};
use marcher::problems::{instance, Instance, ProblemParams};
use marcher::{parse_scheme, Error, Result, Scheme};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AdaptChoice {
    /// Fixed step at --dt.
    None,
    /// Dead-beat controller with the standard clip and safety constants.
    Basic,
    /// H211b digital filter.
    Dsp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FinalTimeChoice {
    /// Let the last step cross max_time and stop past it.
    Stepover,
    /// Step past max_time, then evaluate the dense interpolant at it.
    Interpolate,
    /// Shorten the last step to land on max_time exactly.
    Matchstep,
}

impl FinalTimeChoice {
    pub fn policy(self) -> FinalTimePolicy {
        match self {
            FinalTimeChoice::Stepover => FinalTimePolicy::StepOver,
            FinalTimeChoice::Interpolate => FinalTimePolicy::Interpolate,
            FinalTimeChoice::Matchstep => FinalTimePolicy::MatchStep,
        }
    }
}

/// Flags shared by `solve` and `events`.
#[derive(Debug, Args)]
pub struct RunArgs {
    /// Problem library entry; see the README for the list.
    #[arg(long)]
    pub problem: String,

    /// Scheme as family:name, e.g. rosw:ra34pw2, rk:rk4, theta:cn, bdf:2.
    #[arg(long)]
    pub scheme: String,

    /// Initial (or fixed) step size; defaults to the problem's convention.
    #[arg(long)]
    pub dt: Option<f64>,

    /// Integration horizon; defaults to the problem's convention.
    #[arg(long = "max-time")]
    pub max_time: Option<f64>,

    /// Accepted-step budget.
    #[arg(long = "max-steps", default_value_t = 100_000)]
    pub max_steps: usize,

    /// Relative tolerance for the adaptive controller.
    #[arg(long, default_value_t = 1e-6)]
    pub rtol: f64,

    /// Absolute tolerance: a scalar, or a comma list with one entry per
    /// state component.
    #[arg(long, default_value = "1e-6")]
    pub atol: String,

    #[arg(long, value_enum, default_value_t = AdaptChoice::Basic)]
    pub adapt: AdaptChoice,

    #[arg(long = "final-time", value_enum, default_value_t = FinalTimeChoice::Matchstep)]
    pub final_time: FinalTimeChoice,

    /// Stream one record per step attempt to this file (.csv or .jsonl).
    #[arg(long)]
    pub monitor: Option<std::path::PathBuf>,

    /// Problem parameter overrides as a k=v comma list; keys: k, lambda,
    /// stiff, grid.
    #[arg(long = "seed-params")]
    pub seed_params: Option<String>,
}

/// A resolved run: the problem instance, scheme, and solver options.
pub struct Setup {
    pub inst: Instance,
    pub scheme: Scheme,
    pub opts: SolveOptions,
    pub adapt: Option<AdaptConfig>,
}

pub fn build(args: &RunArgs) -> Result<Setup> {
    let params = parse_params(args.seed_params.as_deref())?;
    let inst = instance(&args.problem, params)?;
    let scheme = parse_scheme(&args.scheme)?;
    let opts = SolveOptions {
        t0: 0.0,
        dt0: args.dt.unwrap_or(inst.default_dt),
        max_time: args.max_time.unwrap_or(inst.default_max_time),
        max_steps: args.max_steps,
        final_time: args.final_time.policy(),
        max_nonlinear_failures: None,
        stage_guess_extrapolate: false,
    };
    let adapt = match args.adapt {
        AdaptChoice::None => None,
        AdaptChoice::Basic => Some(AdaptConfig::new(ToleranceSpec {
            rtol: args.rtol,
            atol: parse_atol(&args.atol)?,
        })),
        AdaptChoice::Dsp => {
            let mut a = AdaptConfig::new(ToleranceSpec {
                rtol: args.rtol,
                atol: parse_atol(&args.atol)?,
            });
            a.controller = Controller::h211b();
            Some(a)
        }
    };
    Ok(Setup {
        inst,
        scheme,
        opts,
        adapt,
    })
}

/// Scalar or comma-list absolute tolerance.
pub fn parse_atol(text: &str) -> Result<Atol> {
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    let mut values = Vec::with_capacity(parts.len());
    for part in &parts {
        let v: f64 = part.parse().map_err(|_| {
            Error::Config(format!("cannot parse absolute tolerance entry '{part}'"))
        })?;
        values.push(v);
    }
    match values.as_slice() {
        [one] => Ok(Atol::Scalar(*one)),
        _ => Ok(Atol::Vector(values)),
    }
}

/// `k=v` comma list over the problem-parameter knobs.
pub fn parse_params(text: Option<&str>) -> Result<ProblemParams> {
    let mut params = ProblemParams::default();
    let Some(text) = text else {
        return Ok(params);
    };
    for pair in text.split(',').filter(|p| !p.trim().is_empty()) {
        let Some((key, val)) = pair.split_once('=') else {
            return Err(Error::Config(format!(
                "seed parameter '{pair}' is not of the form key=value"
            )));
        };
        let (key, val) = (key.trim(), val.trim());
        fn bad(key: &str, val: &str) -> Error {
            Error::Config(format!("cannot parse value '{val}' for parameter '{key}'"))
        }
        match key {
            "k" => params.k = val.parse().map_err(|_| bad(key, val))?,
            "lambda" => params.lambda = val.parse().map_err(|_| bad(key, val))?,
            "stiff" => params.stiff = val.parse().map_err(|_| bad(key, val))?,
            "grid" => params.grid = val.parse().map_err(|_| bad(key, val))?,
            other => {
                return Err(Error::Config(format!(
                    "unknown seed parameter '{other}'; known keys: k, lambda, stiff, grid"
                )))
            }
        }
    }
    Ok(params)
}

/// Monitor file format from the path extension.
pub fn monitor_format(path: &Path) -> Result<EmitFormat> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("csv") => Ok(EmitFormat::Csv),
        Some("jsonl") => Ok(EmitFormat::Jsonl),
        _ => Err(Error::Config(format!(
            "monitor path '{}' must end in .csv or .jsonl",
            path.display()
        ))),
    }
}

/// Componentwise relative difference against `reference`, floored at unit
/// scale so near-zero references do not blow up the ratio.
pub fn rel_inf(x: &[f64], reference: &[f64]) -> f64 {
    let scale = reference
        .iter()
        .fold(1.0_f64, |m, v| m.max(v.abs()));
    x.iter()
        .zip(reference)
        .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()))
        / scale
}

//! Benchmark CLI for the stepsize labs.
//!
//! Subcommands map one-to-one onto the library labs: `bounds` (deterministic
//! `1/n` curve and envelopes), `single` (single-estimate prediction-error
//! benchmark), `mdp` / `mdp-finite` (tabular suboptimality experiments), and
//! `inventory` (post-decision-state trading). Every run writes CSV files
//! whose first line records the artifact version and the full canonical
//! configuration; given the same seed, reruns are byte-identical.
//!
//! `STEPWISE_THREADS` caps worker-thread parallelism. Exit codes: 0 on
//! success, 1 on a runtime failure, 2 on argument errors.

mod plot;

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use stepwise::bounds::{
    iterations_to_fraction, lower_bound, upper_bound, BoundsConfig, VbarCurve,
};
use stepwise::error::{Error, Result};
use stepwise::inventory::{training_experiment, InventoryConfig, InventoryRule};
use stepwise::mdp::{
    finite_subopt_matrix, infinite_subopt_matrix, summarize_subopt, TabularMdp,
};
use stepwise::report::{file_label, write_csv};
use stepwise::rng::stream_rng;
use stepwise::rules::RuleKind;
use stepwise::single_state::{estimate_objective, RewardDist, RuleSelect, SingleStateConfig};

const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Stream index reserved for MDP generation; training seeds use streams
/// `0..n_seeds` and evaluation paths live above `2^32`.
const GENERATOR_STREAM: u64 = 1 << 40;

#[derive(Parser, Debug)]
#[command(
    name = "stepwise",
    version,
    about = "Stepsize benchmarks for approximate value iteration"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, PartialEq)]
enum Command {
    /// Deterministic 1/n curve, analytic envelopes, iterations-to-threshold.
    Bounds(BoundsArgs),
    /// Single-estimate prediction-error benchmark.
    Single(SingleArgs),
    /// Infinite-horizon tabular MDP suboptimality experiment.
    Mdp(MdpArgs),
    /// Finite-horizon tabular MDP suboptimality experiment.
    MdpFinite(MdpFiniteArgs),
    /// Continuous-price inventory experiment.
    Inventory(InventoryArgs),
}

/// Rule spec plus the known-parameter diagnostic variants
/// (`osavi-known[:c=..:sigma2=..]`).
#[derive(Debug, Clone, Copy, PartialEq)]
enum RuleArg {
    Kind(RuleKind),
    Known { c: Option<f64>, sigma_sq: Option<f64> },
}

impl RuleArg {
    fn parse(spec: &str) -> std::result::Result<Self, String> {
        if spec == "osavi-known" {
            return Ok(RuleArg::Known { c: None, sigma_sq: None });
        }
        if let Some(rest) = spec.strip_prefix("osavi-known:") {
            let mut c = None;
            let mut sigma_sq = None;
            for part in rest.split(':') {
                let (key, value) = part
                    .split_once('=')
                    .ok_or_else(|| format!("expected key=value, got `{part}`"))?;
                let value: f64 =
                    value.parse().map_err(|_| format!("non-numeric value in `{part}`"))?;
                match key {
                    "c" => c = Some(value),
                    "sigma2" if value >= 0.0 => sigma_sq = Some(value),
                    "sigma2" => return Err("sigma2 must be nonnegative".into()),
                    other => return Err(format!("unknown key `{other}` for osavi-known")),
                }
            }
            return Ok(RuleArg::Known { c, sigma_sq });
        }
        RuleKind::parse(spec).map(RuleArg::Kind).map_err(|e| e.to_string())
    }

    fn canonical(&self) -> String {
        match self {
            RuleArg::Kind(kind) => kind.to_string(),
            RuleArg::Known { c, sigma_sq } => {
                let mut spec = String::from("osavi-known");
                if let Some(c) = c {
                    let _ = write!(spec, ":c={c}");
                }
                if let Some(s) = sigma_sq {
                    let _ = write!(spec, ":sigma2={s}");
                }
                spec
            }
        }
    }

    /// Known-parameter selections must carry explicit values outside the
    /// single-estimate lab.
    fn required_known(&self) -> Result<Option<(f64, f64)>> {
        match self {
            RuleArg::Kind(_) => Ok(None),
            RuleArg::Known { c: Some(c), sigma_sq: Some(s) } => Ok(Some((*c, *s))),
            RuleArg::Known { .. } => Err(Error::InvalidParameter(
                "osavi-known needs explicit c and sigma2 here, e.g. osavi-known:c=4.6:sigma2=30"
                    .into(),
            )),
        }
    }
}

fn parse_rule(s: &str) -> std::result::Result<RuleArg, String> {
    RuleArg::parse(s)
}

fn parse_gamma(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| "gamma must be a number".to_string())?;
    if (0.0..1.0).contains(&v) {
        Ok(v)
    } else {
        Err("gamma must be in [0,1)".into())
    }
}

fn parse_gamma_open(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| "gamma must be a number".to_string())?;
    if v > 0.0 && v < 1.0 {
        Ok(v)
    } else {
        Err("gamma must be in (0,1)".into())
    }
}

fn parse_fraction(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| "fraction must be a number".to_string())?;
    if v > 0.0 && v < 1.0 {
        Ok(v)
    } else {
        Err("fraction must be in (0,1)".into())
    }
}

fn parse_nonneg(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| "expected a number".to_string())?;
    if v >= 0.0 {
        Ok(v)
    } else {
        Err("value must be nonnegative".into())
    }
}

/// Positive integer, scientific notation welcome (`1e4`).
fn parse_count(s: &str) -> std::result::Result<u64, String> {
    let v: f64 = s.parse().map_err(|_| "expected a positive integer".to_string())?;
    if v >= 1.0 && v <= 9e15 && v.fract() == 0.0 {
        Ok(v as u64)
    } else {
        Err("expected a positive integer (scientific notation allowed)".into())
    }
}

fn parse_dist(s: &str) -> std::result::Result<RewardDist, String> {
    match s {
        "normal" => Ok(RewardDist::Normal),
        "uniform" => Ok(RewardDist::Uniform),
        other => Err(format!("unknown distribution `{other}` (use normal|uniform)")),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum HorizonArg {
    Infinite,
    Finite(u64),
}

fn parse_horizon(s: &str) -> std::result::Result<HorizonArg, String> {
    if s == "inf" || s == "infinite" {
        return Ok(HorizonArg::Infinite);
    }
    let t = parse_count(s)?;
    if t >= 2 {
        Ok(HorizonArg::Finite(t))
    } else {
        Err("horizon must be `inf` or an integer >= 2".into())
    }
}

#[derive(Args, Debug, PartialEq)]
struct BoundsArgs {
    /// Discount factor in (0,1).
    #[arg(long, value_parser = parse_gamma_open)]
    gamma: f64,
    /// Deterministic per-iteration reward.
    #[arg(long, default_value_t = 1.0)]
    c: f64,
    /// Anchor of the upper envelope (n0 >= 1).
    #[arg(long, default_value_t = 1.0)]
    n0: f64,
    /// Target fraction of the limiting value.
    #[arg(long, default_value_t = 0.99, value_parser = parse_fraction)]
    frac: f64,
    /// Largest iterate on the emitted curve.
    #[arg(long, default_value = "1e6", value_parser = parse_count)]
    n_max: u64,
    /// Number of log-spaced curve points.
    #[arg(long, default_value_t = 200)]
    points: usize,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Render an SVG chart next to each CSV.
    #[arg(long)]
    plot: bool,
}

#[derive(Args, Debug, PartialEq)]
struct SingleArgs {
    /// Stepsize rule spec, e.g. `osavi:nu=0.2`, `harmonic:a=10`, `1overN`,
    /// or `osavi-known`.
    #[arg(long, default_value = "osavi:nu=0.2", value_parser = parse_rule)]
    rule: RuleArg,
    #[arg(long, default_value_t = 0.9, value_parser = parse_gamma)]
    gamma: f64,
    /// Mean reward.
    #[arg(long, default_value_t = 1.0)]
    c: f64,
    /// Reward standard deviation.
    #[arg(long, default_value_t = 1.0, value_parser = parse_nonneg)]
    sigma: f64,
    /// Initial approximation.
    #[arg(long, default_value_t = 0.0)]
    v0: f64,
    /// Iterations per replication.
    #[arg(long, default_value = "1e4", value_parser = parse_count)]
    iters: u64,
    /// Replications (outer loop).
    #[arg(long, default_value = "1e3", value_parser = parse_count)]
    reps: u64,
    /// Reward distribution: normal|uniform.
    #[arg(long, default_value = "normal", value_parser = parse_dist)]
    dist: RewardDist,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    plot: bool,
}

#[derive(Args, Debug, PartialEq)]
struct MdpArgs {
    #[arg(long, default_value_t = 0.9, value_parser = parse_gamma)]
    gamma: f64,
    #[arg(long, default_value_t = 100)]
    states: usize,
    #[arg(long, default_value_t = 10)]
    actions: usize,
    /// Reachable successors per state-action pair.
    #[arg(long, default_value_t = 10)]
    reachable: usize,
    #[arg(long, default_value = "osavi:nu=0.2", value_parser = parse_rule)]
    rule: RuleArg,
    /// Training iterations per seed.
    #[arg(long, default_value = "1e4", value_parser = parse_count)]
    iters: u64,
    /// Independent training seeds (streams).
    #[arg(long, default_value_t = 100)]
    seeds: u64,
    /// Iterations at which the greedy policy is evaluated.
    #[arg(long, value_delimiter = ',', default_value = "100,1000,10000", value_parser = parse_count)]
    checkpoints: Vec<u64>,
    /// Exact-solver tolerance.
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    plot: bool,
}

#[derive(Args, Debug, PartialEq)]
struct MdpFiniteArgs {
    /// Number of stages (decisions run at periods 1..=horizon-1).
    #[arg(long, default_value = "20", value_parser = parse_count)]
    horizon: u64,
    #[arg(long, default_value_t = 0.99, value_parser = parse_gamma)]
    gamma: f64,
    #[arg(long, default_value_t = 100)]
    states: usize,
    #[arg(long, default_value_t = 10)]
    actions: usize,
    #[arg(long, default_value_t = 10)]
    reachable: usize,
    #[arg(long, default_value = "osavi-finite:nu=0.2", value_parser = parse_rule)]
    rule: RuleArg,
    #[arg(long, default_value = "1e4", value_parser = parse_count)]
    iters: u64,
    #[arg(long, default_value_t = 100)]
    seeds: u64,
    #[arg(long, value_delimiter = ',', default_value = "100,1000,10000", value_parser = parse_count)]
    checkpoints: Vec<u64>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    plot: bool,
}

#[derive(Args, Debug, PartialEq)]
struct InventoryArgs {
    #[arg(long, default_value = "osavi:nu=0.2", value_parser = parse_rule)]
    rule: RuleArg,
    /// Training iterations.
    #[arg(long, default_value = "1e4", value_parser = parse_count)]
    iters: u64,
    /// Offline evaluation sample paths per checkpoint.
    #[arg(long, default_value = "25000", value_parser = parse_count)]
    eval_paths: u64,
    /// `inf` or a stage count >= 2.
    #[arg(long, default_value = "inf", value_parser = parse_horizon)]
    horizon: HorizonArg,
    #[arg(long, default_value_t = 0.99, value_parser = parse_gamma)]
    gamma: f64,
    /// Total inventory capacity (reward scale).
    #[arg(long, default_value_t = 1.0)]
    capacity: f64,
    /// Checkpoints at which the greedy policy is evaluated; defaults to the
    /// training length.
    #[arg(long, value_delimiter = ',', value_parser = parse_count)]
    checkpoints: Option<Vec<u64>>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    plot: bool,
}

fn float_arg(value: f64) -> String {
    format!("{value}")
}

impl BoundsArgs {
    fn to_args(&self) -> Vec<String> {
        let mut args = vec![
            "--gamma".into(),
            float_arg(self.gamma),
            "--c".into(),
            float_arg(self.c),
            "--n0".into(),
            float_arg(self.n0),
            "--frac".into(),
            float_arg(self.frac),
            "--n-max".into(),
            self.n_max.to_string(),
            "--points".into(),
            self.points.to_string(),
            "--out".into(),
            self.out.display().to_string(),
        ];
        if self.plot {
            args.push("--plot".into());
        }
        args
    }
}

impl SingleArgs {
    fn to_args(&self) -> Vec<String> {
        let mut args = vec![
            "--rule".into(),
            self.rule.canonical(),
            "--gamma".into(),
            float_arg(self.gamma),
            "--c".into(),
            float_arg(self.c),
            "--sigma".into(),
            float_arg(self.sigma),
            "--v0".into(),
            float_arg(self.v0),
            "--iters".into(),
            self.iters.to_string(),
            "--reps".into(),
            self.reps.to_string(),
            "--dist".into(),
            match self.dist {
                RewardDist::Normal => "normal".into(),
                RewardDist::Uniform => "uniform".into(),
            },
            "--seed".into(),
            self.seed.to_string(),
            "--out".into(),
            self.out.display().to_string(),
        ];
        if self.plot {
            args.push("--plot".into());
        }
        args
    }
}

impl MdpArgs {
    fn to_args(&self) -> Vec<String> {
        let mut args = vec![
            "--gamma".into(),
            float_arg(self.gamma),
            "--states".into(),
            self.states.to_string(),
            "--actions".into(),
            self.actions.to_string(),
            "--reachable".into(),
            self.reachable.to_string(),
            "--rule".into(),
            self.rule.canonical(),
            "--iters".into(),
            self.iters.to_string(),
            "--seeds".into(),
            self.seeds.to_string(),
            "--checkpoints".into(),
            join_counts(&self.checkpoints),
            "--tol".into(),
            float_arg(self.tol),
            "--seed".into(),
            self.seed.to_string(),
            "--out".into(),
            self.out.display().to_string(),
        ];
        if self.plot {
            args.push("--plot".into());
        }
        args
    }
}

impl MdpFiniteArgs {
    fn to_args(&self) -> Vec<String> {
        let mut args = vec![
            "--horizon".into(),
            self.horizon.to_string(),
            "--gamma".into(),
            float_arg(self.gamma),
            "--states".into(),
            self.states.to_string(),
            "--actions".into(),
            self.actions.to_string(),
            "--reachable".into(),
            self.reachable.to_string(),
            "--rule".into(),
            self.rule.canonical(),
            "--iters".into(),
            self.iters.to_string(),
            "--seeds".into(),
            self.seeds.to_string(),
            "--checkpoints".into(),
            join_counts(&self.checkpoints),
            "--seed".into(),
            self.seed.to_string(),
            "--out".into(),
            self.out.display().to_string(),
        ];
        if self.plot {
            args.push("--plot".into());
        }
        args
    }
}

impl InventoryArgs {
    fn to_args(&self) -> Vec<String> {
        let mut args = vec![
            "--rule".into(),
            self.rule.canonical(),
            "--iters".into(),
            self.iters.to_string(),
            "--eval-paths".into(),
            self.eval_paths.to_string(),
            "--horizon".into(),
            match self.horizon {
                HorizonArg::Infinite => "inf".into(),
                HorizonArg::Finite(t) => t.to_string(),
            },
            "--gamma".into(),
            float_arg(self.gamma),
            "--capacity".into(),
            float_arg(self.capacity),
        ];
        if let Some(checkpoints) = &self.checkpoints {
            args.push("--checkpoints".into());
            args.push(join_counts(checkpoints));
        }
        args.push("--seed".into());
        args.push(self.seed.to_string());
        args.push("--out".into());
        args.push(self.out.display().to_string());
        if self.plot {
            args.push("--plot".into());
        }
        args
    }
}

fn join_counts(counts: &[u64]) -> String {
    counts.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(",")
}

fn comment_line(subcommand: &str, args: &[String]) -> String {
    format!("stepwise {VERSION} | {subcommand} {}", args.join(" "))
}

fn sorted_checkpoints(raw: &[u64], iters: u64) -> Result<Vec<u64>> {
    let mut checkpoints: Vec<u64> = raw.to_vec();
    checkpoints.sort_unstable();
    checkpoints.dedup();
    if checkpoints.iter().any(|&c| c == 0 || c > iters) {
        return Err(Error::InvalidParameter(format!(
            "checkpoints must lie in 1..=iters ({iters})"
        )));
    }
    Ok(checkpoints)
}

fn run_bounds(args: &BoundsArgs) -> Result<()> {
    let cfg = BoundsConfig {
        c: args.c,
        gamma: args.gamma,
        n0: args.n0,
        threshold_frac: args.frac,
    };
    cfg.validate()?;
    if args.points < 2 {
        return Err(Error::InvalidParameter("need at least 2 curve points".into()));
    }
    fs::create_dir_all(&args.out)?;
    let comment = comment_line("bounds", &args.to_args());

    let mut curve = VbarCurve::new(args.c, args.gamma)?;
    let anchor = curve.interp(args.n0);
    let v_star = args.c / (1.0 - args.gamma);

    let mut grid: Vec<u64> = (0..args.points)
        .map(|i| {
            let exponent = (args.n_max as f64).log10() * i as f64 / (args.points - 1) as f64;
            10f64.powf(exponent).round().max(1.0) as u64
        })
        .collect();
    grid.sort_unstable();
    grid.dedup();

    let mut rows = Vec::with_capacity(grid.len());
    let mut series: [Vec<(f64, f64)>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    for &n in &grid {
        let vbar = curve.value(n);
        let lower = lower_bound(n as f64, args.c, args.gamma);
        let upper = if (n as f64) < args.n0 {
            v_star
        } else {
            upper_bound(n as f64, args.c, args.gamma, args.n0, anchor)?
        };
        rows.push(format!("{n},{vbar},{lower},{upper}"));
        series[0].push((n as f64, vbar));
        series[1].push((n as f64, lower));
        series[2].push((n as f64, upper));
    }
    let curve_path = args.out.join("bounds_curve.csv");
    write_csv(&curve_path, &comment, "n,vbar,lower,upper", rows)?;

    let iters = iterations_to_fraction(&cfg)?;
    write_csv(
        args.out.join("iterations.csv"),
        &comment,
        "gamma,iters_lower,iters_upper",
        [format!("{},{},{}", args.gamma, iters.iters_lower, iters.iters_upper)],
    )?;

    if args.plot {
        let labels = ["vbar", "lower", "upper"];
        let chart = plot::line_chart_svg(
            &series
                .into_iter()
                .zip(labels)
                .map(|(points, label)| plot::Series { label: label.into(), points })
                .collect::<Vec<_>>(),
            &plot::ChartOptions {
                title: format!("1/n curve and envelopes (gamma={})", args.gamma),
                x_label: "n".into(),
                y_label: "value".into(),
                log_x: true,
                log_y: false,
            },
        );
        fs::write(curve_path.with_extension("svg"), chart)?;
    }
    Ok(())
}

fn run_single(args: &SingleArgs) -> Result<()> {
    let config = SingleStateConfig {
        c: args.c,
        sigma: args.sigma,
        gamma: args.gamma,
        v_bar0: args.v0,
        n_iters: args.iters as usize,
        n_reps: args.reps as usize,
        seed: args.seed,
        reward_dist: args.dist,
    };
    let rule = match args.rule {
        RuleArg::Kind(kind) => RuleSelect::Kind(kind),
        RuleArg::Known { c: None, sigma_sq: None } => RuleSelect::OsaviKnown,
        RuleArg::Known { .. } => {
            return Err(Error::InvalidParameter(
                "the single lab takes known parameters from --c/--sigma; use bare osavi-known"
                    .into(),
            ))
        }
    };
    fs::create_dir_all(&args.out)?;
    let comment = comment_line("single", &args.to_args());
    let points = estimate_objective(&config, &rule)?;

    let label = args.rule.canonical();
    let path = args.out.join(format!(
        "single_{}_{}_{}.csv",
        file_label(&label),
        args.gamma,
        args.sigma
    ));
    write_csv(
        &path,
        &comment,
        "n,rule,objective,stderr",
        points.iter().map(|p| format!("{},{label},{},{}", p.n, p.objective, p.stderr)),
    )?;

    if args.plot {
        let chart = plot::line_chart_svg(
            &[plot::Series {
                label,
                points: points.iter().map(|p| (p.n as f64, p.objective)).collect(),
            }],
            &plot::ChartOptions {
                title: format!("prediction error (gamma={}, sigma={})", args.gamma, args.sigma),
                x_label: "n".into(),
                y_label: "objective".into(),
                log_x: true,
                log_y: true,
            },
        );
        fs::write(path.with_extension("svg"), chart)?;
    }
    Ok(())
}

fn subopt_csv(
    out: &PathBuf,
    file: String,
    comment: &str,
    points: &[stepwise::mdp::SuboptPoint],
    plot_flag: bool,
    title: String,
) -> Result<()> {
    let path = out.join(file);
    write_csv(
        &path,
        comment,
        "checkpoint,mean_subopt,stderr",
        points.iter().map(|p| format!("{},{},{}", p.checkpoint, p.mean, p.stderr)),
    )?;
    if plot_flag {
        let chart = plot::line_chart_svg(
            &[plot::Series {
                label: "mean suboptimality".into(),
                points: points.iter().map(|p| (p.checkpoint as f64, p.mean)).collect(),
            }],
            &plot::ChartOptions {
                title,
                x_label: "iterations".into(),
                y_label: "suboptimality".into(),
                log_x: true,
                log_y: false,
            },
        );
        fs::write(path.with_extension("svg"), chart)?;
    }
    Ok(())
}

fn run_mdp(args: &MdpArgs) -> Result<()> {
    let checkpoints = sorted_checkpoints(&args.checkpoints, args.iters)?;
    let rule = match args.rule.required_known()? {
        Some((c, sigma_sq)) => stepwise::mdp::MdpRule::OsaviKnown { c, sigma_sq },
        None => match args.rule {
            RuleArg::Kind(kind) => stepwise::mdp::MdpRule::Kind(kind),
            RuleArg::Known { .. } => unreachable!(),
        },
    };
    fs::create_dir_all(&args.out)?;
    let comment = comment_line("mdp", &args.to_args());

    let mut gen_rng = stream_rng(args.seed, GENERATOR_STREAM);
    let mdp = TabularMdp::generate(args.states, args.actions, args.reachable, &mut gen_rng)?;
    let solution = mdp.value_iteration(args.gamma, args.tol)?;
    let matrix = infinite_subopt_matrix(
        &mdp,
        args.gamma,
        &rule,
        args.iters,
        &checkpoints,
        args.seeds,
        args.seed,
        &solution.values,
    )?;
    let points = summarize_subopt(&checkpoints, &matrix);
    subopt_csv(
        &args.out,
        format!("subopt_{}_{}.csv", file_label(&args.rule.canonical()), args.gamma),
        &comment,
        &points,
        args.plot,
        format!("suboptimality ({}, gamma={})", args.rule.canonical(), args.gamma),
    )
}

fn run_mdp_finite(args: &MdpFiniteArgs) -> Result<()> {
    let checkpoints = sorted_checkpoints(&args.checkpoints, args.iters)?;
    let horizon = args.horizon as usize;
    let rule = match args.rule.required_known()? {
        Some((c, sigma_sq)) => stepwise::mdp::MdpRule::OsaviKnown { c, sigma_sq },
        None => match args.rule {
            RuleArg::Kind(kind) => stepwise::mdp::MdpRule::Kind(kind),
            RuleArg::Known { .. } => unreachable!(),
        },
    };
    fs::create_dir_all(&args.out)?;
    let comment = comment_line("mdp-finite", &args.to_args());

    let mut gen_rng = stream_rng(args.seed, GENERATOR_STREAM);
    let mdp = TabularMdp::generate(args.states, args.actions, args.reachable, &mut gen_rng)?;
    let exact = mdp.backward_dp(args.gamma, horizon)?;
    let matrix = finite_subopt_matrix(
        &mdp,
        args.gamma,
        horizon,
        &rule,
        args.iters,
        &checkpoints,
        args.seeds,
        args.seed,
        exact.at(1),
    )?;
    let points = summarize_subopt(&checkpoints, &matrix);
    subopt_csv(
        &args.out,
        format!(
            "subopt_finite_{}_{}.csv",
            file_label(&args.rule.canonical()),
            args.gamma
        ),
        &comment,
        &points,
        args.plot,
        format!(
            "finite-horizon suboptimality ({}, T={})",
            args.rule.canonical(),
            args.horizon
        ),
    )
}

fn run_inventory(args: &InventoryArgs) -> Result<()> {
    let raw = args.checkpoints.clone().unwrap_or_else(|| vec![args.iters]);
    let checkpoints = sorted_checkpoints(&raw, args.iters)?;
    let cfg = InventoryConfig { gamma: args.gamma, capacity: args.capacity, ..Default::default() };
    let rule = match args.rule.required_known()? {
        Some((c, sigma_sq)) => InventoryRule::OsaviKnown { c, sigma_sq },
        None => match args.rule {
            RuleArg::Kind(kind) => InventoryRule::Kind(kind),
            RuleArg::Known { .. } => unreachable!(),
        },
    };
    let horizon = match args.horizon {
        HorizonArg::Infinite => None,
        HorizonArg::Finite(t) => Some(t as usize),
    };
    fs::create_dir_all(&args.out)?;
    let comment = comment_line("inventory", &args.to_args());

    let points = training_experiment(
        &cfg,
        &rule,
        &checkpoints,
        horizon,
        args.eval_paths as usize,
        args.seed,
    )?;
    let path = args
        .out
        .join(format!("inventory_{}.csv", file_label(&args.rule.canonical())));
    write_csv(
        &path,
        &comment,
        "checkpoint,mean_reward,stderr",
        points.iter().map(|p| format!("{},{},{}", p.checkpoint, p.mean_reward, p.stderr)),
    )?;

    if args.plot {
        let chart = plot::line_chart_svg(
            &[plot::Series {
                label: args.rule.canonical(),
                points: points.iter().map(|p| (p.checkpoint as f64, p.mean_reward)).collect(),
            }],
            &plot::ChartOptions {
                title: "offline policy value".into(),
                x_label: "training iterations".into(),
                y_label: "mean total reward".into(),
                log_x: false,
                log_y: false,
            },
        );
        fs::write(path.with_extension("svg"), chart)?;
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Bounds(args) => run_bounds(args),
        Command::Single(args) => run_single(args),
        Command::Mdp(args) => run_mdp(args),
        Command::MdpFinite(args) => run_mdp_finite(args),
        Command::Inventory(args) => run_inventory(args),
    }
}

fn main() -> ExitCode {
    if let Ok(threads) = std::env::var("STEPWISE_THREADS") {
        match threads.parse::<usize>() {
            Ok(n) if n > 0 => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => {
                eprintln!("error: STEPWISE_THREADS must be a positive integer");
                return ExitCode::from(2);
            }
        }
    }
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(1)
        }
    }
}

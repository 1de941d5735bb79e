//! Command-line front end: `gen`, `test`, `confset`, `power`, `localpower`
//! and `reproduce`.

use std::ffi::OsString;
use std::io::Write;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::{Error, Result};
use crate::inference::{confidence_set, pvalue_curve, PanelStatistic, ThetaGrid};
use crate::io::{
    open_output, read_panel_csv, write_panel_csv, write_pvalue_curves_csv, write_results, Format,
    Results,
};
use crate::model::{generate_panel, DgpConfig, DgpVariant, Drift};
use crate::moments::MomentSet;
use crate::montecarlo::{
    local_power_curve, power_curve, replication_seed, ExperimentSpec, PowerTable, Sweep, TestSpec,
};
use crate::robust::{robust_gmm_ar, WeightMode};
use crate::stats::{gmm_ar, klm, TestKind, TestOutcome};

/// Environment variable read when `--threads` is absent.
pub const THREADS_ENV: &str = "PANELID_THREADS";

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

#[derive(Debug, Parser)]
#[command(
    name = "panelid",
    version,
    about = "Identification-robust inference for dynamic panel data"
)]
pub struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = THREADS_ENV)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a panel and write it as CSV.
    Gen(GenArgs),
    /// Test H0: theta = theta* on a panel.
    Test(TestArgs),
    /// Invert a test over a theta grid.
    Confset(ConfsetArgs),
    /// Rejection frequencies over a range of true theta0.
    Power(PowerArgs),
    /// Rejection frequencies over local alternatives theta* = 1 + e / N^(1/4).
    Localpower(LocalPowerArgs),
    /// Regenerate a published table of curves.
    Reproduce(ReproduceArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DgpKind {
    #[value(name = "1")]
    One,
    #[value(name = "2")]
    Two,
    #[value(name = "3")]
    Three,
    #[value(name = "4")]
    Four,
    #[value(name = "5")]
    Five,
}

#[derive(Debug, Clone, Args)]
pub struct DgpArgs {
    /// Initial-condition design.
    #[arg(long, value_enum, default_value = "1")]
    pub dgp: DgpKind,
    /// Variance of c_i.
    #[arg(long = "sigma-c2", default_value_t = 0.5)]
    pub sigma_c_sq: f64,
    /// Variance of mu_i (DGPs 3 and 4).
    #[arg(long = "sigma-mu2", default_value_t = 0.0)]
    pub sigma_mu_sq: f64,
    /// Innovation variance: one value, or T-1 comma-separated values.
    #[arg(long = "sigma2", value_delimiter = ',', default_value = "1")]
    pub sigma_sq: Vec<f64>,
    /// Variance of the first disturbance (DGP 1).
    #[arg(long = "sigma1-sq", default_value_t = 1.0)]
    pub sigma1_sq: f64,
    /// Pre-sample periods (DGPs 4 and 5).
    #[arg(long, default_value_t = 50)]
    pub g: u32,
    /// Drift theta0 = 1 + l / N^tau; given as `l,tau`.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub drift: Option<Vec<f64>>,
    /// Individuals.
    #[arg(short = 'n', long = "n", default_value_t = 250)]
    pub n_individuals: usize,
    /// Periods.
    #[arg(short = 't', long = "t", default_value_t = 3)]
    pub n_periods: usize,
}

impl DgpArgs {
    pub fn config(&self, theta0: f64) -> Result<DgpConfig> {
        let variant = match self.dgp {
            DgpKind::One => DgpVariant::Dgp1 {
                sigma1_sq: self.sigma1_sq,
            },
            DgpKind::Two => DgpVariant::Dgp2,
            DgpKind::Three => DgpVariant::Dgp3,
            DgpKind::Four => DgpVariant::Dgp4 { g: self.g },
            DgpKind::Five => DgpVariant::Dgp5 { g: self.g },
        };
        let sigma_sq = match self.sigma_sq.as_slice() {
            [s] => vec![*s; self.n_periods.saturating_sub(1)],
            many => many.to_vec(),
        };
        let drift = match self.drift.as_deref() {
            None => None,
            Some(&[l, tau]) => Some(Drift { l, tau }),
            Some(_) => return Err(Error::Config("--drift takes two values: l,tau".into())),
        };
        let cfg = DgpConfig {
            theta0,
            drift,
            sigma_c_sq: self.sigma_c_sq,
            sigma_mu_sq: self.sigma_mu_sq,
            sigma_sq,
            variant,
            n_individuals: self.n_individuals,
            n_periods: self.n_periods,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long, default_value_t = 0.5, allow_hyphen_values = true)]
    pub theta0: f64,
    #[command(flatten)]
    pub dgp: DgpArgs,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Output file, `-` for standard output.
    #[arg(short, long, default_value = "-")]
    pub output: String,
}

#[derive(Debug, Args)]
pub struct TestArgs {
    /// Panel CSV file.
    #[arg(short, long)]
    pub input: String,
    #[arg(long)]
    pub moments: MomentSet,
    #[arg(long = "theta-star", allow_hyphen_values = true)]
    pub theta_star: f64,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// klm, gmm-ar or robust-ar.
    #[arg(long, default_value = "klm")]
    pub stat: TestKind,
    #[arg(long, default_value = "json")]
    pub format: Format,
    #[arg(short, long, default_value = "-")]
    pub output: String,
}

#[derive(Debug, Args)]
pub struct ConfsetArgs {
    #[arg(short, long)]
    pub input: String,
    #[arg(long)]
    pub moments: MomentSet,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, default_value = "klm")]
    pub stat: TestKind,
    /// Theta grid as lo:hi:step.
    #[arg(long, default_value = "-0.5:1.5:0.001", allow_hyphen_values = true)]
    pub grid: ThetaGrid,
    /// Write the 1 - p-value curve as CSV instead of the set.
    #[arg(long)]
    pub pvalues: bool,
    #[arg(long, default_value = "json")]
    pub format: Format,
    #[arg(short, long, default_value = "-")]
    pub output: String,
}

#[derive(Debug, Clone, Args)]
pub struct SimulationArgs {
    /// Comma-separated moment sets.
    #[arg(long, value_delimiter = ',', default_value = "dif,lev,sys")]
    pub moments: Vec<MomentSet>,
    /// Comma-separated statistics.
    #[arg(long, value_delimiter = ',', default_value = "klm")]
    pub stat: Vec<TestKind>,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, default_value_t = 2000)]
    pub reps: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value = "csv")]
    pub format: Format,
    #[arg(short, long, default_value = "-")]
    pub output: String,
}

impl SimulationArgs {
    fn tests(&self) -> Vec<TestSpec> {
        self.stat
            .iter()
            .flat_map(|&k| self.moments.iter().map(move |&s| TestSpec::new(k, s)))
            .collect()
    }
}

#[derive(Debug, Args)]
pub struct PowerArgs {
    /// True theta0 values as lo:hi:step.
    #[arg(long, default_value = "0:0.99:0.03", allow_hyphen_values = true)]
    pub theta0: ThetaGrid,
    #[arg(long = "theta-star", default_value_t = 0.5, allow_hyphen_values = true)]
    pub theta_star: f64,
    #[command(flatten)]
    pub dgp: DgpArgs,
    #[command(flatten)]
    pub sim: SimulationArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum WeightChoice {
    /// Known innovation variance.
    Oracle,
    /// Estimated from the sample.
    Plugin,
}

#[derive(Debug, Args)]
pub struct LocalPowerArgs {
    /// True theta0 of the simulated panels.
    #[arg(long, default_value_t = 0.99, allow_hyphen_values = true)]
    pub theta0: f64,
    /// Localizing values e as lo:hi:step.
    #[arg(long, default_value = "-5:-0.25:0.25", allow_hyphen_values = true)]
    pub e: ThetaGrid,
    /// Weights of the optimal robust test.
    #[arg(long, value_enum, default_value = "oracle")]
    pub weight: WeightChoice,
    #[command(flatten)]
    pub dgp: DgpArgs,
    #[command(flatten)]
    pub sim: SimulationArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Target {
    Panel1,
    Panel2,
    Panel3,
    Fig4,
    Panel5,
}

#[derive(Debug, Args)]
pub struct ReproduceArgs {
    #[arg(long, value_enum)]
    pub target: Target,
    #[arg(long, default_value_t = 2000)]
    pub reps: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// theta0 sweep for panel1 and panel2.
    #[arg(long, default_value = "0:0.99:0.03", allow_hyphen_values = true)]
    pub theta0: ThetaGrid,
    /// Theta grid for the panel3 p-value curves.
    #[arg(long, default_value = "-0.5:1.5:0.001", allow_hyphen_values = true)]
    pub grid: ThetaGrid,
    /// e sweep for fig4 and panel5.
    #[arg(long, default_value = "-5:-0.25:0.25", allow_hyphen_values = true)]
    pub e: ThetaGrid,
    #[arg(short, long, default_value = "-")]
    pub output: String,
}

/// Maps an error to the process exit code.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Io(_) => EXIT_IO,
        e if e.is_numerical() => EXIT_NUMERICAL,
        _ => EXIT_USAGE,
    }
}

/// Parses `argv`, runs the command and returns the exit code.
pub fn run_from<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn run() -> i32 {
    run_from(std::env::args_os())
}

pub fn execute(cli: Cli) -> Result<()> {
    match cli.threads {
        Some(0) => Err(Error::Config("--threads must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(e.to_string()))?
            .install(|| dispatch(cli.command)),
        None => dispatch(cli.command),
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Gen(a) => cmd_gen(&a),
        Command::Test(a) => cmd_test(&a),
        Command::Confset(a) => cmd_confset(&a),
        Command::Power(a) => cmd_power(&a),
        Command::Localpower(a) => cmd_localpower(&a),
        Command::Reproduce(a) => cmd_reproduce(&a),
    }
}

fn cmd_gen(a: &GenArgs) -> Result<()> {
    let cfg = a.dgp.config(a.theta0)?;
    let panel = generate_panel(&cfg, a.seed)?;
    write_panel_csv(&panel, open_output(&a.output)?)
}

/// Runs one test on a panel.
pub fn run_test(
    kind: TestKind,
    set: MomentSet,
    panel: &crate::model::PanelData,
    theta_star: f64,
    alpha: f64,
) -> Result<TestOutcome> {
    match kind {
        TestKind::Klm => klm(set, panel, theta_star, alpha),
        TestKind::GmmAr => gmm_ar(set, panel, theta_star, alpha),
        TestKind::RobustAr => robust_gmm_ar(set, panel.n_periods(), panel, theta_star, alpha),
        TestKind::OptimalAr => Err(Error::Config(
            "the optimal weighted test needs a local design; use localpower".into(),
        )),
    }
}

fn cmd_test(a: &TestArgs) -> Result<()> {
    let panel = read_panel_csv(&a.input)?;
    let outcome = run_test(a.stat, a.moments, &panel, a.theta_star, a.alpha)?;
    write_results(Results::Outcome(&outcome), a.format, &a.output)
}

fn cmd_confset(a: &ConfsetArgs) -> Result<()> {
    let panel = read_panel_csv(&a.input)?;
    if a.pvalues {
        let stat = PanelStatistic::new(a.stat, a.moments, &panel)?;
        let curve = pvalue_curve(|th| stat.evaluate(th), &a.grid)?;
        let label = TestSpec::new(a.stat, a.moments).label();
        return write_pvalue_curves_csv(&[(label, curve)], open_output(&a.output)?);
    }
    let cs = confidence_set(a.stat, a.moments, &panel, &a.grid, a.alpha)?;
    write_results(Results::ConfidenceSet(&cs), a.format, &a.output)
}

fn emit_table(table: &PowerTable, format: Format, output: &str) -> Result<()> {
    write_results(Results::PowerTable(table), format, output)
}

fn cmd_power(a: &PowerArgs) -> Result<()> {
    let spec = ExperimentSpec::new(
        a.dgp.config(a.theta0.lo)?,
        Sweep::Theta0 {
            values: a.theta0.points(),
            theta_star: a.theta_star,
        },
        a.sim.tests(),
        a.sim.alpha,
        a.sim.reps,
        a.sim.seed,
    );
    emit_table(&power_curve(&spec)?, a.sim.format, &a.sim.output)
}

fn weight_mode(choice: WeightChoice, dgp: &DgpConfig) -> Result<WeightMode> {
    Ok(match choice {
        WeightChoice::Oracle => WeightMode::Oracle {
            sigma: dgp.homoskedastic_sigma_sq()?.sqrt(),
        },
        WeightChoice::Plugin => WeightMode::Plugin,
    })
}

fn cmd_localpower(a: &LocalPowerArgs) -> Result<()> {
    let dgp = a.dgp.config(a.theta0)?;
    let mode = if a.sim.stat.contains(&TestKind::OptimalAr) {
        weight_mode(a.weight, &dgp)?
    } else {
        WeightMode::Plugin
    };
    let spec = ExperimentSpec::new(
        dgp,
        Sweep::E {
            values: a.e.points(),
        },
        a.sim.tests(),
        a.sim.alpha,
        a.sim.reps,
        a.sim.seed,
    )
    .with_weight_mode(mode);
    emit_table(&local_power_curve(&spec)?, a.sim.format, &a.sim.output)
}

fn fmt_param(x: f64) -> String {
    format!("{x}")
}

/// Appends `suffix` to every label of `table`.
fn tag(mut table: PowerTable, suffix: &str) -> PowerTable {
    for row in &mut table.rows {
        row.test_label = format!("{}/{suffix}", row.test_label);
    }
    table
}

/// Panels 1 and 2: KLM power over theta0 with theta* = 0.5, N = 250.
pub fn reproduce_power_panel(
    t: usize,
    theta0: &ThetaGrid,
    reps: usize,
    seed: u64,
) -> Result<PowerTable> {
    let mut sets = vec![MomentSet::Dif, MomentSet::Lev, MomentSet::Sys];
    if t >= 4 {
        sets.push(MomentSet::As);
    }
    let tests: Vec<TestSpec> = sets
        .into_iter()
        .map(|s| TestSpec::new(TestKind::Klm, s))
        .collect();
    let mut table = PowerTable::default();
    for sigma_c_sq in [0.0, 0.5, 1.0, 2.0] {
        let spec = ExperimentSpec::new(
            DgpConfig::dgp1(theta0.lo, sigma_c_sq, 1.0, 250, t),
            Sweep::Theta0 {
                values: theta0.points(),
                theta_star: 0.5,
            },
            tests.clone(),
            0.05,
            reps,
            seed,
        );
        table.extend(tag(
            power_curve(&spec)?,
            &format!("sigma_c2={}", fmt_param(sigma_c_sq)),
        ));
    }
    Ok(table)
}

/// Panel 3: 1 - p-value curves of KLM tests for one simulated panel per
/// (T, sigma_c^2) cell, theta0 = 0.95, N = 250.
pub fn reproduce_pvalue_panel(
    grid: &ThetaGrid,
    seed: u64,
) -> Result<Vec<(String, Vec<crate::inference::PValuePoint>)>> {
    let cells = [(3usize, 0.0f64), (3, 0.5), (4, 0.0), (4, 0.5)];
    let mut curves = Vec::new();
    for (ci, &(t, sigma_c_sq)) in cells.iter().enumerate() {
        let cfg = DgpConfig::dgp1(0.95, sigma_c_sq, 1.0, 250, t);
        let panel = generate_panel(&cfg, replication_seed(seed, ci as u64))?;
        let mut sets = vec![MomentSet::Sys];
        if t >= 4 {
            sets.push(MomentSet::As);
        }
        sets.extend([MomentSet::Lev, MomentSet::Dif]);
        for set in sets {
            let stat = PanelStatistic::new(TestKind::Klm, set, &panel)?;
            let curve = pvalue_curve(|th| stat.evaluate(th), grid)?;
            let label = format!(
                "{}/T={t}/sigma_c2={}",
                TestSpec::new(TestKind::Klm, set).label(),
                fmt_param(sigma_c_sq)
            );
            curves.push((label, curve));
        }
    }
    Ok(curves)
}

/// Figure 4 and Panel 5: local power at theta0 = 0.99, sigma_c^2 = 10,
/// N = 2000 for T = 4 and 5.
pub fn reproduce_local_panel(
    target: Target,
    e: &ThetaGrid,
    reps: usize,
    seed: u64,
) -> Result<PowerTable> {
    let tests: Vec<TestSpec> = match target {
        Target::Fig4 => vec![
            TestSpec::new(TestKind::OptimalAr, MomentSet::Sys),
            TestSpec::new(TestKind::OptimalAr, MomentSet::As),
        ],
        _ => vec![
            TestSpec::new(TestKind::Klm, MomentSet::As),
            TestSpec::new(TestKind::Klm, MomentSet::Sys),
            TestSpec::new(TestKind::OptimalAr, MomentSet::Sys),
        ],
    };
    let mut table = PowerTable::default();
    for t in [4usize, 5] {
        let spec = ExperimentSpec::new(
            DgpConfig::dgp1(0.99, 10.0, 1.0, 2000, t),
            Sweep::E { values: e.points() },
            tests.clone(),
            0.05,
            reps,
            seed,
        )
        .with_weight_mode(WeightMode::Oracle { sigma: 1.0 });
        table.extend(tag(local_power_curve(&spec)?, &format!("T={t}")));
    }
    Ok(table)
}

fn cmd_reproduce(a: &ReproduceArgs) -> Result<()> {
    match a.target {
        Target::Panel1 => emit_table(
            &reproduce_power_panel(3, &a.theta0, a.reps, a.seed)?,
            Format::Csv,
            &a.output,
        ),
        Target::Panel2 => emit_table(
            &reproduce_power_panel(4, &a.theta0, a.reps, a.seed)?,
            Format::Csv,
            &a.output,
        ),
        Target::Panel3 => {
            let curves = reproduce_pvalue_panel(&a.grid, a.seed)?;
            let mut out = open_output(&a.output)?;
            write_pvalue_curves_csv(&curves, &mut out)?;
            out.flush()?;
            Ok(())
        }
        Target::Fig4 | Target::Panel5 => emit_table(
            &reproduce_local_panel(a.target, &a.e, a.reps, a.seed)?,
            Format::Csv,
            &a.output,
        ),
    }
}

//! Rejection frequencies over repeated simulated panels.
//!
//! Replication `r` of an experiment with base seed `s` draws its panel from
//! [`replication_seed`]`(s, r)`, so results do not depend on how replications
//! are scheduled across threads. The same seeds are reused at every sweep
//! point and for every test (common random numbers).

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::{invert_test, PanelStatistic, SetShape, ThetaGrid};
use crate::model::{generate_panel, DgpConfig, PanelData};
use crate::moments::{MomentProfile, MomentSet};
use crate::robust::{
    optimal_weighted_ar, robust_gmm_ar_quad, robust_quad, AsymptoticDesign, RobustQuad, WeightMode,
};
use crate::stats::{check_alpha, gmm_ar_statistic, klm_statistic, TestKind, TestOutcome};

/// Largest tolerated share of failed replications.
pub const MAX_FAILURE_RATE: f64 = 0.10;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of replication `r`: `splitmix64(base + r · 0x9E3779B97F4A7C15)`
/// (wrapping arithmetic). Stable across versions.
pub fn replication_seed(base_seed: u64, r: u64) -> u64 {
    splitmix64(base_seed.wrapping_add(r.wrapping_mul(GOLDEN_GAMMA)))
}

/// A test statistic applied to one moment set, e.g. KLM on Sys moments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TestSpec {
    pub kind: TestKind,
    pub set: MomentSet,
}

impl TestSpec {
    pub fn new(kind: TestKind, set: MomentSet) -> Self {
        Self { kind, set }
    }

    /// `KLM-Sys`, `GMM-AR-Dif`, `OptimalAR-AS`, …
    pub fn label(&self) -> String {
        format!("{}-{}", self.kind.label(), self.set.label())
    }
}

impl fmt::Display for TestSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl FromStr for TestSpec {
    type Err = Error;

    /// Parses labels such as `KLM-Sys` or `gmm-ar-dif`.
    fn from_str(s: &str) -> Result<Self> {
        let (kind, set) = s
            .rsplit_once('-')
            .ok_or_else(|| Error::Config(format!("expected <test>-<moments>, got '{s}'")))?;
        Ok(Self::new(kind.parse()?, set.parse()?))
    }
}

/// What varies across the rows of a power table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Sweep {
    /// True parameter values; the hypothesis `θ*` stays fixed.
    Theta0 { values: Vec<f64>, theta_star: f64 },
    /// Localizing parameters `e`; each point tests `θ* = 1 + e / N^{1/4}`
    /// against data from the fixed DGP.
    E { values: Vec<f64> },
}

impl Sweep {
    pub fn values(&self) -> &[f64] {
        match self {
            Sweep::Theta0 { values, .. } | Sweep::E { values } => values,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub dgp: DgpConfig,
    pub sweep: Sweep,
    pub tests: Vec<TestSpec>,
    pub alpha: f64,
    pub replications: usize,
    pub base_seed: u64,
    /// Weight target for the optimal weighted robust test.
    #[serde(skip, default = "default_weight_mode")]
    pub weight_mode: WeightMode,
}

fn default_weight_mode() -> WeightMode {
    WeightMode::Plugin
}

impl ExperimentSpec {
    pub fn new(
        dgp: DgpConfig,
        sweep: Sweep,
        tests: Vec<TestSpec>,
        alpha: f64,
        replications: usize,
        base_seed: u64,
    ) -> Self {
        Self {
            dgp,
            sweep,
            tests,
            alpha,
            replications,
            base_seed,
            weight_mode: WeightMode::Plugin,
        }
    }

    pub fn with_weight_mode(mut self, mode: WeightMode) -> Self {
        self.weight_mode = mode;
        self
    }

    fn validate(&self) -> Result<()> {
        check_alpha(self.alpha)?;
        if self.replications == 0 {
            return Err(Error::Config("at least one replication is required".into()));
        }
        if self.tests.is_empty() {
            return Err(Error::Config("no tests requested".into()));
        }
        if self.sweep.values().is_empty() {
            return Err(Error::Config("empty sweep".into()));
        }
        if self.sweep.values().iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("sweep values must be finite".into()));
        }
        for v in self.sweep.values() {
            self.point_config(*v)?.validate()?;
        }
        Ok(())
    }

    fn point_config(&self, value: f64) -> Result<DgpConfig> {
        Ok(match self.sweep {
            Sweep::Theta0 { .. } => self.dgp.clone().with_theta0(value),
            Sweep::E { .. } => self.dgp.clone(),
        })
    }

    fn theta_star(&self, value: f64) -> f64 {
        match self.sweep {
            Sweep::Theta0 { theta_star, .. } => theta_star,
            Sweep::E { .. } => crate::robust::local_theta(value, self.dgp.n_individuals),
        }
    }
}

/// Rejection frequency with its Monte Carlo standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Frequency {
    pub frequency: f64,
    pub mc_se: f64,
    pub successes: usize,
    pub failures: usize,
}

/// One row of a power table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerRow {
    pub sweep_value: f64,
    pub test_label: String,
    pub rejection_frequency: f64,
    pub mc_se: f64,
    #[serde(skip)]
    pub failures: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PowerTable {
    pub rows: Vec<PowerRow>,
}

impl PowerTable {
    pub fn frequency(&self, sweep_value: f64, test_label: &str) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.sweep_value == sweep_value && r.test_label == test_label)
            .map(|r| r.rejection_frequency)
    }

    /// Rows of one test in sweep order.
    pub fn curve(&self, test_label: &str) -> Vec<&PowerRow> {
        self.rows
            .iter()
            .filter(|r| r.test_label == test_label)
            .collect()
    }

    pub fn extend(&mut self, other: PowerTable) {
        self.rows.extend(other.rows);
    }
}

/// Tallies of rejections per (sweep point, test).
#[derive(Debug, Clone, Copy, Default)]
struct Tally {
    rejections: usize,
    successes: usize,
    failures: usize,
    last_error: Option<usize>,
}

fn summarize(t: &Tally, total: usize, errors: &[String], label: &str) -> Result<Frequency> {
    if t.failures as f64 > MAX_FAILURE_RATE * total as f64 || t.successes == 0 {
        let last = t.last_error.map(|i| errors[i].clone()).unwrap_or_default();
        return Err(Error::Experiment {
            failed: t.failures,
            total,
            last: format!("{label}: {last}"),
        });
    }
    let r = t.rejections as f64 / t.successes as f64;
    Ok(Frequency {
        frequency: r,
        mc_se: (r * (1.0 - r) / t.successes as f64).sqrt(),
        successes: t.successes,
        failures: t.failures,
    })
}

/// Monte Carlo frequency of `decide(seed) == true` over `replications`
/// seeds derived from `base_seed`. Replications whose decision fails are
/// dropped; more than 10% failures is an error.
pub fn monte_carlo_frequency<F>(replications: usize, base_seed: u64, decide: F) -> Result<Frequency>
where
    F: Fn(u64) -> Result<bool> + Sync,
{
    if replications == 0 {
        return Err(Error::Config("at least one replication is required".into()));
    }
    let outcomes: Vec<Result<bool>> = (0..replications as u64)
        .into_par_iter()
        .map(|r| decide(replication_seed(base_seed, r)))
        .collect();
    let mut tally = Tally::default();
    let mut errors = Vec::new();
    for o in outcomes {
        match o {
            Ok(rej) => {
                tally.successes += 1;
                tally.rejections += rej as usize;
            }
            Err(e) => {
                tally.failures += 1;
                errors.push(e.to_string());
                tally.last_error = Some(errors.len() - 1);
            }
        }
    }
    summarize(&tally, replications, &errors, "decision")
}

/// Per-panel state shared by all tests evaluated on it.
struct PanelCache<'a> {
    panel: &'a PanelData,
    profiles: Vec<(MomentSet, Result<MomentProfile>)>,
    quads: Vec<(MomentSet, Result<RobustQuad>)>,
}

impl<'a> PanelCache<'a> {
    fn new(panel: &'a PanelData) -> Self {
        Self {
            panel,
            profiles: Vec::new(),
            quads: Vec::new(),
        }
    }

    fn profile(&mut self, set: MomentSet) -> Result<&MomentProfile> {
        if !self.profiles.iter().any(|(s, _)| *s == set) {
            self.profiles
                .push((set, MomentProfile::new(set, self.panel)));
        }
        let (_, p) = self
            .profiles
            .iter()
            .find(|(s, _)| *s == set)
            .expect("inserted above");
        p.as_ref().map_err(clone_error)
    }

    fn quad(&mut self, set: MomentSet) -> Result<&RobustQuad> {
        if !self.quads.iter().any(|(s, _)| *s == set) {
            self.quads
                .push((set, robust_quad(set, self.panel.n_periods(), self.panel)));
        }
        let (_, q) = self
            .quads
            .iter()
            .find(|(s, _)| *s == set)
            .expect("inserted above");
        q.as_ref().map_err(clone_error)
    }
}

fn clone_error(e: &Error) -> Error {
    Error::Inference(e.to_string())
}

fn run_test(
    cache: &mut PanelCache<'_>,
    test: TestSpec,
    theta_star: f64,
    alpha: f64,
    sigma: f64,
    mode: WeightMode,
) -> Result<TestOutcome> {
    let set = test.set;
    match test.kind {
        TestKind::GmmAr => {
            let s = cache.profile(set)?.at(theta_star);
            TestOutcome::from_statistic(
                test.kind,
                set,
                theta_star,
                gmm_ar_statistic(&s)?,
                s.f_bar.len(),
                alpha,
            )
        }
        TestKind::Klm => {
            let s = cache.profile(set)?.at(theta_star);
            TestOutcome::from_statistic(test.kind, set, theta_star, klm_statistic(&s)?, 1, alpha)
        }
        TestKind::RobustAr => robust_gmm_ar_quad(cache.quad(set)?, theta_star, alpha),
        TestKind::OptimalAr => {
            let n = cache.panel.n_individuals();
            let e = (theta_star - 1.0) * (n as f64).powf(0.25);
            let design = AsymptoticDesign::new(e, n, sigma)?;
            optimal_weighted_ar(cache.quad(set)?, &design, mode, alpha)
        }
    }
}

/// Runs every (sweep point, test) cell of an experiment.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<PowerTable> {
    spec.validate()?;
    let values = spec.sweep.values().to_vec();
    let configs: Vec<DgpConfig> = values
        .iter()
        .map(|v| spec.point_config(*v))
        .collect::<Result<_>>()?;
    let shared_panel = matches!(spec.sweep, Sweep::E { .. });
    let needs_sigma = spec.tests.iter().any(|t| t.kind == TestKind::OptimalAr);
    let sigma = if needs_sigma {
        spec.dgp.homoskedastic_sigma_sq()?.sqrt()
    } else {
        1.0
    };
    let n_tests = spec.tests.len();

    // outcome[r][point * n_tests + test]
    type Cell = std::result::Result<bool, String>;
    let per_rep: Vec<Vec<Cell>> = (0..spec.replications as u64)
        .into_par_iter()
        .map(|r| {
            let seed = replication_seed(spec.base_seed, r);
            let mut cells = Vec::with_capacity(values.len() * n_tests);
            let mut shared: Option<std::result::Result<PanelData, String>> = None;
            for (pi, value) in values.iter().enumerate() {
                let panel = if shared_panel {
                    shared
                        .get_or_insert_with(|| {
                            generate_panel(&configs[pi], seed).map_err(|e| e.to_string())
                        })
                        .clone()
                } else {
                    generate_panel(&configs[pi], seed).map_err(|e| e.to_string())
                };
                let panel = match panel {
                    Ok(p) => p,
                    Err(msg) => {
                        cells.extend(std::iter::repeat_n(Err(msg), n_tests));
                        continue;
                    }
                };
                let mut cache = PanelCache::new(&panel);
                let theta_star = spec.theta_star(*value);
                for test in &spec.tests {
                    let out = run_test(
                        &mut cache,
                        *test,
                        theta_star,
                        spec.alpha,
                        sigma,
                        spec.weight_mode,
                    );
                    cells.push(out.map(|o| o.reject).map_err(|e| e.to_string()));
                }
            }
            cells
        })
        .collect();

    let mut table = PowerTable::default();
    for (pi, value) in values.iter().enumerate() {
        for (ti, test) in spec.tests.iter().enumerate() {
            let mut tally = Tally::default();
            let mut errors = Vec::new();
            for rep in &per_rep {
                match &rep[pi * n_tests + ti] {
                    Ok(rej) => {
                        tally.successes += 1;
                        tally.rejections += *rej as usize;
                    }
                    Err(msg) => {
                        tally.failures += 1;
                        errors.push(msg.clone());
                        tally.last_error = Some(errors.len() - 1);
                    }
                }
            }
            let label = test.label();
            let f = summarize(
                &tally,
                spec.replications,
                &errors,
                &format!("{label} at {value}"),
            )?;
            table.rows.push(PowerRow {
                sweep_value: *value,
                test_label: label,
                rejection_frequency: f.frequency,
                mc_se: f.mc_se,
                failures: f.failures,
            });
        }
    }
    Ok(table)
}

/// Rejection frequency of one test at one DGP.
pub fn rejection_frequency(
    dgp: &DgpConfig,
    test: TestSpec,
    theta_star: f64,
    alpha: f64,
    replications: usize,
    base_seed: u64,
) -> Result<Frequency> {
    let spec = ExperimentSpec::new(
        dgp.clone(),
        Sweep::Theta0 {
            values: vec![dgp.theta0],
            theta_star,
        },
        vec![test],
        alpha,
        replications,
        base_seed,
    );
    let table = run_experiment(&spec)?;
    let row = &table.rows[0];
    let successes = replications - row.failures;
    Ok(Frequency {
        frequency: row.rejection_frequency,
        mc_se: row.mc_se,
        successes,
        failures: row.failures,
    })
}

/// Power curve over true parameter values (`Sweep::Theta0`).
pub fn power_curve(spec: &ExperimentSpec) -> Result<PowerTable> {
    if !matches!(spec.sweep, Sweep::Theta0 { .. }) {
        return Err(Error::Config("power curves sweep over θ0".into()));
    }
    run_experiment(spec)
}

/// Local power curve over `e` with `θ* = 1 + e / N^{1/4}` (`Sweep::E`).
pub fn local_power_curve(spec: &ExperimentSpec) -> Result<PowerTable> {
    if !matches!(spec.sweep, Sweep::E { .. }) {
        return Err(Error::Config("local power curves sweep over e".into()));
    }
    run_experiment(spec)
}

/// Frequencies describing repeated confidence sets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SetFrequencies {
    /// Share of sets containing the true value.
    pub coverage: f64,
    pub unbounded: f64,
    pub empty: f64,
    pub successes: usize,
    pub failures: usize,
}

/// Repeatedly inverts `test` on simulated panels.
pub fn confidence_set_frequencies(
    dgp: &DgpConfig,
    test: TestSpec,
    grid: &ThetaGrid,
    alpha: f64,
    replications: usize,
    base_seed: u64,
) -> Result<SetFrequencies> {
    check_alpha(alpha)?;
    dgp.validate()?;
    if replications == 0 {
        return Err(Error::Config("at least one replication is required".into()));
    }
    let theta0 = dgp.effective_theta()?;
    let sets: Vec<Result<(bool, SetShape)>> = (0..replications as u64)
        .into_par_iter()
        .map(|r| {
            let panel = generate_panel(dgp, replication_seed(base_seed, r))?;
            let stat = PanelStatistic::new(test.kind, test.set, &panel)?;
            let cs = invert_test(|th| stat.evaluate(th), grid, alpha)?;
            let covered = stat.evaluate(theta0).map(|(s, dof)| {
                s <= crate::distributions::chi2_critical(alpha, dof).unwrap_or(f64::INFINITY)
            });
            Ok((covered.unwrap_or(false), cs.shape))
        })
        .collect();
    let mut ok = 0usize;
    let mut failures = 0usize;
    let (mut covered, mut unbounded, mut empty) = (0usize, 0usize, 0usize);
    let mut last = String::new();
    for s in sets {
        match s {
            Ok((c, shape)) => {
                ok += 1;
                covered += c as usize;
                unbounded += shape.is_unbounded() as usize;
                empty += (shape == SetShape::Empty) as usize;
            }
            Err(e) => {
                failures += 1;
                last = e.to_string();
            }
        }
    }
    if failures as f64 > MAX_FAILURE_RATE * replications as f64 || ok == 0 {
        return Err(Error::Experiment {
            failed: failures,
            total: replications,
            last,
        });
    }
    let n = ok as f64;
    Ok(SetFrequencies {
        coverage: covered as f64 / n,
        unbounded: unbounded as f64 / n,
        empty: empty as f64 / n,
        successes: ok,
        failures,
    })
}

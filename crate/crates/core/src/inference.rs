//! Confidence sets by test inversion over a grid of hypothesized values.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::{chi2_cdf, chi2_critical};
use crate::error::{Error, Result};
use crate::model::PanelData;
use crate::moments::{MomentProfile, MomentSet};
use crate::robust::{ar_form, robust_eval, robust_quad, RobustQuad};
use crate::stats::{check_alpha, gmm_ar_statistic, klm_statistic, TestKind};

const MAX_GRID_POINTS: f64 = 1e7;

/// Evenly spaced values `lo, lo + step, …` up to `hi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThetaGrid {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

impl Default for ThetaGrid {
    fn default() -> Self {
        Self {
            lo: -0.5,
            hi: 1.5,
            step: 0.001,
        }
    }
}

impl ThetaGrid {
    pub fn new(lo: f64, hi: f64, step: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && step.is_finite()) {
            return Err(Error::Config("grid bounds and step must be finite".into()));
        }
        if !(lo < hi) {
            return Err(Error::Config(format!("grid needs lo < hi, got {lo}:{hi}")));
        }
        if !(step > 0.0) {
            return Err(Error::Config(format!(
                "grid step must be positive, got {step}"
            )));
        }
        if (hi - lo) / step > MAX_GRID_POINTS {
            return Err(Error::Config(format!(
                "grid {lo}:{hi}:{step} has more than 1e7 points"
            )));
        }
        Ok(Self { lo, hi, step })
    }

    pub fn len(&self) -> usize {
        ((self.hi - self.lo) / self.step + 1e-9).floor() as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn point(&self, i: usize) -> f64 {
        (self.lo + i as f64 * self.step).min(self.hi)
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.point(i)).collect()
    }
}

impl fmt::Display for ThetaGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.lo, self.hi, self.step)
    }
}

impl FromStr for ThetaGrid {
    type Err = Error;

    /// Parses `lo:hi:step`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(Error::Config(format!("expected lo:hi:step, got '{s}'")));
        }
        let num = |p: &str| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("'{p}' in range '{s}' is not a number")))
        };
        ThetaGrid::new(num(parts[0])?, num(parts[1])?, num(parts[2])?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SetShape {
    BoundedConvex,
    /// Several intervals, none touching the grid ends.
    BoundedDisjoint,
    UnboundedConvex,
    UnboundedDisjoint,
    Empty,
}

impl SetShape {
    pub fn as_str(&self) -> &'static str {
        match self {
            SetShape::BoundedConvex => "bounded-convex",
            SetShape::BoundedDisjoint => "bounded-disjoint",
            SetShape::UnboundedConvex => "unbounded-convex",
            SetShape::UnboundedDisjoint => "unbounded-disjoint",
            SetShape::Empty => "empty",
        }
    }

    pub fn is_unbounded(&self) -> bool {
        matches!(
            self,
            SetShape::UnboundedConvex | SetShape::UnboundedDisjoint
        )
    }
}

impl fmt::Display for SetShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Grid points not rejected at level `alpha`, merged into maximal runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceSet {
    pub alpha: f64,
    pub shape: SetShape,
    pub intervals: Vec<(f64, f64)>,
    pub grid: ThetaGrid,
    /// Grid points where the statistic could not be computed (counted as rejected).
    #[serde(skip)]
    pub failed: Vec<f64>,
}

impl ConfidenceSet {
    pub fn contains(&self, theta: f64) -> bool {
        let tol = 1e-9 * self.grid.step;
        self.intervals
            .iter()
            .any(|&(lo, hi)| theta >= lo - tol && theta <= hi + tol)
    }
}

/// Statistic and its χ² degrees of freedom at one hypothesized value.
pub type Evaluation = Result<(f64, usize)>;

fn evaluate_grid<F>(eval: &F, grid: &ThetaGrid) -> Vec<(f64, Evaluation)>
where
    F: Fn(f64) -> Evaluation + Sync,
{
    (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let theta = grid.point(i);
            let out = eval(theta).and_then(|(s, dof)| {
                if s.is_finite() {
                    Ok((s.max(0.0), dof))
                } else {
                    Err(Error::Inference(format!(
                        "non-finite statistic at θ={theta}"
                    )))
                }
            });
            (theta, out)
        })
        .collect()
}

fn all_failed(results: &[(f64, Evaluation)]) -> Option<Error> {
    if results.iter().all(|(_, r)| r.is_err()) {
        let last = results
            .last()
            .and_then(|(_, r)| r.as_ref().err())
            .map(|e| e.to_string())
            .unwrap_or_default();
        Some(Error::Inference(format!(
            "statistic failed at every grid point (last: {last})"
        )))
    } else {
        None
    }
}

/// Critical values memoized by degrees of freedom.
struct Criticals {
    alpha: f64,
    cache: Vec<Option<f64>>,
}

impl Criticals {
    fn new(alpha: f64) -> Self {
        Self {
            alpha,
            cache: Vec::new(),
        }
    }

    fn get(&mut self, dof: usize) -> Result<f64> {
        if dof >= self.cache.len() {
            self.cache.resize(dof + 1, None);
        }
        if let Some(c) = self.cache[dof] {
            return Ok(c);
        }
        let c = chi2_critical(self.alpha, dof)?;
        self.cache[dof] = Some(c);
        Ok(c)
    }
}

fn classify(intervals: &[(usize, usize)], last: usize) -> SetShape {
    if intervals.is_empty() {
        return SetShape::Empty;
    }
    let touches = intervals.iter().any(|&(a, b)| a == 0 || b == last);
    match (touches, intervals.len() > 1) {
        (false, false) => SetShape::BoundedConvex,
        (false, true) => SetShape::BoundedDisjoint,
        (true, false) => SetShape::UnboundedConvex,
        (true, true) => SetShape::UnboundedDisjoint,
    }
}

/// `{θ* on the grid : statistic(θ*) ≤ χ²_{dof}(1 − α) quantile}`. Points
/// where the evaluator fails are treated as rejected and listed in `failed`.
pub fn invert_test<F>(eval: F, grid: &ThetaGrid, alpha: f64) -> Result<ConfidenceSet>
where
    F: Fn(f64) -> Evaluation + Sync,
{
    check_alpha(alpha)?;
    let results = evaluate_grid(&eval, grid);
    if let Some(e) = all_failed(&results) {
        return Err(e);
    }
    let mut crit = Criticals::new(alpha);
    let mut accepted = Vec::with_capacity(results.len());
    let mut failed = Vec::new();
    for (theta, r) in &results {
        match r {
            Ok((s, dof)) => accepted.push(*s <= crit.get(*dof)?),
            Err(_) => {
                failed.push(*theta);
                accepted.push(false);
            }
        }
    }
    let mut runs = Vec::new();
    let mut start = None;
    for (i, &acc) in accepted.iter().enumerate() {
        match (acc, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                runs.push((s, i - 1));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        runs.push((s, accepted.len() - 1));
    }
    let shape = classify(&runs, accepted.len() - 1);
    Ok(ConfidenceSet {
        alpha,
        shape,
        intervals: runs
            .iter()
            .map(|&(a, b)| (results[a].0, results[b].0))
            .collect(),
        grid: *grid,
        failed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PValuePoint {
    pub theta: f64,
    pub one_minus_p: f64,
    pub failed: bool,
}

/// `1 − p(θ*)` along the grid; failed points are reported as `1` (rejected).
pub fn pvalue_curve<F>(eval: F, grid: &ThetaGrid) -> Result<Vec<PValuePoint>>
where
    F: Fn(f64) -> Evaluation + Sync,
{
    let results = evaluate_grid(&eval, grid);
    if let Some(e) = all_failed(&results) {
        return Err(e);
    }
    Ok(results
        .into_iter()
        .map(|(theta, r)| match r {
            Ok((s, dof)) => PValuePoint {
                theta,
                one_minus_p: chi2_cdf(s, dof),
                failed: false,
            },
            Err(_) => PValuePoint {
                theta,
                one_minus_p: 1.0,
                failed: true,
            },
        })
        .collect())
}

/// Grid minimizer output.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridMinimum {
    pub theta: f64,
    pub value: f64,
    /// The minimizer sits on an end of the search range.
    pub at_boundary: bool,
}

/// Coarse grid search followed by `refine_levels` rounds of local search with
/// a ten times finer step around the current minimizer.
pub fn grid_minimize<F>(f: F, grid: &ThetaGrid, refine_levels: usize) -> Result<GridMinimum>
where
    F: Fn(f64) -> Result<f64> + Sync,
{
    let search = |g: &ThetaGrid| -> Option<(f64, f64)> {
        let vals: Vec<(f64, f64)> = (0..g.len())
            .into_par_iter()
            .map(|i| {
                let th = g.point(i);
                (
                    th,
                    f(th)
                        .ok()
                        .filter(|v| v.is_finite())
                        .unwrap_or(f64::INFINITY),
                )
            })
            .collect();
        vals.into_iter().filter(|(_, v)| v.is_finite()).fold(
            None,
            |best: Option<(f64, f64)>, (th, v)| match best {
                Some((_, bv)) if bv <= v => best,
                _ => Some((th, v)),
            },
        )
    };
    let (mut theta, mut value) = search(grid)
        .ok_or_else(|| Error::Inference("objective failed at every grid point".into()))?;
    let mut step = grid.step;
    for _ in 0..refine_levels {
        let lo = (theta - step).max(grid.lo);
        let hi = (theta + step).min(grid.hi);
        step /= 10.0;
        if !(lo < hi) {
            break;
        }
        let local = ThetaGrid { lo, hi, step };
        if let Some((t, v)) = search(&local) {
            if v <= value {
                theta = t;
                value = v;
            }
        }
    }
    let tol = 1e-12 * (grid.hi - grid.lo);
    Ok(GridMinimum {
        theta,
        value,
        at_boundary: (theta - grid.lo).abs() <= tol || (grid.hi - theta).abs() <= tol,
    })
}

/// Continuous updating estimator: the minimizer of the GMM-AR statistic.
pub fn cue_minimize(
    set: MomentSet,
    panel: &PanelData,
    grid: &ThetaGrid,
    refine_levels: usize,
) -> Result<GridMinimum> {
    let profile = MomentProfile::new(set, panel)?;
    grid_minimize(|th| gmm_ar_statistic(&profile.at(th)), grid, refine_levels)
}

/// A test statistic of one panel as a function of the hypothesized value,
/// with the panel-dependent parts precomputed.
#[derive(Debug, Clone)]
pub enum PanelStatistic {
    Moments {
        kind: TestKind,
        profile: MomentProfile,
    },
    Robust {
        quad: RobustQuad,
    },
}

impl PanelStatistic {
    /// Supported kinds: GMM-AR and KLM on any moment set, and the robust
    /// GMM-AR on AS or Sys with `T ∈ {4, 5}`.
    pub fn new(kind: TestKind, set: MomentSet, panel: &PanelData) -> Result<Self> {
        match kind {
            TestKind::GmmAr | TestKind::Klm => Ok(PanelStatistic::Moments {
                kind,
                profile: MomentProfile::new(set, panel)?,
            }),
            TestKind::RobustAr => Ok(PanelStatistic::Robust {
                quad: robust_quad(set, panel.n_periods(), panel)?,
            }),
            TestKind::OptimalAr => Err(Error::Config(
                "the optimal weighted test is tied to a local design θ(e) and cannot be inverted over a grid".into(),
            )),
        }
    }

    pub fn evaluate(&self, theta: f64) -> Evaluation {
        match self {
            PanelStatistic::Moments { kind, profile } => {
                let s = profile.at(theta);
                match kind {
                    TestKind::Klm => Ok((klm_statistic(&s)?, 1)),
                    _ => Ok((gmm_ar_statistic(&s)?, profile.k())),
                }
            }
            PanelStatistic::Robust { quad } => {
                let g = robust_eval(quad, theta);
                Ok((ar_form(quad.n(), &g, &quad.v_gg(theta)?)?, quad.p_max()))
            }
        }
    }
}

/// Confidence set for `θ` from one panel.
pub fn confidence_set(
    kind: TestKind,
    set: MomentSet,
    panel: &PanelData,
    grid: &ThetaGrid,
    alpha: f64,
) -> Result<ConfidenceSet> {
    let stat = PanelStatistic::new(kind, set, panel)?;
    invert_test(|th| stat.evaluate(th), grid, alpha)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{generate_panel, DgpConfig};
    use crate::stats::{gmm_ar, klm};
    use approx::assert_abs_diff_eq;

    #[test]
    fn grid_parsing_and_points() {
        let g: ThetaGrid = "0:1:0.25".parse().unwrap();
        assert_eq!(g.points(), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        let g = ThetaGrid::default();
        assert_eq!(g.len(), 2001);
        assert_eq!(g.point(2000), 1.5);
        assert!("0.99:0.5:0.01".parse::<ThetaGrid>().is_err());
        assert!("0:1:0".parse::<ThetaGrid>().is_err());
        assert!("0:1".parse::<ThetaGrid>().is_err());
        assert!("a:1:0.1".parse::<ThetaGrid>().is_err());
        assert!(ThetaGrid::new(0.0, 1.0, 1e-8).is_err());
    }

    #[test]
    fn never_rejecting_gives_whole_grid() {
        let g = ThetaGrid::new(0.0, 1.0, 0.1).unwrap();
        let cs = invert_test(|_| Ok((0.0, 1)), &g, 0.05).unwrap();
        assert_eq!(cs.intervals, vec![(0.0, 1.0)]);
        assert_eq!(cs.shape, SetShape::UnboundedConvex);
    }

    #[test]
    fn always_rejecting_gives_empty_set() {
        let g = ThetaGrid::new(0.0, 1.0, 0.1).unwrap();
        let cs = invert_test(|_| Ok((1e9, 2)), &g, 0.05).unwrap();
        assert!(cs.intervals.is_empty());
        assert_eq!(cs.shape, SetShape::Empty);
    }

    #[test]
    fn shapes() {
        let g = ThetaGrid::new(0.0, 1.0, 0.01).unwrap();
        let quad = |c: f64| move |th: f64| Ok((1000.0 * (th - c).powi(2), 1));
        let cs = invert_test(quad(0.5), &g, 0.05).unwrap();
        assert_eq!(cs.shape, SetShape::BoundedConvex);
        let (lo, hi) = cs.intervals[0];
        assert!(lo > 0.43 && lo < 0.45 && hi > 0.55 && hi < 0.57);

        let two_dips = |th: f64| Ok((1000.0 * ((th - 0.3) * (th - 0.7)).powi(2) * 50.0, 1));
        let cs = invert_test(two_dips, &g, 0.05).unwrap();
        assert_eq!(cs.shape, SetShape::BoundedDisjoint);
        assert_eq!(cs.intervals.len(), 2);

        let edge = |th: f64| {
            Ok((
                if th < 0.2 || (th > 0.5 && th < 0.6) {
                    0.0
                } else {
                    100.0
                },
                1,
            ))
        };
        let cs = invert_test(edge, &g, 0.05).unwrap();
        assert_eq!(cs.shape, SetShape::UnboundedDisjoint);
    }

    #[test]
    fn failures_are_rejections_but_total_failure_is_an_error() {
        let g = ThetaGrid::new(0.0, 1.0, 0.1).unwrap();
        let cs = invert_test(
            |th| {
                if (th - 0.5).abs() < 1e-9 {
                    Err(Error::DegenerateCovariance {
                        condition: f64::INFINITY,
                    })
                } else {
                    Ok((0.0, 1))
                }
            },
            &g,
            0.05,
        )
        .unwrap();
        assert_eq!(cs.failed.len(), 1);
        assert_eq!(cs.intervals.len(), 2);
        assert!(!cs.contains(0.5));
        assert!(invert_test(|_| Err(Error::Inference("x".into())), &g, 0.05).is_err());
        assert!(pvalue_curve(|_| Err(Error::Inference("x".into())), &g).is_err());
    }

    #[test]
    fn pvalue_curve_is_monotone_in_statistic() {
        let g = ThetaGrid::new(0.0, 1.0, 0.1).unwrap();
        let curve = pvalue_curve(|th| Ok((th * 10.0, 2)), &g).unwrap();
        assert_eq!(curve[0].one_minus_p, 0.0);
        assert!(curve
            .windows(2)
            .all(|w| w[1].one_minus_p > w[0].one_minus_p));
    }

    #[test]
    fn grid_minimize_finds_convex_minimum() {
        let g = ThetaGrid::new(-1.0, 1.0, 0.07).unwrap();
        let m = grid_minimize(|th| Ok((th - 0.3).powi(2)), &g, 3).unwrap();
        assert!((m.theta - 0.3).abs() <= 0.07e-3);
        assert!(!m.at_boundary);
        let m = grid_minimize(Ok, &g, 2).unwrap();
        assert_eq!(m.theta, -1.0);
        assert!(m.at_boundary);
        assert!(grid_minimize(|_| Err(Error::Inference("x".into())), &g, 1).is_err());
    }

    fn well_identified(seed: u64) -> PanelData {
        generate_panel(&DgpConfig::dgp1(0.5, 0.5, 1.0, 250, 3), seed).unwrap()
    }

    #[test]
    fn klm_vanishes_at_cue() {
        let panel = well_identified(7);
        let grid = ThetaGrid::new(-0.5, 1.5, 0.01).unwrap();
        for set in [MomentSet::Sys, MomentSet::Lev] {
            let cue = cue_minimize(set, &panel, &grid, 3).unwrap();
            let k = klm(set, &panel, cue.theta, 0.05).unwrap();
            assert!(k.statistic <= 0.01, "{set}: KLM at CUE = {}", k.statistic);
        }
    }

    #[test]
    fn inversion_matches_pointwise_tests() {
        let panel = well_identified(3);
        let grid = ThetaGrid::new(0.0, 1.0, 0.05).unwrap();
        for kind in [TestKind::Klm, TestKind::GmmAr] {
            let cs = confidence_set(kind, MomentSet::Sys, &panel, &grid, 0.05).unwrap();
            for th in grid.points() {
                let out = if kind == TestKind::Klm {
                    klm(MomentSet::Sys, &panel, th, 0.05)
                } else {
                    gmm_ar(MomentSet::Sys, &panel, th, 0.05)
                };
                match out {
                    Ok(o) => assert_eq!(cs.contains(th), !o.reject, "{kind} θ={th}"),
                    Err(_) => assert!(!cs.contains(th)),
                }
            }
        }
    }

    #[test]
    fn profile_statistic_matches_direct_route() {
        let panel = generate_panel(&DgpConfig::dgp1(0.8, 1.0, 1.0, 120, 4), 5).unwrap();
        for set in [MomentSet::As, MomentSet::Sys] {
            let stat = PanelStatistic::new(TestKind::Klm, set, &panel).unwrap();
            for &th in &[0.1, 0.7, 1.1] {
                let direct = klm(set, &panel, th, 0.05).unwrap().statistic;
                assert_abs_diff_eq!(
                    stat.evaluate(th).unwrap().0,
                    direct,
                    epsilon = 1e-7 * direct.max(1.0)
                );
            }
            let robust = PanelStatistic::new(TestKind::RobustAr, set, &panel).unwrap();
            let direct = crate::robust::robust_gmm_ar(set, 4, &panel, 0.7, 0.05).unwrap();
            assert_abs_diff_eq!(
                robust.evaluate(0.7).unwrap().0,
                direct.statistic,
                epsilon = 1e-12
            );
        }
        assert!(PanelStatistic::new(TestKind::OptimalAr, MomentSet::Sys, &panel).is_err());
    }

    #[test]
    fn confidence_set_json_shape() {
        let g = ThetaGrid::new(0.0, 1.0, 0.5).unwrap();
        let cs = invert_test(|_| Ok((1e9, 1)), &g, 0.05).unwrap();
        let v = serde_json::to_value(&cs).unwrap();
        assert_eq!(v["shape"], "empty");
        assert_eq!(v["intervals"], serde_json::json!([]));
        let mut keys: Vec<_> = v.as_object().unwrap().keys().cloned().collect();
        keys.sort();
        assert_eq!(keys, ["alpha", "grid", "intervals", "shape"]);
    }
}

//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on failure.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use panelid::distributions::{chi2_cdf, chi2_quantile, noncentral_chi2_cdf};
use panelid::inference::ThetaGrid;
use panelid::io::write_power_table_csv;
use panelid::model::{generate_panel, DgpConfig, PanelData};
use panelid::moments::{moments_individual, MomentSet};
use panelid::montecarlo::{
    confidence_set_frequencies, local_power_curve, power_curve, rejection_frequency,
    replication_seed, splitmix64, ExperimentSpec, PowerTable, Sweep, TestSpec,
};
use panelid::robust::{
    limit_abd, ortho_complement, repr_matrices, robust_eval, robust_gmm_ar, robust_quad, WeightMode,
};
use panelid::stats::TestKind::{GmmAr, Klm, OptimalAr};
use panelid::Result;

use MomentSet::{As, Dif, Lev, Nl, Sys};

const ALPHA: f64 = 0.05;
const SEED: u64 = 42;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Result<Verdict> {
    Ok(Verdict {
        pass,
        detail: detail.into(),
    })
}

fn in_band(x: f64, lo: f64, hi: f64) -> bool {
    (lo..=hi).contains(&x)
}

fn null_size() -> Result<Verdict> {
    let dgp = DgpConfig::dgp1(0.5, 0.5, 1.0, 250, 3);
    let mut ok = true;
    let mut parts = Vec::new();
    for set in [Dif, Lev, Sys] {
        for kind in [Klm, GmmAr] {
            let test = TestSpec::new(kind, set);
            let f = rejection_frequency(&dgp, test, 0.5, ALPHA, 5000, SEED)?;
            ok &= in_band(f.frequency, 0.04, 0.065);
            parts.push(format!("{}={:.4}", test.label(), f.frequency));
        }
    }
    verdict(ok, format!("{} (band [0.040, 0.065])", parts.join(" ")))
}

fn plateaus() -> Result<Verdict> {
    let klm = |set| TestSpec::new(Klm, set);
    let mut ok = true;
    let mut parts = Vec::new();
    for sigma_c_sq in [0.0, 0.5, 1.0, 2.0] {
        let dgp = DgpConfig::dgp1(0.99, sigma_c_sq, 1.0, 250, 3);
        let f = rejection_frequency(&dgp, klm(Dif), 0.5, ALPHA, 5000, SEED)?;
        ok &= in_band(f.frequency, 0.03, 0.08);
        parts.push(format!("KLM-Dif(sc2={sigma_c_sq})={:.4}", f.frequency));
    }
    let dgp = DgpConfig::dgp1(0.99, 0.5, 1.0, 250, 3);
    for set in [Lev, Sys] {
        let f = rejection_frequency(&dgp, klm(set), 0.5, ALPHA, 5000, SEED)?;
        ok &= in_band(f.frequency, 0.03, 0.09);
        parts.push(format!("KLM-{set}(sc2=0.5)={:.4}", f.frequency));
    }
    verdict(ok, parts.join(" "))
}

fn identification_t4() -> Result<Verdict> {
    let t4 = DgpConfig::dgp1(0.95, 0.5, 1.0, 250, 4);
    let sys4 = rejection_frequency(&t4, TestSpec::new(Klm, Sys), 0.5, ALPHA, 5000, SEED)?.frequency;
    let as4 = rejection_frequency(&t4, TestSpec::new(Klm, As), 0.5, ALPHA, 5000, SEED)?.frequency;
    let t3 = DgpConfig::dgp1(0.95, 0.5, 1.0, 250, 3);
    let sys3 = rejection_frequency(&t3, TestSpec::new(Klm, Sys), 0.5, ALPHA, 5000, SEED)?.frequency;
    let ok = sys4 > 3.0 * ALPHA && as4 > 3.0 * ALPHA && sys4 - sys3 > 0.15;
    verdict(
        ok,
        format!(
            "KLM-Sys(T=4)={sys4:.4} KLM-AS(T=4)={as4:.4} (> {:.2}); KLM-Sys T=4 minus T=3 = {:.4} (> 0.15)",
            3.0 * ALPHA,
            sys4 - sys3
        ),
    )
}

fn uniform(seed: u64) -> f64 {
    (splitmix64(seed) >> 11) as f64 / (1u64 << 53) as f64
}

fn as_sys_equivalence() -> Result<Verdict> {
    let thetas: Vec<f64> = (0..21).map(|i| -0.5 + 0.07 * i as f64).collect();
    let mut worst = 0.0f64;
    for r in 0..100u64 {
        let seed = replication_seed(SEED, r);
        let t = if r % 2 == 0 { 4 } else { 5 };
        let theta0 = 0.99 * uniform(seed ^ 1);
        let sigma_c_sq = 2.0 * uniform(seed ^ 2);
        let panel = generate_panel(&DgpConfig::dgp1(theta0, sigma_c_sq, 1.0, 200, t), seed)?;
        for &th in &thetas {
            let a = robust_gmm_ar(As, t, &panel, th, ALPHA)?.statistic;
            let s = robust_gmm_ar(Sys, t, &panel, th, ALPHA)?.statistic;
            worst = worst.max((a - s).abs() / a.abs().max(s.abs()).max(1e-300));
        }
    }
    verdict(
        worst <= 1e-8,
        format!("max relative difference {worst:.2e} over 100 panels x 21 values (<= 1e-8)"),
    )
}

fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0f64, |acc, v| acc.max(v.abs()))
}

fn algebraic_identities() -> Result<Verdict> {
    let mut orth = 0.0f64;
    for (set, t) in [(As, 4), (Sys, 4), (As, 5), (Sys, 5)] {
        let sigma = vec![1.0, 1.5, 0.7, 2.0][..t - 1].to_vec();
        for i in 0..=400 {
            let theta = -2.0 + 0.01 * i as f64;
            let c = ortho_complement(set, t, theta)?.full();
            let af = repr_matrices(set, t, theta, &sigma)?.a_f;
            orth = orth.max(max_abs(&(c.transpose() * af)));
        }
    }

    let mut quad_err = 0.0f64;
    for (set, t) in [(As, 4), (Sys, 4), (As, 5), (Sys, 5)] {
        let panel = generate_panel(&DgpConfig::dgp1(0.9, 1.0, 1.0, 500, t), SEED)?;
        let quad = robust_quad(set, t, &panel)?;
        for i in 0..=40 {
            let theta = -2.0 + 0.1 * i as f64;
            let c = ortho_complement(set, t, theta)?.full();
            let f_bar = mean_moments(set, &panel, theta)?;
            let direct = c.transpose() * f_bar;
            let g = robust_eval(&quad, theta);
            quad_err = quad_err.max((g - &direct).amax() / (1.0 + direct.amax()));
        }
    }

    let mut stacking_exact = true;
    let mut fd_err = 0.0f64;
    for t in [4, 5] {
        let panel = generate_panel(&DgpConfig::dgp1(0.7, 1.0, 1.0, 50, t), SEED + 1)?;
        for row in panel.rows() {
            for theta in [-0.3, 0.4, 0.95, 1.3] {
                let (dif_f, dif_q) = moments_individual(Dif, row, theta)?;
                for (stacked, other) in [(As, Nl), (Sys, Lev)] {
                    let (sf, sq) = moments_individual(stacked, row, theta)?;
                    let (of, oq) = moments_individual(other, row, theta)?;
                    stacking_exact &=
                        sf == [dif_f.clone(), of].concat() && sq == [dif_q.clone(), oq].concat();
                }
                let h = 1e-5;
                let (up, _) = moments_individual(Nl, row, theta + h)?;
                let (down, _) = moments_individual(Nl, row, theta - h)?;
                let (_, q) = moments_individual(Nl, row, theta)?;
                for j in 0..q.len() {
                    let fd = (up[j] - down[j]) / (2.0 * h);
                    fd_err = fd_err.max((fd - q[j]).abs() / (1.0 + q[j].abs()));
                }
            }
        }
    }
    let ok = orth <= 1e-12 && quad_err <= 1e-10 && stacking_exact && fd_err <= 1e-6;
    verdict(
        ok,
        format!(
            "orthogonality {orth:.1e} (<= 1e-12), quadratic {quad_err:.1e} (<= 1e-10), stacking exact {stacking_exact}, NL derivative {fd_err:.1e} (<= 1e-6)"
        ),
    )
}

fn mean_moments(set: MomentSet, panel: &PanelData, theta: f64) -> Result<DVector<f64>> {
    let mut sum: Option<DVector<f64>> = None;
    for row in panel.rows() {
        let f = DVector::from_vec(moments_individual(set, row, theta)?.0);
        sum = Some(match sum {
            Some(s) => s + f,
            None => f,
        });
    }
    Ok(sum.expect("non-empty panel") / panel.n_individuals() as f64)
}

fn unit_root_limits() -> Result<Verdict> {
    let mut worst_z = 0.0f64;
    let mut collapse = true;
    for t in [4, 5] {
        let dgp = DgpConfig::dgp1(0.5, 1.0, 1.0, 100_000, t).with_drift(-5.0, 0.6);
        let panel = generate_panel(&dgp, 2024)?;
        let (la, lb, ld) = limit_abd(t, &vec![1.0; t - 1])?;
        for set in [Sys, As] {
            let quad = robust_quad(set, t, &panel)?;
            let n = quad.n() as f64;
            for (est, indiv, limit) in [
                (&quad.a, &quad.a_individual, &la),
                (&quad.b, &quad.b_individual, &lb),
                (&quad.d, &quad.d_individual, &ld),
            ] {
                for j in 0..est.len() {
                    let col = indiv.column(j);
                    let mean = col.mean();
                    let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
                    let se = (var / n).sqrt();
                    worst_z = worst_z.max((est[j] - limit[j]).abs() / se);
                }
            }
        }
        collapse &= (&la + &lb + &ld).iter().all(|v| *v == 0.0);
        collapse &= (&la * 2.0 + &lb).iter().all(|v| *v == 0.0);
    }
    verdict(
        worst_z <= 3.0 && collapse,
        format!("max |estimate - limit| / se = {worst_z:.2} (<= 3), homoskedastic collapse exact {collapse}"),
    )
}

fn local_table(t: usize, e: Vec<f64>, tests: Vec<TestSpec>) -> Result<PowerTable> {
    let spec = ExperimentSpec::new(
        DgpConfig::dgp1(0.99, 10.0, 1.0, 2000, t),
        Sweep::E { values: e },
        tests,
        ALPHA,
        2000,
        SEED,
    )
    .with_weight_mode(WeightMode::Oracle { sigma: 1.0 });
    local_power_curve(&spec)
}

fn local_power_agreement() -> Result<Verdict> {
    let grid: Vec<f64> = (0..10).map(|i| -5.0 + 0.5 * i as f64).collect();
    let tests = vec![
        TestSpec::new(Klm, As),
        TestSpec::new(Klm, Sys),
        TestSpec::new(OptimalAr, Sys),
    ];
    let labels: Vec<String> = tests.iter().map(|t| t.label()).collect();
    let mut ok = true;
    let mut parts = Vec::new();
    for t in [4, 5] {
        let table = local_table(t, grid.clone(), tests.clone())?;
        let mut worst = (0.0f64, 0.0f64);
        for &e in &grid {
            let f: Vec<f64> = labels
                .iter()
                .map(|l| table.frequency(e, l).expect("row present"))
                .collect();
            let spread = f.iter().cloned().fold(f64::MIN, f64::max)
                - f.iter().cloned().fold(f64::MAX, f64::min);
            if spread > worst.0 {
                worst = (spread, e);
            }
        }
        ok &= worst.0 <= 0.05;
        parts.push(format!("T={t}: max spread {:.4} at e={}", worst.0, worst.1));
    }
    verdict(
        ok,
        format!("{} over e in -5:-0.5:0.5 (<= 0.05)", parts.join(", ")),
    )
}

fn local_power_at_unit_root() -> String {
    let mut parts = Vec::new();
    for t in [4, 5] {
        for test in [
            TestSpec::new(Klm, As),
            TestSpec::new(Klm, Sys),
            TestSpec::new(OptimalAr, Sys),
        ] {
            match local_table(t, vec![0.0], vec![test]) {
                Ok(table) => parts.push(format!(
                    "T={t} {}={:.4}",
                    test.label(),
                    table.rows[0].rejection_frequency
                )),
                Err(e) => parts.push(format!("T={t} {}: {e}", test.label())),
            }
        }
    }
    parts.join("; ")
}

fn coverage() -> Result<Verdict> {
    let grid = ThetaGrid::default();
    let test = TestSpec::new(Klm, Sys);
    let strong = confidence_set_frequencies(
        &DgpConfig::dgp1(0.5, 0.5, 1.0, 250, 3),
        test,
        &grid,
        ALPHA,
        2000,
        SEED,
    )?;
    let weak = confidence_set_frequencies(
        &DgpConfig::dgp1(0.99, 0.5, 1.0, 250, 3),
        test,
        &grid,
        ALPHA,
        2000,
        SEED,
    )?;
    let ok = in_band(strong.coverage, 0.935, 0.965) && weak.unbounded > 0.5;
    verdict(
        ok,
        format!(
            "coverage {:.4} (0.95 +/- 0.015), unbounded share at theta0=0.99 {:.4} (> 0.5)",
            strong.coverage, weak.unbounded
        ),
    )
}

/// Regularized lower incomplete gamma by its power series.
fn oracle_gamma_p(a: f64, x: f64) -> f64 {
    // Gamma(a + 1) for a in {1/2, 1}
    let gamma_a1 = if a == 0.5 {
        0.5 * std::f64::consts::PI.sqrt()
    } else {
        1.0
    };
    let mut term = 1.0;
    let mut sum = 1.0;
    for n in 1..500 {
        term *= x / (a + n as f64);
        sum += term;
        if term < 1e-17 * sum {
            break;
        }
    }
    x.powf(a) * (-x).exp() * sum / gamma_a1
}

fn oracle_quantile(prob: f64, dof: usize) -> f64 {
    let (mut lo, mut hi) = (0.0f64, 100.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if oracle_gamma_p(dof as f64 / 2.0, mid / 2.0) < prob {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn distributions() -> Result<Verdict> {
    let q1 = chi2_quantile(0.95, 1)?;
    let q2 = chi2_quantile(0.95, 2)?;
    let (o1, o2) = (oracle_quantile(0.95, 1), oracle_quantile(0.95, 2));
    let mut nc = 0.0f64;
    for dof in 1..=10 {
        for i in 0..=200 {
            let x = 0.1 * i as f64;
            nc = nc.max((noncentral_chi2_cdf(x, dof, 0.0)? - chi2_cdf(x, dof)).abs());
        }
    }
    let ok = (q1 - 3.8415).abs() <= 1e-3
        && (q2 - 5.9915).abs() <= 1e-3
        && (q1 - o1).abs() <= 1e-3
        && (q2 - o2).abs() <= 1e-3
        && nc <= 1e-10;
    verdict(
        ok,
        format!("q(0.95,1)={q1:.5} oracle {o1:.5}, q(0.95,2)={q2:.5} oracle {o2:.5}, noncentral at delta=0 {nc:.1e}"),
    )
}

fn run_tables() -> Result<Vec<u8>> {
    let mut bytes = Vec::new();
    let power = ExperimentSpec::new(
        DgpConfig::dgp1(0.5, 0.5, 1.0, 250, 4),
        Sweep::Theta0 {
            values: vec![0.3, 0.6, 0.9],
            theta_star: 0.5,
        },
        vec![
            TestSpec::new(Klm, Sys),
            TestSpec::new(GmmAr, As),
            TestSpec::new(Klm, Dif),
        ],
        ALPHA,
        400,
        SEED,
    );
    write_power_table_csv(&power_curve(&power)?, &mut bytes)?;
    let local = ExperimentSpec::new(
        DgpConfig::dgp1(0.99, 10.0, 1.0, 2000, 5),
        Sweep::E {
            values: vec![-4.0, -2.0, -1.0],
        },
        vec![TestSpec::new(Klm, As), TestSpec::new(OptimalAr, Sys)],
        ALPHA,
        100,
        SEED,
    );
    write_power_table_csv(&local_power_curve(&local)?, &mut bytes)?;
    let sets = confidence_set_frequencies(
        &DgpConfig::dgp1(0.9, 0.5, 1.0, 250, 3),
        TestSpec::new(Klm, Sys),
        &ThetaGrid::new(-0.5, 1.5, 0.01)?,
        ALPHA,
        200,
        SEED,
    )?;
    bytes.extend(format!("{sets:?}\n").into_bytes());
    Ok(bytes)
}

fn determinism() -> Result<Verdict> {
    let mut outputs = Vec::new();
    for threads in [1, 2, 4, 7] {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| panelid::Error::Config(e.to_string()))?;
        outputs.push(pool.install(run_tables)?);
    }
    outputs.push(run_tables()?);
    let identical = outputs.windows(2).all(|w| w[0] == w[1]);
    verdict(
        identical,
        format!(
            "{} runs over 1, 2, 4, 7 and default threads, {} bytes each",
            outputs.len(),
            outputs[0].len()
        ),
    )
}

fn main() {
    type Criterion = (&'static str, fn() -> Result<Verdict>);
    let criteria: [Criterion; 10] = [
        ("null size calibration", null_size),
        ("non-identification plateaus", plateaus),
        ("identification with T=4", identification_t4),
        ("AS/Sys robust equivalence", as_sys_equivalence),
        ("algebraic identities", algebraic_identities),
        ("unit-root limits", unit_root_limits),
        ("local power agreement", local_power_agreement),
        ("confidence set coverage", coverage),
        ("distribution functions", distributions),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let (status, detail) = match check() {
            Ok(v) => (if v.pass { "PASS" } else { "FAIL" }, v.detail),
            Err(e) => ("FAIL", format!("error: {e}")),
        };
        failed += (status == "FAIL") as usize;
        println!(
            "{status} criterion {}: {name}: {detail} [{:.1}s]",
            i + 1,
            start.elapsed().as_secs_f64()
        );
        if i == 6 {
            println!("INFO criterion 7 at e=0: {}", local_power_at_unit_root());
        }
    }
    println!(
        "acceptance: {} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}

//! Local power against theta*(e) = 1 + e / N^(1/4) with data at theta0 = 0.99
//! and a large initial variance: KLM with AS and Sys moments next to the
//! optimally weighted robust test.

use panelid::model::DgpConfig;
use panelid::moments::MomentSet;
use panelid::montecarlo::{local_power_curve, ExperimentSpec, Sweep, TestSpec};
use panelid::robust::{local_theta, WeightMode};
use panelid::stats::TestKind;

fn main() -> panelid::Result<()> {
    let e: Vec<f64> = (0..9).map(|i| -4.5 + 0.5 * i as f64).collect();
    let tests = vec![
        TestSpec::new(TestKind::Klm, MomentSet::As),
        TestSpec::new(TestKind::Klm, MomentSet::Sys),
        TestSpec::new(TestKind::OptimalAr, MomentSet::Sys),
    ];
    let spec = ExperimentSpec::new(
        DgpConfig::dgp1(0.99, 10.0, 1.0, 2000, 4),
        Sweep::E { values: e.clone() },
        tests.clone(),
        0.05,
        200,
        42,
    )
    .with_weight_mode(WeightMode::Oracle { sigma: 1.0 });
    let table = local_power_curve(&spec)?;
    print!("{:>5} {:>8}", "e", "theta*");
    for t in &tests {
        print!(" {:>14}", t.label());
    }
    println!();
    for v in e {
        print!("{v:>5.1} {:>8.4}", local_theta(v, 2000));
        for t in &tests {
            print!(
                " {:>14.3}",
                table.frequency(v, &t.label()).unwrap_or(f64::NAN)
            );
        }
        println!();
    }
    Ok(())
}

//! Rejection frequencies of KLM tests of H0: theta = 0.5 over a range of
//! true values, with T = 3 and T = 4. Small replication count for speed.

use panelid::io::write_power_table_csv;
use panelid::model::DgpConfig;
use panelid::moments::MomentSet;
use panelid::montecarlo::{power_curve, ExperimentSpec, Sweep, TestSpec};
use panelid::stats::TestKind;

fn main() -> panelid::Result<()> {
    let theta0: Vec<f64> = (0..=10).map(|i| 0.09 * i as f64 + 0.09).collect();
    for t in [3, 4] {
        let mut sets = vec![MomentSet::Dif, MomentSet::Lev, MomentSet::Sys];
        if t == 4 {
            sets.push(MomentSet::As);
        }
        let spec = ExperimentSpec::new(
            DgpConfig::dgp1(0.5, 0.5, 1.0, 250, t),
            Sweep::Theta0 {
                values: theta0.clone(),
                theta_star: 0.5,
            },
            sets.into_iter()
                .map(|s| TestSpec::new(TestKind::Klm, s))
                .collect(),
            0.05,
            300,
            42,
        );
        let table = power_curve(&spec)?;
        println!("T={t}");
        write_power_table_csv(&table, std::io::stdout())?;
    }
    Ok(())
}

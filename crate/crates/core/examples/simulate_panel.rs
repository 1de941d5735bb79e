//! Simulates panels under each initial-condition design and prints the
//! cross-sectional mean and variance of every period.

use panelid::model::{generate_panel, sigma1_sq, DgpConfig, DgpVariant};

fn main() -> panelid::Result<()> {
    let base = DgpConfig::dgp1(0.8, 0.5, 1.0, 5000, 4);
    let designs = [
        ("DGP1", DgpVariant::Dgp1 { sigma1_sq: 1.0 }),
        ("DGP2", DgpVariant::Dgp2),
        ("DGP3", DgpVariant::Dgp3),
        ("DGP4", DgpVariant::Dgp4 { g: 5 }),
        ("DGP5", DgpVariant::Dgp5 { g: 5 }),
    ];
    for (name, variant) in designs {
        let cfg = DgpConfig {
            variant,
            sigma_mu_sq: 0.1,
            ..base.clone()
        };
        let panel = generate_panel(&cfg, 7)?;
        print!("{name} var(u_i1)={:.3}:", sigma1_sq(&cfg)?);
        for t in 0..panel.n_periods() {
            let (mean, var) = panel.column_moments(t);
            print!("  y{}: {mean:+.3}/{var:.3}", t + 1);
        }
        println!();
    }

    // theta0 drifting towards one as N grows
    for n in [100, 10_000, 1_000_000] {
        let cfg = DgpConfig::dgp1(0.0, 1.0, 1.0, n, 3).with_drift(-5.0, 0.6);
        println!("N={n}: effective theta0 = {:.5}", cfg.effective_theta()?);
    }
    Ok(())
}

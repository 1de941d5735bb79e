//! Chi-squared critical values and noncentral power approximations.

use panelid::distributions::{chi2_critical, chi2_quantile, chi2_sf, noncentral_chi2_sf};

fn main() -> panelid::Result<()> {
    for dof in 1..=5 {
        println!(
            "dof={dof}: 95% critical value {:.4}",
            chi2_critical(0.05, dof)?
        );
    }
    println!("median of chi2(3) = {:.4}", chi2_quantile(0.5, 3)?);
    println!("P(chi2(1) > 8) = {:.5}", chi2_sf(8.0, 1));
    // power of a one degree of freedom test as the noncentrality grows
    let crit = chi2_critical(0.05, 1)?;
    for delta in [0.0, 1.0, 4.0, 7.85, 16.0] {
        println!(
            "delta={delta:>5}: power {:.4}",
            noncentral_chi2_sf(crit, 1, delta)?
        );
    }
    Ok(())
}

//! 95% confidence sets by test inversion, one minus p-value curves and the
//! continuous updating estimator.

use panelid::inference::{confidence_set, cue_minimize, pvalue_curve, PanelStatistic, ThetaGrid};
use panelid::model::{generate_panel, DgpConfig};
use panelid::moments::MomentSet;
use panelid::stats::TestKind;

fn main() -> panelid::Result<()> {
    let grid = ThetaGrid::default();
    for (theta0, sigma_c_sq) in [(0.5, 0.5), (0.95, 0.0), (0.95, 0.5)] {
        let panel = generate_panel(&DgpConfig::dgp1(theta0, sigma_c_sq, 1.0, 250, 3), 11)?;
        println!("theta0={theta0}, sigma_c2={sigma_c_sq}");
        for set in [MomentSet::Dif, MomentSet::Lev, MomentSet::Sys] {
            let cs = confidence_set(TestKind::Klm, set, &panel, &grid, 0.05)?;
            let runs: Vec<String> = cs
                .intervals
                .iter()
                .map(|(lo, hi)| format!("[{lo:.3}, {hi:.3}]"))
                .collect();
            println!(
                "  KLM-{:<4} {:<17} {}",
                set.label(),
                cs.shape,
                runs.join(" ")
            );
        }
        let cue = cue_minimize(MomentSet::Sys, &panel, &grid, 3)?;
        let edge = if cue.at_boundary {
            " (grid boundary)"
        } else {
            ""
        };
        println!("  CUE (Sys) = {:.4}{edge}", cue.theta);
    }

    // coarse one minus p-value curve
    let panel = generate_panel(&DgpConfig::dgp1(0.95, 0.5, 1.0, 250, 4), 11)?;
    let stat = PanelStatistic::new(TestKind::Klm, MomentSet::As, &panel)?;
    let curve = pvalue_curve(|th| stat.evaluate(th), &ThetaGrid::new(0.0, 1.5, 0.1)?)?;
    for p in curve {
        println!("theta={:.1}  1-p={:.4}", p.theta, p.one_minus_p);
    }
    Ok(())
}

//! Panel CSV round trip and the JSON and CSV result formats.

use panelid::inference::{confidence_set, ThetaGrid};
use panelid::io::{read_panel_csv, write_panel_csv, write_results_to, Format, Results};
use panelid::model::{generate_panel, DgpConfig};
use panelid::moments::MomentSet;
use panelid::stats::{klm, TestKind};

fn main() -> panelid::Result<()> {
    let path = std::env::temp_dir().join("panelid_example_panel.csv");
    let panel = generate_panel(&DgpConfig::dgp1(0.6, 0.5, 1.0, 100, 3), 5)?;
    write_panel_csv(&panel, std::fs::File::create(&path)?)?;
    let back = read_panel_csv(&path)?;
    println!(
        "wrote and read {}x{} panel from {}",
        back.n_individuals(),
        back.n_periods(),
        path.display()
    );

    let outcome = klm(MomentSet::Sys, &back, 0.5, 0.05)?;
    write_results_to(Results::Outcome(&outcome), Format::Json, std::io::stdout())?;
    write_results_to(Results::Outcome(&outcome), Format::Csv, std::io::stdout())?;

    let cs = confidence_set(
        TestKind::Klm,
        MomentSet::Sys,
        &back,
        &ThetaGrid::new(-0.5, 1.5, 0.01)?,
        0.05,
    )?;
    write_results_to(Results::ConfidenceSet(&cs), Format::Json, std::io::stdout())?;
    std::fs::remove_file(&path)?;
    Ok(())
}

//! Quadratic robust sample moments: the complement of the moment loadings,
//! the coefficients (a, b, d) and their limits near the unit root.

use nalgebra::DVector;

use panelid::model::{generate_panel, DgpConfig};
use panelid::moments::MomentSet;
use panelid::robust::{
    as_sys_map, limit_abd, ortho_complement, repr_matrices, robust_eval, robust_quad,
};

fn main() -> panelid::Result<()> {
    for t in [4, 5] {
        let theta = 0.7;
        let c = ortho_complement(MomentSet::Sys, t, theta)?;
        let a_f = repr_matrices(MomentSet::Sys, t, theta, &vec![1.0; t - 1])?.a_f;
        let residual = (c.full().transpose() * a_f).amax();
        println!(
            "T={t}: p={}, p_max={}, max|A_perp' A_f| = {residual:.1e}",
            c.p, c.p_max
        );

        // drifting theta0 = 1 - 5 / N^0.6 with homoskedastic errors
        let dgp = DgpConfig::dgp1(0.0, 1.0, 1.0, 100_000, t).with_drift(-5.0, 0.6);
        let panel = generate_panel(&dgp, 2024)?;
        let (la, lb, ld) = limit_abd(t, &vec![1.0; t - 1])?;
        for set in [MomentSet::As, MomentSet::Sys] {
            let q = robust_quad(set, t, &panel)?;
            println!(
                "  {:<3} a={} b={} d={}",
                set.label(),
                show(&q.a),
                show(&q.b),
                show(&q.d)
            );
        }
        println!("  limit a={} b={} d={}", show(&la), show(&lb), show(&ld));

        // AS and Sys robust moments are linked by an invertible map
        let q_as = robust_quad(MomentSet::As, t, &panel)?;
        let q_sys = robust_quad(MomentSet::Sys, t, &panel)?;
        let mapped = as_sys_map(t, 0.9)? * robust_eval(&q_sys, 0.9);
        println!(
            "  |g_AS - M g_Sys| at 0.9 = {:.1e}",
            (robust_eval(&q_as, 0.9) - mapped).amax()
        );
    }
    Ok(())
}

fn show(v: &DVector<f64>) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.3}")).collect();
    format!("({})", parts.join(", "))
}

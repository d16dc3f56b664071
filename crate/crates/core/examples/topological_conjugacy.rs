//! Two conjugate systems share one Koopman matrix once the observables are
//! composed with the conjugating map.

use koopman_stitch::cases::{conjugacy_sampling, run_conjugacy};

fn main() -> koopman_stitch::Result<()> {
    let run = run_conjugacy(&conjugacy_sampling()?)?;
    println!("flow conjugacy defect {:.2e}", run.conjugacy.max_defect);
    println!("max |K_theta - K_psi| = {:.2e}", run.operator_gap);
    println!("distance to diag(e^-dt, e^-dt, e^-2dt) = {:.2e}", run.analytic_gap);
    for p in &run.correspondence.pairs {
        println!(
            "  λ = {:.6} {} defect {:.1e}",
            p.eigenvalue[0],
            if p.degenerate { "(cluster)" } else { "         " },
            p.defect
        );
    }
    println!("modes equal: {} (max deviation {:.1e})", run.modes.equal, run.modes.max_mode_deviation);
    Ok(())
}

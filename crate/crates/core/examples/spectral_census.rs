//! Count near-unit eigenvalues and locate the attractors they flag.

use koopman_stitch::cases::{census, CaseStudy, DEFAULT_SEED};
use koopman_stitch::linalg::DEFAULT_RANK_TOL;
use koopman_stitch::spectral::analyze;

fn main() -> koopman_stitch::Result<()> {
    for case in [CaseStudy::toggle(DEFAULT_SEED)?, CaseStudy::bilinear(DEFAULT_SEED)?] {
        let model = case.fit_rbf(&case.global_data()?, "global", false)?;
        let report = analyze(&model, case.unit_tol, DEFAULT_RANK_TOL)?;
        let summary = census(&model, &report, &case.eval_grid(), &case.targets)?;
        println!("{}: {} eigenvalues within {} of 1", case.name, summary.unit_census, case.unit_tol);
        for (z, loc) in summary.unit_eigenvalues.iter().zip(&summary.localizations) {
            println!(
                "  λ = {:.5}{:+.5}i  peaks at ({:.2}, {:.2})",
                z[0], z[1], loc.peak_point[0], loc.peak_point[1]
            );
        }
        println!("  geometric multiplicity {}", summary.rho);
    }
    Ok(())
}

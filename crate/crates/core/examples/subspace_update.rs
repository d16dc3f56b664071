//! Decide whether a model trained on one basin can serve new initial states.

use koopman_stitch::cases::{basin_update_checks, CaseStudy, DEFAULT_SEED};

fn main() -> koopman_stitch::Result<()> {
    let case = CaseStudy::toggle(DEFAULT_SEED)?;
    let data = [case.local_data(0)?, case.local_data(1)?];
    let (cross, inside) = basin_update_checks(&case, &data)?;
    for (label, d) in [("other basin", cross), ("own basin", inside)] {
        println!(
            "{label:11}: {:?}  error {:.3} vs reference {:.3} at horizon {}",
            d.decision, d.new_error, d.reference_error, d.horizon
        );
    }
    Ok(())
}

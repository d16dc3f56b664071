//! Simulate the toggle switch from a 9×9 grid and fit a 30-term RBF model.

use koopman_stitch::cases::{CaseStudy, DEFAULT_SEED};
use koopman_stitch::edmd::predict_states;

fn main() -> koopman_stitch::Result<()> {
    let case = CaseStudy::toggle(DEFAULT_SEED)?;
    let data = case.global_data()?;
    println!(
        "{} trajectories, {} snapshot pairs",
        data.trajectories.len(),
        data.snapshots.len()
    );

    let model = case.fit_rbf(&data, "global", false)?;
    println!(
        "K is {}x{}, residual {:.3e}, rank {}",
        model.n_obs(),
        model.n_obs(),
        model.fit_residual,
        model.effective_rank
    );

    let states = predict_states(&model, &[3.0, 0.5], 20)?;
    for t in [0, 5, 10, 20] {
        println!("t = {t:2}: ({:.3}, {:.3})", states[(t, 0)], states[(t, 1)]);
    }
    Ok(())
}

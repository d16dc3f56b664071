//! Koopman mode decomposition of a linear map, checked against matrix powers.

use faer::Mat;
use koopman_stitch::dictionary::Dictionary;
use koopman_stitch::edmd::{predict_states, KoopmanModel};
use koopman_stitch::spectral::{analyze, koopman_modes};

fn main() -> koopman_stitch::Result<()> {
    // x_{t+1} = A x_t with A = [[0.9, 0.1], [0, 0.8]]; rows carry Aᵀ
    let k = Mat::from_fn(2, 2, |i, j| [[0.9, 0.0], [0.1, 0.8]][i][j]);
    let model = KoopmanModel::from_matrix(k, Dictionary::identity(2), "linear", 1.0)?;
    let report = analyze(&model, 0.05, 1e-10)?;
    let x0 = [1.0, -2.0];
    let modes = koopman_modes(&model, &report, &x0)?;
    for j in 0..2 {
        let m = modes.mode(j);
        println!(
            "λ = {:.2}  φ(x0) = {:+.4}  mode = ({:+.4}, {:+.4})",
            modes.eigenvalues[j].re, modes.initial_weights[j].re, m[0].re, m[1].re
        );
    }
    let direct = predict_states(&model, &x0, 10)?;
    let rec = modes.reconstruct(10);
    println!(
        "x_10: modes ({:.6}, {:.6}), powers ({:.6}, {:.6})",
        rec[0].re, rec[1].re, direct[(10, 0)], direct[(10, 1)]
    );
    Ok(())
}

//! Recover an operator on one region from its mirror image.

use faer::Mat;
use koopman_stitch::cases::{run_case, CaseStudy, DEFAULT_SEED};
use koopman_stitch::dictionary::Dictionary;
use koopman_stitch::edmd::KoopmanModel;
use koopman_stitch::equivariance::{global_from_one, GroupAction};
use koopman_stitch::stitching::SubspacePredicate;
use koopman_stitch::GridBox;

fn show(name: &str, k: &Mat<f64>) {
    // printed in the column convention
    println!("{name}: [[{:.4}, {:.4}], [{:.4}, {:.4}]]", k[(0, 0)], k[(1, 0)], k[(0, 1)], k[(1, 1)]);
}

fn main() -> koopman_stitch::Result<()> {
    let k_right = Mat::from_fn(2, 2, |i, j| [[0.9782, 0.7755], [0.0253, -0.0955]][i][j]);
    let source = KoopmanModel::from_matrix(k_right, Dictionary::identity(2), "M_right", 1.0)?;
    let preds = SubspacePredicate::bilinear_pair();
    let bx = GridBox::new(vec![-3.0, -1.0], vec![3.0, 3.0], vec![9, 9])?;
    let global = global_from_one(&source, &[GroupAction::reflect_axis(0, 2)], &preds, &bx)?;
    show("K_right", &global.blocks[0].model.k_matrix);
    show("K_left ", &global.blocks[1].model.k_matrix);

    let run = run_case(&CaseStudy::bilinear(DEFAULT_SEED)?)?;
    println!(
        "from data: transported vs fitted K_left rel. error {:.2e} (reflection defect {:.1e})",
        run.transport.relative_error, run.transport.equivariance.max_defect
    );
    Ok(())
}

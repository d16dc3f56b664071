//! Extended dynamic mode decomposition in the row convention
//! `Ψ(x_{t+1}) ≈ Ψ(x_t) K`, plus multi-step prediction error functionals.

use std::path::Path;

use faer::{Mat, MatRef};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dictionary::Dictionary;
use crate::dynamics::{integrate_sampled, SnapshotSet, VectorField};
use crate::error::{Error, Result};
use crate::linalg::{self, serde_matrix, serde_matrix_opt, Matrix};

/// Default reuse threshold for the subspace-update check.
pub const DEFAULT_UPDATE_TOL: f64 = 1e-3;

/// Provenance of a model obtained by similarity transport.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportRecord {
    pub source_tag: String,
    pub action: String,
    #[serde(with = "serde_matrix")]
    pub conjugator: Matrix,
}

/// A finite-dimensional Koopman approximation on one training domain.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KoopmanModel {
    pub domain_tag: String,
    pub dt: f64,
    pub fit_residual: f64,
    pub effective_rank: usize,
    pub rank_deficient: bool,
    pub dictionary: Dictionary,
    #[serde(with = "serde_matrix")]
    pub k_matrix: Matrix,
    /// Observable-to-state projector `B` with `Ψ(x) B ≈ x`.
    #[serde(default, skip_serializing_if = "Option::is_none", with = "serde_matrix_opt")]
    pub projector: Option<Matrix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transport: Option<TransportRecord>,
}

impl KoopmanModel {
    /// Wrap an explicit matrix, e.g. a fixture or a reference operator.
    pub fn from_matrix(k_matrix: Matrix, dictionary: Dictionary, domain_tag: &str, dt: f64) -> Result<Self> {
        let m = KoopmanModel {
            domain_tag: domain_tag.to_string(),
            dt,
            fit_residual: 0.0,
            effective_rank: dictionary.n_obs,
            rank_deficient: false,
            projector: dictionary.state_inclusive.then(|| coordinate_selector(dictionary.n_obs, dictionary.dim)),
            dictionary,
            k_matrix,
            transport: None,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn n_obs(&self) -> usize {
        self.k_matrix.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        self.dictionary.validate()?;
        let n = self.dictionary.n_obs;
        if self.k_matrix.shape() != (n, n) {
            return Err(Error::ShapeMismatch(format!(
                "K is {:?} but the dictionary has {n} observables",
                self.k_matrix.shape()
            )));
        }
        if let Some(b) = &self.projector {
            if b.shape() != (n, self.dictionary.dim) {
                return Err(Error::ShapeMismatch("projector shape".into()));
            }
        }
        for j in 0..n {
            for i in 0..n {
                if !self.k_matrix[(i, j)].is_finite() {
                    return Err(Error::InvalidArgument("K has non-finite entries".into()));
                }
            }
        }
        if !(self.fit_residual >= 0.0) {
            return Err(Error::InvalidArgument("negative fit residual".into()));
        }
        Ok(())
    }

    /// The projector, falling back to the coordinate selector for
    /// state-inclusive dictionaries.
    pub fn state_projector(&self) -> Result<Matrix> {
        if let Some(b) = &self.projector {
            return Ok(b.clone());
        }
        if self.dictionary.state_inclusive {
            return Ok(coordinate_selector(self.n_obs(), self.dictionary.dim));
        }
        Err(Error::InvalidArgument(format!(
            "model `{}` has no observable-to-state projector",
            self.domain_tag
        )))
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        crate::io::write_json(path, self)
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let m: KoopmanModel = crate::io::read_json(path)?;
        m.validate()?;
        Ok(m)
    }
}

/// `N × n` matrix whose top `n × n` block is the identity.
pub fn coordinate_selector(n_obs: usize, dim: usize) -> Matrix {
    Mat::from_fn(n_obs, dim, |i, j| if i == j { 1.0 } else { 0.0 })
}

/// Solve `min ‖Y_pr K − Y_fw‖_F` with the truncated-SVD pseudoinverse and
/// fit the state projector `min ‖Y_pr B − X_pr‖_F` from the same factorization.
pub fn fit(snapshots: &SnapshotSet, dict: &Dictionary, domain_tag: &str, rank_tol: f64) -> Result<KoopmanModel> {
    if snapshots.is_empty() {
        return Err(Error::EmptyInput("no snapshot pairs".into()));
    }
    if snapshots.dim() != dict.dim {
        return Err(Error::ShapeMismatch(format!(
            "snapshots have dimension {}, dictionary expects {}",
            snapshots.dim(),
            dict.dim
        )));
    }
    if !(rank_tol > 0.0) {
        return Err(Error::InvalidArgument("rank_tol must be positive".into()));
    }
    let y_pr = dict.evaluate(snapshots.x_pr.as_ref())?.values;
    let y_fw = dict.evaluate(snapshots.x_fw.as_ref())?.values;
    let n = dict.n_obs;
    let d = dict.dim;
    let rhs = Mat::from_fn(y_pr.nrows(), n + d, |i, j| {
        if j < n {
            y_fw[(i, j)]
        } else {
            snapshots.x_pr[(i, j - n)]
        }
    });
    let (sol, rank) = linalg::lstsq(y_pr.as_ref(), rhs.as_ref(), rank_tol)?;
    let k = sol.as_ref().subcols(0, n).to_owned();
    let b = sol.as_ref().subcols(n, d).to_owned();
    let fit_residual = residual(y_pr.as_ref(), k.as_ref(), y_fw.as_ref());
    let model = KoopmanModel {
        domain_tag: domain_tag.to_string(),
        dt: snapshots.dt,
        fit_residual,
        effective_rank: rank,
        rank_deficient: rank < n,
        dictionary: dict.clone(),
        k_matrix: k,
        projector: Some(b),
        transport: None,
    };
    model.validate()?;
    Ok(model)
}

/// Plain DMD on the raw states.
pub fn dmd(snapshots: &SnapshotSet, rank_tol: f64) -> Result<Matrix> {
    Ok(linalg::lstsq(snapshots.x_pr.as_ref(), snapshots.x_fw.as_ref(), rank_tol)?.0)
}

/// `‖Y_pr K − Y_fw‖_F`.
pub fn residual(y_pr: MatRef<'_, f64>, k: MatRef<'_, f64>, y_fw: MatRef<'_, f64>) -> f64 {
    (y_pr * k - y_fw).norm_l2()
}

/// Rows `Ψ(x0) Kʲ` for `j = 0..=n_steps`.
pub fn predict(model: &KoopmanModel, x0: &[f64], n_steps: usize) -> Result<Matrix> {
    if x0.len() != model.dictionary.dim {
        return Err(Error::ShapeMismatch("initial state dimension".into()));
    }
    let row = model.dictionary.eval(x0);
    Ok(propagate(&row, model.k_matrix.as_ref(), n_steps))
}

pub(crate) fn propagate(row: &[f64], k: MatRef<'_, f64>, n_steps: usize) -> Matrix {
    let n = row.len();
    let mut out = Mat::zeros(n_steps + 1, n);
    for (j, &v) in row.iter().enumerate() {
        out[(0, j)] = v;
    }
    for s in 1..=n_steps {
        let next = out.as_ref().subrows(s - 1, 1) * k;
        for j in 0..n {
            out[(s, j)] = next[(0, j)];
        }
    }
    out
}

/// Predicted states `Ψ(x0) Kʲ B`.
pub fn predict_states(model: &KoopmanModel, x0: &[f64], n_steps: usize) -> Result<Matrix> {
    let b = model.state_projector()?;
    Ok(predict(model, x0, n_steps)? * b.as_ref())
}

/// Worst-case observable-space prediction error per horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorCurve {
    pub horizon: Vec<usize>,
    pub values: Vec<f64>,
}

impl ErrorCurve {
    pub fn at(&self, n: usize) -> f64 {
        self.values[n]
    }
}

/// `values[n] = max_{x0} ‖Ψ(Tⁿ x0) − Ψ(x0) Kⁿ‖₂` for `n = 0..=horizon`, with
/// `T` the `dt`-flow of `field` resolved by `substeps` RK4 steps.
pub fn error_curve(
    model: &KoopmanModel,
    test_points: &[Vec<f64>],
    field: &VectorField,
    horizon: usize,
    substeps: usize,
) -> Result<ErrorCurve> {
    if horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    if field.dim() != model.dictionary.dim {
        return Err(Error::ShapeMismatch("vector field and dictionary dimensions differ".into()));
    }
    let per_point: Vec<Vec<f64>> = test_points
        .par_iter()
        .map(|x0| -> Result<Vec<f64>> {
            let truth = integrate_sampled(field, x0, model.dt, horizon, substeps)?;
            let pred = predict(model, x0, horizon)?;
            let mut row = vec![0.0; model.n_obs()];
            Ok((0..=horizon)
                .map(|s| {
                    model.dictionary.eval_into(&truth.states[s], &mut row);
                    row.iter()
                        .enumerate()
                        .map(|(j, v)| (v - pred[(s, j)]).powi(2))
                        .sum::<f64>()
                        .sqrt()
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    let mut values = vec![0.0f64; horizon + 1];
    for errs in &per_point {
        for (m, e) in values.iter_mut().zip(errs) {
            *m = m.max(*e);
        }
    }
    Ok(ErrorCurve {
        horizon: (0..=horizon).collect(),
        values,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateChoice {
    Reuse,
    Refit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpdateDecision {
    pub decision: UpdateChoice,
    pub horizon: usize,
    pub new_error: f64,
    pub reference_error: f64,
    pub tol: f64,
}

/// Reuse the model on `new_points` when its horizon error there does not
/// exceed the error on `reference_points` (the training domain) by more
/// than `tol`; otherwise a new dictionary and fit are needed.
pub fn subspace_update_decision(
    model: &KoopmanModel,
    reference_points: &[Vec<f64>],
    new_points: &[Vec<f64>],
    field: &VectorField,
    horizon: usize,
    substeps: usize,
    tol: f64,
) -> Result<UpdateDecision> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument("update tolerance must be positive".into()));
    }
    let reference_error = error_curve(model, reference_points, field, horizon, substeps)?.at(horizon);
    let new_error = if new_points.is_empty() {
        0.0
    } else {
        error_curve(model, new_points, field, horizon, substeps)?.at(horizon)
    };
    let decision = if new_error <= reference_error + tol {
        UpdateChoice::Reuse
    } else {
        UpdateChoice::Refit
    };
    Ok(UpdateDecision {
        decision,
        horizon,
        new_error,
        reference_error,
        tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{make_snapshots, preset, sample_grid, simulate, GridBox};
    use crate::linalg::{from_rows, max_abs_diff, DEFAULT_RANK_TOL};

    fn linear_snapshots() -> SnapshotSet {
        let a = [[0.9, 0.1], [0.0, 0.8]];
        let mut pr = Vec::new();
        let mut fw = Vec::new();
        for i in 0..10 {
            let x = [1.0 + 0.3 * i as f64, (0.7 * i as f64).sin()];
            pr.push(x.to_vec());
            fw.push(vec![a[0][0] * x[0] + a[0][1] * x[1], a[1][0] * x[0] + a[1][1] * x[1]]);
        }
        SnapshotSet::from_matrices(from_rows(&pr).unwrap(), from_rows(&fw).unwrap(), 1.0).unwrap()
    }

    #[test]
    fn recovers_linear_map_transposed() {
        let m = fit(&linear_snapshots(), &Dictionary::identity(2), "global", DEFAULT_RANK_TOL).unwrap();
        // row convention: x_{t+1}ᵀ = x_tᵀ Aᵀ
        let at = from_rows(&[vec![0.9, 0.0], vec![0.1, 0.8]]).unwrap();
        assert!(max_abs_diff(m.k_matrix.as_ref(), at.as_ref()) < 1e-10);
        assert!(m.fit_residual < 1e-12);
        assert!(!m.rank_deficient);
        let b = m.projector.unwrap();
        assert!(max_abs_diff(b.as_ref(), Matrix::identity(2, 2).as_ref()) < 1e-12);
    }

    #[test]
    fn identity_dynamics_give_identity() {
        let s = linear_snapshots();
        let same = SnapshotSet::from_matrices(s.x_pr.clone(), s.x_pr.clone(), 1.0).unwrap();
        let m = fit(&same, &Dictionary::identity(2), "g", DEFAULT_RANK_TOL).unwrap();
        assert!(max_abs_diff(m.k_matrix.as_ref(), Matrix::identity(2, 2).as_ref()) < 1e-10);
    }

    #[test]
    fn dmd_matches_identity_dictionary() {
        let s = linear_snapshots();
        let m = fit(&s, &Dictionary::identity(2), "g", DEFAULT_RANK_TOL).unwrap();
        assert!(max_abs_diff(m.k_matrix.as_ref(), dmd(&s, DEFAULT_RANK_TOL).unwrap().as_ref()) <= 1e-14);
    }

    #[test]
    fn rank_deficiency_is_recorded() {
        let d = Dictionary::parse_custom("x1; x2; x1 + x2", 2).unwrap();
        let m = fit(&linear_snapshots(), &d, "g", DEFAULT_RANK_TOL).unwrap();
        assert!(m.rank_deficient);
        assert_eq!(m.effective_rank, 2);
    }

    #[test]
    fn fit_rejects_bad_input() {
        let s = linear_snapshots();
        assert!(matches!(fit(&s, &Dictionary::identity(3), "g", 1e-10), Err(Error::ShapeMismatch(_))));
        let empty = SnapshotSet::from_matrices(Mat::zeros(0, 2), Mat::zeros(0, 2), 1.0).unwrap();
        assert!(matches!(fit(&empty, &Dictionary::identity(2), "g", 1e-10), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn prediction_rows() {
        let k = from_rows(&[vec![0.5, 0.0], vec![0.0, 2.0]]).unwrap();
        let m = KoopmanModel::from_matrix(k, Dictionary::identity(2), "g", 1.0).unwrap();
        let p = predict(&m, &[1.0, 1.0], 3).unwrap();
        assert_eq!(crate::linalg::to_rows(p.as_ref()), vec![
            vec![1.0, 1.0],
            vec![0.5, 2.0],
            vec![0.25, 4.0],
            vec![0.125, 8.0]
        ]);
        assert_eq!(predict(&m, &[3.0, 4.0], 0).unwrap().nrows(), 1);
    }

    #[test]
    fn exact_linear_model_has_no_prediction_error() {
        let field = VectorField::linear("decay", vec![vec![-0.5, 0.2], vec![0.0, -1.0]]).unwrap();
        let ics = sample_grid(&GridBox::square(-1.0, 1.0, 4)).unwrap();
        let snaps = make_snapshots(&simulate(&field, &ics, 0.1, 10, 1).unwrap()).unwrap();
        let m = fit(&snaps, &Dictionary::identity(2), "g", DEFAULT_RANK_TOL).unwrap();
        let curve = error_curve(&m, &ics, &field, 15, 1).unwrap();
        assert_eq!(curve.values.len(), 16);
        assert!(curve.values.iter().all(|&v| v < 1e-8));
        let d = subspace_update_decision(&m, &ics, &[], &field, 5, 1, 1e-3).unwrap();
        assert_eq!(d.decision, UpdateChoice::Reuse);
    }

    #[test]
    fn one_step_error_bounded_by_residual() {
        let field = preset("bilinear_quadratic").unwrap();
        let ics = sample_grid(&GridBox::new(vec![-2.0, -1.0], vec![2.0, 2.0], vec![5, 5]).unwrap()).unwrap();
        let trajs = simulate(&field, &ics, 0.5, 1, 5).unwrap();
        let snaps = make_snapshots(&trajs).unwrap();
        let dict = Dictionary::polynomial_up_to(2, 2).unwrap();
        let m = fit(&snaps, &dict, "g", DEFAULT_RANK_TOL).unwrap();
        let curve = error_curve(&m, &ics, &field, 1, 5).unwrap();
        assert!(curve.values[0] == 0.0);
        assert!(curve.values[1] <= m.fit_residual * (1.0 + 1e-12));
    }

    #[test]
    fn model_json_round_trip() {
        let m = fit(&linear_snapshots(), &Dictionary::identity(2), "M_left", DEFAULT_RANK_TOL).unwrap();
        let v: serde_json::Value = serde_json::to_value(&m).unwrap();
        for key in ["domain_tag", "dt", "fit_residual", "dictionary", "k_matrix"] {
            assert!(v.get(key).is_some(), "{key}");
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        m.write_json(&path).unwrap();
        let back = KoopmanModel::read_json(&path).unwrap();
        assert_eq!(back.k_matrix, m.k_matrix);
        assert_eq!(back.fit_residual, m.fit_residual);
        assert_eq!(back.projector, m.projector);
    }
}

//! Finite linear symmetry actions, their representations on dictionaries, and
//! transport of local Koopman operators between symmetric regions.

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::dictionary::{Basis, Dictionary};
use crate::dynamics::{random_points, GridBox, VectorField};
use crate::edmd::{KoopmanModel, TransportRecord};
use crate::error::{Error, Result};
use crate::linalg::{self, serde_matrix_opt, Matrix};
use crate::stitching::{stitch, StitchedModel, SubspacePredicate};

/// Largest condition number accepted for a representation.
pub const MAX_REP_CONDITION: f64 = 1e8;
/// Tolerance for `Ψ(g·x) = Ψ(x) γ` on sampled points.
pub const REP_CONSISTENCY_TOL: f64 = 1e-9;
/// Tolerance for matching transformed RBF centers.
pub const CENTER_MATCH_TOL: f64 = 1e-6;
const REP_SAMPLES: usize = 128;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum ActionKind {
    /// `(x1, x2) ↦ (x2, x1)`.
    Swap {},
    /// Negate one coordinate (0-based axis).
    ReflectAxis { axis: usize, dim: usize },
    /// `x ↦ G x` for a general invertible `G` (row-major).
    Matrix { matrix: Vec<Vec<f64>> },
}

/// A group element acting linearly on states, optionally with a precomputed
/// observable-space representation `rep` (`Ψ(g·x) = Ψ(x)·rep`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupAction {
    pub name: String,
    #[serde(flatten)]
    pub kind: ActionKind,
    #[serde(default, skip_serializing_if = "Option::is_none", with = "serde_matrix_opt")]
    pub rep: Option<Matrix>,
}

impl GroupAction {
    pub fn swap() -> Self {
        GroupAction {
            name: "swap".into(),
            kind: ActionKind::Swap {},
            rep: None,
        }
    }

    pub fn reflect_axis(axis: usize, dim: usize) -> Self {
        GroupAction {
            name: format!("reflect_x{}", axis + 1),
            kind: ActionKind::ReflectAxis { axis, dim },
            rep: None,
        }
    }

    pub fn matrix(name: &str, g: Vec<Vec<f64>>) -> Self {
        GroupAction {
            name: name.into(),
            kind: ActionKind::Matrix { matrix: g },
            rep: None,
        }
    }

    /// The state matrix `G` of `x ↦ G x`.
    pub fn state_matrix(&self) -> Result<Matrix> {
        match &self.kind {
            ActionKind::Swap {} => linalg::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]),
            ActionKind::ReflectAxis { axis, dim } => {
                if axis >= dim {
                    return Err(Error::InvalidArgument("reflection axis out of range".into()));
                }
                Ok(Mat::from_fn(*dim, *dim, |i, j| match (i == j, i == *axis) {
                    (true, true) => -1.0,
                    (true, false) => 1.0,
                    _ => 0.0,
                }))
            }
            ActionKind::Matrix { matrix } => {
                let g = linalg::from_rows(matrix)?;
                if g.nrows() != g.ncols() {
                    return Err(Error::ShapeMismatch("action matrix must be square".into()));
                }
                Ok(g)
            }
        }
    }

    pub fn dim(&self) -> Result<usize> {
        Ok(self.state_matrix()?.nrows())
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        let g = self.state_matrix()?;
        if x.len() != g.ncols() {
            return Err(Error::ShapeMismatch("action and state dimensions differ".into()));
        }
        Ok((0..g.nrows()).map(|i| (0..g.ncols()).map(|j| g[(i, j)] * x[j]).sum()).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquivarianceCheck {
    pub holds: bool,
    pub max_defect: f64,
    pub tol: f64,
}

/// `max ‖T(g·x) − g·T(x)‖` over random samples, with `T` the sampled flow.
pub fn check_equivariance(
    field: &VectorField,
    action: &GroupAction,
    dt: f64,
    substeps: usize,
    working_box: &GridBox,
    samples: usize,
    tol: f64,
) -> Result<EquivarianceCheck> {
    if action.dim()? != field.dim() {
        return Err(Error::ShapeMismatch("action and vector field dimensions differ".into()));
    }
    let mut max_defect = 0.0f64;
    for x in random_points(working_box, samples, 0xe9u64)? {
        // a flow leaving the field's domain counts as an unbounded defect
        let d = match (field.flow(&action.apply(&x)?, dt, substeps), field.flow(&x, dt, substeps)) {
            (Ok(a), Ok(tx)) => {
                let b = action.apply(&tx)?;
                a.iter().zip(&b).map(|(u, v)| (u - v).powi(2)).sum::<f64>().sqrt()
            }
            _ => f64::INFINITY,
        };
        max_defect = max_defect.max(d);
    }
    Ok(EquivarianceCheck {
        holds: max_defect <= tol,
        max_defect,
        tol,
    })
}

/// Similarity transport `γ K γ⁻¹`. With `Ψ(g·x) = Ψ(x) γ_g`, the operator on
/// the image region is obtained by passing `γ = γ_g⁻¹`.
pub fn transport(model: &KoopmanModel, gamma: &Matrix, target_tag: &str, action_name: &str) -> Result<KoopmanModel> {
    let n = model.n_obs();
    if gamma.shape() != (n, n) {
        return Err(Error::ShapeMismatch(format!(
            "representation is {:?}, model has {n} observables",
            gamma.shape()
        )));
    }
    let cond = linalg::condition_number(linalg::to_complex(gamma.as_ref()).as_ref())?;
    if !(cond < MAX_REP_CONDITION) {
        return Err(Error::SingularRepresentation { cond });
    }
    let inv = linalg::inverse(gamma.as_ref());
    let k = gamma * &model.k_matrix * &inv;
    Ok(KoopmanModel {
        domain_tag: target_tag.to_string(),
        k_matrix: k,
        projector: None,
        transport: Some(TransportRecord {
            source_tag: model.domain_tag.clone(),
            action: action_name.to_string(),
            conjugator: gamma.clone(),
        }),
        ..model.clone()
    })
}

/// The representation `γ` with `Ψ(g·x) = Ψ(x) γ`: `Gᵀ` on state coordinates,
/// the induced permutation on RBF centers, and a least-squares fit (verified
/// on samples) for polynomial dictionaries.
pub fn rep_for_dictionary(action: &GroupAction, dict: &Dictionary, working_box: &GridBox) -> Result<Matrix> {
    if let Some(rep) = &action.rep {
        verify_rep(action, dict, rep, working_box)?;
        return Ok(rep.clone());
    }
    let g = action.state_matrix()?;
    if g.nrows() != dict.dim {
        return Err(Error::ShapeMismatch("action and dictionary dimensions differ".into()));
    }
    let n = dict.n_obs;
    let rep = match &dict.basis {
        Basis::Identity {} => g.transpose().to_owned(),
        Basis::Rbf {
            centers,
            prepend_state,
            ..
        } => {
            let gtg = g.transpose() * &g;
            if linalg::max_abs_diff(gtg.as_ref(), Matrix::identity(dict.dim, dict.dim).as_ref()) > 1e-12 {
                return Err(Error::NonEquivariantDictionary(format!(
                    "{}: RBF permutation needs an orthogonal action",
                    action.name
                )));
            }
            let off = if *prepend_state { dict.dim } else { 0 };
            let mut rep = Mat::zeros(n, n);
            for i in 0..off {
                for j in 0..off {
                    rep[(i, j)] = g[(j, i)];
                }
            }
            // ψ_i(g·x) = ψ_{π(i)}(x) where c_{π(i)} = g⁻¹ c_i = Gᵀ c_i
            for (i, c) in centers.iter().enumerate() {
                let pre: Vec<f64> = (0..dict.dim).map(|r| (0..dict.dim).map(|k| g[(k, r)] * c[k]).sum()).collect();
                let k = centers
                    .iter()
                    .position(|d| d.iter().zip(&pre).all(|(a, b)| (a - b).abs() <= CENTER_MATCH_TOL))
                    .ok_or_else(|| {
                        Error::NonEquivariantDictionary(format!(
                            "{}: center {c:?} has no partner under the action",
                            action.name
                        ))
                    })?;
                rep[(off + k, off + i)] = 1.0;
            }
            rep
        }
        _ => {
            let pts = random_points(working_box, REP_SAMPLES, 0x9a11)?;
            let moved: Vec<Vec<f64>> = pts.iter().map(|p| action.apply(p)).collect::<Result<_>>()?;
            let a = dict.evaluate_points(&pts)?.values;
            let b = dict.evaluate_points(&moved)?.values;
            linalg::lstsq(a.as_ref(), b.as_ref(), linalg::DEFAULT_RANK_TOL)?.0
        }
    };
    verify_rep(action, dict, &rep, working_box)?;
    Ok(rep)
}

/// Check `Ψ(g·x) = Ψ(x) γ` on sampled points of the box.
pub fn verify_rep(action: &GroupAction, dict: &Dictionary, rep: &Matrix, working_box: &GridBox) -> Result<f64> {
    if rep.shape() != (dict.n_obs, dict.n_obs) {
        return Err(Error::ShapeMismatch("representation size".into()));
    }
    let pts = random_points(working_box, REP_SAMPLES, 0x7e57)?;
    let mut worst = 0.0f64;
    for p in &pts {
        let lhs = dict.eval(&action.apply(p)?);
        let row = dict.eval(p);
        for (j, l) in lhs.iter().enumerate() {
            let r: f64 = row.iter().enumerate().map(|(i, v)| v * rep[(i, j)]).sum();
            worst = worst.max((l - r).abs());
        }
    }
    if !(worst <= REP_CONSISTENCY_TOL) {
        return Err(Error::NonEquivariantDictionary(format!(
            "{}: representation defect {worst:.3e}",
            action.name
        )));
    }
    Ok(worst)
}

/// Transport `model_p` through every action and stitch the results.
/// `predicates[0]` is the region of `model_p`, `predicates[i + 1]` the image
/// region of `actions[i]`.
pub fn global_from_one(
    model_p: &KoopmanModel,
    actions: &[GroupAction],
    predicates: &[SubspacePredicate],
    working_box: &GridBox,
) -> Result<StitchedModel> {
    if predicates.len() != actions.len() + 1 {
        return Err(Error::ShapeMismatch(format!(
            "{} actions need {} predicates, got {}",
            actions.len(),
            actions.len() + 1,
            predicates.len()
        )));
    }
    let mut locals = vec![(predicates[0].clone(), model_p.clone())];
    for (action, pred) in actions.iter().zip(&predicates[1..]) {
        let rep = rep_for_dictionary(action, &model_p.dictionary, working_box)?;
        let rep_inv = linalg::inverse(rep.as_ref());
        let mut moved = transport(model_p, &rep_inv, &pred.name, &action.name)?;
        // x_q = g·x_p gives Ψ(x_q) γ⁻¹ B Gᵀ = x_q
        if let Ok(b) = model_p.state_projector() {
            let g = action.state_matrix()?;
            moved.projector = Some(&rep_inv * &b * g.transpose());
        }
        locals.push((pred.clone(), moved));
    }
    stitch(locals, working_box)
}

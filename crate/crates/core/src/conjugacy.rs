//! Homeomorphisms between topologically conjugate systems and checks of the
//! operator, eigenfunction and mode identities they induce.

use faer::{c64, Mat};
use serde::{Deserialize, Serialize};

use crate::dictionary::{compose_with_inverse_homeo, Dictionary, Polynomial};
use crate::dynamics::{random_points, GridBox, SnapshotSet, VectorField};
use crate::edmd::{fit, KoopmanModel};
use crate::error::{Error, Result};
use crate::linalg::{self, eig_order, max_abs_diff, CMatrix};
use crate::spectral::{analyze_matrix, modes_with_projector, KoopmanModes, SpectralReport};

/// Eigenvalues closer than this are treated as one degenerate cluster.
pub const CLUSTER_TOL: f64 = 1e-6;
/// Offset from the box center of the eigenfunction phase reference point.
pub const REFERENCE_OFFSET: [f64; 2] = [0.5, 0.5];

/// A homeomorphism `h: 𝒩 → ℳ` with its inverse.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum Homeomorphism {
    Identity {},
    /// `h(y) = (y1, y2 − c·y1²)`, `h⁻¹(x) = (x1, x2 + c·x1²)`.
    ShearQuadratic { coef: f64 },
    CustomPoly {
        forward: Vec<Polynomial>,
        inverse: Vec<Polynomial>,
    },
}

impl Homeomorphism {
    pub fn name(&self) -> &'static str {
        match self {
            Homeomorphism::Identity {} => "identity",
            Homeomorphism::ShearQuadratic { .. } => "shear_quadratic",
            Homeomorphism::CustomPoly { .. } => "custom_poly",
        }
    }

    /// Fixed state dimension, if the kind has one.
    pub fn dim(&self) -> Option<usize> {
        match self {
            Homeomorphism::Identity {} => None,
            Homeomorphism::ShearQuadratic { .. } => Some(2),
            Homeomorphism::CustomPoly { forward, .. } => Some(forward.len()),
        }
    }

    pub fn forward(&self, y: &[f64]) -> Vec<f64> {
        match self {
            Homeomorphism::Identity {} => y.to_vec(),
            Homeomorphism::ShearQuadratic { coef } => vec![y[0], y[1] - coef * y[0] * y[0]],
            Homeomorphism::CustomPoly { forward, .. } => forward.iter().map(|p| p.eval(y)).collect(),
        }
    }

    pub fn inverse(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Homeomorphism::Identity {} => x.to_vec(),
            Homeomorphism::ShearQuadratic { coef } => vec![x[0], x[1] + coef * x[0] * x[0]],
            Homeomorphism::CustomPoly { inverse, .. } => inverse.iter().map(|p| p.eval(x)).collect(),
        }
    }

    /// Largest of `‖h⁻¹(h(p)) − p‖` and `‖h(h⁻¹(p)) − p‖` over `points`.
    pub fn round_trip_defect(&self, points: &[Vec<f64>]) -> f64 {
        let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(u, v)| (u - v).powi(2)).sum::<f64>().sqrt();
        points
            .iter()
            .map(|p| {
                let a = dist(&self.inverse(&self.forward(p)), p);
                let b = dist(&self.forward(&self.inverse(p)), p);
                if a.is_nan() || b.is_nan() {
                    f64::INFINITY
                } else {
                    a.max(b)
                }
            })
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConjugacyCheck {
    pub holds: bool,
    pub max_defect: f64,
    pub tol: f64,
}

/// Compare `flow_{T1}(h(y))` with `h(flow_{T2}(y))` on random samples of the box.
pub fn check_conjugacy(
    t1: &VectorField,
    t2: &VectorField,
    h: &Homeomorphism,
    dt: f64,
    substeps: usize,
    working_box: &GridBox,
    samples: usize,
    tol: f64,
) -> Result<ConjugacyCheck> {
    if t1.dim() != t2.dim() || working_box.dim() != t1.dim() {
        return Err(Error::ShapeMismatch("conjugacy check dimensions".into()));
    }
    let mut max_defect = 0.0f64;
    for y in random_points(working_box, samples, 0x5eed)? {
        let a = t1.flow(&h.forward(&y), dt, substeps)?;
        let b = h.forward(&t2.flow(&y, dt, substeps)?);
        let d = a.iter().zip(&b).map(|(u, v)| (u - v).powi(2)).sum::<f64>().sqrt();
        max_defect = max_defect.max(d);
    }
    Ok(ConjugacyCheck {
        holds: max_defect <= tol,
        max_defect,
        tol,
    })
}

/// The two conjugate regressions.
#[derive(Debug, Clone)]
pub struct ConjugatePair {
    pub theta: KoopmanModel,
    pub psi: KoopmanModel,
    pub h: Homeomorphism,
}

/// Fit `K_Θ` on T₂ data and `K_Ψ` on the `h`-image of the same data with
/// `Ψ = Θ ∘ h⁻¹`.
pub fn conjugate_fit(
    t2_snapshots: &SnapshotSet,
    base_dict: &Dictionary,
    h: &Homeomorphism,
    working_box: &GridBox,
    rank_tol: f64,
) -> Result<ConjugatePair> {
    let theta = fit(t2_snapshots, base_dict, "theta", rank_tol)?;
    let t1_snapshots = t2_snapshots.map_states(|y| h.forward(y))?;
    let psi_dict = compose_with_inverse_homeo(base_dict, h, working_box)?;
    let psi = fit(&t1_snapshots, &psi_dict, "psi", rank_tol)?;
    Ok(ConjugatePair {
        theta,
        psi,
        h: h.clone(),
    })
}

/// Eigenvalue clusters of a sorted spectrum.
fn clusters(values: &[c64]) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = Vec::new();
    for (i, z) in values.iter().enumerate() {
        match out.iter_mut().find(|c| (values[c[0]] - z).norm() < CLUSTER_TOL) {
            Some(c) => c.push(i),
            None => out.push(vec![i]),
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EigenPairCheck {
    pub indices: Vec<usize>,
    pub eigenvalue: [f64; 2],
    pub eigenvalue_gap: f64,
    /// Pointwise defect for simple eigenvalues, principal angle for clusters.
    pub defect: f64,
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrespondenceReport {
    pub spectrum_gap: f64,
    pub max_function_defect: f64,
    pub max_subspace_angle: f64,
    pub pairs: Vec<EigenPairCheck>,
}

/// Values `Ψ(p) w` at the sample points, one column per eigenvector.
fn eigenfunction_samples(dict: &Dictionary, points: &[Vec<f64>], vecs: &CMatrix, cols: &[usize]) -> CMatrix {
    let rows: Vec<Vec<f64>> = points.iter().map(|p| dict.eval(p)).collect();
    Mat::from_fn(points.len(), cols.len(), |i, j| {
        rows[i].iter().enumerate().map(|(k, &a)| vecs[(k, cols[j])] * a).sum()
    })
}

/// Check that `φ_Ψ ∘ h = φ_Θ` for every eigenpair (after phase normalization at
/// the reference point) and compare degenerate eigenspaces by principal angles.
pub fn eig_correspondence(
    pair: &ConjugatePair,
    working_box: &GridBox,
    samples: usize,
    spectrum_tol: f64,
) -> Result<CorrespondenceReport> {
    let rt = analyze_matrix(pair.theta.k_matrix.as_ref(), 0.05, 1e-10)?;
    let rp = analyze_matrix(pair.psi.k_matrix.as_ref(), 0.05, 1e-10)?;
    let gap = linalg::spectrum_gap(&rt.eigenvalues, &rp.eigenvalues);
    if !(gap <= spectrum_tol) {
        return Err(Error::EigenvalueMismatch { gap, tol: spectrum_tol });
    }
    let ys = random_points(working_box, samples, 0xc0de)?;
    let xs: Vec<Vec<f64>> = ys.iter().map(|y| pair.h.forward(y)).collect();
    let y_ref: Vec<f64> = working_box
        .center()
        .iter()
        .zip(REFERENCE_OFFSET.iter().chain(std::iter::repeat(&0.0)))
        .map(|(c, o)| c + o)
        .collect();
    let x_ref = pair.h.forward(&y_ref);

    let mut pairs = Vec::new();
    let (mut max_fn, mut max_angle) = (0.0f64, 0.0f64);
    for cl in clusters(&rt.eigenvalues) {
        let lam = rt.eigenvalues[cl[0]];
        let lam_gap = cl.iter().map(|&i| (rt.eigenvalues[i] - rp.eigenvalues[i]).norm()).fold(0.0, f64::max);
        let ft = eigenfunction_samples(&pair.theta.dictionary, &ys, &rt.right_eigvecs, &cl);
        let fp = eigenfunction_samples(&pair.psi.dictionary, &xs, &rp.right_eigvecs, &cl);
        let defect = if cl.len() == 1 {
            let st = eigenfunction_samples(&pair.theta.dictionary, &[y_ref.clone()], &rt.right_eigvecs, &cl)[(0, 0)];
            let sp = eigenfunction_samples(&pair.psi.dictionary, &[x_ref.clone()], &rp.right_eigvecs, &cl)[(0, 0)];
            let (rt_, rp_) = (unit_phase(st), unit_phase(sp));
            let d = (0..ys.len())
                .map(|i| (ft[(i, 0)] * rt_ - fp[(i, 0)] * rp_).norm())
                .fold(0.0, f64::max);
            max_fn = max_fn.max(d);
            d
        } else {
            let a = linalg::max_principal_angle(ft.as_ref(), fp.as_ref())?;
            max_angle = max_angle.max(a);
            a
        };
        pairs.push(EigenPairCheck {
            indices: cl.clone(),
            eigenvalue: [lam.re, lam.im],
            eigenvalue_gap: lam_gap,
            defect,
            degenerate: cl.len() > 1,
        });
    }
    Ok(CorrespondenceReport {
        spectrum_gap: gap,
        max_function_defect: max_fn,
        max_subspace_angle: max_angle,
        pairs,
    })
}

fn unit_phase(z: c64) -> c64 {
    if z.norm() == 0.0 {
        c64::new(1.0, 0.0)
    } else {
        z.conj() / z.norm()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModeCheck {
    pub equal: bool,
    /// Largest entrywise deviation of simple-eigenvalue modes and of the
    /// per-cluster contributions `Σ φ_j(x0) ϑ_j`.
    pub max_mode_deviation: f64,
    /// Largest principal angle between degenerate mode subspaces.
    pub max_subspace_angle: f64,
    pub mode_tol: f64,
    pub angle_tol: f64,
}

pub struct ModePair {
    pub theta: KoopmanModes,
    pub psi: KoopmanModes,
}

/// Mode decompositions on both sides with the shared projector of the
/// Θ-side state observable `f(y) = y`, at `y0` and `x0 = h(y0)`.
pub fn conjugate_modes(pair: &ConjugatePair, y0: &[f64]) -> Result<(ModePair, SpectralReport, SpectralReport)> {
    let b = pair.theta.state_projector()?;
    let rt = analyze_matrix(pair.theta.k_matrix.as_ref(), 0.05, 1e-10)?;
    let rp = analyze_matrix(pair.psi.k_matrix.as_ref(), 0.05, 1e-10)?;
    let theta = modes_with_projector(&pair.theta.dictionary, &rt, b.as_ref(), y0)?;
    let psi = modes_with_projector(&pair.psi.dictionary, &rp, b.as_ref(), &pair.h.forward(y0))?;
    Ok((ModePair { theta, psi }, rt, rp))
}

pub fn mode_equality(pair: &ConjugatePair, y0: &[f64], mode_tol: f64, angle_tol: f64) -> Result<ModeCheck> {
    let (m, rt, _) = conjugate_modes(pair, y0)?;
    let n_state = m.theta.modes.ncols();
    let (mut dev, mut angle) = (0.0f64, 0.0f64);
    for cl in clusters(&rt.eigenvalues) {
        if cl.len() == 1 {
            let j = cl[0];
            for c in 0..n_state {
                dev = dev.max((m.theta.modes[(j, c)] - m.psi.modes[(j, c)]).norm());
            }
        } else {
            let span = |km: &KoopmanModes| Mat::from_fn(n_state, cl.len(), |r, k| km.modes[(cl[k], r)]);
            angle = angle.max(linalg::max_principal_angle(span(&m.theta).as_ref(), span(&m.psi).as_ref())?);
        }
        for c in 0..n_state {
            let contrib = |km: &KoopmanModes| -> c64 {
                cl.iter().map(|&j| km.initial_weights[j] * km.modes[(j, c)]).sum()
            };
            dev = dev.max((contrib(&m.theta) - contrib(&m.psi)).norm());
        }
    }
    Ok(ModeCheck {
        equal: dev <= mode_tol && angle <= angle_tol,
        max_mode_deviation: dev,
        max_subspace_angle: angle,
        mode_tol,
        angle_tol,
    })
}

/// Entrywise `max |K_Θ − K_Ψ|`.
pub fn operator_gap(pair: &ConjugatePair) -> f64 {
    max_abs_diff(pair.theta.k_matrix.as_ref(), pair.psi.k_matrix.as_ref())
}

/// Sorted spectra of both models.
pub fn spectra(pair: &ConjugatePair) -> Result<(Vec<c64>, Vec<c64>)> {
    let mut a = linalg::eigen_sorted(pair.theta.k_matrix.as_ref())?.0;
    let mut b = linalg::eigen_sorted(pair.psi.k_matrix.as_ref())?.0;
    a.sort_by(eig_order);
    b.sort_by(eig_order);
    Ok((a, b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{make_snapshots, preset, sample_grid, simulate};

    fn shear() -> Homeomorphism {
        Homeomorphism::ShearQuadratic { coef: 1.0 }
    }

    #[test]
    fn shear_round_trip() {
        let pts = sample_grid(&GridBox::square(-2.0, 2.0, 15)).unwrap();
        assert!(shear().round_trip_defect(&pts) < 1e-12);
        assert_eq!(Homeomorphism::Identity {}.round_trip_defect(&pts), 0.0);
    }

    #[test]
    fn preset_pair_is_conjugate() {
        let (t1, t2) = (preset("tc_t1").unwrap(), preset("tc_t2").unwrap());
        let b = GridBox::square(-2.0, 2.0, 9);
        let c = check_conjugacy(&t1, &t2, &shear(), 0.1, 4, &b, 200, 1e-6).unwrap();
        assert!(c.holds, "{}", c.max_defect);
        let same = check_conjugacy(&t2, &t2, &Homeomorphism::Identity {}, 0.1, 1, &b, 50, 1e-12).unwrap();
        assert_eq!(same.max_defect, 0.0);
        let diff = check_conjugacy(&t1, &t2, &Homeomorphism::Identity {}, 0.1, 1, &b, 50, 1e-6).unwrap();
        assert!(!diff.holds);
    }

    fn pair(h: Homeomorphism) -> ConjugatePair {
        let t2 = preset("tc_t2").unwrap();
        let b = GridBox::square(-2.0, 2.0, 9);
        let snaps = make_snapshots(&simulate(&t2, &sample_grid(&b).unwrap(), 0.1, 20, 4).unwrap()).unwrap();
        let theta = Dictionary::parse_custom("y1; y2; y1^2", 2).unwrap();
        conjugate_fit(&snaps, &theta, &h, &b, 1e-10).unwrap()
    }

    #[test]
    fn identity_homeomorphism_gives_identical_models() {
        let p = pair(Homeomorphism::Identity {});
        assert!(operator_gap(&p) <= 1e-12);
        let r = eig_correspondence(&p, &GridBox::square(-2.0, 2.0, 9), 100, 1e-8).unwrap();
        assert!(r.max_function_defect < 1e-12 && r.max_subspace_angle < 1e-8);
    }

    #[test]
    fn shear_pair_matches() {
        let p = pair(shear());
        assert!(operator_gap(&p) <= 1e-10);
        let r = eig_correspondence(&p, &GridBox::square(-2.0, 2.0, 9), 100, 1e-8).unwrap();
        assert_eq!(r.pairs.len(), 2);
        assert!(r.pairs.iter().any(|c| c.degenerate));
        assert!(r.max_function_defect < 1e-8, "{r:?}");
        assert!(r.max_subspace_angle < 1e-6, "{r:?}");
        let m = mode_equality(&p, &[1.0, 1.0], 1e-8, 1e-6).unwrap();
        assert!(m.equal, "{m:?}");
        let fixed = mode_equality(&p, &[0.0, 0.0], 1e-8, 1e-6).unwrap();
        assert!(fixed.equal);
    }

    #[test]
    fn json_forms() {
        let v = serde_json::to_value(shear()).unwrap();
        assert_eq!(v["kind"], "shear_quadratic");
        assert_eq!(v["params"]["coef"], 1.0);
        let id: Homeomorphism = serde_json::from_str(r#"{"kind":"identity","params":{}}"#).unwrap();
        assert_eq!(id, Homeomorphism::Identity {});
    }
}

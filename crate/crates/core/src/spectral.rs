//! Spectral analysis of Koopman matrices: sorted eigendecomposition,
//! unit-eigenvalue census, multiplicities, eigenfunction grids, attractor
//! localization, Koopman mode decomposition and the state projector.

use std::io::Write;
use std::path::Path;

use faer::{c64, Mat, MatRef};
use rayon::prelude::*;
use serde::ser::SerializeSeq;
use serde::{Serialize, Serializer};

use crate::dictionary::Dictionary;
use crate::dynamics::{format_f64, sample_grid, GridBox, SnapshotSet};
use crate::edmd::KoopmanModel;
use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, Matrix};

pub const DEFAULT_UNIT_TOL: f64 = 0.05;
/// Relative singular-value cutoff for multiplicity ranks.
pub const MULTIPLICITY_RANK_TOL: f64 = 1e-6;
/// Largest eigenvector condition number accepted for mode decomposition.
pub const MAX_MODE_CONDITION: f64 = 1e8;
/// Fraction of the peak modulus that delimits a localization region.
pub const REGION_FRACTION: f64 = 0.9;

fn serialize_complex_list<S: Serializer>(v: &[c64], s: S) -> Result<S::Ok, S::Error> {
    let mut seq = s.serialize_seq(Some(v.len()))?;
    for z in v {
        seq.serialize_element(&[z.re, z.im])?;
    }
    seq.end()
}

/// Eigenstructure of a Koopman matrix. In the row convention the right
/// eigenvectors `K v = λ v` give eigenfunctions `φ(x) = Ψ(x) v`; the left
/// eigenvectors `uᵀ K = λ uᵀ` are the rows of `V⁻¹`.
#[derive(Debug, Clone, Serialize)]
pub struct SpectralReport {
    #[serde(serialize_with = "serialize_complex_list")]
    pub eigenvalues: Vec<c64>,
    #[serde(skip)]
    pub right_eigvecs: CMatrix,
    #[serde(skip)]
    pub left_eigvecs: CMatrix,
    pub unit_tol: f64,
    pub rank_tol: f64,
    pub unit_census: usize,
    pub unit_indices: Vec<usize>,
    /// Rank of the unit-cluster eigenvectors.
    pub geometric_multiplicity_at_one: usize,
    pub algebraic_multiplicity_at_one: usize,
    /// `N − rank(K − I)`; zero whenever no eigenvalue is exactly one.
    pub null_dim_at_one: usize,
    pub eigenvector_condition: f64,
    pub max_eigpair_residual: f64,
    pub k_frobenius: f64,
}

/// Full spectral analysis of `model.k_matrix`.
pub fn analyze(model: &KoopmanModel, unit_tol: f64, rank_tol: f64) -> Result<SpectralReport> {
    analyze_matrix(model.k_matrix.as_ref(), unit_tol, rank_tol)
}

pub fn analyze_matrix(k: MatRef<'_, f64>, unit_tol: f64, rank_tol: f64) -> Result<SpectralReport> {
    if !(unit_tol > 0.0) || !(rank_tol > 0.0) {
        return Err(Error::InvalidArgument("tolerances must be positive".into()));
    }
    let n = k.nrows();
    let (eigenvalues, v) = linalg::eigen_sorted(k)?;
    let eigenvector_condition = linalg::condition_number(v.as_ref())?;
    let left_eigvecs = if eigenvector_condition.is_finite() {
        let vinv = linalg::inverse_c(v.as_ref());
        let mut u = vinv.transpose().to_owned();
        for j in 0..n {
            let mut col: Vec<c64> = (0..n).map(|i| u[(i, j)]).collect();
            linalg::normalize_phase(&mut col);
            for (i, z) in col.into_iter().enumerate() {
                u[(i, j)] = z;
            }
        }
        u
    } else {
        CMatrix::zeros(n, n)
    };
    let kc = linalg::to_complex(k);
    let k_frobenius = linalg::frobenius(k);
    let mut max_res = 0.0f64;
    for (j, lam) in eigenvalues.iter().enumerate() {
        let col = v.as_ref().col(j);
        let r = &kc * col - col * faer::Scale(*lam);
        max_res = max_res.max(r.norm_l2());
    }
    let unit_indices: Vec<usize> = eigenvalues
        .iter()
        .enumerate()
        .filter(|(_, z)| (*z - c64::new(1.0, 0.0)).norm() < unit_tol)
        .map(|(i, _)| i)
        .collect();
    let cluster = Mat::from_fn(n, unit_indices.len(), |i, j| v[(i, unit_indices[j])]);
    let geometric = linalg::complex_rank(cluster.as_ref(), MULTIPLICITY_RANK_TOL)?;
    let shifted = Mat::from_fn(n, n, |i, j| k[(i, j)] - if i == j { 1.0 } else { 0.0 });
    let null_dim_at_one = n - shifted_rank(shifted.as_ref(), k_frobenius)?;
    Ok(SpectralReport {
        unit_census: unit_indices.len(),
        algebraic_multiplicity_at_one: unit_indices.len(),
        geometric_multiplicity_at_one: geometric,
        null_dim_at_one,
        unit_indices,
        eigenvalues,
        right_eigvecs: v,
        left_eigvecs,
        unit_tol,
        rank_tol,
        eigenvector_condition,
        max_eigpair_residual: max_res,
        k_frobenius,
    })
}

/// Rank of `K − I` with the cutoff taken relative to `max(σ_max, ‖K‖_F)`,
/// so that `K = I` has rank zero.
fn shifted_rank(a: MatRef<'_, f64>, k_norm: f64) -> Result<usize> {
    if a.nrows() == 0 {
        return Ok(0);
    }
    let s = linalg::thin_svd(a)?.s;
    let scale = s.first().copied().unwrap_or(0.0).max(k_norm);
    Ok(s.iter().filter(|&&x| x > MULTIPLICITY_RANK_TOL * scale).count())
}

/// Invariant-subspace counter: geometric multiplicity of the unit eigenvalue.
pub fn rho_norm(report: &SpectralReport) -> usize {
    report.geometric_multiplicity_at_one
}

impl SpectralReport {
    pub fn write_json(&self, path: &Path) -> Result<()> {
        crate::io::write_json(path, self)
    }

    pub fn unit_eigenvalues(&self) -> Vec<c64> {
        self.unit_indices.iter().map(|&i| self.eigenvalues[i]).collect()
    }

    fn column(m: &CMatrix, j: usize) -> Vec<c64> {
        (0..m.nrows()).map(|i| m[(i, j)]).collect()
    }

    pub fn right_vector(&self, j: usize) -> Vec<c64> {
        Self::column(&self.right_eigvecs, j)
    }

    pub fn left_vector(&self, j: usize) -> Vec<c64> {
        Self::column(&self.left_eigvecs, j)
    }
}

fn dot(row: &[f64], v: &[c64]) -> c64 {
    row.iter().zip(v).map(|(a, z)| z * *a).sum()
}

/// `|Ψ(x) w|` sampled on a grid for a fixed coefficient vector `w`.
#[derive(Debug, Clone)]
pub struct EigenfunctionGrid {
    pub grid: GridBox,
    pub points: Vec<Vec<f64>>,
    pub values: Vec<f64>,
    pub eig_index: usize,
}

/// Cells where an eigenfunction modulus concentrates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Localization {
    pub eig_index: usize,
    pub peak_point: Vec<f64>,
    pub peak_value: f64,
    /// Grid indices with modulus at least `REGION_FRACTION` of the peak.
    pub region: Vec<usize>,
}

impl EigenfunctionGrid {
    pub fn localize(&self) -> Localization {
        let (ip, &peak) = self
            .values
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
            .expect("grid has points");
        Localization {
            eig_index: self.eig_index,
            peak_point: self.points[ip].clone(),
            peak_value: peak,
            region: self
                .values
                .iter()
                .enumerate()
                .filter(|(_, &v)| v >= REGION_FRACTION * peak)
                .map(|(i, _)| i)
                .collect(),
        }
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = Vec::new();
        let dim = self.grid.dim();
        let header: Vec<String> = (1..=dim).map(|i| format!("x{i}")).chain(["abs_phi".into()]).collect();
        writeln!(out, "{}", header.join(",")).expect("write to memory");
        for (p, v) in self.points.iter().zip(&self.values) {
            let fields: Vec<String> = p.iter().chain(std::iter::once(v)).map(|&x| format_f64(x)).collect();
            writeln!(out, "{}", fields.join(",")).expect("write to memory");
        }
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

/// `|φ(x_p)|` for a given coefficient vector and observable map.
pub fn function_grid<F>(observables: F, coeffs: &[c64], eig_index: usize, grid: &GridBox) -> Result<EigenfunctionGrid>
where
    F: Fn(&[f64]) -> Result<Vec<f64>> + Sync,
{
    let points = sample_grid(grid)?;
    let values = points
        .par_iter()
        .map(|p| Ok(dot(&observables(p)?, coeffs).norm()))
        .collect::<Result<Vec<f64>>>()?;
    Ok(EigenfunctionGrid {
        grid: grid.clone(),
        points,
        values,
        eig_index,
    })
}

fn dict_observables(dict: &Dictionary) -> impl Fn(&[f64]) -> Result<Vec<f64>> + Sync + '_ {
    move |x: &[f64]| {
        let v = dict.eval(x);
        match v.iter().position(|z| !z.is_finite()) {
            Some(col) => Err(Error::NonFiniteObservable { row: 0, col }),
            None => Ok(v),
        }
    }
}

/// Koopman eigenfunction `|Ψ(x) v_j|` on a grid.
pub fn eigenfunction_grid(
    model: &KoopmanModel,
    report: &SpectralReport,
    eig_index: usize,
    grid: &GridBox,
) -> Result<EigenfunctionGrid> {
    check_index(report, eig_index)?;
    function_grid(dict_observables(&model.dictionary), &report.right_vector(eig_index), eig_index, grid)
}

/// Dual function `|Ψ(x) u_j|` built from the left eigenvector; for the unit
/// eigenvalues it concentrates on the attractor rather than its basin.
pub fn left_eigenfunction_grid(
    model: &KoopmanModel,
    report: &SpectralReport,
    eig_index: usize,
    grid: &GridBox,
) -> Result<EigenfunctionGrid> {
    check_index(report, eig_index)?;
    function_grid(dict_observables(&model.dictionary), &report.left_vector(eig_index), eig_index, grid)
}

fn check_index(report: &SpectralReport, j: usize) -> Result<()> {
    if j >= report.eigenvalues.len() {
        return Err(Error::InvalidArgument(format!(
            "eigenvalue index {j} out of range (N = {})",
            report.eigenvalues.len()
        )));
    }
    Ok(())
}

/// Localization of every unit-cluster eigenvalue via its left eigenvector.
pub fn localize_attractors(model: &KoopmanModel, report: &SpectralReport, grid: &GridBox) -> Result<Vec<Localization>> {
    report
        .unit_indices
        .iter()
        .map(|&j| Ok(left_eigenfunction_grid(model, report, j, grid)?.localize()))
        .collect()
}

/// Index of the grid point nearest `target`.
pub fn nearest_grid_index(points: &[Vec<f64>], target: &[f64]) -> usize {
    let d2 = |p: &Vec<f64>| p.iter().zip(target).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    (0..points.len())
        .min_by(|&a, &b| d2(&points[a]).total_cmp(&d2(&points[b])))
        .expect("non-empty grid")
}

/// How a set of localizations covers a list of target attractors.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttractorMatch {
    /// `assignment[t]` is the localization covering target `t`.
    pub assignment: Vec<usize>,
    /// Every target's nearest cell is the peak of its assigned function.
    pub peaks_exact: bool,
}

/// Find distinct localizations whose region contains the grid cell nearest
/// each target, preferring assignments where that cell is the peak.
pub fn match_attractors(locs: &[Localization], points: &[Vec<f64>], targets: &[Vec<f64>]) -> Option<AttractorMatch> {
    let cells: Vec<usize> = targets.iter().map(|t| nearest_grid_index(points, t)).collect();
    let mut best: Option<(usize, Vec<usize>)> = None;
    let mut perm = Vec::new();
    let mut used = vec![false; locs.len()];
    search(locs, points, &cells, &mut perm, &mut used, &mut best);
    best.map(|(exact, assignment)| AttractorMatch {
        peaks_exact: exact == targets.len(),
        assignment,
    })
}

fn search(
    locs: &[Localization],
    points: &[Vec<f64>],
    cells: &[usize],
    perm: &mut Vec<usize>,
    used: &mut [bool],
    best: &mut Option<(usize, Vec<usize>)>,
) {
    let t = perm.len();
    if t == cells.len() {
        let exact = perm
            .iter()
            .zip(cells)
            .filter(|(&l, &c)| locs[l].peak_point == points[c])
            .count();
        if best.as_ref().is_none_or(|(e, _)| exact > *e) {
            *best = Some((exact, perm.clone()));
        }
        return;
    }
    for l in 0..locs.len() {
        if !used[l] && locs[l].region.binary_search(&cells[t]).is_ok() {
            used[l] = true;
            perm.push(l);
            search(locs, points, cells, perm, used, best);
            perm.pop();
            used[l] = false;
        }
    }
}

/// Spatial modes `ϑ_j` (rows of `V⁻¹ B`) and initial weights `φ_j(x0)`.
#[derive(Debug, Clone)]
pub struct KoopmanModes {
    pub eigenvalues: Vec<c64>,
    pub modes: CMatrix,
    pub initial_weights: Vec<c64>,
}

impl KoopmanModes {
    pub fn mode(&self, j: usize) -> Vec<c64> {
        (0..self.modes.ncols()).map(|c| self.modes[(j, c)]).collect()
    }

    /// `Σ_j λ_jⁿ φ_j(x0) ϑ_j`.
    pub fn reconstruct(&self, n: usize) -> Vec<c64> {
        let mut out = vec![c64::new(0.0, 0.0); self.modes.ncols()];
        for (j, (lam, w)) in self.eigenvalues.iter().zip(&self.initial_weights).enumerate() {
            let coef = lam.powu(n as u32) * w;
            for (c, o) in out.iter_mut().enumerate() {
                *o += coef * self.modes[(j, c)];
            }
        }
        out
    }
}

/// Koopman mode decomposition of the projected observable `Ψ(x) B`.
pub fn koopman_modes(model: &KoopmanModel, report: &SpectralReport, x0: &[f64]) -> Result<KoopmanModes> {
    let b = model.state_projector()?;
    modes_with_projector(&model.dictionary, report, b.as_ref(), x0)
}

pub fn modes_with_projector(
    dict: &Dictionary,
    report: &SpectralReport,
    b: MatRef<'_, f64>,
    x0: &[f64],
) -> Result<KoopmanModes> {
    if !(report.eigenvector_condition < MAX_MODE_CONDITION) {
        return Err(Error::NonDiagonalizable {
            cond: report.eigenvector_condition,
        });
    }
    if b.nrows() != dict.n_obs || x0.len() != dict.dim {
        return Err(Error::ShapeMismatch("projector or initial state shape".into()));
    }
    let vinv = linalg::inverse_c(report.right_eigvecs.as_ref());
    let modes = &vinv * linalg::to_complex(b);
    let psi0 = dict.eval(x0);
    let n = dict.n_obs;
    let initial_weights = (0..n)
        .map(|j| (0..n).map(|i| report.right_eigvecs[(i, j)] * psi0[i]).sum())
        .collect();
    Ok(KoopmanModes {
        eigenvalues: report.eigenvalues.clone(),
        modes,
        initial_weights,
    })
}

/// Least-squares projector `B = argmin ‖Ψ(X_pr) B − X_pr‖_F`.
pub fn project_to_state(model: &KoopmanModel, snapshots: &SnapshotSet) -> Result<Matrix> {
    if snapshots.dim() != model.dictionary.dim {
        return Err(Error::ShapeMismatch("snapshot dimension".into()));
    }
    let y = model.dictionary.evaluate(snapshots.x_pr.as_ref())?.values;
    Ok(linalg::lstsq(y.as_ref(), snapshots.x_pr.as_ref(), crate::linalg::DEFAULT_RANK_TOL)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::from_rows;

    fn model(rows: &[Vec<f64>]) -> KoopmanModel {
        KoopmanModel::from_matrix(from_rows(rows).unwrap(), Dictionary::identity(rows.len()), "g", 1.0).unwrap()
    }

    #[test]
    fn identity_has_full_multiplicity() {
        let m = model(&[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]]);
        let r = analyze(&m, DEFAULT_UNIT_TOL, 1e-10).unwrap();
        assert_eq!(r.algebraic_multiplicity_at_one, 3);
        assert_eq!(r.geometric_multiplicity_at_one, 3);
        assert_eq!(r.null_dim_at_one, 3);
    }

    #[test]
    fn diagonal_census() {
        let r = analyze(&model(&[vec![0.5, 0.0], vec![0.0, 1.0]]), DEFAULT_UNIT_TOL, 1e-10).unwrap();
        assert_eq!(r.unit_census, 1);
        assert_eq!(r.eigenvalues[0], c64::new(1.0, 0.0));
        assert_eq!(r.eigenvalues[1], c64::new(0.5, 0.0));
        assert_eq!(rho_norm(&r), 1);
    }

    #[test]
    fn jordan_block_multiplicities() {
        let r = analyze(&model(&[vec![1.0, 1.0], vec![0.0, 1.0]]), DEFAULT_UNIT_TOL, 1e-10).unwrap();
        assert_eq!(r.algebraic_multiplicity_at_one, 2);
        assert_eq!(r.geometric_multiplicity_at_one, 1);
        assert_eq!(r.null_dim_at_one, 1);
        assert!(r.geometric_multiplicity_at_one <= r.algebraic_multiplicity_at_one);
    }

    #[test]
    fn identity_eigenfunction_grid_is_abs_x1() {
        let m = model(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        let mut r = analyze(&m, DEFAULT_UNIT_TOL, 1e-10).unwrap();
        r.right_eigvecs = CMatrix::identity(2, 2);
        let g = GridBox::square(-1.0, 1.0, 5);
        let eg = eigenfunction_grid(&m, &r, 0, &g).unwrap();
        for (p, v) in eg.points.iter().zip(&eg.values) {
            assert_eq!(*v, p[0].abs());
        }
        assert!(eigenfunction_grid(&m, &r, 2, &g).is_err());
    }

    #[test]
    fn kmd_reconstructs_matrix_powers() {
        let m = model(&[vec![0.9, 0.0], vec![0.1, 0.8]]);
        let r = analyze(&m, DEFAULT_UNIT_TOL, 1e-10).unwrap();
        let x0 = [1.0, -2.0];
        let modes = koopman_modes(&m, &r, &x0).unwrap();
        let p = crate::edmd::predict(&m, &x0, 20).unwrap();
        for n in 0..=20 {
            let rec = modes.reconstruct(n);
            for c in 0..2 {
                assert!((rec[c].re - p[(n, c)]).abs() < 1e-8);
                assert!(rec[c].im.abs() < 1e-8);
            }
        }
    }

    #[test]
    fn single_active_mode() {
        let m = model(&[vec![0.3, 0.0], vec![0.0, 0.7]]);
        let r = analyze(&m, DEFAULT_UNIT_TOL, 1e-10).unwrap();
        let modes = koopman_modes(&m, &r, &[1.0, 0.0]).unwrap();
        let active: Vec<usize> = (0..2).filter(|&j| modes.initial_weights[j].norm() > 1e-14).collect();
        assert_eq!(active.len(), 1);
        assert!((r.eigenvalues[active[0]].re - 0.3).abs() < 1e-14);
    }

    #[test]
    fn defective_matrix_has_no_modes() {
        let m = model(&[vec![1.0, 1.0], vec![0.0, 1.0]]);
        let r = analyze(&m, DEFAULT_UNIT_TOL, 1e-10).unwrap();
        assert!(matches!(koopman_modes(&m, &r, &[1.0, 1.0]), Err(Error::NonDiagonalizable { .. })));
    }

    #[test]
    fn attractor_matching() {
        let g = GridBox::square(0.0, 1.0, 3);
        let pts = sample_grid(&g).unwrap();
        let loc = |peak: usize, region: Vec<usize>| Localization {
            eig_index: 0,
            peak_point: pts[peak].clone(),
            peak_value: 1.0,
            region,
        };
        let locs = vec![loc(0, vec![0, 1, 8]), loc(8, vec![8])];
        let m = match_attractors(&locs, &pts, &[vec![0.0, 0.0], vec![1.0, 1.0]]).unwrap();
        assert_eq!(m.assignment, vec![0, 1]);
        assert!(m.peaks_exact);
        assert!(match_attractors(&locs, &pts, &[vec![0.5, 0.5]]).is_none());
    }

    #[test]
    fn report_json_shape() {
        let r = analyze(&model(&[vec![0.0, -1.0], vec![1.0, 0.0]]), DEFAULT_UNIT_TOL, 1e-10).unwrap();
        let v = serde_json::to_value(&r).unwrap();
        assert_eq!(v["eigenvalues"][0][1], 1.0);
        assert_eq!(v["eigenvalues"][1][1], -1.0);
        assert_eq!(v["unit_tol"], DEFAULT_UNIT_TOL);
        assert_eq!(v["unit_census"], 0);
    }
}

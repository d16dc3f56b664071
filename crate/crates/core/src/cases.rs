//! End-to-end case studies: the bistable toggle switch, the bilinear-quadratic
//! system with reflection symmetry, and the topologically conjugate pair.

use serde::Serialize;

use crate::conjugacy::{
    check_conjugacy, conjugate_fit, eig_correspondence, mode_equality, operator_gap, ConjugacyCheck, ConjugatePair,
    CorrespondenceReport, Homeomorphism, ModeCheck,
};
use crate::dictionary::{rbf_from_data, Dictionary};
use crate::dynamics::{
    default_sampling, make_snapshots, preset, sample_grid, simulate, GridBox, Sampling, SnapshotSet, Trajectory,
    VectorField,
};
use crate::edmd::{fit, subspace_update_decision, KoopmanModel, UpdateDecision, DEFAULT_UPDATE_TOL};
use crate::equivariance::{check_equivariance, global_from_one, EquivarianceCheck, GroupAction};
use crate::error::Result;
use crate::linalg::{self, DEFAULT_RANK_TOL};
use crate::spectral::{analyze, localize_attractors, match_attractors, AttractorMatch, Localization, SpectralReport};
use crate::stitching::{stitch, validate_stitched, StitchValidation, StitchedModel, SubspacePredicate};

pub const DEFAULT_SEED: u64 = 7;
pub const N_CENTERS: usize = 30;
pub const RBF_SIGMA: f64 = 0.4;
/// Points per axis of the localization grid.
pub const EVAL_SIDE: usize = 41;

/// Trajectories and the snapshot pairs built from them.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub initial_conditions: Vec<Vec<f64>>,
    pub trajectories: Vec<Trajectory>,
    pub snapshots: SnapshotSet,
}

impl Dataset {
    /// Every sampled state, trajectory by trajectory.
    pub fn all_states(&self) -> Vec<Vec<f64>> {
        self.trajectories.iter().flat_map(|t| t.states.iter().cloned()).collect()
    }
}

pub fn generate(field: &VectorField, sampling: &Sampling, initial_conditions: Vec<Vec<f64>>) -> Result<Dataset> {
    let trajectories = simulate(field, &initial_conditions, sampling.dt, sampling.n_steps, sampling.substeps)?;
    let snapshots = make_snapshots(&trajectories)?;
    Ok(Dataset {
        initial_conditions,
        trajectories,
        snapshots,
    })
}

/// A bistable benchmark with two symmetric invariant regions.
#[derive(Debug, Clone)]
pub struct CaseStudy {
    pub name: &'static str,
    pub field: VectorField,
    pub sampling: Sampling,
    pub seed: u64,
    pub n_centers: usize,
    pub sigma: f64,
    pub unit_tol: f64,
    pub predicates: [SubspacePredicate; 2],
    /// Attractor-related equilibria the unit eigenfunctions should flag.
    pub targets: Vec<Vec<f64>>,
    pub action: GroupAction,
}

impl CaseStudy {
    pub fn toggle(seed: u64) -> Result<Self> {
        Ok(CaseStudy {
            name: "toggle",
            field: preset("toggle_switch")?,
            sampling: default_sampling("toggle_switch")?,
            seed,
            n_centers: N_CENTERS,
            sigma: RBF_SIGMA,
            unit_tol: crate::spectral::DEFAULT_UNIT_TOL,
            predicates: SubspacePredicate::toggle_pair(),
            targets: vec![vec![2.0, 0.16], vec![0.16, 2.0]],
            action: GroupAction::swap(),
        })
    }

    pub fn bilinear(seed: u64) -> Result<Self> {
        let r2 = std::f64::consts::SQRT_2;
        Ok(CaseStudy {
            name: "bilinear",
            field: preset("bilinear_quadratic")?,
            sampling: default_sampling("bilinear_quadratic")?,
            seed,
            n_centers: N_CENTERS,
            sigma: RBF_SIGMA,
            unit_tol: crate::spectral::DEFAULT_UNIT_TOL,
            predicates: SubspacePredicate::bilinear_pair(),
            targets: vec![vec![r2, 1.0], vec![-r2, 1.0], vec![0.0, 0.0]],
            action: GroupAction::reflect_axis(0, 2),
        })
    }

    pub fn by_name(name: &str, seed: u64) -> Result<Self> {
        match name {
            "toggle" => Self::toggle(seed),
            "bilinear" => Self::bilinear(seed),
            other => Err(crate::error::Error::UnknownPreset(other.to_string())),
        }
    }

    /// The stable equilibria; the stitched model carries one per block.
    pub fn stable_targets(&self) -> &[Vec<f64>] {
        &self.targets[..2]
    }

    pub fn working_box(&self) -> &GridBox {
        &self.sampling.grid
    }

    pub fn eval_grid(&self) -> GridBox {
        self.working_box().with_counts(vec![EVAL_SIDE; self.working_box().dim()])
    }

    pub fn global_data(&self) -> Result<Dataset> {
        generate(&self.field, &self.sampling, sample_grid(self.working_box())?)
    }

    /// Initial conditions on the region's bounding box, filtered by the region.
    pub fn local_data(&self, region: usize) -> Result<Dataset> {
        let pred = &self.predicates[region];
        let ics = sample_grid(&pred.bounding_box(self.working_box()))?
            .into_iter()
            .filter(|x| pred.test(x))
            .collect();
        generate(&self.field, &self.sampling, ics)
    }

    pub fn rbf_dictionary(&self, data: &Dataset, prepend_state: bool) -> Result<Dictionary> {
        let d = rbf_from_data(&data.all_states(), self.n_centers, self.sigma, self.seed)?;
        if prepend_state {
            let crate::dictionary::Basis::Rbf { centers, sigma, .. } = d.basis else {
                unreachable!("rbf_from_data returns an RBF dictionary")
            };
            return Dictionary::rbf(centers, sigma, true);
        }
        Ok(d)
    }

    pub fn fit_rbf(&self, data: &Dataset, tag: &str, prepend_state: bool) -> Result<KoopmanModel> {
        fit(&data.snapshots, &self.rbf_dictionary(data, prepend_state)?, tag, DEFAULT_RANK_TOL)
    }

    pub fn fit_dmd(&self, data: &Dataset, tag: &str) -> Result<KoopmanModel> {
        fit(&data.snapshots, &Dictionary::identity(self.field.dim()), tag, DEFAULT_RANK_TOL)
    }
}

/// Census and attractor localization of one operator.
#[derive(Debug, Clone, Serialize)]
pub struct CensusSummary {
    pub model_tag: String,
    pub n_obs: usize,
    pub unit_census: usize,
    pub unit_eigenvalues: Vec<[f64; 2]>,
    pub rho: usize,
    pub localizations: Vec<Localization>,
    pub attractor_match: Option<AttractorMatch>,
}

pub fn census(model: &KoopmanModel, report: &SpectralReport, grid: &GridBox, targets: &[Vec<f64>]) -> Result<CensusSummary> {
    let localizations = localize_attractors(model, report, grid)?;
    let points = sample_grid(grid)?;
    Ok(CensusSummary {
        model_tag: model.domain_tag.clone(),
        n_obs: model.n_obs(),
        unit_census: report.unit_census,
        unit_eigenvalues: report.unit_eigenvalues().iter().map(|z| [z.re, z.im]).collect(),
        rho: report.geometric_multiplicity_at_one,
        attractor_match: match_attractors(&localizations, &points, targets),
        localizations,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct StitchSummary {
    pub block_tags: Vec<String>,
    pub size: usize,
    pub unit_census: usize,
    pub rho: usize,
    pub local_rho: Vec<usize>,
    pub spectrum_union_gap: f64,
    pub off_block_max: f64,
    pub attractor_match: Option<AttractorMatch>,
}

/// Largest magnitude outside the diagonal blocks.
pub fn off_block_max(model: &StitchedModel) -> f64 {
    let mut owner = Vec::new();
    for (b, &n) in model.block_sizes.iter().enumerate() {
        owner.extend(std::iter::repeat_n(b, n));
    }
    let mut worst = 0.0f64;
    for j in 0..model.k_s.ncols() {
        for i in 0..model.k_s.nrows() {
            if owner[i] != owner[j] {
                worst = worst.max(model.k_s[(i, j)].abs());
            }
        }
    }
    worst
}

pub fn summarize_stitch(model: &StitchedModel, v: &StitchValidation, grid: &GridBox, targets: &[Vec<f64>]) -> Result<StitchSummary> {
    let local_rho = model
        .blocks
        .iter()
        .map(|b| Ok(analyze(&b.model, v.spectrum.unit_tol, DEFAULT_RANK_TOL)?.geometric_multiplicity_at_one))
        .collect::<Result<Vec<_>>>()?;
    Ok(StitchSummary {
        block_tags: model.blocks.iter().map(|b| b.predicate.name.clone()).collect(),
        size: model.total_obs(),
        unit_census: v.spectrum.unit_census,
        rho: v.spectrum.geometric_multiplicity_at_one,
        local_rho,
        spectrum_union_gap: v.spectrum_union_gap,
        off_block_max: off_block_max(model),
        attractor_match: match_attractors(&v.localizations, &sample_grid(grid)?, targets),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct TransportSummary {
    pub source_tag: String,
    pub equivariance: EquivarianceCheck,
    pub transported: Vec<Vec<f64>>,
    pub fitted: Vec<Vec<f64>>,
    /// `‖K_transported − K_fitted‖_F / ‖K_fitted‖_F`.
    pub relative_error: f64,
}

/// Everything a case-study run produces.
#[derive(Debug, Clone)]
pub struct CaseRun {
    pub global: KoopmanModel,
    pub global_report: SpectralReport,
    pub global_census: CensusSummary,
    pub locals: [KoopmanModel; 2],
    pub stitched: StitchedModel,
    pub stitch_summary: StitchSummary,
    pub dmd_locals: [KoopmanModel; 2],
    pub dmd_global: StitchedModel,
    pub transport: TransportSummary,
    pub update: UpdateDecision,
    pub update_in_domain: UpdateDecision,
}

/// Global fit, local fits and stitching, symmetry transport of a DMD model,
/// and the subspace-update dichotomy.
pub fn run_case(case: &CaseStudy) -> Result<CaseRun> {
    let grid = case.eval_grid();
    let global_data = case.global_data()?;
    let global = case.fit_rbf(&global_data, "global", false)?;
    let global_report = analyze(&global, case.unit_tol, DEFAULT_RANK_TOL)?;
    let global_census = census(&global, &global_report, &grid, &case.targets)?;

    let data = [case.local_data(0)?, case.local_data(1)?];
    let names = [case.predicates[0].name.as_str(), case.predicates[1].name.as_str()];
    let locals = [case.fit_rbf(&data[0], names[0], false)?, case.fit_rbf(&data[1], names[1], false)?];
    let stitched = stitch(
        vec![
            (case.predicates[0].clone(), locals[0].clone()),
            (case.predicates[1].clone(), locals[1].clone()),
        ],
        case.working_box(),
    )?;
    let validation = validate_stitched(&stitched, case.unit_tol, &grid)?;
    let stitch_summary = summarize_stitch(&stitched, &validation, &grid, case.stable_targets())?;

    let dmd_locals = [case.fit_dmd(&data[0], names[0])?, case.fit_dmd(&data[1], names[1])?];
    let dmd_global = global_from_one(
        &dmd_locals[0],
        std::slice::from_ref(&case.action),
        &case.predicates,
        case.working_box(),
    )?;
    let moved = &dmd_global.blocks[1].model.k_matrix;
    let fitted = &dmd_locals[1].k_matrix;
    let transport = TransportSummary {
        source_tag: names[0].to_string(),
        equivariance: check_equivariance(
            &case.field,
            &case.action,
            case.sampling.dt,
            case.sampling.substeps,
            case.working_box(),
            100,
            1e-9,
        )?,
        transported: linalg::to_rows(moved.as_ref()),
        fitted: linalg::to_rows(fitted.as_ref()),
        relative_error: (moved - fitted).norm_l2() / fitted.norm_l2(),
    };

    let (update, update_in_domain) = basin_update_checks(case, &data)?;
    Ok(CaseRun {
        global,
        global_report,
        global_census,
        locals,
        stitched,
        stitch_summary,
        dmd_locals,
        dmd_global,
        transport,
        update,
        update_in_domain,
    })
}

/// A state-inclusive RBF model of region 1, asked to serve region 0 (cross
/// basin) and a subset of its own training grid.
pub fn basin_update_checks(case: &CaseStudy, data: &[Dataset; 2]) -> Result<(UpdateDecision, UpdateDecision)> {
    let model = case.fit_rbf(&data[1], case.predicates[1].name.as_str(), true)?;
    let own = &data[1].initial_conditions;
    let horizon = case.sampling.n_steps;
    let sub = case.sampling.substeps;
    let cross = subspace_update_decision(
        &model,
        own,
        &data[0].initial_conditions,
        &case.field,
        horizon,
        sub,
        DEFAULT_UPDATE_TOL,
    )?;
    let subset: Vec<Vec<f64>> = own.iter().step_by(2).cloned().collect();
    let inside = subspace_update_decision(&model, own, &subset, &case.field, horizon, sub, DEFAULT_UPDATE_TOL)?;
    Ok((cross, inside))
}

/// Conjugate-pair pipeline results.
#[derive(Debug, Clone, Serialize)]
pub struct ConjugacyRun {
    #[serde(skip)]
    pub pair: ConjugatePair,
    pub conjugacy: ConjugacyCheck,
    pub operator_gap: f64,
    pub analytic_gap: f64,
    pub correspondence: CorrespondenceReport,
    pub modes: ModeCheck,
    pub k_theta: Vec<Vec<f64>>,
    pub k_psi: Vec<Vec<f64>>,
}

pub fn conjugacy_sampling() -> Result<Sampling> {
    default_sampling("tc_t2")
}

pub fn theta_dictionary() -> Dictionary {
    Dictionary::parse_custom("y1; y2; y1^2", 2).expect("valid observables")
}

pub fn run_conjugacy(sampling: &Sampling) -> Result<ConjugacyRun> {
    let t1 = preset("tc_t1")?;
    let t2 = preset("tc_t2")?;
    let h = Homeomorphism::ShearQuadratic { coef: 1.0 };
    let wb = &sampling.grid;
    let data = generate(&t2, sampling, sample_grid(wb)?)?;
    let pair = conjugate_fit(&data.snapshots, &theta_dictionary(), &h, wb, DEFAULT_RANK_TOL)?;
    let dt = sampling.dt;
    let analytic = faer::Mat::from_fn(3, 3, |i, j| match (i == j, i) {
        (true, 2) => (-2.0 * dt).exp(),
        (true, _) => (-dt).exp(),
        _ => 0.0,
    });
    Ok(ConjugacyRun {
        conjugacy: check_conjugacy(&t1, &t2, &h, dt, sampling.substeps, wb, 200, 1e-6)?,
        operator_gap: operator_gap(&pair),
        analytic_gap: linalg::max_abs_diff(pair.theta.k_matrix.as_ref(), analytic.as_ref()),
        correspondence: eig_correspondence(&pair, wb, 200, 1e-8)?,
        modes: mode_equality(&pair, &[1.0, 1.0], 1e-8, 1e-6)?,
        k_theta: linalg::to_rows(pair.theta.k_matrix.as_ref()),
        k_psi: linalg::to_rows(pair.psi.k_matrix.as_ref()),
        pair,
    })
}

//! Phase-space stitching: a block-diagonal Koopman operator assembled from
//! local models on disjoint invariant regions, with observables gated by the
//! regions' characteristic functions.

use std::path::Path;

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::dynamics::{sample_grid, GridBox};
use crate::edmd::{propagate, KoopmanModel};
use crate::error::{Error, Result};
use crate::linalg::{self, serde_matrix, Matrix};
use crate::spectral::{analyze_matrix, function_grid, Localization, SpectralReport};

/// Samples per axis of the overlap check (at least 1000 points in 2-D).
pub const VALIDATION_SIDE: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PredicateTest {
    /// `normal · x > offset` (strict) or `≥`.
    Halfplane {
        normal: Vec<f64>,
        offset: f64,
        strict: bool,
    },
}

/// A named region of state space. When no region holds a point strictly,
/// the first listed region whose closure contains it claims it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubspacePredicate {
    pub name: String,
    #[serde(flatten)]
    pub test: PredicateTest,
}

impl SubspacePredicate {
    pub fn halfplane(name: &str, normal: Vec<f64>, offset: f64, strict: bool) -> Self {
        SubspacePredicate {
            name: name.to_string(),
            test: PredicateTest::Halfplane { normal, offset, strict },
        }
    }

    /// `x1 > x2` and `x1 < x2`.
    pub fn toggle_pair() -> [Self; 2] {
        [
            Self::halfplane("M_right", vec![1.0, -1.0], 0.0, true),
            Self::halfplane("M_left", vec![-1.0, 1.0], 0.0, true),
        ]
    }

    /// `x1 > 0` and `x1 < 0`.
    pub fn bilinear_pair() -> [Self; 2] {
        [
            Self::halfplane("M_right", vec![1.0, 0.0], 0.0, true),
            Self::halfplane("M_left", vec![-1.0, 0.0], 0.0, true),
        ]
    }

    fn margin(&self, x: &[f64]) -> f64 {
        match &self.test {
            PredicateTest::Halfplane { normal, offset, .. } => {
                normal.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() - offset
            }
        }
    }

    pub fn test(&self, x: &[f64]) -> bool {
        match &self.test {
            PredicateTest::Halfplane { strict: true, .. } => self.margin(x) > 0.0,
            PredicateTest::Halfplane { strict: false, .. } => self.margin(x) >= 0.0,
        }
    }

    pub fn closure_contains(&self, x: &[f64]) -> bool {
        self.margin(x) >= 0.0
    }

    /// The part of `working_box` the region can occupy (the box itself for
    /// oblique half-planes).
    pub fn bounding_box(&self, working_box: &GridBox) -> GridBox {
        let mut b = working_box.clone();
        let PredicateTest::Halfplane { normal, offset, .. } = &self.test;
        let axes: Vec<usize> = (0..normal.len()).filter(|&i| normal[i] != 0.0).collect();
        if let [i] = axes[..] {
            let cut = offset / normal[i];
            if normal[i] > 0.0 {
                b.lo[i] = b.lo[i].max(cut);
            } else {
                b.hi[i] = b.hi[i].min(cut);
            }
        }
        b
    }
}

/// Index of the predicate claiming `x`.
pub fn claim(predicates: &[SubspacePredicate], x: &[f64]) -> Result<usize> {
    let holders: Vec<usize> = (0..predicates.len()).filter(|&i| predicates[i].test(x)).collect();
    match holders[..] {
        [i] => Ok(i),
        [] => predicates
            .iter()
            .position(|p| p.closure_contains(x))
            .ok_or_else(|| Error::UnclaimedPoint(x.to_vec())),
        _ => Err(Error::AmbiguousPoint {
            point: x.to_vec(),
            claims: holders.iter().map(|&i| predicates[i].name.clone()).collect(),
        }),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StitchBlock {
    pub predicate: SubspacePredicate,
    pub model: KoopmanModel,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StitchedModel {
    pub blocks: Vec<StitchBlock>,
    pub block_sizes: Vec<usize>,
    #[serde(with = "serde_matrix")]
    pub k_s: Matrix,
}

/// Assemble `K_S = diag(K_1, …, K_v)` after checking that no validation point
/// of `validation_box` is held by two predicates.
pub fn stitch(locals: Vec<(SubspacePredicate, KoopmanModel)>, validation_box: &GridBox) -> Result<StitchedModel> {
    if locals.is_empty() {
        return Err(Error::EmptyInput("no local models to stitch".into()));
    }
    let sample = sample_grid(&validation_box.with_counts(vec![VALIDATION_SIDE; validation_box.dim()]))?;
    for x in &sample {
        let holders: Vec<usize> = (0..locals.len()).filter(|&i| locals[i].0.test(x)).collect();
        if holders.len() > 1 {
            return Err(Error::OverlappingSubspaces {
                first: locals[holders[0]].0.name.clone(),
                second: locals[holders[1]].0.name.clone(),
                point: x.clone(),
            });
        }
    }
    let dim = locals[0].1.dictionary.dim;
    if locals.iter().any(|(_, m)| m.dictionary.dim != dim) {
        return Err(Error::ShapeMismatch("local models have different state dimensions".into()));
    }
    let block_sizes: Vec<usize> = locals.iter().map(|(_, m)| m.n_obs()).collect();
    let total: usize = block_sizes.iter().sum();
    let mut k_s = Mat::zeros(total, total);
    let mut off = 0;
    for (_, m) in &locals {
        let n = m.n_obs();
        for j in 0..n {
            for i in 0..n {
                k_s[(off + i, off + j)] = m.k_matrix[(i, j)];
            }
        }
        off += n;
    }
    Ok(StitchedModel {
        blocks: locals
            .into_iter()
            .map(|(predicate, model)| StitchBlock { predicate, model })
            .collect(),
        block_sizes,
        k_s,
    })
}

/// A predicted state claimed by a region other than the starting one.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundaryCrossing {
    pub step: usize,
    pub state: Vec<f64>,
    pub claimed_by: String,
}

#[derive(Debug, Clone)]
pub struct StitchedPrediction {
    pub active_block: usize,
    pub observables: Matrix,
    /// Projected states, when the active model has a projector.
    pub states: Option<Matrix>,
    pub crossings: Vec<BoundaryCrossing>,
}

impl StitchedModel {
    pub fn total_obs(&self) -> usize {
        self.k_s.nrows()
    }

    pub fn predicates(&self) -> Vec<SubspacePredicate> {
        self.blocks.iter().map(|b| b.predicate.clone()).collect()
    }

    pub fn offset(&self, block: usize) -> usize {
        self.block_sizes[..block].iter().sum()
    }

    pub fn active_block(&self, x: &[f64]) -> Result<usize> {
        claim(&self.predicates(), x)
    }

    /// `Ψ(x) = [χ_1(x)Ψ_1(x), …, χ_v(x)Ψ_v(x)]`.
    pub fn evaluate(&self, x: &[f64]) -> Result<Vec<f64>> {
        let b = self.active_block(x)?;
        let mut out = vec![0.0; self.total_obs()];
        let off = self.offset(b);
        self.blocks[b].model.dictionary.eval_into(x, &mut out[off..off + self.block_sizes[b]]);
        Ok(out)
    }

    /// Rows `Ψ(x0) K_Sʲ`, with a diagnostic for every projected state that
    /// leaves the starting region.
    pub fn predict(&self, x0: &[f64], n_steps: usize) -> Result<StitchedPrediction> {
        let active_block = self.active_block(x0)?;
        let observables = propagate(&self.evaluate(x0)?, self.k_s.as_ref(), n_steps);
        let off = self.offset(active_block);
        let n = self.block_sizes[active_block];
        let model = &self.blocks[active_block].model;
        let states = model
            .state_projector()
            .ok()
            .map(|b| observables.as_ref().subcols(off, n) * b.as_ref());
        let mut crossings = Vec::new();
        if let Some(s) = &states {
            let preds = self.predicates();
            for step in 1..=n_steps {
                let x: Vec<f64> = (0..s.ncols()).map(|c| s[(step, c)]).collect();
                if let Ok(other) = claim(&preds, &x) {
                    if other != active_block {
                        crossings.push(BoundaryCrossing {
                            step,
                            state: x,
                            claimed_by: preds[other].name.clone(),
                        });
                    }
                }
            }
        }
        Ok(StitchedPrediction {
            active_block,
            observables,
            states,
            crossings,
        })
    }

    /// Spectra of the individual blocks, concatenated in block order.
    pub fn block_spectra(&self) -> Result<Vec<faer::c64>> {
        let mut out = Vec::new();
        for b in &self.blocks {
            out.extend(linalg::eigen_sorted(b.model.k_matrix.as_ref())?.0);
        }
        Ok(out)
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        crate::io::write_json(path, self)
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let m: StitchedModel = crate::io::read_json(path)?;
        for b in &m.blocks {
            b.model.validate()?;
        }
        if m.block_sizes.iter().sum::<usize>() != m.k_s.nrows() || m.k_s.nrows() != m.k_s.ncols() {
            return Err(Error::ShapeMismatch("stitched operator size".into()));
        }
        Ok(m)
    }
}

/// Unit census of `K_S` and localization of each unit eigenvalue using the
/// gated dictionary.
#[derive(Debug, Clone, Serialize)]
pub struct StitchValidation {
    pub spectrum: SpectralReport,
    pub block_of_unit: Vec<usize>,
    pub localizations: Vec<Localization>,
    pub spectrum_union_gap: f64,
}

pub fn validate_stitched(model: &StitchedModel, unit_tol: f64, grid: &GridBox) -> Result<StitchValidation> {
    let spectrum = analyze_matrix(model.k_s.as_ref(), unit_tol, linalg::DEFAULT_RANK_TOL)?;
    let spectrum_union_gap = linalg::spectrum_gap(&spectrum.eigenvalues, &model.block_spectra()?);
    let mut localizations = Vec::new();
    let mut block_of_unit = Vec::new();
    for &j in &spectrum.unit_indices {
        let u = spectrum.left_vector(j);
        let block = (0..model.blocks.len())
            .max_by(|&a, &b| {
                let w = |k: usize| {
                    let off = model.offset(k);
                    u[off..off + model.block_sizes[k]].iter().map(|z| z.norm_sqr()).sum::<f64>()
                };
                w(a).total_cmp(&w(b))
            })
            .expect("at least one block");
        block_of_unit.push(block);
        let g = function_grid(|x| model.evaluate(x), &u, j, grid)?;
        localizations.push(g.localize());
    }
    Ok(StitchValidation {
        spectrum,
        block_of_unit,
        localizations,
        spectrum_union_gap,
    })
}

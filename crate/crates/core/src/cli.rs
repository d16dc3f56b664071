//! Command-line driver. Every stage reads and writes plain files (CSV
//! trajectories, JSON models and reports) so runs can be chained or resumed.
//!
//! Settings resolve in the order config file < `KOOPMAN_SEED` < flags.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::cases::{self, CaseStudy, DEFAULT_SEED, EVAL_SIDE};
use crate::dictionary::{rbf_from_data, Dictionary};
use crate::dynamics::{default_sampling, make_snapshots, preset, sample_grid, simulate, GridBox, Trajectory, VectorField};
use crate::edmd::{self, KoopmanModel, DEFAULT_UPDATE_TOL};
use crate::equivariance::{global_from_one, GroupAction};
use crate::error::{Error, Result};
use crate::io::{read_json, write_json};
use crate::linalg::{self, DEFAULT_RANK_TOL};
use crate::spectral::{self, DEFAULT_UNIT_TOL};
use crate::stitching::{stitch, validate_stitched, SubspacePredicate};

pub const SEED_ENV: &str = "KOOPMAN_SEED";
pub const MANIFEST: &str = "manifest.json";

/// Dictionary choice in config files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DictionarySpec {
    Identity,
    Rbf {
        #[serde(default = "default_centers")]
        n_centers: usize,
        #[serde(default = "default_sigma")]
        sigma: f64,
        #[serde(default)]
        prepend_state: bool,
    },
    Polynomial {
        degree: u32,
    },
    Custom {
        observables: String,
    },
}

fn default_centers() -> usize {
    cases::N_CENTERS
}

fn default_sigma() -> f64 {
    cases::RBF_SIGMA
}

impl DictionarySpec {
    /// `identity`, `rbf`, `poly:<degree>` or `custom:<obs; obs; ...>`.
    pub fn parse(s: &str) -> Result<Self> {
        match s.split_once(':') {
            None if s == "identity" => Ok(DictionarySpec::Identity),
            None if s == "rbf" => Ok(DictionarySpec::Rbf {
                n_centers: default_centers(),
                sigma: default_sigma(),
                prepend_state: false,
            }),
            Some(("poly", d)) => Ok(DictionarySpec::Polynomial {
                degree: d
                    .parse()
                    .map_err(|_| Error::InvalidArgument(format!("bad polynomial degree `{d}`")))?,
            }),
            Some(("custom", obs)) => Ok(DictionarySpec::Custom {
                observables: obs.to_string(),
            }),
            _ => Err(Error::InvalidArgument(format!("unknown dictionary `{s}`"))),
        }
    }

    fn build(&self, states: &[Vec<f64>], dim: usize, seed: u64) -> Result<Dictionary> {
        match self {
            DictionarySpec::Identity => Ok(Dictionary::identity(dim)),
            DictionarySpec::Rbf {
                n_centers,
                sigma,
                prepend_state,
            } => {
                let d = rbf_from_data(states, *n_centers, *sigma, seed)?;
                match d.basis {
                    crate::dictionary::Basis::Rbf { centers, sigma, .. } => Dictionary::rbf(centers, sigma, *prepend_state),
                    _ => unreachable!("rbf_from_data returns an RBF dictionary"),
                }
            }
            DictionarySpec::Polynomial { degree } => Dictionary::polynomial_up_to(dim, *degree),
            DictionarySpec::Custom { observables } => Dictionary::parse_custom(observables, dim),
        }
    }
}

/// JSON run configuration; every field is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub preset: Option<String>,
    pub params: BTreeMap<String, f64>,
    pub grid: Option<GridBox>,
    pub dt: Option<f64>,
    pub n_steps: Option<usize>,
    pub substeps: Option<usize>,
    pub dictionary: Option<DictionarySpec>,
    pub unit_tol: Option<f64>,
    pub rank_tol: Option<f64>,
    pub update_tol: Option<f64>,
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        read_json(path)
    }

    fn seed(&self) -> u64 {
        self.seed.unwrap_or(DEFAULT_SEED)
    }

    fn unit_tol(&self) -> f64 {
        self.unit_tol.unwrap_or(DEFAULT_UNIT_TOL)
    }

    fn rank_tol(&self) -> f64 {
        self.rank_tol.unwrap_or(DEFAULT_RANK_TOL)
    }

    fn update_tol(&self) -> f64 {
        self.update_tol.unwrap_or(DEFAULT_UPDATE_TOL)
    }

    fn check_tolerances(&self) -> Result<()> {
        for (name, v) in [
            ("unit_tol", self.unit_tol()),
            ("rank_tol", self.rank_tol()),
            ("update_tol", self.update_tol()),
        ] {
            if !(v > 0.0) {
                return Err(Error::InvalidArgument(format!("{name} must be positive")));
            }
        }
        Ok(())
    }

    fn field(&self) -> Result<VectorField> {
        let name = self
            .preset
            .as_deref()
            .ok_or_else(|| Error::InvalidArgument("no system preset given".into()))?;
        let mut f = preset(name)?;
        for (k, v) in &self.params {
            f = f.with_param(k, *v)?;
        }
        Ok(f)
    }
}

#[derive(Debug, Parser)]
#[command(name = "koopman", version, about = "Koopman operator identification, stitching and transport")]
pub struct Cli {
    /// JSON run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Random seed (overrides the config file and KOOPMAN_SEED).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Default)]
pub struct GridArgs {
    /// Lower corner, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub lo: Option<Vec<f64>>,
    /// Upper corner, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub hi: Option<Vec<f64>>,
    /// Samples per axis, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub counts: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ReproCase {
    Toggle,
    Bilinear,
    Conjugacy,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate a preset from a grid of initial conditions.
    Simulate {
        #[arg(long)]
        preset: Option<String>,
        /// Parameter override `name=value`; repeatable.
        #[arg(long = "param", value_parser = parse_param)]
        params: Vec<(String, f64)>,
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long)]
        n_steps: Option<usize>,
        #[arg(long)]
        substeps: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit a Koopman model to a directory of trajectories.
    Fit {
        #[arg(long)]
        trajectories: PathBuf,
        /// `identity`, `rbf`, `poly:<degree>` or `custom:<obs; ...>`.
        #[arg(long)]
        dictionary: Option<String>,
        #[arg(long)]
        n_centers: Option<usize>,
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(long)]
        prepend_state: bool,
        /// Keep only trajectories starting in this region (predicate JSON).
        #[arg(long)]
        region: Option<PathBuf>,
        #[arg(long, default_value = "global")]
        tag: String,
        #[arg(long)]
        rank_tol: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Multi-step prediction `Ψ(x0) Kʲ`, written as CSV.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        x0: Vec<f64>,
        #[arg(long, default_value_t = 20)]
        n_steps: usize,
        /// Project rows to states.
        #[arg(long)]
        states: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Eigenvalues, unit census and multiplicities.
    Spectrum {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        unit_tol: Option<f64>,
        #[arg(long)]
        rank_tol: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Eigenfunction modulus on a grid, written as CSV.
    Eigfun {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        index: usize,
        /// Use the left eigenvector (attractor localization).
        #[arg(long)]
        left: bool,
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Koopman mode decomposition at an initial state.
    Kmd {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        x0: Vec<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build a block-diagonal operator from local models.
    Stitch {
        /// Local model JSON; repeat in block order.
        #[arg(long = "model", required = true)]
        models: Vec<PathBuf>,
        /// Predicate JSON matching each model.
        #[arg(long = "predicate", required = true)]
        predicates: Vec<PathBuf>,
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Transport a local model through symmetry actions and stitch.
    Transport {
        #[arg(long)]
        model: PathBuf,
        /// Action JSON; repeatable.
        #[arg(long = "action", required = true)]
        actions: Vec<PathBuf>,
        /// Predicate JSON, source region first; repeatable.
        #[arg(long = "predicate", required = true)]
        predicates: Vec<PathBuf>,
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Conjugate-pair fit and identity checks.
    Conjugate {
        #[arg(long)]
        out: PathBuf,
    },
    /// Decide whether a model can be reused on new initial conditions.
    UpdateCheck {
        #[arg(long)]
        model: PathBuf,
        /// Simulation directory of the training domain.
        #[arg(long)]
        reference: PathBuf,
        /// Simulation directory of the candidate points.
        #[arg(long)]
        new: PathBuf,
        #[arg(long)]
        horizon: Option<usize>,
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a full case study and write every artifact.
    Repro {
        case: ReproCase,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_param(s: &str) -> std::result::Result<(String, f64), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected name=value, got `{s}`"))?;
    let v: f64 = v.parse().map_err(|_| format!("bad value in `{s}`"))?;
    Ok((k.to_string(), v))
}

/// Parse arguments, run, print errors, and return the process exit code.
pub fn main_with_args<I: IntoIterator<Item = OsString>>(args: I) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Ok(s) = std::env::var(SEED_ENV) {
        cfg.seed = Some(
            s.trim()
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("{SEED_ENV}=`{s}` is not an integer")))?,
        );
    }
    if let Some(s) = cli.seed {
        cfg.seed = Some(s);
    }
    cfg.check_tolerances()?;
    match cli.command {
        Command::Simulate {
            preset,
            params,
            grid,
            dt,
            n_steps,
            substeps,
            out,
        } => {
            if preset.is_some() {
                cfg.preset = preset;
            }
            cfg.params.extend(params);
            cfg.dt = dt.or(cfg.dt);
            cfg.n_steps = n_steps.or(cfg.n_steps);
            cfg.substeps = substeps.or(cfg.substeps);
            let out = out.or(cfg.out_dir.clone()).unwrap_or_else(|| PathBuf::from("trajectories"));
            cmd_simulate(&cfg, &grid, &out).map(|_| ())
        }
        Command::Fit {
            trajectories,
            dictionary,
            n_centers,
            sigma,
            prepend_state,
            region,
            tag,
            rank_tol,
            out,
        } => {
            let mut spec = match dictionary {
                Some(s) => DictionarySpec::parse(&s)?,
                None => cfg.dictionary.clone().unwrap_or(DictionarySpec::Rbf {
                    n_centers: default_centers(),
                    sigma: default_sigma(),
                    prepend_state: false,
                }),
            };
            if let DictionarySpec::Rbf {
                n_centers: n,
                sigma: s,
                prepend_state: p,
            } = &mut spec
            {
                *n = n_centers.unwrap_or(*n);
                *s = sigma.unwrap_or(*s);
                *p |= prepend_state;
            }
            cfg.rank_tol = rank_tol.or(cfg.rank_tol);
            cfg.check_tolerances()?;
            let region = region.map(|p| read_json::<SubspacePredicate>(&p)).transpose()?;
            let model = cmd_fit(&cfg, &trajectories, &spec, region.as_ref(), &tag)?;
            model.write_json(&out)
        }
        Command::Predict {
            model,
            x0,
            n_steps,
            states,
            out,
        } => {
            let m = KoopmanModel::read_json(&model)?;
            let rows = if states {
                edmd::predict_states(&m, &x0, n_steps)?
            } else {
                edmd::predict(&m, &x0, n_steps)?
            };
            let prefix = if states { "x" } else { "psi" };
            write_matrix_csv(&out, prefix, &rows)
        }
        Command::Spectrum {
            model,
            unit_tol,
            rank_tol,
            out,
        } => {
            cfg.unit_tol = unit_tol.or(cfg.unit_tol);
            cfg.rank_tol = rank_tol.or(cfg.rank_tol);
            cfg.check_tolerances()?;
            let m = KoopmanModel::read_json(&model)?;
            spectral::analyze(&m, cfg.unit_tol(), cfg.rank_tol())?.write_json(&out)
        }
        Command::Eigfun {
            model,
            index,
            left,
            grid,
            out,
        } => {
            let m = KoopmanModel::read_json(&model)?;
            let r = spectral::analyze(&m, cfg.unit_tol(), cfg.rank_tol())?;
            let g = eval_grid(&cfg, &grid)?;
            let eg = if left {
                spectral::left_eigenfunction_grid(&m, &r, index, &g)?
            } else {
                spectral::eigenfunction_grid(&m, &r, index, &g)?
            };
            eg.write_csv(&out)
        }
        Command::Kmd { model, x0, out } => {
            let m = KoopmanModel::read_json(&model)?;
            let r = spectral::analyze(&m, cfg.unit_tol(), cfg.rank_tol())?;
            let modes = spectral::koopman_modes(&m, &r, &x0)?;
            write_json(&out, &ModesFile::from(&modes))
        }
        Command::Stitch {
            models,
            predicates,
            grid,
            out,
            report,
        } => {
            if models.len() != predicates.len() {
                return Err(Error::InvalidArgument(format!(
                    "{} models but {} predicates",
                    models.len(),
                    predicates.len()
                )));
            }
            let locals = predicates
                .iter()
                .zip(&models)
                .map(|(p, m)| Ok((read_json::<SubspacePredicate>(p)?, KoopmanModel::read_json(m)?)))
                .collect::<Result<Vec<_>>>()?;
            let g = eval_grid(&cfg, &grid)?;
            let s = stitch(locals, &g)?;
            s.write_json(&out)?;
            if let Some(rp) = report {
                let v = validate_stitched(&s, cfg.unit_tol(), &g)?;
                write_json(&rp, &v)?;
            }
            Ok(())
        }
        Command::Transport {
            model,
            actions,
            predicates,
            grid,
            out,
        } => {
            let m = KoopmanModel::read_json(&model)?;
            let acts = actions.iter().map(|p| read_json::<GroupAction>(p)).collect::<Result<Vec<_>>>()?;
            let preds = predicates
                .iter()
                .map(|p| read_json::<SubspacePredicate>(p))
                .collect::<Result<Vec<_>>>()?;
            let g = eval_grid(&cfg, &grid)?;
            global_from_one(&m, &acts, &preds, &g)?.write_json(&out)
        }
        Command::Conjugate { out } => cmd_conjugate(&cfg, &out),
        Command::UpdateCheck {
            model,
            reference,
            new,
            horizon,
            tol,
            out,
        } => {
            cfg.update_tol = tol.or(cfg.update_tol);
            cfg.check_tolerances()?;
            let m = KoopmanModel::read_json(&model)?;
            let d = cmd_update_check(&cfg, &m, &reference, &new, horizon)?;
            match out {
                Some(p) => write_json(&p, &d),
                None => {
                    println!("{}", crate::io::to_json_string(&d)?.trim_end());
                    Ok(())
                }
            }
        }
        Command::Repro { case, out } => {
            let out = out.or(cfg.out_dir.clone()).unwrap_or_else(|| PathBuf::from("repro"));
            cmd_repro(&cfg, case, &out)
        }
    }
}

fn grid_from_args(base: Option<&GridBox>, args: &GridArgs, default_counts: Option<usize>) -> Result<GridBox> {
    let mut g = match (base, &args.lo, &args.hi) {
        (_, Some(lo), Some(hi)) => GridBox {
            lo: lo.clone(),
            counts: vec![default_counts.unwrap_or(9); lo.len()],
            hi: hi.clone(),
        },
        (Some(b), None, None) => {
            let mut b = b.clone();
            if let Some(c) = default_counts {
                b.counts = vec![c; b.dim()];
            }
            b
        }
        (None, None, None) => return Err(Error::InvalidArgument("no grid given (use --lo/--hi or a preset)".into())),
        _ => return Err(Error::InvalidArgument("--lo and --hi must be given together".into())),
    };
    if let Some(c) = &args.counts {
        g.counts = c.clone();
    }
    g.validate()?;
    Ok(g)
}

/// Grid for evaluation commands: flags, then config grid, then preset box.
fn eval_grid(cfg: &RunConfig, args: &GridArgs) -> Result<GridBox> {
    let base = match (&cfg.grid, &cfg.preset) {
        (Some(g), _) => Some(g.clone()),
        (None, Some(p)) => Some(default_sampling(p)?.grid),
        _ => None,
    };
    grid_from_args(base.as_ref(), args, Some(EVAL_SIDE))
}

/// Contents of `manifest.json` written next to simulated trajectories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub preset: String,
    pub params: BTreeMap<String, f64>,
    pub dt: f64,
    pub substeps: usize,
    pub n_steps: usize,
    pub grid: GridBox,
    pub initial_conditions: Vec<Vec<f64>>,
    pub files: Vec<String>,
}

impl Manifest {
    pub fn field(&self) -> Result<VectorField> {
        let mut f = preset(&self.preset)?;
        for (k, v) in &self.params {
            f = f.with_param(k, *v)?;
        }
        Ok(f)
    }
}

pub fn cmd_simulate(cfg: &RunConfig, grid_args: &GridArgs, out: &Path) -> Result<Manifest> {
    let field = cfg.field()?;
    let defaults = default_sampling(field.name())?;
    let grid = grid_from_args(Some(cfg.grid.as_ref().unwrap_or(&defaults.grid)), grid_args, None)?;
    if grid.dim() != field.dim() {
        return Err(Error::ShapeMismatch("grid and system dimensions differ".into()));
    }
    let dt = cfg.dt.unwrap_or(defaults.dt);
    let n_steps = cfg.n_steps.unwrap_or(defaults.n_steps);
    let substeps = cfg.substeps.unwrap_or(defaults.substeps);
    let ics = sample_grid(&grid)?;
    let trajs = simulate(&field, &ics, dt, n_steps, substeps)?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut files = Vec::new();
    for (i, t) in trajs.iter().enumerate() {
        let name = format!("traj_{i:04}.csv");
        t.write_csv(&out.join(&name))?;
        files.push(name);
    }
    let manifest = Manifest {
        preset: field.name().to_string(),
        params: field.params().clone(),
        dt,
        substeps,
        n_steps,
        grid,
        initial_conditions: ics,
        files,
    };
    write_json(&out.join(MANIFEST), &manifest)?;
    Ok(manifest)
}

/// Trajectories of a simulation directory, in manifest order when present.
pub fn load_trajectories(dir: &Path) -> Result<(Vec<Trajectory>, Option<Manifest>)> {
    let manifest_path = dir.join(MANIFEST);
    let manifest: Option<Manifest> = if manifest_path.exists() {
        Some(read_json(&manifest_path)?)
    } else {
        None
    };
    let files: Vec<PathBuf> = match &manifest {
        Some(m) => m.files.iter().map(|f| dir.join(f)).collect(),
        None => {
            let mut v: Vec<PathBuf> = std::fs::read_dir(dir)
                .map_err(|e| Error::io(dir, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "csv"))
                .collect();
            v.sort();
            v
        }
    };
    if files.is_empty() {
        return Err(Error::EmptyInput(format!("no trajectories in {}", dir.display())));
    }
    let trajs = files.iter().map(|f| Trajectory::read_csv(f)).collect::<Result<Vec<_>>>()?;
    Ok((trajs, manifest))
}

pub fn cmd_fit(
    cfg: &RunConfig,
    dir: &Path,
    spec: &DictionarySpec,
    region: Option<&SubspacePredicate>,
    tag: &str,
) -> Result<KoopmanModel> {
    let (mut trajs, _) = load_trajectories(dir)?;
    if let Some(p) = region {
        trajs.retain(|t| p.test(&t.initial_condition));
    }
    let snaps = make_snapshots(&trajs)?;
    let states: Vec<Vec<f64>> = trajs.iter().flat_map(|t| t.states.iter().cloned()).collect();
    let dict = spec.build(&states, snaps.dim(), cfg.seed())?;
    edmd::fit(&snaps, &dict, tag, cfg.rank_tol())
}

fn write_matrix_csv(path: &Path, prefix: &str, m: &linalg::Matrix) -> Result<()> {
    let mut s = String::from("step");
    for j in 1..=m.ncols() {
        s.push_str(&format!(",{prefix}{j}"));
    }
    s.push('\n');
    for i in 0..m.nrows() {
        s.push_str(&i.to_string());
        for j in 0..m.ncols() {
            s.push(',');
            s.push_str(&crate::dynamics::format_f64(m[(i, j)]));
        }
        s.push('\n');
    }
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

/// Serializable form of a mode decomposition, complex numbers as `[re, im]`.
#[derive(Debug, Clone, Serialize)]
pub struct ModesFile {
    pub eigenvalues: Vec<[f64; 2]>,
    pub modes: Vec<Vec<[f64; 2]>>,
    pub initial_weights: Vec<[f64; 2]>,
}

impl From<&spectral::KoopmanModes> for ModesFile {
    fn from(m: &spectral::KoopmanModes) -> Self {
        let pair = |z: &faer::c64| [z.re, z.im];
        ModesFile {
            eigenvalues: m.eigenvalues.iter().map(pair).collect(),
            modes: (0..m.modes.nrows()).map(|j| m.mode(j).iter().map(pair).collect()).collect(),
            initial_weights: m.initial_weights.iter().map(pair).collect(),
        }
    }
}

pub fn cmd_update_check(
    cfg: &RunConfig,
    model: &KoopmanModel,
    reference: &Path,
    new: &Path,
    horizon: Option<usize>,
) -> Result<edmd::UpdateDecision> {
    let read = |p: &Path| -> Result<Manifest> { read_json(&p.join(MANIFEST)) };
    let r = read(reference)?;
    let n = read(new)?;
    edmd::subspace_update_decision(
        model,
        &r.initial_conditions,
        &n.initial_conditions,
        &r.field()?,
        horizon.unwrap_or(r.n_steps),
        r.substeps,
        cfg.update_tol(),
    )
}

pub fn cmd_conjugate(cfg: &RunConfig, out: &Path) -> Result<()> {
    let mut sampling = cases::conjugacy_sampling()?;
    if let Some(g) = &cfg.grid {
        sampling.grid = g.clone();
    }
    sampling.dt = cfg.dt.unwrap_or(sampling.dt);
    sampling.n_steps = cfg.n_steps.unwrap_or(sampling.n_steps);
    sampling.substeps = cfg.substeps.unwrap_or(sampling.substeps);
    let run = cases::run_conjugacy(&sampling)?;
    run.pair.theta.write_json(&out.join("model_theta.json"))?;
    run.pair.psi.write_json(&out.join("model_psi.json"))?;
    write_json(&out.join("conjugacy_report.json"), &run)
}

#[derive(Debug, Serialize)]
struct CaseSummary<'a> {
    case: &'a str,
    seed: u64,
    dt: f64,
    substeps: usize,
    global: &'a cases::CensusSummary,
    stitched: &'a cases::StitchSummary,
    transport: &'a cases::TransportSummary,
}

pub fn cmd_repro(cfg: &RunConfig, case: ReproCase, out: &Path) -> Result<()> {
    let name = match case {
        ReproCase::Toggle => "toggle",
        ReproCase::Bilinear => "bilinear",
        ReproCase::Conjugacy => return cmd_conjugate(cfg, &out.join("conjugacy")),
    };
    let study = CaseStudy::by_name(name, cfg.seed())?;
    let run = cases::run_case(&study)?;
    let dir = out.join(name);
    run.global.write_json(&dir.join("model_global.json"))?;
    run.global_report.write_json(&dir.join("spectrum_global.json"))?;
    for m in run.locals.iter() {
        m.write_json(&dir.join(format!("model_{}.json", m.domain_tag)))?;
    }
    run.stitched.write_json(&dir.join("model_stitched.json"))?;
    run.dmd_global.write_json(&dir.join("model_dmd_transported.json"))?;
    write_json(&dir.join("update_check.json"), &[&run.update, &run.update_in_domain])?;
    let grid = study.eval_grid();
    for (k, &j) in run.global_report.unit_indices.iter().enumerate() {
        spectral::left_eigenfunction_grid(&run.global, &run.global_report, j, &grid)?
            .write_csv(&dir.join(format!("eigfun_global_unit{k}.csv")))?;
    }
    write_json(
        &dir.join("summary.json"),
        &CaseSummary {
            case: name,
            seed: study.seed,
            dt: study.sampling.dt,
            substeps: study.sampling.substeps,
            global: &run.global_census,
            stitched: &run.stitch_summary,
            transport: &run.transport,
        },
    )
}

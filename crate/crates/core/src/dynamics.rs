//! Benchmark vector fields, fixed-step RK4 integration, grid sampling of
//! initial conditions, and packaging of trajectories into snapshot pairs.
//!
//! Continuous-time presets are used as discrete maps `T = flow(dt)`: every
//! trajectory is sampled at a fixed interval `dt`, optionally resolved by
//! several RK4 substeps per interval.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use faer::Mat;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

type RhsFn = dyn Fn(&[f64], &mut [f64]) + Send + Sync;

#[derive(Clone)]
enum Rhs {
    ToggleSwitch,
    BilinearQuadratic,
    ConjugateT1,
    ConjugateT2,
    Linear(Vec<Vec<f64>>),
    Custom(Arc<RhsFn>),
}

/// A time-invariant vector field `ẋ = f(x)` on `ℝⁿ`.
#[derive(Clone)]
pub struct VectorField {
    name: String,
    dim: usize,
    params: BTreeMap<String, f64>,
    rhs: Rhs,
}

impl fmt::Debug for VectorField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("VectorField")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("params", &self.params)
            .finish()
    }
}

pub const PRESET_NAMES: &[&str] = &[
    "toggle_switch",
    "toggle_switch_symmetric",
    "bilinear_quadratic",
    "tc_t1",
    "tc_t2",
];

/// Look up a preset vector field with its default parameters.
pub fn preset(name: &str) -> Result<VectorField> {
    let p = |pairs: &[(&str, f64)]| -> BTreeMap<String, f64> {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    };
    let (rhs, params) = match name {
        "toggle_switch" => (
            Rhs::ToggleSwitch,
            p(&[
                ("alpha1", 1.0),
                ("alpha2", 1.0),
                ("beta", 3.55),
                ("gamma", 3.53),
                ("kappa1", 0.5),
                ("kappa2", 0.5),
            ]),
        ),
        // Equal exponents make the swap (x1, x2) -> (x2, x1) an exact symmetry.
        "toggle_switch_symmetric" => (
            Rhs::ToggleSwitch,
            p(&[
                ("alpha1", 1.0),
                ("alpha2", 1.0),
                ("beta", 3.54),
                ("gamma", 3.54),
                ("kappa1", 0.5),
                ("kappa2", 0.5),
            ]),
        ),
        "bilinear_quadratic" => (
            Rhs::BilinearQuadratic,
            p(&[("growth", 1.0), ("decay", 2.0)]),
        ),
        "tc_t1" => (Rhs::ConjugateT1, BTreeMap::new()),
        "tc_t2" => (Rhs::ConjugateT2, BTreeMap::new()),
        _ => return Err(Error::UnknownPreset(name.to_string())),
    };
    Ok(VectorField {
        name: name.to_string(),
        dim: 2,
        params,
        rhs,
    })
}

impl VectorField {
    /// Linear field `ẋ = A x`.
    pub fn linear(name: &str, a: Vec<Vec<f64>>) -> Result<Self> {
        let n = a.len();
        if a.iter().any(|r| r.len() != n) || n == 0 {
            return Err(Error::ShapeMismatch("linear field needs a square matrix".into()));
        }
        Ok(VectorField {
            name: name.to_string(),
            dim: n,
            params: BTreeMap::new(),
            rhs: Rhs::Linear(a),
        })
    }

    pub fn custom<F>(name: &str, dim: usize, f: F) -> Self
    where
        F: Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    {
        VectorField {
            name: name.to_string(),
            dim,
            params: BTreeMap::new(),
            rhs: Rhs::Custom(Arc::new(f)),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn params(&self) -> &BTreeMap<String, f64> {
        &self.params
    }

    /// Override a named parameter. Only names the preset already defines are accepted.
    pub fn with_param(mut self, key: &str, value: f64) -> Result<Self> {
        match self.params.get_mut(key) {
            Some(v) => {
                *v = value;
                Ok(self)
            }
            None => Err(Error::InvalidArgument(format!(
                "field `{}` has no parameter `{key}`",
                self.name
            ))),
        }
    }

    fn param(&self, key: &str) -> f64 {
        self.params[key]
    }

    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.dim);
        match &self.rhs {
            Rhs::ToggleSwitch => {
                let (a1, a2) = (self.param("alpha1"), self.param("alpha2"));
                let (b, g) = (self.param("beta"), self.param("gamma"));
                let (k1, k2) = (self.param("kappa1"), self.param("kappa2"));
                out[0] = a1 / (1.0 + x[1].powf(b)) - k1 * x[0];
                out[1] = a2 / (1.0 + x[0].powf(g)) - k2 * x[1];
            }
            Rhs::BilinearQuadratic => {
                let (a, d) = (self.param("growth"), self.param("decay"));
                out[0] = a * x[0] - x[0] * x[1];
                out[1] = x[0] * x[0] - d * x[1];
            }
            Rhs::ConjugateT1 => {
                out[0] = -x[0];
                out[1] = -x[1] + x[0] * x[0];
            }
            Rhs::ConjugateT2 => {
                out[0] = -x[0];
                out[1] = -x[1];
            }
            Rhs::Linear(a) => {
                for (o, row) in out.iter_mut().zip(a) {
                    *o = row.iter().zip(x).map(|(r, v)| r * v).sum();
                }
            }
            Rhs::Custom(f) => f(x, out),
        }
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.eval_into(x, &mut out);
        out
    }

    fn rk4_step(&self, x: &[f64], h: f64) -> Vec<f64> {
        let n = self.dim;
        let mut k1 = vec![0.0; n];
        let mut k2 = vec![0.0; n];
        let mut k3 = vec![0.0; n];
        let mut k4 = vec![0.0; n];
        let mut tmp = vec![0.0; n];
        self.eval_into(x, &mut k1);
        for i in 0..n {
            tmp[i] = x[i] + 0.5 * h * k1[i];
        }
        self.eval_into(&tmp, &mut k2);
        for i in 0..n {
            tmp[i] = x[i] + 0.5 * h * k2[i];
        }
        self.eval_into(&tmp, &mut k3);
        for i in 0..n {
            tmp[i] = x[i] + h * k3[i];
        }
        self.eval_into(&tmp, &mut k4);
        (0..n)
            .map(|i| x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
            .collect()
    }

    /// The sampled map `x ↦ x(dt)`, resolved with `substeps` RK4 steps.
    pub fn flow(&self, x: &[f64], dt: f64, substeps: usize) -> Result<Vec<f64>> {
        let h = dt / substeps as f64;
        let mut y = x.to_vec();
        for _ in 0..substeps {
            y = self.rk4_step(&y, h);
            if y.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteState { step: 1 });
            }
        }
        Ok(y)
    }
}

/// Sampled solution of a vector field.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<Vec<f64>>,
    pub dt: f64,
    pub initial_condition: Vec<f64>,
}

impl Trajectory {
    pub fn dim(&self) -> usize {
        self.initial_condition.len()
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn last(&self) -> &[f64] {
        self.states.last().expect("trajectory has states")
    }

    /// Write `t,x1,...,xn` rows with 17 significant digits.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let ctx = || path.display().to_string();
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::Csv {
            context: ctx(),
            source: e,
        })?;
        let mut header = vec!["t".to_string()];
        header.extend((1..=self.dim()).map(|i| format!("x{i}")));
        let wrap = |e| Error::Csv {
            context: ctx(),
            source: e,
        };
        w.write_record(&header).map_err(wrap)?;
        for (i, s) in self.states.iter().enumerate() {
            let mut rec = vec![format_f64(i as f64 * self.dt)];
            rec.extend(s.iter().map(|&v| format_f64(v)));
            w.write_record(&rec).map_err(wrap)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let ctx = || path.display().to_string();
        let wrap = |e| Error::Csv {
            context: ctx(),
            source: e,
        };
        let mut r = csv::Reader::from_path(path).map_err(wrap)?;
        let header = r.headers().map_err(wrap)?.clone();
        if header.get(0) != Some("t") || header.len() < 2 {
            return Err(Error::ShapeMismatch(format!(
                "{}: expected header `t,x1,...,xn`",
                ctx()
            )));
        }
        let dim = header.len() - 1;
        let mut times = Vec::new();
        let mut states = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(wrap)?;
            if rec.len() != dim + 1 {
                return Err(Error::ShapeMismatch(format!("{}: ragged row", ctx())));
            }
            let vals: Vec<f64> = rec
                .iter()
                .map(|s| {
                    s.trim().parse::<f64>().map_err(|_| {
                        Error::InvalidArgument(format!("{}: bad number `{s}`", ctx()))
                    })
                })
                .collect::<Result<_>>()?;
            times.push(vals[0]);
            states.push(vals[1..].to_vec());
        }
        if states.len() < 2 {
            return Err(Error::EmptyInput(format!("{}: fewer than two samples", ctx())));
        }
        Ok(Trajectory {
            dt: times[1] - times[0],
            initial_condition: states[0].clone(),
            states,
        })
    }
}

pub(crate) fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn check_inputs(field: &VectorField, x0: &[f64], dt: f64, n_steps: usize, substeps: usize) -> Result<()> {
    if x0.len() != field.dim {
        return Err(Error::ShapeMismatch(format!(
            "initial condition has dimension {}, field `{}` has {}",
            x0.len(),
            field.name,
            field.dim
        )));
    }
    if !(dt > 0.0) || n_steps == 0 || substeps == 0 {
        return Err(Error::InvalidArgument(
            "integration needs dt > 0, n_steps >= 1 and substeps >= 1".into(),
        ));
    }
    Ok(())
}

/// Classical RK4 with step `dt`, returning `n_steps + 1` samples.
pub fn integrate(field: &VectorField, x0: &[f64], dt: f64, n_steps: usize) -> Result<Trajectory> {
    integrate_sampled(field, x0, dt, n_steps, 1)
}

/// RK4 sampled every `dt`, each interval resolved by `substeps` steps of
/// size `dt / substeps`.
pub fn integrate_sampled(
    field: &VectorField,
    x0: &[f64],
    dt: f64,
    n_steps: usize,
    substeps: usize,
) -> Result<Trajectory> {
    check_inputs(field, x0, dt, n_steps, substeps)?;
    let h = dt / substeps as f64;
    let mut states = Vec::with_capacity(n_steps + 1);
    states.push(x0.to_vec());
    for step in 1..=n_steps {
        let mut x = states[step - 1].clone();
        for _ in 0..substeps {
            x = field.rk4_step(&x, h);
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteState { step });
        }
        states.push(x);
    }
    Ok(Trajectory {
        states,
        dt,
        initial_condition: x0.to_vec(),
    })
}

/// Axis-aligned box with per-axis sample counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub counts: Vec<usize>,
}

impl GridBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>, counts: Vec<usize>) -> Result<Self> {
        let g = GridBox { lo, hi, counts };
        g.validate()?;
        Ok(g)
    }

    pub fn square(lo: f64, hi: f64, count: usize) -> Self {
        GridBox {
            lo: vec![lo; 2],
            hi: vec![hi; 2],
            counts: vec![count; 2],
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.lo.len();
        if n == 0 || self.hi.len() != n || self.counts.len() != n {
            return Err(Error::ShapeMismatch("grid box axes disagree".into()));
        }
        for i in 0..n {
            if !(self.lo[i] < self.hi[i]) || self.counts[i] == 0 {
                return Err(Error::InvalidArgument(format!(
                    "axis {i}: need lo < hi and count >= 1"
                )));
            }
        }
        Ok(())
    }

    pub fn with_counts(&self, counts: Vec<usize>) -> Self {
        GridBox {
            counts,
            ..self.clone()
        }
    }

    pub fn center(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(a, b)| 0.5 * (a + b)).collect()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(v, (a, b))| *a <= *v && *v <= *b)
    }

    fn axis(&self, i: usize) -> Vec<f64> {
        let (lo, hi, n) = (self.lo[i], self.hi[i], self.counts[i]);
        if n == 1 {
            return vec![lo];
        }
        (0..n)
            .map(|k| {
                if k == n - 1 {
                    hi
                } else {
                    lo + (hi - lo) * k as f64 / (n - 1) as f64
                }
            })
            .collect()
    }
}

/// Cartesian product of per-axis `linspace` points, first axis slowest.
pub fn sample_grid(grid: &GridBox) -> Result<Vec<Vec<f64>>> {
    grid.validate()?;
    let axes: Vec<Vec<f64>> = (0..grid.dim()).map(|i| grid.axis(i)).collect();
    let mut out: Vec<Vec<f64>> = vec![Vec::new()];
    for axis in &axes {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                axis.iter().map(move |&v| {
                    let mut p = prefix.clone();
                    p.push(v);
                    p
                })
            })
            .collect();
    }
    Ok(out)
}

/// `n` points drawn uniformly from the box with a seeded generator.
pub fn random_points(grid: &GridBox, n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    use rand::{Rng, SeedableRng};
    grid.validate()?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n)
        .map(|_| {
            grid.lo
                .iter()
                .zip(&grid.hi)
                .map(|(&a, &b)| rng.random_range(a..=b))
                .collect()
        })
        .collect())
}

/// Integrate from every initial condition, preserving input order.
pub fn simulate(
    field: &VectorField,
    initial_conditions: &[Vec<f64>],
    dt: f64,
    n_steps: usize,
    substeps: usize,
) -> Result<Vec<Trajectory>> {
    initial_conditions
        .par_iter()
        .map(|x0| integrate_sampled(field, x0, dt, n_steps, substeps))
        .collect()
}

/// Paired predecessor/successor states; row `i` of `x_fw` is one sample
/// after row `i` of `x_pr` within the same trajectory.
#[derive(Debug, Clone)]
pub struct SnapshotSet {
    pub x_pr: Matrix,
    pub x_fw: Matrix,
    pub dt: f64,
}

impl SnapshotSet {
    pub fn len(&self) -> usize {
        self.x_pr.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.x_pr.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.x_pr.ncols()
    }

    pub fn from_matrices(x_pr: Matrix, x_fw: Matrix, dt: f64) -> Result<Self> {
        if x_pr.shape() != x_fw.shape() {
            return Err(Error::ShapeMismatch(format!(
                "x_pr is {:?}, x_fw is {:?}",
                x_pr.shape(),
                x_fw.shape()
            )));
        }
        Ok(SnapshotSet { x_pr, x_fw, dt })
    }

    /// Apply `f` to every state of both matrices.
    pub fn map_states<F>(&self, f: F) -> Result<Self>
    where
        F: Fn(&[f64]) -> Vec<f64>,
    {
        let map = |m: &Matrix| -> Result<Matrix> {
            let rows: Vec<Vec<f64>> = (0..m.nrows())
                .map(|i| f(&(0..m.ncols()).map(|j| m[(i, j)]).collect::<Vec<_>>()))
                .collect();
            crate::linalg::from_rows(&rows)
        };
        SnapshotSet::from_matrices(map(&self.x_pr)?, map(&self.x_fw)?, self.dt)
    }

    pub fn pr_row(&self, i: usize) -> Vec<f64> {
        (0..self.dim()).map(|j| self.x_pr[(i, j)]).collect()
    }
}

/// Stack consecutive sample pairs of every trajectory, trajectory order then
/// time order. Pairs never straddle two trajectories.
pub fn make_snapshots(trajectories: &[Trajectory]) -> Result<SnapshotSet> {
    let usable: Vec<&Trajectory> = trajectories.iter().filter(|t| t.len() >= 2).collect();
    let first = usable
        .first()
        .ok_or_else(|| Error::EmptyInput("no trajectory has two or more samples".into()))?;
    let (dim, dt) = (first.dim(), first.dt);
    for t in &usable {
        if t.dim() != dim {
            return Err(Error::ShapeMismatch(format!(
                "trajectory dimensions differ: {} vs {dim}",
                t.dim()
            )));
        }
        if (t.dt - dt).abs() > 1e-12 * dt.abs().max(1.0) {
            return Err(Error::ShapeMismatch(format!(
                "sampling intervals differ: {} vs {dt}",
                t.dt
            )));
        }
        if t.states.iter().any(|s| s.len() != dim) {
            return Err(Error::ShapeMismatch("ragged trajectory states".into()));
        }
    }
    let k: usize = usable.iter().map(|t| t.len() - 1).sum();
    let mut x_pr = Mat::zeros(k, dim);
    let mut x_fw = Mat::zeros(k, dim);
    let mut row = 0;
    for t in &usable {
        for w in t.states.windows(2) {
            for j in 0..dim {
                x_pr[(row, j)] = w[0][j];
                x_fw[(row, j)] = w[1][j];
            }
            row += 1;
        }
    }
    Ok(SnapshotSet { x_pr, x_fw, dt })
}

/// Sampling defaults used by the case studies: interval, substeps per
/// interval, samples per trajectory minus one, and the working box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sampling {
    pub dt: f64,
    pub substeps: usize,
    pub n_steps: usize,
    pub grid: GridBox,
}

pub fn default_sampling(preset_name: &str) -> Result<Sampling> {
    let (dt, substeps, grid) = match preset_name {
        "toggle_switch" | "toggle_switch_symmetric" => (1.0, 10, GridBox::square(0.0, 4.0, 9)),
        "bilinear_quadratic" => (
            1.0,
            10,
            GridBox {
                lo: vec![-3.0, -1.0],
                hi: vec![3.0, 3.0],
                counts: vec![9, 9],
            },
        ),
        "tc_t1" | "tc_t2" => (0.1, 4, GridBox::square(-2.0, 2.0, 9)),
        other => return Err(Error::UnknownPreset(other.to_string())),
    };
    Ok(Sampling {
        dt,
        substeps,
        n_steps: 20,
        grid,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn decay() -> VectorField {
        VectorField::linear("decay", vec![vec![-1.0]]).unwrap()
    }

    #[test]
    fn zero_field_keeps_state() {
        let f = VectorField::linear("zero", vec![vec![0.0, 0.0], vec![0.0, 0.0]]).unwrap();
        let t = integrate(&f, &[1.0, 2.0], 0.1, 5).unwrap();
        assert_eq!(t.len(), 6);
        assert!(t.states.iter().all(|s| s == &vec![1.0, 2.0]));
    }

    #[test]
    fn rk4_single_step_of_exponential_decay() {
        let t = integrate(&decay(), &[1.0], 0.1, 1).unwrap();
        assert!((t.states[1][0] - 0.9048374180).abs() < 1e-7);
        assert_eq!(t.states[0], t.initial_condition);
    }

    #[test]
    fn rk4_convergence_orders() {
        // single step: O(h^5)
        let local = |h: f64| (integrate(&decay(), &[1.0], h, 1).unwrap().states[1][0] - (-h).exp()).abs();
        let r = (local(0.1) / local(0.05)).log2();
        assert!((4.5..5.5).contains(&r), "local order {r}");
        // fixed horizon t = 1: O(h^4)
        let global = |n: usize| {
            let t = integrate(&decay(), &[1.0], 1.0 / n as f64, n).unwrap();
            (t.last()[0] - (-1.0f64).exp()).abs()
        };
        let ratio = global(10) / global(20);
        assert!((14.0..=18.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn toggle_switch_stays_near_equilibrium() {
        let f = preset("toggle_switch").unwrap();
        let t = integrate(&f, &[2.0, 0.16], 0.1, 100).unwrap();
        // (2, 0.16) is the two-decimal rounding of (1.99701, 0.16012).
        let dev = t
            .states
            .iter()
            .map(|s| (s[0] - 2.0).abs().max((s[1] - 0.16).abs()))
            .fold(0.0, f64::max);
        assert!(dev < 5e-3, "deviation {dev}");
    }

    #[test]
    fn toggle_half_planes_are_invariant() {
        let f = preset("toggle_switch").unwrap();
        let pts = sample_grid(&GridBox::square(0.0, 4.0, 21)).unwrap();
        for p in pts.iter().filter(|p| (p[0] - p[1]).abs() >= 0.1) {
            let side = p[0] > p[1];
            let t = integrate(&f, p, 0.1, 200).unwrap();
            assert!(t.states.iter().all(|s| (s[0] > s[1]) == side), "{p:?}");
        }
    }

    #[test]
    fn integrate_is_deterministic() {
        let f = preset("bilinear_quadratic").unwrap();
        let a = integrate_sampled(&f, &[0.3, -0.2], 0.5, 30, 5).unwrap();
        let b = integrate_sampled(&f, &[0.3, -0.2], 0.5, 30, 5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn blow_up_is_reported() {
        let f = VectorField::custom("blowup", 1, |x, out| out[0] = x[0] * x[0]);
        let err = integrate(&f, &[1.0], 0.5, 50).unwrap_err();
        assert!(matches!(err, Error::NonFiniteState { .. }));
        let f = preset("toggle_switch").unwrap();
        assert!(matches!(
            integrate(&f, &[-1.0, -1.0], 0.1, 3).unwrap_err(),
            Error::NonFiniteState { step: 1 }
        ));
    }

    #[test]
    fn preset_values() {
        let bq = preset("bilinear_quadratic").unwrap();
        let v = bq.eval(&[2f64.sqrt(), 1.0]);
        assert!(v[0].abs() < 1e-12 && v[1].abs() < 1e-12);
        assert_eq!(preset("tc_t2").unwrap().eval(&[3.0, -4.0]), vec![-3.0, 4.0]);
        assert_eq!(preset("toggle_switch").unwrap().eval(&[0.0, 0.0]), vec![1.0, 1.0]);
        assert!(matches!(preset("lorenz"), Err(Error::UnknownPreset(_))));
        let t = preset("toggle_switch").unwrap().with_param("beta", 3.54).unwrap();
        assert_eq!(t.params()["beta"], 3.54);
        assert!(preset("tc_t1").unwrap().with_param("beta", 1.0).is_err());
    }

    #[test]
    fn grid_corners_and_endpoints() {
        let g = sample_grid(&GridBox::square(0.0, 1.0, 2)).unwrap();
        assert_eq!(g, vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 1.0]]);
        let g = sample_grid(&GridBox::square(0.0, 4.0, 9)).unwrap();
        assert_eq!(g.len(), 81);
        assert!(g.contains(&vec![2.0, 2.0]));
        let b = GridBox::new(vec![-2.0, -1.0], vec![2.0, 3.0], vec![9, 9]).unwrap();
        let g = sample_grid(&b).unwrap();
        assert_eq!(g.len(), 81);
        assert_eq!(g[0], vec![-2.0, -1.0]);
        assert_eq!(g[80], vec![2.0, 3.0]);
        assert!(GridBox::new(vec![1.0], vec![0.0], vec![3]).is_err());
    }

    #[test]
    fn snapshots_do_not_pair_across_trajectories() {
        let mk = |s: Vec<Vec<f64>>| Trajectory {
            initial_condition: s[0].clone(),
            states: s,
            dt: 0.1,
        };
        let (a, b, c, d) = (vec![1.0], vec![2.0], vec![3.0], vec![4.0]);
        let one = make_snapshots(&[mk(vec![a.clone(), b.clone(), c.clone()])]).unwrap();
        assert_eq!(one.len(), 2);
        assert_eq!((one.x_pr[(0, 0)], one.x_pr[(1, 0)]), (1.0, 2.0));
        assert_eq!((one.x_fw[(0, 0)], one.x_fw[(1, 0)]), (2.0, 3.0));
        let two = make_snapshots(&[mk(vec![a, b]), mk(vec![c, d])]).unwrap();
        assert_eq!((two.x_pr[(0, 0)], two.x_pr[(1, 0)]), (1.0, 3.0));
        assert_eq!((two.x_fw[(0, 0)], two.x_fw[(1, 0)]), (2.0, 4.0));
        assert!(matches!(make_snapshots(&[]), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn benchmark_data_size() {
        let f = preset("toggle_switch").unwrap();
        let s = default_sampling("toggle_switch").unwrap();
        let ics = sample_grid(&s.grid).unwrap();
        let trajs = simulate(&f, &ics, s.dt, s.n_steps, s.substeps).unwrap();
        assert!(trajs.iter().all(|t| t.len() == 21));
        assert_eq!(make_snapshots(&trajs).unwrap().len(), 1620);
    }

    #[test]
    fn csv_round_trip_is_lossless() {
        let f = preset("bilinear_quadratic").unwrap();
        let t = integrate(&f, &[0.7, 0.1], 0.1, 4).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        t.write_csv(&p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("t,x1,x2\n"));
        let back = Trajectory::read_csv(&p).unwrap();
        assert_eq!(back.states, t.states);
        assert_eq!(back.dt, t.dt);
    }
}

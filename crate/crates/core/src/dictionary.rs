//! Observable dictionaries `Ψ: ℝⁿ → ℝᴺ`, evaluated as row vectors.
//!
//! Supported kinds: identity (plain DMD), Gaussian RBFs with k-means
//! centers, monomials, explicit polynomial lists, and dictionaries composed
//! with the inverse of a homeomorphism.

use faer::{Mat, MatRef};
use serde::{Deserialize, Serialize};

use crate::conjugacy::Homeomorphism;
use crate::dynamics::{sample_grid, GridBox};
use crate::error::{Error, Result};
use crate::kmeans::kmeans;
use crate::linalg::Matrix;

/// Round-trip tolerance required of a homeomorphism before composing with it.
pub const ROUND_TRIP_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Monomial {
    pub coef: f64,
    pub exponents: Vec<u32>,
}

impl Monomial {
    fn eval(&self, x: &[f64]) -> f64 {
        self.exponents
            .iter()
            .zip(x)
            .fold(self.coef, |acc, (&e, &v)| acc * v.powi(e as i32))
    }
}

/// Sum of monomials in the state coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polynomial {
    pub terms: Vec<Monomial>,
}

impl Polynomial {
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|t| t.eval(x)).sum()
    }

    /// The coordinate function `x_{axis+1}`.
    pub fn coordinate(axis: usize, dim: usize) -> Self {
        let mut exponents = vec![0; dim];
        exponents[axis] = 1;
        Polynomial {
            terms: vec![Monomial {
                coef: 1.0,
                exponents,
            }],
        }
    }

    fn is_coordinate(&self, axis: usize, dim: usize) -> bool {
        *self == Polynomial::coordinate(axis, dim)
    }

    /// Parse expressions such as `x2 + x1^2`, `-0.5*x1*x2` or `3`.
    /// Variables are `x1..xn` (or `y1..yn`).
    pub fn parse(src: &str, dim: usize) -> Result<Self> {
        let bad = |msg: &str| Error::InvalidArgument(format!("polynomial `{src}`: {msg}"));
        let cleaned: String = src.chars().filter(|c| !c.is_whitespace()).collect();
        if cleaned.is_empty() {
            return Err(bad("empty"));
        }
        // split into signed terms
        let mut terms_src = Vec::new();
        let mut cur = String::new();
        for (i, ch) in cleaned.chars().enumerate() {
            let after_exp = cur.ends_with('e') && cur.chars().next().is_some_and(|c| c.is_ascii_digit() || c == '.');
            if (ch == '+' || ch == '-') && i > 0 && !cur.ends_with('^') && !cur.ends_with('*') && !after_exp {
                terms_src.push(std::mem::take(&mut cur));
            }
            cur.push(ch);
        }
        terms_src.push(cur);
        let mut terms = Vec::new();
        for t in terms_src {
            let (sign, body) = match t.strip_prefix('-') {
                Some(b) => (-1.0, b),
                None => (1.0, t.strip_prefix('+').unwrap_or(&t)),
            };
            if body.is_empty() {
                return Err(bad("dangling sign"));
            }
            let mut coef = sign;
            let mut exponents = vec![0u32; dim];
            for factor in body.split('*') {
                let (base, exp) = match factor.split_once('^') {
                    Some((b, e)) => (b, e.parse::<u32>().map_err(|_| bad("bad exponent"))?),
                    None => (factor, 1),
                };
                if let Some(idx) = base.strip_prefix('x').or_else(|| base.strip_prefix('y')) {
                    let i: usize = idx.parse().map_err(|_| bad("bad variable"))?;
                    if i == 0 || i > dim {
                        return Err(bad("variable index out of range"));
                    }
                    exponents[i - 1] += exp;
                } else {
                    let v: f64 = base.parse().map_err(|_| bad("bad factor"))?;
                    coef *= v.powi(exp as i32);
                }
            }
            terms.push(Monomial { coef, exponents });
        }
        Ok(Polynomial { terms })
    }
}

/// Kind-specific dictionary parameters. Serialized as `kind` + `params`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum Basis {
    Identity {},
    Rbf {
        centers: Vec<Vec<f64>>,
        sigma: f64,
        /// Coordinates `x1..xn` precede the RBF values.
        prepend_state: bool,
    },
    Polynomial {
        exponents: Vec<Vec<u32>>,
    },
    Custom {
        observables: Vec<Polynomial>,
    },
    Composed {
        base: Box<Dictionary>,
        homeomorphism: Homeomorphism,
    },
}

/// A finite ordered set of observables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dictionary {
    #[serde(flatten)]
    pub basis: Basis,
    pub dim: usize,
    pub n_obs: usize,
    /// The first `dim` observables are the state coordinates.
    pub state_inclusive: bool,
}

/// Rows are `Ψ(state_i)`.
#[derive(Debug, Clone)]
pub struct EvaluationMatrix {
    pub values: Matrix,
}

impl Dictionary {
    fn from_basis(basis: Basis, dim: usize) -> Result<Self> {
        let (n_obs, state_inclusive) = match &basis {
            Basis::Identity {} => (dim, true),
            Basis::Rbf {
                centers,
                sigma,
                prepend_state,
            } => {
                if !(*sigma > 0.0) {
                    return Err(Error::InvalidArgument("RBF width must be positive".into()));
                }
                if centers.iter().any(|c| c.len() != dim) {
                    return Err(Error::ShapeMismatch("RBF center dimension".into()));
                }
                let extra = if *prepend_state { dim } else { 0 };
                (centers.len() + extra, *prepend_state)
            }
            Basis::Polynomial { exponents } => {
                if exponents.iter().any(|e| e.len() != dim) {
                    return Err(Error::ShapeMismatch("monomial exponent length".into()));
                }
                let si = exponents.len() >= dim
                    && (0..dim).all(|a| (0..dim).all(|b| exponents[a][b] == u32::from(a == b)));
                (exponents.len(), si)
            }
            Basis::Custom { observables } => {
                if observables.iter().flat_map(|p| &p.terms).any(|t| t.exponents.len() != dim) {
                    return Err(Error::ShapeMismatch("observable exponent length".into()));
                }
                let si = observables.len() >= dim
                    && (0..dim).all(|a| observables[a].is_coordinate(a, dim));
                (observables.len(), si)
            }
            Basis::Composed { base, homeomorphism } => {
                if homeomorphism.dim().is_some_and(|d| d != dim) || base.dim != dim {
                    return Err(Error::ShapeMismatch("composed dictionary dimensions".into()));
                }
                (base.n_obs, false)
            }
        };
        if n_obs == 0 {
            return Err(Error::EmptyInput("dictionary has no observables".into()));
        }
        Ok(Dictionary {
            basis,
            dim,
            n_obs,
            state_inclusive,
        })
    }

    pub fn identity(dim: usize) -> Self {
        Dictionary::from_basis(Basis::Identity {}, dim).expect("identity dictionary")
    }

    pub fn rbf(centers: Vec<Vec<f64>>, sigma: f64, prepend_state: bool) -> Result<Self> {
        let dim = centers
            .first()
            .map(Vec::len)
            .ok_or_else(|| Error::EmptyInput("no RBF centers".into()))?;
        Dictionary::from_basis(
            Basis::Rbf {
                centers,
                sigma,
                prepend_state,
            },
            dim,
        )
    }

    /// Monomials `Π x_i^{e_i}` in the given order.
    pub fn polynomial(exponents: Vec<Vec<u32>>) -> Result<Self> {
        let dim = exponents
            .first()
            .map(Vec::len)
            .ok_or_else(|| Error::EmptyInput("no monomials".into()))?;
        Dictionary::from_basis(Basis::Polynomial { exponents }, dim)
    }

    /// All monomials of total degree 1..=degree, graded then reverse-lexicographic,
    /// so the coordinates come first.
    pub fn polynomial_up_to(dim: usize, degree: u32) -> Result<Self> {
        let mut exps: Vec<Vec<u32>> = Vec::new();
        for d in 1..=degree {
            let mut level = Vec::new();
            fill_monomials(dim, d, &mut vec![0; dim], 0, &mut level);
            level.sort_by(|a, b| b.cmp(a));
            exps.extend(level);
        }
        Dictionary::polynomial(exps)
    }

    pub fn custom(observables: Vec<Polynomial>, dim: usize) -> Result<Self> {
        Dictionary::from_basis(Basis::Custom { observables }, dim)
    }

    /// Parse `;`-separated polynomial observables, e.g. `x1; x2; x1^2`.
    pub fn parse_custom(src: &str, dim: usize) -> Result<Self> {
        let obs = src
            .split(';')
            .filter(|s| !s.trim().is_empty())
            .map(|s| Polynomial::parse(s, dim))
            .collect::<Result<Vec<_>>>()?;
        Dictionary::custom(obs, dim)
    }

    pub fn kind(&self) -> &'static str {
        match self.basis {
            Basis::Identity {} => "identity",
            Basis::Rbf { .. } => "rbf",
            Basis::Polynomial { .. } => "polynomial",
            Basis::Custom { .. } => "custom",
            Basis::Composed { .. } => "composed",
        }
    }

    /// Check the structural invariants after deserialization.
    pub fn validate(&self) -> Result<()> {
        let fresh = Dictionary::from_basis(self.basis.clone(), self.dim)?;
        if fresh.n_obs != self.n_obs || fresh.state_inclusive != self.state_inclusive {
            return Err(Error::ShapeMismatch(format!(
                "dictionary metadata disagrees with its parameters (n_obs {} vs {})",
                self.n_obs, fresh.n_obs
            )));
        }
        Ok(())
    }

    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.n_obs);
        match &self.basis {
            Basis::Identity {} => out.copy_from_slice(x),
            Basis::Rbf {
                centers,
                sigma,
                prepend_state,
            } => {
                let off = if *prepend_state {
                    out[..self.dim].copy_from_slice(x);
                    self.dim
                } else {
                    0
                };
                let s2 = sigma * sigma;
                for (o, c) in out[off..].iter_mut().zip(centers) {
                    let d2: f64 = x.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum();
                    *o = (-d2 / s2).exp();
                }
            }
            Basis::Polynomial { exponents } => {
                for (o, e) in out.iter_mut().zip(exponents) {
                    *o = e.iter().zip(x).map(|(&k, &v)| v.powi(k as i32)).product();
                }
            }
            Basis::Custom { observables } => {
                for (o, p) in out.iter_mut().zip(observables) {
                    *o = p.eval(x);
                }
            }
            Basis::Composed {
                base,
                homeomorphism,
            } => base.eval_into(&homeomorphism.inverse(x), out),
        }
    }

    /// `Ψ(x)` as a row vector.
    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_obs];
        self.eval_into(x, &mut out);
        out
    }

    /// Row-wise evaluation of a `k × dim` state matrix.
    pub fn evaluate(&self, states: MatRef<'_, f64>) -> Result<EvaluationMatrix> {
        if states.ncols() != self.dim {
            return Err(Error::ShapeMismatch(format!(
                "states have dimension {}, dictionary expects {}",
                states.ncols(),
                self.dim
            )));
        }
        let mut values = Mat::zeros(states.nrows(), self.n_obs);
        let mut x = vec![0.0; self.dim];
        let mut out = vec![0.0; self.n_obs];
        for i in 0..states.nrows() {
            for (j, v) in x.iter_mut().enumerate() {
                *v = states[(i, j)];
            }
            self.eval_into(&x, &mut out);
            for (j, &v) in out.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::NonFiniteObservable { row: i, col: j });
                }
                values[(i, j)] = v;
            }
        }
        Ok(EvaluationMatrix { values })
    }

    pub fn evaluate_points(&self, points: &[Vec<f64>]) -> Result<EvaluationMatrix> {
        let m = Mat::from_fn(points.len(), self.dim, |i, j| points[i][j]);
        self.evaluate(m.as_ref())
    }
}

fn fill_monomials(dim: usize, left: u32, cur: &mut Vec<u32>, axis: usize, out: &mut Vec<Vec<u32>>) {
    if axis == dim - 1 {
        cur[axis] = left;
        out.push(cur.clone());
        return;
    }
    for e in 0..=left {
        cur[axis] = e;
        fill_monomials(dim, left - e, cur, axis + 1, out);
    }
    cur[axis] = 0;
}

/// Gaussian RBF dictionary `ψ_i(x) = exp(-‖x - c_i‖²/σ²)` with centers from
/// seeded k-means over `states`.
pub fn rbf_from_data(states: &[Vec<f64>], n_centers: usize, sigma: f64, seed: u64) -> Result<Dictionary> {
    if !(sigma > 0.0) {
        return Err(Error::InvalidArgument("RBF width must be positive".into()));
    }
    Dictionary::rbf(kmeans(states, n_centers, seed)?, sigma, false)
}

/// `Ψ = base ∘ h⁻¹`, after verifying the round trip of `h` on `working_box`.
pub fn compose_with_inverse_homeo(
    base: &Dictionary,
    h: &Homeomorphism,
    working_box: &GridBox,
) -> Result<Dictionary> {
    if working_box.dim() != base.dim {
        return Err(Error::ShapeMismatch("working box dimension".into()));
    }
    let n_side = (200f64.powf(1.0 / base.dim as f64)).ceil() as usize;
    let pts = sample_grid(&working_box.with_counts(vec![n_side.max(2); base.dim]))?;
    let defect = h.round_trip_defect(&pts);
    if !(defect <= ROUND_TRIP_TOL) {
        return Err(Error::InverseRoundTripFailure {
            defect,
            tol: ROUND_TRIP_TOL,
        });
    }
    Dictionary::from_basis(
        Basis::Composed {
            base: Box::new(base.clone()),
            homeomorphism: h.clone(),
        },
        base.dim,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn theta() -> Dictionary {
        Dictionary::parse_custom("y1; y2; y1^2", 2).unwrap()
    }

    #[test]
    fn identity_returns_states() {
        let d = Dictionary::identity(2);
        let m = Mat::from_fn(2, 2, |i, j| [[1.0, 2.0], [3.0, 4.0]][i][j]);
        let e = d.evaluate(m.as_ref()).unwrap();
        assert_eq!(crate::linalg::to_rows(e.values.as_ref()), vec![vec![1.0, 2.0], vec![3.0, 4.0]]);
        assert!(d.state_inclusive);
    }

    #[test]
    fn custom_polynomials() {
        assert_eq!(theta().eval(&[2.0, 5.0]), vec![2.0, 5.0, 4.0]);
        assert!(theta().state_inclusive);
        let psi = Dictionary::parse_custom("x1; x2 + x1^2; x1^2", 2).unwrap();
        assert_eq!(psi.eval(&[2.0, 1.0]), vec![2.0, 5.0, 4.0]);
        assert!(!psi.state_inclusive);
        let p = Polynomial::parse("-0.5*x1*x2 + 3 - x2^2", 2).unwrap();
        assert_eq!(p.eval(&[2.0, 3.0]), -3.0 + 3.0 - 9.0);
        assert!(Polynomial::parse("x3", 2).is_err());
        assert!(Polynomial::parse("x1 +", 2).is_err());
    }

    #[test]
    fn composed_matches_conjugate_dictionary() {
        let h = Homeomorphism::ShearQuadratic { coef: 1.0 };
        let gb = GridBox::square(-2.0, 2.0, 9);
        let psi = compose_with_inverse_homeo(&theta(), &h, &gb).unwrap();
        let explicit = Dictionary::parse_custom("x1; x2 + x1^2; x1^2", 2).unwrap();
        for p in sample_grid(&GridBox::square(-2.0, 2.0, 7)).unwrap() {
            let a = psi.eval(&p);
            let b = explicit.eval(&p);
            assert!(a.iter().zip(&b).all(|(u, v)| (u - v).abs() < 1e-12));
        }
        let id = compose_with_inverse_homeo(&theta(), &Homeomorphism::Identity {}, &gb).unwrap();
        assert_eq!(id.eval(&[0.3, -1.1]), theta().eval(&[0.3, -1.1]));
    }

    #[test]
    fn composition_law_on_random_points() {
        use rand::{Rng, SeedableRng};
        let h = Homeomorphism::ShearQuadratic { coef: 1.0 };
        let gb = GridBox::square(-2.0, 2.0, 9);
        let psi = compose_with_inverse_homeo(&theta(), &h, &gb).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let y = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
            let a = psi.eval(&h.forward(&y));
            let b = theta().eval(&y);
            assert!(a.iter().zip(&b).all(|(u, v)| (u - v).abs() < 1e-12));
        }
    }

    #[test]
    fn broken_inverse_is_rejected() {
        let h = Homeomorphism::CustomPoly {
            forward: vec![Polynomial::parse("y1", 2).unwrap(), Polynomial::parse("y2 - y1^2", 2).unwrap()],
            inverse: vec![Polynomial::parse("x1", 2).unwrap(), Polynomial::parse("x2", 2).unwrap()],
        };
        let err = compose_with_inverse_homeo(&theta(), &h, &GridBox::square(-2.0, 2.0, 9)).unwrap_err();
        assert!(matches!(err, Error::InverseRoundTripFailure { .. }));
    }

    #[test]
    fn rbf_values_and_centers() {
        let mut pts = vec![vec![0.0, 0.0]; 4];
        pts.extend(vec![vec![1.0, 1.0]; 4]);
        let d = rbf_from_data(&pts, 2, 0.4, 5).unwrap();
        assert_eq!(d.n_obs, 2);
        assert_eq!(d.eval(&[0.0, 0.0])[0], 1.0);
        assert_eq!(d.eval(&[1.0, 1.0])[1], 1.0);
        let v = d.eval(&[0.5, 0.2]);
        assert!(v.iter().all(|&x| x > 0.0 && x <= 1.0));
        assert!(rbf_from_data(&pts, 2, 0.0, 5).is_err());
    }

    #[test]
    fn state_prepended_rbf() {
        let d = Dictionary::rbf(vec![vec![0.0, 0.0], vec![1.0, 0.0]], 0.5, true).unwrap();
        assert_eq!(d.n_obs, 4);
        assert!(d.state_inclusive);
        let v = d.eval(&[0.25, -1.0]);
        assert_eq!(&v[..2], &[0.25, -1.0]);
    }

    #[test]
    fn monomials_up_to_degree_two() {
        let d = Dictionary::polynomial_up_to(2, 2).unwrap();
        assert_eq!(d.n_obs, 5);
        assert!(d.state_inclusive);
        assert_eq!(d.eval(&[2.0, 3.0]), vec![2.0, 3.0, 4.0, 6.0, 9.0]);
    }

    #[test]
    fn json_schema_and_round_trip() {
        let d = Dictionary::rbf(vec![vec![0.0, 1.0]], 0.4, false).unwrap();
        let v: serde_json::Value = serde_json::to_value(&d).unwrap();
        assert_eq!(v["kind"], "rbf");
        assert_eq!(v["dim"], 2);
        assert_eq!(v["n_obs"], 1);
        assert_eq!(v["state_inclusive"], false);
        assert_eq!(v["params"]["sigma"], 0.4);
        assert_eq!(v["params"]["centers"][0][1], 1.0);
        let back: Dictionary = serde_json::from_value(v).unwrap();
        assert_eq!(back, d);
        let id: Dictionary = serde_json::from_str(&serde_json::to_string(&Dictionary::identity(3)).unwrap()).unwrap();
        assert_eq!(id, Dictionary::identity(3));
        let h = Homeomorphism::ShearQuadratic { coef: 1.0 };
        let c = compose_with_inverse_homeo(&theta(), &h, &GridBox::square(-1.0, 1.0, 3)).unwrap();
        let back: Dictionary = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
        back.validate().unwrap();
    }

    #[test]
    fn non_finite_observable_is_reported() {
        let d = Dictionary::identity(1);
        let m = Mat::from_fn(2, 1, |i, _| if i == 1 { f64::NAN } else { 0.0 });
        assert!(matches!(d.evaluate(m.as_ref()), Err(Error::NonFiniteObservable { row: 1, col: 0 })));
        assert!(matches!(Dictionary::identity(2).evaluate(m.as_ref()), Err(Error::ShapeMismatch(_))));
    }
}

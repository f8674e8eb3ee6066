//! Polynomial low-pass graph filters `sum_{k=1..K} a_k P^k`.
//!
//! On the Laplacian `L = I - P` such a polynomial acts on eigenvalue `lambda`
//! with gain `h(lambda) = sum_k a_k (1 - lambda)^k`. There is no constant
//! term, so `h(1) = 0` for every filter.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::kv::{format_list, parse_list, KvFile};

/// Largest order used by the built-in designs.
pub const MAX_BUILTIN_ORDER: usize = 3;

/// Default fitting grid size on `[0, 1]`.
pub const DEFAULT_GRID_POINTS: usize = 1001;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterKind {
    Linear,
    SecondOrder,
    IdealApprox,
    Custom,
}

impl FromStr for FilterKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(FilterKind::Linear),
            "second_order" => Ok(FilterKind::SecondOrder),
            "ideal_approx" => Ok(FilterKind::IdealApprox),
            "custom" => Ok(FilterKind::Custom),
            other => Err(Error::Parameter(format!(
                "unknown filter kind `{other}` (linear, second_order, ideal_approx, custom)"
            ))),
        }
    }
}

impl fmt::Display for FilterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FilterKind::Linear => "linear",
            FilterKind::SecondOrder => "second_order",
            FilterKind::IdealApprox => "ideal_approx",
            FilterKind::Custom => "custom",
        })
    }
}

/// Coefficients `a_1..a_K` and the design parameters that produced them.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FilterSpec {
    pub kind: FilterKind,
    pub coeffs: Vec<f64>,
    /// Cutoff of the approximated ideal filter.
    pub tau: Option<f64>,
    /// Weight of the approximated ideal filter in `P + beta * f(P)`.
    pub beta: Option<f64>,
    /// RMS residual of the fit, when the coefficients were fitted.
    pub fit_rms: Option<f64>,
}

impl FilterSpec {
    pub fn linear() -> Self {
        Self {
            kind: FilterKind::Linear,
            coeffs: vec![1.0],
            tau: None,
            beta: None,
            fit_rms: None,
        }
    }

    /// `2P - P^2`, response `1 - lambda^2`.
    pub fn second_order() -> Self {
        Self {
            kind: FilterKind::SecondOrder,
            coeffs: vec![2.0, -1.0],
            tau: None,
            beta: None,
            fit_rms: None,
        }
    }

    /// Third-order least-squares fit of the step `1[lambda <= tau]`,
    /// blended with the linear filter as `P + beta * f(P)`.
    pub fn ideal_approx(tau: f64, beta: f64) -> Result<Self> {
        if !(tau > 0.0 && tau < 1.0) {
            return Err(Error::Parameter(format!(
                "tau must lie in (0, 1), got {tau}"
            )));
        }
        if !(beta.is_finite() && beta >= 0.0) {
            return Err(Error::Parameter(format!(
                "beta must be nonnegative, got {beta}"
            )));
        }
        let grid = uniform_grid(0.0, 1.0, DEFAULT_GRID_POINTS);
        let fit = fit_ideal_lpf(tau, MAX_BUILTIN_ORDER, &grid, None)?;
        Ok(Self {
            kind: FilterKind::IdealApprox,
            coeffs: fit.coeffs,
            tau: Some(tau),
            beta: Some(beta),
            fit_rms: Some(fit.rms),
        })
    }

    pub fn custom(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.is_empty() || coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::Parameter(format!(
                "custom coefficients must be non-empty and finite: {coeffs:?}"
            )));
        }
        Ok(Self {
            kind: FilterKind::Custom,
            coeffs,
            tau: None,
            beta: None,
            fit_rms: None,
        })
    }

    pub fn order(&self) -> usize {
        self.coeffs.len()
    }

    /// Coefficients actually applied to the signal. For a blended ideal
    /// approximation this is `[1 + beta a_1, beta a_2, ...]`; trailing zeros
    /// are dropped so `beta = 0` reduces to the linear filter exactly.
    pub fn effective_coeffs(&self) -> Vec<f64> {
        let mut c = match (self.kind, self.beta) {
            (FilterKind::IdealApprox, Some(beta)) => {
                let mut c: Vec<f64> = self.coeffs.iter().map(|a| beta * a).collect();
                c[0] += 1.0;
                c
            }
            _ => self.coeffs.clone(),
        };
        while c.len() > 1 && c.last() == Some(&0.0) {
            c.pop();
        }
        c
    }

    /// Gain at `lambda` of the filter as applied (blend included).
    pub fn response(&self, lambda: f64) -> f64 {
        polynomial_response(&self.effective_coeffs(), lambda)
    }

    pub fn to_kv(&self) -> KvFile {
        let mut kv = KvFile::new();
        kv.set("kind", self.kind);
        if let Some(tau) = self.tau {
            kv.set("tau", tau);
        }
        if let Some(beta) = self.beta {
            kv.set("beta", beta);
        }
        kv.set("coeffs", format_list(&self.coeffs));
        kv
    }

    /// Reads a filter file. Listed `coeffs` take precedence over refitting.
    pub fn from_kv(kv: &KvFile) -> Result<Self> {
        let kind: FilterKind = kv
            .get("kind")
            .ok_or_else(|| Error::Parameter("filter file lacks `kind`".into()))?
            .parse()?;
        let coeffs = kv.get("coeffs").map(parse_list::<f64>).transpose()?;
        let tau = kv.get_parsed::<f64>("tau")?;
        let beta = kv.get_parsed::<f64>("beta")?;
        match (kind, coeffs) {
            (FilterKind::IdealApprox, Some(coeffs)) => {
                let mut f = FilterSpec::custom(coeffs)?;
                f.kind = FilterKind::IdealApprox;
                f.tau = tau;
                f.beta = beta;
                Ok(f)
            }
            (FilterKind::Custom, Some(coeffs)) => FilterSpec::custom(coeffs),
            (FilterKind::Custom, None) => {
                Err(Error::Parameter("custom filter needs `coeffs`".into()))
            }
            (kind, _) => predefined_filter(kind, tau.unwrap_or(0.1), beta.unwrap_or(0.0)),
        }
    }
}

/// `sum_k a_k (1 - lambda)^k`, evaluated by Horner's rule in `x = 1 - lambda`.
pub fn polynomial_response(coeffs: &[f64], lambda: f64) -> f64 {
    let x = 1.0 - lambda;
    coeffs.iter().rev().fold(0.0, |acc, a| (acc + a) * x)
}

pub fn predefined_filter(kind: FilterKind, tau: f64, beta: f64) -> Result<FilterSpec> {
    match kind {
        FilterKind::Linear => Ok(FilterSpec::linear()),
        FilterKind::SecondOrder => Ok(FilterSpec::second_order()),
        FilterKind::IdealApprox => FilterSpec::ideal_approx(tau, beta),
        FilterKind::Custom => Err(Error::Parameter(
            "custom filters are built from coefficients".into(),
        )),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResponseCurve {
    pub lambdas: Vec<f64>,
    pub gains: Vec<f64>,
}

impl ResponseCurve {
    /// Two-column CSV with a schema comment line.
    pub fn to_csv(&self) -> String {
        let mut out = format!("# schema_version={}\nlambda,gain\n", crate::SCHEMA_VERSION);
        for (l, g) in self.lambdas.iter().zip(&self.gains) {
            out.push_str(&format!("{l},{g}\n"));
        }
        out
    }
}

pub fn frequency_response(filter: &FilterSpec, lambdas: &[f64]) -> Result<ResponseCurve> {
    if lambdas
        .windows(2)
        .any(|w| w[1].partial_cmp(&w[0]) != Some(std::cmp::Ordering::Greater))
    {
        return Err(Error::Parameter(
            "frequency grid must be strictly increasing".into(),
        ));
    }
    let coeffs = filter.effective_coeffs();
    Ok(ResponseCurve {
        lambdas: lambdas.to_vec(),
        gains: lambdas
            .iter()
            .map(|&l| polynomial_response(&coeffs, l))
            .collect(),
    })
}

/// `n` points from `lo` to `hi` inclusive.
pub fn uniform_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n)
            .map(|j| lo + (hi - lo) * j as f64 / (n - 1) as f64)
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LpfFit {
    pub coeffs: Vec<f64>,
    /// Weighted RMS of the residual over the grid.
    pub rms: f64,
}

/// Weighted least-squares problem in the basis `(1 - lambda)^k`, `k = 1..order`.
#[derive(Debug, Clone)]
pub struct FitProblem {
    pub order: usize,
    pub grid: Vec<f64>,
    pub target: Vec<f64>,
    pub weights: Vec<f64>,
}

impl FitProblem {
    pub fn new(
        order: usize,
        grid: &[f64],
        target: impl Fn(f64) -> f64,
        weights: Option<&[f64]>,
    ) -> Result<Self> {
        if order == 0 {
            return Err(Error::Parameter("fit order must be at least 1".into()));
        }
        if grid.is_empty() || grid.iter().any(|l| !l.is_finite()) {
            return Err(Error::Parameter(
                "fit grid must be non-empty and finite".into(),
            ));
        }
        let weights = match weights {
            Some(w) if w.len() != grid.len() => {
                return Err(Error::Shape(format!(
                    "{} weights for {} grid points",
                    w.len(),
                    grid.len()
                )))
            }
            Some(w) if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) => {
                return Err(Error::Parameter(
                    "weights must be finite and nonnegative".into(),
                ))
            }
            Some(w) => w.to_vec(),
            None => vec![1.0; grid.len()],
        };
        Ok(Self {
            order,
            grid: grid.to_vec(),
            target: grid.iter().map(|&l| target(l)).collect(),
            weights,
        })
    }

    /// Basis row `[(1-l), (1-l)^2, ...]` at grid point `j`.
    pub fn basis(&self, j: usize) -> Vec<f64> {
        let x = 1.0 - self.grid[j];
        let mut row = Vec::with_capacity(self.order);
        let mut p = 1.0;
        for _ in 0..self.order {
            p *= x;
            row.push(p);
        }
        row
    }

    /// `sum_j w_j (h(l_j) - y_j)^2`.
    pub fn objective(&self, coeffs: &[f64]) -> f64 {
        (0..self.grid.len())
            .map(|j| {
                let r = polynomial_response(coeffs, self.grid[j]) - self.target[j];
                self.weights[j] * r * r
            })
            .sum()
    }

    pub fn rms(&self, coeffs: &[f64]) -> f64 {
        let total: f64 = self.weights.iter().sum();
        if total == 0.0 {
            return 0.0;
        }
        (self.objective(coeffs) / total).sqrt()
    }
}

/// Strategy minimizing a [`FitProblem`]. The model is linear in the
/// coefficients, so [`NormalEquations`] is exact; iterative solvers can be
/// plugged in through this trait.
pub trait CoefficientSolver {
    fn solve(&self, problem: &FitProblem) -> Result<Vec<f64>>;
}

/// Cholesky solve of `A^T W A c = A^T W y`.
#[derive(Debug, Clone, Copy, Default)]
pub struct NormalEquations;

impl CoefficientSolver for NormalEquations {
    fn solve(&self, problem: &FitProblem) -> Result<Vec<f64>> {
        let k = problem.order;
        let mut gram = vec![vec![0.0; k]; k];
        let mut rhs = vec![0.0; k];
        for j in 0..problem.grid.len() {
            let w = problem.weights[j];
            let row = problem.basis(j);
            for a in 0..k {
                rhs[a] += w * row[a] * problem.target[j];
                for b in 0..=a {
                    gram[a][b] += w * row[a] * row[b];
                }
            }
        }
        cholesky_solve(gram, rhs)
    }
}

/// Solves `G x = b` for symmetric positive definite `G` (lower triangle read).
fn cholesky_solve(mut g: Vec<Vec<f64>>, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let n = b.len();
    let scale = (0..n).map(|i| g[i][i].abs()).fold(0.0, f64::max);
    for j in 0..n {
        let d = g[j][..j].iter().fold(g[j][j], |d, v| d - v * v);
        if d.is_nan() || d <= 1e-14 * scale {
            return Err(Error::Fit(format!(
                "normal matrix is singular (pivot {d:e} at column {j})"
            )));
        }
        let d = d.sqrt();
        g[j][j] = d;
        for i in (j + 1)..n {
            let v = g[i][..j]
                .iter()
                .zip(&g[j][..j])
                .fold(g[i][j], |v, (a, b)| v - a * b);
            g[i][j] = v / d;
        }
    }
    for i in 0..n {
        for p in 0..i {
            b[i] -= g[i][p] * b[p];
        }
        b[i] /= g[i][i];
    }
    for i in (0..n).rev() {
        for p in (i + 1)..n {
            b[i] -= g[p][i] * b[p];
        }
        b[i] /= g[i][i];
    }
    Ok(b)
}

/// Fits an arbitrary target response.
pub fn fit_response(
    target: impl Fn(f64) -> f64,
    order: usize,
    grid: &[f64],
    weights: Option<&[f64]>,
    solver: &dyn CoefficientSolver,
) -> Result<LpfFit> {
    let problem = FitProblem::new(order, grid, target, weights)?;
    let coeffs = solver.solve(&problem)?;
    let rms = problem.rms(&coeffs);
    Ok(LpfFit { coeffs, rms })
}

/// Least-squares polynomial approximation of the ideal low-pass step
/// `1[lambda <= tau]` (the cutoff point itself is in the passband).
pub fn fit_ideal_lpf(
    tau: f64,
    order: usize,
    grid: &[f64],
    weights: Option<&[f64]>,
) -> Result<LpfFit> {
    if !tau.is_finite() {
        return Err(Error::Parameter(format!("tau must be finite, got {tau}")));
    }
    fit_response(
        |l| if l <= tau { 1.0 } else { 0.0 },
        order,
        grid,
        weights,
        &NormalEquations,
    )
}

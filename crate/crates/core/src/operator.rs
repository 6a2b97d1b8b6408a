//! The parametric transfer operator of the induced system: for decay
//! parameter Z and inverse temperature beta,
//!
//!   L phi(x) = sum over branches k of e^(beta W_k - Z r_k) phi(h_k x)
//!
//! with W_k and r_k read at the preimage h_k(x). Its leading eigendata
//! drive everything downstream: pressure is the root of lambda(Z) = 1 and
//! the eigenpair (H, nu) builds the equilibrium measure.
//!
//! Two evaluation routes share one interface. When every branch has a
//! constant roof and a constant weight, constant functions are fixed by
//! the operator, so lambda is the plain branch series and the eigendata
//! are exact up to a certified series tail: the scalar route. Otherwise
//! the operator acts on piecewise-polynomial functions over a uniform
//! grid and the eigenpair comes from power iteration: the grid route.
//! Countable branch families are truncated with certified tail bounds on
//! either route.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{BaseInterval, BranchCount, SuspensionSystem};
use crate::potential::{integrate_potential, Potential, PotentialKind};

/// Hard ceiling for branch enumeration in scalar tail ladders.
pub const TAIL_LADDER_LIMIT: usize = 4_194_304;
/// Branch ceiling on the grid route, which materializes per-node entries.
pub(crate) const ASSEMBLY_BRANCH_LIMIT: usize = 8_192;
/// Auto-chosen cutoffs stop once the certified tail is this fraction of
/// the retained sum.
const TAIL_FRACTION: f64 = 1e-12;
/// Depth of the distortion probe run at solve time.
const DISTORTION_DEPTH: usize = 6;
/// Longest stored prefix of scalar-route branch masses.
const MASS_STORE_LIMIT: usize = 65_536;
/// Consecutive sub-tolerance eigenvalue changes required to stop.
const STABLE_STEPS: usize = 10;

/// Compensated accumulator; branch series run to millions of terms and
/// plain summation would cost three digits of the 1e-12 tail target.
#[derive(Debug, Default, Clone, Copy)]
pub(crate) struct Kahan {
    pub(crate) sum: f64,
    carry: f64,
}

impl Kahan {
    pub(crate) fn add(&mut self, x: f64) {
        let y = x - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }
}

/// Uniform node layout over an interval; n >= 2 nodes including both ends.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl Grid {
    pub fn new(lo: f64, hi: f64, n: usize) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidModel(format!("grid span [{lo}, {hi}] invalid")));
        }
        if n < 2 {
            return Err(Error::InvalidModel(format!("grid needs at least 2 nodes, got {n}")));
        }
        Ok(Self { lo, hi, n })
    }

    pub fn from_base(base: &BaseInterval, n: usize) -> Result<Self> {
        Self::new(base.lo, base.hi, n)
    }

    pub fn node(&self, i: usize) -> f64 {
        let t = i as f64 / (self.n - 1) as f64;
        self.lo * (1.0 - t) + self.hi * t
    }

    pub fn spacing(&self) -> f64 {
        (self.hi - self.lo) / (self.n - 1) as f64
    }
}

/// Interpolation rule for functions held on a grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Interp {
    Linear,
    /// Catmull-Rom cubic with linearly extrapolated ghost nodes
    Cubic,
}

/// Four-node stencil reproducing the interpolation rule at `x`: the
/// interpolated value is the dot product of the weights with the nodal
/// values at the indices. Ghost nodes at the ends are folded back into
/// real indices, so the stencil is also the row of the interpolation
/// operator used when transposing.
fn stencil(grid: &Grid, interp: Interp, x: f64) -> ([usize; 4], [f64; 4]) {
    let n = grid.n;
    let t = ((x - grid.lo) / grid.spacing()).clamp(0.0, (n - 1) as f64);
    let j = (t.floor() as usize).min(n - 2);
    let f = t - j as f64;
    match interp {
        Interp::Linear => ([j, j + 1, j, j], [1.0 - f, f, 0.0, 0.0]),
        Interp::Cubic => {
            let f2 = f * f;
            let f3 = f2 * f;
            let mut w = [
                0.5 * (-f + 2.0 * f2 - f3),
                0.5 * (2.0 - 5.0 * f2 + 3.0 * f3),
                0.5 * (f + 4.0 * f2 - 3.0 * f3),
                0.5 * (-f2 + f3),
            ];
            let mut idx = [j.wrapping_sub(1), j, j + 1, j + 2];
            if n >= 4 {
                // ghost nodes hold the cubic extrapolant, keeping the
                // scheme fourth order up to the ends
                if j == 0 {
                    let g = w[0];
                    w = [w[1] + 4.0 * g, w[2] - 6.0 * g, w[3] + 4.0 * g, -g];
                    idx = [0, 1, 2, 3];
                } else if j + 2 > n - 1 {
                    let g = w[3];
                    w = [-g, w[0] + 4.0 * g, w[1] - 6.0 * g, w[2] + 4.0 * g];
                    idx = [n - 4, n - 3, n - 2, n - 1];
                }
            } else {
                // tiny grids fall back to linear ghost values
                if j == 0 {
                    w[1] += 2.0 * w[0];
                    w[2] -= w[0];
                    w[0] = 0.0;
                    idx[0] = 0;
                }
                if j + 2 > n - 1 {
                    w[2] += 2.0 * w[3];
                    w[1] -= w[3];
                    w[3] = 0.0;
                    idx[3] = n - 1;
                }
            }
            (idx, w)
        }
    }
}

fn eval_values(grid: &Grid, interp: Interp, values: &[f64], x: f64) -> f64 {
    let (idx, w) = stencil(grid, interp, x);
    w[0] * values[idx[0]] + w[1] * values[idx[1]] + w[2] * values[idx[2]] + w[3] * values[idx[3]]
}

/// A function represented by nodal values and an interpolation rule.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFn {
    pub grid: Grid,
    pub values: Vec<f64>,
    pub interp: Interp,
}

impl GridFn {
    pub fn constant(grid: Grid, c: f64) -> Self {
        Self { grid, values: vec![c; grid.n], interp: Interp::Linear }
    }

    pub fn from_values(grid: Grid, values: Vec<f64>, interp: Interp) -> Result<Self> {
        if values.len() != grid.n {
            return Err(Error::InvalidModel(format!(
                "{} values on a {}-node grid",
                values.len(),
                grid.n
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidModel("non-finite nodal value".into()));
        }
        Ok(Self { grid, values, interp })
    }

    pub fn sample<F: Fn(f64) -> f64>(grid: Grid, interp: Interp, f: F) -> Self {
        let values = (0..grid.n).map(|i| f(grid.node(i))).collect();
        Self { grid, values, interp }
    }

    pub fn eval(&self, x: f64) -> f64 {
        eval_values(&self.grid, self.interp, &self.values, x)
    }

    pub fn sup(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn inf(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn sup_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Weight and roof of one branch of a branch-constant system, read at the
/// image midpoint (where they are constant by assumption).
pub(crate) fn branch_data(sys: &SuspensionSystem, v: &Potential, k: usize) -> Result<(f64, f64)> {
    let b = sys.branch(k)?;
    let y = b.apply(sys.base.midpoint());
    Ok((v.flight_integral(sys, &b, y).value, b.roof_at(y)))
}

/// The scalar route applies when the branch series itself is the leading
/// eigenvalue: constant roofs and a weight constant on each branch.
pub fn scalar_route_applicable(sys: &SuspensionSystem, v: &Potential) -> bool {
    sys.branch_constant_roof()
        && matches!(
            v.kind,
            PotentialKind::Zero | PotentialKind::Constant(_) | PotentialKind::BranchWeights
        )
}

/// Truncated branch series sum of e^(beta w_k - z r_k) together with its
/// roof- and weight-moment companions and certified tail bounds.
#[derive(Debug, Clone, Copy)]
pub(crate) struct SeriesEval {
    pub sum: f64,
    /// sum of r_k e^(beta w_k - z r_k)
    pub roof_sum: f64,
    /// sum of w_k e^(beta w_k - z r_k)
    pub weight_sum: f64,
    pub tail: f64,
    pub roof_tail: f64,
    pub weight_tail: f64,
    pub cutoff: usize,
}

/// Evaluate the branch series for a branch-constant system. Finite branch
/// sets are summed exactly; countable families run a doubling ladder until
/// the certified tail drops below 1e-12 of the retained sum or the ladder
/// ceiling is reached, whichever first. A fixed `cutoff` skips the ladder.
pub(crate) fn scalar_series(
    sys: &SuspensionSystem,
    v: &Potential,
    beta: f64,
    z: f64,
    cutoff: Option<usize>,
) -> Result<SeriesEval> {
    let mut sum = Kahan::default();
    let mut roof_sum = Kahan::default();
    let mut weight_sum = Kahan::default();
    fn extend(
        sys: &SuspensionSystem,
        v: &Potential,
        beta: f64,
        z: f64,
        from: usize,
        to: usize,
        acc: &mut [Kahan; 3],
    ) -> Result<()> {
        for k in from..to {
            let (w, r) = branch_data(sys, v, k)?;
            let term = (beta * w - z * r).exp();
            acc[0].add(term);
            acc[1].add(r * term);
            acc[2].add(w * term);
        }
        Ok(())
    }
    let mut acc = [sum, roof_sum, weight_sum];
    match sys.branch_count() {
        BranchCount::Finite(len) => {
            extend(sys, v, beta, z, 0, len, &mut acc)?;
            [sum, roof_sum, weight_sum] = acc;
            Ok(SeriesEval {
                sum: sum.sum,
                roof_sum: roof_sum.sum,
                weight_sum: weight_sum.sum,
                tail: 0.0,
                roof_tail: 0.0,
                weight_tail: 0.0,
                cutoff: len,
            })
        }
        BranchCount::Countable => {
            let cap = cutoff.unwrap_or(TAIL_LADDER_LIMIT).min(TAIL_LADDER_LIMIT).max(1);
            if !sys.tail_weight_bound(beta, z, cap).is_finite() {
                return Err(Error::TailDivergent {
                    z,
                    cutoff: cap,
                    min_admissible: sys.tail_abscissa(beta),
                });
            }
            let mut n = if cutoff.is_some() { cap } else { cap.min(1024) };
            let mut done = 0usize;
            loop {
                extend(sys, v, beta, z, done, n, &mut acc)?;
                [sum, roof_sum, weight_sum] = acc;
                done = n;
                let tail = sys.tail_weight_bound(beta, z, n);
                if cutoff.is_some() || tail <= TAIL_FRACTION * sum.sum || n == cap {
                    let roof_tail = sys.tail_roof_weight_bound(beta, z, n);
                    return Ok(SeriesEval {
                        sum: sum.sum,
                        roof_sum: roof_sum.sum,
                        weight_sum: weight_sum.sum,
                        tail,
                        roof_tail,
                        weight_tail: sys.weight_growth_bound() * roof_tail,
                        cutoff: n,
                    });
                }
                n = (n * 4).min(cap);
            }
        }
    }
}

/// Which evaluation route produced a solution, with the branch cutoff it
/// retained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Route {
    Scalar { cutoff: usize },
    Grid { cutoff: usize },
}

/// Leading eigendata of the operator at one (beta, Z).
///
/// `nu` holds the left eigenvector as masses summing to 1 minus
/// `nu_discarded`: node masses on the grid route, masses of the leading
/// 1-cylinders on the scalar route (where the eigenfunction is constant
/// and the conformal and equilibrium measures coincide). `tail_fraction`
/// is the certified relative weight of the discarded branch tail.
#[derive(Debug, Clone)]
pub struct SpectralSolution {
    pub beta: f64,
    pub z: f64,
    pub lambda: f64,
    pub h: GridFn,
    pub nu: Vec<f64>,
    pub nu_discarded: f64,
    pub residual: f64,
    pub k_distortion: f64,
    pub iterations: usize,
    pub tail_fraction: f64,
    pub route: Route,
}

/// A measure-weighted average with the certified bound on what the branch
/// truncation may have discarded from it.
#[derive(Debug, Clone, Copy)]
pub struct MeanValue {
    pub value: f64,
    pub tail: f64,
}

impl SpectralSolution {
    pub fn cutoff(&self) -> usize {
        match self.route {
            Route::Scalar { cutoff } | Route::Grid { cutoff } => cutoff,
        }
    }

    pub fn is_scalar(&self) -> bool {
        matches!(self.route, Route::Scalar { .. })
    }

    /// Equilibrium masses in the solution's own representation: node
    /// masses nu_j * h_j on the grid route, 1-cylinder masses on the
    /// scalar route.
    pub fn mu_masses(&self) -> Vec<f64> {
        match self.route {
            Route::Scalar { .. } => self.nu.clone(),
            Route::Grid { .. } => {
                self.nu.iter().zip(&self.h.values).map(|(n, h)| n * h).collect()
            }
        }
    }

    /// Mean return time under the equilibrium measure.
    pub fn mean_roof(&self, sys: &SuspensionSystem, v: &Potential) -> Result<MeanValue> {
        match self.route {
            Route::Scalar { cutoff } => {
                let s = scalar_series(sys, v, self.beta, self.z, Some(cutoff))?;
                Ok(MeanValue { value: s.roof_sum / s.sum, tail: s.roof_tail / s.sum })
            }
            Route::Grid { cutoff } => {
                let mut acc = Kahan::default();
                for (i, mass) in self.mu_masses().into_iter().enumerate() {
                    acc.add(mass * sys.roof_at(self.h.grid.node(i))?);
                }
                let tail = sys.tail_roof_weight_bound(self.beta, self.z, cutoff) * self.h.sup()
                    / self.lambda;
                Ok(MeanValue { value: acc.sum, tail })
            }
        }
    }

    /// Mean induced weight (the flight integral W, unscaled by beta)
    /// under the equilibrium measure.
    pub fn mean_weight(&self, sys: &SuspensionSystem, v: &Potential) -> Result<MeanValue> {
        match self.route {
            Route::Scalar { cutoff } => {
                let s = scalar_series(sys, v, self.beta, self.z, Some(cutoff))?;
                Ok(MeanValue { value: s.weight_sum / s.sum, tail: s.weight_tail / s.sum })
            }
            Route::Grid { cutoff } => {
                let mut acc = Kahan::default();
                for (i, mass) in self.mu_masses().into_iter().enumerate() {
                    acc.add(mass * integrate_potential(sys, v, self.h.grid.node(i))?.value);
                }
                let tail = sys.weight_growth_bound()
                    * sys.tail_roof_weight_bound(self.beta, self.z, cutoff)
                    * self.h.sup()
                    / self.lambda;
                Ok(MeanValue { value: acc.sum, tail })
            }
        }
    }
}

/// Solver knobs; the defaults match the shipped configuration.
#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    pub grid: usize,
    /// branch truncation; None picks the certified-tail ladder
    pub cutoff: Option<usize>,
    /// relative eigenvalue tolerance per iteration step
    pub tol: f64,
    pub max_iterations: usize,
    pub interp: Interp,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            grid: 512,
            cutoff: None,
            tol: 1e-12,
            max_iterations: 20_000,
            interp: Interp::Linear,
        }
    }
}

/// One materialized branch evaluation at one node.
#[derive(Debug, Clone, Copy)]
struct Entry {
    w: f64,
    r: f64,
    y: f64,
}

/// Per-node branch data for the grid route, independent of (beta, Z).
#[derive(Debug, Clone)]
pub struct Assembly {
    pub grid: Grid,
    pub cutoff: usize,
    pub interp: Interp,
    entries: Vec<Entry>,
}

pub fn assemble(
    sys: &SuspensionSystem,
    v: &Potential,
    grid: Grid,
    interp: Interp,
    cutoff: usize,
) -> Result<Assembly> {
    let cutoff = match sys.branch_count() {
        BranchCount::Finite(len) => len,
        BranchCount::Countable => cutoff,
    };
    if cutoff == 0 || cutoff > ASSEMBLY_BRANCH_LIMIT {
        return Err(Error::InvalidModel(format!(
            "grid route holds at most {ASSEMBLY_BRANCH_LIMIT} branches, asked for {cutoff}; \
             branch-constant models take the scalar route instead"
        )));
    }
    let entries: Vec<Entry> = (0..grid.n)
        .into_par_iter()
        .map(|i| -> Result<Vec<Entry>> {
            let x = grid.node(i);
            let mut row = Vec::with_capacity(cutoff);
            for k in 0..cutoff {
                let b = sys.branch(k)?;
                let y = b.apply(x);
                let w = v.flight_integral(sys, &b, y).value;
                let r = b.roof_at(y);
                if !(w.is_finite() && r.is_finite() && r > 0.0) {
                    return Err(Error::InvalidModel(format!(
                        "branch {k} yields non-finite weight or roof at x = {x}"
                    )));
                }
                row.push(Entry { w, r, y });
            }
            Ok(row)
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    Ok(Assembly { grid, cutoff, interp, entries })
}

impl Assembly {
    /// Branch weights collapsed at one (beta, Z); the power iteration then
    /// runs without transcendental calls.
    pub(crate) fn coefficients(&self, beta: f64, z: f64) -> Vec<f64> {
        self.entries.iter().map(|e| (beta * e.w - z * e.r).exp()).collect()
    }

    fn apply_with(&self, coeff: &[f64], phi: &[f64]) -> Vec<f64> {
        let nb = self.cutoff;
        (0..self.grid.n)
            .into_par_iter()
            .map(|i| {
                let mut acc = 0.0;
                for (e, c) in self.entries[i * nb..(i + 1) * nb]
                    .iter()
                    .zip(&coeff[i * nb..(i + 1) * nb])
                {
                    acc += c * eval_values(&self.grid, self.interp, phi, e.y);
                }
                acc
            })
            .collect()
    }

    /// Transpose action on node masses; sequential so the reduction order
    /// is fixed regardless of thread count.
    fn apply_transpose_with(&self, coeff: &[f64], nu: &[f64]) -> Vec<f64> {
        let nb = self.cutoff;
        let mut out = vec![0.0; self.grid.n];
        for i in 0..self.grid.n {
            for (e, c) in self.entries[i * nb..(i + 1) * nb]
                .iter()
                .zip(&coeff[i * nb..(i + 1) * nb])
            {
                let m = nu[i] * c;
                let (idx, w) = stencil(&self.grid, self.interp, e.y);
                for q in 0..4 {
                    out[idx[q]] += m * w[q];
                }
            }
        }
        out
    }

    /// Transpose action of a single branch slice, for mass chains that
    /// refine a dual vector cylinder by cylinder.
    pub(crate) fn branch_transpose_with(&self, coeff: &[f64], k: usize, nu: &[f64]) -> Vec<f64> {
        let nb = self.cutoff;
        let mut out = vec![0.0; self.grid.n];
        for i in 0..self.grid.n {
            let e = &self.entries[i * nb + k];
            let m = nu[i] * coeff[i * nb + k];
            let (idx, w) = stencil(&self.grid, self.interp, e.y);
            for q in 0..4 {
                out[idx[q]] += m * w[q];
            }
        }
        out
    }
}

/// One operator application with tail metadata.
#[derive(Debug, Clone)]
pub struct ApplyOutcome {
    pub result: GridFn,
    /// certified absolute bound on the discarded branch contributions
    pub tail_bound: f64,
    pub cutoff: usize,
}

/// Apply the operator once to `phi`. The cutoff defaults to the certified
/// tail ladder; finite branch sets are never truncated.
pub fn apply_operator(
    sys: &SuspensionSystem,
    v: &Potential,
    beta: f64,
    z: f64,
    phi: &GridFn,
    cutoff: Option<usize>,
) -> Result<ApplyOutcome> {
    let cutoff = resolve_grid_cutoff(sys, v, beta, z, cutoff)?;
    let asm = assemble(sys, v, phi.grid, phi.interp, cutoff)?;
    let tail = sys.tail_weight_bound(beta, z, asm.cutoff);
    if !tail.is_finite() {
        return Err(Error::TailDivergent {
            z,
            cutoff: asm.cutoff,
            min_admissible: sys.tail_abscissa(beta),
        });
    }
    let coeff = asm.coefficients(beta, z);
    let values = asm.apply_with(&coeff, &phi.values);
    Ok(ApplyOutcome {
        result: GridFn { grid: phi.grid, values, interp: phi.interp },
        tail_bound: tail * phi.sup_abs(),
        cutoff: asm.cutoff,
    })
}

/// Pick a grid-route cutoff whose certified tail is negligible against a
/// reference retained sum (branch sums at the base midpoint's preimages).
fn resolve_grid_cutoff(
    sys: &SuspensionSystem,
    v: &Potential,
    beta: f64,
    z: f64,
    requested: Option<usize>,
) -> Result<usize> {
    match sys.branch_count() {
        BranchCount::Finite(len) => Ok(len),
        BranchCount::Countable => {
            if let Some(n) = requested {
                return Ok(n);
            }
            let mut retained = Kahan::default();
            let mut n = 256usize;
            let mut done = 0usize;
            loop {
                for k in done..n {
                    let b = sys.branch(k)?;
                    let y = b.apply(sys.base.midpoint());
                    let w = v.flight_integral(sys, &b, y).value;
                    retained.add((beta * w - z * b.roof_at(y)).exp());
                }
                done = n;
                let tail = sys.tail_weight_bound(beta, z, n);
                if tail <= TAIL_FRACTION * retained.sum || n >= ASSEMBLY_BRANCH_LIMIT {
                    return Ok(n);
                }
                n = (n * 4).min(ASSEMBLY_BRANCH_LIMIT);
            }
        }
    }
}

/// Leading eigendata at (beta, Z), dispatching between the scalar and
/// grid routes.
pub fn leading_eigen(
    sys: &SuspensionSystem,
    v: &Potential,
    beta: f64,
    z: f64,
    opts: &SolverOptions,
) -> Result<SpectralSolution> {
    if scalar_route_applicable(sys, v) {
        scalar_eigen(sys, v, beta, z, opts)
    } else {
        grid_eigen(sys, v, beta, z, opts)
    }
}

fn scalar_eigen(
    sys: &SuspensionSystem,
    v: &Potential,
    beta: f64,
    z: f64,
    opts: &SolverOptions,
) -> Result<SpectralSolution> {
    let s = scalar_series(sys, v, beta, z, opts.cutoff)?;
    if !(s.sum > 0.0 && s.sum.is_finite()) {
        return Err(Error::NoConvergence { iterations: 0, residual: f64::INFINITY });
    }
    let lambda = s.sum;
    let grid = Grid::from_base(&sys.base, opts.grid)?;
    let store = s.cutoff.min(MASS_STORE_LIMIT);
    let mut nu = Vec::with_capacity(store);
    let mut stored = Kahan::default();
    for k in 0..store {
        let (w, r) = branch_data(sys, v, k)?;
        let m = (beta * w - z * r).exp() / lambda;
        stored.add(m);
        nu.push(m);
    }
    Ok(SpectralSolution {
        beta,
        z,
        lambda,
        h: GridFn::constant(grid, 1.0),
        nu,
        nu_discarded: (1.0 - stored.sum).max(0.0),
        // the truncation is the only defect of the scalar route
        residual: s.tail / s.sum,
        k_distortion: 0.0,
        iterations: 0,
        tail_fraction: s.tail / s.sum,
        route: Route::Scalar { cutoff: s.cutoff },
    })
}

fn sum_slice(v: &[f64]) -> f64 {
    let mut acc = Kahan::default();
    for &x in v {
        acc.add(x);
    }
    acc.sum
}

/// Power iteration until the eigenvalue estimate moves by at most
/// tol relatively for STABLE_STEPS consecutive steps.
fn power_iterate(
    mut vector: Vec<f64>,
    step: impl Fn(&[f64]) -> Vec<f64>,
    norm: impl Fn(&[f64]) -> f64,
    opts: &SolverOptions,
) -> Result<(f64, Vec<f64>, usize)> {
    let mut lambda = f64::NAN;
    let mut stable = 0usize;
    let mut change = f64::INFINITY;
    for it in 1..=opts.max_iterations {
        let mut next = step(&vector);
        let lam = sum_slice(&next) / sum_slice(&vector);
        let scale = norm(&next);
        if !(scale > 0.0 && scale.is_finite() && lam.is_finite()) {
            return Err(Error::NoConvergence { iterations: it, residual: f64::INFINITY });
        }
        next.iter_mut().for_each(|x| *x /= scale);
        // the eigenvalue estimate can lock in while the vector is still
        // rotating toward the eigenspace, so both must settle
        let drift = vector
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        change = ((lam - lambda).abs() / lam.abs().max(f64::MIN_POSITIVE)).max(drift);
        stable = if change <= opts.tol { stable + 1 } else { 0 };
        lambda = lam;
        vector = next;
        if stable >= STABLE_STEPS {
            return Ok((lambda, vector, it));
        }
    }
    Err(Error::NoConvergence { iterations: opts.max_iterations, residual: change })
}

fn grid_eigen(
    sys: &SuspensionSystem,
    v: &Potential,
    beta: f64,
    z: f64,
    opts: &SolverOptions,
) -> Result<SpectralSolution> {
    let grid = Grid::from_base(&sys.base, opts.grid)?;
    let cutoff = resolve_grid_cutoff(sys, v, beta, z, opts.cutoff)?;
    let asm = assemble(sys, v, grid, opts.interp, cutoff)?;
    let tail = sys.tail_weight_bound(beta, z, asm.cutoff);
    if !tail.is_finite() {
        return Err(Error::TailDivergent {
            z,
            cutoff: asm.cutoff,
            min_admissible: sys.tail_abscissa(beta),
        });
    }
    let coeff = asm.coefficients(beta, z);

    let sup_abs = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let (lambda, mut h, iters_h) = power_iterate(
        vec![1.0; grid.n],
        |phi| asm.apply_with(&coeff, phi),
        |v| sup_abs(v),
        opts,
    )?;
    let (lambda_dual, mut nu, iters_nu) = power_iterate(
        vec![1.0 / grid.n as f64; grid.n],
        |m| asm.apply_transpose_with(&coeff, m),
        sum_slice,
        opts,
    )?;

    let min_h = h.iter().cloned().fold(f64::INFINITY, f64::min);
    if min_h <= 0.0 {
        return Err(Error::NonpositiveEigenfunction { min: min_h });
    }

    let image = asm.apply_with(&coeff, &h);
    let residual_h = h
        .iter()
        .zip(&image)
        .map(|(hv, iv)| (iv - lambda * hv).abs())
        .fold(0.0, f64::max);
    let dual_image = asm.apply_transpose_with(&coeff, &nu);
    let residual_nu = nu
        .iter()
        .zip(&dual_image)
        .map(|(nv, iv)| (iv - lambda_dual * nv).abs())
        .fold(0.0, f64::max)
        / sup_abs(&nu);
    let residual = residual_h.max(residual_nu).max((lambda - lambda_dual).abs());

    // fix the two scale freedoms: nu a probability, then int h d(nu) = 1
    let nu_sum = sum_slice(&nu);
    nu.iter_mut().for_each(|x| *x /= nu_sum);
    let pairing: f64 = sum_slice(&h.iter().zip(&nu).map(|(hv, nv)| hv * nv).collect::<Vec<_>>());
    h.iter_mut().for_each(|x| *x /= pairing);

    // distortion probe: spread of log L^n(1) across nodes
    let mut k_distortion = 0.0f64;
    let mut psi = vec![1.0; grid.n];
    for _ in 1..=DISTORTION_DEPTH {
        psi = asm.apply_with(&coeff, &psi);
        let hi = psi.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lo = psi.iter().cloned().fold(f64::INFINITY, f64::min);
        if lo <= 0.0 {
            return Err(Error::NonpositiveEigenfunction { min: lo });
        }
        k_distortion = k_distortion.max((hi / lo).ln());
        let scale = 1.0 / hi;
        psi.iter_mut().for_each(|x| *x *= scale);
    }

    let h_fn = GridFn { grid, values: h, interp: opts.interp };
    let tail_fraction = tail * h_fn.sup() / (lambda * h_fn.inf());
    Ok(SpectralSolution {
        beta,
        z,
        lambda,
        h: h_fn,
        nu,
        nu_discarded: 0.0,
        residual,
        k_distortion,
        iterations: iters_h + iters_nu,
        tail_fraction,
        route: Route::Grid { cutoff: asm.cutoff },
    })
}

/// Two-sided bracket for the leading eigenvalue at (beta, Z) from one
/// operator application: by positivity, inf L1 <= lambda <= sup L1, and
/// the certified branch tail widens the upper end. The extrema are read
/// at the grid nodes, so on non-constant rows they are exact only up to
/// the node sampling of a smooth function; regime calls backed by these
/// brackets carry macroscopic margins.
pub fn eigen_bounds(
    sys: &SuspensionSystem,
    v: &Potential,
    beta: f64,
    z: f64,
    opts: &SolverOptions,
    cutoff: usize,
) -> Result<(f64, f64)> {
    let grid = Grid::from_base(&sys.base, opts.grid)?;
    let asm = assemble(sys, v, grid, opts.interp, cutoff)?;
    let coeff = asm.coefficients(beta, z);
    let rows = asm.apply_with(&coeff, &vec![1.0; grid.n]);
    let lo = rows.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = rows.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok((lo, hi + sys.tail_weight_bound(beta, z, asm.cutoff)))
}

/// Distortion certificate: per-depth spread of log L^n(1) across the
/// grid, which the induced weight's regularity must keep bounded in n.
#[derive(Debug, Clone)]
pub struct DistortionReport {
    pub per_n: Vec<(usize, f64)>,
    pub k_max: f64,
}

pub fn distortion_check(
    sys: &SuspensionSystem,
    v: &Potential,
    beta: f64,
    z: f64,
    n_check: usize,
    opts: &SolverOptions,
) -> Result<DistortionReport> {
    if scalar_route_applicable(sys, v) {
        // L^n(1) is exactly constant, branch by branch
        let per_n = (1..=n_check).map(|n| (n, 0.0)).collect();
        return Ok(DistortionReport { per_n, k_max: 0.0 });
    }
    let grid = Grid::from_base(&sys.base, opts.grid)?;
    let cutoff = resolve_grid_cutoff(sys, v, beta, z, opts.cutoff)?;
    let asm = assemble(sys, v, grid, opts.interp, cutoff)?;
    if !sys.tail_weight_bound(beta, z, asm.cutoff).is_finite() {
        return Err(Error::TailDivergent {
            z,
            cutoff: asm.cutoff,
            min_admissible: sys.tail_abscissa(beta),
        });
    }
    let coeff = asm.coefficients(beta, z);
    let mut psi = vec![1.0; grid.n];
    let mut per_n = Vec::with_capacity(n_check);
    let mut k_max = 0.0f64;
    for n in 1..=n_check {
        psi = asm.apply_with(&coeff, &psi);
        let hi = psi.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lo = psi.iter().cloned().fold(f64::INFINITY, f64::min);
        if !(lo > 0.0) {
            return Err(Error::NonpositiveEigenfunction { min: lo });
        }
        let k = (hi / lo).ln();
        per_n.push((n, k));
        k_max = k_max.max(k);
        let scale = 1.0 / hi;
        psi.iter_mut().for_each(|x| *x *= scale);
    }
    Ok(DistortionReport { per_n, k_max })
}

/// How a critical-abscissa estimate extrapolates its partial exponents.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ZcMethod {
    /// max over the tail window of the partial exponents
    RootTest,
    /// least-squares fit a_n = z + c ln(n)/n + d/n over the tail window,
    /// removing the bias of polynomial weight corrections
    LogCorrectedFit,
}

/// Critical abscissa of the branch series, estimated from return-time
/// classes: a_n = (1/n) log of the class-n weight sum.
#[derive(Debug, Clone)]
pub struct ZcEstimate {
    pub value: f64,
    pub n_max: usize,
    pub partial_exponents: Vec<(usize, f64)>,
    /// max minus min of the partials over the extrapolation window for
    /// the root test; max absolute fit residual for the corrected fit
    pub spread: f64,
    pub method: ZcMethod,
    /// finite branch sets converge for every Z, so Z_c = -inf
    pub unbounded_below: bool,
}

pub fn estimate_zc(
    sys: &SuspensionSystem,
    v: &Potential,
    beta: f64,
    n_max: usize,
    method: ZcMethod,
) -> Result<ZcEstimate> {
    assert!(n_max >= 3, "abscissa estimation needs n_max >= 3, got {n_max}");
    let reference = sys.base.midpoint();
    let branch_hi = match sys.branch_count() {
        BranchCount::Finite(len) => len,
        BranchCount::Countable => sys.max_index_with_roof_at_most(n_max as f64 + 1.0) + 4,
    };
    let mut class_sums = vec![Kahan::default(); n_max + 1];
    let mut populated = vec![false; n_max + 1];
    for k in 0..branch_hi {
        let b = sys.branch(k)?;
        let y = b.apply(reference);
        let class = b.roof_at(y).floor();
        if !(class >= 1.0 && class <= n_max as f64) {
            continue;
        }
        let n = class as usize;
        let w = v.flight_integral(sys, &b, y).value;
        class_sums[n].add((beta * w).exp());
        populated[n] = true;
    }
    let partial_exponents: Vec<(usize, f64)> = (1..=n_max)
        .filter(|&n| populated[n])
        .map(|n| (n, class_sums[n].sum.ln() / n as f64))
        .collect();
    if matches!(sys.branch_count(), BranchCount::Finite(_)) {
        // the series converges for every Z, there is no abscissa to find
        return Ok(ZcEstimate {
            value: f64::NEG_INFINITY,
            n_max,
            partial_exponents,
            spread: 0.0,
            method,
            unbounded_below: true,
        });
    }
    if !populated[n_max] {
        return Err(Error::ClassUnpopulated { class: n_max, cutoff: branch_hi });
    }
    let window_len = n_max.div_ceil(2);
    let window: Vec<(usize, f64)> = partial_exponents
        .iter()
        .filter(|(n, _)| *n + window_len > n_max)
        .cloned()
        .collect();
    let unbounded_below = matches!(sys.branch_count(), BranchCount::Finite(_));
    let root_max = window.iter().map(|(_, a)| *a).fold(f64::NEG_INFINITY, f64::max);
    let root_min = window.iter().map(|(_, a)| *a).fold(f64::INFINITY, f64::min);
    let (value, spread) = match method {
        ZcMethod::RootTest => (root_max, root_max - root_min),
        ZcMethod::LogCorrectedFit => {
            if window.len() < 3 {
                return Err(Error::ClassUnpopulated { class: n_max, cutoff: branch_hi });
            }
            fit_log_corrected(&window)
        }
    };
    Ok(ZcEstimate {
        value: if unbounded_below { f64::NEG_INFINITY } else { value },
        n_max,
        partial_exponents,
        spread,
        method,
        unbounded_below,
    })
}

/// Least squares for a_n = z + c ln(n)/n + d/n; returns (z, max |residual|).
fn fit_log_corrected(window: &[(usize, f64)]) -> (f64, f64) {
    let mut m = [[0.0f64; 3]; 3];
    let mut rhs = [0.0f64; 3];
    for &(n, a) in window {
        let nf = n as f64;
        let row = [1.0, nf.ln() / nf, 1.0 / nf];
        for i in 0..3 {
            for j in 0..3 {
                m[i][j] += row[i] * row[j];
            }
            rhs[i] += row[i] * a;
        }
    }
    let sol = solve3(m, rhs);
    let worst = window
        .iter()
        .map(|&(n, a)| {
            let nf = n as f64;
            (a - sol[0] - sol[1] * nf.ln() / nf - sol[2] / nf).abs()
        })
        .fold(0.0, f64::max);
    (sol[0], worst)
}

/// 3x3 Gaussian elimination with partial pivoting; the normal equations
/// here are tiny and well scaled.
fn solve3(mut m: [[f64; 3]; 3], mut b: [f64; 3]) -> [f64; 3] {
    for col in 0..3 {
        let pivot = (col..3)
            .max_by(|&i, &j| m[i][col].abs().partial_cmp(&m[j][col].abs()).unwrap())
            .unwrap();
        m.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..3 {
            let f = m[row][col] / m[col][col];
            for k in col..3 {
                m[row][k] -= f * m[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0f64; 3];
    for row in (0..3).rev() {
        let mut acc = b[row];
        for k in row + 1..3 {
            acc -= m[row][k] * x[k];
        }
        x[row] = acc / m[row][row];
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BranchSpec, GeometricFamily, Roof, SuspensionSystem};

    fn doubling() -> SuspensionSystem {
        crate::model::tests::doubling()
    }

    fn golden() -> SuspensionSystem {
        SuspensionSystem::finite(
            BaseInterval::new(0.0, 1.0).unwrap(),
            vec![
                BranchSpec::increasing((0.0, 0.5), Roof::Constant(1.0)),
                BranchSpec::increasing((0.5, 1.0), Roof::Constant(2.0)),
            ],
        )
        .unwrap()
    }

    fn geometric(theta: f64, log_coeff: f64, offset: f64) -> SuspensionSystem {
        SuspensionSystem::geometric(GeometricFamily { theta, log_coeff, offset }).unwrap()
    }

    #[test]
    fn linear_eval_interpolates() {
        let grid = Grid::new(0.0, 1.0, 5).unwrap();
        let f = GridFn::from_values(grid, vec![0.0, 1.0, 4.0, 9.0, 16.0], Interp::Linear).unwrap();
        assert_eq!(f.eval(0.25), 1.0);
        assert_eq!(f.eval(0.375), 2.5);
        assert_eq!(f.eval(0.0), 0.0);
        assert_eq!(f.eval(1.0), 16.0);
    }

    #[test]
    fn cubic_reproduces_linear_data() {
        let grid = Grid::new(-1.0, 3.0, 9).unwrap();
        let f = GridFn::sample(grid, Interp::Cubic, |x| 3.0 * x - 0.7);
        for k in 0..=40 {
            let x = -1.0 + 4.0 * k as f64 / 40.0;
            assert!((f.eval(x) - (3.0 * x - 0.7)).abs() < 1e-13, "x = {x}");
        }
    }

    #[test]
    fn cubic_beats_linear_on_smooth_data() {
        let grid = Grid::new(0.0, 1.0, 17);
        let grid = grid.unwrap();
        let lin = GridFn::sample(grid, Interp::Linear, f64::exp);
        let cub = GridFn::sample(grid, Interp::Cubic, f64::exp);
        let mut err_lin = 0.0f64;
        let mut err_cub = 0.0f64;
        for k in 0..200 {
            let x = (k as f64 + 0.5) / 200.0;
            err_lin = err_lin.max((lin.eval(x) - x.exp()).abs());
            err_cub = err_cub.max((cub.eval(x) - x.exp()).abs());
        }
        assert!(err_cub < err_lin / 10.0, "cubic {err_cub} vs linear {err_lin}");
    }

    #[test]
    fn apply_doubling_is_constant() {
        let sys = doubling();
        let v = Potential::zero();
        let grid = Grid::from_base(&sys.base, 64).unwrap();
        let one = GridFn::constant(grid, 1.0);
        let out = apply_operator(&sys, &v, 1.0, 0.3, &one, None).unwrap();
        let expect = 2.0 * (-0.3f64).exp();
        for &val in &out.result.values {
            assert!((val - expect).abs() < 1e-14);
        }
        assert_eq!(out.tail_bound, 0.0);
        assert_eq!(out.cutoff, 2);
    }

    #[test]
    fn apply_zero_function_is_zero() {
        let sys = doubling();
        let v = Potential::zero();
        let grid = Grid::from_base(&sys.base, 32).unwrap();
        let zero = GridFn::constant(grid, 0.0);
        let out = apply_operator(&sys, &v, 1.0, -2.0, &zero, None).unwrap();
        assert!(out.result.values.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn apply_geometric_matches_series_oracle() {
        // weights w_i = -theta i, roof i: L1 = sum q^i = q/(1-q)
        let sys = geometric(0.3, 0.0, 0.0);
        let v = Potential::branch_weights();
        let grid = Grid::from_base(&sys.base, 64).unwrap();
        let one = GridFn::constant(grid, 1.0);
        let z = 0.4;
        let out = apply_operator(&sys, &v, 1.0, z, &one, None).unwrap();
        let q = (-(0.3 + z)).exp();
        let oracle = q / (1.0 - q);
        for &val in &out.result.values {
            assert!((val - oracle).abs() < 1e-12, "{val} vs {oracle}");
        }
        assert!(out.tail_bound <= 1e-12 * oracle * 1.01);
    }

    #[test]
    fn apply_below_abscissa_diverges() {
        let sys = geometric(0.3, 0.0, 0.0);
        let v = Potential::branch_weights();
        let grid = Grid::from_base(&sys.base, 16).unwrap();
        let one = GridFn::constant(grid, 1.0);
        match apply_operator(&sys, &v, 1.0, -0.4, &one, Some(100)) {
            Err(Error::TailDivergent { min_admissible, .. }) => {
                assert!((min_admissible + 0.3).abs() < 1e-15);
            }
            other => panic!("expected divergent tail, got {other:?}"),
        }
    }

    #[test]
    fn scalar_eigen_doubling_unit_eigenvalue() {
        let sys = doubling();
        let sol =
            leading_eigen(&sys, &Potential::zero(), 0.0, 2.0f64.ln(), &SolverOptions::default())
                .unwrap();
        assert!(sol.is_scalar());
        assert!((sol.lambda - 1.0).abs() < 1e-15);
        assert_eq!(sol.nu, vec![0.5, 0.5]);
        assert_eq!(sol.k_distortion, 0.0);
        assert_eq!(sol.h.values[17], 1.0);
    }

    #[test]
    fn scalar_eigen_golden_root() {
        // e^-z + e^-2z = 1 at z = log of the golden ratio
        let z = ((1.0 + 5.0f64.sqrt()) / 2.0).ln();
        let sys = golden();
        let sol = leading_eigen(&sys, &Potential::zero(), 1.0, z, &SolverOptions::default())
            .unwrap();
        assert!((sol.lambda - 1.0).abs() < 1e-14);
        let roof_mean = sol.mean_roof(&sys, &Potential::zero()).unwrap();
        let x = (-z).exp();
        assert!((roof_mean.value - (x + 2.0 * x * x)).abs() < 1e-14);
        assert_eq!(roof_mean.tail, 0.0);
    }

    #[test]
    fn lambda_strictly_decreasing_in_z() {
        let sys = golden();
        let v = Potential::zero();
        let opts = SolverOptions::default();
        let mut prev = f64::INFINITY;
        for k in 0..8 {
            let z = -0.5 + 0.3 * k as f64;
            let lam = leading_eigen(&sys, &v, 1.0, z, &opts).unwrap().lambda;
            assert!(lam < prev);
            prev = lam;
        }
    }

    #[test]
    fn grid_route_agrees_with_closed_form_when_weight_vanishes() {
        // LinearX(0) forces the grid route while keeping W = 0
        let sys = doubling();
        let v = Potential::linear_x(0.0);
        assert!(!scalar_route_applicable(&sys, &v));
        let z = 0.4;
        let sol = leading_eigen(&sys, &v, 1.0, z, &SolverOptions::default()).unwrap();
        let expect = 2.0 * (-z as f64).exp();
        assert!((sol.lambda - expect).abs() < 1e-10, "{} vs {expect}", sol.lambda);
        assert!(sol.residual < 1e-9);
        assert!(sol.h.sup() / sol.h.inf() - 1.0 < 1e-9);
        let nu_sum: f64 = sol.nu.iter().sum();
        assert!((nu_sum - 1.0).abs() < 1e-12);
        assert!(sol.nu.iter().all(|&m| m >= 0.0));
    }

    #[test]
    fn grid_route_eigen_derivative_matches_mean_roof() {
        // roof is 1 everywhere, so dlambda/dz = -lambda exactly
        let sys = doubling();
        let v = Potential::linear_x(1.0);
        let opts = SolverOptions::default();
        let z = 0.7;
        let sol = leading_eigen(&sys, &v, 1.0, z, &opts).unwrap();
        assert!(sol.residual < 1e-10);
        let delta = 1e-4;
        let up = leading_eigen(&sys, &v, 1.0, z + delta, &opts).unwrap().lambda;
        let dn = leading_eigen(&sys, &v, 1.0, z - delta, &opts).unwrap().lambda;
        let diff = (up - dn) / (2.0 * delta);
        let mean_r = sol.mean_roof(&sys, &v).unwrap().value;
        assert!((mean_r - 1.0).abs() < 1e-12);
        assert!(
            (diff + sol.lambda * mean_r).abs() < 1e-6 * sol.lambda,
            "d lambda {diff} vs {}",
            -sol.lambda * mean_r
        );
    }

    #[test]
    fn grid_refinement_is_stable() {
        let sys = doubling();
        let v = Potential::linear_x(1.0);
        let coarse = leading_eigen(
            &sys,
            &v,
            1.0,
            0.7,
            &SolverOptions { grid: 512, ..SolverOptions::default() },
        )
        .unwrap();
        let fine = leading_eigen(
            &sys,
            &v,
            1.0,
            0.7,
            &SolverOptions { grid: 1024, ..SolverOptions::default() },
        )
        .unwrap();
        assert!((coarse.lambda - fine.lambda).abs() < 1e-6);
    }

    #[test]
    fn iteration_budget_is_enforced() {
        let sys = doubling();
        let v = Potential::linear_x(1.0);
        let opts = SolverOptions { max_iterations: 3, ..SolverOptions::default() };
        assert!(matches!(
            leading_eigen(&sys, &v, 1.0, 0.7, &opts),
            Err(Error::NoConvergence { iterations: 3, .. })
        ));
    }

    #[test]
    fn distortion_vanishes_on_branch_constant_models() {
        let sys = golden();
        let rep =
            distortion_check(&sys, &Potential::zero(), 1.0, 0.5, 8, &SolverOptions::default())
                .unwrap();
        assert_eq!(rep.k_max, 0.0);
        assert_eq!(rep.per_n.len(), 8);
    }

    #[test]
    fn distortion_matches_affine_weight_closed_form() {
        // W(x) = x on doubling: the n-step weight of an inverse orbit is
        // (1 - 2^-n) x + const, so K(n) = (1 - 2^-n) (beta = 1, span 1)
        let sys = doubling();
        let v = Potential::linear_x(1.0);
        let rep = distortion_check(&sys, &v, 1.0, 0.7, 10, &SolverOptions::default()).unwrap();
        for &(n, k) in &rep.per_n {
            let expect = 1.0 - 0.5f64.powi(n as i32);
            assert!((k - expect).abs() < 1e-3, "n = {n}: {k} vs {expect}");
        }
        // increments shrink geometrically after burn-in
        let mut prev_gap = f64::INFINITY;
        for pair in rep.per_n.windows(2) {
            let gap = pair[1].1 - pair[0].1;
            assert!(gap <= prev_gap + 1e-12);
            prev_gap = gap;
        }
    }

    #[test]
    fn zc_finite_system_is_unbounded_below() {
        let est = estimate_zc(&golden(), &Potential::zero(), 1.0, 4, ZcMethod::RootTest).unwrap();
        assert!(est.unbounded_below);
        assert!(est.value == f64::NEG_INFINITY);
        assert!(!est.partial_exponents.is_empty());
    }

    #[test]
    fn zc_pure_geometric_is_exact() {
        let sys = geometric(0.3, 0.0, 0.0);
        let est =
            estimate_zc(&sys, &Potential::branch_weights(), 1.0, 40, ZcMethod::RootTest).unwrap();
        assert!((est.value + 0.3).abs() < 1e-12);
        assert!(est.spread < 1e-12);
        assert_eq!(est.partial_exponents.len(), 40);
    }

    #[test]
    fn zc_log_correction_is_invisible_asymptotically() {
        // w_i = -0.3 i - 2 ln i: the polynomial factor biases small-n
        // partials but decays; at large n_max the root test recovers -0.3
        let sys = geometric(0.3, 2.0, 0.0);
        let v = Potential::branch_weights();
        let est = estimate_zc(&sys, &v, 1.0, 1600, ZcMethod::RootTest).unwrap();
        assert!((est.value + 0.3).abs() < 0.01, "value {}", est.value);
        // while the corrected fit removes the bias already at n_max = 40
        let fit = estimate_zc(&sys, &v, 1.0, 40, ZcMethod::LogCorrectedFit).unwrap();
        assert!((fit.value + 0.3).abs() < 1e-6, "fit {}", fit.value);
        assert!(fit.spread < 1e-9);
    }

    #[test]
    fn zc_scales_with_beta() {
        let sys = geometric(0.3, 0.0, 0.0);
        let est =
            estimate_zc(&sys, &Potential::branch_weights(), 2.5, 30, ZcMethod::RootTest).unwrap();
        assert!((est.value + 0.75).abs() < 1e-12);
    }

    #[test]
    fn zc_unpopulated_class_is_reported() {
        use crate::model::LorenzFamily;
        let sys = SuspensionSystem::lorenz(LorenzFamily {
            ratio: 0.5,
            roof_base: 10.0,
            roof_step: 1.0,
            v_sigma: -0.3,
            w_offset: 0.0,
        })
        .unwrap();
        assert!(matches!(
            estimate_zc(&sys, &Potential::branch_weights(), 1.0, 5, ZcMethod::RootTest),
            Err(Error::ClassUnpopulated { class: 5, .. })
        ));
    }

    #[test]
    fn scalar_series_tail_meets_target() {
        let sys = geometric(0.3, 0.0, 0.0);
        let s = scalar_series(&sys, &Potential::branch_weights(), 1.0, 0.4, None).unwrap();
        assert!(s.tail <= TAIL_FRACTION * s.sum);
        let q = (-0.7f64).exp();
        assert!((s.sum - q / (1.0 - q)).abs() < 1e-14);
        assert!((s.roof_sum - q / ((1.0 - q) * (1.0 - q))).abs() < 1e-13);
    }
}

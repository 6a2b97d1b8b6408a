//! Thermodynamics of the suspension semiflow: the pressure P(beta) as the
//! root of lambda_Z = 1, equilibrium measures on cylinders with their
//! Gibbs certificates, entropy and the lift to the flow, measures of
//! maximal entropy, periodic-orbit lower bounds, and the phase structure
//! along beta.
//!
//! The phase dichotomy is decided at the floor Z_floor = max(Z_c,
//! beta V(sigma)), below which the branch series cannot converge. A
//! certified lower bound of lambda at the floor above 1 forces a root
//! beyond it (regular phase); a certified upper bound below 1 rules one
//! out, and the pressure sticks to the floor (singular-dominated phase).
//! Between the two certificates the regime is reported undetermined
//! rather than guessed.

use rayon::prelude::*;

use crate::cylinder::{self, Cylinder};
use crate::error::{Error, Result};
use crate::model::{BranchCount, SuspensionSystem};
use crate::operator::{
    assemble, branch_data, eigen_bounds, leading_eigen, scalar_route_applicable, Kahan,
    MeanValue, SolverOptions, SpectralSolution, ASSEMBLY_BRANCH_LIMIT, TAIL_LADDER_LIMIT,
};
use crate::potential::{integrate_potential, Potential, PotentialKind};

/// Width at which the beta_c bisection stops.
const BETA_C_WIDTH: f64 = 1e-4;
/// Root-finder iteration ceiling.
const ROOT_BUDGET: usize = 200;
/// Ladder size past which a regular tag stops sharpening its margin.
const MARGIN_REFINE_LIMIT: usize = 65_536;
/// Word budget for periodic sweeps.
const SWEEP_BUDGET: usize = 200_000;
/// Cylinder budget for measure construction.
const MEASURE_BUDGET: usize = 2_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    Regular,
    SingularDominated,
}

impl Regime {
    pub fn tag(&self) -> &'static str {
        match self {
            Regime::Regular => "regular",
            Regime::SingularDominated => "singular-dominated",
        }
    }
}

/// Pressure at one beta. In the regular phase `z_star` is the root of
/// lambda_Z = 1 and `spectral` holds the eigendata there; in the
/// singular-dominated phase `z_star` is the floor itself and `spectral`
/// holds the (sub-unit) eigendata at the floor. `lambda_margin` is the
/// certified distance of lambda at the floor from 1, the confidence of
/// the regime tag; it is infinite when no floor constrains the system.
#[derive(Debug, Clone)]
pub struct PressureSolution {
    pub beta: f64,
    pub z_star: f64,
    pub regime: Regime,
    pub lambda: f64,
    pub lambda_margin: f64,
    pub spectral: SpectralSolution,
}

/// Flow value of the potential at the neutral singularity, when the
/// model pins one down: an explicitly declared value, a constant
/// potential's constant, or the asymptotic per-time weight of a
/// countable branch family.
fn singular_flow_value(sys: &SuspensionSystem, v: &Potential) -> Option<f64> {
    if let Some(val) = v.singular_value {
        return Some(val);
    }
    match v.kind {
        PotentialKind::Zero => Some(0.0),
        PotentialKind::Constant(c) => Some(c),
        PotentialKind::BranchWeights if sys.is_countable() => Some(sys.tail_abscissa(1.0)),
        _ => None,
    }
}

/// Largest Z the pressure can never go below: the series abscissa and
/// beta times the singular flow value. Finite branch systems have no
/// singularity and no convergence constraint, so their floor is -inf.
fn pressure_floor(sys: &SuspensionSystem, v: &Potential, beta: f64) -> f64 {
    if !sys.is_countable() {
        return f64::NEG_INFINITY;
    }
    let mut floor = sys.tail_abscissa(beta);
    if let Some(val) = singular_flow_value(sys, v) {
        floor = floor.max(beta * val);
    }
    floor
}

enum Classification {
    Regular { lambda_low: f64 },
    Singular { gap: f64 },
}

/// Decide the phase at the floor by bracketing lambda there with
/// certified partial sums and tail bounds.
fn classify_at(
    sys: &SuspensionSystem,
    v: &Potential,
    beta: f64,
    z: f64,
    opts: &SolverOptions,
) -> Result<Classification> {
    if scalar_route_applicable(sys, v) {
        return classify_scalar(sys, v, beta, z);
    }
    let mut cutoff = 256usize;
    loop {
        let (lo, hi) = eigen_bounds(sys, v, beta, z, opts, cutoff)?;
        if lo > 1.0 {
            return Ok(Classification::Regular { lambda_low: lo });
        }
        if hi < 1.0 {
            return Ok(Classification::Singular { gap: 1.0 - hi });
        }
        if cutoff >= ASSEMBLY_BRANCH_LIMIT {
            let margin = if hi.is_finite() { (1.0 - lo).min(hi - 1.0) } else { 1.0 - lo };
            return Err(Error::RegimeUndetermined { beta, margin });
        }
        cutoff = (cutoff * 4).min(ASSEMBLY_BRANCH_LIMIT);
    }
}

fn classify_scalar(
    sys: &SuspensionSystem,
    v: &Potential,
    beta: f64,
    z: f64,
) -> Result<Classification> {
    let mut sum = Kahan::default();
    let mut done = 0usize;
    let mut n = 1024usize;
    loop {
        for k in done..n {
            let (w, r) = branch_data(sys, v, k)?;
            sum.add((beta * w - z * r).exp());
        }
        done = n;
        let tail = sys.tail_weight_bound(beta, z, n);
        if sum.sum > 1.0 {
            // already certified regular; ladder on only to sharpen the
            // reported margin while that stays cheap
            if sum.sum > 10.0 || n >= MARGIN_REFINE_LIMIT || tail <= 1e-6 * sum.sum {
                return Ok(Classification::Regular { lambda_low: sum.sum });
            }
        } else if tail.is_finite() && sum.sum + tail < 1.0 {
            return Ok(Classification::Singular { gap: 1.0 - (sum.sum + tail) });
        }
        if n >= TAIL_LADDER_LIMIT {
            let margin = if tail.is_finite() {
                (1.0 - sum.sum).min(sum.sum + tail - 1.0)
            } else {
                1.0 - sum.sum
            };
            return Err(Error::RegimeUndetermined { beta, margin });
        }
        n = (n * 4).min(TAIL_LADDER_LIMIT);
    }
}

/// Solve for the pressure at one beta: classify the phase at the floor,
/// then in the regular phase bracket and root-find lambda_Z = 1 using
/// strict monotonicity of lambda in Z. `tol` bounds |lambda(Z*) - 1|.
pub fn solve_pressure(
    sys: &SuspensionSystem,
    v: &Potential,
    beta: f64,
    tol: f64,
    opts: &SolverOptions,
) -> Result<PressureSolution> {
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(Error::InvalidModel(format!("beta must be finite and >= 0, got {beta}")));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidModel(format!("tolerance must be positive, got {tol}")));
    }
    let floor = pressure_floor(sys, v, beta);
    let (margin, floor_lambda) = if floor.is_finite() {
        match classify_at(sys, v, beta, floor, opts)? {
            Classification::Singular { gap, .. } => {
                let spectral = leading_eigen(sys, v, beta, floor, opts)?;
                return Ok(PressureSolution {
                    beta,
                    z_star: floor,
                    regime: Regime::SingularDominated,
                    lambda: spectral.lambda,
                    lambda_margin: gap,
                    spectral,
                });
            }
            Classification::Regular { lambda_low } => (lambda_low - 1.0, lambda_low),
        }
    } else {
        (f64::INFINITY, f64::INFINITY)
    };

    // bracket the root: lambda > 1 at `lo` (certified), < 1 at `hi`
    let eigen = |z: f64| leading_eigen(sys, v, beta, z, opts);
    let (mut lo, mut g_lo, mut hi, at_hi) = if floor.is_finite() {
        let mut hi = floor + 1.0;
        let mut step = 1.0;
        loop {
            let sol = eigen(hi)?;
            if sol.lambda < 1.0 {
                break (floor, Some(floor_lambda.ln()), hi, sol);
            }
            if sol.lambda == 1.0 {
                return Ok(regular_solution(beta, hi, margin, sol));
            }
            hi += step;
            step *= 2.0;
            if step > 1e9 {
                return Err(Error::NoConvergence {
                    iterations: ROOT_BUDGET,
                    residual: sol.lambda - 1.0,
                });
            }
        }
    } else {
        // no floor: walk down until lambda exceeds 1, up until below
        let mut z_up = 0.0f64;
        let mut z_dn = 0.0f64;
        let mut step = 1.0;
        let first = eigen(0.0)?;
        if (first.lambda - 1.0).abs() <= tol {
            return Ok(regular_solution(beta, 0.0, margin, first));
        }
        if first.lambda > 1.0 {
            let mut above = first.lambda;
            loop {
                z_up += step;
                step *= 2.0;
                let sol = eigen(z_up)?;
                if sol.lambda < 1.0 {
                    break (z_up - step / 2.0, Some(above.ln()), z_up, sol);
                }
                above = sol.lambda;
                if step > 1e9 {
                    return Err(Error::NoConvergence {
                        iterations: ROOT_BUDGET,
                        residual: sol.lambda - 1.0,
                    });
                }
            }
        } else {
            let mut below = first;
            loop {
                z_dn -= step;
                step *= 2.0;
                let sol = eigen(z_dn)?;
                if sol.lambda > 1.0 {
                    break (z_dn, Some(sol.lambda.ln()), z_dn + step / 2.0, below);
                }
                below = sol;
                if step > 1e9 {
                    return Err(Error::NoConvergence {
                        iterations: ROOT_BUDGET,
                        residual: 1.0 - below.lambda,
                    });
                }
            }
        }
    };

    // hybrid secant/bisection on log lambda, bracket always maintained
    let mut g_hi = at_hi.lambda.ln();
    let mut best = at_hi;
    for it in 0..ROOT_BUDGET {
        let width = hi - lo;
        let mut z = match g_lo {
            Some(gl) if (g_hi - gl).abs() > 0.0 => hi - g_hi * width / (g_hi - gl),
            _ => 0.5 * (lo + hi),
        };
        if !(z > lo && z < hi) || it % 3 == 2 {
            // fall back to bisection every third step to force shrinkage
            z = 0.5 * (lo + hi);
        }
        let sol = eigen(z)?;
        let g = sol.lambda.ln();
        let defect = (sol.lambda - 1.0).abs();
        if defect <= tol {
            return Ok(regular_solution(beta, z, margin, sol));
        }
        if g > 0.0 {
            lo = z;
            g_lo = Some(g);
        } else {
            hi = z;
            g_hi = g;
            best = sol;
        }
        if hi - lo <= f64::EPSILON * hi.abs().max(lo.abs()).max(1.0) {
            return Err(Error::NoConvergence {
                iterations: it + 1,
                residual: (best.lambda - 1.0).abs(),
            });
        }
    }
    Err(Error::NoConvergence {
        iterations: ROOT_BUDGET,
        residual: (best.lambda - 1.0).abs(),
    })
}

fn regular_solution(
    beta: f64,
    z: f64,
    margin: f64,
    spectral: SpectralSolution,
) -> PressureSolution {
    PressureSolution {
        beta,
        z_star: z,
        regime: Regime::Regular,
        lambda: spectral.lambda,
        lambda_margin: margin,
        spectral,
    }
}

/// One cylinder with its equilibrium mass.
#[derive(Debug, Clone)]
pub struct MeasuredCylinder {
    pub cylinder: Cylinder,
    pub mass: f64,
}

/// The equilibrium measure of a spectral solution, materialized on the
/// depth-n cylinder partition: exact branch-mass products on the scalar
/// route, dual-vector chains through the assembled operator on the grid
/// route (so children recombine to their parent at solver-residual
/// level, which `additivity_residual` verifies directly). Masses are
/// normalized over the retained cylinders; `total_mass` records what
/// the branch truncation retained before normalization, and the
/// normalization slack is folded into the Gibbs constant. The Gibbs
/// certificate is
///   e^(-K) <= mu(C) lambda^n / e^(beta S_n W - Z r^n) <= e^(K)
/// with the Birkhoff sums read at cylinder representatives.
#[derive(Debug, Clone)]
pub struct GibbsMeasure {
    pub spectral: SpectralSolution,
    pub depth: usize,
    pub cylinders: Vec<MeasuredCylinder>,
    pub total_mass: f64,
    pub k_gibbs: f64,
    pub additivity_residual: f64,
    pub branch_cutoff: usize,
}

impl GibbsMeasure {
    /// Measure of the cylinder of `word`, summed from the stored leaves.
    /// Zero for words outside the retained branch range.
    pub fn mass_of(&self, word: &[usize]) -> f64 {
        let mut acc = Kahan::default();
        for mc in &self.cylinders {
            if mc.cylinder.word.starts_with(word) {
                acc.add(mc.mass);
            }
        }
        acc.sum
    }
}

/// Raw (unnormalized) masses of all depth-`depth` cylinders over the
/// first `cutoff` branches, in lexicographic word order.
fn depth_masses(
    sys: &SuspensionSystem,
    v: &Potential,
    spectral: &SpectralSolution,
    depth: usize,
    cutoff: usize,
) -> Result<Vec<MeasuredCylinder>> {
    let cylinders = cylinder::enumerate_cylinders(sys, v, depth, cutoff)?;
    if spectral.is_scalar() {
        let lambda = spectral.lambda;
        let mut branch_mass = Vec::with_capacity(cutoff);
        for k in 0..cutoff {
            let (w, r) = branch_data(sys, v, k)?;
            branch_mass.push((spectral.beta * w - spectral.z * r).exp() / lambda);
        }
        return Ok(cylinders
            .into_iter()
            .map(|cylinder| {
                let mass = cylinder.word.iter().map(|&k| branch_mass[k]).product();
                MeasuredCylinder { cylinder, mass }
            })
            .collect());
    }
    let spacing = spectral.h.grid.spacing();
    let min_width = cylinders.iter().map(|c| c.width()).fold(f64::INFINITY, f64::min);
    if min_width < spacing {
        // the narrowest retained cylinder shrinks by a fixed per-level
        // factor, so invert the observed width to get the last depth the
        // grid still resolves; always below the requested depth here
        let base_width = sys.base.width();
        let per_level = (min_width / base_width).powf(1.0 / depth as f64);
        let resolvable = (spacing / base_width).ln() / per_level.ln();
        return Err(Error::GridTooCoarse {
            depth,
            resolvable: resolvable.floor().max(0.0) as usize,
        });
    }
    // mu(C_{k1..kn}) = lambda^-n <(A_kn^T .. A_k1^T) nu, h> through the
    // same assembled operator nu and h are eigenvectors of, so child
    // masses recombine to their parent exactly up to the solver residual
    fn chain(
        asm: &crate::operator::Assembly,
        coeff: &[f64],
        h: &[f64],
        scale: f64,
        cutoff: usize,
        m: &[f64],
        remaining: usize,
        out: &mut Vec<f64>,
    ) {
        if remaining == 0 {
            let mut dot = Kahan::default();
            for (a, b) in m.iter().zip(h) {
                dot.add(a * b);
            }
            out.push(scale * dot.sum);
            return;
        }
        for k in 0..cutoff {
            let refined = asm.branch_transpose_with(coeff, k, m);
            chain(asm, coeff, h, scale, cutoff, &refined, remaining - 1, out);
        }
    }
    let asm = assemble(sys, v, spectral.h.grid, spectral.h.interp, cutoff)?;
    let coeff = asm.coefficients(spectral.beta, spectral.z);
    let scale = spectral.lambda.powi(-(depth as i32));
    // independent subtrees per leading letter keep the leaf order
    let seeds: Vec<Vec<f64>> = (0..cutoff)
        .map(|k| asm.branch_transpose_with(&coeff, k, &spectral.nu))
        .collect();
    let mut chunks: Vec<Vec<f64>> = Vec::new();
    seeds
        .into_par_iter()
        .map(|seed| {
            let mut out = Vec::new();
            chain(&asm, &coeff, &spectral.h.values, scale, cutoff, &seed, depth - 1, &mut out);
            out
        })
        .collect_into_vec(&mut chunks);
    Ok(cylinders
        .into_iter()
        .zip(chunks.into_iter().flatten())
        .map(|(cylinder, mass)| MeasuredCylinder { cylinder, mass })
        .collect())
}

fn measure_cutoff(sys: &SuspensionSystem, depth: usize) -> usize {
    match sys.branch_count() {
        BranchCount::Finite(len) => len,
        BranchCount::Countable => {
            let mut c = 2usize;
            while ((c + 1) as f64).powi(depth as i32) <= MEASURE_BUDGET as f64 {
                c += 1;
            }
            c
        }
    }
}

/// Materialize the equilibrium measure of `spectral` at cylinder depth
/// `depth`. Child-sum additivity against directly computed parents is
/// measured and reported, masses are then normalized.
pub fn gibbs_measure(
    sys: &SuspensionSystem,
    v: &Potential,
    spectral: &SpectralSolution,
    depth: usize,
) -> Result<GibbsMeasure> {
    if depth == 0 {
        return Err(Error::InvalidModel("cylinder depth must be at least 1".into()));
    }
    let mut cutoff = measure_cutoff(sys, depth);
    if !spectral.is_scalar() {
        // the mass chains run through the operator nu and h solve, so
        // they cannot see branches beyond its own truncation
        cutoff = cutoff.min(spectral.cutoff());
    }
    let mut leaves = depth_masses(sys, v, spectral, depth, cutoff)?;
    let additivity_residual = if depth >= 2 {
        let parents = depth_masses(sys, v, spectral, depth - 1, cutoff)?;
        parents
            .iter()
            .zip(leaves.chunks(cutoff))
            .map(|(parent, children)| {
                let mut acc = Kahan::default();
                for c in children {
                    acc.add(c.mass);
                }
                (parent.mass - acc.sum).abs()
            })
            .fold(0.0, f64::max)
    } else {
        0.0
    };
    let mut total = Kahan::default();
    for mc in &leaves {
        total.add(mc.mass);
    }
    let total_mass = total.sum;
    if !(total_mass > 0.0) {
        return Err(Error::NoConvergence { iterations: 0, residual: f64::INFINITY });
    }
    for mc in &mut leaves {
        mc.mass /= total_mass;
    }
    let interp_slack = if spectral.is_scalar() {
        0.0
    } else {
        let logs: Vec<f64> = spectral.h.values.iter().map(|h| h.ln()).collect();
        2.0 * logs.windows(2).map(|p| (p[1] - p[0]).abs()).fold(0.0, f64::max)
    };
    let k_gibbs = spectral.k_distortion + interp_slack + total_mass.ln().abs();
    Ok(GibbsMeasure {
        spectral: spectral.clone(),
        depth,
        cylinders: leaves,
        total_mass,
        k_gibbs,
        additivity_residual,
        branch_cutoff: cutoff,
    })
}

/// Entropy of the induced map under the equilibrium measure, via the
/// spectral identity h = log lambda - int (beta W - Z r) d mu evaluated
/// with cylinder sums, cross-checked against the Shannon sums
/// -(1/n) sum mu log mu accelerated in n.
#[derive(Debug, Clone, Copy)]
pub struct EntropyEstimate {
    pub value: f64,
    /// Shannon sum at the deepest level
    pub shannon: f64,
    /// Aitken-accelerated Shannon extrapolation
    pub shannon_accelerated: f64,
    pub agreement: f64,
}

pub fn entropy_induced(
    sys: &SuspensionSystem,
    v: &Potential,
    gibbs: &GibbsMeasure,
) -> Result<EntropyEstimate> {
    let s = &gibbs.spectral;
    let n = gibbs.depth as f64;
    let mut mean_w = Kahan::default();
    let mut mean_r = Kahan::default();
    for mc in &gibbs.cylinders {
        mean_w.add(mc.mass * mc.cylinder.birkhoff_w / n);
        mean_r.add(mc.mass * mc.cylinder.induced_roof / n);
    }
    let value = s.lambda.ln() - (s.beta * mean_w.sum - s.z * mean_r.sum);

    let mut shannon_seq = Vec::with_capacity(gibbs.depth);
    for d in 1..=gibbs.depth {
        let masses = if d == gibbs.depth {
            gibbs.cylinders.iter().map(|mc| mc.mass).collect::<Vec<_>>()
        } else {
            let raw = depth_masses(sys, v, s, d, gibbs.branch_cutoff)?;
            let mut tot = Kahan::default();
            for mc in &raw {
                tot.add(mc.mass);
            }
            raw.iter().map(|mc| mc.mass / tot.sum).collect()
        };
        let mut acc = Kahan::default();
        for m in masses {
            if m > 0.0 {
                acc.add(-m * m.ln());
            }
        }
        shannon_seq.push(acc.sum / d as f64);
    }
    let shannon = *shannon_seq.last().unwrap();
    let shannon_accelerated = aitken(&shannon_seq);
    Ok(EntropyEstimate {
        value,
        shannon,
        shannon_accelerated,
        agreement: (value - shannon_accelerated).abs(),
    })
}

/// Aitken delta-squared on the last three terms, falling back to the
/// last term when the sequence has already flattened.
fn aitken(seq: &[f64]) -> f64 {
    if seq.len() < 3 {
        return *seq.last().expect("nonempty sequence");
    }
    let [a, b, c] = [seq[seq.len() - 3], seq[seq.len() - 2], seq[seq.len() - 1]];
    let denom = c - 2.0 * b + a;
    if denom.abs() < 1e-12 * c.abs().max(1.0) {
        c
    } else {
        c - (c - b) * (c - b) / denom
    }
}

/// The equilibrium measure lifted to the semiflow by Abramov's formula:
/// densities normalize by the mean return time, entropy divides by it.
#[derive(Debug, Clone, Copy)]
pub struct FlowMeasure {
    pub mean_roof: MeanValue,
    pub mean_weight: MeanValue,
    pub entropy: EntropyEstimate,
    pub entropy_flow: f64,
    /// flow average of the potential, int V d mu-hat = mean_weight/mean_roof
    pub mean_potential_flow: f64,
    /// entropy_flow + beta int V d mu-hat; equals Z + log lambda / mean_roof
    pub free_energy: f64,
}

pub fn abramov_lift(
    sys: &SuspensionSystem,
    v: &Potential,
    gibbs: &GibbsMeasure,
) -> Result<FlowMeasure> {
    let s = &gibbs.spectral;
    let mean_roof = s.mean_roof(sys, v)?;
    if !(mean_roof.value.is_finite() && mean_roof.tail.is_finite()) {
        return Err(Error::TailDivergent {
            z: s.z,
            cutoff: s.cutoff(),
            min_admissible: sys.tail_abscissa(s.beta),
        });
    }
    let mean_weight = s.mean_weight(sys, v)?;
    let entropy = entropy_induced(sys, v, gibbs)?;
    let entropy_flow = entropy.value / mean_roof.value;
    let mean_potential_flow = mean_weight.value / mean_roof.value;
    Ok(FlowMeasure {
        mean_roof,
        mean_weight,
        entropy,
        entropy_flow,
        mean_potential_flow,
        free_energy: entropy_flow + s.beta * mean_potential_flow,
    })
}

/// Measure of maximal entropy: the beta = 0 equilibrium. Its pressure is
/// the topological entropy of the semiflow.
#[derive(Debug, Clone)]
pub struct MmeSolution {
    pub h_top: f64,
    pub pressure: PressureSolution,
    pub measure: GibbsMeasure,
    pub flow: FlowMeasure,
}

pub fn mme(
    sys: &SuspensionSystem,
    tol: f64,
    depth: usize,
    opts: &SolverOptions,
) -> Result<MmeSolution> {
    let v = Potential::zero();
    let pressure = solve_pressure(sys, &v, 0.0, tol, opts)?;
    // a point mass at the singularity has zero entropy, so it never
    // dominates at beta = 0; countable families put unbounded branch
    // counts above the floor and classify regular
    debug_assert_eq!(pressure.regime, Regime::Regular);
    let measure = gibbs_measure(sys, &v, &pressure.spectral, depth)?;
    let flow = abramov_lift(sys, &v, &measure)?;
    Ok(MmeSolution { h_top: pressure.z_star, pressure, measure, flow })
}

/// Where the maximal flow average of the potential is attained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaxSource {
    Singularity,
    Periodic,
}

/// The asymptote slope A(V): the largest flow average of V over invariant
/// measures, bracketed from below by the singular flow value and by
/// periodic-orbit averages up to a sweep depth. Both candidates are kept.
#[derive(Debug, Clone)]
pub struct MaximizingValue {
    pub value: f64,
    pub source: MaxSource,
    pub singularity: Option<f64>,
    pub best_word: Option<Vec<usize>>,
    pub best_periodic: Option<f64>,
}

pub fn maximizing_value_a(
    sys: &SuspensionSystem,
    v: &Potential,
    depth: usize,
) -> Result<MaximizingValue> {
    let width = match sys.branch_count() {
        BranchCount::Finite(len) => len,
        BranchCount::Countable => 24,
    };
    let mut best_word: Option<Vec<usize>> = None;
    let mut best_avg = f64::NEG_INFINITY;
    for n in 1..=depth.max(1) {
        if (width as f64).powi(n as i32) > SWEEP_BUDGET as f64 {
            break;
        }
        let mut word = vec![0usize; n];
        'words: loop {
            let x = cylinder::periodic_point(sys, &word)?;
            let wd = cylinder::word_data(sys, v, &word, x)?;
            let avg = wd.weight_sum / wd.roof_sum;
            if avg > best_avg {
                best_avg = avg;
                best_word = Some(word.clone());
            }
            let mut pos = n;
            loop {
                if pos == 0 {
                    break 'words;
                }
                pos -= 1;
                word[pos] += 1;
                if word[pos] < width {
                    break;
                }
                word[pos] = 0;
            }
        }
    }
    let singularity = singular_flow_value(sys, v);
    let (value, source) = match singularity {
        Some(s) if s >= best_avg => (s, MaxSource::Singularity),
        _ => (best_avg, MaxSource::Periodic),
    };
    Ok(MaximizingValue {
        value,
        source,
        singularity,
        best_word,
        best_periodic: if best_avg.is_finite() { Some(best_avg) } else { None },
    })
}

/// Certified lower bound for the pressure from the branch class with
/// integer return time n: the Bernoulli measure on the fixed points of
/// those branches, weighted p_i proportional to e^(A_i) which maximizes
/// the free energy among such measures, yields
///   P >= (-sum p log p + sum p A) / (sum p r) = logsumexp(A) / (sum p r).
#[derive(Debug, Clone)]
pub struct PeriodicBound {
    pub class: usize,
    pub bound: f64,
    pub entropy: f64,
    pub mean_roof: f64,
    pub members: usize,
}

pub fn periodic_lower_bound(
    sys: &SuspensionSystem,
    v: &Potential,
    beta: f64,
    n: usize,
) -> Result<PeriodicBound> {
    let scan = match sys.branch_count() {
        BranchCount::Finite(len) => len,
        BranchCount::Countable => sys.max_index_with_roof_at_most(n as f64 + 1.0) + 4,
    };
    let mut a_vals = Vec::new();
    let mut r_vals = Vec::new();
    for k in 0..scan {
        let x = cylinder::periodic_point(sys, &[k])?;
        let r = sys.roof_at(x)?;
        if r.floor() as usize != n {
            continue;
        }
        a_vals.push(beta * integrate_potential(sys, v, x)?.value);
        r_vals.push(r);
    }
    if a_vals.is_empty() {
        return Err(Error::ClassUnpopulated { class: n, cutoff: scan });
    }
    let m = a_vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let norm: f64 = a_vals.iter().map(|a| (a - m).exp()).sum();
    let lse = m + norm.ln();
    let mut mean_roof = 0.0;
    let mut entropy = 0.0;
    for (a, r) in a_vals.iter().zip(&r_vals) {
        let p = (a - m).exp() / norm;
        mean_roof += p * r;
        if p > 0.0 {
            entropy -= p * p.ln();
        }
    }
    Ok(PeriodicBound {
        class: n,
        bound: lse / mean_roof,
        entropy,
        mean_roof,
        members: a_vals.len(),
    })
}

/// Flow free energy of the i.i.d. branch measure with the given
/// probabilities, for branch-constant systems: a competitor whose free
/// energy can never beat the pressure.
pub fn bernoulli_free_energy(
    sys: &SuspensionSystem,
    v: &Potential,
    beta: f64,
    q: &[f64],
) -> Result<f64> {
    let len = match sys.branch_count() {
        BranchCount::Finite(len) => len,
        BranchCount::Countable => {
            return Err(Error::InvalidModel(
                "Bernoulli competitors need a finite branch set".into(),
            ))
        }
    };
    if q.len() != len {
        return Err(Error::InvalidModel(format!(
            "{} probabilities for {len} branches",
            q.len()
        )));
    }
    let total: f64 = q.iter().sum();
    if !(total > 0.0) || q.iter().any(|&p| p < 0.0 || !p.is_finite()) {
        return Err(Error::InvalidModel("probabilities must be nonnegative".into()));
    }
    let mut entropy = 0.0;
    let mut mean_w = 0.0;
    let mut mean_r = 0.0;
    for (k, &raw) in q.iter().enumerate() {
        let p = raw / total;
        if p == 0.0 {
            continue;
        }
        let (w, r) = branch_data(sys, v, k)?;
        entropy -= p * p.ln();
        mean_w += p * w;
        mean_r += p * r;
    }
    Ok((entropy + beta * mean_w) / mean_r)
}

/// Flow free energy of the invariant measure on one periodic orbit:
/// entropy zero, averages read along the orbit.
pub fn periodic_orbit_free_energy(
    sys: &SuspensionSystem,
    v: &Potential,
    beta: f64,
    word: &[usize],
) -> Result<f64> {
    let x = cylinder::periodic_point(sys, word)?;
    let wd = cylinder::word_data(sys, v, word, x)?;
    Ok(beta * wd.weight_sum / wd.roof_sum)
}

/// One row of a pressure sweep.
#[derive(Debug, Clone, Copy)]
pub struct CurvePoint {
    pub beta: f64,
    pub pressure: f64,
    pub zc: f64,
    pub regime: Regime,
    pub lambda_margin: f64,
    /// infinite in the singular-dominated phase, where the mean return
    /// time of the would-be equilibrium diverges
    pub mean_roof: f64,
    /// zero in the singular-dominated phase (the point mass at the
    /// singularity carries no entropy)
    pub entropy_flow: f64,
}

/// Pressure along an increasing beta grid, with the phase boundary
/// bisected when the regime switches and the structural invariants
/// checked on the way out.
#[derive(Debug, Clone)]
pub struct PressureCurve {
    pub points: Vec<CurvePoint>,
    /// bracketing interval for beta_c when the regime switches; inside
    /// it the regime stays undetermined by construction
    pub beta_c: Option<(f64, f64)>,
    pub asymptote_slope: f64,
    /// second divided differences of P >= -1e-8
    pub convexity_ok: bool,
    /// P >= beta A(V) everywhere; equality on the singular side
    pub asymptote_ok: bool,
    /// Z_c <= P everywhere
    pub ordering_ok: bool,
    /// the regime flips at most once, from regular to singular-dominated
    pub single_switch: bool,
}

pub fn pressure_curve(
    sys: &SuspensionSystem,
    v: &Potential,
    betas: &[f64],
    tol: f64,
    opts: &SolverOptions,
) -> Result<PressureCurve> {
    if betas.is_empty() {
        return Err(Error::InvalidModel("beta grid is empty".into()));
    }
    if betas[0] != 0.0 {
        return Err(Error::InvalidModel("beta grid must start at 0".into()));
    }
    if betas.windows(2).any(|p| !(p[1] > p[0]) ) || betas.iter().any(|b| !b.is_finite()) {
        return Err(Error::InvalidModel("beta grid must be finite and increasing".into()));
    }
    let points: Vec<CurvePoint> = betas
        .par_iter()
        .map(|&beta| -> Result<CurvePoint> {
            let sol = solve_pressure(sys, v, beta, tol, opts)?;
            let (mean_roof, entropy_flow) = match sol.regime {
                Regime::Regular => {
                    let r = sol.spectral.mean_roof(sys, v)?;
                    let w = sol.spectral.mean_weight(sys, v)?;
                    let h = sol.spectral.lambda.ln() - beta * w.value + sol.z_star * r.value;
                    (r.value, h / r.value)
                }
                Regime::SingularDominated => (f64::INFINITY, 0.0),
            };
            Ok(CurvePoint {
                beta,
                pressure: sol.z_star,
                zc: sys.tail_abscissa(beta),
                regime: sol.regime,
                lambda_margin: sol.lambda_margin,
                mean_roof,
                entropy_flow,
            })
        })
        .collect::<Result<_>>()?;

    let switches: Vec<usize> = points
        .windows(2)
        .enumerate()
        .filter(|(_, p)| p[0].regime != p[1].regime)
        .map(|(i, _)| i)
        .collect();
    let single_switch = switches.len() <= 1
        && switches.iter().all(|&i| {
            points[i].regime == Regime::Regular
                && points[i + 1].regime == Regime::SingularDominated
        });

    let beta_c = if let [i] = switches[..] {
        if points[i].regime == Regime::Regular {
            let (mut lo, mut hi) = (points[i].beta, points[i + 1].beta);
            while hi - lo > BETA_C_WIDTH {
                let mid = 0.5 * (lo + hi);
                let floor = pressure_floor(sys, v, mid);
                match classify_at(sys, v, mid, floor, opts) {
                    Ok(Classification::Regular { .. }) => lo = mid,
                    Ok(Classification::Singular { .. }) => hi = mid,
                    // inside the undecidable sliver; report the bracket
                    Err(Error::RegimeUndetermined { .. }) => break,
                    Err(e) => return Err(e),
                }
            }
            Some((lo, hi))
        } else {
            None
        }
    } else {
        None
    };

    let asymptote_slope = maximizing_value_a(sys, v, 6)?.value;
    let mut convexity_ok = true;
    for w in points.windows(3) {
        let left = (w[1].pressure - w[0].pressure) / (w[1].beta - w[0].beta);
        let right = (w[2].pressure - w[1].pressure) / (w[2].beta - w[1].beta);
        let second = 2.0 * (right - left) / (w[2].beta - w[0].beta);
        if second < -1e-8 {
            convexity_ok = false;
        }
    }
    let mut asymptote_ok = true;
    let mut ordering_ok = true;
    for p in &points {
        let scale = p.pressure.abs().max(1.0);
        if p.pressure < p.beta * asymptote_slope - 1e-9 * scale {
            asymptote_ok = false;
        }
        if p.regime == Regime::SingularDominated
            && (p.pressure - p.beta * asymptote_slope).abs() > 1e-6 * scale
        {
            asymptote_ok = false;
        }
        if p.zc > p.pressure + 1e-9 * scale {
            ordering_ok = false;
        }
    }
    Ok(PressureCurve {
        points,
        beta_c,
        asymptote_slope,
        convexity_ok,
        asymptote_ok,
        ordering_ok,
        single_switch,
    })
}

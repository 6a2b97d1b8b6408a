//! The correction that collapses the stable direction.
//!
//! Two points on the same stable fiber converge exponentially under the
//! flow, so the integral of their potential difference over all future
//! time converges geometrically. Subtracting that integral as a
//! coboundary replaces the potential's flight weight by one that depends
//! only on the base coordinate, which is what lets a one-dimensional
//! transfer operator stand in for the full skew product. The identity
//! checked here is
//!
//!   flight(y) = weight(base of y) + B(y) - B(F y)
//!
//! with flight the potential integral over one tower fiber at the true
//! stable coordinate, weight the same integral on the base fiber, and F
//! the return map.

use crate::error::{Error, Result};
use crate::model::SuspensionSystem;
use crate::potential::{Potential, PotentialKind};
use crate::quad;

/// Truncated future integral with its certificate.
#[derive(Debug, Clone, Copy)]
pub struct CoboundaryData {
    pub value: f64,
    /// truncation horizon in flight time
    pub horizon: f64,
    /// certified bound on the discarded tail:
    /// c_v * |s0|^alpha * e^(-alpha * lambda_s * T) / (alpha * lambda_s)
    pub tail_bound: f64,
    /// accumulated quadrature error over the integrated segments
    pub quad_error: f64,
}

fn tail_after(v: &Potential, rate: f64, s0: f64, t: f64) -> f64 {
    if s0 == 0.0 || v.c_v == 0.0 {
        return 0.0;
    }
    let a = v.alpha;
    v.c_v * s0.abs().powf(a) * (-a * rate * t).exp() / (a * rate)
}

/// Horizon that certifies a tail at most `tol`.
fn horizon_for(v: &Potential, rate: f64, s0: f64, tol: f64) -> f64 {
    if s0 == 0.0 || v.c_v == 0.0 {
        return 0.0;
    }
    let a = v.alpha;
    (v.c_v * s0.abs().powf(a) / (tol * a * rate)).ln().max(0.0) / (a * rate)
}

/// B(y) for y = (x, s0) on the section: the future integral of the
/// potential difference between the orbit of y and the orbit of its
/// base projection, truncated once the certified tail drops below
/// `tail_tol`.
///
/// Potentials whose stable dependence is the declared additive term
/// integrate in closed form without touching the orbit; a custom
/// potential walks the orbit segment by segment and can therefore hit a
/// point where the base map is undefined, which is reported as such.
pub fn coboundary_b(
    sys: &SuspensionSystem,
    v: &Potential,
    x: f64,
    s0: f64,
    tail_tol: f64,
) -> Result<CoboundaryData> {
    let rate = sys.stable_rate.ok_or(Error::SkewDisabled)?;
    let horizon = horizon_for(v, rate, s0, tail_tol);
    let tail_bound = tail_after(v, rate, s0, horizon);

    if !matches!(v.kind, PotentialKind::Custom(_)) {
        // difference along the fiber is s_coeff * s0 e^(-rate t) exactly
        let value = if s0 == 0.0 || v.s_coeff == 0.0 {
            0.0
        } else {
            v.s_coeff * s0 * (1.0 - (-rate * horizon).exp()) / rate
        };
        return Ok(CoboundaryData { value, horizon, tail_bound, quad_error: 0.0 });
    }

    let mut value = 0.0;
    let mut quad_error = 0.0;
    let mut elapsed = 0.0;
    let mut x_cur = x;
    while elapsed < horizon {
        let roof = sys.roof_at(x_cur)?;
        let seg = roof.min(horizon - elapsed);
        let base = elapsed;
        // x_cur stays inside one branch for the whole segment
        let branch = branch_of(sys, x_cur);
        let q = quad::integrate(
            |t| {
                let s_t = s0 * (-rate * (base + t)).exp();
                v.eval_on_branch(&branch, x_cur, t, s_t)
                    - v.eval_on_branch(&branch, x_cur, t, 0.0)
            },
            0.0,
            seg,
        );
        value += q.value;
        quad_error += q.error;
        elapsed += seg;
        if elapsed >= horizon {
            break;
        }
        let (_, gx) = sys.forward(x_cur)?;
        x_cur = gx;
    }
    Ok(CoboundaryData { value, horizon, tail_bound, quad_error })
}

/// Branch owning `x` for roof purposes; callers have already checked the
/// roof exists at `x`, so the cusp and the outside are unreachable.
fn branch_of(sys: &SuspensionSystem, x: f64) -> crate::model::Branch {
    use crate::model::Locate;
    let k = match sys.locate(x) {
        Locate::Interior(k) | Locate::Outer(k) => k,
        Locate::Boundary { right, .. } => right,
        Locate::Cusp | Locate::Outside => unreachable!("roof checked before branch lookup"),
    };
    sys.branch(k).expect("locate returned a live branch")
}

/// Outcome of sampling the coboundary identity.
#[derive(Debug, Clone)]
pub struct CoboundaryReport {
    pub max_residual: f64,
    pub max_tail_bound: f64,
    pub points_checked: usize,
}

/// Check flight(y) - weight(base) - B(y) + B(F y) at each sample point
/// (x, s). Residuals beyond quadrature and truncation error indicate a
/// broken weight or flow implementation.
pub fn verify_coboundary_identity(
    sys: &SuspensionSystem,
    v: &Potential,
    points: &[(f64, f64)],
    tail_tol: f64,
) -> Result<CoboundaryReport> {
    let rate = sys.stable_rate.ok_or(Error::SkewDisabled)?;
    let mut report = CoboundaryReport {
        max_residual: 0.0,
        max_tail_bound: 0.0,
        points_checked: 0,
    };
    for &(x, s0) in points {
        let k = sys.branch_at(x)?;
        let branch = sys.branch(k)?;
        let roof = branch.roof_at(x);
        let flight = v.integrate_flight_range(sys, &branch, x, 0.0, roof, s0);
        let weight = v.flight_integral(sys, &branch, x);
        let b_here = coboundary_b(sys, v, x, s0, tail_tol)?;
        let (_, gx) = sys.forward(x)?;
        let s_next = s0 * (-rate * roof).exp();
        let b_next = coboundary_b(sys, v, gx, s_next, tail_tol)?;
        let residual =
            (flight.value - weight.value - b_here.value + b_next.value).abs();
        report.max_residual = report.max_residual.max(residual);
        report.max_tail_bound = report.max_tail_bound.max(b_here.tail_bound + b_next.tail_bound);
        report.points_checked += 1;
    }
    Ok(report)
}

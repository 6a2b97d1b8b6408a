//! Potentials on the suspension space and their flight integrals.
//!
//! A potential is a bounded Holder function V(x, t, s) of base point,
//! flight time and stable coordinate. The quantity the operator theory
//! consumes is not V itself but its integral along one flight, branch by
//! branch; the declared families all admit closed forms for that
//! integral, and anything else goes through quadrature.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::model::{Branch, Locate, SuspensionSystem};
use crate::quad::{self, Quadrature};

#[derive(Clone)]
pub enum PotentialKind {
    Zero,
    /// V = v everywhere
    Constant(f64),
    /// the flight integral over branch k's tower is the branch's declared
    /// weight; pointwise V is the weight spread evenly over the flight
    BranchWeights,
    /// V(x, t, s) = coeff * x
    LinearX(f64),
    /// arbitrary V(x, t, s); only constructible in code
    Custom(Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>),
}

impl fmt::Debug for PotentialKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PotentialKind::Zero => write!(f, "Zero"),
            PotentialKind::Constant(v) => write!(f, "Constant({v})"),
            PotentialKind::BranchWeights => write!(f, "BranchWeights"),
            PotentialKind::LinearX(c) => write!(f, "LinearX({c})"),
            PotentialKind::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

/// A potential plus the analytic facts the estimators need about it:
/// Holder data in the stable direction and the value carried by the
/// modeled singularity, when there is one.
#[derive(Debug, Clone)]
pub struct Potential {
    pub kind: PotentialKind,
    /// additive stable term s_coeff * s, active only under a skew extension
    pub s_coeff: f64,
    /// |V(x,t,s) - V(x,t,s')| <= c_v * |s - s'|^alpha
    pub alpha: f64,
    pub c_v: f64,
    pub singular_value: Option<f64>,
}

impl Potential {
    pub fn zero() -> Self {
        Self {
            kind: PotentialKind::Zero,
            s_coeff: 0.0,
            alpha: 1.0,
            c_v: 0.0,
            singular_value: None,
        }
    }

    pub fn constant(v: f64) -> Self {
        Self {
            kind: PotentialKind::Constant(v),
            singular_value: Some(v),
            ..Self::zero()
        }
    }

    /// Potential whose per-branch flight integrals are the branch weights
    /// declared by the model.
    pub fn branch_weights() -> Self {
        Self { kind: PotentialKind::BranchWeights, ..Self::zero() }
    }

    pub fn linear_x(coeff: f64) -> Self {
        Self { kind: PotentialKind::LinearX(coeff), ..Self::zero() }
    }

    pub fn custom<F>(f: F, alpha: f64, c_v: f64) -> Self
    where
        F: Fn(f64, f64, f64) -> f64 + Send + Sync + 'static,
    {
        Self {
            kind: PotentialKind::Custom(Arc::new(f)),
            s_coeff: 0.0,
            alpha,
            c_v,
            singular_value: None,
        }
    }

    pub fn with_s_coeff(mut self, c: f64) -> Self {
        self.s_coeff = c;
        self.c_v += c.abs();
        self
    }

    pub fn with_singular_value(mut self, v: f64) -> Self {
        self.singular_value = Some(v);
        self
    }

    /// Pointwise value over a known branch. `x` is the base coordinate,
    /// `t` the flight time, `s` the stable coordinate.
    pub fn eval_on_branch(&self, branch: &Branch, x: f64, t: f64, s: f64) -> f64 {
        let body = match &self.kind {
            PotentialKind::Zero => 0.0,
            PotentialKind::Constant(v) => *v,
            PotentialKind::BranchWeights => branch.weight / branch.roof_at(x),
            PotentialKind::LinearX(c) => c * x,
            PotentialKind::Custom(f) => f(x, t, s),
        };
        body + self.s_coeff * s
    }

    /// Pointwise value with a branch lookup; shared endpoints resolve to
    /// the same branch the roof convention uses.
    pub fn eval(&self, sys: &SuspensionSystem, x: f64, t: f64, s: f64) -> Result<f64> {
        let k = match sys.locate(x) {
            Locate::Interior(k) | Locate::Outer(k) => k,
            Locate::Boundary { right, .. } => right,
            Locate::Cusp => return Err(Error::UndefinedPoint(x)),
            Locate::Outside => return Err(Error::OutsideBase(x)),
        };
        Ok(self.eval_on_branch(&sys.branch(k)?, x, t, s))
    }

    /// Integral of t -> V(x, t, s(t)) over [t0, t1] along one flight at
    /// fixed base point, with the stable coordinate decaying from `s0` at
    /// the branch floor. Closed-form families report zero error.
    pub fn integrate_flight_range(
        &self,
        sys: &SuspensionSystem,
        branch: &Branch,
        x: f64,
        t0: f64,
        t1: f64,
        s0: f64,
    ) -> Quadrature {
        let rate = sys.stable_rate.unwrap_or(0.0);
        // the stable term integrates in closed form regardless of the body
        let s_part = if self.s_coeff == 0.0 || s0 == 0.0 {
            0.0
        } else if rate > 0.0 {
            self.s_coeff * s0 * ((-rate * t0).exp() - (-rate * t1).exp()) / rate
        } else {
            self.s_coeff * s0 * (t1 - t0)
        };
        match &self.kind {
            PotentialKind::Zero => Quadrature { value: s_part, error: 0.0 },
            PotentialKind::Constant(v) => Quadrature { value: v * (t1 - t0) + s_part, error: 0.0 },
            PotentialKind::BranchWeights => Quadrature {
                value: branch.weight / branch.roof_at(x) * (t1 - t0) + s_part,
                error: 0.0,
            },
            PotentialKind::LinearX(c) => {
                Quadrature { value: c * x * (t1 - t0) + s_part, error: 0.0 }
            }
            PotentialKind::Custom(f) => {
                let q = quad::integrate(|t| f(x, t, s0 * (-rate * t).exp()), t0, t1);
                Quadrature { value: q.value + s_part, error: q.error }
            }
        }
    }

    /// Flight integral of the potential over one whole tower fiber: the
    /// induced weight this branch contributes at `x` in its image.
    pub fn flight_integral(&self, sys: &SuspensionSystem, branch: &Branch, x: f64) -> Quadrature {
        match &self.kind {
            // exact by declaration, whatever the roof does
            PotentialKind::BranchWeights => Quadrature { value: branch.weight, error: 0.0 },
            _ => self.integrate_flight_range(sys, branch, x, 0.0, branch.roof_at(x), 0.0),
        }
    }
}

/// Integral of the potential over the full flight above `x`, with the
/// declared error bound. This is the per-branch building block of the
/// induced weight.
pub fn integrate_potential(sys: &SuspensionSystem, v: &Potential, x: f64) -> Result<Quadrature> {
    let k = match sys.locate(x) {
        Locate::Interior(k) | Locate::Outer(k) => k,
        Locate::Boundary { right, .. } => right,
        Locate::Cusp => return Err(Error::UndefinedPoint(x)),
        Locate::Outside => return Err(Error::OutsideBase(x)),
    };
    let branch = sys.branch(k)?;
    Ok(v.flight_integral(sys, &branch, x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BaseInterval, BranchSpec, Roof};

    fn pi_roof_system() -> SuspensionSystem {
        SuspensionSystem::finite(
            BaseInterval::new(0.0, 1.0).unwrap(),
            vec![
                BranchSpec::increasing((0.0, 0.5), Roof::Constant(std::f64::consts::PI)),
                BranchSpec::increasing((0.5, 1.0), Roof::Constant(std::f64::consts::PI)),
            ],
        )
        .unwrap()
    }

    #[test]
    fn sine_flight_integral() {
        // integral of sin over [0, pi] is 2
        let sys = pi_roof_system();
        let v = Potential::custom(|_, t, _| t.sin(), 1.0, 1.0);
        let q = integrate_potential(&sys, &v, 0.25).unwrap();
        assert!((q.value - 2.0).abs() < 1e-12, "got {}", q.value);
        assert!(q.error < 1e-9);
    }

    #[test]
    fn constant_potential_scales_roof() {
        let sys = pi_roof_system();
        let v = Potential::constant(3.0);
        let q = integrate_potential(&sys, &v, 0.7).unwrap();
        assert_eq!(q.value, 3.0 * std::f64::consts::PI);
        assert_eq!(q.error, 0.0);
    }

    #[test]
    fn linear_x_integral_is_x_times_roof() {
        let sys = crate::model::tests::doubling();
        let v = Potential::linear_x(1.0);
        let q = integrate_potential(&sys, &v, 0.37).unwrap();
        assert!((q.value - 0.37).abs() < 1e-15);
    }

    #[test]
    fn additivity_over_flight_split() {
        let sys = pi_roof_system();
        let v = Potential::custom(|x, t, _| (x + t).cos(), 1.0, 1.0);
        let branch = sys.branch(0).unwrap();
        let x = 0.3;
        let r = branch.roof_at(x);
        let whole = v.integrate_flight_range(&sys, &branch, x, 0.0, r, 0.0);
        let a = v.integrate_flight_range(&sys, &branch, x, 0.0, 1.3, 0.0);
        let b = v.integrate_flight_range(&sys, &branch, x, 1.3, r, 0.0);
        assert!((whole.value - a.value - b.value).abs() < 1e-12);
    }

    #[test]
    fn stable_term_integrates_in_closed_form() {
        let sys = crate::model::tests::doubling().with_stable_rate(2.0).unwrap();
        let v = Potential::zero().with_s_coeff(1.5);
        let branch = sys.branch(0).unwrap();
        // integral of 1.5 * s0 e^(-2t) over [0, 1]
        let q = v.integrate_flight_range(&sys, &branch, 0.2, 0.0, 1.0, 0.8);
        let exact = 1.5 * 0.8 * (1.0 - (-2.0f64).exp()) / 2.0;
        assert!((q.value - exact).abs() < 1e-15);
        assert_eq!(q.error, 0.0);
    }

    #[test]
    fn cusp_rejected() {
        let sys = SuspensionSystem::geometric(crate::model::GeometricFamily {
            theta: 0.3,
            log_coeff: 0.0,
            offset: 0.0,
        })
        .unwrap();
        let v = Potential::branch_weights();
        assert!(matches!(
            integrate_potential(&sys, &v, 0.0),
            Err(Error::UndefinedPoint(_))
        ));
    }
}

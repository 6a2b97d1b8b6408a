//! Base dynamics: a full-branch expanding Markov map of an interval,
//! a roof function giving the return time of each base point, and an
//! optional uniformly contracted stable coordinate riding along.
//!
//! Branches are affine. Each branch is described by its inverse map
//! h_i(x) = slope * x + intercept, which sends the whole base interval
//! onto the branch image; the forward map g restricted to that image is
//! the affine inverse. Countable families are generated lazily from a
//! closed-form law so that tail sums can be certified analytically.

use crate::error::{Error, Result};

/// Closed base interval. Invariant: lo < hi, both finite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaseInterval {
    pub lo: f64,
    pub hi: f64,
}

impl BaseInterval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidModel(format!(
                "base interval [{lo}, {hi}] must be finite and ordered"
            )));
        }
        Ok(Self { lo, hi })
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }
}

/// Roof law on one branch image, as a function of the base point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Roof {
    Constant(f64),
    /// r(y) = base + slope * y
    Affine { base: f64, slope: f64 },
}

impl Roof {
    pub fn eval(&self, y: f64) -> f64 {
        match *self {
            Roof::Constant(c) => c,
            Roof::Affine { base, slope } => base + slope * y,
        }
    }

    fn slope(&self) -> f64 {
        match *self {
            Roof::Constant(_) => 0.0,
            Roof::Affine { slope, .. } => slope,
        }
    }
}

/// One materialized branch of the base map.
///
/// `slope` and `intercept` define the inverse map; `weight` is the
/// declared flight integral of the potential over this branch's tower,
/// consumed only by branch-weight potentials.
#[derive(Debug, Clone, Copy)]
pub struct Branch {
    pub index: usize,
    pub slope: f64,
    pub intercept: f64,
    pub roof: Roof,
    pub weight: f64,
}

impl Branch {
    /// Inverse branch h_i, defined on the whole base interval.
    pub fn apply(&self, x: f64) -> f64 {
        self.slope * x + self.intercept
    }

    /// Forward map g on this branch's image.
    pub fn forward(&self, y: f64) -> f64 {
        (y - self.intercept) / self.slope
    }

    pub fn contraction(&self) -> f64 {
        self.slope.abs()
    }

    /// Branch image as an ordered pair, given the base it maps from.
    pub fn image(&self, base: &BaseInterval) -> (f64, f64) {
        let a = self.apply(base.lo);
        let b = self.apply(base.hi);
        if a <= b {
            (a, b)
        } else {
            (b, a)
        }
    }

    pub fn roof_at(&self, y: f64) -> f64 {
        self.roof.eval(y)
    }
}

/// Declarative input for one finite branch; slope and intercept are
/// derived from the image so models stay human-writable.
#[derive(Debug, Clone)]
pub struct BranchSpec {
    pub image: (f64, f64),
    pub roof: Roof,
    pub weight: f64,
    pub decreasing: bool,
}

impl BranchSpec {
    pub fn increasing(image: (f64, f64), roof: Roof) -> Self {
        Self { image, roof, weight: 0.0, decreasing: false }
    }

    pub fn with_weight(mut self, w: f64) -> Self {
        self.weight = w;
        self
    }
}

/// Countable family accumulating at the left base endpoint: level i >= 1
/// has image [2^-i, 2^(1-i)] inside [0, 1], constant roof i, and declared
/// flight weight w_i = -(theta * i + log_coeff * ln i + offset).
#[derive(Debug, Clone, Copy)]
pub struct GeometricFamily {
    pub theta: f64,
    pub log_coeff: f64,
    pub offset: f64,
}

impl GeometricFamily {
    fn weight(&self, level: usize) -> f64 {
        let i = level as f64;
        -(self.theta * i + self.log_coeff * i.ln() + self.offset)
    }

    fn branch(&self, k: usize) -> Branch {
        let level = k + 1;
        let s = 0.5f64.powi(level as i32);
        Branch {
            index: k,
            slope: s,
            intercept: s,
            roof: Roof::Constant(level as f64),
            weight: self.weight(level),
        }
    }
}

/// Two-sided countable family modeling the return map of a flow with a
/// saddle: branch images accumulate at an interior cusp from both sides
/// and return times grow linearly with the level, so deep levels stand
/// for orbits that pass close to the singularity.
#[derive(Debug, Clone, Copy)]
pub struct LorenzFamily {
    /// width ratio between consecutive levels, in (0, 1)
    pub ratio: f64,
    /// roof on level i is roof_base + roof_step * i
    pub roof_base: f64,
    pub roof_step: f64,
    /// potential value carried by the singularity; weights are
    /// w_i = v_sigma * r_i + w_offset
    pub v_sigma: f64,
    pub w_offset: f64,
}

impl LorenzFamily {
    const CUSP: f64 = 0.5;

    fn level_roof(&self, level: usize) -> f64 {
        self.roof_base + self.roof_step * level as f64
    }

    /// Branches alternate sides: even k left of the cusp, odd k right,
    /// level = k / 2 + 1.
    fn branch(&self, k: usize) -> Branch {
        let level = k / 2 + 1;
        let rho = self.ratio;
        let c = Self::CUSP;
        let (lo, hi) = if k % 2 == 0 {
            (c * (1.0 - rho.powi(level as i32 - 1)), c * (1.0 - rho.powi(level as i32)))
        } else {
            (c + c * rho.powi(level as i32), c + c * rho.powi(level as i32 - 1))
        };
        let r = self.level_roof(level);
        Branch {
            index: k,
            slope: hi - lo,
            intercept: lo,
            roof: Roof::Constant(r),
            weight: self.v_sigma * r + self.w_offset,
        }
    }
}

#[derive(Debug, Clone)]
pub enum Branches {
    Finite(Vec<Branch>),
    Geometric(GeometricFamily),
    Lorenz(LorenzFamily),
}

/// How many branches a system has.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BranchCount {
    Finite(usize),
    Countable,
}

/// Where a base point sits relative to the branch partition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Locate {
    /// strictly inside one branch image
    Interior(usize),
    /// shared endpoint of two adjacent images; forward map undefined,
    /// roof read from the right-hand branch
    Boundary { left: usize, right: usize },
    /// endpoint of the base interval, owned by a single branch
    Outer(usize),
    /// accumulation point of a countable family; everything undefined
    Cusp,
    Outside,
}

/// The suspension model: base map, roof, and optional stable direction.
#[derive(Debug, Clone)]
pub struct SuspensionSystem {
    pub base: BaseInterval,
    branches: Branches,
    /// dynamically Holder constants (kappa, gamma) certified for the roof
    pub roof_holder: (f64, f64),
    /// contraction rate of the stable coordinate per unit flight time;
    /// None disables the skew extension
    pub stable_rate: Option<f64>,
    /// infimum of the roof over the whole base
    pub r_min: f64,
}

impl SuspensionSystem {
    /// Build a finite-branch system, validating the Markov structure:
    /// branch images tile the base with disjoint interiors, inverse maps
    /// are uniform contractions, and the roof is positive.
    pub fn finite(base: BaseInterval, specs: Vec<BranchSpec>) -> Result<Self> {
        if specs.is_empty() {
            return Err(Error::InvalidModel("no branches".into()));
        }
        let mut branches: Vec<Branch> = Vec::with_capacity(specs.len());
        for (k, spec) in specs.iter().enumerate() {
            let (a, b) = spec.image;
            if !(a < b) {
                return Err(Error::InvalidModel(format!(
                    "branch {k} image [{a}, {b}] is empty or inverted"
                )));
            }
            if a < base.lo - 1e-12 || b > base.hi + 1e-12 {
                return Err(Error::InvalidModel(format!(
                    "branch {k} image [{a}, {b}] leaves the base"
                )));
            }
            let slope = (b - a) / base.width();
            if slope >= 1.0 {
                return Err(Error::InvalidModel(format!(
                    "branch {k} is not a contraction (|slope| = {slope})"
                )));
            }
            let (slope, intercept) = if spec.decreasing {
                (-slope, b + slope * base.lo)
            } else {
                (slope, a - slope * base.lo)
            };
            let roof_lo = spec.roof.eval(a);
            let roof_hi = spec.roof.eval(b);
            if roof_lo <= 0.0 || roof_hi <= 0.0 {
                return Err(Error::InvalidModel(format!("branch {k} roof not positive")));
            }
            branches.push(Branch {
                index: k,
                slope,
                intercept,
                roof: spec.roof,
                weight: spec.weight,
            });
        }
        // tiling check on the sorted images
        let mut order: Vec<usize> = (0..branches.len()).collect();
        order.sort_by(|&i, &j| {
            branches[i].image(&base).0.partial_cmp(&branches[j].image(&base).0).unwrap()
        });
        let mut cursor = base.lo;
        for &k in &order {
            let (a, b) = branches[k].image(&base);
            if (a - cursor).abs() > 1e-9 {
                return Err(Error::InvalidModel(format!(
                    "branch images leave a gap or overlap near x = {cursor}"
                )));
            }
            cursor = b;
        }
        if (cursor - base.hi).abs() > 1e-9 {
            return Err(Error::InvalidModel(format!(
                "branch images stop at {cursor}, short of the base end {}",
                base.hi
            )));
        }
        // reorder so index k is the k-th image from the left
        let mut sorted: Vec<Branch> = order.iter().map(|&k| branches[k].clone()).collect();
        for (k, b) in sorted.iter_mut().enumerate() {
            b.index = k;
        }
        let c_max = sorted.iter().map(Branch::contraction).fold(0.0, f64::max);
        let slope_max = sorted.iter().map(|b| b.roof.slope().abs()).fold(0.0, f64::max);
        let kappa = slope_max * c_max / (1.0 - c_max);
        let r_min = sorted
            .iter()
            .map(|b| {
                let (a, bb) = b.image(&base);
                b.roof.eval(a).min(b.roof.eval(bb))
            })
            .fold(f64::INFINITY, f64::min);
        Ok(Self {
            base,
            branches: Branches::Finite(sorted),
            roof_holder: (kappa, 1.0),
            stable_rate: None,
            r_min,
        })
    }

    pub fn geometric(family: GeometricFamily) -> Result<Self> {
        if family.log_coeff < 0.0 {
            return Err(Error::InvalidModel(
                "geometric family needs log_coeff >= 0 for its tail law".into(),
            ));
        }
        Ok(Self {
            base: BaseInterval { lo: 0.0, hi: 1.0 },
            branches: Branches::Geometric(family),
            roof_holder: (0.0, 1.0),
            stable_rate: None,
            r_min: 1.0,
        })
    }

    pub fn lorenz(family: LorenzFamily) -> Result<Self> {
        if !(family.ratio > 0.0 && family.ratio < 1.0) {
            return Err(Error::InvalidModel("level ratio must lie in (0, 1)".into()));
        }
        if family.roof_step <= 0.0 || family.roof_base + family.roof_step <= 0.0 {
            return Err(Error::InvalidModel(
                "roof must be positive and increasing with the level".into(),
            ));
        }
        Ok(Self {
            base: BaseInterval { lo: 0.0, hi: 1.0 },
            branches: Branches::Lorenz(family),
            roof_holder: (0.0, 1.0),
            stable_rate: None,
            r_min: family.roof_base + family.roof_step,
        })
    }

    /// Enable the skew extension with stable contraction rate `lambda_s`.
    pub fn with_stable_rate(mut self, lambda_s: f64) -> Result<Self> {
        if lambda_s <= 0.0 {
            return Err(Error::InvalidModel("stable rate must be positive".into()));
        }
        self.stable_rate = Some(lambda_s);
        Ok(self)
    }

    pub fn branch_count(&self) -> BranchCount {
        match &self.branches {
            Branches::Finite(v) => BranchCount::Finite(v.len()),
            _ => BranchCount::Countable,
        }
    }

    pub fn is_countable(&self) -> bool {
        matches!(self.branch_count(), BranchCount::Countable)
    }

    pub fn branch(&self, k: usize) -> Result<Branch> {
        match &self.branches {
            Branches::Finite(v) => v.get(k).cloned().ok_or(Error::UnknownBranch(k)),
            Branches::Geometric(f) => Ok(f.branch(k)),
            Branches::Lorenz(f) => Ok(f.branch(k)),
        }
    }

    /// All roofs constant per branch. Countable families are constant by
    /// construction; this is what makes the scalar spectral route exact.
    pub fn branch_constant_roof(&self) -> bool {
        match &self.branches {
            Branches::Finite(v) => v.iter().all(|b| matches!(b.roof, Roof::Constant(_))),
            _ => true,
        }
    }

    /// Accumulation point of the branch images, when the family has one.
    pub fn cusp(&self) -> Option<f64> {
        match &self.branches {
            Branches::Finite(_) => None,
            Branches::Geometric(_) => Some(0.0),
            Branches::Lorenz(_) => Some(LorenzFamily::CUSP),
        }
    }

    /// Locate `x` against the branch partition. Exact float comparison is
    /// deliberate: shared endpoints of the declared families are exactly
    /// representable, and only exact hits are undefined for the forward map.
    pub fn locate(&self, x: f64) -> Locate {
        if !self.base.contains(x) {
            return Locate::Outside;
        }
        if let Some(c) = self.cusp() {
            if x == c {
                return Locate::Cusp;
            }
        }
        match &self.branches {
            Branches::Finite(v) => {
                if x == self.base.lo {
                    return Locate::Outer(0);
                }
                if x == self.base.hi {
                    return Locate::Outer(v.len() - 1);
                }
                // images are index-ordered left to right
                let mut lo = 0usize;
                let mut hi = v.len();
                while hi - lo > 1 {
                    let mid = (lo + hi) / 2;
                    if x < v[mid].image(&self.base).0 {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                let (a, b) = v[lo].image(&self.base);
                if x == a && lo > 0 {
                    return Locate::Boundary { left: lo - 1, right: lo };
                }
                if x == b && lo + 1 < v.len() {
                    return Locate::Boundary { left: lo, right: lo + 1 };
                }
                Locate::Interior(lo)
            }
            Branches::Geometric(_) => {
                if x <= 0.0 {
                    return Locate::Outside; // x == 0 handled as cusp above
                }
                if x == 1.0 {
                    return Locate::Outer(0);
                }
                let guess = (-x.log2()).floor() as i64;
                for level in (guess).max(1)..=(guess + 2) {
                    let k = (level - 1) as usize;
                    let lo = 0.5f64.powi(level as i32);
                    let hi = 2.0 * lo;
                    // deeper levels sit further left, so the branch having
                    // x as its left endpoint is the spatially right one
                    if x == lo {
                        return Locate::Boundary { left: k + 1, right: k };
                    }
                    if x == hi {
                        return Locate::Boundary { left: k, right: k - 1 };
                    }
                    if lo < x && x < hi {
                        return Locate::Interior(k);
                    }
                }
                Locate::Outside
            }
            Branches::Lorenz(f) => {
                let c = LorenzFamily::CUSP;
                let d = (x - c).abs() / c;
                if x == self.base.lo {
                    return Locate::Outer(0);
                }
                if x == self.base.hi {
                    return Locate::Outer(1);
                }
                let guess = (d.ln() / f.ratio.ln()).floor() as i64;
                for level in (guess - 1).max(1)..=(guess + 2) {
                    for side in 0..2usize {
                        let k = (level as usize - 1) * 2 + side;
                        let (a, b) = f.branch(k).image(&self.base);
                        if x == a || x == b {
                            // left of the cusp deeper levels sit to the
                            // right; right of the cusp they sit to the left
                            let deeper = k + 2;
                            let shallower = k.saturating_sub(2);
                            let (left, right) = match (side, x == a) {
                                (0, true) => (shallower, k),
                                (0, false) => (k, deeper),
                                (1, true) => (deeper, k),
                                _ => (k, shallower),
                            };
                            return Locate::Boundary { left, right };
                        }
                        if a < x && x < b {
                            return Locate::Interior(k);
                        }
                    }
                }
                Locate::Outside
            }
        }
    }

    /// Branch whose image contains `x`, for points where the forward map
    /// is defined. Shared endpoints and the cusp are rejected.
    pub fn branch_at(&self, x: f64) -> Result<usize> {
        match self.locate(x) {
            Locate::Interior(k) | Locate::Outer(k) => Ok(k),
            Locate::Boundary { .. } | Locate::Cusp => Err(Error::UndefinedPoint(x)),
            Locate::Outside => Err(Error::OutsideBase(x)),
        }
    }

    /// Roof value at `x`. Shared branch endpoints are allowed; the value
    /// is read from the branch having `x` as its left endpoint, a fixed
    /// convention since the roof may jump there. Cusps have no finite
    /// return time and are rejected.
    pub fn roof_at(&self, x: f64) -> Result<f64> {
        match self.locate(x) {
            Locate::Interior(k) | Locate::Outer(k) => Ok(self.branch(k)?.roof_at(x)),
            Locate::Boundary { right, .. } => Ok(self.branch(right)?.roof_at(x)),
            Locate::Cusp => Err(Error::UndefinedPoint(x)),
            Locate::Outside => Err(Error::OutsideBase(x)),
        }
    }

    /// One forward step of the base map: (branch index, g(x)).
    pub fn forward(&self, x: f64) -> Result<(usize, f64)> {
        let k = self.branch_at(x)?;
        let b = self.branch(k)?;
        Ok((k, b.forward(x)))
    }

    /// Inverse branch application, the computable route into a 1-cylinder.
    pub fn apply_branch(&self, k: usize, x: f64) -> Result<f64> {
        if !self.base.contains(x) {
            return Err(Error::OutsideBase(x));
        }
        Ok(self.branch(k)?.apply(x))
    }

    /// Smallest decay parameter for which the weight tail law converges:
    /// the critical abscissa of the branch weight series at inverse
    /// temperature `beta`. Finite systems have no tail, hence -inf.
    pub fn tail_abscissa(&self, beta: f64) -> f64 {
        match &self.branches {
            Branches::Finite(_) => f64::NEG_INFINITY,
            Branches::Geometric(f) => -beta * f.theta,
            Branches::Lorenz(f) => beta * f.v_sigma,
        }
    }

    /// Certified upper bound on the discarded branch weights
    /// sum over k >= cutoff of e^(beta * w_k - z * r_k).
    ///
    /// Two routes: a geometric bound when the level ratio q is below 1,
    /// and an integral bound on the polynomial factor when the log term
    /// decays fast enough; the tighter applicable one wins. Infinity
    /// means no certificate at this (beta, z, cutoff).
    pub fn tail_weight_bound(&self, beta: f64, z: f64, cutoff: usize) -> f64 {
        match &self.branches {
            Branches::Finite(v) => {
                if cutoff >= v.len() {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            Branches::Geometric(f) => {
                // levels are k + 1, so the first discarded level is cutoff + 1
                let n = cutoff as f64; // levels > n are discarded
                let a = beta * f.log_coeff;
                let scale = (-beta * f.offset).exp();
                let q = (-(beta * f.theta + z)).exp();
                geometric_log_tail(scale, a, q, n)
            }
            Branches::Lorenz(f) => {
                // two branches per level; first discarded level
                let n = (cutoff / 2) as f64;
                let q = ((beta * f.v_sigma - z) * f.roof_step).exp();
                if q >= 1.0 {
                    return f64::INFINITY;
                }
                let scale =
                    2.0 * (beta * f.w_offset).exp() * ((beta * f.v_sigma - z) * f.roof_base).exp();
                scale * q.powf(n + 1.0) / (1.0 - q)
            }
        }
    }

    /// Like `tail_weight_bound` but with an extra roof factor, bounding
    /// sum over k >= cutoff of r_k * e^(beta * w_k - z * r_k).
    pub fn tail_roof_weight_bound(&self, beta: f64, z: f64, cutoff: usize) -> f64 {
        match &self.branches {
            Branches::Finite(v) => {
                if cutoff >= v.len() {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            Branches::Geometric(f) => {
                let n = cutoff as f64;
                let a = beta * f.log_coeff;
                let scale = (-beta * f.offset).exp();
                let q = (-(beta * f.theta + z)).exp();
                // r_i = i; absorb one power of i into the polynomial part
                geometric_log_tail_linear(scale, a, q, n)
            }
            Branches::Lorenz(f) => {
                let n = (cutoff / 2) as f64;
                let q = ((beta * f.v_sigma - z) * f.roof_step).exp();
                if q >= 1.0 {
                    return f64::INFINITY;
                }
                let scale =
                    2.0 * (beta * f.w_offset).exp() * ((beta * f.v_sigma - z) * f.roof_base).exp();
                // r at level i is roof_base + roof_step * i
                let geo = q.powf(n + 1.0) / (1.0 - q);
                let lin = q.powf(n + 1.0) * ((n + 1.0) * (1.0 - q) + q) / ((1.0 - q) * (1.0 - q));
                scale * (f.roof_base.abs() * geo + f.roof_step * lin)
            }
        }
    }

    /// Constant C with |w_k| <= C * r_k for every branch, used to turn
    /// roof-weighted tail bounds into weight-sum tail bounds.
    pub fn weight_growth_bound(&self) -> f64 {
        match &self.branches {
            Branches::Finite(v) => v
                .iter()
                .map(|b| {
                    let (a, bb) = b.image(&self.base);
                    b.weight.abs() / b.roof.eval(a).min(b.roof.eval(bb))
                })
                .fold(0.0, f64::max),
            // |theta i + a ln i + b| <= (theta + a + |b|) * i since
            // ln i <= i and 1 <= i = r_i
            Branches::Geometric(f) => f.theta.abs() + f.log_coeff + f.offset.abs(),
            Branches::Lorenz(f) => f.v_sigma.abs() + f.w_offset.abs() / self.r_min,
        }
    }

    /// Largest branch index whose roof might stay at or below `t`.
    /// Used to size enumerations by return-time class.
    pub fn max_index_with_roof_at_most(&self, t: f64) -> usize {
        match &self.branches {
            Branches::Finite(v) => v.len().saturating_sub(1),
            Branches::Geometric(_) => (t.floor().max(0.0) as usize).saturating_sub(1),
            Branches::Lorenz(f) => {
                let lvl = ((t - f.roof_base) / f.roof_step).floor().max(0.0) as usize;
                (lvl * 2).saturating_sub(1)
            }
        }
    }
}

/// Upper bound on scale * sum over integer levels i > n of i^(-a) * q^i,
/// for a >= 0. Returns infinity when neither route certifies.
fn geometric_log_tail(scale: f64, a: f64, q: f64, n: f64) -> f64 {
    if q > 1.0 {
        return f64::INFINITY;
    }
    let mut best = f64::INFINITY;
    if q < 1.0 {
        // i^(-a) <= (n+1)^(-a) for i > n
        best = best.min(scale * (n + 1.0).powf(-a) * q.powf(n + 1.0) / (1.0 - q));
    }
    if a > 1.0 {
        // q^i <= q^(n+1); integral bound on the zeta tail
        best = best.min(scale * q.powf(n + 1.0) * n.max(1.0).powf(1.0 - a) / (a - 1.0));
    }
    best
}

/// Same with one extra power of i (roof factor r_i = i).
fn geometric_log_tail_linear(scale: f64, a: f64, q: f64, n: f64) -> f64 {
    if q > 1.0 {
        return f64::INFINITY;
    }
    let mut best = f64::INFINITY;
    if q < 1.0 {
        // sum i q^i over i > n has the closed form below; the i^(-a)
        // factor is bounded by its value at the first discarded level
        let lin = q.powf(n + 1.0) * ((n + 1.0) * (1.0 - q) + q) / ((1.0 - q) * (1.0 - q));
        best = best.min(scale * (n + 1.0).powf(-a) * lin);
    }
    if a > 2.0 {
        best = best.min(scale * q.powf(n + 1.0) * n.max(1.0).powf(2.0 - a) / (a - 2.0));
    }
    best
}

/// A point of the suspension space: base coordinate, flight time since
/// the last return, and the stable coordinate (0 when the skew extension
/// is off). Normal form keeps 0 <= t < roof(x).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuspensionPoint {
    pub x: f64,
    pub t: f64,
    pub s: f64,
}

impl SuspensionPoint {
    pub fn base(x: f64) -> Self {
        Self { x, t: 0.0, s: 0.0 }
    }

    pub fn with_s(x: f64, s: f64) -> Self {
        Self { x, t: 0.0, s }
    }
}

/// Advance a suspension point by flight time `dt >= 0`, crossing roof
/// ceilings as needed. The stable coordinate contracts exactly
/// exponentially in elapsed flight time.
///
/// Errors if the orbit must step forward from a point where the base map
/// is undefined (shared branch endpoint or cusp). Panics on negative `dt`,
/// which is a caller bug rather than a data condition.
pub fn flow_advance(sys: &SuspensionSystem, p: SuspensionPoint, dt: f64) -> Result<SuspensionPoint> {
    assert!(dt >= 0.0, "flow_advance: negative flight time {dt}");
    let mut x = p.x;
    let mut t = p.t;
    let roof = sys.roof_at(x)?;
    if !(0.0..roof).contains(&t) {
        return Err(Error::InvalidModel(format!(
            "point not in normal form: t = {t}, roof = {roof}"
        )));
    }
    let mut left = dt;
    loop {
        let roof = sys.roof_at(x)?;
        let to_ceiling = roof - t;
        if left < to_ceiling {
            t += left;
            break;
        }
        left -= to_ceiling;
        let (_, gx) = sys.forward(x)?;
        x = gx;
        t = 0.0;
    }
    let s = match sys.stable_rate {
        Some(rate) => p.s * (-rate * dt).exp(),
        None => p.s,
    };
    Ok(SuspensionPoint { x, t, s })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn doubling() -> SuspensionSystem {
        SuspensionSystem::finite(
            BaseInterval::new(0.0, 1.0).unwrap(),
            vec![
                BranchSpec::increasing((0.0, 0.5), Roof::Constant(1.0)),
                BranchSpec::increasing((0.5, 1.0), Roof::Constant(1.0)),
            ],
        )
        .unwrap()
    }

    #[test]
    fn apply_branch_doubling() {
        let sys = doubling();
        // second branch sends 0.25 to 0.625
        assert_eq!(sys.apply_branch(1, 0.25).unwrap(), 0.625);
        assert_eq!(sys.apply_branch(0, 0.25).unwrap(), 0.125);
    }

    #[test]
    fn forward_inverts_branches() {
        let sys = doubling();
        for x in [0.0, 0.1, 0.37, 0.9, 1.0] {
            for k in 0..2 {
                let y = sys.apply_branch(k, x).unwrap();
                let b = sys.branch(k).unwrap();
                assert!((b.forward(y) - x).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn unknown_branch_rejected() {
        let sys = doubling();
        assert!(matches!(sys.apply_branch(5, 0.1), Err(Error::UnknownBranch(5))));
    }

    #[test]
    fn locate_boundary_and_outer() {
        let sys = doubling();
        assert_eq!(sys.locate(0.25), Locate::Interior(0));
        assert_eq!(sys.locate(0.5), Locate::Boundary { left: 0, right: 1 });
        assert_eq!(sys.locate(0.0), Locate::Outer(0));
        assert_eq!(sys.locate(1.0), Locate::Outer(1));
        assert_eq!(sys.locate(1.5), Locate::Outside);
    }

    #[test]
    fn flow_advance_crosses_ceiling() {
        // matches the worked example: (0.25, 0.9) advanced by 0.2 lands
        // at (g(0.25), 0.1) = (0.5, 0.1)
        let sys = doubling();
        let p = flow_advance(&sys, SuspensionPoint { x: 0.25, t: 0.9, s: 0.0 }, 0.2).unwrap();
        assert!((p.x - 0.5).abs() < 1e-15);
        assert!((p.t - 0.1).abs() < 1e-15);
    }

    #[test]
    fn flow_advance_stops_at_undefined_forward_image() {
        // 0.5 is a shared endpoint; sitting over it is fine, stepping
        // through its ceiling is not
        let sys = doubling();
        let p = SuspensionPoint { x: 0.5, t: 0.0, s: 0.0 };
        assert!(flow_advance(&sys, p, 0.5).is_ok());
        assert!(matches!(flow_advance(&sys, p, 1.0), Err(Error::UndefinedPoint(_))));
    }

    #[test]
    #[should_panic(expected = "negative flight time")]
    fn flow_advance_rejects_negative_dt() {
        let sys = doubling();
        let _ = flow_advance(&sys, SuspensionPoint::base(0.25), -1.0);
    }

    #[test]
    fn stable_coordinate_contracts() {
        let sys = doubling().with_stable_rate(1.0).unwrap();
        let p = flow_advance(&sys, SuspensionPoint::with_s(0.3, 0.8), 2.25).unwrap();
        assert!((p.s - 0.8 * (-2.25f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn geometric_family_images_tile() {
        let sys = SuspensionSystem::geometric(GeometricFamily {
            theta: 0.3,
            log_coeff: 0.0,
            offset: 0.0,
        })
        .unwrap();
        // worked example: level 3 sends 1 to 2^-3 * (1 + 1) = 0.25
        assert_eq!(sys.apply_branch(2, 1.0).unwrap(), 0.25);
        let mut hi_prev = None;
        for k in 0..12 {
            let (a, b) = sys.branch(k).unwrap().image(&sys.base);
            if let Some(h) = hi_prev {
                assert_eq!(b, h, "images of consecutive levels must share endpoints");
            }
            assert!(a < b);
            hi_prev = Some(a);
        }
        assert_eq!(sys.locate(0.0), Locate::Cusp);
        assert_eq!(sys.locate(0.3), Locate::Interior(1));
        assert_eq!(sys.locate(0.25), Locate::Boundary { left: 2, right: 1 });
    }

    #[test]
    fn geometric_tail_bound_dominates_true_tail() {
        let sys = SuspensionSystem::geometric(GeometricFamily {
            theta: 0.3,
            log_coeff: 2.0,
            offset: 0.5,
        })
        .unwrap();
        let (beta, z) = (1.0, -0.1);
        for cutoff in [10usize, 40, 100] {
            let bound = sys.tail_weight_bound(beta, z, cutoff);
            let mut true_tail = 0.0;
            for k in cutoff..cutoff + 4000 {
                let b = sys.branch(k).unwrap();
                true_tail += (beta * b.weight - z * b.roof_at(0.0)).exp();
            }
            assert!(bound >= true_tail, "cutoff {cutoff}: {bound} < {true_tail}");
            assert!(bound.is_finite());
        }
    }

    #[test]
    fn tail_bound_diverges_at_abscissa() {
        let sys = SuspensionSystem::geometric(GeometricFamily {
            theta: 0.3,
            log_coeff: 0.0,
            offset: 0.0,
        })
        .unwrap();
        let beta = 1.0;
        assert_eq!(sys.tail_abscissa(beta), -0.3);
        assert!(sys.tail_weight_bound(beta, -0.3, 100).is_infinite());
        assert!(sys.tail_weight_bound(beta, -0.29, 100).is_finite());
    }

    #[test]
    fn polynomial_tail_certifies_at_abscissa_with_log_factor() {
        // with a log^2-type factor the series converges at the abscissa
        // itself and the integral bound must certify it
        let sys = SuspensionSystem::geometric(GeometricFamily {
            theta: 0.3,
            log_coeff: 2.0,
            offset: 0.0,
        })
        .unwrap();
        let beta = 1.0;
        let bound = sys.tail_weight_bound(beta, -0.3, 1000);
        assert!(bound.is_finite());
        let mut true_tail = 0.0;
        for k in 1000..200_000 {
            let b = sys.branch(k).unwrap();
            true_tail += (beta * b.weight + 0.3 * b.roof_at(0.0)).exp();
        }
        assert!(bound >= true_tail);
    }

    #[test]
    fn lorenz_images_accumulate_at_cusp() {
        let sys = SuspensionSystem::lorenz(LorenzFamily {
            ratio: 0.5,
            roof_base: 0.4,
            roof_step: 0.7,
            v_sigma: -0.3,
            w_offset: 0.0,
        })
        .unwrap();
        assert_eq!(sys.locate(0.5), Locate::Cusp);
        // left level 1 covers [0, 1/4], right level 1 covers [3/4, 1]
        assert_eq!(sys.branch(0).unwrap().image(&sys.base), (0.0, 0.25));
        assert_eq!(sys.branch(1).unwrap().image(&sys.base), (0.75, 1.0));
        assert_eq!(sys.locate(0.1), Locate::Interior(0));
        assert_eq!(sys.locate(0.9), Locate::Interior(1));
        assert_eq!(sys.locate(0.3), Locate::Interior(2));
        // roofs grow with the level on both sides
        assert!(sys.branch(4).unwrap().roof_at(0.45) > sys.branch(2).unwrap().roof_at(0.3));
    }

    #[test]
    fn decreasing_branch_forward_consistency() {
        let sys = SuspensionSystem::finite(
            BaseInterval::new(0.0, 1.0).unwrap(),
            vec![
                BranchSpec::increasing((0.0, 0.6), Roof::Constant(1.0)),
                BranchSpec {
                    image: (0.6, 1.0),
                    roof: Roof::Constant(2.0),
                    weight: 0.0,
                    decreasing: true,
                },
            ],
        )
        .unwrap();
        let y = sys.apply_branch(1, 0.0).unwrap();
        assert_eq!(y, 1.0);
        let b = sys.branch(1).unwrap();
        assert!((b.forward(0.8) - 0.5).abs() < 1e-14);
    }

    #[test]
    fn gap_and_overlap_rejected() {
        let base = BaseInterval::new(0.0, 1.0).unwrap();
        let gap = SuspensionSystem::finite(
            base,
            vec![
                BranchSpec::increasing((0.0, 0.4), Roof::Constant(1.0)),
                BranchSpec::increasing((0.5, 1.0), Roof::Constant(1.0)),
            ],
        );
        assert!(gap.is_err());
        let overlap = SuspensionSystem::finite(
            base,
            vec![
                BranchSpec::increasing((0.0, 0.6), Roof::Constant(1.0)),
                BranchSpec::increasing((0.5, 1.0), Roof::Constant(1.0)),
            ],
        );
        assert!(overlap.is_err());
    }

    #[test]
    fn nonpositive_roof_rejected() {
        let bad = SuspensionSystem::finite(
            BaseInterval::new(0.0, 1.0).unwrap(),
            vec![
                BranchSpec::increasing((0.0, 0.5), Roof::Affine { base: 0.1, slope: -0.5 }),
                BranchSpec::increasing((0.5, 1.0), Roof::Constant(1.0)),
            ],
        );
        assert!(bad.is_err());
    }
}

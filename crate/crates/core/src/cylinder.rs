//! Cylinders of the base map and Birkhoff data along them.
//!
//! A word (w_1, ..., w_n) names the set of points whose first n branch
//! visits follow the word. Geometrically it is the image of the whole
//! base under the composed inverse branch h_{w_1} o ... o h_{w_n}, an
//! interval that contracts exponentially in n. The return-time cocycle
//! and the induced weight are Birkhoff sums along the forward orbit of
//! any point inside, evaluated here at the interval midpoint.

use crate::error::{Error, Result};
use crate::model::{Branch, SuspensionSystem};
use crate::potential::Potential;

/// Hard cap on one enumeration, a guard against runaway word counts.
const MAX_ENUMERATION: usize = 8_000_000;

#[derive(Debug, Clone)]
pub struct Cylinder {
    pub word: Vec<usize>,
    /// ordered interval h_word(base)
    pub interval: (f64, f64),
    /// interval midpoint, the representative all sums are evaluated at
    pub rep: f64,
    /// return time accumulated over the word: r^n(rep)
    pub induced_roof: f64,
    /// flight-integral weight accumulated over the word: S_n W(rep)
    pub birkhoff_w: f64,
}

impl Cylinder {
    pub fn depth(&self) -> usize {
        self.word.len()
    }

    pub fn width(&self) -> f64 {
        self.interval.1 - self.interval.0
    }
}

/// Birkhoff data of one word evaluated from base point `x`: the image
/// point h_word(x) together with the roof and weight sums along its
/// forward orbit back out of the cylinder.
#[derive(Debug, Clone, Copy)]
pub struct WordData {
    pub point: f64,
    pub roof_sum: f64,
    pub weight_sum: f64,
}

/// One reversed pass over the word computes the composed affine map and
/// every suffix image of `x` on the way, so the whole Birkhoff sum costs
/// O(n) with no forward-map divisions.
pub fn word_data(
    sys: &SuspensionSystem,
    v: &Potential,
    word: &[usize],
    x: f64,
) -> Result<WordData> {
    if word.is_empty() {
        return Ok(WordData { point: x, roof_sum: 0.0, weight_sum: 0.0 });
    }
    let mut slope = 1.0f64;
    let mut intercept = 0.0f64;
    let mut roof_sum = 0.0;
    let mut weight_sum = 0.0;
    for &k in word.iter().rev() {
        let b: Branch = sys.branch(k)?;
        // compose h_k with the suffix map built so far
        slope *= b.slope;
        intercept = b.slope * intercept + b.intercept;
        let y = slope * x + intercept;
        roof_sum += b.roof_at(y);
        weight_sum += v.flight_integral(sys, &b, y).value;
    }
    Ok(WordData { point: slope * x + intercept, roof_sum, weight_sum })
}

/// Build the cylinder of `word`, with sums evaluated at its midpoint.
pub fn cylinder(sys: &SuspensionSystem, v: &Potential, word: &[usize]) -> Result<Cylinder> {
    if word.is_empty() {
        return Err(Error::InvalidModel("empty word".into()));
    }
    let (mut slope, mut intercept) = (1.0f64, 0.0f64);
    for &k in word.iter().rev() {
        let b = sys.branch(k)?;
        slope *= b.slope;
        intercept = b.slope * intercept + b.intercept;
    }
    let a = slope * sys.base.lo + intercept;
    let bnd = slope * sys.base.hi + intercept;
    let interval = if a <= bnd { (a, bnd) } else { (bnd, a) };
    let data = word_data(sys, v, word, sys.base.midpoint())?;
    Ok(Cylinder {
        word: word.to_vec(),
        interval,
        rep: data.point,
        induced_roof: data.roof_sum,
        birkhoff_w: data.weight_sum,
    })
}

/// Return time over the word at its representative.
pub fn induced_roof(sys: &SuspensionSystem, word: &[usize]) -> Result<f64> {
    Ok(cylinder(sys, &Potential::zero(), word)?.induced_roof)
}

/// Induced weight over the word at its representative.
pub fn birkhoff_w(sys: &SuspensionSystem, v: &Potential, word: &[usize]) -> Result<f64> {
    Ok(cylinder(sys, v, word)?.birkhoff_w)
}

/// The unique fixed point of the composed inverse branch, the periodic
/// point realizing the word. Exists because the composition is a strict
/// contraction.
pub fn periodic_point(sys: &SuspensionSystem, word: &[usize]) -> Result<f64> {
    let (mut slope, mut intercept) = (1.0f64, 0.0f64);
    for &k in word.iter().rev() {
        let b = sys.branch(k)?;
        slope *= b.slope;
        intercept = b.slope * intercept + b.intercept;
    }
    // the fixed point lies in the word's cylinder, but the division can
    // round an ulp past a base endpoint when the cylinder touches it
    Ok((intercept / (1.0 - slope)).clamp(sys.base.lo, sys.base.hi))
}

/// All depth-`depth` cylinders over the first `cutoff` branches, in
/// lexicographic word order. Finite systems clamp the cutoff to their
/// branch count.
pub fn enumerate_cylinders(
    sys: &SuspensionSystem,
    v: &Potential,
    depth: usize,
    cutoff: usize,
) -> Result<Vec<Cylinder>> {
    if depth == 0 {
        return Err(Error::InvalidModel("cylinder depth must be at least 1".into()));
    }
    let width = match sys.branch_count() {
        crate::model::BranchCount::Finite(n) => cutoff.min(n),
        crate::model::BranchCount::Countable => cutoff,
    };
    if width == 0 {
        return Err(Error::InvalidModel("branch cutoff is zero".into()));
    }
    let total = (width as f64).powi(depth as i32);
    if total > MAX_ENUMERATION as f64 {
        return Err(Error::InvalidModel(format!(
            "{width}^{depth} cylinders exceed the enumeration cap {MAX_ENUMERATION}"
        )));
    }
    let mut out = Vec::with_capacity(total as usize);
    let mut word = vec![0usize; depth];
    loop {
        out.push(cylinder(sys, v, &word)?);
        // odometer increment in base `width`
        let mut pos = depth;
        loop {
            if pos == 0 {
                return Ok(out);
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

/// Smallest branch cutoff whose certified weight tail is at most `tol`
/// times the retained weight sum at (beta, z), or None within the probe
/// limit. The retained sum is evaluated at branch representatives.
pub fn required_cutoff_for_mass(
    sys: &SuspensionSystem,
    v: &Potential,
    beta: f64,
    z: f64,
    tol: f64,
) -> Option<usize> {
    let m = sys.base.midpoint();
    let mut retained = 0.0;
    let mut cutoff = 0usize;
    let limit = match sys.branch_count() {
        crate::model::BranchCount::Finite(n) => n,
        crate::model::BranchCount::Countable => 4_194_304,
    };
    while cutoff < limit {
        let b = sys.branch(cutoff).ok()?;
        let y = b.apply(m);
        retained += (beta * v.flight_integral(sys, &b, y).value - z * b.roof_at(y)).exp();
        cutoff += 1;
        // checking every step is wasteful; geometric probe schedule
        if cutoff.is_power_of_two() || cutoff == limit {
            let tail = sys.tail_weight_bound(beta, z, cutoff);
            if tail <= tol * retained {
                return Some(cutoff);
            }
        }
    }
    None
}

/// Enumeration that first certifies the cutoff covers the branch tail to
/// `mass_tol` at the operating point (beta, z); the error reports the
/// cutoff that would have sufficed.
pub fn enumerate_cylinders_checked(
    sys: &SuspensionSystem,
    v: &Potential,
    depth: usize,
    cutoff: usize,
    beta: f64,
    z: f64,
    mass_tol: f64,
) -> Result<Vec<Cylinder>> {
    let tail = sys.tail_weight_bound(beta, z, cutoff);
    let mut retained = 0.0;
    let m = sys.base.midpoint();
    let width = match sys.branch_count() {
        crate::model::BranchCount::Finite(n) => cutoff.min(n),
        crate::model::BranchCount::Countable => cutoff,
    };
    for k in 0..width {
        let b = sys.branch(k)?;
        let y = b.apply(m);
        retained += (beta * v.flight_integral(sys, &b, y).value - z * b.roof_at(y)).exp();
    }
    if !(tail <= mass_tol * retained) {
        let required = required_cutoff_for_mass(sys, v, beta, z, mass_tol).unwrap_or(usize::MAX);
        return Err(Error::TailMass { cutoff, mass: tail / retained.max(f64::MIN_POSITIVE), required });
    }
    enumerate_cylinders(sys, v, depth, cutoff)
}

/// Empirical dynamically-Holder certificate for a Birkhoff observable.
#[derive(Debug, Clone)]
pub struct HolderCertificate {
    pub kappa: f64,
    pub gamma: f64,
    pub worst_word: Vec<usize>,
    pub worst_pair: (f64, f64),
}

/// Scan all same-word pairs at depths 1..=depth and report the largest
/// observed ratio |S_n phi(x) - S_n phi(y)| / |g^n x - g^n y|^gamma,
/// where phi is the roof when `v` is None and the flight weight
/// otherwise. Pairs are the cylinder quarter points, whose images under
/// g^n span half the base.
pub fn holder_certificate(
    sys: &SuspensionSystem,
    v: Option<&Potential>,
    gamma: f64,
    depth: usize,
    cutoff: usize,
) -> Result<HolderCertificate> {
    let zero = Potential::zero();
    let pot = v.unwrap_or(&zero);
    let pick = |d: &WordData| if v.is_some() { d.weight_sum } else { d.roof_sum };
    let mut best = HolderCertificate {
        kappa: 0.0,
        gamma,
        worst_word: vec![],
        worst_pair: (0.0, 0.0),
    };
    let (qa, qb) = (
        sys.base.lo + 0.25 * sys.base.width(),
        sys.base.lo + 0.75 * sys.base.width(),
    );
    for d in 1..=depth {
        for cyl in enumerate_cylinders(sys, pot, d, cutoff)? {
            let da = word_data(sys, pot, &cyl.word, qa)?;
            let db = word_data(sys, pot, &cyl.word, qb)?;
            // g^n maps the pair back to the quarter points themselves
            let denom = (qb - qa).abs().powf(gamma);
            let ratio = (pick(&da) - pick(&db)).abs() / denom;
            if ratio > best.kappa {
                best.kappa = ratio;
                best.worst_word = cyl.word.clone();
                best.worst_pair = (da.point, db.point);
            }
        }
    }
    Ok(best)
}

use thiserror::Error;

/// Everything that can go wrong below the CLI layer.
///
/// Variants carry enough context to act on: divergent tails report the
/// smallest abscissa that would have converged, grid failures report the
/// depth actually resolvable, and so on.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("branch index {0} out of range")]
    UnknownBranch(usize),

    #[error("point {0} outside the base interval")]
    OutsideBase(f64),

    /// The forward orbit reached a point where the base map is undefined
    /// (a shared branch boundary or the cusp of a countable family).
    #[error("orbit reached undefined point of the base map at x = {0}")]
    UndefinedPoint(f64),

    #[error("skew coordinates requested but the model has no stable direction")]
    SkewDisabled,

    /// Weight series fails its tail certificate at this decay parameter.
    /// `min_admissible` is the infimum of Z for which the tail law converges.
    #[error("divergent tail at Z = {z} with cutoff {cutoff} (need Z > {min_admissible})")]
    TailDivergent {
        z: f64,
        cutoff: usize,
        min_admissible: f64,
    },

    /// Branch cutoff leaves more tail mass than the caller allowed.
    #[error("tail mass {mass:.3e} above tolerance at cutoff {cutoff}; need roughly {required}")]
    TailMass {
        cutoff: usize,
        mass: f64,
        required: usize,
    },

    /// Not enough branches reach the requested return-time class.
    #[error("no branch reaches return-time class {class} under cutoff {cutoff}")]
    ClassUnpopulated { class: usize, cutoff: usize },

    #[error("iteration failed to converge after {iterations} steps (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    /// Cylinders at this depth are narrower than the grid spacing.
    #[error("depth {depth} exceeds grid resolving power (max resolvable depth {resolvable})")]
    GridTooCoarse { depth: usize, resolvable: usize },

    /// Power iteration produced a nonpositive eigenfunction value, which
    /// signals a grid too coarse for the weight's variation.
    #[error("eigenfunction has nonpositive values (min {min:.3e}); refine the grid")]
    NonpositiveEigenfunction { min: f64 },

    /// Critical-abscissa estimate too uncertain to bracket a root.
    #[error("critical abscissa estimate {value} has spread {spread:.3e}, too wide to bracket")]
    AbscissaUncertain { value: f64, spread: f64 },

    /// Regime classification could not certify either side of lambda = 1.
    #[error("regime undetermined at beta = {beta}: |lambda - 1| margin {margin:.3e} below certainty")]
    RegimeUndetermined { beta: f64, margin: f64 },

    #[error("model file: {0}")]
    ModelFile(String),
}

pub type Result<T> = std::result::Result<T, Error>;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum FsiError {
    #[error("resolution too coarse: {0}")]
    ResolutionTooCoarse(String),
    #[error("degenerate element {element}: signed volume {volume:e}")]
    DegenerateElement { element: usize, volume: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("mesh format error at line {line}: {msg}")]
    MeshFormat { line: usize, msg: String },
    #[error("deformation format error at line {line}: {msg}")]
    DeformationFormat { line: usize, msg: String },
    #[error("deformation not available at t = {t}: {msg}")]
    DeformationOutOfRange { t: f64, msg: String },
    #[error("H1 violated: min det grad X* = {min_det:e} at t = {t}")]
    H1Violation { t: f64, min_det: f64 },
    #[error("singular inertia: condition number {cond:e} at t = {t}")]
    SingularInertia { t: f64, cond: f64 },
    #[error("extension diverged after {iterations} iterations (det residual {residual:e})")]
    ExtensionDiverged { iterations: usize, residual: f64 },
    #[error("compatibility violated: interface flux {flux:e} exceeds {bound:e}")]
    CompatibilityViolation { flux: f64, bound: f64 },
    #[error("singular system: {0}")]
    SingularSystem(String),
    #[error("linear solve failed: {msg} (relative residual {residual:e})")]
    LinearSolveFailed { msg: String, residual: f64 },
    #[error("Picard iteration diverged after {iterations} iterations (last increment {increment:e})")]
    PicardDiverged { iterations: usize, increment: f64 },
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error("incompatible initial data: divergence {divergence:e}, wall trace {wall:e}, interface mismatch {interface:e}")]
    IncompatibleInitialData { divergence: f64, wall: f64, interface: f64 },
    #[error("step failed at t = {t}: {source}")]
    StepFailed {
        t: f64,
        #[source]
        source: Box<FsiError>,
    },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl FsiError {
    pub fn kind(&self) -> &'static str {
        match self {
            FsiError::ResolutionTooCoarse(_) => "ResolutionTooCoarse",
            FsiError::DegenerateElement { .. } => "DegenerateElement",
            FsiError::InvalidParameter(_) => "InvalidParameter",
            FsiError::MeshFormat { .. } => "MeshFormat",
            FsiError::DeformationFormat { .. } => "DeformationFormat",
            FsiError::DeformationOutOfRange { .. } => "DeformationOutOfRange",
            FsiError::H1Violation { .. } => "H1Violation",
            FsiError::SingularInertia { .. } => "SingularInertia",
            FsiError::ExtensionDiverged { .. } => "ExtensionDiverged",
            FsiError::CompatibilityViolation { .. } => "CompatibilityViolation",
            FsiError::SingularSystem(_) => "SingularSystem",
            FsiError::LinearSolveFailed { .. } => "LinearSolveFailed",
            FsiError::PicardDiverged { .. } => "PicardDiverged",
            FsiError::ConfigInvalid(_) => "ConfigInvalid",
            FsiError::IncompatibleInitialData { .. } => "IncompatibleInitialData",
            FsiError::StepFailed { .. } => "StepFailed",
            FsiError::Io(_) => "Io",
        }
    }

    /// Innermost error, looking through `StepFailed` wrappers.
    pub fn root(&self) -> &FsiError {
        match self {
            FsiError::StepFailed { source, .. } => source.root(),
            e => e,
        }
    }
}

pub type Result<T> = std::result::Result<T, FsiError>;

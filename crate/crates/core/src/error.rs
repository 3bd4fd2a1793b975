use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("invalid angle grid: {0}")]
    InvalidAngleGrid(String),

    #[error("degenerate curve: zeroth moment {moment0:e} is not above floor {floor:e}")]
    DegenerateCurve { moment0: f64, floor: f64 },

    #[error("peak at {center:e} rad with width {width:e} rad leaks past the grid edge {half_span:e} rad")]
    TruncatedPeak { center: f64, width: f64, half_span: f64 },

    #[error("invalid peak: {0}")]
    InvalidPeak(String),

    #[error("shape does not fit inside the {nx}x{ny} grid: {detail}")]
    ShapeOutOfBounds { nx: usize, ny: usize, detail: String },

    #[error("unknown strain preset `{0}`")]
    UnknownPreset(String),

    #[error("voxel ({i}, {j}) lies outside the sample support")]
    OutsideSupport { i: usize, j: usize },

    #[error("geometry mismatch: {0}")]
    GeometryMismatch(String),

    #[error("rotation angles are not uniformly spaced")]
    NonUniformAngles,

    #[error("validity masks of the two sinograms disagree")]
    MaskMismatch,

    #[error("intensity reconstruction at voxel ({i}, {j}) is below the division floor")]
    DivisionFloor { i: usize, j: usize },

    #[error("no voxels left after eroding the support by {erosion} voxels")]
    EmptyInterior { erosion: usize },

    #[error("need at least two valid samples, got {0}")]
    TooFewSamples(usize),

    #[error("zero variance in correlation input")]
    ZeroVariance,

    #[error("{}:{line}: {message}", path.display())]
    Config {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("raster {}: {message}", path.display())]
    Raster { path: PathBuf, message: String },

    #[error("pgm {}: {message}", path.display())]
    Pgm { path: PathBuf, message: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A mesh file could not be parsed. `location` is a line number for text
    /// formats and a byte offset for binary ones.
    #[error("{path}: {location}: {message}")]
    MeshParse {
        path: PathBuf,
        location: Location,
        message: String,
    },

    #[error("{0}: mesh has no triangles")]
    EmptyMesh(PathBuf),

    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("invalid lidar spec: {}", .0.join("; "))]
    InvalidSpec(Vec<String>),

    #[error("invalid placement rules: {}", .0.join("; "))]
    InvalidRules(Vec<String>),

    #[error("asset library: {0}")]
    AssetLibrary(String),

    #[error("placement failed for {class} instance {instance} after {attempts} attempts")]
    PlacementFailed {
        class: String,
        instance: usize,
        attempts: usize,
    },

    #[error("scene {index}: {source}")]
    Scene {
        index: u64,
        #[source]
        source: Box<Error>,
    },

    /// Corrupt labeled point cloud file, with the byte offset of the fault.
    #[error("{path}: byte {offset}: {message}")]
    CorruptLpc {
        path: PathBuf,
        offset: u64,
        message: String,
    },

    #[error("invalid point cloud: {0}")]
    InvalidCloud(String),

    #[error("colormap has no entry for label {label} ({name})")]
    UnknownColor { label: u16, name: String },

    #[error("invalid mix spec: {0}")]
    InvalidMix(String),

    #[error("icp: only {found} correspondences at iteration {iteration}")]
    TooFewCorrespondences { iteration: usize, found: usize },

    #[error("icp: {0}")]
    Registration(String),

    #[error("registration failed at frame {frame}: {source}")]
    FrameRegistration {
        frame: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}:{line}: {message}")]
    TextFormat {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("label mismatch: {0}")]
    Labels(String),

    #[error("worker pool: {0}")]
    ThreadPool(String),

    #[error("json {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Location {
    Line(usize),
    Byte(u64),
}

impl std::fmt::Display for Location {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Location::Line(l) => write!(f, "line {l}"),
            Location::Byte(b) => write!(f, "byte {b}"),
        }
    }
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

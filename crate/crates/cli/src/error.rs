use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad command line, config file or referenced configuration input.
    #[error("{0}")]
    Config(String),

    #[error("{0}")]
    Runtime(String),

    #[error(transparent)]
    Core(#[from] lidarforge::Error),
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn config(e: impl std::fmt::Display) -> CliError {
        CliError::Config(e.to_string())
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind() {
            "config" => 2,
            _ => 1,
        }
    }

    pub fn kind(&self) -> &'static str {
        use lidarforge::Error as E;
        match self {
            CliError::Config(_) => "config",
            CliError::Runtime(_) => "runtime",
            CliError::Core(e) => match e {
                E::InvalidSpec(_) | E::InvalidRules(_) | E::InvalidMix(_) | E::AssetLibrary(_) => "config",
                E::Io { .. } => "io",
                E::MeshParse { .. } | E::EmptyMesh(_) => "mesh",
                E::CorruptLpc { .. } | E::InvalidCloud(_) => "cloud",
                E::PlacementFailed { .. } | E::Scene { .. } => "placement",
                E::TooFewCorrespondences { .. } | E::Registration(_) | E::FrameRegistration { .. } => "registration",
                _ => "runtime",
            },
        }
    }

    /// Single-line JSON diagnostic.
    pub fn to_json_line(&self) -> String {
        serde_json::json!({
            "status": "error",
            "kind": self.kind(),
            "exit_code": self.exit_code(),
            "message": self.to_string(),
        })
        .to_string()
    }
}

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// A latent coordinate, identified by 1-based item and time indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Coordinate {
    pub item: usize,
    pub time: usize,
}

impl std::fmt::Display for Coordinate {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "(item {}, time {})", self.item, self.time)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("invalid cut points: {0}")]
    InvalidCuts(String),
    #[error("invalid data: {0}")]
    InvalidData(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("probability {0} is outside (0, 1)")]
    ProbabilityOutOfRange(f64),
    #[error("correlation {0} is too close to +/-1")]
    CorrelationOutOfRange(f64),
    #[error("empty truncation interval ({lo}, {hi})")]
    EmptyInterval { lo: f64, hi: f64 },
    #[error("covariance matrix is not positive definite (minimum eigenvalue {0:e})")]
    NotPositiveDefinite(f64),
    #[error("starting point lies outside the truncation box at coordinate {0}")]
    StartOutsideBox(usize),
    #[error("undefined correlation: one of the variables is constant")]
    UndefinedCorrelation,
    #[error("undefined correlation between {0} and {1}: one of the variables is constant")]
    UndefinedPairCorrelation(Coordinate, Coordinate),
    #[error("incomplete panel, missing (subject, item, time) cells: {}", format_missing(.0))]
    IncompletePanel(Vec<(i64, usize, usize)>),
    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("latent draw outside its truncation box at subject {subject}, coordinate {coordinate}")]
    LatentOutsideBox { subject: usize, coordinate: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by malformed or inconsistent user input.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidParams(_)
                | Error::InvalidCuts(_)
                | Error::InvalidData(_)
                | Error::InvalidConfig(_)
                | Error::Dimension(_)
                | Error::IncompletePanel(_)
                | Error::Parse { .. }
                | Error::Io(_)
                | Error::Csv(_)
                | Error::Json(_)
        )
    }
}

fn format_missing(cells: &[(i64, usize, usize)]) -> String {
    const SHOWN: usize = 20;
    let mut out: Vec<String> = cells
        .iter()
        .take(SHOWN)
        .map(|(s, j, t)| format!("({s}, {j}, {t})"))
        .collect();
    if cells.len() > SHOWN {
        out.push(format!("... {} more", cells.len() - SHOWN));
    }
    out.join(", ")
}

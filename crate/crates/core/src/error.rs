use thiserror::Error;

/// Errors raised anywhere in the library.
///
/// The variants are grouped into three families that the command-line front
/// end maps onto exit codes: configuration problems (2), data problems (3)
/// and numerical problems (4).
#[derive(Debug, Error)]
pub enum Error {
    /// Matrix or vector shapes do not fit together, or exceed the size cap.
    #[error("dimension error: {0}")]
    Dimension(String),

    /// Argument outside the domain of a function (e.g. negative χ² quantile).
    #[error("domain error: {0}")]
    Domain(String),

    /// A decomposition failed or produced unusable output.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// Invalid layout, hypothesis, configuration or command-line request.
    #[error("specification error: {0}")]
    Spec(String),

    /// The hypothesis matrix has rank zero, so there is nothing to test.
    #[error("degenerate hypothesis '{0}': the effect has no contrast (rank 0)")]
    DegenerateHypothesis(String),

    /// A cell has fewer than two observations, so its covariance is undefined.
    #[error("insufficient data in cell {cell}: {n} observation(s), at least 2 required")]
    InsufficientData { cell: String, n: usize },

    /// Malformed input data.
    #[error("data error{}: {message}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Data { line: Option<usize>, message: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub(crate) fn spec(msg: impl Into<String>) -> Self {
        Error::Spec(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    pub(crate) fn data(line: Option<usize>, msg: impl Into<String>) -> Self {
        Error::Data {
            line,
            message: msg.into(),
        }
    }

    /// Prefixes the message with `ctx`, keeping the variant (and exit code).
    pub fn context(self, ctx: impl AsRef<str>) -> Self {
        let ctx = ctx.as_ref();
        match self {
            Error::Dimension(m) => Error::Dimension(format!("{ctx}: {m}")),
            Error::Domain(m) => Error::Domain(format!("{ctx}: {m}")),
            Error::Numerical(m) => Error::Numerical(format!("{ctx}: {m}")),
            Error::Spec(m) => Error::Spec(format!("{ctx}: {m}")),
            Error::DegenerateHypothesis(m) => Error::DegenerateHypothesis(format!("{ctx}: {m}")),
            Error::InsufficientData { cell, n } => Error::InsufficientData {
                cell: format!("{cell} ({ctx})"),
                n,
            },
            Error::Data { line, message } => Error::Data {
                line,
                message: format!("{ctx}: {message}"),
            },
            Error::Io(e) => Error::Io(std::io::Error::new(e.kind(), format!("{ctx}: {e}"))),
        }
    }

    /// Process exit code used by the command-line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Spec(_) | Error::DegenerateHypothesis(_) => 2,
            Error::InsufficientData { .. } | Error::Data { .. } | Error::Io(_) => 3,
            Error::Dimension(_) | Error::Domain(_) | Error::Numerical(_) => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

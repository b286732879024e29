use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("shape error in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: alloc::vec::Vec<usize>,
        rhs: alloc::vec::Vec<usize>,
    },
    #[error("generation failure: no valid receiver position for link {link} after {attempts} attempts")]
    GenerationFailure { link: usize, attempts: usize },
    #[error("numerical failure at iteration {iteration}: {what}")]
    Numerical { iteration: usize, what: String },
    #[error("resource limit exceeded: {0}")]
    ResourceLimit(String),
    #[error("undefined ratio: reference utility is zero")]
    UndefinedRatio,
    #[error("degenerate loss: {0}")]
    DegenerateLoss(String),
    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),
    #[error("dataset too small: need {needed} snapshots, have {available}")]
    DatasetTooSmall { needed: usize, available: usize },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn numerical(iteration: usize, what: impl Into<String>) -> Self {
        Error::Numerical {
            iteration,
            what: what.into(),
        }
    }
}

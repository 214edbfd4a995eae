use alloc::string::String;

/// Errors raised by the algorithmic core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Input(String),

    #[error("all rows are identical; the median heuristic bandwidth is zero")]
    DegenerateBandwidth,

    #[error("naive enumeration is too large for n = {n}; the largest supported n is {max_n}")]
    TooLarge { n: usize, max_n: usize },

    #[error("composed delta {0} is not below 1")]
    DeltaOverflow(f64),

    #[error("the graph contains a cycle")]
    Cycle,
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn input<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Input(msg.into()))
}

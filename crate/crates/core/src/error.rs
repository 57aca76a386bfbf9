use thiserror::Error;

pub type Result<T, E = SqzError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum SqzError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("numeric failure at t = {time:e} s: {what}")]
    Numeric { time: f64, what: String },

    #[error("sequencing error: earlier block ends at {earlier_end:e} s, later block starts at {later_start:e} s")]
    Sequencing { earlier_end: f64, later_start: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("target {target} not bracketed: achieved range [{low}, {high}]")]
    Range { target: f64, low: f64, high: f64 },
}

impl SqzError {
    pub fn config(msg: impl Into<String>) -> Self {
        SqzError::Config(msg.into())
    }

    pub fn numeric(time: f64, what: impl Into<String>) -> Self {
        SqzError::Numeric {
            time,
            what: what.into(),
        }
    }

    pub(crate) fn check_len(context: &'static str, expected: usize, got: usize) -> Result<()> {
        if expected == got {
            Ok(())
        } else {
            Err(SqzError::Dimension {
                context,
                expected,
                got,
            })
        }
    }
}

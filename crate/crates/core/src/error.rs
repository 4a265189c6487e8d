use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("non-finite symbol value at mode {mode:?}, eta {eta:?}")]
    NonFinite { mode: Vec<i64>, eta: Vec<f64> },
    #[error("aliasing guard violated: t = {t}, M = {m_max}, N_v = {n_v}, V = {v_max} (need t*M < {limit})")]
    Aliasing {
        t: f64,
        m_max: usize,
        n_v: usize,
        v_max: f64,
        limit: f64,
    },
    #[error("stability bound violated: dt = {dt} exceeds {max_dt}; suggested dt = {suggested}")]
    Stability { dt: f64, max_dt: f64, suggested: f64 },
    #[error("too few shells above floor: {} usable (radii {usable:?}), need 8", usable.len())]
    TooFewShells { usable: Vec<f64> },
    #[error("parameter out of range: {name} = {value} ({reason})")]
    OutOfRange {
        name: &'static str,
        value: f64,
        reason: String,
    },
    #[error("budget exceeded: {0}")]
    Budget(String),
    #[error("operator/grid mismatch: expected checksum {expected}, found {found}")]
    Mismatch { expected: String, found: String },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("format: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;

//! Minimal stderr logger controlled by `EQLAB_LOG={error|info|debug}`.

use std::sync::OnceLock;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Level {
    Error,
    Info,
    Debug,
}

pub fn level() -> Level {
    static LEVEL: OnceLock<Level> = OnceLock::new();
    *LEVEL.get_or_init(|| match std::env::var("EQLAB_LOG").as_deref() {
        Ok("debug") => Level::Debug,
        Ok("error") => Level::Error,
        Ok("info") | Err(_) => Level::Info,
        Ok(other) => {
            eprintln!("eqlab: unknown EQLAB_LOG value '{other}', using 'info'");
            Level::Info
        }
    })
}

macro_rules! log_error {
    ($($arg:tt)*) => {
        eprintln!("eqlab error: {}", format!($($arg)*))
    };
}

macro_rules! log_info {
    ($($arg:tt)*) => {
        if crate::logging::level() >= crate::logging::Level::Info {
            eprintln!("eqlab: {}", format!($($arg)*))
        }
    };
}

macro_rules! log_debug {
    ($($arg:tt)*) => {
        if crate::logging::level() >= crate::logging::Level::Debug {
            eprintln!("eqlab debug: {}", format!($($arg)*))
        }
    };
}

pub(crate) use {log_debug, log_error, log_info};

use std::path::PathBuf;

use thiserror::Error;

/// Failures surfaced by the harness, grouped by CLI exit code.
#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("refusing to overwrite existing file {}", .0.display())]
    Exists(PathBuf),

    #[error("{} shard(s) failed: {}", .0.len(), describe_shards(.0))]
    Shards(Vec<(usize, pie_core::Error)>),

    #[error(transparent)]
    Core(#[from] pie_core::Error),
}

fn describe_shards(failures: &[(usize, pie_core::Error)]) -> String {
    failures
        .iter()
        .map(|(j, e)| format!("shard {j}: {e}"))
        .collect::<Vec<_>>()
        .join("; ")
}

fn core_exit_code(e: &pie_core::Error) -> i32 {
    use pie_core::Error::*;
    match e {
        Config(_) | InvalidHyperparameter(_) | InvalidPartition(_) | InvalidLevel(_) | Grid(_) => 2,
        InvalidData(_) | EmptyShard | Shape(_) => 3,
        _ => 4,
    }
}

impl HarnessError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.into(),
            source,
        }
    }

    /// 2 for configuration problems, 3 for data and file problems, 4 for
    /// numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            HarnessError::Data(_) | HarnessError::Io { .. } | HarnessError::Exists(_) => 3,
            HarnessError::Numeric(_) => 4,
            HarnessError::Shards(failures) => failures.iter().map(|(_, e)| core_exit_code(e)).max().unwrap_or(4),
            HarnessError::Core(e) => core_exit_code(e),
        }
    }
}

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(HarnessError::Config("x".into()).exit_code(), 2);
        assert_eq!(HarnessError::Data("x".into()).exit_code(), 3);
        assert_eq!(HarnessError::Exists("a".into()).exit_code(), 3);
        assert_eq!(HarnessError::Numeric("x".into()).exit_code(), 4);
        assert_eq!(HarnessError::from(pie_core::Error::InvalidLevel(2.0)).exit_code(), 2);
        assert_eq!(HarnessError::from(pie_core::Error::EmptyShard).exit_code(), 3);
        assert_eq!(HarnessError::from(pie_core::Error::DegenerateSample).exit_code(), 4);
    }

    #[test]
    fn shard_failures_are_listed() {
        let e = HarnessError::Shards(vec![
            (2, pie_core::Error::InvalidInit),
            (5, pie_core::Error::SingularMatrix("P".into())),
        ]);
        let msg = e.to_string();
        assert!(msg.starts_with("2 shard(s) failed"));
        assert!(msg.contains("shard 2") && msg.contains("shard 5"));
        assert_eq!(e.exit_code(), 4);
    }
}

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use polyfilter::kv::KvFile;
use polyfilter::Error;

pub const DEFAULT_SEED: u64 = 2024;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Core(Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Core(e) => match e {
                Error::Parameter(_) | Error::Format(_) | Error::Fit(_) => 2,
                Error::Capacity(_) => 4,
                _ => 3,
            },
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "configuration: {msg}"),
            CliError::Core(Error::Capacity(msg)) => {
                write!(
                    f,
                    "{msg} (try `--storage blocked --block-rows N` or a larger --memory-budget-mb)"
                )
            }
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

/// Config file values plus the global flags. Flags win over the file.
pub struct Context {
    kv: KvFile,
    pub threads: Option<usize>,
    pub seed: u64,
    pub out: PathBuf,
}

impl Context {
    pub fn load(
        config: Option<&Path>,
        threads: Option<usize>,
        seed: Option<u64>,
        out: Option<PathBuf>,
    ) -> Result<Self, CliError> {
        let kv = match config {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| {
                    CliError::Config(format!("cannot read {}: {e}", path.display()))
                })?;
                KvFile::parse(&text)
                    .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
            }
            None => KvFile::new(),
        };
        let mut ctx = Context {
            kv,
            threads: None,
            seed: DEFAULT_SEED,
            out: PathBuf::from("out"),
        };
        ctx.threads = ctx.value(threads, "threads")?;
        if ctx.threads == Some(0) {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        ctx.seed = ctx.value_or(seed, "seed", DEFAULT_SEED)?;
        ctx.out = ctx.value_or(out, "out", PathBuf::from("out"))?;
        Ok(ctx)
    }

    pub fn install_thread_pool(&self) -> Result<(), CliError> {
        if let Some(n) = self.threads {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
        }
        Ok(())
    }

    pub fn value<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>, CliError> {
        if flag.is_some() {
            return Ok(flag);
        }
        self.kv
            .get_parsed(key)
            .map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn value_or<T: FromStr>(
        &self,
        flag: Option<T>,
        key: &str,
        default: T,
    ) -> Result<T, CliError> {
        Ok(self.value(flag, key)?.unwrap_or(default))
    }

    pub fn switch(&self, flag: bool, key: &str) -> Result<bool, CliError> {
        Ok(flag || self.value::<bool>(None, key)?.unwrap_or(false))
    }

    /// An input path that must exist.
    pub fn input(&self, flag: Option<PathBuf>, key: &str) -> Result<Option<PathBuf>, CliError> {
        let path = self.value(flag, key)?;
        if let Some(p) = &path {
            if !p.exists() {
                return Err(CliError::Config(format!(
                    "{key}: {} does not exist",
                    p.display()
                )));
            }
        }
        Ok(path)
    }

    pub fn out_dir(&self) -> Result<&Path, CliError> {
        fs::create_dir_all(&self.out)
            .map_err(|e| CliError::Config(format!("cannot create {}: {e}", self.out.display())))?;
        Ok(&self.out)
    }
}

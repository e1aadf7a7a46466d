//! Evaluation backends. Work over an index range is cut into fixed chunks
//! of [`CHUNK`] indices; reductions sum inside each chunk in index order and
//! then combine chunk results in chunk order, so every result is bitwise
//! identical for any worker count.

use std::ops::Range;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::kernel::EvalError;

pub const CHUNK: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BackendKind {
    Serial,
    Parallel { threads: usize },
    /// Extension point for device offload; not implemented.
    Accelerator,
}

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("worker count must be positive")]
    NoWorkers,
    #[error("failed to start worker pool: {0}")]
    Pool(String),
    #[error("the accelerator backend is not available in this build")]
    Unsupported,
}

#[derive(Clone)]
pub struct Backend {
    kind: BackendKind,
    pool: Option<Arc<rayon::ThreadPool>>,
}

impl std::fmt::Debug for Backend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Backend").field("kind", &self.kind).finish()
    }
}

fn panic_message(e: Box<dyn std::any::Any + Send>) -> EvalError {
    let msg = e
        .downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| e.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "unknown panic".to_string());
    EvalError::Panic(msg)
}

fn chunk_range(c: usize, n: usize) -> Range<usize> {
    c * CHUNK..((c + 1) * CHUNK).min(n)
}

impl Backend {
    pub fn serial() -> Self {
        Backend { kind: BackendKind::Serial, pool: None }
    }

    pub fn parallel(threads: usize) -> Result<Self, BackendError> {
        if threads == 0 {
            return Err(BackendError::NoWorkers);
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| BackendError::Pool(e.to_string()))?;
        Ok(Backend { kind: BackendKind::Parallel { threads }, pool: Some(Arc::new(pool)) })
    }

    pub fn new(kind: BackendKind) -> Result<Self, BackendError> {
        match kind {
            BackendKind::Serial => Ok(Self::serial()),
            BackendKind::Parallel { threads } => Self::parallel(threads),
            BackendKind::Accelerator => Err(BackendError::Unsupported),
        }
    }

    pub fn kind(&self) -> BackendKind {
        self.kind
    }

    /// Runs `f` on every chunk of `0..n`. Chunk `c` receives the indices
    /// `c*CHUNK..` and the matching `stride`-wide slice of `out`.
    pub fn map_chunks<W, F>(&self, n: usize, out: &mut [f64], stride: usize, ws: &mut W, f: F) -> Result<(), EvalError>
    where
        W: Clone + Send + Sync,
        F: Fn(&mut W, Range<usize>, &mut [f64]) -> Result<(), EvalError> + Sync,
    {
        if n == 0 || stride == 0 {
            return Ok(());
        }
        debug_assert_eq!(out.len(), n * stride);
        let result = catch_unwind(AssertUnwindSafe(|| match &self.pool {
            None => {
                for (c, buf) in out.chunks_mut(CHUNK * stride).enumerate() {
                    f(ws, chunk_range(c, n), buf)?;
                }
                Ok(())
            }
            Some(pool) => {
                let proto: &W = ws;
                pool.install(|| {
                    out.par_chunks_mut(CHUNK * stride)
                        .enumerate()
                        .try_for_each_init(|| proto.clone(), |w, (c, buf)| f(w, chunk_range(c, n), buf))
                })
            }
        }));
        result.unwrap_or_else(|e| Err(panic_message(e)))
    }

    /// Sums `f` over the chunks of `0..n`, combining chunk partials
    /// sequentially in chunk order.
    pub fn reduce_chunks<W, F>(&self, n: usize, ws: &mut W, f: F) -> Result<f64, EvalError>
    where
        W: Clone + Send + Sync,
        F: Fn(&mut W, Range<usize>) -> Result<f64, EvalError> + Sync,
    {
        let chunks = n.div_ceil(CHUNK);
        let result = catch_unwind(AssertUnwindSafe(|| match &self.pool {
            None => {
                let mut acc = 0.0;
                for c in 0..chunks {
                    acc += f(ws, chunk_range(c, n))?;
                }
                Ok(acc)
            }
            Some(pool) => {
                let proto: &W = ws;
                let partials: Vec<f64> = pool.install(|| {
                    (0..chunks)
                        .into_par_iter()
                        .map_init(|| proto.clone(), |w, c| f(w, chunk_range(c, n)))
                        .collect::<Result<Vec<f64>, EvalError>>()
                })?;
                let mut acc = 0.0;
                for p in partials {
                    acc += p;
                }
                Ok(acc)
            }
        }));
        result.unwrap_or_else(|e| Err(panic_message(e)))
    }
}

use std::path::PathBuf;

use aeronav_core::datastore;
use aeronav_core::metrics::TrajectoryLog;
use tokio::sync::{mpsc, oneshot};

use crate::ApiError;

type Request = (TrajectoryLog, oneshot::Sender<Result<(), String>>);

/// Single writer for the corpus log files. Appends are applied in arrival
/// order and acknowledged once on disk.
#[derive(Clone)]
pub struct LogWriter {
    tx: mpsc::Sender<Request>,
}

impl LogWriter {
    pub fn spawn(corpus_dir: PathBuf) -> Self {
        let (tx, mut rx) = mpsc::channel::<Request>(64);
        tokio::spawn(async move {
            while let Some((log, ack)) = rx.recv().await {
                let dir = corpus_dir.clone();
                let res = tokio::task::spawn_blocking(move || datastore::append_log(&dir, &log))
                    .await
                    .map_err(|e| e.to_string())
                    .and_then(|r| r.map_err(|e| e.to_string()));
                let _ = ack.send(res);
            }
        });
        Self { tx }
    }

    pub async fn append(&self, log: TrajectoryLog) -> Result<(), ApiError> {
        let (ack, done) = oneshot::channel();
        self.tx
            .send((log, ack))
            .await
            .map_err(|_| ApiError::Internal("log writer stopped".into()))?;
        done.await
            .map_err(|_| ApiError::Internal("log writer dropped the request".into()))?
            .map_err(ApiError::Internal)
    }
}

//! Runs an external capture command and snapshots its trace output.
//!
//! The command is a shell template containing the `{output}` placeholder. It
//! is expected to write a canonical-format trace to that path while it runs.
//! Every snapshot interval the current file is copied aside, so the growth of
//! the mined set can be followed after the fact.

use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use serde::Serialize;
use thiserror::Error;

pub const OUTPUT_PLACEHOLDER: &str = "{output}";

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CaptureSpec {
    pub command: String,
    pub duration: Duration,
    pub snapshot_interval: Duration,
}

#[derive(Debug, Error)]
pub enum CaptureError {
    #[error("capture command must contain the {OUTPUT_PLACEHOLDER} placeholder")]
    MissingPlaceholder,
    #[error("capture duration must be positive")]
    ZeroDuration,
    #[error("snapshot interval must be positive")]
    ZeroInterval,
    #[error("could not start capture command: {0}")]
    Spawn(std::io::Error),
    #[error("capture command exited with {status}: {stderr}")]
    Failed { status: String, stderr: String },
    #[error("capture produced no snapshots")]
    NoSnapshots,
    #[error("snapshot {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

fn shell_quote(path: &Path) -> String {
    format!("'{}'", path.display().to_string().replace('\'', r"'\''"))
}

/// Snapshot offsets from the start: every interval, with the last one
/// clamped to the total duration.
fn snapshot_times(duration: Duration, interval: Duration) -> Vec<Duration> {
    let mut times = Vec::new();
    let mut t = interval;
    while t < duration {
        times.push(t);
        t += interval;
    }
    times.push(duration);
    times
}

/// Runs the capture and returns the snapshot paths in time order.
///
/// Snapshots are written to `work_dir` as `snapshot-0001.trace`, ... The
/// command is stopped when the duration elapses; exiting on its own with a
/// non-zero status is an error.
pub fn capture_adapter(spec: &CaptureSpec, work_dir: &Path) -> Result<Vec<PathBuf>, CaptureError> {
    if !spec.command.contains(OUTPUT_PLACEHOLDER) {
        return Err(CaptureError::MissingPlaceholder);
    }
    if spec.duration.is_zero() {
        return Err(CaptureError::ZeroDuration);
    }
    if spec.snapshot_interval.is_zero() {
        return Err(CaptureError::ZeroInterval);
    }
    let io_err = |path: &Path| {
        let path = path.to_owned();
        move |source| CaptureError::Io { path, source }
    };
    std::fs::create_dir_all(work_dir).map_err(io_err(work_dir))?;
    let live = work_dir.join("capture.trace");
    let command = spec.command.replace(OUTPUT_PLACEHOLDER, &shell_quote(&live));

    let mut shell = Command::new("sh");
    shell
        .arg("-c")
        .arg(&command)
        .stdin(Stdio::null())
        .stdout(Stdio::null())
        .stderr(Stdio::piped());
    #[cfg(unix)]
    {
        use std::os::unix::process::CommandExt;
        shell.process_group(0);
    }
    let mut child = shell.spawn().map_err(CaptureError::Spawn)?;
    let mut stderr_pipe = child.stderr.take().expect("stderr is piped");
    let stderr_reader = thread::spawn(move || {
        let mut buf = String::new();
        let _ = stderr_pipe.read_to_string(&mut buf);
        buf
    });

    let start = Instant::now();
    let mut snapshots = Vec::new();
    let mut exited = None;
    for (i, at) in snapshot_times(spec.duration, spec.snapshot_interval).into_iter().enumerate() {
        if let Some(wait) = at.checked_sub(start.elapsed()) {
            thread::sleep(wait);
        }
        if exited.is_none() {
            exited = child.try_wait().map_err(CaptureError::Spawn)?;
        }
        if let Some(status) = exited.filter(|s| !s.success()) {
            let stderr = stderr_reader.join().unwrap_or_default();
            return Err(CaptureError::Failed {
                status: status.to_string(),
                stderr: stderr.trim().to_owned(),
            });
        }
        if live.exists() {
            let snap = work_dir.join(format!("snapshot-{:04}.trace", i + 1));
            std::fs::copy(&live, &snap).map_err(io_err(&snap))?;
            snapshots.push(snap);
        }
    }

    if exited.is_none() {
        stop(&mut child);
    }
    // Orphaned grandchildren may still hold the pipe; don't wait on them.
    drop(stderr_reader);

    if snapshots.is_empty() {
        return Err(CaptureError::NoSnapshots);
    }
    Ok(snapshots)
}

fn stop(child: &mut Child) {
    #[cfg(unix)]
    {
        // The command runs in its own process group; take the whole group down.
        let pgid = child.id() as i32;
        // SAFETY: killpg only sends a signal to the group we created.
        unsafe {
            libc::killpg(pgid, libc::SIGKILL);
        }
    }
    let _ = child.kill();
    let _ = child.wait();
}

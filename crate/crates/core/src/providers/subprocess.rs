//! External model invocation over the file-path protocol:
//! `<command> --task <task> [--image <path>] [--crop r0,c0,r1,c1] [--text <s>] --out <path>`.

use std::path::Path;
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use crate::error::{Error, Result};
use crate::imaging::BBox;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Segment,
    Features,
    Embed,
}

impl Task {
    fn as_str(self) -> &'static str {
        match self {
            Task::Segment => "segment",
            Task::Features => "features",
            Task::Embed => "embed",
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Request<'a> {
    pub image: Option<&'a Path>,
    pub crop: Option<BBox>,
    pub text: Option<&'a str>,
}

/// Build the argument list that follows the command's own argv.
pub fn protocol_args(task: Task, req: &Request<'_>, out: &Path) -> Vec<String> {
    let mut args = vec!["--task".to_string(), task.as_str().to_string()];
    if let Some(image) = req.image {
        args.push("--image".into());
        args.push(image.display().to_string());
    }
    if let Some(b) = req.crop {
        args.push("--crop".into());
        args.push(format!("{},{},{},{}", b.row0, b.col0, b.row1, b.col1));
    }
    if let Some(text) = req.text {
        args.push("--text".into());
        args.push(text.to_string());
    }
    args.push("--out".into());
    args.push(out.display().to_string());
    args
}

/// Run the command and wait for it; succeeds only on exit code 0 within the
/// timeout. The caller parses `out` afterwards.
pub fn invoke(
    command: &[String],
    timeout: Duration,
    task: Task,
    req: &Request<'_>,
    out: &Path,
) -> Result<()> {
    let (program, base_args) = command
        .split_first()
        .ok_or_else(|| Error::Subprocess("empty command".into()))?;
    let stderr_file = tempfile::tempfile().map_err(|e| Error::Subprocess(e.to_string()))?;
    let mut child = Command::new(program)
        .args(base_args)
        .args(protocol_args(task, req, out))
        .stdin(Stdio::null())
        .stdout(Stdio::null())
        .stderr(
            stderr_file
                .try_clone()
                .map_err(|e| Error::Subprocess(e.to_string()))?,
        )
        .spawn()
        .map_err(|e| Error::Subprocess(format!("spawn {program}: {e}")))?;

    let start = Instant::now();
    let status = loop {
        match child.try_wait() {
            Ok(Some(status)) => break status,
            Ok(None) if start.elapsed() >= timeout => {
                let _ = child.kill();
                let _ = child.wait();
                return Err(Error::Subprocess(format!(
                    "{program} timed out after {:.1}s",
                    timeout.as_secs_f64()
                )));
            }
            Ok(None) => std::thread::sleep(Duration::from_millis(5)),
            Err(e) => return Err(Error::Subprocess(format!("wait {program}: {e}"))),
        }
    };
    if !status.success() {
        let mut stderr_file = stderr_file;
        let mut msg = String::new();
        use std::io::{Read, Seek};
        let _ = stderr_file.rewind();
        let _ = stderr_file.take(4096).read_to_string(&mut msg);
        return Err(Error::Subprocess(format!(
            "{program} exited with {status}: {}",
            msg.trim()
        )));
    }
    Ok(())
}

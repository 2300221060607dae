//! Persistent `bash` session: working directory and environment carry over
//! between commands until the session is restarted.

use std::io::{Read, Write};
use std::os::unix::process::CommandExt;
use std::path::{Path, PathBuf};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::{Duration, Instant};

use super::exec::kill_group;

#[derive(Debug, thiserror::Error)]
pub enum ShellError {
    #[error("command timed out after {0:?}; session restarted")]
    Timeout(Duration, String),
    #[error("shell session is dead; restart it")]
    SessionDead,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShellOutput {
    pub output: String,
    pub exit_code: i32,
}

pub struct ShellSession {
    root: PathBuf,
    child: Child,
    stdin: ChildStdin,
    rx: Receiver<Vec<u8>>,
    nonce: u64,
    seq: u64,
    dead: bool,
    reaped: bool,
}

static NEXT_SESSION: AtomicU64 = AtomicU64::new(0);

impl ShellSession {
    pub fn spawn(root: &Path) -> std::io::Result<Self> {
        let mut child = Command::new("bash")
            .args(["--noprofile", "--norc"])
            .current_dir(root)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .process_group(0)
            .spawn()?;
        let mut stdout = child.stdout.take().expect("piped stdout");
        let mut stdin = child.stdin.take().expect("piped stdin");
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            let mut buf = [0u8; 8192];
            loop {
                match stdout.read(&mut buf) {
                    Ok(0) | Err(_) => break,
                    Ok(n) => {
                        if tx.send(buf[..n].to_vec()).is_err() {
                            break;
                        }
                    }
                }
            }
        });
        stdin.write_all(b"exec 2>&1\n")?;
        let nonce = (u64::from(std::process::id()) << 32) | NEXT_SESSION.fetch_add(1, Ordering::Relaxed);
        Ok(Self {
            root: root.to_path_buf(),
            child,
            stdin,
            rx,
            nonce,
            seq: 0,
            dead: false,
            reaped: false,
        })
    }

    pub fn restart(&mut self) -> std::io::Result<()> {
        self.kill();
        *self = ShellSession::spawn(&self.root.clone())?;
        Ok(())
    }

    fn kill(&mut self) {
        if !self.reaped {
            kill_group(self.child.id());
            let _ = self.child.wait();
            self.reaped = true;
        }
    }

    pub fn is_dead(&self) -> bool {
        self.dead
    }

    /// Runs one command and waits for its exit status. On timeout the
    /// session is killed and replaced with a fresh one.
    pub fn run(&mut self, command: &str, timeout: Duration) -> Result<ShellOutput, ShellError> {
        if self.dead {
            return Err(ShellError::SessionDead);
        }
        self.seq += 1;
        let marker = format!("__AVR_DONE_{:x}_{}__", self.nonce, self.seq);
        let script = format!("{{\n{command}\n}} < /dev/null\nprintf '\\n{marker} %d\\n' \"$?\"\n");
        if self.stdin.write_all(script.as_bytes()).and_then(|_| self.stdin.flush()).is_err() {
            self.dead = true;
            return Err(ShellError::SessionDead);
        }

        let deadline = Instant::now() + timeout;
        let mut buf: Vec<u8> = Vec::new();
        let needle = format!("\n{marker} ");
        loop {
            if let Some(pos) = find(&buf, needle.as_bytes()) {
                let tail = &buf[pos + needle.len()..];
                if let Some(nl) = tail.iter().position(|b| *b == b'\n') {
                    let code = String::from_utf8_lossy(&tail[..nl]).trim().parse().unwrap_or(-1);
                    let output = String::from_utf8_lossy(&buf[..pos]).into_owned();
                    return Ok(ShellOutput { output, exit_code: code });
                }
            }
            let now = Instant::now();
            if now >= deadline {
                let partial = String::from_utf8_lossy(&buf).into_owned();
                self.restart()?;
                return Err(ShellError::Timeout(timeout, partial));
            }
            match self.rx.recv_timeout(deadline - now) {
                Ok(chunk) => buf.extend_from_slice(&chunk),
                Err(RecvTimeoutError::Timeout) => {}
                Err(RecvTimeoutError::Disconnected) => {
                    self.dead = true;
                    kill_group(self.child.id());
                    let _ = self.child.wait();
                    self.reaped = true;
                    return Err(ShellError::SessionDead);
                }
            }
        }
    }
}

impl Drop for ShellSession {
    fn drop(&mut self) {
        self.kill();
    }
}

fn find(haystack: &[u8], needle: &[u8]) -> Option<usize> {
    haystack.windows(needle.len()).position(|w| w == needle)
}

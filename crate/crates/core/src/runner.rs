//! Runs the measured command: spawn, optional timeout, output capture, exit
//! status, and the stop signal for the sampler.
//!
//! On Unix the child leads its own process group so a timeout (or a
//! forwarded Ctrl-C) reaches everything it forked, and leftover group members
//! are killed once the child has been reaped.

use std::fs::File;
use std::io;
use std::path::PathBuf;
use std::process::{Child, Command, ExitStatus, Stdio};
use std::sync::mpsc;
use std::thread;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::timing::{StopKind, StopSignal};

/// Time between the polite termination request and the forced kill.
pub const KILL_GRACE: Duration = Duration::from_secs(2);

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RunSpecError {
    #[error("no command given")]
    EmptyArgv,
    #[error("command name is empty")]
    EmptyProgram,
}

/// Where the child's stdout and stderr go.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum ChildOutput {
    /// Inherit both streams.
    #[default]
    Inherit,
    /// Send the child's stdout to our stderr, keeping our stdout clean for
    /// a streamed trace.
    StdoutToStderr,
    /// Write both streams, interleaved, to a file.
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunSpec {
    argv: Vec<String>,
    pub max_execution: Option<Duration>,
    pub output: ChildOutput,
    /// Relay SIGINT, SIGTERM and SIGHUP to the child's process group.
    pub forward_signals: bool,
}

impl RunSpec {
    pub fn new(argv: Vec<String>) -> Result<Self, RunSpecError> {
        match argv.first() {
            None => Err(RunSpecError::EmptyArgv),
            Some(p) if p.is_empty() => Err(RunSpecError::EmptyProgram),
            Some(_) => Ok(Self {
                argv,
                max_execution: None,
                output: ChildOutput::Inherit,
                forward_signals: false,
            }),
        }
    }

    /// `0` means no limit.
    pub fn with_max_execution_s(mut self, seconds: u64) -> Self {
        self.max_execution = (seconds > 0).then(|| Duration::from_secs(seconds));
        self
    }

    pub fn with_output(mut self, output: ChildOutput) -> Self {
        self.output = output;
        self
    }

    pub fn argv(&self) -> &[String] {
        &self.argv
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpawnErrorKind {
    NotFound,
    NotExecutable,
    /// Anything else, including failure to open the command-output file.
    Other,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RunOutcome {
    Exited(i32),
    /// Killed by a signal it did not catch (Unix).
    Signaled(i32),
    TimedOut,
    SpawnError { kind: SpawnErrorKind, message: String },
}

/// Process exit codes. A child that exits normally passes its own code
/// through; the rest follow `timeout(1)` and shell conventions.
pub mod exit_code {
    pub const USAGE: i32 = 64;
    pub const INTERNAL: i32 = 70;
    pub const TIMEOUT: i32 = 124;
    pub const NOT_EXECUTABLE: i32 = 126;
    pub const NOT_FOUND: i32 = 127;
    pub const SIGNAL_BASE: i32 = 128;
}

impl RunOutcome {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunOutcome::Exited(c) => *c,
            RunOutcome::Signaled(s) => exit_code::SIGNAL_BASE + s,
            RunOutcome::TimedOut => exit_code::TIMEOUT,
            RunOutcome::SpawnError { kind, .. } => match kind {
                SpawnErrorKind::NotFound => exit_code::NOT_FOUND,
                SpawnErrorKind::NotExecutable => exit_code::NOT_EXECUTABLE,
                SpawnErrorKind::Other => exit_code::INTERNAL,
            },
        }
    }
}

fn classify(e: &io::Error) -> SpawnErrorKind {
    const ENOEXEC: i32 = 8;
    match e.kind() {
        io::ErrorKind::NotFound => SpawnErrorKind::NotFound,
        io::ErrorKind::PermissionDenied => SpawnErrorKind::NotExecutable,
        _ if e.raw_os_error() == Some(ENOEXEC) => SpawnErrorKind::NotExecutable,
        _ => SpawnErrorKind::Other,
    }
}

fn outcome_of(status: ExitStatus) -> RunOutcome {
    if let Some(code) = status.code() {
        return RunOutcome::Exited(code);
    }
    #[cfg(unix)]
    {
        use std::os::unix::process::ExitStatusExt;
        if let Some(sig) = status.signal() {
            return RunOutcome::Signaled(sig);
        }
    }
    RunOutcome::Exited(exit_code::INTERNAL)
}

fn build_command(spec: &RunSpec) -> io::Result<Command> {
    let mut cmd = Command::new(&spec.argv[0]);
    cmd.args(&spec.argv[1..]).stdin(Stdio::inherit());
    match &spec.output {
        ChildOutput::Inherit => {}
        ChildOutput::StdoutToStderr => {
            cmd.stdout(Stdio::from(io::stderr()));
        }
        ChildOutput::File(path) => {
            // Both streams share one open file description, so writes land in
            // the order the child makes them.
            let f = File::create(path)?;
            cmd.stdout(f.try_clone()?).stderr(f);
        }
    }
    #[cfg(unix)]
    {
        use std::os::unix::process::CommandExt;
        cmd.process_group(0);
    }
    Ok(cmd)
}

fn spawn_error(e: io::Error, what: &str) -> RunOutcome {
    RunOutcome::SpawnError {
        kind: classify(&e),
        message: format!("{what}: {e}"),
    }
}

/// Runs the command to completion or timeout. `stop` fires `Finish` once
/// the child has been reaped, or `Abort` if it never started.
pub fn execute(spec: &RunSpec, stop: &StopSignal) -> RunOutcome {
    let outcome = run(spec);
    let kind = match outcome {
        RunOutcome::SpawnError { .. } => StopKind::Abort,
        _ => StopKind::Finish,
    };
    stop.fire(kind);
    outcome
}

fn run(spec: &RunSpec) -> RunOutcome {
    let mut cmd = match build_command(spec) {
        Ok(c) => c,
        Err(e) => {
            let what = match &spec.output {
                ChildOutput::File(p) => format!("opening {}", p.display()),
                _ => "preparing command".into(),
            };
            return RunOutcome::SpawnError {
                kind: SpawnErrorKind::Other,
                message: format!("{what}: {e}"),
            };
        }
    };
    let child = match cmd.spawn() {
        Ok(c) => c,
        Err(e) => return spawn_error(e, &spec.argv[0]),
    };
    let group = ProcessGroup::of(&child);
    let _forwarder = spec.forward_signals.then(|| group.forward_signals()).flatten();

    let (tx, rx) = mpsc::channel();
    let waiter = thread::spawn(move || {
        let mut child: Child = child;
        let _ = tx.send(child.wait());
    });

    let started = Instant::now();
    let waited = match spec.max_execution {
        None => rx.recv().map_err(|_| mpsc::RecvTimeoutError::Disconnected),
        Some(limit) => rx.recv_timeout(limit.saturating_sub(started.elapsed())),
    };
    let outcome = match waited {
        Ok(Ok(status)) => outcome_of(status),
        Ok(Err(e)) => spawn_error(e, "waiting for child"),
        Err(mpsc::RecvTimeoutError::Timeout) => {
            log::warn!(
                "command exceeded {} s; terminating it",
                spec.max_execution.unwrap_or_default().as_secs()
            );
            group.terminate();
            if rx.recv_timeout(KILL_GRACE).is_err() {
                group.kill();
                let _ = rx.recv();
            }
            RunOutcome::TimedOut
        }
        Err(mpsc::RecvTimeoutError::Disconnected) => RunOutcome::SpawnError {
            kind: SpawnErrorKind::Other,
            message: "child waiter exited unexpectedly".into(),
        },
    };
    let _ = waiter.join();
    group.kill_leftovers();
    outcome
}

#[cfg(unix)]
mod group {
    use nix::sys::signal::{killpg, Signal};
    use nix::unistd::Pid;
    use signal_hook::consts::{SIGHUP, SIGINT, SIGTERM};
    use signal_hook::iterator::{Handle, Signals};

    pub struct ProcessGroup(Pid);

    pub struct Forwarder {
        handle: Handle,
        thread: Option<std::thread::JoinHandle<()>>,
    }

    impl Drop for Forwarder {
        fn drop(&mut self) {
            self.handle.close();
            if let Some(t) = self.thread.take() {
                let _ = t.join();
            }
        }
    }

    impl ProcessGroup {
        pub fn of(child: &std::process::Child) -> Self {
            ProcessGroup(Pid::from_raw(child.id() as i32))
        }

        fn signal(&self, sig: Signal) {
            // ESRCH just means the group is already gone.
            let _ = killpg(self.0, sig);
        }

        pub fn terminate(&self) {
            self.signal(Signal::SIGTERM);
        }

        pub fn kill(&self) {
            self.signal(Signal::SIGKILL);
        }

        pub fn kill_leftovers(&self) {
            self.kill();
        }

        pub fn forward_signals(&self) -> Option<Forwarder> {
            let mut signals = match Signals::new([SIGINT, SIGTERM, SIGHUP]) {
                Ok(s) => s,
                Err(e) => {
                    log::warn!("cannot install signal forwarding: {e}");
                    return None;
                }
            };
            let handle = signals.handle();
            let pgid = self.0;
            let thread = std::thread::spawn(move || {
                for sig in signals.forever() {
                    if let Ok(sig) = Signal::try_from(sig) {
                        let _ = killpg(pgid, sig);
                    }
                }
            });
            Some(Forwarder {
                handle,
                thread: Some(thread),
            })
        }
    }
}

#[cfg(not(unix))]
mod group {
    /// `taskkill /T` walks the child's process tree; there is no graceful
    /// stage for console programs, so both steps force-kill.
    pub struct ProcessGroup(u32);

    pub struct Forwarder;

    impl ProcessGroup {
        pub fn of(child: &std::process::Child) -> Self {
            ProcessGroup(child.id())
        }

        fn taskkill(&self) {
            let _ = std::process::Command::new("taskkill")
                .args(["/F", "/T", "/PID", &self.0.to_string()])
                .stdout(std::process::Stdio::null())
                .stderr(std::process::Stdio::null())
                .status();
        }

        pub fn terminate(&self) {
            self.taskkill();
        }

        pub fn kill(&self) {
            self.taskkill();
        }

        pub fn kill_leftovers(&self) {}

        pub fn forward_signals(&self) -> Option<Forwarder> {
            None
        }
    }
}

use group::ProcessGroup;

//! Runs an [`Engine`] on its own thread behind an ordered input queue.

use std::future::Future;
use std::sync::mpsc::{self, RecvTimeoutError};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use tokio::sync::oneshot;

use super::{Command, CommandResult, Engine, EngineError, EngineState};
use crate::clock::Clock;
use crate::domain::BotId;
use crate::gateway::ChatEvent;

/// How long an API caller waits for the engine to acknowledge a command.
pub const ACK_DEADLINE: Duration = Duration::from_secs(2);

const SWEEP_INTERVAL: Duration = Duration::from_secs(1);
const MAX_BATCH: usize = 256;

type Reply = oneshot::Sender<Result<CommandResult, EngineError>>;
type ReadFn = Box<dyn FnOnce(&Engine) + Send>;

/// Called with the engine state after a batch of inputs changed it.
pub type ChangeHook = Box<dyn FnMut(&EngineState) + Send>;

enum Input {
    Command(Command, Reply),
    Event(ChatEvent),
    Read(ReadFn),
    Tick(oneshot::Sender<()>),
    Shutdown,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DispatchError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("the bot did not acknowledge the command within {} s", ACK_DEADLINE.as_secs())]
    DeadlineExceeded,
    #[error("the bot is not running")]
    Stopped,
}

/// Feeds platform events into a running engine.
#[derive(Clone)]
pub struct EventSender(mpsc::Sender<Input>);

impl EventSender {
    /// Returns false once the engine has stopped.
    pub fn send(&self, event: ChatEvent) -> bool {
        self.0.send(Input::Event(event)).is_ok()
    }
}

/// Owner of a running engine thread.
///
/// Commands, events and reads share one FIFO queue, so a read observes every
/// input enqueued before it. A timer sweeps expired surveys and dialogs
/// about once per second.
pub struct EngineHandle {
    bot_id: BotId,
    tx: mpsc::Sender<Input>,
    thread: Mutex<Option<JoinHandle<Engine>>>,
}

impl EngineHandle {
    pub fn spawn(engine: Engine, clock: Arc<dyn Clock>, on_change: Option<ChangeHook>) -> Self {
        let bot_id = engine.bot_id().clone();
        let (tx, rx) = mpsc::channel();
        let thread = std::thread::Builder::new()
            .name(format!("engine-{bot_id}"))
            .spawn(move || run(engine, rx, clock, on_change))
            .expect("spawn engine thread");
        Self {
            bot_id,
            tx,
            thread: Mutex::new(Some(thread)),
        }
    }

    pub fn bot_id(&self) -> &BotId {
        &self.bot_id
    }

    pub fn events(&self) -> EventSender {
        EventSender(self.tx.clone())
    }

    pub async fn execute(&self, cmd: Command) -> Result<CommandResult, DispatchError> {
        let (reply, rx) = oneshot::channel();
        self.tx
            .send(Input::Command(cmd, reply))
            .map_err(|_| DispatchError::Stopped)?;
        match tokio::time::timeout(ACK_DEADLINE, rx).await {
            Ok(Ok(result)) => result.map_err(DispatchError::Engine),
            Ok(Err(_)) => Err(DispatchError::Stopped),
            Err(_) => Err(DispatchError::DeadlineExceeded),
        }
    }

    /// Runs `f` on the engine thread, after everything queued before it.
    pub async fn read<T, F>(&self, f: F) -> Result<T, DispatchError>
    where
        T: Send + 'static,
        F: FnOnce(&Engine) -> T + Send + 'static,
    {
        let (reply, rx) = oneshot::channel();
        let job: ReadFn = Box::new(move |engine| {
            let _ = reply.send(f(engine));
        });
        self.tx.send(Input::Read(job)).map_err(|_| DispatchError::Stopped)?;
        match tokio::time::timeout(ACK_DEADLINE, rx).await {
            Ok(Ok(v)) => Ok(v),
            Ok(Err(_)) => Err(DispatchError::Stopped),
            Err(_) => Err(DispatchError::DeadlineExceeded),
        }
    }

    /// Closes due surveys and expires idle dialogs at the clock's current
    /// time without waiting for the periodic sweep. The sweep is queued when
    /// this is called, so it runs after everything enqueued before and ahead
    /// of anything enqueued later.
    pub fn tick(&self) -> impl Future<Output = Result<(), DispatchError>> + Send + 'static {
        let (reply, rx) = oneshot::channel();
        let sent = self.tx.send(Input::Tick(reply)).is_ok();
        async move {
            if !sent {
                return Err(DispatchError::Stopped);
            }
            match tokio::time::timeout(ACK_DEADLINE, rx).await {
                Ok(Ok(())) => Ok(()),
                Ok(Err(_)) => Err(DispatchError::Stopped),
                Err(_) => Err(DispatchError::DeadlineExceeded),
            }
        }
    }

    /// Stops the thread after it drains the queue and returns the engine.
    /// Later calls return `None`.
    pub fn shutdown(&self) -> Option<Engine> {
        let _ = self.tx.send(Input::Shutdown);
        let thread = self.thread.lock().unwrap().take()?;
        thread.join().ok()
    }
}

impl Drop for EngineHandle {
    fn drop(&mut self) {
        let _ = self.tx.send(Input::Shutdown);
    }
}

fn run(
    mut engine: Engine,
    rx: mpsc::Receiver<Input>,
    clock: Arc<dyn Clock>,
    mut on_change: Option<ChangeHook>,
) -> Engine {
    let mut last_sweep = clock.now();
    let sweep_every = chrono::Duration::from_std(SWEEP_INTERVAL).expect("fits");
    let mut stop = false;
    while !stop {
        let mut dirty = false;
        let mut next = match rx.recv_timeout(SWEEP_INTERVAL) {
            Ok(input) => Some(input),
            Err(RecvTimeoutError::Timeout) => None,
            Err(RecvTimeoutError::Disconnected) => break,
        };
        let mut handled = 0;
        while let Some(input) = next.take() {
            match input {
                Input::Command(cmd, reply) => {
                    let result = engine.execute(&cmd, clock.now());
                    dirty = true;
                    let _ = reply.send(result);
                }
                Input::Event(ev) => {
                    engine.on_event(&ev);
                    dirty = true;
                }
                Input::Read(f) => f(&engine),
                Input::Tick(reply) => {
                    let now = clock.now();
                    last_sweep = now;
                    engine.survey_timeout_sweep(now);
                    dirty = true;
                    let _ = reply.send(());
                }
                Input::Shutdown => {
                    stop = true;
                    break;
                }
            }
            handled += 1;
            if handled < MAX_BATCH {
                next = rx.try_recv().ok();
            }
        }
        let now = clock.now();
        if now - last_sweep >= sweep_every {
            last_sweep = now;
            if !engine.survey_timeout_sweep(now).is_empty() {
                dirty = true;
            }
        }
        if dirty || stop {
            if let Some(hook) = on_change.as_mut() {
                hook(engine.state());
            }
        }
    }
    engine
}

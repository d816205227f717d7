//! Simulation sessions.
//!
//! Each session owns one [`SimState`] on a dedicated worker thread; commands
//! reach it through a channel and are applied in arrival order. Frames are
//! appended to a shared history that subscribers replay at a paced rate.

use std::collections::HashMap;
use std::sync::mpsc::{self, RecvTimeoutError, TryRecvError};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use ecoforge_core::compiler::EngineProgram;
use ecoforge_core::engine::{Command, SimConfig, SimFrame, SimState, Status, TimeSeries};
use futures_util::Stream;
use serde::Serialize;
use tokio::sync::{oneshot, watch};
use tokio::time::Instant;

use crate::error::{codes, ApiError};

/// Frames the engine may run ahead of its slowest subscriber before it stops
/// stepping.
pub const FRAME_BUFFER: usize = 256;

/// Upper bound on streamed frames per second.
pub const MAX_FRAME_RATE: f64 = 20.0;

#[derive(Debug, Clone, Serialize)]
pub struct SessionInfo {
    pub session_id: String,
    pub model_id: String,
    pub status: Status,
    pub tick: u64,
    pub frames: usize,
    pub subscribers: usize,
    pub config: SimConfig,
    pub populations: Vec<String>,
    pub pools: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<ApiError>,
}

struct Data {
    status: Status,
    tick: u64,
    /// Bumped on every reset so subscribers know to start over.
    generation: u64,
    frames: Vec<SimFrame>,
    /// While paused, only frames below this index may be streamed. Stop sets
    /// it to 0, Step to the history length.
    release: usize,
    error: Option<ApiError>,
    closed: bool,
    cursors: HashMap<u64, usize>,
    next_subscriber: u64,
}

impl Data {
    fn backlogged(&self) -> bool {
        self.cursors
            .values()
            .min()
            .is_some_and(|&c| self.frames.len().saturating_sub(c) >= FRAME_BUFFER)
    }
}

struct Shared {
    data: Mutex<Data>,
    changes: watch::Sender<u64>,
}

impl Shared {
    fn notify(&self) {
        self.changes.send_modify(|v| *v = v.wrapping_add(1));
    }
}

struct Request {
    command: Command,
    reply: oneshot::Sender<Result<(), ApiError>>,
}

pub struct Session {
    pub id: String,
    pub model_id: String,
    pub config: SimConfig,
    pub populations: Vec<String>,
    pub pools: Vec<String>,
    commands: mpsc::Sender<Request>,
    shared: Arc<Shared>,
}

impl Session {
    pub fn spawn(id: String, model_id: String, prog: EngineProgram, config: SimConfig) -> Result<Arc<Self>, ApiError> {
        let state = SimState::init(&prog, &config)?;
        let shared = Arc::new(Shared {
            data: Mutex::new(Data {
                status: state.status(),
                tick: state.tick(),
                generation: 0,
                frames: vec![state.frame()],
                release: 0,
                error: None,
                closed: false,
                cursors: HashMap::new(),
                next_subscriber: 0,
            }),
            changes: watch::Sender::new(0),
        });
        let (tx, rx) = mpsc::channel();
        let worker_shared = Arc::clone(&shared);
        std::thread::Builder::new()
            .name(format!("session-{id}"))
            .spawn(move || worker(state, rx, worker_shared))
            .map_err(|e| ApiError::new(500, codes::STORAGE, format!("cannot start session worker: {e}")))?;
        Ok(Arc::new(Session {
            id,
            model_id,
            config,
            populations: prog.populations.iter().map(|p| p.id.clone()).collect(),
            pools: prog.pools.iter().map(|p| p.id.clone()).collect(),
            commands: tx,
            shared,
        }))
    }

    pub fn info(&self) -> SessionInfo {
        let d = self.shared.data.lock().unwrap();
        SessionInfo {
            session_id: self.id.clone(),
            model_id: self.model_id.clone(),
            status: d.status,
            tick: d.tick,
            frames: d.frames.len(),
            subscribers: d.cursors.len(),
            config: self.config.clone(),
            populations: self.populations.clone(),
            pools: self.pools.clone(),
            error: d.error.clone(),
        }
    }

    pub async fn command(&self, command: Command) -> Result<SessionInfo, ApiError> {
        let (reply, done) = oneshot::channel();
        self.commands
            .send(Request { command, reply })
            .map_err(|_| ApiError::session_not_found(&self.id))?;
        done.await.map_err(|_| ApiError::session_not_found(&self.id))??;
        Ok(self.info())
    }

    /// The full history as a time series, once the run has finished.
    pub fn series(&self) -> Result<TimeSeries, ApiError> {
        let d = self.shared.data.lock().unwrap();
        if let Some(e) = &d.error {
            return Err(e.clone());
        }
        if d.status != Status::Finished {
            return Err(ApiError::new(
                409,
                codes::NOT_FINISHED,
                format!("session is {:?}; the series is available once it has finished", d.status),
            )
            .subject(&self.id));
        }
        Ok(TimeSeries {
            populations: self.populations.clone(),
            pools: self.pools.clone(),
            config: self.config.clone(),
            frames: d.frames.clone(),
            status: d.status,
        })
    }

    /// Ends every open frame stream; the worker exits once the last handle
    /// is dropped.
    pub fn close(&self) {
        self.shared.data.lock().unwrap().closed = true;
        self.shared.notify();
    }

    /// Replays the frame history from index `from` and follows new frames,
    /// at most `rate` per second.
    pub fn subscribe(self: &Arc<Self>, from: usize, rate: f64) -> impl Stream<Item = StreamEvent> + Send + 'static {
        let rate = rate.clamp(f64::MIN_POSITIVE, MAX_FRAME_RATE);
        let (id, generation) = {
            let mut d = self.shared.data.lock().unwrap();
            let id = d.next_subscriber;
            d.next_subscriber += 1;
            let from = from.min(d.frames.len());
            d.cursors.insert(id, from);
            (id, d.generation)
        };
        self.shared.notify();
        let sub = Subscriber {
            session: Arc::clone(self),
            changes: self.shared.changes.subscribe(),
            id,
            cursor: from,
            generation,
            interval: Duration::from_secs_f64(1.0 / rate),
            next_at: Instant::now(),
            done: false,
        };
        futures_util::stream::unfold(sub, |mut sub| async move { sub.next().await.map(|e| (e, sub)) })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum StreamEvent {
    Frame(SimFrame),
    /// The session was reset; frames restart at tick 0.
    Reset,
    /// No more frames will follow.
    End { status: Status, error: Option<ApiError> },
}

struct Subscriber {
    session: Arc<Session>,
    changes: watch::Receiver<u64>,
    id: u64,
    cursor: usize,
    generation: u64,
    interval: Duration,
    next_at: Instant,
    done: bool,
}

enum Next {
    Emit(StreamEvent),
    Frame(SimFrame),
    Wait,
}

impl Subscriber {
    async fn next(&mut self) -> Option<StreamEvent> {
        loop {
            if self.done {
                return None;
            }
            self.changes.borrow_and_update();
            let next = {
                let mut d = self.session.shared.data.lock().unwrap();
                if d.closed {
                    self.done = true;
                    Next::Emit(StreamEvent::End {
                        status: d.status,
                        error: d.error.clone(),
                    })
                } else if d.generation != self.generation {
                    self.generation = d.generation;
                    self.cursor = 0;
                    d.cursors.insert(self.id, 0);
                    Next::Emit(StreamEvent::Reset)
                } else if self.cursor < d.frames.len() && (d.status != Status::Paused || self.cursor < d.release) {
                    Next::Frame(d.frames[self.cursor].clone())
                } else if d.status == Status::Finished || d.error.is_some() {
                    self.done = true;
                    Next::Emit(StreamEvent::End {
                        status: d.status,
                        error: d.error.clone(),
                    })
                } else {
                    Next::Wait
                }
            };
            match next {
                Next::Emit(e) => return Some(e),
                Next::Frame(frame) => {
                    tokio::time::sleep_until(self.next_at).await;
                    self.next_at = Instant::now().max(self.next_at) + self.interval;
                    let mut d = self.session.shared.data.lock().unwrap();
                    // a reset or stop may have arrived while pacing
                    if d.generation != self.generation || (d.status == Status::Paused && self.cursor >= d.release) {
                        continue;
                    }
                    self.cursor += 1;
                    d.cursors.insert(self.id, self.cursor);
                    drop(d);
                    self.session.shared.notify();
                    return Some(StreamEvent::Frame(frame));
                }
                Next::Wait => {
                    if self.changes.changed().await.is_err() {
                        self.done = true;
                    }
                }
            }
        }
    }
}

impl Drop for Subscriber {
    fn drop(&mut self) {
        if let Ok(mut d) = self.session.shared.data.lock() {
            d.cursors.remove(&self.id);
        }
        self.session.shared.notify();
    }
}

fn worker(mut state: SimState, rx: mpsc::Receiver<Request>, shared: Arc<Shared>) {
    loop {
        let (stepping, backlogged) = {
            let d = shared.data.lock().unwrap();
            (state.status() == Status::Running && d.error.is_none(), d.backlogged())
        };
        let request = if stepping && !backlogged {
            match rx.try_recv() {
                Ok(r) => Some(r),
                Err(TryRecvError::Empty) => None,
                Err(TryRecvError::Disconnected) => return,
            }
        } else if stepping {
            match rx.recv_timeout(Duration::from_millis(5)) {
                Ok(r) => Some(r),
                Err(RecvTimeoutError::Timeout) => continue,
                Err(RecvTimeoutError::Disconnected) => return,
            }
        } else {
            match rx.recv() {
                Ok(r) => Some(r),
                Err(_) => return,
            }
        };

        if let Some(Request { command, reply }) = request {
            let result = apply(&mut state, command, &shared);
            shared.notify();
            let _ = reply.send(result);
            continue;
        }

        let result = state.step();
        let mut d = shared.data.lock().unwrap();
        match result {
            Ok(Some(frame)) => d.frames.push(frame),
            Ok(None) => {}
            Err(e) => {
                tracing::warn!(error = %e, "simulation halted");
                d.error = Some(e.into());
            }
        }
        d.status = state.status();
        d.tick = state.tick();
        drop(d);
        shared.notify();
    }
}

fn apply(state: &mut SimState, command: Command, shared: &Shared) -> Result<(), ApiError> {
    let mut d = shared.data.lock().unwrap();
    if command != Command::Reset {
        if let Some(e) = &d.error {
            return Err(e.clone());
        }
    }
    let result = state.control(command);
    match result {
        Ok(frame) => {
            match command {
                Command::Reset => {
                    d.frames = vec![state.frame()];
                    d.generation += 1;
                    d.error = None;
                    d.release = 0;
                }
                Command::Step => {
                    d.frames.extend(frame);
                    d.release = d.frames.len();
                }
                Command::Stop => d.release = 0,
                Command::Start => {}
            }
            d.status = state.status();
            d.tick = state.tick();
            Ok(())
        }
        Err(e) => {
            // a failed step inside Step leaves the run unusable
            if !matches!(e, ecoforge_core::engine::EngineError::IllegalTransition { .. }) {
                d.error = Some(e.clone().into());
            }
            Err(e.into())
        }
    }
}

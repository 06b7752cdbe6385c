//! Live mode: the engine ticks on its own thread at wall-clock pace while an
//! axum listener relays driver commands in and state updates out.

use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::Sender;
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::Response;
use axum::routing::get;
use axum::Router;
use futures::{SinkExt, StreamExt};
use tokio::net::TcpListener;
use tokio::sync::{broadcast, oneshot, watch};

use tmsca_core::control::{handle_command, state_updates, Registry, ServerMessage, Session};
use tmsca_core::engine::{Command, World};
use tmsca_core::event::EventLog;
use tmsca_core::scenario::Scenario;
use tmsca_core::telemetry;

use crate::{load_scenario, write_outputs, CliError};

/// Broadcast backlog per client before it counts as lagging.
const UPDATE_BACKLOG: usize = 1024;
/// A client that cannot take a frame within this long is dropped.
const SEND_TIMEOUT: Duration = Duration::from_secs(2);
/// Longest the engine thread sleeps before rechecking the stop flag.
const IDLE_POLL: Duration = Duration::from_millis(50);

struct App {
    registry: Registry,
    commands: Sender<Command>,
    updates: broadcast::Sender<Arc<str>>,
    closing: watch::Receiver<bool>,
}

pub fn serve(path: &Path, listen: &str, log_path: &Path) -> Result<(), CliError> {
    let scenario = load_scenario(path)?;
    let registry = Registry::from_scenario(&scenario);
    if registry.is_empty() {
        return Err(CliError::Input(format!(
            "{}: no vehicle is marked drivable",
            path.display()
        )));
    }
    let runtime = tokio::runtime::Runtime::new()
        .map_err(|e| CliError::Env(format!("cannot start runtime: {e}")))?;
    let log = runtime.block_on(serve_until_interrupt(scenario, registry, listen))?;
    let report = write_outputs(log.events(), Some(log_path), None)?;
    println!("log written to {}", log_path.display());
    print!("{}", telemetry::render_text(&report));
    Ok(())
}

async fn serve_until_interrupt(
    scenario: Scenario,
    registry: Registry,
    listen: &str,
) -> Result<EventLog, CliError> {
    let listener = TcpListener::bind(listen)
        .await
        .map_err(|e| CliError::Env(format!("cannot bind {listen}: {e}")))?;
    let addr = listener
        .local_addr()
        .map_err(|e| CliError::Env(format!("cannot read bound address: {e}")))?;

    let world = World::new(&scenario);
    let (updates, _) = broadcast::channel(UPDATE_BACKLOG);
    let (closing_tx, closing) = watch::channel(false);
    let app = Arc::new(App {
        registry: registry.clone(),
        commands: world.command_sender(),
        updates: updates.clone(),
        closing,
    });

    let stop = Arc::new(AtomicBool::new(false));
    let engine = {
        let stop = Arc::clone(&stop);
        let steps = scenario.steps();
        thread::Builder::new()
            .name("engine".into())
            .spawn(move || engine_loop(world, steps, &registry, &updates, &stop))
            .map_err(|e| CliError::Env(format!("cannot start engine thread: {e}")))?
    };

    let router = Router::new()
        .route("/ws", get(upgrade))
        .with_state(Arc::clone(&app));
    let (closed_tx, closed_rx) = oneshot::channel::<()>();
    let server = tokio::spawn(async move {
        axum::serve(listener, router)
            .with_graceful_shutdown(async {
                let _ = closed_rx.await;
            })
            .await
    });
    println!("listening on ws://{addr}/ws");

    let interrupted = tokio::signal::ctrl_c().await;
    log::info!("shutting down");
    stop.store(true, Ordering::SeqCst);
    let log = tokio::task::spawn_blocking(move || engine.join())
        .await
        .map_err(|e| CliError::Env(format!("engine thread lost: {e}")))?
        .map_err(|_| CliError::Env("engine thread panicked".into()))?;
    // Upgraded sockets outlive the listener's own graceful shutdown, so
    // clients are told to close first.
    let _ = closing_tx.send(true);
    let _ = closed_tx.send(());
    match tokio::time::timeout(Duration::from_secs(5), server).await {
        Ok(Ok(Ok(()))) => {}
        Ok(Ok(Err(e))) => log::warn!("listener error: {e}"),
        Ok(Err(e)) => log::warn!("listener task failed: {e}"),
        Err(_) => log::warn!("listener did not stop in time"),
    }
    interrupted.map_err(|e| CliError::Env(format!("cannot wait for interrupt: {e}")))?;
    Ok(log)
}

/// Tick at one `dt` per `dt` of wall time until `stop`, then hand back the log.
/// After `steps` ticks the world is held at its final state.
fn engine_loop(
    mut world: World,
    steps: u64,
    registry: &Registry,
    updates: &broadcast::Sender<Arc<str>>,
    stop: &AtomicBool,
) -> EventLog {
    let dt = Duration::from_secs_f64(world.dt());
    let start = Instant::now();
    while !stop.load(Ordering::SeqCst) {
        if world.tick_count() >= steps {
            thread::sleep(IDLE_POLL);
            continue;
        }
        world.step();
        let snapshot = world.snapshot();
        for update in state_updates(&snapshot, registry) {
            // No subscribers is fine.
            let _ = updates.send(ServerMessage::State(update).to_json().into());
        }
        let due = start + dt.mul_f64(world.tick_count() as f64);
        if let Some(wait) = due.checked_duration_since(Instant::now()) {
            thread::sleep(wait);
        }
    }
    log::info!("engine stopped after {} ticks", world.tick_count());
    world.into_log()
}

async fn upgrade(ws: WebSocketUpgrade, State(app): State<Arc<App>>) -> Response {
    ws.on_upgrade(move |socket| client(socket, app))
}

async fn client(socket: WebSocket, app: Arc<App>) {
    let mut updates = app.updates.subscribe();
    let (mut tx, mut rx) = socket.split();
    let mut session = Session::default();
    let mut closing = app.closing.clone();
    if send(&mut tx, app.registry.hello().to_json()).await.is_err() {
        return;
    }
    loop {
        tokio::select! {
            _ = async { closing.wait_for(|c| *c).await.map(|_| ()) } => {
                let _ = tx.send(Message::Close(None)).await;
                break;
            }
            inbound = rx.next() => {
                let reply = match inbound {
                    Some(Ok(Message::Text(text))) => {
                        match handle_command(text.as_str(), &app.registry, &mut session) {
                            Ok(cmd) => {
                                if app.commands.send(cmd).is_err() {
                                    break;
                                }
                                None
                            }
                            Err(rejection) => Some(ServerMessage::from(rejection)),
                        }
                    }
                    Some(Ok(Message::Binary(_))) => Some(ServerMessage::Rejected {
                        client_seq: None,
                        reason: "binary frames are not supported".into(),
                    }),
                    Some(Ok(Message::Ping(_) | Message::Pong(_))) => None,
                    Some(Ok(Message::Close(_))) | Some(Err(_)) | None => break,
                };
                if let Some(reply) = reply {
                    if send(&mut tx, reply.to_json()).await.is_err() {
                        break;
                    }
                }
            }
            update = updates.recv() => match update {
                Ok(json) => {
                    if send(&mut tx, json.to_string()).await.is_err() {
                        break;
                    }
                }
                Err(broadcast::error::RecvError::Lagged(missed)) => {
                    log::warn!("dropping slow client after {missed} missed updates");
                    break;
                }
                Err(broadcast::error::RecvError::Closed) => {
                    let _ = tx.send(Message::Close(None)).await;
                    break;
                }
            }
        }
    }
}

async fn send<S>(tx: &mut S, text: String) -> Result<(), ()>
where
    S: SinkExt<Message> + Unpin,
{
    match tokio::time::timeout(SEND_TIMEOUT, tx.send(Message::Text(text.into()))).await {
        Ok(Ok(())) => Ok(()),
        _ => Err(()),
    }
}

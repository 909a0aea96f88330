//! The index daemon and its client-side connector.
//!
//! One daemon hosts one store. A fresh store path is initialized by the
//! first HELLO, which carries the public parameters; later HELLOs must
//! match. Mutations are serialized through a write lock and are on disk
//! before the acknowledgement (a STATS frame) goes back; searches share a
//! read lock and may proceed concurrently between mutations.
//!
//! The daemon never sees key material: every payload it stores or serves
//! is a token, a masked id, or a ciphertext.

use crate::crypto::paillier::Ciphertext;
use crate::crypto::UpdateToken;
use crate::scheme_a::{SearchRequestA, SearchResultsA, UpdateMessageA};
use crate::scheme_b::{CopyMessage, UpdateMessageB};
use crate::store::{EncryptedIndex, PersistentStore, PublicParams, StoreMutation};
use crate::wire::{self, Message, StatsMsg};
use crate::{Error, Result, Scheme};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, RwLock};
use std::time::Duration;

#[derive(Debug, Clone)]
pub struct ServeConfig {
    pub store_path: PathBuf,
    pub listen: String,
    /// When set, a fresh store may only be initialized with this scheme.
    pub scheme: Option<Scheme>,
    /// Compact the store after this many logged mutations.
    pub snapshot_every: Option<u64>,
}

struct ServerState {
    store: RwLock<Option<PersistentStore>>,
    store_path: PathBuf,
    snapshot_every: Option<u64>,
    expected_scheme: Option<Scheme>,
    shutdown: AtomicBool,
}

/// Handle for stopping a running server (used by tests and signal hooks).
#[derive(Clone)]
pub struct ShutdownHandle(Arc<ServerState>);

impl ShutdownHandle {
    pub fn shutdown(&self) {
        self.0.shutdown.store(true, Ordering::SeqCst);
    }
}

pub struct Server {
    listener: TcpListener,
    state: Arc<ServerState>,
}

impl Server {
    pub fn bind(config: &ServeConfig) -> Result<Server> {
        let store = if config.store_path.exists() {
            let store = PersistentStore::open(&config.store_path, config.snapshot_every)?;
            if let Some(scheme) = config.scheme {
                store.index().require_scheme(scheme)?;
            }
            Some(store)
        } else {
            None
        };
        let listener = TcpListener::bind(&config.listen)?;
        listener.set_nonblocking(true)?;
        Ok(Server {
            listener,
            state: Arc::new(ServerState {
                store: RwLock::new(store),
                store_path: config.store_path.clone(),
                snapshot_every: config.snapshot_every,
                expected_scheme: config.scheme,
                shutdown: AtomicBool::new(false),
            }),
        })
    }

    pub fn local_addr(&self) -> Result<SocketAddr> {
        Ok(self.listener.local_addr()?)
    }

    pub fn shutdown_handle(&self) -> ShutdownHandle {
        ShutdownHandle(self.state.clone())
    }

    /// Accept loop; returns when the shutdown handle fires.
    pub fn run(self) -> Result<()> {
        loop {
            if self.state.shutdown.load(Ordering::SeqCst) {
                return Ok(());
            }
            match self.listener.accept() {
                Ok((stream, _)) => {
                    let state = self.state.clone();
                    std::thread::spawn(move || {
                        let _ = handle_connection(stream, state);
                    });
                }
                Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                    std::thread::sleep(Duration::from_millis(10));
                }
                Err(e) => return Err(e.into()),
            }
        }
    }
}

/// Runs a daemon in the foreground.
pub fn serve(config: &ServeConfig) -> Result<()> {
    let server = Server::bind(config)?;
    eprintln!(
        "rdsse server listening on {} (store {})",
        server.local_addr()?,
        config.store_path.display()
    );
    server.run()
}

fn error_code(err: &Error) -> &'static str {
    match err {
        Error::SchemeMismatch { .. } => "scheme-mismatch",
        Error::DuplicateUpdateToken => "duplicate-token",
        Error::CopyDestinationExists => "copy-destination-exists",
        Error::MalformedCiphertext => "malformed-ciphertext",
        Error::StoreCorrupt(_) => "store-corrupt",
        Error::Protocol(_) => "protocol",
        _ => "internal",
    }
}

fn handle_connection(stream: TcpStream, state: Arc<ServerState>) -> Result<()> {
    let mut reader = stream.try_clone()?;
    let mut writer = stream;
    while let Some(message) = wire::read_frame(&mut reader)? {
        let reply = dispatch(&message, &state).unwrap_or_else(|err| {
            Message::error(error_code(&err), err.to_string())
        });
        wire::write_frame(&mut writer, &reply)?;
        if state.shutdown.load(Ordering::SeqCst) {
            break;
        }
    }
    Ok(())
}

fn with_store<T>(
    state: &ServerState,
    f: impl FnOnce(&EncryptedIndex) -> Result<T>,
) -> Result<T> {
    let guard = state.store.read().expect("store lock");
    match guard.as_ref() {
        Some(store) => f(store.index()),
        None => Err(Error::Protocol("store not initialized; send HELLO first".into())),
    }
}

fn apply_mutation(state: &ServerState, mutation: StoreMutation) -> Result<Message> {
    let mut guard = state.store.write().expect("store lock");
    let store = guard
        .as_mut()
        .ok_or_else(|| Error::Protocol("store not initialized; send HELLO first".into()))?;
    store.apply(&mutation)?;
    Ok(Message::Stats(StatsMsg {
        entries: Some(store.index().entry_count()),
        scheme: Some(store.index().scheme().as_str().into()),
    }))
}

fn dispatch(message: &Message, state: &ServerState) -> Result<Message> {
    match message {
        Message::Hello(hello) => {
            let params = hello.to_params()?;
            let mut guard = state.store.write().expect("store lock");
            match guard.as_ref() {
                Some(store) => {
                    if store.index().params() != &params {
                        return Err(Error::Protocol(
                            "store already initialized with different parameters".into(),
                        ));
                    }
                    Ok(Message::hello(store.index().params()))
                }
                None => {
                    if let Some(expected) = state.expected_scheme {
                        if params.scheme() != expected {
                            return Err(Error::SchemeMismatch {
                                store: expected,
                                request: params.scheme(),
                            });
                        }
                    }
                    let index = EncryptedIndex::from_params(params);
                    let store = PersistentStore::create(
                        &state.store_path,
                        index,
                        state.snapshot_every,
                    )?;
                    let reply = Message::hello(store.index().params());
                    *guard = Some(store);
                    Ok(reply)
                }
            }
        }
        Message::UpdateA(m) => apply_mutation(state, StoreMutation::UpdateA(m.to_update_a()?)),
        Message::UpdateB(m) => apply_mutation(state, StoreMutation::UpdateB(m.to_update_b()?)),
        Message::CopyB(m) => apply_mutation(state, StoreMutation::CopyB(m.to_copy_b()?)),
        Message::SearchA(m) => {
            let request = m.to_search_a()?;
            with_store(state, |index| {
                let results = crate::scheme_a::server_search_a(index, &request)?;
                Ok(Message::from_results_a(&results))
            })
        }
        Message::SearchB(m) => {
            let token = m.to_token()?;
            with_store(state, |index| {
                let reply = crate::scheme_b::server_search_b(index, &token)?;
                Ok(Message::from_results_b(reply.as_ref(), index.payload_width()))
            })
        }
        Message::Stats(_) => with_store(state, |index| {
            Ok(Message::Stats(StatsMsg {
                entries: Some(index.entry_count()),
                scheme: Some(index.scheme().as_str().into()),
            }))
        }),
        other => Err(Error::Protocol(format!(
            "unexpected message type 0x{:02x}",
            other.kind()
        ))),
    }
}

/// Blocking request/response connector used by the CLI and tests.
pub struct NetClient {
    stream: TcpStream,
}

impl NetClient {
    pub fn connect(addr: impl ToSocketAddrs) -> Result<Self> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        Ok(NetClient { stream })
    }

    fn roundtrip(&mut self, message: &Message) -> Result<Message> {
        wire::write_frame(&mut self.stream, message)?;
        match wire::read_frame(&mut self.stream)? {
            Some(Message::Error(e)) => {
                Err(Error::Protocol(format!("server error [{}]: {}", e.code, e.message)))
            }
            Some(reply) => Ok(reply),
            None => Err(Error::Protocol("server closed the connection".into())),
        }
    }

    pub fn hello(&mut self, params: &PublicParams) -> Result<()> {
        match self.roundtrip(&Message::hello(params))? {
            Message::Hello(_) => Ok(()),
            other => Err(unexpected(other)),
        }
    }

    pub fn update_a(&mut self, msg: &UpdateMessageA) -> Result<()> {
        match self.roundtrip(&Message::from_update_a(msg))? {
            Message::Stats(_) => Ok(()),
            other => Err(unexpected(other)),
        }
    }

    pub fn search_a(&mut self, request: &SearchRequestA) -> Result<SearchResultsA> {
        match self.roundtrip(&Message::from_search_a(request))? {
            Message::ResultsA(m) => m.to_results_a(),
            other => Err(unexpected(other)),
        }
    }

    pub fn update_b(&mut self, msg: &UpdateMessageB, width: usize) -> Result<()> {
        match self.roundtrip(&Message::from_update_b(msg, width))? {
            Message::Stats(_) => Ok(()),
            other => Err(unexpected(other)),
        }
    }

    pub fn copy_b(&mut self, msg: &CopyMessage) -> Result<()> {
        match self.roundtrip(&Message::from_copy_b(msg))? {
            Message::Stats(_) => Ok(()),
            other => Err(unexpected(other)),
        }
    }

    pub fn search_b(&mut self, token: &UpdateToken) -> Result<Option<Ciphertext>> {
        match self.roundtrip(&Message::from_search_b(token))? {
            Message::ResultsB(m) => m.to_ciphertext(),
            other => Err(unexpected(other)),
        }
    }

    pub fn stats(&mut self) -> Result<(u64, Scheme)> {
        match self.roundtrip(&Message::Stats(StatsMsg::default()))? {
            Message::Stats(m) => {
                let entries = m.entries.ok_or_else(|| Error::Protocol("stats reply missing entries".into()))?;
                let scheme = Scheme::parse(
                    &m.scheme.ok_or_else(|| Error::Protocol("stats reply missing scheme".into()))?,
                )?;
                Ok((entries, scheme))
            }
            other => Err(unexpected(other)),
        }
    }
}

fn unexpected(message: Message) -> Error {
    Error::Protocol(format!("unexpected reply type 0x{:02x}", message.kind()))
}

//! The per-agency search service. Holds only public and evaluation key
//! material: it scores encrypted queries against encrypted record vectors
//! and serves encrypted rows, and is structurally unable to decrypt either.

use std::io::ErrorKind;
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use thiserror::Error;

use he_core::{frame, Ciphertext, CkksEngine, HeParams, ParamsProfile};

use crate::keystore::{parse_ckks_public, CkksPublicMaterial, KeyStore, KeystoreError};
use crate::protocol::{
    Envelope, Message, ERR_INTERNAL, ERR_MALFORMED_QUERY, ERR_NOT_FOUND, ERR_PARAMS_MISMATCH,
    PROTOCOL_VERSION,
};
use crate::store::{AgencyStore, StoreError};

/// Slot width of the searchable vectors; scores sum this many slots.
pub const SCORE_WIDTH: usize = crate::codec::VOCAB_SIZE;

#[derive(Debug, Error)]
pub enum NodeError {
    #[error("store not found at {0}")]
    StoreMissing(PathBuf),

    #[error(transparent)]
    Store(#[from] StoreError),

    #[error(transparent)]
    Keystore(#[from] KeystoreError),

    #[error(transparent)]
    He(#[from] he_core::HeError),

    #[error("bind {addr} failed: {source}")]
    Bind {
        addr: String,
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone)]
pub struct NodeConfig {
    pub agency_id: String,
    pub store_path: PathBuf,
    pub keystore_root: PathBuf,
    pub federation_key_id: u64,
    pub profile: ParamsProfile,
    /// Scoring threads per query; 1 means sequential.
    pub parallelism: usize,
}

pub struct SearchNode {
    pub agency_id: String,
    engine: CkksEngine,
    material: CkksPublicMaterial,
    store: AgencyStore,
    digest: [u8; 32],
    parallelism: usize,
}

impl SearchNode {
    /// Load keys and store, failing fast on anything missing. Only public
    /// material is fetched; the node has no path to a secret key.
    pub fn load(cfg: &NodeConfig) -> Result<Self, NodeError> {
        if !cfg.store_path.exists() {
            return Err(NodeError::StoreMissing(cfg.store_path.clone()));
        }
        let store = AgencyStore::open(&cfg.store_path)?;
        let engine = CkksEngine::new(HeParams::generate(cfg.profile))?;
        let keystore = KeyStore::open(
            &cfg.keystore_root,
            // The node never presents a credential; this token is unused.
            "",
            &format!("{}-node", cfg.agency_id),
        )?;
        let public_bytes = keystore.fetch_public(cfg.federation_key_id)?;
        let material = parse_ckks_public(&public_bytes, &engine.params, &engine.ring)?;
        let digest = engine.params.digest();
        Ok(SearchNode {
            agency_id: cfg.agency_id.clone(),
            engine,
            material,
            store,
            digest,
            parallelism: cfg.parallelism.max(1),
        })
    }

    pub fn record_count(&self) -> usize {
        self.store.len()
    }

    fn score_one(&self, query: &Ciphertext, record: &Ciphertext) -> Result<Vec<u8>, he_core::HeError> {
        // Both operands are dropped to level 1 first: the product needs one
        // rescale and the slot sum none, so the extra level only costs time.
        let record = self.engine.mod_drop(record, 1)?;
        let prod = self.engine.multiply(query, &record, &self.material.relin)?;
        let score = self.engine.slot_sum(&prod, SCORE_WIDTH, &self.material.galois)?;
        Ok(frame::write_ciphertext(&score, &self.engine.params))
    }

    /// Score the query against every stored vector. Encrypted in, encrypted
    /// out; no decryption happens anywhere on this path.
    pub fn handle_query(
        &self,
        params_digest: &[u8; 32],
        ciphertext: &[u8],
    ) -> Result<Vec<(u64, Vec<u8>)>, (u16, String)> {
        if *params_digest != self.digest {
            return Err((
                ERR_PARAMS_MISMATCH,
                "query params digest does not match this node's federation key".into(),
            ));
        }
        let query = frame::read_ciphertext(ciphertext, &self.engine.params)
            .map_err(|e| (ERR_MALFORMED_QUERY, e.to_string()))?;
        let query = self
            .engine
            .mod_drop(&query, 1)
            .map_err(|e| (ERR_MALFORMED_QUERY, e.to_string()))?;

        let (vectors, scan_errors) = self.store.scan_encrypted_vectors(&self.engine.params);
        if let Some((id, e)) = scan_errors.first() {
            eprintln!(
                "[{}] skipping {} corrupt record(s), first id {}: {}",
                self.agency_id,
                scan_errors.len(),
                id,
                e
            );
        }

        if self.parallelism <= 1 || vectors.len() < 2 {
            let mut scores = Vec::with_capacity(vectors.len());
            for (id, record) in &vectors {
                let blob = self
                    .score_one(&query, record)
                    .map_err(|e| (ERR_INTERNAL, e.to_string()))?;
                scores.push((*id, blob));
            }
            Ok(scores)
        } else {
            let chunk = vectors.len().div_ceil(self.parallelism);
            let results: Vec<Result<Vec<(u64, Vec<u8>)>, he_core::HeError>> =
                thread::scope(|s| {
                    let handles: Vec<_> = vectors
                        .chunks(chunk)
                        .map(|part| {
                            s.spawn(|| {
                                part.iter()
                                    .map(|(id, rec)| Ok((*id, self.score_one(&query, rec)?)))
                                    .collect()
                            })
                        })
                        .collect();
                    handles.into_iter().map(|h| h.join().unwrap()).collect()
                });
            let mut scores = Vec::with_capacity(vectors.len());
            for r in results {
                scores.extend(r.map_err(|e| (ERR_INTERNAL, e.to_string()))?);
            }
            Ok(scores)
        }
    }

    pub fn handle_fetch(&self, ids: &[u64]) -> Result<Vec<crate::store::EncryptedRecord>, (u16, String)> {
        self.store
            .fetch_encrypted_fields(ids)
            .map_err(|e| (ERR_NOT_FOUND, e.to_string()))
    }

    pub fn handle_envelope(&self, env: &Envelope) -> Envelope {
        let message = match &env.message {
            Message::Ping { .. } => Message::Ping {
                version: PROTOCOL_VERSION,
                node_id: self.agency_id.clone(),
            },
            Message::Query {
                params_digest,
                ciphertext,
            } => match self.handle_query(params_digest, ciphertext) {
                Ok(scores) => Message::Scores { scores },
                Err((code, message)) => Message::Error { code, message },
            },
            Message::Fetch { ids } => match self.handle_fetch(ids) {
                Ok(records) => Message::Records { records },
                Err((code, message)) => Message::Error { code, message },
            },
            _ => Message::Error {
                code: ERR_INTERNAL,
                message: "unexpected message type for a node".into(),
            },
        };
        Envelope {
            request_id: env.request_id,
            message,
        }
    }
}

fn handle_connection(node: &SearchNode, stream: TcpStream) {
    let mut reader = match stream.try_clone() {
        Ok(s) => s,
        Err(_) => return,
    };
    let mut writer = stream;
    loop {
        match Envelope::read_from(&mut reader) {
            Ok(env) => {
                let reply = node.handle_envelope(&env);
                if reply.write_to(&mut writer).is_err() {
                    return;
                }
            }
            Err(_) => return, // peer closed or sent garbage
        }
    }
}

pub struct RunningNode {
    pub addr: SocketAddr,
    shutdown: Arc<AtomicBool>,
    handle: Option<thread::JoinHandle<()>>,
}

impl RunningNode {
    pub fn stop(mut self) {
        self.shutdown.store(true, Ordering::SeqCst);
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

impl Drop for RunningNode {
    fn drop(&mut self) {
        self.shutdown.store(true, Ordering::SeqCst);
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

/// Bind and serve on a background thread; one handler thread per
/// connection. Returns once the listener is live.
pub fn spawn(node: SearchNode, listen: &str) -> Result<RunningNode, NodeError> {
    let listener = TcpListener::bind(listen).map_err(|e| NodeError::Bind {
        addr: listen.to_string(),
        source: e,
    })?;
    let addr = listener.local_addr()?;
    listener.set_nonblocking(true)?;
    let shutdown = Arc::new(AtomicBool::new(false));
    let stop = shutdown.clone();
    let node = Arc::new(node);
    let handle = thread::spawn(move || {
        loop {
            if stop.load(Ordering::SeqCst) {
                return;
            }
            match listener.accept() {
                Ok((stream, _)) => {
                    stream.set_nonblocking(false).ok();
                    let node = node.clone();
                    thread::spawn(move || handle_connection(&node, stream));
                }
                Err(e) if e.kind() == ErrorKind::WouldBlock => {
                    thread::sleep(Duration::from_millis(20));
                }
                Err(_) => return,
            }
        }
    });
    Ok(RunningNode {
        addr,
        shutdown,
        handle: Some(handle),
    })
}

/// Foreground serve for the CLI: runs until the process is terminated.
pub fn serve_forever(node: SearchNode, listen: &str) -> Result<(), NodeError> {
    let listener = TcpListener::bind(listen).map_err(|e| NodeError::Bind {
        addr: listen.to_string(),
        source: e,
    })?;
    eprintln!(
        "[{}] serving {} records on {}",
        node.agency_id,
        node.record_count(),
        listener.local_addr()?
    );
    let node = Arc::new(node);
    for stream in listener.incoming() {
        match stream {
            Ok(stream) => {
                let node = node.clone();
                thread::spawn(move || handle_connection(&node, stream));
            }
            Err(e) => eprintln!("accept failed: {}", e),
        }
    }
    Ok(())
}

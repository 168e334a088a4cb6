// SPDX-License-Identifier: Apache-2.0

//! Append-only bulletin boards: in-memory, JSON-lines file, and a
//! line-delimited JSON service over TCP.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntryKind {
    Commitment,
    Result,
    Proof,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoardEntry {
    pub index: u64,
    pub owner: String,
    pub kind: EntryKind,
    pub payload: String,
}

pub trait Board: Send + Sync {
    /// Appends and returns the new entry's index.
    fn append(&self, owner: &str, kind: EntryKind, payload: &str) -> Result<u64>;
    fn read(&self, index: u64) -> Result<Option<BoardEntry>>;
    fn list(&self) -> Result<Vec<BoardEntry>>;
}

/// Indices must be exactly 0, 1, 2, … in order.
fn check_dense(entries: &[BoardEntry]) -> Result<()> {
    for (i, e) in entries.iter().enumerate() {
        if e.index != i as u64 {
            return Err(Error::Board(format!("entry at position {i} carries index {}", e.index)));
        }
    }
    Ok(())
}

#[derive(Default)]
pub struct MemoryBoard {
    entries: Mutex<Vec<BoardEntry>>,
}

impl MemoryBoard {
    pub fn new() -> Self {
        Self::default()
    }

    /// A board pre-populated with arbitrary entries (for fault injection).
    pub fn from_entries(entries: Vec<BoardEntry>) -> Result<Self> {
        check_dense(&entries)?;
        Ok(MemoryBoard { entries: Mutex::new(entries) })
    }
}

impl Board for MemoryBoard {
    fn append(&self, owner: &str, kind: EntryKind, payload: &str) -> Result<u64> {
        let mut entries = self.entries.lock().expect("board lock");
        let index = entries.len() as u64;
        entries.push(BoardEntry { index, owner: owner.into(), kind, payload: payload.into() });
        Ok(index)
    }

    fn read(&self, index: u64) -> Result<Option<BoardEntry>> {
        Ok(self.entries.lock().expect("board lock").get(index as usize).cloned())
    }

    fn list(&self) -> Result<Vec<BoardEntry>> {
        Ok(self.entries.lock().expect("board lock").clone())
    }
}

/// One JSON entry per line; every append is fsynced before returning.
pub struct FileBoard {
    path: PathBuf,
    lock: Mutex<()>,
}

impl FileBoard {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(FileBoard { path, lock: Mutex::new(()) })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    fn load(&self) -> Result<Vec<BoardEntry>> {
        let file = File::open(&self.path)?;
        let mut entries = Vec::new();
        for (n, line) in BufReader::new(file).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let e: BoardEntry = serde_json::from_str(&line)
                .map_err(|e| Error::Board(format!("{}:{}: {e}", self.path.display(), n + 1)))?;
            entries.push(e);
        }
        check_dense(&entries)?;
        Ok(entries)
    }
}

impl Board for FileBoard {
    fn append(&self, owner: &str, kind: EntryKind, payload: &str) -> Result<u64> {
        let _guard = self.lock.lock().expect("board lock");
        let index = self.load()?.len() as u64;
        let entry = BoardEntry { index, owner: owner.into(), kind, payload: payload.into() };
        let mut line = serde_json::to_string(&entry)?;
        line.push('\n');
        let mut f = OpenOptions::new().append(true).open(&self.path)?;
        f.write_all(line.as_bytes())?;
        f.sync_all()?;
        Ok(index)
    }

    fn read(&self, index: u64) -> Result<Option<BoardEntry>> {
        Ok(self.load()?.into_iter().nth(index as usize))
    }

    fn list(&self) -> Result<Vec<BoardEntry>> {
        self.load()
    }
}

/// Client for [`serve`]; one connection per request.
pub struct TcpBoard {
    addr: String,
    timeout: Duration,
}

impl TcpBoard {
    pub fn new(addr: impl Into<String>) -> Self {
        TcpBoard { addr: addr.into(), timeout: Duration::from_secs(30) }
    }

    pub fn addr(&self) -> &str {
        &self.addr
    }

    fn request(&self, req: Value) -> Result<Value> {
        let transport = |e: std::io::Error| Error::Transport(format!("{}: {e}", self.addr));
        let addrs: Vec<SocketAddr> = self.addr.to_socket_addrs().map_err(transport)?.collect();
        let addr = addrs.first().ok_or_else(|| Error::Transport(format!("{}: no address", self.addr)))?;
        let stream = TcpStream::connect_timeout(addr, self.timeout).map_err(transport)?;
        stream.set_read_timeout(Some(self.timeout)).map_err(transport)?;
        let mut writer = stream.try_clone().map_err(transport)?;
        let mut line = req.to_string();
        line.push('\n');
        writer.write_all(line.as_bytes()).map_err(transport)?;
        let mut resp = String::new();
        BufReader::new(stream).read_line(&mut resp).map_err(transport)?;
        if resp.is_empty() {
            return Err(Error::Transport(format!("{}: connection closed without a response", self.addr)));
        }
        let v: Value = serde_json::from_str(&resp).map_err(|e| Error::Transport(format!("bad response: {e}")))?;
        if v["ok"] != Value::Bool(true) {
            return Err(Error::Board(v["error"].as_str().unwrap_or("request failed").to_string()));
        }
        Ok(v)
    }
}

impl Board for TcpBoard {
    fn append(&self, owner: &str, kind: EntryKind, payload: &str) -> Result<u64> {
        let v = self.request(json!({"op": "append", "owner": owner, "kind": kind, "payload": payload}))?;
        v["index"].as_u64().ok_or_else(|| Error::Transport("response lacks an index".into()))
    }

    fn read(&self, index: u64) -> Result<Option<BoardEntry>> {
        let v = self.request(json!({"op": "read", "index": index}))?;
        Ok(serde_json::from_value(v["entry"].clone())?)
    }

    fn list(&self) -> Result<Vec<BoardEntry>> {
        let v = self.request(json!({"op": "list"}))?;
        Ok(serde_json::from_value(v["entries"].clone())?)
    }
}

#[derive(Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
enum Request {
    Append { owner: String, kind: EntryKind, payload: String },
    Read { index: u64 },
    List,
}

fn handle(board: &dyn Board, line: &str) -> Value {
    let result = serde_json::from_str::<Request>(line).map_err(Error::from).and_then(|req| match req {
        Request::Append { owner, kind, payload } => board.append(&owner, kind, &payload).map(|i| json!({"index": i})),
        Request::Read { index } => board.read(index).map(|e| json!({"entry": e})),
        Request::List => board.list().map(|e| json!({"entries": e})),
    });
    match result {
        Ok(mut v) => {
            v["ok"] = Value::Bool(true);
            v
        }
        Err(e) => json!({"ok": false, "error": e.to_string()}),
    }
}

fn serve_connection(board: &dyn Board, stream: TcpStream) -> std::io::Result<()> {
    let mut writer = stream.try_clone()?;
    for line in BufReader::new(stream).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut resp = handle(board, &line).to_string();
        resp.push('\n');
        writer.write_all(resp.as_bytes())?;
    }
    Ok(())
}

/// A running board service; dropping the handle does not stop it.
pub struct ServerHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    thread: Option<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn stop(mut self) {
        self.stop.store(true, Ordering::SeqCst);
        let _ = TcpStream::connect(self.addr);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }

    /// Blocks until the accept loop exits.
    pub fn join(mut self) {
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

/// Serves `board` on `listener`, one thread per connection. Appends are
/// serialized by the backing board.
pub fn serve(listener: TcpListener, board: Arc<dyn Board>) -> Result<ServerHandle> {
    let addr = listener.local_addr()?;
    let stop = Arc::new(AtomicBool::new(false));
    let flag = stop.clone();
    let thread = std::thread::spawn(move || {
        for stream in listener.incoming() {
            if flag.load(Ordering::SeqCst) {
                break;
            }
            let Ok(stream) = stream else { continue };
            let board = board.clone();
            std::thread::spawn(move || {
                let _ = serve_connection(board.as_ref(), stream);
            });
        }
    });
    Ok(ServerHandle { addr, stop, thread: Some(thread) })
}

/// Parses `memory`, `file:PATH` or `tcp:HOST:PORT`.
pub fn open_board(spec: &str) -> Result<Arc<dyn Board>> {
    if spec == "memory" {
        Ok(Arc::new(MemoryBoard::new()))
    } else if let Some(path) = spec.strip_prefix("file:") {
        Ok(Arc::new(FileBoard::open(path)?))
    } else if let Some(addr) = spec.strip_prefix("tcp:") {
        Ok(Arc::new(TcpBoard::new(addr)))
    } else {
        Err(Error::Param(format!("unknown board {spec:?} (expected memory, file:PATH or tcp:HOST:PORT)")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exercise(board: &dyn Board) {
        assert_eq!(board.append("alice", EntryKind::Commitment, "12").unwrap(), 0);
        assert_eq!(board.append("bob", EntryKind::Commitment, "34").unwrap(), 1);
        let e = board.read(1).unwrap().unwrap();
        assert_eq!((e.owner.as_str(), e.kind, e.payload.as_str()), ("bob", EntryKind::Commitment, "34"));
        assert_eq!(board.read(1).unwrap(), Some(e));
        assert_eq!(board.read(7).unwrap(), None);
        assert_eq!(board.list().unwrap().len(), 2);
    }

    #[test]
    fn memory_board() {
        exercise(&MemoryBoard::new());
    }

    #[test]
    fn file_board_persists_and_detects_edits() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("board.jsonl");
        exercise(&FileBoard::open(&path).unwrap());
        let reopened = FileBoard::open(&path).unwrap();
        assert_eq!(reopened.list().unwrap().len(), 2);
        let text = std::fs::read_to_string(&path).unwrap();
        std::fs::write(&path, text.replace("\"index\":1", "\"index\":5")).unwrap();
        assert!(matches!(reopened.list(), Err(Error::Board(_))));
        std::fs::write(&path, "not json\n").unwrap();
        assert!(matches!(reopened.list(), Err(Error::Board(_))));
    }

    #[test]
    fn tcp_board_concurrent_appends() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let server = serve(listener, Arc::new(MemoryBoard::new())).unwrap();
        let addr = server.addr().to_string();
        exercise(&TcpBoard::new(addr.clone()));

        let handles: Vec<_> = (0..8)
            .map(|t| {
                let addr = addr.clone();
                std::thread::spawn(move || {
                    let b = TcpBoard::new(addr);
                    (0..10).map(|i| b.append(&format!("p{t}"), EntryKind::Proof, &format!("{t}-{i}")).unwrap()).collect::<Vec<_>>()
                })
            })
            .collect();
        let mut indices: Vec<u64> = handles.into_iter().flat_map(|h| h.join().unwrap()).collect();
        indices.sort();
        assert_eq!(indices, (2..82).collect::<Vec<u64>>());
        let client = TcpBoard::new(addr.clone());
        let all = client.list().unwrap();
        assert_eq!(all.len(), 82);
        check_dense(&all).unwrap();
        assert_eq!(client.list().unwrap(), all);
        server.stop();
    }

    #[test]
    fn unreachable_board_is_a_transport_error() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap().to_string();
        drop(listener);
        let err = TcpBoard::new(addr).append("x", EntryKind::Commitment, "1").unwrap_err();
        assert!(matches!(err, Error::Transport(_)), "{err}");
        assert!(err.to_string().contains("retry"));
    }

    #[test]
    fn server_rejects_bad_requests() {
        let board = MemoryBoard::new();
        assert_eq!(handle(&board, "{\"op\":\"frobnicate\"}")["ok"], false);
        assert_eq!(handle(&board, "{\"op\":\"list\"}")["ok"], true);
    }

    #[test]
    fn board_specs() {
        assert!(open_board("memory").is_ok());
        assert!(open_board("tcp:127.0.0.1:1").is_ok());
        assert!(matches!(open_board("carrier-pigeon"), Err(Error::Param(_))));
    }
}

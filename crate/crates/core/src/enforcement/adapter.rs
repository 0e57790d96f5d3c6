use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AdapterError {
    #[error("no target location for component {0}")]
    UnknownComponent(String),
    #[error("read failed for {component}: {message}")]
    Read { component: String, message: String },
    #[error("write failed for {component}: {message}")]
    Write { component: String, message: String },
}

/// Where remediated configurations land.
pub trait TargetAdapter: Send + Sync {
    fn kind(&self) -> &'static str;
    fn read(&self, component_id: &str) -> Result<String, AdapterError>;
    fn write(&self, component_id: &str, content: &str) -> Result<(), AdapterError>;
}

/// One configuration file per component, replaced atomically.
#[derive(Clone, Debug, Default)]
pub struct FilesystemAdapter {
    locations: BTreeMap<String, PathBuf>,
}

impl FilesystemAdapter {
    pub fn new(locations: BTreeMap<String, PathBuf>) -> Self {
        Self { locations }
    }

    pub fn location(&self, component_id: &str) -> Option<&PathBuf> {
        self.locations.get(component_id)
    }

    fn path(&self, component_id: &str) -> Result<&PathBuf, AdapterError> {
        self.locations.get(component_id).ok_or_else(|| AdapterError::UnknownComponent(component_id.to_string()))
    }
}

impl TargetAdapter for FilesystemAdapter {
    fn kind(&self) -> &'static str {
        "filesystem"
    }

    fn read(&self, component_id: &str) -> Result<String, AdapterError> {
        std::fs::read_to_string(self.path(component_id)?)
            .map_err(|e| AdapterError::Read { component: component_id.to_string(), message: e.to_string() })
    }

    fn write(&self, component_id: &str, content: &str) -> Result<(), AdapterError> {
        let path = self.path(component_id)?;
        let err = |e: std::io::Error| AdapterError::Write { component: component_id.to_string(), message: e.to_string() };
        let tmp = path.with_extension("ransec-tmp");
        std::fs::write(&tmp, content).map_err(err)?;
        std::fs::rename(&tmp, path).map_err(err)
    }
}

/// In-memory targets that keep every write.
#[derive(Debug, Default)]
pub struct RecordingAdapter {
    targets: Mutex<BTreeMap<String, String>>,
    writes: Mutex<Vec<(String, String)>>,
}

impl RecordingAdapter {
    pub fn new(initial: BTreeMap<String, String>) -> Self {
        Self { targets: Mutex::new(initial), writes: Mutex::default() }
    }

    pub fn writes(&self) -> Vec<(String, String)> {
        self.writes.lock().unwrap().clone()
    }

    pub fn current(&self, component_id: &str) -> Option<String> {
        self.targets.lock().unwrap().get(component_id).cloned()
    }
}

impl TargetAdapter for RecordingAdapter {
    fn kind(&self) -> &'static str {
        "recording"
    }

    fn read(&self, component_id: &str) -> Result<String, AdapterError> {
        self.current(component_id).ok_or_else(|| AdapterError::UnknownComponent(component_id.to_string()))
    }

    fn write(&self, component_id: &str, content: &str) -> Result<(), AdapterError> {
        let mut targets = self.targets.lock().unwrap();
        if !targets.contains_key(component_id) {
            return Err(AdapterError::UnknownComponent(component_id.to_string()));
        }
        targets.insert(component_id.to_string(), content.to_string());
        self.writes.lock().unwrap().push((component_id.to_string(), content.to_string()));
        Ok(())
    }
}

/// Wraps an adapter to fail or corrupt upcoming writes.
pub struct FaultInjector<A> {
    inner: A,
    fail_writes: AtomicUsize,
    corrupt_next: AtomicBool,
}

impl<A: TargetAdapter> FaultInjector<A> {
    pub fn new(inner: A) -> Self {
        Self { inner, fail_writes: AtomicUsize::new(0), corrupt_next: AtomicBool::new(false) }
    }

    pub fn inner(&self) -> &A {
        &self.inner
    }

    /// The next `n` writes fail without touching the target.
    pub fn fail_next_writes(&self, n: usize) {
        self.fail_writes.store(n, Ordering::SeqCst);
    }

    /// The next write lands truncated, so read-back verification fails.
    pub fn corrupt_next_write(&self) {
        self.corrupt_next.store(true, Ordering::SeqCst);
    }
}

impl<A: TargetAdapter> TargetAdapter for FaultInjector<A> {
    fn kind(&self) -> &'static str {
        self.inner.kind()
    }

    fn read(&self, component_id: &str) -> Result<String, AdapterError> {
        self.inner.read(component_id)
    }

    fn write(&self, component_id: &str, content: &str) -> Result<(), AdapterError> {
        if self.fail_writes.fetch_update(Ordering::SeqCst, Ordering::SeqCst, |n| n.checked_sub(1)).is_ok() {
            return Err(AdapterError::Write { component: component_id.to_string(), message: "injected fault".into() });
        }
        if self.corrupt_next.swap(false, Ordering::SeqCst) {
            let cut = content.len() / 2;
            let cut = (0..=cut).rev().find(|&i| content.is_char_boundary(i)).unwrap_or(0);
            return self.inner.write(component_id, &content[..cut]);
        }
        self.inner.write(component_id, content)
    }
}

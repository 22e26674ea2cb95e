//! On-disk layout: raw sources, encoded streams, rate reports, and one
//! JSON index tying them together.
//!
//! Artifacts are immutable once written. The index is the commit record:
//! it is rewritten through a temp file and renamed into place, so a crash
//! leaves either the old index or the new one, never a torn file. Data
//! files not yet referenced by the index are orphans from an interrupted
//! operation and are silently overwritten on retry.

use std::collections::BTreeMap;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};

use crate::vfs::Vfs;
use crate::ServiceError;

#[derive(Clone, Debug)]
pub struct StoreLayout {
    root: PathBuf,
}

impl StoreLayout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn sources_dir(&self) -> PathBuf {
        self.root.join("sources")
    }

    pub fn streams_dir(&self) -> PathBuf {
        self.root.join("streams")
    }

    pub fn reports_dir(&self) -> PathBuf {
        self.root.join("reports")
    }

    pub fn source_path(&self, id: u32) -> PathBuf {
        self.sources_dir().join(format!("{id}.raw"))
    }

    pub fn stream_path(&self, id: u32) -> PathBuf {
        self.streams_dir().join(format!("{id}.smra"))
    }

    pub fn report_path(&self, id: u32) -> PathBuf {
        self.reports_dir().join(format!("{id}.json"))
    }

    pub fn index_path(&self) -> PathBuf {
        self.root.join("index.json")
    }

    fn index_tmp_path(&self) -> PathBuf {
        self.root.join("index.json.tmp")
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EncodedEntry {
    /// Hex digest over every encode input; the idempotency key.
    pub input_hash: String,
    pub stream_file: String,
    pub report_file: String,
    pub stream_crc32: u32,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IndexEntry {
    pub n: usize,
    pub source_file: String,
    pub encoded: Option<EncodedEntry>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
struct Index {
    sources: BTreeMap<u32, IndexEntry>,
}

pub struct Store {
    layout: StoreLayout,
    vfs: Arc<dyn Vfs>,
    index: RwLock<Index>,
}

impl Store {
    pub fn open(layout: StoreLayout, vfs: Arc<dyn Vfs>) -> Result<Self, ServiceError> {
        vfs.create_dir_all(&layout.sources_dir())?;
        vfs.create_dir_all(&layout.streams_dir())?;
        vfs.create_dir_all(&layout.reports_dir())?;
        let index = if vfs.exists(&layout.index_path()) {
            let bytes = vfs.read(&layout.index_path())?;
            serde_json::from_slice(&bytes)
                .map_err(|e| ServiceError::Malformed(format!("corrupt store index: {e}")))?
        } else {
            Index::default()
        };
        Ok(Self { layout, vfs, index: RwLock::new(index) })
    }

    pub fn layout(&self) -> &StoreLayout {
        &self.layout
    }

    pub fn has_source(&self, id: u32) -> bool {
        self.index.read().unwrap().sources.contains_key(&id)
    }

    pub fn encoded(&self, id: u32) -> Option<EncodedEntry> {
        self.index.read().unwrap().sources.get(&id).and_then(|e| e.encoded.clone())
    }

    pub fn put_source(&self, id: u32, body: &[u8], expect_n: usize) -> Result<(), ServiceError> {
        let symbols = smra_core::source::from_raw_bytes(body)
            .map_err(|e| ServiceError::Malformed(format!("bad source body: {e}")))?;
        if symbols.len() != expect_n {
            return Err(ServiceError::Malformed(format!(
                "source length {} does not match the configured block length {expect_n}",
                symbols.len()
            )));
        }
        let mut index = self.index.write().unwrap();
        if index.sources.contains_key(&id) {
            return Err(ServiceError::SourceExists(id));
        }
        let path = self.layout.source_path(id);
        self.vfs.write(&path, body)?;
        index.sources.insert(
            id,
            IndexEntry {
                n: expect_n,
                source_file: format!("sources/{id}.raw"),
                encoded: None,
            },
        );
        self.persist(&index)?;
        Ok(())
    }

    /// Decoded symbol word of a stored source.
    pub fn read_source(&self, id: u32) -> Result<Vec<u8>, ServiceError> {
        if !self.has_source(id) {
            return Err(ServiceError::UnknownSource(id));
        }
        let bytes = self.vfs.read(&self.layout.source_path(id))?;
        Ok(smra_core::source::from_raw_bytes(&bytes)?)
    }

    pub fn write_encoded(
        &self,
        id: u32,
        stream_bytes: &[u8],
        report_bytes: &[u8],
        input_hash: String,
    ) -> Result<EncodedEntry, ServiceError> {
        let entry = EncodedEntry {
            input_hash,
            stream_file: format!("streams/{id}.smra"),
            report_file: format!("reports/{id}.json"),
            stream_crc32: smra_core::bits::crc32(stream_bytes),
        };
        // Files land first; the index rename is the commit point.
        self.vfs.write(&self.layout.stream_path(id), stream_bytes)?;
        self.vfs.write(&self.layout.report_path(id), report_bytes)?;
        let mut index = self.index.write().unwrap();
        let slot = index
            .sources
            .get_mut(&id)
            .ok_or(ServiceError::UnknownSource(id))?;
        slot.encoded = Some(entry.clone());
        self.persist(&index)?;
        Ok(entry)
    }

    pub fn read_stream(&self, id: u32) -> Result<Vec<u8>, ServiceError> {
        match self.encoded(id) {
            Some(_) => Ok(self.vfs.read(&self.layout.stream_path(id))?),
            None => Err(ServiceError::NotEncoded(id)),
        }
    }

    pub fn read_report(&self, id: u32) -> Result<Vec<u8>, ServiceError> {
        match self.encoded(id) {
            Some(_) => Ok(self.vfs.read(&self.layout.report_path(id))?),
            None => Err(ServiceError::NotEncoded(id)),
        }
    }

    fn persist(&self, index: &Index) -> io::Result<()> {
        let bytes = serde_json::to_vec_pretty(index).expect("index serializes");
        let tmp = self.layout.index_tmp_path();
        self.vfs.write(&tmp, &bytes)?;
        self.vfs.rename(&tmp, &self.layout.index_path())
    }
}

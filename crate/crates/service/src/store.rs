//! Content-addressed blob storage plus an append-only JSON-lines index.
//!
//! Layout under the data directory:
//!
//! ```text
//! blobs/<sha256>.mhd   volumes and masks, as written by the MetaImage encoder
//! index.jsonl          one IndexEntry per line, replayed on open
//! ```

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use nuggetcut::segmenter::SegmentationParams;
use nuggetcut::vec3::Vec3;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeMeta {
    pub volume_id: String,
    pub sha256: String,
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub origin: [f64; 3],
    pub created_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskMeta {
    pub mask_id: String,
    pub sha256: String,
    pub dims: [usize; 3],
    pub voxel_count: usize,
    /// Session that committed the mask; absent for uploads.
    #[serde(default)]
    pub session_id: Option<String>,
    pub created_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub session_id: String,
    pub volume_id: String,
    pub params: SegmentationParams,
    pub seed: Vec3,
    pub border_seeds: Vec<Vec3>,
    pub created_ms: u64,
    pub updated_ms: u64,
    pub committed_masks: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum IndexEntry {
    Volume(VolumeMeta),
    Mask(MaskMeta),
    Session(SessionRecord),
    SessionDeleted { session_id: String, at_ms: u64 },
}

pub fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug)]
pub struct Store {
    root: PathBuf,
    index: File,
    volumes: BTreeMap<String, VolumeMeta>,
    masks: BTreeMap<String, MaskMeta>,
    sessions: BTreeMap<String, SessionRecord>,
    next_session: u64,
}

impl Store {
    /// Opens (creating if needed) the store and replays its index. A
    /// truncated final line, as left by a crash mid-append, is skipped.
    pub fn open(root: impl AsRef<Path>) -> io::Result<Store> {
        let root = root.as_ref().to_path_buf();
        fs::create_dir_all(root.join("blobs"))?;
        let index_path = root.join("index.jsonl");
        let mut volumes = BTreeMap::new();
        let mut masks = BTreeMap::new();
        let mut sessions = BTreeMap::new();
        let mut next_session = 1;
        if index_path.exists() {
            for (n, line) in BufReader::new(File::open(&index_path)?).lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let entry: IndexEntry = match serde_json::from_str(&line) {
                    Ok(e) => e,
                    Err(e) => {
                        log::warn!("skipping index line {}: {e}", n + 1);
                        continue;
                    }
                };
                match entry {
                    IndexEntry::Volume(v) => {
                        volumes.insert(v.volume_id.clone(), v);
                    }
                    IndexEntry::Mask(m) => {
                        masks.insert(m.mask_id.clone(), m);
                    }
                    IndexEntry::Session(s) => {
                        if let Some(n) = session_number(&s.session_id) {
                            next_session = next_session.max(n + 1);
                        }
                        sessions.insert(s.session_id.clone(), s);
                    }
                    IndexEntry::SessionDeleted { session_id, .. } => {
                        sessions.remove(&session_id);
                    }
                }
            }
        }
        let mut index = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&index_path)?;
        let raw = fs::read(&index_path)?;
        if raw.last().is_some_and(|&b| b != b'\n') {
            index.write_all(b"\n")?;
        }
        Ok(Store {
            root,
            index,
            volumes,
            masks,
            sessions,
            next_session,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn append(&mut self, entry: &IndexEntry) -> io::Result<()> {
        let mut line = serde_json::to_string(entry).map_err(io::Error::other)?;
        line.push('\n');
        self.index.write_all(line.as_bytes())?;
        self.index.sync_data()
    }

    pub fn blob_path(&self, sha256: &str) -> PathBuf {
        self.root.join("blobs").join(format!("{sha256}.mhd"))
    }

    /// Writes a blob unless one with the same digest exists.
    pub fn put_blob(&self, bytes: &[u8]) -> io::Result<String> {
        let sha = sha256_hex(bytes);
        let path = self.blob_path(&sha);
        if !path.exists() {
            let tmp = path.with_extension("tmp");
            fs::write(&tmp, bytes)?;
            fs::rename(&tmp, &path)?;
        }
        Ok(sha)
    }

    pub fn read_blob(&self, sha256: &str) -> io::Result<Vec<u8>> {
        fs::read(self.blob_path(sha256))
    }

    pub fn volume(&self, id: &str) -> Option<&VolumeMeta> {
        self.volumes.get(id)
    }

    pub fn mask(&self, id: &str) -> Option<&MaskMeta> {
        self.masks.get(id)
    }

    pub fn session(&self, id: &str) -> Option<&SessionRecord> {
        self.sessions.get(id)
    }

    pub fn sessions(&self) -> impl Iterator<Item = &SessionRecord> {
        self.sessions.values()
    }

    /// Records a volume whose canonical bytes are already stored under
    /// `meta.sha256`. Re-registering the same content is a no-op.
    pub fn register_volume(&mut self, meta: VolumeMeta) -> io::Result<VolumeMeta> {
        if let Some(existing) = self.volumes.get(&meta.volume_id) {
            return Ok(existing.clone());
        }
        self.append(&IndexEntry::Volume(meta.clone()))?;
        self.volumes.insert(meta.volume_id.clone(), meta.clone());
        Ok(meta)
    }

    pub fn register_mask(&mut self, meta: MaskMeta) -> io::Result<MaskMeta> {
        if let Some(existing) = self.masks.get(&meta.mask_id) {
            return Ok(existing.clone());
        }
        self.append(&IndexEntry::Mask(meta.clone()))?;
        self.masks.insert(meta.mask_id.clone(), meta.clone());
        Ok(meta)
    }

    pub fn allocate_session_id(&mut self) -> String {
        let id = format!("s{:06}", self.next_session);
        self.next_session += 1;
        id
    }

    pub fn put_session(&mut self, record: SessionRecord) -> io::Result<()> {
        self.append(&IndexEntry::Session(record.clone()))?;
        self.sessions.insert(record.session_id.clone(), record);
        Ok(())
    }

    pub fn delete_session(&mut self, id: &str) -> io::Result<bool> {
        if !self.sessions.contains_key(id) {
            return Ok(false);
        }
        self.append(&IndexEntry::SessionDeleted {
            session_id: id.to_string(),
            at_ms: now_ms(),
        })?;
        self.sessions.remove(id);
        Ok(true)
    }
}

fn session_number(id: &str) -> Option<u64> {
    id.strip_prefix('s')?.parse().ok()
}

pub fn volume_id_for(sha256: &str) -> String {
    format!("v{}", &sha256[..16])
}

pub fn mask_id_for(sha256: &str) -> String {
    format!("m{}", &sha256[..16])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(id: &str) -> SessionRecord {
        SessionRecord {
            session_id: id.into(),
            volume_id: "v0".into(),
            params: SegmentationParams::default(),
            seed: [1.0, 2.0, 3.0],
            border_seeds: vec![],
            created_ms: 1,
            updated_ms: 1,
            committed_masks: vec![],
        }
    }

    #[test]
    fn replay_restores_latest_state() {
        let dir = tempfile::tempdir().unwrap();
        {
            let mut s = Store::open(dir.path()).unwrap();
            let a = s.allocate_session_id();
            let b = s.allocate_session_id();
            s.put_session(record(&a)).unwrap();
            s.put_session(record(&b)).unwrap();
            let mut moved = record(&a);
            moved.seed = [9.0, 9.0, 9.0];
            s.put_session(moved).unwrap();
            s.delete_session(&b).unwrap();
        }
        let mut s = Store::open(dir.path()).unwrap();
        assert_eq!(s.session("s000001").unwrap().seed, [9.0, 9.0, 9.0]);
        assert!(s.session("s000002").is_none());
        assert_eq!(s.allocate_session_id(), "s000003");
    }

    #[test]
    fn blobs_are_content_addressed() {
        let dir = tempfile::tempdir().unwrap();
        let s = Store::open(dir.path()).unwrap();
        let a = s.put_blob(b"abc").unwrap();
        assert_eq!(a, s.put_blob(b"abc").unwrap());
        assert_eq!(
            a,
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
        assert_eq!(s.read_blob(&a).unwrap(), b"abc");
    }

    #[test]
    fn torn_tail_is_ignored() {
        let dir = tempfile::tempdir().unwrap();
        {
            let mut s = Store::open(dir.path()).unwrap();
            s.put_session(record("s000001")).unwrap();
        }
        let mut f = OpenOptions::new()
            .append(true)
            .open(dir.path().join("index.jsonl"))
            .unwrap();
        f.write_all(b"{\"kind\":\"sess").unwrap();
        {
            let mut s = Store::open(dir.path()).unwrap();
            assert!(s.session("s000001").is_some());
            s.put_session(record("s000002")).unwrap();
        }
        let s = Store::open(dir.path()).unwrap();
        assert!(s.session("s000002").is_some());
    }
}

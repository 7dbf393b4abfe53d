use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{now_rfc3339, read_json_lines, ServiceError, Study};
use crate::evalkit::{JudgmentRecord, Side};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub session_id: String,
    pub study_id: String,
    /// Opaque participant handle; no other identity is kept.
    pub participant_token: String,
    /// `order[k]` is the index of the trial shown at position `k`.
    pub order: Vec<usize>,
    pub consent_at: Option<String>,
    #[serde(default)]
    pub familiarity: serde_json::Value,
    pub created_at: String,
}

struct JudgmentLog {
    file: File,
    records: Vec<JudgmentRecord>,
    index: HashMap<(String, String), usize>,
}

/// Durable state: study definitions, sessions and the append-only judgment log.
pub struct Store {
    dir: PathBuf,
    studies: RwLock<BTreeMap<String, Arc<Study>>>,
    videos: RwLock<HashMap<String, (String, usize)>>,
    sessions: RwLock<HashMap<String, Session>>,
    session_file: Mutex<File>,
    judgments: Mutex<JudgmentLog>,
    rng: Mutex<ChaCha8Rng>,
}

fn append_line<T: Serialize>(file: &mut File, value: &T) -> Result<(), ServiceError> {
    let mut line = serde_json::to_string(value)?;
    line.push('\n');
    file.write_all(line.as_bytes())?;
    file.flush()?;
    Ok(())
}

fn open_append(path: &Path) -> Result<File, ServiceError> {
    Ok(OpenOptions::new().create(true).append(true).open(path)?)
}

fn lock_err<T>(_: T) -> ServiceError {
    ServiceError::Internal("state lock poisoned".into())
}

impl Store {
    pub fn open(dir: &Path, session_seed: Option<u64>) -> Result<Self, ServiceError> {
        fs::create_dir_all(dir.join("studies"))?;
        let mut studies = BTreeMap::new();
        for entry in fs::read_dir(dir.join("studies"))? {
            let path = entry?.path();
            if path.extension().is_some_and(|e| e == "json") {
                let study: Study = serde_json::from_slice(&fs::read(&path)?)?;
                studies.insert(study.config.study_id.clone(), Arc::new(study));
            }
        }
        let mut videos = HashMap::new();
        for s in studies.values() {
            index_videos(&mut videos, s);
        }
        let session_path = dir.join("sessions.jsonl");
        let mut sessions = HashMap::new();
        for s in read_json_lines::<Session>(&session_path)? {
            sessions.insert(s.session_id.clone(), s);
        }
        let judgment_path = dir.join("judgments.jsonl");
        let records: Vec<JudgmentRecord> = read_json_lines(&judgment_path)?;
        let index = records
            .iter()
            .enumerate()
            .map(|(i, r)| ((r.session_id.clone(), r.trial_id.clone()), i))
            .collect();
        let rng = match session_seed {
            Some(s) => ChaCha8Rng::seed_from_u64(s),
            None => ChaCha8Rng::from_entropy(),
        };
        Ok(Self {
            dir: dir.to_path_buf(),
            studies: RwLock::new(studies),
            videos: RwLock::new(videos),
            sessions: RwLock::new(sessions),
            session_file: Mutex::new(open_append(&session_path)?),
            judgments: Mutex::new(JudgmentLog {
                file: open_append(&judgment_path)?,
                records,
                index,
            }),
            rng: Mutex::new(rng),
        })
    }

    pub fn add_study(&self, study: Study) -> Result<Arc<Study>, ServiceError> {
        let mut studies = self.studies.write().map_err(lock_err)?;
        let id = study.config.study_id.clone();
        if studies.contains_key(&id) {
            return Err(ServiceError::Conflict(format!("study {id} already exists")));
        }
        fs::write(self.dir.join("studies").join(format!("{id}.json")), serde_json::to_string_pretty(&study)?)?;
        let study = Arc::new(study);
        index_videos(&mut *self.videos.write().map_err(lock_err)?, &study);
        studies.insert(id, study.clone());
        Ok(study)
    }

    pub fn study(&self, id: &str) -> Option<Arc<Study>> {
        self.studies.read().ok()?.get(id).cloned()
    }

    pub fn study_ids(&self) -> Vec<String> {
        self.studies.read().map(|s| s.keys().cloned().collect()).unwrap_or_default()
    }

    /// Trajectory id and goal index behind a public video id.
    pub fn resolve_video(&self, public_id: &str) -> Option<(String, usize)> {
        self.videos.read().ok()?.get(public_id).cloned()
    }

    fn token(&self, rng: &mut ChaCha8Rng) -> String {
        format!("{:016x}{:016x}", rng.gen::<u64>(), rng.gen::<u64>())
    }

    pub fn create_session(&self, study_id: &str, consent: bool, familiarity: serde_json::Value) -> Result<Session, ServiceError> {
        let study = self.study(study_id).ok_or_else(|| ServiceError::NotFound(format!("unknown study {study_id}")))?;
        let (session_id, participant_token, order) = {
            let mut rng = self.rng.lock().map_err(lock_err)?;
            let mut order: Vec<usize> = (0..study.trials.len()).collect();
            order.shuffle(&mut *rng);
            (format!("s{}", self.token(&mut rng)), self.token(&mut rng), order)
        };
        let now = now_rfc3339();
        let session = Session {
            session_id,
            study_id: study_id.into(),
            participant_token,
            order,
            consent_at: consent.then(|| now.clone()),
            familiarity,
            created_at: now,
        };
        self.persist_session(&session)?;
        Ok(session)
    }

    fn persist_session(&self, session: &Session) -> Result<(), ServiceError> {
        let mut file = self.session_file.lock().map_err(lock_err)?;
        append_line(&mut file, session)?;
        self.sessions.write().map_err(lock_err)?.insert(session.session_id.clone(), session.clone());
        Ok(())
    }

    pub fn session(&self, id: &str) -> Option<Session> {
        self.sessions.read().ok()?.get(id).cloned()
    }

    /// Records consent; a no-op when already given.
    pub fn acknowledge_consent(&self, id: &str) -> Result<Session, ServiceError> {
        let mut session = self.session(id).ok_or_else(|| ServiceError::NotFound(format!("unknown session {id}")))?;
        if session.consent_at.is_none() {
            session.consent_at = Some(now_rfc3339());
            self.persist_session(&session)?;
        }
        Ok(session)
    }

    /// Appends a judgment. Returns `false` for an exact resubmission, which is not stored again.
    pub fn submit(&self, record: JudgmentRecord) -> Result<bool, ServiceError> {
        let mut log = self.judgments.lock().map_err(lock_err)?;
        let key = (record.session_id.clone(), record.trial_id.clone());
        if let Some(&i) = log.index.get(&key) {
            let prev = &log.records[i];
            if prev.choice == record.choice && prev.uncertainty == record.uncertainty && prev.rationale == record.rationale {
                return Ok(false);
            }
            return Err(ServiceError::Conflict(format!("trial {} already answered differently", record.trial_id)));
        }
        append_line(&mut log.file, &record)?;
        let n = log.records.len();
        log.records.push(record);
        log.index.insert(key, n);
        Ok(true)
    }

    pub fn answered(&self, session_id: &str, trial_id: &str) -> Option<Side> {
        let log = self.judgments.lock().ok()?;
        let &i = log.index.get(&(session_id.to_string(), trial_id.to_string()))?;
        Some(log.records[i].choice)
    }

    /// All judgments from sessions of a study, in submission order.
    pub fn records_for(&self, study_id: &str) -> Result<Vec<JudgmentRecord>, ServiceError> {
        let sessions = self.sessions.read().map_err(lock_err)?;
        let log = self.judgments.lock().map_err(lock_err)?;
        Ok(log
            .records
            .iter()
            .filter(|r| sessions.get(&r.session_id).is_some_and(|s| s.study_id == study_id))
            .cloned()
            .collect())
    }

    /// Re-reads the judgment file from disk, bypassing the in-memory index.
    pub fn raw_records(&self) -> Result<Vec<JudgmentRecord>, ServiceError> {
        read_json_lines(&self.dir.join("judgments.jsonl"))
    }
}

fn index_videos(videos: &mut HashMap<String, (String, usize)>, study: &Study) {
    for t in &study.trials {
        videos.insert(t.public_a.clone(), (t.def.video_a.clone(), t.def.goal_index));
        videos.insert(t.public_b.clone(), (t.def.video_b.clone(), t.def.goal_index));
    }
}

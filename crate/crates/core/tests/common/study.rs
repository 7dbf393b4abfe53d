use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;
use std::sync::Arc;

use ntt_core::corpus::{build_manifest, write_corpus, SplitPolicy};
use ntt_core::evalkit::{GroundTruth, JudgmentRecord, Side};
use ntt_core::navsim::{render_frame, MapSpec, FRAME_HEIGHT, FRAME_WIDTH};
use ntt_core::policies::{scripted_human_policy, HumanTraits, Source, Trajectory};
use ntt_core::service::{router, AppState, ServiceConfig, Study, StudyConfig};
use serde_json::{json, Value};

/// Scripted walkers relabelled per source: four generators per source, `goals` goals each.
pub fn synthetic_sources(map: &Arc<MapSpec>, goals: usize) -> Vec<Trajectory> {
    let mut out = Vec::new();
    for (si, source) in [Source::Human, Source::SymbolicAgent, Source::HybridAgent].into_iter().enumerate() {
        for g in 0..4 {
            let generator = format!("{}-gen{g}", source.as_str());
            let traits = HumanTraits::for_player(si * 4 + g, 11);
            for goal in 0..goals {
                let mut t = scripted_human_policy(map.clone(), goal, traits, (g * 100 + goal) as u64, &generator).unwrap();
                t.source = source;
                out.push(t);
            }
        }
    }
    out
}

/// Writes a corpus; the first trajectory gets pre-rendered frames.
pub fn write_study_corpus(root: &Path, map: &MapSpec, trajectories: &[Trajectory], seed: u64) {
    let manifest = build_manifest(trajectories, &SplitPolicy::default(), seed).unwrap();
    let first = &trajectories[0];
    let goal = map.goals.get(first.goal_index).copied();
    let frames = first
        .steps
        .iter()
        .map(|s| render_frame(map, &s.pose(), goal, FRAME_WIDTH, FRAME_HEIGHT))
        .collect();
    let mut by_id = HashMap::new();
    by_id.insert(first.id.clone(), frames);
    write_corpus(root, &manifest, trajectories, &by_id).unwrap();
}

/// Starts the service on an ephemeral port and returns its base url.
pub async fn spawn_service(corpus_dir: &Path, data_dir: &Path, map: MapSpec) -> String {
    let state = AppState::open(ServiceConfig {
        data_dir: data_dir.to_path_buf(),
        corpus_dir: corpus_dir.to_path_buf(),
        map,
        session_seed: Some(5),
    })
    .unwrap();
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move {
        axum::serve(listener, router(state)).await.unwrap();
    });
    format!("http://{addr}")
}

pub struct Lifecycle {
    pub judgments: usize,
    pub participant_bodies: Vec<String>,
    pub export: GroundTruth,
    pub raw_proportions: BTreeMap<String, f64>,
    pub forbidden_strings: HashSet<String>,
}

impl Lifecycle {
    /// Strings that must not appear in any participant-facing payload.
    pub fn leaks(&self) -> Vec<String> {
        let mut found = Vec::new();
        for body in &self.participant_bodies {
            for s in &self.forbidden_strings {
                if body.contains(s.as_str()) {
                    found.push(s.clone());
                }
            }
        }
        found.sort();
        found.dedup();
        found
    }

    pub fn max_proportion_gap(&self) -> f64 {
        let mut gap = 0.0f64;
        for t in &self.export.trials {
            let raw = self.raw_proportions.get(&t.trial.trial_id).copied();
            match (t.proportion_a, raw) {
                (Some(a), Some(b)) => gap = gap.max((a - b).abs()),
                (None, None) => {}
                _ => return f64::INFINITY,
            }
        }
        gap
    }
}

fn expect(ok: bool, what: &str) -> Result<(), String> {
    ok.then_some(()).ok_or_else(|| what.to_string())
}

async fn send(req: reqwest::RequestBuilder) -> Result<(u16, String), String> {
    let resp = req.send().await.map_err(|e| e.to_string())?;
    let status = resp.status().as_u16();
    Ok((status, resp.text().await.map_err(|e| e.to_string())?))
}

fn parse(body: &str) -> Result<Value, String> {
    serde_json::from_str(body).map_err(|e| format!("{e}: {body}"))
}

/// Runs create study, two sessions of ten judgments each and an export,
/// checking status codes along the way.
pub async fn run_lifecycle(base: &str, data_dir: &Path, study_id: &str) -> Result<Lifecycle, String> {
    let http = reqwest::Client::new();
    let mut bodies = Vec::new();

    let create = json!({ "config": StudyConfig::study1(study_id), "seed": 21 });
    let (code, body) = send(http.post(format!("{base}/studies")).json(&create)).await?;
    expect(code == 201, &format!("create study returned {code}: {body}"))?;
    bodies.push(body);
    let (code, _) = send(http.post(format!("{base}/studies")).json(&create)).await?;
    expect(code == 409, &format!("duplicate study returned {code}"))?;

    let (code, body) = send(http.get(format!("{base}/studies/{study_id}/export"))).await?;
    expect(code == 404, &format!("export before judgments returned {code}: {body}"))?;

    let mut judgments = 0;
    for (round, consent_up_front) in [false, true].into_iter().enumerate() {
        let (code, body) = send(
            http.post(format!("{base}/studies/{study_id}/sessions"))
                .json(&json!({ "consent": consent_up_front, "familiarity": { "played": round == 0 } })),
        )
        .await?;
        expect(code == 201, &format!("create session returned {code}: {body}"))?;
        let session = parse(&body)?;
        bodies.push(body);
        let sid = session["session_id"].as_str().ok_or("session id missing")?.to_string();
        let total = session["trial_count"].as_u64().ok_or("trial count missing")? as usize;
        expect(total == 10, &format!("expected 10 trials, got {total}"))?;

        if !consent_up_front {
            let (code, _) = send(http.get(format!("{base}/sessions/{sid}/trials/0"))).await?;
            expect(code == 403, &format!("trial before consent returned {code}"))?;
            let (code, body) = send(http.post(format!("{base}/sessions/{sid}/consent"))).await?;
            expect(code == 200, &format!("consent returned {code}"))?;
            bodies.push(body);
        }

        for k in 0..total {
            let (code, body) = send(http.get(format!("{base}/sessions/{sid}/trials/{k}"))).await?;
            expect(code == 200, &format!("trial {k} returned {code}: {body}"))?;
            let trial = parse(&body)?;
            bodies.push(body);
            let trial_id = trial["trial_id"].as_str().ok_or("trial id missing")?.to_string();
            for side in ["video_a", "video_b"] {
                let video = trial[side].as_str().ok_or("video id missing")?;
                let (code, body) = send(http.get(format!("{base}/replays/{video}"))).await?;
                expect(code == 200, &format!("replay returned {code}: {body}"))?;
                bodies.push(body);
            }
            if k == 0 {
                let video = trial["video_a"].as_str().unwrap();
                let resp = http.get(format!("{base}/replays/{video}/frames/0")).send().await.map_err(|e| e.to_string())?;
                expect(resp.status().as_u16() == 200, "frame request failed")?;
                let png = resp.bytes().await.map_err(|e| e.to_string())?;
                expect(png.starts_with(b"\x89PNG"), "frame is not a PNG")?;
            }

            let bad = json!({ "trial_id": trial_id, "choice": "A", "uncertainty": 0 });
            let (code, _) = send(http.post(format!("{base}/sessions/{sid}/judgments")).json(&bad)).await?;
            expect(code == 400, &format!("uncertainty 0 returned {code}"))?;

            let choice = if (k + round) % 3 == 0 { "B" } else { "A" };
            let judgment = json!({
                "trial_id": trial_id,
                "choice": choice,
                "uncertainty": 1 + (k % 5),
                "rationale": format!("round {round} position {k}"),
            });
            let (code, body) = send(http.post(format!("{base}/sessions/{sid}/judgments")).json(&judgment)).await?;
            expect(code == 201, &format!("judgment returned {code}: {body}"))?;
            bodies.push(body);
            judgments += 1;
            let (code, _) = send(http.post(format!("{base}/sessions/{sid}/judgments")).json(&judgment)).await?;
            expect(code == 200, &format!("identical resubmission returned {code}"))?;
            let mut changed = judgment.clone();
            changed["choice"] = json!(if choice == "A" { "B" } else { "A" });
            let (code, _) = send(http.post(format!("{base}/sessions/{sid}/judgments")).json(&changed)).await?;
            expect(code == 409, &format!("conflicting resubmission returned {code}"))?;
        }
        let (code, _) = send(http.get(format!("{base}/sessions/{sid}/trials/{total}"))).await?;
        expect(code == 404, &format!("out-of-range trial returned {code}"))?;
    }

    let (code, body) = send(http.get(format!("{base}/studies/{study_id}/export"))).await?;
    expect(code == 200, &format!("export returned {code}: {body}"))?;
    let export: GroundTruth = serde_json::from_str(&body).map_err(|e| e.to_string())?;

    let raw = std::fs::read_to_string(data_dir.join("judgments.jsonl")).map_err(|e| e.to_string())?;
    let mut tally: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for line in raw.lines().filter(|l| !l.trim().is_empty()) {
        let r: JudgmentRecord = serde_json::from_str(line).map_err(|e| e.to_string())?;
        let e = tally.entry(r.trial_id).or_default();
        e.0 += (r.choice == Side::A) as usize;
        e.1 += 1;
    }
    let raw_proportions = tally.into_iter().map(|(k, (a, n))| (k, a as f64 / n as f64)).collect();

    let study_file = data_dir.join("studies").join(format!("{study_id}.json"));
    let study: Study = serde_json::from_slice(&std::fs::read(study_file).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let mut forbidden: HashSet<String> = [Source::Human, Source::SymbolicAgent, Source::HybridAgent]
        .iter()
        .map(|s| format!("\"{}\"", s.as_str()))
        .collect();
    for t in &study.trials {
        forbidden.insert(t.def.video_a.clone());
        forbidden.insert(t.def.video_b.clone());
    }
    forbidden.extend(["source".to_string(), "generator".to_string()]);

    Ok(Lifecycle {
        judgments,
        participant_bodies: bodies,
        export,
        raw_proportions,
        forbidden_strings: forbidden,
    })
}

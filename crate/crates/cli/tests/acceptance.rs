//! Acceptance suite: one PASS/FAIL line per criterion, with its runtime
//! against the time budget. Exits non-zero if any criterion fails.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use http_body_util::BodyExt;
use rand::prelude::*;
use serde_json::{json, Value};
use tower::ServiceExt;

use sdw_core::caption::{
    assemble_sentences, parse_webvtt, serialize_webvtt, AssemblyPolicy, CaptionCue, CaptionError, SentenceSpan,
};
use sdw_core::ocr::{track_cues, TrackConfig};
use sdw_core::pose::{
    self, bbox_filter, decode_pose, encode_pose, outlier_filter, outlier_flags, FilterConfig, Group, PoseError,
};
use sdw_core::segment::{plan_segments, CaptionSource, ClipManifest, PlanParams};
use sdw_core::store::{
    self, compute_stats, tokenize, verify_release, DatasetStats, ReviewStatus, SentenceRecord, StatusSet, Store,
};
use sdw_testkit as kit;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn main() {
    let criteria: Vec<(&str, Duration, fn() -> Outcome)> = vec![
        ("webvtt conformance", Duration::from_secs(5), webvtt_conformance),
        ("sentence assembly oracle", Duration::from_secs(5), sentence_assembly),
        ("figure-1 fixture", Duration::from_secs(5), figure_one),
        ("ocr reconstruction robustness", Duration::from_secs(30), ocr_robustness),
        ("pose filter oracle", Duration::from_secs(30), pose_filter_oracle),
        ("sdwp codec", Duration::from_secs(10), sdwp_codec),
        ("stats determinism", Duration::from_secs(10), stats_determinism),
        ("end-to-end dry run", Duration::from_secs(30), end_to_end),
        ("review api", Duration::from_secs(30), review_api),
    ];
    let mut failed = 0;
    for (name, budget, run) in criteria {
        let started = Instant::now();
        let outcome = run();
        let elapsed = started.elapsed();
        let outcome = outcome.and_then(|detail| {
            if elapsed <= budget {
                Ok(detail)
            } else {
                Err(format!("{detail}; over budget"))
            }
        });
        let secs = elapsed.as_secs_f64();
        let limit = budget.as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS  {name:<32} {secs:>7.3}s / {limit:>4.0}s  {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name:<32} {secs:>7.3}s / {limit:>4.0}s  {detail}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}

// ---------------------------------------------------------------------------

fn workspace_path(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

fn webvtt_conformance() -> Outcome {
    let dir = workspace_path("crates/core/tests/fixtures/vtt");
    let mut fixtures = 0;
    let mut paths: Vec<PathBuf> = std::fs::read_dir(&dir)
        .map_err(|e| format!("{}: {e}", dir.display()))?
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "vtt"))
        .collect();
    paths.sort();
    for path in paths {
        let name = path.file_name().unwrap().to_string_lossy().into_owned();
        let expected: Value =
            serde_json::from_str(&std::fs::read_to_string(path.with_extension("json")).unwrap()).unwrap();
        let result = parse_webvtt(&std::fs::read(&path).unwrap());
        if expected.get("error").is_some() {
            ensure(result == Err(CaptionError::MissingHeader), || format!("{name}: expected missing header"))?;
        } else {
            let parsed = result.map_err(|e| format!("{name}: {e}"))?;
            let cues: Vec<CaptionCue> = expected["cues"]
                .as_array()
                .unwrap()
                .iter()
                .enumerate()
                .map(|(i, c)| CaptionCue {
                    index: i,
                    start_ms: c["start_ms"].as_u64().unwrap(),
                    end_ms: c["end_ms"].as_u64().unwrap(),
                    text: c["text"].as_str().unwrap().to_owned(),
                    raw_settings: c["raw_settings"].as_str().map(str::to_owned),
                })
                .collect();
            ensure(parsed.cues == cues, || format!("{name}: cue mismatch"))?;
            ensure(
                parsed.diagnostics.len() as u64 == expected["diagnostics"].as_u64().unwrap(),
                || format!("{name}: diagnostics {:?}", parsed.diagnostics),
            )?;
        }
        fixtures += 1;
    }
    ensure(fixtures >= 20, || format!("only {fixtures} fixtures"))?;

    let mut rng = kit::rng(0x7717);
    for round in 0..1000 {
        let cues = kit::random_cue_list(&mut rng);
        let text = serialize_webvtt(&cues).map_err(|e| format!("round {round}: {e}"))?;
        let parsed = parse_webvtt(text.as_bytes()).map_err(|e| format!("round {round}: {e}"))?;
        ensure(parsed.cues == cues && parsed.diagnostics.is_empty(), || {
            format!("round {round}: round trip differs")
        })?;
    }
    Ok(format!("{fixtures} fixtures, 1000 round trips"))
}

fn sentence_assembly() -> Outcome {
    let mut rng = kit::rng(0x5e17);
    let policy = AssemblyPolicy::default();
    let sentences: Vec<String> = (0..500).map(|_| kit::random_sentence(&mut rng, 18)).collect();
    let (cues, hulls) = kit::fragment_sentences(&mut rng, &sentences, policy.max_gap_ms);
    let spans = assemble_sentences(&cues, &policy);
    ensure(spans.len() == sentences.len(), || {
        format!("{} spans for {} sentences", spans.len(), sentences.len())
    })?;
    let mut recovered = 0;
    for ((span, sentence), hull) in spans.iter().zip(&sentences).zip(&hulls) {
        if span.text == *sentence && (span.start_ms, span.end_ms) == *hull && span.terminal {
            recovered += 1;
        }
    }
    ensure(recovered == sentences.len(), || format!("{recovered}/500 recovered"))?;
    Ok(format!("{recovered}/500 sentences verbatim, {} cues", cues.len()))
}

fn demo_manifest(clip_id: &str, duration_ms: u64) -> ClipManifest {
    ClipManifest {
        clip_id: clip_id.into(),
        media_uri: format!("media/{clip_id}.mp4"),
        duration_ms,
        fps: 30.0,
        caption_source: CaptionSource::Vtt,
        signer_id: "anchor-a".into(),
        channel_id: "channel-1".into(),
    }
}

fn figure_one() -> Outcome {
    let cues = vec![
        CaptionCue::new(0, 60_000, 62_000, "the change will happen"),
        CaptionCue::new(1, 62_000, 63_800, "in the third quarter"),
        CaptionCue::new(2, 63_800, 65_000, "of this year."),
    ];
    let spans = assemble_sentences(&cues, &AssemblyPolicy::default());
    ensure(spans.len() == 1, || format!("{} spans", spans.len()))?;
    let span = &spans[0];
    ensure(span.text == "the change will happen in the third quarter of this year.", || span.text.clone())?;
    ensure(span.end_ms - span.start_ms == 5000, || "span is not 5000 ms".into())?;
    let tokens = tokenize(&span.text).len();
    ensure(tokens == 11, || format!("{tokens} tokens"))?;

    let long_text = (0..33).map(|i| kit::zipf_vocabulary(40)[i].clone()).collect::<Vec<_>>().join(" ") + ".";
    let long = SentenceSpan {
        text: long_text,
        start_ms: 100_000,
        end_ms: 126_000,
        cue_indices: vec![0],
        terminal: true,
    };
    let manifest = demo_manifest("fig", 300_000);
    let plan = plan_segments(&[long.clone()], &manifest, PlanParams::default()).map_err(|e| e.to_string())?;
    ensure(plan.entries[0].flags.is_empty(), || format!("flags {:?}", plan.entries[0].flags))?;
    let records = store::records_from_plan("fig", &[long], &plan);
    ensure(records.len() == 1 && records[0].word_count == 33, || "33-word record missing".into())?;
    Ok("1 span / 11 tokens; 26 s, 33-word span unflagged".into())
}

fn ocr_robustness() -> Outcome {
    let mut rng = kit::rng(0x0c7);
    let fps = 30.0;
    let cfg = TrackConfig::for_fps(fps).map_err(|e| e.to_string())?;
    let frame_ms = 1000.0 / fps;
    let mut good = 0;
    let mut first_failure = None;
    for t in 0..200 {
        let track = kit::noisy_track(&mut rng, fps, kit::OcrNoise::default());
        let cues = track_cues(&track.stream, &cfg);
        let within = |got: u64, want: u64| (got as f64 - want as f64).abs() <= frame_ms + 1.0;
        let ok = cues.len() == track.truth.len()
            && cues.iter().zip(&track.truth).all(|(c, truth)| {
                c.text == truth.text
                    && within(c.start_ms, track.ts(truth.first_frame))
                    && within(c.end_ms, track.ts(truth.last_frame + 1))
            });
        if ok {
            good += 1;
        } else if first_failure.is_none() {
            first_failure = Some(t);
        }
    }
    let rate = good as f64 / 200.0;
    ensure(rate >= 0.99, || format!("{good}/200 tracks (first failure: {first_failure:?})"))?;
    Ok(format!("{good}/200 tracks exact within ±1 frame"))
}

fn pose_filter_oracle() -> Outcome {
    let mut rng = kit::rng(0x905e);
    let cfg = FilterConfig::default();
    let mut flagged = 0usize;
    for case in 0..1000 {
        let mut seq = kit::smooth_sequence(&mut rng, "p-0000", 100, 0.05);
        for group in Group::ALL {
            let offset = rng.random_range(cfg.max_velocity * 1.5..0.8);
            kit::inject_jumps(&mut rng, &mut seq, group, offset);
        }
        for group in Group::ALL {
            let got = outlier_flags(&seq, group, cfg.max_velocity);
            let want = kit::brute_force_flags(&seq, group, cfg.max_velocity);
            ensure(got == want, || format!("case {case}: {group:?} flags disagree with reference"))?;
            flagged += got.iter().filter(|&&f| f).count();
        }
        let boxed = bbox_filter(&seq, &cfg);
        ensure(bbox_filter(&boxed, &cfg) == boxed, || format!("case {case}: bbox filter not idempotent"))?;
        let once = outlier_filter(&boxed, &cfg);
        ensure(outlier_filter(&once, &cfg) == once, || format!("case {case}: outlier filter not idempotent"))?;

        let clean = kit::smooth_sequence(&mut rng, "p-0000", 100, cfg.max_velocity * 0.95);
        for group in Group::ALL {
            ensure(outlier_flags(&clean, group, cfg.max_velocity).iter().all(|f| !f), || {
                format!("case {case}: clean sequence flagged")
            })?;
        }
        ensure(outlier_filter(&bbox_filter(&clean, &cfg), &cfg) == clean, || {
            format!("case {case}: clean sequence modified")
        })?;
    }
    ensure(flagged > 0, || "no frames were flagged at all".into())?;
    Ok(format!("1000 sequences, {flagged} flags all matching reference"))
}

fn sdwp_codec() -> Outcome {
    let mut rng = kit::rng(0x5d3);
    for round in 0..1000 {
        let frames = rng.random_range(0..24);
        let seq = kit::random_sequence(&mut rng, "s-0000", frames);
        let bytes = encode_pose(&seq).map_err(|e| format!("round {round}: {e}"))?;
        let back = decode_pose(&bytes, "s-0000").map_err(|e| format!("round {round}: {e}"))?;
        ensure(back == seq.canonicalized(), || format!("round {round}: decoded sequence differs"))?;
        ensure(encode_pose(&back).unwrap() == bytes, || format!("round {round}: re-encoding differs"))?;
    }
    let seq = kit::random_sequence(&mut rng, "s-0001", 150);
    let bytes = encode_pose(&seq).map_err(|e| e.to_string())?;
    ensure(bytes.len() == 962_422, || format!("150 frames encode to {} bytes", bytes.len()))?;

    let mut magic = bytes.clone();
    magic[..4].copy_from_slice(b"SDWQ");
    let mut version = bytes.clone();
    version[4..6].copy_from_slice(&7u16.to_le_bytes());
    let truncated = &bytes[..bytes.len() - 100];
    let errors = [
        decode_pose(&magic, "x").err(),
        decode_pose(&version, "x").err(),
        decode_pose(truncated, "x").err(),
    ];
    let ok = matches!(errors[0], Some(PoseError::BadMagic { .. }))
        && matches!(errors[1], Some(PoseError::UnsupportedVersion(7)))
        && matches!(errors[2], Some(PoseError::Truncated { .. }));
    ensure(ok, || format!("unexpected errors {errors:?}"))?;
    Ok("1000 round trips; 150 frames = 962422 bytes; 3 distinct errors".into())
}

fn stats_determinism() -> Outcome {
    let mut rng = kit::rng(0x21bf);
    let corpus = kit::zipf_corpus(&mut rng, 1000, 3000, 1.07);
    let records: Vec<SentenceRecord> = corpus
        .sentences
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let start = i as u64 * 10_000;
            SentenceRecord::new(
                format!("zipf{}-{i:04}", i % 4),
                format!("zipf{}", i % 4),
                s.clone(),
                start,
                start + rng.random_range(500..20_000),
                true,
            )
        })
        .collect();
    let signers: BTreeMap<String, String> = (0..4).map(|c| (format!("zipf{c}"), format!("signer{}", c % 3))).collect();
    let include = StatusSet::default();
    let stats = compute_stats(&records, &include, &signers);
    ensure(stats.n_words == corpus.counts.values().sum::<u64>(), || "word count differs".into())?;
    ensure(stats.vocab_size == corpus.counts.len() as u64, || "vocab size differs".into())?;
    let mut expected: Vec<(String, u64)> = corpus.counts.clone().into_iter().collect();
    expected.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let got: Vec<(String, u64)> = stats.histogram.iter().map(|e| (e.token.clone(), e.count)).collect();
    ensure(got == expected, || "histogram differs from generator counts".into())?;

    for trial in 0..200 {
        let mut marked = records.clone();
        let p = rng.random_range(0.0..1.0);
        for r in marked.iter_mut() {
            if rng.random_bool(p) {
                r.status = ReviewStatus::Bad;
            }
        }
        let after = compute_stats(&marked, &include, &signers);
        let counts: BTreeMap<&str, u64> = stats.histogram.iter().map(|e| (e.token.as_str(), e.count)).collect();
        let monotone = after.total_hours <= stats.total_hours
            && after.n_sentences <= stats.n_sentences
            && after.n_words <= stats.n_words
            && after.vocab_size <= stats.vocab_size
            && after.n_signers <= stats.n_signers
            && after.histogram.iter().all(|e| e.count <= counts[e.token.as_str()]);
        ensure(monotone, || format!("trial {trial}: a statistic increased"))?;
    }

    let data = tempfile::tempdir().map_err(|e| e.to_string())?;
    let store = Store::open(data.path()).map_err(|e| e.to_string())?;
    for c in 0..4 {
        let clip = format!("zipf{c}");
        let mut m = demo_manifest(&clip, 20_000_000);
        m.signer_id = signers[&clip].clone();
        store.put_manifest(m).map_err(|e| e.to_string())?;
        let mut mine: Vec<SentenceRecord> = records.iter().filter(|r| r.clip_id == clip).cloned().collect();
        for r in mine.iter_mut().step_by(5) {
            r.status = ReviewStatus::Bad;
        }
        store.replace_clip_records(&clip, mine).map_err(|e| e.to_string())?;
    }
    let out = data.path().join("release");
    store.export_release(&out, &include).map_err(|e| e.to_string())?;
    let saved: DatasetStats =
        serde_json::from_slice(&std::fs::read(out.join("stats.json")).unwrap()).map_err(|e| e.to_string())?;
    let reread: Vec<SentenceRecord> = store::read_jsonl(&out.join("sentences.jsonl")).map_err(|e| e.to_string())?;
    let recomputed = compute_stats(&reread, &include, &signers);
    ensure(saved == recomputed, || "exported stats.json differs from recomputation".into())?;
    verify_release(&out).map_err(|e| e.to_string())?;
    Ok(format!(
        "{} words, {} vocab exact; 200 exclusion trials; export self-consistent",
        stats.n_words, stats.vocab_size
    ))
}

fn sdw(data: &Path, args: &[&str]) -> Result<String, String> {
    let output = Command::new(env!("CARGO_BIN_EXE_sdw"))
        .arg("--data")
        .arg(data)
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .map_err(|e| e.to_string())?;
    if output.status.success() {
        Ok(String::from_utf8_lossy(&output.stdout).into_owned())
    } else {
        Err(format!("sdw {}: {}", args.join(" "), String::from_utf8_lossy(&output.stderr)))
    }
}

async fn get_json(app: &axum::Router, uri: &str) -> Result<(StatusCode, Value), String> {
    let resp = app
        .clone()
        .oneshot(Request::get(uri).body(Body::empty()).unwrap())
        .await
        .map_err(|e| e.to_string())?;
    let status = resp.status();
    let bytes = resp.into_body().collect().await.map_err(|e| e.to_string())?.to_bytes();
    Ok((status, serde_json::from_slice(&bytes).unwrap_or(Value::Null)))
}

fn end_to_end() -> Outcome {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    let work = tempfile::tempdir().map_err(|e| e.to_string())?;
    let data = work.path().join("data");
    let p = |p: &Path| p.to_str().unwrap().to_owned();

    sdw(&data, &["clip", "add", "--manifest", &p(&fixtures.join("news_demo.json"))])?;
    sdw(&data, &["captions", "parse", "--vtt", &p(&fixtures.join("news_demo.vtt")), "--clip", "news_demo"])?;
    let spans_out = sdw(&data, &["sentences", "assemble", "--clip", "news_demo"])?;
    let spans: Vec<SentenceSpan> = spans_out.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    ensure(spans.len() == 6, || format!("{} spans", spans.len()))?;
    ensure(spans[1].text == "the change will happen in the third quarter of this year.", || spans[1].text.clone())?;
    let cutlist = work.path().join("cuts.tsv");
    sdw(&data, &["segment", "plan", "--clip", "news_demo", "--emit-cutlist", &p(&cutlist)])?;
    ensure(std::fs::read_to_string(&cutlist).unwrap().lines().count() == 7, || "cut list length".into())?;
    ensure(sdw(&data, &["segment", "plan", "--clip", "news_demo"]).is_err(), || {
        "re-planning without --force should refuse".into()
    })?;

    let store = Store::open(&data).map_err(|e| e.to_string())?;
    let records = store.records();
    ensure(records.len() == 5, || format!("{} records (one span is too short)", records.len()))?;
    let mut rng = kit::rng(0xe2e);
    for record in &records {
        let frames = (record.duration_ms() * 30 / 1000) as usize;
        let mut seq = kit::smooth_sequence(&mut rng, &record.sentence_id, frames, 0.03);
        kit::inject_jumps(&mut rng, &mut seq, Group::RightHand, 0.5);
        let stream = work.path().join(format!("{}.jsonl", record.sentence_id));
        let mut wire = Vec::new();
        pose::write_wire_frames(&seq.frames, &mut wire).unwrap();
        std::fs::write(&stream, wire).unwrap();
        sdw(&data, &["pose", "ingest", "--sentence", &record.sentence_id, "--fps", "30", "--stream", &p(&stream)])?;
        sdw(&data, &["pose", "filter", "--sentence", &record.sentence_id])?;
    }
    sdw(&data, &["stats", "--histogram", &p(&work.path().join("vocab.csv"))])?;
    let release = work.path().join("release");
    sdw(&data, &["export", "--out", &p(&release)])?;
    let verified = verify_release(&release).map_err(|e| format!("release does not validate: {e}"))?;
    ensure(verified.n_sentences == 5, || "release sentence count".into())?;
    let pose_files = std::fs::read_dir(release.join("pose")).unwrap().count();
    ensure(pose_files == 5, || format!("{pose_files} pose files in release"))?;

    let stats_file: Value = serde_json::from_slice(&std::fs::read(data.join("stats/stats.json")).unwrap()).unwrap();
    let store = Arc::new(Store::open(&data).map_err(|e| e.to_string())?);
    let app = sdw_server::router(store, None);
    let runtime = tokio::runtime::Runtime::new().unwrap();
    let (status, api_stats) = runtime.block_on(get_json(&app, "/api/stats"))?;
    ensure(status == StatusCode::OK && api_stats == stats_file, || "GET /api/stats differs from stats.json".into())?;
    let (_, detail) = runtime.block_on(get_json(&app, "/api/sentences/news_demo-0001"))?;
    ensure(detail["word_count"] == 11 && detail["pose"]["fps"] == 30.0, || format!("detail {detail}"))?;
    Ok(format!("6 spans -> 5 records -> release of {} words", verified.n_words))
}

async fn call(app: &axum::Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let mut req = Request::builder().method(method).uri(uri);
    let body = match body {
        Some(v) => {
            req = req.header("content-type", "application/json");
            Body::from(v.to_string())
        }
        None => Body::empty(),
    };
    let resp = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

fn review_api() -> Outcome {
    let data = tempfile::tempdir().map_err(|e| e.to_string())?;
    let store = Store::open(data.path()).map_err(|e| e.to_string())?;
    let mut rng = kit::rng(0xa91);
    let statuses = [ReviewStatus::Good, ReviewStatus::Bad, ReviewStatus::Undecided];
    for c in 0..8 {
        let clip = format!("clip{c}");
        let records = (0..125)
            .map(|i| {
                let start = rng.random_range(0..3_000_000);
                let mut r = SentenceRecord::new(
                    format!("{clip}-{i:04}"),
                    clip.clone(),
                    kit::random_sentence(&mut rng, 12),
                    start,
                    start + 2_000,
                    true,
                );
                r.status = *statuses.choose(&mut rng).unwrap();
                r
            })
            .collect();
        store.replace_clip_records(&clip, records).map_err(|e| e.to_string())?;
    }
    let store = Arc::new(store);
    let all = store.records();
    ensure(all.len() == 1000, || format!("{} records", all.len()))?;
    let app = sdw_server::router(store.clone(), None);
    let runtime = tokio::runtime::Builder::new_multi_thread().worker_threads(4).enable_all().build().unwrap();

    runtime.block_on(async {
        for round in 0..25 {
            let id = &all[round * 37].sentence_id;
            let uri = format!("/api/sentences/{id}");
            let rev = store.get(id).unwrap().revision;
            let spawn = |status: &'static str| {
                let (app, uri) = (app.clone(), uri.clone());
                tokio::spawn(async move {
                    call(&app, Method::PATCH, &uri, Some(json!({"status": status, "expected_revision": rev}))).await
                })
            };
            let (a, b) = tokio::join!(spawn("good"), spawn("bad"));
            let results = [a.unwrap(), b.unwrap()];
            let wins = results.iter().filter(|r| r.0 == StatusCode::OK).count();
            let losers: Vec<_> = results.iter().filter(|r| r.0 == StatusCode::CONFLICT).collect();
            ensure(wins == 1 && losers.len() == 1, || format!("round {round}: {wins} winners"))?;
            ensure(losers[0].1["current_revision"] == rev + 1, || format!("round {round}: {}", losers[0].1))?;
        }
        Ok::<_, String>(())
    })?;

    let all = store.records();
    let filters = ["", "status=bad", "status=good&clip_id=clip3", "q=THE", "q=rain&status=undecided", "clip_id=none"];
    let mut pages_read = 0;
    for filter in filters {
        for page_size in [1usize, 7, 50, 333, 500] {
            let mut seen: Vec<String> = Vec::new();
            let mut page = 1;
            let total = loop {
                let uri = format!("/api/sentences?{filter}&page={page}&page_size={page_size}");
                let (status, body) = runtime.block_on(call(&app, Method::GET, &uri, None));
                ensure(status == StatusCode::OK, || format!("{uri}: {status}"))?;
                let items = body["items"].as_array().unwrap();
                ensure(items.len() <= page_size, || format!("{uri}: oversize page"))?;
                seen.extend(items.iter().map(|i| i["sentence_id"].as_str().unwrap().to_owned()));
                pages_read += 1;
                let total = body["total"].as_u64().unwrap() as usize;
                if page * page_size >= total {
                    break total;
                }
                page += 1;
            };
            let query = |k: &str| filter.split('&').find_map(|kv| kv.strip_prefix(&format!("{k}=")));
            let expected: Vec<String> = all
                .iter()
                .filter(|r| query("status").is_none_or(|s| r.status.as_str() == s))
                .filter(|r| query("clip_id").is_none_or(|c| r.clip_id == c))
                .filter(|r| query("q").is_none_or(|q| r.english_text.to_lowercase().contains(&q.to_lowercase())))
                .map(|r| r.sentence_id.clone())
                .collect();
            ensure(seen.len() == total && seen == expected, || {
                format!("`{filter}` page_size {page_size}: pages do not partition the filtered set")
            })?;
        }
    }
    Ok(format!("25 races with one winner each; {pages_read} pages partition 1000 records"))
}

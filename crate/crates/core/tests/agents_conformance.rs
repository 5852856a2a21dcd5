//! One contract suite, run against in-process stubs and against the HTTP
//! clients talking to a loopback server backed by the same stubs.

use std::time::{Duration, Instant};

use vidstory_core::agents::stub::StubAgents;
use vidstory_core::agents::{
    ActionLabel, AgentConfig, AgentError, Agents, ChatParams, Detection, DetectorParams, Endpoints,
};
use vidstory_core::ingest::{ClipSpan, FrameImage, FrameRef, FrameSource, SampledClip, SyntheticFrames};
use vidstory_core::loopback::{Faults, LoopbackServer};

const SEED: u64 = 42;
const SCRIPTED_PROMPT: &str = "describe the clip";
const SCRIPTED_REPLY: &str = "A dog runs along the beach.";

fn base_config() -> AgentConfig {
    AgentConfig {
        image_embedding_dim: 32,
        text_embedding_dim: 48,
        retry_backoff: Duration::ZERO,
        timeout: Duration::from_secs(5),
        ..AgentConfig::default()
    }
}

fn stub_agents(cfg: &AgentConfig) -> Agents {
    let mut stubs = StubAgents::new(SEED, cfg);
    stubs.detector.plant(
        3,
        vec![
            Detection::new("person", [0.1, 0.1, 0.4, 0.5], 0.9).unwrap(),
            Detection::new("dog", [0.5, 0.5, 0.7, 0.8], 0.35).unwrap(),
            Detection::new("spaceship", [0.2, 0.2, 0.3, 0.3], 0.95).unwrap(),
            Detection::new("dog", [0.6, 0.1, 0.9, 0.4], 0.4).unwrap(),
        ],
    );
    stubs.action.plant(
        1,
        ActionLabel {
            label: "surfing".into(),
            score: 0.8,
        },
    );
    stubs.captioner.plant(3, "a person walking a dog");
    stubs.chat.insert(SCRIPTED_PROMPT, SCRIPTED_REPLY);
    stubs.into_agents()
}

struct Harness {
    name: &'static str,
    agents: Agents,
    cfg: AgentConfig,
    _server: Option<LoopbackServer>,
}

fn harnesses() -> Vec<Harness> {
    let cfg = base_config();
    let server = LoopbackServer::start(stub_agents(&cfg)).unwrap();
    let http_cfg = AgentConfig {
        endpoints: Endpoints::with_base(&server.base_url()),
        ..cfg.clone()
    };
    vec![
        Harness {
            name: "stub",
            agents: stub_agents(&cfg),
            cfg: cfg.clone(),
            _server: None,
        },
        Harness {
            name: "http",
            agents: Agents::http(&http_cfg).unwrap(),
            cfg: http_cfg,
            _server: Some(server),
        },
    ]
}

fn frame(index: u64) -> FrameImage {
    SyntheticFrames::new("conformance")
        .frame(FrameRef {
            index,
            timestamp: index as f64,
        })
        .unwrap()
}

fn clip(clip_index: usize, indices: &[u64]) -> (SampledClip, Vec<FrameImage>) {
    let frames: Vec<FrameImage> = indices.iter().map(|&i| frame(i)).collect();
    let span = ClipSpan {
        clip_index,
        start_frame: indices[0],
        end_frame: indices[indices.len() - 1] + 1,
    };
    let clip = SampledClip {
        span,
        frames: frames.iter().map(|f| f.frame).collect(),
    };
    (clip, frames)
}

fn detector_params() -> DetectorParams {
    DetectorParams {
        box_threshold: 0.4,
        text_threshold: 0.25,
        categories: vec!["person".into(), "dog".into()],
    }
}

#[test]
fn embeddings_are_deterministic_and_sized() {
    for h in harnesses() {
        let a = h.agents.image_embedder.embed_image(&frame(7)).unwrap();
        let b = h.agents.image_embedder.embed_image(&frame(7)).unwrap();
        assert_eq!(a, b, "{}", h.name);
        assert_eq!(a.dim(), h.cfg.image_embedding_dim, "{}", h.name);
        assert_ne!(a, h.agents.image_embedder.embed_image(&frame(8)).unwrap());

        let t = h.agents.text_embedder.embed_text("a red kayak").unwrap();
        assert_eq!(t, h.agents.text_embedder.embed_text("a red kayak").unwrap());
        assert_eq!(t.dim(), h.cfg.text_embedding_dim, "{}", h.name);
        let norm: f64 = t.as_slice().iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-9, "{}", h.name);
    }
}

#[test]
fn both_transports_give_identical_outputs() {
    let hs = harnesses();
    let (stub, http) = (&hs[0].agents, &hs[1].agents);
    for i in [0u64, 3, 11] {
        assert_eq!(
            stub.image_embedder.embed_image(&frame(i)).unwrap(),
            http.image_embedder.embed_image(&frame(i)).unwrap()
        );
        assert_eq!(
            stub.detector.detect_objects(&frame(i), &detector_params()).unwrap(),
            http.detector.detect_objects(&frame(i), &detector_params()).unwrap()
        );
        assert_eq!(
            stub.captioner.caption_frame(&frame(i), "describe").unwrap(),
            http.captioner.caption_frame(&frame(i), "describe").unwrap()
        );
    }
    let (c, frames) = clip(4, &[40, 45, 50]);
    assert_eq!(
        stub.action.recognize_action(&c, &frames).unwrap(),
        http.action.recognize_action(&c, &frames).unwrap()
    );
    let params = ChatParams::default();
    assert_eq!(
        stub.chat.complete("unscripted prompt", &params).unwrap(),
        http.chat.complete("unscripted prompt", &params).unwrap()
    );
}

#[test]
fn detections_are_filtered_by_threshold_and_category() {
    for h in harnesses() {
        let dets = h.agents.detector.detect_objects(&frame(3), &detector_params()).unwrap();
        let labels: Vec<(&str, f64)> = dets.iter().map(|d| (d.label.as_str(), d.score)).collect();
        assert_eq!(labels, vec![("person", 0.9), ("dog", 0.4)], "{}", h.name);

        let open = DetectorParams {
            categories: vec![],
            ..detector_params()
        };
        let all = h.agents.detector.detect_objects(&frame(3), &open).unwrap();
        assert_eq!(all.len(), 3, "{}", h.name);
        for i in 0..30 {
            for d in h.agents.detector.detect_objects(&frame(i), &detector_params()).unwrap() {
                assert!(d.score >= 0.4);
                assert!(d.label == "person" || d.label == "dog");
                d.validate().unwrap();
            }
        }
    }
}

#[test]
fn planted_action_and_caption_are_returned() {
    for h in harnesses() {
        let (c, frames) = clip(1, &[10, 12, 14]);
        let label = h.agents.action.recognize_action(&c, &frames).unwrap();
        assert_eq!(label.label, "surfing", "{}", h.name);
        let cap = h.agents.captioner.caption_frame(&frame(3), "describe").unwrap();
        assert_eq!(cap.text, "a person walking a dog", "{}", h.name);
        assert_eq!(cap.frame_index, 3);
    }
}

#[test]
fn scripted_chat_and_truncation() {
    for h in harnesses() {
        let params = ChatParams::default();
        assert_eq!(h.agents.chat.complete(SCRIPTED_PROMPT, &params).unwrap(), SCRIPTED_REPLY);
        let short = ChatParams {
            max_tokens: 2,
            ..params
        };
        let cut = h.agents.chat.complete(SCRIPTED_PROMPT, &short).unwrap();
        assert_eq!(cut, &SCRIPTED_REPLY[..8], "{}", h.name);
    }
}

#[test]
fn empty_inputs_are_invalid() {
    for h in harnesses() {
        let params = ChatParams::default();
        assert!(matches!(h.agents.text_embedder.embed_text("  "), Err(AgentError::InvalidInput(_))));
        assert!(matches!(h.agents.chat.complete("", &params), Err(AgentError::InvalidInput(_))));
        assert!(matches!(
            h.agents.captioner.caption_frame(&frame(1), ""),
            Err(AgentError::InvalidInput(_))
        ));
        let (c, _) = clip(0, &[1]);
        assert!(matches!(
            h.agents.action.recognize_action(&c, &[]),
            Err(AgentError::InvalidInput(_))
        ));
    }
}

fn http_against(server: &LoopbackServer, retries: u32, timeout: Duration) -> Agents {
    let cfg = AgentConfig {
        endpoints: Endpoints::with_base(&server.base_url()),
        retries,
        timeout,
        ..base_config()
    };
    Agents::http(&cfg).unwrap()
}

#[test]
fn wrong_dimension_is_a_dimension_error() {
    let server = LoopbackServer::start(stub_agents(&base_config())).unwrap();
    let agents = http_against(&server, 2, Duration::from_secs(5));
    server.set_faults(Faults {
        embedding_dim: Some(31),
        ..Faults::default()
    });
    match agents.image_embedder.embed_image(&frame(1)) {
        Err(AgentError::Dimension { expected, got }) => assert_eq!((expected, got), (32, 31)),
        other => panic!("expected dimension error, got {other:?}"),
    }
    assert!(matches!(
        agents.text_embedder.embed_text("hello"),
        Err(AgentError::Dimension { expected: 48, got: 31 })
    ));
    assert_eq!(server.hits("/v1/embed_image"), 1);
}

#[test]
fn server_errors_are_retried_then_reported() {
    let server = LoopbackServer::start(stub_agents(&base_config())).unwrap();
    let agents = http_against(&server, 2, Duration::from_secs(5));

    server.set_faults(Faults {
        fail_first: 100,
        ..Faults::default()
    });
    match agents.text_embedder.embed_text("hello") {
        Err(AgentError::Transport { attempts, .. }) => assert_eq!(attempts, 3),
        other => panic!("expected transport error, got {other:?}"),
    }
    assert_eq!(server.hits("/v1/embed_text"), 3);

    server.set_faults(Faults {
        fail_first: 2,
        ..Faults::default()
    });
    assert!(agents.text_embedder.embed_text("hello").is_ok());
    assert_eq!(server.hits("/v1/embed_text"), 3);
}

#[test]
fn malformed_body_is_not_retried() {
    let server = LoopbackServer::start(stub_agents(&base_config())).unwrap();
    let agents = http_against(&server, 2, Duration::from_secs(5));
    server.set_faults(Faults {
        malformed_body: true,
        ..Faults::default()
    });
    assert!(matches!(
        agents.chat.complete("hi", &ChatParams::default()),
        Err(AgentError::Protocol(_))
    ));
    assert_eq!(server.hits("/v1/chat"), 1);
}

#[test]
fn client_errors_are_not_retried() {
    let server = LoopbackServer::start(StubAgents::new(SEED, &base_config()).into_agents()).unwrap();
    let cfg = AgentConfig {
        endpoints: Endpoints::with_base(&server.base_url()),
        ..base_config()
    };
    let agents = Agents::http(&cfg).unwrap();
    // The server answers 400 when its own agent rejects the request.
    let mut strict = StubAgents::new(SEED, &base_config());
    strict.chat = strict.chat.clone().strict();
    let strict_server = LoopbackServer::start(strict.into_agents()).unwrap();
    let strict_agents = http_against(&strict_server, 2, Duration::from_secs(5));
    assert!(matches!(
        strict_agents.chat.complete("unscripted", &ChatParams::default()),
        Err(AgentError::Protocol(_))
    ));
    assert_eq!(strict_server.hits("/v1/chat"), 1);
    assert!(agents.chat.complete("unscripted", &ChatParams::default()).is_ok());
}

#[test]
fn slow_server_times_out() {
    let server = LoopbackServer::start(stub_agents(&base_config())).unwrap();
    let agents = http_against(&server, 1, Duration::from_millis(150));
    server.set_faults(Faults {
        delay: Some(Duration::from_millis(600)),
        ..Faults::default()
    });
    let started = Instant::now();
    match agents.text_embedder.embed_text("slow") {
        Err(AgentError::Transport { attempts, .. }) => assert_eq!(attempts, 2),
        other => panic!("expected timeout, got {other:?}"),
    }
    assert!(started.elapsed() < Duration::from_millis(1200));
}

#[test]
fn empty_text_reply_is_empty_response() {
    let server = LoopbackServer::start(stub_agents(&base_config())).unwrap();
    let agents = http_against(&server, 2, Duration::from_secs(5));
    server.set_faults(Faults {
        empty_text: true,
        ..Faults::default()
    });
    assert!(matches!(
        agents.chat.complete("hi", &ChatParams::default()),
        Err(AgentError::EmptyResponse)
    ));
    assert!(matches!(
        agents.captioner.caption_frame(&frame(2), "describe"),
        Err(AgentError::EmptyResponse)
    ));
}

#[test]
fn unreachable_endpoint_fails_after_all_attempts() {
    let port = {
        let l = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        l.local_addr().unwrap().port()
    };
    let cfg = AgentConfig {
        endpoints: Endpoints::with_base(&format!("http://127.0.0.1:{port}")),
        ..base_config()
    };
    let agents = Agents::http(&cfg).unwrap();
    assert!(matches!(
        agents.text_embedder.embed_text("x"),
        Err(AgentError::Transport { attempts: 3, .. })
    ));
}

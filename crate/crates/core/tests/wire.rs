use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use promptforge::critique::{Critic, Feedback, RemoteCritic, DEFAULT_CRITIC_TEMPLATE};
use promptforge::env::{
    aggregate_reward, CallMeter, Matcher, RemoteWorker, TaskInstance, Worker, WorkerOutput,
};
use promptforge::policy::PromptSequence;
use promptforge::remote::mock::{MockEndpoint, MockResponse};
use promptforge::remote::{ChatClient, EndpointConfig, RecordingSleeper};
use promptforge::vocab::Vocabulary;
use promptforge::Error;

fn client(mock: &MockEndpoint) -> (ChatClient, Arc<RecordingSleeper>) {
    let sleeper = Arc::new(RecordingSleeper::default());
    let cfg = EndpointConfig {
        base_url: mock.base_url(),
        model: "m1".into(),
        ..Default::default()
    };
    (
        ChatClient::new(cfg)
            .with_api_key(Some("sk-test".into()))
            .with_sleeper(sleeper.clone()),
        sleeper,
    )
}

#[test]
fn request_shape_and_auth() {
    let mock = MockEndpoint::echo().unwrap();
    let (c, _) = client(&mock);
    let reply = c.remote_call("be brief", "what is 2+2").unwrap();
    assert_eq!(reply.text, "what is 2+2");
    assert_eq!(reply.attempts, 1);

    let reqs = mock.requests();
    assert_eq!(reqs.len(), 1);
    let r = &reqs[0];
    assert_eq!(r.method, "POST");
    assert_eq!(r.path, "/v1/chat/completions");
    assert_eq!(r.header("authorization"), Some("Bearer sk-test"));
    let body = r.json().unwrap();
    assert_eq!(body["model"], "m1");
    assert_eq!(body["temperature"], 0.0);
    assert_eq!(body["messages"][0]["role"], "system");
    assert_eq!(body["messages"][0]["content"], "be brief");
    assert_eq!(body["messages"][1]["role"], "user");
    assert_eq!(body["messages"][1]["content"], "what is 2+2");
    assert_eq!(body["messages"].as_array().unwrap().len(), 2);
}

#[test]
fn no_key_no_header() {
    let mock = MockEndpoint::echo().unwrap();
    let cfg = EndpointConfig {
        base_url: mock.base_url(),
        ..Default::default()
    };
    ChatClient::new(cfg)
        .with_api_key(None)
        .remote_call("s", "u")
        .unwrap();
    assert_eq!(mock.requests()[0].header("authorization"), None);
}

#[test]
fn rate_limits_back_off_one_then_two_seconds() {
    let mock = MockEndpoint::scripted(vec![
        MockResponse::status(429),
        MockResponse::status(429),
        MockResponse::chat("done"),
    ])
    .unwrap();
    let (c, sleeper) = client(&mock);
    let reply = c.remote_call("s", "u").unwrap();
    assert_eq!(reply.text, "done");
    assert_eq!(reply.attempts, 3);
    assert_eq!(
        sleeper.delays(),
        vec![Duration::from_secs(1), Duration::from_secs(2)]
    );
}

#[test]
fn server_errors_exhaust_after_five_attempts() {
    let mock = MockEndpoint::scripted(vec![MockResponse::status(503)]).unwrap();
    let (c, sleeper) = client(&mock);
    match c.remote_call("s", "u") {
        Err(Error::Environment { attempts, message }) => {
            assert_eq!(attempts, 5);
            assert_eq!(message.matches("status 503").count(), 5);
        }
        other => panic!("{other:?}"),
    }
    assert_eq!(mock.requests().len(), 5);
    let secs: Vec<u64> = sleeper.delays().iter().map(Duration::as_secs).collect();
    assert_eq!(secs, vec![1, 2, 4, 8]);
}

#[test]
fn client_errors_are_not_retried() {
    let mock = MockEndpoint::scripted(vec![MockResponse::status(400)]).unwrap();
    let (c, _) = client(&mock);
    assert!(matches!(
        c.remote_call("s", "u"),
        Err(Error::Environment { attempts: 1, .. })
    ));
}

#[test]
fn malformed_body_is_a_parse_error_with_the_raw_text() {
    let body = r#"{"choices": "nope"}"#;
    let mock = MockEndpoint::scripted(vec![MockResponse::raw(200, body)]).unwrap();
    let (c, _) = client(&mock);
    match c.remote_call("s", "u") {
        Err(Error::Parse { raw, .. }) => assert_eq!(raw, body),
        other => panic!("{other:?}"),
    }
}

#[test]
fn in_flight_limit_is_honored() {
    let live = Arc::new(AtomicUsize::new(0));
    let peak = Arc::new(AtomicUsize::new(0));
    let (l, p) = (live.clone(), peak.clone());
    let mock = MockEndpoint::start(move |_| {
        let now = l.fetch_add(1, Ordering::SeqCst) + 1;
        p.fetch_max(now, Ordering::SeqCst);
        std::thread::sleep(Duration::from_millis(40));
        l.fetch_sub(1, Ordering::SeqCst);
        MockResponse::chat("ok")
    })
    .unwrap();
    let cfg = EndpointConfig {
        base_url: mock.base_url(),
        in_flight: 2,
        ..Default::default()
    };
    let c = ChatClient::new(cfg);
    std::thread::scope(|s| {
        for _ in 0..6 {
            s.spawn(|| c.remote_call("s", "u").unwrap());
        }
    });
    assert!(peak.load(Ordering::SeqCst) <= 2);
    assert_eq!(mock.requests().len(), 6);
}

#[test]
fn remote_worker_and_critic() {
    let vocab = Vocabulary::new(vec![], vec!["be".into(), "exact".into()]).unwrap();
    let mock = MockEndpoint::start(|req| {
        let user = req.message("user").unwrap_or_default();
        if let Some(q) = user.strip_prefix("Q:") {
            MockResponse::chat(&format!("The answer is {q}"))
        } else {
            MockResponse::chat("add the word exact")
        }
    })
    .unwrap();
    let cfg = EndpointConfig {
        base_url: mock.base_url(),
        ..Default::default()
    };
    let worker = RemoteWorker::new(
        ChatClient::new(cfg.clone()),
        vocab.clone(),
        Matcher::Contains,
    );
    let prompt =
        PromptSequence::from_content(vec![vocab.require("be").unwrap()], vocab.eos()).unwrap();
    let inst = |i: &str, t: &str| TaskInstance {
        context_id: "c".into(),
        input: i.into(),
        target: t.into(),
        category: None,
    };
    let slice = vec![inst("Q:Seven", "seven"), inst("Q:9", "10")];
    let meter = CallMeter::new();
    assert_eq!(
        aggregate_reward(&worker, &prompt, &slice, &meter).unwrap(),
        0.5
    );
    assert_eq!(meter.get(), 2);
    assert_eq!(mock.requests()[0].message("system").unwrap(), "be");
    assert!(Matcher::Exact.matches(" 10 ", "10") && !Matcher::Exact.matches("x 10", "10"));

    let critic = RemoteCritic::new(ChatClient::new(cfg), vocab.clone(), DEFAULT_CRITIC_TEMPLATE);
    let out = WorkerOutput {
        text: "The answer is 9".into(),
        correct: None,
    };
    assert_eq!(worker.score(&out, &slice[1], &prompt), 0.0);
    match critic.critique(&prompt, &slice[1], &out).unwrap() {
        Feedback::Text(t) => assert_eq!(t, "add the word exact"),
        other => panic!("{other:?}"),
    }
    let sent = mock.requests().last().unwrap().message("user").unwrap();
    assert!(sent.contains("Q:9") && sent.contains("10") && sent.contains("The answer is 9"));
}

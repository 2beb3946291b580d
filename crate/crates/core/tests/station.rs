use std::time::{Duration, Instant};

use tokio::time::timeout;

use sdm::mqtt::{serve, BrokerConfig, ClientOptions, MqttClient};
use sdm::render::{render_session_to_wav, TimedCommand};
use sdm::schema::{ExtractStatus, Payload, SoundCommand, SoundStatus, ZoneSelect};
use sdm::station::{parse_config, Health, RunOptions, ServiceKind, Station, StationConfig};

fn local_config() -> StationConfig {
    let mut c = StationConfig::bundled();
    c.broker.addr = "127.0.0.1:0".into();
    c.broker.ws_addr = None;
    c.extraction.output_dir = None;
    c.extraction.scene_seconds = 1.0;
    c
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn bundled_station_echoes_status_quickly() {
    let station = Station::start(local_config(), RunOptions::default()).await.unwrap();
    let health = station.health();
    for k in [ServiceKind::Broker, ServiceKind::Localization, ServiceKind::Render, ServiceKind::Extraction] {
        assert_eq!(health[&k], Health::Running, "{k}");
    }
    let (c, mut inbox) = MqttClient::connect(station.broker_addr(), ClientOptions::new("smoke")).await.unwrap();
    c.subscribe(&["sdm/sound/bird/status"]).await.unwrap();
    let sent = Instant::now();
    c.publish("sdm/sound/bird/control", SoundCommand::play().encode()).await.unwrap();
    let p = timeout(Duration::from_millis(200), inbox.recv()).await.expect("no status within 200 ms").unwrap();
    assert!(sent.elapsed() < Duration::from_millis(200));
    let s = SoundStatus::decode(&p.payload).unwrap();
    assert!(s.playing);
    assert!((s.gains.iter().map(|g| g * g).sum::<f64>() - 1.0).abs() < 1e-6);

    c.subscribe(&["sdm/extract/status"]).await.unwrap();
    c.publish("sdm/extract/control", ZoneSelect { zone_id: "zone2".into() }.encode()).await.unwrap();
    let p = timeout(Duration::from_secs(60), inbox.recv()).await.unwrap().unwrap();
    assert_eq!(ExtractStatus::decode(&p.payload).unwrap().zone_id, "zone2");

    c.disconnect().await.unwrap();
    station.shutdown().await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn external_broker_suppresses_the_embedded_one() {
    let broker = serve(BrokerConfig::loopback()).await.unwrap();
    let addr = broker.tcp_addr().unwrap().to_string();
    let opts = RunOptions { services: Some(vec![ServiceKind::Render]), external_broker: Some(addr.clone()) };
    let station = Station::start(local_config(), opts).await.unwrap();
    assert!(station.broker().is_none());
    assert_eq!(station.broker_addr(), addr);
    assert!(!station.health().contains_key(&ServiceKind::Broker));
    assert!(station.localization().is_none() && station.extraction().is_none());
    assert!(station.render().is_some());
    assert_eq!(broker.connection_count(), 1);
    station.shutdown().await;
    broker.shutdown().await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn restart_on_the_same_port() {
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let mut config = local_config();
    config.broker.addr = format!("127.0.0.1:{port}");
    let opts = RunOptions { services: Some(vec![ServiceKind::Localization]), external_broker: None };
    for _ in 0..2 {
        let station = Station::start(config.clone(), opts.clone()).await.unwrap();
        assert_eq!(station.broker_addr(), format!("127.0.0.1:{port}"));
        let (c, mut inbox) = MqttClient::connect(station.broker_addr(), ClientOptions::new("probe")).await.unwrap();
        c.subscribe(&["sdm/location/#"]).await.unwrap();
        assert!(timeout(Duration::from_secs(2), inbox.recv()).await.unwrap().is_some());
        station.shutdown().await;
    }
}

#[tokio::test]
async fn unreachable_external_broker_fails_start() {
    let dead = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = dead.local_addr().unwrap().to_string();
    drop(dead);
    let opts = RunOptions { services: Some(vec![ServiceKind::Render]), external_broker: Some(addr) };
    let err = match Station::start(local_config(), opts).await {
        Ok(_) => panic!("start should fail"),
        Err(e) => e.to_string(),
    };
    assert!(err.starts_with("render failed to start"), "{err}");
}

#[test]
fn invalid_config_reports_every_problem() {
    let mut v: serde_json::Value = serde_json::from_str(sdm::station::BUNDLED_CONFIG).unwrap();
    v["speakers"]["speakers"][0]["position"]["x"] = 9.0.into();
    v["zones"][1]["radius"] = (-1.0).into();
    let err = parse_config(&v.to_string(), std::path::Path::new(".")).unwrap_err();
    assert!(err.0.len() >= 2, "{err}");
    assert!(err.0.iter().any(|i| i.path.starts_with("speakers.speakers[0]")));
    assert!(err.0.iter().any(|i| i.path.starts_with("zones[1]")));
}

#[test]
fn offline_render_is_byte_deterministic() {
    let c = StationConfig::bundled();
    let sounds = c.session_sounds().unwrap();
    let log: Vec<TimedCommand> = serde_json::from_str(
        r#"[
            {"t": 0.0, "sound_id": "bird", "cmd": "play"},
            {"t": 0.25, "sound_id": "hum", "cmd": "play", "volume": 0.8},
            {"t": 0.5, "sound_id": "bird", "cmd": "set", "x": 3.5, "y": 0.5, "z": 2.0, "pitch": 1.5},
            {"t": 1.0, "sound_id": "bell", "cmd": "play"},
            {"t": 1.5, "sound_id": "hum", "cmd": "stop"}
        ]"#,
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.wav"), dir.path().join("b.wav"));
    for p in [&a, &b] {
        render_session_to_wav(&log, &sounds, &c.speakers, 2.0, c.render.output_format, p).unwrap();
    }
    let (ba, bb) = (std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(ba, bb);
    let r = hound::WavReader::open(&a).unwrap();
    assert_eq!(r.spec().channels as usize, c.speakers.len());
    assert_eq!(r.duration(), 96_000);
    assert!(r.into_samples::<i16>().any(|s| s.unwrap() != 0));
}

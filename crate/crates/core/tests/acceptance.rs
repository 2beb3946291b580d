//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails. Run with `cargo test --test acceptance`.

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use sdm::bench::{delay_proxy, export_results, import_stats, run_sweep, summarize, BenchConfig, RttSample};
use sdm::extract::{
    default_zones, delay_and_sum, evaluate_zone_sir, matched_weights, simulate_capture, steering_delays,
    uniform_weights, zone_talkers, Extractor, MicArrayConfig, SourceSignal, SPEED_OF_SOUND,
};
use sdm::localization::{
    default_initial_guess, default_sensors, geometry_condition, simulate_observations, solve_position, SensorConfig,
    SolverOptions, DEFAULT_RANGE_SIGMA,
};
use sdm::mqtt::{
    serve, topic_matches, valid_filter, BrokerConfig, ClientOptions, Connect, MqttClient, Packet, QoS, Router,
};
use sdm::render::{
    compute_gains, intensity_direction, render_session_to_wav, triangulate_layout, Clip, RenderEngine, SpeakerLayout,
    TimedCommand,
};
use sdm::schema::{Payload, SoundCommand, SoundStatus, Vec3};
use sdm::station::{RunOptions, Station, StationConfig};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn db(x: f64) -> f64 {
    10.0 * x.log10()
}

fn median_ms(samples: &[RttSample]) -> f64 {
    let mut v: Vec<u64> = samples.iter().map(|s| s.rtt_us).collect();
    v.sort_unstable();
    if v.is_empty() {
        return f64::NAN;
    }
    let n = v.len();
    let m = if n % 2 == 1 { v[n / 2] as f64 } else { (v[n / 2 - 1] + v[n / 2]) as f64 / 2.0 };
    m / 1000.0
}

fn random_unit(rng: &mut ChaCha8Rng) -> Vec3 {
    let n = Normal::new(0.0, 1.0).unwrap();
    loop {
        let v = Vec3::new(n.sample(rng), n.sample(rng), n.sample(rng));
        if let Some(u) = v.normalized() {
            return u;
        }
    }
}

// ---------------------------------------------------------------- broker

fn random_filter(rng: &mut ChaCha8Rng) -> String {
    loop {
        let depth = rng.gen_range(1..=4);
        let mut levels: Vec<&str> =
            (0..depth).map(|_| ["a", "b", "c", "+", ""][rng.gen_range(0..5)]).collect();
        if rng.gen_bool(0.25) {
            levels.push("#");
        }
        let f = levels.join("/");
        if valid_filter(&f) {
            return f;
        }
    }
}

fn random_topic(rng: &mut ChaCha8Rng) -> String {
    let depth = rng.gen_range(1..=5);
    let mut levels: Vec<&str> = (0..depth).map(|_| ["a", "b", "c", ""][rng.gen_range(0..4)]).collect();
    if rng.gen_bool(0.1) {
        levels[0] = "$SYS";
    }
    let t = levels.join("/");
    if t.is_empty() {
        "a".into()
    } else {
        t
    }
}

fn routing_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut disagreements = 0;
    for case in 0..10_000 {
        let router = Router::new();
        let subscribers = rng.gen_range(1..=6u64);
        let mut filters = Vec::new();
        for conn in 1..=subscribers {
            router.open(conn);
            router.on_packet(conn, Packet::Connect(Connect::new(format!("c{case}-{conn}"))));
            let fs: Vec<String> = (0..rng.gen_range(1..=4)).map(|_| random_filter(&mut rng)).collect();
            router.on_packet(
                conn,
                Packet::Subscribe { packet_id: 1, filters: fs.iter().map(|f| (f.clone(), QoS::AtMostOnce)).collect() },
            );
            filters.push((conn, fs));
        }
        let topic = random_topic(&mut rng);
        let want: BTreeSet<u64> = filters
            .iter()
            .filter(|(_, fs)| fs.iter().any(|f| topic_matches(f, &topic)))
            .map(|(c, _)| *c)
            .collect();
        if router.route(&topic) != want {
            disagreements += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(disagreements == 0 && secs < 30.0, format!("10000 cases, {disagreements} disagreements, {secs:.1} s"))
}

async fn broker_fifo() -> Outcome {
    const N: u64 = 100_000;
    let broker = serve(BrokerConfig::loopback()).await.unwrap();
    let addr = broker.tcp_addr().unwrap().to_string();
    let mut readers = Vec::new();
    let mut subs = Vec::new();
    for i in 0..3 {
        let (c, mut inbox) = MqttClient::connect(&addr, ClientOptions::new(format!("fifo{i}"))).await.unwrap();
        c.subscribe(&["fifo/seq"]).await.unwrap();
        subs.push(c);
        readers.push(tokio::spawn(async move {
            let (mut got, mut out_of_order, mut last) = (0u64, 0u64, None::<u64>);
            while got < N {
                match tokio::time::timeout(Duration::from_secs(5), inbox.recv()).await {
                    Ok(Some(p)) => {
                        let seq = u64::from_be_bytes(p.payload[..8].try_into().unwrap());
                        if last.is_some_and(|l| seq <= l) {
                            out_of_order += 1;
                        }
                        last = Some(seq);
                        got += 1;
                    }
                    _ => break,
                }
            }
            (got, out_of_order)
        }));
    }
    let (p, _) = MqttClient::connect(&addr, ClientOptions::new("fifo-pub")).await.unwrap();
    for n in 0..N {
        p.publish("fifo/seq", n.to_be_bytes().to_vec()).await.unwrap();
    }
    let mut detail = Vec::new();
    let mut pass = true;
    for r in readers {
        let (got, ooo) = r.await.unwrap();
        pass &= ooo == 0 && got == N;
        detail.push(format!("{got} received/{ooo} out of order"));
    }
    broker.shutdown().await;
    outcome(pass, format!("3 subscribers: {}", detail.join(", ")))
}

// ---------------------------------------------------------------- latency

async fn latency_sweep() -> Outcome {
    let broker = serve(BrokerConfig::loopback()).await.unwrap();
    let config = BenchConfig::new(broker.tcp_addr().unwrap().to_string());
    let r = run_sweep(&config).await.unwrap();
    broker.shutdown().await;
    let dir = tempfile::tempdir().unwrap();
    let stats = summarize(&r.samples);
    let (_, path) = export_results(&stats, &r.samples, dir.path()).unwrap();
    let back = import_stats(&path).unwrap();
    let ordered = back.iter().all(|s| s.min_us <= s.q1_us && s.q1_us <= s.median_us && s.median_us <= s.q3_us && s.q3_us <= s.max_us);
    let worst_median = back.iter().map(|s| s.median_us / 1000.0).fold(0.0, f64::max);
    let pass = r.lost.is_empty() && back.len() == 15 && ordered && worst_median < 5.0 && median_ms(&r.samples) < 5.0;
    outcome(
        pass,
        format!(
            "{} sent, {} lost, {} groups, overall median {:.3} ms, worst group median {:.3} ms, quartiles ordered: {ordered}",
            r.sent,
            r.lost.len(),
            back.len(),
            median_ms(&r.samples),
            worst_median
        ),
    )
}

async fn proxy_linearity() -> Outcome {
    let broker = serve(BrokerConfig::loopback()).await.unwrap();
    let addr = broker.tcp_addr().unwrap().to_string();
    let config = |a: &str| BenchConfig { sizes: vec![20, 720, 1420], repetitions: 30, ..BenchConfig::new(a) };
    let base = median_ms(&run_sweep(&config(&addr)).await.unwrap().samples);
    let mut pass = true;
    let mut detail = vec![format!("baseline {base:.3} ms")];
    for d in [5.0, 10.0, 25.0] {
        let proxy = delay_proxy("127.0.0.1:0", &addr, d, 0.0, 1).unwrap();
        let r = run_sweep(&config(&proxy.local_addr().to_string())).await.unwrap();
        proxy.shutdown();
        let want = base + 2.0 * d;
        let got = median_ms(&r.samples);
        let tol = f64::max(2.0, 0.1 * want);
        pass &= r.lost.is_empty() && (got - want).abs() <= tol;
        detail.push(format!("d={d} ms: median {got:.2} ms (expected {want:.2} ± {tol:.2})"));
    }
    let proxy = delay_proxy("127.0.0.1:0", &addr, 12.0, 5.0, 7).unwrap();
    let r = run_sweep(&config(&proxy.local_addr().to_string())).await.unwrap();
    proxy.shutdown();
    let under = r.samples.iter().filter(|s| s.rtt_us < 50_000).count() as f64 / r.samples.len().max(1) as f64;
    pass &= r.lost.is_empty() && under >= 0.8;
    detail.push(format!("d=12 ms jitter 5 ms: {:.1}% under 50 ms", 100.0 * under));
    broker.shutdown().await;
    outcome(pass, detail.join("; "))
}

async fn zero_interval() -> Outcome {
    let broker = serve(BrokerConfig::loopback()).await.unwrap();
    let addr = broker.tcp_addr().unwrap().to_string();
    let config = |interval_ms| BenchConfig { sizes: vec![60], interval_ms, ..BenchConfig::new(addr.clone()) };
    // interleaved rounds, so drift in machine state hits both modes alike
    let (mut paced, mut burst, mut lost) = (Vec::new(), Vec::new(), 0);
    for _ in 0..3 {
        paced.extend(run_sweep(&config(17)).await.unwrap().samples);
        let b = run_sweep(&config(0)).await.unwrap();
        lost += b.lost.len();
        burst.extend(b.samples);
    }
    broker.shutdown().await;
    let (m17, m0) = (median_ms(&paced), median_ms(&burst));
    let pass = lost == 0 && m0 <= 4.0 * m17;
    outcome(
        pass,
        format!(
            "3 interleaved rounds x 100: 17 ms median {m17:.3} ms, back-to-back median {m0:.3} ms ({:.2}x), lost {lost}",
            m0 / m17
        ),
    )
}

// ---------------------------------------------------------------- localization

fn localization() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut worst = 0.0_f64;
    let mut solved = 0;
    while solved < 1000 {
        let n = rng.gen_range(4..=8);
        let sensors: Vec<SensorConfig> = (0..n)
            .map(|i| {
                let p = Vec3::new(rng.gen_range(0.0..6.0), rng.gen_range(0.0..6.0), rng.gen_range(0.0..3.0));
                SensorConfig::new(format!("s{i}"), p, 0.0)
            })
            .collect();
        let tag = Vec3::new(rng.gen_range(0.0..6.0), rng.gen_range(0.0..6.0), rng.gen_range(0.0..3.0));
        if geometry_condition(&sensors, tag) >= 1e6 {
            continue;
        }
        let obs = simulate_observations("t", tag, &sensors, 0);
        let fix = solve_position(&obs, &sensors, default_initial_guess(&sensors), &SolverOptions::default()).unwrap();
        worst = worst.max(fix.position.distance(tag));
        solved += 1;
    }

    let sensors = default_sensors();
    let guess = default_initial_guess(&sensors);
    let mut se = 0.0;
    let trials = 2000;
    for i in 0..trials {
        let tag = Vec3::new(rng.gen_range(0.5..3.5), rng.gen_range(0.5..3.5), rng.gen_range(0.5..1.8));
        let obs = simulate_observations("t", tag, &sensors, 10_000 + i);
        let fix = solve_position(&obs, &sensors, guess, &SolverOptions::default()).unwrap();
        se += fix.position.distance(tag).powi(2);
    }
    let rmse = (se / trials as f64).sqrt();
    let secs = start.elapsed().as_secs_f64();
    let pass = worst < 1e-6 && (0.15..=0.30).contains(&rmse) && secs < 60.0;
    outcome(
        pass,
        format!("noiseless worst {worst:.2e} m over 1000; RMSE {rmse:.3} m at sigma {DEFAULT_RANGE_SIGMA} m; {secs:.1} s"),
    )
}

// ---------------------------------------------------------------- panning

fn panning_energy_and_one_hot() -> Outcome {
    let layout = SpeakerLayout::default_room();
    let mesh = triangulate_layout(&layout).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst_energy = 0.0_f64;
    for _ in 0..10_000 {
        let d = random_unit(&mut rng);
        let g = compute_gains(layout.reference_point + d * rng.gen_range(0.2..3.0), &layout, &mesh);
        worst_energy = worst_energy.max((g.iter().map(|v| v * v).sum::<f64>() - 1.0).abs());
    }
    let mut worst_hot = 0.0_f64;
    for (k, s) in layout.speakers.iter().enumerate() {
        let g = compute_gains(s.position, &layout, &mesh);
        for (i, gi) in g.iter().enumerate() {
            worst_hot = worst_hot.max((gi - if i == k { 1.0 } else { 0.0 }).abs());
        }
    }
    outcome(
        worst_energy <= 1e-6 && worst_hot < 1e-9,
        format!("max |sum g^2 - 1| {worst_energy:.1e} over 10000; max one-hot deviation {worst_hot:.1e}"),
    )
}

fn panning_intensity() -> Outcome {
    let layout = SpeakerLayout::default_room();
    let mesh = triangulate_layout(&layout).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut errs: Vec<f64> = (0..500)
        .map(|_| {
            let d = random_unit(&mut rng);
            let g = compute_gains(layout.reference_point + d * 1.5, &layout, &mesh);
            intensity_direction(&g, &mesh).unwrap().angle_to(d).to_degrees()
        })
        .collect();
    errs.sort_by(f64::total_cmp);
    let under = errs.iter().filter(|e| **e < 10.0).count();
    outcome(
        under == errs.len(),
        format!(
            "{under}/500 under 10 deg; median {:.1}, p90 {:.1}, max {:.1} deg",
            errs[250],
            errs[450],
            errs[499]
        ),
    )
}

fn panning_pitch() -> Outcome {
    let layout = SpeakerLayout::default_room();
    let mut e = RenderEngine::new(layout, 48_000).unwrap();
    let k = 2;
    let pos = e.layout().reference_point + e.mesh().directions()[k];
    e.add_sound("tone", &Clip::tone(440.0, 4.0, 0.5, 48_000), false, pos).unwrap();
    e.apply_command("tone", &SoundCommand::set().with_pitch(2.0), 0).unwrap();
    e.apply_command("tone", &SoundCommand::play(), 0).unwrap();
    let mut ch = Vec::new();
    while ch.len() < 48_000 {
        ch.extend_from_slice(&e.render_block(512).channels[k]);
    }
    ch.truncate(48_000);
    let mut buf: Vec<Complex<f64>> = ch.iter().map(|v| Complex::new(*v as f64, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(buf.len()).process(&mut buf);
    let peak = (1..24_000).max_by(|&a, &b| buf[a].norm().total_cmp(&buf[b].norm())).unwrap();
    let hz = peak as f64; // 1 Hz bins
    outcome((hz - 880.0).abs() <= 2.0, format!("440 Hz tone at pitch 2 peaks at {hz:.0} Hz"))
}

// ---------------------------------------------------------------- extraction

fn tones(t: f64) -> f64 {
    0.3 * (2.0 * PI * 110.0 * t).sin() + 0.2 * (2.0 * PI * 230.0 * t + 0.4).sin() + 0.1 * (2.0 * PI * 370.0 * t + 1.1).sin()
}

fn extraction_distortionless() -> Outcome {
    let array = MicArrayConfig::default_array();
    let fs = array.sample_rate;
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut targets: Vec<Vec3> = default_zones().iter().map(|z| z.center).collect();
    targets.extend((0..12).map(|_| Vec3::new(rng.gen_range(0.3..3.7), rng.gen_range(0.3..3.7), rng.gen_range(0.5..2.0))));
    let n = 12_000;
    let dry: Vec<f32> = (0..n).map(|i| tones(i as f64 / fs as f64) as f32).collect();
    let mut worst = f64::NEG_INFINITY;
    for target in targets {
        let cap = simulate_capture(&[SourceSignal { position: target, samples: dry.clone() }], &array, f64::NEG_INFINITY, 0);
        let delays = steering_delays(target, &array);
        for w in [uniform_weights(array.len()), matched_weights(target, &array)] {
            let out = delay_and_sum(&cap, &delays, Some(&w), fs).unwrap();
            let far = array.mics.iter().map(|m| target.distance(m.position)).fold(0.0, f64::max);
            let lag = far / SPEED_OF_SOUND;
            let gain: f64 = array.mics.iter().zip(&w).map(|(m, w)| w * m.gain(target)).sum();
            let start = (lag * fs as f64).ceil() as usize + 1000;
            let (mut err, mut sig) = (0.0, 0.0);
            for i in start..n - 1000 {
                let want = gain * tones(i as f64 / fs as f64 - lag);
                err += (out[i] as f64 - want).powi(2);
                sig += want * want;
            }
            worst = worst.max(db(err / sig));
        }
    }
    outcome(worst < -60.0, format!("worst steering error {worst:.1} dB over 16 targets x 2 weightings"))
}

fn extraction_white_noise_gain() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let n = 1 << 15;
    let mut pass = true;
    let mut detail = Vec::new();
    for m in [2usize, 4, 8, 16] {
        let cap: Vec<Vec<f32>> = (0..m).map(|_| (0..n).map(|_| normal.sample(&mut rng) as f32).collect()).collect();
        let delays: Vec<f64> = (0..m).map(|_| rng.gen_range(0.0..0.01)).collect();
        let out = delay_and_sum(&cap, &delays, None, 48_000).unwrap();
        let skip = 600;
        let p_in = cap.iter().flat_map(|c| &c[skip..]).map(|&v| (v as f64).powi(2)).sum::<f64>() / (m * (n - skip)) as f64;
        let p_out = out[skip..].iter().map(|&v| (v as f64).powi(2)).sum::<f64>() / (n - skip) as f64;
        let gain = db(p_in / p_out);
        pass &= (gain - db(m as f64)).abs() <= 1.0;
        detail.push(format!("M={m}: {gain:.2} dB (ideal {:.2})", db(m as f64)));
    }
    outcome(pass, detail.join(", "))
}

fn extraction_sir() -> Outcome {
    let config = StationConfig::bundled();
    let extractor = Extractor::new(config.mic_array.clone(), config.zones.clone()).unwrap();
    let seed = config.extraction.seed;
    let talkers = zone_talkers(&extractor.zones, config.extraction.scene_seconds, config.mic_array.sample_rate, seed);
    let mut worst = f64::INFINITY;
    let mut detail = Vec::new();
    for (i, z) in extractor.zones.iter().enumerate() {
        let r = evaluate_zone_sir(&extractor, &talkers, i, seed).unwrap();
        worst = worst.min(r.total_improvement_db());
        detail.push(format!("{} {:+.1} dB (beam {:+.1})", z.id, r.total_improvement_db(), r.beam_improvement_db()));
    }
    outcome(worst >= 9.0, format!("improvement over best mic: {}", detail.join(", ")))
}

// ---------------------------------------------------------------- station

async fn station_smoke() -> Outcome {
    let mut config = StationConfig::bundled();
    config.broker.addr = "127.0.0.1:0".into();
    config.broker.ws_addr = None;
    config.extraction.output_dir = None;
    let station = match Station::start(config.clone(), RunOptions::default()).await {
        Ok(s) => s,
        Err(e) => return outcome(false, format!("start failed: {e}")),
    };
    let (c, mut inbox) = MqttClient::connect(station.broker_addr(), ClientOptions::new("acceptance")).await.unwrap();
    c.subscribe(&["sdm/sound/bell/status"]).await.unwrap();
    let sent = Instant::now();
    c.publish("sdm/sound/bell/control", SoundCommand::play().encode()).await.unwrap();
    let reply = tokio::time::timeout(Duration::from_millis(200), inbox.recv()).await;
    let echo_ms = sent.elapsed().as_secs_f64() * 1000.0;
    let status = reply.ok().flatten().and_then(|p| SoundStatus::decode(&p.payload).ok());
    let normalized = status
        .as_ref()
        .is_some_and(|s| s.playing && (s.gains.iter().map(|g| g * g).sum::<f64>() - 1.0).abs() < 1e-6);
    let _ = c.disconnect().await;
    station.shutdown().await;

    let sounds = config.session_sounds().unwrap();
    let log: Vec<TimedCommand> = serde_json::from_str(
        r#"[{"t": 0.0, "sound_id": "bird", "cmd": "play"},
            {"t": 0.3, "sound_id": "bell", "cmd": "play", "volume": 0.7},
            {"t": 0.6, "sound_id": "bird", "cmd": "set", "x": 0.5, "y": 0.5, "z": 2.6, "pitch": 1.25},
            {"t": 1.2, "sound_id": "hum", "cmd": "play"}]"#,
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let paths = [dir.path().join("a.wav"), dir.path().join("b.wav")];
    for p in &paths {
        render_session_to_wav(&log, &sounds, &config.speakers, 2.0, config.render.output_format, p).unwrap();
    }
    let identical = std::fs::read(&paths[0]).unwrap() == std::fs::read(&paths[1]).unwrap();
    outcome(
        status.is_some() && normalized && echo_ms < 200.0 && identical,
        format!("status echo {echo_ms:.2} ms, gains normalized: {normalized}; offline render byte-identical: {identical}"),
    )
}

fn human_study_note() -> Outcome {
    // The listening study is subjective and is not reproduced. Its objective
    // stand-ins are the intensity-direction check and height expressibility.
    let layout = SpeakerLayout::default_room();
    let mesh = triangulate_layout(&layout).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut min_lift = f64::INFINITY;
    for _ in 0..500 {
        let (x, y) = (rng.gen_range(0.0..4.0), rng.gen_range(0.0..4.0));
        let lo = intensity_direction(&compute_gains(Vec3::new(x, y, 0.5), &layout, &mesh), &mesh).unwrap();
        let hi = intensity_direction(&compute_gains(Vec3::new(x, y, 3.0), &layout, &mesh), &mesh).unwrap();
        min_lift = min_lift.min((hi.elevation() - lo.elevation()).to_degrees());
    }
    outcome(
        min_lift > 20.0,
        format!(
            "listening study not reproducible here; covered by intensity direction and height: min elevation lift z 0.5 -> 3.0 is {min_lift:.1} deg over 500 positions"
        ),
    )
}

fn main() {
    let rt = tokio::runtime::Builder::new_multi_thread().worker_threads(4).enable_all().build().unwrap();
    let mut results: Vec<(&str, Outcome)> = Vec::new();
    let mut run = |name: &'static str, f: &mut dyn FnMut() -> Outcome| {
        let t = Instant::now();
        let o = f();
        println!("{} {name}: {} [{:.1} s]", if o.pass { "PASS" } else { "FAIL" }, o.detail, t.elapsed().as_secs_f64());
        results.push((name, o));
    };
    run("broker routing oracle", &mut routing_oracle);
    run("broker FIFO", &mut || rt.block_on(broker_fifo()));
    run("latency sweep", &mut || rt.block_on(latency_sweep()));
    run("proxy linearity", &mut || rt.block_on(proxy_linearity()));
    run("zero-interval mode", &mut || rt.block_on(zero_interval()));
    run("localization accuracy", &mut localization);
    run("panning energy and one-hot", &mut panning_energy_and_one_hot);
    run("panning intensity direction", &mut panning_intensity);
    run("panning pitch", &mut panning_pitch);
    run("extraction distortionless", &mut extraction_distortionless);
    run("extraction white-noise gain", &mut extraction_white_noise_gain);
    run("extraction zone SIR", &mut extraction_sir);
    run("station smoke", &mut || rt.block_on(station_smoke()));
    run("human-study substitution", &mut human_study_note);

    let failed: Vec<&str> = results.iter().filter(|(_, o)| !o.pass).map(|(n, _)| *n).collect();
    println!("{} of {} criteria passed", results.len() - failed.len(), results.len());
    if !failed.is_empty() {
        println!("failed: {}", failed.join(", "));
        std::process::exit(1);
    }
}

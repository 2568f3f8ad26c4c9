//! `neoward` command line.

use crate::api::{self, ApiState, SyncTarget};
use crate::devices::{DeviceServer, Drainer};
use crate::httplink::{HttpLink, DEFAULT_TIMEOUT};
use crate::mockserver;
use crate::netproxy::{self, Proxy, ProxyConfig};
use crate::risk::SmtRisk;
use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use neoward_core::alerts::ThresholdSet;
use neoward_core::clock::{Clock, ScaledClock, SystemClock};
use neoward_core::gateway::{Gateway, GatewayConfig};
use neoward_core::keys::{load_key, write_new_key};
use neoward_core::ocr::synth::{corpus, LayoutKind};
use neoward_core::ocr::{
    batch_extract, evaluate, format_report, parse_truth, render_detections, render_truth, Extraction, GroundTruth, Lexicon,
    OcrConfig, OcrVital, DETECTION_EXT,
};
use neoward_core::store::Store;
use neoward_core::sync::{sync_once, AggregationServer, NetworkCondition, SyncConfig};
use neoward_core::token::{AuthToken, Role, TokenKey};
use neoward_core::transport::{FleetKey, StreamSink, TcpFrameSink};
use neoward_core::vitalsim::{battery_life_h, power_current, DeviceConfig, PowerMode, Scenario, SimDevice, StreamStats};
use neoward_smt::dataset::{generate_scenarios, load_dir, write_scenarios};
use neoward_smt::loss::FocalLoss;
use neoward_smt::train::{calibrate, cross_validate, evaluate as smt_evaluate};
use neoward_smt::{gradcheck, modelfile, Dims, TrainConfig};
use std::io::BufWriter;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

pub type CliError = Box<dyn std::error::Error + Send + Sync>;
pub type CliResult = Result<(), CliError>;

#[derive(Debug, Parser)]
#[command(name = "neoward", version, about = "Neonatal ward monitoring: simulator, gateway, sync and tools")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Stream simulated wearables into a gateway or a frame file
    Simulate(SimulateArgs),
    /// Current draw and battery life at an update interval
    Power(PowerArgs),
    /// Run the ward gateway (HTTP/WS API plus device listener)
    Gateway(GatewayArgs),
    /// Push local changes to an aggregation server
    Sync(SyncArgs),
    /// Run the mock aggregation server
    MockServer(MockServerArgs),
    /// Latency and loss injecting HTTP proxy
    Netsim(NetsimArgs),
    /// Extract vitals from detection files
    OcrExtract(OcrExtractArgs),
    /// Score extraction against a truth file
    OcrEval(OcrEvalArgs),
    /// Write synthetic detection files and their truth
    OcrSynth(OcrSynthArgs),
    /// Risk model tools
    Smt {
        #[command(subcommand)]
        command: SmtCommand,
    },
    /// Write a fresh random 256-bit key file (hex)
    Keygen {
        #[arg(long)]
        out: PathBuf,
    },
    /// Mint a bearer token for the gateway API
    Token(TokenArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, default_value_t = 1)]
    pub devices: u64,
    /// Built-in scenario name or scenario file
    #[arg(long, default_value = "stable")]
    pub scenario: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 600)]
    pub duration: u64,
    #[arg(long, default_value_t = 1, value_parser = parse_interval)]
    pub interval: u8,
    /// Gateway device address (host:port) or output file
    #[arg(long)]
    pub sink: String,
    #[arg(long)]
    pub fleet_key_file: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub first_device: u64,
    /// Pacing for network sinks: 1 is real time, 10 is ten times faster, 0 sends as fast as possible
    #[arg(long, default_value_t = 1.0)]
    pub speed: f64,
}

fn parse_interval(s: &str) -> Result<u8, String> {
    match s.parse::<u8>() {
        Ok(v) if neoward_core::vitalsim::CONNECTED_INTERVALS_S.contains(&v) => Ok(v),
        _ => Err("interval must be one of 1, 2, 4, 5".into()),
    }
}

#[derive(Debug, Args)]
pub struct PowerArgs {
    #[arg(long, value_parser = parse_interval)]
    pub interval: Option<u8>,
    #[arg(long, default_value_t = 2000.0)]
    pub battery_mah: f64,
    /// Advertising mode instead of a connected interval
    #[arg(long, conflicts_with = "interval")]
    pub advertising: bool,
}

#[derive(Debug, Args)]
pub struct GatewayArgs {
    /// HTTP/WebSocket address
    #[arg(long, default_value = "127.0.0.1:7400")]
    pub listen: SocketAddr,
    /// Device frame listener
    #[arg(long, default_value = "127.0.0.1:7401")]
    pub device_listen: SocketAddr,
    #[arg(long)]
    pub store: PathBuf,
    #[arg(long)]
    pub store_key_file: PathBuf,
    #[arg(long)]
    pub token_key_file: PathBuf,
    /// Device fleet key; defaults to STORE/fleet.key, created when missing
    #[arg(long)]
    pub fleet_key_file: Option<PathBuf>,
    #[arg(long)]
    pub retain_days: Option<u32>,
    /// Threshold profile file
    #[arg(long)]
    pub thresholds: Option<PathBuf>,
    /// Risk model; enables model-scored alerts
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Aggregation server for /api/sync/trigger
    #[arg(long)]
    pub sync_server: Option<String>,
    /// Also sync on this period (seconds)
    #[arg(long, requires = "sync_server")]
    pub sync_every: Option<u64>,
    /// Built console bundle served under /console
    #[arg(long)]
    pub console: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("mode").required(true).args(["once", "loop_secs"])))]
pub struct SyncArgs {
    #[arg(long)]
    pub server: String,
    #[arg(long)]
    pub store: PathBuf,
    #[arg(long)]
    pub store_key_file: PathBuf,
    #[arg(long)]
    pub once: bool,
    /// Sync every SECS seconds until interrupted
    #[arg(long = "loop", value_name = "SECS")]
    pub loop_secs: Option<u64>,
    #[arg(long, default_value_t = 500)]
    pub batch_size: usize,
}

#[derive(Debug, Args)]
pub struct MockServerArgs {
    #[arg(long, default_value = "127.0.0.1:7500")]
    pub listen: SocketAddr,
    #[arg(long)]
    pub state: PathBuf,
}

#[derive(Debug, Args)]
pub struct NetsimArgs {
    /// One-way latency range in ms, e.g. 50..2000
    #[arg(long)]
    pub latency: String,
    #[arg(long, default_value_t = 0.0)]
    pub loss: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "127.0.0.1:7600")]
    pub listen: SocketAddr,
    #[arg(long)]
    pub upstream: String,
    #[arg(long)]
    pub timeout_ms: Option<u64>,
}

#[derive(Debug, Args)]
pub struct OcrExtractArgs {
    #[arg(long)]
    pub detections: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
}

#[derive(Debug, Args)]
pub struct OcrEvalArgs {
    #[arg(long)]
    pub detections: PathBuf,
    #[arg(long)]
    pub truth: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Layout {
    Clean,
    Distractors,
}

#[derive(Debug, Args)]
pub struct OcrSynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 50)]
    pub count: usize,
    #[arg(long, value_enum, default_value_t = Layout::Clean)]
    pub layout: Layout,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Subcommand)]
pub enum SmtCommand {
    /// Train on every scenario file in a directory
    Train(SmtTrainArgs),
    /// Metrics of a saved model, or k-fold cross-validation
    Eval(SmtEvalArgs),
    /// Fit the softmax temperature on held-out data
    Calibrate(SmtCalibrateArgs),
    /// Finite-difference check of the backward pass
    Gradcheck {
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Write random labelled scenarios for training
    GenData {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 40)]
        count: usize,
        #[arg(long, default_value_t = 1800)]
        duration: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Debug, Args)]
pub struct ModelShape {
    #[arg(long, default_value_t = 300)]
    pub window: usize,
    #[arg(long, default_value_t = 64)]
    pub d: usize,
    #[arg(long, default_value_t = 4)]
    pub heads: usize,
}

#[derive(Debug, Args)]
pub struct SmtTrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 300)]
    pub steps: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    pub lr: f64,
    #[arg(long, default_value_t = 2.0)]
    pub gamma: f64,
    /// Seconds between window starts
    #[arg(long, default_value_t = 60)]
    pub stride: usize,
    #[command(flatten)]
    pub shape: ModelShape,
}

#[derive(Debug, Args)]
pub struct SmtEvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Retrain with the model's shape on k folds instead
    #[arg(long)]
    pub kfold: Option<usize>,
    #[arg(long, default_value_t = 60)]
    pub stride: usize,
    #[arg(long, default_value_t = 300)]
    pub steps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct SmtCalibrateArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Where to write the calibrated model; defaults to overwriting --model
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 60)]
    pub stride: usize,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum RoleArg {
    Parent,
    Provider,
}

#[derive(Debug, Args)]
pub struct TokenArgs {
    #[arg(long)]
    pub key_file: PathBuf,
    #[arg(long)]
    pub sub: String,
    #[arg(long, value_enum)]
    pub role: RoleArg,
    /// Lifetime in seconds
    #[arg(long, default_value_t = 8 * 3600)]
    pub ttl: u64,
}

pub fn run(cli: Cli) -> CliResult {
    match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Power(a) => power(a),
        Command::Gateway(a) => runtime()?.block_on(gateway(a)),
        Command::Sync(a) => sync(a),
        Command::MockServer(a) => runtime()?.block_on(mock_server(a)),
        Command::Netsim(a) => runtime()?.block_on(netsim(a)),
        Command::OcrExtract(a) => ocr_extract(a),
        Command::OcrEval(a) => ocr_eval(a),
        Command::OcrSynth(a) => ocr_synth(a),
        Command::Smt { command } => smt(command),
        Command::Keygen { out } => {
            write_new_key(&out)?;
            println!("wrote {}", out.display());
            Ok(())
        }
        Command::Token(a) => {
            let key = TokenKey::new(load_key(&a.key_file)?);
            let role = match a.role {
                RoleArg::Parent => Role::Parent,
                RoleArg::Provider => Role::Provider,
            };
            let exp = SystemClock.now_ms() / 1000 + a.ttl;
            println!("{}", key.sign(&AuthToken { sub: a.sub, role, exp }));
            Ok(())
        }
    }
}

fn runtime() -> Result<tokio::runtime::Runtime, CliError> {
    Ok(tokio::runtime::Builder::new_multi_thread().enable_all().build()?)
}

fn load_scenario(name_or_path: &str, duration: u64, seed: u64) -> Result<Scenario, CliError> {
    let path = Path::new(name_or_path);
    if path.is_file() {
        let mut s = Scenario::parse(&std::fs::read_to_string(path)?)?;
        s.seed = seed;
        Ok(s)
    } else {
        Ok(Scenario::builtin(name_or_path, duration, seed)?)
    }
}

fn print_stream_stats(device_id: u64, st: &StreamStats) {
    println!(
        "device {device_id}: samples={} frames={} bursts={} reconnects={} failed_frames={}",
        st.samples, st.frames, st.bursts, st.reconnects, st.failed_frames
    );
}

fn simulate(a: SimulateArgs) -> CliResult {
    let fleet = FleetKey(load_key(&a.fleet_key_file)?);
    let ids: Vec<u64> = (a.first_device..a.first_device + a.devices).collect();
    let scenario = |i: u64| load_scenario(&a.scenario, a.duration, a.seed.wrapping_add(i));
    if let Ok(addr) = a.sink.parse::<SocketAddr>() {
        let clock: Arc<dyn Clock> = if a.speed > 0.0 { Arc::new(ScaledClock::new(a.speed)) } else { Arc::new(SystemClock) };
        let mut handles = Vec::new();
        for (i, &id) in ids.iter().enumerate() {
            let s = scenario(i as u64)?;
            let mut cfg = DeviceConfig::new(id, a.interval);
            cfg.realtime = a.speed > 0.0;
            let key = fleet.device_key(id);
            let clock = clock.clone();
            handles.push(std::thread::spawn(move || -> Result<StreamStats, CliError> {
                let mut sink = TcpFrameSink::connect(addr)?;
                Ok(SimDevice::new(cfg, key)?.run(&s, &mut sink, clock.as_ref())?)
            }));
        }
        for (h, id) in handles.into_iter().zip(&ids) {
            let st = h.join().map_err(|_| "device thread panicked")??;
            print_stream_stats(*id, &st);
        }
    } else {
        let file = std::fs::File::create(&a.sink)?;
        let mut sink = StreamSink::new(BufWriter::new(file));
        for (i, &id) in ids.iter().enumerate() {
            let s = scenario(i as u64)?;
            let st = SimDevice::new(DeviceConfig::new(id, a.interval), fleet.device_key(id))?.run(&s, &mut sink, &SystemClock)?;
            print_stream_stats(id, &st);
        }
        use std::io::Write;
        sink.into_inner().flush()?;
    }
    Ok(())
}

fn power(a: PowerArgs) -> CliResult {
    let mode = if a.advertising {
        PowerMode::Advertising
    } else {
        PowerMode::Connected { update_interval_s: a.interval.ok_or("--interval or --advertising is required")? }
    };
    let ma = power_current(mode)?;
    let h = battery_life_h(a.battery_mah, ma)?;
    println!("current_ma {ma:.2}");
    println!("battery_life_h {h:.1} ({:.2} days at {} mAh)", h / 24.0, a.battery_mah);
    Ok(())
}

async fn gateway(a: GatewayArgs) -> CliResult {
    std::fs::create_dir_all(&a.store)?;
    let store = Arc::new(Store::open(&a.store, &load_key(&a.store_key_file)?)?);
    let fleet_path = a.fleet_key_file.clone().unwrap_or_else(|| a.store.join("fleet.key"));
    let fleet = if fleet_path.exists() {
        load_key(&fleet_path)?
    } else {
        tracing::info!(path = %fleet_path.display(), "writing new fleet key");
        write_new_key(&fleet_path)?
    };
    let mut cfg = GatewayConfig { retain_days: a.retain_days, ..GatewayConfig::default() };
    if let Some(p) = &a.thresholds {
        cfg.thresholds = ThresholdSet::parse(&std::fs::read_to_string(p)?)?;
    }
    let gw = Gateway::new(store, Arc::new(FleetKey(fleet)), Arc::new(SystemClock), cfg)?;
    if let Some(p) = &a.model {
        let model = Arc::new(modelfile::load(p)?);
        gw.set_risk_hook(Some(Arc::new(SmtRisk::new(model).with_gateway_features(&gw))));
    }
    let drainer = Drainer::spawn(gw.clone(), Duration::from_secs(1));
    let devices = DeviceServer::bind(a.device_listen, gw.clone(), drainer.wake())?;
    tracing::info!(addr = %devices.local_addr(), "device listener up");

    let mut state = ApiState::new(gw.clone(), TokenKey::new(load_key(&a.token_key_file)?));
    if let Some(url) = &a.sync_server {
        let url = url.clone();
        let target = SyncTarget { connect: Arc::new(move || Box::new(HttpLink::new(&url, DEFAULT_TIMEOUT))), config: SyncConfig::default() };
        if let Some(every) = a.sync_every {
            let (gw, target) = (gw.clone(), target.clone());
            tokio::spawn(async move {
                let mut tick = tokio::time::interval(Duration::from_secs(every.max(1)));
                loop {
                    tick.tick().await;
                    let (gw, target) = (gw.clone(), target.clone());
                    let _ = tokio::task::spawn_blocking(move || {
                        let mut link = (target.connect)();
                        if let Err(e) = gw.sync_with(link.as_mut(), &target.config) {
                            tracing::warn!(error = %e, "periodic sync failed");
                        }
                    })
                    .await;
                }
            });
        }
        state = state.with_sync(target);
    }
    let mut app = api::router(state);
    if let Some(dir) = &a.console {
        app = api::with_console(app, dir);
    }
    let listener = tokio::net::TcpListener::bind(a.listen).await?;
    tracing::info!(addr = %listener.local_addr()?, "api listening");
    axum::serve(listener, app).with_graceful_shutdown(shutdown_signal()).await?;
    devices.shutdown();
    drainer.shutdown();
    gw.flush_static()?;
    gw.store().sync_all()?;
    Ok(())
}

async fn shutdown_signal() {
    let _ = tokio::signal::ctrl_c().await;
    tracing::info!("shutting down");
}

fn sync(a: SyncArgs) -> CliResult {
    let store = Store::open(&a.store, &load_key(&a.store_key_file)?)?;
    let mut link = HttpLink::new(&a.server, DEFAULT_TIMEOUT);
    let cfg = SyncConfig { batch_size: a.batch_size, ..SyncConfig::default() };
    loop {
        match sync_once(&store, &mut link, &cfg, &SystemClock) {
            Ok(r) => println!("{}", serde_json::to_string(&r)?),
            Err(e) if a.loop_secs.is_some() => eprintln!("sync failed: {e}"),
            Err(e) => return Err(e.into()),
        }
        match a.loop_secs {
            Some(secs) => std::thread::sleep(Duration::from_secs(secs.max(1))),
            None => return Ok(()),
        }
    }
}

async fn mock_server(a: MockServerArgs) -> CliResult {
    std::fs::create_dir_all(&a.state)?;
    let server = Arc::new(AggregationServer::open(&a.state)?);
    let listener = tokio::net::TcpListener::bind(a.listen).await?;
    tracing::info!(addr = %listener.local_addr()?, cursor = server.cursor(), "mock aggregation server listening");
    axum::serve(listener, mockserver::router(server)).with_graceful_shutdown(shutdown_signal()).await?;
    Ok(())
}

async fn netsim(a: NetsimArgs) -> CliResult {
    let (lo, hi) = NetworkCondition::parse_latency(&a.latency)?;
    let mut cfg = ProxyConfig::new(&a.upstream, NetworkCondition::new(lo, hi, a.loss, a.seed)?);
    if let Some(t) = a.timeout_ms {
        cfg.timeout_ms = t;
    }
    let proxy = Proxy::new(cfg);
    let listener = tokio::net::TcpListener::bind(a.listen).await?;
    tracing::info!(addr = %listener.local_addr()?, upstream = %a.upstream, "netsim proxy listening");
    axum::serve(listener, netproxy::router(proxy)).with_graceful_shutdown(shutdown_signal()).await?;
    Ok(())
}

fn extract_dir(dir: &Path, workers: usize) -> Result<Vec<Extraction>, CliError> {
    let entries = batch_extract(dir, workers, &Lexicon::default(), &OcrConfig::default())?;
    let mut out = Vec::with_capacity(entries.len());
    for e in entries {
        match e.result {
            Ok(x) => out.push(x),
            Err(msg) => {
                eprintln!("{}: {msg}", e.image_id);
                out.push(Extraction { image_id: e.image_id, ..Extraction::default() });
            }
        }
    }
    Ok(out)
}

fn ocr_extract(a: OcrExtractArgs) -> CliResult {
    for x in extract_dir(&a.detections, a.workers)? {
        let v = |k: OcrVital| x.value(k).map(|v| v.to_string()).unwrap_or_else(|| "-".into());
        println!("{}\tHR={}\tSpO2={}\tRR={}", x.image_id, v(OcrVital::Hr), v(OcrVital::Spo2), v(OcrVital::Rr));
    }
    Ok(())
}

fn ocr_eval(a: OcrEvalArgs) -> CliResult {
    let truth = parse_truth(&std::fs::read_to_string(&a.truth)?)?;
    let preds = extract_dir(&a.detections, a.workers)?;
    print!("{}", format_report(&evaluate(&preds, &truth)?));
    Ok(())
}

fn ocr_synth(a: OcrSynthArgs) -> CliResult {
    std::fs::create_dir_all(&a.out)?;
    let kind = match a.layout {
        Layout::Clean => LayoutKind::Clean,
        Layout::Distractors => LayoutKind::Distractors,
    };
    let mut truth = GroundTruth::new();
    for (id, det, vals) in corpus(a.count, kind, a.seed) {
        std::fs::write(a.out.join(format!("{id}.{DETECTION_EXT}")), render_detections(&det))?;
        truth.insert(id, vals);
    }
    std::fs::write(a.out.join("truth.tsv"), render_truth(&truth))?;
    println!("wrote {} layouts and truth.tsv to {}", a.count, a.out.display());
    Ok(())
}

fn smt(cmd: SmtCommand) -> CliResult {
    match cmd {
        SmtCommand::Train(a) => {
            let dims = Dims { window: a.shape.window, d: a.shape.d, heads: a.shape.heads, ..Dims::default() };
            dims.validate()?;
            let samples = load_dir(&a.data, dims.window, a.stride)?;
            let cfg = TrainConfig { steps: a.steps, lr: a.lr, gamma: a.gamma, seed: a.seed, ..TrainConfig::default() };
            let (model, report) = neoward_smt::train(dims, &samples, &[], &cfg)?;
            for h in &report.history {
                println!("step {:>5}  loss {:.4}  acc {:.3}", h.step, h.train.loss, h.train.accuracy);
            }
            modelfile::save(&model, &a.out)?;
            println!("{} windows, class weights {:?}; saved {}", samples.len(), report.class_weights, a.out.display());
            Ok(())
        }
        SmtCommand::Eval(a) => {
            let model = modelfile::load(&a.model)?;
            let dims = model.dims();
            let samples = load_dir(&a.data, dims.window, a.stride)?;
            match a.kfold {
                None => {
                    let m = smt_evaluate(&model, &samples, &FocalLoss::cross_entropy())?;
                    println!("windows {}  nll {:.4}  accuracy {:.3}", samples.len(), m.loss, m.accuracy);
                    println!("confusion (rows true low/moderate/high): {:?}", m.confusion);
                }
                Some(k) => {
                    let cfg = TrainConfig { steps: a.steps, seed: a.seed, ..TrainConfig::default() };
                    let folds = cross_validate(dims, &samples, k, &cfg)?;
                    for f in &folds {
                        println!("fold {}  train {}  val {}  loss {:.4}  accuracy {:.3}", f.fold, f.train_size, f.val_size, f.val.loss, f.val.accuracy);
                    }
                    let mean = folds.iter().map(|f| f.val.accuracy).sum::<f64>() / folds.len() as f64;
                    println!("mean accuracy {mean:.3}");
                }
            }
            Ok(())
        }
        SmtCommand::Calibrate(a) => {
            let model = modelfile::load(&a.model)?;
            let samples = load_dir(&a.data, model.dims().window, a.stride)?;
            let c = calibrate(&model, &samples)?;
            println!(
                "tau {:.4}  nll {:.4} -> {:.4}  ece {:.4} -> {:.4}{}",
                c.tau,
                c.nll_before,
                c.nll_after,
                c.ece_before,
                c.ece_after,
                if c.fell_back { "  (kept tau = 1)" } else { "" }
            );
            let out = a.out.unwrap_or(a.model);
            modelfile::save(&model.with_tau(c.tau), &out)?;
            println!("saved {}", out.display());
            Ok(())
        }
        SmtCommand::Gradcheck { seed } => {
            let mut worst: f64 = 0.0;
            for r in gradcheck::suite(seed) {
                println!("{} params  max rel err {:.3e}  worst {}", r.checked, r.max_rel_err, r.worst);
                worst = worst.max(r.max_rel_err);
            }
            if worst < 1e-4 {
                println!("ok");
                Ok(())
            } else {
                Err(format!("gradient check failed: {worst:.3e}").into())
            }
        }
        SmtCommand::GenData { out, count, duration, seed } => {
            let scenarios = generate_scenarios(count, duration, seed);
            write_scenarios(&out, &scenarios)?;
            println!("wrote {} scenarios to {}", scenarios.len(), out.display());
            Ok(())
        }
    }
}

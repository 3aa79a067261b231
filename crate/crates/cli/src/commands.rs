use std::fmt::Write as _;
use std::fs;
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::thread;

use hefuse::bench::{BenchConfig, BenchFixture};
use hefuse::biometric::{generate_synthetic_db, mated_and_nonmated_pairs, Modality, SubjectRecord};
use hefuse::ckks::Preset;
use hefuse::config::{Config, ConfigError};
use hefuse::dataset::{self, Dataset, Manifest};
use hefuse::keystore::{key_fingerprint, KeyCache, ReferenceLayout, ServerKeys};
use hefuse::matcher::{dissimilarity_from_ip, plain_cascade, EncryptedMatcher, MatchPolicy, PolicyKind, ProbeQueue};
use hefuse::metrics::{
    calibrate_policy, closest_sigma, eer_report, noise_sweep, saved_presentations, score_deviation, write_scores,
    CascadeScores, ScoreRecord,
};
use hefuse::protocol::{
    duplex, serve_tcp, Client, ClientOutcome, Clock, Direction, MemoryTransport, Message, ProtocolError,
    ReferenceStore, Server, SystemClock, TcpTransport, Transport,
};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use crate::error::CliError;

/// RNG stream per purpose so commands stay reproducible independently.
mod stream {
    pub const KEYGEN: u64 = 1;
    pub const ENROLL: u64 = 2;
    pub const VERIFY: u64 = 3;
    pub const BENCH: u64 = 4;
    pub const EVALUATE: u64 = 5;
}

fn rng(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut r = ChaCha20Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

pub fn load_config(path: Option<&Path>) -> Result<Config, CliError> {
    match path {
        Some(p) => Ok(Config::load(p)?),
        None => {
            let mut cfg = Config::example(Preset::Pn12Qp109);
            cfg.apply_env(|k| std::env::var_os(k));
            Ok(cfg)
        }
    }
}

fn preset_by_name(name: &str) -> Result<Preset, CliError> {
    Preset::from_name(name).ok_or_else(|| ConfigError::UnknownPreset(name.to_string()).into())
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Usage(e.to_string()))?;
    write_file(path, text + "\n")
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Layout every reference is packed in: synthetic modalities in fixed order.
fn layout(cfg: &Config) -> ReferenceLayout {
    ReferenceLayout {
        template_len: cfg.synthetic.template_len,
        modalities: cfg.synthetic_config().modality_order(),
    }
}

fn load_keys(cfg: &Config) -> Result<ServerKeys, CliError> {
    let keys = ServerKeys::load(&cfg.paths.keys)?;
    if keys.layout != layout(cfg) {
        return Err(ConfigError::Incompatible(format!(
            "keys in {} were generated for a different template layout",
            cfg.paths.keys.display()
        ))
        .into());
    }
    Ok(keys)
}

fn load_dataset(cfg: &Config) -> Result<Dataset, CliError> {
    let data = dataset::load(&cfg.paths.dataset)?;
    if data.template_len != cfg.synthetic.template_len {
        return Err(ConfigError::Incompatible(format!(
            "dataset {} has template length {}, config says {}",
            cfg.paths.dataset.display(),
            data.template_len,
            cfg.synthetic.template_len
        ))
        .into());
    }
    Ok(data)
}

/// Configured thresholds, or thresholds calibrated on `db` at the
/// configured FMR target.
fn resolve_policy(cfg: &Config, kind: PolicyKind, db: &[SubjectRecord]) -> Result<MatchPolicy, CliError> {
    if kind == cfg.policy_kind()? {
        if let Some(p) = cfg.fixed_policy()? {
            return Ok(p);
        }
    }
    let pairs = mated_and_nonmated_pairs(db);
    let scores = CascadeScores::compute(db, &pairs, &kind.order())?;
    Ok(calibrate_policy(&scores, kind, cfg.policy.fmr_percent / 100.0)?)
}

fn format_thresholds(policy: &MatchPolicy) -> String {
    let parts: Vec<String> = policy.thresholds.iter().map(|t| format!("{t:.6}")).collect();
    format!("[{}]", parts.join(", "))
}

fn find_subject<'a>(db: &'a [SubjectRecord], id: &str) -> Result<&'a SubjectRecord, CliError> {
    db.iter()
        .find(|r| r.subject_id == id)
        .ok_or_else(|| CliError::Usage(format!("subject {id:?} is not in the dataset")))
}

fn probe_queue(rec: &SubjectRecord, session: usize, order: &[Modality]) -> Result<ProbeQueue, CliError> {
    let templates = order
        .iter()
        .map(|&m| {
            rec.sample(m, session).cloned().ok_or_else(|| {
                CliError::Usage(format!("subject {} has no {m} sample in session {session}", rec.subject_id))
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ProbeQueue::new(templates))
}

/// Either transport, so one client type serves both.
enum Link {
    Memory(MemoryTransport),
    Tcp(TcpTransport),
}

impl Transport for Link {
    fn send(&mut self, msg: &Message) -> Result<(), ProtocolError> {
        match self {
            Link::Memory(t) => t.send(msg),
            Link::Tcp(t) => t.send(msg),
        }
    }

    fn recv(&mut self) -> Result<Message, ProtocolError> {
        match self {
            Link::Memory(t) => t.recv(),
            Link::Tcp(t) => t.recv(),
        }
    }
}

/// Runs `server` on one end of an in-memory pipe and returns the other.
fn in_process(server: &Arc<Server>) -> Link {
    let (client_end, mut server_end) = duplex();
    let server = server.clone();
    thread::spawn(move || server.serve(&mut server_end));
    Link::Memory(client_end)
}

fn local_server(cfg: &Config, db: &[SubjectRecord]) -> Result<Arc<Server>, CliError> {
    let keys = load_keys(cfg)?;
    let policy = resolve_policy(cfg, cfg.policy_kind()?, db)?;
    let store = ReferenceStore::open(&cfg.paths.store).map_err(ProtocolError::from)?;
    let clock: Arc<dyn Clock> = Arc::new(SystemClock::default());
    Ok(Arc::new(Server::new(keys, policy, store, cfg.server_config(), clock)?))
}

fn describe(msg: &Message) -> String {
    match msg {
        Message::Keys {
            template_len,
            modalities,
            ..
        } => format!("KEYS template_len={template_len} modalities={modalities:?}"),
        Message::Enroll {
            subject_id,
            modality_count,
            replace,
            reference,
        } => format!(
            "ENROLL subject={subject_id} modalities={modality_count} replace={replace} reference=<{} bytes>",
            reference.len()
        ),
        Message::EnrollAck { subject_id } => format!("ENROLL_ACK subject={subject_id}"),
        Message::VerifyClaim { subject_id } => format!("VERIFY_CLAIM subject={subject_id}"),
        Message::Reference { reference } => format!("REFERENCE <{} bytes>", reference.len()),
        Message::RequestModality { stage, modality, block } => {
            let which = if *modality == hefuse::protocol::wire::ALL_MODALITIES {
                "all".to_string()
            } else {
                Modality::from_code(*modality).to_string()
            };
            format!("REQUEST_MODALITY stage={stage} modality={which} block={block}")
        }
        Message::Score { stage, score } => format!("SCORE stage={stage} <{} bytes>", score.len()),
        Message::Decision { stage, verdict } => format!("DECISION stage={stage} verdict={verdict:?}"),
        Message::Error { code, text } => format!("ERROR code={code:#x} {text}"),
    }
}

fn print_outcome(out: &ClientOutcome, transcript: bool) {
    if transcript {
        for (dir, msg) in &out.transcript {
            let arrow = match dir {
                Direction::Sent => "->",
                Direction::Received => "<-",
            };
            println!("  {arrow} {}", describe(msg));
        }
    }
    match &out.error {
        Some((code, text)) => println!("error: {code:?} {text}"),
        None => println!("verdict: {:?} after {} stage(s)", out.verdict, out.stages_used),
    }
}

pub fn init(preset: &str, out: &Path, force: bool) -> Result<(), CliError> {
    if out.exists() && !force {
        return Err(CliError::Usage(format!("{} exists; pass --force to overwrite", out.display())));
    }
    let mut cfg = Config::example(preset_by_name(preset)?);
    if cfg.validate().is_err() {
        // Small presets cannot hold the default template length.
        cfg.synthetic.template_len = 4;
        cfg.synthetic.n_subjects = 20;
    }
    cfg.validate()?;
    write_file(out, cfg.to_toml())?;
    println!("wrote {}", out.display());
    Ok(())
}

pub fn keygen(cfg: &Config) -> Result<(), CliError> {
    let preset = cfg.preset()?;
    let keys = ServerKeys::generate(preset.params(), layout(cfg), &mut rng(cfg.seed, stream::KEYGEN))?;
    keys.save(&cfg.paths.keys)?;
    let Message::Keys {
        params,
        public_key,
        eval_keys,
        ..
    } = keys.public_message()
    else {
        unreachable!("public_message builds KEYS")
    };
    println!("preset: {}", preset.name());
    println!("ring dimension: {}, slots: {}", keys.context.ring_dim(), keys.context.slot_count());
    println!("rotation keys: {}", keys.eval_keys.galois_key_count());
    println!("fingerprint: {}", hex(&key_fingerprint(&params, &public_key, &eval_keys)));
    println!("saved to {}", cfg.paths.keys.display());
    Ok(())
}

pub fn synth(cfg: &Config) -> Result<(), CliError> {
    let synthetic = cfg.synthetic_config();
    let subjects = generate_synthetic_db(&synthetic)?;
    let pairs = mated_and_nonmated_pairs(&subjects);
    let data = Dataset {
        template_len: synthetic.template_len,
        modalities: synthetic.modality_order(),
        subjects,
    };
    if let Some(dir) = cfg.paths.dataset.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    dataset::save(&cfg.paths.dataset, &data, &Manifest::from_config(&synthetic))?;
    let sessions: usize = data.subjects.iter().map(SubjectRecord::session_count).sum();
    println!("subjects: {}", data.subjects.len());
    println!("capture sessions: {sessions}");
    println!("mated comparisons: {}", pairs.mated.len());
    println!("non-mated comparisons: {}", pairs.nonmated.len());
    println!("saved to {}", cfg.paths.dataset.display());
    Ok(())
}

fn open_client(cfg: &Config, db: &[SubjectRecord], connect: Option<&str>) -> Result<Client<Link>, CliError> {
    let link = match connect {
        Some(addr) => Link::Tcp(TcpTransport::connect(addr)?),
        None => in_process(&local_server(cfg, db)?),
    };
    Ok(Client::connect(link, &mut KeyCache::default())?)
}

pub fn enroll(cfg: &Config, subjects: Option<usize>, replace: bool, connect: Option<&str>) -> Result<(), CliError> {
    let data = load_dataset(cfg)?;
    let mut client = open_client(cfg, &data.subjects, connect)?;
    let order = client.keys().layout.modalities.clone();
    let mut rng = rng(cfg.seed, stream::ENROLL);
    let count = subjects.unwrap_or(data.subjects.len()).min(data.subjects.len());
    for rec in &data.subjects[..count] {
        let fused = rec
            .fused(&order, 0)
            .ok_or_else(|| CliError::Usage(format!("subject {} lacks a complete first session", rec.subject_id)))?;
        client.enroll(&rec.subject_id, &fused, replace, &mut rng)?;
    }
    println!("enrolled {count} subject(s)");
    Ok(())
}

pub struct VerifyArgs {
    pub subject: String,
    pub session: usize,
    pub probe_subject: Option<String>,
    pub connect: Option<String>,
    pub transcript: bool,
}

pub fn verify(cfg: &Config, args: &VerifyArgs) -> Result<(), CliError> {
    let data = load_dataset(cfg)?;
    let probe_rec = find_subject(&data.subjects, args.probe_subject.as_deref().unwrap_or(&args.subject))?;
    let mut client = open_client(cfg, &data.subjects, args.connect.as_deref())?;
    // The server names the modalities it wants; the queue only needs them
    // in the configured policy order.
    let order = cfg.policy_kind()?.order();
    let mut queue = probe_queue(probe_rec, args.session, &order)?;
    let out = client.verify(&args.subject, &mut queue, &mut rng(cfg.seed, stream::VERIFY))?;
    print_outcome(&out, args.transcript);
    println!("probes captured: {}", queue.acquired());
    match out.error {
        Some((code, text)) => Err(ProtocolError::Remote { code, text }.into()),
        None => Ok(()),
    }
}

pub fn demo(cfg: &Config, policy: &str, subject: usize, impostor: bool, tcp: bool) -> Result<(), CliError> {
    let kind: PolicyKind = policy
        .parse()
        .map_err(|_| CliError::Usage(format!("unknown policy {policy:?}")))?;
    let db = generate_synthetic_db(&cfg.synthetic_config())?;
    if subject >= db.len() {
        return Err(CliError::Usage(format!("subject index {subject} outside 0..{}", db.len())));
    }
    let policy = resolve_policy(cfg, kind, &db)?;
    let keys = ServerKeys::generate(cfg.preset()?.params(), layout(cfg), &mut rng(cfg.seed, stream::KEYGEN))?;
    let clock: Arc<dyn Clock> = Arc::new(SystemClock::default());
    let server = Arc::new(Server::new(
        keys,
        policy.clone(),
        ReferenceStore::in_memory(),
        cfg.server_config(),
        clock,
    )?);

    let reference = &db[subject];
    let probe = if impostor { &db[(subject + 1) % db.len()] } else { reference };
    let order = policy.modality_order.clone();
    let session = if impostor { 0 } else { 1 };
    let ref_templates = reference
        .session(&order, 0)
        .ok_or_else(|| CliError::Usage("reference session missing".into()))?;
    let probe_templates = probe
        .session(&order, session)
        .ok_or_else(|| CliError::Usage("probe session missing".into()))?;
    let (expected, stages) = plain_cascade(&ref_templates, &probe_templates, &policy);

    println!("preset: {}", cfg.preset()?.name());
    println!("policy: {} thresholds {}", policy.name, format_thresholds(&policy));
    println!(
        "claim: {} with probe from {} session {session}",
        reference.subject_id, probe.subject_id
    );
    println!("plaintext oracle: {expected:?} after {} stage(s)", stages.len());

    let link = if tcp {
        let listener = TcpListener::bind("127.0.0.1:0").map_err(|e| CliError::io("127.0.0.1:0", e))?;
        let addr = listener.local_addr().map_err(|e| CliError::io("127.0.0.1:0", e))?;
        let srv = server.clone();
        thread::spawn(move || serve_tcp(srv, listener, Some(1)));
        Link::Tcp(TcpTransport::connect(&addr.to_string())?)
    } else {
        in_process(&server)
    };
    let mut client = Client::connect(link, &mut KeyCache::default())?;
    let layout_order = client.keys().layout.modalities.clone();
    let mut erng = rng(cfg.seed, stream::ENROLL);
    client.enroll(
        &reference.subject_id,
        &reference
            .fused(&layout_order, 0)
            .ok_or_else(|| CliError::Usage("reference session missing".into()))?,
        false,
        &mut erng,
    )?;
    let mut queue = ProbeQueue::new(probe_templates);
    let out = client.verify(&reference.subject_id, &mut queue, &mut rng(cfg.seed, stream::VERIFY))?;
    println!("transcript ({} messages):", out.transcript.len());
    print_outcome(&out, true);
    println!("probes captured: {}", queue.acquired());
    Ok(())
}

pub struct BenchArgs {
    pub preset: Option<String>,
    pub template_len: Option<usize>,
    pub iterations: Option<usize>,
    pub warmups: Option<usize>,
    pub skip_incremental: bool,
}

#[derive(Serialize)]
struct BenchOutput {
    primitives: hefuse::bench::BenchReport,
    incremental: Option<hefuse::bench::IncrementalComparison>,
}

pub fn bench(cfg: &Config, args: &BenchArgs) -> Result<(), CliError> {
    let preset = match &args.preset {
        Some(name) => preset_by_name(name)?,
        None => cfg.preset()?,
    };
    let d = args.template_len.unwrap_or(cfg.synthetic.template_len);
    let base = cfg.bench_config();
    let config = BenchConfig {
        iterations: args.iterations.unwrap_or(base.iterations).max(1),
        warmups: args.warmups.unwrap_or(base.warmups),
    };
    let params = preset.params();
    if 2 * d > params.slot_count() {
        return Err(ConfigError::Incompatible(format!(
            "{} has {} slots, too few for two templates of length {d}",
            preset.name(),
            params.slot_count()
        ))
        .into());
    }
    let mut fixture = BenchFixture::new(params, d, rng_seed(cfg.seed, stream::BENCH))?;
    let primitives = fixture.primitives(preset.name(), config)?;
    print!("{}", primitives.to_table());
    let incremental = if args.skip_incremental {
        None
    } else {
        let cmp = fixture.incremental_vs_naive(config)?;
        println!();
        print!("{}", cmp.to_table());
        Some(cmp)
    };
    let path = cfg.paths.reports.join(format!("bench-{}.json", preset.name()));
    write_json(
        &path,
        &BenchOutput {
            primitives,
            incremental,
        },
    )?;
    println!("report: {}", path.display());
    Ok(())
}

/// Seed for fixtures that take a plain `u64`.
fn rng_seed(seed: u64, stream: u64) -> u64 {
    seed ^ stream.wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

pub fn calibrate(cfg: &Config, from: f64, to: f64, step: f64, target: f64) -> Result<(), CliError> {
    if !(step > 0.0 && from > 0.0 && to >= from) {
        return Err(CliError::Usage("need 0 < from <= to and step > 0".into()));
    }
    let count = ((to - from) / step + 1e-9).floor() as usize + 1;
    let sigmas: Vec<f64> = (0..count).map(|i| from + i as f64 * step).collect();
    let base = cfg.synthetic_config();
    let rows = noise_sweep(&base, &sigmas)?;
    let modalities = base.modality_order();
    let mut out = format!("{:>8}", "sigma");
    for m in &modalities {
        let _ = write!(out, " {:>14}", format!("{m} EER(%)"));
    }
    println!("{out}");
    for row in &rows {
        let mut line = format!("{:>8.4}", row.sigma);
        for (_, e) in &row.eers {
            let _ = write!(line, " {:>14.4}", 100.0 * e);
        }
        println!("{line}");
    }
    println!("closest to {target}% EER:");
    for m in modalities {
        if let Some((sigma, e)) = closest_sigma(&rows, m, target / 100.0) {
            println!("  {m}_sigma = {sigma:.4}  # EER {:.4}%", 100.0 * e);
        }
    }
    Ok(())
}

pub fn evaluate(cfg: &Config, fmr_percent: &[f64], encrypted: usize) -> Result<(), CliError> {
    if fmr_percent.is_empty() || fmr_percent.iter().any(|f| !(*f > 0.0 && *f < 100.0)) {
        return Err(CliError::Usage("FMR targets must lie in (0, 100) percent".into()));
    }
    let data = load_dataset(cfg)?;
    let db = &data.subjects;
    let pairs = mated_and_nonmated_pairs(db);
    let order = PolicyKind::AmbFhe1.order();

    let eers = eer_report(db, &pairs, &order)?;
    let fmrs: Vec<f64> = fmr_percent.iter().map(|f| f / 100.0).collect();
    let saved = saved_presentations(db, &pairs, &PolicyKind::ALL, &fmrs)?;
    print!("{}", eers.to_table());
    println!();
    print!("{}", saved.to_table());

    let scores = CascadeScores::compute(db, &pairs, &order)?;
    let mut records = Vec::new();
    let id = |rec: &SubjectRecord, session: usize| format!("{}/{session}", rec.subject_id);
    for (p, ips) in pairs.mated.iter().zip(&scores.mated) {
        let rec = &db[p.subject];
        for (j, &ip) in ips.iter().enumerate() {
            records.push(ScoreRecord {
                reference_id: id(rec, p.reference),
                probe_id: id(rec, p.probe),
                mated: true,
                stage: j + 1,
                plain_score: dissimilarity_from_ip(ip, j + 1),
                encrypted_score: None,
            });
        }
    }
    for (p, ips) in pairs.nonmated.iter().zip(&scores.nonmated) {
        for (j, &ip) in ips.iter().enumerate() {
            records.push(ScoreRecord {
                reference_id: id(&db[p.reference], 0),
                probe_id: id(&db[p.probe], 0),
                mated: false,
                stage: j + 1,
                plain_score: dissimilarity_from_ip(ip, j + 1),
                encrypted_score: None,
            });
        }
    }
    if encrypted > 0 {
        score_encrypted(cfg, db, &pairs, &order, encrypted, &mut records)?;
    }

    let mut csv = Vec::new();
    write_scores(&mut csv, &records)?;
    write_file(&cfg.paths.scores, csv)?;
    let reports = &cfg.paths.reports;
    write_file(&reports.join("eer.txt"), eers.to_table())?;
    write_json(&reports.join("eer.json"), &eers)?;
    write_file(&reports.join("saved_presentations.txt"), saved.to_table())?;
    write_json(&reports.join("saved_presentations.json"), &saved)?;
    println!();
    println!("scores: {} ({} records)", cfg.paths.scores.display(), records.len());
    println!("reports: {}", reports.display());
    Ok(())
}

/// Fills `encrypted_score` for the first `limit` mated and `limit`
/// non-mated comparisons, running the encrypted cascade stage by stage.
fn score_encrypted(
    cfg: &Config,
    db: &[SubjectRecord],
    pairs: &hefuse::PairLists,
    order: &[Modality],
    limit: usize,
    records: &mut [ScoreRecord],
) -> Result<(), CliError> {
    let keys = load_keys(cfg)?;
    let ev = keys.evaluator();
    let matcher = EncryptedMatcher::new(
        &ev,
        &keys.public_key,
        &keys.eval_keys,
        keys.layout.modalities.clone(),
        keys.layout.template_len,
    )?;
    let mut rng = rng(cfg.seed, stream::EVALUATE);
    let m = order.len();
    let mated = pairs.mated.iter().take(limit).map(|p| (p.subject, p.reference, p.subject, p.probe));
    let nonmated_offset = pairs.mated.len() * m;
    let nonmated = pairs.nonmated.iter().take(limit).map(|p| (p.reference, 0, p.probe, 0));
    let rows = (0..limit.min(pairs.mated.len()))
        .map(|i| i * m)
        .chain((0..limit.min(pairs.nonmated.len())).map(|i| nonmated_offset + i * m));
    let (mut plain, mut enc) = (Vec::new(), Vec::new());
    for ((r, rs, p, ps), row) in mated.chain(nonmated).zip(rows) {
        let missing = || CliError::Usage(format!("subject {} lacks a complete session", db[r].subject_id));
        let fused = db[r].fused(&keys.layout.modalities, rs).ok_or_else(missing)?;
        let reference = matcher.encrypt_reference(&fused, &mut rng)?;
        let mut cascade = matcher.start(&reference)?;
        for (j, &modality) in order.iter().enumerate() {
            let probe = db[p].sample(modality, ps).ok_or_else(missing)?;
            let score = cascade.advance(&matcher, probe, &mut rng)?;
            let ip = ev.decrypt_values(&keys.secret_key, &score)?[0];
            let rec = &mut records[row + j];
            rec.encrypted_score = Some(dissimilarity_from_ip(ip, j + 1));
            plain.push(rec.plain_score);
            enc.push(dissimilarity_from_ip(ip, j + 1));
        }
    }
    let dev = score_deviation(&plain, &enc)?;
    println!();
    println!(
        "encrypted scores: {} comparisons, deviation mean {:.3e}, max {:.3e}",
        plain.len(),
        dev.mean,
        dev.max
    );
    Ok(())
}

pub fn serve(cfg: &Config, listen: Option<&str>, max_connections: Option<usize>) -> Result<(), CliError> {
    let data = load_dataset(cfg)?;
    let server = local_server(cfg, &data.subjects)?;
    let addr = listen.unwrap_or(&cfg.server.listen);
    let listener = TcpListener::bind(addr).map_err(|e| CliError::io(PathBuf::from(addr), e))?;
    let bound = listener.local_addr().map_err(|e| CliError::io(PathBuf::from(addr), e))?;
    println!(
        "policy {} thresholds {}",
        server.policy().name,
        format_thresholds(server.policy())
    );
    println!("enrolled subjects: {}", server.enrolled_count());
    println!("listening on {bound}");
    serve_tcp(server, listener, max_connections).map_err(|e| CliError::io(PathBuf::from(addr), e))
}

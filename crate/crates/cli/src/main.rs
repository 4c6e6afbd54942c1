//! `meshctl`: domain generation, training, meshing, evaluation and rendering.
//!
//! Every subcommand talks to a freemesh service. Without `--server` an
//! embedded one is started on a loopback port for the life of the command.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use freemesh_client::{Client, ClientError};
use freemesh_core::api::{ErrorKind, JobState, MeshRequest, RenderRequest, TrainRequest};
use freemesh_core::checkpoint::write_atomic;
use freemesh_core::domains::DomainSpec;
use freemesh_core::meshio::BoundaryDoc;
use freemesh_core::sac::SacConfig;
use freemesh_core::EnvConfig;

const OUT_DIR_VAR: &str = "MESHCTL_OUT_DIR";

#[derive(Parser)]
#[command(name = "meshctl", version, about = "Reinforcement-learned quad meshing")]
struct Cli {
    /// Service base URL. An embedded service is used when omitted.
    #[arg(long, env = "MESHCTL_SERVER", global = true)]
    server: Option<String>,
    /// Seed shared by domain generators and training.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the HTTP service in the foreground.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
    },
    /// Write a generated boundary as JSON.
    GenDomain {
        #[command(subcommand)]
        kind: DomainKind,
        /// Output file [default: $MESHCTL_OUT_DIR/domain.json].
        #[arg(long, global = true)]
        out: Option<PathBuf>,
    },
    /// Train a policy on one domain.
    Train(TrainArgs),
    /// Mesh a boundary with a trained checkpoint.
    Mesh {
        #[arg(long)]
        domain: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Mesh output [default: $MESHCTL_OUT_DIR/mesh.txt].
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        svg: Option<PathBuf>,
        /// Density weight: 1.5 sparse, 1 medium, 0.5 dense.
        #[arg(long, allow_negative_numbers = true)]
        upsilon: Option<f64>,
    },
    /// Print quality metrics of a mesh file.
    Eval {
        mesh: PathBuf,
        /// key=value lines instead of a table.
        #[arg(long)]
        kv: bool,
    },
    /// Render a boundary JSON or mesh file to SVG.
    Render {
        input: PathBuf,
        /// Boundary drawn over a mesh input.
        #[arg(long)]
        domain: Option<PathBuf>,
        /// SVG output [default: $MESHCTL_OUT_DIR/render.svg].
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum DomainKind {
    /// Star with alternating tips and valleys.
    Star {
        #[arg(long, default_value_t = 8)]
        points: usize,
        #[arg(long, default_value_t = 5.0)]
        radius: f64,
        #[arg(long, default_value_t = 0.5)]
        inner_ratio: f64,
        #[arg(long, default_value_t = 0.0)]
        jitter: f64,
    },
    LShape {
        #[arg(long, default_value_t = 2.0)]
        size: f64,
        #[arg(long, default_value_t = 1.0)]
        thickness: f64,
        /// Target edge length; 0 keeps the corners only.
        #[arg(long, default_value_t = 0.0)]
        segment: f64,
    },
    /// Notched box; the defaults are the bundled training domain.
    MultiNotch {
        #[arg(long, default_value_t = 10.0)]
        width: f64,
        #[arg(long, default_value_t = 6.0)]
        height: f64,
        #[arg(long, default_value_t = 2.5)]
        notch_depth: f64,
        #[arg(long, default_value_t = 0.3)]
        variation: f64,
        #[arg(long, default_value_t = 1.0)]
        segment: f64,
    },
    RingBridged {
        #[arg(long, default_value_t = 5.0)]
        outer: f64,
        #[arg(long, default_value_t = 3.0)]
        inner: f64,
        #[arg(long, default_value_t = 270.0)]
        sweep_deg: f64,
        #[arg(long, default_value_t = 12)]
        arc_segments: usize,
    },
    Convex {
        #[arg(long, default_value_t = 20)]
        vertices: usize,
        #[arg(long, default_value_t = 5.0)]
        radius: f64,
        #[arg(long, default_value_t = 0.0)]
        irregularity: f64,
    },
    /// Normalize a polygon file (boundary JSON or `x y` lines).
    PolygonFile {
        input: PathBuf,
        #[arg(long, default_value_t = 0.0)]
        segment: f64,
        #[arg(long, default_value_t = 0.0)]
        variation: f64,
    },
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    domain: PathBuf,
    /// Run directory, resolved on the service host [default: $MESHCTL_OUT_DIR/run].
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    total_steps: Option<u64>,
    #[arg(long, allow_negative_numbers = true)]
    upsilon: Option<f64>,
    /// JSON file with environment settings.
    #[arg(long)]
    env_config: Option<PathBuf>,
    /// JSON file with SAC settings.
    #[arg(long)]
    sac_config: Option<PathBuf>,
    #[arg(long, default_value_t = 1000)]
    poll_ms: u64,
}

/// Failure with its process exit code.
#[derive(Debug)]
enum Failure {
    Meshing(String),
    Input(String),
    Config(String),
    Other(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Other(_) => 1,
            Failure::Meshing(_) => 2,
            Failure::Input(_) => 3,
            Failure::Config(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Meshing(m) | Failure::Input(m) | Failure::Config(m) | Failure::Other(m) => m,
        }
    }
}

impl From<ClientError> for Failure {
    fn from(e: ClientError) -> Self {
        let msg = e.to_string();
        match e.kind() {
            Some(ErrorKind::Input) | Some(ErrorKind::NotFound) => Failure::Input(msg),
            Some(ErrorKind::Config) => Failure::Config(msg),
            Some(ErrorKind::Meshing) => Failure::Meshing(msg),
            _ => Failure::Other(msg),
        }
    }
}

type Result<T> = std::result::Result<T, Failure>;

fn default_out(name: &str) -> PathBuf {
    let dir = std::env::var_os(OUT_DIR_VAR).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("."));
    dir.join(name)
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_str(&read_text(path)?).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn write_out(path: &Path, bytes: &[u8]) -> Result<()> {
    let fail = |e: std::io::Error| Failure::Other(format!("cannot write {}: {e}", path.display()));
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(fail)?;
    }
    write_atomic(path, bytes).map_err(fail)
}

/// Reads boundary JSON, or whitespace separated `x y` lines with `#` comments.
fn read_polygon(path: &Path) -> Result<Vec<[f64; 2]>> {
    let text = read_text(path)?;
    if text.trim_start().starts_with('{') {
        let doc: BoundaryDoc =
            serde_json::from_str(&text).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
        return Ok(doc.vertices);
    }
    let mut pts = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let bad = || Failure::Input(format!("{}:{}: expected two numbers", path.display(), i + 1));
        let nums: Vec<f64> =
            line.split_whitespace().map(str::parse).collect::<std::result::Result<_, _>>().map_err(|_| bad())?;
        match nums[..] {
            [x, y] => pts.push([x, y]),
            _ => return Err(bad()),
        }
    }
    Ok(pts)
}

fn domain_spec(kind: DomainKind, seed: u64) -> Result<DomainSpec> {
    Ok(match kind {
        DomainKind::Star { points, radius, inner_ratio, jitter } => {
            DomainSpec::Star { points, radius, inner_ratio, jitter, seed }
        }
        DomainKind::LShape { size, thickness, segment } => DomainSpec::LShape { size, thickness, segment },
        DomainKind::MultiNotch { width, height, notch_depth, variation, segment } => {
            DomainSpec::MultiNotch { width, height, notch_depth, variation, segment, seed }
        }
        DomainKind::RingBridged { outer, inner, sweep_deg, arc_segments } => {
            DomainSpec::RingBridged { outer, inner, sweep_deg, arc_segments }
        }
        DomainKind::Convex { vertices, radius, irregularity } => DomainSpec::Convex { vertices, radius, irregularity, seed },
        DomainKind::PolygonFile { input, segment, variation } => {
            DomainSpec::PolygonFile { vertices: read_polygon(&input)?, segment, variation, seed }
        }
    })
}

async fn gen_domain(client: &Client, kind: DomainKind, out: Option<PathBuf>, seed: u64) -> Result<()> {
    let spec = domain_spec(kind, seed)?;
    let doc = client.gen_domain(&spec).await?;
    let out = out.unwrap_or_else(|| default_out("domain.json"));
    let mut json = serde_json::to_string_pretty(&doc).expect("boundary serializes");
    json.push('\n');
    write_out(&out, json.as_bytes())?;
    println!("{} vertices -> {}", doc.vertices.len(), out.display());
    Ok(())
}

async fn train(client: &Client, args: TrainArgs, seed: Option<u64>, embedded: bool) -> Result<()> {
    let boundary: BoundaryDoc = read_json(&args.domain)?;
    let env: Option<EnvConfig> = args.env_config.as_deref().map(read_json).transpose()?;
    let sac: Option<SacConfig> = args.sac_config.as_deref().map(read_json).transpose()?;
    let mut out_dir = args.out.unwrap_or_else(|| default_out("run"));
    if embedded {
        out_dir = std::path::absolute(&out_dir).map_err(|e| Failure::Input(format!("{}: {e}", out_dir.display())))?;
    }
    let req = TrainRequest { boundary, out_dir, env, sac, seed, total_steps: args.total_steps, upsilon: args.upsilon };
    let started = client.start_train(&req).await?;
    let id = started.job_id;
    eprintln!("{id}: training {} steps into {}", started.total_steps, started.out_dir.display());

    let mut shown = 0;
    let mut cancelled = false;
    let mut ctrl_c = std::pin::pin!(tokio::signal::ctrl_c());
    loop {
        let st = client.train_status(&id).await?;
        for rec in &st.evals[shown..] {
            println!("{}", serde_json::to_string(rec).expect("record serializes"));
        }
        shown = st.evals.len();
        match st.state {
            JobState::Running => {}
            JobState::Completed => {
                let ckpt = st.final_checkpoint.map(|p| p.display().to_string()).unwrap_or_default();
                println!("model {}", st.model_id.unwrap_or_default());
                println!("checkpoint {ckpt}");
                return Ok(());
            }
            JobState::Cancelled => return Err(Failure::Other(format!("{id} cancelled at step {}", st.step))),
            JobState::Failed => return Err(Failure::Other(st.error.unwrap_or_else(|| "training failed".into()))),
        }
        tokio::select! {
            _ = tokio::time::sleep(Duration::from_millis(args.poll_ms)) => {}
            _ = &mut ctrl_c, if !cancelled => {
                eprintln!("{id}: cancelling");
                cancelled = true;
                client.cancel_train(&id).await?;
            }
        }
    }
}

async fn mesh(
    client: &Client,
    domain: &Path,
    checkpoint: &Path,
    out: Option<PathBuf>,
    svg: Option<PathBuf>,
    upsilon: Option<f64>,
) -> Result<()> {
    let boundary: BoundaryDoc = read_json(domain)?;
    let bytes = std::fs::read(checkpoint).map_err(|e| Failure::Input(format!("{}: {e}", checkpoint.display())))?;
    let model = client.upload_model(bytes).await?;
    let req = MeshRequest { model_id: model.model_id, boundary, upsilon, svg: svg.is_some() };
    let resp = client.mesh(&req).await?;
    if let (Some(path), Some(text)) = (&svg, &resp.svg) {
        write_out(path, text.as_bytes())?;
    }
    if !resp.completed {
        return Err(Failure::Meshing(format!(
            "meshing failed after {} steps ({} invalid): {} quads placed, {} boundary vertices left{}",
            resp.steps,
            resp.invalid_steps,
            resp.quads,
            resp.remaining_vertices,
            svg.map(|p| format!("; partial mesh drawn to {}", p.display())).unwrap_or_default(),
        )));
    }
    let out = out.unwrap_or_else(|| default_out("mesh.txt"));
    write_out(&out, resp.mesh.as_bytes())?;
    println!(
        "{} quads in {:.3} s ({} steps, {} invalid, rules {:?}) -> {}",
        resp.quads,
        resp.seconds,
        resp.steps,
        resp.invalid_steps,
        resp.rule_counts,
        out.display()
    );
    Ok(())
}

async fn eval(client: &Client, path: &Path, kv: bool) -> Result<()> {
    let report = client.eval(&read_text(path)?).await?;
    print!("{}", if kv { report.to_kv() } else { report.to_table() });
    Ok(())
}

async fn render(client: &Client, input: &Path, domain: Option<PathBuf>, out: Option<PathBuf>) -> Result<()> {
    let text = read_text(input)?;
    let mut req = RenderRequest { boundary: None, mesh: None };
    if text.trim_start().starts_with('{') {
        req.boundary = Some(serde_json::from_str(&text).map_err(|e| Failure::Input(format!("{}: {e}", input.display())))?);
    } else {
        req.mesh = Some(text);
    }
    if let Some(d) = domain {
        req.boundary = Some(read_json(&d)?);
    }
    let svg = client.render(&req).await?.svg;
    let out = out.unwrap_or_else(|| default_out("render.svg"));
    write_out(&out, svg.as_bytes())?;
    println!("{}", out.display());
    Ok(())
}

async fn serve(addr: SocketAddr) -> Result<()> {
    let (local, task) = freemesh_service::spawn(addr).await.map_err(|e| Failure::Other(format!("bind {addr}: {e}")))?;
    eprintln!("listening on http://{local}");
    tokio::select! {
        r = task => match r {
            Ok(Ok(())) => Ok(()),
            Ok(Err(e)) => Err(Failure::Other(e.to_string())),
            Err(e) => Err(Failure::Other(e.to_string())),
        },
        _ = tokio::signal::ctrl_c() => Ok(()),
    }
}

async fn run(cli: Cli) -> Result<()> {
    if let Cmd::Serve { addr } = cli.cmd {
        return serve(addr).await;
    }
    let embedded = cli.server.is_none();
    let base = match cli.server {
        Some(url) => url,
        None => {
            let (addr, _task) = freemesh_service::spawn(SocketAddr::from(([127, 0, 0, 1], 0)))
                .await
                .map_err(|e| Failure::Other(format!("embedded service: {e}")))?;
            format!("http://{addr}")
        }
    };
    let client = Client::new(base);
    match cli.cmd {
        Cmd::Serve { .. } => unreachable!("handled above"),
        Cmd::GenDomain { kind, out } => gen_domain(&client, kind, out, cli.seed.unwrap_or(0)).await,
        Cmd::Train(args) => train(&client, args, cli.seed, embedded).await,
        Cmd::Mesh { domain, checkpoint, out, svg, upsilon } => {
            mesh(&client, &domain, &checkpoint, out, svg, upsilon).await
        }
        Cmd::Eval { mesh, kv } => eval(&client, &mesh, kv).await,
        Cmd::Render { input, domain, out } => render(&client, &input, domain, out).await,
    }
}

#[tokio::main]
async fn main() -> ExitCode {
    // Usage errors exit 3 so that 2 stays reserved for meshing failures.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 3 } else { 0 });
        }
    };
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new(if matches!(cli.cmd, Cmd::Serve { .. }) { "info" } else { "warn" })),
        )
        .with_writer(std::io::stderr)
        .init();
    match run(cli).await {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("meshctl: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

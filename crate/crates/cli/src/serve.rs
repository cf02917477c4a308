use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;
use rand::distr::{Alphanumeric, SampleString};
use serde::Deserialize;
use vcm_core::game::SessionConfig;
use vcm_server::{bind_addr, resume, serve, ServeOptions, SessionState};

#[derive(Args)]
pub struct ServeArgs {
    /// TOML with a `[session]` table and optional `[serve]` table; a roster, if present, is ignored.
    #[arg(long)]
    config: PathBuf,
    /// Port on 127.0.0.1; `VCM_BIND_ADDR` overrides the whole address.
    #[arg(long, default_value_t = 7000)]
    port: u16,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, env = "VCM_OPERATOR_KEY")]
    operator_key: Option<String>,
    /// Continue an interrupted session from its snapshot in `--out`.
    #[arg(long)]
    resume: bool,
}

#[derive(Deserialize)]
struct ServeFile {
    #[serde(default)]
    session: SessionConfig,
    #[serde(default)]
    serve: ServeSection,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct ServeSection {
    session_id: Option<String>,
    /// One join token per subject, in subject order. Generated when absent.
    tokens: Option<Vec<String>>,
}

pub fn run(args: ServeArgs) -> Result<()> {
    let text = fs::read_to_string(&args.config).with_context(|| format!("reading {}", args.config.display()))?;
    let file: ServeFile = toml::from_str(&text).with_context(|| format!("parsing {}", args.config.display()))?;
    let session_id = file.serve.session_id.unwrap_or_else(|| format!("live-{}", file.session.seed));
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let opts = ServeOptions::in_dir(&args.out, &session_id);

    let state = if args.resume {
        let st = resume(&opts)?;
        eprintln!("resuming {session_id} at {:?} with {} complete rounds", st.phase, st.log.rounds_recorded());
        st
    } else {
        if opts.snapshot.exists() {
            bail!("{} exists; pass --resume to continue that session", opts.snapshot.display());
        }
        let n = file.session.session_size();
        let tokens = match file.serve.tokens {
            Some(t) => t,
            None => {
                let mut rng = rand::rng();
                let t: Vec<String> = (0..n).map(|_| Alphanumeric.sample_string(&mut rng, 8)).collect();
                let path = args.out.join(format!("{session_id}.tokens"));
                fs::write(&path, t.join("\n") + "\n").with_context(|| format!("writing {}", path.display()))?;
                eprintln!("join tokens written to {}", path.display());
                t
            }
        };
        let key = match args.operator_key {
            Some(k) => k,
            None => {
                let k = Alphanumeric.sample_string(&mut rand::rng(), 16);
                eprintln!("operator key: {k}");
                k
            }
        };
        SessionState::new(&session_id, file.session, tokens, &key)?
    };

    let addr = bind_addr(args.port);
    let runtime = tokio::runtime::Runtime::new()?;
    let log = runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(&addr).await.with_context(|| format!("binding {addr}"))?;
        eprintln!("session {session_id} listening on {}", listener.local_addr()?);
        Ok::<_, anyhow::Error>(serve(listener, state, opts.clone()).await?)
    })?;
    eprintln!(
        "session {} {} after {} rounds; log at {}",
        session_id,
        if log.header.complete { "finished" } else { "aborted" },
        log.rounds_recorded(),
        opts.log.display()
    );
    Ok(())
}

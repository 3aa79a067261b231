//! `hefuse` command-line toolkit.

mod commands;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "hefuse", version, about = "Encrypted multi-modal biometric verification toolkit")]
struct Cli {
    /// TOML configuration file. Built-in defaults for PN12QP109 when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a configuration file with every default filled in.
    Init {
        /// Parameter preset: TOY, PN12QP109 or PN13QP218.
        #[arg(long, default_value = "PN12QP109")]
        preset: String,
        #[arg(long, default_value = "hefuse.toml")]
        out: PathBuf,
        /// Overwrite an existing file.
        #[arg(long)]
        force: bool,
    },
    /// Generate server key material into the configured keys directory.
    Keygen,
    /// Generate the synthetic dataset into the configured dataset file.
    Synth,
    /// Encrypt first-session references and enroll them.
    Enroll {
        /// Enroll only the first N subjects.
        #[arg(long)]
        subjects: Option<usize>,
        /// Replace references that already exist.
        #[arg(long)]
        replace: bool,
        /// Enroll through a running `serve` instance instead of in-process.
        #[arg(long, value_name = "ADDR")]
        connect: Option<String>,
    },
    /// Run one verification session.
    Verify {
        /// Claimed subject id.
        #[arg(long)]
        subject: String,
        /// Capture session of the probe.
        #[arg(long, default_value_t = 1)]
        session: usize,
        /// Present the probe of another subject (impostor attempt).
        #[arg(long)]
        probe_subject: Option<String>,
        /// Verify against a running `serve` instance instead of in-process.
        #[arg(long, value_name = "ADDR")]
        connect: Option<String>,
        /// Print every protocol message.
        #[arg(long)]
        transcript: bool,
    },
    /// Self-contained keygen, enrollment and verification of one subject.
    Demo {
        /// amb-fhe-1, amb-fhe-2 or multi-and.
        #[arg(long, default_value = "amb-fhe-1")]
        policy: String,
        /// Subject index in the synthetic population.
        #[arg(long, default_value_t = 0)]
        subject: usize,
        /// Present the next subject's probe instead of a mated one.
        #[arg(long)]
        impostor: bool,
        /// Run the session over loopback TCP instead of an in-memory pipe.
        #[arg(long)]
        tcp: bool,
    },
    /// Primitive microbenchmarks and the incremental stage-2 comparison.
    Bench {
        /// Overrides the configured preset.
        #[arg(long)]
        preset: Option<String>,
        /// Overrides the configured template length.
        #[arg(long)]
        template_len: Option<usize>,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        warmups: Option<usize>,
        /// Skip the incremental-versus-naive comparison.
        #[arg(long)]
        skip_incremental: bool,
    },
    /// Sweep the synthetic noise level and report uni-modal EERs.
    Calibrate {
        #[arg(long, default_value_t = 0.086)]
        from: f64,
        #[arg(long, default_value_t = 0.092)]
        to: f64,
        #[arg(long, default_value_t = 0.0005)]
        step: f64,
        /// Target uni-modal EER in percent.
        #[arg(long, default_value_t = 1.2)]
        target: f64,
    },
    /// EER and saved-presentation reports over the dataset.
    Evaluate {
        /// FMR targets in percent, comma separated.
        #[arg(long, value_delimiter = ',', default_values_t = [0.01, 0.1, 1.0])]
        fmr: Vec<f64>,
        /// Also score the first N mated and N non-mated comparisons under
        /// encryption.
        #[arg(long, default_value_t = 0)]
        encrypted: usize,
    },
    /// Serve verification sessions over TCP.
    Serve {
        /// Overrides the configured listen address.
        #[arg(long)]
        listen: Option<String>,
        /// Exit after this many connections.
        #[arg(long)]
        max_connections: Option<usize>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    use commands as c;
    if let Command::Init { preset, out, force } = &cli.command {
        return c::init(preset, out, *force);
    }
    let cfg = c::load_config(cli.config.as_deref())?;
    match cli.command {
        Command::Init { .. } => unreachable!(),
        Command::Keygen => c::keygen(&cfg),
        Command::Synth => c::synth(&cfg),
        Command::Enroll {
            subjects,
            replace,
            connect,
        } => c::enroll(&cfg, subjects, replace, connect.as_deref()),
        Command::Verify {
            subject,
            session,
            probe_subject,
            connect,
            transcript,
        } => c::verify(
            &cfg,
            &c::VerifyArgs {
                subject,
                session,
                probe_subject,
                connect,
                transcript,
            },
        ),
        Command::Demo {
            policy,
            subject,
            impostor,
            tcp,
        } => c::demo(&cfg, &policy, subject, impostor, tcp),
        Command::Bench {
            preset,
            template_len,
            iterations,
            warmups,
            skip_incremental,
        } => c::bench(
            &cfg,
            &c::BenchArgs {
                preset,
                template_len,
                iterations,
                warmups,
                skip_incremental,
            },
        ),
        Command::Calibrate { from, to, step, target } => c::calibrate(&cfg, from, to, step, target),
        Command::Evaluate { fmr, encrypted } => c::evaluate(&cfg, &fmr, encrypted),
        Command::Serve { listen, max_connections } => c::serve(&cfg, listen.as_deref(), max_connections),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

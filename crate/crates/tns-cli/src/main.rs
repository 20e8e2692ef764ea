//! Command-line entry point wiring the library end to end: model building
//! and validation, state construction and adiabatic ramps, gap
//! certification, observable generation, verification games, and dense
//! oracle audits. Every subcommand is a thin adapter over the library;
//! commands that write files do so atomically and record a run manifest.
//!
//! Exit codes: 0 on success, 1 on domain failures (validation violations,
//! missing certificates, REJECT verdicts, digest mismatches), 2 on usage
//! errors.

mod manifest;
mod spec;

use std::fmt;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use manifest::{
    code_version, compare_outputs, input_record, load_manifest, replay_argv, sha256_hex,
    InputRecord, ManifestBuilder,
};
use spec::ModelSpec;
use tns_core::gap::{
    certify_interval, certify_point, pairwise_prescan, GapCertificate, GapConfig, GapError,
    SparsityMode,
};
use tns_core::lattice::Graph;
use tns_core::models::{
    minus_minus_projector, x_ising_edge, zero_state, Fixture, Model,
};
use tns_core::observables::{
    build_q_j, build_q_lambda, build_z_pm, complete_map, completeness_gram, ObservableSpec,
    QjVariant,
};
use tns_core::operators::{CommutingFamily, LocalOperator, Pauli, PauliWord};
use tns_core::oracle::spectrum;
use tns_core::state::{
    adiabatic_evolve, build_parent_hamiltonian, build_state, AdiabaticSchedule, BetaPath, Budget,
};
use tns_core::verify::{
    plan_samples, run_verification, sample, Basis, BasisDistribution, Prover, SamplePlan,
    VerificationReport,
};

/// Residual tolerance `state check-annihilation` enforces.
const ANNIHILATION_TOL: f64 = 1e-9;

#[derive(Parser)]
#[command(
    name = "tns",
    version,
    about = "Tensor-network state family: construction, certification, and verification"
)]
struct Cli {
    /// Worker threads for parallel sweeps (default: TNS_WORKERS or 1).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build or validate model-spec files.
    #[command(subcommand)]
    Model(ModelCmd),
    /// Build states, check parent-term annihilation, run adiabatic ramps.
    #[command(subcommand)]
    State(StateCmd),
    /// Certify spectral-gap lower bounds.
    #[command(subcommand)]
    Gap(GapCmd),
    /// Generate observables and completeness reports.
    #[command(subcommand)]
    Obs(ObsCmd),
    /// Sample provers and run the verification game.
    #[command(subcommand)]
    Verify(VerifyCmd),
    /// Dense ground-truth audits.
    #[command(subcommand)]
    Oracle(OracleCmd),
    /// Re-run a recorded manifest and compare the regenerated outputs.
    Replay {
        /// Path to a `.manifest.json` written by an earlier run.
        manifest: PathBuf,
    },
}

/// Where a command's model comes from: a spec file or a named fixture.
#[derive(Args, Clone)]
struct Source {
    /// Model-spec file (JSON).
    #[arg(long, conflicts_with = "fixture")]
    model: Option<PathBuf>,
    /// Fixture name, e.g. FX-CHAIN4, FX-GIBBS4, FX-PROD6, FX-GRAM3.
    #[arg(long)]
    fixture: Option<String>,
    /// Inverse temperature: instantiates the fixture (default 0) or
    /// overrides the file's value.
    #[arg(long)]
    beta: Option<f64>,
}

#[derive(Subcommand)]
enum ModelCmd {
    /// Instantiate a fixture and emit its model-spec file.
    Build {
        /// Fixture name, e.g. FX-CHAIN4.
        #[arg(long)]
        fixture: String,
        /// Inverse temperature (default 0).
        #[arg(long)]
        beta: Option<f64>,
        /// Output path (default: <fixture>.tns in lowercase).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every model invariant and report violations.
    Validate {
        /// Model-spec file (alternative to --fixture).
        file: Option<PathBuf>,
        #[command(flatten)]
        source: Source,
    },
}

#[derive(Subcommand)]
enum StateCmd {
    /// Build the state and dump its amplitudes.
    Build {
        #[command(flatten)]
        source: Source,
        /// Output file (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Dump format: text (index re im lines) or binary (raw f64 pairs).
        #[arg(long, default_value = "text")]
        format: String,
    },
    /// Check that every parent term annihilates the built state.
    CheckAnnihilation {
        #[command(flatten)]
        source: Source,
    },
    /// Integrate the adiabatic ramp and report fidelity to the target.
    Adiabatic {
        #[command(flatten)]
        source: Source,
        /// Total ramp time.
        #[arg(long = "T")]
        total_time: f64,
        /// Integrator grid steps (default: a heuristic from T).
        #[arg(long)]
        grid: Option<usize>,
    },
}

#[derive(Subcommand)]
enum GapCmd {
    /// Certify a gap lower bound at one point.
    Certify {
        #[command(flatten)]
        source: Source,
        /// Pair retention: overlapping-only, all-pairs, or blocked:k.
        #[arg(long, default_value = "overlapping-only")]
        mode: String,
        /// Bound the projectorized Hamiltonian instead.
        #[arg(long)]
        projectorized: bool,
        /// Write the full certificate (a, c, residuals, solver config).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Chain point certificates with continuity steps over [0, target].
    Interval {
        #[command(flatten)]
        source: Source,
        /// Right end of the requested interval.
        #[arg(long)]
        beta_target: f64,
        /// Lower bound the continuity steps must preserve.
        #[arg(long, default_value_t = 0.0)]
        floor: f64,
        /// Pair retention mode.
        #[arg(long, default_value = "overlapping-only")]
        mode: String,
        /// Write the interval certificate.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Pairwise feasibility prescan (heuristic screen before a full solve).
    Prescan {
        #[command(flatten)]
        source: Source,
    },
}

#[derive(Subcommand)]
enum ObsCmd {
    /// Construct one observable and print its Pauli expansion.
    Gen {
        #[command(flatten)]
        source: Source,
        /// Region sites, comma-separated, e.g. 0,1.
        #[arg(long, value_delimiter = ',')]
        lambda: Vec<usize>,
        /// Kind: zplus, zminus, q, qjx, qjy, qjz, or word.
        #[arg(long)]
        kind: String,
        /// Pauli letters for the sandwiched operator (kinds q, qj*).
        #[arg(long = "P")]
        p: Option<String>,
        /// Sites the --P letters act on (kinds qj*; defaults to --lambda
        /// for kind q).
        #[arg(long, value_delimiter = ',')]
        p_sites: Option<Vec<usize>>,
        /// Designated site for the single-site variants (kinds qj*).
        #[arg(long)]
        site: Option<usize>,
        /// Full-length Pauli word for kind word, e.g. izzx.
        #[arg(long)]
        word: Option<String>,
        /// Write the spec with its expansion as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Completeness Gram matrix over all Pauli words.
    Gram {
        /// Build the conjugated-chain fixture on n sites (alternative to
        /// --model/--fixture).
        #[arg(long)]
        n: Option<usize>,
        #[command(flatten)]
        source: Source,
    },
}

#[derive(Subcommand)]
enum VerifyCmd {
    /// Play the verification game against a prover.
    Run {
        #[command(flatten)]
        source: Source,
        /// honest, depolarized:p, marginal, or signalling.
        #[arg(long)]
        prover: String,
        /// Fidelity slack: accept at F >= 1 - epsilon.
        #[arg(long, default_value_t = 0.1)]
        epsilon: f64,
        /// Confidence parameter of the sample plan.
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        /// Simulated rounds (the plan's analytic sizes are reported).
        #[arg(long)]
        rounds: usize,
        /// Master seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Certified gap lower bound; default: certify at the model's beta.
        #[arg(long)]
        delta: Option<f64>,
        /// Observable checks, repeatable: zplus:0,1 zminus:2 word:izzx.
        #[arg(long = "check")]
        checks: Vec<String>,
        /// Write the transcript (one "bases outcomes" line per round).
        #[arg(long)]
        out_transcript: Option<PathBuf>,
        /// Write the full report as JSON.
        #[arg(long)]
        out_report: Option<PathBuf>,
    },
    /// Draw measurement rounds from a prover and emit the transcript.
    Sample {
        #[command(flatten)]
        source: Source,
        /// honest, depolarized:p, marginal, or signalling.
        #[arg(long)]
        prover: String,
        /// Rounds to draw.
        #[arg(long)]
        rounds: usize,
        /// Master seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// uniform, or fixed:<letters>[;<letters>...], e.g. fixed:xzxz.
        #[arg(long, default_value = "uniform")]
        basis: String,
        /// Output file (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum OracleCmd {
    /// Dense spectrum of the assembled parent Hamiltonian.
    Spectrum {
        #[command(flatten)]
        source: Source,
        /// How many low eigenvalues to report.
        #[arg(long, default_value_t = 4)]
        k: usize,
    },
    /// CSV sweep over a beta grid: beta, E0, gap, delta_sdp.
    Sweep {
        #[command(flatten)]
        source: Source,
        /// Largest beta on the grid.
        #[arg(long, default_value_t = 0.5)]
        beta_max: f64,
        /// Grid points (including both ends).
        #[arg(long, default_value_t = 21)]
        points: usize,
        /// Pair retention mode for the certificates.
        #[arg(long, default_value = "overlapping-only")]
        mode: String,
        /// CSV output path.
        #[arg(long)]
        out: PathBuf,
    },
}

/// Bad flag values discovered after clap parsing; mapped to exit code 2.
#[derive(Debug)]
struct UsageError(String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage_err(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(UsageError(msg.into()))
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let cli = Cli::parse();
    match dispatch(cli, &argv) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            if err.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn dispatch(cli: Cli, argv: &[String]) -> Result<()> {
    let workers = effective_workers(cli.workers);
    match cli.command {
        Command::Model(cmd) => match cmd {
            ModelCmd::Build { fixture, beta, out } => cmd_model_build(&fixture, beta, out, argv),
            ModelCmd::Validate { file, source } => cmd_model_validate(file, &source),
        },
        Command::State(cmd) => match cmd {
            StateCmd::Build {
                source,
                out,
                format,
            } => cmd_state_build(&source, out, &format, argv),
            StateCmd::CheckAnnihilation { source } => cmd_state_check(&source),
            StateCmd::Adiabatic {
                source,
                total_time,
                grid,
            } => cmd_state_adiabatic(&source, total_time, grid),
        },
        Command::Gap(cmd) => match cmd {
            GapCmd::Certify {
                source,
                mode,
                projectorized,
                out,
            } => cmd_gap_certify(&source, &mode, projectorized, out, argv),
            GapCmd::Interval {
                source,
                beta_target,
                floor,
                mode,
                out,
            } => cmd_gap_interval(&source, beta_target, floor, &mode, out, argv),
            GapCmd::Prescan { source } => cmd_gap_prescan(&source),
        },
        Command::Obs(cmd) => match cmd {
            ObsCmd::Gen {
                source,
                lambda,
                kind,
                p,
                p_sites,
                site,
                word,
                out,
            } => cmd_obs_gen(&source, &lambda, &kind, p, p_sites, site, word, out, argv),
            ObsCmd::Gram { n, source } => cmd_obs_gram(n, &source),
        },
        Command::Verify(cmd) => match cmd {
            VerifyCmd::Run {
                source,
                prover,
                epsilon,
                alpha,
                rounds,
                seed,
                delta,
                checks,
                out_transcript,
                out_report,
            } => cmd_verify_run(
                &source,
                &prover,
                epsilon,
                alpha,
                rounds,
                seed,
                delta,
                &checks,
                out_transcript,
                out_report,
                argv,
            ),
            VerifyCmd::Sample {
                source,
                prover,
                rounds,
                seed,
                basis,
                out,
            } => cmd_verify_sample(&source, &prover, rounds, seed, &basis, out, argv),
        },
        Command::Oracle(cmd) => match cmd {
            OracleCmd::Spectrum { source, k } => cmd_oracle_spectrum(&source, k),
            OracleCmd::Sweep {
                source,
                beta_max,
                points,
                mode,
                out,
            } => cmd_oracle_sweep(&source, beta_max, points, &mode, &out, workers, argv),
        },
        Command::Replay { manifest } => cmd_replay(&manifest),
    }
}

fn effective_workers(flag: Option<usize>) -> usize {
    flag.or_else(|| {
        std::env::var("TNS_WORKERS")
            .ok()
            .and_then(|v| v.parse().ok())
    })
    .unwrap_or(1)
    .max(1)
}

// ---------------------------------------------------------------------------
// Shared loading and parsing helpers.

fn parse_fixture(name: &str) -> Result<Fixture> {
    Fixture::parse(name).map_err(|e| usage_err(e.to_string()))
}

fn parse_mode(mode: &str) -> Result<SparsityMode> {
    SparsityMode::parse(mode).ok_or_else(|| {
        usage_err(format!(
            "unknown mode {mode:?} (expected overlapping-only, all-pairs, or blocked:k)"
        ))
    })
}

fn parse_prover(s: &str) -> Result<Prover> {
    match s {
        "honest" => Ok(Prover::Honest),
        "marginal" | "marginal-cheat" => Ok(Prover::MarginalCheat),
        "signalling" | "signalling-cheat" => Ok(Prover::SignallingCheat),
        _ => {
            if let Some(p) = s.strip_prefix("depolarized:") {
                let p: f64 = p
                    .parse()
                    .map_err(|_| usage_err(format!("bad depolarizing strength in {s:?}")))?;
                Ok(Prover::Depolarized(p))
            } else {
                Err(usage_err(format!(
                    "unknown prover {s:?} (expected honest, depolarized:p, marginal, signalling)"
                )))
            }
        }
    }
}

fn parse_pauli_letters(s: &str) -> Result<Vec<Pauli>> {
    s.chars()
        .map(|c| match c.to_ascii_lowercase() {
            'i' => Ok(Pauli::I),
            'x' => Ok(Pauli::X),
            'y' => Ok(Pauli::Y),
            'z' => Ok(Pauli::Z),
            other => Err(usage_err(format!("bad Pauli letter {other:?} in {s:?}"))),
        })
        .collect()
}

fn parse_basis_letters(s: &str) -> Result<Vec<Basis>> {
    s.chars()
        .map(|c| {
            Basis::parse(c.to_ascii_lowercase())
                .ok_or_else(|| usage_err(format!("bad basis letter {c:?} in {s:?}")))
        })
        .collect()
}

impl Source {
    /// Loads the model plus its manifest input records and a short label.
    fn load(&self) -> Result<(Model, Vec<InputRecord>, String)> {
        self.load_with(None)
    }

    /// `load` with an optional positional file taking the place of --model.
    fn load_with(&self, positional: Option<&Path>) -> Result<(Model, Vec<InputRecord>, String)> {
        let file = positional.or(self.model.as_deref());
        match (file, &self.fixture) {
            (Some(_), Some(_)) => Err(usage_err("give a model file or --fixture, not both")),
            (None, None) => Err(usage_err("a model is required: --model <file> or --fixture <name>")),
            (Some(path), None) => {
                let record = input_record(path)?;
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading {}", path.display()))?;
                let mut model = ModelSpec::parse(&text)?
                    .to_model()
                    .with_context(|| format!("{} failed validation", path.display()))?;
                let mut label = path.display().to_string();
                if let Some(beta) = self.beta {
                    model = model.with_beta(beta)?;
                    label = format!("{label}@beta={beta}");
                }
                Ok((model, vec![record], label))
            }
            (None, Some(name)) => {
                let fx = parse_fixture(name)?;
                let beta = self.beta.unwrap_or(0.0);
                let model = fx.model(beta)?;
                let label = format!("fixture:{}@beta={beta}", fx.name());
                let record = InputRecord {
                    label: label.clone(),
                    sha256: sha256_hex(label.as_bytes()),
                };
                Ok((model, vec![record], label))
            }
        }
    }
}

fn config_with_mode(projectorized: bool) -> GapConfig {
    GapConfig {
        projectorized,
        ..GapConfig::default()
    }
}

// ---------------------------------------------------------------------------
// model

fn cmd_model_build(
    fixture: &str,
    beta: Option<f64>,
    out: Option<PathBuf>,
    argv: &[String],
) -> Result<()> {
    let fx = parse_fixture(fixture)?;
    let beta = beta.unwrap_or(0.0);
    let model = fx.model(beta)?;
    let text = ModelSpec::from_model(&model).to_json()?;
    let out = out.unwrap_or_else(|| PathBuf::from(format!("{}.tns", fx.name().to_lowercase())));
    let label = format!("fixture:{}@beta={beta}", fx.name());
    let mut mb = ManifestBuilder::new(
        argv.to_vec(),
        json!({"fixture": fx.name(), "beta": beta, "out": out.display().to_string()}),
        None,
        vec![InputRecord {
            label: label.clone(),
            sha256: sha256_hex(label.as_bytes()),
        }],
    );
    mb.write_output(&out, text.as_bytes())?;
    let manifest_path = mb.finish(None)?;
    println!(
        "wrote {} ({} qubits, {} K1 terms, {} K2 terms, beta={}, t={})",
        out.display(),
        model.n(),
        model.k1.len(),
        model.k2.len(),
        model.beta,
        model.t
    );
    if let Some(p) = manifest_path {
        println!("manifest: {}", p.display());
    }
    Ok(())
}

fn cmd_model_validate(file: Option<PathBuf>, source: &Source) -> Result<()> {
    let (model, _, label) = source.load_with(file.as_deref())?;
    println!("{label}: all invariants hold");
    println!(
        "  {} qubits, {} edges, {} K1 terms (radius {}), {} K2 terms (radius {})",
        model.n(),
        model.graph.edges().len(),
        model.k1.len(),
        model.k1.radius(),
        model.k2.len(),
        model.k2.radius()
    );
    println!("  beta = {}, t = {}", model.beta, model.t);
    Ok(())
}

// ---------------------------------------------------------------------------
// state

fn cmd_state_build(
    source: &Source,
    out: Option<PathBuf>,
    format: &str,
    argv: &[String],
) -> Result<()> {
    let (model, inputs, label) = source.load()?;
    let state = build_state(&model)?;
    let n = state.n();
    let mut mb = ManifestBuilder::new(
        argv.to_vec(),
        json!({"model": label, "format": format}),
        None,
        inputs,
    );
    let bytes = match format {
        "text" => {
            let mut s = String::new();
            s.push_str("# tns amplitude dump v1\n");
            s.push_str(&format!("# qubits: {n}; amplitudes: {}\n", 1usize << n));
            s.push_str("# ordering: site 0 is the most significant index bit\n");
            s.push_str("# columns: index re im\n");
            if out.is_some() {
                s.push_str(&format!("# manifest: {}\n", mb.core_digest()));
            }
            for (idx, amp) in state.amplitudes().iter().enumerate() {
                s.push_str(&format!("{idx} {:e} {:e}\n", amp.re, amp.im));
            }
            s.into_bytes()
        }
        "binary" => {
            let mut b = Vec::with_capacity(64 + (1usize << n) * 16);
            b.extend_from_slice(
                format!(
                    "# tns amplitude dump v1 binary; qubits: {n}; ordering: site 0 msb; \
                     layout: 2^n little-endian (re, im) f64 pairs; manifest: {}\n",
                    mb.core_digest()
                )
                .as_bytes(),
            );
            for amp in state.amplitudes().iter() {
                b.extend_from_slice(&amp.re.to_le_bytes());
                b.extend_from_slice(&amp.im.to_le_bytes());
            }
            b
        }
        other => return Err(usage_err(format!("unknown format {other:?} (text or binary)"))),
    };
    match out {
        Some(path) => {
            mb.write_output(&path, &bytes)?;
            let manifest_path = mb.finish(None)?;
            println!("wrote {} ({} amplitudes)", path.display(), 1usize << n);
            if let Some(p) = manifest_path {
                println!("manifest: {}", p.display());
            }
        }
        None => std::io::stdout().write_all(&bytes)?,
    }
    Ok(())
}

fn cmd_state_check(source: &Source) -> Result<()> {
    let (model, _, label) = source.load()?;
    let state = build_state(&model)?;
    let ph = build_parent_hamiltonian(&model)?;
    println!("{label}: {} parent terms", ph.len());
    for (j, term) in ph.terms().iter().enumerate() {
        let value = tns_core::oracle::exact_expectation(&state, term.operator())?;
        println!("  term {j}: <h> = {value:.3e}");
    }
    let worst = ph.max_term_residual(&state)?;
    let energy = ph.energy(&state)?;
    println!("max |<h_j>| = {worst:.3e} (tolerance {ANNIHILATION_TOL:.0e})");
    println!("total energy = {energy:.3e}");
    if worst > ANNIHILATION_TOL {
        bail!("annihilation check failed: max residual {worst:.3e} exceeds {ANNIHILATION_TOL:.0e}");
    }
    println!("annihilation check passed");
    Ok(())
}

fn cmd_state_adiabatic(source: &Source, total_time: f64, grid: Option<usize>) -> Result<()> {
    let (model, _, label) = source.load()?;
    let schedule = match grid {
        Some(k) if k > 0 => AdiabaticSchedule::new(
            total_time,
            BetaPath::Linear {
                beta_final: model.beta,
            },
            model.t,
            1.0 / k as f64,
        )?,
        Some(_) => return Err(usage_err("--grid must be positive")),
        None => AdiabaticSchedule::linear(total_time, model.beta, model.t)?,
    };
    let run = adiabatic_evolve(&model, &schedule, None, &Budget::default())?;
    println!("{label}: ramp to beta={} over T={total_time}", model.beta);
    println!("  steps: {}", run.steps);
    println!("  fidelity vs target: {:.10}", run.fidelity_vs_target);
    println!("  infidelity: {:.3e}", 1.0 - run.fidelity_vs_target);
    println!("  norm drift: {:.3e}", run.norm_drift);
    Ok(())
}

// ---------------------------------------------------------------------------
// gap

fn certificate_json(cert: &GapCertificate, mb: &ManifestBuilder, config: &GapConfig) -> serde_json::Value {
    let pairs = |m: &std::collections::BTreeMap<(usize, usize), f64>| {
        m.iter()
            .map(|(&(i, j), &v)| json!({"pair": [i, j], "value": v}))
            .collect::<Vec<_>>()
    };
    json!({
        "beta": cert.beta(),
        "t": cert.t(),
        "delta": cert.delta(),
        "mode": cert.sparsity_mode().to_string(),
        "projectorized": cert.projectorized(),
        "term_count": cert.term_count(),
        "a": pairs(cert.a()),
        "c": pairs(cert.c()),
        "row_sums": cert.row_sums(),
        "min_block_eig": cert.min_block_eig(),
        "equality_residual": cert.equality_residual(),
        "shrink_applied": cert.shrink_applied(),
        "solver": {
            "gap_tol": config.sdp.gap_tol,
            "feas_tol": config.sdp.feas_tol,
            "max_iter": config.sdp.max_iter,
            "block_dim_cap": config.block_dim_cap,
        },
        "code_version": code_version(),
        "manifest": mb.core_digest(),
    })
}

fn print_certificate(cert: &GapCertificate) {
    println!("certified delta = {:.10}", cert.delta());
    println!(
        "  beta = {}, t = {}, mode = {}, projectorized = {}",
        cert.beta(),
        cert.t(),
        cert.sparsity_mode(),
        cert.projectorized()
    );
    println!(
        "  terms = {}, pairs = {}, min block eig = {:.3e}, row-sum residual = {:.3e}, shrink = {:.3e}",
        cert.term_count(),
        cert.c().len() / 2,
        cert.min_block_eig(),
        cert.equality_residual(),
        cert.shrink_applied()
    );
}

fn cmd_gap_certify(
    source: &Source,
    mode: &str,
    projectorized: bool,
    out: Option<PathBuf>,
    argv: &[String],
) -> Result<()> {
    let (model, inputs, label) = source.load()?;
    let mode = parse_mode(mode)?;
    let config = config_with_mode(projectorized);
    let cert = certify_point(&model, mode, &config)
        .with_context(|| format!("no certificate for {label}"))?;
    println!("{label}:");
    print_certificate(&cert);
    if let Some(path) = out {
        let mut mb = ManifestBuilder::new(
            argv.to_vec(),
            json!({"model": label, "mode": mode.to_string(), "projectorized": projectorized}),
            None,
            inputs,
        );
        let mut text = serde_json::to_string_pretty(&certificate_json(&cert, &mb, &config))?;
        text.push('\n');
        mb.write_output(&path, text.as_bytes())?;
        if let Some(p) = mb.finish(None)? {
            println!("manifest: {}", p.display());
        }
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn cmd_gap_interval(
    source: &Source,
    beta_target: f64,
    floor: f64,
    mode: &str,
    out: Option<PathBuf>,
    argv: &[String],
) -> Result<()> {
    let (model, inputs, label) = source.load()?;
    let mode = parse_mode(mode)?;
    let config = GapConfig::default();
    let ic = certify_interval(&model, beta_target, floor, mode, &config)?;
    println!("{label}: interval certificate at t = {}", ic.t);
    for (i, (beta, cert)) in ic.beta_points.iter().zip(&ic.certificates).enumerate() {
        let step = ic
            .tau_steps
            .get(i)
            .map(|tau| format!(", step tau = {tau:.6}"))
            .unwrap_or_default();
        println!("  beta = {beta:.6}: delta = {:.8}{step}", cert.delta());
    }
    println!(
        "  covered [0, {:.6}] of [0, {beta_target}]: {} (delta_min = {:.6e}, floor = {floor}, scan spacing = {:.2e})",
        ic.beta0, ic.covered, ic.delta_min, ic.scan_spacing
    );
    if ic.stalled {
        println!("  stopped early: continuity step underflowed");
    }
    if let Some(path) = out {
        let mut mb = ManifestBuilder::new(
            argv.to_vec(),
            json!({"model": label, "mode": mode.to_string(), "beta_target": beta_target, "floor": floor}),
            None,
            inputs,
        );
        let doc = json!({
            "t": ic.t,
            "beta_points": ic.beta_points,
            "deltas": ic.certificates.iter().map(|c| c.delta()).collect::<Vec<_>>(),
            "tau_steps": ic.tau_steps,
            "delta_min": ic.delta_min,
            "beta0": ic.beta0,
            "covered": ic.covered,
            "stalled": ic.stalled,
            "scan_spacing": ic.scan_spacing,
            "code_version": code_version(),
            "manifest": mb.core_digest(),
        });
        let mut text = serde_json::to_string_pretty(&doc)?;
        text.push('\n');
        mb.write_output(&path, text.as_bytes())?;
        if let Some(p) = mb.finish(None)? {
            println!("manifest: {}", p.display());
        }
        println!("wrote {}", path.display());
    }
    if !ic.covered {
        bail!(
            "interval not covered: certified up to beta0 = {:.6} of target {beta_target}",
            ic.beta0
        );
    }
    Ok(())
}

fn cmd_gap_prescan(source: &Source) -> Result<()> {
    let (model, _, label) = source.load()?;
    let ph = build_parent_hamiltonian(&model)?;
    let report = pairwise_prescan(&ph, &GapConfig::default())?;
    println!(
        "{label}: prescanned {} overlapping pairs over {} terms",
        report.pair_weights.len(),
        report.row_sums.len()
    );
    for (i, sum) in report.row_sums.iter().enumerate() {
        println!("  row {i}: sum of minimal weights = {sum:.6}");
    }
    println!(
        "gap plausible (every row below 1): {}",
        report.gap_plausible
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// obs

#[allow(clippy::too_many_arguments)]
fn cmd_obs_gen(
    source: &Source,
    lambda: &[usize],
    kind: &str,
    p: Option<String>,
    p_sites: Option<Vec<usize>>,
    site: Option<usize>,
    word: Option<String>,
    out: Option<PathBuf>,
    argv: &[String],
) -> Result<()> {
    let (model, inputs, label) = source.load()?;
    let p_operator = |sites: &[usize]| -> Result<LocalOperator> {
        let letters =
            parse_pauli_letters(p.as_deref().ok_or_else(|| usage_err("--P is required for this kind"))?)?;
        if letters.len() != sites.len() {
            return Err(usage_err(format!(
                "--P has {} letters for {} sites",
                letters.len(),
                sites.len()
            )));
        }
        Ok(LocalOperator::from_pauli(sites, &letters)?)
    };
    let observable: ObservableSpec = match kind {
        "zplus" => build_z_pm(&model, lambda)?.0,
        "zminus" => build_z_pm(&model, lambda)?.1,
        "q" => {
            let sites = p_sites.as_deref().unwrap_or(lambda);
            build_q_lambda(&model, lambda, &p_operator(sites)?)?
        }
        "qjx" | "qjy" | "qjz" => {
            let j = site.ok_or_else(|| usage_err("--site is required for qj kinds"))?;
            let sites = p_sites
                .as_deref()
                .ok_or_else(|| usage_err("--p-sites is required for qj kinds"))?;
            let variant = match kind {
                "qjx" => QjVariant::X,
                "qjy" => QjVariant::Y,
                _ => QjVariant::OneMinusZ,
            };
            build_q_j(&model, j, &p_operator(sites)?, variant)?
        }
        "word" => {
            let w = word.ok_or_else(|| usage_err("--word is required for kind word"))?;
            complete_map(&model, &PauliWord(parse_pauli_letters(&w)?))?
        }
        other => {
            return Err(usage_err(format!(
                "unknown kind {other:?} (zplus, zminus, q, qjx, qjy, qjz, word)"
            )))
        }
    };
    println!("{label}: {} on sites {:?}", observable.kind, observable.lambda);
    println!("  expected value on the built state: {}", observable.expected);
    println!(
        "  expansion support {:?}, {} terms, truncation {:.3e}",
        observable.expansion.support,
        observable.expansion.len(),
        observable.expansion.truncation
    );
    for (word, coeff) in &observable.expansion.coeffs {
        println!("    {word}: {coeff:.12}");
    }
    if let Some(path) = out {
        let mut mb = ManifestBuilder::new(
            argv.to_vec(),
            json!({"model": label, "kind": kind, "lambda": lambda}),
            None,
            inputs,
        );
        let doc = json!({
            "kind": observable.kind.to_string(),
            "lambda": observable.lambda,
            "expected": observable.expected,
            "expansion": {
                "support": observable.expansion.support,
                "terms": observable.expansion.coeffs.iter()
                    .map(|(w, c)| json!({"word": w.to_string(), "coeff": c}))
                    .collect::<Vec<_>>(),
                "truncation": observable.expansion.truncation,
            },
            "code_version": code_version(),
            "manifest": mb.core_digest(),
        });
        let mut text = serde_json::to_string_pretty(&doc)?;
        text.push('\n');
        mb.write_output(&path, text.as_bytes())?;
        if let Some(p) = mb.finish(None)? {
            println!("manifest: {}", p.display());
        }
        println!("wrote {}", path.display());
    }
    Ok(())
}

/// The conjugated-chain family on `n` sites used by `obs gram --n`.
fn conjugated_chain(n: usize, beta: f64) -> Result<Model> {
    let g = Graph::path(n);
    let k2 = CommutingFamily::new(
        &g,
        g.edges()
            .iter()
            .map(|&(a, b)| minus_minus_projector(a, b))
            .collect(),
        1,
    )?;
    let k1 = CommutingFamily::new(
        &g,
        g.edges().iter().map(|&(a, b)| x_ising_edge(a, b)).collect(),
        1,
    )?;
    Ok(Model::new(
        g,
        k1,
        k2,
        beta,
        std::f64::consts::PI,
        vec![zero_state(); n],
    )?)
}

fn cmd_obs_gram(n: Option<usize>, source: &Source) -> Result<()> {
    let (model, label) = match n {
        Some(n) => {
            if n == 0 {
                return Err(usage_err("--n must be positive"));
            }
            let beta = source.beta.unwrap_or(0.0);
            (
                conjugated_chain(n, beta)?,
                format!("conjugated-chain:{n}@beta={beta}"),
            )
        }
        None => {
            let (model, _, label) = source.load()?;
            (model, label)
        }
    };
    let report = completeness_gram(&model)?;
    println!("{label}: completeness Gram over {} words", report.dim);
    println!("  sigma_min = {:.12}", report.sigma_min);
    println!("  condition number = {:.6e}", report.cond);
    println!("  nonsingular: {}", report.nonsingular);
    if !report.nonsingular {
        bail!(
            "observable completion is singular: sigma_min = {:.3e}",
            report.sigma_min
        );
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// verify

fn parse_checks(model: &Model, checks: &[String]) -> Result<Vec<ObservableSpec>> {
    checks
        .iter()
        .map(|raw| {
            let (kind, payload) = raw
                .split_once(':')
                .ok_or_else(|| usage_err(format!("bad check {raw:?} (expected kind:payload)")))?;
            let sites = || -> Result<Vec<usize>> {
                payload
                    .split(',')
                    .map(|s| {
                        s.trim()
                            .parse::<usize>()
                            .map_err(|_| usage_err(format!("bad site list in {raw:?}")))
                    })
                    .collect()
            };
            match kind {
                "zplus" => Ok(build_z_pm(model, &sites()?)?.0),
                "zminus" => Ok(build_z_pm(model, &sites()?)?.1),
                "word" => Ok(complete_map(
                    model,
                    &PauliWord(parse_pauli_letters(payload)?),
                )?),
                other => Err(usage_err(format!(
                    "unknown check kind {other:?} (zplus, zminus, word)"
                ))),
            }
        })
        .collect()
}

fn print_verification(report: &VerificationReport, label: &str, delta_source: &str) {
    let plan = &report.plan;
    println!("verification report ({})", code_version());
    println!("model: {label}");
    println!(
        "prover: {}   seed: {}   rounds: {}",
        report.prover_tag, report.seed, report.rounds
    );
    println!(
        "plan: epsilon = {}, alpha = {}, locality = {}, delta = {:.6} ({delta_source})",
        plan.epsilon, plan.alpha_conf, plan.locality, plan.delta
    );
    println!(
        "  analytic per-term rounds: {} [{}]",
        plan.per_term,
        SamplePlan::per_term_rule()
    );
    println!(
        "  analytic total rounds: {} [{}], sigma = {:.3}",
        plan.total,
        SamplePlan::total_rule(),
        plan.sigma_assumed
    );
    println!(
        "energy: {:.6} +- {:.6}",
        report.energy.total, report.energy.total_std_error
    );
    for term in &report.energy.terms {
        println!(
            "  term {} ({} sites, {} rounds): {:.6} +- {:.6}, variance {:.3e} <= {:.3e}: {}",
            term.term_index,
            term.locality,
            term.rounds_used,
            term.estimate,
            term.std_error,
            term.empirical_variance,
            term.variance_bound,
            if term.within_bound { "ok" } else { "VIOLATED" }
        );
    }
    println!(
        "fidelity lower bound: {:.6} (point), {:.6} (conservative); accept threshold {:.6}",
        report.fidelity_lower,
        report.fidelity_conservative,
        1.0 - plan.epsilon
    );
    for check in &report.q_checks {
        println!(
            "observable check {}: estimate {:.6}, expected {}, se {:.6} -> {}",
            check.label,
            check.estimate,
            check.expected,
            check.std_error,
            if check.pass { "pass" } else { "FAIL" }
        );
    }
    let worst = report
        .consistency
        .iter()
        .min_by(|a, b| a.min_p_value.total_cmp(&b.min_p_value));
    if let Some(worst) = worst {
        println!(
            "consistency: {} ordered pairs, worst min p-value {:.4e} at ({}, {}), per-pair significance {:.3e} -> {}",
            report.consistency.len(),
            worst.min_p_value,
            worst.qubit_i,
            worst.qubit_j,
            worst.corrected_significance,
            if report.consistency.iter().all(|c| c.pass) {
                "pass"
            } else {
                "FAIL"
            }
        );
    }
    for reason in &report.reasons {
        println!("reject reason: {reason}");
    }
    println!("verdict: {}", report.verdict);
}

#[allow(clippy::too_many_arguments)]
fn cmd_verify_run(
    source: &Source,
    prover: &str,
    epsilon: f64,
    alpha: f64,
    rounds: usize,
    seed: u64,
    delta: Option<f64>,
    checks: &[String],
    out_transcript: Option<PathBuf>,
    out_report: Option<PathBuf>,
    argv: &[String],
) -> Result<()> {
    let (model, inputs, label) = source.load()?;
    let prover = parse_prover(prover)?;
    let ph = build_parent_hamiltonian(&model)?;
    let locality = ph
        .terms()
        .iter()
        .map(|t| t.operator().support().len())
        .max()
        .unwrap_or(1);
    let (delta, delta_source) = match delta {
        Some(d) => (d, "from --delta".to_string()),
        None => {
            let mode = if model.graph.edges().is_empty() {
                SparsityMode::AllPairs
            } else {
                SparsityMode::OverlappingOnly
            };
            let cert = certify_point(&model, mode, &GapConfig::default())
                .context("gap certification for the fidelity bound failed; pass --delta")?;
            (cert.delta(), format!("certified, mode {mode}"))
        }
    };
    let plan = plan_samples(locality, delta, epsilon, alpha, model.n(), None)?;
    let menu = parse_checks(&model, checks)?;
    let report = run_verification(
        &model,
        &prover,
        &plan,
        &menu,
        rounds,
        seed,
        &Budget::default(),
    )?;
    print_verification(&report, &label, &delta_source);

    if out_transcript.is_some() || out_report.is_some() {
        let mut mb = ManifestBuilder::new(
            argv.to_vec(),
            json!({
                "model": label, "prover": report.prover_tag, "epsilon": epsilon,
                "alpha": alpha, "rounds": rounds, "delta": delta,
            }),
            Some(seed),
            inputs,
        );
        if let Some(path) = &out_transcript {
            mb.write_output(path, report.samples.transcript().as_bytes())?;
            println!("transcript: {}", path.display());
        }
        if let Some(path) = &out_report {
            let doc = json!({
                "verdict": report.verdict.to_string(),
                "prover": report.prover_tag,
                "seed": report.seed,
                "rounds": report.rounds,
                "plan": {
                    "epsilon": plan.epsilon,
                    "alpha": plan.alpha_conf,
                    "locality": plan.locality,
                    "delta": plan.delta,
                    "per_term": plan.per_term,
                    "total": plan.total,
                    "sigma_assumed": plan.sigma_assumed,
                },
                "energy_total": report.energy.total,
                "energy_std_error": report.energy.total_std_error,
                "fidelity_lower": report.fidelity_lower,
                "fidelity_conservative": report.fidelity_conservative,
                "q_checks": report.q_checks.iter().map(|c| json!({
                    "label": c.label,
                    "expected": c.expected,
                    "estimate": c.estimate,
                    "std_error": c.std_error,
                    "pass": c.pass,
                })).collect::<Vec<_>>(),
                "consistency_min_p": report.consistency.iter()
                    .map(|c| c.min_p_value)
                    .fold(f64::INFINITY, f64::min),
                "reasons": report.reasons,
                "code_version": code_version(),
                "manifest": mb.core_digest(),
            });
            let mut text = serde_json::to_string_pretty(&doc)?;
            text.push('\n');
            mb.write_output(path, text.as_bytes())?;
            println!("report: {}", path.display());
        }
        if let Some(p) = mb.finish(None)? {
            println!("manifest: {}", p.display());
        }
    }
    if !report.verdict.is_accept() {
        bail!("verification rejected the {} prover", report.prover_tag);
    }
    Ok(())
}

fn cmd_verify_sample(
    source: &Source,
    prover: &str,
    rounds: usize,
    seed: u64,
    basis: &str,
    out: Option<PathBuf>,
    argv: &[String],
) -> Result<()> {
    let (model, inputs, label) = source.load()?;
    let prover = parse_prover(prover)?;
    let distribution = match basis {
        "uniform" => BasisDistribution::UniformIid,
        other => {
            let list = other
                .strip_prefix("fixed:")
                .ok_or_else(|| usage_err(format!("bad basis {other:?} (uniform or fixed:...)")))?;
            BasisDistribution::FixedList(
                list.split(';')
                    .map(parse_basis_letters)
                    .collect::<Result<Vec<_>>>()?,
            )
        }
    };
    let set = sample(&model, &prover, &distribution, rounds, seed, &Budget::default())?;
    let transcript = set.transcript();
    match out {
        Some(path) => {
            let mut mb = ManifestBuilder::new(
                argv.to_vec(),
                json!({"model": label, "prover": set.prover_tag, "rounds": rounds, "basis": basis}),
                Some(seed),
                inputs,
            );
            mb.write_output(&path, transcript.as_bytes())?;
            let manifest_path = mb.finish(None)?;
            println!("wrote {} ({} rounds)", path.display(), set.len());
            if let Some(p) = manifest_path {
                println!("manifest: {}", p.display());
            }
        }
        None => print!("{transcript}"),
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// oracle

fn cmd_oracle_spectrum(source: &Source, k: usize) -> Result<()> {
    let (model, _, label) = source.load()?;
    let ph = build_parent_hamiltonian(&model)?;
    let report = spectrum(&ph, k, &Budget::default())?;
    let target = build_state(&model)?;
    println!("{label}: dense spectrum of the assembled parent Hamiltonian");
    for (i, ev) in report.eigenvalues.iter().enumerate() {
        println!("  E{i} = {ev:.12}");
    }
    println!("gap = {:.12}", report.gap);
    println!("ground degeneracy = {}", report.ground_degeneracy);
    println!(
        "ground-vector fidelity vs built state = {:.12}",
        report.ground_vector.fidelity(&target)
    );
    Ok(())
}

// Soft certification failures become empty delta cells; structural errors
// abort the sweep.
fn sweep_delta(model: &Model, mode: SparsityMode, config: &GapConfig) -> Result<f64> {
    match certify_point(model, mode, config) {
        Ok(cert) => Ok(cert.delta()),
        Err(
            GapError::SolverNotOptimal { .. }
            | GapError::CertificateInfeasible { .. }
            | GapError::ShrinkFailed { .. }
            | GapError::NoCertificate { .. }
            | GapError::DegeneratePairBlock { .. }
            | GapError::NoRetainedPairs { .. },
        ) => Ok(f64::NAN),
        Err(e) => Err(e.into()),
    }
}

fn cmd_oracle_sweep(
    source: &Source,
    beta_max: f64,
    points: usize,
    mode: &str,
    out: &Path,
    workers: usize,
    argv: &[String],
) -> Result<()> {
    if points == 0 {
        return Err(usage_err("--points must be positive"));
    }
    let (model, inputs, label) = source.load()?;
    let mode = parse_mode(mode)?;
    let config = GapConfig::default();
    let budget = Budget::default();
    let betas: Vec<f64> = if points == 1 {
        vec![0.0]
    } else {
        (0..points)
            .map(|i| beta_max * i as f64 / (points - 1) as f64)
            .collect()
    };

    // Rows are computed by index so worker count cannot change the output.
    let mut rows: Vec<Option<(f64, f64, f64, f64)>> = vec![None; betas.len()];
    let workers = workers.min(betas.len()).max(1);
    std::thread::scope(|scope| -> Result<()> {
        let mut handles = Vec::new();
        for w in 0..workers {
            let betas = &betas;
            let model = &model;
            let config = &config;
            let budget = &budget;
            handles.push(scope.spawn(move || -> Result<Vec<(usize, (f64, f64, f64, f64))>> {
                let mut local = Vec::new();
                for idx in (w..betas.len()).step_by(workers) {
                    let m = model.with_beta(betas[idx])?;
                    let ph = build_parent_hamiltonian(&m)?;
                    let spec = spectrum(&ph, 2, budget)?;
                    let delta = sweep_delta(&m, mode, config)?;
                    local.push((idx, (betas[idx], spec.eigenvalues[0], spec.gap, delta)));
                }
                Ok(local)
            }));
        }
        for handle in handles {
            let local = handle
                .join()
                .map_err(|_| anyhow::anyhow!("sweep worker panicked"))??;
            for (idx, row) in local {
                rows[idx] = Some(row);
            }
        }
        Ok(())
    })?;

    let mut mb = ManifestBuilder::new(
        argv.to_vec(),
        json!({
            "model": label, "beta_max": beta_max, "points": points,
            "mode": mode.to_string(), "workers": workers,
        }),
        None,
        inputs,
    );
    let mut csv = String::new();
    csv.push_str(&format!("# manifest: {}\n", mb.core_digest()));
    csv.push_str(&format!("# model: {label}; mode: {mode}; {}\n", code_version()));
    csv.push_str("beta,e0,gap,delta_sdp\n");
    for row in rows.into_iter().flatten() {
        csv.push_str(&format!("{:e},{:e},{:e},{:e}\n", row.0, row.1, row.2, row.3));
    }
    mb.write_output(out, csv.as_bytes())?;
    let manifest_path = mb.finish(None)?;
    println!("wrote {} ({} grid points)", out.display(), betas.len());
    if let Some(p) = manifest_path {
        println!("manifest: {}", p.display());
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// replay

fn cmd_replay(path: &Path) -> Result<()> {
    let manifest = load_manifest(path)?;
    let argv = replay_argv(&manifest)?;
    if argv.first().map(String::as_str) == Some("replay") {
        return Err(usage_err("refusing to replay a replay invocation"));
    }
    println!("replaying: tns {}", argv.join(" "));
    // Re-dispatch with the recorded argv verbatim so the regenerated
    // manifest digest (embedded in some outputs) matches bit for bit.
    let cli = Cli::try_parse_from(&manifest.command_line)
        .map_err(|e| usage_err(format!("recorded command no longer parses: {e}")))?;
    dispatch(cli, &manifest.command_line)?;
    let mismatched = compare_outputs(&manifest)?;
    for record in &manifest.outputs {
        let status = if mismatched.contains(&record.path) {
            "MISMATCH"
        } else {
            "VERIFIED"
        };
        println!("{status} {}", record.path);
    }
    if !mismatched.is_empty() {
        bail!("{} of {} outputs differ from the manifest", mismatched.len(), manifest.outputs.len());
    }
    Ok(())
}

//! `tlaser`: inspect, decompose, and compress tensor weight files.
//!
//! Subcommands: `info`, `spectrum`, `csvd`, `lanczos`, `compress`,
//! `compare`, `roundtrip`. Every subcommand accepts `--json` for a
//! machine-readable report on stdout; diagnostics go to stderr.
//!
//! Exit codes: 0 success, 1 domain or configuration error, 2 I/O or parse
//! error, 3 numerical failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;
use serde_json::json;

use tlaser::{
    compare_methods, compress_model, csvd, lanczos_bidiag, load_config, load_manifest,
    matrix_frobenius_norm, phi_inverse, read_tns, seeded_start_slice, tensorize,
    triplets_from_state, write_tns, CompareMode, Error, LayerAction, Result, Tensor3, TnsData,
    TnsDtype, TransformSpec, WeightKind,
};

#[derive(Parser)]
#[command(name = "tlaser", version, about = "Transform-domain tensor compression toolkit")]
struct Cli {
    /// Cap worker parallelism at N threads (default: available cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Emit a machine-readable JSON report on stdout.
    #[arg(long, global = true)]
    json: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum KindArg {
    Attention,
    FfnIn,
    FfnOut,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MatchArg {
    Budget,
    Ratio,
}

/// Flags shared by the subcommands that accept either a third-order tensor
/// file or a 2-D weight file plus its structural layout.
#[derive(Args)]
struct KindFlags {
    /// Structural layout of a 2-D weight file.
    #[arg(long, value_enum)]
    kind: Option<KindArg>,

    /// Heads (attention) or blocks (FFN kinds) of a 2-D weight file.
    #[arg(long)]
    heads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Print dimensions, dtype, and Frobenius norm of a TNS file.
    Info { file: PathBuf },

    /// Print leading singular tube norms with cumulative energies.
    Spectrum {
        file: PathBuf,
        #[command(flatten)]
        kind: KindFlags,
        /// How many leading tubes to print.
        #[arg(long, default_value_t = 16)]
        top: usize,
    },

    /// Write the rank-r truncated c-SVD reconstruction of a tensor.
    Csvd {
        file: PathBuf,
        #[arg(long)]
        rank: usize,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        kind: KindFlags,
    },

    /// Approximate dominant singular triplets via Lanczos bidiagonalization.
    Lanczos {
        file: PathBuf,
        /// Bidiagonalization steps.
        #[arg(short)]
        k: usize,
        /// Number of triplets to report.
        #[arg(long, default_value_t = 3)]
        triplets: usize,
        /// Convergence tolerance on the residual norm.
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
        /// Seed of the random start slice.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        kind: KindFlags,
    },

    /// Compress every selected layer of a model.
    Compress {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },

    /// Run the tensor pipeline and the matrix baseline on one weight at a
    /// matched budget (or matched rank ratio) and print both reports.
    Compare {
        #[arg(long)]
        file: PathBuf,
        #[arg(long, value_enum)]
        kind: KindArg,
        /// Heads (attention) or blocks (FFN kinds).
        #[arg(long)]
        heads: usize,
        /// Slice rank used by the tensor pipeline.
        #[arg(long)]
        rank: usize,
        /// Matching mode for the baseline.
        #[arg(long = "match", value_enum, default_value = "budget")]
        match_mode: MatchArg,
    },

    /// Verify that tensorize/flatten is a bitwise identity on a weight file.
    Roundtrip {
        #[arg(long)]
        file: PathBuf,
        #[arg(long, value_enum)]
        kind: KindArg,
        /// Heads (attention) or blocks (FFN kinds).
        #[arg(long)]
        heads: usize,
    },
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Io(_) | Error::Parse { .. } => 2,
        Error::Numerical(_) => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version displays are successes; anything else is a
            // domain error per the exit-code contract.
            if e.use_stderr() {
                eprint!("{e}");
                return ExitCode::from(1);
            }
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };

    if let Some(n) = cli.threads {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global();
    }

    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

fn weight_kind_for(kind: KindArg, heads: usize, w: &DMatrix<f64>) -> WeightKind {
    match kind {
        KindArg::Attention => WeightKind::Attention {
            d_m: w.nrows(),
            n_h: heads,
        },
        KindArg::FfnIn => WeightKind::FfnIn {
            d_m: w.ncols(),
            blocks: heads,
        },
        KindArg::FfnOut => WeightKind::FfnOut {
            d_m: w.nrows(),
            blocks: heads,
        },
    }
}

/// Resolve a command input to a third-order tensor: 3-D files load directly,
/// 2-D files are tensorized per `--kind`/`--heads`.
fn load_as_tensor(file: &Path, flags: &KindFlags) -> Result<Tensor3> {
    let (data, _) = read_tns(file)?;
    match data {
        TnsData::Tensor(t) => {
            if flags.kind.is_some() {
                return Err(Error::invalid(
                    "--kind applies to 2-D weight files; this file is already 3-D",
                ));
            }
            Ok(t)
        }
        TnsData::Matrix(w) => {
            let (kind, heads) = match (flags.kind, flags.heads) {
                (Some(k), Some(h)) => (k, h),
                _ => {
                    return Err(Error::invalid(
                        "2-D weight files need --kind and --heads to be tensorized",
                    ))
                }
            };
            tensorize(&w, &weight_kind_for(kind, heads, &w))
        }
    }
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Info { file } => cmd_info(file, cli.json),
        Command::Spectrum { file, kind, top } => cmd_spectrum(file, kind, *top, cli.json),
        Command::Csvd {
            file,
            rank,
            out,
            kind,
        } => cmd_csvd(file, *rank, out, kind, cli.json),
        Command::Lanczos {
            file,
            k,
            triplets,
            tol,
            seed,
            kind,
        } => cmd_lanczos(file, *k, *triplets, *tol, *seed, kind, cli.json),
        Command::Compress {
            manifest,
            config,
            out,
        } => cmd_compress(manifest, config, out, cli.json),
        Command::Compare {
            file,
            kind,
            heads,
            rank,
            match_mode,
        } => cmd_compare(file, *kind, *heads, *rank, *match_mode, cli.json),
        Command::Roundtrip { file, kind, heads } => cmd_roundtrip(file, *kind, *heads, cli.json),
    }
}

fn cmd_info(file: &Path, as_json: bool) -> Result<()> {
    let (data, dtype) = read_tns(file)?;
    let dims = data.dims();
    let norm = data.frobenius_norm();
    let dtype_name = match dtype {
        TnsDtype::F64 => "f64",
        TnsDtype::F32 => "f32",
    };
    if as_json {
        println!(
            "{}",
            json!({
                "file": file.display().to_string(),
                "ndim": dims.len(),
                "dims": dims,
                "dtype": dtype_name,
                "frobenius_norm": norm,
            })
        );
    } else {
        println!("file:           {}", file.display());
        println!("dims:           {dims:?}");
        println!("dtype:          {dtype_name}");
        println!("frobenius norm: {norm:.12e}");
    }
    Ok(())
}

fn cmd_spectrum(file: &Path, flags: &KindFlags, top: usize, as_json: bool) -> Result<()> {
    let tensor = load_as_tensor(file, flags)?;
    let t = TransformSpec::dct(tensor.p());
    let f = csvd(&tensor, &t)?;
    let norms = f.tube_norms();
    let total_sq: f64 = norms.iter().map(|x| x * x).sum();
    let total_abs: f64 = norms.iter().sum();
    if total_sq == 0.0 {
        return Err(Error::DegenerateInput("zero tensor has no spectrum".into()));
    }

    let shown = top.min(norms.len());
    let mut cum_sq = 0.0;
    let mut cum_abs = 0.0;
    let mut rows = Vec::new();
    for (i, &norm) in norms.iter().enumerate() {
        cum_sq += norm * norm;
        cum_abs += norm;
        if i < shown {
            rows.push((i + 1, norm, cum_sq / total_sq, cum_abs / total_abs));
        }
    }

    if as_json {
        println!(
            "{}",
            json!({
                "file": file.display().to_string(),
                "tensor_dims": [tensor.m(), tensor.n(), tensor.p()],
                "tubes_total": norms.len(),
                "tube_norms": norms[..shown],
                "cumulative_energy_squared": rows.iter().map(|r| r.2).collect::<Vec<_>>(),
                "cumulative_energy_unsquared": rows.iter().map(|r| r.3).collect::<Vec<_>>(),
            })
        );
    } else {
        println!(
            "tensor {}x{}x{}; showing {} of {} singular tubes",
            tensor.m(),
            tensor.n(),
            tensor.p(),
            shown,
            norms.len()
        );
        println!("{:>4}  {:>14}  {:>12}  {:>12}", "i", "tube norm", "cum E^2", "cum E");
        for (i, norm, sq, abs) in rows {
            println!("{i:>4}  {norm:>14.6e}  {sq:>12.8}  {abs:>12.8}");
        }
    }
    Ok(())
}

fn cmd_csvd(file: &Path, rank: usize, out: &Path, flags: &KindFlags, as_json: bool) -> Result<()> {
    let tensor = load_as_tensor(file, flags)?;
    let t = TransformSpec::dct(tensor.p());
    let f = csvd(&tensor, &t)?;
    let truncated = f.truncate(rank)?;
    let err = (&truncated - &tensor).frobenius_norm();
    let rel = if tensor.frobenius_norm() > 0.0 {
        err / tensor.frobenius_norm()
    } else {
        0.0
    };
    write_tns(out, &TnsData::Tensor(truncated), TnsDtype::F64)?;

    if as_json {
        println!(
            "{}",
            json!({
                "file": file.display().to_string(),
                "out": out.display().to_string(),
                "rank": rank,
                "tubes_total": f.q(),
                "rel_error": rel,
                "tube_norms_prefix": f.tube_norms()[..f.q().min(8)],
            })
        );
    } else {
        println!("rank:      {rank} of {}", f.q());
        println!("rel error: {rel:.6e}");
        println!("wrote:     {}", out.display());
    }
    Ok(())
}

fn cmd_lanczos(
    file: &Path,
    k: usize,
    l: usize,
    tol: f64,
    seed: u64,
    flags: &KindFlags,
    as_json: bool,
) -> Result<()> {
    let tensor = load_as_tensor(file, flags)?;
    let t = TransformSpec::dct(tensor.p());
    if l == 0 || l >= k {
        return Err(Error::invalid(format!(
            "need 1 <= triplets < k, got triplets = {l}, k = {k}"
        )));
    }
    let start = seeded_start_slice(tensor.n(), tensor.p(), seed, &t)?;
    let state = lanczos_bidiag(&tensor, &start, k, &t)?;
    let triplets = triplets_from_state(&tensor, &state, l, tol, &t)?;

    if as_json {
        println!(
            "{}",
            json!({
                "file": file.display().to_string(),
                "k": k,
                "steps": state.k(),
                "breakdown": state.breakdown(),
                "seed": seed,
                "tol": tol,
                "triplets": triplets.iter().map(|tr| json!({
                    "tube_norm": tr.s_tube.norm(),
                    "residual_norm": tr.residual_norm,
                    "converged": tr.converged,
                })).collect::<Vec<_>>(),
            })
        );
    } else {
        println!(
            "steps: {} of {} requested{}",
            state.k(),
            k,
            if state.breakdown() { " (breakdown: factorization exact)" } else { "" }
        );
        println!("{:>4}  {:>14}  {:>14}  {:>9}", "i", "tube norm", "residual", "converged");
        for (i, tr) in triplets.iter().enumerate() {
            println!(
                "{:>4}  {:>14.8e}  {:>14.6e}  {:>9}",
                i + 1,
                tr.s_tube.norm(),
                tr.residual_norm,
                tr.converged
            );
        }
    }
    Ok(())
}

fn cmd_compress(manifest_path: &Path, config_path: &Path, out: &Path, as_json: bool) -> Result<()> {
    let manifest = load_manifest(manifest_path)?;
    let config = load_config(config_path)?;
    let manifest_dir = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    let report = compress_model(&manifest, manifest_dir, &config, out)?;

    if as_json {
        println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    } else {
        println!(
            "{:<16} {:<12} {:>5} {:>13} {:>22}",
            "layer", "action", "rank", "rel error", "params"
        );
        for outcome in &report.layers {
            match &outcome.action {
                LayerAction::Passthrough => {
                    println!("{:<16} {:<12} {:>5} {:>13} {:>22}", outcome.name, "passthrough", "-", "-", "-");
                }
                LayerAction::Compressed { report: r } => {
                    println!(
                        "{:<16} {:<12} {:>5} {:>13.6e} {:>12} -> {:<7}",
                        outcome.name, "tlaser", r.rank_used, r.rel_error,
                        r.params_original, r.params_retained
                    );
                }
            }
        }
        let t = &report.totals;
        println!(
            "total: {} layers, {} compressed, params {} -> {}, mean rel error {:.6e}",
            t.layers_total, t.layers_compressed, t.params_original, t.params_retained, t.mean_rel_error
        );
        println!("wrote: {}", out.display());
    }
    Ok(())
}

fn cmd_compare(
    file: &Path,
    kind: KindArg,
    heads: usize,
    rank: usize,
    match_mode: MatchArg,
    as_json: bool,
) -> Result<()> {
    let (data, _) = read_tns(file)?;
    let w = data.as_matrix()?;
    let weight_kind = weight_kind_for(kind, heads, w);
    let t = TransformSpec::dct(weight_kind.structural_count());
    let mode = match match_mode {
        MatchArg::Budget => CompareMode::EqualBudget,
        MatchArg::Ratio => CompareMode::EqualRatio,
    };
    let cmp = compare_methods(w, &weight_kind, rank, &t, mode)?;

    if as_json {
        println!("{}", serde_json::to_string_pretty(&cmp).expect("comparison serializes"));
    } else {
        println!(
            "{:<8} {:>5} {:>14} {:>16} {:>11}",
            "method", "rank", "rel error", "params retained", "over budget"
        );
        for r in [&cmp.laser, &cmp.tlaser] {
            let name = match r.method {
                tlaser::Method::Laser => "laser",
                tlaser::Method::Tlaser => "tlaser",
            };
            println!(
                "{:<8} {:>5} {:>14.6e} {:>16} {:>11}",
                name, r.rank_used, r.rel_error, r.params_retained, r.over_budget
            );
        }
    }
    Ok(())
}

fn cmd_roundtrip(file: &Path, kind: KindArg, heads: usize, as_json: bool) -> Result<()> {
    let (data, _) = read_tns(file)?;
    let w = data.as_matrix()?;
    let weight_kind = weight_kind_for(kind, heads, w);
    let tensor = tensorize(w, &weight_kind)?;
    let back = phi_inverse(&tensor, &weight_kind)?;

    let bitwise = w.len() == back.len()
        && w.iter()
            .zip(back.iter())
            .all(|(a, b)| a.to_bits() == b.to_bits());
    let norm_w = matrix_frobenius_norm(w);
    let norm_t = tensor.frobenius_norm();
    if !bitwise || norm_w.to_bits() != norm_t.to_bits() {
        return Err(Error::Numerical(
            "tensorization roundtrip is not a bitwise identity".into(),
        ));
    }

    if as_json {
        println!(
            "{}",
            json!({
                "file": file.display().to_string(),
                "tensor_dims": [tensor.m(), tensor.n(), tensor.p()],
                "bitwise_roundtrip": true,
                "norm_preserved_bitwise": true,
                "frobenius_norm": norm_w,
            })
        );
    } else {
        println!("roundtrip ok: {} -> {:?} -> back, bitwise identical", file.display(), tensor.dims());
        println!("frobenius norm preserved bitwise: {norm_w:.12e}");
    }
    Ok(())
}

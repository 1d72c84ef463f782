use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use deflicker::autodiff::registry::check_all;
use deflicker::blocks::flops_report;
use deflicker::flicker::{synthetic_scene, Orientation};
use deflicker::imageio::write_image;
use deflicker::network::{param_count, tiny_network_gradcheck, ModelConfig};
use deflicker::train::format_metric;
use deflicker::Result;
use deflicker_cli::commands::{self, Quality};
use deflicker_cli::config::load_or_default;
use deflicker_cli::{exit, exit_code};

const OP_GRAD_TOL: f64 = 1e-4;
const OP_ADJOINT_TOL: f64 = 1e-9;
const NETWORK_GRAD_TOL: f64 = 1e-3;

#[derive(Parser)]
#[command(name = "deflicker", version, about = "Burst deflickering toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Flicker a clean image into a three-frame burst.
    Synth {
        #[arg(long)]
        clean: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the config seed (read noise).
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Write a procedural clean test scene.
    Scene {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 64)]
        height: usize,
        #[arg(long, default_value_t = 64)]
        width: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Restore the base frame of a burst with a trained checkpoint.
    Forward {
        #[arg(long)]
        burst: PathBuf,
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Model settings the checkpoint was trained with.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Overfit a fresh model to one burst.
    Train {
        #[arg(long)]
        burst: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out_ckpt: PathBuf,
        #[arg(long)]
        curves: PathBuf,
        /// Overrides the config seed (parameter init).
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Swap the phase spectra of two frames and correlate their row profiles.
    Phasedemo {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Clean frame used to turn row means into row gains.
        #[arg(long)]
        clean: Option<PathBuf>,
    },
    /// Autocorrelation heatmap, stripe period and subband energies of an image.
    Analyze {
        #[arg(long)]
        img: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "horizontal")]
        orientation: Orientation,
    },
    /// Attention cost of the plain and wavelet variants at one shape.
    Flops {
        #[arg(long, default_value_t = 64)]
        height: usize,
        #[arg(long, default_value_t = 64)]
        width: usize,
        #[arg(long, default_value_t = 32)]
        channels: usize,
        #[arg(long, default_value_t = 8)]
        window: usize,
        #[arg(long, default_value_t = 1)]
        heads: usize,
    },
    /// Check every differentiable op; `--full` adds the whole tiny network.
    Gradcheck {
        #[arg(long)]
        full: bool,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
}

fn print_quality(prefix: &str, q: &Quality) {
    println!("{prefix}psnr={}", format_metric(q.psnr));
    println!("{prefix}ssim={:.6}", q.ssim);
}

fn run(cmd: Command) -> Result<u8> {
    match cmd {
        Command::Synth {
            clean,
            config,
            out,
            seed,
        } => {
            let mut cfg = load_or_default(config.as_ref())?;
            cfg.seed = seed.unwrap_or(cfg.seed);
            let burst = commands::synth(&clean, &cfg, &out)?;
            let (h, w, _) = burst.clean.dims3()?;
            println!("wrote {h}x{w} burst to {}", out.display());
            println!(
                "stripe_period_predicted={:.3}",
                cfg.flicker.stripe_period_rows()
            );
        }
        Command::Scene {
            out,
            height,
            width,
            seed,
        } => {
            write_image(&out, &synthetic_scene(height, width, seed))?;
        }
        Command::Forward {
            burst,
            ckpt,
            out,
            config,
        } => {
            let cfg = load_or_default(config.as_ref())?;
            let r = commands::forward(&burst, &ckpt, &cfg, &out)?;
            println!("output={}", out.display());
            if let (Some(restored), Some(base)) = (&r.restored, &r.base) {
                print_quality("", restored);
                print_quality("base_", base);
            }
        }
        Command::Train {
            burst,
            config,
            out_ckpt,
            curves,
            seed,
        } => {
            let mut cfg = load_or_default(config.as_ref())?;
            cfg.seed = seed.unwrap_or(cfg.seed);
            let steps = cfg.steps;
            let every = (steps / 10).max(1);
            let outcome = commands::train(&burst, &cfg, &out_ckpt, &curves, |p| {
                if p.step % every == 0 || p.step == steps {
                    eprintln!(
                        "step {:>5}  l1 {:.6}  psnr {}",
                        p.step,
                        p.l1,
                        format_metric(p.psnr)
                    );
                }
            })?;
            let (first, last) = (&outcome.curve[0], &outcome.curve[outcome.curve.len() - 1]);
            println!("initial_l1={}", first.l1);
            println!("final_l1={}", last.l1);
            println!("initial_psnr={}", format_metric(first.psnr));
            println!("final_psnr={}", format_metric(last.psnr));
        }
        Command::Phasedemo { a, b, out, clean } => {
            let r = commands::phasedemo(&a, &b, clean.as_ref(), &out)?;
            print!("{}", r.to_text());
            println!("min_margin={:.6}", r.min_margin());
        }
        Command::Analyze {
            img,
            out,
            orientation,
        } => {
            let r = commands::analyze(&img, orientation, &out)?;
            print!("{}", r.summary());
            println!(
                "autocorrelation_min={:e}\nautocorrelation_max={:e}",
                r.heatmap.min, r.heatmap.max
            );
            for row in &r.subbands {
                println!(
                    "energy_{}={:e} share={:.6}",
                    row.band, row.energy, row.share
                );
            }
        }
        Command::Flops {
            height,
            width,
            channels,
            window,
            heads,
        } => {
            let r = flops_report(height, width, channels, window, heads)?;
            println!("shape={height}x{width}x{channels} window={window} heads={heads}");
            println!(
                "wmha: projections={} scores={} weighted_sum={} core={}",
                r.wmha.projections,
                r.wmha.scores,
                r.wmha.weighted_sum,
                r.wmha.core()
            );
            println!(
                "wdam: projections={} scores={} weighted_sum={} core={}",
                r.wdam.projections,
                r.wdam.scores,
                r.wdam.weighted_sum,
                r.wdam.core()
            );
            println!(
                "modulation={} wavelet={} high_band={} output_projection={}",
                r.modulation, r.wavelet, r.high_band, r.output_projection
            );
            println!("core_ratio={}", r.core_ratio());
            println!("block_ratio={:.6}", r.block_ratio());
            println!("params_default={}", param_count(&ModelConfig::default())?);
            println!("params_tiny={}", param_count(&ModelConfig::tiny())?);
        }
        Command::Gradcheck { full, seed } => {
            let mut ok = true;
            for c in check_all(seed)? {
                let adj_ok = c.adjoint_error.is_none_or(|e| e < OP_ADJOINT_TOL);
                let pass = c.grad_rel_error < OP_GRAD_TOL && adj_ok;
                ok &= pass;
                let adj = c
                    .adjoint_error
                    .map_or_else(|| "n/a".to_string(), |e| format!("{e:.2e}"));
                println!(
                    "{:<28} grad_rel={:.2e} adjoint={adj:<9} {}",
                    c.name,
                    c.grad_rel_error,
                    if pass { "PASS" } else { "FAIL" }
                );
            }
            if full {
                let r = tiny_network_gradcheck(3)?;
                let pass = r.max_rel_error() < NETWORK_GRAD_TOL;
                ok &= pass;
                println!(
                    "{:<28} grad_rel={:.2e} {:<19} {}",
                    "network (tiny, L1)",
                    r.max_rel_error(),
                    "",
                    if pass { "PASS" } else { "FAIL" }
                );
            }
            if !ok {
                return Ok(exit::CHECK_FAILED);
            }
        }
    }
    Ok(exit::OK)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

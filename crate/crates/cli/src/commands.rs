use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use deflicker::analysis::{
    luma_autocorrelation, phase_swap_report, subband_csv, subband_table, PhaseSwapReport,
    SubbandRow,
};
use deflicker::flicker::{stripe_period, synth_burst_noisy, BurstTriplet, Orientation};
use deflicker::imageio::{read_image, write_heatmap, write_image, HeatmapRange};
use deflicker::network::{infer, ParamStore};
use deflicker::train::{psnr, ssim, train_overfit_with, write_curves, CurvePoint, TrainOutcome};
use deflicker::{Error, Result, Tensor};

use crate::config::CliConfig;

pub const FRAME_FILES: [&str; 3] = ["I0.png", "I1.png", "I2.png"];
pub const GT_FILE: &str = "gt.png";
pub const GAINS_FILE: &str = "gains.csv";

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io_at(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io_at(path, e))
}

/// `line,g0,g1,g2`, one row per readout line.
pub fn gains_csv(gains: &[Vec<f64>; 3]) -> String {
    let mut s = String::from("line,g0,g1,g2\n");
    for (i, ((a, b), c)) in gains[0].iter().zip(&gains[1]).zip(&gains[2]).enumerate() {
        writeln!(s, "{i},{a},{b},{c}").expect("string write");
    }
    s
}

/// Flickers `clean` into a burst and writes the frames, the ground truth and the
/// gain vectors to `out`.
pub fn synth(clean: &Path, cfg: &CliConfig, out: &Path) -> Result<BurstTriplet> {
    let g = read_image(clean)?;
    let burst = synth_burst_noisy(&g, &cfg.flicker, cfg.noise_sigma, cfg.seed)?;
    create_dir(out)?;
    for (name, frame) in FRAME_FILES.iter().zip(&burst.frames) {
        write_image(&out.join(name), frame)?;
    }
    write_image(&out.join(GT_FILE), &burst.clean)?;
    write_text(&out.join(GAINS_FILE), &gains_csv(&burst.gains))?;
    Ok(burst)
}

/// The three frames of a burst directory, plus its ground truth when present.
pub fn read_burst(dir: &Path) -> Result<([Tensor; 3], Option<Tensor>)> {
    let [a, b, c] = FRAME_FILES.map(|n| read_image(&dir.join(n)));
    let frames = [a?, b?, c?];
    let gt_path = dir.join(GT_FILE);
    let gt = if gt_path.exists() {
        Some(read_image(&gt_path)?)
    } else {
        None
    };
    Ok((frames, gt))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Quality {
    pub psnr: f64,
    pub ssim: f64,
}

impl Quality {
    fn measure(img: &Tensor, gt: &Tensor) -> Result<Self> {
        Ok(Self {
            psnr: psnr(img, gt, 1.0)?,
            ssim: ssim(img, gt)?,
        })
    }
}

#[derive(Clone, Debug)]
pub struct ForwardReport {
    pub output: Tensor,
    /// Restored output against the ground truth.
    pub restored: Option<Quality>,
    /// The base frame `I1` against the ground truth.
    pub base: Option<Quality>,
}

/// Runs the model on a burst directory and writes the restored frame. Metrics
/// are measured on the 8-bit image as written.
pub fn forward(
    burst_dir: &Path,
    ckpt: &Path,
    cfg: &CliConfig,
    out: &Path,
) -> Result<ForwardReport> {
    let (frames, gt) = read_burst(burst_dir)?;
    let store = ParamStore::load_for(ckpt, &cfg.model)?;
    let restored = infer(&store, &cfg.model, [&frames[0], &frames[1], &frames[2]])?;
    write_image(out, &restored)?;
    let output = read_image(out)?;
    let (restored, base) = match &gt {
        Some(gt) => (
            Some(Quality::measure(&output, gt)?),
            Some(Quality::measure(&frames[1], gt)?),
        ),
        None => (None, None),
    };
    Ok(ForwardReport {
        output,
        restored,
        base,
    })
}

/// Overfits the model to one burst directory, which must hold `gt.png`.
pub fn train(
    burst_dir: &Path,
    cfg: &CliConfig,
    out_ckpt: &Path,
    curves: &Path,
    on_point: impl FnMut(&CurvePoint),
) -> Result<TrainOutcome> {
    let (frames, gt) = read_burst(burst_dir)?;
    let clean = gt.ok_or_else(|| {
        Error::io_at(
            &burst_dir.join(GT_FILE),
            std::io::Error::new(
                std::io::ErrorKind::NotFound,
                "training needs the ground truth",
            ),
        )
    })?;
    // the loss only sees frames and ground truth; gains are not needed
    let burst = BurstTriplet {
        frames,
        clean,
        gains: Default::default(),
    };
    let outcome = train_overfit_with(&burst, &cfg.model, &cfg.train_config(), on_point)?;
    outcome.params.save(out_ckpt)?;
    write_curves(curves, &outcome.curve)?;
    Ok(outcome)
}

/// Writes the phase-swapped pair and the row-profile correlation report. With
/// `clean`, profiles are row gains relative to it; otherwise raw row means.
pub fn phasedemo(
    a: &Path,
    b: &Path,
    clean: Option<&PathBuf>,
    out: &Path,
) -> Result<PhaseSwapReport> {
    let (ta, tb) = (read_image(a)?, read_image(b)?);
    let g = clean.map(|p| read_image(p)).transpose()?;
    let report = phase_swap_report(&ta, &tb, g.as_ref())?;
    create_dir(out)?;
    write_image(&out.join("swap_ab.png"), &report.swap_ab)?;
    write_image(&out.join("swap_ba.png"), &report.swap_ba)?;
    write_text(&out.join("report.csv"), &report.to_text())?;
    Ok(report)
}

#[derive(Clone, Debug)]
pub struct AnalyzeReport {
    pub period: Option<f64>,
    pub heatmap: HeatmapRange,
    pub subbands: Vec<SubbandRow>,
}

impl AnalyzeReport {
    pub fn summary(&self) -> String {
        match self.period {
            Some(p) => format!("stripe_period={p:.3}\n"),
            None => "stripe_period=none\n".to_string(),
        }
    }
}

/// Autocorrelation heatmap, stripe period and Haar subband energies of one image.
pub fn analyze(img: &Path, orientation: Orientation, out: &Path) -> Result<AnalyzeReport> {
    let x = read_image(img)?;
    let period = stripe_period(&x, orientation)?;
    let subbands = subband_table(&x)?;
    create_dir(out)?;
    let heatmap = write_heatmap(&out.join("autocorrelation.png"), &luma_autocorrelation(&x)?)?;
    write_text(&out.join("subbands.csv"), &subband_csv(&subbands))?;
    let report = AnalyzeReport {
        period,
        heatmap,
        subbands,
    };
    write_text(&out.join("period.txt"), &report.summary())?;
    Ok(report)
}

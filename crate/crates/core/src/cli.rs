//! Command-line front end.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::bench::{run_bench, BenchConfig};
use crate::config::RunConfig;
use crate::exportio::{export_layers, load_frames, load_image, load_scene, load_templates, save_png, save_scene};
use crate::fit::{
    format_psnr, initial_scene, prepare_templates, psnr, psnr_from_mse, write_history_csv, FitSession, LossKind,
    LossSpec,
};
use crate::grad::{run_gradcheck, FdSteps, GradCheckConfig};
use crate::image::Plane;
use crate::raster::{render, Background, RenderOptions};
use crate::video::optimize_video;
use crate::Error;

#[derive(Parser, Debug)]
#[command(name = "stampfit", version, about = "Fit images with transformed bitmap primitives")]
pub struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Fit a single image described by a config file.
    Fit {
        config: PathBuf,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Fit a directory of frames described by a config file.
    FitVideo {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Write per-primitive layers, a manifest and a composite.
    Export {
        scene: PathBuf,
        #[arg(long, default_value_t = 1)]
        scale: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare analytic gradients with finite differences on random scenes.
    Gradcheck {
        #[arg(long, default_value_t = 20)]
        seeds: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Use the coarse step sizes (1e-2 px, 1e-3 rad).
        #[arg(long)]
        coarse: bool,
    },
    /// Time the tiled renderer and gradients against the sequential reference.
    Bench {
        #[arg(long, default_value_t = 512)]
        size: usize,
        #[arg(long, default_value_t = 1000)]
        prims: usize,
        #[arg(long, default_value_t = 20)]
        iters: usize,
        #[arg(long, default_value_t = 2)]
        naive_iters: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Speedup reported as PASS at or above this factor.
        #[arg(long, default_value_t = 10.0)]
        threshold: f64,
    },
    /// Render a saved scene to a PNG.
    Render {
        scene: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        scale: usize,
    },
}

/// Parses `args`, runs the command and returns the process exit code:
/// 0 on success, 1 on failure, 2 on usage errors.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let result = match cli.threads {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| dispatch(cli.command)),
            Err(e) => Err(Error::Usage(format!("cannot start {n} threads: {e}"))),
        },
        None => dispatch(cli.command),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if matches!(e, Error::Usage(_)) {
                2
            } else {
                1
            }
        }
    }
}

fn dispatch(command: Command) -> Result<i32, Error> {
    match command {
        Command::Fit { config, seed } => cmd_fit(&config, seed),
        Command::FitVideo { config, seed } => cmd_fit_video(&config, seed),
        Command::Export { scene, scale, out } => {
            let scene = load_scene(&scene)?;
            let m = export_layers(&scene, scale, &out)?;
            println!("wrote {} layers ({} skipped) to {}", m.layers.len(), m.skipped.len(), out.display());
            Ok(0)
        }
        Command::Gradcheck { seeds, seed, coarse } => {
            let cfg = GradCheckConfig {
                seeds,
                base_seed: seed,
                steps: if coarse { FdSteps::coarse() } else { FdSteps::default() },
                ..GradCheckConfig::default()
            };
            let report = run_gradcheck(&cfg);
            for m in report.failures().take(20) {
                println!(
                    "mismatch seed {} primitive {} {}: analytic {:.6e} numeric {:.6e}",
                    m.seed, m.primitive, m.param, m.analytic, m.numeric
                );
            }
            println!("checked {} partials over {} scenes", report.checked(), seeds);
            println!("worst relative error {:.3e}", report.worst_rel());
            println!("{}", if report.passed() { "PASS" } else { "FAIL" });
            Ok(if report.passed() { 0 } else { 1 })
        }
        Command::Bench { size, prims, iters, naive_iters, seed, threshold } => {
            if size == 0 || prims == 0 || iters == 0 || naive_iters == 0 {
                return Err(Error::Usage("size, prims and iteration counts must be positive".into()));
            }
            let cfg = BenchConfig { size, prims, iterations: iters, naive_iterations: naive_iters, seed, ..BenchConfig::default() };
            let r = run_bench(&cfg);
            let ms = |d: std::time::Duration| d.as_secs_f64() * 1e3;
            println!("canvas {size}x{size}, {prims} primitives, {} threads", r.threads);
            println!("forward_ms {:.3}", ms(r.forward));
            println!("backward_ms {:.3}", ms(r.backward));
            println!("naive_forward_ms {:.3}", ms(r.naive_forward));
            println!("naive_backward_ms {:.3}", ms(r.naive_backward));
            println!("speedup {:.2}", r.speedup());
            println!("{} (threshold {threshold})", if r.speedup() >= threshold { "PASS" } else { "FAIL" });
            Ok(0)
        }
        Command::Render { scene, out, scale } => {
            if !matches!(scale, 1 | 2 | 4) {
                return Err(Error::InvalidScale(scale));
            }
            let scene = load_scene(&scene)?.scaled(scale);
            let img = render(&scene, &Background::for_display(scene.background), &RenderOptions::default());
            save_png(&out, &img.color, None)?;
            Ok(0)
        }
    }
}

fn create_dir(path: &Path) -> Result<(), Error> {
    fs::create_dir_all(path).map_err(|e| Error::Io { path: path.to_path_buf(), source: e })
}

fn create_file(path: &Path) -> Result<BufWriter<File>, Error> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::Io { path: path.to_path_buf(), source: e })
}

fn load_run(config: &Path, seed: Option<u64>) -> Result<(RunConfig, PathBuf), Error> {
    let mut cfg = RunConfig::load(config)?;
    if let Some(s) = seed {
        cfg.fit.seed = s;
    }
    if cfg.io.templates.is_empty() {
        return Err(Error::Usage("config names no `templates`".into()));
    }
    let out = cfg.io.output.clone().unwrap_or_else(|| config.parent().unwrap_or(Path::new(".")).join("out"));
    create_dir(&out)?;
    Ok((cfg, out))
}

/// Alpha mask from a file's alpha channel, or its red channel without one.
fn load_mask(path: &Path) -> Result<Plane, Error> {
    let (img, alpha) = load_image(path)?;
    Ok(alpha.unwrap_or_else(|| Plane::from_fn(img.width(), img.height(), |x, y| img.get(x, y)[0])))
}

fn target_alpha(cfg: &RunConfig, own_alpha: Option<Plane>) -> Result<Option<Plane>, Error> {
    match &cfg.io.target_alpha {
        Some(p) => load_mask(p).map(Some),
        None if cfg.fit.loss == LossKind::Spatial => match own_alpha {
            Some(a) => Ok(Some(a)),
            None => Err(Error::Usage("spatial loss needs `target_alpha` or a target with alpha".into())),
        },
        None => Ok(None),
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |e| Error::Io { path: path.to_path_buf(), source: e }
}

fn cmd_fit(config: &Path, seed: Option<u64>) -> Result<i32, Error> {
    let (cfg, out) = load_run(config, seed)?;
    let target_path = cfg.io.target.clone().ok_or_else(|| Error::Usage("config names no `target`".into()))?;
    let (target, own_alpha) = load_image(&target_path)?;
    let alpha = target_alpha(&cfg, own_alpha)?;
    let templates = load_templates(&cfg.io.templates)?;

    let fit = &cfg.fit;
    let mut rng = ChaCha8Rng::seed_from_u64(fit.seed);
    let prepared = prepare_templates(&templates, fit)?;
    let scene = initial_scene(&target, alpha.as_ref(), prepared, fit, &mut rng)?;
    let loss = LossSpec::new(fit.loss, fit.loss_weights, target.clone(), alpha)?;
    let mut session = FitSession::new(scene, loss, fit, rng)?;
    let dump_every = cfg.io.dump_every;
    let mut dump_error = None;
    session.run(fit.num_iterations, |s, rec| {
        if dump_every > 0 && (rec.iter + 1) % dump_every == 0 && dump_error.is_none() {
            let path = out.join(format!("iter_{:05}.png", rec.iter + 1));
            if let Err(e) = save_png(&path, &s.render_display().color, None) {
                dump_error = Some(e);
            }
        }
    })?;
    if let Some(e) = dump_error {
        return Err(e);
    }

    let result = session.finish();
    let csv = out.join("history.csv");
    let mut w = create_file(&csv)?;
    write_history_csv(&result.history, &mut w).and_then(|_| w.flush()).map_err(io_err(&csv))?;
    save_png(&out.join("final.png"), &result.render.color, None)?;
    save_scene(&result.scene, &out.join("scene.bin"))?;
    if cfg.io.export_scale > 0 {
        export_layers(&result.scene, cfg.io.export_scale, &out.join("layers"))?;
    }
    let last = result.history.last().expect("at least one iteration");
    println!("iterations {}", result.history.len());
    println!("final_loss {:.6e}", last.loss);
    println!("final_psnr {}", format_psnr(psnr(&result.render.color, &target)?));
    println!("output {}", out.display());
    Ok(0)
}

fn cmd_fit_video(config: &Path, seed: Option<u64>) -> Result<i32, Error> {
    let (cfg, out) = load_run(config, seed)?;
    let dir = cfg.io.frames.clone().ok_or_else(|| Error::Usage("config names no `frames` directory".into()))?;
    let frames = load_frames(&dir)?;
    let alpha = match &cfg.io.target_alpha {
        Some(p) => Some(load_mask(p)?),
        None => None,
    };
    let templates = load_templates(&cfg.io.templates)?;
    let results = optimize_video(&frames, alpha.as_ref(), &templates, &cfg.fit, &cfg.video)?;

    let csv = out.join("frames.csv");
    let mut w = create_file(&csv)?;
    let opts = RenderOptions::for_blur(cfg.fit.blur_sigma);
    (|| -> Result<(), Error> {
        writeln!(w, "frame,iterations,final_loss,mse,psnr,frozen,decayed").map_err(io_err(&csv))?;
        for (f, r) in results.iter().enumerate() {
            let decayed: usize = r.decayed.iter().map(Vec::len).sum();
            let last_loss = r.history.last().map_or(f64::NAN, |h| h.loss);
            writeln!(
                w,
                "{f},{},{:.9e},{:.9e},{},{},{decayed}",
                r.history.len(),
                last_loss,
                r.mse,
                format_psnr(psnr_from_mse(r.mse)),
                r.frozen_count
            )
            .map_err(io_err(&csv))?;
            let img = render(&r.scene, &Background::for_display(r.scene.background), &opts);
            save_png(&out.join(format!("frame_{f:04}.png")), &img.color, None)?;
            save_scene(&r.scene, &out.join(format!("scene_{f:04}.bin")))?;
        }
        w.flush().map_err(io_err(&csv))
    })()?;
    println!("frames {}", results.len());
    println!("output {}", out.display());
    Ok(0)
}

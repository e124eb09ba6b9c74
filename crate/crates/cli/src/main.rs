use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use scenesynth::metrics::{format_table, AkdConfig};
use scenesynth_cli::config::{PipelineConfig, TexturingMethod};
use scenesynth_cli::evaluate::{evaluate, read_results, Task};
use scenesynth_cli::pipeline::{halving_sizes, make_splits, write_atomic, write_splits, Manifest, Pipeline};
use scenesynth_cli::{http, make_backend, preview};

#[derive(Parser)]
#[command(name = "scenesynth", version, about = "Synthetic tabletop dataset generation")]
struct Cli {
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Command,
}

/// Flags that override fields of the config file.
#[derive(Args)]
struct Overrides {
    /// Pipeline config (JSON). Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Dataset output directory.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    category: Option<String>,
    /// Number of scenes; the image count follows.
    #[arg(long, global = true)]
    scenes: Option<u64>,
    #[arg(long, global = true)]
    cameras_per_scene: Option<u32>,
    #[arg(long, global = true)]
    resolution: Option<u32>,
    #[arg(long, global = true)]
    mesh_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    texture_dir: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    method: Option<TexturingMethod>,
    /// `mock` or the base URL of a texturing service.
    #[arg(long, global = true, env = http::BACKEND_URL_ENV)]
    backend: Option<String>,
}

impl Overrides {
    fn config(&self) -> Result<PipelineConfig> {
        let mut c = match &self.config {
            Some(p) => PipelineConfig::load(p)?,
            None => PipelineConfig::default(),
        };
        if let Some(v) = &self.output {
            c.output_root = v.clone();
        }
        if let Some(v) = self.seed {
            c.master_seed = v;
        }
        if let Some(v) = &self.category {
            c.category = v.clone();
        }
        if let Some(v) = self.cameras_per_scene {
            c.set_cameras_per_scene(v);
        }
        if let Some(v) = self.scenes {
            c.set_scenes(v);
        }
        if let Some(v) = self.resolution {
            c.resolution = v;
        }
        if let Some(v) = &self.mesh_dir {
            c.mesh_dir = Some(v.clone());
        }
        if let Some(v) = &self.texture_dir {
            c.texture_dir = Some(v.clone());
        }
        if let Some(v) = self.method {
            c.texturing.method = v;
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Print (or write) the effective config.
    InitConfig {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compose randomized scenes.
    GenScenes,
    /// Render depth, masks, control images and annotations.
    Render,
    /// Texture rendered images with the configured method.
    Texture,
    /// Write the COCO file of a textured dataset.
    Export,
    /// All stages: gen-scenes, render, texture, export.
    Run,
    /// Nested dataset splits for scaling studies.
    Split {
        /// Ascending split sizes; a halving schedule ending at the dataset size when omitted.
        #[arg(long, value_delimiter = ',')]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 5)]
        levels: usize,
    },
    /// Score predictions against a COCO ground-truth file.
    Evaluate {
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long, value_enum)]
        task: Task,
        #[arg(long, default_value = "predictions")]
        name: String,
        /// AKD distance for missing predictions (default: image diagonal).
        #[arg(long)]
        missing_penalty: Option<f64>,
        /// Report file stem; writes `<stem>.json` and `<stem>.txt`.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Serve the deterministic mock texturing backend.
    MockServer {
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value_t = 8000)]
        port: u16,
    },
    /// Contact sheet of textured images with annotations drawn on top.
    Preview {
        #[arg(long, default_value_t = 16)]
        count: usize,
        #[arg(long, default_value_t = 4)]
        columns: u32,
        #[arg(long, default_value_t = 256)]
        thumb: u32,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write keypoint heatmaps of the rendered images.
    Heatmaps,
    /// Print the language-model query used to describe a subject.
    DescribeRequest { subject: String },
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    let o = &cli.overrides;
    match cli.command {
        Command::InitConfig { out } => {
            let json = serde_json::to_string_pretty(&o.config()?)? + "\n";
            match out {
                Some(p) => std::fs::write(&p, json).with_context(|| format!("writing {}", p.display()))?,
                None => print!("{json}"),
            }
        }
        Command::GenScenes => {
            let n = Pipeline::new(o.config()?)?.gen_scenes()?;
            println!("composed {n} scenes");
        }
        Command::Render => {
            let n = Pipeline::new(o.config()?)?.render()?;
            println!("rendered {n} images");
        }
        Command::Texture => {
            let p = Pipeline::new(o.config()?)?;
            let method = p.config.texturing.method;
            let backend = method.uses_backend().then(|| make_backend(o.backend.as_deref())).transpose()?;
            let s = p.texture(method, backend.as_deref())?;
            println!(
                "{method}: {} textured, {} already present, {} failed, {} dropped",
                s.textured, s.skipped, s.failed, s.dropped
            );
        }
        Command::Export => {
            let p = Pipeline::new(o.config()?)?;
            let path = p.export(p.config.texturing.method)?;
            println!("wrote {}", path.display());
        }
        Command::Run => {
            let p = Pipeline::new(o.config()?)?;
            let method = p.config.texturing.method;
            let backend = method.uses_backend().then(|| make_backend(o.backend.as_deref())).transpose()?;
            let s = p.run(backend.as_deref())?;
            println!(
                "{method}: {} textured, {} already present, {} failed, {} dropped; dataset in {}",
                s.textured,
                s.skipped,
                s.failed,
                s.dropped,
                p.layout.root.display()
            );
        }
        Command::Split { sizes, levels } => {
            let p = Pipeline::new(o.config()?)?;
            let method = p.config.texturing.method;
            let manifest = Manifest::read(&p.layout.abs(&p.layout.manifest(method)))?;
            let ids = manifest.ok_ids();
            let sizes = if sizes.is_empty() { halving_sizes(ids.len(), levels) } else { sizes };
            let splits = make_splits(&ids, &sizes, p.config.master_seed)?;
            for path in write_splits(&p.layout.abs(&p.layout.splits_dir(method)), &splits)? {
                println!("wrote {}", path.display());
            }
        }
        Command::Evaluate { gt, predictions, task, name, missing_penalty, report } => {
            let gt = scenesynth::coco::CocoDataset::read(&gt)?;
            let results = read_results(&predictions)?;
            let r = evaluate(&gt, &results, task, &name, &AkdConfig { missing_penalty })?;
            let table = format_table(std::slice::from_ref(&r));
            print!("{table}");
            if let Some(stem) = report {
                write_atomic(&stem.with_extension("json"), (serde_json::to_string_pretty(&r)? + "\n").as_bytes())?;
                write_atomic(&stem.with_extension("txt"), table.as_bytes())?;
            }
        }
        Command::MockServer { host, port } => http::serve_mock_backend(&host, port)?,
        Command::Preview { count, columns, thumb, out } => {
            let p = Pipeline::new(o.config()?)?;
            let method = p.config.texturing.method;
            if thumb == 0 {
                bail!("--thumb must be positive");
            }
            let sheet = preview::contact_sheet(&p, method, count, columns, thumb)?;
            let out = out.unwrap_or_else(|| p.layout.abs(&format!("preview_{method}.png")));
            sheet.save(&out).with_context(|| format!("writing {}", out.display()))?;
            println!("wrote {}", out.display());
        }
        Command::Heatmaps => {
            let n = Pipeline::new(o.config()?)?.write_heatmaps()?;
            println!("wrote heatmaps for {n} images");
        }
        Command::DescribeRequest { subject } => {
            println!("{}", scenesynth::prompt::llm_description_request(&subject)?);
        }
    }
    Ok(())
}

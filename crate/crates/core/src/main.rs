use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use linksparse::gcn::{Checkpoint, ExpDecay, GcnModel};
use linksparse::graph::ConflictGraph;
use linksparse::harness::experiments::{group_mean, write_csv, Key};
use linksparse::harness::{
    experiment_quantile_sweep, experiment_time_sim, gen_test_set, gen_training_set, DatasetManifest,
    test_instances, TestInstance, TimesimConfig, ETA_GRID,
};
use linksparse::mwis::brute_force_mwis;
use linksparse::traffic::{collect_ecdf, EcdfMeta, EmpiricalDistribution, RateModel, TrafficConfig};
use linksparse::training::{train, write_log_csv, PreparedGraph, Stage, TrainConfig};
use linksparse::{Error, Result};

#[derive(Parser)]
#[command(name = "linksparse", version, about = "GCN-based link sparsification for wireless scheduling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Test,
}

#[derive(Subcommand)]
enum Command {
    /// Generate an ER dataset and write its graphs and manifest.
    GenDataset {
        #[arg(long, value_enum)]
        split: SplitArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Multiplies every per-group graph count.
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
        /// Drop recipe groups with more vertices than this.
        #[arg(long)]
        max_v: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate vanilla LGS on a dataset and write the utility eCDF.
    CollectEcdf {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value_t = 0.04)]
        mu: f64,
        #[arg(long, default_value_t = 300)]
        slots: usize,
        #[arg(long, default_value_t = 25.0)]
        rate_std: f64,
        /// Use an evenly strided subset of N graphs from the manifest.
        #[arg(long)]
        max_graphs: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Two-stage training; writes per-stage checkpoints and the epoch log.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        ecdf: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 25)]
        epochs: usize,
        #[arg(long, default_value_t = 200)]
        batch: usize,
        #[arg(long, default_value_t = 0.01)]
        lr: f64,
        #[arg(long, default_value_t = 0.97)]
        gamma: f64,
        #[arg(long, default_value_t = 0.97)]
        delta: f64,
        /// Hidden layer widths; none gives the single-layer model.
        #[arg(long, value_delimiter = ',')]
        hidden: Vec<usize>,
        /// Start stage 2 from a fresh initialization.
        #[arg(long)]
        restart_stage2: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Quantile sweep on the test set.
    Sweep {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        ecdf: PathBuf,
        /// Without a checkpoint only the thresholding baseline is evaluated.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        eta: Vec<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Closed-loop time-slotted simulation on the test set.
    Timesim {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        ecdf: PathBuf,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, default_value_t = 300)]
        slots: usize,
        #[arg(long, default_value_t = 0.95)]
        eta: f64,
        #[arg(long, default_value_t = 0.03)]
        mu_lo: f64,
        #[arg(long, default_value_t = 0.05)]
        mu_hi: f64,
        #[arg(long, default_value_t = 25.0)]
        rate_std: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Exact maximum weighted independent set of a small graph.
    MwisOracle {
        #[arg(long)]
        graph: PathBuf,
        /// One weight per line, or comma separated.
        #[arg(long)]
        weights: PathBuf,
    },
    /// Print a checkpoint summary, optionally with embedding statistics on a graph.
    InspectModel {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        graph: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn manifest_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn load_instances(path: &Path) -> Result<Vec<TestInstance>> {
    let manifest = DatasetManifest::read(path)?;
    let graphs = manifest.load_graphs(manifest_dir(path))?;
    Ok(test_instances(&manifest, graphs))
}

fn load_model(path: Option<&PathBuf>) -> Result<Option<GcnModel>> {
    path.map(|p| Checkpoint::load(p)?.to_model()).transpose()
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::GenDataset {
            split,
            seed,
            scale,
            max_v,
            out,
        } => {
            let mut manifest = match split {
                SplitArg::Train => gen_training_set(seed, scale, max_v)?,
                SplitArg::Test => gen_test_set(seed, scale, max_v)?,
            };
            let path = manifest.write(&out)?;
            println!("{} graphs, manifest {}", manifest.len(), path.display());
        }
        Command::CollectEcdf {
            manifest,
            mu,
            slots,
            rate_std,
            max_graphs,
            seed,
            out,
        } => {
            let m = DatasetManifest::read(&manifest)?;
            let mut graphs = m.load_graphs(manifest_dir(&manifest))?;
            if let Some(k) = max_graphs.filter(|&k| k > 0 && k < graphs.len()) {
                let len = graphs.len();
                graphs = (0..k).map(|i| graphs[i * len / k].clone()).collect();
            }
            let cfg = TrafficConfig {
                mu,
                rate: RateModel {
                    std: rate_std,
                    ..RateModel::default()
                },
            };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let ecdf = collect_ecdf(&graphs, &cfg, slots, &mut rng)?;
            let meta = EcdfMeta {
                cfg,
                slots,
                dataset_hash: m.hash(),
            };
            ecdf.save(&out, &meta)?;
            println!(
                "{} samples, u(0.95) = {}, written to {}",
                ecdf.len(),
                ecdf.quantile(0.95)?,
                out.display()
            );
        }
        Command::Train {
            manifest,
            ecdf,
            seed,
            epochs,
            batch,
            lr,
            gamma,
            delta,
            hidden,
            restart_stage2,
            out,
        } => {
            let m = DatasetManifest::read(&manifest)?;
            let graphs = m.load_graphs(manifest_dir(&manifest))?;
            let ecdf_data = EmpiricalDistribution::load(&ecdf)?;
            let (train_graphs, calib) = m.partition(graphs);
            let train_set: Vec<_> = train_graphs.into_iter().map(PreparedGraph::new).collect();
            let cfg = TrainConfig {
                delta,
                batch_size: batch,
                epochs,
                lr: ExpDecay { lr0: lr, gamma },
                seed,
                continue_stage2: !restart_stage2,
                ..TrainConfig::default()
            };
            let mut dims = vec![1];
            dims.extend(&hidden);
            dims.push(2);
            let init = |s: u64| linksparse::training::initial_model(&dims, s);
            let mut model = init(seed)?;
            std::fs::create_dir_all(&out)?;
            let hash = ecdf_data.hash();

            let mut log = train(&mut model, &train_set, &ecdf_data, Stage::One, &cfg)?;
            Checkpoint::from_model(&model, 1, cfg.stage1_eta, &hash).save(out.join("stage1.json"))?;
            if restart_stage2 {
                model = init(seed.wrapping_add(1))?;
            }
            log.extend(train(&mut model, &train_set, &ecdf_data, Stage::Two, &cfg)?);
            let c = linksparse::gcn::calibrate_z1(&mut model, &calib)?;
            Checkpoint::from_model(&model, 2, cfg.stage1_eta, &hash).save(out.join("stage2.json"))?;
            write_log_csv(create(&out.join("train_log.csv"))?, &log)?;
            println!("trained on {} graphs, z1 calibration {c:.6}", train_set.len());
        }
        Command::Sweep {
            manifest,
            ecdf,
            model,
            eta,
            seed,
            out,
        } => {
            let instances = load_instances(&manifest)?;
            let ecdf = EmpiricalDistribution::load(&ecdf)?;
            let model = load_model(model.as_ref())?;
            let etas = if eta.is_empty() { ETA_GRID.to_vec() } else { eta };
            let rows = experiment_quantile_sweep(model.as_ref(), &instances, &ecdf, &etas, seed)?;
            write_csv(create(&out)?, &rows)?;
            for ((Key(eta), method), ar, _) in group_mean(&rows, |r| (Key(r.eta), r.method), |r| r.ar_utility) {
                println!("eta {eta:.2} {:<4} mean AR {ar:.4}", method.name());
            }
        }
        Command::Timesim {
            manifest,
            ecdf,
            model,
            slots,
            eta,
            mu_lo,
            mu_hi,
            rate_std,
            seed,
            out,
        } => {
            let instances = load_instances(&manifest)?;
            let ecdf = EmpiricalDistribution::load(&ecdf)?;
            let model = load_model(model.as_ref())?;
            let cfg = TimesimConfig {
                slots,
                eta,
                mu_lo,
                mu_hi,
                rate: RateModel {
                    std: rate_std,
                    ..RateModel::default()
                },
            };
            let runs = experiment_time_sim(model.as_ref(), &instances, &ecdf, &cfg, seed)?;
            let rows: Vec<_> = runs.iter().map(|r| r.row.clone()).collect();
            write_csv(create(&out)?, &rows)?;
            for ((Key(d), method), rr, _) in group_mean(&rows, |r| (Key(r.d_bar), r.method), |r| r.rr_avg_degree) {
                println!("d_bar {d:>5} {:<7} mean RR(avg degree) {rr:.4}", method.name());
            }
        }
        Command::MwisOracle { graph, weights } => {
            let g = ConflictGraph::load(&graph)?;
            let text = std::fs::read_to_string(&weights)?;
            let w: Vec<f64> = text
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|s| !s.is_empty())
                .map(|s| s.parse().map_err(|_| Error::Parse(format!("bad weight {s:?}"))))
                .collect::<Result<_>>()?;
            let (set, total) = brute_force_mwis(&g, &w)?;
            let mut stdout = std::io::stdout().lock();
            writeln!(stdout, "weight {total}")?;
            writeln!(stdout, "set {:?}", set.members())?;
        }
        Command::InspectModel { model, graph } => {
            let ck = Checkpoint::load(&model)?;
            let m = ck.to_model()?;
            println!("dims {:?}, {} parameters, leaky slope {}", m.dims(), m.num_params(), m.leaky_slope);
            println!("stage {}, z1 calibration {}, stage-1 eta {}", ck.stage, m.z1_calibration, ck.stage1_eta);
            println!("eCDF sha256 {}", ck.ecdf_sha256);
            for (l, layer) in m.layers.iter().enumerate() {
                println!("layer {}: theta0 {:?} theta1 {:?}", l + 1, layer.theta0.data, layer.theta1.data);
            }
            if let Some(path) = graph {
                let g = ConflictGraph::load(&path)?;
                let z = m.embeddings_for(&g);
                let mean = |x: &[f64]| x.iter().sum::<f64>() / x.len().max(1) as f64;
                println!("graph n = {}, m = {}: mean z0 {:.4}, mean z1 {:.4}", g.n(), g.m(), mean(&z.z0), mean(&z.z1));
            }
        }
    }
    Ok(())
}

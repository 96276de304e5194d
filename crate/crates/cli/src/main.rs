use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use actor_advisor::env::{bfs_shortest_path, load_map, GridWorld, FIVEROOMS_MAP, GRID1_MAP, GRID2_MAP};
use actor_advisor::gradcheck::run_gradient_suites;
use actor_advisor::harness::{
    emit_curve_svg, episode_range, format_g6, learning_curve, mean, moving_average, parse_window, read_csv,
    records_to_csv, run_experiment_with_source, run_window_means, stderr, transfer_source, welch_t_test,
    window_returns, wilcoxon_rank_sum, AdvisorId, Curve, ExperimentConfig,
};
use actor_advisor::Error;
use clap::{Parser, Subcommand};

const EXIT_CONFIG: u8 = 1;
const EXIT_RUNTIME: u8 = 2;
const EXIT_ORACLE: u8 = 3;

#[derive(Parser)]
#[command(name = "dpg", version, about = "Train, compare, check and plot advised policy-gradient agents")]
struct Cli {
    /// Base seed; overrides the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for independent runs.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    /// Overwrite existing output files.
    #[arg(long, global = true)]
    force: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every arm of an experiment config and write CSV logs and curves.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Config override applied after the file, as key=value.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Rank-sum and Welch tests between two CSV logs over an episode window.
    Compare {
        a: PathBuf,
        b: PathBuf,
        /// Inclusive 1-based episode window, as A:B.
        #[arg(long)]
        window: Option<String>,
    },
    /// Randomized gradient checks of the mixed policy.
    Gradcheck {
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, hide = true)]
        inject_sign_flip: bool,
    },
    /// Shortest path, optimal return and room layout of a map.
    Oracle {
        /// Map file, or one of grid1, grid2, fiverooms.
        map: String,
    },
    /// Mean and standard-error learning curves of CSV logs as SVG.
    Plot {
        #[arg(required = true)]
        csvs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Centered moving-average window.
        #[arg(long, default_value_t = 1)]
        smooth: usize,
        #[arg(long, default_value = "Learning curves")]
        title: String,
    },
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn config(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_CONFIG,
            message: message.into(),
        }
    }

    fn runtime(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_RUNTIME,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::Map(_) | Error::Csv(_) | Error::Snapshot(_) => Failure::config(e.to_string()),
            _ => Failure::runtime(e.to_string()),
        }
    }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let seed = cli.seed.unwrap_or(0);
    println!("seed: {seed}");
    let result = match &cli.command {
        Command::Train { config, out, set } => cmd_train(&cli, config, out, set),
        Command::Compare { a, b, window } => cmd_compare(a, b, window.as_deref()),
        Command::Gradcheck {
            trials,
            inject_sign_flip,
        } => cmd_gradcheck(seed, *trials, *inject_sign_flip),
        Command::Oracle { map } => cmd_oracle(map),
        Command::Plot {
            csvs,
            out,
            smooth,
            title,
        } => cmd_plot(csvs, out, *smooth, title, cli.force),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn ensure_writable(path: &Path, force: bool) -> CmdResult {
    if path.exists() && !force {
        return Err(Failure::config(format!(
            "{} exists; pass --force to overwrite",
            path.display()
        )));
    }
    Ok(())
}

fn write_file(path: &Path, contents: &[u8]) -> CmdResult {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Failure::runtime(format!("{}: {e}", parent.display())))?;
    }
    fs::write(path, contents).map_err(|e| Failure::runtime(format!("{}: {e}", path.display())))
}

fn cmd_train(cli: &Cli, config: &Path, out: &Path, set: &[String]) -> CmdResult {
    let text = fs::read_to_string(config).map_err(|e| Failure::config(format!("{}: {e}", config.display())))?;
    let mut overrides = Vec::new();
    for s in set {
        let (k, v) = s
            .split_once('=')
            .ok_or_else(|| Failure::config(format!("--set expects key=value, got '{s}'")))?;
        overrides.push((k.to_string(), v.to_string()));
    }
    if let Some(seed) = cli.seed {
        overrides.push(("seed".into(), seed.to_string()));
    }
    let cfg = ExperimentConfig::parse_with_overrides(&text, &overrides)?;
    let arms = cfg.arms();

    let needs_source = arms.iter().any(|a| {
        let kind = a.kinds[0];
        kind.uses_transfer_source() || a.resolved_advisor(kind).ok() == Some(AdvisorId::Transfer)
    });
    let mut targets: Vec<PathBuf> = arms.iter().map(|a| out.join(format!("{}.csv", a.kinds[0]))).collect();
    targets.push(out.join("curves.svg"));
    targets.push(out.join("config.txt"));
    if needs_source {
        targets.push(out.join("source.bin"));
    }
    for t in &targets {
        ensure_writable(t, cli.force)?;
    }
    fs::create_dir_all(out).map_err(|e| Failure::runtime(format!("{}: {e}", out.display())))?;
    write_file(&out.join("config.txt"), cfg.render().as_bytes())?;

    let source = if needs_source {
        let src = transfer_source(&cfg)?;
        if cfg.source.is_none() {
            println!(
                "source policy: {} episodes on {}, mean entropy {:.4} ({})",
                src.episodes,
                cfg.source_env,
                src.entropy,
                if src.converged { "converged" } else { "episode limit reached" }
            );
        }
        write_file(&out.join("source.bin"), &src.policy.mlp().to_bytes())?;
        Some(src.policy)
    } else {
        None
    };

    let window = cfg.summary_window();
    let mut curves = Vec::new();
    println!("window: {}:{}", window.0, window.1);
    for arm in &arms {
        let kind = arm.kinds[0];
        let records = run_experiment_with_source(arm, source.clone(), cli.jobs)?;
        write_file(&out.join(format!("{kind}.csv")), records_to_csv(&records).as_bytes())?;
        let per_run = run_window_means(&records, window);
        println!(
            "{kind}: mean return {} +- {} over {} runs",
            format_g6(mean(&per_run)),
            format_g6(stderr(&per_run)),
            per_run.len()
        );
        curves.push(learning_curve(kind.as_str(), &records)?);
    }
    let title = format!("{} on {}", arms.iter().map(|a| a.kinds[0].as_str()).collect::<Vec<_>>().join(" vs "), cfg.env);
    let svg = emit_curve_svg(&curves, &title)?;
    write_file(&out.join("curves.svg"), svg.as_bytes())?;
    Ok(())
}

fn cmd_compare(a: &Path, b: &Path, window: Option<&str>) -> CmdResult {
    let ra = read_csv(a).map_err(|e| Failure::config(format!("{}: {e}", a.display())))?;
    let rb = read_csv(b).map_err(|e| Failure::config(format!("{}: {e}", b.display())))?;
    let (la, ha) = episode_range(&ra).ok_or_else(|| Failure::config(format!("{} has no records", a.display())))?;
    let (lb, hb) = episode_range(&rb).ok_or_else(|| Failure::config(format!("{} has no records", b.display())))?;
    let (lo, hi) = (la.max(lb), ha.min(hb));
    let window = match window {
        Some(w) => parse_window(w)?,
        None => (lo, hi),
    };
    if window.0 < lo || window.1 > hi {
        return Err(Failure::config(format!(
            "window {}:{} outside the shared episode range {lo}:{hi}",
            window.0, window.1
        )));
    }
    let xa = window_returns(&ra, window);
    let xb = window_returns(&rb, window);
    println!("window: {}:{} ({} episodes)", window.0, window.1, window.1 - window.0 + 1);
    println!("n: {} vs {}", xa.len(), xb.len());
    println!("mean: {} vs {}", format_g6(mean(&xa)), format_g6(mean(&xb)));
    let w = wilcoxon_rank_sum(&xa, &xb)?;
    println!("wilcoxon: U = {}, p = {}", format_g6(w.statistic), format_g6(w.p_value));
    match welch_t_test(&xa, &xb) {
        Ok(t) => println!("welch: t = {}, p = {}", format_g6(t.statistic), format_g6(t.p_value)),
        Err(e) => println!("welch: not computed ({e})"),
    }
    Ok(())
}

fn cmd_gradcheck(seed: u64, trials: usize, flip: bool) -> CmdResult {
    if trials == 0 {
        return Err(Failure::config("trials must be at least 1"));
    }
    let suites = run_gradient_suites(seed, trials, flip)?;
    let mut ok = true;
    for s in &suites {
        println!(
            "{:<20} trials {:>5}  worst {:.3e}  tolerance {:.0e}  {}",
            s.name,
            s.trials,
            s.worst,
            s.tolerance,
            if s.passed() { "pass" } else { "FAIL" }
        );
        ok &= s.passed();
    }
    if ok {
        Ok(())
    } else {
        Err(Failure::runtime("gradient check failed"))
    }
}

fn load_world(map: &str) -> Result<GridWorld, Failure> {
    let path = Path::new(map);
    if path.exists() {
        let text = fs::read_to_string(path).map_err(|e| Failure::config(format!("{map}: {e}")))?;
        return Ok(load_map(&text)?);
    }
    let text = match map {
        "grid1" => GRID1_MAP,
        "grid2" => GRID2_MAP,
        "fiverooms" => FIVEROOMS_MAP,
        _ => return Err(Failure::config(format!("no such map: {map}"))),
    };
    Ok(load_map(text)?)
}

fn cmd_oracle(map: &str) -> CmdResult {
    let world = load_world(map)?;
    println!("map: {} ({}x{})", world.name, world.width, world.height);
    let Some(len) = bfs_shortest_path(&world) else {
        return Err(Failure {
            code: EXIT_ORACLE,
            message: "goal is unreachable from start".into(),
        });
    };
    println!("shortest path: {len}");
    println!(
        "optimal return: {}",
        format_g6(world.goal_bonus + world.step_penalty * f64::from(len))
    );
    println!("rooms: {}", world.n_rooms());
    for room in 0..world.n_rooms() {
        println!("  {room}: {}", world.room_label(room).unwrap_or("-"));
    }
    println!("doors: {}", world.doors.len());
    for (i, d) in world.doors.iter().enumerate() {
        let rooms: Vec<&str> = world
            .rooms_of(*d)
            .into_iter()
            .map(|r| world.room_label(r).unwrap_or("-"))
            .collect();
        println!("  {i}: ({},{}) joins {}", d.row, d.col, rooms.join(" / "));
    }
    Ok(())
}

fn cmd_plot(csvs: &[PathBuf], out: &Path, smooth: usize, title: &str, force: bool) -> CmdResult {
    if smooth == 0 {
        return Err(Failure::config("--smooth must be at least 1"));
    }
    ensure_writable(out, force)?;
    let mut curves: Vec<Curve> = Vec::new();
    let mut range = None;
    for path in csvs {
        let records = read_csv(path).map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
        let r = episode_range(&records).ok_or_else(|| Failure::config(format!("{} has no records", path.display())))?;
        match range {
            None => range = Some(r),
            Some(first) if first != r => {
                return Err(Failure::config(format!(
                    "{} covers episodes {}:{}, expected {}:{}",
                    path.display(),
                    r.0,
                    r.1,
                    first.0,
                    first.1
                )))
            }
            Some(_) => {}
        }
        let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let c = learning_curve(&name, &records)?;
        curves.push(Curve {
            name: c.name,
            mean: moving_average(&c.mean, smooth),
            stderr: moving_average(&c.stderr, smooth),
        });
    }
    let svg = emit_curve_svg(&curves, title)?;
    write_file(out, svg.as_bytes())?;
    println!("wrote {} ({} curves)", out.display(), curves.len());
    Ok(())
}

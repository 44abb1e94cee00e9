//! Command-line entry point: profile, benchmark, plan, prepare, and run
//! split execution end to end.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use slicekit::bench::{self, BenchError, ResourceProfile};
use slicekit::graph::{self, LayerGraph, ModelError, SplitId};
use slicekit::netem::{self, LinkShaper, NetError};
use slicekit::offload::{self, DeviceClient, OffloadError, Registry};
use slicekit::planner::{self, Constraints, NetworkProfile, PlanError, Variant, VariantFilter};
use slicekit::preprocess::{self, PrepError, TrainConfig};
use slicekit::rng::Rng;
use slicekit::tensor::{Tensor, TensorError};
use slicekit::timing::median_us;
use slicekit::wire::WireError;

const USAGE: &str = "\
slicekit <command> [flags]

commands:
  profile     list split points of a model (shape, bytes, TL eligibility)
  bench       measure per-split execution and serialization costs
  plan        rank split points under a network profile
  insert-tl   inject the transfer-layer pair at a split
  train       retrain a transfer-layer model on the builtin toy task
  split       export head/tail slices of a transfer-layer model
  serve-edge  run the edge server
  run-device  run the device client against an edge server
  experiment  bench + plan + run in one process, with paired variants
  report      regenerate tables from saved records or logs

flags:
  --model NAME          builtin model (tiny-cnn-8 | branchy-12 | deep-20)
  --model-file PATH     model file (alternative to --model)
  --net SPEC            network profile, e.g. 30mbps/30ms or unlimited
  --bench PATH          benchmark records file
  --split N             split index (or: local, full)
  --min-split N         privacy floor on the chosen split index
  --max-latency-us N    drop candidates above this total
  --variant V           tl | no-tl | both            (default both)
  --seed N              deterministic seed            (default 0)
  --out DIR             artifact directory
  --reps N              benchmark repetitions         (default 20)
  --requests N          experiment requests           (default 30)
  --device-scale X      device slowdown multiplier    (default 1)
  --edge-scale X        edge slowdown multiplier      (default 1)
  --epochs N            training epochs               (default 30)
  --lr X                SGD learning rate             (default 0.001)
  --batch N             minibatch size                (default 32)
  --classes N           toy task classes              (default 4)
  --samples N           toy samples per class         (default 100)
  --addr HOST:PORT      edge server address
  --log PATH            raw experiment log (report)

The SLICEKIT_NET_PROFILE environment variable overrides --net wherever a
link is actually shaped (run-device, experiment).
";

const KNOWN_FLAGS: &[&str] = &[
    "--model",
    "--model-file",
    "--net",
    "--bench",
    "--split",
    "--min-split",
    "--max-latency-us",
    "--variant",
    "--seed",
    "--out",
    "--reps",
    "--requests",
    "--device-scale",
    "--edge-scale",
    "--epochs",
    "--lr",
    "--batch",
    "--classes",
    "--samples",
    "--addr",
    "--log",
];

struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        CliError { code: 2, message: message.into() }
    }
}

// Exit codes: 2 usage, 3 file/format, 4 shape, 5 split/TL eligibility,
// 6 io, 7 network/transport, 8 benchmark invariant, 9 plan/training outcome.
impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        let code = match &e {
            ModelError::Parse { .. } | ModelError::VersionMismatch { .. } | ModelError::MissingWeights { .. } => 3,
            ModelError::Shape { .. } => 4,
            ModelError::UnknownSpec { .. } => 2,
            ModelError::Io(_) => 6,
        };
        CliError { code, message: e.to_string() }
    }
}

impl From<TensorError> for CliError {
    fn from(e: TensorError) -> Self {
        let code = match &e {
            TensorError::OddSpatialDims { .. } => 5,
            _ => 4,
        };
        CliError { code, message: e.to_string() }
    }
}

impl From<BenchError> for CliError {
    fn from(e: BenchError) -> Self {
        match e {
            BenchError::Model(m) => m.into(),
            BenchError::Tensor(t) => t.into(),
            BenchError::Io(io) => CliError { code: 6, message: io.to_string() },
            BenchError::Parse { .. } | BenchError::VersionMismatch { .. } => {
                CliError { code: 3, message: e.to_string() }
            }
            _ => CliError { code: 8, message: e.to_string() },
        }
    }
}

impl From<PlanError> for CliError {
    fn from(e: PlanError) -> Self {
        let code = match &e {
            PlanError::NotTlEligible { .. } | PlanError::SplitMismatch { .. } => 5,
            PlanError::InvalidProfile { .. } => 3,
            PlanError::NoFeasiblePlan | PlanError::InvalidConstraints { .. } => 9,
        };
        CliError { code, message: e.to_string() }
    }
}

impl From<NetError> for CliError {
    fn from(e: NetError) -> Self {
        CliError { code: 3, message: e.to_string() }
    }
}

impl From<PrepError> for CliError {
    fn from(e: PrepError) -> Self {
        match e {
            PrepError::Model(m) => m.into(),
            PrepError::Tensor(t) => t.into(),
            PrepError::InvalidConfig { .. } => CliError::usage(e.to_string()),
            PrepError::DivergedLoss { .. } => CliError { code: 9, message: e.to_string() },
            _ => CliError { code: 5, message: e.to_string() },
        }
    }
}

impl From<WireError> for CliError {
    fn from(e: WireError) -> Self {
        CliError { code: 7, message: e.to_string() }
    }
}

impl From<OffloadError> for CliError {
    fn from(e: OffloadError) -> Self {
        match e {
            OffloadError::Model(m) => m.into(),
            OffloadError::Prep(p) => p.into(),
            OffloadError::Tensor(t) => t.into(),
            OffloadError::InvalidSplit { split } => {
                CliError { code: 5, message: format!("split {split} cannot be offloaded") }
            }
            OffloadError::Io(io) => CliError { code: 6, message: io.to_string() },
            other => CliError { code: 7, message: other.to_string() },
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError { code: 6, message: e.to_string() }
    }
}

struct Args {
    command: String,
    flags: HashMap<String, Vec<String>>,
}

impl Args {
    fn parse(argv: &[String]) -> Result<Args, CliError> {
        let command = argv.first().cloned().ok_or_else(|| CliError::usage(USAGE))?;
        let mut flags: HashMap<String, Vec<String>> = HashMap::new();
        let mut i = 1;
        while i < argv.len() {
            let flag = &argv[i];
            if !flag.starts_with("--") {
                return Err(CliError::usage(format!("unexpected argument {flag:?}")));
            }
            if !KNOWN_FLAGS.contains(&flag.as_str()) {
                return Err(CliError::usage(format!("unknown flag {flag:?}")));
            }
            let value = argv.get(i + 1).ok_or_else(|| CliError::usage(format!("flag {flag} needs a value")))?;
            flags.entry(flag.clone()).or_default().push(value.clone());
            i += 2;
        }
        Ok(Args { command, flags })
    }

    fn get(&self, flag: &str) -> Option<&str> {
        self.flags.get(flag).and_then(|v| v.last()).map(|s| s.as_str())
    }

    fn get_all(&self, flag: &str) -> &[String] {
        self.flags.get(flag).map(|v| v.as_slice()).unwrap_or(&[])
    }

    fn require(&self, flag: &str) -> Result<&str, CliError> {
        self.get(flag).ok_or_else(|| CliError::usage(format!("{} requires {flag}", self.command)))
    }

    fn parse_num<T: std::str::FromStr>(&self, flag: &str, default: T) -> Result<T, CliError> {
        match self.get(flag) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| CliError::usage(format!("invalid value {v:?} for {flag}"))),
        }
    }

    fn parse_opt<T: std::str::FromStr>(&self, flag: &str) -> Result<Option<T>, CliError> {
        match self.get(flag) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| CliError::usage(format!("invalid value {v:?} for {flag}"))),
        }
    }
}

fn load_graph(args: &Args) -> Result<LayerGraph, CliError> {
    match (args.get("--model"), args.get("--model-file")) {
        (Some(name), None) => {
            let seed: u64 = args.parse_num("--seed", 0)?;
            Ok(graph::make_synthetic_model(name, seed)?)
        }
        (None, Some(path)) => Ok(graph::load_model(path)?),
        (None, None) => Err(CliError::usage(format!("{} requires --model or --model-file", args.command))),
        (Some(_), Some(_)) => Err(CliError::usage("--model and --model-file are mutually exclusive")),
    }
}

fn parse_variant(args: &Args) -> Result<VariantFilter, CliError> {
    match args.get("--variant").unwrap_or("both") {
        "tl" => Ok(VariantFilter::Tl),
        "no-tl" => Ok(VariantFilter::NoTl),
        "both" => Ok(VariantFilter::Both),
        other => Err(CliError::usage(format!("invalid --variant {other:?} (expected tl|no-tl|both)"))),
    }
}

fn parse_split(args: &Args) -> Result<Option<SplitId>, CliError> {
    match args.get("--split") {
        None => Ok(None),
        Some(v) => v.parse::<SplitId>().map(Some).map_err(CliError::usage),
    }
}

fn constraints_from(args: &Args) -> Result<Constraints, CliError> {
    Ok(Constraints {
        min_split_index: args.parse_opt("--min-split")?,
        max_total_latency_us: args.parse_opt("--max-latency-us")?,
        variant: parse_variant(args)?,
    })
}

fn out_dir(args: &Args) -> Result<Option<PathBuf>, CliError> {
    match args.get("--out") {
        None => Ok(None),
        Some(dir) => {
            let p = PathBuf::from(dir);
            std::fs::create_dir_all(&p)?;
            Ok(Some(p))
        }
    }
}

fn shaped_profile(args: &Args) -> Result<NetworkProfile, CliError> {
    Ok(netem::profile_from_env_or(args.require("--net")?)?)
}

fn resource_profiles(args: &Args) -> Result<(ResourceProfile, ResourceProfile), CliError> {
    let dev_scale: f64 = args.parse_num("--device-scale", 1.0)?;
    let edge_scale: f64 = args.parse_num("--edge-scale", 1.0)?;
    Ok((ResourceProfile::new("device", dev_scale)?, ResourceProfile::new("edge", edge_scale)?))
}

fn cmd_profile(args: &Args) -> Result<(), CliError> {
    let g = load_graph(args)?;
    let points = graph::enumerate_split_points(&g)?;
    println!("# {} ({} units, input {})", g.name, g.unit_count(), g.input_shape);
    println!("{:>6} {:>14} {:>12} {:>12} {:>11}", "split", "unit", "out_shape", "out_bytes", "tl_eligible");
    for p in &points {
        let unit = match p.id {
            SplitId::Interior(i) => g.units[i].kind.type_name(),
            SplitId::FullOffload => "(input)",
            SplitId::LocalOnly => "(output)",
        };
        println!(
            "{:>6} {:>14} {:>12} {:>12} {:>11}",
            p.id.to_string(),
            unit,
            p.output_shape.to_string(),
            p.output_bytes,
            p.tl_eligible
        );
    }
    Ok(())
}

fn records_path(dir: &Path, model: &str) -> PathBuf {
    dir.join(format!("{model}-records.txt"))
}

fn cmd_bench(args: &Args) -> Result<(), CliError> {
    let g = load_graph(args)?;
    let reps: u32 = args.parse_num("--reps", 20)?;
    let seed: u64 = args.parse_num("--seed", 0)?;
    let (device, edge) = resource_profiles(args)?;
    let mut rng = Rng::new(seed);
    let input = Tensor::random(g.input_shape, &mut rng);
    let run = bench::benchmark_model(&g, &device, &edge, &input, reps)?;
    let dir = out_dir(args)?.unwrap_or_else(|| PathBuf::from("."));
    let path = records_path(&dir, &g.name);
    bench::save_records(&run, &path)?;
    println!("# benchmarked {} splits of {} ({} reps)", run.records.len(), g.name, reps);
    for r in &run.records {
        println!(
            "split {:>6}: head {:>8}us tail {:>8}us tl {:>5}us payload {:>8}B tl_payload {:>8}B",
            r.split.to_string(),
            r.device_head_us,
            r.edge_tail_us,
            r.device_tl_us + r.edge_tl_us,
            r.payload_bytes_no_tl,
            r.payload_bytes_tl
        );
    }
    println!("records written to {}", path.display());
    Ok(())
}

fn cmd_plan(args: &Args) -> Result<(), CliError> {
    let run = bench::load_records(args.require("--bench")?)?;
    let net = netem::parse_profile(args.require("--net")?)?;
    let constraints = constraints_from(args)?;
    let plan = planner::rank(&run, &net, &constraints)?;
    print!("{}", planner::report_table(&plan));
    let chosen = plan.chosen();
    println!("chosen: split {} ({}) at {} us total", chosen.split, chosen.variant, chosen.total_us);
    if let Some(dir) = out_dir(args)? {
        std::fs::write(dir.join("plan.txt"), planner::report_table(&plan))?;
        std::fs::write(dir.join("plan.csv"), planner::report_csv(&plan))?;
        println!("plan written to {}", dir.join("plan.csv").display());
    }
    Ok(())
}

fn interior_split(args: &Args) -> Result<usize, CliError> {
    match parse_split(args)?.ok_or_else(|| CliError::usage(format!("{} requires --split", args.command)))? {
        SplitId::Interior(i) => Ok(i),
        other => Err(CliError::usage(format!("--split {other} is not an interior split"))),
    }
}

fn cmd_insert_tl(args: &Args) -> Result<(), CliError> {
    let g = load_graph(args)?;
    let split = interior_split(args)?;
    let tl = preprocess::insert_tl(&g, split)?;
    let dir = out_dir(args)?.unwrap_or_else(|| PathBuf::from("."));
    let path = dir.join(format!("{}-tl{}.model", g.name, split));
    graph::save_model(&tl.graph, &path)?;
    println!("transfer-layer model written to {}", path.display());
    Ok(())
}

/// Find the transfer-layer pair in a saved model: returns the unit index the
/// pair was inserted after.
fn detect_tl_split(g: &LayerGraph) -> Option<usize> {
    g.units
        .windows(2)
        .position(|w| {
            w[0].kind == slicekit::layers::LayerKind::DeviceTL && w[1].kind == slicekit::layers::LayerKind::EdgeTL
        })
        .and_then(|pos| pos.checked_sub(1))
}

fn tl_model_from_args(args: &Args) -> Result<preprocess::TlModel, CliError> {
    let g = load_graph(args)?;
    match parse_split(args)? {
        Some(SplitId::Interior(i)) => Ok(preprocess::insert_tl(&g, i)?),
        Some(other) => Err(CliError::usage(format!("--split {other} is not an interior split"))),
        None => {
            let split = detect_tl_split(&g)
                .ok_or_else(|| CliError::usage("model has no transfer-layer pair; pass --split to insert one"))?;
            let base = preprocess::strip_tl(&g)?;
            Ok(preprocess::TlModel { base, split_index: split, graph: g })
        }
    }
}

fn cmd_train(args: &Args) -> Result<(), CliError> {
    let tl = tl_model_from_args(args)?;
    let seed: u64 = args.parse_num("--seed", 0)?;
    let classes: usize = args.parse_num("--classes", 4)?;
    let samples: usize = args.parse_num("--samples", 100)?;
    let cfg = TrainConfig {
        learning_rate: args.parse_num("--lr", 0.001f32)?,
        epochs: args.parse_num("--epochs", 30)?,
        batch_size: args.parse_num("--batch", 32)?,
        seed,
    };
    let data = preprocess::make_toy_dataset(seed, classes, samples)?;
    let (trained, log) = preprocess::retrain(&tl, &data, &cfg)?;
    let last = log.last().expect("at least one epoch");
    println!(
        "trained {} epochs: train_loss {:.4} train_acc {:.3} val_acc {:.3}",
        last.epoch, last.train_loss, last.train_acc, last.val_acc
    );
    let dir = out_dir(args)?.unwrap_or_else(|| PathBuf::from("."));
    let model_path = dir.join(format!("{}-tl{}-trained.model", trained.graph.name, trained.split_index));
    graph::save_model(&trained.graph, &model_path)?;
    let log_path = dir.join("train-log.csv");
    std::fs::write(&log_path, preprocess::training_log_csv(&log))?;
    println!("model written to {}", model_path.display());
    println!("log written to {}", log_path.display());
    Ok(())
}

fn cmd_split(args: &Args) -> Result<(), CliError> {
    let tl = tl_model_from_args(args)?;
    let (head, tail) = preprocess::split_model(&tl);
    let dir = out_dir(args)?.unwrap_or_else(|| PathBuf::from("."));
    let head_path = dir.join(format!("{}-s{}-head.model", head.name, tl.split_index));
    let tail_path = dir.join(format!("{}-s{}-tail.model", tail.name, tl.split_index));
    graph::save_model(&head, &head_path)?;
    graph::save_model(&tail, &tail_path)?;
    println!("head written to {}", head_path.display());
    println!("tail written to {}", tail_path.display());
    Ok(())
}

fn cmd_serve_edge(args: &Args) -> Result<(), CliError> {
    let addr = args.require("--addr")?;
    let files = args.get_all("--model-file");
    let splits = args.get_all("--split");
    if files.is_empty() {
        return Err(CliError::usage("serve-edge requires at least one --model-file"));
    }
    if files.len() != splits.len() {
        return Err(CliError::usage("serve-edge needs one --split per --model-file"));
    }
    let (_, edge) = resource_profiles(args)?;
    let mut registry = Registry::new(edge);
    for (file, split_str) in files.iter().zip(splits.iter()) {
        let tail = graph::load_model(file)?;
        let split: SplitId = split_str.parse().map_err(CliError::usage)?;
        let name = tail.name.clone();
        let dims = tail.input_shape;
        registry.register(&name, split, tail)?;
        println!("registered {name} split {split} expecting {dims}");
    }
    let handle = offload::serve(registry, addr)?;
    println!("edge serving on {}", handle.addr());
    // Runs until the process is killed.
    loop {
        std::thread::sleep(std::time::Duration::from_secs(3600));
    }
}

fn print_client_summary(reports: &[offload::LatencyReport]) {
    let med = |f: fn(&offload::LatencyReport) -> u64| {
        let v: Vec<u64> = reports.iter().map(f).collect();
        median_us(&v)
    };
    println!(
        "n {}: device {}us tl {}us serialize {}us network {}us edge {}us deserialize {}us total {}us",
        reports.len(),
        med(|r| r.device_us),
        med(|r| r.tl_us),
        med(|r| r.serialize_us),
        med(|r| r.network_us),
        med(|r| r.edge_us),
        med(|r| r.deserialize_us),
        med(|r| r.total_us),
    );
}

fn raw_csv(reports: &[offload::LatencyReport]) -> String {
    let mut csv = String::from("request,device_us,tl_us,serialize_us,network_us,edge_us,deserialize_us,total_us\n");
    for (i, r) in reports.iter().enumerate() {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            i + 1,
            r.device_us,
            r.tl_us,
            r.serialize_us,
            r.network_us,
            r.edge_us,
            r.deserialize_us,
            r.total_us
        ));
    }
    csv
}

fn cmd_run_device(args: &Args) -> Result<(), CliError> {
    let addr = args.require("--addr")?;
    let head = graph::load_model(args.require("--model-file")?)?;
    let split =
        parse_split(args)?.ok_or_else(|| CliError::usage("run-device requires --split (index or full)"))?;
    let net = shaped_profile(args)?;
    let requests: usize = args.parse_num("--requests", 30)?;
    let seed: u64 = args.parse_num("--seed", 0)?;
    let (device, _) = resource_profiles(args)?;
    let input_shape = head.input_shape;
    let mut client = DeviceClient::connect(addr, head, device, LinkShaper::new(net), split)?;
    let mut rng = Rng::new(seed);
    for _ in 0..requests {
        let input = Tensor::random(input_shape, &mut rng);
        client.infer(&input)?;
    }
    print_client_summary(client.log());
    if let Some(dir) = out_dir(args)? {
        let path = dir.join("device-log.csv");
        std::fs::write(&path, raw_csv(client.log()))?;
        println!("raw log written to {}", path.display());
    }
    Ok(())
}

fn cmd_experiment(args: &Args) -> Result<(), CliError> {
    let g = load_graph(args)?;
    let net = shaped_profile(args)?;
    let reps: u32 = args.parse_num("--reps", 20)?;
    let requests: usize = args.parse_num("--requests", 30)?;
    let seed: u64 = args.parse_num("--seed", 0)?;
    let (device, edge) = resource_profiles(args)?;
    let constraints = constraints_from(args)?;
    let dir = out_dir(args)?.unwrap_or_else(|| PathBuf::from("."));

    let mut rng = Rng::new(seed);
    let input = Tensor::random(g.input_shape, &mut rng);
    println!("# benchmarking {} ({} reps)...", g.name, reps);
    let run = bench::benchmark_model(&g, &device, &edge, &input, reps)?;
    bench::save_records(&run, records_path(&dir, &g.name))?;

    let plan = planner::rank(&run, &net, &constraints)?;
    print!("{}", planner::report_table(&plan));
    std::fs::write(dir.join("plan.txt"), planner::report_table(&plan))?;
    std::fs::write(dir.join("plan.csv"), planner::report_csv(&plan))?;

    let split = match parse_split(args)? {
        Some(s) => s,
        None => plan.chosen().split,
    };
    println!("# running measured experiments at split {split} (n={requests})...");

    let mut summaries = Vec::new();
    let tl_eligible = run.record(split).map(|r| r.tl_eligible).unwrap_or(false);
    let want_tl = matches!(constraints.variant, VariantFilter::Tl | VariantFilter::Both);
    let want_plain = matches!(constraints.variant, VariantFilter::NoTl | VariantFilter::Both);
    if want_tl && tl_eligible {
        summaries.push(offload::run_experiment(&g, split, Variant::Tl, &device, &edge, &net, requests, seed)?);
    }
    if want_plain || summaries.is_empty() {
        summaries.push(offload::run_experiment(&g, split, Variant::NoTl, &device, &edge, &net, requests, seed)?);
    }
    print!("{}", offload::summary_table(&summaries));
    std::fs::write(dir.join("summary.txt"), offload::summary_table(&summaries))?;
    for s in &summaries {
        let path = dir.join(format!("raw-{}-{}.csv", s.split, s.variant));
        std::fs::write(&path, offload::raw_log_csv(s))?;
    }

    if summaries.len() == 2 {
        let tl_med = summaries[0].median_total_us as i64;
        let plain_med = summaries[1].median_total_us as i64;
        let planned = plan
            .candidates
            .iter()
            .find(|c| c.split == split && c.variant == Variant::Tl)
            .and_then(|c| c.delta_t_us);
        match planned {
            Some(d) => println!("delta_t at split {split}: planned {d} us, measured {}", plain_med - tl_med),
            None => println!("delta_t at split {split}: measured {}", plain_med - tl_med),
        }
    }
    println!("artifacts in {}", dir.display());
    Ok(())
}

fn cmd_report(args: &Args) -> Result<(), CliError> {
    let mut did_something = false;
    if let Some(bench_path) = args.get("--bench") {
        let run = bench::load_records(bench_path)?;
        let net = netem::parse_profile(args.require("--net")?)?;
        let plan = planner::rank(&run, &net, &constraints_from(args)?)?;
        print!("{}", planner::report_table(&plan));
        did_something = true;
    }
    if let Some(log_path) = args.get("--log") {
        let text = std::fs::read_to_string(log_path)?;
        let mut columns: Vec<Vec<u64>> = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if i == 0 {
                continue; // header
            }
            let fields: Vec<u64> = line.split(',').skip(1).filter_map(|v| v.parse().ok()).collect();
            if columns.is_empty() {
                columns = vec![Vec::new(); fields.len()];
            }
            for (c, v) in fields.iter().enumerate() {
                columns[c].push(*v);
            }
        }
        if columns.is_empty() || columns[0].is_empty() {
            return Err(CliError { code: 3, message: format!("{log_path} has no data rows") });
        }
        let names = ["device_us", "tl_us", "serialize_us", "network_us", "edge_us", "deserialize_us", "total_us"];
        print!("# medians over {} requests:", columns[0].len());
        for (name, col) in names.iter().zip(columns.iter()) {
            print!(" {name}={}", median_us(col));
        }
        println!();
        did_something = true;
    }
    if !did_something {
        return Err(CliError::usage("report requires --bench (with --net) or --log"));
    }
    Ok(())
}

fn dispatch(args: &Args) -> Result<(), CliError> {
    match args.command.as_str() {
        "profile" => cmd_profile(args),
        "bench" => cmd_bench(args),
        "plan" => cmd_plan(args),
        "insert-tl" => cmd_insert_tl(args),
        "train" => cmd_train(args),
        "split" => cmd_split(args),
        "serve-edge" => cmd_serve_edge(args),
        "run-device" => cmd_run_device(args),
        "experiment" => cmd_experiment(args),
        "report" => cmd_report(args),
        "help" | "--help" | "-h" => {
            print!("{USAGE}");
            Ok(())
        }
        other => Err(CliError::usage(format!("unknown command {other:?}\n\n{USAGE}"))),
    }
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().skip(1).collect();
    let args = match Args::parse(&argv) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {}", e.message);
            return ExitCode::from(e.code);
        }
    };
    match dispatch(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

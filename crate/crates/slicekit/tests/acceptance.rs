//! Acceptance suite: one test per release criterion, each printing a PASS
//! line with the measured numbers. Tests take a shared lock so timing-
//! sensitive measurements never run concurrently.

mod common;

use std::io::Read;
use std::net::TcpListener;

use slicekit::bench::{benchmark_model, BenchmarkRecord, BenchmarkRun, ResourceProfile};
use slicekit::graph::{enumerate_split_points, make_synthetic_model, SplitId, BUILTIN_MODELS};
use slicekit::layers::{backward, Layer, LayerKind, Padding, Weights};
use slicekit::netem::{parse_profile, shaped_send, LinkShaper};
use slicekit::offload::run_experiment;
use slicekit::planner::{
    cost_all, cost_no_tl, cost_tl, rank, Constraints, CostBreakdown, NetworkProfile, Variant, VariantFilter,
};
use slicekit::preprocess::{evaluate, insert_tl, make_toy_dataset, retrain, train_graph, TrainConfig};
use slicekit::rng::Rng;
use slicekit::tensor::{max_pool_2x2, nn_upsample_2x, Shape, Tensor};
use slicekit::wire::{self, Frame, FrameType};

use common::{fd_input_gradient, fd_weight_gradient, max_relative_error, timing_lock};

fn blank_record(split: SplitId) -> BenchmarkRecord {
    BenchmarkRecord {
        split,
        tl_eligible: false,
        device_head_us: 0,
        edge_tail_us: 0,
        device_tl_us: 0,
        edge_tl_us: 0,
        serialize_no_tl_us: 0,
        deserialize_no_tl_us: 0,
        serialize_tl_us: 0,
        deserialize_tl_us: 0,
        payload_bytes_no_tl: 0,
        payload_bytes_tl: 0,
        repetitions: 20,
        timestamp_us: 0,
    }
}

fn bench_builtin(name: &str, device_scale: f64, edge_scale: f64, seed: u64) -> BenchmarkRun {
    let g = make_synthetic_model(name, seed).unwrap();
    let mut rng = Rng::new(seed);
    let input = Tensor::random(g.input_shape, &mut rng);
    benchmark_model(
        &g,
        &ResourceProfile::new("device", device_scale).unwrap(),
        &ResourceProfile::new("edge", edge_scale).unwrap(),
        &input,
        20,
    )
    .unwrap()
}

#[test]
fn criterion_1_cost_model_arithmetic() {
    let _guard = timing_lock();

    // 1 MB over 30 Mbps with 30 ms one-way latency.
    let net = NetworkProfile::new(30.0, 30.0).unwrap();
    let mut rec = blank_record(SplitId::Interior(0));
    rec.payload_bytes_no_tl = 1_000_000;
    let bd = cost_no_tl(&rec, &net);
    assert!(
        bd.comm_us.abs_diff(296_667) <= 1 && bd.total_us.abs_diff(296_667) <= 1,
        "no-TL comm {} / total {}",
        bd.comm_us,
        bd.total_us
    );

    // 250 KB over 57 Mbps with 28 ms latency.
    let net = NetworkProfile::new(28.0, 57.0).unwrap();
    let mut rec = blank_record(SplitId::Interior(0));
    rec.tl_eligible = true;
    rec.payload_bytes_tl = 250_000;
    let tl = cost_tl(&rec, &net).unwrap();
    assert!(tl.comm_us.abs_diff(63_088) <= 1, "TL comm term {}", tl.comm_us);

    println!("criterion 1: PASS - comm terms 296667us and 63088us match hand arithmetic");
}

#[test]
fn criterion_2_shaping_fidelity() {
    let _guard = timing_lock();

    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let drain = std::thread::spawn(move || {
        let (mut s, _) = listener.accept().unwrap();
        let mut buf = [0u8; 64 * 1024];
        while matches!(s.read(&mut buf), Ok(n) if n > 0) {}
    });
    let mut conn = std::net::TcpStream::connect(addr).unwrap();
    conn.set_nodelay(true).unwrap();

    let profile = parse_profile("30mbps/30ms").unwrap();
    let mut shaper = LinkShaper::new(profile);
    let payload = vec![0x5au8; 1_000_000];
    let predicted = 296_667f64; // 30ms + 8e6 bits / 30 Mbps

    let mut elapsed = Vec::new();
    for _ in 0..5 {
        let us = shaped_send(&mut conn, &payload, &mut shaper).unwrap() as f64;
        assert!(
            (us - predicted).abs() <= 0.10 * predicted,
            "shaped send took {us}us, predicted {predicted}us"
        );
        elapsed.push(us);
    }
    drop(conn);
    drain.join().unwrap();
    println!(
        "criterion 2: PASS - 5x 1MB sends within 10% of {predicted}us (measured {:?})",
        elapsed.iter().map(|v| *v as u64).collect::<Vec<_>>()
    );
}

/// Independent selection oracle: cost every candidate of one variant and
/// scan for the minimum, breaking ties toward the larger split.
fn brute_force_best(run: &BenchmarkRun, net: &NetworkProfile, filter: VariantFilter) -> CostBreakdown {
    let mut best: Option<CostBreakdown> = None;
    for record in &run.records {
        let mut candidates = Vec::new();
        if matches!(filter, VariantFilter::NoTl | VariantFilter::Both) {
            candidates.push(cost_no_tl(record, net));
        }
        if matches!(filter, VariantFilter::Tl | VariantFilter::Both) && record.tl_eligible {
            candidates.push(cost_tl(record, net).unwrap());
        }
        for bd in candidates {
            best = match best {
                None => Some(bd),
                Some(b) if bd.total_us < b.total_us => Some(bd),
                Some(b) if bd.total_us == b.total_us && bd.split > b.split => Some(bd),
                Some(b) => Some(b),
            };
        }
    }
    best.expect("at least one candidate")
}

#[test]
fn criterion_3_planner_equals_oracle() {
    let _guard = timing_lock();

    let nets = [
        NetworkProfile::new(30.0, 30.0).unwrap(),
        NetworkProfile::new(28.0, 57.0).unwrap(),
        NetworkProfile::new(30.0, 60.0).unwrap(),
    ];
    let mut checked = 0;
    for name in BUILTIN_MODELS {
        let run = bench_builtin(name, 1.0, 1.0, 11);
        for net in &nets {
            for filter in [VariantFilter::Tl, VariantFilter::NoTl] {
                let plan = rank(&run, net, &Constraints::variant(filter)).unwrap();
                let oracle = brute_force_best(&run, net, filter);
                assert_eq!(
                    (plan.chosen().split, plan.chosen().variant, plan.chosen().total_us),
                    (oracle.split, oracle.variant, oracle.total_us),
                    "{name} under {net} filter {filter:?}"
                );

                let constrained = Constraints {
                    min_split_index: Some(5),
                    max_total_latency_us: None,
                    variant: filter,
                };
                let plan5 = rank(&run, net, &constrained).unwrap();
                assert!(
                    plan5.chosen().split >= SplitId::Interior(5),
                    "{name} under {net}: constrained chose {}",
                    plan5.chosen().split
                );
                checked += 2;
            }
        }
    }
    println!("criterion 3: PASS - {checked} rankings equal the exhaustive oracle (3 models x 3 profiles x 2 variants)");
}

#[test]
fn criterion_4_plan_matches_measurement() {
    let _guard = timing_lock();

    let g = make_synthetic_model("tiny-cnn-8", 5).unwrap();
    let device = ResourceProfile::native("device");
    let edge = ResourceProfile::native("edge");
    let net = parse_profile("30mbps/30ms").unwrap();
    let mut rng = Rng::new(5);
    let input = Tensor::random(g.input_shape, &mut rng);
    let run = benchmark_model(&g, &device, &edge, &input, 20).unwrap();

    let mut failures = Vec::new();
    let mut lines = Vec::new();
    // The local-only plan is pure compute with no latency floor, so measure
    // it first, while the machine is in the same state the benchmark saw;
    // a shared single-core host drifts several percent over a minute.
    let mut breakdowns = cost_all(&run, &net);
    breakdowns.sort_by_key(|bd| bd.split != SplitId::LocalOnly);
    for planned in breakdowns {
        let summary = run_experiment(&g, planned.split, planned.variant, &device, &edge, &net, 30, 77).unwrap();
        let measured = summary.median_total_us as f64;
        let predicted = planned.total_us as f64;
        let rel = (measured - predicted).abs() / predicted;
        lines.push(format!(
            "  split {:>5} {:>5}: planned {:>7}us measured {:>7}us ({:+.1}%)",
            planned.split.to_string(),
            planned.variant.to_string(),
            planned.total_us,
            summary.median_total_us,
            100.0 * (measured - predicted) / predicted
        ));
        if rel > 0.15 {
            failures.push(format!("split {} {}: {measured}us vs planned {predicted}us", planned.split, planned.variant));
        }
        // The per-request component log must partition the wall total.
        for r in &summary.reports {
            let gap = r.total_us.abs_diff(r.component_sum());
            assert!(
                gap as f64 <= 0.05 * r.total_us as f64 + 200.0,
                "split {} {}: components sum to {} but total is {}",
                planned.split,
                planned.variant,
                r.component_sum(),
                r.total_us
            );
        }
    }
    println!("{}", lines.join("\n"));
    assert!(failures.is_empty(), "convergence failures: {failures:?}");
    println!("criterion 4: PASS - measured medians within 15% of planner totals for all {} configurations", lines.len());
}

#[test]
fn criterion_5_tl_benefit_and_speedup() {
    let _guard = timing_lock();

    // Paired medians at every split the planner says the TL should win.
    let g = make_synthetic_model("tiny-cnn-8", 5).unwrap();
    let device = ResourceProfile::native("device");
    let edge = ResourceProfile::native("edge");
    let net = parse_profile("30mbps/30ms").unwrap();
    let mut rng = Rng::new(5);
    let input = Tensor::random(g.input_shape, &mut rng);
    let run = benchmark_model(&g, &device, &edge, &input, 20).unwrap();

    let mut pairs = 0;
    for bd in cost_all(&run, &net) {
        let Some(delta) = bd.delta_t_us else { continue };
        if delta <= 0 {
            continue;
        }
        let with_tl = run_experiment(&g, bd.split, Variant::Tl, &device, &edge, &net, 30, 13).unwrap();
        let plain = run_experiment(&g, bd.split, Variant::NoTl, &device, &edge, &net, 30, 13).unwrap();
        assert!(
            with_tl.median_total_us < plain.median_total_us,
            "split {}: TL {}us not below plain {}us (planned delta {delta}us)",
            bd.split,
            with_tl.median_total_us,
            plain.median_total_us
        );
        pairs += 1;
    }
    assert!(pairs > 0, "no split with positive planned delta");

    // Transfer-dominated configuration: slow device, 30 Mbps uplink.
    let deep = make_synthetic_model("deep-20", 5).unwrap();
    let slow_device = ResourceProfile::new("device", 10.0).unwrap();
    let mut rng = Rng::new(6);
    let input = Tensor::random(deep.input_shape, &mut rng);
    let deep_run = benchmark_model(&deep, &slow_device, &edge, &input, 20).unwrap();
    let plan = rank(&deep_run, &net, &Constraints::variant(VariantFilter::Tl)).unwrap();
    let best = plan.chosen();
    let tl_summary = run_experiment(&deep, best.split, Variant::Tl, &slow_device, &edge, &net, 30, 21).unwrap();
    let local_summary =
        run_experiment(&deep, SplitId::LocalOnly, Variant::NoTl, &slow_device, &edge, &net, 30, 21).unwrap();
    let speedup = local_summary.median_total_us as f64 / tl_summary.median_total_us as f64;
    assert!(
        speedup >= 2.0,
        "best TL plan (split {}) {}us vs local {}us: speedup {speedup:.2}",
        best.split,
        tl_summary.median_total_us,
        local_summary.median_total_us
    );
    println!(
        "criterion 5: PASS - TL beat plain at {pairs} positive-delta splits; transfer-dominated speedup {speedup:.2}x (local {}us vs TL-at-{} {}us)",
        local_summary.median_total_us, best.split, tl_summary.median_total_us
    );
}

#[test]
fn criterion_6_distribution_transparency() {
    let _guard = timing_lock();

    let device = ResourceProfile::native("device");
    let edge = ResourceProfile::native("edge");
    let unlimited = NetworkProfile::unlimited();
    for name in BUILTIN_MODELS {
        let g = make_synthetic_model(name, 9).unwrap();
        let points = enumerate_split_points(&g).unwrap();
        let tl_split = points.iter().find(|p| p.tl_eligible).map(|p| p.id);
        let plain_split = points
            .iter()
            .find(|p| matches!(p.id, SplitId::Interior(_)))
            .map(|p| p.id)
            .unwrap();

        // Plain split: offloaded output must equal the base model's.
        let (head, tail) = slicekit::offload::build_slices(&g, plain_split, Variant::NoTl).unwrap();
        let mut registry = slicekit::offload::Registry::new(edge.clone());
        registry.register(&g.name, plain_split, tail).unwrap();
        let server = slicekit::offload::serve(registry, ("127.0.0.1", 0)).unwrap();
        let mut client = slicekit::offload::DeviceClient::connect(
            server.addr(),
            head,
            device.clone(),
            LinkShaper::new(unlimited),
            plain_split,
        )
        .unwrap();
        let mut rng = Rng::new(31);
        for _ in 0..100 {
            let x = Tensor::random(g.input_shape, &mut rng);
            let (remote, _) = client.infer(&x).unwrap();
            assert_eq!(remote, g.forward(&x).unwrap(), "{name} split {plain_split} diverged");
        }
        drop(client);
        server.shutdown();

        // Transfer-layer split: offloaded output must equal the TL model's.
        if let Some(SplitId::Interior(i)) = tl_split {
            let tl_model = insert_tl(&g, i).unwrap();
            let (head, tail) = slicekit::offload::build_slices(&g, SplitId::Interior(i), Variant::Tl).unwrap();
            let mut registry = slicekit::offload::Registry::new(edge.clone());
            registry.register(&g.name, SplitId::Interior(i), tail).unwrap();
            let server = slicekit::offload::serve(registry, ("127.0.0.1", 0)).unwrap();
            let mut client = slicekit::offload::DeviceClient::connect(
                server.addr(),
                head,
                device.clone(),
                LinkShaper::new(unlimited),
                SplitId::Interior(i),
            )
            .unwrap();
            for _ in 0..100 {
                let x = Tensor::random(g.input_shape, &mut rng);
                let (remote, _) = client.infer(&x).unwrap();
                assert_eq!(remote, tl_model.graph.forward(&x).unwrap(), "{name} TL split {i} diverged");
            }
            drop(client);
            server.shutdown();
        }
    }
    println!("criterion 6: PASS - offloaded outputs bit-identical to single-process forward (100 inputs x 3 models x 2 variants)");
}

#[test]
fn criterion_7_tl_correctness_and_gradients() {
    let _guard = timing_lock();

    // Quarter-size law and the pool/upsample shape inverse on random shapes.
    let mut rng = Rng::new(0x71);
    for _ in 0..200 {
        let shape = Shape::new(1 + rng.below(6), 2 * (1 + rng.below(12)), 2 * (1 + rng.below(12)));
        let x = Tensor::random(shape, &mut rng);
        let pooled = max_pool_2x2(&x).unwrap();
        assert_eq!(pooled.shape().elements() * 4, shape.elements());
        assert_eq!(nn_upsample_2x(&pooled).shape(), shape);
    }

    // Gradient checks for every layer kind, ten seeds, central differences.
    let eps = 1e-3f32;
    let tol = 1e-3f32;
    let mut checked = 0usize;
    for seed in 0..10u64 {
        let mut rng = Rng::new(0x9d0 + seed);
        let conv_weights = |rng: &mut Rng, out: usize, inc: usize, k: usize| Weights {
            w: (0..out * inc * k * k).map(|_| rng.uniform(-0.6, 0.6)).collect(),
            b: (0..out).map(|_| rng.uniform(0.2, 0.5)).collect(),
        };
        let dense_weights = |rng: &mut Rng, out: usize, inc: usize| Weights {
            w: (0..out * inc).map(|_| rng.uniform(-0.6, 0.6)).collect(),
            b: (0..out).map(|_| rng.uniform(-0.3, 0.3)).collect(),
        };
        let spatial = Shape::new(1, 4, 4);
        let flat = Shape::new(16, 1, 1);
        let cases: Vec<(&str, Layer, Shape)> = vec![
            (
                "conv2d-same",
                Layer::with_weights(
                    LayerKind::Conv2D { out_channels: 2, kernel: 3, stride: 1, padding: Padding::Same },
                    conv_weights(&mut rng, 2, 1, 3),
                ),
                spatial,
            ),
            (
                "conv2d-valid",
                Layer::with_weights(
                    LayerKind::Conv2D { out_channels: 2, kernel: 3, stride: 1, padding: Padding::Valid },
                    conv_weights(&mut rng, 2, 1, 3),
                ),
                spatial,
            ),
            ("dense", Layer::with_weights(LayerKind::Dense { out_units: 5 }, dense_weights(&mut rng, 5, 16)), flat),
            ("relu", Layer::new(LayerKind::ReLU), spatial),
            ("maxpool", Layer::new(LayerKind::MaxPool { kernel: 2, stride: 2 }), spatial),
            ("globalavgpool", Layer::new(LayerKind::GlobalAvgPool), spatial),
            ("flatten", Layer::new(LayerKind::Flatten), spatial),
            ("devicetl", Layer::new(LayerKind::DeviceTL), spatial),
            ("edgetl", Layer::new(LayerKind::EdgeTL), spatial),
            (
                "block",
                Layer::new(LayerKind::Block(vec![
                    Layer::with_weights(
                        LayerKind::Conv2D { out_channels: 2, kernel: 3, stride: 1, padding: Padding::Same },
                        conv_weights(&mut rng, 2, 1, 3),
                    ),
                    Layer::new(LayerKind::ReLU),
                ])),
                spatial,
            ),
        ];

        for (label, layer, in_shape) in cases {
            let input = common::kink_free_input(in_shape, &mut rng, 0.05);
            let out_shape = layer.kind.output_shape(in_shape).unwrap();
            let coeffs: Vec<f32> = (0..out_shape.elements()).map(|_| rng.uniform(0.5, 1.5)).collect();

            let upstream = Tensor::new(out_shape, coeffs.clone()).unwrap();
            let (analytic_dx, weight_grads) = backward(&layer, &input, &upstream).unwrap();
            let numeric_dx = fd_input_gradient(&layer, &input, &coeffs, eps);
            let rel = max_relative_error(analytic_dx.data(), &numeric_dx);
            assert!(rel <= tol, "{label} seed {seed}: input gradient off by {rel}");

            for (slot, wg) in weight_grads.iter().enumerate() {
                let (num_w, num_b) = fd_weight_gradient(&layer, &input, &coeffs, eps, slot);
                let rel_w = max_relative_error(&wg.w, &num_w);
                let rel_b = max_relative_error(&wg.b, &num_b);
                assert!(rel_w <= tol, "{label} seed {seed}: weight gradient off by {rel_w}");
                assert!(rel_b <= tol, "{label} seed {seed}: bias gradient off by {rel_b}");
            }
            checked += 1;
        }
    }
    println!("criterion 7: PASS - quarter-size law, shape inverse, and {checked} gradient checks at 1e-3 relative tolerance");
}

#[test]
fn criterion_8_accuracy_recovery() {
    let _guard = timing_lock();

    let g = make_synthetic_model("tiny-cnn-8", 0).unwrap();
    let data = make_toy_dataset(0, 4, 100).unwrap();
    let cfg = TrainConfig::default(); // lr 0.001, 30 epochs, batch 32

    let (base, log) = train_graph(&g, &data, &cfg).unwrap();
    let base_acc = log.last().unwrap().val_acc;
    assert!(base_acc >= 0.90, "base validation accuracy {base_acc} below 0.90");

    let tl = insert_tl(&base, 1).unwrap();
    let untrained_acc = evaluate(&tl.graph, &data.val).unwrap();
    assert!(
        untrained_acc < base_acc,
        "inserting the transfer layer should cost accuracy before retraining ({untrained_acc} vs {base_acc})"
    );

    let (retrained, rlog) = retrain(&tl, &data, &cfg).unwrap();
    let recovered_acc = rlog.last().unwrap().val_acc;
    assert!(
        recovered_acc >= base_acc - 0.03,
        "retrained accuracy {recovered_acc} more than 3 points below base {base_acc}"
    );
    let _ = retrained;
    println!(
        "criterion 8: PASS - base {base_acc:.3}, with TL untrained {untrained_acc:.3}, retrained {recovered_acc:.3} (floor {:.3})",
        base_acc - 0.03
    );
}

#[test]
fn criterion_9_wire_robustness() {
    let _guard = timing_lock();

    // Round trips over mixed frame types.
    let mut rng = Rng::new(0x77697265);
    for _ in 0..1000 {
        let frame = match rng.below(5) {
            0 => Frame::ping(rng.next_u64()),
            1 => Frame::pong(rng.next_u64()),
            2 => Frame::error(rng.next_u64(), (rng.next_u64() & 0xffff) as u16, "synthetic failure"),
            _ => {
                let c = 1 + rng.below(4) as u32;
                let h = 1 + rng.below(6) as u32;
                let w = 1 + rng.below(6) as u32;
                Frame {
                    frame_type: if rng.below(2) == 0 { FrameType::InferRequest } else { FrameType::InferResponse },
                    request_id: rng.next_u64(),
                    model_id: "acceptance".into(),
                    split_index: (rng.next_u64() & 0xffff) as u16,
                    dims: (c, h, w),
                    payload: (0..(c * h * w) as usize).map(|_| rng.uniform(-50.0, 50.0)).collect(),
                }
            }
        };
        let bytes = wire::encode(&frame).unwrap();
        let (back, used) = wire::decode(&bytes).unwrap();
        assert_eq!(back, frame);
        assert_eq!(used, bytes.len());
    }

    // Fuzz: random byte strings produce structured errors, never panics.
    let mut errors = 0usize;
    for _ in 0..10_000 {
        let len = rng.below(200);
        let mut bytes: Vec<u8> = (0..len).map(|_| (rng.next_u64() & 0xff) as u8).collect();
        if rng.below(3) == 0 && bytes.len() >= 6 {
            bytes[0..4].copy_from_slice(&wire::FRAME_MAGIC);
            bytes[4..6].copy_from_slice(&wire::WIRE_VERSION.to_le_bytes());
        }
        if wire::decode(&bytes).is_err() {
            errors += 1;
        }
    }
    assert!(errors > 9000, "fuzz inputs should almost always fail to decode ({errors} errors)");

    // Golden fixture: byte-for-byte stable.
    let frame = Frame {
        frame_type: FrameType::InferRequest,
        request_id: 7,
        model_id: "m".into(),
        split_index: 1,
        dims: (2, 2, 2),
        payload: vec![0.0, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75],
    };
    let bytes = wire::encode(&frame).unwrap();
    let golden = std::fs::read(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/golden/frame_2x2x2.bin")).unwrap();
    assert_eq!(bytes, golden, "encoding drifted from the golden fixture");
    // Spot-check the reviewed layout: magic, version, type, id, payload head.
    assert_eq!(&bytes[0..7], &[0x53, 0x4c, 0x4b, 0x46, 0x01, 0x00, 0x00]);
    assert_eq!(bytes[15], 1);
    assert_eq!(bytes[16], b'm');
    assert_eq!(&bytes[39..43], &[0x00, 0x00, 0x00, 0x00]); // payload[0] = 0.0f32
    assert_eq!(&bytes[43..47], &[0x00, 0x00, 0x80, 0x3e]); // payload[1] = 0.25f32
    assert_eq!(bytes.len(), 71);

    println!("criterion 9: PASS - 1000 round trips, 10000 fuzz decodes without a crash, golden fixture stable");
}

/// A slowed device must stretch head times by its scale factor while edge
/// times stay native: head+tail at any split tracks the local-only time
/// scaled by that split's compute fraction. The split fraction comes from a
/// separate native run as a dimensionless ratio (immune to machine-speed
/// drift between the two runs); all absolute times come from the scaled run.
#[test]
fn bench_scaled_head_tail_tracks_split_fraction() {
    let _guard = timing_lock();

    let native = bench_builtin("tiny-cnn-8", 1.0, 1.0, 19);
    let scaled = bench_builtin("tiny-cnn-8", 10.0, 1.0, 19);
    let local_native = native.record(SplitId::LocalOnly).unwrap().device_head_us as f64;
    let local_scaled = scaled.record(SplitId::LocalOnly).unwrap().device_head_us as f64;
    let edge_full = scaled.record(SplitId::FullOffload).unwrap().edge_tail_us as f64;

    for (n, s) in native.records.iter().zip(scaled.records.iter()) {
        let SplitId::Interior(_) = n.split else { continue };
        let fraction = n.device_head_us as f64 / local_native;
        let predicted = local_scaled * fraction + edge_full * (1.0 - fraction);
        let measured = (s.device_head_us + s.edge_tail_us) as f64;
        let rel = (measured - predicted).abs() / predicted;
        assert!(
            rel <= 0.20,
            "split {}: head+tail {measured}us vs predicted {predicted}us ({:.1}%)",
            n.split,
            100.0 * rel
        );
    }
    println!("bench scaling: head+tail tracks local-only scaled by split fraction within 20%");
}

/// Doubling the bandwidth must halve the transfer component.
#[test]
fn netem_doubling_bandwidth_halves_transfer() {
    let _guard = timing_lock();

    let payload = vec![1u8; 512 * 1024];
    let send_at = |mbps: f64| {
        let mut shaper = LinkShaper::new(NetworkProfile::new(0.0, mbps).unwrap());
        let mut sink = std::io::sink();
        shaped_send(&mut sink, &payload, &mut shaper).unwrap() as f64
    };
    let slow = send_at(40.0);
    let fast = send_at(80.0);
    let ratio = slow / fast;
    assert!((1.8..=2.2).contains(&ratio), "40->80 Mbps transfer ratio {ratio:.2}");
    println!("netem: doubling bandwidth changed transfer by 1/{ratio:.2}");
}

/// The client's network component must match the communication term of the
/// cost model for a megabyte-scale boundary.
#[test]
fn offload_network_component_matches_prediction() {
    let _guard = timing_lock();

    // Two pass-through units around a 64x64x64 boundary: the payload is
    // 1 MiB of reals plus the frame header.
    let units = vec![Layer::new(LayerKind::ReLU), Layer::new(LayerKind::ReLU)];
    let g = slicekit::graph::LayerGraph::new("megabyte", Shape::new(64, 64, 64), units).unwrap();
    let net = parse_profile("30mbps/30ms").unwrap();
    let split = SplitId::Interior(0);
    let (head, tail) = slicekit::offload::build_slices(&g, split, Variant::NoTl).unwrap();
    let mut registry = slicekit::offload::Registry::new(ResourceProfile::native("edge"));
    registry.register(&g.name, split, tail).unwrap();
    let server = slicekit::offload::serve(registry, ("127.0.0.1", 0)).unwrap();
    let mut client = slicekit::offload::DeviceClient::connect(
        server.addr(),
        head,
        ResourceProfile::native("device"),
        LinkShaper::new(net),
        split,
    )
    .unwrap();
    client.set_timeout(std::time::Duration::from_secs(30)).unwrap();

    let payload_bytes = wire::tensor_frame_len(g.name.len(), 64 * 64 * 64);
    let predicted = slicekit::planner::comm_us(payload_bytes, &net) as f64;
    let mut rng = Rng::new(41);
    let mut nets = Vec::new();
    for _ in 0..3 {
        let x = Tensor::random(g.input_shape, &mut rng);
        let (_, report) = client.infer(&x).unwrap();
        nets.push(report.network_us);
    }
    drop(client);
    server.shutdown();
    let median = slicekit::timing::median_us(&nets) as f64;
    assert!(
        (median - predicted).abs() <= 0.10 * predicted,
        "network component {median}us vs predicted {predicted}us"
    );
    println!("offload: 1MB-boundary network component {median}us within 10% of predicted {predicted}us");
}

/// On an unshaped link the network component nearly vanishes and the
/// transfer-layer advantage shrinks to its compute-plus-serialization core;
/// repeated experiments agree run to run.
#[test]
fn offload_unlimited_limit_and_repeatability() {
    let _guard = timing_lock();

    let g = make_synthetic_model("tiny-cnn-8", 5).unwrap();
    let device = ResourceProfile::native("device");
    let edge = ResourceProfile::native("edge");
    let unlimited = NetworkProfile::unlimited();
    let split = SplitId::Interior(2);

    let tl_a = run_experiment(&g, split, Variant::Tl, &device, &edge, &unlimited, 30, 51).unwrap();
    let plain = run_experiment(&g, split, Variant::NoTl, &device, &edge, &unlimited, 30, 51).unwrap();
    assert!(tl_a.median_network_us < 2_000, "network component should nearly vanish, got {}us", tl_a.median_network_us);
    let advantage = plain.median_total_us as i64 - tl_a.median_total_us as i64;
    assert!(
        advantage.abs() < 2_500,
        "without a constrained link the TL advantage should shrink to sub-ms terms, got {advantage}us"
    );

    let tl_b = run_experiment(&g, split, Variant::Tl, &device, &edge, &unlimited, 30, 52).unwrap();
    let (a, b) = (tl_a.median_total_us as f64, tl_b.median_total_us as f64);
    assert!((a - b).abs() <= 0.25 * a.max(b), "repeat medians {a}us vs {b}us drifted beyond 25%");
    println!("offload: unlimited-link advantage {advantage}us, repeat medians {a}us/{b}us");
}

/// Benchmark invariants that are not numbered criteria: the transfer-layer
/// compute stays under 5% of head+tail on the builtin models, and run-to-run
/// stability violations are reported (not failed).
#[test]
fn benchmark_overhead_and_stability_report() {
    let _guard = timing_lock();

    for name in BUILTIN_MODELS {
        let run = bench_builtin(name, 1.0, 1.0, 3);
        for r in run.records.iter().filter(|r| r.tl_eligible) {
            let path = r.device_head_us + r.edge_tail_us;
            assert!(
                r.device_tl_us as f64 <= 0.05 * path as f64 && r.edge_tl_us as f64 <= 0.05 * path as f64,
                "{name} split {}: TL compute {}+{}us vs path {path}us",
                r.split,
                r.device_tl_us,
                r.edge_tl_us
            );
        }
    }

    // Stability gate: report medians drifting more than 25% between runs.
    let a = bench_builtin("tiny-cnn-8", 1.0, 1.0, 3);
    let b = bench_builtin("tiny-cnn-8", 1.0, 1.0, 3);
    let mut reports = Vec::new();
    for (ra, rb) in a.records.iter().zip(b.records.iter()) {
        let fields = [
            ("device_head_us", ra.device_head_us, rb.device_head_us),
            ("edge_tail_us", ra.edge_tail_us, rb.edge_tail_us),
            ("device_tl_us", ra.device_tl_us, rb.device_tl_us),
            ("edge_tl_us", ra.edge_tl_us, rb.edge_tl_us),
        ];
        for (label, va, vb) in fields {
            if va.max(vb) > 50 && (va.abs_diff(vb) as f64) > 0.25 * va.max(1) as f64 {
                reports.push(format!("split {} {label}: {va}us vs {vb}us", ra.split));
            }
        }
    }
    if reports.is_empty() {
        println!("benchmark stability: medians within 25% run-to-run");
    } else {
        for r in &reports {
            println!("benchmark stability REPORT: {r}");
        }
    }
}

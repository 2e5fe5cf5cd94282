use proptest::prelude::*;

use updown::fabric::{Halt, NodeConfig};
use updown::kernels::{build, oracle, oracle_tc, Graph, Kernel, KernelParams, Output};

fn agrees(kernel: Kernel, g: &Graph, params: &KernelParams, shape: (usize, usize)) -> Output {
    let cfg = NodeConfig::with_shape(shape.0, shape.1);
    let run = build(kernel, g, params, &cfg).unwrap().simulate(&cfg).unwrap();
    assert_eq!(run.result.halted, Halt::Quiescent, "{kernel:?} {shape:?}: {:?}", run.result.fault);
    let want = oracle(kernel, g, params);
    if let Err(e) = run.output.check(&want) {
        panic!("{kernel:?} at {shape:?} on n={} m={}: {e}", g.n(), g.m());
    }
    run.output
}

fn fixtures() -> Vec<(&'static str, Graph)> {
    vec![
        ("K1", Graph::from_edges(1, [])),
        ("empty5", Graph::from_edges(5, [])),
        ("K3", Graph::complete(3)),
        ("K4", Graph::complete(4)),
        ("K6", Graph::complete(6)),
        ("P2", Graph::path(2)),
        ("P4", Graph::path(4)),
        ("P9", Graph::path(9)),
        ("star5", Graph::star(5)),
        ("star20", Graph::star(20)),
        ("ring3", Graph::ring(3)),
        ("ring8", Graph::ring(8)),
    ]
}

#[test]
fn fixtures_on_every_kernel() {
    for (name, g) in fixtures() {
        for kernel in Kernel::ALL {
            for shape in [(1, 1), (1, 4), (2, 2)] {
                let params = KernelParams { source: g.n() - 1, iters: 4, ..KernelParams::default() };
                let out = agrees(kernel, &g, &params, shape);
                if matches!(kernel, Kernel::Tc | Kernel::TcCoarse) {
                    let want = match name {
                        "K3" | "ring3" => 1,
                        "K4" => 4,
                        "K6" => 20,
                        _ => 0,
                    };
                    assert_eq!(out, Output::Triangles(want), "{name}");
                }
            }
        }
    }
}

/// Graph `i` of the randomized set: sizes and shapes vary with `i`.
fn randomized(i: u64) -> Graph {
    let n = 30 + (i as usize * 37) % 170;
    let m = (n * (2 + i as usize % 6)).min(n * (n - 1) / 2);
    if i % 3 == 0 {
        Graph::power_law(n, m, 2.2 + (i % 4) as f64 * 0.2, i)
    } else {
        Graph::random(n, m, i)
    }
}

const SHAPES: [(usize, usize); 4] = [(1, 4), (1, 16), (2, 8), (4, 4)];

#[test]
fn tc_on_randomized_graphs() {
    for i in 1..=24 {
        let g = randomized(i);
        let shape = SHAPES[i as usize % 4];
        agrees(Kernel::Tc, &g, &KernelParams::default(), shape);
        agrees(Kernel::TcCoarse, &g, &KernelParams::default(), shape);
    }
}

#[test]
fn bfs_on_randomized_graphs() {
    for i in 1..=24 {
        let g = randomized(i);
        let params = KernelParams { source: i as usize % g.n(), ..KernelParams::default() };
        agrees(Kernel::Bfs, &g, &params, SHAPES[(i as usize + 1) % 4]);
    }
}

#[test]
fn pr_on_randomized_graphs() {
    for i in 1..=24 {
        let g = randomized(i);
        let params = KernelParams { iters: 2 + i as usize % 9, ..KernelParams::default() };
        agrees(Kernel::Pr, &g, &params, SHAPES[(i as usize + 2) % 4]);
    }
}

#[test]
fn js_on_randomized_graphs() {
    for i in 1..=24 {
        let g = randomized(i);
        // Small caches on some graphs push rows onto the streaming path.
        let params = KernelParams { js_cache_words: if i % 4 == 0 { 8 } else { 1024 }, ..KernelParams::default() };
        agrees(Kernel::Js, &g, &params, SHAPES[(i as usize + 3) % 4]);
    }
}

#[test]
fn ten_thousand_edges() {
    let g = Graph::random(2000, 10_000, 77);
    assert!(g.m() <= 10_000);
    agrees(Kernel::Tc, &g, &KernelParams::default(), (2, 16));
    agrees(Kernel::Bfs, &g, &KernelParams { source: 5, ..KernelParams::default() }, (2, 16));
    agrees(Kernel::Pr, &g, &KernelParams { iters: 5, ..KernelParams::default() }, (2, 16));
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn tc_matches_brute_force_on_arbitrary_edge_lists(
        n in 2usize..24,
        edges in prop::collection::vec((0u64..24, 0u64..24), 0..80),
    ) {
        let g = Graph::from_edges(n, edges.into_iter().map(|(a, b)| (a % n as u64, b % n as u64)));
        let cfg = NodeConfig::with_shape(1, 4);
        let run = build(Kernel::Tc, &g, &KernelParams::default(), &cfg).unwrap().simulate(&cfg).unwrap();
        prop_assert_eq!(run.output, Output::Triangles(oracle_tc(&g)));
    }
}

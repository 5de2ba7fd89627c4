use pathdec::graph::{ComplexHypergraph, Incidence, VertexId, WigglyEdge, WILDCARD};
use pathdec::pipeline::{decompose, PipelineConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn unit(g: &mut ComplexHypergraph, u: VertexId, v: VertexId) {
    g.add_wiggly(WigglyEdge {
        ends: [
            Incidence { vertex: u, index: WILDCARD },
            Incidence { vertex: v, index: WILDCARD },
        ],
        len: 1,
    })
    .unwrap();
}

/// Center vertex with loops; petals attached by 4 parallel unit wigglies,
/// each petal carrying its own unit loops.
fn flower(petals: u32, center_loops: u32, petal_loops: u32, ell: u64) -> ComplexHypergraph {
    let mut g = ComplexHypergraph::new(ell);
    g.add_vertex(0);
    for _ in 0..center_loops {
        unit(&mut g, 0, 0);
    }
    for p in 1..=petals {
        g.add_vertex(p);
        for _ in 0..4 {
            unit(&mut g, 0, p);
        }
        for _ in 0..petal_loops {
            unit(&mut g, p, p);
        }
    }
    g
}

#[test]
#[ignore]
fn probe_flower() {
    for (petals, cl, pl, ell) in [
        (3u32, 6u32, 6u32, 2u64),
        (5, 8, 6, 2),
        (4, 8, 12, 3),
        (6, 9, 12, 3),
    ] {
        let g = flower(petals, cl, pl, ell);
        let alpha: u64 = g.alpha();
        if alpha % ell != 0 {
            println!("petals={petals} ell={ell}: skipped, alpha {alpha} not divisible");
            continue;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut cfg = PipelineConfig::desk();
        cfg.mode = pathdec::pipeline::Mode::Pipeline;
        cfg.k = 9;
        let t = std::time::Instant::now();
        match decompose(&g, &cfg, &mut rng) {
            Ok(cert) => println!(
                "petals={petals} ell={ell}: OK, {} paths, {:.2}s",
                cert.len(),
                t.elapsed().as_secs_f64()
            ),
            Err(e) => println!("petals={petals} ell={ell}: FAIL {e}"),
        }
    }
}

#[test]
#[ignore]
fn probe_two_cliques() {
    let m = 181u32;
    let mut g = ComplexHypergraph::new(2);
    for v in 0..2 * m {
        g.add_vertex(v);
    }
    for side in [0, m] {
        for u in side..side + m {
            for v in (u + 1)..side + m {
                unit(&mut g, u, v);
            }
        }
    }
    for i in 0..4 {
        unit(&mut g, i, m + i);
    }
    assert_eq!(g.alpha() % 2, 0);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut cfg = PipelineConfig::desk();
    cfg.mode = pathdec::pipeline::Mode::Pipeline;
    let t = std::time::Instant::now();
    match decompose(&g, &cfg, &mut rng) {
        Ok(cert) => println!("two-clique: OK, {} paths, {:.1}s", cert.len(), t.elapsed().as_secs_f64()),
        Err(e) => println!("two-clique: FAIL {e} ({:.1}s)", t.elapsed().as_secs_f64()),
    }
}

#[test]
#[ignore]
fn probe_odd_clique() {
    let m = 181u32;
    let mut g = ComplexHypergraph::new(3);
    for v in 0..m {
        g.add_vertex(v);
    }
    for u in 0..m {
        for v in (u + 1)..m {
            unit(&mut g, u, v);
        }
    }
    assert_eq!(g.alpha() % 3, 0);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let cfg = pathdec::pipeline::CoreConfig::desk();
    let t = std::time::Instant::now();
    match pathdec::pipeline::decompose_core(&g, &cfg, &mut rng) {
        Ok(cert) => println!("odd clique: OK, {} paths, {:.1}s", cert.len(), t.elapsed().as_secs_f64()),
        Err(e) => println!("odd clique: FAIL {e} ({:.1}s)", t.elapsed().as_secs_f64()),
    }
}

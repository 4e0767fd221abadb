use nalgebra::DMatrix;
use orthosync::graph::GraphMode;
use orthosync::netsim::synth_instance;
use orthosync::ortho::random_orthogonal;
use orthosync::sync::build_undirected_laplacian;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn debug_schur_failure() {
    let inst = synth_instance(5, 3, 0.8, GraphMode::SymmetricConnected, 0.0, 21).unwrap();
    let lu = build_undirected_laplacian(&inst.graph, &inst.transforms).unwrap();
    let nd = 15;
    let eps = 0.1;
    let m = DMatrix::<f64>::identity(nd, nd) - lu.matrix() * eps;
    let mut prev = DMatrix::<f64>::zeros(nd, 3);
    for i in 0..5 {
        prev.view_mut((3 * i, 0), (3, 3))
            .copy_from(&DMatrix::identity(3, 3));
    }
    let mut failures = 0;
    for k in 1..=6 {
        let cur = &m * &prev;
        for i in 0..5 {
            let a = prev.view((3 * i, 0), (3, 3)).into_owned();
            let b = cur.view((3 * i, 0), (3, 3)).into_owned();
            if let Some(ai) = a.clone().try_inverse() {
                let q = ai * &b;
                let schur = nalgebra::Schur::try_new(q.clone(), f64::EPSILON, 10_000);
                if schur.is_none() {
                    failures += 1;
                    println!("k={k} agent={i} SCHUR FAILED on quotient:");
                    for r in 0..3 {
                        println!(
                            "  {:.17e} {:.17e} {:.17e}",
                            q[(r, 0)],
                            q[(r, 1)],
                            q[(r, 2)]
                        );
                    }
                    // Retry under a deterministic orthogonal similarity.
                    for attempt in 0..3u64 {
                        let mut rng = ChaCha8Rng::seed_from_u64(0x5EED + attempt);
                        let rot = random_orthogonal(3, &mut rng);
                        let sim = rot.transpose() * &q * &rot;
                        let s = nalgebra::Schur::try_new(sim, f64::EPSILON, 10_000);
                        println!("  retry {attempt}: {}", s.is_some());
                        if let Some(s) = s {
                            println!("  eigenvalues: {:?}", s.complex_eigenvalues());
                            break;
                        }
                    }
                }
            }
        }
        prev = cur;
    }
    println!("total failures: {failures}");
}

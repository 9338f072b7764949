//! Pipeline benchmarks: sparse factorization, a single machine step, and
//! whole transient runs of the linear and nonlinear reference cases.

use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use emt_core::engine::{run_transient, SolverConfig};
use emt_core::netlist::parse_netlist;
use emt_core::sparse::{CscMatrix, LuFactors};

const RL_3PHASE: &str = "\
VSIN Va 1a 0 169.7 60 0
VSIN Vb 1b 0 169.7 60 -120
VSIN Vc 1c 0 169.7 60 120
R Rla 1a 2a 1.0
R Rlb 1b 2b 1.0
R Rlc 1c 2c 1.0
L La 2a 0 5m
L Lb 2b 0 5m
L Lc 2c 0 5m
.tran 2e-5 16.7m
.end
";

const IM_BUS: &str = "\
VSIN Va 1 0 100 60 0
VSIN Vb 2 0 100 60 120
VSIN Vc 3 0 100 60 -120
IM M1 1 2 3 rs=0.435 rr=0.816 lls=2m llr=2m lm=69.3m j=0.089 d=0.01 np=4
.tran 2e-5 20m 1e-7 1e-4 1e-4
.end
";

fn fixed_cfg(dt: f64, t_stop: f64) -> SolverConfig {
    SolverConfig {
        dt0: dt,
        t_stop,
        dt_min: dt,
        dt_max: dt,
        lte_tol: 1e9,
        nr_tol_dx: 1e-8,
        nr_tol_resid: 1e-6,
        nr_max_iter: 50,
    }
}

fn bench_sparse_lu(c: &mut Criterion) {
    // Representative 14x14 MNA pattern: conductance band plus source and
    // machine couplings off the diagonal.
    let n = 14;
    let mut trips = Vec::new();
    for i in 0..n {
        trips.push((i, i, 2.0 + i as f64 * 0.1));
        if i + 1 < n {
            trips.push((i, i + 1, -1.0));
            trips.push((i + 1, i, -1.0));
        }
    }
    trips.push((0, n - 1, 0.5));
    trips.push((n - 1, 0, 0.5));
    let m = CscMatrix::from_triplets(n, &trips).unwrap();
    let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
    c.bench_function("lu_factorize_solve_14", |bench| {
        bench.iter(|| {
            let f = LuFactors::factorize(black_box(&m)).unwrap();
            black_box(f.solve(black_box(&b)))
        })
    });
}

fn bench_rl_transient(c: &mut Criterion) {
    let circuit = parse_netlist(RL_3PHASE).unwrap();
    let cfg = fixed_cfg(2e-5, 16.7e-3);
    c.bench_function("rl_3phase_one_period_fixed_dt", |bench| {
        bench.iter(|| black_box(run_transient(black_box(&circuit), &cfg).unwrap()))
    });
}

fn bench_im_transient(c: &mut Criterion) {
    let circuit = parse_netlist(IM_BUS).unwrap();
    let cfg = SolverConfig::from_tran(&circuit.tran);
    c.bench_function("im_stiff_bus_20ms_adaptive", |bench| {
        bench.iter(|| black_box(run_transient(black_box(&circuit), &cfg).unwrap()))
    });
}

criterion_group!(benches, bench_sparse_lu, bench_rl_transient, bench_im_transient);
criterion_main!(benches);

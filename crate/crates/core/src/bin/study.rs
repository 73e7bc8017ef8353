//! Dev study: reconstruction quality and solver cost at configurable
//! resolution. Not part of the shipped CLI surface.

use elastirec::basis::{coupling_matrix, TimeBasis};
use elastirec::config::RunConfig;
use elastirec::elasticity::VectorField;
use elastirec::pipeline::run_forward;
use elastirec::presets::TestCase;
use elastirec::recon::{metrics, reconstruct_initial};
use elastirec::reduction::{assemble, modal_boundary_data, BoundaryMask, ModalSolution};
use elastirec::solver::{relative_normal_residual, IterativeLsq, LsqrState, Preconditioner};
use std::time::Instant;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let get = |name: &str, default: f64| -> f64 {
        args.iter()
            .position(|a| a == name)
            .and_then(|i| args.get(i + 1))
            .and_then(|v| v.parse().ok())
            .unwrap_or(default)
    };
    let cfg = RunConfig {
        test: format!("test{}", get("--test", 1.0) as u32),
        grid_nodes: get("--grid", 121.0) as usize,
        order: get("--order", 30.0) as usize,
        steps: get("--steps", 6400.0) as usize,
        delta: get("--delta", 0.1),
        eta: get("--eta", 1e-6),
        seed: get("--seed", 7.0) as u64,
        boundary_fraction: get("--bf", 1.0),
        ..Default::default()
    };
    let max_iter = get("--maxiter", 100_000.0) as usize;
    let burst = get("--burst", 10_000.0) as usize;
    eprintln!(
        "study: {} grid={} order={} steps={} delta={} eta={:.0e}",
        cfg.test, cfg.grid_nodes, cfg.order, cfg.steps, cfg.delta, cfg.eta
    );

    let t0 = Instant::now();
    let fwd = run_forward(&cfg).unwrap();
    eprintln!("forward: {:.1?}s", t0.elapsed());

    let case = TestCase::from_label(&cfg.test).unwrap();
    let field = case.medium().unwrap();
    let omega = fwd.traces.omega.clone();
    let t0 = Instant::now();
    let trap = TimeBasis::on_time_grid(cfg.t_final, cfg.order, fwd.traces.n_steps).unwrap();
    let mask = BoundaryMask::contiguous_arc(fwd.traces.nodes.len(), cfg.boundary_fraction);
    let data = modal_boundary_data(&fwd.traces, &trap, mask).unwrap();
    let gauss = TimeBasis::gauss(cfg.t_final, cfg.order).unwrap();
    let coupling = coupling_matrix(&gauss);
    let sys = assemble(&field, &omega, &coupling, &data, cfg.eta).unwrap();
    eprintln!(
        "assembly: {:.1?} rows={} cols={} nnz={}",
        t0.elapsed(),
        sys.n_rows(),
        sys.n_cols(),
        sys.n_entries()
    );

    let truth_p = VectorField::from_fn(&omega, case.displacement_fn());
    let truth_q = VectorField::from_fn(&omega, case.velocity_fn());

    let precond = match get("--precond", 2.0) as u32 {
        0 => Preconditioner::None,
        1 => Preconditioner::Jacobi,
        _ => Preconditioner::ModeBlockJacobi,
    };
    eprintln!("preconditioner: {precond:?}");
    let t0 = Instant::now();
    let mut state = LsqrState::new(&sys, precond).unwrap();
    eprintln!("precond setup: {:.1?}", t0.elapsed());
    let t0 = Instant::now();
    let mut done = 0;
    while done < max_iter {
        for _ in 0..burst.min(max_iter - done) {
            state.step();
        }
        done = state.iterations;
        let x = state.solution();
        let resid = relative_normal_residual(&sys, &x);
        let sol = ModalSolution::from_coeffs(sys.layout, x);
        let (p, q) = reconstruct_initial(&sol, &gauss).unwrap();
        let labels = ["p1", "p2", "q1", "q2"];
        let ms = [
            metrics(&p.component(0), &truth_p.component(0)),
            metrics(&p.component(1), &truth_p.component(1)),
            metrics(&q.component(0), &truth_q.component(0)),
            metrics(&q.component(1), &truth_q.component(1)),
        ];
        let mut line = format!(
            "it={done} t={:.0}s resid={resid:.2e} ",
            t0.elapsed().as_secs_f64()
        );
        for (l, m) in labels.iter().zip(&ms) {
            line += &format!(
                "{l}: {:.1}%/{:.0}%/{:.2} ",
                100.0 * m.max_relative_error,
                100.0 * m.l2_relative_error,
                m.support_iou
            );
        }
        println!("{line}");
    }
}

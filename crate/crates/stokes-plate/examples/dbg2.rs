use stokes_plate::*;
use stokes_plate::resolvent::*;
use stokes_plate::stokes::StokesSolver;

fn main() {
    let beta = 1.5;
    let mut gaps = Vec::new();
    for n in [8usize, 12, 16, 24] {
        let gen = assemble_generator(GeometryConfig::new(DimMode::Analogue2d, n), 0.0).unwrap();
        let stokes = StokesSolver::new(gen.core.clone());
        let data = gen.smooth_state().to_complex();
        let sol = solve_resolvent(&gen, beta, &data).unwrap();
        let report = auxiliary_lift_diagnostic(&gen, &stokes, &sol).unwrap();
        let scale = report.interface_side.norm().max(report.volume_side.norm()).max(1e-300);
        gaps.push(report.gap / scale);
        println!("n={n}: iface={:?} vol={:?} relgap={:.4e}", report.interface_side, report.volume_side, report.gap/scale);
    }
    for w in gaps.windows(2) { println!("ratio {:.3}", w[0]/w[1]); }
}

use metapop_core::landscape::FiniteChain;
use metapop_core::meanfield::*;
use metapop_core::patch::*;
use metapop_core::sim::*;
use metapop_core::Landscape;

fn main() {
    let chain = FiniteChain::new(vec!["only".into()], nalgebra::DMatrix::from_row_slice(1,1,&[1.0]), vec![1.0]).unwrap();
    let landscape = Landscape::Finite(chain);
    let traits = PatchTraits::phase_exponential(ThetaMap::Constant(0.5), 10.0);
    let kernel = DispersalKernel::new(1.0).unwrap();
    let domain = SpatialDomain::interval(0.0, 10.0).unwrap();
    let state = init_metapop(80, &domain, &landscape, |_, _| 0.5, 808).unwrap();
    let summary = run_occupancy(&state, 20_000, 0, &traits, &kernel, &landscape, 808).unwrap();
    let mean = summary.proportions.iter().sum::<f64>() / 80.0;
    println!("mean prop {mean:.4}");
    let mut pairs: Vec<(f64, f64, f64)> = summary.locations.iter().zip(&summary.proportions).zip(&summary.stderr)
        .map(|((z, &p), &se)| (z[0], p, se)).collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    for (z, p, se) in pairs.iter().take(8) { println!("z={z:.2} p={p:.4} se={se:.4}"); }
    println!("...");
    for (z, p, se) in pairs.iter().rev().take(8) { println!("z={z:.2} p={p:.4} se={se:.4}"); }
}

//! Fit a scene-to-world transform from noisy control points and report the
//! recovered parameters for both model kinds.
//!
//!     cargo run --example georef_fit [noise_m]

use geoprog::georef::{estimate_transform, ControlPoint, ControlPointSet, GeoTransform, TransformKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let noise: f64 = std::env::args().nth(1).map_or(Ok(0.05), |s| s.parse())?;
    let truth = GeoTransform::from_similarity(2.5, 0.3, [431_250.0, 5_412_800.0]);
    let mut rng = ChaCha8Rng::seed_from_u64(3);

    let pairs = (0..12)
        .map(|_| {
            let scene = [rng.random_range(-100.0..100.0), rng.random_range(-100.0..100.0)];
            let w = truth.to_world(scene);
            let jitter = [rng.random_range(-noise..=noise), rng.random_range(-noise..=noise)];
            ControlPoint { scene, world: [w[0] + jitter[0], w[1] + jitter[1]] }
        })
        .collect();
    let points = ControlPointSet::new(pairs);

    println!("truth       scale {:.6}  rotation {:.6} rad", truth.scale(), truth.rotation());
    for kind in [TransformKind::Similarity, TransformKind::Affine] {
        let fit = estimate_transform(&points, kind)?;
        let probe = [37.0, -12.0];
        let back = fit.to_scene(fit.to_world(probe));
        println!(
            "{:10}  scale {:.6}  rotation {:.6} rad  rmse {:.4} m  round trip {:.1e}",
            format!("{kind:?}"),
            fit.scale(),
            fit.rotation(),
            fit.residual_rmse,
            ((back[0] - probe[0]).powi(2) + (back[1] - probe[1]).powi(2)).sqrt()
        );
    }

    // two points cannot pin down an affine map
    let few = ControlPointSet::new(points.pairs[..2].to_vec());
    if let Err(e) = estimate_transform(&few, TransformKind::Affine) {
        println!("with 2 points: {e}");
    }
    Ok(())
}

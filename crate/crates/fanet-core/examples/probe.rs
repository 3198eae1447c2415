use fanet_core::image::{GrayImage, Plane};
use fanet_core::iqa::{brisque_features, fit::fit_ggd};
use fanet_core::iqa::mscn_map;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn gauss_img(n: usize, std: f64, seed: u64) -> GrayImage<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    GrayImage::<f64>::from_fn(n, n, |_, _| {
        let u1: f64 = rng.random::<f64>().max(1e-12);
        let u2: f64 = rng.random();
        let g = (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
        (0.5 + std * g).clamp(0.0, 1.0)
    })
    .unwrap()
}

fn main() {
    for (n, std, seed) in [(64, 0.15, 5u64), (256, 0.10, 5), (256, 0.05, 9), (512, 0.10, 3)] {
        let img = gauss_img(n, std, seed);
        let m = mscn_map(&img, 7).unwrap();
        let fit = fit_ggd(&m.data).unwrap();
        println!("n={n} std={std}: alpha={:.4} sigma={:.4}", fit.alpha, fit.sigma);
    }
    // window 9 and 11 for comparison
    for w in [9usize, 11, 15] {
        let img = gauss_img(256, 0.10, 5);
        let m = mscn_map(&img, w).unwrap();
        let fit = fit_ggd(&m.data).unwrap();
        println!("window {w}: alpha={:.4}", fit.alpha);
    }
    let _ = (brisque_features::<f64>, Plane::<f64>::zeros);
}

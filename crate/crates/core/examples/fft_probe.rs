use std::time::Instant;

use nsstat_core::spectral::{bilinear_b, SpectralField, WaveVectorLattice};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let lattice = WaveVectorLattice::cubic_2pi(32).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let u = SpectralField::random_div_free(lattice.clone(), None, &mut rng);
    let v = SpectralField::random_div_free(lattice.clone(), None, &mut rng);

    let t = Instant::now();
    let mut acc = 0.0;
    for _ in 0..20 {
        acc += u.to_physical()[0][0];
    }
    println!("to_physical (3 ffts): {:?}/call  ({acc:.3e})", t.elapsed() / 20);

    let t = Instant::now();
    let mut s = 0.0;
    for _ in 0..20 {
        s += bilinear_b(&u, &v).unwrap().max_coeff();
    }
    println!("bilinear_b: {:?}/call  ({s:.3e})", t.elapsed() / 20);

    let t = Instant::now();
    let mut s2 = 0.0;
    for _ in 0..50 {
        s2 += u.norm_h1();
    }
    println!("norm_h1: {:?}/call ({s2:.3e})", t.elapsed() / 50);

    let t = Instant::now();
    let mut s3 = 0.0;
    for _ in 0..20 {
        s3 += u.norms().linf;
    }
    println!("norms(): {:?}/call ({s3:.3e})", t.elapsed() / 20);
}

use deconv_core::dist::mvmf::{mvmf_expected_diag, mvmf_sample, MvMFParams};
use deconv_core::rotation::rotation_diagonal;
use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let x = DVector::from_vec(vec![2.0, 3.0, 5.0]);
    for kscale in [60.0, 180.0] {
        let f: Vec<f64> = x.iter().map(|&v| kscale / v).collect();
        let params = MvMFParams::new(f.clone()).unwrap();
        let ediag = mvmf_expected_diag(&params).unwrap();
        const N: usize = 200_000;
        let mut gbar = vec![0.0; 3];
        let mut diag = vec![0.0; 3];
        let mut dg = vec![0.0; 3];
        for _ in 0..N {
            let q = mvmf_sample(&params, &mut rng);
            let z = &q * &x; // r = 1 irrelevant: G invariant to scale of z
            rotation_diagonal(&z, &x, &mut dg).unwrap();
            for l in 0..3 {
                gbar[l] += dg[l];
                diag[l] += q[(l, l)];
            }
        }
        for l in 0..3 {
            gbar[l] /= N as f64;
            diag[l] /= N as f64;
        }
        println!("kappa={:?}", f);
        println!("  E[G_ll(z,x)] = {gbar:?}");
        println!("  E[Q_ll]      = {diag:?}");
        println!("  model E(Q|k) = {ediag:?}");
    }
}

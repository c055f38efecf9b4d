use frontier::estimators::{fit_cap, fit_cap_collection, CapNlsParams};
use frontier::simlab::{generate, DGPSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn run(sigma: f64, seed0: u64, reps: u64) {
    let dgp = DGPSpec::bivariate(sigma);
    let mut sum_f = 0.0;
    let mut sum_k = 0.0;
    for r in 0..reps {
        let data = generate(&dgp, 100, &mut ChaCha8Rng::seed_from_u64(seed0 + r)).unwrap();
        let f = data.true_frontier().unwrap().clone();
        let mut params = CapNlsParams::default_for(2);
        params.rng_seed = seed0 + 50 + r;
        params.max_k = Some(16);
        let (coll, _scores) = fit_cap_collection(&data, &params).unwrap();
        let sel = fit_cap(&data, &params).unwrap();
        let fitted = sel.predict(data.inputs()).unwrap();
        let mse_sel = (&fitted - &f).norm_squared() / 100.0;
        sum_f += mse_sel;
        sum_k += sel.k() as f64;
        print!("r={r} sel K={} f={:.4} | per-K:", sel.k(), mse_sel);
        for e in coll.entries.iter() {
            let fitted = e.model.predict(data.inputs()).unwrap();
            let mse_f = (&fitted - &f).norm_squared() / 100.0;
            print!(" [K={} lm={:.4} f={:.4}]", e.k, e.learning_mse, mse_f);
        }
        println!();
    }
    println!(
        "sigma={sigma}: mean f={:.5} mean K={:.2}",
        sum_f / reps as f64,
        sum_k / reps as f64
    );
}

#[test]
#[ignore]
fn cap_sigma02() {
    run(0.2, 8100, 16);
    run(0.1, 8300, 16);
}

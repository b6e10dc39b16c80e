use expander_cs::channel::*;
use expander_cs::expander::{cover_set, generate_graph, CoverSet, ExpanderParams};
use expander_cs::recon::*;
use expander_cs::rng::stream_rng;
use rand::seq::index;
use rand::Rng;

/// First graph from `seed` onward whose rows can all be covered.
fn setup(n: usize, m: usize, d: usize, seed: u64) -> (SensingMatrix, CoverSet) {
    let p = ExpanderParams::new(n, m, d, 0.25, 1).unwrap();
    (seed..)
        .find_map(|s| {
            let g = generate_graph(&p, s).unwrap();
            cover_set(&g).ok().map(|c| (SensingMatrix::new(g), c))
        })
        .unwrap()
}

fn spikes(n: usize, k: usize, intensity: f64, seed: u64) -> Signal {
    let mut rng = stream_rng(seed, 77);
    let mut a = vec![0.0; n];
    for i in index::sample(&mut rng, n, k) {
        a[i] = intensity;
    }
    Signal::new(a).unwrap()
}

fn rel_l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.iter().sum::<f64>()
}

#[test]
fn gradient_matches_central_differences() {
    let (phi, cover) = setup(60, 30, 4, 1);
    let alpha = spikes(60, 5, 50.0, 1);
    let y = sample_poisson(&phi.apply_signal(&alpha).unwrap(), 2);
    let obj = PoissonObjective::new(&phi, &y, 0.01, &cover).unwrap();
    let mut rng = stream_rng(3, 0);
    for _ in 0..20 {
        let f: Vec<f64> = (0..60).map(|_| rng.random_range(0.5..20.0)).collect();
        let grad = obj.gradient(&f);
        let mut fd = vec![0.0; 60];
        for i in 0..60 {
            let h = 1e-5 * f[i];
            let (mut up, mut dn) = (f.clone(), f.clone());
            up[i] += h;
            dn[i] -= h;
            fd[i] = (obj.value(&up) - obj.value(&dn)) / (2.0 * h);
        }
        let num: f64 = grad.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let den: f64 = grad.iter().map(|a| a * a).sum::<f64>().sqrt();
        assert!(num / den < 1e-5, "relative gradient error {}", num / den);
    }
}

#[test]
fn objective_trace_never_increases() {
    let (phi, cover) = setup(400, 160, 6, 4);
    for (s, &(k, intensity, tau)) in [(3, 10.0, 0.1), (10, 1000.0, 0.001), (20, 100.0, 0.05), (1, 1e5, 1.0)]
        .iter()
        .enumerate()
    {
        let alpha = spikes(400, k, intensity, s as u64);
        let y = sample_poisson(&phi.apply_signal(&alpha).unwrap(), s as u64);
        let r = solve_map(&phi, &y, &ReconConfig::new(1e-3, tau), &cover).unwrap();
        assert!(r.objective_trace.windows(2).all(|w| w[1] <= w[0]), "trace rose for case {s}");
    }
}

#[test]
fn zero_counts_with_large_weight_give_zero_signal() {
    let (phi, cover) = setup(50, 20, 3, 5);
    let y = Measurement::new(vec![0; 20]);
    let r = solve_map(&phi, &y, &ReconConfig::new(0.01, 10.0), &cover).unwrap();
    assert!(r.f_hat.iter().all(|&v| v == 0.0));
    assert!(r.converged);
}

#[test]
fn recovered_signal_stays_in_the_shifted_band() {
    let (phi, cover) = setup(300, 120, 5, 6);
    let lambda = 0.002;
    for s in 0..5u64 {
        let alpha = spikes(300, 4, 200.0, s);
        let y = sample_poisson(&phi.apply_signal(&alpha).unwrap(), s);
        let r = solve_map(&phi, &y, &ReconConfig::new(lambda, 0.01), &cover).unwrap();
        let mass: f64 = phi.apply(&r.x_hat).unwrap().iter().sum();
        let (m, d) = (120.0, 5.0);
        assert!(mass >= lambda * m / d - 1e-9);
        assert!((mass - (r.f_hat.l1() + lambda * cover.len() as f64)).abs() < 1e-9 * (1.0 + mass));
        assert!(mass <= r.f_hat.l1() + lambda * m + 1e-9);
        let floor = lambda / d;
        assert!(phi.apply(&r.x_hat).unwrap().iter().all(|&v| v >= floor * (1.0 - 1e-12)));
        let back: Vec<f64> = r.x_hat.iter().zip(cover.indicator()).map(|(x, c)| x - lambda * c).collect();
        assert!(back.iter().zip(r.f_hat.iter()).all(|(a, b)| (a - b).abs() < 1e-12));
    }
}

#[test]
fn desk_scale_high_intensity_recovery() {
    let (phi, cover) = setup(5000, 2000, 8, 7);
    let alpha = spikes(5000, 5, 1e6 / 5.0, 7);
    let y = sample_poisson(&phi.apply_signal(&alpha).unwrap(), 8);
    let mean_y = y.total() as f64 / y.len() as f64;
    let tau = expander_cs::experiment::tau_base(mean_y);
    let cfg = ReconConfig::new(default_lambda(5000, Some(5)), tau);
    let r = solve_map(&phi, &y, &cfg, &cover).unwrap();
    let err = rel_l1(&alpha, &r.x_hat);
    assert!(err < 0.05, "normalized error {err}");
}

fn unit(n: usize, i: usize) -> Signal {
    let mut v = vec![0.0; n];
    v[i] = 1.0;
    Signal::new(v).unwrap()
}

#[test]
fn enumerated_decoder_picks_the_true_candidate_at_high_intensity() {
    let (phi, cover) = setup(12, 8, 3, 9);
    let set = CandidateSet::new(vec![unit(12, 0), unit(12, 1)], 0.01, cover).unwrap();
    let scaled = Signal::new((0..12).map(|i| if i == 0 { 1e4 } else { 0.0 }).collect()).unwrap();
    for s in 0..10 {
        let y = sample_poisson(&phi.apply_signal(&scaled).unwrap(), s);
        let r = solve_map_enumerated(&phi, &y, &set, &Penalty::Uniform { value: 2f64.ln() }).unwrap();
        assert_eq!(r.candidate, Some(0));
        assert_eq!(&*r.x_hat, &*set.gamma()[0]);
    }
}

#[test]
fn enumerated_decoder_matches_exhaustive_oracle() {
    let mut rng = stream_rng(10, 0);
    for trial in 0..40u64 {
        let (phi, cover) = setup(10, 6, 2, trial);
        let size = rng.random_range(1..=64);
        let theta: Vec<Signal> = (0..size)
            .map(|_| {
                let v: Vec<f64> = (0..10).map(|_| if rng.random_bool(0.3) { rng.random::<f64>() } else { 0.0 }).collect();
                let v = if v.iter().sum::<f64>() == 0.0 { unit(10, 0).to_vec() } else { v };
                let s: f64 = v.iter().sum();
                Signal::new(v.into_iter().map(|x| x / s).collect()).unwrap()
            })
            .collect();
        let lambda = 0.02;
        let set = CandidateSet::new(theta.clone(), lambda, cover.clone()).unwrap();
        let pen = Penalty::L1 { weight: rng.random_range(0.0..2.0) + 1e-3 };
        let truth = Signal::new(theta[0].iter().map(|v| v * 30.0).collect()).unwrap();
        let y = sample_poisson(&phi.apply_signal(&truth).unwrap(), trial);
        let r = solve_map_enumerated(&phi, &y, &set, &pen).unwrap();
        // independent objective: shift by hand, evaluate Σ μ − y ln μ + 2 pen(f)
        let mut best = (usize::MAX, f64::INFINITY);
        for (c, f) in theta.iter().enumerate() {
            let mut x = f.to_vec();
            for &i in cover.indices() {
                x[i] += lambda;
            }
            let mu = phi.apply(&x).unwrap();
            let nll: f64 = mu.iter().zip(y.counts()).map(|(m, &k)| m - k as f64 * m.ln()).sum();
            let v = nll + 2.0 * pen.value(f);
            if v < best.1 {
                best = (c, v);
            }
        }
        assert_eq!(r.candidate, Some(best.0), "trial {trial}");
    }
}

#[test]
fn candidate_set_rejects_non_unit_members() {
    let (_, cover) = setup(12, 8, 3, 11);
    let half = Signal::new((0..12).map(|i| if i == 0 { 0.5 } else { 0.0 }).collect()).unwrap();
    assert!(CandidateSet::new(vec![half], 0.01, cover.clone()).is_err());
    assert!(CandidateSet::new(vec![unit(12, 3)], 0.0, cover).is_err());
}

fn choose(n: u64, k: u64) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

#[test]
fn support_code_kraft_sum_matches_closed_form_and_brute_force() {
    for n in 1..=10usize {
        for bits in 0..=3u32 {
            let sum = support_code_kraft_sum(n, bits);
            let q = 1.0 / (2.0 * n as f64);
            let closed = q * (1.0 + q).powi(n as i32);
            assert!((sum - closed).abs() < 1e-12 * closed, "n={n} B={bits}");
            let by_size: f64 = (0..=n as u64)
                .map(|s| choose(n as u64, s) * 2f64.powi((bits as u64 * s) as i32) * (-((s + 1) as f64 * (2.0 * n as f64).ln() + (s * bits as u64) as f64 * 2f64.ln())).exp())
                .sum();
            assert!((sum - by_size).abs() < 1e-12);
            assert!(sum <= 1.0);
        }
    }
    // every quantized vector, one at a time
    for n in 1..=5usize {
        for bits in 0..=2u32 {
            let levels = 1usize << bits;
            let pen = Penalty::SupportCode { bits };
            let mut total = 0.0;
            let mut digits = vec![0usize; n];
            loop {
                let x: Vec<f64> = digits.iter().map(|&d| d as f64).collect();
                total += (-pen.value(&x)).exp();
                let mut pos = 0;
                while pos < n && digits[pos] == levels {
                    digits[pos] = 0;
                    pos += 1;
                }
                if pos == n {
                    break;
                }
                digits[pos] += 1;
            }
            assert!((total - support_code_kraft_sum(n, bits)).abs() < 1e-12, "n={n} B={bits}");
        }
    }
}

#[test]
fn map_objective_examples() {
    let (phi, cover) = setup(12, 8, 3, 12);
    let zero = Signal::zeros(12);
    let y0 = Measurement::new(vec![0; 8]);
    assert_eq!(map_objective(&phi, &y0, &zero, &Penalty::L1 { weight: 1.0 }).unwrap(), 0.0);
    let x = shift_to_gamma(&zero, 0.01, &cover).unwrap();
    let y = Measurement::new(vec![5; 8]);
    assert!(map_objective(&phi, &y, &x, &Penalty::L1 { weight: 1.0 }).unwrap().is_finite());
}

//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use hierspin::hierarchy::{self, build_laplacian, projector, LatticeShape, ReflectionPlane};
use hierspin::mc::{self, McConfig};
use hierspin::rgflow::{self, Components, FlowState};
use hierspin::spectral::{self, SpectralModel};
use hierspin::spherical;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = std::result::Result<String, String>;

fn ensure(ok: bool, msg: String) -> Check {
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |a, v| a.max(v.abs()))
}

fn criterion_1() -> Check {
    let mut worst_ev = 0.0f64;
    let mut worst_kernel = 0.0f64;
    let mut worst_proj = 0.0f64;
    for (l, d, k) in [(2, 1, 3), (2, 2, 2), (3, 1, 2), (2, 3, 2)] {
        let sh = LatticeShape::new(l, d, k).map_err(|e| e.to_string())?;
        let n = sh.sites();
        let lap = build_laplacian(&sh).dense().map_err(|e| e.to_string())?;
        let mut dense: Vec<f64> = lap.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
        dense.sort_by(f64::total_cmp);
        // Closed form λ_k with multiplicities, expanded and sorted.
        let mut closed = Vec::new();
        for level in 0..=k {
            let lam = spectral::eigenvalue(level, &sh).map_err(|e| e.to_string())?;
            let mult = spectral::multiplicity(level, &sh).map_err(|e| e.to_string())?;
            closed.extend(std::iter::repeat_n(lam, mult));
        }
        closed.sort_by(f64::total_cmp);
        if closed.len() != n {
            return Err(format!("multiplicities of ({l},{d},{k}) sum to {}, not {n}", closed.len()));
        }
        worst_ev = closed.iter().zip(&dense).map(|(a, b)| (a - b).abs()).fold(worst_ev, f64::max);
        let ones = build_laplacian(&sh).apply(&vec![1.0; n]).map_err(|e| e.to_string())?;
        worst_kernel = ones.iter().fold(worst_kernel, |a, v| a.max(v.abs()));
        let q: Vec<DMatrix<f64>> = (0..=k)
            .map(|j| projector(&sh, j, true).and_then(|p| p.dense()))
            .collect::<Result<_, _>>()
            .map_err(|e| e.to_string())?;
        for i in 0..=k {
            for j in 0..=k {
                let target = if i == j { q[i].clone() } else { DMatrix::zeros(n, n) };
                worst_proj = worst_proj.max(max_abs(&(&q[i] * &q[j] - target)));
            }
        }
        let sum = q.iter().fold(DMatrix::zeros(n, n), |a, m| a + m);
        worst_proj = worst_proj.max(max_abs(&(sum - DMatrix::identity(n, n))));
    }
    ensure(
        worst_ev < 1e-10 && worst_kernel < 1e-12 && worst_proj < 1e-12,
        format!("eigen dev {worst_ev:.1e} (<1e-10), -Lap 1 {worst_kernel:.1e} (<1e-12), projector algebra {worst_proj:.1e} (<1e-12)"),
    )
}

fn criterion_2() -> Check {
    let model = SpectralModel::infinite_k(2.0, 3.0).map_err(|e| e.to_string())?;
    let bc = spherical::beta_c(&model).map_err(|e| e.to_string())?;
    // Partial sums of Σ_k (1 − L^{−d}) L^{−dk} / λ_k, λ_k = L^{−2k}/(L² − 1).
    let mut partial = 0.0;
    for k in 0..200 {
        let lam = 2f64.powi(-2 * k) / 3.0;
        partial += (1.0 - 0.125) * 2f64.powi(-3 * k) / lam;
    }
    let mut worst = (bc - 5.25).abs().max((partial - 5.25).abs());
    let near_zero = model.expectation_nonzero(|lam| 1.0 / lam).map_err(|e| e.to_string())?;
    worst = worst.max((near_zero - partial).abs());
    let mut detail = format!("infinite-K 5.25 dev {worst:.1e}");
    for d in [3.0, 4.0, 5.0] {
        let m = SpectralModel::continuum(d, f64::INFINITY).map_err(|e| e.to_string())?;
        let quad = m.expectation_nonzero(|lam| 1.0 / lam).map_err(|e| e.to_string())?;
        let exact = 2.0 * d / (d - 2.0);
        let dev = (quad - exact).abs();
        worst = worst.max(dev);
        detail.push_str(&format!(", continuum d={d} dev {dev:.1e}"));
    }
    ensure(worst < 1e-8, format!("{detail} (<1e-8)"))
}

fn criterion_3() -> Check {
    let model = SpectralModel::continuum(4.0, f64::INFINITY).map_err(|e| e.to_string())?;
    let beta = 4.0 * (1.0 - 2f64.ln());
    let mu = spherical::solve_mu(beta, &model).map_err(|e| e.to_string())?.mu;
    let dev = (mu + 0.5).abs();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let b = rng.random_range(0.1..3.9);
        let generic = spherical::solve_mu(b, &model).map_err(|e| e.to_string())?.mu;
        let special = spherical::solve_mu_d4(b).map_err(|e| e.to_string())?;
        worst = worst.max((generic - special).abs());
    }
    ensure(dev < 1e-8 && worst < 1e-10, format!("mu dev {dev:.1e} (<1e-8), solver agreement {worst:.1e} (<1e-10)"))
}

fn criterion_4() -> Check {
    let model = SpectralModel::continuum(4.0, f64::INFINITY).map_err(|e| e.to_string())?;
    let h = 1e-5;
    let mut worst = 0.0f64;
    for i in 0..10 {
        let beta = 0.1 + (0.9 * 4.0 - 0.1) * (i as f64 + 0.5) / 10.0;
        let f = |b: f64| spherical::free_energy(b, &model).map_err(|e| e.to_string());
        let fd = (f(beta + h)? - f(beta - h)?) / (2.0 * h);
        let mu = spherical::solve_mu(beta, &model).map_err(|e| e.to_string())?.mu;
        worst = worst.max((fd + (mu + 1.0 / beta) / 2.0).abs());
    }
    ensure(worst < 1e-6, format!("max |df/dbeta + (mu + 1/beta)/2| = {worst:.1e} (<1e-6)"))
}

fn criterion_5() -> Check {
    let model = SpectralModel::continuum(4.0, f64::INFINITY).map_err(|e| e.to_string())?;
    let beta = 2.0;
    let limit = spherical::mgf(beta, 1.0, &model).map_err(|e| e.to_string())?.ln();
    let err = |n: f64| -> Result<f64, String> {
        Ok((spherical::log_mgf_finite_n(beta, 1.0, n, &model).map_err(|e| e.to_string())? - limit).abs())
    };
    let mut ratios = Vec::new();
    let mut n = 1e3;
    let mut prev = err(n)?;
    while n < 6.4e4 {
        n *= 2.0;
        let e = err(n)?;
        ratios.push(e / prev);
        prev = e;
    }
    let ok = ratios.iter().all(|r| (0.4..=0.6).contains(r));
    let lo = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = ratios.iter().cloned().fold(0.0, f64::max);
    ensure(ok, format!("{} ratios in [{lo:.4}, {hi:.4}] (need [0.4, 0.6])", ratios.len()))
}

fn criterion_6() -> Check {
    let inf = Components::Infinite;
    let s = FlowState::new(vec![-1.0, 0.0, 0.0, 0.0, 0.0, 0.0], inf, 4.0).map_err(|e| e.to_string())?;
    let traj = rgflow::lpa_flow(&s, 5.0, 50).map_err(|e| e.to_string())?;
    let stat = traj
        .samples
        .iter()
        .map(|st| (st.coeffs[0] + 1.0).abs().max(st.coeffs[1..].iter().fold(0.0, |a, c| a.max(c.abs()))))
        .fold(0.0, f64::max);
    let mut logistic = 0.0f64;
    for a0 in [0.5, 0.9, 1.1] {
        let st = FlowState::new(vec![-a0], inf, 4.0).map_err(|e| e.to_string())?;
        let out = rgflow::lpa_flow(&st, 1.0, 1).map_err(|e| e.to_string())?;
        let exact = a0 / (a0 + (1.0 - a0) * 2f64.exp());
        logistic = logistic.max((out.last().coeffs[0] + exact).abs());
    }
    let mut fixed = 0.0f64;
    for l in [2.0f64, 3.0] {
        let star = -(l * l - 1.0);
        let st = FlowState::new(vec![star], inf, 3.0).map_err(|e| e.to_string())?;
        let out = rgflow::rg_step(&st, l).map_err(|e| e.to_string())?;
        fixed = fixed.max((out.coeffs[0] - star).abs());
    }
    ensure(
        stat < 1e-8 && logistic < 1e-6 && fixed < 1e-8,
        format!("stationary dev {stat:.1e} (<1e-8), logistic dev {logistic:.1e} (<1e-6), fixed point dev {fixed:.1e} (<1e-8)"),
    )
}

fn criterion_7() -> Check {
    let sh = LatticeShape::new(2, 1, 2).map_err(|e| e.to_string())?;
    let z_grid = [0.0, 0.5, 1.0];
    let runs = 40u64;
    let mut worst_fraction = 1.0f64;
    let mut summary = Vec::new();
    for beta in [0.3, 0.7] {
        let exact_theta: Vec<f64> = z_grid
            .iter()
            .map(|&z| mc::exact_partition_n1(&sh, beta, z).map(|e| e.theta))
            .collect::<Result<_, _>>()
            .map_err(|e| e.to_string())?;
        let exact_m2 = mc::exact_partition_n1(&sh, beta, 0.0).map_err(|e| e.to_string())?.second_moment;
        // hits[q] counts runs where quantity q is within 3 SE.
        let mut hits = [0u32; 4];
        for seed in 0..runs {
            let cfg = McConfig::new(sh, 1, beta, 50_000, 1000 + seed);
            let run = mc::mcmc_run(&cfg).map_err(|e| e.to_string())?;
            for (q, (est, exact)) in mc::estimate_mgf(&run, &z_grid).iter().zip(&exact_theta).enumerate() {
                hits[q] += ((est.mean - exact).abs() <= 3.0 * est.std_error) as u32;
            }
            let m2 = run.estimate(|t| run.block_spin(t).powi(2));
            hits[3] += ((m2.mean - exact_m2).abs() <= 3.0 * m2.std_error) as u32;
        }
        for (q, name) in ["theta(0)", "theta(0.5)", "theta(1)", "<X^2>"].iter().enumerate() {
            let frac = hits[q] as f64 / runs as f64;
            worst_fraction = worst_fraction.min(frac);
            summary.push(format!("b={beta} {name} {}/{runs}", hits[q]));
        }
    }
    ensure(worst_fraction >= 0.95, format!("{} (need >= 95% each)", summary.join(", ")))
}

fn criterion_8() -> Check {
    let sh = LatticeShape::new(2, 3, 2).map_err(|e| e.to_string())?;
    let inf_model = SpectralModel::infinite_k(2.0, 3.0).map_err(|e| e.to_string())?;
    let beta = 0.5 * spherical::beta_c(&inf_model).map_err(|e| e.to_string())?;
    let mu_lattice = spherical::solve_mu(beta, &SpectralModel::finite(sh)).map_err(|e| e.to_string())?.mu;
    let mu_inf = spherical::solve_mu(beta, &inf_model).map_err(|e| e.to_string())?.mu;
    let mut cfg = McConfig::new(sh, 16, beta, 200_000, 8);
    cfg.chains = 4;
    let run = mc::mcmc_run(&cfg).map_err(|e| e.to_string())?;
    let z_grid = [0.25, 0.5, 1.0];
    let est = mc::estimate_mgf(&run, &z_grid);
    let mut ok = true;
    let mut parts = Vec::new();
    for (&z, e) in z_grid.iter().zip(&est) {
        // β sits in the weight, so the spherical prediction is exp(−z²/(2βμ)).
        let pred = (-z * z / (2.0 * beta * mu_lattice)).exp();
        let pred_inf = (-z * z / (2.0 * beta * mu_inf)).exp();
        let rel = (e.mean - pred).abs() / pred;
        let rel_se = e.std_error / e.mean;
        let rel_inf = (e.mean - pred_inf).abs() / pred_inf;
        ok &= rel < 0.10 && rel_se < 0.03;
        parts.push(format!("z={z}: rel dev {rel:.3} (SE {rel_se:.3}; vs infinite-K {rel_inf:.3})"));
    }
    ensure(ok, format!("n=64, N=16, beta={beta}, finite-lattice mu={mu_lattice:.5}: {} (need dev < 0.10, SE < 0.03)", parts.join("; ")))
}

fn criterion_9() -> Check {
    let sh = LatticeShape::new(2, 1, 2).map_err(|e| e.to_string())?;
    let plane = ReflectionPlane { axis: 0 };
    let observables: [fn(&[f64]) -> f64; 3] = [|x| x[0], |x| x[0] * x[1], |x| x[0] + 2.0 * x[1]];
    let mut min = f64::INFINITY;
    for beta in [0.1, 1.0] {
        for level in 1..=2 {
            for f in observables {
                let v = hierarchy::reflection_expectation(&sh, beta, level, plane, f).map_err(|e| e.to_string())?;
                min = min.min(v);
            }
        }
    }
    ensure(min >= 0.0, format!("min <F pi(F)> = {min:.4e} (>= 0)"))
}

fn criterion_10() -> Check {
    let sh = LatticeShape::new(2, 2, 2).map_err(|e| e.to_string())?;
    let mut cfg = McConfig::new(sh, 3, 0.8, 5_000, 77);
    cfg.chains = 3;
    let a = mc::mcmc_run(&cfg).map_err(|e| e.to_string())?;
    let b = mc::mcmc_run(&cfg).map_err(|e| e.to_string())?;
    let lib_same = a == b;

    let disorder = spectral::DisorderModel::new(
        SpectralModel::infinite_k(2.0, 3.0).map_err(|e| e.to_string())?,
        spectral::DisorderLaw::Normal { sigma: 0.3 },
    )
    .map_err(|e| e.to_string())?;
    let d1 = disorder.expectation(|lam| lam.sqrt(), 500, 5).map_err(|e| e.to_string())?;
    let d2 = disorder.expectation(|lam| lam.sqrt(), 500, 5).map_err(|e| e.to_string())?;
    let disorder_same = d1 == d2;

    let cli = |threads: &str| -> Result<Vec<u8>, String> {
        let out = Command::new(env!("CARGO_BIN_EXE_hierspin"))
            .args([
                "mc", "--L", "2", "--d", "2", "--K", "2", "--N", "3", "--beta", "0.8", "--moves", "5000",
                "--chains", "3", "--seed", "77", "--threads", threads,
            ])
            .output()
            .map_err(|e| e.to_string())?;
        if !out.status.success() {
            return Err(String::from_utf8_lossy(&out.stderr).into_owned());
        }
        Ok([out.stdout, out.stderr].concat())
    };
    let (c1, c2, c3) = (cli("1")?, cli("1")?, cli("4")?);
    let cli_same = c1 == c2 && c1 == c3;
    ensure(
        lib_same && disorder_same && cli_same,
        format!("mcmc_run rerun identical: {lib_same}, disorder rerun identical: {disorder_same}, CLI bytes identical across reruns and thread counts: {cli_same}"),
    )
}

fn main() -> ExitCode {
    let criteria: [(fn() -> Check, Duration); 10] = [
        (criterion_1, Duration::from_secs(10)),
        (criterion_2, Duration::from_secs(1)),
        (criterion_3, Duration::from_secs(1)),
        (criterion_4, Duration::from_secs(5)),
        (criterion_5, Duration::from_secs(10)),
        (criterion_6, Duration::from_secs(10)),
        (criterion_7, Duration::from_secs(120)),
        (criterion_8, Duration::from_secs(600)),
        (criterion_9, Duration::from_secs(1)),
        (criterion_10, Duration::from_secs(600)),
    ];
    let mut failed = 0;
    for (i, (check, budget)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = check();
        let elapsed = start.elapsed();
        let in_time = elapsed <= *budget;
        let (ok, detail) = match result {
            Ok(d) => (in_time, d),
            Err(d) => (false, d),
        };
        failed += !ok as usize;
        println!(
            "criterion {:>2}: {} | {detail} | {:.2} s (budget {} s)",
            i + 1,
            if ok { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            budget.as_secs()
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}

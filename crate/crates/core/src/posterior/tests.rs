use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn small(family: PosteriorFamily, goal_dim: usize) -> PosteriorConfig {
    PosteriorConfig {
        hidden: vec![8],
        activation: Activation::Tanh,
        ..PosteriorConfig::new(family, goal_dim)
    }
}

fn pairs_for(family: PosteriorFamily, obs_dim: usize, goal_dim: usize, n: usize, seed: u64) -> Vec<(LatentGoal, Vec<f64>)> {
    let mut r = rng(seed);
    let prior = family.prior(goal_dim).unwrap();
    (0..n)
        .map(|_| {
            let s: Vec<f64> = (0..obs_dim).map(|_| r.gen_range(-1.0..1.0)).collect();
            (prior.sample(&mut r), s)
        })
        .collect()
}

#[test]
fn fixed_identity_matches_closed_form() {
    let p = Posterior::new(PosteriorConfig::new(PosteriorFamily::FixedIdentityGaussian, 2), 2, &mut rng(0)).unwrap();
    let s = [0.3, -0.2];
    let z = LatentGoal::Continuous(vec![0.5, 0.1]);
    let expected = -(2.0 * std::f64::consts::PI).ln() - 0.5 * (0.2f64.powi(2) + 0.3f64.powi(2));
    assert!((p.log_prob(&z, &s).unwrap() - expected).abs() < 1e-12);
    let prior = p.prior().unwrap();
    let r = intrinsic_reward(&p, &prior, &z, &s).unwrap();
    assert!((r - (expected + 2.0 * 2f64.ln())).abs() < 1e-12);
}

#[test]
fn graph_and_direct_densities_agree() {
    for family in [
        PosteriorFamily::FixedIdentityGaussian,
        PosteriorFamily::AdaptiveVarianceGaussian,
        PosteriorFamily::LinearGaussian,
        PosteriorFamily::MlpGaussian,
        PosteriorFamily::Categorical,
        PosteriorFamily::Gmm,
    ] {
        let cfg = PosteriorConfig {
            gmm_components: 3,
            ..small(family, 3)
        };
        let p = Posterior::new(cfg, 3, &mut rng(1)).unwrap();
        let pairs = pairs_for(family, 3, 3, 5, 2);
        let direct: f64 = pairs.iter().map(|(z, s)| p.log_prob(z, s).unwrap()).sum::<f64>() / 5.0;
        assert!((p.nll(&pairs).unwrap() + direct).abs() < 1e-10, "{family:?}");
    }
}

#[test]
fn gradients_match_finite_differences() {
    for family in [
        PosteriorFamily::AdaptiveVarianceGaussian,
        PosteriorFamily::LinearGaussian,
        PosteriorFamily::MlpGaussian,
        PosteriorFamily::Categorical,
        PosteriorFamily::Gmm,
    ] {
        let cfg = PosteriorConfig {
            gmm_components: 2,
            // keep log-sigma heads away from the clip boundary
            log_sigma_clip: [-20.0, 20.0],
            ..small(family, 2)
        };
        let p = Posterior::new(cfg, 2, &mut rng(3)).unwrap();
        let pairs = pairs_for(family, 2, 2, 4, 4);
        let analytic = p.nll_gradients(&pairs).unwrap();
        let h = 1e-6;
        for (pi, g) in analytic.iter().enumerate() {
            for j in 0..g.len() {
                let mut plus = p.clone();
                plus.params_mut()[pi].value.data_mut()[j] += h;
                let mut minus = p.clone();
                minus.params_mut()[pi].value.data_mut()[j] -= h;
                let fd = (plus.nll(&pairs).unwrap() - minus.nll(&pairs).unwrap()) / (2.0 * h);
                assert!((fd - g[j]).abs() < 1e-5 * (1.0 + fd.abs()), "{family:?} param {pi}[{j}]: {fd} vs {}", g[j]);
            }
        }
    }
}

#[test]
fn squashed_density_integrates_to_one() {
    let cfg = PosteriorConfig {
        squash: Some(true),
        ..small(PosteriorFamily::MlpGaussian, 1)
    };
    let p = Posterior::new(cfg, 1, &mut rng(5)).unwrap();
    let s = [0.4];
    let n = 200_000;
    let h = 2.0 / n as f64;
    let total: f64 = (0..n)
        .map(|i| {
            let z = -1.0 + (i as f64 + 0.5) * h;
            p.log_prob(&LatentGoal::Continuous(vec![z]), &s).unwrap().exp() * h
        })
        .sum();
    assert!((total - 1.0).abs() < 1e-3, "{total}");
}

#[test]
fn adaptive_sigma_tracks_residual_scale() {
    let cfg = PosteriorConfig {
        learning_rate: 0.05,
        ..PosteriorConfig::new(PosteriorFamily::AdaptiveVarianceGaussian, 2)
    };
    let mut p = Posterior::new(cfg, 2, &mut rng(6)).unwrap();
    let mut r = rng(7);
    let pairs: Vec<_> = (0..512)
        .map(|_| {
            let z: Vec<f64> = (0..2).map(|_| r.gen_range(-1.0..1.0)).collect();
            // residual scale 0.5 in dim 0, 2.0 in dim 1
            let s = vec![z[0] + 0.5 * gauss(&mut r), z[1] + 2.0 * gauss(&mut r)];
            (LatentGoal::Continuous(z), s)
        })
        .collect();
    for _ in 0..600 {
        p.fit_discriminator_step(&pairs).unwrap();
    }
    let sigma = p.sigma().unwrap();
    assert!((sigma[0] - 0.5).abs() < 0.08, "{sigma:?}");
    assert!((sigma[1] - 2.0).abs() < 0.25, "{sigma:?}");
}

fn gauss(r: &mut ChaCha8Rng) -> f64 {
    rand_distr::Distribution::sample(&rand_distr::StandardNormal, r)
}

#[test]
fn log_sigma_is_clipped() {
    let cfg = PosteriorConfig {
        learning_rate: 1.0,
        ..PosteriorConfig::new(PosteriorFamily::AdaptiveVarianceGaussian, 1)
    };
    let mut p = Posterior::new(cfg, 1, &mut rng(8)).unwrap();
    let pairs = vec![(LatentGoal::Continuous(vec![0.0]), vec![0.0]); 4];
    for _ in 0..50 {
        p.fit_discriminator_step(&pairs).unwrap();
    }
    assert!((p.sigma().unwrap()[0] - 0.3).abs() < 1e-12);
}

#[test]
fn fixed_family_reports_loss_without_learning() {
    let mut p = Posterior::new(PosteriorConfig::new(PosteriorFamily::FixedIdentityGaussian, 1), 1, &mut rng(9)).unwrap();
    let pairs = vec![(LatentGoal::Continuous(vec![0.0]), vec![1.0])];
    let before = p.clone();
    let loss = p.fit_discriminator_step(&pairs).unwrap();
    assert!((loss - (HALF_LN_2PI + 0.5)).abs() < 1e-12);
    assert_eq!(p, before);
    assert!(p.fit_discriminator_step(&[]).is_err());
}

#[test]
fn categorical_learns_separable_skills() {
    let cfg = PosteriorConfig {
        learning_rate: 1e-2,
        hidden: vec![16],
        ..PosteriorConfig::new(PosteriorFamily::Categorical, 4)
    };
    let mut p = Posterior::new(cfg, 2, &mut rng(10)).unwrap();
    let centers = [[0.8, 0.8], [-0.8, 0.8], [-0.8, -0.8], [0.8, -0.8]];
    let pairs: Vec<_> = (0..4)
        .flat_map(|k| (0..8).map(move |j| (k, j)))
        .map(|(k, j)| {
            let jitter = 0.05 * (j as f64 - 3.5) / 3.5;
            (LatentGoal::Discrete(k), vec![centers[k][0] + jitter, centers[k][1] - jitter])
        })
        .collect();
    for _ in 0..400 {
        p.fit_discriminator_step(&pairs).unwrap();
    }
    for (k, c) in centers.iter().enumerate() {
        assert_eq!(p.mode(c).unwrap(), LatentGoal::Discrete(k));
    }
}

#[test]
fn spectral_norm_only_for_networks() {
    let mut cfg = PosteriorConfig::new(PosteriorFamily::LinearGaussian, 2);
    cfg.spectral_norm = Some(1.0);
    assert!(Posterior::new(cfg, 2, &mut rng(0)).is_err());
    let cfg = PosteriorConfig {
        spectral_norm: Some(0.5),
        ..small(PosteriorFamily::Categorical, 3)
    };
    let p = Posterior::new(cfg, 2, &mut rng(0)).unwrap();
    for s in p.describe().spectral_sigmas.unwrap() {
        assert!(s > 0.0);
    }
}

#[test]
fn identity_families_need_matching_input() {
    let cfg = PosteriorConfig::new(PosteriorFamily::FixedIdentityGaussian, 2);
    assert!(Posterior::new(cfg.clone(), 4, &mut rng(0)).is_err());
    let sliced = PosteriorConfig {
        state_slice: Some(vec![0, 1]),
        ..cfg
    };
    let p = Posterior::new(sliced, 4, &mut rng(0)).unwrap();
    let z = LatentGoal::Continuous(vec![0.1, 0.2]);
    let a = p.log_prob(&z, &[0.1, 0.2, 9.0, 9.0]).unwrap();
    let b = p.log_prob(&z, &[0.1, 0.2, -3.0, 1.0]).unwrap();
    assert_eq!(a, b);
}

#[test]
fn wrong_goal_kind_is_rejected() {
    let p = Posterior::new(small(PosteriorFamily::Categorical, 3), 2, &mut rng(0)).unwrap();
    assert!(p.log_prob(&LatentGoal::Continuous(vec![0.0; 3]), &[0.0, 0.0]).is_err());
    assert!(matches!(
        p.log_prob(&LatentGoal::Discrete(3), &[0.0, 0.0]),
        Err(Error::OutOfSupport { .. })
    ));
    assert!(p.log_prob(&LatentGoal::Discrete(0), &[0.0]).is_err());
}

#[test]
fn config_parses_with_defaults() {
    let cfg: PosteriorConfig = toml::from_str("family = \"gmm\"\ngoal_dim = 3").unwrap();
    assert_eq!(cfg.gmm_components, 8);
    assert!(cfg.squash());
    assert!(toml::from_str::<PosteriorConfig>("family = \"gmm\"\nbogus = 1").is_err());
}
